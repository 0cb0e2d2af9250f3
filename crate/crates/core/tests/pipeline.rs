use stvs_core::config::ConfigDocument;
use stvs_core::indices::{assess, oscillation_index, recovery_index, AssessConfig, GeneratorConfig};
use stvs_core::ingest::{self, read_trajectory, write_csv, Channel, CsvSchema, VoltageTrajectory};
use stvs_core::oel::OelParameters;
use stvs_core::synth::{synth_scenario, ScenarioKind, ScenarioParams};
use stvs_core::{emd, Classification, Grid};

/// Config with one OEL pickup per listed generator whose cap sits at `vcap`.
fn oel_config(ids: &[&str], vcap: f64, delay: f64) -> AssessConfig {
    let p = ScenarioParams::default();
    let params = OelParameters { xd_prime: 0.1, p_active: 0.8, k1: p.k1, k2: p.k2 };
    let e = params.residual(vcap, 0.0).sqrt();
    let text: String = ids
        .iter()
        .map(|id| format!("[{id}]\nxd_prime = 0.1\np_active = 0.8\npickup = ({e}, {delay})\n"))
        .collect();
    let gc = GeneratorConfig::from_document(&ConfigDocument::parse(&text).unwrap()).unwrap();
    AssessConfig { generators: gc.generators, search: gc.search, ..AssessConfig::default() }
}

fn with_flat_channel(t: &VoltageTrajectory) -> VoltageTrajectory {
    let mut channels = t.channels().to_vec();
    channels.push(Channel::new("FLAT", vec![1.0; t.len()]));
    VoltageTrajectory::new(channels, t.dt(), t.start_time())
        .unwrap()
        .with_fault_clear_index(t.fault_clear_index())
        .unwrap()
}

#[test]
fn damped_oscillation_with_fast_recovery_is_stable() {
    let s = synth_scenario(ScenarioKind::Mixed, &ScenarioParams::default()).unwrap();
    let traj = with_flat_channel(&s.trajectory);
    let a = assess(&traj, &oel_config(&["G1", "G2", "G3"], 0.85, 10.0)).unwrap();
    assert_eq!(a.oscillation.class, Classification::Stable);
    assert_eq!(a.generators.len(), 3);
    for g in &a.generators {
        assert_ne!(g.class, Classification::Unstable, "{g:?}");
    }
}

#[test]
fn stalled_recovery_predicts_trip_from_three_seconds() {
    let s = synth_scenario(ScenarioKind::StalledRecovery, &ScenarioParams::default()).unwrap();
    let a = assess(&s.trajectory, &oel_config(&["G1"], 0.9, 20.0)).unwrap();
    assert!((a.config.window_s - 3.0).abs() < 1e-12);
    let g = a.generator("G1").unwrap();
    assert!((g.vcaps[0].0 - 0.9).abs() < 1e-6, "{:?}", g.vcaps);
    assert_eq!(g.class, Classification::Unstable);
}

#[test]
fn constant_channels_do_not_change_classification() {
    for kind in [ScenarioKind::Mixed, ScenarioKind::StableOsc, ScenarioKind::GrowingOsc] {
        let s = synth_scenario(kind, &ScenarioParams::default()).unwrap();
        let cfg = AssessConfig::default();
        let base = assess(&s.trajectory, &cfg).unwrap();
        let extra = assess(&with_flat_channel(&s.trajectory), &cfg).unwrap();
        assert_eq!(base.oscillation.class, extra.oscillation.class, "{kind}");
    }
}

#[test]
fn oscillation_index_does_not_increase_with_damping() {
    let cfg = AssessConfig::default();
    let values: Vec<f64> = [0.05, 0.1, 0.2, 0.4, 0.8]
        .iter()
        .map(|&decay| {
            let s = synth_scenario(ScenarioKind::StableOsc, &ScenarioParams { decay, ..Default::default() }).unwrap();
            let w = ingest::extract_post_fault_window(&s.trajectory, cfg.window).unwrap();
            let d = emd::decompose(&w, &cfg.emd).unwrap();
            oscillation_index(&d, cfg.gamma2, Grid::default(), &cfg.embed).unwrap().index
        })
        .collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0]), "{values:?}");
    assert!(values[4] < values[0]);
}

#[test]
fn recovery_index_does_not_increase_with_recovery_rate() {
    let values: Vec<f64> = [0.05, 0.1, 0.5, 1.0, 2.0]
        .iter()
        .map(|&recovery| {
            let s = synth_scenario(ScenarioKind::FastRecovery, &ScenarioParams { recovery, ..Default::default() }).unwrap();
            let w = ingest::extract_post_fault_window(&s.trajectory, 3.0).unwrap();
            let d = emd::decompose(&w, &Default::default()).unwrap();
            recovery_index(&d.residual[0], 1.0, 1.0, 10.0, 1.0, Grid::default(), w.dt()).unwrap()
        })
        .collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0]), "{values:?}");
    assert!(values[4] < values[0]);
}

#[test]
fn csv_round_trip_preserves_assessment() {
    let s = synth_scenario(ScenarioKind::Mixed, &ScenarioParams::default()).unwrap();
    let mut bytes = Vec::new();
    write_csv(&s.trajectory, &mut bytes).unwrap();
    let back = read_trajectory(bytes.as_slice(), &CsvSchema::default()).unwrap();
    let back = ingest::prepare_trajectory(back, Some(s.truth.fault_clear_time), ingest::DEFAULT_LOOKBACK_S).unwrap();
    let cfg = AssessConfig::default();
    let a = assess(&s.trajectory, &cfg).unwrap();
    let b = assess(&back, &cfg).unwrap();
    assert!((a.oscillation.index - b.oscillation.index).abs() < 1e-9);
    assert_eq!(a.oscillation.class, b.oscillation.class);
}

#[test]
fn window_past_the_data_is_rejected() {
    let s = synth_scenario(ScenarioKind::Mixed, &ScenarioParams { duration: 1.0, ..Default::default() }).unwrap();
    let err = assess(&s.trajectory, &AssessConfig::default()).unwrap_err();
    assert!(err.is_validation(), "{err}");
}

#[test]
fn nan_sample_is_reported_with_its_row() {
    let text = "time,V:G1\n0.0,1.0\n0.02,NaN\n0.04,1.0\n";
    let err = read_trajectory(text.as_bytes(), &CsvSchema::default()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("row"), "{msg}");
}
