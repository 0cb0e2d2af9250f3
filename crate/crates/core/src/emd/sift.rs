//! Extrema detection, mirrored boundaries and the (multivariate) sifting step.

use super::spline::NaturalSpline;
use super::EmdError;

/// Mirror depth: number of extrema reflected at each end.
pub const NBSYM: usize = 2;

/// Indices of local minima and maxima. The middle sample of a flat run
/// counts once; the first and last samples are never extrema.
pub fn local_extrema(x: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let n = x.len();
    let (mut mins, mut maxs) = (Vec::new(), Vec::new());
    if n < 3 {
        return (mins, maxs);
    }
    let mut i = 1;
    while i < n - 1 {
        if x[i] == x[i - 1] {
            i += 1;
            continue;
        }
        // Extend across a plateau starting at i.
        let mut j = i;
        while j + 1 < n && x[j + 1] == x[i] {
            j += 1;
        }
        if j + 1 >= n {
            break;
        }
        let rising_in = x[i] > x[i - 1];
        let rising_out = x[j + 1] > x[j];
        let mid = (i + j) / 2;
        if rising_in && !rising_out {
            maxs.push(mid);
        } else if !rising_in && rising_out {
            mins.push(mid);
        }
        i = j + 1;
    }
    (mins, maxs)
}

pub fn count_extrema(x: &[f64]) -> usize {
    let (a, b) = local_extrema(x);
    a.len() + b.len()
}

/// Sign changes, ignoring exact zeros between samples of opposite sign.
pub fn count_zero_crossings(x: &[f64]) -> usize {
    let mut prev: Option<bool> = None;
    let mut count = 0;
    for &v in x {
        if v == 0.0 {
            continue;
        }
        let pos = v > 0.0;
        if prev.is_some_and(|p| p != pos) {
            count += 1;
        }
        prev = Some(pos);
    }
    count
}

/// `|#extrema - #zero-crossings| <= 1`.
pub fn satisfies_mode_condition(x: &[f64]) -> bool {
    count_extrema(x).abs_diff(count_zero_crossings(x)) <= 1
}

/// Knot positions (in samples, possibly outside `[0, n-1]`) and the sample
/// index each knot takes its value from.
pub(crate) struct Knots {
    pub pos: Vec<f64>,
    pub src: Vec<usize>,
}

fn rev(v: &[usize]) -> Vec<usize> {
    v.iter().rev().copied().collect()
}

/// Reflects `NBSYM` extrema about each end of the record. Returns the
/// augmented (minima, maxima) knot sets, or `None` when there are too few
/// extrema to mirror.
pub(crate) fn mirror_extrema(x: &[f64], mins: &[usize], maxs: &[usize]) -> Option<(Knots, Knots)> {
    let n = x.len();
    if mins.is_empty() || maxs.is_empty() || mins.len() + maxs.len() < 3 {
        return None;
    }
    let last = n - 1;
    let nb = NBSYM;
    let head = |v: &[usize], from: usize, count: usize| -> Vec<usize> {
        rev(&v[from.min(v.len())..(from + count).min(v.len())])
    };
    let tail = |v: &[usize], skip_end: usize, count: usize| -> Vec<usize> {
        let end = v.len().saturating_sub(skip_end);
        rev(&v[end.saturating_sub(count)..end])
    };

    let (mut lmax, mut lmin, mut lsym);
    if maxs[0] < mins[0] {
        if x[0] > x[mins[0]] {
            lmax = head(maxs, 1, nb);
            lmin = head(mins, 0, nb);
            lsym = maxs[0];
        } else {
            lmax = head(maxs, 0, nb);
            lmin = head(mins, 0, nb - 1);
            lmin.push(0);
            lsym = 0;
        }
    } else if x[0] < x[maxs[0]] {
        lmax = head(maxs, 0, nb);
        lmin = head(mins, 1, nb);
        lsym = mins[0];
    } else {
        lmax = head(maxs, 0, nb - 1);
        lmax.push(0);
        lmin = head(mins, 0, nb);
        lsym = 0;
    }

    let (mut rmax, mut rmin, mut rsym);
    if maxs[maxs.len() - 1] < mins[mins.len() - 1] {
        if x[last] < x[maxs[maxs.len() - 1]] {
            rmax = tail(maxs, 0, nb);
            rmin = tail(mins, 1, nb);
            rsym = mins[mins.len() - 1];
        } else {
            rmax = vec![last];
            rmax.extend(tail(maxs, 0, nb - 1));
            rmin = tail(mins, 0, nb);
            rsym = last;
        }
    } else if x[last] > x[mins[mins.len() - 1]] {
        rmax = tail(maxs, 1, nb);
        rmin = tail(mins, 0, nb);
        rsym = maxs[maxs.len() - 1];
    } else {
        rmax = tail(maxs, 0, nb);
        rmin = vec![last];
        rmin.extend(tail(mins, 0, nb - 1));
        rsym = last;
    }

    let reflect = |sym: usize, idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| 2.0 * sym as f64 - i as f64).collect() };
    let mut tlmin = reflect(lsym, &lmin);
    let mut tlmax = reflect(lsym, &lmax);
    // The mirrored part must reach past the first sample.
    let reaches_left = |a: &[f64], b: &[f64]| a.first().is_some_and(|&t| t <= 0.0) && b.first().is_some_and(|&t| t <= 0.0);
    if !reaches_left(&tlmin, &tlmax) {
        if lsym == maxs[0] {
            lmax = head(maxs, 0, nb);
        } else {
            lmin = head(mins, 0, nb);
        }
        if lsym == 0 {
            return None;
        }
        lsym = 0;
        tlmin = reflect(lsym, &lmin);
        tlmax = reflect(lsym, &lmax);
    }

    let mut trmin = reflect(rsym, &rmin);
    let mut trmax = reflect(rsym, &rmax);
    let reaches_right =
        |a: &[f64], b: &[f64]| a.last().is_some_and(|&t| t >= last as f64) && b.last().is_some_and(|&t| t >= last as f64);
    if !reaches_right(&trmin, &trmax) {
        if rsym == maxs[maxs.len() - 1] {
            rmax = tail(maxs, 0, nb);
        } else {
            rmin = tail(mins, 0, nb);
        }
        if rsym == last {
            return None;
        }
        rsym = last;
        trmin = reflect(rsym, &rmin);
        trmax = reflect(rsym, &rmax);
    }
    if tlmin.is_empty() || tlmax.is_empty() || trmin.is_empty() || trmax.is_empty() {
        return None;
    }

    let assemble = |tl: Vec<f64>, l: Vec<usize>, mid: &[usize], tr: Vec<f64>, r: Vec<usize>| -> Option<Knots> {
        let mut pos = tl;
        let mut src = l;
        pos.extend(mid.iter().map(|&i| i as f64));
        src.extend_from_slice(mid);
        pos.extend(tr);
        src.extend(r);
        // Knots must be strictly increasing for the spline.
        let mut k = Knots {
            pos: Vec::with_capacity(pos.len()),
            src: Vec::with_capacity(pos.len()),
        };
        for (p, s) in pos.into_iter().zip(src) {
            if k.pos.last().is_none_or(|&q| p > q) {
                k.pos.push(p);
                k.src.push(s);
            }
        }
        (k.pos.len() >= 2).then_some(k)
    };
    let kmin = assemble(tlmin, lmin, mins, trmin, rmin)?;
    let kmax = assemble(tlmax, lmax, maxs, trmax, rmax)?;
    Some((kmin, kmax))
}

/// Envelope through the values of `channel` at the given knots.
pub(crate) fn envelope(channel: &[f64], knots: &Knots) -> Vec<f64> {
    let y: Vec<f64> = knots.src.iter().map(|&i| channel[i]).collect();
    NaturalSpline::new(&knots.pos, &y).sample(channel.len())
}

/// Mean of the direction-wise upper envelopes of a multichannel signal.
///
/// For each direction the signal is projected, the projection's maxima are
/// located (with mirrored ends) and every channel is interpolated through
/// those instants. Directions whose projection has too few extrema are
/// skipped; `None` if all are.
pub(crate) fn envelope_mean(channels: &[Vec<f64>], directions: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = channels[0].len();
    let mut mean = vec![vec![0.0; n]; channels.len()];
    let mut used = 0usize;
    let mut proj = vec![0.0; n];
    for dir in directions {
        for (t, p) in proj.iter_mut().enumerate() {
            *p = channels.iter().zip(dir).map(|(c, d)| c[t] * d).sum();
        }
        let (mins, maxs) = local_extrema(&proj);
        let Some((_, kmax)) = mirror_extrema(&proj, &mins, &maxs) else {
            continue;
        };
        used += 1;
        for (acc, ch) in mean.iter_mut().zip(channels) {
            for (a, e) in acc.iter_mut().zip(envelope(ch, &kmax)) {
                *a += e;
            }
        }
    }
    if used == 0 {
        return None;
    }
    let inv = 1.0 / used as f64;
    for acc in &mut mean {
        acc.iter_mut().for_each(|a| *a *= inv);
    }
    Some(mean)
}

/// Sift-stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SiftConfig {
    /// Cauchy-type threshold on the relative change between iterates.
    pub sd_threshold: f64,
    pub max_iterations: usize,
}

impl Default for SiftConfig {
    fn default() -> Self {
        Self {
            sd_threshold: 0.2,
            max_iterations: 10,
        }
    }
}

/// Extracts one multichannel IMF. Returns `(imf, remainder)` with
/// `remainder[c][t] = signal[c][t] - imf[c][t]`.
pub(crate) fn sift_multichannel(
    signal: &[Vec<f64>],
    directions: &[Vec<f64>],
    cfg: &SiftConfig,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), EmdError> {
    let mut h: Vec<Vec<f64>> = signal.to_vec();
    for iter in 0..cfg.max_iterations.max(1) {
        let Some(mean) = envelope_mean(&h, directions) else {
            if iter == 0 {
                return Err(EmdError::TooFewExtrema);
            }
            break;
        };
        let mut num = 0.0;
        let mut den = 0.0;
        for (hc, mc) in h.iter_mut().zip(&mean) {
            for (hv, mv) in hc.iter_mut().zip(mc) {
                den += *hv * *hv;
                num += mv * mv;
                *hv -= mv;
            }
        }
        let sd = if den > 0.0 { num / den } else { 0.0 };
        if sd < cfg.sd_threshold && h.iter().all(|c| satisfies_mode_condition(c)) {
            break;
        }
    }
    let remainder = signal
        .iter()
        .zip(&h)
        .map(|(s, imf)| s.iter().zip(imf).map(|(a, b)| a - b).collect())
        .collect();
    Ok((h, remainder))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extrema_of_simple_shapes() {
        let x = [0.0, 1.0, 0.0, -1.0, 0.0, 2.0, 2.0, 2.0, 1.0];
        let (mins, maxs) = local_extrema(&x);
        assert_eq!(mins, vec![3]);
        assert_eq!(maxs, vec![1, 6]);
        assert_eq!(count_extrema(&[0.0, 1.0, 2.0, 3.0]), 0);
        assert_eq!(count_zero_crossings(&[1.0, 0.0, -1.0, -2.0, 3.0]), 2);
    }

    #[test]
    fn mirrored_knots_cover_the_record() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin()).collect();
        let (mins, maxs) = local_extrema(&x);
        let (kmin, kmax) = mirror_extrema(&x, &mins, &maxs).unwrap();
        for k in [&kmin, &kmax] {
            assert!(k.pos[0] <= 0.0);
            assert!(*k.pos.last().unwrap() >= 99.0);
            assert!(k.pos.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn too_few_extrema() {
        let x = [0.0, 1.0, 0.5, 0.7, 0.9];
        let (mins, maxs) = local_extrema(&x);
        assert!(mirror_extrema(&x, &mins, &maxs).is_none());
        let ramp: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let (mins, maxs) = local_extrema(&ramp);
        assert!(mirror_extrema(&ramp, &mins, &maxs).is_none());
    }
}
