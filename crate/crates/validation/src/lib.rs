//! Test-only package: acceptance criteria and reference-signal examples.
