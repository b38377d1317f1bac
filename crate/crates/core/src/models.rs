//! Built-in example systems.

use std::collections::BTreeMap;

use crate::config::{RunConfig, Tolerances};
use crate::integrator::IntegratorOptions;
use crate::library::LibrarySpec;

pub const MODEL_NAMES: &[&str] = &["enzyme", "glycolytic"];

fn x_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("X{}", i)).collect()
}

fn params(list: &[(&str, f64)]) -> BTreeMap<String, f64> {
    list.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Enzyme kinetics: X1 = C1 (complex), X2 = E (enzyme), X3 = S
/// (substrate), X4 = P (product).
pub fn enzyme() -> RunConfig {
    RunConfig {
        name: Some("enzyme".into()),
        variables: x_names(4),
        parameters: params(&[("k1", 0.1), ("km1", 0.2), ("k2", 0.3)]),
        equations: vec![
            "k1*X3*X2 - (km1 + k2)*X1".into(),
            "-k1*X3*X2 + (km1 + k2)*X1".into(),
            "-k1*X3*X2 + km1*X1".into(),
            "k2*X1".into(),
        ],
        initial: Some(vec![1.0, 0.0, 1.0, 1.0]),
        t0: 0.0,
        t_end: 10.0,
        m: 1000,
        p: 5,
        library: LibrarySpec::monomials(vec![0, 1]).expect("non-empty"),
        integrator: IntegratorOptions::default(),
        tolerances: Tolerances::default(),
        initial_ranges: None,
        seed: None,
    }
}

/// Seven-species glycolytic oscillator, X1..X7 = S1..S7.
pub fn glycolytic() -> RunConfig {
    let hill = "k1*X1*X6/(1 + (X6/K1)^q)";
    RunConfig {
        name: Some("glycolytic".into()),
        variables: x_names(7),
        parameters: params(&[
            ("J0", 2.5),
            ("k1", 100.0),
            ("k2", 6.0),
            ("k3", 16.0),
            ("k4", 100.0),
            ("k5", 1.28),
            ("k6", 12.0),
            ("k", 1.8),
            ("kappa", 13.0),
            ("q", 4.0),
            ("K1", 0.52),
            ("psi", 0.1),
            ("N", 1.0),
            ("A", 4.0),
        ]),
        equations: vec![
            format!("J0 - {}", hill),
            format!("2*{} - k2*X2*(N - X5) - k6*X2*X5", hill),
            "k2*X2*(N - X5) - k3*X3*(A - X6)".into(),
            "k3*X3*(A - X6) - k4*X4*X5 - kappa*(X4 - X7)".into(),
            "k2*X2*(N - X5) - k4*X4*X5 - k6*X2*X5".into(),
            format!("-2*{} + 2*k3*X3*(A - X6) - k5*X6", hill),
            "psi*kappa*(X4 - X7) - k*X7".into(),
        ],
        initial: None,
        t0: 0.0,
        t_end: 10.0,
        m: 1000,
        p: 5,
        library: LibrarySpec::monomials(vec![0, 1]).expect("non-empty"),
        integrator: IntegratorOptions::default(),
        tolerances: Tolerances::default(),
        initial_ranges: Some(vec![
            [0.15, 1.60],
            [0.19, 2.16],
            [0.04, 0.20],
            [0.10, 0.35],
            [0.08, 0.30],
            [0.14, 2.67],
            [0.05, 0.10],
        ]),
        seed: Some(0),
    }
}

pub fn builtin(name: &str) -> Option<RunConfig> {
    match name {
        "enzyme" => Some(enzyme()),
        "glycolytic" => Some(glycolytic()),
        _ => None,
    }
}
