//! Candidate-function libraries and the evaluated library matrix.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::SolutionGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryKind {
    Sin,
    Cos,
    Exp,
    Ln,
}

impl UnaryKind {
    pub fn name(self) -> &'static str {
        match self {
            UnaryKind::Sin => "sin",
            UnaryKind::Cos => "cos",
            UnaryKind::Exp => "exp",
            UnaryKind::Ln => "ln",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(UnaryKind::Sin),
            "cos" => Some(UnaryKind::Cos),
            "exp" => Some(UnaryKind::Exp),
            "ln" => Some(UnaryKind::Ln),
            _ => None,
        }
    }
}

impl fmt::Display for UnaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One library column: a monomial in all state components, or a unary
/// function of a single scaled component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CandidateTerm {
    Monomial {
        exponents: Vec<u32>,
    },
    Unary {
        kind: UnaryKind,
        variable: usize,
        frequency: f64,
    },
}

impl CandidateTerm {
    pub fn monomial(exponents: Vec<u32>) -> Self {
        CandidateTerm::Monomial { exponents }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, CandidateTerm::Monomial { exponents } if exponents.iter().all(|&e| e == 0))
    }

    /// Value of the term at state `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            CandidateTerm::Monomial { exponents } => exponents
                .iter()
                .zip(x)
                .map(|(&e, &v)| v.powi(e as i32))
                .product(),
            CandidateTerm::Unary {
                kind,
                variable,
                frequency,
            } => {
                let arg = frequency * x[*variable];
                match kind {
                    UnaryKind::Sin => arg.sin(),
                    UnaryKind::Cos => arg.cos(),
                    UnaryKind::Exp => arg.exp(),
                    UnaryKind::Ln => arg.ln(),
                }
            }
        }
    }
}

/// A unary function family applied to every state component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnaryFamily {
    pub kind: UnaryKind,
    #[serde(default = "default_frequency")]
    pub frequency: f64,
}

fn default_frequency() -> f64 {
    1.0
}

impl UnaryFamily {
    pub fn new(kind: UnaryKind, frequency: f64) -> Self {
        UnaryFamily { kind, frequency }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LibraryError {
    #[error("library selects no candidate functions")]
    Empty,
    #[error("frequency of {kind} family must be positive and finite, got {frequency}")]
    BadFrequency { kind: UnaryKind, frequency: f64 },
    #[error("term {term} is not finite at grid row {row} (value {value})")]
    Domain {
        term: String,
        row: usize,
        value: f64,
    },
    #[error("solution grid is empty")]
    EmptyGrid,
}

/// Which candidate functions to include.
///
/// `powers` is kept sorted and duplicate-free; duplicate unary families are
/// dropped, keeping the first occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLibrarySpec")]
pub struct LibrarySpec {
    powers: Vec<u32>,
    unary: Vec<UnaryFamily>,
}

#[derive(Deserialize)]
struct RawLibrarySpec {
    #[serde(default)]
    powers: Vec<u32>,
    #[serde(default)]
    unary: Vec<UnaryFamily>,
}

impl TryFrom<RawLibrarySpec> for LibrarySpec {
    type Error = LibraryError;

    fn try_from(raw: RawLibrarySpec) -> Result<Self, Self::Error> {
        LibrarySpec::new(raw.powers, raw.unary)
    }
}

impl LibrarySpec {
    pub fn new(mut powers: Vec<u32>, unary: Vec<UnaryFamily>) -> Result<Self, LibraryError> {
        powers.sort_unstable();
        powers.dedup();
        let mut families: Vec<UnaryFamily> = Vec::with_capacity(unary.len());
        for fam in unary {
            if !(fam.frequency > 0.0 && fam.frequency.is_finite()) {
                return Err(LibraryError::BadFrequency {
                    kind: fam.kind,
                    frequency: fam.frequency,
                });
            }
            if !families.contains(&fam) {
                families.push(fam);
            }
        }
        if powers.is_empty() && families.is_empty() {
            return Err(LibraryError::Empty);
        }
        Ok(LibrarySpec {
            powers,
            unary: families,
        })
    }

    pub fn monomials(powers: Vec<u32>) -> Result<Self, LibraryError> {
        Self::new(powers, Vec::new())
    }

    pub fn powers(&self) -> &[u32] {
        &self.powers
    }

    pub fn unary(&self) -> &[UnaryFamily] {
        &self.unary
    }

    /// Column labels for an `n`-dimensional state, in matrix order.
    pub fn terms(&self, n: usize) -> Vec<CandidateTerm> {
        let mut terms = Vec::new();
        for &k in &self.powers {
            terms.extend(
                generate_monomial_exponents(k, n)
                    .into_iter()
                    .map(CandidateTerm::monomial),
            );
        }
        for fam in &self.unary {
            terms.extend((0..n).map(|variable| CandidateTerm::Unary {
                kind: fam.kind,
                variable,
                frequency: fam.frequency,
            }));
        }
        terms
    }

    /// Short human label such as `[1 x x^2 sin(2x)]`.
    pub fn describe(&self) -> String {
        let mut parts: Vec<String> = self
            .powers
            .iter()
            .map(|&k| match k {
                0 => "1".to_string(),
                1 => "x".to_string(),
                k => format!("x^{}", k),
            })
            .collect();
        for fam in &self.unary {
            if fam.frequency == 1.0 {
                parts.push(format!("{}(x)", fam.kind));
            } else {
                parts.push(format!("{}({}x)", fam.kind, fam.frequency));
            }
        }
        format!("[{}]", parts.join(" "))
    }
}

/// All exponent tuples of length `c` summing to `k`.
///
/// Tuples are enumerated with the leading position ascending (depth-first)
/// and then each tuple is reversed, so for `(k=2, c=2)` the result is
/// `[(2,0), (1,1), (0,2)]`.
pub fn generate_monomial_exponents(k: u32, c: usize) -> Vec<Vec<u32>> {
    fn recurse(current: &mut Vec<u32>, remaining: u32, positions: usize, out: &mut Vec<Vec<u32>>) {
        if positions == 0 {
            if remaining == 0 {
                out.push(current.iter().rev().copied().collect());
            }
            return;
        }
        if positions == 1 {
            current.push(remaining);
            recurse(current, 0, 0, out);
            current.pop();
            return;
        }
        for i in 0..=remaining {
            current.push(i);
            recurse(current, remaining - i, positions - 1, out);
            current.pop();
        }
    }

    let mut out = Vec::new();
    if c == 0 {
        if k == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    recurse(&mut Vec::with_capacity(c), k, c, &mut out);
    out
}

/// Renders a term with the given variable names, e.g. `X1^2*X2^0` or
/// `sin(2*X3)`.
pub fn term_to_string(term: &CandidateTerm, variable_names: &[String]) -> String {
    match term {
        CandidateTerm::Monomial { exponents } => exponents
            .iter()
            .zip(variable_names)
            .map(|(e, name)| format!("{}^{}", name, e))
            .collect::<Vec<_>>()
            .join("*"),
        CandidateTerm::Unary {
            kind,
            variable,
            frequency,
        } => {
            let name = &variable_names[*variable];
            if *frequency == 1.0 {
                format!("{}({})", kind, name)
            } else {
                format!("{}({}*{})", kind, frequency, name)
            }
        }
    }
}

/// Library matrix: column j is `terms[j]` evaluated on every grid row.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMatrix {
    pub values: DMatrix<f64>,
    pub terms: Vec<CandidateTerm>,
}

impl ThetaMatrix {
    pub fn ncols(&self) -> usize {
        self.terms.len()
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    /// Sub-library with the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> ThetaMatrix {
        ThetaMatrix {
            values: self.values.select_columns(columns),
            terms: columns.iter().map(|&c| self.terms[c].clone()).collect(),
        }
    }
}

/// Evaluates the library on every row of `states`.
pub fn build_theta_from_states(
    states: &DMatrix<f64>,
    spec: &LibrarySpec,
) -> Result<ThetaMatrix, LibraryError> {
    let rows = states.nrows();
    if rows == 0 {
        return Err(LibraryError::EmptyGrid);
    }
    let n = states.ncols();
    let terms = spec.terms(n);
    let mut values = DMatrix::<f64>::zeros(rows, terms.len());
    let mut x = vec![0.0; n];
    for r in 0..rows {
        for (i, slot) in x.iter_mut().enumerate() {
            *slot = states[(r, i)];
        }
        for (c, term) in terms.iter().enumerate() {
            let value = term.eval(&x);
            if !value.is_finite() {
                let names: Vec<String> = (1..=n).map(|i| format!("X{}", i)).collect();
                return Err(LibraryError::Domain {
                    term: term_to_string(term, &names),
                    row: r,
                    value,
                });
            }
            values[(r, c)] = value;
        }
    }
    Ok(ThetaMatrix { values, terms })
}

pub fn build_theta(grid: &SolutionGrid, spec: &LibrarySpec) -> Result<ThetaMatrix, LibraryError> {
    build_theta_from_states(&grid.states, spec)
}
