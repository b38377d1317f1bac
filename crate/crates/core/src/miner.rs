//! End-to-end constraint mining: integrate, evaluate the library, prune
//! forced-zero columns, and read the constraint space off the reduced Gram
//! matrix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{integrate, IntegrateError, IntegratorOptions, IvpProblem, SolutionGrid};
use crate::library::{build_theta, CandidateTerm, LibraryError, LibrarySpec, ThetaMatrix};
use crate::nullspace::{
    forced_zero_columns, general_solution, gram, gram_rref_tolerance, rref, BasicExpression,
    DenseMatrix, GeneralSolution, LinearTerm, RrefOutcome,
};
use crate::system::{OdeSystem, SystemError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MineError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("the library columns are linearly independent on the trajectory (identity RREF at iteration {iteration}); a different library should be considered")]
    IdentityRref { iteration: usize },
    #[error("every library column was discarded")]
    EmptyLibrary,
    #[error("invalid miner configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("incompatible reports: {0}")]
    IncompatibleReports(String),
}

impl MineError {
    /// True for the outcomes meaning "searched successfully, found nothing".
    pub fn is_no_constraints(&self) -> bool {
        matches!(
            self,
            MineError::IdentityRref { .. } | MineError::EmptyLibrary
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinerConfig {
    /// Upper bound on reduction sweeps.
    pub iterations: usize,
    pub rref_tolerance: Option<f64>,
    pub normalize_columns: bool,
    pub residual_tolerance: f64,
    pub integrator: IntegratorOptions,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            iterations: 5,
            rref_tolerance: None,
            normalize_columns: true,
            residual_tolerance: 1e-6,
            integrator: IntegratorOptions::default(),
        }
    }
}

impl MinerConfig {
    /// The configured RREF threshold, or one sized to the Gram matrix and
    /// the number of grid rows behind it.
    pub fn tolerance_for(&self, g: &DenseMatrix, samples: usize) -> f64 {
        self.rref_tolerance
            .unwrap_or_else(|| gram_rref_tolerance(g, samples))
    }

    fn validate(&self) -> Result<(), MineError> {
        if self.iterations == 0 {
            return Err(MineError::InvalidConfig(
                "iterations must be at least 1".into(),
            ));
        }
        if let Some(tol) = self.rref_tolerance {
            if !(tol >= 0.0 && tol.is_finite()) {
                return Err(MineError::InvalidConfig(
                    "rref tolerance must be non-negative".into(),
                ));
            }
        }
        if self.residual_tolerance.is_nan() || self.residual_tolerance <= 0.0 {
            return Err(MineError::InvalidConfig(
                "residual tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Library after pruning, with the reduction of its own Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub theta: ThetaMatrix,
    /// Original column index of every surviving column, increasing.
    pub surviving: Vec<usize>,
    pub rref: RrefOutcome,
    /// Column scales used for the final Gram matrix.
    pub scales: Vec<f64>,
    /// Sweeps performed before the fixed point or the iteration cap.
    pub sweeps: usize,
}

/// Repeatedly reduces the Gram matrix and discards forced-zero columns.
pub fn reduce_library(theta: &ThetaMatrix, config: &MinerConfig) -> Result<Reduction, MineError> {
    config.validate()?;
    if theta.ncols() == 0 {
        return Err(MineError::EmptyLibrary);
    }
    let mut current = theta.clone();
    let mut surviving: Vec<usize> = (0..theta.ncols()).collect();
    let mut sweeps = 0;
    for iteration in 1..=config.iterations {
        sweeps = iteration;
        let (g, _) = gram(&current.values, config.normalize_columns);
        let outcome = rref(&g, Some(config.tolerance_for(&g, current.nrows())));
        if outcome.is_identity() {
            return Err(MineError::IdentityRref { iteration });
        }
        let zeros = forced_zero_columns(&outcome);
        if zeros.is_empty() {
            break;
        }
        let keep: Vec<usize> = (0..current.ncols())
            .filter(|c| zeros.binary_search(c).is_err())
            .collect();
        if keep.is_empty() {
            return Err(MineError::EmptyLibrary);
        }
        current = current.select_columns(&keep);
        surviving = keep.iter().map(|&c| surviving[c]).collect();
    }
    let (g, scales) = gram(&current.values, config.normalize_columns);
    let outcome = rref(&g, Some(config.tolerance_for(&g, current.nrows())));
    if outcome.is_identity() {
        return Err(MineError::IdentityRref {
            iteration: sweeps + 1,
        });
    }
    Ok(Reduction {
        theta: current,
        surviving,
        rref: outcome,
        scales,
        sweeps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    /// `max_j |Θ[j,:]·v|` over the grid rows.
    pub max_abs: f64,
    /// `max_abs / (‖v‖∞ · max ‖Θ[:,i]‖∞)`, the max taken over the support of v.
    pub relative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualCheck {
    pub max_abs: f64,
    pub relative: f64,
    pub passed: bool,
}

/// Residuals of each coefficient vector on a library matrix.
pub fn residuals(theta: &ThetaMatrix, vectors: &[Vec<f64>]) -> Vec<Residual> {
    let col_inf: Vec<f64> = theta.values.column_iter().map(|c| c.amax()).collect();
    vectors
        .iter()
        .map(|v| {
            let mut max_abs: f64 = 0.0;
            for row in theta.values.row_iter() {
                let s: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
                max_abs = max_abs.max(s.abs());
            }
            let v_inf = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let col_max = v
                .iter()
                .zip(&col_inf)
                .filter(|(x, _)| **x != 0.0)
                .fold(0.0f64, |m, (_, c)| m.max(*c));
            let denom = v_inf * col_max;
            let relative = if denom > 0.0 {
                max_abs / denom
            } else if max_abs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            Residual { max_abs, relative }
        })
        .collect()
}

/// Everything needed to rerun or cross-check a mining run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub variables: Vec<String>,
    pub parameters: BTreeMap<String, f64>,
    pub equations: Vec<String>,
    pub initial: Vec<f64>,
    pub t0: f64,
    pub t_end: f64,
    pub intervals: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub library: LibrarySpec,
    pub config: MinerConfig,
}

impl Provenance {
    pub fn new(problem: &IvpProblem, library: &LibrarySpec, config: &MinerConfig) -> Self {
        Provenance {
            model: None,
            variables: problem.system.variable_names().to_vec(),
            parameters: problem
                .system
                .parameters()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            equations: problem.system.equations().to_vec(),
            initial: problem.x0.clone(),
            t0: problem.t0,
            t_end: problem.t_end,
            intervals: problem.intervals,
            seed: None,
            library: library.clone(),
            config: *config,
        }
    }

    pub fn system(&self) -> Result<OdeSystem, MineError> {
        Ok(OdeSystem::new(
            self.variables.clone(),
            self.parameters
                .iter()
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            &self.equations,
        )?)
    }

    /// The mining problem, optionally on a grid refined by `refine`.
    pub fn problem(&self, refine: usize) -> Result<IvpProblem, MineError> {
        Ok(IvpProblem::new(
            self.system()?,
            self.t0,
            self.initial.clone(),
            self.t_end,
            self.intervals * refine.max(1),
        )?)
    }
}

/// Discovered constraint space.
///
/// `general` and `basis_vectors` use original 0-based library column
/// indices; coefficients are in the units of the unscaled library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub terms: Vec<CandidateTerm>,
    pub surviving: Vec<usize>,
    pub general: GeneralSolution,
    pub basis_vectors: Vec<Vec<f64>>,
    pub residuals: Vec<Residual>,
    pub rref_tolerance: f64,
    pub sweeps: usize,
    pub provenance: Provenance,
    /// Seconds since the Unix epoch; excluded from determinism comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_unix: Option<u64>,
}

impl ConstraintReport {
    pub fn variables(&self) -> &[String] {
        &self.provenance.variables
    }

    /// Position of an original column among the surviving ones.
    pub fn local_index(&self, original: usize) -> Option<usize> {
        self.surviving.binary_search(&original).ok()
    }

    pub fn passes(&self) -> bool {
        self.residuals
            .iter()
            .all(|r| r.relative <= self.provenance.config.residual_tolerance)
    }
}

/// Constraint space of a library matrix, without provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MinedConstraints {
    pub reduction: Reduction,
    /// Original column indices, unscaled coefficients.
    pub general: GeneralSolution,
    /// Full-length (all library columns) vectors, one per free coefficient.
    pub basis_vectors: Vec<Vec<f64>>,
    pub residuals: Vec<Residual>,
}

/// Steps 3 and 4 on an already evaluated library.
pub fn mine_theta(
    theta: &ThetaMatrix,
    config: &MinerConfig,
) -> Result<MinedConstraints, MineError> {
    let reduction = reduce_library(theta, config)?;
    let local = general_solution(&reduction.rref).map_err(|_| MineError::IdentityRref {
        iteration: reduction.sweeps + 1,
    })?;
    let local = local.unscaled(&reduction.scales);
    let map = |i: usize| reduction.surviving[i];
    let general = GeneralSolution {
        pivot_indices: local.pivot_indices.iter().map(|&i| map(i)).collect(),
        free_indices: local.free_indices.iter().map(|&i| map(i)).collect(),
        expressions: local
            .expressions
            .iter()
            .map(|e| BasicExpression {
                basic: map(e.basic),
                terms: e
                    .terms
                    .iter()
                    .map(|t| LinearTerm {
                        free: map(t.free),
                        coefficient: t.coefficient,
                    })
                    .collect(),
            })
            .collect(),
    };
    let n = theta.ncols();
    let basis_vectors: Vec<Vec<f64>> = local
        .basis_vectors()
        .into_iter()
        .map(|v| {
            let mut full = vec![0.0; n];
            for (i, x) in v.into_iter().enumerate() {
                full[map(i)] = x;
            }
            full
        })
        .collect();
    let residuals = residuals(theta, &basis_vectors);
    Ok(MinedConstraints {
        reduction,
        general,
        basis_vectors,
        residuals,
    })
}

/// Runs the whole pipeline on one initial-value problem.
pub fn find_constraints(
    problem: &IvpProblem,
    spec: &LibrarySpec,
    config: &MinerConfig,
) -> Result<ConstraintReport, MineError> {
    config.validate()?;
    let grid = integrate(problem, &config.integrator)?;
    find_constraints_on_grid(problem, &grid, spec, config)
}

/// Like [`find_constraints`] with the trajectory already computed.
pub fn find_constraints_on_grid(
    problem: &IvpProblem,
    grid: &SolutionGrid,
    spec: &LibrarySpec,
    config: &MinerConfig,
) -> Result<ConstraintReport, MineError> {
    let theta = build_theta(grid, spec)?;
    let mined = mine_theta(&theta, config)?;
    Ok(ConstraintReport {
        terms: theta.terms,
        surviving: mined.reduction.surviving,
        general: mined.general,
        basis_vectors: mined.basis_vectors,
        residuals: mined.residuals,
        rref_tolerance: mined.reduction.rref.tolerance_used,
        sweeps: mined.reduction.sweeps,
        provenance: Provenance::new(problem, spec, config),
        generated_unix: None,
    })
}

/// Evaluates every basis constraint of `report` along `grid`.
pub fn verify_constraints(
    report: &ConstraintReport,
    grid: &SolutionGrid,
    tolerance: f64,
) -> Result<Vec<ResidualCheck>, MineError> {
    let n = report.variables().len();
    if grid.dim() != n {
        return Err(MineError::DimensionMismatch(format!(
            "grid has {} components, report expects {}",
            grid.dim(),
            n
        )));
    }
    let theta = build_theta(grid, &report.provenance.library)?;
    if theta.terms != report.terms {
        return Err(MineError::DimensionMismatch(
            "library terms differ from the report".into(),
        ));
    }
    if report
        .basis_vectors
        .iter()
        .any(|v| v.len() != theta.ncols())
    {
        return Err(MineError::DimensionMismatch(format!(
            "basis vectors must have {} entries",
            theta.ncols()
        )));
    }
    Ok(residuals(&theta, &report.basis_vectors)
        .into_iter()
        .map(|r| ResidualCheck {
            max_abs: r.max_abs,
            relative: r.relative,
            passed: r.relative <= tolerance,
        })
        .collect())
}

/// A basic coefficient whose expression is not the same in every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferingExpression {
    pub basic: usize,
    pub per_run: Vec<BasicExpression>,
}

/// Cross-run comparison of general solutions obtained from different
/// initial data for the same system and library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcComparison {
    pub runs: usize,
    pub runs_with_constraints: usize,
    /// All runs found constraints with the same basic/free split.
    pub shared_structure: bool,
    /// Basic indices whose expressions agree in every run.
    pub agreeing: Vec<usize>,
    pub differing: Vec<DifferingExpression>,
    /// Combinations that stay constant in time for every compared initial
    /// state: available when only constant-term coefficients differ.
    pub invariant_candidates: Vec<Vec<f64>>,
}

impl IcComparison {
    pub fn summary(&self, terms: Option<&[CandidateTerm]>, variables: &[String]) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        if self.runs_with_constraints == 0 {
            let _ = writeln!(
                out,
                "No constraints in {} of the {} runs.",
                if self.runs == 2 { "either" } else { "any" },
                self.runs
            );
            return out;
        }
        if !self.shared_structure {
            let _ = writeln!(
                out,
                "Runs do not share a basic/free structure ({} of {} found constraints).",
                self.runs_with_constraints, self.runs
            );
            return out;
        }
        let label = |i: usize| format!("xi_{}", i + 1);
        let list = |v: &[usize]| v.iter().map(|&i| label(i)).collect::<Vec<_>>().join(", ");
        let _ = writeln!(
            out,
            "Identical across runs: {}",
            if self.agreeing.is_empty() {
                "none".into()
            } else {
                list(&self.agreeing)
            }
        );
        let differing: Vec<usize> = self.differing.iter().map(|d| d.basic).collect();
        let _ = writeln!(
            out,
            "Different across runs: {}",
            if differing.is_empty() {
                "none".into()
            } else {
                list(&differing)
            }
        );
        if let Some(terms) = terms {
            for v in &self.invariant_candidates {
                let _ = writeln!(
                    out,
                    "Candidate invariant: {} = const",
                    format_combination(v, terms, variables)
                );
            }
        }
        out
    }
}

fn expressions_agree(a: &BasicExpression, b: &BasicExpression, tolerance: f64) -> bool {
    let nonzero = |e: &BasicExpression| -> Vec<LinearTerm> {
        e.terms
            .iter()
            .copied()
            .filter(|t| t.coefficient != 0.0)
            .collect()
    };
    let (ta, tb) = (nonzero(a), nonzero(b));
    let coeff = |terms: &[LinearTerm], free: usize| {
        terms
            .iter()
            .find(|t| t.free == free)
            .map_or(0.0, |t| t.coefficient)
    };
    ta.iter().chain(&tb).all(|t| {
        let (x, y) = (coeff(&ta, t.free), coeff(&tb, t.free));
        (x - y).abs() <= tolerance * 1f64.max(x.abs()).max(y.abs())
    })
}

/// Compares general solutions across runs from different initial data.
///
/// Runs that ended with "no constraints" are counted; any other failure
/// makes the comparison meaningless and is rejected.
pub fn compare_across_initial_conditions(
    runs: &[Result<ConstraintReport, MineError>],
    tolerance: f64,
) -> Result<IcComparison, MineError> {
    if runs.is_empty() {
        return Err(MineError::IncompatibleReports("no runs to compare".into()));
    }
    let mut reports = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        match run {
            Ok(r) => reports.push(r),
            Err(e) if e.is_no_constraints() => {}
            Err(e) => {
                return Err(MineError::IncompatibleReports(format!(
                    "run {} failed: {}",
                    i + 1,
                    e
                )))
            }
        }
    }
    if let Some(first) = reports.first() {
        for r in &reports[1..] {
            if r.terms != first.terms || r.provenance.variables != first.provenance.variables {
                return Err(MineError::IncompatibleReports(
                    "reports use different systems or libraries".into(),
                ));
            }
        }
    }

    let mut comparison = IcComparison {
        runs: runs.len(),
        runs_with_constraints: reports.len(),
        shared_structure: false,
        agreeing: Vec::new(),
        differing: Vec::new(),
        invariant_candidates: Vec::new(),
    };
    let Some(first) = reports.first() else {
        return Ok(comparison);
    };
    let shared = reports.len() == runs.len()
        && reports.iter().all(|r| {
            r.general.pivot_indices == first.general.pivot_indices
                && r.general.free_indices == first.general.free_indices
        });
    comparison.shared_structure = shared;
    if !shared {
        return Ok(comparison);
    }
    for (k, expr) in first.general.expressions.iter().enumerate() {
        let all_same = reports
            .iter()
            .all(|r| expressions_agree(expr, &r.general.expressions[k], tolerance));
        if all_same {
            comparison.agreeing.push(expr.basic);
        } else {
            comparison.differing.push(DifferingExpression {
                basic: expr.basic,
                per_run: reports
                    .iter()
                    .map(|r| r.general.expressions[k].clone())
                    .collect(),
            });
        }
    }
    let only_constants_differ = comparison
        .differing
        .iter()
        .all(|d| first.terms[d.basic].is_constant());
    if only_constants_differ {
        comparison.invariant_candidates = first
            .basis_vectors
            .iter()
            .map(|v| {
                v.iter()
                    .enumerate()
                    .map(|(i, x)| {
                        if first.terms[i].is_constant() {
                            0.0
                        } else {
                            *x
                        }
                    })
                    .collect::<Vec<f64>>()
            })
            .filter(|v| v.iter().any(|x| *x != 0.0))
            .collect();
    }
    Ok(comparison)
}

/// Renders `Σ v_i Θ_i` with nonzero coefficients only, e.g.
/// `-2*X1^1*X2^0 + 1*X1^0*X2^1`.
pub fn format_combination(v: &[f64], terms: &[CandidateTerm], variables: &[String]) -> String {
    let parts: Vec<String> = v
        .iter()
        .zip(terms)
        .filter(|(c, _)| **c != 0.0)
        .map(|(c, t)| {
            format!(
                "({})*{}",
                crate::report::format_g(*c),
                crate::library::term_to_string(t, variables)
            )
        })
        .collect();
    if parts.is_empty() {
        "0".into()
    } else {
        parts.join(" + ")
    }
}
