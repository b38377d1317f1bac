//! Adaptive Dormand–Prince 5(4) integration onto a uniform time grid.
//!
//! Steps are chosen by a PI controller on the embedded error estimate; the
//! states at the requested grid times are read off the 4th-order continuous
//! extension of each accepted step, so the grid never constrains step sizes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::system::{DomainError, OdeSystem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid integrator options: {0}")]
    InvalidOptions(String),
    #[error("step size underflow at t = {t} (h = {h:e}); the trajectory may be stiff or singular")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("exceeded {max_steps} steps at t = {t}")]
    MaxStepsExceeded { t: f64, max_steps: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// An initial-value problem on [t0, t_end] sampled at `intervals + 1`
/// equally spaced times.
#[derive(Debug, Clone, PartialEq)]
pub struct IvpProblem {
    pub system: OdeSystem,
    pub t0: f64,
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub intervals: usize,
}

impl IvpProblem {
    pub fn new(
        system: OdeSystem,
        t0: f64,
        x0: Vec<f64>,
        t_end: f64,
        intervals: usize,
    ) -> Result<Self, IntegrateError> {
        let problem = IvpProblem {
            system,
            t0,
            x0,
            t_end,
            intervals,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |msg: String| Err(IntegrateError::InvalidProblem(msg));
        if !(self.t0.is_finite() && self.t_end.is_finite()) {
            return bad("t0 and T must be finite".into());
        }
        if self.t_end <= self.t0 {
            return bad(format!("T ({}) must exceed t0 ({})", self.t_end, self.t0));
        }
        if self.intervals == 0 {
            return bad("grid must have at least one interval".into());
        }
        if self.x0.len() != self.system.dim() {
            return bad(format!(
                "initial state has {} components, system has {}",
                self.x0.len(),
                self.system.dim()
            ));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return bad("initial state must be finite".into());
        }
        Ok(())
    }

    /// The uniform output times t0, t0 + h, ..., T.
    pub fn grid_times(&self) -> Vec<f64> {
        let m = self.intervals;
        let span = self.t_end - self.t0;
        (0..=m)
            .map(|j| {
                if j == m {
                    self.t_end
                } else {
                    self.t0 + span * (j as f64) / (m as f64)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 10_000_000,
            initial_step: None,
        }
    }
}

impl IntegratorOptions {
    fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |msg: &str| Err(IntegrateError::InvalidOptions(msg.into()));
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return bad("rel_tol must be positive");
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return bad("abs_tol must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0 && h.is_finite()) {
                return bad("initial_step must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// States at the grid times; row j is x(t_j).
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionGrid {
    pub times: Vec<f64>,
    pub states: DMatrix<f64>,
    pub stats: IntegrationStats,
}

impl SolutionGrid {
    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, j: usize) -> Vec<f64> {
        self.states.row(j).iter().copied().collect()
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// 5th-order minus embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const BETA: f64 = 0.04;

struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    cont: [Vec<f64>; 5],
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
            cont: std::array::from_fn(|_| vec![0.0; n]),
        }
    }
}

fn rms_norm(v: &[f64], scale: &[f64]) -> f64 {
    let sum: f64 = v.iter().zip(scale).map(|(a, s)| (a / s).powi(2)).sum();
    (sum / v.len() as f64).sqrt()
}

fn initial_step(
    system: &OdeSystem,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    span: f64,
    opts: &IntegratorOptions,
    stats: &mut IntegrationStats,
) -> Result<f64, IntegrateError> {
    let scale: Vec<f64> = y0
        .iter()
        .map(|y| opts.abs_tol + opts.rel_tol * y.abs())
        .collect();
    let d0 = rms_norm(y0, &scale);
    let d1 = rms_norm(f0, &scale);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let f1 = system.eval_rhs(t0 + h0, &y1)?;
    stats.evaluations += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms_norm(&diff, &scale) / h0;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dmax).powf(1.0 / 5.0)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

/// Integrates `problem` and returns the states at its uniform grid times.
pub fn integrate(
    problem: &IvpProblem,
    options: &IntegratorOptions,
) -> Result<SolutionGrid, IntegrateError> {
    problem.validate()?;
    options.validate()?;

    let system = &problem.system;
    let n = system.dim();
    let times = problem.grid_times();
    let t_end = problem.t_end;
    let span = t_end - problem.t0;

    let mut states = DMatrix::<f64>::zeros(times.len(), n);
    for (i, v) in problem.x0.iter().enumerate() {
        states[(0, i)] = *v;
    }
    let mut next_row = 1;

    let mut stats = IntegrationStats::default();
    let mut ws = Workspace::new(n);
    let mut t = problem.t0;
    let mut y = problem.x0.clone();
    system.eval_rhs_into(t, &y, &mut ws.k[0])?;
    stats.evaluations += 1;

    let mut h = match options.initial_step {
        Some(h) => h.min(span),
        None => initial_step(system, t, &y, &ws.k[0], span, options, &mut stats)?,
    };
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;

    while next_row < times.len() {
        if stats.accepted + stats.rejected >= options.max_steps {
            return Err(IntegrateError::MaxStepsExceeded {
                t,
                max_steps: options.max_steps,
            });
        }
        let mut last = false;
        if t + 1.01 * h >= t_end {
            h = t_end - t;
            last = true;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(f64::MIN_POSITIVE) {
            return Err(IntegrateError::StepSizeUnderflow { t, h });
        }

        let err = attempt_step(system, t, h, &y, &mut ws, options)?;
        stats.evaluations += 6;

        let fac11 = err.powf(0.2 - BETA * 0.75);
        if err <= 1.0 {
            // Accepted.
            let t_new = if last { t_end } else { t + h };
            fill_dense(&mut ws, h, &y);
            while next_row < times.len() && times[next_row] <= t_new {
                let tg = times[next_row];
                if tg == t_new {
                    for i in 0..n {
                        states[(next_row, i)] = ws.y_new[i];
                    }
                } else {
                    let theta = (tg - t) / h;
                    let theta1 = 1.0 - theta;
                    for i in 0..n {
                        let c = &ws.cont;
                        states[(next_row, i)] = c[0][i]
                            + theta
                                * (c[1][i]
                                    + theta1 * (c[2][i] + theta * (c[3][i] + theta1 * c[4][i])));
                    }
                }
                next_row += 1;
            }

            stats.accepted += 1;
            let fac =
                (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / MAX_FACTOR, 1.0 / MIN_FACTOR);
            fac_old = err.max(1e-4);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;

            t = t_new;
            std::mem::swap(&mut y, &mut ws.y_new);
            ws.k.swap(0, 6);
            h = h_new.min(span);
        } else {
            stats.rejected += 1;
            last_rejected = true;
            let shrink = if err.is_finite() {
                (fac11 / SAFETY).min(1.0 / MIN_FACTOR)
            } else {
                1.0 / MIN_FACTOR
            };
            h /= shrink;
        }
    }

    Ok(SolutionGrid {
        times,
        states,
        stats,
    })
}

/// One trial step of size `h` from (t, y). Leaves the proposed state in
/// `ws.y_new`, the stages in `ws.k`, and returns the componentwise error
/// relative to `abs_tol + rel_tol * |y|`, maximised over components.
fn attempt_step(
    system: &OdeSystem,
    t: f64,
    h: f64,
    y: &[f64],
    ws: &mut Workspace,
    opts: &IntegratorOptions,
) -> Result<f64, IntegrateError> {
    let n = y.len();
    let Workspace { k, tmp, y_new, .. } = ws;
    let [k1, k2, k3, k4, k5, k6, k7] = k;

    for i in 0..n {
        tmp[i] = y[i] + h * A21 * k1[i];
    }
    system.eval_rhs_into(t + C2 * h, tmp, k2)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    system.eval_rhs_into(t + C3 * h, tmp, k3)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    system.eval_rhs_into(t + C4 * h, tmp, k4)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    system.eval_rhs_into(t + C5 * h, tmp, k5)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    system.eval_rhs_into(t + h, tmp, k6)?;
    for i in 0..n {
        y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    system.eval_rhs_into(t + h, y_new, k7)?;

    let mut err: f64 = 0.0;
    for i in 0..n {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
        err = err.max(e.abs() / scale);
    }
    if err.is_nan() {
        err = f64::INFINITY;
    }
    Ok(err)
}

fn fill_dense(ws: &mut Workspace, h: f64, y: &[f64]) {
    let Workspace { k, y_new, cont, .. } = ws;
    for i in 0..y.len() {
        let diff = y_new[i] - y[i];
        let bspl = h * k[0][i] - diff;
        cont[0][i] = y[i];
        cont[1][i] = diff;
        cont[2][i] = bspl;
        cont[3][i] = diff - h * k[6][i] - bspl;
        cont[4][i] = h
            * (D1 * k[0][i]
                + D3 * k[2][i]
                + D4 * k[3][i]
                + D5 * k[4][i]
                + D6 * k[5][i]
                + D7 * k[6][i]);
    }
}
