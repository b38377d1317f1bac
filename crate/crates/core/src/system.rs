use thiserror::Error;

use crate::expr::{parse_expression, Bindings, EvalError, Expr, ParseError, TIME_NAME};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("system must have at least one variable")]
    Empty,
    #[error("expected {expected} equations, got {found}")]
    EquationCount { expected: usize, found: usize },
    #[error("duplicate identifier `{0}`")]
    DuplicateName(String),
    #[error("invalid identifier `{0}`")]
    InvalidName(String),
    #[error("parameter `{name}` has non-finite value")]
    NonFiniteParameter { name: String },
    #[error("equation {component} (d{name}/dt): {source}")]
    Parse {
        component: usize,
        name: String,
        #[source]
        source: ParseError,
    },
}

/// Failure evaluating f(t, x), tagged with where it happened.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("right-hand side component {component} at t = {t}: {source}")]
pub struct DomainError {
    pub component: usize,
    pub t: f64,
    #[source]
    pub source: EvalError,
}

/// A first-order system dx/dt = f(t, x) with named states and parameters.
///
/// Immutable after construction, so one system can be shared across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSystem {
    variable_names: Vec<String>,
    parameter_names: Vec<String>,
    parameter_values: Vec<f64>,
    equations: Vec<String>,
    rhs: Vec<Expr>,
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl OdeSystem {
    /// Builds a system from source text.
    ///
    /// `parameters` keeps its order; expressions refer to parameters by
    /// position in this list.
    pub fn new<S: AsRef<str>>(
        variable_names: Vec<String>,
        parameters: Vec<(String, f64)>,
        equations: &[S],
    ) -> Result<Self, SystemError> {
        if variable_names.is_empty() {
            return Err(SystemError::Empty);
        }
        if equations.len() != variable_names.len() {
            return Err(SystemError::EquationCount {
                expected: variable_names.len(),
                found: equations.len(),
            });
        }
        let (parameter_names, parameter_values): (Vec<String>, Vec<f64>) =
            parameters.into_iter().unzip();

        let mut seen = std::collections::HashSet::new();
        for name in variable_names.iter().chain(&parameter_names) {
            if !is_identifier(name) || crate::expr::Function::from_name(name).is_some() {
                return Err(SystemError::InvalidName(name.clone()));
            }
            if !seen.insert(name.as_str()) {
                return Err(SystemError::DuplicateName(name.clone()));
            }
        }
        if parameter_names.iter().any(|p| p == TIME_NAME) {
            return Err(SystemError::InvalidName(TIME_NAME.into()));
        }
        for (name, value) in parameter_names.iter().zip(&parameter_values) {
            if !value.is_finite() {
                return Err(SystemError::NonFiniteParameter { name: name.clone() });
            }
        }

        let rhs = equations
            .iter()
            .enumerate()
            .map(|(component, text)| {
                parse_expression(text.as_ref(), &variable_names, &parameter_names).map_err(
                    |source| SystemError::Parse {
                        component,
                        name: variable_names[component].clone(),
                        source,
                    },
                )
            })
            .collect::<Result<Vec<_>, _>>()?;

        Ok(OdeSystem {
            variable_names,
            parameter_names,
            parameter_values,
            equations: equations.iter().map(|s| s.as_ref().to_string()).collect(),
            rhs,
        })
    }

    /// System dimension n.
    pub fn dim(&self) -> usize {
        self.variable_names.len()
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn parameters(&self) -> impl Iterator<Item = (&str, f64)> {
        self.parameter_names
            .iter()
            .map(String::as_str)
            .zip(self.parameter_values.iter().copied())
    }

    /// Source text of each right-hand side, as given.
    pub fn equations(&self) -> &[String] {
        &self.equations
    }

    pub fn rhs(&self) -> &[Expr] {
        &self.rhs
    }

    /// Writes f(t, x) into `out`.
    pub fn eval_rhs_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), DomainError> {
        assert_eq!(x.len(), self.dim(), "state length mismatch");
        assert_eq!(out.len(), self.dim(), "output length mismatch");
        let env = Bindings {
            t,
            state: x,
            params: &self.parameter_values,
        };
        for (component, (expr, slot)) in self.rhs.iter().zip(out.iter_mut()).enumerate() {
            *slot = expr.eval(&env).map_err(|source| DomainError {
                component,
                t,
                source,
            })?;
        }
        Ok(())
    }

    /// Returns f(t, x).
    pub fn eval_rhs(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, DomainError> {
        let mut out = vec![0.0; self.dim()];
        self.eval_rhs_into(t, x, &mut out)?;
        Ok(out)
    }
}
