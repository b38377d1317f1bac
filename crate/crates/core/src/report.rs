//! Human-readable and JSON renderings of a [`ConstraintReport`].

use std::fmt::Write;

use crate::library::term_to_string;
use crate::miner::{format_combination, ConstraintReport};

pub const NO_CONNECTIONS: &str =
    "There are no connections of this type. Try a different library of candidate functions.";

/// C-style `%g` formatting (six significant digits, trailing zeros
/// removed, scientific notation outside 1e-4 ≤ |x| < 1e6).
pub fn format_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{}", x);
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{}e{}{:02}", mantissa, sign, exp.abs());
    }
    let decimals = (5 - exp) as usize;
    let fixed = strip_zeros(&format!("{:.*}", decimals, x));
    if fixed == "-0" {
        "0".into()
    } else {
        fixed
    }
}

fn strip_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// The classic printout: one line per basic coefficient, then the relation
/// F(X) = 0 over the surviving terms. Indices are 1-based positions among
/// the surviving columns.
pub fn render_text(report: &ConstraintReport) -> String {
    let mut out = String::new();
    let vars = report.variables();
    let local = |original: usize| report.local_index(original).map_or(0, |i| i + 1);

    out.push_str("The xi-coefficients are listed below.\n");
    out.push_str("The xi-coefficients that appear on the right side\n");
    out.push_str("of the equations are free parameters;\n");
    out.push_str("the user can choose their values freely.\n");
    for expr in &report.general.expressions {
        let rhs: Vec<String> = expr
            .terms
            .iter()
            .filter(|t| t.coefficient != 0.0)
            .map(|t| format!("({})*xi_{}", format_g(t.coefficient), local(t.free)))
            .collect();
        let rhs = if rhs.is_empty() {
            "0".to_string()
        } else {
            rhs.join("+")
        };
        let _ = writeln!(out, "xi_{} = {}", local(expr.basic), rhs);
    }

    out.push_str("The relation F(X)=0 is displayed below:\n");
    let relation: Vec<String> = report
        .surviving
        .iter()
        .enumerate()
        .map(|(k, &c)| format!("xi_{}*{}", k + 1, term_to_string(&report.terms[c], vars)))
        .collect();
    let _ = writeln!(out, "{} = 0", relation.join("+"));

    out.push_str("Constraint basis (each free xi set to 1 in turn):\n");
    for (v, r) in report.basis_vectors.iter().zip(&report.residuals) {
        let _ = writeln!(
            out,
            "  {} = 0    [max residual {}, relative {}]",
            format_combination(v, &report.terms, vars),
            format_g(r.max_abs),
            format_g(r.relative)
        );
    }
    out
}
