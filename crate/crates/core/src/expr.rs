//! Right-hand-side expression language.
//!
//! Grammar, lowest to highest precedence:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          // right-associative
//! primary := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Unary minus binds looser than `^`, so `-x^2` is `-(x^2)`. Bare identifiers
//! resolve against the state variables first, then the parameters, then the
//! reserved time variable `t`.

use std::fmt;

use thiserror::Error;

/// Reserved name of the independent variable.
pub const TIME_NAME: &str = "t";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    Sin,
    Cos,
    Exp,
    Ln,
}

impl Function {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Function::Sin),
            "cos" => Some(Function::Cos),
            "exp" => Some(Function::Exp),
            "ln" => Some(Function::Ln),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Function::Sin => "sin",
            Function::Cos => "cos",
            Function::Exp => "exp",
            Function::Ln => "ln",
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    /// Index into the state vector.
    Var(usize),
    /// Index into the parameter list the expression was parsed against.
    Param {
        index: usize,
        name: String,
    },
    Time,
    Neg(Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Call(Function, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` at byte {offset} takes exactly one argument, got {found}")]
    WrongArity {
        name: String,
        offset: usize,
        found: usize,
    },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::WrongArity { offset, .. } => *offset,
        }
    }
}

/// Failure while evaluating an expression.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("ln of non-positive argument {0}")]
    LogDomain(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result")]
    NonFinite,
}

/// Values an expression is evaluated against.
#[derive(Debug, Clone, Copy)]
pub struct Bindings<'a> {
    pub t: f64,
    pub state: &'a [f64],
    pub params: &'a [f64],
}

impl Expr {
    pub fn eval(&self, env: &Bindings<'_>) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Number(v) => *v,
            Expr::Var(i) => env.state[*i],
            Expr::Param { index, .. } => env.params[*index],
            Expr::Time => env.t,
            Expr::Neg(inner) => -inner.eval(env)?,
            Expr::Binary(op, lhs, rhs) => {
                let a = lhs.eval(env)?;
                let b = rhs.eval(env)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                    BinaryOp::Pow => power(a, b),
                }
            }
            Expr::Call(func, arg) => {
                let a = arg.eval(env)?;
                match func {
                    Function::Sin => a.sin(),
                    Function::Cos => a.cos(),
                    Function::Exp => a.exp(),
                    Function::Ln => {
                        if a <= 0.0 {
                            return Err(EvalError::LogDomain(a));
                        }
                        a.ln()
                    }
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Largest state index referenced, if any.
    pub fn max_var_index(&self) -> Option<usize> {
        match self {
            Expr::Var(i) => Some(*i),
            Expr::Number(_) | Expr::Param { .. } | Expr::Time => None,
            Expr::Neg(e) | Expr::Call(_, e) => e.max_var_index(),
            Expr::Binary(_, a, b) => match (a.max_var_index(), b.max_var_index()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    /// Renders the expression with explicit parentheses around every
    /// compound subexpression; the output reparses to the same tree.
    pub fn display<'a>(&'a self, variable_names: &'a [String]) -> ExprDisplay<'a> {
        ExprDisplay {
            expr: self,
            variable_names,
        }
    }
}

fn power(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    variable_names: &'a [String],
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |e| ExprDisplay {
            expr: e,
            variable_names: self.variable_names,
        };
        match self.expr {
            Expr::Number(v) => {
                if *v < 0.0 {
                    write!(f, "(-{})", -v)
                } else {
                    write!(f, "{}", v)
                }
            }
            Expr::Var(i) => match self.variable_names.get(*i) {
                Some(name) => f.write_str(name),
                None => write!(f, "x[{}]", i),
            },
            Expr::Param { name, .. } => f.write_str(name),
            Expr::Time => f.write_str(TIME_NAME),
            Expr::Neg(e) => write!(f, "(-{})", sub(e.as_ref())),
            Expr::Binary(op, a, b) => {
                write!(f, "({}{}{})", sub(a.as_ref()), op.symbol(), sub(b.as_ref()))
            }
            Expr::Call(func, e) => write!(f, "{}({})", func.name(), sub(e.as_ref())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let simple = match c {
            b'+' => Some(Token::Plus),
            b'-' => Some(Token::Minus),
            b'*' => Some(Token::Star),
            b'/' => Some(Token::Slash),
            b'^' => Some(Token::Caret),
            b'(' => Some(Token::LParen),
            b')' => Some(Token::RParen),
            b',' => Some(Token::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            tokens.push((tok, start));
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let literal = &text[start..i];
            let value: f64 = literal.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{}`", literal),
            })?;
            if !value.is_finite() {
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("number `{}` is out of range", literal),
                });
            }
            tokens.push((Token::Number(value), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push((Token::Ident(text[start..i].to_string()), start));
            continue;
        }
        let ch = text[start..].chars().next().unwrap_or('?');
        return Err(ParseError::Syntax {
            offset: start,
            message: format!("unexpected character `{}`", ch),
        });
    }
    tokens.push((Token::End, text.len()));
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    variables: &'a [String],
    parameters: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn advance(&mut self) -> (Token, usize) {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Token::Plus => BinaryOp::Add,
                Token::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Token::Star => BinaryOp::Mul,
                Token::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Token::Minus => {
                self.advance();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Token::Plus => {
                self.advance();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Token::Caret {
            self.advance();
            let exponent = self.unary()?;
            return Ok(Expr::Binary(
                BinaryOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let (tok, offset) = self.advance();
        match tok {
            Token::Number(v) => Ok(Expr::Number(v)),
            Token::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Token::Ident(name) => {
                if *self.peek() == Token::LParen {
                    self.call(name, offset)
                } else {
                    self.resolve(name, offset)
                }
            }
            Token::End => Err(ParseError::Syntax {
                offset,
                message: "unexpected end of input".into(),
            }),
            other => Err(ParseError::Syntax {
                offset,
                message: format!("unexpected token {:?}", other),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Token::RParen {
            self.advance();
            Ok(())
        } else {
            self.syntax("expected `)`")
        }
    }

    fn call(&mut self, name: String, offset: usize) -> Result<Expr, ParseError> {
        let func = Function::from_name(&name).ok_or_else(|| ParseError::UnknownIdentifier {
            name: name.clone(),
            offset,
        })?;
        self.advance(); // '('
        if *self.peek() == Token::RParen {
            return Err(ParseError::WrongArity {
                name,
                offset,
                found: 0,
            });
        }
        let arg = self.expr()?;
        let mut found = 1;
        while *self.peek() == Token::Comma {
            self.advance();
            self.expr()?;
            found += 1;
        }
        if found != 1 {
            return Err(ParseError::WrongArity {
                name,
                offset,
                found,
            });
        }
        self.expect_rparen()?;
        Ok(Expr::Call(func, Box::new(arg)))
    }

    fn resolve(&self, name: String, offset: usize) -> Result<Expr, ParseError> {
        if let Some(i) = self.variables.iter().position(|v| *v == name) {
            return Ok(Expr::Var(i));
        }
        if let Some(index) = self.parameters.iter().position(|p| *p == name) {
            return Ok(Expr::Param { index, name });
        }
        if name == TIME_NAME {
            return Ok(Expr::Time);
        }
        Err(ParseError::UnknownIdentifier { name, offset })
    }
}

/// Parses `text` against the given variable and parameter names.
pub fn parse_expression(
    text: &str,
    variable_names: &[String],
    parameter_names: &[String],
) -> Result<Expr, ParseError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        variables: variable_names,
        parameters: parameter_names,
    };
    if *parser.peek() == Token::End {
        return parser.syntax("empty expression");
    }
    let expr = parser.expr()?;
    if *parser.peek() != Token::End {
        return parser.syntax(format!("unexpected trailing {:?}", parser.peek()));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn eval_at(text: &str, vars: &[&str], x: &[f64], params: &[(&str, f64)]) -> f64 {
        let pnames: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
        let pvals: Vec<f64> = params.iter().map(|(_, v)| *v).collect();
        let e = parse_expression(text, &names(vars), &pnames).unwrap();
        e.eval(&Bindings {
            t: 0.0,
            state: x,
            params: &pvals,
        })
        .unwrap()
    }

    #[test]
    fn enzyme_first_component() {
        let v = eval_at(
            "k1*X3*X2 - (km1+k2)*X1",
            &["X1", "X2", "X3", "X4"],
            &[1.0, 0.0, 1.0, 1.0],
            &[("k1", 0.1), ("km1", 0.2), ("k2", 0.3)],
        );
        assert!((v - -0.5).abs() < 1e-15);
    }

    #[test]
    fn unary_minus_looser_than_power() {
        assert_eq!(eval_at("-X1^2", &["X1"], &[3.0], &[]), -9.0);
        assert_eq!(eval_at("(-X1)^2", &["X1"], &[3.0], &[]), 9.0);
        assert_eq!(eval_at("2^-1", &[], &[], &[]), 0.5);
    }

    #[test]
    fn power_is_right_associative() {
        assert_eq!(eval_at("2^3^2", &[], &[], &[]), 512.0);
    }

    #[test]
    fn precedence_of_products_over_sums() {
        assert_eq!(eval_at("1 + 2*3 - 4/2", &[], &[], &[]), 5.0);
        assert_eq!(eval_at("8/4/2", &[], &[], &[]), 1.0);
    }

    #[test]
    fn hill_term_structure() {
        let vars = names(&["X1", "X2", "X3", "X4", "X5", "X6", "X7"]);
        let params = names(&["k1", "K1", "q"]);
        let e = parse_expression("2*k1*X1*X6/(1+(X6/K1)^q)", &vars, &params).unwrap();
        let Expr::Binary(BinaryOp::Div, num, den) = e else {
            panic!("expected a quotient");
        };
        assert_eq!(num.max_var_index(), Some(5));
        let Expr::Binary(BinaryOp::Add, one, pow) = *den else {
            panic!("expected 1 + (...)^q");
        };
        assert_eq!(*one, Expr::Number(1.0));
        assert!(matches!(*pow, Expr::Binary(BinaryOp::Pow, _, _)));
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(eval_at("1.5e2 + 2E-1 + .5", &[], &[], &[]), 150.7);
    }

    #[test]
    fn identifier_resolution_order() {
        let vars = names(&["a"]);
        let params = names(&["b"]);
        assert_eq!(parse_expression("a", &vars, &params).unwrap(), Expr::Var(0));
        assert_eq!(
            parse_expression("b", &vars, &params).unwrap(),
            Expr::Param {
                index: 0,
                name: "b".into()
            }
        );
        assert_eq!(parse_expression("t", &vars, &params).unwrap(), Expr::Time);
        // A state variable named `t` shadows the time variable.
        assert_eq!(
            parse_expression("t", &names(&["t"]), &[]).unwrap(),
            Expr::Var(0)
        );
    }

    #[test]
    fn errors_carry_positions() {
        let vars = names(&["x"]);
        assert_eq!(
            parse_expression("x + y", &vars, &[]),
            Err(ParseError::UnknownIdentifier {
                name: "y".into(),
                offset: 4
            })
        );
        assert!(matches!(
            parse_expression("sin(x, x)", &vars, &[]),
            Err(ParseError::WrongArity {
                found: 2,
                offset: 0,
                ..
            })
        ));
        assert!(matches!(
            parse_expression("cos()", &vars, &[]),
            Err(ParseError::WrongArity { found: 0, .. })
        ));
        assert!(matches!(
            parse_expression("tan(x)", &vars, &[]),
            Err(ParseError::UnknownIdentifier { offset: 0, .. })
        ));
        assert_eq!(parse_expression("(x", &vars, &[]).unwrap_err().offset(), 2);
        assert_eq!(
            parse_expression("x $ 2", &vars, &[]).unwrap_err().offset(),
            2
        );
        assert_eq!(parse_expression("x 2", &vars, &[]).unwrap_err().offset(), 2);
        assert!(parse_expression("", &vars, &[]).is_err());
        assert!(parse_expression("   ", &vars, &[]).is_err());
        assert!(parse_expression("1e999", &vars, &[]).is_err());
        assert!(parse_expression("x*", &vars, &[]).is_err());
    }

    #[test]
    fn domain_errors() {
        let vars = names(&["x"]);
        let env = Bindings {
            t: 0.0,
            state: &[0.0],
            params: &[],
        };
        let e = parse_expression("ln(x)", &vars, &[]).unwrap();
        assert!(matches!(e.eval(&env), Err(EvalError::LogDomain(_))));
        let e = parse_expression("1/x", &vars, &[]).unwrap();
        assert_eq!(e.eval(&env), Err(EvalError::DivisionByZero));
        let e = parse_expression("exp(1000)", &vars, &[]).unwrap();
        assert_eq!(e.eval(&env), Err(EvalError::NonFinite));
    }

    #[test]
    fn functions_evaluate() {
        let v = eval_at("sin(x)^2 + cos(x)^2 + ln(exp(2))", &["x"], &[0.7], &[]);
        assert!((v - 3.0).abs() < 1e-14);
    }

    fn arb_expr() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            (0u32..1000).prop_map(|n| n.to_string()),
            (0.0f64..1e6).prop_map(|v| format!("{:e}", v)),
            Just("x".to_string()),
            Just("y".to_string()),
            Just("k".to_string()),
            Just("t".to_string()),
        ];
        leaf.prop_recursive(4, 32, 3, |inner| {
            prop_oneof![
                (
                    inner.clone(),
                    inner.clone(),
                    prop::sample::select(vec!["+", "-", "*", "/", "^"])
                )
                    .prop_map(|(a, b, op)| format!("{} {} {}", a, op, b)),
                inner.clone().prop_map(|a| format!("-{}", a)),
                inner.clone().prop_map(|a| format!("({})", a)),
                (inner, prop::sample::select(vec!["sin", "cos", "exp", "ln"]))
                    .prop_map(|(a, f)| format!("{}({})", f, a)),
            ]
        })
    }

    proptest! {
        #[test]
        fn display_round_trips(text in arb_expr()) {
            let vars = names(&["x", "y"]);
            let params = names(&["k"]);
            let parsed = parse_expression(&text, &vars, &params).unwrap();
            let printed = parsed.display(&vars).to_string();
            let reparsed = parse_expression(&printed, &vars, &params).unwrap();
            prop_assert_eq!(parsed, reparsed);
        }

        #[test]
        fn literal_evaluates_to_itself(v in 0.0f64..1e300) {
            let text = format!("{:e}", v);
            let e = parse_expression(&text, &[], &[]).unwrap();
            let env = Bindings { t: 0.0, state: &[], params: &[] };
            prop_assert_eq!(e.eval(&env).unwrap(), v);
        }
    }
}
