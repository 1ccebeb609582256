//! Candidate equations: parsing, evaluation, calculus, canonical text.
//!
//! A [`CandidateExpression`] is an immutable expression tree plus its two
//! name tables. Variables bind to dataset columns; parameters are the
//! unknowns a fitter adjusts. The two namespaces are disjoint and declared
//! by the caller — nothing is inferred from the text.

mod node;
mod parse;

pub use node::{add, div, mul, neg, pow, sub, unary, BinaryOp, Expr, UnaryOp};
pub use parse::ParseError;

use thiserror::Error;

use crate::dataset::{BindingError, Dataset};

/// A parameter index outside `0..parameter_count`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parameter index {index} is out of range for {count} parameters")]
pub struct ParameterIndexError {
    pub index: usize,
    pub count: usize,
}

/// Failure while evaluating a candidate over a dataset. Domain violations
/// are *not* errors — they surface through the finite mask.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("expression has {expected} parameters but received {got} values")]
    ParameterCountMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Binding(#[from] BindingError),
}

/// Row-wise model outputs over a dataset, with per-row finiteness.
///
/// `predictions[i]` keeps the raw IEEE value (possibly NaN/Inf);
/// `finite_mask[i]` is `true` exactly when that value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<f64>,
    pub finite_mask: Vec<bool>,
}

impl Evaluation {
    /// Number of rows whose prediction is finite.
    pub fn finite_count(&self) -> usize {
        self.finite_mask.iter().filter(|&&m| m).count()
    }
}

/// An immutable candidate equation: expression tree + declared variable and
/// parameter names + the original source text.
#[derive(Debug, Clone)]
pub struct CandidateExpression {
    root: Expr,
    variables: Vec<String>,
    parameters: Vec<String>,
    source_text: String,
}

impl CandidateExpression {
    /// Parses `text` against the declared names. Every identifier in the
    /// text must resolve to exactly one declared variable or parameter, and
    /// every declared parameter must occur at least once in the tree.
    pub fn parse(
        text: &str,
        variables: &[&str],
        parameters: &[&str],
    ) -> Result<Self, ParseError> {
        let variables: Vec<String> = variables.iter().map(|s| s.to_string()).collect();
        let parameters: Vec<String> = parameters.iter().map(|s| s.to_string()).collect();
        validate_names(&variables, &parameters)?;
        let root = parse::parse_source(text, &variables, &parameters)?;
        for (j, name) in parameters.iter().enumerate() {
            if !root.references_parameter(j) {
                return Err(ParseError::UnusedParameter { name: name.clone() });
            }
        }
        Ok(CandidateExpression {
            root,
            variables,
            parameters,
            source_text: text.to_string(),
        })
    }

    /// Wraps an already-built tree. Name tables are validated like in
    /// [`CandidateExpression::parse`], but parameters are *not* required to
    /// occur in the tree (derived trees legitimately drop dependencies).
    ///
    /// # Panics
    /// If a leaf index exceeds its name table — that is a construction bug,
    /// not an input error.
    pub fn from_parts(
        root: Expr,
        variables: Vec<String>,
        parameters: Vec<String>,
    ) -> Result<Self, ParseError> {
        validate_names(&variables, &parameters)?;
        let (mut nv, mut np) = (0usize, 0usize);
        root_index_bounds(&root, &mut nv, &mut np);
        assert!(
            nv <= variables.len() && np <= parameters.len(),
            "leaf index out of range: tree uses {nv} variables / {np} parameters, \
             tables hold {} / {}",
            variables.len(),
            parameters.len()
        );
        let mut this = CandidateExpression {
            root,
            variables,
            parameters,
            source_text: String::new(),
        };
        this.source_text = this.canonical();
        Ok(this)
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn parameters(&self) -> &[String] {
        &self.parameters
    }

    pub fn variable_count(&self) -> usize {
        self.variables.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters.len()
    }

    /// The text this candidate was parsed from (canonical text for derived
    /// candidates).
    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    /// Position of a parameter name in the parameter table.
    pub fn parameter_index(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p == name)
    }

    /// Canonical text: minimal parentheses, no whitespace, literals printed
    /// as shortest round-tripping decimals. Re-parsing it yields a
    /// node-for-node identical tree.
    pub fn canonical(&self) -> String {
        let mut out = String::with_capacity(self.source_text.len().max(16));
        self.root
            .write_canonical(&mut out, 1, &self.variables, &self.parameters);
        out
    }

    /// Evaluates the candidate on every dataset row. Predictions keep raw
    /// IEEE values; the mask flags finite rows. Variables bind to dataset
    /// columns by name when the dataset has column names, positionally
    /// otherwise.
    pub fn evaluate(&self, dataset: &Dataset, theta: &[f64]) -> Result<Evaluation, EvalError> {
        if theta.len() != self.parameters.len() {
            return Err(EvalError::ParameterCountMismatch {
                expected: self.parameters.len(),
                got: theta.len(),
            });
        }
        let binding = dataset.binding_for(&self.variables)?;
        let n = dataset.n_rows();
        let mut predictions = Vec::with_capacity(n);
        let mut finite_mask = Vec::with_capacity(n);
        for i in 0..n {
            let v = self.root.evaluate_bound(dataset.row(i), &binding, theta);
            finite_mask.push(v.is_finite());
            predictions.push(v);
        }
        Ok(Evaluation {
            predictions,
            finite_mask,
        })
    }

    /// Symbolic partial derivative with respect to one parameter. The result
    /// shares this candidate's name tables; simplifying constructors fold
    /// away structurally absent dependencies.
    pub fn differentiate_wrt(&self, param_index: usize) -> Result<Self, ParameterIndexError> {
        if param_index >= self.parameters.len() {
            return Err(ParameterIndexError {
                index: param_index,
                count: self.parameters.len(),
            });
        }
        let root = self.root.differentiate(param_index);
        let mut this = CandidateExpression {
            root,
            variables: self.variables.clone(),
            parameters: self.parameters.clone(),
            source_text: String::new(),
        };
        this.source_text = this.canonical();
        Ok(this)
    }

    /// Replaces one parameter with a fixed value; the result no longer lists
    /// that parameter, and constant folding prunes annihilated structure.
    pub fn substitute_parameter(
        &self,
        param_index: usize,
        value: f64,
    ) -> Result<Self, ParameterIndexError> {
        if param_index >= self.parameters.len() {
            return Err(ParameterIndexError {
                index: param_index,
                count: self.parameters.len(),
            });
        }
        let root = self.root.substitute_parameter(param_index, value);
        let mut parameters = self.parameters.clone();
        parameters.remove(param_index);
        let mut this = CandidateExpression {
            root,
            variables: self.variables.clone(),
            parameters,
            source_text: String::new(),
        };
        this.source_text = this.canonical();
        Ok(this)
    }
}

impl std::fmt::Display for CandidateExpression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.canonical())
    }
}

fn root_index_bounds(root: &Expr, max_var: &mut usize, max_par: &mut usize) {
    match root {
        Expr::Literal(_) => {}
        Expr::Variable(i) => *max_var = (*max_var).max(*i + 1),
        Expr::Parameter(j) => *max_par = (*max_par).max(*j + 1),
        Expr::Unary(_, e) => root_index_bounds(e, max_var, max_par),
        Expr::Binary(_, l, r) => {
            root_index_bounds(l, max_var, max_par);
            root_index_bounds(r, max_var, max_par);
        }
    }
}

fn validate_names(variables: &[String], parameters: &[String]) -> Result<(), ParseError> {
    let mut seen: Vec<&str> = Vec::with_capacity(variables.len() + parameters.len());
    for name in variables.iter().chain(parameters.iter()) {
        if !parse::is_valid_identifier(name) {
            return Err(ParseError::InvalidName { name: name.clone() });
        }
        if UnaryOp::from_function_name(name).is_some() {
            return Err(ParseError::ReservedName { name: name.clone() });
        }
        if seen.contains(&name.as_str()) {
            return Err(ParseError::DuplicateName { name: name.clone() });
        }
        seen.push(name);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;

    fn row_dataset(rows: &[(&[f64], f64)], names: Option<&[&str]>) -> Dataset {
        Dataset::new(
            rows.iter().map(|(r, _)| r.to_vec()).collect(),
            rows.iter().map(|(_, y)| *y).collect(),
            names.map(|ns| ns.iter().map(|s| s.to_string()).collect()),
        )
        .unwrap()
    }

    #[test]
    fn parse_builds_the_documented_tree() {
        let c = CandidateExpression::parse("a*sin(b*x + c)", &["x"], &["a", "b", "c"]).unwrap();
        let expected = Expr::Binary(
            BinaryOp::Mul,
            Box::new(Expr::Parameter(0)),
            Box::new(Expr::Unary(
                UnaryOp::Sin,
                Box::new(Expr::Binary(
                    BinaryOp::Add,
                    Box::new(Expr::Binary(
                        BinaryOp::Mul,
                        Box::new(Expr::Parameter(1)),
                        Box::new(Expr::Variable(0)),
                    )),
                    Box::new(Expr::Parameter(2)),
                )),
            )),
        );
        assert_eq!(*c.root(), expected);
        assert_eq!(c.source_text(), "a*sin(b*x + c)");
        assert_eq!(c.canonical(), "a*sin(b*x+c)");
    }

    #[test]
    fn unused_parameter_is_rejected() {
        let err = CandidateExpression::parse("a*x", &["x"], &["a", "b"]).unwrap_err();
        assert_eq!(err, ParseError::UnusedParameter { name: "b".into() });
    }

    #[test]
    fn reserved_and_duplicate_names_are_rejected() {
        let err = CandidateExpression::parse("sin*x", &["x", "sin"], &[]).unwrap_err();
        assert_eq!(err, ParseError::ReservedName { name: "sin".into() });
        let err = CandidateExpression::parse("x", &["x"], &["x"]).unwrap_err();
        assert_eq!(err, ParseError::DuplicateName { name: "x".into() });
    }

    #[test]
    fn evaluate_binds_by_name_and_masks_domain_violations() {
        let c = CandidateExpression::parse("log(a*x)", &["x"], &["a"]).unwrap();
        let d = row_dataset(&[(&[1.0], 0.0), (&[-1.0], 0.0)], Some(&["x"]));
        let ev = c.evaluate(&d, &[1.0]).unwrap();
        assert_eq!(ev.predictions[0], 0.0);
        assert!(ev.predictions[1].is_nan());
        assert_eq!(ev.finite_mask, vec![true, false]);
        assert_eq!(ev.finite_count(), 1);
    }

    #[test]
    fn evaluate_reorders_named_columns() {
        // Dataset columns (u, x); expression declares (x, u).
        let c = CandidateExpression::parse("x - u", &["x", "u"], &[]).unwrap();
        let d = row_dataset(&[(&[10.0, 1.0], 0.0)], Some(&["u", "x"]));
        let ev = c.evaluate(&d, &[]).unwrap();
        assert_eq!(ev.predictions, vec![-9.0]);
    }

    #[test]
    fn evaluate_checks_theta_length() {
        let c = CandidateExpression::parse("a*x", &["x"], &["a"]).unwrap();
        let d = row_dataset(&[(&[1.0], 0.0)], Some(&["x"]));
        assert_eq!(
            c.evaluate(&d, &[]).unwrap_err(),
            EvalError::ParameterCountMismatch {
                expected: 1,
                got: 0
            }
        );
    }

    #[test]
    fn differentiate_matches_documented_examples() {
        let c = CandidateExpression::parse("a*x + b", &["x"], &["a", "b"]).unwrap();
        assert_eq!(c.differentiate_wrt(0).unwrap().canonical(), "x");
        assert_eq!(c.differentiate_wrt(1).unwrap().canonical(), "1");

        let c = CandidateExpression::parse("sin(b*x)", &["x"], &["b"]).unwrap();
        assert_eq!(c.differentiate_wrt(0).unwrap().canonical(), "x*cos(b*x)");

        let c = CandidateExpression::parse("a*sin(b*x+c)", &["x"], &["a", "b", "c"]).unwrap();
        let da = c.differentiate_wrt(0).unwrap();
        assert_eq!(da.canonical(), "sin(b*x+c)");
        assert!(!da.root().references_parameter(0));
    }

    #[test]
    fn substitute_matches_documented_examples() {
        let c = CandidateExpression::parse("a*x + b", &["x"], &["a", "b"]).unwrap();
        let s = c.substitute_parameter(1, 0.0).unwrap();
        assert_eq!(s.canonical(), "a*x");
        assert_eq!(s.parameters(), &["a".to_string()]);

        let c = CandidateExpression::parse("a*sin(b*x+c)", &["x"], &["a", "b", "c"]).unwrap();
        let s = c.substitute_parameter(0, 0.0).unwrap();
        assert_eq!(s.canonical(), "0");

        let c = CandidateExpression::parse("exp(a)*x", &["x"], &["a"]).unwrap();
        let s = c.substitute_parameter(0, 0.0).unwrap();
        assert_eq!(s.canonical(), "x");
        assert!(s.parameters().is_empty());

        let err = c.substitute_parameter(5, 0.0).unwrap_err();
        assert_eq!(err, ParameterIndexError { index: 5, count: 1 });
    }

    #[test]
    fn canonical_text_round_trips_tricky_structure() {
        for src in [
            "-(a+b)*x",
            "a-(b-c)",
            "(a^b)^c",
            "a^b^c",
            "x/-2",
            "-x^2",
            "(-2)^x",
            "a--b",
            "abs(x)/x",
        ] {
            // Declared as variables: usage of every name is not required.
            let c = CandidateExpression::parse(src, &["x", "a", "b", "c"], &[]);
            let c = match c {
                Ok(c) => c,
                Err(e) => panic!("{src}: {e}"),
            };
            let text = c.canonical();
            let r = CandidateExpression::parse(&text, &["x", "a", "b", "c"], &[])
                .unwrap_or_else(|e| panic!("reparse {text}: {e}"));
            assert_eq!(c.root(), r.root(), "round trip changed {src} via {text}");
        }
    }
}
