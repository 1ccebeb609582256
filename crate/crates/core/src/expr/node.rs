//! Expression tree nodes, evaluation, calculus, and canonical printing.
//!
//! Trees are index-based: variable and parameter leaves store positions into
//! the name tables owned by [`super::CandidateExpression`]. All numeric
//! evaluation is total — domain violations surface as IEEE NaN/Inf values and
//! are handled by validity masks downstream, never by panics.

use std::fmt;

/// Unary operators in the closed operator set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    /// Arithmetic negation.
    Neg,
    Sin,
    Cos,
    Tan,
    Exp,
    /// Natural logarithm.
    Log,
    Sqrt,
    Abs,
}

impl UnaryOp {
    /// Function-call spelling, or `None` for negation (spelled `-`).
    pub fn function_name(self) -> Option<&'static str> {
        match self {
            UnaryOp::Neg => None,
            UnaryOp::Sin => Some("sin"),
            UnaryOp::Cos => Some("cos"),
            UnaryOp::Tan => Some("tan"),
            UnaryOp::Exp => Some("exp"),
            UnaryOp::Log => Some("log"),
            UnaryOp::Sqrt => Some("sqrt"),
            UnaryOp::Abs => Some("abs"),
        }
    }

    /// Looks up a function by its call spelling.
    pub fn from_function_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(UnaryOp::Sin),
            "cos" => Some(UnaryOp::Cos),
            "tan" => Some(UnaryOp::Tan),
            "exp" => Some(UnaryOp::Exp),
            "log" => Some(UnaryOp::Log),
            "sqrt" => Some(UnaryOp::Sqrt),
            "abs" => Some(UnaryOp::Abs),
            _ => None,
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            UnaryOp::Neg => -v,
            UnaryOp::Sin => v.sin(),
            UnaryOp::Cos => v.cos(),
            UnaryOp::Tan => v.tan(),
            UnaryOp::Exp => v.exp(),
            UnaryOp::Log => v.ln(),
            UnaryOp::Sqrt => v.sqrt(),
            UnaryOp::Abs => v.abs(),
        }
    }
}

/// Binary operators in the closed operator set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    /// Exponentiation, spelled `^`, right-associative.
    Pow,
}

impl BinaryOp {
    fn apply(self, l: f64, r: f64) -> f64 {
        match self {
            BinaryOp::Add => l + r,
            BinaryOp::Sub => l - r,
            BinaryOp::Mul => l * r,
            BinaryOp::Div => l / r,
            BinaryOp::Pow => l.powf(r),
        }
    }
}

/// An expression tree node.
///
/// Invariant maintained by every constructor in this crate: a `Neg` node
/// never wraps a bare `Literal` — such pairs are folded into a negative
/// literal so that canonical text round-trips to an identical tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// A finite numeric constant.
    Literal(f64),
    /// Index into the owning candidate's variable table.
    Variable(usize),
    /// Index into the owning candidate's parameter table.
    Parameter(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Evaluates the tree at one data point. `vars[i]` binds `Variable(i)`,
    /// `theta[j]` binds `Parameter(j)`. Total: never panics on domain
    /// violations, which propagate as NaN/Inf.
    pub fn evaluate(&self, vars: &[f64], theta: &[f64]) -> f64 {
        match self {
            Expr::Literal(v) => *v,
            Expr::Variable(i) => vars[*i],
            Expr::Parameter(j) => theta[*j],
            Expr::Unary(op, e) => op.apply(e.evaluate(vars, theta)),
            Expr::Binary(op, l, r) => op.apply(l.evaluate(vars, theta), r.evaluate(vars, theta)),
        }
    }

    /// Like [`Expr::evaluate`], but `Variable(i)` reads `row[binding[i]]`,
    /// letting callers evaluate directly against dataset rows whose column
    /// order differs from the candidate's variable order.
    pub fn evaluate_bound(&self, row: &[f64], binding: &[usize], theta: &[f64]) -> f64 {
        match self {
            Expr::Literal(v) => *v,
            Expr::Variable(i) => row[binding[*i]],
            Expr::Parameter(j) => theta[*j],
            Expr::Unary(op, e) => op.apply(e.evaluate_bound(row, binding, theta)),
            Expr::Binary(op, l, r) => op.apply(
                l.evaluate_bound(row, binding, theta),
                r.evaluate_bound(row, binding, theta),
            ),
        }
    }

    /// True when any `Parameter(index)` leaf occurs in the tree.
    pub fn references_parameter(&self, index: usize) -> bool {
        match self {
            Expr::Parameter(j) => *j == index,
            Expr::Literal(_) | Expr::Variable(_) => false,
            Expr::Unary(_, e) => e.references_parameter(index),
            Expr::Binary(_, l, r) => {
                l.references_parameter(index) || r.references_parameter(index)
            }
        }
    }

    /// True when any variable leaf occurs in the tree.
    pub fn references_any_variable(&self) -> bool {
        match self {
            Expr::Variable(_) => true,
            Expr::Literal(_) | Expr::Parameter(_) => false,
            Expr::Unary(_, e) => e.references_any_variable(),
            Expr::Binary(_, l, r) => l.references_any_variable() || r.references_any_variable(),
        }
    }

    /// Maximum depth (root = 0) at which `Parameter(index)` occurs, or `None`
    /// when the parameter does not occur at all.
    pub fn parameter_max_depth(&self, index: usize) -> Option<usize> {
        match self {
            Expr::Parameter(j) if *j == index => Some(0),
            Expr::Literal(_) | Expr::Variable(_) | Expr::Parameter(_) => None,
            Expr::Unary(_, e) => e.parameter_max_depth(index).map(|d| d + 1),
            Expr::Binary(_, l, r) => {
                match (l.parameter_max_depth(index), r.parameter_max_depth(index)) {
                    (Some(a), Some(b)) => Some(a.max(b) + 1),
                    (Some(a), None) => Some(a + 1),
                    (None, Some(b)) => Some(b + 1),
                    (None, None) => None,
                }
            }
        }
    }

    /// Number of nodes in the tree.
    pub fn node_count(&self) -> usize {
        match self {
            Expr::Literal(_) | Expr::Variable(_) | Expr::Parameter(_) => 1,
            Expr::Unary(_, e) => 1 + e.node_count(),
            Expr::Binary(_, l, r) => 1 + l.node_count() + r.node_count(),
        }
    }

    /// Replaces every `Parameter(index)` leaf with a literal and shifts the
    /// indices of all higher-numbered parameters down by one. Built with the
    /// simplifying constructors, so `0*u` annihilates and `exp(0)*u` folds
    /// down to `u`.
    pub fn substitute_parameter(&self, index: usize, value: f64) -> Expr {
        match self {
            Expr::Parameter(j) if *j == index => Expr::Literal(value),
            Expr::Parameter(j) if *j > index => Expr::Parameter(*j - 1),
            Expr::Literal(_) | Expr::Variable(_) | Expr::Parameter(_) => self.clone(),
            Expr::Unary(op, e) => unary(*op, e.substitute_parameter(index, value)),
            Expr::Binary(op, l, r) => binary_simplified(
                *op,
                l.substitute_parameter(index, value),
                r.substitute_parameter(index, value),
            ),
        }
    }

    /// Bottom-up constant folding: literal-only subtrees with finite values
    /// collapse to literals, and identity/annihilator rules (`u+0`, `1*u`,
    /// `0*u`, …) prune trivial structure. Non-finite constant results stay
    /// symbolic so evaluation semantics are unchanged.
    pub fn fold(&self) -> Expr {
        match self {
            Expr::Literal(_) | Expr::Variable(_) | Expr::Parameter(_) => self.clone(),
            Expr::Unary(op, e) => unary(*op, e.fold()),
            Expr::Binary(op, l, r) => binary_simplified(*op, l.fold(), r.fold()),
        }
    }

    /// Partial derivative with respect to `Parameter(index)`, built with the
    /// simplifying constructors so structurally absent dependencies collapse
    /// to a plain `0` and unit chain factors disappear.
    pub fn differentiate(&self, index: usize) -> Expr {
        match self {
            Expr::Literal(_) | Expr::Variable(_) => Expr::Literal(0.0),
            Expr::Parameter(j) => Expr::Literal(if *j == index { 1.0 } else { 0.0 }),
            Expr::Unary(op, e) => {
                let de = e.differentiate(index);
                let u = (**e).clone();
                match op {
                    UnaryOp::Neg => neg(de),
                    UnaryOp::Sin => mul(de, unary(UnaryOp::Cos, u)),
                    UnaryOp::Cos => neg(mul(de, unary(UnaryOp::Sin, u))),
                    UnaryOp::Tan => div(de, pow(unary(UnaryOp::Cos, u), Expr::Literal(2.0))),
                    UnaryOp::Exp => mul(de, unary(UnaryOp::Exp, u)),
                    UnaryOp::Log => div(de, u),
                    UnaryOp::Sqrt => {
                        div(de, mul(Expr::Literal(2.0), unary(UnaryOp::Sqrt, u)))
                    }
                    // d|u| = u/|u| · du (evaluates NaN at u = 0, by design).
                    UnaryOp::Abs => mul(de, div(u.clone(), unary(UnaryOp::Abs, u))),
                }
            }
            Expr::Binary(op, l, r) => {
                let (dl, dr) = (l.differentiate(index), r.differentiate(index));
                match op {
                    BinaryOp::Add => add(dl, dr),
                    BinaryOp::Sub => sub(dl, dr),
                    BinaryOp::Mul => add(mul(dl, (**r).clone()), mul((**l).clone(), dr)),
                    BinaryOp::Div => div(
                        sub(mul(dl, (**r).clone()), mul((**l).clone(), dr)),
                        pow((**r).clone(), Expr::Literal(2.0)),
                    ),
                    BinaryOp::Pow => {
                        let base = (**l).clone();
                        let expo = (**r).clone();
                        if matches!(expo, Expr::Literal(_)) {
                            // d(u^c) = c·u^(c-1)·du for constant c.
                            let cm1 = sub(expo.clone(), Expr::Literal(1.0));
                            mul(mul(expo, pow(base, cm1)), dl)
                        } else {
                            // General: d(u^v) = u^v·(dv·log u + v·du/u).
                            mul(
                                pow(base.clone(), expo.clone()),
                                add(
                                    mul(dr, unary(UnaryOp::Log, base.clone())),
                                    div(mul(expo, dl), base),
                                ),
                            )
                        }
                    }
                }
            }
        }
    }

    /// Printing precedence; higher binds tighter. Mirrors the grammar:
    /// additive (1) < multiplicative (2) < unary minus (3) < power (4) <
    /// atom (5). Negative literals print with a leading `-`, so they carry
    /// unary-minus precedence.
    fn precedence(&self) -> u8 {
        match self {
            Expr::Literal(v) if v.is_sign_negative() => 3,
            Expr::Literal(_) | Expr::Variable(_) | Expr::Parameter(_) => 5,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Unary(_, _) => 5,
            Expr::Binary(BinaryOp::Add, _, _) | Expr::Binary(BinaryOp::Sub, _, _) => 1,
            Expr::Binary(BinaryOp::Mul, _, _) | Expr::Binary(BinaryOp::Div, _, _) => 2,
            Expr::Binary(BinaryOp::Pow, _, _) => 4,
        }
    }

    /// Writes the canonical form. `min_prec` is the lowest precedence the
    /// grammar accepts bare at this position; lower-precedence subtrees are
    /// parenthesized.
    pub(crate) fn write_canonical(
        &self,
        out: &mut String,
        min_prec: u8,
        variables: &[String],
        parameters: &[String],
    ) {
        let needs_parens = self.precedence() < min_prec;
        if needs_parens {
            out.push('(');
        }
        match self {
            Expr::Literal(v) => {
                debug_assert!(v.is_finite(), "literals are finite by construction");
                // `Display` for f64 prints the shortest decimal that parses
                // back to the same bits, so literals survive a round trip.
                out.push_str(&v.to_string());
            }
            Expr::Variable(i) => out.push_str(&variables[*i]),
            Expr::Parameter(j) => out.push_str(&parameters[*j]),
            Expr::Unary(UnaryOp::Neg, e) => {
                out.push('-');
                e.write_canonical(out, 3, variables, parameters);
            }
            Expr::Unary(op, e) => {
                out.push_str(op.function_name().expect("non-neg unary has a name"));
                out.push('(');
                e.write_canonical(out, 1, variables, parameters);
                out.push(')');
            }
            Expr::Binary(op, l, r) => {
                // Left-associative operators accept their own precedence on
                // the left but require strictly tighter binding on the right;
                // `^` is right-associative and its base must be an atom.
                let (sym, lp, rp) = match op {
                    BinaryOp::Add => ("+", 1, 2),
                    BinaryOp::Sub => ("-", 1, 2),
                    BinaryOp::Mul => ("*", 2, 3),
                    BinaryOp::Div => ("/", 2, 3),
                    BinaryOp::Pow => ("^", 5, 3),
                };
                l.write_canonical(out, lp, variables, parameters);
                out.push_str(sym);
                r.write_canonical(out, rp, variables, parameters);
            }
        }
        if needs_parens {
            out.push(')');
        }
    }

    fn max_leaf_indices(&self, max_var: &mut usize, max_par: &mut usize) {
        match self {
            Expr::Literal(_) => {}
            Expr::Variable(i) => *max_var = (*max_var).max(*i + 1),
            Expr::Parameter(j) => *max_par = (*max_par).max(*j + 1),
            Expr::Unary(_, e) => e.max_leaf_indices(max_var, max_par),
            Expr::Binary(_, l, r) => {
                l.max_leaf_indices(max_var, max_par);
                r.max_leaf_indices(max_var, max_par);
            }
        }
    }
}

/// Display with positional placeholder names (`x0`, `p0`); intended for
/// debugging. User-facing text comes from [`super::CandidateExpression`],
/// which owns the real name tables.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (mut nv, mut np) = (0, 0);
        self.max_leaf_indices(&mut nv, &mut np);
        let vars: Vec<String> = (0..nv).map(|i| format!("x{i}")).collect();
        let pars: Vec<String> = (0..np).map(|j| format!("p{j}")).collect();
        let mut s = String::new();
        self.write_canonical(&mut s, 1, &vars, &pars);
        f.write_str(&s)
    }
}

// ---------------------------------------------------------------------------
// Simplifying constructors.
//
// These apply literal-only folding (with a finiteness guard) plus the
// identity/annihilator rules spelled out below. The annihilator rules `0*u`
// and `0/u` assume `u` evaluates finite, which is the standard caveat of
// constant folding; full evaluation semantics are preserved everywhere else.
// ---------------------------------------------------------------------------

fn literal_is(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Literal(x) if *x == v)
}

/// `Neg` constructor; folds literal operands so the no-`Neg(Literal)`
/// invariant holds everywhere.
pub fn neg(e: Expr) -> Expr {
    match e {
        Expr::Literal(v) => Expr::Literal(-v),
        other => Expr::Unary(UnaryOp::Neg, Box::new(other)),
    }
}

/// Unary constructor with finite literal folding (and `Neg` normalization).
pub fn unary(op: UnaryOp, e: Expr) -> Expr {
    if op == UnaryOp::Neg {
        return neg(e);
    }
    if let Expr::Literal(v) = e {
        let r = op.apply(v);
        if r.is_finite() {
            return Expr::Literal(r);
        }
    }
    Expr::Unary(op, Box::new(e))
}

/// `l + r` with `0 + u = u + 0 = u`.
pub fn add(l: Expr, r: Expr) -> Expr {
    if literal_is(&l, 0.0) {
        return r;
    }
    if literal_is(&r, 0.0) {
        return l;
    }
    binary_folded(BinaryOp::Add, l, r)
}

/// `l - r` with `u - 0 = u` and `0 - u = -u`.
pub fn sub(l: Expr, r: Expr) -> Expr {
    if literal_is(&r, 0.0) {
        return l;
    }
    if literal_is(&l, 0.0) {
        return neg(r);
    }
    binary_folded(BinaryOp::Sub, l, r)
}

/// `l * r` with annihilator `0*u = u*0 = 0` and identity `1*u = u*1 = u`.
pub fn mul(l: Expr, r: Expr) -> Expr {
    if literal_is(&l, 0.0) || literal_is(&r, 0.0) {
        return Expr::Literal(0.0);
    }
    if literal_is(&l, 1.0) {
        return r;
    }
    if literal_is(&r, 1.0) {
        return l;
    }
    binary_folded(BinaryOp::Mul, l, r)
}

/// `l / r` with `u/1 = u` and `0/u = 0` (for nonzero-literal-safe `u`).
pub fn div(l: Expr, r: Expr) -> Expr {
    if literal_is(&r, 1.0) {
        return l;
    }
    if literal_is(&l, 0.0) && !literal_is(&r, 0.0) {
        return Expr::Literal(0.0);
    }
    binary_folded(BinaryOp::Div, l, r)
}

/// `l ^ r` with `u^1 = u`.
pub fn pow(l: Expr, r: Expr) -> Expr {
    if literal_is(&r, 1.0) {
        return l;
    }
    binary_folded(BinaryOp::Pow, l, r)
}

/// Dispatches to the simplifying constructor for `op`.
pub(crate) fn binary_simplified(op: BinaryOp, l: Expr, r: Expr) -> Expr {
    match op {
        BinaryOp::Add => add(l, r),
        BinaryOp::Sub => sub(l, r),
        BinaryOp::Mul => mul(l, r),
        BinaryOp::Div => div(l, r),
        BinaryOp::Pow => pow(l, r),
    }
}

fn binary_folded(op: BinaryOp, l: Expr, r: Expr) -> Expr {
    if let (Expr::Literal(a), Expr::Literal(b)) = (&l, &r) {
        let v = op.apply(*a, *b);
        if v.is_finite() {
            return Expr::Literal(v);
        }
    }
    Expr::Binary(op, Box::new(l), Box::new(r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(v: f64) -> Expr {
        Expr::Literal(v)
    }

    #[test]
    fn evaluation_is_total_on_domain_violations() {
        let e = Expr::Unary(UnaryOp::Log, Box::new(Expr::Variable(0)));
        assert!(e.evaluate(&[-1.0], &[]).is_nan());
        let d = Expr::Binary(BinaryOp::Div, Box::new(lit(1.0)), Box::new(Expr::Variable(0)));
        assert!(d.evaluate(&[0.0], &[]).is_infinite());
    }

    #[test]
    fn folding_keeps_non_finite_results_symbolic() {
        let d = Expr::Binary(BinaryOp::Div, Box::new(lit(1.0)), Box::new(lit(0.0)));
        assert_eq!(d.fold(), d);
        let s = Expr::Binary(BinaryOp::Add, Box::new(lit(1.0)), Box::new(lit(2.0)));
        assert_eq!(s.fold(), lit(3.0));
    }

    #[test]
    fn folding_applies_identity_and_annihilator_rules() {
        // exp(0)*x0 folds to x0 through the literal + identity rules.
        let e = Expr::Binary(
            BinaryOp::Mul,
            Box::new(Expr::Unary(UnaryOp::Exp, Box::new(lit(0.0)))),
            Box::new(Expr::Variable(0)),
        );
        assert_eq!(e.fold(), Expr::Variable(0));
        let z = Expr::Binary(BinaryOp::Mul, Box::new(lit(0.0)), Box::new(Expr::Variable(0)));
        assert_eq!(z.fold(), lit(0.0));
    }

    #[test]
    fn derivative_of_absent_parameter_is_zero() {
        // sin(p0 * x0), differentiated with respect to p1.
        let e = Expr::Unary(
            UnaryOp::Sin,
            Box::new(mul(Expr::Parameter(0), Expr::Variable(0))),
        );
        assert_eq!(e.differentiate(1).fold(), lit(0.0));
    }

    #[test]
    fn chain_rule_puts_inner_derivative_first() {
        // d sin(p0*x0) / d p0 = x0 * cos(p0*x0).
        let inner = mul(Expr::Parameter(0), Expr::Variable(0));
        let e = Expr::Unary(UnaryOp::Sin, Box::new(inner.clone()));
        let expected = mul(Expr::Variable(0), unary(UnaryOp::Cos, inner));
        assert_eq!(e.differentiate(0), expected);
    }

    #[test]
    fn substitution_shifts_higher_indices() {
        let e = add(Expr::Parameter(0), mul(Expr::Parameter(1), Expr::Variable(0)));
        let s = e.substitute_parameter(0, 2.0);
        assert_eq!(s, add(lit(2.0), mul(Expr::Parameter(0), Expr::Variable(0))));
    }

    #[test]
    fn substitution_folds_annihilated_factors() {
        // (p0 * sin(p1*x0 + p2)) with p0 := 0 collapses to the literal 0.
        let e = mul(
            Expr::Parameter(0),
            Expr::Unary(
                UnaryOp::Sin,
                Box::new(add(
                    mul(Expr::Parameter(1), Expr::Variable(0)),
                    Expr::Parameter(2),
                )),
            ),
        );
        assert_eq!(e.substitute_parameter(0, 0.0), lit(0.0));
    }

    #[test]
    fn max_depth_tracks_deepest_occurrence() {
        // p0 + sin(p0 * x0): occurrences at depth 1 and depth 3.
        let e = add(
            Expr::Parameter(0),
            Expr::Unary(
                UnaryOp::Sin,
                Box::new(mul(Expr::Parameter(0), Expr::Variable(0))),
            ),
        );
        assert_eq!(e.parameter_max_depth(0), Some(3));
        assert_eq!(e.parameter_max_depth(1), None);
    }
}
