//! PCTL fragment: parsing, and extremal until/next probabilities on a
//! concrete MDP via qualitative preprocessing plus Gauss-Seidel value
//! iteration.
//!
//! Threshold semantics quantify over all strategies: lower bounds (`>=`, `>`)
//! compare the minimum over deterministic memoryless strategies, upper
//! bounds (`<=`, `<`) the maximum. For until and next both extrema are
//! attained by deterministic memoryless strategies.

use crate::model::Mdp;
use std::collections::BTreeSet;

pub const VI_TOLERANCE: f64 = 1e-9;
pub const VI_MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum PctlError {
    #[error("property syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("nested probabilistic operators are not supported")]
    Nesting,
    #[error("operand must be propositional (no probabilistic operator)")]
    NonPropositional,
    #[error("value iteration did not converge within {0} sweeps")]
    NonConvergence(usize),
    #[error("threshold {0} outside [0,1]")]
    BadThreshold(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            CmpOp::Lt => value < threshold,
            CmpOp::Le => value <= threshold,
            CmpOp::Ge => value >= threshold,
            CmpOp::Gt => value > threshold,
        }
    }

    /// Which extremum over strategies the universal semantics compares.
    pub fn extremum(self) -> Extremum {
        match self {
            CmpOp::Ge | CmpOp::Gt => Extremum::Min,
            CmpOp::Le | CmpOp::Lt => Extremum::Max,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extremum {
    Min,
    Max,
}

/// Propositional state formula.
#[derive(Clone, Debug, PartialEq)]
pub enum StateFormula {
    True,
    Atom(String),
    Not(Box<StateFormula>),
    And(Box<StateFormula>, Box<StateFormula>),
}

impl StateFormula {
    pub fn holds(&self, mdp: &Mdp, s: usize) -> bool {
        match self {
            StateFormula::True => true,
            StateFormula::Atom(a) => mdp.labels[s].contains(a),
            StateFormula::Not(f) => !f.holds(mdp, s),
            StateFormula::And(f, g) => f.holds(mdp, s) && g.holds(mdp, s),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PathFormula {
    Next(StateFormula),
    Until(StateFormula, StateFormula),
}

/// Top-level verification property `P op p [ path ]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Property {
    pub op: CmpOp,
    pub threshold: f64,
    pub path: PathFormula,
}

impl std::fmt::Display for Property {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fn sf(x: &StateFormula) -> String {
            match x {
                StateFormula::True => "true".into(),
                StateFormula::Atom(a) => format!("\"{a}\""),
                StateFormula::Not(y) => format!("! {}", sf(y)),
                StateFormula::And(a, b) => format!("({} & {})", sf(a), sf(b)),
            }
        }
        match &self.path {
            PathFormula::Next(x) => {
                write!(f, "P{}{} [ X {} ]", self.op.symbol(), self.threshold, sf(x))
            }
            PathFormula::Until(a, b) => {
                write!(f, "P{}{} [ {} U {} ]", self.op.symbol(), self.threshold, sf(a), sf(b))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Scanner<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn err(&self, message: impl Into<String>) -> PctlError {
        PctlError::Syntax { offset: self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), PctlError> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{token}`")))
        }
    }

    fn number(&mut self) -> Result<f64, PctlError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_digit() || self.bytes[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected number"));
        }
        self.src[start..self.pos].parse().map_err(|_| self.err("bad number"))
    }

    fn quoted(&mut self) -> Result<String, PctlError> {
        self.expect("\"")?;
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos] != b'"' {
            self.pos += 1;
        }
        if self.pos == self.bytes.len() {
            return Err(self.err("unterminated label"));
        }
        let s = self.src[start..self.pos].to_string();
        self.pos += 1;
        Ok(s)
    }

    // sf := unary ('&' unary)*
    fn state_formula(&mut self) -> Result<StateFormula, PctlError> {
        let mut left = self.unary()?;
        while self.peek() == Some(b'&') {
            self.pos += 1;
            let right = self.unary()?;
            left = StateFormula::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<StateFormula, PctlError> {
        match self.peek() {
            Some(b'!') => {
                self.pos += 1;
                Ok(StateFormula::Not(Box::new(self.unary()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let f = self.state_formula()?;
                self.expect(")")?;
                Ok(f)
            }
            Some(b'"') => Ok(StateFormula::Atom(self.quoted()?)),
            Some(b'P') => Err(PctlError::Nesting),
            _ => {
                if self.eat("true") {
                    Ok(StateFormula::True)
                } else {
                    Err(self.err("expected state formula"))
                }
            }
        }
    }
}

/// Parse `P op num [ sf U sf ]` or `P op num [ X sf ]`.
pub fn parse_property(text: &str) -> Result<Property, PctlError> {
    let mut sc = Scanner { src: text, bytes: text.as_bytes(), pos: 0 };
    sc.expect("P")?;
    let op = if sc.eat("<=") {
        CmpOp::Le
    } else if sc.eat(">=") {
        CmpOp::Ge
    } else if sc.eat("<") {
        CmpOp::Lt
    } else if sc.eat(">") {
        CmpOp::Gt
    } else {
        return Err(sc.err("expected comparison operator"));
    };
    let threshold = sc.number()?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(PctlError::BadThreshold(threshold));
    }
    sc.expect("[")?;
    let path = if sc.eat("X") {
        PathFormula::Next(sc.state_formula()?)
    } else {
        let left = sc.state_formula()?;
        sc.expect("U")?;
        let right = sc.state_formula()?;
        PathFormula::Until(left, right)
    };
    sc.expect("]")?;
    sc.skip_ws();
    if sc.pos != sc.bytes.len() {
        return Err(sc.err("trailing input"));
    }
    Ok(Property { op, threshold, path })
}

// ---------------------------------------------------------------------------
// Extremal reachability
// ---------------------------------------------------------------------------

/// Result of an extremal until computation.
#[derive(Clone, Debug)]
pub struct ReachResult {
    /// Per-state extremal probability.
    pub values: Vec<f64>,
    /// Arg-extremal memoryless strategy (per-state action index; states with
    /// forced values keep their first enabled action).
    pub strategy: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
}

fn first_enabled(mdp: &Mdp, s: usize) -> usize {
    mdp.rows_of_state(s).next().map(|r| r.action).expect("state without actions")
}

/// States with extremal until-probability zero.
///
/// For the minimum: a state has positive value iff every action keeps all of
/// its probability-one... more precisely iff under every action some
/// successor already has positive value; the zero set is the complement of
/// that least fixed point. For the maximum: positive value iff some action
/// reaches the fixed point, i.e. plain backward reachability.
fn prob0_states(
    mdp: &Mdp,
    sat1: &[bool],
    goal: &[bool],
    which: Extremum,
) -> Vec<bool> {
    let n = mdp.n_states();
    let mut positive: Vec<bool> = goal.to_vec();
    loop {
        let mut changed = false;
        for s in 0..n {
            if positive[s] || !sat1[s] {
                continue;
            }
            let reaches = |row: &crate::model::MdpRow| {
                row.probs.iter().any(|(t, p)| *p > 0.0 && positive[*t])
            };
            let now = match which {
                Extremum::Min => mdp.rows_of_state(s).all(reaches),
                Extremum::Max => mdp.rows_of_state(s).any(reaches),
            };
            if now {
                positive[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    positive.iter().map(|p| !p).collect()
}

/// Extremal probability of `phi1 U phi2` for every state.
pub fn extremal_until(
    mdp: &Mdp,
    phi1: &StateFormula,
    phi2: &StateFormula,
    which: Extremum,
) -> Result<ReachResult, PctlError> {
    let n = mdp.n_states();
    let goal: Vec<bool> = (0..n).map(|s| phi2.holds(mdp, s)).collect();
    let sat1: Vec<bool> = (0..n).map(|s| phi1.holds(mdp, s)).collect();
    let zero = prob0_states(mdp, &sat1, &goal, which);

    let mut values = vec![0.0f64; n];
    for s in 0..n {
        if goal[s] {
            values[s] = 1.0;
        }
    }
    let mut strategy: Vec<usize> = (0..n).map(|s| first_enabled(mdp, s)).collect();

    // Gauss-Seidel sweeps in fixed state order over the undetermined states.
    let undetermined: Vec<usize> =
        (0..n).filter(|&s| !goal[s] && !zero[s] && sat1[s]).collect();
    let mut residual = 0.0f64;
    let mut iterations = 0;
    for sweep in 0..VI_MAX_SWEEPS {
        iterations = sweep + 1;
        residual = 0.0;
        for &s in &undetermined {
            let mut best: Option<(f64, usize)> = None;
            for row in mdp.rows_of_state(s) {
                let q: f64 = row.probs.iter().map(|(t, p)| p * values[*t]).sum();
                let better = match (&best, which) {
                    (None, _) => true,
                    (Some((b, _)), Extremum::Min) => q < *b,
                    (Some((b, _)), Extremum::Max) => q > *b,
                };
                if better {
                    best = Some((q, row.action));
                }
            }
            let (v, a) = best.expect("state without actions");
            residual = residual.max((v - values[s]).abs());
            values[s] = v;
            strategy[s] = a;
        }
        if residual < VI_TOLERANCE {
            return Ok(ReachResult { values, strategy, iterations, residual });
        }
    }
    Err(PctlError::NonConvergence(VI_MAX_SWEEPS))
}

fn ensure_propositional(f: &StateFormula) -> Result<(), PctlError> {
    // The AST cannot express nesting (the parser rejects it), so this always
    // succeeds; kept as the contract check for programmatic construction.
    let _ = f;
    Ok(())
}

/// Minimum over deterministic memoryless strategies of `P(s, phi1 U phi2)`.
pub fn min_until_probability(
    mdp: &Mdp,
    phi1: &StateFormula,
    phi2: &StateFormula,
) -> Result<ReachResult, PctlError> {
    ensure_propositional(phi1)?;
    ensure_propositional(phi2)?;
    extremal_until(mdp, phi1, phi2, Extremum::Min)
}

/// Extremal one-step probability of `X phi`.
pub fn extremal_next(mdp: &Mdp, phi: &StateFormula, which: Extremum) -> ReachResult {
    let n = mdp.n_states();
    let target: Vec<f64> = (0..n).map(|s| if phi.holds(mdp, s) { 1.0 } else { 0.0 }).collect();
    let mut values = vec![0.0f64; n];
    let mut strategy: Vec<usize> = (0..n).map(|s| first_enabled(mdp, s)).collect();
    for s in 0..n {
        let mut best: Option<(f64, usize)> = None;
        for row in mdp.rows_of_state(s) {
            let q: f64 = row.probs.iter().map(|(t, p)| p * target[*t]).sum();
            let better = match (&best, which) {
                (None, _) => true,
                (Some((b, _)), Extremum::Min) => q < *b,
                (Some((b, _)), Extremum::Max) => q > *b,
            };
            if better {
                best = Some((q, row.action));
            }
        }
        let (v, a) = best.expect("state without actions");
        values[s] = v;
        strategy[s] = a;
    }
    ReachResult { values, strategy, iterations: 1, residual: 0.0 }
}

/// Extremal value of the property's path formula, per state.
pub fn extremal_value(mdp: &Mdp, prop: &Property) -> Result<ReachResult, PctlError> {
    let which = prop.op.extremum();
    match &prop.path {
        PathFormula::Until(a, b) => extremal_until(mdp, a, b, which),
        PathFormula::Next(f) => Ok(extremal_next(mdp, f, which)),
    }
}

/// `mdp |= prop` under the all-strategies semantics: the extremal value must
/// satisfy the bound at every initial state.
pub fn satisfies(mdp: &Mdp, prop: &Property) -> Result<bool, PctlError> {
    let res = extremal_value(mdp, prop)?;
    Ok(mdp
        .initial
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .all(|(s, _)| prop.op.holds(res.values[*s], prop.threshold)))
}

/// Worst-case initial-state value for the property's comparison: the value
/// that `satisfies` effectively compares against the threshold.
pub fn decision_value(mdp: &Mdp, prop: &Property) -> Result<f64, PctlError> {
    let res = extremal_value(mdp, prop)?;
    let vals = mdp.initial.iter().filter(|(_, p)| *p > 0.0).map(|(s, _)| res.values[*s]);
    Ok(match prop.op {
        // For lower bounds the binding initial state is the one with the
        // smallest minimum; for upper bounds the largest maximum.
        CmpOp::Ge | CmpOp::Gt => vals.fold(f64::INFINITY, f64::min),
        CmpOp::Le | CmpOp::Lt => vals.fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Evaluate a fixed memoryless strategy as a Markov chain (used by witness
/// checks and the brute-force oracle).
pub fn until_value_under_strategy(
    mdp: &Mdp,
    phi1: &StateFormula,
    phi2: &StateFormula,
    strategy: &[usize],
) -> Result<Vec<f64>, PctlError> {
    let restricted = Mdp {
        state_names: mdp.state_names.clone(),
        labels: mdp.labels.clone(),
        action_names: mdp.action_names.clone(),
        initial: mdp.initial.clone(),
        rows: mdp
            .rows
            .iter()
            .filter(|r| strategy[r.state] == r.action)
            .cloned()
            .collect(),
    };
    Ok(extremal_until(&restricted, phi1, phi2, Extremum::Min)?.values)
}

/// Set of states outside the declared goal/zero partitions is empty exactly
/// when the qualitative sets decide everything.
pub fn qualitative_sets(
    mdp: &Mdp,
    phi1: &StateFormula,
    phi2: &StateFormula,
    which: Extremum,
) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let n = mdp.n_states();
    let goal: Vec<bool> = (0..n).map(|s| phi2.holds(mdp, s)).collect();
    let sat1: Vec<bool> = (0..n).map(|s| phi1.holds(mdp, s)).collect();
    let zero = prob0_states(mdp, &sat1, &goal, which);
    (
        (0..n).filter(|&s| goal[s]).collect(),
        (0..n).filter(|&s| zero[s]).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    fn labelled_single_state() -> Mdp {
        parse_model(
            r#"{
                "parameters": [],
                "states": [{"name": "s0", "labels": ["g"]}],
                "initial": {"s0": 1.0},
                "transitions": [{"from": "s0", "action": "a", "to": "s0", "prob": "1"}]
            }"#,
        )
        .unwrap()
        .instantiate(&[])
        .unwrap()
    }

    #[test]
    fn parses_until_property() {
        let p = parse_property("P>=0.5 [ true U \"complete\" ]").unwrap();
        assert_eq!(p.op, CmpOp::Ge);
        assert_eq!(p.threshold, 0.5);
        match &p.path {
            PathFormula::Until(StateFormula::True, StateFormula::Atom(a)) => {
                assert_eq!(a, "complete")
            }
            other => panic!("unexpected path {other:?}"),
        }
    }

    #[test]
    fn parses_fig3_property() {
        let p = parse_property("P<=0.5 [ true U \"s1\" ]").unwrap();
        assert_eq!(p.op, CmpOp::Le);
    }

    #[test]
    fn rejects_nesting() {
        let err = parse_property("P>=0.2 [ P>=0.1 [ true U \"a\" ] U \"a\" ]").unwrap_err();
        assert!(matches!(err, PctlError::Nesting));
    }

    #[test]
    fn goal_state_has_probability_one() {
        let mdp = labelled_single_state();
        let res =
            min_until_probability(&mdp, &StateFormula::True, &StateFormula::Atom("g".into()))
                .unwrap();
        assert_eq!(res.values[0], 1.0);
    }

    #[test]
    fn minimisation_picks_smaller_action() {
        // s0 with a1 reaching goal w.p. 0.8 and a2 w.p. 0.3.
        let mdp = parse_model(
            r#"{
                "parameters": [],
                "states": [{"name": "s0"}, {"name": "goal", "labels": ["g"]}, {"name": "sink"}],
                "initial": {"s0": 1.0},
                "transitions": [
                    {"from": "s0", "action": "a1", "to": "goal", "prob": "4/5"},
                    {"from": "s0", "action": "a1", "to": "sink", "prob": "1/5"},
                    {"from": "s0", "action": "a2", "to": "goal", "prob": "3/10"},
                    {"from": "s0", "action": "a2", "to": "sink", "prob": "7/10"},
                    {"from": "goal", "action": "a1", "to": "goal", "prob": "1"},
                    {"from": "sink", "action": "a1", "to": "sink", "prob": "1"}
                ]
            }"#,
        )
        .unwrap()
        .instantiate(&[])
        .unwrap();
        let res =
            min_until_probability(&mdp, &StateFormula::True, &StateFormula::Atom("g".into()))
                .unwrap();
        assert!((res.values[0] - 0.3).abs() < 1e-9, "{}", res.values[0]);
        assert_eq!(mdp.action_names[res.strategy[0]], "a2");
    }

    #[test]
    fn boundary_thresholds_strict_vs_nonstrict() {
        let mdp = labelled_single_state();
        // min probability is exactly 1.0 here; use threshold 1.0.
        let ge = parse_property("P>=1 [ true U \"g\" ]").unwrap();
        let gt = parse_property("P>1 [ true U \"g\" ]").unwrap();
        assert!(satisfies(&mdp, &ge).unwrap());
        assert!(!satisfies(&mdp, &gt).unwrap());
    }

    #[test]
    fn qualitative_zero_states_are_exact() {
        let mdp = parse_model(
            r#"{
                "parameters": [],
                "states": [{"name": "s0"}, {"name": "goal", "labels": ["g"]}, {"name": "sink"}],
                "initial": {"s0": 1.0},
                "transitions": [
                    {"from": "s0", "action": "a1", "to": "goal", "prob": "1/2"},
                    {"from": "s0", "action": "a1", "to": "sink", "prob": "1/2"},
                    {"from": "s0", "action": "a2", "to": "sink", "prob": "1"},
                    {"from": "goal", "action": "a1", "to": "goal", "prob": "1"},
                    {"from": "sink", "action": "a1", "to": "sink", "prob": "1"}
                ]
            }"#,
        )
        .unwrap()
        .instantiate(&[])
        .unwrap();
        let t = StateFormula::True;
        let g = StateFormula::Atom("g".into());
        // Min: s0 can avoid the goal entirely via a2.
        let res = min_until_probability(&mdp, &t, &g).unwrap();
        assert_eq!(res.values[0], 0.0);
        assert_eq!(res.values[2], 0.0);
        // Max: s0 reaches with probability 1/2.
        let res = extremal_until(&mdp, &t, &g, Extremum::Max).unwrap();
        assert!((res.values[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn next_operator_one_step_minimisation() {
        let mdp = parse_model(
            r#"{
                "parameters": [],
                "states": [{"name": "s0"}, {"name": "goal", "labels": ["g"]}],
                "initial": {"s0": 1.0},
                "transitions": [
                    {"from": "s0", "action": "a1", "to": "goal", "prob": "3/4"},
                    {"from": "s0", "action": "a1", "to": "s0", "prob": "1/4"},
                    {"from": "s0", "action": "a2", "to": "s0", "prob": "1"},
                    {"from": "goal", "action": "a1", "to": "goal", "prob": "1"}
                ]
            }"#,
        )
        .unwrap()
        .instantiate(&[])
        .unwrap();
        let p = parse_property("P>=0.5 [ X \"g\" ]").unwrap();
        // Min over actions of one-step goal probability is 0 (a2).
        assert!(!satisfies(&mdp, &p).unwrap());
        let res = extremal_next(&mdp, &StateFormula::Atom("g".into()), Extremum::Max);
        assert!((res.values[0] - 0.75).abs() < 1e-12);
    }
}
