//! Parametric MDP domain types, model-file parsing, validation, and
//! instantiation of induced MDPs.
//!
//! Transition probabilities are affine expressions over named parameters,
//! stored as exact rationals so that row-sum validation is exact; conversion
//! to binary floats happens only at evaluation time.

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Exact rational coefficient.
pub type Rat = Ratio<i128>;

/// A parameter evaluation, indexed by declaration order.
pub type ParamPoint = Vec<f64>;

/// Slack used when checking evaluated probabilities.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("syntax error in expression `{expr}` at offset {offset}: {message}")]
    ExprSyntax { expr: String, offset: usize, message: String },
    #[error("semantic error: {0}")]
    Semantic(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error(
        "probability out of range: transition {from} --{action}--> {to} expression `{expr}` \
         evaluates to {value} at {point}"
    )]
    OutOfRange { from: String, action: String, to: String, expr: String, value: f64, point: String },
    #[error("parameter point {0} outside parameter space")]
    PointOutsideSpace(String),
}

// ---------------------------------------------------------------------------
// Affine expressions
// ---------------------------------------------------------------------------

/// Affine expression `k0 + k1*theta_i1 + ... + kn*theta_in` with exact
/// rational coefficients. Complements such as `1 - theta - 1/4` carry
/// negative coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineExpr {
    /// Original source text, kept for faithful printing and error messages.
    pub source: String,
    pub constant: Rat,
    /// (parameter index, coefficient), sorted by index, no zero or duplicate
    /// entries.
    pub terms: Vec<(usize, Rat)>,
}

impl AffineExpr {
    pub fn constant(c: Rat) -> Self {
        let mut e = AffineExpr { source: String::new(), constant: c, terms: vec![] };
        e.source = e.canonical(&[]);
        e
    }

    /// `k * theta_j` as a bare term (k defaults to 1 for a bare parameter).
    pub fn scaled_param(k: Rat, j: usize, names: &[String]) -> Self {
        let mut e = AffineExpr { source: String::new(), constant: Rat::zero(), terms: vec![(j, k)] };
        e.normalize();
        e.source = e.canonical(names);
        e
    }

    /// `1 - theta_j`.
    pub fn one_minus_param(j: usize, names: &[String]) -> Self {
        let mut e = AffineExpr {
            source: String::new(),
            constant: Rat::from_integer(1),
            terms: vec![(j, -Rat::from_integer(1))],
        };
        e.source = e.canonical(names);
        e
    }

    fn normalize(&mut self) {
        self.terms.sort_by_key(|(j, _)| *j);
        self.terms.retain(|(_, k)| !k.is_zero());
    }

    pub fn evaluate(&self, theta: &[f64]) -> f64 {
        let mut v = rat_to_f64(self.constant);
        for (j, k) in &self.terms {
            v += rat_to_f64(*k) * theta[*j];
        }
        v
    }

    pub fn is_const(&self) -> bool {
        self.terms.is_empty()
    }

    /// `Some(j)` when the expression is exactly the bare parameter `theta_j`.
    pub fn as_bare_param(&self) -> Option<usize> {
        match (self.constant.is_zero(), self.terms.as_slice()) {
            (true, [(j, k)]) if *k == Rat::from_integer(1) => Some(*j),
            _ => None,
        }
    }

    /// `Some(j)` when the expression is exactly `1 - theta_j`.
    pub fn as_one_minus_param(&self) -> Option<usize> {
        match (self.constant == Rat::from_integer(1), self.terms.as_slice()) {
            (true, [(j, k)]) if *k == -Rat::from_integer(1) => Some(*j),
            _ => None,
        }
    }

    /// `Some((k, j))` when the expression is a single scaled term `k*theta_j`.
    pub fn as_scaled_param(&self) -> Option<(Rat, usize)> {
        match (self.constant.is_zero(), self.terms.as_slice()) {
            (true, [(j, k)]) => Some((*k, *j)),
            _ => None,
        }
    }

    /// All coefficients nonnegative (the `g`-form of the linear
    /// parameterisation).
    pub fn is_nonneg_form(&self) -> bool {
        !self.constant.is_negative() && self.terms.iter().all(|(_, k)| !k.is_negative())
    }

    pub fn params(&self) -> impl Iterator<Item = usize> + '_ {
        self.terms.iter().map(|(j, _)| *j)
    }

    /// Canonical rendering `k0 + k1*name - k2*name`.
    pub fn canonical(&self, names: &[String]) -> String {
        let mut out = String::new();
        let mut first = true;
        if !self.constant.is_zero() || self.terms.is_empty() {
            out.push_str(&rat_to_string(self.constant));
            first = false;
        }
        for (j, k) in &self.terms {
            let name = names.get(*j).cloned().unwrap_or_else(|| format!("p{j}"));
            let mag = k.abs();
            let piece = if mag == Rat::from_integer(1) {
                name
            } else {
                format!("{}*{}", rat_to_string(mag), name)
            };
            if first {
                if k.is_negative() {
                    out.push_str(&format!("0 - {piece}"));
                } else {
                    out.push_str(&piece);
                }
                first = false;
            } else if k.is_negative() {
                out.push_str(&format!(" - {piece}"));
            } else {
                out.push_str(&format!(" + {piece}"));
            }
        }
        out
    }

    /// Symbolic sum, used by lineage-aggregation checks.
    pub fn add(&self, other: &AffineExpr, names: &[String]) -> AffineExpr {
        let mut terms: BTreeMap<usize, Rat> = BTreeMap::new();
        for (j, k) in self.terms.iter().chain(other.terms.iter()) {
            *terms.entry(*j).or_insert_with(Rat::zero) += *k;
        }
        let mut e = AffineExpr {
            source: String::new(),
            constant: self.constant + other.constant,
            terms: terms.into_iter().collect(),
        };
        e.normalize();
        e.source = e.canonical(names);
        e
    }

    /// Symbolic product. Only defined when at most one factor is
    /// non-constant; panics otherwise (expansion gadgets never multiply two
    /// parameterised factors).
    pub fn mul(&self, other: &AffineExpr, names: &[String]) -> AffineExpr {
        assert!(
            self.is_const() || other.is_const(),
            "affine product of two non-constant expressions"
        );
        let (c, e) = if self.is_const() { (self.constant, other) } else { (other.constant, self) };
        let mut out = AffineExpr {
            source: String::new(),
            constant: e.constant * c,
            terms: e.terms.iter().map(|(j, k)| (*j, *k * c)).collect(),
        };
        out.normalize();
        out.source = out.canonical(names);
        out
    }

    /// Structural equality ignoring source text.
    pub fn same_function(&self, other: &AffineExpr) -> bool {
        self.constant == other.constant && self.terms == other.terms
    }
}

pub fn rat_to_f64(r: Rat) -> f64 {
    r.to_f64().expect("rational out of f64 range")
}

pub fn rat_to_string(r: Rat) -> String {
    if r.is_integer() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

// ---------------------------------------------------------------------------
// Expression parsing
// ---------------------------------------------------------------------------

struct ExprParser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ExprParser<'a> {
    fn err(&self, message: impl Into<String>) -> ModelError {
        ModelError::ExprSyntax {
            expr: self.src.to_string(),
            offset: self.pos,
            message: message.into(),
        }
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

    fn parse_rational(&mut self) -> Result<Rat, ModelError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected number"));
        }
        let int_part: i128 = self.src[start..self.pos]
            .parse()
            .map_err(|_| self.err("number too large"))?;
        match self.bytes.get(self.pos) {
            Some(b'/') => {
                self.pos += 1;
                let dstart = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                if self.pos == dstart {
                    return Err(self.err("expected denominator"));
                }
                let den: i128 = self.src[dstart..self.pos]
                    .parse()
                    .map_err(|_| self.err("denominator too large"))?;
                if den == 0 {
                    return Err(self.err("zero denominator"));
                }
                Ok(Rat::new(int_part, den))
            }
            Some(b'.') => {
                self.pos += 1;
                let fstart = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                if self.pos == fstart {
                    return Err(self.err("expected fractional digits"));
                }
                let frac = &self.src[fstart..self.pos];
                let scale = 10i128.pow(frac.len() as u32);
                let frac_num: i128 = frac.parse().map_err(|_| self.err("fraction too long"))?;
                Ok(Rat::from_integer(int_part) + Rat::new(frac_num, scale))
            }
            _ => Ok(Rat::from_integer(int_part)),
        }
    }

    fn parse_ident(&mut self) -> Result<&'a str, ModelError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected identifier"));
        }
        Ok(&self.src[start..self.pos])
    }

    /// term := rational | rational '*' param | param
    fn parse_term(&mut self, params: &BTreeMap<String, usize>) -> Result<(Rat, Option<usize>), ModelError> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() => {
                let k = self.parse_rational()?;
                if self.peek() == Some(b'*') {
                    self.pos += 1;
                    let name = self.parse_ident()?;
                    let j = *params
                        .get(name)
                        .ok_or_else(|| ModelError::UnknownParam(name.to_string()))?;
                    Ok((k, Some(j)))
                } else {
                    Ok((k, None))
                }
            }
            Some(_) => {
                let name = self.parse_ident()?;
                let j = *params
                    .get(name)
                    .ok_or_else(|| ModelError::UnknownParam(name.to_string()))?;
                Ok((Rat::from_integer(1), Some(j)))
            }
            None => Err(self.err("unexpected end of expression")),
        }
    }
}

/// Parse the probability-expression grammar
/// `expr := term (('+'|'-') term)*; term := rational | rational '*' param | param`.
pub fn parse_expr(src: &str, params: &BTreeMap<String, usize>) -> Result<AffineExpr, ModelError> {
    let mut p = ExprParser { src, bytes: src.as_bytes(), pos: 0 };
    let mut constant = Rat::zero();
    let mut terms: BTreeMap<usize, Rat> = BTreeMap::new();
    let mut sign = Rat::from_integer(1);
    loop {
        let (k, j) = p.parse_term(params)?;
        match j {
            None => constant += sign * k,
            Some(j) => *terms.entry(j).or_insert_with(Rat::zero) += sign * k,
        }
        match p.peek() {
            Some(b'+') => {
                p.pos += 1;
                sign = Rat::from_integer(1);
            }
            Some(b'-') => {
                p.pos += 1;
                sign = -Rat::from_integer(1);
            }
            Some(_) => return Err(p.err("expected '+' or '-'")),
            None => break,
        }
    }
    let mut e = AffineExpr {
        source: src.trim().to_string(),
        constant,
        terms: terms.into_iter().collect(),
    };
    e.normalize();
    Ok(e)
}

// ---------------------------------------------------------------------------
// pMDP
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateDecl {
    pub name: String,
    pub labels: BTreeSet<String>,
}

/// One outgoing edge of a state-action row. Parallel edges with the same
/// target are kept distinct; they represent different stochastic outcomes
/// that happen to land on the same state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub to: usize,
    pub expr: AffineExpr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Row {
    pub state: usize,
    pub action: usize,
    pub edges: Vec<Edge>,
}

/// Parametric Markov decision process with affine transition expressions.
#[derive(Clone, Debug, PartialEq)]
pub struct Pmdp {
    pub params: Vec<ParamDecl>,
    pub states: Vec<StateDecl>,
    /// Global action-name registry, in first-use order.
    pub actions: Vec<String>,
    /// Rows in declaration order; one per enabled (state, action) pair.
    pub rows: Vec<Row>,
    /// (state, action) -> row index.
    pub row_lookup: BTreeMap<(usize, usize), usize>,
    /// Initial distribution, (state, probability), in state order.
    pub initial: Vec<(usize, f64)>,
}

impl Pmdp {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn state_index(&self, name: &str) -> Result<usize, ModelError> {
        self.states
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| ModelError::UnknownState(name.to_string()))
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    /// Enabled actions of `s`, in declaration order.
    pub fn enabled_actions(&self, s: usize) -> Result<Vec<usize>, ModelError> {
        if s >= self.states.len() {
            return Err(ModelError::UnknownState(format!("#{s}")));
        }
        Ok(self.rows.iter().filter(|r| r.state == s).map(|r| r.action).collect())
    }

    pub fn rows_of_state(&self, s: usize) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(move |r| r.state == s)
    }

    pub fn row(&self, s: usize, a: usize) -> Option<&Row> {
        self.row_lookup.get(&(s, a)).map(|&i| &self.rows[i])
    }

    /// The parameter hyper-box together with the validity predicate induced
    /// by the transition expressions.
    pub fn param_space(&self) -> ParamSpace {
        ParamSpace::from_model(self)
    }

    /// Checks every structural invariant; called after parsing and after
    /// programmatic construction.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = BTreeSet::new();
        for st in &self.states {
            if !seen.insert(&st.name) {
                return Err(ModelError::Semantic(format!("duplicate state `{}`", st.name)));
            }
            if st.name.starts_with("__aux") && !st.labels.is_empty() {
                return Err(ModelError::Semantic(format!(
                    "auxiliary state `{}` must not carry labels",
                    st.name
                )));
            }
        }
        let mut pseen = BTreeSet::new();
        for p in &self.params {
            if !pseen.insert(&p.name) {
                return Err(ModelError::Semantic(format!("duplicate parameter `{}`", p.name)));
            }
            if !(0.0 <= p.lo && p.lo <= p.hi && p.hi <= 1.0) {
                return Err(ModelError::Semantic(format!(
                    "parameter `{}` bounds [{}, {}] not within [0,1]",
                    p.name, p.lo, p.hi
                )));
            }
        }
        // Every state needs at least one action.
        for (s, st) in self.states.iter().enumerate() {
            if !self.rows.iter().any(|r| r.state == s) {
                return Err(ModelError::Semantic(format!(
                    "state `{}` has no enabled actions",
                    st.name
                )));
            }
        }
        // Exact row-sum check: constants sum to 1 and every parameter's net
        // coefficient cancels, so the row sums to 1 identically in theta.
        for row in &self.rows {
            let mut csum = Rat::zero();
            let mut coeff: BTreeMap<usize, Rat> = BTreeMap::new();
            for e in &row.edges {
                csum += e.expr.constant;
                for (j, k) in &e.expr.terms {
                    *coeff.entry(*j).or_insert_with(Rat::zero) += *k;
                }
                if e.expr.constant.abs() > Rat::from_integer(1) {
                    return Err(ModelError::Semantic(format!(
                        "expression `{}` constant outside [-1,1]",
                        e.expr.source
                    )));
                }
                for (_, k) in &e.expr.terms {
                    if k.abs() > Rat::from_integer(1) {
                        return Err(ModelError::Semantic(format!(
                            "expression `{}` coefficient outside [-1,1]",
                            e.expr.source
                        )));
                    }
                }
            }
            if csum != Rat::from_integer(1) || coeff.values().any(|k| !k.is_zero()) {
                let (sname, aname) =
                    (&self.states[row.state].name, &self.actions[row.action]);
                return Err(ModelError::Semantic(format!(
                    "row {sname}/{aname} does not sum to 1 identically (constants sum to {}, \
                     non-cancelling parameter coefficients present: {})",
                    rat_to_string(csum),
                    !coeff.values().all(|k| k.is_zero())
                )));
            }
        }
        // Initial distribution.
        if self.initial.is_empty() {
            return Err(ModelError::Semantic("empty initial distribution".into()));
        }
        let isum: f64 = self.initial.iter().map(|(_, p)| p).sum();
        if (isum - 1.0).abs() > PROB_EPS {
            return Err(ModelError::Semantic(format!("initial distribution sums to {isum}")));
        }
        for (s, p) in &self.initial {
            if *s >= self.states.len() || *p < 0.0 {
                return Err(ModelError::Semantic("bad initial distribution entry".into()));
            }
        }
        Ok(())
    }

    /// Instantiate the induced MDP at `theta`. Fails if any evaluated
    /// probability leaves [0,1]; nothing is silently renormalised.
    pub fn instantiate(&self, theta: &[f64]) -> Result<Mdp, ModelError> {
        if theta.len() != self.params.len() {
            return Err(ModelError::PointOutsideSpace(format!("{theta:?}")));
        }
        let mut rows = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let mut probs: BTreeMap<usize, f64> = BTreeMap::new();
            for e in &row.edges {
                let v = e.expr.evaluate(theta);
                if !(-PROB_EPS..=1.0 + PROB_EPS).contains(&v) {
                    return Err(ModelError::OutOfRange {
                        from: self.states[row.state].name.clone(),
                        action: self.actions[row.action].clone(),
                        to: self.states[e.to].name.clone(),
                        expr: e.expr.source.clone(),
                        value: v,
                        point: format!("{theta:?}"),
                    });
                }
                *probs.entry(e.to).or_insert(0.0) += v.clamp(0.0, 1.0);
            }
            let sum: f64 = probs.values().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ModelError::Semantic(format!(
                    "instantiated row sums to {sum} (exact validation should prevent this)"
                )));
            }
            rows.push(MdpRow {
                state: row.state,
                action: row.action,
                probs: probs.into_iter().filter(|(_, p)| *p > 0.0).collect(),
            });
        }
        Ok(Mdp {
            state_names: self.states.iter().map(|s| s.name.clone()).collect(),
            labels: self.states.iter().map(|s| s.labels.clone()).collect(),
            action_names: self.actions.clone(),
            initial: self.initial.clone(),
            rows,
        })
    }
}

/// Concrete MDP rows: probabilities merged over parallel edges, zero-mass
/// edges dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpRow {
    pub state: usize,
    pub action: usize,
    pub probs: Vec<(usize, f64)>,
}

/// Induced (concrete) MDP.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    pub state_names: Vec<String>,
    pub labels: Vec<BTreeSet<String>>,
    pub action_names: Vec<String>,
    pub initial: Vec<(usize, f64)>,
    pub rows: Vec<MdpRow>,
}

impl Mdp {
    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn rows_of_state(&self, s: usize) -> impl Iterator<Item = &MdpRow> {
        self.rows.iter().filter(move |r| r.state == s)
    }
}

// ---------------------------------------------------------------------------
// Parameter space
// ---------------------------------------------------------------------------

/// The parameter hyper-box plus the validity predicate (the sub-region where
/// every transition expression evaluates into [0,1]).
#[derive(Clone, Debug)]
pub struct ParamSpace {
    pub names: Vec<String>,
    /// Declared per-parameter bounds.
    pub declared: Vec<(f64, f64)>,
    /// Declared bounds tightened by every single-parameter transition
    /// expression (interval arithmetic; multi-parameter expressions are
    /// handled pointwise by `is_valid`).
    pub valid_box: Vec<(f64, f64)>,
    exprs: Vec<AffineExpr>,
}

impl ParamSpace {
    fn from_model(m: &Pmdp) -> ParamSpace {
        let declared: Vec<(f64, f64)> = m.params.iter().map(|p| (p.lo, p.hi)).collect();
        let mut valid_box = declared.clone();
        let mut exprs = Vec::new();
        for row in &m.rows {
            for e in &row.edges {
                exprs.push(e.expr.clone());
                if e.expr.terms.len() == 1 {
                    let (j, k) = e.expr.terms[0];
                    let k0 = rat_to_f64(e.expr.constant);
                    let kf = rat_to_f64(k);
                    // Solve 0 <= k0 + k*t <= 1 for t.
                    let (lo, hi) = if kf > 0.0 {
                        ((0.0 - k0) / kf, (1.0 - k0) / kf)
                    } else {
                        ((1.0 - k0) / kf, (0.0 - k0) / kf)
                    };
                    let b = &mut valid_box[j];
                    b.0 = b.0.max(lo);
                    b.1 = b.1.min(hi);
                }
            }
        }
        ParamSpace { names: m.param_names(), declared, valid_box, exprs }
    }

    pub fn dimension(&self) -> usize {
        self.names.len()
    }

    pub fn in_declared_box(&self, theta: &[f64]) -> bool {
        theta.len() == self.declared.len()
            && theta
                .iter()
                .zip(&self.declared)
                .all(|(t, (lo, hi))| *t >= lo - PROB_EPS && *t <= hi + PROB_EPS)
    }

    /// Full validity: inside the declared box and every transition
    /// expression evaluates into [0,1].
    pub fn is_valid(&self, theta: &[f64]) -> bool {
        self.in_declared_box(theta)
            && self.exprs.iter().all(|e| {
                let v = e.evaluate(theta);
                (-PROB_EPS..=1.0 + PROB_EPS).contains(&v)
            })
    }

    /// Clamp a point into the tightened box.
    pub fn clamp_to_valid_box(&self, theta: &[f64]) -> ParamPoint {
        theta
            .iter()
            .zip(&self.valid_box)
            .map(|(t, (lo, hi))| t.clamp(*lo, *hi))
            .collect()
    }

    /// Rejection-sample a valid point, uniform over the valid region.
    pub fn sample_valid(&self, rng: &mut crate::rng::CounterRng) -> ParamPoint {
        for _ in 0..10_000 {
            let theta: ParamPoint = self
                .valid_box
                .iter()
                .map(|(lo, hi)| rng.uniform_in(*lo, *hi))
                .collect();
            if self.is_valid(&theta) {
                return theta;
            }
        }
        panic!("validity region appears empty");
    }
}

// ---------------------------------------------------------------------------
// Model file format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ParamFile {
    name: String,
    bounds: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TransitionFile {
    from: String,
    action: String,
    to: String,
    prob: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    parameters: Vec<ParamFile>,
    states: Vec<StateFile>,
    initial: BTreeMap<String, f64>,
    transitions: Vec<TransitionFile>,
}

/// Parse and validate a model file.
pub fn parse_model(text: &str) -> Result<Pmdp, ModelError> {
    let file: ModelFile = serde_json::from_str(text)?;
    let params: Vec<ParamDecl> = file
        .parameters
        .iter()
        .map(|p| ParamDecl { name: p.name.clone(), lo: p.bounds[0], hi: p.bounds[1] })
        .collect();
    let pindex: BTreeMap<String, usize> =
        params.iter().enumerate().map(|(i, p)| (p.name.clone(), i)).collect();
    let states: Vec<StateDecl> = file
        .states
        .iter()
        .map(|s| StateDecl { name: s.name.clone(), labels: s.labels.iter().cloned().collect() })
        .collect();
    let sindex: BTreeMap<String, usize> =
        states.iter().enumerate().map(|(i, s)| (s.name.clone(), i)).collect();

    let mut actions: Vec<String> = Vec::new();
    let mut rows: Vec<Row> = Vec::new();
    let mut row_lookup: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for t in &file.transitions {
        let s = *sindex.get(&t.from).ok_or_else(|| ModelError::UnknownState(t.from.clone()))?;
        let to = *sindex.get(&t.to).ok_or_else(|| ModelError::UnknownState(t.to.clone()))?;
        let a = match actions.iter().position(|x| x == &t.action) {
            Some(a) => a,
            None => {
                actions.push(t.action.clone());
                actions.len() - 1
            }
        };
        let expr = parse_expr(&t.prob, &pindex)?;
        let row_id = *row_lookup.entry((s, a)).or_insert_with(|| {
            rows.push(Row { state: s, action: a, edges: vec![] });
            rows.len() - 1
        });
        rows[row_id].edges.push(Edge { to, expr });
    }

    let mut initial: Vec<(usize, f64)> = Vec::new();
    for (name, p) in &file.initial {
        let s = *sindex.get(name).ok_or_else(|| ModelError::UnknownState(name.clone()))?;
        initial.push((s, *p));
    }
    initial.sort_by_key(|(s, _)| *s);

    let m = Pmdp { params, states, actions, rows, row_lookup, initial };
    m.validate()?;
    Ok(m)
}

/// Print a model back to its file form; `parse_model(print_model(m))` is
/// structurally equal to `m`.
pub fn print_model(m: &Pmdp) -> String {
    let file = ModelFile {
        parameters: m
            .params
            .iter()
            .map(|p| ParamFile { name: p.name.clone(), bounds: [p.lo, p.hi] })
            .collect(),
        states: m
            .states
            .iter()
            .map(|s| StateFile { name: s.name.clone(), labels: s.labels.iter().cloned().collect() })
            .collect(),
        initial: m
            .initial
            .iter()
            .map(|(s, p)| (m.states[*s].name.clone(), *p))
            .collect(),
        transitions: m
            .rows
            .iter()
            .flat_map(|row| {
                row.edges.iter().map(move |e| TransitionFile {
                    from: m.states[row.state].name.clone(),
                    action: m.actions[row.action].clone(),
                    to: m.states[e.to].name.clone(),
                    prob: e.expr.source.clone(),
                })
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn two_state_chain() -> &'static str {
        r#"{
            "parameters": [{"name": "theta1", "bounds": [0.0, 1.0]}],
            "states": [{"name": "s0"}, {"name": "s1", "labels": ["goal"]}],
            "initial": {"s0": 1.0},
            "transitions": [
                {"from": "s0", "action": "a", "to": "s1", "prob": "theta1"},
                {"from": "s0", "action": "a", "to": "s0", "prob": "1 - theta1"},
                {"from": "s1", "action": "a", "to": "s1", "prob": "1"}
            ]
        }"#
    }

    #[test]
    fn parses_minimal_model() {
        let m = parse_model(two_state_chain()).unwrap();
        assert_eq!(m.n_params(), 1);
        assert_eq!(m.n_states(), 2);
        assert_eq!(m.rows.len(), 2);
        assert!(m.rows[0].edges[0].expr.as_bare_param() == Some(0));
        assert!(m.rows[0].edges[1].expr.as_one_minus_param() == Some(0));
    }

    #[test]
    fn rejects_row_not_summing_to_one() {
        let text = r#"{
            "parameters": [],
            "states": [{"name": "s0"}, {"name": "s1"}],
            "initial": {"s0": 1.0},
            "transitions": [
                {"from": "s0", "action": "a", "to": "s0", "prob": "0.5"},
                {"from": "s0", "action": "a", "to": "s1", "prob": "0.6"},
                {"from": "s1", "action": "a", "to": "s1", "prob": "1"}
            ]
        }"#;
        let err = parse_model(text).unwrap_err();
        assert!(matches!(err, ModelError::Semantic(_)), "{err}");
        assert!(err.to_string().contains("sum"), "{err}");
    }

    #[test]
    fn rejects_state_without_actions() {
        let text = r#"{
            "parameters": [],
            "states": [{"name": "s0"}, {"name": "dead"}],
            "initial": {"s0": 1.0},
            "transitions": [
                {"from": "s0", "action": "a", "to": "s0", "prob": "1"}
            ]
        }"#;
        let err = parse_model(text).unwrap_err();
        assert!(err.to_string().contains("no enabled actions"), "{err}");
    }

    #[test]
    fn expression_evaluation_example() {
        // k0 = 0.25, k1 = 0.5 at theta1 = 0.5 -> 0.5
        let pindex: BTreeMap<String, usize> = [("theta1".to_string(), 0)].into_iter().collect();
        let e = parse_expr("0.25 + 0.5*theta1", &pindex).unwrap();
        assert!((e.evaluate(&[0.5]) - 0.5).abs() < 1e-15);
        assert_eq!(e.constant, Rat::new(1, 4));
    }

    #[test]
    fn expression_syntax_error_reports_offset() {
        let pindex: BTreeMap<String, usize> = BTreeMap::new();
        let err = parse_expr("1 + + 2", &pindex).unwrap_err();
        match err {
            ModelError::ExprSyntax { offset, .. } => assert_eq!(offset, 4),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn instantiate_rejects_out_of_range() {
        let m = parse_model(two_state_chain()).unwrap();
        let err = m.instantiate(&[1.5]).unwrap_err();
        assert!(matches!(err, ModelError::OutOfRange { .. }));
    }

    #[test]
    fn print_parse_round_trip() {
        let m = parse_model(two_state_chain()).unwrap();
        let m2 = parse_model(&print_model(&m)).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn enabled_actions_consistent_with_rows() {
        let m = parse_model(two_state_chain()).unwrap();
        assert_eq!(m.enabled_actions(0).unwrap(), vec![0]);
        assert!(m.enabled_actions(5).is_err());
    }

    #[test]
    fn random_instantiations_have_unit_rows() {
        let m = parse_model(two_state_chain()).unwrap();
        let space = m.param_space();
        let mut rng = CounterRng::new(99);
        for _ in 0..1000 {
            let theta = space.sample_valid(&mut rng);
            let mdp = m.instantiate(&theta).unwrap();
            for row in &mdp.rows {
                let s: f64 = row.probs.iter().map(|(_, p)| p).sum();
                assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn parallel_edges_are_kept_distinct() {
        let text = r#"{
            "parameters": [{"name": "t", "bounds": [0.0, 1.0]}],
            "states": [{"name": "s0"}],
            "initial": {"s0": 1.0},
            "transitions": [
                {"from": "s0", "action": "a", "to": "s0", "prob": "t"},
                {"from": "s0", "action": "a", "to": "s0", "prob": "1 - t"}
            ]
        }"#;
        let m = parse_model(text).unwrap();
        assert_eq!(m.rows[0].edges.len(), 2);
        let mdp = m.instantiate(&[0.3]).unwrap();
        assert_eq!(mdp.rows[0].probs, vec![(0, 1.0)]);
    }
}
