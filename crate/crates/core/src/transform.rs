//! Model expansion for linearly parameterised pMDPs.
//!
//! Two passes rewrite transition probabilities towards the normal form
//! `{constant, theta_j, 1 - theta_j}`:
//!
//! * transition splitting replaces a multi-term edge
//!   `k0 + k1*t1 + ... + kn*tn` by per-term edges through fresh states that
//!   exit to the original target with probability one;
//! * state splitting replaces a scaled edge `k*t_j` (0 < k < 1) by a
//!   constant edge `k` into a fresh state that flips `t_j / 1 - t_j`,
//!   folding the flipped-away mass into the row's complement edge.
//!
//! Rows whose complement cannot absorb a peel (for example `1 - t - 1/4`
//! next to a bare `t` edge) are left as they are: such complements cannot be
//! made literal by any expansion that stays a valid model on the whole unit
//! box, and the count-extraction rules handle them directly. Reachability
//! between original states is preserved exactly in all cases.
//!
//! Fresh states live in the reserved `__aux` namespace and carry no labels,
//! so they never satisfy or violate a property operand.

use crate::model::{AffineExpr, Edge, Mdp, ModelError, ParamPoint, Pmdp, Rat, Row, StateDecl};
use crate::pctl::{extremal_value, PctlError, Property};
use num_traits::{Signed, Zero};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum TransformError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pctl(#[from] PctlError),
}

/// Provenance of an expanded edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeRole {
    /// Edge identical to an original edge.
    Untouched,
    /// Constant branch of a split multi-term edge.
    ConstBranch,
    /// Constant entry edge into a flip state (the `k` of `k*t_j`).
    CoeffBranch,
    /// `t_j` side of a flip state.
    ParamFlip(usize),
    /// `1 - t_j` side of a flip state.
    ParamComplement(usize),
    /// Complement edge after peeling mass into flip states.
    Residual,
    /// Probability-one exit of a transition-splitting fresh state.
    UnitExit,
}

/// Expanded edge identity: (row index, edge index) in the expanded model.
pub type EdgeId = (usize, usize);

#[derive(Clone, Debug)]
pub struct LineageEntry {
    /// Original transition (state, action, target) this edge derives from.
    pub origin: (usize, usize, usize),
    pub role: EdgeRole,
}

/// A path through the expanded model realising one original transition:
/// starts at an original state, traverses fresh states only, ends at an
/// original state.
#[derive(Clone, Debug)]
pub struct Route {
    pub edges: Vec<EdgeId>,
    /// Original target state.
    pub target: usize,
}

/// Expanded model plus the bookkeeping needed for count completion.
#[derive(Clone, Debug)]
pub struct ExpandedModel {
    pub model: Pmdp,
    /// Lineage per expanded edge id.
    pub lineage: BTreeMap<EdgeId, LineageEntry>,
    /// Routes per original (state, action), grouped by original target.
    pub routing: BTreeMap<(usize, usize), BTreeMap<usize, Vec<Route>>>,
    /// Number of original states (fresh states have indices >= this).
    pub n_original_states: usize,
    pub warnings: Vec<String>,
}

impl ExpandedModel {
    pub fn is_fresh(&self, s: usize) -> bool {
        s >= self.n_original_states
    }
}

fn is_multi_term_nonneg(e: &AffineExpr) -> bool {
    let n_terms = e.terms.len() + usize::from(!e.constant.is_zero());
    e.is_nonneg_form() && n_terms >= 2
}

/// Interval lower bound of an expression over the declared parameter box.
fn lower_bound_on_box(e: &AffineExpr, m: &Pmdp) -> f64 {
    let mut v = crate::model::rat_to_f64(e.constant);
    for (j, k) in &e.terms {
        let kf = crate::model::rat_to_f64(*k);
        let (lo, hi) = (m.params[*j].lo, m.params[*j].hi);
        v += if kf >= 0.0 { kf * lo } else { kf * hi };
    }
    v
}

/// Transition splitting: expand every multi-term nonnegative edge into
/// per-term edges through fresh unit-exit states. Single-term edges and
/// complement-form edges are untouched.
pub fn split_transitions(m: &Pmdp) -> Pmdp {
    let mut out = m.clone();
    let names = m.param_names();
    let mut fresh: Vec<(String, Vec<Row>)> = Vec::new();
    for row in &mut out.rows {
        let mut new_edges: Vec<Edge> = Vec::new();
        for (ei, e) in row.edges.iter().enumerate() {
            if !is_multi_term_nonneg(&e.expr) {
                new_edges.push(e.clone());
                continue;
            }
            let base = format!(
                "__aux_t_{}_{}_{}_{}",
                m.states[row.state].name, m.actions[row.action], m.states[e.to].name, ei
            );
            let mut term_exprs: Vec<AffineExpr> = Vec::new();
            if !e.expr.constant.is_zero() {
                term_exprs.push(AffineExpr::constant(e.expr.constant));
            }
            for (j, k) in &e.expr.terms {
                term_exprs.push(AffineExpr::scaled_param(*k, *j, &names));
            }
            for (ti, texpr) in term_exprs.into_iter().enumerate() {
                let fresh_name = format!("{base}_{ti}");
                // Placeholder index, fixed up after all states are known.
                fresh.push((fresh_name, vec![Row {
                    state: usize::MAX,
                    action: row.action,
                    edges: vec![Edge { to: e.to, expr: AffineExpr::constant(Rat::from_integer(1)) }],
                }]));
                new_edges.push(Edge {
                    to: m.states.len() + fresh.len() - 1,
                    expr: texpr,
                });
            }
        }
        row.edges = new_edges;
    }
    for (name, rows) in fresh {
        let idx = out.states.len();
        out.states.push(StateDecl { name, labels: Default::default() });
        for mut r in rows {
            r.state = idx;
            out.row_lookup.insert((idx, r.action), out.rows.len());
            out.rows.push(r);
        }
    }
    out.validate().expect("transition splitting preserves model invariants");
    out
}

/// State splitting on a transition-split model; returns the expanded model
/// with lineage and routing tables.
pub fn split_states(m: &Pmdp) -> ExpandedModel {
    split_model_internal(&split_transitions_identity(m))
}

// split_states is specified to run on the post-split_transitions model; the
// public `expand` below composes both passes. To keep lineage exact we track
// the original triple of every edge through both passes, so split_states
// needs the original-edge annotation produced by the first pass.
struct AnnotatedModel {
    model: Pmdp,
    /// Per row, per edge: original (state, action, target) plus a role.
    ann: Vec<Vec<((usize, usize, usize), EdgeRole)>>,
    n_original_states: usize,
    original_rows: Vec<(usize, usize)>,
}

fn split_transitions_identity(m: &Pmdp) -> AnnotatedModel {
    let split = split_transitions(m);
    let mut ann: Vec<Vec<((usize, usize, usize), EdgeRole)>> = Vec::new();
    for row in &split.rows {
        let mut entries = Vec::new();
        for e in &row.edges {
            if row.state >= m.n_states() {
                // Unit exit of a fresh state; origin recovered from its name
                // later (we know its single edge target is the original
                // target, and the action matches).
                entries.push(((usize::MAX, row.action, e.to), EdgeRole::UnitExit));
            } else {
                let role = match m.row(row.state, row.action) {
                    Some(orig_row)
                        if orig_row
                            .edges
                            .iter()
                            .any(|oe| oe.to == e.to && oe.expr.same_function(&e.expr)) =>
                    {
                        EdgeRole::Untouched
                    }
                    _ => {
                        if e.expr.is_const() {
                            EdgeRole::ConstBranch
                        } else {
                            EdgeRole::Untouched
                        }
                    }
                };
                entries.push(((row.state, row.action, e.to), role));
            }
        }
        ann.push(entries);
    }
    // Fix origins: edges pointing into fresh unit-exit states derive from
    // the original edge whose target is the fresh state's exit target.
    let n0 = m.n_states();
    let exit_target: BTreeMap<usize, usize> = split
        .rows
        .iter()
        .filter(|r| r.state >= n0)
        .map(|r| (r.state, r.edges[0].to))
        .collect();
    for (ri, row) in split.rows.iter().enumerate() {
        for (ei, e) in row.edges.iter().enumerate() {
            if row.state < n0 {
                if let Some(&t) = exit_target.get(&e.to) {
                    ann[ri][ei].0 = (row.state, row.action, t);
                    if ann[ri][ei].1 == EdgeRole::Untouched {
                        ann[ri][ei].1 = if e.expr.is_const() {
                            EdgeRole::ConstBranch
                        } else {
                            // Single scaled term heading for a flip in pass 2.
                            EdgeRole::Untouched
                        };
                    }
                }
            } else {
                let t = exit_target[&row.state];
                // Reconstruct which original row this fresh state belongs to
                // from the edges pointing at it.
                ann[ri][ei].0 = (usize::MAX, row.action, t);
            }
        }
    }
    // Second sweep to give unit exits their true origin (owner state).
    let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
    for row in split.rows.iter().filter(|r| r.state < n0) {
        for e in &row.edges {
            if e.to >= n0 {
                owner.insert(e.to, row.state);
            }
        }
    }
    for (ri, row) in split.rows.iter().enumerate() {
        if row.state >= n0 {
            let s = owner[&row.state];
            let t = exit_target[&row.state];
            for entry in ann[ri].iter_mut() {
                entry.0 = (s, row.action, t);
            }
        }
    }
    let original_rows = m.rows.iter().map(|r| (r.state, r.action)).collect();
    AnnotatedModel { model: split, ann, n_original_states: n0, original_rows }
}

fn split_model_internal(input: &AnnotatedModel) -> ExpandedModel {
    let mut model = input.model.clone();
    let mut ann = input.ann.clone();
    let names = model.param_names();
    let mut warnings: Vec<String> = Vec::new();
    let one = Rat::from_integer(1);

    let n_rows = model.rows.len();
    let mut fresh_rows: Vec<(Row, Vec<((usize, usize, usize), EdgeRole)>)> = Vec::new();
    for ri in 0..n_rows {
        // Drop identically-zero edges.
        let mut keep = Vec::new();
        for (ei, e) in model.rows[ri].edges.iter().enumerate() {
            if e.expr.constant.is_zero() && e.expr.terms.is_empty() {
                warnings.push(format!(
                    "dropping zero-probability edge {} --{}--> {}",
                    model.states[model.rows[ri].state].name,
                    model.actions[model.rows[ri].action],
                    model.states[e.to].name
                ));
            } else {
                keep.push(ei);
            }
        }
        if keep.len() != model.rows[ri].edges.len() {
            model.rows[ri].edges = keep.iter().map(|&i| model.rows[ri].edges[i].clone()).collect();
            ann[ri] = keep.iter().map(|&i| ann[ri][i].clone()).collect();
        }

        // Identify scaled-parameter edges (0 < k < 1) and the complement
        // edge that will absorb their flipped-away mass.
        let scaled: Vec<usize> = model.rows[ri]
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                matches!(e.expr.as_scaled_param(), Some((k, _)) if k != one && k.is_positive())
            })
            .map(|(i, _)| i)
            .collect();
        if scaled.is_empty() {
            continue;
        }
        let complement: Vec<usize> = model.rows[ri]
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                !e.expr.is_const()
                    && e.expr.as_scaled_param().is_none()
                    && e.expr.terms.iter().any(|(_, k)| k.is_negative())
            })
            .map(|(i, _)| i)
            .collect();
        if complement.len() != 1 {
            warnings.push(format!(
                "row {}/{} has {} complement edges; scaled edges left unsplit",
                model.states[model.rows[ri].state].name,
                model.actions[model.rows[ri].action],
                complement.len()
            ));
            continue;
        }
        let ci = complement[0];

        for &si in &scaled {
            let (k, j) = model.rows[ri].edges[si].expr.as_scaled_param().unwrap();
            let target = model.rows[ri].edges[si].to;
            let comp_target = model.rows[ri].edges[ci].to;
            // New complement after folding k*(1 - theta_j) into the flip:
            // C' = C - k + k*theta_j.
            let mut new_comp = model.rows[ri].edges[ci]
                .expr
                .add(&AffineExpr::scaled_param(k, j, &names), &names);
            new_comp = new_comp.add(&AffineExpr::constant(-k), &names);
            if lower_bound_on_box(&new_comp, &model) < 0.0 {
                warnings.push(format!(
                    "row {}/{}: complement `{}` cannot absorb peel of `{}`; edge left unsplit",
                    model.states[model.rows[ri].state].name,
                    model.actions[model.rows[ri].action],
                    model.rows[ri].edges[ci].expr.source,
                    model.rows[ri].edges[si].expr.source
                ));
                continue;
            }
            let (s, a, orig_t) = ann[ri][si].0;
            let comp_origin = ann[ri][ci].0;
            let fresh_name = format!(
                "__aux_s_{}_{}_{}_{}",
                model.states[s].name, model.actions[a], model.states[target].name, si
            );
            let fidx = model.states.len();
            // Entry edge replaces the scaled edge.
            model.rows[ri].edges[si] =
                Edge { to: fidx, expr: AffineExpr::constant(k) };
            ann[ri][si] = ((s, a, orig_t), EdgeRole::CoeffBranch);
            // Complement shrinks (or vanishes).
            model.rows[ri].edges[ci].expr = new_comp.clone();
            ann[ri][ci] = (comp_origin, EdgeRole::Residual);
            // Flip state.
            let flip_row = Row {
                state: fidx,
                action: a,
                edges: vec![
                    Edge { to: target, expr: AffineExpr::scaled_param(one, j, &names) },
                    Edge { to: comp_target, expr: AffineExpr::one_minus_param(j, &names) },
                ],
            };
            let flip_ann = vec![
                ((s, a, orig_t), EdgeRole::ParamFlip(j)),
                (comp_origin, EdgeRole::ParamComplement(j)),
            ];
            fresh_rows.push((flip_row, flip_ann));
            model.states.push(StateDecl { name: fresh_name, labels: Default::default() });
        }
        // Remove a complement that peeled away entirely.
        if model.rows[ri].edges[ci].expr.constant.is_zero()
            && model.rows[ri].edges[ci].expr.terms.is_empty()
        {
            model.rows[ri].edges.remove(ci);
            ann[ri].remove(ci);
        }
    }
    for (row, a) in fresh_rows {
        model.row_lookup.insert((row.state, row.action), model.rows.len());
        model.rows.push(row);
        ann.push(a);
    }
    model.validate().expect("state splitting preserves model invariants");

    // Lineage map.
    let mut lineage: BTreeMap<EdgeId, LineageEntry> = BTreeMap::new();
    for (ri, entries) in ann.iter().enumerate() {
        for (ei, (origin, role)) in entries.iter().enumerate() {
            lineage.insert((ri, ei), LineageEntry { origin: *origin, role: *role });
        }
    }

    // Routing: enumerate expanded paths per original row.
    let mut routing: BTreeMap<(usize, usize), BTreeMap<usize, Vec<Route>>> = BTreeMap::new();
    let n0 = input.n_original_states;
    for &(s, a) in &input.original_rows {
        let row_idx = model.row_lookup[&(s, a)];
        let mut routes: Vec<Route> = Vec::new();
        let mut stack: Vec<Vec<EdgeId>> = model.rows[row_idx]
            .edges
            .iter()
            .enumerate()
            .map(|(ei, _)| vec![(row_idx, ei)])
            .collect();
        while let Some(path) = stack.pop() {
            let &(ri, ei) = path.last().unwrap();
            let to = model.rows[ri].edges[ei].to;
            if to < n0 {
                routes.push(Route { edges: path, target: to });
            } else {
                let fri = model.row_lookup[&(to, a)];
                for fei in 0..model.rows[fri].edges.len() {
                    let mut next = path.clone();
                    next.push((fri, fei));
                    stack.push(next);
                }
            }
        }
        // Deterministic order: by (target, edge ids).
        routes.sort_by(|x, y| (x.target, &x.edges).cmp(&(y.target, &y.edges)));
        let mut by_target: BTreeMap<usize, Vec<Route>> = BTreeMap::new();
        for r in routes {
            by_target.entry(r.target).or_default().push(r);
        }
        routing.insert((s, a), by_target);
    }

    ExpandedModel { model, lineage, routing, n_original_states: n0, warnings }
}

/// Full expansion: transition splitting followed by state splitting.
pub fn expand(m: &Pmdp) -> ExpandedModel {
    split_model_internal(&split_transitions_identity(m))
}

/// Check that expansion preserves the property value at the original initial
/// states, at one parameter point.
pub fn verify_equivalence(
    original: &Pmdp,
    expanded: &ExpandedModel,
    theta: &ParamPoint,
    prop: &Property,
) -> Result<bool, TransformError> {
    let a: Mdp = original.instantiate(theta)?;
    let b: Mdp = expanded.model.instantiate(theta)?;
    let ra = extremal_value(&a, prop)?;
    let rb = extremal_value(&b, prop)?;
    Ok(original
        .initial
        .iter()
        .all(|(s, _)| (ra.values[*s] - rb.values[*s]).abs() < 1e-6))
}

/// True when every transition of `m` is a constant, a bare parameter, or a
/// literal `1 - theta_j`.
pub fn is_normal_form(m: &Pmdp) -> bool {
    m.rows.iter().all(|row| {
        row.edges.iter().all(|e| {
            e.expr.is_const()
                || e.expr.as_bare_param().is_some()
                || e.expr.as_one_minus_param().is_some()
        })
    })
}

/// Symbolic lineage-completeness check: per original (state, action,
/// target), the sum over routes of the per-route symbolic edge product must
/// equal the sum of the original edge expressions.
pub fn lineage_reproduces_model(original: &Pmdp, expanded: &ExpandedModel) -> bool {
    let names = original.param_names();
    for row in &original.rows {
        let by_target = &expanded.routing[&(row.state, row.action)];
        let mut targets: BTreeMap<usize, AffineExpr> = BTreeMap::new();
        for e in &row.edges {
            let cur = targets
                .entry(e.to)
                .or_insert_with(|| AffineExpr::constant(Rat::zero()));
            *cur = cur.add(&e.expr, &names);
        }
        for (t, want) in targets {
            let Some(routes) = by_target.get(&t) else { return false };
            let mut got = AffineExpr::constant(Rat::zero());
            for r in routes {
                let mut prod = AffineExpr::constant(Rat::from_integer(1));
                for (ri, ei) in &r.edges {
                    prod = prod.mul(&expanded.model.rows[*ri].edges[*ei].expr, &names);
                }
                got = got.add(&prod, &names);
            }
            if !got.same_function(&want) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use crate::pctl::parse_property;
    use crate::rng::CounterRng;

    fn fig2_like() -> Pmdp {
        parse_model(
            r#"{
                "parameters": [
                    {"name": "t1", "bounds": [0.0, 1.0]},
                    {"name": "t2", "bounds": [0.0, 1.0]},
                    {"name": "t3", "bounds": [0.0, 1.0]},
                    {"name": "t4", "bounds": [0.0, 1.0]}
                ],
                "states": [
                    {"name": "s0"}, {"name": "s1"}, {"name": "s2"},
                    {"name": "s3", "labels": ["goal"]}
                ],
                "initial": {"s0": 1.0},
                "transitions": [
                    {"from": "s0", "action": "a1", "to": "s3", "prob": "1/2*t3 + 1/2*t4"},
                    {"from": "s0", "action": "a1", "to": "s1", "prob": "1 - 1/2*t3 - 1/2*t4"},
                    {"from": "s0", "action": "a2", "to": "s1", "prob": "1/2*t1 + 1/2*t2"},
                    {"from": "s0", "action": "a2", "to": "s2", "prob": "1 - 1/2*t1 - 1/2*t2"},
                    {"from": "s1", "action": "a1", "to": "s1", "prob": "1"},
                    {"from": "s2", "action": "a1", "to": "s2", "prob": "1"},
                    {"from": "s3", "action": "a1", "to": "s3", "prob": "1"}
                ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn transition_splitting_shapes() {
        let m = fig2_like();
        let split = split_transitions(&m);
        // Each two-term edge becomes two single-term edges into fresh states.
        let row = split.row(0, 0).unwrap();
        assert_eq!(row.edges.len(), 3); // two branches + complement
        let n_single: usize = row
            .edges
            .iter()
            .filter(|e| e.expr.as_scaled_param().is_some())
            .count();
        assert_eq!(n_single, 2);
        // Fresh states exit with probability one.
        for st in m.n_states()..split.n_states() {
            let rows: Vec<_> = split.rows_of_state(st).collect();
            assert_eq!(rows.len(), 1);
            assert_eq!(rows[0].edges.len(), 1);
            assert!(rows[0].edges[0].expr.is_const());
        }
    }

    #[test]
    fn bare_and_constant_edges_untouched() {
        let m = parse_model(
            r#"{
                "parameters": [{"name": "t", "bounds": [0.0, 1.0]}],
                "states": [{"name": "s0"}, {"name": "s1"}],
                "initial": {"s0": 1.0},
                "transitions": [
                    {"from": "s0", "action": "a", "to": "s1", "prob": "t"},
                    {"from": "s0", "action": "a", "to": "s0", "prob": "1 - t"},
                    {"from": "s1", "action": "a", "to": "s1", "prob": "1"}
                ]
            }"#,
        )
        .unwrap();
        let ex = expand(&m);
        assert_eq!(ex.model.n_states(), m.n_states());
        assert!(is_normal_form(&ex.model));
        // Identity lineage: every route is a single untouched edge.
        for routes in ex.routing.values() {
            for rs in routes.values() {
                for r in rs {
                    assert_eq!(r.edges.len(), 1);
                    assert_eq!(ex.lineage[&r.edges[0]].role, EdgeRole::Untouched);
                }
            }
        }
    }

    #[test]
    fn state_splitting_produces_normal_form_on_binary_rows() {
        let m = fig2_like();
        let ex = expand(&m);
        assert!(is_normal_form(&ex.model), "expanded model not in normal form");
        assert!(lineage_reproduces_model(&m, &ex));
    }

    #[test]
    fn state_splitting_figure_shape() {
        // k1*t1 -> s3 with complement to s1: expect s0 -k1-> n, n -t1-> s3,
        // n -(1-t1)-> s1, s0 -(1-k1)-> s1.
        let m = parse_model(
            r#"{
                "parameters": [{"name": "t1", "bounds": [0.0, 1.0]}],
                "states": [{"name": "s0"}, {"name": "s1"}, {"name": "s3"}],
                "initial": {"s0": 1.0},
                "transitions": [
                    {"from": "s0", "action": "a1", "to": "s3", "prob": "1/2*t1"},
                    {"from": "s0", "action": "a1", "to": "s1", "prob": "1 - 1/2*t1"},
                    {"from": "s1", "action": "a1", "to": "s1", "prob": "1"},
                    {"from": "s3", "action": "a1", "to": "s3", "prob": "1"}
                ]
            }"#,
        )
        .unwrap();
        let ex = expand(&m);
        assert!(is_normal_form(&ex.model));
        let row = ex.model.row(0, 0).unwrap();
        assert_eq!(row.edges.len(), 2);
        let half = Rat::new(1, 2);
        assert!(row.edges.iter().any(|e| e.expr.is_const() && e.expr.constant == half));
        let flip_state = row
            .edges
            .iter()
            .find(|e| e.expr.is_const() && e.expr.constant == half)
            .unwrap()
            .to;
        let flip = ex.model.rows_of_state(flip_state).next().unwrap();
        assert!(flip.edges.iter().any(|e| e.expr.as_bare_param() == Some(0) && e.to == 2));
        assert!(flip.edges.iter().any(|e| e.expr.as_one_minus_param() == Some(0) && e.to == 1));
        assert!(lineage_reproduces_model(&m, &ex));
    }

    #[test]
    fn equivalence_under_random_valid_points() {
        let m = fig2_like();
        let ex = expand(&m);
        let prop = parse_property("P>=0.5 [ true U \"goal\" ]").unwrap();
        let space = m.param_space();
        let mut rng = CounterRng::new(31);
        for _ in 0..100 {
            let theta = space.sample_valid(&mut rng);
            assert!(verify_equivalence(&m, &ex, &theta, &prop).unwrap(), "at {theta:?}");
        }
    }

    #[test]
    fn fig2_point_equivalence() {
        let m = fig2_like();
        let ex = expand(&m);
        let prop = parse_property("P>=0.5 [ true U \"goal\" ]").unwrap();
        assert!(verify_equivalence(&m, &ex, &vec![0.3, 0.2, 0.1, 0.4], &prop).unwrap());
    }

    #[test]
    fn zero_coefficient_edges_dropped_with_warning() {
        let m = parse_model(
            r#"{
                "parameters": [{"name": "t", "bounds": [0.0, 1.0]}],
                "states": [{"name": "s0"}, {"name": "s1"}],
                "initial": {"s0": 1.0},
                "transitions": [
                    {"from": "s0", "action": "a", "to": "s1", "prob": "0"},
                    {"from": "s0", "action": "a", "to": "s1", "prob": "t"},
                    {"from": "s0", "action": "a", "to": "s0", "prob": "1 - t"},
                    {"from": "s1", "action": "a", "to": "s1", "prob": "1"}
                ]
            }"#,
        )
        .unwrap();
        let ex = expand(&m);
        assert!(!ex.warnings.is_empty());
        assert_eq!(ex.model.row(0, 0).unwrap().edges.len(), 2);
    }

    #[test]
    fn unpeelable_complement_left_affine() {
        // Bare t next to constants: `1 - t - 1/4` cannot be made literal.
        let m = parse_model(
            r#"{
                "parameters": [{"name": "t", "bounds": [0.0, 0.75]}],
                "states": [{"name": "s0"}, {"name": "s1"}, {"name": "s2"}],
                "initial": {"s0": 1.0},
                "transitions": [
                    {"from": "s0", "action": "a", "to": "s1", "prob": "t"},
                    {"from": "s0", "action": "a", "to": "s0", "prob": "1/4"},
                    {"from": "s0", "action": "a", "to": "s2", "prob": "1 - t - 1/4"},
                    {"from": "s1", "action": "a", "to": "s1", "prob": "1"},
                    {"from": "s2", "action": "a", "to": "s2", "prob": "1"}
                ]
            }"#,
        )
        .unwrap();
        let ex = expand(&m);
        // Structure unchanged; still sound for reachability.
        assert_eq!(ex.model.n_states(), 3);
        let prop = parse_property("P>=0.5 [ true U \"x\" ]").unwrap();
        assert!(verify_equivalence(&m, &ex, &vec![0.3], &prop).unwrap());
    }
}
