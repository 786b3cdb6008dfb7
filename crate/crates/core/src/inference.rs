//! Bayesian inference over transition counts.
//!
//! Observed traces are aggregated into counts per (state, action, successor).
//! Counts on transitions that are syntactically a bare parameter update that
//! parameter's Beta posterior directly; all other counts under an action that
//! has a bare-parameter transition pool into the complement side. For
//! linearly parameterised rows the expanded model's routing decides how an
//! aggregated count splits across expanded edges: ambiguous counts follow a
//! binomial/multinomial law with weights given by the expanded-edge
//! probabilities at a parameter draw, after which per-parameter Dirichlet
//! posteriors are sampled from the completed counts.

use crate::model::{ParamPoint, Pmdp};
use crate::rng::{derive_seed, CounterRng};
use crate::transform::{EdgeId, ExpandedModel};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("trace step {step} of trace {trace}: {reason}")]
    BadTrace { trace: usize, step: usize, reason: String },
    #[error("completion split weights all zero after {0} retries")]
    ZeroWeights(usize),
    #[error("posterior file error: {0}")]
    File(String),
    #[error("hyperparameters must be positive")]
    BadHyper,
}

/// One observed step: (state, action, successor).
pub type Step = (usize, usize, usize);

/// Finite traces over the original model.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceData {
    pub traces: Vec<Vec<Step>>,
}

impl TraceData {
    pub fn total_steps(&self) -> u64 {
        self.traces.iter().map(|t| t.len() as u64).sum()
    }

    /// Validate chaining, enabledness, and edge existence against a model.
    pub fn validate(&self, m: &Pmdp) -> Result<(), InferenceError> {
        for (ti, trace) in self.traces.iter().enumerate() {
            for (si, &(s, a, t)) in trace.iter().enumerate() {
                if si > 0 && trace[si - 1].2 != s {
                    return Err(InferenceError::BadTrace {
                        trace: ti,
                        step: si,
                        reason: "state does not chain from previous step".into(),
                    });
                }
                let Some(row) = m.row(s, a) else {
                    return Err(InferenceError::BadTrace {
                        trace: ti,
                        step: si,
                        reason: format!("action #{a} not enabled in state #{s}"),
                    });
                };
                if !row.edges.iter().any(|e| e.to == t) {
                    return Err(InferenceError::BadTrace {
                        trace: ti,
                        step: si,
                        reason: format!("no transition #{s} -> #{t} under action #{a}"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self, m: &Pmdp) -> String {
        let mut out = String::new();
        for trace in &self.traces {
            let steps: Vec<[&str; 3]> = trace
                .iter()
                .map(|&(s, a, t)| {
                    [
                        m.states[s].name.as_str(),
                        m.actions[a].as_str(),
                        m.states[t].name.as_str(),
                    ]
                })
                .collect();
            out.push_str(&serde_json::json!({ "steps": steps }).to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(m: &Pmdp, text: &str) -> Result<TraceData, InferenceError> {
        #[derive(Deserialize)]
        struct Line {
            steps: Vec<[String; 3]>,
        }
        let mut traces = Vec::new();
        for (ti, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let parsed: Line = serde_json::from_str(line)
                .map_err(|e| InferenceError::File(format!("line {}: {e}", ti + 1)))?;
            let mut steps = Vec::new();
            for (si, [s, a, t]) in parsed.steps.iter().enumerate() {
                let lookup = |name: &str| {
                    m.states
                        .iter()
                        .position(|st| st.name == *name)
                        .ok_or_else(|| InferenceError::BadTrace {
                            trace: ti,
                            step: si,
                            reason: format!("unknown state `{name}`"),
                        })
                };
                let ai = m.actions.iter().position(|x| x == a).ok_or_else(|| {
                    InferenceError::BadTrace {
                        trace: ti,
                        step: si,
                        reason: format!("unknown action `{a}`"),
                    }
                })?;
                steps.push((lookup(s)?, ai, lookup(t)?));
            }
            traces.push(steps);
        }
        let data = TraceData { traces };
        data.validate(m)?;
        Ok(data)
    }
}

/// Aggregated transition counts plus the per-parameter pairs that can be
/// attributed without completion.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CountData {
    pub triples: BTreeMap<(usize, usize, usize), u64>,
    pub total: u64,
    /// Per parameter (D_theta, D_not_theta) from unambiguous attribution.
    pub param_counts: Vec<(u64, u64)>,
    /// Triples whose row reaches the same successor over several edges;
    /// resolved only through completion.
    pub ambiguous: Vec<(usize, usize, usize)>,
}

impl CountData {
    pub fn merge(&mut self, other: &CountData) {
        for (k, v) in &other.triples {
            *self.triples.entry(*k).or_insert(0) += v;
        }
        self.total += other.total;
        for (j, (a, b)) in other.param_counts.iter().enumerate() {
            self.param_counts[j].0 += a;
            self.param_counts[j].1 += b;
        }
        for t in &other.ambiguous {
            if !self.ambiguous.contains(t) {
                self.ambiguous.push(*t);
            }
        }
    }
}

/// Split trace data into transition counts and parameter-tied pairs.
///
/// `D_theta_j` sums counts over transitions syntactically equal to `theta_j`;
/// `D_not_theta_j` sums counts over the other transitions of actions that
/// have a `theta_j` transition.
pub fn extract_counts(m: &Pmdp, traces: &TraceData) -> Result<CountData, InferenceError> {
    traces.validate(m)?;
    let mut triples: BTreeMap<(usize, usize, usize), u64> = BTreeMap::new();
    for trace in &traces.traces {
        for &step in trace {
            *triples.entry(step).or_insert(0) += 1;
        }
    }
    let total = traces.total_steps();
    let (param_counts, ambiguous) = classify_triples(m, &triples);
    Ok(CountData { triples, total, param_counts, ambiguous })
}

/// Attribute counts keyed by successor to parameter pairs wherever the row
/// structure makes the attribution unique.
fn classify_triples(
    m: &Pmdp,
    triples: &BTreeMap<(usize, usize, usize), u64>,
) -> (Vec<(u64, u64)>, Vec<(usize, usize, usize)>) {
    let mut params = vec![(0u64, 0u64); m.n_params()];
    let mut ambiguous = Vec::new();
    for row in &m.rows {
        let bare: Vec<usize> = row.edges.iter().filter_map(|e| e.expr.as_bare_param()).collect();
        if bare.is_empty() {
            continue;
        }
        let mut by_target: BTreeMap<usize, Vec<&crate::model::Edge>> = BTreeMap::new();
        for e in &row.edges {
            by_target.entry(e.to).or_default().push(e);
        }
        for (t, edges) in by_target {
            let c = triples.get(&(row.state, row.action, t)).copied().unwrap_or(0);
            if c == 0 {
                continue;
            }
            if edges.len() > 1 {
                ambiguous.push((row.state, row.action, t));
                continue;
            }
            let edge_param = edges[0].expr.as_bare_param();
            for &j in &bare {
                if edge_param == Some(j) {
                    params[j].0 += c;
                } else {
                    params[j].1 += c;
                }
            }
        }
    }
    (params, ambiguous)
}

/// Per-parameter Dirichlet (Beta) posterior hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirichletPosterior {
    pub params: Vec<String>,
    /// (mu1, mu2) per parameter; real-valued increments are permitted so
    /// expected counts can update a posterior.
    pub hyper: Vec<(f64, f64)>,
}

impl DirichletPosterior {
    /// Non-informative uniform prior Dir(1, 1) for every parameter.
    pub fn uniform_prior(params: Vec<String>) -> DirichletPosterior {
        let hyper = vec![(1.0, 1.0); params.len()];
        DirichletPosterior { params, hyper }
    }

    pub fn mean(&self, j: usize) -> f64 {
        let (a, b) = self.hyper[j];
        a / (a + b)
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.hyper.len()).map(|j| self.mean(j)).collect()
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.hyper.iter().all(|(a, b)| *a > 0.0 && *b > 0.0) {
            Ok(())
        } else {
            Err(InferenceError::BadHyper)
        }
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, [f64; 2]> = self
            .params
            .iter()
            .zip(&self.hyper)
            .map(|(n, (a, b))| (n.as_str(), [*a, *b]))
            .collect();
        serde_json::to_string_pretty(&map).expect("posterior serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<DirichletPosterior, InferenceError> {
        let map: BTreeMap<String, [f64; 2]> =
            serde_json::from_str(text).map_err(|e| InferenceError::File(e.to_string()))?;
        let (params, hyper): (Vec<String>, Vec<(f64, f64)>) =
            map.into_iter().map(|(n, [a, b])| (n, (a, b))).unzip();
        let p = DirichletPosterior { params, hyper };
        p.validate()?;
        Ok(p)
    }
}

/// Conjugate update: add event counts to the hyperparameters.
pub fn update_posterior(prior: &DirichletPosterior, counts: &[(f64, f64)]) -> DirichletPosterior {
    assert_eq!(prior.hyper.len(), counts.len());
    DirichletPosterior {
        params: prior.params.clone(),
        hyper: prior
            .hyper
            .iter()
            .zip(counts)
            .map(|((a, b), (da, db))| (a + da, b + db))
            .collect(),
    }
}

/// One completed assignment of expanded-model counts.
#[derive(Clone, Debug)]
pub struct CompletionSample {
    /// Counts per expanded edge.
    pub dstar: BTreeMap<EdgeId, u64>,
    /// Per original (s, a, t): counts per route, in routing order.
    pub route_flows: BTreeMap<(usize, usize, usize), Vec<u64>>,
    /// Per-parameter (D_theta, D_not_theta) extracted from `dstar`.
    pub param_counts: Vec<(u64, u64)>,
    /// Joint posterior draw from the completed counts.
    pub theta: ParamPoint,
}

/// Split aggregated counts across expanded routes at the parameter draw
/// `theta_hat`; a route's weight is the product of its expanded-edge
/// probabilities, the exact conditional of the gadget multinomials given
/// the observed aggregate.
fn complete_once(
    ex: &ExpandedModel,
    counts: &CountData,
    theta_hat: &[f64],
    rng: &mut CounterRng,
) -> Result<(BTreeMap<EdgeId, u64>, BTreeMap<(usize, usize, usize), Vec<u64>>), InferenceError> {
    let mut edge_counts: BTreeMap<EdgeId, u64> = BTreeMap::new();
    let mut route_flows: BTreeMap<(usize, usize, usize), Vec<u64>> = BTreeMap::new();
    for ((s, a), by_target) in &ex.routing {
        for (t, routes) in by_target {
            let c = counts.triples.get(&(*s, *a, *t)).copied().unwrap_or(0);
            let flows = if routes.len() == 1 {
                vec![c]
            } else if c == 0 {
                vec![0; routes.len()]
            } else {
                let weights: Vec<f64> = routes
                    .iter()
                    .map(|r| {
                        r.edges
                            .iter()
                            .map(|&(ri, ei)| {
                                ex.model.rows[ri].edges[ei].expr.evaluate(theta_hat)
                            })
                            .product()
                    })
                    .collect();
                let mut total: f64 = weights.iter().sum();
                if total <= 0.0 {
                    return Err(InferenceError::ZeroWeights(0));
                }
                // Sequential binomial thinning realises the multinomial.
                let mut flows = Vec::with_capacity(routes.len());
                let mut remaining = c;
                for (i, w) in weights.iter().enumerate() {
                    if i + 1 == weights.len() {
                        flows.push(remaining);
                        break;
                    }
                    let p = (w / total).clamp(0.0, 1.0);
                    let take = rng.binomial(remaining, p);
                    flows.push(take);
                    remaining -= take;
                    total -= w;
                    if total <= 0.0 && remaining > 0 {
                        // All residual weight is numerically zero; dump the
                        // rest on the next route.
                        flows.push(remaining);
                        while flows.len() < weights.len() {
                            flows.push(0);
                        }
                        remaining = 0;
                        break;
                    }
                }
                flows
            };
            for (r, &f) in routes.iter().zip(&flows) {
                if f > 0 {
                    for id in &r.edges {
                        *edge_counts.entry(*id).or_insert(0) += f;
                    }
                }
            }
            route_flows.insert((*s, *a, *t), flows);
        }
    }
    Ok((edge_counts, route_flows))
}

/// Per-parameter pairs from expanded-edge counts, using the same
/// classification rule as `extract_counts` but at edge granularity.
pub fn count_params_on_expanded(
    ex: &ExpandedModel,
    edge_counts: &BTreeMap<EdgeId, u64>,
) -> Vec<(u64, u64)> {
    let m = &ex.model;
    let mut params = vec![(0u64, 0u64); m.n_params()];
    for (ri, row) in m.rows.iter().enumerate() {
        let bare: Vec<usize> = row.edges.iter().filter_map(|e| e.expr.as_bare_param()).collect();
        if bare.is_empty() {
            continue;
        }
        for (ei, e) in row.edges.iter().enumerate() {
            let c = edge_counts.get(&(ri, ei)).copied().unwrap_or(0);
            if c == 0 {
                continue;
            }
            let edge_param = e.expr.as_bare_param();
            for &j in &bare {
                if edge_param == Some(j) {
                    params[j].0 += c;
                } else {
                    params[j].1 += c;
                }
            }
        }
    }
    params
}

/// Unambiguously attributable parameter counts: flows along single-route
/// targets only. These seed the draw of the splitting parameter.
fn unambiguous_param_counts(ex: &ExpandedModel, counts: &CountData) -> Vec<(u64, u64)> {
    let mut edge_counts: BTreeMap<EdgeId, u64> = BTreeMap::new();
    for ((s, a), by_target) in &ex.routing {
        for (t, routes) in by_target {
            if routes.len() != 1 {
                continue;
            }
            let c = counts.triples.get(&(*s, *a, *t)).copied().unwrap_or(0);
            if c == 0 {
                continue;
            }
            for id in &routes[0].edges {
                *edge_counts.entry(*id).or_insert(0) += c;
            }
        }
    }
    count_params_on_expanded(ex, &edge_counts)
}

fn to_f64_pairs(pairs: &[(u64, u64)]) -> Vec<(f64, f64)> {
    pairs.iter().map(|(a, b)| (*a as f64, *b as f64)).collect()
}

/// Draw `n` completions of the expanded-model counts and a posterior
/// realisation from each.
///
/// The splitting parameter is drawn from the prior updated with the
/// unambiguous counts (one draw per sample, marginalising rather than
/// plugging in a point estimate); `gibbs_iters` extra rounds resample the
/// split at the previous theta draw.
pub fn sample_completions(
    ex: &ExpandedModel,
    counts: &CountData,
    prior: &DirichletPosterior,
    n: usize,
    seed: u64,
    gibbs_iters: usize,
) -> Result<Vec<CompletionSample>, InferenceError> {
    let base = update_posterior(prior, &to_f64_pairs(&unambiguous_param_counts(ex, counts)));
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = CounterRng::new(derive_seed(seed, i as u64));
        let mut theta_hat: ParamPoint =
            (0..base.hyper.len()).map(|j| rng.beta(base.hyper[j].0, base.hyper[j].1)).collect();
        let mut result = None;
        for retry in 0..16 {
            match complete_once(ex, counts, &theta_hat, &mut rng) {
                Ok(r) => {
                    result = Some(r);
                    break;
                }
                Err(_) if retry < 15 => {
                    theta_hat = (0..base.hyper.len())
                        .map(|j| rng.beta(base.hyper[j].0, base.hyper[j].1))
                        .collect();
                }
                Err(_) => return Err(InferenceError::ZeroWeights(16)),
            }
        }
        let (mut edge_counts, mut route_flows) = result.unwrap();
        let mut param_counts = count_params_on_expanded(ex, &edge_counts);
        let mut theta: ParamPoint = {
            let post = update_posterior(prior, &to_f64_pairs(&param_counts));
            (0..post.hyper.len()).map(|j| rng.beta(post.hyper[j].0, post.hyper[j].1)).collect()
        };
        for _ in 0..gibbs_iters {
            let (ec, rf) = complete_once(ex, counts, &theta, &mut rng)
                .map_err(|_| InferenceError::ZeroWeights(16))?;
            edge_counts = ec;
            route_flows = rf;
            param_counts = count_params_on_expanded(ex, &edge_counts);
            let post = update_posterior(prior, &to_f64_pairs(&param_counts));
            theta = (0..post.hyper.len())
                .map(|j| rng.beta(post.hyper[j].0, post.hyper[j].1))
                .collect();
        }
        out.push(CompletionSample { dstar: edge_counts, route_flows, param_counts, theta });
    }
    Ok(out)
}

/// A source of joint posterior parameter samples.
pub enum PosteriorSource<'a> {
    /// Product of independent per-parameter Beta posteriors.
    Product(&'a DirichletPosterior),
    /// Completion-based sampling through an expanded model.
    Completion {
        expanded: &'a ExpandedModel,
        counts: &'a CountData,
        prior: &'a DirichletPosterior,
        gibbs_iters: usize,
    },
}

impl<'a> PosteriorSource<'a> {
    pub fn n_params(&self) -> usize {
        match self {
            PosteriorSource::Product(p) => p.hyper.len(),
            PosteriorSource::Completion { prior, .. } => prior.hyper.len(),
        }
    }

    /// Draw one joint sample with the given stream key.
    pub fn sample(&self, key: u64) -> Result<ParamPoint, InferenceError> {
        match self {
            PosteriorSource::Product(p) => {
                let mut rng = CounterRng::new(key);
                Ok(p.hyper.iter().map(|(a, b)| rng.beta(*a, *b)).collect())
            }
            PosteriorSource::Completion { expanded, counts, prior, gibbs_iters } => {
                let samples = sample_completions(expanded, counts, prior, 1, key, *gibbs_iters)?;
                Ok(samples.into_iter().next().unwrap().theta)
            }
        }
    }
}

/// Independent joint posterior samples with per-sample derived seeds.
pub fn posterior_samples(
    source: &PosteriorSource,
    n: usize,
    seed: u64,
) -> Result<Vec<ParamPoint>, InferenceError> {
    (0..n).map(|i| source.sample(derive_seed(seed, i as u64))).collect()
}
