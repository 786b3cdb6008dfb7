//! Parameter synthesis: approximate the feasible set as a map from
//! hyper-rectangles to verdicts by adaptive sample-based refinement.
//!
//! A cell is decided only when the property verdict agrees at its centre and
//! all corners and every sampled decision value clears the threshold by more
//! than twice the sampled spread; otherwise the cell is subdivided (every
//! dimension at once, keeping the decomposition invariant under parameter
//! permutations) until each dimension is narrower than the tolerance, at
//! which point it is tagged undecided. Points where the instantiated model
//! is invalid count as violated: they cannot witness satisfaction.

use crate::model::{ParamPoint, ParamSpace, Pmdp};
use crate::pctl::{decision_value, CmpOp, Property};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Pctl(#[from] crate::pctl::PctlError),
    #[error("tolerance must be positive")]
    BadTolerance,
    #[error("validity region is empty")]
    EmptyValidRegion,
    #[error("undecided volume fraction {got} exceeds budget {budget}")]
    UndecidedBudget { got: f64, budget: f64 },
    #[error("parameter point {0:?} outside the region map")]
    OutsideMap(ParamPoint),
    #[error("region file error: {0}")]
    File(String),
    #[error("unknown tie parameter `{0}`")]
    BadTie(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "sat")]
    Satisfied,
    #[serde(rename = "unsat")]
    Violated,
    #[serde(rename = "unknown")]
    Undecided,
}

/// Ties collapse parameters onto representative dimensions: `tie[j]` is the
/// parameter index that parameter `j` copies. Identity for free parameters.
#[derive(Clone, Debug, Default)]
pub struct TieMap {
    pub root: Vec<usize>,
}

impl TieMap {
    pub fn identity(n: usize) -> TieMap {
        TieMap { root: (0..n).collect() }
    }

    /// Build from pairs `(dependent, root)` given by name.
    pub fn from_pairs(m: &Pmdp, pairs: &[(String, String)]) -> Result<TieMap, SynthError> {
        let mut root: Vec<usize> = (0..m.n_params()).collect();
        for (dep, r) in pairs {
            let d = m
                .params
                .iter()
                .position(|p| &p.name == dep)
                .ok_or_else(|| SynthError::BadTie(dep.clone()))?;
            let ri = m
                .params
                .iter()
                .position(|p| &p.name == r)
                .ok_or_else(|| SynthError::BadTie(r.clone()))?;
            root[d] = ri;
        }
        // Resolve chains.
        for j in 0..root.len() {
            let mut r = root[j];
            while root[r] != r {
                r = root[r];
            }
            root[j] = r;
        }
        Ok(TieMap { root })
    }

    /// Effective (free) dimensions, in parameter order.
    pub fn free_dims(&self) -> Vec<usize> {
        (0..self.root.len()).filter(|&j| self.root[j] == j).collect()
    }

    /// Expand a point over the free dimensions to a full parameter point.
    pub fn expand(&self, free: &[f64], free_dims: &[usize]) -> ParamPoint {
        let pos: Vec<usize> = self
            .root
            .iter()
            .map(|r| free_dims.iter().position(|d| d == r).expect("tie root not free"))
            .collect();
        (0..self.root.len()).map(|j| free[pos[j]]).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Cell {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub verdict: Verdict,
}

impl Cell {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn max_width(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).fold(0.0, f64::max)
    }
}

/// Partition of the (tightened) parameter box into verdict-tagged cells.
#[derive(Clone, Debug)]
pub struct FeasibleRegionMap {
    /// Names of the free dimensions, in parameter order.
    pub params: Vec<String>,
    /// Indices of the free dimensions in th full parameter vector.
    pub free_dims: Vec<usize>,
    /// The covered box per free dimension.
    pub bounds: Vec<(f64, f64)>,
    /// Cells sorted lexicographically by (lo, hi).
    pub cells: Vec<Cell>,
    /// Refinement tolerance used.
    pub tol: f64,
    /// Undecided volume as a fraction of the box volume.
    pub undecided_fraction: f64,
}

#[derive(Serialize, Deserialize)]
struct RegionFile {
    params: Vec<String>,
    free_dims: Vec<usize>,
    bounds: Vec<[f64; 2]>,
    tol: f64,
    undecided_volume: f64,
    cells: Vec<Cell>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Satisfied,
    Violated,
    Undecided,
    OutsideMap,
}

impl FeasibleRegionMap {
    /// Verdict of the unique covering rectangle; boundary points resolve to
    /// the lexicographically first covering rectangle. The point is given in
    /// full parameter coordinates.
    pub fn membership(&self, theta: &[f64]) -> Result<Verdict, SynthError> {
        match self.classify(theta) {
            Classification::Satisfied => Ok(Verdict::Satisfied),
            Classification::Violated => Ok(Verdict::Violated),
            Classification::Undecided => Ok(Verdict::Undecided),
            Classification::OutsideMap => Err(SynthError::OutsideMap(theta.to_vec())),
        }
    }

    /// Total classification used by the confidence integrator: points outside
    /// the covered box are reported as such (posterior mass there is simply
    /// not in the feasible set).
    pub fn classify(&self, theta: &[f64]) -> Classification {
        let x: Vec<f64> = self.free_dims.iter().map(|&d| theta[d]).collect();
        if x.iter().zip(&self.bounds).any(|(v, (lo, hi))| v < lo || v > hi) {
            return Classification::OutsideMap;
        }
        // Cells are sorted lexicographically, so the first covering cell in
        // iteration order is the tie-break winner.
        for c in &self.cells {
            if c.contains(&x) {
                return match c.verdict {
                    Verdict::Satisfied => Classification::Satisfied,
                    Verdict::Violated => Classification::Violated,
                    Verdict::Undecided => Classification::Undecided,
                };
            }
        }
        Classification::OutsideMap
    }

    pub fn box_volume(&self) -> f64 {
        self.bounds.iter().map(|(l, h)| h - l).product()
    }

    pub fn to_json(&self) -> String {
        let file = RegionFile {
            params: self.params.clone(),
            free_dims: self.free_dims.clone(),
            bounds: self.bounds.iter().map(|(l, h)| [*l, *h]).collect(),
            tol: self.tol,
            undecided_volume: self.undecided_fraction,
            cells: self.cells.clone(),
        };
        serde_json::to_string_pretty(&file).expect("region serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<FeasibleRegionMap, SynthError> {
        let file: RegionFile =
            serde_json::from_str(text).map_err(|e| SynthError::File(e.to_string()))?;
        let mut cells = file.cells;
        sort_cells(&mut cells);
        Ok(FeasibleRegionMap {
            params: file.params,
            free_dims: file.free_dims,
            bounds: file.bounds.iter().map(|b| (b[0], b[1])).collect(),
            cells,
            tol: file.tol,
            undecided_fraction: file.undecided_volume,
        })
    }

    /// Satisfied-region extent along one free dimension: (min lo, max hi)
    /// over satisfied cells.
    pub fn satisfied_extent(&self, dim: usize) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in self.cells.iter().filter(|c| c.verdict == Verdict::Satisfied) {
            lo = lo.min(c.lo[dim]);
            hi = hi.max(c.hi[dim]);
        }
        (lo <= hi).then_some((lo, hi))
    }
}

fn sort_cells(cells: &mut [Cell]) {
    cells.sort_by(|a, b| {
        let ka = a.lo.iter().chain(a.hi.iter());
        let kb = b.lo.iter().chain(b.hi.iter());
        ka.partial_cmp(kb).expect("cell coordinates are finite")
    });
}

/// Sample-based verdict of a single parameter point.
struct PointEval {
    verdict: Verdict,
    /// Decision value when the point is valid.
    value: Option<f64>,
}

struct Evaluator<'a> {
    model: &'a Pmdp,
    prop: &'a Property,
    space: ParamSpace,
    tie: TieMap,
    free_dims: Vec<usize>,
}

impl<'a> Evaluator<'a> {
    fn eval(&self, free: &[f64]) -> Result<PointEval, SynthError> {
        let theta = self.tie.expand(free, &self.free_dims);
        if !self.space.is_valid(&theta) {
            return Ok(PointEval { verdict: Verdict::Violated, value: None });
        }
        let mdp = self.model.instantiate(&theta)?;
        let v = decision_value(&mdp, self.prop)?;
        let verdict = if self.prop.op.holds(v, self.prop.threshold) {
            Verdict::Satisfied
        } else {
            Verdict::Violated
        };
        Ok(PointEval { verdict, value: Some(v) })
    }
}

fn cell_samples(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let d = lo.len();
    let mut out = Vec::with_capacity((1 << d) + 1);
    for mask in 0..(1u32 << d) {
        out.push(
            (0..d)
                .map(|i| if mask & (1 << i) == 0 { lo[i] } else { hi[i] })
                .collect(),
        );
    }
    out.push((0..d).map(|i| 0.5 * (lo[i] + hi[i])).collect());
    out
}

/// Compute the feasible-region map for `prop` over the model's parameter
/// space, with dependent parameters tied to their roots.
pub fn synthesise_region(
    model: &Pmdp,
    prop: &Property,
    tol: f64,
    budget: f64,
    tie: &TieMap,
) -> Result<FeasibleRegionMap, SynthError> {
    if !(tol > 0.0) {
        return Err(SynthError::BadTolerance);
    }
    let space = model.param_space();
    let free_dims = tie.free_dims();
    // Box per free dimension: the parameter's tightened bounds intersected
    // with the tightened bounds of everything tied to it.
    let mut bounds: Vec<(f64, f64)> = free_dims.iter().map(|&d| space.valid_box[d]).collect();
    for (j, &r) in tie.root.iter().enumerate() {
        if j != r {
            let pos = free_dims.iter().position(|&d| d == r).expect("root is free");
            bounds[pos].0 = bounds[pos].0.max(space.valid_box[j].0);
            bounds[pos].1 = bounds[pos].1.min(space.valid_box[j].1);
        }
    }
    if bounds.iter().any(|(l, h)| l >= h) {
        return Err(SynthError::EmptyValidRegion);
    }

    let ev = Evaluator {
        model,
        prop,
        space,
        tie: tie.clone(),
        free_dims: free_dims.clone(),
    };

    // Trivial thresholds decide the whole box at once.
    let trivially_sat = matches!((prop.op, prop.threshold), (CmpOp::Ge, t) if t == 0.0)
        || matches!((prop.op, prop.threshold), (CmpOp::Le, t) if t == 1.0);

    let mut cells: Vec<Cell> = Vec::new();
    let mut queue: std::collections::VecDeque<(Vec<f64>, Vec<f64>)> = std::collections::VecDeque::new();
    queue.push_back((
        bounds.iter().map(|b| b.0).collect(),
        bounds.iter().map(|b| b.1).collect(),
    ));
    let mut any_valid = false;

    while let Some((lo, hi)) = queue.pop_front() {
        if trivially_sat {
            cells.push(Cell { lo, hi, verdict: Verdict::Satisfied });
            any_valid = true;
            continue;
        }
        let samples = cell_samples(&lo, &hi);
        let evals = samples
            .iter()
            .map(|x| ev.eval(x))
            .collect::<Result<Vec<_>, _>>()?;
        let verdicts: Vec<Verdict> = evals.iter().map(|e| e.verdict).collect();
        let values: Vec<f64> = evals.iter().filter_map(|e| e.value).collect();
        any_valid |= !values.is_empty();

        let uniform = verdicts.windows(2).all(|w| w[0] == w[1]);
        let decided = if values.is_empty() {
            // Entirely invalid: violated.
            uniform
        } else {
            let spread = values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
                - values.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            let margin = values
                .iter()
                .map(|v| (v - prop.threshold).abs())
                .fold(f64::INFINITY, f64::min);
            uniform && margin > 2.0 * spread
        };

        if decided {
            cells.push(Cell { lo, hi, verdict: verdicts[0] });
            continue;
        }
        let widths: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| h - l).collect();
        if widths.iter().all(|w| *w < tol) {
            cells.push(Cell { lo, hi, verdict: Verdict::Undecided });
            continue;
        }
        // Split every dimension at its midpoint.
        let d = lo.len();
        let mid: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
        for mask in 0..(1u32 << d) {
            let clo: Vec<f64> = (0..d)
                .map(|i| if mask & (1 << i) == 0 { lo[i] } else { mid[i] })
                .collect();
            let chi: Vec<f64> = (0..d)
                .map(|i| if mask & (1 << i) == 0 { mid[i] } else { hi[i] })
                .collect();
            queue.push_back((clo, chi));
        }
    }

    if !any_valid && !trivially_sat {
        return Err(SynthError::EmptyValidRegion);
    }

    sort_cells(&mut cells);
    let box_volume: f64 = bounds.iter().map(|(l, h)| h - l).product();
    let undecided: f64 = cells
        .iter()
        .filter(|c| c.verdict == Verdict::Undecided)
        .map(Cell::volume)
        .sum();
    let undecided_fraction = undecided / box_volume;
    if undecided_fraction > budget {
        return Err(SynthError::UndecidedBudget { got: undecided_fraction, budget });
    }

    Ok(FeasibleRegionMap {
        params: free_dims.iter().map(|&d| model.params[d].name.clone()).collect(),
        free_dims,
        bounds,
        cells,
        tol,
        undecided_fraction,
    })
}

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_BUDGET: f64 = 0.02;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use crate::pctl::parse_property;
    use crate::rng::CounterRng;

    fn sum_model() -> Pmdp {
        // Satisfaction of P>=0.5 [ true U "g" ] iff (t1 + t2)/2 >= 0.5,
        // i.e. t1 + t2 >= 1.
        parse_model(
            r#"{
                "parameters": [
                    {"name": "t1", "bounds": [0.0, 1.0]},
                    {"name": "t2", "bounds": [0.0, 1.0]}
                ],
                "states": [{"name": "s0"}, {"name": "goal", "labels": ["g"]}, {"name": "sink"}],
                "initial": {"s0": 1.0},
                "transitions": [
                    {"from": "s0", "action": "a", "to": "goal", "prob": "1/2*t1 + 1/2*t2"},
                    {"from": "s0", "action": "a", "to": "sink", "prob": "1 - 1/2*t1 - 1/2*t2"},
                    {"from": "goal", "action": "a", "to": "goal", "prob": "1"},
                    {"from": "sink", "action": "a", "to": "sink", "prob": "1"}
                ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn trivial_threshold_decides_in_one_rectangle() {
        let m = sum_model();
        let prop = parse_property("P>=0 [ true U \"g\" ]").unwrap();
        let map =
            synthesise_region(&m, &prop, DEFAULT_TOL, DEFAULT_BUDGET, &TieMap::identity(2))
                .unwrap();
        assert_eq!(map.cells.len(), 1);
        assert_eq!(map.cells[0].verdict, Verdict::Satisfied);
    }

    #[test]
    fn staircase_verdicts_match_dense_grid_oracle() {
        let m = sum_model();
        let prop = parse_property("P>=0.5 [ true U \"g\" ]").unwrap();
        let map = synthesise_region(&m, &prop, 5e-3, 0.2, &TieMap::identity(2))
            .unwrap();
        let space = m.param_space();
        let mut checked = 0;
        for i in 0..100 {
            for j in 0..100 {
                let theta = vec![(i as f64 + 0.5) / 100.0, (j as f64 + 0.5) / 100.0];
                if !space.is_valid(&theta) {
                    continue;
                }
                let verdict = map.membership(&theta).unwrap();
                if verdict == Verdict::Undecided {
                    continue;
                }
                let sat = crate::pctl::satisfies(&m.instantiate(&theta).unwrap(), &prop).unwrap();
                assert_eq!(
                    verdict == Verdict::Satisfied,
                    sat,
                    "disagreement at {theta:?}"
                );
                checked += 1;
            }
        }
        assert!(checked > 9000, "only {checked} grid points decided");
    }

    #[test]
    fn tiling_covers_box_volume() {
        let m = sum_model();
        let prop = parse_property("P>=0.5 [ true U \"g\" ]").unwrap();
        let map = synthesise_region(&m, &prop, 5e-3, 0.2, &TieMap::identity(2))
            .unwrap();
        let total: f64 = map.cells.iter().map(Cell::volume).sum();
        assert!((total - map.box_volume()).abs() < 1e-9);
    }

    #[test]
    fn membership_boundary_tie_is_deterministic() {
        let m = sum_model();
        let prop = parse_property("P>=0.5 [ true U \"g\" ]").unwrap();
        let map = synthesise_region(&m, &prop, 1e-2, 0.2, &TieMap::identity(2))
            .unwrap();
        // A dyadic grid point lies on shared cell boundaries.
        let v1 = map.membership(&[0.5, 0.5]).unwrap();
        let v2 = map.membership(&[0.5, 0.5]).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn refinement_monotonicity_on_decided_cells() {
        let m = sum_model();
        let prop = parse_property("P>=0.5 [ true U \"g\" ]").unwrap();
        let coarse = synthesise_region(&m, &prop, 8e-3, 0.2, &TieMap::identity(2))
            .unwrap();
        let fine = synthesise_region(&m, &prop, 4e-3, 0.2, &TieMap::identity(2))
            .unwrap();
        let mut rng = CounterRng::new(5);
        for _ in 0..500 {
            let theta = vec![rng.uniform(), rng.uniform()];
            let vc = coarse.classify(&theta);
            let vf = fine.classify(&theta);
            match (vc, vf) {
                (Classification::Satisfied, Classification::Violated)
                | (Classification::Violated, Classification::Satisfied) => {
                    panic!("verdict flip at {theta:?}")
                }
                _ => {}
            }
        }
        assert!(fine.undecided_fraction <= coarse.undecided_fraction + 1e-12);
    }

    #[test]
    fn region_json_round_trip() {
        let m = sum_model();
        let prop = parse_property("P>=0.5 [ true U \"g\" ]").unwrap();
        let map = synthesise_region(&m, &prop, 1e-2, 0.2, &TieMap::identity(2))
            .unwrap();
        let map2 = FeasibleRegionMap::from_json(&map.to_json()).unwrap();
        assert_eq!(map.cells, map2.cells);
        assert_eq!(map.params, map2.params);
    }

    #[test]
    fn soundness_against_sampling_oracle() {
        let m = sum_model();
        let prop = parse_property("P>=0.5 [ true U \"g\" ]").unwrap();
        let map = synthesise_region(&m, &prop, 2e-3, 0.05, &TieMap::identity(2))
            .unwrap();
        let space = m.param_space();
        let mut rng = CounterRng::new(77);
        let mut mismatches = 0;
        let mut decided = 0;
        for _ in 0..10_000 {
            let theta = space.sample_valid(&mut rng);
            let verdict = map.classify(&theta);
            let sat = match verdict {
                Classification::Satisfied => true,
                Classification::Violated => false,
                _ => continue,
            };
            decided += 1;
            let oracle = crate::pctl::satisfies(&m.instantiate(&theta).unwrap(), &prop).unwrap();
            if oracle != sat {
                mismatches += 1;
                // Mismatches are only tolerable hard against the verdict
                // boundary: here the boundary is t1 + t2 = 1.
                assert!(
                    (theta[0] + theta[1] - 1.0).abs() < 2.0 * map.tol,
                    "mismatch far from boundary at {theta:?}"
                );
            }
        }
        assert!(mismatches as f64 <= 0.001 * decided as f64, "{mismatches}/{decided}");
    }
}
