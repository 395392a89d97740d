//! OSPA, GOSPA and the trajectory metric with its cost decomposition.

use std::collections::HashMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::TrajectorySet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub p: f64,
    pub c: f64,
    /// Switching penalty.
    pub gamma: f64,
    /// Only α = 2 is supported for GOSPA.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// State rows used as position.
    #[serde(default = "default_positions")]
    pub position_indices: Vec<usize>,
    /// Upper bound on assignment states enumerated by the trajectory metric.
    #[serde(default = "default_state_cap")]
    pub state_cap: usize,
}

fn default_alpha() -> f64 {
    2.0
}

fn default_positions() -> Vec<usize> {
    vec![0, 2]
}

fn default_state_cap() -> usize {
    1_000_000
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            p: 2.0,
            c: 10.0,
            gamma: 1.0,
            alpha: default_alpha(),
            position_indices: default_positions(),
            state_cap: default_state_cap(),
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) || !(self.c > 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::Config("metric needs p >= 1, c > 0, gamma >= 0".into()));
        }
        if self.alpha != 2.0 {
            return Err(Error::Config("only alpha = 2 is supported".into()));
        }
        if self.position_indices.is_empty() {
            return Err(Error::Config("metric needs at least one position index".into()));
        }
        Ok(())
    }

    pub fn position(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.position_indices.len(), self.position_indices.iter().map(|&i| x[i]))
    }

    fn cp(&self) -> f64 {
        self.c.powf(self.p)
    }
}

/// Squared (p-th power) cost decomposition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricBreakdown {
    pub localization: f64,
    pub missed: f64,
    pub false_targets: f64,
    pub switching: f64,
    /// `(localization + missed + false_targets + switching)^(1/p)`.
    pub total: f64,
}

impl MetricBreakdown {
    fn from_parts(localization: f64, missed: f64, false_targets: f64, switching: f64, p: f64) -> Self {
        MetricBreakdown {
            localization,
            missed,
            false_targets,
            switching,
            total: (localization + missed + false_targets + switching).powf(1.0 / p),
        }
    }

    /// Sum of the p-th power costs.
    pub fn total_pow(&self) -> f64 {
        self.localization + self.missed + self.false_targets + self.switching
    }
}

/// Minimum-cost assignment of every row to a distinct column (`rows <=
/// cols`). Returns the column of each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "hungarian needs rows <= cols");
    // potentials and matching are 1-based; index 0 is a sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Optimal pairs `(x index, y index, capped cost)` minimising the summed
/// `min(d, c)^p` over a maximum-cardinality matching.
fn optimal_pairs(x: &[DVector<f64>], y: &[DVector<f64>], cfg: &MetricConfig) -> Vec<(usize, usize, f64)> {
    let cp = cfg.cp();
    let cost = |a: &DVector<f64>, b: &DVector<f64>| (a - b).norm().powf(cfg.p).min(cp);
    if x.len() <= y.len() {
        let m: Vec<Vec<f64>> = x.iter().map(|a| y.iter().map(|b| cost(a, b)).collect()).collect();
        hungarian(&m)
            .into_iter()
            .enumerate()
            .map(|(i, j)| (i, j, m[i][j]))
            .collect()
    } else {
        let m: Vec<Vec<f64>> = y.iter().map(|b| x.iter().map(|a| cost(a, b)).collect()).collect();
        hungarian(&m)
            .into_iter()
            .enumerate()
            .map(|(j, i)| (i, j, m[j][i]))
            .collect()
    }
}

/// GOSPA (α = 2) between `x` (truth) and `y` (estimates), both given as
/// state vectors; positions are extracted with the config. The returned
/// breakdown has no switching cost.
pub fn gospa(x: &[DVector<f64>], y: &[DVector<f64>], cfg: &MetricConfig) -> (f64, MetricBreakdown) {
    let xp: Vec<_> = x.iter().map(|s| cfg.position(s)).collect();
    let yp: Vec<_> = y.iter().map(|s| cfg.position(s)).collect();
    gospa_positions(&xp, &yp, cfg)
}

pub fn gospa_positions(x: &[DVector<f64>], y: &[DVector<f64>], cfg: &MetricConfig) -> (f64, MetricBreakdown) {
    let cp = cfg.cp();
    let half = cp / 2.0;
    let mut loc = 0.0;
    let mut matched = 0usize;
    for (_, _, c) in optimal_pairs(x, y, cfg) {
        if c < cp {
            loc += c;
            matched += 1;
        }
    }
    let missed = half * (x.len() - matched) as f64;
    let false_targets = half * (y.len() - matched) as f64;
    let b = MetricBreakdown::from_parts(loc, missed, false_targets, 0.0, cfg.p);
    (b.total, b)
}

/// OSPA with order `p` and cutoff `c`.
pub fn ospa(x: &[DVector<f64>], y: &[DVector<f64>], cfg: &MetricConfig) -> f64 {
    let xp: Vec<_> = x.iter().map(|s| cfg.position(s)).collect();
    let yp: Vec<_> = y.iter().map(|s| cfg.position(s)).collect();
    ospa_positions(&xp, &yp, cfg)
}

pub fn ospa_positions(x: &[DVector<f64>], y: &[DVector<f64>], cfg: &MetricConfig) -> f64 {
    let n = x.len().max(y.len());
    if n == 0 {
        return 0.0;
    }
    let diff = x.len().abs_diff(y.len());
    let loc: f64 = optimal_pairs(x, y, cfg).iter().map(|t| t.2).sum();
    ((loc + cfg.cp() * diff as f64) / n as f64).powf(1.0 / cfg.p)
}

/// One per-step assignment: pairs of (truth index, estimate index) among
/// the trajectories present at that step, with its cost split.
struct StepState {
    pairs: Vec<(u8, u8)>,
    loc: f64,
    missed: f64,
    false_targets: f64,
}

impl StepState {
    fn cost(&self) -> f64 {
        self.loc + self.missed + self.false_targets
    }
}

fn enumerate_states(
    truths: &[usize],
    ests: &[usize],
    dist: &dyn Fn(usize, usize) -> f64,
    cp: f64,
) -> Vec<StepState> {
    fn rec(
        ti: usize,
        truths: &[usize],
        ests: &[usize],
        used: &mut Vec<bool>,
        pairs: &mut Vec<(u8, u8)>,
        out: &mut Vec<Vec<(u8, u8)>>,
    ) {
        if ti == truths.len() {
            out.push(pairs.clone());
            return;
        }
        rec(ti + 1, truths, ests, used, pairs, out);
        for (ei, &e) in ests.iter().enumerate() {
            if !used[ei] {
                used[ei] = true;
                pairs.push((truths[ti] as u8, e as u8));
                rec(ti + 1, truths, ests, used, pairs, out);
                pairs.pop();
                used[ei] = false;
            }
        }
    }
    let mut raw = Vec::new();
    rec(0, truths, ests, &mut vec![false; ests.len()], &mut Vec::new(), &mut raw);
    let half = cp / 2.0;
    raw.into_iter()
        .map(|pairs| {
            let mut loc = 0.0;
            let mut good = 0usize;
            for &(i, j) in &pairs {
                let d = dist(i as usize, j as usize);
                if d < cp {
                    loc += d;
                    good += 1;
                }
            }
            StepState {
                pairs,
                loc,
                missed: half * (truths.len() - good) as f64,
                false_targets: half * (ests.len() - good) as f64,
            }
        })
        .collect()
}

/// Number of partial matchings between sets of sizes `n` and `m`.
pub fn assignment_count(n: usize, m: usize) -> usize {
    let (n, m) = (n.min(m), n.max(m));
    let mut total = 0usize;
    // Σ_j C(n,j) C(m,j) j!
    let mut term = 1usize;
    for j in 0..=n {
        if let Some(next) = (term * (n - j + 1) * (m - j + 1)).checked_div(j) {
            term = next;
        }
        total = total.saturating_add(term);
    }
    total
}

/// Trajectory metric between the trajectories of `truth` and `est` alive at
/// `k`, evaluated over time steps `1..=k`.
///
/// At every step the trajectories present there are partially matched; a
/// matched pair costs `min(d, c)^p` and every unmatched present trajectory
/// costs `c^p / 2`. Each step at which the matching of trajectories present
/// at both that step and the previous one changes costs `γ^p`. The minimum
/// over matching sequences is found exactly by dynamic programming.
pub fn trajectory_metric(
    truth: &TrajectorySet,
    est: &TrajectorySet,
    cfg: &MetricConfig,
    k: usize,
) -> Result<MetricBreakdown> {
    let x = truth.alive_at(k);
    let y = est.alive_at(k);
    let nx = x.len();
    let ny = y.len();
    if nx * ny > 128 || nx > 255 || ny > 255 {
        return Err(Error::MetricIntractable {
            states: usize::MAX,
            cap: cfg.state_cap,
        });
    }
    let cp = cfg.cp();
    let switch_cost = cfg.gamma.powf(cfg.p);

    let present = |set: &TrajectorySet, t: usize| -> Vec<usize> {
        (0..set.len()).filter(|&i| set.trajectories[i].state_at(t).is_some()).collect()
    };

    let mut total_states = 0usize;
    for t in 1..=k {
        total_states = total_states.saturating_add(assignment_count(present(&x, t).len(), present(&y, t).len()));
    }
    if total_states > cfg.state_cap {
        return Err(Error::MetricIntractable {
            states: total_states,
            cap: cfg.state_cap,
        });
    }

    let bit = |i: u8, j: u8| -> u128 { 1u128 << (i as usize * ny + j as usize) };

    let mut layers: Vec<Vec<StepState>> = Vec::with_capacity(k);
    // back[t][s] = (previous state index, switched)
    let mut back: Vec<Vec<(usize, bool)>> = Vec::with_capacity(k);
    let mut value: Vec<f64> = Vec::new();
    let mut prev_truths: Vec<usize> = Vec::new();
    let mut prev_ests: Vec<usize> = Vec::new();

    for t in 1..=k {
        let truths = present(&x, t);
        let ests = present(&y, t);
        let xpos: HashMap<usize, DVector<f64>> = truths
            .iter()
            .map(|&i| (i, cfg.position(x.trajectories[i].state_at(t).unwrap())))
            .collect();
        let ypos: HashMap<usize, DVector<f64>> = ests
            .iter()
            .map(|&j| (j, cfg.position(y.trajectories[j].state_at(t).unwrap())))
            .collect();
        let dist = |i: usize, j: usize| (&xpos[&i] - &ypos[&j]).norm().powf(cfg.p).min(cp);
        let states = enumerate_states(&truths, &ests, &dist, cp);

        if t == 1 {
            value = states.iter().map(StepState::cost).collect();
            back.push(vec![(0, false); states.len()]);
        } else {
            let common_t: Vec<usize> = truths.iter().copied().filter(|i| prev_truths.contains(i)).collect();
            let common_e: Vec<usize> = ests.iter().copied().filter(|j| prev_ests.contains(j)).collect();
            let key = |pairs: &[(u8, u8)]| -> u128 {
                pairs
                    .iter()
                    .filter(|(i, j)| common_t.contains(&(*i as usize)) && common_e.contains(&(*j as usize)))
                    .fold(0u128, |acc, &(i, j)| acc | bit(i, j))
            };
            let prev_layer = layers.last().unwrap();
            let mut group: HashMap<u128, (f64, usize)> = HashMap::new();
            let mut best = (f64::INFINITY, 0usize);
            for (s, st) in prev_layer.iter().enumerate() {
                let v = value[s];
                let e = group.entry(key(&st.pairs)).or_insert((f64::INFINITY, usize::MAX));
                if v < e.0 {
                    *e = (v, s);
                }
                if v < best.0 {
                    best = (v, s);
                }
            }
            let mut next_value = Vec::with_capacity(states.len());
            let mut next_back = Vec::with_capacity(states.len());
            for st in &states {
                let stay = group.get(&key(&st.pairs)).copied();
                let switched = best.0 + switch_cost;
                let (v, from, sw) = match stay {
                    Some((sv, si)) if sv <= switched => (sv, si, false),
                    _ => (switched, best.1, true),
                };
                next_value.push(st.cost() + v);
                next_back.push((from, sw));
            }
            value = next_value;
            back.push(next_back);
        }
        layers.push(states);
        prev_truths = truths;
        prev_ests = ests;
    }

    if k == 0 {
        return Ok(MetricBreakdown::from_parts(0.0, 0.0, 0.0, 0.0, cfg.p));
    }
    let mut s = 0;
    for i in 1..value.len() {
        if value[i] < value[s] {
            s = i;
        }
    }
    let (mut loc, mut missed, mut false_targets, mut switches) = (0.0, 0.0, 0.0, 0usize);
    for t in (0..k).rev() {
        let st = &layers[t][s];
        loc += st.loc;
        missed += st.missed;
        false_targets += st.false_targets;
        let (from, sw) = back[t][s];
        if t > 0 && sw {
            switches += 1;
        }
        s = from;
    }
    Ok(MetricBreakdown::from_parts(
        loc,
        missed,
        false_targets,
        switch_cost * switches as f64,
        cfg.p,
    ))
}

/// Sum over `t = 1..=k` of per-step GOSPA^p between the states of the
/// trajectories alive at `k`.
pub fn summed_gospa(truth: &TrajectorySet, est: &TrajectorySet, cfg: &MetricConfig, k: usize) -> MetricBreakdown {
    let x = truth.alive_at(k);
    let y = est.alive_at(k);
    let (mut loc, mut missed, mut fa) = (0.0, 0.0, 0.0);
    for t in 1..=k {
        let (_, b) = gospa(&x.states_at(t), &y.states_at(t), cfg);
        loc += b.localization;
        missed += b.missed;
        fa += b.false_targets;
    }
    MetricBreakdown::from_parts(loc, missed, fa, 0.0, cfg.p)
}

/// Sum over `t = 1..=k` of per-step OSPA^p between the states of the
/// trajectories alive at `k`.
pub fn summed_ospa(truth: &TrajectorySet, est: &TrajectorySet, cfg: &MetricConfig, k: usize) -> f64 {
    let x = truth.alive_at(k);
    let y = est.alive_at(k);
    (1..=k)
        .map(|t| ospa(&x.states_at(t), &y.states_at(t), cfg).powf(cfg.p))
        .sum()
}

/// RMS error at step `k` over runs: `sqrt(Σ_i d_i² / (N k))`, where the
/// inputs are the per-run squared errors `d_i²`.
pub fn rms_over_runs(squared_errors: &[f64], k: usize) -> f64 {
    if squared_errors.is_empty() || k == 0 {
        return 0.0;
    }
    (squared_errors.iter().sum::<f64>() / (squared_errors.len() as f64 * k as f64)).sqrt()
}

/// RMS over time steps of per-step RMS errors `d(k)`.
pub fn rms_over_time(per_step: &[f64]) -> f64 {
    if per_step.is_empty() {
        return 0.0;
    }
    (per_step.iter().map(|d| d * d).sum::<f64>() / per_step.len() as f64).sqrt()
}
