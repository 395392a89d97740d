//! Gaussian-mixture trajectory PHD and CPHD filters, plus the tagged
//! PHD/CPHD track-building baselines.
//!
//! The recursion per time step is: predict (append the new state to every
//! component, add births), L-scan truncation, update, pruning/absorption,
//! estimation.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cardesf::{
    self, psi_factor, psi_factor_without, update_cardinality, CardinalityPmf, ClutterCardinality,
    PsiInputs, DEFAULT_N_MAX,
};
use crate::error::{Error, Result};
use crate::scenario::{Trajectory, TrajectorySet};
use crate::trajgauss::{
    lscan_truncate, predict_component, GmTrajectoryPhd, Innovation, LinearModels,
    TrajectoryComponent, TrajectoryCovariance,
};

#[derive(Debug, Clone, PartialEq)]
pub struct BirthComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Poisson birth PHD as a Gaussian mixture over single states. The TCPHD
/// uses `cardinality` when given, otherwise a truncated Poisson with the
/// mixture's total weight.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthModel {
    pub components: Vec<BirthComponent>,
    pub cardinality: Option<CardinalityPmf>,
}

impl BirthModel {
    pub fn four_target() -> Self {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![225.0, 100.0, 225.0, 100.0]));
        let means = [[85.0, 0.0, 140.0, 0.0], [-5.0, 0.0, 220.0, 0.0], [7.0, 0.0, 50.0, 0.0]];
        BirthModel {
            components: means
                .iter()
                .map(|m| BirthComponent {
                    weight: 0.1,
                    mean: DVector::from_row_slice(m),
                    cov: cov.clone(),
                })
                .collect(),
            cardinality: None,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    pub fn cardinality_pmf(&self, n_max: usize) -> CardinalityPmf {
        self.cardinality
            .clone()
            .unwrap_or_else(|| CardinalityPmf::poisson(self.total_weight(), n_max))
    }

    /// Birth components as length-one trajectories starting at `k`.
    pub fn trajectory_components(&self, k: usize) -> Result<Vec<TrajectoryComponent>> {
        self.components
            .iter()
            .map(|b| {
                Ok(TrajectoryComponent {
                    weight: b.weight,
                    birth_time: k,
                    mean: b.mean.clone(),
                    cov: TrajectoryCovariance::dense(b.cov.clone(), b.mean.len())?,
                })
            })
            .collect()
    }

    pub fn validate(&self, state_dim: usize) -> Result<()> {
        for (i, c) in self.components.iter().enumerate() {
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return Err(Error::Config(format!("birth component {i}: negative weight")));
            }
            if c.mean.len() != state_dim || c.cov.shape() != (state_dim, state_dim) {
                return Err(Error::Config(format!("birth component {i}: wrong dimension")));
            }
            if c.cov.clone().cholesky().is_none() {
                return Err(Error::Config(format!("birth component {i}: covariance is not SPD")));
            }
        }
        Ok(())
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Region {
    /// `[lo, hi]^2`.
    pub fn square(lo: f64, hi: f64) -> Self {
        Region {
            min: vec![lo, lo],
            max: vec![hi, hi],
        }
    }

    pub fn area(&self) -> f64 {
        self.min.iter().zip(&self.max).map(|(a, b)| b - a).product()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.min.len(),
            self.min.iter().zip(&self.max).map(|(a, b)| a + (b - a) * rng.gen::<f64>()),
        )
    }
}

/// Clutter: uniform spatial density on `region` with the given
/// cardinality distribution of mean `rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClutterModel {
    pub rate: f64,
    pub region: Region,
    pub cardinality: ClutterCardinality,
}

impl ClutterModel {
    pub fn poisson(rate: f64, region: Region) -> Self {
        ClutterModel {
            rate,
            region,
            cardinality: ClutterCardinality::Poisson { rate },
        }
    }

    /// Spatial density `c̆(z)`; uniform everywhere, including outside the region.
    pub fn spatial_density(&self, _z: &DVector<f64>) -> f64 {
        1.0 / self.region.area()
    }

    /// Clutter intensity `λ_c c̆(z)`.
    pub fn intensity(&self, z: &DVector<f64>) -> f64 {
        self.rate * self.spatial_density(z)
    }

    pub fn validate(&self, measurement_dim: usize) -> Result<()> {
        if self.region.min.len() != measurement_dim || self.region.max.len() != measurement_dim {
            return Err(Error::Config("clutter region dimension differs from n_z".into()));
        }
        if !(self.region.area() > 0.0) {
            return Err(Error::Config("clutter region must have positive area".into()));
        }
        if !(self.rate >= 0.0) {
            return Err(Error::Config("clutter rate must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Mixture reduction and L-scan settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionConfig {
    pub prune_threshold: f64,
    pub absorb_threshold: f64,
    pub max_components: usize,
    pub lscan: usize,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            prune_threshold: 1e-4,
            absorb_threshold: 4.0,
            max_components: 30,
            lscan: 1,
        }
    }
}

impl ReductionConfig {
    pub fn with_lscan(self, lscan: usize) -> Self {
        ReductionConfig { lscan, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prune_threshold >= 0.0) || !(self.absorb_threshold >= 0.0) {
            return Err(Error::Config("reduction thresholds must be nonnegative".into()));
        }
        if self.max_components < 1 || self.lscan < 1 {
            return Err(Error::Config("max_components and lscan must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TphdState {
    pub phd: GmTrajectoryPhd,
}

impl TphdState {
    pub fn initial() -> Self {
        TphdState {
            phd: GmTrajectoryPhd::empty(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcphdState {
    pub phd: GmTrajectoryPhd,
    pub cardinality: CardinalityPmf,
}

impl TcphdState {
    pub fn initial(n_max: usize) -> Self {
        TcphdState {
            phd: GmTrajectoryPhd::empty(0),
            cardinality: CardinalityPmf::delta(0, n_max),
        }
    }
}

/// PHD prediction shared by the TPHD and TCPHD.
pub fn predict_phd(
    phd: &GmTrajectoryPhd,
    models: &LinearModels,
    birth: &BirthModel,
    lscan: usize,
) -> Result<GmTrajectoryPhd> {
    let k = phd.time + 1;
    let mut components = Vec::with_capacity(phd.len() + birth.components.len());
    for c in &phd.components {
        components.push(lscan_truncate(&predict_component(c, models)?, lscan));
    }
    components.extend(birth.trajectory_components(k)?);
    Ok(GmTrajectoryPhd { components, time: k })
}

pub fn tphd_predict(
    state: &TphdState,
    models: &LinearModels,
    birth: &BirthModel,
    lscan: usize,
) -> Result<TphdState> {
    Ok(TphdState {
        phd: predict_phd(&state.phd, models, birth, lscan)?,
    })
}

pub fn tcphd_predict(
    state: &TcphdState,
    models: &LinearModels,
    birth: &BirthModel,
    lscan: usize,
) -> Result<TcphdState> {
    let n_max = state.cardinality.n_max();
    Ok(TcphdState {
        phd: predict_phd(&state.phd, models, birth, lscan)?,
        cardinality: cardesf::predict_cardinality(
            &state.cardinality,
            models.p_survival,
            &birth.cardinality_pmf(n_max),
        ),
    })
}

/// Innovations and `ln q_j(z)` for every (component, measurement) pair.
struct Likelihoods {
    innovations: Vec<Innovation>,
    /// `ln_q[j][z]`
    ln_q: Vec<Vec<f64>>,
}

impl Likelihoods {
    fn new(
        phd: &GmTrajectoryPhd,
        measurements: &[DVector<f64>],
        models: &LinearModels,
        gate: Option<f64>,
    ) -> Result<Self> {
        let innovations = phd
            .components
            .iter()
            .map(|c| Innovation::new(c, models))
            .collect::<Result<Vec<_>>>()?;
        let ln_q = innovations
            .iter()
            .map(|inn| {
                measurements
                    .iter()
                    .map(|z| {
                        let l = inn.log_likelihood(z);
                        match gate {
                            Some(g) if -2.0 * (l - inn.log_likelihood(inn.predicted_measurement())) > g => {
                                f64::NEG_INFINITY
                            }
                            _ => l,
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Likelihoods { innovations, ln_q })
    }
}

/// Updated components together with the index of the prior component each
/// one descends from.
struct UpdatedMixture {
    components: Vec<TrajectoryComponent>,
    parents: Vec<usize>,
}

fn assemble_update(
    phd: &GmTrajectoryPhd,
    measurements: &[DVector<f64>],
    lik: &Likelihoods,
    missed_scale: f64,
    detection_weight: impl Fn(usize, usize) -> f64,
    gated: bool,
) -> UpdatedMixture {
    let j_count = phd.len();
    let mut components = Vec::with_capacity(j_count * (1 + measurements.len()));
    let mut parents = Vec::with_capacity(components.capacity());
    for (j, c) in phd.components.iter().enumerate() {
        let mut m = c.clone();
        m.weight *= missed_scale;
        components.push(m);
        parents.push(j);
    }
    for (zi, z) in measurements.iter().enumerate() {
        for (j, c) in phd.components.iter().enumerate() {
            if gated && lik.ln_q[j][zi] == f64::NEG_INFINITY {
                continue;
            }
            let w = detection_weight(j, zi);
            components.push(lik.innovations[j].posterior(c, z, w));
            parents.push(j);
        }
    }
    UpdatedMixture {
        components,
        parents,
    }
}

fn tphd_update_inner(
    phd: &GmTrajectoryPhd,
    measurements: &[DVector<f64>],
    models: &LinearModels,
    clutter: &ClutterModel,
    gate: Option<f64>,
) -> Result<UpdatedMixture> {
    let lik = Likelihoods::new(phd, measurements, models, gate)?;
    let ln_pd = models.p_detection.ln();
    let ln_w: Vec<f64> = phd.components.iter().map(|c| c.weight.ln()).collect();
    // Per measurement: log-normaliser of the detection weights after a
    // max-shift over the clutter and all component terms.
    let ln_norm: Vec<f64> = measurements
        .iter()
        .enumerate()
        .map(|(zi, z)| {
            let mut terms: Vec<f64> = (0..phd.len()).map(|j| ln_pd + ln_w[j] + lik.ln_q[j][zi]).collect();
            terms.push(clutter.intensity(z).ln());
            cardesf::log_sum_exp(&terms)
        })
        .collect();
    Ok(assemble_update(
        phd,
        measurements,
        &lik,
        1.0 - models.p_detection,
        |j, zi| {
            let t = ln_pd + ln_w[j] + lik.ln_q[j][zi];
            if t == f64::NEG_INFINITY {
                0.0
            } else {
                (t - ln_norm[zi]).exp()
            }
        },
        gate.is_some(),
    ))
}

/// TPHD update: missed-detection copies scaled by `1 − p_D` followed by one
/// Kalman-updated copy per (measurement, component).
pub fn tphd_update(
    state: &TphdState,
    measurements: &[DVector<f64>],
    models: &LinearModels,
    clutter: &ClutterModel,
) -> Result<TphdState> {
    tphd_update_gated(state, measurements, models, clutter, None)
}

/// [`tphd_update`] with an optional ellipsoidal gate on the squared
/// Mahalanobis distance of the innovation; gated pairs are dropped.
pub fn tphd_update_gated(
    state: &TphdState,
    measurements: &[DVector<f64>],
    models: &LinearModels,
    clutter: &ClutterModel,
    gate: Option<f64>,
) -> Result<TphdState> {
    let up = tphd_update_inner(&state.phd, measurements, models, clutter, gate)?;
    Ok(TphdState {
        phd: GmTrajectoryPhd {
            components: up.components,
            time: state.phd.time,
        },
    })
}

fn tcphd_update_inner(
    phd: &GmTrajectoryPhd,
    cardinality: &CardinalityPmf,
    measurements: &[DVector<f64>],
    models: &LinearModels,
    clutter: &ClutterModel,
    gate: Option<f64>,
) -> Result<(UpdatedMixture, CardinalityPmf)> {
    let lik = Likelihoods::new(phd, measurements, models, gate)?;
    let weights = phd.weights();
    let densities: Vec<f64> = measurements.iter().map(|z| clutter.spatial_density(z)).collect();
    let inputs = PsiInputs::new(
        &weights,
        &lik.ln_q,
        &densities,
        models.p_detection,
        &clutter.cardinality,
        cardinality.n_max(),
    )?;
    let psi0 = psi_factor(0, &inputs)?;
    let psi1 = psi_factor(1, &inputs)?;
    let ln_den = psi0.ln_inner(cardinality);
    if !ln_den.is_finite() {
        return Err(Error::ImpossibleMeasurement);
    }
    let updated_card = update_cardinality(cardinality, &psi0)?;
    let missed = (1.0 - models.p_detection) * (psi1.ln_inner(cardinality) - ln_den).exp();
    let ln_psi1_without: Vec<f64> = (0..measurements.len())
        .map(|zi| psi_factor_without(1, &inputs, zi).map(|p| p.ln_inner(cardinality)))
        .collect::<Result<_>>()?;
    let ln_pd = models.p_detection.ln();
    let mixture = assemble_update(
        phd,
        measurements,
        &lik,
        missed,
        |j, zi| {
            let t = ln_pd + weights[j].ln() + lik.ln_q[j][zi];
            if t == f64::NEG_INFINITY || ln_psi1_without[zi] == f64::NEG_INFINITY {
                0.0
            } else {
                (t + ln_psi1_without[zi] - densities[zi].ln() - ln_den).exp()
            }
        },
        gate.is_some(),
    );
    Ok((mixture, updated_card))
}

/// TCPHD update: cardinality reweighted by Ψ⁰, PHD weights from the Ψ¹
/// ratios, Kalman algebra identical to the TPHD.
pub fn tcphd_update(
    state: &TcphdState,
    measurements: &[DVector<f64>],
    models: &LinearModels,
    clutter: &ClutterModel,
) -> Result<TcphdState> {
    tcphd_update_gated(state, measurements, models, clutter, None)
}

pub fn tcphd_update_gated(
    state: &TcphdState,
    measurements: &[DVector<f64>],
    models: &LinearModels,
    clutter: &ClutterModel,
    gate: Option<f64>,
) -> Result<TcphdState> {
    let (up, card) = tcphd_update_inner(&state.phd, &state.cardinality, measurements, models, clutter, gate)?;
    Ok(TcphdState {
        phd: GmTrajectoryPhd {
            components: up.components,
            time: state.phd.time,
        },
        cardinality: card,
    })
}

/// Pruning and absorption. Returns `(absorbing component index, summed
/// weight)` for each survivor.
///
/// Components with weight `<= prune_threshold` are dropped. The heaviest
/// remaining component absorbs every remaining component whose current
/// state mean lies within `absorb_threshold` squared Mahalanobis distance
/// (under the absorber's current-state covariance); it keeps its own
/// trajectory and takes the summed weight. Ties go to the lowest index.
pub fn reduce_components(components: &[TrajectoryComponent], config: &ReductionConfig) -> Vec<(usize, f64)> {
    let mut remaining: Vec<usize> = (0..components.len())
        .filter(|&j| components[j].weight > config.prune_threshold)
        .collect();
    let trailing: Vec<DVector<f64>> = components.iter().map(|c| c.trailing_mean()).collect();
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let mut best = remaining[0];
        for &i in &remaining[1..] {
            if components[i].weight > components[best].weight {
                best = i;
            }
        }
        let chol = components[best].trailing_cov().cholesky();
        let mut total = 0.0;
        remaining.retain(|&i| {
            let absorbed = if i == best {
                true
            } else {
                match &chol {
                    Some(ch) => {
                        let d = &trailing[i] - &trailing[best];
                        d.dot(&ch.solve(&d)) <= config.absorb_threshold
                    }
                    None => trailing[i] == trailing[best],
                }
            };
            if absorbed {
                total += components[i].weight;
            }
            !absorbed
        });
        out.push((best, total));
    }
    if out.len() > config.max_components {
        let mut order: Vec<usize> = (0..out.len()).collect();
        order.sort_by(|&a, &b| out[b].1.total_cmp(&out[a].1).then(a.cmp(&b)));
        let mut keep = vec![false; out.len()];
        for &i in order.iter().take(config.max_components) {
            keep[i] = true;
        }
        out = out
            .into_iter()
            .zip(keep)
            .filter_map(|(o, k)| k.then_some(o))
            .collect();
    }
    out
}

pub fn reduce_phd(phd: &GmTrajectoryPhd, config: &ReductionConfig) -> GmTrajectoryPhd {
    GmTrajectoryPhd {
        components: reduce_components(&phd.components, config)
            .into_iter()
            .map(|(j, w)| {
                let mut c = phd.components[j].clone();
                c.weight = w;
                c
            })
            .collect(),
        time: phd.time,
    }
}

pub fn reduce_tphd(state: &TphdState, config: &ReductionConfig) -> TphdState {
    TphdState {
        phd: reduce_phd(&state.phd, config),
    }
}

/// The cardinality distribution is left untouched.
pub fn reduce_tcphd(state: &TcphdState, config: &ReductionConfig) -> TcphdState {
    TcphdState {
        phd: reduce_phd(&state.phd, config),
        cardinality: state.cardinality.clone(),
    }
}

/// Indices of the `n` heaviest components, heaviest first, ties to the
/// lowest index.
pub fn top_components(weights: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    order.truncate(n.min(weights.len()));
    order
}

fn component_trajectory(c: &TrajectoryComponent) -> Trajectory {
    Trajectory {
        birth_time: c.birth_time,
        states: c.state_means(),
    }
}

/// `round(Σ w)` capped at the number of components.
pub fn tphd_cardinality_estimate(phd: &GmTrajectoryPhd) -> usize {
    let total: f64 = phd.components.iter().map(|c| c.weight).sum();
    (total.round().max(0.0) as usize).min(phd.len())
}

fn estimate_top(phd: &GmTrajectoryPhd, n: usize) -> TrajectorySet {
    TrajectorySet::new(
        top_components(&phd.weights(), n)
            .into_iter()
            .map(|j| component_trajectory(&phd.components[j]))
            .collect(),
    )
}

pub fn estimate_tphd(state: &TphdState) -> TrajectorySet {
    estimate_top(&state.phd, tphd_cardinality_estimate(&state.phd))
}

pub fn estimate_tcphd(state: &TcphdState) -> TrajectorySet {
    estimate_top(&state.phd, state.cardinality.argmax().min(state.phd.len()))
}

/// Keeps only the most recent state, restarting the component at `time`.
fn discard_history(c: &TrajectoryComponent, time: usize) -> TrajectoryComponent {
    TrajectoryComponent {
        weight: c.weight,
        birth_time: time,
        mean: c.trailing_mean(),
        cov: c.cov.trailing_only(),
    }
}

/// State of a tagged PHD or CPHD filter: a mixture over current states whose
/// components carry tags, and the tracks built from the tags.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedState {
    pub phd: GmTrajectoryPhd,
    pub tags: Vec<u64>,
    /// Present for the tagged CPHD.
    pub cardinality: Option<CardinalityPmf>,
    next_tag: u64,
    /// Track segments per tag; the last one is the open segment.
    tracks: HashMap<u64, Vec<Trajectory>>,
}

impl TaggedState {
    pub fn phd_initial() -> Self {
        TaggedState {
            phd: GmTrajectoryPhd::empty(0),
            tags: Vec::new(),
            cardinality: None,
            next_tag: 0,
            tracks: HashMap::new(),
        }
    }

    pub fn cphd_initial(n_max: usize) -> Self {
        TaggedState {
            cardinality: Some(CardinalityPmf::delta(0, n_max)),
            ..TaggedState::phd_initial()
        }
    }

    /// Every stored track segment of `tag`, oldest first.
    pub fn track_history(&self, tag: u64) -> &[Trajectory] {
        self.tracks.get(&tag).map(Vec::as_slice).unwrap_or(&[])
    }

    fn record(&mut self, tag: u64, time: usize, state: DVector<f64>) -> Trajectory {
        let segments = self.tracks.entry(tag).or_default();
        match segments.last_mut() {
            Some(open) if open.end_time() + 1 == time => open.states.push(state),
            _ => segments.push(Trajectory {
                birth_time: time,
                states: vec![state],
            }),
        }
        segments.last().unwrap().clone()
    }
}

/// One step of the tagged PHD (no cardinality) or tagged CPHD filter.
///
/// The recursion is the standard GM-PHD/GM-CPHD over current states. Tags
/// follow components through prediction, update and absorption; births get
/// fresh tags. Estimation takes the `N̂` heaviest components with pairwise
/// distinct tags and extends each tag's track by the component mean. A
/// track is extended only if the tag was also estimated at the previous
/// step; otherwise a new segment starts.
pub fn tagged_step(
    state: &TaggedState,
    measurements: &[DVector<f64>],
    models: &LinearModels,
    birth: &BirthModel,
    clutter: &ClutterModel,
    config: &ReductionConfig,
) -> Result<(TaggedState, TrajectorySet)> {
    let k = state.phd.time + 1;
    let mut next = state.clone();

    // prediction over current states
    let mut components = Vec::with_capacity(state.phd.len() + birth.components.len());
    let mut tags = Vec::with_capacity(components.capacity());
    for (c, &tag) in state.phd.components.iter().zip(&state.tags) {
        components.push(discard_history(&predict_component(c, models)?, k));
        tags.push(tag);
    }
    for b in birth.trajectory_components(k)? {
        components.push(b);
        tags.push(next.next_tag);
        next.next_tag += 1;
    }
    let predicted = GmTrajectoryPhd { components, time: k };

    let (updated, card) = match &state.cardinality {
        None => (tphd_update_inner(&predicted, measurements, models, clutter, None)?, None),
        Some(prior) => {
            let n_max = prior.n_max();
            let card = cardesf::predict_cardinality(prior, models.p_survival, &birth.cardinality_pmf(n_max));
            let (up, post) = tcphd_update_inner(&predicted, &card, measurements, models, clutter, None)?;
            (up, Some(post))
        }
    };
    let tags: Vec<u64> = updated.parents.iter().map(|&p| tags[p]).collect();

    let kept = reduce_components(&updated.components, config);
    next.phd = GmTrajectoryPhd {
        components: kept
            .iter()
            .map(|&(j, w)| {
                let mut c = updated.components[j].clone();
                c.weight = w;
                c
            })
            .collect(),
        time: k,
    };
    next.tags = kept.iter().map(|&(j, _)| tags[j]).collect();
    next.cardinality = card;

    let n_hat = match &next.cardinality {
        None => tphd_cardinality_estimate(&next.phd),
        Some(c) => c.argmax().min(next.phd.len()),
    };
    let mut chosen: Vec<u64> = Vec::with_capacity(n_hat);
    let mut estimates = Vec::with_capacity(n_hat);
    for j in top_components(&next.phd.weights(), next.phd.len()) {
        if estimates.len() == n_hat {
            break;
        }
        let tag = next.tags[j];
        if chosen.contains(&tag) {
            continue;
        }
        chosen.push(tag);
        let mean = next.phd.components[j].trailing_mean();
        estimates.push(next.record(tag, k, mean));
    }
    Ok((next, TrajectorySet::new(estimates)))
}

/// The four filters compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FilterKind {
    #[serde(rename = "tphd")]
    Tphd,
    #[serde(rename = "tcphd")]
    Tcphd,
    #[serde(rename = "tagged-phd")]
    TaggedPhd,
    #[serde(rename = "tagged-cphd")]
    TaggedCphd,
}

impl FilterKind {
    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::Tphd => "tphd",
            FilterKind::Tcphd => "tcphd",
            FilterKind::TaggedPhd => "tagged-phd",
            FilterKind::TaggedCphd => "tagged-cphd",
        }
    }

    pub fn is_tagged(&self) -> bool {
        matches!(self, FilterKind::TaggedPhd | FilterKind::TaggedCphd)
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tphd" => Some(FilterKind::Tphd),
            "tcphd" => Some(FilterKind::Tcphd),
            "tagged-phd" => Some(FilterKind::TaggedPhd),
            "tagged-cphd" => Some(FilterKind::TaggedCphd),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterState {
    Tphd(TphdState),
    Tcphd(TcphdState),
    Tagged(TaggedState),
}

/// Output of one filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub estimates: TrajectorySet,
    pub n_hat: usize,
}

/// Drives one filter through time with fixed models.
#[derive(Debug, Clone)]
pub struct FilterRunner {
    pub kind: FilterKind,
    pub models: LinearModels,
    pub birth: BirthModel,
    pub clutter: ClutterModel,
    pub reduction: ReductionConfig,
    pub gate: Option<f64>,
    pub state: FilterState,
}

impl FilterRunner {
    pub fn new(
        kind: FilterKind,
        models: LinearModels,
        birth: BirthModel,
        clutter: ClutterModel,
        reduction: ReductionConfig,
    ) -> Self {
        Self::with_n_max(kind, models, birth, clutter, reduction, DEFAULT_N_MAX)
    }

    pub fn with_n_max(
        kind: FilterKind,
        models: LinearModels,
        birth: BirthModel,
        clutter: ClutterModel,
        reduction: ReductionConfig,
        n_max: usize,
    ) -> Self {
        let state = match kind {
            FilterKind::Tphd => FilterState::Tphd(TphdState::initial()),
            FilterKind::Tcphd => FilterState::Tcphd(TcphdState::initial(n_max)),
            FilterKind::TaggedPhd => FilterState::Tagged(TaggedState::phd_initial()),
            FilterKind::TaggedCphd => FilterState::Tagged(TaggedState::cphd_initial(n_max)),
        };
        FilterRunner {
            kind,
            models,
            birth,
            clutter,
            reduction,
            gate: None,
            state,
        }
    }

    pub fn time(&self) -> usize {
        match &self.state {
            FilterState::Tphd(s) => s.phd.time,
            FilterState::Tcphd(s) => s.phd.time,
            FilterState::Tagged(s) => s.phd.time,
        }
    }

    /// Predict, update, reduce and estimate with the measurements of the
    /// next time step.
    pub fn step(&mut self, measurements: &[DVector<f64>]) -> Result<StepOutput> {
        let k = self.time() + 1;
        self.step_inner(measurements).map_err(|e| Error::FilterStep {
            step: k,
            source: Box::new(e),
        })
    }

    fn step_inner(&mut self, measurements: &[DVector<f64>]) -> Result<StepOutput> {
        let cfg = &self.reduction;
        match &self.state {
            FilterState::Tphd(s) => {
                let predicted = tphd_predict(s, &self.models, &self.birth, cfg.lscan)?;
                let updated = tphd_update_gated(&predicted, measurements, &self.models, &self.clutter, self.gate)?;
                let reduced = reduce_tphd(&updated, cfg);
                let estimates = estimate_tphd(&reduced);
                let n_hat = estimates.len();
                self.state = FilterState::Tphd(reduced);
                Ok(StepOutput { estimates, n_hat })
            }
            FilterState::Tcphd(s) => {
                let predicted = tcphd_predict(s, &self.models, &self.birth, cfg.lscan)?;
                let updated = tcphd_update_gated(&predicted, measurements, &self.models, &self.clutter, self.gate)?;
                let reduced = reduce_tcphd(&updated, cfg);
                let estimates = estimate_tcphd(&reduced);
                let n_hat = estimates.len();
                self.state = FilterState::Tcphd(reduced);
                Ok(StepOutput { estimates, n_hat })
            }
            FilterState::Tagged(s) => {
                let (next, estimates) =
                    tagged_step(s, measurements, &self.models, &self.birth, &self.clutter, cfg)?;
                let n_hat = estimates.len();
                self.state = FilterState::Tagged(next);
                Ok(StepOutput { estimates, n_hat })
            }
        }
    }
}
