//! Ground truth, measurement synthesis and sampling of IID-cluster
//! multitrajectory densities.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::cardesf::{CardinalityPmf, ClutterCardinality};
use crate::error::{Error, Result};
use crate::filters::{BirthModel, ClutterModel};
use crate::trajgauss::{LinearModels, TrajectoryComponent};

/// A trajectory: birth time and the contiguous sequence of states from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub birth_time: usize,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn end_time(&self) -> usize {
        self.birth_time + self.states.len() - 1
    }

    pub fn duration(&self) -> usize {
        self.states.len()
    }

    pub fn is_alive_at(&self, k: usize) -> bool {
        !self.states.is_empty() && self.birth_time <= k && k <= self.end_time()
    }

    pub fn state_at(&self, t: usize) -> Option<&DVector<f64>> {
        if t < self.birth_time {
            return None;
        }
        self.states.get(t - self.birth_time)
    }

    /// The trajectory restricted to time steps up to `k`, if it has started.
    pub fn truncated(&self, k: usize) -> Option<Trajectory> {
        if k < self.birth_time || self.states.is_empty() {
            return None;
        }
        let len = (k - self.birth_time + 1).min(self.states.len());
        Some(Trajectory {
            birth_time: self.birth_time,
            states: self.states[..len].to_vec(),
        })
    }
}

/// A finite set of trajectories.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectorySet {
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        TrajectorySet { trajectories }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Trajectories alive at `k`, with their states up to `k`.
    pub fn alive_at(&self, k: usize) -> TrajectorySet {
        TrajectorySet {
            trajectories: self
                .trajectories
                .iter()
                .filter(|t| t.is_alive_at(k))
                .filter_map(|t| t.truncated(k))
                .collect(),
        }
    }

    /// States of all trajectories present at time `t`.
    pub fn states_at(&self, t: usize) -> Vec<DVector<f64>> {
        self.trajectories
            .iter()
            .filter_map(|tr| tr.state_at(t).cloned())
            .collect()
    }

    pub fn count_alive_at(&self, k: usize) -> usize {
        self.trajectories.iter().filter(|t| t.is_alive_at(k)).count()
    }
}

/// Where an initial truth state comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Explicit(DVector<f64>),
    /// Drawn from birth component `component`, then shifted by `offset`.
    FromBirth {
        component: usize,
        offset: Option<DVector<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedTrajectory {
    pub birth: usize,
    /// Last time step at which the target exists.
    pub death: usize,
    pub initial: InitialState,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TruthScript {
    Scripted(Vec<ScriptedTrajectory>),
    /// Births from the birth model, deaths by survival coin flips, plus the
    /// given seed states born at step 1.
    Sampled { initial: Vec<DVector<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_steps: usize,
    pub models: LinearModels,
    pub birth: BirthModel,
    pub clutter: ClutterModel,
    pub truth: TruthScript,
    pub seed: u64,
}

impl ScenarioConfig {
    /// The four-target scenario: two targets born together at step 1 from
    /// the first birth component, two more at steps 5 and 10.
    pub fn four_target() -> Self {
        let truth = [(1, 79, 0), (1, 79, 0), (5, 69, 1), (10, 94, 2)]
            .into_iter()
            .map(|(birth, death, component)| ScriptedTrajectory {
                birth,
                death,
                initial: InitialState::FromBirth {
                    component,
                    offset: None,
                },
            })
            .collect();
        ScenarioConfig {
            n_steps: 100,
            models: LinearModels::constant_velocity_2d(0.5, 3.24, 4.0, 0.99, 0.9),
            birth: BirthModel::four_target(),
            clutter: ClutterModel::poisson(50.0, crate::filters::Region::square(0.0, 2000.0)),
            truth: TruthScript::Scripted(truth),
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 1 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        self.models.validate()?;
        self.birth.validate(self.models.state_dim())?;
        self.clutter.validate(self.models.measurement_dim())?;
        if let TruthScript::Scripted(script) = &self.truth {
            for (i, s) in script.iter().enumerate() {
                if s.birth < 1 || s.death < s.birth || s.death > self.n_steps {
                    return Err(Error::Config(format!(
                        "scripted trajectory {i}: birth {} / death {} outside [1, {}]",
                        s.birth, s.death, self.n_steps
                    )));
                }
                match &s.initial {
                    InitialState::Explicit(x) if x.len() != self.models.state_dim() => {
                        return Err(Error::Config(format!("scripted trajectory {i}: initial state has wrong dimension")));
                    }
                    InitialState::FromBirth { component, offset } => {
                        if *component >= self.birth.components.len() {
                            return Err(Error::Config(format!(
                                "scripted trajectory {i}: birth component {component} does not exist"
                            )));
                        }
                        if offset.as_ref().is_some_and(|o| o.len() != self.models.state_dim()) {
                            return Err(Error::Config(format!("scripted trajectory {i}: offset has wrong dimension")));
                        }
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Purpose tags for random substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    Truth = 1,
    Measurements = 2,
    Sampler = 3,
}

/// Human-readable description of [`substream`], recorded in run metadata.
pub const RNG_DESCRIPTION: &str =
    "ChaCha8Rng::seed_from_u64(seed) with set_stream((run_index << 8) | purpose); purposes: truth=1, measurements=2, sampler=3";

/// Independent generator for `(seed, run, purpose)`.
pub fn substream(seed: u64, run: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((run << 8) | purpose as u64);
    rng
}

/// Draws from `N(mean, cov)`; `cov` only needs to be PSD.
pub fn sample_gaussian<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let n = mean.len();
    let white = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    if let Some(chol) = cov.clone().cholesky() {
        return mean + chol.l() * white;
    }
    let eig = SymmetricEigen::new((cov + cov.transpose()) * 0.5);
    let sqrt = DVector::from_iterator(n, eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()));
    mean + &eig.eigenvectors * sqrt.component_mul(&white)
}

fn propagate<R: Rng + ?Sized>(x: &DVector<f64>, models: &LinearModels, rng: &mut R) -> DVector<f64> {
    let zero = DVector::zeros(x.len());
    &models.transition * x + sample_gaussian(&zero, &models.process_noise, rng)
}

fn sample_birth<R: Rng + ?Sized>(birth: &BirthModel, rng: &mut R) -> Option<DVector<f64>> {
    let total = birth.total_weight();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.gen::<f64>() * total;
    for c in &birth.components {
        if u < c.weight {
            return Some(sample_gaussian(&c.mean, &c.cov, rng));
        }
        u -= c.weight;
    }
    birth
        .components
        .last()
        .map(|c| sample_gaussian(&c.mean, &c.cov, rng))
}

/// Generates the ground-truth trajectory set.
pub fn generate_truth<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<TrajectorySet> {
    config.validate()?;
    let models = &config.models;
    match &config.truth {
        TruthScript::Scripted(script) => {
            let mut out = Vec::with_capacity(script.len());
            for s in script {
                let x0 = match &s.initial {
                    InitialState::Explicit(x) => x.clone(),
                    InitialState::FromBirth { component, offset } => {
                        let c = &config.birth.components[*component];
                        let x = sample_gaussian(&c.mean, &c.cov, rng);
                        match offset {
                            Some(o) => x + o,
                            None => x,
                        }
                    }
                };
                let mut states = Vec::with_capacity(s.death - s.birth + 1);
                states.push(x0);
                for _ in s.birth..s.death {
                    let next = propagate(states.last().unwrap(), models, rng);
                    states.push(next);
                }
                out.push(Trajectory {
                    birth_time: s.birth,
                    states,
                });
            }
            Ok(TrajectorySet::new(out))
        }
        TruthScript::Sampled { initial } => {
            let mut all: Vec<Trajectory> = Vec::new();
            let mut alive: Vec<usize> = Vec::new();
            for k in 1..=config.n_steps {
                let mut still = Vec::with_capacity(alive.len());
                for &i in &alive {
                    if rng.gen::<f64>() < models.p_survival {
                        let next = propagate(all[i].states.last().unwrap(), models, rng);
                        all[i].states.push(next);
                        still.push(i);
                    }
                }
                alive = still;
                if k == 1 {
                    for x in initial {
                        all.push(Trajectory {
                            birth_time: 1,
                            states: vec![x.clone()],
                        });
                        alive.push(all.len() - 1);
                    }
                }
                let rate = config.birth.total_weight();
                if rate > 0.0 {
                    let n = Poisson::new(rate)
                        .map_err(|e| Error::Config(format!("birth rate: {e}")))?
                        .sample(rng) as usize;
                    for _ in 0..n {
                        if let Some(x) = sample_birth(&config.birth, rng) {
                            all.push(Trajectory {
                                birth_time: k,
                                states: vec![x],
                            });
                            alive.push(all.len() - 1);
                        }
                    }
                }
            }
            Ok(TrajectorySet::new(all))
        }
    }
}

fn sample_count<R: Rng + ?Sized>(card: &ClutterCardinality, rng: &mut R) -> Result<usize> {
    match card {
        ClutterCardinality::Poisson { rate } => {
            if *rate == 0.0 {
                return Ok(0);
            }
            Ok(Poisson::new(*rate)
                .map_err(|e| Error::Config(format!("clutter rate: {e}")))?
                .sample(rng) as usize)
        }
        ClutterCardinality::Pmf(pmf) => Ok(sample_pmf(pmf, rng)),
    }
}

/// Inverse-CDF draw from a cardinality distribution.
pub fn sample_pmf<R: Rng + ?Sized>(pmf: &CardinalityPmf, rng: &mut R) -> usize {
    let u = rng.gen::<f64>();
    let mut acc = 0.0;
    for (n, p) in pmf.probs().iter().enumerate() {
        acc += p;
        if u < acc {
            return n;
        }
    }
    pmf.n_max()
}

/// Measurements at step `k`: detections of alive targets plus clutter,
/// returned in random order.
pub fn generate_measurements<R: Rng + ?Sized>(
    truth: &TrajectorySet,
    config: &ScenarioConfig,
    k: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let models = &config.models;
    let zero = DVector::zeros(models.measurement_dim());
    let mut out = Vec::new();
    for x in truth.states_at(k) {
        if rng.gen::<f64>() < models.p_detection {
            out.push(&models.observation * &x + sample_gaussian(&zero, &models.measurement_noise, rng));
        }
    }
    let n_clutter = sample_count(&config.clutter.cardinality, rng)?;
    for _ in 0..n_clutter {
        out.push(config.clutter.region.sample_uniform(rng));
    }
    out.shuffle(rng);
    Ok(out)
}

/// Draws one set from the IID-cluster multitrajectory density with
/// cardinality `cardinality` and single-trajectory density given by the
/// normalised mixture `mixture`.
///
/// The start time and duration are drawn first from the mass of each
/// `(t, i)` group; the states then come from the conditional density.
pub fn sample_iid_cluster<R: Rng + ?Sized>(
    cardinality: &CardinalityPmf,
    mixture: &[TrajectoryComponent],
    rng: &mut R,
) -> Result<TrajectorySet> {
    let total: f64 = mixture.iter().map(|c| c.weight).sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "single-trajectory density has total weight {total}, expected 1"
        )));
    }
    let mut groups: BTreeMap<(usize, usize), (f64, Vec<usize>)> = BTreeMap::new();
    for (j, c) in mixture.iter().enumerate() {
        let g = groups.entry((c.birth_time, c.duration())).or_insert((0.0, Vec::new()));
        g.0 += c.weight;
        g.1.push(j);
    }
    let groups: Vec<_> = groups.into_iter().filter(|(_, (w, _))| *w > 0.0).collect();
    let n = sample_pmf(cardinality, rng);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut u = rng.gen::<f64>() * total;
        let mut pick = groups.len() - 1;
        for (g, (_, (w, _))) in groups.iter().enumerate() {
            if u < *w {
                pick = g;
                break;
            }
            u -= w;
        }
        let (&(t, _), (gw, members)) = (&groups[pick].0, &groups[pick].1);
        let mut v = rng.gen::<f64>() * gw;
        let mut comp = *members.last().unwrap();
        for &j in members {
            if v < mixture[j].weight {
                comp = j;
                break;
            }
            v -= mixture[j].weight;
        }
        let c = &mixture[comp];
        let x = sample_gaussian(&c.mean, &c.cov.to_dense(), rng);
        let nx = c.state_dim();
        let states = (0..c.duration()).map(|s| x.rows(s * nx, nx).into_owned()).collect();
        out.push(Trajectory { birth_time: t, states });
    }
    Ok(TrajectorySet::new(out))
}
