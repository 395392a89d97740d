//! Seeded Monte Carlo campaigns: configuration schema, paired runs of every
//! configured filter on the same measurements, aggregation and CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cardesf::{CardinalityPmf, ClutterCardinality, DEFAULT_N_MAX};
use crate::error::{Error, Result};
use crate::filters::{
    BirthComponent, BirthModel, ClutterModel, FilterKind, FilterRunner, ReductionConfig, Region,
};
use crate::metrics::{
    rms_over_runs, rms_over_time, summed_gospa, summed_ospa, trajectory_metric, MetricBreakdown,
    MetricConfig,
};
use crate::scenario::{
    generate_measurements, generate_truth, substream, InitialState, ScenarioConfig,
    ScriptedTrajectory, StreamPurpose, TruthScript, RNG_DESCRIPTION,
};
use crate::trajgauss::LinearModels;

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    ConstantVelocity2d {
        sampling_time: f64,
        q: f64,
        measurement_variance: f64,
        p_survival: f64,
        p_detection: f64,
    },
    Linear {
        transition: Vec<Vec<f64>>,
        process_noise: Vec<Vec<f64>>,
        observation: Vec<Vec<f64>>,
        measurement_noise: Vec<Vec<f64>>,
        p_survival: f64,
        p_detection: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_diag: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthSpec {
    pub components: Vec<BirthComponentSpec>,
    /// Birth cardinality pmf for the CPHD-type filters; defaults to a
    /// truncated Poisson with the mixture's total weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClutterSpec {
    pub rate: f64,
    pub region: Region,
    /// Clutter cardinality pmf; defaults to Poisson(rate).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptSpec {
    pub birth: usize,
    pub death: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birth_component: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthSpec {
    Scripted(Vec<ScriptSpec>),
    Sampled { initial: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_steps: usize,
    pub seed: u64,
    pub models: ModelSpec,
    pub birth: BirthSpec,
    pub clutter: ClutterSpec,
    pub truth: TruthSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionSpec {
    pub prune_threshold: f64,
    pub absorb_threshold: f64,
    pub max_components: usize,
}

impl Default for ReductionSpec {
    fn default() -> Self {
        let d = ReductionConfig::default();
        ReductionSpec {
            prune_threshold: d.prune_threshold,
            absorb_threshold: d.absorb_threshold,
            max_components: d.max_components,
        }
    }
}

fn default_lscan() -> Vec<usize> {
    vec![1]
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// L-scan depths; ignored by the tagged filters.
    #[serde(default = "default_lscan")]
    pub lscan: Vec<usize>,
    #[serde(default)]
    pub reduction: ReductionSpec,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<f64>,
}

fn default_runs() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Top-level experiment document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub scenario: ScenarioSpec,
    pub filters: Vec<FilterSpec>,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("{what}: ragged or empty matrix")));
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

impl ExperimentFile {
    /// Four targets, 100 steps, all six trajectory filter variants
    /// (L = 1, 2, 5) and both tagged baselines.
    pub fn four_target() -> Self {
        let lscan = vec![1, 2, 5];
        let filter = |kind, lscan: Vec<usize>| FilterSpec {
            kind,
            lscan,
            reduction: ReductionSpec::default(),
            n_max: DEFAULT_N_MAX,
            gate: None,
        };
        ExperimentFile {
            scenario: ScenarioSpec {
                n_steps: 100,
                seed: 1,
                models: ModelSpec::ConstantVelocity2d {
                    sampling_time: 0.5,
                    q: 3.24,
                    measurement_variance: 4.0,
                    p_survival: 0.99,
                    p_detection: 0.9,
                },
                birth: BirthSpec {
                    components: [[85.0, 0.0, 140.0, 0.0], [-5.0, 0.0, 220.0, 0.0], [7.0, 0.0, 50.0, 0.0]]
                        .iter()
                        .map(|m| BirthComponentSpec {
                            weight: 0.1,
                            mean: m.to_vec(),
                            cov: None,
                            cov_diag: Some(vec![225.0, 100.0, 225.0, 100.0]),
                        })
                        .collect(),
                    cardinality: None,
                },
                clutter: ClutterSpec {
                    rate: 50.0,
                    region: Region::square(0.0, 2000.0),
                    cardinality: None,
                },
                truth: TruthSpec::Scripted(
                    [(1, 79, 0), (1, 79, 0), (5, 69, 1), (10, 94, 2)]
                        .into_iter()
                        .map(|(birth, death, c)| ScriptSpec {
                            birth,
                            death,
                            initial: None,
                            birth_component: Some(c),
                            offset: None,
                        })
                        .collect(),
                ),
            },
            filters: vec![
                filter(FilterKind::Tphd, lscan.clone()),
                filter(FilterKind::Tcphd, lscan),
                filter(FilterKind::TaggedPhd, vec![1]),
                filter(FilterKind::TaggedCphd, vec![1]),
            ],
            metric: MetricConfig::default(),
            n_runs: 500,
            output: default_output(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("experiment file serialises")
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        let s = &self.scenario;
        let models = match &s.models {
            ModelSpec::ConstantVelocity2d {
                sampling_time,
                q,
                measurement_variance,
                p_survival,
                p_detection,
            } => LinearModels::constant_velocity_2d(*sampling_time, *q, *measurement_variance, *p_survival, *p_detection),
            ModelSpec::Linear {
                transition,
                process_noise,
                observation,
                measurement_noise,
                p_survival,
                p_detection,
            } => LinearModels {
                transition: matrix(transition, "transition")?,
                process_noise: matrix(process_noise, "process_noise")?,
                observation: matrix(observation, "observation")?,
                measurement_noise: matrix(measurement_noise, "measurement_noise")?,
                p_survival: *p_survival,
                p_detection: *p_detection,
            },
        };
        let components = s
            .birth
            .components
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let cov = match (&b.cov, &b.cov_diag) {
                    (Some(c), None) => matrix(c, "birth cov")?,
                    (None, Some(d)) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
                    _ => {
                        return Err(Error::Config(format!(
                            "birth component {i}: give exactly one of cov or cov_diag"
                        )))
                    }
                };
                Ok(BirthComponent {
                    weight: b.weight,
                    mean: DVector::from_column_slice(&b.mean),
                    cov,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let birth = BirthModel {
            components,
            cardinality: s.birth.cardinality.clone().map(CardinalityPmf::new).transpose()?,
        };
        let clutter = ClutterModel {
            rate: s.clutter.rate,
            region: s.clutter.region.clone(),
            cardinality: match &s.clutter.cardinality {
                None => ClutterCardinality::Poisson { rate: s.clutter.rate },
                Some(p) => ClutterCardinality::Pmf(CardinalityPmf::new(p.clone())?),
            },
        };
        let truth = match &s.truth {
            TruthSpec::Scripted(script) => TruthScript::Scripted(
                script
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let initial = match (&t.initial, t.birth_component) {
                            (Some(x), None) => InitialState::Explicit(DVector::from_column_slice(x)),
                            (None, Some(c)) => InitialState::FromBirth {
                                component: c,
                                offset: t.offset.as_ref().map(|o| DVector::from_column_slice(o)),
                            },
                            _ => {
                                return Err(Error::Config(format!(
                                    "truth entry {i}: give exactly one of initial or birth_component"
                                )))
                            }
                        };
                        Ok(ScriptedTrajectory {
                            birth: t.birth,
                            death: t.death,
                            initial,
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
            TruthSpec::Sampled { initial } => TruthScript::Sampled {
                initial: initial.iter().map(|x| DVector::from_column_slice(x)).collect(),
            },
        };
        let cfg = ScenarioConfig {
            n_steps: s.n_steps,
            models,
            birth,
            clutter,
            truth,
            seed: s.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Expands filters over their L values.
    pub fn variants(&self) -> Result<Vec<FilterVariant>> {
        let mut out: Vec<FilterVariant> = Vec::new();
        for f in &self.filters {
            let lscans: Vec<usize> = if f.kind.is_tagged() { vec![1] } else { f.lscan.clone() };
            if lscans.is_empty() {
                return Err(Error::Config(format!("filter {} has no lscan values", f.kind.name())));
            }
            for l in lscans {
                let reduction = ReductionConfig {
                    prune_threshold: f.reduction.prune_threshold,
                    absorb_threshold: f.reduction.absorb_threshold,
                    max_components: f.reduction.max_components,
                    lscan: l,
                };
                reduction.validate()?;
                let label = if f.kind.is_tagged() {
                    f.kind.name().to_string()
                } else {
                    format!("{}_L{}", f.kind.name(), l)
                };
                if out.iter().any(|v| v.label == label) {
                    return Err(Error::Config(format!("duplicate filter variant {label}")));
                }
                out.push(FilterVariant {
                    label,
                    kind: f.kind,
                    reduction,
                    n_max: f.n_max,
                    gate: f.gate,
                });
            }
        }
        if out.is_empty() {
            return Err(Error::Config("at least one filter is required".into()));
        }
        Ok(out)
    }

    pub fn build(&self) -> Result<Experiment> {
        if self.n_runs < 1 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        self.metric.validate()?;
        Ok(Experiment {
            scenario: self.scenario_config()?,
            variants: self.variants()?,
            n_runs: self.n_runs,
            metric: self.metric.clone(),
            output: self.output.clone(),
        })
    }
}

// ---------------------------------------------------------------------------
// Runs

#[derive(Debug, Clone, PartialEq)]
pub struct FilterVariant {
    pub label: String,
    pub kind: FilterKind,
    pub reduction: ReductionConfig,
    pub n_max: usize,
    pub gate: Option<f64>,
}

impl FilterVariant {
    pub fn runner(&self, scenario: &ScenarioConfig) -> FilterRunner {
        let mut r = FilterRunner::with_n_max(
            self.kind,
            scenario.models.clone(),
            scenario.birth.clone(),
            scenario.clutter.clone(),
            self.reduction,
            self.n_max,
        );
        r.gate = self.gate;
        r
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub scenario: ScenarioConfig,
    pub variants: Vec<FilterVariant>,
    pub n_runs: usize,
    pub metric: MetricConfig,
    pub output: PathBuf,
}

/// Per-step scores of one filter in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Trajectory metric decomposition (unnormalised p-th powers).
    pub metric: MetricBreakdown,
    /// Summed per-step GOSPA over the same window.
    pub gospa: MetricBreakdown,
    /// Summed per-step OSPA^p over the same window.
    pub ospa_pow: f64,
    pub n_hat: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRunRecord {
    pub label: String,
    pub steps: Vec<StepRecord>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub true_counts: Vec<usize>,
    pub filters: Vec<FilterRunRecord>,
}

/// Ground truth and measurements of one run.
pub fn simulate_run(
    scenario: &ScenarioConfig,
    run: usize,
) -> Result<(crate::scenario::TrajectorySet, Vec<Vec<DVector<f64>>>)> {
    let truth = generate_truth(scenario, &mut substream(scenario.seed, run as u64, StreamPurpose::Truth))?;
    let mut rng = substream(scenario.seed, run as u64, StreamPurpose::Measurements);
    let measurements = (1..=scenario.n_steps)
        .map(|k| generate_measurements(&truth, scenario, k, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok((truth, measurements))
}

/// Runs every filter variant on the same simulated measurements and scores
/// the estimates at every step.
pub fn run_single(experiment: &Experiment, run: usize) -> Result<RunRecord> {
    let scenario = &experiment.scenario;
    let (truth, measurements) = simulate_run(scenario, run)?;
    let mut filters = Vec::with_capacity(experiment.variants.len());
    for v in &experiment.variants {
        let start = Instant::now();
        let mut runner = v.runner(scenario);
        let mut steps = Vec::with_capacity(scenario.n_steps);
        for (i, z) in measurements.iter().enumerate() {
            let k = i + 1;
            let out = runner.step(z)?;
            let metric = trajectory_metric(&truth, &out.estimates, &experiment.metric, k)?;
            steps.push(StepRecord {
                metric,
                gospa: summed_gospa(&truth, &out.estimates, &experiment.metric, k),
                ospa_pow: summed_ospa(&truth, &out.estimates, &experiment.metric, k),
                n_hat: out.n_hat,
            });
        }
        filters.push(FilterRunRecord {
            label: v.label.clone(),
            steps,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(RunRecord {
        run,
        seed: scenario.seed,
        true_counts: (1..=scenario.n_steps).map(|k| truth.count_alive_at(k)).collect(),
        filters,
    })
}

/// Per-step RMS values of one filter over all runs.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSummary {
    pub label: String,
    pub kind: FilterKind,
    pub lscan: usize,
    /// `d(k)` for the trajectory metric and its four costs, `k = 1..N_s`.
    pub d: Vec<f64>,
    pub loc: Vec<f64>,
    pub missed: Vec<f64>,
    pub false_targets: Vec<f64>,
    pub switching: Vec<f64>,
    pub gospa: Vec<f64>,
    pub ospa: Vec<f64>,
    pub mean_n_hat: Vec<f64>,
    pub d_total: f64,
    pub gospa_total: f64,
    pub ospa_total: f64,
    pub mean_wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub runs: Vec<RunRecord>,
    pub summaries: Vec<FilterSummary>,
}

impl ExperimentResult {
    pub fn summary(&self, label: &str) -> Option<&FilterSummary> {
        self.summaries.iter().find(|s| s.label == label)
    }
}

/// Aggregates run records into per-filter RMS curves.
pub fn aggregate(experiment: &Experiment, runs: &[RunRecord]) -> Vec<FilterSummary> {
    let n_steps = experiment.scenario.n_steps;
    experiment
        .variants
        .iter()
        .enumerate()
        .map(|(f, v)| {
            let per_step = |get: &dyn Fn(&StepRecord) -> f64| -> Vec<f64> {
                (0..n_steps)
                    .map(|i| {
                        let vals: Vec<f64> = runs.iter().map(|r| get(&r.filters[f].steps[i])).collect();
                        rms_over_runs(&vals, i + 1)
                    })
                    .collect()
            };
            let d = per_step(&|s| s.metric.total_pow());
            let gospa = per_step(&|s| s.gospa.total_pow());
            let ospa = per_step(&|s| s.ospa_pow);
            let mean_n_hat = (0..n_steps)
                .map(|i| runs.iter().map(|r| r.filters[f].steps[i].n_hat as f64).sum::<f64>() / runs.len() as f64)
                .collect();
            FilterSummary {
                label: v.label.clone(),
                kind: v.kind,
                lscan: v.reduction.lscan,
                d_total: rms_over_time(&d),
                gospa_total: rms_over_time(&gospa),
                ospa_total: rms_over_time(&ospa),
                d,
                loc: per_step(&|s| s.metric.localization),
                missed: per_step(&|s| s.metric.missed),
                false_targets: per_step(&|s| s.metric.false_targets),
                switching: per_step(&|s| s.metric.switching),
                gospa,
                ospa,
                mean_n_hat,
                mean_wall_seconds: runs.iter().map(|r| r.filters[f].wall_seconds).sum::<f64>() / runs.len() as f64,
            }
        })
        .collect()
}

/// Runs the whole campaign. Runs are distributed over `jobs` threads; each
/// run draws from its own substreams so results do not depend on `jobs`.
pub fn run_experiment(experiment: &Experiment, jobs: usize) -> Result<ExperimentResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let runs: Vec<RunRecord> = pool.install(|| {
        (0..experiment.n_runs)
            .into_par_iter()
            .map(|r| run_single(experiment, r))
            .collect::<Result<Vec<_>>>()
    })?;
    let summaries = aggregate(experiment, &runs);
    Ok(ExperimentResult { runs, summaries })
}

// ---------------------------------------------------------------------------
// Output

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Per-step CSV of one filter: `k,d,loc,missed,false,switch,n_hat`.
pub fn filter_csv(s: &FilterSummary) -> String {
    let mut out = String::from("k,d,loc,missed,false,switch,n_hat\n");
    for i in 0..s.d.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            i + 1,
            s.d[i],
            s.loc[i],
            s.missed[i],
            s.false_targets[i],
            s.switching[i],
            s.mean_n_hat[i]
        );
    }
    out
}

/// Mean estimated cardinality per step: `k` then one column per filter.
pub fn cardinality_csv(summaries: &[FilterSummary]) -> String {
    let mut out = String::from("k");
    for s in summaries {
        out.push(',');
        out.push_str(&s.label);
    }
    out.push('\n');
    let n = summaries.first().map_or(0, |s| s.mean_n_hat.len());
    for i in 0..n {
        let _ = write!(out, "{}", i + 1);
        for s in summaries {
            let _ = write!(out, ",{}", s.mean_n_hat[i]);
        }
        out.push('\n');
    }
    out
}

/// One row per filter variant: RMS over all steps for the trajectory
/// metric, summed GOSPA and summed OSPA.
pub fn summary_csv(summaries: &[FilterSummary], n_runs: usize) -> String {
    let mut out = String::from("filter,kind,lscan,tm,gospa,ospa,runs\n");
    for s in summaries {
        let lscan = if s.kind.is_tagged() { "-".to_string() } else { s.lscan.to_string() };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.label,
            s.kind.name(),
            lscan,
            s.d_total,
            s.gospa_total,
            s.ospa_total,
            n_runs
        );
    }
    out
}

/// Table laid out with one column per filter variant and one row per metric.
pub fn summary_table(summaries: &[FilterSummary]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<8}", "");
    for s in summaries {
        let _ = write!(out, " {:>12}", s.label);
    }
    out.push('\n');
    for (name, get) in [
        ("TM", &(|s: &FilterSummary| s.d_total) as &dyn Fn(&FilterSummary) -> f64),
        ("GOSPA", &|s: &FilterSummary| s.gospa_total),
        ("OSPA", &|s: &FilterSummary| s.ospa_total),
    ] {
        let _ = write!(out, "{name:<8}");
        for s in summaries {
            let _ = write!(out, " {:>12.2}", get(s));
        }
        out.push('\n');
    }
    out
}

/// Every per-run, per-step score.
pub fn runs_csv(runs: &[RunRecord]) -> String {
    let mut out = String::from("run,seed,filter,k,n_true,tm2,loc2,missed2,false2,switch2,gospa2,ospa2,n_hat\n");
    for r in runs {
        for f in &r.filters {
            for (i, s) in f.steps.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.run,
                    r.seed,
                    f.label,
                    i + 1,
                    r.true_counts[i],
                    s.metric.total_pow(),
                    s.metric.localization,
                    s.metric.missed,
                    s.metric.false_targets,
                    s.metric.switching,
                    s.gospa.total_pow(),
                    s.ospa_pow,
                    s.n_hat
                );
            }
        }
    }
    out
}

/// Writes all outputs into `dir`, returning the written file names.
pub fn write_outputs(experiment: &Experiment, result: &ExperimentResult, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    for s in &result.summaries {
        let name = format!("{}.csv", s.label);
        write_file(dir, &name, &filter_csv(s))?;
        written.push(name);
    }
    let files = [
        ("summary.csv", summary_csv(&result.summaries, experiment.n_runs)),
        ("summary.txt", summary_table(&result.summaries)),
        ("cardinality.csv", cardinality_csv(&result.summaries)),
        ("runs.csv", runs_csv(&result.runs)),
        ("metadata.json", metadata_json(experiment)),
        ("timing.json", timing_json(result)),
    ];
    for (name, contents) in files {
        write_file(dir, name, &contents)?;
        written.push(name.to_string());
    }
    Ok(written)
}

fn metadata_json(experiment: &Experiment) -> String {
    let value = serde_json::json!({
        "rng": RNG_DESCRIPTION,
        "seed": experiment.scenario.seed,
        "n_runs": experiment.n_runs,
        "n_steps": experiment.scenario.n_steps,
        "filters": experiment.variants.iter().map(|v| &v.label).collect::<Vec<_>>(),
        "truth_initial_states": "scripted targets start from a draw of their birth component at the scripted birth time, redrawn every run",
        "metric": experiment.metric,
    });
    serde_json::to_string_pretty(&value).expect("metadata serialises") + "\n"
}

fn timing_json(result: &ExperimentResult) -> String {
    let value = serde_json::json!(result
        .summaries
        .iter()
        .map(|s| serde_json::json!({"filter": s.label, "mean_wall_seconds": s.mean_wall_seconds}))
        .collect::<Vec<_>>());
    serde_json::to_string_pretty(&value).expect("timing serialises") + "\n"
}
