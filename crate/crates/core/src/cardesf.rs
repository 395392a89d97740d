//! Cardinality distributions, elementary symmetric functions and the
//! cardinality factors of the CPHD-type update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default truncation of cardinality distributions.
pub const DEFAULT_N_MAX: usize = 100;

/// Probability mass function of a cardinality on `0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalityPmf {
    probs: Vec<f64>,
}

impl CardinalityPmf {
    /// Normalises `probs`. Fails on negative, non-finite or all-zero input.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Config("cardinality pmf must have at least one entry".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config("cardinality pmf entries must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Config("cardinality pmf has zero mass".into()));
        }
        Ok(CardinalityPmf {
            probs: probs.into_iter().map(|p| p / total).collect(),
        })
    }

    /// Point mass at `n` on `0..=n_max`.
    pub fn delta(n: usize, n_max: usize) -> Self {
        let mut probs = vec![0.0; n_max.max(n) + 1];
        probs[n] = 1.0;
        CardinalityPmf { probs }
    }

    /// Poisson(`rate`) truncated to `0..=n_max` and renormalised.
    pub fn poisson(rate: f64, n_max: usize) -> Self {
        let probs = (0..=n_max).map(|n| poisson_ln_pmf(rate, n).exp()).collect();
        CardinalityPmf::new(probs).unwrap_or_else(|_| CardinalityPmf::delta(0, n_max))
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// Mode; ties go to the smallest cardinality.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (n, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = n;
            }
        }
        best
    }
}

/// Cardinality distribution of the clutter process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClutterCardinality {
    Poisson { rate: f64 },
    Pmf(CardinalityPmf),
}

impl ClutterCardinality {
    pub fn ln_pmf(&self, m: usize) -> f64 {
        match self {
            ClutterCardinality::Poisson { rate } => poisson_ln_pmf(*rate, m),
            ClutterCardinality::Pmf(pmf) => pmf.get(m).ln(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ClutterCardinality::Poisson { rate } => *rate,
            ClutterCardinality::Pmf(pmf) => pmf.mean(),
        }
    }
}

/// `ln(n!)` by direct summation; exact enough for the sizes used here.
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn ln_factorial_table(n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    t.push(0.0);
    let mut acc = 0.0;
    for k in 1..=n {
        acc += (k as f64).ln();
        t.push(acc);
    }
    t
}

pub fn poisson_ln_pmf(rate: f64, n: usize) -> f64 {
    if rate == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -rate + n as f64 * rate.ln() - ln_factorial(n)
}

/// Elementary symmetric functions `e_0..e_n` of a multiset.
#[derive(Debug, Clone, PartialEq)]
pub struct EsfTable {
    pub values: Vec<f64>,
}

/// One-pass recurrence: each new element `v` maps `e_j <- e_j + v e_{j-1}`.
pub fn esf(values: &[f64]) -> EsfTable {
    let mut e = Vec::with_capacity(values.len() + 1);
    e.push(1.0);
    for &v in values {
        e.push(0.0);
        for j in (1..e.len()).rev() {
            e[j] += v * e[j - 1];
        }
    }
    EsfTable { values: e }
}

/// Natural log of the elementary symmetric functions, evaluated on inputs
/// rescaled by their maximum so large multisets do not overflow.
pub fn ln_esf(values: &[f64]) -> Vec<f64> {
    let scale = values.iter().fold(0.0_f64, |a, &v| a.max(v));
    if !(scale > 0.0) || !scale.is_finite() {
        let mut out = vec![f64::NEG_INFINITY; values.len() + 1];
        out[0] = 0.0;
        return out;
    }
    let scaled: Vec<f64> = values.iter().map(|v| v / scale).collect();
    let ln_scale = scale.ln();
    esf(&scaled)
        .values
        .iter()
        .enumerate()
        .map(|(j, e)| e.ln() + j as f64 * ln_scale)
        .collect()
}

/// Binomial thinning by `p_survival` followed by convolution with the birth
/// cardinality. Returns the truncated, renormalised result and the mass lost
/// beyond `n_max` (the prior's truncation level).
pub fn predict_cardinality_with_loss(
    prior: &CardinalityPmf,
    p_survival: f64,
    birth: &CardinalityPmf,
) -> (CardinalityPmf, f64) {
    let n_max = prior.n_max();
    let lf = ln_factorial_table(n_max);
    let ln_ps = p_survival.ln();
    let ln_pd = (1.0 - p_survival).ln();
    let mut survived = vec![0.0; n_max + 1];
    for (n, &pn) in prior.probs.iter().enumerate() {
        if pn == 0.0 {
            continue;
        }
        for (j, slot) in survived.iter_mut().enumerate().take(n + 1) {
            let ln_binom = lf[n] - lf[j] - lf[n - j];
            let ln_s = if j == 0 { 0.0 } else { j as f64 * ln_ps };
            let ln_d = if n == j { 0.0 } else { (n - j) as f64 * ln_pd };
            let v = (ln_binom + ln_s + ln_d).exp();
            if v.is_finite() {
                *slot += pn * v;
            }
        }
    }
    let mut out = vec![0.0; n_max + 1];
    let mut lost = 0.0;
    for (j, &sj) in survived.iter().enumerate() {
        if sj == 0.0 {
            continue;
        }
        for (b, &pb) in birth.probs.iter().enumerate() {
            let m = j + b;
            if m <= n_max {
                out[m] += sj * pb;
            } else {
                lost += sj * pb;
            }
        }
    }
    let total: f64 = out.iter().sum();
    let probs = out.into_iter().map(|p| p / total).collect();
    (CardinalityPmf { probs }, lost)
}

pub fn predict_cardinality(prior: &CardinalityPmf, p_survival: f64, birth: &CardinalityPmf) -> CardinalityPmf {
    predict_cardinality_with_loss(prior, p_survival, birth).0
}

/// Ψ values over `n = 0..=n_max`, stored as `values[n] * exp(log_scale)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiFactor {
    pub log_scale: f64,
    pub values: Vec<f64>,
}

impl PsiFactor {
    fn from_logs(logs: Vec<f64>) -> Self {
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_scale = if max.is_finite() { max } else { 0.0 };
        PsiFactor {
            log_scale,
            values: logs.into_iter().map(|l| (l - log_scale).exp()).collect(),
        }
    }

    /// Ψ(n) in the linear domain (may overflow for extreme inputs).
    pub fn linear(&self) -> Vec<f64> {
        let s = self.log_scale.exp();
        self.values.iter().map(|v| v * s).collect()
    }

    /// `ln <Ψ, ρ>`.
    pub fn ln_inner(&self, rho: &CardinalityPmf) -> f64 {
        let dot: f64 = self
            .values
            .iter()
            .zip(rho.probs.iter())
            .map(|(a, b)| a * b)
            .sum();
        dot.ln() + self.log_scale
    }
}

/// Inputs shared by every Ψ evaluation of one update step.
#[derive(Debug, Clone)]
pub struct PsiInputs<'a> {
    /// Λ(w, Z): `(p_D / c̆(z)) wᵀ q(z)` for each measurement.
    pub lambda: Vec<f64>,
    /// `<1, w>`.
    pub weight_total: f64,
    pub p_detection: f64,
    pub clutter: &'a ClutterCardinality,
    pub n_max: usize,
}

impl<'a> PsiInputs<'a> {
    /// Builds Λ from component weights, the per-(component, measurement)
    /// log-likelihoods `ln q_j(z)` and the clutter spatial densities.
    pub fn new(
        weights: &[f64],
        ln_likelihoods: &[Vec<f64>],
        clutter_density: &[f64],
        p_detection: f64,
        clutter: &'a ClutterCardinality,
        n_max: usize,
    ) -> Result<Self> {
        let weight_total: f64 = weights.iter().sum();
        if !(weight_total > 0.0) {
            return Err(Error::DegenerateMixture);
        }
        let lambda = clutter_density
            .iter()
            .enumerate()
            .map(|(zi, &c)| {
                let ln_terms: Vec<f64> = weights
                    .iter()
                    .zip(ln_likelihoods.iter())
                    .map(|(w, row)| w.ln() + row[zi])
                    .collect();
                p_detection / c * log_sum_exp(&ln_terms).exp()
            })
            .collect();
        Ok(PsiInputs {
            lambda,
            weight_total,
            p_detection,
            clutter,
            n_max,
        })
    }
}

/// Ψ^u[w, Z](n) for `n = 0..=n_max`, evaluated term-wise in the log domain.
pub fn psi_factor(u: usize, inputs: &PsiInputs<'_>) -> Result<PsiFactor> {
    psi_from_lambda(u, &inputs.lambda, inputs)
}

/// Ψ^u[w, Z \ {z_skip}].
pub fn psi_factor_without(u: usize, inputs: &PsiInputs<'_>, skip: usize) -> Result<PsiFactor> {
    let lambda: Vec<f64> = inputs
        .lambda
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != skip)
        .map(|(_, v)| *v)
        .collect();
    psi_from_lambda(u, &lambda, inputs)
}

fn psi_from_lambda(u: usize, lambda: &[f64], inputs: &PsiInputs<'_>) -> Result<PsiFactor> {
    if !(inputs.weight_total > 0.0) {
        return Err(Error::DegenerateMixture);
    }
    let m = lambda.len();
    let n_max = inputs.n_max;
    let lf = ln_factorial_table(n_max.max(m));
    let ln_w = inputs.weight_total.ln();
    // e_j(Λ) / <1,w>^j == e_j(Λ / <1,w>)
    let scaled: Vec<f64> = lambda.iter().map(|l| l / inputs.weight_total).collect();
    let ln_e = ln_esf(&scaled);
    let ln_miss = (1.0 - inputs.p_detection).ln();
    let ln_clutter: Vec<f64> = (0..=m)
        .map(|j| lf[m - j] + inputs.clutter.ln_pmf(m - j))
        .collect();

    let mut logs = vec![f64::NEG_INFINITY; n_max + 1];
    let mut terms = Vec::with_capacity(m + 1);
    for (n, slot) in logs.iter_mut().enumerate() {
        if n < u {
            continue;
        }
        let top = m.min(n - u);
        terms.clear();
        for j in 0..=top {
            let rest = n - j - u;
            let miss = if rest == 0 { 0.0 } else { rest as f64 * ln_miss };
            terms.push(
                ln_clutter[j] + miss - u as f64 * ln_w + lf[n] - lf[rest] + ln_e[j],
            );
        }
        *slot = log_sum_exp(&terms);
    }
    Ok(PsiFactor::from_logs(logs))
}

/// `ρ(n) ∝ Ψ^0(n) ρ(n)`.
pub fn update_cardinality(prior: &CardinalityPmf, psi0: &PsiFactor) -> Result<CardinalityPmf> {
    let unnorm: Vec<f64> = prior
        .probs
        .iter()
        .enumerate()
        .map(|(n, p)| p * psi0.values.get(n).copied().unwrap_or(0.0))
        .collect();
    let total: f64 = unnorm.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ImpossibleMeasurement);
    }
    Ok(CardinalityPmf {
        probs: unnorm.into_iter().map(|p| p / total).collect(),
    })
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
