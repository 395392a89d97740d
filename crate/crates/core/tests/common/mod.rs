//! Reference implementations written directly from the textbook equations,
//! sharing no code with the library beyond plain data types.

#![allow(dead_code)]

pub mod criteria;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use trajphd::cardesf::CardinalityPmf;
use trajphd::filters::{BirthComponent, BirthModel, ClutterModel, Region};
use trajphd::scenario::{InitialState, ScenarioConfig, ScriptedTrajectory, TruthScript};
use trajphd::trajgauss::LinearModels;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || (a - b).abs() < 1e-300
}

/// Relative closeness measured against the largest entry.
pub fn mat_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    a.shape() == b.shape() && (a - b).amax() <= tol * a.amax().max(b.amax()).max(1e-300)
}

pub fn vec_close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
    a.len() == b.len() && (a - b).amax() <= tol * a.amax().max(b.amax()).max(1.0)
}

pub fn random_matrix<R: Rng>(r: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_spd<R: Rng>(n: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let a = random_matrix(n, n, rng);
    (&a * a.transpose() + DMatrix::identity(n, n) * 0.5) * scale
}

pub fn gaussian_pdf(z: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = z - mean;
    let inv = cov.clone().try_inverse().expect("invertible");
    let q = (d.transpose() * inv * &d)[(0, 0)];
    let n = z.len() as f64;
    (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powf(n) * cov.determinant()).sqrt()
}

// ---------------------------------------------------------------------------
// Plain Kalman filter

pub fn kf_predict(m: &DVector<f64>, p: &DMatrix<f64>, f: &DMatrix<f64>, q: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    (f * m, f * p * f.transpose() + q)
}

/// Returns the posterior mean, covariance and measurement likelihood.
pub fn kf_update(
    m: &DVector<f64>,
    p: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>, f64) {
    let s = h * p * h.transpose() + r;
    let k = p * h.transpose() * s.clone().try_inverse().expect("invertible S");
    let zhat = h * m;
    let mean = m + &k * (z - &zhat);
    let cov = p - &k * &s * k.transpose();
    (mean, (&cov + cov.transpose()) * 0.5, gaussian_pdf(z, &zhat, &s))
}

// ---------------------------------------------------------------------------
// GM-PHD and GM-CPHD over current states

#[derive(Debug, Clone)]
pub struct Gaussian {
    pub w: f64,
    pub m: DVector<f64>,
    pub p: DMatrix<f64>,
}

pub struct OracleModel<'a> {
    pub models: &'a LinearModels,
    pub birth: &'a BirthModel,
    pub clutter: &'a ClutterModel,
    pub prune: f64,
    pub absorb: f64,
    pub max_components: usize,
}

pub fn phd_predict(mix: &[Gaussian], om: &OracleModel) -> Vec<Gaussian> {
    let f = &om.models.transition;
    let q = &om.models.process_noise;
    let mut out: Vec<Gaussian> = mix
        .iter()
        .map(|g| {
            let (m, p) = kf_predict(&g.m, &g.p, f, q);
            Gaussian {
                w: g.w * om.models.p_survival,
                m,
                p: (&p + p.transpose()) * 0.5,
            }
        })
        .collect();
    out.extend(om.birth.components.iter().map(|b| Gaussian {
        w: b.weight,
        m: b.mean.clone(),
        p: b.cov.clone(),
    }));
    out
}

struct Detected {
    m: Vec<DVector<f64>>,
    p: DMatrix<f64>,
    q: Vec<f64>,
}

fn detect(mix: &[Gaussian], z: &[DVector<f64>], om: &OracleModel) -> Vec<Detected> {
    let h = &om.models.observation;
    let r = &om.models.measurement_noise;
    mix.iter()
        .map(|g| {
            let mut ms = Vec::new();
            let mut qs = Vec::new();
            let mut cov = DMatrix::zeros(0, 0);
            for zz in z {
                let (m, p, q) = kf_update(&g.m, &g.p, h, r, zz);
                ms.push(m);
                qs.push(q);
                cov = p;
            }
            if z.is_empty() {
                cov = g.p.clone();
            }
            Detected { m: ms, p: cov, q: qs }
        })
        .collect()
}

/// Missed-detection terms first, then per measurement, per component.
pub fn phd_update(mix: &[Gaussian], z: &[DVector<f64>], om: &OracleModel) -> Vec<Gaussian> {
    let pd = om.models.p_detection;
    let det = detect(mix, z, om);
    let mut out: Vec<Gaussian> = mix
        .iter()
        .map(|g| Gaussian {
            w: (1.0 - pd) * g.w,
            m: g.m.clone(),
            p: g.p.clone(),
        })
        .collect();
    for (zi, zz) in z.iter().enumerate() {
        let num: Vec<f64> = mix.iter().zip(&det).map(|(g, d)| pd * g.w * d.q[zi]).collect();
        let den = om.clutter.rate * om.clutter.spatial_density(zz) + num.iter().sum::<f64>();
        for (j, d) in det.iter().enumerate() {
            out.push(Gaussian {
                w: num[j] / den,
                m: d.m[zi].clone(),
                p: d.p.clone(),
            });
        }
    }
    out
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |a, i| a * i as f64)
}

pub fn poisson_pmf(rate: f64, n: usize) -> f64 {
    (-rate).exp() * rate.powi(n as i32) / factorial(n)
}

/// Vieta expansion of Π (1 + v x).
pub fn esf_by_polynomial(v: &[f64]) -> Vec<f64> {
    let mut poly = vec![1.0];
    for &x in v {
        let mut next = vec![0.0; poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] += c * x;
        }
        poly = next;
    }
    poly
}

pub fn esf_brute_force(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut e = vec![0.0; n + 1];
    for mask in 0u32..(1 << n) {
        let prod: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| v[i]).product();
        e[mask.count_ones() as usize] += prod;
    }
    e
}

pub fn cphd_predict_cardinality(prior: &[f64], ps: f64, birth: &[f64]) -> Vec<f64> {
    let n_max = prior.len() - 1;
    let survived: Vec<f64> = (0..=n_max)
        .map(|j| {
            (j..=n_max)
                .map(|l| binomial(l, j) * ps.powi(j as i32) * (1.0 - ps).powi((l - j) as i32) * prior[l])
                .sum()
        })
        .collect();
    let mut out: Vec<f64> = (0..=n_max)
        .map(|n| (0..=n).map(|j| survived[j] * birth.get(n - j).copied().unwrap_or(0.0)).sum())
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// Ψ^u(n) for a Poisson clutter cardinality, linear domain.
pub fn cphd_psi(u: usize, lambda: &[f64], w_total: f64, pd: f64, clutter_rate: f64, n_max: usize) -> Vec<f64> {
    let e = esf_by_polynomial(lambda);
    let m = lambda.len();
    (0..=n_max)
        .map(|n| {
            (0..=m.min(n))
                .map(|j| {
                    if n < j + u {
                        return 0.0;
                    }
                    let perm = factorial(n) / factorial(n - j - u);
                    factorial(m - j) * poisson_pmf(clutter_rate, m - j) * perm * (1.0 - pd).powi((n - j - u) as i32)
                        / w_total.powi((j + u) as i32)
                        * e[j]
                })
                .sum()
        })
        .collect()
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// GM-CPHD update; returns the updated mixture and cardinality.
pub fn cphd_update(
    mix: &[Gaussian],
    card: &[f64],
    z: &[DVector<f64>],
    om: &OracleModel,
) -> (Vec<Gaussian>, Vec<f64>) {
    let pd = om.models.p_detection;
    let n_max = card.len() - 1;
    let rate = om.clutter.rate;
    let det = detect(mix, z, om);
    let w_total: f64 = mix.iter().map(|g| g.w).sum();
    let c: Vec<f64> = z.iter().map(|zz| om.clutter.spatial_density(zz)).collect();
    let lambda: Vec<f64> = (0..z.len())
        .map(|zi| mix.iter().zip(&det).map(|(g, d)| pd * g.w * d.q[zi]).sum::<f64>() / c[zi])
        .collect();
    let psi0 = cphd_psi(0, &lambda, w_total, pd, rate, n_max);
    let psi1 = cphd_psi(1, &lambda, w_total, pd, rate, n_max);
    let den = inner(&psi0, card);
    let mut new_card: Vec<f64> = psi0.iter().zip(card).map(|(a, b)| a * b / den).collect();
    let s: f64 = new_card.iter().sum();
    new_card.iter_mut().for_each(|p| *p /= s);
    let missed = (1.0 - pd) * inner(&psi1, card) / den;
    let mut out: Vec<Gaussian> = mix
        .iter()
        .map(|g| Gaussian {
            w: missed * g.w,
            m: g.m.clone(),
            p: g.p.clone(),
        })
        .collect();
    for (zi, cz) in c.iter().enumerate() {
        let mut rest = lambda.clone();
        rest.remove(zi);
        let psi1z = cphd_psi(1, &rest, w_total, pd, rate, n_max);
        let ratio = inner(&psi1z, card) / (cz * den);
        for (g, d) in mix.iter().zip(&det) {
            out.push(Gaussian {
                w: pd * g.w * d.q[zi] * ratio,
                m: d.m[zi].clone(),
                p: d.p.clone(),
            });
        }
    }
    (out, new_card)
}

/// Prune, absorb into the heaviest (it keeps its own moments), cap.
pub fn reduce(mix: &[Gaussian], om: &OracleModel) -> Vec<Gaussian> {
    let mut left: Vec<&Gaussian> = mix.iter().filter(|g| g.w > om.prune).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            if left[i].w > left[best].w {
                best = i;
            }
        }
        let head = left[best];
        let inv = head.p.clone().try_inverse().unwrap();
        let mut total = 0.0;
        let mut keep = Vec::new();
        for g in &left {
            let d = &g.m - &head.m;
            if (d.transpose() * &inv * &d)[(0, 0)] <= om.absorb {
                total += g.w;
            } else {
                keep.push(*g);
            }
        }
        out.push(Gaussian {
            w: total,
            m: head.m.clone(),
            p: head.p.clone(),
        });
        left = keep;
    }
    out.truncate(om.max_components);
    out
}

pub fn top_by_weight(mix: &[Gaussian], n: usize) -> Vec<DVector<f64>> {
    let mut idx: Vec<usize> = (0..mix.len()).collect();
    idx.sort_by(|&a, &b| mix[b].w.partial_cmp(&mix[a].w).unwrap().then(a.cmp(&b)));
    idx.into_iter().take(n).map(|i| mix[i].m.clone()).collect()
}

// ---------------------------------------------------------------------------
// Random scenarios

/// A small random CV scenario with up to three scripted targets over
/// `n_steps` steps in a 200 m square.
pub fn random_small_scenario<R: Rng>(n_steps: usize, seed: u64, rng: &mut R) -> ScenarioConfig {
    let models = LinearModels::constant_velocity_2d(
        rng.gen_range(0.5..1.5),
        rng.gen_range(0.5..3.0),
        rng.gen_range(1.0..4.0),
        rng.gen_range(0.9..0.99),
        rng.gen_range(0.6..0.98),
    );
    let n_birth = rng.gen_range(1..=3);
    let components: Vec<BirthComponent> = (0..n_birth)
        .map(|_| BirthComponent {
            weight: rng.gen_range(0.02..0.2),
            mean: DVector::from_vec(vec![rng.gen_range(20.0..180.0), 0.0, rng.gen_range(20.0..180.0), 0.0]),
            cov: DMatrix::from_diagonal(&DVector::from_vec(vec![100.0, 25.0, 100.0, 25.0])),
        })
        .collect();
    let n_targets = rng.gen_range(1..=3);
    let script = (0..n_targets)
        .map(|_| {
            let birth = rng.gen_range(1..=n_steps / 2);
            ScriptedTrajectory {
                birth,
                death: rng.gen_range(birth..=n_steps),
                initial: InitialState::FromBirth {
                    component: rng.gen_range(0..n_birth),
                    offset: None,
                },
            }
        })
        .collect();
    ScenarioConfig {
        n_steps,
        models,
        birth: BirthModel {
            components,
            cardinality: None,
        },
        clutter: ClutterModel::poisson(rng.gen_range(0.5..5.0), Region::square(0.0, 200.0)),
        truth: TruthScript::Scripted(script),
        seed,
    }
}

pub fn pmf_vec(p: &CardinalityPmf) -> Vec<f64> {
    p.probs().to_vec()
}
