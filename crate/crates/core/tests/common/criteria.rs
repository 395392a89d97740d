//! Property checks shared by the per-topic test targets and the acceptance
//! report. Each returns a one-line summary on success.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::*;
use trajphd::cardesf::{esf, ln_esf, psi_factor, CardinalityPmf, ClutterCardinality, PsiInputs};
use trajphd::filters::{
    estimate_tcphd, estimate_tphd, tcphd_predict, tcphd_update, tphd_predict, FilterKind, FilterRunner, FilterState,
    ReductionConfig, TcphdState, TphdState,
};
use trajphd::scenario::{generate_measurements, generate_truth, sample_iid_cluster, ScenarioConfig};
use trajphd::trajgauss::{predict_component, update_component, LinearModels, TrajectoryComponent};

pub type Check = Result<String, String>;

fn random_models<R: Rng>(rng: &mut R) -> LinearModels {
    let nx = rng.gen_range(1..=4);
    let nz = rng.gen_range(1..=nx);
    LinearModels {
        transition: random_matrix(nx, nx, rng) + DMatrix::identity(nx, nx),
        process_noise: random_spd(nx, 0.3, rng),
        observation: random_matrix(nz, nx, rng),
        measurement_noise: random_spd(nz, 0.5, rng),
        p_survival: rng.gen_range(0.5..1.0),
        p_detection: rng.gen_range(0.5..1.0),
    }
}

/// Trajectory prediction and update, trailing marginals and the full
/// stacked posterior, against a plain Kalman filter.
pub fn kalman_oracle(cases: usize, tol: f64) -> Check {
    let mut rng = rng(9);
    for case in 0..cases {
        let models = random_models(&mut rng);
        let nx = models.state_dim();
        let nz = models.measurement_dim();
        let len = rng.gen_range(1..=4);
        let d = len * nx;
        let mean = DVector::from_fn(d, |_, _| rng.gen_range(-5.0..5.0));
        let cov = random_spd(d, 1.0, &mut rng);
        let w = rng.gen_range(0.1..2.0);
        let c = TrajectoryComponent::new(w, 1, mean.clone(), cov.clone(), nx).map_err(|e| e.to_string())?;
        let last = (len - 1) * nx;
        let m_last = mean.rows(last, nx).into_owned();
        let p_last = cov.view((last, last), (nx, nx)).into_owned();

        // prediction
        let pred = predict_component(&c, &models).map_err(|e| format!("case {case}: {e}"))?;
        let (km, kp) = kf_predict(&m_last, &p_last, &models.transition, &models.process_noise);
        if !vec_close(&pred.trailing_mean(), &km, tol) || !mat_close(&pred.trailing_cov(), &kp, tol) {
            return Err(format!("case {case}: predicted trailing marginal differs"));
        }
        if !rel_close(pred.weight, w * models.p_survival, tol) {
            return Err(format!("case {case}: predicted weight differs"));
        }
        let mut f_aug = DMatrix::zeros(d + nx, d);
        f_aug.view_mut((0, 0), (d, d)).copy_from(&DMatrix::identity(d, d));
        f_aug.view_mut((d, last), (nx, nx)).copy_from(&models.transition);
        let mut q_aug = DMatrix::zeros(d + nx, d + nx);
        q_aug.view_mut((d, d), (nx, nx)).copy_from(&models.process_noise);
        let (sm, sp) = kf_predict(&mean, &cov, &f_aug, &q_aug);
        if !vec_close(&pred.mean, &sm, tol) || !mat_close(&pred.cov.to_dense(), &sp, tol) {
            return Err(format!("case {case}: predicted trajectory differs from stacked oracle"));
        }

        // update
        let z = DVector::from_fn(nz, |_, _| rng.gen_range(-5.0..5.0));
        let (post, lik) = update_component(&pred, &z, &models).map_err(|e| format!("case {case}: {e}"))?;
        let (um, up, ul) = kf_update(&km, &kp, &models.observation, &models.measurement_noise, &z);
        if !vec_close(&post.trailing_mean(), &um, tol) || !mat_close(&post.trailing_cov(), &up, tol) {
            return Err(format!("case {case}: updated trailing marginal differs"));
        }
        if !rel_close(lik, ul, tol) {
            return Err(format!("case {case}: likelihood {lik} vs {ul}"));
        }
        let mut h_aug = DMatrix::zeros(nz, d + nx);
        h_aug.view_mut((0, d), (nz, nx)).copy_from(&models.observation);
        let (fm, fp, _) = kf_update(&sm, &sp, &h_aug, &models.measurement_noise, &z);
        if !vec_close(&post.mean, &fm, tol) || !mat_close(&post.cov.to_dense(), &fp, tol) {
            return Err(format!("case {case}: updated trajectory differs from stacked oracle"));
        }
    }
    Ok(format!("{cases} random cases agree to {tol:e}"))
}

/// Recurrence against subset enumeration.
pub fn esf_oracle(draws: usize, tol: f64) -> Check {
    let mut rng = rng(5);
    let mut worst = 0.0_f64;
    for draw in 0..draws {
        let n = rng.gen_range(0..=8);
        let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0) * scale).collect();
        if n > 1 && rng.gen_bool(0.3) {
            v[1] = v[0];
        }
        let want = esf_brute_force(&v);
        let got = esf(&v).values;
        let ln_got = ln_esf(&v);
        for j in 0..=n {
            let err = (got[j] - want[j]).abs() / want[j].abs().max(1e-300);
            worst = worst.max(err);
            if !rel_close(got[j], want[j], tol) || !rel_close(ln_got[j].exp(), want[j], tol) {
                return Err(format!("draw {draw}: e_{j} = {} vs {}", got[j], want[j]));
            }
        }
    }
    Ok(format!("{draws} multisets, worst relative error {worst:.1e}"))
}

fn birth_pmf(birth: &trajphd::filters::BirthModel, n_max: usize) -> Vec<f64> {
    let rate = birth.total_weight();
    let p: Vec<f64> = (0..=n_max).map(|n| poisson_pmf(rate, n)).collect();
    let s: f64 = p.iter().sum();
    p.into_iter().map(|x| x / s).collect()
}

fn compare_mixture(k: usize, lib: &[TrajectoryComponent], oracle: &[Gaussian], tol: f64) -> Result<(), String> {
    if lib.len() != oracle.len() {
        return Err(format!("step {k}: {} components vs {}", lib.len(), oracle.len()));
    }
    for (j, (c, g)) in lib.iter().zip(oracle).enumerate() {
        if !rel_close(c.weight, g.w, tol) {
            return Err(format!("step {k} component {j}: weight {} vs {}", c.weight, g.w));
        }
        if !vec_close(&c.trailing_mean(), &g.m, tol) || !mat_close(&c.trailing_cov(), &g.p, tol) {
            return Err(format!("step {k} component {j}: moments differ"));
        }
    }
    Ok(())
}

fn compare_estimates(k: usize, lib: &trajphd::scenario::TrajectorySet, oracle: &[DVector<f64>], tol: f64) -> Result<(), String> {
    if lib.len() != oracle.len() {
        return Err(format!("step {k}: {} estimates vs {}", lib.len(), oracle.len()));
    }
    for (t, m) in lib.trajectories.iter().zip(oracle) {
        if !vec_close(t.states.last().unwrap(), m, tol) {
            return Err(format!("step {k}: estimate differs"));
        }
    }
    Ok(())
}

/// Cap that keeps the heaviest survivors in selection order.
fn cap_heaviest(mix: Vec<Gaussian>, max: usize) -> Vec<Gaussian> {
    if mix.len() <= max {
        return mix;
    }
    let mut idx: Vec<usize> = (0..mix.len()).collect();
    idx.sort_by(|&a, &b| mix[b].w.partial_cmp(&mix[a].w).unwrap().then(a.cmp(&b)));
    let mut keep: Vec<usize> = idx.into_iter().take(max).collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| mix[i].clone()).collect()
}

fn oracle_reduce(mix: &[Gaussian], om: &OracleModel) -> Vec<Gaussian> {
    let all = reduce(
        mix,
        &OracleModel {
            max_components: usize::MAX,
            ..*om
        },
    );
    cap_heaviest(all, om.max_components)
}

/// 1-scan TPHD/TCPHD against plain GM-PHD/GM-CPHD on random scenarios.
pub fn one_scan_equivalence(scenarios: usize, n_steps: usize, tol: f64) -> Check {
    let mut rng = rng(4);
    let n_max = 30;
    let mut steps = 0;
    for sc in 0..scenarios {
        let cfg = random_small_scenario(n_steps, sc as u64, &mut rng);
        let mut trng = super::rng(1000 + sc as u64);
        let truth = generate_truth(&cfg, &mut trng).map_err(|e| e.to_string())?;
        let zs: Vec<Vec<DVector<f64>>> = (1..=n_steps)
            .map(|k| generate_measurements(&truth, &cfg, k, &mut trng).unwrap())
            .collect();
        let red = ReductionConfig::default();
        let om = OracleModel {
            models: &cfg.models,
            birth: &cfg.birth,
            clutter: &cfg.clutter,
            prune: red.prune_threshold,
            absorb: red.absorb_threshold,
            max_components: red.max_components,
        };
        let bpmf = birth_pmf(&cfg.birth, n_max);

        let mut tphd = FilterRunner::new(FilterKind::Tphd, cfg.models.clone(), cfg.birth.clone(), cfg.clutter.clone(), red);
        let mut tcphd = FilterRunner::with_n_max(
            FilterKind::Tcphd,
            cfg.models.clone(),
            cfg.birth.clone(),
            cfg.clutter.clone(),
            red,
            n_max,
        );
        let mut phd: Vec<Gaussian> = Vec::new();
        let mut cphd: Vec<Gaussian> = Vec::new();
        let mut card = vec![0.0; n_max + 1];
        card[0] = 1.0;
        for (i, z) in zs.iter().enumerate() {
            let k = i + 1;
            let out = tphd.step(z).map_err(|e| format!("scenario {sc}: {e}"))?;
            phd = oracle_reduce(&phd_update(&phd_predict(&phd, &om), z, &om), &om);
            let FilterState::Tphd(s) = &tphd.state else { unreachable!() };
            compare_mixture(k, &s.phd.components, &phd, tol).map_err(|e| format!("scenario {sc} TPHD {e}"))?;
            let total: f64 = phd.iter().map(|g| g.w).sum();
            let n_hat = (total.round() as usize).min(phd.len());
            compare_estimates(k, &out.estimates, &top_by_weight(&phd, n_hat), tol)
                .map_err(|e| format!("scenario {sc} TPHD {e}"))?;

            let out = tcphd.step(z).map_err(|e| format!("scenario {sc}: {e}"))?;
            let pred_card = cphd_predict_cardinality(&card, cfg.models.p_survival, &bpmf);
            let (up, new_card) = cphd_update(&phd_predict(&cphd, &om), &pred_card, z, &om);
            cphd = oracle_reduce(&up, &om);
            card = new_card;
            let FilterState::Tcphd(s) = &tcphd.state else { unreachable!() };
            compare_mixture(k, &s.phd.components, &cphd, tol).map_err(|e| format!("scenario {sc} TCPHD {e}"))?;
            for (n, (a, b)) in s.cardinality.probs().iter().zip(&card).enumerate() {
                if (a - b).abs() > tol * b.max(1e-12) && (a - b).abs() > 1e-15 {
                    return Err(format!("scenario {sc} TCPHD step {k}: rho({n}) {a} vs {b}"));
                }
            }
            let argmax = (0..card.len()).fold(0, |best, n| if card[n] > card[best] { n } else { best });
            compare_estimates(k, &out.estimates, &top_by_weight(&cphd, argmax.min(cphd.len())), tol)
                .map_err(|e| format!("scenario {sc} TCPHD {e}"))?;
            steps += 1;
        }
    }
    Ok(format!("{scenarios} scenarios x {n_steps} steps ({steps} steps) agree to {tol:e}"))
}

/// Probability mass stays normalised, and the TPHD and TCPHD predictions
/// produce identical PHDs.
pub fn cardinality_contracts(total_steps: usize, tol: f64) -> Check {
    let mut rng = rng(6);
    let per = 20;
    let mut done = 0;
    let mut sc = 0u64;
    while done < total_steps {
        let cfg = random_small_scenario(per, sc, &mut rng);
        let mut trng = super::rng(2000 + sc);
        sc += 1;
        let truth = generate_truth(&cfg, &mut trng).map_err(|e| e.to_string())?;
        let lscan = rng.gen_range(1..=4);
        let red = ReductionConfig::default().with_lscan(lscan);
        let mut state = TcphdState::initial(40);
        for k in 1..=per {
            if done == total_steps {
                break;
            }
            let z = generate_measurements(&truth, &cfg, k, &mut trng).unwrap();
            let pred = tcphd_predict(&state, &cfg.models, &cfg.birth, lscan).map_err(|e| e.to_string())?;
            let tpred = tphd_predict(&TphdState { phd: state.phd.clone() }, &cfg.models, &cfg.birth, lscan)
                .map_err(|e| e.to_string())?;
            if tpred.phd != pred.phd {
                return Err(format!("scenario {sc} step {k}: TPHD and TCPHD predicted PHDs differ"));
            }
            let s: f64 = pred.cardinality.probs().iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(format!("scenario {sc} step {k}: predicted pmf sums to {s}"));
            }
            let up = tcphd_update(&pred, &z, &cfg.models, &cfg.clutter).map_err(|e| e.to_string())?;
            let s: f64 = up.cardinality.probs().iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(format!("scenario {sc} step {k}: updated pmf sums to {s}"));
            }
            state = trajphd::filters::reduce_tcphd(&up, &red);
            let _ = estimate_tcphd(&state);
            let _ = estimate_tphd(&TphdState { phd: state.phd.clone() });
            done += 1;
        }
    }
    Ok(format!("{total_steps} random steps: pmfs normalised to {tol:e}, predicted PHDs bitwise equal"))
}

/// Weights, cardinality estimates and estimate start times do not depend
/// on L; past-state estimates do.
pub fn lscan_invariance(seed: u64) -> Check {
    let mut cfg = ScenarioConfig::four_target();
    cfg.seed = seed;
    let (_, zs) = trajphd::experiment::simulate_run(&cfg, 0).map_err(|e| e.to_string())?;
    let ls = [1usize, 2, 5, 10];
    let mut past_differs = false;
    for kind in [FilterKind::Tphd, FilterKind::Tcphd] {
        let mut runners: Vec<FilterRunner> = ls
            .iter()
            .map(|&l| {
                FilterRunner::new(
                    kind,
                    cfg.models.clone(),
                    cfg.birth.clone(),
                    cfg.clutter.clone(),
                    ReductionConfig::default().with_lscan(l),
                )
            })
            .collect();
        for (i, z) in zs.iter().enumerate() {
            let k = i + 1;
            let outs: Vec<_> = runners.iter_mut().map(|r| r.step(z)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
            let weights: Vec<Vec<f64>> = runners
                .iter()
                .map(|r| match &r.state {
                    FilterState::Tphd(s) => s.phd.weights(),
                    FilterState::Tcphd(s) => s.phd.weights(),
                    FilterState::Tagged(_) => unreachable!(),
                })
                .collect();
            for (li, o) in outs.iter().enumerate().skip(1) {
                if weights[li] != weights[0] {
                    return Err(format!("{} step {k}: weights differ between L=1 and L={}", kind.name(), ls[li]));
                }
                if o.n_hat != outs[0].n_hat {
                    return Err(format!("{} step {k}: N̂ differs for L={}", kind.name(), ls[li]));
                }
                for (a, b) in o.estimates.trajectories.iter().zip(&outs[0].estimates.trajectories) {
                    if a.birth_time != b.birth_time || a.duration() != b.duration() {
                        return Err(format!("{} step {k}: start or length differs for L={}", kind.name(), ls[li]));
                    }
                    if a.states.last() != b.states.last() {
                        return Err(format!("{} step {k}: current estimate differs for L={}", kind.name(), ls[li]));
                    }
                    past_differs |= a.states != b.states;
                }
            }
        }
    }
    if !past_differs {
        return Err("past-state estimates never differ across L".into());
    }
    Ok(format!("L in {ls:?}, {} steps, TPHD and TCPHD identical except past states", zs.len()))
}

fn chi_square(observed: &[f64], expected: &[f64]) -> (f64, f64) {
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
    (stat, 1.0 - dist.cdf(stat))
}

/// Mixture encoding the running example: two unit-weight length-one
/// components and one length-two component, all starting at time 1.
pub fn example_mixture() -> Vec<TrajectoryComponent> {
    vec![
        TrajectoryComponent::new(1.0, 1, DVector::from_vec(vec![0.0]), DMatrix::identity(1, 1), 1).unwrap(),
        TrajectoryComponent::new(1.0, 1, DVector::from_vec(vec![4.0]), DMatrix::identity(1, 1), 1).unwrap(),
        TrajectoryComponent::new(1.0, 1, DVector::from_vec(vec![1.0, 2.0]), DMatrix::identity(2, 2), 1).unwrap(),
    ]
}

/// Chi-square tests at the 1% level for the sampled cardinality and the
/// `(t, i)` marginal.
pub fn sampler_chi_square(samples: usize) -> Check {
    let mut mixture = example_mixture();
    for c in &mut mixture {
        c.weight /= 3.0;
    }
    let rho = CardinalityPmf::poisson(3.0, 40);
    let mut rng = rng(8);
    let bins = 10;
    let mut card_counts = vec![0.0; bins];
    let mut short = 0.0;
    let mut total_traj = 0.0;
    for _ in 0..samples {
        let set = sample_iid_cluster(&rho, &mixture, &mut rng).map_err(|e| e.to_string())?;
        card_counts[set.len().min(bins - 1)] += 1.0;
        for t in &set.trajectories {
            total_traj += 1.0;
            if t.birth_time == 1 && t.duration() == 1 {
                short += 1.0;
            }
        }
    }
    let mut expected: Vec<f64> = (0..bins - 1).map(|n| rho.get(n) * samples as f64).collect();
    expected.push(samples as f64 - expected.iter().sum::<f64>());
    let (s1, p1) = chi_square(&card_counts, &expected);
    let (s2, p2) = chi_square(&[short, total_traj - short], &[total_traj * 2.0 / 3.0, total_traj / 3.0]);
    let line = format!(
        "cardinality chi2={s1:.2} p={p1:.3}; P(t=1,i=1)={:.4} chi2={s2:.2} p={p2:.3}",
        short / total_traj
    );
    if p1 < 0.01 || p2 < 0.01 {
        return Err(line);
    }
    Ok(line)
}

/// Ψ from the library against the direct linear-domain sum.
pub fn psi_log_vs_linear(cases: usize, tol: f64) -> Check {
    let mut rng = rng(12);
    for case in 0..cases {
        let nj = rng.gen_range(1..=3);
        let nz = rng.gen_range(0..=4);
        let n_max = rng.gen_range(1..=8);
        let weights: Vec<f64> = (0..nj).map(|_| rng.gen_range(0.05..1.5)).collect();
        let q: Vec<Vec<f64>> = (0..nj).map(|_| (0..nz).map(|_| rng.gen_range(0.01..2.0)).collect()).collect();
        let ln_q: Vec<Vec<f64>> = q.iter().map(|r| r.iter().map(|v| v.ln()).collect()).collect();
        let dens: Vec<f64> = (0..nz).map(|_| rng.gen_range(0.1..1.0)).collect();
        let pd = rng.gen_range(0.3..0.95);
        let rate = rng.gen_range(0.5..4.0);
        let clutter = ClutterCardinality::Poisson { rate };
        let inputs = PsiInputs::new(&weights, &ln_q, &dens, pd, &clutter, n_max).map_err(|e| e.to_string())?;
        let wt: f64 = weights.iter().sum();
        let lambda: Vec<f64> = (0..nz)
            .map(|z| (0..nj).map(|j| pd * weights[j] * q[j][z]).sum::<f64>() / dens[z])
            .collect();
        for u in 0..=1 {
            let got = psi_factor(u, &inputs).map_err(|e| e.to_string())?.linear();
            let want = cphd_psi(u, &lambda, wt, pd, rate, n_max);
            for n in 0..=n_max {
                if !rel_close(got[n], want[n], tol) {
                    return Err(format!("case {case}: Psi^{u}({n}) = {} vs {}", got[n], want[n]));
                }
            }
        }
    }
    Ok(format!("{cases} tiny cases agree to {tol:e}"))
}
