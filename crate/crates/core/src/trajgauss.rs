//! Gaussian densities over single trajectories.
//!
//! A trajectory component is a weighted Gaussian over the stacked states
//! `x^{t}, ..., x^{t+i-1}` of a trajectory born at time `t` with duration
//! `i`. States are stored oldest first, so prediction only ever appends.
//!
//! The covariance keeps a dense joint block for the most recent states (the
//! "window") and independent per-state blocks for older states that have
//! been decorrelated by [`lscan_truncate`]. All block arithmetic is done at
//! state granularity with fixed-size operands, which makes the trailing-state
//! numbers bit-identical regardless of how long the window is.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Reciprocal condition number below which an innovation covariance is
/// treated as singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

/// Linear-Gaussian single-target models with constant survival and
/// detection probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModels {
    pub transition: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub observation: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
    pub p_survival: f64,
    pub p_detection: f64,
}

impl LinearModels {
    /// Nearly-constant-velocity motion in two dimensions with state
    /// `[p_x, v_x, p_y, v_y]` and position-only measurements.
    pub fn constant_velocity_2d(
        sampling_time: f64,
        q: f64,
        measurement_variance: f64,
        p_survival: f64,
        p_detection: f64,
    ) -> Self {
        let tau = sampling_time;
        let f1 = DMatrix::from_row_slice(2, 2, &[1.0, tau, 0.0, 1.0]);
        let q1 = DMatrix::from_row_slice(
            2,
            2,
            &[tau.powi(3) / 3.0, tau.powi(2) / 2.0, tau.powi(2) / 2.0, tau],
        ) * q;
        let eye2 = DMatrix::<f64>::identity(2, 2);
        LinearModels {
            transition: eye2.kronecker(&f1),
            process_noise: eye2.kronecker(&q1),
            observation: DMatrix::from_row_slice(
                2,
                4,
                &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            ),
            measurement_noise: DMatrix::identity(2, 2) * measurement_variance,
            p_survival,
            p_detection,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn measurement_dim(&self) -> usize {
        self.observation.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let nx = self.state_dim();
        let nz = self.measurement_dim();
        if nx == 0 || self.transition.ncols() != nx {
            return Err(Error::Config("transition matrix must be square and non-empty".into()));
        }
        if self.process_noise.shape() != (nx, nx) {
            return Err(Error::Config("process noise must be n_x by n_x".into()));
        }
        if nz == 0 || self.observation.ncols() != nx {
            return Err(Error::Config("observation matrix must be n_z by n_x".into()));
        }
        if self.measurement_noise.shape() != (nz, nz) {
            return Err(Error::Config("measurement noise must be n_z by n_z".into()));
        }
        if !is_symmetric_psd(&self.process_noise) {
            return Err(Error::Config("process noise is not symmetric PSD".into()));
        }
        if !is_symmetric_psd(&self.measurement_noise) {
            return Err(Error::Config("measurement noise is not symmetric PSD".into()));
        }
        for (name, p) in [("p_survival", self.p_survival), ("p_detection", self.p_detection)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Covariance of a stacked trajectory state.
///
/// `frozen` holds the marginal covariances of the oldest states, which are
/// mutually independent and independent of the window. `window` is the joint
/// covariance of the remaining (most recent) states. Both are shared between
/// clones; the update step produces one posterior covariance per component
/// that all measurement-conditioned children reference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCovariance {
    state_dim: usize,
    frozen: Arc<Vec<DMatrix<f64>>>,
    window: Arc<DMatrix<f64>>,
}

impl TrajectoryCovariance {
    /// Wraps a dense joint covariance. Its size must be a multiple of `state_dim`.
    pub fn dense(cov: DMatrix<f64>, state_dim: usize) -> Result<Self> {
        if state_dim == 0 || cov.nrows() != cov.ncols() || !cov.nrows().is_multiple_of(state_dim) || cov.nrows() == 0 {
            return Err(Error::InvalidComponent(format!(
                "covariance of shape {:?} is not a non-empty multiple of n_x = {state_dim}",
                cov.shape()
            )));
        }
        Ok(TrajectoryCovariance {
            state_dim,
            frozen: Arc::new(Vec::new()),
            window: Arc::new(cov),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Number of states covered.
    pub fn len(&self) -> usize {
        self.frozen.len() + self.window_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of states in the joint window.
    pub fn window_len(&self) -> usize {
        self.window.nrows() / self.state_dim
    }

    pub fn frozen_len(&self) -> usize {
        self.frozen.len()
    }

    /// Joint covariance of the window states.
    pub fn window(&self) -> &DMatrix<f64> {
        &self.window
    }

    /// Covariance block between states `a` and `b` (0 = oldest).
    pub fn block(&self, a: usize, b: usize) -> DMatrix<f64> {
        let nx = self.state_dim;
        let nf = self.frozen.len();
        if a < nf || b < nf {
            if a == b {
                return self.frozen[a].clone();
            }
            return DMatrix::zeros(nx, nx);
        }
        self.window
            .view(((a - nf) * nx, (b - nf) * nx), (nx, nx))
            .into_owned()
    }

    /// Marginal covariance of the most recent state.
    pub fn trailing(&self) -> DMatrix<f64> {
        let n = self.len();
        self.block(n - 1, n - 1)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let nx = self.state_dim;
        let n = self.len();
        let nf = self.frozen.len();
        let mut out = DMatrix::zeros(n * nx, n * nx);
        for (s, block) in self.frozen.iter().enumerate() {
            out.view_mut((s * nx, s * nx), (nx, nx)).copy_from(block);
        }
        out.view_mut((nf * nx, nf * nx), (self.window.nrows(), self.window.ncols()))
            .copy_from(&self.window);
        out
    }

    /// The same covariance restricted to its most recent state only.
    pub fn trailing_only(&self) -> Self {
        TrajectoryCovariance {
            state_dim: self.state_dim,
            frozen: Arc::new(Vec::new()),
            window: Arc::new(self.trailing()),
        }
    }
}

/// A single weighted trajectory Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryComponent {
    pub weight: f64,
    /// Time step of the first state, `>= 1`.
    pub birth_time: usize,
    pub mean: DVector<f64>,
    pub cov: TrajectoryCovariance,
}

impl TrajectoryComponent {
    /// Builds a component from a dense covariance and validates it.
    pub fn new(
        weight: f64,
        birth_time: usize,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        state_dim: usize,
    ) -> Result<Self> {
        let c = TrajectoryComponent {
            weight,
            birth_time,
            mean,
            cov: TrajectoryCovariance::dense(cov, state_dim)?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn state_dim(&self) -> usize {
        self.cov.state_dim
    }

    /// Number of stacked states.
    pub fn duration(&self) -> usize {
        self.mean.len() / self.state_dim()
    }

    /// Time step of the most recent state.
    pub fn end_time(&self) -> usize {
        self.birth_time + self.duration() - 1
    }

    /// Mean of state `s` (0 = oldest).
    pub fn state_mean(&self, s: usize) -> DVector<f64> {
        let nx = self.state_dim();
        self.mean.rows(s * nx, nx).into_owned()
    }

    pub fn trailing_mean(&self) -> DVector<f64> {
        self.state_mean(self.duration() - 1)
    }

    pub fn trailing_cov(&self) -> DMatrix<f64> {
        self.cov.trailing()
    }

    /// Sequence of state means, oldest first.
    pub fn state_means(&self) -> Vec<DVector<f64>> {
        (0..self.duration()).map(|s| self.state_mean(s)).collect()
    }

    /// Checks the structural and numerical invariants of the component.
    pub fn validate(&self) -> Result<()> {
        let nx = self.state_dim();
        if !(self.weight >= 0.0) || !self.weight.is_finite() {
            return Err(Error::InvalidComponent(format!("weight {} is not a finite nonnegative number", self.weight)));
        }
        if self.birth_time < 1 {
            return Err(Error::InvalidComponent("birth time must be at least 1".into()));
        }
        if self.mean.is_empty() || !self.mean.len().is_multiple_of(nx) {
            return Err(Error::InvalidComponent(format!(
                "mean length {} is not a positive multiple of n_x = {nx}",
                self.mean.len()
            )));
        }
        if self.cov.len() != self.duration() {
            return Err(Error::InvalidComponent(format!(
                "covariance covers {} states but the mean has {}",
                self.cov.len(),
                self.duration()
            )));
        }
        if !is_symmetric_psd(&self.cov.to_dense()) {
            return Err(Error::InvalidComponent("covariance is not symmetric PSD".into()));
        }
        Ok(())
    }

    fn check_models(&self, models: &LinearModels) -> Result<()> {
        let nx = self.state_dim();
        if models.state_dim() != nx {
            return Err(Error::InvalidComponent(format!(
                "component has n_x = {nx} but the models have n_x = {}",
                models.state_dim()
            )));
        }
        if self.mean.is_empty() || !self.mean.len().is_multiple_of(nx) || self.cov.len() != self.duration() {
            return Err(Error::InvalidComponent(format!(
                "mean length {} inconsistent with n_x = {nx} and covariance of {} states",
                self.mean.len(),
                self.cov.len()
            )));
        }
        Ok(())
    }
}

/// Symmetry within 1e-9 relative and no eigenvalue below -1e-9 * trace.
pub fn is_symmetric_psd(m: &DMatrix<f64>) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-9 * scale {
        return false;
    }
    if m.nrows() == 0 {
        return true;
    }
    let trace = m.trace().abs();
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    eig.eigenvalues.iter().all(|&l| l >= -1e-9 * trace.max(scale))
}

/// Prediction of one trajectory component: the new state is appended and
/// no earlier state is integrated out.
pub fn predict_component(
    c: &TrajectoryComponent,
    models: &LinearModels,
) -> Result<TrajectoryComponent> {
    c.check_models(models)?;
    let nx = c.state_dim();
    let f = &models.transition;
    let w = c.cov.window_len();
    let n = c.duration();

    let last = c.trailing_mean();
    let mut mean = DVector::zeros((n + 1) * nx);
    mean.rows_mut(0, n * nx).copy_from(&c.mean);
    mean.rows_mut(n * nx, nx).copy_from(&(f * &last));

    let old = &*c.cov.window;
    let mut window = DMatrix::zeros((w + 1) * nx, (w + 1) * nx);
    window.view_mut((0, 0), (w * nx, w * nx)).copy_from(old);
    let ft = f.transpose();
    for b in 0..w {
        // Cov(x_b, x_new) = P_{b,last} F^T
        let cross = old.view((b * nx, (w - 1) * nx), (nx, nx)) * &ft;
        window.view_mut((b * nx, w * nx), (nx, nx)).copy_from(&cross);
        window.view_mut((w * nx, b * nx), (nx, nx)).copy_from(&cross.transpose());
    }
    let p_last = old.view(((w - 1) * nx, (w - 1) * nx), (nx, nx));
    let corner = f * p_last * &ft + &models.process_noise;
    let corner = (&corner + corner.transpose()) * 0.5;
    window.view_mut((w * nx, w * nx), (nx, nx)).copy_from(&corner);

    Ok(TrajectoryComponent {
        weight: models.p_survival * c.weight,
        birth_time: c.birth_time,
        mean,
        cov: TrajectoryCovariance {
            state_dim: nx,
            frozen: Arc::clone(&c.cov.frozen),
            window: Arc::new(window),
        },
    })
}

/// Measurement-independent quantities of the Kalman update of one
/// component: predicted measurement, innovation covariance factor, gain and
/// posterior covariance.
#[derive(Debug, Clone)]
pub struct Innovation {
    predicted: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
    /// Gain rows for the window states, stacked like the window.
    gain: DMatrix<f64>,
    posterior: TrajectoryCovariance,
}

impl Innovation {
    pub fn new(c: &TrajectoryComponent, models: &LinearModels) -> Result<Self> {
        c.check_models(models)?;
        let nx = c.state_dim();
        let nz = models.measurement_dim();
        let h = &models.observation;
        let ht = h.transpose();
        let w = c.cov.window_len();
        let p = &*c.cov.window;
        let last = (w - 1) * nx;

        let p_last = p.view((last, last), (nx, nx));
        let s = h * p_last * &ht + &models.measurement_noise;
        let s = (&s + s.transpose()) * 0.5;
        let rcond = reciprocal_condition(&s);
        if !(rcond >= SINGULAR_RCOND) {
            return Err(Error::SingularInnovation { rcond });
        }
        let chol = Cholesky::new(s).ok_or(Error::SingularInnovation { rcond })?;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_norm = -0.5 * (nz as f64 * LN_2PI + log_det);

        // Cross covariances C_b = P_{b,last} H^T and gains K_b = C_b S^-1.
        let mut cross = Vec::with_capacity(w);
        let mut gain = DMatrix::zeros(w * nx, nz);
        for b in 0..w {
            let cb = p.view((b * nx, last), (nx, nx)) * &ht;
            let kb = chol.solve(&cb.transpose()).transpose();
            gain.view_mut((b * nx, 0), (nx, nz)).copy_from(&kb);
            cross.push(cb);
        }
        // P'_{ab} = P_ab - K_a C_b^T, symmetrised block-wise.
        let mut post = DMatrix::zeros(w * nx, w * nx);
        for a in 0..w {
            let ka = gain.view((a * nx, 0), (nx, nz));
            for b in a..w {
                let kb = gain.view((b * nx, 0), (nx, nz));
                let xab = p.view((a * nx, b * nx), (nx, nx)) - ka * cross[b].transpose();
                if a == b {
                    let sym = (&xab + xab.transpose()) * 0.5;
                    post.view_mut((a * nx, a * nx), (nx, nx)).copy_from(&sym);
                } else {
                    let xba = p.view((b * nx, a * nx), (nx, nx)) - kb * cross[a].transpose();
                    let sym = (&xab + xba.transpose()) * 0.5;
                    post.view_mut((a * nx, b * nx), (nx, nx)).copy_from(&sym);
                    post.view_mut((b * nx, a * nx), (nx, nx)).copy_from(&sym.transpose());
                }
            }
        }

        let predicted = h * c.mean.rows(c.mean.len() - nx, nx);
        Ok(Innovation {
            predicted,
            chol,
            log_norm,
            gain,
            posterior: TrajectoryCovariance {
                state_dim: nx,
                frozen: Arc::clone(&c.cov.frozen),
                window: Arc::new(post),
            },
        })
    }

    /// Predicted measurement `z̄ = Ḣ m`.
    pub fn predicted_measurement(&self) -> &DVector<f64> {
        &self.predicted
    }

    /// Innovation covariance `S`.
    pub fn innovation_cov(&self) -> DMatrix<f64> {
        let l = self.chol.l();
        &l * l.transpose()
    }

    pub fn posterior_cov(&self) -> &TrajectoryCovariance {
        &self.posterior
    }

    /// `ln N(z; z̄, S)`.
    pub fn log_likelihood(&self, z: &DVector<f64>) -> f64 {
        let r = z - &self.predicted;
        let sol = self.chol.solve(&r);
        self.log_norm - 0.5 * r.dot(&sol)
    }

    /// Posterior mean `m + P Ḣᵀ S⁻¹ (z − z̄)`; only window states move.
    pub fn posterior_mean(&self, prior_mean: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let r = z - &self.predicted;
        let nx = self.posterior.state_dim;
        let start = self.posterior.frozen_len() * nx;
        let mut mean = prior_mean.clone();
        let w = self.posterior.window_len();
        for b in 0..w {
            let kb = self.gain.view((b * nx, 0), (nx, r.len()));
            let delta = kb * &r;
            let mut rows = mean.rows_mut(start + b * nx, nx);
            rows += delta;
        }
        mean
    }

    /// Posterior component with the given weight.
    pub fn posterior(&self, c: &TrajectoryComponent, z: &DVector<f64>, weight: f64) -> TrajectoryComponent {
        TrajectoryComponent {
            weight,
            birth_time: c.birth_time,
            mean: self.posterior_mean(&c.mean, z),
            cov: self.posterior.clone(),
        }
    }
}

/// Kalman update of one trajectory component with measurement `z`.
///
/// Returns the posterior component (weight unchanged; mixture-level
/// normalisation is the caller's business) and the likelihood `q(z)`.
pub fn update_component(
    c: &TrajectoryComponent,
    z: &DVector<f64>,
    models: &LinearModels,
) -> Result<(TrajectoryComponent, f64)> {
    if z.len() != models.measurement_dim() {
        return Err(Error::InvalidComponent(format!(
            "measurement has length {} but n_z = {}",
            z.len(),
            models.measurement_dim()
        )));
    }
    let inn = Innovation::new(c, models)?;
    let lik = inn.log_likelihood(z).exp();
    Ok((inn.posterior(c, z, c.weight), lik))
}

/// L-scan approximation: keeps the joint covariance of the last `lscan`
/// states and only the marginal blocks of older states.
pub fn lscan_truncate(c: &TrajectoryComponent, lscan: usize) -> TrajectoryComponent {
    let lscan = lscan.max(1);
    let w = c.cov.window_len();
    if w <= lscan {
        return c.clone();
    }
    let nx = c.state_dim();
    let drop = w - lscan;
    let old = &*c.cov.window;
    let mut frozen = (*c.cov.frozen).clone();
    frozen.reserve(drop);
    for s in 0..drop {
        frozen.push(old.view((s * nx, s * nx), (nx, nx)).into_owned());
    }
    let window = old.view((drop * nx, drop * nx), (lscan * nx, lscan * nx)).into_owned();
    TrajectoryComponent {
        weight: c.weight,
        birth_time: c.birth_time,
        mean: c.mean.clone(),
        cov: TrajectoryCovariance {
            state_dim: nx,
            frozen: Arc::new(frozen),
            window: Arc::new(window),
        },
    }
}

/// Gaussian mixture PHD over alive trajectories at time `time`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GmTrajectoryPhd {
    pub components: Vec<TrajectoryComponent>,
    pub time: usize,
}

impl GmTrajectoryPhd {
    pub fn empty(time: usize) -> Self {
        GmTrajectoryPhd {
            components: Vec::new(),
            time,
        }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// Every component must end at the current time step.
    pub fn validate(&self) -> Result<()> {
        for c in &self.components {
            c.validate()?;
            if c.end_time() != self.time {
                return Err(Error::InvalidComponent(format!(
                    "component born at {} with duration {} is not alive at time {}",
                    c.birth_time,
                    c.duration(),
                    self.time
                )));
            }
        }
        Ok(())
    }
}

/// Expected number of trajectories: the integral of the PHD.
pub fn expected_count(phd: &GmTrajectoryPhd) -> f64 {
    phd.components.iter().map(|c| c.weight).sum()
}

/// Expected number of trajectories whose `(birth_time, duration)` satisfies
/// the predicate.
pub fn expected_count_in<P>(phd: &GmTrajectoryPhd, mut predicate: P) -> f64
where
    P: FnMut(usize, usize) -> bool,
{
    phd.components
        .iter()
        .filter(|c| predicate(c.birth_time, c.duration()))
        .map(|c| c.weight)
        .sum()
}

/// Smallest over largest eigenvalue of a symmetric matrix; zero or negative
/// when it is not positive definite.
fn reciprocal_condition(s: &DMatrix<f64>) -> f64 {
    if s.nrows() == 1 {
        return if s[(0, 0)] > 0.0 && s[(0, 0)].is_finite() { 1.0 } else { 0.0 };
    }
    let eig = SymmetricEigen::new(s.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || !max.is_finite() {
        return 0.0;
    }
    min / max
}
