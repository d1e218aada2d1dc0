//! The CV-M&P Gibbs sampler: spike-and-slab polar regression per voxel with
//! the sSGLMM spatial prior, run independently and in parallel over parcels.
//!
//! Sweep order per voxel: λ, β, ω, γ (random-walk MH), σ², η_λ, η_ω; then
//! per parcel: τ², ξ², δ_λ, κ_λ, δ_ω, κ_ω. λ is drawn with β integrated out
//! analytically and β redrawn immediately after, so the pair is one valid
//! block; ω is flipped by a birth-death Metropolis move whose birth proposal
//! draws γ_1 from its slab prior (the prior density cancels, leaving the
//! likelihood ratio times the prior odds). All ratios are computed in log
//! space through the flattened-basis fast paths.

pub mod diagnostics;
pub mod spatial_prior;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    arctan4, phase_basis_into, wrap_angle, ComplexImageSeries, DesignPair,
};
use crate::spatial::{default_q, Neighborhood, ParcelGraph, Parcellation};
use crate::util::{logistic_complement, std_normal_quantile};

use diagnostics::batch_means_mcse;
use spatial_prior::ProbitField;

/// Floor applied to initial noise variance estimates.
pub const SIGMA2_FLOOR: f64 = 1e-8;

/// Tuning and protocol parameters of one sampler run.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    /// Probit offset for the magnitude indicators.
    pub psi_lambda: f64,
    /// Probit offset for the phase indicators.
    pub psi_omega: f64,
    pub a_kappa: f64,
    pub b_kappa: f64,
    pub n_iter: usize,
    pub burn_in: usize,
    /// Random-walk proposal standard deviation (radians), both coordinates.
    pub mh_step: f64,
    /// Pre-burn-in Robbins–Monro step scaling toward 0.35 acceptance.
    pub adapt_proposal: bool,
    pub threshold: f64,
    pub mcse_target: f64,
    pub seed: u64,
    pub neighborhood: Neighborhood,
    /// Eigenvector count per parcel; None scales the one per ~25 voxels rule.
    pub q_override: Option<usize>,
    /// Test hooks: freeze hyperparameters instead of sampling them.
    pub fixed_sigma2: Option<f64>,
    pub fixed_tau2: Option<f64>,
    pub fixed_xi2: Option<f64>,
    /// Freeze (η_λ, η_ω) for every voxel and skip the spatial updates.
    pub fixed_eta: Option<(f64, f64)>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            psi_lambda: std_normal_quantile(0.42),
            psi_omega: std_normal_quantile(0.42),
            a_kappa: 0.5,
            b_kappa: 2000.0,
            n_iter: 1000,
            burn_in: 200,
            mh_step: 0.05,
            adapt_proposal: false,
            threshold: 0.925,
            mcse_target: 0.05,
            seed: 0,
            neighborhood: Neighborhood::EdgeCorner,
            q_override: None,
            fixed_sigma2: None,
            fixed_tau2: None,
            fixed_xi2: None,
            fixed_eta: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.threshold && self.threshold < 1.0) {
            return Err(Error::InvalidArgument("threshold must lie in (0, 1)".into()));
        }
        if self.n_iter <= self.burn_in {
            return Err(Error::InvalidArgument(
                "n_iter must exceed burn_in".into(),
            ));
        }
        if self.mh_step <= 0.0 {
            return Err(Error::InvalidArgument("mh_step must be positive".into()));
        }
        Ok(())
    }
}

/// Per-voxel sampler state.
#[derive(Debug, Clone)]
pub struct VoxelState {
    pub beta: [f64; 2],
    /// Unwrapped during sampling; γ_0 wrapped only at reporting.
    pub gamma: [f64; 2],
    pub lambda: bool,
    pub omega: bool,
    pub sigma2: f64,
}

/// Posterior summary over all voxels, merged across parcels.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub mean_beta: Vec<[f64; 2]>,
    pub mean_gamma: Option<Vec<[f64; 2]>>,
    /// Second coefficient block of the Cartesian baseline (imaginary part).
    pub mean_beta_imag: Option<Vec<[f64; 2]>>,
    pub prob_lambda: Vec<f64>,
    pub prob_omega: Option<Vec<f64>>,
    pub active_mag: Vec<u8>,
    pub active_phase: Option<Vec<u8>>,
    pub mcse_lambda: Vec<f64>,
    pub mcse_omega: Option<Vec<f64>>,
    pub converged: Vec<bool>,
    pub mh_acceptance: Option<f64>,
    pub runtime_seconds: f64,
}

impl PosteriorSummary {
    /// Fraction of voxels whose indicator MCSEs met the target.
    pub fn converged_fraction(&self) -> f64 {
        let n = self.converged.len() as f64;
        self.converged.iter().filter(|&&c| c).count() as f64 / n
    }
}

/// Deterministic initialization: magnitude least squares for β, the mean
/// phase angle for γ_0, active indicators, residual variance for σ².
pub fn initialize_voxel_state(y: &[f64], design: &DesignPair) -> VoxelState {
    let t = design.n_time();
    let (y_real, y_imag) = y.split_at(t);
    let mag: Vec<f64> = y_real
        .iter()
        .zip(y_imag)
        .map(|(&r, &i)| (r * r + i * i).sqrt())
        .collect();
    let x_sum = design.x_sum();
    let x_sq = design.x_sq_sum();
    let m_sum: f64 = mag.iter().sum();
    let xm_sum: f64 = mag.iter().zip(design.x()).map(|(&m, &x)| m * x).sum();
    let det = t as f64 * x_sq - x_sum * x_sum;
    let beta0 = (x_sq * m_sum - x_sum * xm_sum) / det;
    let beta1 = (t as f64 * xm_sum - x_sum * m_sum) / det;
    let mean_r = y_real.iter().sum::<f64>() / t as f64;
    let mean_i = y_imag.iter().sum::<f64>() / t as f64;
    let gamma0 = arctan4(mean_i, mean_r).unwrap_or(0.0);
    let rss: f64 = mag
        .iter()
        .zip(design.x())
        .map(|(&m, &x)| {
            let r = m - beta0 - beta1 * x;
            r * r
        })
        .sum();
    VoxelState {
        beta: [beta0, beta1],
        gamma: [gamma0, 0.0],
        lambda: true,
        omega: true,
        sigma2: (rss / t as f64).max(SIGMA2_FLOOR),
    }
}

/// One parcel's chain, with the flattened phase basis cached per voxel.
struct ParcelChain<'a> {
    design: &'a DesignPair,
    cfg: &'a SamplerConfig,
    graph: ParcelGraph,
    ys: Vec<Vec<f64>>,
    states: Vec<VoxelState>,
    bases: Vec<Vec<f64>>,
    scratch: Vec<f64>,
    tau2: f64,
    xi2: f64,
    field_lambda: ProbitField,
    field_omega: ProbitField,
    t: usize,
    x_sum: f64,
    x_sq: f64,
    mh_scale: f64,
    accepts: u64,
    proposals: u64,
    /// Conditional P(λ_v = 1) of the latest sweep; averaging these instead
    /// of the binary draws Rao-Blackwellizes the posterior probability map.
    rb_lambda: Vec<f64>,
    /// Conditional P(ω_v = 1) averaged over the sweep's flip attempts.
    rb_omega: Vec<f64>,
    /// λ-averaged conditional posterior means of β for the latest sweep.
    rb_beta: Vec<[f64; 2]>,
    /// Least-squares phase slope per voxel, centering the ω birth proposal.
    slope_center: Vec<f64>,
    /// Standard error of that slope, the birth proposal's narrow-component sd.
    slope_sd: Vec<f64>,
}

/// Least-squares fit of the observed phase angle on the phase regressor u,
/// returning the slope and its standard error. Angles are taken relative to
/// the series' circular mean so a voxel sitting near ±π does not tear the
/// fit across the wrap.
pub(crate) fn phase_slope_ls(y: &[f64], design: &DesignPair) -> (f64, f64) {
    let t = design.n_time();
    let (y_r, y_i) = y.split_at(t);
    let mean_r = y_r.iter().sum::<f64>() / t as f64;
    let mean_i = y_i.iter().sum::<f64>() / t as f64;
    let center = arctan4(mean_i, mean_r).unwrap_or(0.0);
    let d: Vec<f64> = y_r
        .iter()
        .zip(y_i)
        .map(|(&r, &i)| wrap_angle(arctan4(i, r).unwrap_or(center) - center))
        .collect();
    let u = design.u();
    let tf = t as f64;
    let u_sum: f64 = u.iter().sum();
    let u_sq: f64 = u.iter().map(|&ui| ui * ui).sum();
    let d_sum: f64 = d.iter().sum();
    let ud_sum: f64 = u.iter().zip(&d).map(|(&ui, &di)| ui * di).sum();
    let det = tf * u_sq - u_sum * u_sum;
    if det <= 1e-12 || t < 3 {
        return (0.0, 1.0);
    }
    let slope = (tf * ud_sum - u_sum * d_sum) / det;
    let intercept = (u_sq * d_sum - u_sum * ud_sum) / det;
    let rss: f64 = u
        .iter()
        .zip(&d)
        .map(|(&ui, &di)| {
            let r = di - intercept - slope * ui;
            r * r
        })
        .sum();
    let var_slope = (rss / (t - 2) as f64) * tf / det;
    (slope, var_slope.sqrt().clamp(1e-2, 1.0))
}

/// log of an equal-weight two-component normal mixture density.
fn log_mixture_density(g: f64, xi2: f64, center: f64, sd: f64) -> f64 {
    let log_wide = -0.5 * (g * g / xi2 + xi2.ln());
    let z = (g - center) / sd;
    let log_narrow = -0.5 * z * z - (sd * sd).ln() * 0.5;
    let hi = log_wide.max(log_narrow);
    hi + ((log_wide - hi).exp() + (log_narrow - hi).exp()).ln() - std::f64::consts::LN_2
}

impl<'a> ParcelChain<'a> {
    fn new(
        design: &'a DesignPair,
        cfg: &'a SamplerConfig,
        graph: ParcelGraph,
        ys: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let t = design.n_time();
        let n = ys.len();
        let states: Vec<VoxelState> = ys
            .iter()
            .map(|y| {
                let mut s = initialize_voxel_state(y, design);
                if let Some(s2) = cfg.fixed_sigma2 {
                    s.sigma2 = s2;
                }
                s
            })
            .collect();
        let mut bases = vec![vec![0.0; 2 * t]; n];
        for (state, basis) in states.iter().zip(bases.iter_mut()) {
            phase_basis_into(state.gamma, state.omega, design, basis)?;
        }
        let (slope_center, slope_sd): (Vec<f64>, Vec<f64>) =
            ys.iter().map(|y| phase_slope_ls(y, design)).unzip();
        let kappa_init = cfg.a_kappa * cfg.b_kappa;
        let mut field_lambda = ProbitField::new(cfg.psi_lambda, n, graph.q, kappa_init);
        let mut field_omega = ProbitField::new(cfg.psi_omega, n, graph.q, kappa_init);
        if let Some((eta_l, eta_o)) = cfg.fixed_eta {
            field_lambda.frozen_eta = Some(eta_l);
            field_omega.frozen_eta = Some(eta_o);
        }
        Ok(Self {
            design,
            cfg,
            graph,
            ys,
            states,
            bases,
            scratch: vec![0.0; 2 * t],
            tau2: cfg.fixed_tau2.unwrap_or(1.0),
            xi2: cfg.fixed_xi2.unwrap_or(1.0),
            field_lambda,
            field_omega,
            t,
            x_sum: design.x_sum(),
            x_sq: design.x_sq_sum(),
            mh_scale: 1.0,
            accepts: 0,
            proposals: 0,
            rb_lambda: vec![0.0; n],
            rb_omega: vec![0.0; n],
            rb_beta: vec![[0.0; 2]; n],
            slope_center,
            slope_sd,
        })
    }

    fn n_voxels(&self) -> usize {
        self.ys.len()
    }

    /// (x* ⊙ a)'y
    fn dot_x_basis_y(&self, basis: &[f64], y: &[f64]) -> f64 {
        let (b_cos, b_sin) = basis.split_at(self.t);
        let (y_r, y_i) = y.split_at(self.t);
        self.design
            .x()
            .iter()
            .zip(b_cos.iter().zip(y_r))
            .zip(b_sin.iter().zip(y_i))
            .map(|((&x, (&bc, &yr)), (&bs, &yi))| x * (bc * yr + bs * yi))
            .sum()
    }

    /// [(β_0·1 + λβ_1·x*) ⊙ (a_new − a_old)]'y
    fn weighted_diff_dot(&self, v: usize, a_new: &[f64], a_old: &[f64]) -> f64 {
        let s = &self.states[v];
        let b0 = s.beta[0];
        let b1 = if s.lambda { s.beta[1] } else { 0.0 };
        let y = &self.ys[v];
        let mut acc = 0.0;
        for i in 0..self.t {
            let w = b0 + b1 * self.design.x()[i];
            acc += w * (a_new[i] - a_old[i]) * y[i];
            acc += w * (a_new[self.t + i] - a_old[self.t + i]) * y[self.t + i];
        }
        acc
    }

    /// log(m0/m1) for λ with β integrated out of both branches: the marginal
    /// of y is N(0, σ²I + τ²B_λB_λ') with B_1 = [a, x*⊙a], B_0 = [a], and the
    /// determinant/Woodbury identities reduce everything to the 2×2 core
    /// B_1'B_1 = [[T, x'1], [x'1, x'x]].
    fn basis_dots(&self, v: usize) -> (f64, f64) {
        let a = &self.bases[v];
        let y = &self.ys[v];
        let ay: f64 = a.iter().zip(y).map(|(&ai, &yi)| ai * yi).sum();
        (ay, self.dot_x_basis_y(a, y))
    }

    #[cfg(test)]
    fn log_lambda_ratio(&self, v: usize) -> f64 {
        let (ay, xay) = self.basis_dots(v);
        collapsed_lambda_log_ratio(
            self.t as f64,
            self.x_sum,
            self.x_sq,
            ay,
            xay,
            self.states[v].sigma2,
            self.tau2,
        )
    }

    fn sample_lambda<R: Rng>(&mut self, v: usize, ay: f64, xay: f64, rng: &mut R) -> Result<()> {
        let log_ratio = collapsed_lambda_log_ratio(
            self.t as f64,
            self.x_sum,
            self.x_sq,
            ay,
            xay,
            self.states[v].sigma2,
            self.tau2,
        );
        if !log_ratio.is_finite() {
            return Err(Error::NonFinite {
                context: "lambda log-ratio",
                voxel: v,
            });
        }
        let p = bernoulli_from_log_ratio(self.field_lambda.prior_prob(v, &self.graph), log_ratio);
        self.rb_lambda[v] = p;
        let s = &mut self.states[v];
        s.lambda = rng.random::<f64>() < p;
        if !s.lambda {
            s.beta[1] = 0.0;
        }
        Ok(())
    }

    /// β draw plus the λ-averaged map contribution; the basis is unchanged
    /// since the λ update, so its inner products with y are reused as given.
    fn sample_beta<R: Rng>(&mut self, v: usize, ay: f64, xay: f64, rng: &mut R) {
        let (sigma2, lambda) = {
            let s = &self.states[v];
            (s.sigma2, s.lambda)
        };
        self.states[v].beta = draw_beta_conditional(
            self.t as f64,
            self.x_sum,
            self.x_sq,
            ay,
            xay,
            sigma2,
            self.tau2,
            lambda,
            rng,
        );
        // Conditional means instead of draws: β0 mixes the two λ branches
        // with the conditional P(λ = 1); β1 is the slab-branch mean, so the
        // amplitude map estimates E[β1 | λ = 1, y] without dilution by the
        // inclusion probability.
        let p = self.rb_lambda[v];
        let shrink = sigma2 / self.tau2;
        let m11 = self.t as f64 + shrink;
        let m22 = self.x_sq + shrink;
        let det = m11 * m22 - self.x_sum * self.x_sum;
        let mu0_slab = (m22 * ay - self.x_sum * xay) / det;
        let mu1_slab = (m11 * xay - self.x_sum * ay) / det;
        let mu0_spike = ay / m11;
        self.rb_beta[v] = [p * mu0_slab + (1.0 - p) * mu0_spike, mu1_slab];
    }

    /// log α of the ω flip, leaving the flipped-state basis in `scratch`.
    /// Death (1 → 0) drops γ_1; birth (0 → 1) installs `birth_slope`, drawn
    /// from an equal mixture of the slab prior N(0, ξ²) and the least-squares
    /// proposal N(ĝ_v, s_v²), so the prior/proposal densities of the slope
    /// enter the ratio explicitly.
    fn omega_flip_log_alpha(&mut self, v: usize, birth_slope: f64) -> Result<f64> {
        let (gamma, omega, sigma2) = {
            let s = &self.states[v];
            (s.gamma, s.omega, s.sigma2)
        };
        let prior = self.field_omega.prior_prob(v, &self.graph);
        let slope = if omega { gamma[1] } else { birth_slope };
        let log_slab = -0.5 * (slope * slope / self.xi2 + self.xi2.ln());
        let log_prop =
            log_mixture_density(slope, self.xi2, self.slope_center[v], self.slope_sd[v]);
        let (flipped, log_odds) = if omega {
            (
                [gamma[0], 0.0],
                (1.0 - prior).ln() - prior.ln() + log_prop - log_slab,
            )
        } else {
            (
                [gamma[0], birth_slope],
                prior.ln() - (1.0 - prior).ln() + log_slab - log_prop,
            )
        };
        phase_basis_into(flipped, !omega, self.design, &mut self.scratch)?;
        let log_alpha =
            self.weighted_diff_dot(v, &self.scratch, &self.bases[v]) / sigma2 + log_odds;
        if log_alpha.is_nan() {
            return Err(Error::NonFinite {
                context: "omega flip ratio",
                voxel: v,
            });
        }
        Ok(log_alpha)
    }

    /// One birth-death flip attempt; returns the post-attempt P(ω_v = 1),
    /// i.e. the flip probability when inactive and its complement when
    /// active.
    fn sample_omega<R: Rng>(&mut self, v: usize, rng: &mut R) -> Result<f64> {
        let omega = self.states[v].omega;
        let birth_slope = if omega {
            0.0
        } else {
            let z: f64 = StandardNormal.sample(rng);
            if rng.random::<f64>() < 0.5 {
                self.xi2.sqrt() * z
            } else {
                self.slope_center[v] + self.slope_sd[v] * z
            }
        };
        let log_alpha = self.omega_flip_log_alpha(v, birth_slope)?;
        let accept_prob = log_alpha.min(0.0).exp();
        if rng.random::<f64>().ln() < log_alpha {
            let s = &mut self.states[v];
            s.omega = !omega;
            s.gamma[1] = if omega { 0.0 } else { birth_slope };
            self.bases[v].copy_from_slice(&self.scratch);
        }
        Ok(if omega {
            1.0 - accept_prob
        } else {
            accept_prob
        })
    }

    /// log acceptance ratio of the γ random walk at `proposed`, leaving the
    /// proposal basis in `scratch`. The prior quadratic honors the Ω mask.
    fn gamma_log_ratio(&mut self, v: usize, proposed: [f64; 2]) -> Result<f64> {
        let (gamma, omega, sigma2) = {
            let s = &self.states[v];
            (s.gamma, s.omega, s.sigma2)
        };
        phase_basis_into(proposed, omega, self.design, &mut self.scratch)?;
        let prior_quad_diff = proposed[0] * proposed[0] - gamma[0] * gamma[0]
            + if omega {
                proposed[1] * proposed[1] - gamma[1] * gamma[1]
            } else {
                0.0
            };
        Ok(self.weighted_diff_dot(v, &self.scratch, &self.bases[v]) / sigma2
            - prior_quad_diff / (2.0 * self.xi2))
    }

    fn sample_gamma_mh<R: Rng>(&mut self, v: usize, rng: &mut R) -> Result<()> {
        let (gamma, omega) = {
            let s = &self.states[v];
            (s.gamma, s.omega)
        };
        let sd = self.cfg.mh_step * self.mh_scale;
        let z0: f64 = StandardNormal.sample(rng);
        let proposed = if omega {
            let z1: f64 = StandardNormal.sample(rng);
            [gamma[0] + sd * z0, gamma[1] + sd * z1]
        } else {
            [gamma[0] + sd * z0, 0.0]
        };
        let log_r = self.gamma_log_ratio(v, proposed)?;
        if !log_r.is_finite() {
            return Err(Error::NonFinite {
                context: "gamma acceptance ratio",
                voxel: v,
            });
        }
        self.proposals += 1;
        let accepted = rng.random::<f64>().ln() < log_r;
        if accepted {
            self.accepts += 1;
            self.states[v].gamma = proposed;
            self.bases[v].copy_from_slice(&self.scratch);
        }
        if self.cfg.adapt_proposal {
            let step = 1.0 / (self.proposals as f64).powf(0.6);
            let target = 0.35;
            let outcome = if accepted { 1.0 } else { 0.0 };
            self.mh_scale *= (step * (outcome - target)).exp();
        }
        Ok(())
    }

    fn sample_sigma2<R: Rng>(&mut self, v: usize, rng: &mut R) -> Result<()> {
        if self.cfg.fixed_sigma2.is_some() {
            return Ok(());
        }
        let rss = {
            let s = &self.states[v];
            let b0 = s.beta[0];
            let b1 = if s.lambda { s.beta[1] } else { 0.0 };
            let a = &self.bases[v];
            let y = &self.ys[v];
            let mut acc = 0.0;
            for i in 0..self.t {
                let rho = b0 + b1 * self.design.x()[i];
                let r = y[i] - rho * a[i];
                let im = y[self.t + i] - rho * a[self.t + i];
                acc += r * r + im * im;
            }
            acc
        };
        if rss <= 0.0 {
            return Err(Error::DegenerateVariance(v));
        }
        self.states[v].sigma2 = inverse_gamma(self.t as f64, 0.5 * rss, rng);
        Ok(())
    }

    fn sample_parcel_variances<R: Rng>(&mut self, rng: &mut R) {
        if self.cfg.fixed_tau2.is_none() {
            let count: usize = self.states.iter().filter(|s| s.lambda).count();
            let shape = 0.5 * (self.n_voxels() + count) as f64;
            let quad: f64 = self
                .states
                .iter()
                .map(|s| {
                    s.beta[0] * s.beta[0]
                        + if s.lambda { s.beta[1] * s.beta[1] } else { 0.0 }
                })
                .sum();
            self.tau2 = inverse_gamma(shape, 0.5 * quad, rng);
        }
        if self.cfg.fixed_xi2.is_none() {
            let count: usize = self.states.iter().filter(|s| s.omega).count();
            let shape = 0.5 * (self.n_voxels() + count) as f64;
            let quad: f64 = self
                .states
                .iter()
                .map(|s| {
                    s.gamma[0] * s.gamma[0]
                        + if s.omega { s.gamma[1] * s.gamma[1] } else { 0.0 }
                })
                .sum();
            self.xi2 = inverse_gamma(shape, 0.5 * quad, rng);
        }
    }

    fn sweep<R: Rng>(&mut self, rng: &mut R) -> Result<()> {
        const PHASE_ROUNDS: usize = 2;
        for v in 0..self.n_voxels() {
            let (ay, xay) = self.basis_dots(v);
            self.sample_lambda(v, ay, xay, rng)?;
            self.sample_beta(v, ay, xay, rng);
            let mut acc = 0.0;
            for _ in 0..PHASE_ROUNDS {
                acc += self.sample_omega(v, rng)?;
                self.sample_gamma_mh(v, rng)?;
            }
            self.rb_omega[v] = acc / PHASE_ROUNDS as f64;
            self.sample_sigma2(v, rng)?;
            let lambda = self.states[v].lambda;
            let omega = self.states[v].omega;
            self.field_lambda.sample_eta(v, lambda, &self.graph, rng);
            self.field_omega.sample_eta(v, omega, &self.graph, rng);
        }
        self.sample_parcel_variances(rng);
        self.field_lambda.sample_delta(&self.graph, rng);
        self.field_lambda
            .sample_kappa(&self.graph, self.cfg.a_kappa, self.cfg.b_kappa, rng);
        self.field_omega.sample_delta(&self.graph, rng);
        self.field_omega
            .sample_kappa(&self.graph, self.cfg.a_kappa, self.cfg.b_kappa, rng);
        Ok(())
    }
}

/// P = Φ / (Φ + (L0/L1)(1−Φ)), stabilized as 1/(1+e^z).
pub(crate) fn bernoulli_from_log_ratio(prior_prob: f64, log_ratio: f64) -> f64 {
    if prior_prob <= 0.0 {
        return 0.0;
    }
    if prior_prob >= 1.0 {
        return 1.0;
    }
    let z = log_ratio + (1.0 - prior_prob).ln() - prior_prob.ln();
    logistic_complement(z)
}

/// Draw from IG(shape, scale) as scale over a unit-scale Gamma draw.
pub(crate) fn inverse_gamma<R: Rng>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0).expect("valid shape").sample(rng);
    scale / g
}

/// log(m0/m1) for one spike-and-slab regression block with coefficients
/// integrated out. `g11, g12, g22` are the Gram entries of the two basis
/// columns (intercept-like and slope-like) and `by0, by1` their inner
/// products with the observation.
pub(crate) fn collapsed_lambda_log_ratio(
    g11: f64,
    g12: f64,
    g22: f64,
    by0: f64,
    by1: f64,
    sigma2: f64,
    tau2: f64,
) -> f64 {
    let r = tau2 / sigma2;
    let shrink = sigma2 / tau2;
    let log_det1 = ((1.0 + r * g11) * (1.0 + r * g22) - r * r * g12 * g12).ln();
    let log_det0 = (1.0 + r * g11).ln();
    let q0 = by0 * by0 / (g11 + shrink);
    let m11 = g11 + shrink;
    let m22 = g22 + shrink;
    let det = m11 * m22 - g12 * g12;
    let q1 = (m22 * by0 * by0 - 2.0 * g12 * by0 * by1 + m11 * by1 * by1) / det;
    0.5 * (log_det1 - log_det0) + (q0 - q1) / (2.0 * sigma2)
}

/// Conjugate draw of one regression block's coefficients. With λ = 1 the
/// pair comes from N((B'B + (σ²/τ²)I)⁻¹B'y, σ²(B'B + (σ²/τ²)I)⁻¹); with
/// λ = 0 only the intercept-like coefficient is drawn and the slope is 0.
#[allow(clippy::too_many_arguments)]
pub(crate) fn draw_beta_conditional<R: Rng>(
    g11: f64,
    g12: f64,
    g22: f64,
    by0: f64,
    by1: f64,
    sigma2: f64,
    tau2: f64,
    lambda: bool,
    rng: &mut R,
) -> [f64; 2] {
    let shrink = sigma2 / tau2;
    if lambda {
        let m11 = g11 + shrink;
        let m22 = g22 + shrink;
        let det = m11 * m22 - g12 * g12;
        let mu0 = (m22 * by0 - g12 * by1) / det;
        let mu1 = (m11 * by1 - g12 * by0) / det;
        // Σ = σ² M⁻¹, sampled via its 2×2 Cholesky factor.
        let c11 = sigma2 * m22 / det;
        let c12 = -sigma2 * g12 / det;
        let c22 = sigma2 * m11 / det;
        let l11 = c11.sqrt();
        let l21 = c12 / l11;
        let l22 = (c22 - l21 * l21).max(0.0).sqrt();
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        [mu0 + l11 * z0, mu1 + l21 * z0 + l22 * z1]
    } else {
        let denom = g11 + shrink;
        let z: f64 = StandardNormal.sample(rng);
        [by0 / denom + (sigma2 / denom).sqrt() * z, 0.0]
    }
}

struct ParcelOutput {
    voxels: Vec<usize>,
    mean_beta: Vec<[f64; 2]>,
    mean_gamma: Vec<[f64; 2]>,
    prob_lambda: Vec<f64>,
    prob_omega: Vec<f64>,
    mcse_lambda: Vec<f64>,
    mcse_omega: Vec<f64>,
    accepts: u64,
    proposals: u64,
}

fn run_parcel(
    data: &ComplexImageSeries,
    design: &DesignPair,
    parcellation: &Parcellation,
    cfg: &SamplerConfig,
    parcel_id: usize,
) -> Result<ParcelOutput> {
    let voxels = parcellation.parcel(parcel_id).to_vec();
    let coords = parcellation.parcel_coords(parcel_id);
    let q = cfg.q_override.unwrap_or_else(|| default_q(voxels.len()));
    let graph = ParcelGraph::new(&coords, cfg.neighborhood, q.min(voxels.len()))?;
    let ys: Vec<Vec<f64>> = voxels.iter().map(|&v| data.stacked(v)).collect();
    let mut chain = ParcelChain::new(design, cfg, graph, ys)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(parcel_id as u64 + 1);

    let n = chain.n_voxels();
    let keep = cfg.n_iter - cfg.burn_in;
    let mut sum_beta = vec![[0.0f64; 2]; n];
    let mut sum_gamma = vec![[0.0f64; 2]; n];
    let mut omega_occupancy = vec![0u32; n];
    let mut lambda_trace = vec![Vec::with_capacity(keep); n];
    let mut omega_trace = vec![Vec::with_capacity(keep); n];

    for iter in 0..cfg.n_iter {
        chain.sweep(&mut rng)?;
        if iter >= cfg.burn_in {
            for v in 0..n {
                let s = &chain.states[v];
                sum_beta[v][0] += chain.rb_beta[v][0];
                sum_beta[v][1] += chain.rb_beta[v][1];
                sum_gamma[v][0] += s.gamma[0];
                // γ1 averaged over active sweeps only, estimating the phase
                // slope conditional on ω = 1.
                if s.omega {
                    sum_gamma[v][1] += s.gamma[1];
                    omega_occupancy[v] += 1;
                }
                lambda_trace[v].push(chain.rb_lambda[v]);
                omega_trace[v].push(chain.rb_omega[v]);
            }
        }
    }

    let keep_f = keep as f64;
    let mean_beta = sum_beta
        .iter()
        .map(|b| [b[0] / keep_f, b[1] / keep_f])
        .collect();
    let mean_gamma = sum_gamma
        .iter()
        .zip(&omega_occupancy)
        .map(|(g, &k)| [wrap_angle(g[0] / keep_f), g[1] / (k.max(1) as f64)])
        .collect();
    let prob = |trace: &Vec<f64>| trace.iter().sum::<f64>() / keep_f;
    Ok(ParcelOutput {
        voxels,
        mean_beta,
        mean_gamma,
        prob_lambda: lambda_trace.iter().map(prob).collect(),
        prob_omega: omega_trace.iter().map(prob).collect(),
        mcse_lambda: lambda_trace
            .iter()
            .map(|t| batch_means_mcse(t).unwrap_or(f64::INFINITY))
            .collect(),
        mcse_omega: omega_trace
            .iter()
            .map(|t| batch_means_mcse(t).unwrap_or(f64::INFINITY))
            .collect(),
        accepts: chain.accepts,
        proposals: chain.proposals,
    })
}

/// Run the CV-M&P chain over every parcel (in parallel) and merge the
/// posterior summaries. Deterministic for a fixed seed and parcel count,
/// independent of thread count.
pub fn run_chain(
    data: &ComplexImageSeries,
    design: &DesignPair,
    parcellation: &Parcellation,
    config: &SamplerConfig,
) -> Result<PosteriorSummary> {
    config.validate()?;
    if data.n_time() != design.n_time() {
        return Err(Error::Shape("data and design time axes differ".into()));
    }
    if parcellation.assignment().len() != data.n_voxels() {
        return Err(Error::Shape("parcellation does not cover the data".into()));
    }
    let start = std::time::Instant::now();
    let outputs: Result<Vec<ParcelOutput>> = (0..parcellation.n_parcels())
        .into_par_iter()
        .map(|g| run_parcel(data, design, parcellation, config, g))
        .collect();
    let outputs = outputs?;

    let n_voxels = data.n_voxels();
    let mut summary = PosteriorSummary {
        mean_beta: vec![[0.0; 2]; n_voxels],
        mean_gamma: Some(vec![[0.0; 2]; n_voxels]),
        mean_beta_imag: None,
        prob_lambda: vec![0.0; n_voxels],
        prob_omega: Some(vec![0.0; n_voxels]),
        active_mag: vec![0; n_voxels],
        active_phase: Some(vec![0; n_voxels]),
        mcse_lambda: vec![f64::INFINITY; n_voxels],
        mcse_omega: Some(vec![f64::INFINITY; n_voxels]),
        converged: vec![false; n_voxels],
        mh_acceptance: None,
        runtime_seconds: 0.0,
    };
    let mut accepts = 0u64;
    let mut proposals = 0u64;
    for out in &outputs {
        accepts += out.accepts;
        proposals += out.proposals;
        for (i, &v) in out.voxels.iter().enumerate() {
            summary.mean_beta[v] = out.mean_beta[i];
            summary.mean_gamma.as_mut().unwrap()[v] = out.mean_gamma[i];
            summary.prob_lambda[v] = out.prob_lambda[i];
            summary.prob_omega.as_mut().unwrap()[v] = out.prob_omega[i];
            summary.mcse_lambda[v] = out.mcse_lambda[i];
            summary.mcse_omega.as_mut().unwrap()[v] = out.mcse_omega[i];
            summary.active_mag[v] = (out.prob_lambda[i] > config.threshold) as u8;
            summary.active_phase.as_mut().unwrap()[v] =
                (out.prob_omega[i] > config.threshold) as u8;
            summary.converged[v] = out.mcse_lambda[i] < config.mcse_target
                && out.mcse_omega[i] < config.mcse_target;
        }
    }
    summary.mh_acceptance = Some(if proposals > 0 {
        accepts as f64 / proposals as f64
    } else {
        0.0
    });
    summary.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(summary)
}
