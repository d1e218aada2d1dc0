//! Reference implementations used only for cross-checking.
//!
//! Everything in this module recomputes a quantity through a deliberately
//! naive route (dense matrix products, O(n²) pair counting, grid quadrature)
//! and must stay independent of the fast paths it validates. Production code
//! must not call into this module.

use nalgebra::{DMatrix, DVector};

use crate::model::{DesignPair, PolarCoefficients};

/// Dense 2T×T basis matrix A = [diag cos(UΩγ); diag sin(UΩγ)].
pub fn dense_basis(gamma: [f64; 2], omega: bool, design: &DesignPair) -> DMatrix<f64> {
    let t = design.n_time();
    let slope = if omega { gamma[1] } else { 0.0 };
    let mut a = DMatrix::zeros(2 * t, t);
    for (i, &u_t) in design.u().iter().enumerate() {
        let angle = gamma[0] + u_t * slope;
        a[(i, i)] = angle.cos();
        a[(t + i, i)] = angle.sin();
    }
    a
}

/// Dense T×2 magnitude design X = [1, x].
pub fn dense_design_matrix(design: &DesignPair) -> DMatrix<f64> {
    let t = design.n_time();
    DMatrix::from_fn(t, 2, |i, j| if j == 0 { 1.0 } else { design.x()[i] })
}

/// A X Λ β through explicit matrix products.
pub fn dense_polar_mean(
    coef: &PolarCoefficients,
    lambda: bool,
    omega: bool,
    design: &DesignPair,
) -> Vec<f64> {
    let a = dense_basis([coef.gamma0, coef.gamma1], omega, design);
    let x = dense_design_matrix(design);
    let mask = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, if lambda { 1.0 } else { 0.0 }]));
    let beta = DVector::from_vec(vec![coef.beta0, coef.beta1]);
    (a * x * mask * beta).iter().copied().collect()
}

fn sq_norm_residual(y: &[f64], mean: &[f64]) -> f64 {
    y.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// ln N(y; 0, σ²I + τ²BB') formed fully densely: build the n×n covariance,
/// factor it, solve. Only viable for tiny instances.
pub fn dense_log_gaussian_marginal(
    y: &DVector<f64>,
    basis: &DMatrix<f64>,
    sigma2: f64,
    tau2: f64,
) -> f64 {
    let n = y.len();
    let cov = DMatrix::identity(n, n) * sigma2 + basis * basis.transpose() * tau2;
    let chol = cov.cholesky().expect("marginal covariance positive definite");
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let quad = y.dot(&chol.solve(y));
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad)
}

/// log(m0/m1) of the magnitude indicator with β integrated out, via the
/// fully dense marginal Gaussians.
pub fn dense_log_lambda_ratio(
    y: &[f64],
    gamma: [f64; 2],
    omega: bool,
    sigma2: f64,
    tau2: f64,
    design: &DesignPair,
) -> f64 {
    let y = DVector::from_column_slice(y);
    let a = dense_basis(gamma, omega, design);
    let x = dense_design_matrix(design);
    let b1 = &a * &x;
    let b0 = &a * x.columns(0, 1);
    dense_log_gaussian_marginal(&y, &b0, sigma2, tau2)
        - dense_log_gaussian_marginal(&y, &b1, sigma2, tau2)
}

/// Normal log density without the 2π constant.
fn log_normal_unnorm(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (d * d / var + var.ln())
}

/// log density of the birth proposal: equal-weight mixture of the slab
/// N(0, ξ²) and the least-squares component N(center, sd²).
pub fn log_birth_proposal_density(gamma1: f64, xi2: f64, center: f64, sd: f64) -> f64 {
    let a = log_normal_unnorm(gamma1, 0.0, xi2);
    let b = log_normal_unnorm(gamma1, center, sd * sd);
    let m = a.max(b);
    m + (0.5 * (a - m).exp() + 0.5 * (b - m).exp()).ln()
}

/// log acceptance ratio of the ω birth move (ω: 0 → 1 with slope `gamma1`
/// drawn from the mixture proposal), via dense means. The slab prior of the
/// slope and the proposal density both enter the ratio.
#[allow(clippy::too_many_arguments)]
pub fn dense_log_omega_birth(
    y: &[f64],
    beta: [f64; 2],
    lambda: bool,
    gamma0: f64,
    gamma1: f64,
    sigma2: f64,
    prior_prob: f64,
    xi2: f64,
    proposal_center: f64,
    proposal_sd: f64,
    design: &DesignPair,
) -> f64 {
    let at = |g1: f64, omega: bool| {
        let coef = PolarCoefficients {
            beta0: beta[0],
            beta1: beta[1],
            gamma0,
            gamma1: g1,
        };
        sq_norm_residual(y, &dense_polar_mean(&coef, lambda, omega, design))
    };
    (at(0.0, false) - at(gamma1, true)) / (2.0 * sigma2)
        + prior_prob.ln()
        - (1.0 - prior_prob).ln()
        + log_normal_unnorm(gamma1, 0.0, xi2)
        - log_birth_proposal_density(gamma1, xi2, proposal_center, proposal_sd)
}

/// log acceptance ratio of the ω death move (ω: 1 → 0, slope dropped).
#[allow(clippy::too_many_arguments)]
pub fn dense_log_omega_death(
    y: &[f64],
    beta: [f64; 2],
    lambda: bool,
    gamma0: f64,
    gamma1: f64,
    sigma2: f64,
    prior_prob: f64,
    xi2: f64,
    proposal_center: f64,
    proposal_sd: f64,
    design: &DesignPair,
) -> f64 {
    -dense_log_omega_birth(
        y,
        beta,
        lambda,
        gamma0,
        gamma1,
        sigma2,
        prior_prob,
        xi2,
        proposal_center,
        proposal_sd,
        design,
    )
}

/// log acceptance ratio of the phase random walk, via dense densities.
pub fn dense_log_mh_ratio(
    y: &[f64],
    beta: [f64; 2],
    lambda: bool,
    omega: bool,
    gamma_current: [f64; 2],
    gamma_proposed: [f64; 2],
    sigma2: f64,
    xi2: f64,
    design: &DesignPair,
) -> f64 {
    let log_target = |gamma: [f64; 2]| {
        let coef = PolarCoefficients {
            beta0: beta[0],
            beta1: beta[1],
            gamma0: gamma[0],
            gamma1: gamma[1],
        };
        let mean = dense_polar_mean(&coef, lambda, omega, design);
        let rss = sq_norm_residual(y, &mean);
        let prior_quad =
            gamma[0] * gamma[0] + if omega { gamma[1] * gamma[1] } else { 0.0 };
        -rss / (2.0 * sigma2) - prior_quad / (2.0 * xi2)
    };
    log_target(gamma_proposed) - log_target(gamma_current)
}

/// log(m0/m1) for the magnitude-only baseline's indicator with β integrated
/// out, via the fully dense marginal Gaussians.
pub fn dense_log_mo_lambda_ratio(
    y_mag: &[f64],
    sigma2: f64,
    tau2: f64,
    design: &DesignPair,
) -> f64 {
    let y = DVector::from_column_slice(y_mag);
    let x = dense_design_matrix(design);
    dense_log_gaussian_marginal(&y, &x.columns(0, 1).into_owned(), sigma2, tau2)
        - dense_log_gaussian_marginal(&y, &x, sigma2, tau2)
}

/// log(m0/m1) for the Cartesian baseline's shared indicator with all four
/// regression coefficients integrated out.
pub fn dense_log_cvri_lambda_ratio(
    y_real: &[f64],
    y_imag: &[f64],
    sigma2: f64,
    tau2: f64,
    design: &DesignPair,
) -> f64 {
    let t = design.n_time();
    let mut y = Vec::with_capacity(2 * t);
    y.extend_from_slice(y_real);
    y.extend_from_slice(y_imag);
    let y = DVector::from_vec(y);
    let x = dense_design_matrix(design);
    let stack = |cols: usize| {
        let mut b = DMatrix::zeros(2 * t, 2 * cols);
        b.view_mut((0, 0), (t, cols)).copy_from(&x.columns(0, cols));
        b.view_mut((t, cols), (t, cols)).copy_from(&x.columns(0, cols));
        b
    };
    dense_log_gaussian_marginal(&y, &stack(1), sigma2, tau2)
        - dense_log_gaussian_marginal(&y, &stack(2), sigma2, tau2)
}

/// O(n²) Mann–Whitney AUC with ties counted one half.
pub fn auc_bruteforce(truth: &[u8], scores: &[f64]) -> Option<f64> {
    let mut pairs = 0.0f64;
    let mut wins = 0.0f64;
    for (i, (&ti, &si)) in truth.iter().zip(scores).enumerate() {
        for (&tj, &sj) in truth.iter().zip(scores).skip(i + 1) {
            let (pos, neg) = match (ti, tj) {
                (1, 0) => (si, sj),
                (0, 1) => (sj, si),
                _ => continue,
            };
            pairs += 1.0;
            if pos > neg {
                wins += 1.0;
            } else if pos == neg {
                wins += 0.5;
            }
        }
    }
    if pairs == 0.0 {
        None
    } else {
        Some(wins / pairs)
    }
}

/// Fixed hyperparameters for the small-instance posterior oracle.
#[derive(Debug, Clone, Copy)]
pub struct FixedHyper {
    pub sigma2: f64,
    pub tau2: f64,
    pub xi2: f64,
    /// Prior activation probability Φ(ψ_λ + η_λ).
    pub p_lambda: f64,
    /// Prior activation probability Φ(ψ_ω + η_ω).
    pub p_omega: f64,
}

/// Marginal likelihood ln m(y | λ, ω) with β integrated analytically and γ
/// integrated on a grid weighted by its normal prior.
fn log_marginal(
    y: &DVector<f64>,
    lambda: bool,
    omega: bool,
    h: &FixedHyper,
    design: &DesignPair,
    grid_half_width: f64,
    grid_points: usize,
) -> f64 {
    let two_t = y.len();
    let x = dense_design_matrix(design);

    // ln N(y; 0, σ²I + τ²BB') for the rank-k regression slab, via the
    // matrix determinant and Woodbury identities on the k×k core.
    let log_gauss = |basis: &DMatrix<f64>| -> f64 {
        let k = basis.ncols();
        let bt_b = basis.transpose() * basis;
        let bt_y = basis.transpose() * y;
        let core = DMatrix::identity(k, k) * (h.sigma2 / h.tau2) + &bt_b;
        let core_inv = core.clone().try_inverse().expect("core invertible");
        let y_quad = (y.dot(y) - (bt_y.transpose() * core_inv * &bt_y)[(0, 0)]) / h.sigma2;
        let log_det = two_t as f64 * h.sigma2.ln()
            + (DMatrix::identity(k, k) + bt_b * (h.tau2 / h.sigma2))
                .determinant()
                .ln();
        -0.5 * (two_t as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + y_quad)
    };

    let log_m_given_gamma = |gamma: [f64; 2]| -> f64 {
        let a = dense_basis(gamma, omega, design);
        let basis = if lambda {
            &a * &x
        } else {
            // λ = 0: only the intercept column survives Λ.
            &a * x.columns(0, 1)
        };
        log_gauss(&basis)
    };

    let step = 2.0 * grid_half_width / (grid_points - 1) as f64;
    let prior_sd = h.xi2.sqrt();
    let log_prior = |g: f64| {
        -0.5 * (g / prior_sd) * (g / prior_sd)
            - 0.5 * (2.0 * std::f64::consts::PI * h.xi2).ln()
    };

    let mut terms = Vec::new();
    if omega {
        for i in 0..grid_points {
            let g0 = -grid_half_width + i as f64 * step;
            for j in 0..grid_points {
                let g1 = -grid_half_width + j as f64 * step;
                terms.push(
                    log_m_given_gamma([g0, g1]) + log_prior(g0) + log_prior(g1)
                        + 2.0 * step.ln(),
                );
            }
        }
    } else {
        for i in 0..grid_points {
            let g0 = -grid_half_width + i as f64 * step;
            terms.push(log_m_given_gamma([g0, 0.0]) + log_prior(g0) + step.ln());
        }
    }
    log_sum_exp(&terms)
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Exact per-voxel posterior over (λ, ω) under fixed hyperparameters,
/// computed by enumeration plus quadrature. Returns probs[λ][ω].
pub fn enumeration_posterior(
    y: &[f64],
    h: &FixedHyper,
    design: &DesignPair,
    grid_half_width: f64,
    grid_points: usize,
) -> [[f64; 2]; 2] {
    let y = DVector::from_column_slice(y);
    let mut log_weights = [[0.0f64; 2]; 2];
    for (li, &lambda) in [false, true].iter().enumerate() {
        for (oi, &omega) in [false, true].iter().enumerate() {
            let lp_lambda = if lambda { h.p_lambda.ln() } else { (1.0 - h.p_lambda).ln() };
            let lp_omega = if omega { h.p_omega.ln() } else { (1.0 - h.p_omega).ln() };
            log_weights[li][oi] = lp_lambda
                + lp_omega
                + log_marginal(&y, lambda, omega, h, design, grid_half_width, grid_points);
        }
    }
    let flat = [
        log_weights[0][0],
        log_weights[0][1],
        log_weights[1][0],
        log_weights[1][1],
    ];
    let norm = log_sum_exp(&flat);
    let mut probs = [[0.0f64; 2]; 2];
    for li in 0..2 {
        for oi in 0..2 {
            probs[li][oi] = (log_weights[li][oi] - norm).exp();
        }
    }
    probs
}
