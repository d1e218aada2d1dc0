//! The two comparison samplers: magnitude-only MO and Cartesian CV-R&I.
//!
//! Both are fully conjugate spike-and-slab regressions (no MH step) sharing
//! the sSGLMM spatial prior machinery. MO regresses the magnitude series on
//! [1, x]; CV-R&I stacks the real and imaginary regressions with one
//! activation indicator masking both slopes. λ is drawn with the regression
//! coefficients integrated out, mirroring the main sampler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{arctan4, ComplexImageSeries, DesignPair};
use crate::sampler::diagnostics::batch_means_mcse;
use crate::sampler::spatial_prior::ProbitField;
use crate::sampler::{
    bernoulli_from_log_ratio, collapsed_lambda_log_ratio, draw_beta_conditional, inverse_gamma,
    PosteriorSummary, SamplerConfig, SIGMA2_FLOOR,
};
use crate::spatial::{default_q, ParcelGraph, Parcellation};
use crate::util::std_normal_quantile;

/// MO tuning: ψ = Φ⁻¹(0.35), activation threshold 0.8722.
pub fn mo_config() -> SamplerConfig {
    SamplerConfig {
        psi_lambda: std_normal_quantile(0.35),
        psi_omega: std_normal_quantile(0.35),
        threshold: 0.8722,
        ..SamplerConfig::default()
    }
}

/// CV-R&I tuning: ψ = Φ⁻¹(0.30), activation threshold 0.8722.
pub fn cvri_config() -> SamplerConfig {
    SamplerConfig {
        psi_lambda: std_normal_quantile(0.30),
        psi_omega: std_normal_quantile(0.30),
        threshold: 0.8722,
        ..SamplerConfig::default()
    }
}

/// y_M = √(y_R² + y_I²) elementwise, row-major V×T.
pub fn magnitude_series(data: &ComplexImageSeries) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.n_voxels() * data.n_time());
    for v in 0..data.n_voxels() {
        for (&r, &i) in data.real_row(v).iter().zip(data.imag_row(v)) {
            out.push((r * r + i * i).sqrt());
        }
    }
    out
}

/// Least squares of y on [1, x]: coefficients and residual variance.
fn ls_line(y: &[f64], design: &DesignPair) -> ([f64; 2], f64) {
    let t = design.n_time() as f64;
    let x_sum = design.x_sum();
    let x_sq = design.x_sq_sum();
    let y_sum: f64 = y.iter().sum();
    let xy_sum: f64 = y.iter().zip(design.x()).map(|(&yi, &x)| yi * x).sum();
    let det = t * x_sq - x_sum * x_sum;
    let beta = [
        (x_sq * y_sum - x_sum * xy_sum) / det,
        (t * xy_sum - x_sum * y_sum) / det,
    ];
    let rss: f64 = y
        .iter()
        .zip(design.x())
        .map(|(&yi, &x)| {
            let r = yi - beta[0] - beta[1] * x;
            r * r
        })
        .sum();
    (beta, (rss / t).max(SIGMA2_FLOOR))
}

struct BaselineOutput {
    voxels: Vec<usize>,
    mean_beta: Vec<[f64; 2]>,
    mean_beta_imag: Vec<[f64; 2]>,
    prob_lambda: Vec<f64>,
    mcse_lambda: Vec<f64>,
}

struct BaselineParcel<'a> {
    design: &'a DesignPair,
    cfg: &'a SamplerConfig,
    graph: ParcelGraph,
    /// Inner products (1'y, x'y) per block per voxel; the design never
    /// changes, so these are fixed for the whole chain.
    dots: Vec<Vec<[f64; 2]>>,
    /// Residual bookkeeping needs the raw series.
    ys: Vec<Vec<Vec<f64>>>,
    /// One coefficient pair per block per voxel.
    betas: Vec<Vec<[f64; 2]>>,
    lambdas: Vec<bool>,
    /// Conditional P(λ_v = 1) of the latest sweep (Rao-Blackwellized trace).
    rb_lambda: Vec<f64>,
    sigma2s: Vec<f64>,
    tau2: f64,
    field: ProbitField,
}

impl<'a> BaselineParcel<'a> {
    /// `blocks[v]` holds one series for MO, two (real, imaginary) for CV-R&I.
    fn new(
        design: &'a DesignPair,
        cfg: &'a SamplerConfig,
        graph: ParcelGraph,
        blocks: Vec<Vec<Vec<f64>>>,
    ) -> Self {
        let n = blocks.len();
        let mut dots = Vec::with_capacity(n);
        let mut betas = Vec::with_capacity(n);
        let mut sigma2s = Vec::with_capacity(n);
        for series in &blocks {
            let mut voxel_dots = Vec::with_capacity(series.len());
            let mut voxel_betas = Vec::with_capacity(series.len());
            let mut var_sum = 0.0;
            for y in series {
                let y_sum: f64 = y.iter().sum();
                let xy_sum: f64 = y.iter().zip(design.x()).map(|(&yi, &x)| yi * x).sum();
                voxel_dots.push([y_sum, xy_sum]);
                let (beta, var) = ls_line(y, design);
                voxel_betas.push(beta);
                var_sum += var;
            }
            dots.push(voxel_dots);
            betas.push(voxel_betas);
            sigma2s.push(cfg.fixed_sigma2.unwrap_or(var_sum / series.len() as f64));
        }
        let mut field = ProbitField::new(cfg.psi_lambda, n, graph.q, cfg.a_kappa * cfg.b_kappa);
        if let Some((eta, _)) = cfg.fixed_eta {
            field.frozen_eta = Some(eta);
        }
        Self {
            design,
            cfg,
            graph,
            dots,
            ys: blocks,
            betas,
            lambdas: vec![true; n],
            rb_lambda: vec![0.0; n],
            sigma2s,
            tau2: cfg.fixed_tau2.unwrap_or(1.0),
            field,
        }
    }

    fn n_voxels(&self) -> usize {
        self.ys.len()
    }

    fn log_lambda_ratio(&self, v: usize) -> f64 {
        let t = self.design.n_time() as f64;
        let x_sum = self.design.x_sum();
        let x_sq = self.design.x_sq_sum();
        self.dots[v]
            .iter()
            .map(|d| {
                collapsed_lambda_log_ratio(t, x_sum, x_sq, d[0], d[1], self.sigma2s[v], self.tau2)
            })
            .sum()
    }

    fn sweep<R: Rng>(&mut self, rng: &mut R) -> Result<()> {
        let t = self.design.n_time() as f64;
        let x_sum = self.design.x_sum();
        let x_sq = self.design.x_sq_sum();
        for v in 0..self.n_voxels() {
            let log_ratio = self.log_lambda_ratio(v);
            if !log_ratio.is_finite() {
                return Err(Error::NonFinite {
                    context: "lambda log-ratio",
                    voxel: v,
                });
            }
            let p = bernoulli_from_log_ratio(self.field.prior_prob(v, &self.graph), log_ratio);
            self.rb_lambda[v] = p;
            let lambda = rng.random::<f64>() < p;
            self.lambdas[v] = lambda;
            let mut rss = 0.0;
            for (block, dots) in self.dots[v].clone().iter().enumerate() {
                let beta = draw_beta_conditional(
                    t,
                    x_sum,
                    x_sq,
                    dots[0],
                    dots[1],
                    self.sigma2s[v],
                    self.tau2,
                    lambda,
                    rng,
                );
                self.betas[v][block] = beta;
                rss += self.ys[v][block]
                    .iter()
                    .zip(self.design.x())
                    .map(|(&yi, &x)| {
                        let r = yi - beta[0] - beta[1] * x;
                        r * r
                    })
                    .sum::<f64>();
            }
            if self.cfg.fixed_sigma2.is_none() {
                if rss <= 0.0 {
                    return Err(Error::DegenerateVariance(v));
                }
                let n_obs = self.dots[v].len() as f64 * t;
                self.sigma2s[v] = inverse_gamma(0.5 * n_obs, 0.5 * rss, rng);
            }
            self.field.sample_eta(v, lambda, &self.graph, rng);
        }
        if self.cfg.fixed_tau2.is_none() {
            let blocks = self.dots[0].len() as f64;
            let count: usize = self.lambdas.iter().filter(|&&l| l).count();
            let shape = 0.5 * blocks * (self.n_voxels() + count) as f64;
            let quad: f64 = self
                .betas
                .iter()
                .zip(&self.lambdas)
                .map(|(voxel, &lambda)| {
                    voxel
                        .iter()
                        .map(|b| b[0] * b[0] + if lambda { b[1] * b[1] } else { 0.0 })
                        .sum::<f64>()
                })
                .sum();
            self.tau2 = inverse_gamma(shape, 0.5 * quad, rng);
        }
        self.field.sample_delta(&self.graph, rng);
        self.field.sample_kappa(&self.graph, self.cfg.a_kappa, self.cfg.b_kappa, rng);
        Ok(())
    }
}

fn run_baseline_parcel(
    design: &DesignPair,
    parcellation: &Parcellation,
    cfg: &SamplerConfig,
    parcel_id: usize,
    blocks_of: &dyn Fn(usize) -> Vec<Vec<f64>>,
) -> Result<BaselineOutput> {
    let voxels = parcellation.parcel(parcel_id).to_vec();
    let coords = parcellation.parcel_coords(parcel_id);
    let q = cfg.q_override.unwrap_or_else(|| default_q(voxels.len()));
    let graph = ParcelGraph::new(&coords, cfg.neighborhood, q.min(voxels.len()))?;
    let blocks: Vec<Vec<Vec<f64>>> = voxels.iter().map(|&v| blocks_of(v)).collect();
    let two_blocks = blocks[0].len() == 2;
    let mut chain = BaselineParcel::new(design, cfg, graph, blocks);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(parcel_id as u64 + 1);

    let n = chain.n_voxels();
    let keep = cfg.n_iter - cfg.burn_in;
    let mut sum_beta = vec![[0.0f64; 2]; n];
    let mut sum_beta_imag = vec![[0.0f64; 2]; n];
    let mut lambda_trace = vec![Vec::with_capacity(keep); n];
    for iter in 0..cfg.n_iter {
        chain.sweep(&mut rng)?;
        if iter >= cfg.burn_in {
            for v in 0..n {
                sum_beta[v][0] += chain.betas[v][0][0];
                sum_beta[v][1] += chain.betas[v][0][1];
                if two_blocks {
                    sum_beta_imag[v][0] += chain.betas[v][1][0];
                    sum_beta_imag[v][1] += chain.betas[v][1][1];
                }
                lambda_trace[v].push(chain.rb_lambda[v]);
            }
        }
    }
    let keep_f = keep as f64;
    Ok(BaselineOutput {
        voxels,
        mean_beta: sum_beta
            .iter()
            .map(|b| [b[0] / keep_f, b[1] / keep_f])
            .collect(),
        mean_beta_imag: sum_beta_imag
            .iter()
            .map(|b| [b[0] / keep_f, b[1] / keep_f])
            .collect(),
        prob_lambda: lambda_trace
            .iter()
            .map(|tr| tr.iter().sum::<f64>() / keep_f)
            .collect(),
        mcse_lambda: lambda_trace
            .iter()
            .map(|tr| batch_means_mcse(tr).unwrap_or(f64::INFINITY))
            .collect(),
    })
}

fn merge_baseline(
    outputs: Vec<BaselineOutput>,
    n_voxels: usize,
    config: &SamplerConfig,
    with_imag: bool,
    runtime_seconds: f64,
) -> PosteriorSummary {
    let mut summary = PosteriorSummary {
        mean_beta: vec![[0.0; 2]; n_voxels],
        mean_gamma: None,
        mean_beta_imag: if with_imag {
            Some(vec![[0.0; 2]; n_voxels])
        } else {
            None
        },
        prob_lambda: vec![0.0; n_voxels],
        prob_omega: None,
        active_mag: vec![0; n_voxels],
        active_phase: None,
        mcse_lambda: vec![f64::INFINITY; n_voxels],
        mcse_omega: None,
        converged: vec![false; n_voxels],
        mh_acceptance: None,
        runtime_seconds,
    };
    for out in &outputs {
        for (i, &v) in out.voxels.iter().enumerate() {
            summary.mean_beta[v] = out.mean_beta[i];
            if let Some(imag) = summary.mean_beta_imag.as_mut() {
                imag[v] = out.mean_beta_imag[i];
            }
            summary.prob_lambda[v] = out.prob_lambda[i];
            summary.mcse_lambda[v] = out.mcse_lambda[i];
            summary.active_mag[v] = (out.prob_lambda[i] > config.threshold) as u8;
            summary.converged[v] = out.mcse_lambda[i] < config.mcse_target;
        }
    }
    summary
}

fn check_shapes(
    data: &ComplexImageSeries,
    design: &DesignPair,
    parcellation: &Parcellation,
    config: &SamplerConfig,
) -> Result<()> {
    config.validate()?;
    if data.n_time() != design.n_time() {
        return Err(Error::Shape("data and design time axes differ".into()));
    }
    if parcellation.assignment().len() != data.n_voxels() {
        return Err(Error::Shape("parcellation does not cover the data".into()));
    }
    Ok(())
}

/// Magnitude-only baseline: Gibbs over y_M = Xβ_M + ε per voxel.
pub fn run_mo(
    data: &ComplexImageSeries,
    design: &DesignPair,
    parcellation: &Parcellation,
    config: &SamplerConfig,
) -> Result<PosteriorSummary> {
    check_shapes(data, design, parcellation, config)?;
    let start = std::time::Instant::now();
    let magnitudes = |v: usize| -> Vec<Vec<f64>> {
        vec![data
            .real_row(v)
            .iter()
            .zip(data.imag_row(v))
            .map(|(&r, &i)| (r * r + i * i).sqrt())
            .collect()]
    };
    let outputs: Result<Vec<BaselineOutput>> = (0..parcellation.n_parcels())
        .into_par_iter()
        .map(|g| run_baseline_parcel(design, parcellation, config, g, &magnitudes))
        .collect();
    Ok(merge_baseline(
        outputs?,
        data.n_voxels(),
        config,
        false,
        start.elapsed().as_secs_f64(),
    ))
}

/// Cartesian baseline: stacked real/imaginary regressions with one shared
/// activation indicator per voxel.
pub fn run_cvri(
    data: &ComplexImageSeries,
    design: &DesignPair,
    parcellation: &Parcellation,
    config: &SamplerConfig,
) -> Result<PosteriorSummary> {
    check_shapes(data, design, parcellation, config)?;
    let start = std::time::Instant::now();
    let cartesian =
        |v: usize| -> Vec<Vec<f64>> { vec![data.real_row(v).to_vec(), data.imag_row(v).to_vec()] };
    let outputs: Result<Vec<BaselineOutput>> = (0..parcellation.n_parcels())
        .into_par_iter()
        .map(|g| run_baseline_parcel(design, parcellation, config, g, &cartesian))
        .collect();
    Ok(merge_baseline(
        outputs?,
        data.n_voxels(),
        config,
        true,
        start.elapsed().as_secs_f64(),
    ))
}

/// Slope estimates comparable across models.
#[derive(Debug, Clone)]
pub struct DerivedEstimates {
    pub beta1: Vec<f64>,
    pub gamma1: Option<Vec<f64>>,
}

/// β̂_1 and γ̂_1 per voxel. CV-R&I combines its two slopes as
/// β̂_1 = √(β̂_R1² + β̂_I1²) and γ̂_1 = arctan4(β̂_I1, β̂_R1) (0 when both slopes
/// vanish); MO has no phase estimate; CV-M&P reports its own posterior means.
pub fn derived_estimates(summary: &PosteriorSummary) -> DerivedEstimates {
    if let Some(imag) = &summary.mean_beta_imag {
        let beta1 = summary
            .mean_beta
            .iter()
            .zip(imag)
            .map(|(r, i)| (r[1] * r[1] + i[1] * i[1]).sqrt())
            .collect();
        let gamma1 = summary
            .mean_beta
            .iter()
            .zip(imag)
            .map(|(r, i)| arctan4(i[1], r[1]).unwrap_or(0.0))
            .collect();
        DerivedEstimates {
            beta1,
            gamma1: Some(gamma1),
        }
    } else {
        DerivedEstimates {
            beta1: summary.mean_beta.iter().map(|b| b[1]).collect(),
            gamma1: summary
                .mean_gamma
                .as_ref()
                .map(|g| g.iter().map(|g| g[1]).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_design;
    use crate::reference::{dense_log_cvri_lambda_ratio, dense_log_mo_lambda_ratio};
    use crate::sampler::run_chain;
    use crate::simulator::{simulate_signal, Assignment, SimConfig, TruthMaps};
    use crate::spatial::parcellate;
    use approx::assert_relative_eq;

    #[test]
    fn magnitude_elementwise() {
        let data = ComplexImageSeries::new(
            vec![3.0, 0.0],
            vec![4.0, 0.0],
            vec![2, 1],
            1,
        )
        .unwrap();
        assert_eq!(magnitude_series(&data), vec![5.0, 0.0]);
    }

    #[test]
    fn magnitude_of_noiseless_polar_signal_is_linear() {
        let design = build_design((0..10).map(|i| (i % 2) as f64).collect(), None).unwrap();
        let coef = crate::model::PolarCoefficients::new(0.5, 0.2, 0.8, 0.1).unwrap();
        let mean = crate::model::polar_mean(&coef, true, true, &design).unwrap();
        let data = ComplexImageSeries::new(
            mean[..10].to_vec(),
            mean[10..].to_vec(),
            vec![1, 1],
            10,
        )
        .unwrap();
        let mag = magnitude_series(&data);
        for (t, &m) in mag.iter().enumerate() {
            assert_relative_eq!(m, 0.5 + 0.2 * design.x()[t], epsilon = 1e-12);
        }
    }

    fn random_series(rng: &mut rand_chacha::ChaCha8Rng, t: usize) -> Vec<f64> {
        (0..t).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()
    }

    #[test]
    fn mo_lambda_ratio_matches_dense_oracle() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(808);
        for _ in 0..100 {
            let t = 4 + (rng.random::<f64>() * 5.0) as usize;
            let design = build_design(random_series(&mut rng, t), None)
                .or_else(|_| build_design((0..t).map(|i| i as f64).collect(), None))
                .unwrap();
            let y = random_series(&mut rng, t);
            let sigma2 = 0.3 + rng.random::<f64>();
            let tau2 = 0.2 + 1.8 * rng.random::<f64>();
            let y_sum: f64 = y.iter().sum();
            let xy_sum: f64 = y.iter().zip(design.x()).map(|(&a, &b)| a * b).sum();
            let fast = collapsed_lambda_log_ratio(
                t as f64,
                design.x_sum(),
                design.x_sq_sum(),
                y_sum,
                xy_sum,
                sigma2,
                tau2,
            );
            let dense = dense_log_mo_lambda_ratio(&y, sigma2, tau2, &design);
            assert!((fast - dense).abs() < 1e-8, "fast {} dense {}", fast, dense);
        }
    }

    #[test]
    fn cvri_lambda_ratio_matches_dense_oracle() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(909);
        for _ in 0..100 {
            let t = 4 + (rng.random::<f64>() * 5.0) as usize;
            let design = build_design(random_series(&mut rng, t), None)
                .or_else(|_| build_design((0..t).map(|i| i as f64).collect(), None))
                .unwrap();
            let y_r = random_series(&mut rng, t);
            let y_i = random_series(&mut rng, t);
            let sigma2 = 0.3 + rng.random::<f64>();
            let tau2 = 0.2 + 1.8 * rng.random::<f64>();
            let block = |y: &[f64]| {
                let y_sum: f64 = y.iter().sum();
                let xy_sum: f64 = y.iter().zip(design.x()).map(|(&a, &b)| a * b).sum();
                collapsed_lambda_log_ratio(
                    t as f64,
                    design.x_sum(),
                    design.x_sq_sum(),
                    y_sum,
                    xy_sum,
                    sigma2,
                    tau2,
                )
            };
            let fast = block(&y_r) + block(&y_i);
            let dense = dense_log_cvri_lambda_ratio(&y_r, &y_i, sigma2, tau2, &design);
            assert!((fast - dense).abs() < 1e-8, "fast {} dense {}", fast, dense);
        }
    }

    fn small_mag_dataset(sigma: f64) -> (ComplexImageSeries, DesignPair, TruthMaps) {
        let design = build_design((0..60).map(|i| ((i / 5) % 2) as f64).collect(), None).unwrap();
        let dims = vec![12, 12];
        let mut mag = vec![0.0; 144];
        for r in 4..9 {
            for c in 4..9 {
                mag[r * 12 + c] = 1.0;
            }
        }
        let zeros = vec![0.0; 144];
        let truth =
            TruthMaps::from_strengths(dims, &mag, &zeros, 0.1, 0.0).unwrap();
        let sim_cfg = SimConfig {
            sigma,
            seed: 17,
            ..SimConfig::default()
        };
        let data = simulate_signal(&truth, &sim_cfg, &design, Assignment::Both).unwrap();
        (data, design, truth)
    }

    #[test]
    fn baselines_are_deterministic_per_seed() {
        let (data, design, _) = small_mag_dataset(0.04909);
        let parcellation = parcellate(&[12, 12], 4).unwrap();
        let cfg = SamplerConfig {
            n_iter: 80,
            burn_in: 30,
            seed: 2,
            ..mo_config()
        };
        let a = run_mo(&data, &design, &parcellation, &cfg).unwrap();
        let b = run_mo(&data, &design, &parcellation, &cfg).unwrap();
        assert_eq!(a.prob_lambda, b.prob_lambda);
        assert_eq!(a.mean_beta, b.mean_beta);
        let cfg = SamplerConfig {
            n_iter: 80,
            burn_in: 30,
            seed: 2,
            ..cvri_config()
        };
        let a = run_cvri(&data, &design, &parcellation, &cfg).unwrap();
        let b = run_cvri(&data, &design, &parcellation, &cfg).unwrap();
        assert_eq!(a.prob_lambda, b.prob_lambda);
        assert_eq!(a.mean_beta_imag, b.mean_beta_imag);
    }

    #[test]
    fn cvri_quiet_data_declares_nothing() {
        let design = build_design((0..40).map(|i| ((i / 5) % 2) as f64).collect(), None).unwrap();
        let zeros = vec![0.0; 36];
        let truth = TruthMaps::from_strengths(vec![6, 6], &zeros, &zeros, 0.0, 0.0).unwrap();
        let sim_cfg = SimConfig {
            sigma: 0.01,
            seed: 5,
            ..SimConfig::default()
        };
        let data = simulate_signal(&truth, &sim_cfg, &design, Assignment::Both).unwrap();
        let parcellation = parcellate(&[6, 6], 1).unwrap();
        let cfg = SamplerConfig {
            n_iter: 200,
            burn_in: 50,
            seed: 1,
            ..cvri_config()
        };
        let summary = run_cvri(&data, &design, &parcellation, &cfg).unwrap();
        assert!(summary.active_mag.iter().all(|&a| a == 0));
    }

    #[test]
    fn derived_estimates_combine_cartesian_slopes() {
        let mut summary = PosteriorSummary {
            mean_beta: vec![[0.0, 3.0], [0.0, 1.0], [0.0, 0.0]],
            mean_gamma: None,
            mean_beta_imag: Some(vec![[0.0, 4.0], [0.0, 0.0], [0.0, 0.0]]),
            prob_lambda: vec![1.0; 3],
            prob_omega: None,
            active_mag: vec![1; 3],
            active_phase: None,
            mcse_lambda: vec![0.0; 3],
            mcse_omega: None,
            converged: vec![true; 3],
            mh_acceptance: None,
            runtime_seconds: 0.0,
        };
        let derived = derived_estimates(&summary);
        assert_relative_eq!(derived.beta1[0], 5.0);
        let gamma1 = derived.gamma1.unwrap();
        assert_relative_eq!(gamma1[0], (4.0f64).atan2(3.0));
        assert_eq!(gamma1[1], 0.0);
        // degenerate (0, 0) slope pair maps to 0
        assert_eq!(gamma1[2], 0.0);

        summary.mean_beta_imag = None;
        let derived = derived_estimates(&summary);
        assert_eq!(derived.beta1, vec![3.0, 1.0, 0.0]);
        assert!(derived.gamma1.is_none());
    }

    #[test]
    fn cvri_magnitude_map_overlaps_cvmp_on_phase_free_data() {
        let (data, design, truth) = small_mag_dataset(0.04909);
        let parcellation = parcellate(&[12, 12], 4).unwrap();
        let cvmp = run_chain(
            &data,
            &design,
            &parcellation,
            &SamplerConfig {
                n_iter: 400,
                burn_in: 100,
                seed: 7,
                ..SamplerConfig::default()
            },
        )
        .unwrap();
        let cvri = run_cvri(
            &data,
            &design,
            &parcellation,
            &SamplerConfig {
                n_iter: 400,
                burn_in: 100,
                seed: 7,
                ..cvri_config()
            },
        )
        .unwrap();
        let agree = cvmp
            .active_mag
            .iter()
            .zip(&cvri.active_mag)
            .filter(|(a, b)| a == b)
            .count();
        assert!(
            agree as f64 / 144.0 >= 0.9,
            "only {}/144 voxels agree",
            agree
        );
        // both should recover most of the active block
        let hits = |active: &[u8]| {
            truth
                .active_mag
                .iter()
                .zip(active)
                .filter(|(&t, &a)| t == 1 && a == 1)
                .count()
        };
        assert!(hits(&cvmp.active_mag) >= 20);
        assert!(hits(&cvri.active_mag) >= 20);
    }
}
