//! Probit-linked spatial activation prior shared by all three samplers.
//!
//! Each parcel carries one field per indicator family. A voxel's indicator
//! is active with probability Φ(ψ + m_v'δ), realized through the latent
//! utility η_v ~ N(ψ + m_v'δ, 1) with the indicator equal to 1{η_v > 0}.
//! The spatial random effects δ live on the q-column Moran eigenbasis M with
//! GMRF prior N(0, (κ Q_s)⁻¹), Q_s = M'QM, and κ ~ Gamma(a_κ, b_κ). The
//! conditionals are the standard probit augmentation:
//!
//! - η_v | indicator, δ: N(ψ + m_v'δ, 1) truncated to the indicator's sign,
//! - δ | η, κ: N{(κQ_s + I)⁻¹ M'(η − ψ1), (κQ_s + I)⁻¹} (M is orthonormal),
//! - κ | δ: Gamma(a_κ + q/2, scale [1/b_κ + δ'Q_s δ/2]⁻¹).

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::spatial::ParcelGraph;
use crate::util::std_normal_cdf;

/// One probit field (either the magnitude or the phase side) over a parcel.
#[derive(Debug, Clone)]
pub struct ProbitField {
    pub psi: f64,
    /// Latent probit utilities; sign matches the current indicator.
    pub eta: Vec<f64>,
    pub delta: DVector<f64>,
    pub kappa: f64,
    /// When set, the probit offset is pinned at ψ + this value and the
    /// η/δ/κ updates are skipped (used by the small-instance oracle tests).
    pub frozen_eta: Option<f64>,
}

/// Standard normal draw conditioned on z ≥ lower (Robert's exponential
/// rejection in the far tail, plain rejection otherwise).
fn truncated_std_normal_above<R: Rng>(lower: f64, rng: &mut R) -> f64 {
    if lower <= 0.0 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z >= lower {
                return z;
            }
        }
    } else {
        let alpha = 0.5 * (lower + (lower * lower + 4.0).sqrt());
        loop {
            let e: f64 = rng.random::<f64>();
            let z = lower - e.ln() / alpha;
            let d = z - alpha;
            if rng.random::<f64>() <= (-0.5 * d * d).exp() {
                return z;
            }
        }
    }
}

impl ProbitField {
    pub fn new(psi: f64, n_voxels: usize, q: usize, kappa_init: f64) -> Self {
        Self {
            psi,
            eta: vec![0.0; n_voxels],
            delta: DVector::zeros(q),
            kappa: kappa_init,
            frozen_eta: None,
        }
    }

    fn offset(&self, voxel: usize, graph: &ParcelGraph) -> f64 {
        match self.frozen_eta {
            Some(frozen) => frozen,
            None => graph.eigenbasis.row(voxel).transpose().dot(&self.delta),
        }
    }

    /// Prior activation probability Φ(ψ + m_v'δ).
    pub fn prior_prob(&self, voxel: usize, graph: &ParcelGraph) -> f64 {
        std_normal_cdf(self.psi + self.offset(voxel, graph))
    }

    /// η_v | indicator, δ: unit-variance normal at ψ + m_v'δ, positive side
    /// iff active.
    pub fn sample_eta<R: Rng>(
        &mut self,
        voxel: usize,
        active: bool,
        graph: &ParcelGraph,
        rng: &mut R,
    ) {
        if self.frozen_eta.is_some() {
            return;
        }
        let mu = self.psi + self.offset(voxel, graph);
        self.eta[voxel] = if active {
            mu + truncated_std_normal_above(-mu, rng)
        } else {
            mu - truncated_std_normal_above(mu, rng)
        };
    }

    /// δ | η, κ ~ N{(κQ_s + I)⁻¹ M'(η − ψ1), (κQ_s + I)⁻¹}.
    pub fn sample_delta<R: Rng>(&mut self, graph: &ParcelGraph, rng: &mut R) {
        if self.frozen_eta.is_some() {
            return;
        }
        let q = graph.q;
        let precision = &graph.prior_precision * self.kappa + DMatrix::identity(q, q);
        let chol = Cholesky::new(precision).expect("κQ_s + I positive definite");
        let centered = DVector::from_iterator(
            self.eta.len(),
            self.eta.iter().map(|&e| e - self.psi),
        );
        let mean = chol.solve(&(graph.eigenbasis.transpose() * centered));
        let z = DVector::from_iterator(q, (0..q).map(|_| StandardNormal.sample(rng)));
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("cholesky factor invertible");
        self.delta = mean + noise;
    }

    /// κ | δ ~ Gamma(a_κ + q/2, scale [1/b_κ + δ'Q_s δ/2]⁻¹).
    pub fn sample_kappa<R: Rng>(
        &mut self,
        graph: &ParcelGraph,
        a_kappa: f64,
        b_kappa: f64,
        rng: &mut R,
    ) {
        if self.frozen_eta.is_some() {
            return;
        }
        let quad = (self.delta.transpose() * &graph.prior_precision * &self.delta)[(0, 0)];
        let shape = a_kappa + graph.q as f64 / 2.0;
        let scale = 1.0 / (1.0 / b_kappa + 0.5 * quad.max(0.0));
        let gamma = Gamma::new(shape, scale).expect("valid gamma parameters");
        self.kappa = gamma.sample(rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::Neighborhood;
    use crate::util::std_normal_quantile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid_graph(rows: usize, cols: usize, q: usize) -> ParcelGraph {
        let coords: Vec<Vec<usize>> = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| vec![r, c]))
            .collect();
        ParcelGraph::new(&coords, Neighborhood::EdgeCorner, q).unwrap()
    }

    #[test]
    fn truncated_normal_moments() {
        // E[z | z ≥ a] = φ(a)/(1−Φ(a)); check a soft and a hard truncation
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for a in [-0.5, 3.0] {
            let n = 100_000;
            let mean: f64 = (0..n)
                .map(|_| truncated_std_normal_above(a, &mut rng))
                .sum::<f64>()
                / n as f64;
            let phi = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let expected = phi / (1.0 - std_normal_cdf(a));
            assert!(
                (mean - expected).abs() < 0.01,
                "a={}: mean {} expected {}",
                a,
                mean,
                expected
            );
        }
    }

    #[test]
    fn eta_respects_indicator_sign_and_location() {
        let graph = grid_graph(4, 4, 3);
        let mut field = ProbitField::new(std_normal_quantile(0.42), 16, 3, 1000.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            field.sample_eta(5, true, &graph, &mut rng);
            assert!(field.eta[5] > 0.0);
            field.sample_eta(6, false, &graph, &mut rng);
            assert!(field.eta[6] < 0.0);
        }
    }

    #[test]
    fn field_learns_a_split_pattern() {
        // left half active, right half inactive: after burn-in the prior
        // probability should separate the halves
        let graph = grid_graph(8, 8, 4);
        let mut field = ProbitField::new(std_normal_quantile(0.42), 64, 4, 1000.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let active = |v: usize| (v % 8) < 4;
        let mut left = 0.0;
        let mut right = 0.0;
        let iters = 600;
        for it in 0..iters {
            for v in 0..64 {
                field.sample_eta(v, active(v), &graph, &mut rng);
            }
            field.sample_delta(&graph, &mut rng);
            field.sample_kappa(&graph, 0.5, 2000.0, &mut rng);
            if it >= 100 {
                left += field.prior_prob(8 * 4 + 1, &graph);
                right += field.prior_prob(8 * 4 + 6, &graph);
            }
        }
        let n = (iters - 100) as f64;
        assert!(
            left / n > right / n + 0.15,
            "no spatial separation: left {} right {}",
            left / n,
            right / n
        );
    }

    #[test]
    fn frozen_field_is_inert() {
        let graph = grid_graph(3, 3, 3);
        let mut field = ProbitField::new(0.3, 9, 3, 1000.0);
        field.frozen_eta = Some(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        field.sample_eta(0, true, &graph, &mut rng);
        field.sample_delta(&graph, &mut rng);
        field.sample_kappa(&graph, 0.5, 2000.0, &mut rng);
        assert_eq!(field.eta[0], 0.0);
        assert_eq!(field.kappa, 1000.0);
        assert!((field.prior_prob(4, &graph) - std_normal_cdf(0.5)).abs() < 1e-12);
    }
}
