//! Polar-model algebra shared by the simulator and the samplers.
//!
//! The observation for voxel v stacks real and imaginary series into a
//! 2T-vector with mean A(γ_v) X Λ_v β_v, where A stacks diag[cos(UΩγ)] over
//! diag[sin(UΩγ)]. Everything here works with the flattened column
//! a_v = [cos(UΩγ)', sin(UΩγ)']' so the mean is a Hadamard product
//! (β_0·1 + β_1·x*) ⊙ a_v rather than a dense matrix product.

use crate::error::{Error, Result};

/// Per-voxel real/imaginary time series plus grid geometry.
#[derive(Debug, Clone)]
pub struct ComplexImageSeries {
    real: Vec<f64>,
    imag: Vec<f64>,
    dims: Vec<usize>,
    n_time: usize,
}

impl ComplexImageSeries {
    /// Build from row-major V×T matrices. Checks shape agreement and finiteness.
    pub fn new(real: Vec<f64>, imag: Vec<f64>, dims: Vec<usize>, n_time: usize) -> Result<Self> {
        let n_voxels: usize = dims.iter().product();
        if n_voxels == 0 || n_time == 0 {
            return Err(Error::Shape("empty grid or time axis".into()));
        }
        if real.len() != n_voxels * n_time || imag.len() != n_voxels * n_time {
            return Err(Error::Shape(format!(
                "expected {} entries per component, got real={} imag={}",
                n_voxels * n_time,
                real.len(),
                imag.len()
            )));
        }
        for (i, value) in real.iter().chain(imag.iter()).enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    context: "image series",
                    voxel: (i % (n_voxels * n_time)) / n_time,
                });
            }
        }
        Ok(Self {
            real,
            imag,
            dims,
            n_time,
        })
    }

    pub fn n_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn real_row(&self, voxel: usize) -> &[f64] {
        &self.real[voxel * self.n_time..(voxel + 1) * self.n_time]
    }

    pub fn imag_row(&self, voxel: usize) -> &[f64] {
        &self.imag[voxel * self.n_time..(voxel + 1) * self.n_time]
    }

    /// y_v = [y_R', y_I']' for one voxel.
    pub fn stacked(&self, voxel: usize) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.n_time);
        y.extend_from_slice(self.real_row(voxel));
        y.extend_from_slice(self.imag_row(voxel));
        y
    }
}

/// Magnitude regressor x and phase regressor u; the implied designs are
/// X = [1, x] and U = [1, u].
#[derive(Debug, Clone)]
pub struct DesignPair {
    x: Vec<f64>,
    u: Vec<f64>,
}

impl DesignPair {
    pub fn n_time(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Σ x_t
    pub fn x_sum(&self) -> f64 {
        self.x.iter().sum()
    }

    /// Σ x_t²
    pub fn x_sq_sum(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum()
    }
}

/// Magnitude and phase intercept/slope for one voxel.
#[derive(Debug, Clone, Copy)]
pub struct PolarCoefficients {
    pub beta0: f64,
    pub beta1: f64,
    /// Intercept in (-π, π].
    pub gamma0: f64,
    pub gamma1: f64,
}

impl PolarCoefficients {
    pub fn new(beta0: f64, beta1: f64, gamma0: f64, gamma1: f64) -> Result<Self> {
        if ![beta0, beta1, gamma0, gamma1].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidPhaseCoefficients);
        }
        Ok(Self {
            beta0,
            beta1,
            gamma0: wrap_angle(gamma0),
            gamma1,
        })
    }
}

/// Wrap an angle to (-π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = theta % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Four-quadrant arctangent with codomain (-π, π].
pub fn arctan4(y: f64, x: f64) -> Result<f64> {
    if y == 0.0 && x == 0.0 {
        return Err(Error::UndefinedAngle);
    }
    let theta = y.atan2(x);
    // atan2 returns [-π, π]; fold the -π branch onto π.
    if theta == -std::f64::consts::PI {
        Ok(std::f64::consts::PI)
    } else {
        Ok(theta)
    }
}

/// a_v = [cos(UΩγ)', sin(UΩγ)']', written into `out` (length 2T).
/// With ω = 0 the slope γ_1 is masked before evaluation.
pub fn phase_basis_into(
    gamma: [f64; 2],
    omega: bool,
    design: &DesignPair,
    out: &mut [f64],
) -> Result<()> {
    if !gamma[0].is_finite() || !gamma[1].is_finite() {
        return Err(Error::InvalidPhaseCoefficients);
    }
    let t = design.n_time();
    if out.len() != 2 * t {
        return Err(Error::Shape(format!(
            "phase basis output length {} != 2T = {}",
            out.len(),
            2 * t
        )));
    }
    let slope = if omega { gamma[1] } else { 0.0 };
    let (cos_part, sin_part) = out.split_at_mut(t);
    if slope == 0.0 {
        let (sin, cos) = gamma[0].sin_cos();
        cos_part.fill(cos);
        sin_part.fill(sin);
        return Ok(());
    }
    for ((c, s), &u_t) in cos_part.iter_mut().zip(sin_part.iter_mut()).zip(design.u()) {
        let (sin, cos) = (gamma[0] + u_t * slope).sin_cos();
        *c = cos;
        *s = sin;
    }
    Ok(())
}

/// Allocating variant of [`phase_basis_into`].
pub fn phase_basis(gamma: [f64; 2], omega: bool, design: &DesignPair) -> Result<Vec<f64>> {
    let mut out = vec![0.0; 2 * design.n_time()];
    phase_basis_into(gamma, omega, design, &mut out)?;
    Ok(out)
}

/// Noiseless stacked mean A X Λ β via the Hadamard fast path
/// (β_0·1 + β_1·x*) ⊙ a_v, written into `out` (length 2T).
pub fn polar_mean_into(
    coef: &PolarCoefficients,
    lambda: bool,
    omega: bool,
    design: &DesignPair,
    out: &mut [f64],
) -> Result<()> {
    phase_basis_into([coef.gamma0, coef.gamma1], omega, design, out)?;
    scale_by_magnitude(coef.beta0, if lambda { coef.beta1 } else { 0.0 }, design, out);
    Ok(())
}

/// Allocating variant of [`polar_mean_into`].
pub fn polar_mean(
    coef: &PolarCoefficients,
    lambda: bool,
    omega: bool,
    design: &DesignPair,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; 2 * design.n_time()];
    polar_mean_into(coef, lambda, omega, design, &mut out)?;
    Ok(out)
}

/// In-place basis ↦ (β_0·1 + β_1·x*) ⊙ basis.
pub(crate) fn scale_by_magnitude(beta0: f64, beta1: f64, design: &DesignPair, basis: &mut [f64]) {
    let t = design.n_time();
    let (cos_part, sin_part) = basis.split_at_mut(t);
    for ((c, s), &x_t) in cos_part.iter_mut().zip(sin_part.iter_mut()).zip(design.x()) {
        let rho = beta0 + beta1 * x_t;
        *c *= rho;
        *s *= rho;
    }
}

/// Build X = [1, x], U = [1, u] from the expected BOLD response. With no
/// explicit u the phase regressor defaults to x.
pub fn build_design(x: Vec<f64>, u: Option<Vec<f64>>) -> Result<DesignPair> {
    if x.len() < 2 {
        return Err(Error::Shape("design needs at least two time points".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape("non-finite design entry".into()));
    }
    let constant = x.iter().all(|&v| v == x[0]);
    if constant {
        return Err(Error::RankDeficientDesign);
    }
    let u = match u {
        Some(u) => {
            if u.len() != x.len() {
                return Err(Error::Shape("u length differs from x".into()));
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::Shape("non-finite design entry".into()));
            }
            u
        }
        None => x.clone(),
    };
    Ok(DesignPair { x, u })
}
