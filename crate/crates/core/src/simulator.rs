//! Synthetic cv-fMRI data generation: boxcar stimulus, double-gamma HRF,
//! truth maps with decaying active regions, and noisy polar signals.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{ComplexImageSeries, DesignPair};

/// Boxcar stimulus description.
#[derive(Debug, Clone, Copy)]
pub struct StimulusSpec {
    pub epochs: usize,
    pub on_len: usize,
    pub off_len: usize,
    pub active_first: bool,
}

impl Default for StimulusSpec {
    /// Five epochs of 20 on / 20 off, T = 200.
    fn default() -> Self {
        Self {
            epochs: 5,
            on_len: 20,
            off_len: 20,
            active_first: true,
        }
    }
}

pub fn make_stimulus(spec: &StimulusSpec) -> Result<Vec<f64>> {
    if spec.epochs == 0 || spec.on_len == 0 || spec.off_len == 0 {
        return Err(Error::InvalidArgument(
            "stimulus epochs and state lengths must be positive".into(),
        ));
    }
    let mut s = Vec::with_capacity(spec.epochs * (spec.on_len + spec.off_len));
    for _ in 0..spec.epochs {
        let (first, first_len, second, second_len) = if spec.active_first {
            (1.0, spec.on_len, 0.0, spec.off_len)
        } else {
            (0.0, spec.off_len, 1.0, spec.on_len)
        };
        s.extend(std::iter::repeat(first).take(first_len));
        s.extend(std::iter::repeat(second).take(second_len));
    }
    Ok(s)
}

/// Shape parameters of the two-gamma hemodynamic response difference.
#[derive(Debug, Clone, Copy)]
pub struct HrfParams {
    pub peak_delay: f64,
    pub undershoot_delay: f64,
    pub peak_dispersion: f64,
    pub undershoot_dispersion: f64,
    pub undershoot_ratio: f64,
    pub onset: f64,
}

impl Default for HrfParams {
    fn default() -> Self {
        Self {
            peak_delay: 6.0,
            undershoot_delay: 16.0,
            peak_dispersion: 1.0,
            undershoot_dispersion: 1.0,
            undershoot_ratio: 1.0 / 6.0,
            onset: 0.0,
        }
    }
}

/// Canonical double-gamma HRF amplitude at time t (seconds).
pub fn double_gamma_hrf(t: f64, params: &HrfParams) -> Result<f64> {
    if params.peak_dispersion <= 0.0 || params.undershoot_dispersion <= 0.0 {
        return Err(Error::InvalidArgument("non-positive HRF dispersion".into()));
    }
    let t = t - params.onset;
    if t <= 0.0 {
        return Ok(0.0);
    }
    let gamma_pdf = |t: f64, shape: f64, rate: f64| {
        (shape * rate.ln() + (shape - 1.0) * t.ln() - rate * t - ln_gamma(shape)).exp()
    };
    let peak = gamma_pdf(
        t,
        params.peak_delay / params.peak_dispersion,
        1.0 / params.peak_dispersion,
    );
    let undershoot = gamma_pdf(
        t,
        params.undershoot_delay / params.undershoot_dispersion,
        1.0 / params.undershoot_dispersion,
    );
    Ok(peak - params.undershoot_ratio * undershoot)
}

/// Expected BOLD response: causal convolution of the stimulus with the HRF
/// sampled at multiples of TR, truncated to the stimulus length and rescaled
/// so the maximum is one.
pub fn expected_bold(stimulus: &[f64], tr: f64, params: &HrfParams) -> Result<Vec<f64>> {
    if stimulus.is_empty() {
        return Err(Error::InvalidArgument("empty stimulus".into()));
    }
    let t_len = stimulus.len();
    let kernel: Vec<f64> = (0..t_len)
        .map(|k| double_gamma_hrf(k as f64 * tr, params))
        .collect::<Result<_>>()?;
    let mut bold = vec![0.0; t_len];
    for (t, slot) in bold.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in 0..=t {
            acc += stimulus[t - k] * kernel[k];
        }
        *slot = acc;
    }
    let max = bold.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > 0.0 {
        for v in &mut bold {
            *v /= max;
        }
    }
    Ok(bold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionShape {
    /// Circle in 2D, sphere in 3D; Euclidean distance.
    Sphere,
    /// Square in 2D, cube in 3D; Chebyshev distance.
    Cube,
}

/// One active region of the truth map.
#[derive(Debug, Clone)]
pub struct RegionSpec {
    pub center: Vec<usize>,
    pub radius: usize,
    pub shape: RegionShape,
    pub decay: f64,
}

impl RegionSpec {
    fn distance(&self, coords: &[usize]) -> f64 {
        match self.shape {
            RegionShape::Sphere => self
                .center
                .iter()
                .zip(coords)
                .map(|(&c, &p)| {
                    let d = c as f64 - p as f64;
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            RegionShape::Cube => self
                .center
                .iter()
                .zip(coords)
                .map(|(&c, &p)| (c as f64 - p as f64).abs())
                .fold(0.0, f64::max),
        }
    }
}

fn index_to_coords(mut index: usize, dims: &[usize]) -> Vec<usize> {
    // Row-major: last axis fastest.
    let mut coords = vec![0; dims.len()];
    for axis in (0..dims.len()).rev() {
        coords[axis] = index % dims[axis];
        index /= dims[axis];
    }
    coords
}

/// Strength map in [0, 1]: one at each region center, decaying linearly at
/// rate ϱ with distance, zero past the radius and outside all regions.
pub fn strength_map(dims: &[usize], regions: &[RegionSpec]) -> Result<Vec<f64>> {
    let n_voxels: usize = dims.iter().product();
    let mut strengths = vec![0.0; n_voxels];
    let mut owner: Vec<Option<usize>> = vec![None; n_voxels];
    for (r_idx, region) in regions.iter().enumerate() {
        if region.center.len() != dims.len() {
            return Err(Error::RegionOutOfBounds(format!(
                "region {} center dimensionality mismatch",
                r_idx
            )));
        }
        if !(0.0..1.0).contains(&region.decay) {
            return Err(Error::InvalidArgument(format!(
                "region {} decay {} outside [0, 1)",
                r_idx, region.decay
            )));
        }
        for (axis, (&c, &dim)) in region.center.iter().zip(dims).enumerate() {
            if c < region.radius || c + region.radius >= dim {
                return Err(Error::RegionOutOfBounds(format!(
                    "region {} exceeds axis {} (center {}, radius {}, dim {})",
                    r_idx, axis, c, region.radius, dim
                )));
            }
        }
        for v in 0..n_voxels {
            let coords = index_to_coords(v, dims);
            let d = region.distance(&coords);
            if d <= region.radius as f64 + 1e-12 {
                if let Some(other) = owner[v] {
                    return Err(Error::OverlappingRegions(format!(
                        "regions {} and {} share voxel {}",
                        other, r_idx, v
                    )));
                }
                owner[v] = Some(r_idx);
                strengths[v] = (1.0 - region.decay * d).max(0.0);
            }
        }
    }
    Ok(strengths)
}

/// Per-voxel ground truth for one synthetic dataset.
#[derive(Debug, Clone)]
pub struct TruthMaps {
    pub dims: Vec<usize>,
    pub beta1_true: Vec<f64>,
    pub gamma1_true: Vec<f64>,
    pub active_mag: Vec<u8>,
    pub active_phase: Vec<u8>,
}

impl TruthMaps {
    /// Scale separate magnitude/phase strength maps into coefficient maps.
    pub fn from_strengths(
        dims: Vec<usize>,
        mag_strength: &[f64],
        phase_strength: &[f64],
        mag_scale: f64,
        phase_scale: f64,
    ) -> Result<Self> {
        let n_voxels: usize = dims.iter().product();
        if mag_strength.len() != n_voxels || phase_strength.len() != n_voxels {
            return Err(Error::Shape("strength map length mismatch".into()));
        }
        let beta1_true: Vec<f64> = mag_strength.iter().map(|&s| s * mag_scale).collect();
        let gamma1_true: Vec<f64> = phase_strength.iter().map(|&s| s * phase_scale).collect();
        let active_mag = beta1_true.iter().map(|&b| (b != 0.0) as u8).collect();
        let active_phase = gamma1_true.iter().map(|&g| (g != 0.0) as u8).collect();
        Ok(Self {
            dims,
            beta1_true,
            gamma1_true,
            active_mag,
            active_phase,
        })
    }

    pub fn n_voxels(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Constants of the signal equation plus the strength scales.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub beta0: f64,
    pub gamma0: f64,
    pub sigma: f64,
    pub mag_scale: f64,
    pub phase_scale: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            beta0: 0.4909,
            gamma0: PI / 4.0,
            sigma: 0.04909,
            mag_scale: 0.04909,
            phase_scale: PI / 36.0,
            seed: 0,
        }
    }
}

/// Which coefficient maps carry signal in a simulated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    MagOnly,
    PhaseOnly,
    Both,
}

impl Assignment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Assignment::MagOnly => "mag-only",
            Assignment::PhaseOnly => "phase-only",
            Assignment::Both => "both",
        }
    }

    /// Truth maps with the absent coefficient zeroed out.
    pub fn apply(&self, truth: &TruthMaps) -> TruthMaps {
        let n = truth.n_voxels();
        let mut out = truth.clone();
        if *self == Assignment::MagOnly {
            out.gamma1_true = vec![0.0; n];
            out.active_phase = vec![0; n];
        }
        if *self == Assignment::PhaseOnly {
            out.beta1_true = vec![0.0; n];
            out.active_mag = vec![0; n];
        }
        out
    }
}

/// Simulate noisy polar signals: y_R = (β_0+xβ_1)cos(γ_0+uγ_1)+ε and the
/// sine analogue, iid Gaussian noise with sd σ. Deterministic under seed.
pub fn simulate_signal(
    truth: &TruthMaps,
    config: &SimConfig,
    design: &DesignPair,
    assignment: Assignment,
) -> Result<ComplexImageSeries> {
    if config.sigma <= 0.0 {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    let truth = assignment.apply(truth);
    let n_voxels = truth.n_voxels();
    let t_len = design.n_time();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut real = Vec::with_capacity(n_voxels * t_len);
    let mut imag = Vec::with_capacity(n_voxels * t_len);
    for v in 0..n_voxels {
        let beta1 = truth.beta1_true[v];
        let gamma1 = truth.gamma1_true[v];
        for t in 0..t_len {
            let rho = config.beta0 + design.x()[t] * beta1;
            let theta = config.gamma0 + design.u()[t] * gamma1;
            let noise_r: f64 = StandardNormal.sample(&mut rng);
            let noise_i: f64 = StandardNormal.sample(&mut rng);
            real.push(rho * theta.cos() + config.sigma * noise_r);
            imag.push(rho * theta.sin() + config.sigma * noise_i);
        }
    }
    ComplexImageSeries::new(real, imag, truth.dims.clone(), t_len)
}

/// Population parameters of the randomized truth maps.
#[derive(Debug, Clone)]
pub struct MapCharacteristics {
    pub dims: Vec<usize>,
    pub n_regions: usize,
    pub radius_min: usize,
    pub radius_max: usize,
    pub decay_min: f64,
    pub decay_max: f64,
    pub placement_attempts: usize,
}

impl Default for MapCharacteristics {
    fn default() -> Self {
        Self {
            dims: vec![50, 50],
            n_regions: 3,
            radius_min: 2,
            radius_max: 6,
            decay_min: 0.0,
            decay_max: 0.3,
            placement_attempts: 1000,
        }
    }
}

/// Randomized truth maps: non-overlapping regions with uniformly drawn
/// radius, shape, and decay, scaled into β_1/γ_1 maps. Map i uses the
/// derived seed `seed + i`.
pub fn random_truth_maps(
    n_maps: usize,
    chars: &MapCharacteristics,
    mag_scale: f64,
    phase_scale: f64,
    seed: u64,
) -> Result<Vec<TruthMaps>> {
    if n_maps == 0 {
        return Err(Error::InvalidArgument("n_maps must be at least one".into()));
    }
    (0..n_maps)
        .map(|i| random_truth_map(chars, mag_scale, phase_scale, seed + i as u64))
        .collect()
}

fn random_truth_map(
    chars: &MapCharacteristics,
    mag_scale: f64,
    phase_scale: f64,
    seed: u64,
) -> Result<TruthMaps> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut regions: Vec<RegionSpec> = Vec::with_capacity(chars.n_regions);
    let mut attempts = 0;
    while regions.len() < chars.n_regions {
        if attempts >= chars.placement_attempts {
            return Err(Error::RegionPlacement(chars.placement_attempts));
        }
        attempts += 1;
        let radius = rng.random_range(chars.radius_min..=chars.radius_max);
        let shape = if rng.random_bool(0.5) {
            RegionShape::Sphere
        } else {
            RegionShape::Cube
        };
        let decay = rng.random_range(chars.decay_min..=chars.decay_max);
        let center: Vec<usize> = chars
            .dims
            .iter()
            .map(|&dim| rng.random_range(radius..dim - radius))
            .collect();
        let candidate = RegionSpec {
            center,
            radius,
            shape,
            decay,
        };
        let mut trial = regions.clone();
        trial.push(candidate);
        if strength_map(&chars.dims, &trial).is_ok() {
            regions = trial;
        }
    }
    let strengths = strength_map(&chars.dims, &regions)?;
    TruthMaps::from_strengths(
        chars.dims.clone(),
        &strengths,
        &strengths,
        mag_scale,
        phase_scale,
    )
}

/// The fixed truth map of the single-simulation benchmark: two circles and a
/// square of radius five on a 50×50 panel; the first circle is
/// magnitude-active, the second phase-active, the square both.
pub fn single_simulation_truth(mag_scale: f64, phase_scale: f64) -> Result<TruthMaps> {
    let dims = vec![50, 50];
    let region1 = RegionSpec {
        center: vec![12, 12],
        radius: 5,
        shape: RegionShape::Sphere,
        decay: 0.05,
    };
    let region2 = RegionSpec {
        center: vec![12, 37],
        radius: 5,
        shape: RegionShape::Sphere,
        decay: 0.05,
    };
    let region3 = RegionSpec {
        center: vec![37, 25],
        radius: 5,
        shape: RegionShape::Cube,
        decay: 0.15,
    };
    let mag = strength_map(&dims, &[region1.clone(), region3.clone()])?;
    let phase = strength_map(&dims, &[region2, region3])?;
    TruthMaps::from_strengths(dims, &mag, &phase, mag_scale, phase_scale)
}
