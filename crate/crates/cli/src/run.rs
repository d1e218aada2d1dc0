//! Command implementations: simulate, fit, metrics, and the table
//! reproductions, shared between the binary and the integration tests.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cvmp::{
    aggregate, build_design, combined_active, combined_scores, cvri_config, derived_estimates,
    expected_bold, make_stimulus, mo_config, parcellate, random_truth_maps, report, run_chain,
    run_cvri, run_mo, simulate_signal, single_simulation_truth, slope, union_truth, Assignment,
    DesignPair, Error, HrfParams, MapCharacteristics, MetricSummary, MetricsReport,
    PosteriorSummary, SamplerConfig, SimConfig, StimulusSpec, TruthMaps,
};

use crate::io::{self, Dataset};
use crate::maps::{emit_map_image, Palette};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Cvmp,
    Mo,
    Cvri,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Mo, Model::Cvri, Model::Cvmp];

    pub fn as_str(&self) -> &'static str {
        match self {
            Model::Cvmp => "cvmp",
            Model::Mo => "mo",
            Model::Cvri => "cvri",
        }
    }

    pub fn default_config(&self) -> SamplerConfig {
        match self {
            Model::Cvmp => SamplerConfig::default(),
            Model::Mo => mo_config(),
            Model::Cvri => cvri_config(),
        }
    }
}

impl std::str::FromStr for Model {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cvmp" => Ok(Model::Cvmp),
            "mo" => Ok(Model::Mo),
            "cvri" => Ok(Model::Cvri),
            other => bail!("unknown model {:?} (expected cvmp, mo, or cvri)", other),
        }
    }
}

/// The §3.1.1 design: five 20-on/20-off epochs convolved with the
/// double-gamma HRF at TR 1.
pub fn paper_design() -> Result<DesignPair> {
    let stimulus = make_stimulus(&StimulusSpec::default())?;
    let bold = expected_bold(&stimulus, 1.0, &HrfParams::default())?;
    Ok(build_design(bold, None)?)
}

pub fn paper_scales() -> (f64, f64) {
    (0.04909, PI / 36.0)
}

/// Write one simulated dataset directory.
pub fn simulate_to_dir(
    dir: &Path,
    truth: &TruthMaps,
    assignment: Assignment,
    seed: u64,
) -> Result<()> {
    let design = paper_design()?;
    let sim_cfg = SimConfig {
        seed,
        ..SimConfig::default()
    };
    let truth = assignment.apply(truth);
    let data = simulate_signal(&truth, &sim_cfg, &design, assignment)?;
    io::write_dataset(
        dir,
        &data,
        &design,
        Some(&truth),
        &[
            ("seed", seed.to_string()),
            ("assignment", assignment.as_str().to_string()),
            ("beta0", io::format_float(sim_cfg.beta0)),
            ("gamma0", io::format_float(sim_cfg.gamma0)),
            ("sigma", io::format_float(sim_cfg.sigma)),
            ("mag_scale", io::format_float(sim_cfg.mag_scale)),
            ("phase_scale", io::format_float(sim_cfg.phase_scale)),
        ],
    )
}

pub enum SimulateMode {
    /// The fixed three-region 50×50 map of §3.1.2.
    Single,
    /// `n` random Table-2 maps, one directory per map.
    Random { n: usize },
}

pub fn cmd_simulate(
    out: &Path,
    mode: SimulateMode,
    assignments: &[Assignment],
    seed: u64,
) -> Result<()> {
    let (mag_scale, phase_scale) = paper_scales();
    match mode {
        SimulateMode::Single => {
            let truth = single_simulation_truth(mag_scale, phase_scale)?;
            for &assignment in assignments {
                let dir = if assignments.len() == 1 {
                    out.to_path_buf()
                } else {
                    out.join(format!("single-{}", assignment.as_str()))
                };
                simulate_to_dir(&dir, &truth, assignment, seed)?;
            }
        }
        SimulateMode::Random { n } => {
            let maps = random_truth_maps(n, &MapCharacteristics::default(), mag_scale, phase_scale, seed)?;
            for (i, truth) in maps.iter().enumerate() {
                for &assignment in assignments {
                    let dir = out.join(format!("sim{:03}-{}", i, assignment.as_str()));
                    simulate_to_dir(&dir, truth, assignment, seed + 1000 + i as u64)?;
                }
            }
        }
    }
    Ok(())
}

/// Run one model on one dataset.
pub fn fit(
    dataset: &Dataset,
    model: Model,
    parcels: usize,
    cfg: &SamplerConfig,
) -> Result<PosteriorSummary> {
    let parcellation = parcellate(&dataset.dims, parcels)?;
    let summary = match model {
        Model::Cvmp => run_chain(&dataset.data, &dataset.design, &parcellation, cfg)?,
        Model::Mo => run_mo(&dataset.data, &dataset.design, &parcellation, cfg)?,
        Model::Cvri => run_cvri(&dataset.data, &dataset.design, &parcellation, cfg)?,
    };
    Ok(summary)
}

pub fn write_fit_outputs(
    dir: &Path,
    model: Model,
    dims: &[usize],
    summary: &PosteriorSummary,
    threshold: f64,
) -> Result<()> {
    io::write_results(dir, model.as_str(), dims, summary, threshold)?;
    let active: Vec<f64> = summary.active_mag.iter().map(|&a| a as f64).collect();
    emit_map_image(&active, dims, Palette::Binary, &dir.join("active_mag"))?;
    emit_map_image(&summary.prob_lambda, dims, Palette::Diverging, &dir.join("prob_lambda"))?;
    let derived = derived_estimates(summary);
    emit_map_image(&derived.beta1, dims, Palette::Diverging, &dir.join("beta1"))?;
    if let Some(active_phase) = &summary.active_phase {
        let active: Vec<f64> = active_phase.iter().map(|&a| a as f64).collect();
        emit_map_image(&active, dims, Palette::Binary, &dir.join("active_phase"))?;
    }
    if let Some(prob_omega) = &summary.prob_omega {
        emit_map_image(prob_omega, dims, Palette::Diverging, &dir.join("prob_omega"))?;
    }
    if let Some(gamma1) = &derived.gamma1 {
        emit_map_image(gamma1, dims, Palette::Diverging, &dir.join("gamma1"))?;
    }
    Ok(())
}

fn optional_slope(truth: &[f64], estimates: &[f64]) -> Result<Option<f64>> {
    match slope(truth, estimates) {
        Ok(s) => Ok(Some(s)),
        Err(Error::ZeroTruthVariance) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Score one fit against the dataset's ground truth: combined activation
/// call (max of the two probabilities, union truth) plus coefficient slopes.
pub fn compute_report(truth: &TruthMaps, summary: &PosteriorSummary) -> Result<MetricsReport> {
    let union = union_truth(&truth.active_mag, &truth.active_phase);
    let predicted = combined_active(summary);
    let scores = combined_scores(summary);
    let derived = derived_estimates(summary);
    let beta1_slope = optional_slope(&truth.beta1_true, &derived.beta1)?;
    let gamma1_slope = match &derived.gamma1 {
        Some(gamma1) => optional_slope(&truth.gamma1_true, gamma1)?,
        None => None,
    };
    Ok(report(
        &union,
        &predicted,
        &scores,
        beta1_slope,
        gamma1_slope,
        summary.runtime_seconds,
    )?)
}

const REPORT_HEADER: &str =
    "model,accuracy,precision,recall,f1,auc,beta1_slope,gamma1_slope,degenerate,time_s";

fn report_row(label: &str, r: &MetricsReport) -> String {
    let opt = |v: Option<f64>| v.map(io::format_float).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        label,
        io::format_float(r.accuracy),
        io::format_float(r.precision),
        io::format_float(r.recall),
        io::format_float(r.f1),
        io::format_float(r.auc),
        opt(r.beta1_slope),
        opt(r.gamma1_slope),
        r.degenerate,
        io::format_float(r.runtime_seconds),
    )
}

pub fn write_report_csv(path: &Path, rows: &[(String, MetricsReport)]) -> Result<()> {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for (label, r) in rows {
        out.push_str(&report_row(label, r));
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Score stored results against a dataset directory's truth maps.
pub fn cmd_metrics(results_dir: &Path, data_dir: &Path, out: &Path) -> Result<MetricsReport> {
    let dataset = io::read_dataset(data_dir)?;
    let truth = dataset
        .truth
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("dataset has no truth maps"))?;
    let stored = io::read_results(results_dir)?;
    if stored.summary.prob_lambda.len() != dataset.data.n_voxels() {
        bail!("results and dataset voxel counts differ");
    }
    let r = compute_report(truth, &stored.summary)?;
    write_report_csv(out, &[(stored.model.clone(), r)])?;
    Ok(r)
}

/// Table 1 reproduction: single simulation, three models, paper defaults.
pub fn repro_table1(out: &Path, seed: u64, cfg_base: Option<SamplerConfig>) -> Result<Vec<(String, MetricsReport)>> {
    fs::create_dir_all(out)?;
    let (mag_scale, phase_scale) = paper_scales();
    let truth = single_simulation_truth(mag_scale, phase_scale)?;
    let dataset_dir = out.join("dataset");
    simulate_to_dir(&dataset_dir, &truth, Assignment::Both, seed)?;
    let dataset = io::read_dataset(&dataset_dir)?;
    let truth = dataset.truth.as_ref().unwrap();

    let mut rows = Vec::new();
    for model in Model::ALL {
        let mut cfg = model.default_config();
        if let Some(base) = &cfg_base {
            cfg.n_iter = base.n_iter;
            cfg.burn_in = base.burn_in;
        }
        cfg.seed = seed;
        let summary = fit(&dataset, model, 16, &cfg)?;
        write_fit_outputs(
            &out.join(format!("fit_{}", model.as_str())),
            model,
            &dataset.dims,
            &summary,
            cfg.threshold,
        )?;
        rows.push((model.as_str().to_string(), compute_report(truth, &summary)?));
    }
    write_report_csv(&out.join("table1.csv"), &rows)?;
    Ok(rows)
}

/// Per-(assignment, model) aggregates of the scaled Table 3 experiment.
pub struct Table3Cell {
    pub assignment: Assignment,
    pub model: Model,
    pub accuracy: MetricSummary,
    pub auc: MetricSummary,
    pub recall: MetricSummary,
    pub beta1_slope: Option<MetricSummary>,
    pub gamma1_slope: Option<MetricSummary>,
    pub reports: Vec<MetricsReport>,
}

fn summary_cell(s: &MetricSummary) -> String {
    format!(
        "{:.4} ({:.4}, {:.4}, {:.4})",
        s.mean, s.min, s.max, s.sd
    )
}

/// Scaled Table 3: `n_maps` random truth maps per assignment, three models.
pub fn repro_table3_scaled(
    out: &Path,
    seed: u64,
    n_maps: usize,
    cfg_base: Option<SamplerConfig>,
) -> Result<Vec<Table3Cell>> {
    fs::create_dir_all(out)?;
    let (mag_scale, phase_scale) = paper_scales();
    let maps = random_truth_maps(n_maps, &MapCharacteristics::default(), mag_scale, phase_scale, seed)?;
    let design = paper_design()?;
    let parcellation = parcellate(&maps[0].dims, 16)?;

    let mut cells = Vec::new();
    for assignment in [Assignment::MagOnly, Assignment::PhaseOnly, Assignment::Both] {
        let mut per_model: Vec<Vec<MetricsReport>> = vec![Vec::new(); Model::ALL.len()];
        for (i, truth) in maps.iter().enumerate() {
            let truth = assignment.apply(truth);
            let sim_cfg = SimConfig {
                seed: seed + 1000 + i as u64,
                ..SimConfig::default()
            };
            let data = simulate_signal(&truth, &sim_cfg, &design, assignment)?;
            let dataset = Dataset {
                dir: out.to_path_buf(),
                dims: truth.dims.clone(),
                data,
                design: design.clone(),
                truth: Some(truth.clone()),
                manifest: Default::default(),
            };
            for (m, model) in Model::ALL.iter().enumerate() {
                let mut cfg = model.default_config();
                if let Some(base) = &cfg_base {
                    cfg.n_iter = base.n_iter;
                    cfg.burn_in = base.burn_in;
                }
                cfg.seed = seed + i as u64;
                let summary = match model {
                    Model::Cvmp => run_chain(&dataset.data, &dataset.design, &parcellation, &cfg)?,
                    Model::Mo => run_mo(&dataset.data, &dataset.design, &parcellation, &cfg)?,
                    Model::Cvri => run_cvri(&dataset.data, &dataset.design, &parcellation, &cfg)?,
                };
                per_model[m].push(compute_report(&truth, &summary)?);
            }
        }
        for (m, model) in Model::ALL.iter().enumerate() {
            let agg = aggregate(&per_model[m])?;
            cells.push(Table3Cell {
                assignment,
                model: *model,
                accuracy: agg.accuracy,
                auc: agg.auc,
                recall: agg.recall,
                beta1_slope: agg.beta1_slope,
                gamma1_slope: agg.gamma1_slope,
                reports: per_model[m].clone(),
            });
        }
    }

    let mut table = String::from("data_type,model,accuracy,recall,auc,beta1_slope,gamma1_slope\n");
    for cell in &cells {
        let opt = |s: &Option<MetricSummary>| s.as_ref().map(summary_cell).unwrap_or_default();
        writeln!(
            table,
            "{},{},\"{}\",\"{}\",\"{}\",\"{}\",\"{}\"",
            cell.assignment.as_str(),
            cell.model.as_str(),
            summary_cell(&cell.accuracy),
            summary_cell(&cell.recall),
            summary_cell(&cell.auc),
            opt(&cell.beta1_slope),
            opt(&cell.gamma1_slope),
        )
        .unwrap();
    }
    fs::write(out.join("table3_scaled.csv"), table)?;
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn model_names_round_trip() {
        for model in Model::ALL {
            assert_eq!(model.as_str().parse::<Model>().unwrap(), model);
        }
        assert!("bogus".parse::<Model>().is_err());
    }

    #[test]
    fn paper_design_covers_five_epochs() {
        let design = paper_design().unwrap();
        assert_eq!(design.n_time(), 200);
        // x is the normalized expected BOLD, u defaults to x
        let max = design.x().iter().cloned().fold(f64::MIN, f64::max);
        assert!((max - 1.0).abs() < 1e-12);
        assert_eq!(design.x(), design.u());
    }

    #[test]
    fn simulation_directories_are_deterministic() {
        let dir = tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        for d in [&a, &b] {
            cmd_simulate(d, SimulateMode::Single, &[Assignment::Both], 7).unwrap();
        }
        for name in ["real.csv", "imag.csv", "design.csv", "manifest.txt"] {
            assert_eq!(
                fs::read(a.join(name)).unwrap(),
                fs::read(b.join(name)).unwrap(),
                "{} differs",
                name
            );
        }
    }

    #[test]
    fn random_mode_writes_one_directory_per_map_and_assignment() {
        let dir = tempdir().unwrap();
        cmd_simulate(
            dir.path(),
            SimulateMode::Random { n: 2 },
            &[Assignment::MagOnly, Assignment::PhaseOnly],
            3,
        )
        .unwrap();
        for name in [
            "sim000-mag-only",
            "sim000-phase-only",
            "sim001-mag-only",
            "sim001-phase-only",
        ] {
            let d = dir.path().join(name);
            assert!(d.join("manifest.txt").exists(), "{} missing", name);
            let dataset = io::read_dataset(&d).unwrap();
            assert_eq!(dataset.dims, vec![50, 50]);
            assert!(dataset.truth.is_some());
        }
    }

    #[test]
    fn perfect_summary_scores_perfectly() {
        let truth = single_simulation_truth(0.05, PI / 36.0).unwrap();
        let n = truth.beta1_true.len();
        let summary = PosteriorSummary {
            mean_beta: truth.beta1_true.iter().map(|&b| [0.5, b]).collect(),
            mean_gamma: Some(truth.gamma1_true.iter().map(|&g| [0.7, g]).collect()),
            mean_beta_imag: None,
            prob_lambda: truth.active_mag.iter().map(|&a| a as f64).collect(),
            prob_omega: Some(truth.active_phase.iter().map(|&a| a as f64).collect()),
            active_mag: truth.active_mag.clone(),
            active_phase: Some(truth.active_phase.clone()),
            mcse_lambda: vec![0.0; n],
            mcse_omega: Some(vec![0.0; n]),
            converged: vec![true; n],
            mh_acceptance: Some(0.35),
            runtime_seconds: 1.0,
        };
        let r = compute_report(&truth, &summary).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.auc, 1.0);
        assert!((r.beta1_slope.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.gamma1_slope.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_csv_layout_is_stable() {
        let dir = tempdir().unwrap();
        let truth = single_simulation_truth(0.05, PI / 36.0).unwrap();
        let n = truth.beta1_true.len();
        let summary = PosteriorSummary {
            mean_beta: vec![[0.5, 0.0]; n],
            mean_gamma: None,
            mean_beta_imag: None,
            prob_lambda: vec![0.25; n],
            prob_omega: None,
            active_mag: vec![0; n],
            active_phase: None,
            mcse_lambda: vec![0.01; n],
            mcse_omega: None,
            converged: vec![true; n],
            mh_acceptance: None,
            runtime_seconds: 2.0,
        };
        let r = compute_report(&truth, &summary).unwrap();
        let path = dir.path().join("report.csv");
        write_report_csv(&path, &[("mo".to_string(), r)]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), REPORT_HEADER);
        let row = lines.next().unwrap();
        assert!(row.starts_with("mo,"));
        assert_eq!(row.split(',').count(), 10);
        // no gamma estimates: both slope fields are empty
        assert!(row.contains(",,"));
    }
}
