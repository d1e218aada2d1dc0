//! Dataset and result file formats.
//!
//! Matrices are plain decimal CSV with no header; floats are written with
//! Rust's shortest round-trip formatting so write → read → write is
//! byte-identical. The dataset manifest is key=value text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cvmp::{build_design, ComplexImageSeries, DesignPair, PosteriorSummary, TruthMaps};

pub const MANIFEST_VERSION: &str = "1";

pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{}", v)
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn parse_float(field: &str) -> Result<f64> {
    match field {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => field
            .parse::<f64>()
            .with_context(|| format!("bad numeric field {:?}", field)),
    }
}

/// Write a row-major matrix as CSV.
pub fn write_matrix(path: &Path, values: &[f64], n_cols: usize) -> Result<()> {
    if n_cols == 0 || values.len() % n_cols != 0 {
        bail!("matrix shape {}x{} invalid", values.len(), n_cols);
    }
    let mut out = String::with_capacity(values.len() * 8);
    for row in values.chunks(n_cols) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format_float(*v));
        }
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Read a CSV matrix; all rows must have equal width.
pub fn read_matrix(path: &Path) -> Result<(Vec<f64>, usize)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut values = Vec::new();
    let mut n_cols = 0;
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(parse_float)
            .collect::<Result<_>>()
            .with_context(|| format!("{} line {}", path.display(), lineno + 1))?;
        if n_cols == 0 {
            n_cols = row.len();
        } else if row.len() != n_cols {
            bail!("{} line {}: ragged row", path.display(), lineno + 1);
        }
        values.extend(row);
    }
    if values.is_empty() {
        bail!("{} is empty", path.display());
    }
    Ok((values, n_cols))
}

pub fn write_indicator_matrix(path: &Path, values: &[u8], n_cols: usize) -> Result<()> {
    let floats: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    write_matrix(path, &floats, n_cols)
}

pub fn write_manifest(path: &Path, entries: &BTreeMap<String, String>) -> Result<()> {
    let mut out = String::new();
    for (k, v) in entries {
        writeln!(out, "{}={}", k, v).unwrap();
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn read_manifest(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut entries = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{} line {}: expected key=value", path.display(), lineno + 1))?;
        entries.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(entries)
}

/// One simulated dataset on disk.
pub struct Dataset {
    pub dir: PathBuf,
    pub dims: Vec<usize>,
    pub data: ComplexImageSeries,
    pub design: DesignPair,
    pub truth: Option<TruthMaps>,
    pub manifest: BTreeMap<String, String>,
}

fn dims_string(dims: &[usize]) -> String {
    dims.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|d| d.parse::<usize>().with_context(|| format!("bad dims {:?}", s)))
        .collect()
}

/// Map CSV layout: first axis as rows, remaining axes flattened as columns.
pub fn map_cols(dims: &[usize]) -> usize {
    dims.iter().skip(1).product::<usize>().max(1)
}

pub fn write_dataset(
    dir: &Path,
    data: &ComplexImageSeries,
    design: &DesignPair,
    truth: Option<&TruthMaps>,
    extra: &[(&str, String)],
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let v = data.n_voxels();
    let t = data.n_time();
    let mut real = Vec::with_capacity(v * t);
    let mut imag = Vec::with_capacity(v * t);
    for voxel in 0..v {
        real.extend_from_slice(data.real_row(voxel));
        imag.extend_from_slice(data.imag_row(voxel));
    }
    write_matrix(&dir.join("real.csv"), &real, t)?;
    write_matrix(&dir.join("imag.csv"), &imag, t)?;

    let mut design_text = String::from("t,x,u\n");
    for (i, (&x, &u)) in design.x().iter().zip(design.u()).enumerate() {
        writeln!(design_text, "{},{},{}", i, format_float(x), format_float(u)).unwrap();
    }
    fs::write(dir.join("design.csv"), design_text)?;

    let mut manifest: BTreeMap<String, String> = BTreeMap::new();
    manifest.insert("format_version".into(), MANIFEST_VERSION.into());
    manifest.insert("dims".into(), dims_string(data.dims()));
    manifest.insert("t".into(), t.to_string());
    manifest.insert("real".into(), "real.csv".into());
    manifest.insert("imag".into(), "imag.csv".into());
    manifest.insert("design".into(), "design.csv".into());
    if let Some(truth) = truth {
        let cols = map_cols(data.dims());
        write_matrix(&dir.join("truth_beta1.csv"), &truth.beta1_true, cols)?;
        write_matrix(&dir.join("truth_gamma1.csv"), &truth.gamma1_true, cols)?;
        manifest.insert("truth_beta1".into(), "truth_beta1.csv".into());
        manifest.insert("truth_gamma1".into(), "truth_gamma1.csv".into());
    }
    for (k, v) in extra {
        manifest.insert((*k).into(), v.clone());
    }
    write_manifest(&dir.join("manifest.txt"), &manifest)
}

/// Load and shape-check a dataset directory; every inconsistency is caught
/// before sampling starts.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(&dir.join("manifest.txt"))?;
    if manifest.get("format_version").map(String::as_str) != Some(MANIFEST_VERSION) {
        bail!("unsupported or missing manifest format_version");
    }
    let dims = parse_dims(
        manifest
            .get("dims")
            .ok_or_else(|| anyhow!("manifest missing dims"))?,
    )?;
    let t: usize = manifest
        .get("t")
        .ok_or_else(|| anyhow!("manifest missing t"))?
        .parse()
        .context("manifest t")?;
    let n_voxels: usize = dims.iter().product();

    let file = |key: &str| -> Result<PathBuf> {
        let name = manifest
            .get(key)
            .ok_or_else(|| anyhow!("manifest missing {}", key))?;
        let path = dir.join(name);
        if !path.exists() {
            bail!("manifest references missing file {}", path.display());
        }
        Ok(path)
    };

    let (real, real_cols) = read_matrix(&file("real")?)?;
    let (imag, imag_cols) = read_matrix(&file("imag")?)?;
    if real_cols != t || imag_cols != t || real.len() != n_voxels * t || imag.len() != n_voxels * t
    {
        bail!(
            "data shape mismatch: manifest says {}x{}, files are {}x{} and {}x{}",
            n_voxels,
            t,
            real.len() / real_cols.max(1),
            real_cols,
            imag.len() / imag_cols.max(1),
            imag_cols
        );
    }

    let design_text = fs::read_to_string(file("design")?)?;
    let mut lines = design_text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "t,x,u" {
        bail!("design.csv must start with header t,x,u");
    }
    let mut x = Vec::with_capacity(t);
    let mut u = Vec::with_capacity(t);
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            bail!("design.csv rows need 3 fields");
        }
        x.push(parse_float(fields[1])?);
        u.push(parse_float(fields[2])?);
    }
    if x.len() != t {
        bail!("design.csv has {} rows, manifest says t={}", x.len(), t);
    }
    let design = build_design(x, Some(u))?;

    let truth = if manifest.contains_key("truth_beta1") {
        let (beta1, _) = read_matrix(&file("truth_beta1")?)?;
        let (gamma1, _) = read_matrix(&file("truth_gamma1")?)?;
        if beta1.len() != n_voxels || gamma1.len() != n_voxels {
            bail!("truth map length does not match dims");
        }
        // scale 1: the stored values already carry their physical units
        let strengths_b: Vec<f64> = beta1.clone();
        let strengths_g: Vec<f64> = gamma1.clone();
        Some(TruthMaps::from_strengths(
            dims.clone(),
            &strengths_b,
            &strengths_g,
            1.0,
            1.0,
        )?)
    } else {
        None
    };

    let data = ComplexImageSeries::new(real, imag, dims.clone(), t)?;
    Ok(Dataset {
        dir: dir.to_path_buf(),
        dims,
        data,
        design,
        truth,
        manifest,
    })
}

/// Fit results on disk, as much of [`PosteriorSummary`] as the model filled.
pub struct StoredResults {
    pub model: String,
    pub summary: PosteriorSummary,
}

pub fn write_results(
    dir: &Path,
    model: &str,
    dims: &[usize],
    summary: &PosteriorSummary,
    threshold: f64,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cols = map_cols(dims);
    write_matrix(&dir.join("prob_lambda.csv"), &summary.prob_lambda, cols)?;
    write_indicator_matrix(&dir.join("active_mag.csv"), &summary.active_mag, cols)?;
    if let Some(prob_omega) = &summary.prob_omega {
        write_matrix(&dir.join("prob_omega.csv"), prob_omega, cols)?;
    }
    if let Some(active_phase) = &summary.active_phase {
        write_indicator_matrix(&dir.join("active_phase.csv"), active_phase, cols)?;
    }
    let flat_beta: Vec<f64> = summary.mean_beta.iter().flatten().copied().collect();
    match &summary.mean_beta_imag {
        Some(imag) => {
            let rows: Vec<f64> = summary
                .mean_beta
                .iter()
                .zip(imag)
                .flat_map(|(r, i)| [r[0], r[1], i[0], i[1]])
                .collect();
            write_matrix(&dir.join("mean_beta.csv"), &rows, 4)?;
        }
        None => write_matrix(&dir.join("mean_beta.csv"), &flat_beta, 2)?,
    }
    if let Some(mean_gamma) = &summary.mean_gamma {
        let flat: Vec<f64> = mean_gamma.iter().flatten().copied().collect();
        write_matrix(&dir.join("mean_gamma.csv"), &flat, 2)?;
    }
    match &summary.mcse_omega {
        Some(mcse_omega) => {
            let rows: Vec<f64> = summary
                .mcse_lambda
                .iter()
                .zip(mcse_omega)
                .flat_map(|(&l, &o)| [l, o])
                .collect();
            write_matrix(&dir.join("mcse.csv"), &rows, 2)?;
        }
        None => write_matrix(&dir.join("mcse.csv"), &summary.mcse_lambda, 1)?,
    }

    let converged = summary.converged_fraction();
    let mut text = String::new();
    writeln!(text, "model={}", model).unwrap();
    writeln!(text, "dims={}", dims_string(dims)).unwrap();
    writeln!(text, "threshold={}", format_float(threshold)).unwrap();
    writeln!(
        text,
        "runtime_seconds={}",
        format_float(summary.runtime_seconds)
    )
    .unwrap();
    writeln!(text, "converged_fraction={}", format_float(converged)).unwrap();
    if let Some(acc) = summary.mh_acceptance {
        writeln!(text, "mh_acceptance={}", format_float(acc)).unwrap();
    }
    if converged < 1.0 {
        writeln!(
            text,
            "warning=unconverged voxels present ({:.1}% converged)",
            100.0 * converged
        )
        .unwrap();
    }
    fs::write(dir.join("summary.txt"), text)?;
    Ok(())
}

pub fn read_results(dir: &Path) -> Result<StoredResults> {
    let summary_map = read_manifest(&dir.join("summary.txt"))?;
    let model = summary_map
        .get("model")
        .ok_or_else(|| anyhow!("summary.txt missing model"))?
        .clone();
    let runtime_seconds = summary_map
        .get("runtime_seconds")
        .map(|s| parse_float(s))
        .transpose()?
        .unwrap_or(0.0);

    let (prob_lambda, _) = read_matrix(&dir.join("prob_lambda.csv"))?;
    let (active_mag_f, _) = read_matrix(&dir.join("active_mag.csv"))?;
    let active_mag: Vec<u8> = active_mag_f.iter().map(|&v| (v != 0.0) as u8).collect();
    let read_opt = |name: &str| -> Result<Option<Vec<f64>>> {
        let path = dir.join(name);
        if path.exists() {
            Ok(Some(read_matrix(&path)?.0))
        } else {
            Ok(None)
        }
    };
    let prob_omega = read_opt("prob_omega.csv")?;
    let active_phase =
        read_opt("active_phase.csv")?.map(|v| v.iter().map(|&x| (x != 0.0) as u8).collect());

    let (beta_flat, beta_cols) = read_matrix(&dir.join("mean_beta.csv"))?;
    let (mean_beta, mean_beta_imag) = match beta_cols {
        2 => (
            beta_flat.chunks(2).map(|c| [c[0], c[1]]).collect(),
            None,
        ),
        4 => (
            beta_flat.chunks(4).map(|c| [c[0], c[1]]).collect(),
            Some(beta_flat.chunks(4).map(|c| [c[2], c[3]]).collect()),
        ),
        other => bail!("mean_beta.csv has {} columns", other),
    };
    let mean_gamma = read_opt("mean_gamma.csv")?
        .map(|flat| flat.chunks(2).map(|c| [c[0], c[1]]).collect());

    let (mcse_flat, mcse_cols) = read_matrix(&dir.join("mcse.csv"))?;
    let (mcse_lambda, mcse_omega) = if mcse_cols == 2 {
        (
            mcse_flat.iter().step_by(2).copied().collect(),
            Some(mcse_flat.iter().skip(1).step_by(2).copied().collect()),
        )
    } else {
        (mcse_flat, None)
    };

    let n = prob_lambda.len();
    let summary = PosteriorSummary {
        mean_beta,
        mean_gamma,
        mean_beta_imag,
        prob_lambda,
        prob_omega,
        active_mag,
        active_phase,
        mcse_lambda,
        mcse_omega,
        converged: vec![true; n],
        mh_acceptance: summary_map
            .get("mh_acceptance")
            .map(|s| parse_float(s))
            .transpose()?,
        runtime_seconds,
    };
    Ok(StoredResults {
        model,
        summary,
    })
}
