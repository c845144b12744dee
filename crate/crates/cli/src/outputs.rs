//! File emission shared by the commands: chain summaries, optional draw
//! matrices, and the analysis artifacts.
//!
//! Formats:
//! * chain summaries — `summary_chain_{c}_loadings.csv` (feature rows,
//!   factor columns, with view/feature name columns) and
//!   `summary_chain_{c}_latents.csv` (factor rows, sample columns).
//! * draws — optional `draws_chain_{c}.csv` with one header column per
//!   coordinate (`block[offset]`), or `draws_chain_{c}.bin` as row-major
//!   little-endian f64, dimensions in `fit.json`.

use std::io::Write;
use std::path::{Path, PathBuf};

use gfa_core::analysis::{ChainFactorSummary, RobustFactorSet};
use gfa_core::model::{ModelSpec, ParamLayout};
use gfa_core::pipeline::MultiViewDataset;
use gfa_core::sampler::PosteriorDraws;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything `analyze` needs from a finished fit, stored as
/// `fit.json` next to the summary CSVs.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitSidecar {
    pub spec: ModelSpec,
    pub chains: usize,
    pub retained_draws: usize,
    pub init_scores: Vec<f64>,
    pub selected_init: usize,
    pub chain_stats: Vec<ChainStats>,
    pub draws_format: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChainStats {
    pub seed: u64,
    pub step_size: f64,
    pub accept_mean: f64,
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub max_depth_hits: usize,
    pub mass_diag: Vec<f64>,
    pub mean_log_joint: f64,
}

pub fn write_chain_summaries(
    dir: &Path,
    summary: &ChainFactorSummary,
    data: &MultiViewDataset,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    for chain in 0..summary.n_chains() {
        let w_path = dir.join(format!("summary_chain_{chain}_loadings.csv"));
        let mut writer = csv::Writer::from_path(&w_path)?;
        let k = summary.n_factors();
        let mut header = vec!["view".to_string(), "feature".to_string()];
        header.extend((1..=k).map(|f| format!("factor_{f}")));
        writer.write_record(&header)?;
        let mut row = 0;
        for (m, names) in data.feature_names.iter().enumerate() {
            for name in names {
                let mut rec = vec![format!("{}", m + 1), name.clone()];
                for f in 0..k {
                    rec.push(format!("{}", summary.loadings[chain][[row, f]]));
                }
                writer.write_record(&rec)?;
                row += 1;
            }
        }
        writer.flush()?;
        written.push(w_path);

        let z_path = dir.join(format!("summary_chain_{chain}_latents.csv"));
        let mut writer = csv::Writer::from_path(&z_path)?;
        let mut header = vec!["factor".to_string()];
        header.extend(data.sample_ids.iter().cloned());
        writer.write_record(&header)?;
        for f in 0..k {
            let mut rec = vec![format!("factor_{}", f + 1)];
            for i in 0..summary.latents[chain].ncols() {
                rec.push(format!("{}", summary.latents[chain][[f, i]]));
            }
            writer.write_record(&rec)?;
        }
        writer.flush()?;
        written.push(z_path);
    }
    Ok(written)
}

pub fn read_chain_summaries(
    dir: &Path,
    chains: usize,
    view_dims: &[usize],
) -> Result<ChainFactorSummary, CliError> {
    let mut loadings = Vec::new();
    let mut latents = Vec::new();
    for chain in 0..chains {
        let w_path = dir.join(format!("summary_chain_{chain}_loadings.csv"));
        if !w_path.exists() {
            return Err(CliError::dependency(format!(
                "missing fit artifact {}; run `gfa fit` first",
                w_path.display()
            )));
        }
        let mut rdr = csv::Reader::from_path(&w_path)?;
        let k = rdr.headers()?.len() - 2;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(
                rec.iter()
                    .skip(2)
                    .map(|v| v.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::io(format!("{}: {e}", w_path.display())))?,
            );
        }
        let d = rows.len();
        let mut w = Array2::zeros((d, k));
        for (j, row) in rows.iter().enumerate() {
            for (f, &v) in row.iter().enumerate() {
                w[[j, f]] = v;
            }
        }
        loadings.push(w);

        let z_path = dir.join(format!("summary_chain_{chain}_latents.csv"));
        if !z_path.exists() {
            return Err(CliError::dependency(format!(
                "missing fit artifact {}; run `gfa fit` first",
                z_path.display()
            )));
        }
        let mut rdr = csv::Reader::from_path(&z_path)?;
        let n = rdr.headers()?.len() - 1;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(
                rec.iter()
                    .skip(1)
                    .map(|v| v.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::io(format!("{}: {e}", z_path.display())))?,
            );
        }
        let k_z = rows.len();
        let mut z = Array2::zeros((k_z, n));
        for (f, row) in rows.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                z[[f, i]] = v;
            }
        }
        latents.push(z);
    }
    Ok(ChainFactorSummary { view_dims: view_dims.to_vec(), loadings, latents })
}

/// Optional draw persistence, CSV or compact binary.
pub fn write_draws(
    dir: &Path,
    draws: &PosteriorDraws,
    layout: &ParamLayout,
    format: &str,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    for (c, chain) in draws.chains.iter().enumerate() {
        match format {
            "csv" => {
                let path = dir.join(format!("draws_chain_{c}.csv"));
                let mut writer = csv::Writer::from_path(&path)?;
                let mut header = Vec::with_capacity(layout.len);
                for (id, range) in layout.blocks() {
                    for offset in 0..range.len() {
                        header.push(format!("{}[{}]", id.name(), offset));
                    }
                }
                writer.write_record(&header)?;
                for row in chain.draws.rows() {
                    let rec: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                    writer.write_record(&rec)?;
                }
                writer.flush()?;
                written.push(path);
            }
            "binary" => {
                let path = dir.join(format!("draws_chain_{c}.bin"));
                let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
                for row in chain.draws.rows() {
                    for v in row {
                        file.write_all(&v.to_le_bytes())?;
                    }
                }
                file.flush()?;
                written.push(path);
            }
            other => {
                return Err(CliError::new(
                    crate::error::ExitKind::Config,
                    format!("unknown draws format {other:?}; use csv or binary"),
                ))
            }
        }
    }
    Ok(written)
}

pub fn write_robust_artifacts(
    dir: &Path,
    robust: &RobustFactorSet,
    data: &MultiViewDataset,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();

    // Per-view loading tables.
    for (m, names) in data.feature_names.iter().enumerate() {
        let path = dir.join(format!("robust_loadings_view_{}.csv", m + 1));
        let mut writer = csv::Writer::from_path(&path)?;
        let mut header = vec!["feature".to_string()];
        header.extend((1..=robust.factors.len()).map(|f| format!("factor_{f}")));
        writer.write_record(&header)?;
        for (j, name) in names.iter().enumerate() {
            let mut rec = vec![name.clone()];
            for factor in &robust.factors {
                let views = robust.loading_views(factor);
                rec.push(format!("{}", views[m][j]));
            }
            writer.write_record(&rec)?;
        }
        writer.flush()?;
        written.push(path);
    }

    // Latent scores, factors as rows.
    let path = dir.join("robust_latents.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    let mut header = vec!["factor".to_string()];
    header.extend(data.sample_ids.iter().cloned());
    writer.write_record(&header)?;
    for (f, factor) in robust.factors.iter().enumerate() {
        let mut rec = vec![format!("factor_{}", f + 1)];
        rec.extend(factor.latent.iter().map(|v| format!("{v}")));
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    written.push(path);

    // Contributions table.
    if let Some(subgroups) = &robust.subgroups {
        let path = dir.join("contributions.csv");
        let mut writer = csv::Writer::from_path(&path)?;
        let mut header = vec!["factor".to_string()];
        header.extend(subgroups.iter().cloned());
        writer.write_record(&header)?;
        for (f, factor) in robust.factors.iter().enumerate() {
            if let Some(contrib) = &factor.contributions {
                let mut rec = vec![format!("factor_{}", f + 1)];
                rec.extend(contrib.iter().map(|v| format!("{v}")));
                writer.write_record(&rec)?;
            }
        }
        writer.flush()?;
        written.push(path);

        // Test statistics.
        let tests: Vec<_> = robust
            .factors
            .iter()
            .enumerate()
            .filter_map(|(f, factor)| factor.tests.as_ref().map(|t| (format!("factor_{}", f + 1), t)))
            .collect();
        let path = dir.join("tests.json");
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&tests.into_iter().collect::<std::collections::BTreeMap<_, _>>())?,
        )?;
        written.push(path);
    }

    // Covariance explained.
    let cov: Vec<_> = robust
        .factors
        .iter()
        .enumerate()
        .map(|(f, factor)| {
            serde_json::json!({
                "factor": format!("factor_{}", f + 1),
                "support": factor.support,
                "mean_similarity": factor.mean_similarity,
                "covariance_explained": factor.covariance_explained,
            })
        })
        .collect();
    let path = dir.join("covariance_explained.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&serde_json::json!({
            "factors": cov,
            "total": robust
                .factors
                .iter()
                .filter_map(|f| f.covariance_explained)
                .sum::<f64>(),
        }))?,
    )?;
    written.push(path);

    // The consolidated analysis file that drives the plots.
    let path = dir.join("analysis.json");
    std::fs::write(&path, serde_json::to_string_pretty(robust)?)?;
    written.push(path);

    Ok(written)
}
