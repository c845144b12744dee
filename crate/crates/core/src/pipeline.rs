//! Tabular multi-view ingestion and the preprocessing chain: sample/feature
//! missingness filtering, median imputation, confound regression and
//! standardization.
//!
//! The chain order is fixed — imputation before confound regression before
//! standardization — and every transformation is recorded in a
//! [`PreprocessReport`] so the processed matrix can be replayed bit-for-bit
//! from the raw data plus the report.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// N samples split into M feature views, with optional subgroup labels and
/// confounds. Views are feature-major (`D_m × N`); missing cells are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    pub views: Vec<Array2<f64>>,
    pub feature_names: Vec<Vec<String>>,
    pub sample_ids: Vec<String>,
    pub labels: Option<Vec<String>>,
    /// Confound matrix, `C × N`.
    pub confounds: Option<Array2<f64>>,
}

impl MultiViewDataset {
    pub fn new(
        views: Vec<Array2<f64>>,
        feature_names: Vec<Vec<String>>,
        sample_ids: Vec<String>,
        labels: Option<Vec<String>>,
        confounds: Option<Array2<f64>>,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::invalid("a dataset needs at least one view"));
        }
        let n = sample_ids.len();
        if feature_names.len() != views.len() {
            return Err(Error::shape("feature name lists must match view count"));
        }
        for (m, view) in views.iter().enumerate() {
            if view.ncols() != n {
                return Err(Error::shape(format!(
                    "view {m} has {} samples, expected {n}",
                    view.ncols()
                )));
            }
            if feature_names[m].len() != view.nrows() {
                return Err(Error::shape(format!(
                    "view {m} has {} feature names for {} features",
                    feature_names[m].len(),
                    view.nrows()
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::shape(format!(
                    "{} labels for {n} samples",
                    l.len()
                )));
            }
        }
        if let Some(c) = &confounds {
            if c.ncols() != n {
                return Err(Error::shape(format!(
                    "confound matrix has {} samples, expected {n}",
                    c.ncols()
                )));
            }
        }
        Ok(MultiViewDataset { views, feature_names, sample_ids, labels, confounds })
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.nrows()).collect()
    }

    /// All views stacked vertically into one `D × N` matrix.
    pub fn stacked(&self) -> Array2<f64> {
        let d: usize = self.views.iter().map(|v| v.nrows()).sum();
        let n = self.n_samples();
        let mut out = Array2::zeros((d, n));
        let mut row = 0;
        for view in &self.views {
            out.slice_mut(ndarray::s![row..row + view.nrows(), ..])
                .assign(view);
            row += view.nrows();
        }
        out
    }

    pub fn has_missing(&self) -> bool {
        self.views.iter().any(|v| v.iter().any(|x| x.is_nan()))
    }

    /// Writes view `m` as CSV, samples as rows.
    pub fn write_view_csv(&self, m: usize, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["sample_id".to_string()];
        header.extend(self.feature_names[m].iter().cloned());
        w.write_record(&header)?;
        for (i, id) in self.sample_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            for j in 0..self.views[m].nrows() {
                let v = self.views[m][[j, i]];
                rec.push(if v.is_nan() { String::new() } else { format!("{v}") });
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes subgroup labels as a two-column CSV.
    pub fn write_labels_csv(&self, path: &Path) -> Result<()> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::invalid("dataset has no labels"))?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sample_id", "label"])?;
        for (id, label) in self.sample_ids.iter().zip(labels) {
            w.write_record([id, label])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Which denominator the standardization step uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SdConvention {
    /// Divide by N.
    #[default]
    Population,
    /// Divide by N − 1.
    Sample,
}

/// Options for the preprocessing chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    /// Features with a missing fraction strictly above this are dropped.
    pub feature_missing_threshold: f64,
    /// When set, samples with a missing fraction strictly above this are
    /// dropped before any feature is considered.
    pub sample_missing_threshold: Option<f64>,
    pub sd_convention: SdConvention,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            feature_missing_threshold: 0.10,
            sample_missing_threshold: None,
            sd_convention: SdConvention::Population,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedSample {
    pub id: String,
    pub missing_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub name: String,
    pub missing_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImpute {
    pub name: String,
    pub median: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewReport {
    pub dropped_features: Vec<DroppedFeature>,
    pub kept_features: Vec<String>,
    pub imputations: Vec<FeatureImpute>,
    /// Per kept feature: OLS coefficients on `[intercept, confounds]`.
    pub confound_coefficients: Option<Vec<Vec<f64>>>,
    pub standardization: Vec<FeatureScale>,
}

/// Everything needed to replay the preprocessing on the raw data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub options: PreprocessOptions,
    pub dropped_samples: Vec<DroppedSample>,
    pub views: Vec<ViewReport>,
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

/// Loads one or more view CSVs (first column sample ID, header row feature
/// names), aligning rows by sample ID. Optional label and confound CSVs are
/// keyed by the same IDs.
pub fn load_views(
    view_paths: &[impl AsRef<Path>],
    labels_path: Option<&Path>,
    confounds_path: Option<&Path>,
) -> Result<MultiViewDataset> {
    if view_paths.is_empty() {
        return Err(Error::invalid("no view files given"));
    }
    let mut tables = Vec::new();
    for p in view_paths {
        tables.push(read_table(p.as_ref())?);
    }

    // Every view must cover the same sample set; order may differ.
    let reference: Vec<String> = tables[0].ids.clone();
    let ref_set: BTreeSet<&String> = reference.iter().collect();
    for (m, t) in tables.iter().enumerate().skip(1) {
        let set: BTreeSet<&String> = t.ids.iter().collect();
        if set != ref_set {
            let missing: Vec<&str> = ref_set
                .difference(&set)
                .map(|s| s.as_str())
                .chain(set.difference(&ref_set).map(|s| s.as_str()))
                .take(10)
                .collect();
            if ref_set.intersection(&set).next().is_none() {
                return Err(Error::Alignment(format!(
                    "view {} shares no sample IDs with view 0",
                    m
                )));
            }
            return Err(Error::Alignment(format!(
                "sample IDs differ between view 0 and view {m}; offenders: {}",
                missing.join(", ")
            )));
        }
    }

    let mut views = Vec::new();
    let mut names = Vec::new();
    for t in &tables {
        views.push(t.aligned_matrix(&reference));
        names.push(t.features.clone());
    }

    let labels = match labels_path {
        Some(p) => Some(read_labels(p, &reference)?),
        None => None,
    };
    let confounds = match confounds_path {
        Some(p) => {
            let t = read_table(p)?;
            let set: BTreeSet<&String> = t.ids.iter().collect();
            let missing: Vec<&str> = ref_set
                .difference(&set)
                .map(|s| s.as_str())
                .take(10)
                .collect();
            if !missing.is_empty() {
                return Err(Error::Alignment(format!(
                    "confound file lacks samples: {}",
                    missing.join(", ")
                )));
            }
            let mat = t.aligned_matrix(&reference);
            if mat.iter().any(|v| v.is_nan()) {
                return Err(Error::invalid("confound matrix contains missing values"));
            }
            Some(mat)
        }
        None => None,
    };

    MultiViewDataset::new(views, names, reference, labels, confounds)
}

struct Table {
    ids: Vec<String>,
    features: Vec<String>,
    /// Row-major by sample: `rows[i][j]` is feature j of sample i.
    rows: Vec<Vec<f64>>,
}

impl Table {
    /// Feature-major matrix with columns ordered by `reference` IDs.
    fn aligned_matrix(&self, reference: &[String]) -> Array2<f64> {
        let index: std::collections::HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let d = self.features.len();
        let n = reference.len();
        let mut out = Array2::from_elem((d, n), f64::NAN);
        for (col, id) in reference.iter().enumerate() {
            if let Some(&row) = index.get(id.as_str()) {
                for j in 0..d {
                    out[[j, col]] = self.rows[row][j];
                }
            }
        }
        out
    }
}

fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() < 2 {
        return Err(Error::Parse(format!(
            "{}: expected a sample ID column plus at least one feature",
            path.display()
        )));
    }
    let features: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let line = i + 2; // header is line 1
        let id = rec
            .get(0)
            .ok_or_else(|| Error::Parse(format!("{}: line {line}: empty row", path.display())))?
            .to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Parse(format!(
                "{}: line {line}: duplicate sample ID {id}",
                path.display()
            )));
        }
        let mut row = Vec::with_capacity(features.len());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let trimmed = cell.trim();
            let v = if trimmed.is_empty() || trimmed.eq_ignore_ascii_case("na") || trimmed.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                trimmed.parse::<f64>().map_err(|_| {
                    Error::Parse(format!(
                        "{}: line {line}, column {} ({}): cannot parse {trimmed:?} as a number",
                        path.display(),
                        j + 2,
                        features[j]
                    ))
                })?
            };
            row.push(v);
        }
        ids.push(id);
        rows.push(row);
    }
    if ids.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    Ok(Table { ids, features, rows })
}

fn read_labels(path: &Path, reference: &[String]) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut map = std::collections::HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if rec.len() < 2 {
            return Err(Error::Parse(format!(
                "{}: label rows need an ID and a label",
                path.display()
            )));
        }
        map.insert(rec[0].to_string(), rec[1].to_string());
    }
    let mut out = Vec::with_capacity(reference.len());
    let mut missing = Vec::new();
    for id in reference {
        match map.get(id) {
            Some(l) => out.push(l.clone()),
            None => missing.push(id.as_str()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Alignment(format!(
            "label file lacks samples: {}",
            missing.iter().take(10).copied().collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Preprocessing steps
// ---------------------------------------------------------------------------

/// Drops samples whose overall missing fraction strictly exceeds `threshold`.
pub fn drop_high_missing_samples(
    data: &MultiViewDataset,
    threshold: f64,
) -> Result<(MultiViewDataset, Vec<DroppedSample>)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "sample missingness threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let n = data.n_samples();
    let total_features: usize = data.views.iter().map(|v| v.nrows()).sum();
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for i in 0..n {
        let missing: usize = data
            .views
            .iter()
            .map(|v| v.column(i).iter().filter(|x| x.is_nan()).count())
            .sum();
        let fraction = missing as f64 / total_features as f64;
        if fraction > threshold {
            dropped.push(DroppedSample { id: data.sample_ids[i].clone(), missing_fraction: fraction });
        } else {
            keep.push(i);
        }
    }
    if keep.is_empty() {
        return Err(Error::Degenerate("all samples exceed the missingness threshold".into()));
    }
    let views = data
        .views
        .iter()
        .map(|v| select_columns(v, &keep))
        .collect();
    let confounds = data.confounds.as_ref().map(|c| select_columns(c, &keep));
    let sample_ids = keep.iter().map(|&i| data.sample_ids[i].clone()).collect();
    let labels = data
        .labels
        .as_ref()
        .map(|l| keep.iter().map(|&i| l[i].clone()).collect());
    let out = MultiViewDataset::new(views, data.feature_names.clone(), sample_ids, labels, confounds)?;
    Ok((out, dropped))
}

/// Drops features whose missing fraction strictly exceeds `threshold`.
pub fn drop_high_missing(
    data: &MultiViewDataset,
    threshold: f64,
) -> Result<(MultiViewDataset, Vec<Vec<DroppedFeature>>)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "feature missingness threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let n = data.n_samples() as f64;
    let mut views = Vec::new();
    let mut names = Vec::new();
    let mut dropped_all = Vec::new();
    for (m, view) in data.views.iter().enumerate() {
        let mut keep = Vec::new();
        let mut dropped = Vec::new();
        for j in 0..view.nrows() {
            let missing = view.row(j).iter().filter(|x| x.is_nan()).count() as f64;
            let fraction = missing / n;
            if fraction > threshold {
                dropped.push(DroppedFeature {
                    name: data.feature_names[m][j].clone(),
                    missing_fraction: fraction,
                });
            } else {
                keep.push(j);
            }
        }
        if keep.is_empty() {
            return Err(Error::Degenerate(format!(
                "view {m} loses all features at threshold {threshold}"
            )));
        }
        views.push(select_rows(view, &keep));
        names.push(keep.iter().map(|&j| data.feature_names[m][j].clone()).collect());
        dropped_all.push(dropped);
    }
    let out = MultiViewDataset::new(
        views,
        names,
        data.sample_ids.clone(),
        data.labels.clone(),
        data.confounds.clone(),
    )?;
    Ok((out, dropped_all))
}

/// Replaces every missing cell with the median of the feature's observed
/// values.
pub fn median_impute(
    data: &MultiViewDataset,
) -> Result<(MultiViewDataset, Vec<Vec<FeatureImpute>>)> {
    let mut out = data.clone();
    let mut reports = Vec::new();
    for (m, view) in out.views.iter_mut().enumerate() {
        let mut report = Vec::new();
        for j in 0..view.nrows() {
            let observed: Vec<f64> = view.row(j).iter().copied().filter(|x| !x.is_nan()).collect();
            let count = view.ncols() - observed.len();
            if count == 0 {
                continue;
            }
            if observed.is_empty() {
                return Err(Error::Degenerate(format!(
                    "feature {} of view {m} has no observed values to impute from",
                    data.feature_names[m][j]
                )));
            }
            let median = median_of(observed);
            for i in 0..view.ncols() {
                if view[[j, i]].is_nan() {
                    view[[j, i]] = median;
                }
            }
            report.push(FeatureImpute {
                name: data.feature_names[m][j].clone(),
                median,
                count,
            });
        }
        reports.push(report);
    }
    Ok((out, reports))
}

fn median_of(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Replaces each feature by its residuals from an OLS fit on
/// `[intercept, confounds]`.
pub fn regress_confounds(
    data: &MultiViewDataset,
) -> Result<(MultiViewDataset, Vec<Vec<Vec<f64>>>)> {
    let confounds = data
        .confounds
        .as_ref()
        .ok_or_else(|| Error::invalid("dataset has no confounds to regress"))?;
    if data.has_missing() {
        return Err(Error::invalid("impute missing values before confound regression"));
    }
    let n = data.n_samples();
    let c = confounds.nrows();
    // Design matrix [1, confounds], samples as rows.
    let mut design = Array2::zeros((n, c + 1));
    design.column_mut(0).fill(1.0);
    for i in 0..n {
        for j in 0..c {
            design[[i, j + 1]] = confounds[[j, i]];
        }
    }
    let qr = HouseholderQr::new(design)?;

    let mut out = data.clone();
    let mut coefs_all = Vec::new();
    for view in out.views.iter_mut() {
        let mut coefs_view = Vec::new();
        for j in 0..view.nrows() {
            let y: Array1<f64> = view.row(j).to_owned();
            coefs_view.push(qr.solve(&y).to_vec());
        }
        // Residuals go through the same code path replay uses, so replayed
        // output is bit-identical.
        apply_confound_coefficients(view, confounds, &coefs_view);
        coefs_all.push(coefs_view);
    }
    Ok((out, coefs_all))
}

/// Applies recorded OLS coefficients: residual of y on [intercept, confounds].
fn apply_confound_coefficients(
    view: &mut Array2<f64>,
    confounds: &Array2<f64>,
    coefficients: &[Vec<f64>],
) {
    let n = view.ncols();
    for j in 0..view.nrows() {
        let beta = &coefficients[j];
        for i in 0..n {
            let mut fitted = beta[0];
            for (cj, b) in beta.iter().enumerate().skip(1) {
                fitted += b * confounds[[cj - 1, i]];
            }
            view[[j, i]] -= fitted;
        }
    }
}

/// Centers and scales every feature to mean zero, variance one.
pub fn standardize(
    data: &MultiViewDataset,
    convention: SdConvention,
) -> Result<(MultiViewDataset, Vec<Vec<FeatureScale>>)> {
    if data.has_missing() {
        return Err(Error::invalid("impute missing values before standardization"));
    }
    let n = data.n_samples();
    let denom = match convention {
        SdConvention::Population => n as f64,
        SdConvention::Sample => (n - 1).max(1) as f64,
    };
    let mut out = data.clone();
    let mut reports = Vec::new();
    for (m, view) in out.views.iter_mut().enumerate() {
        let mut report = Vec::new();
        for j in 0..view.nrows() {
            let mean = view.row(j).sum() / n as f64;
            let ss: f64 = view.row(j).iter().map(|x| (x - mean) * (x - mean)).sum();
            let sd = (ss / denom).sqrt();
            if sd == 0.0 {
                return Err(Error::Degenerate(format!(
                    "feature {} of view {m} has zero variance",
                    data.feature_names[m][j]
                )));
            }
            for i in 0..n {
                view[[j, i]] = (view[[j, i]] - mean) / sd;
            }
            report.push(FeatureScale {
                name: data.feature_names[m][j].clone(),
                mean,
                sd,
            });
        }
        reports.push(report);
    }
    Ok((out, reports))
}

/// Runs the full chain in its fixed order and assembles the report.
pub fn preprocess(
    data: &MultiViewDataset,
    options: &PreprocessOptions,
) -> Result<(MultiViewDataset, PreprocessReport)> {
    let (data, dropped_samples) = match options.sample_missing_threshold {
        Some(t) => drop_high_missing_samples(data, t)?,
        None => (data.clone(), Vec::new()),
    };
    let (data, dropped_features) = drop_high_missing(&data, options.feature_missing_threshold)?;
    let (data, imputations) = median_impute(&data)?;
    let (data, coefficients) = if data.confounds.is_some() {
        let (d, c) = regress_confounds(&data)?;
        (d, Some(c))
    } else {
        (data, None)
    };
    let (data, standardization) = standardize(&data, options.sd_convention)?;

    let views = (0..data.n_views())
        .map(|m| ViewReport {
            dropped_features: dropped_features[m].clone(),
            kept_features: data.feature_names[m].clone(),
            imputations: imputations[m].clone(),
            confound_coefficients: coefficients.as_ref().map(|c| c[m].clone()),
            standardization: standardization[m].clone(),
        })
        .collect();

    let report = PreprocessReport {
        options: options.clone(),
        dropped_samples,
        views,
    };
    Ok((data, report))
}

/// Reapplies a recorded preprocessing run to the raw data. The output is
/// bit-identical to the original processed matrix.
pub fn replay(data: &MultiViewDataset, report: &PreprocessReport) -> Result<MultiViewDataset> {
    // Recorded sample drops.
    let dropped: BTreeSet<&str> = report.dropped_samples.iter().map(|d| d.id.as_str()).collect();
    let keep: Vec<usize> = (0..data.n_samples())
        .filter(|&i| !dropped.contains(data.sample_ids[i].as_str()))
        .collect();
    let mut views: Vec<Array2<f64>> = data.views.iter().map(|v| select_columns(v, &keep)).collect();
    let confounds = data.confounds.as_ref().map(|c| select_columns(c, &keep));
    let sample_ids: Vec<String> = keep.iter().map(|&i| data.sample_ids[i].clone()).collect();
    let labels = data
        .labels
        .as_ref()
        .map(|l| keep.iter().map(|&i| l[i].clone()).collect::<Vec<_>>());

    let mut out_views = Vec::new();
    let mut out_names = Vec::new();
    for (m, view_report) in report.views.iter().enumerate() {
        // Recorded feature drops, by name.
        let keep_rows: Vec<usize> = data.feature_names[m]
            .iter()
            .enumerate()
            .filter(|(_, name)| view_report.kept_features.contains(name))
            .map(|(j, _)| j)
            .collect();
        if keep_rows.len() != view_report.kept_features.len() {
            return Err(Error::invalid(format!(
                "raw view {m} does not contain every feature recorded in the report"
            )));
        }
        let mut view = select_rows(&views[m], &keep_rows);

        // Recorded medians into the missing cells.
        for imp in &view_report.imputations {
            let j = view_report
                .kept_features
                .iter()
                .position(|n| n == &imp.name)
                .ok_or_else(|| Error::invalid(format!("unknown imputed feature {}", imp.name)))?;
            for i in 0..view.ncols() {
                if view[[j, i]].is_nan() {
                    view[[j, i]] = imp.median;
                }
            }
        }
        if view.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid(format!(
                "view {m} still has missing values after replaying imputation"
            )));
        }

        // Recorded confound coefficients.
        if let Some(coefs) = &view_report.confound_coefficients {
            let conf = confounds
                .as_ref()
                .ok_or_else(|| Error::invalid("report expects confounds, data has none"))?;
            apply_confound_coefficients(&mut view, conf, coefs);
        }

        // Recorded standardization.
        for (j, scale) in view_report.standardization.iter().enumerate() {
            for i in 0..view.ncols() {
                view[[j, i]] = (view[[j, i]] - scale.mean) / scale.sd;
            }
        }

        out_views.push(view);
        out_names.push(view_report.kept_features.clone());
    }
    views.clear();

    MultiViewDataset::new(out_views, out_names, sample_ids, labels, confounds)
}

fn select_columns(m: &Array2<f64>, keep: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((m.nrows(), keep.len()));
    for (new, &old) in keep.iter().enumerate() {
        out.column_mut(new).assign(&m.column(old));
    }
    out
}

fn select_rows(m: &Array2<f64>, keep: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((keep.len(), m.ncols()));
    for (new, &old) in keep.iter().enumerate() {
        out.row_mut(new).assign(&m.row(old));
    }
    out
}

// ---------------------------------------------------------------------------
// Householder QR for the confound design matrix
// ---------------------------------------------------------------------------

struct HouseholderQr {
    /// Factored matrix: R in the upper triangle, reflectors below.
    qr: Array2<f64>,
    betas: Vec<f64>,
}

impl HouseholderQr {
    fn new(design: Array2<f64>) -> Result<Self> {
        let (n, p) = design.dim();
        if n < p {
            return Err(Error::Collinearity(format!(
                "need at least {p} samples for {p} regression columns, have {n}"
            )));
        }
        let mut qr = design;
        let mut betas = Vec::with_capacity(p);
        let scale = qr.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
        for j in 0..p {
            let mut norm2 = 0.0;
            for i in j..n {
                norm2 += qr[[i, j]] * qr[[i, j]];
            }
            let norm = norm2.sqrt();
            if norm <= 1e-12 * scale * (n as f64).sqrt() {
                return Err(Error::Collinearity(format!(
                    "regression column {j} ({}) is linearly dependent on the previous columns",
                    if j == 0 { "intercept".to_string() } else { format!("confound {j}") }
                )));
            }
            let alpha = if qr[[j, j]] >= 0.0 { -norm } else { norm };
            let v0 = qr[[j, j]] - alpha;
            let beta = -1.0 / (alpha * v0);
            qr[[j, j]] = v0;
            // Apply the reflector to the remaining columns.
            for col in (j + 1)..p {
                let mut dot = 0.0;
                for i in j..n {
                    dot += qr[[i, j]] * qr[[i, col]];
                }
                let factor = beta * dot;
                for i in j..n {
                    let vij = qr[[i, j]];
                    qr[[i, col]] -= factor * vij;
                }
            }
            betas.push(beta);
            qr[[j, j]] = alpha; // store R's diagonal; v0 is recoverable
            // Keep the reflector tail in place below the diagonal, and stash
            // v0 separately by renormalizing: store v_i / v0 below diagonal.
            for i in (j + 1)..n {
                qr[[i, j]] /= v0;
            }
            betas[j] = beta * v0 * v0; // adjust for the renormalization
            // After renormalization v = (1, v_{j+1}/v0, ...) and the factor
            // becomes beta * v0^2.
            let rjj = qr[[j, j]];
            if rjj.abs() <= 1e-10 * scale * (n as f64).sqrt() {
                return Err(Error::Collinearity(format!(
                    "regression column {j} ({}) is linearly dependent on the previous columns",
                    if j == 0 { "intercept".to_string() } else { format!("confound {j}") }
                )));
            }
        }
        Ok(HouseholderQr { qr, betas })
    }

    /// Least-squares solution of `design · beta = y`.
    fn solve(&self, y: &Array1<f64>) -> Array1<f64> {
        let (n, p) = self.qr.dim();
        let mut work = y.to_owned();
        for j in 0..p {
            // v = (1, qr[j+1..n, j])
            let mut dot = work[j];
            for i in (j + 1)..n {
                dot += self.qr[[i, j]] * work[i];
            }
            let factor = self.betas[j] * dot;
            work[j] -= factor;
            for i in (j + 1)..n {
                work[i] -= factor * self.qr[[i, j]];
            }
        }
        // Back substitution on R.
        let mut beta = Array1::zeros(p);
        for j in (0..p).rev() {
            let mut acc = work[j];
            for col in (j + 1)..p {
                acc -= self.qr[[j, col]] * beta[col];
            }
            beta[j] = acc / self.qr[[j, j]];
        }
        beta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn toy(views: Vec<Array2<f64>>) -> MultiViewDataset {
        let names = views
            .iter()
            .enumerate()
            .map(|(m, v)| (0..v.nrows()).map(|j| format!("v{}_f{}", m + 1, j + 1)).collect())
            .collect();
        let n = views[0].ncols();
        let ids = (0..n).map(|i| format!("s{i:03}")).collect();
        MultiViewDataset::new(views, names, ids, None, None).unwrap()
    }

    #[test]
    fn drop_threshold_is_strict() {
        // 100 samples: one feature missing 11%, one missing exactly 10%.
        let n = 100;
        let mut v = Array2::zeros((2, n));
        for i in 0..n {
            v[[0, i]] = i as f64;
            v[[1, i]] = -(i as f64);
        }
        for i in 0..11 {
            v[[0, i]] = f64::NAN;
        }
        for i in 0..10 {
            v[[1, i]] = f64::NAN;
        }
        let data = toy(vec![v]);
        let (kept, dropped) = drop_high_missing(&data, 0.10).unwrap();
        assert_eq!(kept.views[0].nrows(), 1);
        assert_eq!(dropped[0].len(), 1);
        assert_eq!(dropped[0][0].name, "v1_f1");
        assert_relative_eq!(dropped[0][0].missing_fraction, 0.11, epsilon = 1e-12);
    }

    #[test]
    fn drop_without_missing_is_identity() {
        let data = toy(vec![array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]]);
        let (kept, dropped) = drop_high_missing(&data, 0.10).unwrap();
        assert_eq!(kept.views[0], data.views[0]);
        assert!(dropped[0].is_empty());
    }

    #[test]
    fn median_impute_examples() {
        let mut v = Array2::zeros((1, 4));
        v[[0, 0]] = 1.0;
        v[[0, 1]] = 2.0;
        v[[0, 2]] = 100.0;
        v[[0, 3]] = f64::NAN;
        let data = toy(vec![v]);
        let (imputed, report) = median_impute(&data).unwrap();
        assert_eq!(imputed.views[0][[0, 3]], 2.0);
        assert_eq!(report[0][0].count, 1);

        let mut v = Array2::zeros((1, 3));
        v[[0, 0]] = 1.0;
        v[[0, 1]] = 3.0;
        v[[0, 2]] = f64::NAN;
        let data = toy(vec![v]);
        let (imputed, _) = median_impute(&data).unwrap();
        assert_eq!(imputed.views[0][[0, 2]], 2.0);

        let data = toy(vec![array![[1.0, 2.0]]]);
        let (same, report) = median_impute(&data).unwrap();
        assert_eq!(same.views[0], data.views[0]);
        assert!(report[0].is_empty());
    }

    #[test]
    fn confound_regression_removes_exact_fits() {
        let n = 20;
        let confound: Vec<f64> = (0..n).map(|i| (i as f64) / 3.0 - 2.0).collect();
        let mut v = Array2::zeros((1, n));
        for i in 0..n {
            v[[0, i]] = 2.0 * confound[i];
        }
        let mut data = toy(vec![v]);
        data.confounds = Some(Array2::from_shape_vec((1, n), confound).unwrap());
        let (resid, coefs) = regress_confounds(&data).unwrap();
        let norm: f64 = resid.views[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-10, "residual norm {norm}");
        assert_relative_eq!(coefs[0][0][1], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn residuals_are_uncorrelated_with_confounds() {
        let n = 50;
        let mut conf = Array2::zeros((2, n));
        let mut v = Array2::zeros((3, n));
        let mut state = 1u64;
        let mut next = || {
            // Small LCG keeps the test self-contained.
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for i in 0..n {
            conf[[0, i]] = next();
            conf[[1, i]] = next();
            for j in 0..3 {
                v[[j, i]] = next() + 0.7 * conf[[0, i]] - 1.3 * conf[[1, i]];
            }
        }
        let mut data = toy(vec![v]);
        data.confounds = Some(conf.clone());
        let (resid, _) = regress_confounds(&data).unwrap();
        for j in 0..3 {
            for c in 0..2 {
                let dot: f64 = (0..n).map(|i| resid.views[0][[j, i]] * conf[[c, i]]).sum();
                assert!(dot.abs() < 1e-10, "residual correlates with confound: {dot}");
            }
            let mean: f64 = resid.views[0].row(j).sum() / n as f64;
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn collinear_confounds_are_rejected() {
        let n = 10;
        let mut conf = Array2::zeros((2, n));
        for i in 0..n {
            conf[[0, i]] = i as f64;
            conf[[1, i]] = 2.0 * i as f64; // dependent on column 0
        }
        let mut data = toy(vec![Array2::zeros((1, n))]);
        for i in 0..n {
            data.views[0][[0, i]] = i as f64 * 0.5 + 1.0;
        }
        data.confounds = Some(conf);
        match regress_confounds(&data) {
            Err(Error::Collinearity(msg)) => assert!(msg.contains("confound 2"), "{msg}"),
            other => panic!("expected collinearity error, got {other:?}"),
        }
    }

    #[test]
    fn standardize_examples() {
        let data = toy(vec![array![[0.0, 2.0]]]);
        let (s, report) = standardize(&data, SdConvention::Population).unwrap();
        assert_eq!(s.views[0], array![[-1.0, 1.0]]);
        assert_eq!(report[0][0].mean, 1.0);
        assert_eq!(report[0][0].sd, 1.0);

        let (again, _) = standardize(&s, SdConvention::Population).unwrap();
        for (a, b) in again.views[0].iter().zip(s.views[0].iter()) {
            assert!((a - b).abs() < 1e-12);
        }

        let constant = toy(vec![array![[3.0, 3.0, 3.0]]]);
        assert!(matches!(
            standardize(&constant, SdConvention::Population),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn chain_is_idempotent_and_replayable() {
        let n = 30;
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut v1 = Array2::zeros((5, n));
        let mut v2 = Array2::zeros((3, n));
        let mut conf = Array2::zeros((2, n));
        for i in 0..n {
            conf[[0, i]] = next();
            conf[[1, i]] = next() * 2.0;
            for j in 0..5 {
                v1[[j, i]] = next() + 0.4 * conf[[0, i]];
            }
            for j in 0..3 {
                v2[[j, i]] = next() - 0.9 * conf[[1, i]];
            }
        }
        // Sprinkle missingness: one feature above threshold, a few cells below.
        for i in 0..6 {
            v1[[0, i]] = f64::NAN; // 20% missing -> dropped
        }
        v1[[2, 4]] = f64::NAN;
        v2[[1, 10]] = f64::NAN;
        v2[[1, 11]] = f64::NAN;

        let mut raw = toy(vec![v1, v2]);
        raw.confounds = Some(conf);

        let options = PreprocessOptions::default();
        let (processed, report) = preprocess(&raw, &options).unwrap();
        assert!(!processed.has_missing());
        assert_eq!(processed.views[0].nrows(), 4);

        // Idempotence: preprocessing its own output changes nothing.
        let (twice, _) = preprocess(&processed, &options).unwrap();
        for (a, b) in twice.stacked().iter().zip(processed.stacked().iter()) {
            assert!((a - b).abs() < 1e-10, "idempotence violated: {a} vs {b}");
        }

        // Replay from the report is bit-exact.
        let replayed = replay(&raw, &report).unwrap();
        assert_eq!(replayed.stacked(), processed.stacked());

        // Replay survives a JSON round trip of the report.
        let json = serde_json::to_string(&report).unwrap();
        let report2: PreprocessReport = serde_json::from_str(&json).unwrap();
        let replayed2 = replay(&raw, &report2).unwrap();
        assert_eq!(replayed2.stacked(), processed.stacked());
    }
}
