//! Benchmark data generator: a three-view dataset with labelled subgroups
//! and factors of known expression pattern.
//!
//! The default scenario draws 150 samples in three subgroups of 50 across
//! views of 60, 40 and 20 features, with three ground-truth factors: the
//! first expressed mostly by subgroup one, the second mostly by subgroup
//! two, the third shared by everyone. Expression is steered through pinned
//! local shrinkage scales — relevant entries get a large local scale,
//! irrelevant ones a tiny one — while slab widths are drawn from their
//! prior, so generated loadings and latents remain honest samples of the
//! shrinkage hierarchy.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    forward_sample, ForwardOverrides, HyperParams, ModelFamily, ModelSpec, ParamLayout,
};
use crate::pipeline::MultiViewDataset;

/// Parameters of the synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticScenario {
    pub n_factors: usize,
    pub subgroup_sizes: Vec<usize>,
    pub view_dims: Vec<usize>,
    /// Per-view noise standard deviations (precisions are `1/sd²`).
    pub noise_sd: Vec<f64>,
    pub lambda_active: f64,
    pub lambda_inactive_w: f64,
    pub lambda_inactive_z: f64,
    pub tau_z: f64,
    /// Fraction of each view's features assumed relevant when deriving the
    /// loading global scales.
    pub relevant_fraction: f64,
    pub slab_df: f64,
    pub slab_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticScenario {
    fn default() -> Self {
        SyntheticScenario {
            n_factors: 3,
            subgroup_sizes: vec![50, 50, 50],
            view_dims: vec![60, 40, 20],
            noise_sd: vec![3.0, 6.0, 4.0],
            lambda_active: 100.0,
            lambda_inactive_w: 0.01,
            lambda_inactive_z: 0.001,
            tau_z: 0.01,
            relevant_fraction: 1.0 / 3.0,
            slab_df: 2.0,
            slab_scale: 2.0,
            seed: 0,
        }
    }
}

impl SyntheticScenario {
    pub fn n_samples(&self) -> usize {
        self.subgroup_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_factors == 0 {
            return Err(Error::invalid("n_factors must be at least 1"));
        }
        if self.subgroup_sizes.is_empty() || self.subgroup_sizes.iter().any(|&s| s == 0) {
            return Err(Error::invalid("subgroup sizes must all be positive"));
        }
        if self.view_dims.is_empty() || self.view_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("view dimensions must all be positive"));
        }
        if self.noise_sd.len() != self.view_dims.len() {
            return Err(Error::shape("one noise sd per view is required"));
        }
        if self.noise_sd.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("noise sds must be positive"));
        }
        for (name, v) in [
            ("lambda_active", self.lambda_active),
            ("lambda_inactive_w", self.lambda_inactive_w),
            ("lambda_inactive_z", self.lambda_inactive_z),
            ("tau_z", self.tau_z),
            ("slab_df", self.slab_df),
            ("slab_scale", self.slab_scale),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.relevant_fraction > 0.0 && self.relevant_fraction < 1.0) {
            return Err(Error::invalid("relevant_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    /// The model spec this scenario generates under.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let mut hyper = HyperParams::default_for(&self.view_dims);
        hyper.relevant_features = self
            .view_dims
            .iter()
            .map(|&d| d as f64 * self.relevant_fraction)
            .collect();
        hyper.slab_df = self.slab_df;
        hyper.slab_scale = self.slab_scale;
        ModelSpec::new(
            ModelFamily::SparseGfa,
            self.view_dims.clone(),
            self.n_samples(),
            self.n_factors,
            hyper,
        )
    }

    /// Feature activity mask of view `m`: factor `k` owns the `k`-th block
    /// of `ceil(D_m / K)` features, rotated disjointly across factors.
    fn feature_mask(&self, m: usize) -> Array2<bool> {
        let d = self.view_dims[m];
        let k = self.n_factors;
        let block = d.div_ceil(k);
        let mut mask = Array2::from_elem((d, k), false);
        for f in 0..k {
            let start = (f * block).min(d);
            let end = ((f + 1) * block).min(d);
            for j in start..end {
                mask[[j, f]] = true;
            }
        }
        mask
    }

    /// Sample activity mask: every factor but the last is expressed by one
    /// subgroup; the last factor is shared by all samples.
    fn sample_mask(&self) -> Array2<bool> {
        let n = self.n_samples();
        let k = self.n_factors;
        let g = self.subgroup_sizes.len();
        let mut mask = Array2::from_elem((k, n), false);
        let mut bounds = vec![0usize];
        for &s in &self.subgroup_sizes {
            bounds.push(bounds.last().unwrap() + s);
        }
        for f in 0..k {
            if f + 1 == k {
                mask.row_mut(f).fill(true);
            } else {
                let grp = f % g;
                for i in bounds[grp]..bounds[grp + 1] {
                    mask[[f, i]] = true;
                }
            }
        }
        mask
    }

    fn labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_samples());
        for (g, &size) in self.subgroup_sizes.iter().enumerate() {
            out.extend(std::iter::repeat_n(format!("g{}", g + 1), size));
        }
        out
    }
}

/// Known parameters behind one generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    /// True loadings per view, `D_m × K`.
    pub loadings: Vec<Vec<Vec<f64>>>,
    /// True latents, `K × N`.
    pub latents: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub feature_masks: Vec<Vec<Vec<bool>>>,
    pub sample_masks: Vec<Vec<bool>>,
    pub noise_sd: Vec<f64>,
    pub seed: u64,
}

impl GroundTruth {
    pub fn n_factors(&self) -> usize {
        self.latents.len()
    }

    /// True latents as a `K × N` matrix.
    pub fn latent_matrix(&self) -> Array2<f64> {
        let k = self.latents.len();
        let n = self.latents[0].len();
        Array2::from_shape_fn((k, n), |(f, i)| self.latents[f][i])
    }

    /// True loadings of all views stacked, `D × K`.
    pub fn stacked_loadings(&self) -> Array2<f64> {
        let k = self.n_factors();
        let d: usize = self.loadings.iter().map(|w| w.len()).sum();
        let mut out = Array2::zeros((d, k));
        let mut row = 0;
        for w in &self.loadings {
            for r in w {
                for (f, &v) in r.iter().enumerate() {
                    out[[row, f]] = v;
                }
                row += 1;
            }
        }
        out
    }
}

/// Generates one dataset plus its ground truth.
pub fn generate(scenario: &SyntheticScenario) -> Result<(MultiViewDataset, GroundTruth)> {
    scenario.validate()?;
    let spec = scenario.model_spec()?;
    let layout = ParamLayout::new(&spec)?;
    let n = scenario.n_samples();
    let k = scenario.n_factors;

    // Pin the sparsity pattern through the local scales; pin the global
    // scales at their reference values; leave slabs to their prior.
    let feature_masks: Vec<Array2<bool>> =
        (0..spec.n_views()).map(|m| scenario.feature_mask(m)).collect();
    let sample_mask = scenario.sample_mask();

    let local_w: Vec<Array2<f64>> = feature_masks
        .iter()
        .map(|mask| {
            mask.mapv(|active| if active { scenario.lambda_active } else { scenario.lambda_inactive_w })
        })
        .collect();
    let local_z: Array2<f64> = sample_mask.mapv(|active| {
        if active {
            scenario.lambda_active
        } else {
            scenario.lambda_inactive_z
        }
    });

    let mut global_w = Vec::with_capacity(spec.n_views());
    for m in 0..spec.n_views() {
        let rho = 1.0 / (scenario.noise_sd[m] * scenario.noise_sd[m]);
        global_w.push(crate::model::global_shrinkage_scale(
            spec.hyper.relevant_features[m],
            spec.view_dims[m],
            n,
            rho,
        )?);
    }

    let overrides = ForwardOverrides {
        noise: Some(
            scenario
                .noise_sd
                .iter()
                .map(|&sd| 1.0 / (sd * sd))
                .collect(),
        ),
        local_w: Some(local_w),
        global_w: Some(global_w),
        local_z: Some(local_z),
        global_z: Some(vec![scenario.tau_z; k]),
        ..ForwardOverrides::default()
    };

    let (mut data, params) = forward_sample(&spec, &overrides, scenario.seed)?;
    data.labels = Some(scenario.labels());

    let loadings: Vec<Vec<Vec<f64>>> = (0..spec.n_views())
        .map(|m| {
            let range = layout.loadings_view(m);
            let w = &params.values[range];
            (0..spec.view_dims[m])
                .map(|j| (0..k).map(|f| w[j * k + f]).collect())
                .collect()
        })
        .collect();
    let latents: Vec<Vec<f64>> = (0..k)
        .map(|f| {
            (0..n)
                .map(|i| params.values[layout.latents.start + f * n + i])
                .collect()
        })
        .collect();

    let truth = GroundTruth {
        loadings,
        latents,
        labels: scenario.labels(),
        feature_masks: feature_masks
            .iter()
            .map(|m| m.outer_iter().map(|r| r.to_vec()).collect())
            .collect(),
        sample_masks: sample_mask.outer_iter().map(|r| r.to_vec()).collect(),
        noise_sd: scenario.noise_sd.clone(),
        seed: scenario.seed,
    };

    Ok((data, truth))
}

/// Per-factor subgroup contributions of the true latents: row `k` holds the
/// per-subgroup means of `|z_k|`, normalized to sum to one.
pub fn true_contributions(truth: &GroundTruth) -> Result<Array2<f64>> {
    let z = truth.latent_matrix();
    let mut rows = Vec::with_capacity(truth.n_factors());
    for f in 0..truth.n_factors() {
        let abs_scores: Vec<f64> = z.row(f).iter().map(|v| v.abs()).collect();
        rows.push(crate::analysis::factor_contributions(&abs_scores, &truth.labels)?);
    }
    let g = rows[0].len();
    Ok(Array2::from_shape_fn((truth.n_factors(), g), |(f, j)| rows[f][j]))
}
