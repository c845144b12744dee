//! Joint log densities of the two factor models over a flat unconstrained
//! parameter vector, their gradients, and the generative direction.
//!
//! Both models share the Gaussian likelihood
//! `x_n^(m) ~ N(W^(m) z_n, rho_m^{-1} I)` and differ in the priors placed on
//! the loadings and latents:
//!
//! * [`ModelFamily::Gfa`] — per-(view, factor) ARD precisions `alpha` on the
//!   loadings, standard normal latents.
//! * [`ModelFamily::SparseGfa`] — regularised horseshoe priors on both
//!   loadings and latents: per-entry local scales, per-view (loadings) or
//!   per-factor (latents) global scales, and inverse-gamma slab widths that
//!   cap how far any coefficient escapes shrinkage.
//!
//! Sampling runs on an unconstrained vector; every positive parameter is
//! log-transformed and the Jacobian terms are part of the joint density.

mod density;
mod forward;
mod shrinkage;

pub use forward::{forward_sample, ForwardOverrides};
pub use shrinkage::{global_shrinkage_scale, regularized_scale};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::MultiViewDataset;

/// Which joint density the parameter vector is interpreted under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    /// Vanilla GFA with ARD precisions over the loadings.
    Gfa,
    /// Sparse GFA with regularised horseshoe priors over loadings and latents.
    SparseGfa,
}

/// Hyperparameters of the prior layer.
///
/// `relevant_features[m]` is the prior guess of how many features of view `m`
/// participate in a factor; it controls the base scale of the per-view global
/// shrinkage parameter. `slab_df`/`slab_scale` parameterise the
/// inverse-gamma slab `InvGamma(df/2, df·scale²/2)`. The ARD fields are only
/// read by [`ModelFamily::Gfa`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub relevant_features: Vec<f64>,
    pub noise_shape: f64,
    pub noise_rate: f64,
    pub slab_df: f64,
    pub slab_scale: f64,
    pub ard_shape: f64,
    pub ard_rate: f64,
}

impl HyperParams {
    /// Defaults: one third of each view's features assumed relevant,
    /// `Gamma(1, 1)` noise, slab with 4 degrees of freedom and scale 2.
    ///
    /// The ARD shape/rate default to 1e-3. Values as small as 1e-14 make the
    /// prior improper enough that its log density degenerates under HMC, so
    /// a small-but-proper default is used; both remain configurable.
    pub fn default_for(view_dims: &[usize]) -> Self {
        HyperParams {
            relevant_features: view_dims.iter().map(|&d| d as f64 / 3.0).collect(),
            noise_shape: 1.0,
            noise_rate: 1.0,
            slab_df: 4.0,
            slab_scale: 2.0,
            ard_shape: 1e-3,
            ard_rate: 1e-3,
        }
    }

    fn validate(&self, view_dims: &[usize]) -> Result<()> {
        if self.relevant_features.len() != view_dims.len() {
            return Err(Error::shape(format!(
                "relevant_features has {} entries for {} views",
                self.relevant_features.len(),
                view_dims.len()
            )));
        }
        for (m, (&p0, &d)) in self.relevant_features.iter().zip(view_dims).enumerate() {
            if !(p0 > 0.0 && p0 < d as f64) {
                return Err(Error::invalid(format!(
                    "relevant_features[{m}] must lie in (0, {d}), got {p0}"
                )));
            }
        }
        for (name, v) in [
            ("noise_shape", self.noise_shape),
            ("noise_rate", self.noise_rate),
            ("slab_df", self.slab_df),
            ("slab_scale", self.slab_scale),
            ("ard_shape", self.ard_shape),
            ("ard_rate", self.ard_rate),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Dimensions and hyperparameters of one model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    /// Feature count per view.
    pub view_dims: Vec<usize>,
    pub n_samples: usize,
    pub n_factors: usize,
    pub hyper: HyperParams,
}

impl ModelSpec {
    pub fn new(
        family: ModelFamily,
        view_dims: Vec<usize>,
        n_samples: usize,
        n_factors: usize,
        hyper: HyperParams,
    ) -> Result<Self> {
        if view_dims.is_empty() {
            return Err(Error::invalid("at least one view is required"));
        }
        if view_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("every view needs at least one feature"));
        }
        if n_factors == 0 {
            return Err(Error::invalid("n_factors must be at least 1"));
        }
        if n_samples == 0 {
            return Err(Error::invalid("n_samples must be at least 1"));
        }
        hyper.validate(&view_dims)?;
        Ok(ModelSpec { family, view_dims, n_samples, n_factors, hyper })
    }

    pub fn n_views(&self) -> usize {
        self.view_dims.len()
    }

    pub fn total_features(&self) -> usize {
        self.view_dims.iter().sum()
    }
}

/// One named block of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BlockId {
    Loadings,
    Latents,
    LocalW,
    GlobalW,
    SlabW,
    LocalZ,
    GlobalZ,
    SlabZ,
    Noise,
    Ard,
}

impl BlockId {
    pub fn name(&self) -> &'static str {
        match self {
            BlockId::Loadings => "loadings",
            BlockId::Latents => "latents",
            BlockId::LocalW => "local_w",
            BlockId::GlobalW => "global_w",
            BlockId::SlabW => "slab_w",
            BlockId::LocalZ => "local_z",
            BlockId::GlobalZ => "global_z",
            BlockId::SlabZ => "slab_z",
            BlockId::Noise => "noise",
            BlockId::Ard => "ard",
        }
    }
}

/// Offsets of every block in the flat unconstrained vector.
///
/// Blocks are laid out in a fixed order so that identical specs always
/// produce identical layouts. Within the loadings block, views are
/// concatenated and each view is row-major `(feature, factor)`; latents are
/// row-major `(factor, sample)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamLayout {
    pub family: ModelFamily,
    pub n_views: usize,
    pub view_dims: Vec<usize>,
    pub n_samples: usize,
    pub n_factors: usize,
    /// Start of each view's slice inside the loadings / local-scale blocks.
    pub view_offsets: Vec<usize>,
    pub loadings: std::ops::Range<usize>,
    pub latents: std::ops::Range<usize>,
    pub local_w: Option<std::ops::Range<usize>>,
    pub global_w: Option<std::ops::Range<usize>>,
    pub slab_w: Option<std::ops::Range<usize>>,
    pub local_z: Option<std::ops::Range<usize>>,
    pub global_z: Option<std::ops::Range<usize>>,
    pub slab_z: Option<std::ops::Range<usize>>,
    pub ard: Option<std::ops::Range<usize>>,
    pub noise: std::ops::Range<usize>,
    pub len: usize,
}

impl ParamLayout {
    /// Lays out the parameter vector for `spec`.
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let m = spec.n_views();
        let k = spec.n_factors;
        let n = spec.n_samples;
        let mut view_offsets = Vec::with_capacity(m);
        let mut acc = 0usize;
        for &d in &spec.view_dims {
            view_offsets.push(acc);
            acc = acc
                .checked_add(d.checked_mul(k).ok_or_else(capacity_error)?)
                .ok_or_else(capacity_error)?;
        }
        let w_len = acc;
        let z_len = k.checked_mul(n).ok_or_else(capacity_error)?;

        let mut cursor = 0usize;
        let mut take = |len: usize| -> Result<std::ops::Range<usize>> {
            let start = cursor;
            cursor = cursor.checked_add(len).ok_or_else(capacity_error)?;
            Ok(start..cursor)
        };

        let loadings = take(w_len)?;
        let latents = take(z_len)?;
        let (local_w, global_w, slab_w, local_z, global_z, slab_z, ard) = match spec.family {
            ModelFamily::SparseGfa => (
                Some(take(w_len)?),
                Some(take(m)?),
                Some(take(m * k)?),
                Some(take(z_len)?),
                Some(take(k)?),
                Some(take(k)?),
                None,
            ),
            ModelFamily::Gfa => (None, None, None, None, None, None, Some(take(m * k)?)),
        };
        let noise = take(m)?;

        Ok(ParamLayout {
            family: spec.family,
            n_views: m,
            view_dims: spec.view_dims.clone(),
            n_samples: n,
            n_factors: k,
            view_offsets,
            loadings,
            latents,
            local_w,
            global_w,
            slab_w,
            local_z,
            global_z,
            slab_z,
            ard,
            noise,
            len: cursor,
        })
    }

    /// Slice of the loadings block belonging to view `m`.
    pub fn loadings_view(&self, m: usize) -> std::ops::Range<usize> {
        let start = self.loadings.start + self.view_offsets[m];
        start..start + self.view_dims[m] * self.n_factors
    }

    /// Slice of the local-scale block belonging to view `m` (sparse only).
    pub fn local_w_view(&self, m: usize) -> Option<std::ops::Range<usize>> {
        self.local_w.as_ref().map(|r| {
            let start = r.start + self.view_offsets[m];
            start..start + self.view_dims[m] * self.n_factors
        })
    }

    /// First coordinate of the unconstrained-positive region. Everything at
    /// or past this index is log-transformed.
    pub fn positive_start(&self) -> usize {
        self.latents.end
    }

    /// All blocks present under this layout, in vector order.
    pub fn blocks(&self) -> Vec<(BlockId, std::ops::Range<usize>)> {
        let mut out = vec![
            (BlockId::Loadings, self.loadings.clone()),
            (BlockId::Latents, self.latents.clone()),
        ];
        if let Some(r) = &self.local_w {
            out.push((BlockId::LocalW, r.clone()));
        }
        if let Some(r) = &self.global_w {
            out.push((BlockId::GlobalW, r.clone()));
        }
        if let Some(r) = &self.slab_w {
            out.push((BlockId::SlabW, r.clone()));
        }
        if let Some(r) = &self.local_z {
            out.push((BlockId::LocalZ, r.clone()));
        }
        if let Some(r) = &self.global_z {
            out.push((BlockId::GlobalZ, r.clone()));
        }
        if let Some(r) = &self.slab_z {
            out.push((BlockId::SlabZ, r.clone()));
        }
        if let Some(r) = &self.ard {
            out.push((BlockId::Ard, r.clone()));
        }
        out.push((BlockId::Noise, self.noise.clone()));
        out
    }

    /// Name of the block containing coordinate `i`.
    pub fn block_of(&self, i: usize) -> &'static str {
        for (id, range) in self.blocks() {
            if range.contains(&i) {
                return id.name();
            }
        }
        "out-of-range"
    }
}

fn capacity_error() -> Error {
    Error::InvalidArgument("parameter vector size overflows usize".to_string())
}

/// A flat unconstrained parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    /// Wraps `values` after checking the length against `layout`.
    pub fn new(values: Vec<f64>, layout: &ParamLayout) -> Result<Self> {
        if values.len() != layout.len {
            return Err(Error::shape(format!(
                "parameter vector has length {}, layout expects {}",
                values.len(),
                layout.len
            )));
        }
        Ok(ParamVector { values })
    }

    pub fn zeros(layout: &ParamLayout) -> Self {
        ParamVector { values: vec![0.0; layout.len] }
    }

    /// Errors if any coordinate is non-finite, naming the offending block.
    pub fn validate_finite(&self, layout: &ParamLayout) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "non-finite coordinate {i} ({}) in parameter vector",
                    layout.block_of(i)
                )));
            }
        }
        Ok(())
    }
}

/// A model instance bound to a dataset: the object the sampler evaluates.
pub struct Model<'a> {
    spec: &'a ModelSpec,
    layout: ParamLayout,
    data: &'a MultiViewDataset,
}

impl<'a> Model<'a> {
    /// Binds `spec` to `data`, validating shapes and missingness.
    ///
    /// Missing values must be handled by the preprocessing pipeline before
    /// the model sees the data.
    pub fn new(spec: &'a ModelSpec, data: &'a MultiViewDataset) -> Result<Self> {
        if data.views.len() != spec.n_views() {
            return Err(Error::shape(format!(
                "spec declares {} views, data has {}",
                spec.n_views(),
                data.views.len()
            )));
        }
        for (m, view) in data.views.iter().enumerate() {
            if view.nrows() != spec.view_dims[m] || view.ncols() != spec.n_samples {
                return Err(Error::shape(format!(
                    "view {m} is {}x{}, spec expects {}x{}",
                    view.nrows(),
                    view.ncols(),
                    spec.view_dims[m],
                    spec.n_samples
                )));
            }
            if view.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "view {m} contains missing or non-finite values; run the \
                     preprocessing pipeline first"
                )));
            }
        }
        let layout = ParamLayout::new(spec)?;
        Ok(Model { spec, layout, data })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    /// Joint log density at `params`, with input validation and block-level
    /// diagnostics on numerical failure.
    pub fn log_joint(&self, params: &ParamVector) -> Result<f64> {
        self.check(params)?;
        let v = density::eval(self.spec, &self.layout, self.data, &params.values, None);
        if !v.is_finite() {
            return Err(self.diagnose(params));
        }
        Ok(v)
    }

    /// Joint log density and its gradient with respect to every
    /// unconstrained coordinate.
    pub fn grad_log_joint(&self, params: &ParamVector) -> Result<(f64, Vec<f64>)> {
        self.check(params)?;
        let mut grad = vec![0.0; self.layout.len];
        let v = density::eval(self.spec, &self.layout, self.data, &params.values, Some(&mut grad));
        if !v.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(self.diagnose(params));
        }
        Ok((v, grad))
    }

    fn check(&self, params: &ParamVector) -> Result<()> {
        if params.values.len() != self.layout.len {
            return Err(Error::shape(format!(
                "parameter vector has length {}, layout expects {}",
                params.values.len(),
                self.layout.len
            )));
        }
        params.validate_finite(&self.layout)
    }

    fn diagnose(&self, params: &ParamVector) -> Error {
        // Positive blocks overflow first under exp; report the worst one.
        let mut worst: Option<(usize, f64)> = None;
        for (i, &u) in params.values[self.layout.positive_start()..].iter().enumerate() {
            let idx = self.layout.positive_start() + i;
            if worst.map_or(true, |(_, best)| u > best) {
                worst = Some((idx, u));
            }
        }
        let detail = worst
            .map(|(i, u)| format!("largest positive-block coordinate {i} ({}) = {u}", self.layout.block_of(i)))
            .unwrap_or_default();
        Error::NumericalFailure(format!("non-finite joint log density; {detail}"))
    }
}

/// Infallible evaluation surface for the sampler: non-finite densities come
/// back as `-inf` so a trajectory can be rejected as a divergence instead of
/// aborting the run.
impl crate::sampler::LogDensity for Model<'_> {
    fn dim(&self) -> usize {
        self.layout.len
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let v = density::eval(self.spec, &self.layout, self.data, x, None);
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let v = density::eval(self.spec, &self.layout, self.data, x, Some(grad));
        if v.is_finite() && grad.iter().all(|g| g.is_finite()) {
            v
        } else {
            grad.fill(0.0);
            f64::NEG_INFINITY
        }
    }
}
