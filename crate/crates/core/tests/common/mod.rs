//! Shared test oracles: a naive scalar-loop joint density built only from
//! the scalar stats kernels, independent of the production evaluation path,
//! plus finite-difference gradients and random instance generators.

use gfa_core::model::{HyperParams, ModelFamily, ModelSpec, ParamLayout, ParamVector};
use gfa_core::pipeline::MultiViewDataset;
use gfa_core::stats::{
    log_pdf_gamma, log_pdf_half_cauchy, log_pdf_inv_gamma, log_pdf_normal, to_positive,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Term-wise decomposition of the naive joint density.
#[derive(Debug, Clone, Copy, Default)]
pub struct NaiveTerms {
    pub likelihood: f64,
    pub loading_prior: f64,
    pub latent_prior: f64,
    pub scale_priors: f64,
    pub noise_prior: f64,
    pub jacobian: f64,
}

impl NaiveTerms {
    pub fn total(&self) -> f64 {
        self.likelihood
            + self.loading_prior
            + self.latent_prior
            + self.scale_priors
            + self.noise_prior
            + self.jacobian
    }
}

/// Scalar-loop joint density: every term is one call into the scalar stats
/// kernels, with the shrinkage formulas written out inline.
pub fn naive_terms(spec: &ModelSpec, data: &MultiViewDataset, params: &[f64]) -> NaiveTerms {
    let layout = ParamLayout::new(spec).unwrap();
    let k = spec.n_factors;
    let n = spec.n_samples;
    let m_views = spec.n_views();
    let mut t = NaiveTerms::default();

    let value = |r: &std::ops::Range<usize>, i: usize| params[r.start + i];

    // Jacobian: one log-transform term per positive coordinate.
    for i in layout.positive_start()..layout.len {
        t.jacobian += to_positive(params[i]).unwrap().log_jacobian;
    }

    // Likelihood, one scalar Gaussian per cell.
    for m in 0..m_views {
        let rho = value(&layout.noise, m).exp();
        let sd = 1.0 / rho.sqrt();
        let w_range = layout.loadings_view(m);
        for j in 0..spec.view_dims[m] {
            for i in 0..n {
                let mut mean = 0.0;
                for f in 0..k {
                    mean += params[w_range.start + j * k + f]
                        * value(&layout.latents, f * n + i);
                }
                t.likelihood += log_pdf_normal(data.views[m][[j, i]], mean, sd).unwrap();
            }
        }
        t.noise_prior +=
            log_pdf_gamma(rho, spec.hyper.noise_shape, spec.hyper.noise_rate).unwrap();
    }

    match spec.family {
        ModelFamily::SparseGfa => {
            let a_ig = spec.hyper.slab_df / 2.0;
            let b_ig = spec.hyper.slab_df * spec.hyper.slab_scale * spec.hyper.slab_scale / 2.0;
            let global_w = layout.global_w.clone().unwrap();
            let slab_w = layout.slab_w.clone().unwrap();
            let local_z = layout.local_z.clone().unwrap();
            let global_z = layout.global_z.clone().unwrap();
            let slab_z = layout.slab_z.clone().unwrap();

            for m in 0..m_views {
                let d_m = spec.view_dims[m];
                let rho = value(&layout.noise, m).exp();
                let tau = value(&global_w, m).exp();
                let w_range = layout.loadings_view(m);
                let lw_range = layout.local_w_view(m).unwrap();
                for j in 0..d_m {
                    for f in 0..k {
                        let w = params[w_range.start + j * k + f];
                        let lambda = params[lw_range.start + j * k + f].exp();
                        let c2 = value(&slab_w, m * k + f).exp();
                        let tl2 = tau * tau * lambda * lambda;
                        let scale = (c2 * tl2 / (c2 + tl2)).sqrt();
                        t.loading_prior += log_pdf_normal(w, 0.0, scale).unwrap();
                        t.scale_priors += log_pdf_half_cauchy(lambda, 1.0).unwrap();
                    }
                }
                let p0 = spec.hyper.relevant_features[m];
                let tau0 = p0 / (d_m as f64 - p0) / ((n as f64) * rho).sqrt();
                t.scale_priors += log_pdf_half_cauchy(tau, tau0).unwrap();
                for f in 0..k {
                    let c2 = value(&slab_w, m * k + f).exp();
                    t.scale_priors += log_pdf_inv_gamma(c2, a_ig, b_ig).unwrap();
                }
            }
            for f in 0..k {
                let tau = value(&global_z, f).exp();
                let c2 = value(&slab_z, f).exp();
                for i in 0..n {
                    let z = value(&layout.latents, f * n + i);
                    let lambda = value(&local_z, f * n + i).exp();
                    let tl2 = tau * tau * lambda * lambda;
                    let scale = (c2 * tl2 / (c2 + tl2)).sqrt();
                    t.latent_prior += log_pdf_normal(z, 0.0, scale).unwrap();
                    t.scale_priors += log_pdf_half_cauchy(lambda, 1.0).unwrap();
                }
                t.scale_priors += log_pdf_half_cauchy(tau, 1.0).unwrap();
                t.scale_priors += log_pdf_inv_gamma(c2, a_ig, b_ig).unwrap();
            }
        }
        ModelFamily::Gfa => {
            let ard = layout.ard.clone().unwrap();
            for m in 0..m_views {
                let w_range = layout.loadings_view(m);
                for j in 0..spec.view_dims[m] {
                    for f in 0..k {
                        let w = params[w_range.start + j * k + f];
                        let alpha = value(&ard, m * k + f).exp();
                        t.loading_prior +=
                            log_pdf_normal(w, 0.0, 1.0 / alpha.sqrt()).unwrap();
                    }
                }
                for f in 0..k {
                    let alpha = value(&ard, m * k + f).exp();
                    t.scale_priors +=
                        log_pdf_gamma(alpha, spec.hyper.ard_shape, spec.hyper.ard_rate).unwrap();
                }
            }
            for f in 0..k {
                for i in 0..n {
                    t.latent_prior +=
                        log_pdf_normal(value(&layout.latents, f * n + i), 0.0, 1.0).unwrap();
                }
            }
        }
    }

    t
}

pub fn naive_log_joint(spec: &ModelSpec, data: &MultiViewDataset, params: &[f64]) -> f64 {
    naive_terms(spec, data, params).total()
}

/// Central finite differences of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    let mut work = x.to_vec();
    for i in 0..x.len() {
        let orig = work[i];
        work[i] = orig + h;
        let fp = f(&work);
        work[i] = orig - h;
        let fm = f(&work);
        work[i] = orig;
        grad.push((fp - fm) / (2.0 * h));
    }
    grad
}

/// A random small instance: spec, dataset, and an unconstrained parameter
/// vector drawn from a moderate range.
pub fn random_instance(
    family: ModelFamily,
    seed: u64,
) -> (ModelSpec, MultiViewDataset, ParamVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m_views = rng.gen_range(1..=2usize);
    let view_dims: Vec<usize> = (0..m_views).map(|_| rng.gen_range(1..=4usize)).collect();
    let n = rng.gen_range(1..=4usize);
    let k = rng.gen_range(1..=2usize);

    let mut hyper = HyperParams::default_for(&view_dims);
    hyper.relevant_features = view_dims
        .iter()
        .map(|&d| d as f64 * rng.gen_range(0.2..0.8))
        .collect();
    hyper.noise_shape = rng.gen_range(0.5..3.0);
    hyper.noise_rate = rng.gen_range(0.5..3.0);
    hyper.slab_df = rng.gen_range(1.0..6.0);
    hyper.slab_scale = rng.gen_range(0.5..3.0);
    hyper.ard_shape = rng.gen_range(0.5..3.0);
    hyper.ard_rate = rng.gen_range(0.5..3.0);

    let spec = ModelSpec::new(family, view_dims.clone(), n, k, hyper).unwrap();
    let layout = ParamLayout::new(&spec).unwrap();

    let views: Vec<Array2<f64>> = view_dims
        .iter()
        .map(|&d| Array2::from_shape_fn((d, n), |_| rng.gen_range(-2.0..2.0)))
        .collect();
    let feature_names = views
        .iter()
        .enumerate()
        .map(|(m, v)| (0..v.nrows()).map(|j| format!("v{m}_f{j}")).collect())
        .collect();
    let sample_ids = (0..n).map(|i| format!("s{i}")).collect();
    let data = MultiViewDataset::new(views, feature_names, sample_ids, None, None).unwrap();

    let values: Vec<f64> = (0..layout.len).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let params = ParamVector::new(values, &layout).unwrap();

    (spec, data, params)
}
