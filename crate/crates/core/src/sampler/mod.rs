//! Hamiltonian Monte Carlo with No-U-Turn trajectories, dual-averaging
//! step-size adaptation, diagonal mass estimation, multi-chain and
//! multi-initialization orchestration, and convergence diagnostics.
//!
//! The run protocol: the model is sampled from `inits` random starting
//! points; each initialization runs every chain through warm-up and
//! sampling; initializations are scored by the mean retained joint log
//! density across their chains and only the best one's draws are returned
//! (all scores are kept for the run manifest).
//!
//! Chains are independent, own a private RNG stream derived from the master
//! seed, and may run in parallel; results are merged by chain index, so
//! parallel and serial execution are indistinguishable.

mod adapt;
mod diagnostics;
mod leapfrog;
mod nuts;

pub use diagnostics::{diagnostics, ChainDiagnostics};
pub use leapfrog::{leapfrog, PhasePoint};
pub use nuts::{nuts_draw, ChainState, DrawStats, DIVERGENCE_THRESHOLD};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A differentiable unnormalized log density the sampler can explore.
///
/// Implementations must be pure: evaluations at the same point always agree
/// and concurrent calls are safe.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Unnormalized log density; `-inf` marks an untenable point.
    fn log_density(&self, x: &[f64]) -> f64;

    /// Writes the gradient into `grad` and returns the log density.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Sampler run configuration.
///
/// `samples` counts total iterations per chain; the first `warmup` of them
/// drive adaptation and are discarded, leaving `samples - warmup` retained
/// draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub samples: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
    /// Initial positions are drawn uniformly from `(-init_jitter, init_jitter)`
    /// per unconstrained coordinate.
    pub init_jitter: f64,
    /// Number of random initializations of the whole run.
    pub inits: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup: 1000,
            samples: 2500,
            target_accept: 0.8,
            max_tree_depth: 10,
            seed: 0,
            init_jitter: 2.0,
            inits: 5,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::invalid("chains must be at least 1"));
        }
        if self.warmup == 0 {
            return Err(Error::invalid("warmup must be at least 1"));
        }
        if self.samples <= self.warmup {
            return Err(Error::invalid(format!(
                "samples ({}) must exceed warmup ({}); samples counts total iterations",
                self.samples, self.warmup
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::invalid("max_tree_depth must be at least 1"));
        }
        if !(self.init_jitter >= 0.0) {
            return Err(Error::invalid("init_jitter must be non-negative"));
        }
        if self.inits == 0 {
            return Err(Error::invalid("inits must be at least 1"));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.samples - self.warmup
    }
}

/// Retained draws and sampling statistics of one chain.
#[derive(Debug, Clone)]
pub struct ChainDraws {
    /// Retained draws in unconstrained space, one row per draw.
    pub draws: Array2<f64>,
    /// Joint log density of each retained draw.
    pub log_joint: Vec<f64>,
    pub accept_mean: f64,
    pub step_size: f64,
    pub mass_diag: Vec<f64>,
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub max_depth_hits: usize,
    pub seed: u64,
}

/// Draws of the winning initialization, plus the scores of all of them.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub chains: Vec<ChainDraws>,
    /// Mean retained log joint per initialization; failed initializations
    /// score `-inf`.
    pub init_scores: Vec<f64>,
    pub selected_init: usize,
}

/// Deterministic per-(initialization, chain) seed stream.
pub fn derive_seed(master: u64, init: usize, chain: usize) -> u64 {
    let mut s = splitmix64(master ^ 0x6c62272e07bb0142);
    s = splitmix64(s.wrapping_add((init as u64 + 1).wrapping_mul(0x9e3779b97f4a7c15)));
    splitmix64(s.wrapping_add((chain as u64 + 1).wrapping_mul(0xbf58476d1ce4e5b9)))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Runs the full multi-initialization protocol and returns the draws of the
/// best initialization.
///
/// `starts` optionally pins the exact starting point of each initialization
/// (shared by its chains, no jitter); otherwise every (initialization,
/// chain) pair draws its own jittered start.
pub fn run_chains<T: LogDensity>(
    target: &T,
    config: &SamplerConfig,
    starts: Option<&[Vec<f64>]>,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let n_inits = match starts {
        Some(s) => {
            if s.is_empty() {
                return Err(Error::invalid("starts must not be empty"));
            }
            for (r, q) in s.iter().enumerate() {
                if q.len() != target.dim() {
                    return Err(Error::shape(format!(
                        "start {r} has dimension {}, target has {}",
                        q.len(),
                        target.dim()
                    )));
                }
            }
            s.len()
        }
        None => config.inits,
    };

    let tasks: Vec<(usize, usize)> = (0..n_inits)
        .flat_map(|r| (0..config.chains).map(move |c| (r, c)))
        .collect();

    let results: Vec<(usize, usize, Result<ChainDraws>)> = tasks
        .par_iter()
        .map(|&(r, c)| {
            let seed = derive_seed(config.seed, r, c);
            let start = starts.map(|s| s[r].clone());
            (r, c, run_one_chain(target, config, seed, start))
        })
        .collect();

    let mut per_init: Vec<Vec<Option<ChainDraws>>> =
        (0..n_inits).map(|_| vec![None; config.chains]).collect();
    let mut first_error: Option<Error> = None;
    let mut failed: Vec<bool> = vec![false; n_inits];
    for (r, c, res) in results {
        match res {
            Ok(draws) => per_init[r][c] = Some(draws),
            Err(e) => {
                failed[r] = true;
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }

    let mut init_scores = Vec::with_capacity(n_inits);
    for r in 0..n_inits {
        if failed[r] {
            init_scores.push(f64::NEG_INFINITY);
            continue;
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for chain in per_init[r].iter().flatten() {
            total += chain.log_joint.iter().sum::<f64>();
            count += chain.log_joint.len();
        }
        init_scores.push(total / count as f64);
    }

    let selected_init = init_scores
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    if init_scores[selected_init] == f64::NEG_INFINITY {
        return Err(Error::RunFailure(format!(
            "every initialization failed; first error: {}",
            first_error.map(|e| e.to_string()).unwrap_or_default()
        )));
    }

    let chains = per_init
        .swap_remove(selected_init)
        .into_iter()
        .map(|c| c.expect("selected initialization has all chains"))
        .collect();

    Ok(PosteriorDraws { chains, init_scores, selected_init })
}

fn run_one_chain<T: LogDensity>(
    target: &T,
    config: &SamplerConfig,
    seed: u64,
    start: Option<Vec<f64>>,
) -> Result<ChainDraws> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = target.dim();

    let init_state = match start {
        Some(q) => {
            let state = ChainState::new(q, target);
            if !state.log_density.is_finite() {
                return Err(Error::AdaptationFailure(
                    "pinned start has non-finite log density".to_string(),
                ));
            }
            state
        }
        None => {
            let mut found = None;
            for _ in 0..100 {
                let q: Vec<f64> = (0..dim)
                    .map(|_| rng.gen_range(-config.init_jitter..=config.init_jitter))
                    .collect();
                let state = ChainState::new(q, target);
                if state.log_density.is_finite() {
                    found = Some(state);
                    break;
                }
            }
            found.ok_or_else(|| {
                Error::AdaptationFailure(
                    "no finite starting point found in 100 jitter attempts".to_string(),
                )
            })?
        }
    };

    let warm = adapt::adapt_warmup(target, config, init_state, &mut rng)?;

    let retained = config.retained();
    let mut draws = Array2::zeros((retained, dim));
    let mut log_joint = Vec::with_capacity(retained);
    let mut state = warm.state;
    let mut divergences = 0usize;
    let mut max_depth_hits = 0usize;
    let mut accept_total = 0.0;
    for i in 0..retained {
        let (next, stats) =
            nuts_draw(&state, warm.step_size, &warm.mass_diag, target, config.max_tree_depth, &mut rng);
        state = next;
        if stats.divergent {
            divergences += 1;
        }
        if stats.max_depth_hit {
            max_depth_hits += 1;
        }
        accept_total += stats.accept_prob;
        draws.row_mut(i).assign(&ndarray::ArrayView1::from(&state.position[..]));
        log_joint.push(state.log_density);
    }

    Ok(ChainDraws {
        draws,
        log_joint,
        accept_mean: accept_total / retained as f64,
        step_size: warm.step_size,
        mass_diag: warm.mass_diag,
        divergences,
        warmup_divergences: warm.divergences,
        max_depth_hits,
        seed,
    })
}
