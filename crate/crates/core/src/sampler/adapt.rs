//! Warm-up adaptation: dual-averaging step size and windowed diagonal mass
//! estimation.
//!
//! The schedule splits the warm-up into a fast initial window (step size
//! only, 15%), a sequence of doubling slow windows (mass estimation) and a
//! fast terminal window (10%). At the end of each slow window the mass
//! diagonal is refreshed from the window's position variance and dual
//! averaging restarts around the current step size. Warm-up draws are never
//! retained.

use rand::Rng;

use crate::error::{Error, Result};

use super::nuts::{nuts_draw, ChainState};
use super::{LogDensity, SamplerConfig};

/// Dual-averaging state (Nesterov-style primal averaging on `log ε`).
struct DualAveraging {
    mu: f64,
    log_step: f64,
    log_step_avg: f64,
    h_avg: f64,
    counter: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
}

impl DualAveraging {
    fn new(initial_step: f64) -> Self {
        DualAveraging {
            mu: (10.0 * initial_step).ln(),
            log_step: initial_step.ln(),
            log_step_avg: initial_step.ln(),
            h_avg: 0.0,
            counter: 0.0,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
        }
    }

    fn update(&mut self, target_accept: f64, accept: f64) {
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + self.t0);
        self.h_avg = (1.0 - eta) * self.h_avg + eta * (target_accept - accept);
        self.log_step = self.mu - self.counter.sqrt() / self.gamma * self.h_avg;
        let weight = self.counter.powf(-self.kappa);
        self.log_step_avg = weight * self.log_step + (1.0 - weight) * self.log_step_avg;
    }

    fn current(&self) -> f64 {
        self.log_step.exp()
    }

    fn averaged(&self) -> f64 {
        self.log_step_avg.exp()
    }
}

/// Streaming variance estimator for one mass window.
struct Welford {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Welford { count: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1.0;
        for i in 0..x.len() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / self.count;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }

    /// Regularized variance estimate, shrunk toward a small floor the same
    /// way Stan does, so early windows cannot produce wild mass matrices.
    fn regularized_variance(&self) -> Vec<f64> {
        let n = self.count;
        let shrink = n / (n + 5.0);
        self.m2
            .iter()
            .map(|&m2| {
                let var = if n > 1.0 { m2 / (n - 1.0) } else { 1.0 };
                (shrink * var + 1e-3 * (1.0 - shrink)).max(1e-10)
            })
            .collect()
    }
}

/// Heuristic initial step size: double or halve until one leapfrog step
/// crosses 50% acceptance.
fn find_reasonable_step_size(
    state: &ChainState,
    mass_diag: &[f64],
    target: &impl LogDensity,
    rng: &mut impl Rng,
) -> f64 {
    use super::leapfrog::{leapfrog, PhasePoint};

    let mut step = 1.0;
    let momentum: Vec<f64> = mass_diag
        .iter()
        .map(|&m| m.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let point = PhasePoint {
        position: state.position.clone(),
        momentum,
        log_density: state.log_density,
        grad: state.grad.clone(),
    };
    let e0 = point.energy(mass_diag);

    let log_ratio = |step: f64| -> f64 {
        let next = leapfrog(&point, step, mass_diag, target);
        let e1 = next.energy(mass_diag);
        if e1.is_finite() {
            e0 - e1
        } else {
            f64::NEG_INFINITY
        }
    };

    let mut ratio = log_ratio(step);
    let go_up = ratio > (0.5f64).ln();
    for _ in 0..60 {
        if go_up {
            let next = step * 2.0;
            if log_ratio(next) <= (0.5f64).ln() {
                break;
            }
            step = next;
        } else {
            step *= 0.5;
            ratio = log_ratio(step);
            if ratio > (0.5f64).ln() {
                break;
            }
        }
    }
    step.clamp(1e-10, 1e3)
}

/// Ends of the doubling slow windows within `[0, slow_len)`.
fn slow_window_ends(slow_len: usize) -> Vec<usize> {
    let mut ends = Vec::new();
    if slow_len == 0 {
        return ends;
    }
    let base = 25.min(slow_len);
    let mut start = 0usize;
    let mut width = base;
    loop {
        let mut end = start + width;
        // Absorb a remainder too small for another doubling.
        if slow_len.saturating_sub(end) < 2 * width {
            end = slow_len;
        }
        ends.push(end.min(slow_len));
        if end >= slow_len {
            break;
        }
        start = end;
        width *= 2;
    }
    ends
}

pub(super) struct WarmupOutcome {
    pub step_size: f64,
    pub mass_diag: Vec<f64>,
    pub state: ChainState,
    pub divergences: usize,
}

/// Runs the full warm-up schedule from `init`, returning the adapted step
/// size and mass diagonal plus the warm chain state.
pub(super) fn adapt_warmup(
    target: &impl LogDensity,
    config: &SamplerConfig,
    init: ChainState,
    rng: &mut impl Rng,
) -> Result<WarmupOutcome> {
    let warmup = config.warmup;
    if warmup < 20 {
        return Err(Error::invalid(format!(
            "warm-up needs at least 20 iterations, got {warmup}"
        )));
    }
    let dim = init.position.len();
    let init_buffer = ((warmup as f64 * 0.15).round() as usize).max(1);
    let term_buffer = ((warmup as f64 * 0.10).round() as usize).max(1);
    let slow_len = warmup - init_buffer - term_buffer;
    let window_ends = slow_window_ends(slow_len);

    let mut mass_diag = vec![1.0; dim];
    let mut state = init;
    if !state.log_density.is_finite() {
        return Err(Error::AdaptationFailure(
            "initial state has non-finite log density".to_string(),
        ));
    }

    let mut dual = DualAveraging::new(find_reasonable_step_size(&state, &mass_diag, target, rng));
    let mut welford = Welford::new(dim);
    let mut window_cursor = 0usize;
    let mut divergences = 0usize;
    let mut divergence_counts: std::collections::HashMap<usize, usize> = Default::default();

    for iter in 0..warmup {
        let step = dual.current().clamp(1e-10, 1e3);
        let (next, stats) = nuts_draw(&state, step, &mass_diag, target, config.max_tree_depth, rng);
        state = next;
        if stats.divergent {
            divergences += 1;
            if let Some(c) = stats.divergence_coord {
                *divergence_counts.entry(c).or_insert(0) += 1;
            }
        }
        dual.update(config.target_accept, stats.accept_prob);

        let in_slow = iter >= init_buffer && iter < init_buffer + slow_len;
        if in_slow {
            welford.push(&state.position);
            let offset = iter - init_buffer + 1;
            if window_cursor < window_ends.len() && offset == window_ends[window_cursor] {
                // Refresh the mass diagonal and restart step-size adaptation
                // around the current value.
                let var = welford.regularized_variance();
                mass_diag = var.iter().map(|v| 1.0 / v).collect();
                let current = dual.current().clamp(1e-10, 1e3);
                dual = DualAveraging::new(current);
                welford = Welford::new(dim);
                window_cursor += 1;
            }
        }
    }

    if divergences as f64 > 0.9 * warmup as f64 {
        let worst = divergence_counts
            .iter()
            .max_by_key(|(_, &count)| count)
            .map(|(&coord, _)| coord);
        return Err(Error::AdaptationFailure(format!(
            "{divergences} of {warmup} warm-up iterations diverged{}",
            worst
                .map(|c| format!(" (worst coordinate {c})"))
                .unwrap_or_default()
        )));
    }

    let step_size = dual.averaged().clamp(1e-10, 1e3);
    Ok(WarmupOutcome { step_size, mass_diag, state, divergences })
}
