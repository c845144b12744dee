//! Convergence diagnostics: split R-hat and autocorrelation-based bulk ESS.
//!
//! This is the classic split-chain formulation (each chain halved, between-
//! and within-half variances compared) with Geyer initial-monotone
//! truncation for the ESS autocorrelation sum. Rank normalization is not
//! applied.

use crate::error::{Error, Result};

use super::PosteriorDraws;

/// Per-coordinate convergence summary for a multi-chain run.
#[derive(Debug, Clone)]
pub struct ChainDiagnostics {
    /// Split potential scale reduction per coordinate. Infinite when chains
    /// sit at distinct constants.
    pub split_rhat: Vec<f64>,
    /// Bulk effective sample size per coordinate, clamped to
    /// `[1, total draws]`.
    pub bulk_ess: Vec<f64>,
    /// Coordinates whose within-chain variance vanished; their R-hat/ESS
    /// values are placeholders, not estimates.
    pub degenerate: Vec<bool>,
    /// Divergent transitions per chain during sampling.
    pub divergences: Vec<usize>,
}

impl ChainDiagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.split_rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.bulk_ess.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Computes split R-hat and bulk ESS for every coordinate of a run.
pub fn diagnostics(draws: &PosteriorDraws) -> Result<ChainDiagnostics> {
    let chains = &draws.chains;
    if chains.len() < 2 {
        return Err(Error::invalid("diagnostics need at least 2 chains"));
    }
    let n = chains[0].draws.nrows();
    if n < 4 {
        return Err(Error::invalid("diagnostics need at least 4 retained draws per chain"));
    }
    let dim = chains[0].draws.ncols();

    let mut split_rhat = Vec::with_capacity(dim);
    let mut bulk_ess = Vec::with_capacity(dim);
    let mut degenerate = Vec::with_capacity(dim);

    // Halve every chain; drop the middle draw when the count is odd.
    let half = n / 2;
    for coord in 0..dim {
        let mut halves: Vec<Vec<f64>> = Vec::with_capacity(chains.len() * 2);
        for chain in chains {
            let col: Vec<f64> = chain.draws.column(coord).to_vec();
            halves.push(col[..half].to_vec());
            halves.push(col[col.len() - half..].to_vec());
        }
        let (rhat, degen) = split_rhat_from_halves(&halves);
        let ess = if degen { 1.0 } else { ess_from_halves(&halves) };
        split_rhat.push(rhat);
        bulk_ess.push(ess);
        degenerate.push(degen);
    }

    Ok(ChainDiagnostics {
        split_rhat,
        bulk_ess,
        degenerate,
        divergences: chains.iter().map(|c| c.divergences).collect(),
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64], mean: f64) -> f64 {
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn split_rhat_from_halves(halves: &[Vec<f64>]) -> (f64, bool) {
    let m = halves.len() as f64;
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let vars: Vec<f64> = halves.iter().zip(&means).map(|(h, &mu)| sample_var(h, mu)).collect();
    let grand = mean(&means);
    let between = n / (m - 1.0) * means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>();
    let within = mean(&vars);
    if within == 0.0 {
        // All halves constant: identical constants mix trivially, distinct
        // constants can never mix.
        return if between == 0.0 { (1.0, true) } else { (f64::INFINITY, true) };
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    ((var_plus / within).sqrt(), false)
}

/// Bulk ESS with the combined-chain autocorrelation estimate and Geyer
/// initial-monotone truncation.
fn ess_from_halves(halves: &[Vec<f64>]) -> f64 {
    let m = halves.len() as f64;
    let n = halves[0].len();
    let total = m * n as f64;

    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let vars: Vec<f64> = halves.iter().zip(&means).map(|(h, &mu)| sample_var(h, mu)).collect();
    let within = mean(&vars);
    let grand = mean(&means);
    let between = if halves.len() > 1 {
        n as f64 / (m - 1.0) * means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>()
    } else {
        0.0
    };
    let var_plus = (n as f64 - 1.0) / n as f64 * within + between / n as f64;
    if var_plus <= 0.0 {
        return 1.0;
    }

    // Autocovariance per half-chain at lag t, averaged across chains.
    let acov = |t: usize| -> f64 {
        let mut acc = 0.0;
        for (h, &mu) in halves.iter().zip(&means) {
            let mut s = 0.0;
            for i in 0..(n - t) {
                s += (h[i] - mu) * (h[i + t] - mu);
            }
            acc += s / n as f64;
        }
        acc / m
    };

    // Geyer: sum correlations in consecutive pairs (ρ_{2k} + ρ_{2k+1})
    // while the pairs stay positive, enforcing monotone decrease.
    let rho = |t: usize| 1.0 - (within - acov(t)) / var_plus;
    let max_lag = n - 1;
    let mut prev_pair = 1.0 + rho(1); // pair k = 0, with ρ_0 = 1
    let mut tau = if prev_pair > 0.0 { 2.0 * prev_pair - 1.0 } else { 1.0 };
    if prev_pair > 0.0 {
        let mut t = 2;
        while t + 1 <= max_lag {
            let pair = rho(t) + rho(t + 1);
            if pair <= 0.0 {
                break;
            }
            let pair = pair.min(prev_pair);
            tau += 2.0 * pair;
            prev_pair = pair;
            t += 2;
        }
    }

    (total / tau.max(1e-12)).clamp(1.0, total)
}
