//! Post-inference workflow: per-chain factor summaries, cross-chain
//! matching with sign alignment, robustness screening, factor
//! contributions, subgroup tests, covariance explained, data-space
//! projection and ground-truth recovery scoring.
//!
//! Factor sign and order are not identified by the model, so chains are
//! compared on absolute cosine similarity of their chain-mean loading
//! vectors (all views stacked), with the recovered sign applied to loadings
//! and latents before averaging. A factor is robust when it appears in more
//! than half of the chains.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamLayout;
use crate::pipeline::MultiViewDataset;
use crate::sampler::PosteriorDraws;
use crate::stats::special::{f_upper_tail_p, t_two_sided_p};
use crate::stats::cosine_similarity;
use crate::synth::GroundTruth;

/// Within-chain posterior means of loadings and latents, in constrained
/// space. Factor indices are only comparable within a chain.
#[derive(Debug, Clone)]
pub struct ChainFactorSummary {
    pub view_dims: Vec<usize>,
    /// Per chain: stacked loadings, `D × K`.
    pub loadings: Vec<Array2<f64>>,
    /// Per chain: latents, `K × N`.
    pub latents: Vec<Array2<f64>>,
}

impl ChainFactorSummary {
    pub fn n_chains(&self) -> usize {
        self.loadings.len()
    }

    pub fn n_factors(&self) -> usize {
        self.loadings[0].ncols()
    }
}

/// Averages the retained draws of each chain into loading and latent
/// summaries. Averaging never crosses chains: factor indices are stable
/// within a chain but arbitrary across chains.
pub fn summarize_chains(draws: &PosteriorDraws, layout: &ParamLayout) -> Result<ChainFactorSummary> {
    if draws.chains.is_empty() {
        return Err(Error::invalid("no chains to summarize"));
    }
    let d: usize = layout.view_dims.iter().sum();
    let k = layout.n_factors;
    let n = layout.n_samples;

    let mut loadings = Vec::with_capacity(draws.chains.len());
    let mut latents = Vec::with_capacity(draws.chains.len());
    for chain in &draws.chains {
        if chain.draws.nrows() == 0 {
            return Err(Error::invalid("chain has no retained draws"));
        }
        if chain.draws.ncols() != layout.len {
            return Err(Error::shape(format!(
                "chain draws have {} columns, layout expects {}",
                chain.draws.ncols(),
                layout.len
            )));
        }
        let mean = chain.draws.mean_axis(ndarray::Axis(0)).expect("non-empty");
        let mut w = Array2::zeros((d, k));
        let mut row = 0;
        for m in 0..layout.n_views {
            let range = layout.loadings_view(m);
            let view_w = &mean.as_slice().unwrap()[range];
            for j in 0..layout.view_dims[m] {
                for f in 0..k {
                    w[[row + j, f]] = view_w[j * k + f];
                }
            }
            row += layout.view_dims[m];
        }
        let z_slice = &mean.as_slice().unwrap()[layout.latents.clone()];
        let z = Array2::from_shape_fn((k, n), |(f, i)| z_slice[f * n + i]);
        loadings.push(w);
        latents.push(z);
    }

    Ok(ChainFactorSummary { view_dims: layout.view_dims.clone(), loadings, latents })
}

/// One robust factor: sign-aligned averages over its supporting chains.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustFactor {
    /// Stacked loading vector (all views concatenated).
    pub loading: Vec<f64>,
    /// Latent row, aligned with the loading's sign.
    pub latent: Vec<f64>,
    /// Number of chains the factor appeared in.
    pub support: usize,
    /// Mean aligned similarity of the supporting chains to the seed chain.
    pub mean_similarity: f64,
    /// Fraction of the data's squared norm this factor reconstructs.
    pub covariance_explained: Option<f64>,
    /// Per-subgroup normalized mean absolute latent scores.
    pub contributions: Option<Vec<f64>>,
    pub tests: Option<SubgroupTests>,
}

/// The robust factors of a run. An empty set is a valid outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustFactorSet {
    pub factors: Vec<RobustFactor>,
    pub n_chains: usize,
    pub threshold: f64,
    pub view_dims: Vec<usize>,
    /// Subgroup names in contribution order, once annotated.
    pub subgroups: Option<Vec<String>>,
}

impl RobustFactorSet {
    /// Splits a stacked loading vector into per-view slices.
    pub fn loading_views<'a>(&self, factor: &'a RobustFactor) -> Vec<&'a [f64]> {
        let mut out = Vec::with_capacity(self.view_dims.len());
        let mut start = 0;
        for &d in &self.view_dims {
            out.push(&factor.loading[start..start + d]);
            start += d;
        }
        out
    }
}

struct Cluster {
    seed: Vec<f64>,
    /// (chain, factor index, sign relative to seed).
    members: Vec<(usize, usize, f64)>,
    similarity_sum: f64,
}

fn abs_cos(a: &[f64], b: &[f64]) -> f64 {
    match cosine_similarity(a, b) {
        Ok(c) => c.abs(),
        Err(_) => 0.0, // zero vectors never match anything
    }
}

/// Matches factors across chains and keeps those present in more than half
/// of them, sign-aligned and averaged over their supporting chains.
///
/// Chain 0's factors seed the clusters; each later chain is greedily
/// assigned one-to-one to the existing clusters by absolute cosine
/// similarity of stacked loadings, and its unassigned factors seed new
/// clusters (so a factor missed by chain 0 can still reach majority
/// support).
pub fn match_factors(summary: &ChainFactorSummary, threshold: f64) -> Result<RobustFactorSet> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "cosine threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let n_chains = summary.n_chains();
    if n_chains == 0 {
        return Err(Error::invalid("summary has no chains"));
    }
    let k = summary.n_factors();

    let mut clusters: Vec<Cluster> = Vec::new();
    for chain in 0..n_chains {
        let w = &summary.loadings[chain];
        let columns: Vec<Vec<f64>> = (0..k).map(|f| w.column(f).to_vec()).collect();

        // Greedy one-to-one assignment of this chain's factors to clusters.
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new(); // (sim, cluster, factor)
        for (ci, cluster) in clusters.iter().enumerate() {
            for (fi, col) in columns.iter().enumerate() {
                let sim = abs_cos(&cluster.seed, col);
                if sim > threshold {
                    pairs.push((sim, ci, fi));
                }
            }
        }
        pairs.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut cluster_taken = vec![false; clusters.len()];
        let mut factor_taken = vec![false; k];
        for (sim, ci, fi) in pairs {
            if cluster_taken[ci] || factor_taken[fi] {
                continue;
            }
            cluster_taken[ci] = true;
            factor_taken[fi] = true;
            let dot: f64 = clusters[ci].seed.iter().zip(&columns[fi]).map(|(a, b)| a * b).sum();
            let sign = if dot >= 0.0 { 1.0 } else { -1.0 };
            clusters[ci].members.push((chain, fi, sign));
            clusters[ci].similarity_sum += sim;
        }
        for (fi, taken) in factor_taken.iter().enumerate() {
            if !taken {
                clusters.push(Cluster {
                    seed: columns[fi].clone(),
                    members: vec![(chain, fi, 1.0)],
                    similarity_sum: 0.0,
                });
            }
        }
    }

    let majority = n_chains / 2; // robust requires support > n_chains / 2
    let mut factors = Vec::new();
    for cluster in &clusters {
        let support = cluster.members.len();
        if support <= majority {
            continue;
        }
        let d = cluster.seed.len();
        let n = summary.latents[0].ncols();
        let mut loading = vec![0.0; d];
        let mut latent = vec![0.0; n];
        for &(chain, fi, sign) in &cluster.members {
            for (acc, &v) in loading.iter_mut().zip(summary.loadings[chain].column(fi).iter()) {
                *acc += sign * v;
            }
            for (acc, &v) in latent.iter_mut().zip(summary.latents[chain].row(fi).iter()) {
                *acc += sign * v;
            }
        }
        loading.iter_mut().for_each(|v| *v /= support as f64);
        latent.iter_mut().for_each(|v| *v /= support as f64);
        let mean_similarity = if support > 1 {
            cluster.similarity_sum / (support - 1) as f64
        } else {
            1.0
        };
        factors.push(RobustFactor {
            loading,
            latent,
            support,
            mean_similarity,
            covariance_explained: None,
            contributions: None,
            tests: None,
        });
    }

    Ok(RobustFactorSet {
        factors,
        n_chains,
        threshold,
        view_dims: summary.view_dims.clone(),
        subgroups: None,
    })
}

/// Per-subgroup mean absolute latent score, normalized to sum to one.
/// Subgroups are ordered by first appearance in `labels`.
pub fn factor_contributions(z_row: &[f64], labels: &[String]) -> Result<Vec<f64>> {
    if z_row.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores for {} labels",
            z_row.len(),
            labels.len()
        )));
    }
    if z_row.is_empty() {
        return Err(Error::invalid("empty latent row"));
    }
    let groups = group_order(labels);
    let mut sums = vec![0.0; groups.len()];
    let mut counts = vec![0usize; groups.len()];
    for (score, label) in z_row.iter().zip(labels) {
        let g = groups.iter().position(|x| x == label).unwrap();
        sums[g] += score.abs();
        counts[g] += 1;
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::invalid("every subgroup needs at least one sample"));
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let total: f64 = means.iter().sum();
    if total == 0.0 {
        return Err(Error::invalid(
            "all-zero latent scores have no contribution pattern",
        ));
    }
    Ok(means.iter().map(|m| m / total).collect())
}

fn group_order(labels: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for l in labels {
        if !out.contains(l) {
            out.push(l.clone());
        }
    }
    out
}

/// Pooled-variance (Student) or Welch form for the pairwise tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TTestKind {
    Pooled,
    Welch,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub group_a: String,
    pub group_b: String,
    pub t_statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupTests {
    pub f_statistic: f64,
    pub f_p_value: f64,
    pub pairwise: Vec<PairwiseTest>,
    pub kind: TTestKind,
}

/// One-way ANOVA F-test over the subgroups plus two-sample t-tests for each
/// subgroup pair, on the given score vector.
pub fn subgroup_tests(scores: &[f64], labels: &[String], kind: TTestKind) -> Result<SubgroupTests> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let groups = group_order(labels);
    if groups.len() < 2 {
        return Err(Error::invalid("subgroup tests need at least two subgroups"));
    }
    let by_group: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            scores
                .iter()
                .zip(labels)
                .filter(|(_, l)| *l == g)
                .map(|(s, _)| *s)
                .collect()
        })
        .collect();
    if by_group.iter().any(|g| g.len() < 2) {
        return Err(Error::invalid("every subgroup needs at least two samples"));
    }

    let n_total = scores.len() as f64;
    let g = groups.len() as f64;
    let grand = scores.iter().sum::<f64>() / n_total;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for vals in &by_group {
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        ss_between += n * (mean - grand) * (mean - grand);
        ss_within += vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    let df1 = g - 1.0;
    let df2 = n_total - g;
    if ss_within == 0.0 {
        return Err(Error::Degenerate(
            "zero within-subgroup variance: F-test undefined".to_string(),
        ));
    }
    let f_statistic = (ss_between / df1) / (ss_within / df2);
    let f_p_value = f_upper_tail_p(f_statistic, df1, df2);

    let mut pairwise = Vec::new();
    for a in 0..by_group.len() {
        for b in (a + 1)..by_group.len() {
            let (xa, xb) = (&by_group[a], &by_group[b]);
            let (na, nb) = (xa.len() as f64, xb.len() as f64);
            let ma = xa.iter().sum::<f64>() / na;
            let mb = xb.iter().sum::<f64>() / nb;
            let va = xa.iter().map(|v| (v - ma) * (v - ma)).sum::<f64>() / (na - 1.0);
            let vb = xb.iter().map(|v| (v - mb) * (v - mb)).sum::<f64>() / (nb - 1.0);
            let (t_statistic, df) = match kind {
                TTestKind::Pooled => {
                    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
                    if pooled == 0.0 {
                        return Err(Error::Degenerate(format!(
                            "zero pooled variance between {} and {}",
                            groups[a], groups[b]
                        )));
                    }
                    let t = (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
                    (t, na + nb - 2.0)
                }
                TTestKind::Welch => {
                    let se2 = va / na + vb / nb;
                    if se2 == 0.0 {
                        return Err(Error::Degenerate(format!(
                            "zero variance between {} and {}",
                            groups[a], groups[b]
                        )));
                    }
                    let t = (ma - mb) / se2.sqrt();
                    let df = se2 * se2
                        / (va * va / (na * na * (na - 1.0)) + vb * vb / (nb * nb * (nb - 1.0)));
                    (t, df)
                }
            };
            pairwise.push(PairwiseTest {
                group_a: groups[a].clone(),
                group_b: groups[b].clone(),
                t_statistic,
                p_value: t_two_sided_p(t_statistic, df),
            });
        }
    }

    Ok(SubgroupTests { f_statistic, f_p_value, pairwise, kind })
}

/// Fraction of the data's squared Frobenius norm reconstructed by each
/// factor: `‖w_k z_k‖² / ‖X‖²` over the concatenated views. Fractions are
/// reported unclamped; they are each in `[0, 1]` when the factor
/// reconstructions are orthogonal but their sum may exceed one in general.
pub fn covariance_explained(
    loadings: &Array2<f64>,
    latents: &Array2<f64>,
    data: &Array2<f64>,
) -> Result<Vec<f64>> {
    if loadings.ncols() != latents.nrows() {
        return Err(Error::shape(format!(
            "{} loading columns vs {} latent rows",
            loadings.ncols(),
            latents.nrows()
        )));
    }
    if loadings.nrows() != data.nrows() || latents.ncols() != data.ncols() {
        return Err(Error::shape("loadings/latents do not match the data shape"));
    }
    let data_norm: f64 = data.iter().map(|v| v * v).sum();
    if data_norm == 0.0 {
        return Err(Error::invalid("data has zero norm"));
    }
    let mut out = Vec::with_capacity(loadings.ncols());
    for f in 0..loadings.ncols() {
        let w = loadings.column(f);
        let z = latents.row(f);
        let w2: f64 = w.iter().map(|v| v * v).sum();
        let z2: f64 = z.iter().map(|v| v * v).sum();
        // ‖w zᵀ‖²_F factorizes into ‖w‖²‖z‖².
        out.push(w2 * z2 / data_norm);
    }
    Ok(out)
}

/// Rank-one data-space reconstruction of factor `k`: the outer product of
/// loading column `k` with latent row `k`.
pub fn project_to_data(loadings: &Array2<f64>, latents: &Array2<f64>, k: usize) -> Result<Array2<f64>> {
    if k >= loadings.ncols() || k >= latents.nrows() {
        return Err(Error::invalid(format!(
            "factor index {k} out of range for {} factors",
            loadings.ncols().min(latents.nrows())
        )));
    }
    let d = loadings.nrows();
    let n = latents.ncols();
    let mut out = Array2::zeros((d, n));
    for j in 0..d {
        let w = loadings[[j, k]];
        for i in 0..n {
            out[[j, i]] = w * latents[[k, i]];
        }
    }
    Ok(out)
}

/// Fills in covariance explained, contributions and subgroup tests for each
/// robust factor, then orders the set by covariance explained, descending.
pub fn annotate(
    robust: &mut RobustFactorSet,
    data: &MultiViewDataset,
    kind: TTestKind,
) -> Result<()> {
    if robust.factors.is_empty() {
        return Ok(());
    }
    let x = data.stacked();
    let d = x.nrows();
    let n = x.ncols();
    let r = robust.factors.len();
    let mut w = Array2::zeros((d, r));
    let mut z = Array2::zeros((r, n));
    for (i, factor) in robust.factors.iter().enumerate() {
        if factor.loading.len() != d || factor.latent.len() != n {
            return Err(Error::shape("robust factor does not match the data shape"));
        }
        for j in 0..d {
            w[[j, i]] = factor.loading[j];
        }
        for s in 0..n {
            z[[i, s]] = factor.latent[s];
        }
    }
    let fractions = covariance_explained(&w, &z, &x)?;
    for (factor, &cov) in robust.factors.iter_mut().zip(&fractions) {
        factor.covariance_explained = Some(cov);
    }

    if let Some(labels) = &data.labels {
        robust.subgroups = Some(group_order(labels));
        for factor in robust.factors.iter_mut() {
            factor.contributions = Some(factor_contributions(&factor.latent, labels)?);
            let abs_scores: Vec<f64> = factor.latent.iter().map(|v| v.abs()).collect();
            factor.tests = Some(subgroup_tests(&abs_scores, labels, kind)?);
        }
    }

    robust.factors.sort_by(|a, b| {
        b.covariance_explained
            .unwrap_or(0.0)
            .partial_cmp(&a.covariance_explained.unwrap_or(0.0))
            .unwrap()
    });
    Ok(())
}

/// Per-true-factor outcome of the recovery comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchedFactor {
    pub true_factor: usize,
    pub robust_factor: Option<usize>,
    pub similarity: Option<f64>,
}

/// How well a robust set recovered a known ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub matches: Vec<MatchedFactor>,
    pub matched_count: usize,
    pub unmatched_true: usize,
    pub spurious_robust: usize,
    /// Largest absolute difference between matched contribution rows, when
    /// labels were available.
    pub max_contribution_error: Option<f64>,
    pub threshold: f64,
}

/// Scores a robust set against ground truth with an optimal one-to-one
/// assignment by absolute cosine similarity of stacked loadings.
pub fn recovery_score(
    robust: &RobustFactorSet,
    truth: &GroundTruth,
    threshold: f64,
) -> Result<RecoveryReport> {
    let true_w = truth.stacked_loadings();
    let k_true = true_w.ncols();
    let r = robust.factors.len();

    // Similarity matrix, true × robust.
    let mut sim = Array2::zeros((k_true, r));
    for t in 0..k_true {
        let tw = true_w.column(t).to_vec();
        for (i, factor) in robust.factors.iter().enumerate() {
            if factor.loading.len() != tw.len() {
                return Err(Error::shape(
                    "robust loadings do not match the ground-truth dimension",
                ));
            }
            sim[[t, i]] = abs_cos(&tw, &factor.loading);
        }
    }

    let assignment = best_assignment(&sim);

    let mut matches = Vec::with_capacity(k_true);
    let mut matched_count = 0;
    let mut max_err: Option<f64> = None;
    for t in 0..k_true {
        let assigned = assignment[t].filter(|&i| sim[[t, i]] >= threshold);
        if let Some(i) = assigned {
            matched_count += 1;
            matches.push(MatchedFactor {
                true_factor: t,
                robust_factor: Some(i),
                similarity: Some(sim[[t, i]]),
            });
            if let Some(contrib) = &robust.factors[i].contributions {
                let true_row =
                    factor_contributions(&truth.latents[t], &truth.labels)?;
                for (a, b) in contrib.iter().zip(&true_row) {
                    let err = (a - b).abs();
                    max_err = Some(max_err.map_or(err, |e: f64| e.max(err)));
                }
            }
        } else {
            matches.push(MatchedFactor { true_factor: t, robust_factor: None, similarity: None });
        }
    }

    Ok(RecoveryReport {
        matches,
        matched_count,
        unmatched_true: k_true - matched_count,
        spurious_robust: r - matched_count,
        max_contribution_error: max_err,
        threshold,
    })
}

/// Optimal injective assignment from true factors to robust factors,
/// maximizing total similarity. Exhaustive over the smaller side; sizes are
/// factor counts, so the search space stays tiny.
fn best_assignment(sim: &Array2<f64>) -> Vec<Option<usize>> {
    let (k_true, r) = sim.dim();
    let mut best: Vec<Option<usize>> = vec![None; k_true];
    if r == 0 {
        return best;
    }
    let mut best_total = f64::NEG_INFINITY;
    let mut current: Vec<Option<usize>> = vec![None; k_true];
    let mut used = vec![false; r];

    fn search(
        t: usize,
        total: f64,
        sim: &Array2<f64>,
        used: &mut Vec<bool>,
        current: &mut Vec<Option<usize>>,
        best: &mut Vec<Option<usize>>,
        best_total: &mut f64,
    ) {
        let (k_true, r) = sim.dim();
        if t == k_true {
            if total > *best_total {
                *best_total = total;
                best.clone_from(current);
            }
            return;
        }
        // Leave this true factor unmatched.
        current[t] = None;
        search(t + 1, total, sim, used, current, best, best_total);
        for i in 0..r {
            if used[i] {
                continue;
            }
            used[i] = true;
            current[t] = Some(i);
            search(t + 1, total + sim[[t, i]], sim, used, current, best, best_total);
            used[i] = false;
        }
        current[t] = None;
    }

    search(0, 0.0, sim, &mut used, &mut current, &mut best, &mut best_total);
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn labels(spec: &[(&str, usize)]) -> Vec<String> {
        spec.iter()
            .flat_map(|(name, n)| std::iter::repeat_n(name.to_string(), *n))
            .collect()
    }

    fn summary_from(loadings: Vec<Array2<f64>>, latents: Vec<Array2<f64>>) -> ChainFactorSummary {
        let d = loadings[0].nrows();
        ChainFactorSummary { view_dims: vec![d], loadings, latents }
    }

    /// Base chain used by the matching tests: three well-separated factors.
    fn base_chain() -> (Array2<f64>, Array2<f64>) {
        let w = array![
            [2.0, 0.1, 0.0],
            [1.5, -0.2, 0.1],
            [0.0, 3.0, 0.2],
            [0.1, 2.5, -0.1],
            [-0.2, 0.0, 4.0],
            [0.1, 0.1, 3.5],
        ];
        let z = array![
            [1.0, -1.0, 0.5, 0.2],
            [0.3, 0.8, -0.6, 1.2],
            [-0.4, 0.2, 0.9, -1.1],
        ];
        (w, z)
    }

    fn permuted_flipped(
        w: &Array2<f64>,
        z: &Array2<f64>,
        perm: &[usize],
        signs: &[f64],
    ) -> (Array2<f64>, Array2<f64>) {
        let mut w2 = Array2::zeros(w.dim());
        let mut z2 = Array2::zeros(z.dim());
        for (new, &old) in perm.iter().enumerate() {
            for j in 0..w.nrows() {
                w2[[j, new]] = signs[new] * w[[j, old]];
            }
            for i in 0..z.ncols() {
                z2[[new, i]] = signs[new] * z[[old, i]];
            }
        }
        (w2, z2)
    }

    #[test]
    fn permutation_and_sign_flips_leave_all_factors_robust() {
        let (w, z) = base_chain();
        let (w2, z2) = permuted_flipped(&w, &z, &[2, 0, 1], &[-1.0, 1.0, -1.0]);
        let (w3, z3) = permuted_flipped(&w, &z, &[1, 2, 0], &[1.0, -1.0, 1.0]);
        let (w4, z4) = permuted_flipped(&w, &z, &[0, 2, 1], &[-1.0, -1.0, 1.0]);
        let summary = summary_from(
            vec![w.clone(), w2, w3, w4],
            vec![z.clone(), z2, z3, z4],
        );
        let robust = match_factors(&summary, 0.8).unwrap();
        assert_eq!(robust.factors.len(), 3);
        for factor in &robust.factors {
            assert_eq!(factor.support, 4);
            assert!(factor.mean_similarity > 1.0 - 1e-10);
        }
        // Aligned averages reproduce chain 0's factors exactly.
        for factor in &robust.factors {
            let best: f64 = (0..3)
                .map(|f| abs_cos(&w.column(f).to_vec(), &factor.loading))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(best > 1.0 - 1e-10);
        }
    }

    #[test]
    fn three_of_four_chains_still_carry_a_factor() {
        let (w, z) = base_chain();
        // Chain 2 is pure noise, uncorrelated with everything.
        let noise_w = array![
            [0.3, -0.2, 0.5],
            [-0.4, 0.6, 0.1],
            [0.2, 0.3, -0.7],
            [0.5, -0.1, 0.2],
            [-0.6, 0.4, 0.3],
            [0.1, -0.5, -0.2],
        ];
        let summary = summary_from(
            vec![w.clone(), w.clone(), noise_w.clone(), w.clone()],
            vec![z.clone(), z.clone(), z.clone(), z.clone()],
        );
        let robust = match_factors(&summary, 0.8).unwrap();
        assert_eq!(robust.factors.len(), 3);
        for factor in &robust.factors {
            assert_eq!(factor.support, 3);
        }

        // Same outcome when the noise chain is chain 0 (the cluster seeder).
        let summary = summary_from(
            vec![noise_w, w.clone(), w.clone(), w.clone()],
            vec![z.clone(), z.clone(), z.clone(), z],
        );
        let robust = match_factors(&summary, 0.8).unwrap();
        assert_eq!(robust.factors.len(), 3);
    }

    #[test]
    fn two_of_four_chains_is_not_a_majority() {
        let (w, z) = base_chain();
        let noise1 = array![
            [0.3, -0.2, 0.5],
            [-0.4, 0.6, 0.1],
            [0.2, 0.3, -0.7],
            [0.5, -0.1, 0.2],
            [-0.6, 0.4, 0.3],
            [0.1, -0.5, -0.2],
        ];
        let noise2 = array![
            [-0.1, 0.7, 0.2],
            [0.3, 0.2, -0.5],
            [-0.6, -0.3, 0.4],
            [0.2, 0.5, 0.6],
            [0.4, -0.6, 0.1],
            [-0.5, 0.1, -0.3],
        ];
        let summary = summary_from(
            vec![w.clone(), w, noise1, noise2],
            vec![z.clone(), z.clone(), z.clone(), z],
        );
        let robust = match_factors(&summary, 0.8).unwrap();
        assert!(robust.factors.is_empty(), "2 of 4 must not be robust");
    }

    #[test]
    fn contributions_reference_cases() {
        let l = labels(&[("a", 2), ("b", 2), ("c", 2)]);
        let uniform = factor_contributions(&[1.0, -1.0, 1.0, 1.0, -1.0, 1.0], &l).unwrap();
        for v in &uniform {
            assert_relative_eq!(*v, 1.0 / 3.0, epsilon = 1e-12);
        }
        let skewed = factor_contributions(&[3.0, -3.0, 1.0, 1.0, 0.0, 0.0], &l).unwrap();
        assert_relative_eq!(skewed[0], 0.75, epsilon = 1e-12);
        assert_relative_eq!(skewed[1], 0.25, epsilon = 1e-12);
        assert_relative_eq!(skewed[2], 0.0, epsilon = 1e-12);

        // Positive rescaling leaves contributions unchanged.
        let scaled: Vec<f64> = [3.0, -3.0, 1.0, 1.0, 0.0, 0.0].iter().map(|v| v * 7.3).collect();
        let again = factor_contributions(&scaled, &l).unwrap();
        for (a, b) in skewed.iter().zip(&again) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn anova_degenerate_and_zero_cases() {
        let l = labels(&[("a", 3), ("b", 3), ("c", 3)]);
        // Identical groups: no between-group variance at all.
        let scores = [0.0, 1.0, 2.0, 0.0, 1.0, 2.0, 0.0, 1.0, 2.0];
        let t = subgroup_tests(&scores, &l, TTestKind::Pooled).unwrap();
        assert_relative_eq!(t.f_statistic, 0.0, epsilon = 1e-12);
        assert_relative_eq!(t.f_p_value, 1.0, epsilon = 1e-12);
        // Identical pair: T = 0, p = 1.
        let pair = t.pairwise.iter().find(|p| p.group_a == "a" && p.group_b == "b").unwrap();
        assert_relative_eq!(pair.t_statistic, 0.0, epsilon = 1e-12);
        assert_relative_eq!(pair.p_value, 1.0, epsilon = 1e-12);

        // All-constant scores degenerate.
        let constant = [5.0; 9];
        assert!(matches!(
            subgroup_tests(&constant, &l, TTestKind::Pooled),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn covariance_explained_reference_cases() {
        // Rank-one noiseless data: single factor explains everything.
        let w = array![[1.0], [2.0]];
        let z = array![[1.0, -1.0, 0.5]];
        let x = w.dot(&z);
        let frac = covariance_explained(&w, &z, &x).unwrap();
        assert_relative_eq!(frac[0], 1.0, epsilon = 1e-12);

        // Orthogonal equal-norm contributions split evenly.
        let w = array![[1.0, 0.0], [0.0, 1.0]];
        let z = array![[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]];
        let x = w.dot(&z);
        let frac = covariance_explained(&w, &z, &x).unwrap();
        assert_relative_eq!(frac[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(frac[1], 0.5, epsilon = 1e-12);

        let zero = Array2::zeros((2, 4));
        assert!(covariance_explained(&w, &z, &zero).is_err());
    }

    #[test]
    fn projection_reference_cases() {
        let w = array![[1.0, 0.5], [0.0, 2.0]];
        let z = array![[1.0, 1.0, 1.0], [2.0, 0.0, -2.0]];
        let p0 = project_to_data(&w, &z, 0).unwrap();
        assert_eq!(p0, array![[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]]);

        // Projections sum to the full reconstruction.
        let p1 = project_to_data(&w, &z, 1).unwrap();
        let total = &p0 + &p1;
        assert_eq!(total, w.dot(&z));

        // Sign flips of both halves cancel.
        let mut wf = w.clone();
        let mut zf = z.clone();
        for j in 0..2 {
            wf[[j, 1]] = -wf[[j, 1]];
        }
        for i in 0..3 {
            zf[[1, i]] = -zf[[1, i]];
        }
        assert_eq!(project_to_data(&wf, &zf, 1).unwrap(), p1);

        assert!(project_to_data(&w, &z, 2).is_err());
    }

    #[test]
    fn summarize_is_linear_in_draws() {
        use crate::model::{HyperParams, ModelFamily, ModelSpec, ParamLayout};
        use crate::sampler::{ChainDraws, PosteriorDraws};

        let spec = ModelSpec::new(
            ModelFamily::Gfa,
            vec![2],
            3,
            1,
            HyperParams::default_for(&[2]),
        )
        .unwrap();
        let layout = ParamLayout::new(&spec).unwrap();
        let mut a = vec![0.0; layout.len];
        let mut b = vec![0.0; layout.len];
        a[0] = 2.0;
        b[0] = 4.0;
        a[layout.latents.start] = -1.0;
        b[layout.latents.start] = 3.0;

        let chain = |rows: Vec<Vec<f64>>| ChainDraws {
            draws: Array2::from_shape_vec((rows.len(), layout.len), rows.concat()).unwrap(),
            log_joint: vec![0.0; rows.len()],
            accept_mean: 1.0,
            step_size: 0.1,
            mass_diag: vec![1.0; layout.len],
            divergences: 0,
            warmup_divergences: 0,
            max_depth_hits: 0,
            seed: 0,
        };

        // A single constant draw summarizes to itself.
        let single = PosteriorDraws {
            chains: vec![chain(vec![a.clone()])],
            init_scores: vec![0.0],
            selected_init: 0,
        };
        let s = summarize_chains(&single, &layout).unwrap();
        assert_eq!(s.loadings[0][[0, 0]], 2.0);
        assert_eq!(s.latents[0][[0, 0]], -1.0);

        // Two half-chains average like their concatenation.
        let split = PosteriorDraws {
            chains: vec![chain(vec![a.clone()]), chain(vec![b.clone()])],
            init_scores: vec![0.0],
            selected_init: 0,
        };
        let joined = PosteriorDraws {
            chains: vec![chain(vec![a, b])],
            init_scores: vec![0.0],
            selected_init: 0,
        };
        let s_split = summarize_chains(&split, &layout).unwrap();
        let s_joined = summarize_chains(&joined, &layout).unwrap();
        let mean_w = 0.5 * (s_split.loadings[0][[0, 0]] + s_split.loadings[1][[0, 0]]);
        assert_relative_eq!(mean_w, s_joined.loadings[0][[0, 0]], epsilon = 1e-15);

        // Draws symmetric about zero average to zero.
        let sym = PosteriorDraws {
            chains: vec![chain(vec![
                {
                    let mut v = vec![0.0; layout.len];
                    v[0] = 1.5;
                    v
                },
                {
                    let mut v = vec![0.0; layout.len];
                    v[0] = -1.5;
                    v
                },
            ])],
            init_scores: vec![0.0],
            selected_init: 0,
        };
        let s = summarize_chains(&sym, &layout).unwrap();
        assert_eq!(s.loadings[0][[0, 0]], 0.0);
    }

    #[test]
    fn recovery_score_reference_cases() {
        use crate::synth::{generate, SyntheticScenario};
        let scenario = SyntheticScenario {
            subgroup_sizes: vec![10, 10, 10],
            view_dims: vec![9, 6],
            noise_sd: vec![1.0, 1.0],
            seed: 3,
            ..SyntheticScenario::default()
        };
        let (_, truth) = generate(&scenario).unwrap();
        let w = truth.stacked_loadings();
        let z = truth.latent_matrix();

        // Truth against itself, permuted and sign-flipped.
        let perm = [2usize, 0, 1];
        let signs = [-1.0, 1.0, -1.0];
        let factors: Vec<RobustFactor> = perm
            .iter()
            .zip(signs)
            .map(|(&old, sign)| RobustFactor {
                loading: w.column(old).iter().map(|v| sign * v).collect(),
                latent: z.row(old).iter().map(|v| sign * v).collect(),
                support: 4,
                mean_similarity: 1.0,
                covariance_explained: None,
                contributions: None,
                tests: None,
            })
            .collect();
        let robust = RobustFactorSet {
            factors,
            n_chains: 4,
            threshold: 0.8,
            view_dims: vec![9, 6],
            subgroups: None,
        };
        let report = recovery_score(&robust, &truth, 0.8).unwrap();
        assert_eq!(report.matched_count, 3);
        assert_eq!(report.spurious_robust, 0);
        assert_eq!(report.unmatched_true, 0);
        for m in &report.matches {
            assert!(m.similarity.unwrap() > 1.0 - 1e-10);
        }

        // Empty robust set: everything unmatched.
        let empty = RobustFactorSet {
            factors: vec![],
            n_chains: 4,
            threshold: 0.8,
            view_dims: vec![9, 6],
            subgroups: None,
        };
        let report = recovery_score(&empty, &truth, 0.8).unwrap();
        assert_eq!(report.unmatched_true, 3);
        assert_eq!(report.matched_count, 0);

        // Truth plus faint noise still matches nearly perfectly.
        let mut state = 77u64;
        let mut noise = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5) * 0.02
        };
        let factors: Vec<RobustFactor> = (0..3)
            .map(|f| {
                let col = w.column(f);
                let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                RobustFactor {
                    loading: col.iter().map(|v| v + norm * noise()).collect(),
                    latent: z.row(f).to_vec(),
                    support: 4,
                    mean_similarity: 1.0,
                    covariance_explained: None,
                    contributions: None,
                    tests: None,
                }
            })
            .collect();
        let noisy = RobustFactorSet {
            factors,
            n_chains: 4,
            threshold: 0.8,
            view_dims: vec![9, 6],
            subgroups: None,
        };
        let report = recovery_score(&noisy, &truth, 0.8).unwrap();
        for m in &report.matches {
            assert!(m.similarity.unwrap() > 0.99, "similarity {:?}", m.similarity);
        }
    }
}
