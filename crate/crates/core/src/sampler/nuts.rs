//! No-U-Turn trajectory construction with multinomial proposal sampling.
//!
//! Trajectories double multiplicatively until the generalized U-turn
//! criterion fires on the momentum sum, a leaf diverges, or the maximum tree
//! depth is reached. Within a subtree, proposals are drawn multinomially
//! with weight `exp(-energy error)`; when a finished subtree joins the
//! trajectory at top level, the proposal swaps with probability
//! `min(1, W_subtree / W_existing)`, biasing the draw away from the start.
//!
//! Phase points are shared through `Rc` inside a draw; a tree never crosses
//! a thread boundary.

use std::rc::Rc;

use rand::Rng;

use super::leapfrog::{leapfrog, PhasePoint};
use super::LogDensity;

/// Energy error beyond which a trajectory counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// Per-draw statistics.
#[derive(Debug, Clone, Copy, Default)]
pub struct DrawStats {
    pub depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    /// Coordinate that moved furthest in the step that diverged.
    pub divergence_coord: Option<usize>,
    pub max_depth_hit: bool,
    /// Mean Metropolis acceptance statistic over the trajectory's leaves.
    pub accept_prob: f64,
    pub energy: f64,
}

/// The sampler's persistent view of a chain: position plus cached target
/// evaluations.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub position: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

impl ChainState {
    pub fn new(position: Vec<f64>, target: &impl LogDensity) -> Self {
        let mut grad = vec![0.0; position.len()];
        let log_density = target.log_density_grad(&position, &mut grad);
        ChainState { position, log_density, grad }
    }
}

struct Tree {
    left: Rc<PhasePoint>,
    right: Rc<PhasePoint>,
    proposal: Rc<PhasePoint>,
    log_sum_weight: f64,
    momentum_sum: Vec<f64>,
    divergent: bool,
    divergence_coord: Option<usize>,
    turning: bool,
    n_leapfrog: usize,
    sum_accept: f64,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let max = a.max(b);
    max + ((a - max).exp() + (b - max).exp()).ln()
}

/// U-turn criterion on a momentum sum: the trajectory stops making progress
/// when the sum points against either end's velocity.
fn is_turning(momentum_sum: &[f64], left: &[f64], right: &[f64], mass_diag: &[f64]) -> bool {
    let mut dot_left = 0.0;
    let mut dot_right = 0.0;
    for i in 0..momentum_sum.len() {
        dot_left += momentum_sum[i] * left[i] / mass_diag[i];
        dot_right += momentum_sum[i] * right[i] / mass_diag[i];
    }
    if !dot_left.is_finite() || !dot_right.is_finite() {
        return true;
    }
    dot_left < 0.0 || dot_right < 0.0
}

struct TreeContext<'a, T: LogDensity> {
    target: &'a T,
    step_size: f64,
    mass_diag: &'a [f64],
    energy0: f64,
    start_position: &'a [f64],
}

fn build_leaf<T: LogDensity>(ctx: &TreeContext<'_, T>, from: &PhasePoint, direction: f64) -> Tree {
    let step = ctx.step_size * direction;
    let next = if step > 0.0 {
        leapfrog(from, step, ctx.mass_diag, ctx.target)
    } else {
        // Integrate backwards by flipping momentum, stepping, flipping back.
        let mut rev = from.clone();
        rev.momentum.iter_mut().for_each(|p| *p = -*p);
        let mut out = leapfrog(&rev, -step, ctx.mass_diag, ctx.target);
        out.momentum.iter_mut().for_each(|p| *p = -*p);
        out
    };

    let energy = next.energy(ctx.mass_diag);
    let energy_error = energy - ctx.energy0;
    let divergent =
        !next.is_finite() || !energy_error.is_finite() || energy_error > DIVERGENCE_THRESHOLD;
    let log_weight = if divergent { f64::NEG_INFINITY } else { -energy_error };
    let accept = if energy_error.is_finite() {
        (-energy_error).exp().min(1.0)
    } else {
        0.0
    };
    let divergence_coord = divergent.then(|| {
        let mut worst = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, (&q, &q0)) in next.position.iter().zip(ctx.start_position).enumerate() {
            let excursion = (q - q0).abs();
            let score = if excursion.is_nan() { f64::INFINITY } else { excursion };
            if score > best {
                best = score;
                worst = i;
            }
        }
        worst
    });

    let momentum_sum = next.momentum.clone();
    let point = Rc::new(next);
    Tree {
        left: Rc::clone(&point),
        right: Rc::clone(&point),
        proposal: point,
        log_sum_weight: log_weight,
        momentum_sum,
        divergent,
        divergence_coord,
        turning: false,
        n_leapfrog: 1,
        sum_accept: accept,
    }
}

fn build_tree<T: LogDensity>(
    ctx: &TreeContext<'_, T>,
    from: &PhasePoint,
    depth: usize,
    direction: f64,
    rng: &mut impl Rng,
) -> Tree {
    if depth == 0 {
        return build_leaf(ctx, from, direction);
    }

    let mut inner = build_tree(ctx, from, depth - 1, direction, rng);
    if inner.divergent || inner.turning {
        return inner;
    }

    let edge = if direction > 0.0 { Rc::clone(&inner.right) } else { Rc::clone(&inner.left) };
    let outer = build_tree(ctx, &edge, depth - 1, direction, rng);

    inner.n_leapfrog += outer.n_leapfrog;
    inner.sum_accept += outer.sum_accept;
    inner.divergent = inner.divergent || outer.divergent;
    inner.divergence_coord = inner.divergence_coord.or(outer.divergence_coord);

    if !outer.divergent {
        // Multinomial within-subtree selection.
        let total = log_sum_exp(inner.log_sum_weight, outer.log_sum_weight);
        let p_outer = (outer.log_sum_weight - total).exp();
        if rng.gen::<f64>() < p_outer {
            inner.proposal = Rc::clone(&outer.proposal);
        }
        inner.log_sum_weight = total;
    }

    // Junction momenta before merging, for the cross-subtree U-turn checks.
    let (inner_edge, outer_edge) = if direction > 0.0 {
        (Rc::clone(&inner.right), Rc::clone(&outer.left))
    } else {
        (Rc::clone(&inner.left), Rc::clone(&outer.right))
    };
    let rho_inner = inner.momentum_sum.clone();
    let rho_outer = outer.momentum_sum.clone();

    if direction > 0.0 {
        inner.right = outer.right;
    } else {
        inner.left = outer.left;
    }
    for (s, o) in inner.momentum_sum.iter_mut().zip(&rho_outer) {
        *s += o;
    }

    if !inner.divergent {
        let full = is_turning(
            &inner.momentum_sum,
            &inner.left.momentum,
            &inner.right.momentum,
            ctx.mass_diag,
        );
        // Cross checks at the junction between the two half-trees.
        let start_side =
            if direction > 0.0 { &inner.left.momentum } else { &inner.right.momentum };
        let far_side = if direction > 0.0 { &inner.right.momentum } else { &inner.left.momentum };
        let rho_a: Vec<f64> =
            rho_inner.iter().zip(&outer_edge.momentum).map(|(a, b)| a + b).collect();
        let cross_a = is_turning(&rho_a, start_side, &outer_edge.momentum, ctx.mass_diag);
        let rho_b: Vec<f64> =
            rho_outer.iter().zip(&inner_edge.momentum).map(|(a, b)| a + b).collect();
        let cross_b = is_turning(&rho_b, &inner_edge.momentum, far_side, ctx.mass_diag);
        inner.turning = inner.turning || outer.turning || full || cross_a || cross_b;
    }

    inner
}

/// One NUTS transition from `state`.
pub fn nuts_draw<T: LogDensity>(
    state: &ChainState,
    step_size: f64,
    mass_diag: &[f64],
    target: &T,
    max_tree_depth: usize,
    rng: &mut impl Rng,
) -> (ChainState, DrawStats) {
    debug_assert!(state.log_density.is_finite(), "chains must start at finite density");

    // Momentum refresh: p_i ~ N(0, mass_i).
    let momentum: Vec<f64> = mass_diag
        .iter()
        .map(|&m| m.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let start = Rc::new(PhasePoint {
        position: state.position.clone(),
        momentum,
        log_density: state.log_density,
        grad: state.grad.clone(),
    });
    let energy0 = start.energy(mass_diag);

    let ctx = TreeContext {
        target,
        step_size,
        mass_diag,
        energy0,
        start_position: &state.position,
    };

    let mut tree = Tree {
        left: Rc::clone(&start),
        right: Rc::clone(&start),
        proposal: Rc::clone(&start),
        log_sum_weight: 0.0,
        momentum_sum: start.momentum.clone(),
        divergent: false,
        divergence_coord: None,
        turning: false,
        n_leapfrog: 0,
        sum_accept: 0.0,
    };

    let mut stats = DrawStats { energy: energy0, ..Default::default() };

    for depth in 0..max_tree_depth {
        let direction = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let edge = if direction > 0.0 { Rc::clone(&tree.right) } else { Rc::clone(&tree.left) };
        let subtree = build_tree(&ctx, &edge, depth, direction, rng);

        stats.depth = depth + 1;
        tree.n_leapfrog += subtree.n_leapfrog;
        tree.sum_accept += subtree.sum_accept;

        if subtree.divergent {
            stats.divergent = true;
            stats.divergence_coord = subtree.divergence_coord;
            break;
        }

        // A subtree with an internal U-turn is not a valid continuation;
        // none of its states may be sampled.
        if subtree.turning {
            break;
        }

        // Progressive top-level swap, biased away from the start.
        let p_swap = (subtree.log_sum_weight - tree.log_sum_weight).exp().min(1.0);
        if rng.gen::<f64>() < p_swap {
            tree.proposal = Rc::clone(&subtree.proposal);
        }
        tree.log_sum_weight = log_sum_exp(tree.log_sum_weight, subtree.log_sum_weight);

        // Merge endpoints and momentum sum, then test the full trajectory.
        if direction > 0.0 {
            tree.right = subtree.right;
        } else {
            tree.left = subtree.left;
        }
        for (s, o) in tree.momentum_sum.iter_mut().zip(&subtree.momentum_sum) {
            *s += o;
        }
        let turning = is_turning(
            &tree.momentum_sum,
            &tree.left.momentum,
            &tree.right.momentum,
            mass_diag,
        );
        if turning {
            break;
        }
        if depth + 1 == max_tree_depth {
            stats.max_depth_hit = true;
        }
    }

    stats.n_leapfrog = tree.n_leapfrog;
    stats.accept_prob = if tree.n_leapfrog > 0 {
        tree.sum_accept / tree.n_leapfrog as f64
    } else {
        0.0
    };

    let next = ChainState {
        position: tree.proposal.position.clone(),
        log_density: tree.proposal.log_density,
        grad: tree.proposal.grad.clone(),
    };
    debug_assert!(next.log_density.is_finite());
    (next, stats)
}
