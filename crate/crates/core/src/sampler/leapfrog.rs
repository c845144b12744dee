//! Symplectic leapfrog integration of the Hamiltonian flow.

use super::LogDensity;

/// A point in phase space, with the cached log density and gradient at the
/// position.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

impl PhasePoint {
    /// Builds a phase point at `position`, evaluating the target there.
    pub fn new(position: Vec<f64>, momentum: Vec<f64>, target: &impl LogDensity) -> Self {
        let mut grad = vec![0.0; position.len()];
        let log_density = target.log_density_grad(&position, &mut grad);
        PhasePoint { position, momentum, log_density, grad }
    }

    /// Hamiltonian energy `-log p(q) + Σ p²/(2m)`.
    pub fn energy(&self, mass_diag: &[f64]) -> f64 {
        let kinetic: f64 = self
            .momentum
            .iter()
            .zip(mass_diag)
            .map(|(p, m)| 0.5 * p * p / m)
            .sum();
        -self.log_density + kinetic
    }

    pub fn is_finite(&self) -> bool {
        self.log_density.is_finite()
            && self.position.iter().all(|v| v.is_finite())
            && self.momentum.iter().all(|v| v.is_finite())
    }
}

/// One leapfrog step of size `step_size` under a diagonal mass matrix.
///
/// `mass_diag[i]` is the marginal momentum variance of coordinate `i`; the
/// adaptation phase estimates it as the inverse posterior variance. A
/// non-finite result is the caller's divergence signal, not an error here.
///
/// # Panics
/// On non-positive `step_size` or mass entries (caller bugs).
pub fn leapfrog(
    point: &PhasePoint,
    step_size: f64,
    mass_diag: &[f64],
    target: &impl LogDensity,
) -> PhasePoint {
    assert!(step_size > 0.0, "step size must be positive");
    debug_assert!(mass_diag.iter().all(|&m| m > 0.0), "mass entries must be positive");

    let dim = point.position.len();
    let mut momentum = point.momentum.clone();
    let mut position = point.position.clone();

    for i in 0..dim {
        momentum[i] += 0.5 * step_size * point.grad[i];
    }
    for i in 0..dim {
        position[i] += step_size * momentum[i] / mass_diag[i];
    }
    let mut grad = vec![0.0; dim];
    let log_density = target.log_density_grad(&position, &mut grad);
    for i in 0..dim {
        momentum[i] += 0.5 * step_size * grad[i];
    }

    PhasePoint { position, momentum, log_density, grad }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::test_targets::StdGaussian;

    #[test]
    fn energy_drift_stays_quadratic_in_step_size() {
        let target = StdGaussian { dim: 4 };
        let mass = vec![1.0; 4];
        let step = 0.01;
        let mut point = PhasePoint::new(
            vec![1.0, -0.5, 0.3, 2.0],
            vec![0.4, 1.1, -0.2, -0.7],
            &target,
        );
        let e0 = point.energy(&mass);
        let mut max_drift: f64 = 0.0;
        let mut max_state_sq: f64 = 0.0;
        for _ in 0..100 {
            point = leapfrog(&point, step, &mass, &target);
            let state_sq: f64 = point
                .position
                .iter()
                .chain(point.momentum.iter())
                .map(|v| v * v)
                .sum();
            max_state_sq = max_state_sq.max(state_sq);
            max_drift = max_drift.max((point.energy(&mass) - e0).abs());
        }
        assert!(
            max_drift <= 0.5 * step * step * max_state_sq,
            "drift {max_drift} exceeds quadratic bound"
        );
    }

    #[test]
    fn reversing_momentum_undoes_the_step() {
        let target = StdGaussian { dim: 3 };
        let mass = vec![0.5, 2.0, 1.0];
        let start = PhasePoint::new(vec![0.3, -0.9, 1.4], vec![1.0, 0.2, -0.6], &target);
        let mut forward = leapfrog(&start, 0.2, &mass, &target);
        forward.momentum.iter_mut().for_each(|p| *p = -*p);
        let mut back = leapfrog(&forward, 0.2, &mass, &target);
        back.momentum.iter_mut().for_each(|p| *p = -*p);
        for i in 0..3 {
            assert!((back.position[i] - start.position[i]).abs() < 1e-12);
            assert!((back.momentum[i] - start.momentum[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_point_at_zero_momentum_and_gradient() {
        // The mode of a Gaussian has zero gradient; with zero momentum the
        // position must not move.
        let target = StdGaussian { dim: 2 };
        let mass = vec![1.0, 1.0];
        let point = PhasePoint::new(vec![0.0, 0.0], vec![0.0, 0.0], &target);
        let next = leapfrog(&point, 0.3, &mass, &target);
        assert_eq!(next.position, vec![0.0, 0.0]);
        assert_eq!(next.momentum, vec![0.0, 0.0]);
    }

    #[test]
    fn volume_preservation_via_finite_difference_jacobian() {
        // The Jacobian determinant of one leapfrog step is exactly one;
        // check it numerically on a non-trivial anisotropic setup.
        let target = StdGaussian { dim: 3 };
        let mass = vec![0.7, 1.3, 2.1];
        let step = 0.15;
        let base = [0.4, -0.2, 0.9, 0.5, -1.1, 0.3]; // (q, p) flattened
        let h = 1e-6;

        let flow = |inp: &[f64]| -> Vec<f64> {
            let point = PhasePoint::new(inp[..3].to_vec(), inp[3..].to_vec(), &target);
            let out = leapfrog(&point, step, &mass, &target);
            out.position.iter().chain(out.momentum.iter()).copied().collect()
        };

        let mut jac = [[0.0f64; 6]; 6];
        for j in 0..6 {
            let mut plus = base.to_vec();
            let mut minus = base.to_vec();
            plus[j] += h;
            minus[j] -= h;
            let fp = flow(&plus);
            let fm = flow(&minus);
            for i in 0..6 {
                jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let det = determinant6(&jac);
        assert!((det - 1.0).abs() < 1e-8, "jacobian determinant {det}");
    }

    fn determinant6(a: &[[f64; 6]; 6]) -> f64 {
        let mut m = *a;
        let mut det = 1.0;
        for col in 0..6 {
            let pivot = (col..6)
                .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
                .unwrap();
            if m[pivot][col] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                m.swap(pivot, col);
                det = -det;
            }
            det *= m[col][col];
            for row in (col + 1)..6 {
                let f = m[row][col] / m[col][col];
                for k in col..6 {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
        det
    }
}
