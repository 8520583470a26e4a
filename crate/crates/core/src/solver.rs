//! The per-step SPD operator and its matrix-free preconditioned CG solve.
//!
//! On the zero-mean subspace the operator reads
//!
//!   A x = -alpha_hat * invlap(x) - (eps^2 c1) * lap(x) + hsq * x + visc * x
//!
//! All coefficients but `hsq` are constant, so the spectrally inverted
//! constant-coefficient symbol (with hsq replaced by its mean) serves as the
//! preconditioner.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::real::Real;
use crate::spectral::{SpectralPlan, MEAN_TOL};

/// Symmetric positive definite operator of the per-step linear system.
pub struct SpdOperator<T: Real> {
    plan: Arc<SpectralPlan<T>>,
    alpha_hat: T,
    stiff_coeff: T,
    visc_coeff: T,
    hsq: ScalarField<T>,
    hsq_mean: T,
}

/// Outcome of a CG solve.
pub struct CgSolution<T: Real> {
    pub x: ScalarField<T>,
    pub iterations: usize,
    /// Final true residual norm ||A x - b||.
    pub residual: T,
    /// sqrt((r, M^-1 r)) per iteration, starting with iteration 0.
    pub precond_residuals: Vec<T>,
}

impl<T: Real> SpdOperator<T> {
    /// `c1` is the stiffness weight in front of eps^2: 1/2 for the averaged
    /// (Crank-Nicolson) form, 1 for the fully weighted (BDF2) form.
    pub fn new(
        plan: &Arc<SpectralPlan<T>>,
        alpha_hat: T,
        eps: T,
        c1: T,
        visc_coeff: T,
        hsq: ScalarField<T>,
    ) -> Result<Self> {
        if !(alpha_hat > T::zero()) {
            return Err(Error::InvalidInput {
                what: "SpdOperator",
                why: format!("alpha_hat must be positive, got {alpha_hat}"),
            });
        }
        if !(visc_coeff >= T::zero()) {
            return Err(Error::InvalidInput {
                what: "SpdOperator",
                why: format!("visc_coeff must be nonnegative, got {visc_coeff}"),
            });
        }
        if hsq.data().iter().any(|&v| v < T::zero() || !v.is_finite()) {
            return Err(Error::InvalidInput {
                what: "SpdOperator",
                why: "hsq field must be finite and nonnegative".into(),
            });
        }
        if **hsq.grid() != **plan.grid() {
            return Err(Error::GridMismatch("SpdOperator hsq vs plan".into()));
        }
        let hsq_mean = hsq.mean();
        Ok(SpdOperator {
            plan: Arc::clone(plan),
            alpha_hat,
            stiff_coeff: eps * eps * c1,
            visc_coeff,
            hsq,
            hsq_mean,
        })
    }

    pub fn plan(&self) -> &Arc<SpectralPlan<T>> {
        &self.plan
    }

    /// Apply the operator to a zero-mean field.
    pub fn apply(&self, x: &ScalarField<T>) -> Result<ScalarField<T>> {
        let inv = self.plan.inv_laplacian(x)?;
        let lap = x.laplacian();
        let mut out = inv.scaled(-self.alpha_hat);
        out.axpy(-self.stiff_coeff, &lap);
        for ((o, &xi), &hi) in out
            .data_mut()
            .iter_mut()
            .zip(x.data())
            .zip(self.hsq.data())
        {
            *o += (hi + self.visc_coeff) * xi;
        }
        Ok(out.project_zero_mean())
    }

    /// The four coercivity contributions of (A x, x), separately:
    /// alpha_hat ||grad invlap x||^2, stiffness, hsq and viscosity terms.
    pub fn quadratic_form_parts(&self, x: &ScalarField<T>) -> Result<[T; 4]> {
        let inv = self.plan.inv_laplacian(x)?;
        let grad_dual = -inv.inner(x)?;
        let stiff = x.dirichlet_energy();
        let hterm = x.zip_map(&self.hsq, |v, h| h * v).inner(x)?;
        let visc = x.inner(x)?;
        Ok([
            self.alpha_hat * grad_dual,
            self.stiff_coeff * stiff,
            hterm,
            self.visc_coeff * visc,
        ])
    }

    /// Constant-coefficient symbol inverse; exact when hsq is constant.
    pub fn precondition(&self, r: &ScalarField<T>) -> Result<ScalarField<T>> {
        let alpha_hat = self.alpha_hat;
        let stiff = self.stiff_coeff;
        let shift = self.hsq_mean + self.visc_coeff;
        self.plan.apply_symbol(r, move |lam| {
            if lam == T::zero() {
                T::zero()
            } else {
                let mag = -lam;
                T::one() / (alpha_hat / mag + stiff * mag + shift)
            }
        })
    }

    /// Preconditioned conjugate gradients on the zero-mean subspace.
    ///
    /// Converges when ||A x - b|| <= tol * ||b||; the returned residual is
    /// recomputed from scratch, not the recursion value.
    pub fn cg_solve(&self, b: &ScalarField<T>, tol: T, maxit: usize) -> Result<CgSolution<T>> {
        if !(tol > T::zero()) {
            return Err(Error::InvalidInput {
                what: "cg_solve",
                why: format!("tol must be positive, got {tol}"),
            });
        }
        let b_mean = b.mean();
        let b_tol = T::of(MEAN_TOL) * T::one().max(b.max_abs());
        if b_mean.abs() > b_tol {
            return Err(Error::NonZeroMean {
                what: "cg_solve rhs",
                mean: b_mean.as_f64(),
                tol: b_tol.as_f64(),
            });
        }

        let b_norm = b.norm_l2();
        if b_norm == T::zero() {
            return Ok(CgSolution {
                x: ScalarField::zeros(b.grid()),
                iterations: 0,
                residual: T::zero(),
                precond_residuals: Vec::new(),
            });
        }
        let target = tol * b_norm;

        let mut x = ScalarField::zeros(b.grid());
        let mut r = b.clone();
        let mut history = Vec::new();
        let mut iterations = 0usize;

        // One residual replacement pass guards against recursion drift at
        // very tight tolerances.
        for sweep in 0..2 {
            let mut z = self.precondition(&r)?;
            let mut p = z.clone();
            let mut rz = r.inner(&z)?;
            history.push(rz.max(T::zero()).sqrt());
            let mut r_norm = r.norm_l2();
            while r_norm > target && iterations < maxit {
                let q = self.apply(&p)?;
                let pq = p.inner(&q)?;
                if !(pq > T::zero()) {
                    return Err(Error::SolverFailure {
                        iterations,
                        residual: r_norm.as_f64(),
                        target: target.as_f64(),
                    });
                }
                let alpha = rz / pq;
                x.axpy(alpha, &p);
                r.axpy(-alpha, &q);
                iterations += 1;
                r_norm = r.norm_l2();
                if r_norm <= target {
                    break;
                }
                z = self.precondition(&r)?;
                let rz_new = r.inner(&z)?;
                history.push(rz_new.max(T::zero()).sqrt());
                let beta = rz_new / rz;
                rz = rz_new;
                let mut p_next = z.clone();
                p_next.axpy(beta, &p);
                p = p_next;
            }

            x = x.project_zero_mean();
            let true_r = {
                let ax = self.apply(&x)?;
                (b - &ax).norm_l2()
            };
            if true_r <= target {
                return Ok(CgSolution {
                    x,
                    iterations,
                    residual: true_r,
                    precond_residuals: history,
                });
            }
            if iterations >= maxit || sweep == 1 {
                return Err(Error::SolverFailure {
                    iterations,
                    residual: true_r.as_f64(),
                    target: target.as_f64(),
                });
            }
            let ax = self.apply(&x)?;
            r = b - &ax;
        }
        unreachable!("loop returns")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryKind, GridSpec};
    use rand::prelude::*;

    fn setup(
        bc: BoundaryKind,
        hsq_const: Option<f64>,
    ) -> (Arc<SpectralPlan<f64>>, SpdOperator<f64>) {
        let grid = Arc::new(GridSpec::new(&[24, 24], &[1.0, 1.0], bc).unwrap());
        let plan = Arc::new(SpectralPlan::new(&grid));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let hsq = match hsq_const {
            Some(c) => ScalarField::constant(&grid, c),
            None => ScalarField::from_fn(&grid, |_| rng.gen_range(0.0..1.5)),
        };
        let op = SpdOperator::new(&plan, 6.0, 0.01, 0.5, 1.0, hsq).unwrap();
        (plan, op)
    }

    fn random_zero_mean(plan: &SpectralPlan<f64>, seed: u64) -> ScalarField<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ScalarField::from_fn(plan.grid(), |_| rng.gen_range(-1.0..1.0)).project_zero_mean()
    }

    #[test]
    fn apply_zero_is_zero() {
        let (plan, op) = setup(BoundaryKind::Periodic, None);
        let z = ScalarField::zeros(plan.grid());
        assert_eq!(op.apply(&z).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn operator_symmetric_and_coercive() {
        for bc in [BoundaryKind::Periodic, BoundaryKind::NoFlux] {
            let (plan, op) = setup(bc, None);
            for seed in 0..5 {
                let x1 = random_zero_mean(&plan, seed);
                let x2 = random_zero_mean(&plan, seed + 100);
                let a12 = op.apply(&x1).unwrap().inner(&x2).unwrap();
                let a21 = x1.inner(&op.apply(&x2).unwrap()).unwrap();
                let bound = 1e-12 * x1.norm_l2() * x2.norm_l2();
                assert!((a12 - a21).abs() <= bound, "{bc:?}: {}", (a12 - a21).abs());

                let parts = op.quadratic_form_parts(&x1).unwrap();
                let total = op.apply(&x1).unwrap().inner(&x1).unwrap();
                let sum: f64 = parts.iter().sum();
                assert!(parts[0] > 0.0);
                assert!(total > 0.0);
                assert!((total - sum).abs() <= 1e-10 * total.abs().max(1.0));
            }
        }
    }

    #[test]
    fn preconditioner_symmetric_positive() {
        for bc in [BoundaryKind::Periodic, BoundaryKind::NoFlux] {
            let (plan, op) = setup(bc, None);
            let x1 = random_zero_mean(&plan, 1);
            let x2 = random_zero_mean(&plan, 2);
            let m12 = op.precondition(&x1).unwrap().inner(&x2).unwrap();
            let m21 = x1.inner(&op.precondition(&x2).unwrap()).unwrap();
            assert!((m12 - m21).abs() <= 1e-12 * x1.norm_l2() * x2.norm_l2());
            let mxx = op.precondition(&x1).unwrap().inner(&x1).unwrap();
            assert!(mxx > 0.0);
        }
    }

    #[test]
    fn cg_recovers_known_solution() {
        for bc in [BoundaryKind::Periodic, BoundaryKind::NoFlux] {
            let (plan, op) = setup(bc, None);
            let x_known = random_zero_mean(&plan, 9);
            let b = op.apply(&x_known).unwrap();
            let sol = op.cg_solve(&b, 1e-10, 500).unwrap();
            let err = (&sol.x - &x_known).norm_l2();
            assert!(err <= 1e-6 * x_known.norm_l2(), "{bc:?}: {err:e}");
            assert!(sol.residual <= 1e-10 * b.norm_l2());
            assert!(sol.x.mean().abs() <= 1e-12 * sol.x.norm_l2().max(1.0));
        }
    }

    #[test]
    fn cg_zero_rhs_zero_iterations() {
        let (plan, op) = setup(BoundaryKind::Periodic, None);
        let b = ScalarField::zeros(plan.grid());
        let sol = op.cg_solve(&b, 1e-10, 500).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.x.max_abs(), 0.0);
    }

    #[test]
    fn cg_exact_preconditioner_converges_immediately() {
        let (plan, op) = setup(BoundaryKind::Periodic, Some(0.8));
        let b = random_zero_mean(&plan, 5);
        let sol = op.cg_solve(&b, 1e-10, 500).unwrap();
        assert!(
            sol.iterations <= 3,
            "expected near-exact preconditioner, took {}",
            sol.iterations
        );
    }

    #[test]
    fn cg_monotone_preconditioned_residuals() {
        for bc in [BoundaryKind::Periodic, BoundaryKind::NoFlux] {
            let (plan, op) = setup(bc, None);
            let b = random_zero_mean(&plan, 21);
            let sol = op.cg_solve(&b, 1e-12, 500).unwrap();
            for w in sol.precond_residuals.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-12) + 1e-12 * sol.precond_residuals[0],
                    "{bc:?}: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn cg_rejects_nonzero_mean_rhs() {
        let (plan, op) = setup(BoundaryKind::Periodic, None);
        let b = ScalarField::constant(plan.grid(), 1.0);
        assert!(matches!(
            op.cg_solve(&b, 1e-10, 100),
            Err(Error::NonZeroMean { .. })
        ));
    }

    #[test]
    fn cg_reports_maxit_failure() {
        let (plan, op) = setup(BoundaryKind::Periodic, None);
        let b = random_zero_mean(&plan, 33);
        match op.cg_solve(&b, 1e-14, 1) {
            Err(Error::SolverFailure {
                iterations,
                residual,
                ..
            }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 0.0);
            }
            Err(e) => panic!("unexpected error: {e}"),
            Ok(_) => panic!("expected solver failure"),
        }
    }
}
