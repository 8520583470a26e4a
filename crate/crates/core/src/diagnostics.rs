//! Energies, conservation audits, and the discrete dissipation laws
//! checked as exact identities.
//!
//! Everything here is read-only over states. The gradient norms are the
//! summation-by-parts Dirichlet energies from `field`; the hidden variable
//! p is recovered on demand as the zero-mean inverse Laplacian of psi, and
//! ||grad p||^2 is evaluated as -(psi, p).

use std::sync::Arc;

use crate::error::Result;
use crate::field::ScalarField;
use crate::real::Real;
use crate::spectral::SpectralPlan;
use crate::stepper::{ModelParams, SchemeConfig, SchemeKind, StepStats, StepperState};

/// Per-step diagnostics emitted by `stepper::run` and serialized by callers.
#[derive(Clone, Copy, Debug)]
pub struct EnergyRecord<T> {
    pub step: usize,
    pub t: T,
    /// Free energy of the original formulation (bulk density integrated).
    pub e_original: T,
    /// Quadratized energy, same baseline (includes -B |Omega|).
    pub e_transformed: T,
    /// The stepping scheme's own Lyapunov functional.
    pub e_discrete: T,
    /// Two sides of the scheme's exact per-step energy identity.
    pub dissipation_lhs: T,
    pub dissipation_rhs: T,
    /// |lhs - rhs| / max(1, |lhs|).
    pub identity_residual: T,
    /// |integral(phi) - mass0|.
    pub mass_drift: T,
    pub psi_mean: T,
    /// max |U - r(phi)|, the quadratization drift.
    pub aux_deviation: T,
    pub cg_iterations: usize,
}

/// Both sides of a dissipation identity plus the normalized residual.
#[derive(Clone, Copy, Debug)]
pub struct DissipationIdentity<T> {
    pub lhs: T,
    pub rhs: T,
    pub residual: T,
}

/// ||grad p||^2 for p = invlap(psi), via summation by parts: -(psi, p).
fn grad_sq_dual<T: Real>(psi: &ScalarField<T>, p: &ScalarField<T>) -> Result<T> {
    Ok(-psi.inner(p)?)
}

/// Energy of the original formulation:
/// eps^2/2 ||grad phi||^2 + int F(phi) + alpha/2 ||grad invlap psi||^2.
pub fn energy_original<T: Real>(
    params: &ModelParams<T>,
    phi: &ScalarField<T>,
    psi: &ScalarField<T>,
    plan: &Arc<SpectralPlan<T>>,
) -> Result<T> {
    let half = T::of(0.5);
    let grad = half * params.eps * params.eps * phi.dirichlet_energy();
    let bulk = phi.map(|x| params.potential.value(x)).integral();
    let inertial = if params.alpha == T::zero() {
        T::zero()
    } else {
        let p = plan.inv_laplacian(psi)?;
        half * params.alpha * grad_sq_dual(psi, &p)?
    };
    Ok(grad + bulk + inertial)
}

/// Quadratized energy with the -B |Omega| baseline shift:
/// eps^2/2 ||grad phi||^2 + ||U||^2 + alpha/2 ||grad p||^2 - B |Omega|.
pub fn energy_transformed<T: Real>(
    params: &ModelParams<T>,
    phi: &ScalarField<T>,
    aux: &ScalarField<T>,
    psi: &ScalarField<T>,
    plan: &Arc<SpectralPlan<T>>,
) -> Result<T> {
    let half = T::of(0.5);
    let grad = half * params.eps * params.eps * phi.dirichlet_energy();
    let usq = aux.inner(aux)?;
    let inertial = if params.alpha == T::zero() {
        T::zero()
    } else {
        let p = plan.inv_laplacian(psi)?;
        half * params.alpha * grad_sq_dual(psi, &p)?
    };
    let baseline = params.potential.shift() * phi.grid().measure();
    Ok(grad + usq + inertial - baseline)
}

/// The Crank-Nicolson scheme's discrete energy, a single-level functional.
pub fn energy_discrete_cn<T: Real>(
    params: &ModelParams<T>,
    state: &StepperState<T>,
    plan: &Arc<SpectralPlan<T>>,
) -> Result<T> {
    energy_transformed(params, &state.phi, &state.aux, &state.psi, plan)
}

/// The BDF2 scheme's discrete energy: each quadratic group enters as the
/// average of ||S^n||^2 and ||2S^n - S^{n-1}||^2 over the two stored levels.
pub fn energy_discrete_bdf<T: Real>(
    params: &ModelParams<T>,
    state: &StepperState<T>,
    plan: &Arc<SpectralPlan<T>>,
) -> Result<T> {
    let half = T::of(0.5);
    let two = T::of(2.0);
    let mix = |cur: &ScalarField<T>, prev: &ScalarField<T>| {
        ScalarField::lin_comb(&[(two, cur), (-T::one(), prev)])
    };

    let grad_avg = half * (state.phi.dirichlet_energy() + mix(&state.phi, &state.phi_prev).dirichlet_energy());
    let u_mix = mix(&state.aux, &state.aux_prev);
    let u_avg = half * (state.aux.inner(&state.aux)? + u_mix.inner(&u_mix)?);
    let inertial = if params.alpha == T::zero() {
        T::zero()
    } else {
        let p_cur = plan.inv_laplacian(&state.psi)?;
        let p_prev = plan.inv_laplacian(&state.psi_prev)?;
        let p_mix = mix(&p_cur, &p_prev);
        let psi_mix = mix(&state.psi, &state.psi_prev);
        half * (grad_sq_dual(&state.psi, &p_cur)? + grad_sq_dual(&psi_mix, &p_mix)?)
    };
    let baseline = params.potential.shift() * state.phi.grid().measure();
    Ok(half * params.eps * params.eps * grad_avg + u_avg + half * params.alpha * inertial
        - baseline)
}

/// Exact per-step energy identity of the Crank-Nicolson scheme:
/// E^{n+1} - E^n = -(dt/4)||grad(p^{n+1}+p^n)||^2 - (beta/dt)||dphi||^2.
pub fn dissipation_identity_cn<T: Real>(
    params: &ModelParams<T>,
    prev: &StepperState<T>,
    next: &StepperState<T>,
    dt: T,
    plan: &Arc<SpectralPlan<T>>,
) -> Result<DissipationIdentity<T>> {
    let lhs = energy_discrete_cn(params, next, plan)? - energy_discrete_cn(params, prev, plan)?;
    let psi_sum = &next.psi + &prev.psi;
    let grad_sum = if params.alpha == T::zero() && psi_sum.max_abs() == T::zero() {
        T::zero()
    } else {
        let p_sum = &plan.inv_laplacian(&next.psi)? + &plan.inv_laplacian(&prev.psi)?;
        grad_sq_dual(&psi_sum, &p_sum)?
    };
    let dphi = &next.phi - &prev.phi;
    let rhs = -(dt / T::of(4.0)) * grad_sum - (params.beta / dt) * dphi.inner(&dphi)?;
    let residual = (lhs - rhs).abs() / T::one().max(lhs.abs());
    Ok(DissipationIdentity { lhs, rhs, residual })
}

/// Exact per-step energy equality of the BDF2 scheme, *including* the
/// positive second-difference terms that the stability bound later drops:
///
///   sum over groups S in {phi, U, p} with weights {eps^2/2, 1, alpha/2} of
///   Q(S^{n+1}) - Q(S^n) + Q(2S^{n+1}-S^n) - Q(2S^n-S^{n-1}) + Q(d2 S)
///   = -2 dt ||grad p^{n+1}||^2 - (beta/(2dt)) ||d2 phi||^2
///
/// where Q is the group's quadratic form and d2 S = S^{n+1} - 2S^n + S^{n-1}.
pub fn dissipation_identity_bdf<T: Real>(
    params: &ModelParams<T>,
    prev: &StepperState<T>,
    next: &StepperState<T>,
    dt: T,
    plan: &Arc<SpectralPlan<T>>,
) -> Result<DissipationIdentity<T>> {
    let two = T::of(2.0);
    // levels: a = S^{n+1}, b = S^n, c = S^{n-1}
    let mix = |x: &ScalarField<T>, y: &ScalarField<T>| {
        ScalarField::lin_comb(&[(two, x), (-T::one(), y)])
    };
    let curv = |x: &ScalarField<T>, y: &ScalarField<T>, z: &ScalarField<T>| {
        ScalarField::lin_comb(&[(T::one(), x), (-two, y), (T::one(), z)])
    };
    let five = |a: &ScalarField<T>,
                b: &ScalarField<T>,
                c: &ScalarField<T>,
                q: &mut dyn FnMut(&ScalarField<T>) -> Result<T>|
     -> Result<T> {
        Ok(q(a)? - q(b)? + q(&mix(a, b))? - q(&mix(b, c))? + q(&curv(a, b, c))?)
    };

    let phi_group = five(
        &next.phi,
        &prev.phi,
        &prev.phi_prev,
        &mut |f| Ok(f.dirichlet_energy()),
    )?;
    let u_group = five(&next.aux, &prev.aux, &prev.aux_prev, &mut |f| f.inner(f))?;
    let p_group = if params.alpha == T::zero() {
        T::zero()
    } else {
        let pa = plan.inv_laplacian(&next.psi)?;
        let pb = plan.inv_laplacian(&prev.psi)?;
        let pc = plan.inv_laplacian(&prev.psi_prev)?;
        let g = |psi: &ScalarField<T>, p: &ScalarField<T>| grad_sq_dual(psi, p);
        g(&next.psi, &pa)? - g(&prev.psi, &pb)?
            + g(&mix(&next.psi, &prev.psi), &mix(&pa, &pb))?
            - g(&mix(&prev.psi, &prev.psi_prev), &mix(&pb, &pc))?
            + g(
                &curv(&next.psi, &prev.psi, &prev.psi_prev),
                &curv(&pa, &pb, &pc),
            )?
    };
    let half = T::of(0.5);
    let lhs = half * params.eps * params.eps * phi_group + u_group + half * params.alpha * p_group;

    let d2phi = ScalarField::lin_comb(&[
        (T::of(3.0), &next.phi),
        (T::of(-4.0), &prev.phi),
        (T::one(), &prev.phi_prev),
    ]);
    let grad_p_new = {
        let p = plan.inv_laplacian(&next.psi)?;
        grad_sq_dual(&next.psi, &p)?
    };
    let rhs = -two * dt * grad_p_new - (params.beta / (two * dt)) * d2phi.inner(&d2phi)?;
    let residual = (lhs - rhs).abs() / T::one().max(lhs.abs());
    Ok(DissipationIdentity { lhs, rhs, residual })
}

/// max |U^n - r(phi^n)|: how far the auxiliary has drifted from the
/// pointwise root it approximates at second order in dt.
pub fn aux_deviation<T: Real>(params: &ModelParams<T>, state: &StepperState<T>) -> T {
    let r = params.potential.u_init(&state.phi);
    (&state.aux - &r).max_abs()
}

/// Assemble the per-step record; `used` is the scheme that produced the
/// step (a BDF2 run's first step is CN2 and is checked with the CN2 law).
pub fn record_for_step<T: Real>(
    params: &ModelParams<T>,
    cfg: &SchemeConfig<T>,
    plan: &Arc<SpectralPlan<T>>,
    prev: &StepperState<T>,
    next: &StepperState<T>,
    used: SchemeKind,
    stats: &StepStats<T>,
) -> Result<EnergyRecord<T>> {
    let identity = match used {
        SchemeKind::Cn2 => dissipation_identity_cn(params, prev, next, cfg.dt, plan)?,
        SchemeKind::Bdf2 => dissipation_identity_bdf(params, prev, next, cfg.dt, plan)?,
    };
    let e_discrete = match cfg.scheme {
        SchemeKind::Cn2 => energy_discrete_cn(params, next, plan)?,
        SchemeKind::Bdf2 => energy_discrete_bdf(params, next, plan)?,
    };
    Ok(EnergyRecord {
        step: next.step,
        t: T::of(next.step as f64) * cfg.dt,
        e_original: energy_original(params, &next.phi, &next.psi, plan)?,
        e_transformed: energy_transformed(params, &next.phi, &next.aux, &next.psi, plan)?,
        e_discrete,
        dissipation_lhs: identity.lhs,
        dissipation_rhs: identity.rhs,
        identity_residual: identity.residual,
        mass_drift: (next.phi.integral() - next.mass0).abs(),
        psi_mean: next.psi.mean(),
        aux_deviation: aux_deviation(params, next),
        cg_iterations: stats.cg_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryKind, GridSpec};
    use crate::potential::PotentialSpec;
    use crate::stepper::init_state;

    fn setup() -> (
        ModelParams<f64>,
        Arc<SpectralPlan<f64>>,
        StepperState<f64>,
    ) {
        let grid =
            Arc::new(GridSpec::new(&[16, 16], &[1.0, 1.0], BoundaryKind::Periodic).unwrap());
        let params =
            ModelParams::new(0.1, 0.5, 0.5, PotentialSpec::double_well_default()).unwrap();
        let plan = Arc::new(SpectralPlan::new(&grid));
        let phi0 = ScalarField::constant(&grid, 0.5);
        let state = init_state(&params, &phi0).unwrap();
        (params, plan, state)
    }

    #[test]
    fn uniform_state_energies() {
        let (params, plan, state) = setup();
        // E = F(0.5) |Omega| = 0.0625 for the uniform half state
        let e = energy_original(&params, &state.phi, &state.psi, &plan).unwrap();
        assert!((e - 0.0625).abs() < 1e-14);
        let ec = energy_discrete_cn(&params, &state, &plan).unwrap();
        assert!((ec - 0.0625).abs() < 1e-14);
        // pure phases sit at the global minimum 0
        let zero = ScalarField::constant(state.phi.grid(), 0.0);
        let psi0 = ScalarField::zeros(state.phi.grid());
        let e0 = energy_original(&params, &zero, &psi0, &plan).unwrap();
        assert!(e0.abs() < 1e-14);
    }

    #[test]
    fn transformed_equals_original_when_aux_is_root() {
        use rand::prelude::*;
        let (params, plan, state) = setup();
        let grid = state.phi.grid();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let phi = ScalarField::from_fn(grid, |_| rng.gen_range(-0.2..1.2));
        let aux = params.potential.u_init(&phi);
        let psi = ScalarField::from_fn(grid, |_| rng.gen_range(-1.0..1.0)).project_zero_mean();
        let eo = energy_original(&params, &phi, &psi, &plan).unwrap();
        let et = energy_transformed(&params, &phi, &aux, &psi, &plan).unwrap();
        assert!((eo - et).abs() <= 1e-12 * eo.abs().max(1.0));
    }

    #[test]
    fn bdf_energy_on_steady_history_matches_cn_energy() {
        let (params, plan, state) = setup();
        let e_cn = energy_discrete_cn(&params, &state, &plan).unwrap();
        let e_bdf = energy_discrete_bdf(&params, &state, &plan).unwrap();
        assert!((e_cn - e_bdf).abs() <= 1e-13 * e_cn.abs().max(1.0));
    }

    #[test]
    fn bdf_energy_double_entry() {
        // independent re-evaluation of the two-level formula on a random state
        use rand::prelude::*;
        let (params, plan, state) = setup();
        let grid = state.phi.grid().clone();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let mut s = state;
        s.phi = ScalarField::from_fn(&grid, |_| rng.gen_range(0.0..1.0));
        s.phi_prev = ScalarField::from_fn(&grid, |_| rng.gen_range(0.0..1.0));
        s.aux = ScalarField::from_fn(&grid, |_| rng.gen_range(-0.3..0.3));
        s.aux_prev = ScalarField::from_fn(&grid, |_| rng.gen_range(-0.3..0.3));
        s.psi = ScalarField::from_fn(&grid, |_| rng.gen_range(-1.0..1.0)).project_zero_mean();
        s.psi_prev =
            ScalarField::from_fn(&grid, |_| rng.gen_range(-1.0..1.0)).project_zero_mean();

        let got = energy_discrete_bdf(&params, &s, &plan).unwrap();

        // long-hand: (eps^2/2) (||grad phi||^2 + ||grad(2phi - phi_prev)||^2)/2 + ...
        let mixed = |a: &ScalarField<f64>, b: &ScalarField<f64>| {
            ScalarField::lin_comb(&[(2.0, a), (-1.0, b)])
        };
        let e2 = params.eps * params.eps;
        let term_phi =
            0.5 * e2 * 0.5 * (s.phi.dirichlet_energy() + mixed(&s.phi, &s.phi_prev).dirichlet_energy());
        let umix = mixed(&s.aux, &s.aux_prev);
        let term_u = 0.5 * (s.aux.inner(&s.aux).unwrap() + umix.inner(&umix).unwrap());
        let p = plan.inv_laplacian(&s.psi).unwrap();
        let p_prev = plan.inv_laplacian(&s.psi_prev).unwrap();
        let pmix = mixed(&p, &p_prev);
        let psimix = mixed(&s.psi, &s.psi_prev);
        let term_p = 0.5
            * params.alpha
            * 0.5
            * (-s.psi.inner(&p).unwrap() - psimix.inner(&pmix).unwrap());
        let want = term_phi + term_u + term_p
            - params.potential.shift() * s.phi.grid().measure();
        assert!(
            (got - want).abs() <= 1e-13 * want.abs().max(1.0),
            "{got} vs {want}"
        );
    }

    #[test]
    fn steady_state_identities_vanish() {
        let (params, plan, state) = setup();
        let id = dissipation_identity_cn(&params, &state, &state, 0.1, &plan).unwrap();
        assert!(id.lhs.abs() < 1e-13);
        assert!(id.rhs.abs() < 1e-13);
        assert!(id.residual < 1e-12);
        let id = dissipation_identity_bdf(&params, &state, &state, 0.1, &plan).unwrap();
        assert!(id.residual < 1e-12);
    }

    #[test]
    fn bdf_scalar_expansion_identity() {
        // (3a-4b+c, 2a) = a^2 - b^2 + (2a-b)^2 - (2b-c)^2 + (a-2b+c)^2
        let (a, b, c) = (1.0_f64, 2.0, 3.0);
        let lhs = (3.0 * a - 4.0 * b + c) * 2.0 * a;
        let rhs = a * a - b * b + (2.0 * a - b).powi(2) - (2.0 * b - c).powi(2)
            + (a - 2.0 * b + c).powi(2);
        assert_eq!(lhs, -4.0);
        assert_eq!(rhs, -4.0);
    }

    #[test]
    fn aux_deviation_zero_at_init() {
        let (params, _, state) = setup();
        assert_eq!(aux_deviation(&params, &state), 0.0);
    }
}
