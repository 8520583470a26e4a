//! The two time-marching schemes, reduced to one SPD solve per step.
//!
//! Both schemes eliminate the auxiliary unknowns pointwise, pin the mean of
//! the new phase field by mass conservation, solve for the zero-mean part
//! with preconditioned CG, and recover mu, psi and U afterwards. The
//! reductions are derived directly from the coupled update equations and a
//! post-step self-check certifies them against the original form.

use std::sync::Arc;

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::potential::PotentialSpec;
use crate::real::Real;
use crate::solver::SpdOperator;
use crate::spectral::SpectralPlan;

/// Physical constants of the model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams<T> {
    /// Interface width.
    pub eps: T,
    /// Inertial relaxation coefficient (the phi_tt weight).
    pub alpha: T,
    /// Viscosity (the phi_t weight inside the chemical potential).
    pub beta: T,
    pub potential: PotentialSpec<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn new(eps: T, alpha: T, beta: T, potential: PotentialSpec<T>) -> Result<Self> {
        if !(eps > T::zero()) {
            return Err(Error::InvalidInput {
                what: "ModelParams",
                why: format!("eps must be positive, got {eps}"),
            });
        }
        if !(alpha >= T::zero()) || !(beta >= T::zero()) {
            return Err(Error::InvalidInput {
                what: "ModelParams",
                why: format!("alpha and beta must be nonnegative, got {alpha}, {beta}"),
            });
        }
        Ok(ModelParams {
            eps,
            alpha,
            beta,
            potential,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    /// Second-order Crank-Nicolson variant.
    Cn2,
    /// Second-order backward differentiation variant.
    Bdf2,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Cn2 => "cn2",
            SchemeKind::Bdf2 => "bdf2",
        }
    }
}

/// Time-stepping configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig<T> {
    pub scheme: SchemeKind,
    pub dt: T,
    pub cg_tol: T,
    pub cg_maxit: usize,
    /// Post-step verification of the scheme equations (one extra operator
    /// application); on by default.
    pub check_residuals: bool,
}

impl<T: Real> SchemeConfig<T> {
    pub fn new(scheme: SchemeKind, dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidInput {
                what: "SchemeConfig",
                why: format!("dt must be positive, got {dt}"),
            });
        }
        Ok(SchemeConfig {
            scheme,
            dt,
            cg_tol: T::of(1e-10),
            cg_maxit: 500,
            check_residuals: true,
        })
    }

    pub fn with_cg(mut self, tol: T, maxit: usize) -> Self {
        self.cg_tol = tol;
        self.cg_maxit = maxit;
        self
    }

    pub fn with_residual_checks(mut self, on: bool) -> Self {
        self.check_residuals = on;
        self
    }
}

/// Sliding window of the last two time levels plus conserved bookkeeping.
#[derive(Clone, Debug)]
pub struct StepperState<T: Real> {
    pub phi: ScalarField<T>,
    pub phi_prev: ScalarField<T>,
    pub psi: ScalarField<T>,
    pub psi_prev: ScalarField<T>,
    pub aux: ScalarField<T>,
    pub aux_prev: ScalarField<T>,
    pub step: usize,
    /// Integral of phi at t = 0, conserved by both schemes.
    pub mass0: T,
}

/// Per-step solver bookkeeping.
#[derive(Clone, Copy, Debug)]
pub struct StepStats<T> {
    pub cg_iterations: usize,
    pub cg_residual: T,
    /// Largest normalized residual of the scheme equations, when checked.
    pub scheme_residual: Option<T>,
}

/// State at t = 0: psi = 0 pointwise, U from the potential's root branch,
/// history slots copying the time-0 values.
pub fn init_state<T: Real>(
    params: &ModelParams<T>,
    phi0: &ScalarField<T>,
) -> Result<StepperState<T>> {
    if !phi0.all_finite() {
        return Err(Error::NonFinite("init_state phi0"));
    }
    let psi = ScalarField::zeros(phi0.grid());
    let aux = params.potential.u_init(phi0);
    let mass0 = phi0.integral();
    Ok(StepperState {
        phi: phi0.clone(),
        phi_prev: phi0.clone(),
        psi: psi.clone(),
        psi_prev: psi,
        aux: aux.clone(),
        aux_prev: aux,
        step: 0,
        mass0,
    })
}

/// Second-order extrapolation of phi to the scheme's evaluation time:
/// 3/2 phi^n - 1/2 phi^{n-1} (midpoint) or 2 phi^n - phi^{n-1} (endpoint).
pub fn extrapolate<T: Real>(state: &StepperState<T>, scheme: SchemeKind) -> ScalarField<T> {
    match scheme {
        SchemeKind::Cn2 => ScalarField::lin_comb(&[
            (T::of(1.5), &state.phi),
            (T::of(-0.5), &state.phi_prev),
        ]),
        SchemeKind::Bdf2 => ScalarField::lin_comb(&[
            (T::of(2.0), &state.phi),
            (T::of(-1.0), &state.phi_prev),
        ]),
    }
}

/// (alpha/dt + 1/2) * (2/dt)
pub fn cn_alpha_hat<T: Real>(alpha: T, dt: T) -> T {
    (alpha / dt + T::of(0.5)) * (T::of(2.0) / dt)
}

/// (3 alpha/(2 dt) + 1) * (3/(2 dt))
pub fn bdf_alpha_hat<T: Real>(alpha: T, dt: T) -> T {
    let c = T::of(1.5) / dt;
    (alpha * c + T::one()) * c
}

fn require_scheme<T: Real>(cfg: &SchemeConfig<T>, want: SchemeKind) -> Result<()> {
    if cfg.scheme == want {
        Ok(())
    } else {
        Err(Error::InvalidInput {
            what: "SchemeConfig",
            why: format!("step requires {} config", want.name()),
        })
    }
}

/// One Crank-Nicolson step.
pub fn step_cn<T: Real>(
    state: &StepperState<T>,
    params: &ModelParams<T>,
    cfg: &SchemeConfig<T>,
    plan: &Arc<SpectralPlan<T>>,
) -> Result<(StepperState<T>, StepStats<T>)> {
    require_scheme(cfg, SchemeKind::Cn2)?;
    let dt = cfg.dt;
    let pot = &params.potential;
    let half = T::of(0.5);
    let eps = params.eps;
    let beta_dt = params.beta / dt;
    let two_dt = T::of(2.0) / dt;
    let a_dt = params.alpha / dt;
    let alpha_hat = cn_alpha_hat(params.alpha, dt);
    let v_phi = state.mass0 / state.phi.grid().measure();

    let phi_star = extrapolate(state, SchemeKind::Cn2);
    let h_star = phi_star.map(|x| pot.quad_coeff(x));

    // U^{n+1} = H*/2 phi^{n+1} + g1,  psi^{n+1} = (2/dt) phi^{n+1} + g2
    let g1 = &state.aux - &h_star.mul_field(&state.phi).scaled(half);
    let g2 = ScalarField::lin_comb(&[(-two_dt, &state.phi), (-T::one(), &state.psi)]);
    let g3 = ScalarField::lin_comb(&[(-(a_dt + half), &g2), (a_dt - half, &state.psi)]);

    let lap_phi = state.phi.laplacian();
    let mut g4 = lap_phi.scaled(-half * eps * eps);
    g4.axpy(half, &h_star.mul_field(&(&g1 + &state.aux)));
    g4.axpy(-beta_dt, &state.phi);

    let hsq = h_star.map(|h| T::of(0.25) * h * h);

    // Shift the system onto the zero-mean subspace: the mean of phi^{n+1}
    // is pinned at V_phi by mass conservation.
    let g_rhs = g4.zip_map(&hsq, |g, h| g + (h + beta_dt) * v_phi);
    let f_rhs = g3.shifted(-alpha_hat * v_phi).project_zero_mean();
    let inv_f = plan.inv_laplacian(&f_rhs)?;
    let b = ScalarField::lin_comb(&[(-T::one(), &inv_f), (-T::one(), &g_rhs)]).project_zero_mean();

    let op = SpdOperator::new(plan, alpha_hat, eps, half, beta_dt, hsq.clone())?;
    let sol = op.cg_solve(&b, cfg.cg_tol, cfg.cg_maxit)?;

    let phi_new = sol.x.shifted(v_phi);
    let mut mu = phi_new.laplacian().scaled(-half * eps * eps);
    for ((m, &p), (&h, &g)) in mu
        .data_mut()
        .iter_mut()
        .zip(phi_new.data())
        .zip(hsq.data().iter().zip(g4.data()))
    {
        *m += (h + beta_dt) * p + g;
    }
    let psi_new = {
        let mut v = phi_new.scaled(two_dt);
        v.axpy(T::one(), &g2);
        v
    };
    let aux_new = {
        let mut v = h_star.mul_field(&phi_new).scaled(half);
        v.axpy(T::one(), &g1);
        v
    };

    let scheme_residual = if cfg.check_residuals {
        Some(check_cn_step(
            state, params, cfg, plan, &phi_new, &psi_new, &aux_new, &mu, &g3, &h_star, &b,
        )?)
    } else {
        None
    };

    let new_state = StepperState {
        phi_prev: state.phi.clone(),
        psi_prev: state.psi.clone(),
        aux_prev: state.aux.clone(),
        phi: phi_new,
        psi: psi_new,
        aux: aux_new,
        step: state.step + 1,
        mass0: state.mass0,
    };
    let stats = StepStats {
        cg_iterations: sol.iterations,
        cg_residual: sol.residual,
        scheme_residual,
    };
    Ok((new_state, stats))
}

/// Verify the four Crank-Nicolson update equations on the computed fields.
///
/// The coupled flux equation is certified in the inverse-Laplacian (dual)
/// norm; measuring its raw L2 residual would scale the CG error by the
/// largest stencil eigenvalue and say nothing about the algebra.
#[allow(clippy::too_many_arguments)]
fn check_cn_step<T: Real>(
    state: &StepperState<T>,
    params: &ModelParams<T>,
    cfg: &SchemeConfig<T>,
    plan: &Arc<SpectralPlan<T>>,
    phi_new: &ScalarField<T>,
    psi_new: &ScalarField<T>,
    aux_new: &ScalarField<T>,
    mu: &ScalarField<T>,
    g3: &ScalarField<T>,
    h_star: &ScalarField<T>,
    b: &ScalarField<T>,
) -> Result<T> {
    let dt = cfg.dt;
    let half = T::of(0.5);
    let alpha_hat = cn_alpha_hat(params.alpha, dt);
    let step = state.step + 1;
    let mut worst = T::zero();

    // flux equation, reduced form alpha_hat phi - g3 = lap mu
    let residual_field = {
        let mut v = phi_new.scaled(alpha_hat);
        v.axpy(-T::one(), g3);
        v.axpy(-T::one(), &mu.laplacian());
        v
    };
    let mu_hat_norm = mu.project_zero_mean().norm_l2();
    let scale = T::one().max(b.norm_l2()).max(mu_hat_norm);
    let bound = T::of(10.0) * cfg.cg_tol * scale;
    let r_mean = residual_field.mean().abs() * residual_field.grid().measure().sqrt();
    let r_dual = plan
        .inv_laplacian(&residual_field.project_zero_mean())?
        .norm_l2();
    for (what, r) in [("flux equation (dual norm)", r_dual), ("flux equation (mean)", r_mean)] {
        if !(r <= bound) {
            return Err(Error::Consistency {
                step,
                what,
                residual: r.as_f64(),
                bound: bound.as_f64(),
            });
        }
        worst = worst.max(r / scale);
    }

    // chemical potential: mu = -eps^2 lap((phi^{n+1}+phi^n)/2) + Ubar H* + beta dphi/dt
    let phi_mid = ScalarField::lin_comb(&[(half, phi_new), (half, &state.phi)]);
    let aux_mid = ScalarField::lin_comb(&[(half, aux_new), (half, &state.aux)]);
    let mut mu_direct = phi_mid.laplacian().scaled(-params.eps * params.eps);
    mu_direct.axpy(T::one(), &aux_mid.mul_field(h_star));
    mu_direct.axpy(params.beta / dt, &(phi_new - &state.phi));
    let r15 = (mu - &mu_direct).norm_l2();
    let s15 = T::one().max(mu.norm_l2());

    // auxiliary update: U^{n+1} - U^n = H*/2 (phi^{n+1} - phi^n)
    let r16 = {
        let mut v = aux_new - &state.aux;
        v.axpy(-half, &h_star.mul_field(&(phi_new - &state.phi)));
        v.norm_l2()
    };
    let s16 = T::one().max(aux_new.norm_l2());

    // kinematic identity: (psi^{n+1}+psi^n)/2 = (phi^{n+1}-phi^n)/dt
    let r17 = {
        let mut v = ScalarField::lin_comb(&[(half, psi_new), (half, &state.psi)]);
        v.axpy(-(T::one() / dt), &(phi_new - &state.phi));
        v.norm_l2()
    };
    let s17 = T::one().max(psi_new.norm_l2());

    for (what, r, s) in [
        ("chemical potential recovery", r15, s15),
        ("auxiliary update", r16, s16),
        ("kinematic identity", r17, s17),
    ] {
        let bound = T::of(10.0) * cfg.cg_tol * s;
        if !(r <= bound) {
            return Err(Error::Consistency {
                step,
                what,
                residual: r.as_f64(),
                bound: bound.as_f64(),
            });
        }
        worst = worst.max(r / s);
    }
    Ok(worst)
}

/// One BDF2 step; requires one previous step (the startup step is CN2).
pub fn step_bdf<T: Real>(
    state: &StepperState<T>,
    params: &ModelParams<T>,
    cfg: &SchemeConfig<T>,
    plan: &Arc<SpectralPlan<T>>,
) -> Result<(StepperState<T>, StepStats<T>)> {
    require_scheme(cfg, SchemeKind::Bdf2)?;
    if state.step < 1 {
        return Err(Error::InvalidInput {
            what: "step_bdf",
            why: "BDF2 needs two history levels; take the first step with CN2".into(),
        });
    }
    let dt = cfg.dt;
    let pot = &params.potential;
    let half = T::of(0.5);
    let eps = params.eps;
    let c32 = T::of(1.5) / dt; // 3/(2 dt)
    let beta32 = params.beta * c32;
    let a32 = params.alpha * c32;
    let alpha_hat = bdf_alpha_hat(params.alpha, dt);
    let v_phi = state.mass0 / state.phi.grid().measure();

    let phi_dag = extrapolate(state, SchemeKind::Bdf2);
    let h_dag = phi_dag.map(|x| pot.quad_coeff(x));

    // S+- = (4 S^n - S^{n-1})/3
    let third = T::one() / T::of(3.0);
    let four3 = T::of(4.0) * third;
    let comb = |cur: &ScalarField<T>, prev: &ScalarField<T>| {
        ScalarField::lin_comb(&[(four3, cur), (-third, prev)])
    };
    let phi_pm = comb(&state.phi, &state.phi_prev);
    let psi_pm = comb(&state.psi, &state.psi_prev);
    let aux_pm = comb(&state.aux, &state.aux_prev);

    // U^{n+1} = H/2 phi^{n+1} + h1,  psi^{n+1} = (3/2dt) phi^{n+1} + h2
    let h1 = &aux_pm - &h_dag.mul_field(&phi_pm).scaled(half);
    let h2 = phi_pm.scaled(-c32);
    let h3 = ScalarField::lin_comb(&[(-(a32 + T::one()), &h2), (a32, &psi_pm)]);
    let mut h4 = h_dag.mul_field(&h1);
    h4.axpy(-beta32, &phi_pm);

    let hsq = h_dag.map(|h| half * h * h);

    let g_rhs = h4.zip_map(&hsq, |g, h| g + (h + beta32) * v_phi);
    let f_rhs = h3.shifted(-alpha_hat * v_phi).project_zero_mean();
    let inv_f = plan.inv_laplacian(&f_rhs)?;
    let b = ScalarField::lin_comb(&[(-T::one(), &inv_f), (-T::one(), &g_rhs)]).project_zero_mean();

    let op = SpdOperator::new(plan, alpha_hat, eps, T::one(), beta32, hsq.clone())?;
    let sol = op.cg_solve(&b, cfg.cg_tol, cfg.cg_maxit)?;

    let phi_new = sol.x.shifted(v_phi);
    let mut mu = phi_new.laplacian().scaled(-eps * eps);
    for ((m, &p), (&h, &g)) in mu
        .data_mut()
        .iter_mut()
        .zip(phi_new.data())
        .zip(hsq.data().iter().zip(h4.data()))
    {
        *m += (h + beta32) * p + g;
    }
    let psi_new = {
        let mut v = phi_new.scaled(c32);
        v.axpy(T::one(), &h2);
        v
    };
    let aux_new = {
        let mut v = h_dag.mul_field(&phi_new).scaled(half);
        v.axpy(T::one(), &h1);
        v
    };

    let scheme_residual = if cfg.check_residuals {
        Some(check_bdf_step(
            state, params, cfg, plan, &phi_new, &psi_new, &aux_new, &mu, &h3, &h_dag, &b,
        )?)
    } else {
        None
    };

    let new_state = StepperState {
        phi_prev: state.phi.clone(),
        psi_prev: state.psi.clone(),
        aux_prev: state.aux.clone(),
        phi: phi_new,
        psi: psi_new,
        aux: aux_new,
        step: state.step + 1,
        mass0: state.mass0,
    };
    let stats = StepStats {
        cg_iterations: sol.iterations,
        cg_residual: sol.residual,
        scheme_residual,
    };
    Ok((new_state, stats))
}

/// Verify the four BDF2 update equations on the computed fields.
#[allow(clippy::too_many_arguments)]
fn check_bdf_step<T: Real>(
    state: &StepperState<T>,
    params: &ModelParams<T>,
    cfg: &SchemeConfig<T>,
    plan: &Arc<SpectralPlan<T>>,
    phi_new: &ScalarField<T>,
    psi_new: &ScalarField<T>,
    aux_new: &ScalarField<T>,
    mu: &ScalarField<T>,
    h3: &ScalarField<T>,
    h_dag: &ScalarField<T>,
    b: &ScalarField<T>,
) -> Result<T> {
    let dt = cfg.dt;
    let half = T::of(0.5);
    let alpha_hat = bdf_alpha_hat(params.alpha, dt);
    let step = state.step + 1;
    let mut worst = T::zero();

    let second_diff = |new: &ScalarField<T>, cur: &ScalarField<T>, prev: &ScalarField<T>| {
        ScalarField::lin_comb(&[(T::of(3.0), new), (T::of(-4.0), cur), (T::one(), prev)])
    };

    // flux equation, reduced form alpha_hat phi - h3 = lap mu
    let residual_field = {
        let mut v = phi_new.scaled(alpha_hat);
        v.axpy(-T::one(), h3);
        v.axpy(-T::one(), &mu.laplacian());
        v
    };
    let mu_hat_norm = mu.project_zero_mean().norm_l2();
    let scale = T::one().max(b.norm_l2()).max(mu_hat_norm);
    let bound = T::of(10.0) * cfg.cg_tol * scale;
    let r_mean = residual_field.mean().abs() * residual_field.grid().measure().sqrt();
    let r_dual = plan
        .inv_laplacian(&residual_field.project_zero_mean())?
        .norm_l2();
    for (what, r) in [("flux equation (dual norm)", r_dual), ("flux equation (mean)", r_mean)] {
        if !(r <= bound) {
            return Err(Error::Consistency {
                step,
                what,
                residual: r.as_f64(),
                bound: bound.as_f64(),
            });
        }
        worst = worst.max(r / scale);
    }

    // mu = -eps^2 lap phi^{n+1} + U^{n+1} H + beta (3phi^{n+1}-4phi^n+phi^{n-1})/(2dt)
    let d2phi = second_diff(phi_new, &state.phi, &state.phi_prev);
    let mut mu_direct = phi_new.laplacian().scaled(-params.eps * params.eps);
    mu_direct.axpy(T::one(), &aux_new.mul_field(h_dag));
    mu_direct.axpy(params.beta / (T::of(2.0) * dt), &d2phi);
    let r47 = (mu - &mu_direct).norm_l2();
    let s47 = T::one().max(mu.norm_l2());

    // 3U^{n+1}-4U^n+U^{n-1} = H/2 (3phi^{n+1}-4phi^n+phi^{n-1})
    let r48 = {
        let mut v = second_diff(aux_new, &state.aux, &state.aux_prev);
        v.axpy(-half, &h_dag.mul_field(&d2phi));
        v.norm_l2()
    };
    let s48 = T::one().max(aux_new.norm_l2());

    // psi^{n+1} = (3phi^{n+1}-4phi^n+phi^{n-1})/(2dt)
    let r49 = {
        let mut v = psi_new.clone();
        v.axpy(-T::one() / (T::of(2.0) * dt), &d2phi);
        v.norm_l2()
    };
    let s49 = T::one().max(psi_new.norm_l2());

    for (what, r, s) in [
        ("chemical potential recovery", r47, s47),
        ("auxiliary update", r48, s48),
        ("kinematic identity", r49, s49),
    ] {
        let bound = T::of(10.0) * cfg.cg_tol * s;
        if !(r <= bound) {
            return Err(Error::Consistency {
                step,
                what,
                residual: r.as_f64(),
                bound: bound.as_f64(),
            });
        }
        worst = worst.max(r / s);
    }
    Ok(worst)
}

/// Advance `n_steps` steps, calling the observer with a fresh diagnostics
/// record after each one. BDF2 runs take their first step with CN2.
///
/// Deterministic: identical inputs produce identical trajectories.
pub fn run<T: Real>(
    mut state: StepperState<T>,
    params: &ModelParams<T>,
    cfg: &SchemeConfig<T>,
    plan: &Arc<SpectralPlan<T>>,
    n_steps: usize,
    mut observer: impl FnMut(usize, &StepperState<T>, &diagnostics::EnergyRecord<T>),
) -> Result<StepperState<T>> {
    if n_steps == 0 {
        return Err(Error::InvalidInput {
            what: "run",
            why: "n_steps must be at least 1".into(),
        });
    }
    for _ in 0..n_steps {
        let used = match cfg.scheme {
            SchemeKind::Cn2 => SchemeKind::Cn2,
            SchemeKind::Bdf2 if state.step == 0 => SchemeKind::Cn2,
            SchemeKind::Bdf2 => SchemeKind::Bdf2,
        };
        let (next, stats) = match used {
            SchemeKind::Cn2 => {
                let mut cn_cfg = *cfg;
                cn_cfg.scheme = SchemeKind::Cn2;
                step_cn(&state, params, &cn_cfg, plan)
            }
            SchemeKind::Bdf2 => step_bdf(&state, params, cfg, plan),
        }
        .map_err(|e| e.at_step(state.step))?;

        if !(next.phi.all_finite() && next.psi.all_finite() && next.aux.all_finite()) {
            return Err(Error::NonFinite("time step output").at_step(state.step));
        }

        let record = diagnostics::record_for_step(params, cfg, plan, &state, &next, used, &stats)
            .map_err(|e| e.at_step(next.step))?;
        observer(next.step, &next, &record);
        state = next;
    }
    Ok(state)
}
