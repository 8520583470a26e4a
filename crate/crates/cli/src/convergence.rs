//! Temporal refinement study: run the same problem at dt0/2^k and measure
//! Cauchy differences between adjacent refinement levels at the end time.

use std::collections::BTreeMap;
use std::sync::Arc;

use vchr_core::stepper::{self, StepperState};
use vchr_core::{Field64, Plan64};

use crate::config::RunConfig;
use crate::ic::make_ic;
use crate::{HarnessError, Result};

/// One refinement level: the Cauchy error pairs level k with level k+1.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub k: u32,
    pub dt: f64,
    pub err_phi: f64,
    pub err_aux: f64,
}

struct EndState {
    phi: Field64,
    aux: Field64,
}

/// Caches end states per refinement level so extending `k_max` never reruns
/// completed levels.
pub struct ConvergenceStudy {
    cfg: RunConfig,
    plan: Arc<Plan64>,
    phi0: Field64,
    t_end: f64,
    cache: BTreeMap<u32, EndState>,
    pub runs_executed: usize,
}

impl ConvergenceStudy {
    /// The base config's dt is the coarsest level; `time.t_end` is required.
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let t_end = cfg.time.t_end.ok_or_else(|| {
            HarnessError::Config("convergence study requires time.t_end".into())
        })?;
        let grid = cfg.grid_spec()?;
        let plan = Arc::new(Plan64::new(&grid));
        let phi0 = make_ic(cfg, &grid)?;
        Ok(ConvergenceStudy {
            cfg: cfg.clone(),
            plan,
            phi0,
            t_end,
            cache: BTreeMap::new(),
            runs_executed: 0,
        })
    }

    fn ensure_level(&mut self, k: u32) -> Result<()> {
        if self.cache.contains_key(&k) {
            return Ok(());
        }
        let dt = self.cfg.scheme.dt / f64::powi(2.0, k as i32);
        let n = (self.t_end / dt).round();
        if n < 1.0 || (n * dt - self.t_end).abs() > 1e-9 * self.t_end.max(1.0) {
            return Err(HarnessError::Config(format!(
                "t_end = {} is not a multiple of refined dt = {dt}",
                self.t_end
            )));
        }
        let params = self.cfg.model_params()?;
        let mut scheme = self.cfg.scheme_config()?;
        scheme.dt = dt;
        let state = stepper::init_state(&params, &self.phi0)?;
        let end: StepperState<f64> =
            stepper::run(state, &params, &scheme, &self.plan, n as usize, |_, _, _| {})
                .map_err(|e| -> HarnessError {
                    match e {
                        e @ vchr_core::Error::AtStep { .. } => HarnessError::Config(format!(
                            "refinement level k={k} (dt={dt}) failed: {e}"
                        )),
                        other => other.into(),
                    }
                })?;
        self.cache.insert(
            k,
            EndState {
                phi: end.phi,
                aux: end.aux,
            },
        );
        self.runs_executed += 1;
        Ok(())
    }

    /// Cauchy errors for k = 0..k_max-1 (each pairing k with k+1).
    pub fn table(&mut self, k_max: u32) -> Result<Vec<ConvergenceRow>> {
        if k_max < 1 {
            return Err(HarnessError::Config("k_max must be >= 1".into()));
        }
        for k in 0..=k_max {
            self.ensure_level(k)?;
        }
        let mut rows = Vec::new();
        for k in 0..k_max {
            let coarse = &self.cache[&k];
            let fine = &self.cache[&(k + 1)];
            rows.push(ConvergenceRow {
                k,
                dt: self.cfg.scheme.dt / f64::powi(2.0, k as i32),
                err_phi: (&coarse.phi - &fine.phi).norm_l2(),
                err_aux: (&coarse.aux - &fine.aux).norm_l2(),
            });
        }
        Ok(rows)
    }
}

/// Least-squares order: minus the slope of log2(err) against k.
///
/// Returns None when any error sits at rounding level (steady problems):
/// the order is then undefined rather than wrong.
pub fn fitted_order(errors: &[f64]) -> Option<f64> {
    if errors.len() < 2 || errors.iter().any(|&e| !(e > 1e-13)) {
        return None;
    }
    let n = errors.len() as f64;
    let logs: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
    let kbar = (n - 1.0) / 2.0;
    let lbar = logs.iter().sum::<f64>() / n;
    let num: f64 = logs
        .iter()
        .enumerate()
        .map(|(k, l)| (k as f64 - kbar) * (l - lbar))
        .sum();
    let den: f64 = (0..errors.len())
        .map(|k| (k as f64 - kbar).powi(2))
        .sum();
    Some(-num / den)
}
