//! Initial conditions for the experiment drivers.

use std::sync::Arc;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use vchr_core::field::ScalarField;
use vchr_core::{Field64, Grid64};

use crate::config::{IcName, RunConfig};
use crate::snapshot::snapshot_read;
use crate::{HarnessError, Result};

/// Build the configured initial phase field on `grid`.
pub fn make_ic(cfg: &RunConfig, grid: &Arc<Grid64>) -> Result<Field64> {
    match cfg.ic.kind {
        IcName::TwoBubbles => Ok(two_bubbles(grid, cfg.model.eps)),
        IcName::CosProduct => Ok(cos_product(grid)),
        IcName::RandomPerturbation => {
            let phibar = cfg
                .ic
                .phibar
                .ok_or_else(|| HarnessError::Config("ic.phibar required".into()))?;
            let amplitude = cfg.ic.amplitude.unwrap_or(0.001);
            Ok(random_perturbation(grid, phibar, amplitude, cfg.rng_seed))
        }
        IcName::FromFile => {
            let path = cfg
                .ic
                .path
                .as_ref()
                .ok_or_else(|| HarnessError::Config("ic.path required".into()))?;
            let field = snapshot_read(path)?;
            if **field.grid() != **grid {
                return Err(HarnessError::io(
                    path,
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!(
                            "snapshot grid {:?} does not match configured grid {:?}",
                            field.grid().shape(),
                            grid.shape()
                        ),
                    ),
                ));
            }
            Ok(field)
        }
    }
}

/// Two near-kissing bubbles of radius 0.2 centered at (0.71, 0.5) and
/// (0.29, 0.5), with a tanh interface of width eps.
pub fn two_bubbles(grid: &Arc<Grid64>, eps: f64) -> Field64 {
    ScalarField::from_coords(grid, |x| {
        let r1 = ((x[0] - 0.71).powi(2) + (x[1] - 0.5).powi(2)).sqrt();
        let r2 = ((x[0] - 0.29).powi(2) + (x[1] - 0.5).powi(2)).sqrt();
        let t1 = ((0.2 - r1) / eps).tanh();
        let t2 = ((0.2 - r2) / eps).tanh();
        0.5 * (1.0 + t1.max(t2))
    })
}

/// 0.5 (1 + cos(2 pi x / Lx) cos(2 pi y / Ly)); mean exactly 1/2 on a
/// periodic grid.
pub fn cos_product(grid: &Arc<Grid64>) -> Field64 {
    let lx = grid.length()[0];
    let ly = grid.length()[1];
    let tau = 2.0 * std::f64::consts::PI;
    ScalarField::from_coords(grid, |x| {
        0.5 * (1.0 + (tau * x[0] / lx).cos() * (tau * x[1] / ly).cos())
    })
}

/// phibar + amplitude * noise with seeded uniform noise re-centered so the
/// quadrature mean equals phibar exactly.
pub fn random_perturbation(
    grid: &Arc<Grid64>,
    phibar: f64,
    amplitude: f64,
    seed: u64,
) -> Field64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = ScalarField::from_fn(grid, |_| rng.gen_range(0.0..1.0)).project_zero_mean();
    let mut phi = noise.scaled(amplitude).shifted(phibar);
    // one more exact shift absorbs the rounding of the scale step
    let correction = phibar - phi.mean();
    phi = phi.shifted(correction);
    phi
}
