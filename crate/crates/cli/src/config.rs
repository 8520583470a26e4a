//! Run configuration: a TOML file mirroring the simulation inputs
//! field-for-field. Unknown keys are rejected; parsing materializes all
//! defaults, so parse -> serialize -> parse is the identity on the
//! canonical form.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use vchr_core::grid::BoundaryKind;
use vchr_core::potential::PotentialSpec;
use vchr_core::stepper::{ModelParams, SchemeConfig, SchemeKind};
use vchr_core::{Grid64, Potential64};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub rng_seed: u64,
    pub grid: GridSection,
    pub model: ModelSection,
    pub scheme: SchemeSection,
    pub ic: IcSection,
    pub time: TimeSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Points per axis; the number of axes sets the dimension (2 or 3).
    pub n: Vec<usize>,
    /// Domain extent per axis.
    pub length: Vec<f64>,
    pub bc: BcName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcName {
    Periodic,
    Noflux,
}

impl From<BcName> for BoundaryKind {
    fn from(b: BcName) -> Self {
        match b {
            BcName::Periodic => BoundaryKind::Periodic,
            BcName::Noflux => BoundaryKind::NoFlux,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub eps: f64,
    pub alpha: f64,
    pub beta: f64,
    pub potential: PotentialSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub kind: PotentialName,
    /// Lower-bound shift; defaults to 0 (double well) or 1 (Flory-Huggins).
    pub b: Option<f64>,
    /// Mixing parameter, Flory-Huggins only; default 2.5.
    pub theta: Option<f64>,
    /// Regularization cut, Flory-Huggins only; default 0.001.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialName {
    DoubleWell,
    FloryHuggins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub scheme: SchemeName,
    pub dt: f64,
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_cg_maxit")]
    pub cg_maxit: usize,
    #[serde(default = "default_true")]
    pub check_residuals: bool,
}

fn default_cg_tol() -> f64 {
    1e-10
}

fn default_cg_maxit() -> usize {
    500
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Cn2,
    Bdf2,
}

impl From<SchemeName> for SchemeKind {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::Cn2 => SchemeKind::Cn2,
            SchemeName::Bdf2 => SchemeKind::Bdf2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcSection {
    pub kind: IcName,
    /// Background volume fraction, random_perturbation only.
    pub phibar: Option<f64>,
    /// Perturbation amplitude; default 0.001.
    pub amplitude: Option<f64>,
    /// Snapshot path, from_file only.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcName {
    TwoBubbles,
    RandomPerturbation,
    CosProduct,
    FromFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_end: Option<f64>,
    pub n_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Emit one CSV row (and snapshot, if enabled) every `cadence` steps.
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    #[serde(default = "default_true")]
    pub snapshots: bool,
}

fn default_cadence() -> usize {
    1
}

impl RunConfig {
    /// Parse, fill defaults, and validate.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.canonicalize();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializable")
    }

    fn canonicalize(&mut self) {
        let pot = &mut self.model.potential;
        match pot.kind {
            PotentialName::DoubleWell => {
                pot.b.get_or_insert(0.0);
                pot.theta = None;
                pot.sigma = None;
            }
            PotentialName::FloryHuggins => {
                pot.b.get_or_insert(1.0);
                pot.theta.get_or_insert(2.5);
                pot.sigma.get_or_insert(0.001);
            }
        }
        if self.ic.kind == IcName::RandomPerturbation {
            self.ic.amplitude.get_or_insert(0.001);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.n.len() != 2 && g.n.len() != 3 {
            return Err(HarnessError::Config(format!(
                "grid.n must have 2 or 3 axes, got {}",
                g.n.len()
            )));
        }
        if g.n.len() != g.length.len() {
            return Err(HarnessError::Config(
                "grid.n and grid.length must have the same number of axes".into(),
            ));
        }
        if g.n.iter().any(|&n| n < 4) {
            return Err(HarnessError::Config(
                "grid.n needs at least 4 points per axis".into(),
            ));
        }
        match (self.time.t_end, self.time.n_steps) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => {
                return Err(HarnessError::Config(
                    "exactly one of time.t_end and time.n_steps must be set".into(),
                ))
            }
        }
        if self.output.cadence < 1 {
            return Err(HarnessError::Config("output.cadence must be >= 1".into()));
        }
        match self.ic.kind {
            IcName::RandomPerturbation => {
                if self.ic.phibar.is_none() {
                    return Err(HarnessError::Config(
                        "ic.phibar required for random_perturbation".into(),
                    ));
                }
            }
            IcName::FromFile => {
                if self.ic.path.is_none() {
                    return Err(HarnessError::Config("ic.path required for from_file".into()));
                }
            }
            IcName::TwoBubbles | IcName::CosProduct => {
                if g.n.len() != 2 {
                    return Err(HarnessError::Config(format!(
                        "{:?} initial condition is two-dimensional",
                        self.ic.kind
                    )));
                }
            }
        }
        // constructing the core objects performs their own validation
        self.grid_spec()?;
        self.model_params()?;
        self.scheme_config()?;
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<Arc<Grid64>> {
        Ok(Arc::new(Grid64::new(
            &self.grid.n,
            &self.grid.length,
            self.grid.bc.into(),
        )?))
    }

    pub fn potential(&self) -> Result<Potential64> {
        let p = &self.model.potential;
        let spec = match p.kind {
            PotentialName::DoubleWell => PotentialSpec::double_well(p.b.unwrap_or(0.0))?,
            PotentialName::FloryHuggins => PotentialSpec::flory_huggins(
                p.b.unwrap_or(1.0),
                p.theta.unwrap_or(2.5),
                p.sigma.unwrap_or(0.001),
            )?,
        };
        Ok(spec)
    }

    pub fn model_params(&self) -> Result<ModelParams<f64>> {
        Ok(ModelParams::new(
            self.model.eps,
            self.model.alpha,
            self.model.beta,
            self.potential()?,
        )?)
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig<f64>> {
        Ok(SchemeConfig::new(self.scheme.scheme.into(), self.scheme.dt)?
            .with_cg(self.scheme.cg_tol, self.scheme.cg_maxit)
            .with_residual_checks(self.scheme.check_residuals))
    }

    /// Number of steps: n_steps as given, or t_end/dt (which must divide).
    pub fn resolve_steps(&self) -> Result<usize> {
        match (self.time.n_steps, self.time.t_end) {
            (Some(n), None) => {
                if n == 0 {
                    Err(HarnessError::Config("time.n_steps must be >= 1".into()))
                } else {
                    Ok(n)
                }
            }
            (None, Some(t_end)) => {
                let dt = self.scheme.dt;
                let n = (t_end / dt).round();
                if n < 1.0 || (n * dt - t_end).abs() > 1e-9 * t_end.abs().max(1.0) {
                    return Err(HarnessError::Config(format!(
                        "time.t_end = {t_end} is not a positive multiple of dt = {dt}"
                    )));
                }
                Ok(n as usize)
            }
            _ => unreachable!("validated"),
        }
    }
}
