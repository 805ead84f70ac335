//! Run configuration: one TOML file per run, schema-validated with unknown
//! keys rejected.

use std::path::{Path, PathBuf};


use crate::geometry::{smoothed_disk_field, Domain};
use crate::model::{BcKind, PdeSystem};
use crate::sampling::Strategy;
use crate::training::TrainPlan;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Ac1dPeriodic,
    Ac2dNeumann,
    Ac2dDynamic,
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    #[serde(default)]
    pub system: SystemOverrides,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub plan: PlanOverrides,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub compare: CompareSection,
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub preset: Preset,
    pub strategy: Strategy,
    pub seed: u64,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemOverrides {
    pub m_b: Option<f64>,
    pub m_s: Option<f64>,
    pub eps2: Option<f64>,
    pub eps_s2: Option<f64>,
    pub terminal_time: Option<f64>,
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum DomainSpec {
    Interval { a: f64, b: f64 },
    Disk { center: [f64; 2], radius: f64 },
    Ellipse { center: [f64; 2], a: f64, b: f64 },
    /// Smoothed-disk characteristic field; stands in for learned fields.
    ImplicitDisk { center: [f64; 2], radius: f64, width: f64 },
}

#[derive(Debug, Clone, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanOverrides {
    pub endpoints: Option<Vec<f64>>,
    pub hidden_layers: Option<usize>,
    pub width: Option<usize>,
    pub adam_epochs: Option<usize>,
    pub adam_lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub lbfgs_max_iters: Option<usize>,
    pub resample_every: Option<usize>,
    pub resample_m: Option<usize>,
    pub resample_budget: Option<usize>,
    pub pool_multiplier: Option<usize>,
    pub interior_cap: Option<usize>,
    pub n_interior: Option<usize>,
    pub n_boundary: Option<usize>,
    pub n_initial: Option<usize>,
    pub w_f: Option<f64>,
    pub w_b: Option<f64>,
    pub w_i: Option<f64>,
    pub w_b1: Option<f64>,
    pub w_b2: Option<f64>,
    pub loss_delta: Option<f64>,
    pub grad_tol: Option<f64>,
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub nx: usize,
    pub dt: f64,
    pub nr: usize,
    pub ntheta: usize,
    pub dt_2d: f64,
    pub store_times: Option<Vec<f64>>,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { nx: 512, dt: 1e-5, nr: 64, ntheta: 64, dt_2d: 2e-5, store_times: None }
    }
}

#[derive(Debug, Clone, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub checkpoint_dir: Option<PathBuf>,
    pub oracle_file: Option<PathBuf>,
    /// Group-probability analysis over a [t0, t1] slab.
    pub group_slab: Option<[f64; 2]>,
    pub group_m: Option<usize>,
    pub group_pool: Option<usize>,
    pub e0: Option<f64>,
    pub energy_times: Option<Vec<f64>>,
    #[serde(default)]
    pub local_std: bool,
    pub sigma0: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.build_plan().validate()?;
        if self.run.preset == Preset::Ac1dPeriodic {
            if let Some(d) = &self.domain {
                if !matches!(d, DomainSpec::Interval { .. }) {
                    return Err(Error::Config(
                        "domain: the ac1d_periodic preset requires an interval domain"
                            .to_string(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn build_system(&self) -> PdeSystem {
        let mut sys = match self.run.preset {
            Preset::Ac1dPeriodic => PdeSystem::ac1d_periodic(),
            Preset::Ac2dNeumann => {
                PdeSystem::ac2d_neumann(self.system.m_b.unwrap_or(2.0))
            }
            Preset::Ac2dDynamic => PdeSystem::ac2d_dynamic(
                self.system.m_b.unwrap_or(2.0),
                self.system.m_s.unwrap_or(2.0),
            ),
        };
        if let Some(v) = self.system.m_b {
            sys.m_b = v;
        }
        if let Some(v) = self.system.m_s {
            sys.m_s = v;
        }
        if let Some(v) = self.system.eps2 {
            sys.eps2 = v;
        }
        if let Some(v) = self.system.eps_s2 {
            sys.eps_s2 = v;
        }
        if let Some(v) = self.system.terminal_time {
            sys.terminal_time = v;
        }
        sys
    }

    pub fn build_domain(&self) -> Domain {
        match &self.domain {
            Some(DomainSpec::Interval { a, b }) => Domain::Interval { a: *a, b: *b },
            Some(DomainSpec::Disk { center, radius }) => {
                Domain::Disk { center: *center, radius: *radius }
            }
            Some(DomainSpec::Ellipse { center, a, b }) => {
                Domain::Ellipse { center: *center, a: *a, b: *b }
            }
            Some(DomainSpec::ImplicitDisk { center, radius, width }) => Domain::Implicit {
                field: smoothed_disk_field(*center, *radius, *width),
                bbox: (
                    [center[0] - radius * 1.5, center[1] - radius * 1.5],
                    [center[0] + radius * 1.5, center[1] + radius * 1.5],
                ),
            },
            None => match self.run.preset {
                Preset::Ac1dPeriodic => Domain::Interval { a: -1.0, b: 1.0 },
                _ => Domain::Disk { center: [0.0, 0.0], radius: 1.0 },
            },
        }
    }

    pub fn build_plan(&self) -> TrainPlan {
        let mut plan = match self.run.preset {
            Preset::Ac1dPeriodic => TrainPlan::desk_1d(),
            _ => TrainPlan::desk_2d(self.system.terminal_time.unwrap_or(1.0)),
        };
        let o = &self.plan;
        if let Some(v) = &o.endpoints {
            plan.endpoints = v.clone();
        }
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = o.$field { plan.$field = v; })*
            };
        }
        take!(
            hidden_layers,
            width,
            adam_epochs,
            adam_lr,
            batch_size,
            lbfgs_max_iters,
            resample_every,
            resample_m,
            resample_budget,
            pool_multiplier,
            interior_cap,
            n_interior,
            n_boundary,
            n_initial,
            loss_delta,
            grad_tol
        );
        let w = &mut plan.weights;
        if let Some(v) = o.w_f {
            w.w_f = v;
        }
        if let Some(v) = o.w_b {
            w.w_b = v;
        }
        if let Some(v) = o.w_i {
            w.w_i = v;
        }
        if let Some(v) = o.w_b1 {
            w.w_b1 = v;
        }
        if let Some(v) = o.w_b2 {
            w.w_b2 = v;
        }
        plan
    }

    pub fn regime(&self) -> BcKind {
        match self.run.preset {
            Preset::Ac1dPeriodic => BcKind::Periodic1d,
            Preset::Ac2dNeumann => BcKind::Neumann,
            Preset::Ac2dDynamic => BcKind::Dynamic,
        }
    }
}
