//! Run configuration read from a JSON file.

use std::fmt;
use std::path::{Path, PathBuf};

use mhd_core::adapt::ControllerConfig;
use mhd_core::forms::PhysicalParams;
use mhd_core::mesh::Rect;
use mhd_core::problems::{self, HartmannParams, ProblemSpec};
use mhd_core::runner::Scheme;
use mhd_core::stepper::PicardSettings;
use mhd_core::{Error, Result};
use serde::Deserialize;

/// Experiment selected on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Converge,
    Conserve,
    Adapt,
    Compare,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Converge => "converge",
            Experiment::Conserve => "conserve",
            Experiment::Adapt => "adapt",
            Experiment::Compare => "compare",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemId {
    Wave,
    Hartmann,
    Lindberg,
    FreeDecay,
}

impl ProblemId {
    pub fn name(self) -> &'static str {
        match self {
            ProblemId::Wave => "wave",
            ProblemId::Hartmann => "hartmann",
            ProblemId::Lindberg => "lindberg",
            ProblemId::FreeDecay => "free_decay",
        }
    }
}

/// Problem selection with optional parameter overrides.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub id: ProblemId,
    pub nu: Option<f64>,
    pub nu_m: Option<f64>,
    /// Zero viscosity and resistivity.
    #[serde(default)]
    pub ideal: bool,
    /// Mean field; channel problems take `(0, m)` instead.
    pub b0: Option<[f64; 2]>,
    pub m: Option<f64>,
    pub length: Option<f64>,
    pub g: Option<f64>,
    pub s: Option<f64>,
    pub ha: Option<f64>,
    pub omega: Option<f64>,
    /// `[x0, x1, y0, y1]` for the free-decay problem.
    pub domain: Option<[f64; 4]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardConfig {
    #[serde(default = "default_picard_tol")]
    pub tol: f64,
    #[serde(default = "default_picard_maxit")]
    pub max_iterations: usize,
}

fn default_picard_tol() -> f64 {
    PicardSettings::default().tol
}

fn default_picard_maxit() -> usize {
    PicardSettings::default().maxit
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            tol: default_picard_tol(),
            max_iterations: default_picard_maxit(),
        }
    }
}

/// Adaptive controller settings; unset fields take the adaptive-run defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerOverrides {
    pub tol: Option<f64>,
    pub kappa: Option<f64>,
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
    pub max_rejects: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// When present it must agree with the subcommand.
    pub experiment: Option<Experiment>,
    /// Stem of the output file names.
    pub name: Option<String>,
    pub problem: ProblemConfig,
    pub scheme: Option<String>,
    #[serde(default)]
    pub levels: Vec<usize>,
    pub t0: Option<f64>,
    pub t_end: Option<f64>,
    /// Mesh divisions `[nx, ny]` for single-grid runs.
    pub mesh: Option<[usize; 2]>,
    /// Constant step size for single-grid runs.
    pub dt: Option<f64>,
    #[serde(default)]
    pub picard: PicardConfig,
    #[serde(default)]
    pub controller: ControllerOverrides,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(e).context(format!("reading {}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks the parts every experiment needs.
    pub fn validate(&self, experiment: Experiment) -> Result<()> {
        if let Some(e) = self.experiment {
            if e != experiment {
                return Err(Error::InvalidArgument(format!(
                    "config is for '{e}' but the command is '{experiment}'"
                )));
            }
        }
        if experiment == Experiment::Converge && self.levels.is_empty() {
            return Err(Error::InvalidArgument(
                "converge needs at least one refinement level".into(),
            ));
        }
        if self.levels.contains(&0) {
            return Err(Error::InvalidArgument(
                "refinement levels must be positive".into(),
            ));
        }
        self.picard().validate()?;
        if experiment == Experiment::Adapt {
            self.controller().validate()?;
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "dt must be positive, got {dt}"
                )));
            }
        }
        if let Some([nx, ny]) = self.mesh {
            if nx == 0 || ny == 0 {
                return Err(Error::InvalidArgument(
                    "mesh divisions must be positive".into(),
                ));
            }
        }
        let (t0, t1) = self.window();
        if !(t1 > t0) {
            return Err(Error::InvalidArgument(format!(
                "empty time window [{t0}, {t1}]"
            )));
        }
        self.scheme()?;
        self.problem_spec()?;
        Ok(())
    }

    pub fn scheme(&self) -> Result<Scheme> {
        self.scheme.as_deref().unwrap_or("pim").parse()
    }

    pub fn picard(&self) -> PicardSettings {
        PicardSettings {
            tol: self.picard.tol,
            maxit: self.picard.max_iterations,
            parallel: false,
        }
    }

    pub fn controller(&self) -> ControllerConfig {
        let c = &self.controller;
        ControllerConfig {
            tol: c.tol.unwrap_or(1e-4),
            kappa: c.kappa.unwrap_or(0.95),
            tau_min: c.tau_min.unwrap_or(1e-6),
            tau_max: c.tau_max.unwrap_or(1e-4),
            max_rejects: c
                .max_rejects
                .unwrap_or(ControllerConfig::default().max_rejects),
        }
    }

    /// `[t0, t_end]`, defaulting to the problem's standard window.
    pub fn window(&self) -> (f64, f64) {
        let (a, b) = match self.problem.id {
            ProblemId::Lindberg => (1.59, 1.604),
            _ => (0.0, 1.0),
        };
        (self.t0.unwrap_or(a), self.t_end.unwrap_or(b))
    }

    /// Mesh for single-grid runs.
    pub fn mesh(&self) -> [usize; 2] {
        self.mesh.unwrap_or(match self.problem.id {
            ProblemId::Lindberg => [40, 40],
            ProblemId::FreeDecay => [16, 16],
            _ => [32, 32],
        })
    }

    /// Constant step size for single-grid runs.
    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(match self.problem.id {
            ProblemId::Lindberg => 1e-5,
            _ => 1.0 / self.mesh()[0] as f64,
        })
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        let p = &self.problem;
        let (nu0, m0) = match p.id {
            ProblemId::Wave => (2.5e-4, 0.0),
            ProblemId::Hartmann => (0.1, 10.0),
            ProblemId::Lindberg => (0.1, 100.0),
            ProblemId::FreeDecay => (1e-2, 0.0),
        };
        let params = if p.ideal {
            if p.nu.is_some_and(|v| v != 0.0) || p.nu_m.is_some_and(|v| v != 0.0) {
                return Err(Error::InvalidArgument(
                    "an ideal run cannot set nonzero nu or nu_m".into(),
                ));
            }
            PhysicalParams::ideal()
        } else {
            PhysicalParams::new(p.nu.unwrap_or(nu0), p.nu_m.unwrap_or(nu0))?
        };
        let channel = || {
            if p.b0.is_some() {
                return Err(Error::InvalidArgument(
                    "channel problems take the mean field from 'm'".into(),
                ));
            }
            let d = HartmannParams::channel(p.m.unwrap_or(m0));
            Ok(HartmannParams {
                length: p.length.unwrap_or(d.length),
                g: p.g.unwrap_or(d.g),
                s: p.s.unwrap_or(d.s),
                ha: p.ha.unwrap_or(d.ha),
                m: d.m,
            })
        };
        let needs_viscosity = || {
            if params.is_ideal() {
                Err(Error::InvalidArgument(format!(
                    "problem '{}' needs positive viscosities",
                    p.id.name()
                )))
            } else {
                Ok(())
            }
        };
        let spec = match p.id {
            ProblemId::Wave => {
                needs_viscosity()?;
                problems::travelling_wave(params, p.b0.unwrap_or([1.0, 1.0]))
            }
            ProblemId::Hartmann => {
                needs_viscosity()?;
                problems::hartmann(channel()?, params)?
            }
            ProblemId::Lindberg => {
                needs_viscosity()?;
                problems::lindberg_hartmann(channel()?, params, p.omega.unwrap_or(3.1))?
            }
            ProblemId::FreeDecay => {
                let d = p
                    .domain
                    .map(|[x0, x1, y0, y1]| Rect::new(x0, x1, y0, y1))
                    .unwrap_or_else(Rect::unit);
                if !(d.width() > 0.0 && d.height() > 0.0) {
                    return Err(Error::InvalidArgument(format!("degenerate domain {d:?}")));
                }
                ProblemSpec::free_decay(params, p.b0.unwrap_or([0.0, 0.0]), d)
            }
        };
        Ok(spec)
    }

    /// `1_1`-style tag of the mean field.
    pub fn b0_tag(&self) -> Result<String> {
        let b0 = self.problem_spec()?.b0;
        Ok(format!("{}_{}", b0[0], b0[1]))
    }

    /// Output stem: the configured name or `<problem>_<label>_<B0>`.
    pub fn run_name(&self, label: &str) -> Result<String> {
        match &self.name {
            Some(n) if n.is_empty() || n.contains(['/', '\\']) => Err(Error::InvalidArgument(
                format!("run name '{n}' is not a plain file stem"),
            )),
            Some(n) => Ok(n.clone()),
            None => Ok(format!(
                "{}_{}_{}",
                self.problem.id.name(),
                label,
                self.b0_tag()?
            )),
        }
    }
}
