//! Scenario configuration: a TOML file with sections for physics, grid,
//! solver, perturbation and diagnostics. Every field has a default, the
//! loader validates the combination and the resolved configuration is
//! echoed into the run directory.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;
use vsheet_core::model::PhysParams;
use vsheet_core::pipeline::{Bump, FitWindows, Mode, ShiftMode};
use vsheet_core::solver::{DtControl, Scheme, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    ProfileVerify,
    TorusDecay,
    PeriodicSheet,
    LocalizedSheet,
    ConvergenceStudy,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_one")]
    pub mu: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "d_one")]
    pub rho_bar: f64,
    /// Tangential far-field velocity pair.
    #[serde(default = "d_u_bar")]
    pub u_bar: [f64; 2],
    /// Profile age.
    #[serde(default = "d_age")]
    pub lambda_age: f64,
}

fn d_gamma() -> f64 {
    1.4
}
fn d_one() -> f64 {
    1.0
}
fn d_u_bar() -> [f64; 2] {
    [1.0, 0.0]
}
fn d_age() -> f64 {
    16.0
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self {
            gamma: d_gamma(),
            mu: d_one(),
            lambda: 0.0,
            rho_bar: d_one(),
            u_bar: d_u_bar(),
            lambda_age: d_age(),
        }
    }
}

impl PhysicsSection {
    pub fn to_params(&self) -> Result<PhysParams> {
        if self.mu <= 0.0 {
            bail!(
                "[physics] mu = {} rejected: the viscosity constraint requires mu > 0 and mu + lambda >= 0",
                self.mu
            );
        }
        if self.mu + self.lambda < 0.0 {
            bail!(
                "[physics] mu + lambda = {} rejected: the viscosity constraint requires mu + lambda >= 0",
                self.mu + self.lambda
            );
        }
        PhysParams::new(self.gamma, self.mu, self.lambda, self.rho_bar, self.u_bar, self.lambda_age)
            .map_err(|e| anyhow!("[physics] {e}"))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "d_dim")]
    pub dim: u8,
    /// Half width of the truncated line (line scenarios).
    #[serde(default = "d_half_width")]
    pub half_width: f64,
    /// Cells per unit length in x3 (periodic-sheet: shared torus/line spacing).
    #[serde(default = "d_cpu")]
    pub cells_per_unit: usize,
    /// Cell count in x3 (torus-decay, localized-sheet).
    #[serde(default = "d_n3")]
    pub n3: usize,
    #[serde(default = "d_n2")]
    pub n2: usize,
}

fn d_dim() -> u8 {
    1
}
fn d_half_width() -> f64 {
    40.0
}
fn d_cpu() -> usize {
    20
}
fn d_n3() -> usize {
    64
}
fn d_n2() -> usize {
    16
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            dim: d_dim(),
            half_width: d_half_width(),
            cells_per_unit: d_cpu(),
            n3: d_n3(),
            n2: d_n2(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "d_scheme")]
    pub scheme: String,
    /// Fixed time step; mutually exclusive with `cfl`.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Advective CFL target.
    #[serde(default)]
    pub cfl: Option<f64>,
    #[serde(default = "d_end_time")]
    pub end_time: f64,
    #[serde(default = "d_snapshot")]
    pub snapshot_dt: f64,
    #[serde(default)]
    pub hyper_dissipation: f64,
}

fn d_scheme() -> String {
    "semi-implicit".into()
}
fn d_end_time() -> f64 {
    40.0
}
fn d_snapshot() -> f64 {
    0.5
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            scheme: d_scheme(),
            dt: None,
            cfl: None,
            end_time: d_end_time(),
            snapshot_dt: d_snapshot(),
            hyper_dissipation: 0.0,
        }
    }
}

impl SolverSection {
    pub fn to_config(&self) -> Result<SolverConfig> {
        let scheme = match self.scheme.as_str() {
            "semi-implicit" => Scheme::SemiImplicit,
            "explicit-rk2" => Scheme::ExplicitRk2,
            other => bail!("[solver] unknown scheme {other:?} (semi-implicit | explicit-rk2)"),
        };
        let dt = match (self.dt, self.cfl) {
            (Some(dt), None) => DtControl::Fixed(dt),
            (None, Some(cfl)) => DtControl::Cfl(cfl),
            (None, None) => DtControl::Cfl(0.4),
            (Some(_), Some(_)) => bail!("[solver] dt and cfl are mutually exclusive"),
        };
        let mut cfg = SolverConfig::new(scheme, dt, self.end_time, self.snapshot_dt);
        cfg.hyper_dissipation = self.hyper_dissipation;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    pub field: String,
    #[serde(default = "d_one")]
    pub amp: f64,
    #[serde(default)]
    pub k2: i32,
    #[serde(default = "d_k3")]
    pub k3: i32,
    #[serde(default)]
    pub phase: f64,
}

fn d_k3() -> i32 {
    1
}

impl ModeSection {
    fn to_mode(&self) -> Result<Mode> {
        let field = match self.field.as_str() {
            "rho" => 0,
            "m1" => 1,
            "m2" => 2,
            "m3" => 3,
            other => bail!("[perturbation.modes] unknown field {other:?} (rho | m1 | m2 | m3)"),
        };
        Ok(Mode { field, amp: self.amp, k2: self.k2, k3: self.k3, phase: self.phase })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSection {
    #[serde(default = "d_one")]
    pub width: f64,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "d_bump_amps")]
    pub amps: [f64; 4],
    /// Optional transverse modulation `[amplitude, k2]`.
    #[serde(default)]
    pub modulation: Option<(f64, i32)>,
}

fn d_bump_amps() -> [f64; 4] {
    [1.0, 0.8, 0.0, 0.5]
}

impl Default for BumpSection {
    fn default() -> Self {
        Self { width: 1.0, center: 0.0, amps: d_bump_amps(), modulation: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default)]
    pub modes: Vec<ModeSection>,
    #[serde(default)]
    pub bump: Option<BumpSection>,
}

fn d_eps() -> f64 {
    1e-2
}

impl Default for PerturbationSection {
    fn default() -> Self {
        Self { eps: d_eps(), modes: Vec::new(), bump: None }
    }
}

/// Optional pass/fail targets; every configured target produces a verdict
/// in the run report.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsSection {
    pub flat_slope: Option<f64>,
    pub flat_slope_tol: Option<f64>,
    pub flat_r2_min: Option<f64>,
    pub sharp_r2_min: Option<f64>,
    pub decay_r2_min: Option<f64>,
    pub sigma_r2_min: Option<f64>,
    pub error_terms_r2_min: Option<f64>,
    pub mass_audit_rel_max: Option<f64>,
    pub mass_drift_max: Option<f64>,
    pub mean_drift_max: Option<f64>,
    pub envelope_margin_max: Option<f64>,
    pub min_order: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Power-law fit window for the zero-mode sup norms; defaults to
    /// `[T/10, T]`.
    #[serde(default)]
    pub fit_flat_window: Option<(f64, f64)>,
    /// Exponential fit window for sharp modes; defaults to `[2, T]`.
    #[serde(default)]
    pub fit_sharp_window: Option<(f64, f64)>,
    /// Exponential fit window for shift slope and error-term norms;
    /// defaults to `[2, T]`.
    #[serde(default)]
    pub fit_error_window: Option<(f64, f64)>,
    #[serde(default = "d_min_fit")]
    pub min_fit_amplitude: f64,
    #[serde(default = "d_envelope_c")]
    pub envelope_constant: f64,
    #[serde(default)]
    pub slice_times: Vec<f64>,
    #[serde(default)]
    pub targets: TargetsSection,
}

fn d_min_fit() -> f64 {
    1e-11
}
fn d_envelope_c() -> f64 {
    6.0
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            fit_flat_window: None,
            fit_sharp_window: None,
            fit_error_window: None,
            min_fit_amplitude: d_min_fit(),
            envelope_constant: d_envelope_c(),
            slice_times: Vec::new(),
            targets: TargetsSection::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Recorded for reproducibility of randomized property tests; the
    /// scenarios themselves are deterministic.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub shift_mode: Option<String>,
    /// Background sign for torus-decay runs (+1 or -1).
    #[serde(default = "d_one")]
    pub background_sign: f64,
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub perturbation: PerturbationSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ScenarioConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.dim == 3 {
            bail!(
                "[grid] dim = 3 rejected: the artifact works in the two-dimensional reduction \
                 (set dim = 1 or 2)"
            );
        }
        if self.grid.dim != 1 && self.grid.dim != 2 {
            bail!("[grid] dim must be 1 or 2, got {}", self.grid.dim);
        }
        if self.perturbation.eps < 0.0 {
            bail!("[perturbation] eps must be nonnegative, got {}", self.perturbation.eps);
        }
        self.physics.to_params()?;
        self.solver.to_config()?;
        for m in &self.perturbation.modes {
            m.to_mode()?;
        }
        if matches!(self.kind, ScenarioKind::LocalizedSheet) && self.perturbation.bump.is_none() {
            bail!("[perturbation] localized-sheet needs a bump block");
        }
        Ok(())
    }

    pub fn params(&self) -> Result<PhysParams> {
        self.physics.to_params()
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        self.solver.to_config()
    }

    pub fn modes(&self) -> Result<Vec<Mode>> {
        self.perturbation.modes.iter().map(|m| m.to_mode()).collect()
    }

    pub fn bump(&self) -> Result<Bump> {
        let b = self
            .perturbation
            .bump
            .clone()
            .ok_or_else(|| anyhow!("[perturbation] missing bump block"))?;
        Ok(Bump {
            eps: self.perturbation.eps,
            width: b.width,
            center: b.center,
            amps: b.amps,
            modulation: b.modulation,
        })
    }

    pub fn shift_mode(&self) -> Result<ShiftMode> {
        match self.shift_mode.as_deref() {
            None | Some("zero-mass") => Ok(ShiftMode::ZeroMassConstrained),
            Some("ode") => Ok(ShiftMode::Ode),
            Some(other) => bail!("unknown shift_mode {other:?} (zero-mass | ode)"),
        }
    }

    /// Fit windows with the documented defaults: power fits on `[T/10, T]`,
    /// exponential fits on `[2, T]`.
    pub fn fit_windows(&self) -> FitWindows {
        let t = self.solver.end_time;
        FitWindows {
            flat: self.diagnostics.fit_flat_window.unwrap_or((t / 10.0, t)),
            sharp: self.diagnostics.fit_sharp_window.unwrap_or((2.0, t)),
            error_terms: self.diagnostics.fit_error_window.unwrap_or((2.0, t)),
        }
    }

    pub fn echo_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing config echo")
    }
}
