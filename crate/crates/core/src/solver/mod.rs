//! Conservative finite-difference time integration of the compressible
//! isentropic Navier-Stokes equations in the conserved variables
//! `(rho, m1, m2, m3)`.
//!
//! Space: 2nd-order centered fluxes in flux form (every update telescopes,
//! so torus totals are conserved to round-off). Time: explicit Heun (RK2)
//! for convergence studies, or a semi-implicit scheme for long decay runs
//! (advective and pressure terms forward-Euler, same-direction viscous
//! terms backward-Euler with the density frozen at the updated value; in
//! two dimensions the viscous solve is split per direction).
//!
//! On truncated-line domains the outermost `x3` cell rows are Dirichlet
//! rings overwritten from a [`BoundaryProvider`] after every stage.

pub mod tridiag;

use crate::diagnostics::{self, DecayFit, FitModel};
use crate::grid::{self, Dir, FlowState, HybridGrid};
use crate::math;
use crate::model::PhysParams;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use tridiag::TridiagScratch;

#[derive(Clone, Debug, PartialEq)]
pub enum StepError {
    /// Density at or below the floor; reported with the cell location.
    Vacuum { t: f64, i3: usize, i2: usize, rho: f64 },
    /// NaN or infinity detected after a step.
    NonFinite { t: f64, step: usize },
    /// Linear solve breakdown in the implicit sweep.
    SolveBreakdown { t: f64 },
    Config(String),
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepError::Vacuum { t, i3, i2, rho } => {
                write!(f, "vacuum at t = {t}, cell (i3 = {i3}, i2 = {i2}): rho = {rho}")
            }
            StepError::NonFinite { t, step } => {
                write!(f, "non-finite value after step {step} (t = {t})")
            }
            StepError::SolveBreakdown { t } => write!(f, "implicit solve breakdown at t = {t}"),
            StepError::Config(msg) => write!(f, "solver configuration: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for StepError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Heun's method with fully explicit fluxes; time step limited by both
    /// the advective CFL condition and the viscous bound.
    ExplicitRk2,
    /// Heun (trapezoidal) advective/pressure fluxes with Crank-Nicolson
    /// viscous sweeps at frozen density; time step limited by advection
    /// and a mild acoustic cap, not by the viscous bound.
    SemiImplicit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DtControl {
    Fixed(f64),
    /// Advective CFL target; the explicit scheme additionally honors the
    /// viscous stability bound.
    Cfl(f64),
}

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub dt: DtControl,
    pub end_time: f64,
    /// Snapshot cadence in time units.
    pub snapshot_dt: f64,
    /// Optional 4th-order hyper-dissipation coefficient (0 disables it).
    pub hyper_dissipation: f64,
    /// Densities at or below this value abort the run.
    pub density_floor: f64,
    /// Norm ceiling above which a torus run reports non-convergence.
    pub blowup_ceiling: f64,
}

impl SolverConfig {
    pub fn new(scheme: Scheme, dt: DtControl, end_time: f64, snapshot_dt: f64) -> Self {
        Self {
            scheme,
            dt,
            end_time,
            snapshot_dt,
            hyper_dissipation: 0.0,
            density_floor: 1e-8,
            blowup_ceiling: 1e3,
        }
    }

    pub fn validate(&self, grid: &HybridGrid, params: &PhysParams) -> Result<(), StepError> {
        if let DtControl::Fixed(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(StepError::Config(alloc::format!("dt = {dt} must be positive")));
            }
            if self.scheme == Scheme::ExplicitRk2 {
                let cap = viscous_dt_cap(grid, params, params.rho_bar);
                if dt > cap {
                    return Err(StepError::Config(alloc::format!(
                        "explicit scheme requires dt <= {cap:.3e} (viscous bound), got {dt:.3e}"
                    )));
                }
            }
            if self.scheme == Scheme::SemiImplicit {
                let cap = acoustic_cn_dt_cap(grid, params);
                if dt > cap {
                    return Err(StepError::Config(alloc::format!(
                        "semi-implicit scheme requires dt <= {cap:.3e} (acoustic cap), got {dt:.3e}"
                    )));
                }
            }
        }
        if !(self.end_time >= 0.0) {
            return Err(StepError::Config(String::from("end_time must be nonnegative")));
        }
        Ok(())
    }

    /// Time step for the next update from `state`.
    pub fn next_dt(&self, grid: &HybridGrid, params: &PhysParams, state: &FlowState) -> f64 {
        match self.dt {
            DtControl::Fixed(dt) => dt,
            DtControl::Cfl(cfl) => {
                let mut dt = advective_dt(grid, params, state, cfl);
                match self.scheme {
                    Scheme::ExplicitRk2 => {
                        dt = dt.min(0.9 * viscous_dt_cap(grid, params, state.min_density()));
                    }
                    Scheme::SemiImplicit => {
                        dt = dt.min(acoustic_cn_dt_cap(grid, params));
                    }
                }
                dt
            }
        }
    }
}

/// Explicit-diffusion stability bound `rho_min / (2 nu_max (1/h2^2 + 1/h3^2))`.
pub fn viscous_dt_cap(grid: &HybridGrid, params: &PhysParams, rho_min: f64) -> f64 {
    let nu = params.mu.max(params.mu_tilde());
    let mut inv = 1.0 / (grid.h3 * grid.h3);
    if grid.dim == 2 {
        inv += 1.0 / (grid.h2 * grid.h2);
    }
    rho_min / (2.0 * nu * inv)
}

/// Stability cap of the trapezoidal explicit stage against the
/// Crank-Nicolson viscous damping: the Heun growth of grid-scale acoustic
/// modes, `(c k dt)^4 / 4` per step, must stay below the damping the
/// momentum solve provides, roughly `4 rho / (mu~ k^2 dt)`; a factor 0.5
/// of safety is applied.
pub fn acoustic_cn_dt_cap(grid: &HybridGrid, params: &PhysParams) -> f64 {
    let c = params.sound_speed_bar();
    let mut k_sq = (math::PI / grid.h3) * (math::PI / grid.h3);
    if grid.dim == 2 {
        k_sq += (math::PI / grid.h2) * (math::PI / grid.h2);
    }
    let k6 = k_sq * k_sq * k_sq;
    0.5 * math::powf(16.0 * params.rho_bar / (params.mu_tilde() * c * c * c * c * k6), 0.2)
}

/// Advective CFL bound `cfl * min(h / (|u| + c))` over retained directions.
pub fn advective_dt(grid: &HybridGrid, params: &PhysParams, state: &FlowState, cfl: f64) -> f64 {
    let mut dt = f64::INFINITY;
    for i in 0..grid.len() {
        let rho = state.rho[i];
        let c = math::sqrt(params.dp(rho));
        let u3 = (state.m[2][i] / rho).abs();
        dt = dt.min(grid.h3 / (u3 + c));
        if grid.dim == 2 {
            let u2 = (state.m[1][i] / rho).abs();
            dt = dt.min(grid.h2 / (u2 + c));
        }
    }
    cfl * dt
}

/// Which internal stage of a time step a ring application dresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RingStage {
    /// Stage-1 / predictor state of the step.
    Predictor,
    /// Corrector input and the final state of the step.
    Final,
}

/// Supplies `(rho, m)` at arbitrary grid cells for Dirichlet rings and
/// boundary-contamination estimates.
pub trait BoundaryProvider {
    fn eval(&self, grid: &HybridGrid, t: f64, i3: usize, i2: usize) -> (f64, [f64; 3]);

    /// Stage-resolved variant; providers coupling two runs in lockstep
    /// override this so the rings stay consistent with the partner run's
    /// internal stages. Defaults to the plain evaluation.
    fn eval_stage(
        &self,
        grid: &HybridGrid,
        t: f64,
        _stage: RingStage,
        i3: usize,
        i2: usize,
    ) -> (f64, [f64; 3]) {
        self.eval(grid, t, i3, i2)
    }
}

/// Constant far-field states of the vortex sheet on each side.
pub struct ConstantBoundary {
    pub minus: (f64, [f64; 3]),
    pub plus: (f64, [f64; 3]),
}

impl ConstantBoundary {
    pub fn from_params(params: &PhysParams) -> Self {
        let mk = |s: crate::model::ConstantState| {
            (s.rho, [s.rho * s.u[0], s.rho * s.u[1], s.rho * s.u[2]])
        };
        Self { minus: mk(params.minus_state()), plus: mk(params.plus_state()) }
    }
}

impl BoundaryProvider for ConstantBoundary {
    fn eval(&self, grid: &HybridGrid, _t: f64, i3: usize, _i2: usize) -> (f64, [f64; 3]) {
        if grid.x3(i3) < 0.0 {
            self.minus
        } else {
            self.plus
        }
    }
}

/// The analytic viscous wave (exact far field for wave-tracking tests).
pub struct ViscousWaveBoundary {
    pub params: PhysParams,
}

impl BoundaryProvider for ViscousWaveBoundary {
    fn eval(&self, grid: &HybridGrid, t: f64, i3: usize, _i2: usize) -> (f64, [f64; 3]) {
        let (rho, _, m) = crate::profiles::viscous_wave(grid.x3(i3), t, &self.params);
        (rho, m)
    }
}

impl<F> BoundaryProvider for F
where
    F: Fn(&HybridGrid, f64, usize, usize) -> (f64, [f64; 3]),
{
    fn eval(&self, grid: &HybridGrid, t: f64, i3: usize, i2: usize) -> (f64, [f64; 3]) {
        self(grid, t, i3, i2)
    }
}

/// Tendencies of the four conserved fields.
pub struct Tendency {
    pub rho: Vec<f64>,
    pub m: [Vec<f64>; 3],
}

impl Tendency {
    fn zeros(n: usize) -> Self {
        Self { rho: vec![0.0; n], m: [vec![0.0; n], vec![0.0; n], vec![0.0; n]] }
    }

    fn clear(&mut self) {
        self.rho.fill(0.0);
        for k in 0..3 {
            self.m[k].fill(0.0);
        }
    }
}

/// Time stepper owning scratch buffers for one grid.
pub struct Stepper {
    pub grid: HybridGrid,
    pub params: PhysParams,
    pub hyper_dissipation: f64,
    u: [Vec<f64>; 3],
    p: Vec<f64>,
    d2u2: Vec<f64>,
    d3u3: Vec<f64>,
    tend: Tendency,
    tend2: Tendency,
    visc: [Vec<f64>; 3],
    stage: FlowState,
    scratch: TridiagScratch,
    col_val: Vec<f64>,
    col_sub: Vec<f64>,
    col_diag: Vec<f64>,
    col_sup: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: HybridGrid, params: PhysParams) -> Self {
        let n = grid.len();
        let nmax = grid.n2.max(grid.n3);
        Self {
            grid,
            params,
            hyper_dissipation: 0.0,
            u: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            p: vec![0.0; n],
            d2u2: vec![0.0; n],
            d3u3: vec![0.0; n],
            tend: Tendency::zeros(n),
            tend2: Tendency::zeros(n),
            visc: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            stage: FlowState::zeros(&grid),
            scratch: TridiagScratch::new(nmax),
            col_val: vec![0.0; nmax],
            col_sub: vec![0.0; nmax],
            col_diag: vec![0.0; nmax],
            col_sup: vec![0.0; nmax],
        }
    }

    /// Recomputes the primitive caches `u = m / rho`, `p = rho^gamma` and
    /// the centered divergence pieces. Errors on vacuum.
    fn refresh_primitives(&mut self, state: &FlowState, floor: f64) -> Result<(), StepError> {
        let g = self.grid;
        for i3 in 0..g.n3 {
            for i2 in 0..g.n2 {
                let i = g.idx(i3, i2);
                let rho = state.rho[i];
                if !(rho > floor) {
                    return Err(StepError::Vacuum { t: state.t, i3, i2, rho });
                }
                let inv = 1.0 / rho;
                self.u[0][i] = state.m[0][i] * inv;
                self.u[1][i] = state.m[1][i] * inv;
                self.u[2][i] = state.m[2][i] * inv;
                self.p[i] = self.params.p(rho);
            }
        }
        if g.dim == 2 {
            self.d2u2 = grid::fd(&g, &self.u[1], Dir::X2, 1).expect("shape ok");
        }
        self.d3u3 = grid::fd(&g, &self.u[2], Dir::X3, 1).expect("shape ok");
        Ok(())
    }

    /// Flux-form right-hand side into the internal tendency buffer. With
    /// `explicit_only` the same-direction viscous face terms are omitted
    /// (the implicit sweeps apply them); the mixed `(mu+lambda)` divergence
    /// couplings stay explicit. Tendencies on line Dirichlet rings are zero.
    pub fn rhs(
        &mut self,
        state: &FlowState,
        explicit_only: bool,
        floor: f64,
    ) -> Result<(), StepError> {
        self.refresh_primitives(state, floor)?;
        self.tend.clear();
        let g = self.grid;
        let mu = self.params.mu;
        let mul = self.params.mu + self.params.lambda;
        let visc = if explicit_only { 0.0 } else { 1.0 };
        let line = !g.is_periodic_x3();

        let faces3 = if line { g.n3 - 1 } else { g.n3 };
        for f3 in 0..faces3 {
            let il3 = f3;
            let ir3 = (f3 + 1) % g.n3;
            let inv = 1.0 / g.h3;
            for i2 in 0..g.n2 {
                let il = g.idx(il3, i2);
                let ir = g.idx(ir3, i2);
                let u3l = self.u[2][il];
                let u3r = self.u[2][ir];
                let f_rho = 0.5 * (state.m[2][il] + state.m[2][ir]);
                let du1 = (self.u[0][ir] - self.u[0][il]) * inv;
                let du2 = (self.u[1][ir] - self.u[1][il]) * inv;
                let du3 = (self.u[2][ir] - self.u[2][il]) * inv;
                let f_m1 = 0.5 * (state.m[0][il] * u3l + state.m[0][ir] * u3r) - visc * mu * du1;
                let f_m2 = 0.5 * (state.m[1][il] * u3l + state.m[1][ir] * u3r) - visc * mu * du2;
                let cross = if g.dim == 2 { 0.5 * (self.d2u2[il] + self.d2u2[ir]) } else { 0.0 };
                let f_m3 = 0.5
                    * (state.m[2][il] * u3l + self.p[il] + state.m[2][ir] * u3r + self.p[ir])
                    - visc * (mu + mul) * du3
                    - mul * cross;
                self.tend.rho[il] -= f_rho * inv;
                self.tend.rho[ir] += f_rho * inv;
                self.tend.m[0][il] -= f_m1 * inv;
                self.tend.m[0][ir] += f_m1 * inv;
                self.tend.m[1][il] -= f_m2 * inv;
                self.tend.m[1][ir] += f_m2 * inv;
                self.tend.m[2][il] -= f_m3 * inv;
                self.tend.m[2][ir] += f_m3 * inv;
            }
        }

        if g.dim == 2 {
            let inv = 1.0 / g.h2;
            for i3 in 0..g.n3 {
                for f2 in 0..g.n2 {
                    let il = g.idx(i3, f2);
                    let ir = g.idx(i3, (f2 + 1) % g.n2);
                    let u2l = self.u[1][il];
                    let u2r = self.u[1][ir];
                    let f_rho = 0.5 * (state.m[1][il] + state.m[1][ir]);
                    let du1 = (self.u[0][ir] - self.u[0][il]) * inv;
                    let du2 = (self.u[1][ir] - self.u[1][il]) * inv;
                    let du3 = (self.u[2][ir] - self.u[2][il]) * inv;
                    let f_m1 =
                        0.5 * (state.m[0][il] * u2l + state.m[0][ir] * u2r) - visc * mu * du1;
                    let cross = 0.5 * (self.d3u3[il] + self.d3u3[ir]);
                    let f_m2 = 0.5
                        * (state.m[1][il] * u2l + self.p[il] + state.m[1][ir] * u2r + self.p[ir])
                        - visc * (mu + mul) * du2
                        - mul * cross;
                    let f_m3 =
                        0.5 * (state.m[2][il] * u2l + state.m[2][ir] * u2r) - visc * mu * du3;
                    self.tend.rho[il] -= f_rho * inv;
                    self.tend.rho[ir] += f_rho * inv;
                    self.tend.m[0][il] -= f_m1 * inv;
                    self.tend.m[0][ir] += f_m1 * inv;
                    self.tend.m[1][il] -= f_m2 * inv;
                    self.tend.m[1][ir] += f_m2 * inv;
                    self.tend.m[2][il] -= f_m3 * inv;
                    self.tend.m[2][ir] += f_m3 * inv;
                }
            }
        }

        if self.hyper_dissipation > 0.0 {
            self.add_hyper_dissipation(state);
        }

        if line {
            for i2 in 0..g.n2 {
                for ring in [0, g.n3 - 1] {
                    let i = g.idx(ring, i2);
                    self.tend.rho[i] = 0.0;
                    for k in 0..3 {
                        self.tend.m[k][i] = 0.0;
                    }
                }
            }
        }
        Ok(())
    }

    /// Tendency computed by the last [`Stepper::rhs`] call.
    pub fn tendency(&self) -> &Tendency {
        &self.tend
    }

    // Flux-form 4th-order dissipation along x3, scaled by the reference
    // sound speed. Off by default; for runs that report grid-scale
    // oscillation only.
    fn add_hyper_dissipation(&mut self, state: &FlowState) {
        let g = self.grid;
        let eps = self.hyper_dissipation;
        let a = self.params.sound_speed_bar();
        let line = !g.is_periodic_x3();
        let (lo, hi) = if line { (1, g.n3 - 2) } else { (0, g.n3) };
        for field in 0..4usize {
            for f3 in lo..hi {
                if line && f3 + 2 > g.n3 - 1 {
                    continue;
                }
                for i2 in 0..g.n2 {
                    let at = |j: usize| {
                        let i = g.idx(j % g.n3, i2);
                        if field == 0 {
                            state.rho[i]
                        } else {
                            state.m[field - 1][i]
                        }
                    };
                    let jm = if f3 == 0 { g.n3 - 1 } else { f3 - 1 };
                    let third = at(f3 + 2) - 3.0 * at(f3 + 1) + 3.0 * at(f3) - at(jm);
                    let flux = eps * a * third;
                    let il = g.idx(f3, i2);
                    let ir = g.idx((f3 + 1) % g.n3, i2);
                    let (dl, dr) = (-flux / g.h3, flux / g.h3);
                    if field == 0 {
                        self.tend.rho[il] += dl;
                        self.tend.rho[ir] += dr;
                    } else {
                        self.tend.m[field - 1][il] += dl;
                        self.tend.m[field - 1][ir] += dr;
                    }
                }
            }
        }
    }

    fn dress_rings(
        &self,
        state: &mut FlowState,
        boundary: Option<&dyn BoundaryProvider>,
        t: f64,
        stage: RingStage,
    ) {
        let g = self.grid;
        if g.is_periodic_x3() {
            return;
        }
        if let Some(b) = boundary {
            for ring in [0, g.n3 - 1] {
                for i2 in 0..g.n2 {
                    let (rho, m) = b.eval_stage(&g, t, stage, ring, i2);
                    let i = g.idx(ring, i2);
                    state.rho[i] = rho;
                    for k in 0..3 {
                        state.m[k][i] = m[k];
                    }
                }
            }
        }
    }

    /// State of the internal predictor / first stage of the most recent
    /// step (valid right after [`Stepper::step`] returns).
    pub fn last_stage(&self) -> &FlowState {
        &self.stage
    }

    /// One time step. Line grids need a boundary provider.
    pub fn step(
        &mut self,
        state: &mut FlowState,
        cfg: &SolverConfig,
        dt: f64,
        boundary: Option<&dyn BoundaryProvider>,
        step_index: usize,
    ) -> Result<(), StepError> {
        let line = !self.grid.is_periodic_x3();
        if line && boundary.is_none() {
            return Err(StepError::Config(String::from("line grids need a boundary provider")));
        }
        match cfg.scheme {
            Scheme::ExplicitRk2 => self.step_rk2(state, cfg, dt, boundary)?,
            Scheme::SemiImplicit => self.step_semi_implicit(state, cfg, dt, boundary)?,
        }
        state.t += dt;
        self.dress_rings(state, boundary, state.t, RingStage::Final);
        if !state.rho.iter().all(|v| v.is_finite())
            || !state.m.iter().all(|m| m.iter().all(|v| v.is_finite()))
        {
            return Err(StepError::NonFinite { t: state.t, step: step_index });
        }
        Ok(())
    }

    fn step_rk2(
        &mut self,
        state: &mut FlowState,
        cfg: &SolverConfig,
        dt: f64,
        boundary: Option<&dyn BoundaryProvider>,
    ) -> Result<(), StepError> {
        let n = self.grid.len();
        // stage 1: y1 = y + dt f(y)
        self.rhs(state, false, cfg.density_floor)?;
        self.stage.t = state.t + dt;
        for i in 0..n {
            self.stage.rho[i] = state.rho[i] + dt * self.tend.rho[i];
            for k in 0..3 {
                self.stage.m[k][i] = state.m[k][i] + dt * self.tend.m[k][i];
            }
        }
        core::mem::swap(&mut self.tend, &mut self.tend2);
        let mut staged = core::mem::replace(&mut self.stage, FlowState::empty());
        self.dress_rings(&mut staged, boundary, state.t + dt, RingStage::Predictor);
        // stage 2: y <- y + dt/2 (f(y) + f(y1))
        let res = self.rhs(&staged, false, cfg.density_floor);
        self.stage = staged;
        res?;
        for i in 0..n {
            state.rho[i] += 0.5 * dt * (self.tend2.rho[i] + self.tend.rho[i]);
            for k in 0..3 {
                state.m[k][i] += 0.5 * dt * (self.tend2.m[k][i] + self.tend.m[k][i]);
            }
        }
        Ok(())
    }

    // IMEX trapezoidal step: backward-Euler predictor, then a corrector
    // with trapezoidal explicit fluxes and Crank-Nicolson viscous sweeps,
    // every implicit solve at the frozen updated density.
    fn step_semi_implicit(
        &mut self,
        state: &mut FlowState,
        cfg: &SolverConfig,
        dt: f64,
        boundary: Option<&dyn BoundaryProvider>,
    ) -> Result<(), StepError> {
        let g = self.grid;
        let n = g.len();
        let t_new = state.t + dt;

        // E(y^n) and I(y^n)
        self.rhs(state, true, cfg.density_floor)?;
        core::mem::swap(&mut self.tend, &mut self.tend2); // tend2 = E(y^n)
        self.viscous_apply(state);

        // predictor: y* = y^n + dt E(y^n) + dt I(y*)
        self.stage.t = t_new;
        for i in 0..n {
            self.stage.rho[i] = state.rho[i] + dt * self.tend2.rho[i];
            for k in 0..3 {
                self.stage.m[k][i] = state.m[k][i] + dt * self.tend2.m[k][i];
            }
        }
        let mut staged = core::mem::replace(&mut self.stage, FlowState::empty());
        self.dress_rings(&mut staged, boundary, t_new, RingStage::Predictor);
        self.check_density(&staged, cfg.density_floor, t_new)?;
        self.implicit_sweeps(&mut staged, dt, t_new)?;
        self.dress_rings(&mut staged, boundary, t_new, RingStage::Predictor);

        // corrector: y^{n+1} = y^n + dt/2 [E(y^n) + E(y*)] + dt/2 [I(y^n) + I(y^{n+1})]
        let res = self.rhs(&staged, true, cfg.density_floor);
        self.stage = staged;
        res?;
        for i in 0..n {
            state.rho[i] += 0.5 * dt * (self.tend2.rho[i] + self.tend.rho[i]);
            for k in 0..3 {
                state.m[k][i] += 0.5
                    * dt
                    * (self.tend2.m[k][i] + self.tend.m[k][i] + self.visc[k][i]);
            }
        }
        self.dress_rings(state, boundary, t_new, RingStage::Final);
        self.check_density(state, cfg.density_floor, t_new)?;
        self.implicit_sweeps(state, 0.5 * dt, t_new)?;
        Ok(())
    }

    fn check_density(&self, state: &FlowState, floor: f64, t: f64) -> Result<(), StepError> {
        for (i, &rho) in state.rho.iter().enumerate() {
            if !(rho > floor) {
                return Err(StepError::Vacuum {
                    t,
                    i3: i / self.grid.n2,
                    i2: i % self.grid.n2,
                    rho,
                });
            }
        }
        Ok(())
    }

    // Same-direction viscous flux divergence of `state` into `self.visc`
    // (the part the implicit sweeps integrate).
    fn viscous_apply(&mut self, state: &FlowState) {
        let g = self.grid;
        for k in 0..3 {
            self.visc[k].fill(0.0);
        }
        // u caches are valid: rhs() ran on the same state just before
        let nu3 = [self.params.mu, self.params.mu, self.params.mu_tilde()];
        let line = !g.is_periodic_x3();
        let faces3 = if line { g.n3 - 1 } else { g.n3 };
        let inv = 1.0 / g.h3;
        for f3 in 0..faces3 {
            let il3 = f3;
            let ir3 = (f3 + 1) % g.n3;
            for i2 in 0..g.n2 {
                let il = g.idx(il3, i2);
                let ir = g.idx(ir3, i2);
                for k in 0..3 {
                    let flux = nu3[k] * (self.u[k][ir] - self.u[k][il]) * inv;
                    self.visc[k][il] += flux * inv;
                    self.visc[k][ir] -= flux * inv;
                }
            }
        }
        if g.dim == 2 {
            let mul = self.params.mu + self.params.lambda;
            let nu2 = [self.params.mu, self.params.mu + mul, self.params.mu];
            let inv = 1.0 / g.h2;
            for i3 in 0..g.n3 {
                for f2 in 0..g.n2 {
                    let il = g.idx(i3, f2);
                    let ir = g.idx(i3, (f2 + 1) % g.n2);
                    for k in 0..3 {
                        let flux = nu2[k] * (self.u[k][ir] - self.u[k][il]) * inv;
                        self.visc[k][il] += flux * inv;
                        self.visc[k][ir] -= flux * inv;
                    }
                }
            }
        }
        if line {
            for i2 in 0..g.n2 {
                for ring in [0, g.n3 - 1] {
                    let i = g.idx(ring, i2);
                    for k in 0..3 {
                        self.visc[k][i] = 0.0;
                    }
                }
            }
        }
        let _ = state;
    }

    // Direction-split solves of (rho u - coeff_dt nu D u) = m at frozen
    // density, writing the momenta back.
    fn implicit_sweeps(&mut self, state: &mut FlowState, coeff_dt: f64, t_new: f64) -> Result<(), StepError> {
        let g = self.grid;
        let line = !g.is_periodic_x3();
        let nu3 = [self.params.mu, self.params.mu, self.params.mu_tilde()];
        let r3 = coeff_dt / (g.h3 * g.h3);
        for k in 0..3 {
            let coeff = nu3[k] * r3;
            for i2 in 0..g.n2 {
                if line {
                    let ni = g.n3 - 2;
                    for j in 0..ni {
                        let i = g.idx(j + 1, i2);
                        self.col_sub[j] = -coeff;
                        self.col_sup[j] = -coeff;
                        self.col_diag[j] = state.rho[i] + 2.0 * coeff;
                        self.col_val[j] = state.m[k][i];
                    }
                    let ul = state.m[k][g.idx(0, i2)] / state.rho[g.idx(0, i2)];
                    let ur = state.m[k][g.idx(g.n3 - 1, i2)] / state.rho[g.idx(g.n3 - 1, i2)];
                    self.col_val[0] += coeff * ul;
                    self.col_val[ni - 1] += coeff * ur;
                    if !tridiag::solve_tridiag(
                        &self.col_sub[..ni],
                        &self.col_diag[..ni],
                        &self.col_sup[..ni],
                        &mut self.col_val[..ni],
                        &mut self.scratch,
                    ) {
                        return Err(StepError::SolveBreakdown { t: t_new });
                    }
                    for j in 0..ni {
                        let i = g.idx(j + 1, i2);
                        state.m[k][i] = state.rho[i] * self.col_val[j];
                    }
                } else {
                    let ni = g.n3;
                    for j in 0..ni {
                        let i = g.idx(j, i2);
                        self.col_sub[j] = -coeff;
                        self.col_sup[j] = -coeff;
                        self.col_diag[j] = state.rho[i] + 2.0 * coeff;
                        self.col_val[j] = state.m[k][i];
                    }
                    if !tridiag::solve_cyclic_tridiag(
                        &self.col_sub[..ni],
                        &self.col_diag[..ni],
                        &self.col_sup[..ni],
                        &mut self.col_val[..ni],
                        &mut self.scratch,
                    ) {
                        return Err(StepError::SolveBreakdown { t: t_new });
                    }
                    for j in 0..ni {
                        let i = g.idx(j, i2);
                        state.m[k][i] = state.rho[i] * self.col_val[j];
                    }
                }
            }
        }
        if g.dim == 2 {
            let mul = self.params.mu + self.params.lambda;
            let nu2 = [self.params.mu, self.params.mu + mul, self.params.mu];
            let r2 = coeff_dt / (g.h2 * g.h2);
            for k in 0..3 {
                let coeff = nu2[k] * r2;
                let rows = if line { 1..g.n3 - 1 } else { 0..g.n3 };
                for i3 in rows {
                    let ni = g.n2;
                    for j in 0..ni {
                        let i = g.idx(i3, j);
                        self.col_sub[j] = -coeff;
                        self.col_sup[j] = -coeff;
                        self.col_diag[j] = state.rho[i] + 2.0 * coeff;
                        self.col_val[j] = state.m[k][i];
                    }
                    if !tridiag::solve_cyclic_tridiag(
                        &self.col_sub[..ni],
                        &self.col_diag[..ni],
                        &self.col_sup[..ni],
                        &mut self.col_val[..ni],
                        &mut self.scratch,
                    ) {
                        return Err(StepError::SolveBreakdown { t: t_new });
                    }
                    for j in 0..ni {
                        let i = g.idx(i3, j);
                        state.m[k][i] = state.rho[i] * self.col_val[j];
                    }
                }
            }
        }
        Ok(())
    }
}

/// Overwrites the Dirichlet rings of a line state from the provider.
pub fn apply_rings(
    grid: &HybridGrid,
    state: &mut FlowState,
    boundary: &dyn BoundaryProvider,
    t: f64,
) {
    if grid.is_periodic_x3() {
        return;
    }
    for ring in [0, grid.n3 - 1] {
        for i2 in 0..grid.n2 {
            let (rho, m) = boundary.eval(grid, t, ring, i2);
            let i = grid.idx(ring, i2);
            state.rho[i] = rho;
            for k in 0..3 {
                state.m[k][i] = m[k];
            }
        }
    }
}

/// Outcome of a fully periodic decay run.
pub struct TorusRunReport {
    /// `(t, max over fields of W^{1,inf} distance to the constant state)`.
    pub samples: Vec<(f64, f64)>,
    /// Largest drift of the four field means from their initial values.
    pub mean_drift_max: f64,
    /// Exponential fit over the requested window (skipped for degenerate
    /// series).
    pub fit: Option<DecayFit>,
    pub converged: bool,
    pub steps: usize,
    pub final_state: FlowState,
}

/// Evolves periodic initial data and records the decay towards the
/// constant state `(rho_bar, m_bar)`. The initial perturbation must have
/// zero average (checked to 1e-12 relative).
pub fn run_torus(
    ic: FlowState,
    grid: &HybridGrid,
    params: &PhysParams,
    cfg: &SolverConfig,
    background_m: [f64; 3],
    fit_window: Option<(f64, f64)>,
) -> Result<TorusRunReport, StepError> {
    if !grid.is_periodic_x3() {
        return Err(StepError::Config(String::from("run_torus needs a fully periodic grid")));
    }
    cfg.validate(grid, params)?;
    let mean = |f: &[f64]| grid::integrate_field(grid, f);
    let means0 = [
        mean(&ic.rho),
        mean(&ic.m[0]),
        mean(&ic.m[1]),
        mean(&ic.m[2]),
    ];
    let scale = params.rho_bar.max(params.m_bar3().iter().fold(0.0_f64, |a, v| a.max(v.abs())));
    let want = [params.rho_bar, background_m[0], background_m[1], background_m[2]];
    for (got, want) in means0.iter().zip(want.iter()) {
        if (got - want).abs() > 1e-12 * scale.max(1.0) {
            return Err(StepError::Config(alloc::format!(
                "initial perturbation must have zero average: mean {got} vs background {want}"
            )));
        }
    }

    let mut state = ic;
    let mut stepper = Stepper::new(*grid, *params);
    stepper.hyper_dissipation = cfg.hyper_dissipation;
    let mut samples = Vec::new();
    let mut mean_drift_max = 0.0_f64;
    let mut steps = 0usize;
    let mut next_snapshot = 0.0_f64;
    let mut converged = true;

    let distance = |state: &FlowState| -> Result<f64, StepError> {
        let mut worst = 0.0_f64;
        let diff: Vec<f64> = state.rho.iter().map(|v| v - params.rho_bar).collect();
        worst = worst.max(grid::w1inf(grid, &diff).map_err(|e| StepError::Config(alloc::format!("{e}")))?);
        for k in 0..3 {
            let diff: Vec<f64> = state.m[k].iter().map(|v| v - background_m[k]).collect();
            worst = worst.max(grid::w1inf(grid, &diff).map_err(|e| StepError::Config(alloc::format!("{e}")))?);
        }
        Ok(worst)
    };

    loop {
        if state.t + 1e-12 >= next_snapshot {
            let d = distance(&state)?;
            samples.push((state.t, d));
            let drift = [
                mean(&state.rho) - means0[0],
                mean(&state.m[0]) - means0[1],
                mean(&state.m[1]) - means0[2],
                mean(&state.m[2]) - means0[3],
            ];
            for v in drift {
                mean_drift_max = mean_drift_max.max(v.abs());
            }
            if d > cfg.blowup_ceiling {
                converged = false;
                break;
            }
            next_snapshot += cfg.snapshot_dt;
        }
        if state.t >= cfg.end_time - 1e-12 {
            break;
        }
        let dt = cfg.next_dt(grid, params, &state).min(cfg.end_time - state.t);
        stepper.step(&mut state, cfg, dt, None, steps)?;
        steps += 1;
    }

    let fit = fit_window.and_then(|(a, b)| {
        diagnostics::fit_decay(&samples, FitModel::Exponential, (a, b)).ok()
    });
    Ok(TorusRunReport { samples, mean_drift_max, fit, converged, steps, final_state: state })
}

/// Statistics of a truncated-line run.
pub struct LineRunStats {
    pub steps: usize,
    /// Worst `|solution - provider|` over the 8 cells adjacent to each
    /// Dirichlet ring, sampled at snapshot times.
    pub boundary_contamination: f64,
    pub final_state: FlowState,
}

/// Evolves a line initial state under Dirichlet rings from `boundary`,
/// invoking `on_snapshot` at the configured cadence (including t = 0 and
/// the final time). The initial state must agree with the provider on the
/// rings to 1e-8 relative.
pub fn run_line(
    ic: FlowState,
    grid: &HybridGrid,
    params: &PhysParams,
    cfg: &SolverConfig,
    boundary: &dyn BoundaryProvider,
    mut on_snapshot: impl FnMut(&FlowState, usize),
) -> Result<LineRunStats, StepError> {
    if grid.is_periodic_x3() {
        return Err(StepError::Config(String::from("run_line needs a truncated-line grid")));
    }
    cfg.validate(grid, params)?;
    let scale = 1.0 + params.m_bar3().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    for ring in [0, grid.n3 - 1] {
        for i2 in 0..grid.n2 {
            let (rho, m) = boundary.eval(grid, ic.t, ring, i2);
            let i = grid.idx(ring, i2);
            let err = (ic.rho[i] - rho)
                .abs()
                .max((0..3).map(|k| (ic.m[k][i] - m[k]).abs()).fold(0.0, f64::max));
            if err > 1e-8 * scale {
                return Err(StepError::Config(alloc::format!(
                    "initial data inconsistent with boundary provider at ring {ring}: {err:.3e}"
                )));
            }
        }
    }

    let mut state = ic;
    let mut stepper = Stepper::new(*grid, *params);
    stepper.hyper_dissipation = cfg.hyper_dissipation;
    let mut steps = 0usize;
    let mut next_snapshot = state.t;
    let mut contamination = 0.0_f64;
    loop {
        if state.t + 1e-12 >= next_snapshot {
            on_snapshot(&state, steps);
            contamination = contamination.max(ring_contamination(grid, &state, boundary));
            next_snapshot += cfg.snapshot_dt;
        }
        if state.t >= cfg.end_time - 1e-12 {
            break;
        }
        let dt = cfg.next_dt(grid, params, &state).min(cfg.end_time - state.t);
        stepper.step(&mut state, cfg, dt, Some(boundary), steps)?;
        steps += 1;
    }
    Ok(LineRunStats { steps, boundary_contamination: contamination, final_state: state })
}

/// Max mismatch between the state and the provider over the 8 cells next
/// to each Dirichlet ring.
pub fn ring_contamination(
    grid: &HybridGrid,
    state: &FlowState,
    boundary: &dyn BoundaryProvider,
) -> f64 {
    let mut worst = 0.0_f64;
    let depth = 8.min(grid.n3.saturating_sub(2) / 2);
    for d in 1..=depth {
        for i3 in [d, grid.n3 - 1 - d] {
            for i2 in 0..grid.n2 {
                let (rho, m) = boundary.eval(grid, state.t, i3, i2);
                let i = grid.idx(i3, i2);
                worst = worst.max((state.rho[i] - rho).abs());
                for k in 0..3 {
                    worst = worst.max((state.m[k][i] - m[k]).abs());
                }
            }
        }
    }
    worst
}
