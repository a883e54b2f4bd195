//! Background ansatz assembly and its closed-form error terms.
//!
//! Periodic mode: two periodic solutions blended through the shifted
//! profile `Theta_sigma = Theta((x3 - sigma(t)) / sqrt(t + Lambda))`, with
//! the shift curve chosen so the zero-mode perturbation keeps zero mass.
//! Localized mode: the viscous wave plus diffusion waves carrying the
//! decomposed initial mass along the transverse characteristics.

use crate::grid::{self, FlowState, HybridGrid};
use crate::math;
use crate::model::{far_field_eigen, PhysParams};
use crate::profiles::{DiffusionKernel, SelfSimilarProfile};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum AnsatzError {
    TimeMismatch { minus: f64, plus: f64 },
    /// Assembled density left `[rho_bar / 2, 2 rho_bar]`.
    DensityFloor { value: f64 },
    /// `D(sigma, t) <= 0`; cannot happen for densities near `rho_bar`.
    DegenerateDenominator { value: f64 },
    /// `|sigma'|` exceeded the sanity ceiling.
    ShiftRunaway { sigma_dot: f64 },
    Grid(String),
}

impl fmt::Display for AnsatzError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnsatzError::TimeMismatch { minus, plus } => {
                write!(f, "torus states at different times: {minus} vs {plus}")
            }
            AnsatzError::DensityFloor { value } => {
                write!(f, "ansatz density {value} violates the [rho_bar/2, 2 rho_bar] band")
            }
            AnsatzError::DegenerateDenominator { value } => {
                write!(f, "shift denominator D = {value} is not positive")
            }
            AnsatzError::ShiftRunaway { sigma_dot } => {
                write!(f, "|sigma'| = {sigma_dot} exceeds the sanity ceiling")
            }
            AnsatzError::Grid(msg) => write!(f, "{msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for AnsatzError {}

impl From<grid::GridError> for AnsatzError {
    fn from(e: grid::GridError) -> Self {
        AnsatzError::Grid(alloc::format!("{e}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnsatzMode {
    PeriodicBlend,
    LocalizedDiffusion,
}

/// Assembled background fields on a line grid at one time instant.
#[derive(Clone, Debug)]
pub struct AnsatzBundle {
    pub t: f64,
    pub sigma: f64,
    pub mode: AnsatzMode,
    pub rho: Vec<f64>,
    pub m: [Vec<f64>; 3],
    /// `u = m / rho` pointwise.
    pub u: [Vec<f64>; 3],
}

/// `Theta_sigma` and `d3 Theta_sigma` sampled on the line.
pub fn theta_sigma_profiles(
    line: &HybridGrid,
    t: f64,
    sigma: f64,
    params: &PhysParams,
) -> (Vec<f64>, Vec<f64>) {
    let profile = SelfSimilarProfile::from_params(params);
    let tau = t + params.lambda_age;
    let root = math::sqrt(tau);
    let mut th = Vec::with_capacity(line.n3);
    let mut dth = Vec::with_capacity(line.n3);
    for i in 0..line.n3 {
        let xi = (line.x3(i) - sigma) / root;
        th.push(profile.theta_xi(xi, 0).expect("j=0"));
        dth.push(profile.theta_xi(xi, 1).expect("j=1") / root);
    }
    (th, dth)
}

/// Derives the `+` periodic solution from the `-` one through the
/// coincidence identity `(rho_+, u_+)(x + u_bar t) = (rho_-, u_-)(x - u_bar t) + (0, 2 u_bar)`.
/// In one dimension the transverse shift is trivial; in two dimensions the
/// conserved fields are shifted by `2 u_bar_2 t` with the spectral
/// interpolant (zero modes are preserved exactly).
pub fn coincidence_plus_from_minus(
    torus: &HybridGrid,
    minus: &FlowState,
    params: &PhysParams,
) -> Result<FlowState, AnsatzError> {
    let ub = params.u_bar3();
    let (rho_s, m_s) = if torus.dim == 2 && ub[1] != 0.0 {
        let shift = (2.0 * ub[1] * minus.t).rem_euclid(1.0);
        let rho_s = grid::spectral_shift_x2(torus, &minus.rho, shift)?;
        let m_s = [
            grid::spectral_shift_x2(torus, &minus.m[0], shift)?,
            grid::spectral_shift_x2(torus, &minus.m[1], shift)?,
            grid::spectral_shift_x2(torus, &minus.m[2], shift)?,
        ];
        (rho_s, m_s)
    } else {
        (minus.rho.clone(), minus.m.clone())
    };
    let n = torus.len();
    let mut m = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        for k in 0..3 {
            m[k][i] = m_s[k][i] + 2.0 * rho_s[i] * ub[k];
        }
    }
    Ok(FlowState { t: minus.t, rho: rho_s, m })
}

/// Periodic-blend ansatz
/// `(rho~, m~) = [ (rho_-, m_-)(1 - Theta_sigma) + (rho_+, m_+)(1 + Theta_sigma) ] / 2`
/// with the torus states carried onto the line by exact periodic extension.
pub fn assemble_periodic(
    line: &HybridGrid,
    torus: &HybridGrid,
    minus: &FlowState,
    plus: &FlowState,
    sigma: f64,
    params: &PhysParams,
) -> Result<AnsatzBundle, AnsatzError> {
    if minus.t != plus.t {
        return Err(AnsatzError::TimeMismatch { minus: minus.t, plus: plus.t });
    }
    let t = minus.t;
    let (th, _) = theta_sigma_profiles(line, t, sigma, params);
    let rho_m = grid::extend_torus_field(line, torus, &minus.rho)?;
    let rho_p = grid::extend_torus_field(line, torus, &plus.rho)?;
    let n = line.len();
    let mut rho = vec![0.0; n];
    let mut m = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for k in 0..3 {
        let mm = grid::extend_torus_field(line, torus, &minus.m[k])?;
        let mp = grid::extend_torus_field(line, torus, &plus.m[k])?;
        for i3 in 0..line.n3 {
            let w_m = 0.5 * (1.0 - th[i3]);
            let w_p = 0.5 * (1.0 + th[i3]);
            for i2 in 0..line.n2 {
                let i = line.idx(i3, i2);
                m[k][i] = w_m * mm[i] + w_p * mp[i];
            }
        }
    }
    for i3 in 0..line.n3 {
        let w_m = 0.5 * (1.0 - th[i3]);
        let w_p = 0.5 * (1.0 + th[i3]);
        for i2 in 0..line.n2 {
            let i = line.idx(i3, i2);
            rho[i] = w_m * rho_m[i] + w_p * rho_p[i];
            if !(rho[i] >= 0.5 * params.rho_bar && rho[i] <= 2.0 * params.rho_bar) {
                return Err(AnsatzError::DensityFloor { value: rho[i] });
            }
        }
    }
    let mut u = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for k in 0..3 {
        for i in 0..n {
            u[k][i] = m[k][i] / rho[i];
        }
    }
    Ok(AnsatzBundle { t, sigma, mode: AnsatzMode::PeriodicBlend, rho, m, u })
}

/// Localized (diffusion-wave) ansatz in vector form:
/// `(rho~, m~) = (viscous wave) + a0 r0^- k_- + a3 r3^+ k_+ + (a1 r1 + a2 r2) k0`.
pub fn assemble_localized(
    alphas: [f64; 4],
    t: f64,
    line: &HybridGrid,
    params: &PhysParams,
) -> Result<AnsatzBundle, AnsatzError> {
    let ff = far_field_eigen(params);
    let k_minus = DiffusionKernel::minus(params);
    let k_plus = DiffusionKernel::plus(params);
    let k_zero = DiffusionKernel::stationary(params);
    let n = line.len();
    let mut rho = vec![0.0; n];
    let mut m = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let e1 = [0.0, 1.0, 0.0, 0.0];
    let e2 = [0.0, 0.0, 1.0, 0.0];
    for i3 in 0..line.n3 {
        let x3 = line.x3(i3);
        let (rho_vs, _, m_vs) = crate::profiles::viscous_wave(x3, t, params);
        let km = k_minus.eval(x3, t);
        let kp = k_plus.eval(x3, t);
        let k0 = k_zero.eval(x3, t);
        let mut v = [rho_vs, m_vs[0], m_vs[1], m_vs[2]];
        for c in 0..4 {
            v[c] += alphas[0] * ff.r0_minus[c] * km
                + alphas[3] * ff.r3_plus[c] * kp
                + (alphas[1] * e1[c] + alphas[2] * e2[c]) * k0;
        }
        if !(v[0] >= 0.5 * params.rho_bar && v[0] <= 2.0 * params.rho_bar) {
            return Err(AnsatzError::DensityFloor { value: v[0] });
        }
        for i2 in 0..line.n2 {
            let i = line.idx(i3, i2);
            rho[i] = v[0];
            for k in 0..3 {
                m[k][i] = v[1 + k];
            }
        }
    }
    let mut u = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for k in 0..3 {
        for i in 0..n {
            u[k][i] = m[k][i] / rho[i];
        }
    }
    Ok(AnsatzBundle { t, sigma: 0.0, mode: AnsatzMode::LocalizedDiffusion, rho, m, u })
}

/// The component-by-component form of the localized ansatz (independent
/// assembly route used to cross-check [`assemble_localized`]):
/// `rho~ = rho_bar + a0 k_- + a3 k_+`,
/// `m~_i = rho_bar u_i^vs + u_bar_i (a3 k_+ - a0 k_-) + a_i k0` for `i = 1, 2`,
/// `m~_3 = lambda_0^- a0 k_- + lambda_3^+ a3 k_+`.
pub fn assemble_localized_components(
    alphas: [f64; 4],
    t: f64,
    line: &HybridGrid,
    params: &PhysParams,
) -> (Vec<f64>, [Vec<f64>; 3]) {
    let ff = far_field_eigen(params);
    let k_minus = DiffusionKernel::minus(params);
    let k_plus = DiffusionKernel::plus(params);
    let k_zero = DiffusionKernel::stationary(params);
    let profile = SelfSimilarProfile::from_params(params);
    let ub = params.u_bar3();
    let mut rho = Vec::with_capacity(line.n3);
    let mut m = [
        Vec::with_capacity(line.n3),
        Vec::with_capacity(line.n3),
        Vec::with_capacity(line.n3),
    ];
    for i3 in 0..line.n3 {
        let x3 = line.x3(i3);
        let km = k_minus.eval(x3, t);
        let kp = k_plus.eval(x3, t);
        let k0 = k_zero.eval(x3, t);
        let th = profile.theta_field(x3, t, 0).expect("t + Lambda > 0");
        rho.push(params.rho_bar + alphas[0] * km + alphas[3] * kp);
        for i in 0..2 {
            m[i].push(
                params.rho_bar * ub[i] * th
                    + ub[i] * (alphas[3] * kp - alphas[0] * km)
                    + alphas[1 + i] * k0,
            );
        }
        m[2].push(ff.lambda0_minus * alphas[0] * km + ff.lambda3_plus * alphas[3] * kp);
    }
    (rho, m)
}

/// Quadrature pieces of the shift ODE right-hand side.
#[derive(Clone, Copy, Debug)]
pub struct ShiftRhs {
    pub sigma_dot: f64,
    pub n_numer: f64,
    pub d_denom: f64,
}

/// Evaluates `sigma' = N(sigma, t) / D(sigma, t)` from the zero modes of
/// the `-` periodic solution, by midpoint quadrature over the window where
/// `Theta' > 1e-16` (the profile tails are below round-off).
pub fn shift_rhs(
    sigma: f64,
    t: f64,
    line: &HybridGrid,
    torus_n3: usize,
    rho_flat: &[f64],
    m3_flat: &[f64],
    params: &PhysParams,
) -> Result<ShiftRhs, AnsatzError> {
    let rho_ext = grid::extend_torus_profile(line, torus_n3, rho_flat)?;
    let m3_ext = grid::extend_torus_profile(line, torus_n3, m3_flat)?;
    let profile = SelfSimilarProfile::from_params(params);
    let tau = t + params.lambda_age;
    let root = math::sqrt(tau);
    let mut n_acc = math::KahanSum::new();
    let mut d_acc = math::KahanSum::new();
    for i in 0..line.n3 {
        let x = line.x3(i);
        let dth = profile.theta_xi((x - sigma) / root, 1).expect("j=1") / root;
        if dth.abs() < 1e-16 {
            continue;
        }
        d_acc.add(rho_ext[i] * dth * line.h3);
        n_acc.add((-0.5 * (x - sigma) / tau * rho_ext[i] + m3_ext[i]) * dth * line.h3);
    }
    let d_denom = d_acc.value();
    if !(d_denom > 0.0) {
        return Err(AnsatzError::DegenerateDenominator { value: d_denom });
    }
    let n_numer = n_acc.value();
    Ok(ShiftRhs { sigma_dot: n_numer / d_denom, n_numer, d_denom })
}

/// One sample of the shift history.
#[derive(Clone, Copy, Debug)]
pub struct ShiftSample {
    pub t: f64,
    pub sigma: f64,
    pub sigma_dot: f64,
    pub d_denom: f64,
    pub n_numer: f64,
}

/// Classical RK4 integrator of the shift ODE with `sigma(0) = 0`; the
/// caller supplies the torus zero modes at the stage times.
pub struct ShiftCurve {
    pub t: f64,
    pub sigma: f64,
    pub history: Vec<ShiftSample>,
    /// Abort threshold for `|sigma'|`.
    pub sanity_ceiling: f64,
}

impl Default for ShiftCurve {
    fn default() -> Self {
        Self::new()
    }
}

impl ShiftCurve {
    pub fn new() -> Self {
        Self { t: 0.0, sigma: 0.0, history: Vec::new(), sanity_ceiling: 1e3 }
    }

    /// Advances `sigma` by one RK4 step of size `dt`. `zero_modes(t)` must
    /// return the `-` solution zero modes `(rho_flat, m3_flat)` at `t`
    /// (length = torus cell count).
    pub fn rk4_step(
        &mut self,
        dt: f64,
        line: &HybridGrid,
        torus_n3: usize,
        params: &PhysParams,
        mut zero_modes: impl FnMut(f64) -> (Vec<f64>, Vec<f64>),
    ) -> Result<(), AnsatzError> {
        let mut eval = |sigma: f64, t: f64| -> Result<ShiftRhs, AnsatzError> {
            let (rho_flat, m3_flat) = zero_modes(t);
            shift_rhs(sigma, t, line, torus_n3, &rho_flat, &m3_flat, params)
        };
        let k1 = eval(self.sigma, self.t)?;
        let k2 = eval(self.sigma + 0.5 * dt * k1.sigma_dot, self.t + 0.5 * dt)?;
        let k3 = eval(self.sigma + 0.5 * dt * k2.sigma_dot, self.t + 0.5 * dt)?;
        let k4 = eval(self.sigma + dt * k3.sigma_dot, self.t + dt)?;
        let slope =
            (k1.sigma_dot + 2.0 * k2.sigma_dot + 2.0 * k3.sigma_dot + k4.sigma_dot) / 6.0;
        if !slope.is_finite() || slope.abs() > self.sanity_ceiling {
            return Err(AnsatzError::ShiftRunaway { sigma_dot: slope });
        }
        if self.history.is_empty() {
            self.history.push(ShiftSample {
                t: self.t,
                sigma: self.sigma,
                sigma_dot: k1.sigma_dot,
                d_denom: k1.d_denom,
                n_numer: k1.n_numer,
            });
        }
        self.sigma += dt * slope;
        self.t += dt;
        let end = eval(self.sigma, self.t)?;
        self.history.push(ShiftSample {
            t: self.t,
            sigma: self.sigma,
            sigma_dot: end.sigma_dot,
            d_denom: end.d_denom,
            n_numer: end.n_numer,
        });
        Ok(())
    }
}

/// Scalar audits of the periodic error terms, recorded per snapshot
/// (reported, never thrown).
#[derive(Clone, Copy, Debug, Default)]
pub struct ErrorTermAudits {
    pub f0_l2: f64,
    pub f2_l2: f64,
    pub g_l2: f64,
    pub g_anti_l2: f64,
    /// `|| f0_flat ||_L2`; identically zero by the coincidence identities.
    pub f0_flat_l2: f64,
    /// `|| f2_3_flat ||_L2`; identically zero by the coincidence identities.
    pub f23_flat_l2: f64,
    /// `int f2_i_flat dx3` for the tangential components.
    pub int_f2_tangential: [f64; 2],
    pub f2_tangential_l1: [f64; 2],
}

/// Error terms of the periodic-blend ansatz, sampled on the line grid.
pub struct ErrorTerms {
    pub f0: Vec<f64>,
    pub f2: [Vec<f64>; 3],
    pub g: [Vec<f64>; 3],
    /// `G(x3) = int_{-L}^{x3} g_flat` per component (1D profiles).
    pub g_anti: [Vec<f64>; 3],
    pub audits: ErrorTermAudits,
}

/// Closed-form error terms of the periodic blend. The profile factors are
/// analytic; outer flux divergences are taken with `fd`, so formula errors
/// stay separated from discretization errors of the solver.
#[allow(clippy::too_many_arguments)]
pub fn error_terms_periodic(
    line: &HybridGrid,
    torus: &HybridGrid,
    minus: &FlowState,
    plus: &FlowState,
    bundle: &AnsatzBundle,
    sigma: f64,
    sigma_dot: f64,
    params: &PhysParams,
) -> Result<ErrorTerms, AnsatzError> {
    let t = bundle.t;
    let tau = t + params.lambda_age;
    let (th, dth) = theta_sigma_profiles(line, t, sigma, params);
    let n = line.len();

    let ext = |f: &[f64]| grid::extend_torus_field(line, torus, f);
    let rho_m = ext(&minus.rho)?;
    let rho_p = ext(&plus.rho)?;
    let m_m = [ext(&minus.m[0])?, ext(&minus.m[1])?, ext(&minus.m[2])?];
    let m_p = [ext(&plus.m[0])?, ext(&plus.m[1])?, ext(&plus.m[2])?];
    let mut u_m = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut u_p = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut p_m = vec![0.0; n];
    let mut p_p = vec![0.0; n];
    for i in 0..n {
        for k in 0..3 {
            u_m[k][i] = m_m[k][i] / rho_m[i];
            u_p[k][i] = m_p[k][i] / rho_p[i];
        }
        p_m[i] = params.p(rho_m[i]);
        p_p[i] = params.p(rho_p[i]);
    }
    let p_t: Vec<f64> = bundle.rho.iter().map(|&r| params.p(r)).collect();

    let d3 = |f: &[f64]| grid::fd(line, f, grid::Dir::X3, 1).expect("shape");
    let d2 = |f: &[f64]| grid::fd(line, f, grid::Dir::X2, 1).expect("shape");
    let du_m3 = [d3(&u_m[0]), d3(&u_m[1]), d3(&u_m[2])];
    let du_p3 = [d3(&u_p[0]), d3(&u_p[1]), d3(&u_p[2])];
    let div_m: Vec<f64> = if line.dim == 2 {
        let a = d2(&u_m[1]);
        du_m3[2].iter().zip(a.iter()).map(|(x, y)| x + y).collect()
    } else {
        du_m3[2].clone()
    };
    let div_p: Vec<f64> = if line.dim == 2 {
        let a = d2(&u_p[1]);
        du_p3[2].iter().zip(a.iter()).map(|(x, y)| x + y).collect()
    } else {
        du_p3[2].clone()
    };

    // f0 and f2 from their closed forms
    let mut f0 = vec![0.0; n];
    let mut f2 = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mul = params.mu + params.lambda;
    for i3 in 0..line.n3 {
        let x = line.x3(i3);
        let drift = sigma_dot + 0.5 * (x - sigma) / tau;
        let w = 0.5 * dth[i3];
        for i2 in 0..line.n2 {
            let i = line.idx(i3, i2);
            f0[i] = w * (-(rho_p[i] - rho_m[i]) * drift + (m_p[2][i] - m_m[2][i]));
            for k in 0..3 {
                let mut v = -(m_p[k][i] - m_m[k][i]) * drift + u_p[2][i] * m_p[k][i]
                    - u_m[2][i] * m_m[k][i]
                    - params.mu * (du_p3[k][i] - du_m3[k][i]);
                if k == 2 {
                    v += p_p[i] - p_m[i] - mul * (div_p[i] - div_m[i]);
                }
                f2[k][i] = w * v;
            }
        }
    }

    // F_{1,i} for the retained directions i in {2, 3}; i = 1 contributes
    // nothing because nothing depends on x1
    let blend = |a: &[f64], b: &[f64], i3: usize, i: usize| -> f64 {
        0.5 * (a[i] * (1.0 - th[i3]) + b[i] * (1.0 + th[i3]))
    };
    let du_t3 = [d3(&bundle.u[0]), d3(&bundle.u[1]), d3(&bundle.u[2])];
    let div_t: Vec<f64> = if line.dim == 2 {
        let a = d2(&bundle.u[1]);
        du_t3[2].iter().zip(a.iter()).map(|(x, y)| x + y).collect()
    } else {
        du_t3[2].clone()
    };
    let mut g = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut f13 = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i3 in 0..line.n3 {
        for i2 in 0..line.n2 {
            let i = line.idx(i3, i2);
            let p_blend = blend(&p_m, &p_p, i3, i);
            for k in 0..3 {
                let conv = bundle.u[2][i] * bundle.m[k][i]
                    - 0.5 * (u_m[2][i] * m_m[k][i] * (1.0 - th[i3])
                        + u_p[2][i] * m_p[k][i] * (1.0 + th[i3]));
                let visc = params.mu * (du_t3[k][i] - blend(&du_m3[k], &du_p3[k], i3, i));
                let mut v = conv - visc;
                if k == 2 {
                    v += p_t[i] - p_blend;
                    v -= mul * (div_t[i] - blend(&div_m, &div_p, i3, i));
                }
                f13[k][i] = v;
            }
        }
    }
    for k in 0..3 {
        let dfk = d3(&f13[k]);
        for i in 0..n {
            g[k][i] = dfk[i] + f2[k][i];
        }
    }
    if line.dim == 2 {
        let du_m2 = [d2(&u_m[0]), d2(&u_m[1]), d2(&u_m[2])];
        let du_p2 = [d2(&u_p[0]), d2(&u_p[1]), d2(&u_p[2])];
        let du_t2 = [d2(&bundle.u[0]), d2(&bundle.u[1]), d2(&bundle.u[2])];
        let mut f12 = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for i3 in 0..line.n3 {
            for i2 in 0..line.n2 {
                let i = line.idx(i3, i2);
                let p_blend = blend(&p_m, &p_p, i3, i);
                for k in 0..3 {
                    let conv = bundle.u[1][i] * bundle.m[k][i]
                        - 0.5 * (u_m[1][i] * m_m[k][i] * (1.0 - th[i3])
                            + u_p[1][i] * m_p[k][i] * (1.0 + th[i3]));
                    let visc = params.mu * (du_t2[k][i] - blend(&du_m2[k], &du_p2[k], i3, i));
                    let mut v = conv - visc;
                    if k == 1 {
                        v += p_t[i] - p_blend;
                        v -= mul * (div_t[i] - blend(&div_m, &div_p, i3, i));
                    }
                    f12[k][i] = v;
                }
            }
        }
        for k in 0..3 {
            let dfk = d2(&f12[k]);
            for i in 0..n {
                g[k][i] += dfk[i];
            }
        }
    }

    let mut audits = ErrorTermAudits::default();
    let l2 = |f: &[f64]| grid::norms(line, f, grid::NormKind::L2).expect("shape");
    audits.f0_l2 = l2(&f0);
    audits.f2_l2 = math::sqrt(
        f2.iter()
            .map(|c| {
                let v = l2(c);
                v * v
            })
            .sum::<f64>(),
    );
    audits.g_l2 = math::sqrt(
        g.iter()
            .map(|c| {
                let v = l2(c);
                v * v
            })
            .sum::<f64>(),
    );
    let f0_flat = grid::zero_mode(line, &f0);
    audits.f0_flat_l2 = grid::norms(line, &f0_flat, grid::NormKind::L2).expect("profile");
    let f23_flat = grid::zero_mode(line, &f2[2]);
    audits.f23_flat_l2 = grid::norms(line, &f23_flat, grid::NormKind::L2).expect("profile");
    let mut g_anti: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut g_anti_sq = 0.0;
    for (k, out) in g_anti.iter_mut().enumerate() {
        let gk_flat = grid::zero_mode(line, &g[k]);
        let anti = grid::anti_derivative(line, &gk_flat, 1e-6);
        let nv = grid::norms(line, &anti.values, grid::NormKind::L2).expect("profile");
        g_anti_sq += nv * nv;
        *out = anti.values;
    }
    audits.g_anti_l2 = math::sqrt(g_anti_sq);
    for k in 0..2 {
        let fk_flat = grid::zero_mode(line, &f2[k]);
        audits.int_f2_tangential[k] = grid::integrate_profile(line, &fk_flat);
        audits.f2_tangential_l1[k] =
            grid::norms(line, &fk_flat, grid::NormKind::L1).expect("profile");
    }

    Ok(ErrorTerms { f0, f2, g, g_anti, audits })
}

/// Error profiles of the localized ansatz: the residuals of the ansatz in
/// the Navier-Stokes equations are `d3 F` (continuity) and `d3 G_i`
/// (momentum), with `F` and `G` given in closed form.
pub struct LocalizedErrorTerms {
    pub f: Vec<f64>,
    pub g: [Vec<f64>; 3],
}

pub fn error_terms_localized(
    alphas: [f64; 4],
    t: f64,
    line: &HybridGrid,
    params: &PhysParams,
) -> LocalizedErrorTerms {
    let ff = far_field_eigen(params);
    let k_minus = DiffusionKernel::minus(params);
    let k_plus = DiffusionKernel::plus(params);
    let k_zero = DiffusionKernel::stationary(params);
    let profile = SelfSimilarProfile::from_params(params);
    let ub = params.u_bar3();
    let (a0, a3) = (alphas[0], alphas[3]);
    let p_bar = params.p(params.rho_bar);
    let dp_bar = params.dp(params.rho_bar);
    let mut f = Vec::with_capacity(line.n3);
    let mut g: [Vec<f64>; 3] = [
        Vec::with_capacity(line.n3),
        Vec::with_capacity(line.n3),
        Vec::with_capacity(line.n3),
    ];
    for i3 in 0..line.n3 {
        let x3 = line.x3(i3);
        let km = k_minus.eval(x3, t);
        let kp = k_plus.eval(x3, t);
        let k0 = k_zero.eval(x3, t);
        let dkm = k_minus.d3(x3, t, 1);
        let dkp = k_plus.d3(x3, t, 1);
        let dk0 = k_zero.d3(x3, t, 1);
        let th = profile.theta_field(x3, t, 0).expect("tau > 0");
        let dth = profile.theta_field(x3, t, 1).expect("tau > 0");

        f.push(a0 * dkm + a3 * dkp);

        let rho_t = params.rho_bar + a0 * km + a3 * kp;
        let drho_t = a0 * dkm + a3 * dkp;
        let m3_t = ff.lambda0_minus * a0 * km + ff.lambda3_plus * a3 * kp;
        let dm3_t = ff.lambda0_minus * a0 * dkm + ff.lambda3_plus * a3 * dkp;
        for i in 0..2 {
            let mi_t = params.rho_bar * ub[i] * th + ub[i] * (a3 * kp - a0 * km) + alphas[1 + i] * k0;
            let dmi_t =
                params.rho_bar * ub[i] * dth + ub[i] * (a3 * dkp - a0 * dkm) + alphas[1 + i] * dk0;
            // d3 (u~_i - u_i^vs), analytic quotient rule
            let dui_t = (dmi_t * rho_t - mi_t * drho_t) / (rho_t * rho_t);
            let dui_vs = ub[i] * dth;
            g[i].push(
                alphas[1 + i] * dk0
                    + (m3_t * mi_t / rho_t
                        + ub[i] * (a0 * ff.lambda0_minus * km - a3 * ff.lambda3_plus * kp))
                    - ub[i] * (a0 * dkm - a3 * dkp)
                    - params.mu * (dui_t - dui_vs),
            );
        }
        let du3_t = (dm3_t * rho_t - m3_t * drho_t) / (rho_t * rho_t);
        g[2].push(
            m3_t * m3_t / rho_t + (params.p(rho_t) - p_bar - dp_bar * (rho_t - params.rho_bar))
                - params.mu_tilde() * du3_t
                + ff.lambda0_minus * a0 * dkm
                + ff.lambda3_plus * a3 * dkp,
        );
    }
    LocalizedErrorTerms { f, g }
}

/// Three-Gaussian envelope centered on the sheet and the two acoustic
/// characteristics.
pub fn localized_envelope(x3: f64, t: f64, c0: f64, params: &PhysParams) -> f64 {
    let tau = t + params.lambda_age;
    let c = params.sound_speed_bar();
    let g = |y: f64| math::exp(-c0 * y * y / tau);
    g(x3) + g(x3 + c * tau) + g(x3 - c * tau)
}
