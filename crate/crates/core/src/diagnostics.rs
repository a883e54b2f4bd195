//! Perturbation extraction, anti-derivative variables, energy-functional
//! ledgers, mass audits and decay-rate fitting.

use crate::ansatz::AnsatzBundle;
use crate::grid::{self, AntiDerivativePair, FlowState, HybridGrid, ModeSplit, NormKind};
use crate::math;
use crate::model::PhysParams;
use crate::profiles::{self, SelfSimilarProfile};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum DiagError {
    Mismatch(String),
    /// Series has nonpositive values inside the fit window.
    NonPositive { t: f64, value: f64 },
    TooFewSamples { got: usize, need: usize },
    WindowOutsideSpan,
}

impl fmt::Display for DiagError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagError::Mismatch(msg) => write!(f, "diagnostics input mismatch: {msg}"),
            DiagError::NonPositive { t, value } => {
                write!(f, "nonpositive value {value} at t = {t} in fit window")
            }
            DiagError::TooFewSamples { got, need } => {
                write!(f, "{got} samples in fit window, need at least {need}")
            }
            DiagError::WindowOutsideSpan => write!(f, "fit window outside the trajectory span"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DiagError {}

/// Perturbation from the ansatz with mode splits and identity audits.
pub struct PerturbationSet {
    pub phi: Vec<f64>,
    pub psi: [Vec<f64>; 3],
    pub zeta: [Vec<f64>; 3],
    pub phi_split: ModeSplit,
    pub psi_split: [ModeSplit; 3],
    pub zeta_split: [ModeSplit; 3],
    /// `|| rho zeta - (psi - u~ phi) ||_inf` (defining identity).
    pub zeta_identity_residual: f64,
    /// Residual of the sharp-mode decomposition
    /// `psi_sharp = rho_bar zeta_sharp + u_vs phi_sharp + n3`.
    pub psi_identity_residual: f64,
}

/// Extracts `phi = rho - rho~`, `psi = m - m~`, `zeta = u - u~` and audits
/// the defining identities.
pub fn extract_perturbation(
    grid: &HybridGrid,
    state: &FlowState,
    bundle: &AnsatzBundle,
    params: &PhysParams,
) -> Result<PerturbationSet, DiagError> {
    if state.rho.len() != grid.len() || bundle.rho.len() != grid.len() {
        return Err(DiagError::Mismatch(alloc::format!(
            "field lengths {} / {} vs grid {}",
            state.rho.len(),
            bundle.rho.len(),
            grid.len()
        )));
    }
    if (state.t - bundle.t).abs() > 1e-12 * (1.0 + state.t.abs()) {
        return Err(DiagError::Mismatch(alloc::format!(
            "state at t = {} but ansatz at t = {}",
            state.t,
            bundle.t
        )));
    }
    let n = grid.len();
    let phi: Vec<f64> = (0..n).map(|i| state.rho[i] - bundle.rho[i]).collect();
    let mut psi: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut zeta: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for k in 0..3 {
        psi[k] = (0..n).map(|i| state.m[k][i] - bundle.m[k][i]).collect();
        zeta[k] = (0..n)
            .map(|i| (psi[k][i] - bundle.u[k][i] * phi[i]) / state.rho[i])
            .collect();
    }

    // zeta identity: rho zeta - (psi - u~ phi) = 0
    let mut zres = 0.0_f64;
    for k in 0..3 {
        for i in 0..n {
            zres = zres
                .max((state.rho[i] * zeta[k][i] - (psi[k][i] - bundle.u[k][i] * phi[i])).abs());
        }
    }

    let phi_split = grid::mode_split(grid, &phi);
    let psi_split = [
        grid::mode_split(grid, &psi[0]),
        grid::mode_split(grid, &psi[1]),
        grid::mode_split(grid, &psi[2]),
    ];
    let zeta_split = [
        grid::mode_split(grid, &zeta[0]),
        grid::mode_split(grid, &zeta[1]),
        grid::mode_split(grid, &zeta[2]),
    ];

    // psi_sharp = rho_bar zeta_sharp + u_vs phi_sharp + n3 with the
    // quadratic remainder n3 assembled from the splits
    let profile = SelfSimilarProfile::from_params(params);
    let ub = params.u_bar3();
    let mut pres = 0.0_f64;
    for k in 0..3 {
        // [ (rho~ - rho_bar) zeta_k + (u~_k - u_vs_k) phi ]^sharp
        let mixed: Vec<f64> = (0..n)
            .map(|i| {
                let i3 = i / grid.n2;
                let th = profile.theta_field(grid.x3(i3), state.t, 0).expect("tau > 0");
                let uvs_k = ub[k] * th * if k == 2 { 0.0 } else { 1.0 };
                (bundle.rho[i] - params.rho_bar) * zeta[k][i] + (bundle.u[k][i] - uvs_k) * phi[i]
            })
            .collect();
        let mixed_sharp = grid::nonzero_mode(grid, &mixed);
        let quad: Vec<f64> = (0..n)
            .map(|i| phi_split.sharp[i] * zeta_split[k].sharp[i])
            .collect();
        let quad_sharp = grid::nonzero_mode(grid, &quad);
        for i3 in 0..grid.n3 {
            let th = profile.theta_field(grid.x3(i3), state.t, 0).expect("tau > 0");
            let uvs_k = ub[k] * th * if k == 2 { 0.0 } else { 1.0 };
            for i2 in 0..grid.n2 {
                let i = grid.idx(i3, i2);
                let n3_rem = mixed_sharp[i]
                    + zeta_split[k].flat[i3] * phi_split.sharp[i]
                    + phi_split.flat[i3] * zeta_split[k].sharp[i]
                    + quad_sharp[i];
                let lhs = psi_split[k].sharp[i];
                let rhs = params.rho_bar * zeta_split[k].sharp[i]
                    + uvs_k * phi_split.sharp[i]
                    + n3_rem;
                pres = pres.max((lhs - rhs).abs());
            }
        }
    }

    Ok(PerturbationSet {
        phi,
        psi,
        zeta,
        phi_split,
        psi_split,
        zeta_split,
        zeta_identity_residual: zres,
        psi_identity_residual: pres,
    })
}

/// Anti-derivative variables `Phi`, `Psi` and `Z = Psi - u_vs Phi`.
pub struct ZTriple {
    pub pair: AntiDerivativePair,
    pub z: [Vec<f64>; 3],
    /// False when the zero-mode perturbation fails to decay at the left end.
    pub decays_left: bool,
}

pub fn build_z(
    grid: &HybridGrid,
    pert: &PerturbationSet,
    params: &PhysParams,
    t: f64,
) -> ZTriple {
    let tail_tol = 1e-5;
    let phi_anti = grid::anti_derivative(grid, &pert.phi_split.flat, tail_tol);
    let mut decays_left = phi_anti.decays_left;
    let mut psi_anti: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (k, out) in psi_anti.iter_mut().enumerate() {
        let a = grid::anti_derivative(grid, &pert.psi_split[k].flat, tail_tol);
        decays_left &= a.decays_left;
        *out = a.values;
    }
    let profile = SelfSimilarProfile::from_params(params);
    let ub = params.u_bar3();
    let mut z: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (k, out) in z.iter_mut().enumerate() {
        *out = (0..grid.n3)
            .map(|i3| {
                let uvs = if k == 2 {
                    0.0
                } else {
                    ub[k] * profile.theta_field(grid.x3(i3), t, 0).expect("tau > 0")
                };
                psi_anti[k][i3] - uvs * phi_anti.values[i3]
            })
            .collect();
    }
    ZTriple {
        pair: AntiDerivativePair { phi: phi_anti.values, psi: psi_anti, decays_left },
        z,
        decays_left,
    }
}

/// One row of the energy ledger: the representative functionals of the
/// anti-derivative estimates plus the sharp-mode norms.
#[derive(Clone, Copy, Debug, Default)]
pub struct EnergyRow {
    pub t: f64,
    /// `p'(rho_bar) ||Phi||^2 + ||Z||^2 + (2 mu / (rho_bar p')) int d3theta ubar_perp . Z_perp Z_3`
    pub a0: f64,
    /// `|| d3 Phi, d3 Z, Phi kappa, Z kappa ||^2`
    pub b0: f64,
    /// `p'(rho_bar) ||d3 Phi||^2 + ||d3 Z||^2`
    pub a1: f64,
    /// `|| d3^2 Z ||^2`
    pub b1: f64,
    pub phi_anti_l2_sq: f64,
    pub z_l2_sq: f64,
    pub cross_term: f64,
    pub sharp_h1: f64,
}

pub fn energy_ledger(
    grid: &HybridGrid,
    z: &ZTriple,
    pert: &PerturbationSet,
    params: &PhysParams,
    t: f64,
) -> EnergyRow {
    let g1 = HybridGrid { dim: 1, n2: 1, h2: 1.0, ..*grid };
    let l2sq = |f: &[f64]| {
        let v = grid::norms(&g1, f, NormKind::L2).expect("profile");
        v * v
    };
    let d3 = |f: &[f64]| grid::fd(&g1, f, grid::Dir::X3, 1).expect("profile");

    let dp = params.dp(params.rho_bar);
    let phi_l2_sq = l2sq(&z.pair.phi);
    let z_l2_sq: f64 = z.z.iter().map(|c| l2sq(c)).sum();

    let profile = SelfSimilarProfile::from_params(params);
    let ub = params.u_bar3();
    let mut cross = math::KahanSum::new();
    for i3 in 0..grid.n3 {
        let dth = profile.theta_field(grid.x3(i3), t, 1).expect("tau > 0");
        let zperp_dot_ub = ub[0] * z.z[0][i3] + ub[1] * z.z[1][i3];
        cross.add(dth * zperp_dot_ub * z.z[2][i3] * grid.h3);
    }
    let cross_term = 2.0 * params.mu / (params.rho_bar * dp) * cross.value();
    let a0 = dp * phi_l2_sq + z_l2_sq + cross_term;

    let dphi = d3(&z.pair.phi);
    let dz: [Vec<f64>; 3] = [d3(&z.z[0]), d3(&z.z[1]), d3(&z.z[2])];
    let mut b0 = l2sq(&dphi);
    let mut a1 = dp * l2sq(&dphi);
    let mut b1 = 0.0;
    for k in 0..3 {
        b0 += l2sq(&dz[k]);
        a1 += l2sq(&dz[k]);
        b1 += l2sq(&d3(&dz[k]));
    }
    // kappa-weighted contributions
    let mut kw = math::KahanSum::new();
    for i3 in 0..grid.n3 {
        let kap = profiles::kappa_weights(grid.x3(i3), t, params).kappa;
        let zsq: f64 = z.z.iter().map(|c| c[i3] * c[i3]).sum();
        kw.add(kap * kap * (z.pair.phi[i3] * z.pair.phi[i3] + zsq) * grid.h3);
    }
    b0 += kw.value();

    let mut sharp_sq = 0.0;
    for split in core::iter::once(&pert.phi_split).chain(pert.zeta_split.iter()) {
        let v = grid::norms(grid, &split.sharp, NormKind::H1).expect("field");
        sharp_sq += v * v;
    }

    EnergyRow {
        t,
        a0,
        b0,
        a1,
        b1,
        phi_anti_l2_sq: phi_l2_sq,
        z_l2_sq,
        cross_term,
        sharp_h1: math::sqrt(sharp_sq),
    }
}

/// Integrals of the four perturbation fields over the domain (equal to the
/// `x3`-integrals of the zero modes).
pub fn mass_audit(grid: &HybridGrid, pert: &PerturbationSet) -> [f64; 4] {
    [
        grid::integrate_field(grid, &pert.phi),
        grid::integrate_field(grid, &pert.psi[0]),
        grid::integrate_field(grid, &pert.psi[1]),
        grid::integrate_field(grid, &pert.psi[2]),
    ]
}

/// Sup norms of the zero-mode perturbations `(phi_flat, zeta_flat)`; the
/// quantity whose decay rate the headline results describe.
pub fn sup_flat(pert: &PerturbationSet) -> f64 {
    let mut sup = pert.phi_split.flat.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    for k in 0..3 {
        sup = sup.max(pert.zeta_split[k].flat.iter().fold(0.0_f64, |a, v| a.max(v.abs())));
    }
    sup
}

/// Sup norm of the sharp modes `(phi_sharp, zeta_sharp)`.
pub fn sup_sharp(pert: &PerturbationSet) -> f64 {
    let mut sup = pert.phi_split.sharp.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    for k in 0..3 {
        sup = sup.max(pert.zeta_split[k].sharp.iter().fold(0.0_f64, |a, v| a.max(v.abs())));
    }
    sup
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitModel {
    /// `v ~ C (t+1)^slope`, least squares on `(ln(t+1), ln v)`.
    Power,
    /// `v ~ C e^{rate t}`, least squares on `(t, ln v)`.
    Exponential,
}

/// Least-squares decay fit over a window.
#[derive(Clone, Copy, Debug)]
pub struct DecayFit {
    pub model: FitModel,
    pub window: (f64, f64),
    /// Power-law slope or exponential rate (negative for decay).
    pub slope: f64,
    /// Intercept in log space.
    pub intercept: f64,
    pub r2: f64,
    pub samples: usize,
}

pub fn fit_decay(
    series: &[(f64, f64)],
    model: FitModel,
    window: (f64, f64),
) -> Result<DecayFit, DiagError> {
    let (a, b) = window;
    let span = series.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (t, _)| {
        (lo.min(*t), hi.max(*t))
    });
    if !(a >= span.0 - 1e-9 && b <= span.1 + 1e-9 && a < b) {
        return Err(DiagError::WindowOutsideSpan);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, v) in series {
        if t < a - 1e-12 || t > b + 1e-12 {
            continue;
        }
        if !(v > 0.0) {
            return Err(DiagError::NonPositive { t, value: v });
        }
        let x = match model {
            FitModel::Power => math::ln(t + 1.0),
            FitModel::Exponential => t,
        };
        xs.push(x);
        ys.push(math::ln(v));
    }
    let n = xs.len();
    if n < 10 {
        return Err(DiagError::TooFewSamples { got: n, need: 10 });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = (0..n).map(|i| {
        let r = ys[i] - (intercept + slope * xs[i]);
        r * r
    }).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(DecayFit { model, window, slope, intercept, r2, samples: n })
}
