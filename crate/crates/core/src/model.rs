//! Gas model and wave structure: physical parameters, the gamma-law
//! pressure, Rankine-Hugoniot jump conditions, Galilean boosts and the
//! transverse characteristic eigen-system of the inviscid normal flux.

use crate::math;
use alloc::string::String;
use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum ModelError {
    /// Density must stay strictly positive.
    NonPositiveDensity(f64),
    /// Parameter set violates a structural constraint.
    InvalidParams(String),
    /// A spacetime field was queried outside its available domain.
    OutOfDomain { coord: f64, lo: f64, hi: f64 },
    /// The eigenvector matrix is singular (cannot happen for p'(rho) > 0).
    SingularBasis,
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::NonPositiveDensity(r) => write!(f, "non-positive density {r}"),
            ModelError::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
            ModelError::OutOfDomain { coord, lo, hi } => {
                write!(f, "coordinate {coord} outside available domain [{lo}, {hi}]")
            }
            ModelError::SingularBasis => write!(f, "singular eigenvector basis"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ModelError {}

/// Physical parameters of the problem: gamma-law exponent, viscosities,
/// the reference density and tangential far-field velocity of the vortex
/// sheet, and the profile age `Lambda` entering every `t + Lambda`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysParams {
    pub gamma: f64,
    pub mu: f64,
    pub lambda: f64,
    pub rho_bar: f64,
    /// Tangential far-field pair `(u_bar_1, u_bar_2)`; the normal component
    /// is identically zero for the normalized sheet.
    pub u_bar: [f64; 2],
    /// Profile age `Lambda >= 1`.
    pub lambda_age: f64,
}

impl PhysParams {
    pub fn new(
        gamma: f64,
        mu: f64,
        lambda: f64,
        rho_bar: f64,
        u_bar: [f64; 2],
        lambda_age: f64,
    ) -> Result<Self, ModelError> {
        let p = Self { gamma, mu, lambda, rho_bar, u_bar, lambda_age };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.mu > 0.0) {
            return Err(ModelError::InvalidParams(alloc::format!(
                "shear viscosity mu = {} must be > 0",
                self.mu
            )));
        }
        if !(self.mu + self.lambda >= 0.0) {
            return Err(ModelError::InvalidParams(alloc::format!(
                "viscosities must satisfy mu + lambda >= 0, got {}",
                self.mu + self.lambda
            )));
        }
        if !(self.rho_bar > 0.0) {
            return Err(ModelError::InvalidParams(alloc::format!(
                "reference density rho_bar = {} must be > 0",
                self.rho_bar
            )));
        }
        if !(self.gamma > 1.0) {
            return Err(ModelError::InvalidParams(alloc::format!(
                "gamma = {} must be > 1",
                self.gamma
            )));
        }
        if !(self.lambda_age >= 1.0) {
            return Err(ModelError::InvalidParams(alloc::format!(
                "profile age Lambda = {} must be >= 1",
                self.lambda_age
            )));
        }
        debug_assert!(self.mu_tilde() > 0.0);
        Ok(())
    }

    /// Normal-direction viscosity `mu_tilde = 2 mu + lambda`.
    #[inline]
    pub fn mu_tilde(&self) -> f64 {
        2.0 * self.mu + self.lambda
    }

    /// Tangential far-field velocity as a 3-vector `(u1, u2, 0)`.
    #[inline]
    pub fn u_bar3(&self) -> [f64; 3] {
        [self.u_bar[0], self.u_bar[1], 0.0]
    }

    /// Far-field momentum `rho_bar * u_bar` of the `+` state.
    #[inline]
    pub fn m_bar3(&self) -> [f64; 3] {
        [self.rho_bar * self.u_bar[0], self.rho_bar * self.u_bar[1], 0.0]
    }

    /// Gamma-law pressure `p(rho) = rho^gamma` without the positivity check;
    /// callers on hot paths do their own vacuum screening. `gamma = 2` and
    /// `gamma = 3` take exact multiplicative paths.
    #[inline]
    pub fn p(&self, rho: f64) -> f64 {
        if self.gamma == 2.0 {
            rho * rho
        } else if self.gamma == 3.0 {
            rho * rho * rho
        } else {
            math::powf(rho, self.gamma)
        }
    }

    /// Analytic `p'(rho) = gamma rho^(gamma-1)`. Never computed by
    /// differencing.
    #[inline]
    pub fn dp(&self, rho: f64) -> f64 {
        if self.gamma == 2.0 {
            2.0 * rho
        } else if self.gamma == 3.0 {
            3.0 * rho * rho
        } else {
            self.gamma * math::powf(rho, self.gamma - 1.0)
        }
    }

    /// Sound speed of the reference state, `sqrt(p'(rho_bar))`.
    #[inline]
    pub fn sound_speed_bar(&self) -> f64 {
        math::sqrt(self.dp(self.rho_bar))
    }

    /// The `-` far-field state `(rho_bar, -u_bar)`.
    pub fn minus_state(&self) -> ConstantState {
        let u = self.u_bar3();
        ConstantState { rho: self.rho_bar, u: [-u[0], -u[1], 0.0] }
    }

    /// The `+` far-field state `(rho_bar, +u_bar)`.
    pub fn plus_state(&self) -> ConstantState {
        ConstantState { rho: self.rho_bar, u: self.u_bar3() }
    }
}

/// Checked gamma-law pressure evaluation.
pub fn pressure(rho: f64, params: &PhysParams) -> Result<f64, ModelError> {
    if !(rho > 0.0) {
        return Err(ModelError::NonPositiveDensity(rho));
    }
    Ok(params.p(rho))
}

/// Checked `p'(rho)`.
pub fn pressure_derivative(rho: f64, params: &PhysParams) -> Result<f64, ModelError> {
    if !(rho > 0.0) {
        return Err(ModelError::NonPositiveDensity(rho));
    }
    Ok(params.dp(rho))
}

/// A constant `(rho, u)` state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantState {
    pub rho: f64,
    pub u: [f64; 3],
}

/// Residuals of the Rankine-Hugoniot conditions for a contact interface
/// moving at speed `s`, ordered `[u3+ - s, u3- - s, rh_1, rh_2, rh_3]`
/// with `rh_i = -s (u_i+ - u_i-) + u3+ u_i+ - u3- u_i-`.
pub fn rh_residual(left: &ConstantState, right: &ConstantState, s: f64) -> [f64; 5] {
    let mut r = [0.0; 5];
    r[0] = right.u[2] - s;
    r[1] = left.u[2] - s;
    for i in 0..3 {
        r[2 + i] = -s * (right.u[i] - left.u[i]) + right.u[2] * right.u[i] - left.u[2] * left.u[i];
    }
    r
}

/// True iff `left`/`right` joined by a discontinuity of speed `s` satisfy
/// the Rankine-Hugoniot conditions within `tol` (absolute).
pub fn rh_check(
    left: &ConstantState,
    right: &ConstantState,
    s: f64,
    tol: f64,
) -> Result<(bool, [f64; 5]), ModelError> {
    if !(left.rho > 0.0) {
        return Err(ModelError::NonPositiveDensity(left.rho));
    }
    if !(right.rho > 0.0) {
        return Err(ModelError::NonPositiveDensity(right.rho));
    }
    let r = rh_residual(left, right, s);
    let ok = r.iter().all(|v| v.abs() <= tol);
    Ok((ok, r))
}

/// A `(rho, u)` field over space and time. Implemented by analytic
/// profiles and by interpolating views of discrete states.
pub trait SpacetimeField {
    fn eval(&self, x: [f64; 3], t: f64) -> Result<(f64, [f64; 3]), ModelError>;
}

impl<F> SpacetimeField for F
where
    F: Fn([f64; 3], f64) -> Result<(f64, [f64; 3]), ModelError>,
{
    fn eval(&self, x: [f64; 3], t: f64) -> Result<(f64, [f64; 3]), ModelError> {
        self(x, t)
    }
}

/// Galilean boost of a spacetime field:
/// `(rho*, u*)(x, t) = (rho(x - c t, t), u(x - c t, t) + c)`.
pub struct Boosted<F> {
    inner: F,
    c: [f64; 3],
}

impl<F: SpacetimeField> SpacetimeField for Boosted<F> {
    fn eval(&self, x: [f64; 3], t: f64) -> Result<(f64, [f64; 3]), ModelError> {
        let y = [x[0] - self.c[0] * t, x[1] - self.c[1] * t, x[2] - self.c[2] * t];
        let (rho, u) = self.inner.eval(y, t)?;
        Ok((rho, [u[0] + self.c[0], u[1] + self.c[1], u[2] + self.c[2]]))
    }
}

/// Applies the Galilean transformation with boost velocity `c`.
pub fn galilean_transform<F: SpacetimeField>(field: F, c: [f64; 3]) -> Boosted<F> {
    Boosted { inner: field, c }
}

/// Boost that normalizes a general planar vortex sheet
/// `(rho, u_minus/u_plus, speed s)` to the frame with zero interface speed
/// and opposite tangential velocities.
pub fn normalizing_boost(u_minus: [f64; 3], u_plus: [f64; 3], s: f64) -> [f64; 3] {
    [-0.5 * (u_plus[0] + u_minus[0]), -0.5 * (u_plus[1] + u_minus[1]), -s]
}

/// Characteristic speeds and right eigenvectors of the inviscid normal
/// flux Jacobian in the conserved variables `(rho, m1, m2, m3)`.
#[derive(Clone, Copy, Debug)]
pub struct EigenSystem {
    /// `(lambda_0, lambda_1, lambda_2, lambda_3)` with
    /// `lambda_0 = u3 - c`, `lambda_1 = lambda_2 = u3`, `lambda_3 = u3 + c`.
    pub lambdas: [f64; 4],
    /// Right eigenvectors as columns `r[i]`, same order as `lambdas`.
    pub r: [[f64; 4]; 4],
}

/// Jacobian of the normal inviscid flux in conserved variables.
pub fn characteristic_matrix(rho: f64, u: [f64; 3], params: &PhysParams) -> [[f64; 4]; 4] {
    let dp = params.dp(rho);
    [
        [0.0, 0.0, 0.0, 1.0],
        [-u[0] * u[2], u[2], 0.0, u[0]],
        [-u[1] * u[2], 0.0, u[2], u[1]],
        [dp - u[2] * u[2], 0.0, 0.0, 2.0 * u[2]],
    ]
}

/// Closed-form eigen-decomposition of [`characteristic_matrix`]; no
/// generic eigensolver is involved.
pub fn eigen_decomp(rho: f64, u: [f64; 3], params: &PhysParams) -> Result<EigenSystem, ModelError> {
    if !(rho > 0.0) {
        return Err(ModelError::NonPositiveDensity(rho));
    }
    let c = math::sqrt(params.dp(rho));
    let l0 = u[2] - c;
    let l3 = u[2] + c;
    Ok(EigenSystem {
        lambdas: [l0, u[2], u[2], l3],
        r: [
            [1.0, u[0], u[1], l0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [1.0, u[0], u[1], l3],
        ],
    })
}

/// Eigen data of the two far-field states: `(lambda_0^-, r_0^-)` at
/// `(rho_bar, -u_bar)` and `(lambda_3^+, r_3^+)` at `(rho_bar, +u_bar)`.
pub struct FarFieldEigen {
    pub lambda0_minus: f64,
    pub lambda3_plus: f64,
    pub r0_minus: [f64; 4],
    pub r3_plus: [f64; 4],
}

pub fn far_field_eigen(params: &PhysParams) -> FarFieldEigen {
    let minus = params.minus_state();
    let plus = params.plus_state();
    let em = eigen_decomp(minus.rho, minus.u, params).expect("rho_bar > 0");
    let ep = eigen_decomp(plus.rho, plus.u, params).expect("rho_bar > 0");
    FarFieldEigen {
        lambda0_minus: em.lambdas[0],
        lambda3_plus: ep.lambdas[3],
        r0_minus: em.r[0],
        r3_plus: ep.r[3],
    }
}

/// Decomposes a mass 4-vector over `{r_0^-, r_1, r_2, r_3^+}`:
/// `mass = a0 r_0^- + a1 r_1 + a2 r_2 + a3 r_3^+`. Closed-form solve; the
/// basis is nonsingular whenever `p'(rho_bar) > 0`.
pub fn mass_decompose(mass: [f64; 4], params: &PhysParams) -> Result<[f64; 4], ModelError> {
    let c = params.sound_speed_bar();
    if !(c > 0.0) || !c.is_finite() {
        return Err(ModelError::SingularBasis);
    }
    let ub = params.u_bar3();
    // r0^- = (1, -u1, -u2, -c), r3^+ = (1, u1, u2, c)
    let a0 = 0.5 * (mass[0] - mass[3] / c);
    let a3 = 0.5 * (mass[0] + mass[3] / c);
    let a1 = mass[1] - ub[0] * mass[3] / c;
    let a2 = mass[2] - ub[1] * mass[3] / c;
    Ok([a0, a1, a2, a3])
}

/// Reassembles `a0 r_0^- + a1 r_1 + a2 r_2 + a3 r_3^+` (residual oracle for
/// [`mass_decompose`]).
pub fn mass_recompose(alphas: [f64; 4], params: &PhysParams) -> [f64; 4] {
    let ff = far_field_eigen(params);
    let mut out = [0.0; 4];
    let basis = [ff.r0_minus, [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], ff.r3_plus];
    for (a, r) in alphas.iter().zip(basis.iter()) {
        for k in 0..4 {
            out[k] += a * r[k];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> PhysParams {
        PhysParams::new(1.4, 1.0, 0.0, 1.0, [1.0, 0.0], 16.0).unwrap()
    }

    #[test]
    fn pressure_gamma_law() {
        let p = params();
        // rho = 1 is the identity case for any gamma
        assert_eq!(pressure(1.0, &p).unwrap(), 1.0);
        // independent oracle: exp(gamma ln rho) with mpmath at 40 digits
        assert_abs_diff_eq!(
            pressure(2.0, &p).unwrap(),
            2.639015821545788518748003942459280266067,
            epsilon = 1e-14
        );
        // p'(1) = gamma for rho_bar = 1
        let p2 = PhysParams::new(2.0, 1.0, 0.0, 1.0, [1.0, 0.0], 16.0).unwrap();
        assert_eq!(pressure_derivative(1.0, &p2).unwrap(), 2.0);
        assert!(pressure(0.0, &p).is_err());
        assert!(pressure(-1.0, &p).is_err());
    }

    #[test]
    fn params_invariants() {
        assert!(PhysParams::new(1.4, -1.0, 0.0, 1.0, [1.0, 0.0], 16.0).is_err());
        assert!(PhysParams::new(1.4, 1.0, -2.0, 1.0, [1.0, 0.0], 16.0).is_err());
        assert!(PhysParams::new(0.9, 1.0, 0.0, 1.0, [1.0, 0.0], 16.0).is_err());
        assert!(PhysParams::new(1.4, 1.0, 0.0, -1.0, [1.0, 0.0], 16.0).is_err());
        assert!(PhysParams::new(1.4, 1.0, 0.0, 1.0, [1.0, 0.0], 0.5).is_err());
        // mu + lambda = 0 is allowed and keeps mu_tilde > 0
        let p = PhysParams::new(1.4, 1.0, -1.0, 1.0, [1.0, 0.0], 16.0).unwrap();
        assert_eq!(p.mu_tilde(), 1.0);
    }

    #[test]
    fn rh_accepts_normalized_vortex_sheet() {
        let p = params();
        let (ok, _) = rh_check(&p.minus_state(), &p.plus_state(), 0.0, 1e-12).unwrap();
        assert!(ok);
    }

    #[test]
    fn rh_zero_jump_and_normal_jump() {
        let s = ConstantState { rho: 1.0, u: [0.3, -0.2, 0.7] };
        let (ok, _) = rh_check(&s, &s, 0.7, 1e-12).unwrap();
        assert!(ok, "zero jump moving with the flow is always admissible");

        let l = ConstantState { rho: 1.0, u: [0.0, 0.0, 0.0] };
        let r = ConstantState { rho: 1.0, u: [0.0, 0.0, 1.0] };
        let (ok, res) = rh_check(&l, &r, 0.0, 1e-12).unwrap();
        assert!(!ok);
        assert!(res[0].abs() > 0.5, "normal-velocity jump must show in the u3 slot");
    }

    #[test]
    fn galilean_boost_roundtrip_and_normalization() {
        // constant state under boost c -> (rho, u + c)
        let constant = |_x: [f64; 3], _t: f64| Ok((2.0, [0.1, 0.2, 0.3]));
        let boosted = galilean_transform(constant, [1.0, -2.0, 0.5]);
        let (rho, u) = boosted.eval([4.0, 5.0, 6.0], 3.0).unwrap();
        assert_eq!(rho, 2.0);
        assert_abs_diff_eq!(u[0], 1.1, epsilon = 1e-15);
        assert_abs_diff_eq!(u[1], -1.8, epsilon = 1e-15);
        assert_abs_diff_eq!(u[2], 0.8, epsilon = 1e-15);

        // boost composed with its inverse is the identity
        let field = |x: [f64; 3], t: f64| {
            Ok((1.0 + 0.1 * (x[0] + 2.0 * x[1] - x[2]) + 0.01 * t, [x[2], x[0], x[1]]))
        };
        let c = [0.4, -0.7, 1.3];
        let round = galilean_transform(galilean_transform(field, c), [-c[0], -c[1], -c[2]]);
        for (x, t) in [([0.0, 0.0, 0.0], 0.0), ([1.0, -2.0, 3.0], 2.5), ([0.3, 0.3, -0.9], 7.0)] {
            let (r0, u0) = field(x, t).unwrap();
            let (r1, u1) = round.eval(x, t).unwrap();
            assert_abs_diff_eq!(r0, r1, epsilon = 1e-14);
            for k in 0..3 {
                assert_abs_diff_eq!(u0[k], u1[k], epsilon = 1e-14);
            }
        }

        // general sheet boosted into normalized form
        let u_minus = [0.0, 1.0, 0.25];
        let u_plus = [2.0, 3.0, 0.25];
        let s = 0.25;
        let c = normalizing_boost(u_minus, u_plus, s);
        let halves = |x: [f64; 3], _t: f64| {
            Ok(if x[2] < 0.0 { (1.0, u_minus) } else { (1.0, u_plus) })
        };
        let normalized = galilean_transform(halves, c);
        let (_, ul) = normalized.eval([0.0, 0.0, -1.0], 0.0).unwrap();
        let (_, ur) = normalized.eval([0.0, 0.0, 1.0], 0.0).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(ul[k], -ur[k], epsilon = 1e-15);
        }
        assert_abs_diff_eq!(ur[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn eigen_decomp_matches_displayed_structure() {
        let p = PhysParams::new(2.0, 1.0, 0.0, 1.0, [1.0, 0.0], 16.0).unwrap();
        let minus = p.minus_state();
        let e = eigen_decomp(minus.rho, minus.u, &p).unwrap();
        // lambda_0^- = u3 - sqrt(p'(rho)) = -sqrt(2)
        assert_abs_diff_eq!(e.lambdas[0], -core::f64::consts::SQRT_2, epsilon = 1e-15);
        // r1 has no density component
        assert_eq!(e.r[1][0], 0.0);
        assert_eq!(e.r[1], [0.0, 1.0, 0.0, 0.0]);
        assert_eq!(e.r[2], [0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn eigen_vectors_satisfy_matrix_identity() {
        // independent matrix-vector oracle: A r_i = lambda_i r_i
        let p = params();
        for state in [
            (1.0, [0.7, -0.4, 0.2]),
            (2.5, [0.0, 0.0, 0.0]),
            (0.8, [1.0, 1.0, -0.6]),
        ] {
            let (rho, u) = state;
            let a = characteristic_matrix(rho, u, &p);
            let e = eigen_decomp(rho, u, &p).unwrap();
            for i in 0..4 {
                let scale: f64 = e.r[i].iter().map(|v| v.abs()).fold(0.0, f64::max);
                for row in 0..4 {
                    let av: f64 = (0..4).map(|k| a[row][k] * e.r[i][k]).sum();
                    let want = e.lambdas[i] * e.r[i][row];
                    assert!(
                        (av - want).abs() <= 1e-12 * scale.max(1.0),
                        "A r_{i} row {row}: {av} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn mass_decompose_basis_and_linearity() {
        let p = params();
        // basis vector r1
        assert_eq!(mass_decompose([0.0, 1.0, 0.0, 0.0], &p).unwrap(), [0.0, 1.0, 0.0, 0.0]);
        // zero
        assert_eq!(mass_decompose([0.0; 4], &p).unwrap(), [0.0; 4]);
        // r0^- + r3^+
        let ff = far_field_eigen(&p);
        let sum = [
            ff.r0_minus[0] + ff.r3_plus[0],
            ff.r0_minus[1] + ff.r3_plus[1],
            ff.r0_minus[2] + ff.r3_plus[2],
            ff.r0_minus[3] + ff.r3_plus[3],
        ];
        let a = mass_decompose(sum, &p).unwrap();
        assert_abs_diff_eq!(a[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a[2], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a[3], 1.0, epsilon = 1e-14);

        // round trip on an arbitrary vector, relative residual < 1e-12
        let mass = [0.37, -1.2, 0.05, 2.4];
        let al = mass_decompose(mass, &p).unwrap();
        let back = mass_recompose(al, &p);
        for k in 0..4 {
            assert_abs_diff_eq!(back[k], mass[k], epsilon = 1e-12);
        }
    }
}
