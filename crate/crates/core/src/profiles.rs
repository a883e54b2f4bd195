//! Closed-form self-similar profiles.
//!
//! * `Theta(xi) = erf( sqrt(rho_bar / (4 mu)) * xi )` — the normalized
//!   error-function wave solving `-2 mu Theta'' = rho_bar xi Theta'` with
//!   limits `+-1`; the viscous wave is `u(x3, t) = Theta(x3 / sqrt(t+Lambda)) u_bar`
//!   at constant density.
//! * the Gaussian weight family `kappa`, its left cumulative `K` and the
//!   cumulative of its square, all via the error function (no runtime
//!   quadrature),
//! * unit-mass diffusion-wave kernels translating at the transverse
//!   characteristic speeds.

use crate::math;
use crate::model::{ModelError, PhysParams};

/// The similarity profile `Theta` and its `x3`-derivatives. `Theta` itself
/// is independent of the profile age; the age only enters through
/// `xi = x3 / sqrt(t + Lambda)`.
#[derive(Clone, Copy, Debug)]
pub struct SelfSimilarProfile {
    pub rho_bar: f64,
    pub mu: f64,
    /// Profile age used by the `(x3, t)` evaluations.
    pub lambda_age: f64,
}

impl SelfSimilarProfile {
    pub fn from_params(params: &PhysParams) -> Self {
        Self { rho_bar: params.rho_bar, mu: params.mu, lambda_age: params.lambda_age }
    }

    /// `a = (1/2) sqrt(rho_bar / mu)`, so that `Theta(xi) = erf(a xi)`.
    #[inline]
    fn a(&self) -> f64 {
        0.5 * math::sqrt(self.rho_bar / self.mu)
    }

    /// `d^j/dxi^j Theta(xi)` for `j = 0..=3`, analytic.
    pub fn theta_xi(&self, xi: f64, j: u32) -> Result<f64, ModelError> {
        let a = self.a();
        match j {
            0 => Ok(math::erf(a * xi)),
            1 => Ok(math::FRAC_2_SQRT_PI * a * gauss(a * xi)),
            2 => {
                let ax = a * xi;
                Ok(math::FRAC_2_SQRT_PI * a * a * (-2.0 * ax) * gauss(ax))
            }
            3 => {
                let ax = a * xi;
                Ok(math::FRAC_2_SQRT_PI * a * a * a * (4.0 * ax * ax - 2.0) * gauss(ax))
            }
            _ => Err(ModelError::InvalidParams(alloc::format!(
                "theta derivative order {j} unsupported (0..=3)"
            ))),
        }
    }

    /// Residual of the profile ODE, `-2 mu Theta''(xi) - rho_bar xi Theta'(xi)`.
    pub fn ode_residual(&self, xi: f64) -> f64 {
        let t1 = self.theta_xi(xi, 1).unwrap();
        let t2 = self.theta_xi(xi, 2).unwrap();
        -2.0 * self.mu * t2 - self.rho_bar * xi * t1
    }

    /// `d^j/dx3^j theta(x3, t)` with `theta(x3,t) = Theta(x3/sqrt(t+Lambda))`.
    /// Single evaluation path: the `(x3, t)` value is always obtained from
    /// `theta_xi` by the chain rule.
    pub fn theta_field(&self, x3: f64, t: f64, j: u32) -> Result<f64, ModelError> {
        let tau = t + self.lambda_age;
        if !(tau > 0.0) {
            return Err(ModelError::InvalidParams(alloc::format!(
                "t + Lambda = {tau} must be positive"
            )));
        }
        let root = math::sqrt(tau);
        let v = self.theta_xi(x3 / root, j)?;
        Ok(v / math::powf(root, j as f64))
    }

    /// Analytic `d/dt theta(x3, t) = -(x3 / (2 (t+Lambda))) d/dx3 theta`,
    /// which equals `(mu / rho_bar) d^2/dx3^2 theta`.
    pub fn theta_time_derivative(&self, x3: f64, t: f64) -> f64 {
        let tau = t + self.lambda_age;
        let d1 = self.theta_field(x3, t, 1).expect("tau > 0");
        -0.5 * x3 / tau * d1
    }
}

#[inline]
fn gauss(z: f64) -> f64 {
    math::exp(-z * z)
}

/// The viscous wave associated with the normalized vortex sheet:
/// `rho = rho_bar`, `u = theta(x3, t) u_bar`, `m = rho_bar u`.
pub fn viscous_wave(x3: f64, t: f64, params: &PhysParams) -> (f64, [f64; 3], [f64; 3]) {
    let profile = SelfSimilarProfile::from_params(params);
    let th = profile.theta_field(x3, t, 0).expect("t + Lambda > 0");
    let ub = params.u_bar3();
    let u = [th * ub[0], th * ub[1], 0.0];
    let m = [params.rho_bar * u[0], params.rho_bar * u[1], 0.0];
    (params.rho_bar, u, m)
}

/// The weight `kappa`, its left cumulative integral and the left cumulative
/// integral of `kappa^2`, all at one `(x3, t)`.
#[derive(Clone, Copy, Debug)]
pub struct KappaWeights {
    /// `kappa = (t+Lambda)^{-1/2} exp(-rho_bar x3^2 / (32 mu (t+Lambda)))`
    pub kappa: f64,
    /// `K(x3, t) = int_{-inf}^{x3} kappa`
    pub kappa_cumulative: f64,
    /// `int_{-inf}^{x3} kappa^2`
    pub kappa_sq_cumulative: f64,
}

pub fn kappa_weights(x3: f64, t: f64, params: &PhysParams) -> KappaWeights {
    let tau = t + params.lambda_age;
    debug_assert!(tau > 0.0);
    // kappa = tau^{-1/2} e^{-b^2 x^2}, b^2 = rho_bar / (32 mu tau)
    let b = math::sqrt(params.rho_bar / (32.0 * params.mu * tau));
    let kappa = gauss(b * x3) / math::sqrt(tau);
    // int_{-inf}^{x} e^{-b^2 y^2} dy = (sqrt(pi) / b) (1 + erf(b x)) / 2,
    // and tau^{-1/2} sqrt(pi) / (2 b) = sqrt(8 pi mu / rho_bar)
    let kappa_cumulative =
        math::sqrt(8.0 * math::PI * params.mu / params.rho_bar) * (1.0 + math::erf(b * x3));
    // kappa^2 has twice the exponent rate: sqrt(2) b, prefactor tau^{-1}
    let sqrt2 = core::f64::consts::SQRT_2;
    let kappa_sq_cumulative = math::sqrt(4.0 * math::PI * params.mu / params.rho_bar)
        / math::sqrt(tau)
        * (1.0 + math::erf(sqrt2 * b * x3));
    KappaWeights { kappa, kappa_cumulative, kappa_sq_cumulative }
}

/// A unit-mass Gaussian kernel translating at a characteristic speed:
/// `theta_speed(x3, t) = G(x3 - speed (t+Lambda), t)` with
/// `G(y, t) = exp(-y^2 / (4 (t+Lambda))) / (2 sqrt(pi (t+Lambda)))`.
#[derive(Clone, Copy, Debug)]
pub struct DiffusionKernel {
    pub speed: f64,
    pub lambda_age: f64,
}

impl DiffusionKernel {
    /// Kernel centered on the sheet (zero speed).
    pub fn stationary(params: &PhysParams) -> Self {
        Self { speed: 0.0, lambda_age: params.lambda_age }
    }

    /// Kernel on the slow acoustic characteristic `lambda_0^-`.
    pub fn minus(params: &PhysParams) -> Self {
        Self { speed: -params.sound_speed_bar(), lambda_age: params.lambda_age }
    }

    /// Kernel on the fast acoustic characteristic `lambda_3^+`.
    pub fn plus(params: &PhysParams) -> Self {
        Self { speed: params.sound_speed_bar(), lambda_age: params.lambda_age }
    }

    #[inline]
    fn tau(&self, t: f64) -> f64 {
        let tau = t + self.lambda_age;
        debug_assert!(tau > 0.0, "t + Lambda must be positive");
        tau
    }

    /// Kernel value at `(x3, t)`.
    pub fn eval(&self, x3: f64, t: f64) -> f64 {
        self.d3(x3, t, 0)
    }

    /// `d^j/dx3^j` of the kernel for `j = 0..=2`, analytic.
    pub fn d3(&self, x3: f64, t: f64, j: u32) -> f64 {
        let tau = self.tau(t);
        let y = x3 - self.speed * tau;
        let base = gauss(y / (2.0 * math::sqrt(tau))) / (2.0 * math::sqrt(math::PI * tau));
        match j {
            0 => base,
            1 => -y / (2.0 * tau) * base,
            2 => (y * y / (4.0 * tau * tau) - 0.5 / tau) * base,
            _ => panic!("kernel derivative order {j} unsupported (0..=2)"),
        }
    }

    /// Analytic `d/dt` of the kernel, equal to
    /// `d3^2 - speed * d3` applied to the kernel.
    pub fn time_derivative(&self, x3: f64, t: f64) -> f64 {
        self.d3(x3, t, 2) - self.speed * self.d3(x3, t, 1)
    }

    /// Center `speed * (t + Lambda)` of the kernel at time `t`.
    pub fn center(&self, t: f64) -> f64 {
        self.speed * self.tau(t)
    }
}
