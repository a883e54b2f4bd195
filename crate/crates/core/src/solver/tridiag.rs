//! Thomas solves for the implicit viscous sweeps: plain tridiagonal
//! systems on Dirichlet lines and cyclic systems on periodic columns
//! (Sherman-Morrison).

use alloc::vec;
use alloc::vec::Vec;

/// Scratch space reused across solves of the same size.
pub struct TridiagScratch {
    c: Vec<f64>,
    d: Vec<f64>,
    u: Vec<f64>,
    z: Vec<f64>,
}

impl TridiagScratch {
    pub fn new(n: usize) -> Self {
        Self { c: vec![0.0; n], d: vec![0.0; n], u: vec![0.0; n], z: vec![0.0; n] }
    }

    fn ensure(&mut self, n: usize) {
        if self.c.len() < n {
            self.c.resize(n, 0.0);
            self.d.resize(n, 0.0);
            self.u.resize(n, 0.0);
            self.z.resize(n, 0.0);
        }
    }
}

/// Solves `sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i]` with
/// `sub[0]` and `sup[n-1]` ignored. Writes the solution into `rhs`.
/// Returns false on pivot breakdown.
pub fn solve_tridiag(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &mut [f64],
    scratch: &mut TridiagScratch,
) -> bool {
    let n = diag.len();
    debug_assert!(sub.len() == n && sup.len() == n && rhs.len() == n);
    if n == 0 {
        return true;
    }
    scratch.ensure(n);
    let c = &mut scratch.c;
    let d = &mut scratch.d;
    if diag[0] == 0.0 {
        return false;
    }
    let inv = 1.0 / diag[0];
    c[0] = sup[0] * inv;
    d[0] = rhs[0] * inv;
    for i in 1..n {
        let denom = diag[i] - sub[i] * c[i - 1];
        if denom == 0.0 {
            return false;
        }
        let inv = 1.0 / denom;
        c[i] = sup[i] * inv;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) * inv;
    }
    rhs[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = d[i] - c[i] * rhs[i + 1];
    }
    true
}

/// Solves the cyclic tridiagonal system with wrap couplings
/// `sub[0] x[n-1]` and `sup[n-1] x[0]` via Sherman-Morrison.
pub fn solve_cyclic_tridiag(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &mut [f64],
    scratch: &mut TridiagScratch,
) -> bool {
    let n = diag.len();
    debug_assert!(sub.len() == n && sup.len() == n && rhs.len() == n);
    if n < 3 {
        // direct 1x1 / 2x2 solve
        match n {
            1 => {
                let a = diag[0] + sub[0] + sup[0];
                if a == 0.0 {
                    return false;
                }
                rhs[0] /= a;
                return true;
            }
            2 => {
                let a = diag[0];
                let b = sup[0] + sub[0];
                let c = sub[1] + sup[1];
                let d = diag[1];
                let det = a * d - b * c;
                if det == 0.0 {
                    return false;
                }
                let (r0, r1) = (rhs[0], rhs[1]);
                rhs[0] = (d * r0 - b * r1) / det;
                rhs[1] = (a * r1 - c * r0) / det;
                return true;
            }
            _ => return false,
        }
    }
    scratch.ensure(n);
    // condensed system: zero the wrap terms, correct with u v^T
    let gamma = -diag[0];
    let mut dmod = vec![0.0; n];
    dmod.copy_from_slice(diag);
    dmod[0] -= gamma;
    dmod[n - 1] -= sup[n - 1] * sub[0] / gamma;
    let mut u = core::mem::take(&mut scratch.u);
    u.resize(n, 0.0);
    u.fill(0.0);
    u[0] = gamma;
    u[n - 1] = sup[n - 1];
    if !solve_tridiag(sub, &dmod, sup, rhs, scratch) {
        scratch.u = u;
        return false;
    }
    if !solve_tridiag(sub, &dmod, sup, &mut u, scratch) {
        scratch.u = u;
        return false;
    }
    let vy = rhs[0] + sub[0] / gamma * rhs[n - 1];
    let vq = u[0] + sub[0] / gamma * u[n - 1];
    let denom = 1.0 + vq;
    if denom == 0.0 {
        scratch.u = u;
        return false;
    }
    let factor = vy / denom;
    for i in 0..n {
        rhs[i] -= factor * u[i];
    }
    scratch.u = u;
    true
}
