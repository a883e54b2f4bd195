//! Discrete geometry and field calculus.
//!
//! Domains are either fully periodic tori (unit period per retained
//! coordinate) or a hybrid of a periodic transverse direction `x2` and a
//! truncated line `x3 in [-L, L]`. Fields are cell-centered, stored
//! row-major with `x2` fastest. All quadratures are midpoint sums, which
//! coincide with the trapezoid rule on periodic directions and are
//! spectrally accurate for smooth fields with decaying tails.

use crate::math;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum GridError {
    Invalid(String),
    ShapeMismatch { expected: usize, got: usize },
    UnknownNormKind,
}

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridError::Invalid(msg) => write!(f, "invalid grid: {msg}"),
            GridError::ShapeMismatch { expected, got } => {
                write!(f, "field length {got} does not match grid ({expected})")
            }
            GridError::UnknownNormKind => write!(f, "unknown norm kind"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GridError {}

/// Geometry of the `x3` axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum X3Kind {
    /// Periodic with unit period (torus runs).
    PeriodicUnit,
    /// Truncated line `[-L, L]` with Dirichlet data supplied externally.
    Line { half_width: f64 },
}

/// Uniform cell-centered grid: `x3` alone (`dim = 1`) or `(x2, x3)`
/// (`dim = 2`) with `x2` always periodic of unit period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HybridGrid {
    pub dim: u8,
    pub n2: usize,
    pub n3: usize,
    pub h2: f64,
    pub h3: f64,
    pub x3: X3Kind,
}

impl HybridGrid {
    /// Fully periodic unit torus in every retained coordinate.
    pub fn torus(dim: u8, n2: usize, n3: usize) -> Result<Self, GridError> {
        if dim != 1 && dim != 2 {
            return Err(GridError::Invalid(alloc::format!("dim must be 1 or 2, got {dim}")));
        }
        if n3 < 4 || (dim == 2 && n2 < 4) {
            return Err(GridError::Invalid(alloc::format!(
                "torus needs at least 4 cells per direction, got n2={n2}, n3={n3}"
            )));
        }
        let n2 = if dim == 1 { 1 } else { n2 };
        Ok(Self {
            dim,
            n2,
            n3,
            h2: 1.0 / n2 as f64,
            h3: 1.0 / n3 as f64,
            x3: X3Kind::PeriodicUnit,
        })
    }

    /// Truncated line `[-L, L]` in `x3`, optionally with a periodic `x2`.
    pub fn line(dim: u8, half_width: f64, n3: usize, n2: usize) -> Result<Self, GridError> {
        if dim != 1 && dim != 2 {
            return Err(GridError::Invalid(alloc::format!("dim must be 1 or 2, got {dim}")));
        }
        if !(half_width > 0.0) {
            return Err(GridError::Invalid(alloc::format!(
                "half width L = {half_width} must be positive"
            )));
        }
        if n3 < 16 {
            return Err(GridError::Invalid(alloc::format!("line grid needs n3 >= 16, got {n3}")));
        }
        if n3 % 2 != 0 {
            return Err(GridError::Invalid(alloc::format!(
                "line grid needs an even cell count, got {n3}"
            )));
        }
        if dim == 2 && n2 < 4 {
            return Err(GridError::Invalid(alloc::format!("dim=2 needs n2 >= 4, got {n2}")));
        }
        let n2 = if dim == 1 { 1 } else { n2 };
        Ok(Self {
            dim,
            n2,
            n3,
            h2: 1.0 / n2 as f64,
            h3: 2.0 * half_width / n3 as f64,
            x3: X3Kind::Line { half_width },
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n2 * self.n3
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i3: usize, i2: usize) -> usize {
        i3 * self.n2 + i2
    }

    /// Cell-center `x3` coordinate. On line grids mirrored cells have
    /// exactly opposite coordinates, so symmetric quadratures of odd
    /// integrands vanish to round-off.
    #[inline]
    pub fn x3(&self, i3: usize) -> f64 {
        match self.x3 {
            X3Kind::PeriodicUnit => (i3 as f64 + 0.5) * self.h3,
            X3Kind::Line { .. } => {
                let m = self.n3 / 2;
                if i3 < m {
                    -((m - 1 - i3) as f64 + 0.5) * self.h3
                } else {
                    ((i3 - m) as f64 + 0.5) * self.h3
                }
            }
        }
    }

    #[inline]
    pub fn x2(&self, i2: usize) -> f64 {
        (i2 as f64 + 0.5) * self.h2
    }

    /// Quadrature weight of one cell (`x2` carries measure `h2` so the full
    /// `x2` sum realizes the exact transverse mean over the unit period).
    #[inline]
    pub fn cell_measure(&self) -> f64 {
        if self.dim == 2 {
            self.h2 * self.h3
        } else {
            self.h3
        }
    }

    pub fn is_periodic_x3(&self) -> bool {
        matches!(self.x3, X3Kind::PeriodicUnit)
    }

    pub fn half_width(&self) -> Option<f64> {
        match self.x3 {
            X3Kind::Line { half_width } => Some(half_width),
            X3Kind::PeriodicUnit => None,
        }
    }

    fn check_len(&self, f: &[f64]) -> Result<(), GridError> {
        if f.len() != self.len() {
            return Err(GridError::ShapeMismatch { expected: self.len(), got: f.len() });
        }
        Ok(())
    }
}

/// Conserved fields `(rho, m1, m2, m3)` on a grid at one time instant.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub rho: Vec<f64>,
    pub m: [Vec<f64>; 3],
}

impl FlowState {
    pub fn constant(grid: &HybridGrid, rho: f64, m: [f64; 3]) -> Self {
        let n = grid.len();
        Self { t: 0.0, rho: vec![rho; n], m: [vec![m[0]; n], vec![m[1]; n], vec![m[2]; n]] }
    }

    pub fn zeros(grid: &HybridGrid) -> Self {
        Self::constant(grid, 0.0, [0.0; 3])
    }

    /// Zero-length placeholder used when buffers are temporarily moved out.
    pub fn empty() -> Self {
        Self { t: 0.0, rho: Vec::new(), m: [Vec::new(), Vec::new(), Vec::new()] }
    }

    pub fn min_density(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Pointwise velocity `u = m / rho`.
    pub fn velocity(&self) -> [Vec<f64>; 3] {
        let u = |k: usize| -> Vec<f64> {
            self.m[k].iter().zip(self.rho.iter()).map(|(m, r)| m / r).collect()
        };
        [u(0), u(1), u(2)]
    }

    /// Flat binary layout: header + four row-major (`x2` fastest) f64-LE
    /// arrays.
    pub fn to_bytes(&self, grid: &HybridGrid) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 32 * grid.len());
        out.extend_from_slice(b"VSWSNAP1");
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(grid.dim as u32).to_le_bytes());
        out.extend_from_slice(&(grid.n2 as u64).to_le_bytes());
        out.extend_from_slice(&(grid.n3 as u64).to_le_bytes());
        let (kind, l) = match grid.x3 {
            X3Kind::PeriodicUnit => (0u32, 0.0),
            X3Kind::Line { half_width } => (1u32, half_width),
        };
        out.extend_from_slice(&kind.to_le_bytes());
        out.extend_from_slice(&l.to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        for field in core::iter::once(&self.rho).chain(self.m.iter()) {
            for v in field {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(HybridGrid, FlowState), GridError> {
        let fail = |msg: &str| GridError::Invalid(alloc::format!("snapshot decode: {msg}"));
        if bytes.len() < 56 || &bytes[..8] != b"VSWSNAP1" {
            return Err(fail("bad magic"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u32_at(8) != 1 {
            return Err(fail("unsupported version"));
        }
        let dim = u32_at(12) as u8;
        let n2 = u64_at(16) as usize;
        let n3 = u64_at(24) as usize;
        let kind = u32_at(32);
        let l = f64_at(36);
        let t = f64_at(44);
        let grid = match kind {
            0 => HybridGrid::torus(dim, n2, n3),
            1 => HybridGrid::line(dim, l, n3, n2),
            _ => Err(fail("unknown x3 kind")),
        }?;
        let n = grid.len();
        if bytes.len() != 52 + 32 * n {
            return Err(GridError::ShapeMismatch { expected: 52 + 32 * n, got: bytes.len() });
        }
        let read_field = |fi: usize| -> Vec<f64> {
            let base = 52 + fi * 8 * n;
            (0..n).map(|i| f64_at(base + 8 * i)).collect()
        };
        Ok((grid, FlowState { t, rho: read_field(0), m: [read_field(1), read_field(2), read_field(3)] }))
    }
}

/// Transverse mean of a field: a function of `x3` only. Exact for the
/// midpoint rule on the uniform periodic `x2` grid. `dim = 1` fields are
/// their own zero mode.
pub fn zero_mode(grid: &HybridGrid, f: &[f64]) -> Vec<f64> {
    debug_assert_eq!(f.len(), grid.len());
    if grid.dim == 1 {
        return f.to_vec();
    }
    let inv = 1.0 / grid.n2 as f64;
    (0..grid.n3)
        .map(|i3| {
            let row = &f[grid.idx(i3, 0)..grid.idx(i3, 0) + grid.n2];
            row.iter().sum::<f64>() * inv
        })
        .collect()
}

/// Mean-free remainder `f - zero_mode(f)` broadcast back to the full shape.
pub fn nonzero_mode(grid: &HybridGrid, f: &[f64]) -> Vec<f64> {
    let flat = zero_mode(grid, f);
    let mut out = f.to_vec();
    for i3 in 0..grid.n3 {
        for i2 in 0..grid.n2 {
            out[grid.idx(i3, i2)] -= flat[i3];
        }
    }
    out
}

/// Zero mode plus mean-free remainder; `flat + sharp` reconstructs the
/// field exactly.
#[derive(Clone, Debug)]
pub struct ModeSplit {
    pub flat: Vec<f64>,
    pub sharp: Vec<f64>,
}

pub fn mode_split(grid: &HybridGrid, f: &[f64]) -> ModeSplit {
    let flat = zero_mode(grid, f);
    let mut sharp = f.to_vec();
    for i3 in 0..grid.n3 {
        for i2 in 0..grid.n2 {
            sharp[grid.idx(i3, i2)] -= flat[i3];
        }
    }
    ModeSplit { flat, sharp }
}

/// Cumulative trapezoid of a 1D profile from the left end of the line;
/// `decays_left` is false when the left tail exceeds `tail_tol` relative to
/// the profile magnitude (truncation bias warning, not an error).
pub struct AntiDerivative {
    pub values: Vec<f64>,
    pub decays_left: bool,
}

pub fn anti_derivative(grid: &HybridGrid, profile: &[f64], tail_tol: f64) -> AntiDerivative {
    debug_assert_eq!(profile.len(), grid.n3);
    let h = grid.h3;
    let mut values = Vec::with_capacity(grid.n3);
    let mut acc = 0.5 * h * profile[0];
    values.push(acc);
    for i in 1..grid.n3 {
        acc += 0.5 * h * (profile[i] + profile[i - 1]);
        values.push(acc);
    }
    let scale = profile.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let decays_left = profile[0].abs() <= tail_tol * scale.max(1e-300);
    AntiDerivative { values, decays_left }
}

/// Anti-derivatives of the zero-mode perturbation pair.
#[derive(Clone, Debug)]
pub struct AntiDerivativePair {
    /// Anti-derivative of the density zero mode.
    pub phi: Vec<f64>,
    /// Anti-derivatives of the momentum zero modes.
    pub psi: [Vec<f64>; 3],
    pub decays_left: bool,
}

/// Midpoint quadrature of a 1D profile over the `x3` extent (compensated).
pub fn integrate_profile(grid: &HybridGrid, profile: &[f64]) -> f64 {
    debug_assert_eq!(profile.len(), grid.n3);
    let mut acc = math::KahanSum::new();
    for &v in profile {
        acc.add(v);
    }
    acc.value() * grid.h3
}

/// Domain integral of a full field (compensated sum).
pub fn integrate_field(grid: &HybridGrid, f: &[f64]) -> f64 {
    debug_assert_eq!(f.len(), grid.len());
    let mut acc = math::KahanSum::new();
    for &v in f {
        acc.add(v);
    }
    acc.value() * grid.cell_measure()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    Linf,
    H1,
    H2,
    H3,
    /// `L2` against the weight `(x3^2 + 1)^{3/2}`.
    L2Weighted3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dir {
    X2,
    X3,
}

/// First or second difference along one direction; 2nd-order centered
/// stencils with periodic wrap on periodic axes and one-sided 2nd-order
/// closures at line boundaries.
pub fn fd(grid: &HybridGrid, f: &[f64], dir: Dir, order: u8) -> Result<Vec<f64>, GridError> {
    grid.check_len(f)?;
    if order != 1 && order != 2 {
        return Err(GridError::Invalid(alloc::format!("difference order {order} not in {{1,2}}")));
    }
    if dir == Dir::X2 && grid.dim != 2 {
        return Err(GridError::Invalid(String::from("x2 derivative requires dim = 2")));
    }
    let mut out = vec![0.0; f.len()];
    match dir {
        Dir::X2 => {
            let (n2, h) = (grid.n2, grid.h2);
            for i3 in 0..grid.n3 {
                let base = grid.idx(i3, 0);
                for i2 in 0..n2 {
                    let prev = f[base + (i2 + n2 - 1) % n2];
                    let here = f[base + i2];
                    let next = f[base + (i2 + 1) % n2];
                    out[base + i2] = if order == 1 {
                        (next - prev) / (2.0 * h)
                    } else {
                        (next - 2.0 * here + prev) / (h * h)
                    };
                }
            }
        }
        Dir::X3 => {
            let (n3, n2, h) = (grid.n3, grid.n2, grid.h3);
            let periodic = grid.is_periodic_x3();
            for i3 in 0..n3 {
                for i2 in 0..n2 {
                    let at = |j: usize| f[grid.idx(j, i2)];
                    let v = if periodic {
                        let prev = at((i3 + n3 - 1) % n3);
                        let next = at((i3 + 1) % n3);
                        if order == 1 {
                            (next - prev) / (2.0 * h)
                        } else {
                            (next - 2.0 * at(i3) + prev) / (h * h)
                        }
                    } else if i3 == 0 {
                        if order == 1 {
                            (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
                        } else {
                            (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / (h * h)
                        }
                    } else if i3 == n3 - 1 {
                        if order == 1 {
                            (3.0 * at(n3 - 1) - 4.0 * at(n3 - 2) + at(n3 - 3)) / (2.0 * h)
                        } else {
                            (2.0 * at(n3 - 1) - 5.0 * at(n3 - 2) + 4.0 * at(n3 - 3)
                                - at(n3 - 4))
                                / (h * h)
                        }
                    } else if order == 1 {
                        (at(i3 + 1) - at(i3 - 1)) / (2.0 * h)
                    } else {
                        (at(i3 + 1) - 2.0 * at(i3) + at(i3 - 1)) / (h * h)
                    };
                    out[grid.idx(i3, i2)] = v;
                }
            }
        }
    }
    Ok(out)
}

fn l2_sq(grid: &HybridGrid, f: &[f64], profile: bool) -> f64 {
    let w = if profile { grid.h3 } else { grid.cell_measure() };
    f.iter().map(|v| v * v).sum::<f64>() * w
}

/// Discrete norms; accepts full fields (`n2 * n3` values) or 1D profiles
/// over `x3` (`n3` values).
pub fn norms(grid: &HybridGrid, f: &[f64], kind: NormKind) -> Result<f64, GridError> {
    let profile = f.len() == grid.n3 && grid.len() != grid.n3;
    if !profile {
        grid.check_len(f)?;
    }
    // 1D profiles are handled as fields on a dim=1 view of the same x3 axis.
    let g1 = HybridGrid { dim: 1, n2: 1, h2: 1.0, ..*grid };
    let (g, f) = if profile { (&g1, f) } else { (grid, f) };
    let w = g.cell_measure();
    match kind {
        NormKind::L1 => Ok(f.iter().map(|v| v.abs()).sum::<f64>() * w),
        NormKind::L2 => Ok(math::sqrt(l2_sq(g, f, false))),
        NormKind::Linf => Ok(f.iter().fold(0.0_f64, |a, v| a.max(v.abs()))),
        NormKind::L2Weighted3 => {
            let mut acc = 0.0;
            for i3 in 0..g.n3 {
                let x3 = g.x3(i3);
                let weight = math::powf(x3 * x3 + 1.0, 1.5);
                for i2 in 0..g.n2 {
                    let v = f[g.idx(i3, i2)];
                    acc += weight * v * v;
                }
            }
            Ok(math::sqrt(acc * w))
        }
        NormKind::H1 | NormKind::H2 | NormKind::H3 => {
            let order = match kind {
                NormKind::H1 => 1,
                NormKind::H2 => 2,
                _ => 3,
            };
            let mut acc = l2_sq(g, f, false);
            // derivatives of every multi-index (a2, a3), 1 <= a2+a3 <= order,
            // over the retained coordinates only
            let mut level: Vec<(u8, Vec<f64>)> = vec![(0, f.to_vec())];
            for _ in 0..order {
                let mut next: Vec<(u8, Vec<f64>)> = Vec::new();
                for (a2, d) in &level {
                    let d3 = fd(g, d, Dir::X3, 1)?;
                    acc += l2_sq(g, &d3, false);
                    next.push((*a2, d3));
                    if g.dim == 2 {
                        // take the x2-derivative only once per multi-index
                        // (from the representative with a3 applied first)
                        let d2 = fd(g, d, Dir::X2, 1)?;
                        acc += l2_sq(g, &d2, false);
                        next.push((a2 + 1, d2));
                    }
                }
                // deduplicate multi-indices: keep one representative per a2
                next.sort_by_key(|(a2, _)| *a2);
                next.dedup_by_key(|(a2, _)| *a2);
                level = next;
            }
            Ok(math::sqrt(acc))
        }
    }
}

/// `max |f| + max |first differences|` over the retained coordinates.
pub fn w1inf(grid: &HybridGrid, f: &[f64]) -> Result<f64, GridError> {
    let sup = norms(grid, f, NormKind::Linf)?;
    let mut dsup = norms(grid, &fd(grid, f, Dir::X3, 1)?, NormKind::Linf)?;
    if grid.dim == 2 {
        dsup = dsup.max(norms(grid, &fd(grid, f, Dir::X2, 1)?, NormKind::Linf)?);
    }
    Ok(sup + dsup)
}

/// Maps a 1D torus profile (unit period) onto a line grid by exact periodic
/// extension. Requires the line spacing to equal the torus spacing and the
/// half width to be an integer, so cell centers coincide modulo the period.
pub fn extend_torus_profile(
    line: &HybridGrid,
    torus_n3: usize,
    profile: &[f64],
) -> Result<Vec<f64>, GridError> {
    debug_assert_eq!(profile.len(), torus_n3);
    let l = line
        .half_width()
        .ok_or_else(|| GridError::Invalid(String::from("extension target must be a line grid")))?;
    let l_int = math::round(l);
    if (l - l_int).abs() > 1e-12 || ((line.h3 * torus_n3 as f64) - 1.0).abs() > 1e-12 {
        return Err(GridError::Invalid(alloc::format!(
            "periodic extension needs integer L and h3 = 1/n3_torus (L = {l}, h3 = {})",
            line.h3
        )));
    }
    Ok((0..line.n3).map(|i| profile[i % torus_n3]).collect())
}

/// Extends a full torus field onto a line grid (periodic in `x3`, identity
/// in `x2`).
pub fn extend_torus_field(
    line: &HybridGrid,
    torus: &HybridGrid,
    f: &[f64],
) -> Result<Vec<f64>, GridError> {
    torus.check_len(f)?;
    if line.n2 != torus.n2 {
        return Err(GridError::Invalid(String::from("transverse grids must match")));
    }
    let l = line
        .half_width()
        .ok_or_else(|| GridError::Invalid(String::from("extension target must be a line grid")))?;
    if (l - math::round(l)).abs() > 1e-12 || ((line.h3 * torus.n3 as f64) - 1.0).abs() > 1e-12 {
        return Err(GridError::Invalid(String::from(
            "periodic extension needs integer L and matching spacings",
        )));
    }
    let mut out = vec![0.0; line.len()];
    for i3 in 0..line.n3 {
        let j3 = i3 % torus.n3;
        out[line.idx(i3, 0)..line.idx(i3, 0) + line.n2]
            .copy_from_slice(&f[torus.idx(j3, 0)..torus.idx(j3, 0) + torus.n2]);
    }
    Ok(out)
}

/// Evaluates the trigonometric interpolant of each periodic `x2` row at
/// points shifted by `shift` (i.e. returns `f(x2 - shift, x3)`). The
/// circulant weights sum to one, so transverse means are preserved exactly
/// up to round-off. Spectrally accurate for smooth periodic rows.
pub fn spectral_shift_x2(grid: &HybridGrid, f: &[f64], shift: f64) -> Result<Vec<f64>, GridError> {
    grid.check_len(f)?;
    if grid.dim != 2 {
        return Ok(f.to_vec());
    }
    let n = grid.n2;
    // weight w[d] of the sample d cells behind the evaluation point
    let mut w = vec![0.0; n];
    let half = n / 2;
    for (d, wd) in w.iter_mut().enumerate() {
        let y = d as f64 * grid.h2 - shift;
        let mut acc = 1.0;
        for k in 1..half {
            acc += 2.0 * math::cos(2.0 * math::PI * k as f64 * y);
        }
        if n % 2 == 0 {
            acc += math::cos(2.0 * math::PI * half as f64 * y);
        } else {
            acc += 2.0 * math::cos(2.0 * math::PI * half as f64 * y);
        }
        *wd = acc / n as f64;
    }
    let mut out = vec![0.0; f.len()];
    for i3 in 0..grid.n3 {
        let row = &f[grid.idx(i3, 0)..grid.idx(i3, 0) + n];
        let orow = &mut out[i3 * n..(i3 + 1) * n];
        for (j, o) in orow.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (d, wd) in w.iter().enumerate() {
                acc += wd * row[(j + n - d % n) % n];
            }
            *o = acc;
        }
    }
    Ok(out)
}
