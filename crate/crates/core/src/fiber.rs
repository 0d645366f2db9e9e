//! Fundamental (HE11) mode of an air-clad step-index fiber taper.
//!
//! The propagation constant comes from the exact vector characteristic
//! equation of a two-layer circular guide. The weakly-guiding LP01 form is
//! not used: silica in air is a high-contrast guide.

use std::f64::consts::PI;

use puruspe::{Jn, Kn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First positive zero of J1. The HE11 root always lies below it.
const J1_FIRST_ZERO: f64 = 3.831_705_970_207_512;

/// Bracket scan points between the core light line and the first J1 zero.
const SCAN_POINTS: usize = 400;

/// Offset kept from the light lines so that u and w stay strictly positive.
const EDGE: f64 = 1e-9;

/// Relative tolerance on the characteristic-equation residual.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Refractive index of fused silica from its three-term Sellmeier fit.
pub fn fused_silica_index(wavelength_um: f64) -> f64 {
    const B: [f64; 3] = [0.696_166_3, 0.407_942_6, 0.897_479_4];
    const C: [f64; 3] = [0.068_404_3, 0.116_241_4, 9.896_161];
    let l2 = wavelength_um * wavelength_um;
    let sum: f64 = B
        .iter()
        .zip(C.iter())
        .map(|(b, c)| b * l2 / (l2 - c * c))
        .sum();
    (1.0 + sum).sqrt()
}

/// Where the core index comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoreIndex {
    /// Wavelength-dependent Sellmeier value.
    FusedSilica,
    Constant(f64),
}

impl CoreIndex {
    pub fn at(&self, wavelength_um: f64) -> f64 {
        match *self {
            CoreIndex::FusedSilica => fused_silica_index(wavelength_um),
            CoreIndex::Constant(n) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberSpec {
    pub core: CoreIndex,
    pub clad_index: f64,
    pub diameter_um: f64,
}

impl FiberSpec {
    /// Silica taper in air.
    pub fn silica(diameter_um: f64) -> Self {
        Self {
            core: CoreIndex::FusedSilica,
            clad_index: 1.0,
            diameter_um,
        }
    }

    pub fn with_diameter(&self, diameter_um: f64) -> Self {
        Self {
            diameter_um,
            ..*self
        }
    }

    fn check(&self, wavelength_um: f64) -> Result<f64> {
        if !(wavelength_um > 0.0) || !wavelength_um.is_finite() {
            return Err(Error::InvalidInput(format!(
                "wavelength must be positive, got {wavelength_um}"
            )));
        }
        if !(self.diameter_um > 0.0) || !self.diameter_um.is_finite() {
            return Err(Error::InvalidInput(format!(
                "diameter must be positive, got {}",
                self.diameter_um
            )));
        }
        let n1 = self.core.at(wavelength_um);
        if !(self.clad_index >= 1.0 && n1 > self.clad_index) {
            return Err(Error::InvalidInput(format!(
                "need core index {n1} > clad index {} >= 1",
                self.clad_index
            )));
        }
        Ok(n1)
    }
}

/// One sample of a guided mode's dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidedModePoint {
    pub wavelength_um: f64,
    pub beta_rad_per_um: f64,
    pub n_eff: f64,
}

impl GuidedModePoint {
    pub fn from_n_eff(wavelength_um: f64, n_eff: f64) -> Self {
        Self {
            wavelength_um,
            beta_rad_per_um: 2.0 * PI * n_eff / wavelength_um,
            n_eff,
        }
    }
}

/// Characteristic equation of the hybrid modes for one (guide, wavelength).
#[derive(Debug, Clone, Copy)]
struct Hybrid {
    n1: f64,
    n2: f64,
    radius: f64,
    k: f64,
}

impl Hybrid {
    fn uw(&self, n: f64) -> (f64, f64) {
        let ak = self.radius * self.k;
        (
            ak * (self.n1 * self.n1 - n * n).sqrt(),
            ak * (n * n - self.n2 * self.n2).sqrt(),
        )
    }

    /// J1'(u) / (u J1(u)) and K1'(w) / (w K1(w)).
    fn log_derivs(u: f64, w: f64) -> (f64, f64) {
        let j1 = Jn(1, u);
        let dj1 = Jn(0, u) - j1 / u;
        let k1 = Kn(1, w);
        let dk1 = -Kn(0, w) - k1 / w;
        (dj1 / (u * j1), dk1 / (w * k1))
    }

    /// HE branch of the equation solved for the J term. Positive near the
    /// core light line, changes sign at the HE11 root.
    fn he_branch(&self, n: f64) -> f64 {
        let (u, w) = self.uw(n);
        let (jh, kh) = Self::log_derivs(u, w);
        let r = (self.n2 / self.n1).powi(2);
        let rhs = (1.0 / (u * u) + 1.0 / (w * w)) * (1.0 / (u * u) + r / (w * w));
        let disc = (kh * kh * (1.0 - r) * (1.0 - r) / 4.0 + rhs).sqrt();
        jh - (-kh * (1.0 + r) / 2.0 - disc)
    }

    /// Relative residual of the product form
    /// (J + K)(J + r K) = (n / n1)^2 (1/u^2 + 1/w^2)^2.
    fn relative_residual(&self, n: f64) -> f64 {
        let (u, w) = self.uw(n);
        let (jh, kh) = Self::log_derivs(u, w);
        let r = (self.n2 / self.n1).powi(2);
        let lhs = (jh + kh) * (jh + r * kh);
        let s = 1.0 / (u * u) + 1.0 / (w * w);
        let rhs = (n / self.n1).powi(2) * s * s;
        (lhs - rhs).abs() / rhs.abs()
    }
}

/// Bracketed root refinement: a secant (false position) trial each step,
/// followed by a bisection so the bracket at least halves.
pub(crate) fn refine_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Convergence("bracket does not straddle a root".into()));
    }
    for _ in 0..200 {
        let xs = hi - fhi * (hi - lo) / (fhi - flo);
        if xs > lo && xs < hi {
            let fs = f(xs);
            if fs == 0.0 {
                return Ok(xs);
            }
            if fs.signum() == flo.signum() {
                lo = xs;
                flo = fs;
            } else {
                hi = xs;
                fhi = fs;
            }
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(if flo.abs() < fhi.abs() { lo } else { hi })
}

/// HE11 effective index and propagation constant.
pub fn fundamental_neff(spec: &FiberSpec, wavelength_um: f64) -> Result<GuidedModePoint> {
    let n1 = spec.check(wavelength_um)?;
    let eq = Hybrid {
        n1,
        n2: spec.clad_index,
        radius: spec.diameter_um / 2.0,
        k: 2.0 * PI / wavelength_um,
    };

    // scan uniformly in the core parameter u, which keeps the resolution
    // independent of the diameter; the last point sits on the cladding line
    let ak = eq.radius * eq.k;
    let floor = spec.clad_index + EDGE;
    let u_floor = eq.uw(floor).0;
    let u_top = u_floor.min(J1_FIRST_ZERO);
    let mut grid: Vec<f64> = (0..=SCAN_POINTS)
        .map(|i| u_top * i as f64 / SCAN_POINTS as f64)
        .map(|u| (n1 * n1 - (u / ak).powi(2)).sqrt().min(n1 - EDGE))
        .filter(|&n| n > floor && eq.uw(n).0 < J1_FIRST_ZERO)
        .collect();
    if u_floor < J1_FIRST_ZERO {
        grid.push(floor);
    }

    let no_root = || Error::NoGuidedSolution {
        diameter_um: spec.diameter_um,
        wavelength_um,
    };
    let mut prev: Option<(f64, f64)> = None;
    for &n in &grid {
        let g = eq.he_branch(n);
        if let Some((np, gp)) = prev {
            if gp > 0.0 && g < 0.0 {
                let root = refine_root(|x| eq.he_branch(x), n, np)?;
                let res = eq.relative_residual(root);
                if !(res < RESIDUAL_TOL) {
                    return Err(Error::Convergence(format!(
                        "HE11 residual {res:.3e} at n_eff = {root}"
                    )));
                }
                return Ok(GuidedModePoint::from_n_eff(wavelength_um, root));
            }
        }
        if g.is_finite() {
            prev = Some((n, g));
        }
    }
    Err(no_root())
}

/// Relative characteristic-equation residual at a returned mode.
pub fn characteristic_residual(spec: &FiberSpec, point: &GuidedModePoint) -> Result<f64> {
    let n1 = spec.check(point.wavelength_um)?;
    let eq = Hybrid {
        n1,
        n2: spec.clad_index,
        radius: spec.diameter_um / 2.0,
        k: 2.0 * PI / point.wavelength_um,
    };
    Ok(eq.relative_residual(point.n_eff))
}

/// Centered-difference diameter sensitivity of beta, in units of
/// (2 pi / lambda) per micron, i.e. d n_eff / d d.
pub fn dbeta_dd(spec: &FiberSpec, wavelength_um: f64) -> Result<f64> {
    let d = spec.diameter_um;
    let step = (1e-3_f64).max(1e-3 * d);
    if d - step <= 0.0 {
        return Err(Error::InvalidInput(format!("diameter {d} too small to difference")));
    }
    let hi = fundamental_neff(&spec.with_diameter(d + step), wavelength_um)?;
    let lo = fundamental_neff(&spec.with_diameter(d - step), wavelength_um)?;
    let k = 2.0 * PI / wavelength_um;
    Ok((hi.beta_rad_per_um - lo.beta_rad_per_um) / (2.0 * step) / k)
}

/// Group index of the fundamental mode, n_eff - lambda d n_eff / d lambda.
pub fn group_index(spec: &FiberSpec, wavelength_um: f64) -> Result<f64> {
    let h = 1e-3 * wavelength_um;
    let hi = fundamental_neff(spec, wavelength_um + h)?.n_eff;
    let lo = fundamental_neff(spec, wavelength_um - h)?.n_eff;
    let mid = fundamental_neff(spec, wavelength_um)?.n_eff;
    Ok(mid - wavelength_um * (hi - lo) / (2.0 * h))
}

/// Radial amplitudes of the transverse fields. The full components are
/// `e_r cos(phi)`, `e_phi sin(phi)`, `h_r sin(phi)`, `h_phi cos(phi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialFields {
    pub e_r: f64,
    pub e_phi: f64,
    pub h_r: f64,
    pub h_phi: f64,
}

/// Power-normalized HE11 field, polarized along x at the axis.
///
/// Fields are real: the common quadrature phase of the transverse
/// components relative to the axial ones is dropped, and H is scaled by
/// the vacuum impedance so both fields share units.
#[derive(Debug, Clone)]
pub struct FundamentalMode {
    pub point: GuidedModePoint,
    pub spec: FiberSpec,
    core_index: f64,
    radius: f64,
    k: f64,
    u: f64,
    w: f64,
    hz_ratio: f64,
    scale: f64,
}

impl FundamentalMode {
    pub fn new(spec: &FiberSpec, wavelength_um: f64) -> Result<Self> {
        let point = fundamental_neff(spec, wavelength_um)?;
        let n1 = spec.core.at(wavelength_um);
        let radius = spec.diameter_um / 2.0;
        let k = 2.0 * PI / wavelength_um;
        let eq = Hybrid {
            n1,
            n2: spec.clad_index,
            radius,
            k,
        };
        let (u, w) = eq.uw(point.n_eff);
        let (jh, kh) = Hybrid::log_derivs(u, w);
        let beta = point.beta_rad_per_um;
        let hz_ratio = -beta * (1.0 / (u * u) + 1.0 / (w * w)) / (k * (jh + kh));
        let mut mode = Self {
            point,
            spec: *spec,
            core_index: n1,
            radius,
            k,
            u,
            w,
            hz_ratio,
            scale: 1.0,
        };
        let p = mode.power();
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Convergence(format!("mode power {p} not positive")));
        }
        mode.scale = 1.0 / p.sqrt();
        Ok(mode)
    }

    /// Exterior decay constant, 1/um.
    pub fn decay_constant(&self) -> f64 {
        self.w / self.radius
    }

    pub fn radius_um(&self) -> f64 {
        self.radius
    }

    pub fn radial(&self, r: f64) -> RadialFields {
        let r = r.abs().max(1e-12);
        let beta = self.point.beta_rad_per_um;
        let (k, a, b) = (self.k, 1.0, self.hz_ratio);
        let (q2, n2, f, df) = if r < self.radius {
            let kap = self.u / self.radius;
            let x = kap * r;
            let j1 = Jn(1, x);
            (kap * kap, self.core_index.powi(2), j1, kap * (Jn(0, x) - j1 / x))
        } else {
            let gam = self.w / self.radius;
            let x = gam * r;
            let s = Jn(1, self.u) / Kn(1, self.w);
            let k1 = Kn(1, x);
            (
                -gam * gam,
                self.spec.clad_index.powi(2),
                s * k1,
                s * gam * (-Kn(0, x) - k1 / x),
            )
        };
        let sc = self.scale / q2;
        RadialFields {
            e_r: sc * (beta * a * df + k / r * b * f),
            e_phi: sc * (-beta / r * a * f - k * b * df),
            h_r: sc * (beta * b * df + k * n2 / r * a * f),
            h_phi: sc * (beta / r * b * f + k * n2 * a * df),
        }
    }

    /// Transverse electric field (E_x, E_y) at a point in the fiber cross
    /// section, coordinates in microns from the axis.
    pub fn e_transverse(&self, x: f64, y: f64) -> (f64, f64) {
        let r = x.hypot(y);
        let (s, c) = if r > 0.0 { (y / r, x / r) } else { (0.0, 1.0) };
        let f = self.radial(r);
        (f.e_r * c * c - f.e_phi * s * s, (f.e_r + f.e_phi) * s * c)
    }

    /// Axial power flux, 0.5 * integral of (E x H) . z over the plane.
    pub fn power(&self) -> f64 {
        let integrand = |r: f64| {
            let f = self.radial(r);
            PI * (f.e_r * f.h_phi - f.e_phi * f.h_r) * r
        };
        let a = self.radius;
        let outer = a + 40.0 / self.decay_constant();
        0.5 * (simpson(integrand, 0.0, a, 2000) + simpson(integrand, a, outer, 4000))
    }
}

/// Composite Simpson rule with `n` (even) intervals.
pub(crate) fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sellmeier_near_1p444_at_1550() {
        assert_relative_eq!(fused_silica_index(1.55), 1.444, epsilon = 1e-3);
    }

    #[test]
    fn point_relation_exact() {
        let p = GuidedModePoint::from_n_eff(1.6, 1.2);
        assert_relative_eq!(p.beta_rad_per_um * p.wavelength_um / (2.0 * PI), 1.2, max_relative = 1e-15);
    }

    #[test]
    fn refine_finds_simple_root() {
        let r = refine_root(|x| x * x - 2.0, 0.0, 2.0).unwrap();
        assert_relative_eq!(r, 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(fundamental_neff(&FiberSpec::silica(1.0), -1.0).is_err());
        assert!(fundamental_neff(&FiberSpec::silica(0.0), 1.6).is_err());
        let bad = FiberSpec {
            core: CoreIndex::Constant(0.9),
            clad_index: 1.0,
            diameter_um: 1.0,
        };
        assert!(matches!(fundamental_neff(&bad, 1.6), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn tiny_diameter_reports_no_guided_solution() {
        let r = fundamental_neff(&FiberSpec::silica(0.02), 1.6);
        assert!(matches!(r, Err(Error::NoGuidedSolution { .. })), "{r:?}");
    }

    #[test]
    fn boundary_continuity() {
        let m = FundamentalMode::new(&FiberSpec::silica(1.0), 1.6).unwrap();
        let a = m.radius_um();
        let i = m.radial(a * (1.0 - 1e-12));
        let o = m.radial(a * (1.0 + 1e-12));
        let n1 = fused_silica_index(1.6);
        assert_relative_eq!(i.e_phi, o.e_phi, max_relative = 1e-8);
        assert_relative_eq!(i.h_phi, o.h_phi, max_relative = 1e-8);
        assert_relative_eq!(i.h_r, o.h_r, max_relative = 1e-8);
        assert_relative_eq!(n1 * n1 * i.e_r, o.e_r, max_relative = 1e-8);
    }
}
