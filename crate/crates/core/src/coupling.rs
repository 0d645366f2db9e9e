//! Two-mode coupled-mode transfer between the taper and the waveguide,
//! ideality and reflectivity metrics, and the lateral-offset response.

use nalgebra::{Complex, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power fractions left in the fiber (`t`) and transferred to the
/// waveguide mode (`c`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub t: f64,
    pub c: f64,
}

/// Below this |s^2| L^2 the segment propagator uses its Taylor series.
const SERIES_LIMIT: f64 = 1e-6;

/// cosh(sL) and sinh(sL)/s for s^2 of either sign, continued through zero.
fn hyperbolic_pair(s2: f64, length: f64) -> (f64, f64) {
    let x = s2 * length * length;
    if x.abs() < SERIES_LIMIT {
        let ch = 1.0 + x / 2.0 + x * x / 24.0;
        let sh = length * (1.0 + x / 6.0 + x * x / 120.0);
        (ch, sh)
    } else if s2 > 0.0 {
        let s = s2.sqrt();
        ((s * length).cosh(), (s * length).sinh() / s)
    } else {
        let q = (-s2).sqrt();
        ((q * length).cos(), (q * length).sin() / q)
    }
}

/// Contra-directional transfer over `length_um` at coupling `kappa` and
/// detuning `delta` (both 1/um). Lossless, so `t + c = 1`.
pub fn contra_transmission(kappa: f64, length_um: f64, delta: f64) -> Transfer {
    let (_, sh) = hyperbolic_pair(kappa * kappa - delta * delta, length_um);
    let g = (kappa * sh).powi(2);
    if !g.is_finite() {
        return Transfer { t: 0.0, c: 1.0 };
    }
    let t = 1.0 / (1.0 + g);
    Transfer { t, c: 1.0 - t }
}

/// Contra-directional transfer with a detuning that varies linearly along
/// the interaction, `delta + rate * (z - L/2)`, integrated as a product of
/// `segments` uniform sections.
pub fn contra_transmission_chirped(kappa: f64, length_um: f64, delta: f64, rate: f64, segments: usize) -> Transfer {
    if kappa == 0.0 {
        return Transfer { t: 1.0, c: 0.0 };
    }
    if rate == 0.0 || segments <= 1 {
        return contra_transmission(kappa, length_um, delta);
    }
    let dz = length_um / segments as f64;
    let i = Complex::new(0.0, 1.0);
    let mut p = Matrix2::<Complex<f64>>::identity();
    for k in 0..segments {
        let z = (k as f64 + 0.5) * dz - length_um / 2.0;
        let d = delta + rate * z;
        let (ch, sh) = hyperbolic_pair(kappa * kappa - d * d, dz);
        let seg = Matrix2::new(
            Complex::from(ch) + i * (d * sh),
            Complex::from(kappa * sh),
            Complex::from(kappa * sh),
            Complex::from(ch) - i * (d * sh),
        );
        p = seg * p;
    }
    let p22 = p[(1, 1)].norm_sqr();
    if !(p22.is_finite() && p22 > 0.0) {
        return Transfer { t: 0.0, c: 1.0 };
    }
    let t = 1.0 / p22;
    Transfer { t, c: 1.0 - t }
}

/// Co-directional transfer over `length_um`.
pub fn co_transmission(kappa: f64, length_um: f64, delta: f64) -> Transfer {
    let w2 = kappa * kappa + delta * delta;
    if kappa == 0.0 || w2 == 0.0 {
        return Transfer { t: 1.0, c: 0.0 };
    }
    let c = kappa * kappa / w2 * (length_um * w2.sqrt()).sin().powi(2);
    Transfer { t: 1.0 - c, c }
}

/// Ideality from the resonant dip: `t_max - t_min`.
pub fn ideality_from_transmission(t_min: f64, t_max: f64) -> Result<f64> {
    if !(0.0 <= t_min && t_min <= t_max && t_max <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "need 0 <= T_min <= T_max <= 1, got T_min = {t_min}, T_max = {t_max}"
        )));
    }
    Ok(t_max - t_min)
}

/// Ideality estimated from the peak reflected power and the modal end
/// reflectivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionIdeality {
    pub gamma: f64,
    /// Set when the estimate exceeds 1, which the two-mode model cannot
    /// produce; the value is still reported unclamped.
    pub inconsistent: bool,
}

pub fn ideality_from_reflection(r_max: f64, r2: f64) -> Result<ReflectionIdeality> {
    if !(r2 > 0.0 && r2 <= 1.0) {
        return Err(Error::InvalidInput(format!("end reflectivity r^2 = {r2} must lie in (0, 1]")));
    }
    if !(0.0..=1.0).contains(&r_max) {
        return Err(Error::InvalidInput(format!("R_max = {r_max} must lie in [0, 1]")));
    }
    let gamma = (r_max / r2).sqrt();
    Ok(ReflectionIdeality {
        gamma,
        inconsistent: gamma > 1.0,
    })
}

/// Transmission of a lossless symmetric Fabry-Perot cavity with mirror
/// power reflectivity `r2` at round-trip half-phase `phase`.
pub fn airy_transmission(r2: f64, phase: f64) -> f64 {
    let a = (1.0 - r2).powi(2);
    a / (a + 4.0 * r2 * phase.sin().powi(2))
}

/// Airy spectrum of a cavity with group optical length `optical_length_um`
/// (group index times length) sampled at `wavelengths_nm`.
pub fn airy_spectrum(r2: f64, optical_length_um: f64, wavelengths_nm: &[f64]) -> Vec<f64> {
    wavelengths_nm
        .iter()
        .map(|&l| airy_transmission(r2, 2.0 * std::f64::consts::PI * optical_length_um / (l * 1e-3)))
        .collect()
}

/// Relative peak-to-peak variation below which a spectrum counts as flat.
const FLAT_SPECTRUM: f64 = 1e-9;

/// Mirror reflectivity from the fringe contrast of a transmission spectrum.
///
/// Extrema are located on the samples and refined by a three-point parabola;
/// the mean maximum and mean minimum give the contrast, which for the Airy
/// function equals 2 r^2 / (1 + r^4) exactly.
pub fn fp_reflectivity(spectrum: &[f64]) -> Result<f64> {
    if spectrum.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("spectrum contains non-finite samples".into()));
    }
    let hi = spectrum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
    if spectrum.len() >= 3 && hi - lo <= FLAT_SPECTRUM * hi.abs().max(f64::MIN_POSITIVE) {
        return Ok(0.0);
    }
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    for i in 1..spectrum.len().saturating_sub(1) {
        let (a, b, c) = (spectrum[i - 1], spectrum[i], spectrum[i + 1]);
        let peak = b > a && b >= c;
        let trough = b < a && b <= c;
        if !(peak || trough) {
            continue;
        }
        // vertex of the parabola through the three samples
        let curv = a - 2.0 * b + c;
        let v = if curv != 0.0 { b - (c - a).powi(2) / (8.0 * curv) } else { b };
        if peak {
            maxima.push(v);
        } else {
            minima.push(v);
        }
    }
    let found = maxima.len() + minima.len();
    if found < 3 || maxima.is_empty() || minima.is_empty() {
        return Err(Error::InsufficientFringes { found });
    }
    let t_max = maxima.iter().sum::<f64>() / maxima.len() as f64;
    let t_min = minima.iter().sum::<f64>() / minima.len() as f64;
    let contrast = (t_max - t_min) / (t_max + t_min);
    if !(contrast <= 1.0) {
        return Err(Error::NonPhysicalContrast(contrast));
    }
    if contrast <= 0.0 {
        return Ok(0.0);
    }
    // smaller root of contrast * R^2 - 2 R + contrast = 0
    Ok((1.0 - (1.0 - contrast * contrast).sqrt()) / contrast)
}

/// Wavelength-independent scattering loss versus gap, piecewise linear in
/// the gap and constant beyond the end points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct LossTable {
    points: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for LossTable {
    type Error = Error;
    fn try_from(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<LossTable> for Vec<(f64, f64)> {
    fn from(t: LossTable) -> Self {
        t.points
    }
}

impl LossTable {
    /// `points` are (gap nm, power loss fraction) with strictly increasing gaps.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("loss table needs at least one point".into()));
        }
        if points.iter().any(|&(g, l)| !g.is_finite() || !(0.0..1.0).contains(&l)) {
            return Err(Error::InvalidInput("loss values must lie in [0, 1) at finite gaps".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidInput("loss table gaps must increase strictly".into()));
        }
        Ok(Self { points })
    }

    /// No scattering loss.
    pub fn lossless() -> Self {
        Self { points: vec![(0.0, 0.0)] }
    }

    /// Calibrated so the ideality of the gap sweep peaks inside the swept
    /// range with the default coupling law.
    pub fn gap_sweep_default() -> Self {
        Self {
            points: vec![(200.0, 0.06), (250.0, 0.04), (300.0, 0.02), (400.0, 0.015), (700.0, 0.01), (2000.0, 0.0)],
        }
    }

    /// Loss quoted for the d = 1.0 um taper: 10% at small gaps, 4% at 700 nm.
    pub fn thin_taper() -> Self {
        Self {
            points: vec![(400.0, 0.10), (700.0, 0.04), (2000.0, 0.0)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn loss_at(&self, gap_nm: f64) -> f64 {
        let p = &self.points;
        if gap_nm <= p[0].0 {
            return p[0].1;
        }
        for w in p.windows(2) {
            let ((g0, l0), (g1, l1)) = (w[0], w[1]);
            if gap_nm <= g1 {
                return l0 + (l1 - l0) * (gap_nm - g0) / (g1 - g0);
            }
        }
        p[p.len() - 1].1
    }
}

/// Coupling amplitude as a function of gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KappaModel {
    /// `kappa0_per_um * exp(-g / decay_nm)`.
    Exponential { kappa0_per_um: f64, decay_nm: f64 },
    /// Gap-independent value.
    Fixed { kappa_per_um: f64 },
}

impl KappaModel {
    pub fn kappa_at(&self, gap_nm: f64) -> f64 {
        match *self {
            KappaModel::Exponential { kappa0_per_um, decay_nm } => kappa0_per_um * (-gap_nm / decay_nm).exp(),
            KappaModel::Fixed { kappa_per_um } => kappa_per_um,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            KappaModel::Exponential { kappa0_per_um, decay_nm } => kappa0_per_um >= 0.0 && decay_nm > 0.0,
            KappaModel::Fixed { kappa_per_um } => kappa_per_um >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("coupling amplitude must be >= 0 with a positive decay length".into()))
        }
    }
}

/// Geometry and coupling law of the taper-waveguide junction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplerConfig {
    pub gap_nm: f64,
    /// Effective interaction length, um.
    pub length_um: f64,
    pub kappa: KappaModel,
    /// Lateral offset of the taper from the waveguide axis, um.
    pub offset_um: f64,
    pub loss: LossTable,
}

impl Default for CouplerConfig {
    fn default() -> Self {
        Self {
            gap_nm: 400.0,
            length_um: 60.0,
            kappa: KappaModel::Exponential {
                kappa0_per_um: 0.12,
                decay_nm: 290.0,
            },
            offset_um: 0.0,
            loss: LossTable::gap_sweep_default(),
        }
    }
}

impl CouplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap_nm >= 0.0) {
            return Err(Error::InvalidInput(format!("gap {} nm must be >= 0", self.gap_nm)));
        }
        if !(self.length_um > 0.0) {
            return Err(Error::InvalidInput(format!("interaction length {} um must be positive", self.length_um)));
        }
        if !self.offset_um.is_finite() {
            return Err(Error::InvalidInput("lateral offset must be finite".into()));
        }
        self.kappa.validate()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa.kappa_at(self.gap_nm)
    }

    pub fn loss(&self) -> f64 {
        self.loss.loss_at(self.gap_nm)
    }
}

/// Summary metrics of one coupling measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingMetrics {
    pub t_min: f64,
    pub t_max: f64,
    pub gamma: f64,
    pub r_max: Option<f64>,
    pub r2: Option<f64>,
}

impl CouplingMetrics {
    pub fn from_transmission(t_min: f64, t_max: f64) -> Result<Self> {
        Ok(Self {
            t_min,
            t_max,
            gamma: ideality_from_transmission(t_min, t_max)?,
            r_max: None,
            r2: None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One offset of a lateral scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LateralSample {
    pub offset_um: f64,
    pub kappa_per_um: f64,
    /// 1 - T_min = tanh^2(kappa L).
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateralProfile {
    pub samples: Vec<LateralSample>,
    pub fwhm_um: Option<f64>,
}

/// Resonance depth versus lateral offset for a coupling amplitude
/// `kappa_of_offset`. Offsets must be symmetric about zero.
pub fn lateral_profile<F>(offsets_um: &[f64], length_um: f64, kappa_of_offset: F) -> Result<LateralProfile>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    use rayon::prelude::*;
    if offsets_um.len() < 3 {
        return Err(Error::InvalidInput("lateral sweep needs at least three offsets".into()));
    }
    if offsets_um.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("lateral offsets must increase strictly".into()));
    }
    let n = offsets_um.len();
    let symmetric = (0..n).all(|i| (offsets_um[i] + offsets_um[n - 1 - i]).abs() <= 1e-9 * offsets_um[n - 1].abs().max(1.0));
    if !symmetric {
        return Err(Error::InvalidInput("lateral offsets must be symmetric about zero".into()));
    }
    let samples: Vec<LateralSample> = offsets_um
        .par_iter()
        .map(|&x| {
            let kappa = kappa_of_offset(x)?;
            Ok(LateralSample {
                offset_um: x,
                kappa_per_um: kappa,
                depth: contra_transmission(kappa, length_um, 0.0).c,
            })
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = samples.iter().map(|s| s.offset_um).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.depth).collect();
    Ok(LateralProfile {
        fwhm_um: fwhm(&xs, &ys),
        samples,
    })
}

/// Full width at half maximum of a single-peaked profile, by linear
/// interpolation between samples. `None` if either half-maximum crossing
/// falls outside the samples.
pub fn fwhm(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (peak, &top) = ys.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if !(top > 0.0) {
        return None;
    }
    let half = top / 2.0;
    let cross = |i: usize, j: usize| xs[i] + (half - ys[i]) * (xs[j] - xs[i]) / (ys[j] - ys[i]);
    let left = (1..=peak).rev().find(|&i| ys[i - 1] < half).map(|i| cross(i - 1, i))?;
    let right = (peak..ys.len() - 1).find(|&i| ys[i + 1] < half).map(|i| cross(i, i + 1))?;
    Some(right - left)
}

/// `x,value` CSV with a one-line header.
pub fn xy_csv(header: (&str, &str), rows: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut out = format!("{},{}\n", header.0, header.1);
    for (x, y) in rows {
        out.push_str(&format!("{x},{y}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resonant_contra_is_hyperbolic() {
        let t = contra_transmission(0.05, 60.0, 0.0);
        assert!((t.t - 1.0 / 3.0f64.cosh().powi(2)).abs() < 1e-12);
        assert!((t.c - 3.0f64.tanh().powi(2)).abs() < 1e-12);
        let z = contra_transmission(0.0, 60.0, 0.0);
        assert_eq!((z.t, z.c), (1.0, 0.0));
    }

    #[test]
    fn contra_continuous_through_band_edge() {
        let k = 0.05;
        let a = contra_transmission(k, 60.0, k * (1.0 - 1e-9));
        let b = contra_transmission(k, 60.0, k);
        let c = contra_transmission(k, 60.0, k * (1.0 + 1e-9));
        assert!((a.t - b.t).abs() < 1e-8 && (c.t - b.t).abs() < 1e-8);
        // at |delta| = kappa the transfer is (kappa L)^2 / (1 + (kappa L)^2)
        assert!((b.c - 9.0 / 10.0).abs() < 1e-9);
    }

    #[test]
    fn unchirped_segments_match_uniform() {
        for d in [0.0, 0.02, 0.07] {
            let u = contra_transmission(0.04, 60.0, d);
            let s = contra_transmission_chirped(0.04, 60.0, d, 1e-12, 64);
            assert!((u.t - s.t).abs() < 1e-9, "{d}: {} {}", u.t, s.t);
        }
    }

    #[test]
    fn co_full_transfer() {
        let k = 0.02;
        let t = co_transmission(k, std::f64::consts::FRAC_PI_2 / k, 0.0);
        assert!(t.t.abs() < 1e-15 && (t.c - 1.0).abs() < 1e-15);
        assert_eq!(co_transmission(0.0, 10.0, 0.3).t, 1.0);
    }

    #[test]
    fn ideality_examples() {
        assert!((ideality_from_transmission(0.004, 0.96).unwrap() - 0.956).abs() < 1e-12);
        assert_eq!(ideality_from_transmission(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(ideality_from_transmission(0.0, 1.0).unwrap(), 1.0);
        assert!(ideality_from_transmission(0.5, 0.4).is_err());
        let r = ideality_from_reflection(0.15, 0.20).unwrap();
        assert!((r.gamma - 0.866).abs() < 1e-3 && !r.inconsistent);
        let r = ideality_from_reflection(0.15, 0.10).unwrap();
        assert!(r.gamma > 1.0 && r.inconsistent);
        assert_eq!(ideality_from_reflection(0.2, 0.2).unwrap().gamma, 1.0);
        assert!(ideality_from_reflection(0.1, 0.0).is_err());
    }

    #[test]
    fn reflectivity_of_flat_and_short_spectra() {
        assert_eq!(fp_reflectivity(&[0.9; 50]).unwrap(), 0.0);
        let one_fringe: Vec<f64> = (0..20).map(|i| (i as f64 * 0.1).sin()).collect();
        assert!(matches!(fp_reflectivity(&one_fringe), Err(Error::InsufficientFringes { .. })));
    }

    #[test]
    fn reflectivity_inverts_airy() {
        let grid: Vec<f64> = (0..2001).map(|i| 1560.0 + 0.05 * i as f64).collect();
        for r2 in [0.05, 0.1, 0.15, 0.2, 0.3] {
            for length in [80.0, 150.0] {
                let got = fp_reflectivity(&airy_spectrum(r2, length, &grid)).unwrap();
                assert!((got - r2).abs() < 1e-3, "{r2} {length} {got}");
            }
        }
    }

    #[test]
    fn loss_table_interpolates_and_clamps() {
        let t = LossTable::thin_taper();
        assert_eq!(t.loss_at(100.0), 0.10);
        assert!((t.loss_at(550.0) - 0.07).abs() < 1e-12);
        assert_eq!(t.loss_at(5000.0), 0.0);
        assert!(LossTable::new(vec![(1.0, 0.1), (1.0, 0.2)]).is_err());
    }

    #[test]
    fn fwhm_of_a_triangle() {
        let xs: Vec<f64> = (-10..=10).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (1.0 - x.abs()).max(0.0)).collect();
        assert!((fwhm(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
    }
}
