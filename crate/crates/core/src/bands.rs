//! Bulk and waveguide dispersion of the lattice under an effective-index
//! reduction of the membrane, and their labeled defect branches.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{fundamental_neff, FiberSpec};
use crate::lattice::PCWaveguideSpec;
use crate::pwe::{Parity, Supercell};
use crate::slab::{slab_effective_index, SlabSpec, VerticalOrder};

/// Speed of light, um/s.
pub const C_UM_PER_S: f64 = 2.997_924_58e14;

/// Minimum energy fraction inside the graded rows for a defect mode.
pub const LOCALIZATION_THRESHOLD: f64 = 0.5;

/// States within this relative distance of the lowest localized state are
/// treated as one hybridized defect level.
const CLUSTER_WIDTH: f64 = 0.005;

/// Largest |d omega / d beta| (normalized) accepted between neighboring
/// samples of one branch; steeper steps are a different branch.
const MAX_BRANCH_SLOPE: f64 = 1.0;

/// Effective index used for the 2D calculation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IndexModel {
    Fixed(f64),
    /// Slab-mode index of the given order, multiplied by `scale`.
    Slab {
        slab: SlabSpec,
        order: VerticalOrder,
        scale: f64,
    },
}

impl IndexModel {
    /// Slab model whose fundamental-order value at the reference wavelength
    /// equals `anchor`; with no anchor the slab value is used directly.
    pub fn anchored(slab: SlabSpec, order: VerticalOrder, anchor: Option<f64>, ref_wavelength_um: f64) -> Result<Self> {
        let scale = match anchor {
            Some(a) => {
                if !(a > 1.0) {
                    return Err(Error::InvalidInput(format!("anchor index {a} must exceed 1")));
                }
                a / slab_effective_index(&slab, ref_wavelength_um, VerticalOrder::Fundamental)?
            }
            None => 1.0,
        };
        Ok(IndexModel::Slab { slab, order, scale })
    }

    pub fn index_at(&self, wavelength_um: f64) -> Result<f64> {
        match *self {
            IndexModel::Fixed(n) => Ok(n),
            IndexModel::Slab { slab, order, scale } => Ok(scale * slab_effective_index(&slab, wavelength_um, order)?),
        }
    }

    pub fn with_thickness(&self, thickness_nm: f64) -> Self {
        match *self {
            IndexModel::Slab { slab, order, scale } => IndexModel::Slab {
                slab: slab.with_thickness(thickness_nm),
                order,
                scale,
            },
            fixed => fixed,
        }
    }

    pub fn thickness_nm(&self) -> Option<f64> {
        match self {
            IndexModel::Slab { slab, .. } => Some(slab.thickness_nm),
            IndexModel::Fixed(_) => None,
        }
    }

    pub fn with_order(&self, order: VerticalOrder) -> Self {
        match *self {
            IndexModel::Slab { slab, scale, .. } => IndexModel::Slab { slab, order, scale },
            fixed => fixed,
        }
    }

    fn dispersive(&self) -> bool {
        matches!(self, IndexModel::Slab { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSample {
    pub beta_rad_per_um: f64,
    /// Lz / lambda.
    pub omega_norm: f64,
    pub lambda_nm: f64,
    /// Undefined (null in JSON) for single-sample curves.
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub n_g: f64,
}

fn nan_as_null<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(v)
    } else {
        s.serialize_none()
    }
}

fn null_as_nan<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl BandSample {
    pub fn omega_rad_per_s(&self) -> f64 {
        2.0 * PI * C_UM_PER_S / (self.lambda_nm * 1e-3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandCurve {
    pub label: String,
    pub parity: Option<Parity>,
    pub samples: Vec<BandSample>,
}

impl BandCurve {
    /// Builds a curve from (normalized k, normalized frequency) pairs and
    /// fills in the group index by finite differences.
    pub fn from_normalized(label: &str, parity: Option<Parity>, lambda_z_nm: f64, points: &[(f64, f64)]) -> Self {
        let lz_um = lambda_z_nm * 1e-3;
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let samples = pts
            .iter()
            .map(|&(k, f)| BandSample {
                beta_rad_per_um: 2.0 * PI * k / lz_um,
                omega_norm: f,
                lambda_nm: lambda_z_nm / f,
                n_g: f64::NAN,
            })
            .collect();
        let mut curve = Self {
            label: label.to_string(),
            parity,
            samples,
        };
        curve.fill_group_index(lambda_z_nm);
        curve
    }

    /// n_g = c d beta / d omega from centered differences of the samples
    /// (one-sided at the ends).
    pub fn fill_group_index(&mut self, lambda_z_nm: f64) {
        let lz_um = lambda_z_nm * 1e-3;
        let n = self.samples.len();
        if n < 2 {
            for s in &mut self.samples {
                s.n_g = f64::NAN;
            }
            return;
        }
        let k: Vec<f64> = self.samples.iter().map(|s| s.beta_rad_per_um * lz_um / (2.0 * PI)).collect();
        let f: Vec<f64> = self.samples.iter().map(|s| s.omega_norm).collect();
        for i in 0..n {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            self.samples[i].n_g = (k[b] - k[a]) / (f[b] - f[a]);
        }
    }

    pub fn lambda_range_nm(&self) -> Option<(f64, f64)> {
        let lo = self.samples.iter().map(|s| s.lambda_nm).fold(f64::INFINITY, f64::min);
        let hi = self.samples.iter().map(|s| s.lambda_nm).fold(f64::NEG_INFINITY, f64::max);
        (lo <= hi).then_some((lo, hi))
    }

    /// Propagation constant at a wavelength by linear interpolation in
    /// frequency between samples; `None` outside the sampled range. The
    /// branch must be single valued in frequency.
    pub fn beta_at_lambda(&self, lambda_nm: f64) -> Option<f64> {
        self.interp_at_lambda(lambda_nm, |s| s.beta_rad_per_um)
    }

    pub fn group_index_at_lambda(&self, lambda_nm: f64) -> Option<f64> {
        self.interp_at_lambda(lambda_nm, |s| s.n_g)
    }

    fn interp_at_lambda<F: Fn(&BandSample) -> f64>(&self, lambda_nm: f64, field: F) -> Option<f64> {
        let w = 1.0 / lambda_nm;
        for pair in self.samples.windows(2) {
            let (w0, w1) = (1.0 / pair[0].lambda_nm, 1.0 / pair[1].lambda_nm);
            let (lo, hi) = if w0 <= w1 { (w0, w1) } else { (w1, w0) };
            if w >= lo && w <= hi && hi > lo {
                let t = (w - w0) / (w1 - w0);
                return Some(field(&pair[0]) + t * (field(&pair[1]) - field(&pair[0])));
            }
        }
        None
    }

    pub fn to_json(curves: &[BandCurve]) -> Result<String> {
        Ok(serde_json::to_string_pretty(curves)?)
    }

    pub fn from_json(text: &str) -> Result<Vec<BandCurve>> {
        let curves: Vec<BandCurve> = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        for c in &curves {
            for s in &c.samples {
                if !(s.omega_norm >= 0.0 && s.lambda_nm > 0.0 && s.beta_rad_per_um.is_finite()) {
                    return Err(Error::InvalidInput(format!("band {} has a non-physical sample", c.label)));
                }
            }
            if c.samples.windows(2).any(|w| w[1].beta_rad_per_um < w[0].beta_rad_per_um) {
                return Err(Error::InvalidInput(format!("band {} samples not ordered in beta", c.label)));
            }
        }
        Ok(curves)
    }
}

/// Stop band between the first and second bulk bands along the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub valence_top: f64,
    pub conduction_bottom: f64,
}

impl GapReport {
    pub fn contains(&self, omega_norm: f64) -> bool {
        omega_norm > self.valence_top && omega_norm < self.conduction_bottom
    }

    pub fn width(&self) -> f64 {
        self.conduction_bottom - self.valence_top
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkBands {
    pub curves: Vec<BandCurve>,
    /// `None` when bands one and two overlap along the path.
    pub gap: Option<GapReport>,
}

impl BulkBands {
    /// Stop band between bands one and two at a single normalized Bloch
    /// wavenumber, interpolated along the sampled path.
    pub fn stop_band_at(&self, kz: f64, lambda_z_nm: f64) -> Option<GapReport> {
        let [lower, upper, ..] = self.curves.as_slice() else { return None };
        let at = |c: &BandCurve| {
            let k: Vec<f64> = c
                .samples
                .iter()
                .map(|s| s.beta_rad_per_um * lambda_z_nm * 1e-3 / (2.0 * PI))
                .collect();
            let i = k.windows(2).position(|w| (w[0] - kz) * (w[1] - kz) <= 0.0)?;
            let t = if k[i + 1] == k[i] { 0.0 } else { (kz - k[i]) / (k[i + 1] - k[i]) };
            Some(c.samples[i].omega_norm + t * (c.samples[i + 1].omega_norm - c.samples[i].omega_norm))
        };
        let (lo, hi) = (at(lower)?, at(upper)?);
        (hi > lo).then_some(GapReport {
            valence_top: lo,
            conduction_bottom: hi,
        })
    }
}

/// Bands of the uniform lattice at normalized Bloch wavenumbers `kpath`
/// (units of 2 pi / Lz), for a fixed slab index.
pub fn bulk_bands(spec: &PCWaveguideSpec, kpath: &[f64], num_bands: usize, n_eff: f64) -> Result<BulkBands> {
    if kpath.is_empty() || num_bands == 0 {
        return Err(Error::InvalidInput("empty k-path or zero bands".into()));
    }
    let sc = Supercell::new(&spec.bulk())?;
    let eps = n_eff * n_eff;
    let per_k: Vec<Vec<f64>> = kpath
        .par_iter()
        .map(|&k| {
            let mut f = sc.solve(eps, k, Parity::Even, num_bands)?.freqs;
            f.extend(sc.solve(eps, k, Parity::Odd, num_bands)?.freqs);
            f.sort_by(f64::total_cmp);
            f.truncate(num_bands);
            Ok(f)
        })
        .collect::<Result<_>>()?;
    let bands = per_k.iter().map(Vec::len).min().unwrap_or(0);
    let curves: Vec<BandCurve> = (0..bands)
        .map(|b| {
            let pts: Vec<(f64, f64)> = kpath.iter().zip(&per_k).map(|(&k, f)| (k, f[b])).collect();
            BandCurve::from_normalized(&format!("bulk-{}", b + 1), None, spec.lambda_z_nm, &pts)
        })
        .collect();
    let gap = (bands >= 2).then(|| {
        let top = per_k.iter().map(|f| f[0]).fold(f64::NEG_INFINITY, f64::max);
        let bottom = per_k.iter().map(|f| f[1]).fold(f64::INFINITY, f64::min);
        GapReport {
            valence_top: top,
            conduction_bottom: bottom,
        }
    });
    Ok(BulkBands {
        curves,
        gap: gap.filter(|g| g.conduction_bottom > g.valence_top),
    })
}

/// What a defect branch is and how to find it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchRule {
    pub label: &'static str,
    pub parity: Parity,
    /// Vertical order of the effective index used for this branch.
    pub order: VerticalOrder,
    /// Require the state to sit above the bulk valence band.
    pub above_valence: bool,
    /// Expected sign of d omega / d beta.
    pub slope_sign: f64,
    /// Iterate the slab index to the level's own wavelength; otherwise the
    /// index is taken at the solver's reference wavelength.
    pub self_consistent: bool,
}

pub const TE1: BranchRule = BranchRule {
    label: "TE-1",
    parity: Parity::Even,
    order: VerticalOrder::Fundamental,
    above_valence: true,
    slope_sign: -1.0,
    self_consistent: true,
};

/// Odd-parity counterpart of TE-1.
pub const TE1_ODD: BranchRule = BranchRule {
    label: "TE-1-odd",
    parity: Parity::Odd,
    order: VerticalOrder::Fundamental,
    above_valence: true,
    slope_sign: -1.0,
    self_consistent: true,
};

/// Index-guided branch of the first-order vertical index.
pub const TE2: BranchRule = BranchRule {
    label: "TE-2",
    parity: Parity::Even,
    order: VerticalOrder::First,
    above_valence: false,
    slope_sign: 1.0,
    // The first-order index falls so fast with wavelength that iterating it
    // delocalizes the level; it is evaluated at the scan center instead.
    self_consistent: false,
};

/// A defect level at one Bloch wavenumber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectLevel {
    pub kz: f64,
    pub omega_norm: f64,
    pub localization: f64,
    pub n_eff: f64,
}

/// Solver for defect levels of one supercell, reusable across k-points and
/// index models.
pub struct DefectSolver {
    spec: PCWaveguideSpec,
    supercell: Supercell,
    bulk: Supercell,
    num_bands: usize,
    window_rows: f64,
    reference_wavelength_um: f64,
}

/// Center of the laser scan, um; where non-self-consistent indices are
/// evaluated.
pub const REFERENCE_WAVELENGTH_UM: f64 = 1.6;

impl DefectSolver {
    pub fn new(spec: &PCWaveguideSpec, num_bands: Option<usize>) -> Result<Self> {
        let supercell = Supercell::new(spec)?;
        let bulk = Supercell::new(&spec.bulk())?;
        let num_bands = num_bands.unwrap_or_else(|| supercell.default_band_count());
        Ok(Self {
            spec: spec.clone(),
            supercell,
            bulk,
            num_bands,
            window_rows: spec.defect_half_width_rows(),
            reference_wavelength_um: REFERENCE_WAVELENGTH_UM,
        })
    }

    pub fn spec(&self) -> &PCWaveguideSpec {
        &self.spec
    }

    pub fn supercell(&self) -> &Supercell {
        &self.supercell
    }

    fn valence_top(&self, eps: f64) -> Result<f64> {
        let e = self.bulk.solve(eps, 0.5, Parity::Even, 1)?.freqs[0];
        let o = self.bulk.solve(eps, 0.5, Parity::Odd, 1)?.freqs[0];
        Ok(e.min(o))
    }

    /// Defect level at fixed slab index: the localization-weighted centroid
    /// of localized states within a narrow cluster above the floor.
    /// Returns the level and the index of its dominant eigenvector.
    pub fn level_at_index(&self, rule: &BranchRule, kz: f64, n_eff: f64) -> Result<Option<(DefectLevel, crate::pwe::Modes, usize)>> {
        let eps = n_eff * n_eff;
        let floor = if rule.above_valence { self.valence_top(eps)? } else { 0.0 };
        let modes = self.supercell.solve(eps, kz, rule.parity, self.num_bands)?;
        let loc = self.supercell.localization(&modes, self.window_rows);
        let first = (0..modes.freqs.len()).find(|&i| loc[i] > LOCALIZATION_THRESHOLD && modes.freqs[i] > floor);
        let Some(first) = first else { return Ok(None) };
        let f0 = modes.freqs[first];
        let mut wsum = 0.0;
        let mut fsum = 0.0;
        let mut best = first;
        for i in first..modes.freqs.len() {
            let f = modes.freqs[i];
            if (f - f0).abs() >= CLUSTER_WIDTH * f0 {
                break;
            }
            if loc[i] > LOCALIZATION_THRESHOLD {
                wsum += loc[i];
                fsum += loc[i] * f;
                if loc[i] > loc[best] {
                    best = i;
                }
            }
        }
        let level = DefectLevel {
            kz,
            omega_norm: fsum / wsum,
            localization: loc[best],
            n_eff,
        };
        Ok(Some((level, modes, best)))
    }

    /// Defect level with the slab index evaluated self-consistently at the
    /// level's own wavelength.
    pub fn level(&self, rule: &BranchRule, kz: f64, index: &IndexModel) -> Result<Option<(DefectLevel, crate::pwe::Modes, usize)>> {
        let index = index.with_order(rule.order);
        let lz_um = self.spec.lambda_z_um();
        if !rule.self_consistent {
            let n = index.index_at(self.reference_wavelength_um)?;
            return self.level_at_index(rule, kz, n);
        }
        let mut lambda = lz_um / 0.31;
        // Secant steps on lambda -> Lz / f(lambda) - lambda once two
        // evaluations are available; plain substitution before that.
        let mut prev: Option<(f64, f64)> = None;
        for _ in 0..40 {
            let n = match index.index_at(lambda) {
                Ok(n) => n,
                Err(Error::BelowCutoff { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let Some(found) = self.level_at_index(rule, kz, n)? else { return Ok(None) };
            if !index.dispersive() {
                return Ok(Some(found));
            }
            let image = lz_um / found.0.omega_norm;
            let h = image - lambda;
            if h.abs() <= 1e-10 * lambda {
                return Ok(Some(found));
            }
            let next = match prev {
                Some((l0, h0)) if h != h0 => {
                    let step = lambda - h * (lambda - l0) / (h - h0);
                    // keep the secant step from leaving the neighborhood
                    step.clamp(lambda - 2.0 * h.abs(), lambda + 2.0 * h.abs())
                }
                _ => image,
            };
            prev = Some((lambda, h));
            lambda = next;
        }
        Err(Error::Convergence(format!(
            "{} at kz = {kz}: wavelength iteration did not settle",
            rule.label
        )))
    }

    /// Follows one level from the index model `from` to `to` by changing
    /// the slab thickness in `steps` increments, choosing at each step the
    /// eigenvector with the largest overlap with the previous one. Returns
    /// the start and end frequencies of the followed state.
    pub fn follow(&self, rule: &BranchRule, kz: f64, from: &IndexModel, to: &IndexModel, steps: usize) -> Result<Option<(f64, f64)>> {
        let Some((_, modes, best)) = self.level(rule, kz, from)? else { return Ok(None) };
        let start = modes.freqs[best];
        let (Some(t0), Some(t1)) = (from.thickness_nm(), to.thickness_nm()) else {
            return Err(Error::InvalidInput("thickness change needs slab index models".into()));
        };
        let lz_um = self.spec.lambda_z_um();
        let mut vector = modes.vectors.column(best).into_owned();
        let mut freq = start;
        for step in 1..=steps.max(1) {
            let t = t0 + (t1 - t0) * step as f64 / steps.max(1) as f64;
            let index = from.with_thickness(t).with_order(rule.order);
            let mut lambda = lz_um / freq;
            let mut picked = None;
            for _ in 0..40 {
                let at = if rule.self_consistent { lambda } else { self.reference_wavelength_um };
                let n = index.index_at(at)?;
                let m = self.supercell.solve(n * n, kz, rule.parity, self.num_bands)?;
                let j = (0..m.freqs.len())
                    .max_by(|&a, &b| {
                        let oa = m.vectors.column(a).dot(&vector).abs();
                        let ob = m.vectors.column(b).dot(&vector).abs();
                        oa.total_cmp(&ob)
                    })
                    .ok_or_else(|| Error::NoDefectMode(format!("{}: empty spectrum", rule.label)))?;
                let next = lz_um / m.freqs[j];
                let done = !rule.self_consistent || (next - lambda).abs() <= 1e-8 * lambda;
                picked = Some((m.freqs[j], m.vectors.column(j).into_owned()));
                lambda = next;
                if done {
                    break;
                }
            }
            let (f, v) = picked.expect("at least one iteration");
            freq = f;
            vector = v;
        }
        Ok(Some((start, freq)))
    }

    /// One labeled branch over a k-path: levels that are found, then the
    /// longest contiguous run with the expected slope sign.
    pub fn branch(&self, rule: &BranchRule, kpath: &[f64], index: &IndexModel) -> Result<BandCurve> {
        let levels: Vec<Option<DefectLevel>> = kpath
            .par_iter()
            .map(|&k| Ok(self.level(rule, k, index)?.map(|x| x.0)))
            .collect::<Result<_>>()?;
        let run = longest_run(&levels, rule.slope_sign);
        if run.len() < 2 {
            return Err(Error::NoDefectMode(format!(
                "{} not found on the k-path (fewer than two connected levels)",
                rule.label
            )));
        }
        let pts: Vec<(f64, f64)> = run.iter().map(|l| (l.kz, l.omega_norm)).collect();
        Ok(BandCurve::from_normalized(rule.label, Some(rule.parity), self.spec.lambda_z_nm, &pts))
    }
}

fn longest_run(levels: &[Option<DefectLevel>], sign: f64) -> Vec<DefectLevel> {
    let mut best: Vec<DefectLevel> = Vec::new();
    let mut cur: Vec<DefectLevel> = Vec::new();
    for l in levels {
        match l {
            Some(l) => {
                let joins = cur.last().is_some_and(|p: &DefectLevel| {
                    let slope = (l.omega_norm - p.omega_norm) / (l.kz - p.kz);
                    slope * sign > 0.0 && slope.abs() < MAX_BRANCH_SLOPE
                });
                if !joins {
                    if cur.len() > best.len() {
                        best = std::mem::take(&mut cur);
                    }
                    cur.clear();
                }
                cur.push(*l);
            }
            None => {
                if cur.len() > best.len() {
                    best = std::mem::take(&mut cur);
                }
                cur.clear();
            }
        }
    }
    if cur.len() > best.len() {
        best = cur;
    }
    best
}

/// Defect branches of the graded waveguide: TE-1, its odd counterpart, and
/// optionally TE-2 (from the first-order vertical index).
pub fn waveguide_bands(
    spec: &PCWaveguideSpec,
    kpath: &[f64],
    num_bands: Option<usize>,
    index: &IndexModel,
    include_te2: bool,
) -> Result<Vec<BandCurve>> {
    let solver = DefectSolver::new(spec, num_bands)?;
    let mut out = vec![solver.branch(&TE1, kpath, index)?];
    match solver.branch(&TE1_ODD, kpath, index) {
        Ok(c) => out.push(c),
        Err(Error::NoDefectMode(_)) => {}
        Err(e) => return Err(e),
    }
    if include_te2 {
        out.push(solver.branch(&TE2, kpath, index)?);
    }
    Ok(out)
}

/// Frequency shift of one branch between two slab thicknesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchShift {
    pub label: String,
    /// Mean normalized frequency shift over the common k-points.
    pub delta_omega_norm: f64,
    pub common_points: usize,
}

/// Thickness increments used when following a level through thinning.
const THINNING_STEPS: usize = 4;

/// Recomputes each branch with the slab thinned to `thickness_nm` and
/// reports the shift of each, averaged over the k-points where the branch
/// exists. Each level is followed continuously in thickness, so a state that
/// weakens below the localization threshold keeps its identity.
pub fn thinning_shift(
    spec: &PCWaveguideSpec,
    kpath: &[f64],
    num_bands: Option<usize>,
    index: &IndexModel,
    thickness_nm: f64,
    rules: &[BranchRule],
) -> Result<Vec<BranchShift>> {
    if !(thickness_nm > 0.0) {
        return Err(Error::InvalidInput(format!("thickness {thickness_nm} nm must be positive")));
    }
    let solver = DefectSolver::new(spec, num_bands)?;
    let thin = index.with_thickness(thickness_nm);
    let unchanged = index.thickness_nm().is_none_or(|t| t == thickness_nm);
    rules
        .iter()
        .map(|rule| {
            // the thinned first-order slab must still guide
            thin.with_order(rule.order).index_at(REFERENCE_WAVELENGTH_UM)?;
            let pair: Vec<Option<(f64, f64)>> = kpath
                .par_iter()
                .map(|&k| {
                    if unchanged {
                        Ok(solver.level(rule, k, index)?.map(|x| (x.0.omega_norm, x.0.omega_norm)))
                    } else {
                        solver.follow(rule, k, index, &thin, THINNING_STEPS)
                    }
                })
                .collect::<Result<_>>()?;
            let both: Vec<(f64, f64)> = pair.into_iter().flatten().collect();
            if both.is_empty() {
                return Err(Error::NoDefectMode(format!(
                    "{} not found at any k-point",
                    rule.label
                )));
            }
            let mean = both.iter().map(|(a, b)| b - a).sum::<f64>() / both.len() as f64;
            Ok(BranchShift {
                label: rule.label.to_string(),
                delta_omega_norm: mean,
                common_points: both.len(),
            })
        })
        .collect()
}

/// Where a branch meets the fiber dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub lambda_nm: f64,
    pub beta_rad_per_um: f64,
    pub omega_norm: f64,
    pub n_g: f64,
}

/// Phase-matching point between a branch and the fiber mode, by linear
/// interpolation of the mismatch between band samples.
pub fn fiber_crossing(curve: &BandCurve, fiber: &FiberSpec) -> Result<Option<Crossing>> {
    let mismatch: Vec<f64> = curve
        .samples
        .iter()
        .map(|s| Ok(s.beta_rad_per_um - fundamental_neff(fiber, s.lambda_nm * 1e-3)?.beta_rad_per_um))
        .collect::<Result<_>>()?;
    for i in 0..mismatch.len().saturating_sub(1) {
        let (a, b) = (mismatch[i], mismatch[i + 1]);
        if a == 0.0 || a.signum() != b.signum() {
            let t = if a == b { 0.0 } else { a / (a - b) };
            let (s0, s1) = (&curve.samples[i], &curve.samples[i + 1]);
            let lerp = |x: f64, y: f64| x + t * (y - x);
            let omega = lerp(s0.omega_norm, s1.omega_norm);
            let lambda_nm = s0.lambda_nm * s0.omega_norm / omega;
            return Ok(Some(Crossing {
                lambda_nm,
                beta_rad_per_um: lerp(s0.beta_rad_per_um, s1.beta_rad_per_um),
                omega_norm: omega,
                n_g: lerp(s0.n_g, s1.n_g),
            }));
        }
    }
    Ok(None)
}

/// Evenly spaced normalized k-path.
pub fn kpath(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}
