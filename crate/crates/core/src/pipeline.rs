//! Transmission maps over wavelength and taper position: forward synthesis
//! from the modal dispersion, and the readout of resonance dips back into
//! band points.

use std::io::Read;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::{BandCurve, C_UM_PER_S};
use crate::coupling::{co_transmission, contra_transmission, contra_transmission_chirped, CouplerConfig};
use crate::error::{Error, Result};
use crate::fiber::{dbeta_dd, fundamental_neff, group_index, refine_root, FiberSpec};
use crate::taper::{csv_error, TaperProfile};

pub const UNASSIGNED: &str = "unassigned";

/// Header cell of the map CSV.
pub const MAP_CORNER: &str = "lc_mm\\lambda_nm";

/// Evenly spaced grid of `count` points starting at `start`.
pub fn linear_grid(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start + step * i as f64).collect()
}

/// Wavelength and position axes of a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapGrid {
    pub wavelengths_nm: Vec<f64>,
    pub positions_mm: Vec<f64>,
}

impl Default for MapGrid {
    /// 1565-1624.75 nm in 0.25 nm steps, 50 positions on the rising flank of
    /// the default taper.
    fn default() -> Self {
        Self {
            wavelengths_nm: linear_grid(1565.0, 0.25, 240),
            positions_mm: linear_grid(0.17, 0.1 / 49.0, 50),
        }
    }
}

fn check_axis(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidInput(format!("{name} grid is empty")));
    }
    if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!("{name} grid must be finite and strictly increasing")));
    }
    Ok(())
}

impl MapGrid {
    pub fn validate(&self) -> Result<()> {
        check_axis("wavelength", &self.wavelengths_nm)?;
        check_axis("position", &self.positions_mm)
    }
}

/// Wavelengths at one position where a branch had no band data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleRun {
    pub branch: String,
    pub lc_mm: f64,
    pub lambda_start_nm: f64,
    pub lambda_stop_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub gap_nm: Option<f64>,
    pub offset_um: Option<f64>,
    pub taper_id: String,
    pub normalization: String,
    #[serde(default)]
    pub noise_rel: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Cells where a branch's transfer was not applied for lack of band
    /// coverage.
    #[serde(default)]
    pub holes: Vec<HoleRun>,
}

impl MapMetadata {
    /// Metadata for externally supplied data.
    pub fn external(taper_id: &str) -> Self {
        Self {
            gap_nm: None,
            offset_um: None,
            taper_id: taper_id.to_string(),
            normalization: "as supplied".into(),
            noise_rel: 0.0,
            seed: None,
            holes: Vec::new(),
        }
    }
}

/// Transmission T(lambda, l_c): one spectrum per taper position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionMap {
    pub wavelengths_nm: Vec<f64>,
    pub positions_mm: Vec<f64>,
    /// `spectra[i][j]` is the transmission at position i, wavelength j.
    pub spectra: Vec<Vec<f64>>,
    pub metadata: MapMetadata,
}

impl TransmissionMap {
    pub fn new(wavelengths_nm: Vec<f64>, positions_mm: Vec<f64>, spectra: Vec<Vec<f64>>, metadata: MapMetadata) -> Result<Self> {
        check_axis("wavelength", &wavelengths_nm)?;
        check_axis("position", &positions_mm)?;
        if spectra.len() != positions_mm.len() || spectra.iter().any(|s| s.len() != wavelengths_nm.len()) {
            return Err(Error::InvalidInput("map values do not match the grid".into()));
        }
        if spectra.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("map contains non-finite values".into()));
        }
        Ok(Self {
            wavelengths_nm,
            positions_mm,
            spectra,
            metadata,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(MAP_CORNER);
        for w in &self.wavelengths_nm {
            out.push_str(&format!(",{w}"));
        }
        out.push('\n');
        for (p, row) in self.positions_mm.iter().zip(&self.spectra) {
            out.push_str(&p.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV layout written by [`TransmissionMap::to_csv`].
    pub fn from_csv<R: Read>(reader: R, metadata: MapMetadata) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            Some(r) => r.map_err(|e| csv_error(&e, 1))?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    column: 1,
                    message: "empty map file".into(),
                })
            }
        };
        let corner = header.get(0).unwrap_or("");
        if corner != MAP_CORNER && corner != "lc_mm\\λ_nm" {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: format!("expected corner cell `{MAP_CORNER}`"),
            });
        }
        let number = |s: &str, line: usize, column: usize| {
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                line,
                column,
                message: format!("not a finite number: {s:?}"),
            })
        };
        let wavelengths: Vec<f64> = header
            .iter()
            .enumerate()
            .skip(1)
            .map(|(c, s)| number(s, 1, c + 1))
            .collect::<Result<_>>()?;
        if wavelengths.is_empty() {
            return Err(Error::Parse {
                line: 1,
                column: 2,
                message: "no wavelength columns".into(),
            });
        }
        if let Some(c) = wavelengths.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Parse {
                line: 1,
                column: c + 3,
                message: "wavelengths must increase strictly".into(),
            });
        }
        let mut positions = Vec::new();
        let mut spectra = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| csv_error(&e, positions.len() + 2))?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(positions.len() + 2);
            if rec.len() == 1 && rec.get(0) == Some("") {
                continue;
            }
            if rec.len() != wavelengths.len() + 1 {
                return Err(Error::Parse {
                    line,
                    column: rec.len().min(wavelengths.len() + 1) + 1,
                    message: format!("expected {} fields, found {}", wavelengths.len() + 1, rec.len()),
                });
            }
            let p = number(&rec[0], line, 1)?;
            if positions.last().is_some_and(|&q| p <= q) {
                return Err(Error::Parse {
                    line,
                    column: 1,
                    message: "positions must increase strictly".into(),
                });
            }
            let row: Vec<f64> = rec
                .iter()
                .enumerate()
                .skip(1)
                .map(|(c, s)| number(s, line, c + 1))
                .collect::<Result<_>>()?;
            positions.push(p);
            spectra.push(row);
        }
        if positions.is_empty() {
            return Err(Error::Parse {
                line: 2,
                column: 1,
                message: "map has no data rows".into(),
            });
        }
        Self::new(wavelengths, positions, spectra, metadata)
    }

    pub fn metadata_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.metadata)?)
    }
}

/// Settings of the forward model that are not physical inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// Uniform sections used to integrate the detuning chirp.
    pub chirp_segments: usize,
    /// Standard deviation of additive noise as a fraction of T.
    pub noise_rel: f64,
    pub seed: Option<u64>,
    pub taper_id: String,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            chirp_segments: 64,
            noise_rel: 0.0,
            seed: None,
            taper_id: "unnamed".into(),
        }
    }
}

/// Mixes a column index into the seed so each column draws its own stream.
fn column_seed(seed: u64, column: usize) -> u64 {
    seed ^ (column as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Forward model of the fiber transmission map. TE-1 couples
/// contra-directionally (with the detuning chirp from the taper slope
/// across the interaction length), TE-2 co-directionally; the channels and
/// the scattering loss multiply.
pub fn synthesize_map(
    taper: &TaperProfile,
    fiber: &FiberSpec,
    te1: &BandCurve,
    te2: Option<&BandCurve>,
    coupler: &CouplerConfig,
    grid: &MapGrid,
    options: &SynthesisOptions,
) -> Result<TransmissionMap> {
    grid.validate()?;
    coupler.validate()?;
    if !(options.noise_rel >= 0.0 && options.noise_rel.is_finite()) {
        return Err(Error::InvalidInput("noise level must be finite and >= 0".into()));
    }
    let kappa = coupler.kappa();
    let length = coupler.length_um;
    let baseline = 1.0 - coupler.loss();
    let center_um = grid.wavelengths_nm[grid.wavelengths_nm.len() / 2] * 1e-3;
    let columns: Vec<(Vec<f64>, Vec<HoleRun>)> = grid
        .positions_mm
        .par_iter()
        .enumerate()
        .map(|(col, &lc)| {
            let d = taper.diameter_at(lc)?;
            let local = fiber.with_diameter(d);
            // detuning gradient along the interaction from the taper slope
            let k_center = 2.0 * std::f64::consts::PI / center_um;
            let dbeta = dbeta_dd(&local, center_um)? * k_center;
            let rate = 0.5 * dbeta * taper.slope_at(lc)? * 1e-3;
            let mut holes: Vec<HoleRun> = Vec::new();
            let mut note_hole = |branch: &str, lambda: f64| match holes.last_mut() {
                Some(h) if h.branch == branch && h.lambda_stop_nm < lambda && open_run(h, lambda, &grid.wavelengths_nm) => {
                    h.lambda_stop_nm = lambda
                }
                _ => holes.push(HoleRun {
                    branch: branch.to_string(),
                    lc_mm: lc,
                    lambda_start_nm: lambda,
                    lambda_stop_nm: lambda,
                }),
            };
            let mut spectrum = Vec::with_capacity(grid.wavelengths_nm.len());
            for &lambda in &grid.wavelengths_nm {
                let beta_f = fundamental_neff(&local, lambda * 1e-3)?.beta_rad_per_um;
                let t1 = match te1.beta_at_lambda(lambda) {
                    Some(b) => contra_transmission_chirped(kappa, length, 0.5 * (beta_f - b), rate, options.chirp_segments).t,
                    None => {
                        note_hole(&te1.label, lambda);
                        1.0
                    }
                };
                let t2 = match te2 {
                    Some(c) => match c.beta_at_lambda(lambda) {
                        Some(b) => co_transmission(kappa, length, 0.5 * (beta_f - b)).t,
                        None => {
                            note_hole(&c.label, lambda);
                            1.0
                        }
                    },
                    None => 1.0,
                };
                spectrum.push(baseline * t1 * t2);
            }
            if let (Some(seed), true) = (options.seed, options.noise_rel > 0.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(column_seed(seed, col));
                let unit = Normal::new(0.0, 1.0).expect("unit normal");
                for v in &mut spectrum {
                    *v = (*v + options.noise_rel * *v * unit.sample(&mut rng)).clamp(0.0, 1.0);
                }
            }
            Ok((spectrum, holes))
        })
        .collect::<Result<_>>()?;
    let mut spectra = Vec::with_capacity(columns.len());
    let mut holes = Vec::new();
    for (s, h) in columns {
        spectra.push(s);
        holes.extend(h);
    }
    let metadata = MapMetadata {
        gap_nm: Some(coupler.gap_nm),
        offset_um: Some(coupler.offset_um),
        taper_id: options.taper_id.clone(),
        normalization: "fiber transmission without the waveguide = 1; scattering loss included".into(),
        noise_rel: if options.seed.is_some() { options.noise_rel } else { 0.0 },
        seed: options.seed,
        holes,
    };
    TransmissionMap::new(grid.wavelengths_nm.clone(), grid.positions_mm.clone(), spectra, metadata)
}

/// True if `lambda` is the grid point right after the run's current end.
fn open_run(run: &HoleRun, lambda: f64, grid: &[f64]) -> bool {
    grid.iter()
        .position(|&w| w == run.lambda_stop_nm)
        .and_then(|i| grid.get(i + 1))
        .is_some_and(|&next| next == lambda)
}

/// A transmission dip read from one spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonancePoint {
    pub lc_mm: f64,
    pub lambda_min_nm: f64,
    pub t_min: f64,
    pub label: String,
    /// Full width at half depth; absent when the dip runs off the scan.
    pub fit_width_nm: Option<f64>,
    /// Continuity track this dip was assigned to.
    pub track: usize,
    /// More than one dip or track competed for this association.
    pub ambiguous: bool,
}

/// Tunables of the dip readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    /// Detection threshold below baseline in units of the noise estimate.
    pub noise_multiple: f64,
    /// Smallest detectable depth as a fraction of the baseline, which
    /// governs noise-free maps.
    pub min_depth: f64,
    /// Largest wavelength jump between neighboring columns of one track.
    pub max_jump_nm: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            noise_multiple: 3.0,
            min_depth: 1e-3,
            max_jump_nm: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dip {
    lambda_nm: f64,
    t_min: f64,
    width_nm: Option<f64>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median of the top quartile of a spectrum.
fn spectrum_baseline(t: &[f64]) -> f64 {
    let mut sorted = t.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top = sorted.len().div_ceil(4).max(1);
    median(&mut sorted[..top])
}

/// Noise standard deviation from the scatter of first differences.
fn noise_sigma(t: &[f64]) -> f64 {
    if t.len() < 3 {
        return 0.0;
    }
    let mut diffs: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    let m = median(&mut diffs);
    let mut dev: Vec<f64> = diffs.iter().map(|d| (d - m).abs()).collect();
    1.4826 * median(&mut dev) / std::f64::consts::SQRT_2
}

/// Vertex of the least-squares parabola through the points, if it opens
/// upward and lies within them.
fn parabola_vertex(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 3 {
        return None;
    }
    let x0 = xs[xs.len() / 2];
    let mut a = nalgebra::Matrix3::<f64>::zeros();
    let mut b = nalgebra::Vector3::<f64>::zeros();
    for (&x, &y) in xs.iter().zip(ys) {
        let u = x - x0;
        let row = nalgebra::Vector3::new(1.0, u, u * u);
        a += row * row.transpose();
        b += row * y;
    }
    let c = a.lu().solve(&b)?;
    if !(c[2] > 0.0) {
        return None;
    }
    let u = -c[1] / (2.0 * c[2]);
    let x = x0 + u;
    if x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    Some((x, c[0] + c[1] * u + c[2] * u * u))
}

/// Highest sample between `i` and the nearest lower sample in direction
/// `step`, with its index. The flag is false when the scan ran off the end
/// of the spectrum, where the dip may be clipped.
fn bounding_max(t: &[f64], i: usize, step: isize) -> (usize, f64, bool) {
    let mut best = (i, t[i]);
    let mut j = i as isize + step;
    while j >= 0 && (j as usize) < t.len() {
        let v = t[j as usize];
        if v < t[i] {
            return (best.0, best.1, true);
        }
        if v > best.1 {
            best = (j as usize, v);
        }
        j += step;
    }
    (best.0, best.1, false)
}

fn column_dips(lambda: &[f64], t: &[f64], opts: &ExtractOptions) -> Vec<Dip> {
    let n = t.len();
    if n < 3 {
        return Vec::new();
    }
    let base = spectrum_baseline(t);
    let margin = (opts.noise_multiple * noise_sigma(t)).max(opts.min_depth * base.abs());
    let threshold = base - margin;
    let mut dips = Vec::new();
    for low in 0..n {
        let left_lower = low == 0 || t[low] < t[low - 1];
        let right_lower = low + 1 == n || t[low] <= t[low + 1];
        if !(t[low] < threshold && left_lower && right_lower) {
            continue;
        }
        // topographic prominence separates neighbouring dips whose tails
        // never return to the baseline
        let (lb, left_max, left_closed) = bounding_max(t, low, -1);
        let (rb, right_max, right_closed) = bounding_max(t, low, 1);
        let saddle = match (left_closed, right_closed) {
            (true, true) => left_max.min(right_max),
            (true, false) => left_max,
            (false, true) => right_max,
            (false, false) => base,
        };
        let top = saddle.min(base);
        if top - t[low] < margin {
            continue;
        }
        // fit the bottom quarter of the dip around its lowest sample; wider
        // windows pick up the asymmetric shoulders of chirped lineshapes
        let quarter = t[low] + 0.25 * (top - t[low]);
        let mut lo = low;
        while lo > lb && t[lo - 1] <= quarter {
            lo -= 1;
        }
        let mut hi = low;
        while hi < rb && t[hi + 1] <= quarter {
            hi += 1;
        }
        if hi - lo < 2 {
            lo = low.saturating_sub(1);
            hi = (low + 1).min(n - 1);
        }
        let (lambda_min, t_min) = parabola_vertex(&lambda[lo..=hi], &t[lo..=hi]).unwrap_or((lambda[low], t[low]));
        let t_min = t_min.min(t[low]).max(0.0);
        let level = 0.5 * (t_min + top);
        let cross = |a: usize, b: usize| lambda[a] + (level - t[a]) * (lambda[b] - lambda[a]) / (t[b] - t[a]);
        let left = (lb + 1..=low).rev().find(|&k| t[k - 1] >= level).map(|k| cross(k - 1, k));
        let right = (low..rb).find(|&k| t[k + 1] >= level).map(|k| cross(k, k + 1));
        dips.push(Dip {
            lambda_nm: lambda_min,
            t_min,
            width_nm: left.zip(right).map(|(l, r)| r - l),
        });
    }
    dips
}

/// Detects dips in every spectrum of the map and links them across
/// positions into continuity tracks. Labels are left unassigned; see
/// [`label_tracks`].
pub fn extract_resonances(map: &TransmissionMap, opts: &ExtractOptions) -> Vec<ResonancePoint> {
    let per_column: Vec<Vec<Dip>> = map
        .spectra
        .par_iter()
        .map(|s| column_dips(&map.wavelengths_nm, s, opts))
        .collect();
    struct Track {
        lambda: f64,
        column: usize,
    }
    let mut tracks: Vec<Track> = Vec::new();
    let mut out = Vec::new();
    for (col, dips) in per_column.iter().enumerate() {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, tr) in tracks.iter().enumerate() {
            if tr.column + 1 != col {
                continue;
            }
            for (di, d) in dips.iter().enumerate() {
                let jump = (d.lambda_nm - tr.lambda).abs();
                if jump <= opts.max_jump_nm {
                    pairs.push((jump, ti, di));
                }
            }
        }
        let mut per_dip = vec![0usize; dips.len()];
        let mut per_track = vec![0usize; tracks.len()];
        for &(_, ti, di) in &pairs {
            per_dip[di] += 1;
            per_track[ti] += 1;
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut dip_track: Vec<Option<usize>> = vec![None; dips.len()];
        let mut taken = vec![false; tracks.len()];
        for &(_, ti, di) in &pairs {
            if dip_track[di].is_none() && !taken[ti] {
                dip_track[di] = Some(ti);
                taken[ti] = true;
            }
        }
        for (di, d) in dips.iter().enumerate() {
            let (ti, ambiguous) = match dip_track[di] {
                Some(ti) => (ti, per_dip[di] > 1 || per_track[ti] > 1),
                None => {
                    tracks.push(Track {
                        lambda: d.lambda_nm,
                        column: col,
                    });
                    (tracks.len() - 1, per_dip[di] > 1)
                }
            };
            tracks[ti].lambda = d.lambda_nm;
            tracks[ti].column = col;
            out.push(ResonancePoint {
                lc_mm: map.positions_mm[col],
                lambda_min_nm: d.lambda_nm,
                t_min: d.t_min,
                label: UNASSIGNED.into(),
                fit_width_nm: d.width_nm,
                track: ti,
                ambiguous,
            });
        }
    }
    out
}

/// Wavelength (nm) where `curve` phase matches the fiber of diameter
/// `d_um`, or `None` if it does not within the curve's coverage.
pub fn phase_match_wavelength(curve: &BandCurve, fiber: &FiberSpec, d_um: f64) -> Result<Option<f64>> {
    let local = fiber.with_diameter(d_um);
    let mismatch = |lambda_nm: f64| -> Option<f64> {
        let b = curve.beta_at_lambda(lambda_nm)?;
        let f = fundamental_neff(&local, lambda_nm * 1e-3).ok()?;
        Some(b - f.beta_rad_per_um)
    };
    let mut lams: Vec<f64> = curve.samples.iter().map(|s| s.lambda_nm).collect();
    lams.sort_by(f64::total_cmp);
    for w in lams.windows(2) {
        // stay just inside the sample span so interpolation is defined
        let (a, b) = (w[0] * (1.0 + 1e-12), w[1] * (1.0 - 1e-12));
        let (Some(fa), Some(fb)) = (mismatch(a), mismatch(b)) else { continue };
        if fa == 0.0 {
            return Ok(Some(a));
        }
        if fa.signum() != fb.signum() {
            let root = refine_root(|l| mismatch(l).unwrap_or(f64::NAN), a, b)?;
            return Ok(Some(root));
        }
    }
    Ok(None)
}

/// Names each track after the branch whose predicted phase-matching
/// wavelengths it follows most closely (mean deviation within
/// `tolerance_nm`). Each branch names at most one track.
pub fn label_tracks(
    points: &mut [ResonancePoint],
    taper: &TaperProfile,
    fiber: &FiberSpec,
    branches: &[&BandCurve],
    tolerance_nm: f64,
) -> Result<()> {
    let tracks: Vec<usize> = {
        let mut t: Vec<usize> = points.iter().map(|p| p.track).collect();
        t.sort_unstable();
        t.dedup();
        t
    };
    let mut predicted: Vec<Vec<Option<f64>>> = Vec::new();
    for curve in branches {
        let col: Vec<Option<f64>> = points
            .par_iter()
            .map(|p| phase_match_wavelength(curve, fiber, taper.diameter_at(p.lc_mm)?))
            .collect::<Result<_>>()?;
        predicted.push(col);
    }
    let mut scores: Vec<(f64, usize, usize)> = Vec::new();
    for (bi, pred) in predicted.iter().enumerate() {
        for &tr in &tracks {
            let devs: Vec<f64> = points
                .iter()
                .zip(pred)
                .filter(|(p, _)| p.track == tr)
                .filter_map(|(p, l)| l.map(|l| (p.lambda_min_nm - l).abs()))
                .collect();
            if devs.is_empty() {
                continue;
            }
            let mean = devs.iter().sum::<f64>() / devs.len() as f64;
            if mean <= tolerance_nm {
                scores.push((mean, bi, tr));
            }
        }
    }
    scores.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut branch_used = vec![false; branches.len()];
    let mut track_label: Vec<(usize, String)> = Vec::new();
    for (_, bi, tr) in scores {
        if branch_used[bi] || track_label.iter().any(|(t, _)| *t == tr) {
            continue;
        }
        branch_used[bi] = true;
        track_label.push((tr, branches[bi].label.clone()));
    }
    for p in points.iter_mut() {
        p.label = track_label
            .iter()
            .find(|(t, _)| *t == p.track)
            .map(|(_, l)| l.clone())
            .unwrap_or_else(|| UNASSIGNED.into());
    }
    Ok(())
}

/// A dispersion point reconstructed from a resonance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub beta_rad_per_um: f64,
    pub omega_rad_per_s: f64,
    pub lambda_nm: f64,
    pub lc_mm: f64,
    pub label: String,
    /// Index of the source resonance in the input list.
    pub source: usize,
}

/// Converts resonances into (beta, omega) using the fiber mode at the local
/// taper diameter.
pub fn to_bandstructure(points: &[ResonancePoint], taper: &TaperProfile, fiber: &FiberSpec) -> Result<Vec<BandPoint>> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let d = taper.diameter_at(p.lc_mm)?;
            let lambda_um = p.lambda_min_nm * 1e-3;
            let mode = fundamental_neff(&fiber.with_diameter(d), lambda_um)?;
            Ok(BandPoint {
                beta_rad_per_um: mode.beta_rad_per_um,
                omega_rad_per_s: 2.0 * std::f64::consts::PI * C_UM_PER_S / lambda_um,
                lambda_nm: p.lambda_min_nm,
                lc_mm: p.lc_mm,
                label: p.label.clone(),
                source: i,
            })
        })
        .collect()
}

/// Detuning linear in wavelength about the phase-matching point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearDetuning {
    pub lambda0_nm: f64,
    /// d Delta / d lambda, 1/um per nm.
    pub slope_per_um_per_nm: f64,
}

impl LinearDetuning {
    /// From the group indices of the fiber (at diameter `fiber`) and of the
    /// branch at their crossing.
    pub fn from_crossing(lambda0_nm: f64, branch_group_index: f64, fiber: &FiberSpec) -> Result<Self> {
        let lambda_um = lambda0_nm * 1e-3;
        let ng_fiber = group_index(fiber, lambda_um)?;
        // d beta / d lambda = -2 pi n_g / lambda^2 for either mode
        let slope_um = -std::f64::consts::PI * (ng_fiber - branch_group_index) / (lambda_um * lambda_um);
        Ok(Self {
            lambda0_nm,
            slope_per_um_per_nm: slope_um * 1e-3,
        })
    }

    pub fn at(&self, lambda_nm: f64) -> f64 {
        self.slope_per_um_per_nm * (lambda_nm - self.lambda0_nm)
    }
}

/// One gap of a coupling sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub gap_nm: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub gamma: f64,
    /// artanh(sqrt(1 - T_min / T_max)).
    pub kappa_l: f64,
}

/// Resonance depth, off-resonance level and ideality versus gap, from the
/// unchirped contra-directional lineshape on `wavelengths_nm`.
pub fn gap_sweep(coupler: &CouplerConfig, gaps_nm: &[f64], detuning: &LinearDetuning, wavelengths_nm: &[f64]) -> Result<Vec<GapRow>> {
    coupler.validate()?;
    check_axis("wavelength", wavelengths_nm)?;
    let (lo, hi) = (wavelengths_nm[0], wavelengths_nm[wavelengths_nm.len() - 1]);
    if !(lo <= detuning.lambda0_nm && detuning.lambda0_nm <= hi) {
        return Err(Error::InvalidInput(format!(
            "wavelength grid [{lo}, {hi}] nm does not span the resonance at {} nm",
            detuning.lambda0_nm
        )));
    }
    gaps_nm
        .iter()
        .map(|&g| {
            let c = CouplerConfig {
                gap_nm: g,
                ..coupler.clone()
            };
            c.validate()?;
            let kappa = c.kappa();
            let base = 1.0 - c.loss();
            let spectrum: Vec<f64> = wavelengths_nm
                .iter()
                .map(|&l| base * contra_transmission(kappa, c.length_um, detuning.at(l)).t)
                .collect();
            let t_min = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
            let t_max = spectrum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let ratio = if t_max > 0.0 { (t_min / t_max).clamp(0.0, 1.0) } else { 1.0 };
            Ok(GapRow {
                gap_nm: g,
                t_min,
                t_max,
                gamma: t_max - t_min,
                kappa_l: (1.0 - ratio).sqrt().atanh(),
            })
        })
        .collect()
}

pub fn gap_sweep_csv(rows: &[GapRow]) -> String {
    let mut out = String::from("gap_nm,t_min,t_max,gamma,kappa_l\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.gap_nm, r.t_min, r.t_max, r.gamma, r.kappa_l));
    }
    out
}
