//! Coupling amplitude between the taper mode and a waveguide defect mode
//! from their transverse field overlap.
//!
//! The waveguide field is the axially uniform (zeroth) harmonic of the
//! in-plane polarization of the supercell eigenmode, spread vertically over
//! the slab with the fundamental slab profile. The taper hangs above the
//! slab with its axis `gap + radius` over the top surface.

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;

use crate::bands::{fiber_crossing, BranchRule, DefectSolver, IndexModel};
use crate::error::{Error, Result};
use crate::fiber::{FiberSpec, FundamentalMode};
use crate::pwe::{Modes, Parity};
use crate::slab::{slab_mode, SlabMode, SlabSpec, VerticalOrder};

/// Quadrature points across the supercell and through the slab.
const LATERAL_POINTS: usize = 801;
const VERTICAL_POINTS: usize = 41;

/// Tolerance on the unit-power normalization of either field.
const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Lateral profile of a defect mode, ready for overlap integrals.
#[derive(Debug, Clone)]
pub struct WaveguideProfile {
    pub parity: Parity,
    pub kz: f64,
    pub wavelength_um: f64,
    pub width_um: f64,
    pub thickness_um: f64,
    /// (lateral wavenumber 1/um, coefficient) of the zeroth axial harmonic.
    terms: Vec<(f64, f64)>,
    power: f64,
    vertical: SlabMode,
}

impl WaveguideProfile {
    /// Builds the profile of eigenvector `column` of `modes`, solved on the
    /// solver's supercell.
    pub fn from_modes(solver: &DefectSolver, modes: &Modes, column: usize, slab: &SlabSpec) -> Result<Self> {
        if column >= modes.freqs.len() {
            return Err(Error::InvalidInput(format!("mode column {column} out of range")));
        }
        let spec = solver.spec();
        let sc = solver.supercell();
        let lz = spec.lambda_z_um();
        let freq = modes.freqs[column];
        if !(freq > 0.0) {
            return Err(Error::InvalidInput("zero-frequency mode has no profile".into()));
        }
        let wavelength_um = lz / freq;
        let k0 = 2.0 * PI / wavelength_um;
        let width_um = sc.width_norm() * lz;
        let (mx, mz) = sc.basis_layout(modes.parity);
        let eta = sc.inverse_eps_pub(modes.parity, modes.eps_slab)?;
        let h = modes.vectors.column(column);
        let qz: Vec<f64> = mz.iter().map(|&m| 2.0 * PI * (modes.kz + m as f64) / lz).collect();
        // D_x ~ q_z h / k0 and E_x = eta D_x in the plane-wave basis
        let d: nalgebra::DVector<f64> = nalgebra::DVector::from_iterator(h.len(), h.iter().zip(&qz).map(|(hv, q)| q * hv / k0));
        let e = &eta * &d;
        let raw_power = 0.5 * width_um * e.dot(&h);
        if !(raw_power.abs() > 0.0) {
            return Err(Error::InvalidInput("defect mode carries no power".into()));
        }
        let scale = 1.0 / raw_power.abs().sqrt();
        let terms = (0..mx.len())
            .filter(|&i| mz[i] == 0)
            .map(|i| {
                let g = 2.0 * PI * mx[i] as f64 / width_um;
                let w = if modes.parity == Parity::Even && mx[i] == 0 { 1.0 } else { SQRT_2 };
                (g, w * (d[i] - e[i]) * scale)
            })
            .collect();
        Ok(Self {
            parity: modes.parity,
            kz: modes.kz,
            wavelength_um,
            width_um,
            thickness_um: slab.thickness_nm * 1e-3,
            terms,
            power: raw_power.abs() * scale * scale,
            vertical: slab_mode(slab, wavelength_um, VerticalOrder::Fundamental)?,
        })
    }

    /// Lateral polarization profile at `x_um` from the waveguide axis.
    pub fn lateral(&self, x_um: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(g, c)| match self.parity {
                Parity::Even => c * (g * x_um).cos(),
                Parity::Odd => c * (g * x_um).sin(),
            })
            .sum()
    }

    /// Guided power per unit height after normalization.
    pub fn power(&self) -> f64 {
        self.power
    }
}

/// Profile of `rule`'s branch at the Bloch wavenumber where it phase
/// matches `fiber`, found on `kpath`.
pub fn phase_matched_profile(
    solver: &DefectSolver,
    rule: &BranchRule,
    index: &IndexModel,
    fiber: &FiberSpec,
    kpath: &[f64],
    slab: &SlabSpec,
) -> Result<WaveguideProfile> {
    let curve = solver.branch(rule, kpath, index)?;
    let crossing = fiber_crossing(&curve, fiber)?.ok_or_else(|| {
        Error::NoDefectMode(format!("{} does not cross the d = {} um fiber on the k-path", rule.label, fiber.diameter_um))
    })?;
    let kz = crossing.beta_rad_per_um * solver.spec().lambda_z_um() / (2.0 * PI);
    profile_at(solver, rule, index, kz, slab)
}

/// Profile of `rule`'s level at normalized Bloch wavenumber `kz`.
pub fn profile_at(solver: &DefectSolver, rule: &BranchRule, index: &IndexModel, kz: f64, slab: &SlabSpec) -> Result<WaveguideProfile> {
    let (_, modes, best) = solver
        .level(rule, kz, index)?
        .ok_or_else(|| Error::NoDefectMode(format!("{} has no level at kz = {kz}", rule.label)))?;
    WaveguideProfile::from_modes(solver, &modes, best, slab)
}

/// Coupling amplitude (1/um) for the taper at `gap_nm` above the slab and
/// `offset_um` off the waveguide axis. The fiber mode must be solved at the
/// waveguide mode's wavelength.
pub fn kappa_overlap(fiber: &FundamentalMode, wg: &WaveguideProfile, gap_nm: f64, offset_um: f64) -> Result<f64> {
    if !(gap_nm >= 0.0) || !offset_um.is_finite() {
        return Err(Error::InvalidInput("gap must be >= 0 and offset finite".into()));
    }
    if (fiber.power() - 1.0).abs() > NORMALIZATION_TOLERANCE || (wg.power() - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::InvalidInput("overlap fields must carry unit power".into()));
    }
    let lambda = fiber.point.wavelength_um;
    if (lambda - wg.wavelength_um).abs() > 1e-6 * lambda {
        return Err(Error::InvalidInput(format!(
            "fiber mode at {lambda} um but waveguide mode at {} um",
            wg.wavelength_um
        )));
    }
    let k0 = 2.0 * PI / lambda;
    let half_w = wg.width_um / 2.0;
    let half_t = wg.thickness_um / 2.0;
    let axis_y = half_t + gap_nm * 1e-3 + fiber.radius_um();
    let trapezoid = |n: usize, i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let dx = 2.0 * half_w / (LATERAL_POINTS - 1) as f64;
    let dy = 2.0 * half_t / (VERTICAL_POINTS - 1) as f64;
    let ys: Vec<(f64, f64)> = (0..VERTICAL_POINTS)
        .map(|j| {
            let y = -half_t + j as f64 * dy;
            (y, trapezoid(VERTICAL_POINTS, j) * dy * wg.vertical.profile(y))
        })
        .collect();
    let sum: f64 = (0..LATERAL_POINTS)
        .into_par_iter()
        .map(|i| {
            let x = -half_w + i as f64 * dx;
            let lat = wg.lateral(x) * trapezoid(LATERAL_POINTS, i) * dx;
            if lat == 0.0 {
                return 0.0;
            }
            ys.iter().map(|&(y, wy)| fiber.e_transverse(x - offset_um, y - axis_y).0 * wy).sum::<f64>() * lat
        })
        .sum();
    Ok((k0 / 4.0 * sum).abs())
}

/// Least-squares line through (gap, ln kappa): returns the decay rate
/// (1/um, positive for decaying coupling) and the RMS residual of ln kappa.
pub fn exponential_fit(gaps_nm: &[f64], values: &[f64]) -> Result<(f64, f64)> {
    if gaps_nm.len() != values.len() || gaps_nm.len() < 3 {
        return Err(Error::InvalidInput("exponential fit needs at least three matched points".into()));
    }
    if values.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidInput("exponential fit needs positive values".into()));
    }
    let n = gaps_nm.len() as f64;
    let xs: Vec<f64> = gaps_nm.iter().map(|g| g * 1e-3).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let rms = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((-slope, rms))
}
