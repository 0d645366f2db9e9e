//! Compressed square lattice of air holes with a laterally graded line
//! defect, and its Fourier coefficients.

use std::f64::consts::PI;

use nalgebra::Complex;
use puruspe::Jn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of the graded photonic-crystal waveguide supercell.
///
/// Radii are fractions of the transverse lattice constant. `grading` lists
/// the radii of the defect rows from one side to the other; rows outside it
/// carry `bulk_radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PCWaveguideSpec {
    /// Period along the waveguide axis (propagation direction), nm.
    pub lambda_z_nm: f64,
    /// Period across the waveguide, nm.
    pub lambda_x_nm: f64,
    pub bulk_radius: f64,
    pub grading: Vec<f64>,
    pub supercell_rows: usize,
    /// Plane waves per direction per unit cell.
    pub plane_waves_per_cell: usize,
    pub hole_index: f64,
}

impl Default for PCWaveguideSpec {
    fn default() -> Self {
        Self {
            lambda_z_nm: 500.0,
            lambda_x_nm: 400.0,
            bulk_radius: 0.35,
            grading: linear_grading(0.33, 0.35, 4),
            supercell_rows: 21,
            plane_waves_per_cell: 7,
            hole_index: 1.0,
        }
    }
}

/// Radii that rise linearly from `center` to `bulk` over `rows_per_side`
/// rows; only rows below the bulk value are listed.
pub fn linear_grading(center: f64, bulk: f64, rows_per_side: usize) -> Vec<f64> {
    if rows_per_side == 0 {
        return Vec::new();
    }
    let side: Vec<f64> = (0..rows_per_side)
        .map(|j| center + (bulk - center) * j as f64 / rows_per_side as f64)
        .collect();
    let mut out: Vec<f64> = side.iter().rev().copied().collect();
    out.extend_from_slice(&side[1..]);
    out
}

impl PCWaveguideSpec {
    /// Uniform lattice (no defect) in a one-row cell.
    pub fn bulk(&self) -> Self {
        Self {
            grading: Vec::new(),
            supercell_rows: 1,
            ..self.clone()
        }
    }

    pub fn lambda_z_um(&self) -> f64 {
        self.lambda_z_nm * 1e-3
    }

    /// Transverse period in units of the axial period.
    pub fn aspect(&self) -> f64 {
        self.lambda_x_nm / self.lambda_z_nm
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.lambda_z_nm > 0.0 && self.lambda_x_nm > 0.0) {
            return bad("lattice constants must be positive".into());
        }
        if self.supercell_rows == 0 || self.supercell_rows.is_multiple_of(2) {
            return bad(format!("supercell rows must be odd, got {}", self.supercell_rows));
        }
        if self.plane_waves_per_cell == 0 || self.plane_waves_per_cell.is_multiple_of(2) {
            return bad("plane waves per cell must be odd".into());
        }
        if self.grading.len().is_multiple_of(2) && !self.grading.is_empty() {
            return bad("grading must have an odd number of rows".into());
        }
        let g = &self.grading;
        if g.iter().zip(g.iter().rev()).any(|(a, b)| a != b) {
            return bad("grading must be symmetric about the center row".into());
        }
        if !g.is_empty() && self.supercell_rows < g.len() + 4 {
            return bad(format!(
                "supercell of {} rows too narrow for {} graded rows plus 4 buffer rows",
                self.supercell_rows,
                g.len()
            ));
        }
        if !(self.hole_index >= 1.0) {
            return bad("hole index must be >= 1".into());
        }
        let max_radius_um = 0.5 * self.lambda_x_nm.min(self.lambda_z_nm) * 1e-3;
        for &r in std::iter::once(&self.bulk_radius).chain(g.iter()) {
            if !(0.0..0.5).contains(&r) {
                return bad(format!("hole radius {r} must lie in [0, 0.5)"));
            }
            if r * self.lambda_x_nm * 1e-3 >= max_radius_um {
                return bad(format!("holes of radius {r} overlap"));
            }
        }
        Ok(())
    }

    /// Per-row radii across the supercell, fractions of the transverse period.
    pub fn row_radii(&self) -> Vec<f64> {
        let n = self.supercell_rows;
        let mut radii = vec![self.bulk_radius; n];
        let off = (n - self.grading.len()) / 2;
        radii[off..off + self.grading.len()].copy_from_slice(&self.grading);
        radii
    }

    /// Half-width of the graded region in rows, used as the localization
    /// window: the graded rows plus half a period of margin.
    pub fn defect_half_width_rows(&self) -> f64 {
        let graded = self
            .row_radii()
            .iter()
            .filter(|&&r| r < self.bulk_radius)
            .count();
        (graded / 2) as f64 + 0.5
    }
}

/// Fourier coefficient of the hole-free fraction of the supercell at the
/// normalized reciprocal vector (`mx` over the supercell width, `mz` over
/// the axial period). The permittivity coefficient is
/// `eps_hole * delta + (eps_slab - eps_hole) * slab_fraction`.
pub(crate) fn slab_fraction(aspect: f64, radii: &[f64], mx: i64, mz: i64) -> f64 {
    let n = radii.len();
    let width = n as f64 * aspect;
    let gx = 2.0 * PI * mx as f64 / width;
    let gz = 2.0 * PI * mz as f64;
    let g = gx.hypot(gz);
    let area = width;
    let mut out = if mx == 0 && mz == 0 { 1.0 } else { 0.0 };
    for (j, &rf) in radii.iter().enumerate() {
        if rf <= 0.0 {
            continue;
        }
        let r = rf * aspect;
        let x0 = (j as f64 - (n as f64 - 1.0) / 2.0) * aspect;
        let f = PI * r * r / area;
        let shape = if g == 0.0 {
            1.0
        } else {
            2.0 * Jn(1, g * r) / (g * r)
        };
        out -= f * shape * (gx * x0).cos();
    }
    out
}

/// Permittivity Fourier coefficient of the supercell at reciprocal vector
/// G = (2 pi mx / W, 2 pi mz / Lz), for a slab of permittivity `eps_slab`.
pub fn epsilon_fourier(spec: &PCWaveguideSpec, eps_slab: f64, mx: i64, mz: i64) -> Complex<f64> {
    let eps_hole = spec.hole_index * spec.hole_index;
    let radii = spec.row_radii();
    let n = radii.len();
    let aspect = spec.aspect();
    let width = n as f64 * aspect;
    let gx = 2.0 * PI * mx as f64 / width;
    let gz = 2.0 * PI * mz as f64;
    let g = gx.hypot(gz);
    let mut acc = Complex::new(0.0, 0.0);
    for (j, &rf) in radii.iter().enumerate() {
        if rf <= 0.0 {
            continue;
        }
        let r = rf * aspect;
        let x0 = (j as f64 - (n as f64 - 1.0) / 2.0) * aspect;
        let f = PI * r * r / width;
        let shape = if g == 0.0 { 1.0 } else { 2.0 * Jn(1, g * r) / (g * r) };
        let phase = -gx * x0;
        acc += Complex::new(phase.cos(), phase.sin()) * (f * shape);
    }
    // holes replace slab material by hole material
    let delta = if mx == 0 && mz == 0 { eps_slab } else { 0.0 };
    Complex::new(delta, 0.0) + acc * (eps_hole - eps_slab)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grading_shape() {
        let g = linear_grading(0.33, 0.35, 4);
        assert_eq!(g.len(), 7);
        assert!((g[3] - 0.33).abs() < 1e-15);
        assert!((g[0] - 0.345).abs() < 1e-12);
        PCWaveguideSpec::default().validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_geometry() {
        let base = PCWaveguideSpec::default();
        for bad in [
            PCWaveguideSpec { supercell_rows: 9, ..base.clone() },
            PCWaveguideSpec { grading: vec![0.3, 0.32, 0.31], ..base.clone() },
            PCWaveguideSpec { bulk_radius: 0.7, ..base.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn slab_fraction_matches_epsilon() {
        let spec = PCWaveguideSpec::default();
        let radii = spec.row_radii();
        let eps = 2.64f64.powi(2);
        for (mx, mz) in [(0, 0), (3, 1), (-5, 2), (7, -3)] {
            let s = slab_fraction(spec.aspect(), &radii, mx, mz);
            let e = epsilon_fourier(&spec, eps, mx, mz);
            let expect = if mx == 0 && mz == 0 { 1.0 } else { 0.0 } + (eps - 1.0) * s;
            assert!((e.re - expect).abs() < 1e-12 && e.im.abs() < 1e-12, "{mx},{mz}");
        }
    }
}
