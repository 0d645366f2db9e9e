//! Plane-wave expansion for the in-plane electric field polarization of a
//! 2D lattice, with the magnetic field as the scalar unknown.
//!
//! Lengths are normalized to the axial period, so eigenvalues are
//! (omega Lz / c)^2 and frequencies are reported as Lz / lambda. The
//! supercell is mirror symmetric about its center row, and for Bloch vectors
//! along the axis the operator splits into real blocks even and odd in x.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{slab_fraction, PCWaveguideSpec};

/// Lateral mirror parity of a supercell mode (of the magnetic field).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Block {
    mx: Vec<usize>,
    mz: Vec<i64>,
    /// Slab-fraction operator projected on the parity basis.
    slab: DMatrix<f64>,
}

/// Lowest eigenpairs of one parity block at one Bloch vector.
#[derive(Debug, Clone)]
pub struct Modes {
    pub parity: Parity,
    /// Normalized Bloch wavenumber, k Lz / (2 pi).
    pub kz: f64,
    pub eps_slab: f64,
    /// Normalized frequencies Lz / lambda, ascending.
    pub freqs: Vec<f64>,
    /// Plane-wave coefficients of the magnetic field, one column per mode.
    pub vectors: DMatrix<f64>,
    /// Largest relative eigen-residual among the returned pairs.
    pub residual: f64,
}

/// Precomputed plane-wave basis for a supercell geometry.
#[derive(Debug, Clone)]
pub struct Supercell {
    aspect: f64,
    rows: usize,
    eps_hole: f64,
    even: Block,
    odd: Block,
}

impl Supercell {
    pub fn new(spec: &PCWaveguideSpec) -> Result<Self> {
        spec.validate()?;
        let radii = spec.row_radii();
        let rows = radii.len();
        let aspect = spec.aspect();
        let nz = spec.plane_waves_per_cell as i64;
        let mz_list: Vec<i64> = (-(nz / 2)..=nz / 2).collect();
        let mx_max = (spec.plane_waves_per_cell * rows) / 2;
        let build = |parity: Parity| {
            let first = match parity {
                Parity::Even => 0,
                Parity::Odd => 1,
            };
            let mut mx = Vec::new();
            let mut mz = Vec::new();
            for a in first..=mx_max {
                for &b in &mz_list {
                    mx.push(a);
                    mz.push(b);
                }
            }
            let n = mx.len();
            let p = parity.sign();
            let weight = |m: usize| if m == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
            let slab = DMatrix::from_fn(n, n, |i, j| {
                let (a, b) = (mx[i] as i64, mx[j] as i64);
                let dz = mz[i] - mz[j];
                let v = slab_fraction(aspect, &radii, a - b, dz) + p * slab_fraction(aspect, &radii, a + b, dz);
                v * weight(mx[i]) * weight(mx[j])
            });
            Block { mx, mz, slab }
        };
        Ok(Self {
            aspect,
            rows,
            eps_hole: spec.hole_index * spec.hole_index,
            even: build(Parity::Even),
            odd: build(Parity::Odd),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    fn width(&self) -> f64 {
        self.rows as f64 * self.aspect
    }

    fn block(&self, parity: Parity) -> &Block {
        match parity {
            Parity::Even => &self.even,
            Parity::Odd => &self.odd,
        }
    }

    fn inverse_eps(&self, parity: Parity, eps_slab: f64) -> Result<DMatrix<f64>> {
        let b = self.block(parity);
        let n = b.mx.len();
        let e = DMatrix::<f64>::identity(n, n) * self.eps_hole + &b.slab * (eps_slab - self.eps_hole);
        crate::linalg::spd_inverse(e)?.ok_or_else(|| Error::Eigen {
                reason: "permittivity matrix not positive definite; a positive index profile cannot produce this, so suspect the BLAS build (try OPENBLAS_CORETYPE=Haswell)".into(),
                residual: f64::NAN,
            })
    }

    /// Default number of eigenpairs: enough to reach past the defect modes
    /// of a supercell of this width.
    pub fn default_band_count(&self) -> usize {
        2 * self.rows + 6
    }

    /// Solves one parity block at normalized Bloch wavenumber `kz` for a
    /// uniform slab permittivity, returning the lowest `count` modes.
    pub fn solve(&self, eps_slab: f64, kz: f64, parity: Parity, count: usize) -> Result<Modes> {
        if !(eps_slab >= self.eps_hole) {
            return Err(Error::InvalidInput(format!("slab permittivity {eps_slab} below hole value")));
        }
        let eta_e = self.inverse_eps(Parity::Even, eps_slab)?;
        let eta_o = self.inverse_eps(Parity::Odd, eps_slab)?;
        let (own, other) = match parity {
            Parity::Even => (&eta_e, &eta_o),
            Parity::Odd => (&eta_o, &eta_e),
        };
        let b = self.block(parity);
        let n = b.mx.len();
        let qz: Vec<f64> = b.mz.iter().map(|&m| 2.0 * PI * (kz + m as f64)).collect();
        let gx: Vec<f64> = b.mx.iter().map(|&m| 2.0 * PI * m as f64 / self.width()).collect();
        let mut m = DMatrix::from_fn(n, n, |i, j| qz[i] * qz[j] * own[(i, j)]);
        // x-derivative couples a parity block to the opposite one; the
        // even block's mx = 0 rows have no x-derivative.
        let nz = self.even.mx.iter().filter(|&&x| x == 0).count();
        match parity {
            Parity::Even => {
                for i in nz..n {
                    for j in nz..n {
                        m[(i, j)] += gx[i] * gx[j] * other[(i - nz, j - nz)];
                    }
                }
            }
            Parity::Odd => {
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] += gx[i] * gx[j] * other[(i + nz, j + nz)];
                    }
                }
            }
        }
        let count = count.min(n);
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let (values, vectors) = crate::linalg::lowest_eigenpairs(&m, count)?;
        let mut freqs = Vec::with_capacity(count);
        let mut residual: f64 = 0.0;
        for (c, &lam) in values.iter().enumerate() {
            if lam < -1e-10 * scale {
                return Err(Error::Eigen {
                    reason: format!("negative eigenvalue {lam:.3e}"),
                    residual: lam.abs() / scale,
                });
            }
            let v = vectors.column(c);
            let r = (&m * v - v * lam).norm() / scale;
            residual = residual.max(r);
            freqs.push(lam.max(0.0).sqrt() / (2.0 * PI));
        }
        if !(residual < 1e-8) {
            return Err(Error::Eigen {
                reason: "eigenpairs failed residual check".into(),
                residual,
            });
        }
        Ok(Modes {
            parity,
            kz,
            eps_slab,
            freqs,
            vectors,
            residual,
        })
    }

    /// Lateral intensity of |H|^2, summed over axial harmonics, at positions
    /// `xs` (units of the axial period, measured from the center row).
    pub fn intensity(&self, modes: &Modes, xs: &[f64]) -> DMatrix<f64> {
        let b = self.block(modes.parity);
        let w = self.width();
        let cols = modes.vectors.ncols();
        let mut out = DMatrix::zeros(xs.len(), cols);
        let mz_values: Vec<i64> = {
            let mut v = b.mz.clone();
            v.sort_unstable();
            v.dedup();
            v
        };
        let basis = |m: usize, x: f64| {
            let g = 2.0 * PI * m as f64 / w;
            match modes.parity {
                Parity::Even if m == 0 => 1.0,
                Parity::Even => std::f64::consts::SQRT_2 * (g * x).cos(),
                Parity::Odd => std::f64::consts::SQRT_2 * (g * x).sin(),
            }
        };
        for (ix, &x) in xs.iter().enumerate() {
            let phi: Vec<f64> = b.mx.iter().map(|&m| basis(m, x)).collect();
            for &mz in &mz_values {
                for c in 0..cols {
                    let mut acc = 0.0;
                    for (i, &bm) in b.mz.iter().enumerate() {
                        if bm == mz {
                            acc += phi[i] * modes.vectors[(i, c)];
                        }
                    }
                    out[(ix, c)] += acc * acc;
                }
            }
        }
        out
    }

    /// Fraction of each mode's |H|^2 lying within `half_width_rows` rows of
    /// the center.
    pub fn localization(&self, modes: &Modes, half_width_rows: f64) -> Vec<f64> {
        let half = self.width() / 2.0;
        let samples = self.rows * 8;
        let xs: Vec<f64> = (0..samples)
            .map(|i| half * i as f64 / samples as f64 + 1e-9)
            .collect();
        let inten = self.intensity(modes, &xs);
        let limit = half_width_rows * self.aspect;
        (0..inten.ncols())
            .map(|c| {
                let col = inten.column(c);
                let total: f64 = col.iter().sum();
                let inner: f64 = xs
                    .iter()
                    .zip(col.iter())
                    .filter(|(x, _)| **x <= limit)
                    .map(|(_, v)| v)
                    .sum();
                if total > 0.0 {
                    inner / total
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Axial harmonics of the mode with x-basis index `m` and parity basis
    /// layout, exposed for overlap integrals.
    pub(crate) fn basis_layout(&self, parity: Parity) -> (&[usize], &[i64]) {
        let b = self.block(parity);
        (&b.mx, &b.mz)
    }

    pub(crate) fn width_norm(&self) -> f64 {
        self.width()
    }

    pub(crate) fn inverse_eps_pub(&self, parity: Parity, eps_slab: f64) -> Result<DMatrix<f64>> {
        self.inverse_eps(parity, eps_slab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_lattice_is_exact() {
        let spec = PCWaveguideSpec {
            bulk_radius: 0.0,
            ..PCWaveguideSpec::default()
        }
        .bulk();
        let sc = Supercell::new(&spec).unwrap();
        let n: f64 = 2.5;
        let kz = 0.3;
        let mut expect = Vec::new();
        for mx in -3i64..=3 {
            for mz in -3i64..=3 {
                let gx = 2.0 * PI * mx as f64 / spec.aspect();
                let qz = 2.0 * PI * (kz + mz as f64);
                expect.push(gx.hypot(qz) / n / (2.0 * PI));
            }
        }
        expect.sort_by(f64::total_cmp);
        let mut got: Vec<f64> = Vec::new();
        for p in [Parity::Even, Parity::Odd] {
            got.extend(sc.solve(n * n, kz, p, 100).unwrap().freqs);
        }
        got.sort_by(f64::total_cmp);
        assert_eq!(got.len(), expect.len());
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() <= 1e-12 * e.max(1.0), "{g} {e}");
        }
    }

    #[test]
    fn localization_is_a_fraction() {
        let sc = Supercell::new(&PCWaveguideSpec::default()).unwrap();
        let m = sc.solve(2.64f64.powi(2), 0.4, Parity::Even, 10).unwrap();
        for l in sc.localization(&m, 3.5) {
            assert!((0.0..=1.0).contains(&l));
        }
    }
}
