//! Symmetric dielectric slab: TE guided modes of the membrane.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::refine_root;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabSpec {
    pub thickness_nm: f64,
    pub core_index: f64,
    /// Same index above and below (air after undercut).
    pub clad_index: f64,
}

impl SlabSpec {
    pub fn silicon_membrane(thickness_nm: f64) -> Self {
        Self {
            thickness_nm,
            core_index: 3.4,
            clad_index: 1.0,
        }
    }

    pub fn with_thickness(&self, thickness_nm: f64) -> Self {
        Self {
            thickness_nm,
            ..*self
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.thickness_nm > 0.0 && self.thickness_nm.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "slab thickness must be positive, got {}",
                self.thickness_nm
            )));
        }
        if !(self.core_index > self.clad_index && self.clad_index >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "need slab index {} > cladding index {} >= 1",
                self.core_index, self.clad_index
            )));
        }
        Ok(())
    }
}

/// Vertical mode order: 0 is even about the slab midplane, 1 is odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerticalOrder {
    #[serde(rename = "0")]
    Fundamental,
    #[serde(rename = "1")]
    First,
}

impl VerticalOrder {
    pub fn index(self) -> u8 {
        match self {
            VerticalOrder::Fundamental => 0,
            VerticalOrder::First => 1,
        }
    }
}

/// A solved TE slab mode with its normalized transverse profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabMode {
    pub order: VerticalOrder,
    pub n_eff: f64,
    /// Transverse wavenumber inside the core, 1/um.
    pub kappa: f64,
    /// Decay constant in the cladding, 1/um.
    pub gamma: f64,
    half_thickness_um: f64,
    norm: f64,
}

impl SlabMode {
    /// Field profile with unit integral of its square over all y (um),
    /// y measured from the midplane.
    pub fn profile(&self, y_um: f64) -> f64 {
        let h = self.half_thickness_um;
        let ay = y_um.abs();
        let raw = match self.order {
            VerticalOrder::Fundamental => {
                if ay <= h {
                    (self.kappa * y_um).cos()
                } else {
                    (self.kappa * h).cos() * (-self.gamma * (ay - h)).exp()
                }
            }
            VerticalOrder::First => {
                if ay <= h {
                    (self.kappa * y_um).sin()
                } else {
                    y_um.signum() * (self.kappa * h).sin() * (-self.gamma * (ay - h)).exp()
                }
            }
        };
        raw / self.norm.sqrt()
    }
}

/// Solves the symmetric-slab TE dispersion relation for the given order.
pub fn slab_mode(slab: &SlabSpec, wavelength_um: f64, order: VerticalOrder) -> Result<SlabMode> {
    slab.check()?;
    if !(wavelength_um > 0.0 && wavelength_um.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "wavelength must be positive, got {wavelength_um}"
        )));
    }
    let k = 2.0 * PI / wavelength_um;
    let h = slab.thickness_nm * 1e-3 / 2.0;
    let (n1, n2) = (slab.core_index, slab.clad_index);
    let v = k * h * (n1 * n1 - n2 * n2).sqrt();
    let tail = |u: f64| (v * v - u * u).max(0.0).sqrt();
    let u = match order {
        VerticalOrder::Fundamental => {
            let hi = v.min(PI / 2.0 - 1e-12);
            refine_root(|u| u * u.tan() - tail(u), 1e-12, hi)?
        }
        VerticalOrder::First => {
            if v <= PI / 2.0 {
                return Err(Error::BelowCutoff { order: 1, v });
            }
            let hi = v.min(PI - 1e-12);
            refine_root(|u| -u / u.tan() - tail(u), PI / 2.0 + 1e-12, hi)?
        }
    };
    let kappa = u / h;
    let n_eff = (n1 * n1 - (kappa / k).powi(2)).sqrt();
    let gamma = k * (n_eff * n_eff - n2 * n2).sqrt();
    let norm = match order {
        VerticalOrder::Fundamental => {
            h + (2.0 * u).sin() / (2.0 * kappa) + u.cos().powi(2) / gamma
        }
        VerticalOrder::First => h - (2.0 * u).sin() / (2.0 * kappa) + u.sin().powi(2) / gamma,
    };
    Ok(SlabMode {
        order,
        n_eff,
        kappa,
        gamma,
        half_thickness_um: h,
        norm,
    })
}

/// Effective index of the TE slab mode of the given vertical order.
pub fn slab_effective_index(slab: &SlabSpec, wavelength_um: f64, order: VerticalOrder) -> Result<f64> {
    slab_mode(slab, wavelength_um, order).map(|m| m.n_eff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::simpson;

    #[test]
    fn profile_is_normalized() {
        for order in [VerticalOrder::Fundamental, VerticalOrder::First] {
            let m = slab_mode(&SlabSpec::silicon_membrane(340.0), 1.3, order).unwrap();
            let total = simpson(|y| m.profile(y).powi(2), -6.0, 6.0, 20000);
            assert!((total - 1.0).abs() < 1e-6, "{order:?}: {total}");
        }
    }

    #[test]
    fn profile_continuous_at_faces() {
        let m = slab_mode(&SlabSpec::silicon_membrane(340.0), 1.6, VerticalOrder::Fundamental).unwrap();
        let h = 0.17;
        assert!((m.profile(h - 1e-12) - m.profile(h + 1e-12)).abs() < 1e-9);
    }

    #[test]
    fn first_order_cutoff_signalled() {
        let r = slab_effective_index(&SlabSpec::silicon_membrane(100.0), 1.6, VerticalOrder::First);
        assert!(matches!(r, Err(Error::BelowCutoff { order: 1, .. })));
    }
}
