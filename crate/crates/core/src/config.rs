//! Run configuration read from TOML. Every key carries its unit in its name;
//! unknown keys are rejected and missing keys take the defaults below.

use serde::{Deserialize, Serialize};

use crate::bands::{kpath, IndexModel};
use crate::coupling::{CouplerConfig, KappaModel, LossTable};
use crate::error::{Error, Result};
use crate::fiber::{CoreIndex, FiberSpec};
use crate::lattice::{linear_grading, PCWaveguideSpec};
use crate::pipeline::{linear_grid, MapGrid};
use crate::slab::{SlabSpec, VerticalOrder};
use crate::taper::TaperProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoreIndexSetting {
    Constant(f64),
    /// Only `"fused_silica"` is accepted.
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberSection {
    pub core_index: CoreIndexSetting,
    pub clad_index: f64,
    /// Diameter used for band crossings and single-diameter commands.
    pub diameter_um: f64,
    pub taper_waist_um: f64,
    pub taper_pull_mm: f64,
    pub taper_samples: usize,
    /// Measured profile (`l_c_mm,d_um` CSV); replaces the exponential model.
    pub taper_csv: Option<String>,
}

impl Default for FiberSection {
    fn default() -> Self {
        Self {
            core_index: CoreIndexSetting::Named("fused_silica".into()),
            clad_index: 1.0,
            diameter_um: 1.5,
            taper_waist_um: 0.6,
            taper_pull_mm: 2.5,
            taper_samples: 2001,
            taper_csv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlabSection {
    pub thickness_nm: f64,
    pub core_index: f64,
    pub clad_index: f64,
    /// Effective index imposed at the anchor wavelength; the slab solution
    /// is rescaled to it. Omit to use the bare slab solution.
    pub anchor_index: Option<f64>,
    pub anchor_wavelength_um: f64,
    pub thinned_thickness_nm: f64,
}

impl Default for SlabSection {
    fn default() -> Self {
        Self {
            thickness_nm: 340.0,
            core_index: 3.4,
            clad_index: 1.0,
            anchor_index: Some(2.64),
            anchor_wavelength_um: 1.6,
            thinned_thickness_nm: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub period_axial_nm: f64,
    pub period_lateral_nm: f64,
    /// Radii as fractions of the lateral period.
    pub bulk_radius: f64,
    pub center_radius: f64,
    pub grading_rows: usize,
    pub supercell_rows: usize,
    pub plane_waves_per_cell: usize,
    pub hole_index: f64,
}

impl Default for LatticeSection {
    fn default() -> Self {
        let d = PCWaveguideSpec::default();
        Self {
            period_axial_nm: d.lambda_z_nm,
            period_lateral_nm: d.lambda_x_nm,
            bulk_radius: d.bulk_radius,
            center_radius: 0.33,
            grading_rows: 4,
            supercell_rows: d.supercell_rows,
            plane_waves_per_cell: d.plane_waves_per_cell,
            hole_index: d.hole_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplerSection {
    pub gap_nm: f64,
    pub length_um: f64,
    pub offset_um: f64,
    pub kappa0_per_um: f64,
    pub decay_nm: f64,
    /// `[gap_nm, loss]` pairs, linearly interpolated.
    pub loss_table: Vec<(f64, f64)>,
}

impl Default for CouplerSection {
    fn default() -> Self {
        let c = CouplerConfig::default();
        let (kappa0_per_um, decay_nm) = match c.kappa {
            KappaModel::Exponential { kappa0_per_um, decay_nm } => (kappa0_per_um, decay_nm),
            KappaModel::Fixed { kappa_per_um } => (kappa_per_um, f64::INFINITY),
        };
        Self {
            gap_nm: c.gap_nm,
            length_um: c.length_um,
            offset_um: c.offset_um,
            kappa0_per_um,
            decay_nm,
            loss_table: c.loss.points().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridsSection {
    pub fiber_lambda_start_nm: f64,
    pub fiber_lambda_stop_nm: f64,
    pub fiber_lambda_step_nm: f64,
    /// Bloch wavenumbers in units of 2 pi / axial period.
    pub te1_kz_start: f64,
    pub te1_kz_stop: f64,
    pub te1_kz_count: usize,
    pub te2_kz_start: f64,
    pub te2_kz_stop: f64,
    pub te2_kz_count: usize,
    pub bulk_kz_count: usize,
    pub thinning_kz: Vec<f64>,
    pub map_lambda_start_nm: f64,
    pub map_lambda_step_nm: f64,
    pub map_lambda_count: usize,
    pub map_lc_start_mm: f64,
    pub map_lc_stop_mm: f64,
    pub map_lc_count: usize,
    pub sweep_gaps_nm: Vec<f64>,
    /// Half width of the wavelength window around the resonance in sweeps.
    pub sweep_half_window_nm: f64,
    pub sweep_lambda_step_nm: f64,
    pub lateral_offset_max_um: f64,
    pub lateral_offset_count: usize,
    pub chirp_segments: usize,
    pub noise_rel: f64,
    pub label_tolerance_nm: f64,
}

impl Default for GridsSection {
    fn default() -> Self {
        Self {
            fiber_lambda_start_nm: 1500.0,
            fiber_lambda_stop_nm: 1700.0,
            fiber_lambda_step_nm: 10.0,
            te1_kz_start: 0.34,
            te1_kz_stop: 0.48,
            te1_kz_count: 15,
            te2_kz_start: 0.36,
            te2_kz_stop: 0.45,
            te2_kz_count: 10,
            bulk_kz_count: 21,
            thinning_kz: vec![0.36, 0.40, 0.44],
            map_lambda_start_nm: 1565.0,
            map_lambda_step_nm: 0.25,
            map_lambda_count: 240,
            map_lc_start_mm: 0.17,
            map_lc_stop_mm: 0.27,
            map_lc_count: 50,
            sweep_gaps_nm: (0..=12).map(|i| 200.0 + 50.0 * i as f64).collect(),
            sweep_half_window_nm: 40.0,
            sweep_lambda_step_nm: 0.05,
            lateral_offset_max_um: 3.0,
            lateral_offset_count: 61,
            chirp_segments: 64,
            noise_rel: 0.005,
            label_tolerance_nm: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub out_dir: String,
    pub cache_dir: String,
    pub taper_id: String,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            out_dir: "out".into(),
            cache_dir: ".taperprobe-cache".into(),
            taper_id: "exponential-0.6um-2.5mm".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub fiber: FiberSection,
    pub slab: SlabSection,
    pub lattice: LatticeSection,
    pub coupler: CouplerSection,
    pub grids: GridsSection,
    pub io: IoSection,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text.as_bytes()[..offset];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let start = before.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    (line, offset - start + 1)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
            Error::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(format!("config not serializable: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.fiber_spec()?;
        positive("fiber.diameter_um", self.fiber.diameter_um)?;
        positive("slab.thickness_nm", self.slab.thickness_nm)?;
        positive("slab.thinned_thickness_nm", self.slab.thinned_thickness_nm)?;
        positive("slab.anchor_wavelength_um", self.slab.anchor_wavelength_um)?;
        self.lattice_spec()?.validate()?;
        self.coupler_config()?;
        let g = &self.grids;
        positive("grids.fiber_lambda_step_nm", g.fiber_lambda_step_nm)?;
        positive("grids.map_lambda_step_nm", g.map_lambda_step_nm)?;
        positive("grids.sweep_lambda_step_nm", g.sweep_lambda_step_nm)?;
        positive("grids.sweep_half_window_nm", g.sweep_half_window_nm)?;
        positive("grids.lateral_offset_max_um", g.lateral_offset_max_um)?;
        positive("grids.label_tolerance_nm", g.label_tolerance_nm)?;
        if !(g.noise_rel >= 0.0 && g.noise_rel.is_finite()) {
            return Err(Error::InvalidInput("grids.noise_rel must be >= 0".into()));
        }
        if g.chirp_segments == 0 || g.lateral_offset_count < 3 {
            return Err(Error::InvalidInput("chirp_segments >= 1 and lateral_offset_count >= 3 required".into()));
        }
        if g.te1_kz_count < 2 || g.te2_kz_count < 2 || g.bulk_kz_count < 2 {
            return Err(Error::InvalidInput("k-point counts must be at least 2".into()));
        }
        self.map_grid()?.validate()
    }

    pub fn fiber_spec(&self) -> Result<FiberSpec> {
        let core = match &self.fiber.core_index {
            CoreIndexSetting::Constant(n) => {
                positive("fiber.core_index", *n)?;
                CoreIndex::Constant(*n)
            }
            CoreIndexSetting::Named(s) if s == "fused_silica" => CoreIndex::FusedSilica,
            CoreIndexSetting::Named(s) => {
                return Err(Error::InvalidInput(format!(
                    "fiber.core_index must be a number or \"fused_silica\", got {s:?}"
                )))
            }
        };
        positive("fiber.clad_index", self.fiber.clad_index)?;
        Ok(FiberSpec {
            core,
            clad_index: self.fiber.clad_index,
            diameter_um: self.fiber.diameter_um,
        })
    }

    /// Exponential model taper; a `taper_csv` path is resolved by the caller.
    pub fn model_taper(&self) -> Result<TaperProfile> {
        TaperProfile::exponential(self.fiber.taper_waist_um, self.fiber.taper_pull_mm, self.fiber.taper_samples)
    }

    pub fn slab_spec(&self) -> SlabSpec {
        SlabSpec {
            thickness_nm: self.slab.thickness_nm,
            core_index: self.slab.core_index,
            clad_index: self.slab.clad_index,
        }
    }

    pub fn index_model(&self) -> Result<IndexModel> {
        IndexModel::anchored(
            self.slab_spec(),
            VerticalOrder::Fundamental,
            self.slab.anchor_index,
            self.slab.anchor_wavelength_um,
        )
    }

    pub fn lattice_spec(&self) -> Result<PCWaveguideSpec> {
        let l = &self.lattice;
        if !(l.center_radius > 0.0 && l.center_radius <= l.bulk_radius) {
            return Err(Error::InvalidInput("lattice.center_radius must be in (0, bulk_radius]".into()));
        }
        Ok(PCWaveguideSpec {
            lambda_z_nm: l.period_axial_nm,
            lambda_x_nm: l.period_lateral_nm,
            bulk_radius: l.bulk_radius,
            grading: linear_grading(l.center_radius, l.bulk_radius, l.grading_rows),
            supercell_rows: l.supercell_rows,
            plane_waves_per_cell: l.plane_waves_per_cell,
            hole_index: l.hole_index,
        })
    }

    pub fn coupler_config(&self) -> Result<CouplerConfig> {
        let c = &self.coupler;
        let cfg = CouplerConfig {
            gap_nm: c.gap_nm,
            length_um: c.length_um,
            kappa: KappaModel::Exponential {
                kappa0_per_um: c.kappa0_per_um,
                decay_nm: c.decay_nm,
            },
            offset_um: c.offset_um,
            loss: LossTable::new(c.loss_table.clone())?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fiber_wavelengths_nm(&self) -> Result<Vec<f64>> {
        let g = &self.grids;
        if !(g.fiber_lambda_stop_nm >= g.fiber_lambda_start_nm) || !(g.fiber_lambda_start_nm > 0.0) {
            return Err(Error::InvalidInput(format!(
                "empty wavelength range [{}, {}] nm",
                g.fiber_lambda_start_nm, g.fiber_lambda_stop_nm
            )));
        }
        let n = ((g.fiber_lambda_stop_nm - g.fiber_lambda_start_nm) / g.fiber_lambda_step_nm + 1e-9).floor() as usize + 1;
        Ok(linear_grid(g.fiber_lambda_start_nm, g.fiber_lambda_step_nm, n))
    }

    pub fn te1_kpath(&self) -> Vec<f64> {
        kpath(self.grids.te1_kz_start, self.grids.te1_kz_stop, self.grids.te1_kz_count)
    }

    pub fn te2_kpath(&self) -> Vec<f64> {
        kpath(self.grids.te2_kz_start, self.grids.te2_kz_stop, self.grids.te2_kz_count)
    }

    pub fn map_grid(&self) -> Result<MapGrid> {
        let g = &self.grids;
        if g.map_lambda_count < 3 || g.map_lc_count < 1 {
            return Err(Error::InvalidInput("map grid needs >= 3 wavelengths and >= 1 position".into()));
        }
        let positions = if g.map_lc_count == 1 {
            vec![g.map_lc_start_mm]
        } else {
            linear_grid(
                g.map_lc_start_mm,
                (g.map_lc_stop_mm - g.map_lc_start_mm) / (g.map_lc_count - 1) as f64,
                g.map_lc_count,
            )
        };
        let grid = MapGrid {
            wavelengths_nm: linear_grid(g.map_lambda_start_nm, g.map_lambda_step_nm, g.map_lambda_count),
            positions_mm: positions,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn lateral_offsets_um(&self) -> Vec<f64> {
        let g = &self.grids;
        let n = g.lateral_offset_count;
        (0..n)
            .map(|i| -g.lateral_offset_max_um + 2.0 * g.lateral_offset_max_um * i as f64 / (n - 1) as f64)
            .collect()
    }
}
