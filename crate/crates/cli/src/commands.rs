use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use taperprobe::bands::{bulk_bands, fiber_crossing, thinning_shift, BandCurve, Crossing, DefectSolver, GapReport, TE1, TE2};
use taperprobe::config::RunConfig;
use taperprobe::coupling::{lateral_profile, LateralProfile};
use taperprobe::fiber::{dbeta_dd, fundamental_neff, FiberSpec, FundamentalMode};
use taperprobe::overlap::{kappa_overlap, phase_matched_profile};
use taperprobe::pipeline::{
    extract_resonances, gap_sweep, gap_sweep_csv, label_tracks, linear_grid, synthesize_map, to_bandstructure, ExtractOptions,
    LinearDetuning, MapMetadata, SynthesisOptions, TransmissionMap,
};
use taperprobe::taper::TaperProfile;

use crate::store::{single_newline, write_atomic, Cache};
use crate::{BandsArgs, CoupleArgs, Failure, FiberArgs};

/// Bulk bands reported next to the defect branches.
const BULK_BANDS: usize = 4;

pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub seed: u64,
    cache: Cache,
}

fn json<T: Serialize + ?Sized>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure::from(taperprobe::Error::from(e)))
}

impl Context {
    pub fn new(config: RunConfig, out: PathBuf, seed: u64, use_cache: bool) -> Self {
        let cache_dir = PathBuf::from(&config.io.cache_dir);
        let cache_dir = if cache_dir.is_absolute() { cache_dir } else { out.join(cache_dir) };
        Self {
            config,
            out,
            seed,
            cache: Cache::new(cache_dir, use_cache),
        }
    }

    fn write(&self, name: &str, contents: String) -> Result<(), Failure> {
        let path = self.out.join(name);
        write_atomic(&path, &single_newline(contents))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn fiber(&self, d_um: Option<f64>) -> Result<FiberSpec, Failure> {
        let spec = self.config.fiber_spec()?;
        match d_um {
            Some(d) if !(d > 0.0 && d.is_finite()) => Err(Failure::input(format!("diameter {d} um must be positive"))),
            Some(d) => Ok(spec.with_diameter(d)),
            None => Ok(spec),
        }
    }

    fn taper(&self) -> Result<TaperProfile, Failure> {
        match &self.config.fiber.taper_csv {
            Some(p) => {
                let f = std::fs::File::open(p).map_err(|e| Failure::input(format!("{p}: {e}")))?;
                TaperProfile::from_csv(f).map_err(|e| Failure::input(format!("{p}: {e}")))
            }
            None => Ok(self.config.model_taper()?),
        }
    }

    /// TE-1 and, where it exists on its k-path, TE-2.
    fn branches(&self) -> Result<(BandCurve, Option<BandCurve>), Failure> {
        let cfg = &self.config;
        let key = json(&(&cfg.slab, &cfg.lattice, cfg.te1_kpath(), cfg.te2_kpath()))?;
        let text = self.cache.get_or_compute("branches", &key, || {
            let spec = cfg.lattice_spec()?;
            let index = cfg.index_model()?;
            let solver = DefectSolver::new(&spec, None)?;
            let mut curves = vec![solver.branch(&TE1, &cfg.te1_kpath(), &index)?];
            match solver.branch(&TE2, &cfg.te2_kpath(), &index) {
                Ok(c) => curves.push(c),
                Err(taperprobe::Error::NoDefectMode(msg)) => eprintln!("note: {msg}"),
                Err(e) => return Err(e.into()),
            }
            Ok(BandCurve::to_json(&curves)?)
        })?;
        let mut curves = BandCurve::from_json(&text)?.into_iter();
        let te1 = curves.next().ok_or_else(|| Failure::input("cached bands are empty; rerun with --no-cache"))?;
        Ok((te1, curves.next()))
    }

    fn crossing(&self, te1: &BandCurve, fiber: &FiberSpec) -> Result<Crossing, Failure> {
        fiber_crossing(te1, fiber)?.ok_or_else(|| Failure {
            code: 3,
            message: format!(
                "TE-1 does not cross the d = {} um fiber on the configured k-path",
                fiber.diameter_um
            ),
        })
    }
}

pub fn fiber(ctx: &Context, args: &FiberArgs) -> Result<(), Failure> {
    let cfg = &ctx.config;
    let mut grids = cfg.grids.clone();
    if let Some(v) = args.lambda_start_nm {
        grids.fiber_lambda_start_nm = v;
    }
    if let Some(v) = args.lambda_stop_nm {
        grids.fiber_lambda_stop_nm = v;
    }
    if let Some(v) = args.lambda_step_nm {
        if !(v > 0.0) {
            return Err(Failure::input("--lambda-step-nm must be positive"));
        }
        grids.fiber_lambda_step_nm = v;
    }
    let lambdas = RunConfig {
        grids,
        ..cfg.clone()
    }
    .fiber_wavelengths_nm()?;
    let base = ctx.fiber(args.d_um)?;
    let diameters: Vec<f64> = if args.profile {
        let taper = ctx.taper()?;
        cfg.map_grid()?
            .positions_mm
            .iter()
            .map(|&lc| taper.diameter_at(lc))
            .collect::<taperprobe::Result<_>>()?
    } else {
        vec![base.diameter_um]
    };
    let key = json(&(&base, &diameters, &lambdas))?;
    let csv = ctx.cache.get_or_compute("fiber", &key, || {
        let mut out = String::from("lambda_nm,d_um,n_eff,beta_rad_per_um,dbeta_dd_omega_over_c_per_um\n");
        for &d in &diameters {
            let spec = base.with_diameter(d);
            for &l in &lambdas {
                let mode = fundamental_neff(&spec, l * 1e-3)?;
                let slope = dbeta_dd(&spec, l * 1e-3)?;
                out.push_str(&format!("{l},{d},{},{},{slope}\n", mode.n_eff, mode.beta_rad_per_um));
            }
        }
        Ok(out)
    })?;
    ctx.write("fiber_dispersion.csv", csv)
}

#[derive(Serialize)]
struct BandsReport {
    fiber_diameter_um: f64,
    crossing: Option<Crossing>,
    /// Stop band over the whole sampled path, both parities.
    bulk_gap: Option<GapReport>,
    /// Stop band at the crossing's Bloch wavenumber.
    stop_band_at_crossing: Option<GapReport>,
    crossing_in_stop_band: Option<bool>,
    thinning: Option<ThinningReport>,
}

#[derive(Serialize)]
struct ThinningReport {
    from_thickness_nm: f64,
    to_thickness_nm: f64,
    shifts: Vec<taperprobe::bands::BranchShift>,
}

pub fn bands(ctx: &Context, args: &BandsArgs) -> Result<(), Failure> {
    let cfg = &ctx.config;
    let (te1, te2) = ctx.branches()?;
    let fiber = ctx.fiber(None)?;
    let spec = cfg.lattice_spec()?;
    let index = cfg.index_model()?;
    let crossing = fiber_crossing(&te1, &fiber)?;
    let lz_nm = spec.lambda_z_nm;
    let bulk_index = index.index_at(crossing.map_or(taperprobe::bands::REFERENCE_WAVELENGTH_UM, |c| c.lambda_nm * 1e-3))?;
    let bulk = bulk_bands(&spec, &cfg.te1_kpath(), BULK_BANDS, bulk_index)?;
    let stop = crossing.and_then(|c| bulk.stop_band_at(c.beta_rad_per_um * lz_nm * 1e-3 / (2.0 * std::f64::consts::PI), lz_nm));
    let thinning = match args.thinned {
        None => None,
        Some(t) => {
            let key = json(&(&cfg.slab, &cfg.lattice, &cfg.grids.thinning_kz, t))?;
            let text = ctx.cache.get_or_compute("thinning", &key, || {
                let shifts = thinning_shift(&spec, &cfg.grids.thinning_kz, None, &index, t, &[TE1, TE2])?;
                json(&shifts)
            })?;
            let shifts = serde_json::from_str(&text).map_err(|e| Failure::from(taperprobe::Error::from(e)))?;
            Some(ThinningReport {
                from_thickness_nm: cfg.slab.thickness_nm,
                to_thickness_nm: t,
                shifts,
            })
        }
    };
    let report = BandsReport {
        fiber_diameter_um: fiber.diameter_um,
        crossing,
        bulk_gap: bulk.gap,
        stop_band_at_crossing: stop,
        crossing_in_stop_band: crossing.zip(stop).map(|(c, g)| g.contains(c.omega_norm)),
        thinning,
    };
    let mut curves = vec![te1];
    curves.extend(te2);
    ctx.write("bands.json", BandCurve::to_json(&curves)?)?;
    ctx.write("bulk_bands.json", BandCurve::to_json(&bulk.curves)?)?;
    ctx.write("band_report.json", json(&report)?)?;
    match crossing {
        Some(c) => println!("TE-1 crosses the d = {} um fiber at {:.2} nm (n_g = {:.3})", fiber.diameter_um, c.lambda_nm, c.n_g),
        None => println!("TE-1 does not cross the d = {} um fiber on the k-path", fiber.diameter_um),
    }
    Ok(())
}

#[derive(Serialize)]
struct CoupleReport {
    fiber_diameter_um: f64,
    crossing: Crossing,
    lowest_t_min: Option<f64>,
    best_gamma: Option<f64>,
    best_gamma_gap_nm: Option<f64>,
    lateral_fwhm_um: Option<f64>,
}

pub fn couple(ctx: &Context, args: &CoupleArgs) -> Result<(), Failure> {
    let cfg = &ctx.config;
    let (te1, _) = ctx.branches()?;
    let fiber = ctx.fiber(args.d_um)?;
    let crossing = ctx.crossing(&te1, &fiber)?;
    let coupler = cfg.coupler_config()?;
    let mut report = CoupleReport {
        fiber_diameter_um: fiber.diameter_um,
        crossing,
        lowest_t_min: None,
        best_gamma: None,
        best_gamma_gap_nm: None,
        lateral_fwhm_um: None,
    };
    if !args.lateral_only {
        let g = &cfg.grids;
        let detuning = LinearDetuning::from_crossing(crossing.lambda_nm, crossing.n_g, &fiber)?;
        let count = (2.0 * g.sweep_half_window_nm / g.sweep_lambda_step_nm).round() as usize + 1;
        let lambdas = linear_grid(crossing.lambda_nm - g.sweep_half_window_nm, g.sweep_lambda_step_nm, count);
        let rows = gap_sweep(&coupler, &g.sweep_gaps_nm, &detuning, &lambdas)?;
        report.lowest_t_min = rows.iter().map(|r| r.t_min).reduce(f64::min);
        if let Some(best) = rows.iter().max_by(|a, b| a.gamma.total_cmp(&b.gamma)) {
            report.best_gamma = Some(best.gamma);
            report.best_gamma_gap_nm = Some(best.gap_nm);
        }
        ctx.write("gap_sweep.csv", gap_sweep_csv(&rows))?;
    }
    if !args.sweep_only {
        let offsets = cfg.lateral_offsets_um();
        let key = json(&(&cfg.slab, &cfg.lattice, cfg.te1_kpath(), &fiber, &cfg.coupler, &offsets))?;
        let text = ctx.cache.get_or_compute("lateral", &key, || {
            let spec = cfg.lattice_spec()?;
            let solver = DefectSolver::new(&spec, None)?;
            let wg = phase_matched_profile(&solver, &TE1, &cfg.index_model()?, &fiber, &cfg.te1_kpath(), &cfg.slab_spec())?;
            let mode = FundamentalMode::new(&fiber, wg.wavelength_um)?;
            let profile = lateral_profile(&offsets, coupler.length_um, |x| kappa_overlap(&mode, &wg, coupler.gap_nm, x))?;
            json(&profile)
        })?;
        let profile: LateralProfile = serde_json::from_str(&text).map_err(|e| Failure::from(taperprobe::Error::from(e)))?;
        report.lateral_fwhm_um = profile.fwhm_um;
        let mut csv = String::from("offset_um,kappa_per_um,depth\n");
        for s in &profile.samples {
            csv.push_str(&format!("{},{},{}\n", s.offset_um, s.kappa_per_um, s.depth));
        }
        ctx.write("lateral_profile.csv", csv)?;
    }
    ctx.write("couple_report.json", json(&report)?)
}

pub fn map_synth(ctx: &Context, to_stdout: bool) -> Result<(), Failure> {
    let cfg = &ctx.config;
    let (te1, te2) = ctx.branches()?;
    let options = SynthesisOptions {
        chirp_segments: cfg.grids.chirp_segments,
        noise_rel: cfg.grids.noise_rel,
        seed: Some(ctx.seed),
        taper_id: cfg.io.taper_id.clone(),
    };
    let map = synthesize_map(
        &ctx.taper()?,
        &ctx.fiber(None)?,
        &te1,
        te2.as_ref(),
        &cfg.coupler_config()?,
        &cfg.map_grid()?,
        &options,
    )?;
    if to_stdout {
        print!("{}", single_newline(map.to_csv()));
        return Ok(());
    }
    ctx.write("map.csv", map.to_csv())?;
    ctx.write("map.json", map.metadata_json()?)
}

fn read_metadata(input: &Path, explicit: Option<&Path>, taper_id: &str) -> Result<MapMetadata, Failure> {
    let parse = |p: &Path| -> Result<MapMetadata, Failure> {
        let text = std::fs::read_to_string(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
    };
    match explicit {
        Some(p) => parse(p),
        None => {
            let sidecar = input.with_extension("json");
            if input != Path::new("-") && sidecar.is_file() {
                parse(&sidecar)
            } else {
                Ok(MapMetadata::external(taper_id))
            }
        }
    }
}

pub fn map_analyze(ctx: &Context, input: &Path, metadata: Option<&Path>) -> Result<(), Failure> {
    let cfg = &ctx.config;
    let meta = read_metadata(input, metadata, &cfg.io.taper_id)?;
    let map = if input == Path::new("-") {
        let mut text = String::new();
        std::io::stdin()
            .read_to_string(&mut text)
            .map_err(|e| Failure::input(format!("stdin: {e}")))?;
        TransmissionMap::from_csv(text.as_bytes(), meta)
    } else {
        let f = std::fs::File::open(input).map_err(|e| Failure::input(format!("{}: {e}", input.display())))?;
        TransmissionMap::from_csv(f, meta)
    }
    .map_err(|e| Failure::input(format!("{}: {e}", input.display())))?;
    let mut points = extract_resonances(&map, &ExtractOptions::default());
    let taper = ctx.taper()?;
    let fiber = ctx.fiber(None)?;
    let band_points = if points.is_empty() {
        Vec::new()
    } else {
        let (te1, te2) = ctx.branches()?;
        let mut branches = vec![&te1];
        branches.extend(te2.as_ref());
        label_tracks(&mut points, &taper, &fiber, &branches, cfg.grids.label_tolerance_nm)?;
        to_bandstructure(&points, &taper, &fiber)?
    };
    ctx.write("resonances.json", json(&points)?)?;
    ctx.write("band_points.json", json(&band_points)?)?;
    println!("{} resonances", points.len());
    Ok(())
}
