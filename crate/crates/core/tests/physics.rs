use std::sync::OnceLock;

use taperprobe::bands::{thinning_shift, BandCurve, DefectSolver, IndexModel, TE1, TE1_ODD};
use taperprobe::config::RunConfig;
use taperprobe::coupling::CouplerConfig;
use taperprobe::fiber::{dbeta_dd, FiberSpec, FundamentalMode};
use taperprobe::lattice::PCWaveguideSpec;
use taperprobe::overlap::{kappa_overlap, phase_matched_profile};
use taperprobe::pipeline::{
    extract_resonances, label_tracks, linear_grid, synthesize_map, to_bandstructure, ExtractOptions, MapGrid, SynthesisOptions,
};
use taperprobe::pwe::{Parity, Supercell};

struct Setup {
    config: RunConfig,
    index: IndexModel,
    solver: DefectSolver,
    te1: BandCurve,
}

fn setup() -> &'static Setup {
    static SETUP: OnceLock<Setup> = OnceLock::new();
    SETUP.get_or_init(|| {
        let config = RunConfig::default();
        let index = config.index_model().unwrap();
        let solver = DefectSolver::new(&config.lattice_spec().unwrap(), None).unwrap();
        let te1 = solver.branch(&TE1, &config.te1_kpath(), &index).unwrap();
        Setup {
            config,
            index,
            solver,
            te1,
        }
    })
}

fn te1_level(spec: &PCWaveguideSpec, kz: f64) -> f64 {
    let solver = DefectSolver::new(spec, None).unwrap();
    solver.level_at_index(&TE1, kz, 2.64).unwrap().expect("TE-1 level").0.omega_norm
}

#[test]
fn thin_tapers_are_several_times_more_diameter_sensitive() {
    let thin = dbeta_dd(&FiberSpec::silica(1.0), 1.6).unwrap();
    let thick = dbeta_dd(&FiberSpec::silica(1.9), 1.6).unwrap();
    let ratio = thin / thick;
    assert!((3.0..=6.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn fiber_mode_has_unit_power_and_an_evanescent_tail() {
    for d in [0.8, 1.5, 3.0] {
        let mode = FundamentalMode::new(&FiberSpec::silica(d), 1.6).unwrap();
        assert!((mode.power() - 1.0).abs() < 1e-6);
        let a = mode.radius_um();
        let edge = mode.e_transverse(a * 1.01, 0.0).0.abs();
        let far = mode.e_transverse(a + 3.0 / mode.decay_constant(), 0.0).0.abs();
        assert!(far < 0.1 * edge, "d {d}: {far} vs {edge}");
    }
    // thinner tapers push more of the field outside
    let thin = FundamentalMode::new(&FiberSpec::silica(0.8), 1.6).unwrap();
    let thick = FundamentalMode::new(&FiberSpec::silica(3.0), 1.6).unwrap();
    assert!(thin.decay_constant() < thick.decay_constant());
}

#[test]
fn supercell_spectrum_is_even_in_the_bloch_wavenumber() {
    let sc = Supercell::new(&PCWaveguideSpec::default()).unwrap();
    for parity in [Parity::Even, Parity::Odd] {
        let a = sc.solve(2.64f64.powi(2), 0.37, parity, 12).unwrap().freqs;
        let b = sc.solve(2.64f64.powi(2), -0.37, parity, 12).unwrap().freqs;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-10 * x, "{x} vs {y}");
        }
    }
}

#[test]
fn te1_level_converges_with_supercell_width() {
    let narrow = te1_level(&PCWaveguideSpec::default(), 0.4);
    let wide = te1_level(
        &PCWaveguideSpec {
            supercell_rows: 43,
            ..PCWaveguideSpec::default()
        },
        0.4,
    );
    assert!((narrow / wide - 1.0).abs() < 2e-3, "{narrow} vs {wide}");
}

#[test]
fn te1_level_converges_with_plane_wave_cutoff() {
    let coarse = te1_level(&PCWaveguideSpec::default(), 0.4);
    let fine = te1_level(
        &PCWaveguideSpec {
            plane_waves_per_cell: 9,
            ..PCWaveguideSpec::default()
        },
        0.4,
    );
    assert!((coarse / fine - 1.0).abs() < 5e-3, "{coarse} vs {fine}");
}

#[test]
fn te1_is_localized_and_has_negative_group_velocity() {
    let s = setup();
    assert!(s.te1.samples.len() >= 5);
    assert!(s.te1.samples.iter().all(|p| p.n_g < 0.0));
    for p in &s.te1.samples {
        let kz = p.beta_rad_per_um * s.solver.spec().lambda_z_um() / (2.0 * std::f64::consts::PI);
        let (level, _, _) = s.solver.level(&TE1, kz, &s.index).unwrap().unwrap();
        assert!(level.localization > 0.5, "kz {kz}: {}", level.localization);
    }
}

#[test]
fn odd_branch_lies_above_te1() {
    let s = setup();
    for kz in [0.36, 0.40, 0.44] {
        let even = s.solver.level(&TE1, kz, &s.index).unwrap().unwrap().0.omega_norm;
        let odd = s.solver.level(&TE1_ODD, kz, &s.index).unwrap().unwrap().0.omega_norm;
        assert!(odd > even, "kz {kz}: odd {odd} even {even}");
    }
}

#[test]
fn unchanged_thickness_shifts_nothing() {
    let s = setup();
    let shifts = thinning_shift(s.solver.spec(), &[0.38, 0.42], None, &s.index, 340.0, &[TE1]).unwrap();
    assert_eq!(shifts[0].delta_omega_norm, 0.0);
}

#[test]
fn overlap_coupling_falls_with_gap_and_vanishes_for_odd_modes() {
    let s = setup();
    let fiber = s.config.fiber_spec().unwrap();
    let slab = s.config.slab_spec();
    let even = phase_matched_profile(&s.solver, &TE1, &s.index, &fiber, &s.config.te1_kpath(), &slab).unwrap();
    let mode = FundamentalMode::new(&fiber, even.wavelength_um).unwrap();
    let kappas: Vec<f64> = [150.0, 300.0, 450.0, 600.0]
        .iter()
        .map(|&g| kappa_overlap(&mode, &even, g, 0.0).unwrap())
        .collect();
    assert!(kappas.windows(2).all(|w| w[1] < w[0]), "{kappas:?}");
    let odd = taperprobe::overlap::profile_at(&s.solver, &TE1_ODD, &s.index, even.kz, &slab).unwrap();
    let odd_mode = FundamentalMode::new(&fiber, odd.wavelength_um).unwrap();
    let centered = kappa_overlap(&odd_mode, &odd, 300.0, 0.0).unwrap();
    let shifted = kappa_overlap(&odd_mode, &odd, 300.0, 0.5).unwrap();
    assert!(centered < 1e-8 * kappas[1]);
    assert!(shifted > 1e3 * centered.max(f64::MIN_POSITIVE));
}

#[test]
fn halving_the_wavelength_step_barely_moves_the_reconstruction() {
    let s = setup();
    let taper = s.config.model_taper().unwrap();
    let fiber = s.config.fiber_spec().unwrap();
    let coupler = CouplerConfig::default();
    let positions = linear_grid(0.19, 0.004, 8);
    let betas = |step: f64| {
        let grid = MapGrid {
            wavelengths_nm: linear_grid(1565.0, step, (60.0 / step) as usize),
            positions_mm: positions.clone(),
        };
        let map = synthesize_map(&taper, &fiber, &s.te1, None, &coupler, &grid, &SynthesisOptions::default()).unwrap();
        let mut points = extract_resonances(&map, &ExtractOptions::default());
        label_tracks(&mut points, &taper, &fiber, &[&s.te1], 3.0).unwrap();
        to_bandstructure(&points, &taper, &fiber)
            .unwrap()
            .into_iter()
            .filter(|p| p.label == "TE-1")
            .map(|p| p.beta_rad_per_um)
            .collect::<Vec<_>>()
    };
    let coarse = betas(0.25);
    let fine = betas(0.125);
    assert_eq!(coarse.len(), positions.len());
    assert_eq!(fine.len(), positions.len());
    for (c, f) in coarse.iter().zip(&fine) {
        assert!((c / f - 1.0).abs() < 2e-3, "{c} vs {f}");
    }
}

#[test]
fn reconstructed_branch_keeps_negative_slope() {
    let s = setup();
    let taper = s.config.model_taper().unwrap();
    let fiber = s.config.fiber_spec().unwrap();
    let grid = s.config.map_grid().unwrap();
    let map = synthesize_map(&taper, &fiber, &s.te1, None, &CouplerConfig::default(), &grid, &SynthesisOptions::default()).unwrap();
    let mut points = extract_resonances(&map, &ExtractOptions::default());
    label_tracks(&mut points, &taper, &fiber, &[&s.te1], 3.0).unwrap();
    let mut te1: Vec<_> = to_bandstructure(&points, &taper, &fiber)
        .unwrap()
        .into_iter()
        .filter(|p| p.label == "TE-1")
        .collect();
    assert!(te1.len() >= 40);
    te1.sort_by(|a, b| a.beta_rad_per_um.total_cmp(&b.beta_rad_per_um));
    let first = te1.first().unwrap();
    let last = te1.last().unwrap();
    let slope = (last.omega_rad_per_s - first.omega_rad_per_s) / (last.beta_rad_per_um - first.beta_rad_per_um);
    assert!(slope < 0.0, "d omega / d beta = {slope}");
}
