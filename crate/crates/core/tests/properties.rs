//! Randomized checks of the invariants each module promises.


use proptest::prelude::*;
use taperprobe::bands::BandCurve;
use taperprobe::config::RunConfig;
use taperprobe::coupling::{
    airy_spectrum, co_transmission, contra_transmission, contra_transmission_chirped, fp_reflectivity, ideality_from_transmission,
    lateral_profile, CouplerConfig, KappaModel, LossTable,
};
use taperprobe::fiber::{characteristic_residual, fundamental_neff, FiberSpec};
use taperprobe::lattice::{epsilon_fourier, linear_grading, PCWaveguideSpec};
use taperprobe::pipeline::{
    extract_resonances, gap_sweep, linear_grid, synthesize_map, ExtractOptions, LinearDetuning, MapGrid, MapMetadata, SynthesisOptions,
    TransmissionMap,
};
use taperprobe::slab::{slab_effective_index, SlabSpec, VerticalOrder};
use taperprobe::taper::TaperProfile;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn guided_index_lies_between_cladding_and_core(d in 0.4f64..6.0, lambda in 1.2f64..1.8) {
        let spec = FiberSpec::silica(d);
        let p = fundamental_neff(&spec, lambda).unwrap();
        prop_assert!(p.n_eff > spec.clad_index && p.n_eff < spec.core.at(lambda));
        prop_assert!(characteristic_residual(&spec, &p).unwrap() < 1e-10);
    }

    #[test]
    fn guided_index_grows_with_diameter(d in 0.4f64..6.0, step in 1e-3f64..0.5, lambda in 1.2f64..1.8) {
        let lo = fundamental_neff(&FiberSpec::silica(d), lambda).unwrap().n_eff;
        let hi = fundamental_neff(&FiberSpec::silica(d + step), lambda).unwrap().n_eff;
        prop_assert!(hi > lo);
    }

    #[test]
    fn slab_index_is_bounded_and_grows_with_thickness(t in 150.0f64..600.0, dt in 1.0f64..100.0, lambda in 1.3f64..1.8) {
        let slab = SlabSpec::silicon_membrane(t);
        let n = slab_effective_index(&slab, lambda, VerticalOrder::Fundamental).unwrap();
        let thicker = slab_effective_index(&slab.with_thickness(t + dt), lambda, VerticalOrder::Fundamental).unwrap();
        prop_assert!(n > slab.clad_index && n < slab.core_index);
        prop_assert!(thicker > n);
    }

    #[test]
    fn permittivity_coefficients_are_hermitian(mx in -12i64..12, mz in -6i64..6, center in 0.2f64..0.35, rows in 0usize..6) {
        let spec = PCWaveguideSpec { grading: linear_grading(center, 0.35, rows), ..PCWaveguideSpec::default() };
        let a = epsilon_fourier(&spec, 7.0, mx, mz);
        let b = epsilon_fourier(&spec, 7.0, -mx, -mz);
        prop_assert!((a - b.conj()).norm() <= 1e-12 * a.norm().max(1.0));
    }

    #[test]
    fn taper_interpolation_stays_between_neighbours(waist in 0.4f64..2.0, pull in 1.0f64..5.0, t in 0.0f64..1.0) {
        let taper = TaperProfile::exponential(waist, pull, 301).unwrap();
        let (lo, hi) = taper.range_mm();
        let x = lo + t * (hi - lo);
        let d = taper.diameter_at(x).unwrap();
        let xs = taper.positions_mm();
        let i = xs.partition_point(|&p| p <= x).clamp(1, xs.len() - 1);
        let (a, b) = (taper.diameters_um()[i - 1], taper.diameters_um()[i]);
        prop_assert!(d >= a.min(b) - 1e-12 && d <= a.max(b) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn transfers_conserve_power(kappa in 0.0f64..0.5, length in 1.0f64..200.0, delta in -1.0f64..1.0) {
        let c = contra_transmission(kappa, length, delta);
        prop_assert!((c.t + c.c - 1.0).abs() < 1e-12);
        let o = co_transmission(kappa, length, delta);
        prop_assert!((o.t + o.c - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn transmission_is_even_in_detuning(kappa in 0.0f64..0.5, length in 1.0f64..200.0, delta in 0.0f64..1.0) {
        let plus = contra_transmission(kappa, length, delta).t;
        let minus = contra_transmission(kappa, length, -delta).t;
        prop_assert!((plus - minus).abs() < 1e-14);
        let plus = co_transmission(kappa, length, delta).t;
        let minus = co_transmission(kappa, length, -delta).t;
        prop_assert!((plus - minus).abs() < 1e-14);
    }

    #[test]
    fn resonant_pair_is_sech_and_tanh(kl in 0.0f64..15.0) {
        let r = contra_transmission(kl / 50.0, 50.0, 0.0);
        let sech2 = 1.0 / kl.cosh().powi(2);
        prop_assert!((r.t - sech2).abs() < 1e-12);
        prop_assert!((r.c - kl.tanh().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn resonant_coupling_grows_with_strength(kl in 0.0f64..15.0, dk in 1e-3f64..1.0) {
        let a = contra_transmission(kl / 50.0, 50.0, 0.0).c;
        let b = contra_transmission((kl + dk) / 50.0, 50.0, 0.0).c;
        prop_assert!(b > a || (a == 1.0 && b == 1.0));
    }

    #[test]
    fn co_coupling_stays_under_its_envelope(kappa in 1e-3f64..0.5, length in 1.0f64..400.0, delta in -1.0f64..1.0) {
        let c = co_transmission(kappa, length, delta).c;
        prop_assert!(c <= kappa * kappa / (kappa * kappa + delta * delta) + 1e-12);
    }

    #[test]
    fn chirped_transfer_conserves_power(kappa in 0.0f64..0.3, delta in -0.5f64..0.5, rate in -0.01f64..0.01) {
        let t = contra_transmission_chirped(kappa, 60.0, delta, rate, 32);
        prop_assert!((t.t + t.c - 1.0).abs() < 1e-10);
        prop_assert!(t.t >= 0.0 && t.t <= 1.0 + 1e-12);
    }

    #[test]
    fn ideality_is_the_transmission_contrast(t_max in 0.0f64..1.0, frac in 0.0f64..1.0) {
        let t_min = frac * t_max;
        let g = ideality_from_transmission(t_min, t_max).unwrap();
        prop_assert!((g - (t_max - t_min)).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&g));
    }

    #[test]
    fn reflectivity_inverts_the_airy_spectrum(r2 in 0.05f64..0.3, length in 40.0f64..400.0) {
        let lambdas = linear_grid(1500.0, 0.02, 5001);
        let spectrum = airy_spectrum(r2, length, &lambdas);
        let back = fp_reflectivity(&spectrum).unwrap();
        prop_assert!((back - r2).abs() < 0.01, "r2 {} recovered {}", r2, back);
    }

    #[test]
    fn lateral_profile_is_mirror_symmetric(width in 0.5f64..3.0, peak in 0.01f64..0.1) {
        let offsets: Vec<f64> = (0..41).map(|i| -4.0 + 0.2 * i as f64).collect();
        let p = lateral_profile(&offsets, 60.0, |x| Ok(peak * (-(x / width).powi(2)).exp())).unwrap();
        for (a, b) in p.samples.iter().zip(p.samples.iter().rev()) {
            prop_assert!((a.depth - b.depth).abs() <= 1e-10 * a.depth.max(1e-300));
        }
        let mid = p.samples[20].depth;
        prop_assert!(p.samples.iter().all(|s| s.depth <= mid));
    }
}

fn lorentzian_map(centers: &[Vec<f64>], depth: f64, width_nm: f64) -> TransmissionMap {
    let lambdas = linear_grid(1565.0, 0.25, 240);
    let positions = linear_grid(0.1, 0.01, centers.len());
    let spectra = centers
        .iter()
        .map(|cs| {
            lambdas
                .iter()
                .map(|&l| {
                    cs.iter()
                        .map(|&c| 1.0 - depth / (1.0 + ((l - c) / (0.5 * width_nm)).powi(2)))
                        .product::<f64>()
                        * 0.97
                })
                .collect()
        })
        .collect();
    TransmissionMap::new(lambdas, positions, spectra, MapMetadata::external("synthetic")).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extraction_finds_injected_dips_within_a_grid_step(
        start in 1580.0f64..1590.0,
        slope in 0.05f64..0.5,
        depth in 0.3f64..0.95,
        width in 2.0f64..12.0,
    ) {
        let centers: Vec<Vec<f64>> = (0..20).map(|i| vec![start + slope * i as f64]).collect();
        let map = lorentzian_map(&centers, depth, width);
        let points = extract_resonances(&map, &ExtractOptions::default());
        prop_assert_eq!(points.len(), 20);
        for (p, c) in points.iter().zip(&centers) {
            prop_assert!((p.lambda_min_nm - c[0]).abs() <= 0.25, "{} vs {}", p.lambda_min_nm, c[0]);
            prop_assert!(p.t_min < 0.97);
        }
        prop_assert_eq!(points, extract_resonances(&map, &ExtractOptions::default()));
    }

    #[test]
    fn two_separate_branches_keep_their_tracks(
        a in 1575.0f64..1585.0,
        gap in 20.0f64..30.0,
        slope in -0.15f64..0.15,
    ) {
        // branches stay at least 11 nm (about three linewidths) apart
        let centers: Vec<Vec<f64>> = (0..30).map(|i| vec![a + slope * i as f64, a + gap - slope * i as f64]).collect();
        let map = lorentzian_map(&centers, 0.6, 4.0);
        let points = extract_resonances(&map, &ExtractOptions::default());
        prop_assert_eq!(points.len(), 60);
        let track_of = |which: usize| -> Vec<usize> {
            points.chunks(2).map(|col| col[which].track).collect()
        };
        for which in 0..2 {
            let tracks = track_of(which);
            let first = tracks[0];
            let agree = tracks.iter().filter(|&&t| t == first).count();
            prop_assert!(agree * 10 >= tracks.len() * 9);
        }
    }

    #[test]
    fn map_csv_round_trips(values in proptest::collection::vec(0.0f64..1.0, 12)) {
        let map = TransmissionMap::new(
            vec![1565.0, 1565.25, 1565.5, 1565.75],
            vec![0.1, 0.2, 0.3],
            values.chunks(4).map(|c| c.to_vec()).collect(),
            MapMetadata::external("t"),
        ).unwrap();
        let back = TransmissionMap::from_csv(map.to_csv().as_bytes(), MapMetadata::external("t")).unwrap();
        prop_assert_eq!(back, map);
    }

    #[test]
    fn inferred_coupling_matches_the_model_without_loss(kappa0 in 0.05f64..0.3, decay in 150.0f64..400.0) {
        let coupler = CouplerConfig {
            kappa: KappaModel::Exponential { kappa0_per_um: kappa0, decay_nm: decay },
            loss: LossTable::lossless(),
            ..CouplerConfig::default()
        };
        let detuning = LinearDetuning { lambda0_nm: 1600.0, slope_per_um_per_nm: -0.0057 };
        let lambdas = linear_grid(1560.0, 0.05, 1601);
        let gaps = [200.0, 300.0, 400.0, 600.0, 800.0];
        for row in gap_sweep(&coupler, &gaps, &detuning, &lambdas).unwrap() {
            let kl = coupler.kappa.kappa_at(row.gap_nm) * coupler.length_um;
            prop_assume!(kl < 8.0);
            prop_assert!((row.kappa_l / kl - 1.0).abs() < 0.02, "gap {} inferred {} model {}", row.gap_nm, row.kappa_l, kl);
        }
    }

    #[test]
    fn config_survives_an_echo(gap in 100.0f64..900.0, thickness in 200.0f64..400.0, seed_noise in 0.0f64..0.02) {
        let mut cfg = RunConfig::default();
        cfg.coupler.gap_nm = gap;
        cfg.slab.thickness_nm = thickness;
        cfg.grids.noise_rel = seed_noise;
        let text = cfg.to_toml_string().unwrap();
        prop_assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }
}

/// A straight branch whose phase match sweeps through the default scan
/// along the default taper.
fn linear_branch() -> BandCurve {
    let pts: Vec<(f64, f64)> = (0..13).map(|i| {
        let kz = 0.30 + 0.01 * i as f64;
        (kz, 0.3125 - 0.27 * (kz - 0.353))
    }).collect();
    let mut c = BandCurve::from_normalized("TE-1", None, 500.0, &pts);
    c.fill_group_index(500.0);
    c
}

#[test]
fn uncoupled_map_is_the_loss_baseline() {
    let taper = TaperProfile::exponential(0.6, 2.5, 2001).unwrap();
    let branch = linear_branch();
    for kappa in [
        KappaModel::Exponential { kappa0_per_um: 0.0, decay_nm: 290.0 },
        KappaModel::Fixed { kappa_per_um: 0.0 },
    ] {
        let coupler = CouplerConfig { kappa, ..CouplerConfig::default() };
        let map = synthesize_map(&taper, &FiberSpec::silica(1.0), &branch, None, &coupler, &MapGrid::default(), &SynthesisOptions::default()).unwrap();
        let base = 1.0 - coupler.loss();
        for v in map.spectra.iter().flatten() {
            assert!((v / base - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn normalized_map_is_unity_off_resonance() {
    let taper = TaperProfile::exponential(0.6, 2.5, 2001).unwrap();
    let branch = linear_branch();
    let coupler = CouplerConfig::default();
    let map = synthesize_map(&taper, &FiberSpec::silica(1.0), &branch, None, &coupler, &MapGrid::default(), &SynthesisOptions::default()).unwrap();
    let base = 1.0 - coupler.loss();
    for v in map.spectra.iter().flatten() {
        assert!(*v / base <= 1.0 + 1e-12 && *v >= 0.0);
    }
    let top = map.spectra.iter().flatten().cloned().fold(0.0, f64::max);
    assert!(top / base > 0.999, "map maximum {top}");
    // the chirped lineshape keeps weak sidelobes, but far from the dip the
    // spectrum is back near the baseline
    for s in &map.spectra {
        let j = (0..s.len()).min_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        let dip = map.wavelengths_nm[j];
        for (l, v) in map.wavelengths_nm.iter().zip(s) {
            if (l - dip).abs() > 30.0 {
                assert!(v / base > 0.95, "{v} at {l} with the dip at {dip}");
            }
        }
    }
}

#[test]
fn dip_follows_the_taper_monotonically() {
    let taper = TaperProfile::exponential(0.6, 2.5, 2001).unwrap();
    let branch = linear_branch();
    let coupler = CouplerConfig::default();
    let map = synthesize_map(&taper, &FiberSpec::silica(1.0), &branch, None, &coupler, &MapGrid::default(), &SynthesisOptions::default()).unwrap();
    let minima: Vec<f64> = map
        .spectra
        .iter()
        .map(|s| {
            let j = (0..s.len()).min_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
            map.wavelengths_nm[j]
        })
        .collect();
    let rising = minima.windows(2).all(|w| w[1] >= w[0]);
    let falling = minima.windows(2).all(|w| w[1] <= w[0]);
    assert!(rising || falling, "{minima:?}");
    assert!(minima.first() != minima.last());
}

#[test]
fn fiber_index_sweep_has_no_branch_jumps() {
    let mut prev: Option<f64> = None;
    for i in 0..=560 {
        let d = 0.4 + 0.01 * i as f64;
        let n = fundamental_neff(&FiberSpec::silica(d), 1.6).unwrap().n_eff;
        if let Some(p) = prev {
            assert!(n > p && n - p < 0.01, "d {d}: {p} -> {n}");
        }
        prev = Some(n);
    }
    // bulk limit
    let big = fundamental_neff(&FiberSpec::silica(60.0), 1.6).unwrap().n_eff;
    assert!((FiberSpec::silica(1.0).core.at(1.6) - big) < 1e-3);
}
