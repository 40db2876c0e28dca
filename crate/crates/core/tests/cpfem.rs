use microforge::cpfem::{
    considere, resolved_shear_stress, simulate, write_curve_csv, CpfemConfig, Simulation, StressStrainCurve, SlipSystem,
};
use microforge::{DeformationMode, Error, MicrostructureImage, Phase, Rng};
use proptest::prelude::*;

/// Martensite islands on a ferrite matrix, both variants present.
fn islands(seed: u64, count: usize) -> MicrostructureImage {
    let mut rng = Rng::new(seed);
    let centres: Vec<(f64, f64, f64, Phase)> = (0..count)
        .map(|i| {
            let v = if i % 2 == 0 { Phase::Variant1 } else { Phase::Variant2 };
            (rng.uniform_in(0.0, 32.0), rng.uniform_in(0.0, 32.0), rng.uniform_in(2.0, 5.0), v)
        })
        .collect();
    MicrostructureImage::from_fn(32, 32, |r, c| {
        for &(y, x, rad, v) in &centres {
            if (r as f64 - y).hypot(c as f64 - x) < rad {
                return v;
            }
        }
        Phase::Ferrite
    })
}

#[test]
fn ferrite_elastic_slope_is_the_plane_strain_modulus() {
    let img = MicrostructureImage::uniform(32, 32, Phase::Ferrite);
    let mut sim = Simulation::new(&img, DeformationMode::TensileX, &CpfemConfig::default()).unwrap();
    let (e, s) = sim.advance().unwrap();
    let expected = 205_900.0 / (1.0 - 0.3 * 0.3);
    assert!(((s / e) - expected).abs() / expected < 1e-2, "slope {}", s / e);
}

#[test]
fn rotation_maps_tensile_x_onto_tensile_y() {
    let img = islands(5, 7);
    let cfg = CpfemConfig::default();
    let mut rotated_cfg = cfg.clone();
    rotated_cfg.lattice_angle_deg += 90.0;
    let a = simulate(&img, DeformationMode::TensileX, &cfg).unwrap();
    let b = simulate(&img.rotated_90(), DeformationMode::TensileY, &rotated_cfg).unwrap();
    assert_eq!(a.curve.len(), b.curve.len());
    assert!((a.props.eps_lim - b.props.eps_lim).abs() <= 1e-8 * a.props.eps_lim);
    assert!((a.props.sigma_max - b.props.sigma_max).abs() <= 1e-8 * a.props.sigma_max);
    let scale = a.curve.true_stress.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..a.curve.len() {
        let (ea, eb) = (a.curve.true_strain[i], b.curve.true_strain[i]);
        assert!((ea - eb).abs() <= 1e-8 * ea.abs(), "sample {i}: strain {ea} vs {eb}");
        let d = (a.curve.true_stress[i] - b.curve.true_stress[i]).abs();
        assert!(d <= 1e-8 * scale, "sample {i}: {} vs {}", a.curve.true_stress[i], b.curve.true_stress[i]);
    }
}

#[test]
fn hardening_and_storage_stay_consistent_over_a_run() {
    let img = islands(11, 6);
    let mut sim = Simulation::new(&img, DeformationMode::ShearX, &CpfemConfig::default()).unwrap();
    let mut prev = sim.rho_s().to_vec();
    while sim.response().0 < 0.3 {
        sim.advance().unwrap();
        for (now, before) in sim.rho_s().iter().zip(&prev) {
            for a in 0..3 {
                assert!(now[a] >= before[a], "rho_s decreased at step {}", sim.step_count());
            }
        }
        prev = sim.rho_s().to_vec();
        for g in sim.flow_stresses() {
            assert!(g.iter().all(|&v| v >= 50.0));
        }
    }
    let drift = sim.hardening_drift();
    assert!(drift < 1e-3, "drift {drift}");
    assert!(sim.rho_g().iter().flatten().any(|&v| v > 0.0));
}

#[test]
fn homogeneous_tension_stores_no_gn_dislocations() {
    let img = MicrostructureImage::uniform(32, 32, Phase::Ferrite);
    let mut sim = Simulation::new(&img, DeformationMode::TensileX, &CpfemConfig::default()).unwrap();
    while sim.response().0 < 0.05 {
        sim.advance().unwrap();
    }
    let slip = sim.accumulated_slip().iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(slip > 1e-3);
    let rg = sim.rho_g().iter().flatten().fold(0.0f64, |m, &v| m.max(v));
    // Relative to the density one pixel-wide gradient of the slip would give.
    let reference = slip / (31.0 / 32.0) / 2.5e-4;
    assert!(rg < 1e-9 * reference, "rho_g {rg} vs {reference}");
}

#[test]
fn martensite_is_stronger_than_ferrite_in_every_mode() {
    let cfg = CpfemConfig::default();
    let f = MicrostructureImage::uniform(32, 32, Phase::Ferrite);
    let m = MicrostructureImage::uniform(32, 32, Phase::Variant2);
    for mode in DeformationMode::ALL {
        let sf = simulate(&f, mode, &cfg).unwrap();
        let sm = simulate(&m, mode, &cfg).unwrap();
        assert!(sm.props.sigma_max > sf.props.sigma_max, "{mode}");
        assert!(sf.necking_detected && sm.necking_detected);
    }
}

#[test]
fn runaway_slip_is_reported_as_divergence() {
    let mut cfg = CpfemConfig::default();
    cfg.martensite.gamma_dot_0 = 1e300;
    let img = MicrostructureImage::uniform(32, 32, Phase::Variant1);
    match simulate(&img, DeformationMode::ShearY, &cfg) {
        Err(Error::Divergence { .. }) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn rejects_non_square_images_and_bad_config() {
    let img = MicrostructureImage::uniform(32, 16, Phase::Ferrite);
    assert!(matches!(
        Simulation::new(&img, DeformationMode::TensileX, &CpfemConfig::default()),
        Err(Error::Dimension(_))
    ));
    let mut cfg = CpfemConfig::default();
    cfg.theta = 2.0;
    let sq = MicrostructureImage::uniform(8, 8, Phase::Ferrite);
    assert!(Simulation::new(&sq, DeformationMode::TensileX, &cfg).is_err());
}

#[test]
fn curve_csv_layout() {
    let img = MicrostructureImage::uniform(8, 8, Phase::Variant1);
    let out = simulate(&img, DeformationMode::TensileX, &CpfemConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    write_curve_csv(&path, &out).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "true_strain,true_stress_MPa,nominal_stress_MPa,hardening_rate_MPa");
    assert_eq!(lines.count(), out.curve.len());
    let strains = &out.curve.true_strain;
    assert!(strains.windows(2).all(|w| w[1] > w[0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn considere_recovers_hollomon_exponents(n in 0.08f64..0.45, k in 100.0f64..2000.0) {
        let strain: Vec<f64> = (1..=900).map(|i| i as f64 * 1e-3).collect();
        let stress = strain.iter().map(|e| k * e.powf(n)).collect();
        let r = considere(&StressStrainCurve::from_true(strain, stress)).unwrap();
        let e = r.eps_lim.unwrap();
        prop_assert!((e - n).abs() < 1e-3, "n={} got {}", n, e);
    }

    #[test]
    fn resolved_shear_is_frame_invariant(
        sxx in -500.0f64..500.0, syy in -500.0f64..500.0, sxy in -500.0f64..500.0,
        angle in -180.0f64..180.0, turn in -180.0f64..180.0,
    ) {
        let (s, c) = turn.to_radians().sin_cos();
        // R sigma R^T for an in-plane rotation R.
        let rxx = c * c * sxx - 2.0 * s * c * sxy + s * s * syy;
        let ryy = s * s * sxx + 2.0 * s * c * sxy + c * c * syy;
        let rxy = s * c * (sxx - syy) + (c * c - s * s) * sxy;
        let before = resolved_shear_stress(&[sxx, syy, 0.0, sxy], &SlipSystem::from_angle(angle));
        let after = resolved_shear_stress(&[rxx, ryy, 0.0, rxy], &SlipSystem::from_angle(angle + turn));
        prop_assert!((before - after).abs() < 1e-9 * (1.0 + before.abs()));
    }
}
