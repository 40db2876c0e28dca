use microforge::phasefield::{
    run_snapshots, run_trajectory, write_trajectory_csv, InitialCondition, PhaseFieldParams, PhaseFieldSolver,
    PhaseFieldState,
};
use microforge::Rng;

fn ic(seed: u64, half_width: usize) -> InitialCondition {
    InitialCondition {
        boundary_half_width: half_width,
        seed_noise_amplitude: 0.09,
        seed,
    }
}

fn max_diff(a: &PhaseFieldState, b: &PhaseFieldState) -> f64 {
    a.phi1
        .data
        .iter()
        .zip(&b.phi1.data)
        .chain(a.phi2.data.iter().zip(&b.phi2.data))
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn energy_never_increases_over_a_thousand_steps() {
    let p = PhaseFieldParams::default();
    let s = PhaseFieldSolver::new(p.clone()).unwrap();
    assert!((s.dt() - 0.2 * p.stability_bound()).abs() <= 1e-15 * s.dt());
    for seed in [1, 2] {
        let mut state = ic(seed, 3).build(32).unwrap();
        // Start from a partly transformed state so every term is active.
        for _ in 0..2500 {
            state = s.step(&state).unwrap();
        }
        let mut prev = s.total_free_energy(&state).unwrap();
        for k in 0..1000 {
            state = s.step(&state).unwrap();
            let e = s.total_free_energy(&state).unwrap();
            assert!(e <= prev + 1e-9 * prev.abs(), "step {k}: {prev:e} -> {e:e}");
            prev = e;
        }
    }
}

#[test]
fn trajectory_energy_is_monotone() {
    let (_, rows) = run_trajectory(&ic(7, 2), &PhaseFieldParams::default(), 10, 400).unwrap();
    assert_eq!(rows.len(), 4001);
    for w in rows.windows(2) {
        assert!(w[1].total_energy_j <= w[0].total_energy_j + 1e-9 * w[0].total_energy_j.abs());
        assert!(w[1].time_s > w[0].time_s);
    }
}

#[test]
fn band_grows_within_a_hundred_steps() {
    let p = PhaseFieldParams::default();
    let s = PhaseFieldSolver::new(p).unwrap();
    let mut state = ic(11, 2).build(32).unwrap();
    for _ in 0..1500 {
        state = s.step(&state).unwrap();
    }
    let mut prev = state.label().unwrap().martensite_fraction();
    assert!(prev > 0.0);
    for _ in 0..2 {
        for _ in 0..100 {
            state = s.step(&state).unwrap();
        }
        let f = state.label().unwrap().martensite_fraction();
        assert!(f > prev, "{prev} -> {f}");
        prev = f;
    }
}

#[test]
fn snapshot_fractions_weakly_increase() {
    let p = PhaseFieldParams::default();
    for (seed, hw) in [(1, 1), (2, 2), (3, 4)] {
        let imgs = run_snapshots(&ic(seed, hw), &p, 10, 500).unwrap();
        assert_eq!(imgs.len(), 10);
        let fr: Vec<f64> = imgs.iter().map(|i| i.martensite_fraction()).collect();
        for w in fr.windows(2) {
            assert!(w[1] >= w[0], "{fr:?}");
        }
        assert!(fr[9] > 0.5, "{fr:?}");
    }
}

#[test]
fn variant_exchange_symmetry() {
    let p = PhaseFieldParams::default();
    let s = PhaseFieldSolver::new(p).unwrap();
    let mut rng = Rng::new(99);
    let mut a = ic(5, 3).build(32).unwrap();
    for v in a.phi1.data.iter_mut() {
        *v += 0.02 * rng.uniform();
    }
    let mut b = a.variant_swapped();
    for _ in 0..300 {
        a = s.step(&a).unwrap();
        b = s.step(&b).unwrap();
    }
    let d = max_diff(&a.variant_swapped(), &b);
    assert!(d < 1e-12, "{d:e}");
}

#[test]
fn translation_equivariance() {
    let p = PhaseFieldParams::default();
    let s = PhaseFieldSolver::new(p).unwrap();
    let mut a = ic(6, 2).build(32).unwrap();
    let mut b = a.rolled(5, 19);
    for k in 0..600 {
        a = s.step(&a).unwrap();
        b = s.step(&b).unwrap();
        if k % 200 == 199 {
            let d = max_diff(&a.rolled(5, 19), &b);
            assert!(d < 1e-12, "{d:e}");
            assert_eq!(a.rolled(5, 19).label().unwrap(), b.label().unwrap());
        }
    }
}

#[test]
fn deterministic_given_seed() {
    let p = PhaseFieldParams::default();
    let a = run_snapshots(&ic(3, 2), &p, 3, 300).unwrap();
    let b = run_snapshots(&ic(3, 2), &p, 3, 300).unwrap();
    assert_eq!(a, b);
}

#[test]
fn many_initial_conditions_make_a_full_dataset() {
    let p = PhaseFieldParams::default();
    let mut total = 0;
    for k in 0..170u64 {
        total += run_snapshots(&ic(k, 1 + (k as usize % 4)), &p, 10, 10).unwrap().len();
    }
    assert_eq!(total, 1700);
}

#[test]
fn trajectory_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let (_, rows) = run_trajectory(&ic(1, 1), &PhaseFieldParams::default(), 2, 5).unwrap();
    let path = dir.path().join("trajectory_0.csv");
    write_trajectory_csv(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "step,time_s,total_energy_J,martensite_fraction");
    assert_eq!(lines.count(), 11);
}
