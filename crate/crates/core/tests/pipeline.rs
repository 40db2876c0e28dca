use std::fs;
use std::path::Path;
use std::process::Command;

use microforge::nn::Normalizer;
use microforge::pipeline::{
    self, compare_prediction, list_files, matched_fraction, read_run_manifest, PipelineConfig, Profile, SearchSummary,
    RUN_MANIFEST,
};
use microforge::search::{random_search, QuadraticStub};
use microforge::{DeformationMode, MechanicalProps, Rng};

fn tiny(out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::profile(Profile::Desk);
    c.seed = 11;
    c.out = out.to_path_buf();
    c.dataset.n_initial_conditions = 2;
    c.dataset.snapshots = 3;
    c.dataset.interval = 100;
    c.fem.images = 6;
    c.gan.iterations = 20;
    c.gan.batch = 4;
    c.gan.checkpoint_every = 10;
    c.gan.generator_widths = [4, 4];
    c.gan.critic_widths = [4, 4];
    c.cnn.iterations = 20;
    c.cnn.split = [4, 1, 1];
    c.cnn.conv_widths = [2, 4];
    c.cnn.hidden = 8;
    c.search.iterations = 50;
    c.search.reference_points = 200;
    c.search.compare_points = vec![10, 20];
    c.search.compare_repeats = 2;
    c.search.heatmap_resolution = 5;
    c.search.fraction_window = 0.5;
    c.validate().unwrap();
    c
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn tiny_run_covers_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    let root = tmp.path();

    let ds = pipeline::cmd_gen_dataset(&cfg, false).unwrap();
    assert!(!ds.cached());
    let lbl = ds.manifest().outputs.keys().filter(|k| k.ends_with(".lbl")).count();
    assert_eq!(lbl, 6);
    assert_eq!(ds.manifest().seed, 11);
    assert!(pipeline::cmd_gen_dataset(&cfg, false).unwrap().cached());

    let fem = pipeline::cmd_fem_batch(&cfg, false).unwrap();
    let props = read(&root.join("fem/props.csv"));
    assert_eq!(String::from_utf8_lossy(&props).lines().count(), 1 + 6 * 4);
    let curves = list_files(&root.join("fem/curves")).unwrap();
    assert_eq!(curves.len(), 24);

    // Interrupt: drop some finished pairs and the assembled outputs, then resume.
    let before: Vec<(String, Vec<u8>)> = list_files(&root.join("fem"))
        .unwrap()
        .into_iter()
        .filter(|f| f != RUN_MANIFEST)
        .map(|f| {
            let b = read(&root.join("fem").join(&f));
            (f, b)
        })
        .collect();
    for f in ["jobs/job_00001_2.json", "jobs/job_00004_0.json", "props.csv", RUN_MANIFEST] {
        let p = root.join("fem").join(f);
        if p.exists() {
            fs::remove_file(p).unwrap();
        }
    }
    let again = pipeline::cmd_fem_batch(&cfg, true).unwrap();
    assert!(!again.cached());
    for (f, b) in &before {
        assert_eq!(&read(&root.join("fem").join(f)), b, "{f}");
    }
    assert_eq!(again.manifest().outputs, fem.manifest().outputs);

    let gan = pipeline::cmd_train_gan(&cfg, false).unwrap();
    assert!(gan.manifest().outputs.contains_key("generator.mfnn"));
    pipeline::cmd_train_cnn(&cfg, false).unwrap();
    for mode in DeformationMode::ALL {
        assert!(root.join(format!("cnn/regressor_{}.mfnn", mode.name())).exists());
    }
    let split: serde_json::Value = serde_json::from_slice(&read(&root.join("cnn/split.json"))).unwrap();
    let mut all: Vec<u64> = ["train", "val", "test"]
        .iter()
        .flat_map(|k| split[k].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()))
        .collect();
    all.sort_unstable();
    assert_eq!(all, (0..6).collect::<Vec<_>>());

    pipeline::cmd_search(&cfg, false).unwrap();
    let trace = String::from_utf8(read(&root.join("search/search_trace.csv"))).unwrap();
    assert_eq!(trace.lines().count(), 51);
    let report = String::from_utf8(read(&root.join("search/report.md"))).unwrap();
    for field in ["sigma_max", "eps_lim", "product", "mode"] {
        assert!(report.contains(field), "{field}");
    }
    assert!(read(&root.join("search/best.ppm")).starts_with(b"P6"));

    pipeline::cmd_verify(&cfg, false).unwrap();
    let v1 = read(&root.join("verify/verify.json"));
    pipeline::cmd_verify(&cfg, false).unwrap();
    assert_eq!(read(&root.join("verify/verify.json")), v1);

    pipeline::cmd_compare_sampling(&cfg, false).unwrap();
    let missing = pipeline::cmd_report(&cfg).unwrap();
    assert!(missing.is_empty(), "{missing:?}");
    for mode in DeformationMode::ALL {
        assert!(root.join(format!("report/scatter_{}.csv", mode.name())).exists());
    }
    for f in ["report.md", "r2.csv", "tradeoff.csv", "compare.csv"] {
        assert!(root.join("report").join(f).exists(), "{f}");
    }

    // Changing a downstream setting leaves upstream stages cached.
    let mut changed = cfg.clone();
    changed.search.iterations = 40;
    assert!(pipeline::cmd_train_cnn(&changed, false).unwrap().cached());
    assert!(!pipeline::cmd_search(&changed, false).unwrap().cached());
    let m = read_run_manifest(&root.join("search")).unwrap();
    assert!(m.inputs.keys().any(|k| k.starts_with("gan/")));
}

#[test]
fn single_pair_campaign() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.dataset.n_initial_conditions = 1;
    cfg.dataset.snapshots = 1;
    cfg.fem.images = 1;
    cfg.fem.modes = vec![DeformationMode::ShearX];
    pipeline::cmd_gen_dataset(&cfg, false).unwrap();
    pipeline::cmd_fem_batch(&cfg, false).unwrap();
    let props = String::from_utf8(read(&tmp.path().join("fem/props.csv"))).unwrap();
    assert_eq!(props.lines().count(), 2);
    assert_eq!(list_files(&tmp.path().join("fem/curves")).unwrap().len(), 1);
}

#[test]
fn empty_root_gives_skeleton_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    let missing = pipeline::cmd_report(&cfg).unwrap();
    assert_eq!(missing.len(), 6);
    let md = fs::read_to_string(tmp.path().join("report/report.md")).unwrap();
    assert!(md.starts_with("# Run report"));
    assert!(md.contains("## Missing artifacts"));
}

#[test]
fn fraction_filter() {
    let f = [0.10, 0.28, 0.30, 0.3199, 0.33, 0.315];
    assert_eq!(matched_fraction(&f, 0.30, 0.02), vec![1, 2, 3, 5]);
    assert!(matched_fraction(&f, 0.9, 0.02).is_empty());
    assert_eq!(matched_fraction(&f, 0.10, 0.0), vec![0]);
}

#[test]
fn exact_prediction_verifies_with_zero_error() {
    let mode = DeformationMode::TensileY;
    let labels: Vec<MechanicalProps> = (0..5)
        .map(|i| MechanicalProps { sigma_max: 500.0 + 50.0 * i as f64, eps_lim: 0.1 + 0.02 * i as f64, mode })
        .collect();
    let norm = Normalizer::fit(mode, &labels).unwrap();
    let fem = labels[3];
    let r = compare_prediction(&fem, &fem, true, &norm).unwrap();
    assert_eq!(r.rel_err_sigma_max, 0.0);
    assert_eq!(r.rel_err_eps_lim, Some(0.0));
    assert_eq!(r.rel_err_score, Some(0.0));
    let r = compare_prediction(&labels[2], &fem, false, &norm).unwrap();
    assert!(r.rel_err_sigma_max > 0.0);
    assert_eq!(r.rel_err_eps_lim, None);
    assert!(pipeline::verify_markdown(&r).contains("n/a"));
}

#[test]
fn stub_search_report_matches_search_result() {
    let r = random_search(500, &QuadraticStub, &mut Rng::new(3)).unwrap();
    let s = SearchSummary {
        iterations: 500,
        best_z: r.best_z,
        best_mode: r.best_mode,
        best_score: r.best_score,
        predicted: r.best_props,
        martensite_fraction: None,
    };
    let md = pipeline::search_report(&s);
    assert!(md.contains(&format!("| product | {:.4} |", r.best_score)));
    assert!(md.contains(&format!("({:.4}, {:.4})", r.best_z[0], r.best_z[1])));
}

#[test]
fn cli_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_microforge");
    let tmp = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(code(&["search", "--out", out]), 4);
    assert_eq!(code(&["report", "--profile", "huge", "--out", out]), 2);
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\"gan\": {\"clip\": -1}}").unwrap();
    assert_eq!(code(&["train-gan", "--config", bad.to_str().unwrap(), "--out", out]), 2);
    assert_eq!(code(&["report", "--out", out]), 0);
}
