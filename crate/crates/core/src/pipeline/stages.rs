use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::manifest::{Stage, StageStatus};
use crate::cpfem::{self, curve_file_name, read_props_csv, write_curve_csv, write_props_csv, PropsRow};
use crate::dataset::{self, DatasetManifest};
use crate::error::{Error, Result};
use crate::micro::MicrostructureImage;
use crate::mode::{DeformationMode, MechanicalProps};
use crate::nn::{
    self, evaluate_r_squared, load_checkpoint, save_checkpoint, train_cnn, train_wgan, wasserstein_tail_slope,
    Checkpoint, Normalizer, Split,
};
use crate::phasefield::{run_snapshots, InitialCondition};
use crate::rng::Rng;
use crate::search::{
    self, compare_sampling, heatmap_scores, random_search, write_compare_csv, write_heatmap_csv, write_trace_csv,
    CompareRow, Strategy, TrainedModels,
};

pub const DATASET: &str = "dataset";
pub const FEM: &str = "fem";
pub const GAN: &str = "gan";
pub const CNN: &str = "cnn";
pub const SEARCH: &str = "search";
pub const VERIFY: &str = "verify";
pub const COMPARE: &str = "compare";
pub const REPORT: &str = "report";

/// Worker count: `MICROFORGE_THREADS` if set, else the available cores.
pub fn worker_count() -> usize {
    std::env::var("MICROFORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Applies `f` to every item on up to `threads` workers; results keep the
/// input order.
fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(Option::unwrap).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(search::csv_err)?;
    w.write_record(header).map_err(search::csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(search::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn mode_file(prefix: &str, mode: DeformationMode, ext: &str) -> String {
    format!("{prefix}_{}.{ext}", mode.name())
}

// ---------------------------------------------------------------- dataset

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionRow {
    pub image_index: usize,
    pub initial_condition: usize,
    pub snapshot: usize,
    pub martensite_fraction: f64,
}

pub fn cmd_gen_dataset(cfg: &PipelineConfig, resume: bool) -> Result<StageStatus> {
    let d = &cfg.dataset;
    let stage = Stage::new(DATASET, &cfg.out, cfg.seed, d, &[])?;
    stage.run(resume, |dir| {
        let mut rng = Rng::new(cfg.seed).substream("dataset");
        let ics: Vec<InitialCondition> = (0..d.n_initial_conditions)
            .map(|_| {
                let span = d.band_half_width[1] - d.band_half_width[0] + 1;
                let half = d.band_half_width[0] + rng.below(span);
                InitialCondition {
                    boundary_half_width: half,
                    seed_noise_amplitude: d.seed_noise_amplitude,
                    seed: rng.next_seed(),
                }
            })
            .collect();
        let runs = par_map(&ics, worker_count(), |i, ic| {
            let r = run_snapshots(ic, &d.params, d.snapshots, d.interval);
            if let Err(e) = &r {
                eprintln!("[dataset] initial condition {i} failed: {e}");
            }
            r
        });
        let mut images = Vec::new();
        let mut fractions = Vec::new();
        let mut failures = Vec::new();
        for (i, run) in runs.into_iter().enumerate() {
            match run {
                Ok(snaps) => {
                    for (j, img) in snaps.into_iter().enumerate() {
                        fractions.push(FractionRow {
                            image_index: images.len(),
                            initial_condition: i,
                            snapshot: j,
                            martensite_fraction: img.martensite_fraction(),
                        });
                        images.push(img);
                    }
                }
                Err(e) => failures.push(format!("initial condition {i}: {e}")),
            }
        }
        let mut manifest = DatasetManifest::new(d.params.grid, d.params.grid, images.len(), cfg.seed);
        manifest.provenance.insert("producer".into(), "phasefield".into());
        manifest.provenance.insert("initial_conditions".into(), d.n_initial_conditions.into());
        manifest.provenance.insert("snapshots".into(), d.snapshots.into());
        manifest.provenance.insert("interval".into(), d.interval.into());
        manifest.provenance.insert("failed".into(), serde_json::to_value(&failures)?);
        dataset::write_dataset(dir, &images, manifest)?;
        let mut w = csv::Writer::from_path(dir.join("fractions.csv")).map_err(search::csv_err)?;
        for r in &fractions {
            w.serialize(r).map_err(search::csv_err)?;
        }
        w.flush()?;
        Ok(failures)
    })
}

// ---------------------------------------------------------------- fem

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct FemJob {
    image_index: usize,
    mode_code: u8,
    row: Option<PropsRow>,
    steps: usize,
    error: Option<String>,
}

fn job_file(image: usize, mode: DeformationMode) -> String {
    format!("job_{image:05}_{}.json", mode.code())
}

/// Dataset indices that receive FEM labels, in ascending order.
pub fn fem_subset(count: usize, size: usize, seed: u64) -> Result<Vec<usize>> {
    if size > count {
        return Err(Error::Config(format!("cannot draw {size} images from {count}")));
    }
    let mut s: Vec<usize> = Rng::new(seed).substream("fem-subset").permutation(count)[..size].to_vec();
    s.sort_unstable();
    Ok(s)
}

pub fn cmd_fem_batch(cfg: &PipelineConfig, resume: bool) -> Result<StageStatus> {
    let stage = Stage::new(FEM, &cfg.out, cfg.seed, &cfg.fem, &[DATASET])?;
    let campaign = stage.config_hash.clone();
    let data_dir = cfg.out.join(DATASET);
    stage.run(resume, |dir| {
        let jobs_dir = dir.join("jobs");
        let curves_dir = dir.join("curves");
        let stamp = dir.join("campaign.json");
        let same = read_json::<String>(&stamp).is_ok_and(|h| h == campaign);
        if !same {
            for d in [&jobs_dir, &curves_dir] {
                if d.exists() {
                    fs::remove_dir_all(d)?;
                }
            }
        }
        fs::create_dir_all(&jobs_dir)?;
        fs::create_dir_all(&curves_dir)?;
        write_json(&stamp, &campaign)?;
        let (manifest, images) = dataset::read_dataset(&data_dir)?;
        let subset = fem_subset(manifest.count, cfg.fem.images, cfg.seed)?;
        write_json(&dir.join("subset.json"), &subset)?;
        let pairs: Vec<(usize, DeformationMode)> =
            subset.iter().flat_map(|&i| cfg.fem.modes.iter().map(move |&m| (i, m))).collect();
        let todo: Vec<(usize, DeformationMode)> = pairs
            .iter()
            .copied()
            .filter(|&(i, m)| read_json::<FemJob>(&jobs_dir.join(job_file(i, m))).is_err())
            .collect();
        if todo.len() < pairs.len() {
            eprintln!("[fem] resuming: {} of {} pairs already done", pairs.len() - todo.len(), pairs.len());
        }
        let done = AtomicUsize::new(pairs.len() - todo.len());
        let results = par_map(&todo, worker_count(), |_, &(i, mode)| -> Result<()> {
            let job = match cpfem::simulate(&images[i], mode, &cfg.fem.solver) {
                Ok(out) => {
                    write_curve_csv(&curves_dir.join(curve_file_name(i, mode)), &out)?;
                    FemJob {
                        image_index: i,
                        mode_code: mode.code(),
                        row: Some(PropsRow::from_output(i, &out)),
                        steps: out.steps,
                        error: None,
                    }
                }
                Err(e) => FemJob {
                    image_index: i,
                    mode_code: mode.code(),
                    row: None,
                    steps: 0,
                    error: Some(e.to_string()),
                },
            };
            // Job file last, so a present job file implies a complete pair.
            write_json(&jobs_dir.join(job_file(i, mode)), &job)?;
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if n % 20 == 0 || n == pairs.len() {
                eprintln!("[fem] {n}/{} pairs", pairs.len());
            }
            Ok(())
        });
        results.into_iter().collect::<Result<Vec<()>>>()?;
        let mut rows = Vec::new();
        let mut failures = Vec::new();
        for &(i, m) in &pairs {
            let job: FemJob = read_json(&jobs_dir.join(job_file(i, m)))?;
            match (job.row, job.error) {
                (Some(r), _) => {
                    if !r.necking {
                        failures.push(format!("image {i} {m}: no necking before the strain cap"));
                    }
                    rows.push(r);
                }
                (None, e) => failures.push(format!("image {i} {m}: {}", e.unwrap_or_default())),
            }
        }
        write_props_csv(&dir.join("props.csv"), &rows)?;
        Ok(failures)
    })
}

/// FEM subset and its property rows.
pub fn read_labels(root: &Path) -> Result<(Vec<usize>, Vec<PropsRow>)> {
    let subset: Vec<usize> = read_json(&root.join(FEM).join("subset.json"))?;
    let rows = read_props_csv(&root.join(FEM).join("props.csv"))?;
    Ok((subset, rows))
}

// ---------------------------------------------------------------- gan

pub fn cmd_train_gan(cfg: &PipelineConfig, resume: bool) -> Result<StageStatus> {
    let stage = Stage::new(GAN, &cfg.out, cfg.seed, &cfg.gan, &[DATASET])?;
    let data_dir = cfg.out.join(DATASET);
    stage.run(resume, |dir| {
        let (_, images) = dataset::read_dataset(&data_dir)?;
        let mut rng = Rng::new(cfg.seed).substream("gan");
        let ckpt_path = dir.join("checkpoint_generator.mfnn");
        let (gan, trace) = train_wgan(&images, &cfg.gan, &mut rng, |it, g| {
            eprintln!("[gan] iteration {it}");
            save_checkpoint(&ckpt_path, &Checkpoint::new(g.generator.clone()))
        })?;
        save_checkpoint(
            &dir.join("generator.mfnn"),
            &Checkpoint {
                network: gan.generator,
                optimizer: Some(gan.generator_opt),
                normalizer: None,
            },
        )?;
        save_checkpoint(
            &dir.join("critic.mfnn"),
            &Checkpoint {
                network: gan.critic,
                optimizer: Some(gan.critic_opt),
                normalizer: None,
            },
        )?;
        fs::remove_file(&ckpt_path)?;
        write_csv(
            &dir.join("gan_trace.csv"),
            &["iteration", "role", "loss", "wasserstein"],
            trace.iter().map(|r| {
                vec![
                    r.iteration.to_string(),
                    format!("{:?}", r.role).to_lowercase(),
                    r.loss.to_string(),
                    r.wasserstein.to_string(),
                ]
            }),
        )?;
        let slope = wasserstein_tail_slope(&trace, 0.2).ok();
        write_json(&dir.join("gan_summary.json"), &serde_json::json!({ "tail_slope": slope }))?;
        Ok(Vec::new())
    })
}

// ---------------------------------------------------------------- cnn

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct R2Row {
    pub mode: DeformationMode,
    pub r2_sigma_max: Option<f64>,
    pub r2_eps_lim: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
}

/// Images and per-mode labels (by subset position) for regressor training.
type Labelled = (Vec<MicrostructureImage>, Vec<BTreeMap<usize, MechanicalProps>>);

fn labelled_set(root: &Path, modes: &[DeformationMode]) -> Result<Labelled> {
    let (_, images) = dataset::read_dataset(&root.join(DATASET))?;
    let (subset, rows) = read_labels(root)?;
    let pos: BTreeMap<usize, usize> = subset.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let mut labels = vec![BTreeMap::new(); modes.len()];
    for r in rows.iter().filter(|r| r.necking) {
        if let (Some(&p), Some(k)) = (pos.get(&r.image_index), modes.iter().position(|m| m.code() == r.mode_code)) {
            labels[k].insert(p, r.props()?);
        }
    }
    let imgs = subset.iter().map(|&i| images[i].clone()).collect();
    Ok((imgs, labels))
}

pub fn cmd_train_cnn(cfg: &PipelineConfig, resume: bool) -> Result<StageStatus> {
    let stage = Stage::new(CNN, &cfg.out, cfg.seed, &(&cfg.cnn, &cfg.fem.modes), &[DATASET, FEM])?;
    let root = cfg.out.clone();
    stage.run(resume, |dir| {
        let (images, labels) = labelled_set(&root, &cfg.fem.modes)?;
        let split = Split::seeded(images.len(), cfg.cnn.split, &mut Rng::new(cfg.seed).substream("cnn-split"))?;
        write_json(&dir.join("split.json"), &split)?;
        let mut r2 = Vec::new();
        let mut failures = Vec::new();
        for (k, &mode) in cfg.fem.modes.iter().enumerate() {
            // Positions without a label for this mode drop out of every part.
            let keep = |v: &[usize]| v.iter().copied().filter(|p| labels[k].contains_key(p)).collect::<Vec<_>>();
            let local = Split {
                train: keep(&split.train),
                val: keep(&split.val),
                test: keep(&split.test),
            };
            let props: Vec<MechanicalProps> = (0..images.len())
                .map(|p| labels[k].get(&p).copied().unwrap_or(MechanicalProps { sigma_max: 1.0, eps_lim: 1.0, mode }))
                .collect();
            let mut rng = Rng::new(cfg.seed).substream(&format!("cnn-{}", mode.name()));
            let trained = train_cnn(&images, &props, &local, mode, &cfg.cnn, &mut rng)?;
            write_csv(
                &dir.join(mode_file("trace", mode, "csv")),
                &["iteration", "loss", "val_mse"],
                trained.trace.iter().map(|r| {
                    vec![r.iteration.to_string(), r.loss.to_string(), r.val_mse.map_or(String::new(), |v| v.to_string())]
                }),
            )?;
            let (rs, re) = match evaluate_r_squared(&trained.network, &trained.normalizer, &images, &props, &local.test) {
                Ok((a, b)) => (Some(a), Some(b)),
                Err(e) => {
                    failures.push(format!("{mode}: test R^2 unavailable: {e}"));
                    (None, None)
                }
            };
            eprintln!("[cnn] {mode}: test R^2 sigma_max {rs:?}, eps_lim {re:?}");
            r2.push(R2Row {
                mode,
                r2_sigma_max: rs,
                r2_eps_lim: re,
                n_train: local.train.len(),
                n_test: local.test.len(),
            });
            save_checkpoint(
                &dir.join(mode_file("regressor", mode, "mfnn")),
                &Checkpoint {
                    network: trained.network,
                    optimizer: Some(trained.optimizer),
                    normalizer: Some(trained.normalizer),
                },
            )?;
        }
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        write_csv(
            &dir.join("r2.csv"),
            &["mode", "r2_sigma_max", "r2_eps_lim", "n_train", "n_test"],
            r2.iter().map(|r| {
                vec![r.mode.name().to_string(), opt(r.r2_sigma_max), opt(r.r2_eps_lim), r.n_train.to_string(), r.n_test.to_string()]
            }),
        )?;
        write_json(&dir.join("r2.json"), &r2)?;
        Ok(failures)
    })
}

/// Generator and the four regressors of a finished run.
pub fn load_models(root: &Path) -> Result<TrainedModels> {
    let generator = load_checkpoint(&root.join(GAN).join("generator.mfnn"))?.network;
    let mut regressors = Vec::new();
    let mut normalizers = Vec::new();
    for mode in DeformationMode::ALL {
        let c = load_checkpoint(&root.join(CNN).join(mode_file("regressor", mode, "mfnn")))?;
        normalizers.push(
            c.normalizer
                .ok_or_else(|| Error::Format(format!("{mode} regressor checkpoint has no normalizer")))?,
        );
        regressors.push(c.network);
    }
    TrainedModels::new(generator, regressors, normalizers)
}

// ---------------------------------------------------------------- search

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub iterations: usize,
    pub best_z: [f64; 2],
    pub best_mode: DeformationMode,
    pub best_score: f64,
    pub predicted: Option<MechanicalProps>,
    pub martensite_fraction: Option<f64>,
}

pub fn cmd_search(cfg: &PipelineConfig, resume: bool) -> Result<StageStatus> {
    let stage = Stage::new(SEARCH, &cfg.out, cfg.seed, &cfg.search, &[GAN, CNN])?;
    let root = cfg.out.clone();
    stage.run(resume, |dir| {
        let models = load_models(&root)?;
        let mut rng = Rng::new(cfg.seed).substream("search");
        let result = random_search(cfg.search.iterations, &models, &mut rng)?;
        write_trace_csv(&dir.join("search_trace.csv"), &result)?;
        write_csv(
            &dir.join("search_props.csv"),
            &["iteration", "mode", "sigma_max_MPa", "eps_lim"],
            result.trace.iter().flat_map(|r| {
                r.props.into_iter().flatten().map(move |p| {
                    vec![r.iteration.to_string(), p.mode.code().to_string(), p.sigma_max.to_string(), p.eps_lim.to_string()]
                })
            }),
        )?;
        let image = result
            .best_image
            .clone()
            .ok_or_else(|| Error::State("search produced no image".into()))?;
        dataset::write_image(&dir.join("best.lbl"), &image)?;
        fs::write(dir.join("best.ppm"), image.to_ppm(8))?;
        let summary = SearchSummary {
            iterations: cfg.search.iterations,
            best_z: result.best_z,
            best_mode: result.best_mode,
            best_score: result.best_score,
            predicted: result.best_props,
            martensite_fraction: Some(image.martensite_fraction()),
        };
        write_json(&dir.join("result.json"), &summary)?;
        fs::write(dir.join("report.md"), search_report(&summary))?;
        let map = heatmap_scores(&models, cfg.search.heatmap_resolution)?;
        for mode in DeformationMode::ALL {
            write_heatmap_csv(&dir.join(mode_file("heatmap", mode, "csv")), &map, mode)?;
        }
        Ok(Vec::new())
    })
}

pub fn search_report(s: &SearchSummary) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "# Search result\n");
    let _ = writeln!(t, "| field | value |\n|---|---|");
    let _ = writeln!(t, "| iterations | {} |", s.iterations);
    let _ = writeln!(t, "| z | ({:.4}, {:.4}) |", s.best_z[0], s.best_z[1]);
    let _ = writeln!(t, "| mode | {} |", s.best_mode);
    if let Some(p) = s.predicted {
        let _ = writeln!(t, "| sigma_max (MPa) | {:.1} |", p.sigma_max);
        let _ = writeln!(t, "| eps_lim | {:.4} |", p.eps_lim);
    }
    let _ = writeln!(t, "| product | {:.4} |", s.best_score);
    if let Some(f) = s.martensite_fraction {
        let _ = writeln!(t, "| martensite fraction | {f:.4} |");
    }
    t
}

// ---------------------------------------------------------------- verify

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub mode: DeformationMode,
    pub cnn: MechanicalProps,
    pub fem: MechanicalProps,
    pub necking_detected: bool,
    pub rel_err_sigma_max: f64,
    /// Absent when the FEM curve did not neck.
    pub rel_err_eps_lim: Option<f64>,
    pub cnn_score: f64,
    pub fem_score: Option<f64>,
    pub rel_err_score: Option<f64>,
}

/// Compares a prediction with a FEM result for the same image and mode.
pub fn compare_prediction(
    predicted: &MechanicalProps,
    fem: &MechanicalProps,
    necking_detected: bool,
    normalizer: &Normalizer,
) -> Result<VerifyReport> {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let cnn_score = search::score(predicted, normalizer)?;
    let (rel_eps, fem_score, rel_score) = if necking_detected {
        let fs = search::score(fem, normalizer)?;
        let rs = if fs != 0.0 { Some(rel(cnn_score, fs)) } else { None };
        (Some(rel(predicted.eps_lim, fem.eps_lim)), Some(fs), rs)
    } else {
        (None, None, None)
    };
    Ok(VerifyReport {
        mode: fem.mode,
        cnn: *predicted,
        fem: *fem,
        necking_detected,
        rel_err_sigma_max: rel(predicted.sigma_max, fem.sigma_max),
        rel_err_eps_lim: rel_eps,
        cnn_score,
        fem_score,
        rel_err_score: rel_score,
    })
}

pub fn cmd_verify(cfg: &PipelineConfig, resume: bool) -> Result<StageStatus> {
    let stage = Stage::new(VERIFY, &cfg.out, cfg.seed, &cfg.fem.solver, &[SEARCH, CNN])?;
    let root = cfg.out.clone();
    stage.run(resume, |dir| {
        let summary: SearchSummary = read_json(&root.join(SEARCH).join("result.json"))?;
        let image = dataset::read_image(&root.join(SEARCH).join("best.lbl"), 32, 32)?;
        let models = load_models(&root)?;
        let mode = summary.best_mode;
        let predicted = nn::predict_props(
            &models.regressors[mode.index()],
            &models.normalizers[mode.index()],
            &image,
        )?;
        let out = cpfem::simulate(&image, mode, &cfg.fem.solver)?;
        write_curve_csv(&dir.join("curve_best.csv"), &out)?;
        let report = compare_prediction(&predicted, &out.props, out.necking_detected, &models.normalizers[mode.index()])?;
        write_json(&dir.join("verify.json"), &report)?;
        fs::write(dir.join("verify.md"), verify_markdown(&report))?;
        let mut failures = Vec::new();
        if !out.necking_detected {
            failures.push("FEM curve did not neck; only sigma_max compared".into());
        }
        Ok(failures)
    })
}

pub fn verify_markdown(r: &VerifyReport) -> String {
    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{:.2}%", 100.0 * x));
    let mut t = String::new();
    let _ = writeln!(t, "# Verification ({})\n", r.mode);
    let _ = writeln!(t, "| | CNN | FEM | relative error |\n|---|---|---|---|");
    let _ = writeln!(
        t,
        "| sigma_max (MPa) | {:.1} | {:.1} | {} |",
        r.cnn.sigma_max,
        r.fem.sigma_max,
        pct(Some(r.rel_err_sigma_max))
    );
    let _ = writeln!(t, "| eps_lim | {:.4} | {:.4} | {} |", r.cnn.eps_lim, r.fem.eps_lim, pct(r.rel_err_eps_lim));
    let _ = writeln!(
        t,
        "| product | {:.4} | {} | {} |",
        r.cnn_score,
        r.fem_score.map_or("n/a".into(), |v| format!("{v:.4}")),
        pct(r.rel_err_score)
    );
    if !r.necking_detected {
        let _ = writeln!(t, "\nFEM run ended before necking; eps_lim and product are not compared.");
    }
    t
}

// ---------------------------------------------------------------- compare

pub fn cmd_compare_sampling(cfg: &PipelineConfig, resume: bool) -> Result<StageStatus> {
    let stage = Stage::new(COMPARE, &cfg.out, cfg.seed, &cfg.search, &[GAN, CNN])?;
    let root = cfg.out.clone();
    stage.run(resume, |dir| {
        let models = load_models(&root)?;
        let reference = random_search(
            cfg.search.reference_points,
            &models,
            &mut Rng::new(cfg.seed).substream("compare-reference"),
        )?
        .best_score;
        let rows = compare_sampling(
            &cfg.search.compare_points,
            cfg.search.compare_repeats,
            reference,
            &models,
            &mut Rng::new(cfg.seed).substream("compare"),
        )?;
        write_compare_csv(&dir.join("compare.csv"), &rows)?;
        write_json(&dir.join("reference.json"), &serde_json::json!({ "reference_best": reference }))?;
        Ok(Vec::new())
    })
}

// ---------------------------------------------------------------- report

/// Indices whose fraction lies within `window` of `target`.
pub fn matched_fraction(fractions: &[f64], target: f64, window: f64) -> Vec<usize> {
    fractions
        .iter()
        .enumerate()
        .filter(|(_, &f)| (f - target).abs() <= window)
        .map(|(i, _)| i)
        .collect()
}

/// Writes whatever the finished stages allow and lists what is missing.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<Vec<String>> {
    let root = &cfg.out;
    let dir = root.join(REPORT);
    if dir.exists() {
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;
    let mut missing = Vec::new();
    let mut md = String::from("# Run report\n");

    let fractions: Option<Vec<f64>> = dataset::read_dataset(&root.join(DATASET))
        .map(|(_, imgs)| imgs.iter().map(MicrostructureImage::martensite_fraction).collect())
        .map_err(|e| missing.push(format!("dataset: {e}")))
        .ok();
    let labels = read_labels(root).map_err(|e| missing.push(format!("fem: {e}"))).ok();

    let _ = writeln!(md, "\n## Strength and ductility per mode\n");
    if let (Some(fr), Some((_, rows))) = (&fractions, &labels) {
        let _ = writeln!(md, "| mode | samples | sigma_max range (MPa) | eps_lim range |\n|---|---|---|---|");
        for mode in DeformationMode::ALL {
            let sel: Vec<&PropsRow> = rows.iter().filter(|r| r.mode_code == mode.code()).collect();
            write_csv(
                &dir.join(mode_file("scatter", mode, "csv")),
                &["image_index", "martensite_fraction", "sigma_max_MPa", "eps_lim", "necking"],
                sel.iter().map(|r| {
                    vec![
                        r.image_index.to_string(),
                        fr.get(r.image_index).map_or(String::new(), |f| f.to_string()),
                        r.sigma_max_mpa.to_string(),
                        r.eps_lim.to_string(),
                        r.necking.to_string(),
                    ]
                }),
            )?;
            let range = |f: fn(&PropsRow) -> f64| {
                let lo = sel.iter().map(|r| f(r)).fold(f64::INFINITY, f64::min);
                let hi = sel.iter().map(|r| f(r)).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            };
            let (s0, s1) = range(|r| r.sigma_max_mpa);
            let (e0, e1) = range(|r| r.eps_lim);
            let _ = writeln!(md, "| {mode} | {} | {s0:.1} to {s1:.1} | {e0:.4} to {e1:.4} |", sel.len());
        }
    } else {
        let _ = writeln!(md, "_not available_");
    }

    let _ = writeln!(md, "\n## Regressor test R^2\n");
    match read_json::<Vec<R2Row>>(&root.join(CNN).join("r2.json")) {
        Ok(r2) => {
            let f = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{x:.3}"));
            let _ = writeln!(md, "| mode | sigma_max | eps_lim | test images |\n|---|---|---|---|");
            for r in &r2 {
                let _ = writeln!(md, "| {} | {} | {} | {} |", r.mode, f(r.r2_sigma_max), f(r.r2_eps_lim), r.n_test);
            }
            fs::copy(root.join(CNN).join("r2.csv"), dir.join("r2.csv"))?;
        }
        Err(e) => {
            missing.push(format!("cnn: {e}"));
            let _ = writeln!(md, "_not available_");
        }
    }

    let _ = writeln!(md, "\n## Proposed microstructure\n");
    let search: Option<SearchSummary> =
        read_json(&root.join(SEARCH).join("result.json")).map_err(|e| missing.push(format!("search: {e}"))).ok();
    let verify: Option<VerifyReport> =
        read_json(&root.join(VERIFY).join("verify.json")).map_err(|e| missing.push(format!("verify: {e}"))).ok();
    match &search {
        Some(s) => md.push_str(&search_report(s).replace("# Search result\n", "")),
        None => md.push_str("_not available_\n"),
    }
    if let Some(v) = &verify {
        md.push('\n');
        md.push_str(&verify_markdown(v).replace(&format!("# Verification ({})\n", v.mode), ""));
    }

    let _ = writeln!(md, "\n## Trade-off at matched martensite fraction\n");
    match (&search, &verify, &fractions, &labels) {
        (Some(s), Some(v), Some(fr), Some((subset, rows))) if s.martensite_fraction.is_some() => {
            let target = s.martensite_fraction.unwrap();
            let labelled: Vec<f64> = subset.iter().map(|&i| fr[i]).collect();
            let picks = matched_fraction(&labelled, target, cfg.search.fraction_window);
            let mut out = vec![vec![
                "proposed".into(),
                String::new(),
                target.to_string(),
                v.fem.sigma_max.to_string(),
                v.fem.eps_lim.to_string(),
            ]];
            for p in &picks {
                let i = subset[*p];
                if let Some(r) = rows.iter().find(|r| r.image_index == i && r.mode_code == s.best_mode.code()) {
                    out.push(vec![
                        "dataset".into(),
                        i.to_string(),
                        fr[i].to_string(),
                        r.sigma_max_mpa.to_string(),
                        r.eps_lim.to_string(),
                    ]);
                }
            }
            let _ = writeln!(
                md,
                "{} labelled dataset images within {} of fraction {target:.3} under {}; see tradeoff.csv.",
                out.len() - 1,
                cfg.search.fraction_window,
                s.best_mode
            );
            write_csv(
                &dir.join("tradeoff.csv"),
                &["kind", "image_index", "martensite_fraction", "sigma_max_MPa", "eps_lim"],
                out,
            )?;
        }
        _ => {
            let _ = writeln!(md, "_not available_");
        }
    }

    let _ = writeln!(md, "\n## Sampling comparison\n");
    let cmp = root.join(COMPARE).join("compare.csv");
    if cmp.exists() {
        fs::copy(&cmp, dir.join("compare.csv"))?;
        let mut rd = csv::Reader::from_path(&cmp).map_err(search::csv_err)?;
        let rows: Vec<CompareRow> = rd.deserialize().collect::<std::result::Result<_, _>>().map_err(search::csv_err)?;
        let _ = writeln!(md, "Error of the best score against the reference search, mean (sd) over repeats.\n");
        let _ = writeln!(md, "| points | random | space filling |\n|---|---|---|");
        for r in rows.iter().filter(|r| r.strategy == Strategy::Random) {
            let other = rows.iter().find(|o| o.n_points == r.n_points && o.strategy == Strategy::SpaceFilling);
            let cell = |c: Option<&CompareRow>| c.map_or("n/a".into(), |c| format!("{:.4} ({:.4})", c.mean_error, c.std_error));
            let _ = writeln!(md, "| {} | {} | {} |", r.n_points, cell(Some(r)), cell(other));
        }
    } else {
        missing.push(format!("compare: missing artifact: {}", cmp.display()));
        let _ = writeln!(md, "_not available_");
    }

    if !missing.is_empty() {
        let _ = writeln!(md, "\n## Missing artifacts\n");
        for m in &missing {
            let _ = writeln!(md, "- {m}");
        }
    }
    fs::write(dir.join("report.md"), md)?;
    Ok(missing)
}

/// Every stage in order.
pub fn run_all(cfg: &PipelineConfig, resume: bool) -> Result<()> {
    cmd_gen_dataset(cfg, resume)?;
    cmd_fem_batch(cfg, resume)?;
    cmd_train_gan(cfg, resume)?;
    cmd_train_cnn(cfg, resume)?;
    cmd_search(cfg, resume)?;
    cmd_verify(cfg, resume)?;
    cmd_compare_sampling(cfg, resume)?;
    cmd_report(cfg)?;
    Ok(())
}
