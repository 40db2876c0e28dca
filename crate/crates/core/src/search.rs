//! Latent-space search: score microstructures by the normalized
//! strength-ductility product, random search, space-filling plans and the
//! sampling comparison.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::micro::MicrostructureImage;
use crate::mode::{DeformationMode, MechanicalProps};
use crate::nn::{self, Network, Normalizer, Tensor, LATENT_DIM, LATENT_MAX};
use crate::rng::Rng;

pub const NUM_MODES: usize = 4;

/// Normalized strength-ductility product. Each normalized factor is
/// clamped at zero, so the score is never negative.
pub fn score(props: &MechanicalProps, normalizer: &Normalizer) -> Result<f64> {
    if props.mode != normalizer.mode {
        return Err(Error::Config(format!(
            "normalizer fitted for {} cannot score {}",
            normalizer.mode, props.mode
        )));
    }
    normalizer.validate()?;
    Ok(normalized_score(normalizer.normalize(props)))
}

pub fn normalized_score(y: [f64; 2]) -> f64 {
    y[0].max(0.0) * y[1].max(0.0)
}

/// First index of the largest score; ties go to the lower mode code.
pub fn best_mode(scores: &[f64; NUM_MODES]) -> DeformationMode {
    let mut best = 0;
    for i in 1..NUM_MODES {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    DeformationMode::ALL[best]
}

/// One latent point pushed through the surrogates.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub image: Option<MicrostructureImage>,
    /// Predicted properties per mode, when the surrogate produces them.
    pub props: Option<[MechanicalProps; NUM_MODES]>,
    pub scores: [f64; NUM_MODES],
}

impl Evaluation {
    pub fn best_mode(&self) -> DeformationMode {
        best_mode(&self.scores)
    }

    pub fn best_score(&self) -> f64 {
        self.scores[self.best_mode().index()]
    }
}

/// Anything that maps a latent point to per-mode scores.
pub trait Surrogate {
    fn evaluate(&self, z: [f64; 2]) -> Result<Evaluation>;

    fn evaluate_many(&self, zs: &[[f64; 2]]) -> Result<Vec<Evaluation>> {
        zs.iter().map(|&z| self.evaluate(z)).collect()
    }
}

fn check_latent(z: [f64; 2]) -> Result<()> {
    nn::latent_input(z).map(|_| ())
}

/// Generator plus one regressor and normalizer per mode, in mode-code order.
#[derive(Clone, Debug)]
pub struct TrainedModels {
    pub generator: Network,
    pub regressors: Vec<Network>,
    pub normalizers: Vec<Normalizer>,
}

impl TrainedModels {
    pub fn new(generator: Network, regressors: Vec<Network>, normalizers: Vec<Normalizer>) -> Result<Self> {
        if regressors.len() != NUM_MODES || normalizers.len() != NUM_MODES {
            return Err(Error::Config(format!(
                "need {NUM_MODES} regressors and normalizers, got {} and {}",
                regressors.len(),
                normalizers.len()
            )));
        }
        for (mode, n) in DeformationMode::ALL.iter().zip(&normalizers) {
            if n.mode != *mode {
                return Err(Error::Config(format!("normalizer in slot {mode} was fitted for {}", n.mode)));
            }
            n.validate()?;
        }
        Ok(Self {
            generator,
            regressors,
            normalizers,
        })
    }
}

/// Batch size used to push latent points through the networks.
const CHUNK: usize = 64;

impl Surrogate for TrainedModels {
    fn evaluate(&self, z: [f64; 2]) -> Result<Evaluation> {
        Ok(self.evaluate_many(&[z])?.remove(0))
    }

    fn evaluate_many(&self, zs: &[[f64; 2]]) -> Result<Vec<Evaluation>> {
        let mut out = Vec::with_capacity(zs.len());
        for chunk in zs.chunks(CHUNK) {
            let mut input = Vec::with_capacity(chunk.len() * LATENT_DIM);
            for z in chunk {
                input.extend(nn::latent_input(*z)?);
            }
            let soft = self.generator.infer(&Tensor::from_vec(&[chunk.len(), LATENT_DIM], input)?)?;
            let (h, w) = (soft.shape()[1], soft.shape()[2]);
            let per = soft.len() / chunk.len();
            let images = soft
                .data()
                .chunks(per)
                .map(|s| MicrostructureImage::from_channel_scores(w, h, s))
                .collect::<Result<Vec<_>>>()?;
            let mut hot = Vec::with_capacity(soft.len());
            for img in &images {
                hot.extend(img.one_hot());
            }
            let x = Tensor::from_vec(&[chunk.len(), h, w, 3], hot)?;
            let outputs = self.regressors.iter().map(|r| r.infer(&x)).collect::<Result<Vec<_>>>()?;
            for (k, image) in images.into_iter().enumerate() {
                let mut scores = [0.0; NUM_MODES];
                let mut props = Vec::with_capacity(NUM_MODES);
                for (m, y) in outputs.iter().enumerate() {
                    let y = [y.data()[2 * k], y.data()[2 * k + 1]];
                    scores[m] = normalized_score(y);
                    let (s, e) = self.normalizers[m].denormalize(y);
                    props.push(MechanicalProps {
                        sigma_max: s,
                        eps_lim: e,
                        mode: DeformationMode::ALL[m],
                    });
                }
                out.push(Evaluation {
                    image: Some(image),
                    props: Some(props.try_into().unwrap()),
                    scores,
                });
            }
        }
        Ok(out)
    }
}

/// Analytic surrogate: the same score for every mode, `1 - |z - c|^2 / 5000`
/// with `c = (50, 50)`. Its grid maximum is 1 at the centre.
#[derive(Clone, Copy, Debug, Default)]
pub struct QuadraticStub;

impl Surrogate for QuadraticStub {
    fn evaluate(&self, z: [f64; 2]) -> Result<Evaluation> {
        check_latent(z)?;
        let s = 1.0 - ((z[0] - 50.0).powi(2) + (z[1] - 50.0).powi(2)) / 5000.0;
        Ok(Evaluation {
            image: None,
            props: None,
            scores: [s; NUM_MODES],
        })
    }
}

/// Fixed per-mode scores regardless of `z`.
#[derive(Clone, Copy, Debug)]
pub struct ConstantStub(pub [f64; NUM_MODES]);

impl Surrogate for ConstantStub {
    fn evaluate(&self, z: [f64; 2]) -> Result<Evaluation> {
        check_latent(z)?;
        Ok(Evaluation {
            image: None,
            props: None,
            scores: self.0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub z: [f64; 2],
    pub scores: [f64; NUM_MODES],
    pub best_so_far: f64,
    pub best_mode: DeformationMode,
    #[serde(skip)]
    pub props: Option<[MechanicalProps; NUM_MODES]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub best_image: Option<MicrostructureImage>,
    pub best_mode: DeformationMode,
    pub best_score: f64,
    pub best_z: [f64; 2],
    pub best_props: Option<MechanicalProps>,
    pub trace: Vec<TraceRow>,
}

fn uniform_latent(rng: &mut Rng) -> [f64; 2] {
    [rng.uniform_in(0.0, LATENT_MAX), rng.uniform_in(0.0, LATENT_MAX)]
}

/// Best of `points` under strict improvement, with the full trace.
pub fn search_points(model: &dyn Surrogate, points: &[[f64; 2]]) -> Result<SearchResult> {
    if points.is_empty() {
        return Err(Error::Config("search needs at least one point".into()));
    }
    let mut best: Option<(usize, Evaluation)> = None;
    let mut trace = Vec::with_capacity(points.len());
    for (chunk_start, chunk) in points.chunks(CHUNK).enumerate().map(|(i, c)| (i * CHUNK, c)) {
        for (k, eval) in model.evaluate_many(chunk)?.into_iter().enumerate() {
            let i = chunk_start + k;
            if best.as_ref().is_none_or(|(_, b)| eval.best_score() > b.best_score()) {
                best = Some((i, eval.clone()));
            }
            let (_, b) = best.as_ref().unwrap();
            trace.push(TraceRow {
                iteration: i + 1,
                z: points[i],
                scores: eval.scores,
                best_so_far: b.best_score(),
                best_mode: b.best_mode(),
                props: eval.props,
            });
        }
    }
    let (i, b) = best.unwrap();
    let mode = b.best_mode();
    Ok(SearchResult {
        best_image: b.image.clone(),
        best_mode: mode,
        best_score: b.best_score(),
        best_z: points[i],
        best_props: b.props.map(|p| p[mode.index()]),
        trace,
    })
}

/// `n_iter` uniform draws on `[0, 100]^2`.
pub fn random_search(n_iter: usize, model: &dyn Surrogate, rng: &mut Rng) -> Result<SearchResult> {
    if n_iter == 0 {
        return Err(Error::Config("random search needs at least one iteration".into()));
    }
    let points: Vec<[f64; 2]> = (0..n_iter).map(|_| uniform_latent(rng)).collect();
    search_points(model, &points)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    SpaceFilling,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::SpaceFilling => "space_filling",
        }
    }
}

/// Space-filling points on `[0, 100]^2`. A perfect square `n = k^2` gives
/// the `k x k` cell centres; otherwise one point per row and column stratum
/// of an `n x n` grid, paired by a permutation drawn from `seed`.
pub fn space_filling_plan(n: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
    if n == 0 {
        return Err(Error::Config("a plan needs at least one point".into()));
    }
    let k = (n as f64).sqrt().round() as usize;
    if k * k == n {
        let step = LATENT_MAX / k as f64;
        return Ok((0..k)
            .flat_map(|i| (0..k).map(move |j| [(i as f64 + 0.5) * step, (j as f64 + 0.5) * step]))
            .collect());
    }
    let step = LATENT_MAX / n as f64;
    let perm = Rng::new(seed).permutation(n);
    Ok(perm
        .iter()
        .enumerate()
        .map(|(i, &j)| [(i as f64 + 0.5) * step, (j as f64 + 0.5) * step])
        .collect())
}

/// Smallest Euclidean distance between two points of `pts`.
pub fn min_pairwise_distance(pts: &[[f64; 2]]) -> f64 {
    let mut d = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d = d.min((pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]));
        }
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub n_points: usize,
    pub strategy: Strategy,
    pub mean_error: f64,
    pub std_error: f64,
}

/// For each `n` and strategy, mean and sample standard deviation over
/// `repeats` of `reference - best found`. Random repeats draw fresh points;
/// space-filling repeats vary the stratum pairing (square `n` repeats the
/// same grid).
pub fn compare_sampling(
    ns: &[usize],
    repeats: usize,
    reference: f64,
    model: &dyn Surrogate,
    rng: &mut Rng,
) -> Result<Vec<CompareRow>> {
    if repeats == 0 {
        return Err(Error::Config("need at least one repeat".into()));
    }
    let mut rows = Vec::with_capacity(ns.len() * 2);
    for &n in ns {
        for strategy in [Strategy::Random, Strategy::SpaceFilling] {
            let mut errs = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                let best = match strategy {
                    Strategy::Random => random_search(n, model, rng)?.best_score,
                    Strategy::SpaceFilling => {
                        let seed = rng.next_seed();
                        search_points(model, &space_filling_plan(n, seed)?)?.best_score
                    }
                };
                errs.push(reference - best);
            }
            let mean = errs.iter().sum::<f64>() / repeats as f64;
            let var = if repeats > 1 {
                errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64
            } else {
                0.0
            };
            rows.push(CompareRow {
                n_points: n,
                strategy,
                mean_error: mean,
                std_error: var.sqrt(),
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub resolution: usize,
    /// Row-major over `(z0, z1)`, `z1` fastest.
    pub points: Vec<[f64; 2]>,
    pub scores: Vec<[f64; NUM_MODES]>,
}

impl Heatmap {
    /// Largest score over all points and modes, with its point and mode.
    pub fn max(&self) -> ([f64; 2], DeformationMode, f64) {
        let mut best = (self.points[0], DeformationMode::TensileX, f64::NEG_INFINITY);
        for (p, s) in self.points.iter().zip(&self.scores) {
            let m = best_mode(s);
            if s[m.index()] > best.2 {
                best = (*p, m, s[m.index()]);
            }
        }
        best
    }
}

/// Per-mode scores on a `resolution x resolution` grid spanning
/// `[0, 100]^2` including the edges.
pub fn heatmap_scores(model: &dyn Surrogate, resolution: usize) -> Result<Heatmap> {
    if resolution < 2 {
        return Err(Error::Config(format!("heatmap resolution {resolution} must be at least 2")));
    }
    let step = LATENT_MAX / (resolution - 1) as f64;
    let points: Vec<[f64; 2]> = (0..resolution)
        .flat_map(|i| (0..resolution).map(move |j| [i as f64 * step, j as f64 * step]))
        .collect();
    let mut scores = Vec::with_capacity(points.len());
    for chunk in points.chunks(4096) {
        scores.extend(model.evaluate_many(chunk)?.into_iter().map(|e| e.scores));
    }
    Ok(Heatmap {
        resolution,
        points,
        scores,
    })
}

pub fn write_trace_csv(path: &Path, result: &SearchResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "iteration",
        "z0",
        "z1",
        "score_mode0",
        "score_mode1",
        "score_mode2",
        "score_mode3",
        "best_so_far",
        "best_mode",
    ])
    .map_err(csv_err)?;
    for r in &result.trace {
        let mut rec = vec![r.iteration.to_string(), r.z[0].to_string(), r.z[1].to_string()];
        rec.extend(r.scores.iter().map(f64::to_string));
        rec.push(r.best_so_far.to_string());
        rec.push(r.best_mode.code().to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_compare_csv(path: &Path, rows: &[CompareRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["n_points", "strategy", "mean_error", "std_error"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.n_points.to_string(),
            r.strategy.name().to_string(),
            r.mean_error.to_string(),
            r.std_error.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One `z0,z1,score` file for `mode`.
pub fn write_heatmap_csv(path: &Path, map: &Heatmap, mode: DeformationMode) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["z0", "z1", "score"]).map_err(csv_err)?;
    for (p, s) in map.points.iter().zip(&map.scores) {
        w.write_record([p[0].to_string(), p[1].to_string(), s[mode.index()].to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}
