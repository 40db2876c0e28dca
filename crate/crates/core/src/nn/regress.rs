//! Per-mode property regressors: target normalization, the train/val/test
//! split, training and prediction.

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::network::{Architecture, Network};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::micro::MicrostructureImage;
use crate::mode::{DeformationMode, MechanicalProps};
use crate::rng::Rng;

/// Min-max scaling of `(sigma_max, eps_lim)` for one mode, fitted on a
/// training split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mode: DeformationMode,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub eps_min: f64,
    pub eps_max: f64,
}

impl Normalizer {
    /// Fits on `props`, all of which must belong to `mode`. A quantity with
    /// no spread gets a unit-width range starting at its value so that
    /// `max > min` always holds.
    pub fn fit(mode: DeformationMode, props: &[MechanicalProps]) -> Result<Self> {
        if props.is_empty() {
            return Err(Error::Config("cannot fit a normalizer on an empty set".into()));
        }
        if let Some(p) = props.iter().find(|p| p.mode != mode) {
            return Err(Error::Config(format!("normalizer for {mode} given a {} sample", p.mode)));
        }
        let range = |f: fn(&MechanicalProps) -> f64| {
            let lo = props.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = props.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi)
            } else {
                (lo, lo + 1.0)
            }
        };
        let (sigma_min, sigma_max) = range(|p| p.sigma_max);
        let (eps_min, eps_max) = range(|p| p.eps_lim);
        Ok(Self {
            mode,
            sigma_min,
            sigma_max,
            eps_min,
            eps_max,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && hi > lo;
        if !ok(self.sigma_min, self.sigma_max) || !ok(self.eps_min, self.eps_max) {
            return Err(Error::Config(format!("normalizer for {} needs finite max > min", self.mode)));
        }
        Ok(())
    }

    pub fn normalize(&self, props: &MechanicalProps) -> [f64; 2] {
        [
            (props.sigma_max - self.sigma_min) / (self.sigma_max - self.sigma_min),
            (props.eps_lim - self.eps_min) / (self.eps_max - self.eps_min),
        ]
    }

    /// Physical `(sigma_max, eps_lim)` from normalized values.
    pub fn denormalize(&self, y: [f64; 2]) -> (f64, f64) {
        (
            self.sigma_min + y[0] * (self.sigma_max - self.sigma_min),
            self.eps_min + y[1] * (self.eps_max - self.eps_min),
        )
    }
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r_squared(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if targets.len() < 2 {
        return Err(Error::Undefined("R^2 needs at least two samples".into()));
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined("R^2 of constant targets".into()));
    }
    let ss_res: f64 = predictions.iter().zip(targets).map(|(p, t)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Disjoint index sets into one labelled image set, shared by all modes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Seeded shuffle of `0..n`, cut into consecutive runs of the given
    /// sizes. Indices beyond the three runs are left out.
    pub fn seeded(n: usize, sizes: [usize; 3], rng: &mut Rng) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(Error::Config(format!("every split needs at least one sample, got {sizes:?}")));
        }
        let need: usize = sizes.iter().sum();
        if need > n {
            return Err(Error::Config(format!("split {sizes:?} needs {need} samples, have {n}")));
        }
        let p = rng.permutation(n);
        Ok(Self {
            train: p[..sizes[0]].to_vec(),
            val: p[sizes[0]..sizes[0] + sizes[1]].to_vec(),
            test: p[sizes[0] + sizes[1]..need].to_vec(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub batch_tensile: usize,
    pub batch_shear: usize,
    pub split: [usize; 3],
    pub conv_widths: [usize; 2],
    pub hidden: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            iterations: 1200,
            learning_rate: 1e-4,
            batch_tensile: 1,
            batch_shear: 4,
            split: [96, 10, 10],
            conv_widths: [8, 16],
            hidden: 64,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_tensile == 0 || self.batch_shear == 0 {
            return Err(Error::Config("iterations and batch sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.conv_widths.contains(&0) || self.hidden == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn batch_size(&self, mode: DeformationMode) -> usize {
        if mode.is_shear() {
            self.batch_shear
        } else {
            self.batch_tensile
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub iteration: usize,
    pub loss: f64,
    /// Set on the iteration that completes an epoch.
    pub val_mse: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainedRegressor {
    pub network: Network,
    pub optimizer: Adam,
    pub normalizer: Normalizer,
    pub trace: Vec<LossRow>,
}

fn stack(images: &[&MicrostructureImage]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::Usage("cannot stack an empty batch".into()))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(images.len() * w * h * 3);
    for img in images {
        if img.width() != w || img.height() != h {
            return Err(Error::Dimension("images in one batch differ in size".into()));
        }
        data.extend(img.one_hot());
    }
    Tensor::from_vec(&[images.len(), h, w, 3], data)
}

fn mse(net: &Network, inputs: &Tensor, targets: &[[f64; 2]]) -> Result<f64> {
    let y = net.infer(inputs)?;
    let t = targets.iter().flatten();
    Ok(y.data().iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

/// Trains one regressor for `mode` on `labels[i]` of `images[i]`, using
/// `split.train` for fitting and the normalizer and `split.val` for the
/// per-epoch validation error.
pub fn train_cnn(
    images: &[MicrostructureImage],
    labels: &[MechanicalProps],
    split: &Split,
    mode: DeformationMode,
    cfg: &CnnConfig,
    rng: &mut Rng,
) -> Result<TrainedRegressor> {
    cfg.validate()?;
    if images.len() != labels.len() {
        return Err(Error::Dimension(format!("{} images but {} labels", images.len(), labels.len())));
    }
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Config("training and validation splits must be non-empty".into()));
    }
    if let Some(&i) = split.train.iter().chain(&split.val).find(|&&i| i >= images.len()) {
        return Err(Error::Config(format!("split index {i} out of range")));
    }
    let train_props: Vec<MechanicalProps> = split.train.iter().map(|&i| labels[i]).collect();
    let normalizer = Normalizer::fit(mode, &train_props)?;
    let targets: Vec<[f64; 2]> = labels.iter().map(|p| normalizer.normalize(p)).collect();

    let arch = Architecture::regressor(cfg.conv_widths[0], cfg.conv_widths[1], cfg.hidden);
    let mut net = Network::new(&arch, rng)?;
    let mut adam = Adam::new(cfg.learning_rate);

    let val_refs: Vec<&MicrostructureImage> = split.val.iter().map(|&i| &images[i]).collect();
    let val_x = stack(&val_refs)?;
    let val_t: Vec<[f64; 2]> = split.val.iter().map(|&i| targets[i]).collect();

    let batch = cfg.batch_size(mode).min(split.train.len());
    let mut order = split.train.clone();
    rng.shuffle(&mut order);
    let mut cursor = 0;
    let mut trace = Vec::with_capacity(cfg.iterations);
    for iteration in 1..=cfg.iterations {
        let idx: Vec<usize> = (0..batch).map(|k| order[(cursor + k) % order.len()]).collect();
        cursor += batch;
        let refs: Vec<&MicrostructureImage> = idx.iter().map(|&i| &images[i]).collect();
        let x = stack(&refs)?;
        net.zero_grad();
        let y = net.forward(&x)?;
        let n = y.len() as f64;
        let mut dy = y.clone();
        let mut loss = 0.0;
        for (d, t) in dy.data_mut().iter_mut().zip(idx.iter().flat_map(|&i| targets[i])) {
            let r = *d - t;
            loss += r * r / n;
            *d = 2.0 * r / n;
        }
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step: iteration,
                term: format!("{mode} regressor loss"),
            });
        }
        net.backward(&dy)?;
        adam.step_network(&mut net)?;
        let mut row = LossRow {
            iteration,
            loss,
            val_mse: None,
        };
        if cursor >= order.len() {
            cursor -= order.len();
            rng.shuffle(&mut order);
            row.val_mse = Some(mse(&net, &val_x, &val_t)?);
        }
        trace.push(row);
    }
    if let Some(last) = trace.last_mut() {
        if last.val_mse.is_none() {
            last.val_mse = Some(mse(&net, &val_x, &val_t)?);
        }
    }
    Ok(TrainedRegressor {
        network: net,
        optimizer: adam,
        normalizer,
        trace,
    })
}

/// Physical properties predicted for one image.
pub fn predict_props(net: &Network, normalizer: &Normalizer, image: &MicrostructureImage) -> Result<MechanicalProps> {
    let y = predict_normalized(net, image)?;
    let (sigma_max, eps_lim) = normalizer.denormalize(y);
    Ok(MechanicalProps {
        sigma_max,
        eps_lim,
        mode: normalizer.mode,
    })
}

/// Raw network output for one image, in normalized units.
pub fn predict_normalized(net: &Network, image: &MicrostructureImage) -> Result<[f64; 2]> {
    let y = net.infer(&stack(&[image])?)?;
    match y.data() {
        [a, b] => Ok([*a, *b]),
        other => Err(Error::Dimension(format!("regressor returned {} values, expected 2", other.len()))),
    }
}

/// Test-set R^2 of `(sigma_max, eps_lim)` in physical units.
pub fn evaluate_r_squared(
    net: &Network,
    normalizer: &Normalizer,
    images: &[MicrostructureImage],
    labels: &[MechanicalProps],
    indices: &[usize],
) -> Result<(f64, f64)> {
    let mut pred = (Vec::new(), Vec::new());
    let mut truth = (Vec::new(), Vec::new());
    for &i in indices {
        let p = predict_props(net, normalizer, &images[i])?;
        pred.0.push(p.sigma_max);
        pred.1.push(p.eps_lim);
        truth.0.push(labels[i].sigma_max);
        truth.1.push(labels[i].eps_lim);
    }
    Ok((r_squared(&pred.0, &truth.0)?, r_squared(&pred.1, &truth.1)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_squared_reference_values() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(r_squared(&t, &t).unwrap(), 1.0);
        assert_eq!(r_squared(&[2.5; 4], &t).unwrap(), 0.0);
        // SS_res = 0.01 + 0.04 + 0.09 + 0 = 0.14, SS_tot = 5.
        let r = r_squared(&[1.1, 1.8, 3.3, 4.0], &t).unwrap();
        assert!((r - (1.0 - 0.14 / 5.0)).abs() < 1e-12);
        assert!(matches!(r_squared(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::Undefined(_))));
    }

    #[test]
    fn normalizer_maps_extremes_to_unit_interval() {
        let m = DeformationMode::ShearX;
        let props = [
            MechanicalProps::new(200.0, 0.3, m).unwrap(),
            MechanicalProps::new(300.0, 0.5, m).unwrap(),
            MechanicalProps::new(260.0, 0.427, m).unwrap(),
        ];
        let n = Normalizer::fit(m, &props).unwrap();
        assert_eq!(n.normalize(&props[0]), [0.0, 0.0]);
        assert_eq!(n.normalize(&props[1]), [1.0, 1.0]);
        let (s, e) = n.denormalize(n.normalize(&props[2]));
        assert!((s - 260.0).abs() < 1e-12 && (e - 0.427).abs() < 1e-12);
        let flat = Normalizer::fit(m, &props[..1]).unwrap();
        flat.validate().unwrap();
        assert!(Normalizer::fit(DeformationMode::TensileX, &props).is_err());
    }

    #[test]
    fn split_is_disjoint_and_sized() {
        let s = Split::seeded(120, [96, 10, 10], &mut Rng::new(4)).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        assert_eq!(all.len(), 116);
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 116);
        assert!(Split::seeded(100, [96, 10, 10], &mut Rng::new(4)).is_err());
        assert!(Split::seeded(100, [96, 0, 4], &mut Rng::new(4)).is_err());
    }
}
