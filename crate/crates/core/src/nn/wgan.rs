//! Wasserstein GAN over one-hot microstructure images with a 2-D latent
//! space on `[0, 100]^2`.

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::network::{Architecture, Network};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::micro::{MicrostructureImage, CHANNELS, DEFAULT_SIZE};
use crate::rng::Rng;

pub const LATENT_DIM: usize = 2;
pub const LATENT_MAX: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WganConfig {
    pub iterations: usize,
    pub batch: usize,
    pub clip: f64,
    pub critic_lr: f64,
    pub generator_lr: f64,
    /// Out of every `cycle` iterations, this many update the critic and the
    /// rest the generator.
    pub critic_per_cycle: usize,
    pub cycle: usize,
    pub generator_widths: [usize; 2],
    pub critic_widths: [usize; 2],
    /// Iterations between checkpoint callbacks; 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for WganConfig {
    fn default() -> Self {
        Self {
            iterations: 1_000_000,
            batch: 32,
            clip: 0.01,
            critic_lr: 1e-4,
            generator_lr: 1e-4,
            critic_per_cycle: 9,
            cycle: 10,
            generator_widths: [64, 32],
            critic_widths: [32, 64],
            checkpoint_every: 0,
        }
    }
}

impl WganConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch == 0 {
            return Err(Error::Config("iterations and batch must be positive".into()));
        }
        if !(self.clip > 0.0) {
            return Err(Error::Config(format!("clip bound {} must be positive", self.clip)));
        }
        if !(self.critic_lr > 0.0 && self.generator_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.cycle == 0 || self.critic_per_cycle >= self.cycle {
            return Err(Error::Config(format!(
                "critic share {}/{} must leave generator iterations",
                self.critic_per_cycle, self.cycle
            )));
        }
        if self.generator_widths.contains(&0) || self.critic_widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Whether 1-based `iteration` updates the critic.
    pub fn is_critic_iteration(&self, iteration: usize) -> bool {
        (iteration - 1) % self.cycle < self.critic_per_cycle
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Critic,
    Generator,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WganTraceRow {
    pub iteration: usize,
    pub role: Role,
    /// Loss minimized by the updated network.
    pub loss: f64,
    /// Most recent critic estimate of the Wasserstein distance.
    pub wasserstein: f64,
}

#[derive(Clone, Debug)]
pub struct Wgan {
    pub generator: Network,
    pub critic: Network,
    pub generator_opt: Adam,
    pub critic_opt: Adam,
}

/// `mean(real) - mean(fake)`.
pub fn critic_loss(real: &[f64], fake: &[f64]) -> Result<f64> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Usage("critic batches must be non-empty".into()));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(mean(real) - mean(fake))
}

/// Maps external `z` in `[0, 100]^2` to the generator input in `[-1, 1]^2`.
pub fn latent_input(z: [f64; 2]) -> Result<[f64; 2]> {
    if z.iter().any(|v| !(0.0..=LATENT_MAX).contains(v)) {
        return Err(Error::Domain(format!("latent {z:?} outside [0, {LATENT_MAX}]^2")));
    }
    Ok(z.map(|v| 2.0 * v / LATENT_MAX - 1.0))
}

fn latent_batch(zs: &[[f64; 2]]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(zs.len() * LATENT_DIM);
    for z in zs {
        data.extend(latent_input(*z)?);
    }
    Tensor::from_vec(&[zs.len(), LATENT_DIM], data)
}

/// Per-pixel channel probabilities `[32, 32, 3]` for `z`.
pub fn generate_soft(generator: &Network, z: [f64; 2]) -> Result<Tensor> {
    generator.infer(&latent_batch(&[z])?)
}

/// Decoded image for `z`: per-pixel argmax of the channel probabilities.
pub fn generate(generator: &Network, z: [f64; 2]) -> Result<MicrostructureImage> {
    let y = generate_soft(generator, z)?;
    let s = y.shape();
    MicrostructureImage::from_channel_scores(s[2], s[1], y.data())
}

fn sample_latents(n: usize, rng: &mut Rng) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| [rng.uniform_in(0.0, LATENT_MAX), rng.uniform_in(0.0, LATENT_MAX)])
        .collect()
}

fn check_finite(v: f64, iteration: usize, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            step: iteration,
            term: what.into(),
        })
    }
}

impl Wgan {
    pub fn new(cfg: &WganConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let [g1, g2] = cfg.generator_widths;
        let [c1, c2] = cfg.critic_widths;
        let generator = Network::new(&Architecture::generator(LATENT_DIM, g1, g2), rng)?;
        let mut critic = Network::new(&Architecture::critic(c1, c2), rng)?;
        critic.clip(cfg.clip);
        Ok(Self {
            generator,
            critic,
            generator_opt: Adam::new(cfg.generator_lr),
            critic_opt: Adam::new(cfg.critic_lr),
        })
    }

    /// One critic update; returns the Wasserstein estimate on this batch.
    fn critic_step(&mut self, real: &Tensor, zs: &[[f64; 2]], clip: f64, iteration: usize) -> Result<f64> {
        let fake = self.generator.infer(&latent_batch(zs)?)?;
        self.critic.zero_grad();
        let sr = self.critic.forward(real)?;
        let nr = sr.len() as f64;
        self.critic.backward(&Tensor::from_vec(sr.shape(), vec![-1.0 / nr; sr.len()])?)?;
        let sf = self.critic.forward(&fake)?;
        let nf = sf.len() as f64;
        self.critic.backward(&Tensor::from_vec(sf.shape(), vec![1.0 / nf; sf.len()])?)?;
        let w = critic_loss(sr.data(), sf.data())?;
        check_finite(w, iteration, "critic Wasserstein estimate")?;
        self.critic_opt.step_network(&mut self.critic)?;
        self.critic.clip(clip);
        Ok(w)
    }

    /// One generator update; returns its loss `-mean(critic(fake))`.
    fn generator_step(&mut self, zs: &[[f64; 2]], iteration: usize) -> Result<f64> {
        self.generator.zero_grad();
        let fake = self.generator.forward(&latent_batch(zs)?)?;
        let s = self.critic.forward(&fake)?;
        let n = s.len() as f64;
        let loss = -s.data().iter().sum::<f64>() / n;
        check_finite(loss, iteration, "generator loss")?;
        let dfake = self.critic.backward(&Tensor::from_vec(s.shape(), vec![-1.0 / n; s.len()])?)?;
        self.generator.backward(&dfake)?;
        self.critic.zero_grad();
        self.generator_opt.step_network(&mut self.generator)?;
        Ok(loss)
    }
}

/// Trains a fresh WGAN on `images` (all 32x32). `on_checkpoint` is called
/// every `cfg.checkpoint_every` iterations and after the last one.
pub fn train_wgan(
    images: &[MicrostructureImage],
    cfg: &WganConfig,
    rng: &mut Rng,
    mut on_checkpoint: impl FnMut(usize, &Wgan) -> Result<()>,
) -> Result<(Wgan, Vec<WganTraceRow>)> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::Config("WGAN training set is empty".into()));
    }
    if let Some(img) = images.iter().find(|i| i.width() != DEFAULT_SIZE || i.height() != DEFAULT_SIZE) {
        return Err(Error::Dimension(format!(
            "WGAN images must be {DEFAULT_SIZE}x{DEFAULT_SIZE}, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let mut gan = Wgan::new(cfg, rng)?;
    let hot: Vec<Vec<f64>> = images.iter().map(MicrostructureImage::one_hot).collect();
    let per = DEFAULT_SIZE * DEFAULT_SIZE * CHANNELS;
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut wasserstein = f64::NAN;
    for iteration in 1..=cfg.iterations {
        let zs = sample_latents(cfg.batch, rng);
        let row = if cfg.is_critic_iteration(iteration) {
            let mut data = Vec::with_capacity(cfg.batch * per);
            for _ in 0..cfg.batch {
                data.extend_from_slice(&hot[rng.below(hot.len())]);
            }
            let real = Tensor::from_vec(&[cfg.batch, DEFAULT_SIZE, DEFAULT_SIZE, CHANNELS], data)?;
            wasserstein = gan.critic_step(&real, &zs, cfg.clip, iteration)?;
            WganTraceRow {
                iteration,
                role: Role::Critic,
                loss: -wasserstein,
                wasserstein,
            }
        } else {
            let loss = gan.generator_step(&zs, iteration)?;
            WganTraceRow {
                iteration,
                role: Role::Generator,
                loss,
                wasserstein,
            }
        };
        trace.push(row);
        if (cfg.checkpoint_every > 0 && iteration % cfg.checkpoint_every == 0) || iteration == cfg.iterations {
            on_checkpoint(iteration, &gan)?;
        }
    }
    Ok((gan, trace))
}

/// Least-squares slope of the critic Wasserstein estimates over the last
/// `fraction` of iterations.
pub fn wasserstein_tail_slope(trace: &[WganTraceRow], fraction: f64) -> Result<f64> {
    let last = trace.last().map_or(0, |r| r.iteration);
    let start = (last as f64 * (1.0 - fraction)).floor() as usize;
    let pts: Vec<(f64, f64)> = trace
        .iter()
        .filter(|r| r.role == Role::Critic && r.iteration > start)
        .map(|r| (r.iteration as f64, r.wasserstein))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Undefined("fewer than two critic iterations in the window".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
