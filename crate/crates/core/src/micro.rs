//! Pixel microstructures: the labeling rule, the one-hot view and simple
//! statistics shared by every stage of the pipeline.
//!
//! Pixels are stored row-major with the row index increasing along +y, so
//! pixel `(row, col)` sits at `x = col`, `y = row` on the simulation grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SIZE: usize = 32;

/// Number of one-hot channels.
pub const CHANNELS: usize = 3;

/// Per-pixel phase label. The discriminant is the on-disk byte.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Phase {
    Ferrite = 0,
    Variant1 = 1,
    Variant2 = 2,
}

impl Phase {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Phase> {
        match code {
            0 => Ok(Phase::Ferrite),
            1 => Ok(Phase::Variant1),
            2 => Ok(Phase::Variant2),
            other => Err(Error::Format(format!("invalid phase label {other}"))),
        }
    }

    /// One-hot channel index. Channel order is (variant1, variant2, ferrite),
    /// i.e. the red/green/blue color legend.
    pub fn channel(self) -> usize {
        match self {
            Phase::Variant1 => 0,
            Phase::Variant2 => 1,
            Phase::Ferrite => 2,
        }
    }

    pub fn is_martensite(self) -> bool {
        self != Phase::Ferrite
    }

    /// RGB color used for previews.
    pub fn rgb(self) -> [u8; 3] {
        match self {
            Phase::Variant1 => [220, 40, 40],
            Phase::Variant2 => [40, 180, 60],
            Phase::Ferrite => [40, 70, 220],
        }
    }
}

/// A scalar field on a `width x height` grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field2 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Field2 {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "field data has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Field2) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Periodic translation by `(drow, dcol)` cells.
    pub fn rolled(&self, drow: usize, dcol: usize) -> Field2 {
        Field2::from_fn(self.width, self.height, |r, c| {
            let sr = (r + self.height - drow % self.height) % self.height;
            let sc = (c + self.width - dcol % self.width) % self.width;
            self.get(sr, sc)
        })
    }

    /// Swap the x and y axes.
    pub fn transposed(&self) -> Field2 {
        Field2::from_fn(self.height, self.width, |r, c| self.get(c, r))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Labeled microstructure image.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MicrostructureImage {
    width: usize,
    height: usize,
    labels: Vec<Phase>,
}

impl MicrostructureImage {
    pub fn new(width: usize, height: usize, labels: Vec<Phase>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} labels for a {}x{} image",
                labels.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn uniform(width: usize, height: usize, phase: Phase) -> Self {
        Self {
            width,
            height,
            labels: vec![phase; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> Phase) -> Self {
        let mut labels = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                labels.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            labels,
        }
    }

    pub fn from_codes(width: usize, height: usize, codes: &[u8]) -> Result<Self> {
        let labels = codes
            .iter()
            .map(|&c| Phase::from_code(c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(width, height, labels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[Phase] {
        &self.labels
    }

    pub fn codes(&self) -> Vec<u8> {
        self.labels.iter().map(|p| p.code()).collect()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Phase {
        self.labels[row * self.width + col]
    }

    pub fn pixel_count(&self) -> usize {
        self.labels.len()
    }

    /// Share of martensite (either variant) pixels.
    pub fn martensite_fraction(&self) -> f64 {
        let n = self.labels.iter().filter(|p| p.is_martensite()).count();
        n as f64 / self.labels.len() as f64
    }

    pub fn phase_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for p in &self.labels {
            counts[p.code() as usize] += 1;
        }
        counts
    }

    /// `height x width x 3` one-hot tensor, channel order (variant1, variant2,
    /// ferrite), flattened row-major with the channel innermost.
    pub fn one_hot(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.labels.len() * CHANNELS];
        for (i, p) in self.labels.iter().enumerate() {
            out[i * CHANNELS + p.channel()] = 1.0;
        }
        out
    }

    /// Inverse of [`one_hot`](Self::one_hot) for any per-pixel channel scores:
    /// the label of each pixel is the channel argmax. Exact ties resolve
    /// ferrite first, then variant1, then variant2.
    pub fn from_channel_scores(width: usize, height: usize, scores: &[f64]) -> Result<Self> {
        if scores.len() != width * height * CHANNELS {
            return Err(Error::Dimension(format!(
                "{} channel scores for a {}x{}x3 image",
                scores.len(),
                width,
                height
            )));
        }
        let labels = scores
            .chunks_exact(CHANNELS)
            .map(|px| {
                let (v1, v2, f) = (px[0], px[1], px[2]);
                if f >= v1 && f >= v2 {
                    Phase::Ferrite
                } else if v1 >= v2 {
                    Phase::Variant1
                } else {
                    Phase::Variant2
                }
            })
            .collect();
        Self::new(width, height, labels)
    }

    /// Rotate by 90 degrees counter-clockwise (x axis onto y axis).
    pub fn rotated_90(&self) -> MicrostructureImage {
        // new (x', y') = (-y, x) shifted into range: x' = H-1-y, y' = x.
        let (w, h) = (self.height, self.width);
        MicrostructureImage::from_fn(w, h, |row, col| self.get(w - 1 - col, row))
    }

    /// Binary PPM (P6) preview, top row first.
    pub fn to_ppm(&self, scale: usize) -> Vec<u8> {
        let scale = scale.max(1);
        let (w, h) = (self.width * scale, self.height * scale);
        let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
        for y in (0..h).rev() {
            for x in 0..w {
                out.extend_from_slice(&self.get(y / scale, x / scale).rgb());
            }
        }
        out
    }
}

/// Label each grid point from the two martensite order parameters.
///
/// Values are clamped to `[0, 1]`, the ferrite share is `1 - phi1 - phi2`,
/// and the pixel takes the phase with the largest share. Exact ties go to
/// ferrite, then variant1.
pub fn label_pixels(phi1: &Field2, phi2: &Field2) -> Result<MicrostructureImage> {
    if !phi1.same_shape(phi2) {
        return Err(Error::Dimension(format!(
            "phi1 is {}x{} but phi2 is {}x{}",
            phi1.width, phi1.height, phi2.width, phi2.height
        )));
    }
    let labels = phi1
        .data
        .iter()
        .zip(&phi2.data)
        .map(|(&a, &b)| label_point(a, b))
        .collect();
    MicrostructureImage::new(phi1.width, phi1.height, labels)
}

#[inline]
pub fn label_point(phi1: f64, phi2: f64) -> Phase {
    let p1 = phi1.clamp(0.0, 1.0);
    let p2 = phi2.clamp(0.0, 1.0);
    let p0 = 1.0 - p1 - p2;
    if p0 >= p1 && p0 >= p2 {
        Phase::Ferrite
    } else if p1 >= p2 {
        Phase::Variant1
    } else {
        Phase::Variant2
    }
}
