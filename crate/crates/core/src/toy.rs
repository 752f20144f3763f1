//! Analytic, seedable denoising testbed.
//!
//! Each "model" pulls the current latent towards its own target image, but
//! only inside a radial frequency window whose upper edge grows linearly with
//! the step index. Early steps therefore shape low frequencies and late steps
//! shape high frequencies, which is the coarse-to-fine structure the profiler
//! and scheduler rely on. Latent space and image space coincide, so decoding
//! is the identity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{self, band_filter, normalized_radius, ImageGrid, RadialMask};

const NOISE_STREAM: u64 = 0;
const CONTENT_STREAM: u64 = 1;
const STYLE_STREAM: u64 = 2;

/// Seeded generator for one purpose. ChaCha is counter based, so the output
/// does not depend on platform or on how many other streams are in use.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A band-progressive toy denoiser.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserSpec {
    pub target: ImageGrid,
    /// Per-step pull strength in `(0, 1]`.
    pub gain: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    /// Width of the active frequency window below the cutoff. `1.0` makes the
    /// mask a plain growing low pass `[0, t/T]`.
    pub window: f64,
}

impl DenoiserSpec {
    pub fn new(
        target: ImageGrid,
        gain: f64,
        band_lo: f64,
        band_hi: f64,
        window: f64,
    ) -> Result<Self> {
        if !(gain > 0.0 && gain <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "gain must be in (0, 1], got {gain}"
            )));
        }
        if band_lo.partial_cmp(&band_hi) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidInput(format!(
                "band_lo must be below band_hi, got [{band_lo}, {band_hi}]"
            )));
        }
        if !(window > 0.0 && window <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "window must be in (0, 1], got {window}"
            )));
        }
        Ok(Self {
            target,
            gain,
            band_lo,
            band_hi,
            window,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.target.dims()
    }

    /// Frequency window corrected at step `t` of `total_steps`.
    pub fn step_mask(&self, t: usize, total_steps: usize) -> Result<RadialMask> {
        let cutoff = t as f64 / total_steps as f64;
        let lo = (cutoff - self.window).max(0.0);
        RadialMask::band(self.target.height(), self.target.width(), lo, cutoff)
    }
}

/// Something that maps `h_{t-1}` to `h_t`.
pub trait Denoiser {
    fn denoise(&self, h: &ImageGrid, t: usize, total_steps: usize) -> Result<ImageGrid>;
}

impl Denoiser for DenoiserSpec {
    fn denoise(&self, h: &ImageGrid, t: usize, total_steps: usize) -> Result<ImageGrid> {
        denoise_step(self, h, t, total_steps)
    }
}

/// One step: `h + gain · band_filter(target − h, window(t))`.
pub fn denoise_step(
    spec: &DenoiserSpec,
    h: &ImageGrid,
    t: usize,
    total_steps: usize,
) -> Result<ImageGrid> {
    if t == 0 || t > total_steps {
        return Err(Error::InvalidInput(format!(
            "step {t} outside 1..={total_steps}"
        )));
    }
    let mask = spec.step_mask(t, total_steps)?;
    let correction = band_filter(&spec.target.sub(h)?, &mask)?;
    let gain = spec.gain;
    Ok(h.zip_map(&correction, |a, b| a + gain * b))
}

/// The model applied at one step of a trajectory.
#[derive(Debug, Clone, Copy)]
pub enum StepModel<'a> {
    Single(&'a DenoiserSpec),
    /// Average of two models' outputs on the same latent.
    Average(&'a DenoiserSpec, &'a DenoiserSpec),
}

impl Denoiser for StepModel<'_> {
    fn denoise(&self, h: &ImageGrid, t: usize, total_steps: usize) -> Result<ImageGrid> {
        match self {
            StepModel::Single(spec) => denoise_step(spec, h, t, total_steps),
            StepModel::Average(a, b) => {
                let ya = denoise_step(a, h, t, total_steps)?;
                let yb = denoise_step(b, h, t, total_steps)?;
                Ok(ya.zip_map(&yb, |x, y| 0.5 * (x + y)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `h_0 … h_T`.
    pub steps: Vec<ImageGrid>,
    pub seed: u64,
    pub total_steps: usize,
}

impl Trajectory {
    pub fn initial(&self) -> &ImageGrid {
        &self.steps[0]
    }

    pub fn last(&self) -> &ImageGrid {
        self.steps.last().expect("trajectory always holds h_0")
    }
}

/// Standard-normal noise, one value per pixel.
pub fn initial_noise(seed: u64, height: usize, width: usize, channels: usize) -> Result<ImageGrid> {
    let mut rng = seeded_rng(seed, NOISE_STREAM);
    let data = (0..height * width * channels)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    ImageGrid::new(height, width, channels, data)
}

/// Runs `T` denoising steps from seeded noise, asking `policy` for the model
/// to use at each step `t = 1…T`.
pub fn run_trajectory<'a, P>(
    mut policy: P,
    seed: u64,
    total_steps: usize,
    dims: (usize, usize, usize),
) -> Result<Trajectory>
where
    P: FnMut(usize) -> StepModel<'a>,
{
    if total_steps < 2 {
        return Err(Error::InvalidInput(format!(
            "a trajectory needs at least 2 steps, got {total_steps}"
        )));
    }
    let (h, w, c) = dims;
    let mut steps = Vec::with_capacity(total_steps + 1);
    steps.push(initial_noise(seed, h, w, c)?);
    for t in 1..=total_steps {
        let next = policy(t).denoise(&steps[t - 1], t, total_steps)?;
        steps.push(next);
    }
    Ok(Trajectory {
        steps,
        seed,
        total_steps,
    })
}

fn check_target_dims(height: usize, width: usize) -> Result<()> {
    if height < 8 || width < 8 {
        return Err(Error::InvalidInput(format!(
            "target images must be at least 8x8, got {height}x{width}"
        )));
    }
    Ok(())
}

fn normalize_rms(img: ImageGrid) -> Result<ImageGrid> {
    let n = img.data().len() as f64;
    let rms = (img.energy() / n).sqrt();
    if rms == 0.0 {
        return Err(Error::DegenerateTarget(
            "generated target is all zero".into(),
        ));
    }
    Ok(img.scale(1.0 / rms))
}

/// Upper radius of the content target's band.
pub const CONTENT_BAND: (f64, f64) = (0.0, 0.3);
/// Annulus holding the style target's texture.
pub const STYLE_BAND: (f64, f64) = (0.35, 0.9);

/// Smooth structure: a few soft-edged discs and rectangles, low-passed to
/// `[0, 0.3]` and scaled to unit RMS.
pub fn make_content_target(seed: u64, height: usize, width: usize) -> Result<ImageGrid> {
    check_target_dims(height, width)?;
    let mut rng = seeded_rng(seed, CONTENT_STREAM);
    let mut data = vec![0.0; height * width];
    let shapes = rng.random_range(2..=4);
    let scale = height.min(width) as f64;
    for _ in 0..shapes {
        let cy = rng.random_range(0.2..0.8) * height as f64;
        let cx = rng.random_range(0.2..0.8) * width as f64;
        let size = rng.random_range(0.1..0.25) * scale;
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let amplitude = sign * rng.random_range(0.5..1.0);
        let disc = rng.random_bool(0.5);
        for y in 0..height {
            for x in 0..width {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                let edge = if disc {
                    (dy * dy + dx * dx).sqrt() - size
                } else {
                    (dy.abs() - size).max(dx.abs() - 0.7 * size)
                };
                data[y * width + x] += amplitude / (1.0 + (edge / 1.5).exp());
            }
        }
    }
    let raw = ImageGrid::new(height, width, 1, data)?;
    let mask = RadialMask::band(height, width, CONTENT_BAND.0, CONTENT_BAND.1)?;
    normalize_rms(band_filter(&raw, &mask)?)
}

/// Random-phase texture whose magnitude follows a raised-cosine bump over the
/// `[0.35, 0.9]` annulus and is exactly zero elsewhere; unit RMS.
pub fn make_style_target(seed: u64, height: usize, width: usize) -> Result<ImageGrid> {
    check_target_dims(height, width)?;
    let mut rng = seeded_rng(seed, STYLE_STREAM);
    let noise: Vec<f64> = (0..height * width)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let noise = ImageGrid::new(height, width, 1, noise)?;
    let (lo, hi) = STYLE_BAND;
    let mut spectrum = signal::complex_spectrum(&noise);
    for u in 0..height {
        for v in 0..width {
            let z = &mut spectrum[u * width + v];
            let r = normalized_radius(height, width, u, v);
            let norm = z.norm();
            *z = if (lo..=hi).contains(&r) && norm > 0.0 {
                let bump = (std::f64::consts::PI * (r - lo) / (hi - lo)).sin().powi(2);
                *z * (bump / norm)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
    }
    let data = signal::inverse_real(spectrum, height, width);
    normalize_rms(ImageGrid::new(height, width, 1, data)?)
}

/// Parameters of the toy backend. The defaults are the pinned reference
/// configuration used throughout the tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub total_steps: usize,
    pub height: usize,
    pub width: usize,
    pub gain: f64,
    pub window: f64,
    pub content_seed: u64,
    pub style_seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            total_steps: 50,
            height: 64,
            width: 64,
            gain: 0.35,
            window: 0.2,
            content_seed: 1,
            style_seed: 2,
        }
    }
}

/// Base, content and style denoisers built from a [`ToyConfig`].
#[derive(Debug, Clone)]
pub struct ToyModels {
    pub base: DenoiserSpec,
    pub content: DenoiserSpec,
    pub style: DenoiserSpec,
}

impl ToyConfig {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps < 2 {
            return Err(Error::config("toy.total_steps", "must be at least 2"));
        }
        if self.height < 8 || self.width < 8 {
            return Err(Error::config("toy.height", "images must be at least 8x8"));
        }
        if !(self.gain > 0.0 && self.gain <= 1.0) {
            return Err(Error::config("toy.gain", "must be in (0, 1]"));
        }
        if !(self.window > 0.0 && self.window <= 1.0) {
            return Err(Error::config("toy.window", "must be in (0, 1]"));
        }
        Ok(())
    }

    pub fn models(&self) -> Result<ToyModels> {
        self.validate()?;
        let (h, w) = (self.height, self.width);
        Ok(ToyModels {
            base: DenoiserSpec::new(ImageGrid::zeros(h, w, 1)?, self.gain, 0.0, 1.0, self.window)?,
            content: DenoiserSpec::new(
                make_content_target(self.content_seed, h, w)?,
                self.gain,
                CONTENT_BAND.0,
                CONTENT_BAND.1,
                self.window,
            )?,
            style: DenoiserSpec::new(
                make_style_target(self.style_seed, h, w)?,
                self.gain,
                STYLE_BAND.0,
                STYLE_BAND.1,
                self.window,
            )?,
        })
    }

    /// Stable identifier of the adapter pair this configuration describes.
    pub fn pair_id(&self) -> String {
        format!(
            "toy-c{}-s{}-{}x{}-t{}-g{}-w{}",
            self.content_seed,
            self.style_seed,
            self.height,
            self.width,
            self.total_steps,
            self.gain,
            self.window
        )
    }
}
