//! Frequency-domain primitives shared by every other module.
//!
//! Conventions: forward 2D DFT is unnormalized, the inverse carries the
//! `1/(H·W)` factor, and DC sits at bin `(0, 0)` of each channel plane.
//! Multi-channel images are transformed per channel; norms are taken jointly
//! over all channels.

use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `height × width × channels` grid of real intensities, channel-planar and
/// row-major inside each plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidInput(format!(
                "expected {} values for {height}x{width}x{channels}, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![0.0; height * width * channels],
        )
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    fn plane(&self, channel: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    /// Sum of squared values over all channels.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.energy().sqrt()
    }

    /// Builds a grid of identical dims from an elementwise map over `self` and
    /// `other`. Callers guarantee matching dims and finite output.
    pub(crate) fn zip_map(&self, other: &ImageGrid, f: impl Fn(f64, f64) -> f64) -> ImageGrid {
        debug_assert_eq!(self.dims(), other.dims());
        ImageGrid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sub(&self, other: &ImageGrid) -> Result<ImageGrid> {
        ensure_same_dims(self.dims(), other.dims())?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn add(&self, other: &ImageGrid) -> Result<ImageGrid> {
        ensure_same_dims(self.dims(), other.dims())?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn scale(&self, k: f64) -> ImageGrid {
        self.map(|v| v * k)
    }

    /// Cyclic shift of every channel plane by `(dy, dx)` pixels.
    pub fn cyclic_shift(&self, dy: usize, dx: usize) -> ImageGrid {
        let (h, w) = (self.height, self.width);
        let mut data = vec![0.0; self.data.len()];
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    data[(c * h + (y + dy) % h) * w + (x + dx) % w] = self.get(c, y, x);
                }
            }
        }
        ImageGrid {
            height: h,
            width: w,
            channels: self.channels,
            data,
        }
    }
}

/// Per-channel DFT magnitude spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    height: usize,
    width: usize,
    channels: usize,
    magnitudes: Vec<f64>,
}

impl Spectrum {
    pub fn from_magnitudes(
        height: usize,
        width: usize,
        channels: usize,
        magnitudes: Vec<f64>,
    ) -> Result<Self> {
        if magnitudes.len() != height * width * channels {
            return Err(Error::InvalidInput(
                "spectrum length does not match dims".into(),
            ));
        }
        if magnitudes.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidInput(
                "spectrum magnitudes must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            magnitudes,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn magnitude(&self, channel: usize, u: usize, v: usize) -> f64 {
        self.magnitudes[(channel * self.height + u) * self.width + v]
    }

    /// Sum of squared magnitudes over all bins and channels.
    pub fn energy(&self) -> f64 {
        self.magnitudes.iter().map(|m| m * m).sum()
    }
}

/// Which side of the lower radius the band includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowerBound {
    Inclusive,
    Exclusive,
}

/// Binary radial band-pass mask over DFT bins.
///
/// The normalized radius of bin `(u, v)` is
/// `sqrt((2u'/H)² + (2v'/W)²) / sqrt(2)` with `u', v'` the signed frequency
/// indices in `[-H/2, H/2)`, so DC is at 0 and the corner bin at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialMask {
    height: usize,
    width: usize,
    lo: f64,
    hi: f64,
    lower: LowerBound,
    weights: Vec<f64>,
}

impl RadialMask {
    /// Closed band `lo ≤ r ≤ hi`.
    pub fn band(height: usize, width: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::build(height, width, lo, hi, LowerBound::Inclusive)
    }

    /// Half-open band `lo < r ≤ hi`.
    pub fn band_above(height: usize, width: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::build(height, width, lo, hi, LowerBound::Exclusive)
    }

    pub fn all_pass(height: usize, width: usize) -> Result<Self> {
        Self::band(height, width, 0.0, 1.0)
    }

    fn build(height: usize, width: usize, lo: f64, hi: f64, lower: LowerBound) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(
                "mask dimensions must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::InvalidInput(format!(
                "mask radii must satisfy 0 <= lo <= hi <= 1, got [{lo}, {hi}]"
            )));
        }
        let mut weights = Vec::with_capacity(height * width);
        for u in 0..height {
            for v in 0..width {
                let r = normalized_radius(height, width, u, v);
                let above_lo = match lower {
                    LowerBound::Inclusive => r >= lo,
                    LowerBound::Exclusive => r > lo,
                };
                weights.push(if above_lo && r <= hi { 1.0 } else { 0.0 });
            }
        }
        Ok(Self {
            height,
            width,
            lo,
            hi,
            lower,
            weights,
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn lower_bound(&self) -> LowerBound {
        self.lower
    }

    pub fn weight(&self, u: usize, v: usize) -> f64 {
        self.weights[u * self.width + v]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

fn signed_index(i: usize, n: usize) -> f64 {
    // Bins at and above n/2 wrap to negative frequencies, giving [-n/2, n/2).
    if 2 * i >= n {
        i as f64 - n as f64
    } else {
        i as f64
    }
}

/// Normalized radius of DFT bin `(u, v)` on an `height × width` grid.
pub fn normalized_radius(height: usize, width: usize, u: usize, v: usize) -> f64 {
    let fu = 2.0 * signed_index(u, height) / height as f64;
    let fv = 2.0 * signed_index(v, width) / width as f64;
    (fu * fu + fv * fv).sqrt() / std::f64::consts::SQRT_2
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place 2D DFT of one `height × width` plane. The inverse is unscaled.
fn fft2_in_place(buf: &mut [Complex64], height: usize, width: usize, direction: FftDirection) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let row_fft = planner.plan_fft(width, direction);
        for row in buf.chunks_exact_mut(width) {
            row_fft.process(row);
        }
        let col_fft = planner.plan_fft(height, direction);
        let mut column = vec![Complex64::new(0.0, 0.0); height];
        for x in 0..width {
            for y in 0..height {
                column[y] = buf[y * width + x];
            }
            col_fft.process(&mut column);
            for y in 0..height {
                buf[y * width + x] = column[y];
            }
        }
    });
}

fn plane_spectrum(plane: &[f64], height: usize, width: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_in_place(&mut buf, height, width, FftDirection::Forward);
    buf
}

/// Complex spectrum of every channel, concatenated plane by plane.
pub(crate) fn complex_spectrum(img: &ImageGrid) -> Vec<Complex64> {
    let (h, w, c) = img.dims();
    let mut out = Vec::with_capacity(h * w * c);
    for ch in 0..c {
        out.extend(plane_spectrum(img.plane(ch), h, w));
    }
    out
}

/// Real part of the normalized inverse transform of one plane.
pub(crate) fn inverse_real(mut spectrum: Vec<Complex64>, height: usize, width: usize) -> Vec<f64> {
    fft2_in_place(&mut spectrum, height, width, FftDirection::Inverse);
    let scale = 1.0 / (height * width) as f64;
    spectrum.iter().map(|z| z.re * scale).collect()
}

/// Per-channel magnitude spectrum with an unnormalized forward transform.
pub fn dft_magnitude(img: &ImageGrid) -> Result<Spectrum> {
    if img.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "image contains non-finite values".into(),
        ));
    }
    let (h, w, c) = img.dims();
    let magnitudes = complex_spectrum(img).iter().map(|z| z.norm()).collect();
    Ok(Spectrum {
        height: h,
        width: w,
        channels: c,
        magnitudes,
    })
}

/// Keeps only the frequency bins selected by `mask`, per channel, and returns
/// the real part of the inverse transform.
pub fn band_filter(img: &ImageGrid, mask: &RadialMask) -> Result<ImageGrid> {
    let (h, w, c) = img.dims();
    if mask.height != h || mask.width != w {
        return Err(Error::InvalidInput(format!(
            "mask is {}x{} but image is {h}x{w}",
            mask.height, mask.width
        )));
    }
    let scale = 1.0 / (h * w) as f64;
    let mut data = Vec::with_capacity(h * w * c);
    for ch in 0..c {
        let mut buf = plane_spectrum(img.plane(ch), h, w);
        for (z, &m) in buf.iter_mut().zip(&mask.weights) {
            *z *= m;
        }
        fft2_in_place(&mut buf, h, w, FftDirection::Inverse);
        data.extend(buf.iter().map(|z| z.re * scale));
    }
    Ok(ImageGrid {
        height: h,
        width: w,
        channels: c,
        data,
    })
}

/// Euclidean distance between two magnitude spectra over all bins and channels.
pub fn spectral_l2(a: &Spectrum, b: &Spectrum) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    Ok(a.magnitudes
        .iter()
        .zip(&b.magnitudes)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// `1 − ‖L(img) − L(target)‖ / ‖L(target)‖` with `L` the `[0, cutoff]` low pass.
pub fn content_fidelity(img: &ImageGrid, target: &ImageGrid, cutoff: f64) -> Result<f64> {
    ensure_same_dims(img.dims(), target.dims())?;
    let mask = RadialMask::band(img.height, img.width, 0.0, cutoff)?;
    band_fidelity(img, target, &mask, "low")
}

/// Mirror of [`content_fidelity`] over the `(cutoff, 1]` high band.
pub fn style_fidelity(img: &ImageGrid, target: &ImageGrid, cutoff: f64) -> Result<f64> {
    ensure_same_dims(img.dims(), target.dims())?;
    let mask = RadialMask::band_above(img.height, img.width, cutoff, 1.0)?;
    band_fidelity(img, target, &mask, "high")
}

fn band_fidelity(
    img: &ImageGrid,
    target: &ImageGrid,
    mask: &RadialMask,
    band: &str,
) -> Result<f64> {
    let target_band = band_filter(target, mask)?;
    let reference = target_band.l2_norm();
    // Round-off from the transform pair leaves ~1e-16 residue in empty bands.
    if reference <= 1e-12 * target.l2_norm().max(1.0) {
        return Err(Error::DegenerateTarget(format!(
            "target has no energy in the {band} band"
        )));
    }
    let residual = band_filter(img, mask)?.sub(&target_band)?.l2_norm();
    Ok(1.0 - residual / reference)
}

pub(crate) fn ensure_same_dims(a: (usize, usize, usize), b: (usize, usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {}x{}x{} vs {}x{}x{}",
            a.0, a.1, a.2, b.0, b.1, b.2
        )));
    }
    Ok(())
}
