//! Per-step adapter importance.
//!
//! For every step the adapter and the base model are evaluated on the same
//! latent and the difference of their outputs is measured. The default metric
//! takes the L2 norm of the *change* of that difference between consecutive
//! steps, in the DFT magnitude domain.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::signal::{dft_magnitude, ensure_same_dims, ImageGrid};
use crate::toy::{initial_noise, Denoiser, DenoiserSpec};

/// Offset added before inverting deltas in [`reverse_profile`].
pub const REVERSE_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Spatial,
    Frequency,
}

/// How step importance is measured.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum Metric {
    /// Second-order difference of DFT magnitudes (default).
    #[default]
    Freq2,
    Freq1,
    Spatial2,
    Spatial1,
    /// `1 / (δ + ε)` of the inner metric: small changes rank as important.
    Reverse(Box<Metric>),
}

impl Metric {
    pub fn reverse_of(inner: Metric) -> Self {
        Metric::Reverse(Box::new(inner))
    }

    /// The metrics swept by the ablation report.
    pub fn ablation_set() -> Vec<Metric> {
        vec![
            Metric::Freq2,
            Metric::Freq1,
            Metric::Spatial2,
            Metric::Spatial1,
            Metric::reverse_of(Metric::Freq2),
        ]
    }

    fn base(&self) -> (Domain, bool) {
        match self {
            Metric::Freq2 => (Domain::Frequency, true),
            Metric::Freq1 => (Domain::Frequency, false),
            Metric::Spatial2 => (Domain::Spatial, true),
            Metric::Spatial1 => (Domain::Spatial, false),
            Metric::Reverse(inner) => inner.base(),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Freq2 => f.write_str("freq2"),
            Metric::Freq1 => f.write_str("freq1"),
            Metric::Spatial2 => f.write_str("spatial2"),
            Metric::Spatial1 => f.write_str("spatial1"),
            Metric::Reverse(inner) => write!(f, "reverse-of({inner})"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "freq2" => Ok(Metric::Freq2),
            "freq1" => Ok(Metric::Freq1),
            "spatial2" => Ok(Metric::Spatial2),
            "spatial1" => Ok(Metric::Spatial1),
            "reverse" => Ok(Metric::reverse_of(Metric::Freq2)),
            _ => s
                .strip_prefix("reverse-of(")
                .and_then(|rest| rest.strip_suffix(')'))
                .map(|inner| inner.parse().map(Metric::reverse_of))
                .unwrap_or_else(|| Err(Error::InvalidInput(format!("unknown metric `{s}`")))),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileSource {
    Toy,
    Trace,
}

/// Adapter-minus-base difference at one step, kept in the metric's domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyState(Vec<f64>);

impl DiscrepancyState {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `‖self − previous‖₂`.
    pub fn change_from(&self, previous: &DiscrepancyState) -> f64 {
        self.0
            .iter()
            .zip(&previous.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn step_discrepancy(
    adapter_out: &ImageGrid,
    base_out: &ImageGrid,
    domain: Domain,
) -> Result<DiscrepancyState> {
    ensure_same_dims(adapter_out.dims(), base_out.dims())?;
    let diff = match domain {
        Domain::Spatial => adapter_out
            .data()
            .iter()
            .zip(base_out.data())
            .map(|(a, b)| a - b)
            .collect(),
        Domain::Frequency => {
            let a = dft_magnitude(adapter_out)?;
            let b = dft_magnitude(base_out)?;
            a.magnitudes()
                .iter()
                .zip(b.magnitudes())
                .map(|(x, y)| x - y)
                .collect()
        }
    };
    Ok(DiscrepancyState(diff))
}

/// Per-step importance of one adapter under one metric. `deltas[t - 1]`
/// belongs to denoising step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceProfile {
    pub adapter_id: String,
    pub metric: Metric,
    pub total_steps: usize,
    pub seed: u64,
    pub source: ProfileSource,
    #[serde(serialize_with = "serialize_sig9")]
    pub deltas: Vec<f64>,
}

/// Rounds to 9 significant digits; JSON then carries the shortest
/// representation of the rounded value.
pub(crate) fn round_sig9(x: f64) -> f64 {
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn serialize_sig9<S: Serializer>(
    values: &[f64],
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    serializer.collect_seq(values.iter().map(|v| round_sig9(*v)))
}

impl ImportanceProfile {
    pub fn validate(&self) -> Result<()> {
        if self.deltas.len() != self.total_steps {
            return Err(Error::Data(format!(
                "profile has {} deltas for {} steps",
                self.deltas.len(),
                self.total_steps
            )));
        }
        if let Some(i) = self.deltas.iter().position(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Data(format!(
                "delta for step {} is negative or non-finite",
                i + 1
            )));
        }
        Ok(())
    }

    /// Importance at 1-based step `t`.
    pub fn delta(&self, t: usize) -> f64 {
        self.deltas[t - 1]
    }

    /// 1-based step with the largest delta; ties go to the earlier step.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, d) in self.deltas.iter().enumerate() {
            if *d > self.deltas[best] {
                best = i;
            }
        }
        best + 1
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("profile serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let profile: ImportanceProfile =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("profile JSON: {e}")))?;
        profile.validate()?;
        Ok(profile)
    }
}

/// Deltas from paired per-step outputs of an adapter and the base model.
pub fn deltas_from_frames(
    adapter_frames: &[ImageGrid],
    base_frames: &[ImageGrid],
    metric: &Metric,
) -> Result<Vec<f64>> {
    if adapter_frames.len() != base_frames.len() {
        return Err(Error::InvalidInput(format!(
            "{} adapter frames but {} base frames",
            adapter_frames.len(),
            base_frames.len()
        )));
    }
    let (domain, second_order) = metric.base();
    let mut deltas = Vec::with_capacity(adapter_frames.len());
    let mut previous: Option<DiscrepancyState> = None;
    for (a, b) in adapter_frames.iter().zip(base_frames) {
        let state = step_discrepancy(a, b, domain)?;
        let delta = match (&previous, second_order) {
            (Some(prev), true) => state.change_from(prev),
            _ => state.norm(),
        };
        deltas.push(delta);
        previous = Some(state);
    }
    if matches!(metric, Metric::Reverse(_)) {
        reverse_in_place(&mut deltas, metric);
    }
    Ok(deltas)
}

fn reverse_in_place(deltas: &mut [f64], metric: &Metric) {
    // Nested reversals apply once per level.
    if let Metric::Reverse(inner) = metric {
        reverse_in_place(deltas, inner);
        for d in deltas.iter_mut() {
            *d = 1.0 / (*d + REVERSE_EPSILON);
        }
    }
}

/// Frames as the profiler observes them: stored at `f32` precision, the same
/// precision trace files use, so both backends see identical inputs.
pub fn observe(frame: &ImageGrid) -> ImageGrid {
    frame.map(|v| v as f32 as f64)
}

/// Runs one adapter-driven trajectory and returns, per step, the adapter's
/// and the base model's output on the shared latent `h_{t-1}`.
pub fn paired_frames(
    base: &DenoiserSpec,
    adapter: &DenoiserSpec,
    total_steps: usize,
    seed: u64,
) -> Result<(Vec<ImageGrid>, Vec<ImageGrid>)> {
    if total_steps < 2 {
        return Err(Error::InvalidInput(format!(
            "profiling needs at least 2 steps, got {total_steps}"
        )));
    }
    ensure_same_dims(base.dims(), adapter.dims())?;
    let (h, w, c) = adapter.dims();
    let mut latent = initial_noise(seed, h, w, c)?;
    let mut adapter_frames = Vec::with_capacity(total_steps);
    let mut base_frames = Vec::with_capacity(total_steps);
    for t in 1..=total_steps {
        let a = adapter.denoise(&latent, t, total_steps)?;
        let b = base.denoise(&latent, t, total_steps)?;
        adapter_frames.push(observe(&a));
        base_frames.push(observe(&b));
        latent = a;
    }
    Ok((adapter_frames, base_frames))
}

pub fn profile_adapter(
    adapter_id: &str,
    base: &DenoiserSpec,
    adapter: &DenoiserSpec,
    total_steps: usize,
    seed: u64,
    metric: Metric,
) -> Result<ImportanceProfile> {
    let (adapter_frames, base_frames) = paired_frames(base, adapter, total_steps, seed)?;
    let deltas = deltas_from_frames(&adapter_frames, &base_frames, &metric)?;
    Ok(ImportanceProfile {
        adapter_id: adapter_id.to_string(),
        metric,
        total_steps,
        seed,
        source: ProfileSource::Toy,
        deltas,
    })
}

/// `δ'_t = 1 / (δ_t + ε)`.
pub fn reverse_profile(p: &ImportanceProfile) -> ImportanceProfile {
    ImportanceProfile {
        metric: Metric::reverse_of(p.metric.clone()),
        deltas: p
            .deltas
            .iter()
            .map(|d| 1.0 / (d + REVERSE_EPSILON))
            .collect(),
        ..p.clone()
    }
}
