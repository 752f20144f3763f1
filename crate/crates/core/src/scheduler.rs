//! Per-step adapter selection.
//!
//! For step `t` of `T` the mixing ratio
//! `x_t = δs·r / (δs·r + δc·(1 − r))` with `r = t/T` weighs style importance
//! against content importance, the cosine map `η_t = ½(1 + cos πx_t)` turns it
//! into a preference for the content adapter, and a uniform draw decides.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiler::ImportanceProfile;
use crate::toy::seeded_rng;

const DRAW_STREAM: u64 = 7;
const ABLATION_STREAM: u64 = 8;
pub const SCHEDULE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Dynamic,
    Fixed,
    Random,
    ContentOnly,
    StyleOnly,
    Merge,
}

impl Mode {
    /// Modes whose choices come from comparing etas with draws.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Mode::Dynamic | Mode::Fixed | Mode::Random)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Dynamic => "dynamic",
            Mode::Fixed => "fixed",
            Mode::Random => "random",
            Mode::ContentOnly => "content_only",
            Mode::StyleOnly => "style_only",
            Mode::Merge => "merge",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dynamic" => Mode::Dynamic,
            "fixed" => Mode::Fixed,
            "random" => Mode::Random,
            "content_only" => Mode::ContentOnly,
            "style_only" => Mode::StyleOnly,
            "merge" => Mode::Merge,
            _ => return Err(Error::InvalidInput(format!("unknown mode `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    Content,
    Style,
    Merge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchSchedule {
    pub version: u32,
    pub total_steps: usize,
    pub mode: Mode,
    pub seed: u64,
    pub etas: Vec<f64>,
    pub draws: Vec<f64>,
    pub choices: Vec<Choice>,
}

fn check_step(t: usize, total_steps: usize) -> Result<()> {
    if t == 0 || t > total_steps {
        return Err(Error::InvalidInput(format!(
            "step {t} outside 1..={total_steps}"
        )));
    }
    Ok(())
}

/// Mixing ratio `x_t`. Falls back to `t/T` when both weighted terms vanish.
pub fn mixing_ratio(delta_c: f64, delta_s: f64, t: usize, total_steps: usize) -> Result<f64> {
    check_step(t, total_steps)?;
    if !(delta_c >= 0.0 && delta_s >= 0.0) || !delta_c.is_finite() || !delta_s.is_finite() {
        return Err(Error::InvalidInput(format!(
            "deltas must be finite and non-negative, got content {delta_c}, style {delta_s}"
        )));
    }
    let ratio = t as f64 / total_steps as f64;
    // Equal importance cancels exactly; computing it would only add round-off.
    if delta_c == delta_s {
        return Ok(ratio);
    }
    let style_term = delta_s * ratio;
    let denominator = style_term + delta_c * (1.0 - ratio);
    if denominator == 0.0 {
        return Ok(ratio);
    }
    Ok(style_term / denominator)
}

/// `η = ½(1 + cos πx)`.
pub fn switch_coefficient(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidInput(format!(
            "mixing ratio must be in [0, 1], got {x}"
        )));
    }
    Ok(0.5 * (1.0 + (std::f64::consts::PI * x).cos()))
}

/// Content when `eta > draw`, style when `eta < draw`; a tie goes to content.
pub fn select_adapter(eta: f64, draw: f64) -> Choice {
    if eta >= draw {
        Choice::Content
    } else {
        Choice::Style
    }
}

/// `T` uniform draws in `[0, 1)` from the schedule seed.
pub fn schedule_draws(seed: u64, total_steps: usize) -> Vec<f64> {
    let mut rng = seeded_rng(seed, DRAW_STREAM);
    (0..total_steps).map(|_| rng.random::<f64>()).collect()
}

impl SwitchSchedule {
    /// Assembles a schedule from explicit etas and draws.
    pub fn from_parts(mode: Mode, seed: u64, etas: Vec<f64>, draws: Vec<f64>) -> Result<Self> {
        if etas.len() != draws.len() {
            return Err(Error::InvalidInput(format!(
                "{} etas but {} draws",
                etas.len(),
                draws.len()
            )));
        }
        if etas.iter().chain(&draws).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput(
                "etas and draws must lie in [0, 1]".into(),
            ));
        }
        let choices = match mode {
            Mode::ContentOnly => vec![Choice::Content; etas.len()],
            Mode::StyleOnly => vec![Choice::Style; etas.len()],
            Mode::Merge => vec![Choice::Merge; etas.len()],
            _ => etas
                .iter()
                .zip(&draws)
                .map(|(&e, &r)| select_adapter(e, r))
                .collect(),
        };
        Ok(Self {
            version: SCHEDULE_VERSION,
            total_steps: etas.len(),
            mode,
            seed,
            etas,
            draws,
            choices,
        })
    }

    /// Etas with draws generated from `seed`.
    pub fn from_etas(mode: Mode, seed: u64, etas: Vec<f64>) -> Result<Self> {
        let draws = schedule_draws(seed, etas.len());
        Self::from_parts(mode, seed, etas, draws)
    }

    pub fn content_count(&self) -> usize {
        self.choices
            .iter()
            .filter(|c| **c == Choice::Content)
            .count()
    }

    /// Choice at 1-based step `t`.
    pub fn choice(&self, t: usize) -> Choice {
        self.choices[t - 1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEDULE_VERSION {
            return Err(Error::Format(format!(
                "unsupported schedule version {}",
                self.version
            )));
        }
        let t = self.total_steps;
        if self.etas.len() != t || self.draws.len() != t || self.choices.len() != t {
            return Err(Error::Data(
                "schedule arrays must all have total_steps entries".into(),
            ));
        }
        let rebuilt =
            Self::from_parts(self.mode, self.seed, self.etas.clone(), self.draws.clone())?;
        if rebuilt.choices != self.choices {
            return Err(Error::Data(
                "schedule choices disagree with etas and draws".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schedule serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schedule: SwitchSchedule =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("schedule JSON: {e}")))?;
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Per-step etas for `mode`.
pub fn schedule_etas(
    mode: Mode,
    total_steps: usize,
    profiles: Option<(&ImportanceProfile, &ImportanceProfile)>,
) -> Result<Vec<f64>> {
    if total_steps < 2 {
        return Err(Error::InvalidInput(format!(
            "a schedule needs at least 2 steps, got {total_steps}"
        )));
    }
    if let Some((c, s)) = profiles {
        for p in [c, s] {
            p.validate()?;
            if p.total_steps != total_steps {
                return Err(Error::InvalidInput(format!(
                    "profile `{}` has {} steps, schedule has {total_steps}",
                    p.adapter_id, p.total_steps
                )));
            }
        }
        if c.source != s.source {
            return Err(Error::InvalidInput(
                "profiles come from different sources".into(),
            ));
        }
    }
    let steps = 1..=total_steps;
    match mode {
        Mode::Dynamic => {
            let (c, s) = profiles.ok_or_else(|| {
                Error::config(
                    "profiles",
                    "dynamic mode needs both content and style profiles",
                )
            })?;
            steps
                .map(|t| switch_coefficient(mixing_ratio(c.delta(t), s.delta(t), t, total_steps)?))
                .collect()
        }
        Mode::Fixed => steps
            .map(|t| switch_coefficient(t as f64 / total_steps as f64))
            .collect(),
        Mode::Random | Mode::Merge => Ok(vec![0.5; total_steps]),
        Mode::ContentOnly => Ok(vec![1.0; total_steps]),
        Mode::StyleOnly => Ok(vec![0.0; total_steps]),
    }
}

pub fn build_schedule(
    mode: Mode,
    total_steps: usize,
    profiles: Option<(&ImportanceProfile, &ImportanceProfile)>,
    seed: u64,
) -> Result<SwitchSchedule> {
    let etas = schedule_etas(mode, total_steps, profiles)?;
    SwitchSchedule::from_etas(mode, seed, etas)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemovalPolicy {
    Top,
    Bottom,
    Random,
}

impl FromStr for RemovalPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top" => Ok(RemovalPolicy::Top),
            "bottom" => Ok(RemovalPolicy::Bottom),
            "random" => Ok(RemovalPolicy::Random),
            _ => Err(Error::InvalidInput(format!("unknown removal policy `{s}`"))),
        }
    }
}

/// 1-based steps to remove: the `k` largest deltas, the `k` smallest, or a
/// uniform sample. Ties rank the lower step first.
pub fn ablate_steps(
    profile: &ImportanceProfile,
    k: usize,
    policy: RemovalPolicy,
    seed: u64,
) -> Result<BTreeSet<usize>> {
    let n = profile.deltas.len();
    if k > n {
        return Err(Error::InvalidInput(format!(
            "cannot remove {k} of {n} steps"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    match policy {
        RemovalPolicy::Top => order.sort_by(|&a, &b| {
            profile.deltas[b]
                .total_cmp(&profile.deltas[a])
                .then(a.cmp(&b))
        }),
        RemovalPolicy::Bottom => order.sort_by(|&a, &b| {
            profile.deltas[a]
                .total_cmp(&profile.deltas[b])
                .then(a.cmp(&b))
        }),
        RemovalPolicy::Random => {
            let mut rng = seeded_rng(seed, ABLATION_STREAM);
            return Ok(index::sample(&mut rng, n, k)
                .into_iter()
                .map(|i| i + 1)
                .collect());
        }
    }
    Ok(order.into_iter().take(k).map(|i| i + 1).collect())
}
