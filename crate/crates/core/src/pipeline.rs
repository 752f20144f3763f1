//! Toy-backend generation, fidelity scoring and ablations.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiler::{profile_adapter, ImportanceProfile, Metric};
use crate::scheduler::{ablate_steps, build_schedule, Choice, Mode, RemovalPolicy, SwitchSchedule};
use crate::signal::{content_fidelity, style_fidelity, ImageGrid};
use crate::toy::{run_trajectory, StepModel, ToyConfig, ToyModels, Trajectory};

/// Radius separating the "content" low band from the "style" high band when
/// scoring toy generations.
pub const FIDELITY_CUTOFF: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterRole {
    Content,
    Style,
}

impl AdapterRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AdapterRole::Content => "content",
            AdapterRole::Style => "style",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fidelities {
    pub content_fidelity: f64,
    pub style_fidelity: f64,
}

impl Fidelities {
    pub fn sum(&self) -> f64 {
        self.content_fidelity + self.style_fidelity
    }

    pub fn of(&self, role: AdapterRole) -> f64 {
        match role {
            AdapterRole::Content => self.content_fidelity,
            AdapterRole::Style => self.style_fidelity,
        }
    }
}

pub fn score(image: &ImageGrid, models: &ToyModels) -> Result<Fidelities> {
    Ok(Fidelities {
        content_fidelity: content_fidelity(image, &models.content.target, FIDELITY_CUTOFF)?,
        style_fidelity: style_fidelity(image, &models.style.target, FIDELITY_CUTOFF)?,
    })
}

/// Both adapter profiles for the toy pair, trajectory noise from `seed`.
pub fn toy_profiles(
    config: &ToyConfig,
    models: &ToyModels,
    seed: u64,
    metric: &Metric,
) -> Result<(ImportanceProfile, ImportanceProfile)> {
    let t = config.total_steps;
    let content = profile_adapter(
        "content",
        &models.base,
        &models.content,
        t,
        seed,
        metric.clone(),
    )?;
    let style = profile_adapter(
        "style",
        &models.base,
        &models.style,
        t,
        seed,
        metric.clone(),
    )?;
    Ok((content, style))
}

/// Runs the toy trajectory that follows `schedule` step by step.
pub fn generate(
    models: &ToyModels,
    schedule: &SwitchSchedule,
    seed: u64,
    dims: (usize, usize, usize),
) -> Result<Trajectory> {
    schedule.validate()?;
    run_trajectory(
        |t| match schedule.choice(t) {
            Choice::Content => StepModel::Single(&models.content),
            Choice::Style => StepModel::Single(&models.style),
            Choice::Merge => StepModel::Average(&models.content, &models.style),
        },
        seed,
        schedule.total_steps,
        dims,
    )
}

/// Single-adapter run in which the base model replaces the adapter at the
/// `removed` steps.
pub fn run_with_removed_steps(
    models: &ToyModels,
    role: AdapterRole,
    removed: &BTreeSet<usize>,
    seed: u64,
    total_steps: usize,
    dims: (usize, usize, usize),
) -> Result<Trajectory> {
    let adapter = match role {
        AdapterRole::Content => &models.content,
        AdapterRole::Style => &models.style,
    };
    run_trajectory(
        |t| {
            if removed.contains(&t) {
                StepModel::Single(&models.base)
            } else {
                StepModel::Single(adapter)
            }
        },
        seed,
        total_steps,
        dims,
    )
}

/// Fidelity lost, against the adapter's own target, by replacing the given
/// steps with the base model.
pub fn removal_loss(
    models: &ToyModels,
    role: AdapterRole,
    removed: &BTreeSet<usize>,
    seed: u64,
    total_steps: usize,
    dims: (usize, usize, usize),
) -> Result<f64> {
    let full = run_with_removed_steps(models, role, &BTreeSet::new(), seed, total_steps, dims)?;
    let ablated = run_with_removed_steps(models, role, removed, seed, total_steps, dims)?;
    Ok(score(full.last(), models)?.of(role) - score(ablated.last(), models)?.of(role))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalRecord {
    pub adapter: AdapterRole,
    pub policy: RemovalPolicy,
    pub k: usize,
    /// Mean fidelity loss over the trajectory seeds.
    pub mean_fidelity_delta: f64,
    pub per_seed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub metric: Metric,
    pub mode: Mode,
    pub mean_content_fidelity: f64,
    pub mean_style_fidelity: f64,
    pub mean_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub pair_id: String,
    pub trajectory_seeds: Vec<u64>,
    pub schedule_seeds: Vec<u64>,
    pub step_removal: Vec<RemovalRecord>,
    pub switch_sweep: Vec<SweepRecord>,
}

/// Mean fidelities of `mode` over several schedule seeds. Profiles and the
/// generation trajectory share `trajectory_seed`.
pub fn mode_fidelity(
    config: &ToyConfig,
    models: &ToyModels,
    profiles: Option<(&ImportanceProfile, &ImportanceProfile)>,
    mode: Mode,
    trajectory_seed: u64,
    schedule_seeds: &[u64],
) -> Result<Fidelities> {
    let runs = schedule_seeds
        .par_iter()
        .map(|&s| {
            let schedule = build_schedule(mode, config.total_steps, profiles, s)?;
            let traj = generate(models, &schedule, trajectory_seed, config.dims())?;
            score(traj.last(), models)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = runs.len().max(1) as f64;
    Ok(Fidelities {
        content_fidelity: runs.iter().map(|f| f.content_fidelity).sum::<f64>() / n,
        style_fidelity: runs.iter().map(|f| f.style_fidelity).sum::<f64>() / n,
    })
}

/// Step-removal and metric × mode sweeps on the toy backend.
pub fn ablation_report(
    config: &ToyConfig,
    k_list: &[usize],
    policies: &[RemovalPolicy],
    trajectory_seeds: &[u64],
    schedule_seeds: &[u64],
) -> Result<AblationReport> {
    let models = config.models()?;
    let t = config.total_steps;
    if let Some(k) = k_list.iter().find(|k| **k > t) {
        return Err(Error::config(
            "ablation.k",
            format!("k = {k} exceeds {t} steps"),
        ));
    }
    if trajectory_seeds.is_empty() || schedule_seeds.is_empty() {
        return Err(Error::config(
            "ablation.seeds",
            "at least one seed is required",
        ));
    }

    let profiles = trajectory_seeds
        .par_iter()
        .map(|&seed| toy_profiles(config, &models, seed, &Metric::Freq2))
        .collect::<Result<Vec<_>>>()?;

    let mut jobs = Vec::new();
    for role in [AdapterRole::Content, AdapterRole::Style] {
        for &policy in policies {
            for &k in k_list {
                jobs.push((role, policy, k));
            }
        }
    }
    let step_removal = jobs
        .par_iter()
        .map(|&(role, policy, k)| {
            let per_seed = trajectory_seeds
                .iter()
                .zip(&profiles)
                .map(|(&seed, (pc, ps))| {
                    let profile = match role {
                        AdapterRole::Content => pc,
                        AdapterRole::Style => ps,
                    };
                    let removed = ablate_steps(profile, k, policy, seed)?;
                    removal_loss(&models, role, &removed, seed, t, config.dims())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RemovalRecord {
                adapter: role,
                policy,
                k,
                mean_fidelity_delta: per_seed.iter().sum::<f64>() / per_seed.len() as f64,
                per_seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let trajectory_seed = trajectory_seeds[0];
    let mut switch_sweep = Vec::new();
    for metric in Metric::ablation_set() {
        let (pc, ps) = toy_profiles(config, &models, trajectory_seed, &metric)?;
        for mode in [Mode::Dynamic, Mode::Fixed, Mode::Random] {
            let f = mode_fidelity(
                config,
                &models,
                Some((&pc, &ps)),
                mode,
                trajectory_seed,
                schedule_seeds,
            )?;
            switch_sweep.push(SweepRecord {
                metric: metric.clone(),
                mode,
                mean_content_fidelity: f.content_fidelity,
                mean_style_fidelity: f.style_fidelity,
                mean_sum: f.sum(),
            });
        }
    }

    Ok(AblationReport {
        pair_id: config.pair_id(),
        trajectory_seeds: trajectory_seeds.to_vec(),
        schedule_seeds: schedule_seeds.to_vec(),
        step_removal,
        switch_sweep,
    })
}
