//! Command-line front end: run configuration, argument parsing and the
//! commands themselves.
//!
//! Commands write their artifacts under the output directory and report what
//! they did, one line per event, to the supplied writer.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::{refine, HttpClient, MockClient, RefineRequest, VlmClient};
use crate::error::{Error, Result};
use crate::pipeline::{ablation_report, generate, score, AdapterRole};
use crate::profiler::{profile_adapter, ImportanceProfile, Metric};
use crate::scheduler::{build_schedule, Mode, RemovalPolicy, SwitchSchedule};
use crate::signal::ImageGrid;
use crate::toy::ToyConfig;
use crate::trace::{profile_from_trace, read_trace};
use crate::weights::{analyze_weights, comparison_table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Toy,
    Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientKind {
    #[default]
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub client: ClientKind,
    pub endpoint: Option<String>,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Canned replies for the mock client.
    pub mock_replies: Option<PathBuf>,
    pub content_images: Vec<PathBuf>,
    pub style_image: Option<PathBuf>,
    pub class_name: String,
    pub style_name: String,
    pub content_limit: usize,
    pub style_limit: usize,
    pub content_trigger: String,
    pub style_trigger: String,
    pub retries: usize,
    pub max_tokens: u32,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            client: ClientKind::Http,
            endpoint: None,
            model: String::new(),
            api_key_env: "VLM_API_KEY".into(),
            timeout_secs: 120,
            mock_replies: None,
            content_images: Vec::new(),
            style_image: None,
            class_name: String::new(),
            style_name: String::new(),
            content_limit: 30,
            style_limit: 25,
            content_trigger: String::new(),
            style_trigger: String::new(),
            retries: 2,
            max_tokens: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub k_list: Vec<usize>,
    pub policies: Vec<RemovalPolicy>,
    pub trajectory_seeds: Vec<u64>,
    pub schedule_seeds: Vec<u64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            k_list: vec![0, 5, 10, 20],
            policies: vec![
                RemovalPolicy::Top,
                RemovalPolicy::Bottom,
                RemovalPolicy::Random,
            ],
            trajectory_seeds: (0..10).collect(),
            schedule_seeds: (0..20).collect(),
        }
    }
}

/// Everything a command needs. Loaded from JSON; command-line flags win.
/// Relative paths inside a config file resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend: Backend,
    pub toy: ToyConfig,
    pub trace_path: Option<PathBuf>,
    pub metric: Metric,
    pub mode: Mode,
    /// Trajectory seed: initial noise for profiling and generation.
    pub seed: u64,
    /// Seed of the schedule draws; defaults to `seed`.
    pub schedule_seed: Option<u64>,
    pub out: PathBuf,
    pub alignment: AlignmentConfig,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Toy,
            toy: ToyConfig::default(),
            trace_path: None,
            metric: Metric::Freq2,
            mode: Mode::Dynamic,
            seed: 0,
            schedule_seed: None,
            out: PathBuf::from("out"),
            alignment: AlignmentConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

fn rebase(dir: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = dir.join(&*path);
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
        let mut config = Self::from_json(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        rebase(dir, &mut config.out);
        if let Some(p) = config.trace_path.as_mut() {
            rebase(dir, p);
        }
        let a = &mut config.alignment;
        for p in a
            .content_images
            .iter_mut()
            .chain(a.style_image.as_mut())
            .chain(a.mock_replies.as_mut())
        {
            rebase(dir, p);
        }
        Ok(config)
    }

    pub fn schedule_seed(&self) -> u64 {
        self.schedule_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.toy.validate()?;
        if self.backend == Backend::Trace && self.trace_path.is_none() {
            return Err(Error::config("trace_path", "required by the trace backend"));
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "loraswitch",
    version,
    about = "Per-step switching between a content and a style adapter"
)]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<Backend>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct ProfileArgs {
    /// freq2, freq1, spatial2, spatial1 or reverse-of(<metric>).
    #[arg(long)]
    pub metric: Option<Metric>,
}

#[derive(Debug, Args, Default)]
pub struct ScheduleArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// dynamic, fixed, random, merge, content_only or style_only.
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub schedule_seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute (or reuse) the content and style importance profiles.
    Profile(ProfileArgs),
    /// Build a switch schedule from the profiles.
    Schedule(ScheduleArgs),
    /// Generate under a schedule and score the result (toy backend).
    Generate(ScheduleArgs),
    /// Step-removal and metric/mode sweeps (toy backend).
    Ablate {
        /// Comma-separated numbers of removed steps.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        /// Comma-separated removal policies: top, bottom, random.
        #[arg(long, value_delimiter = ',')]
        policies: Option<Vec<RemovalPolicy>>,
    },
    /// Ask a vision-language model for the content and style descriptions.
    RefinePrompt,
    /// Magnitude statistics of safetensors weight files.
    AnalyzeWeights {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

/// Resolves the configuration file and global flags into one [`RunConfig`].
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Some(backend) = cli.backend {
        config.backend = backend;
    }
    Ok(config)
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p);
    }
    format!("{:x}", hasher.finalize())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::storage(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::storage(path, e))
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn say(log: &mut dyn Write, line: impl AsRef<str>) {
    let _ = writeln!(log, "{}", line.as_ref());
}

/// Identifier of the adapter pair behind the configured backend.
pub fn pair_id(config: &RunConfig) -> Result<String> {
    match config.backend {
        Backend::Toy => Ok(config.toy.pair_id()),
        Backend::Trace => {
            let path = config
                .trace_path
                .as_ref()
                .ok_or_else(|| Error::config("trace_path", "required by the trace backend"))?;
            let bytes = fs::read(path).map_err(|e| Error::storage(path, e))?;
            Ok(format!("trace-{}", &sha256_hex(&[&bytes])[..16]))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profiles {
    pub content: ImportanceProfile,
    pub style: ImportanceProfile,
    pub cache_hit: bool,
}

fn compute_profiles(
    config: &RunConfig,
    metric: &Metric,
) -> Result<(ImportanceProfile, ImportanceProfile)> {
    match config.backend {
        Backend::Toy => {
            let models = config.toy.models()?;
            let t = config.toy.total_steps;
            Ok((
                profile_adapter(
                    "content",
                    &models.base,
                    &models.content,
                    t,
                    config.seed,
                    metric.clone(),
                )?,
                profile_adapter(
                    "style",
                    &models.base,
                    &models.style,
                    t,
                    config.seed,
                    metric.clone(),
                )?,
            ))
        }
        Backend::Trace => {
            let trace = read_trace(config.trace_path.as_ref().expect("validated"))?;
            Ok((
                profile_from_trace(&trace, AdapterRole::Content, metric.clone())?,
                profile_from_trace(&trace, AdapterRole::Style, metric.clone())?,
            ))
        }
    }
}

fn read_cached(
    dir: &Path,
    metric: &Metric,
) -> Option<Result<(ImportanceProfile, ImportanceProfile)>> {
    let content = fs::read_to_string(dir.join("content.json")).ok()?;
    let style = fs::read_to_string(dir.join("style.json")).ok()?;
    Some((|| {
        let c = ImportanceProfile::from_json(&content)?;
        let s = ImportanceProfile::from_json(&style)?;
        if &c.metric != metric || &s.metric != metric {
            return Err(Error::Data(
                "cached profiles were computed with another metric".into(),
            ));
        }
        Ok((c, s))
    })())
}

/// Profiles for the configured pair, reusing `out/cache` when a previous run
/// computed them for the same pair, metric and seed. Profiles are computed
/// once per pair.
pub fn load_or_compute_profiles(
    config: &RunConfig,
    metric: &Metric,
    log: &mut dyn Write,
) -> Result<Profiles> {
    config.validate()?;
    let pair = pair_id(config)?;
    let key = sha256_hex(&[
        pair.as_bytes(),
        metric.to_string().as_bytes(),
        &config.seed.to_le_bytes(),
    ]);
    let dir = config.out.join("cache").join("profiles").join(&key[..24]);
    match read_cached(&dir, metric) {
        Some(Ok((content, style))) => {
            say(
                log,
                format!(
                    "cache hit: profiles for {pair} ({metric}, seed {}) from {}",
                    config.seed,
                    dir.display()
                ),
            );
            return Ok(Profiles {
                content,
                style,
                cache_hit: true,
            });
        }
        Some(Err(e)) => {
            log::warn!("ignoring corrupt profile cache {}: {e}", dir.display());
            say(
                log,
                format!(
                    "warning: corrupt profile cache at {} ({e}); recomputing",
                    dir.display()
                ),
            );
        }
        None => {}
    }
    let (content, style) = compute_profiles(config, metric)?;
    write_file(&dir.join("content.json"), content.to_json().as_bytes())?;
    write_file(&dir.join("style.json"), style.to_json().as_bytes())?;
    say(
        log,
        format!(
            "computed profiles for {pair} ({metric}, seed {})",
            config.seed
        ),
    );
    // Reload so callers see exactly what the cache will return next time.
    let (content, style) = read_cached(&dir, metric).expect("cache just written")?;
    Ok(Profiles {
        content,
        style,
        cache_hit: false,
    })
}

pub fn cmd_profile(config: &RunConfig, metric: &Metric, log: &mut dyn Write) -> Result<Profiles> {
    let profiles = load_or_compute_profiles(config, metric, log)?;
    for p in [&profiles.content, &profiles.style] {
        let path = config
            .out
            .join("profiles")
            .join(format!("{}.json", p.adapter_id));
        write_file(&path, p.to_json().as_bytes())?;
        say(
            log,
            format!("wrote {} (argmax step {})", path.display(), p.argmax()),
        );
    }
    Ok(profiles)
}

pub fn cmd_schedule(config: &RunConfig, log: &mut dyn Write) -> Result<SwitchSchedule> {
    let profiles = match config.mode {
        Mode::Dynamic => Some(load_or_compute_profiles(config, &config.metric, log)?),
        _ => None,
    };
    let total_steps = match (&profiles, config.backend) {
        (Some(p), _) => p.content.total_steps,
        (None, Backend::Toy) => config.toy.total_steps,
        (None, Backend::Trace) => {
            config.validate()?;
            read_trace(config.trace_path.as_ref().expect("validated"))?.total_steps
        }
    };
    let schedule = build_schedule(
        config.mode,
        total_steps,
        profiles.as_ref().map(|p| (&p.content, &p.style)),
        config.schedule_seed(),
    )?;
    let path = config.out.join("schedule.json");
    write_file(&path, schedule.to_json().as_bytes())?;
    say(
        log,
        format!(
            "wrote {} ({} mode, {} of {} steps content)",
            path.display(),
            schedule.mode,
            schedule.content_count(),
            schedule.total_steps
        ),
    );
    Ok(schedule)
}

/// Binary PGM for one channel, PPM for three; values are stretched linearly
/// from their min..max onto 0..255.
pub fn encode_pnm(image: &ImageGrid) -> Result<Vec<u8>> {
    let (h, w, c) = image.dims();
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => {
            return Err(Error::InvalidInput(format!(
                "cannot write a {c}-channel image as PNM"
            )))
        }
    };
    let data = image.data();
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.extend(data.iter().map(|v| {
        if hi > lo {
            ((v - lo) / (hi - lo) * 255.0).round() as u8
        } else {
            128
        }
    }));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub content_fidelity: f64,
    pub style_fidelity: f64,
}

pub fn cmd_generate(config: &RunConfig, log: &mut dyn Write) -> Result<Option<Metrics>> {
    let schedule = cmd_schedule(config, log)?;
    if config.backend == Backend::Trace {
        say(
            log,
            "notice: the trace backend cannot generate; wrote the schedule only",
        );
        return Ok(None);
    }
    let models = config.toy.models()?;
    let traj = generate(&models, &schedule, config.seed, config.toy.dims())?;
    let f = score(traj.last(), &models)?;
    let metrics = Metrics {
        content_fidelity: f.content_fidelity,
        style_fidelity: f.style_fidelity,
    };
    let ext = if config.toy.dims().2 == 1 {
        "pgm"
    } else {
        "ppm"
    };
    let image_path = config.out.join(format!("final.{ext}"));
    write_file(&image_path, &encode_pnm(traj.last())?)?;
    let metrics_path = config.out.join("metrics.json");
    write_file(&metrics_path, to_pretty_json(&metrics).as_bytes())?;
    say(
        log,
        format!(
            "wrote {} and {}",
            image_path.display(),
            metrics_path.display()
        ),
    );
    say(
        log,
        format!(
            "content_fidelity {:.4}  style_fidelity {:.4}",
            metrics.content_fidelity, metrics.style_fidelity
        ),
    );
    Ok(Some(metrics))
}

pub fn cmd_ablate(config: &RunConfig, log: &mut dyn Write) -> Result<()> {
    if config.backend != Backend::Toy {
        return Err(Error::config("backend", "ablations need the toy backend"));
    }
    config.validate()?;
    let a = &config.ablation;
    let report = ablation_report(
        &config.toy,
        &a.k_list,
        &a.policies,
        &a.trajectory_seeds,
        &a.schedule_seeds,
    )?;
    let path = config.out.join("ablation.json");
    write_file(&path, to_pretty_json(&report).as_bytes())?;

    let mut csv = String::from("adapter,policy,k,mean_fidelity_delta\n");
    for r in &report.step_removal {
        csv.push_str(
            &format!(
                "{},{:?},{},{}\n",
                r.adapter.as_str(),
                r.policy,
                r.k,
                r.mean_fidelity_delta
            )
            .to_lowercase(),
        );
    }
    write_file(&config.out.join("step_removal.csv"), csv.as_bytes())?;
    let mut sweep =
        String::from("metric,mode,mean_content_fidelity,mean_style_fidelity,mean_sum\n");
    for r in &report.switch_sweep {
        sweep.push_str(&format!(
            "{},{},{},{},{}\n",
            r.metric, r.mode, r.mean_content_fidelity, r.mean_style_fidelity, r.mean_sum
        ));
    }
    write_file(&config.out.join("switch_sweep.csv"), sweep.as_bytes())?;
    say(
        log,
        format!(
            "wrote {} with {} removal and {} sweep records",
            path.display(),
            report.step_removal.len(),
            report.switch_sweep.len()
        ),
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineOutput {
    pub content_text: String,
    pub style_text: String,
    pub composed: String,
    pub content_attempts: usize,
    pub style_attempts: usize,
}

fn refine_request(a: &AlignmentConfig) -> Result<RefineRequest> {
    let style_image = a
        .style_image
        .clone()
        .ok_or_else(|| Error::config("alignment.style_image", "required"))?;
    for (field, value) in [
        ("alignment.class_name", &a.class_name),
        ("alignment.style_name", &a.style_name),
    ] {
        if value.trim().is_empty() {
            return Err(Error::config(field, "required"));
        }
    }
    Ok(RefineRequest {
        model: a.model.clone(),
        content_images: a.content_images.clone(),
        style_image,
        class_name: a.class_name.clone(),
        style_name: a.style_name.clone(),
        content_limit: a.content_limit,
        style_limit: a.style_limit,
        content_trigger: a.content_trigger.clone(),
        style_trigger: a.style_trigger.clone(),
        retries: a.retries,
        max_tokens: a.max_tokens,
    })
}

fn make_client(a: &AlignmentConfig) -> Result<Box<dyn VlmClient>> {
    match a.client {
        ClientKind::Mock => {
            let path = a.mock_replies.as_ref().ok_or_else(|| {
                Error::config("alignment.mock_replies", "required by the mock client")
            })?;
            Ok(Box::new(MockClient::from_file(path)?))
        }
        ClientKind::Http => {
            let endpoint = a.endpoint.clone().ok_or_else(|| {
                Error::config("alignment.endpoint", "required by the http client")
            })?;
            if a.model.trim().is_empty() {
                return Err(Error::config(
                    "alignment.model",
                    "required by the http client",
                ));
            }
            let key = std::env::var(&a.api_key_env).ok().filter(|k| !k.is_empty());
            Ok(Box::new(HttpClient::new(
                endpoint,
                key,
                Duration::from_secs(a.timeout_secs),
            )?))
        }
    }
}

/// Runs the refinement once per request; later runs with the same images and
/// settings reuse the cached result.
pub fn cmd_refine(config: &RunConfig, log: &mut dyn Write) -> Result<RefineOutput> {
    let a = &config.alignment;
    let request = refine_request(a)?;
    let client = make_client(a)?;

    let mut key_parts: Vec<Vec<u8>> =
        vec![serde_json::to_vec(&request).expect("request serializes")];
    for p in request.content_images.iter().chain([&request.style_image]) {
        key_parts.push(fs::read(p).map_err(|e| Error::storage(p, e))?);
    }
    let key = sha256_hex(&key_parts.iter().map(Vec::as_slice).collect::<Vec<_>>());
    let cache = config
        .out
        .join("cache")
        .join("refine")
        .join(format!("{}.json", &key[..24]));
    let out_path = config.out.join("refined_prompt.json");

    if let Ok(text) = fs::read_to_string(&cache) {
        match serde_json::from_str::<RefineOutput>(&text) {
            Ok(output) => {
                say(
                    log,
                    format!("cache hit: refined prompt from {}", cache.display()),
                );
                write_file(&out_path, text.as_bytes())?;
                return Ok(output);
            }
            Err(e) => say(
                log,
                format!(
                    "warning: corrupt refine cache at {} ({e}); refining again",
                    cache.display()
                ),
            ),
        }
    }

    let refinement = refine(client.as_ref(), &request)?;
    let output = RefineOutput {
        content_text: refinement.prompt.content.text,
        style_text: refinement.prompt.style.text,
        composed: refinement.prompt.composed,
        content_attempts: refinement.content_attempts,
        style_attempts: refinement.style_attempts,
    };
    let text = to_pretty_json(&output);
    write_file(&cache, text.as_bytes())?;
    write_file(&out_path, text.as_bytes())?;
    say(log, format!("wrote {}", out_path.display()));
    say(log, format!("composed: {}", output.composed));
    Ok(output)
}

pub fn cmd_analyze_weights(
    config: &RunConfig,
    paths: &[PathBuf],
    log: &mut dyn Write,
) -> Result<()> {
    let stats = analyze_weights(paths)?;
    let _ = log.write_all(comparison_table(&stats).as_bytes());
    let path = config.out.join("weights.json");
    write_file(&path, to_pretty_json(&stats).as_bytes())?;
    say(log, format!("wrote {}", path.display()));
    Ok(())
}

/// Executes one parsed command line.
pub fn run(cli: Cli, log: &mut dyn Write) -> Result<()> {
    let mut config = resolve_config(&cli)?;
    match cli.command {
        Command::Profile(args) => {
            let metric = args.metric.unwrap_or_else(|| config.metric.clone());
            cmd_profile(&config, &metric, log).map(|_| ())
        }
        Command::Schedule(args) => {
            apply_schedule_args(&mut config, args);
            cmd_schedule(&config, log).map(|_| ())
        }
        Command::Generate(args) => {
            apply_schedule_args(&mut config, args);
            cmd_generate(&config, log).map(|_| ())
        }
        Command::Ablate { k, policies } => {
            if let Some(k) = k {
                config.ablation.k_list = k;
            }
            if let Some(p) = policies {
                config.ablation.policies = p;
            }
            cmd_ablate(&config, log)
        }
        Command::RefinePrompt => cmd_refine(&config, log).map(|_| ()),
        Command::AnalyzeWeights { paths } => cmd_analyze_weights(&config, &paths, log),
    }
}

fn apply_schedule_args(config: &mut RunConfig, args: ScheduleArgs) {
    if let Some(m) = args.profile.metric {
        config.metric = m;
    }
    if let Some(m) = args.mode {
        config.mode = m;
    }
    if let Some(s) = args.schedule_seed {
        config.schedule_seed = Some(s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("loraswitch").chain(args.iter().copied())).unwrap()
    }

    fn small(out: &Path) -> RunConfig {
        RunConfig {
            toy: ToyConfig {
                total_steps: 8,
                height: 16,
                width: 16,
                ..ToyConfig::default()
            },
            out: out.to_path_buf(),
            ..RunConfig::default()
        }
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(
            &path,
            r#"{"seed": 3, "backend": "trace", "trace_path": "t.fstr", "out": "o"}"#,
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let cfg = resolve_config(&parse(&["--config", p, "profile"])).unwrap();
        assert_eq!((cfg.seed, cfg.backend), (3, Backend::Trace));
        assert_eq!(cfg.trace_path.unwrap(), dir.path().join("t.fstr"));
        assert_eq!(cfg.out, dir.path().join("o"));
        let cfg = resolve_config(&parse(&[
            "profile",
            "--config",
            p,
            "--seed",
            "9",
            "--backend",
            "toy",
            "--out",
            "x",
        ]))
        .unwrap();
        assert_eq!(
            (cfg.seed, cfg.backend, cfg.out),
            (9, Backend::Toy, PathBuf::from("x"))
        );
    }

    #[test]
    fn config_errors_name_the_field() {
        let err = RunConfig::from_json(r#"{"toy": {"total_steps": 5, "bogus": 1}}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("bogus"));
        let cfg = RunConfig {
            toy: ToyConfig {
                total_steps: 1,
                ..ToyConfig::default()
            },
            ..RunConfig::default()
        };
        match cfg.validate() {
            Err(Error::Configuration { field, .. }) => assert_eq!(field, "toy.total_steps"),
            other => panic!("{other:?}"),
        }
        let trace = RunConfig {
            backend: Backend::Trace,
            ..RunConfig::default()
        };
        assert!(matches!(trace.validate(), Err(Error::Configuration { .. })));
    }

    #[test]
    fn profile_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let mut log = Vec::new();
        let first = cmd_profile(&cfg, &Metric::Freq2, &mut log).unwrap();
        let bytes = fs::read(dir.path().join("profiles/content.json")).unwrap();
        assert!(!first.cache_hit);
        let second = cmd_profile(&cfg, &Metric::Freq2, &mut log).unwrap();
        assert!(second.cache_hit);
        assert_eq!(
            first,
            Profiles {
                cache_hit: false,
                ..second
            }
        );
        assert_eq!(
            fs::read(dir.path().join("profiles/content.json")).unwrap(),
            bytes
        );
        assert!(String::from_utf8(log).unwrap().contains("cache hit"));

        let other_seed = RunConfig {
            seed: 1,
            ..cfg.clone()
        };
        assert!(
            !cmd_profile(&other_seed, &Metric::Freq2, &mut Vec::new())
                .unwrap()
                .cache_hit
        );
        assert!(
            !cmd_profile(&cfg, &Metric::Spatial2, &mut Vec::new())
                .unwrap()
                .cache_hit
        );
    }

    #[test]
    fn corrupt_cache_is_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(dir.path());
        let good = cmd_profile(&cfg, &Metric::Freq2, &mut Vec::new()).unwrap();
        let cached = fs::read_dir(dir.path().join("cache/profiles"))
            .unwrap()
            .next()
            .unwrap()
            .unwrap()
            .path();
        fs::write(cached.join("style.json"), "{ not json").unwrap();
        let mut log = Vec::new();
        let again = cmd_profile(&cfg, &Metric::Freq2, &mut log).unwrap();
        assert!(!again.cache_hit);
        assert_eq!(again.style, good.style);
        assert!(String::from_utf8(log)
            .unwrap()
            .contains("warning: corrupt profile cache"));
    }

    #[test]
    fn pnm_encoding() {
        let img = ImageGrid::new(1, 3, 1, vec![-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(
            encode_pnm(&img).unwrap(),
            b"P5\n3 1\n255\n\x00\x80\xff".to_vec()
        );
        let flat = ImageGrid::filled(1, 1, 3, 2.0).unwrap();
        assert_eq!(
            encode_pnm(&flat).unwrap(),
            b"P6\n1 1\n255\n\x80\x80\x80".to_vec()
        );
    }

    #[test]
    fn http_client_requires_endpoint() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("a.png");
        fs::write(&img, [0u8]).unwrap();
        let mut cfg = small(dir.path());
        cfg.alignment = AlignmentConfig {
            model: "m".into(),
            content_images: vec![img.clone()],
            style_image: Some(img),
            class_name: "teapot".into(),
            style_name: "watercolor".into(),
            ..AlignmentConfig::default()
        };
        let err = cmd_refine(&cfg, &mut Vec::new()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("alignment.endpoint"));
    }

    #[test]
    fn ablate_rejects_trace_backend() {
        let cfg = RunConfig {
            backend: Backend::Trace,
            ..RunConfig::default()
        };
        assert_eq!(
            cmd_ablate(&cfg, &mut Vec::new()).unwrap_err().exit_code(),
            2
        );
    }
}
