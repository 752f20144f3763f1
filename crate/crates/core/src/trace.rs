//! `FSTR` trace files: per-step decoded frames recorded from a diffusion run.
//!
//! ```text
//! "FSTR"                      4 bytes magic
//! header_len                  u32 little-endian
//! header                      UTF-8 JSON, header_len bytes
//! frames                      f32 little-endian, run-major, then step-major,
//!                             then channel-planar row-major pixels
//! ```
//!
//! The header is `{version, total_steps, height, width, channels, seed,
//! runs: [{role}], annotations}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::AdapterRole;
use crate::profiler::{
    deltas_from_frames, paired_frames, ImportanceProfile, Metric, ProfileSource,
};
use crate::signal::ImageGrid;
use crate::toy::{ToyConfig, ToyModels};

pub const MAGIC: &[u8; 4] = b"FSTR";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunRole {
    BaseOnContentPath,
    Content,
    BaseOnStylePath,
    Style,
}

impl RunRole {
    pub fn as_str(self) -> &'static str {
        match self {
            RunRole::BaseOnContentPath => "base_on_content_path",
            RunRole::Content => "content",
            RunRole::BaseOnStylePath => "base_on_style_path",
            RunRole::Style => "style",
        }
    }

    /// `(adapter role, paired base role)` for one adapter.
    pub fn pair(adapter: AdapterRole) -> (RunRole, RunRole) {
        match adapter {
            AdapterRole::Content => (RunRole::Content, RunRole::BaseOnContentPath),
            AdapterRole::Style => (RunRole::Style, RunRole::BaseOnStylePath),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRun {
    pub role: RunRole,
    /// Output of step `t` at index `t - 1`.
    pub frames: Vec<ImageGrid>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub total_steps: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub seed: u64,
    pub runs: Vec<TraceRun>,
    pub annotations: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    total_steps: usize,
    height: usize,
    width: usize,
    channels: usize,
    seed: u64,
    runs: Vec<RunHeader>,
    annotations: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunHeader {
    role: RunRole,
}

impl TraceFile {
    pub fn run(&self, role: RunRole) -> Option<&TraceRun> {
        self.runs.iter().find(|r| r.role == role)
    }

    fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// Bytes of frame payload the header promises.
    pub fn payload_len(&self) -> u64 {
        (self.runs.len() * self.total_steps * self.frame_len() * 4) as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps < 2 {
            return Err(Error::InvalidInput("trace needs at least 2 steps".into()));
        }
        if self.height == 0 || self.width == 0 || !(self.channels == 1 || self.channels == 3) {
            return Err(Error::InvalidInput(format!(
                "invalid trace dims {}x{}x{}",
                self.height, self.width, self.channels
            )));
        }
        let mut seen = Vec::new();
        for run in &self.runs {
            if seen.contains(&run.role) {
                return Err(Error::InvalidInput(format!(
                    "duplicate run role {}",
                    run.role.as_str()
                )));
            }
            seen.push(run.role);
            if run.frames.len() != self.total_steps {
                return Err(Error::InvalidInput(format!(
                    "run {} has {} frames, expected {}",
                    run.role.as_str(),
                    run.frames.len(),
                    self.total_steps
                )));
            }
            if let Some(f) = run
                .frames
                .iter()
                .find(|f| f.dims() != (self.height, self.width, self.channels))
            {
                let (h, w, c) = f.dims();
                return Err(Error::InvalidInput(format!(
                    "run {} holds a {h}x{w}x{c} frame in a {}x{}x{} trace",
                    run.role.as_str(),
                    self.height,
                    self.width,
                    self.channels
                )));
            }
        }
        let has_pair = [AdapterRole::Content, AdapterRole::Style].iter().any(|&a| {
            let (adapter, base) = RunRole::pair(a);
            seen.contains(&adapter) && seen.contains(&base)
        });
        if !has_pair {
            return Err(Error::InvalidInput(
                "trace must hold at least one adapter run together with its paired base run".into(),
            ));
        }
        Ok(())
    }

    /// Serialized bytes. Frame values are stored as `f32`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let header = Header {
            version: TRACE_VERSION,
            total_steps: self.total_steps,
            height: self.height,
            width: self.width,
            channels: self.channels,
            seed: self.seed,
            runs: self
                .runs
                .iter()
                .map(|r| RunHeader { role: r.role })
                .collect(),
            annotations: self.annotations.clone(),
        };
        let header = serde_json::to_vec(&header).expect("trace header serializes");
        let header_len = u32::try_from(header.len())
            .map_err(|_| Error::InvalidInput("trace header exceeds 4 GiB".into()))?;
        let mut out = Vec::with_capacity(8 + header.len() + self.payload_len() as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        for run in &self.runs {
            for frame in &run.frames {
                for &v in frame.data() {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Format("file too short for an FSTR preamble".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(&bytes[..4])
            )));
        }
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let header_end = 8usize
            .checked_add(header_len)
            .filter(|end| *end <= bytes.len())
            .ok_or_else(|| {
                Error::Format(format!("header length {header_len} runs past end of file"))
            })?;
        let header: Header = serde_json::from_slice(&bytes[8..header_end])
            .map_err(|e| Error::Format(format!("trace header: {e}")))?;
        if header.version != TRACE_VERSION {
            return Err(Error::Format(format!(
                "unsupported trace version {}",
                header.version
            )));
        }
        if header.height == 0
            || header.width == 0
            || !(header.channels == 1 || header.channels == 3)
        {
            return Err(Error::Format(format!(
                "invalid dims {}x{}x{} in header",
                header.height, header.width, header.channels
            )));
        }

        let frame_len = header.height * header.width * header.channels;
        let expected = (header.runs.len() as u64)
            .checked_mul(header.total_steps as u64)
            .and_then(|n| n.checked_mul(frame_len as u64 * 4))
            .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
        let actual = (bytes.len() - header_end) as u64;
        if actual < expected {
            return Err(Error::TruncatedPayload { expected, actual });
        }
        if actual > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after frame payload",
                actual - expected
            )));
        }

        let mut values = bytes[header_end..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")));
        let mut runs = Vec::with_capacity(header.runs.len());
        for run in &header.runs {
            let mut frames = Vec::with_capacity(header.total_steps);
            for step in 1..=header.total_steps {
                let data: Vec<f64> = values.by_ref().take(frame_len).map(f64::from).collect();
                if data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data(format!(
                        "non-finite value in run {} at step {step}",
                        run.role.as_str()
                    )));
                }
                frames.push(ImageGrid::new(
                    header.height,
                    header.width,
                    header.channels,
                    data,
                )?);
            }
            runs.push(TraceRun {
                role: run.role,
                frames,
            });
        }

        let trace = TraceFile {
            total_steps: header.total_steps,
            height: header.height,
            width: header.width,
            channels: header.channels,
            seed: header.seed,
            runs,
            annotations: header.annotations,
        };
        trace.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(trace)
    }
}

pub fn write_trace(trace: &TraceFile, path: &Path) -> Result<()> {
    let bytes = trace.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::storage(path, e))
}

pub fn read_trace(path: &Path) -> Result<TraceFile> {
    let bytes = fs::read(path).map_err(|e| Error::storage(path, e))?;
    TraceFile::from_bytes(&bytes)
}

/// Importance profile of one adapter from its recorded run and the paired base
/// run, with the same arithmetic as the in-process profiler.
pub fn profile_from_trace(
    trace: &TraceFile,
    adapter: AdapterRole,
    metric: Metric,
) -> Result<ImportanceProfile> {
    let (adapter_role, base_role) = RunRole::pair(adapter);
    let a = trace
        .run(adapter_role)
        .ok_or_else(|| Error::MissingRun(adapter_role.as_str().into()))?;
    let b = trace
        .run(base_role)
        .ok_or_else(|| Error::MissingRun(base_role.as_str().into()))?;
    let deltas = deltas_from_frames(&a.frames, &b.frames, &metric)?;
    Ok(ImportanceProfile {
        adapter_id: adapter.as_str().to_string(),
        metric,
        total_steps: trace.total_steps,
        seed: trace.seed,
        source: ProfileSource::Trace,
        deltas,
    })
}

/// Records both adapter-driven toy trajectories, with counterfactual base
/// outputs, as a four-run trace.
pub fn toy_trace(config: &ToyConfig, models: &ToyModels, seed: u64) -> Result<TraceFile> {
    let t = config.total_steps;
    let (content, base_c) = paired_frames(&models.base, &models.content, t, seed)?;
    let (style, base_s) = paired_frames(&models.base, &models.style, t, seed)?;
    let mut annotations = BTreeMap::new();
    annotations.insert("model".to_string(), "toy".to_string());
    annotations.insert("pair_id".to_string(), config.pair_id());
    Ok(TraceFile {
        total_steps: t,
        height: config.height,
        width: config.width,
        channels: 1,
        seed,
        runs: vec![
            TraceRun {
                role: RunRole::Content,
                frames: content,
            },
            TraceRun {
                role: RunRole::BaseOnContentPath,
                frames: base_c,
            },
            TraceRun {
                role: RunRole::Style,
                frames: style,
            },
            TraceRun {
                role: RunRole::BaseOnStylePath,
                frames: base_s,
            },
        ],
        annotations,
    })
}
