//! Magnitude statistics of adapter weight files in safetensors layout.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use half::{bf16, f16};
use safetensors::{Dtype, SafeTensors};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HISTOGRAM_BINS: usize = 64;
pub const HISTOGRAM_LO: f64 = 1e-8;
pub const HISTOGRAM_HI: f64 = 1e2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorStats {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub element_count: usize,
    pub mean_abs: f64,
    /// Population standard deviation of the raw values.
    pub std: f64,
    pub max_abs: f64,
}

/// Counts of `|value|` over log-spaced bins spanning
/// `[HISTOGRAM_LO, HISTOGRAM_HI]`. Values outside the range land in the first
/// or last bin, so counts always add up to the element total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeHistogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Default for MagnitudeHistogram {
    fn default() -> Self {
        Self {
            lo: HISTOGRAM_LO,
            hi: HISTOGRAM_HI,
            counts: vec![0; HISTOGRAM_BINS],
        }
    }
}

impl MagnitudeHistogram {
    pub fn bin_of(&self, magnitude: f64) -> usize {
        if magnitude <= self.lo {
            return 0;
        }
        let span = (self.hi / self.lo).log10();
        let pos = (magnitude / self.lo).log10() / span * self.counts.len() as f64;
        (pos.floor() as usize).min(self.counts.len() - 1)
    }

    pub fn add(&mut self, magnitude: f64) {
        let bin = self.bin_of(magnitude);
        self.counts[bin] += 1;
    }

    /// Lower edge of every bin.
    pub fn edges(&self) -> Vec<f64> {
        let n = self.counts.len() as f64;
        (0..self.counts.len())
            .map(|i| self.lo * (self.hi / self.lo).powf(i as f64 / n))
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightStats {
    pub file: PathBuf,
    pub tensors: Vec<TensorStats>,
    pub total_elements: usize,
    pub mean_abs: f64,
    pub histogram: MagnitudeHistogram,
}

fn decode(name: &str, dtype: Dtype, bytes: &[u8]) -> Result<Vec<f64>> {
    let values: Vec<f64> = match dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::F16 => bytes
            .chunks_exact(2)
            .map(|b| f16::from_le_bytes(b.try_into().expect("2 bytes")).to_f64())
            .collect(),
        Dtype::BF16 => bytes
            .chunks_exact(2)
            .map(|b| bf16::from_le_bytes(b.try_into().expect("2 bytes")).to_f64())
            .collect(),
        other => {
            return Err(Error::UnsupportedDtype {
                tensor: name.to_string(),
                dtype: format!("{other:?}"),
            })
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "tensor `{name}` holds non-finite values"
        )));
    }
    Ok(values)
}

/// Statistics for an in-memory safetensors buffer.
pub fn analyze_bytes(file: &Path, bytes: &[u8]) -> Result<WeightStats> {
    let st = SafeTensors::deserialize(bytes)
        .map_err(|e| Error::Format(format!("{}: {e}", file.display())))?;
    let mut names = st.names();
    names.sort();

    let mut histogram = MagnitudeHistogram::default();
    let mut tensors = Vec::with_capacity(names.len());
    let mut abs_sum = 0.0;
    let mut total = 0usize;
    for name in names {
        let view = st
            .tensor(name)
            .map_err(|e| Error::Format(format!("tensor `{name}`: {e}")))?;
        let values = decode(name, view.dtype(), view.data())?;
        let n = values.len();
        let (mut sum, mut sum_abs, mut max_abs) = (0.0, 0.0, 0.0f64);
        for &v in &values {
            sum += v;
            sum_abs += v.abs();
            max_abs = max_abs.max(v.abs());
            histogram.add(v.abs());
        }
        let (mean, mean_abs) = if n == 0 {
            (0.0, 0.0)
        } else {
            (sum / n as f64, sum_abs / n as f64)
        };
        let var = if n == 0 {
            0.0
        } else {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
        };
        abs_sum += sum_abs;
        total += n;
        tensors.push(TensorStats {
            name: name.to_string(),
            dtype: format!("{:?}", view.dtype()),
            shape: view.shape().to_vec(),
            element_count: n,
            mean_abs,
            std: var.sqrt(),
            max_abs,
        });
    }
    Ok(WeightStats {
        file: file.to_path_buf(),
        tensors,
        total_elements: total,
        mean_abs: if total == 0 {
            0.0
        } else {
            abs_sum / total as f64
        },
        histogram,
    })
}

pub fn analyze_file(path: &Path) -> Result<WeightStats> {
    let bytes = fs::read(path).map_err(|e| Error::storage(path, e))?;
    analyze_bytes(path, &bytes)
}

pub fn analyze_weights(paths: &[PathBuf]) -> Result<Vec<WeightStats>> {
    paths.iter().map(|p| analyze_file(p)).collect()
}

/// Plain-text table of per-file mean magnitudes, relative to the first file.
pub fn comparison_table(stats: &[WeightStats]) -> String {
    let mut out = format!(
        "{:<40} {:>8} {:>12} {:>14} {:>10}\n",
        "file", "tensors", "elements", "mean_abs", "ratio"
    );
    let reference = stats.first().map(|s| s.mean_abs).unwrap_or(0.0);
    for s in stats {
        let ratio = if reference > 0.0 {
            s.mean_abs / reference
        } else {
            f64::NAN
        };
        let _ = writeln!(
            out,
            "{:<40} {:>8} {:>12} {:>14.6e} {:>10.4}",
            s.file.display(),
            s.tensors.len(),
            s.total_elements,
            s.mean_abs,
            ratio
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use safetensors::tensor::TensorView;

    pub(crate) fn f32_file(tensors: &[(&str, Vec<usize>, Vec<f32>)]) -> Vec<u8> {
        let raw: Vec<(String, Vec<usize>, Vec<u8>)> = tensors
            .iter()
            .map(|(n, s, v)| {
                (
                    n.to_string(),
                    s.clone(),
                    v.iter().flat_map(|x| x.to_le_bytes()).collect(),
                )
            })
            .collect();
        let views: Vec<(String, TensorView)> = raw
            .iter()
            .map(|(n, s, b)| {
                (
                    n.clone(),
                    TensorView::new(Dtype::F32, s.clone(), b).unwrap(),
                )
            })
            .collect();
        safetensors::serialize(views, &None).unwrap()
    }

    #[test]
    fn ones_tensor() {
        let bytes = f32_file(&[("w", vec![2, 2], vec![1.0; 4])]);
        let s = analyze_bytes(Path::new("ones"), &bytes).unwrap();
        let t = &s.tensors[0];
        assert_eq!(
            (t.element_count, t.mean_abs, t.std, t.max_abs),
            (4, 1.0, 0.0, 1.0)
        );
        assert_eq!(s.histogram.total(), 4);
    }

    #[test]
    fn scaling_scales_mean_abs() {
        let vals: Vec<f32> = (0..100).map(|i| (i as f32 - 50.0) * 0.01).collect();
        let scaled: Vec<f32> = vals.iter().map(|v| v * 10.0).collect();
        let a = analyze_bytes(Path::new("a"), &f32_file(&[("w", vec![100], vals)])).unwrap();
        let b = analyze_bytes(Path::new("b"), &f32_file(&[("w", vec![100], scaled)])).unwrap();
        assert!((b.mean_abs / a.mean_abs - 10.0).abs() < 1e-6);
        let table = comparison_table(&[a, b]);
        assert!(table.contains("10.0000"));
    }

    #[test]
    fn half_precision_tensors() {
        let h: Vec<u8> = [1.5f32, -2.0]
            .iter()
            .flat_map(|v| f16::from_f32(*v).to_le_bytes())
            .collect();
        let b: Vec<u8> = [0.5f32, 4.0]
            .iter()
            .flat_map(|v| bf16::from_f32(*v).to_le_bytes())
            .collect();
        let views = vec![
            (
                "h".to_string(),
                TensorView::new(Dtype::F16, vec![2], &h).unwrap(),
            ),
            (
                "b".to_string(),
                TensorView::new(Dtype::BF16, vec![2], &b).unwrap(),
            ),
        ];
        let bytes = safetensors::serialize(views, &None).unwrap();
        let s = analyze_bytes(Path::new("half"), &bytes).unwrap();
        assert_eq!(s.total_elements, 4);
        assert_eq!(s.tensors[0].name, "b");
        assert_eq!(s.tensors[0].max_abs, 4.0);
        assert_eq!(s.tensors[1].mean_abs, 1.75);
    }

    #[test]
    fn unsupported_dtype_names_tensor() {
        let data = [0u8; 8];
        let views = vec![(
            "ints".to_string(),
            TensorView::new(Dtype::I32, vec![2], &data).unwrap(),
        )];
        let bytes = safetensors::serialize(views, &None).unwrap();
        match analyze_bytes(Path::new("i"), &bytes) {
            Err(Error::UnsupportedDtype { tensor, .. }) => assert_eq!(tensor, "ints"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_headers() {
        let mut bytes = f32_file(&[("w", vec![1], vec![1.0])]);
        bytes[..8].copy_from_slice(&(10_000u64).to_le_bytes());
        assert!(matches!(
            analyze_bytes(Path::new("x"), &bytes),
            Err(Error::Format(_))
        ));

        let mut junk = 5u64.to_le_bytes().to_vec();
        junk.extend_from_slice(b"{oops");
        assert!(matches!(
            analyze_bytes(Path::new("x"), &junk),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            analyze_bytes(Path::new("x"), &[1, 2]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn histogram_bins() {
        let h = MagnitudeHistogram::default();
        assert_eq!(h.bin_of(0.0), 0);
        assert_eq!(h.bin_of(1e-12), 0);
        assert_eq!(h.bin_of(1e5), 63);
        assert_eq!(h.bin_of(1e-3), 32);
        let edges = h.edges();
        assert_eq!(edges.len(), 64);
        assert!((edges[32] - 1e-3).abs() < 1e-15);
    }
}
