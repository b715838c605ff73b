//! Datasets, train/test splits, and model persistence.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::sparse::{CsrMatrix, Triplets};
use crate::reservoir::{EsnHyperParams, EsnModel, EsnWeights};
use crate::series::{parse_csv, TimeSeries};
use crate::systems::{self, System, SystemSpec};

pub const MODEL_FORMAT_VERSION: u32 = 1;
/// Largest relative deviation of a time step from the mean step for the
/// `t` column to count as uniform.
const DT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Simulated,
    ExperimentalCsv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub series: TimeSeries,
    pub source: DataSource,
    /// File path, system description, or other origin note.
    pub provenance: String,
}

impl Dataset {
    pub fn new(series: TimeSeries, source: DataSource, provenance: impl Into<String>) -> Result<Self> {
        let provenance = provenance.into();
        if series.is_empty() {
            return Err(Error::InsufficientData("dataset has no samples".into()));
        }
        if provenance.trim().is_empty() {
            return Err(Error::Argument("dataset provenance must not be empty".into()));
        }
        Ok(Self {
            series,
            source,
            provenance,
        })
    }

    pub fn simulated(spec: &SystemSpec) -> Result<Self> {
        let series = systems::generate(spec)?;
        let provenance = serde_json::to_string(spec)?;
        Self::new(series, DataSource::Simulated, provenance)
    }
}

/// Sidecar written next to a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub dt: f64,
    pub channels: Vec<String>,
    pub source: DataSource,
    #[serde(default)]
    pub provenance: String,
}

pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// Loads a `t,<channels>` CSV. The step comes from the sidecar when one
/// exists, otherwise from the time column, which must then be uniform.
pub fn load_csv(path: &Path, expected_channels: Option<usize>) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let table = parse_csv(&text, path)?;
    if table.times.is_empty() {
        return Err(Error::InsufficientData(format!("{} has no data rows", path.display())));
    }
    if let Some(n) = expected_channels {
        if n != table.channels.len() {
            return Err(Error::Dimension {
                what: "CSV channels",
                expected: n,
                got: table.channels.len(),
            });
        }
    }
    let meta_file = meta_path(path);
    let meta: Option<DatasetMeta> = if meta_file.exists() {
        Some(serde_json::from_str(&fs::read_to_string(&meta_file)?)?)
    } else {
        None
    };
    let dt = match &meta {
        Some(m) => m.dt,
        None => infer_dt(&table.times, path)?,
    };
    let series = TimeSeries::new(table.values, table.channels, dt, table.times[0])?;
    let (source, provenance) = match meta {
        Some(m) if !m.provenance.is_empty() => (m.source, m.provenance),
        Some(m) => (m.source, path.display().to_string()),
        None => (DataSource::ExperimentalCsv, path.display().to_string()),
    };
    Dataset::new(series, source, provenance)
}

fn infer_dt(times: &[f64], path: &Path) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::Format(format!(
            "{}: a single row needs a metadata sidecar to fix dt",
            path.display()
        )));
    }
    let n = times.len() - 1;
    let dt = (times[n] - times[0]) / n as f64;
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > DT_TOLERANCE * dt {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 3,
                msg: format!("non-uniform time step {} (mean {dt})", w[1] - w[0]),
            });
        }
    }
    Ok(dt)
}

/// Writes the CSV and its sidecar.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    ds.series.write_csv(path)?;
    let meta = DatasetMeta {
        dt: ds.series.dt(),
        channels: ds.series.channels().to_vec(),
        source: ds.source,
        provenance: ds.provenance.clone(),
    };
    fs::write(meta_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.8 }
    }
}

/// Prefix of `floor(fraction · T)` samples for training, the rest for testing.
pub fn split(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let f = spec.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::Argument(format!("train fraction must lie in (0, 1), got {f}")));
    }
    let t = ds.series.len();
    let cut = (f * t as f64).floor() as usize;
    if cut == 0 || cut == t {
        return Err(Error::InsufficientData(format!(
            "{t} samples cannot be split at fraction {f}"
        )));
    }
    let part = |range, tag: &str| Dataset {
        series: ds.series.slice(range),
        source: ds.source,
        provenance: format!("{} [{tag}]", ds.provenance),
    };
    Ok((part(0..cut, "train"), part(cut..t, "test")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DenseRecord {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    hyperparameters: EsnHyperParams,
    w_in: DenseRecord,
    w: Triplets,
    w_out: Option<DenseRecord>,
}

pub fn model_to_json(model: &EsnModel) -> Result<String> {
    let hp = &model.hp;
    let n = model.weights.w.dim();
    let doc = ModelDocument {
        format_version: MODEL_FORMAT_VERSION,
        hyperparameters: hp.clone(),
        w_in: DenseRecord {
            rows: n,
            cols: 1 + hp.input_dim,
            data: model.weights.w_in.clone(),
        },
        w: model.weights.w.to_triplets(),
        w_out: model.weights.w_out.as_ref().map(|d| DenseRecord {
            rows: hp.output_dim,
            cols: hp.feature_len(),
            data: d.clone(),
        }),
    };
    Ok(serde_json::to_string(&doc)?)
}

pub fn model_from_json(text: &str) -> Result<EsnModel> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Format("missing format_version".into()))?;
    if found != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::FormatVersion {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let doc: ModelDocument = serde_json::from_value(value)?;
    let hp = doc.hyperparameters;
    hp.validate()?;
    let n = hp.n_nodes;
    check_dense(&doc.w_in, n, 1 + hp.input_dim, "w_in")?;
    if doc.w.n != n {
        return Err(Error::Format(format!("w is {}x{0}, expected {n}x{n}", doc.w.n)));
    }
    let w = CsrMatrix::from_triplet_record(&doc.w)?;
    if let Some(d) = &doc.w_out {
        check_dense(d, hp.output_dim, hp.feature_len(), "w_out")?;
    }
    Ok(EsnModel {
        hp,
        weights: EsnWeights {
            w_in: doc.w_in.data,
            w,
            w_out: doc.w_out.map(|d| d.data),
        },
    })
}

fn check_dense(d: &DenseRecord, rows: usize, cols: usize, name: &str) -> Result<()> {
    if d.rows != rows || d.cols != cols || d.data.len() != rows * cols {
        return Err(Error::Format(format!(
            "{name} is {}x{} with {} entries, expected {rows}x{cols}",
            d.rows,
            d.cols,
            d.data.len()
        )));
    }
    if d.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("stored weights"));
    }
    Ok(())
}

pub fn save_model(model: &EsnModel, path: &Path) -> Result<()> {
    fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<EsnModel> {
    model_from_json(&fs::read_to_string(path)?)
}

/// Stand-in for recorded circuit data: Chua trajectory sampled at
/// dt = 0.057, 1% relative noise, then quantised to 10 bits over each
/// channel's range. Labelled as a surrogate in its provenance.
pub fn experimental_surrogate(n_steps: usize, seed: u64) -> Result<Dataset> {
    let spec = SystemSpec::new(System::chua(), 0.057, n_steps);
    let clean = systems::generate(&spec)?;
    let noisy = systems::add_noise(&clean, 0.01, seed)?;
    let quantised = quantise(&noisy, 10)?;
    let series = quantised.with_channels(vec!["V1".into(), "V2".into(), "I_L".into()])?;
    Dataset::new(
        series,
        DataSource::ExperimentalCsv,
        format!("surrogate: chua ode, dt 0.057, 1% noise, 10-bit quantisation, seed {seed}"),
    )
}

/// Rounds every channel to `bits` levels spread over its observed range.
pub fn quantise(series: &TimeSeries, bits: u32) -> Result<TimeSeries> {
    if bits == 0 || bits > 52 {
        return Err(Error::Argument(format!("cannot quantise to {bits} bits")));
    }
    let dim = series.dim();
    let levels = ((1u64 << bits) - 1) as f64;
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for row in series.rows() {
        for (k, v) in row.iter().enumerate() {
            lo[k] = lo[k].min(*v);
            hi[k] = hi[k].max(*v);
        }
    }
    let values = series
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let k = i % dim;
            let span = hi[k] - lo[k];
            if span > 0.0 {
                let step = span / levels;
                lo[k] + ((v - lo[k]) / step).round() * step
            } else {
                *v
            }
        })
        .collect();
    TimeSeries::new(values, series.channels().to_vec(), series.dt(), series.t0())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Dataset {
        let s = TimeSeries::univariate((0..n).map(|i| i as f64).collect(), "x", 0.1).unwrap();
        Dataset::new(s, DataSource::Simulated, "ramp").unwrap()
    }

    #[test]
    fn split_floor_rule() {
        let (a, b) = split(&ramp(100), SplitSpec { train_fraction: 0.8 }).unwrap();
        assert_eq!((a.series.len(), b.series.len()), (80, 20));
        let (a, b) = split(&ramp(5), SplitSpec { train_fraction: 0.5 }).unwrap();
        assert_eq!((a.series.len(), b.series.len()), (2, 3));
        assert_eq!(b.series.values()[0], 2.0);
        for f in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(split(&ramp(10), SplitSpec { train_fraction: f }).is_err());
        }
    }

    #[test]
    fn dataset_invariants() {
        let s = TimeSeries::univariate(vec![1.0], "x", 1.0).unwrap();
        assert!(Dataset::new(s, DataSource::Simulated, " ").is_err());
    }

    #[test]
    fn quantisation_levels() {
        let s = TimeSeries::univariate((0..101).map(|i| i as f64 / 100.0).collect(), "x", 1.0).unwrap();
        let q = quantise(&s, 2).unwrap();
        for v in q.values() {
            let level = v * 3.0;
            assert!((level - level.round()).abs() < 1e-12);
        }
        assert_eq!(q.values()[0], 0.0);
        assert_eq!(q.values()[100], 1.0);
    }

    #[test]
    fn unknown_format_version() {
        let err = model_from_json(r#"{"format_version": 99}"#).unwrap_err();
        assert!(matches!(err, Error::FormatVersion { found: 99, .. }));
        assert!(matches!(model_from_json("{}"), Err(Error::Format(_))));
        assert!(model_from_json("not json").is_err());
    }
}
