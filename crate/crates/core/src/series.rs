//! Uniformly sampled multivariate time series and its CSV form.
//!
//! The CSV layout is `t,<ch1>,<ch2>,...` with one row per sample, LF line
//! endings and every number written with 17 significant digits so that a
//! write/read cycle reproduces the samples bit for bit.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    dim: usize,
    dt: f64,
    t0: f64,
    channels: Vec<String>,
}

impl TimeSeries {
    /// Builds a series from row-major samples (`len × channels.len()`).
    pub fn new(values: Vec<f64>, channels: Vec<String>, dt: f64, t0: f64) -> Result<Self> {
        let dim = channels.len();
        if dim == 0 {
            return Err(Error::Argument("time series needs at least one channel".into()));
        }
        if values.len() % dim != 0 {
            return Err(Error::Dimension {
                what: "time series samples",
                expected: dim * (values.len() / dim + 1),
                got: values.len(),
            });
        }
        let unique: HashSet<&str> = channels.iter().map(String::as_str).collect();
        if unique.len() != dim {
            return Err(Error::Argument("channel labels must be unique".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) || !t0.is_finite() {
            return Err(Error::Argument(format!("invalid sampling step {dt}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("time series samples"));
        }
        Ok(Self {
            values,
            dim,
            dt,
            t0,
            channels,
        })
    }

    /// Series from rows, labelling channels `c0, c1, ...`.
    pub fn from_rows(rows: &[Vec<f64>], dt: f64) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(1);
        let channels = (0..dim).map(|i| format!("c{i}")).collect();
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::Dimension {
                    what: "time series row",
                    expected: dim,
                    got: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(values, channels, dt, 0.0)
    }

    /// Single-channel series.
    pub fn univariate(values: Vec<f64>, label: &str, dt: f64) -> Result<Self> {
        Self::new(values, vec![label.to_string()], dt, 0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.rows().map(|r| r[c]).collect()
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == label)
    }

    /// Samples `range` as a new series; `t0` follows the first kept sample.
    pub fn slice(&self, range: Range<usize>) -> Self {
        let range = range.start.min(self.len())..range.end.min(self.len());
        Self {
            values: self.values[range.start * self.dim..range.end * self.dim].to_vec(),
            dim: self.dim,
            dt: self.dt,
            t0: self.time(range.start),
            channels: self.channels.clone(),
        }
    }

    /// Keeps the listed channels, in the listed order.
    pub fn select(&self, channels: &[usize]) -> Result<Self> {
        if let Some(&bad) = channels.iter().find(|&&c| c >= self.dim) {
            return Err(Error::Dimension {
                what: "channel index",
                expected: self.dim,
                got: bad,
            });
        }
        let mut values = Vec::with_capacity(self.len() * channels.len());
        for r in self.rows() {
            values.extend(channels.iter().map(|&c| r[c]));
        }
        let labels = channels.iter().map(|&c| self.channels[c].clone()).collect();
        Self::new(values, labels, self.dt, self.t0)
    }

    /// First `n` channels.
    pub fn leading(&self, n: usize) -> Result<Self> {
        self.select(&(0..n).collect::<Vec<_>>())
    }

    /// Every `stride`-th sample.
    pub fn subsample(&self, stride: usize) -> Self {
        let stride = stride.max(1);
        let mut values = Vec::with_capacity(self.values.len() / stride + self.dim);
        for r in self.rows().step_by(stride) {
            values.extend_from_slice(r);
        }
        Self {
            values,
            dim: self.dim,
            dt: self.dt * stride as f64,
            t0: self.t0,
            channels: self.channels.clone(),
        }
    }

    /// Appends `other` after `self`; shapes and sampling must agree.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::Dimension {
                what: "concatenated series",
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Self::new(values, self.channels.clone(), self.dt, self.t0)
    }

    pub fn with_channels(mut self, channels: Vec<String>) -> Result<Self> {
        if channels.len() != self.dim {
            return Err(Error::Dimension {
                what: "channel labels",
                expected: self.dim,
                got: channels.len(),
            });
        }
        self.channels = channels;
        Self::new(self.values, self.channels, self.dt, self.t0)
    }

    /// Per-channel population standard deviation.
    pub fn channel_std(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|c| crate::metrics::stats::std_dev(&self.column(c)))
            .collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 26 + 32);
        out.push('t');
        for c in &self.channels {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (i, r) in self.rows().enumerate() {
            let _ = write!(out, "{:.16e}", self.time(i));
            for v in r {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Raw CSV contents before the sampling step is established.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub channels: Vec<String>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn parse_csv(text: &str, path: &Path) -> Result<CsvTable> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") || cols.len() < 2 {
        return Err(perr(1, "header must be `t,<channel>,...`".into()));
    }
    let channels: Vec<String> = cols[1..].iter().map(|s| s.to_string()).collect();
    let dim = channels.len();
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != dim + 1 {
            return Err(perr(
                lineno,
                format!("expected {} fields, found {}", dim + 1, cells.len()),
            ));
        }
        for (k, cell) in cells.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| perr(lineno, format!("cannot parse `{cell}`")))?;
            if !v.is_finite() {
                return Err(perr(lineno, format!("non-finite value `{cell}`")));
            }
            if k == 0 {
                if let Some(&prev) = times.last() {
                    if v <= prev {
                        return Err(perr(lineno, "time column is not increasing".into()));
                    }
                }
                times.push(v);
            } else {
                values.push(v);
            }
        }
    }
    Ok(CsvTable {
        channels,
        times,
        values,
    })
}
