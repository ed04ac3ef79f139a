//! Coincidence histograms of time differences between two detector streams.
//!
//! `counts[k]` is the number of ordered pairs `(i, j)` with
//! `start + k·w <= b[j] - a[i] < start + (k+1)·w`. All pairs inside the window
//! are counted, not only nearest neighbours.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photonsim::EventStream;
use crate::quantities::{Seconds, Tick, TICKS_PER_SECOND};
use crate::scalar::Real;

/// Upper bound on the number of histogram bins.
pub const MAX_BINS: u64 = 1 << 24;

/// Histogram binning: bins of width `bin_width` covering `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    bin_width: Tick,
    start: Tick,
    end: Tick,
}

impl CorrelationConfig {
    pub fn new(bin_width: Tick, start: Tick, end: Tick) -> Result<Self> {
        if bin_width.0 <= 0 {
            return Err(Error::Config(format!("bin width must be > 0, got {bin_width}")));
        }
        let span = end.checked_sub(start)?;
        if span.0 <= 0 || span.0 % bin_width.0 != 0 {
            return Err(Error::Config(format!(
                "window [{start}, {end}) must be a positive multiple of the bin width {bin_width}"
            )));
        }
        if (span.0 / bin_width.0) as u64 > MAX_BINS {
            return Err(Error::Config(format!("more than {MAX_BINS} bins")));
        }
        Ok(CorrelationConfig { bin_width, start, end })
    }

    /// Window `[-n·w, n·w)` centred on zero delay.
    pub fn symmetric(bin_width: Tick, half_bins: i64) -> Result<Self> {
        let half = bin_width.checked_mul(half_bins)?;
        Self::new(bin_width, Tick(-half.0), half)
    }

    #[inline]
    pub fn bin_width(&self) -> Tick {
        self.bin_width
    }

    #[inline]
    pub fn start(&self) -> Tick {
        self.start
    }

    #[inline]
    pub fn end(&self) -> Tick {
        self.end
    }

    #[inline]
    pub fn n_bins(&self) -> usize {
        ((self.end.0 - self.start.0) / self.bin_width.0) as usize
    }

    /// Lower edge of bin `k`.
    #[inline]
    pub fn bin_start(&self, k: usize) -> Tick {
        Tick(self.start.0 + k as i64 * self.bin_width.0)
    }

    /// Centre of bin `k` in picoseconds (may be a half-integer).
    #[inline]
    pub fn bin_center_ps(&self, k: usize) -> f64 {
        self.bin_start(k).0 as f64 + 0.5 * self.bin_width.0 as f64
    }
}

/// Binned coincidence counts plus the totals needed to normalize them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelationHistogram {
    pub config: CorrelationConfig,
    pub counts: Vec<u64>,
    pub n_a: u64,
    pub n_b: u64,
    /// Acquisition time, picoseconds.
    pub duration: Tick,
}

impl CorrelationHistogram {
    pub fn zeros(config: CorrelationConfig) -> Self {
        CorrelationHistogram {
            config,
            counts: vec![0; config.n_bins()],
            n_a: 0,
            n_b: 0,
            duration: Tick::ZERO,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn duration_seconds(&self) -> Seconds {
        Seconds(self.duration.to_seconds())
    }

    /// Exports `tau_ps,counts,g2,sigma` rows, `tau_ps` being the bin centre.
    pub fn to_csv(&self) -> Result<String> {
        let points = normalize_g2::<f64>(self)?;
        let mut out = String::with_capacity(32 * self.counts.len() + 32);
        out.push_str("tau_ps,counts,g2,sigma\n");
        for (k, (c, p)) in self.counts.iter().zip(&points.points).enumerate() {
            writeln!(out, "{},{},{},{}", self.config.bin_center_ps(k), c, p.g2, p.sigma).expect("string write");
        }
        Ok(out)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv = self.to_csv()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(csv.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn check_sorted(times: &[Tick], name: &str) -> Result<()> {
    if let Some(i) = times.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Precondition(format!("stream {name} not sorted at index {}", i + 1)));
    }
    Ok(())
}

fn check_range(a: &[Tick], config: &CorrelationConfig) -> Result<()> {
    if let (Some(first), Some(last)) = (a.first(), a.last()) {
        first.checked_add(config.start)?;
        last.checked_add(config.end)?;
    }
    Ok(())
}

/// Two-cursor sweep; `skip_self` drops pairs with identical indices (a and b
/// must then be the same slice, offset by `self_offset` into b).
fn sweep(a: &[Tick], b: &[Tick], config: &CorrelationConfig, counts: &mut [u64], self_offset: Option<usize>) {
    let (lo, hi, w) = (config.start.0, config.end.0, config.bin_width.0);
    let mut first = 0usize;
    for (i, &ta) in a.iter().enumerate() {
        let lower = ta.0 + lo;
        let upper = ta.0 + hi;
        while first < b.len() && b[first].0 < lower {
            first += 1;
        }
        let mut j = first;
        while j < b.len() && b[j].0 < upper {
            if self_offset.is_none_or(|off| off + i != j) {
                counts[((b[j].0 - lower) / w) as usize] += 1;
            }
            j += 1;
        }
    }
}

/// Coincidence histogram of `b - a` time differences.
pub fn cross_correlate(a: &EventStream, b: &EventStream, config: &CorrelationConfig) -> Result<CorrelationHistogram> {
    let duration = a.duration().0.max(b.duration().0);
    correlate_times(a.times(), b.times(), config, Seconds(duration).to_ticks()?)
}

/// Like [`cross_correlate`] on raw tick slices.
pub fn correlate_times(a: &[Tick], b: &[Tick], config: &CorrelationConfig, duration: Tick) -> Result<CorrelationHistogram> {
    check_sorted(a, "a")?;
    check_sorted(b, "b")?;
    check_range(a, config)?;
    let mut h = CorrelationHistogram::zeros(*config);
    sweep(a, b, config, &mut h.counts, None);
    h.n_a = a.len() as u64;
    h.n_b = b.len() as u64;
    h.duration = duration;
    Ok(h)
}

/// Autocorrelation of one stream: all ordered pairs `(i, j)` with `i != j`.
///
/// Simultaneous distinct events are kept; only the self-pair is excluded.
pub fn auto_correlate(a: &EventStream, config: &CorrelationConfig) -> Result<CorrelationHistogram> {
    check_sorted(a.times(), "a")?;
    check_range(a.times(), config)?;
    let mut h = CorrelationHistogram::zeros(*config);
    sweep(a.times(), a.times(), config, &mut h.counts, Some(0));
    h.n_a = a.len() as u64;
    h.n_b = a.len() as u64;
    h.duration = a.duration().to_ticks()?;
    Ok(h)
}

/// [`cross_correlate`] with `a` partitioned into time chunks of `chunk` ticks
/// that are histogrammed independently (in parallel) and merged.
///
/// The result is identical to the unchunked histogram for every chunk length.
pub fn cross_correlate_chunked(
    a: &EventStream,
    b: &EventStream,
    config: &CorrelationConfig,
    chunk: Tick,
) -> Result<CorrelationHistogram> {
    if chunk.0 <= 0 {
        return Err(Error::Config("chunk length must be > 0".into()));
    }
    let (ta, tb) = (a.times(), b.times());
    check_sorted(ta, "a")?;
    check_sorted(tb, "b")?;
    check_range(ta, config)?;

    // boundaries of the non-empty chunks of a
    let mut bounds = Vec::new();
    let mut i = 0;
    while i < ta.len() {
        let id = ta[i].0.div_euclid(chunk.0);
        let next = ta[i..].partition_point(|t| t.0.div_euclid(chunk.0) == id) + i;
        bounds.push((i, next));
        i = next;
    }

    let zero = CorrelationHistogram::zeros(*config);
    let mut h = bounds
        .par_iter()
        .fold(
            || zero.clone(),
            |mut acc, &(s, e)| {
                let part = &ta[s..e];
                let lower = part[0].0 + config.start.0;
                let upper = part[e - s - 1].0 + config.end.0;
                let bs = tb.partition_point(|t| t.0 < lower);
                let be = tb.partition_point(|t| t.0 < upper);
                sweep(part, &tb[bs..be], config, &mut acc.counts, None);
                acc.n_a += part.len() as u64;
                acc
            },
        )
        .reduce(|| zero.clone(), |x, y| merge_histograms(&x, &y).expect("same config"));
    h.n_b = tb.len() as u64;
    h.duration = Seconds(a.duration().0.max(b.duration().0)).to_ticks()?;
    Ok(h)
}

/// Element-wise sum of two histograms with identical binning.
pub fn merge_histograms(h1: &CorrelationHistogram, h2: &CorrelationHistogram) -> Result<CorrelationHistogram> {
    if h1.config != h2.config {
        return Err(Error::Config("cannot merge histograms with different binning".into()));
    }
    Ok(CorrelationHistogram {
        config: h1.config,
        counts: h1.counts.iter().zip(&h2.counts).map(|(x, y)| x + y).collect(),
        n_a: h1.n_a + h2.n_a,
        n_b: h1.n_b + h2.n_b,
        duration: h1.duration.checked_add(h2.duration)?,
    })
}

/// One normalized histogram bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Point<F = f64> {
    /// Bin centre, seconds.
    pub tau: F,
    pub g2: F,
    pub sigma: F,
}

/// Normalized correlation estimate on uniform bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Series<F = f64> {
    /// Bin width, seconds.
    pub bin_width: F,
    pub points: Vec<G2Point<F>>,
}

impl<F: Real> G2Series<F> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Builds a series from bin centres, checking that they are evenly spaced.
    pub fn from_centers(points: Vec<G2Point<F>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Precondition("need at least two bins".into()));
        }
        let w = points[1].tau - points[0].tau;
        if !(w > F::zero()) {
            return Err(Error::Precondition("bin centres must increase".into()));
        }
        let tol = w * F::lit(1e-6);
        for (k, p) in points.iter().enumerate() {
            let expected = points[0].tau + w * F::from_usize(k).expect("index");
            if (p.tau - expected).abs() > tol {
                return Err(Error::Precondition(format!("bin {k} is not on the uniform grid")));
            }
        }
        Ok(G2Series { bin_width: w, points })
    }
}

/// `ĝ²_k = C_k·T / (n_a·n_b·w)` with shot-noise error `sqrt(C_k)` in the same
/// units; empty bins get the one-count error.
pub fn normalize_g2<F: Real>(h: &CorrelationHistogram) -> Result<G2Series<F>> {
    if h.n_a == 0 || h.n_b == 0 {
        return Err(Error::NoEvents);
    }
    if h.duration.0 <= 0 {
        return Err(Error::Precondition("acquisition duration must be > 0".into()));
    }
    let w_s = h.config.bin_width.to_seconds();
    let scale = h.duration.to_seconds() / (h.n_a as f64 * h.n_b as f64 * w_s);
    let ps = TICKS_PER_SECOND as f64;
    let points = h
        .counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let c = c as f64;
            G2Point {
                tau: F::lit(h.config.bin_center_ps(k) / ps),
                g2: F::lit(c * scale),
                sigma: F::lit(c.max(1.0).sqrt() * scale),
            }
        })
        .collect();
    Ok(G2Series {
        bin_width: F::lit(w_s),
        points,
    })
}

/// A row of an exported histogram CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub tau_ps: f64,
    pub counts: u64,
    pub g2: f64,
    pub sigma: f64,
}

/// Parses a histogram CSV written by [`CorrelationHistogram::to_csv`].
pub fn parse_histogram_csv(reader: impl BufRead) -> Result<Vec<CsvRow>> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            what: e.to_string(),
        })?;
        if idx == 0 {
            if line.trim() != "tau_ps,counts,g2,sigma" {
                return Err(Error::Parse {
                    line: 1,
                    what: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Parse {
            line: line_no,
            what: what.to_string(),
        };
        let mut fields = line.split(',');
        let mut next = || fields.next().map(str::trim).ok_or_else(|| bad("expected 4 fields"));
        let tau_ps = next()?.parse().map_err(|_| bad("bad tau_ps"))?;
        let counts = next()?.parse().map_err(|_| bad("bad counts"))?;
        let g2 = next()?.parse().map_err(|_| bad("bad g2"))?;
        let sigma = next()?.parse().map_err(|_| bad("bad sigma"))?;
        if fields.next().is_some() {
            return Err(bad("expected 4 fields"));
        }
        rows.push(CsvRow {
            tau_ps,
            counts,
            g2,
            sigma,
        });
    }
    Ok(rows)
}

pub fn read_histogram_csv(path: impl AsRef<Path>) -> Result<Vec<CsvRow>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_histogram_csv(BufReader::new(f))
}

/// Normalized series from CSV rows.
pub fn series_from_csv<F: Real>(rows: &[CsvRow]) -> Result<G2Series<F>> {
    let ps = TICKS_PER_SECOND as f64;
    G2Series::from_centers(
        rows.iter()
            .map(|r| G2Point {
                tau: F::lit(r.tau_ps / ps),
                g2: F::lit(r.g2),
                sigma: F::lit(r.sigma),
            })
            .collect(),
    )
}
