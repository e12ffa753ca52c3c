//! Plot-ready curves: per-seed binning of episode metrics, then the median
//! and the min/max band across seeds.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::manifest::{seed_dir_name, RunManifest};
use crate::run::EpisodeRow;
use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub step: usize,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean of `(step, value)` points per bin `((k-1)·width, k·width]`, for
/// `k = 1..=ceil(last step / width)`. Empty bins are `None`.
pub fn bin_curve(points: &[(usize, f64)], width: usize) -> Vec<(usize, Option<f64>)> {
    let last = points.iter().map(|p| p.0).max().unwrap_or(0);
    let bins = last.div_ceil(width);
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for &(s, v) in points {
        let k = s.max(1).div_ceil(width) - 1;
        sum[k] += v;
        count[k] += 1;
    }
    (0..bins).map(|k| ((k + 1) * width, (count[k] > 0).then(|| sum[k] / count[k] as f64))).collect()
}

/// Fill empty bins by linear interpolation between the nearest filled bins;
/// leading and trailing gaps take the nearest filled value.
pub fn fill_gaps(curve: &[(usize, Option<f64>)]) -> Vec<(usize, f64)> {
    let known: Vec<(usize, f64)> = curve.iter().filter_map(|&(s, v)| v.map(|v| (s, v))).collect();
    curve
        .iter()
        .map(|&(s, v)| {
            if let Some(v) = v {
                return (s, v);
            }
            let before = known.iter().rev().find(|k| k.0 < s);
            let after = known.iter().find(|k| k.0 > s);
            let v = match (before, after) {
                (Some(a), Some(b)) => a.1 + (b.1 - a.1) * (s - a.0) as f64 / (b.0 - a.0) as f64,
                (Some(a), None) => a.1,
                (None, Some(b)) => b.1,
                (None, None) => f64::NAN,
            };
            (s, v)
        })
        .collect()
}

/// Median and min/max across seeds. Curves are cut to the shortest one so
/// every row has a value from every seed.
pub fn band(curves: &[Vec<(usize, f64)>]) -> Vec<BandRow> {
    let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let mut v: Vec<f64> = curves.iter().map(|c| c[i].1).collect();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
            BandRow { step: curves[0][i].0, median, min: v[0], max: v[n - 1] }
        })
        .collect()
}

pub fn read_episodes(path: &Path) -> Result<Vec<EpisodeRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<EpisodeRow>, _>>()?)
}

/// Return and violation-rate bands of one run directory.
pub fn run_bands(dir: &Path, width: usize) -> Result<(Vec<BandRow>, Vec<BandRow>)> {
    if width == 0 {
        return Err(HarnessError::Config("bin width must be positive".into()));
    }
    let m = RunManifest::read(dir)?;
    let mut returns = Vec::new();
    let mut violations = Vec::new();
    for &seed in &m.seeds {
        let rows = read_episodes(&dir.join(seed_dir_name(seed)).join(&m.outputs.episodes))?;
        let ret: Vec<(usize, f64)> = rows.iter().map(|r| (r.step, r.ret)).collect();
        let vio: Vec<(usize, f64)> = rows.iter().map(|r| (r.step, r.violation as f64)).collect();
        returns.push(fill_gaps(&bin_curve(&ret, width)));
        violations.push(fill_gaps(&bin_curve(&vio, width)));
    }
    Ok((band(&returns), band(&violations)))
}

/// Write `<label>_return.csv` and `<label>_violation.csv` per run directory,
/// where the label is the directory name.
pub fn export_plots(dirs: &[PathBuf], out: &Path, width: usize) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for dir in dirs {
        let label = dir.file_name().and_then(|n| n.to_str()).unwrap_or("run").to_string();
        let (ret, vio) = run_bands(dir, width)?;
        for (kind, rows) in [("return", ret), ("violation", vio)] {
            let path = out.join(format!("{label}_{kind}.csv"));
            let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path)?;
            w.write_record(["step", "median", "min", "max"])?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_bins_reproduce_the_curve() {
        let f = |k: usize| (k as f64 * 0.37).sin();
        let pts: Vec<(usize, f64)> = (1..=20).map(|k| (k * 100, f(k))).collect();
        let binned = bin_curve(&pts, 100);
        assert_eq!(binned.len(), 20);
        for (i, (s, v)) in binned.iter().enumerate() {
            assert_eq!(*s, (i + 1) * 100);
            assert_eq!(*v, Some(f(i + 1)));
        }
    }

    #[test]
    fn gaps_are_interpolated() {
        let c = vec![(10, Some(1.0)), (20, None), (30, Some(3.0)), (40, None)];
        assert_eq!(fill_gaps(&c), vec![(10, 1.0), (20, 2.0), (30, 3.0), (40, 3.0)]);
    }

    #[test]
    fn identical_seeds_collapse_the_band() {
        let c: Vec<(usize, f64)> = (1..10).map(|k| (k, k as f64)).collect();
        for r in band(&[c.clone(), c.clone(), c]) {
            assert_eq!(r.min, r.median);
            assert_eq!(r.max, r.median);
        }
    }

    #[test]
    fn band_is_ordered_and_truncated() {
        let a: Vec<(usize, f64)> = (1..10).map(|k| (k, k as f64)).collect();
        let b: Vec<(usize, f64)> = (1..6).map(|k| (k, -(k as f64))).collect();
        let c: Vec<(usize, f64)> = (1..8).map(|k| (k, 0.5)).collect();
        let rows = band(&[a, b, c]);
        assert_eq!(rows.len(), 5);
        for r in rows {
            assert!(r.min <= r.median && r.median <= r.max);
        }
    }
}
