use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub parameter: f64,
    pub ccc_mean: f64,
    pub ccc_std: f64,
    /// Individual scores behind the mean (folds and/or repeats).
    #[serde(default)]
    pub scores: Vec<f64>,
    /// Learned delays of every model behind the scores.
    #[serde(default)]
    pub taus: Vec<Vec<f64>>,
}

impl CurvePoint {
    pub fn from_scores(parameter: f64, scores: Vec<f64>, taus: Vec<Vec<f64>>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyRecord);
        }
        let (ccc_mean, ccc_std) = super::loso::mean_std(&scores);
        Ok(Self {
            parameter,
            ccc_mean,
            ccc_std,
            scores,
            taus,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    /// File stem of the curve's CSV.
    pub name: String,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("parameter,ccc_mean,ccc_std\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.parameter, p.ccc_mean, p.ccc_std);
        }
        s
    }
}

/// Scalar metrics and curves of an experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metrics: BTreeMap<String, f64>,
    pub curves: Vec<Curve>,
}

impl Report {
    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty() && self.curves.is_empty()
    }
}

pub(crate) const METRICS_NAME: &str = "metrics.json";
const POINTS_DIR: &str = "points";

/// Writes `metrics.json` and one `<name>.csv` per curve into `out_dir` and
/// returns the written paths.
pub fn emit_report(report: &Report, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.is_empty() {
        return Err(Error::EmptyInput("report"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let path = out_dir.join(METRICS_NAME);
    fs::write(&path, serde_json::to_string_pretty(report)? + "\n").map_err(|e| Error::io(&path, e))?;
    written.push(path);
    for c in &report.curves {
        let path = out_dir.join(format!("{}.csv", c.name));
        fs::write(&path, c.to_csv()).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn point_path(dir: &Path, curve: &str, index: usize) -> PathBuf {
    dir.join(POINTS_DIR).join(format!("{curve}-{index:03}.json"))
}

/// Returns the cached point if its file exists and matches `parameter`,
/// otherwise computes it and stores it.
pub(crate) fn cached_point(
    dir: Option<&Path>,
    curve: &str,
    index: usize,
    parameter: f64,
    compute: impl FnOnce() -> Result<CurvePoint>,
) -> Result<CurvePoint> {
    let Some(dir) = dir else {
        return compute();
    };
    let path = point_path(dir, curve, index);
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(p) = serde_json::from_str::<CurvePoint>(&text) {
            if p.parameter == parameter {
                return Ok(p);
            }
        }
    }
    let p = compute()?;
    let parent = path.parent().expect("point path has a parent");
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    // write then rename so an interrupted run never leaves a truncated point
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_string_pretty(&p)?).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(p)
}

/// Reassembles curves from the cached point files under `dir`, sorted by
/// curve name and point index.
pub fn load_points(dir: &Path) -> Result<Vec<Curve>> {
    let pdir = dir.join(POINTS_DIR);
    let entries = fs::read_dir(&pdir).map_err(|e| Error::io(&pdir, e))?;
    let mut by_curve: BTreeMap<String, BTreeMap<usize, CurvePoint>> = BTreeMap::new();
    for e in entries {
        let path = e.map_err(|e| Error::io(&pdir, e))?.path();
        let Some(stem) = path.file_name().and_then(|s| s.to_str()).and_then(|s| s.strip_suffix(".json")) else {
            continue;
        };
        let Some((name, idx)) = stem.rsplit_once('-') else {
            continue;
        };
        let Ok(idx) = idx.parse::<usize>() else {
            continue;
        };
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        by_curve
            .entry(name.to_string())
            .or_default()
            .insert(idx, serde_json::from_str(&text)?);
    }
    Ok(by_curve
        .into_iter()
        .map(|(name, pts)| Curve {
            name,
            points: pts.into_values().collect(),
        })
        .collect())
}
