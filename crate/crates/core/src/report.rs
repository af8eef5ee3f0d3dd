//! Run directory layout: `frames.jsonl` plus `summary.json`, and the
//! aggregations the report command derives from them.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::campaign::{CampaignRun, FrameLine, RunSummary};
use crate::time::SimTime;

pub const FRAMES_FILE: &str = "frames.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no run found in {0} (expected frames.jsonl and summary.json)")]
    MissingRun(PathBuf),
    #[error("{path}:{line}: malformed record")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a sibling temp file, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn frames_jsonl(frames: &[FrameLine]) -> String {
    let mut out = String::new();
    for f in frames {
        out.push_str(&serde_json::to_string(f).expect("frame lines always serialize"));
        out.push('\n');
    }
    out
}

pub fn summary_json(summary: &RunSummary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summaries always serialize");
    s.push('\n');
    s
}

pub fn write_run(dir: &Path, run: &CampaignRun) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_atomic(&dir.join(FRAMES_FILE), frames_jsonl(&run.frames).as_bytes())?;
    write_atomic(&dir.join(SUMMARY_FILE), summary_json(&run.summary).as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub frames: Vec<FrameLine>,
    pub summary: RunSummary,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun, ReportError> {
    let frames_path = dir.join(FRAMES_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    if !frames_path.is_file() || !summary_path.is_file() {
        return Err(ReportError::MissingRun(dir.to_path_buf()));
    }
    let text = fs::read_to_string(&frames_path).map_err(io_err(&frames_path))?;
    let frames = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| ReportError::Json {
                path: frames_path.clone(),
                line: i + 1,
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let text = fs::read_to_string(&summary_path).map_err(io_err(&summary_path))?;
    let summary = serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: summary_path.clone(),
        line: 0,
        source,
    })?;
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        frames,
        summary,
    })
}

/// Mean first-chunk and transfer latency for one lane count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneLatency {
    pub lanes: u32,
    pub frames: usize,
    pub mean_first_chunk_ms: f64,
    pub mean_complete_ms: f64,
    pub mean_transfer_ms: f64,
}

pub fn latency_by_lanes<'a>(frames: impl IntoIterator<Item = &'a FrameLine>) -> Vec<LaneLatency> {
    let mut acc: BTreeMap<u32, (usize, u128, u128, u128)> = BTreeMap::new();
    for f in frames {
        let e = acc.entry(f.lanes).or_default();
        e.0 += 1;
        e.1 += f.first_chunk_ps.as_ps() as u128;
        e.2 += f.complete_ps.as_ps() as u128;
        e.3 += f.transfer_ps.as_ps() as u128;
    }
    acc.into_iter()
        .map(|(lanes, (n, first, complete, transfer))| {
            let mean_ms = |sum: u128| sum as f64 / n as f64 / 1e9;
            LaneLatency {
                lanes,
                frames: n,
                mean_first_chunk_ms: mean_ms(first),
                mean_complete_ms: mean_ms(complete),
                mean_transfer_ms: mean_ms(transfer),
            }
        })
        .collect()
}

/// First-chunk latency histogram as `bin_start_ms,bin_end_ms,count` rows.
pub fn latency_histogram_csv<'a>(
    frames: impl IntoIterator<Item = &'a FrameLine>,
    bin: SimTime,
) -> String {
    let bin = bin.as_ps().max(1);
    let mut bins: BTreeMap<u64, u64> = BTreeMap::new();
    for f in frames {
        *bins.entry(f.first_chunk_ps.as_ps() / bin).or_default() += 1;
    }
    let mut out = String::from("bin_start_ms,bin_end_ms,count\n");
    for (b, count) in bins {
        let lo = SimTime(b * bin).as_ms_f64();
        let hi = SimTime((b + 1) * bin).as_ms_f64();
        out.push_str(&format!("{lo},{hi},{count}\n"));
    }
    out
}
