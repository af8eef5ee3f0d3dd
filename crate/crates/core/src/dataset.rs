//! Pre-recorded capsule studies: manifest ingest, time-to-frame lookup,
//! and the mosaic sources that feed the link.
//!
//! A manifest is a UTF-8 CSV with header `index,filename,timestamp_ms,label`.
//! Filenames are relative to the manifest's directory and point at PNG,
//! JPEG or already-converted `BAY1` files.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::RngExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{
    decode_bay, read_bay, resize_area, rgb_to_bayer, BayerImage, BayerPattern, ImagingError,
    RgbImage,
};
use crate::rng::{counter_rng, Stream};
use crate::time::{SimTime, PS_PER_US};

pub const MANIFEST_HEADER: [&str; 4] = ["index", "filename", "timestamp_ms", "label"];

/// Anatomical segments used by the synthetic study, in passage order.
pub const GI_SEGMENTS: [&str; 4] = ["esophagus", "stomach", "small_intestine", "colon"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },
    #[error("frame {index}: timestamp {timestamp_ms} ms does not follow {previous_ms} ms")]
    Order {
        index: usize,
        previous_ms: u64,
        timestamp_ms: u64,
    },
    #[error("referenced file {0} does not exist")]
    MissingFile(PathBuf),
    #[error("{path}: cannot decode: {msg}")]
    Decode { path: PathBuf, msg: String },
    #[error("study has no frames")]
    Empty,
    #[error("simulation time {t} is past the last frame at {last_ms} ms")]
    EndOfStudy { t: SimTime, last_ms: u64 },
    #[error("frame {index} does not match the target mosaic: {msg}")]
    FrameShape { index: usize, msg: String },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub filename: String,
    pub timestamp_ms: u64,
    pub label: String,
}

impl FrameRecord {
    pub fn timestamp(&self) -> SimTime {
        SimTime::from_ms(self.timestamp_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Study {
    id: String,
    root: PathBuf,
    frames: Vec<FrameRecord>,
    source_resolution: (u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndPolicy {
    #[default]
    HoldLast,
    RaiseEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManifestOptions {
    /// Rate used to synthesize timestamps for rows that leave `timestamp_ms` empty.
    pub untimed_fps: f64,
}

impl Default for ManifestOptions {
    fn default() -> Self {
        Self { untimed_fps: 1.0 }
    }
}

/// Modeled back-end latencies between a fetch request and the first byte
/// on the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub load_time_ps: SimTime,
    pub convert_time_ps: SimTime,
    /// Upper bound of an optional uniform extra delay; zero disables it.
    pub jitter_ps: SimTime,
    pub end_policy: EndPolicy,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            load_time_ps: SimTime(1_220 * PS_PER_US),
            convert_time_ps: SimTime(90 * PS_PER_US),
            jitter_ps: SimTime::ZERO,
            end_policy: EndPolicy::HoldLast,
        }
    }
}

impl ProviderConfig {
    /// Load plus convert time for the request at `position`, including jitter.
    pub fn prep_latency(&self, seed: u64, position: u64) -> SimTime {
        let base = self.load_time_ps + self.convert_time_ps;
        if self.jitter_ps == SimTime::ZERO {
            return base;
        }
        let mut rng = counter_rng(seed, Stream::ProviderJitter, position);
        base + SimTime(rng.random_range(0..=self.jitter_ps.0))
    }
}

impl Study {
    /// Builds a study from in-memory records, checking ordering but not files.
    pub fn from_records(
        id: impl Into<String>,
        root: impl Into<PathBuf>,
        frames: Vec<FrameRecord>,
        source_resolution: (u32, u32),
    ) -> Result<Self, DatasetError> {
        validate_records(&frames)?;
        Ok(Self {
            id: id.into(),
            root: root.into(),
            frames,
            source_resolution,
        })
    }

    /// A file-less study of `n` frames at `source_fps`, labeled by contiguous
    /// GI segments in proportions 5/30/45/20 percent.
    pub fn synthetic(id: &str, n: usize, source_fps: f64) -> Result<Self, DatasetError> {
        if n == 0 {
            return Err(DatasetError::Empty);
        }
        let labels = segment_labels(n);
        let frames = (0..n)
            .map(|i| FrameRecord {
                index: i,
                filename: format!("synthetic/{i:06}.bay"),
                timestamp_ms: synthetic_timestamp_ms(i, source_fps),
                label: labels[i].to_string(),
            })
            .collect();
        Self::from_records(id, PathBuf::new(), frames, (320, 320))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn source_resolution(&self) -> (u32, u32) {
        self.source_resolution
    }

    pub fn resolve(&self, record: &FrameRecord) -> PathBuf {
        self.root.join(&record.filename)
    }

    pub fn duration(&self) -> SimTime {
        self.frames.last().map(FrameRecord::timestamp).unwrap_or_default()
    }

    /// Latest frame whose timestamp is at or before `t`. Times before the
    /// first frame map to frame 0.
    pub fn frame_at(&self, t: SimTime, policy: EndPolicy) -> Result<&FrameRecord, DatasetError> {
        let last = self.frames.last().ok_or(DatasetError::Empty)?;
        if policy == EndPolicy::RaiseEnd && t > last.timestamp() {
            return Err(DatasetError::EndOfStudy {
                t,
                last_ms: last.timestamp_ms,
            });
        }
        let after = self.frames.partition_point(|f| f.timestamp() <= t);
        Ok(&self.frames[after.saturating_sub(1)])
    }
}

fn segment_labels(n: usize) -> Vec<&'static str> {
    const SHARE_PERCENT: [usize; 4] = [5, 30, 45, 20];
    let mut out = Vec::with_capacity(n);
    for (seg, pct) in GI_SEGMENTS.iter().zip(SHARE_PERCENT) {
        let count = (n * pct + 50) / 100;
        out.extend(std::iter::repeat_n(*seg, count));
    }
    out.resize(n, GI_SEGMENTS[3]);
    out
}

fn synthetic_timestamp_ms(index: usize, fps: f64) -> u64 {
    (index as f64 * 1_000.0 / fps).round() as u64
}

fn validate_records(frames: &[FrameRecord]) -> Result<(), DatasetError> {
    if frames.is_empty() {
        return Err(DatasetError::Empty);
    }
    for (i, pair) in frames.windows(2).enumerate() {
        if pair[1].timestamp_ms <= pair[0].timestamp_ms {
            return Err(DatasetError::Order {
                index: i + 1,
                previous_ms: pair[0].timestamp_ms,
                timestamp_ms: pair[1].timestamp_ms,
            });
        }
    }
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<Study, DatasetError> {
    load_manifest_with(path, &ManifestOptions::default())
}

pub fn load_manifest_with(path: &Path, opts: &ManifestOptions) -> Result<Study, DatasetError> {
    let frames = read_manifest(path, opts)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut seen: HashMap<&str, (u32, u32)> = HashMap::new();
    for f in &frames {
        if !seen.contains_key(f.filename.as_str()) {
            let dims = probe_image(&root.join(&f.filename))?;
            seen.insert(&f.filename, dims);
        }
    }
    let source_resolution = seen[frames[0].filename.as_str()];
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Study {
        id,
        root,
        frames,
        source_resolution,
    })
}

/// Parses and validates manifest rows without touching the image files.
pub fn read_manifest(path: &Path, opts: &ManifestOptions) -> Result<Vec<FrameRecord>, DatasetError> {
    let parse_err = |line: u64, msg: String| DatasetError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(0, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(parse_err(
            1,
            format!("expected header {}", MANIFEST_HEADER.join(",")),
        ));
    }

    let mut frames = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let line = row as u64 + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let index: usize = rec[0]
            .parse()
            .map_err(|_| parse_err(line, format!("bad index {:?}", &rec[0])))?;
        if index != row {
            return Err(parse_err(line, format!("index {index} where {row} was expected")));
        }
        if rec[1].is_empty() {
            return Err(parse_err(line, "empty filename".into()));
        }
        let timestamp_ms = if rec[2].is_empty() {
            synthetic_timestamp_ms(row, opts.untimed_fps)
        } else {
            rec[2]
                .parse()
                .map_err(|_| parse_err(line, format!("bad timestamp {:?}", &rec[2])))?
        };
        frames.push(FrameRecord {
            index,
            filename: rec[1].to_string(),
            timestamp_ms,
            label: rec[3].to_string(),
        });
    }
    validate_records(&frames)?;
    Ok(frames)
}

pub fn write_manifest(study: &Study, path: &Path) -> Result<(), DatasetError> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp).map_err(|e| DatasetError::Parse {
            path: tmp.clone(),
            line: 0,
            msg: e.to_string(),
        })?;
        let csv_err = |e: csv::Error| DatasetError::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        };
        w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
        for f in &study.frames {
            w.write_record([
                f.index.to_string(),
                f.filename.clone(),
                f.timestamp_ms.to_string(),
                f.label.clone(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Confirms the file exists and its header decodes; returns its dimensions.
fn probe_image(path: &Path) -> Result<(u32, u32), DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let decode_err = |msg: String| DatasetError::Decode {
        path: path.to_path_buf(),
        msg,
    };
    if is_bay(path) {
        let mut header = [0u8; 16];
        fs::File::open(path)?
            .read_exact(&mut header)
            .map_err(|e| decode_err(e.to_string()))?;
        if &header[..4] != crate::imaging::BAY_MAGIC {
            return Err(decode_err("missing BAY1 magic".into()));
        }
        let w = u32::from_le_bytes(header[4..8].try_into().unwrap());
        let h = u32::from_le_bytes(header[8..12].try_into().unwrap());
        let expected = 16 + 2 * w as u64 * h as u64;
        if fs::metadata(path)?.len() != expected {
            return Err(decode_err("file length does not match header".into()));
        }
        return Ok((w, h));
    }
    image::ImageReader::open(path)?
        .with_guessed_format()?
        .into_dimensions()
        .map_err(|e| decode_err(e.to_string()))
}

fn is_bay(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("bay"))
}

/// Target geometry of the injected mosaic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MosaicSpec {
    pub width: u32,
    pub height: u32,
    pub bit_depth: u16,
    pub pattern: BayerPattern,
}

/// Produces the injected mosaic for a frame.
pub trait MosaicSource {
    fn mosaic(&mut self, record: &FrameRecord) -> Result<BayerImage, DatasetError>;
}

/// Decodes, downsizes and mosaics study images, or reads `BAY1` files as-is.
pub struct FileMosaicSource {
    root: PathBuf,
    spec: MosaicSpec,
    last: Option<(usize, BayerImage)>,
}

impl FileMosaicSource {
    pub fn new(study: &Study, spec: MosaicSpec) -> Self {
        Self {
            root: study.root().to_path_buf(),
            spec,
            last: None,
        }
    }
}

/// Full back-end conversion of one source image: area downscale to the
/// sensor resolution, then mosaic.
pub fn convert_image(path: &Path, spec: &MosaicSpec) -> Result<BayerImage, DatasetError> {
    let decoded = image::open(path).map_err(|e| DatasetError::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let rgb = RgbImage::from(decoded.to_rgb8());
    let resized = resize_area(&rgb, spec.width, spec.height)?;
    Ok(rgb_to_bayer(&resized, spec.pattern, spec.bit_depth)?)
}

impl MosaicSource for FileMosaicSource {
    fn mosaic(&mut self, record: &FrameRecord) -> Result<BayerImage, DatasetError> {
        if let Some((idx, img)) = &self.last {
            if *idx == record.index {
                return Ok(img.clone());
            }
        }
        let path = self.root.join(&record.filename);
        let img = if is_bay(&path) {
            let img = read_bay(&path)?;
            let s = &self.spec;
            if (img.width(), img.height(), img.bit_depth(), img.pattern())
                != (s.width, s.height, s.bit_depth, s.pattern)
            {
                return Err(DatasetError::FrameShape {
                    index: record.index,
                    msg: format!(
                        "{}x{} {}-bit {} in {}",
                        img.width(),
                        img.height(),
                        img.bit_depth(),
                        img.pattern(),
                        path.display()
                    ),
                });
            }
            img
        } else {
            convert_image(&path, &self.spec)?
        };
        self.last = Some((record.index, img.clone()));
        Ok(img)
    }
}

/// Deterministic pseudo-random mosaics keyed by frame index. Samples are
/// 8-bit values widened to the target depth, like converted camera frames.
///
/// A small pool of random base mosaics is drawn once; frame `i` is one of
/// them rotated by a keyed offset, so producing a frame costs one copy.
pub struct SyntheticMosaicSource {
    spec: MosaicSpec,
    seed: u64,
    pool: Vec<Vec<u16>>,
}

const SYNTHETIC_POOL: usize = 16;

impl SyntheticMosaicSource {
    pub fn new(spec: MosaicSpec, seed: u64) -> Self {
        let n = spec.width as usize * spec.height as usize;
        let shift = u32::from(spec.bit_depth.saturating_sub(8));
        let pool = (0..SYNTHETIC_POOL as u64)
            .map(|b| {
                let key = splitmix(seed ^ splitmix(b));
                let mut samples = vec![0u16; n];
                // One mixer output supplies eight 8-bit samples.
                for (block, out) in samples.chunks_mut(8).enumerate() {
                    let bytes = splitmix(key ^ block as u64).to_le_bytes();
                    for (o, byte) in out.iter_mut().zip(bytes) {
                        *o = u16::from(byte).wrapping_shl(shift);
                    }
                }
                samples
            })
            .collect();
        Self { spec, seed, pool }
    }

    pub fn frame(&self, index: usize) -> BayerImage {
        let s = &self.spec;
        let key = splitmix(self.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let base = &self.pool[index % SYNTHETIC_POOL];
        let offset = if base.is_empty() {
            0
        } else {
            (key % base.len() as u64) as usize
        };
        let mut samples = Vec::with_capacity(base.len());
        samples.extend_from_slice(&base[offset..]);
        samples.extend_from_slice(&base[..offset]);
        BayerImage::new(s.width, s.height, s.bit_depth, s.pattern, samples)
            .expect("spec describes a valid mosaic")
    }
}

impl MosaicSource for SyntheticMosaicSource {
    fn mosaic(&mut self, record: &FrameRecord) -> Result<BayerImage, DatasetError> {
        Ok(self.frame(record.index))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Ensures a converted mosaic decodes from disk exactly as written.
pub fn verify_bay_file(path: &Path, expected: &BayerImage) -> Result<bool, DatasetError> {
    Ok(&decode_bay(&fs::read(path)?)? == expected)
}
