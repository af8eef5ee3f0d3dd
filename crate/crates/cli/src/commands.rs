use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use hilsim_core::campaign::{run_campaign, Preset};
use hilsim_core::dataset::{
    convert_image, read_manifest, verify_bay_file, write_manifest, FrameRecord, ManifestOptions,
    Study,
};
use hilsim_core::imaging::write_bay;
use hilsim_core::power::{fps_range, idling_max_fps, power_sweep, sweep_csv};
use hilsim_core::report::{
    latency_by_lanes, latency_histogram_csv, load_run, write_atomic, write_run, LoadedRun,
};
use hilsim_core::time::SimTime;
use rayon::prelude::*;

use crate::{ConvertArgs, ReportArgs, RunArgs, SweepArgs, SynthArgs};

/// Exit status for a campaign that completed but failed verification.
const VERIFY_FAILED: u8 = 2;

pub const INDEX_FILE: &str = "index.csv";

enum Converted {
    Written(FrameRecord),
    Unchanged(FrameRecord),
}

pub fn convert(args: &ConvertArgs) -> Result<ExitCode> {
    let cfg = args.config.load(Preset::Nominal75Mhz)?;
    let mut spec = cfg.mosaic_spec();
    if let Some(p) = args.pattern {
        spec.pattern = p;
    }
    if let Some(b) = args.bit_depth {
        spec.bit_depth = b;
    }
    let records = read_manifest(&args.manifest, &ManifestOptions::default())?;
    let root = args.manifest.parent().unwrap_or(Path::new(""));
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let results: Vec<(usize, Result<Converted>)> = records
        .par_iter()
        .map(|r| {
            let res = (|| {
                let rel = Path::new(&r.filename).with_extension("bay");
                let dst = args.out.join(&rel);
                if let Some(dir) = dst.parent() {
                    fs::create_dir_all(dir)?;
                }
                let img = convert_image(&root.join(&r.filename), &spec)?;
                let record = FrameRecord {
                    filename: rel.to_string_lossy().replace('\\', "/"),
                    ..r.clone()
                };
                if dst.is_file() && verify_bay_file(&dst, &img).unwrap_or(false) {
                    return Ok(Converted::Unchanged(record));
                }
                write_bay(&dst, &img)?;
                ensure!(
                    verify_bay_file(&dst, &img)?,
                    "{} does not read back as written",
                    dst.display()
                );
                Ok(Converted::Written(record))
            })();
            (r.index, res)
        })
        .collect();

    let mut converted = Vec::new();
    let mut unchanged = 0;
    let mut failures = Vec::new();
    for (index, res) in results {
        match res {
            Ok(Converted::Written(r)) => converted.push(r),
            Ok(Converted::Unchanged(r)) => {
                unchanged += 1;
                converted.push(r);
            }
            Err(e) => failures.push((index, e)),
        }
    }
    for (index, e) in &failures {
        eprintln!("frame {index}: {e:#}");
    }
    if converted.is_empty() {
        bail!("no frame could be converted");
    }
    let id = args
        .manifest
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let study = Study::from_records(id, args.out.clone(), converted, (spec.width, spec.height))?;
    write_manifest(&study, &args.out.join(INDEX_FILE))?;
    println!(
        "converted {} frames to {}x{} {}-bit {} ({} unchanged, {} failed) in {}",
        study.len(),
        spec.width,
        spec.height,
        spec.bit_depth,
        spec.pattern,
        unchanged,
        failures.len(),
        args.out.display()
    );
    Ok(if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

pub fn run(args: &RunArgs) -> Result<ExitCode> {
    let cfg = args.config.load(Preset::Nominal75Mhz)?;
    let run = run_campaign(&cfg)?;
    write_run(&args.out, &run)?;
    let s = &run.summary;
    let r = &s.report;
    println!("run {}: {} frames, seed {}", s.name, r.frames, s.seed);
    println!("flagged: {}", r.flagged);
    println!("corrupted: {}", r.corrupted);
    println!("total deviations: {}", r.total_deviations);
    if let Some(l) = &r.first_chunk_latency {
        println!("mean first-chunk latency: {:.3} ms", l.mean_ms());
    }
    if let Some(acc) = r.classifier_accuracy {
        println!("classifier accuracy: {acc:.4}");
    }
    if let Some(p) = &r.power {
        println!(
            "average power: {:.3} mW (active fraction {:.4})",
            p.average_mw, p.active_fraction
        );
    }
    for v in &s.invariant_violations {
        println!("invariant violation: {v}");
    }
    println!("reports written to {}", args.out.display());
    Ok(if s.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(VERIFY_FAILED)
    })
}

pub fn sweep(args: &SweepArgs) -> Result<ExitCode> {
    let cfg = args.config.load(Preset::LowPower5Mhz)?;
    let clock = args.clock_hz.unwrap_or(cfg.sensor_clock_hz);
    let mut params = cfg.power.unwrap_or_default();
    if let Some(p) = args.p_active_mw {
        params.p_active_mw = p;
    }
    if let Some(p) = args.p_idle_mw {
        params.p_idle_mw = p;
    }
    let fps = fps_range(args.fps_start, args.fps_end, args.fps_step);
    let points = power_sweep(&cfg.sensor, &fps, clock, &params)?;
    let csv = sweep_csv(&points);
    match &args.out {
        Some(path) => {
            write_atomic(path, csv.as_bytes())?;
            eprintln!(
                "{} points at {} Hz, saturation at {:.6} fps, written to {}",
                points.len(),
                clock,
                idling_max_fps(&cfg.sensor, clock),
                path.display()
            );
        }
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn frame_list(indices: &[usize]) -> String {
    if indices.is_empty() {
        return "none".into();
    }
    indices.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// Recomputes the summary counters from the per-frame lines.
fn check_consistency(run: &LoadedRun) -> Result<()> {
    let r = &run.summary.report;
    let flagged = run.frames.iter().filter(|f| f.flagged).count() as u64;
    let corrupted = run.frames.iter().filter(|f| f.deviations > 0).count() as u64;
    let deviations: u64 = run.frames.iter().map(|f| f.deviations).sum();
    ensure!(
        (run.frames.len() as u64, flagged, corrupted, deviations)
            == (r.frames, r.flagged, r.corrupted, r.total_deviations),
        "{}: frames.jsonl disagrees with summary.json",
        run.dir.display()
    );
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<ExitCode> {
    ensure!(args.bin_ms > 0.0, "--bin-ms must be positive");
    let runs = args
        .runs
        .iter()
        .map(|d| load_run(d))
        .collect::<Result<Vec<_>, _>>()?;
    let mut corrupted = 0;
    let mut flagged = 0;
    for run in &runs {
        check_consistency(run)?;
        let s = &run.summary;
        let r = &s.report;
        corrupted += r.corrupted;
        flagged += r.flagged;
        println!(
            "run {} ({}): {} frames, {} lanes, {} Hz, seed {}",
            s.name,
            run.dir.display(),
            r.frames,
            s.lanes,
            s.sensor_clock_hz,
            s.seed
        );
        println!("  flagged: {}  corrupted: {}  total deviations: {}", r.flagged, r.corrupted, r.total_deviations);
        if let Some(acc) = r.classifier_accuracy {
            println!("  classifier accuracy: {acc:.4}");
        }
        let flagged_idx: Vec<usize> =
            run.frames.iter().filter(|f| f.flagged).map(|f| f.frame_index).collect();
        let corrupted_idx: Vec<usize> =
            run.frames.iter().filter(|f| f.deviations > 0).map(|f| f.frame_index).collect();
        println!("  flagged frames: {}", frame_list(&flagged_idx));
        println!("  corrupted frames: {}", frame_list(&corrupted_idx));
        if s.invariant_violations.is_empty() {
            println!("  invariant violations: 0");
        } else {
            println!("  invariant violations: {}", s.invariant_violations.len());
        }
    }
    for l in latency_by_lanes(runs.iter().flat_map(|r| &r.frames)) {
        println!(
            "lanes {}: mean first chunk {:.3} ms, complete {:.3} ms, transfer {:.3} ms over {} frames",
            l.lanes, l.mean_first_chunk_ms, l.mean_complete_ms, l.mean_transfer_ms, l.frames
        );
    }
    println!("flagged: {flagged}");
    println!("corrupted: {corrupted}");

    let hist_path: PathBuf = args
        .histogram
        .clone()
        .unwrap_or_else(|| runs[0].dir.join("latency_histogram.csv"));
    let bin = SimTime::from_secs_f64(args.bin_ms / 1e3);
    let csv = latency_histogram_csv(runs.iter().flat_map(|r| &r.frames), bin);
    write_atomic(&hist_path, csv.as_bytes())?;
    println!("histogram written to {}", hist_path.display());
    Ok(ExitCode::SUCCESS)
}

fn synth_image(size: u32, seed: u64, index: usize) -> image::RgbImage {
    let phase = (seed as u32).wrapping_mul(31).wrapping_add(index as u32 * 17);
    image::RgbImage::from_fn(size, size, |x, y| {
        let r = (x.wrapping_add(phase) * 255 / size.max(1)) as u8;
        let g = ((y * 3 + x / 2).wrapping_add(phase * 7) % 256) as u8;
        let b = ((x ^ y).wrapping_add(phase * 13) % 256) as u8;
        image::Rgb([r, g, b])
    })
}

pub fn synth(args: &SynthArgs) -> Result<ExitCode> {
    ensure!(args.size >= 2, "--size must be at least 2");
    let base = Study::synthetic("synthetic", args.frames, args.fps)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let records: Vec<FrameRecord> = base
        .frames()
        .iter()
        .map(|r| FrameRecord {
            filename: format!("frame_{:05}.png", r.index),
            ..r.clone()
        })
        .collect();
    records.par_iter().try_for_each(|r| -> Result<()> {
        let path = args.out.join(&r.filename);
        let mut tmp = path.clone().into_os_string();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        synth_image(args.size, args.seed, r.index)
            .save_with_format(&tmp, image::ImageFormat::Png)
            .with_context(|| format!("writing {}", path.display()))?;
        fs::rename(&tmp, &path)?;
        Ok(())
    })?;
    let study = Study::from_records("study", args.out.clone(), records, (args.size, args.size))?;
    let manifest = args.out.join("study.csv");
    write_manifest(&study, &manifest)?;
    println!("wrote {} frames and {}", study.len(), manifest.display());
    Ok(ExitCode::SUCCESS)
}
