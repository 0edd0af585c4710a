//! `evseg sweep`: run the method comparison (progressive, motion-only,
//! filter-then-motion) over a suite of labeled sequences and write the
//! noise-level x method MIoU table.

use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;

use evseg::events::{load_events, load_labels, FileFormat, LabeledEvents};
use evseg::sweep::{
    estimate_noise_level, run_sequence, snap_noise_level, write_iou_detail_csv,
    write_records_csv, write_table_csv, RunRecord, SweepConfig, SweepTable, STANDARD_METHODS,
};
use evseg::synth::{generate_sequence, standard_suite_specs, SceneSpec};

use crate::config::{ensure_out_dir, CommonOpts, Settings};
use crate::CliError;

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Directory of event files, each with a `<stem>.labels.csv` sidecar;
    /// omit when using --suite.
    #[arg(required_unless_present = "suite", conflicts_with = "suite")]
    pub suite_dir: Option<PathBuf>,

    /// Run on the built-in standard suite instead of a directory.
    #[arg(long)]
    pub suite: bool,

    #[command(flatten)]
    pub common: CommonOpts,
}

/// One sequence to run; loading and generation happen on the worker so a
/// bad sequence becomes per-cell errors instead of aborting the sweep.
enum Job {
    Spec(SceneSpec),
    File {
        name: String,
        events: PathBuf,
        labels: PathBuf,
        format: FileFormat,
    },
}

impl Job {
    fn name(&self) -> &str {
        match self {
            Job::Spec(spec) => &spec.name,
            Job::File { name, .. } => name,
        }
    }
}

pub fn run(args: &SweepArgs) -> Result<(), CliError> {
    let settings = Settings::resolve_sweep(&args.common)?;
    let cfg = settings.sweep_config();

    let jobs: Vec<Job> = if args.suite {
        standard_suite_specs(cfg.seed).into_iter().map(Job::Spec).collect()
    } else {
        let dir = args.suite_dir.as_ref().expect("clap enforces dir xor suite");
        scan_suite_dir(dir, &settings)?
    };
    if jobs.is_empty() {
        return Err(CliError::Usage("suite contains no sequences".into()));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs)
        .build()
        .map_err(|e| CliError::Io(format!("building thread pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|job| run_job(job, &cfg, settings.clusters))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();

    ensure_out_dir(&args.common.out)?;
    let out = &args.common.out;
    let io_err = |e: std::io::Error| CliError::Io(format!("writing sweep outputs: {e}"));
    write_records_csv(out.join("records.csv"), &records).map_err(io_err)?;
    let table = SweepTable::from_records(&records);
    write_table_csv(out.join("table.csv"), &table).map_err(io_err)?;
    let text = table.to_text();
    std::fs::write(out.join("table.txt"), &text).map_err(io_err)?;
    print!("{text}");
    let detail: Vec<(String, evseg::metrics::IoUReport)> = records
        .iter()
        .filter_map(|r| {
            r.report
                .as_ref()
                .map(|rep| (format!("{}:{}", r.sequence, r.method), rep.clone()))
        })
        .collect();
    write_iou_detail_csv(out.join("iou_detail.csv"), &detail).map_err(io_err)?;

    let mut manifest = settings
        .manifest("sweep", &args.common)
        .param("suite", args.suite)
        .param("sequences", jobs.len());
    if let Some(dir) = &args.suite_dir {
        manifest = manifest.input(dir);
    }
    manifest.write(out)?;

    for record in records.iter().filter(|r| r.error.is_some()) {
        log::warn!(
            "{} / {}: {}",
            record.sequence,
            record.method,
            record.error.as_deref().unwrap_or("unknown")
        );
    }
    if records.iter().any(|r| r.error.is_none()) {
        Ok(())
    } else {
        Err(CliError::Usage("every sweep cell failed".into()))
    }
}

fn run_job(job: &Job, cfg: &SweepConfig, clusters_override: Option<usize>) -> Vec<RunRecord> {
    match job {
        Job::Spec(spec) => match generate_sequence(spec) {
            Ok(labeled) => run_sequence(
                &spec.name,
                spec.noise_level,
                &labeled,
                clusters_override.unwrap_or(spec.objects.len()),
                Some(&spec.objects),
                &STANDARD_METHODS,
                cfg,
            ),
            Err(err) => error_records(&spec.name, spec.noise_level, &err.to_string()),
        },
        Job::File {
            name,
            events,
            labels,
            format,
        } => match load_sequence(events, labels, *format) {
            Ok(labeled) => {
                let noise_level = snap_noise_level(estimate_noise_level(&labeled.labels));
                let n_clusters = clusters_override.unwrap_or_else(|| labeled.object_ids().len());
                if n_clusters == 0 {
                    return error_records(name, noise_level, "ground truth has no object labels");
                }
                run_sequence(
                    name,
                    noise_level,
                    &labeled,
                    n_clusters,
                    None,
                    &STANDARD_METHODS,
                    cfg,
                )
            }
            Err(err) => error_records(name, 0.0, &err.to_string()),
        },
    }
}

fn load_sequence(
    events: &Path,
    labels: &Path,
    format: FileFormat,
) -> Result<LabeledEvents, evseg::events::EventIoError> {
    let packet = load_events(events, format, None)?;
    let labels = load_labels(labels)?;
    LabeledEvents::new(packet, labels)
}

fn error_records(name: &str, noise_level: f64, error: &str) -> Vec<RunRecord> {
    STANDARD_METHODS
        .iter()
        .map(|&method| RunRecord {
            sequence: name.to_string(),
            noise_level,
            method,
            elapsed_secs: 0.0,
            miou: None,
            oss: None,
            report: None,
            error: Some(error.to_string()),
        })
        .collect()
}

/// Pairs every event file in `dir` with its label sidecar, in name order.
fn scan_suite_dir(dir: &Path, settings: &Settings) -> Result<Vec<Job>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", dir.display())))?;
    let mut jobs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Io(format!("reading {}: {e}", dir.display())))?;
        let path = entry.path();
        let name = match path.file_name().and_then(|n| n.to_str()) {
            Some(n) => n.to_string(),
            None => continue,
        };
        if name.ends_with(".labels.csv") || name == "manifest.toml" {
            continue;
        }
        let stem = match path.file_stem().and_then(|s| s.to_str()) {
            Some(s) => s.to_string(),
            None => continue,
        };
        let labels = dir.join(format!("{stem}.labels.csv"));
        if !labels.exists() {
            log::warn!("{name}: no label sidecar, skipping");
            continue;
        }
        jobs.push(Job::File {
            format: settings.format_for(&path),
            name: stem,
            events: path,
            labels,
        });
    }
    jobs.sort_by(|a, b| a.name().cmp(b.name()));
    Ok(jobs)
}
