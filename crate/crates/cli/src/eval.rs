//! `evseg eval`: score predicted labels against ground truth, writing the
//! per-object IoU table, a denoising ROC, and a short plain-text summary.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;

use evseg::events::load_labels;
use evseg::metrics::{denoise_roc, iou_report, roc_auc, IoUReport, MetricsError};

use crate::config::{ensure_out_dir, CommonOpts, Settings};
use crate::CliError;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Predicted label sidecar.
    pub pred: PathBuf,

    /// Ground-truth label sidecar.
    pub gt: PathBuf,

    /// Confidence CSV from segment; scores the ROC with real confidences
    /// instead of the hard labels.
    #[arg(long, value_name = "FILE")]
    pub confidence: Option<PathBuf>,

    #[command(flatten)]
    pub common: CommonOpts,
}

pub fn run(args: &EvalArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.common)?;
    let pred = load_labels(&args.pred)?;
    let gt = load_labels(&args.gt)?;
    let report = iou_report(&pred, &gt)?;

    ensure_out_dir(&args.common.out)?;
    let out = &args.common.out;
    write_iou_csv(&out.join("iou.csv"), &report)?;

    let scores = match &args.confidence {
        Some(path) => confidence_scores(path, pred.len())?,
        None => pred
            .iter()
            .map(|l| if l.is_noise() { 0.0 } else { 1.0 })
            .collect(),
    };
    let is_noise: Vec<bool> = gt.iter().map(|l| l.is_noise()).collect();
    let thresholds: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let roc_note = match denoise_roc(&scores, &is_noise, &thresholds) {
        Ok(points) => {
            write_roc_csv(&out.join("roc.csv"), &points)?;
            let auc = roc_auc(&scores, &is_noise)?;
            format!("AUC {auc:.4}")
        }
        Err(MetricsError::EmptyClass { class }) => {
            format!("AUC skipped: ground truth has no {class} events")
        }
        Err(err) => return Err(err.into()),
    };

    let noise_pred = pred.iter().filter(|l| l.is_noise()).count();
    let noise_gt = is_noise.iter().filter(|n| **n).count();
    let summary = format!(
        "MIoU {:.2}\n{roc_note}\nobjects {}\nevents {}\nnoise_gt {noise_gt}\nnoise_pred {noise_pred}\n",
        report.miou * 100.0,
        report.per_object.len(),
        gt.len(),
    );
    std::fs::write(out.join("summary.txt"), &summary)
        .map_err(|e| CliError::Io(format!("writing summary: {e}")))?;
    print!("{summary}");

    let mut manifest = settings
        .manifest("eval", &args.common)
        .input(&args.pred)
        .input(&args.gt);
    if let Some(path) = &args.confidence {
        manifest = manifest.input(path);
    }
    manifest.write(out)
}

/// Per-object rows, IoU and MIoU as percentages.
fn write_iou_csv(path: &Path, report: &IoUReport) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Io(format!("writing {}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(w, "object,matched_cluster,IoU,MIoU").map_err(io_err)?;
    for ((object, iou), (_, matched)) in report.per_object.iter().zip(&report.matching) {
        let matched = matched.map_or(String::new(), |m| m.to_string());
        writeln!(
            w,
            "{object},{matched},{:.4},{:.4}",
            iou * 100.0,
            report.miou * 100.0
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn write_roc_csv(path: &Path, points: &[evseg::metrics::RocPoint]) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Io(format!("writing {}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(w, "threshold,fpr,tpr").map_err(io_err)?;
    for p in points {
        writeln!(w, "{:.4},{:.6},{:.6}", p.threshold, p.fpr, p.tpr).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads segment's confidence CSV back into one score per event: the
/// highest per-cluster confidence.
fn confidence_scores(path: &Path, n_events: usize) -> Result<Vec<f64>, CliError> {
    let reader = BufReader::new(
        File::open(path).map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?,
    );
    let mut scores = vec![f64::NEG_INFINITY; n_events];
    for (ln, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        if ln == 0 || line.trim().is_empty() {
            continue;
        }
        let bad_row = |detail: String| {
            CliError::Usage(format!("{} line {}: {detail}", path.display(), ln + 1))
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad_row(format!("expected 5 fields, found {}", fields.len())));
        }
        let index: usize = fields[0]
            .trim()
            .parse()
            .map_err(|e| bad_row(format!("bad index: {e}")))?;
        let confidence: f64 = fields[4]
            .trim()
            .parse()
            .map_err(|e| bad_row(format!("bad confidence: {e}")))?;
        if index >= n_events {
            return Err(bad_row(format!(
                "index {index} out of range for {n_events} events"
            )));
        }
        scores[index] = scores[index].max(confidence);
    }
    if let Some(missing) = scores.iter().position(|s| *s == f64::NEG_INFINITY) {
        return Err(CliError::Usage(format!(
            "{}: no confidence rows for event {missing}",
            path.display()
        )));
    }
    Ok(scores)
}
