//! `evseg segment`: run the progressive loop on an event file and write the
//! label sidecar, per-event confidences, iteration trace, per-cluster
//! motion-compensated images, and a color composite.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;

use evseg::events::{load_events, save_labels, EventPacket, Label};
use evseg::progressive::{run as run_pipeline, save_trace, SegmentationResult};
use evseg::render::composite_image;
use evseg::warp::accumulate_wiwe;

use crate::config::{ensure_out_dir, format_name, CommonOpts, Settings};
use crate::render::write_raster;
use crate::CliError;

#[derive(Args, Debug)]
pub struct SegmentArgs {
    /// Event file (CSV or binary).
    pub events: PathBuf,

    /// Sensor width, for CSV input without a geometry header.
    #[arg(long)]
    pub width: Option<u16>,

    /// Sensor height, for CSV input without a geometry header.
    #[arg(long)]
    pub height: Option<u16>,

    /// Largest event count segmented at once; longer files are split into
    /// consecutive batches and their label sidecars concatenated.
    #[arg(long, default_value_t = 20_000)]
    pub batch: usize,

    /// Write the composite as PNG instead of PPM.
    #[arg(long)]
    pub png: bool,

    #[command(flatten)]
    pub common: CommonOpts,
}

pub fn run(args: &SegmentArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.common)?;
    let n_clusters = settings
        .clusters
        .ok_or_else(|| CliError::Usage("--clusters is required for segment".into()))?;
    if args.batch == 0 {
        return Err(CliError::Usage("batch must be at least 1".into()));
    }
    let geometry = match (args.width, args.height) {
        (Some(w), Some(h)) => Some((w, h)),
        (None, None) => None,
        _ => {
            return Err(CliError::Usage(
                "pass both --width and --height or neither".into(),
            ))
        }
    };

    let format = settings.format_for(&args.events);
    let packet = load_events(&args.events, format, geometry)?;
    ensure_out_dir(&args.common.out)?;

    let mut batches = Vec::new();
    let mut rest = packet.clone();
    loop {
        let (head, tail) = rest.split_at_count(args.batch);
        batches.push(head);
        match tail {
            Some(t) => rest = t,
            None => break,
        }
    }

    let mut all_labels: Vec<Label> = Vec::with_capacity(packet.len());
    let mut degenerate = false;
    let mut results: Vec<(EventPacket, SegmentationResult)> = Vec::new();
    for (bi, batch) in batches.into_iter().enumerate() {
        let seed = settings.seed.wrapping_add(bi as u64);
        let result = run_pipeline(
            &batch,
            n_clusters,
            &settings.me,
            &settings.ed,
            &settings.loop_cfg,
            seed,
        )?;
        degenerate |= result.degenerate;
        all_labels.extend_from_slice(&result.labels);
        results.push((batch, result));
    }

    let out = &args.common.out;
    save_labels(&all_labels, &out.join("labels.csv"))?;
    write_confidences(&out.join("confidence.csv"), &results)?;
    for (bi, (_, result)) in results.iter().enumerate() {
        let name = if bi == 0 {
            "trace.csv".to_string()
        } else {
            format!("trace_batch{bi}.csv")
        };
        save_trace(out.join(name), &result.trace)
            .map_err(|e| CliError::Io(format!("writing trace: {e}")))?;
    }
    write_cluster_images(out, &results[0].0, &results[0].1)?;

    let composite = composite_image(&packet, &all_labels, n_clusters);
    write_raster(&composite, out, "composite", args.png)?;

    settings
        .manifest("segment", &args.common)
        .input(&args.events)
        .param("clusters", n_clusters)
        .param("batch", args.batch)
        .param("format", format_name(format))
        .param("image", if args.png { "png" } else { "ppm" })
        .write(out)?;

    if degenerate {
        return Err(CliError::Degenerate);
    }
    Ok(())
}

/// One row per event and cluster: global index, batch, cluster, association
/// probability, and denoising confidence.
fn write_confidences(
    path: &Path,
    results: &[(EventPacket, SegmentationResult)],
) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Io(format!("writing {}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(w, "index,batch,cluster,probability,confidence").map_err(io_err)?;
    let mut index = 0usize;
    for (bi, (batch, result)) in results.iter().enumerate() {
        let state = &result.state;
        for k in 0..batch.len() {
            for j in 0..state.n_clusters() {
                writeln!(
                    w,
                    "{index},{bi},{},{:.9},{:.9}",
                    j + 1,
                    state.p.row(k)[j],
                    state.c.row(k)[j]
                )
                .map_err(io_err)?;
            }
            index += 1;
        }
    }
    w.flush().map_err(io_err)
}

/// Per-cluster motion-compensated weighted event images from the first
/// batch, as PGM.
fn write_cluster_images(
    out: &Path,
    batch: &EventPacket,
    result: &SegmentationResult,
) -> Result<(), CliError> {
    let state = &result.state;
    for j in 0..state.n_clusters() {
        let image = accumulate_wiwe(batch, state.thetas[j], state.t_ref, &state.weight_column(j));
        let path = out.join(format!("wiwe_cluster{}.pgm", j + 1));
        image
            .write_pgm(&path)
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
    }
    Ok(())
}
