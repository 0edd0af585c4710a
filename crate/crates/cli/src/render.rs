//! `evseg render`: turn an event file plus a label sidecar into the color
//! composite image (one hue per cluster, noise gray, background black).

use std::path::{Path, PathBuf};

use clap::Args;

use evseg::events::{load_events, load_labels, Label};
use evseg::render::{composite_image, RgbRaster};

use crate::config::{ensure_out_dir, format_name, CommonOpts, Settings};
use crate::CliError;

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Event file (CSV or binary).
    pub events: PathBuf,

    /// Label sidecar aligned with the event file.
    pub labels: PathBuf,

    /// Sensor width, for CSV input without a geometry header.
    #[arg(long)]
    pub width: Option<u16>,

    /// Sensor height, for CSV input without a geometry header.
    #[arg(long)]
    pub height: Option<u16>,

    /// Write PNG instead of PPM.
    #[arg(long)]
    pub png: bool,

    #[command(flatten)]
    pub common: CommonOpts,
}

pub fn run(args: &RenderArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.common)?;
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
    let labels = load_labels(&args.labels)?;
    if labels.len() != packet.len() {
        return Err(CliError::Usage(format!(
            "{} labels for {} events",
            labels.len(),
            packet.len()
        )));
    }

    let max_id = labels
        .iter()
        .filter_map(|l| match l {
            Label::Object(id) => Some(*id),
            Label::Noise => None,
        })
        .max()
        .unwrap_or(0);
    let n_clusters = match settings.clusters {
        Some(n) => {
            if (max_id as usize) > n {
                return Err(CliError::Usage(format!(
                    "labels reach object {max_id} but --clusters is {n}"
                )));
            }
            n
        }
        None => max_id as usize,
    };

    ensure_out_dir(&args.common.out)?;
    let raster = composite_image(&packet, &labels, n_clusters);
    write_raster(&raster, &args.common.out, "composite", args.png)?;

    settings
        .manifest("render", &args.common)
        .input(&args.events)
        .input(&args.labels)
        .param("clusters", n_clusters)
        .param("format", format_name(format))
        .param("image", if args.png { "png" } else { "ppm" })
        .write(&args.common.out)
}

/// Writes `stem.ppm`, or `stem.png` when requested.
pub fn write_raster(
    raster: &RgbRaster,
    out_dir: &Path,
    stem: &str,
    png: bool,
) -> Result<(), CliError> {
    if png {
        let path = out_dir.join(format!("{stem}.png"));
        let buffer = image::RgbImage::from_raw(
            raster.width() as u32,
            raster.height() as u32,
            raster.to_bytes(),
        )
        .expect("raster buffer length matches its dimensions");
        buffer
            .save(&path)
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
    } else {
        let path = out_dir.join(format!("{stem}.ppm"));
        raster
            .write_ppm(&path)
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
    }
}
