//! `evseg synth`: generate labeled synthetic sequences from a scene spec or
//! the built-in standard suite.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use evseg::events::{save_events, save_labels, FileFormat, LabeledEvents};
use evseg::synth::{generate_sequence, standard_suite_specs, SceneSpec};

use crate::config::{ensure_out_dir, format_name, CommonOpts, Settings};
use crate::CliError;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scene spec TOML file; omit when using --suite.
    #[arg(required_unless_present = "suite", conflicts_with = "suite")]
    pub spec: Option<PathBuf>,

    /// Generate the 20-sequence standard suite (4 scenes x 5 noise levels).
    #[arg(long)]
    pub suite: bool,

    #[command(flatten)]
    pub common: CommonOpts,
}

pub fn run(args: &SynthArgs) -> Result<(), CliError> {
    let settings = Settings::resolve(&args.common)?;
    ensure_out_dir(&args.common.out)?;
    let format = settings.format.unwrap_or(FileFormat::Csv);

    let specs = if args.suite {
        standard_suite_specs(settings.seed)
    } else {
        let path = args.spec.as_ref().expect("clap enforces spec xor suite");
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        let mut spec: SceneSpec = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("scene spec {}: {e}", path.display())))?;
        if settings.seed_set {
            spec.seed = settings.seed;
        }
        vec![spec]
    };

    for spec in &specs {
        let labeled = generate_sequence(spec)?;
        write_sequence(&args.common.out, &spec.name, &labeled, format)?;
        log::info!(
            "{}: {} events, {} noise",
            spec.name,
            labeled.packet.len(),
            labeled.noise_count()
        );
    }

    let mut manifest = settings
        .manifest("synth", &args.common)
        .param("suite", args.suite)
        .param("format", format_name(format));
    if let Some(path) = &args.spec {
        manifest = manifest.input(path);
    }
    manifest.scenes = specs;
    manifest.write(&args.common.out)
}

/// Writes `name.<ext>` plus the `name.labels.csv` sidecar.
fn write_sequence(
    out: &Path,
    name: &str,
    labeled: &LabeledEvents,
    format: FileFormat,
) -> Result<(), CliError> {
    let ext = match format {
        FileFormat::Csv => "csv",
        FileFormat::Binary => "evs",
    };
    save_events(&labeled.packet, &out.join(format!("{name}.{ext}")), format)?;
    save_labels(&labeled.labels, &out.join(format!("{name}.labels.csv")))?;
    Ok(())
}
