//! Run configuration: built-in defaults, then an optional flat TOML config
//! file, then command-line flags, with later layers winning. Every run
//! writes the fully resolved result to `manifest.toml` in its output
//! directory, so a run can be reproduced from the manifest alone.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use evseg::denoise::{EdConfig, MappingFunction};
use evseg::events::FileFormat;
use evseg::motion::ObjectiveKind;
use evseg::sweep::SweepConfig;
use evseg::synth::SceneSpec;
use evseg::{LoopConfig, MeConfig};

use crate::CliError;

/// Flags accepted by every subcommand. Each one overrides the matching
/// config-file key; commands ignore the flags they have no use for.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonOpts {
    /// RNG seed; drives synthesis and initialization tie-breaking.
    #[arg(long)]
    pub seed: Option<u64>,

    /// TOML config file applied before flag overrides.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Event file format; by default the file extension decides.
    #[arg(long, value_parser = ["csv", "binary"])]
    pub format: Option<String>,

    /// Segmentation loop iterations.
    #[arg(long)]
    pub iterations: Option<usize>,

    /// Number of motion clusters.
    #[arg(long)]
    pub clusters: Option<usize>,

    /// Confidence mapping: tanh, linear, exp, or step.
    #[arg(long, value_parser = ["tanh", "linear", "exp", "step"])]
    pub mapping: Option<String>,

    /// Variance window side in pixels; must be odd.
    #[arg(long)]
    pub window: Option<usize>,

    /// Confidence below which an event is labeled noise.
    #[arg(long)]
    pub noise_threshold: Option<f64>,

    /// Worker threads for sweep runs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// The config file: one flat table of optional keys. Unknown keys are
/// rejected so a typo cannot silently fall back to a default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    clusters: Option<usize>,
    iterations: Option<usize>,
    noise_threshold: Option<f64>,
    stability_tol: Option<f64>,
    mapping: Option<String>,
    lambda: Option<f64>,
    objective: Option<ObjectiveKind>,
    window: Option<usize>,
    auto_window: Option<bool>,
    v_max: Option<f64>,
    grid_points: Option<usize>,
    grid_range: Option<f64>,
    fd_step: Option<f64>,
    ascent_step: Option<f64>,
    max_ascent_iters: Option<usize>,
    ascent_tol: Option<f64>,
    em_alternations: Option<usize>,
    filter_radius: Option<u16>,
    filter_dt: Option<f64>,
    format: Option<String>,
    jobs: Option<usize>,
}

/// Fully resolved settings shared by the subcommands.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    /// True when the seed came from the config file or a flag rather than
    /// the built-in default; synth uses this to decide whether a scene
    /// spec's own seed stands.
    pub seed_set: bool,
    pub clusters: Option<usize>,
    pub format: Option<FileFormat>,
    pub jobs: usize,
    pub me: MeConfig,
    pub ed: EdConfig,
    pub loop_cfg: LoopConfig,
    pub filter_radius: u16,
    pub filter_dt: f64,
}

impl Settings {
    /// Library defaults; used by synth, segment, eval, and render.
    fn pipeline_defaults() -> Self {
        let sweep = SweepConfig::default();
        Settings {
            seed: 0,
            seed_set: false,
            clusters: None,
            format: None,
            jobs: 1,
            me: sweep.me,
            ed: sweep.ed,
            loop_cfg: sweep.loop_cfg,
            filter_radius: sweep.filter_radius,
            filter_dt: sweep.filter_dt,
        }
    }

    /// Suite-tuned defaults; used by sweep.
    fn sweep_defaults() -> Self {
        let sweep = SweepConfig::standard_suite();
        Settings {
            me: sweep.me,
            ed: sweep.ed,
            loop_cfg: sweep.loop_cfg,
            filter_radius: sweep.filter_radius,
            filter_dt: sweep.filter_dt,
            ..Settings::pipeline_defaults()
        }
    }

    pub fn resolve(common: &CommonOpts) -> Result<Settings, CliError> {
        Settings::pipeline_defaults().apply(common)
    }

    pub fn resolve_sweep(common: &CommonOpts) -> Result<Settings, CliError> {
        Settings::sweep_defaults().apply(common)
    }

    fn apply(mut self, common: &CommonOpts) -> Result<Settings, CliError> {
        if let Some(path) = &common.config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
            let file: FileConfig = toml::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
            self.apply_file(&file)?;
        }
        self.apply_flags(common)?;
        self.validate()?;
        Ok(self)
    }

    fn apply_file(&mut self, file: &FileConfig) -> Result<(), CliError> {
        if let Some(v) = file.seed {
            self.seed = v;
            self.seed_set = true;
        }
        if let Some(v) = file.clusters {
            self.clusters = Some(v);
        }
        if let Some(v) = file.iterations {
            self.loop_cfg.iterations = v;
        }
        if let Some(v) = file.noise_threshold {
            self.loop_cfg.noise_threshold = v;
        }
        if let Some(v) = file.stability_tol {
            self.loop_cfg.stability_tol = v;
        }
        if let Some(name) = &file.mapping {
            self.ed.mapping = parse_mapping(name)?;
        }
        if let Some(v) = file.lambda {
            self.ed.lambda_override = Some(v);
        }
        if let Some(v) = file.objective {
            self.me.objective = v;
        }
        if let Some(v) = file.window {
            self.me.sharpness.window = v;
        }
        if let Some(v) = file.auto_window {
            self.me.sharpness.auto_window = v;
        }
        if let Some(v) = file.v_max {
            self.me.v_max = v;
        }
        if let Some(v) = file.grid_points {
            self.me.grid_points = v;
        }
        if let Some(v) = file.grid_range {
            self.me.grid_range = Some(v);
        }
        if let Some(v) = file.fd_step {
            self.me.fd_step = v;
        }
        if let Some(v) = file.ascent_step {
            self.me.ascent_step = v;
        }
        if let Some(v) = file.max_ascent_iters {
            self.me.max_ascent_iters = v;
        }
        if let Some(v) = file.ascent_tol {
            self.me.ascent_tol = v;
        }
        if let Some(v) = file.em_alternations {
            self.me.em_alternations = v;
        }
        if let Some(v) = file.filter_radius {
            self.filter_radius = v;
        }
        if let Some(v) = file.filter_dt {
            self.filter_dt = v;
        }
        if let Some(name) = &file.format {
            self.format = Some(parse_format(name)?);
        }
        if let Some(v) = file.jobs {
            self.jobs = v;
        }
        Ok(())
    }

    fn apply_flags(&mut self, common: &CommonOpts) -> Result<(), CliError> {
        if let Some(v) = common.seed {
            self.seed = v;
            self.seed_set = true;
        }
        if let Some(v) = common.clusters {
            self.clusters = Some(v);
        }
        if let Some(v) = common.iterations {
            self.loop_cfg.iterations = v;
        }
        if let Some(name) = &common.mapping {
            self.ed.mapping = parse_mapping(name)?;
        }
        if let Some(v) = common.window {
            self.me.sharpness.window = v;
        }
        if let Some(v) = common.noise_threshold {
            self.loop_cfg.noise_threshold = v;
        }
        if let Some(name) = &common.format {
            self.format = Some(parse_format(name)?);
        }
        if let Some(v) = common.jobs {
            self.jobs = v;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        let usage = |msg: String| Err(CliError::Usage(msg));
        if self.me.sharpness.window % 2 == 0 || self.me.sharpness.window == 0 {
            return usage(format!(
                "window must be odd and positive, got {}",
                self.me.sharpness.window
            ));
        }
        if !(0.0..=1.0).contains(&self.loop_cfg.noise_threshold) {
            return usage(format!(
                "noise_threshold must lie in [0, 1], got {}",
                self.loop_cfg.noise_threshold
            ));
        }
        if let Some(l) = self.ed.lambda_override {
            if !(l > 0.0) {
                return usage(format!("lambda must be positive, got {l}"));
            }
        }
        if self.me.v_max <= 0.0 {
            return usage(format!("v_max must be positive, got {}", self.me.v_max));
        }
        if self.me.grid_points < 2 {
            return usage(format!(
                "grid_points must be at least 2, got {}",
                self.me.grid_points
            ));
        }
        if let Some(n) = self.clusters {
            if n == 0 {
                return usage("clusters must be at least 1".into());
            }
        }
        if self.jobs == 0 {
            return usage("jobs must be at least 1".into());
        }
        Ok(())
    }

    /// Sweep-shaped view of the settings.
    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            me: self.me.clone(),
            ed: self.ed,
            loop_cfg: self.loop_cfg,
            filter_radius: self.filter_radius,
            filter_dt: self.filter_dt,
            seed: self.seed,
        }
    }

    /// Input format for `path`: the explicit setting if any, else the
    /// extension.
    pub fn format_for(&self, path: &Path) -> FileFormat {
        self.format.unwrap_or_else(|| FileFormat::from_path(path))
    }

    /// The manifest skeleton for one run; commands add their inputs and
    /// extra parameters before writing it.
    pub fn manifest(&self, subcommand: &str, common: &CommonOpts) -> RunManifest {
        RunManifest {
            subcommand: subcommand.to_string(),
            inputs: Vec::new(),
            out_dir: common.out.display().to_string(),
            config_file: common.config.as_ref().map(|p| p.display().to_string()),
            seed: self.seed,
            params: BTreeMap::new(),
            settings: ManifestSettings {
                clusters: self.clusters,
                format: self.format.map(|f| format_name(f).to_string()),
                jobs: self.jobs,
                mapping: mapping_name(self.ed.mapping).to_string(),
                lambda: self.ed.lambda_override,
                filter_radius: self.filter_radius,
                filter_dt: self.filter_dt,
                me: self.me.clone(),
                loop_cfg: self.loop_cfg,
            },
            scenes: Vec::new(),
        }
    }
}

/// Everything needed to reproduce a run, serialized as TOML.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: Vec<String>,
    pub out_dir: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_file: Option<String>,
    pub seed: u64,
    /// Subcommand-specific parameters, e.g. batch size or image format.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
    pub settings: ManifestSettings,
    /// Resolved scene specs; only synth fills this.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub scenes: Vec<SceneSpec>,
}

/// Resolved settings as written to the manifest. Mapping and format use the
/// command-line vocabulary; the motion and loop structs serialize as-is.
#[derive(Debug, Serialize)]
pub struct ManifestSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    pub jobs: usize,
    pub mapping: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub filter_radius: u16,
    pub filter_dt: f64,
    pub me: MeConfig,
    #[serde(rename = "loop")]
    pub loop_cfg: LoopConfig,
}

impl RunManifest {
    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| CliError::Io(format!("serializing manifest: {e}")))?;
        let path = out_dir.join("manifest.toml");
        fs::write(&path, text)
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
        Ok(())
    }
}

pub fn parse_mapping(name: &str) -> Result<MappingFunction, CliError> {
    match name {
        "tanh" => Ok(MappingFunction::Tanh),
        "linear" => Ok(MappingFunction::LinearClamp),
        "exp" => Ok(MappingFunction::ExpSaturate),
        "step" => Ok(MappingFunction::HardStep),
        other => Err(CliError::Usage(format!(
            "unknown mapping '{other}'; expected tanh, linear, exp, or step"
        ))),
    }
}

pub fn mapping_name(mapping: MappingFunction) -> &'static str {
    match mapping {
        MappingFunction::Tanh => "tanh",
        MappingFunction::LinearClamp => "linear",
        MappingFunction::ExpSaturate => "exp",
        MappingFunction::HardStep => "step",
    }
}

pub fn parse_format(name: &str) -> Result<FileFormat, CliError> {
    match name {
        "csv" => Ok(FileFormat::Csv),
        "binary" => Ok(FileFormat::Binary),
        other => Err(CliError::Usage(format!(
            "unknown format '{other}'; expected csv or binary"
        ))),
    }
}

pub fn format_name(format: FileFormat) -> &'static str {
    match format {
        FileFormat::Csv => "csv",
        FileFormat::Binary => "binary",
    }
}

/// Creates the output directory if needed.
pub fn ensure_out_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> CommonOpts {
        CommonOpts {
            out: PathBuf::from("out"),
            ..CommonOpts::default()
        }
    }

    #[test]
    fn defaults_resolve_without_a_config_file() {
        let s = Settings::resolve(&opts()).unwrap();
        assert_eq!(s.seed, 0);
        assert!(!s.seed_set);
        assert_eq!(s.loop_cfg.iterations, LoopConfig::default().iterations);
        assert_eq!(s.me, MeConfig::default());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        fs::write(&path, "iterations = 3\nseed = 9\nmapping = \"exp\"\n").unwrap();
        let common = CommonOpts {
            config: Some(path),
            iterations: Some(0),
            ..opts()
        };
        let s = Settings::resolve(&common).unwrap();
        assert_eq!(s.loop_cfg.iterations, 0);
        assert_eq!(s.seed, 9);
        assert!(s.seed_set);
        assert_eq!(s.ed.mapping, MappingFunction::ExpSaturate);
    }

    #[test]
    fn unknown_config_key_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        fs::write(&path, "iteratons = 3\n").unwrap();
        let common = CommonOpts {
            config: Some(path),
            ..opts()
        };
        match Settings::resolve(&common) {
            Err(CliError::Usage(msg)) => assert!(msg.contains("iteratons")),
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn even_window_is_rejected() {
        let common = CommonOpts {
            window: Some(4),
            ..opts()
        };
        assert!(matches!(
            Settings::resolve(&common),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn manifest_round_trips_through_toml() {
        let s = Settings::resolve(&opts()).unwrap();
        let manifest = s
            .manifest("segment", &opts())
            .input(Path::new("events.csv"))
            .param("batch", 20000);
        let text = toml::to_string_pretty(&manifest).unwrap();
        let value: toml::Table = toml::from_str(&text).unwrap();
        assert_eq!(
            value["subcommand"].as_str(),
            Some("segment"),
            "manifest text:\n{text}"
        );
        assert_eq!(value["params"]["batch"].as_str(), Some("20000"));
        assert_eq!(value["settings"]["mapping"].as_str(), Some("tanh"));
        assert!(value["settings"]["me"]["v_max"].as_float().is_some());
        assert!(value["settings"]["loop"]["iterations"].as_integer().is_some());
    }
}
