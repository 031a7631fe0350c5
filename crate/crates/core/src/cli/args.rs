use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::colorimetry::CorrectionMode;
use crate::error::{Error, Result};
use crate::optimizer::AscentConfig;

#[derive(Debug, Parser)]
#[command(name = "vora-filter", version, about = "Design camera filters that maximize the Vora-Value")]
pub struct Cli {
    /// key=value settings file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum CommandKind {
    Optimize,
    Evaluate,
    Sweep,
    Convergence,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for a filter and write its curve, trace and summary.
    Optimize(RunArgs),
    /// Score a filter (or the bare camera) with the ΔE experiment.
    Evaluate(RunArgs),
    /// Native, Luther and Vora-Value scores for every camera in a database.
    Sweep(RunArgs),
    /// Vora-Value and mean ΔE along the iterations of one ascent run.
    Convergence(RunArgs),
}

impl Command {
    pub fn kind(&self) -> CommandKind {
        match self {
            Command::Optimize(_) => CommandKind::Optimize,
            Command::Evaluate(_) => CommandKind::Evaluate,
            Command::Sweep(_) => CommandKind::Sweep,
            Command::Convergence(_) => CommandKind::Convergence,
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Optimize(a) | Command::Evaluate(a) | Command::Sweep(a) | Command::Convergence(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vora,
    Luther,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorrectionArg {
    Global,
    PerIlluminant,
}

impl From<CorrectionArg> for CorrectionMode {
    fn from(c: CorrectionArg) -> Self {
        match c {
            CorrectionArg::Global => CorrectionMode::Global,
            CorrectionArg::PerIlluminant => CorrectionMode::PerIlluminant,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Camera label (looked up in --cameras-dir or the bundled set) or a CSV path.
    #[arg(long)]
    pub camera: Option<String>,
    /// Directory with one sensitivity CSV per camera.
    #[arg(long)]
    pub cameras_dir: Option<PathBuf>,
    /// Observer color matching functions (defaults to bundled CIE 1931 2°).
    #[arg(long)]
    pub cmf: Option<PathBuf>,
    #[arg(long)]
    pub illuminants: Option<PathBuf>,
    #[arg(long)]
    pub reflectances: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Number of cosine basis terms; enables the basis+box constrained mode.
    #[arg(long)]
    pub basis: Option<usize>,
    #[arg(long)]
    pub fmin: Option<f64>,
    #[arg(long)]
    pub fmax: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Filter CSV (`wavelength_nm,transmittance`), or `none` for the bare camera.
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long, value_enum)]
    pub correction: Option<CorrectionArg>,
    /// Worker threads for the sweep.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// CSV of starting filters, one per column; the best final run is kept.
    #[arg(long)]
    pub seeds: Option<PathBuf>,
    /// Convergence: evaluate every iteration up to this count...
    #[arg(long)]
    pub dense_iters: Option<usize>,
    /// ...then every `stride`-th one.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Fully resolved settings of one run; serialized into the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub camera: Option<String>,
    pub cameras_dir: Option<PathBuf>,
    pub cmf: Option<PathBuf>,
    pub illuminants: Option<PathBuf>,
    pub reflectances: Option<PathBuf>,
    pub method: Method,
    pub basis: Option<usize>,
    pub fmin: f64,
    pub fmax: f64,
    pub ascent: AscentConfig,
    pub filter: Option<String>,
    pub correction: CorrectionMode,
    pub jobs: Option<usize>,
    pub seeds: Option<PathBuf>,
    pub dense_iters: usize,
    pub stride: usize,
    pub out: PathBuf,
}

pub const DEFAULT_DENSE_ITERS: usize = 200;
pub const DEFAULT_STRIDE: usize = 10;

/// Parses `key=value` lines; `#` starts a comment. Keys use flag spelling with or without dashes.
pub fn parse_config(text: &str, source: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: source.to_path_buf(),
                line: i + 1,
                message: format!("expected key=value, got `{line}`"),
            });
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

pub fn load_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_config(&text, path)
}

struct Layer<'a> {
    config: &'a BTreeMap<String, String>,
}

impl Layer<'_> {
    fn get<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.config.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::InvalidArgument(format!("config key `{key}` has invalid value `{v}`"))),
        }
    }

    fn known(&self) -> Result<()> {
        const KEYS: &[&str] = &[
            "camera",
            "cameras-dir",
            "cmf",
            "illuminants",
            "reflectances",
            "method",
            "basis",
            "fmin",
            "fmax",
            "eta",
            "max-iters",
            "filter",
            "correction",
            "jobs",
            "seeds",
            "dense-iters",
            "stride",
            "out",
        ];
        match self.config.keys().find(|k| !KEYS.contains(&k.as_str())) {
            Some(k) => Err(Error::InvalidArgument(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }
}

fn parse_method(s: &str) -> Result<Method> {
    Method::from_str(s, true).map_err(|_| Error::InvalidArgument(format!("unknown method `{s}`")))
}

fn parse_correction(s: &str) -> Result<CorrectionMode> {
    s.parse()
}

impl Settings {
    pub fn resolve(args: &RunArgs, kind: CommandKind, config: &BTreeMap<String, String>) -> Result<Self> {
        let layer = Layer { config };
        layer.known()?;
        let method = match args.method {
            Some(m) => m,
            None => match config.get("method") {
                Some(s) => parse_method(s)?,
                None if kind == CommandKind::Evaluate => Method::None,
                None => Method::Vora,
            },
        };
        let correction = match args.correction {
            Some(c) => c.into(),
            None => match config.get("correction") {
                Some(s) => parse_correction(s)?,
                None => CorrectionMode::Global,
            },
        };
        let defaults = AscentConfig::default();
        let ascent = AscentConfig {
            eta: layer.get(args.eta, "eta")?.unwrap_or(defaults.eta),
            max_iters: layer.get(args.max_iters, "max-iters")?.unwrap_or(defaults.max_iters),
            ..defaults
        };
        ascent.validate()?;
        let settings = Self {
            camera: layer.get(args.camera.clone(), "camera")?,
            cameras_dir: layer.get(args.cameras_dir.clone(), "cameras-dir")?,
            cmf: layer.get(args.cmf.clone(), "cmf")?,
            illuminants: layer.get(args.illuminants.clone(), "illuminants")?,
            reflectances: layer.get(args.reflectances.clone(), "reflectances")?,
            method,
            basis: layer.get(args.basis, "basis")?,
            fmin: layer.get(args.fmin, "fmin")?.unwrap_or(0.0),
            fmax: layer.get(args.fmax, "fmax")?.unwrap_or(1.0),
            ascent,
            filter: layer.get(args.filter.clone(), "filter")?,
            correction,
            jobs: layer.get(args.jobs, "jobs")?,
            seeds: layer.get(args.seeds.clone(), "seeds")?,
            dense_iters: layer.get(args.dense_iters, "dense-iters")?.unwrap_or(DEFAULT_DENSE_ITERS),
            stride: layer.get(args.stride, "stride")?.unwrap_or(DEFAULT_STRIDE),
            out: layer
                .get(args.out.clone(), "out")?
                .unwrap_or_else(|| PathBuf::from("out")),
        };
        settings.check(kind)?;
        Ok(settings)
    }

    fn check(&self, kind: CommandKind) -> Result<()> {
        if matches!(kind, CommandKind::Optimize | CommandKind::Evaluate | CommandKind::Convergence)
            && self.camera.is_none()
        {
            return Err(Error::InvalidArgument("--camera is required".into()));
        }
        if matches!(kind, CommandKind::Optimize | CommandKind::Convergence) && self.method == Method::None {
            return Err(Error::InvalidArgument("--method none cannot be optimized".into()));
        }
        if kind == CommandKind::Convergence && self.method != Method::Vora {
            return Err(Error::InvalidArgument("convergence traces need --method vora".into()));
        }
        if self.basis == Some(0) {
            return Err(Error::InvalidArgument("--basis must be at least 1".into()));
        }
        if self.basis.is_none() && (self.fmin != 0.0 || self.fmax != 1.0) {
            return Err(Error::InvalidArgument("--fmin/--fmax require --basis".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("--stride must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidArgument("--jobs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn constraint_mode(&self) -> &'static str {
        if self.basis.is_some() {
            "basis+box"
        } else {
            "unconstrained"
        }
    }
}
