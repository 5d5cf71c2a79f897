//! Flags, config files and their merge into one validated configuration.
//! Precedence is flags, then the config file, then defaults.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendArg {
    Double,
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiArg {
    Ones,
    Left,
    LeftPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Tsv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Tsv => "tsv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Build the counterexample weight, dump it and check its invariants.
    Build,
    /// Testing constants and the bounded embedding sum.
    Carleson,
    /// Per-level ledger of the divergent embedding sum.
    Blowup,
    /// Evaluate the three maximal operators on the truncated weight.
    Maxop,
    /// Scan the perturbed weights over levels and the s-grid.
    Wns,
    /// Run the acceptance suite.
    Accept,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Build => "build",
            Command::Carleson => "carleson",
            Command::Blowup => "blowup",
            Command::Maxop => "maxop",
            Command::Wns => "wns",
            Command::Accept => "accept",
        }
    }

    fn default_depth(self) -> u32 {
        match self {
            Command::Build => 12,
            Command::Carleson => 20,
            Command::Blowup => 40,
            Command::Maxop => 8,
            Command::Wns => 12,
            Command::Accept => 20,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mwcb", version, about = "Numerical lab for the matrix-weighted convex-body maximal operator")]
pub struct Cli {
    /// TOML file with any of the flag values below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub depth: Option<u32>,
    /// Mantissa bits of the extended backend.
    #[arg(long, global = true)]
    pub bits: Option<u32>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendArg>,
    #[arg(long, global = true, value_enum)]
    pub phi: Option<PhiArg>,
    /// `a:b:steps`, the grid `2^a ..= 2^b`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub s_grid: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub epsilon: Option<f64>,
    pub depth: Option<u32>,
    pub bits: Option<u32>,
    pub backend: Option<BackendArg>,
    pub phi: Option<PhiArg>,
    pub s_grid: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SGrid {
    pub a: f64,
    pub b: f64,
    pub steps: usize,
}

impl SGrid {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("s-grid `{s}` is not of the form a:b:steps"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if !a.is_finite() || !b.is_finite() || a > b || steps == 0 || (steps == 1 && a != b) {
            return Err(bad());
        }
        Ok(SGrid { a, b, steps })
    }

    pub fn values(&self) -> Vec<f64> {
        mwcb_core::carleson::wns::geometric_grid(self.a, self.b, self.steps)
    }
}

/// The resolved configuration, echoed into every report.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub epsilon: f64,
    pub depth: u32,
    pub backend: BackendArg,
    pub bits: u32,
    pub phi: PhiArg,
    pub s_grid: String,
    pub out: PathBuf,
    pub format: Format,
    pub seed: u64,
    #[serde(skip)]
    pub grid: SGrid,
}

pub const DEFAULT_SEED: u64 = 20_240_601;

impl ExperimentConfig {
    pub fn resolve(cli: &Cli) -> Result<Self, CliError> {
        let file = match &cli.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let backend = cli.backend.or(file.backend).unwrap_or(BackendArg::Double);
        let default_bits = match backend {
            BackendArg::Double => 53,
            BackendArg::Extended => 192,
        };
        let s_grid = cli.s_grid.clone().or(file.s_grid).unwrap_or_else(|| "-6:6:13".to_string());
        let cfg = ExperimentConfig {
            command: cli.command,
            epsilon: cli.epsilon.or(file.epsilon).unwrap_or(0.25),
            depth: cli.depth.or(file.depth).unwrap_or(cli.command.default_depth()),
            backend,
            bits: cli.bits.or(file.bits).unwrap_or(default_bits),
            phi: cli.phi.or(file.phi).unwrap_or(PhiArg::Ones),
            grid: SGrid::parse(&s_grid)?,
            s_grid,
            out: cli.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("lab-out")),
            format: cli.format.or(file.format).unwrap_or(Format::Csv),
            seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.epsilon > 0.0 && self.epsilon <= 0.5) {
            return Err(CliError::Config(format!("epsilon must lie in (0, 0.5], got {}", self.epsilon)));
        }
        if self.depth > 62 {
            return Err(CliError::Config(format!("depth must be at most 62, got {}", self.depth)));
        }
        if self.bits < 53 {
            return Err(CliError::Config(format!("bits must be at least 53, got {}", self.bits)));
        }
        if self.backend == BackendArg::Double && self.bits != 53 {
            return Err(CliError::Config(format!("the double backend has 53 bits, got --bits {}", self.bits)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("mwcb").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn defaults_per_command() {
        let c = ExperimentConfig::resolve(&cli(&["blowup"])).unwrap();
        assert_eq!((c.epsilon, c.depth, c.bits), (0.25, 40, 53));
        assert_eq!(c.grid, SGrid { a: -6.0, b: 6.0, steps: 13 });
        let c = ExperimentConfig::resolve(&cli(&["--backend", "extended", "wns"])).unwrap();
        assert_eq!(c.bits, 192);
    }

    #[test]
    fn flags_after_the_subcommand() {
        let c = ExperimentConfig::resolve(&cli(&["build", "--depth", "5", "--phi", "left-plus"])).unwrap();
        assert_eq!(c.depth, 5);
        assert_eq!(c.phi, PhiArg::LeftPlus);
    }

    #[test]
    fn bounds() {
        for args in [
            &["--epsilon", "0.9", "build"][..],
            &["--epsilon", "0", "build"],
            &["--depth", "63", "build"],
            &["--backend", "extended", "--bits", "40", "build"],
            &["--bits", "100", "build"],
            &["--s-grid", "1:0:3", "wns"],
            &["--s-grid", "0:1", "wns"],
        ] {
            assert!(matches!(ExperimentConfig::resolve(&cli(args)), Err(CliError::Config(_))), "{args:?}");
        }
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lab.toml");
        std::fs::write(&p, "epsilon = 0.125\ndepth = 7\ns-grid = \"0:2:3\"\nformat = \"tsv\"\n").unwrap();
        let c = ExperimentConfig::resolve(&cli(&["--config", p.to_str().unwrap(), "--depth", "9", "wns"])).unwrap();
        assert_eq!((c.epsilon, c.depth, c.format), (0.125, 9, Format::Tsv));
        assert_eq!(c.grid.values(), vec![1.0, 2.0, 4.0]);
        std::fs::write(&p, "epsilom = 0.1\n").unwrap();
        assert!(matches!(
            ExperimentConfig::resolve(&cli(&["--config", p.to_str().unwrap(), "build"])),
            Err(CliError::Config(_))
        ));
    }
}
