//! Analysis settings: command-line flags override the config file, which
//! overrides the built-in defaults.

use crate::CliError;
use clap::Args;
use interrater::metrics::ToleranceConfig;
use interrater::stats::{BhMode, ZVariant};
use interrater::study::{AnalysisConfig, ReportFormat, SdScope};
use interrater::volume::Connectivity;
use serde::Deserialize;
use std::path::PathBuf;

#[derive(Args, Debug, Clone, Default)]
pub struct AnalysisFlags {
    /// Surface-Dice tolerance in mm [default: 1.0].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Voxel adjacency for lesion instances: 6, 18 or 26 [default: 26].
    #[arg(long)]
    pub connectivity: Option<Connectivity>,
    /// Benjamini-Hochberg form: paper (per-rank m·p/i) or monotone [default: paper].
    #[arg(long)]
    pub bh_mode: Option<BhMode>,
    /// Two-proportion z-test standard error: pooled or unpooled [default: pooled].
    #[arg(long)]
    pub z_variant: Option<ZVariant>,
    /// SD behind the equivalence bounds: pooled or per_group [default: pooled].
    #[arg(long)]
    pub tost_sd: Option<SdScope>,
    /// Report formats, comma separated: json, csv, md [default: all].
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<ReportFormat>>,
    /// Worker threads [default: available parallelism]. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// JSON file with any of: tau, connectivity, bh_mode, z_variant,
    /// tost_sd_scope, tost_fraction, formats, threads.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    tau: Option<f64>,
    connectivity: Option<serde_json::Value>,
    bh_mode: Option<String>,
    z_variant: Option<String>,
    tost_sd_scope: Option<String>,
    tost_fraction: Option<f64>,
    formats: Option<Vec<String>>,
    threads: Option<usize>,
}

fn parse<T: std::str::FromStr<Err = String>>(field: &str, v: Option<&str>) -> Result<Option<T>, CliError> {
    v.map(|s| s.parse().map_err(|e| CliError::validation(format!("config field {field}: {e}"))))
        .transpose()
}

pub struct ResolvedConfig {
    pub analysis: AnalysisConfig,
    pub formats: Vec<ReportFormat>,
    pub threads: Option<usize>,
}

impl ResolvedConfig {
    pub fn resolve(flags: &AnalysisFlags) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?;
                serde_json::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        let file_conn = match &file.connectivity {
            None => None,
            Some(serde_json::Value::Number(n)) => parse("connectivity", Some(&n.to_string()))?,
            Some(serde_json::Value::String(s)) => parse("connectivity", Some(s))?,
            Some(other) => return Err(CliError::validation(format!("config field connectivity: unexpected {other}"))),
        };
        let file_formats = match &file.formats {
            None => None,
            Some(list) => Some(
                list.iter()
                    .map(|s| parse::<ReportFormat>("formats", Some(s)).map(Option::unwrap))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };

        let defaults = AnalysisConfig::default();
        let tau = flags.tau.or(file.tau).unwrap_or(defaults.tolerance.tau_mm);
        let tolerance = ToleranceConfig::new(tau).map_err(|e| CliError::validation(e.to_string()))?;
        let tost_fraction = file.tost_fraction.unwrap_or(defaults.tost_fraction);
        if !(tost_fraction.is_finite() && tost_fraction > 0.0) {
            return Err(CliError::validation(format!("tost_fraction must be positive, got {tost_fraction}")));
        }
        let analysis = AnalysisConfig {
            tolerance,
            connectivity: flags.connectivity.or(file_conn).unwrap_or(defaults.connectivity),
            bh_mode: flags
                .bh_mode
                .or(parse("bh_mode", file.bh_mode.as_deref())?)
                .unwrap_or(defaults.bh_mode),
            z_variant: flags
                .z_variant
                .or(parse("z_variant", file.z_variant.as_deref())?)
                .unwrap_or(defaults.z_variant),
            tost_sd_scope: flags
                .tost_sd
                .or(parse("tost_sd_scope", file.tost_sd_scope.as_deref())?)
                .unwrap_or(defaults.tost_sd_scope),
            tost_fraction,
        };
        let formats = flags
            .formats
            .clone()
            .or(file_formats)
            .unwrap_or_else(|| ReportFormat::ALL.to_vec());
        if formats.is_empty() {
            return Err(CliError::validation("at least one report format is required"));
        }
        let threads = flags.threads.or(file.threads);
        if threads == Some(0) {
            return Err(CliError::validation("--threads must be at least 1"));
        }
        Ok(Self {
            analysis,
            formats,
            threads,
        })
    }

    /// Runs `f` on a pool of the configured size (the global pool otherwise).
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
        match self.threads {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
}
