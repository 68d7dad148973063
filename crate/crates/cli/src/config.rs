//! Command options shared by the flag parser and the TOML config file.
//!
//! Every field is optional so that a flag can override a config entry, and
//! an absent pair falls back to the library default.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Accepts `1000000`, `1e6` or `4.5e5`.
pub fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a count"))?;
    if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as usize)
    } else {
        Err(format!("'{s}' is not a nonnegative integer"))
    }
}

/// Config-file counts may be integers, integral floats (`4e6`) or strings.
fn count<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Float(f64),
        Text(String),
    }
    let text = match Raw::deserialize(d)? {
        Raw::Int(v) => return Ok(Some(v as usize)),
        Raw::Float(v) => v.to_string(),
        Raw::Text(t) => t,
    };
    parse_count(&text).map(Some).map_err(serde::de::Error::custom)
}

/// Merges `self` (flags) over `other` (config), field by field.
pub trait Overlay {
    fn overlay(self, other: Self) -> Self;
}

macro_rules! overlay {
    ($t:ty { $($f:ident),* }) => {
        impl Overlay for $t {
            fn overlay(self, other: Self) -> Self {
                Self { $($f: self.$f.or(other.$f)),* }
            }
        }
    };
}

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TubeArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// One radius or a comma-separated list.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub eps: Option<Vec<f64>>,
    /// Monte Carlo cross-check with this many samples.
    #[arg(long, value_parser = parse_count)]
    #[serde(default, deserialize_with = "count")]
    pub mc: Option<usize>,
}
overlay!(TubeArgs { n, k, eps, mc });

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EqualizeArgs {
    /// Tree depth; the partition has 2^i cells.
    #[arg(long)]
    pub i: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Map spec: proj, perturbed:η[:ν], radial[:ω], const:c or expr:e1;e2.
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long, value_parser = parse_count)]
    #[serde(default, deserialize_with = "count")]
    pub coarse_samples: Option<usize>,
    #[arg(long, value_parser = parse_count)]
    #[serde(default, deserialize_with = "count")]
    pub fine_samples: Option<usize>,
    #[arg(long, value_parser = parse_count)]
    #[serde(default, deserialize_with = "count")]
    pub verify_samples: Option<usize>,
}
overlay!(EqualizeArgs { i, n, k, map, restarts, max_iterations, tolerance, coarse_samples, fine_samples, verify_samples });

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct WaistArgs {
    #[arg(long)]
    pub map: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, value_parser = parse_count)]
    #[serde(default, deserialize_with = "count")]
    pub slab_samples: Option<usize>,
    #[arg(long, value_parser = parse_count)]
    #[serde(default, deserialize_with = "count")]
    pub query_samples: Option<usize>,
    #[arg(long, value_parser = parse_count)]
    #[serde(default, deserialize_with = "count")]
    pub coarse_queries: Option<usize>,
    /// Slab half-width; picked from the budget when absent.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Grid spacing as a multiple of ε.
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[arg(long)]
    pub refine_top: Option<usize>,
    /// Slab bias per unit δ; calibrated on the projection when absent.
    #[arg(long)]
    pub bias_per_delta: Option<f64>,
}
overlay!(WaistArgs {
    map, n, k, eps, slab_samples, query_samples, coarse_queries, delta, grid_step, refine_top, bias_per_delta
});

#[derive(Args, Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CheckArgs {
    /// concavity, measure, partition or all.
    #[arg(value_parser = ["concavity", "measure", "partition", "all"])]
    pub suite: Option<String>,
}
overlay!(CheckArgs { suite });

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub tube: TubeArgs,
    #[serde(default)]
    pub equalize: EqualizeArgs,
    #[serde(default)]
    pub waist: WaistArgs,
    #[serde(default)]
    pub check: CheckArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("bad config {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_accept_scientific_notation() {
        assert_eq!(parse_count("1e6"), Ok(1_000_000));
        assert_eq!(parse_count("1500"), Ok(1500));
        assert!(parse_count("2.5").is_err());
        assert!(parse_count("-3").is_err());
    }

    #[test]
    fn flags_win_over_config() {
        let flags = EqualizeArgs { i: Some(2), ..Default::default() };
        let file = EqualizeArgs { i: Some(1), n: Some(3), ..Default::default() };
        let merged = flags.overlay(file);
        assert_eq!((merged.i, merged.n, merged.k), (Some(2), Some(3), None));
    }

    #[test]
    fn config_sections_parse() {
        let cfg: FileConfig = toml::from_str(
            "seed = 7\n[waist]\nmap = \"radial:1.5\"\neps = 0.5\nslab-samples = 1000\nquery-samples = 2e4\n[check]\nsuite = \"partition\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.waist.map.as_deref(), Some("radial:1.5"));
        assert_eq!(cfg.waist.slab_samples, Some(1000));
        assert_eq!(cfg.waist.query_samples, Some(20_000));
        assert_eq!(cfg.check.suite.as_deref(), Some("partition"));
        assert!(toml::from_str::<FileConfig>("[tube]\nbogus = 1\n").is_err());
    }
}
