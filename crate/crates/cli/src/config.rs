//! Experiment configuration file and flag overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cv_anyons::lattice::Lattice;
use cv_anyons::protocols::{self, Engine, Params};
use serde::{Deserialize, Serialize};

/// A built-in lattice name, a path to a lattice file, or an inline lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LatticeSource {
    Name(String),
    Inline(serde_json::Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub protocol: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSource>,
    pub squeezing_db: f64,
    pub s: f64,
    pub t: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub braid: bool,
    pub engine: Engine,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        let p = Params::default();
        Self {
            protocol: "ghz".into(),
            lattice: None,
            squeezing_db: p.squeezing_db,
            s: p.s,
            t: p.t,
            n_samples: p.n_samples,
            seed: p.seed,
            braid: p.braid,
            engine: p.engine,
            output_dir: None,
        }
    }
}

/// Lattice each fixed protocol runs on.
fn fixed_lattice(protocol: &str) -> Option<Lattice> {
    match protocol {
        "ghz" => Some(Lattice::four_mode()),
        "path-independence" | "nine-mode" => Some(Lattice::nine_mode()),
        _ => None,
    }
}

pub fn canonical_protocol(name: &str) -> Option<&'static str> {
    match name {
        "ghz" => Some("ghz"),
        "path-independence" | "nine-mode" => Some("path-independence"),
        "detect" => Some("detect"),
        _ => None,
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut cfg: Config =
            serde_json::from_str(&text).map_err(|e| anyhow!("{}: schema error at line {}, column {}: {e}", path.display(), e.line(), e.column()))?;
        // lattice paths are relative to the config file
        if let Some(LatticeSource::Name(name)) = &cfg.lattice {
            if Lattice::from_name(name).is_err() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.lattice = Some(LatticeSource::Name(base.join(name).to_string_lossy().into_owned()));
            }
        }
        Ok(cfg)
    }

    pub fn params(&self) -> Params {
        Params {
            squeezing_db: self.squeezing_db,
            s: self.s,
            t: self.t,
            n_samples: self.n_samples,
            seed: self.seed,
            braid: self.braid,
            engine: self.engine,
            ..Params::default()
        }
    }

    /// The lattice this run uses, checked against the protocol.
    pub fn resolve_lattice(&self) -> Result<Lattice> {
        let protocol = canonical_protocol(&self.protocol)
            .ok_or_else(|| anyhow!("unknown protocol {:?}; expected one of {:?}", self.protocol, protocols::PROTOCOLS))?;
        let given = match &self.lattice {
            None => None,
            Some(LatticeSource::Inline(v)) => Some(Lattice::from_json(&v.to_string()).context("invalid inline lattice")?),
            Some(LatticeSource::Name(name)) => Some(match Lattice::from_name(name) {
                Ok(l) => l,
                Err(_) => {
                    let text = std::fs::read_to_string(name).with_context(|| format!("lattice {name:?} is neither built in nor a readable file"))?;
                    Lattice::from_json(&text).with_context(|| format!("invalid lattice file {name}"))?
                }
            }),
        };
        match (fixed_lattice(protocol), given) {
            (Some(fixed), Some(l)) if l != fixed => {
                bail!("protocol {protocol} runs on its own lattice; drop the lattice setting or use protocol detect")
            }
            (Some(fixed), _) => Ok(fixed),
            (None, Some(l)) => Ok(l),
            (None, None) => Ok(Lattice::four_mode()),
        }
    }
}

/// Flag values that replace the corresponding config fields.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Protocol: ghz, path-independence (nine-mode) or detect.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Built-in lattice name (see list-lattices) or a lattice JSON file.
    #[arg(long)]
    pub lattice: Option<String>,
    #[arg(long = "squeezing-db", allow_negative_numbers = true)]
    pub squeezing_db: Option<f64>,
    /// Detection phase-gate strength.
    #[arg(long = "s", allow_negative_numbers = true)]
    pub s: Option<f64>,
    /// Loop amplitude.
    #[arg(long = "t", allow_negative_numbers = true)]
    pub t: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config value and `ANYON_CV_OUTPUT_DIR`.
    #[arg(long = "output-dir")]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub engine: Option<EngineArg>,
    /// Skip the loop (detection only).
    #[arg(long = "no-braid")]
    pub no_braid: bool,
    /// Print the effective configuration as JSON instead of running.
    #[arg(long = "dump-config")]
    pub dump_config: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EngineArg {
    Gaussian,
    Exact,
    Both,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Gaussian => Engine::Gaussian,
            EngineArg::Exact => Engine::Exact,
            EngineArg::Both => Engine::Both,
        }
    }
}

impl Overrides {
    pub fn apply(&self, cfg: &mut Config) {
        if let Some(p) = &self.protocol {
            cfg.protocol = p.clone();
        }
        if let Some(l) = &self.lattice {
            cfg.lattice = Some(LatticeSource::Name(l.clone()));
        }
        if let Some(v) = self.squeezing_db {
            cfg.squeezing_db = v;
        }
        if let Some(v) = self.s {
            cfg.s = v;
        }
        if let Some(v) = self.t {
            cfg.t = v;
        }
        if let Some(v) = self.samples {
            cfg.n_samples = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = Some(v.clone());
        }
        if let Some(e) = self.engine {
            cfg.engine = e.into();
        }
        if self.no_braid {
            cfg.braid = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Everything `validate` reports for a parsed config, without running it.
pub fn diagnose(cfg: &Config) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let error = |out: &mut Vec<Diagnostic>, m: String| out.push(Diagnostic { severity: Severity::Error, message: m });
    let warn = |out: &mut Vec<Diagnostic>, m: String| out.push(Diagnostic { severity: Severity::Warning, message: m });
    for (v, name) in [(cfg.squeezing_db, "squeezing_db"), (cfg.s, "s"), (cfg.t, "t")] {
        if !v.is_finite() {
            error(&mut out, format!("{name} must be finite"));
        }
    }
    if cfg.squeezing_db < 0.0 {
        error(&mut out, format!("squeezing_db must be non-negative, got {}", cfg.squeezing_db));
    }
    let lat = match cfg.resolve_lattice() {
        Ok(l) => l,
        Err(e) => {
            error(&mut out, format!("{e:#}"));
            return out;
        }
    };
    if !out.is_empty() {
        return out;
    }
    if cfg.n_samples < 2 {
        warn(&mut out, format!("n_samples = {} gives no sampled statistics", cfg.n_samples));
    }
    if lat.n_edges() > cv_anyons::verify::MAX_SPLIT_MODES {
        warn(&mut out, format!(
            "{} modes: the inseparability check is skipped above {} modes",
            lat.n_edges(),
            cv_anyons::verify::MAX_SPLIT_MODES
        ));
    }
    let star = lat.central_star();
    let sigma = protocols::prepare_ground_via_cluster(&lat, cfg.squeezing_db, cfg.seed)
        .and_then(|st| cv_anyons::verify::form_moments(&st, &lat.star_form(star)?))
        .map(|(_, v)| v.sqrt());
    match sigma {
        Ok(sigma) => {
            let st = (cfg.s * cfg.t).abs();
            if st < 2.0 * sigma {
                warn(&mut out, format!(
                    "|s·t| = {st} is below 2σ = {:.4} of the star nullifier at {} dB; braided and unbraided clouds overlap",
                    2.0 * sigma,
                    cfg.squeezing_db
                ));
            }
        }
        Err(e) => error(&mut out, format!("cannot prepare the ground state: {e}")),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_clean() {
        assert!(diagnose(&Config::default()).is_empty());
    }

    #[test]
    fn small_signal_warns() {
        let cfg = Config { squeezing_db: 0.0, s: 0.5, t: 0.5, ..Config::default() };
        let d = diagnose(&cfg);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
    }

    #[test]
    fn fixed_protocol_conflict() {
        let cfg = Config { lattice: Some(LatticeSource::Name("nine-mode".into())), ..Config::default() };
        assert!(cfg.resolve_lattice().is_err());
        let cfg = Config { protocol: "detect".into(), ..cfg };
        assert_eq!(cfg.resolve_lattice().unwrap().n_edges(), 9);
    }

    #[test]
    fn overrides_round_trip() {
        let o = Overrides { seed: Some(5), no_braid: true, engine: Some(EngineArg::Exact), ..Overrides::default() };
        let mut cfg = Config::default();
        o.apply(&mut cfg);
        let back: Config = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(!back.braid && back.seed == 5 && back.engine == Engine::Exact);
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(serde_json::from_str::<Config>(r#"{"sqeezing_db": 3}"#).is_err());
    }
}
