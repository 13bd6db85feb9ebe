//! Run configuration: a flat TOML document whose keys can each be
//! overridden by a same-named command-line flag.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{ForecastMode, GROWTH_QUANTILES, IRF_QUANTILES};
use crate::benchmarks::EvalPlan;
use crate::data::{Dataset, Quarter};
use crate::error::{Error, Result};
use crate::gibbs::{MixtureTable, SamplerOptions};
use crate::io::ColumnMap;
use crate::model::{McmcConfig, ModelConfig, DEFAULT_SINGULAR_COND};
use crate::priors::PriorOverrides;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    #[default]
    Constrained,
    Unconstrained,
    ConstantVar,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Constrained => "constrained",
            RunMode::Unconstrained => "unconstrained",
            RunMode::ConstantVar => "constant-var",
        })
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constrained" => Ok(RunMode::Constrained),
            "unconstrained" => Ok(RunMode::Unconstrained),
            "constant-var" => Ok(RunMode::ConstantVar),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// Every tunable of a run. Origins and dates are given as `YYYY-Qn` or as
/// log-difference indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub date_column: String,
    pub endo: Vec<String>,
    pub exo: Option<String>,
    pub output: PathBuf,
    pub chain: Option<PathBuf>,
    pub mode: RunMode,

    pub lags: usize,
    pub t0: usize,
    pub burn_in: usize,
    pub draws: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    pub workers: usize,

    pub u0: Vec<f64>,
    pub kappa_q: f64,
    pub kappa_q_tilde: f64,
    pub kappa_g: f64,
    pub kappa_w: f64,
    pub inflation: f64,

    pub vol_offset: f64,
    pub singular_cond: f64,
    pub max_redraws: usize,
    pub divergence_window: usize,
    pub divergence_fraction: f64,

    pub forecast_mode: ForecastMode,
    pub origin: Option<String>,
    pub horizon: usize,
    /// Exogenous log-differences after the origin; defaults to the data.
    pub exo_path: Vec<f64>,
    pub band: Vec<f64>,

    pub first_origin: Option<String>,
    pub last_origin: Option<String>,
    pub refit: bool,

    pub shock: f64,
    pub irf_horizon: usize,
    pub irf_origins: Vec<String>,
    pub irf_quantiles: Vec<f64>,
    pub growth_origins: Vec<String>,
    pub growth_quantiles: Vec<f64>,

    pub periods: usize,
    pub drift: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let prior = PriorOverrides::default();
        let mcmc = McmcConfig::default();
        RunConfig {
            data: None,
            date_column: "date".into(),
            endo: Vec::new(),
            exo: None,
            output: PathBuf::from("out"),
            chain: None,
            mode: RunMode::Constrained,
            lags: 1,
            t0: 40,
            burn_in: mcmc.burn_in,
            draws: mcmc.draws,
            thin: mcmc.thin,
            seed: 1,
            chains: 1,
            workers: 1,
            u0: prior.u0_diag,
            kappa_q: prior.kappa_q,
            kappa_q_tilde: prior.kappa_q_tilde,
            kappa_g: prior.kappa_g,
            kappa_w: prior.kappa_w,
            inflation: prior.inflation,
            vol_offset: crate::gibbs::DEFAULT_VOL_OFFSET,
            singular_cond: DEFAULT_SINGULAR_COND,
            max_redraws: 10,
            divergence_window: 500,
            divergence_fraction: 0.1,
            forecast_mode: ForecastMode::Frozen,
            origin: None,
            horizon: 5,
            exo_path: Vec::new(),
            band: vec![0.1, 0.9],
            first_origin: None,
            last_origin: None,
            refit: false,
            shock: 0.1,
            irf_horizon: 20,
            irf_origins: Vec::new(),
            irf_quantiles: IRF_QUANTILES.to_vec(),
            growth_origins: Vec::new(),
            growth_quantiles: GROWTH_QUANTILES.to_vec(),
            periods: 156,
            drift: 0.15,
        }
    }
}

impl Serialize for ForecastMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ForecastMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

const LIST_KEYS: [&str; 8] =
    ["endo", "u0", "exo-path", "band", "irf-origins", "irf-quantiles", "growth-origins", "growth-quantiles"];

const STRING_KEYS: [&str; 13] = [
    "data",
    "date-column",
    "endo",
    "exo",
    "output",
    "chain",
    "mode",
    "forecast-mode",
    "origin",
    "first-origin",
    "last-origin",
    "irf-origins",
    "growth-origins",
];

/// Converts a flag value to TOML. Text keys stay strings; other values are
/// read as TOML literals. List keys take comma-separated items.
fn flag_value(key: &str, raw: &str) -> toml::Value {
    let item = |s: &str| -> toml::Value {
        if STRING_KEYS.contains(&key) {
            return toml::Value::String(s.to_string());
        }
        format!("v = {s}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(s.to_string()))
    };
    if LIST_KEYS.contains(&key) {
        let trimmed = raw.trim().trim_start_matches('[').trim_end_matches(']');
        toml::Value::Array(trimmed.split(',').filter(|p| !p.trim().is_empty()).map(|p| item(p.trim())).collect())
    } else {
        item(raw.trim())
    }
}

impl RunConfig {
    /// Parses a config document, then applies `(key, value)` overrides.
    pub fn load(document: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = match document {
            Some(text) => text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        for (key, raw) in overrides {
            table.insert(key.clone(), flag_value(key, raw));
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.draws == 0 {
            return Err(Error::Config("draws and thin must be positive".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be positive".into()));
        }
        if self.horizon == 0 || self.irf_horizon == 0 {
            return Err(Error::Config("horizons must be positive".into()));
        }
        for q in self.band.iter().chain(&self.irf_quantiles).chain(&self.growth_quantiles) {
            if !(0.0..=1.0).contains(q) {
                return Err(Error::Config(format!("quantile {q} outside [0, 1]")));
            }
        }
        if self.band.len() != 2 {
            return Err(Error::Config("band needs two quantiles".into()));
        }
        if !(self.shock > -1.0) {
            return Err(Error::Config("shock must exceed -1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical document, ignoring keys that name files or
    /// only affect scheduling.
    pub fn hash(&self) -> String {
        let canonical = RunConfig { data: None, output: PathBuf::new(), chain: None, workers: 0, ..self.clone() };
        sha256_hex(canonical.to_toml().as_bytes())
    }

    pub fn columns(&self) -> ColumnMap {
        ColumnMap { date: Some(self.date_column.clone()), endo: self.endo.clone(), exo: self.exo.clone() }
    }

    pub fn model(&self, n: usize) -> ModelConfig {
        ModelConfig {
            n,
            k: self.lags,
            t0: self.t0,
            constraint_enabled: self.mode != RunMode::Unconstrained,
            mcmc: McmcConfig { burn_in: self.burn_in, draws: self.draws, thin: self.thin },
            seed: self.seed,
        }
    }

    pub fn prior_overrides(&self) -> PriorOverrides {
        PriorOverrides {
            u0_diag: self.u0.clone(),
            kappa_q: self.kappa_q,
            kappa_q_tilde: self.kappa_q_tilde,
            kappa_g: self.kappa_g,
            kappa_w: self.kappa_w,
            inflation: self.inflation,
        }
    }

    pub fn sampler_options(&self) -> SamplerOptions {
        SamplerOptions {
            vol_offset: self.vol_offset,
            singular_cond: self.singular_cond,
            max_redraws: self.max_redraws,
            divergence_window: self.divergence_window,
            divergence_fraction: self.divergence_fraction,
            table: MixtureTable::ksc(),
        }
    }

    /// Evaluation plan; the window defaults to the last 20% of the sample.
    pub fn eval_plan(&self, data: &Dataset) -> Result<EvalPlan> {
        let len = data.len();
        let first = match &self.first_origin {
            Some(s) => resolve_origin(s, data)?,
            None => len - len / 5 - 1,
        };
        let last = match &self.last_origin {
            Some(s) => resolve_origin(s, data)?,
            None => len.saturating_sub(2),
        };
        if first < self.t0 + self.lags {
            return Err(Error::Config(format!("first origin {first} leaves no estimation window after t0={}", self.t0)));
        }
        Ok(EvalPlan { first_origin: first, last_origin: last, horizon: self.horizon, refit: self.refit, seed: self.seed })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Resolves an origin given as a log-difference index or as a quarter.
pub fn resolve_origin(s: &str, data: &Dataset) -> Result<usize> {
    resolve_index(s, data.len(), |q| data.obs_index(q))
}

/// Same, for a chain whose observation 0 is dated `first_date`.
pub fn resolve_index(s: &str, len: usize, index_of: impl Fn(Quarter) -> Option<usize>) -> Result<usize> {
    let idx = match s.trim().parse::<usize>() {
        Ok(i) => Some(i),
        Err(_) => {
            let q: Quarter = s.parse().map_err(Error::Config)?;
            index_of(q)
        }
    };
    match idx {
        Some(i) if i < len => Ok(i),
        _ => Err(Error::Config(format!("origin `{s}` is outside the data"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_protocol() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        assert_eq!((cfg.t0, cfg.burn_in, cfg.draws, cfg.thin), (40, 15_000, 1_500, 10));
        assert_eq!(cfg.u0, vec![0.1]);
        assert_eq!(cfg.model(2).mcmc.total_iterations(), 30_000);
        assert!(cfg.model(2).constraint_enabled);
    }

    #[test]
    fn flags_override_document() {
        let doc = "seed = 3\nburn-in = 100\nmode = \"unconstrained\"\n";
        let flags = vec![
            ("seed".to_string(), "9".to_string()),
            ("u0".to_string(), "0.2,0.3".to_string()),
            ("endo".to_string(), "er".to_string()),
            ("forecast-mode".to_string(), "walk".to_string()),
            ("data".to_string(), "x/y.csv".to_string()),
            ("origin".to_string(), "12".to_string()),
            ("irf-origins".to_string(), "2001-01-01,7".to_string()),
        ];
        let cfg = RunConfig::load(Some(doc), &flags).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.burn_in, 100);
        assert_eq!(cfg.mode, RunMode::Unconstrained);
        assert_eq!(cfg.u0, vec![0.2, 0.3]);
        assert_eq!(cfg.endo, vec!["er"]);
        assert_eq!(cfg.forecast_mode, ForecastMode::Walk);
        assert_eq!(cfg.data, Some(PathBuf::from("x/y.csv")));
        assert_eq!(cfg.origin.as_deref(), Some("12"));
        assert_eq!(cfg.irf_origins, vec!["2001-01-01", "7"]);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        for (doc, flags) in [
            ("bogus = 1", vec![]),
            ("", vec![("seed".to_string(), "abc".to_string())]),
            ("thin = 0", vec![]),
            ("mode = \"sideways\"", vec![]),
        ] {
            let err = RunConfig::load(Some(doc), &flags).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{err}");
        }
    }

    #[test]
    fn hash_ignores_paths_and_workers() {
        let a = RunConfig::default();
        let b = RunConfig { output: "elsewhere".into(), workers: 8, data: Some("d.csv".into()), ..a.clone() };
        let c = RunConfig { seed: 2, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn document_round_trips() {
        let cfg = RunConfig { seed: 5, irf_origins: vec!["2001-Q1".into()], ..RunConfig::default() };
        assert_eq!(RunConfig::load(Some(&cfg.to_toml()), &[]).unwrap(), cfg);
    }

    #[test]
    fn origins_resolve_by_index_or_date() {
        let sim = crate::simulate::simulate_dgp(
            &crate::simulate::drifting_theta_spec(50, 0.0),
            &mut crate::numkit::RngStream::new(1),
        )
        .unwrap();
        let d = &sim.dataset;
        assert_eq!(resolve_origin("12", d).unwrap(), 12);
        assert_eq!(resolve_origin(&d.obs_date(30).to_string(), d).unwrap(), 30);
        assert!(resolve_origin("1900-Q1", d).is_err());
        assert!(resolve_origin("50", d).is_err());
    }
}
