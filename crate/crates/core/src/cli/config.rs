//! Run configuration.
//!
//! Settings are flat `key = value` pairs. They are resolved in order from
//! built-in defaults, an optional config file, environment variables named
//! `TEMPORAL_RECON_<KEY>` (key upper-cased), and command-line flags; later
//! sources win. Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};

use crate::cvopt::ConstraintRegime;
use crate::error::{Error, Result};
use crate::hierarchy::HierarchySpec;
use crate::reconcile::Method;
use crate::sampling::Scheme;
use crate::scoring::Units;
use crate::simkit::SyntheticScenario;

use super::ingest::parse_timestamp;

pub const ENV_PREFIX: &str = "TEMPORAL_RECON_";

/// Every recognised key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("frequencies", "24,12,8,6,4,3,2,1"),
    ("data", ""),
    ("synthetic", "false"),
    ("phi", "0.7"),
    ("sigma", "1.0"),
    ("mu", "1.5"),
    ("clip_at_zero", "false"),
    ("start", "2006-01-01T00:00:00Z"),
    ("period_minutes", "60"),
    ("train_cycles", "60"),
    ("val_cycles", "30"),
    ("test_cycles", "30"),
    ("train_end", ""),
    ("val_end", ""),
    ("samples", "1000"),
    ("schemes", "stacked,ranked,permuted"),
    ("methods", "bu,ba,ga,la,wls,cv"),
    ("cv_regimes", "simplex"),
    ("cv_random_starts", "2"),
    ("cv_max_iterations", "2000"),
    ("seed", "42"),
    ("out", "out"),
    ("coherence_tol", "1e-9"),
    ("per_origin", "true"),
    ("report_units", "common"),
];

/// Raw settings, kept for the run manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            values: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        if !self.values.contains_key(&key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key, value.into().trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        self.merge_text(&text)
    }

    pub fn merge_env<I>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (name, value) in vars {
            if let Some(key) = name.strip_prefix(ENV_PREFIX) {
                self.set(&key.to_ascii_lowercase(), value)
                    .map_err(|e| Error::Config(format!("{name}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// A reconciliation method as run by the experiment driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSpec {
    Fixed(Method),
    Wls,
    /// Cross-validated level weights under a constraint regime.
    CvLevel(ConstraintRegime),
    /// Cross-validated node weights, unconstrained.
    CvFull,
}

impl MethodSpec {
    pub fn label(&self) -> String {
        match self {
            MethodSpec::Fixed(m) => m.name().to_string(),
            MethodSpec::Wls => "WLS".to_string(),
            MethodSpec::CvLevel(r) => format!("CVR-{r}"),
            MethodSpec::CvFull => "CV-free".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic {
        phi: f64,
        sigma: f64,
        mu: f64,
        clip_at_zero: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Split {
    Cycles {
        train: usize,
        val: usize,
        test: usize,
    },
    /// Exclusive end timestamps of the training and validation periods; the
    /// test period runs to the end of the data.
    Timestamps {
        train_end: DateTime<Utc>,
        val_end: DateTime<Utc>,
    },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub hierarchy: HierarchySpec,
    pub source: DataSource,
    pub start: DateTime<Utc>,
    pub period: Duration,
    pub split: Split,
    pub samples: usize,
    pub schemes: Vec<Scheme>,
    pub methods: Vec<MethodSpec>,
    pub seed: u64,
    pub out: PathBuf,
    pub coherence_tol: f64,
    pub cv_random_starts: usize,
    pub cv_max_iterations: usize,
    pub per_origin: bool,
    pub report_units: Units,
    pub settings: Settings,
}

fn parse<T: std::str::FromStr>(settings: &Settings, key: &str) -> Result<T> {
    let raw = settings.get(key);
    raw.parse()
        .map_err(|_| Error::Config(format!("invalid value for {key}: `{raw}`")))
}

fn parse_bool(settings: &Settings, key: &str) -> Result<bool> {
    match settings.get(key).to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!(
            "invalid boolean for {key}: `{other}`"
        ))),
    }
}

fn list(settings: &Settings, key: &str) -> Vec<String> {
    settings
        .get(key)
        .split(',')
        .map(|s| s.trim().to_ascii_lowercase())
        .filter(|s| !s.is_empty())
        .collect()
}

impl RunConfig {
    pub fn from_settings(settings: Settings) -> Result<Self> {
        let freqs = list(&settings, "frequencies")
            .iter()
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::Config(format!("invalid frequency `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let hierarchy = HierarchySpec::new(&freqs)?;

        let data = settings.get("data");
        let source = if parse_bool(&settings, "synthetic")? || data.is_empty() {
            DataSource::Synthetic {
                phi: parse(&settings, "phi")?,
                sigma: parse(&settings, "sigma")?,
                mu: parse(&settings, "mu")?,
                clip_at_zero: parse_bool(&settings, "clip_at_zero")?,
            }
        } else {
            DataSource::Csv(PathBuf::from(data))
        };

        let start = parse_timestamp(settings.get("start"))
            .map_err(|e| Error::Config(format!("start: {e}")))?;
        let minutes: i64 = parse(&settings, "period_minutes")?;
        if minutes <= 0 {
            return Err(Error::Config("period_minutes must be positive".into()));
        }

        let split = match (settings.get("train_end"), settings.get("val_end")) {
            ("", "") => {
                let train = parse(&settings, "train_cycles")?;
                let val = parse(&settings, "val_cycles")?;
                let test = parse(&settings, "test_cycles")?;
                if train == 0 || val == 0 || test == 0 {
                    return Err(Error::Config(
                        "train, validation and test periods must each cover at least one cycle"
                            .into(),
                    ));
                }
                Split::Cycles { train, val, test }
            }
            ("", _) | (_, "") => {
                return Err(Error::Config(
                    "train_end and val_end must be given together".into(),
                ))
            }
            (train_end, val_end) => {
                let train_end = parse_timestamp(train_end)
                    .map_err(|e| Error::Config(format!("train_end: {e}")))?;
                let val_end =
                    parse_timestamp(val_end).map_err(|e| Error::Config(format!("val_end: {e}")))?;
                if val_end <= train_end {
                    return Err(Error::Config("val_end must come after train_end".into()));
                }
                Split::Timestamps { train_end, val_end }
            }
        };

        let samples: usize = parse(&settings, "samples")?;
        if samples < 2 {
            return Err(Error::Config("samples must be at least 2".into()));
        }

        let schemes = list(&settings, "schemes")
            .iter()
            .map(|s| Scheme::parse(s).ok_or_else(|| Error::Config(format!("unknown scheme `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        if schemes.is_empty() {
            return Err(Error::Config("no sampling schemes selected".into()));
        }

        let regimes = list(&settings, "cv_regimes")
            .iter()
            .map(|s| {
                ConstraintRegime::parse(s)
                    .ok_or_else(|| Error::Config(format!("unknown cv regime `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut methods = Vec::new();
        for token in list(&settings, "methods") {
            match token.as_str() {
                "bu" => methods.push(MethodSpec::Fixed(Method::BottomUp)),
                "ba" => methods.push(MethodSpec::Fixed(Method::BottomAverage)),
                "ga" => methods.push(MethodSpec::Fixed(Method::GlobalAverage)),
                "la" => methods.push(MethodSpec::Fixed(Method::LinealAverage)),
                "wls" => methods.push(MethodSpec::Wls),
                "cv" | "cvr" => {
                    if regimes.is_empty() {
                        return Err(Error::Config(
                            "method cv needs at least one cv regime".into(),
                        ));
                    }
                    methods.extend(regimes.iter().map(|&r| MethodSpec::CvLevel(r)));
                }
                "cvfull" => methods.push(MethodSpec::CvFull),
                other => return Err(Error::Config(format!("unknown method `{other}`"))),
            }
        }
        if methods.is_empty() {
            return Err(Error::Config("no reconciliation methods selected".into()));
        }

        let coherence_tol: f64 = parse(&settings, "coherence_tol")?;
        if coherence_tol.is_nan() || coherence_tol < 0.0 {
            return Err(Error::Config("coherence_tol must be nonnegative".into()));
        }

        Ok(Self {
            hierarchy,
            source,
            start,
            period: Duration::minutes(minutes),
            split,
            samples,
            schemes,
            methods,
            seed: parse(&settings, "seed")?,
            out: PathBuf::from(settings.get("out")),
            coherence_tol,
            cv_random_starts: parse(&settings, "cv_random_starts")?,
            cv_max_iterations: parse(&settings, "cv_max_iterations")?,
            per_origin: parse_bool(&settings, "per_origin")?,
            report_units: Units::parse(settings.get("report_units")).ok_or_else(|| {
                Error::Config(format!(
                    "report_units must be common or native, got `{}`",
                    settings.get("report_units")
                ))
            })?,
            settings,
        })
    }

    /// Scenario for synthetic runs, or `None` for CSV input.
    pub fn scenario(&self) -> Option<SyntheticScenario> {
        match (&self.source, &self.split) {
            (
                DataSource::Synthetic {
                    phi,
                    sigma,
                    mu,
                    clip_at_zero,
                },
                Split::Cycles { train, val, test },
            ) => Some(SyntheticScenario {
                phi: *phi,
                sigma: *sigma,
                mu: *mu,
                cycle_len: self.hierarchy.cycle_len(),
                train_cycles: *train,
                val_cycles: *val,
                test_cycles: *test,
                seed: self.seed,
                clip_at_zero: *clip_at_zero,
            }),
            _ => None,
        }
    }
}
