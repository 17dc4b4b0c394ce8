//! Flat `key=value` settings: a config file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use pdelay_core::model::{scale, RawParams, ScaleFactors, Scaled};
use pdelay_core::{HistorySpec, Params};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Keys are stored with `-` replaced by `_`.
pub fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    /// Defaults handed out by the getters, for the echo.
    defaults: Mutex<BTreeMap<String, String>>,
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("config line {}: expected key=value", n + 1));
            };
            let key = normalize(k);
            if key.is_empty() {
                return err(format!("config line {}: empty key", n + 1));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self {
            values,
            ..Self::default()
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::parse(&text),
            Err(e) => err(format!("cannot read config {}: {e}", path.display())),
        }
    }

    /// Later values win.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(normalize(key), value.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(&normalize(key))
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(&normalize(key)).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| ConfigError(format!("invalid value for `{key}`: {v:?} ({e})"))),
        }
    }

    pub fn get_or<T: FromStr + fmt::Display>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get(key)? {
            Some(v) => Ok(v),
            None => {
                self.note_default(key, default.to_string());
                Ok(default)
            }
        }
    }

    fn note_default(&self, key: &str, value: String) {
        self.defaults
            .lock()
            .expect("settings lock")
            .insert(normalize(key), value);
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?
            .map_or_else(|| err(format!("missing required setting `{key}`")), Ok)
    }

    pub fn flag(&self, key: &str) -> Result<bool, ConfigError> {
        self.get_or(key, false)
    }

    pub fn pair_or(&self, key: &str, default: (f64, f64)) -> Result<(f64, f64), ConfigError> {
        match self.pair(key)? {
            Some(v) => Ok(v),
            None => {
                self.note_default(key, format!("{},{}", default.0, default.1));
                Ok(default)
            }
        }
    }

    /// A pair written `a,b`.
    pub fn pair(&self, key: &str) -> Result<Option<(f64, f64)>, ConfigError> {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        let parts: Vec<&str> = v.split(',').map(str::trim).collect();
        let parsed: Vec<Result<f64, _>> = parts.iter().map(|p| p.parse::<f64>()).collect();
        match parsed.as_slice() {
            [Ok(a), Ok(b)] => Ok(Some((*a, *b))),
            _ => err(format!(
                "invalid value for `{key}`: expected two numbers `a,b`, got {v:?}"
            )),
        }
    }

    /// Every explicit setting plus every default used so far, in key order,
    /// leaving out `skip`.
    pub fn effective(&self, skip: &[&str]) -> BTreeMap<String, String> {
        let mut all = self.defaults.lock().expect("settings lock").clone();
        all.extend(self.values.iter().map(|(k, v)| (k.clone(), v.clone())));
        all.retain(|k, _| !skip.contains(&k.as_str()));
        all
    }

    /// One-line form of [`Settings::effective`].
    pub fn echo(&self, skip: &[&str]) -> String {
        self.effective(skip)
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

const RAW_ONLY: [&str; 3] = ["r", "K", "m"];

/// Model parameters from the settings: scaled `s, Y, tau` by default, or the
/// dimensional group `r, K, m, s, Y, tau` when `raw` is set. Scaled input
/// carries identity factors.
pub fn params(cfg: &Settings) -> Result<Scaled, ConfigError> {
    let raw = cfg.flag("raw")?;
    if raw && cfg.flag("scaled")? {
        return err("`raw` and `scaled` are mutually exclusive");
    }
    let s = cfg.require::<f64>("s")?;
    let yield_coef = cfg.require::<f64>("Y")?;
    let tau = cfg.get_or("tau", 0.0)?;
    if raw {
        let raw = RawParams::new(
            cfg.require("r")?,
            cfg.require("K")?,
            cfg.require("m")?,
            s,
            yield_coef,
            tau,
        )
        .map_err(|e| ConfigError(e.to_string()))?;
        Ok(scale(&raw))
    } else {
        if let Some(k) = RAW_ONLY.iter().find(|k| cfg.contains(k)) {
            return err(format!("`{k}` is only meaningful together with `raw`"));
        }
        let params = Params::new(s, yield_coef, tau).map_err(|e| ConfigError(e.to_string()))?;
        Ok(Scaled {
            params,
            factors: ScaleFactors::IDENTITY,
        })
    }
}

/// Initial data from `hist = x,y` (default `0.1,0.1`) and optional `at0 = x0,y0`.
pub fn history(cfg: &Settings) -> Result<HistorySpec, ConfigError> {
    let (x, y) = cfg.pair_or("hist", (0.1, 0.1))?;
    let mut h = HistorySpec::constant(x, y);
    if let Some((x0, y0)) = cfg.pair("at0")? {
        h = h.with_initial(x0, y0);
    }
    h.validate().map_err(|e| ConfigError(e.to_string()))?;
    Ok(h)
}
