//! Flat `key = value` configuration text.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. The same
//! format is used for fit configuration files and for run manifests.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::fit::{FitConfig, FitRegime, OptimizerKind};
use crate::geometry::BBox;
use crate::losses::LossKind;
use crate::{Error, Result};

/// Ordered key/value pairs. Later insertions of an existing key replace its value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = Self::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: n + 1,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config { line: n + 1, msg: "empty key".into() });
            }
            kv.insert(key, value.trim());
        }
        Ok(kv)
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_parsed<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::InvalidParam(format!("key '{key}': cannot parse '{v}': {e}")))
            })
            .transpose()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Keys understood by [`apply_fit_keys`].
pub const FIT_KEYS: [&str; 15] = [
    "pairs",
    "frame",
    "size_min",
    "size_max",
    "translation_sigma",
    "scale_sigma",
    "regime",
    "loss",
    "delta",
    "optimizer",
    "lr",
    "decay",
    "steps",
    "seed",
    "batch_size",
];

fn parse_frame(v: &str) -> Result<BBox> {
    let parts: Vec<f64> = v
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidParam(format!("frame component '{p}': {e}")))
        })
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [a, b, c, d] => BBox::new(*a, *b, *c, *d),
        _ => Err(Error::InvalidParam(format!("frame needs 4 comma-separated values, got '{v}'"))),
    }
}

/// Overrides fields of `base` with any fit keys present in `kv`.
pub fn apply_fit_keys(kv: &KeyValues, base: FitConfig) -> Result<FitConfig> {
    let mut c = base;
    if let Some(v) = kv.get_parsed("pairs")? {
        c.num_pairs = v;
    }
    if let Some(v) = kv.get("frame") {
        c.frame = parse_frame(v)?;
    }
    if let Some(v) = kv.get_parsed("size_min")? {
        c.target_size_range.0 = v;
    }
    if let Some(v) = kv.get_parsed("size_max")? {
        c.target_size_range.1 = v;
    }
    if let Some(v) = kv.get_parsed("translation_sigma")? {
        c.perturbation.translation_sigma = v;
    }
    if let Some(v) = kv.get_parsed("scale_sigma")? {
        c.perturbation.scale_sigma = v;
    }
    if let Some(v) = kv.get_parsed::<FitRegime>("regime")? {
        c.perturbation.regime = v;
    }
    if let Some(v) = kv.get_parsed::<LossKind>("loss")? {
        c.loss_kind = v;
    }
    if let Some(v) = kv.get_parsed("delta")? {
        c.delta = v;
    }
    if let Some(v) = kv.get_parsed::<OptimizerKind>("optimizer")? {
        c.optimizer = v;
    }
    if let Some(v) = kv.get_parsed("lr")? {
        c.learning_rate = v;
    }
    if let Some(v) = kv.get_parsed("decay")? {
        c.momentum_or_decay = v;
    }
    if let Some(v) = kv.get_parsed("steps")? {
        c.steps = v;
    }
    if let Some(v) = kv.get_parsed("seed")? {
        c.seed = v;
    }
    if let Some(v) = kv.get_parsed("batch_size")? {
        c.batch_size = v;
    }
    Ok(c)
}

/// Every field of `c` under the keys accepted by [`apply_fit_keys`].
pub fn fit_keys(c: &FitConfig) -> KeyValues {
    let f = c.frame;
    let mut kv = KeyValues::new();
    kv.insert("pairs", c.num_pairs);
    kv.insert("frame", format!("{},{},{},{}", f.xmin(), f.ymin(), f.xmax(), f.ymax()));
    kv.insert("size_min", c.target_size_range.0);
    kv.insert("size_max", c.target_size_range.1);
    kv.insert("translation_sigma", c.perturbation.translation_sigma);
    kv.insert("scale_sigma", c.perturbation.scale_sigma);
    kv.insert("regime", c.perturbation.regime);
    kv.insert("loss", c.loss_kind);
    kv.insert("delta", c.delta);
    kv.insert("optimizer", c.optimizer);
    kv.insert("lr", c.learning_rate);
    kv.insert("decay", c.momentum_or_decay);
    kv.insert("steps", c.steps);
    kv.insert("seed", c.seed);
    kv.insert("batch_size", c.batch_size);
    kv
}
