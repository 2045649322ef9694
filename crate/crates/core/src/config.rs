//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! omega = 2.2
//! v_inter = 1.0
//! v_diag = geometric
//! v_nnn = auto        # V / 64
//! rows = 2
//! cols = 4
//! ```
//!
//! Model keys start from the paper-default preset. Keys the model does not
//! know are kept in [`RunConfig::options`] for the caller to interpret.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::dynamics::MeanField;
use crate::error::{Error, Result};
use crate::lattice::{DiagCoupling, HighOrderForm, ModelParams, UnitCell};

pub const MODEL_KEYS: [&str; 13] = [
    "preset",
    "omega",
    "delta",
    "gamma",
    "v_intra",
    "v_inter",
    "v_diag",
    "diag_multiplicity",
    "r_high_order",
    "high_order_form",
    "v_nnn",
    "rows",
    "cols",
];

/// Ratio `V / V₂` used by `v_nnn = auto`.
pub const NNN_RATIO: f64 = 64.0;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub params: ModelParams<f64>,
    pub rows: usize,
    pub cols: usize,
    pub options: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ModelParams::paper_default(),
            rows: 2,
            cols: 2,
            options: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Nnn {
    Value(f64),
    Auto,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut nnn = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected 'key = value', got '{body}'"),
            })?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            if value.is_empty() {
                return Err(Error::Config {
                    line,
                    msg: format!("empty value for '{key}'"),
                });
            }
            let err = |msg: String| Error::Config { line, msg };
            if key == "v_nnn" {
                nnn = Some(if value.eq_ignore_ascii_case("auto") {
                    Nnn::Auto
                } else {
                    Nnn::Value(number(value).map_err(err)?)
                });
                continue;
            }
            cfg.set(&key, value).map_err(err)?;
        }
        cfg.params.v_nnn = match nnn {
            Some(Nnn::Auto) => cfg.params.v_intra / NNN_RATIO,
            Some(Nnn::Value(v)) => v,
            None => cfg.params.v_nnn,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies one key. `v_nnn = auto` uses the current `v_intra`.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let p = &mut self.params;
        match key {
            "preset" => {
                self.params = ModelParams::preset(value).ok_or_else(|| format!("unknown preset '{value}'"))?;
            }
            "omega" => p.omega = number(value)?,
            "delta" => p.delta = number(value)?,
            "gamma" => p.gamma = number(value)?,
            "v_intra" => p.v_intra = number(value)?,
            "v_inter" => p.v_inter = number(value)?,
            "v_diag" => {
                p.v_diag = if value.eq_ignore_ascii_case("geometric") {
                    DiagCoupling::Geometric
                } else {
                    DiagCoupling::Explicit(number(value)?)
                }
            }
            "diag_multiplicity" => p.diag_multiplicity = integer(value)?,
            "r_high_order" => p.r_high_order = number(value)?,
            "high_order_form" => {
                p.high_order_form = match value.to_ascii_lowercase().as_str() {
                    "local" => HighOrderForm::Local,
                    "neighbor" | "neighbour" => HighOrderForm::NeighborResolved,
                    other => return Err(format!("unknown high_order_form '{other}'")),
                }
            }
            "v_nnn" => {
                p.v_nnn = if value.eq_ignore_ascii_case("auto") {
                    p.v_intra / NNN_RATIO
                } else {
                    number(value)?
                }
            }
            "rows" => self.rows = integer(value)?,
            "cols" => self.cols = integer(value)?,
            other => {
                self.options.insert(other.to_string(), value.to_string());
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        UnitCell::new(self.rows, self.cols)?;
        Ok(())
    }

    pub fn model(&self) -> Result<MeanField<f64>> {
        MeanField::new(self.params.clone(), self.rows, self.cols)
    }

    /// Fully resolved config; parsing it gives back `self`.
    pub fn echo(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let v_diag = match p.v_diag {
            DiagCoupling::Explicit(v) => format!("{v:?}"),
            DiagCoupling::Geometric => "geometric".into(),
        };
        let model: [(&str, String); 12] = [
            ("omega", format!("{:?}", p.omega)),
            ("delta", format!("{:?}", p.delta)),
            ("gamma", format!("{:?}", p.gamma)),
            ("v_intra", format!("{:?}", p.v_intra)),
            ("v_inter", format!("{:?}", p.v_inter)),
            ("v_diag", v_diag),
            ("diag_multiplicity", p.diag_multiplicity.to_string()),
            ("r_high_order", format!("{:?}", p.r_high_order)),
            ("high_order_form", p.high_order_form.as_str().into()),
            ("v_nnn", format!("{:?}", p.v_nnn)),
            ("rows", self.rows.to_string()),
            ("cols", self.cols.to_string()),
        ];
        for (k, v) in model.iter() {
            let _ = writeln!(s, "{k} = {v}");
        }
        for (k, v) in &self.options {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn option(&self, key: &str) -> Option<&str> {
        self.options.get(key).map(String::as_str)
    }
}

fn number(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

fn integer<I: std::str::FromStr>(s: &str) -> std::result::Result<I, String> {
    s.parse().map_err(|_| format!("'{s}' is not a nonnegative integer"))
}
