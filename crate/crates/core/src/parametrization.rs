//! Width-scaling rules in abc-form.
//!
//! A parametrization fixes three families of exponents:
//!
//! * initialization variances: `W_0 ~ N(0, d^{-alpha_input})`,
//!   `W_l ~ N(0, n^{-alpha_hidden})`, `V ~ N(0, n^{-alpha_head})`;
//! * forward multipliers: the stored weight is multiplied by
//!   `d^{-mult_input}`, `n^{-mult_hidden}` or `n^{-mult_head}` in the forward pass;
//! * learning-rate exponents `c`: the learning rate of a layer is `eta * n^{-c}`.
//!
//! SP and NTP have the same law at initialization; they differ in where the
//! `n^{-1/2}` factors sit, and therefore in how gradient steps move the
//! effective weights.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Gd,
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gd" | "sgd" => Ok(OptimizerKind::Gd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Argument(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Gd => "gd",
            OptimizerKind::Adam => "adam",
        })
    }
}

/// Which weight a rule applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layer {
    /// `W_0`, shape `n x d`.
    Input,
    /// `W_l` for `l` in `1..=L`, shape `n x n`.
    Hidden(usize),
    /// `V`, shape `n`.
    Head,
}

/// Learning-rate exponents for one optimizer, per layer kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrExponents {
    pub input: f64,
    pub hidden: f64,
    pub head: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parametrization {
    pub name: String,
    pub alpha_input: f64,
    pub alpha_hidden: f64,
    pub alpha_head: f64,
    #[serde(default)]
    pub mult_input: f64,
    pub mult_hidden: f64,
    pub mult_head: f64,
    /// Hidden-layer learning-rate exponent under GD.
    pub lr_exponent_gd: f64,
    /// Hidden-layer learning-rate exponent under Adam.
    pub lr_exponent_adam: f64,
    /// Exponents for `W_0` and `V`; only used when those layers are trained.
    #[serde(default = "LrExponents::flat_gd")]
    pub frozen_layer_lr_gd: LrExponents,
    #[serde(default = "LrExponents::flat_adam")]
    pub frozen_layer_lr_adam: LrExponents,
}

impl LrExponents {
    fn flat_gd() -> Self {
        LrExponents {
            input: 0.0,
            hidden: 0.0,
            head: 0.0,
        }
    }

    fn flat_adam() -> Self {
        Self::flat_gd()
    }
}

impl Parametrization {
    pub fn mup() -> Self {
        Parametrization {
            name: "mup".into(),
            alpha_input: 1.0,
            alpha_hidden: 1.0,
            alpha_head: 2.0,
            mult_input: 0.0,
            mult_hidden: 0.0,
            mult_head: 0.0,
            lr_exponent_gd: 0.0,
            lr_exponent_adam: 1.0,
            // input layer trained at eta * n, head at eta / n
            frozen_layer_lr_gd: LrExponents {
                input: -1.0,
                hidden: 0.0,
                head: 1.0,
            },
            frozen_layer_lr_adam: LrExponents {
                input: 0.0,
                hidden: 1.0,
                head: 1.0,
            },
        }
    }

    pub fn sp() -> Self {
        Parametrization {
            name: "sp".into(),
            alpha_input: 1.0,
            alpha_hidden: 1.0,
            alpha_head: 1.0,
            mult_input: 0.0,
            mult_hidden: 0.0,
            mult_head: 0.0,
            lr_exponent_gd: 0.0,
            lr_exponent_adam: 0.0,
            frozen_layer_lr_gd: LrExponents::flat_gd(),
            frozen_layer_lr_adam: LrExponents::flat_adam(),
        }
    }

    pub fn ntp() -> Self {
        Parametrization {
            name: "ntp".into(),
            alpha_input: 0.0,
            alpha_hidden: 0.0,
            alpha_head: 0.0,
            mult_input: 0.5,
            mult_hidden: 0.5,
            mult_head: 0.5,
            lr_exponent_gd: 0.0,
            lr_exponent_adam: 0.0,
            frozen_layer_lr_gd: LrExponents::flat_gd(),
            frozen_layer_lr_adam: LrExponents::flat_adam(),
        }
    }

    /// Initialization standard deviation (not variance) of a layer's stored weights.
    pub fn init_std(&self, layer: Layer, n: usize, d: usize) -> f64 {
        match layer {
            Layer::Input => (d as f64).powf(-self.alpha_input / 2.0),
            Layer::Hidden(_) => (n as f64).powf(-self.alpha_hidden / 2.0),
            Layer::Head => (n as f64).powf(-self.alpha_head / 2.0),
        }
    }

    /// Forward multiplier applied to a layer's stored weights.
    pub fn multiplier(&self, layer: Layer, n: usize, d: usize) -> f64 {
        match layer {
            Layer::Input => (d as f64).powf(-self.mult_input),
            Layer::Hidden(_) => (n as f64).powf(-self.mult_hidden),
            Layer::Head => (n as f64).powf(-self.mult_head),
        }
    }

    /// Hidden-layer learning rate `eta_base * n^{-c}`.
    pub fn effective_lr(&self, eta_base: f64, n: usize, optimizer: OptimizerKind) -> f64 {
        self.layer_lr(eta_base, Layer::Hidden(1), n, optimizer)
    }

    pub fn layer_lr(&self, eta_base: f64, layer: Layer, n: usize, optimizer: OptimizerKind) -> f64 {
        let c = match (optimizer, layer) {
            (OptimizerKind::Gd, Layer::Hidden(_)) => self.lr_exponent_gd,
            (OptimizerKind::Adam, Layer::Hidden(_)) => self.lr_exponent_adam,
            (OptimizerKind::Gd, Layer::Input) => self.frozen_layer_lr_gd.input,
            (OptimizerKind::Gd, Layer::Head) => self.frozen_layer_lr_gd.head,
            (OptimizerKind::Adam, Layer::Input) => self.frozen_layer_lr_adam.input,
            (OptimizerKind::Adam, Layer::Head) => self.frozen_layer_lr_adam.head,
        };
        eta_base * (n as f64).powf(-c)
    }
}

/// Looks up a named preset: `mup`, `sp` or `ntp`.
pub fn preset(name: &str) -> Result<Parametrization> {
    match name.to_ascii_lowercase().as_str() {
        "mup" | "µp" | "μp" => Ok(Parametrization::mup()),
        "sp" => Ok(Parametrization::sp()),
        "ntp" => Ok(Parametrization::ntp()),
        other => Err(Error::Argument(format!(
            "unknown parametrization `{other}` (expected mup, sp or ntp)"
        ))),
    }
}

impl FromStr for Parametrization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        preset(s)
    }
}
