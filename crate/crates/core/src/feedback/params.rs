use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Parameters of the op-amp driven, series-at-output feedback stage.
///
/// `beta` is always derived from `g_m * r_pi`. `r_in` of `None` means the
/// op-amp input resistance is infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplifierParams {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "rout")]
    pub r_out: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    #[serde(rename = "gm")]
    pub g_m: f64,
    #[serde(rename = "rpi")]
    pub r_pi: f64,
    #[serde(rename = "ro")]
    pub r_o: f64,
    #[serde(rename = "RE", default)]
    pub r_e: f64,
    #[serde(rename = "RS", default)]
    pub r_s: f64,
    #[serde(rename = "Rin", default)]
    pub r_in: Option<f64>,
}

/// Keys accepted by [`AmplifierParams::set`] and sweeps, in display order.
pub const PARAM_KEYS: [&str; 10] = ["K", "rout", "R1", "R2", "gm", "rpi", "ro", "RE", "RS", "Rin"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("unknown parameter '{0}' (expected one of K, rout, R1, R2, gm, rpi, ro, RE, RS, Rin)")]
    UnknownKey(String),
    #[error("parameter {key} = {value} is out of range ({rule})")]
    OutOfRange {
        key: &'static str,
        value: f64,
        rule: &'static str,
    },
}

impl Default for AmplifierParams {
    fn default() -> Self {
        AmplifierParams::paper_defaults()
    }
}

impl AmplifierParams {
    /// K = 1000, r_out = 500 kΩ, R1 = 1 kΩ, g_m = 40 mS, r_π = 2.5 kΩ
    /// (β = 100), r_o = 100 kΩ; R2 = 10 kΩ, R_E = R_S = 0, R_in = ∞.
    pub fn paper_defaults() -> Self {
        AmplifierParams {
            k: 1000.0,
            r_out: 500e3,
            r1: 1e3,
            r2: 10e3,
            g_m: 0.04,
            r_pi: 2.5e3,
            r_o: 100e3,
            r_e: 0.0,
            r_s: 0.0,
            r_in: None,
        }
    }

    pub fn beta(&self) -> f64 {
        self.g_m * self.r_pi
    }

    pub fn r_in_ohms(&self) -> f64 {
        self.r_in.unwrap_or(f64::INFINITY)
    }

    pub fn get(&self, key: &str) -> Result<f64, ParamError> {
        Ok(match key {
            "K" => self.k,
            "rout" => self.r_out,
            "R1" => self.r1,
            "R2" => self.r2,
            "gm" => self.g_m,
            "rpi" => self.r_pi,
            "ro" => self.r_o,
            "RE" => self.r_e,
            "RS" => self.r_s,
            "Rin" => self.r_in_ohms(),
            _ => return Err(ParamError::UnknownKey(key.to_string())),
        })
    }

    /// Sets one parameter by key; `Rin = inf` clears it.
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), ParamError> {
        let slot = match key {
            "K" => &mut self.k,
            "rout" => &mut self.r_out,
            "R1" => &mut self.r1,
            "R2" => &mut self.r2,
            "gm" => &mut self.g_m,
            "rpi" => &mut self.r_pi,
            "ro" => &mut self.r_o,
            "RE" => &mut self.r_e,
            "RS" => &mut self.r_s,
            "Rin" => {
                self.r_in = value.is_finite().then_some(value);
                return Ok(());
            }
            _ => return Err(ParamError::UnknownKey(key.to_string())),
        };
        *slot = value;
        Ok(())
    }

    pub fn with(mut self, key: &str, value: f64) -> Result<Self, ParamError> {
        self.set(key, value)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = |key, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(ParamError::OutOfRange {
                    key,
                    value,
                    rule: "finite and > 0",
                })
            }
        };
        let non_negative = |key, value: f64| {
            if value >= 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(ParamError::OutOfRange {
                    key,
                    value,
                    rule: "finite and >= 0",
                })
            }
        };
        non_negative("K", self.k)?;
        positive("rout", self.r_out)?;
        positive("R1", self.r1)?;
        positive("R2", self.r2)?;
        positive("gm", self.g_m)?;
        positive("rpi", self.r_pi)?;
        positive("ro", self.r_o)?;
        non_negative("RE", self.r_e)?;
        non_negative("RS", self.r_s)?;
        if let Some(r) = self.r_in {
            positive("Rin", r)?;
        }
        Ok(())
    }
}

impl fmt::Display for AmplifierParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = PARAM_KEYS
            .iter()
            .map(|k| format!("{k}={}", crate::units::format_value(self.get(k).expect("known key"))))
            .collect();
        write!(f, "{} (beta={})", parts.join(" "), crate::units::format_value(self.beta()))
    }
}
