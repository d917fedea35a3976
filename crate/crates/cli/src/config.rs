//! Flat key=value config files. Lines starting with `#` are comments;
//! unknown keys are errors so typos do not pass silently.

use crate::CliError;
use std::path::Path;

#[derive(Debug, Default)]
pub struct FileConfig {
    pub n: Option<u32>,
    pub m: Option<f64>,
    pub r0: Option<f64>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub rho_min: Option<f64>,
    pub h0: Option<f64>,
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    pub max_points: Option<usize>,
    pub a_min: Option<f64>,
    pub bif_angle_threshold: Option<f64>,
    pub escape_b: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = FileConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Args(format!(
                    "{}:{}: expected key=value, got {raw:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                CliError::Args(format!(
                    "{}:{}: bad {what} value {value:?} for key {key}",
                    path.display(),
                    lineno + 1
                ))
            };
            match key {
                "N" | "n" => cfg.n = Some(value.parse().map_err(|_| bad("integer"))?),
                "m" => cfg.m = Some(value.parse().map_err(|_| bad("number"))?),
                "r0" => cfg.r0 = Some(value.parse().map_err(|_| bad("number"))?),
                "rel_tol" => cfg.rel_tol = Some(value.parse().map_err(|_| bad("number"))?),
                "abs_tol" => cfg.abs_tol = Some(value.parse().map_err(|_| bad("number"))?),
                "rho_min" => cfg.rho_min = Some(value.parse().map_err(|_| bad("number"))?),
                "h0" => cfg.h0 = Some(value.parse().map_err(|_| bad("number"))?),
                "h_min" => cfg.h_min = Some(value.parse().map_err(|_| bad("number"))?),
                "h_max" => cfg.h_max = Some(value.parse().map_err(|_| bad("number"))?),
                "max_points" => cfg.max_points = Some(value.parse().map_err(|_| bad("integer"))?),
                "a_min" => cfg.a_min = Some(value.parse().map_err(|_| bad("number"))?),
                "bif_angle_threshold" => {
                    cfg.bif_angle_threshold = Some(value.parse().map_err(|_| bad("number"))?)
                }
                "escape_b" => cfg.escape_b = Some(value.parse().map_err(|_| bad("number"))?),
                other => {
                    return Err(CliError::Args(format!(
                        "{}:{}: unknown config key {other:?}",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        Ok(cfg)
    }
}
