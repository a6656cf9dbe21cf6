use std::path::Path;

use super::ParseError;
use crate::calibration::CalibrationConfig;
use crate::error::Result;
use crate::predictor::PredictConfig;

/// Settings read from a flat `key = value` file. Unset keys keep their
/// defaults; `seed` and `restarts` stay `None` so callers can layer other
/// sources under them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    pub calibration: CalibrationConfig,
    pub predict: PredictConfig,
    pub seed: Option<u64>,
    pub restarts: Option<usize>,
}

pub const CONFIG_KEYS: &[&str] = &[
    "max_cycles",
    "target_error",
    "initial_temperature",
    "cooling_factor",
    "perturbation_scale",
    "seed",
    "restarts",
    "term_count",
    "slope_floor",
    "weight_cap",
    "fit_iterations",
    "fit_tolerance",
    "iteration_error",
    "max_iterations",
    "probe_points",
    "horizon",
    "step",
];

pub fn load_config(path: impl AsRef<Path>) -> Result<Settings> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn parse_config(text: &str) -> Result<Settings> {
    let mut s = Settings::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ParseError {
                line,
                column: content.len() - content.trim_start().len() + 1,
                message: "missing `=`".into(),
                expected: Some("`key = value`".into()),
            }
            .into());
        };
        let key_trim = key.trim();
        let value_trim = value.trim();
        let value_column = key.len() + 2 + (value.len() - value.trim_start().len());
        let err = |message: String, expected: &str| ParseError {
            line,
            column: value_column,
            message,
            expected: Some(expected.into()),
        };
        let real = || -> std::result::Result<f64, ParseError> {
            value_trim
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("`{value_trim}` is not a number"), "a finite number"))
        };
        let natural = || -> std::result::Result<u64, ParseError> {
            value_trim
                .parse::<u64>()
                .map_err(|_| err(format!("`{value_trim}` is not a natural number"), "a natural number"))
        };
        let c = &mut s.calibration;
        match key_trim {
            "max_cycles" => c.max_cycles = natural()? as usize,
            "target_error" => c.target_error = Some(real()?),
            "initial_temperature" => c.anneal.initial_temperature = real()?,
            "cooling_factor" => c.anneal.cooling_factor = real()?,
            "perturbation_scale" => c.anneal.perturbation_scale = real()?,
            "seed" => s.seed = Some(natural()?),
            "restarts" => s.restarts = Some(natural()? as usize),
            "term_count" => c.family.term_count = natural()? as usize,
            "slope_floor" => c.family.slope_floor = real()?,
            "weight_cap" => c.family.weight_cap = real()?,
            "fit_iterations" => c.family.fit_iterations = natural()? as usize,
            "fit_tolerance" => c.family.fit_tolerance = real()?,
            "iteration_error" => s.predict.iteration_error = real()?,
            "max_iterations" => s.predict.max_iterations = natural()? as usize,
            "probe_points" => s.predict.probe_points = natural()? as usize,
            "horizon" => s.predict.horizon = natural()? as usize,
            "step" => s.predict.step = real()?,
            other => {
                return Err(ParseError {
                    line,
                    column: key.len() - key.trim_start().len() + 1,
                    message: format!("unknown key `{other}`"),
                    expected: Some(CONFIG_KEYS.join(", ")),
                }
                .into())
            }
        }
    }
    s.calibration.check()?;
    Ok(s)
}
