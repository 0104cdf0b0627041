//! Flat key = value configuration files. Missing keys take the built-in
//! defaults; dB quantities are converted to linear scale here and nowhere
//! else.

use std::collections::HashMap;
use std::fmt;

use noma_core::model::{RateMatrix, SystemConfig};

/// A configuration problem, attributed to a key and (when it came from a
/// file) the line it appeared on.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error")?;
        if let Some(line) = self.line {
            write!(f, " at line {line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, " (key {key})")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

const KEYS: [&str; 14] = [
    "n_tx",
    "n_rx",
    "n_streams",
    "group_cap",
    "alloc_eps",
    "corr_coeff",
    "snr_db",
    "radius_m",
    "intensity_per_m2",
    "rate_bps_hz",
    "path_loss_exp",
    "path_loss_ref",
    "fading_power",
    "noise_power",
];

/// Map a validation parameter name back to the config key that sets it.
fn key_for_parameter(name: &str) -> Option<&'static str> {
    match name {
        "n_tx" => Some("n_tx"),
        "n_rx" => Some("n_rx"),
        "n_streams" => Some("n_streams"),
        "group_cap" => Some("group_cap"),
        "alloc_eps" => Some("alloc_eps"),
        "corr_coeff" => Some("corr_coeff"),
        "avg_snr" => Some("snr_db"),
        "radius" => Some("radius_m"),
        "intensity" => Some("intensity_per_m2"),
        "rates" | "rate" => Some("rate_bps_hz"),
        "path_loss_exp" => Some("path_loss_exp"),
        "path_loss_ref" => Some("path_loss_ref"),
        "fading_power" => Some("fading_power"),
        "noise_power" => Some("noise_power"),
        _ => None,
    }
}

/// Parse configuration text: one `key = value` per line, `#` comments,
/// blank lines ignored, every key at most once. Returns a validated
/// configuration with unset keys at their defaults.
pub fn parse_config_str(text: &str) -> Result<SystemConfig, ConfigError> {
    let mut raw: HashMap<&'static str, (usize, String)> = HashMap::new();
    for (idx, line_text) in text.lines().enumerate() {
        let line_no = idx + 1;
        let stripped = match line_text.split_once('#') {
            Some((before, _)) => before,
            None => line_text,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        let (key_part, value_part) = stripped.split_once('=').ok_or_else(|| ConfigError {
            line: Some(line_no),
            key: None,
            message: format!("expected `key = value`, got `{stripped}`"),
        })?;
        let key = key_part.trim();
        let value = value_part.trim();
        let canonical = KEYS
            .iter()
            .find(|&&k| k == key)
            .copied()
            .ok_or_else(|| ConfigError {
                line: Some(line_no),
                key: Some(key.to_string()),
                message: format!(
                    "unknown key `{key}`; valid keys are {}",
                    KEYS.join(", ")
                ),
            })?;
        if let Some((first_line, _)) = raw.get(canonical) {
            return Err(ConfigError {
                line: Some(line_no),
                key: Some(key.to_string()),
                message: format!("duplicate key; first set at line {first_line}"),
            });
        }
        if value.is_empty() {
            return Err(ConfigError {
                line: Some(line_no),
                key: Some(key.to_string()),
                message: "missing value".to_string(),
            });
        }
        raw.insert(canonical, (line_no, value.to_string()));
    }
    build_config(&raw)
}

fn get_usize(
    raw: &HashMap<&'static str, (usize, String)>,
    key: &'static str,
    default: usize,
) -> Result<usize, ConfigError> {
    match raw.get(key) {
        None => Ok(default),
        Some((line, text)) => text.parse::<usize>().map_err(|e| ConfigError {
            line: Some(*line),
            key: Some(key.to_string()),
            message: format!("cannot parse `{text}` as a positive integer: {e}"),
        }),
    }
}

fn get_f64(
    raw: &HashMap<&'static str, (usize, String)>,
    key: &'static str,
    default: f64,
) -> Result<f64, ConfigError> {
    match raw.get(key) {
        None => Ok(default),
        Some((line, text)) => text.parse::<f64>().map_err(|e| ConfigError {
            line: Some(*line),
            key: Some(key.to_string()),
            message: format!("cannot parse `{text}` as a number: {e}"),
        }),
    }
}

fn build_config(
    raw: &HashMap<&'static str, (usize, String)>,
) -> Result<SystemConfig, ConfigError> {
    let defaults = SystemConfig::default();
    let mut cfg = SystemConfig {
        n_tx: get_usize(raw, "n_tx", defaults.n_tx)?,
        n_rx: get_usize(raw, "n_rx", defaults.n_rx)?,
        n_streams: get_usize(raw, "n_streams", defaults.n_streams)?,
        group_cap: get_usize(raw, "group_cap", defaults.group_cap)?,
        intensity: get_f64(raw, "intensity_per_m2", defaults.intensity)?,
        radius: get_f64(raw, "radius_m", defaults.radius)?,
        path_loss_exp: get_f64(raw, "path_loss_exp", defaults.path_loss_exp)?,
        path_loss_ref: get_f64(raw, "path_loss_ref", defaults.path_loss_ref)?,
        fading_power: get_f64(raw, "fading_power", defaults.fading_power)?,
        noise_power: get_f64(raw, "noise_power", defaults.noise_power)?,
        avg_snr: defaults.avg_snr,
        rates: defaults.rates.clone(),
        corr_coeff: get_f64(raw, "corr_coeff", defaults.corr_coeff)?,
        alloc_eps: get_f64(raw, "alloc_eps", defaults.alloc_eps)?,
    };
    // dB to linear happens here and only here.
    if let Some((line, text)) = raw.get("snr_db") {
        let db = text.parse::<f64>().map_err(|e| ConfigError {
            line: Some(*line),
            key: Some("snr_db".to_string()),
            message: format!("cannot parse `{text}` as a number: {e}"),
        })?;
        if !db.is_finite() {
            return Err(ConfigError {
                line: Some(*line),
                key: Some("snr_db".to_string()),
                message: format!("SNR must be finite, got {db} dB"),
            });
        }
        cfg.avg_snr = 10f64.powf(db / 10.0);
    }
    let rate = get_f64(raw, "rate_bps_hz", 2.0)?;
    if cfg.n_streams >= 1 && cfg.group_cap >= 1 {
        // Degenerate counts fall through to validate(), which attributes
        // them to the count keys rather than to the rate.
        cfg.rates =
            RateMatrix::uniform(cfg.n_streams, cfg.group_cap, rate).map_err(|err| ConfigError {
                line: raw.get("rate_bps_hz").map(|(l, _)| *l),
                key: Some("rate_bps_hz".to_string()),
                message: err.to_string(),
            })?;
    }

    cfg.validate().map_err(|err| {
        let (name, detail) = match &err {
            noma_core::NomaError::ParameterDomain { name, detail } => {
                (Some(*name), detail.clone())
            }
            other => (None, other.to_string()),
        };
        let key = name.and_then(key_for_parameter);
        let line = key.and_then(|k| raw.get(k).map(|(l, _)| *l));
        ConfigError {
            line,
            key: key.map(str::to_string),
            message: detail,
        }
    })?;
    Ok(cfg)
}

/// Load and parse a configuration file.
pub fn load_config(path: &std::path::Path) -> Result<SystemConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        line: None,
        key: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_yields_the_defaults() {
        let cfg = parse_config_str("").unwrap();
        assert_eq!(cfg, SystemConfig::default());
    }

    #[test]
    fn snr_converts_from_decibels() {
        let cfg = parse_config_str("snr_db = 60").unwrap();
        assert!((cfg.avg_snr - 1e6).abs() < 1e-6);
        let cfg = parse_config_str("snr_db = 0").unwrap();
        assert_eq!(cfg.avg_snr, 1.0);
        let cfg = parse_config_str("snr_db = -10").unwrap();
        assert!((cfg.avg_snr - 0.1).abs() < 1e-16);
    }

    #[test]
    fn comments_blanks_and_spacing_are_tolerated() {
        let text = "\n# cell geometry\nradius_m = 45.5   # meters\n\n  corr_coeff=0.25\n";
        let cfg = parse_config_str(text).unwrap();
        assert_eq!(cfg.radius, 45.5);
        assert_eq!(cfg.corr_coeff, 0.25);
        assert_eq!(cfg.n_tx, 2);
    }

    #[test]
    fn rate_key_resizes_with_the_stream_and_group_shape() {
        let cfg = parse_config_str("rate_bps_hz = 1.5\nn_streams = 1\nn_tx = 1\ngroup_cap = 2")
            .unwrap();
        assert_eq!(cfg.rates.at(0, 0), 1.5);
        assert_eq!(cfg.rates.at(0, 1), 1.5);
    }

    #[test]
    fn unknown_key_is_rejected_with_its_line() {
        let err = parse_config_str("radius_m = 30\nbandwidth = 7\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        assert_eq!(err.key.as_deref(), Some("bandwidth"));
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let err = parse_config_str("snr_db = 50\nsnr_db = 60\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        assert!(err.message.contains("line 1"));
    }

    #[test]
    fn unparsable_value_is_rejected() {
        let err = parse_config_str("n_tx = two\n").unwrap_err();
        assert_eq!(err.line, Some(1));
        assert_eq!(err.key.as_deref(), Some("n_tx"));
    }

    #[test]
    fn invariant_violations_are_attributed_to_their_key() {
        // More streams than receive antennas.
        let err = parse_config_str("n_streams = 4\nn_tx = 4\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("n_streams"));
        assert_eq!(err.line, Some(1));

        let err = parse_config_str("corr_coeff = 1.0\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("corr_coeff"));

        let err = parse_config_str("radius_m = -5\n").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("radius_m"));
    }

    #[test]
    fn missing_equals_sign_is_rejected() {
        let err = parse_config_str("just words\n").unwrap_err();
        assert_eq!(err.line, Some(1));
        assert!(err.message.contains("key = value"));
    }
}
