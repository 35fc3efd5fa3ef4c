//! Run configuration: a TOML file overridden field by field by flags.

use std::path::Path;

use clap::{Args, ValueEnum};
use serde::Deserialize;

use volcd::afcd::default_refractory;
use volcd::{AfcdConfig, GlrConfig, MuNormalization, VceConfig, WeightScheme};

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Afcd,
    Cafcd,
    Glr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Preprocess {
    #[default]
    None,
    FirstDifference,
}

fn parse_scheme(s: &str) -> Result<WeightScheme, String> {
    s.parse()
}

fn parse_norm(s: &str) -> Result<MuNormalization, String> {
    s.parse()
}

/// Detector parameters. Every field is optional so that file values and flags
/// can be layered; unset fields fall back to the library defaults.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    /// Detector to run [default: afcd]
    #[arg(long, value_enum)]
    pub detector: Option<DetectorKind>,
    /// Learning rate mu
    #[arg(long)]
    pub mu: Option<f64>,
    /// Slow filter window T_s
    #[arg(long)]
    pub slow_window: Option<usize>,
    /// Fast filter window T_f
    #[arg(long)]
    pub fast_window: Option<usize>,
    /// Desired filter parameter T_d (the window spans T_d + 2 samples)
    #[arg(long)]
    pub desired_window: Option<usize>,
    /// Detection threshold gamma
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Dither scale rho
    #[arg(long)]
    pub rho: Option<f64>,
    /// Refractory length [default: round(1.2 T_s)]
    #[arg(long)]
    pub refractory: Option<usize>,
    /// Weight scheme: triangular | uniform
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<WeightScheme>,
    /// Learning-rate normalization: continuous | at-detection
    #[arg(long, value_parser = parse_norm)]
    pub mu_normalization: Option<MuNormalization>,
    /// GLR half-window L
    #[arg(long)]
    pub glr_window: Option<usize>,
    /// GLR threshold h
    #[arg(long)]
    pub glr_threshold: Option<f64>,
    /// GLR refractory length [default: L]
    #[arg(long)]
    pub glr_refractory: Option<usize>,
    /// Differencing window T_l of the location estimator [default: T_f]
    #[arg(long)]
    pub locate_window: Option<usize>,
    /// Skip change-location estimation for AFCD/CAFCD events
    #[arg(long)]
    #[serde(default)]
    pub no_locate: bool,
    /// Input preprocessing
    #[arg(long, value_enum)]
    pub preprocess: Option<Preprocess>,
    /// Expected number of input columns; other widths are rejected
    #[arg(long)]
    pub channels: Option<usize>,
    /// Seed of the dither generator
    #[arg(long, env = "VOLCD_SEED")]
    pub seed: Option<u64>,
    /// TOML file with any of the fields above (underscored names); flags win
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<std::path::PathBuf>,
}

macro_rules! layer {
    ($over:expr, $base:expr, $($f:ident),*) => {
        DetectorParams {
            $($f: $over.$f.or($base.$f),)*
            no_locate: $over.no_locate || $base.no_locate,
            config: None,
        }
    };
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub detector: DetectorKind,
    pub afcd: AfcdConfig,
    pub glr: GlrConfig,
    pub vce: Option<VceConfig>,
    pub preprocess: Preprocess,
}

impl DetectorParams {
    /// Reads `--config` (if any) and layers the flags on top.
    pub fn load(&self) -> Result<DetectorParams, CliError> {
        let Some(path) = &self.config else {
            return Ok(self.clone());
        };
        let base = read_file(path)?;
        Ok(self.over(&base))
    }

    pub fn over(&self, base: &DetectorParams) -> DetectorParams {
        layer!(
            self, base, detector, mu, slow_window, fast_window, desired_window, gamma, rho, refractory,
            scheme, mu_normalization, glr_window, glr_threshold, glr_refractory, locate_window,
            preprocess, channels, seed
        )
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let p = self.load()?;
        let d = AfcdConfig::default();
        let slow_window = p.slow_window.unwrap_or(d.slow_window);
        let afcd = AfcdConfig {
            mu: p.mu.unwrap_or(d.mu),
            slow_window,
            fast_window: p.fast_window.unwrap_or(d.fast_window),
            desired_window: p.desired_window.unwrap_or(d.desired_window),
            gamma: p.gamma.unwrap_or(d.gamma),
            rho: p.rho.unwrap_or(d.rho),
            refractory: p.refractory.unwrap_or_else(|| default_refractory(slow_window)),
            weight_scheme: p.scheme.unwrap_or(d.weight_scheme),
            mu_normalization: p.mu_normalization.unwrap_or(d.mu_normalization),
            rng_seed: p.seed.unwrap_or(d.rng_seed),
        };
        afcd.validate()?;
        let g = GlrConfig::default();
        let window = p.glr_window.unwrap_or(g.window);
        let glr = GlrConfig {
            window,
            threshold: p.glr_threshold.unwrap_or(g.threshold),
            refractory: p.glr_refractory.unwrap_or(window),
            min_location_segment: g.min_location_segment.min((window / 2).max(1)),
        };
        glr.validate()?;
        let vce = if p.no_locate {
            None
        } else {
            let v = VceConfig::new(p.locate_window.unwrap_or(afcd.fast_window));
            v.validate()?;
            Some(v)
        };
        Ok(RunConfig {
            detector: p.detector.unwrap_or(DetectorKind::Afcd),
            afcd,
            glr,
            vce,
            preprocess: p.preprocess.unwrap_or_default(),
        })
    }
}

fn read_file(path: &Path) -> Result<DetectorParams, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let rc = DetectorParams::default().resolve().unwrap();
        assert_eq!(rc.afcd, AfcdConfig::default());
        assert_eq!(rc.glr, GlrConfig::default());
        assert_eq!(rc.vce, Some(VceConfig::new(20)));
        assert_eq!(rc.detector, DetectorKind::Afcd);
    }

    #[test]
    fn refractory_follows_slow_window() {
        let p = DetectorParams {
            slow_window: Some(100),
            ..Default::default()
        };
        assert_eq!(p.resolve().unwrap().afcd.refractory, 120);
    }

    #[test]
    fn flags_override_file() {
        let file: DetectorParams = toml::from_str("mu = 2.0\ngamma = 0.7\ndetector = \"glr\"\n").unwrap();
        let flags = DetectorParams {
            mu: Some(3.0),
            ..Default::default()
        };
        let merged = flags.over(&file);
        assert_eq!(merged.mu, Some(3.0));
        assert_eq!(merged.gamma, Some(0.7));
        assert_eq!(merged.detector, Some(DetectorKind::Glr));
    }

    #[test]
    fn unknown_file_key_rejected() {
        assert!(toml::from_str::<DetectorParams>("bogus = 1\n").is_err());
    }

    #[test]
    fn invalid_values_are_input_errors() {
        let p = DetectorParams {
            gamma: Some(2.0),
            ..Default::default()
        };
        assert!(matches!(p.resolve(), Err(CliError::Input(_))));
    }
}
