//! Single-channel adaptive-filtering change detector.
//!
//! Two volatility filters with short (`fast`) and long (`slow`) windows are
//! mixed with a convex weight `lambda`:
//!
//! ```text
//! sigma_o(t)     = lambda(t) sigma_f(t) + (1 - lambda(t)) sigma_s(t)
//! e(t)           = sigma_d(t) - sigma_o(t)
//! lambda(t + 1)  = clamp01(lambda(t) + mu (|lambda(t)| + rho u) e(t) (sigma_f(t) - sigma_s(t)))
//! ```
//!
//! `sigma_d` is a short-window "desired" volatility estimate. While the
//! variance is stationary `lambda` decays towards the slow filter; after an
//! abrupt change the fast filter fits `sigma_d` better and `lambda` climbs.
//! Crossing `gamma` raises a detection followed by a refractory interval of
//! `T_r` samples during which no further event is emitted.
//!
//! The desired window covers the `T_d + 2` newest samples and the fast/slow
//! filters run on the samples just before it, so every estimate is produced
//! `T_d + 2` samples after the newest sample the fast/slow filters have seen.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::detector::{DetectionEvent, Detector};
use crate::error::{Error, Result};
use crate::filters::{VolatilityFilter, WeightScheme, WeightVector};

/// How the learning rate is normalized by the signal power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MuNormalization {
    /// `mu / sigma_s^2(t)` at every update.
    #[default]
    Continuous,
    /// `mu / Var` with `Var` the slow-filter variance captured at the first
    /// update and refreshed at every detection.
    AtDetection,
}

impl std::str::FromStr for MuNormalization {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "continuous" => Ok(Self::Continuous),
            "at-detection" => Ok(Self::AtDetection),
            other => Err(format!("unknown mu normalization `{other}`")),
        }
    }
}

/// Default refractory length for a slow window: `round(1.2 T_s)`.
pub fn default_refractory(slow_window: usize) -> usize {
    (1.2 * slow_window as f64).round() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AfcdConfig {
    pub mu: f64,
    pub slow_window: usize,
    pub fast_window: usize,
    pub desired_window: usize,
    pub gamma: f64,
    pub rho: f64,
    pub refractory: usize,
    pub weight_scheme: WeightScheme,
    pub mu_normalization: MuNormalization,
    pub rng_seed: u64,
}

impl Default for AfcdConfig {
    fn default() -> Self {
        Self {
            mu: 0.4,
            slow_window: 250,
            fast_window: 20,
            desired_window: 10,
            gamma: 0.8,
            rho: 0.001,
            refractory: default_refractory(250),
            weight_scheme: WeightScheme::Triangular,
            mu_normalization: MuNormalization::Continuous,
            rng_seed: 0,
        }
    }
}

impl AfcdConfig {
    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_scheme(mut self, scheme: WeightScheme) -> Self {
        self.weight_scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::param("mu", format!("must be > 0, got {}", self.mu)));
        }
        if self.fast_window < 2 {
            return Err(Error::param("fast_window", "must be >= 2"));
        }
        if self.fast_window >= self.slow_window {
            return Err(Error::param(
                "fast_window",
                format!(
                    "must be smaller than slow_window ({} >= {})",
                    self.fast_window, self.slow_window
                ),
            ));
        }
        if self.desired_window == 0 {
            return Err(Error::param("desired_window", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::param("gamma", format!("must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::param("rho", format!("must be >= 0, got {}", self.rho)));
        }
        if self.refractory == 0 {
            return Err(Error::param("refractory", "must be >= 1"));
        }
        Ok(())
    }

    /// Number of samples consumed before the first lambda update.
    pub fn warmup(&self) -> usize {
        self.slow_window + self.desired_window + 2
    }
}

/// `lambda sigma_f + (1 - lambda) sigma_s`.
#[inline]
pub fn convex_combine(lambda: f64, sigma_fast: f64, sigma_slow: f64) -> f64 {
    lambda * sigma_fast + (1.0 - lambda) * sigma_slow
}

/// One sparse-LMS step on the convex weight, hard-clamped to `[0, 1]`.
#[inline]
pub fn sslms_update(
    lambda: f64,
    error: f64,
    sigma_fast: f64,
    sigma_slow: f64,
    mu: f64,
    rho: f64,
    u: f64,
) -> f64 {
    let next = lambda + mu * (lambda.abs() + rho * u) * error * (sigma_fast - sigma_slow);
    next.clamp(0.0, 1.0)
}

/// Binary change state: `lambda >= gamma`.
#[inline]
pub fn threshold_state(lambda: f64, gamma: f64) -> bool {
    lambda >= gamma
}

/// Fast, slow and desired estimates aligned on one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterTriple {
    pub fast: f64,
    pub slow: f64,
    pub desired: f64,
}

/// Fast/slow/desired filters of one channel plus the delay line feeding the
/// fast/slow pair from behind the desired window.
#[derive(Debug, Clone)]
pub(crate) struct ChannelFilters {
    fast: VolatilityFilter,
    slow: VolatilityFilter,
    desired: VolatilityFilter,
    delay: VecDeque<f64>,
}

impl ChannelFilters {
    pub(crate) fn new(cfg: &AfcdConfig) -> Result<Self> {
        let span = cfg.desired_window + 2;
        Ok(Self {
            fast: VolatilityFilter::new(cfg.weight_scheme.fast(cfg.fast_window)?),
            slow: VolatilityFilter::new(cfg.weight_scheme.slow(cfg.slow_window)?),
            desired: VolatilityFilter::new(WeightVector::averaging(span)?),
            delay: VecDeque::with_capacity(span + 1),
        })
    }

    /// Caller guarantees `x` is finite.
    pub(crate) fn push(&mut self, x: f64) -> Option<FilterTriple> {
        let desired = self.desired.push(x).expect("finite sample");
        self.delay.push_back(x);
        if self.delay.len() <= self.desired.window_size() {
            return None;
        }
        let old = self.delay.pop_front().expect("non-empty delay line");
        let fast = self.fast.push(old).expect("finite sample");
        let slow = self.slow.push(old).expect("finite sample");
        match (fast, slow, desired) {
            (Some(fast), Some(slow), Some(desired)) => Some(FilterTriple { fast, slow, desired }),
            _ => None,
        }
    }
}

/// Per-sample detector output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AfcdOutput {
    pub time: usize,
    pub lambda: f64,
    /// `s(t)`: true inside a detection's refractory interval.
    pub state: bool,
    pub event: Option<DetectionEvent>,
}

/// Learning-rate normalization and noise source shared by the single and
/// cooperative detectors.
#[derive(Debug, Clone)]
pub(crate) struct Adaptation {
    mode: MuNormalization,
    variance_ref: Option<f64>,
    rng: ChaCha8Rng,
}

impl Adaptation {
    pub(crate) fn new(mode: MuNormalization, seed: u64) -> Self {
        Self {
            mode,
            variance_ref: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub(crate) fn effective_mu(&mut self, mu: f64, slow: f64) -> f64 {
        let var = match self.mode {
            MuNormalization::Continuous => slow * slow,
            MuNormalization::AtDetection => *self.variance_ref.get_or_insert(slow * slow),
        };
        if var > 0.0 {
            mu / var
        } else {
            0.0
        }
    }

    pub(crate) fn on_detection(&mut self, slow: f64) {
        if self.mode == MuNormalization::AtDetection {
            self.variance_ref = Some(slow * slow);
        }
    }

    pub(crate) fn draw(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

/// Detection gating: initial burn-in, then refractory intervals after events.
#[derive(Debug, Clone)]
pub(crate) struct Gate {
    refractory: usize,
    burn_in_remaining: usize,
    refractory_remaining: usize,
}

impl Gate {
    pub(crate) fn new(refractory: usize) -> Self {
        Self {
            refractory,
            burn_in_remaining: refractory,
            refractory_remaining: 0,
        }
    }

    pub(crate) fn flag(&self) -> bool {
        self.refractory_remaining > 0 || self.burn_in_remaining > 0
    }

    pub(crate) fn refractory_remaining(&self) -> usize {
        self.refractory_remaining
    }

    /// Advances one update. Returns `(state, fired)`.
    pub(crate) fn step(&mut self, weight: f64, gamma: f64) -> (bool, bool) {
        if self.refractory_remaining > 0 {
            self.refractory_remaining -= 1;
            (true, false)
        } else if self.burn_in_remaining > 0 {
            self.burn_in_remaining -= 1;
            (false, false)
        } else if threshold_state(weight, gamma) {
            self.refractory_remaining = self.refractory;
            (true, true)
        } else {
            (false, false)
        }
    }
}

/// Streaming single-channel detector.
#[derive(Debug, Clone)]
pub struct Afcd {
    config: AfcdConfig,
    filters: ChannelFilters,
    adaptation: Adaptation,
    gate: Gate,
    lambda: f64,
    mu_effective: f64,
    samples: usize,
    last: Option<FilterTriple>,
}

impl Afcd {
    pub fn new(config: AfcdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            filters: ChannelFilters::new(&config)?,
            adaptation: Adaptation::new(config.mu_normalization, config.rng_seed),
            gate: Gate::new(config.refractory),
            lambda: 1.0,
            mu_effective: config.mu,
            samples: 0,
            last: None,
            config,
        })
    }

    pub fn config(&self) -> &AfcdConfig {
        &self.config
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu_effective(&self) -> f64 {
        self.mu_effective
    }

    pub fn flag(&self) -> bool {
        self.gate.flag()
    }

    pub fn refractory_remaining(&self) -> usize {
        self.gate.refractory_remaining()
    }

    pub fn samples_seen(&self) -> usize {
        self.samples
    }

    /// Filter estimates used by the most recent update.
    pub fn last_filters(&self) -> Option<FilterTriple> {
        self.last
    }

    /// Consumes one sample. Returns `None` until the filters are warm.
    pub fn step(&mut self, x: f64) -> Result<Option<AfcdOutput>> {
        if !x.is_finite() {
            return Err(Error::NonFiniteSample { value: x, channel: 0 });
        }
        let time = self.samples;
        self.samples += 1;
        let Some(f) = self.filters.push(x) else {
            return Ok(None);
        };
        self.last = Some(f);

        let cfg = &self.config;
        self.mu_effective = self.adaptation.effective_mu(cfg.mu, f.slow);
        let error = f.desired - convex_combine(self.lambda, f.fast, f.slow);
        let u = self.adaptation.draw();
        self.lambda = sslms_update(self.lambda, error, f.fast, f.slow, self.mu_effective, cfg.rho, u);

        let (state, fired) = self.gate.step(self.lambda, cfg.gamma);
        let event = fired.then(|| {
            self.adaptation.on_detection(f.slow);
            DetectionEvent::new(time, 0, self.lambda)
        });
        Ok(Some(AfcdOutput {
            time,
            lambda: self.lambda,
            state,
            event,
        }))
    }

    /// Runs over a whole series, returning the events.
    pub fn run(&mut self, samples: &[f64]) -> Result<Vec<DetectionEvent>> {
        let mut events = Vec::new();
        for &x in samples {
            if let Some(ev) = self.step(x)?.and_then(|o| o.event) {
                events.push(ev);
            }
        }
        Ok(events)
    }
}

impl Detector for Afcd {
    fn channels(&self) -> usize {
        1
    }

    fn push_sample(&mut self, sample: &[f64]) -> Result<Vec<DetectionEvent>> {
        if sample.len() != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                got: sample.len(),
            });
        }
        Ok(self.step(sample[0])?.and_then(|o| o.event).into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn convex_combine_examples() {
        assert_eq!(convex_combine(1.0, 7.0, 3.0), 7.0);
        assert_eq!(convex_combine(0.0, 7.0, 3.0), 3.0);
        assert_eq!(convex_combine(0.5, 2.0, 4.0), 3.0);
    }

    #[test]
    fn sslms_examples() {
        for u in [-3.0, 0.0, 2.5] {
            assert_eq!(sslms_update(0.37, 0.0, 2.0, 1.0, 0.1, 0.001, u), 0.37);
        }
        let l = sslms_update(0.5, 1.0, 1.3, 1.0, 0.1, 0.0, 0.0);
        assert!((l - 0.515).abs() < 1e-12);
        // 0.5 + 1 * 0.5 * 1 * 1.4 = 1.2 before clamping
        assert_eq!(sslms_update(0.5, 1.0, 2.4, 1.0, 1.0, 0.0, 0.0), 1.0);
        assert_eq!(sslms_update(0.5, -1.0, 2.4, 1.0, 1.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn threshold_examples() {
        assert!(threshold_state(0.85, 0.8));
        assert!(threshold_state(0.8, 0.8));
        assert!(!threshold_state(0.1, 0.8));
    }

    #[test]
    fn config_validation() {
        assert!(AfcdConfig::default().validate().is_ok());
        assert_eq!(AfcdConfig::default().refractory, 300);
        let bad = [
            AfcdConfig { mu: 0.0, ..Default::default() },
            AfcdConfig { fast_window: 250, ..Default::default() },
            AfcdConfig { gamma: 1.1, ..Default::default() },
            AfcdConfig { rho: -1.0, ..Default::default() },
            AfcdConfig { refractory: 0, ..Default::default() },
            AfcdConfig { desired_window: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(Afcd::new(cfg).is_err());
        }
    }

    #[test]
    fn desired_window_spans_td_plus_two_samples() {
        let cfg = AfcdConfig::default();
        let filters = ChannelFilters::new(&cfg).unwrap();
        assert_eq!(filters.desired.window_size(), 12);
    }

    #[test]
    fn constant_input_gives_abs_value_estimates() {
        let cfg = AfcdConfig {
            slow_window: 30,
            fast_window: 5,
            refractory: 36,
            ..Default::default()
        };
        let mut filters = ChannelFilters::new(&cfg).unwrap();
        let mut last = None;
        for i in 0..100 {
            last = filters.push(if i % 3 == 0 { -2.0 } else { 2.0 }).or(last);
        }
        let f = last.unwrap();
        assert!((f.fast - 2.0).abs() < 1e-12);
        assert!((f.slow - 2.0).abs() < 1e-12);
        assert!((f.desired - 2.0).abs() < 1e-12);

        let mut zero = ChannelFilters::new(&cfg).unwrap();
        let mut out = None;
        for _ in 0..100 {
            out = zero.push(0.0).or(out);
        }
        assert_eq!(out.unwrap().desired, 0.0);
    }

    #[test]
    fn warmup_and_first_output() {
        let cfg = AfcdConfig::default();
        let mut det = Afcd::new(cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..cfg.warmup() {
            let out = det.step(rng.random::<f64>() - 0.5).unwrap();
            assert_eq!(out.is_some(), i + 1 == cfg.warmup(), "sample {i}");
        }
    }

    #[test]
    fn non_finite_sample_rejected_without_state_change() {
        let mut det = Afcd::new(AfcdConfig::default()).unwrap();
        for i in 0..400 {
            det.step((i as f64 * 0.37).sin()).unwrap();
        }
        let before = (det.lambda(), det.samples_seen());
        assert!(det.step(f64::NAN).is_err());
        assert!(det.step(f64::NEG_INFINITY).is_err());
        assert_eq!(before, (det.lambda(), det.samples_seen()));
    }

    #[test]
    fn zero_error_keeps_lambda_constant_without_dither() {
        // Constant-magnitude input makes fast, slow and desired estimates equal, so e = 0.
        let cfg = AfcdConfig {
            rho: 0.0,
            ..Default::default()
        };
        let mut det = Afcd::new(cfg).unwrap();
        for i in 0..2000 {
            if let Some(out) = det.step(if i % 2 == 0 { 1.0 } else { -1.0 }).unwrap() {
                assert_eq!(out.lambda, 1.0);
            }
        }
    }
}
