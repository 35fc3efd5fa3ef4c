//! Windowed FIR volatility filters.
//!
//! A volatility filter estimates the instantaneous standard deviation as the
//! square root of a weighted sum of the most recent squared samples:
//!
//! ```text
//! sigma^2(t) = w_1 x_t^2 + w_2 x_{t-1}^2 + ... + w_T x_{t-T+1}^2
//! ```
//!
//! Weights are stored newest-sample-first, so `weights[0]` multiplies `x_t^2`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the fast/slow filter pair used by the detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    /// Fast filter weights the newest samples most, slow filter the oldest.
    #[default]
    Triangular,
    /// Square windows with the unbiased `1/(T-1)` normalization.
    Uniform,
}

impl WeightScheme {
    pub fn fast(self, window: usize) -> Result<WeightVector> {
        match self {
            WeightScheme::Triangular => WeightVector::triangular_fast(window),
            WeightScheme::Uniform => WeightVector::uniform(window),
        }
    }

    pub fn slow(self, window: usize) -> Result<WeightVector> {
        match self {
            WeightScheme::Triangular => WeightVector::triangular_slow(window),
            WeightScheme::Uniform => WeightVector::uniform(window),
        }
    }
}

impl std::str::FromStr for WeightScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "triangular" | "tri" => Ok(WeightScheme::Triangular),
            "uniform" | "square" => Ok(WeightScheme::Uniform),
            other => Err(format!("unknown weight scheme `{other}`")),
        }
    }
}

/// FIR weights of a volatility filter, newest sample first.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

fn check_window(window: usize) -> Result<()> {
    if window < 2 {
        return Err(Error::param("window", format!("must be >= 2, got {window}")));
    }
    Ok(())
}

impl WeightVector {
    /// Square window with every coefficient `1/(T-1)`; the weights sum to `T/(T-1)`.
    pub fn uniform(window: usize) -> Result<Self> {
        check_window(window)?;
        let w = 1.0 / (window - 1) as f64;
        Ok(Self {
            weights: vec![w; window],
        })
    }

    /// Plain moving average, every coefficient `1/T`.
    pub fn averaging(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::param("window", "must be >= 1"));
        }
        Ok(Self {
            weights: vec![1.0 / window as f64; window],
        })
    }

    /// Triangular weights rising with sample age: the k-th newest sample gets
    /// `k / (T(T+1)/2)`.
    pub fn triangular_slow(window: usize) -> Result<Self> {
        check_window(window)?;
        let norm = (window * (window + 1) / 2) as f64;
        Ok(Self {
            weights: (1..=window).map(|k| k as f64 / norm).collect(),
        })
    }

    /// Triangular weights falling with sample age: the k-th newest sample gets
    /// `(T-k+1) / (T(T+1)/2)`.
    pub fn triangular_fast(window: usize) -> Result<Self> {
        check_window(window)?;
        let norm = (window * (window + 1) / 2) as f64;
        Ok(Self {
            weights: (1..=window).rev().map(|k| k as f64 / norm).collect(),
        })
    }

    /// Arbitrary weights; every coefficient must be finite and strictly positive.
    pub fn from_vec(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("weight vector"));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::param("weights", format!("coefficient {w} is not > 0")));
        }
        Ok(Self { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn reversed(&self) -> Self {
        Self {
            weights: self.weights.iter().rev().copied().collect(),
        }
    }
}

/// Streaming volatility filter over a fixed-capacity window of squared samples.
#[derive(Debug, Clone)]
pub struct VolatilityFilter {
    weights: WeightVector,
    /// Squared samples, newest at the front.
    window: VecDeque<f64>,
    fill_count: u64,
}

impl VolatilityFilter {
    pub fn new(weights: WeightVector) -> Self {
        let cap = weights.len();
        Self {
            weights,
            window: VecDeque::with_capacity(cap),
            fill_count: 0,
        }
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn window_size(&self) -> usize {
        self.weights.len()
    }

    pub fn fill_count(&self) -> u64 {
        self.fill_count
    }

    pub fn is_warm(&self) -> bool {
        self.window.len() == self.weights.len()
    }

    /// Pushes one sample and returns the volatility estimate, or `None` while
    /// the window is still filling. A non-finite sample leaves the state untouched.
    pub fn push(&mut self, x: f64) -> Result<Option<f64>> {
        if !x.is_finite() {
            return Err(Error::NonFiniteSample {
                value: x,
                channel: 0,
            });
        }
        if self.window.len() == self.weights.len() {
            self.window.pop_back();
        }
        self.window.push_front(x * x);
        self.fill_count += 1;
        Ok(self.variance().map(f64::sqrt))
    }

    /// Current `sigma^2` estimate, `None` during warm-up.
    pub fn variance(&self) -> Option<f64> {
        if !self.is_warm() {
            return None;
        }
        let v: f64 = self
            .window
            .iter()
            .zip(self.weights.as_slice())
            .map(|(x2, w)| x2 * w)
            .sum();
        debug_assert!(v >= 0.0);
        Some(v)
    }

    /// Current `sigma` estimate, `None` during warm-up.
    pub fn output(&self) -> Option<f64> {
        self.variance().map(f64::sqrt)
    }

    pub fn reset(&mut self) {
        self.window.clear();
        self.fill_count = 0;
    }
}

/// `sigma_D(t) = sigma(t) - sigma(t - lag)` for the newest entry of `history`.
///
/// `history` holds defined filter outputs in time order; returns `None` when
/// fewer than `lag + 1` values are available.
pub fn differenced_output(history: &[f64], lag: usize) -> Option<f64> {
    let n = history.len();
    if n < lag + 1 {
        return None;
    }
    Some(history[n - 1] - history[n - 1 - lag])
}

/// Streaming differenced volatility filter: a square-window filter of size `T_l`
/// followed by a lag-`T_l` difference of its output.
#[derive(Debug, Clone)]
pub struct DifferencedFilter {
    filter: VolatilityFilter,
    lag: usize,
    /// Last `lag + 1` defined outputs of `filter`, oldest first.
    outputs: VecDeque<f64>,
}

impl DifferencedFilter {
    pub fn new(window: usize) -> Result<Self> {
        Ok(Self {
            filter: VolatilityFilter::new(WeightVector::uniform(window)?),
            lag: window,
            outputs: VecDeque::with_capacity(window + 1),
        })
    }

    pub fn window(&self) -> usize {
        self.lag
    }

    /// Number of samples consumed before the first defined output (`2 T_l`).
    pub fn warmup(&self) -> usize {
        2 * self.lag
    }

    pub fn push(&mut self, x: f64) -> Result<Option<f64>> {
        let Some(sigma) = self.filter.push(x)? else {
            return Ok(None);
        };
        if self.outputs.len() == self.lag + 1 {
            self.outputs.pop_front();
        }
        self.outputs.push_back(sigma);
        if self.outputs.len() < self.lag + 1 {
            return Ok(None);
        }
        Ok(Some(self.outputs[self.lag] - self.outputs[0]))
    }
}

/// Runs a differenced filter over a whole series. Entry `i` of the result is
/// `sigma_D` at time `i`, `NaN` during warm-up.
pub fn differenced_series(samples: &[f64], window: usize) -> Result<Vec<f64>> {
    let mut filt = DifferencedFilter::new(window)?;
    samples
        .iter()
        .map(|&x| filt.push(x).map(|v| v.unwrap_or(f64::NAN)))
        .collect()
}
