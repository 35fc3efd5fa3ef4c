//! Change-point location from the differenced volatility filter.
//!
//! With a square window of `T_l` samples, `sigma_D(t) = sigma_l(t) - sigma_l(t - T_l)`
//! is largest in magnitude when the newer window lies entirely after the change
//! and the older one entirely before it, i.e. at `t = tau + T_l - 1`. The
//! estimator scans `|sigma_D|` over a window following a detection and maps the
//! peak back to `tau_hat = argmax - T_l + 1`.

use serde::{Deserialize, Serialize};

use crate::detector::DetectionEvent;
use crate::error::{Error, Result};
use crate::filters::differenced_series;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VceConfig {
    /// Differencing window `T_l`.
    pub window: usize,
    /// Samples scanned after the anchor; the scan covers `span + 1` indices.
    pub search_span: usize,
}

impl VceConfig {
    /// `search_span = 2 T_l`.
    pub fn new(window: usize) -> Self {
        Self {
            window,
            search_span: 2 * window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::param("window", "must be >= 2"));
        }
        if self.search_span < self.window {
            return Err(Error::param("search_span", "must be >= window"));
        }
        Ok(())
    }
}

impl Default for VceConfig {
    fn default() -> Self {
        Self::new(20)
    }
}

/// Location estimate from a `sigma_D` series indexed by sample time (`NaN`
/// where undefined), scanning `[anchor, anchor + search_span]`.
///
/// Returns `InsufficientHistory` when the scan window runs past the series.
/// Ties resolve to the earliest index.
pub fn vce_estimate(sigma_d: &[f64], anchor: usize, config: &VceConfig) -> Result<usize> {
    config.validate()?;
    let end = anchor + config.search_span;
    if end >= sigma_d.len() {
        return Err(Error::InsufficientHistory {
            needed: end + 1,
            available: sigma_d.len(),
        });
    }
    let mut best: Option<(usize, f64)> = None;
    for (t, v) in sigma_d.iter().enumerate().take(end + 1).skip(anchor) {
        if v.is_nan() {
            continue;
        }
        let a = v.abs();
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((t, a));
        }
    }
    let (peak, _) = best.ok_or(Error::InsufficientHistory {
        needed: 2 * config.window,
        available: anchor,
    })?;
    Ok((peak + 1).saturating_sub(config.window))
}

/// Round-half-up mean of per-channel estimates.
pub fn multichannel_location(estimates: &[usize]) -> Result<usize> {
    if estimates.is_empty() {
        return Err(Error::Empty("channel estimates"));
    }
    let n = estimates.len() as u128;
    let sum: u128 = estimates.iter().map(|&e| e as u128).sum();
    Ok(((2 * sum + n) / (2 * n)) as usize)
}

/// Per-channel `sigma_D` series of a time-major sample matrix.
pub fn channel_sigma_d(rows: &[Vec<f64>], window: usize) -> Result<Vec<Vec<f64>>> {
    let n_channels = rows.first().map_or(0, Vec::len);
    (0..n_channels)
        .map(|c| {
            let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            differenced_series(&col, window)
        })
        .collect()
}

/// Location estimate at `anchor` averaged over the channels whose scan window
/// is complete. `None` when no channel has enough data.
pub fn locate(sigma_d: &[Vec<f64>], anchor: usize, config: &VceConfig) -> Option<usize> {
    let per_channel: Vec<usize> = sigma_d
        .iter()
        .filter_map(|s| vce_estimate(s, anchor, config).ok())
        .collect();
    multichannel_location(&per_channel).ok()
}

/// Fills `location_estimate` of every event, scanning after its detection time.
///
/// Events carrying a channel id other than 0 in a multichannel series use
/// only their own channel.
pub fn annotate_events(
    events: &mut [DetectionEvent],
    sigma_d: &[Vec<f64>],
    config: &VceConfig,
    per_channel: bool,
) {
    for ev in events {
        ev.location_estimate = if per_channel {
            sigma_d
                .get(ev.channel)
                .and_then(|s| vce_estimate(s, ev.detect_time, config).ok())
        } else {
            locate(sigma_d, ev.detect_time, config)
        };
    }
}
