//! Sliding-window generalized likelihood ratio test for a change in the
//! variance of a zero-mean Gaussian sequence.
//!
//! For a window of `W` samples split after `k`, with `S_0`, `S_1`, `S_2` the sums
//! of squares of the whole window and the two parts,
//!
//! ```text
//! D(k) = 1/2 (W ln(S_0 / W) - k ln(S_1 / k) - (W - k) ln(S_2 / (W - k)))
//! ```
//!
//! which is the log-likelihood ratio of the two-variance fit against the pooled
//! fit. The streaming detector uses `W = 2L`, scans splits in `[L/2, 3L/2]` and
//! fires when the maximum exceeds `h`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::detector::{DetectionEvent, Detector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlrConfig {
    /// Half-window `L`; the test window holds `2L` samples.
    pub window: usize,
    /// Detection threshold `h` on `max_k D(k)`.
    pub threshold: f64,
    pub refractory: usize,
    /// Shortest segment allowed when locating the change after a detection.
    pub min_location_segment: usize,
}

impl Default for GlrConfig {
    fn default() -> Self {
        Self {
            window: 250,
            threshold: 5.0,
            refractory: 250,
            min_location_segment: 10,
        }
    }
}

impl GlrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 4 {
            return Err(Error::param("window", "must be >= 4"));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::param("threshold", "must be > 0"));
        }
        if self.min_location_segment == 0 || self.min_location_segment > self.window / 2 {
            return Err(Error::param(
                "min_location_segment",
                "must lie in [1, window / 2]",
            ));
        }
        Ok(())
    }

    /// Split range `[L/2, 3L/2]` scanned for detection.
    pub fn detection_splits(&self) -> (usize, usize) {
        let lo = self.window / 2;
        (lo, 2 * self.window - lo)
    }
}

#[inline]
fn llr(total: f64, first: f64, w: usize, k: usize) -> Option<f64> {
    let second = total - first;
    if first <= 0.0 || second <= 0.0 {
        return None;
    }
    let (wf, kf) = (w as f64, k as f64);
    let rf = wf - kf;
    Some(0.5 * (wf * (total / wf).ln() - kf * (first / kf).ln() - rf * (second / rf).ln()))
}

/// `D(split)` for `window`, where `split` counts the samples of the first part.
pub fn glr_statistic(window: &[f64], split: usize) -> Result<f64> {
    let w = window.len();
    if split == 0 || split >= w {
        return Err(Error::param("split", format!("must lie in [1, {}], got {split}", w.saturating_sub(1))));
    }
    if let Some(&v) = window.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSample { value: v, channel: 0 });
    }
    let first: f64 = window[..split].iter().map(|x| x * x).sum();
    let second: f64 = window[split..].iter().map(|x| x * x).sum();
    llr(first + second, first, w, split)
        .ok_or_else(|| Error::Degenerate("zero variance on one side of the split".into()))
}

/// `(argmax, max)` of `D(split)` over splits in `[lo, hi]`; earliest split on ties.
pub fn glr_locate(window: &[f64], lo: usize, hi: usize) -> Result<(usize, f64)> {
    if let Some(&v) = window.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSample { value: v, channel: 0 });
    }
    if lo == 0 || lo > hi || hi >= window.len() {
        return Err(Error::param("split range", format!("need 1 <= lo <= hi < {}", window.len())));
    }
    let mut prefix = Vec::with_capacity(window.len() + 1);
    prefix.push(0.0);
    for x in window {
        prefix.push(prefix.last().copied().unwrap_or(0.0) + x * x);
    }
    scan(&prefix, lo, hi).ok_or_else(|| Error::Degenerate("every split has a zero-variance side".into()))
}

/// `(argmax, max)` of `D(k)` over `k` in `[lo, hi]` from prefix sums of squares.
fn scan(prefix: &[f64], lo: usize, hi: usize) -> Option<(usize, f64)> {
    let w = prefix.len() - 1;
    let total = prefix[w];
    let mut best: Option<(usize, f64)> = None;
    for k in lo..=hi.min(w - 1) {
        if let Some(d) = llr(total, prefix[k], w, k) {
            if best.is_none_or(|(_, b)| d > b) {
                best = Some((k, d));
            }
        }
    }
    best
}

/// Per-sample output of [`Glr`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlrOutput {
    pub time: usize,
    /// `max_k D(k)` over the detection splits; `None` when every split is degenerate.
    pub statistic: Option<f64>,
    pub event: Option<DetectionEvent>,
}

/// Streaming single-channel GLR detector.
#[derive(Debug, Clone)]
pub struct Glr {
    config: GlrConfig,
    channel: usize,
    squares: VecDeque<f64>,
    prefix: Vec<f64>,
    refractory_remaining: usize,
    samples: usize,
}

impl Glr {
    pub fn new(config: GlrConfig) -> Result<Self> {
        Self::for_channel(config, 0)
    }

    pub fn for_channel(config: GlrConfig, channel: usize) -> Result<Self> {
        config.validate()?;
        let w = 2 * config.window;
        Ok(Self {
            config,
            channel,
            squares: VecDeque::with_capacity(w + 1),
            prefix: vec![0.0; w + 1],
            refractory_remaining: 0,
            samples: 0,
        })
    }

    pub fn config(&self) -> &GlrConfig {
        &self.config
    }

    pub fn step(&mut self, x: f64) -> Result<Option<GlrOutput>> {
        if !x.is_finite() {
            return Err(Error::NonFiniteSample {
                value: x,
                channel: self.channel,
            });
        }
        let time = self.samples;
        self.samples += 1;
        let w = 2 * self.config.window;
        self.squares.push_back(x * x);
        if self.squares.len() > w {
            self.squares.pop_front();
        }
        if self.squares.len() < w {
            return Ok(None);
        }
        if self.refractory_remaining > 0 {
            self.refractory_remaining -= 1;
            return Ok(Some(GlrOutput {
                time,
                statistic: None,
                event: None,
            }));
        }
        for (i, s) in self.squares.iter().enumerate() {
            self.prefix[i + 1] = self.prefix[i] + s;
        }
        let (lo, hi) = self.config.detection_splits();
        let best = scan(&self.prefix, lo, hi);
        let statistic = best.map(|(_, d)| d);
        let mut event = None;
        if let Some((_, d)) = best.filter(|&(_, d)| d > self.config.threshold) {
            let m = self.config.min_location_segment;
            let (k, _) = scan(&self.prefix, m, w - m).expect("detection split is in range");
            let start = time + 1 - w;
            event = Some(DetectionEvent {
                detect_time: time,
                channel: self.channel,
                location_estimate: Some(start + k),
                statistic: d,
            });
            self.refractory_remaining = self.config.refractory;
        }
        Ok(Some(GlrOutput {
            time,
            statistic,
            event,
        }))
    }

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

impl Detector for Glr {
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

/// Independent GLR detectors, one per channel.
#[derive(Debug, Clone)]
pub struct GlrBank {
    detectors: Vec<Glr>,
}

impl GlrBank {
    pub fn new(config: GlrConfig, n_channels: usize) -> Result<Self> {
        if n_channels == 0 {
            return Err(Error::param("n_channels", "must be >= 1"));
        }
        let detectors = (0..n_channels)
            .map(|c| Glr::for_channel(config, c))
            .collect::<Result<_>>()?;
        Ok(Self { detectors })
    }
}

impl Detector for GlrBank {
    fn channels(&self) -> usize {
        self.detectors.len()
    }

    fn push_sample(&mut self, sample: &[f64]) -> Result<Vec<DetectionEvent>> {
        if sample.len() != self.detectors.len() {
            return Err(Error::ChannelMismatch {
                expected: self.detectors.len(),
                got: sample.len(),
            });
        }
        if let Some((c, &v)) = sample.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteSample { value: v, channel: c });
        }
        let mut out = Vec::new();
        for (d, &x) in self.detectors.iter_mut().zip(sample) {
            out.extend(d.step(x)?.and_then(|o| o.event));
        }
        Ok(out)
    }
}

/// Fuses per-channel events into network-level events: an event within `gap`
/// samples of the current cluster's first event joins that cluster. Each
/// cluster reports its first detection time, the rounded mean of the member
/// locations and the largest statistic.
pub fn merge_channel_events(events: &[DetectionEvent], gap: usize) -> Vec<DetectionEvent> {
    let mut sorted = events.to_vec();
    sorted.sort_by_key(|e| (e.detect_time, e.channel));
    let mut out: Vec<DetectionEvent> = Vec::new();
    let mut members: Vec<usize> = Vec::new();
    let flush = |out: &mut Vec<DetectionEvent>, members: &mut Vec<usize>| {
        if let Some(last) = out.last_mut() {
            last.location_estimate = crate::vce::multichannel_location(members).ok();
        }
        members.clear();
    };
    for ev in sorted {
        match out.last_mut() {
            Some(head) if ev.detect_time - head.detect_time <= gap => {
                head.statistic = head.statistic.max(ev.statistic);
                members.extend(ev.location_estimate);
            }
            _ => {
                flush(&mut out, &mut members);
                members.extend(ev.location_estimate);
                out.push(DetectionEvent { channel: 0, ..ev });
            }
        }
    }
    flush(&mut out, &mut members);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_halves_give_zero() {
        let w: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.5 } else { -1.5 }).collect();
        assert!(glr_statistic(&w, 10).unwrap().abs() < 1e-12);
        assert!(glr_statistic(&w, 6).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hand_computed_value() {
        // S1 = 4 (k = 4), S2 = 16 (4 samples of 2), W = 8, S0 = 20
        let w = [1.0, -1.0, 1.0, -1.0, 2.0, -2.0, 2.0, -2.0];
        let expected = 0.5 * (8.0 * (20.0f64 / 8.0).ln() - 4.0 * 1.0f64.ln() - 4.0 * 4.0f64.ln());
        assert!((glr_statistic(&w, 4).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_bad_split() {
        let w = [0.0, 0.0, 1.0, 1.0];
        assert!(matches!(glr_statistic(&w, 2), Err(Error::Degenerate(_))));
        assert!(glr_statistic(&w, 0).is_err());
        assert!(glr_statistic(&w, 4).is_err());
    }

    fn exact_step(n: usize, tau: usize, s1: f64, s2: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let s = if i < tau { s1 } else { s2 };
                if i % 2 == 0 { s } else { -s }
            })
            .collect()
    }

    #[test]
    fn locate_exact_steps() {
        for tau in [10, 37, 50, 81, 90] {
            for (s1, s2) in [(1.0, 3.0), (2.0, 1.0)] {
                let w = exact_step(100, tau, s1, s2);
                assert_eq!(glr_locate(&w, 10, 90).unwrap().0, tau);
            }
        }
        assert!(glr_locate(&[1.0; 10], 0, 5).is_err());
        assert!(glr_locate(&[1.0; 10], 3, 10).is_err());
    }

    #[test]
    fn streaming_detection_on_exact_step() {
        let cfg = GlrConfig {
            window: 50,
            ..Default::default()
        };
        let mut glr = Glr::new(cfg).unwrap();
        let tau = 300;
        let ev = glr.run(&exact_step(600, tau, 1.0, 3.0)).unwrap();
        assert_eq!(ev.len(), 1);
        assert!(ev[0].detect_time >= tau);
        // the change may still sit within the minimum segment of the window edge
        let loc = ev[0].location_estimate.unwrap();
        assert!(loc.abs_diff(tau) <= cfg.min_location_segment, "{loc}");
    }

    #[test]
    fn config_validation() {
        assert!(GlrConfig::default().validate().is_ok());
        assert_eq!(GlrConfig::default().detection_splits(), (125, 375));
        assert!(GlrConfig { window: 3, ..Default::default() }.validate().is_err());
        assert!(GlrConfig { threshold: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn merge_clusters_nearby_events() {
        let mk = |t, c, loc| DetectionEvent {
            detect_time: t,
            channel: c,
            location_estimate: Some(loc),
            statistic: 6.0,
        };
        let ev = [mk(100, 0, 90), mk(120, 1, 94), mk(1000, 1, 980)];
        let merged = merge_channel_events(&ev, 250);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].detect_time, 100);
        assert_eq!(merged[0].location_estimate, Some(92));
        assert_eq!(merged[1].location_estimate, Some(980));
    }
}
