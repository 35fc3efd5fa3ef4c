//! Detection metrics, learning-rate calibration and protocol runners.
//!
//! Matching is greedy and one-to-one in time order: each true change `tau`
//! takes the earliest unmatched detection in `[tau, tau + match_window]`.
//! TP proportion is matched changes over true changes; FP proportion is
//! unmatched detections over detections.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::afcd::{Afcd, AfcdConfig};
use crate::cafcd::{Cafcd, CafcdConfig};
use crate::detector::{DetectionEvent, Detector};
use crate::error::{Error, Result};
use crate::glr::{merge_channel_events, GlrBank, GlrConfig};
use crate::synth::{gen_piecewise_gaussian, Scenario, SynthConfig};
use crate::vce::{annotate_events, channel_sigma_d, locate, VceConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub match_window: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { match_window: 300 }
    }
}

/// Pairing of detections with true changes for one series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// `(truth index, event index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub n_truths: usize,
    pub n_detections: usize,
}

/// Greedy one-to-one matching. Both inputs must be sorted by time.
pub fn match_pairs(detect_times: &[usize], truths: &[usize], config: &MatchConfig) -> Matching {
    let mut used = vec![false; detect_times.len()];
    let mut pairs = Vec::new();
    let mut start = 0;
    for (ti, &tau) in truths.iter().enumerate() {
        while start < detect_times.len() && detect_times[start] < tau {
            start += 1;
        }
        let hit = (start..detect_times.len())
            .take_while(|&i| detect_times[i] <= tau + config.match_window)
            .find(|&i| !used[i]);
        if let Some(i) = hit {
            used[i] = true;
            pairs.push((ti, i));
        }
    }
    Matching {
        pairs,
        n_truths: truths.len(),
        n_detections: detect_times.len(),
    }
}

/// Aggregated metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_truths: usize,
    pub n_detections: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub tp_proportion: f64,
    pub fp_proportion: f64,
    pub mean_latency: Option<f64>,
    pub median_latency: Option<f64>,
    pub mean_abs_location_error: Option<f64>,
    pub n_located: usize,
}

/// Pools raw matches over many series.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    n_truths: usize,
    n_detections: usize,
    true_positives: usize,
    latencies: Vec<usize>,
    location_errors: Vec<f64>,
}

impl MetricsAccumulator {
    pub fn add(&mut self, events: &[DetectionEvent], truths: &[usize], config: &MatchConfig) {
        let mut events = events.to_vec();
        events.sort_by_key(|e| e.detect_time);
        let mut truths = truths.to_vec();
        truths.sort_unstable();
        let times: Vec<usize> = events.iter().map(|e| e.detect_time).collect();
        let m = match_pairs(&times, &truths, config);
        self.n_truths += m.n_truths;
        self.n_detections += m.n_detections;
        self.true_positives += m.pairs.len();
        for &(ti, ei) in &m.pairs {
            let tau = truths[ti];
            self.latencies.push(events[ei].detect_time - tau);
            if let Some(loc) = events[ei].location_estimate {
                self.location_errors.push((loc as f64 - tau as f64).abs());
            }
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.n_truths += other.n_truths;
        self.n_detections += other.n_detections;
        self.true_positives += other.true_positives;
        self.latencies.extend(other.latencies);
        self.location_errors.extend(other.location_errors);
        self
    }

    pub fn latencies(&self) -> &[usize] {
        &self.latencies
    }

    pub fn report(&self) -> MetricsReport {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let fp = self.n_detections - self.true_positives;
        MetricsReport {
            n_truths: self.n_truths,
            n_detections: self.n_detections,
            true_positives: self.true_positives,
            false_positives: fp,
            tp_proportion: ratio(self.true_positives, self.n_truths),
            fp_proportion: ratio(fp, self.n_detections),
            mean_latency: mean(self.latencies.iter().map(|&l| l as f64)),
            median_latency: median(self.latencies.iter().map(|&l| l as f64).collect()),
            mean_abs_location_error: mean(self.location_errors.iter().copied()),
            n_located: self.location_errors.len(),
        }
    }
}

pub fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Median; the two middle values are averaged for even counts.
pub fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Metrics for a single series.
pub fn match_detections(events: &[DetectionEvent], truths: &[usize], config: &MatchConfig) -> MetricsReport {
    let mut acc = MetricsAccumulator::default();
    acc.add(events, truths, config);
    acc.report()
}

/// Result of a learning-rate calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub mu: f64,
    pub rate: f64,
}

/// Largest `mu` in `grid` whose false-positive rate (as measured by `rate_of`)
/// does not exceed `target`.
///
/// The rate is not monotone in `mu` (with `lambda` starting at 1 a tiny `mu`
/// keeps firing), so no bracketing is assumed. Points are visited from the
/// largest down and the scan stops at the first feasible one. When no point
/// qualifies, the error names the point with the lowest rate.
pub fn calibrate_mu<F>(grid: &[f64], target: f64, mut rate_of: F) -> Result<Calibration>
where
    F: FnMut(f64) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::Empty("mu grid"));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut lowest: Option<Calibration> = None;
    for mu in sorted {
        let rate = rate_of(mu)?;
        let c = Calibration { mu, rate };
        if rate <= target {
            return Ok(c);
        }
        if lowest.is_none_or(|l| rate < l.rate) {
            lowest = Some(c);
        }
    }
    let l = lowest.expect("non-empty grid");
    Err(Error::NoFeasibleMu {
        target,
        best_mu: l.mu,
        best_rate: l.rate,
    })
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) || n == 0 {
        return Err(Error::param("grid", "need 0 < lo <= hi and n >= 1"));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi / lo).ln() / (n - 1) as f64;
    Ok((0..n).map(|i| lo * (step * i as f64).exp()).collect())
}

/// A detector configuration that can be run on any scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DetectorSpec {
    /// Univariate detector on channel 0.
    Afcd(AfcdConfig),
    /// Cooperative detector over all channels, uniform combiner.
    Cafcd(AfcdConfig),
    /// One GLR per channel; events within `window` samples are fused.
    Glr(GlrConfig),
}

impl DetectorSpec {
    pub fn with_mu(&self, mu: f64) -> Self {
        match self {
            Self::Afcd(c) => Self::Afcd(c.clone().with_mu(mu)),
            Self::Cafcd(c) => Self::Cafcd(c.clone().with_mu(mu)),
            Self::Glr(c) => Self::Glr(*c),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            Self::Afcd(c) => Self::Afcd(c.clone().with_seed(seed)),
            Self::Cafcd(c) => Self::Cafcd(c.clone().with_seed(seed)),
            Self::Glr(c) => Self::Glr(*c),
        }
    }

    /// Runs on time-major rows. AFCD/CAFCD events are located with `vce` when given.
    pub fn run(&self, rows: &[Vec<f64>], vce: Option<&VceConfig>) -> Result<Vec<DetectionEvent>> {
        let n_channels = rows.first().map_or(0, Vec::len);
        if n_channels == 0 {
            return Err(Error::Empty("samples"));
        }
        let mut events = match self {
            Self::Afcd(c) => {
                let col: Vec<f64> = rows.iter().map(|r| r[0]).collect();
                Afcd::new(c.clone())?.run(&col)?
            }
            Self::Cafcd(c) => Cafcd::new(CafcdConfig::uniform(c, n_channels)?)?.run(rows)?,
            Self::Glr(c) => {
                let raw = GlrBank::new(*c, n_channels)?.run(rows)?;
                return Ok(if n_channels == 1 { raw } else { merge_channel_events(&raw, c.window) });
            }
        };
        if let Some(v) = vce {
            let rows_used: Vec<Vec<f64>> = match self {
                Self::Afcd(_) => rows.iter().map(|r| vec![r[0]]).collect(),
                _ => rows.to_vec(),
            };
            let sd = channel_sigma_d(&rows_used, v.window)?;
            annotate_events(&mut events, &sd, v, false);
        }
        Ok(events)
    }
}

/// `n` protocol scenarios with seeds `base_seed, base_seed + 1, ...`.
pub fn protocol_scenarios(template: &SynthConfig, n: usize, base_seed: u64) -> Result<Vec<Scenario>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| gen_piecewise_gaussian(&template.clone().with_seed(base_seed + i)))
        .collect()
}

/// Pooled metrics of `detector` over `scenarios`. The detector seed is offset
/// by each scenario's seed so runs stay independent and reproducible.
pub fn evaluate(
    detector: &DetectorSpec,
    scenarios: &[Scenario],
    match_config: &MatchConfig,
    vce: Option<&VceConfig>,
) -> Result<MetricsAccumulator> {
    scenarios
        .par_iter()
        .map(|s| {
            let ev = detector.with_seed(s.seed).run(&s.samples, vce)?;
            let mut acc = MetricsAccumulator::default();
            acc.add(&ev, &s.change_times, match_config);
            Ok(acc)
        })
        .try_reduce(MetricsAccumulator::default, |a, b| Ok(a.merge(b)))
}

/// Absolute VCE errors with the scan anchored at every true change whose
/// window fits inside the series.
pub fn anchored_location_errors(scenario: &Scenario, vce: &VceConfig) -> Result<Vec<f64>> {
    let sd = channel_sigma_d(&scenario.samples, vce.window)?;
    Ok(scenario
        .change_times
        .iter()
        .filter_map(|&tau| locate(&sd, tau, vce).map(|loc| (loc as f64 - tau as f64).abs()))
        .collect())
}

/// Detections per sample on stationary surrogates.
pub fn stationary_event_rate(detector: &DetectorSpec, scenarios: &[Scenario]) -> Result<f64> {
    let (events, samples) = scenarios
        .par_iter()
        .map(|s| {
            let n = detector.with_seed(s.seed).run(&s.samples, None)?.len();
            Ok((n, s.len()))
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    Ok(if samples == 0 { 0.0 } else { events as f64 / samples as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: usize) -> DetectionEvent {
        DetectionEvent::new(t, 0, 1.0)
    }

    #[test]
    fn matching_examples() {
        let cfg = MatchConfig::default();
        let r = match_detections(&[], &[1000], &cfg);
        assert_eq!((r.tp_proportion, r.fp_proportion, r.mean_latency), (0.0, 0.0, None));

        let r = match_detections(&[ev(1010)], &[1000], &cfg);
        assert_eq!((r.tp_proportion, r.fp_proportion), (1.0, 0.0));
        assert_eq!(r.mean_latency, Some(10.0));

        let r = match_detections(&[ev(1010), ev(1050)], &[1000], &cfg);
        assert_eq!((r.true_positives, r.false_positives), (1, 1));
        assert_eq!(r.mean_latency, Some(10.0));
    }

    #[test]
    fn detection_before_truth_or_after_window_is_fp() {
        let cfg = MatchConfig::default();
        let r = match_detections(&[ev(999), ev(1301)], &[1000], &cfg);
        assert_eq!((r.true_positives, r.false_positives), (0, 2));
        let r = match_detections(&[ev(1300)], &[1000], &cfg);
        assert_eq!(r.true_positives, 1);
    }

    #[test]
    fn one_detection_serves_one_truth() {
        let cfg = MatchConfig::default();
        let r = match_detections(&[ev(1100)], &[1000, 1050], &cfg);
        assert_eq!(r.true_positives, 1);
        assert_eq!(r.mean_latency, Some(100.0));
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(vec![]), None);
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn calibration_picks_largest_feasible() {
        let grid = [0.1, 0.2, 0.4, 0.8, 1.6];
        let rate = |mu: f64| Ok(mu / 10.0);
        let c = calibrate_mu(&grid, 0.05, rate).unwrap();
        assert_eq!(c.mu, 0.4);
        // U-shaped rate: the low end is feasible too, the largest feasible wins
        let u = |mu: f64| Ok(if mu < 0.15 { 0.0 } else if mu < 0.5 { 0.01 } else { 0.3 });
        assert_eq!(calibrate_mu(&grid, 0.05, u).unwrap().mu, 0.4);
        let bowl = |mu: f64| Ok((mu.ln() - 0.4f64.ln()).abs());
        assert_eq!(calibrate_mu(&grid, 0.0, bowl).unwrap().mu, 0.4);
        let err = calibrate_mu(&grid, 0.001, rate).unwrap_err();
        assert!(matches!(err, Error::NoFeasibleMu { best_mu, .. } if best_mu == 0.1));
        assert!(calibrate_mu(&[], 0.1, rate).is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.01, 10.0, 4).unwrap();
        assert_eq!(g.len(), 4);
        assert!((g[0] - 0.01).abs() < 1e-15);
        assert!((g[3] - 10.0).abs() < 1e-12);
        assert!((g[1] - 0.1).abs() < 1e-12);
        assert!(log_grid(0.0, 1.0, 3).is_err());
    }
}
