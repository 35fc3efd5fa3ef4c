use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One detected change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    /// 0-based index of the sample whose arrival triggered the detection.
    pub detect_time: usize,
    /// Channel the event belongs to; 0 for univariate and network-level events.
    pub channel: usize,
    /// Estimated change location, when a location estimator was run.
    pub location_estimate: Option<usize>,
    /// Detector statistic at detection: lambda, psi, or the GLR log-likelihood ratio.
    pub statistic: f64,
}

impl DetectionEvent {
    pub fn new(detect_time: usize, channel: usize, statistic: f64) -> Self {
        Self {
            detect_time,
            channel,
            location_estimate: None,
            statistic,
        }
    }
}

/// Common streaming interface of the detectors, one multichannel sample per call.
pub trait Detector {
    fn channels(&self) -> usize;

    /// Feeds one time-aligned sample and returns every event it produced.
    fn push_sample(&mut self, sample: &[f64]) -> Result<Vec<DetectionEvent>>;

    /// Runs over a whole time-major series.
    fn run(&mut self, rows: &[Vec<f64>]) -> Result<Vec<DetectionEvent>> {
        let mut out = Vec::new();
        for row in rows {
            out.extend(self.push_sample(row)?);
        }
        Ok(out)
    }
}
