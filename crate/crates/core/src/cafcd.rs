//! Cooperative multichannel detector.
//!
//! Every channel runs the fast/slow/desired filter bank of [`crate::afcd`], but
//! the convex weight is shared: each channel adapts from the combined weight
//! `psi`, and the per-channel results are recombined (combine-then-adapt):
//!
//! ```text
//! lambda_c(t + 1) = clamp01(psi(t) + mu_c (|psi(t)| + rho_c u_c) e_c(t) (sigma_fc(t) - sigma_sc(t)))
//! psi(t + 1)      = sum_c g_c lambda_c(t + 1)
//! ```
//!
//! Detection and refractory handling act on `psi` and are shared by the network.

use serde::{Deserialize, Serialize};

use crate::afcd::{
    convex_combine, sslms_update, Adaptation, AfcdConfig, ChannelFilters, FilterTriple, Gate,
};
use crate::detector::{DetectionEvent, Detector};
use crate::error::{Error, Result};

/// Per-channel detector settings plus the convex combiner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CafcdConfig {
    pub channels: Vec<AfcdConfig>,
    pub combiner: Vec<f64>,
}

/// Seed of channel `c` derived from a master seed. Channel 0 keeps the master seed.
pub fn channel_seed(master: u64, channel: usize) -> u64 {
    if channel == 0 {
        return master;
    }
    // splitmix64 finalizer
    let mut z = master ^ (channel as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl CafcdConfig {
    /// Full cooperation: identical settings on every channel, uniform combiner,
    /// and independent noise streams derived from `base.rng_seed`.
    pub fn uniform(base: &AfcdConfig, n_channels: usize) -> Result<Self> {
        if n_channels == 0 {
            return Err(Error::param("n_channels", "must be >= 1"));
        }
        let channels = (0..n_channels)
            .map(|c| AfcdConfig {
                rng_seed: channel_seed(base.rng_seed, c),
                ..base.clone()
            })
            .collect();
        Ok(Self {
            channels,
            combiner: vec![1.0 / n_channels as f64; n_channels],
        })
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::param("channels", "at least one channel required"));
        }
        for c in &self.channels {
            c.validate()?;
        }
        if self.combiner.len() != self.channels.len() {
            return Err(Error::ChannelMismatch {
                expected: self.channels.len(),
                got: self.combiner.len(),
            });
        }
        if self.combiner.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::param("combiner", "weights must be finite and >= 0"));
        }
        let sum: f64 = self.combiner.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::param("combiner", format!("weights must sum to 1, got {sum}")));
        }
        let (g0, r0) = (self.channels[0].gamma, self.channels[0].refractory);
        if self.channels.iter().any(|c| c.gamma != g0 || c.refractory != r0) {
            return Err(Error::param(
                "channels",
                "gamma and refractory are network-level and must agree across channels",
            ));
        }
        Ok(())
    }
}

/// `psi = sum_c g_c lambda_c`.
///
/// Products are summed in ascending order so the result does not depend on
/// channel order.
pub fn combine_lambdas(lambdas: &[f64], combiner: &[f64]) -> Result<f64> {
    if lambdas.len() != combiner.len() {
        return Err(Error::ChannelMismatch {
            expected: combiner.len(),
            got: lambdas.len(),
        });
    }
    let mut terms: Vec<f64> = lambdas.iter().zip(combiner).map(|(l, g)| l * g).collect();
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum::<f64>().clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CafcdOutput {
    pub time: usize,
    pub psi: f64,
    pub state: bool,
    pub event: Option<DetectionEvent>,
}

#[derive(Debug, Clone)]
struct ChannelState {
    filters: ChannelFilters,
    adaptation: Adaptation,
    lambda: f64,
}

/// Streaming cooperative detector.
#[derive(Debug, Clone)]
pub struct Cafcd {
    config: CafcdConfig,
    channels: Vec<ChannelState>,
    gate: Gate,
    psi: f64,
    samples: usize,
    triples: Vec<FilterTriple>,
}

impl Cafcd {
    pub fn new(config: CafcdConfig) -> Result<Self> {
        config.validate()?;
        let channels = config
            .channels
            .iter()
            .map(|c| {
                Ok(ChannelState {
                    filters: ChannelFilters::new(c)?,
                    adaptation: Adaptation::new(c.mu_normalization, c.rng_seed),
                    lambda: 1.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let n = channels.len();
        Ok(Self {
            gate: Gate::new(config.channels[0].refractory),
            channels,
            psi: 1.0,
            samples: 0,
            triples: Vec::with_capacity(n),
            config,
        })
    }

    pub fn config(&self) -> &CafcdConfig {
        &self.config
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.lambda).collect()
    }

    pub fn flag(&self) -> bool {
        self.gate.flag()
    }

    pub fn step(&mut self, x: &[f64]) -> Result<Option<CafcdOutput>> {
        if x.len() != self.channels.len() {
            return Err(Error::ChannelMismatch {
                expected: self.channels.len(),
                got: x.len(),
            });
        }
        if let Some((c, &v)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteSample { value: v, channel: c });
        }
        let time = self.samples;
        self.samples += 1;

        self.triples.clear();
        for (ch, &v) in self.channels.iter_mut().zip(x) {
            if let Some(t) = ch.filters.push(v) {
                self.triples.push(t);
            }
        }
        if self.triples.len() < self.channels.len() {
            return Ok(None);
        }

        let psi = self.psi;
        for ((ch, f), cfg) in self.channels.iter_mut().zip(&self.triples).zip(&self.config.channels) {
            let mu = ch.adaptation.effective_mu(cfg.mu, f.slow);
            let error = f.desired - convex_combine(psi, f.fast, f.slow);
            let u = ch.adaptation.draw();
            ch.lambda = sslms_update(psi, error, f.fast, f.slow, mu, cfg.rho, u);
        }
        let lambdas: Vec<f64> = self.channels.iter().map(|c| c.lambda).collect();
        self.psi = combine_lambdas(&lambdas, &self.config.combiner)?;

        let (state, fired) = self.gate.step(self.psi, self.config.channels[0].gamma);
        let event = fired.then(|| {
            for (ch, f) in self.channels.iter_mut().zip(&self.triples) {
                ch.adaptation.on_detection(f.slow);
            }
            DetectionEvent::new(time, 0, self.psi)
        });
        Ok(Some(CafcdOutput {
            time,
            psi: self.psi,
            state,
            event,
        }))
    }
}

impl Detector for Cafcd {
    fn channels(&self) -> usize {
        self.channels.len()
    }

    fn push_sample(&mut self, sample: &[f64]) -> Result<Vec<DetectionEvent>> {
        Ok(self.step(sample)?.and_then(|o| o.event).into_iter().collect())
    }
}
