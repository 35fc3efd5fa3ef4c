//! Numerical oracles for the weight-selection and location analyses.
//!
//! * [`expected_lambda_minimizer`] estimates the MSE-optimal convex weight
//!   `E{(s_d - s_s)(s_f - s_s)} / E{(s_f - s_s)^2}` by Monte Carlo.
//! * [`expected_mixture_variance`] is the closed-form `E{s^2}` of a filter whose
//!   window straddles a variance step.
//! * [`expected_sigmad_profile`] is the closed-form approximation of
//!   `E{sigma_D}` around the change, checked by [`mc_sigmad_mean`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::WeightVector;

/// A single variance step `sigma1 -> sigma2` and the window sizes used around it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub sigma1: f64,
    pub sigma2: f64,
    pub fast_window: usize,
    pub slow_window: usize,
    pub diff_window: usize,
}

impl TransitionSpec {
    pub fn new(sigma1: f64, sigma2: f64) -> Self {
        Self {
            sigma1,
            sigma2,
            fast_window: 20,
            slow_window: 250,
            diff_window: 50,
        }
    }

    pub fn with_diff_window(mut self, diff_window: usize) -> Self {
        self.diff_window = diff_window;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma1", self.sigma1), ("sigma2", self.sigma2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, "must be > 0"));
            }
        }
        if self.diff_window < 2 {
            return Err(Error::param("diff_window", "must be >= 2"));
        }
        Ok(())
    }
}

/// Placement of the desired window relative to the fast/slow windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DesiredLayout {
    /// Desired window covers the samples right after the newest fast/slow sample
    /// (the detector's layout).
    #[default]
    Disjoint,
    /// Desired window ends one sample after the newest fast/slow sample and
    /// overlaps the fast window.
    Overlapping,
}

/// Monte Carlo estimate of the optimal convex weight at `t_rel`.
///
/// `t_rel` counts the post-change samples inside the fast/slow windows: the
/// newest fast/slow sample is at `t`, and the change happens at
/// `tau = t - t_rel + 1`. Every sample at or after `tau` has deviation `sigma2`.
/// Numerator and denominator are accumulated over the same draws.
#[allow(clippy::too_many_arguments)]
pub fn expected_lambda_minimizer(
    spec: &TransitionSpec,
    weights_f: &WeightVector,
    weights_s: &WeightVector,
    weights_d: &WeightVector,
    t_rel: usize,
    n_mc: usize,
    seed: u64,
    layout: DesiredLayout,
) -> Result<f64> {
    spec.validate()?;
    if n_mc < 1000 {
        return Err(Error::param("n_mc", "must be >= 1000"));
    }
    let back = weights_f.len().max(weights_s.len());
    let d = weights_d.len();
    // Buffer index 0 holds the newest sample of the desired window.
    let (len, fs_offset) = match layout {
        DesiredLayout::Disjoint => (d + back, d),
        DesiredLayout::Overlapping => (back.max(d - 1) + 1, 1),
    };
    // Absolute position of buffer index i relative to t (positive = later).
    let rel = |i: usize| fs_offset as isize - i as isize;
    let sigma_at = |i: usize| {
        // sample time t + rel(i) is post-change iff rel(i) >= 1 - t_rel
        if rel(i) >= 1 - t_rel as isize {
            spec.sigma2
        } else {
            spec.sigma1
        }
    };
    let scales: Vec<f64> = (0..len).map(sigma_at).collect();
    let dot = |w: &WeightVector, sq: &[f64]| -> f64 {
        w.as_slice().iter().zip(sq).map(|(a, b)| a * b).sum::<f64>().sqrt()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sq = vec![0.0; len];
    let (mut num, mut den) = (0.0, 0.0);
    for _ in 0..n_mc {
        for (v, s) in sq.iter_mut().zip(&scales) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = (s * z) * (s * z);
        }
        let sd = dot(weights_d, &sq);
        let sf = dot(weights_f, &sq[fs_offset..]);
        let ss = dot(weights_s, &sq[fs_offset..]);
        num += (sd - ss) * (sf - ss);
        den += (sf - ss) * (sf - ss);
    }
    if !(den > 0.0 && den.is_finite()) {
        return Err(Error::Degenerate(
            "fast and slow estimates coincide; E{(s_f - s_s)^2} = 0".into(),
        ));
    }
    Ok(num / den)
}

/// Closed-form `E{s^2}` when the newest `t_rel` samples of the window follow
/// the change: `m_post sigma2^2 + m_pre sigma1^2`, with the masses taken from
/// the weight vector (newest first).
pub fn expected_mixture_variance(spec: &TransitionSpec, weights: &WeightVector, t_rel: usize) -> Result<f64> {
    let (pre, post) = mixture_masses(weights, t_rel)?;
    Ok(pre * spec.sigma1 * spec.sigma1 + post * spec.sigma2 * spec.sigma2)
}

/// `(pre-change mass, post-change mass)` for `t_rel` post-change samples.
pub fn mixture_masses(weights: &WeightVector, t_rel: usize) -> Result<(f64, f64)> {
    if t_rel > weights.len() {
        return Err(Error::param(
            "t_rel",
            format!("must be <= window size {}, got {t_rel}", weights.len()),
        ));
    }
    let w = weights.as_slice();
    Ok((w[t_rel..].iter().sum(), w[..t_rel].iter().sum()))
}

/// Closed-form approximation of `E{sigma_D(tau + T_l - 1 + k)}`.
///
/// Both windows are treated as `T_l - 1` effective samples and
/// `E{s} ~ sqrt(E{s^2})`. With `m = min(|k|, T_l - 1)`:
///
/// ```text
/// k >= 0:  sigma2 - sqrt(((T_l - 1 - m) sigma1^2 + m sigma2^2) / (T_l - 1))
/// k <  0:  sqrt(((T_l - 1 - m) sigma2^2 + m sigma1^2) / (T_l - 1)) - sigma1
/// ```
///
/// `k = 0` gives `sigma2 - sigma1`.
pub fn expected_sigmad_profile(spec: &TransitionSpec, k: i64) -> Result<f64> {
    spec.validate()?;
    let n = (spec.diff_window - 1) as f64;
    let m = (k.unsigned_abs() as f64).min(n);
    let (s1, s2) = (spec.sigma1 * spec.sigma1, spec.sigma2 * spec.sigma2);
    Ok(if k >= 0 {
        spec.sigma2 - (((n - m) * s1 + m * s2) / n).sqrt()
    } else {
        (((n - m) * s2 + m * s1) / n).sqrt() - spec.sigma1
    })
}

/// Monte Carlo mean and standard error of `sigma_D(tau + T_l - 1 + k)` for a
/// single step, using the square-window filter.
pub fn mc_sigmad_mean(spec: &TransitionSpec, k: i64, n_trials: usize, seed: u64) -> Result<(f64, f64)> {
    spec.validate()?;
    if n_trials < 2 {
        return Err(Error::param("n_trials", "must be >= 2"));
    }
    let tl = spec.diff_window;
    if k.unsigned_abs() as usize >= tl {
        return Err(Error::param("k", "must satisfy |k| < diff_window"));
    }
    // Series of 2 T_l samples ending at t = tau + T_l - 1 + k; index 0 is t - 2T_l + 1.
    let len = 2 * tl;
    let tau = (len as i64 - tl as i64 - k) as usize;
    let weights = WeightVector::uniform(tl)?;
    let w = weights.as_slice()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum2) = (0.0, 0.0);
    let mut sq = vec![0.0; len];
    for _ in 0..n_trials {
        for (i, v) in sq.iter_mut().enumerate() {
            let s = if i < tau { spec.sigma1 } else { spec.sigma2 };
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = (s * z) * (s * z);
        }
        let older: f64 = sq[..tl].iter().sum::<f64>() * w;
        let newer: f64 = sq[tl..].iter().sum::<f64>() * w;
        let d = newer.sqrt() - older.sqrt();
        sum += d;
        sum2 += d * d;
    }
    let n = n_trials as f64;
    let mean = sum / n;
    let var = (sum2 / n - mean * mean) * n / (n - 1.0);
    Ok((mean, (var.max(0.0) / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_examples() {
        let spec = TransitionSpec::new(1.0, 2.0);
        let tri = WeightVector::triangular_fast(4).unwrap();
        assert!((expected_mixture_variance(&spec, &tri, 2).unwrap() - 3.1).abs() < 1e-12);
        let uni = WeightVector::uniform(5).unwrap();
        assert!((expected_mixture_variance(&spec, &uni, 0).unwrap() - 1.25).abs() < 1e-12);
        assert!((expected_mixture_variance(&spec, &tri, 4).unwrap() - 4.0).abs() < 1e-12);
        assert!(expected_mixture_variance(&spec, &tri, 5).is_err());
    }

    #[test]
    fn profile_examples() {
        let spec = TransitionSpec::new(1.0, 2.0).with_diff_window(50);
        assert!((expected_sigmad_profile(&spec, 0).unwrap() - 1.0).abs() < 1e-12);
        let expected = 2.0 - (76.0f64 / 49.0).sqrt();
        assert!((expected_sigmad_profile(&spec, 9).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.7546).abs() < 1e-4);
        let flat = TransitionSpec::new(1.5, 1.5).with_diff_window(20);
        for k in -20..=20 {
            assert_eq!(expected_sigmad_profile(&flat, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn degenerate_minimizer() {
        let spec = TransitionSpec::new(1.0, 1.0);
        let w = WeightVector::triangular_slow(20).unwrap();
        let d = WeightVector::averaging(12).unwrap();
        let r = expected_lambda_minimizer(&spec, &w, &w, &d, 0, 1000, 1, DesiredLayout::Disjoint);
        assert!(matches!(r, Err(Error::Degenerate(_))));
        let r = expected_lambda_minimizer(&spec, &w, &w, &d, 0, 10, 1, DesiredLayout::Disjoint);
        assert!(r.is_err());
    }
}
