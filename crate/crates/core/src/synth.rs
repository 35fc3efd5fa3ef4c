//! Seeded synthetic scenarios: zero-mean Gaussian series whose standard
//! deviation is piecewise constant, optionally multichannel with a random
//! correlation matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest magnitude allowed for a vine partial correlation, keeping every
/// generated matrix strictly positive definite.
pub const PARTIAL_CORRELATION_LIMIT: f64 = 0.99;

/// Concentration of the "low" preset: partial correlations cluster near 0.
pub const LOW_CONCENTRATION: f64 = 20.0;
/// Concentration of the "high" preset: partial correlations spread towards +-1.
pub const HIGH_CONCENTRATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationPreset {
    #[default]
    Identity,
    Low,
    High,
}

impl CorrelationPreset {
    pub fn concentration(self) -> Option<f64> {
        match self {
            Self::Identity => None,
            Self::Low => Some(LOW_CONCENTRATION),
            Self::High => Some(HIGH_CONCENTRATION),
        }
    }
}

impl std::str::FromStr for CorrelationPreset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "identity" | "none" => Ok(Self::Identity),
            "low" => Ok(Self::Low),
            "high" => Ok(Self::High),
            other => Err(format!("unknown correlation preset `{other}`")),
        }
    }
}

/// A correlation matrix together with its lower-triangular factor `L`, `R = L L^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub matrix: Vec<Vec<f64>>,
    pub factor: Vec<Vec<f64>>,
}

impl Correlation {
    pub fn identity(dim: usize) -> Self {
        let eye: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            matrix: eye.clone(),
            factor: eye,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    /// Mean absolute off-diagonal entry; 0 for `dim = 1`.
    pub fn mean_abs_off_diagonal(&self) -> f64 {
        let d = self.dim();
        if d < 2 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    acc += self.matrix[i][j].abs();
                }
            }
        }
        acc / (d * (d - 1)) as f64
    }
}

/// Random correlation matrix from a C-vine with partial correlations drawn as
/// `2 Beta(b, b) - 1`.
///
/// The factor is assembled directly from the partial correlations:
/// `L[i][k] = p_{k,i} prod_{l<k} sqrt(1 - p_{l,i}^2)` and
/// `L[i][i] = prod_{l<i} sqrt(1 - p_{l,i}^2)`. Each row has unit norm, so the
/// diagonal of `L L^T` is 1 up to rounding and is then set to exactly 1.
pub fn random_correlation<R: Rng + ?Sized>(dim: usize, concentration: f64, rng: &mut R) -> Result<Correlation> {
    if dim == 0 {
        return Err(Error::param("dim", "must be >= 1"));
    }
    if !(concentration.is_finite() && concentration > 0.0) {
        return Err(Error::param("concentration", "must be > 0"));
    }
    let beta = Beta::new(concentration, concentration)
        .map_err(|e| Error::param("concentration", e.to_string()))?;
    // partial[k][i], k < i
    let mut partial = vec![vec![0.0; dim]; dim];
    for k in 0..dim.saturating_sub(1) {
        for i in (k + 1)..dim {
            let p = 2.0 * beta.sample(rng) - 1.0;
            partial[k][i] = p.clamp(-PARTIAL_CORRELATION_LIMIT, PARTIAL_CORRELATION_LIMIT);
        }
    }
    let mut factor = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        let mut rest = 1.0;
        for k in 0..i {
            factor[i][k] = partial[k][i] * rest;
            rest *= (1.0 - partial[k][i] * partial[k][i]).sqrt();
        }
        factor[i][i] = rest;
    }
    let mut matrix = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in 0..=i {
            let v: f64 = (0..=j).map(|k| factor[i][k] * factor[j][k]).sum();
            matrix[i][j] = v;
            matrix[j][i] = v;
        }
        matrix[i][i] = 1.0;
    }
    Ok(Correlation { matrix, factor })
}

/// Seeded convenience wrapper around [`random_correlation`].
pub fn random_correlation_matrix(dim: usize, concentration: f64, seed: u64) -> Result<Correlation> {
    random_correlation(dim, concentration, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Inclusive range of the total length `N`.
    pub total_range: (usize, usize),
    /// Inclusive range of segment lengths.
    pub segment_range: (usize, usize),
    pub scale_down_range: (f64, f64),
    pub scale_up_range: (f64, f64),
    pub p_up: f64,
    pub initial_sigma: f64,
    pub n_channels: usize,
    pub correlation: CorrelationPreset,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            total_range: (5000, 30000),
            segment_range: (300, 700),
            scale_down_range: (0.5, 0.85),
            scale_up_range: (1.2, 1.7),
            p_up: 0.5,
            initial_sigma: 1.0,
            n_channels: 1,
            correlation: CorrelationPreset::Identity,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_channels(mut self, n_channels: usize, correlation: CorrelationPreset) -> Self {
        self.n_channels = n_channels;
        self.correlation = correlation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.total_range;
        if lo == 0 || lo > hi {
            return Err(Error::param("total_range", "need 1 <= lo <= hi"));
        }
        let (slo, shi) = self.segment_range;
        if slo == 0 || slo > shi {
            return Err(Error::param("segment_range", "need 1 <= lo <= hi"));
        }
        for (name, (a, b)) in [
            ("scale_down_range", self.scale_down_range),
            ("scale_up_range", self.scale_up_range),
        ] {
            if !(a.is_finite() && b.is_finite() && 0.0 < a && a <= b) {
                return Err(Error::param(name, "need 0 < lo <= hi"));
            }
        }
        if !(0.0..=1.0).contains(&self.p_up) {
            return Err(Error::param("p_up", "must lie in [0, 1]"));
        }
        if !(self.initial_sigma.is_finite() && self.initial_sigma > 0.0) {
            return Err(Error::param("initial_sigma", "must be > 0"));
        }
        if self.n_channels == 0 {
            return Err(Error::param("n_channels", "must be >= 1"));
        }
        Ok(())
    }
}

/// Generated series with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Time-major: `samples[t][c]`.
    pub samples: Vec<Vec<f64>>,
    /// 0-based index of the first sample of every segment after the first.
    pub change_times: Vec<usize>,
    pub segment_sigmas: Vec<f64>,
    pub correlation: Vec<Vec<f64>>,
    pub seed: u64,
}

impl Scenario {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.correlation.len()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.samples.iter().map(|r| r[c]).collect()
    }

    /// Segment boundaries `[0, tau_1, ..., N]`.
    pub fn boundaries(&self) -> Vec<usize> {
        let mut b = Vec::with_capacity(self.change_times.len() + 2);
        b.push(0);
        b.extend(&self.change_times);
        b.push(self.len());
        b
    }
}

fn fill_samples<R: Rng + ?Sized>(
    rng: &mut R,
    boundaries: &[usize],
    sigmas: &[f64],
    factor: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let dim = factor.len();
    let n = *boundaries.last().unwrap_or(&0);
    let mut samples = Vec::with_capacity(n);
    let mut z = vec![0.0; dim];
    for (seg, sigma) in boundaries.windows(2).zip(sigmas) {
        for _ in seg[0]..seg[1] {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            let row: Vec<f64> = (0..dim)
                .map(|i| sigma * (0..=i).map(|k| factor[i][k] * z[k]).sum::<f64>())
                .collect();
            samples.push(row);
        }
    }
    samples
}

/// Draws a scenario: total length, segment lengths and scale factors, the
/// correlation matrix, then the samples, all from one generator seeded by
/// `config.seed`.
pub fn gen_piecewise_gaussian(config: &SynthConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = rng.random_range(config.total_range.0..=config.total_range.1);

    let mut change_times = Vec::new();
    let mut sigmas = vec![config.initial_sigma];
    let mut t = 0usize;
    loop {
        let len = rng.random_range(config.segment_range.0..=config.segment_range.1);
        if t + len >= n {
            break;
        }
        t += len;
        change_times.push(t);
        let (lo, hi) = if rng.random_bool(config.p_up) {
            config.scale_up_range
        } else {
            config.scale_down_range
        };
        let scale = if lo < hi { rng.random_range(lo..=hi) } else { lo };
        sigmas.push(sigmas.last().copied().unwrap_or(1.0) * scale);
    }

    let corr = match (config.n_channels, config.correlation.concentration()) {
        (1, _) | (_, None) => Correlation::identity(config.n_channels),
        (d, Some(b)) => random_correlation(d, b, &mut rng)?,
    };
    let mut boundaries = vec![0];
    boundaries.extend(&change_times);
    boundaries.push(n);
    let samples = fill_samples(&mut rng, &boundaries, &sigmas, &corr.factor);
    Ok(Scenario {
        samples,
        change_times,
        segment_sigmas: sigmas,
        correlation: corr.matrix,
        seed: config.seed,
    })
}

/// Scenario with the given boundaries and segment standard deviations and
/// independent channels.
pub fn gen_segments(
    change_times: &[usize],
    sigmas: &[f64],
    n: usize,
    n_channels: usize,
    seed: u64,
) -> Result<Scenario> {
    if sigmas.len() != change_times.len() + 1 {
        return Err(Error::param("sigmas", "need one more sigma than change times"));
    }
    if n_channels == 0 {
        return Err(Error::param("n_channels", "must be >= 1"));
    }
    let mut boundaries = vec![0];
    boundaries.extend(change_times);
    boundaries.push(n);
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("change_times", "must be strictly increasing inside (0, n)"));
    }
    let corr = Correlation::identity(n_channels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Scenario {
        samples: fill_samples(&mut rng, &boundaries, sigmas, &corr.factor),
        change_times: change_times.to_vec(),
        segment_sigmas: sigmas.to_vec(),
        correlation: corr.matrix,
        seed,
    })
}

/// `N` i.i.d. `N(0, sigma^2)` samples, time-major.
pub fn gen_stationary(n: usize, n_channels: usize, sigma: f64, seed: u64) -> Result<Scenario> {
    gen_segments(&[], &[sigma], n, n_channels, seed)
}

/// `y_t = x_{t+1} - x_t` per channel.
pub fn first_difference(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if rows.len() < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: rows.len(),
        });
    }
    Ok(rows
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_difference_examples() {
        let rows: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| vec![v]).collect();
        assert_eq!(first_difference(&rows).unwrap(), vec![vec![1.0]; 3]);
        let flat = vec![vec![5.0, -1.0]; 4];
        assert_eq!(first_difference(&flat).unwrap(), vec![vec![0.0, 0.0]; 3]);
        assert!(first_difference(&[vec![1.0]]).is_err());
    }

    #[test]
    fn correlation_shapes() {
        let c = random_correlation_matrix(1, 1.0, 3).unwrap();
        assert_eq!(c.matrix, vec![vec![1.0]]);
        let c = random_correlation_matrix(4, 0.5, 9).unwrap();
        for i in 0..4 {
            assert_eq!(c.matrix[i][i], 1.0);
            for j in 0..4 {
                assert_eq!(c.matrix[i][j], c.matrix[j][i]);
                assert!(c.matrix[i][j].abs() <= 1.0 + 1e-12);
            }
        }
        assert!(random_correlation_matrix(0, 1.0, 0).is_err());
        assert!(random_correlation_matrix(3, 0.0, 0).is_err());
    }

    #[test]
    fn ground_truth_consistency() {
        for seed in 0..20 {
            let s = gen_piecewise_gaussian(&SynthConfig::default().with_seed(seed)).unwrap();
            assert!((5000..=30000).contains(&s.len()));
            assert_eq!(s.segment_sigmas.len(), s.change_times.len() + 1);
            let b = s.boundaries();
            for w in b.windows(2).take(b.len() - 2) {
                assert!((300..=700).contains(&(w[1] - w[0])));
            }
            for r in s.segment_sigmas.windows(2).map(|w| w[1] / w[0]) {
                assert!(
                    (0.5 - 1e-12..=0.85 + 1e-12).contains(&r) || (1.2 - 1e-12..=1.7 + 1e-12).contains(&r),
                    "ratio {r}"
                );
            }
        }
    }

    #[test]
    fn reproducible() {
        let cfg = SynthConfig::default().with_seed(5).with_channels(3, CorrelationPreset::High);
        assert_eq!(gen_piecewise_gaussian(&cfg).unwrap(), gen_piecewise_gaussian(&cfg).unwrap());
    }

    #[test]
    fn segment_validation() {
        assert!(gen_segments(&[10], &[1.0], 20, 1, 0).is_err());
        assert!(gen_segments(&[30], &[1.0, 2.0], 20, 1, 0).is_err());
        assert!(gen_segments(&[10], &[1.0, 2.0], 20, 0, 0).is_err());
    }
}
