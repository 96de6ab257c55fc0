//! Monte Carlo summaries and the one-sample Kolmogorov-Smirnov test.

use serde::{Deserialize, Serialize};

use crate::special::{beta_cdf, gamma_cdf};

/// A Monte Carlo estimate: sample mean, standard error and sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            value,
            stderr: 0.0,
            n: 0,
        }
    }

    /// z-score of `self - other` treating the two estimates as independent.
    pub fn z_against(&self, other: &Estimate) -> f64 {
        z_score(self.value - other.value, self.stderr.hypot(other.stderr))
    }

    /// z-score of `self` against an exact target.
    pub fn z_to(&self, target: f64) -> f64 {
        z_score(self.value - target, self.stderr)
    }
}

/// Zero discrepancy with zero error counts as perfect agreement.
pub fn z_score(diff: f64, stderr: f64) -> f64 {
    if stderr > 0.0 {
        diff / stderr
    } else if diff.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Welford accumulator for mean and variance; mergeable across workers.
#[derive(Debug, Clone, Copy, Default)]
pub struct MomentAccumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> Estimate {
        let stderr = if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        };
        Estimate {
            value: self.mean,
            stderr,
            n: self.n,
        }
    }
}

/// Streaming covariance of a pair of observables.
#[derive(Debug, Clone, Copy, Default)]
pub struct CovarianceAccumulator {
    n: u64,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    m2_y: f64,
    c_xy: f64,
}

impl CovarianceAccumulator {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        self.mean_x += dx / n;
        let dy = y - self.mean_y;
        self.mean_y += dy / n;
        self.m2_x += dx * (x - self.mean_x);
        self.m2_y += dy * (y - self.mean_y);
        self.c_xy += dx * (y - self.mean_y);
    }

    pub fn merge(&mut self, o: &CovarianceAccumulator) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        let dx = o.mean_x - self.mean_x;
        let dy = o.mean_y - self.mean_y;
        self.m2_x += o.m2_x + dx * dx * na * nb / n;
        self.m2_y += o.m2_y + dy * dy * na * nb / n;
        self.c_xy += o.c_xy + dx * dy * na * nb / n;
        self.mean_x += dx * nb / n;
        self.mean_y += dy * nb / n;
        self.n += o.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean_x(&self) -> f64 {
        self.mean_x
    }

    pub fn mean_y(&self) -> f64 {
        self.mean_y
    }

    pub fn correlation(&self) -> f64 {
        let denom = (self.m2_x * self.m2_y).sqrt();
        if denom > 0.0 {
            self.c_xy / denom
        } else {
            0.0
        }
    }
}

/// Streaming mean vector and covariance matrix of a k-dimensional observable.
#[derive(Debug, Clone, Default)]
pub struct VectorAccumulator {
    n: u64,
    mean: Vec<f64>,
    // Row-major k x k co-moment matrix.
    comoment: Vec<f64>,
}

impl VectorAccumulator {
    pub fn new(k: usize) -> Self {
        VectorAccumulator {
            n: 0,
            mean: vec![0.0; k],
            comoment: vec![0.0; k * k],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, x: &[f64]) {
        if self.mean.is_empty() {
            *self = Self::new(x.len());
        }
        let k = self.dim();
        assert_eq!(x.len(), k, "observable dimension mismatch");
        self.n += 1;
        let n = self.n as f64;
        let mut delta = [0.0f64; 8];
        assert!(k <= delta.len(), "at most 8 components");
        for i in 0..k {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] / n;
        }
        for i in 0..k {
            let after = x[i] - self.mean[i];
            for j in 0..k {
                self.comoment[i * k + j] += after * delta[j];
            }
        }
    }

    pub fn merge(&mut self, o: &VectorAccumulator) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = o.clone();
            return;
        }
        let k = self.dim();
        let (na, nb) = (self.n as f64, o.n as f64);
        let n = na + nb;
        let d: Vec<f64> = (0..k).map(|i| o.mean[i] - self.mean[i]).collect();
        for i in 0..k {
            for j in 0..k {
                self.comoment[i * k + j] += o.comoment[i * k + j] + d[i] * d[j] * na * nb / n;
            }
        }
        for i in 0..k {
            self.mean[i] += d[i] * nb / n;
        }
        self.n += o.n;
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.mean[i]
    }

    /// Sample covariance of components i and j.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.comoment[i * self.dim() + j] / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self, i: usize) -> Estimate {
        Estimate {
            value: self.mean[i],
            stderr: (self.covariance(i, i) / self.n.max(1) as f64).sqrt(),
            n: self.n,
        }
    }

    /// Delta-method estimate of g(means) given g and its gradient at the means.
    pub fn delta_method(&self, value: f64, gradient: &[f64]) -> Estimate {
        let k = self.dim();
        let mut var = 0.0;
        for i in 0..k {
            for j in 0..k {
                var += gradient[i] * gradient[j] * self.covariance(i, j);
            }
        }
        Estimate {
            value,
            stderr: (var.max(0.0) / self.n.max(1) as f64).sqrt(),
            n: self.n,
        }
    }
}

/// Mean with a batch-means standard error, for autocorrelated series.
pub fn batch_means(values: &[f64], n_batches: usize) -> Estimate {
    assert!(n_batches >= 2 && values.len() >= n_batches);
    let size = values.len() / n_batches;
    let mut acc = MomentAccumulator::new();
    for b in 0..n_batches {
        let chunk = &values[b * size..(b + 1) * size];
        acc.push(chunk.iter().sum::<f64>() / size as f64);
    }
    let est = acc.estimate();
    Estimate {
        value: values.iter().sum::<f64>() / values.len() as f64,
        stderr: est.stderr,
        n: values.len() as u64,
    }
}

/// Reference distribution for the KS test.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceCdf {
    Gamma {
        shape: f64,
    },
    Beta {
        a: f64,
        b: f64,
    },
    /// Piecewise-linear CDF through increasing abscissae.
    Table {
        x: Vec<f64>,
        cdf: Vec<f64>,
    },
}

impl ReferenceCdf {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ReferenceCdf::Gamma { shape } => gamma_cdf(*shape, x),
            ReferenceCdf::Beta { a, b } => beta_cdf(*a, *b, x),
            ReferenceCdf::Table { x: xs, cdf } => {
                if x <= xs[0] {
                    return cdf[0];
                }
                if x >= xs[xs.len() - 1] {
                    return cdf[cdf.len() - 1];
                }
                let j = xs.partition_point(|&v| v <= x);
                let (x0, x1) = (xs[j - 1], xs[j]);
                let t = (x - x0) / (x1 - x0);
                cdf[j - 1] + t * (cdf[j] - cdf[j - 1])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl KsResult {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value >= level
    }
}

/// One-sample KS test on sorted, finite samples.
pub fn ks_test(sorted: &[f64], cdf: &ReferenceCdf) -> KsResult {
    assert!(sorted.len() >= 100, "KS test needs at least 100 samples");
    assert!(
        sorted.iter().all(|v| v.is_finite()),
        "KS samples must be finite"
    );
    assert!(
        sorted.windows(2).all(|w| w[0] <= w[1]),
        "KS samples must be sorted"
    );
    let n = sorted.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf.eval(x);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let sq = nf.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_q((sq + 0.12 + 0.11 / sq) * d),
        n,
    }
}

/// Sorts a copy and runs `ks_test`.
pub fn ks_test_unsorted(samples: &[f64], cdf: &ReferenceCdf) -> KsResult {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    ks_test(&v, cdf)
}

/// Kolmogorov survival function Q(t) = 2 sum (-1)^(k-1) exp(-2 k^2 t^2).
pub fn kolmogorov_q(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * t * t).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulator_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut whole = MomentAccumulator::new();
        xs.iter().for_each(|&x| whole.push(x));
        let mut a = MomentAccumulator::new();
        let mut b = MomentAccumulator::new();
        xs[..313].iter().for_each(|&x| a.push(x));
        xs[313..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_eq!(a.count(), 1000);
        assert!((a.mean() - whole.mean()).abs() < 1e-12);
        assert!((a.variance() - whole.variance()).abs() < 1e-10);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1.36) is the familiar 5% critical point, Q(1.63) the 1% point.
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 5e-4);
    }

    #[test]
    fn table_cdf_interpolates() {
        let t = ReferenceCdf::Table {
            x: vec![0.0, 1.0],
            cdf: vec![0.0, 1.0],
        };
        assert_eq!(t.eval(0.25), 0.25);
        assert_eq!(t.eval(-1.0), 0.0);
        assert_eq!(t.eval(3.0), 1.0);
    }

    #[test]
    #[should_panic(expected = "sorted")]
    fn unsorted_input_is_rejected() {
        let mut v: Vec<f64> = (0..200).map(|i| i as f64 / 200.0).collect();
        v.swap(3, 50);
        ks_test(&v, &ReferenceCdf::Beta { a: 1.0, b: 1.0 });
    }

    #[test]
    #[should_panic(expected = "finite")]
    fn nan_input_is_rejected() {
        let mut v: Vec<f64> = (0..200).map(|i| i as f64 / 200.0).collect();
        v[10] = f64::NAN;
        ks_test(&v, &ReferenceCdf::Beta { a: 1.0, b: 1.0 });
    }
}
