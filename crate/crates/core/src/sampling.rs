//! Scalar variates and samplers for Gamma and Dirichlet random measures.

use rand::distributions::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal, WeightedAliasIndex};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::manifold::BaseMeasure;
use crate::measure::{phi, Atom, AtomicMeasure, Partition, PointConfiguration};
use crate::special::expint_e1;

/// Seeded ChaCha stream; (seed, stream) pairs reproduce bit-identical draws.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.gen();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Marsaglia-Tsang squeeze for shape >= 1.
fn gamma_mt(rng: &mut RngStream, r: f64) -> f64 {
    let d = r - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let (x, v) = loop {
            let x = rng.normal();
            let v = 1.0 + c * x;
            if v > 0.0 {
                break (x, v * v * v);
            }
        };
        let u = rng.uniform();
        if u < 1.0 - 0.0331 * x.powi(4) || u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Log of a Gamma(r) draw for r > 0; stays finite for tiny shapes.
pub fn ln_gamma_variate(rng: &mut RngStream, r: f64) -> f64 {
    assert!(r > 0.0, "shape must be positive, got {r}");
    if r >= 1.0 {
        gamma_mt(rng, r).ln()
    } else {
        gamma_mt(rng, r + 1.0).ln() + rng.uniform().ln() / r
    }
}

/// Gamma(r, 1) draw; r = 0 gives exactly 0.
pub fn gamma_variate(rng: &mut RngStream, r: f64) -> f64 {
    assert!(r >= 0.0 && r.is_finite(), "shape must be >= 0, got {r}");
    if r == 0.0 {
        0.0
    } else if r >= 1.0 {
        gamma_mt(rng, r)
    } else {
        ln_gamma_variate(rng, r).exp()
    }
}

pub fn beta_variate(rng: &mut RngStream, a: f64, b: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "beta parameters must be positive");
    let la = ln_gamma_variate(rng, a);
    let lb = ln_gamma_variate(rng, b);
    // a / (a + b) evaluated in log space.
    1.0 / (1.0 + (lb - la).exp())
}

pub fn poisson_variate(rng: &mut RngStream, mean: f64) -> u64 {
    assert!(mean >= 0.0 && mean.is_finite(), "Poisson mean {mean}");
    if mean == 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    let k: f64 = d.sample(rng);
    k as u64
}

/// Normalized independent Gamma(alpha_i); zero shapes give exact zeros.
pub fn dirichlet_variate(rng: &mut RngStream, alpha: &[f64]) -> Vec<f64> {
    assert!(
        alpha.iter().all(|&a| a >= 0.0 && a.is_finite()),
        "Dirichlet parameters must be nonnegative"
    );
    assert!(
        alpha.iter().any(|&a| a > 0.0),
        "Dirichlet parameters must not all vanish"
    );
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            if a > 0.0 {
                ln_gamma_variate(rng, a)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Independent Gamma(theta(A_i)) masses, the finite-dimensional marginal of
/// the Gamma random measure.
pub fn sample_gamma_partition(
    rng: &mut RngStream,
    theta: &BaseMeasure,
    partition: &Partition,
) -> Vec<f64> {
    partition
        .cells()
        .iter()
        .map(|cell| gamma_variate(rng, theta.mass_of(cell)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyTruncation {
    pub eps: f64,
    /// Add the expected mass of dropped jumps back as one extra atom.
    pub compensate: bool,
}

impl Default for LevyTruncation {
    fn default() -> Self {
        LevyTruncation {
            eps: 1e-6,
            compensate: true,
        }
    }
}

impl LevyTruncation {
    pub fn new(eps: f64, compensate: bool) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(invalid("eps", format!("must be positive, got {eps}")));
        }
        Ok(LevyTruncation { eps, compensate })
    }
}

const TABLE_POINTS: usize = 4096;
const TABLE_MAX: f64 = 50.0;

/// Inverse CDF of the density s^{-1} e^{-s} 1{s >= eps} / E1(eps), tabulated
/// on a log-spaced grid and interpolated linearly in log s.
#[derive(Debug, Clone)]
pub struct LevyMassTable {
    ln_s: Vec<f64>,
    cdf: Vec<f64>,
}

impl LevyMassTable {
    pub fn new(eps: f64) -> Self {
        assert!(eps > 0.0 && eps < TABLE_MAX);
        let (a, b) = (eps.ln(), TABLE_MAX.ln());
        let e_eps = expint_e1(eps);
        let ln_s: Vec<f64> = (0..TABLE_POINTS)
            .map(|i| a + (b - a) * i as f64 / (TABLE_POINTS - 1) as f64)
            .collect();
        let mut cdf: Vec<f64> = ln_s
            .iter()
            .map(|&l| 1.0 - expint_e1(l.exp()) / e_eps)
            .collect();
        cdf[0] = 0.0;
        cdf[TABLE_POINTS - 1] = 1.0;
        LevyMassTable { ln_s, cdf }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let j = self
            .cdf
            .partition_point(|&c| c <= u)
            .clamp(1, TABLE_POINTS - 1);
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        (self.ln_s[j - 1] + t * (self.ln_s[j] - self.ln_s[j - 1])).exp()
    }
}

/// Gamma random measure via its Poisson representation on M x (eps, inf).
#[derive(Debug, Clone)]
pub struct GammaMeasureSampler {
    theta: BaseMeasure,
    trunc: LevyTruncation,
    table: LevyMassTable,
    locations: WeightedAliasIndex<f64>,
    mean_count: f64,
    compensation: f64,
}

impl GammaMeasureSampler {
    pub fn new(theta: &BaseMeasure, trunc: LevyTruncation) -> Self {
        let total = theta.total_mass();
        GammaMeasureSampler {
            theta: theta.clone(),
            trunc,
            table: LevyMassTable::new(trunc.eps),
            locations: WeightedAliasIndex::new(theta.cell_masses().to_vec())
                .expect("positive cell masses"),
            mean_count: total * expint_e1(trunc.eps),
            compensation: total * (-(-trunc.eps).exp_m1()),
        }
    }

    pub fn theta(&self) -> &BaseMeasure {
        &self.theta
    }

    pub fn truncation(&self) -> LevyTruncation {
        self.trunc
    }

    /// theta(M) E1(eps).
    pub fn mean_count(&self) -> f64 {
        self.mean_count
    }

    /// theta(M) (1 - e^{-eps}), the expected mass of the dropped jumps.
    pub fn compensation_mass(&self) -> f64 {
        self.compensation
    }

    pub fn location(&self, rng: &mut RngStream) -> usize {
        self.locations.sample(rng)
    }

    /// Poisson points with marks s >= eps (no compensation point).
    pub fn sample_configuration(&self, rng: &mut RngStream) -> PointConfiguration {
        let k = poisson_variate(rng, self.mean_count);
        let points = (0..k)
            .map(|_| {
                let s = self.table.quantile(rng.uniform());
                (self.location(rng), s)
            })
            .collect();
        PointConfiguration::new(points).expect("positive marks")
    }

    pub fn sample(&self, rng: &mut RngStream) -> AtomicMeasure {
        let eta = phi(&self.sample_configuration(rng));
        if self.trunc.compensate {
            let extra = AtomicMeasure::new(vec![Atom {
                node: self.location(rng),
                mass: self.compensation,
            }])
            .expect("positive compensation mass");
            eta.merge(&extra)
        } else {
            eta
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DirichletMethod {
    LevyNormalize,
    /// Truncation depth; `None` picks K with (t/(1+t))^K < 1e-12.
    StickBreaking(Option<usize>),
}

#[derive(Debug, Clone)]
pub struct DirichletMeasureSampler {
    gamma: GammaMeasureSampler,
    method: DirichletMethod,
    sticks: usize,
}

/// Smallest K with (t/(1+t))^K < 1e-12.
pub fn stick_count(total_mass: f64) -> usize {
    let r = total_mass / (1.0 + total_mass);
    ((1e-12f64).ln() / r.ln()).floor() as usize + 1
}

impl DirichletMeasureSampler {
    pub fn new(theta: &BaseMeasure, trunc: LevyTruncation, method: DirichletMethod) -> Self {
        let sticks = match method {
            DirichletMethod::StickBreaking(Some(k)) => k.max(1),
            _ => stick_count(theta.total_mass()),
        };
        DirichletMeasureSampler {
            gamma: GammaMeasureSampler::new(theta, trunc),
            method,
            sticks,
        }
    }

    pub fn method(&self) -> DirichletMethod {
        self.method
    }

    pub fn sticks(&self) -> usize {
        self.sticks
    }

    pub fn sample(&self, rng: &mut RngStream) -> AtomicMeasure {
        match self.method {
            DirichletMethod::LevyNormalize => loop {
                // The compensated sampler is never empty; the loop guards eta = 0.
                if let Ok(mu) = self.gamma.sample(rng).normalize() {
                    return mu;
                }
            },
            DirichletMethod::StickBreaking(_) => self.stick_breaking(rng),
        }
    }

    fn stick_breaking(&self, rng: &mut RngStream) -> AtomicMeasure {
        let t = self.gamma.theta().total_mass();
        let mut atoms = Vec::with_capacity(self.sticks + 1);
        let mut rest = 1.0;
        for _ in 0..self.sticks {
            // Beta(1, t) by inversion.
            let b = -(rng.uniform().ln() / t).exp_m1();
            let p = rest * b;
            rest -= p;
            if p > 0.0 {
                atoms.push(Atom {
                    node: self.gamma.location(rng),
                    mass: p,
                });
            }
        }
        if rest > 0.0 {
            atoms.push(Atom {
                node: self.gamma.location(rng),
                mass: rest,
            });
        }
        AtomicMeasure::new(atoms)
            .expect("positive stick masses")
            .normalize()
            .expect("nonzero measure")
    }
}

/// Samples per Monte Carlo chunk; each chunk owns one RNG stream, so
/// results do not depend on the thread count.
pub const CHUNK: usize = 4096;

/// Runs `n` samples in fixed chunks with streams `stream_base + chunk` and
/// reduces the per-chunk accumulators in chunk order.
pub fn parallel_accumulate<A, F, M>(seed: u64, stream_base: u64, n: usize, work: F, merge: M) -> A
where
    A: Send + Default,
    F: Fn(&mut RngStream, usize, &mut A) + Sync,
    M: Fn(&mut A, A),
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = RngStream::new(seed, stream_base + c as u64);
            let mut acc = A::default();
            let len = CHUNK.min(n - c * CHUNK);
            work(&mut rng, len, &mut acc);
            acc
        })
        .collect();
    let mut total = A::default();
    for p in parts {
        merge(&mut total, p);
    }
    total
}
