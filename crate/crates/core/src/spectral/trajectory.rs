//! Euler-Maruyama simulation of the Laguerre (square-root) diffusion and of
//! the Wright-Fisher diffusion with mutation on the simplex.

use std::fmt::Write as _;

use crate::error::{invalid, Result};
use crate::sampling::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Time between stored states (step size times thinning).
    pub dt: f64,
    pub dim: usize,
    /// States, row-major with `dim` entries per stored time.
    pub values: Vec<f64>,
    pub scheme: &'static str,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.iter().skip(i).step_by(self.dim).copied().collect()
    }

    /// Drops the first `k` stored states.
    pub fn skip(&self, k: usize) -> Trajectory {
        Trajectory {
            dt: self.dt,
            dim: self.dim,
            values: self.values[(k * self.dim).min(self.values.len())..].to_vec(),
            scheme: self.scheme,
        }
    }

    /// CSV with header `time,x0,x1,...`, every `thin`-th stored state.
    pub fn to_csv(&self, thin: usize) -> String {
        let thin = thin.max(1);
        let mut s = String::from("time");
        for i in 0..self.dim {
            let _ = write!(s, ",x{i}");
        }
        s.push('\n');
        for k in (0..self.len()).step_by(thin) {
            let _ = write!(s, "{:.9e}", k as f64 * self.dt);
            for v in self.state(k) {
                let _ = write!(s, ",{v:.16e}");
            }
            s.push('\n');
        }
        s
    }
}

fn check_common(dt: f64, steps: usize, thin: usize) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    if steps == 0 || thin == 0 {
        return Err(invalid("steps", "steps and thinning must be positive"));
    }
    Ok(())
}

/// Default step 1e-3 min(1, 1/lambda).
pub fn default_dt(lambda: f64) -> f64 {
    1e-3 * (1.0f64).min(1.0 / lambda)
}

/// Full-truncation Euler-Maruyama for ds = lambda (r - s) dt + sqrt(2 lambda s) dW.
pub fn simulate_laguerre(
    rng: &mut RngStream,
    lambda: f64,
    r: f64,
    dt: f64,
    steps: usize,
    s0: f64,
    thin: usize,
) -> Result<Trajectory> {
    check_common(dt, steps, thin)?;
    if !(lambda > 0.0) || !(r > 0.0) {
        return Err(invalid("lambda", format!("lambda {lambda} and r {r} must be positive")));
    }
    if !(s0 >= 0.0) {
        return Err(invalid("s0", format!("must be nonnegative, got {s0}")));
    }
    let noise = (2.0 * lambda * dt).sqrt();
    let mut s = s0;
    let mut values = Vec::with_capacity(steps / thin + 1);
    values.push(s);
    for k in 1..=steps {
        let sp = s.max(0.0);
        s += lambda * (r - sp) * dt + noise * sp.sqrt() * rng.normal();
        s = s.max(0.0);
        if k % thin == 0 {
            values.push(s);
        }
    }
    Ok(Trajectory {
        dt: dt * thin as f64,
        dim: 1,
        values,
        scheme: "full-truncation-euler",
    })
}

/// Euler-Maruyama for the simplex diffusion with generator
/// lambda [sum x_i (d_ij - x_j) d_i d_j + sum (a_i - |a| x_i) d_i], followed
/// by clipping at 0 and renormalization.
pub fn simulate_wright_fisher(
    rng: &mut RngStream,
    lambda: f64,
    alpha: &[f64],
    dt: f64,
    steps: usize,
    x0: &[f64],
    thin: usize,
) -> Result<Trajectory> {
    check_common(dt, steps, thin)?;
    let k = alpha.len();
    if k < 2 || alpha.iter().any(|&a| !(a > 0.0)) {
        return Err(invalid("alpha", "need at least two positive components"));
    }
    if !(lambda > 0.0) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    if x0.len() != k
        || x0.iter().any(|&v| !(v >= 0.0))
        || (x0.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(invalid("x0", "must be a probability vector matching alpha"));
    }
    let total: f64 = alpha.iter().sum();
    let noise = (2.0 * lambda * dt).sqrt();
    let mut x = x0.to_vec();
    let mut root = vec![0.0; k];
    let mut xi = vec![0.0; k];
    let mut values = Vec::with_capacity((steps / thin + 1) * k);
    values.extend_from_slice(&x);
    for step in 1..=steps {
        let mut proj = 0.0;
        for i in 0..k {
            root[i] = x[i].sqrt();
            xi[i] = rng.normal();
            proj += root[i] * xi[i];
        }
        // (diag(sqrt x) - x sqrt(x)^T) xi has covariance diag(x) - x x^T.
        for i in 0..k {
            let drift = lambda * (alpha[i] - total * x[i]) * dt;
            x[i] += drift + noise * (root[i] * xi[i] - x[i] * proj);
        }
        let mut sum = 0.0;
        for v in x.iter_mut() {
            *v = v.max(0.0);
            sum += *v;
        }
        x.iter_mut().for_each(|v| *v /= sum);
        if step % thin == 0 {
            values.extend_from_slice(&x);
        }
    }
    Ok(Trajectory {
        dt: dt * thin as f64,
        dim: k,
        values,
        scheme: "euler-simplex-projection",
    })
}
