//! Exponential decay-rate fits to empirical autocorrelation functions.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    /// Spread of the rate over contiguous batches divided by sqrt(batches).
    pub stderr: f64,
    pub lags_used: usize,
    /// False when the autocorrelation falls below the window already at lag 1;
    /// `rate` is then only the lower bound ln(1/lo)/dt.
    pub reliable: bool,
}

/// Range of autocorrelation values used in the log-linear fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcfWindow {
    pub lo: f64,
    pub hi: f64,
}

impl Default for AcfWindow {
    fn default() -> Self {
        AcfWindow { lo: 0.3, hi: 0.95 }
    }
}

pub const DECAY_BATCHES: usize = 10;

/// Normalized autocorrelation up to `max_lag`, computed by zero-padded FFT.
pub fn autocorrelation(values: &[f64], max_lag: usize) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 2, "autocorrelation needs at least 2 values");
    let mean = values.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = values
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    let max_lag = max_lag.min(n - 1);
    if c0 <= 0.0 {
        return vec![1.0; max_lag + 1];
    }
    (0..=max_lag).map(|k| buf[k].re / c0).collect()
}

fn fit_once(values: &[f64], dt: f64, window: AcfWindow, weighted: bool) -> Result<DecayFit> {
    let n = values.len();
    let rho = autocorrelation(values, n / 2);
    let mut pts = Vec::new();
    for (k, &r) in rho.iter().enumerate().skip(1) {
        if r < window.lo || !r.is_finite() {
            break;
        }
        if r <= window.hi {
            pts.push((k as f64 * dt, r));
        }
    }
    if pts.is_empty() {
        if rho.len() > 1 && rho[1] < window.lo {
            return Ok(DecayFit {
                rate: (1.0 / window.lo).ln() / dt,
                stderr: f64::NAN,
                lags_used: 0,
                reliable: false,
            });
        }
        return Err(Error::DecayFit("no lags inside the window".into()));
    }
    if pts.len() < 4 {
        return Err(Error::DecayFit(format!(
            "only {} lags inside the window",
            pts.len()
        )));
    }
    // ln rho = a - rate t, weights rho^2 stabilize the noisy tail.
    let (mut sw, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, r) in &pts {
        let w = if weighted { r * r } else { 1.0 };
        let y = r.ln();
        sw += w;
        st += w * t;
        sy += w * y;
        stt += w * t * t;
        sty += w * t * y;
    }
    let det = sw * stt - st * st;
    if det <= 0.0 {
        return Err(Error::DecayFit("degenerate lag design".into()));
    }
    let slope = (sw * sty - st * sy) / det;
    Ok(DecayFit {
        rate: -slope,
        stderr: f64::NAN,
        lags_used: pts.len(),
        reliable: true,
    })
}

/// Fits rho(t) ~ exp(-rate t) on the lags where rho lies in `window`, stopping
/// at the first lag below `window.lo`.
pub fn fit_decay_rate(values: &[f64], dt: f64, window: AcfWindow, weighted: bool) -> Result<DecayFit> {
    if !(dt > 0.0) {
        return Err(crate::error::invalid("dt", format!("must be positive, got {dt}")));
    }
    if !(0.0 < window.lo && window.lo < window.hi && window.hi < 1.0) {
        return Err(crate::error::invalid("window", "need 0 < lo < hi < 1"));
    }
    if values.len() < 16 || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::DecayFit("need at least 16 finite values".into()));
    }
    let mut fit = fit_once(values, dt, window, weighted)?;
    if !fit.reliable {
        return Ok(fit);
    }
    let len = values.len() / DECAY_BATCHES;
    let rates: Vec<f64> = (0..DECAY_BATCHES)
        .filter_map(|b| fit_once(&values[b * len..(b + 1) * len], dt, window, weighted).ok())
        .filter(|f| f.reliable)
        .map(|f| f.rate)
        .collect();
    fit.stderr = if rates.len() >= 2 {
        let m = rates.iter().sum::<f64>() / rates.len() as f64;
        let var = rates.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (rates.len() - 1) as f64;
        (var / rates.len() as f64).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(fit)
}
