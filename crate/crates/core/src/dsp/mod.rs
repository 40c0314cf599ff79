//! Numeric primitives shared by the feature extractors: zero-phase
//! Butterworth filtering, smoothing, normalization, peak picking and
//! polynomial trend fitting.
//!
//! Everything here is a pure function over an immutable input and is
//! length-preserving unless stated otherwise.

mod butter;
mod peaks;
mod savgol;

pub use butter::{iir_filter, notch_filter, FilterKind, FilterSpec, Sos};
pub use peaks::detect_peaks;
pub use savgol::{savgol_coefficients, savgol_smooth};

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("invalid cutoff: {0}")]
    InvalidCutoff(String),
    #[error("signal too short: {len} samples, need more than {required}")]
    SignalTooShort { len: usize, required: usize },
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("invalid savitzky-golay window: {0}")]
    InvalidWindow(String),
    #[error("series too short for trend fit: {0} samples")]
    TooShort(usize),
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
}

pub type Result<T> = std::result::Result<T, DspError>;

/// A uniformly sampled real-valued signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(DspError::InvalidSignal(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if samples.is_empty() {
            return Err(DspError::InvalidSignal("empty signal".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Same sample rate, new samples. Length must stay nonzero.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Signal {
        debug_assert!(!samples.is_empty());
        Signal {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

/// Arithmetic mean, computed as an offset from the first element so that a
/// constant input returns that constant bit-for-bit.
pub fn mean(xs: &[f64]) -> f64 {
    match xs.first() {
        None => 0.0,
        Some(&x0) => x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64,
    }
}

/// Population standard deviation.
pub fn population_sd(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Removes the least-squares linear trend.
pub fn detrend(signal: &Signal) -> Signal {
    let x = signal.samples();
    let n = x.len();
    if n == 1 {
        return signal.with_samples(vec![0.0]);
    }
    // centered index keeps the normal equations diagonal
    let tc = (n as f64 - 1.0) / 2.0;
    let ym = mean(x);
    let mut sty = 0.0;
    let mut stt = 0.0;
    for (i, &y) in x.iter().enumerate() {
        let t = i as f64 - tc;
        sty += t * (y - ym);
        stt += t * t;
    }
    let slope = sty / stt;
    let mut out: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, &y)| (y - ym) - slope * (i as f64 - tc))
        .collect();
    // second pass pins the residual mean to zero
    let m = mean(&out);
    out.iter_mut().for_each(|v| *v -= m);
    signal.with_samples(out)
}

/// Standard score with population SD. A zero-variance input maps to zeros.
pub fn zscore(signal: &Signal) -> Signal {
    let x = signal.samples();
    let m = mean(x);
    let sd = population_sd(x);
    if sd <= 1e-12 * (1.0 + m.abs()) {
        return signal.with_samples(vec![0.0; x.len()]);
    }
    signal.with_samples(x.iter().map(|v| (v - m) / sd).collect())
}

/// Centered sliding RMS; windows are truncated at the edges.
pub fn rms_envelope(signal: &Signal, window_s: f64) -> Result<Signal> {
    let width = (window_s * signal.sample_rate()).round();
    if !(width >= 1.0) {
        return Err(DspError::WindowTooSmall(format!(
            "{window_s} s at {} Hz is less than one sample",
            signal.sample_rate()
        )));
    }
    let width = width as usize;
    let x = signal.samples();
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in x {
        acc += v * v;
        prefix.push(acc);
    }
    let before = width / 2;
    let after = width - before - 1;
    let out = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after).min(n - 1);
            let ss = (prefix[hi + 1] - prefix[lo]).max(0.0);
            (ss / (hi + 1 - lo) as f64).sqrt()
        })
        .collect();
    Ok(signal.with_samples(out))
}

/// Trailing moving average over up to `n` samples (shorter at the start).
pub fn moving_average(series: &[f64], n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(n);
            let window = &series[lo..=i];
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect()
}

/// Least-squares trend `y = a + b t + c t^2` with `t` in seconds from the first
/// sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trend {
    pub linear: f64,
    pub quadratic: f64,
    pub r2: f64,
}

pub fn fit_trend(series: &[f64], sample_rate: f64) -> Result<Trend> {
    let n = series.len();
    if n < 3 {
        return Err(DspError::TooShort(n));
    }
    let ym = mean(series);
    let ss_tot: f64 = series.iter().map(|y| (y - ym) * (y - ym)).sum();
    if ss_tot <= 1e-24 * n as f64 * (1.0 + ym * ym) {
        return Ok(Trend {
            linear: 0.0,
            quadratic: 0.0,
            r2: 0.0,
        });
    }
    // fit in u = (i - center) / half, which lies in [-1, 1]
    let center = (n as f64 - 1.0) / 2.0;
    let half = center.max(1.0);
    let mut ata = Matrix3::<f64>::zeros();
    let mut aty = Vector3::<f64>::zeros();
    for (i, &y) in series.iter().enumerate() {
        let u = (i as f64 - center) / half;
        let row = Vector3::new(1.0, u, u * u);
        ata += row * row.transpose();
        aty += row * (y - ym);
    }
    let coef = ata
        .cholesky()
        .map(|c| c.solve(&aty))
        .ok_or(DspError::TooShort(n))?;
    let (alpha, beta, gamma) = (coef[0], coef[1], coef[2]);
    let ss_res: f64 = series
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let u = (i as f64 - center) / half;
            let r = (y - ym) - (alpha + beta * u + gamma * u * u);
            r * r
        })
        .sum();
    // back to t in seconds: u = (t*fs - center) / half
    let s = sample_rate / half;
    let tc = center / sample_rate;
    let quadratic = gamma * s * s;
    let linear = beta * s - 2.0 * quadratic * tc;
    let r2 = (1.0 - ss_res / ss_tot).clamp(0.0, 1.0);
    Ok(Trend {
        linear,
        quadratic,
        r2,
    })
}
