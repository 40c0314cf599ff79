use num_complex::Complex64;
use std::f64::consts::PI;

use super::{DspError, Result, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Lowpass,
    Highpass,
    Bandpass,
    Bandstop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// One cutoff for lowpass/highpass, `[low, high]` for band filters (Hz).
    pub cutoffs: Vec<f64>,
    pub order: usize,
}

impl FilterSpec {
    pub fn lowpass(cutoff: f64, order: usize) -> Self {
        Self { kind: FilterKind::Lowpass, cutoffs: vec![cutoff], order }
    }

    pub fn highpass(cutoff: f64, order: usize) -> Self {
        Self { kind: FilterKind::Highpass, cutoffs: vec![cutoff], order }
    }

    pub fn bandpass(low: f64, high: f64, order: usize) -> Self {
        Self { kind: FilterKind::Bandpass, cutoffs: vec![low, high], order }
    }

    pub fn bandstop(low: f64, high: f64, order: usize) -> Self {
        Self { kind: FilterKind::Bandstop, cutoffs: vec![low, high], order }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let nyq = sample_rate / 2.0;
        if self.order == 0 {
            return Err(DspError::InvalidCutoff("filter order must be positive".into()));
        }
        let expected = match self.kind {
            FilterKind::Lowpass | FilterKind::Highpass => 1,
            FilterKind::Bandpass | FilterKind::Bandstop => 2,
        };
        if self.cutoffs.len() != expected {
            return Err(DspError::InvalidCutoff(format!(
                "{:?} needs {expected} cutoff(s), got {}",
                self.kind,
                self.cutoffs.len()
            )));
        }
        for &c in &self.cutoffs {
            if !(c > 0.0 && c < nyq) {
                return Err(DspError::InvalidCutoff(format!(
                    "{c} Hz is outside (0, {nyq}) Hz"
                )));
            }
        }
        if expected == 2 && self.cutoffs[0] >= self.cutoffs[1] {
            return Err(DspError::InvalidCutoff(format!(
                "band edges must satisfy low < high, got {:?}",
                self.cutoffs
            )));
        }
        Ok(())
    }
}

/// Second-order sections, each `[b0, b1, b2, 1, a1, a2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<[f64; 6]>,
}

impl Sos {
    /// Digital Butterworth design via the bilinear transform.
    pub fn butterworth(spec: &FilterSpec, sample_rate: f64) -> Result<Sos> {
        spec.validate(sample_rate)?;
        let n = spec.order;
        // analog lowpass prototype, unit cutoff
        let proto: Vec<Complex64> = (0..n)
            .map(|k| {
                let m = -(n as f64) + 1.0 + 2.0 * k as f64;
                -Complex64::from_polar(1.0, PI * m / (2.0 * n as f64))
            })
            .collect();
        let fs2 = 2.0 * sample_rate;
        let warp = |f: f64| fs2 * (PI * f / sample_rate).tan();

        let (zeros, poles, gain) = match spec.kind {
            FilterKind::Lowpass => {
                let wo = warp(spec.cutoffs[0]);
                let p: Vec<_> = proto.iter().map(|p| p * wo).collect();
                (vec![], p, wo.powi(n as i32))
            }
            FilterKind::Highpass => {
                let wo = warp(spec.cutoffs[0]);
                let p: Vec<_> = proto.iter().map(|p| wo / p).collect();
                let k = (1.0 / prod(proto.iter().map(|p| -p))).re;
                (vec![Complex64::new(0.0, 0.0); n], p, k)
            }
            FilterKind::Bandpass => {
                let (w1, w2) = (warp(spec.cutoffs[0]), warp(spec.cutoffs[1]));
                let bw = w2 - w1;
                let wo = (w1 * w2).sqrt();
                let mut p = Vec::with_capacity(2 * n);
                for q in &proto {
                    let lp = q * (bw / 2.0);
                    let disc = (lp * lp - wo * wo).sqrt();
                    p.push(lp + disc);
                    p.push(lp - disc);
                }
                (vec![Complex64::new(0.0, 0.0); n], p, bw.powi(n as i32))
            }
            FilterKind::Bandstop => {
                let (w1, w2) = (warp(spec.cutoffs[0]), warp(spec.cutoffs[1]));
                let bw = w2 - w1;
                let wo = (w1 * w2).sqrt();
                let mut p = Vec::with_capacity(2 * n);
                for q in &proto {
                    let hp = (bw / 2.0) / q;
                    let disc = (hp * hp - wo * wo).sqrt();
                    p.push(hp + disc);
                    p.push(hp - disc);
                }
                let mut z = Vec::with_capacity(2 * n);
                for _ in 0..n {
                    z.push(Complex64::new(0.0, wo));
                    z.push(Complex64::new(0.0, -wo));
                }
                let k = (1.0 / prod(proto.iter().map(|p| -p))).re;
                (z, p, k)
            }
        };

        // bilinear transform
        let zd: Vec<Complex64> = zeros.iter().map(|z| (fs2 + z) / (fs2 - z)).collect();
        let pd: Vec<Complex64> = poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();
        let kd = gain
            * (prod(zeros.iter().map(|z| fs2 - z)) / prod(poles.iter().map(|p| fs2 - p))).re;
        let mut zd = zd;
        while zd.len() < pd.len() {
            zd.push(Complex64::new(-1.0, 0.0));
        }
        Ok(zpk_to_sos(zd, pd, kd))
    }

    /// Complex frequency response at `freq` Hz.
    pub fn response(&self, freq: f64, sample_rate: f64) -> Complex64 {
        let w = 2.0 * PI * freq / sample_rate;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| {
            acc * (s[0] + s[1] * z1 + s[2] * z2) / (1.0 + s[4] * z1 + s[5] * z2)
        })
    }

    /// Largest pole radius; sets how long transients ring.
    fn max_pole_radius(&self) -> f64 {
        self.sections
            .iter()
            .map(|s| {
                let (a1, a2) = (s[4], s[5]);
                let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
                let r1 = ((-a1 + disc) / 2.0).norm();
                let r2 = ((-a1 - disc) / 2.0).norm();
                r1.max(r2)
            })
            .fold(0.0, f64::max)
    }

    /// Minimum edge padding, as in the usual forward-backward convention.
    fn base_padding(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Single causal pass with transposed direct-form II sections, starting
    /// from the steady state for a constant input equal to `x[0]`.
    fn filter_with_steady_state(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let mut level = x0;
        for s in &self.sections {
            let (b0, b1, b2, a1, a2) = (s[0], s[1], s[2], s[4], s[5]);
            let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
            let y_ss = dc * level;
            let mut z2 = b2 * level - a2 * y_ss;
            let mut z1 = b1 * level - a1 * y_ss + z2;
            for v in x.iter_mut() {
                let xin = *v;
                let y = b0 * xin + z1;
                z1 = b1 * xin - a1 * y + z2;
                z2 = b2 * xin - a2 * y;
                *v = y;
            }
            level = y_ss;
        }
    }

    /// Forward-backward filtering with odd-reflection padding.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = x.len();
        let base = self.base_padding();
        if n <= base {
            return Err(DspError::SignalTooShort { len: n, required: base });
        }
        // pad long enough for edge transients to decay to ~1e-4
        let r = self.max_pole_radius();
        let decay = if r > 0.0 && r < 1.0 {
            ((1e-4f64).ln() / r.ln()).ceil() as usize
        } else {
            base
        };
        let pad = decay.max(base).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (first, last) = (x[0], x[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));
        self.filter_with_steady_state(&mut ext);
        ext.reverse();
        self.filter_with_steady_state(&mut ext);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}

fn prod(it: impl Iterator<Item = Complex64>) -> Complex64 {
    it.fold(Complex64::new(1.0, 0.0), |a, b| a * b)
}

const REAL_TOL: f64 = 1e-10;

/// Groups poles into conjugate pairs (or real pairs), assigns each group the
/// nearest remaining zeros, and emits sections with the overall gain folded
/// into the first one.
fn zpk_to_sos(zeros: Vec<Complex64>, poles: Vec<Complex64>, gain: f64) -> Sos {
    let mut pole_groups = group_conjugates(poles);
    let mut zeros_left = zeros;
    // poles nearest the unit circle pick their zeros first
    pole_groups.sort_by(|a, b| {
        let da = 1.0 - a[0].norm();
        let db = 1.0 - b[0].norm();
        da.partial_cmp(&db).unwrap()
    });
    let mut sections = Vec::with_capacity(pole_groups.len());
    for group in &pole_groups {
        let mut picked = Vec::new();
        for _ in 0..group.len() {
            if zeros_left.is_empty() {
                break;
            }
            let target = group[0];
            let (idx, _) = zeros_left
                .iter()
                .enumerate()
                .map(|(i, z)| (i, (z - target).norm()))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            let z = zeros_left.swap_remove(idx);
            if z.im.abs() > REAL_TOL {
                // take its conjugate too
                if let Some(j) = zeros_left
                    .iter()
                    .position(|w| (w - z.conj()).norm() < 1e-8 * (1.0 + z.norm()))
                {
                    zeros_left.swap_remove(j);
                }
                picked.push(z);
                picked.push(z.conj());
                break;
            }
            picked.push(z);
        }
        let b = poly_from_roots(&picked);
        let a = poly_from_roots(group);
        sections.push([b[0], b[1], b[2], 1.0, a[1], a[2]]);
    }
    // apply in the reverse order: poles near the unit circle go last
    sections.reverse();
    if let Some(first) = sections.first_mut() {
        first[0] *= gain;
        first[1] *= gain;
        first[2] *= gain;
    }
    Sos { sections }
}

fn group_conjugates(poles: Vec<Complex64>) -> Vec<Vec<Complex64>> {
    let mut groups = Vec::new();
    let mut reals = Vec::new();
    for p in &poles {
        if p.im.abs() <= REAL_TOL * (1.0 + p.norm()) {
            reals.push(Complex64::new(p.re, 0.0));
        } else if p.im > 0.0 {
            groups.push(vec![*p, p.conj()]);
        }
    }
    reals.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
    for chunk in reals.chunks(2) {
        groups.push(chunk.to_vec());
    }
    groups
}

/// Monic polynomial with the given (at most two) roots, as `[1, c1, c2]`.
fn poly_from_roots(roots: &[Complex64]) -> [f64; 3] {
    match roots {
        [] => [1.0, 0.0, 0.0],
        [r] => [1.0, -r.re, 0.0],
        [r1, r2] => [1.0, -(r1 + r2).re, (r1 * r2).re],
        _ => unreachable!("sections hold at most two roots"),
    }
}

/// Zero-phase Butterworth filtering.
pub fn iir_filter(signal: &Signal, spec: &FilterSpec) -> Result<Signal> {
    let sos = Sos::butterworth(spec, signal.sample_rate())?;
    Ok(signal.with_samples(sos.filtfilt(signal.samples())?))
}

/// Order-2 Butterworth bandstop of total width `width` around `f0`. The
/// edges are nudged (by far less than a hertz) so that the null of the
/// bilinear-transformed filter falls exactly on `f0`.
pub fn notch_filter(signal: &Signal, f0: f64, width: f64) -> Result<Signal> {
    let fs = signal.sample_rate();
    if !(width > 0.0 && f0 - width / 2.0 > 0.0 && f0 + width / 2.0 < fs / 2.0) {
        return Err(DspError::InvalidCutoff(format!(
            "notch {f0} Hz of width {width} Hz does not fit below {} Hz",
            fs / 2.0
        )));
    }
    let warp = |f: f64| (std::f64::consts::PI * f / fs).tan();
    let target = warp(f0).powi(2);
    let (mut lo, mut hi) = (f0 - width, f0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if warp(mid) * warp(mid + width) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let low = 0.5 * (lo + hi);
    iir_filter(signal, &FilterSpec::bandstop(low, low + width, 2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, fs: f64, secs: f64) -> Vec<f64> {
        let n = (fs * secs) as usize;
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    // Closed-form Butterworth magnitude under the bilinear map, used as an
    // independent check on the pole/zero construction.
    fn analytic_lowpass_mag(f: f64, fc: f64, fs: f64, n: i32) -> f64 {
        let ratio = (PI * f / fs).tan() / (PI * fc / fs).tan();
        1.0 / (1.0 + ratio.powi(2 * n)).sqrt()
    }

    fn analytic_bandpass_mag(f: f64, f1: f64, f2: f64, fs: f64, n: i32) -> f64 {
        let w = (PI * f / fs).tan();
        let (w1, w2) = ((PI * f1 / fs).tan(), (PI * f2 / fs).tan());
        let x = (w * w - w1 * w2) / (w * (w2 - w1));
        1.0 / (1.0 + x.powi(2 * n)).sqrt()
    }

    #[test]
    fn lowpass_matches_closed_form_magnitude() {
        for &(fc, n) in &[(10.0, 4), (3.0, 4), (0.05, 4), (100.0, 3), (40.0, 5)] {
            let sos = Sos::butterworth(&FilterSpec::lowpass(fc, n), 1000.0).unwrap();
            for &f in &[0.0, fc * 0.3, fc, fc * 1.7, fc * 4.0] {
                if f >= 500.0 {
                    continue;
                }
                let got = sos.response(f, 1000.0).norm();
                let want = analytic_lowpass_mag(f, fc, 1000.0, n as i32);
                assert!((got - want).abs() < 1e-6, "fc={fc} n={n} f={f}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn highpass_and_band_match_closed_form() {
        let sos = Sos::butterworth(&FilterSpec::highpass(0.5, 4), 1000.0).unwrap();
        for &f in &[0.1, 0.5, 2.0, 50.0] {
            let ratio = (PI * 0.5 / 1000.0).tan() / (PI * f / 1000.0).tan();
            let want = 1.0 / (1.0 + ratio.powi(8)).sqrt();
            assert!((sos.response(f, 1000.0).norm() - want).abs() < 1e-6);
        }
        let sos = Sos::butterworth(&FilterSpec::bandpass(5.0, 250.0, 4), 1000.0).unwrap();
        for &f in &[1.0, 5.0, 40.0, 100.0, 250.0, 400.0] {
            let want = analytic_bandpass_mag(f, 5.0, 250.0, 1000.0, 4);
            assert!((sos.response(f, 1000.0).norm() - want).abs() < 1e-6, "f={f}");
        }
        let sos = Sos::butterworth(&FilterSpec::bandpass(0.05, 3.0, 2), 1000.0).unwrap();
        for &f in &[0.01, 0.05, 0.4, 3.0, 20.0] {
            let want = analytic_bandpass_mag(f, 0.05, 3.0, 1000.0, 2);
            assert!((sos.response(f, 1000.0).norm() - want).abs() < 1e-6, "f={f}");
        }
        let sos = Sos::butterworth(&FilterSpec::bandstop(58.5, 61.5, 2), 1000.0).unwrap();
        for &f in &[30.0, 58.5, 59.0, 61.5, 120.0] {
            let want = (1.0 - analytic_bandpass_mag(f, 58.5, 61.5, 1000.0, 2).powi(2)).sqrt();
            assert!((sos.response(f, 1000.0).norm() - want).abs() < 1e-6, "f={f}");
        }
    }

    #[test]
    fn dc_passes_lowpass_unchanged() {
        let s = Signal::new(vec![2.0; 5000], 1000.0).unwrap();
        let out = iir_filter(&s, &FilterSpec::lowpass(10.0, 4)).unwrap();
        assert!(out.samples().iter().all(|v| (v - 2.0).abs() < 1e-6));
    }

    #[test]
    fn bandstop_and_bandpass_on_sines() {
        let s = Signal::new(sine(60.0, 1000.0, 10.0), 1000.0).unwrap();
        let out = iir_filter(&s, &FilterSpec::bandstop(58.5, 61.5, 2)).unwrap();
        assert!(rms(out.samples()) < 0.05, "{}", rms(out.samples()));

        let x = sine(100.0, 1000.0, 10.0);
        let s = Signal::new(x.clone(), 1000.0).unwrap();
        let out = iir_filter(&s, &FilterSpec::bandpass(5.0, 250.0, 4)).unwrap();
        let ratio = rms(out.samples()) / rms(&x);
        assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn notch_cascade() {
        let s = Signal::new(sine(60.0, 1000.0, 10.0), 1000.0).unwrap();
        assert!(rms(notch_filter(&s, 60.0, 3.0).unwrap().samples()) < 0.05);

        let x = sine(30.0, 1000.0, 10.0);
        let s = Signal::new(x.clone(), 1000.0).unwrap();
        let ratio = rms(notch_filter(&s, 60.0, 3.0).unwrap().samples()) / rms(&x);
        assert!((ratio - 1.0).abs() < 0.05);

        let mut x = vec![0.0; 10_000];
        for f in [60.0, 120.0, 180.0, 240.0] {
            for (v, s) in x.iter_mut().zip(sine(f, 1000.0, 10.0)) {
                *v += s;
            }
        }
        let mut s = Signal::new(x, 1000.0).unwrap();
        for f in [60.0, 120.0, 180.0, 240.0] {
            s = notch_filter(&s, f, 3.0).unwrap();
        }
        assert!(rms(s.samples()) < 0.1, "{}", rms(s.samples()));
    }

    #[test]
    fn zero_phase_keeps_pulse_peak() {
        let n = 4001;
        let x: Vec<f64> = (0..n)
            .map(|i| (-((i as f64 - 2000.0) / 30.0).powi(2)).exp())
            .collect();
        let s = Signal::new(x, 1000.0).unwrap();
        for spec in [FilterSpec::lowpass(10.0, 4), FilterSpec::bandpass(1.0, 40.0, 3)] {
            let out = iir_filter(&s, &spec).unwrap();
            let argmax = out
                .samples()
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert!((argmax as i64 - 2000).abs() <= 1, "{argmax}");
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let s = Signal::new(vec![0.0; 100], 1000.0).unwrap();
        assert!(matches!(iir_filter(&s, &FilterSpec::lowpass(600.0, 4)), Err(DspError::InvalidCutoff(_))));
        assert!(matches!(iir_filter(&s, &FilterSpec::bandpass(50.0, 20.0, 4)), Err(DspError::InvalidCutoff(_))));
        assert!(matches!(iir_filter(&s, &FilterSpec::lowpass(0.0, 4)), Err(DspError::InvalidCutoff(_))));
        let short = Signal::new(vec![0.0; 10], 1000.0).unwrap();
        assert!(matches!(
            iir_filter(&short, &FilterSpec::lowpass(10.0, 4)),
            Err(DspError::SignalTooShort { .. })
        ));
    }
}
