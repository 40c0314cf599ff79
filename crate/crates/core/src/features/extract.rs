use std::str::FromStr;

use crate::dsp::{detect_peaks, fit_trend, mean, population_sd, Signal, Sos};

use super::clean::decompose_with;
use super::{FeatureError, Result};

/// Feature families with a fixed output width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Bvp,
    Ecg,
    Rsp,
    Eda,
    Emg,
}

impl FeatureKind {
    pub fn width(self) -> usize {
        self.names().len()
    }

    pub fn names(self) -> &'static [&'static str] {
        match self {
            FeatureKind::Bvp => &RATE_NAMES,
            FeatureKind::Ecg => &ECG_NAMES,
            FeatureKind::Rsp => &RSP_NAMES,
            FeatureKind::Eda => &EDA_NAMES,
            FeatureKind::Emg => &EMG_NAMES,
        }
    }
}

impl FromStr for FeatureKind {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bvp" | "ppg" => Ok(FeatureKind::Bvp),
            "ecg" => Ok(FeatureKind::Ecg),
            "rsp" => Ok(FeatureKind::Rsp),
            "eda" | "gsr" => Ok(FeatureKind::Eda),
            "emg" => Ok(FeatureKind::Emg),
            _ => Err(FeatureError::UnknownKind(s.to_string())),
        }
    }
}

const RATE_NAMES: [&str; 10] = [
    "rate_baseline",
    "rate_max",
    "rate_min",
    "rate_mean",
    "rate_sd",
    "rate_max_time",
    "rate_min_time",
    "rate_trend_linear",
    "rate_trend_quadratic",
    "rate_trend_r2",
];

const ECG_NAMES: [&str; 15] = [
    "rate_baseline",
    "rate_max",
    "rate_min",
    "rate_mean",
    "rate_sd",
    "rate_max_time",
    "rate_min_time",
    "rate_trend_linear",
    "rate_trend_quadratic",
    "rate_trend_r2",
    "atrial_phase",
    "atrial_completion",
    "ventricular_phase",
    "ventricular_completion",
    "quality_mean",
];

const RSP_NAMES: [&str; 20] = [
    "rate_baseline",
    "rate_max",
    "rate_min",
    "rate_mean",
    "rate_sd",
    "rate_max_time",
    "rate_min_time",
    "rate_trend_linear",
    "rate_trend_quadratic",
    "rate_trend_r2",
    "amplitude_baseline",
    "amplitude_max",
    "amplitude_min",
    "amplitude_meanraw",
    "amplitude_mean",
    "amplitude_sd",
    "phase",
    "phase_completion",
    "rvt_baseline",
    "rvt_mean",
];

const EDA_NAMES: [&str; 6] = [
    "peak_amplitude",
    "scr_count",
    "scr_peak_amplitude",
    "scr_peak_amplitude_time",
    "scr_rise_time",
    "scr_recovery_time",
];

const EMG_NAMES: [&str; 6] = [
    "activation",
    "amplitude_mean",
    "amplitude_max",
    "amplitude_sd",
    "amplitude_max_time",
    "bursts",
];

/// One trailing window of a cleaned channel with the events detected on the
/// whole recording, re-indexed relative to the window start.
#[derive(Debug, Clone, Copy)]
pub struct WindowInput<'a> {
    pub samples: &'a [f64],
    pub sample_rate: f64,
    /// Peaks (R-peaks, pulses, breath maxima).
    pub events: &'a [usize],
    /// Breath minima; only used for respiration.
    pub troughs: &'a [usize],
}

/// Linear interpolation through `(index, value)` points, held constant before
/// the first and after the last.
fn interpolate(points: &[(usize, f64)], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    if points.is_empty() {
        return out;
    }
    let (first_i, first_v) = points[0];
    let (last_i, last_v) = points[points.len() - 1];
    for o in out.iter_mut().take(first_i.min(len)) {
        *o = first_v;
    }
    for w in points.windows(2) {
        let (i0, v0) = w[0];
        let (i1, v1) = w[1];
        for i in i0..i1.min(len) {
            let f = (i - i0) as f64 / (i1 - i0) as f64;
            out[i] = v0 + f * (v1 - v0);
        }
    }
    for o in out.iter_mut().skip(last_i) {
        *o = last_v;
    }
    out
}

/// Events per minute at each sample: 60/IBI placed at each peak (the first
/// peak takes the first interval), linear between peaks, held at the ends.
pub fn rate_track_from_peaks(peaks: &[usize], length: usize, sample_rate: f64) -> Result<Vec<f64>> {
    if peaks.len() < 2 {
        return Err(FeatureError::TooFewPeaks(peaks.len()));
    }
    let mut points = Vec::with_capacity(peaks.len());
    for (k, &p) in peaks.iter().enumerate() {
        let ibi = if k == 0 { peaks[1] - peaks[0] } else { p - peaks[k - 1] };
        points.push((p, 60.0 * sample_rate / ibi as f64));
    }
    Ok(interpolate(&points, length))
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v < xs[best] {
            best = i;
        }
    }
    best
}

fn track_stats(track: &[f64], fs: f64) -> [f64; 10] {
    let imax = argmax(track);
    let imin = argmin(track);
    let (linear, quadratic, r2) = match fit_trend(track, fs) {
        Ok(t) => (t.linear, t.quadratic, t.r2),
        Err(_) => (0.0, 0.0, 0.0),
    };
    [
        track[0],
        track[imax],
        track[imin],
        mean(track),
        population_sd(track),
        imax as f64 / fs,
        imin as f64 / fs,
        linear,
        quadratic,
        r2,
    ]
}

fn rate_block(w: &WindowInput) -> [f64; 10] {
    match rate_track_from_peaks(w.events, w.samples.len(), w.sample_rate) {
        Ok(track) => track_stats(&track, w.sample_rate),
        Err(_) => [f64::NAN; 10],
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    if da <= 0.0 || db <= 0.0 {
        0.0
    } else {
        num / (da * db).sqrt()
    }
}

fn ecg_block(w: &WindowInput) -> Vec<f64> {
    let mut out = rate_block(w).to_vec();
    let n = w.samples.len();
    let end = n - 1;
    let peaks = w.events;
    let mut phases = [0.0; 4];
    if peaks.len() >= 2 {
        let r = peaks[peaks.len() - 1] as f64;
        let rr = r - peaks[peaks.len() - 2] as f64;
        let since = end as f64 - r;
        if since < 0.4 * rr {
            phases[2] = 1.0;
            phases[3] = since / (0.4 * rr);
        } else if since >= 0.8 * rr && since < rr {
            phases[0] = 1.0;
            phases[1] = (since - 0.8 * rr) / (0.2 * rr);
        }
    }
    out.extend_from_slice(&phases);

    let before = (0.2 * w.sample_rate) as usize;
    let after = (0.4 * w.sample_rate) as usize;
    let beats: Vec<&[f64]> = peaks
        .iter()
        .filter(|&&p| p >= before && p + after <= n)
        .map(|&p| &w.samples[p - before..p + after])
        .collect();
    let quality = if beats.len() >= 2 {
        let len = before + after;
        let template: Vec<f64> = (0..len)
            .map(|i| beats.iter().map(|b| b[i]).sum::<f64>() / beats.len() as f64)
            .collect();
        beats.iter().map(|b| pearson(b, &template)).sum::<f64>() / beats.len() as f64
    } else {
        f64::NAN
    };
    out.push(quality);
    out
}

fn rsp_block(w: &WindowInput) -> Vec<f64> {
    let fs = w.sample_rate;
    let n = w.samples.len();
    let mut out = rate_block(w).to_vec();

    // amplitude of each breath: peak minus the latest trough before it
    let mut amps: Vec<(usize, f64)> = Vec::new();
    for &p in w.events {
        if let Some(&t) = w.troughs.iter().rev().find(|&&t| t < p) {
            amps.push((p, w.samples[p] - w.samples[t]));
        }
    }
    let rate = rate_track_from_peaks(w.events, n, fs).ok();
    match (&rate, amps.is_empty()) {
        (Some(rate), false) => {
            let track = interpolate(&amps, n);
            let raw: Vec<f64> = amps.iter().map(|a| a.1).collect();
            out.extend_from_slice(&[
                track[0],
                track[argmax(&track)],
                track[argmin(&track)],
                mean(&raw),
                mean(&track),
                population_sd(&track),
            ]);
            let rvt: Vec<f64> = track.iter().zip(rate).map(|(a, r)| a * r / 60.0).collect();
            let (phase, completion) = breath_phase(w);
            out.extend_from_slice(&[phase, completion, rvt[0], mean(&rvt)]);
        }
        _ => {
            out.extend_from_slice(&[f64::NAN; 6]);
            let (phase, completion) = breath_phase(w);
            out.extend_from_slice(&[phase, completion, f64::NAN, f64::NAN]);
        }
    }
    out
}

/// 1 while inhaling (last extremum a trough), 0 while exhaling; completion is
/// the elapsed fraction of the mean duration of that half-cycle.
fn breath_phase(w: &WindowInput) -> (f64, f64) {
    let end = w.samples.len() - 1;
    let last_peak = w.events.last().copied();
    let last_trough = w.troughs.last().copied();
    let inhaling = match (last_peak, last_trough) {
        (None, None) => return (0.0, 0.0),
        (Some(_), None) => false,
        (None, Some(_)) => true,
        (Some(p), Some(t)) => t > p,
    };
    let since = (end - if inhaling { last_trough.unwrap() } else { last_peak.unwrap() }) as f64;
    // half-cycle durations: trough -> next peak (inhale) or peak -> next trough
    let (from, to) = if inhaling { (w.troughs, w.events) } else { (w.events, w.troughs) };
    let spans: Vec<f64> = from
        .iter()
        .filter_map(|&a| to.iter().find(|&&b| b > a).map(|&b| (b - a) as f64))
        .collect();
    let completion = if spans.is_empty() {
        0.0
    } else {
        (since / mean(&spans)).min(1.0)
    };
    (if inhaling { 1.0 } else { 0.0 }, completion)
}

fn eda_block(w: &WindowInput, tonic_filter: &Sos) -> Vec<f64> {
    let n = w.samples.len();
    let fs = w.sample_rate;
    let Ok((_, phasic)) = decompose_with(tonic_filter, w.samples) else {
        return vec![0.0; 6];
    };
    let peak_amplitude = phasic.iter().cloned().fold(0.0, f64::max);
    let Ok(signal) = Signal::new(phasic.clone(), fs) else {
        return vec![0.0; 6];
    };
    let peaks = detect_peaks(&signal, 1.0, 0.01);
    let mut amps = Vec::new();
    let mut times = Vec::new();
    let mut rises = Vec::new();
    let mut recoveries = Vec::new();
    let mut prev = 0usize;
    for &p in &peaks {
        let onset = prev + argmin(&phasic[prev..=p]);
        let amp = phasic[p] - phasic[onset];
        prev = p;
        if amp <= 0.0 {
            continue;
        }
        let half = phasic[onset] + 0.5 * amp;
        let recovered = phasic[p..].iter().position(|&v| v <= half).unwrap_or(n - 1 - p);
        amps.push(amp);
        times.push(p as f64 / fs);
        rises.push((p - onset) as f64 / fs);
        recoveries.push(recovered as f64 / fs);
    }
    let avg = |xs: &[f64]| if xs.is_empty() { 0.0 } else { mean(xs) };
    vec![
        peak_amplitude,
        amps.len() as f64,
        avg(&amps),
        avg(&times),
        avg(&rises),
        avg(&recoveries),
    ]
}

fn emg_block(w: &WindowInput) -> Vec<f64> {
    let e = w.samples;
    let active = e.iter().filter(|&&v| v > 1.0).count();
    let bursts = e.windows(2).filter(|p| p[0] <= 1.0 && p[1] > 1.0).count();
    let imax = argmax(e);
    vec![
        active as f64 / e.len() as f64,
        mean(e),
        e[imax],
        population_sd(e),
        imax as f64 / w.sample_rate,
        bursts as f64,
    ]
}

/// Features of one window. Rate-derived values that need two events come
/// back as NaN; frame building replaces them with the previous row's value.
pub fn extract_features(kind: FeatureKind, window: &WindowInput) -> Result<Vec<f64>> {
    if window.samples.is_empty() {
        return Err(FeatureError::InvalidConfig("empty feature window".into()));
    }
    Ok(match kind {
        FeatureKind::Bvp => rate_block(window).to_vec(),
        FeatureKind::Ecg => ecg_block(window),
        FeatureKind::Rsp => rsp_block(window),
        FeatureKind::Eda => eda_block(window, &super::clean::eda_tonic_filter(window.sample_rate)?),
        FeatureKind::Emg => emg_block(window),
    })
}

pub(crate) fn extract_eda(window: &WindowInput, tonic_filter: &Sos) -> Vec<f64> {
    eda_block(window, tonic_filter)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 1000.0;

    fn input<'a>(samples: &'a [f64], events: &'a [usize]) -> WindowInput<'a> {
        WindowInput {
            samples,
            sample_rate: FS,
            events,
            troughs: &[],
        }
    }

    #[test]
    fn uniform_rate() {
        let peaks: Vec<usize> = (0..10).map(|k| 500 + 1000 * k).collect();
        let track = rate_track_from_peaks(&peaks, 10_000, FS).unwrap();
        assert!(track.iter().all(|r| (r - 60.0).abs() < 1e-12));
    }

    #[test]
    fn alternating_intervals() {
        // intervals 0.5 s, 1.0 s, 0.5 s, 1.0 s
        let peaks = [0usize, 500, 1500, 2000, 3000];
        let track = rate_track_from_peaks(&peaks, 3500, FS).unwrap();
        assert_eq!(track[500], 120.0);
        assert_eq!(track[1500], 60.0);
        assert_eq!(track[2000], 120.0);
        assert_eq!(track[3000], 60.0);
        // linear ramp between 120 at 500 and 60 at 1500
        assert!((track[1000] - 90.0).abs() < 1e-12);
        assert!((track[750] - 105.0).abs() < 1e-12);
        // held after the last peak, first interval before the first
        assert_eq!(track[3400], 60.0);
        assert_eq!(track[0], 120.0);
    }

    #[test]
    fn too_few_peaks() {
        assert!(matches!(
            rate_track_from_peaks(&[3], 100, FS),
            Err(FeatureError::TooFewPeaks(1))
        ));
    }

    #[test]
    fn constant_rate_window() {
        let samples = vec![0.0; 10_000];
        let peaks: Vec<usize> = (0..10).map(|k| 300 + 1000 * k).collect();
        let f = extract_features(FeatureKind::Bvp, &input(&samples, &peaks)).unwrap();
        assert_eq!(f.len(), 10);
        assert_eq!(f[0], 60.0);
        assert!((f[3] - 60.0).abs() < 1e-12);
        assert!(f[4].abs() < 1e-12);
        assert!(f[7].abs() < 1e-9);
        assert_eq!(f[9], 0.0);
    }

    #[test]
    fn quiet_eda_has_no_events() {
        let samples = vec![3.0; 4000];
        let f = extract_features(FeatureKind::Eda, &input(&samples, &[])).unwrap();
        assert_eq!(f, vec![0.0; 6]);
    }

    #[test]
    fn eda_single_response() {
        let samples: Vec<f64> = (0..4000)
            .map(|i| {
                let t = i as f64 / FS - 1.0;
                2.0 + if t > 0.0 { 0.3 * ((-t / 2.0).exp() - (-t / 0.3).exp()) } else { 0.0 }
            })
            .collect();
        let f = extract_features(FeatureKind::Eda, &input(&samples, &[])).unwrap();
        assert_eq!(f[1], 1.0);
        assert!(f[2] > 0.05);
        assert!(f[4] > 0.3 && f[4] < 1.5, "rise {}", f[4]);
    }

    #[test]
    fn widths() {
        assert_eq!(
            [FeatureKind::Bvp, FeatureKind::Ecg, FeatureKind::Rsp, FeatureKind::Eda, FeatureKind::Emg]
                .map(FeatureKind::width),
            [10, 15, 20, 6, 6]
        );
        assert!(matches!("skt".parse::<FeatureKind>(), Err(FeatureError::UnknownKind(_))));
    }

    #[test]
    fn ecg_phases() {
        let samples = vec![0.0; 2000];
        // RR = 1000; window end 1999 is 799 after the last beat: neither phase
        let f = extract_features(FeatureKind::Ecg, &input(&samples, &[200, 1200])).unwrap();
        assert_eq!(&f[10..14], &[0.0, 0.0, 0.0, 0.0]);
        // 100 after the last beat: ventricular, a quarter complete
        let f = extract_features(FeatureKind::Ecg, &input(&samples, &[899, 1899])).unwrap();
        assert_eq!(f[12], 1.0);
        assert!((f[13] - 0.25).abs() < 1e-12);
        // 900 after: atrial, halfway
        let f = extract_features(FeatureKind::Ecg, &input(&samples, &[99, 1099])).unwrap();
        assert_eq!(f[10], 1.0);
        assert!((f[11] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ecg_quality_of_identical_beats() {
        let mut samples = vec![0.0; 5000];
        let beats = [500usize, 1500, 2500, 3500];
        for &b in &beats {
            for k in 0..600 {
                let t = (k as f64 - 200.0) / FS;
                samples[b - 200 + k] += (-(t / 0.01).powi(2)).exp() + 0.2 * (-((t - 0.25) / 0.04).powi(2)).exp();
            }
        }
        let f = extract_features(FeatureKind::Ecg, &input(&samples, &beats)).unwrap();
        assert!((f[14] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn emg_window() {
        let mut e = vec![0.5; 1000];
        for v in &mut e[200..300] {
            *v = 2.0;
        }
        for v in &mut e[600..650] {
            *v = 3.0;
        }
        let f = extract_features(FeatureKind::Emg, &input(&e, &[])).unwrap();
        assert!((f[0] - 0.15).abs() < 1e-12);
        assert_eq!(f[2], 3.0);
        assert!((f[4] - 0.6).abs() < 1e-12);
        assert_eq!(f[5], 2.0);
    }

    #[test]
    fn respiration_amplitude_and_phase() {
        // 4 s breaths of amplitude 2 (peak 1, trough -1)
        let n = 10_000;
        let samples: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * i as f64 / 4000.0).sin()).collect();
        let peaks = [1000usize, 5000, 9000];
        let troughs = [3000usize, 7000];
        let w = WindowInput {
            samples: &samples,
            sample_rate: FS,
            events: &peaks,
            troughs: &troughs,
        };
        let f = extract_features(FeatureKind::Rsp, &w).unwrap();
        assert_eq!(f.len(), 20);
        assert!((f[3] - 15.0).abs() < 1e-12);
        assert!((f[13] - 2.0).abs() < 1e-12);
        // last extremum is the peak at 9000: exhaling, 999 of 2000 samples in
        assert_eq!(f[16], 0.0);
        assert!((f[17] - 999.0 / 2000.0).abs() < 1e-12);
        assert!((f[19] - 2.0 * 15.0 / 60.0).abs() < 1e-12);
    }
}
