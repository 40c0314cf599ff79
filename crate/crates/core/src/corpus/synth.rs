//! Seeded synthetic corpus whose physiology is driven by a latent affect
//! trajectory. The written ratings are the latent trajectory itself, delayed
//! by `label_lag`.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::index::{enumerate_dataset, DatasetIndex, Scenario, Split};
use super::io::{save_annotations, save_recording};
use super::{
    AnnotationTrack, Channel, CorpusError, Recording, Result, TimeUnit, ANNOTATION_STEP,
    RATING_MAX, RATING_MIN, SAMPLE_RATE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub subjects: u32,
    pub videos: u32,
    /// Session length in seconds.
    pub duration: f64,
    pub scenarios: Vec<Scenario>,
    /// 0 decouples every channel from the latent affect.
    pub coupling_gain: f64,
    /// Multiplier on sensor noise.
    pub noise: f64,
    /// Ratings at time t equal the latent state at t - label_lag.
    pub label_lag: f64,
    /// SD of white 1 kHz jitter added to the latent trajectory.
    pub jitter: f64,
    /// Half-width of the band latent targets are drawn from.
    pub spread: f64,
    /// Across-time test segment length, taken from the session end.
    pub test_duration: f64,
    /// Unrecorded interval between across-time train and test segments.
    pub gap: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            subjects: 4,
            videos: 4,
            duration: 60.0,
            scenarios: vec![Scenario::AcrossTime],
            coupling_gain: 1.0,
            noise: 1.0,
            label_lag: 0.0,
            jitter: 0.0,
            spread: 3.0,
            test_duration: 20.0,
            gap: 4.0,
        }
    }
}

const PREROLL: usize = 1000;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CorpusError::InvalidSpec(m.to_string()));
        let finite = [
            self.duration,
            self.coupling_gain,
            self.noise,
            self.label_lag,
            self.jitter,
            self.spread,
            self.test_duration,
            self.gap,
        ];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("numeric parameters must be finite and non-negative");
        }
        if self.subjects == 0 || self.videos == 0 {
            return bad("need at least one subject and one video");
        }
        if self.duration < 10.0 {
            return bad("duration must be at least 10 s");
        }
        if self.label_lag * SAMPLE_RATE > PREROLL as f64 {
            return bad("label_lag must not exceed 1 s");
        }
        if self.scenarios.is_empty() {
            return bad("no scenarios requested");
        }
        for sc in &self.scenarios {
            match sc {
                Scenario::AcrossTime => {
                    if self.test_duration < 1.0 || self.duration - self.test_duration - self.gap < 5.0 {
                        return bad("across_time needs a test segment of at least 1 s and 5 s of training");
                    }
                }
                Scenario::AcrossSubject => {
                    if self.subjects < 2 {
                        return bad("across_subject needs at least two subjects");
                    }
                }
                Scenario::AcrossElicitor => {
                    if self.videos % 4 != 0 {
                        return bad("across_elicitor needs a multiple of four videos");
                    }
                }
                Scenario::AcrossVersion => {
                    if self.videos % 4 != 0 || self.videos < 8 {
                        return bad("across_version needs at least two versions of four videos");
                    }
                }
            }
        }
        Ok(())
    }
}

/// Latent valence/arousal at 1 kHz. Index `offset + i` is session sample `i`;
/// the first `offset` samples precede the session so lagged ratings exist.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentAffect {
    pub valence: Vec<f64>,
    pub arousal: Vec<f64>,
    pub offset: usize,
}

impl LatentAffect {
    pub fn session_len(&self) -> usize {
        self.valence.len() - self.offset
    }

    /// A latent state held constant over the whole session.
    pub fn constant(valence: f64, arousal: f64, samples: usize) -> Self {
        LatentAffect {
            valence: vec![valence; samples + PREROLL],
            arousal: vec![arousal; samples + PREROLL],
            offset: PREROLL,
        }
    }
}

/// Quadrant signs of a synthetic video: (high valence, high arousal).
pub fn video_quadrant(video_id: u32) -> (bool, bool) {
    match video_id % 4 {
        0 => (true, true),
        1 => (false, true),
        2 => (false, false),
        _ => (true, false),
    }
}

fn mix(parts: &[u64]) -> u64 {
    // splitmix64 folded over the parts
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

fn stream(seed: u64, subject: u32, video: u32, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(&[seed, subject as u64, video as u64, purpose]))
}

fn one_axis(rng: &mut ChaCha8Rng, high: bool, spread: f64, total: usize) -> Vec<f64> {
    let centre = if high { 6.5 } else { 3.5 };
    let omega = 2.0 * PI * 0.12;
    let zeta = 0.85;
    let dt = 1.0 / SAMPLE_RATE;
    let draw = |rng: &mut ChaCha8Rng| {
        (centre + spread * (2.0 * rng.random::<f64>() - 1.0)).clamp(RATING_MIN, RATING_MAX)
    };
    let mut target = draw(rng);
    let mut x = target;
    let mut vel = 0.0;
    let mut next_switch = 0usize;
    let mut out = Vec::with_capacity(total);
    for i in 0..total {
        if i == next_switch {
            target = draw(rng);
            next_switch = i + ((4.0 + 5.0 * rng.random::<f64>()) * SAMPLE_RATE) as usize;
        }
        vel += (omega * omega * (target - x) - 2.0 * zeta * omega * vel) * dt;
        x += vel * dt;
        out.push(x);
    }
    out
}

/// Damped-oscillator trajectory chasing piecewise-constant targets drawn
/// around the video's quadrant centre.
pub fn latent_trajectory(seed: u64, subject: u32, video: u32, samples: usize, spec: &SynthSpec) -> LatentAffect {
    let (hv, ha) = video_quadrant(video);
    let total = samples + PREROLL;
    let mut rng = stream(seed, subject, video, 1);
    let mut valence = one_axis(&mut rng, hv, spec.spread, total);
    let mut arousal = one_axis(&mut rng, ha, spec.spread, total);
    if spec.jitter > 0.0 {
        let mut rng = stream(seed, subject, video, 2);
        for x in valence.iter_mut().chain(arousal.iter_mut()) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x += spec.jitter * z;
        }
    }
    for x in valence.iter_mut().chain(arousal.iter_mut()) {
        *x = x.clamp(RATING_MIN, RATING_MAX);
    }
    LatentAffect {
        valence,
        arousal,
        offset: PREROLL,
    }
}

fn gauss(t: f64, centre: f64, width: f64) -> f64 {
    (-((t - centre) / width).powi(2)).exp()
}

fn add_kernel(out: &mut [f64], at: isize, kernel: &[f64], kernel_origin: isize) {
    for (j, k) in kernel.iter().enumerate() {
        let idx = at + j as isize - kernel_origin;
        if idx >= 0 && (idx as usize) < out.len() {
            out[idx as usize] += k;
        }
    }
}

/// Beat onsets from an integrated instantaneous rate (events per minute).
fn event_times(rate: impl Fn(usize) -> f64, n: usize, variability: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut phase: f64 = rng.random();
    let mut factor = 1.0;
    let mut beats = Vec::new();
    for i in 0..n {
        phase += rate(i) * factor / 60.0 / SAMPLE_RATE;
        if phase >= 1.0 {
            phase -= 1.0;
            beats.push(i);
            let z: f64 = StandardNormal.sample(rng);
            factor = (1.0 + variability * z).clamp(0.8, 1.2);
        }
    }
    beats
}

fn noise_vec(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect()
}

/// Synthesizes the eight channels for one session. Random draws do not depend
/// on the latent state, so with zero coupling the output is independent of it.
pub fn synthesize_session(latent: &LatentAffect, spec: &SynthSpec, seed: u64) -> [Vec<f64>; 8] {
    let n = latent.session_len();
    let g = spec.coupling_gain;
    let nz = spec.noise;
    let v = |i: usize| latent.valence[latent.offset + i];
    let a = |i: usize| latent.arousal[latent.offset + i];
    let t = |i: usize| i as f64 / SAMPLE_RATE;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, 0x5e55]));
    let mut fork = |k: u64| ChaCha8Rng::seed_from_u64(mix(&[rng.random::<u64>(), k]));

    // ECG and BVP share beat timing.
    let mut r = fork(1);
    let beats = event_times(|i| 70.0 + g * 6.0 * (a(i) - 5.0), n, 0.03, &mut r);
    let ecg_kernel: Vec<f64> = (-300..=450)
        .map(|k| {
            let s = k as f64 / SAMPLE_RATE;
            0.12 * gauss(s, -0.16, 0.025) - 0.1 * gauss(s, -0.025, 0.01) + gauss(s, 0.0, 0.008)
                - 0.2 * gauss(s, 0.03, 0.01)
                + 0.3 * gauss(s, 0.25, 0.045)
        })
        .collect();
    let bvp_kernel: Vec<f64> = (0..=700)
        .map(|k| {
            let s = k as f64 / SAMPLE_RATE;
            gauss(s, 0.2, 0.07) + 0.35 * gauss(s, 0.45, 0.08)
        })
        .collect();
    let phase_e: f64 = r.random::<f64>() * 2.0 * PI;
    let phase_b: f64 = r.random::<f64>() * 2.0 * PI;
    let mut ecg: Vec<f64> = noise_vec(&mut r, n, 0.02 * nz);
    let mut bvp: Vec<f64> = noise_vec(&mut r, n, 0.02 * nz);
    for i in 0..n {
        ecg[i] += 0.1 * (2.0 * PI * 0.15 * t(i) + phase_e).sin() + 0.01 * (2.0 * PI * 60.0 * t(i)).sin();
        bvp[i] += 0.2 * (2.0 * PI * 0.2 * t(i) + phase_b).sin();
    }
    for &b in &beats {
        add_kernel(&mut ecg, b as isize, &ecg_kernel, 300);
        add_kernel(&mut bvp, b as isize, &bvp_kernel, 0);
    }

    // Skin conductance: arousal-coupled tonic level plus sparse SCRs.
    let mut r = fork(2);
    let max_rate = 0.3;
    let gap = Exp::new(max_rate).unwrap();
    let tau_r: f64 = 0.75;
    let tau_d: f64 = 2.0;
    let t_peak = tau_r * tau_d / (tau_d - tau_r) * (tau_d / tau_r).ln();
    let norm = (-t_peak / tau_d).exp() - (-t_peak / tau_r).exp();
    let scr_kernel: Vec<f64> = (0..15_000)
        .map(|k| {
            let s = k as f64 / SAMPLE_RATE;
            ((-s / tau_d).exp() - (-s / tau_r).exp()) / norm
        })
        .collect();
    let drift_phase: f64 = r.random::<f64>() * 2.0 * PI;
    let mut gsr = noise_vec(&mut r, n, 0.005 * nz);
    for i in 0..n {
        gsr[i] += 5.0 + g * 0.8 * (a(i) - 5.0) + 0.05 * (2.0 * PI * t(i) / 90.0 + drift_phase).sin();
    }
    let mut at = 0.0;
    loop {
        at += gap.sample(&mut r);
        let idx = (at * SAMPLE_RATE) as usize;
        let u: f64 = r.random();
        let amp = 0.05 + 0.15 * r.random::<f64>();
        if idx >= n {
            break;
        }
        let rate = (0.1 + g * 0.03 * (a(idx) - 5.0)).clamp(0.0, max_rate);
        if u < rate / max_rate {
            let k: Vec<f64> = scr_kernel.iter().map(|x| x * amp).collect();
            add_kernel(&mut gsr, idx as isize, &k, 0);
        }
    }

    // Respiration: arousal-coupled breathing rate.
    let mut r = fork(3);
    let mut phase: f64 = r.random();
    let amp_phase: f64 = r.random::<f64>() * 2.0 * PI;
    let mut rsp = noise_vec(&mut r, n, 0.02 * nz);
    for (i, x) in rsp.iter_mut().enumerate() {
        phase += (15.0 + g * 0.75 * (a(i) - 5.0)) / 60.0 / SAMPLE_RATE;
        let amp = 1.0 + 0.1 * (2.0 * PI * t(i) / 30.0 + amp_phase).sin();
        *x += amp * (2.0 * PI * phase).sin();
    }

    // Skin temperature: valence-coupled with slow drift.
    let mut r = fork(4);
    let skt_phase: f64 = r.random::<f64>() * 2.0 * PI;
    let mut skt = noise_vec(&mut r, n, 0.002 * nz);
    for (i, x) in skt.iter_mut().enumerate() {
        *x += 33.0 + g * 0.4 * (v(i) - 5.0) + 0.02 * (2.0 * PI * t(i) / 120.0 + skt_phase).sin();
    }

    // EMG: amplitude-modulated noise with mains pickup.
    let mut emg = |k: u64, gain: &dyn Fn(usize) -> f64| {
        let mut r = fork(k);
        let mains: f64 = r.random::<f64>() * 2.0 * PI;
        let base = noise_vec(&mut r, n, 0.5);
        base.iter()
            .enumerate()
            .map(|(i, z)| z * (1.0 + gain(i)) + 0.2 * (2.0 * PI * 60.0 * t(i) + mains).sin())
            .collect::<Vec<f64>>()
    };
    let zygo = emg(5, &|i| g * 0.8 * (v(i) - 5.0).max(0.0));
    let coru = emg(6, &|i| g * 0.8 * (5.0 - v(i)).max(0.0));
    let trap = emg(7, &|i| g * 0.3 * (a(i) - RATING_MIN));

    let mut channels: [Vec<f64>; 8] = Default::default();
    channels[Channel::Ecg.index()] = ecg;
    channels[Channel::Bvp.index()] = bvp;
    channels[Channel::Gsr.index()] = gsr;
    channels[Channel::Rsp.index()] = rsp;
    channels[Channel::Skt.index()] = skt;
    channels[Channel::EmgZygo.index()] = zygo;
    channels[Channel::EmgCoru.index()] = coru;
    channels[Channel::EmgTrap.index()] = trap;
    channels
}

struct Session {
    subject: u32,
    video: u32,
    recording: Recording,
    ratings: AnnotationTrack,
}

impl Session {
    /// Slice covering annotation rows [k0, k1) and the matching physiology.
    fn segment(&self, k0: usize, k1: usize) -> (Recording, AnnotationTrack) {
        let per = (ANNOTATION_STEP * SAMPLE_RATE).round() as usize;
        let (s0, s1) = (k0 * per, k1 * per);
        let mut channels: [Vec<f64>; 8] = Default::default();
        for (dst, src) in channels.iter_mut().zip(&self.recording.channels) {
            *dst = src[s0..s1].to_vec();
        }
        let rec = Recording {
            t0: s0 as f64 / SAMPLE_RATE,
            channels,
            ..self.recording.clone()
        };
        let ann = AnnotationTrack {
            timestamps: self.ratings.timestamps[k0..k1].to_vec(),
            valence: self.ratings.valence[k0..k1].to_vec(),
            arousal: self.ratings.arousal[k0..k1].to_vec(),
            time_unit: TimeUnit::Milliseconds,
        };
        (rec, ann)
    }
}

fn build_session(seed: u64, subject: u32, video: u32, spec: &SynthSpec) -> Session {
    let per = (ANNOTATION_STEP * SAMPLE_RATE).round() as usize;
    let rows = (spec.duration / ANNOTATION_STEP).round() as usize;
    let samples = rows * per;
    let latent = latent_trajectory(seed, subject, video, samples, spec);
    let channels = synthesize_session(&latent, spec, mix(&[seed, subject as u64, video as u64, 3]));
    let lag = (spec.label_lag * SAMPLE_RATE).round() as usize;
    let mut ratings = AnnotationTrack {
        timestamps: Vec::with_capacity(rows),
        valence: Vec::with_capacity(rows),
        arousal: Vec::with_capacity(rows),
        time_unit: TimeUnit::Milliseconds,
    };
    for k in 0..rows {
        let idx = latent.offset + k * per - lag;
        ratings.timestamps.push((k * per) as f64 / SAMPLE_RATE);
        ratings.valence.push(latent.valence[idx]);
        ratings.arousal.push(latent.arousal[idx]);
    }
    Session {
        subject,
        video,
        recording: Recording {
            subject_id: subject,
            video_id: video,
            sample_rate: SAMPLE_RATE,
            t0: 0.0,
            time_unit: TimeUnit::Milliseconds,
            channels,
        },
        ratings,
    }
}

fn write_pair(dir: &Path, rec: &Recording, ann: &AnnotationTrack) -> Result<()> {
    let name = format!("sub_{}_vid_{}.csv", rec.subject_id, rec.video_id);
    for sub in ["physiology", "annotations"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| CorpusError::Io {
            path: d.clone(),
            source: e,
        })?;
    }
    save_recording(&dir.join("physiology").join(&name), rec, Some(6))?;
    save_annotations(&dir.join("annotations").join(&name), ann, Some(6))
}

fn split_dir(root: &Path, scenario: Scenario, fold: Option<u32>, split: Split) -> std::path::PathBuf {
    let mut d = root.join(scenario.dir_name());
    if let Some(f) = fold {
        d = d.join(format!("fold_{f}"));
    }
    d.join(split.name())
}

/// Writes a synthetic corpus in the challenge layout under `root` and returns
/// its index. Output is byte-identical for a fixed seed and spec.
pub fn generate_synthetic_dataset(root: &Path, seed: u64, spec: &SynthSpec) -> Result<DatasetIndex> {
    spec.validate()?;
    let subjects: Vec<u32> = (1..=spec.subjects).collect();
    let videos: Vec<u32> = (0..spec.videos).collect();
    let pairs: Vec<(u32, u32)> = subjects
        .iter()
        .flat_map(|&s| videos.iter().map(move |&v| (s, v)))
        .collect();
    let rows = (spec.duration / ANNOTATION_STEP).round() as usize;

    pairs.par_iter().try_for_each(|&(s, v)| -> Result<()> {
        let session = build_session(seed, s, v, spec);
        for &scenario in &spec.scenarios {
            match scenario {
                Scenario::AcrossTime => {
                    let test_start = ((spec.duration - spec.test_duration) / ANNOTATION_STEP).ceil() as usize;
                    let train_end =
                        ((spec.duration - spec.test_duration - spec.gap) / ANNOTATION_STEP).floor() as usize;
                    let (rec, ann) = session.segment(0, train_end);
                    write_pair(&split_dir(root, scenario, None, Split::Train), &rec, &ann)?;
                    let (rec, ann) = session.segment(test_start, rows);
                    write_pair(&split_dir(root, scenario, None, Split::Test), &rec, &ann)?;
                }
                _ => {
                    let (rec, ann) = session.segment(0, rows);
                    let folds = fold_count(scenario, spec);
                    for fold in 0..folds {
                        let test = match scenario {
                            Scenario::AcrossSubject => (session.subject - 1) % folds == fold,
                            Scenario::AcrossElicitor => session.video % 4 == fold,
                            _ => session.video / 4 == fold,
                        };
                        let split = if test { Split::Test } else { Split::Train };
                        write_pair(&split_dir(root, scenario, Some(fold), split), &rec, &ann)?;
                    }
                }
            }
        }
        Ok(())
    })?;

    let spec_path = root.join("synth_spec.json");
    let body = serde_json::json!({ "seed": seed, "spec": spec });
    std::fs::write(&spec_path, serde_json::to_string_pretty(&body).unwrap()).map_err(|e| CorpusError::Io {
        path: spec_path,
        source: e,
    })?;
    enumerate_dataset(root)
}

fn fold_count(scenario: Scenario, spec: &SynthSpec) -> u32 {
    match scenario {
        Scenario::AcrossTime => 1,
        Scenario::AcrossSubject => spec.subjects.min(5),
        Scenario::AcrossElicitor => 4,
        Scenario::AcrossVersion => spec.videos / 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_annotations, load_recording};
    use crate::dsp::{detect_peaks, Signal};

    fn small_spec() -> SynthSpec {
        SynthSpec {
            subjects: 2,
            videos: 2,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn deterministic_and_loadable() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ia = generate_synthetic_dataset(a.path(), 1, &small_spec()).unwrap();
        generate_synthetic_dataset(b.path(), 1, &small_spec()).unwrap();
        assert_eq!(ia.select(Scenario::AcrossTime, 0, Split::Train).len(), 4);
        assert_eq!(ia.select(Scenario::AcrossTime, 0, Split::Test).len(), 4);
        for e in ia.entries() {
            let rel = e.physiology.strip_prefix(a.path()).unwrap();
            assert_eq!(
                std::fs::read(&e.physiology).unwrap(),
                std::fs::read(b.path().join(rel)).unwrap()
            );
            let rec = load_recording(&e.physiology).unwrap();
            let ann = load_annotations(e.annotations.as_ref().unwrap()).unwrap();
            assert!(rec.duration() >= ann.duration());
            assert!((rec.t0 - ann.timestamps[0]).abs() < 1e-9);
        }
        let test = ia.select(Scenario::AcrossTime, 0, Split::Test)[0];
        let rec = load_recording(&test.physiology).unwrap();
        assert!((rec.t0 - 40.0).abs() < 1e-9);
        assert_eq!(rec.len(), 20_000);
    }

    #[test]
    fn zero_gain_ignores_latent() {
        let spec = SynthSpec {
            coupling_gain: 0.0,
            ..SynthSpec::default()
        };
        let n = 20_000;
        let low = synthesize_session(&LatentAffect::constant(1.0, 1.0, n), &spec, 9);
        let high = synthesize_session(&LatentAffect::constant(9.0, 9.0, n), &spec, 9);
        assert_eq!(low, high);
        let coupled = synthesize_session(&LatentAffect::constant(9.0, 9.0, n), &SynthSpec::default(), 9);
        assert_ne!(low, coupled);
    }

    #[test]
    fn arousal_raises_heart_rate() {
        let n = 60_000;
        let mut latent = LatentAffect::constant(5.0, 1.0, n);
        for x in &mut latent.arousal[latent.offset + 30_000..] {
            *x = 9.0;
        }
        let ch = synthesize_session(&latent, &SynthSpec::default(), 4);
        let ecg = &ch[Channel::Ecg.index()];
        let rate = |s: usize, e: usize| {
            let peaks = detect_peaks(&Signal::new(ecg[s..e].to_vec(), SAMPLE_RATE).unwrap(), 0.3, 0.4);
            let ibi = (peaks[peaks.len() - 1] - peaks[0]) as f64 / (peaks.len() - 1) as f64;
            60.0 * SAMPLE_RATE / ibi
        };
        let calm = rate(2_000, 28_000);
        let aroused = rate(32_000, 58_000);
        assert!((calm - 46.0).abs() < 4.0, "{calm}");
        assert!((aroused - 94.0).abs() < 6.0, "{aroused}");
    }

    #[test]
    fn lagged_ratings() {
        let spec = SynthSpec {
            label_lag: 0.03,
            jitter: 0.2,
            ..SynthSpec::default()
        };
        let s = build_session(3, 1, 0, &spec);
        let latent = latent_trajectory(3, 1, 0, s.recording.len(), &spec);
        for k in [0usize, 10, 999] {
            assert_eq!(s.ratings.valence[k], latent.valence[latent.offset + k * 50 - 30]);
        }
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            SynthSpec { subjects: 0, ..SynthSpec::default() },
            SynthSpec { duration: 5.0, ..SynthSpec::default() },
            SynthSpec { noise: -1.0, ..SynthSpec::default() },
            SynthSpec { scenarios: vec![Scenario::AcrossVersion], ..SynthSpec::default() },
            SynthSpec { test_duration: 55.0, ..SynthSpec::default() },
        ] {
            assert!(matches!(spec.validate(), Err(CorpusError::InvalidSpec(_))));
        }
    }
}
