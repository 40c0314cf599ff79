use super::Signal;

/// Local maxima whose topographic prominence is at least `min_prominence`
/// times the signal range, thinned so no two kept peaks are closer than
/// `min_distance` seconds. Higher prominence wins; the earlier index wins an
/// exact tie. Returned indices are increasing.
pub fn detect_peaks(signal: &Signal, min_distance: f64, min_prominence: f64) -> Vec<usize> {
    let x = signal.samples();
    let n = x.len();
    if n < 3 {
        return Vec::new();
    }
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Vec::new();
    }
    let threshold = min_prominence * range;
    let distance = ((min_distance * signal.sample_rate()).ceil() as usize).max(1);

    let mut candidates: Vec<(usize, f64)> = local_maxima(x)
        .into_iter()
        .filter_map(|p| {
            let prom = prominence(x, p);
            (prom >= threshold && prom > 0.0).then_some((p, prom))
        })
        .collect();

    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut kept: Vec<usize> = Vec::new();
    for (p, _) in candidates {
        // kept stays sorted, so only the neighbours matter
        let pos = kept.partition_point(|&k| k < p);
        let left_ok = pos == 0 || p - kept[pos - 1] >= distance;
        let right_ok = pos == kept.len() || kept[pos] - p >= distance;
        if left_ok && right_ok {
            kept.insert(pos, p);
        }
    }
    kept
}

/// Strict local maxima; a flat top counts once, at its (left-biased) middle.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead < n - 1 && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                out.push((i + ahead - 1) / 2);
                i = ahead;
            }
        }
        i += 1;
    }
    out
}

fn prominence(x: &[f64], p: usize) -> f64 {
    let h = x[p];
    let mut left_min = h;
    for &v in x[..p].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[p + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn one_hertz_sine() {
        let fs = 1000.0;
        let x: Vec<f64> = (0..10_000).map(|i| (2.0 * PI * i as f64 / fs).sin()).collect();
        let peaks = detect_peaks(&Signal::new(x, fs).unwrap(), 0.5, 0.1);
        assert_eq!(peaks.len(), 10);
        for w in peaks.windows(2) {
            assert_eq!(w[1] - w[0], 1000);
        }
        assert_eq!(peaks[0], 250);
    }

    #[test]
    fn constant_has_no_peaks() {
        assert!(detect_peaks(&Signal::new(vec![1.0; 100], 10.0).unwrap(), 0.1, 0.0).is_empty());
    }

    #[test]
    fn gaussian_spike_train() {
        let fs = 1000.0;
        let centers: Vec<f64> = (0..60).map(|k| 0.5 + k as f64 + 0.013 * (k % 7) as f64).collect();
        let x: Vec<f64> = (0..61_000)
            .map(|i| {
                let t = i as f64 / fs;
                let spikes: f64 = centers
                    .iter()
                    .map(|c| (-((t - c) / 0.008).powi(2)).exp())
                    .sum();
                spikes + 0.05 * (2.0 * PI * 0.3 * t).sin()
            })
            .collect();
        let peaks = detect_peaks(&Signal::new(x, fs).unwrap(), 0.3, 0.3);
        assert_eq!(peaks.len(), 60);
        for (p, c) in peaks.iter().zip(&centers) {
            assert!((*p as f64 / fs - c).abs() <= 0.002, "{p} vs {c}");
        }
    }

    #[test]
    fn distance_thinning_prefers_prominence_then_earlier() {
        let fs = 1.0;
        let mut x = vec![0.0; 20];
        x[5] = 1.0;
        x[7] = 2.0;
        x[12] = 2.0;
        let peaks = detect_peaks(&Signal::new(x, fs).unwrap(), 5.0, 0.0);
        assert_eq!(peaks, vec![7, 12]);
        let mut x = vec![0.0; 20];
        x[5] = 1.0;
        x[8] = 1.0;
        let peaks = detect_peaks(&Signal::new(x, fs).unwrap(), 5.0, 0.0);
        assert_eq!(peaks, vec![5]);
    }
}
