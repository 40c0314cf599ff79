use serde::{Deserialize, Serialize};

use super::anchored_mean;

/// Per-column z-score fitted on the training rows; constant columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let width = x.first().map_or(0, |r| r.len());
        let n = x.len() as f64;
        let mut mean = vec![0.0; width];
        let mut scale = vec![1.0; width];
        for j in 0..width {
            let m = anchored_mean(x.iter().map(|r| r[j]));
            let var = x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
            mean[j] = m;
            if var > 0.0 {
                scale[j] = var.sqrt();
            }
        }
        Standardizer { mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnState {
    pub k: usize,
    pub distance_weighted: bool,
    pub standardizer: Standardizer,
    pub points: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl KnnState {
    pub(crate) fn fit(x: &[Vec<f64>], y: &[f64], k: usize, distance_weighted: bool) -> Self {
        let standardizer = Standardizer::fit(x);
        let points = x.iter().map(|r| standardizer.apply(r)).collect();
        KnnState {
            k: k.min(y.len()),
            distance_weighted,
            standardizer,
            points,
            targets: y.to_vec(),
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let q = self.standardizer.apply(row);
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
            .collect();
        // distance then index, so ties resolve to the earlier training row
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        if !self.distance_weighted {
            return anchored_mean(d.iter().map(|&(_, i)| self.targets[i]));
        }
        if d[0].0 == 0.0 {
            return anchored_mean(d.iter().take_while(|p| p.0 == 0.0).map(|&(_, i)| self.targets[i]));
        }
        let first = self.targets[d[0].1];
        let mut num = 0.0;
        let mut den = 0.0;
        for &(sq, i) in &d {
            let w = 1.0 / sq.sqrt();
            num += w * (self.targets[i] - first);
            den += w;
        }
        first + num / den
    }
}
