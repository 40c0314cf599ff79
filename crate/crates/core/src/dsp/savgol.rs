use nalgebra::{DMatrix, DVector};

use super::{DspError, Result, Signal};

/// Smoothing (zeroth-derivative) coefficients for a centered window of
/// `window` samples and polynomial `order`.
pub fn savgol_coefficients(window: usize, order: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 || window <= order {
        return Err(DspError::InvalidWindow(format!(
            "window {window} must be odd and larger than order {order}"
        )));
    }
    let half = (window / 2) as f64;
    let scale = half.max(1.0);
    let cols = order + 1;
    // Vandermonde in the scaled abscissa u = j / half keeps A^T A well conditioned.
    let a = DMatrix::from_fn(window, cols, |r, c| ((r as f64 - half) / scale).powi(c as i32));
    let ata = a.transpose() * &a;
    let chol = ata
        .cholesky()
        .ok_or_else(|| DspError::InvalidWindow("singular normal equations".into()))?;
    let mut e0 = DVector::zeros(cols);
    e0[0] = 1.0;
    let w = chol.solve(&e0);
    Ok((&a * w).iter().copied().collect())
}

/// Savitzky-Golay smoothing with mirror padding at the edges. `length_s` is
/// rounded to a sample count and bumped to the next odd number.
pub fn savgol_smooth(signal: &Signal, order: usize, length_s: f64) -> Result<Signal> {
    let mut window = (length_s * signal.sample_rate()).round() as usize;
    if window % 2 == 0 {
        window += 1;
    }
    let coef = savgol_coefficients(window, order)?;
    let x = signal.samples();
    let n = x.len();
    let half = window / 2;
    if n < 2 {
        return Ok(signal.clone());
    }
    // mirror about the end samples without repeating them
    let at = |i: isize| -> f64 {
        let period = 2 * (n as isize - 1);
        let mut j = i.rem_euclid(period);
        if j >= n as isize {
            j = period - j;
        }
        x[j as usize]
    };
    let out = (0..n)
        .map(|i| {
            let base = i as isize - half as isize;
            if base >= 0 && (i + half) < n {
                x[base as usize..=i + half]
                    .iter()
                    .zip(&coef)
                    .map(|(v, c)| v * c)
                    .sum()
            } else {
                coef.iter()
                    .enumerate()
                    .map(|(k, c)| c * at(base + k as isize))
                    .sum()
            }
        })
        .collect();
    Ok(signal.with_samples(out))
}
