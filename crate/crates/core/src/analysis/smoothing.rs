use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_HISTOGRAM_BINS: usize = 100;
pub const DEFAULT_SG_WINDOW: usize = 11;
pub const DEFAULT_SG_ORDER: usize = 3;
/// Peaks of the smoothed density lower than this fraction of its maximum are
/// treated as sampling noise.
pub const PEAK_NOISE_FLOOR: f64 = 0.05;

/// Weights that evaluate the least-squares polynomial through `offsets` at 0.
fn fit_weights(offsets: &[f64], order: usize) -> Result<Vec<f64>> {
    let order = order.min(offsets.len() - 1);
    let scale = offsets.iter().fold(1.0f64, |m, &t| m.max(t.abs()));
    let a = DMatrix::from_fn(offsets.len(), order + 1, |i, k| (offsets[i] / scale).powi(k as i32));
    let mut e0 = DVector::zeros(order + 1);
    e0[0] = 1.0;
    let gram = (a.transpose() * &a)
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("singular Savitzky-Golay fit".into()))?;
    Ok((a * gram.solve(&e0)).iter().copied().collect())
}

/// Local least-squares polynomial smoothing. Interior points use the centred
/// window; the first and last `window / 2` points are fitted on the window
/// truncated at the boundary.
pub fn savitzky_golay(series: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 || window <= order {
        return Err(Error::InvalidInput(format!(
            "window must be odd and larger than the order, got window {window}, order {order}"
        )));
    }
    if series.len() < window {
        return Err(Error::InvalidInput(format!(
            "series of length {} is shorter than the window {window}",
            series.len()
        )));
    }
    let n = series.len();
    let half = window / 2;
    let centred: Vec<f64> = (0..window).map(|k| k as f64 - half as f64).collect();
    let interior = fit_weights(&centred, order)?;
    let mut out = vec![0.0; n];
    for i in 0..n {
        let (lo, hi) = (i.saturating_sub(half), (i + half + 1).min(n));
        let w = if hi - lo == window {
            interior.clone()
        } else {
            let offs: Vec<f64> = (lo..hi).map(|j| j as f64 - i as f64).collect();
            fit_weights(&offs, order)?
        };
        out[i] = w.iter().zip(&series[lo..hi]).map(|(a, b)| a * b).sum();
    }
    Ok(out)
}

/// Density estimate of `q` on `[0, 1]`, normalized to integrate to one.
pub fn histogram_density(q: &[f64], bins: usize) -> Result<Vec<f64>> {
    if bins == 0 || q.is_empty() {
        return Err(Error::InvalidInput("need samples and at least one bin".into()));
    }
    let mut h = vec![0.0; bins];
    for &v in q {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidInput(format!("Q value {v} outside [0, 1]")));
        }
        h[((v * bins as f64) as usize).min(bins - 1)] += 1.0;
    }
    let norm = q.len() as f64 / bins as f64;
    Ok(h.into_iter().map(|c| c / norm).collect())
}

/// Centre of the bin holding the rightmost strict local maximum of the
/// smoothed Q density, ignoring peaks below [`PEAK_NOISE_FLOOR`]. A constant
/// series returns its value.
pub fn largest_metastable_q(q: &[f64]) -> Result<f64> {
    if let Some(&first) = q.first() {
        if q.iter().all(|&v| v == first) && (0.0..=1.0).contains(&first) {
            return Ok(first);
        }
    }
    if q.len() < DEFAULT_SG_WINDOW {
        return Err(Error::InvalidInput(format!(
            "need at least {DEFAULT_SG_WINDOW} Q samples, got {}",
            q.len()
        )));
    }
    let bins = DEFAULT_HISTOGRAM_BINS;
    let s = savitzky_golay(&histogram_density(q, bins)?, DEFAULT_SG_WINDOW, DEFAULT_SG_ORDER)?;
    let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let peak = (0..bins).rev().find(|&i| {
        let left = i == 0 || s[i] > s[i - 1];
        let right = i + 1 == bins || s[i] > s[i + 1];
        left && right && s[i] >= PEAK_NOISE_FLOOR * top
    });
    let i = peak.unwrap_or_else(|| (0..bins).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap());
    Ok((i as f64 + 0.5) / bins as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Normal;

    #[test]
    fn reproduces_low_order_polynomials() {
        let y: Vec<f64> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.1;
                1.0 - 2.0 * t + 0.5 * t * t - 0.1 * t * t * t
            })
            .collect();
        let s = savitzky_golay(&y, 11, 3).unwrap();
        for (a, b) in s.iter().zip(&y) {
            assert!((a - b).abs() < 1e-10);
        }
        let c = savitzky_golay(&[2.5; 20], 7, 2).unwrap();
        assert!(c.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn classic_five_point_quadratic_weights() {
        let w = fit_weights(&[-2.0, -1.0, 0.0, 1.0, 2.0], 2).unwrap();
        let expect = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn smooths_noisy_sine() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clean: Vec<f64> = (0..200).map(|i| (i as f64 * 0.05).sin()).collect();
        let noisy: Vec<f64> = clean.iter().map(|v| v + rng.gen_range(-0.2..0.2)).collect();
        let s = savitzky_golay(&noisy, 21, 3).unwrap();
        let err = |a: &[f64]| a.iter().zip(&clean).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        assert!(err(&s) < 0.4 * err(&noisy));
    }

    #[test]
    fn rejects_bad_windows() {
        let y = [0.0; 20];
        assert!(savitzky_golay(&y, 10, 3).is_err());
        assert!(savitzky_golay(&y, 3, 3).is_err());
        assert!(savitzky_golay(&y[..5], 7, 3).is_err());
    }

    fn mixture(modes: &[(f64, f64, usize)], seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for &(mu, sigma, n) in modes {
            let d = Normal::new(mu, sigma).unwrap();
            out.extend((0..n).map(|_| rng.sample(d).clamp(0.0, 1.0)));
        }
        out
    }

    #[test]
    fn picks_the_rightmost_mode() {
        let q = mixture(&[(0.3, 0.05, 6000), (0.85, 0.03, 3000)], 2);
        let m = largest_metastable_q(&q).unwrap();
        assert!((m - 0.85).abs() <= 0.01, "{m}");
        let q = mixture(&[(0.5, 0.06, 5000)], 3);
        assert!((largest_metastable_q(&q).unwrap() - 0.5).abs() <= 0.02);
        assert_eq!(largest_metastable_q(&[0.9; 50]).unwrap(), 0.9);
        assert!(largest_metastable_q(&[0.1, 0.2]).is_err());
        assert!(largest_metastable_q(&[1.2; 20]).is_err());
    }
}
