use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::real::Real;

/// Gaussian radial basis with a cosine cutoff envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfSpec {
    centers: Vec<f64>,
    gamma: f64,
    cutoff: f64,
}

impl RbfSpec {
    /// `dim` centers uniformly spaced on `[0, cutoff]` with width `1 / (2 spacing^2)`.
    ///
    /// A single-center basis sits at 0 and uses the cutoff as its spacing.
    pub fn uniform(dim: usize, cutoff: f64) -> Self {
        assert!(dim >= 1 && cutoff > 0.0);
        let spacing = if dim == 1 {
            cutoff
        } else {
            cutoff / (dim - 1) as f64
        };
        let centers = (0..dim)
            .map(|k| if k + 1 == dim && dim > 1 { cutoff } else { k as f64 * spacing })
            .collect();
        Self {
            centers,
            gamma: 1.0 / (2.0 * spacing * spacing),
            cutoff,
        }
    }

    pub fn new(centers: Vec<f64>, gamma: f64, cutoff: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Config("radial basis needs at least one center".into()));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be > 0, got {gamma}")));
        }
        if !(cutoff > 0.0) {
            return Err(Error::Config(format!("cutoff must be > 0, got {cutoff}")));
        }
        if centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("centers must be strictly increasing".into()));
        }
        if centers[0] < 0.0 || *centers.last().unwrap() > cutoff {
            return Err(Error::Config("centers must lie in [0, cutoff]".into()));
        }
        Ok(Self {
            centers,
            gamma,
            cutoff,
        })
    }

    pub fn dim(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Cosine envelope `0.5 (cos(pi d / r_cut) + 1)`, zero at and beyond the cutoff.
    #[inline]
    pub fn envelope<T: Real>(&self, d: T) -> T {
        let rc = T::lit(self.cutoff);
        if d >= rc {
            T::zero()
        } else {
            T::lit(0.5) * ((T::lit(PI) * d / rc).cos() + T::one())
        }
    }
}

pub fn rbf_expand<T: Real>(d: T, spec: &RbfSpec) -> Vec<T> {
    let mut out = vec![T::zero(); spec.dim()];
    rbf_expand_into(d, spec, &mut out);
    out
}

/// `exp(-gamma (d - mu_k)^2)` for every center.
#[inline]
fn gaussians<T: Real>(d: T, spec: &RbfSpec, out: &mut [T]) {
    let gamma = T::lit(spec.gamma);
    for (o, &mu) in out.iter_mut().zip(&spec.centers) {
        let x = d - T::lit(mu);
        *o = -gamma * x * x;
    }
    T::exp_nonpositive_slice(out);
}

/// Writes the enveloped basis vector for distance `d` into `out`.
#[inline]
pub fn rbf_expand_into<T: Real>(d: T, spec: &RbfSpec, out: &mut [T]) {
    debug_assert_eq!(out.len(), spec.dim());
    let env = spec.envelope(d);
    if env == T::zero() {
        out.fill(T::zero());
        return;
    }
    gaussians(d, spec, out);
    for o in out.iter_mut() {
        *o *= env;
    }
}

pub fn rbf_grad<T: Real>(d: T, spec: &RbfSpec) -> Vec<T> {
    let mut out = vec![T::zero(); spec.dim()];
    rbf_grad_into(d, spec, &mut out);
    out
}

/// Derivative of [`rbf_expand`] with respect to `d`.
#[inline]
pub fn rbf_grad_into<T: Real>(d: T, spec: &RbfSpec, out: &mut [T]) {
    debug_assert_eq!(out.len(), spec.dim());
    let rc = T::lit(spec.cutoff);
    if d >= rc {
        out.fill(T::zero());
        return;
    }
    let pi = T::lit(PI);
    let half = T::lit(0.5);
    let env = half * ((pi * d / rc).cos() + T::one());
    let denv = -half * pi / rc * (pi * d / rc).sin();
    let gamma = T::lit(spec.gamma);
    let two = T::lit(2.0);
    gaussians(d, spec, out);
    for (o, &mu) in out.iter_mut().zip(&spec.centers) {
        let x = d - T::lit(mu);
        *o *= denv - two * gamma * x * env;
    }
}

/// Basis values and their `d`-derivatives in one pass sharing the Gaussians.
#[inline]
pub fn rbf_expand_and_grad_into<T: Real>(d: T, spec: &RbfSpec, value: &mut [T], grad: &mut [T]) {
    debug_assert_eq!(value.len(), spec.dim());
    let rc = T::lit(spec.cutoff);
    if d >= rc {
        value.fill(T::zero());
        grad.fill(T::zero());
        return;
    }
    let pi = T::lit(PI);
    let half = T::lit(0.5);
    let env = half * ((pi * d / rc).cos() + T::one());
    let denv = -half * pi / rc * (pi * d / rc).sin();
    let gamma = T::lit(spec.gamma);
    let two = T::lit(2.0);
    gaussians(d, spec, value);
    for ((v, g), &mu) in value.iter_mut().zip(grad.iter_mut()).zip(&spec.centers) {
        let x = d - T::lit(mu);
        *g = *v * (denv - two * gamma * x * env);
        *v *= env;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn spec() -> RbfSpec {
        RbfSpec::uniform(16, 1.5)
    }

    #[test]
    fn uniform_layout() {
        let s = spec();
        assert_eq!(s.centers()[0], 0.0);
        assert_eq!(*s.centers().last().unwrap(), 1.5);
        assert!(s.centers().windows(2).all(|w| w[1] > w[0]));
        let spacing = 1.5 / 15.0;
        assert!((s.gamma() - 1.0 / (2.0 * spacing * spacing)).abs() < 1e-9);
        assert!(RbfSpec::new(vec![0.0, 0.0], 1.0, 1.0).is_err());
        assert!(RbfSpec::new(vec![0.0, 1.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn zero_at_cutoff_and_beyond() {
        let s = spec();
        assert!(rbf_expand(1.5f64, &s).iter().all(|&v| v == 0.0));
        assert!(rbf_expand(2.0f64, &s).iter().all(|&v| v == 0.0));
        assert!(rbf_grad(1.5f64, &s).iter().all(|&v| v == 0.0));
        assert!(rbf_grad(7.0f64, &s).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn value_at_origin_and_half_cutoff() {
        let s = spec();
        let b0 = rbf_expand(0.0f64, &s);
        for (k, &mu) in s.centers().iter().enumerate() {
            assert!((b0[k] - (-s.gamma() * mu * mu).exp()).abs() < 1e-15);
        }
        assert_eq!(s.envelope(0.75f64), 0.5);
        assert!((s.envelope(0.75f64) - 0.5f64).abs() < 1e-15);
        let g0 = rbf_grad(0.0f64, &s);
        assert_eq!(g0[0], 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = spec();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let d: f64 = rng.gen_range(0.01..1.49);
            let h = 1e-6;
            let plus = rbf_expand(d + h, &s);
            let minus = rbf_expand(d - h, &s);
            let g = rbf_grad(d, &s);
            for k in 0..s.dim() {
                let fd = (plus[k] - minus[k]) / (2.0 * h);
                let scale = g[k].abs().max(1e-3);
                assert!((fd - g[k]).abs() / scale < 1e-6, "d={d} k={k} fd={fd} g={}", g[k]);
            }
        }
    }

    #[test]
    fn combined_kernel_matches_separate_ones() {
        let s = spec();
        let (mut v, mut g) = (vec![0.0f64; 16], vec![0.0f64; 16]);
        for i in 0..40 {
            let d = i as f64 * 0.04;
            rbf_expand_and_grad_into(d, &s, &mut v, &mut g);
            assert_eq!(v, rbf_expand(d, &s));
            assert_eq!(g, rbf_grad(d, &s));
        }
    }

    #[test]
    fn bounded_in_unit_interval_and_continuous_at_cutoff() {
        let s = spec();
        for i in 0..=400 {
            let d = i as f64 * 0.005;
            for v in rbf_expand(d, &s) {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        let eps = 1e-7;
        assert!(rbf_expand(1.5f64 - eps, &s).iter().all(|v| v.abs() < 1e-12));
        assert!(rbf_grad(1.5f64 - eps, &s).iter().all(|v| v.abs() < 1e-5));
    }
}
