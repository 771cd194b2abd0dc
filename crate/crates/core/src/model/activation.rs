use crate::real::Real;

/// `ln(0.5 e^x + 0.5)`, evaluated as `softplus(x) - ln 2` without overflow.
#[inline]
pub fn shifted_softplus<T: Real>(x: T) -> T {
    // softplus(x) = max(x, 0) + ln(1 + e^{-|x|})
    let zero = T::zero();
    x.max(zero) + (-x.abs()).exp().ln_1p() - T::lit(std::f64::consts::LN_2)
}

/// Derivative of [`shifted_softplus`], the logistic sigmoid.
#[inline]
pub fn shifted_softplus_grad<T: Real>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}


/// Slice form of [`shifted_softplus`] for `f32`, written so the compiler can
/// vectorize it: `exp` by range reduction and a polynomial, `ln(1 + t)` by the
/// series `2 atanh(t / (2 + t))`. Within a few ulp of the scalar form.
pub(crate) fn shifted_softplus_f32(x: &[f32], out: &mut [f32]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were detected at runtime.
            unsafe { ssp_avx2(x, out) };
            return;
        }
    }
    ssp_kernel(x, out);
}

/// `g[i] *= sigmoid(x[i])` for `f32`, vectorizable like [`shifted_softplus_f32`].
pub(crate) fn mul_sigmoid_f32(x: &[f32], g: &mut [f32]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: as above.
            unsafe { sigmoid_avx2(x, g) };
            return;
        }
    }
    sigmoid_kernel(x, g);
}

/// In-place `e^x` for non-positive `f32` arguments, vectorizable; arguments
/// below -87 flush to zero.
pub(crate) fn exp_nonpositive_f32(x: &mut [f32]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: as above.
            unsafe { exp_avx2(x) };
            return;
        }
    }
    exp_kernel(x);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn exp_avx2(x: &mut [f32]) {
    exp_kernel(x);
}

#[inline(always)]
fn exp_kernel(x: &mut [f32]) {
    for v in x.iter_mut() {
        *v = exp_nonpositive(*v);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn ssp_avx2(x: &[f32], out: &mut [f32]) {
    ssp_kernel(x, out);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn sigmoid_avx2(x: &[f32], g: &mut [f32]) {
    sigmoid_kernel(x, g);
}

#[inline(always)]
fn ssp_kernel(x: &[f32], out: &mut [f32]) {
    for (o, &v) in out.iter_mut().zip(x) {
        let t = exp_nonpositive(-v.abs());
        *o = v.max(0.0) + ln_1p_unit(t) - std::f32::consts::LN_2;
    }
}

#[inline(always)]
fn sigmoid_kernel(x: &[f32], g: &mut [f32]) {
    for (gv, &v) in g.iter_mut().zip(x) {
        let t = exp_nonpositive(-v.abs());
        let num = if v >= 0.0 { 1.0 } else { t };
        *gv *= num / (1.0 + t);
    }
}

/// `e^x` for `x <= 0`; inputs below -87 flush to zero.
#[inline(always)]
fn exp_nonpositive(x_in: f32) -> f32 {
    const ROUND: f32 = 12_582_912.0;
    let x = x_in.max(-87.0);
    let n = (x * std::f32::consts::LOG2_E + ROUND) - ROUND;
    let r = x - n * 0.693_359_4 + n * 2.121_944_4e-4;
    let mut p = 1.987_569_1e-4f32;
    p = p * r + 1.398_199_9e-3;
    p = p * r + 8.333_452e-3;
    p = p * r + 4.166_579_6e-2;
    p = p * r + 1.666_666_5e-1;
    p = p * r + 5.000_000_1e-1;
    let e = p * r * r + r + 1.0;
    let scale = f32::from_bits(((n as i32 + 127) << 23) as u32);
    if x_in < -87.0 {
        0.0
    } else {
        e * scale
    }
}

/// `ln(1 + t)` for `t` in `[0, 1]`.
#[inline(always)]
fn ln_1p_unit(t: f32) -> f32 {
    let s = t / (2.0 + t);
    let s2 = s * s;
    let mut p = 1.0f32 / 15.0;
    p = p * s2 + 1.0 / 13.0;
    p = p * s2 + 1.0 / 11.0;
    p = p * s2 + 1.0 / 9.0;
    p = p * s2 + 1.0 / 7.0;
    p = p * s2 + 1.0 / 5.0;
    p = p * s2 + 1.0 / 3.0;
    p = p * s2 + 1.0;
    2.0 * s * p
}
