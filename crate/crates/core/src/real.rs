//! Scalar abstraction shared by the 32-bit production path and the 64-bit
//! verification path.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used throughout the engine (`f32` or `f64`).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Storage cell supporting lock-free read-modify-write accumulation.
    type Atomic: Send + Sync;

    /// Size of one element in bytes.
    const BYTES: usize;

    /// Human-readable precision tag.
    const NAME: &'static str;

    fn atomic_zero() -> Self::Atomic;

    /// Compare-and-swap accumulation, the host analog of a device `atomicAdd`.
    fn atomic_add(cell: &Self::Atomic, value: Self);

    fn atomic_load(cell: &Self::Atomic) -> Self;

    /// `out[i] = shifted_softplus(x[i])`.
    fn shifted_softplus_slice(x: &[Self], out: &mut [Self]) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = crate::model::shifted_softplus(v);
        }
    }

    /// `x[i] = exp(x[i])` for non-positive arguments.
    fn exp_nonpositive_slice(x: &mut [Self]) {
        for v in x.iter_mut() {
            *v = v.exp();
        }
    }

    /// `g[i] *= shifted_softplus_grad(x[i])`.
    fn mul_softplus_grad_slice(x: &[Self], g: &mut [Self]) {
        for (gv, &v) in g.iter_mut().zip(x) {
            *gv *= crate::model::shifted_softplus_grad(v);
        }
    }

    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }

    #[inline]
    fn from_f32_lossless(x: f32) -> Self {
        Self::from_f32(x).expect("f32 widening")
    }

    #[inline]
    fn to_f32_lossy(self) -> f32 {
        self.to_f32().unwrap_or(f32::NAN)
    }
}

impl Real for f32 {
    type Atomic = AtomicU32;
    const BYTES: usize = 4;
    const NAME: &'static str = "32bit";

    fn atomic_zero() -> AtomicU32 {
        AtomicU32::new(0f32.to_bits())
    }

    #[inline]
    fn atomic_add(cell: &AtomicU32, value: f32) {
        let mut current = cell.load(Ordering::Relaxed);
        loop {
            let next = (f32::from_bits(current) + value).to_bits();
            match cell.compare_exchange_weak(current, next, Ordering::AcqRel, Ordering::Relaxed) {
                Ok(_) => break,
                Err(seen) => current = seen,
            }
        }
    }

    #[inline]
    fn atomic_load(cell: &AtomicU32) -> f32 {
        f32::from_bits(cell.load(Ordering::Acquire))
    }

    fn shifted_softplus_slice(x: &[f32], out: &mut [f32]) {
        crate::model::activation::shifted_softplus_f32(x, out);
    }

    fn exp_nonpositive_slice(x: &mut [f32]) {
        crate::model::activation::exp_nonpositive_f32(x);
    }

    fn mul_softplus_grad_slice(x: &[f32], g: &mut [f32]) {
        crate::model::activation::mul_sigmoid_f32(x, g);
    }
}

impl Real for f64 {
    type Atomic = AtomicU64;
    const BYTES: usize = 8;
    const NAME: &'static str = "64bit";

    fn atomic_zero() -> AtomicU64 {
        AtomicU64::new(0f64.to_bits())
    }

    #[inline]
    fn atomic_add(cell: &AtomicU64, value: f64) {
        let mut current = cell.load(Ordering::Relaxed);
        loop {
            let next = (f64::from_bits(current) + value).to_bits();
            match cell.compare_exchange_weak(current, next, Ordering::AcqRel, Ordering::Relaxed) {
                Ok(_) => break,
                Err(seen) => current = seen,
            }
        }
    }

    #[inline]
    fn atomic_load(cell: &AtomicU64) -> f64 {
        f64::from_bits(cell.load(Ordering::Acquire))
    }
}

/// Flat buffer of atomically updated scalars with an update counter.
pub struct AtomicBuffer<T: Real> {
    cells: Vec<T::Atomic>,
    updates: u64,
}

impl<T: Real> AtomicBuffer<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            cells: (0..len).map(|_| T::atomic_zero()).collect(),
            updates: 0,
        }
    }

    #[inline]
    pub fn add(&mut self, index: usize, value: T) {
        T::atomic_add(&self.cells[index], value);
        self.updates += 1;
    }

    /// Adds `values` elementwise into the row starting at `offset`.
    #[inline]
    pub fn add_row(&mut self, offset: usize, values: &[T]) {
        for (cell, &v) in self.cells[offset..offset + values.len()].iter().zip(values) {
            T::atomic_add(cell, v);
        }
        self.updates += values.len() as u64;
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn into_vec(self) -> Vec<T> {
        self.cells.iter().map(T::atomic_load).collect()
    }
}
