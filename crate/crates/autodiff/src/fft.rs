//! Iterative radix-2 FFT over split real/imaginary buffers.

use crate::error::{Result, TensorError};
use crate::real::Real;

/// Precomputed plan for a power-of-two complex FFT.
#[derive(Debug, Clone)]
pub struct Fft<T> {
    n: usize,
    cos: Vec<T>,
    sin: Vec<T>,
    bitrev: Vec<usize>,
}

impl<T: Real> Fft<T> {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(TensorError::invalid(
                "fft",
                format!("size {n} is not a power of two"),
            ));
        }
        let half = n / 2;
        let mut cos = Vec::with_capacity(half);
        let mut sin = Vec::with_capacity(half);
        for k in 0..half {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            cos.push(T::from_f64(theta.cos()));
            // forward kernel is e^{-i theta}
            sin.push(T::from_f64(-theta.sin()));
        }
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        Ok(Fft { n, cos, sin, bitrev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform `X_k = sum_n x_n e^{-2 pi i k n / N}`.
    pub fn forward(&self, re: &mut [T], im: &mut [T]) {
        let n = self.n;
        assert!(re.len() == n && im.len() == n, "fft buffer length");
        for i in 0..n {
            let j = self.bitrev[i];
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let step = n / size;
            for start in (0..n).step_by(size) {
                for j in 0..half {
                    let (wr, wi) = (self.cos[j * step], self.sin[j * step]);
                    let a = start + j;
                    let b = a + half;
                    let vr = re[b] * wr - im[b] * wi;
                    let vi = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - vr;
                    im[b] = im[a] - vi;
                    re[a] += vr;
                    im[a] += vi;
                }
            }
            size *= 2;
        }
    }

    /// Real-input transform of `input` (zero-padded to the plan size); writes
    /// bins `0..=N/2` into `out_re` / `out_im`.
    pub fn rfft(&self, input: &[T], out_re: &mut [T], out_im: &mut [T], scratch: &mut RfftScratch<T>) {
        let bins = self.n / 2 + 1;
        scratch.prepare(self.n);
        scratch.re[..input.len()].copy_from_slice(input);
        self.forward(&mut scratch.re, &mut scratch.im);
        out_re[..bins].copy_from_slice(&scratch.re[..bins]);
        out_im[..bins].copy_from_slice(&scratch.im[..bins]);
    }

    /// Adjoint of [`Fft::rfft`]: accumulates
    /// `sum_k g_re[k] cos(theta_kn) - g_im[k] sin(theta_kn)` into `grad_in`.
    pub fn rfft_adjoint(&self, g_re: &[T], g_im: &[T], grad_in: &mut [T], scratch: &mut RfftScratch<T>) {
        let bins = self.n / 2 + 1;
        scratch.prepare(self.n);
        scratch.re[..bins].copy_from_slice(&g_re[..bins]);
        for (d, &s) in scratch.im[..bins].iter_mut().zip(&g_im[..bins]) {
            *d = -s;
        }
        self.forward(&mut scratch.re, &mut scratch.im);
        for (g, &v) in grad_in.iter_mut().zip(&scratch.re) {
            *g += v;
        }
    }
}

/// Reusable work buffers for real transforms.
#[derive(Debug, Default, Clone)]
pub struct RfftScratch<T> {
    re: Vec<T>,
    im: Vec<T>,
}

impl<T: Real> RfftScratch<T> {
    pub fn new() -> Self {
        RfftScratch {
            re: Vec::new(),
            im: Vec::new(),
        }
    }

    fn prepare(&mut self, n: usize) {
        self.re.clear();
        self.re.resize(n, T::zero());
        self.im.clear();
        self.im.resize(n, T::zero());
    }
}
