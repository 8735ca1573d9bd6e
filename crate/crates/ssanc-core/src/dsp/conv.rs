//! Linear convolution, direct and FFT-based.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Product-of-lengths threshold above which `convolve_full` switches from
/// the direct sum to the FFT path.
const FFT_THRESHOLD: usize = 1 << 14;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Causal FIR filtering: output has the same length as `x`, with
/// `y[n] = sum_m h[m] x[n-m]` and the startup transient included.
pub fn convolve(h: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if h.is_empty() || x.is_empty() {
        return Err(Error::InvalidArgument(
            "convolve requires non-empty filter and signal".into(),
        ));
    }
    let full = convolve_full(h, x);
    Ok(full[..x.len()].to_vec())
}

/// Full linear convolution of length `a.len() + b.len() - 1`.
///
/// Small problems use the direct sum; large ones a zero-padded FFT. Both
/// paths agree to roundoff, which the tests pin down.
pub fn convolve_full(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert!(
        !a.is_empty() && !b.is_empty(),
        "convolve_full requires non-empty inputs"
    );
    if a.len() * b.len() <= FFT_THRESHOLD {
        direct_convolve_full(a, b)
    } else {
        fft_convolve_full(a, b)
    }
}

fn direct_convolve_full(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() + b.len() - 1;
    let mut out = vec![0.0; n];
    // Iterate over the shorter sequence in the outer loop for locality.
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    for (i, &s) in short.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        for (j, &l) in long.iter().enumerate() {
            out[i + j] += s * l;
        }
    }
    out
}

/// Sliding dot products `out[c] = sum_m a[m] u[m + c]` for `c` in
/// `0..n_out`, reading `u` as zero beyond its end.
///
/// This is the transposed-convolution / cross-correlation kernel shared by
/// the operator types and the correlation estimators; it rides the same
/// direct-vs-FFT selection as `convolve_full`.
pub(crate) fn sliding_dot(a: &[f64], u: &[f64], n_out: usize) -> Vec<f64> {
    assert!(!a.is_empty() && n_out > 0);
    let needed = a.len() + n_out - 1;
    let reversed: Vec<f64> = a.iter().rev().copied().collect();
    let full = if u.len() >= needed {
        convolve_full(&reversed, u)
    } else {
        let mut padded = u.to_vec();
        padded.resize(needed, 0.0);
        convolve_full(&reversed, &padded)
    };
    full[a.len() - 1..a.len() - 1 + n_out].to_vec()
}

/// FFT convolution via one zero-padded complex transform pair.
pub fn fft_convolve_full(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert!(!a.is_empty() && !b.is_empty());
    let n = a.len() + b.len() - 1;
    let m = n.next_power_of_two();
    let mut fa: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); m];
    let mut fb: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); m];
    for (dst, &src) in fa.iter_mut().zip(a) {
        dst.re = src;
    }
    for (dst, &src) in fb.iter_mut().zip(b) {
        dst.re = src;
    }
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let fwd = planner.plan_fft_forward(m);
        fwd.process(&mut fa);
        fwd.process(&mut fb);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x *= y;
        }
        let inv = planner.plan_fft_inverse(m);
        inv.process(&mut fa);
    });
    let scale = 1.0 / m as f64;
    fa[..n].iter().map(|c| c.re * scale).collect()
}
