//! FFT helpers over rustfft. Arrays on a d-dimensional grid use the flat
//! index i0 + n*i1 (axis 0 fastest).

use num_complex::Complex64 as C;
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::f64::consts::PI;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward transform, kernel exp(-2πi kj/n).
pub fn fft(buf: &mut [C]) {
    let n = buf.len();
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    plan.process(buf);
}

/// Inverse transform including the 1/n factor.
pub fn ifft(buf: &mut [C]) {
    let n = buf.len();
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n));
    plan.process(buf);
    let s = 1.0 / n as f64;
    for z in buf.iter_mut() {
        *z *= s;
    }
}

/// Signed wavenumber of FFT index k: 0..n/2-1 then -n/2..-1.
pub fn label(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// FFT index of a signed wavenumber.
pub fn index_of(label: i64, n: usize) -> usize {
    label.rem_euclid(n as i64) as usize
}

/// Transform every axis of a flat n^d array.
pub fn fft_nd(buf: &mut [C], n: usize, d: usize, inverse: bool) {
    let mut line = vec![C::new(0.0, 0.0); n];
    let total = buf.len();
    for axis in 0..d {
        let stride = n.pow(axis as u32);
        for start in 0..total {
            // a line starts where the axis coordinate is 0
            if (start / stride) % n != 0 {
                continue;
            }
            for (k, z) in line.iter_mut().enumerate() {
                *z = buf[start + k * stride];
            }
            if inverse {
                ifft(&mut line);
            } else {
                fft(&mut line);
            }
            for (k, z) in line.iter().enumerate() {
                buf[start + k * stride] = *z;
            }
        }
    }
}

/// d/dx of a real periodic sample vector on a box of the given length.
/// The Nyquist coefficient is dropped so the result stays real.
pub fn derivative(values: &[f64], length: f64) -> Vec<f64> {
    let n = values.len();
    let mut buf: Vec<C> = values.iter().map(|&v| C::new(v, 0.0)).collect();
    fft(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let kl = label(k, n);
        if 2 * kl.unsigned_abs() as usize == n {
            *z = C::new(0.0, 0.0);
        } else {
            *z *= C::new(0.0, 2.0 * PI * kl as f64 / length);
        }
    }
    ifft(&mut buf);
    buf.iter().map(|z| z.re).collect()
}

/// Band-limited translation: returns samples of x -> f(x - shift).
pub fn shift(values: &[f64], shift: f64, length: f64) -> Vec<f64> {
    let n = values.len();
    let mut buf: Vec<C> = values.iter().map(|&v| C::new(v, 0.0)).collect();
    fft(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let kl = label(k, n);
        let ph = -2.0 * PI * kl as f64 * shift / length;
        if 2 * kl.unsigned_abs() as usize == n {
            *z *= ph.cos();
        } else {
            *z *= C::from_polar(1.0, ph);
        }
    }
    ifft(&mut buf);
    buf.iter().map(|z| z.re).collect()
}

/// Translation of a compactly supported (non-periodic) sample vector:
/// zero-padded to twice the length so nothing wraps around.
pub fn shift_padded(values: &[f64], shift_in_samples: f64) -> Vec<f64> {
    let n = values.len();
    let m = 2 * n;
    let mut buf = vec![C::new(0.0, 0.0); m];
    for (i, &v) in values.iter().enumerate() {
        buf[i] = C::new(v, 0.0);
    }
    fft(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let kl = label(k, m);
        let ph = -2.0 * PI * kl as f64 * shift_in_samples / m as f64;
        if 2 * kl.unsigned_abs() as usize == m {
            *z *= ph.cos();
        } else {
            *z *= C::from_polar(1.0, ph);
        }
    }
    ifft(&mut buf);
    buf[..n].iter().map(|z| z.re).collect()
}

/// Derivative of a compactly supported sample vector with spacing `step`
/// (zero-padded spectral derivative).
pub fn derivative_padded(values: &[f64], step: f64) -> Vec<f64> {
    let n = values.len();
    let m = 2 * n;
    let mut buf = vec![C::new(0.0, 0.0); m];
    for (i, &v) in values.iter().enumerate() {
        buf[i] = C::new(v, 0.0);
    }
    fft(&mut buf);
    let length = step * m as f64;
    for (k, z) in buf.iter_mut().enumerate() {
        let kl = label(k, m);
        if 2 * kl.unsigned_abs() as usize == m {
            *z = C::new(0.0, 0.0);
        } else {
            *z *= C::new(0.0, 2.0 * PI * kl as f64 / length);
        }
    }
    ifft(&mut buf);
    buf[..n].iter().map(|z| z.re).collect()
}
