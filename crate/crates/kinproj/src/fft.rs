//! Thin spectral layer over rustfft for periodic coefficient functions:
//! forward transforms, band-limited point evaluation, uniform shifts and
//! spectral derivatives.
//!
//! Conventions for even N: modes m = 0..N with frequencies m (m <= N/2) or
//! m - N (m > N/2). The Nyquist mode is treated as a pure cosine, so odd
//! derivatives send it to zero and shifts scale it by cos of the phase.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::f64::consts::TAU;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward DFT of real samples.
pub fn forward(values: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    PLANNER.with(|p| {
        let fft = p.borrow_mut().plan_fft_forward(buf.len());
        fft.process(&mut buf);
    });
    buf
}

/// Real part of the normalized inverse DFT.
pub fn inverse_real(spectrum: &[Complex<f64>]) -> Vec<f64> {
    let mut buf = spectrum.to_vec();
    PLANNER.with(|p| {
        let fft = p.borrow_mut().plan_fft_inverse(buf.len());
        fft.process(&mut buf);
    });
    let n = buf.len() as f64;
    buf.iter().map(|c| c.re / n).collect()
}

/// Signed frequency of mode index m.
fn freq(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// Evaluate the band-limited interpolant at an arbitrary point.
pub fn point_eval(spectrum: &[Complex<f64>], l_period: f64, x: f64) -> f64 {
    let n = spectrum.len();
    let nf = n as f64;
    let mut acc = spectrum[0].re;
    for (m, c) in spectrum.iter().enumerate().take(n / 2).skip(1) {
        let phase = TAU * m as f64 * x / l_period;
        acc += 2.0 * (c.re * phase.cos() - c.im * phase.sin());
    }
    if n % 2 == 0 && n >= 2 {
        let phase = TAU * (n / 2) as f64 * x / l_period;
        acc += spectrum[n / 2].re * phase.cos();
    }
    acc / nf
}

/// Spectrum of `x -> f(x - a)`.
pub fn shift_spectrum(spectrum: &[Complex<f64>], l_period: f64, a: f64) -> Vec<Complex<f64>> {
    let n = spectrum.len();
    spectrum
        .iter()
        .enumerate()
        .map(|(m, c)| {
            if n % 2 == 0 && m == n / 2 {
                c * ((TAU * (n / 2) as f64 * a / l_period).cos())
            } else {
                let phase = -TAU * freq(m, n) as f64 * a / l_period;
                c * Complex::new(phase.cos(), phase.sin())
            }
        })
        .collect()
}

/// Spectrum of the `order`-th derivative.
pub fn derivative_spectrum(
    spectrum: &[Complex<f64>],
    l_period: f64,
    order: usize,
) -> Vec<Complex<f64>> {
    let n = spectrum.len();
    spectrum
        .iter()
        .enumerate()
        .map(|(m, c)| {
            if order == 0 {
                return *c;
            }
            if n % 2 == 0 && m == n / 2 {
                if order % 2 == 1 {
                    return Complex::new(0.0, 0.0);
                }
                let k = TAU * (n / 2) as f64 / l_period;
                let factor = k.powi(order as i32) * if (order / 2) % 2 == 0 { 1.0 } else { -1.0 };
                return c * factor;
            }
            let k = TAU * freq(m, n) as f64 / l_period;
            let ik = Complex::new(0.0, k);
            c * ik.powi(order as i32)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    fn sample(n: usize, l: f64, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..n).map(|j| f(j as f64 * l / n as f64)).collect()
    }

    #[test]
    fn point_eval_reproduces_harmonics() {
        let l = 2.0;
        let f = |x: f64| (TAU * 3.0 * x / l).sin() + 0.5 * (TAU * x / l).cos();
        let spec = forward(&sample(32, l, f));
        for &x in &[0.0, 0.3 * l, 0.77 * l, 1.99 * l] {
            assert_relative_eq!(point_eval(&spec, l, x), f(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn shift_matches_closed_form() {
        let l = 1.0;
        let f = |x: f64| (TAU * 2.0 * x / l).sin();
        let spec = forward(&sample(64, l, f));
        let a = 0.137;
        let shifted = inverse_real(&shift_spectrum(&spec, l, a));
        for (j, got) in shifted.iter().enumerate() {
            let x = j as f64 * l / 64.0;
            assert_relative_eq!(*got, f(x - a), epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_matches_closed_form() {
        let l = 1.0;
        let f = |x: f64| (TAU * x / l).sin();
        let spec = forward(&sample(64, l, f));
        let d1 = inverse_real(&derivative_spectrum(&spec, l, 1));
        let d2 = inverse_real(&derivative_spectrum(&spec, l, 2));
        for j in 0..64 {
            let x = j as f64 / 64.0;
            assert_relative_eq!(d1[j], TAU / l * (TAU * x / l).cos(), epsilon = 1e-10);
            assert_relative_eq!(d2[j], -(TAU / l).powi(2) * (TAU * x / l).sin(), epsilon = 1e-9);
        }
    }

    #[test]
    fn roundtrip_identity() {
        let vals: Vec<f64> = (0..16).map(|j| (j as f64).sin() + 0.1 * j as f64).collect();
        let back = inverse_real(&forward(&vals));
        for (a, b) in vals.iter().zip(back.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
    }
}
