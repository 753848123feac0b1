//! 2-D circular convolution through `rustfft`. Any size is accepted.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{shape_err, Result};

/// Row-major `h × w` 2-D transform. The inverse is scaled by `1/(h·w)`.
pub fn fft2_in_place(buf: &mut [Complex64], h: usize, w: usize, inverse: bool) -> Result<()> {
    if h == 0 || w == 0 || buf.len() != h * w {
        return shape_err(format!("buffer of {} for {h}x{w} FFT", buf.len()));
    }
    let mut planner = FftPlanner::<f64>::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row.process(buf);
    let mut column = vec![Complex64::default(); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = buf[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            buf[y * w + x] = column[y];
        }
    }
    if inverse {
        let s = 1.0 / (h * w) as f64;
        buf.iter_mut().for_each(|c| *c *= s);
    }
    Ok(())
}

fn fft2_real(data: &[f64], h: usize, w: usize) -> Result<Vec<Complex64>> {
    let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_in_place(&mut buf, h, w, false)?;
    Ok(buf)
}

fn ifft2_real(mut spec: Vec<Complex64>, h: usize, w: usize) -> Result<Vec<f64>> {
    fft2_in_place(&mut spec, h, w, true)?;
    Ok(spec.into_iter().map(|c| c.re).collect())
}

fn check_len(a: &[f64], b: &[f64], h: usize, w: usize) -> Result<()> {
    if a.len() != h * w || b.len() != h * w {
        return shape_err(format!("circular convolution of {} and {} values as {h}x{w}", a.len(), b.len()));
    }
    Ok(())
}

/// Wrap-around convolution `out(y, x) = Σ a(i, j) · b(y − i, x − j)`.
pub fn circular_convolve(a: &[f64], b: &[f64], h: usize, w: usize) -> Result<Vec<f64>> {
    check_len(a, b, h, w)?;
    let fa = fft2_real(a, h, w)?;
    let fb = fft2_real(b, h, w)?;
    ifft2_real(fa.iter().zip(&fb).map(|(x, y)| x * y).collect(), h, w)
}

/// Wrap-around cross-correlation `out(i, j) = Σ g(y, x) · b(y − i, x − j)`,
/// the adjoint of [`circular_convolve`] in its first argument.
pub fn circular_correlate(g: &[f64], b: &[f64], h: usize, w: usize) -> Result<Vec<f64>> {
    check_len(g, b, h, w)?;
    let fg = fft2_real(g, h, w)?;
    let fb = fft2_real(b, h, w)?;
    ifft2_real(fg.iter().zip(&fb).map(|(x, y)| x * y.conj()).collect(), h, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impulse_is_the_identity() {
        let (h, w) = (3, 5);
        let b: Vec<f64> = (0..h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut delta = vec![0.0; h * w];
        delta[0] = 1.0;
        for (x, y) in circular_convolve(&delta, &b, h, w).unwrap().iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn shifted_impulse_rolls() {
        let (h, w) = (4, 4);
        let b: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let mut delta = vec![0.0; 16];
        delta[w + 2] = 1.0;
        let out = circular_convolve(&delta, &b, h, w).unwrap();
        for y in 0..h {
            for x in 0..w {
                let src = ((y + h - 1) % h) * w + (x + w - 2) % w;
                assert!((out[y * w + x] - b[src]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_mismatched_lengths() {
        assert!(circular_convolve(&[1.0; 6], &[1.0; 4], 2, 3).is_err());
    }
}
