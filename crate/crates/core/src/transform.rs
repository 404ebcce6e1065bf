//! DFT, twiddle and interleaving kernels.
//!
//! All DFTs are unitary (1/√n on both directions). Delay-Doppler vectors are
//! stored column-major by Doppler block: `d[n·M + m] = D[m][n]`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::FrameGeometry;
use crate::matrix::ComplexMatrix;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// A planned unitary DFT of fixed size.
#[derive(Clone)]
pub struct Dft {
    len: usize,
    scale: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Dft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dft").field("len", &self.len).finish()
    }
}

impl Dft {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Dimension("DFT size must be positive".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Dft {
            len,
            scale: 1.0 / (len as f64).sqrt(),
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Transforms every consecutive chunk of `len` samples in place.
    pub fn process(&self, buf: &mut [C64], dir: Direction) {
        debug_assert_eq!(buf.len() % self.len, 0);
        match dir {
            Direction::Forward => self.forward.process(buf),
            Direction::Inverse => self.inverse.process(buf),
        }
        for v in buf.iter_mut() {
            *v *= self.scale;
        }
    }

    pub fn forward(&self, buf: &mut [C64]) {
        self.process(buf, Direction::Forward);
    }

    pub fn inverse(&self, buf: &mut [C64]) {
        self.process(buf, Direction::Inverse);
    }
}

/// Dense normalized DFT matrix, entries (1/√n)·exp(-j2πmk/n).
pub fn dft_matrix(n: usize) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(Error::Dimension("DFT size must be positive".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(ComplexMatrix::from_fn(n, n, |m, k| {
        C64::from_polar(scale, -2.0 * PI * ((m * k) % n) as f64 / n as f64)
    }))
}

/// Twiddle diagonal of length MN; entry `n·M + m` is exp(-j2πmn/(MN)).
pub fn twiddle_diag(geom: &FrameGeometry) -> Vec<C64> {
    let (m_len, n_len) = (geom.m(), geom.n());
    let mn = geom.mn();
    let mut out = Vec::with_capacity(mn);
    for n in 0..n_len {
        for m in 0..m_len {
            out.push(C64::from_polar(
                1.0,
                -2.0 * PI * ((m * n) % mn) as f64 / mn as f64,
            ));
        }
    }
    out
}

/// Stride permutation `y[m·N + n] = x[n·M + m]`.
pub fn interleave(x: &[C64], geom: &FrameGeometry) -> Result<Vec<C64>> {
    geom.check_len("interleave input", x.len())?;
    let (m_len, n_len) = (geom.m(), geom.n());
    let mut y = vec![C64::new(0.0, 0.0); x.len()];
    for m in 0..m_len {
        for n in 0..n_len {
            y[m * n_len + n] = x[n * m_len + m];
        }
    }
    Ok(y)
}

/// Inverse of [`interleave`].
pub fn deinterleave(y: &[C64], geom: &FrameGeometry) -> Result<Vec<C64>> {
    geom.check_len("deinterleave input", y.len())?;
    let (m_len, n_len) = (geom.m(), geom.n());
    let mut x = vec![C64::new(0.0, 0.0); y.len()];
    for m in 0..m_len {
        for n in 0..n_len {
            x[n * m_len + m] = y[m * n_len + n];
        }
    }
    Ok(x)
}

/// Applies F_M (or F_M^H) to each of the N contiguous length-M blocks.
pub fn blockwise_dft(x: &[C64], geom: &FrameGeometry, dir: Direction) -> Result<Vec<C64>> {
    geom.check_len("blockwise DFT input", x.len())?;
    let dft = Dft::new(geom.m())?;
    let mut y = x.to_vec();
    dft.process(&mut y, dir);
    Ok(y)
}

/// Per-delay DFT across the Doppler index: applies (F_N ⊗ I_M) or its
/// adjoint to a vector in block order.
pub(crate) fn doppler_dft(x: &[C64], m_len: usize, dft_n: &Dft, dir: Direction) -> Vec<C64> {
    let n_len = dft_n.len();
    let mut y = vec![C64::new(0.0, 0.0); x.len()];
    let mut row = vec![C64::new(0.0, 0.0); n_len];
    for m in 0..m_len {
        for n in 0..n_len {
            row[n] = x[n * m_len + m];
        }
        dft_n.process(&mut row, dir);
        for n in 0..n_len {
            y[n * m_len + m] = row[n];
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn labels(len: usize) -> Vec<C64> {
        (0..len).map(|i| c(i as f64, 0.0)).collect()
    }

    #[test]
    fn dft_matrix_small_cases() {
        let f1 = dft_matrix(1).unwrap();
        assert_eq!(f1[(0, 0)], c(1.0, 0.0));
        let f2 = dft_matrix(2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let want = [[s, s], [s, -s]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((f2[(i, j)] - c(want[i][j], 0.0)).norm() < 1e-15);
            }
        }
        let f4 = dft_matrix(4).unwrap();
        let prod = f4.matmul(&f4.adjoint());
        assert!(prod.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-14);
        assert!(dft_matrix(0).is_err());
    }

    #[test]
    fn twiddle_values() {
        let g = FrameGeometry::new(2, 2, 1.0).unwrap();
        let w = twiddle_diag(&g);
        // n = 0 block is all ones, ω_1 = [1, -j]
        assert!((w[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((w[1] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((w[2] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((w[3] - c(0.0, -1.0)).norm() < 1e-15);

        let g = FrameGeometry::new(4, 4, 1.0).unwrap();
        let w = twiddle_diag(&g);
        assert!((w[2 * 4 + 2] - c(0.0, -1.0)).norm() < 1e-15);
        assert!(w.iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn interleave_examples() {
        let g = FrameGeometry::new(2, 2, 1.0).unwrap();
        let y = interleave(&labels(4), &g).unwrap();
        let idx: Vec<f64> = y.iter().map(|v| v.re).collect();
        assert_eq!(idx, vec![0.0, 2.0, 1.0, 3.0]);

        let g = FrameGeometry::new(3, 2, 1.0).unwrap();
        let y = interleave(&labels(6), &g).unwrap();
        let idx: Vec<f64> = y.iter().map(|v| v.re).collect();
        assert_eq!(idx, vec![0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);

        let g = FrameGeometry::new(5, 1, 1.0).unwrap();
        assert_eq!(interleave(&labels(5), &g).unwrap(), labels(5));

        assert!(interleave(&labels(5), &FrameGeometry::new(2, 2, 1.0).unwrap()).is_err());
    }

    #[test]
    fn blockwise_dft_first_column() {
        let g = FrameGeometry::new(4, 2, 1.0).unwrap();
        let mut x = vec![c(0.0, 0.0); 8];
        x[0] = c(1.0, 0.0);
        let y = blockwise_dft(&x, &g, Direction::Forward).unwrap();
        for v in &y[..4] {
            assert!((v - c(0.5, 0.0)).norm() < 1e-15);
        }
        for v in &y[4..] {
            assert!(v.norm() < 1e-15);
        }
        let back = blockwise_dft(&y, &g, Direction::Inverse).unwrap();
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).norm() < 1e-12);
        }
        // M = 1 is the identity
        let g1 = FrameGeometry::new(1, 3, 1.0).unwrap();
        let z = vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 1.0)];
        assert_eq!(blockwise_dft(&z, &g1, Direction::Forward).unwrap(), z);
    }
}
