//! MMSE equalization and Gray-labelled square QAM.

use faer::linalg::solvers::{ColPivQr, Llt, Solve};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::C64;

/// Square QAM with Gray labels on each axis and unit average energy.
///
/// The first half of every symbol's bits (MSB first) selects the in-phase
/// level, the second half the quadrature level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Qam {
    order: usize,
    side: usize,
    bits_per_axis: usize,
    scale: f64,
}

impl Qam {
    pub fn new(order: usize) -> Result<Self> {
        let side = match order {
            4 => 2,
            16 => 4,
            64 => 8,
            other => return Err(Error::QamOrder(other)),
        };
        Ok(Qam {
            order,
            side,
            bits_per_axis: side.trailing_zeros() as usize,
            scale: (2.0 * (order as f64 - 1.0) / 3.0).sqrt().recip(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis
    }

    fn level(&self, label: usize) -> f64 {
        // position whose Gray code is `label`
        let mut pos = label;
        let mut shift = label >> 1;
        while shift != 0 {
            pos ^= shift;
            shift >>= 1;
        }
        (2.0 * pos as f64 - (self.side - 1) as f64) * self.scale
    }

    fn label(&self, x: f64) -> usize {
        let pos = ((x / self.scale + (self.side - 1) as f64) / 2.0).round();
        let pos = pos.clamp(0.0, (self.side - 1) as f64) as usize;
        pos ^ (pos >> 1)
    }

    pub fn map(&self, bits: &[u8]) -> Result<Vec<C64>> {
        let b = self.bits_per_symbol();
        if bits.len() % b != 0 {
            return Err(Error::Dimension(format!(
                "{} bits is not a multiple of {b} bits per symbol",
                bits.len()
            )));
        }
        let half = self.bits_per_axis;
        let word = |chunk: &[u8]| chunk.iter().fold(0usize, |acc, &v| (acc << 1) | (v & 1) as usize);
        Ok(bits
            .chunks(b)
            .map(|c| C64::new(self.level(word(&c[..half])), self.level(word(&c[half..]))))
            .collect())
    }

    /// Minimum-distance hard decisions.
    pub fn demap(&self, symbols: &[C64]) -> Vec<u8> {
        let half = self.bits_per_axis;
        let mut out = Vec::with_capacity(symbols.len() * 2 * half);
        for s in symbols {
            for label in [self.label(s.re), self.label(s.im)] {
                for k in (0..half).rev() {
                    out.push(((label >> k) & 1) as u8);
                }
            }
        }
        out
    }

    /// All constellation points in label order.
    pub fn constellation(&self) -> Vec<C64> {
        let b = self.bits_per_symbol();
        (0..self.order)
            .map(|v| {
                let bits: Vec<u8> = (0..b).rev().map(|k| ((v >> k) & 1) as u8).collect();
                self.map(&bits).expect("one symbol")[0]
            })
            .collect()
    }
}

pub fn qam_map(bits: &[u8], order: usize) -> Result<Vec<C64>> {
    Qam::new(order)?.map(bits)
}

pub fn qam_demap(symbols: &[C64], order: usize) -> Result<Vec<u8>> {
    Ok(Qam::new(order)?.demap(symbols))
}

/// A square effective channel with its Gram matrix, shared by every noise
/// level it is equalized at.
#[derive(Debug, Clone)]
pub struct Equalizer {
    h: ComplexMatrix,
    gram: ComplexMatrix,
}

impl Equalizer {
    pub fn new(h: ComplexMatrix) -> Result<Self> {
        if h.rows() != h.cols() {
            return Err(Error::Dimension(format!(
                "effective channel must be square, got {}x{}",
                h.rows(),
                h.cols()
            )));
        }
        if !h.is_finite() {
            return Err(Error::Numerical("effective channel has non-finite entries".into()));
        }
        let gram = h.gram();
        Ok(Equalizer { h, gram })
    }

    pub fn channel(&self) -> &ComplexMatrix {
        &self.h
    }

    /// Factorizes `H^H H + σ² I` (or H itself when σ² = 0).
    pub fn at_noise(&self, sigma2: f64) -> Result<MmseDetector<'_>> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::Numerical(format!("noise variance {sigma2} is invalid")));
        }
        let n = self.h.rows();
        if sigma2 == 0.0 {
            let qr = self.h.view().col_piv_qr();
            let r = qr.R();
            let first = r[(0, 0)].norm();
            let last = r[(n - 1, n - 1)].norm();
            if !(last > first * 1e-12) {
                return Err(Error::RegularizationRequired);
            }
            return Ok(MmseDetector {
                eq: self,
                solver: Solver::Qr(qr),
            });
        }
        let mut g = Mat::<C64>::from_fn(n, n, |i, j| self.gram[(i, j)]);
        for i in 0..n {
            g[(i, i)] += sigma2;
        }
        let llt = g
            .llt(Side::Lower)
            .map_err(|_| Error::Numerical("regularized Gram matrix is not positive definite".into()))?;
        Ok(MmseDetector {
            eq: self,
            solver: Solver::Llt(llt),
        })
    }
}

enum Solver {
    Llt(Llt<C64>),
    Qr(ColPivQr<C64>),
}

/// Factorized MMSE filter for one channel and noise level.
pub struct MmseDetector<'a> {
    eq: &'a Equalizer,
    solver: Solver,
}

impl MmseDetector<'_> {
    pub fn detect(&self, d_tilde: &[C64]) -> Result<Vec<C64>> {
        let n = self.eq.h.rows();
        if d_tilde.len() != n {
            return Err(Error::len("MMSE input", n, d_tilde.len()));
        }
        let y = Mat::<C64>::from_fn(n, 1, |i, _| d_tilde[i]);
        let x = match &self.solver {
            Solver::Qr(qr) => qr.solve(&y),
            Solver::Llt(llt) => {
                let rhs = self.eq.h.view().adjoint() * &y;
                llt.solve(&rhs)
            }
        };
        let out: Vec<C64> = (0..n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Numerical("MMSE output is not finite".into()));
        }
        Ok(out)
    }
}

/// `(H^H H + σ² I)^{-1} H^H d̃`.
pub fn mmse_detect(h: &ComplexMatrix, d_tilde: &[C64], sigma2: f64) -> Result<Vec<C64>> {
    Equalizer::new(h.clone())?.at_noise(sigma2)?.detect(d_tilde)
}

/// Equalized symbols, hard bits and the per-symbol error vector magnitude
/// against the nearest constellation point.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub d_hat: Vec<C64>,
    pub bits_hat: Vec<u8>,
    pub evm: f64,
}

pub fn detect_frame(
    detector: &MmseDetector<'_>,
    d_tilde: &[C64],
    qam: &Qam,
) -> Result<DetectionResult> {
    let d_hat = detector.detect(d_tilde)?;
    let bits_hat = qam.demap(&d_hat);
    let decided = qam.map(&bits_hat)?;
    let err: f64 = d_hat
        .iter()
        .zip(&decided)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        / d_hat.len() as f64;
    Ok(DetectionResult {
        d_hat,
        bits_hat,
        evm: err.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn qam_energy_and_roundtrip() {
        for order in [4, 16, 64] {
            let qam = Qam::new(order).unwrap();
            let pts = qam.constellation();
            let e: f64 = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
            assert!((e - 1.0).abs() < 1e-12, "order {order}: {e}");
            let mut rng = ChaCha8Rng::seed_from_u64(order as u64);
            for _ in 0..10_000 / order {
                let bits: Vec<u8> = (0..qam.bits_per_symbol() * 8).map(|_| rng.random_range(0..2)).collect();
                assert_eq!(qam.demap(&qam.map(&bits).unwrap()), bits);
            }
        }
        assert!(matches!(Qam::new(8), Err(Error::QamOrder(8))));
        assert!(qam_map(&[1, 0, 1], 4).is_err());
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        for order in [4, 16, 64] {
            let qam = Qam::new(order).unwrap();
            let pts = qam.constellation();
            let dmin = 2.0 * qam.scale;
            for (a, pa) in pts.iter().enumerate() {
                for (b, pb) in pts.iter().enumerate() {
                    if ((pa - pb).norm() - dmin).abs() < 1e-9 {
                        assert_eq!((a ^ b).count_ones(), 1, "order {order}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn identity_channel_passes_through() {
        let d: Vec<C64> = (0..8).map(|k| C64::new(k as f64, -1.0)).collect();
        let out = mmse_detect(&ComplexMatrix::identity(8), &d, 0.0).unwrap();
        for (a, b) in out.iter().zip(&d) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn matches_explicit_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = random_matrix(16, &mut rng);
        let y: Vec<C64> = (0..16).map(|_| C64::new(rng.random(), rng.random())).collect();
        let sigma2 = 0.3;
        let got = mmse_detect(&h, &y, sigma2).unwrap();

        // Gauss-Jordan inverse of the regularized Gram matrix
        let n = 16;
        let mut a = h.gram();
        for i in 0..n {
            a[(i, i)] += sigma2;
        }
        let mut inv = ComplexMatrix::identity(n);
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[(i, col)].norm().total_cmp(&a[(j, col)].norm())).unwrap();
            for k in 0..n {
                let (t1, t2) = (a[(col, k)], inv[(col, k)]);
                a[(col, k)] = a[(piv, k)];
                a[(piv, k)] = t1;
                inv[(col, k)] = inv[(piv, k)];
                inv[(piv, k)] = t2;
            }
            let p = a[(col, col)];
            for k in 0..n {
                a[(col, k)] /= p;
                inv[(col, k)] /= p;
            }
            for i in 0..n {
                if i != col {
                    let f = a[(i, col)];
                    for k in 0..n {
                        let (ack, ick) = (a[(col, k)], inv[(col, k)]);
                        a[(i, k)] -= f * ack;
                        inv[(i, k)] -= f * ick;
                    }
                }
            }
        }
        let want = inv.matvec(&h.adjoint().matvec(&y));
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn shrinks_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_matrix(12, &mut rng);
        let y: Vec<C64> = (0..12).map(|_| C64::new(rng.random(), rng.random())).collect();
        let eq = Equalizer::new(h).unwrap();
        let mut last = f64::INFINITY;
        for s in [0.01, 0.1, 1.0, 10.0, 100.0, 1e4] {
            let x = eq.at_noise(s).unwrap().detect(&y).unwrap();
            let norm: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            assert!(norm < last);
            last = norm;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn singular_needs_regularization() {
        let mut h = ComplexMatrix::identity(4);
        h[(3, 3)] = C64::new(0.0, 0.0);
        let y = vec![C64::new(1.0, 0.0); 4];
        assert!(matches!(mmse_detect(&h, &y, 0.0), Err(Error::RegularizationRequired)));
        assert!(mmse_detect(&h, &y, 0.1).is_ok());
    }
}
