//! SC-FDMA based OTFS modem.
//!
//! The delay-Doppler vector `d` goes to the frequency-Doppler domain through
//! `Γ = Ψ(I_N ⊗ F_M)Ω` (twiddle, per-block DFT, interleave) and to time with
//! one MN-point inverse DFT. This is the Zak modulator `(F_N^H ⊗ I_M)` in
//! disguise: `F_MN^H Γ = F_N^H ⊗ I_M`.

use rand::Rng;

use crate::detect::Qam;
use crate::error::{Error, Result};
use crate::geometry::FrameGeometry;
use crate::matrix::ComplexMatrix;
use crate::transform::{doppler_dft, interleave, deinterleave, twiddle_diag, Dft, Direction};
use crate::C64;

/// QAM symbols on the M×N delay-Doppler grid, stored as `d[n·M + m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerFrame {
    geom: FrameGeometry,
    symbols: Vec<C64>,
    bits: Vec<u8>,
    qam_order: Option<usize>,
}

impl DelayDopplerFrame {
    pub fn from_bits(geom: FrameGeometry, bits: Vec<u8>, qam_order: usize) -> Result<Self> {
        let qam = Qam::new(qam_order)?;
        let want = geom.mn() * qam.bits_per_symbol();
        if bits.len() != want {
            return Err(Error::len("frame bits", want, bits.len()));
        }
        let symbols = qam.map(&bits)?;
        Ok(DelayDopplerFrame {
            geom,
            symbols,
            bits,
            qam_order: Some(qam_order),
        })
    }

    /// Uniform random bits mapped to `qam_order`-QAM.
    pub fn random<R: Rng + ?Sized>(geom: FrameGeometry, qam_order: usize, rng: &mut R) -> Result<Self> {
        let qam = Qam::new(qam_order)?;
        let bits = (0..geom.mn() * qam.bits_per_symbol())
            .map(|_| rng.random_range(0..2u8))
            .collect();
        Self::from_bits(geom, bits, qam_order)
    }

    /// Arbitrary symbols without a bit payload.
    pub fn from_symbols(geom: FrameGeometry, symbols: Vec<C64>) -> Result<Self> {
        geom.check_len("frame symbols", symbols.len())?;
        Ok(DelayDopplerFrame {
            geom,
            symbols,
            bits: Vec::new(),
            qam_order: None,
        })
    }

    /// A single unit symbol at delay `m`, Doppler `n`.
    pub fn impulse(geom: FrameGeometry, m: usize, n: usize) -> Result<Self> {
        if m >= geom.m() || n >= geom.n() {
            return Err(Error::Dimension(format!(
                "bin ({m}, {n}) outside a {}x{} grid",
                geom.m(),
                geom.n()
            )));
        }
        let mut symbols = vec![C64::new(0.0, 0.0); geom.mn()];
        symbols[n * geom.m() + m] = C64::new(1.0, 0.0);
        Self::from_symbols(geom, symbols)
    }

    pub fn geometry(&self) -> &FrameGeometry {
        &self.geom
    }

    /// Vectorized symbols `d`.
    pub fn symbols(&self) -> &[C64] {
        &self.symbols
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn qam_order(&self) -> Option<usize> {
        self.qam_order
    }

    pub fn symbol(&self, m: usize, n: usize) -> C64 {
        self.symbols[n * self.geom.m() + m]
    }

    /// `D` as rows of delay, columns of Doppler.
    pub fn grid(&self) -> Vec<Vec<C64>> {
        to_grid(&self.symbols, &self.geom)
    }
}

/// Reshapes a vectorized frame into `D[m][n]`.
pub fn to_grid(d: &[C64], geom: &FrameGeometry) -> Vec<Vec<C64>> {
    (0..geom.m())
        .map(|m| (0..geom.n()).map(|n| d[n * geom.m() + m]).collect())
        .collect()
}

/// Intermediate signals of one modulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModemOutput {
    /// Frequency-Doppler vector Γd.
    pub s_f: Vec<C64>,
    /// Delay-time vector F_MN^H s_f.
    pub s_t: Vec<C64>,
    /// s_t with the cyclic prefix.
    pub x_t: Vec<C64>,
}

pub fn add_cp(s: &[C64], cp_len: usize) -> Result<Vec<C64>> {
    if cp_len > s.len() {
        return Err(Error::Geometry(format!(
            "cp_len={cp_len} exceeds the block length {}",
            s.len()
        )));
    }
    let mut out = Vec::with_capacity(s.len() + cp_len);
    out.extend_from_slice(&s[s.len() - cp_len..]);
    out.extend_from_slice(s);
    Ok(out)
}

pub fn remove_cp(r: &[C64], cp_len: usize, block_len: usize) -> Result<Vec<C64>> {
    if r.len() != block_len + cp_len {
        return Err(Error::len("received frame", block_len + cp_len, r.len()));
    }
    Ok(r[cp_len..].to_vec())
}

/// Planned transforms for one geometry. Immutable and shareable.
#[derive(Debug, Clone)]
pub struct ScFdmaModem {
    geom: FrameGeometry,
    twiddle: Vec<C64>,
    dft_m: Dft,
    dft_n: Dft,
    dft_mn: Dft,
}

impl ScFdmaModem {
    pub fn new(geom: FrameGeometry) -> Result<Self> {
        Ok(ScFdmaModem {
            twiddle: twiddle_diag(&geom),
            dft_m: Dft::new(geom.m())?,
            dft_n: Dft::new(geom.n())?,
            dft_mn: Dft::new(geom.mn())?,
            geom,
        })
    }

    pub fn geometry(&self) -> &FrameGeometry {
        &self.geom
    }

    /// `s_f = Ψ(I_N ⊗ F_M)Ω d`.
    pub fn spread(&self, d: &[C64]) -> Result<Vec<C64>> {
        self.geom.check_len("delay-Doppler vector", d.len())?;
        let mut x: Vec<C64> = d.iter().zip(&self.twiddle).map(|(a, w)| a * w).collect();
        self.dft_m.forward(&mut x);
        interleave(&x, &self.geom)
    }

    /// `d = Ω^H (I_N ⊗ F_M^H) Ψ^H s_f`.
    pub fn despread(&self, s_f: &[C64]) -> Result<Vec<C64>> {
        let mut x = deinterleave(s_f, &self.geom)?;
        self.dft_m.inverse(&mut x);
        for (v, w) in x.iter_mut().zip(&self.twiddle) {
            *v *= w.conj();
        }
        Ok(x)
    }

    /// Zak modulation `(F_N^H ⊗ I_M) d`.
    pub fn zak(&self, d: &[C64]) -> Result<Vec<C64>> {
        self.geom.check_len("delay-Doppler vector", d.len())?;
        Ok(doppler_dft(d, self.geom.m(), &self.dft_n, Direction::Inverse))
    }

    /// Inverse Zak `(F_N ⊗ I_M) s_t`.
    pub fn inverse_zak(&self, s_t: &[C64]) -> Result<Vec<C64>> {
        self.geom.check_len("delay-time vector", s_t.len())?;
        Ok(doppler_dft(s_t, self.geom.m(), &self.dft_n, Direction::Forward))
    }

    pub fn modulate(&self, d: &[C64]) -> Result<ModemOutput> {
        let s_f = self.spread(d)?;
        let mut s_t = s_f.clone();
        self.dft_mn.inverse(&mut s_t);
        let x_t = add_cp(&s_t, self.geom.cp_len())?;
        Ok(ModemOutput { s_f, s_t, x_t })
    }

    /// Demodulates a CP-prefixed frame of length MN + L_cp.
    pub fn demodulate(&self, r_t: &[C64]) -> Result<Vec<C64>> {
        let s = remove_cp(r_t, self.geom.cp_len(), self.geom.mn())?;
        self.demodulate_block(s)
    }

    /// Demodulates MN delay-time samples with the CP already removed.
    pub fn demodulate_block(&self, mut s_t: Vec<C64>) -> Result<Vec<C64>> {
        self.geom.check_len("delay-time block", s_t.len())?;
        self.dft_mn.forward(&mut s_t);
        self.despread(&s_t)
    }
}

pub fn otfs_modulate_zak(frame: &DelayDopplerFrame) -> Result<Vec<C64>> {
    ScFdmaModem::new(*frame.geometry())?.zak(frame.symbols())
}

pub fn scfdma_modulate(frame: &DelayDopplerFrame) -> Result<ModemOutput> {
    ScFdmaModem::new(*frame.geometry())?.modulate(frame.symbols())
}

pub fn scfdma_demodulate(r_t: &[C64], geom: &FrameGeometry) -> Result<Vec<C64>> {
    ScFdmaModem::new(*geom)?.demodulate(r_t)
}

/// `H_DD = Γ^H F_MN H_dt F_MN^H Γ` for a CP-reduced delay-time matrix.
pub fn effective_dd_channel(h_dt: &ComplexMatrix, geom: &FrameGeometry) -> Result<ComplexMatrix> {
    let mn = geom.mn();
    if h_dt.rows() != mn || h_dt.cols() != mn {
        return Err(Error::Dimension(format!(
            "delay-time matrix must be {mn}x{mn}, got {}x{}",
            h_dt.rows(),
            h_dt.cols()
        )));
    }
    let modem = ScFdmaModem::new(*geom)?;
    // F_MN^H Γ = F_N^H ⊗ I_M, so the columns are Zak-modulated unit vectors.
    let mut basis = Vec::with_capacity(mn);
    for j in 0..mn {
        let mut e = vec![C64::new(0.0, 0.0); mn];
        e[j] = C64::new(1.0, 0.0);
        basis.push(modem.zak(&e)?);
    }
    let passed = h_dt.matmul(&ComplexMatrix::from_columns(&basis));
    let columns = (0..mn)
        .map(|j| modem.inverse_zak(&passed.column(j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComplexMatrix::from_columns(&columns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_d(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
        (0..n).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
    }

    #[test]
    fn zak_of_constant_grid() {
        let g = FrameGeometry::new(4, 4, 1.0).unwrap();
        let frame = DelayDopplerFrame::from_symbols(g, vec![c(0.5, 0.5); 16]).unwrap();
        let s = otfs_modulate_zak(&frame).unwrap();
        for (i, v) in s.iter().enumerate() {
            let want = if i < 4 { c(1.0, 1.0) } else { c(0.0, 0.0) };
            assert!((v - want).norm() < 1e-12, "{i}: {v}");
        }
        let g1 = FrameGeometry::new(5, 1, 1.0).unwrap();
        let d: Vec<C64> = (0..5).map(|k| c(k as f64, 1.0)).collect();
        let frame = DelayDopplerFrame::from_symbols(g1, d.clone()).unwrap();
        assert_eq!(otfs_modulate_zak(&frame).unwrap(), d);
    }

    #[test]
    fn scfdma_matches_zak_and_preserves_energy() {
        let g = FrameGeometry::new(8, 4, 1.0).unwrap().with_cp(3);
        let modem = ScFdmaModem::new(g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_d(32, &mut rng);
        let out = modem.modulate(&d).unwrap();
        let zak = modem.zak(&d).unwrap();
        let energy = |v: &[C64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>();
        for (a, b) in out.s_t.iter().zip(&zak) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!((energy(&out.s_t) - energy(&d)).abs() < 1e-12);
        assert!((energy(&out.s_f) - energy(&d)).abs() < 1e-12);
        assert_eq!(out.x_t.len(), 35);
        let back = modem.demodulate(&out.x_t).unwrap();
        for (a, b) in back.iter().zip(&d) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(modem.demodulate(&out.s_t).is_err());
    }

    #[test]
    fn cp_examples() {
        let s: Vec<C64> = (0..4).map(|k| c(k as f64, 0.0)).collect();
        let x = add_cp(&s, 2).unwrap();
        let re: Vec<f64> = x.iter().map(|v| v.re).collect();
        assert_eq!(re, vec![2.0, 3.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(remove_cp(&x, 2, 4).unwrap(), s);
        assert!(add_cp(&s, 5).is_err());
    }

    #[test]
    fn zero_input_demodulates_to_zero() {
        let g = FrameGeometry::new(4, 2, 1.0).unwrap().with_cp(1);
        let d = scfdma_demodulate(&[c(0.0, 0.0); 9], &g).unwrap();
        assert!(d.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn effective_channel_scalar() {
        let g = FrameGeometry::new(4, 2, 1.0).unwrap();
        let h = effective_dd_channel(&ComplexMatrix::identity(8).scale(c(0.3, -2.0)), &g).unwrap();
        let want = ComplexMatrix::identity(8).scale(c(0.3, -2.0));
        assert!(h.max_abs_diff(&want) < 1e-12);
        assert!(effective_dd_channel(&ComplexMatrix::identity(4), &g).is_err());
    }

    #[test]
    fn frames() {
        let g = FrameGeometry::new(4, 2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = DelayDopplerFrame::random(g, 16, &mut rng).unwrap();
        assert_eq!(f.bits().len(), 32);
        assert_eq!(f.grid()[1][1], f.symbols()[5]);
        let imp = DelayDopplerFrame::impulse(g, 2, 1).unwrap();
        assert_eq!(imp.symbol(2, 1), c(1.0, 0.0));
        assert!(DelayDopplerFrame::impulse(g, 4, 0).is_err());
    }
}
