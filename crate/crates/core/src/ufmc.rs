//! Universal filtered multicarrier synthesis and analysis.
//!
//! The transmitter groups `n_sc` frequency bins into subbands of `n_sc_rb`,
//! brings each subband to time with the inverse DFT columns of its bins,
//! convolves it with the prototype shifted to the subband centre and sums
//! the subbands. The receiver takes the first `n_sc + L_f - 1` samples,
//! zero-pads them to `2 n_sc`, applies the normalized `2 n_sc`-point DFT and
//! keeps the even bins. Because `L_f - 1 <= n_sc`, the even bins equal
//! `1/√2` times the `n_sc`-point DFT of the time-folded frame, which is how
//! [`UfmcEngine::analyze`] computes them.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::FrameGeometry;
use crate::matrix::ComplexMatrix;
use crate::transform::Dft;
use crate::C64;

/// Default sidelobe attenuation of the Chebyshev prototype.
pub const DEFAULT_ATTEN_DB: f64 = 60.0;

/// Dolph-Chebyshev window with `atten_db` equiripple sidelobes, peak value 1.
pub fn chebyshev_window(len: usize, atten_db: f64) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(Error::Dimension("window length must be positive".into()));
    }
    if !(atten_db.is_finite() && atten_db > 0.0) {
        return Err(Error::Dimension(format!(
            "attenuation must be positive (got {atten_db})"
        )));
    }
    if len == 1 {
        return Ok(vec![1.0]);
    }
    let order = (len - 1) as f64;
    let beta = ((10f64.powf(atten_db / 20.0)).acosh() / order).cosh();
    let sign = if len % 2 == 1 { 1.0 } else { -1.0 };
    let p: Vec<f64> = (0..len)
        .map(|k| {
            let x = beta * (PI * k as f64 / len as f64).cos();
            if x > 1.0 {
                (order * x.acosh()).cosh()
            } else if x < -1.0 {
                sign * (order * (-x).acosh()).cosh()
            } else {
                (order * x.acos()).cos()
            }
        })
        .collect();

    // Real part of the DFT of the (possibly half-sample shifted) sampled
    // Chebyshev polynomial, mirrored into a symmetric window.
    let spectrum_re = |j: usize| -> f64 {
        let mut acc = 0.0;
        for (k, pk) in p.iter().enumerate() {
            let shift = if len % 2 == 1 {
                0.0
            } else {
                PI * k as f64 / len as f64
            };
            let phase = shift - 2.0 * PI * ((k * j) % len) as f64 / len as f64;
            acc += pk * phase.cos();
        }
        acc
    };
    let mut w = Vec::with_capacity(len);
    if len % 2 == 1 {
        let half = len.div_ceil(2);
        let coeffs: Vec<f64> = (0..half).map(spectrum_re).collect();
        w.extend(coeffs[1..].iter().rev());
        w.extend(coeffs.iter());
    } else {
        let half = len / 2 + 1;
        let coeffs: Vec<f64> = (0..half).map(spectrum_re).collect();
        w.extend(coeffs[1..].iter().rev());
        w.extend(coeffs[1..].iter());
    }
    let peak = w.iter().cloned().fold(f64::MIN, f64::max);
    Ok(w.into_iter().map(|v| v / peak).collect())
}

/// Chebyshev prototype of length `filter_len`, normalized to unit L2 norm.
pub fn design_chebyshev_prototype(filter_len: usize, atten_db: f64) -> Result<Vec<f64>> {
    let w = chebyshev_window(filter_len, atten_db)?;
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(w.into_iter().map(|v| v / norm).collect())
}

/// Prototype filter and subband layout of a UFMC modem.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBankSpec {
    prototype: Vec<f64>,
    atten_db: f64,
    n_sc: usize,
    n_sc_rb: usize,
}

impl FilterBankSpec {
    pub fn design(n_sc: usize, n_sc_rb: usize, filter_len: usize, atten_db: f64) -> Result<Self> {
        let prototype = design_chebyshev_prototype(filter_len, atten_db)?;
        Self::with_prototype(n_sc, n_sc_rb, prototype, atten_db)
    }

    /// Bank over the whole frame (`n_sc = MN`) using the geometry's layout.
    pub fn from_geometry(geom: &FrameGeometry, atten_db: f64) -> Result<Self> {
        Self::design(geom.n_sc(), geom.n_sc_rb(), geom.filter_len(), atten_db)
    }

    pub fn with_prototype(
        n_sc: usize,
        n_sc_rb: usize,
        prototype: Vec<f64>,
        atten_db: f64,
    ) -> Result<Self> {
        if n_sc == 0 || n_sc_rb == 0 || n_sc % n_sc_rb != 0 {
            return Err(Error::Geometry(format!(
                "n_sc_rb={n_sc_rb} must divide n_sc={n_sc}"
            )));
        }
        if prototype.is_empty() || prototype.len() > n_sc + 1 {
            return Err(Error::Geometry(format!(
                "filter length {} must lie in 1..={}",
                prototype.len(),
                n_sc + 1
            )));
        }
        Ok(FilterBankSpec {
            prototype,
            atten_db,
            n_sc,
            n_sc_rb,
        })
    }

    pub fn prototype(&self) -> &[f64] {
        &self.prototype
    }

    fn l2_norm(&self) -> f64 {
        self.prototype.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn filter_len(&self) -> usize {
        self.prototype.len()
    }

    pub fn atten_db(&self) -> f64 {
        self.atten_db
    }

    pub fn n_sc(&self) -> usize {
        self.n_sc
    }

    pub fn n_sc_rb(&self) -> usize {
        self.n_sc_rb
    }

    pub fn n_rb(&self) -> usize {
        self.n_sc / self.n_sc_rb
    }

    /// Synthesis output length `n_sc + L_f - 1`.
    pub fn output_len(&self) -> usize {
        self.n_sc + self.prototype.len() - 1
    }

    /// Subband centre shifts `α_i = (i + 0.5)·n_sc_rb - 0.5`.
    pub fn alpha(&self) -> Vec<f64> {
        (0..self.n_rb())
            .map(|i| (i as f64 + 0.5) * self.n_sc_rb as f64 - 0.5)
            .collect()
    }

    /// Prototype shifted to subband `i`: `w[l]·exp(+j2π α_i l / n_sc)`.
    pub fn shifted_filter(&self, i: usize) -> Vec<C64> {
        let alpha = (i as f64 + 0.5) * self.n_sc_rb as f64 - 0.5;
        self.prototype
            .iter()
            .enumerate()
            .map(|(l, w)| C64::from_polar(*w, 2.0 * PI * alpha * l as f64 / self.n_sc as f64))
            .collect()
    }
}

/// Planned UFMC transceiver for one filter bank.
///
/// `oversample > 1` builds a transmit-only engine that renders the same
/// frequency bins on a finer time grid (for spectrum measurements); its
/// prototype is redesigned at length `q(L_f - 1) + 1` so the filter spans the
/// same duration.
pub struct UfmcEngine {
    bank: FilterBankSpec,
    oversample: usize,
    /// Length-`q·n_sc` exponential table, exp(+j2πt/(q·n_sc)).
    phasor: Vec<C64>,
    /// Bin offset (0 or n_sc) moving each subband to centred baseband.
    wrap: Vec<i64>,
    nfft: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    filter_spectra: Vec<Vec<C64>>,
    dft: Dft,
    gain: f64,
    predistortion: Vec<C64>,
    through_gain: f64,
    dense_tu: OnceLock<ComplexMatrix>,
}

impl std::fmt::Debug for UfmcEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UfmcEngine")
            .field("n_sc", &self.bank.n_sc)
            .field("n_sc_rb", &self.bank.n_sc_rb)
            .field("filter_len", &self.bank.filter_len())
            .field("oversample", &self.oversample)
            .field("gain", &self.gain)
            .finish()
    }
}

impl UfmcEngine {
    /// Builds the critically sampled engine, including the gain
    /// normalization and the predistortion diagonal.
    pub fn new(bank: FilterBankSpec) -> Result<Self> {
        let mut engine = Self::plan(bank, 1)?;
        engine.gain = engine.compute_gain()?;
        let response = engine.analyze(&engine.synthesize_raw(&vec![C64::new(1.0, 0.0); engine.bank.n_sc])?)?;
        let (p, mean_abs) = predistortion_from_response(&response, engine.bank.l2_norm())?;
        engine.predistortion = p;
        engine.through_gain = mean_abs / engine.gain;
        Ok(engine)
    }

    /// Transmit-only engine on a `q`-times finer grid sharing this engine's
    /// predistortion.
    pub fn oversampled(&self, q: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::Dimension("oversampling factor must be positive".into()));
        }
        if q == 1 {
            return Self::new(self.bank.clone());
        }
        let len = q * (self.bank.filter_len() - 1) + 1;
        let prototype = design_chebyshev_prototype(len, self.bank.atten_db)?;
        let bank = FilterBankSpec {
            prototype,
            atten_db: self.bank.atten_db,
            n_sc: self.bank.n_sc,
            n_sc_rb: self.bank.n_sc_rb,
        };
        let mut engine = Self::plan(bank, q)?;
        engine.gain = engine.compute_gain()?;
        engine.predistortion = self.predistortion.clone();
        engine.through_gain = self.through_gain;
        Ok(engine)
    }

    fn plan(bank: FilterBankSpec, q: usize) -> Result<Self> {
        if bank.prototype.iter().all(|w| *w == 0.0) {
            return Err(Error::ZeroPrototype);
        }
        let n_sc = bank.n_sc;
        let grid = q * n_sc;
        let out_len = grid + bank.filter_len() - 1;
        let nfft = out_len.next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(nfft);
        let ifft = planner.plan_fft_inverse(nfft);
        let phasor = (0..grid)
            .map(|t| C64::from_polar(1.0, 2.0 * PI * t as f64 / grid as f64))
            .collect();

        let alpha = bank.alpha();
        let half = n_sc as f64 / 2.0;
        let wrap: Vec<i64> = alpha
            .iter()
            .map(|a| if q > 1 && *a >= half - 0.5 { n_sc as i64 } else { 0 })
            .collect();

        let filter_spectra = (0..bank.n_rb())
            .map(|i| {
                let centre = alpha[i] - wrap[i] as f64;
                let mut buf = vec![C64::new(0.0, 0.0); nfft];
                for (l, w) in bank.prototype.iter().enumerate() {
                    buf[l] = C64::from_polar(*w, 2.0 * PI * centre * l as f64 / grid as f64);
                }
                fft.process(&mut buf);
                buf
            })
            .collect();

        Ok(UfmcEngine {
            dft: Dft::new(n_sc)?,
            bank,
            oversample: q,
            phasor,
            wrap,
            nfft,
            fft,
            ifft,
            filter_spectra,
            gain: 1.0,
            predistortion: vec![C64::new(1.0, 0.0); n_sc],
            through_gain: 1.0,
            dense_tu: OnceLock::new(),
        })
    }

    pub fn bank(&self) -> &FilterBankSpec {
        &self.bank
    }

    pub fn oversample(&self) -> usize {
        self.oversample
    }

    pub fn n_sc(&self) -> usize {
        self.bank.n_sc
    }

    /// Transmit length `q·n_sc + L_f - 1` (prototype length on this grid).
    pub fn output_len(&self) -> usize {
        self.oversample * self.bank.n_sc + self.bank.filter_len() - 1
    }

    /// Eq. (8)-style power normalization: sqrt(‖T_0·1‖² / output_len).
    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Predistortion diagonal P.
    pub fn predistortion(&self) -> &[C64] {
        &self.predistortion
    }

    /// Common gain `c` of the predistorted through-modem, `R_u T_u = c·I` up
    /// to the residual the diagonal P cannot remove.
    pub fn through_gain(&self) -> f64 {
        self.through_gain
    }

    fn compute_gain(&self) -> Result<f64> {
        let ones = vec![C64::new(1.0, 0.0); self.bank.n_sc];
        let probe = self.synthesize_raw(&ones)?;
        let power = probe.iter().map(|v| v.norm_sqr()).sum::<f64>() / probe.len() as f64;
        if !(power > 0.0) {
            return Err(Error::ZeroPrototype);
        }
        Ok(power.sqrt())
    }

    /// Unnormalized synthesis `T_0 s_f`, length `output_len()`.
    pub fn synthesize_raw(&self, s_f: &[C64]) -> Result<Vec<C64>> {
        let n_sc = self.bank.n_sc;
        if s_f.len() != n_sc {
            return Err(Error::len("UFMC synthesis input", n_sc, s_f.len()));
        }
        let grid = self.oversample * n_sc;
        let rb = self.bank.n_sc_rb;
        let scale = 1.0 / (n_sc as f64).sqrt();
        let mut acc = vec![C64::new(0.0, 0.0); self.nfft];
        let mut buf = vec![C64::new(0.0, 0.0); self.nfft];
        for (i, spectrum) in self.filter_spectra.iter().enumerate() {
            let bins = &s_f[i * rb..(i + 1) * rb];
            if bins.iter().all(|v| v.re == 0.0 && v.im == 0.0) {
                continue;
            }
            buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            for (off, s) in bins.iter().enumerate() {
                if s.re == 0.0 && s.im == 0.0 {
                    continue;
                }
                let k = (i * rb + off) as i64 - self.wrap[i];
                let step = k.rem_euclid(grid as i64) as usize;
                let amp = s * scale;
                let mut idx = 0usize;
                for v in buf[..grid].iter_mut() {
                    *v += amp * self.phasor[idx];
                    idx += step;
                    if idx >= grid {
                        idx -= grid;
                    }
                }
            }
            self.fft.process(&mut buf);
            for (a, (b, h)) in acc.iter_mut().zip(buf.iter().zip(spectrum)) {
                *a += b * h;
            }
        }
        self.ifft.process(&mut acc);
        let norm = 1.0 / self.nfft as f64;
        acc.truncate(self.output_len());
        for v in acc.iter_mut() {
            *v *= norm;
        }
        Ok(acc)
    }

    /// Predistorted, power-normalized synthesis `T_u s_f = T_n P s_f`.
    pub fn synthesize(&self, s_f: &[C64]) -> Result<Vec<C64>> {
        if s_f.len() != self.bank.n_sc {
            return Err(Error::len("UFMC synthesis input", self.bank.n_sc, s_f.len()));
        }
        let pre: Vec<C64> = s_f
            .iter()
            .zip(&self.predistortion)
            .map(|(s, p)| s * p)
            .collect();
        let mut out = self.synthesize_raw(&pre)?;
        let inv = 1.0 / self.gain;
        out.iter_mut().for_each(|v| *v *= inv);
        Ok(out)
    }

    /// Analysis `R_u r = E F_{2n_sc} Z r`; samples past `n_sc + L_f - 1` are
    /// ignored.
    pub fn analyze(&self, r: &[C64]) -> Result<Vec<C64>> {
        if self.oversample != 1 {
            return Err(Error::Dimension(
                "analysis is only defined on the critically sampled grid".into(),
            ));
        }
        let n_sc = self.bank.n_sc;
        let k = self.output_len();
        if r.len() < k {
            return Err(Error::len("UFMC analysis input", k, r.len()));
        }
        let mut folded = r[..n_sc].to_vec();
        for (f, v) in folded.iter_mut().zip(&r[n_sc..k]) {
            *f += v;
        }
        self.dft.forward(&mut folded);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        folded.iter_mut().for_each(|v| *v *= s);
        Ok(folded)
    }

    /// Analysis divided by the through gain so the predistorted
    /// back-to-back modem is the identity.
    pub fn analyze_normalized(&self, r: &[C64]) -> Result<Vec<C64>> {
        let mut out = self.analyze(r)?;
        let inv = 1.0 / self.through_gain;
        out.iter_mut().for_each(|v| *v *= inv);
        Ok(out)
    }

    /// Dense `T_u` (output_len × n_sc), built column by column from direct
    /// convolutions. Cached after the first call.
    pub fn synthesis_matrix(&self) -> &ComplexMatrix {
        self.dense_tu.get_or_init(|| {
            let n_sc = self.bank.n_sc;
            let rb = self.bank.n_sc_rb;
            let grid = self.oversample * n_sc;
            let scale = 1.0 / (n_sc as f64).sqrt();
            let taps: Vec<Vec<C64>> = (0..self.bank.n_rb())
                .map(|i| {
                    let centre = self.bank.alpha()[i] - self.wrap[i] as f64;
                    self.bank
                        .prototype
                        .iter()
                        .enumerate()
                        .map(|(l, w)| C64::from_polar(*w, 2.0 * PI * centre * l as f64 / grid as f64))
                        .collect()
                })
                .collect();
            let columns: Vec<Vec<C64>> = (0..n_sc)
                .map(|j| {
                    let i = j / rb;
                    let k = j as i64 - self.wrap[i];
                    let step = k.rem_euclid(grid as i64) as usize;
                    let amp = self.predistortion[j] * (scale / self.gain);
                    let tone: Vec<C64> = (0..grid)
                        .map(|t| self.phasor[(t * step) % grid] * amp)
                        .collect();
                    convolve(&tone, &taps[i])
                })
                .collect();
            ComplexMatrix::from_columns(&columns)
        })
    }
}

/// Full linear convolution.
pub(crate) fn convolve(x: &[C64], h: &[C64]) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); x.len() + h.len() - 1];
    for (i, xv) in x.iter().enumerate() {
        for (l, hv) in h.iter().enumerate() {
            y[i + l] += xv * hv;
        }
    }
    y
}

/// `scale` is the prototype's L2 norm; bins whose response falls below
/// round-off relative to it are treated as zeros.
fn predistortion_from_response(response: &[C64], scale: f64) -> Result<(Vec<C64>, f64)> {
    let floor = 1e-12 * scale;
    if let Some(bin) = response
        .iter()
        .position(|v| !(v.norm() > floor) || !v.re.is_finite() || !v.im.is_finite())
    {
        return Err(Error::SingularPredistortion { bin });
    }
    let mean_abs = response.iter().map(|v| v.norm()).sum::<f64>() / response.len() as f64;
    let p = response.iter().map(|v| C64::new(mean_abs, 0.0) / v).collect();
    Ok((p, mean_abs))
}

/// Gain that normalizes `T_0` to unit mean output power on the all-ones input.
pub fn normalize_gain(bank: &FilterBankSpec) -> Result<f64> {
    UfmcEngine::plan(bank.clone(), 1)?.compute_gain()
}

/// Predistortion diagonal `P[k] = mean|s̃| / s̃[k]` with `s̃ = R_u T_0 1`.
pub fn compute_predistortion(bank: &FilterBankSpec) -> Result<Vec<C64>> {
    let engine = UfmcEngine::plan(bank.clone(), 1)?;
    let response = engine.analyze(&engine.synthesize_raw(&vec![C64::new(1.0, 0.0); bank.n_sc])?)?;
    Ok(predistortion_from_response(&response, bank.l2_norm())?.0)
}

/// Max over min modulus; the flatness figure of a through-modem response.
pub fn spread_ratio(v: &[C64]) -> f64 {
    let max = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let min = v.iter().map(|x| x.norm()).fold(f64::INFINITY, f64::min);
    max / min
}
