use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FrameGeometry;
use crate::scfdma::{add_cp, remove_cp, DelayDopplerFrame, ScFdmaModem};
use crate::scheme::{cached_basis, probe_basis, render_bins_oversampled, SchemeKind, Transceiver};
use crate::transform::Dft;
use crate::ufmc::chebyshev_window;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    DolphChebyshev,
    RaisedCosine,
    Rectangular,
}

/// Global window over the MN delay-time samples of a frame.
///
/// `parameter` is the sidelobe attenuation in dB for Dolph-Chebyshev and the
/// roll-off in `[0, 1]` for the raised cosine (1 is a full Hann taper). The
/// raised cosine is sampled at sample midpoints so that no sample is zeroed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub kind: WindowKind,
    pub parameter: f64,
}

/// Raised cosine with roll-off 0.5: keeps the windowed spectrum close to
/// plain OTFS while cutting the receive-side Doppler leakage.
impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec::raised_cosine(0.5)
    }
}

impl WindowSpec {
    pub fn rectangular() -> Self {
        WindowSpec {
            kind: WindowKind::Rectangular,
            parameter: 0.0,
        }
    }

    pub fn dolph_chebyshev(atten_db: f64) -> Self {
        WindowSpec {
            kind: WindowKind::DolphChebyshev,
            parameter: atten_db,
        }
    }

    pub fn raised_cosine(roll_off: f64) -> Self {
        WindowSpec {
            kind: WindowKind::RaisedCosine,
            parameter: roll_off,
        }
    }

    /// Window values, peak 1.
    pub fn values(&self, len: usize) -> Result<Vec<f64>> {
        if len == 0 {
            return Err(Error::Dimension("window length must be positive".into()));
        }
        match self.kind {
            WindowKind::Rectangular => Ok(vec![1.0; len]),
            WindowKind::DolphChebyshev => chebyshev_window(len, self.parameter),
            WindowKind::RaisedCosine => {
                let a = self.parameter;
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::config(
                        "rw_window.parameter",
                        format!("raised-cosine roll-off must lie in [0, 1], got {a}"),
                    ));
                }
                let w: Vec<f64> = (0..len)
                    .map(|n| {
                        let x = (n as f64 + 0.5) / len as f64;
                        let edge = x.min(1.0 - x);
                        if a == 0.0 || edge >= a / 2.0 {
                            1.0
                        } else {
                            0.5 * (1.0 - (2.0 * PI * edge / a).cos())
                        }
                    })
                    .collect();
                let peak = w.iter().cloned().fold(0.0, f64::max);
                Ok(w.into_iter().map(|v| v / peak).collect())
            }
        }
    }
}

/// OTFS with a global window at the transmitter and/or receiver and a
/// cyclic prefix of MN/4.
#[derive(Debug)]
pub struct RwOtfs {
    modem: ScFdmaModem,
    window: Vec<f64>,
    tx_window: bool,
    rx_window: bool,
    dft_mn: Dft,
    basis: OnceLock<Vec<Vec<C64>>>,
}

impl RwOtfs {
    pub fn new(geom: FrameGeometry, window: WindowSpec, tx_window: bool, rx_window: bool) -> Result<Self> {
        let geom = geom.with_cp(geom.mn() / 4);
        Ok(RwOtfs {
            window: window.values(geom.mn())?,
            modem: ScFdmaModem::new(geom)?,
            tx_window,
            rx_window,
            dft_mn: Dft::new(geom.mn())?,
            basis: OnceLock::new(),
        })
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    fn windowed_block(&self, d: &[C64]) -> Result<Vec<C64>> {
        let mut s = self.modem.modulate(d)?.s_t;
        if self.tx_window {
            apply_window(&mut s, &self.window);
        }
        Ok(s)
    }
}

fn apply_window(s: &mut [C64], w: &[f64]) {
    for (v, w) in s.iter_mut().zip(w) {
        *v *= *w;
    }
}

impl Transceiver for RwOtfs {
    fn kind(&self) -> SchemeKind {
        SchemeKind::RwOtfs
    }

    fn geometry(&self) -> &FrameGeometry {
        self.modem.geometry()
    }

    fn tx_len(&self) -> usize {
        self.geometry().mn() + self.geometry().cp_len()
    }

    fn cp_len(&self) -> usize {
        self.geometry().cp_len()
    }

    fn modulate(&self, d: &[C64]) -> Result<Vec<C64>> {
        add_cp(&self.windowed_block(d)?, self.geometry().cp_len())
    }

    fn demodulate(&self, r: &[C64]) -> Result<Vec<C64>> {
        let n = self.tx_len();
        if r.len() < n {
            return Err(Error::len("received frame", n, r.len()));
        }
        let mut s = remove_cp(&r[..n], self.geometry().cp_len(), self.geometry().mn())?;
        if self.rx_window {
            apply_window(&mut s, &self.window);
        }
        self.modem.demodulate_block(s)
    }

    /// A time window multiplies the MN-sample block, i.e. circularly
    /// convolves its MN frequency bins; the bins are then rendered with the
    /// same rectangular pulse and CP as plain OTFS.
    fn modulate_oversampled(&self, d: &[C64], q: usize) -> Result<Vec<C64>> {
        let mut s_f = self.windowed_block(d)?;
        self.dft_mn.forward(&mut s_f);
        render_bins_oversampled(&s_f, q, self.geometry().cp_len())
    }

    fn tx_basis(&self) -> Result<&[Vec<C64>]> {
        cached_basis(&self.basis, || probe_basis(self.geometry().mn(), |e| self.modulate(e)))
    }
}

pub fn rw_otfs_tx(frame: &DelayDopplerFrame, window: &WindowSpec, apply_at_tx: bool) -> Result<Vec<C64>> {
    RwOtfs::new(*frame.geometry(), *window, apply_at_tx, false)?.modulate(frame.symbols())
}

pub fn rw_otfs_rx(r: &[C64], window: &WindowSpec, geom: &FrameGeometry) -> Result<Vec<C64>> {
    RwOtfs::new(*geom, *window, false, true)?.demodulate(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelConfig;
    use crate::detect::mmse_detect;
    use crate::par::Exec;
    use crate::scheme::Otfs;

    fn geom() -> FrameGeometry {
        FrameGeometry::new(8, 4, 1.92e6).unwrap()
    }

    fn data() -> Vec<C64> {
        (0..32).map(|k| C64::new((0.7 * k as f64).sin(), (0.3 * k as f64).cos())).collect()
    }

    #[test]
    fn windows_peak_at_one() {
        for spec in [
            WindowSpec::rectangular(),
            WindowSpec::dolph_chebyshev(60.0),
            WindowSpec::raised_cosine(1.0),
            WindowSpec::raised_cosine(0.25),
        ] {
            let w = spec.values(64).unwrap();
            let peak = w.iter().cloned().fold(0.0, f64::max);
            assert!((peak - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|v| v.is_finite() && *v > 0.0));
        }
        assert!(WindowSpec::raised_cosine(1.5).values(8).is_err());
    }

    #[test]
    fn rectangular_is_plain_otfs() {
        let g = geom();
        let rw = RwOtfs::new(g, WindowSpec::rectangular(), true, true).unwrap();
        let plain = Otfs::new(g.with_cp(8)).unwrap();
        let d = data();
        assert_eq!(rw.modulate(&d).unwrap(), plain.modulate(&d).unwrap());
        let r = rw.modulate(&d).unwrap();
        assert_eq!(rw.demodulate(&r).unwrap(), plain.demodulate(&r).unwrap());
    }

    #[test]
    fn tx_window_multiplies_block() {
        let g = geom();
        let spec = WindowSpec::dolph_chebyshev(60.0);
        let rw = RwOtfs::new(g, spec, true, false).unwrap();
        let d = data();
        let s = ScFdmaModem::new(g).unwrap().modulate(&d).unwrap().s_t;
        let x = rw.modulate(&d).unwrap();
        let w = spec.values(32).unwrap();
        for i in 0..32 {
            assert!((x[8 + i] - s[i] * w[i]).norm() < 1e-15);
        }
    }

    #[test]
    fn window_is_circular_convolution_of_spectra() {
        let g = geom();
        let d = data();
        let modem = ScFdmaModem::new(g).unwrap();
        let out = modem.modulate(&d).unwrap();
        let w = WindowSpec::raised_cosine(1.0).values(32).unwrap();
        let dft = Dft::new(32).unwrap();
        let mut lhs: Vec<C64> = out.s_t.iter().zip(&w).map(|(s, w)| s * w).collect();
        dft.forward(&mut lhs);
        let mut wf: Vec<C64> = w.iter().map(|v| C64::new(*v, 0.0)).collect();
        dft.forward(&mut wf);
        let scale = 1.0 / (32f64).sqrt();
        for k in 0..32 {
            let conv: C64 = (0..32).map(|j| out.s_f[j] * wf[(k + 32 - j) % 32]).sum();
            assert!((lhs[k] - conv * scale).norm() < 1e-12);
        }
    }

    #[test]
    fn mmse_undoes_the_receive_window() {
        let g = geom();
        let rw = RwOtfs::new(g, WindowSpec::dolph_chebyshev(60.0), false, true).unwrap();
        let ch = crate::channel::generate_channel(&ChannelConfig::identity(&g), 0, 64).unwrap();
        let h = rw.effective_channel(&ch, Exec::Sequential).unwrap();
        let d = data();
        let y = rw.demodulate(&rw.modulate(&d).unwrap()).unwrap();
        let d_hat = mmse_detect(&h, &y, 0.0).unwrap();
        for (a, b) in d_hat.iter().zip(&d) {
            assert!((a - b).norm() < 1e-8);
        }
        let free = rw_otfs_rx(&rw.modulate(&d).unwrap(), &WindowSpec::dolph_chebyshev(60.0), &g).unwrap();
        assert_eq!(free, y);
    }
}
