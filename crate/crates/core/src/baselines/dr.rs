use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FrameGeometry;
use crate::scfdma::ScFdmaModem;
use crate::scheme::{cached_basis, probe_basis, SchemeKind, Transceiver};
use crate::transform::Dft;
use crate::ufmc::{FilterBankSpec, UfmcEngine};
use crate::C64;

/// UFMC layout applied to every length-M delay block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrUfmcSpec {
    pub n_sc_rb: usize,
    pub filter_len: usize,
    pub atten_db: f64,
}

impl Default for DrUfmcSpec {
    fn default() -> Self {
        DrUfmcSpec {
            n_sc_rb: 4,
            filter_len: 20,
            atten_db: crate::ufmc::DEFAULT_ATTEN_DB,
        }
    }
}

/// Delay-block UFMC: each Zak-modulated delay block of M samples is taken to
/// M frequency bins, UFMC-filtered, and the blocks are overlap-added with a
/// hop of M, giving MN + L_f - 1 samples.
///
/// The receiver cuts `M + L_f - 1` samples at every block boundary and
/// inverts each block on its own, so the tails of the neighbouring blocks
/// remain as interference.
#[derive(Debug)]
pub struct DrUfmc {
    modem: ScFdmaModem,
    spec: DrUfmcSpec,
    engine: UfmcEngine,
    dft_m: Dft,
    basis: OnceLock<Vec<Vec<C64>>>,
}

impl DrUfmc {
    pub fn new(geom: FrameGeometry, spec: DrUfmcSpec) -> Result<Self> {
        let m = geom.m();
        if spec.n_sc_rb == 0 || m % spec.n_sc_rb != 0 {
            return Err(Error::Geometry(format!(
                "dr_ufmc.n_sc_rb={} must divide M={m}",
                spec.n_sc_rb
            )));
        }
        if spec.filter_len == 0 || spec.filter_len > m + 1 {
            return Err(Error::Geometry(format!(
                "dr_ufmc.filter_len={} must lie in 1..={}",
                spec.filter_len,
                m + 1
            )));
        }
        let bank = FilterBankSpec::design(m, spec.n_sc_rb, spec.filter_len, spec.atten_db)?;
        Ok(DrUfmc {
            modem: ScFdmaModem::new(geom.with_cp(0))?,
            spec,
            engine: UfmcEngine::new(bank)?,
            dft_m: Dft::new(m)?,
            basis: OnceLock::new(),
        })
    }

    pub fn spec(&self) -> &DrUfmcSpec {
        &self.spec
    }

    fn overlap_add(&self, d: &[C64], engine: &UfmcEngine) -> Result<Vec<C64>> {
        let m = self.geometry().m();
        let q = engine.oversample();
        let s_t = self.modem.zak(d)?;
        let mut out = vec![C64::new(0.0, 0.0); q * (self.geometry().mn() + self.spec.filter_len - 1)];
        for (n, block) in s_t.chunks(m).enumerate() {
            let mut bins = block.to_vec();
            self.dft_m.forward(&mut bins);
            let y = engine.synthesize(&bins)?;
            for (o, v) in out[q * n * m..].iter_mut().zip(&y) {
                *o += v;
            }
        }
        Ok(out)
    }
}

impl Transceiver for DrUfmc {
    fn kind(&self) -> SchemeKind {
        SchemeKind::DrUfmc
    }

    fn geometry(&self) -> &FrameGeometry {
        self.modem.geometry()
    }

    fn tx_len(&self) -> usize {
        self.geometry().mn() + self.spec.filter_len - 1
    }

    fn modulate(&self, d: &[C64]) -> Result<Vec<C64>> {
        self.overlap_add(d, &self.engine)
    }

    fn demodulate(&self, r: &[C64]) -> Result<Vec<C64>> {
        let n = self.tx_len();
        if r.len() < n {
            return Err(Error::len("received frame", n, r.len()));
        }
        let m = self.geometry().m();
        let seg = m + self.spec.filter_len - 1;
        let mut s_t = Vec::with_capacity(self.geometry().mn());
        for b in 0..self.geometry().n() {
            let mut block = self.engine.analyze_normalized(&r[b * m..b * m + seg])?;
            self.dft_m.inverse(&mut block);
            s_t.extend(block);
        }
        self.modem.inverse_zak(&s_t)
    }

    fn modulate_oversampled(&self, d: &[C64], q: usize) -> Result<Vec<C64>> {
        self.overlap_add(d, &self.engine.oversampled(q)?)
    }

    fn tx_basis(&self) -> Result<&[Vec<C64>]> {
        cached_basis(&self.basis, || probe_basis(self.geometry().mn(), |e| self.modulate(e)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, ChannelConfig};
    use crate::detect::mmse_detect;
    use crate::par::Exec;

    fn geom() -> FrameGeometry {
        FrameGeometry::new(8, 4, 1.92e6).unwrap()
    }

    fn data() -> Vec<C64> {
        (0..32).map(|k| C64::new((1.3 * k as f64).sin(), 0.1 * k as f64 - 1.0)).collect()
    }

    #[test]
    fn unit_filter_is_plain_zak() {
        let dr = DrUfmc::new(geom(), DrUfmcSpec { n_sc_rb: 4, filter_len: 1, atten_db: 60.0 }).unwrap();
        let d = data();
        let tx = dr.modulate(&d).unwrap();
        let zak = ScFdmaModem::new(geom()).unwrap().zak(&d).unwrap();
        for (a, b) in tx.iter().zip(&zak) {
            assert!((a - b).norm() < 1e-12);
        }
        let back = dr.demodulate(&tx).unwrap();
        for (a, b) in back.iter().zip(&d) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn length_and_interference() {
        let dr = DrUfmc::new(geom(), DrUfmcSpec { n_sc_rb: 4, filter_len: 5, atten_db: 60.0 }).unwrap();
        assert_eq!(dr.tx_len(), 36);
        let d = data();
        let tx = dr.modulate(&d).unwrap();
        assert_eq!(tx.len(), 36);
        let y = dr.demodulate(&tx).unwrap();
        let err = y.iter().zip(&d).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err > 1e-6, "overlap-add should leave interference");

        let ch = generate_channel(&ChannelConfig::identity(&geom()), 0, 64).unwrap();
        let h = dr.effective_channel(&ch, Exec::Sequential).unwrap();
        let d_hat = mmse_detect(&h, &y, 0.0).unwrap();
        for (a, b) in d_hat.iter().zip(&d) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_layout() {
        assert!(DrUfmc::new(geom(), DrUfmcSpec { n_sc_rb: 3, filter_len: 5, atten_db: 60.0 }).is_err());
        assert!(DrUfmc::new(geom(), DrUfmcSpec { n_sc_rb: 4, filter_len: 10, atten_db: 60.0 }).is_err());
    }
}
