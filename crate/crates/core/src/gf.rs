//! GF-OTFS: the SC-FDMA frequency-Doppler vector `Γd` is sent through a UFMC
//! filter bank that spans all MN bins, without a cyclic prefix.
//!
//! Transmit: `s_t = T_u Γ d`. Receive: `d̃ = Γ^H R_u r / c`, where `c` is the
//! through gain of the predistorted modem, so that an ideal channel with a
//! unit-length filter returns `d` exactly.

use std::sync::OnceLock;

use crate::channel::LtvChannelRealization;
use crate::error::Result;
use crate::geometry::FrameGeometry;
use crate::matrix::ComplexMatrix;
use crate::par::Exec;
use crate::scfdma::{DelayDopplerFrame, ScFdmaModem};
use crate::scheme::{cached_basis, SchemeKind, Transceiver};
use crate::ufmc::{FilterBankSpec, UfmcEngine};
use crate::C64;

#[derive(Debug)]
pub struct GfModem {
    modem: ScFdmaModem,
    engine: UfmcEngine,
    basis: OnceLock<Vec<Vec<C64>>>,
}

impl GfModem {
    /// Filter bank over the geometry's subbands and filter length.
    pub fn new(geom: FrameGeometry, atten_db: f64) -> Result<Self> {
        let bank = FilterBankSpec::from_geometry(&geom, atten_db)?;
        Self::with_bank(geom, bank)
    }

    pub fn with_bank(geom: FrameGeometry, bank: FilterBankSpec) -> Result<Self> {
        if bank.n_sc() != geom.n_sc() {
            return Err(crate::Error::Geometry(format!(
                "filter bank covers {} bins, frame has {}",
                bank.n_sc(),
                geom.n_sc()
            )));
        }
        Ok(GfModem {
            modem: ScFdmaModem::new(geom)?,
            engine: UfmcEngine::new(bank)?,
            basis: OnceLock::new(),
        })
    }

    pub fn engine(&self) -> &UfmcEngine {
        &self.engine
    }

    pub fn modem(&self) -> &ScFdmaModem {
        &self.modem
    }
}

impl Transceiver for GfModem {
    fn kind(&self) -> SchemeKind {
        SchemeKind::GfOtfs
    }

    fn geometry(&self) -> &FrameGeometry {
        self.modem.geometry()
    }

    fn tx_len(&self) -> usize {
        self.engine.output_len()
    }

    fn modulate(&self, d: &[C64]) -> Result<Vec<C64>> {
        self.engine.synthesize(&self.modem.spread(d)?)
    }

    fn demodulate(&self, r: &[C64]) -> Result<Vec<C64>> {
        self.modem.despread(&self.engine.analyze_normalized(r)?)
    }

    fn modulate_oversampled(&self, d: &[C64], q: usize) -> Result<Vec<C64>> {
        self.engine.oversampled(q)?.synthesize(&self.modem.spread(d)?)
    }

    fn tx_basis(&self) -> Result<&[Vec<C64>]> {
        cached_basis(&self.basis, || {
            // T_u Γ from the dense synthesis matrix: one product instead of
            // MN full syntheses.
            let mn = self.geometry().mn();
            let mut e = vec![C64::new(0.0, 0.0); mn];
            let mut gamma = Vec::with_capacity(mn);
            for k in 0..mn {
                e[k] = C64::new(1.0, 0.0);
                gamma.push(self.modem.spread(&e)?);
                e[k] = C64::new(0.0, 0.0);
            }
            let tx = self
                .engine
                .synthesis_matrix()
                .matmul(&ComplexMatrix::from_columns(&gamma));
            Ok((0..mn).map(|k| tx.column(k)).collect())
        })
    }
}

pub fn gf_modulate(frame: &DelayDopplerFrame, modem: &GfModem) -> Result<Vec<C64>> {
    modem.modulate(frame.symbols())
}

pub fn gf_demodulate(r: &[C64], modem: &GfModem) -> Result<Vec<C64>> {
    modem.demodulate(r)
}

pub fn gf_effective_dd_channel(ch: &LtvChannelRealization, modem: &GfModem) -> Result<ComplexMatrix> {
    modem.effective_channel(ch, Exec::default())
}
