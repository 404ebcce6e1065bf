//! Common interface of the four transceivers.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::LtvChannelRealization;
use crate::error::{Error, Result};
use crate::geometry::FrameGeometry;
use crate::matrix::ComplexMatrix;
use crate::par::{map_indexed, Exec};
use crate::scfdma::{add_cp, ScFdmaModem};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Otfs,
    GfOtfs,
    RwOtfs,
    DrUfmc,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::Otfs,
        SchemeKind::GfOtfs,
        SchemeKind::RwOtfs,
        SchemeKind::DrUfmc,
    ];

    pub fn id(self) -> &'static str {
        match self {
            SchemeKind::Otfs => "otfs",
            SchemeKind::GfOtfs => "gf_otfs",
            SchemeKind::RwOtfs => "rw_otfs",
            SchemeKind::DrUfmc => "dr_ufmc",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            SchemeKind::Otfs => "SC-FDMA based OTFS with a cyclic prefix",
            SchemeKind::GfOtfs => "globally filtered OTFS: UFMC over all MN frequency-Doppler bins",
            SchemeKind::RwOtfs => "windowed OTFS with a long cyclic prefix",
            SchemeKind::DrUfmc => "UFMC per delay block with overlap-and-add",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::config("schemes", format!("unknown scheme `{s}`")))
    }
}

/// A delay-Doppler transceiver: symbols in, samples out, and back.
pub trait Transceiver: Send + Sync {
    fn kind(&self) -> SchemeKind;

    fn geometry(&self) -> &FrameGeometry;

    /// Number of transmitted samples per frame.
    fn tx_len(&self) -> usize;

    /// Cyclic prefix at the head of every transmitted frame.
    fn cp_len(&self) -> usize {
        0
    }

    fn modulate(&self, d: &[C64]) -> Result<Vec<C64>>;

    /// Demodulates a received frame; samples past what the receiver uses
    /// (the channel tail) are ignored.
    fn demodulate(&self, r: &[C64]) -> Result<Vec<C64>>;

    /// The transmit signal on a `q`-times finer time grid.
    fn modulate_oversampled(&self, d: &[C64], q: usize) -> Result<Vec<C64>>;

    /// `modulate(e_k)` for every unit vector, cached.
    fn tx_basis(&self) -> Result<&[Vec<C64>]>;

    /// End-to-end matrix from `d` to the demodulator output through `ch`,
    /// one column per probed unit vector.
    fn effective_channel(&self, ch: &LtvChannelRealization, exec: Exec) -> Result<ComplexMatrix> {
        let basis = self.tx_basis()?;
        let columns = map_indexed(exec, basis.len(), |j| {
            let y = ch.apply(&basis[j])?;
            self.demodulate(&y)
        });
        let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(ComplexMatrix::from_columns(&columns))
    }
}

/// Unit vectors pushed through `modulate`, memoized in `cell`.
pub(crate) fn cached_basis(
    cell: &OnceLock<Vec<Vec<C64>>>,
    build: impl FnOnce() -> Result<Vec<Vec<C64>>>,
) -> Result<&[Vec<C64>]> {
    if let Some(v) = cell.get() {
        return Ok(v);
    }
    let v = build()?;
    Ok(cell.get_or_init(|| v))
}

pub(crate) fn probe_basis(mn: usize, f: impl Fn(&[C64]) -> Result<Vec<C64>>) -> Result<Vec<Vec<C64>>> {
    let mut e = vec![C64::new(0.0, 0.0); mn];
    (0..mn)
        .map(|k| {
            e[k] = C64::new(1.0, 0.0);
            let out = f(&e);
            e[k] = C64::new(0.0, 0.0);
            out
        })
        .collect()
}

/// Centred baseband index of DFT bin `k` out of `n`.
pub(crate) fn centred(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Renders frequency bins `s_f` (unitary n-point convention) on a `q·n`
/// grid with centred bin placement, then prepends a `q·cp` cyclic prefix.
/// Samples `q·i` equal the critically sampled signal.
pub fn render_bins_oversampled(s_f: &[C64], q: usize, cp: usize) -> Result<Vec<C64>> {
    let n = s_f.len();
    if q == 0 || n == 0 {
        return Err(Error::Dimension("oversampling needs q ≥ 1 and bins".into()));
    }
    let grid = q * n;
    let mut buf = vec![C64::new(0.0, 0.0); grid];
    for (k, v) in s_f.iter().enumerate() {
        buf[centred(k, n).rem_euclid(grid as i64) as usize] = *v;
    }
    FftPlanner::new().plan_fft_inverse(grid).process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
    add_cp(&buf, q * cp)
}

/// Plain OTFS: SC-FDMA modulation and a cyclic prefix of `geom.cp_len()`.
#[derive(Debug)]
pub struct Otfs {
    modem: ScFdmaModem,
    basis: OnceLock<Vec<Vec<C64>>>,
}

impl Otfs {
    pub fn new(geom: FrameGeometry) -> Result<Self> {
        Ok(Otfs {
            modem: ScFdmaModem::new(geom)?,
            basis: OnceLock::new(),
        })
    }

    pub fn modem(&self) -> &ScFdmaModem {
        &self.modem
    }
}

impl Transceiver for Otfs {
    fn kind(&self) -> SchemeKind {
        SchemeKind::Otfs
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
        Ok(self.modem.modulate(d)?.x_t)
    }

    fn demodulate(&self, r: &[C64]) -> Result<Vec<C64>> {
        let n = self.tx_len();
        if r.len() < n {
            return Err(Error::len("received frame", n, r.len()));
        }
        self.modem.demodulate(&r[..n])
    }

    fn modulate_oversampled(&self, d: &[C64], q: usize) -> Result<Vec<C64>> {
        render_bins_oversampled(&self.modem.spread(d)?, q, self.geometry().cp_len())
    }

    fn tx_basis(&self) -> Result<&[Vec<C64>]> {
        cached_basis(&self.basis, || probe_basis(self.geometry().mn(), |e| self.modulate(e)))
    }
}
