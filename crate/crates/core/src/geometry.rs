//! Frame dimensions shared by every modem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensional parameters of one delay-Doppler frame.
///
/// `m` delay bins by `n` Doppler bins sampled at `bandwidth_hz`. The
/// subband layout (`n_sc_rb`) and the UFMC filter length only matter to the
/// filtered modems but are validated here so every modem sees a consistent
/// frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameGeometry {
    m: usize,
    n: usize,
    bandwidth_hz: f64,
    cp_len: usize,
    n_sc_rb: usize,
    filter_len: usize,
}

impl FrameGeometry {
    /// Plain geometry: no CP, one subcarrier per subband, unit-length filter.
    pub fn new(m: usize, n: usize, bandwidth_hz: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::Geometry(format!(
                "M and N must be positive (got M={m}, N={n})"
            )));
        }
        if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
            return Err(Error::Geometry(format!(
                "bandwidth must be positive and finite (got {bandwidth_hz})"
            )));
        }
        Ok(FrameGeometry {
            m,
            n,
            bandwidth_hz,
            cp_len: 0,
            n_sc_rb: 1,
            filter_len: 1,
        })
    }

    /// M=64, N=8, B=1.92 MHz, subbands of 4, L_f = MN/4 + 1, CP = 4.
    pub fn reference() -> Self {
        FrameGeometry::new(64, 8, 1.92e6)
            .and_then(|g| g.with_subbands(4))
            .and_then(|g| g.with_filter_len(64 * 8 / 4 + 1))
            .map(|g| g.with_cp(4))
            .expect("reference geometry is valid")
    }

    pub fn with_cp(mut self, cp_len: usize) -> Self {
        self.cp_len = cp_len;
        self
    }

    pub fn with_subbands(mut self, n_sc_rb: usize) -> Result<Self> {
        if n_sc_rb == 0 || self.n_sc() % n_sc_rb != 0 {
            return Err(Error::Geometry(format!(
                "n_sc_rb={n_sc_rb} must divide n_sc=M·N={} (M={}, N={})",
                self.n_sc(),
                self.m,
                self.n
            )));
        }
        self.n_sc_rb = n_sc_rb;
        Ok(self)
    }

    pub fn with_filter_len(mut self, filter_len: usize) -> Result<Self> {
        // The analysis zero-pads n_sc + L_f - 1 samples to 2 n_sc.
        if filter_len == 0 || filter_len > self.n_sc() + 1 {
            return Err(Error::Geometry(format!(
                "filter_len={filter_len} must lie in 1..={}",
                self.n_sc() + 1
            )));
        }
        self.filter_len = filter_len;
        Ok(self)
    }

    pub fn with_bandwidth(mut self, bandwidth_hz: f64) -> Result<Self> {
        if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
            return Err(Error::Geometry(format!(
                "bandwidth must be positive and finite (got {bandwidth_hz})"
            )));
        }
        self.bandwidth_hz = bandwidth_hz;
        Ok(self)
    }

    /// Delay bins.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Doppler bins.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    pub fn n_sc(&self) -> usize {
        self.mn()
    }

    pub fn n_sc_rb(&self) -> usize {
        self.n_sc_rb
    }

    pub fn n_rb(&self) -> usize {
        self.n_sc() / self.n_sc_rb
    }

    pub fn filter_len(&self) -> usize {
        self.filter_len
    }

    pub fn cp_len(&self) -> usize {
        self.cp_len
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    /// Sample period, 1/B.
    pub fn delta_tau_s(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    /// Doppler resolution, B/(MN).
    pub fn delta_nu_hz(&self) -> f64 {
        self.bandwidth_hz / self.mn() as f64
    }

    /// Duration of one delay block, M·Δτ.
    pub fn block_duration_s(&self) -> f64 {
        self.m as f64 * self.delta_tau_s()
    }

    /// UFMC frame length n_sc + L_f - 1.
    pub fn ufmc_len(&self) -> usize {
        self.n_sc() + self.filter_len - 1
    }

    pub(crate) fn check_len(&self, what: &'static str, len: usize) -> Result<()> {
        if len != self.mn() {
            return Err(Error::len(what, self.mn(), len));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doppler_spacing_relation() {
        let g = FrameGeometry::reference();
        let prod = g.delta_nu_hz() * g.mn() as f64 * g.delta_tau_s();
        assert!((prod - 1.0).abs() < 1e-12);
        assert_eq!(g.n_rb() * g.n_sc_rb(), g.n_sc());
        assert_eq!(g.filter_len(), 129);
        assert_eq!(g.ufmc_len(), 640);
        assert!((g.delta_nu_hz() - 3750.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_subbands() {
        let g = FrameGeometry::new(64, 8, 1.0).unwrap();
        let err = g.with_subbands(7).unwrap_err().to_string();
        assert!(err.contains("n_sc_rb=7"), "{err}");
        assert!(FrameGeometry::new(0, 8, 1.0).is_err());
        assert!(FrameGeometry::new(4, 2, -1.0).is_err());
        assert!(g.with_filter_len(0).is_err());
        assert!(g.with_filter_len(514).is_err());
        assert!(g.with_filter_len(513).is_ok());
    }
}
