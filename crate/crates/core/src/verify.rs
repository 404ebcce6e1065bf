//! Small-instance verification: every fast signal path against the dense
//! product of its defining operators.

use serde::Serialize;

use crate::channel::{generate_channel, ChannelConfig};
use crate::error::Result;
use crate::geometry::FrameGeometry;
use crate::gf::GfModem;
use crate::matrix::ComplexMatrix;
use crate::oracle::{oracle_matrix, oracle_ufmc, OracleOp};
use crate::par::Exec;
use crate::scfdma::ScFdmaModem;
use crate::scheme::{Otfs, Transceiver};
use crate::transform::{blockwise_dft, interleave, twiddle_diag, Direction};
use crate::ufmc::{FilterBankSpec, UfmcEngine, DEFAULT_ATTEN_DB};
use crate::C64;

/// Identity tolerance for exact algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Tolerance for fast path versus dense product.
pub const PATH_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub max_abs_error: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    fn new(name: impl Into<String>, max_abs_error: f64, tolerance: f64) -> Self {
        OracleCheck {
            name: name.into(),
            max_abs_error,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.max_abs_error < self.tolerance
    }
}

/// The linear map `f` as a dense matrix, one probed unit vector per column.
pub fn probe_matrix(n: usize, f: impl Fn(&[C64]) -> Result<Vec<C64>>) -> Result<ComplexMatrix> {
    let mut e = vec![C64::new(0.0, 0.0); n];
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        e[k] = C64::new(1.0, 0.0);
        cols.push(f(&e)?);
        e[k] = C64::new(0.0, 0.0);
    }
    Ok(ComplexMatrix::from_columns(&cols))
}

fn unitarity_error(u: &ComplexMatrix) -> f64 {
    u.matmul(&u.adjoint()).max_abs_diff(&ComplexMatrix::identity(u.rows()))
}

/// `F_MN − Ψ(I_N ⊗ F_M)Ω(F_N ⊗ I_M)`, max entry.
pub fn cooley_tukey_error(m: usize, n: usize) -> Result<f64> {
    let g = FrameGeometry::new(m, n, 1.0)?;
    let rhs = oracle_matrix(OracleOp::Gamma, &g)?.matmul(&oracle_matrix(OracleOp::DopplerDft, &g)?);
    Ok(oracle_matrix(OracleOp::FullDft, &g)?.max_abs_diff(&rhs))
}

/// `ΓΓ^H − I`, max entry.
pub fn gamma_unitarity_error(m: usize, n: usize) -> Result<f64> {
    let g = FrameGeometry::new(m, n, 1.0)?;
    Ok(unitarity_error(&oracle_matrix(OracleOp::Gamma, &g)?))
}

/// `R_u T_0 − I/√2` for a unit-length filter over `n_sc` bins.
pub fn ofdm_reduction_error(n_sc: usize, n_sc_rb: usize) -> Result<f64> {
    let bank = FilterBankSpec::design(n_sc, n_sc_rb, 1, DEFAULT_ATTEN_DB)?;
    let prod = oracle_ufmc(OracleOp::Ru, &bank)?.matmul(&oracle_ufmc(OracleOp::T0, &bank)?);
    let target = ComplexMatrix::identity(n_sc).scale(C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
    Ok(prod.max_abs_diff(&target))
}

/// Runs every check on an M=8, N=4 frame with subbands of 4 bins, a
/// 9-tap filter and a CP covering the reference channel memory.
pub fn oracle_suite() -> Result<Vec<OracleCheck>> {
    let g = FrameGeometry::new(8, 4, 1.92e6)?
        .with_subbands(4)?
        .with_filter_len(9)?
        .with_cp(4);
    let mn = g.mn();
    let mut out = Vec::new();

    let f = oracle_matrix(OracleOp::FullDft, &g)?;
    out.push(OracleCheck::new("F_MN unitary", unitarity_error(&f), IDENTITY_TOL));
    for m in [4, 8] {
        for n in [3, 4] {
            out.push(OracleCheck::new(
                format!("Cooley-Tukey M={m} N={n}"),
                cooley_tukey_error(m, n)?,
                IDENTITY_TOL,
            ));
        }
    }
    let gamma = oracle_matrix(OracleOp::Gamma, &g)?;
    out.push(OracleCheck::new("Gamma unitary", unitarity_error(&gamma), IDENTITY_TOL));
    for op in [OracleOp::Interleaver, OracleOp::Twiddle, OracleOp::BlockDft] {
        out.push(OracleCheck::new(
            format!("{op} unitary"),
            unitarity_error(&oracle_matrix(op, &g)?),
            IDENTITY_TOL,
        ));
    }

    let psi = probe_matrix(mn, |x| interleave(x, &g))?;
    out.push(OracleCheck::new(
        "interleave = Psi",
        psi.max_abs_diff(&oracle_matrix(OracleOp::Interleaver, &g)?),
        PATH_TOL,
    ));
    let omega = twiddle_diag(&g);
    let omega = probe_matrix(mn, |x| Ok(x.iter().zip(&omega).map(|(a, w)| a * w).collect()))?;
    out.push(OracleCheck::new(
        "twiddle = Omega",
        omega.max_abs_diff(&oracle_matrix(OracleOp::Twiddle, &g)?),
        PATH_TOL,
    ));
    let blk = probe_matrix(mn, |x| blockwise_dft(x, &g, Direction::Forward))?;
    out.push(OracleCheck::new(
        "blockwise DFT = I_N(x)F_M",
        blk.max_abs_diff(&oracle_matrix(OracleOp::BlockDft, &g)?),
        PATH_TOL,
    ));

    let modem = ScFdmaModem::new(g)?;
    let a_cp = oracle_matrix(OracleOp::AddCp, &g)?;
    let b_cp = oracle_matrix(OracleOp::RemoveCp, &g)?;
    let f_h = f.adjoint();
    let spread = probe_matrix(mn, |d| modem.spread(d))?;
    out.push(OracleCheck::new("spread = Gamma", spread.max_abs_diff(&gamma), PATH_TOL));
    let zak = probe_matrix(mn, |d| modem.zak(d))?;
    out.push(OracleCheck::new(
        "Zak = F_N^H(x)I_M",
        zak.max_abs_diff(&oracle_matrix(OracleOp::DopplerDft, &g)?.adjoint()),
        PATH_TOL,
    ));
    out.push(OracleCheck::new(
        "Zak = F_MN^H Gamma",
        zak.max_abs_diff(&f_h.matmul(&gamma)),
        PATH_TOL,
    ));
    let tx = probe_matrix(mn, |d| Ok(modem.modulate(d)?.x_t))?;
    out.push(OracleCheck::new(
        "OTFS modulate = A_cp F_MN^H Gamma",
        tx.max_abs_diff(&a_cp.matmul(&f_h).matmul(&gamma)),
        PATH_TOL,
    ));
    let rx = probe_matrix(mn + g.cp_len(), |r| modem.demodulate(r))?;
    let rx_dense = gamma.adjoint().matmul(&f).matmul(&b_cp);
    out.push(OracleCheck::new("OTFS demodulate = Gamma^H F_MN B_cp", rx.max_abs_diff(&rx_dense), PATH_TOL));

    let mut cfg = ChannelConfig::reference(&g);
    cfg.delta_nu_hz = g.delta_nu_hz();
    let ch = generate_channel(&cfg, 11, 2 * mn)?;
    let otfs = Otfs::new(g)?;
    let h_dd = otfs.effective_channel(&ch, Exec::Sequential)?;
    let hbar = ch.delay_time_matrix(mn + g.cp_len())?;
    let dense = rx_dense.matmul(&hbar).matmul(&a_cp).matmul(&f_h).matmul(&gamma);
    out.push(OracleCheck::new("OTFS effective channel (LTV)", h_dd.max_abs_diff(&dense), PATH_TOL));

    let bank = FilterBankSpec::from_geometry(&g, DEFAULT_ATTEN_DB)?;
    let engine = UfmcEngine::new(bank.clone())?;
    let t0 = oracle_ufmc(OracleOp::T0, &bank)?;
    let tu = oracle_ufmc(OracleOp::Tu, &bank)?;
    let ru = oracle_ufmc(OracleOp::Ru, &bank)?;
    let raw = probe_matrix(mn, |s| engine.synthesize_raw(s))?;
    out.push(OracleCheck::new("UFMC synthesis = T_0", raw.max_abs_diff(&t0), PATH_TOL));
    let syn = probe_matrix(mn, |s| engine.synthesize(s))?;
    out.push(OracleCheck::new("predistorted synthesis = T_u", syn.max_abs_diff(&tu), PATH_TOL));
    out.push(OracleCheck::new(
        "dense synthesis matrix = T_u",
        engine.synthesis_matrix().max_abs_diff(&tu),
        PATH_TOL,
    ));
    let ana = probe_matrix(engine.output_len(), |r| engine.analyze(r))?;
    out.push(OracleCheck::new("UFMC analysis = R_u", ana.max_abs_diff(&ru), PATH_TOL));
    out.push(OracleCheck::new(
        "R_u T_0 = I/sqrt(2) at L_f=1",
        ofdm_reduction_error(mn, 4)?,
        IDENTITY_TOL,
    ));

    let gf = GfModem::with_bank(g, bank)?;
    let inv_c = C64::new(1.0 / gf.engine().through_gain(), 0.0);
    let gf_tx = probe_matrix(mn, |d| gf.modulate(d))?;
    out.push(OracleCheck::new("GF modulate = T_u Gamma", gf_tx.max_abs_diff(&tu.matmul(&gamma)), PATH_TOL));
    let gf_rx = probe_matrix(gf.tx_len(), |r| gf.demodulate(r))?;
    let gf_rx_dense = gamma.adjoint().matmul(&ru).scale(inv_c);
    out.push(OracleCheck::new("GF demodulate = Gamma^H R_u / c", gf_rx.max_abs_diff(&gf_rx_dense), PATH_TOL));
    let h_gf = gf.effective_channel(&ch, Exec::Sequential)?;
    let hbar = ch.delay_time_matrix(gf.tx_len())?;
    let dense = gf_rx_dense.matmul(&hbar).matmul(&tu).matmul(&gamma);
    out.push(OracleCheck::new("GF effective channel (LTV)", h_gf.max_abs_diff(&dense), PATH_TOL));

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let checks = oracle_suite().unwrap();
        assert!(checks.len() > 20);
        for c in &checks {
            assert!(c.passed(), "{}: {:e}", c.name, c.max_abs_error);
        }
    }

    #[test]
    fn probe_recovers_dense() {
        let a = ComplexMatrix::from_fn(3, 2, |i, j| C64::new(i as f64, j as f64));
        let p = probe_matrix(2, |x| Ok(a.matvec(x))).unwrap();
        assert_eq!(p, a);
    }
}
