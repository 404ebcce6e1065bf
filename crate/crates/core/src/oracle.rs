//! Dense materializations of every modem operator, built literally from
//! their defining products. Only meant for small frames in tests and in
//! `ddwave oracle`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::FrameGeometry;
use crate::matrix::ComplexMatrix;
use crate::transform::{dft_matrix, twiddle_diag};
use crate::ufmc::{FilterBankSpec, DEFAULT_ATTEN_DB};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OracleOp {
    /// F_MN
    FullDft,
    /// Ψ
    Interleaver,
    /// Ω
    Twiddle,
    /// I_N ⊗ F_M
    BlockDft,
    /// F_N ⊗ I_M
    DopplerDft,
    /// Γ = Ψ(I_N ⊗ F_M)Ω
    Gamma,
    /// CP insertion, (MN + L_cp) × MN
    AddCp,
    /// CP removal, MN × (MN + L_cp)
    RemoveCp,
    /// Raw UFMC synthesis
    T0,
    /// Power-normalized synthesis T_0 / gain
    Tn,
    /// Predistorted synthesis T_n·diag(P)
    Tu,
    /// UFMC analysis E F_{2n_sc} Z
    Ru,
}

impl OracleOp {
    pub const ALL: [OracleOp; 12] = [
        OracleOp::FullDft,
        OracleOp::Interleaver,
        OracleOp::Twiddle,
        OracleOp::BlockDft,
        OracleOp::DopplerDft,
        OracleOp::Gamma,
        OracleOp::AddCp,
        OracleOp::RemoveCp,
        OracleOp::T0,
        OracleOp::Tn,
        OracleOp::Tu,
        OracleOp::Ru,
    ];

    pub fn id(self) -> &'static str {
        match self {
            OracleOp::FullDft => "F_MN",
            OracleOp::Interleaver => "Psi",
            OracleOp::Twiddle => "Omega",
            OracleOp::BlockDft => "I_N(x)F_M",
            OracleOp::DopplerDft => "F_N(x)I_M",
            OracleOp::Gamma => "Gamma",
            OracleOp::AddCp => "A_cp",
            OracleOp::RemoveCp => "B_cp",
            OracleOp::T0 => "T_0",
            OracleOp::Tn => "T_n",
            OracleOp::Tu => "T_u",
            OracleOp::Ru => "R_u",
        }
    }

    fn needs_bank(self) -> bool {
        matches!(self, OracleOp::T0 | OracleOp::Tn | OracleOp::Tu | OracleOp::Ru)
    }
}

impl fmt::Display for OracleOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for OracleOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | ' ' | '(' | ')'))
            .flat_map(char::to_lowercase)
            .collect();
        let op = match key.as_str() {
            "fmn" => OracleOp::FullDft,
            "psi" | "ψ" => OracleOp::Interleaver,
            "omega" | "ω" => OracleOp::Twiddle,
            "inxfm" | "in⊗fm" | "blockdft" => OracleOp::BlockDft,
            "fnxim" | "fn⊗im" | "dopplerdft" => OracleOp::DopplerDft,
            "gamma" | "γ" => OracleOp::Gamma,
            "acp" => OracleOp::AddCp,
            "bcp" => OracleOp::RemoveCp,
            "t0" => OracleOp::T0,
            "tn" => OracleOp::Tn,
            "tu" => OracleOp::Tu,
            "ru" => OracleOp::Ru,
            _ => return Err(Error::UnknownOperator(s.to_string())),
        };
        Ok(op)
    }
}

/// Dense operator for `geom`. UFMC operators use a bank designed from the
/// geometry with the default attenuation.
pub fn oracle_matrix(op: OracleOp, geom: &FrameGeometry) -> Result<ComplexMatrix> {
    if op.needs_bank() {
        let bank = FilterBankSpec::from_geometry(geom, DEFAULT_ATTEN_DB)?;
        oracle_ufmc(op, &bank)
    } else {
        oracle_frame_op(op, geom)
    }
}

/// Dense UFMC operator for an explicit bank.
pub fn oracle_ufmc(op: OracleOp, bank: &FilterBankSpec) -> Result<ComplexMatrix> {
    match op {
        OracleOp::T0 => Ok(dense_t0(bank)),
        OracleOp::Tn => {
            let t0 = dense_t0(bank);
            let g = dense_gain(&t0)?;
            Ok(t0.scale(C64::new(1.0 / g, 0.0)))
        }
        OracleOp::Tu => {
            let t0 = dense_t0(bank);
            let g = dense_gain(&t0)?;
            let p = dense_predistortion(bank, &t0)?;
            Ok(t0.matmul(&ComplexMatrix::diag(&p)).scale(C64::new(1.0 / g, 0.0)))
        }
        OracleOp::Ru => Ok(dense_ru(bank)),
        other => Err(Error::UnknownOperator(format!(
            "{other} is not a filter-bank operator"
        ))),
    }
}

fn oracle_frame_op(op: OracleOp, geom: &FrameGeometry) -> Result<ComplexMatrix> {
    let (m, n, mn) = (geom.m(), geom.n(), geom.mn());
    Ok(match op {
        OracleOp::FullDft => dft_matrix(mn)?,
        OracleOp::Interleaver => {
            // Ψ_m = CircShift(I_N ⊗ ψ, m) is MN × N; Ψ stacks the Ψ_m^T.
            let base = ComplexMatrix::identity(n).kron(&ComplexMatrix::from_fn(m, 1, |i, _| {
                C64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0)
            }));
            let mut psi = ComplexMatrix::zeros(mn, mn);
            for shift in 0..m {
                let shifted = ComplexMatrix::from_fn(mn, n, |i, j| base[((i + mn - shift) % mn, j)]);
                for r in 0..n {
                    for c in 0..mn {
                        psi[(shift * n + r, c)] = shifted[(c, r)];
                    }
                }
            }
            psi
        }
        OracleOp::Twiddle => ComplexMatrix::diag(&twiddle_diag(geom)),
        OracleOp::BlockDft => ComplexMatrix::identity(n).kron(&dft_matrix(m)?),
        OracleOp::DopplerDft => dft_matrix(n)?.kron(&ComplexMatrix::identity(m)),
        OracleOp::Gamma => {
            let psi = oracle_frame_op(OracleOp::Interleaver, geom)?;
            let blk = oracle_frame_op(OracleOp::BlockDft, geom)?;
            let omega = oracle_frame_op(OracleOp::Twiddle, geom)?;
            psi.matmul(&blk).matmul(&omega)
        }
        OracleOp::AddCp => {
            let cp = geom.cp_len();
            check_cp(cp, mn)?;
            // [G_cp; I_MN] with G_cp the last L_cp rows of I_MN
            ComplexMatrix::from_fn(mn + cp, mn, |i, j| {
                let src = if i < cp { mn - cp + i } else { i - cp };
                C64::new(if src == j { 1.0 } else { 0.0 }, 0.0)
            })
        }
        OracleOp::RemoveCp => {
            let cp = geom.cp_len();
            check_cp(cp, mn)?;
            ComplexMatrix::from_fn(mn, mn + cp, |i, j| {
                C64::new(if j == i + cp { 1.0 } else { 0.0 }, 0.0)
            })
        }
        other => return Err(Error::UnknownOperator(other.to_string())),
    })
}

fn check_cp(cp: usize, mn: usize) -> Result<()> {
    if cp > mn {
        return Err(Error::Geometry(format!("cp_len={cp} exceeds MN={mn}")));
    }
    Ok(())
}

/// T_0 = Σ_i W_i V_i^H, with V_i^H the conjugated DFT columns of subband i
/// and W_i the (n_sc + L_f - 1) × n_sc convolution matrix of Φ_i ⊙ w.
fn dense_t0(bank: &FilterBankSpec) -> ComplexMatrix {
    let n_sc = bank.n_sc();
    let rb = bank.n_sc_rb();
    let k_len = bank.output_len();
    let fh = dft_matrix(n_sc).expect("n_sc > 0").adjoint();
    let mut t0 = ComplexMatrix::zeros(k_len, n_sc);
    for i in 0..bank.n_rb() {
        let h = bank.shifted_filter(i);
        let w_i = ComplexMatrix::from_fn(k_len, n_sc, |r, c| {
            if r >= c && r - c < h.len() {
                h[r - c]
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let v_i = ComplexMatrix::from_fn(n_sc, rb, |r, c| fh[(r, i * rb + c)]);
        let block = w_i.matmul(&v_i);
        for r in 0..k_len {
            for c in 0..rb {
                t0[(r, i * rb + c)] = block[(r, c)];
            }
        }
    }
    t0
}

fn dense_gain(t0: &ComplexMatrix) -> Result<f64> {
    let ones = vec![C64::new(1.0, 0.0); t0.cols()];
    let y = t0.matvec(&ones);
    let power = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;
    if !(power > 0.0) {
        return Err(Error::ZeroPrototype);
    }
    Ok(power.sqrt())
}

fn dense_predistortion(bank: &FilterBankSpec, t0: &ComplexMatrix) -> Result<Vec<C64>> {
    let ones = vec![C64::new(1.0, 0.0); t0.cols()];
    let s = dense_ru(bank).matvec(&t0.matvec(&ones));
    let mean = s.iter().map(|v| v.norm()).sum::<f64>() / s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(bin, v)| {
            if v.norm() == 0.0 {
                Err(Error::SingularPredistortion { bin })
            } else {
                Ok(C64::new(mean, 0.0) / v)
            }
        })
        .collect()
}

/// R_u = E F_{2n_sc} Z.
fn dense_ru(bank: &FilterBankSpec) -> ComplexMatrix {
    let n_sc = bank.n_sc();
    let k_len = bank.output_len();
    let two = 2 * n_sc;
    let z = ComplexMatrix::from_fn(two, k_len, |i, j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0));
    let e = ComplexMatrix::from_fn(n_sc, two, |i, j| C64::new(if j == 2 * i { 1.0 } else { 0.0 }, 0.0));
    let f = ComplexMatrix::from_fn(two, two, |a, b| {
        C64::from_polar(
            1.0 / (two as f64).sqrt(),
            -2.0 * PI * ((a * b) % two) as f64 / two as f64,
        )
    });
    e.matmul(&f).matmul(&z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(m: usize, n: usize) -> FrameGeometry {
        FrameGeometry::new(m, n, 1.0).unwrap()
    }

    #[test]
    fn parse_ids() {
        for op in OracleOp::ALL {
            assert_eq!(op.id().parse::<OracleOp>().unwrap(), op);
        }
        assert_eq!("Γ".parse::<OracleOp>().unwrap(), OracleOp::Gamma);
        assert!(matches!(
            "F_XYZ".parse::<OracleOp>(),
            Err(Error::UnknownOperator(_))
        ));
    }

    #[test]
    fn interleaver_from_circshift_matches_stride_rule() {
        let g = geom(3, 2);
        let psi = oracle_matrix(OracleOp::Interleaver, &g).unwrap();
        for m in 0..3 {
            for n in 0..2 {
                assert_eq!(psi[(m * 2 + n, n * 3 + m)], C64::new(1.0, 0.0));
            }
        }
        let total: f64 = psi.as_slice().iter().map(|v| v.re).sum();
        assert_eq!(total, 6.0);
    }

    #[test]
    fn cooley_tukey_and_unitarity() {
        for (m, n) in [(4, 3), (2, 2), (8, 4)] {
            let g = geom(m, n);
            let gamma = oracle_matrix(OracleOp::Gamma, &g).unwrap();
            let dop = oracle_matrix(OracleOp::DopplerDft, &g).unwrap();
            let f = oracle_matrix(OracleOp::FullDft, &g).unwrap();
            assert!(gamma.matmul(&dop).max_abs_diff(&f) < 1e-12);
            let eye = ComplexMatrix::identity(m * n);
            assert!(gamma.matmul(&gamma.adjoint()).max_abs_diff(&eye) < 1e-12);
        }
    }

    #[test]
    fn cp_operators() {
        let g = geom(2, 2);
        assert_eq!(
            oracle_matrix(OracleOp::AddCp, &g).unwrap(),
            ComplexMatrix::identity(4)
        );
        let g = g.with_cp(2);
        let a = oracle_matrix(OracleOp::AddCp, &g).unwrap();
        let b = oracle_matrix(OracleOp::RemoveCp, &g).unwrap();
        assert_eq!(b.matmul(&a), ComplexMatrix::identity(4));
        let s: Vec<C64> = (0..4).map(|k| C64::new(k as f64, 0.0)).collect();
        let x: Vec<f64> = a.matvec(&s).iter().map(|v| v.re).collect();
        assert_eq!(x, vec![2.0, 3.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn unit_filter_reduces_to_half_identity() {
        let bank = FilterBankSpec::design(32, 4, 1, 60.0).unwrap();
        let t0 = oracle_ufmc(OracleOp::T0, &bank).unwrap();
        let ru = oracle_ufmc(OracleOp::Ru, &bank).unwrap();
        let half = ComplexMatrix::identity(32).scale(C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        assert!(ru.matmul(&t0).max_abs_diff(&half) < 1e-12);
    }
}
