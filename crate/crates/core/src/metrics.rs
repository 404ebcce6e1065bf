//! BER, Welch PSD, out-of-band level, sidelobe spectra and Doppler leakage.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Floor for every dB quantity.
pub const DB_FLOOR: f64 = -200.0;

fn db10(x: f64) -> f64 {
    if x > 0.0 {
        (10.0 * x.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Fraction of differing bits.
pub fn ber(tx: &[u8], rx: &[u8]) -> Result<f64> {
    Ok(bit_errors(tx, rx)? as f64 / tx.len().max(1) as f64)
}

pub fn bit_errors(tx: &[u8], rx: &[u8]) -> Result<u64> {
    if tx.len() != rx.len() {
        return Err(Error::len("bit arrays", tx.len(), rx.len()));
    }
    Ok(tx.iter().zip(rx).filter(|(a, b)| (*a & 1) != (*b & 1)).count() as u64)
}

/// Wilson score interval at 95 % for `errors` out of `n`.
pub fn wilson_ci95(errors: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = n as f64;
    let p = errors as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    let lo = if errors == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if errors as f64 == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelchParams {
    pub segment: usize,
    pub overlap: f64,
}

impl Default for WelchParams {
    fn default() -> Self {
        WelchParams {
            segment: 1024,
            overlap: 0.5,
        }
    }
}

/// Two-sided PSD on a centred, symmetric frequency axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdEstimate {
    pub freq_hz: Vec<f64>,
    pub psd_db: Vec<f64>,
    pub params: WelchParams,
    pub window: &'static str,
}

/// Welch estimate with a Hann window, scaled so the PSD integrates to the
/// mean signal power. The `-fs/2` bin of even segment lengths is dropped to
/// keep the axis symmetric.
pub fn psd_welch(x: &[C64], fs_hz: f64, params: WelchParams) -> Result<PsdEstimate> {
    let seg = params.segment;
    if seg < 2 {
        return Err(Error::Dimension("Welch segment must be at least 2".into()));
    }
    if x.len() < seg {
        return Err(Error::len("PSD input", seg, x.len()));
    }
    if !(0.0..1.0).contains(&params.overlap) {
        return Err(Error::Dimension("Welch overlap must lie in [0, 1)".into()));
    }
    let hop = (((1.0 - params.overlap) * seg as f64).round() as usize).max(1);
    let window: Vec<f64> = (0..seg)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / seg as f64).cos())
        .collect();
    let u: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let mut acc = vec![0.0; seg];
    let mut count = 0usize;
    let mut buf = vec![C64::new(0.0, 0.0); seg];
    let mut start = 0;
    while start + seg <= x.len() {
        for ((b, s), w) in buf.iter_mut().zip(&x[start..start + seg]).zip(&window) {
            *b = s * w;
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    let scale = 1.0 / (fs_hz * u * count as f64);
    let half = ((seg - 1) / 2) as i64;
    let mut freq_hz = Vec::with_capacity(seg);
    let mut psd_db = Vec::with_capacity(seg);
    for c in -half..=half {
        freq_hz.push(c as f64 * fs_hz / seg as f64);
        psd_db.push(db10(acc[c.rem_euclid(seg as i64) as usize] * scale));
    }
    Ok(PsdEstimate {
        freq_hz,
        psd_db,
        params,
        window: "hann",
    })
}

/// Mean PSD (dB) over `|f|` in the offset band minus the mean over the
/// occupied band `|f| ≤ occupied_hz / 2`.
pub fn oob_metric(psd: &PsdEstimate, occupied_hz: f64, offset_band_hz: (f64, f64)) -> Result<f64> {
    let (lo, hi) = offset_band_hz;
    let inside = band_mean_db(psd, |f| f.abs() <= occupied_hz / 2.0)
        .ok_or_else(|| Error::Dimension("occupied band selects no PSD bins".into()))?;
    let outside = band_mean_db(psd, |f| f.abs() >= lo && f.abs() <= hi)
        .ok_or_else(|| Error::Dimension("offset band selects no PSD bins".into()))?;
    Ok(outside - inside)
}

/// Mean of the dB values over the bins whose frequency satisfies `pick`.
pub fn band_mean_db(psd: &PsdEstimate, pick: impl Fn(f64) -> bool) -> Option<f64> {
    let vals: Vec<f64> = psd
        .freq_hz
        .iter()
        .zip(&psd.psd_db)
        .filter(|(f, _)| pick(**f))
        .map(|(_, p)| *p)
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Peak-normalized magnitude (dB) of the `oversample·len`-point DFT of `x`.
pub fn fd_sidelobe_spectrum(x: &[C64], oversample: usize) -> Result<Vec<f64>> {
    if oversample < 2 {
        return Err(Error::Dimension("sidelobe spectrum needs oversample ≥ 2".into()));
    }
    Ok(peak_normalized_db(&power_spectrum(x, oversample * x.len())?))
}

/// `|DFT_n(x)|²` with `x` zero-padded to `n_fft` points.
pub fn power_spectrum(x: &[C64], n_fft: usize) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Dimension("spectrum of an empty signal".into()));
    }
    if n_fft < x.len() {
        return Err(Error::Dimension(format!(
            "{n_fft}-point spectrum is shorter than the {}-sample signal",
            x.len()
        )));
    }
    let mut buf = vec![C64::new(0.0, 0.0); n_fft];
    buf[..x.len()].copy_from_slice(x);
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    Ok(buf.iter().map(|v| v.norm_sqr()).collect())
}

/// `10·log10(p / max p)`, floored.
pub fn peak_normalized_db(p: &[f64]) -> Vec<f64> {
    let peak = p.iter().cloned().fold(0.0, f64::max);
    p.iter().map(|v| if peak > 0.0 { db10(v / peak) } else { DB_FLOOR }).collect()
}

pub(crate) fn to_db(x: f64) -> f64 {
    db10(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeakageReport {
    pub total_energy: f64,
    pub in_window_energy: f64,
    pub leakage_ratio_db: f64,
    pub half_width_delay: usize,
    pub half_width_doppler: usize,
}

/// Energy outside a cyclic `(2w_m + 1) × (2w_n + 1)` neighbourhood of
/// `centre`, relative to the total. `grid[m][n]`.
pub fn doppler_leakage(
    grid: &[Vec<C64>],
    centre: (usize, usize),
    half_widths: (usize, usize),
) -> Result<LeakageReport> {
    let m_len = grid.len();
    let n_len = grid.first().map_or(0, Vec::len);
    let (wm, wn) = half_widths;
    if 2 * wm + 1 > m_len || 2 * wn + 1 > n_len {
        return Err(Error::Dimension(format!(
            "window {}x{} does not fit a {m_len}x{n_len} grid",
            2 * wm + 1,
            2 * wn + 1
        )));
    }
    if centre.0 >= m_len || centre.1 >= n_len {
        return Err(Error::Dimension("leakage centre outside the grid".into()));
    }
    let total: f64 = grid.iter().flatten().map(|v| v.norm_sqr()).sum();
    let mut inside = 0.0;
    for dm in 0..=2 * wm {
        for dn in 0..=2 * wn {
            let m = (centre.0 + m_len + dm - wm) % m_len;
            let n = (centre.1 + n_len + dn - wn) % n_len;
            inside += grid[m][n].norm_sqr();
        }
    }
    let ratio = if total > 0.0 { (1.0 - inside / total).max(0.0) } else { 0.0 };
    Ok(LeakageReport {
        total_energy: total,
        in_window_energy: inside,
        leakage_ratio_db: db10(ratio),
        half_width_delay: wm,
        half_width_doppler: wn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ber_examples() {
        let a = vec![0u8, 1, 1, 0];
        assert_eq!(ber(&a, &a).unwrap(), 0.0);
        let b: Vec<u8> = a.iter().map(|v| 1 - v).collect();
        assert_eq!(ber(&a, &b).unwrap(), 1.0);
        let x = vec![0u8; 1000];
        let mut y = x.clone();
        y[17] = 1;
        assert_eq!(ber(&x, &y).unwrap(), 0.001);
        assert!(ber(&x, &y[..999]).is_err());
    }

    #[test]
    fn wilson_brackets_estimate() {
        let (lo, hi) = wilson_ci95(10, 1000);
        assert!(lo < 0.01 && hi > 0.01);
        let (lo, hi) = wilson_ci95(0, 1000);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.01);
    }

    #[test]
    fn tone_and_noise_psd() {
        let fs = 1.0e6;
        let f0 = 125_000.0;
        let x: Vec<C64> = (0..8192)
            .map(|i| C64::from_polar(1.0, 2.0 * PI * f0 * i as f64 / fs))
            .collect();
        let p = psd_welch(&x, fs, WelchParams::default()).unwrap();
        assert_eq!(p.freq_hz.len(), 1023);
        assert!((p.freq_hz[0] + p.freq_hz[1022]).abs() < 1e-9);
        let peak = (0..p.psd_db.len()).max_by(|&a, &b| p.psd_db[a].total_cmp(&p.psd_db[b])).unwrap();
        assert!((p.freq_hz[peak] - f0).abs() < 1.0);
        assert!(p.psd_db[peak] - p.psd_db[peak + 2] >= 30.0);
        assert!(p.psd_db[peak] - p.psd_db[peak - 2] >= 30.0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = crate::channel::unit_noise(1 << 16, &mut rng);
        let sigma2: f64 = 0.5;
        let scaled: Vec<C64> = noise.iter().map(|v| v * sigma2.sqrt()).collect();
        let p = psd_welch(&scaled, fs, WelchParams::default()).unwrap();
        let lin: f64 = p.psd_db.iter().map(|v| 10f64.powf(v / 10.0)).sum::<f64>() / p.psd_db.len() as f64;
        assert!((10.0 * (lin / (sigma2 / fs)).log10()).abs() < 1.0);
        let power: f64 = p.psd_db.iter().map(|v| 10f64.powf(v / 10.0)).sum::<f64>() * fs / 1024.0;
        let mean: f64 = scaled.iter().map(|v| v.norm_sqr()).sum::<f64>() / scaled.len() as f64;
        assert!((power / mean - 1.0).abs() < 0.01);
    }

    #[test]
    fn zero_signal_floor() {
        let p = psd_welch(&vec![C64::new(0.0, 0.0); 2048], 1.0, WelchParams::default()).unwrap();
        assert!(p.psd_db.iter().all(|v| *v == DB_FLOOR));
        assert!(psd_welch(&[C64::new(1.0, 0.0); 10], 1.0, WelchParams::default()).is_err());
    }

    #[test]
    fn oob_examples() {
        let freq: Vec<f64> = (-10..=10).map(|k| k as f64).collect();
        let flat = PsdEstimate {
            psd_db: vec![-3.0; freq.len()],
            freq_hz: freq.clone(),
            params: WelchParams::default(),
            window: "hann",
        };
        assert_eq!(oob_metric(&flat, 8.0, (6.0, 8.0)).unwrap(), 0.0);
        let wall = PsdEstimate {
            psd_db: freq.iter().map(|f| if f.abs() <= 4.0 { 0.0 } else { DB_FLOOR }).collect(),
            ..flat.clone()
        };
        assert_eq!(oob_metric(&wall, 8.0, (6.0, 8.0)).unwrap(), DB_FLOOR);
        assert!(oob_metric(&flat, 8.0, (20.0, 30.0)).is_err());
    }

    #[test]
    fn dirichlet_first_sidelobe() {
        let x = vec![C64::new(1.0, 0.0); 64];
        let s = fd_sidelobe_spectrum(&x, 16).unwrap();
        // first sidelobe sits between the first two nulls, 16..32 bins out
        let side = s[17..32].iter().cloned().fold(f64::MIN, f64::max);
        assert!((side + 13.26).abs() < 0.1, "{side}");
        assert!(fd_sidelobe_spectrum(&x, 1).is_err());
    }

    #[test]
    fn leakage_examples() {
        let mut g = vec![vec![C64::new(0.0, 0.0); 8]; 8];
        g[3][4] = C64::new(2.0, 0.0);
        let r = doppler_leakage(&g, (3, 4), (1, 1)).unwrap();
        assert_eq!(r.leakage_ratio_db, DB_FLOOR);
        let u = vec![vec![C64::new(1.0, 1.0); 8]; 8];
        let r = doppler_leakage(&u, (0, 0), (1, 1)).unwrap();
        assert!((r.leakage_ratio_db - 10.0 * (1.0 - 9.0 / 64.0f64).log10()).abs() < 1e-12);
        let wide = doppler_leakage(&u, (0, 0), (2, 2)).unwrap();
        assert!(wide.leakage_ratio_db < r.leakage_ratio_db);
        assert!(doppler_leakage(&u, (0, 0), (4, 1)).is_err());
    }
}
