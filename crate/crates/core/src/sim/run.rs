//! Experiment dispatch, Monte Carlo loops and report/CSV rendering.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::baselines::{DrUfmc, RwOtfs};
use crate::channel::{generate_channel_with, unit_noise, LtvChannelRealization};
use crate::detect::{detect_frame, Equalizer, Qam};
use crate::error::{Error, Result};
use crate::gf::GfModem;
use crate::metrics::{
    band_mean_db, bit_errors, doppler_leakage, oob_metric, peak_normalized_db, power_spectrum, psd_welch,
    to_db, wilson_ci95, LeakageReport, WelchParams,
};
use crate::par::{map_indexed, Exec};
use crate::scfdma::{to_grid, DelayDopplerFrame, ScFdmaModem};
use crate::scheme::{Otfs, SchemeKind, Transceiver};
use crate::verify::{oracle_suite, OracleCheck};
use crate::C64;

use super::config::{ExperimentConfig, ExperimentKind, RunPlan};

/// Printed in every report: the axis the BER tables are indexed by.
pub const SNR_DEFINITION: &str =
    "Es/sigma^2 in dB: Es = 1 per delay-Doppler symbol, sigma^2 = per-sample complex noise variance at the receiver input";

/// Version of the CSV layouts.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Random stream purposes within one frame.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Channel = 0,
    Bits = 1,
    Noise = 2,
}

/// Per-frame generator: the stream depends only on `(seed, frame, purpose)`,
/// never on which worker runs the frame.
fn frame_rng(seed: u64, frame: usize, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame as u64 * 4 + purpose as u64);
    rng
}

/// Builds the transceiver for `kind` on the plan's geometry.
pub fn build_scheme(kind: SchemeKind, plan: &RunPlan) -> Result<Box<dyn Transceiver>> {
    let g = plan.geometry;
    let c = &plan.config;
    Ok(match kind {
        SchemeKind::Otfs => Box::new(Otfs::new(g)?),
        SchemeKind::GfOtfs => Box::new(GfModem::new(g, c.filter_atten_db)?),
        SchemeKind::RwOtfs => Box::new(RwOtfs::new(
            g,
            c.rw_window,
            c.rw_tx_window.unwrap_or(false),
            c.rw_rx_window.unwrap_or(true),
        )?),
        SchemeKind::DrUfmc => Box::new(DrUfmc::new(g, c.dr_ufmc)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub ber: f64,
    pub n_bits: u64,
    pub n_errors: u64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
}

impl BerPoint {
    fn new(snr_db: f64, n_errors: u64, n_bits: u64) -> Self {
        let (ci95_lo, ci95_hi) = wilson_ci95(n_errors, n_bits);
        BerPoint {
            snr_db,
            ber: n_errors as f64 / n_bits as f64,
            n_bits,
            n_errors,
            ci95_lo,
            ci95_hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdSummary {
    /// Offset-band mean minus occupied-band mean, dB.
    pub oob_db: f64,
    /// Offset-band mean PSD, dB/Hz, for unit mean transmit power.
    pub offset_band_mean_db: f64,
    pub sample_rate_hz: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SidelobeSummary {
    /// Mean of the peak-normalized spectrum over the inactive half, dB.
    pub inactive_mean_db: f64,
    /// Highest point over the inactive half, dB.
    pub inactive_peak_db: f64,
    pub oversample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeOutcome {
    Ber(Vec<BerPoint>),
    Psd(PsdSummary),
    Leakage(LeakageReport),
    Sidelobes(SidelobeSummary),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeResult {
    pub scheme: SchemeKind,
    pub tx_len: usize,
    pub result: SchemeOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub version: &'static str,
    pub csv_schema_version: u32,
    pub seed: u64,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub snr_definition: &'static str,
    pub wall_clock_s: f64,
    pub warnings: Vec<String>,
    pub schemes: Vec<SchemeResult>,
    pub oracle: Vec<OracleCheck>,
}

impl ExperimentReport {
    pub fn scheme(&self, kind: SchemeKind) -> Option<&SchemeOutcome> {
        self.schemes.iter().find(|s| s.scheme == kind).map(|s| &s.result)
    }

    pub fn ber(&self, kind: SchemeKind) -> Option<&[BerPoint]> {
        match self.scheme(kind)? {
            SchemeOutcome::Ber(v) => Some(v),
            _ => None,
        }
    }
}

/// A CSV file held in memory until the run has succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub files: Vec<OutputFile>,
}

impl RunOutput {
    pub fn file(&self, name: &str) -> Option<&OutputFile> {
        self.files.iter().find(|f| f.name == name)
    }

    /// Writes every CSV and `report.json` into `dir`, returning their paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::with_capacity(self.files.len() + 1);
        for f in &self.files {
            let p = dir.join(&f.name);
            std::fs::write(&p, &f.contents)?;
            paths.push(p);
        }
        let p = dir.join("report.json");
        let json = serde_json::to_vec_pretty(&self.report)
            .map_err(|e| Error::Numerical(format!("report serialization: {e}")))?;
        std::fs::write(&p, json)?;
        paths.push(p);
        Ok(paths)
    }
}

/// SHA-256 of the resolved configuration, with the output directory blanked
/// so that moving the output does not change the hash.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut c = config.clone();
    c.output_dir = PathBuf::new();
    let bytes = serde_json::to_vec(&c).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Numerical(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| Error::Numerical(format!("csv: {e}")))
}

fn check_finite(what: &str, x: &[C64]) -> Result<()> {
    if x.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} contains NaN or infinity")))
    }
}

/// Runs a resolved plan with the default executor.
pub fn run_plan(plan: &RunPlan) -> Result<RunOutput> {
    run_plan_with(plan, Exec::default())
}

/// Parses, resolves and runs in one step.
pub fn run_experiment(config: ExperimentConfig) -> Result<RunOutput> {
    run_plan(&config.resolve()?)
}

pub fn run_plan_with(plan: &RunPlan, exec: Exec) -> Result<RunOutput> {
    let start = Instant::now();
    let schemes: Vec<Box<dyn Transceiver>> = if plan.experiment() == ExperimentKind::OracleSuite {
        Vec::new()
    } else {
        plan.config
            .schemes
            .iter()
            .map(|k| build_scheme(*k, plan))
            .collect::<Result<_>>()?
    };
    let mut files = Vec::new();
    let mut results = Vec::new();
    let mut oracle = Vec::new();
    match plan.experiment() {
        ExperimentKind::BerSweep => {
            let tables = ber_sweep(plan, &schemes, &plan.config.snr_grid_db.0, exec)?;
            for (s, table) in schemes.iter().zip(tables) {
                files.push(OutputFile {
                    name: format!("ber_{}.csv", s.kind()),
                    contents: csv_bytes(&table)?,
                });
                results.push(SchemeResult {
                    scheme: s.kind(),
                    tx_len: s.tx_len(),
                    result: SchemeOutcome::Ber(table),
                });
            }
        }
        ExperimentKind::Loopback => {
            let tables = ber_sweep(plan, &schemes, &[f64::INFINITY], exec)?;
            for (s, table) in schemes.iter().zip(tables) {
                files.push(OutputFile {
                    name: format!("loopback_{}.csv", s.kind()),
                    contents: csv_bytes(&table)?,
                });
                results.push(SchemeResult {
                    scheme: s.kind(),
                    tx_len: s.tx_len(),
                    result: SchemeOutcome::Ber(table),
                });
            }
        }
        ExperimentKind::ImpulseLeakage => {
            for s in &schemes {
                let (report, grid) = impulse_leakage(plan, s.as_ref())?;
                files.push(OutputFile {
                    name: format!("leakage_{}.csv", s.kind()),
                    contents: leakage_csv(&grid)?,
                });
                results.push(SchemeResult {
                    scheme: s.kind(),
                    tx_len: s.tx_len(),
                    result: SchemeOutcome::Leakage(report),
                });
            }
        }
        ExperimentKind::Psd => {
            let per_scheme = map_indexed(exec, schemes.len(), |i| psd(plan, schemes[i].as_ref()));
            for (s, r) in schemes.iter().zip(per_scheme) {
                let (summary, freq, db) = r?;
                #[derive(Serialize)]
                struct Row {
                    freq_hz: f64,
                    psd_db: f64,
                }
                files.push(OutputFile {
                    name: format!("psd_{}.csv", s.kind()),
                    contents: csv_bytes(freq.iter().zip(&db).map(|(f, p)| Row { freq_hz: *f, psd_db: *p }))?,
                });
                results.push(SchemeResult {
                    scheme: s.kind(),
                    tx_len: s.tx_len(),
                    result: SchemeOutcome::Psd(summary),
                });
            }
        }
        ExperimentKind::Sidelobes => {
            for s in &schemes {
                let (summary, spectrum) = sidelobes(plan, s.as_ref())?;
                let q = summary.oversample as f64;
                #[derive(Serialize)]
                struct Row {
                    fd_bin: f64,
                    magnitude_db: f64,
                }
                files.push(OutputFile {
                    name: format!("sidelobes_{}.csv", s.kind()),
                    contents: csv_bytes(spectrum.iter().enumerate().map(|(k, v)| Row {
                        fd_bin: k as f64 / q,
                        magnitude_db: *v,
                    }))?,
                });
                results.push(SchemeResult {
                    scheme: s.kind(),
                    tx_len: s.tx_len(),
                    result: SchemeOutcome::Sidelobes(summary),
                });
            }
        }
        ExperimentKind::OracleSuite => {
            oracle = oracle_suite()?;
            #[derive(Serialize)]
            struct Row<'a> {
                check: &'a str,
                max_abs_error: f64,
                tolerance: f64,
                passed: bool,
            }
            files.push(OutputFile {
                name: "oracle.csv".into(),
                contents: csv_bytes(oracle.iter().map(|c| Row {
                    check: &c.name,
                    max_abs_error: c.max_abs_error,
                    tolerance: c.tolerance,
                    passed: c.passed(),
                }))?,
            });
            if let Some(bad) = oracle.iter().find(|c| !c.passed() || !c.max_abs_error.is_finite()) {
                return Err(Error::Numerical(format!(
                    "oracle check `{}` failed: {:e} ≥ {:e}",
                    bad.name, bad.max_abs_error, bad.tolerance
                )));
            }
        }
    }
    let report = ExperimentReport {
        experiment: plan.experiment(),
        version: env!("CARGO_PKG_VERSION"),
        csv_schema_version: CSV_SCHEMA_VERSION,
        seed: plan.config.seed,
        config_sha256: config_hash(&plan.config),
        config: plan.config.clone(),
        snr_definition: SNR_DEFINITION,
        wall_clock_s: start.elapsed().as_secs_f64(),
        warnings: plan.warnings.clone(),
        schemes: results,
        oracle,
    };
    Ok(RunOutput { report, files })
}

/// Samples the channel, noise and every scheme must cover.
fn frame_span(schemes: &[Box<dyn Transceiver>], memory: usize) -> usize {
    schemes.iter().map(|s| s.tx_len()).max().unwrap_or(0) + memory
}

fn channel_memory(plan: &RunPlan) -> Result<usize> {
    Ok(plan.channel.sampled_profile()?.last().map_or(1, |(d, _)| d + 1))
}

/// Bit errors per `[scheme][snr]` over all frames. Every scheme sees the same
/// channel, data and unit-variance noise vector in a given frame; the noise
/// is scaled to each SNR point.
fn ber_sweep(
    plan: &RunPlan,
    schemes: &[Box<dyn Transceiver>],
    snr_db: &[f64],
    exec: Exec,
) -> Result<Vec<Vec<BerPoint>>> {
    let g = plan.geometry;
    let seed = plan.config.seed;
    let qam = Qam::new(plan.config.qam_order)?;
    let span = frame_span(schemes, channel_memory(plan)?);
    let sigmas: Vec<f64> = snr_db.iter().map(|s| 10f64.powf(-s / 20.0)).collect();
    for s in schemes {
        s.tx_basis()?;
    }

    let per_frame = map_indexed(exec, plan.n_frames(), |f| -> Result<Vec<Vec<u64>>> {
        let ch = generate_channel_with(&plan.channel, &mut frame_rng(seed, f, Stream::Channel), span)?;
        let frame = DelayDopplerFrame::random(g, qam.order(), &mut frame_rng(seed, f, Stream::Bits))?;
        let noise = unit_noise(span, &mut frame_rng(seed, f, Stream::Noise));
        schemes
            .iter()
            .map(|s| frame_errors(s.as_ref(), &ch, &frame, &noise, &sigmas, &qam))
            .collect()
    });

    let mut errors = vec![vec![0u64; snr_db.len()]; schemes.len()];
    for frame in per_frame {
        for (acc, e) in errors.iter_mut().zip(frame?) {
            for (a, v) in acc.iter_mut().zip(e) {
                *a += v;
            }
        }
    }
    let n_bits = (plan.n_frames() * g.mn() * qam.bits_per_symbol()) as u64;
    Ok(errors
        .into_iter()
        .map(|e| snr_db.iter().zip(e).map(|(s, n)| BerPoint::new(*s, n, n_bits)).collect())
        .collect())
}

fn frame_errors(
    s: &dyn Transceiver,
    ch: &LtvChannelRealization,
    frame: &DelayDopplerFrame,
    noise: &[C64],
    sigmas: &[f64],
    qam: &Qam,
) -> Result<Vec<u64>> {
    let eq = Equalizer::new(s.effective_channel(ch, Exec::Sequential)?)?;
    let y = ch.apply(&s.modulate(frame.symbols())?)?;
    check_finite("received frame", &y)?;
    sigmas
        .iter()
        .map(|&sigma| {
            let r: Vec<C64> = y.iter().zip(noise).map(|(a, w)| a + w * sigma).collect();
            let d_tilde = s.demodulate(&r)?;
            let det = detect_frame(&eq.at_noise(sigma * sigma)?, &d_tilde, qam)?;
            bit_errors(frame.bits(), &det.bits_hat)
        })
        .collect()
}

/// Noise-free response to the centre impulse, and its grid `[m][n]`.
pub fn impulse_leakage(plan: &RunPlan, s: &dyn Transceiver) -> Result<(LeakageReport, Vec<Vec<C64>>)> {
    let g = plan.geometry;
    let [m0, n0] = plan.config.leakage.centre.unwrap_or([g.m() / 2, g.n() / 2]);
    let [wm, wn] = plan.config.leakage.half_widths;
    let span = s.tx_len() + channel_memory(plan)?;
    let ch = generate_channel_with(&plan.channel, &mut frame_rng(plan.config.seed, 0, Stream::Channel), span)?;
    let d = DelayDopplerFrame::impulse(g, m0, n0)?;
    let y = s.demodulate(&ch.apply(&s.modulate(d.symbols())?)?)?;
    check_finite("impulse response", &y)?;
    let grid = to_grid(&y, &g);
    Ok((doppler_leakage(&grid, (m0, n0), (wm, wn))?, grid))
}

fn leakage_csv(grid: &[Vec<C64>]) -> Result<Vec<u8>> {
    #[derive(Serialize)]
    struct Row {
        delay_bin: usize,
        doppler_bin: usize,
        power_db: f64,
    }
    let p: Vec<f64> = grid.iter().flatten().map(|v| v.norm_sqr()).collect();
    let db = peak_normalized_db(&p);
    let n = grid.first().map_or(0, Vec::len);
    csv_bytes(db.iter().enumerate().map(|(k, v)| Row {
        delay_bin: k / n.max(1),
        doppler_bin: k % n.max(1),
        power_db: *v,
    }))
}

/// Welch PSD of `n_frames` back-to-back frames rendered on a `q`-times
/// finer grid and scaled to unit mean power.
pub fn psd(plan: &RunPlan, s: &dyn Transceiver) -> Result<(PsdSummary, Vec<f64>, Vec<f64>)> {
    let g = plan.geometry;
    let p = &plan.config.psd;
    let q = p.oversample;
    let b = g.bandwidth_hz();
    let mut rng = frame_rng(plan.config.seed, 0, Stream::Bits);
    let mut x = Vec::new();
    for _ in 0..plan.n_frames() {
        let f = DelayDopplerFrame::random(g, plan.config.qam_order, &mut rng)?;
        x.extend(s.modulate_oversampled(f.symbols(), q)?);
    }
    check_finite("transmit signal", &x)?;
    let power = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64;
    if power > 0.0 {
        let k = 1.0 / power.sqrt();
        x.iter_mut().for_each(|v| *v *= k);
    }
    let fs = q as f64 * b;
    let est = psd_welch(
        &x,
        fs,
        WelchParams {
            segment: p.segment,
            overlap: p.overlap,
        },
    )?;
    let (lo, hi) = (p.offset_band[0] * b, p.offset_band[1] * b);
    let summary = PsdSummary {
        oob_db: oob_metric(&est, b, (lo, hi))?,
        offset_band_mean_db: band_mean_db(&est, |f| f.abs() >= lo && f.abs() <= hi)
            .ok_or_else(|| Error::Dimension("offset band selects no PSD bins".into()))?,
        sample_rate_hz: fs,
        n_samples: x.len(),
    };
    Ok((summary, est.freq_hz, est.psd_db))
}

/// Spectrum of frames with only the lower half of the frequency-Doppler
/// bins (whole subbands) active, averaged over frames and peak-normalized.
/// Axis: `k / oversample` in frequency-Doppler bins.
pub fn sidelobes(plan: &RunPlan, s: &dyn Transceiver) -> Result<(SidelobeSummary, Vec<f64>)> {
    let g = plan.geometry;
    let mn = g.mn();
    let q = plan.config.sidelobes.oversample;
    let n_fft = q * mn;
    let active = (g.n_rb() / 2).max(1) * g.n_sc_rb();
    let qam = Qam::new(plan.config.qam_order)?;
    let modem = ScFdmaModem::new(g)?;
    let mut rng = frame_rng(plan.config.seed, 0, Stream::Bits);
    let mut acc = vec![0.0; n_fft];
    for _ in 0..plan.n_frames() {
        let sym = DelayDopplerFrame::random(g, qam.order(), &mut rng)?;
        let mut s_f = vec![C64::new(0.0, 0.0); mn];
        s_f[..active].copy_from_slice(&sym.symbols()[..active]);
        let d = modem.despread(&s_f)?;
        let x = s.modulate(&d)?;
        let body = &x[s.cp_len().min(x.len())..];
        if body.len() > n_fft {
            return Err(Error::Dimension(format!(
                "sidelobes.oversample={q} gives {n_fft} points for a {}-sample frame",
                body.len()
            )));
        }
        for (a, p) in acc.iter_mut().zip(power_spectrum(body, n_fft)?) {
            *a += p;
        }
    }
    if acc.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("sidelobe spectrum is not finite".into()));
    }
    let db = peak_normalized_db(&acc);
    let guard = g.n_sc_rb();
    let (lo, hi) = (q * (active + guard), q * mn.saturating_sub(guard));
    let region = &db[lo.min(hi)..hi];
    let lin_mean = if region.is_empty() {
        0.0
    } else {
        region.iter().map(|v| 10f64.powf(v / 10.0)).sum::<f64>() / region.len() as f64
    };
    let summary = SidelobeSummary {
        inactive_mean_db: to_db(lin_mean),
        inactive_peak_db: region.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        oversample: q,
    };
    Ok((summary, db))
}
