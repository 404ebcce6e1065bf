//! Experiment configuration: strict JSON with reference defaults.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baselines::{DrUfmcSpec, WindowSpec};
use crate::channel::{ChannelConfig, DopplerModel, Profile};
use crate::detect::Qam;
use crate::error::{Error, Result};
use crate::geometry::FrameGeometry;
use crate::scheme::SchemeKind;
use crate::ufmc::DEFAULT_ATTEN_DB;

/// Bandwidth of the spectrum experiments.
pub const PSD_BANDWIDTH_HZ: f64 = 10e6;
/// Bandwidth of the link-level experiments.
pub const LINK_BANDWIDTH_HZ: f64 = 1.92e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Loopback,
    ImpulseLeakage,
    Sidelobes,
    Psd,
    BerSweep,
    OracleSuite,
}

impl ExperimentKind {
    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::Loopback => "loopback",
            ExperimentKind::ImpulseLeakage => "impulse_leakage",
            ExperimentKind::Sidelobes => "sidelobes",
            ExperimentKind::Psd => "psd",
            ExperimentKind::BerSweep => "ber_sweep",
            ExperimentKind::OracleSuite => "oracle_suite",
        }
    }

    fn transmit_only(self) -> bool {
        matches!(self, ExperimentKind::Psd | ExperimentKind::Sidelobes)
    }
}

/// SNR points in dB. Deserializes from a list or a `"start:step:stop"`
/// range (stop included).
#[derive(Debug, Clone, PartialEq)]
pub struct SnrGrid(pub Vec<f64>);

impl FromStr for SnrGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::config("snr_grid_db", format!("`{s}`: {why}"));
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("expected start:step:stop with numeric parts"))?;
        let [start, step, stop] = parts[..] else {
            return Err(bad("expected start:step:stop"));
        };
        if !(start.is_finite() && step.is_finite() && stop.is_finite()) {
            return Err(bad("range bounds must be finite"));
        }
        if step <= 0.0 || stop < start {
            return Err(bad("step must be positive and stop ≥ start"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        if count > 10_000 {
            return Err(bad("more than 10000 points"));
        }
        Ok(SnrGrid((0..count).map(|i| start + i as f64 * step).collect()))
    }
}

impl<'de> Deserialize<'de> for SnrGrid {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Range(String),
            List(Vec<f64>),
        }
        match Raw::deserialize(de).map_err(|_| {
            serde::de::Error::custom("snr_grid_db must be a list of numbers or a \"start:step:stop\" string")
        })? {
            Raw::Range(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::List(v) => Ok(SnrGrid(v)),
        }
    }
}

impl Serialize for SnrGrid {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl fmt::Display for SnrGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "[{}]", v.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    /// Defaults to a single path for `impulse_leakage`, TDL-C otherwise.
    pub profile: Option<Profile>,
    pub carrier_hz: f64,
    pub speed_mps: f64,
    pub delay_spread_s: f64,
    /// Defaults to 5 for TDL-C and to every listed path otherwise.
    pub n_taps: Option<usize>,
    pub doppler_model: DopplerModel,
    /// Pins every tap to `q·Δν`; defaults to 0.5 for `impulse_leakage`.
    pub fractional_doppler_override: Option<f64>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            profile: None,
            carrier_hz: 5.9e9,
            speed_mps: 500.0 / 3.6,
            delay_spread_s: 300e-9,
            n_taps: None,
            doppler_model: DopplerModel::SingleShiftPerTap,
            fractional_doppler_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsdSection {
    /// Rendering grid relative to the sample rate.
    pub oversample: usize,
    pub segment: usize,
    pub overlap: f64,
    /// Offset band `[lo, hi]` as fractions of the bandwidth from the centre.
    pub offset_band: [f64; 2],
}

impl Default for PsdSection {
    fn default() -> Self {
        PsdSection {
            oversample: 4,
            segment: 1024,
            overlap: 0.5,
            offset_band: [0.55, 0.75],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeakageSection {
    /// `[delay, Doppler]`; defaults to `[M/2, N/2]`.
    pub centre: Option<[usize; 2]>,
    pub half_widths: [usize; 2],
}

impl Default for LeakageSection {
    fn default() -> Self {
        LeakageSection {
            centre: None,
            half_widths: [1, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SidelobeSection {
    pub oversample: usize,
}

impl Default for SidelobeSection {
    fn default() -> Self {
        SidelobeSection { oversample: 8 }
    }
}

/// Everything one run needs. Omitted keys take the reference values; keys
/// left `null` are filled in per experiment by [`ExperimentConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub schemes: Vec<SchemeKind>,
    pub m: usize,
    pub n: usize,
    /// 10 MHz for `psd` and `sidelobes`, 1.92 MHz otherwise.
    pub bandwidth_hz: Option<f64>,
    /// Plain OTFS prefix; defaults to the channel memory.
    pub cp_len: Option<usize>,
    pub n_sc_rb: usize,
    /// GF-OTFS filter length; defaults to MN/4 + 1.
    pub filter_len: Option<usize>,
    pub filter_atten_db: f64,
    pub rw_window: WindowSpec,
    /// Transmit window of RW-OTFS; on for `psd` and `sidelobes`.
    pub rw_tx_window: Option<bool>,
    /// Receive window of RW-OTFS; on except for `psd` and `sidelobes`.
    pub rw_rx_window: Option<bool>,
    pub dr_ufmc: DrUfmcSpec,
    pub channel: ChannelSection,
    pub qam_order: usize,
    pub snr_grid_db: SnrGrid,
    /// 200 for `ber_sweep`, 20 for `loopback`, 16 for the spectra, 1 otherwise.
    pub n_frames: Option<usize>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub psd: PsdSection,
    pub leakage: LeakageSection,
    pub sidelobes: SidelobeSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::BerSweep,
            schemes: SchemeKind::ALL.to_vec(),
            m: 64,
            n: 8,
            bandwidth_hz: None,
            cp_len: None,
            n_sc_rb: 4,
            filter_len: None,
            filter_atten_db: DEFAULT_ATTEN_DB,
            rw_window: WindowSpec::default(),
            rw_tx_window: None,
            rw_rx_window: None,
            dr_ufmc: DrUfmcSpec::default(),
            channel: ChannelSection::default(),
            qam_order: 16,
            snr_grid_db: SnrGrid((0..=8).map(|i| 5.0 * i as f64).collect()),
            n_frames: None,
            seed: 1,
            output_dir: PathBuf::from("ddwave-out"),
            psd: PsdSection::default(),
            leakage: LeakageSection::default(),
            sidelobes: SidelobeSection::default(),
        }
    }
}

/// Reads a config file. An empty (or all-whitespace) file is the default
/// configuration.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub config: ExperimentConfig,
    pub geometry: FrameGeometry,
    pub channel: ChannelConfig,
    pub warnings: Vec<String>,
}

impl RunPlan {
    pub fn experiment(&self) -> ExperimentKind {
        self.config.experiment
    }

    pub fn n_frames(&self) -> usize {
        self.config.n_frames.unwrap_or(1)
    }
}

impl ExperimentConfig {
    /// Fills the per-experiment defaults and checks every field.
    pub fn resolve(mut self) -> Result<RunPlan> {
        let exp = self.experiment;
        let mut warnings = Vec::new();

        if self.m == 0 {
            return Err(Error::config("m", "must be positive"));
        }
        if self.n == 0 {
            return Err(Error::config("n", "must be positive"));
        }
        let mn = self.m * self.n;
        if self.n_sc_rb == 0 || mn % self.n_sc_rb != 0 {
            return Err(Error::config(
                "n_sc_rb",
                format!(
                    "n_sc_rb={} must divide M·N={mn} (m={}, n={})",
                    self.n_sc_rb, self.m, self.n
                ),
            ));
        }
        let bandwidth = *self.bandwidth_hz.get_or_insert(if exp.transmit_only() {
            PSD_BANDWIDTH_HZ
        } else {
            LINK_BANDWIDTH_HZ
        });
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::config("bandwidth_hz", format!("must be positive, got {bandwidth}")));
        }
        let filter_len = *self.filter_len.get_or_insert(mn / 4 + 1);
        if filter_len == 0 || filter_len > mn + 1 {
            return Err(Error::config(
                "filter_len",
                format!("filter_len={filter_len} must lie in 1..={} (M·N + 1)", mn + 1),
            ));
        }
        if !(self.filter_atten_db.is_finite() && self.filter_atten_db > 0.0) {
            return Err(Error::config("filter_atten_db", "must be positive"));
        }
        if self.schemes.is_empty() && exp != ExperimentKind::OracleSuite {
            return Err(Error::config("schemes", "at least one scheme is required"));
        }
        let unique: BTreeSet<_> = self.schemes.iter().collect();
        if unique.len() != self.schemes.len() {
            return Err(Error::config("schemes", "schemes must not repeat"));
        }
        Qam::new(self.qam_order).map_err(|_| {
            Error::config("qam_order", format!("{} is not one of 4, 16, 64", self.qam_order))
        })?;
        let n_frames = *self.n_frames.get_or_insert(match exp {
            ExperimentKind::BerSweep => 200,
            ExperimentKind::Loopback => 20,
            ExperimentKind::Psd | ExperimentKind::Sidelobes => 16,
            ExperimentKind::ImpulseLeakage | ExperimentKind::OracleSuite => 1,
        });
        if n_frames == 0 {
            return Err(Error::config("n_frames", "must be at least 1"));
        }
        if exp == ExperimentKind::BerSweep && self.snr_grid_db.0.is_empty() {
            return Err(Error::config("snr_grid_db", "must not be empty for ber_sweep"));
        }
        if self.snr_grid_db.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("snr_grid_db", "values must be finite"));
        }

        self.rw_window
            .values(mn)
            .map_err(|e| Error::config("rw_window", e.to_string()))?;
        let tx_default = exp.transmit_only();
        self.rw_tx_window.get_or_insert(tx_default);
        self.rw_rx_window.get_or_insert(!tx_default);

        let dr = self.dr_ufmc;
        let uses_dr = self.schemes.contains(&SchemeKind::DrUfmc);
        if uses_dr && (dr.n_sc_rb == 0 || self.m % dr.n_sc_rb != 0) {
            return Err(Error::config(
                "dr_ufmc.n_sc_rb",
                format!("{} must divide m={}", dr.n_sc_rb, self.m),
            ));
        }
        if uses_dr && (dr.filter_len == 0 || dr.filter_len > self.m + 1) {
            return Err(Error::config(
                "dr_ufmc.filter_len",
                format!("{} must lie in 1..={} (m + 1)", dr.filter_len, self.m + 1),
            ));
        }
        if uses_dr && !(dr.atten_db.is_finite() && dr.atten_db > 0.0) {
            return Err(Error::config("dr_ufmc.atten_db", "must be positive"));
        }

        if exp == ExperimentKind::Loopback {
            if self.channel != ChannelSection::default() {
                warnings.push("loopback always runs over the identity channel; the channel section is ignored".into());
            }
            self.channel = ChannelSection {
                profile: Some(Profile::SinglePath),
                speed_mps: 0.0,
                n_taps: Some(1),
                ..ChannelSection::default()
            };
        }
        let ch = &mut self.channel;
        let profile = ch
            .profile
            .get_or_insert(if exp == ExperimentKind::ImpulseLeakage {
                Profile::SinglePath
            } else {
                Profile::TdlC
            })
            .clone();
        let n_taps = *ch.n_taps.get_or_insert(match &profile {
            Profile::TdlC => 5,
            Profile::SinglePath => 1,
            Profile::Custom { delays_s, .. } => delays_s.len(),
        });
        if exp == ExperimentKind::ImpulseLeakage && ch.fractional_doppler_override.is_none() {
            ch.fractional_doppler_override = Some(0.5);
        }
        if let Some(q) = ch.fractional_doppler_override {
            if !q.is_finite() {
                return Err(Error::config("channel.fractional_doppler_override", "must be finite"));
            }
        }
        let geometry = FrameGeometry::new(self.m, self.n, bandwidth)
            .and_then(|g| g.with_subbands(self.n_sc_rb))
            .and_then(|g| g.with_filter_len(filter_len))
            .map_err(|e| Error::config("geometry", e.to_string()))?;
        let channel = ChannelConfig {
            profile,
            carrier_hz: ch.carrier_hz,
            speed_mps: ch.speed_mps,
            bandwidth_hz: bandwidth,
            delay_spread_s: ch.delay_spread_s,
            n_taps,
            doppler_model: ch.doppler_model,
            fractional_doppler_override: ch.fractional_doppler_override,
            delta_nu_hz: geometry.delta_nu_hz(),
        };
        let taps = channel
            .sampled_profile()
            .map_err(|e| Error::config("channel", e.to_string()))?;
        let memory = taps.last().map_or(0, |(d, _)| *d);
        let cp = *self.cp_len.get_or_insert(memory);
        if cp > mn {
            return Err(Error::config("cp_len", format!("cp_len={cp} exceeds M·N={mn}")));
        }
        if cp < memory && self.schemes.contains(&SchemeKind::Otfs) && !exp.transmit_only() {
            warnings.push(format!(
                "cp_len={cp} is shorter than the channel memory of {memory} samples; OTFS runs out of contract"
            ));
        }
        let geometry = geometry.with_cp(cp);

        let p = &self.psd;
        if p.oversample == 0 {
            return Err(Error::config("psd.oversample", "must be positive"));
        }
        if p.segment < 2 {
            return Err(Error::config("psd.segment", "must be at least 2"));
        }
        if !(0.0..1.0).contains(&p.overlap) {
            return Err(Error::config("psd.overlap", "must lie in [0, 1)"));
        }
        let [lo, hi] = p.offset_band;
        if !(lo >= 0.0 && hi > lo && hi <= p.oversample as f64 / 2.0) {
            return Err(Error::config(
                "psd.offset_band",
                format!("need 0 ≤ lo < hi ≤ oversample/2, got [{lo}, {hi}]"),
            ));
        }
        let [wm, wn] = self.leakage.half_widths;
        if 2 * wm + 1 > self.m || 2 * wn + 1 > self.n {
            return Err(Error::config(
                "leakage.half_widths",
                format!("a {}x{} window does not fit the {}x{} grid", 2 * wm + 1, 2 * wn + 1, self.m, self.n),
            ));
        }
        let centre = *self.leakage.centre.get_or_insert([self.m / 2, self.n / 2]);
        if centre[0] >= self.m || centre[1] >= self.n {
            return Err(Error::config("leakage.centre", "outside the delay-Doppler grid"));
        }
        if self.sidelobes.oversample < 2 {
            return Err(Error::config("sidelobes.oversample", "must be at least 2"));
        }

        Ok(RunPlan {
            config: self,
            geometry,
            channel,
            warnings,
        })
    }
}
