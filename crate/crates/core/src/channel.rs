//! Linear time-varying tapped-delay-line channel.
//!
//! Tap `l` has an integer delay `τ_l` (samples) and a gain sequence
//! `g_l[i]` over the absolute sample index, so `y[i] = Σ_l g_l[i]·x[i - τ_l]`
//! and `[H]_{i,j} = h[i - j, i]`.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FrameGeometry;
use crate::matrix::ComplexMatrix;
use crate::C64;

pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// 3GPP TDL-C: normalized delay, power in dB.
#[allow(clippy::approx_constant)]
const TDL_C: [(f64, f64); 24] = [
    (0.0, -4.4),
    (0.2099, -1.2),
    (0.2219, -3.5),
    (0.2329, -5.2),
    (0.2176, -2.5),
    (0.6366, 0.0),
    (0.6448, -2.2),
    (0.6560, -3.9),
    (0.6584, -7.4),
    (0.7935, -7.1),
    (0.8213, -10.7),
    (0.9336, -11.1),
    (1.2285, -5.1),
    (1.3083, -6.8),
    (2.1704, -8.7),
    (2.7105, -13.2),
    (4.2589, -13.9),
    (4.6003, -13.9),
    (5.4902, -15.8),
    (5.6077, -17.1),
    (6.3065, -16.0),
    (6.6374, -15.7),
    (7.0427, -21.6),
    (8.6523, -22.8),
];

const JAKES_SINUSOIDS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Profile {
    TdlC,
    SinglePath,
    Custom { delays_s: Vec<f64>, powers_db: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DopplerModel {
    SingleShiftPerTap,
    JakesSumOfSinusoids,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub profile: Profile,
    pub carrier_hz: f64,
    pub speed_mps: f64,
    pub bandwidth_hz: f64,
    pub delay_spread_s: f64,
    pub n_taps: usize,
    pub doppler_model: DopplerModel,
    /// Pins every tap's Doppler to `q·Δν`.
    pub fractional_doppler_override: Option<f64>,
    /// Doppler resolution Δν used by the override.
    pub delta_nu_hz: f64,
}

impl ChannelConfig {
    /// TDL-C, 5.9 GHz, 500 km/h, 300 ns delay spread, five taps.
    pub fn reference(geom: &FrameGeometry) -> Self {
        ChannelConfig {
            profile: Profile::TdlC,
            carrier_hz: 5.9e9,
            speed_mps: 500.0 / 3.6,
            bandwidth_hz: geom.bandwidth_hz(),
            delay_spread_s: 300e-9,
            n_taps: 5,
            doppler_model: DopplerModel::SingleShiftPerTap,
            fractional_doppler_override: None,
            delta_nu_hz: geom.delta_nu_hz(),
        }
    }

    /// One unit tap at zero delay whose Doppler is `q·Δν`.
    pub fn single_path(geom: &FrameGeometry, q: f64) -> Self {
        ChannelConfig {
            profile: Profile::SinglePath,
            n_taps: 1,
            speed_mps: 0.0,
            fractional_doppler_override: Some(q),
            ..Self::reference(geom)
        }
    }

    pub fn identity(geom: &FrameGeometry) -> Self {
        ChannelConfig {
            fractional_doppler_override: None,
            ..Self::single_path(geom, 0.0)
        }
    }

    /// ν_max = f_c·v/c.
    pub fn max_doppler_hz(&self) -> f64 {
        self.carrier_hz * self.speed_mps / SPEED_OF_LIGHT
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Channel(format!("{name} must be positive (got {v})")))
            }
        };
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("carrier_hz", self.carrier_hz)?;
        positive("delta_nu_hz", self.delta_nu_hz)?;
        if !(self.speed_mps.is_finite() && self.speed_mps >= 0.0) {
            return Err(Error::Channel(format!("speed must be nonnegative (got {})", self.speed_mps)));
        }
        if !(self.delay_spread_s.is_finite() && self.delay_spread_s >= 0.0) {
            return Err(Error::Channel("delay spread must be nonnegative".into()));
        }
        if self.n_taps == 0 {
            return Err(Error::Channel("at least one tap is required".into()));
        }
        Ok(())
    }

    /// Quantized power-delay profile: (delay in samples, linear power),
    /// strongest `n_taps` kept, sorted by delay, unit total power.
    pub fn sampled_profile(&self) -> Result<Vec<(usize, f64)>> {
        self.validate()?;
        let raw: Vec<(f64, f64)> = match &self.profile {
            Profile::SinglePath => vec![(0.0, 0.0)],
            Profile::TdlC => TDL_C
                .iter()
                .map(|(d, p)| (d * self.delay_spread_s, *p))
                .collect(),
            Profile::Custom { delays_s, powers_db } => {
                if delays_s.len() != powers_db.len() || delays_s.is_empty() {
                    return Err(Error::Channel(
                        "custom profile needs equally many delays and powers".into(),
                    ));
                }
                if delays_s.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                    return Err(Error::Channel("custom delays must be nonnegative".into()));
                }
                delays_s.iter().copied().zip(powers_db.iter().copied()).collect()
            }
        };
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for (delay_s, p_db) in raw {
            let sample = (delay_s * self.bandwidth_hz).round() as usize;
            let p = 10f64.powf(p_db / 10.0);
            match merged.iter_mut().find(|(s, _)| *s == sample) {
                Some(entry) => entry.1 += p,
                None => merged.push((sample, p)),
            }
        }
        if self.n_taps > merged.len() {
            return Err(Error::Channel(format!(
                "{} taps requested but the sampled profile has only {}",
                self.n_taps,
                merged.len()
            )));
        }
        merged.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        merged.truncate(self.n_taps);
        merged.sort_by_key(|(s, _)| *s);
        let total: f64 = merged.iter().map(|(_, p)| p).sum();
        Ok(merged.into_iter().map(|(s, p)| (s, p / total)).collect())
    }
}

/// One channel draw covering `span` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvChannelRealization {
    delays: Vec<usize>,
    gains: Vec<Vec<C64>>,
    doppler_hz: Vec<f64>,
    noise_var: f64,
    seed: u64,
}

pub fn generate_channel(config: &ChannelConfig, seed: u64, span: usize) -> Result<LtvChannelRealization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ch = generate_channel_with(config, &mut rng, span)?;
    ch.seed = seed;
    Ok(ch)
}

/// Draws a realization from an existing random stream (seed recorded as 0).
pub fn generate_channel_with<R: Rng + ?Sized>(
    config: &ChannelConfig,
    rng: &mut R,
    span: usize,
) -> Result<LtvChannelRealization> {
    let profile = config.sampled_profile()?;
    let max_delay = profile.last().map_or(0, |(s, _)| *s);
    if span <= max_delay {
        return Err(Error::Channel(format!(
            "span of {span} samples does not cover the channel memory of {}",
            max_delay + 1
        )));
    }
    let dt = 1.0 / config.bandwidth_hz;
    let nu_max = config.max_doppler_hz();
    let deterministic = config.profile == Profile::SinglePath;
    let mut delays = Vec::with_capacity(profile.len());
    let mut gains = Vec::with_capacity(profile.len());
    let mut doppler_hz = Vec::with_capacity(profile.len());
    for (delay, power) in profile {
        let amp = power.sqrt();
        let (phase, theta) = if deterministic {
            (0.0, 0.0)
        } else {
            (rng.random::<f64>() * 2.0 * PI, rng.random::<f64>() * 2.0 * PI)
        };
        let pinned = config.fractional_doppler_override.map(|q| q * config.delta_nu_hz);
        let g: Vec<C64> = match (config.doppler_model, pinned) {
            (DopplerModel::JakesSumOfSinusoids, None) if !deterministic => {
                let comps: Vec<(f64, f64)> = (0..JAKES_SINUSOIDS)
                    .map(|k| {
                        let angle = (2.0 * PI * k as f64 + theta) / JAKES_SINUSOIDS as f64;
                        (nu_max * angle.cos(), rng.random::<f64>() * 2.0 * PI)
                    })
                    .collect();
                doppler_hz.push(nu_max);
                let norm = amp / (JAKES_SINUSOIDS as f64).sqrt();
                (0..span)
                    .map(|i| {
                        comps
                            .iter()
                            .map(|(nu, ph)| C64::from_polar(norm, 2.0 * PI * nu * i as f64 * dt + ph))
                            .sum()
                    })
                    .collect()
            }
            _ => {
                let nu = pinned.unwrap_or(nu_max * theta.cos());
                doppler_hz.push(nu);
                (0..span)
                    .map(|i| C64::from_polar(amp, 2.0 * PI * nu * i as f64 * dt + phase))
                    .collect()
            }
        };
        delays.push(delay);
        gains.push(g);
    }
    Ok(LtvChannelRealization {
        delays,
        gains,
        doppler_hz,
        noise_var: 0.0,
        seed: 0,
    })
}

impl LtvChannelRealization {
    /// Builds a realization from explicit tap sequences.
    pub fn from_taps(delays: Vec<usize>, gains: Vec<Vec<C64>>) -> Result<Self> {
        if delays.is_empty() || delays.len() != gains.len() {
            return Err(Error::Channel("need one gain sequence per tap".into()));
        }
        if delays.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Channel("tap delays must be strictly increasing".into()));
        }
        let span = gains[0].len();
        if gains.iter().any(|g| g.len() != span) || span <= *delays.last().unwrap() {
            return Err(Error::Channel("tap gain sequences must share a span covering the delays".into()));
        }
        let n = delays.len();
        Ok(LtvChannelRealization {
            delays,
            gains,
            doppler_hz: vec![0.0; n],
            noise_var: 0.0,
            seed: 0,
        })
    }

    /// Time-invariant taps.
    pub fn static_taps(delays: Vec<usize>, taps: &[C64], span: usize) -> Result<Self> {
        let gains = taps.iter().map(|t| vec![*t; span]).collect();
        Self::from_taps(delays, gains)
    }

    pub fn with_noise_var(mut self, sigma2: f64) -> Self {
        self.noise_var = sigma2;
        self
    }

    pub fn scaled(&self, c: C64) -> Self {
        let mut out = self.clone();
        for g in out.gains.iter_mut() {
            g.iter_mut().for_each(|v| *v *= c);
        }
        out
    }

    pub fn n_taps(&self) -> usize {
        self.delays.len()
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn doppler_hz(&self) -> &[f64] {
        &self.doppler_hz
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Channel memory, max delay + 1.
    pub fn len(&self) -> usize {
        self.delays.last().map_or(0, |d| d + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn span(&self) -> usize {
        self.gains[0].len()
    }

    /// Gain of tap `l` at sample `i`.
    pub fn gain(&self, l: usize, i: usize) -> C64 {
        self.gains[l][i]
    }

    /// `h[delay, i]`, zero off the tap set.
    pub fn h(&self, delay: usize, i: usize) -> C64 {
        self.delays
            .iter()
            .position(|d| *d == delay)
            .map_or(C64::new(0.0, 0.0), |l| self.gains[l][i])
    }

    /// Full channel output, length `len(x) + L - 1`.
    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        let out_len = x.len() + self.len() - 1;
        if out_len > self.span() {
            return Err(Error::Channel(format!(
                "input of {} samples needs a span of {out_len}, realization covers {}",
                x.len(),
                self.span()
            )));
        }
        let mut y = vec![C64::new(0.0, 0.0); out_len];
        for (d, g) in self.delays.iter().zip(&self.gains) {
            for (j, xv) in x.iter().enumerate() {
                y[j + d] += g[j + d] * xv;
            }
        }
        Ok(y)
    }

    /// `K × K` delay-time matrix `[H]_{i,j} = h[i - j, i]`.
    pub fn delay_time_matrix(&self, k: usize) -> Result<ComplexMatrix> {
        if k > self.span() {
            return Err(Error::Channel(format!(
                "matrix size {k} exceeds the realization span {}",
                self.span()
            )));
        }
        let mut h = ComplexMatrix::zeros(k, k);
        for (d, g) in self.delays.iter().zip(&self.gains) {
            for i in *d..k {
                h[(i, i - d)] = g[i];
            }
        }
        Ok(h)
    }

    /// Columnar text export: `tap delay sample re im`, one line per tap and
    /// sample.
    pub fn write_columns<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tap delay sample re im")?;
        for (l, (d, g)) in self.delays.iter().zip(&self.gains).enumerate() {
            for (i, v) in g.iter().enumerate() {
                writeln!(w, "{l} {d} {i} {:.17e} {:.17e}", v.re, v.im)?;
            }
        }
        Ok(())
    }
}

/// Circular complex Gaussian samples of unit variance.
pub fn unit_noise<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re * s, im * s)
        })
        .collect()
}

/// Adds circular complex Gaussian noise of per-sample variance `sigma2`.
pub fn add_awgn(x: &[C64], sigma2: f64, seed: u64) -> Result<Vec<C64>> {
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::Numerical(format!("noise variance {sigma2} is invalid")));
    }
    if sigma2 == 0.0 {
        return Ok(x.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = sigma2.sqrt();
    Ok(x.iter()
        .zip(unit_noise(x.len(), &mut rng))
        .map(|(a, n)| a + n * s)
        .collect())
}
