//! TOML run configuration. Every section is optional and rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::downlink::{LinkGeometry, ReceiverParams, EARTH_MU, EARTH_RADIUS};
use crate::error::{Error, Result};
use crate::keyrate::{Attack, FixedChannel, NoiseTrust, ProtocolParams, Scenario};
use crate::optimize::{AttenuationSearch, OptimizationBounds, Protocol};
use crate::pass::{AngleSampling, PassConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub attack: Attack,
    pub noise_trust: NoiseTrust,
    pub excess_noise: f64,
    pub clock_rate: f64,
    /// Fixed variances; when absent the rate is optimized over them.
    pub signal_variance: Option<f64>,
    pub modulation_variance: Option<f64>,
    pub reconciliation_efficiency: f64,
    pub smoothing: f64,
    pub key_fraction: f64,
    /// Duration of a fixed-channel block, s.
    pub block_duration: f64,
    pub asymptotic: bool,
    pub seed: u64,
    pub channel: ChannelSection,
    pub geometry: GeometrySection,
    pub receiver: ReceiverSection,
    pub pass: PassSection,
    pub optimizer: OptimizerSection,
    pub table: TableSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = ProtocolParams::default();
        Self {
            protocol: Protocol::Coherent,
            attack: Attack::Collective,
            noise_trust: NoiseTrust::Untrusted,
            excess_noise: 1e-4,
            clock_rate: 1e9,
            signal_variance: None,
            modulation_variance: None,
            reconciliation_efficiency: p.reconciliation_efficiency,
            smoothing: p.smoothing,
            key_fraction: p.key_fraction,
            block_duration: 300.0,
            asymptotic: false,
            seed: 0,
            channel: ChannelSection::default(),
            geometry: GeometrySection::default(),
            receiver: ReceiverSection::default(),
            pass: PassSection::default(),
            optimizer: OptimizerSection::default(),
            table: TableSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub attenuation_db: Option<f64>,
    pub transmittance: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub altitudes_km: Vec<f64>,
    pub max_zenith_deg: f64,
    pub earth_radius: f64,
    pub mu: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            altitudes_km: (2..=20).map(|k| f64::from(k) * 100.0).collect(),
            max_zenith_deg: 70.0,
            earth_radius: EARTH_RADIUS,
            mu: EARTH_MU,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceiverSection {
    pub aperture_radius: f64,
    pub detector_efficiency: f64,
    pub zenith_extinction: f64,
    pub pointing_accuracy: f64,
    pub divergence: f64,
    pub wavelength: f64,
}

impl Default for ReceiverSection {
    fn default() -> Self {
        let r = ReceiverParams::default();
        Self {
            aperture_radius: r.aperture_radius,
            detector_efficiency: r.detector_efficiency,
            zenith_extinction: r.zenith_extinction,
            pointing_accuracy: r.pointing_accuracy,
            divergence: r.divergence,
            wavelength: r.wavelength,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PassSection {
    pub angle_sampling: AngleSampling,
    pub grid_points: usize,
    pub segments: usize,
    pub mc_samples_per_point: usize,
}

impl Default for PassSection {
    fn default() -> Self {
        let c = PassConfig::default();
        Self {
            angle_sampling: c.angle_sampling,
            grid_points: c.grid_points,
            segments: c.segments,
            mc_samples_per_point: c.mc_samples_per_point,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub vm_min: f64,
    pub vm_max: f64,
    pub vs_min: f64,
    pub vs_max: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let b = OptimizationBounds::default();
        Self {
            vm_min: b.vm_min,
            vm_max: b.vm_max,
            vs_min: b.vs_min,
            vs_max: b.vs_max,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableSection {
    pub clock_rates: Vec<f64>,
    pub max_db: f64,
    pub resolution_db: f64,
}

impl Default for TableSection {
    fn default() -> Self {
        let s = AttenuationSearch::default();
        Self {
            clock_rates: vec![1e8, 1e9, 1e10],
            max_db: s.max_db,
            resolution_db: s.resolution_db,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

fn config_error(field: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {reason}"))
}

/// Re-labels a domain validation error with its config field path.
fn in_section(section: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::InvalidParameter { name, reason } => {
            config_error(&format!("{section}{name}"), reason)
        }
        other => other,
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Range checks on every field; run at parse time.
    pub fn validate(&self) -> Result<()> {
        let p = self.protocol_params(
            self.signal_variance.unwrap_or(1.0),
            self.modulation_variance.unwrap_or(1.0),
        );
        p.validate().map_err(in_section(""))?;
        if self.protocol == Protocol::Coherent && self.signal_variance.is_some_and(|v| v != 1.0) {
            return Err(config_error(
                "signal_variance",
                "the coherent protocol requires 1.0",
            ));
        }
        if !(self.excess_noise >= 0.0 && self.excess_noise.is_finite()) {
            return Err(config_error("excess_noise", "must be >= 0"));
        }
        if !(self.clock_rate > 0.0 && self.clock_rate.is_finite()) {
            return Err(config_error("clock_rate", "must be positive"));
        }
        if !(self.block_duration > 0.0 && self.block_duration.is_finite()) {
            return Err(config_error("block_duration", "must be positive"));
        }
        match (self.channel.attenuation_db, self.channel.transmittance) {
            (Some(_), Some(_)) => {
                return Err(config_error(
                    "channel",
                    "give attenuation_db or transmittance, not both",
                ))
            }
            (Some(db), None) if !(db >= 0.0 && db.is_finite()) => {
                return Err(config_error("channel.attenuation_db", "must be >= 0"))
            }
            (None, Some(t)) if !(t > 0.0 && t <= 1.0) => {
                return Err(config_error("channel.transmittance", "must lie in (0, 1]"))
            }
            _ => {}
        }
        if self.geometry.altitudes_km.is_empty() {
            return Err(config_error("geometry.altitudes_km", "must not be empty"));
        }
        for &h in &self.geometry.altitudes_km {
            self.link_geometry(h).map_err(in_section("geometry."))?;
        }
        self.receiver_params()
            .validate()
            .map_err(in_section("receiver."))?;
        self.pass_config().validate().map_err(in_section("pass."))?;
        self.bounds().validate().map_err(in_section("optimizer."))?;
        if self.table.clock_rates.is_empty()
            || self
                .table
                .clock_rates
                .iter()
                .any(|&f| !(f > 0.0 && f.is_finite()))
        {
            return Err(config_error(
                "table.clock_rates",
                "must be a non-empty list of positive rates",
            ));
        }
        if !(self.table.max_db > 0.0 && self.table.resolution_db > 0.0) {
            return Err(config_error(
                "table",
                "max_db and resolution_db must be positive",
            ));
        }
        Ok(())
    }

    pub fn scenario(&self) -> Scenario {
        Scenario::new(self.attack, self.noise_trust)
    }

    pub fn protocol_params(
        &self,
        signal_variance: f64,
        modulation_variance: f64,
    ) -> ProtocolParams {
        ProtocolParams {
            signal_variance,
            modulation_variance,
            reconciliation_efficiency: self.reconciliation_efficiency,
            scenario: self.scenario(),
            smoothing: self.smoothing,
            key_fraction: self.key_fraction,
        }
    }

    /// Variances fixed by the config, if both are given (or implied).
    pub fn fixed_variances(&self) -> Option<(f64, f64)> {
        let vs = match self.protocol {
            Protocol::Coherent => Some(self.signal_variance.unwrap_or(1.0)),
            Protocol::Squeezed => self.signal_variance,
        };
        Some((vs?, self.modulation_variance?))
    }

    pub fn fixed_channel(&self) -> Result<FixedChannel> {
        match (self.channel.attenuation_db, self.channel.transmittance) {
            (Some(db), None) => FixedChannel::from_attenuation_db(db, self.excess_noise),
            (None, Some(t)) => FixedChannel::new(t, self.excess_noise),
            _ => Err(config_error(
                "channel",
                "set attenuation_db or transmittance",
            )),
        }
    }

    pub fn link_geometry(&self, altitude_km: f64) -> Result<LinkGeometry> {
        let g = LinkGeometry {
            altitude: altitude_km * 1e3,
            earth_radius: self.geometry.earth_radius,
            mu: self.geometry.mu,
            max_zenith: self.geometry.max_zenith_deg.to_radians(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn receiver_params(&self) -> ReceiverParams {
        let r = &self.receiver;
        ReceiverParams {
            aperture_radius: r.aperture_radius,
            detector_efficiency: r.detector_efficiency,
            zenith_extinction: r.zenith_extinction,
            pointing_accuracy: r.pointing_accuracy,
            divergence: r.divergence,
            wavelength: r.wavelength,
        }
    }

    pub fn pass_config(&self) -> PassConfig {
        PassConfig {
            clock_rate: self.clock_rate,
            angle_sampling: self.pass.angle_sampling,
            grid_points: self.pass.grid_points,
            segments: self.pass.segments,
            mc_samples_per_point: self.pass.mc_samples_per_point,
        }
    }

    pub fn bounds(&self) -> OptimizationBounds {
        OptimizationBounds {
            vm_min: self.optimizer.vm_min,
            vm_max: self.optimizer.vm_max,
            vs_min: self.optimizer.vs_min,
            vs_max: self.optimizer.vs_max,
            ..OptimizationBounds::default()
        }
    }

    pub fn attenuation_search(&self, clock_rate: f64) -> AttenuationSearch {
        AttenuationSearch {
            clock_rate,
            block_duration: self.block_duration,
            excess_noise: self.excess_noise,
            max_db: self.table.max_db,
            resolution_db: self.table.resolution_db,
            asymptotic: self.asymptotic,
            ..AttenuationSearch::default()
        }
    }
}
