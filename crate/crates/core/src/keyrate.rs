//! Secure key rates of reverse-reconciled Gaussian protocols over a fixed channel.
//!
//! Leakage is bounded either by the Holevo quantity (collective attacks) or by
//! the Shannon information of an entangling-cloner eavesdropper (individual
//! attacks). With trusted noise only the channel loss is attributed to Eve.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{
    apply_averaged_channel, attach_trusted_noise, condition_on_measurement,
    condition_on_noisy_homodyne, purify, squeezed_purification_cm, tmsv_cm, von_neumann_entropy,
    CovMatrix, MeasurementKind,
};

/// Transmittance used in place of a perfect channel when untrusted noise is present.
pub const UNIT_TRANSMITTANCE_CLAMP: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attack {
    Individual,
    Collective,
}

/// Whether the channel excess noise is under the eavesdropper's control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseTrust {
    /// Passive eavesdropping: excess noise is out of Eve's reach.
    Trusted,
    /// Active eavesdropping: Eve holds the purification of all channel noise.
    Untrusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Scenario {
    pub attack: Attack,
    pub noise_trust: NoiseTrust,
}

impl Scenario {
    pub const ACTIVE_COLLECTIVE: Scenario =
        Scenario::new(Attack::Collective, NoiseTrust::Untrusted);
    pub const PASSIVE_COLLECTIVE: Scenario = Scenario::new(Attack::Collective, NoiseTrust::Trusted);
    pub const ACTIVE_INDIVIDUAL: Scenario =
        Scenario::new(Attack::Individual, NoiseTrust::Untrusted);
    pub const PASSIVE_INDIVIDUAL: Scenario = Scenario::new(Attack::Individual, NoiseTrust::Trusted);

    /// The four security assumptions, strictest first.
    pub const ALL: [Scenario; 4] = [
        Self::ACTIVE_COLLECTIVE,
        Self::PASSIVE_COLLECTIVE,
        Self::ACTIVE_INDIVIDUAL,
        Self::PASSIVE_INDIVIDUAL,
    ];

    pub const fn new(attack: Attack, noise_trust: NoiseTrust) -> Self {
        Self {
            attack,
            noise_trust,
        }
    }

    pub fn label(&self) -> &'static str {
        match (self.noise_trust, self.attack) {
            (NoiseTrust::Untrusted, Attack::Collective) => "active-collective",
            (NoiseTrust::Trusted, Attack::Collective) => "passive-collective",
            (NoiseTrust::Untrusted, Attack::Individual) => "active-individual",
            (NoiseTrust::Trusted, Attack::Individual) => "passive-individual",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.label() == s)
            .ok_or_else(|| invalid("scenario", format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    /// x-quadrature variance of the signal state; 1 selects the coherent-state protocol.
    pub signal_variance: f64,
    pub modulation_variance: f64,
    /// Reconciliation efficiency β.
    pub reconciliation_efficiency: f64,
    pub scenario: Scenario,
    /// Smoothing parameter entering the finite-size correction.
    pub smoothing: f64,
    /// Fraction n/N of the block used for the key.
    pub key_fraction: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            signal_variance: 1.0,
            modulation_variance: 10.0,
            reconciliation_efficiency: 0.95,
            scenario: Scenario::ACTIVE_COLLECTIVE,
            smoothing: 1e-10,
            key_fraction: 0.5,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        let vs = self.signal_variance;
        if !(vs > 0.0 && vs <= 1.0) {
            return Err(invalid(
                "signal_variance",
                format!("must lie in (0, 1], got {vs}"),
            ));
        }
        let vm = self.modulation_variance;
        if !(vm >= 0.0 && vm.is_finite()) {
            return Err(invalid(
                "modulation_variance",
                format!("must be >= 0, got {vm}"),
            ));
        }
        let beta = self.reconciliation_efficiency;
        if !(0.0..=1.0).contains(&beta) {
            return Err(invalid(
                "reconciliation_efficiency",
                format!("must lie in [0, 1], got {beta}"),
            ));
        }
        if !(self.smoothing > 0.0 && self.smoothing < 1.0) {
            return Err(invalid(
                "smoothing",
                format!("must lie in (0, 1), got {}", self.smoothing),
            ));
        }
        if !(self.key_fraction > 0.0 && self.key_fraction < 1.0) {
            return Err(invalid(
                "key_fraction",
                format!("must lie in (0, 1), got {}", self.key_fraction),
            ));
        }
        Ok(())
    }

    pub fn is_coherent(&self) -> bool {
        self.signal_variance == 1.0
    }

    /// `V = V_S + V_M`, the x-variance of the sent mode.
    pub fn total_variance(&self) -> f64 {
        self.signal_variance + self.modulation_variance
    }

    pub fn with_variances(self, signal_variance: f64, modulation_variance: f64) -> Self {
        Self {
            signal_variance,
            modulation_variance,
            ..self
        }
    }

    pub fn with_scenario(self, scenario: Scenario) -> Self {
        Self { scenario, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedChannel {
    pub transmittance: f64,
    /// Excess noise referred to the channel output, SNU.
    pub excess_noise: f64,
}

impl FixedChannel {
    pub fn new(transmittance: f64, excess_noise: f64) -> Result<Self> {
        if !(transmittance > 0.0 && transmittance <= 1.0) {
            return Err(invalid(
                "transmittance",
                format!("must lie in (0, 1], got {transmittance}"),
            ));
        }
        if !(excess_noise >= 0.0 && excess_noise.is_finite()) {
            return Err(invalid(
                "excess_noise",
                format!("must be >= 0, got {excess_noise}"),
            ));
        }
        Ok(Self {
            transmittance,
            excess_noise,
        })
    }

    pub fn from_attenuation_db(db: f64, excess_noise: f64) -> Result<Self> {
        if !(db >= 0.0) {
            return Err(invalid("attenuation_db", format!("must be >= 0, got {db}")));
        }
        Self::new(10f64.powf(-db / 10.0), excess_noise)
    }

    pub fn attenuation_db(&self) -> f64 {
        -10.0 * self.transmittance.log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockSize {
    Finite(u64),
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyRateReport {
    /// Secure bits per channel use.
    pub key_rate: f64,
    pub mutual_info: f64,
    /// Holevo bound or Shannon leakage, depending on the attack class.
    pub leakage: f64,
    pub delta: f64,
    pub block_size: Option<u64>,
    pub key_block: Option<u64>,
    pub key_rate_per_second: Option<f64>,
    /// `(n/N)(β I_AB − leakage − δ)` before clipping at zero.
    pub raw_rate: f64,
}

impl KeyRateReport {
    pub fn with_clock_rate(self, clock_rate: f64) -> Self {
        Self {
            key_rate_per_second: Some(self.key_rate * clock_rate),
            ..self
        }
    }

    pub(crate) fn assemble(
        p: &ProtocolParams,
        mutual_info: f64,
        leakage: f64,
        block: BlockSize,
        weight_of: impl Fn(u64) -> f64,
    ) -> Result<Self> {
        let (delta, weight, block_size, key_block) = match block {
            BlockSize::Asymptotic => (0.0, weight_of(0), None, None),
            BlockSize::Finite(n_total) => {
                let n = key_block_size(n_total, p.key_fraction)?;
                (
                    finite_size_delta(n, p.smoothing),
                    weight_of(n),
                    Some(n_total),
                    Some(n),
                )
            }
        };
        let raw_rate = weight * (p.reconciliation_efficiency * mutual_info - leakage - delta);
        Ok(Self {
            key_rate: raw_rate.max(0.0),
            mutual_info,
            leakage,
            delta,
            block_size,
            key_block,
            key_rate_per_second: None,
            raw_rate,
        })
    }
}

/// `n = ⌊key_fraction · N⌋`, required to be at least 1.
pub fn key_block_size(block_size: u64, key_fraction: f64) -> Result<u64> {
    if block_size < 2 {
        return Err(invalid(
            "block_size",
            format!("must be >= 2, got {block_size}"),
        ));
    }
    let n = (key_fraction * block_size as f64).floor() as u64;
    if n == 0 {
        return Err(invalid("key_fraction", "leaves an empty key block"));
    }
    Ok(n)
}

/// Transmittance statistics seen by the trusted parties. A fixed channel has
/// `mean_sqrt_eta² = mean_eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ChannelMoments {
    pub mean_eta: f64,
    pub mean_sqrt_eta: f64,
    pub excess_noise: f64,
}

impl From<FixedChannel> for ChannelMoments {
    fn from(ch: FixedChannel) -> Self {
        Self {
            mean_eta: ch.transmittance,
            mean_sqrt_eta: ch.transmittance.sqrt(),
            excess_noise: ch.excess_noise,
        }
    }
}

/// Entanglement-based state of the protocol (mode 0 stays with the sender,
/// mode 1 enters the channel) and the sender-side measurement it implies.
pub(crate) fn purification(p: &ProtocolParams) -> Result<(CovMatrix, MeasurementKind)> {
    if p.is_coherent() {
        Ok((
            tmsv_cm(1.0 + p.modulation_variance)?,
            MeasurementKind::Heterodyne,
        ))
    } else {
        Ok((
            squeezed_purification_cm(p.signal_variance, p.modulation_variance)?,
            MeasurementKind::HomodyneX,
        ))
    }
}

/// State held by the trusted parties after the channel. With trusted noise the
/// output carries two extra noise modes; Eve purifies everything else.
pub(crate) fn channel_output(p: &ProtocolParams, ch: &ChannelMoments) -> Result<CovMatrix> {
    let (state, _) = purification(p)?;
    match p.scenario.noise_trust {
        NoiseTrust::Untrusted => {
            apply_averaged_channel(&state, 1, ch.mean_eta, ch.mean_sqrt_eta, ch.excess_noise)
        }
        NoiseTrust::Trusted => {
            let lossy = apply_averaged_channel(&state, 1, ch.mean_eta, ch.mean_sqrt_eta, 0.0)?;
            attach_trusted_noise(&lossy, 1, ch.excess_noise)
        }
    }
}

/// `S(γ) − S(γ | x-homodyne on mode 1)`.
pub(crate) fn holevo_of_state(state: &CovMatrix) -> Result<f64> {
    let conditional = condition_on_measurement(state, 1, MeasurementKind::HomodyneX)?;
    Ok((von_neumann_entropy(state)? - von_neumann_entropy(&conditional)?).max(0.0))
}

/// `½ log₂(V_B / V_{B|A})` read off the channel output (noise untrusted form).
pub(crate) fn mutual_info_of_moments(p: &ProtocolParams, ch: &ChannelMoments) -> Result<f64> {
    let (state, alice) = purification(p)?;
    let out = apply_averaged_channel(&state, 1, ch.mean_eta, ch.mean_sqrt_eta, ch.excess_noise)?;
    let v_b = out.variance(1, false);
    let v_b_given_a = condition_on_measurement(&out, 0, alice)?.variance(0, false);
    Ok(0.5 * (v_b / v_b_given_a).log2())
}

/// Entangling-cloner leakage for general transmittance moments. Effective loss is
/// `T = ⟨√η⟩²`; everything Bob sees beyond `T` is untrusted noise except the
/// trusted share of ε in the passive scenario.
pub(crate) fn cloner_leakage(p: &ProtocolParams, ch: &ChannelMoments) -> f64 {
    let v = p.total_variance();
    let t = ch.mean_sqrt_eta * ch.mean_sqrt_eta;
    let v_b = ch.mean_eta * (v - 1.0) + 1.0 + ch.excess_noise;
    let trusted = match p.scenario.noise_trust {
        NoiseTrust::Trusted => ch.excess_noise,
        NoiseTrust::Untrusted => 0.0,
    };
    let untrusted = v_b - 1.0 - t * (v - 1.0) - trusted;
    let v_b_given_e = 1.0 / (t / v + 1.0 - t + untrusted) + trusted;
    (0.5 * (v_b / v_b_given_e).log2()).max(0.0)
}

/// Shannon information between the trusted parties for Gaussian data.
pub fn mutual_info_ab(p: &ProtocolParams, ch: &FixedChannel) -> f64 {
    let eta = ch.transmittance;
    let noise = eta * p.signal_variance + 1.0 - eta + ch.excess_noise;
    0.5 * (eta * p.modulation_variance / noise).ln_1p() / std::f64::consts::LN_2
}

/// Holevo bound on Eve's information about Bob's x-quadrature data.
pub fn holevo_bound(p: &ProtocolParams, ch: &FixedChannel) -> Result<f64> {
    if p.scenario.attack != Attack::Collective {
        return Err(invalid(
            "attack",
            "Holevo bound applies to collective attacks",
        ));
    }
    collective_leakage(p, &ChannelMoments::from(*ch))
}

/// Holevo information of Eve on Bob's x-homodyne outcome.
///
/// With trusted noise Eve holds the purification of the loss-only state and
/// the noise enters only as extra classical variance on Bob's outcome. This
/// is the zero-coupling limit of [`channel_output`], which needs a thermal
/// ancilla of variance ~ε/(1−T) that f64 cannot keep pure.
pub(crate) fn collective_leakage(p: &ProtocolParams, ch: &ChannelMoments) -> Result<f64> {
    match p.scenario.noise_trust {
        NoiseTrust::Untrusted => holevo_of_state(&channel_output(p, ch)?),
        NoiseTrust::Trusted => {
            let (state, _) = purification(p)?;
            let lossy = apply_averaged_channel(&state, 1, ch.mean_eta, ch.mean_sqrt_eta, 0.0)?;
            let full = purify(&lossy)?;
            let eve = 2..4;
            let marginal = full.reduce(eve.clone())?;
            let conditional = condition_on_noisy_homodyne(&full, 1, ch.excess_noise, eve)?;
            Ok((von_neumann_entropy(&marginal)? - von_neumann_entropy(&conditional)?).max(0.0))
        }
    }
}

/// Bob–Eve Shannon information under the entangling-cloner attack.
pub fn individual_leakage(p: &ProtocolParams, ch: &FixedChannel) -> Result<f64> {
    if p.scenario.attack != Attack::Individual {
        return Err(invalid(
            "attack",
            "cloner leakage applies to individual attacks",
        ));
    }
    if p.scenario.noise_trust == NoiseTrust::Untrusted
        && ch.transmittance >= 1.0
        && ch.excess_noise > 0.0
    {
        return Err(invalid(
            "transmittance",
            "a unit-transmittance channel cannot carry untrusted noise through a cloner",
        ));
    }
    Ok(cloner_leakage(p, &ChannelMoments::from(*ch)))
}

/// `δ(n) = 7 √(log₂(2/ε̄) / n)`.
pub fn finite_size_delta(n: u64, smoothing: f64) -> f64 {
    7.0 * ((2.0 / smoothing).log2() / n as f64).sqrt()
}

pub fn key_rate(p: &ProtocolParams, ch: &FixedChannel, block: BlockSize) -> Result<KeyRateReport> {
    p.validate()?;
    let mut ch = *ch;
    if p.scenario.noise_trust == NoiseTrust::Untrusted
        && ch.transmittance >= 1.0
        && ch.excess_noise > 0.0
    {
        ch.transmittance = UNIT_TRANSMITTANCE_CLAMP;
    }
    let mutual_info = mutual_info_ab(p, &ch);
    let leakage = match p.scenario.attack {
        Attack::Collective => holevo_bound(p, &ch)?,
        Attack::Individual => individual_leakage(p, &ch)?,
    };
    let kf = p.key_fraction;
    KeyRateReport::assemble(p, mutual_info, leakage, block, |n| match block {
        BlockSize::Asymptotic => kf,
        BlockSize::Finite(total) => n as f64 / total as f64,
    })
}
