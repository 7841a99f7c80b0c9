//! Single satellite pass: zenith sweep, fading statistics and segmented key rates.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::downlink::{
    beam_geometry, orbit_central_angle, static_transmittance, time_in_view, LinkGeometry,
    ReceiverParams,
};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{apply_averaged_channel, CovMatrix};
use crate::keyrate::{
    cloner_leakage, collective_leakage, key_block_size, mutual_info_of_moments, Attack, BlockSize,
    ChannelMoments, KeyRateReport, ProtocolParams,
};

pub const MIN_GRID_POINTS: usize = 10;
const JENSEN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AngleSampling {
    /// Equal time steps along the orbit.
    UniformTime,
    /// Equal zenith-angle steps.
    UniformZenith,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassConfig {
    pub clock_rate: f64,
    pub angle_sampling: AngleSampling,
    pub grid_points: usize,
    pub segments: usize,
    /// Monte Carlo draws per grid point; 0 selects quadrature moments.
    pub mc_samples_per_point: usize,
}

impl Default for PassConfig {
    fn default() -> Self {
        Self {
            clock_rate: 1e9,
            angle_sampling: AngleSampling::UniformTime,
            grid_points: 721,
            segments: 1,
            mc_samples_per_point: 0,
        }
    }
}

impl PassConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clock_rate > 0.0 && self.clock_rate.is_finite()) {
            return Err(invalid(
                "clock_rate",
                format!("must be positive, got {}", self.clock_rate),
            ));
        }
        if self.grid_points < MIN_GRID_POINTS {
            return Err(invalid(
                "grid_points",
                format!("must be >= {MIN_GRID_POINTS}, got {}", self.grid_points),
            ));
        }
        if self.segments == 0 {
            return Err(invalid("segments", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FadingStats {
    pub mean_eta: f64,
    pub mean_sqrt_eta: f64,
    pub points: usize,
    /// Dwell time, s.
    pub duration: f64,
}

impl FadingStats {
    pub fn deterministic(eta: f64, duration: f64) -> Self {
        Self {
            mean_eta: eta,
            mean_sqrt_eta: eta.sqrt(),
            points: 1,
            duration,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_eta > 0.0 && self.mean_eta <= 1.0) {
            return Err(invalid(
                "mean_eta",
                format!("must lie in (0, 1], got {}", self.mean_eta),
            ));
        }
        if !(self.mean_sqrt_eta > 0.0)
            || self.mean_sqrt_eta * self.mean_sqrt_eta > self.mean_eta * (1.0 + JENSEN_SLACK)
        {
            return Err(invalid(
                "mean_sqrt_eta",
                format!(
                    "<sqrt eta>^2 = {} exceeds <eta> = {}",
                    self.mean_sqrt_eta * self.mean_sqrt_eta,
                    self.mean_eta
                ),
            ));
        }
        Ok(())
    }

    pub fn mean_loss_db(&self) -> f64 {
        -10.0 * self.mean_eta.log10()
    }

    fn moments(&self, excess_noise: f64) -> ChannelMoments {
        ChannelMoments {
            mean_eta: self.mean_eta,
            mean_sqrt_eta: self.mean_sqrt_eta,
            excess_noise,
        }
    }
}

/// A band `lower < |ζ| ≤ upper` of the pass (the innermost band includes 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub lower_zenith: f64,
    pub upper_zenith: f64,
    pub stats: FadingStats,
    pub block_size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentStats {
    segments: Vec<Segment>,
    total_block: u64,
}

impl SegmentStats {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(invalid("segments", "at least one segment required"));
        }
        for s in &segments {
            s.stats.validate()?;
        }
        let total_block = segments.iter().map(|s| s.block_size).sum();
        Ok(Self {
            segments,
            total_block,
        })
    }

    /// One segment with a fixed transmittance.
    pub fn deterministic(eta: f64, block_size: u64) -> Result<Self> {
        Self::new(vec![Segment {
            lower_zenith: 0.0,
            upper_zenith: 0.0,
            stats: FadingStats::deterministic(eta, 0.0),
            block_size,
        }])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_block(&self) -> u64 {
        self.total_block
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.stats.duration).sum()
    }

    /// Whole-pass statistics, each segment weighted by dwell time.
    pub fn overall(&self) -> FadingStats {
        let total = self.duration();
        let weight = |s: &Segment| {
            if total > 0.0 {
                s.stats.duration / total
            } else {
                1.0 / self.segments.len() as f64
            }
        };
        FadingStats {
            mean_eta: self
                .segments
                .iter()
                .map(|s| weight(s) * s.stats.mean_eta)
                .sum(),
            mean_sqrt_eta: self
                .segments
                .iter()
                .map(|s| weight(s) * s.stats.mean_sqrt_eta)
                .sum(),
            points: self.segments.iter().map(|s| s.stats.points).sum(),
            duration: total,
        }
    }
}

/// Inverse of the orbit central angle on `[0, ζ_max]` by bisection.
fn zenith_for_central_angle(g: &LinkGeometry, alpha: f64) -> Result<f64> {
    let target = alpha.abs();
    let (mut lo, mut hi) = (0.0, g.max_zenith);
    if target > orbit_central_angle(g, hi) * (1.0 + 1e-12) {
        return Err(Error::Bracketing(format!(
            "central angle {alpha} outside the visible arc"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if orbit_central_angle(g, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * g.max_zenith {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).copysign(alpha))
}

fn zenith_grid(g: &LinkGeometry, cfg: &PassConfig) -> Result<Vec<f64>> {
    let n = cfg.grid_points;
    let frac = |i: usize| -1.0 + 2.0 * i as f64 / (n - 1) as f64;
    match cfg.angle_sampling {
        AngleSampling::UniformZenith => Ok((0..n).map(|i| frac(i) * g.max_zenith).collect()),
        AngleSampling::UniformTime => {
            let alpha_max = orbit_central_angle(g, g.max_zenith);
            (0..n)
                .map(|i| match i {
                    0 => Ok(-g.max_zenith),
                    _ if i == n - 1 => Ok(g.max_zenith),
                    _ => zenith_for_central_angle(g, frac(i) * alpha_max),
                })
                .collect()
        }
    }
}

fn band_index(zenith: f64, width: f64, bands: usize) -> usize {
    let raw = (zenith.abs() / width - 1e-9).ceil();
    (raw.max(1.0) as usize - 1).min(bands - 1)
}

/// Splits `total` into integer parts proportional to `weights` (largest remainder).
fn apportion(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut parts: Vec<u64> = exact.iter().map(|e| e.floor() as u64).collect();
    let assigned: u64 = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order
        .iter()
        .cycle()
        .take(total.saturating_sub(assigned) as usize)
    {
        parts[i] += 1;
    }
    parts
}

#[derive(Debug, Clone, Copy)]
struct PointSample {
    zenith: f64,
    mean_eta: f64,
    mean_sqrt_eta: f64,
}

fn sample_point(
    g: &LinkGeometry,
    r: &ReceiverParams,
    cfg: &PassConfig,
    seed: u64,
    index: usize,
    zenith: f64,
) -> Result<PointSample> {
    let beam = beam_geometry(g, r, zenith)?;
    let fixed = static_transmittance(r, zenith)?;
    let (atm_eta, atm_sqrt) = if cfg.mc_samples_per_point == 0 {
        let m = beam.moments()?;
        (m.mean_eta, m.mean_sqrt_eta)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let draws = beam.sample_with(&mut rng, cfg.mc_samples_per_point);
        let count = draws.len() as f64;
        (
            draws.iter().sum::<f64>() / count,
            draws.iter().map(|e| e.sqrt()).sum::<f64>() / count,
        )
    };
    Ok(PointSample {
        zenith,
        mean_eta: fixed * atm_eta,
        mean_sqrt_eta: fixed.sqrt() * atm_sqrt,
    })
}

/// Sweeps the pass and aggregates fading statistics per zenith band.
///
/// Grid point `i` draws Monte Carlo samples from `ChaCha8Rng::seed_from_u64(seed)`
/// on stream `i`, so results do not depend on thread scheduling.
pub fn simulate_pass(
    g: &LinkGeometry,
    r: &ReceiverParams,
    cfg: &PassConfig,
    seed: u64,
) -> Result<SegmentStats> {
    g.validate()?;
    r.validate()?;
    cfg.validate()?;
    let grid = zenith_grid(g, cfg)?;
    let samples = grid
        .par_iter()
        .enumerate()
        .map(|(i, &z)| sample_point(g, r, cfg, seed, i, z))
        .collect::<Result<Vec<_>>>()?;

    let bands = cfg.segments;
    let width = g.max_zenith / bands as f64;
    let mut sums = vec![(0.0, 0.0, 0usize); bands];
    for s in &samples {
        let acc = &mut sums[band_index(s.zenith, width, bands)];
        acc.0 += s.mean_eta;
        acc.1 += s.mean_sqrt_eta;
        acc.2 += 1;
    }

    let omega = g.angular_velocity();
    let dwell: Vec<f64> = (0..bands)
        .map(|k| {
            let lo = width * k as f64;
            let hi = if k + 1 == bands {
                g.max_zenith
            } else {
                width * (k + 1) as f64
            };
            2.0 * (orbit_central_angle(g, hi) - orbit_central_angle(g, lo)) / omega
        })
        .collect();
    let total_block = (cfg.clock_rate * time_in_view(g)).round() as u64;
    let blocks = apportion(total_block, &dwell);

    let segments = (0..bands)
        .map(|k| {
            let (se, sq, count) = sums[k];
            if count == 0 {
                return Err(invalid(
                    "grid_points",
                    format!("zenith band {k} received no grid points"),
                ));
            }
            Ok(Segment {
                lower_zenith: width * k as f64,
                upper_zenith: if k + 1 == bands {
                    g.max_zenith
                } else {
                    width * (k + 1) as f64
                },
                stats: FadingStats {
                    mean_eta: se / count as f64,
                    mean_sqrt_eta: sq / count as f64,
                    points: count,
                    duration: dwell[k],
                },
                block_size: blocks[k],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SegmentStats::new(segments)
}

/// Covariance matrix after a fading channel on `mode` with output excess noise `ε`.
pub fn fading_averaged_cm(
    cm: &CovMatrix,
    mode: usize,
    fs: &FadingStats,
    excess_noise: f64,
) -> Result<CovMatrix> {
    fs.validate()?;
    apply_averaged_channel(cm, mode, fs.mean_eta, fs.mean_sqrt_eta, excess_noise)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassReport {
    /// Bits per channel use over the whole pass.
    pub key_rate: f64,
    pub key_rate_per_second: Option<f64>,
    pub segments: Vec<KeyRateReport>,
}

impl PassReport {
    pub fn with_clock_rate(mut self, clock_rate: f64) -> Self {
        self.key_rate_per_second = Some(self.key_rate * clock_rate);
        self.segments = self
            .segments
            .into_iter()
            .map(|s| s.with_clock_rate(clock_rate))
            .collect();
        self
    }

    /// Quantity maximized by the optimizer: the rate when positive, otherwise
    /// the best unclipped segment rate, so the landscape is never flat.
    pub fn objective(&self) -> f64 {
        if self.key_rate > 0.0 {
            self.key_rate
        } else {
            self.segments
                .iter()
                .map(|s| s.raw_rate)
                .fold(f64::NEG_INFINITY, f64::max)
        }
    }
}

fn segment_report(
    p: &ProtocolParams,
    ch: &ChannelMoments,
    block: BlockSize,
    weight_of: impl Fn(u64) -> f64,
) -> Result<KeyRateReport> {
    let mutual_info = mutual_info_of_moments(p, ch)?;
    let leakage = match p.scenario.attack {
        Attack::Collective => collective_leakage(p, ch)?,
        Attack::Individual => cloner_leakage(p, ch),
    };
    KeyRateReport::assemble(p, mutual_info, leakage, block, weight_of)
}

/// Dwell-weighted sum of clipped per-segment key rates.
pub fn pass_key_rate(
    p: &ProtocolParams,
    stats: &SegmentStats,
    excess_noise: f64,
    asymptotic: bool,
) -> Result<PassReport> {
    p.validate()?;
    if !(excess_noise >= 0.0 && excess_noise.is_finite()) {
        return Err(invalid(
            "excess_noise",
            format!("must be >= 0, got {excess_noise}"),
        ));
    }
    let total = stats.total_block();
    if !asymptotic {
        key_block_size(total, p.key_fraction)?;
    }
    let segments = stats
        .segments()
        .iter()
        .map(|s| {
            let ch = s.stats.moments(excess_noise);
            if asymptotic {
                let share = if total > 0 {
                    s.block_size as f64 / total as f64
                } else {
                    1.0 / stats.segments().len() as f64
                };
                segment_report(p, &ch, BlockSize::Asymptotic, |_| p.key_fraction * share)
            } else {
                segment_report(p, &ch, BlockSize::Finite(s.block_size), |n| {
                    n as f64 / total as f64
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PassReport {
        key_rate: segments.iter().map(|s| s.key_rate).sum(),
        key_rate_per_second: None,
        segments,
    })
}
