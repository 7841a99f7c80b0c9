//! Variance optimization and threshold solvers.
//!
//! `V_M` is searched on a log grid and refined by golden section. For the
//! squeezed protocol an outer scan over `V_S` wraps the `V_M` search. The
//! objective is the unclipped rate so that insecure regions still carry slope.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::downlink::{LinkGeometry, ReceiverParams};
use crate::error::{invalid, Error, Result};
use crate::keyrate::{key_rate, BlockSize, FixedChannel, KeyRateReport, ProtocolParams};
use crate::pass::{pass_key_rate, simulate_pass, PassConfig, PassReport, SegmentStats};

const VM_GRID: usize = 25;
const VS_GRID: usize = 10;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationBounds {
    pub vm_min: f64,
    pub vm_max: f64,
    pub vs_min: f64,
    pub vs_max: f64,
    /// Rates at or below this are treated as zero.
    pub rate_tolerance: f64,
    /// Relative resolution of the variance search.
    pub parameter_tolerance: f64,
}

impl Default for OptimizationBounds {
    fn default() -> Self {
        Self {
            vm_min: 1e-3,
            vm_max: 1e3,
            vs_min: 0.1,
            vs_max: 1.0,
            rate_tolerance: 1e-12,
            parameter_tolerance: 1e-4,
        }
    }
}

impl OptimizationBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.vm_min > 0.0 && self.vm_min < self.vm_max && self.vm_max.is_finite()) {
            return Err(invalid("vm_range", "need 0 < vm_min < vm_max < inf"));
        }
        if !(self.vs_min > 0.0 && self.vs_min <= self.vs_max && self.vs_max <= 1.0) {
            return Err(invalid("vs_range", "need 0 < vs_min <= vs_max <= 1"));
        }
        if !(self.parameter_tolerance > 0.0 && self.rate_tolerance >= 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Coherent,
    Squeezed,
}

#[derive(Debug, Clone, Copy)]
pub enum RateTarget<'a> {
    Fixed {
        channel: FixedChannel,
        block: BlockSize,
    },
    Pass {
        stats: &'a SegmentStats,
        excess_noise: f64,
        asymptotic: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum RateReport {
    Fixed(KeyRateReport),
    Pass(PassReport),
}

impl RateReport {
    pub fn key_rate(&self) -> f64 {
        match self {
            RateReport::Fixed(r) => r.key_rate,
            RateReport::Pass(r) => r.key_rate,
        }
    }

    fn objective(&self) -> f64 {
        match self {
            RateReport::Fixed(r) => r.raw_rate,
            RateReport::Pass(r) => r.objective(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub signal_variance: f64,
    pub modulation_variance: f64,
    pub report: RateReport,
    /// No secure rate anywhere in the search box.
    pub insecure: bool,
    pub at_boundary: bool,
}

impl Optimum {
    pub fn key_rate(&self) -> f64 {
        self.report.key_rate()
    }
}

fn evaluate(p: &ProtocolParams, target: &RateTarget<'_>) -> Result<RateReport> {
    match *target {
        RateTarget::Fixed { channel, block } => key_rate(p, &channel, block).map(RateReport::Fixed),
        RateTarget::Pass {
            stats,
            excess_noise,
            asymptotic,
        } => pass_key_rate(p, stats, excess_noise, asymptotic).map(RateReport::Pass),
    }
}

/// Maximizes `f` on `[a, b]` to absolute resolution `tol`.
pub fn golden_section_max(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// Scan `grid`, then golden-section refine around the best node.
fn scan_and_refine(
    grid: &[f64],
    tol: f64,
    mut f: impl FnMut(f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    let mut values = Vec::with_capacity(grid.len());
    for &x in grid {
        values.push(f(x)?);
    }
    let best = values
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &v)| if v > values[acc] { i } else { acc });
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (x, fx) = golden_section_max(&mut f, lo, hi, tol)?;
    Ok(if fx > values[best] {
        (x, fx)
    } else {
        (grid[best], values[best])
    })
}

fn optimize_modulation(
    template: &ProtocolParams,
    signal_variance: f64,
    target: &RateTarget<'_>,
    bounds: &OptimizationBounds,
) -> Result<(f64, f64)> {
    let (lo, hi) = (bounds.vm_min.log10(), bounds.vm_max.log10());
    let grid: Vec<f64> = (0..VM_GRID)
        .map(|i| lo + (hi - lo) * i as f64 / (VM_GRID - 1) as f64)
        .collect();
    let tol = bounds.parameter_tolerance / std::f64::consts::LN_10;
    let (log_vm, value) = scan_and_refine(&grid, tol, |x| {
        let p = template.with_variances(signal_variance, 10f64.powf(x));
        Ok(evaluate(&p, target)?.objective())
    })?;
    Ok((10f64.powf(log_vm), value))
}

/// Maximizes the key rate over the free variances of `protocol`.
pub fn optimize_rate(
    template: &ProtocolParams,
    protocol: Protocol,
    target: &RateTarget<'_>,
    bounds: &OptimizationBounds,
) -> Result<Optimum> {
    bounds.validate()?;
    template.validate()?;
    let (vs, vm) = match protocol {
        Protocol::Coherent => (1.0, optimize_modulation(template, 1.0, target, bounds)?.0),
        Protocol::Squeezed => {
            let grid: Vec<f64> = (0..VS_GRID)
                .map(|i| {
                    let t = i as f64 / (VS_GRID - 1) as f64;
                    if i + 1 == VS_GRID {
                        bounds.vs_max
                    } else {
                        bounds.vs_min + (bounds.vs_max - bounds.vs_min) * t
                    }
                })
                .collect();
            let tol = bounds.parameter_tolerance * bounds.vs_max;
            let (vs, _) = scan_and_refine(&grid, tol, |vs| {
                Ok(optimize_modulation(template, vs, target, bounds)?.1)
            })?;
            let (vm, _) = optimize_modulation(template, vs, target, bounds)?;
            (vs, vm)
        }
    };
    let p = template.with_variances(vs, vm);
    let report = evaluate(&p, target)?;
    let rel = bounds.parameter_tolerance * 10.0;
    let at_boundary =
        (vm / bounds.vm_min - 1.0).abs() < rel || (vm / bounds.vm_max - 1.0).abs() < rel;
    Ok(Optimum {
        signal_variance: vs,
        modulation_variance: vm,
        insecure: report.key_rate() <= bounds.rate_tolerance,
        report,
        at_boundary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttenuationThreshold {
    pub db: f64,
    pub rounded: i64,
    /// No positive rate even at 0 dB.
    pub never_secure: bool,
    /// Still secure at the upper end of the search range.
    pub capped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttenuationSearch {
    pub clock_rate: f64,
    /// Block duration, s; `N = clock_rate · block_duration`.
    pub block_duration: f64,
    pub excess_noise: f64,
    pub max_db: f64,
    pub coarse_step_db: f64,
    pub resolution_db: f64,
    pub asymptotic: bool,
}

impl Default for AttenuationSearch {
    fn default() -> Self {
        Self {
            clock_rate: 1e9,
            block_duration: 300.0,
            excess_noise: 1e-4,
            max_db: 80.0,
            coarse_step_db: 10.0,
            resolution_db: 0.01,
            asymptotic: false,
        }
    }
}

impl AttenuationSearch {
    pub fn block_size(&self) -> BlockSize {
        if self.asymptotic {
            BlockSize::Asymptotic
        } else {
            BlockSize::Finite((self.clock_rate * self.block_duration).round() as u64)
        }
    }
}

/// Round half up to an integer.
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Largest fixed attenuation with an optimized positive rate.
pub fn tolerable_attenuation(
    template: &ProtocolParams,
    protocol: Protocol,
    search: &AttenuationSearch,
    bounds: &OptimizationBounds,
) -> Result<AttenuationThreshold> {
    if !(search.resolution_db > 0.0 && search.coarse_step_db > 0.0 && search.max_db > 0.0) {
        return Err(invalid(
            "attenuation_search",
            "steps and range must be positive",
        ));
    }
    let block = search.block_size();
    let secure = |db: f64| -> Result<bool> {
        let channel = FixedChannel::from_attenuation_db(db, search.excess_noise)?;
        let target = RateTarget::Fixed { channel, block };
        Ok(!optimize_rate(template, protocol, &target, bounds)?.insecure)
    };

    let steps = (search.max_db / search.coarse_step_db).ceil() as usize;
    let coarse: Vec<f64> = (0..=steps)
        .map(|i| (i as f64 * search.coarse_step_db).min(search.max_db))
        .collect();
    let verdicts = coarse
        .iter()
        .map(|&db| secure(db))
        .collect::<Result<Vec<_>>>()?;
    if let Some(i) = verdicts.windows(2).position(|w| !w[0] && w[1]) {
        return Err(Error::NonMonotone(format!(
            "optimized rate vanishes at {} dB but recovers at {} dB",
            coarse[i],
            coarse[i + 1]
        )));
    }
    let Some(last) = verdicts.iter().rposition(|&v| v) else {
        return Ok(AttenuationThreshold {
            db: 0.0,
            rounded: 0,
            never_secure: true,
            capped: false,
        });
    };
    if last + 1 == coarse.len() {
        return Ok(AttenuationThreshold {
            db: search.max_db,
            rounded: round_half_up(search.max_db),
            never_secure: false,
            capped: true,
        });
    }
    let (mut lo, mut hi) = (coarse[last], coarse[last + 1]);
    while hi - lo > search.resolution_db {
        let mid = 0.5 * (lo + hi);
        if secure(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(AttenuationThreshold {
        db: lo,
        rounded: round_half_up(lo),
        never_secure: false,
        capped: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseThreshold {
    pub excess_noise: f64,
    pub never_secure: bool,
    pub capped: bool,
}

pub const MAX_SEARCH_NOISE: f64 = 0.1;

/// Largest output excess noise with an optimized positive pass rate.
pub fn tolerable_noise(
    template: &ProtocolParams,
    protocol: Protocol,
    stats: &SegmentStats,
    asymptotic: bool,
    bounds: &OptimizationBounds,
) -> Result<NoiseThreshold> {
    let secure = |eps: f64| -> Result<bool> {
        let target = RateTarget::Pass {
            stats,
            excess_noise: eps,
            asymptotic,
        };
        Ok(!optimize_rate(template, protocol, &target, bounds)?.insecure)
    };
    if !secure(0.0)? {
        return Ok(NoiseThreshold {
            excess_noise: 0.0,
            never_secure: true,
            capped: false,
        });
    }
    if secure(MAX_SEARCH_NOISE)? {
        return Ok(NoiseThreshold {
            excess_noise: MAX_SEARCH_NOISE,
            never_secure: false,
            capped: true,
        });
    }
    let (mut lo, mut hi) = (0.0, MAX_SEARCH_NOISE);
    while hi - lo > (1e-3 * lo).max(1e-10) {
        let mid = 0.5 * (lo + hi);
        if secure(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(NoiseThreshold {
        excess_noise: lo,
        never_secure: false,
        capped: false,
    })
}

/// Tolerable-noise curve over altitudes, one pass simulation per altitude.
#[allow(clippy::too_many_arguments)]
pub fn tolerable_noise_curve(
    altitudes: &[f64],
    receiver: &ReceiverParams,
    pass: &PassConfig,
    seed: u64,
    template: &ProtocolParams,
    protocol: Protocol,
    asymptotic: bool,
    bounds: &OptimizationBounds,
) -> Result<Vec<(f64, NoiseThreshold)>> {
    altitudes
        .par_iter()
        .map(|&h| {
            let g = LinkGeometry::new(h)?;
            let stats = simulate_pass(&g, receiver, pass, seed)?;
            Ok((
                h,
                tolerable_noise(template, protocol, &stats, asymptotic, bounds)?,
            ))
        })
        .collect()
}
