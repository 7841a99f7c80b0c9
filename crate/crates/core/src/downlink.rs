//! Satellite-to-ground optical channel: pass geometry, atmospheric extinction
//! and beam-wandering transmittance statistics.
//!
//! Angles are radians and lengths metres. Beam-wandering transmittance follows
//! the log-negative Weibull law of a Gaussian beam whose centroid wanders with
//! a two-dimensional normal distribution over a circular aperture.

use log::warn;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::special::{bessel_i0m1, bessel_i1e};

pub const EARTH_RADIUS: f64 = 6.371e6;
pub const EARTH_MU: f64 = 3.986e14;
pub const MIN_ALTITUDE: f64 = 2e5;
pub const MAX_ALTITUDE: f64 = 3.6e7;

/// Quadrature accuracy requested for transmittance moments.
const MOMENT_TARGET_ERROR: f64 = 1e-13;
/// Achieved error bound beyond which moment quadrature is reported as failed.
const MOMENT_MAX_ERROR: f64 = 1e-9;
/// Rayleigh tail cut: `exp(-40)` of the deflection mass is neglected.
const RAYLEIGH_TAIL_EXPONENT: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub altitude: f64,
    pub earth_radius: f64,
    pub mu: f64,
    pub max_zenith: f64,
}

impl LinkGeometry {
    pub fn new(altitude: f64) -> Result<Self> {
        let g = Self {
            altitude,
            earth_radius: EARTH_RADIUS,
            mu: EARTH_MU,
            max_zenith: 70f64.to_radians(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_max_zenith(self, max_zenith: f64) -> Result<Self> {
        let g = Self { max_zenith, ..self };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_ALTITUDE..=MAX_ALTITUDE).contains(&self.altitude) {
            return Err(invalid(
                "altitude",
                format!(
                    "must lie in [{MIN_ALTITUDE}, {MAX_ALTITUDE}] m, got {}",
                    self.altitude
                ),
            ));
        }
        if !(self.earth_radius > 0.0 && self.earth_radius.is_finite()) {
            return Err(invalid("earth_radius", "must be positive"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(invalid("mu", "must be positive"));
        }
        if !(self.max_zenith > 0.0 && self.max_zenith < std::f64::consts::FRAC_PI_2) {
            return Err(invalid(
                "max_zenith",
                format!("must lie in (0, pi/2) rad, got {}", self.max_zenith),
            ));
        }
        Ok(())
    }

    fn orbit_radius(&self) -> f64 {
        self.earth_radius + self.altitude
    }

    /// Orbital angular velocity of a circular orbit, rad/s.
    pub fn angular_velocity(&self) -> f64 {
        (self.mu / self.orbit_radius().powi(3)).sqrt()
    }

    fn check_zenith(&self, zenith: f64) -> Result<()> {
        if zenith.abs() > self.max_zenith * (1.0 + 1e-12) {
            return Err(invalid(
                "zenith",
                format!(
                    "|{zenith}| exceeds the maximal zenith angle {}",
                    self.max_zenith
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverParams {
    /// Aperture radius, m.
    pub aperture_radius: f64,
    pub detector_efficiency: f64,
    /// Atmospheric extinction at zenith.
    pub zenith_extinction: f64,
    /// Tracking and pointing accuracy θ_p, rad.
    pub pointing_accuracy: f64,
    /// Beam divergence θ_d, rad.
    pub divergence: f64,
    /// Carried as metadata; no formula consumes it.
    pub wavelength: f64,
}

impl Default for ReceiverParams {
    fn default() -> Self {
        Self {
            aperture_radius: 0.75,
            detector_efficiency: 10f64.powf(-0.3),
            zenith_extinction: 0.908,
            pointing_accuracy: 1.2e-6,
            divergence: 1e-5,
            wavelength: 1.55e-6,
        }
    }
}

impl ReceiverParams {
    pub fn with_aperture(self, aperture_radius: f64) -> Self {
        Self {
            aperture_radius,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive, got {v}")))
            }
        };
        let unit = |name, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(invalid(name, format!("must lie in (0, 1], got {v}")))
            }
        };
        positive("aperture_radius", self.aperture_radius)?;
        unit("detector_efficiency", self.detector_efficiency)?;
        unit("zenith_extinction", self.zenith_extinction)?;
        if !(self.pointing_accuracy >= 0.0 && self.pointing_accuracy.is_finite()) {
            return Err(invalid("pointing_accuracy", "must be >= 0"));
        }
        positive("divergence", self.divergence)?;
        positive("wavelength", self.wavelength)
    }
}

/// Beam footprint at the receiver and the induced Weibull transmittance law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamGeometry {
    aperture_radius: f64,
    spot_radius: f64,
    wander_std: f64,
    max_transmission: f64,
    shape: f64,
    scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmittanceMoments {
    pub mean_eta: f64,
    pub mean_sqrt_eta: f64,
}

impl BeamGeometry {
    /// Beam of spot radius `W`, wandering with per-axis standard deviation `σ`,
    /// over an aperture of radius `a`.
    pub fn new(aperture_radius: f64, spot_radius: f64, wander_std: f64) -> Result<Self> {
        if !(aperture_radius > 0.0 && aperture_radius.is_finite()) {
            return Err(invalid("aperture_radius", "must be positive"));
        }
        if !(spot_radius > 0.0 && spot_radius.is_finite()) {
            return Err(invalid("spot_radius", "must be positive"));
        }
        if !(wander_std >= 0.0 && wander_std.is_finite()) {
            return Err(invalid("wander_std", "must be >= 0"));
        }
        if aperture_radius >= spot_radius {
            warn!(
                "aperture radius {aperture_radius} m is not smaller than the beam spot {spot_radius} m; \
                 beam-wandering model is outside its validity range"
            );
        }
        let ratio = aperture_radius / spot_radius;
        let x = 4.0 * ratio * ratio;
        let max_transmission = -(-0.5 * x).exp_m1();
        // D = 1 − e^{-x} I₀(x) and L = ln(2η₀ / D), both free of cancellation.
        let d = -(-x).exp_m1() - (-x).exp() * bessel_i0m1(x);
        let log_term = (excess_over_d(x, max_transmission, d) / d).ln_1p();
        if !(log_term > 0.0 && d > 0.0) {
            return Err(Error::InvalidParameter {
                name: "aperture_radius",
                reason: format!("Weibull parameters undefined at a/W = {ratio}"),
            });
        }
        let shape = 2.0 * x * bessel_i1e(x) / (d * log_term);
        let scale = aperture_radius * log_term.powf(-1.0 / shape);
        Ok(Self {
            aperture_radius,
            spot_radius,
            wander_std,
            max_transmission,
            shape,
            scale,
        })
    }

    pub fn aperture_radius(&self) -> f64 {
        self.aperture_radius
    }

    pub fn spot_radius(&self) -> f64 {
        self.spot_radius
    }

    pub fn wander_std(&self) -> f64 {
        self.wander_std
    }

    /// η₀, the transmittance of a perfectly centred beam.
    pub fn max_transmission(&self) -> f64 {
        self.max_transmission
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn eta_of_deflection(&self, r: f64) -> f64 {
        self.max_transmission * (-(r / self.scale).powf(self.shape)).exp()
    }

    /// Density of the aperture transmittance; zero outside `(0, η₀)`.
    pub fn transmittance_pdf(&self, eta: f64) -> f64 {
        if !(eta > 0.0 && eta < self.max_transmission) || self.wander_std == 0.0 {
            return 0.0;
        }
        let ratio = self.scale / self.wander_std;
        let u = (self.max_transmission / eta).ln();
        let l = self.shape;
        ratio * ratio / (l * eta)
            * u.powf(2.0 / l - 1.0)
            * (-0.5 * ratio * ratio * u.powf(2.0 / l)).exp()
    }

    /// Expectation of `h(η)` under Rayleigh-distributed deflection, integrated
    /// in the reduced variable `v = r / R`.
    fn expectation(&self, h: impl Fn(f64) -> f64) -> Result<f64> {
        if self.wander_std == 0.0 {
            return Ok(h(self.max_transmission));
        }
        let s = self.wander_std / self.scale;
        let c = 0.5 / (s * s);
        let v_max = s * (2.0 * RAYLEIGH_TAIL_EXPONENT).sqrt();
        let integrand = |v: f64| {
            2.0 * c
                * v
                * (-c * v * v).exp()
                * h(self.max_transmission * (-v.powf(self.shape)).exp())
        };
        let out = quadrature::integrate(integrand, 0.0, v_max, MOMENT_TARGET_ERROR);
        if !(out.error_estimate <= MOMENT_MAX_ERROR) || !out.integral.is_finite() {
            return Err(Error::Quadrature {
                error_estimate: out.error_estimate,
                target: MOMENT_MAX_ERROR,
            });
        }
        Ok(out.integral)
    }

    /// `(⟨η⟩, ⟨√η⟩)` of the aperture transmittance alone.
    pub fn moments(&self) -> Result<TransmittanceMoments> {
        let mean_eta = self.expectation(|e| e)?.min(self.max_transmission);
        let mean_sqrt_eta = self.expectation(f64::sqrt)?.min(mean_eta.sqrt());
        Ok(TransmittanceMoments {
            mean_eta,
            mean_sqrt_eta,
        })
    }

    /// Draws transmittances from a seeded stream.
    pub fn sample(&self, seed: u64, count: usize) -> Result<Vec<f64>> {
        if count == 0 {
            return Err(invalid("count", "must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self.sample_with(&mut rng, count))
    }

    pub(crate) fn sample_with<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        let axis =
            Normal::new(0.0, self.wander_std).expect("wander_std validated as finite and >= 0");
        (0..count)
            .map(|_| {
                let x: f64 = axis.sample(rng);
                let y: f64 = axis.sample(rng);
                self.eta_of_deflection(x.hypot(y))
            })
            .collect()
    }
}

/// `2η₀ − D`, by series when the direct difference would cancel.
fn excess_over_d(x: f64, max_transmission: f64, d: f64) -> f64 {
    if x >= 0.1 {
        return 2.0 * max_transmission - d;
    }
    // a_k = (−x/2)^k [(2k)!/(k!)³ − 2/k!]; the k = 1 term vanishes.
    let mut sum = 0.0;
    let mut pow = -0.5 * x;
    let mut fact = 1.0;
    let mut central = 2.0; // (2k)!/(k!)² at k = 1
    for k in 2..40 {
        let kf = f64::from(k);
        pow *= -0.5 * x;
        fact *= kf;
        central *= (2.0 * kf) * (2.0 * kf - 1.0) / (kf * kf);
        let term = pow * (central / fact - 2.0 / fact);
        sum += term;
        if term.abs() < f64::EPSILON * 1e-3 * sum.abs() {
            break;
        }
    }
    sum
}

/// Line-of-sight distance to the satellite at zenith angle `zenith`.
pub fn slant_range(g: &LinkGeometry, zenith: f64) -> Result<f64> {
    g.check_zenith(zenith)?;
    let (h, r) = (g.altitude, g.earth_radius);
    let c = zenith.cos();
    let disc = h * h + 2.0 * h * r + r * r * c * c;
    // √disc − R cos ζ, rewritten to avoid cancellation near zenith.
    Ok((h * h + 2.0 * h * r) / (disc.sqrt() + r * c))
}

/// Earth-centred angle between the zenith direction and the satellite.
pub fn orbit_central_angle(g: &LinkGeometry, zenith: f64) -> f64 {
    zenith - (g.earth_radius / g.orbit_radius() * zenith.sin()).asin()
}

/// Duration of a meridian pass between `±ζ_max`, s.
pub fn time_in_view(g: &LinkGeometry) -> f64 {
    2.0 * orbit_central_angle(g, g.max_zenith) / g.angular_velocity()
}

pub fn extinction(zenith_extinction: f64, zenith: f64) -> Result<f64> {
    if zenith.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(invalid(
            "zenith",
            format!("must satisfy |zenith| < pi/2, got {zenith}"),
        ));
    }
    Ok(zenith_extinction.powf(1.0 / zenith.cos()))
}

pub fn beam_geometry(g: &LinkGeometry, r: &ReceiverParams, zenith: f64) -> Result<BeamGeometry> {
    let l = slant_range(g, zenith)?;
    BeamGeometry::new(r.aperture_radius, r.divergence * l, r.pointing_accuracy * l)
}

/// Product of detector efficiency and atmospheric extinction at `zenith`.
pub fn static_transmittance(r: &ReceiverParams, zenith: f64) -> Result<f64> {
    Ok(r.detector_efficiency * extinction(r.zenith_extinction, zenith)?)
}
