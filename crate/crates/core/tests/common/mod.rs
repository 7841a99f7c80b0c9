//! Property suites shared by the `properties` and `acceptance` targets. Each
//! suite returns `Err` with a description of the first violation.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use satqkd::downlink::BeamGeometry;
use satqkd::gaussian::{
    apply_loss_noise, attach_trusted_noise, purify, squeezed_purification_cm, symplectic_form,
    symplectic_spectrum, tmsv_cm, CovMatrix,
};
use satqkd::keyrate::{
    holevo_bound, individual_leakage, key_rate, Attack, BlockSize, FixedChannel, NoiseTrust,
    ProtocolParams, Scenario,
};

pub type SuiteResult = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Random symplectic matrix from phase rotations, single-mode squeezers and
/// beamsplitters, each of which preserves `Ω`.
pub fn random_symplectic(rng: &mut impl Rng, modes: usize) -> DMatrix<f64> {
    let n = 2 * modes;
    let mut s = DMatrix::<f64>::identity(n, n);
    for _ in 0..3 {
        for m in 0..modes {
            let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r: f64 = rng.random_range(-1.0..1.0);
            let mut local = DMatrix::<f64>::identity(n, n);
            let (c, si) = (th.cos(), th.sin());
            let (e, ei) = (r.exp(), (-r).exp());
            local[(2 * m, 2 * m)] = e * c;
            local[(2 * m, 2 * m + 1)] = -e * si;
            local[(2 * m + 1, 2 * m)] = ei * si;
            local[(2 * m + 1, 2 * m + 1)] = ei * c;
            s = local * s;
        }
        for a in 0..modes {
            for b in (a + 1)..modes {
                let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
                let (c, si) = (th.cos(), th.sin());
                let mut bs = DMatrix::<f64>::identity(n, n);
                for q in 0..2 {
                    let (i, j) = (2 * a + q, 2 * b + q);
                    bs[(i, i)] = c;
                    bs[(j, j)] = c;
                    bs[(i, j)] = si;
                    bs[(j, i)] = -si;
                }
                s = bs * s;
            }
        }
    }
    s
}

/// `S (⊕ νᵢ I) Sᵀ` with the chosen symplectic spectrum.
pub fn cm_with_spectrum(s: &DMatrix<f64>, nus: &[f64]) -> DMatrix<f64> {
    let diag: Vec<f64> = nus.iter().flat_map(|&v| [v, v]).collect();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
    let m = s * d * s.transpose();
    (&m + m.transpose()) * 0.5
}

/// Symplectic eigenvalues as moduli of the eigenvalues of `Ωγ` (the spectrum of
/// `iΩγ` is `±νᵢ`), from a general dense eigensolver. Sorted descending.
pub fn oracle_spectrum(gamma: &DMatrix<f64>) -> Vec<f64> {
    let modes = gamma.nrows() / 2;
    let m = symplectic_form(modes) * gamma;
    let mut moduli: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.im.abs()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    moduli
        .chunks_exact(2)
        .map(|p| 0.5 * (p[0] + p[1]))
        .collect()
}

pub fn purity_suite() -> SuiteResult {
    let mut states: Vec<(String, CovMatrix)> = Vec::new();
    for v in [1.0, 1.5, 11.0, 1001.0] {
        states.push((format!("TMSV V={v}"), tmsv_cm(v).unwrap()));
    }
    for (vs, vm) in [(0.1, 10.0), (0.5, 0.01), (0.9, 300.0), (1.0, 3.0)] {
        states.push((
            format!("squeezed V_S={vs} V_M={vm}"),
            squeezed_purification_cm(vs, vm).unwrap(),
        ));
    }
    // The explicit dilation needs an ancilla of variance ~ε·1e6, so only small ε stays pure in f64.
    for eps in [0.0, 1e-4] {
        let base = tmsv_cm(5.0).unwrap();
        states.push((
            format!("trusted-noise dilation eps={eps}"),
            attach_trusted_noise(&base, 1, eps).unwrap(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for k in 0..20 {
        let s = random_symplectic(&mut rng, 2);
        let nus: Vec<f64> = (0..2).map(|_| rng.random_range(1.0..50.0)).collect();
        let mixed = CovMatrix::new(cm_with_spectrum(&s, &nus)).unwrap();
        let full = purify(&mixed).map_err(|e| format!("purify #{k}: {e}"))?;
        let drift = (full.reduce(0..2).unwrap().entries() - mixed.entries())
            .abs()
            .max();
        ensure(drift <= 1e-8 * nus[0], || {
            format!("purify #{k}: marginal drift {drift:e}")
        })?;
        states.push((format!("purification #{k} of nu={nus:?}"), full));
    }
    let lossy = apply_loss_noise(&tmsv_cm(5.0).unwrap(), 1, 1e-3, 0.0).unwrap();
    states.push(("purified 30 dB loss".into(), purify(&lossy).unwrap()));
    for (name, cm) in &states {
        let spectrum = symplectic_spectrum(cm).map_err(|e| format!("{name}: {e}"))?;
        for &nu in spectrum.values() {
            ensure((nu - 1.0).abs() <= 1e-9, || {
                format!("{name}: symplectic eigenvalue {nu}")
            })?;
        }
    }
    Ok(format!("{} purifications have unit spectra", states.len()))
}

pub fn oracle_suite(count: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..count {
        let s = random_symplectic(&mut rng, 3);
        let nus: Vec<f64> = (0..3).map(|_| rng.random_range(1.0..20.0)).collect();
        let gamma = cm_with_spectrum(&s, &nus);
        let cm = CovMatrix::new(gamma.clone()).map_err(|e| format!("sample {k}: {e}"))?;
        let ours = symplectic_spectrum(&cm).map_err(|e| format!("sample {k}: {e}"))?;
        let oracle = oracle_spectrum(&gamma);
        for (a, b) in ours.values().iter().zip(&oracle) {
            let rel = (a - b).abs() / b;
            worst = worst.max(rel);
            ensure(rel <= 1e-10, || {
                format!("sample {k}: {a} vs oracle {b} (rel {rel:e})")
            })?;
        }
    }
    Ok(format!(
        "{count} random 3-mode states, worst relative deviation {worst:.2e}"
    ))
}

/// `∫ f` over `(lo, hi)` by tanh-sinh with a tight target.
fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    quadrature::integrate(f, lo, hi, 1e-12).integral
}

pub fn weibull_suite(mc_samples: usize) -> SuiteResult {
    let beams = [
        (0.75, 5.0, 0.6),
        (0.5, 10.0, 1.2),
        (1.0, 3.0, 0.5),
        (0.25, 8.0, 2.0),
    ];
    for (i, &(a, w, sigma)) in beams.iter().enumerate() {
        let b = BeamGeometry::new(a, w, sigma).map_err(|e| e.to_string())?;
        let eta0 = b.max_transmission();
        let norm = integrate(|e| b.transmittance_pdf(e), 0.0, eta0);
        ensure((norm - 1.0).abs() <= 1e-6, || {
            format!("beam {i}: pdf integrates to {norm}")
        })?;

        let m = b.moments().map_err(|e| e.to_string())?;
        let pdf_mean = integrate(|e| e * b.transmittance_pdf(e), 0.0, eta0);
        ensure((pdf_mean - m.mean_eta).abs() <= 1e-6 * eta0, || {
            format!(
                "beam {i}: pdf mean {pdf_mean} vs deflection-space mean {}",
                m.mean_eta
            )
        })?;

        let draws = b
            .sample(1000 + i as u64, mc_samples)
            .map_err(|e| e.to_string())?;
        let n = draws.len() as f64;
        for (label, values, reference) in [
            ("eta", draws.clone(), m.mean_eta),
            (
                "sqrt eta",
                draws.iter().map(|e| e.sqrt()).collect::<Vec<_>>(),
                m.mean_sqrt_eta,
            ),
        ] {
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            ensure((mean - reference).abs() <= 3.0 * se, || {
                format!(
                    "beam {i}: MC <{label}> {mean} vs quadrature {reference}, 3 SE = {}",
                    3.0 * se
                )
            })?;
        }
    }
    let small = BeamGeometry::new(0.01, 1.0, 0.1).map_err(|e| e.to_string())?;
    ensure((small.shape() - 2.0).abs() <= 0.01, || {
        format!("shape {} at a/W=0.01", small.shape())
    })?;
    let ratio = small.scale() / std::f64::consts::FRAC_1_SQRT_2;
    ensure((ratio - 1.0).abs() <= 0.01, || {
        format!("scale/(W/sqrt2) = {ratio} at a/W=0.01")
    })?;
    Ok(format!(
        "{} beams normalized, MC within 3 SE at {mc_samples} samples, small-aperture limits hold",
        beams.len()
    ))
}

#[derive(Debug, Clone, Copy)]
pub struct Probe {
    pub vs: f64,
    pub vm: f64,
    pub eta: f64,
    pub eps: f64,
    pub block: u64,
}

pub fn random_probes(count: usize, seed: u64) -> Vec<Probe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| Probe {
            vs: if k % 3 == 0 {
                1.0
            } else {
                rng.random_range(0.1..1.0)
            },
            vm: 10f64.powf(rng.random_range(-2.0..2.0)),
            eta: 10f64.powf(rng.random_range(-4.0..-0.01)),
            eps: if k % 5 == 0 {
                0.0
            } else {
                10f64.powf(rng.random_range(-5.0..-1.5))
            },
            block: 10f64.powf(rng.random_range(6.0..12.0)) as u64,
        })
        .collect()
}

pub fn ordering_suite(count: usize) -> SuiteResult {
    const SLACK: f64 = 1e-9;
    for (k, pr) in random_probes(count, 42).into_iter().enumerate() {
        let ch = FixedChannel::new(pr.eta, pr.eps).unwrap();
        let base = ProtocolParams::default().with_variances(pr.vs, pr.vm);
        let ctx = || format!("probe {k} {pr:?}");
        for trust in [NoiseTrust::Trusted, NoiseTrust::Untrusted] {
            let chi = holevo_bound(
                &base.with_scenario(Scenario::new(Attack::Collective, trust)),
                &ch,
            )
            .map_err(|e| format!("{}: {e}", ctx()))?;
            let ibe = individual_leakage(
                &base.with_scenario(Scenario::new(Attack::Individual, trust)),
                &ch,
            )
            .map_err(|e| format!("{}: {e}", ctx()))?;
            ensure(chi + SLACK >= ibe, || {
                format!("{}: chi {chi} < I_BE {ibe} ({trust:?})", ctx())
            })?;
        }
        for attack in [Attack::Collective, Attack::Individual] {
            let rate = |trust, block| {
                key_rate(
                    &base.with_scenario(Scenario::new(attack, trust)),
                    &ch,
                    block,
                )
                .map(|r| r.key_rate)
            };
            let finite = BlockSize::Finite(pr.block);
            let passive = rate(NoiseTrust::Trusted, finite).map_err(|e| e.to_string())?;
            let active = rate(NoiseTrust::Untrusted, finite).map_err(|e| e.to_string())?;
            ensure(passive + SLACK >= active, || {
                format!("{}: passive {passive} < active {active}", ctx())
            })?;
            for trust in [NoiseTrust::Trusted, NoiseTrust::Untrusted] {
                let f = rate(trust, finite).map_err(|e| e.to_string())?;
                let a = rate(trust, BlockSize::Asymptotic).map_err(|e| e.to_string())?;
                ensure(f <= a + SLACK, || {
                    format!("{}: finite {f} > asymptotic {a}", ctx())
                })?;
            }
        }
    }
    Ok(format!("{count} random parameter points ordered correctly"))
}

pub fn monotonicity_suite() -> SuiteResult {
    const SLACK: f64 = 1e-12;
    let variances = [(1.0, 5.0), (1.0, 0.5), (0.3, 3.0), (0.1, 10.0)];
    let blocks = [BlockSize::Finite(300_000_000_000), BlockSize::Asymptotic];
    let mut checked = 0;
    for sc in Scenario::ALL {
        for &(vs, vm) in &variances {
            let p = ProtocolParams::default()
                .with_variances(vs, vm)
                .with_scenario(sc);
            for &block in &blocks {
                let mut last = f64::INFINITY;
                for i in 0..=120 {
                    let db = 0.5 * f64::from(i);
                    let ch = FixedChannel::from_attenuation_db(db, 1e-4).unwrap();
                    let k = key_rate(&p, &ch, block)
                        .map_err(|e| e.to_string())?
                        .key_rate;
                    ensure(k <= last + SLACK, || {
                        format!("{sc} V_S={vs} V_M={vm}: K rises at {db} dB")
                    })?;
                    last = k;
                    checked += 1;
                }
                for db in [3.0, 10.0, 20.0] {
                    let mut last = f64::INFINITY;
                    for i in 0..=100 {
                        let eps = 5e-4 * f64::from(i);
                        let ch = FixedChannel::from_attenuation_db(db, eps).unwrap();
                        let k = key_rate(&p, &ch, block)
                            .map_err(|e| e.to_string())?
                            .key_rate;
                        ensure(k <= last + SLACK, || {
                            format!("{sc} V_S={vs} V_M={vm} {db} dB: K rises at eps={eps}")
                        })?;
                        last = k;
                        checked += 1;
                    }
                }
            }
        }
    }
    Ok(format!(
        "{checked} grid evaluations nonincreasing in dB and in excess noise"
    ))
}
