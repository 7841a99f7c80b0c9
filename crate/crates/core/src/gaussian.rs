//! Covariance-matrix algebra for multimode Gaussian states.
//!
//! All variances are in shot-noise units (vacuum quadrature variance = 1) and
//! quadratures are ordered `(x₁, p₁, x₂, p₂, …)`. Every transformation returns a
//! new, exactly symmetric [`CovMatrix`]; nothing here tracks first moments.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};

use crate::error::{invalid, Error, Result};

/// Tolerance (SNU) below 1 that a symplectic eigenvalue may reach and still be
/// considered physical.
pub const PHYSICALITY_TOLERANCE: f64 = 1e-9;

/// Beamsplitter transmittance used to dilate trusted noise.
pub const TRUSTED_NOISE_COUPLING: f64 = 1.0 - 1e-6;

/// Below this distance from 1 the entropy function switches to its series form.
const ENTROPY_SERIES_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasurementKind {
    HomodyneX,
    HomodyneP,
    Heterodyne,
}

/// Symmetric covariance matrix of an `M`-mode Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    entries: DMatrix<f64>,
}

impl CovMatrix {
    /// Validates shape, symmetry, positivity and physicality of `entries`.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || n != entries.ncols() || !n.is_multiple_of(2) {
            return Err(Error::InvalidMatrix(format!(
                "expected a square matrix of even size, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        let scale = entries.amax().max(1.0);
        let asym = (&entries - entries.transpose()).amax();
        if asym > 1e-9 * scale {
            return Err(Error::InvalidMatrix(format!(
                "not symmetric (max asymmetry {asym:e})"
            )));
        }
        let cm = Self::from_entries(entries);
        symplectic_spectrum(&cm)?;
        Ok(cm)
    }

    /// Wraps `entries` after symmetrizing; callers guarantee physicality.
    pub(crate) fn from_entries(entries: DMatrix<f64>) -> Self {
        let sym = (&entries + entries.transpose()) * 0.5;
        Self { entries: sym }
    }

    pub fn vacuum(modes: usize) -> Self {
        Self {
            entries: DMatrix::identity(2 * modes, 2 * modes),
        }
    }

    /// Single-mode thermal state `diag(v, v)`.
    pub fn thermal(v: f64) -> Result<Self> {
        if !(v >= 1.0) {
            return Err(invalid(
                "v",
                format!("thermal variance must be >= 1, got {v}"),
            ));
        }
        Ok(Self {
            entries: DMatrix::from_diagonal_element(2, 2, v),
        })
    }

    pub fn modes(&self) -> usize {
        self.entries.nrows() / 2
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    /// The 2×2 block coupling modes `a` and `b`.
    pub fn block(&self, a: usize, b: usize) -> Matrix2<f64> {
        self.entries.fixed_view::<2, 2>(2 * a, 2 * b).into_owned()
    }

    /// Variance of `x` (or `p` when `p_quadrature`) of one mode.
    pub fn variance(&self, mode: usize, p_quadrature: bool) -> f64 {
        let i = 2 * mode + usize::from(p_quadrature);
        self.entries[(i, i)]
    }

    pub(crate) fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.modes() {
            return Err(Error::ModeOutOfRange {
                mode,
                modes: self.modes(),
            });
        }
        Ok(())
    }

    /// Block-diagonal combination `self ⊕ other`; `other`'s modes follow.
    /// Marginal state of a contiguous range of modes.
    pub fn reduce(&self, keep: std::ops::Range<usize>) -> Result<CovMatrix> {
        if keep.is_empty() || keep.end > self.modes() {
            return Err(Error::ModeOutOfRange {
                mode: keep.end,
                modes: self.modes(),
            });
        }
        let (start, len) = (2 * keep.start, 2 * keep.len());
        Ok(Self::from_entries(
            self.entries.view((start, start), (len, len)).into_owned(),
        ))
    }

    pub fn direct_sum(&self, other: &CovMatrix) -> CovMatrix {
        let (n, m) = (self.entries.nrows(), other.entries.nrows());
        let mut out = DMatrix::zeros(n + m, n + m);
        out.view_mut((0, 0), (n, n)).copy_from(&self.entries);
        out.view_mut((n, n), (m, m)).copy_from(&other.entries);
        CovMatrix { entries: out }
    }

    /// `S γ Sᵀ` for a symplectic `S`.
    pub(crate) fn transform(&self, s: &DMatrix<f64>) -> CovMatrix {
        Self::from_entries(s * &self.entries * s.transpose())
    }
}

/// Symplectic eigenvalues, sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticSpectrum {
    values: Vec<f64>,
}

impl SymplecticSpectrum {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// von Neumann entropy in bits.
    pub fn entropy(&self) -> f64 {
        self.values.iter().map(|&nu| bosonic_entropy(nu)).sum()
    }
}

/// Standard symplectic form for `modes` modes, blockwise `[[0, 1], [-1, 0]]`.
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Beamsplitter of transmittance `t` mixing modes `a` and `b` in an `modes`-mode system:
/// `a → √t a + √(1−t) b`, `b → −√(1−t) a + √t b`.
pub(crate) fn beamsplitter(modes: usize, a: usize, b: usize, t: f64) -> DMatrix<f64> {
    let (c, s) = (t.sqrt(), (1.0 - t).sqrt());
    let mut m = DMatrix::identity(2 * modes, 2 * modes);
    for q in 0..2 {
        let (i, j) = (2 * a + q, 2 * b + q);
        m[(i, i)] = c;
        m[(i, j)] = s;
        m[(j, i)] = -s;
        m[(j, j)] = c;
    }
    m
}

/// Symmetric two-mode squeezed vacuum of variance `v`.
pub fn tmsv_cm(v: f64) -> Result<CovMatrix> {
    if !(v >= 1.0) || !v.is_finite() {
        return Err(invalid("V", format!("TMSV variance must be >= 1, got {v}")));
    }
    let c = (v * v - 1.0).sqrt();
    let mut m = DMatrix::from_diagonal_element(4, 4, v);
    m[(0, 2)] = c;
    m[(2, 0)] = c;
    m[(1, 3)] = -c;
    m[(3, 1)] = -c;
    Ok(CovMatrix::from_entries(m))
}

/// Entanglement-based purification of x-squeezed states (`V_S`) displaced in x (`V_M`).
///
/// Two oppositely squeezed vacua are mixed on a balanced beamsplitter. Mode 0
/// stays with the sender (homodyne there prepares the signal), mode 1 is sent.
/// The sent mode has `Var(x) = V_S + V_M` and conditional variance `V_S` given
/// an x-homodyne on mode 0.
pub fn squeezed_purification_cm(
    signal_variance: f64,
    modulation_variance: f64,
) -> Result<CovMatrix> {
    let (vs, vm) = (signal_variance, modulation_variance);
    if !(vs > 0.0 && vs <= 1.0) {
        return Err(invalid(
            "V_S",
            format!("signal variance must lie in (0, 1], got {vs}"),
        ));
    }
    if !(vm >= 0.0) || !vm.is_finite() {
        return Err(invalid(
            "V_M",
            format!("modulation variance must be >= 0, got {vm}"),
        ));
    }
    let s = vs + vm;
    let root = (vm * s).sqrt();
    let v1 = s - root;
    let v2 = 1.0 / (s + root);
    // Squeezer 2 carries x-variance 1/V₂ so that the sent mode reproduces Var(x_B) = V_S + V_M.
    let squeezers = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        v1,
        1.0 / v1,
        1.0 / v2,
        v2,
    ]));
    let bs = beamsplitter(2, 0, 1, 0.5);
    Ok(CovMatrix::from_entries(&bs * squeezers * bs.transpose()))
}

/// Lossy, phase-insensitive channel on `mode` with output-referred excess noise.
pub fn apply_loss_noise(
    cm: &CovMatrix,
    mode: usize,
    eta: f64,
    excess_noise: f64,
) -> Result<CovMatrix> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(invalid(
            "eta",
            format!("transmittance must lie in (0, 1], got {eta}"),
        ));
    }
    apply_averaged_channel(cm, mode, eta, eta.sqrt(), excess_noise)
}

/// Channel whose mode block scales with `mean_eta` and cross-correlations with
/// `mean_sqrt_eta`; the deterministic channel is the case `mean_sqrt_eta² = mean_eta`.
pub(crate) fn apply_averaged_channel(
    cm: &CovMatrix,
    mode: usize,
    mean_eta: f64,
    mean_sqrt_eta: f64,
    excess_noise: f64,
) -> Result<CovMatrix> {
    cm.check_mode(mode)?;
    if !(excess_noise >= 0.0) || !excess_noise.is_finite() {
        return Err(invalid(
            "epsilon",
            format!("excess noise must be >= 0, got {excess_noise}"),
        ));
    }
    let n = cm.entries.nrows();
    let mut m = cm.entries.clone();
    let (i0, i1) = (2 * mode, 2 * mode + 1);
    for k in 0..n {
        if k == i0 || k == i1 {
            continue;
        }
        for i in [i0, i1] {
            m[(i, k)] *= mean_sqrt_eta;
            m[(k, i)] *= mean_sqrt_eta;
        }
    }
    for a in [i0, i1] {
        for b in [i0, i1] {
            let id = if a == b { 1.0 } else { 0.0 };
            m[(a, b)] = mean_eta * (cm.entries[(a, b)] - id) + id * (1.0 + excess_noise);
        }
    }
    Ok(CovMatrix::from_entries(m))
}

/// Adds trusted noise `excess_noise` to `mode` through a strongly unbalanced
/// beamsplitter coupled to one arm of a TMSV pair. The pair is appended as the
/// last two modes, the first of which is the arm that mixed with the signal.
pub fn attach_trusted_noise(cm: &CovMatrix, mode: usize, excess_noise: f64) -> Result<CovMatrix> {
    cm.check_mode(mode)?;
    if !(excess_noise >= 0.0) || !excess_noise.is_finite() {
        return Err(invalid(
            "epsilon",
            format!("trusted noise must be >= 0, got {excess_noise}"),
        ));
    }
    let t = TRUSTED_NOISE_COUPLING;
    let pair = tmsv_cm(1.0 + excess_noise / (1.0 - t))?;
    let extended = cm.direct_sum(&pair);
    let modes = extended.modes();
    let bs = beamsplitter(modes, mode, modes - 2, t);
    Ok(extended.transform(&bs))
}

/// Conditional state of the remaining modes after measuring `mode`.
pub fn condition_on_measurement(
    cm: &CovMatrix,
    mode: usize,
    kind: MeasurementKind,
) -> Result<CovMatrix> {
    cm.check_mode(mode)?;
    if cm.modes() < 2 {
        return Err(invalid("mode", "cannot condition a single-mode state"));
    }
    let n = cm.entries.nrows();
    let rest: Vec<usize> = (0..n).filter(|&k| k / 2 != mode).collect();
    let r = rest.len();
    let a = DMatrix::from_fn(r, r, |i, j| cm.entries[(rest[i], rest[j])]);
    let c = DMatrix::from_fn(r, 2, |i, j| cm.entries[(rest[i], 2 * mode + j)]);
    let b = cm.block(mode, mode);
    let out = match kind {
        MeasurementKind::HomodyneX | MeasurementKind::HomodyneP => {
            let q = usize::from(kind == MeasurementKind::HomodyneP);
            let var = b[(q, q)];
            if !(var > 0.0) {
                return Err(Error::InvalidMatrix(format!(
                    "measured quadrature has non-positive variance {var}"
                )));
            }
            let col = c.column(q);
            a - (col * col.transpose()) / var
        }
        MeasurementKind::Heterodyne => {
            let inv = (b + Matrix2::identity())
                .try_inverse()
                .ok_or_else(|| Error::InvalidMatrix("singular heterodyne block".into()))?;
            let inv = DMatrix::from_column_slice(2, 2, inv.as_slice());
            a - &c * inv * c.transpose()
        }
    };
    Ok(CovMatrix::from_entries(out))
}

/// Symplectic eigenvalues via the symmetric matrix `(γ^½ Ω γ^½)ᵀ (γ^½ Ω γ^½)`,
/// whose eigenvalues are the squared symplectic eigenvalues, each twice.
pub fn symplectic_spectrum(cm: &CovMatrix) -> Result<SymplecticSpectrum> {
    let modes = cm.modes();
    let root = sqrt_psd(&cm.entries)?;
    let m = &root * symplectic_form(modes) * &root;
    let k = m.transpose() * &m;
    let k = (&k + k.transpose()) * 0.5;
    let mut squares: Vec<f64> = SymmetricEigen::new(k).eigenvalues.iter().copied().collect();
    squares.sort_by(|a, b| b.total_cmp(a));
    let values: Vec<f64> = squares
        .chunks_exact(2)
        .map(|pair| (0.5 * (pair[0] + pair[1])).max(0.0).sqrt())
        .collect();
    let smallest = values.last().copied().unwrap_or(1.0);
    if smallest < 1.0 - PHYSICALITY_TOLERANCE {
        return Err(Error::Unphysical {
            nu: smallest,
            tolerance: PHYSICALITY_TOLERANCE,
        });
    }
    Ok(SymplecticSpectrum { values })
}

/// Symmetric square root of a positive-definite matrix.
fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::InvalidMatrix(format!(
            "not positive definite (smallest eigenvalue {min:e})"
        )));
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * q.transpose())
}

/// Normal-mode decomposition `γ = S (⊕ νᵢ I) Sᵀ` with `S` symplectic; `ν`
/// sorted descending.
pub fn williamson(cm: &CovMatrix) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let modes = cm.modes();
    let n = 2 * modes;
    let root = sqrt_psd(&cm.entries)?;
    let k = &root * symplectic_form(modes) * &root;
    let gram = k.transpose() * &k;
    let eig = SymmetricEigen::new((&gram + gram.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    // Columns come in pairs (u, −K u / ν) so that Oᵀ K O = ⊕ ν [[0, 1], [−1, 0]].
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n);
    let mut nus = Vec::with_capacity(modes);
    let project_out = |v: &mut nalgebra::DVector<f64>, basis: &[nalgebra::DVector<f64>]| {
        for b in basis {
            let c = b.dot(v);
            v.axpy(-c, b, 1.0);
        }
    };
    for &i in &order {
        if nus.len() == modes {
            break;
        }
        let mut u = eig.eigenvectors.column(i).into_owned();
        project_out(&mut u, &basis);
        project_out(&mut u, &basis);
        let norm = u.norm();
        if norm < 0.5 {
            continue;
        }
        u /= norm;
        let ku = &k * &u;
        let nu = ku.norm();
        let mut w = -ku / nu;
        project_out(&mut w, &basis);
        w.normalize_mut();
        basis.push(u);
        basis.push(w);
        nus.push(nu);
    }
    if nus.len() != modes {
        return Err(Error::InvalidMatrix(
            "normal-mode decomposition failed".into(),
        ));
    }
    let o = DMatrix::from_columns(&basis);
    let inv_sqrt: Vec<f64> = nus.iter().flat_map(|&v| [v.powf(-0.5); 2]).collect();
    let s = root * o * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(inv_sqrt));
    if let Some(&smallest) = nus.last() {
        if smallest < 1.0 - PHYSICALITY_TOLERANCE {
            return Err(Error::Unphysical {
                nu: smallest,
                tolerance: PHYSICALITY_TOLERANCE,
            });
        }
    }
    Ok((s, nus))
}

/// Pure state on `2·modes` modes whose first `modes` modes reduce to `cm`;
/// mode `modes + i` purifies the `i`-th normal mode.
pub fn purify(cm: &CovMatrix) -> Result<CovMatrix> {
    let modes = cm.modes();
    let (s, nus) = williamson(cm)?;
    let n = 2 * modes;
    let mut t = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for (i, &nu) in nus.iter().enumerate() {
        let nu = nu.max(1.0);
        let c = (nu * nu - 1.0).sqrt();
        let (a, b) = (2 * i, n + 2 * i);
        for (q, sign) in [(0, 1.0), (1, -1.0)] {
            t[(a + q, a + q)] = nu;
            t[(b + q, b + q)] = nu;
            t[(a + q, b + q)] = sign * c;
            t[(b + q, a + q)] = sign * c;
        }
    }
    let mut lift = DMatrix::<f64>::identity(2 * n, 2 * n);
    lift.view_mut((0, 0), (n, n)).copy_from(&s);
    Ok(CovMatrix::from_entries(&lift * t * lift.transpose()))
}

/// Conditional state of the modes in `keep` after an x-homodyne on `mode`
/// whose outcome carries additional classical Gaussian noise of variance `noise`.
pub fn condition_on_noisy_homodyne(
    cm: &CovMatrix,
    mode: usize,
    noise: f64,
    keep: std::ops::Range<usize>,
) -> Result<CovMatrix> {
    cm.check_mode(mode)?;
    if keep.contains(&mode) {
        return Err(invalid("keep", "must exclude the measured mode"));
    }
    let block = cm.reduce(keep.clone())?.into_entries();
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(invalid("noise", format!("must be >= 0, got {noise}")));
    }
    let q = 2 * mode;
    let var = cm.entries[(q, q)] + noise;
    let (start, len) = (2 * keep.start, 2 * keep.len());
    let col = cm.entries.view((start, q), (len, 1)).into_owned();
    Ok(CovMatrix::from_entries(
        block - &col * col.transpose() / var,
    ))
}

/// von Neumann entropy (bits) of a Gaussian state.
pub fn von_neumann_entropy(cm: &CovMatrix) -> Result<f64> {
    Ok(symplectic_spectrum(cm)?.entropy())
}

/// Bosonic entropy function `g(ν)` in bits; values of `ν` below 1 are clamped.
pub fn bosonic_entropy(nu: f64) -> f64 {
    let x = 0.5 * (nu - 1.0);
    if x <= 0.0 {
        return 0.0;
    }
    let nats = if x < 0.5 * ENTROPY_SERIES_THRESHOLD {
        x - x * x.ln() + 0.5 * x * x - x * x * x / 6.0
    } else {
        (1.0 + x) * x.ln_1p() - x * x.ln()
    };
    nats / std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn assert_pure(cm: &CovMatrix) {
        for nu in symplectic_spectrum(cm).unwrap().values() {
            assert!((nu - 1.0).abs() < 1e-9, "nu = {nu}");
        }
    }

    #[test]
    fn tmsv_unit_variance_is_two_vacua() {
        assert_eq!(tmsv_cm(1.0).unwrap(), CovMatrix::vacuum(2));
    }

    #[test]
    fn tmsv_blocks_and_purity() {
        let cm = tmsv_cm(2.0).unwrap();
        assert_eq!(cm.block(0, 0), Matrix2::new(2.0, 0.0, 0.0, 2.0));
        let s3 = 3f64.sqrt();
        assert_relative_eq!(
            cm.block(0, 1),
            Matrix2::new(s3, 0.0, 0.0, -s3),
            epsilon = 1e-15
        );
        assert_pure(&cm);
        assert_pure(&tmsv_cm(11.0).unwrap());
    }

    #[test]
    fn tmsv_rejects_subvacuum() {
        assert!(tmsv_cm(0.99).is_err());
    }

    #[test]
    fn squeezed_purification_matches_prepare_and_measure() {
        assert_relative_eq!(
            squeezed_purification_cm(1.0, 0.0).unwrap().entries(),
            CovMatrix::vacuum(2).entries(),
            epsilon = 1e-15
        );
        let cm = squeezed_purification_cm(0.5, 1.0).unwrap();
        assert_relative_eq!(cm.variance(1, false), 1.5, epsilon = 1e-14);
        let cond = condition_on_measurement(&cm, 0, MeasurementKind::HomodyneX).unwrap();
        assert_relative_eq!(cond.variance(0, false), 0.5, epsilon = 1e-14);
        assert_pure(&cm);
        assert_pure(&cond);
    }

    #[test]
    fn squeezed_purification_rejects_out_of_range() {
        assert!(squeezed_purification_cm(1.2, 1.0).is_err());
        assert!(squeezed_purification_cm(0.0, 1.0).is_err());
        assert!(squeezed_purification_cm(0.5, -1.0).is_err());
    }

    #[test]
    fn loss_identity_and_rule() {
        let cm = tmsv_cm(2.0).unwrap();
        assert_eq!(apply_loss_noise(&cm, 1, 1.0, 0.0).unwrap(), cm);
        let out = apply_loss_noise(&cm, 1, 0.5, 0.0).unwrap();
        assert_relative_eq!(out.variance(1, false), 1.5, epsilon = 1e-15);
        assert_relative_eq!(out.variance(1, true), 1.5, epsilon = 1e-15);
        assert_relative_eq!(out.entries()[(0, 2)], 1.5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(out.entries()[(1, 3)], -1.5f64.sqrt(), epsilon = 1e-15);
        assert!(von_neumann_entropy(&out).unwrap() > 0.0);
    }

    #[test]
    fn loss_rejects_bad_transmittance() {
        let cm = tmsv_cm(2.0).unwrap();
        assert!(apply_loss_noise(&cm, 1, 0.0, 0.0).is_err());
        assert!(apply_loss_noise(&cm, 1, 1.1, 0.0).is_err());
        assert!(apply_loss_noise(&cm, 1, 0.5, -1e-3).is_err());
        assert!(matches!(
            apply_loss_noise(&cm, 2, 0.5, 0.0),
            Err(Error::ModeOutOfRange { .. })
        ));
    }

    #[test]
    fn trusted_noise_increments_variance() {
        let cm = tmsv_cm(2.0).unwrap();
        let base = apply_loss_noise(&cm, 1, 0.2, 0.0).unwrap();
        assert_relative_eq!(base.variance(1, false), 1.2, epsilon = 1e-14);
        let noisy = attach_trusted_noise(&base, 1, 1e-4).unwrap();
        assert_eq!(noisy.modes(), 4);
        assert!((noisy.variance(1, false) - 1.2001).abs() < 1e-6);
        assert!((noisy.variance(1, true) - 1.2001).abs() < 1e-6);

        let quiet = attach_trusted_noise(&base, 1, 0.0).unwrap();
        assert_relative_eq!(quiet.block(1, 1), base.block(1, 1), epsilon = 1e-6);
        assert!(attach_trusted_noise(&base, 1, -1.0).is_err());
    }

    #[test]
    fn trusted_noise_dilation_of_pure_state_is_pure() {
        let cm = tmsv_cm(5.0).unwrap();
        assert_pure(&attach_trusted_noise(&cm, 1, 1e-3).unwrap());
    }

    #[test]
    fn williamson_reconstructs_state() {
        let cm = apply_loss_noise(&tmsv_cm(7.0).unwrap(), 1, 0.3, 0.05).unwrap();
        let (s, nus) = williamson(&cm).unwrap();
        let omega = symplectic_form(2);
        assert!((&s * &omega * s.transpose() - &omega).abs().max() < 1e-10);
        let d: Vec<f64> = nus.iter().flat_map(|&v| [v, v]).collect();
        let rebuilt = &s * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)) * s.transpose();
        assert!((rebuilt - cm.entries()).abs().max() < 1e-10);
        let spectrum = symplectic_spectrum(&cm).unwrap();
        for (a, b) in nus.iter().zip(spectrum.values()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12);
        }
    }

    #[test]
    fn purification_restores_marginal() {
        let cm = apply_loss_noise(&tmsv_cm(3.0).unwrap(), 1, 0.01, 0.02).unwrap();
        let full = purify(&cm).unwrap();
        assert_eq!(full.modes(), 4);
        assert_pure(&full);
        assert!(
            (full.reduce(0..2).unwrap().entries() - cm.entries())
                .abs()
                .max()
                < 1e-10
        );
        assert_relative_eq!(
            von_neumann_entropy(&full.reduce(2..4).unwrap()).unwrap(),
            von_neumann_entropy(&cm).unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn noisy_homodyne_matches_dilation() {
        // ε = 1e-4 keeps the dilation ancilla small enough to stay accurate.
        let base = apply_loss_noise(&tmsv_cm(4.0).unwrap(), 1, 0.1, 0.0).unwrap();
        let eps = 1e-4;
        let dilated = attach_trusted_noise(&base, 1, eps).unwrap();
        let cond = condition_on_measurement(&dilated, 1, MeasurementKind::HomodyneX).unwrap();
        let chi_dilation =
            von_neumann_entropy(&dilated).unwrap() - von_neumann_entropy(&cond).unwrap();

        let full = purify(&base).unwrap();
        let eve = condition_on_noisy_homodyne(&full, 1, eps, 2..4).unwrap();
        let chi_direct = von_neumann_entropy(&full.reduce(2..4).unwrap()).unwrap()
            - von_neumann_entropy(&eve).unwrap();
        assert!(
            (chi_direct - chi_dilation).abs() < 1e-5,
            "{chi_direct} vs {chi_dilation}"
        );

        let noiseless = condition_on_noisy_homodyne(&full, 1, 0.0, 2..4).unwrap();
        assert!(von_neumann_entropy(&noiseless).unwrap() < von_neumann_entropy(&eve).unwrap());
    }

    #[test]
    fn noisy_homodyne_rejects_measured_mode() {
        let full = purify(&apply_loss_noise(&tmsv_cm(2.0).unwrap(), 1, 0.5, 0.0).unwrap()).unwrap();
        assert!(condition_on_noisy_homodyne(&full, 1, 0.0, 1..3).is_err());
        assert!(condition_on_noisy_homodyne(&full, 1, -1.0, 2..4).is_err());
    }

    #[test]
    fn conditioning_uncorrelated_mode_drops_it() {
        let a = CovMatrix::thermal(3.0).unwrap();
        let b = CovMatrix::thermal(2.0).unwrap();
        let joint = a.direct_sum(&b);
        for kind in [
            MeasurementKind::HomodyneX,
            MeasurementKind::HomodyneP,
            MeasurementKind::Heterodyne,
        ] {
            assert_eq!(condition_on_measurement(&joint, 1, kind).unwrap(), a);
        }
    }

    #[test]
    fn homodyne_on_tmsv_gives_closed_form() {
        let v = 2.0;
        let cm = tmsv_cm(v).unwrap();
        let cond = condition_on_measurement(&cm, 1, MeasurementKind::HomodyneX).unwrap();
        assert_relative_eq!(cond.variance(0, false), 1.0 / v, epsilon = 1e-15);
        assert_relative_eq!(cond.variance(0, true), v, epsilon = 1e-15);
        assert_pure(&cond);
        let het = condition_on_measurement(&cm, 1, MeasurementKind::Heterodyne).unwrap();
        assert_pure(&het);
    }

    #[test]
    fn conditioning_single_mode_is_an_error() {
        let cm = CovMatrix::thermal(2.0).unwrap();
        assert!(condition_on_measurement(&cm, 0, MeasurementKind::HomodyneX).is_err());
    }

    #[test]
    fn thermal_spectrum() {
        let cm = CovMatrix::thermal(3.5).unwrap();
        let spectrum = symplectic_spectrum(&cm).unwrap();
        assert_relative_eq!(spectrum.values()[0], 3.5, epsilon = 1e-13);
    }

    #[test]
    fn unphysical_matrix_is_reported() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 0.5]));
        assert!(matches!(CovMatrix::new(m), Err(Error::Unphysical { .. })));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(CovMatrix::new(m), Err(Error::InvalidMatrix(_))));
    }

    #[test]
    fn entropy_values() {
        assert_eq!(bosonic_entropy(1.0), 0.0);
        assert_eq!(bosonic_entropy(1.0 - 1e-12), 0.0);
        assert_relative_eq!(bosonic_entropy(3.0), 2.0, epsilon = 1e-15);
        assert!(von_neumann_entropy(&tmsv_cm(7.0).unwrap()).unwrap() < 1e-8);
    }

    #[test]
    fn entropy_near_one_follows_series() {
        let nu = 1.0 + 1e-12;
        let d = nu - 1.0;
        let g = bosonic_entropy(nu);
        let series = (d / 2.0) * (1.0 - (d / 2.0).ln()) / std::f64::consts::LN_2;
        assert!(g < 1e-10);
        assert_relative_eq!(g, series, max_relative = 1e-9);
        // Continuity across the branch switch.
        let below = bosonic_entropy(1.0 + ENTROPY_SERIES_THRESHOLD * (1.0 - 1e-9));
        let above = bosonic_entropy(1.0 + ENTROPY_SERIES_THRESHOLD * (1.0 + 1e-9));
        assert_relative_eq!(below, above, max_relative = 1e-7);
    }
}
