//! Companion-matrix DMD and SVD-based DMD.

use std::fmt;

use nalgebra::DVector;

use crate::dataset::SnapshotPair;
use crate::error::{KoopmanError, Result};
use crate::numerics::{
    self, condition_number, eig, invert_or_pinv, pinv, svd_truncated, to_complex, Complex64,
    ComplexMatrix, EigenPairs, RealMatrix, SvdFactors, DEFAULT_RTOL, SINGULAR_CONDITION,
};
use crate::spectral::SpectralModel;

/// Eigenvalues smaller than this are not inverted when forming modes.
pub const ZERO_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Companion,
    Dmd,
    Edmd,
    KernelEdmd,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Companion => "companion",
            Algorithm::Dmd => "dmd",
            Algorithm::Edmd => "edmd",
            Algorithm::KernelEdmd => "kernel-edmd",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = KoopmanError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "companion" => Ok(Algorithm::Companion),
            "dmd" => Ok(Algorithm::Dmd),
            "edmd" => Ok(Algorithm::Edmd),
            "kernel-edmd" => Ok(Algorithm::KernelEdmd),
            other => Err(KoopmanError::Parameter(format!(
                "unknown algorithm `{other}`"
            ))),
        }
    }
}

/// Reduced Koopman operator with its spectrum and observable-space modes.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    pub k_hat: RealMatrix,
    pub eigenvalues: Vec<Complex64>,
    pub eigenvectors_p: ComplexMatrix,
    pub modes_v: ComplexMatrix,
    pub svd: SvdFactors,
    pub algorithm: Algorithm,
    pub observable_dim: usize,
    /// Modes left as zero columns because their eigenvalue vanished.
    pub zero_modes: Vec<usize>,
    /// `‖X′ − Û X‖_F / ‖X′‖_F` where `Û` is the fitted one-step map.
    pub fit_residual: f64,
    /// `‖X′ − V Λ Φ(X)‖_F / ‖X′‖_F` with `Φ` the projections onto the modes.
    pub spectral_residual: f64,
    /// Fitted from a single snapshot pair.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmdModes {
    pub modes: ComplexMatrix,
    pub zero_modes: Vec<usize>,
}

fn exact_modes(projected: &RealMatrix, eigen: &EigenPairs) -> DmdModes {
    // vᵢ = X′ W Σ⁻¹ pᵢ / λᵢ
    let base = to_complex(projected) * &eigen.vectors;
    let mut modes = ComplexMatrix::zeros(projected.nrows(), eigen.len());
    let mut zero_modes = vec![];
    for (i, &l) in eigen.values.iter().enumerate() {
        if l.norm() < ZERO_EIGENVALUE {
            zero_modes.push(i);
        } else {
            modes.set_column(i, &(base.column(i) / l));
        }
    }
    DmdModes { modes, zero_modes }
}

/// Relative error of `X′ ≈ V Λ V⁺ X`.
fn spectral_residual(
    pair: &SnapshotPair,
    modes: &ComplexMatrix,
    values: &[Complex64],
) -> Result<f64> {
    let (phi, _) = numerics::complex_lstsq(modes, &to_complex(&pair.x), DEFAULT_RTOL)?;
    let lambda = ComplexMatrix::from_diagonal(&DVector::from_column_slice(values));
    let recon = modes * lambda * phi;
    let xp = to_complex(&pair.xp);
    Ok((xp.clone() - recon).norm() / xp.norm().max(f64::MIN_POSITIVE))
}

/// SVD-DMD: `K̂ = Uᵀ X′ W Σ⁻¹` on the rank retained by `rtol`.
pub fn fit_svd_dmd(pair: &SnapshotPair, rtol: f64) -> Result<KoopmanModel> {
    if pair.is_empty() {
        return Err(KoopmanError::shape("snapshot pair has no columns"));
    }
    let svd = svd_truncated(&pair.x, rtol)?;
    let projected = &pair.xp * &svd.w * svd.sigma_inv();
    let k_hat = svd.u.transpose() * &projected;
    let eigen = eig(&k_hat)?;
    let DmdModes { modes, zero_modes } = exact_modes(&projected, &eigen);

    let one_step = &svd.u * &k_hat * svd.u.transpose() * &pair.x;
    let fit_residual = (&pair.xp - one_step).norm() / pair.xp.norm().max(f64::MIN_POSITIVE);
    let spectral_residual = spectral_residual(pair, &modes, &eigen.values)?;

    Ok(KoopmanModel {
        k_hat,
        eigenvalues: eigen.values,
        eigenvectors_p: eigen.vectors,
        modes_v: modes,
        svd,
        algorithm: Algorithm::Dmd,
        observable_dim: pair.dim(),
        zero_modes,
        fit_residual,
        spectral_residual,
        degenerate: pair.len() < 2,
    })
}

/// Koopman modes `vᵢ = (1/λᵢ) X′ W Σ⁻¹ pᵢ` of a model fitted on `pair`.
pub fn dmd_modes(model: &KoopmanModel, pair: &SnapshotPair) -> Result<DmdModes> {
    if model.algorithm != Algorithm::Dmd {
        return Err(KoopmanError::Config(format!(
            "exact DMD modes need an SVD-DMD model, got {}",
            model.algorithm
        )));
    }
    if pair.dim() != model.observable_dim || pair.len() != model.svd.w.nrows() {
        return Err(KoopmanError::shape(
            "snapshot pair does not match the fitted model",
        ));
    }
    let projected = &pair.xp * &model.svd.w * model.svd.sigma_inv();
    let eigen = EigenPairs {
        values: model.eigenvalues.clone(),
        vectors: model.eigenvectors_p.clone(),
    };
    Ok(exact_modes(&projected, &eigen))
}

impl KoopmanModel {
    /// One-step map on the observable space, `U K̂ Uᵀ`. Only SVD-DMD models
    /// act on observables directly.
    pub fn full_operator(&self) -> Option<RealMatrix> {
        (self.algorithm == Algorithm::Dmd)
            .then(|| &self.svd.u * &self.k_hat * self.svd.u.transpose())
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }
}

impl SpectralModel for KoopmanModel {
    fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    fn modes(&self) -> Option<&ComplexMatrix> {
        Some(&self.modes_v)
    }

    fn input_dim(&self) -> usize {
        self.observable_dim
    }

    /// Least-squares expansion coefficients of `g` in the mode basis.
    fn eigenfunctions(&self, g: &[f64]) -> Result<(DVector<Complex64>, Vec<String>)> {
        if g.len() != self.observable_dim {
            return Err(KoopmanError::shape(format!(
                "observable has {} entries, model expects {}",
                g.len(),
                self.observable_dim
            )));
        }
        let rhs =
            ComplexMatrix::from_iterator(g.len(), 1, g.iter().map(|&v| Complex64::new(v, 0.0)));
        let (phi, deficient) = numerics::complex_lstsq(&self.modes_v, &rhs, DEFAULT_RTOL)?;
        let warnings = if deficient {
            vec!["mode matrix is rank-deficient; eigenfunction values are a least-squares projection".into()]
        } else {
            vec![]
        };
        Ok((phi.column(0).into_owned(), warnings))
    }
}

/// Companion-matrix fit `X′ = X C` on a Krylov window of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionFit {
    /// Subdiagonal ones with the regression coefficients in the last column.
    pub c_matrix: RealMatrix,
    pub eigenvalues: Vec<Complex64>,
    /// Row `i` is `[1, λᵢ, λᵢ², …]`.
    pub vandermonde_t: ComplexMatrix,
    /// Number of leading snapshot columns used.
    pub window: usize,
    /// `‖x_m − X c‖ / ‖x_m‖` for the regressed column.
    pub fit_residual: f64,
}

/// Fit the companion matrix on the first `m` columns, `m` being the
/// numerical rank of the snapshots, so that `X` has full column rank.
/// The coefficient column solves `min ‖X c − x_m‖` by pseudoinverse.
pub fn fit_companion(pair: &SnapshotPair) -> Result<CompanionFit> {
    if pair.len() < 2 {
        return Err(KoopmanError::shape(format!(
            "companion fit needs at least 2 snapshot pairs, got {}",
            pair.len()
        )));
    }
    let rank = svd_truncated(&pair.x, DEFAULT_RTOL)?.rank;
    let m = rank.min(pair.len());
    if let Some(j) = (1..m).find(|&j| {
        let (a, b) = (pair.col_times[j - 1], pair.col_times[j]);
        a.segment != b.segment || b.step != a.step + 1
    }) {
        return Err(KoopmanError::Config(format!(
            "companion fit needs consecutive snapshots; column {j} starts a new segment"
        )));
    }

    let window = pair.x.columns(0, m).into_owned();
    let cond = condition_number(&window);
    if !(cond < SINGULAR_CONDITION) {
        return Err(KoopmanError::Conditioning(format!(
            "snapshot window has condition number {cond:e}; use SVD-based DMD instead"
        )));
    }
    let target = pair.xp.column(m - 1).into_owned();
    let c = pinv(&window, DEFAULT_RTOL)? * &target;
    let fit_residual = (&window * &c - &target).norm() / target.norm().max(f64::MIN_POSITIVE);

    let mut c_matrix = RealMatrix::zeros(m, m);
    for i in 1..m {
        c_matrix[(i, i - 1)] = 1.0;
    }
    c_matrix.set_column(m - 1, &c);

    let eigen = eig(&c_matrix)?;
    let vandermonde_t = ComplexMatrix::from_fn(m, m, |i, k| eigen.values[i].powu(k as u32));
    Ok(CompanionFit {
        c_matrix,
        eigenvalues: eigen.values,
        vandermonde_t,
        window: m,
        fit_residual,
    })
}

impl CompanionFit {
    /// Columns of `X T⁻¹`, the modes scaled by their eigenfunction values
    /// at the first snapshot. The flag is set when `T` had to be pseudo-inverted.
    pub fn modes(&self, pair: &SnapshotPair) -> Result<(ComplexMatrix, bool)> {
        let window = to_complex(&pair.x.columns(0, self.window).into_owned());
        let (t_inv, pinv_used) = invert_or_pinv(&self.vandermonde_t)?;
        Ok((window * t_inv, pinv_used))
    }

    /// Package as a [`KoopmanModel`] with `K̂ = C` and modes `X T⁻¹`.
    pub fn into_model(self, pair: &SnapshotPair) -> Result<KoopmanModel> {
        let (modes, _) = self.modes(pair)?;
        let window = pair.x.columns(0, self.window).into_owned();
        let svd = svd_truncated(&window, 0.0)?;
        let eigen = eig(&self.c_matrix)?;
        let window_pair = SnapshotPair::new(window, pair.xp.columns(0, self.window).into_owned())?;
        let spectral_residual = spectral_residual(&window_pair, &modes, &eigen.values)?;
        Ok(KoopmanModel {
            k_hat: self.c_matrix,
            eigenvalues: eigen.values,
            eigenvectors_p: eigen.vectors,
            modes_v: modes,
            svd,
            algorithm: Algorithm::Companion,
            observable_dim: pair.dim(),
            zero_modes: vec![],
            fit_residual: self.fit_residual,
            spectral_residual,
            degenerate: false,
        })
    }
}
