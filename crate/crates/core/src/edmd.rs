//! Extended DMD: regression of the Koopman operator on snapshots lifted
//! through an explicit dictionary.

use nalgebra::DVector;

use crate::dataset::SnapshotPair;
use crate::dictionary::Dictionary;
use crate::error::{KoopmanError, Result};
use crate::numerics::{
    complex_condition_number, eig, invert_or_pinv, pinv, svd_truncated, to_complex, Complex64,
    ComplexMatrix, EigenPairs, RealMatrix, SvdFactors, SINGULAR_CONDITION,
};
use crate::spectral::SpectralModel;

#[derive(Debug, Clone)]
pub struct EdmdModel {
    pub dictionary: Dictionary,
    /// Reduced operator `Uᵀ Θ′ W Σ⁻¹` on the retained rank.
    pub k_hat: RealMatrix,
    pub eigen: EigenPairs,
    /// Row `i` holds the dictionary coefficients of `φᵢ`: `φ(z) = B θ(z)`.
    pub b_coeffs: ComplexMatrix,
    /// Observable expansion `g ≈ D θ`.
    pub d_coeffs: RealMatrix,
    /// `V = D B⁺`; absent when the eigenvector matrix is numerically singular.
    pub modes_v: Option<ComplexMatrix>,
    pub svd: SvdFactors,
    /// `‖Θ′ − U K̂ Uᵀ Θ‖_F / ‖Θ′‖_F`; large when the dictionary span is not invariant.
    pub lifted_residual: f64,
    /// `‖X − D Θ‖_F / ‖X‖_F`.
    pub d_residual: f64,
    pub observable_dim: usize,
}

/// Evaluate the dictionary on both snapshot matrices.
pub fn lift_snapshots(pair: &SnapshotPair, dict: &Dictionary) -> Result<SnapshotPair> {
    if dict.input_dim != pair.dim() {
        return Err(KoopmanError::shape(format!(
            "dictionary takes {} inputs but snapshots have {} rows",
            dict.input_dim,
            pair.dim()
        )));
    }
    Ok(SnapshotPair {
        x: dict.lift(&pair.x)?,
        xp: dict.lift(&pair.xp)?,
        col_times: pair.col_times.clone(),
    })
}

pub fn fit_edmd(pair: &SnapshotPair, dict: &Dictionary, rtol: f64) -> Result<EdmdModel> {
    if pair.is_empty() {
        return Err(KoopmanError::shape("snapshot pair has no columns"));
    }
    let lifted = lift_snapshots(pair, dict)?;
    let svd = svd_truncated(&lifted.x, rtol)?;
    let k_hat = svd.u.transpose() * &lifted.xp * &svd.w * svd.sigma_inv();
    let eigen = eig(&k_hat)?;

    let one_step = &svd.u * &k_hat * svd.u.transpose() * &lifted.x;
    let lifted_residual = (&lifted.xp - one_step).norm() / lifted.xp.norm().max(f64::MIN_POSITIVE);

    // φ(z) = P⁻¹ Uᵀ θ(z): left eigenvectors of the reduced operator, read
    // back through the retained left singular basis.
    let (p_inv, _) = invert_or_pinv(&eigen.vectors)?;
    let b_coeffs = &p_inv * to_complex(&svd.u.transpose());

    let d_coeffs = &pair.x * pinv(&lifted.x, rtol)?;
    let d_residual =
        (&pair.x - &d_coeffs * &lifted.x).norm() / pair.x.norm().max(f64::MIN_POSITIVE);

    // B⁺ = U P since U has orthonormal columns and P is invertible.
    let modes_v = (complex_condition_number(&eigen.vectors) <= SINGULAR_CONDITION)
        .then(|| to_complex(&d_coeffs) * to_complex(&svd.u) * &eigen.vectors);

    Ok(EdmdModel {
        dictionary: dict.clone(),
        k_hat,
        eigen,
        b_coeffs,
        d_coeffs,
        modes_v,
        svd,
        lifted_residual,
        d_residual,
        observable_dim: pair.dim(),
    })
}

/// `φᵢ(z) = Σₖ b_ik θₖ(z)`.
pub fn eval_eigenfunction(model: &EdmdModel, i: usize, z: &[f64]) -> Result<Complex64> {
    if i >= model.eigen.len() {
        return Err(KoopmanError::Index {
            index: i,
            len: model.eigen.len(),
        });
    }
    let theta = model.dictionary.eval(z)?;
    Ok(model
        .b_coeffs
        .row(i)
        .iter()
        .zip(theta.iter())
        .map(|(b, t)| b * t)
        .sum())
}

impl EdmdModel {
    pub fn modes_available(&self) -> bool {
        self.modes_v.is_some()
    }
}

impl SpectralModel for EdmdModel {
    fn eigenvalues(&self) -> &[Complex64] {
        &self.eigen.values
    }

    fn modes(&self) -> Option<&ComplexMatrix> {
        self.modes_v.as_ref()
    }

    fn input_dim(&self) -> usize {
        self.dictionary.input_dim
    }

    fn eigenfunctions(&self, z: &[f64]) -> Result<(DVector<Complex64>, Vec<String>)> {
        let theta = self.dictionary.eval(z)?;
        let theta = theta.map(|t| Complex64::new(t, 0.0));
        Ok((&self.b_coeffs * theta, vec![]))
    }
}
