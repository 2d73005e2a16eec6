//! Kernel EDMD: the EDMD operator expressed through Gram matrices, so the
//! dictionary is never formed explicitly.

use nalgebra::{DVector, SymmetricEigen};

use crate::dataset::SnapshotPair;
use crate::dictionary::Kernel;
use crate::error::{KoopmanError, Result};
use crate::numerics::{
    eig, invert_or_pinv, to_complex, Complex64, ComplexMatrix, EigenPairs, RealMatrix,
};
use crate::spectral::SpectralModel;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    pub kernel: Kernel,
    /// `G_ij = k(xᵢ, xⱼ)`.
    pub g_gram: RealMatrix,
    /// `Â_ij = k(xᵢ, x′ⱼ)`.
    pub a_gram: RealMatrix,
    /// Retained eigenvectors of `G`, largest first.
    pub q_eigvecs: RealMatrix,
    /// `G ≈ Q diag(σ²) Qᵀ`.
    pub sigma: Vec<f64>,
    pub k_hat_u: RealMatrix,
    /// Eigenvalues and right eigenvectors of `K̂_U`.
    pub eigen: EigenPairs,
    /// Rows are left eigenvectors of `K̂_U` (the inverse of the right eigenvector matrix).
    pub left_eigvecs: ComplexMatrix,
    /// Set when the right eigenvector matrix had to be pseudo-inverted.
    pub pinv_used: bool,
    pub training_x: RealMatrix,
    pub modes: ComplexMatrix,
}

/// `(G, Â)` for the snapshot columns of `pair`.
pub fn gram_matrices(pair: &SnapshotPair, kern: &Kernel) -> Result<(RealMatrix, RealMatrix)> {
    if pair.is_empty() {
        return Err(KoopmanError::shape("snapshot pair has no columns"));
    }
    Ok((
        kern.cross_gram(&pair.x, &pair.x)?,
        kern.cross_gram(&pair.x, &pair.xp)?,
    ))
}

/// Fit `K̂_U = Σ⁻¹ Qᵀ Â Q Σ⁻¹` from `G = Q Σ² Qᵀ`.
///
/// A direction of `G` is kept when `σᵢ > rtol·σ₁` and its Gram eigenvalue
/// clears the round-off floor `n·ε·λ_max(G)`; below that floor the
/// eigenvalues of `G` are noise from forming the Gram matrix itself.
pub fn fit_kernel_edmd(pair: &SnapshotPair, kern: &Kernel, rtol: f64) -> Result<KernelModel> {
    if !(0.0..1.0).contains(&rtol) {
        return Err(KoopmanError::Parameter(format!(
            "rtol must lie in [0, 1), got {rtol}"
        )));
    }
    let (g_gram, a_gram) = gram_matrices(pair, kern)?;
    let n = g_gram.nrows();

    let decomposition = SymmetricEigen::new(g_gram.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| decomposition.eigenvalues[b].total_cmp(&decomposition.eigenvalues[a]));
    let top = decomposition.eigenvalues[order[0]];
    if !(top > 0.0) {
        return Err(KoopmanError::EmptyRank(
            "Gram matrix is numerically zero".into(),
        ));
    }
    let floor = n as f64 * f64::EPSILON * top;
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| {
            let g = decomposition.eigenvalues[i];
            g > floor && g.sqrt() > rtol * top.sqrt()
        })
        .collect();

    let r = kept.len();
    let mut q_eigvecs = RealMatrix::zeros(n, r);
    for (col, &i) in kept.iter().enumerate() {
        q_eigvecs.set_column(col, &decomposition.eigenvectors.column(i));
    }
    let sigma: Vec<f64> = kept
        .iter()
        .map(|&i| decomposition.eigenvalues[i].sqrt())
        .collect();
    let sigma_inv =
        RealMatrix::from_diagonal(&DVector::from_iterator(r, sigma.iter().map(|s| 1.0 / s)));
    let k_hat_u = &sigma_inv * q_eigvecs.transpose() * &a_gram * &q_eigvecs * &sigma_inv;

    let eigen = eig(&k_hat_u)?;
    let (left_eigvecs, pinv_used) = invert_or_pinv(&eigen.vectors)?;

    let mut model = KernelModel {
        kernel: *kern,
        g_gram,
        a_gram,
        q_eigvecs,
        sigma,
        k_hat_u,
        eigen,
        left_eigvecs,
        pinv_used,
        training_x: pair.x.clone(),
        modes: ComplexMatrix::zeros(0, 0),
    };
    model.modes = kernel_modes(&model, &pair.x)?;
    Ok(model)
}

impl KernelModel {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    fn sigma_inv(&self) -> RealMatrix {
        RealMatrix::from_diagonal(&DVector::from_iterator(
            self.rank(),
            self.sigma.iter().map(|s| 1.0 / s),
        ))
    }

    /// `Σ⁻¹ Qᵀ [k(z, x₁) … k(z, xₙ)]ᵀ`, the coordinates of `θ(z)` in the
    /// retained principal directions.
    fn reduced_coordinates(&self, z: &[f64]) -> Result<DVector<f64>> {
        let z = RealMatrix::from_column_slice(z.len(), 1, z);
        let k = self.kernel.cross_gram(&self.training_x, &z)?;
        Ok((self.sigma_inv() * self.q_eigvecs.transpose() * k)
            .column(0)
            .into_owned())
    }
}

/// `φᵢ(z) = ξᵢᵀ Σ⁻¹ Qᵀ k(z)` with `ξᵢ` the left eigenvector of `K̂_U` for `λᵢ`.
pub fn kernel_eigenfunction(model: &KernelModel, i: usize, z: &[f64]) -> Result<Complex64> {
    if i >= model.eigen.len() {
        return Err(KoopmanError::Index {
            index: i,
            len: model.eigen.len(),
        });
    }
    let coords = model.reduced_coordinates(z)?;
    Ok(model
        .left_eigvecs
        .row(i)
        .iter()
        .zip(coords.iter())
        .map(|(l, c)| l * c)
        .sum())
}

/// Koopman modes `X Q Σ⁻¹ V` for observables `X` sampled at the training
/// snapshots, `V` being the right eigenvectors of `K̂_U`. Together with the
/// left-eigenvector eigenfunctions this gives `X ≈ Σᵢ vᵢ φᵢ`.
pub fn kernel_modes(model: &KernelModel, observed_x: &RealMatrix) -> Result<ComplexMatrix> {
    if observed_x.ncols() != model.training_x.ncols() {
        return Err(KoopmanError::shape(format!(
            "observables have {} columns but the model was trained on {}",
            observed_x.ncols(),
            model.training_x.ncols()
        )));
    }
    Ok(to_complex(&(observed_x * &model.q_eigvecs * model.sigma_inv())) * &model.eigen.vectors)
}

impl SpectralModel for KernelModel {
    fn eigenvalues(&self) -> &[Complex64] {
        &self.eigen.values
    }

    fn modes(&self) -> Option<&ComplexMatrix> {
        Some(&self.modes)
    }

    fn input_dim(&self) -> usize {
        self.training_x.nrows()
    }

    fn eigenfunctions(&self, z: &[f64]) -> Result<(DVector<Complex64>, Vec<String>)> {
        let coords = self.reduced_coordinates(z)?.map(|t| Complex64::new(t, 0.0));
        let warnings = if self.pinv_used {
            vec![
                "eigenvector matrix of the reduced operator is ill-conditioned; pseudoinverse used"
                    .into(),
            ]
        } else {
            vec![]
        };
        Ok((&self.left_eigvecs * coords, warnings))
    }
}
