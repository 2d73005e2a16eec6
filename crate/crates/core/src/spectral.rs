//! Prediction through the spectral form `g_m = Σᵢ λᵢᵐ φᵢ(z₀) vᵢ`, shared by all model kinds.

use nalgebra::DVector;

use crate::error::{KoopmanError, Result};
use crate::numerics::{Complex64, ComplexMatrix};

/// Largest tolerated imaginary part (relative to the output scale) before a
/// prediction is considered inconsistent.
pub const IMAG_RESIDUE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `g_1 … g_steps`, real parts.
    pub values: Vec<DVector<f64>>,
    /// Largest discarded imaginary part relative to `max(1, ‖g_m‖)`.
    pub max_imag_residue: f64,
    pub warnings: Vec<String>,
}

impl Prediction {
    pub fn imag_residue_ok(&self) -> bool {
        self.max_imag_residue <= IMAG_RESIDUE_TOL
    }
}

/// Eigenvalues with matching eigenfunctions and observable-space modes.
pub trait SpectralModel {
    fn eigenvalues(&self) -> &[Complex64];

    /// Columns are Koopman modes; `None` when they could not be formed.
    fn modes(&self) -> Option<&ComplexMatrix>;

    /// Length of the vectors accepted by [`SpectralModel::eigenfunctions`].
    fn input_dim(&self) -> usize;

    /// `φᵢ(z)` for every retained eigenvalue, plus any warnings raised while
    /// evaluating them.
    fn eigenfunctions(&self, z: &[f64]) -> Result<(DVector<Complex64>, Vec<String>)>;

    fn predict(&self, z0: &[f64], steps: usize) -> Result<Prediction> {
        if steps == 0 {
            return Ok(Prediction {
                values: vec![],
                max_imag_residue: 0.0,
                warnings: vec![],
            });
        }
        if z0.len() != self.input_dim() {
            return Err(KoopmanError::shape(format!(
                "initial condition has {} entries, model expects {}",
                z0.len(),
                self.input_dim()
            )));
        }
        let modes = self
            .modes()
            .ok_or_else(|| KoopmanError::Numerical("model has no usable Koopman modes".into()))?;
        let (phi, warnings) = self.eigenfunctions(z0)?;
        let lambdas = self.eigenvalues();

        let mut coeff = phi.clone();
        let mut values = Vec::with_capacity(steps);
        let mut max_imag = 0.0_f64;
        for _ in 0..steps {
            for (c, l) in coeff.iter_mut().zip(lambdas) {
                *c *= l;
            }
            let g = modes * &coeff;
            let scale = g.iter().map(|z| z.re.abs()).fold(1.0, f64::max);
            max_imag = max_imag.max(g.iter().map(|z| z.im.abs()).fold(0.0, f64::max) / scale);
            values.push(g.map(|z| z.re));
        }
        Ok(Prediction {
            values,
            max_imag_residue: max_imag,
            warnings,
        })
    }
}

/// `|φᵢ(z′) − λᵢ φᵢ(z)|` maximized over the pairs, divided by `max |φᵢ(z)|`,
/// reported separately for every eigenvalue.
pub fn functional_equation_errors<M: SpectralModel + ?Sized>(
    model: &M,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<Vec<f64>> {
    let r = model.eigenvalues().len();
    let mut worst = vec![0.0_f64; r];
    let mut scale = vec![0.0_f64; r];
    for (z, zp) in pairs {
        let (phi, _) = model.eigenfunctions(z)?;
        let (phi_next, _) = model.eigenfunctions(zp)?;
        for i in 0..r {
            let err = (phi_next[i] - model.eigenvalues()[i] * phi[i]).norm();
            worst[i] = worst[i].max(err);
            scale[i] = scale[i].max(phi[i].norm());
        }
    }
    Ok(worst
        .into_iter()
        .zip(scale)
        .map(|(w, s)| if s > 0.0 { w / s } else { w })
        .collect())
}
