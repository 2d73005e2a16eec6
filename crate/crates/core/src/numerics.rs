//! Dense linear-algebra primitives shared by every fitting pipeline.
//!
//! The decompositions are backed by `nalgebra`; this module pins down the
//! truncation rule, spectrum ordering and eigenvector normalization so that
//! spectra coming out of different algorithms can be compared directly.

use nalgebra::linalg::{Schur, SVD};
use nalgebra::{DMatrix, DVector};

use crate::error::{KoopmanError, Result};

pub use nalgebra::Complex;
pub type Complex64 = Complex<f64>;
pub type RealMatrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;

/// Relative singular-value cutoff used when the caller does not choose one.
pub const DEFAULT_RTOL: f64 = 1e-10;

/// Condition number above which a matrix is treated as numerically singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

const MAX_SWEEPS_PER_DIM: usize = 2000;

/// Shortest text that parses back to exactly `v`, switching to exponent
/// notation for very small or very large magnitudes.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

/// Reject NaN and infinite entries.
pub fn ensure_finite(m: &RealMatrix, what: &str) -> Result<()> {
    if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
        let (r, c) = (pos % m.nrows(), pos / m.nrows());
        return Err(KoopmanError::Numerical(format!(
            "{what} has a non-finite entry at ({r}, {c})"
        )));
    }
    Ok(())
}

/// Build a real matrix from row-major entries, checking shape and finiteness.
pub fn matrix_from_rows(rows: usize, cols: usize, entries: &[f64]) -> Result<RealMatrix> {
    if rows * cols != entries.len() {
        return Err(KoopmanError::shape(format!(
            "{rows}x{cols} matrix needs {} entries, got {}",
            rows * cols,
            entries.len()
        )));
    }
    let m = RealMatrix::from_row_slice(rows, cols, entries);
    ensure_finite(&m, "matrix")?;
    Ok(m)
}

pub fn to_complex(m: &RealMatrix) -> ComplexMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Truncated thin SVD `m ≈ u · diag(sigma) · wᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// Left singular vectors, one column per retained singular value.
    pub u: RealMatrix,
    /// Retained singular values, non-increasing.
    pub sigma: Vec<f64>,
    /// Right singular vectors (not transposed), one column per retained value.
    pub w: RealMatrix,
    pub rank: usize,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> RealMatrix {
        &self.u
            * RealMatrix::from_diagonal(&DVector::from_column_slice(&self.sigma))
            * self.w.transpose()
    }

    pub fn sigma_inv(&self) -> RealMatrix {
        RealMatrix::from_diagonal(&DVector::from_iterator(
            self.rank,
            self.sigma.iter().map(|s| 1.0 / s),
        ))
    }
}

fn full_svd(m: &RealMatrix) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let max_iter = MAX_SWEEPS_PER_DIM * m.nrows().max(m.ncols()).max(1);
    SVD::try_new(m.clone(), true, true, f64::EPSILON, max_iter)
        .ok_or_else(|| KoopmanError::Numerical("SVD did not converge".into()))
}

/// SVD keeping exactly the singular values `σᵢ > rtol·σ₁`.
pub fn svd_truncated(m: &RealMatrix, rtol: f64) -> Result<SvdFactors> {
    if m.is_empty() {
        return Err(KoopmanError::shape("cannot decompose an empty matrix"));
    }
    if !(0.0..1.0).contains(&rtol) {
        return Err(KoopmanError::Parameter(format!(
            "rtol {rtol} outside [0, 1)"
        )));
    }
    ensure_finite(m, "svd input")?;

    let svd = full_svd(m)?;
    let sv = &svd.singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return Err(KoopmanError::EmptyRank("matrix is identically zero".into()));
    }
    let cutoff = rtol * top;
    let rank = sv.iter().take_while(|&&s| s > cutoff).count();
    if rank == 0 {
        return Err(KoopmanError::EmptyRank(format!(
            "no singular value above {cutoff:e}"
        )));
    }

    let u = svd
        .u
        .as_ref()
        .expect("u requested")
        .columns(0, rank)
        .into_owned();
    let w = svd
        .v_t
        .as_ref()
        .expect("v_t requested")
        .rows(0, rank)
        .transpose();
    Ok(SvdFactors {
        u,
        sigma: sv.iter().take(rank).copied().collect(),
        w,
        rank,
    })
}

/// Moore–Penrose pseudoinverse through the truncated SVD. An all-zero
/// matrix maps to the all-zero transpose shape.
pub fn pinv(m: &RealMatrix, rtol: f64) -> Result<RealMatrix> {
    match svd_truncated(m, rtol) {
        Ok(f) => Ok(&f.w * f.sigma_inv() * f.u.transpose()),
        Err(KoopmanError::EmptyRank(_)) => Ok(RealMatrix::zeros(m.ncols(), m.nrows())),
        Err(e) => Err(e),
    }
}

/// Ratio of largest to smallest singular value; infinite when singular.
pub fn condition_number(m: &RealMatrix) -> f64 {
    let sv = m.singular_values();
    ratio_of_extremes(sv.iter().copied())
}

pub fn complex_condition_number(m: &ComplexMatrix) -> f64 {
    let sv = m.singular_values();
    ratio_of_extremes(sv.iter().copied())
}

fn ratio_of_extremes(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, 0.0_f64), |(lo, hi), s| {
        (lo.min(s), hi.max(s))
    });
    if hi == 0.0 || lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Pseudoinverse of a complex matrix with the same truncation rule as [`pinv`].
pub fn complex_pinv(m: &ComplexMatrix, rtol: f64) -> Result<ComplexMatrix> {
    if m.is_empty() {
        return Ok(ComplexMatrix::zeros(m.ncols(), m.nrows()));
    }
    let max_iter = MAX_SWEEPS_PER_DIM * m.nrows().max(m.ncols());
    let svd = SVD::try_new(m.clone(), true, true, f64::EPSILON, max_iter)
        .ok_or_else(|| KoopmanError::Numerical("complex SVD did not converge".into()))?;
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rtol * top;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut out = ComplexMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let v = v_t.row(k).adjoint();
            let uh = u.column(k).adjoint();
            out += (v * uh) / Complex64::new(s, 0.0);
        }
    }
    Ok(out)
}

/// Inverse of a square complex matrix, or its pseudoinverse when the
/// condition number exceeds [`SINGULAR_CONDITION`]. The flag reports which
/// route was taken.
pub fn invert_or_pinv(m: &ComplexMatrix) -> Result<(ComplexMatrix, bool)> {
    if !m.is_square() {
        return Ok((complex_pinv(m, DEFAULT_RTOL)?, true));
    }
    let cond = complex_condition_number(m);
    if cond.is_finite() && cond < SINGULAR_CONDITION {
        if let Some(inv) = m.clone().try_inverse() {
            return Ok((inv, false));
        }
    }
    Ok((complex_pinv(m, DEFAULT_RTOL)?, true))
}

/// Eigenvalues with unit-norm eigenvectors stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<Complex64>,
    pub vectors: ComplexMatrix,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest `‖M·vᵢ − λᵢ·vᵢ‖₂` over all pairs.
    pub fn max_residual(&self, m: &RealMatrix) -> f64 {
        let mc = to_complex(m);
        (0..self.len())
            .map(|i| {
                let v = self.vectors.column(i);
                (&mc * v - v * self.values[i]).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Indices that order a spectrum by descending magnitude, ties (relative
/// 1e-12) broken by descending imaginary part.
pub fn spectrum_order(values: &[Complex64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].norm().total_cmp(&values[a].norm()));

    let tie = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && tie(values[idx[end - 1]].norm(), values[idx[end]].norm()) {
            end += 1;
        }
        idx[start..end].sort_by(|&a, &b| values[b].im.total_cmp(&values[a].im));
        start = end;
    }
    idx
}

/// Unit 2-norm, first non-negligible component rotated onto the positive real axis.
fn normalize_eigenvector(v: &mut DVector<Complex64>) {
    let n = v.norm();
    if n == 0.0 {
        return;
    }
    v.unscale_mut(n);
    if let Some(c) = v.iter().copied().find(|c| c.norm() > 1e-10) {
        let phase = c.conj() / c.norm();
        *v *= phase;
    }
}

/// Right singular vectors belonging to the `count` smallest singular values
/// of `m - shift·I`.
fn null_vectors(
    m: &ComplexMatrix,
    shift: Complex64,
    count: usize,
) -> Result<Vec<DVector<Complex64>>> {
    let n = m.nrows();
    let shifted = m - ComplexMatrix::identity(n, n) * shift;
    let svd = SVD::try_new(shifted, false, true, f64::EPSILON, MAX_SWEEPS_PER_DIM * n)
        .ok_or_else(|| KoopmanError::Numerical("eigenvector SVD did not converge".into()))?;
    let v_t = svd.v_t.expect("v_t requested");
    // singular values come back sorted descending
    Ok((n - count..n).map(|k| v_t.row(k).adjoint()).collect())
}

fn null_vectors_real(m: &RealMatrix, shift: f64, count: usize) -> Result<Vec<DVector<Complex64>>> {
    let n = m.nrows();
    let shifted = m - RealMatrix::identity(n, n) * shift;
    let svd = SVD::try_new(shifted, false, true, f64::EPSILON, MAX_SWEEPS_PER_DIM * n)
        .ok_or_else(|| KoopmanError::Numerical("eigenvector SVD did not converge".into()))?;
    let v_t = svd.v_t.expect("v_t requested");
    Ok((n - count..n)
        .map(|k| v_t.row(k).transpose().map(|x| Complex64::new(x, 0.0)))
        .collect())
}

/// Eigen-decomposition of a real square matrix.
///
/// Eigenvalues come from the real Schur form, so complex values of a real
/// matrix appear as exact conjugate pairs. Each eigenvector is the null
/// direction of `M − λI`; eigenvalues closer than `1e-8·‖M‖` are treated as
/// one cluster and receive an orthonormal basis of the shared near-null
/// space. Vectors of the lower half-plane are conjugates of their partners.
pub fn eig(m: &RealMatrix) -> Result<EigenPairs> {
    if !m.is_square() {
        return Err(KoopmanError::shape(format!(
            "eig needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    ensure_finite(m, "eig input")?;
    let n = m.nrows();
    if n == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: ComplexMatrix::zeros(0, 0),
        });
    }

    let schur = Schur::try_new(m.clone(), f64::EPSILON, MAX_SWEEPS_PER_DIM * n)
        .ok_or_else(|| KoopmanError::Numerical("Schur iteration did not converge".into()))?;
    let raw: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    let order = spectrum_order(&raw);
    let values: Vec<Complex64> = order.iter().map(|&i| raw[i]).collect();

    let scale = m.norm().max(f64::MIN_POSITIVE);
    let tol = 1e-8 * scale.max(1.0);
    let mc = to_complex(m);
    let mut vectors: Vec<Option<DVector<Complex64>>> = vec![None; n];

    let mut assigned = vec![false; n];
    for i in 0..n {
        if assigned[i] || values[i].im < 0.0 {
            continue;
        }
        let real = values[i].im == 0.0;
        let members: Vec<usize> = (i..n)
            .filter(|&j| {
                !assigned[j]
                    && (values[j].im == 0.0) == real
                    && values[j].im >= 0.0
                    && (values[j] - values[i]).norm() <= tol
            })
            .collect();
        let mean = members.iter().map(|&j| values[j]).sum::<Complex64>() / members.len() as f64;
        let basis = if real {
            null_vectors_real(m, mean.re, members.len())?
        } else {
            null_vectors(&mc, mean, members.len())?
        };
        for (&j, v) in members.iter().zip(basis) {
            assigned[j] = true;
            vectors[j] = Some(v);
        }
    }

    // lower half-plane: conjugate the closest unused upper-half partner
    let mut used_partner = vec![false; n];
    for j in 0..n {
        if values[j].im >= 0.0 {
            continue;
        }
        let target = values[j].conj();
        let partner = (0..n)
            .filter(|&k| values[k].im > 0.0 && !used_partner[k])
            .min_by(|&a, &b| {
                (values[a] - target)
                    .norm()
                    .total_cmp(&(values[b] - target).norm())
            });
        let v = match partner {
            Some(k) => {
                used_partner[k] = true;
                vectors[k]
                    .as_ref()
                    .expect("upper half filled")
                    .map(|c| c.conj())
            }
            None => null_vectors(&mc, values[j], 1)?.remove(0),
        };
        vectors[j] = Some(v);
    }

    let mut out = ComplexMatrix::zeros(n, n);
    for (j, v) in vectors.into_iter().enumerate() {
        let mut v = v.expect("every eigenvalue received a vector");
        normalize_eigenvector(&mut v);
        out.set_column(j, &v);
    }
    Ok(EigenPairs {
        values,
        vectors: out,
    })
}

/// Largest pairwise distance after matching the two spectra closest pair
/// first; infinite when the lengths differ. Insensitive to ordering, so ties
/// in modulus cannot mis-pair values.
pub fn spectral_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            candidates.push(((x - y).norm(), i, j));
        }
    }
    candidates.sort_by(|p, q| p.0.total_cmp(&q.0));
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    let mut worst = 0.0_f64;
    for (d, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            worst = worst.max(d);
        }
    }
    worst
}

/// Distance from each wanted value to the nearest member of `spectrum`,
/// with every member used at most once. Returns the largest such distance.
pub fn containment_distance(spectrum: &[Complex64], wanted: &[Complex64]) -> f64 {
    let mut used = vec![false; spectrum.len()];
    let mut worst = 0.0_f64;
    for w in wanted {
        let best = (0..spectrum.len()).filter(|&k| !used[k]).min_by(|&a, &b| {
            (spectrum[a] - w)
                .norm()
                .total_cmp(&(spectrum[b] - w).norm())
        });
        match best {
            Some(k) => {
                used[k] = true;
                worst = worst.max((spectrum[k] - w).norm());
            }
            None => return f64::INFINITY,
        }
    }
    worst
}

/// Sine of the angle between two complex vectors, insensitive to scale and phase.
pub fn angle_between(a: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let ua = a / Complex64::new(na, 0.0);
    let ub = b / Complex64::new(nb, 0.0);
    let proj = ub.dotc(&ua);
    (&ua - &ub * proj).norm()
}

/// Least-squares solve `a · x ≈ b` for complex systems via the truncated
/// pseudoinverse; also returns whether `a` had deficient column rank.
pub fn complex_lstsq(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    rtol: f64,
) -> Result<(ComplexMatrix, bool)> {
    let p = complex_pinv(a, rtol)?;
    let sv = a.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > rtol * top && s > 0.0).count();
    Ok((p * b, rank < a.ncols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn svd_of_diagonal_keeps_both_values() {
        let m = RealMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let f = svd_truncated(&m, 0.0).unwrap();
        assert_eq!(f.rank, 2);
        assert!((f.sigma[0] - 3.0).abs() < 1e-14 && (f.sigma[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_truncates_tiny_singular_value() {
        let m = RealMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1e-12]));
        let f = svd_truncated(&m, 1e-8).unwrap();
        assert_eq!(f.rank, 1);
        assert!((f.sigma[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn svd_recovers_constructed_rank() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let left = RealMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let right = RealMatrix::from_fn(3, 20, |_, _| rng.random_range(-1.0..1.0));
        let f = svd_truncated(&(left * right), 1e-10).unwrap();
        assert_eq!(f.rank, 3);
    }

    #[test]
    fn svd_of_zero_matrix_is_empty_rank() {
        let err = svd_truncated(&RealMatrix::zeros(3, 2), 1e-10).unwrap_err();
        assert!(matches!(err, KoopmanError::EmptyRank(_)));
    }

    #[test]
    fn svd_rejects_bad_rtol_and_nan() {
        let m = RealMatrix::identity(2, 2);
        assert!(matches!(
            svd_truncated(&m, 1.0),
            Err(KoopmanError::Parameter(_))
        ));
        let mut bad = m.clone();
        bad[(0, 1)] = f64::NAN;
        assert!(svd_truncated(&bad, 0.0).is_err());
    }

    #[test]
    fn eig_of_diagonal() {
        let m = RealMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.5]);
        let e = eig(&m).unwrap();
        assert!((e.values[0] - c(0.9, 0.0)).norm() < 1e-14);
        assert!((e.values[1] - c(0.5, 0.0)).norm() < 1e-14);
        assert!(e.max_residual(&m) < 1e-12);
    }

    #[test]
    fn eig_of_rotation_orders_positive_imaginary_first() {
        let t: f64 = 0.3;
        let m = RealMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        let e = eig(&m).unwrap();
        assert!((e.values[0] - c(t.cos(), t.sin())).norm() < 1e-14);
        assert!((e.values[1] - c(t.cos(), -t.sin())).norm() < 1e-14);
        assert!(e.max_residual(&m) < 1e-12);
        // conjugate vectors for conjugate values
        let diff = e.vectors.column(0).map(|z| z.conj()) - e.vectors.column(1);
        assert!(diff.norm() < 1e-14);
    }

    #[test]
    fn eig_of_companion_matrix_finds_polynomial_roots() {
        // z² − 5z + 6 = (z − 2)(z − 3); companion with subdiagonal one, last column [−6, 5]
        let m = RealMatrix::from_row_slice(2, 2, &[0.0, -6.0, 1.0, 5.0]);
        let e = eig(&m).unwrap();
        assert!((e.values[0] - c(3.0, 0.0)).norm() < 1e-12);
        assert!((e.values[1] - c(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn eig_rejects_non_square() {
        assert!(matches!(
            eig(&RealMatrix::zeros(2, 3)),
            Err(KoopmanError::Shape(_))
        ));
    }

    #[test]
    fn eig_repeated_eigenvalue_gets_independent_vectors() {
        let m = RealMatrix::identity(3, 3) * 0.7;
        let e = eig(&m).unwrap();
        assert!(e.max_residual(&m) < 1e-12);
        let det = e.vectors.determinant().norm();
        assert!(det > 0.99, "vectors should be orthonormal, |det| = {det}");
    }

    #[test]
    fn eigenvectors_are_normalized_with_positive_leading_entry() {
        let m = RealMatrix::from_row_slice(3, 3, &[0.2, -0.7, 0.1, 0.5, 0.3, -0.2, 0.0, 0.4, 0.6]);
        let e = eig(&m).unwrap();
        for j in 0..3 {
            let v = e.vectors.column(j);
            assert!((v.norm() - 1.0).abs() < 1e-12);
            let lead = v.iter().find(|z| z.norm() > 1e-10).unwrap();
            assert!(lead.im.abs() < 1e-14 && lead.re > 0.0);
        }
    }

    #[test]
    fn pinv_of_singular_diagonal() {
        let m = RealMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        let p = pinv(&m, DEFAULT_RTOL).unwrap();
        let want = RealMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.0]));
        assert!((p - want).norm() < 1e-15);
    }

    #[test]
    fn pinv_of_identity() {
        let p = pinv(&RealMatrix::identity(3, 3), DEFAULT_RTOL).unwrap();
        assert!((p - RealMatrix::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn pinv_of_full_row_rank_is_right_inverse() {
        let m = RealMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.3, 2.0]);
        let p = pinv(&m, DEFAULT_RTOL).unwrap();
        assert!((&m * &p - RealMatrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn pinv_of_zero_is_zero() {
        let p = pinv(&RealMatrix::zeros(2, 3), DEFAULT_RTOL).unwrap();
        assert_eq!(p.shape(), (3, 2));
        assert_eq!(p.norm(), 0.0);
    }

    #[test]
    fn spectrum_order_breaks_ties_by_imaginary_part() {
        let vals = vec![c(0.0, -1.0), c(1.0, 0.0), c(0.0, 1.0), c(0.5, 0.0)];
        let order = spectrum_order(&vals);
        assert_eq!(order, vec![2, 1, 0, 3]);
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = RealMatrix> {
        prop::collection::vec(-1.0f64..1.0, rows * cols)
            .prop_map(move |v| RealMatrix::from_row_slice(rows, cols, &v))
    }

    proptest! {
        #[test]
        fn eig_residual_is_small((n, m) in (1usize..7).prop_flat_map(|n| (Just(n), arb_matrix(n, n)))) {
            let _ = n;
            let e = eig(&m).unwrap();
            prop_assert!(e.max_residual(&m) <= 1e-8 * m.norm().max(1e-300));
            // conjugate closure
            for v in &e.values {
                if v.im != 0.0 {
                    prop_assert!(e.values.iter().any(|w| (w - v.conj()).norm() < 1e-10));
                }
            }
        }

        #[test]
        fn svd_reconstructs_within_tolerance(m in arb_matrix(4, 7), rtol in 0.0f64..1e-3) {
            let f = svd_truncated(&m, rtol).unwrap();
            prop_assert!(f.sigma.windows(2).all(|p| p[0] >= p[1]));
            let err = (f.reconstruct() - &m).norm() / m.norm();
            prop_assert!(err <= (rtol * (f.rank as f64).sqrt()).max(1e-8));
            let utu = f.u.transpose() * &f.u;
            prop_assert!((utu - RealMatrix::identity(f.rank, f.rank)).norm() < 1e-10);
            let wtw = f.w.transpose() * &f.w;
            prop_assert!((wtw - RealMatrix::identity(f.rank, f.rank)).norm() < 1e-10);
        }

        #[test]
        fn pinv_satisfies_penrose_conditions(m in arb_matrix(6, 4)) {
            let p = pinv(&m, DEFAULT_RTOL).unwrap();
            let rel = |a: RealMatrix, b: &RealMatrix| (a - b).norm() / b.norm().max(1e-300);
            prop_assert!(rel(&m * &p * &m, &m) < 1e-8);
            prop_assert!(rel(&p * &m * &p, &p) < 1e-8);
            let mp = &m * &p;
            prop_assert!(rel(mp.transpose(), &mp) < 1e-8);
            let pm = &p * &m;
            prop_assert!(rel(pm.transpose(), &pm) < 1e-8);
        }
    }
}
