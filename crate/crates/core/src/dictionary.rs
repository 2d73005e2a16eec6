//! Observable dictionaries for EDMD and kernels for kernel EDMD.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{KoopmanError, Result};
use crate::numerics::RealMatrix;

/// A named scalar observable for hand-built dictionaries.
#[derive(Clone)]
pub struct NamedFunction {
    pub name: String,
    pub func: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl NamedFunction {
    pub fn new(
        name: impl Into<String>,
        func: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        NamedFunction {
            name: name.into(),
            func: Arc::new(func),
        }
    }
}

impl fmt::Debug for NamedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("NamedFunction").field(&self.name).finish()
    }
}

#[derive(Debug, Clone)]
pub enum DictionaryKind {
    Identity,
    /// Monomials `z^e` for each exponent vector, optionally scaled.
    Polynomial {
        degree: u32,
        exponents: Vec<Vec<u32>>,
        weights: Option<Vec<f64>>,
    },
    /// Gaussian bumps `exp(−‖z − c‖² / σ²)`.
    Rbf {
        centers: Vec<Vec<f64>>,
        width: f64,
    },
    Custom(Vec<NamedFunction>),
}

#[derive(Debug, Clone)]
pub struct Dictionary {
    pub kind: DictionaryKind,
    pub input_dim: usize,
}

/// All exponent vectors of total degree `<= degree` in `dim` variables,
/// ordered by total degree, then descending lexicographically
/// (`1, x1, x2, x1², x1x2, x2², …`).
pub fn monomial_exponents(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    fn fill(dim: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == dim {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            fill(dim, remaining - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = vec![];
    for total in 0..=degree {
        if dim == 0 {
            if total == 0 {
                out.push(vec![]);
            }
            continue;
        }
        fill(dim, total, &mut Vec::with_capacity(dim), &mut out);
    }
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `sqrt(C(α, |e|) · |e|! / ∏ eᵢ!)`, the scale that makes weighted monomial
/// features reproduce `(1 + aᵀb)^α` as a plain inner product.
pub fn polynomial_kernel_weight(degree: u32, exponent: &[u32]) -> f64 {
    let total: u32 = exponent.iter().sum();
    let binom = factorial(degree) / (factorial(total) * factorial(degree - total));
    let multinomial = factorial(total) / exponent.iter().map(|&e| factorial(e)).product::<f64>();
    (binom * multinomial).sqrt()
}

impl Dictionary {
    pub fn identity(input_dim: usize) -> Self {
        Dictionary {
            kind: DictionaryKind::Identity,
            input_dim,
        }
    }

    pub fn polynomial(input_dim: usize, degree: u32) -> Self {
        Dictionary {
            kind: DictionaryKind::Polynomial {
                degree,
                exponents: monomial_exponents(input_dim, degree),
                weights: None,
            },
            input_dim,
        }
    }

    /// Monomials scaled so that `θ(a)ᵀθ(b) = (1 + aᵀb)^degree`.
    pub fn polynomial_kernel_features(input_dim: usize, degree: u32) -> Self {
        let exponents = monomial_exponents(input_dim, degree);
        let weights = exponents
            .iter()
            .map(|e| polynomial_kernel_weight(degree, e))
            .collect();
        Dictionary {
            kind: DictionaryKind::Polynomial {
                degree,
                exponents,
                weights: Some(weights),
            },
            input_dim,
        }
    }

    /// An explicit monomial subset, e.g. `[[0,0],[1,0],[0,1],[2,0]]`.
    pub fn monomials(input_dim: usize, exponents: Vec<Vec<u32>>) -> Result<Self> {
        if let Some(e) = exponents.iter().find(|e| e.len() != input_dim) {
            return Err(KoopmanError::shape(format!(
                "exponent {e:?} does not have {input_dim} entries"
            )));
        }
        let degree = exponents.iter().map(|e| e.iter().sum()).max().unwrap_or(0);
        Ok(Dictionary {
            kind: DictionaryKind::Polynomial {
                degree,
                exponents,
                weights: None,
            },
            input_dim,
        })
    }

    pub fn rbf(centers: Vec<Vec<f64>>, width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(KoopmanError::Parameter(format!(
                "rbf width must be positive, got {width}"
            )));
        }
        let input_dim = centers.first().map_or(0, Vec::len);
        if centers.is_empty() || centers.iter().any(|c| c.len() != input_dim) {
            return Err(KoopmanError::shape(
                "rbf centers must be non-empty and share one dimension",
            ));
        }
        Ok(Dictionary {
            kind: DictionaryKind::Rbf { centers, width },
            input_dim,
        })
    }

    pub fn custom(input_dim: usize, functions: Vec<NamedFunction>) -> Self {
        Dictionary {
            kind: DictionaryKind::Custom(functions),
            input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.kind {
            DictionaryKind::Identity => self.input_dim,
            DictionaryKind::Polynomial { exponents, .. } => exponents.len(),
            DictionaryKind::Rbf { centers, .. } => centers.len(),
            DictionaryKind::Custom(fs) => fs.len(),
        }
    }

    pub fn eval(&self, z: &[f64]) -> Result<DVector<f64>> {
        if z.len() != self.input_dim {
            return Err(KoopmanError::shape(format!(
                "dictionary expects {} inputs, got {}",
                self.input_dim,
                z.len()
            )));
        }
        let values: Vec<f64> = match &self.kind {
            DictionaryKind::Identity => z.to_vec(),
            DictionaryKind::Polynomial {
                exponents, weights, ..
            } => exponents
                .iter()
                .enumerate()
                .map(|(k, e)| {
                    let m: f64 = z.iter().zip(e).map(|(v, &p)| v.powi(p as i32)).product();
                    weights.as_ref().map_or(m, |w| w[k] * m)
                })
                .collect(),
            DictionaryKind::Rbf { centers, width } => centers
                .iter()
                .map(|c| (-squared_distance(z, c) / (width * width)).exp())
                .collect(),
            DictionaryKind::Custom(fs) => fs.iter().map(|f| (f.func)(z)).collect(),
        };
        Ok(DVector::from_vec(values))
    }

    /// Evaluate on every column of `m`.
    pub fn lift(&self, m: &RealMatrix) -> Result<RealMatrix> {
        let mut out = RealMatrix::zeros(self.output_dim(), m.ncols());
        for j in 0..m.ncols() {
            let col: Vec<f64> = m.column(j).iter().copied().collect();
            out.set_column(j, &self.eval(&col)?);
        }
        Ok(out)
    }

    /// Position of the constant function, if the dictionary has one.
    pub fn constant_index(&self) -> Option<usize> {
        match &self.kind {
            DictionaryKind::Polynomial { exponents, .. } => {
                exponents.iter().position(|e| e.iter().all(|&p| p == 0))
            }
            _ => None,
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Textual dictionary choice before any data-dependent resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum DictionarySpec {
    Identity,
    Polynomial(u32),
    /// Monomials carrying the polynomial-kernel weights.
    WeightedPolynomial(u32),
    Rbf {
        width: f64,
        centers: usize,
    },
}

impl DictionarySpec {
    /// Resolve against the training columns; rbf centers are a uniformly
    /// strided subsample of them.
    pub fn build(&self, training: &RealMatrix) -> Result<Dictionary> {
        let dim = training.nrows();
        Ok(match *self {
            DictionarySpec::Identity => Dictionary::identity(dim),
            DictionarySpec::Polynomial(a) => Dictionary::polynomial(dim, a),
            DictionarySpec::WeightedPolynomial(a) => Dictionary::polynomial_kernel_features(dim, a),
            DictionarySpec::Rbf { width, centers } => {
                let n = training.ncols();
                if n == 0 || centers == 0 {
                    return Err(KoopmanError::Parameter(
                        "rbf needs at least one center".into(),
                    ));
                }
                let count = centers.min(n);
                let picked = (0..count)
                    .map(|k| training.column(k * n / count).iter().copied().collect())
                    .collect();
                Dictionary::rbf(picked, width)?
            }
        })
    }
}

fn parse_number<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| KoopmanError::Parameter(format!("invalid {what} `{s}`")))
}

impl std::str::FromStr for DictionarySpec {
    type Err = KoopmanError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["identity"] => Ok(DictionarySpec::Identity),
            ["poly", a] => Ok(DictionarySpec::Polynomial(parse_number(a, "degree")?)),
            ["wpoly", a] => Ok(DictionarySpec::WeightedPolynomial(parse_number(
                a, "degree",
            )?)),
            ["rbf", w, c] => {
                let width: f64 = parse_number(w, "rbf width")?;
                if !(width.is_finite() && width > 0.0) {
                    return Err(KoopmanError::Parameter(format!(
                        "rbf width must be positive, got {width}"
                    )));
                }
                Ok(DictionarySpec::Rbf {
                    width,
                    centers: parse_number(c, "rbf center count")?,
                })
            }
            _ => Err(KoopmanError::Parameter(format!(
                "unknown dictionary `{s}` (expected identity, poly:A, wpoly:A or rbf:WIDTH:CENTERS)"
            ))),
        }
    }
}

impl fmt::Display for DictionarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DictionarySpec::Identity => write!(f, "identity"),
            DictionarySpec::Polynomial(a) => write!(f, "poly:{a}"),
            DictionarySpec::WeightedPolynomial(a) => write!(f, "wpoly:{a}"),
            DictionarySpec::Rbf { width, centers } => write!(f, "rbf:{width}:{centers}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `(1 + aᵀb)^degree`
    Polynomial { degree: u32 },
    /// `exp(−‖a − b‖² / σ²)`
    Gaussian { sigma: f64 },
    /// `exp(−‖a − b‖ / σ²)`, unsquared norm.
    Exponential { sigma: f64 },
}

impl Kernel {
    pub fn polynomial(degree: u32) -> Self {
        Kernel::Polynomial { degree }
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Kernel::Gaussian { sigma })
    }

    pub fn exponential(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Kernel::Exponential { sigma })
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(KoopmanError::shape(format!(
                "kernel arguments have lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        Ok(self.eval_unchecked(a, b))
    }

    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Polynomial { degree } => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                (1.0 + dot).powi(degree as i32)
            }
            Kernel::Gaussian { sigma } => (-squared_distance(a, b) / (sigma * sigma)).exp(),
            Kernel::Exponential { sigma } => {
                (-squared_distance(a, b).sqrt() / (sigma * sigma)).exp()
            }
        }
    }

    /// Matrix of `k(aᵢ, bⱼ)` over the columns of `a` and `b`.
    pub fn cross_gram(&self, a: &RealMatrix, b: &RealMatrix) -> Result<RealMatrix> {
        if a.nrows() != b.nrows() {
            return Err(KoopmanError::shape(format!(
                "kernel columns have dimensions {} and {}",
                a.nrows(),
                b.nrows()
            )));
        }
        let cols_a: Vec<Vec<f64>> = a
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect();
        let cols_b: Vec<Vec<f64>> = b
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect();
        Ok(RealMatrix::from_fn(a.ncols(), b.ncols(), |i, j| {
            self.eval_unchecked(&cols_a[i], &cols_b[j])
        }))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma == 0.0 || !sigma.is_finite() {
        return Err(KoopmanError::Parameter(format!(
            "kernel width must be finite and nonzero, got {sigma}"
        )));
    }
    Ok(())
}

impl std::str::FromStr for Kernel {
    type Err = KoopmanError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["poly", a] => Ok(Kernel::polynomial(parse_number(a, "degree")?)),
            ["gaussian", w] => Kernel::gaussian(parse_number(w, "kernel width")?),
            ["exponential", w] => Kernel::exponential(parse_number(w, "kernel width")?),
            _ => Err(KoopmanError::Parameter(format!(
                "unknown kernel `{s}` (expected poly:A, gaussian:SIGMA or exponential:SIGMA)"
            ))),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Polynomial { degree } => write!(f, "poly:{degree}"),
            Kernel::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            Kernel::Exponential { sigma } => write!(f, "exponential:{sigma}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binomial(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    #[test]
    fn scalar_quadratic_monomials() {
        let d = Dictionary::polynomial(1, 2);
        assert_eq!(d.eval(&[3.0]).unwrap().as_slice(), &[1.0, 3.0, 9.0]);
    }

    #[test]
    fn identity_passes_through() {
        let d = Dictionary::identity(2);
        assert_eq!(d.eval(&[2.0, 5.0]).unwrap().as_slice(), &[2.0, 5.0]);
    }

    #[test]
    fn two_variable_quadratic_ordering() {
        let d = Dictionary::polynomial(2, 2);
        assert_eq!(d.output_dim(), binomial(4, 2) as usize);
        let (x1, x2) = (2.0, 3.0);
        assert_eq!(
            d.eval(&[x1, x2]).unwrap().as_slice(),
            &[1.0, x1, x2, x1 * x1, x1 * x2, x2 * x2]
        );
    }

    #[test]
    fn monomial_count_matches_binomial() {
        for dim in 1..5 {
            for deg in 0..5 {
                let n = monomial_exponents(dim, deg).len() as u64;
                assert_eq!(
                    n,
                    binomial(dim as u64 + deg as u64, deg as u64),
                    "dim {dim} deg {deg}"
                );
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        assert!(matches!(
            Dictionary::polynomial(2, 2).eval(&[1.0]),
            Err(KoopmanError::Shape(_))
        ));
    }

    #[test]
    fn polynomial_kernel_values() {
        let k = Kernel::polynomial(2);
        assert_eq!(k.eval(&[0.0], &[0.0]).unwrap(), 1.0);
        assert_eq!(k.eval(&[1.0], &[2.0]).unwrap(), 9.0);
    }

    #[test]
    fn gaussian_kernel_is_one_on_diagonal() {
        let k = Kernel::gaussian(1.0).unwrap();
        assert_eq!(k.eval(&[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
    }

    #[test]
    fn exponential_uses_unsquared_norm() {
        let k = Kernel::exponential(2.0).unwrap();
        let v = k.eval(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((v - (-5.0f64 / 4.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_width_is_rejected() {
        assert!(matches!(
            Kernel::gaussian(0.0),
            Err(KoopmanError::Parameter(_))
        ));
        assert!(matches!(
            Kernel::exponential(0.0),
            Err(KoopmanError::Parameter(_))
        ));
        assert!("gaussian:0".parse::<Kernel>().is_err());
    }

    #[test]
    fn spec_strings_parse_and_print() {
        for s in ["identity", "poly:2", "wpoly:3", "rbf:0.5:32"] {
            assert_eq!(s.parse::<DictionarySpec>().unwrap().to_string(), s);
        }
        for s in ["poly:2", "gaussian:0.7", "exponential:0.7"] {
            assert_eq!(s.parse::<Kernel>().unwrap().to_string(), s);
        }
        assert!("poly".parse::<DictionarySpec>().is_err());
        assert!("cubic:2".parse::<Kernel>().is_err());
    }

    #[test]
    fn rbf_centers_are_strided() {
        let data = RealMatrix::from_fn(1, 10, |_, j| j as f64);
        let d = DictionarySpec::Rbf {
            width: 1.0,
            centers: 5,
        }
        .build(&data)
        .unwrap();
        match d.kind {
            DictionaryKind::Rbf { centers, .. } => {
                let got: Vec<f64> = centers.iter().map(|c| c[0]).collect();
                assert_eq!(got, vec![0.0, 2.0, 4.0, 6.0, 8.0]);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn zero_vector_evaluates_to_constant_only() {
        let d = Dictionary::polynomial(3, 3);
        let v = d.eval(&[0.0; 3]).unwrap();
        assert_eq!(v[0], 1.0);
        assert!(v.iter().skip(1).all(|&x| x == 0.0));
    }

    proptest! {
        #[test]
        fn weighted_features_reproduce_polynomial_kernel(
            degree in 1u32..5,
            (a, b) in (1usize..4).prop_flat_map(|n| (
                prop::collection::vec(-2.0f64..2.0, n),
                prop::collection::vec(-2.0f64..2.0, n),
            )),
        ) {
            let d = Dictionary::polynomial_kernel_features(a.len(), degree);
            let explicit = d.eval(&a).unwrap().dot(&d.eval(&b).unwrap());
            let k = Kernel::polynomial(degree).eval(&a, &b).unwrap();
            prop_assert!((explicit - k).abs() <= 1e-10 * k.abs().max(1.0));
        }

        #[test]
        fn kernels_are_symmetric(
            sigma in 0.1f64..3.0,
            (a, b) in (1usize..4).prop_flat_map(|n| (
                prop::collection::vec(-2.0f64..2.0, n),
                prop::collection::vec(-2.0f64..2.0, n),
            )),
        ) {
            for k in [Kernel::polynomial(3), Kernel::gaussian(sigma).unwrap(), Kernel::exponential(sigma).unwrap()] {
                prop_assert_eq!(k.eval(&a, &b).unwrap(), k.eval(&b, &a).unwrap());
                if !matches!(k, Kernel::Polynomial { .. }) {
                    prop_assert!(k.eval(&a, &a).unwrap() >= 0.0);
                }
            }
        }

        #[test]
        fn gaussian_gram_is_psd(points in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 2..12)) {
            let m = RealMatrix::from_fn(2, points.len(), |i, j| points[j][i]);
            let g = Kernel::gaussian(1.0).unwrap().cross_gram(&m, &m).unwrap();
            prop_assert!((&g - g.transpose()).norm() == 0.0);
            let ev = g.symmetric_eigenvalues();
            let max = ev.max();
            prop_assert!(ev.min() >= -1e-10 * max);
        }
    }
}
