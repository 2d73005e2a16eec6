//! JSON persistence for fitted models.
//!
//! Matrices are stored row-major as `{rows, cols, re, im}`; numbers are
//! written in shortest round-trip form, so loading reproduces every value
//! bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::{monomial_exponents, Dictionary, DictionaryKind, DictionarySpec, Kernel};
use crate::dmd::{Algorithm, KoopmanModel};
use crate::edmd::EdmdModel;
use crate::error::{KoopmanError, Result};
use crate::kernel_edmd::KernelModel;
use crate::numerics::{Complex64, ComplexMatrix, EigenPairs, RealMatrix, SvdFactors};
use crate::pipeline::{Fit, FitConfig, FittedModel, Layout};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    /// Real parts, row-major.
    pub re: Vec<f64>,
    /// Imaginary parts, row-major; all zero for real matrices.
    pub im: Vec<f64>,
}

impl MatrixRecord {
    pub fn from_real(m: &RealMatrix) -> Self {
        MatrixRecord {
            rows: m.nrows(),
            cols: m.ncols(),
            re: m.transpose().as_slice().to_vec(),
            im: vec![0.0; m.len()],
        }
    }

    pub fn from_complex(m: &ComplexMatrix) -> Self {
        let t = m.transpose();
        MatrixRecord {
            rows: m.nrows(),
            cols: m.ncols(),
            re: t.iter().map(|z| z.re).collect(),
            im: t.iter().map(|z| z.im).collect(),
        }
    }

    pub fn from_column(values: &[f64]) -> Self {
        Self::from_real(&RealMatrix::from_column_slice(values.len(), 1, values))
    }

    pub fn from_complex_column(values: &[Complex64]) -> Self {
        Self::from_complex(&ComplexMatrix::from_column_slice(values.len(), 1, values))
    }

    fn check(&self, name: &str) -> Result<()> {
        let n = self.rows * self.cols;
        if self.re.len() != n || self.im.len() != n {
            return Err(KoopmanError::Schema(format!(
                "matrix `{name}` declares {}x{} but stores {} real and {} imaginary entries",
                self.rows,
                self.cols,
                self.re.len(),
                self.im.len()
            )));
        }
        Ok(())
    }

    pub fn to_real(&self, name: &str) -> Result<RealMatrix> {
        self.check(name)?;
        if self.im.iter().any(|&v| v != 0.0) {
            return Err(KoopmanError::Schema(format!(
                "matrix `{name}` must be real"
            )));
        }
        Ok(RealMatrix::from_row_slice(self.rows, self.cols, &self.re))
    }

    pub fn to_complex(&self, name: &str) -> Result<ComplexMatrix> {
        self.check(name)?;
        let values: Vec<Complex64> = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect();
        Ok(ComplexMatrix::from_row_slice(self.rows, self.cols, &values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub rtol: f64,
    pub embedding_depth: usize,
    pub augment_inputs: bool,
    pub state_dim: usize,
    pub input_dim: usize,
    pub disturbance_dim: usize,
    pub observable_dim: usize,
    /// One-step relative prediction error over the training pairs.
    pub training_residual: f64,
    /// Algorithm-specific residuals (`fit`, `spectral`, `lifted`, `dictionary`).
    pub residuals: BTreeMap<String, f64>,
    /// Algorithm-specific flags (`degenerate`, `pinv_used`, …).
    pub flags: BTreeMap<String, bool>,
    /// Indices of modes left at zero because their eigenvalue vanished.
    pub zero_modes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub algorithm: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    pub metadata: FitMetadata,
    pub matrices: BTreeMap<String, MatrixRecord>,
}

type Matrices = BTreeMap<String, MatrixRecord>;

fn put_real(m: &mut Matrices, name: &str, value: &RealMatrix) {
    m.insert(name.into(), MatrixRecord::from_real(value));
}

fn put_complex(m: &mut Matrices, name: &str, value: &ComplexMatrix) {
    m.insert(name.into(), MatrixRecord::from_complex(value));
}

fn put_svd(m: &mut Matrices, svd: &SvdFactors) {
    put_real(m, "svd_u", &svd.u);
    m.insert("svd_sigma".into(), MatrixRecord::from_column(&svd.sigma));
    put_real(m, "svd_w", &svd.w);
}

fn put_eigen(m: &mut Matrices, eigen: &EigenPairs) {
    m.insert(
        "eigenvalues".into(),
        MatrixRecord::from_complex_column(&eigen.values),
    );
    put_complex(m, "eigenvectors", &eigen.vectors);
}

/// Serializable name of a dictionary plus any data it carries.
fn encode_dictionary(dict: &Dictionary, matrices: &mut Matrices) -> Result<String> {
    let dim = dict.input_dim;
    Ok(match &dict.kind {
        DictionaryKind::Identity => DictionarySpec::Identity.to_string(),
        DictionaryKind::Polynomial {
            degree,
            exponents,
            weights,
        } => {
            let standard = *exponents == monomial_exponents(dim, *degree);
            match (standard, weights) {
                (true, None) => DictionarySpec::Polynomial(*degree).to_string(),
                (true, Some(_)) => DictionarySpec::WeightedPolynomial(*degree).to_string(),
                (false, None) => {
                    let flat: Vec<f64> = exponents.iter().flatten().map(|&p| p as f64).collect();
                    put_real(
                        matrices,
                        "dictionary_exponents",
                        &RealMatrix::from_row_slice(exponents.len(), dim, &flat),
                    );
                    "monomials".into()
                }
                (false, Some(_)) => {
                    return Err(KoopmanError::Config(
                        "weighted custom monomial sets cannot be saved".into(),
                    ))
                }
            }
        }
        DictionaryKind::Rbf { centers, width } => {
            let flat: Vec<f64> = centers.iter().flatten().copied().collect();
            put_real(
                matrices,
                "dictionary_centers",
                &RealMatrix::from_row_slice(centers.len(), dim, &flat),
            );
            DictionarySpec::Rbf {
                width: *width,
                centers: centers.len(),
            }
            .to_string()
        }
        DictionaryKind::Custom(_) => {
            return Err(KoopmanError::Config(
                "dictionaries of arbitrary functions cannot be saved".into(),
            ))
        }
    })
}

impl ModelFile {
    pub fn from_fit(fit: &Fit) -> Result<Self> {
        let mut matrices = Matrices::new();
        let mut residuals = BTreeMap::new();
        let mut flags = BTreeMap::new();
        let mut zero_modes = vec![];
        let mut dictionary = None;
        let mut kernel = None;
        match &fit.model {
            FittedModel::Dmd(m) => {
                put_real(&mut matrices, "k_hat", &m.k_hat);
                put_eigen(
                    &mut matrices,
                    &EigenPairs {
                        values: m.eigenvalues.clone(),
                        vectors: m.eigenvectors_p.clone(),
                    },
                );
                put_complex(&mut matrices, "modes", &m.modes_v);
                put_svd(&mut matrices, &m.svd);
                residuals.insert("fit".into(), m.fit_residual);
                residuals.insert("spectral".into(), m.spectral_residual);
                flags.insert("degenerate".into(), m.degenerate);
                zero_modes.clone_from(&m.zero_modes);
            }
            FittedModel::Edmd(m) => {
                dictionary = Some(encode_dictionary(&m.dictionary, &mut matrices)?);
                put_real(&mut matrices, "k_hat", &m.k_hat);
                put_eigen(&mut matrices, &m.eigen);
                put_complex(&mut matrices, "b_coeffs", &m.b_coeffs);
                put_real(&mut matrices, "d_coeffs", &m.d_coeffs);
                if let Some(v) = &m.modes_v {
                    put_complex(&mut matrices, "modes", v);
                }
                put_svd(&mut matrices, &m.svd);
                residuals.insert("lifted".into(), m.lifted_residual);
                residuals.insert("dictionary".into(), m.d_residual);
                flags.insert("modes_available".into(), m.modes_available());
            }
            FittedModel::Kernel(m) => {
                kernel = Some(m.kernel.to_string());
                put_real(&mut matrices, "g_gram", &m.g_gram);
                put_real(&mut matrices, "a_gram", &m.a_gram);
                put_real(&mut matrices, "q_eigvecs", &m.q_eigvecs);
                matrices.insert("sigma".into(), MatrixRecord::from_column(&m.sigma));
                put_real(&mut matrices, "k_hat", &m.k_hat_u);
                put_eigen(&mut matrices, &m.eigen);
                put_complex(&mut matrices, "left_eigenvectors", &m.left_eigvecs);
                put_real(&mut matrices, "training_x", &m.training_x);
                put_complex(&mut matrices, "modes", &m.modes);
                flags.insert("pinv_used".into(), m.pinv_used);
            }
        }
        Ok(ModelFile {
            schema_version: SCHEMA_VERSION,
            algorithm: fit.model.algorithm().to_string(),
            dictionary,
            kernel,
            metadata: FitMetadata {
                rtol: fit.config.rtol,
                embedding_depth: fit.layout.embed,
                augment_inputs: fit.layout.augment_inputs,
                state_dim: fit.layout.state_dim,
                input_dim: fit.layout.input_dim,
                disturbance_dim: fit.layout.disturbance_dim,
                observable_dim: fit.layout.observable_dim(),
                training_residual: fit.training_residual,
                residuals,
                flags,
                zero_modes,
            },
            matrices,
        })
    }

    fn real(&self, name: &str) -> Result<RealMatrix> {
        self.record(name)?.to_real(name)
    }

    fn complex(&self, name: &str) -> Result<ComplexMatrix> {
        self.record(name)?.to_complex(name)
    }

    fn record(&self, name: &str) -> Result<&MatrixRecord> {
        self.matrices
            .get(name)
            .ok_or_else(|| KoopmanError::Schema(format!("missing matrix `{name}`")))
    }

    fn column(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.real(name)?.as_slice().to_vec())
    }

    fn residual(&self, name: &str) -> Result<f64> {
        self.metadata
            .residuals
            .get(name)
            .copied()
            .ok_or_else(|| KoopmanError::Schema(format!("missing residual `{name}`")))
    }

    fn flag(&self, name: &str) -> Result<bool> {
        self.metadata
            .flags
            .get(name)
            .copied()
            .ok_or_else(|| KoopmanError::Schema(format!("missing flag `{name}`")))
    }

    fn eigen(&self) -> Result<EigenPairs> {
        let values = self.complex("eigenvalues")?;
        Ok(EigenPairs {
            values: values.iter().copied().collect(),
            vectors: self.complex("eigenvectors")?,
        })
    }

    fn svd(&self) -> Result<SvdFactors> {
        let sigma = self.column("svd_sigma")?;
        Ok(SvdFactors {
            u: self.real("svd_u")?,
            rank: sigma.len(),
            sigma,
            w: self.real("svd_w")?,
        })
    }

    fn decode_dictionary(&self, input_dim: usize) -> Result<Dictionary> {
        let text = self
            .dictionary
            .as_deref()
            .ok_or_else(|| KoopmanError::Schema("edmd model without a dictionary".into()))?;
        if text == "monomials" {
            let e = self.real("dictionary_exponents")?;
            let exponents = e
                .row_iter()
                .map(|r| r.iter().map(|&p| p as u32).collect())
                .collect();
            return Dictionary::monomials(input_dim, exponents);
        }
        let spec: DictionarySpec = text
            .parse()
            .map_err(|e| KoopmanError::Schema(format!("{e}")))?;
        Ok(match spec {
            DictionarySpec::Identity => Dictionary::identity(input_dim),
            DictionarySpec::Polynomial(a) => Dictionary::polynomial(input_dim, a),
            DictionarySpec::WeightedPolynomial(a) => {
                Dictionary::polynomial_kernel_features(input_dim, a)
            }
            DictionarySpec::Rbf { width, .. } => {
                let c = self.real("dictionary_centers")?;
                Dictionary::rbf(
                    c.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    width,
                )?
            }
        })
    }

    /// Rebuild the fitted model; every matrix is restored bit for bit.
    pub fn to_fit(&self) -> Result<Fit> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(KoopmanError::Schema(format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let algorithm: Algorithm = self
            .algorithm
            .parse()
            .map_err(|_| KoopmanError::Schema(format!("unknown algorithm `{}`", self.algorithm)))?;
        let md = &self.metadata;
        let layout = Layout {
            state_dim: md.state_dim,
            input_dim: md.input_dim,
            disturbance_dim: md.disturbance_dim,
            embed: md.embedding_depth,
            augment_inputs: md.augment_inputs,
        };
        if layout.embed == 0 || layout.observable_dim() != md.observable_dim {
            return Err(KoopmanError::Schema(
                "observable layout is inconsistent".into(),
            ));
        }
        let mut config = FitConfig::new(algorithm)
            .with_rtol(md.rtol)
            .with_embedding(md.embedding_depth);
        config.augment_inputs = md.augment_inputs;

        let model = match algorithm {
            Algorithm::Companion | Algorithm::Dmd => {
                let eigen = self.eigen()?;
                FittedModel::Dmd(KoopmanModel {
                    k_hat: self.real("k_hat")?,
                    eigenvalues: eigen.values,
                    eigenvectors_p: eigen.vectors,
                    modes_v: self.complex("modes")?,
                    svd: self.svd()?,
                    algorithm,
                    observable_dim: md.observable_dim,
                    zero_modes: md.zero_modes.clone(),
                    fit_residual: self.residual("fit")?,
                    spectral_residual: self.residual("spectral")?,
                    degenerate: self.flag("degenerate")?,
                })
            }
            Algorithm::Edmd => {
                let dictionary = self.decode_dictionary(md.observable_dim)?;
                config.dictionary = self.dictionary.as_deref().and_then(|d| d.parse().ok());
                let modes_v = if self.flag("modes_available")? {
                    Some(self.complex("modes")?)
                } else {
                    None
                };
                FittedModel::Edmd(EdmdModel {
                    dictionary,
                    k_hat: self.real("k_hat")?,
                    eigen: self.eigen()?,
                    b_coeffs: self.complex("b_coeffs")?,
                    d_coeffs: self.real("d_coeffs")?,
                    modes_v,
                    svd: self.svd()?,
                    lifted_residual: self.residual("lifted")?,
                    d_residual: self.residual("dictionary")?,
                    observable_dim: md.observable_dim,
                })
            }
            Algorithm::KernelEdmd => {
                let text = self.kernel.as_deref().ok_or_else(|| {
                    KoopmanError::Schema("kernel-edmd model without a kernel".into())
                })?;
                let kernel: Kernel = text
                    .parse()
                    .map_err(|e| KoopmanError::Schema(format!("{e}")))?;
                config.kernel = Some(kernel);
                FittedModel::Kernel(KernelModel {
                    kernel,
                    g_gram: self.real("g_gram")?,
                    a_gram: self.real("a_gram")?,
                    q_eigvecs: self.real("q_eigvecs")?,
                    sigma: self.column("sigma")?,
                    k_hat_u: self.real("k_hat")?,
                    eigen: self.eigen()?,
                    left_eigvecs: self.complex("left_eigenvectors")?,
                    pinv_used: self.flag("pinv_used")?,
                    training_x: self.real("training_x")?,
                    modes: self.complex("modes")?,
                })
            }
        };
        Ok(Fit {
            model,
            config,
            layout,
            training_residual: md.training_residual,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| KoopmanError::Schema(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // check the version before the full schema so old files get a clear message
        let probe: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| KoopmanError::Schema(format!("not valid JSON: {e}")))?;
        match probe
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
        {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(KoopmanError::Schema(format!(
                    "schema version {v} is not supported (expected {SCHEMA_VERSION})"
                )))
            }
            None => return Err(KoopmanError::Schema("missing schema_version".into())),
        }
        serde_json::from_value(probe).map_err(|e| KoopmanError::Schema(e.to_string()))
    }
}

pub fn save_model(fit: &Fit, path: impl AsRef<Path>) -> Result<()> {
    let mut text = ModelFile::from_fit(fit)?.to_json()?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Fit> {
    ModelFile::from_json(&std::fs::read_to_string(path)?)?.to_fit()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{fit, Sample};
    use crate::systems::{simulate, SystemKind, SystemSpec};

    fn quadratic_runs() -> Vec<crate::dataset::Trajectory> {
        [[1.0, 0.0], [-0.7, 0.4], [0.5, -1.0], [0.9, 0.8]]
            .iter()
            .map(|s| {
                let kind = SystemKind::QuadraticInvariant {
                    mu: 0.9,
                    lambda: 0.5,
                    c: 1.0,
                };
                simulate(&SystemSpec::new(kind, s.to_vec(), 7).unwrap()).unwrap()
            })
            .collect()
    }

    fn configs() -> Vec<FitConfig> {
        vec![
            FitConfig::new(Algorithm::Dmd),
            FitConfig::new(Algorithm::Companion),
            FitConfig::new(Algorithm::Edmd).with_dictionary(DictionarySpec::Polynomial(2)),
            FitConfig::new(Algorithm::Edmd).with_dictionary(DictionarySpec::WeightedPolynomial(2)),
            FitConfig::new(Algorithm::Edmd).with_dictionary(DictionarySpec::Rbf {
                width: 0.8,
                centers: 6,
            }),
            FitConfig::new(Algorithm::KernelEdmd).with_kernel(Kernel::polynomial(2)),
            FitConfig::new(Algorithm::KernelEdmd).with_kernel(Kernel::gaussian(0.9).unwrap()),
        ]
    }

    fn all_matrices(f: &Fit) -> Matrices {
        ModelFile::from_fit(f).unwrap().matrices
    }

    #[test]
    fn round_trip_is_bit_exact_and_predictions_agree() {
        let runs = quadratic_runs();
        for config in configs() {
            let fitted = fit(&runs, &config).unwrap();
            let text = ModelFile::from_fit(&fitted).unwrap().to_json().unwrap();
            let loaded = ModelFile::from_json(&text).unwrap().to_fit().unwrap();
            let (a, b) = (all_matrices(&fitted), all_matrices(&loaded));
            for (name, m) in &a {
                let n = &b[name];
                let same_bits =
                    m.re.iter()
                        .zip(&n.re)
                        .chain(m.im.iter().zip(&n.im))
                        .all(|(x, y)| x.to_bits() == y.to_bits());
                assert!(
                    same_bits && m.rows == n.rows && m.cols == n.cols,
                    "{config:?}: {name}"
                );
            }
            assert_eq!(a.len(), b.len());
            let history = [Sample {
                state: vec![0.4, -0.2],
                ..Sample::default()
            }];
            let before = fitted.predict(&history, 4).unwrap().0;
            let after = loaded.predict(&history, 4).unwrap().0;
            assert_eq!(before, after, "{config:?}");
            // the JSON text itself is stable
            assert_eq!(
                ModelFile::from_fit(&loaded).unwrap().to_json().unwrap(),
                text
            );
        }
    }

    #[test]
    fn custom_monomials_survive() {
        let runs = quadratic_runs();
        let pair = crate::pipeline::build_pairs(&runs, &FitConfig::new(Algorithm::Dmd))
            .unwrap()
            .0;
        let dict =
            Dictionary::monomials(2, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0]]).unwrap();
        let model = crate::edmd::fit_edmd(&pair, &dict, 1e-10).unwrap();
        let mut fitted = fit(
            &runs,
            &FitConfig::new(Algorithm::Edmd).with_dictionary(DictionarySpec::Polynomial(2)),
        )
        .unwrap();
        fitted.model = FittedModel::Edmd(model);
        let file = ModelFile::from_fit(&fitted).unwrap();
        assert_eq!(file.dictionary.as_deref(), Some("monomials"));
        let loaded = file.to_fit().unwrap();
        let FittedModel::Edmd(m) = &loaded.model else {
            panic!()
        };
        assert_eq!(m.dictionary.output_dim(), 4);
    }

    #[test]
    fn schema_version_mismatch_is_an_error() {
        let fitted = fit(&quadratic_runs(), &FitConfig::new(Algorithm::Dmd)).unwrap();
        let mut file = ModelFile::from_fit(&fitted).unwrap();
        file.schema_version = 99;
        let text = file.to_json().unwrap();
        assert!(matches!(
            ModelFile::from_json(&text),
            Err(KoopmanError::Schema(_))
        ));
        assert!(matches!(file.to_fit(), Err(KoopmanError::Schema(_))));
        assert!(ModelFile::from_json("{}").is_err());
    }

    #[test]
    fn inconsistent_matrix_is_rejected() {
        let fitted = fit(&quadratic_runs(), &FitConfig::new(Algorithm::Dmd)).unwrap();
        let mut file = ModelFile::from_fit(&fitted).unwrap();
        file.matrices.get_mut("k_hat").unwrap().re.pop();
        assert!(matches!(file.to_fit(), Err(KoopmanError::Schema(_))));
    }
}
