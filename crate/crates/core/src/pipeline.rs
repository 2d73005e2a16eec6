//! Trajectories in, fitted model out: embedding, pairing and algorithm dispatch
//! shared by the CLI and the browser demo.

use nalgebra::DVector;

use crate::dataset::{delay_embed, snapshot_pairs, SnapshotPair, Trajectory};
use crate::dictionary::{DictionarySpec, Kernel};
use crate::dmd::{fit_companion, fit_svd_dmd, Algorithm, KoopmanModel};
use crate::edmd::{fit_edmd, EdmdModel};
use crate::error::{KoopmanError, Result};
use crate::kernel_edmd::{fit_kernel_edmd, KernelModel};
use crate::numerics::{Complex64, ComplexMatrix, DEFAULT_RTOL};
use crate::spectral::{Prediction, SpectralModel};

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub algorithm: Algorithm,
    pub dictionary: Option<DictionarySpec>,
    pub kernel: Option<Kernel>,
    /// Delay-embedding depth; 1 means no embedding.
    pub embed: usize,
    pub augment_inputs: bool,
    pub rtol: f64,
}

impl FitConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        FitConfig {
            algorithm,
            dictionary: None,
            kernel: None,
            embed: 1,
            augment_inputs: false,
            rtol: DEFAULT_RTOL,
        }
    }

    pub fn with_dictionary(mut self, dict: DictionarySpec) -> Self {
        self.dictionary = Some(dict);
        self
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = Some(kernel);
        self
    }

    pub fn with_embedding(mut self, h: usize) -> Self {
        self.embed = h;
        self
    }

    pub fn with_inputs(mut self) -> Self {
        self.augment_inputs = true;
        self
    }

    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }

    /// Reject flag combinations that do not apply to the chosen algorithm.
    pub fn validate(&self) -> Result<()> {
        match (self.algorithm, &self.dictionary, &self.kernel) {
            (Algorithm::Edmd, None, _) => {
                Err(KoopmanError::Config("edmd needs a dictionary".into()))
            }
            (Algorithm::KernelEdmd, _, None) => {
                Err(KoopmanError::Config("kernel-edmd needs a kernel".into()))
            }
            (a, Some(_), _) if a != Algorithm::Edmd => Err(KoopmanError::Config(format!(
                "a dictionary only applies to edmd, not {a}"
            ))),
            (a, _, Some(_)) if a != Algorithm::KernelEdmd => Err(KoopmanError::Config(format!(
                "a kernel only applies to kernel-edmd, not {a}"
            ))),
            _ if self.embed == 0 => Err(KoopmanError::Config(
                "embedding depth must be at least 1".into(),
            )),
            _ if !(0.0..1.0).contains(&self.rtol) => Err(KoopmanError::Config(format!(
                "rtol must lie in [0, 1), got {}",
                self.rtol
            ))),
            _ => Ok(()),
        }
    }
}

/// How one observable vector is assembled from `embed` consecutive samples:
/// all state blocks oldest first, then the input blocks, then the
/// disturbance blocks when inputs are augmented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub state_dim: usize,
    pub input_dim: usize,
    pub disturbance_dim: usize,
    pub embed: usize,
    pub augment_inputs: bool,
}

/// One row of an initial-condition history.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sample {
    pub state: Vec<f64>,
    pub input: Vec<f64>,
    pub disturbance: Vec<f64>,
}

impl Layout {
    pub fn observable_dim(&self) -> usize {
        let extra = if self.augment_inputs {
            self.input_dim + self.disturbance_dim
        } else {
            0
        };
        self.embed * (self.state_dim + extra)
    }

    /// Observable vector from the newest `embed` samples of `history`.
    pub fn assemble(&self, history: &[Sample]) -> Result<Vec<f64>> {
        if history.len() < self.embed {
            return Err(KoopmanError::shape(format!(
                "model uses embedding depth {} but only {} history rows were given",
                self.embed,
                history.len()
            )));
        }
        let window = &history[history.len() - self.embed..];
        for (k, s) in window.iter().enumerate() {
            let inputs_ok = !self.augment_inputs
                || (s.input.len() == self.input_dim && s.disturbance.len() == self.disturbance_dim);
            if s.state.len() != self.state_dim || !inputs_ok {
                return Err(KoopmanError::shape(format!(
                    "history row {} does not match the model's {} states, {} inputs, {} disturbances",
                    k + 1,
                    self.state_dim,
                    if self.augment_inputs { self.input_dim } else { 0 },
                    if self.augment_inputs { self.disturbance_dim } else { 0 },
                )));
            }
        }
        let mut z: Vec<f64> = window
            .iter()
            .flat_map(|s| s.state.iter().copied())
            .collect();
        if self.augment_inputs {
            z.extend(window.iter().flat_map(|s| s.input.iter().copied()));
            z.extend(window.iter().flat_map(|s| s.disturbance.iter().copied()));
        }
        Ok(z)
    }

    /// The newest state block of an observable vector.
    pub fn newest_state(&self, g: &DVector<f64>) -> Vec<f64> {
        let start = (self.embed - 1) * self.state_dim;
        g.rows(start, self.state_dim).iter().copied().collect()
    }
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    /// Companion or SVD-based DMD.
    Dmd(KoopmanModel),
    Edmd(EdmdModel),
    Kernel(KernelModel),
}

impl FittedModel {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            FittedModel::Dmd(m) => m.algorithm,
            FittedModel::Edmd(_) => Algorithm::Edmd,
            FittedModel::Kernel(_) => Algorithm::KernelEdmd,
        }
    }

    fn inner(&self) -> &dyn SpectralModel {
        match self {
            FittedModel::Dmd(m) => m,
            FittedModel::Edmd(m) => m,
            FittedModel::Kernel(m) => m,
        }
    }
}

impl SpectralModel for FittedModel {
    fn eigenvalues(&self) -> &[Complex64] {
        self.inner().eigenvalues()
    }

    fn modes(&self) -> Option<&ComplexMatrix> {
        self.inner().modes()
    }

    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }

    fn eigenfunctions(&self, z: &[f64]) -> Result<(DVector<Complex64>, Vec<String>)> {
        self.inner().eigenfunctions(z)
    }
}

/// A fitted model together with everything needed to use it on raw samples.
#[derive(Debug, Clone)]
pub struct Fit {
    pub model: FittedModel,
    pub config: FitConfig,
    pub layout: Layout,
    /// `‖X′ − Σᵢ λᵢ φᵢ(X) vᵢ‖_F / ‖X′‖_F` over the training pairs, or the
    /// lifted residual when an EDMD model has no usable modes.
    pub training_residual: f64,
}

/// Embed (when requested) and pair every trajectory, then join the pairs.
pub fn build_pairs(
    trajectories: &[Trajectory],
    config: &FitConfig,
) -> Result<(SnapshotPair, Layout)> {
    let first = trajectories
        .first()
        .ok_or_else(|| KoopmanError::Config("no training data given".into()))?;
    let layout = Layout {
        state_dim: first.state_dim(),
        input_dim: first.input_dim(),
        disturbance_dim: first.disturbance_dim(),
        embed: config.embed,
        augment_inputs: config.augment_inputs,
    };
    let mut pairs = Vec::with_capacity(trajectories.len());
    for traj in trajectories {
        let same = (traj.state_dim(), traj.input_dim(), traj.disturbance_dim())
            == (layout.state_dim, layout.input_dim, layout.disturbance_dim);
        if !same {
            return Err(KoopmanError::shape(
                "training trajectories have different column layouts",
            ));
        }
        let pair = if config.embed > 1 {
            delay_embed(traj, config.embed)?.snapshot_pairs(config.augment_inputs)?
        } else {
            snapshot_pairs(traj, config.augment_inputs)?
        };
        pairs.push(pair);
    }
    Ok((SnapshotPair::concat(&pairs)?, layout))
}

fn one_step_residual(model: &dyn SpectralModel, pair: &SnapshotPair) -> Result<f64> {
    let mut err = 0.0;
    for j in 0..pair.len() {
        let z: Vec<f64> = pair.x.column(j).iter().copied().collect();
        let p = model.predict(&z, 1)?;
        err += (&p.values[0] - pair.xp.column(j)).norm_squared();
    }
    Ok(err.sqrt() / pair.xp.norm().max(f64::MIN_POSITIVE))
}

pub fn fit(trajectories: &[Trajectory], config: &FitConfig) -> Result<Fit> {
    config.validate()?;
    let (pair, layout) = build_pairs(trajectories, config)?;
    let model = match config.algorithm {
        Algorithm::Companion => FittedModel::Dmd(fit_companion(&pair)?.into_model(&pair)?),
        Algorithm::Dmd => FittedModel::Dmd(fit_svd_dmd(&pair, config.rtol)?),
        Algorithm::Edmd => {
            let spec = config.dictionary.as_ref().expect("validated");
            FittedModel::Edmd(fit_edmd(&pair, &spec.build(&pair.x)?, config.rtol)?)
        }
        Algorithm::KernelEdmd => FittedModel::Kernel(fit_kernel_edmd(
            &pair,
            config.kernel.as_ref().expect("validated"),
            config.rtol,
        )?),
    };
    let training_residual = match &model {
        FittedModel::Edmd(m) if !m.modes_available() => m.lifted_residual,
        m => one_step_residual(m, &pair)?,
    };
    Ok(Fit {
        model,
        config: config.clone(),
        layout,
        training_residual,
    })
}

impl Fit {
    pub fn eigenvalues(&self) -> &[Complex64] {
        self.model.eigenvalues()
    }

    /// Predict `steps` samples ahead of the newest history row; each output
    /// is the newest state block. Augmented inputs are held at their last value.
    pub fn predict(&self, history: &[Sample], steps: usize) -> Result<(Vec<Vec<f64>>, Prediction)> {
        let z0 = self.layout.assemble(history)?;
        let prediction = self.model.predict(&z0, steps)?;
        let states = prediction
            .values
            .iter()
            .map(|g| self.layout.newest_state(g))
            .collect();
        Ok((states, prediction))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RealMatrix;
    use crate::systems::{simulate, InputSignal, Observation, SystemKind, SystemSpec};

    fn rotation_first(theta: f64, n: usize) -> Trajectory {
        let kind = SystemKind::Rotation {
            theta,
            observe: Observation::FirstCoordinate,
        };
        simulate(&SystemSpec::new(kind, vec![1.0, 0.3], n).unwrap()).unwrap()
    }

    #[test]
    fn flag_combinations() {
        let dmd = FitConfig::new(Algorithm::Dmd);
        assert!(dmd.validate().is_ok());
        assert!(dmd
            .clone()
            .with_dictionary(DictionarySpec::Polynomial(2))
            .validate()
            .is_err());
        assert!(dmd
            .clone()
            .with_kernel(Kernel::polynomial(2))
            .validate()
            .is_err());
        assert!(FitConfig::new(Algorithm::Edmd).validate().is_err());
        assert!(FitConfig::new(Algorithm::KernelEdmd).validate().is_err());
        assert!(dmd.clone().with_embedding(0).validate().is_err());
        assert!(dmd.with_rtol(1.5).validate().is_err());
    }

    #[test]
    fn embedded_rotation_predicts_newest_sample() {
        let traj = rotation_first(0.5, 60);
        let fit = fit(
            &[traj.clone()],
            &FitConfig::new(Algorithm::Dmd).with_embedding(2),
        )
        .unwrap();
        assert_eq!(fit.layout.observable_dim(), 2);
        let history: Vec<Sample> = traj.states[10..12]
            .iter()
            .map(|s| Sample {
                state: s.clone(),
                ..Sample::default()
            })
            .collect();
        let (states, _) = fit.predict(&history, 5).unwrap();
        for (m, s) in states.iter().enumerate() {
            assert!((s[0] - traj.states[12 + m][0]).abs() < 1e-8);
        }
        assert!(fit.predict(&history[..1], 5).is_err());
    }

    #[test]
    fn forced_system_with_augmented_inputs() {
        let a = RealMatrix::from_row_slice(2, 2, &[0.8, 0.1, -0.2, 0.7]);
        let kind = SystemKind::ForcedLinear {
            a,
            b_in: RealMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
            input: InputSignal {
                hold: 4,
                amplitude: 1.0,
                seed: 5,
            },
        };
        let traj = simulate(&SystemSpec::new(kind, vec![0.2, -0.1], 40).unwrap()).unwrap();
        let fit = fit(&[traj], &FitConfig::new(Algorithm::Dmd).with_inputs()).unwrap();
        assert_eq!(fit.layout.observable_dim(), 3);
        assert!(fit.training_residual < 1e-8, "{}", fit.training_residual);
    }

    #[test]
    fn several_trajectories_are_joined() {
        let a = rotation_first(0.4, 20);
        let b = rotation_first(0.4, 15);
        let config = FitConfig::new(Algorithm::Dmd).with_embedding(2);
        let (pair, _) = build_pairs(&[a, b], &config).unwrap();
        assert_eq!(pair.len(), 19 + 14);
    }
}
