//! Browser demo: three small experiments exposed to JavaScript as JSON.
//!
//! The plain functions are usable (and tested) natively; the `*_json`
//! wrappers are what the page calls.

use koopman::dataset::Trajectory;
use koopman::dictionary::{DictionarySpec, Kernel};
use koopman::dmd::Algorithm;
use koopman::numerics::{containment_distance, Complex64};
use koopman::pipeline::{fit, FitConfig, FittedModel, Sample};
use koopman::systems::{simulate, Observation, SystemKind, SystemSpec};
use koopman::Result;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const QUADRATIC_STARTS: [[f64; 2]; 4] = [[1.0, 0.0], [-0.7, 0.4], [0.5, -1.0], [0.9, 0.8]];
const QUADRATIC_EIGENVALUES: [f64; 3] = [0.9, 0.5, 0.81];

#[derive(Debug, Serialize)]
pub struct RotationReport {
    pub depth: usize,
    /// `[re, im]` pairs.
    pub eigenvalues: Vec<[f64; 2]>,
    pub exact: Vec<[f64; 2]>,
    /// Matching error against `e^{±iθ}`; absent when the count differs.
    pub error: Option<f64>,
    pub signal: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct QuadraticReport {
    pub degree: u32,
    pub eigenvalues: Vec<[f64; 2]>,
    pub lifted_residual: f64,
    /// Distance from {0.9, 0.5, 0.81} to the fitted spectrum.
    pub recovery_error: f64,
    pub predicted: Vec<[f64; 2]>,
    pub truth: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize)]
pub struct KernelReport {
    pub sigma: f64,
    pub rank: usize,
    pub eigenvalues: Vec<[f64; 2]>,
    pub recovery_error: f64,
    pub prediction_error: f64,
}

fn pairs(values: &[Complex64]) -> Vec<[f64; 2]> {
    values.iter().map(|l| [l.re, l.im]).collect()
}

fn quadratic(x0: [f64; 2], steps: usize) -> Result<Trajectory> {
    let kind = SystemKind::QuadraticInvariant {
        mu: 0.9,
        lambda: 0.5,
        c: 1.0,
    };
    simulate(&SystemSpec::new(kind, x0.to_vec(), steps)?)
}

fn training_runs() -> Result<Vec<Trajectory>> {
    QUADRATIC_STARTS.iter().map(|s| quadratic(*s, 9)).collect()
}

fn known_spectrum() -> Vec<Complex64> {
    QUADRATIC_EIGENVALUES
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect()
}

/// Hankel DMD on the first coordinate of a rotation by `theta`.
pub fn rotation_spectrum(theta: f64, depth: usize, samples: usize) -> Result<RotationReport> {
    let kind = SystemKind::Rotation {
        theta,
        observe: Observation::FirstCoordinate,
    };
    let traj = simulate(&SystemSpec::new(kind, vec![1.0, 0.3], samples.max(2) - 1)?)?;
    let fitted = fit(
        std::slice::from_ref(&traj),
        &FitConfig::new(Algorithm::Dmd).with_embedding(depth),
    )?;
    let exact = [
        Complex64::from_polar(1.0, theta),
        Complex64::from_polar(1.0, -theta),
    ];
    let error = (fitted.eigenvalues().len() == 2)
        .then(|| koopman::numerics::spectral_distance(fitted.eigenvalues(), &exact));
    Ok(RotationReport {
        depth,
        eigenvalues: pairs(fitted.eigenvalues()),
        exact: pairs(&exact),
        error,
        signal: traj.states.iter().map(|s| s[0]).collect(),
    })
}

/// Polynomial EDMD on the quadratic system, then a forecast from `(x1, x2)`.
pub fn quadratic_edmd(degree: u32, x1: f64, x2: f64, steps: usize) -> Result<QuadraticReport> {
    let config =
        FitConfig::new(Algorithm::Edmd).with_dictionary(DictionarySpec::Polynomial(degree));
    let fitted = fit(&training_runs()?, &config)?;
    let FittedModel::Edmd(model) = &fitted.model else {
        unreachable!("edmd config yields an edmd model")
    };
    let start = Sample {
        state: vec![x1, x2],
        ..Default::default()
    };
    let (predicted, _) = fitted.predict(&[start], steps)?;
    let truth = quadratic([x1, x2], steps)?;
    Ok(QuadraticReport {
        degree,
        eigenvalues: pairs(fitted.eigenvalues()),
        lifted_residual: model.lifted_residual,
        recovery_error: containment_distance(fitted.eigenvalues(), &known_spectrum()),
        predicted: predicted.iter().map(|s| [s[0], s[1]]).collect(),
        truth: truth.states.iter().skip(1).map(|s| [s[0], s[1]]).collect(),
    })
}

/// Gaussian-kernel EDMD on the quadratic system for a given width.
pub fn kernel_width(sigma: f64) -> Result<KernelReport> {
    let config = FitConfig::new(Algorithm::KernelEdmd).with_kernel(Kernel::gaussian(sigma)?);
    let fitted = fit(&training_runs()?, &config)?;
    let FittedModel::Kernel(model) = &fitted.model else {
        unreachable!("kernel config yields a kernel model")
    };
    let x0 = [0.6, -0.3];
    let start = Sample {
        state: x0.to_vec(),
        ..Default::default()
    };
    let steps = 10;
    let (predicted, _) = fitted.predict(&[start], steps)?;
    let truth = quadratic(x0, steps)?;
    let prediction_error = predicted
        .iter()
        .zip(&truth.states[1..])
        .flat_map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    Ok(KernelReport {
        sigma,
        rank: model.rank(),
        eigenvalues: pairs(fitted.eigenvalues()),
        recovery_error: containment_distance(fitted.eigenvalues(), &known_spectrum()),
        prediction_error,
    })
}

fn to_json<T: Serialize>(result: Result<T>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(message: &str) -> String {
    serde_json::json!({ "error": message }).to_string()
}

#[wasm_bindgen(js_name = rotationSpectrum)]
pub fn rotation_spectrum_json(theta: f64, depth: usize, samples: usize) -> String {
    to_json(rotation_spectrum(theta, depth, samples))
}

#[wasm_bindgen(js_name = quadraticEdmd)]
pub fn quadratic_edmd_json(degree: u32, x1: f64, x2: f64, steps: usize) -> String {
    to_json(quadratic_edmd(degree, x1, x2, steps))
}

#[wasm_bindgen(js_name = kernelWidth)]
pub fn kernel_width_json(sigma: f64) -> String {
    to_json(kernel_width(sigma))
}
