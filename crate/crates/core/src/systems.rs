//! Discrete-time test systems with exactly known Koopman structure.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Trajectory;
use crate::dictionary::{Dictionary, DictionaryKind};
use crate::error::{KoopmanError, Result};
use crate::numerics::{condition_number, Complex64, ComplexMatrix, RealMatrix};

/// States beyond this magnitude abort a simulation.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    Full,
    FirstCoordinate,
}

/// Piecewise-constant input: every `hold` steps each channel draws a new
/// value uniformly from `[-amplitude, amplitude]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputSignal {
    pub hold: usize,
    pub amplitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemKind {
    Linear {
        a: RealMatrix,
    },
    Rotation {
        theta: f64,
        observe: Observation,
    },
    /// `x₁⁺ = μ x₁`, `x₂⁺ = λ x₂ + c x₁²`.
    QuadraticInvariant {
        mu: f64,
        lambda: f64,
        c: f64,
    },
    /// `x⁺ = A x + B u`.
    ForcedLinear {
        a: RealMatrix,
        b_in: RealMatrix,
        input: InputSignal,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub initial_state: Vec<f64>,
    pub steps: usize,
}

impl SystemSpec {
    pub fn new(kind: SystemKind, initial_state: Vec<f64>, steps: usize) -> Result<Self> {
        let spec = SystemSpec {
            kind,
            initial_state,
            steps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn state_dim(&self) -> usize {
        match &self.kind {
            SystemKind::Linear { a } | SystemKind::ForcedLinear { a, .. } => a.nrows(),
            SystemKind::Rotation { .. } | SystemKind::QuadraticInvariant { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            SystemKind::Linear { a } => check_square(a)?,
            SystemKind::Rotation { theta, .. } => {
                if !(theta.abs() < std::f64::consts::PI) {
                    return Err(KoopmanError::Parameter(format!(
                        "rotation angle must satisfy |θ| < π, got {theta}"
                    )));
                }
            }
            SystemKind::QuadraticInvariant { mu, lambda, c } => {
                if !(mu.abs() <= 1.0 && lambda.abs() <= 1.0 && c.is_finite()) {
                    return Err(KoopmanError::Parameter(format!(
                        "quadratic system needs |μ|, |λ| ≤ 1 (got μ={mu}, λ={lambda})"
                    )));
                }
            }
            SystemKind::ForcedLinear { a, b_in, input } => {
                check_square(a)?;
                if b_in.nrows() != a.nrows() || b_in.ncols() == 0 {
                    return Err(KoopmanError::shape(format!(
                        "input matrix is {}x{}, expected {} rows",
                        b_in.nrows(),
                        b_in.ncols(),
                        a.nrows()
                    )));
                }
                if input.hold == 0 || !(input.amplitude.is_finite() && input.amplitude >= 0.0) {
                    return Err(KoopmanError::Parameter(
                        "input hold must be positive and amplitude finite and non-negative".into(),
                    ));
                }
            }
        }
        if self.initial_state.len() != self.state_dim() {
            return Err(KoopmanError::shape(format!(
                "initial state has {} entries, system has {} states",
                self.initial_state.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    /// One application of the map (inputs held over the step).
    pub fn step(&self, x: &[f64], u: Option<&[f64]>) -> Vec<f64> {
        match &self.kind {
            SystemKind::Linear { a } => (a * DVector::from_column_slice(x))
                .iter()
                .copied()
                .collect(),
            SystemKind::Rotation { theta, .. } => {
                let (s, c) = theta.sin_cos();
                vec![c * x[0] - s * x[1], s * x[0] + c * x[1]]
            }
            SystemKind::QuadraticInvariant { mu, lambda, c } => {
                vec![mu * x[0], lambda * x[1] + c * x[0] * x[0]]
            }
            SystemKind::ForcedLinear { a, b_in, .. } => {
                let u = DVector::from_column_slice(u.expect("forced system needs an input"));
                (a * DVector::from_column_slice(x) + b_in * u)
                    .iter()
                    .copied()
                    .collect()
            }
        }
    }
}

fn check_square(a: &RealMatrix) -> Result<()> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(KoopmanError::shape(format!(
            "system matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    crate::numerics::ensure_finite(a, "system matrix")
}

fn input_sequence(signal: &InputSignal, channels: usize, len: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(signal.seed);
    let mut current = vec![0.0; channels];
    (0..len)
        .map(|t| {
            if t % signal.hold == 0 {
                for v in current.iter_mut() {
                    *v = if signal.amplitude > 0.0 {
                        rng.random_range(-signal.amplitude..=signal.amplitude)
                    } else {
                        0.0
                    };
                }
            }
            current.clone()
        })
        .collect()
}

/// Iterate the map `steps` times, returning `steps + 1` samples.
pub fn simulate(spec: &SystemSpec) -> Result<Trajectory> {
    spec.validate()?;
    let inputs = match &spec.kind {
        SystemKind::ForcedLinear { b_in, input, .. } => {
            Some(input_sequence(input, b_in.ncols(), spec.steps + 1))
        }
        _ => None,
    };
    let mut states = Vec::with_capacity(spec.steps + 1);
    states.push(spec.initial_state.clone());
    for t in 0..spec.steps {
        let next = spec.step(&states[t], inputs.as_ref().map(|u| u[t].as_slice()));
        if next.iter().any(|v| !(v.abs() <= DIVERGENCE_BOUND)) {
            return Err(KoopmanError::Divergence { step: t + 1 });
        }
        states.push(next);
    }
    if let SystemKind::Rotation {
        observe: Observation::FirstCoordinate,
        ..
    } = spec.kind
    {
        states = states.into_iter().map(|x| vec![x[0]]).collect();
    }
    let mut traj = Trajectory::new(1.0, states, inputs, None)?;
    if let SystemKind::ForcedLinear { input, .. } = &spec.kind {
        traj.metadata.insert("seed".into(), input.seed.to_string());
        traj.metadata
            .insert("input_hold".into(), input.hold.to_string());
        traj.metadata
            .insert("input_amplitude".into(), input.amplitude.to_string());
    }
    Ok(traj)
}

type Exponent = Vec<u32>;
type Polynomial = BTreeMap<Exponent, f64>;

fn poly_mul(a: &Polynomial, b: &Polynomial) -> Polynomial {
    let mut out = Polynomial::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Exponent = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(e).or_insert(0.0) += ca * cb;
        }
    }
    out
}

fn unit_exponent(dim: usize, i: usize, power: u32) -> Exponent {
    let mut e = vec![0; dim];
    e[i] = power;
    e
}

/// The map as one polynomial per state coordinate.
fn map_polynomials(spec: &SystemSpec) -> Option<Vec<Polynomial>> {
    let linear = |a: &RealMatrix| -> Vec<Polynomial> {
        let n = a.nrows();
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| a[(i, j)] != 0.0)
                    .map(|j| (unit_exponent(n, j, 1), a[(i, j)]))
                    .collect()
            })
            .collect()
    };
    match &spec.kind {
        SystemKind::Linear { a } => Some(linear(a)),
        SystemKind::Rotation {
            theta,
            observe: Observation::Full,
        } => {
            let (s, c) = theta.sin_cos();
            Some(linear(&RealMatrix::from_row_slice(2, 2, &[c, -s, s, c])))
        }
        SystemKind::QuadraticInvariant { mu, lambda, c } => {
            let mut x2 = Polynomial::new();
            x2.insert(vec![0, 1], *lambda);
            x2.insert(vec![2, 0], *c);
            Some(vec![[(vec![1, 0], *mu)].into_iter().collect(), x2])
        }
        _ => None,
    }
}

/// Exact Koopman matrix on an invariant part of a polynomial dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftOracle {
    /// Dictionary indices spanning the invariant subspace, in dictionary order.
    pub retained: Vec<usize>,
    /// `θ_S(F(x)) = L θ_S(x)` on the retained entries `θ_S`.
    pub operator: RealMatrix,
}

impl LiftOracle {
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let mut ev: Vec<Complex64> = self
            .operator
            .complex_eigenvalues()
            .iter()
            .copied()
            .collect();
        let order = crate::numerics::spectrum_order(&ev);
        ev = order.into_iter().map(|i| ev[i]).collect();
        ev
    }
}

/// Compose the map with each dictionary monomial symbolically and keep the
/// largest subset whose images stay inside it. Returns `None` unless that
/// subset still contains every state coordinate, i.e. the dictionary
/// closes the dynamics of the state itself.
pub fn exact_lift_oracle(spec: &SystemSpec, dict: &Dictionary) -> Option<LiftOracle> {
    let DictionaryKind::Polynomial {
        exponents, weights, ..
    } = &dict.kind
    else {
        return None;
    };
    let n = spec.state_dim();
    if dict.input_dim != n {
        return None;
    }
    let map = map_polynomials(spec)?;

    let images: Vec<Polynomial> = exponents
        .iter()
        .map(|e| {
            let mut acc: Polynomial = [(vec![0; n], 1.0)].into_iter().collect();
            for (i, &p) in e.iter().enumerate() {
                for _ in 0..p {
                    acc = poly_mul(&acc, &map[i]);
                }
            }
            let scale = acc.values().fold(0.0_f64, |m, c| m.max(c.abs()));
            acc.retain(|_, c| c.abs() > 1e-15 * scale);
            acc
        })
        .collect();

    let position: BTreeMap<&Exponent, usize> =
        exponents.iter().enumerate().map(|(k, e)| (e, k)).collect();
    let mut alive: BTreeSet<usize> = (0..exponents.len()).collect();
    loop {
        let dead: Vec<usize> = alive
            .iter()
            .copied()
            .filter(|&k| {
                images[k]
                    .keys()
                    .any(|e| position.get(e).is_none_or(|j| !alive.contains(j)))
            })
            .collect();
        if dead.is_empty() {
            break;
        }
        for k in dead {
            alive.remove(&k);
        }
    }

    let covers_state = (0..n).all(|i| {
        position
            .get(&unit_exponent(n, i, 1))
            .is_some_and(|k| alive.contains(k))
    });
    if !covers_state {
        return None;
    }

    let retained: Vec<usize> = alive.into_iter().collect();
    let slot: BTreeMap<usize, usize> = retained.iter().enumerate().map(|(s, &k)| (k, s)).collect();
    let w = |k: usize| weights.as_ref().map_or(1.0, |w| w[k]);
    let mut operator = RealMatrix::zeros(retained.len(), retained.len());
    for (row, &k) in retained.iter().enumerate() {
        for (e, coef) in &images[k] {
            let j = position[e];
            // θ_k = w_k m_k, so the coefficient of θ_j picks up w_k / w_j
            operator[(row, slot[&j])] += w(k) * coef / w(j);
        }
    }
    Some(LiftOracle { retained, operator })
}

/// A matrix with prescribed eigenstructure.
#[derive(Debug, Clone, PartialEq)]
pub struct StableMatrix {
    pub a: RealMatrix,
    pub eigenvalues: Vec<Complex64>,
    /// Column `i` is an eigenvector for `eigenvalues[i]`.
    pub eigenvectors: ComplexMatrix,
}

/// `A = S D S⁻¹` with `D` block-diagonal holding the chosen eigenvalues
/// (magnitudes in `[0.3, 0.95]`, pairwise gaps at least `0.1`) and `S` a
/// random basis with condition number below 10.
pub fn random_stable_matrix(n: usize, rng: &mut impl Rng) -> StableMatrix {
    assert!(n > 0, "matrix dimension must be positive");
    let values = loop {
        let mut values = vec![];
        while values.len() < n {
            let r = rng.random_range(0.3..0.95);
            if n - values.len() >= 2 && rng.random_bool(0.5) {
                let w: f64 = rng.random_range(0.2..2.9);
                values.push(Complex64::from_polar(r, w));
                values.push(Complex64::from_polar(r, -w));
            } else {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                values.push(Complex64::new(sign * r, 0.0));
            }
        }
        let separated = (0..n).all(|i| (0..i).all(|j| (values[i] - values[j]).norm() >= 0.1));
        if separated {
            break values;
        }
    };

    let mut d = RealMatrix::zeros(n, n);
    let mut k = 0;
    while k < n {
        let l = values[k];
        if l.im == 0.0 {
            d[(k, k)] = l.re;
            k += 1;
        } else {
            d[(k, k)] = l.re;
            d[(k, k + 1)] = -l.im;
            d[(k + 1, k)] = l.im;
            d[(k + 1, k + 1)] = l.re;
            k += 2;
        }
    }

    let s = loop {
        let s = RealMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        if condition_number(&s) < 10.0 {
            break s;
        }
    };
    let s_inv = s
        .clone()
        .try_inverse()
        .expect("well-conditioned basis is invertible");
    let a = &s * d * s_inv;

    let sc = crate::numerics::to_complex(&s);
    let mut eigenvectors = ComplexMatrix::zeros(n, n);
    let mut k = 0;
    while k < n {
        if values[k].im == 0.0 {
            eigenvectors.set_column(k, &sc.column(k));
            k += 1;
        } else {
            // the block [[a, −b], [b, a]] maps e₁ − i e₂ to (a + ib)(e₁ − i e₂)
            let v = sc.column(k) - sc.column(k + 1) * Complex64::i();
            eigenvectors.set_column(k + 1, &v.map(|z| z.conj()));
            eigenvectors.set_column(k, &v);
            k += 2;
        }
    }
    StableMatrix {
        a,
        eigenvalues: values,
        eigenvectors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{containment_distance, spectral_distance};
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn quadratic(x0: Vec<f64>, steps: usize) -> SystemSpec {
        SystemSpec::new(
            SystemKind::QuadraticInvariant {
                mu: 0.9,
                lambda: 0.5,
                c: 1.0,
            },
            x0,
            steps,
        )
        .unwrap()
    }

    fn diag() -> RealMatrix {
        RealMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.5])
    }

    #[test]
    fn diagonal_powers() {
        let spec = SystemSpec::new(SystemKind::Linear { a: diag() }, vec![1.0, 1.0], 3).unwrap();
        let traj = simulate(&spec).unwrap();
        assert_eq!(
            traj.states,
            vec![
                vec![1.0, 1.0],
                vec![0.9, 0.5],
                vec![0.81, 0.25],
                vec![0.9 * 0.81, 0.125]
            ]
        );
        assert!((traj.states[3][0] - 0.729).abs() < 1e-15);
    }

    #[test]
    fn quadratic_single_step() {
        let traj = simulate(&quadratic(vec![1.0, 0.0], 1)).unwrap();
        assert_eq!(traj.states[1], vec![0.9, 1.0]);
    }

    #[test]
    fn rotation_first_coordinate() {
        let spec = SystemSpec::new(
            SystemKind::Rotation {
                theta: 0.5,
                observe: Observation::FirstCoordinate,
            },
            vec![1.0, 0.0],
            20,
        )
        .unwrap();
        let traj = simulate(&spec).unwrap();
        for (t, x) in traj.states.iter().enumerate() {
            assert_eq!(x.len(), 1);
            assert!((x[0] - (0.5 * t as f64).cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let a = RealMatrix::from_element(1, 1, 10.0);
        let spec = SystemSpec::new(SystemKind::Linear { a }, vec![1.0], 20).unwrap();
        assert!(matches!(
            simulate(&spec),
            Err(KoopmanError::Divergence { step: 13 })
        ));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let rot = SystemKind::Rotation {
            theta: 4.0,
            observe: Observation::Full,
        };
        assert!(SystemSpec::new(rot, vec![1.0, 0.0], 3).is_err());
        assert!(SystemSpec::new(SystemKind::Linear { a: diag() }, vec![1.0], 3).is_err());
        let q = SystemKind::QuadraticInvariant {
            mu: 1.5,
            lambda: 0.5,
            c: 1.0,
        };
        assert!(SystemSpec::new(q, vec![1.0, 0.0], 3).is_err());
    }

    #[test]
    fn forced_inputs_are_held_and_seeded() {
        let kind = SystemKind::ForcedLinear {
            a: diag(),
            b_in: RealMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
            input: InputSignal {
                hold: 3,
                amplitude: 0.4,
                seed: 11,
            },
        };
        let spec = SystemSpec::new(kind, vec![0.0, 0.0], 12).unwrap();
        let a = simulate(&spec).unwrap();
        let b = simulate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.metadata["seed"], "11");
        let u = a.inputs.as_ref().unwrap();
        assert_eq!(u.len(), 13);
        for t in 0..u.len() {
            assert_eq!(u[t], u[t - t % 3]);
            assert!(u[t][0].abs() <= 0.4);
        }
        // x₁ = B u₀ from rest
        assert!(
            (a.states[1][0] - u[0][0]).abs() < 1e-15
                && (a.states[1][1] - 0.5 * u[0][0]).abs() < 1e-15
        );
    }

    #[test]
    fn linear_oracle_is_affine_block() {
        let spec = SystemSpec::new(SystemKind::Linear { a: diag() }, vec![1.0, 1.0], 3).unwrap();
        let oracle = exact_lift_oracle(&spec, &Dictionary::polynomial(2, 1)).unwrap();
        assert_eq!(oracle.retained, vec![0, 1, 2]);
        let want = RealMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.9, 0.0, 0.0, 0.0, 0.5]);
        assert_eq!(oracle.operator, want);
    }

    #[test]
    fn quadratic_oracle_closes_on_four_monomials() {
        let oracle =
            exact_lift_oracle(&quadratic(vec![1.0, 0.0], 3), &Dictionary::polynomial(2, 2))
                .unwrap();
        // {1, x1, x2, x1²}; x1x2 and x2² leave the span
        assert_eq!(oracle.retained, vec![0, 1, 2, 3]);
        assert!(
            spectral_distance(&oracle.eigenvalues(), &[c(1.0), c(0.9), c(0.81), c(0.5)]) < 1e-15
        );
        assert!(containment_distance(&oracle.eigenvalues(), &[c(0.9), c(0.5), c(0.81)]) == 0.0);
    }

    #[test]
    fn quadratic_oracle_unavailable_for_linear_dictionary() {
        assert!(
            exact_lift_oracle(&quadratic(vec![1.0, 0.0], 3), &Dictionary::polynomial(2, 1))
                .is_none()
        );
    }

    #[test]
    fn oracle_rejects_other_dictionaries() {
        assert!(
            exact_lift_oracle(&quadratic(vec![1.0, 0.0], 3), &Dictionary::identity(2)).is_none()
        );
    }

    fn assert_oracle_consistent(spec: &SystemSpec, dict: &Dictionary) {
        let oracle = exact_lift_oracle(spec, dict).unwrap();
        let traj = simulate(spec).unwrap();
        for t in 0..traj.len() - 1 {
            let now = dict.eval(&traj.states[t]).unwrap();
            let next = dict.eval(&traj.states[t + 1]).unwrap();
            let pick = |v: &DVector<f64>| {
                DVector::from_iterator(oracle.retained.len(), oracle.retained.iter().map(|&k| v[k]))
            };
            let err = (pick(&next) - &oracle.operator * pick(&now)).norm();
            assert!(
                err <= 1e-10 * pick(&next).norm().max(1.0),
                "step {t}: {err}"
            );
        }
    }

    #[test]
    fn oracle_consistent_with_simulation() {
        let rot = SystemSpec::new(
            SystemKind::Rotation {
                theta: 0.3,
                observe: Observation::Full,
            },
            vec![0.8, -0.4],
            25,
        )
        .unwrap();
        for degree in 1..=3 {
            assert_oracle_consistent(
                &quadratic(vec![0.7, -0.3], 25),
                &Dictionary::polynomial(2, degree + 1),
            );
            assert_oracle_consistent(&rot, &Dictionary::polynomial(2, degree));
            assert_oracle_consistent(&rot, &Dictionary::polynomial_kernel_features(2, degree));
        }
    }

    proptest! {
        #[test]
        fn stable_matrix_has_promised_eigenpairs(n in 1usize..=6, seed in any::<u64>()) {
            let m = random_stable_matrix(n, &mut ChaCha8Rng::seed_from_u64(seed));
            let ac = crate::numerics::to_complex(&m.a);
            for (i, l) in m.eigenvalues.iter().enumerate() {
                let v = m.eigenvectors.column(i);
                prop_assert!((&ac * v - v * *l).norm() <= 1e-12 * v.norm());
                prop_assert!(l.norm() >= 0.3 && l.norm() <= 0.95);
            }
            let computed: Vec<Complex64> = m.a.complex_eigenvalues().iter().copied().collect();
            prop_assert!(spectral_distance(&computed, &m.eigenvalues) < 1e-9);
        }

        #[test]
        fn linear_oracle_consistent(seed in any::<u64>(), degree in 1u32..=3) {
            let m = random_stable_matrix(2, &mut ChaCha8Rng::seed_from_u64(seed));
            let spec = SystemSpec::new(SystemKind::Linear { a: m.a }, vec![0.6, -0.9], 15).unwrap();
            let oracle = exact_lift_oracle(&spec, &Dictionary::polynomial(2, degree)).unwrap();
            prop_assert_eq!(oracle.retained.len(), Dictionary::polynomial(2, degree).output_dim());
            assert_oracle_consistent(&spec, &Dictionary::polynomial(2, degree));
        }
    }
}
