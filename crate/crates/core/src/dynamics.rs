//! Discrete-time LTI servo models, their lifted (Toeplitz) form and simulation.
//!
//! Coefficients are given in descending powers of `z`. A model with numerator
//! degree below the denominator degree has a corresponding input delay:
//! `0.5 / (z - 0.5)` responds one sample after the input.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

/// Poles with magnitude above this are reported as unstable.
pub const STABILITY_MARGIN: f64 = 1e-9;
const DC_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
    sample_time: f64,
}

/// Impulse response together with the stability verdict of the model that
/// produced it. Unstable models are simulated anyway; callers decide whether
/// to warn.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub samples: Vec<f64>,
    pub max_pole_magnitude: f64,
}

impl ImpulseResponse {
    pub fn is_unstable(&self) -> bool {
        self.max_pole_magnitude > 1.0 + STABILITY_MARGIN
    }
}

impl DiscreteTransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>, sample_time: f64) -> Result<Self> {
        if !(sample_time.is_finite() && sample_time > 0.0) {
            return Err(Error::arg(format!("sample time must be positive, got {sample_time}")));
        }
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(Error::arg("transfer function coefficients must be finite"));
        }
        let den: Vec<f64> = den.into_iter().skip_while(|c| *c == 0.0).collect();
        if den.is_empty() {
            return Err(Error::arg("denominator is identically zero"));
        }
        let mut num: Vec<f64> = num.into_iter().skip_while(|c| *c == 0.0).collect();
        if num.is_empty() {
            num.push(0.0);
        }
        if num.len() > den.len() {
            return Err(Error::arg(format!(
                "improper transfer function: numerator degree {} exceeds denominator degree {}",
                num.len() - 1,
                den.len() - 1
            )));
        }
        let lead = den[0];
        Ok(Self {
            num: num.iter().map(|c| c / lead).collect(),
            den: den.iter().map(|c| c / lead).collect(),
            sample_time,
        })
    }

    pub fn identity(sample_time: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![1.0], sample_time)
    }

    /// `z^-samples`.
    pub fn delay(samples: usize, sample_time: f64) -> Result<Self> {
        let mut den = vec![0.0; samples + 1];
        den[0] = 1.0;
        Self::new(vec![1.0], den, sample_time)
    }

    pub fn numerator(&self) -> &[f64] {
        &self.num
    }

    /// Monic denominator.
    pub fn denominator(&self) -> &[f64] {
        &self.den
    }

    pub fn sample_time(&self) -> f64 {
        self.sample_time
    }

    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    /// Numerator coefficients aligned with the denominator in powers of `z^-1`.
    fn delayed_numerator(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.den.len() - self.num.len()];
        b.extend_from_slice(&self.num);
        b
    }

    pub fn dc_gain(&self) -> Result<f64> {
        let d: f64 = self.den.iter().sum();
        if d.abs() < DC_EPS {
            return Err(Error::IllConditionedDc(d.abs()));
        }
        Ok(self.num.iter().sum::<f64>() / d)
    }

    /// Numerator rescaled so the DC gain is exactly one.
    pub fn normalize_dc(&self) -> Result<Self> {
        let gain = self.dc_gain()?;
        if gain.abs() < DC_EPS {
            return Err(Error::IllConditionedDc(gain.abs()));
        }
        Ok(Self {
            num: self.num.iter().map(|c| c / gain).collect(),
            den: self.den.clone(),
            sample_time: self.sample_time,
        })
    }

    pub fn poles(&self) -> Vec<Complex<f64>> {
        polynomial_roots(&self.den)
    }

    pub fn zeros(&self) -> Vec<Complex<f64>> {
        polynomial_roots(&self.num)
    }

    pub fn max_pole_magnitude(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.max_pole_magnitude() <= 1.0 + STABILITY_MARGIN
    }

    /// Reflects every pole outside the unit circle to its conjugate reciprocal
    /// `1 / conj(p)`. The magnitude response keeps its shape up to a constant
    /// factor; the numerator is left untouched.
    pub fn stabilize(&self) -> Self {
        let poles = self.poles();
        if poles.iter().all(|p| p.norm() <= 1.0 + STABILITY_MARGIN) {
            return self.clone();
        }
        let reflected: Vec<Complex<f64>> = poles
            .into_iter()
            .map(|p| if p.norm() > 1.0 { Complex::new(1.0, 0.0) / p.conj() } else { p })
            .collect();
        Self {
            num: self.num.clone(),
            den: polynomial_from_roots(&reflected),
            sample_time: self.sample_time,
        }
    }

    /// `G(e^{jωT})` at frequency `hz`.
    pub fn frequency_response(&self, hz: f64) -> Complex<f64> {
        let z = Complex::from_polar(1.0, 2.0 * std::f64::consts::PI * hz * self.sample_time);
        horner(&self.num, z) / horner(&self.den, z)
    }

    /// Zero-initial-condition response to a unit pulse at `k = 0`.
    pub fn impulse_response(&self, n: usize) -> ImpulseResponse {
        let mut pulse = vec![0.0; n];
        if n > 0 {
            pulse[0] = 1.0;
        }
        ImpulseResponse {
            samples: self.simulate(&pulse),
            max_pole_magnitude: self.max_pole_magnitude(),
        }
    }

    pub fn lift(&self, n: usize) -> LiftedOperator {
        LiftedOperator {
            impulse: self.impulse_response(n).samples,
        }
    }

    /// Difference-equation filtering from zero initial conditions.
    pub fn simulate(&self, input: &[f64]) -> Vec<f64> {
        let b = self.delayed_numerator();
        let a = &self.den;
        let mut out = vec![0.0; input.len()];
        for k in 0..input.len() {
            let mut acc = 0.0;
            for (i, bi) in b.iter().enumerate().take(k + 1) {
                acc += bi * input[k - i];
            }
            for (i, ai) in a.iter().enumerate().skip(1).take(k) {
                acc -= ai * out[k - i];
            }
            out[k] = acc;
        }
        out
    }

    /// Response of a system resting at `rest` before `k = 0`:
    /// `rest + G (input - rest)`. Assumes unity DC gain for the rest offset.
    pub fn simulate_about(&self, input: &[f64], rest: f64) -> Vec<f64> {
        let shifted: Vec<f64> = input.iter().map(|v| v - rest).collect();
        self.simulate(&shifted).into_iter().map(|v| v + rest).collect()
    }
}

/// Lower-triangular Toeplitz operator of a causal system on a finite horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedOperator {
    impulse: Vec<f64>,
}

impl LiftedOperator {
    pub fn from_impulse(impulse: Vec<f64>) -> Self {
        Self { impulse }
    }

    pub fn size(&self) -> usize {
        self.impulse.len()
    }

    pub fn impulse(&self) -> &[f64] {
        &self.impulse
    }

    /// `(G u)(k) = Σ_{i ≤ k} h[k - i] u(i)`.
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.size(), "lifted operator size mismatch");
        let h = &self.impulse;
        (0..input.len())
            .map(|k| (0..=k).map(|i| h[k - i] * input[i]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |r, c| if r >= c { self.impulse[r - c] } else { 0.0 })
    }
}

fn horner(coeffs: &[f64], z: Complex<f64>) -> Complex<f64> {
    coeffs
        .iter()
        .fold(Complex::new(0.0, 0.0), |acc, c| acc * z + Complex::new(*c, 0.0))
}

/// Roots of a polynomial in descending powers via companion-matrix eigenvalues.
pub fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let c: Vec<f64> = coeffs.iter().cloned().skip_while(|v| *v == 0.0).collect();
    if c.len() < 2 {
        return Vec::new();
    }
    let n = c.len() - 1;
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        companion[(0, j)] = -c[j + 1] / c[0];
    }
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    companion.complex_eigenvalues().iter().cloned().collect()
}

/// Monic real polynomial with the given roots (complex roots must come in
/// conjugate pairs).
pub fn polynomial_from_roots(roots: &[Complex<f64>]) -> Vec<f64> {
    let mut poly = vec![Complex::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex::new(0.0, 0.0); poly.len() + 1];
        for (i, c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        poly = next;
    }
    poly.into_iter().map(|c| c.re).collect()
}

/// Printer servo models as published (3-decimal coefficients), `T_s` = 1 ms.
pub mod printer {
    pub const SAMPLE_TIME: f64 = 1e-3;
    pub const X_NUM: [f64; 6] = [0.021, -0.061, 0.044, 0.033, -0.056, 0.012];
    pub const X_DEN: [f64; 7] = [1.0, -5.627, 13.38, -17.2, 12.6, -4.994, 0.836];
    pub const Y_NUM: [f64; 6] = [0.018, -0.053, 0.038, 0.027, -0.048, 0.017];
    pub const Y_DEN: [f64; 7] = [1.0, -5.648, 13.48, -17.4, 12.8, -5.093, 0.856];
}
