//! Cross-sectional least squares on a monomial basis in `s / K`.
//!
//! The fit is computed from an SVD of the design matrix, truncated at
//! `1e-10 * sigma_max`, so rank-deficient cross-sections (e.g. every path at
//! the same price) get the minimal-norm solution. A [`Projector`] caches the
//! pseudo-inverse for one cross-section; applying it to several target
//! vectors uses exactly the same linear operator.

use nalgebra::{DMatrix, DVector};

use crate::error::{validation, Result};

/// Relative singular-value cutoff for the rank decision.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Features `(1, s/K, (s/K)^2, ..., (s/K)^d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionBasis {
    degree: usize,
    scale: f64,
}

impl RegressionBasis {
    pub fn new(degree: usize, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(validation(format!("basis scale must be > 0, got {scale}")));
        }
        Ok(Self { degree, scale })
    }

    /// Degree-2 monomials scaled by the strike.
    pub fn quadratic(strike: f64) -> Self {
        Self::new(2, strike).expect("strike must be positive")
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn features(&self, s: f64) -> Vec<f64> {
        let x = s / self.scale;
        let mut out = Vec::with_capacity(self.len());
        let mut p = 1.0;
        for _ in 0..self.len() {
            out.push(p);
            p *= x;
        }
        out
    }

    fn design(&self, states: &[f64]) -> DMatrix<f64> {
        let width = self.len();
        DMatrix::from_fn(states.len(), width, |row, col| {
            (states[row] / self.scale).powi(col as i32)
        })
    }

    pub fn evaluate(&self, coefficients: &[f64], s: f64) -> f64 {
        let x = s / self.scale;
        coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    pub rank: usize,
}

/// Pseudo-inverse of the design matrix of one cross-section of states.
#[derive(Debug, Clone)]
pub struct Projector {
    basis: RegressionBasis,
    design: DMatrix<f64>,
    pinv: DMatrix<f64>,
    rank: usize,
}

impl Projector {
    pub fn new(states: &[f64], basis: RegressionBasis) -> Result<Self> {
        if states.is_empty() {
            return Err(validation("regression needs at least one state"));
        }
        if states.iter().any(|s| !s.is_finite()) {
            return Err(validation("regression states must be finite"));
        }
        let design = basis.design(states);
        let svd = design.clone().svd(true, true);
        let sigma_max = svd.singular_values.max();
        let cutoff = RANK_TOLERANCE * sigma_max;
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        let pinv = svd
            .pseudo_inverse(cutoff)
            .map_err(|e| validation(format!("pseudo-inverse failed: {e}")))?;
        Ok(Self {
            basis,
            design,
            pinv,
            rank,
        })
    }

    pub fn n_states(&self) -> usize {
        self.design.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn basis(&self) -> RegressionBasis {
        self.basis
    }

    fn check_targets(&self, targets: &[f64]) -> Result<()> {
        if targets.len() != self.n_states() {
            return Err(validation(format!(
                "length mismatch: {} states but {} targets",
                self.n_states(),
                targets.len()
            )));
        }
        Ok(())
    }

    pub fn fit(&self, targets: &[f64]) -> Result<FitResult> {
        self.check_targets(targets)?;
        let y = DVector::from_column_slice(targets);
        let coef = &self.pinv * &y;
        let residual_norm = (&self.design * &coef - &y).norm();
        Ok(FitResult {
            coefficients: coef.iter().copied().collect(),
            residual_norm,
            rank: self.rank,
        })
    }

    /// Fitted values at the states the projector was built from.
    pub fn fitted(&self, targets: &[f64]) -> Result<Vec<f64>> {
        self.check_targets(targets)?;
        let y = DVector::from_column_slice(targets);
        let fitted = &self.design * (&self.pinv * &y);
        Ok(fitted.iter().copied().collect())
    }
}

/// Least-squares fit of `targets` on the basis features of `states`.
pub fn fit_least_squares(
    states: &[f64],
    targets: &[f64],
    basis: RegressionBasis,
) -> Result<FitResult> {
    check_lengths(states, targets, basis)?;
    Projector::new(states, basis)?.fit(targets)
}

/// Regression estimate of `E[values_next | states_now]` at every state.
pub fn conditional_expectation(
    states_now: &[f64],
    values_next: &[f64],
    basis: RegressionBasis,
) -> Result<Vec<f64>> {
    check_lengths(states_now, values_next, basis)?;
    Projector::new(states_now, basis)?.fitted(values_next)
}

fn check_lengths(states: &[f64], targets: &[f64], basis: RegressionBasis) -> Result<()> {
    if states.len() != targets.len() {
        return Err(validation(format!(
            "length mismatch: {} states but {} targets",
            states.len(),
            targets.len()
        )));
    }
    if states.len() < basis.len() {
        return Err(validation(format!(
            "need at least {} observations for degree {}, got {}",
            basis.len(),
            basis.degree(),
            states.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis() -> RegressionBasis {
        RegressionBasis::quadratic(100.0)
    }

    #[test]
    fn features_start_with_one() {
        let f = basis().features(150.0);
        assert_eq!(f, vec![1.0, 1.5, 2.25]);
        assert_eq!(basis().evaluate(&[1.0, 2.0, 3.0], 200.0), 1.0 + 4.0 + 12.0);
    }

    #[test]
    fn constant_targets_fit_constant() {
        let states = [80.0, 95.0, 100.0, 120.0, 150.0];
        let fit = fit_least_squares(&states, &[7.5; 5], basis()).unwrap();
        assert!((fit.coefficients[0] - 7.5).abs() < 1e-9);
        assert!(fit.coefficients[1].abs() < 1e-9 && fit.coefficients[2].abs() < 1e-9);
        assert_eq!(fit.rank, 3);
    }

    #[test]
    fn recovers_exact_quadratic() {
        let states = [55.0, 70.0, 90.0, 100.0, 130.0, 175.0];
        let (a, b, c) = (3.0, -1.25, 0.5);
        let targets: Vec<f64> = states
            .iter()
            .map(|s| {
                let x = s / 100.0;
                a + b * x + c * x * x
            })
            .collect();
        let fit = fit_least_squares(&states, &targets, basis()).unwrap();
        assert!((fit.coefficients[0] - a).abs() < 1e-9);
        assert!((fit.coefficients[1] - b).abs() < 1e-9);
        assert!((fit.coefficients[2] - c).abs() < 1e-9);
        assert!(fit.residual_norm < 1e-9);
    }

    #[test]
    fn identical_states_give_mean() {
        let states = [100.0; 6];
        let targets = [1.0, 2.0, 3.0, 4.0, 8.0, 0.0];
        let fit = fit_least_squares(&states, &targets, basis()).unwrap();
        assert_eq!(fit.rank, 1);
        let fitted = conditional_expectation(&states, &targets, basis()).unwrap();
        for v in fitted {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_targets_zero_fit() {
        let states = [60.0, 80.0, 100.0, 140.0];
        let fitted = conditional_expectation(&states, &[0.0; 4], basis()).unwrap();
        assert!(fitted.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn errors_on_bad_shapes() {
        assert!(fit_least_squares(&[1.0, 2.0, 3.0], &[1.0, 2.0], basis()).is_err());
        assert!(fit_least_squares(&[], &[], basis()).is_err());
        assert!(fit_least_squares(&[1.0, 2.0], &[1.0, 2.0], basis()).is_err());
        assert!(RegressionBasis::new(2, 0.0).is_err());
    }
}
