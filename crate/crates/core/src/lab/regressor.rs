//! Ridge regression from features to scene parameters, scored by R².

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::LabError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeRegressor {
    pub lambda: f64,
    /// `outputs × inputs`, row-major.
    pub weights: Vec<f64>,
    pub intercept: Vec<f64>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl RidgeRegressor {
    /// Closed-form ridge fit with an unpenalized intercept.
    pub fn fit<X: AsRef<[f64]>, Y: AsRef<[f64]>>(xs: &[X], ys: &[Y], lambda: f64) -> Result<Self, LabError> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(LabError::InvalidInput(format!("ridge fit on {} inputs, {} targets", xs.len(), ys.len())));
        }
        if !(lambda >= 0.0) {
            return Err(LabError::InvalidInput(format!("ridge lambda {lambda}")));
        }
        let n = xs.len();
        let d = xs[0].as_ref().len();
        let k = ys[0].as_ref().len();
        if xs.iter().any(|x| x.as_ref().len() != d) || ys.iter().any(|y| y.as_ref().len() != k) {
            return Err(LabError::InvalidInput("ragged ridge inputs".into()));
        }
        let x = DMatrix::from_fn(n, d, |i, j| xs[i].as_ref()[j]);
        let y = DMatrix::from_fn(n, k, |i, j| ys[i].as_ref()[j]);
        let x_mean: DVector<f64> = DVector::from_fn(d, |j, _| x.column(j).mean());
        let y_mean: DVector<f64> = DVector::from_fn(k, |j, _| y.column(j).mean());
        let xc = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - x_mean[j]);
        let yc = DMatrix::from_fn(n, k, |i, j| y[(i, j)] - y_mean[j]);
        let mut gram = xc.transpose() * &xc;
        for j in 0..d {
            gram[(j, j)] += lambda;
        }
        let rhs = xc.transpose() * yc;
        let beta = gram
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .or_else(|| gram.lu().solve(&rhs))
            .ok_or_else(|| LabError::InvalidInput("singular ridge system; increase lambda".into()))?;
        let intercept = y_mean - beta.transpose() * x_mean;
        let mut weights = Vec::with_capacity(k * d);
        for o in 0..k {
            weights.extend(beta.column(o).iter());
        }
        Ok(RidgeRegressor { lambda, weights, intercept: intercept.iter().copied().collect(), input_dim: d, output_dim: k })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, LabError> {
        if x.len() != self.input_dim {
            return Err(LabError::InvalidInput(format!("regressor expects {} inputs, got {}", self.input_dim, x.len())));
        }
        Ok((0..self.output_dim)
            .map(|o| {
                let row = &self.weights[o * self.input_dim..(o + 1) * self.input_dim];
                self.intercept[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect())
    }
}

/// `1 − SS_res / SS_tot`, pooled over every output dimension; `SS_tot` uses
/// each dimension's own mean.
pub fn r2<P: AsRef<[f64]>, T: AsRef<[f64]>>(preds: &[P], truths: &[T]) -> Result<f64, LabError> {
    if truths.is_empty() || preds.len() != truths.len() {
        return Err(LabError::InvalidInput(format!("r2 on {} predictions, {} truths", preds.len(), truths.len())));
    }
    let k = truths[0].as_ref().len();
    if preds.iter().any(|p| p.as_ref().len() != k) || truths.iter().any(|t| t.as_ref().len() != k) {
        return Err(LabError::InvalidInput("ragged r2 inputs".into()));
    }
    let n = truths.len() as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for j in 0..k {
        let mean = truths.iter().map(|t| t.as_ref()[j]).sum::<f64>() / n;
        for (p, t) in preds.iter().zip(truths) {
            let t = t.as_ref()[j];
            ss_res += (t - p.as_ref()[j]).powi(2);
            ss_tot += (t - mean).powi(2);
        }
    }
    if ss_tot == 0.0 {
        return Err(LabError::ConstantTruth);
    }
    Ok(1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r2_definition_examples() {
        let t = [[1.0], [2.0], [3.0]];
        assert_eq!(r2(&t, &t).unwrap(), 1.0);
        assert_eq!(r2(&[[2.0], [2.0], [2.0]], &t).unwrap(), 0.0);
        let v = r2(&[[1.1], [1.9], [3.2]], &t).unwrap();
        assert!((v - 0.97).abs() < 1e-12, "{v}");
        assert_eq!(r2(&t, &[[4.0], [4.0], [4.0]]), Err(LabError::ConstantTruth));
    }

    #[test]
    fn ridge_recovers_linear_map() {
        // y = A x + b exactly; tiny lambda should recover it
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos(), i as f64 / 40.0]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![2.0 * x[0] - x[2] + 0.5, x[1] * 3.0 - 1.0]).collect();
        let reg = RidgeRegressor::fit(&xs, &ys, 1e-10).unwrap();
        let preds: Vec<_> = xs.iter().map(|x| reg.predict(x).unwrap()).collect();
        assert!(r2(&preds, &ys).unwrap() > 1.0 - 1e-9);
        assert!((reg.intercept[0] - 0.5).abs() < 1e-6);
        assert!(reg.predict(&[1.0]).is_err());
    }

    #[test]
    fn ridge_shrinks_with_lambda() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0]]).collect();
        let weak = RidgeRegressor::fit(&xs, &ys, 0.0).unwrap();
        let strong = RidgeRegressor::fit(&xs, &ys, 1e4).unwrap();
        assert!((weak.weights[0] - 1.0).abs() < 1e-12);
        assert!(strong.weights[0] < 0.5);
    }
}
