//! Physical diagnostics: mass, torus energy, mode magnitudes, drift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::StateVector;
use crate::spectral::{BasisKind, SpectralBasis};

/// `\int |psi|^2`, from the coefficients through Parseval.
pub fn mass(b: &SpectralBasis, u: &StateVector) -> Result<f64> {
    u.ensure_on(b.key())?;
    let s: f64 = u.coeffs().iter().map(|c| c.norm_sqr()).sum();
    Ok(b.mode_norm_sq() * s)
}

/// `1/2 \int |psi_x|^2 + eps/4 \int 2 cos(2x) |psi|^4` on the 1D torus.
pub fn energy_torus(b: &SpectralBasis, u: &StateVector, eps: f64) -> Result<f64> {
    if b.kind() != BasisKind::Fourier1D {
        return Err(Error::config(format!("torus energy needs a 1D Fourier basis, got {}", b.key())));
    }
    u.ensure_on(b.key())?;
    let k2 = b.neg_laplacian_x_symbol()?;
    let kinetic: f64 = u.coeffs().iter().zip(&k2).map(|(c, k)| k * c.norm_sqr()).sum::<f64>()
        * 0.5
        * b.mode_norm_sq();
    let grid = b.to_grid(u.coeffs())?;
    let quartic: f64 = grid
        .iter()
        .zip(b.grid_points())
        .zip(b.grid_weights())
        .map(|((g, (x, _)), w)| w * 2.0 * (2.0 * x).cos() * g.norm_sqr().powi(2))
        .sum();
    Ok(kinetic + 0.25 * eps * quartic)
}

/// `|c_(kx,ky)|` for each requested index.
pub fn mode_magnitudes(b: &SpectralBasis, u: &StateVector, indices: &[(i64, i64)]) -> Result<Vec<f64>> {
    u.ensure_on(b.key())?;
    indices
        .iter()
        .map(|&(kx, ky)| Ok(u.coeffs()[b.slot(kx, ky)?].norm()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    Mass,
    EnergyTorus,
    ModeMagnitudes,
}

/// Time series of one observable. For mode magnitudes each sample holds
/// one value per tracked index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableTrace {
    pub kind: ObservableKind,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ObservableTrace {
    pub fn new(kind: ObservableKind) -> Self {
        Self { kind, times: Vec::new(), values: Vec::new() }
    }

    /// Appends a sample; times must increase strictly.
    pub fn push(&mut self, t: f64, value: Vec<f64>) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::config(format!("trace times must increase: {t} after {last}")));
            }
        }
        self.times.push(t);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// First component of every sample.
    pub fn scalar(&self) -> Vec<f64> {
        self.values.iter().map(|v| v[0]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftStatistics {
    pub max_abs_error: f64,
    /// Least-squares slope of `value(t) - value(0)` against `t`.
    pub linear_slope: f64,
}

pub fn drift_statistics(times: &[f64], values: &[f64]) -> Result<DriftStatistics> {
    if times.len() != values.len() {
        return Err(Error::SizeMismatch { expected: times.len(), found: values.len() });
    }
    if times.len() < 2 {
        return Err(Error::TraceTooShort(times.len()));
    }
    let v0 = values[0];
    let err: Vec<f64> = values.iter().map(|v| v - v0).collect();
    let max_abs_error = err.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let n = times.len() as f64;
    let tm = times.iter().sum::<f64>() / n;
    let em = err.iter().sum::<f64>() / n;
    let sxy: f64 = times.iter().zip(&err).map(|(t, e)| (t - tm) * (e - em)).sum();
    let sxx: f64 = times.iter().map(|t| (t - tm).powi(2)).sum();
    let linear_slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(DriftStatistics { max_abs_error, linear_slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Model, ModelParams};
    use crate::testutil::random_state;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    #[test]
    fn initial_masses() {
        let t = Model::TorusNls1d.build(&ModelParams::new(0.1, 32, 1)).unwrap();
        assert!((mass(t.basis(), &t.initial_state()).unwrap() - 2.0 * PI).abs() < 1e-12);
        let g = Model::GrossPitaevskii1d.build(&ModelParams::new(0.1, 20, 1)).unwrap();
        assert!((mass(g.basis(), &g.initial_state()).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mass_matches_grid_quadrature_and_free_flow() {
        for model in Model::ALL {
            let p = model.build(&model.desk_params(0.1)).unwrap();
            let u = random_state(&p, 21, 4);
            let m = mass(p.basis(), &u).unwrap();
            let g = p.basis().grid_norm(u.coeffs()).unwrap();
            assert!((m - g * g).abs() < 1e-10 * m, "{model}");
            let v = p.free_flow(0.37, &u).unwrap();
            assert!((mass(p.basis(), &v).unwrap() - m).abs() < 1e-12 * m);
        }
    }

    #[test]
    fn torus_energy_values() {
        let p = Model::TorusNls1d.build(&ModelParams::new(0.25, 64, 1)).unwrap();
        let b = p.basis();
        assert_eq!(energy_torus(b, &StateVector::zeros(b.key()), 0.3).unwrap(), 0.0);
        let e = energy_torus(b, &p.initial_state(), 0.25).unwrap();
        assert!((e - PI).abs() < 1e-12, "{e}");
        // psi = 1: kinetic 0, quartic int 2cos2x = 0
        let one = StateVector::unit(b.key(), b.slot(0, 0).unwrap());
        assert!(energy_torus(b, &one, 1.0).unwrap().abs() < 1e-12);
        // psi = e^{ix} + 1: |psi|^4 = (2 + 2cos x)^2 contains 2cos^2 x -> cos 2x
        let mut two = one.clone();
        two.coeffs_mut()[b.slot(1, 0).unwrap()] = Complex64::new(1.0, 0.0);
        // kinetic pi; quartic: int 2cos2x (4 + 8cos x + 4cos^2 x) = 4 pi
        let e2 = energy_torus(b, &two, 1.0).unwrap();
        assert!((e2 - (PI + PI)).abs() < 1e-12, "{e2}");
        let g = Model::GrossPitaevskii1d.build(&ModelParams::new(0.1, 8, 1)).unwrap();
        assert!(energy_torus(g.basis(), &g.initial_state(), 0.1).is_err());
    }

    #[test]
    fn modes() {
        let g = Model::GrossPitaevskii1d.build(&ModelParams::new(0.1, 8, 1)).unwrap();
        let idx: Vec<(i64, i64)> = (0..5).map(|k| (k, 0)).collect();
        let m = mode_magnitudes(g.basis(), &g.initial_state(), &idx).unwrap();
        assert_eq!(m, vec![1.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(mode_magnitudes(g.basis(), &g.initial_state(), &[(9, 0)]).is_err());

        let t = Model::TorusNls1d.build(&ModelParams::new(0.1, 16, 1)).unwrap();
        let b = t.basis();
        let e3 = StateVector::unit(b.key(), b.slot(3, 0).unwrap());
        let m = mode_magnitudes(b, &e3, &[(3, 0), (2, 0), (-3, 0)]).unwrap();
        assert_eq!(m, vec![1.0, 0.0, 0.0]);

        let u = random_state(&t, 4, 7);
        let all = b.mode_labels();
        let mags = mode_magnitudes(b, &u, &all).unwrap();
        let ss: f64 = mags.iter().map(|m| m * m).sum::<f64>() * b.mode_norm_sq();
        assert!((ss - mass(b, &u).unwrap()).abs() < 1e-12 * ss);
        let v = t.free_flow(1.1, &u).unwrap();
        let mv = mode_magnitudes(b, &v, &all).unwrap();
        assert!(mags.iter().zip(&mv).all(|(a, c)| (a - c).abs() < 1e-14));
    }

    #[test]
    fn drift() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let d = drift_statistics(&t, &[5.0; 4]).unwrap();
        assert_eq!((d.max_abs_error, d.linear_slope), (0.0, 0.0));
        let d = drift_statistics(&t, &t).unwrap();
        assert!((d.linear_slope - 1.0).abs() < 1e-15);
        assert_eq!(d.max_abs_error, 3.0);
        assert!(matches!(drift_statistics(&[0.0], &[1.0]), Err(Error::TraceTooShort(1))));
    }

    #[test]
    fn trace_requires_increasing_times() {
        let mut tr = ObservableTrace::new(ObservableKind::Mass);
        tr.push(0.0, vec![1.0]).unwrap();
        tr.push(1.0, vec![1.0]).unwrap();
        assert!(tr.push(1.0, vec![1.0]).is_err());
        assert_eq!(tr.scalar(), vec![1.0, 1.0]);
    }
}
