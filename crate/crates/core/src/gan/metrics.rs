use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{self, Family, Task};
use crate::linalg::{self, ComplexMatrix};
use crate::qstate::{self, DensityCandidate, FidelityConvention, PreparedState};

/// Ridge added to both covariances before the matrix square roots.
pub const FID_RIDGE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub cross_fidelity: f64,
    pub fid: f64,
    pub offfamily_residual: f64,
}

/// Mean and `1/(n−1)` covariance of 16-dim embeddings.
fn moments(emb: &[[f64; 16]]) -> Result<([f64; 16], Vec<f64>)> {
    let n = emb.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("covariance needs n ≥ 2, got {n}")));
    }
    let mut mu = [0.0; 16];
    for e in emb {
        for k in 0..16 {
            mu[k] += e[k];
        }
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; 256];
    for e in emb {
        for i in 0..16 {
            let di = e[i] - mu[i];
            for j in i..16 {
                cov[i * 16 + j] += di * (e[j] - mu[j]);
            }
        }
    }
    for i in 0..16 {
        for j in i..16 {
            let v = cov[i * 16 + j] / (n - 1) as f64;
            cov[i * 16 + j] = v;
            cov[j * 16 + i] = v;
        }
        cov[i * 16 + i] += FID_RIDGE;
    }
    Ok((mu, cov))
}

/// Fréchet distance between Gaussian fits of two embedding sets.
pub fn fid(a: &[[f64; 16]], b: &[[f64; 16]]) -> Result<f64> {
    let (mu_a, cov_a) = moments(a)?;
    let (mu_b, cov_b) = moments(b)?;
    let ca = ComplexMatrix::from_real(16, 16, &cov_a)?;
    let cb = ComplexMatrix::from_real(16, 16, &cov_b)?;
    let sa = linalg::psd_sqrt(&ca)?;
    let inner = linalg::matmul(&linalg::matmul(&sa, &cb)?, &sa)?.hermitian_part();
    let ev = linalg::hermitian_eigvals(&inner)?;
    let floor = linalg::roundoff_floor(&ev);
    let cross: f64 = ev.iter().filter(|&&l| l > floor).map(|l| l.sqrt()).sum();
    let mean_term: f64 = mu_a.iter().zip(&mu_b).map(|(x, y)| (x - y) * (x - y)).sum();
    let tr = ca.trace().re + cb.trace().re;
    Ok(mean_term + tr - 2.0 * cross)
}

fn embeddings(states: &[DensityCandidate]) -> Vec<[f64; 16]> {
    states.iter().map(|s| qstate::pauli_embedding(s).phi).collect()
}

/// Mean fidelity over all `(g, t)` pairs, reduced in index order.
fn mean_pair_fidelity(
    left: &[PreparedState],
    right: &[DensityCandidate],
    convention: FidelityConvention,
) -> Result<f64> {
    let rows: Vec<f64> = left
        .par_iter()
        .map(|p| right.iter().map(|s| p.fidelity(s, convention)).sum::<Result<f64>>())
        .collect::<Result<_>>()?;
    Ok(rows.iter().sum::<f64>() / (left.len() * right.len()) as f64)
}

/// Metrics of a generated set against the training set.
///
/// Accuracy, FID and the off-family residual use the raw candidates; the
/// cross fidelity first projects each candidate onto the nearest valid state.
pub fn evaluate(
    generated: &[DensityCandidate],
    train_set: &[DensityCandidate],
    family: Family,
    task: Task,
    convention: FidelityConvention,
) -> Result<EvalMetrics> {
    if generated.is_empty() || train_set.is_empty() {
        return Err(Error::InsufficientData("evaluate needs nonempty sets".into()));
    }
    let hits: Vec<bool> = generated
        .par_iter()
        .map(|g| families::criterion(family, task, g))
        .collect::<Result<_>>()?;
    let accuracy = hits.iter().filter(|&&h| h).count() as f64 / generated.len() as f64;

    let projected: Vec<DensityCandidate> = generated
        .par_iter()
        .map(|g| g.project_to_state())
        .collect::<Result<_>>()?;
    let prepared: Vec<PreparedState> = train_set.par_iter().map(PreparedState::new).collect::<Result<_>>()?;
    let cross_fidelity = mean_pair_fidelity(&prepared, &projected, convention)?;

    let fid = fid(&embeddings(generated), &embeddings(train_set))?;
    let offfamily_residual =
        generated.iter().map(|g| families::offfamily_residual(family, g)).sum::<f64>() / generated.len() as f64;
    Ok(EvalMetrics {
        accuracy,
        cross_fidelity,
        fid,
        offfamily_residual,
    })
}

/// Mean Uhlmann fidelity over distinct ordered pairs of `set`.
pub fn self_fidelity_baseline(set: &[DensityCandidate], convention: FidelityConvention) -> Result<f64> {
    let n = set.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("baseline needs at least 2 states, got {n}")));
    }
    let prepared: Vec<PreparedState> = set.par_iter().map(PreparedState::new).collect::<Result<_>>()?;
    // Fidelity is symmetric, so each unordered pair counts twice.
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| (i + 1..n).map(|j| prepared[i].fidelity(&set[j], convention)).sum::<Result<f64>>())
        .collect::<Result<_>>()?;
    Ok(2.0 * rows.iter().sum::<f64>() / (n * (n - 1)) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    fn phi_plus() -> DensityCandidate {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        DensityCandidate::pure(&[C64::new(s, 0.0), z, z, C64::new(s, 0.0)])
    }

    #[test]
    fn baseline_of_identical_states_is_one() {
        let set = vec![phi_plus(); 5];
        let b = self_fidelity_baseline(&set, FidelityConvention::Squared).unwrap();
        assert!((b - 1.0).abs() < 1e-10);
    }

    #[test]
    fn baseline_two_element_enumeration() {
        let set = vec![phi_plus(), DensityCandidate::maximally_mixed()];
        let b = self_fidelity_baseline(&set, FidelityConvention::Squared).unwrap();
        assert!((b - 0.25).abs() < 1e-10);
    }

    #[test]
    fn fid_point_masses() {
        let e = [[0.0; 16], [0.0; 16]];
        let mut f1 = [0.0; 16];
        f1[3] = 0.5;
        f1[7] = -0.25;
        let f = [f1, f1];
        let v = fid(&e, &f).unwrap();
        assert!((v - 0.3125).abs() < 1e-8);
        assert!(fid(&e[..1], &f).is_err());
    }
}
