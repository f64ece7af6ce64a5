//! Two-qubit density-matrix semantics.
//!
//! Basis ordering is `|00>, |01>, |10>, |11>` with the first qubit most
//! significant, so `σ_i ⊗ I` acts on the first party. Candidates coming out of
//! a generator need not be normalized or positive; every physicality violation
//! is reported as a continuous measure rather than rejected.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, C64, PSD_TOL};

pub const DIM: usize = 4;

/// Trace tolerance accepted by [`uhlmann_fidelity`].
pub const TRACE_TOL: f64 = 1e-6;

/// A 4×4 Hermitian matrix, not necessarily a valid state.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityCandidate {
    mat: ComplexMatrix,
}

impl DensityCandidate {
    /// Hermitizes `m` to `(m + m†)/2`.
    pub fn new(m: &ComplexMatrix) -> Result<Self> {
        if m.rows() != DIM || m.cols() != DIM {
            return Err(Error::DimensionMismatch(format!(
                "density candidate must be 4x4, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        if !m.is_finite() {
            return Err(Error::NonFinite("DensityCandidate::new"));
        }
        Ok(DensityCandidate {
            mat: m.hermitian_part(),
        })
    }

    /// From the 32-value flattening: 16 real parts then 16 imaginary parts, row-major.
    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() != 2 * DIM * DIM {
            return Err(Error::DimensionMismatch(format!(
                "expected 32 values, got {}",
                values.len()
            )));
        }
        let m = ComplexMatrix::from_parts(DIM, DIM, &values[..16], &values[16..])?;
        Self::new(&m)
    }

    pub fn from_parts(re: &[f64], im: &[f64]) -> Result<Self> {
        Self::new(&ComplexMatrix::from_parts(DIM, DIM, re, im)?)
    }

    pub fn flatten(&self) -> [f64; 32] {
        let mut out = [0.0; 32];
        for (k, z) in self.mat.as_slice().iter().enumerate() {
            out[k] = z.re;
            out[16 + k] = z.im;
        }
        out
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn maximally_mixed() -> Self {
        DensityCandidate {
            mat: ComplexMatrix::identity(DIM).scale(0.25),
        }
    }

    /// `|ψ><ψ|` for a (not necessarily normalized) amplitude vector.
    pub fn pure(psi: &[C64; 4]) -> Self {
        DensityCandidate {
            mat: ComplexMatrix::outer(psi, psi).hermitian_part(),
        }
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::hermitian_eigvals(&self.mat)
    }

    /// Nearest valid state in the eigenvalue-clipping sense: negative
    /// eigenvalues set to zero, then renormalized. A candidate with no
    /// positive weight maps to `I/4`.
    pub fn project_to_state(&self) -> Result<DensityCandidate> {
        let eig = linalg::hermitian_eig(&self.mat)?;
        let total: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();
        if total <= 1e-300 {
            return Ok(Self::maximally_mixed());
        }
        let m = eig.reconstruct_with(|l| l.max(0.0) / total);
        Self::new(&m)
    }
}

/// Local Bloch vectors and the correlation tensor of a two-qubit operator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochForm {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub t: [[f64; 3]; 3],
}

impl BlochForm {
    /// `¼(I + Σ aᵢσᵢ⊗I + Σ bⱼ I⊗σⱼ + Σ tᵢⱼ σᵢ⊗σⱼ)`.
    pub fn to_matrix(&self) -> ComplexMatrix {
        let mut coeffs = [0.0; 16];
        coeffs[0] = 1.0;
        for i in 0..3 {
            coeffs[4 * (i + 1)] = self.a[i];
            coeffs[i + 1] = self.b[i];
            for j in 0..3 {
                coeffs[4 * (i + 1) + j + 1] = self.t[i][j];
            }
        }
        let mut m = ComplexMatrix::zeros(DIM, DIM);
        for (k, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for &(r, col, v) in &pauli_table()[k] {
                m[(r, col)] += v * (0.25 * c);
            }
        }
        m
    }

    pub fn correlation_diagonal(&self) -> [f64; 3] {
        [self.t[0][0], self.t[1][1], self.t[2][2]]
    }
}

/// `φ(ρ) = (<σᵢ⊗σⱼ>)`, i, j ∈ 0..4 row-major with σ₀ = I.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PauliEmbedding {
    pub phi: [f64; 16],
}

/// The single-qubit Pauli matrices `I, X, Y, Z`.
pub fn pauli(i: usize) -> ComplexMatrix {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    let im = C64::new(0.0, 1.0);
    let data = match i {
        0 => vec![l, o, o, l],
        1 => vec![o, l, l, o],
        2 => vec![o, -im, im, o],
        3 => vec![l, o, o, -l],
        _ => panic!("Pauli index {i} out of range"),
    };
    ComplexMatrix::new(2, 2, data).expect("2x2")
}

/// Nonzero entries `(row, col, value)` of `σᵢ ⊗ σⱼ`, indexed by `4i + j`.
pub fn pauli_table() -> &'static [Vec<(usize, usize, C64)>; 16] {
    static TABLE: OnceLock<[Vec<(usize, usize, C64)>; 16]> = OnceLock::new();
    TABLE.get_or_init(|| {
        std::array::from_fn(|k| {
            let p = pauli(k / 4).kron(&pauli(k % 4));
            let mut entries = Vec::with_capacity(4);
            for r in 0..DIM {
                for c in 0..DIM {
                    if p[(r, c)] != C64::new(0.0, 0.0) {
                        entries.push((r, c, p[(r, c)]));
                    }
                }
            }
            entries
        })
    })
}

/// `Re Tr(ρ P_k)` for all 16 Pauli products, computed from the flat
/// real/imag layout. Linear in the input.
pub fn pauli_expectations_flat(flat: &[f64]) -> [f64; 16] {
    let mut phi = [0.0; 16];
    for (k, entries) in pauli_table().iter().enumerate() {
        // Tr(ρ P) = Σ ρ_ab P_ba
        let mut s = 0.0;
        for &(r, c, v) in entries {
            let idx = c * DIM + r;
            s += flat[idx] * v.re - flat[16 + idx] * v.im;
        }
        phi[k] = s;
    }
    phi
}

pub fn pauli_embedding(rho: &DensityCandidate) -> PauliEmbedding {
    PauliEmbedding {
        phi: pauli_expectations_flat(&rho.flatten()),
    }
}

pub fn bloch_decompose(rho: &DensityCandidate) -> BlochForm {
    bloch_from_embedding(&pauli_embedding(rho))
}

pub fn bloch_from_embedding(e: &PauliEmbedding) -> BlochForm {
    let phi = &e.phi;
    let mut form = BlochForm {
        a: [0.0; 3],
        b: [0.0; 3],
        t: [[0.0; 3]; 3],
    };
    for i in 0..3 {
        form.a[i] = phi[4 * (i + 1)];
        form.b[i] = phi[i + 1];
        for j in 0..3 {
            form.t[i][j] = phi[4 * (i + 1) + j + 1];
        }
    }
    form
}

/// Transpose on the second qubit: `ρ^{T_B}_{(i,j),(k,l)} = ρ_{(i,l),(k,j)}`.
pub fn partial_transpose(rho: &DensityCandidate) -> ComplexMatrix {
    partial_transpose_matrix(rho.matrix())
}

pub fn partial_transpose_matrix(m: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(DIM, DIM);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + j, 2 * k + l)] = m[(2 * i + l, 2 * k + j)];
                }
            }
        }
    }
    out
}

/// Transpose on the first qubit.
pub fn partial_transpose_first(rho: &DensityCandidate) -> ComplexMatrix {
    let m = rho.matrix();
    let mut out = ComplexMatrix::zeros(DIM, DIM);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + j, 2 * k + l)] = m[(2 * k + j, 2 * i + l)];
                }
            }
        }
    }
    out
}

/// Smallest eigenvalue of the partial transpose.
pub fn min_eig_pt(rho: &DensityCandidate) -> Result<f64> {
    let ev = linalg::hermitian_eigvals(&partial_transpose(rho))?;
    Ok(ev[0])
}

/// PPT-entangled iff the partial transpose has an eigenvalue below `-PSD_TOL`.
pub fn is_ppt_entangled(rho: &DensityCandidate) -> Result<bool> {
    Ok(min_eig_pt(rho)? < -PSD_TOL)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TeleportationScore {
    /// Sum of singular values of the correlation tensor.
    pub n: f64,
    /// Best achievable teleportation fidelity `½(1 + n/3)`.
    pub f_max: f64,
}

pub fn teleportation_score(rho: &DensityCandidate) -> Result<TeleportationScore> {
    teleportation_score_from_t(&bloch_decompose(rho).t)
}

/// Singular values of `t` via the eigenvalues of `tᵀt`.
pub fn teleportation_score_from_t(t: &[[f64; 3]; 3]) -> Result<TeleportationScore> {
    let mut tt = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            tt[3 * i + j] = (0..3).map(|k| t[k][i] * t[k][j]).sum();
        }
    }
    let ev = linalg::hermitian_eigvals(&ComplexMatrix::from_real(3, 3, &tt)?)?;
    let n: f64 = ev.iter().map(|l| l.max(0.0).sqrt()).sum();
    Ok(TeleportationScore {
        n,
        f_max: 0.5 * (1.0 + n / 3.0),
    })
}

/// Which form of the Uhlmann fidelity to report.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FidelityConvention {
    /// `(Tr √(√ρ σ √ρ))²`
    #[default]
    Squared,
    /// `Tr √(√ρ σ √ρ)`
    Root,
}

impl std::str::FromStr for FidelityConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(Self::Squared),
            "root" => Ok(Self::Root),
            other => Err(Error::Config(format!("unknown fidelity convention {other:?}"))),
        }
    }
}

fn check_state(rho: &DensityCandidate) -> Result<()> {
    let tr = rho.trace();
    if (tr - 1.0).abs() > TRACE_TOL {
        return Err(Error::NotNormalized { trace: tr });
    }
    Ok(())
}

/// `√ρ` of a validated state, reusable across many fidelity evaluations.
#[derive(Clone, Debug)]
pub struct PreparedState {
    sqrt: ComplexMatrix,
}

impl PreparedState {
    pub fn new(rho: &DensityCandidate) -> Result<Self> {
        check_state(rho)?;
        Ok(PreparedState {
            sqrt: linalg::psd_sqrt(rho.matrix())?,
        })
    }

    /// Fidelity against a state already validated by the caller.
    pub fn fidelity(&self, sigma: &DensityCandidate, convention: FidelityConvention) -> Result<f64> {
        let inner = linalg::matmul(&linalg::matmul(&self.sqrt, sigma.matrix())?, &self.sqrt)?;
        let ev = linalg::hermitian_eigvals(&inner)?;
        let floor = linalg::roundoff_floor(&ev);
        let root: f64 = ev.iter().filter(|&&l| l > floor).map(|l| l.sqrt()).sum();
        let f = match convention {
            FidelityConvention::Squared => root * root,
            FidelityConvention::Root => root,
        };
        Ok(f.clamp(0.0, 1.0 + 1e-9))
    }
}

/// Uhlmann fidelity between two valid states.
pub fn uhlmann_fidelity(rho: &DensityCandidate, sigma: &DensityCandidate) -> Result<f64> {
    uhlmann_fidelity_with(rho, sigma, FidelityConvention::Squared)
}

pub fn uhlmann_fidelity_with(
    rho: &DensityCandidate,
    sigma: &DensityCandidate,
    convention: FidelityConvention,
) -> Result<f64> {
    check_state(sigma)?;
    let lmin = sigma.eigenvalues()?[0];
    if lmin < -PSD_TOL {
        return Err(Error::NotPsd { eigenvalue: lmin });
    }
    PreparedState::new(rho)?.fidelity(sigma, convention)
}

/// Sum of the magnitudes of the negative eigenvalues.
pub fn psd_violation(rho: &DensityCandidate) -> Result<f64> {
    Ok(rho.eigenvalues()?.iter().map(|l| (-l).max(0.0)).sum())
}

/// `|Tr ρ − 1|`.
pub fn trace_violation(rho: &DensityCandidate) -> f64 {
    (rho.trace() - 1.0).abs()
}
