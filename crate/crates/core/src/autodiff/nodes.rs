//! Differentiable nodes for state assembly and the physics terms.
//!
//! Batches of states are `(B, 32)` tensors: 16 real parts then 16 imaginary
//! parts of the 4×4 matrix, row-major. For a real loss `f` of a complex matrix
//! `X`, the gradient is carried as the complex matrix `∂f/∂Re X + i ∂f/∂Im X`.

use num_complex::Complex64 as C64;

use super::{sigmoid, softplus, Tape, Var, VjpArgs};
use crate::error::{Error, Result};
use crate::families::vertex_signs;
use crate::linalg::{self, ComplexMatrix};
use crate::qstate::{self, pauli_table};

type M4 = [C64; 16];

const ZERO: C64 = C64::new(0.0, 0.0);

/// Strictly lower positions of a 4×4 factor, row-major.
pub const LOWER: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

/// Trace below which the zero-trace guard adds `TRACE_GUARD·I`.
pub const TRACE_GUARD: f64 = 1e-12;

/// Offset added to the softplus pivots of the LDL head.
pub const LDL_EPS: f64 = 1e-6;

fn read(row: &[f64]) -> M4 {
    std::array::from_fn(|k| C64::new(row[k], row[16 + k]))
}

fn write(m: &M4, out: &mut [f64]) {
    for (k, z) in m.iter().enumerate() {
        out[k] = z.re;
        out[16 + k] = z.im;
    }
}

fn add_into(m: &M4, out: &mut [f64]) {
    for (k, z) in m.iter().enumerate() {
        out[k] += z.re;
        out[16 + k] += z.im;
    }
}

fn mul(a: &M4, b: &M4) -> M4 {
    let mut c = [ZERO; 16];
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i * 4 + k];
            if aik == ZERO {
                continue;
            }
            for j in 0..4 {
                c[i * 4 + j] += aik * b[k * 4 + j];
            }
        }
    }
    c
}

fn adj(a: &M4) -> M4 {
    std::array::from_fn(|k| a[(k % 4) * 4 + k / 4].conj())
}

fn herm_sum(a: &M4) -> M4 {
    let t = adj(a);
    std::array::from_fn(|k| a[k] + t[k])
}

fn to_matrix(m: &M4) -> ComplexMatrix {
    ComplexMatrix::new(4, 4, m.to_vec()).expect("finite 4x4")
}

fn from_matrix(m: &ComplexMatrix) -> M4 {
    std::array::from_fn(|k| m.as_slice()[k])
}

/// Normalizes `ρ̃` to unit trace; returns `(ρ, ρ̃ used, t)`.
fn normalize(mut raw: M4) -> (M4, M4, f64) {
    let mut t: f64 = (0..4).map(|k| raw[k * 5].re).sum();
    if t < TRACE_GUARD {
        for k in 0..4 {
            raw[k * 5] += TRACE_GUARD;
        }
        t += 4.0 * TRACE_GUARD;
    }
    (raw.map(|z| z / t), raw, t)
}

/// Gradient through `ρ = ρ̃ / Tr ρ̃`.
fn normalize_vjp(g: &M4, raw: &M4, t: f64) -> M4 {
    let inner: f64 = g.iter().zip(raw).map(|(g, r)| g.re * r.re + g.im * r.im).sum();
    let mut out = g.map(|z| z / t);
    for k in 0..4 {
        out[k * 5] -= inner / (t * t);
    }
    out
}

fn cholesky_factor(h: &[f64]) -> M4 {
    let mut l = [ZERO; 16];
    for k in 0..4 {
        l[k * 5] = C64::new(h[k], 0.0);
    }
    for (n, &(a, b)) in LOWER.iter().enumerate() {
        l[a * 4 + b] = C64::new(h[4 + n], h[10 + n]);
    }
    l
}

fn unit_lower_factor(h: &[f64]) -> M4 {
    let mut l = [ZERO; 16];
    for k in 0..4 {
        l[k * 5] = C64::new(1.0, 0.0);
    }
    for (n, &(a, b)) in LOWER.iter().enumerate() {
        l[a * 4 + b] = C64::new(h[n], h[6 + n]);
    }
    l
}

/// `(B, 16)` Cholesky head → `(B, 32)` states `LL†/Tr(LL†)`.
///
/// Head layout: 4 real diagonal entries, then the 6 real and 6 imaginary
/// parts of the strictly lower entries in [`LOWER`] order.
pub fn cholesky_assemble(tape: &mut Tape, head: Var) -> Result<Var> {
    expect_cols(tape, head, 16, "cholesky head")?;
    tape.rowwise(
        head,
        32,
        |h, out| {
            let l = cholesky_factor(h);
            let (rho, _, _) = normalize(mul(&l, &adj(&l)));
            write(&rho, out);
        },
        |h, _, g, gi| {
            let l = cholesky_factor(h);
            let (_, raw, t) = normalize(mul(&l, &adj(&l)));
            let gl = mul(&herm_sum(&normalize_vjp(&read(g), &raw, t)), &l);
            for k in 0..4 {
                gi[k] += gl[k * 5].re;
            }
            for (n, &(a, b)) in LOWER.iter().enumerate() {
                gi[4 + n] += gl[a * 4 + b].re;
                gi[10 + n] += gl[a * 4 + b].im;
            }
        },
    )
}

/// `(B, 16)` LDL head → `(B, 32)` states `LDL†/Tr(LDL†)`.
///
/// Head layout: 6 real then 6 imaginary parts of the unit-lower factor in
/// [`LOWER`] order, then 4 pivots `d` with `D = softplus(d) + 1e-6`.
pub fn ldl_assemble(tape: &mut Tape, head: Var) -> Result<Var> {
    expect_cols(tape, head, 16, "ldl head")?;
    let build = |h: &[f64]| {
        let l = unit_lower_factor(h);
        let d: [f64; 4] = std::array::from_fn(|k| softplus(h[12 + k]) + LDL_EPS);
        let mut ld = l;
        for (k, z) in ld.iter_mut().enumerate() {
            *z *= d[k % 4];
        }
        (l, ld)
    };
    tape.rowwise(
        head,
        32,
        move |h, out| {
            let (l, ld) = build(h);
            let (rho, _, _) = normalize(mul(&ld, &adj(&l)));
            write(&rho, out);
        },
        move |h, _, g, gi| {
            let (l, ld) = build(h);
            let (_, raw, t) = normalize(mul(&ld, &adj(&l)));
            let graw = normalize_vjp(&read(g), &raw, t);
            let gl = mul(&herm_sum(&graw), &ld);
            for (n, &(a, b)) in LOWER.iter().enumerate() {
                gi[n] += gl[a * 4 + b].re;
                gi[6 + n] += gl[a * 4 + b].im;
            }
            let lgl = mul(&adj(&l), &mul(&graw, &l));
            for k in 0..4 {
                gi[12 + k] += lgl[k * 5].re * sigmoid(h[12 + k]);
            }
        },
    )
}

/// `(B, 32)` raw matrices `M` → `(B, 32)` Hermitian parts `(M + M†)/2`.
pub fn direct_assemble(tape: &mut Tape, head: Var) -> Result<Var> {
    expect_cols(tape, head, 32, "direct head")?;
    tape.rowwise(
        head,
        32,
        |h, out| {
            let m = read(h);
            write(&herm_sum(&m).map(|z| z * 0.5), out);
        },
        |_, _, g, gi| add_into(&herm_sum(&read(g)).map(|z| z * 0.5), gi),
    )
}

/// Row-wise scalar node whose local gradient is produced by the forward pass.
fn scalar_rows<F>(tape: &mut Tape, x: Var, f: F) -> Result<Var>
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let (rows, cols) = tape.shape(x);
    let mut local = vec![0.0; rows * cols];
    let mut value = vec![0.0; rows];
    {
        let xv = tape.value(x);
        for r in 0..rows {
            value[r] = f(&xv[r * cols..(r + 1) * cols], &mut local[r * cols..(r + 1) * cols]);
        }
    }
    tape.custom(
        &[x],
        rows,
        1,
        value,
        Box::new(move |a: &VjpArgs| {
            let g = local
                .chunks(cols)
                .zip(a.out_grad)
                .flat_map(|(row, &g)| row.iter().map(move |v| v * g))
                .collect();
            vec![Some(g)]
        }),
    )
}

/// `(B, 32)` raw matrices → `(B, 1)` anti-Hermitian size `Σ|M − M†|/2`
/// (entrywise complex modulus).
pub fn herm_residual(tape: &mut Tape, head: Var) -> Result<Var> {
    expect_cols(tape, head, 32, "herm residual")?;
    scalar_rows(tape, head, |h, grad| {
        let m = read(h);
        let mt = adj(&m);
        let mut v = 0.0;
        let mut g = [ZERO; 16];
        for k in 0..16 {
            let d = m[k] - mt[k];
            let n = d.norm();
            v += n;
            if n > 0.0 {
                g[k] = d / n;
            }
        }
        write(&g, grad);
        0.5 * v
    })
}

/// `(B, 32)` → `(B, 1)` values `|Re Tr ρ − 1|`.
pub fn trace_violation_node(tape: &mut Tape, rho: Var) -> Result<Var> {
    expect_cols(tape, rho, 32, "trace violation")?;
    scalar_rows(tape, rho, |r, grad| {
        let d = (0..4).map(|k| r[k * 5]).sum::<f64>() - 1.0;
        for k in 0..4 {
            grad[k * 5] = d.signum() * (d != 0.0) as u8 as f64;
        }
        d.abs()
    })
}

fn eig_of(r: &[f64]) -> Result<linalg::HermitianEig> {
    linalg::hermitian_eig(&to_matrix(&read(r)).hermitian_part())
}

fn outer_sum(eig: &linalg::HermitianEig, weights: impl Fn(f64) -> f64) -> M4 {
    let mut p = [ZERO; 16];
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let w = weights(lam);
        if w == 0.0 {
            continue;
        }
        let v = eig.eigenvector(j);
        for a in 0..4 {
            for b in 0..4 {
                p[a * 4 + b] += w * v[a] * v[b].conj();
            }
        }
    }
    p
}

/// `Σ_j max(0, −λ_j)` of one flattened candidate, with its gradient
/// `−Σ_{λ_j<0} v_j v_j†` in the real/imag layout.
pub fn eig_penalty_value(flat: &[f64]) -> Result<(f64, [f64; 32])> {
    if flat.len() != 32 {
        return Err(Error::DimensionMismatch(format!("expected 32 values, got {}", flat.len())));
    }
    let eig = eig_of(flat)?;
    let v = eig.eigenvalues.iter().map(|l| (-l).max(0.0)).sum();
    let p = outer_sum(&eig, |l| if l < 0.0 { -1.0 } else { 0.0 });
    let mut g = [0.0; 32];
    write(&p, &mut g);
    Ok((v, g))
}

/// `(B, 32)` → `(B, 1)` negative-eigenvalue mass of each candidate.
pub fn eig_penalty_node(tape: &mut Tape, rho: Var) -> Result<Var> {
    expect_cols(tape, rho, 32, "eig penalty")?;
    scalar_rows(tape, rho, |r, grad| match eig_penalty_value(r) {
        Ok((v, g)) => {
            grad.copy_from_slice(&g);
            v
        }
        Err(_) => f64::NAN,
    })
}

/// `(B, 32)` → `(B, 1)` smallest eigenvalue of the partial transpose.
pub fn min_eig_pt_node(tape: &mut Tape, rho: Var) -> Result<Var> {
    expect_cols(tape, rho, 32, "min eig pt")?;
    scalar_rows(tape, rho, |r, grad| {
        let pt = qstate::partial_transpose_matrix(&to_matrix(&read(r)).hermitian_part());
        let Ok(eig) = linalg::hermitian_eig(&pt) else {
            return f64::NAN;
        };
        let v = eig.eigenvector(0);
        let p: M4 = std::array::from_fn(|k| v[k / 4] * v[k % 4].conj());
        let back = qstate::partial_transpose_matrix(&to_matrix(&p));
        write(&from_matrix(&back), grad);
        eig.eigenvalues[0]
    })
}

/// `(B, 32)` → `(B, 16)` Pauli expectations `Re Tr(ρ σᵢ⊗σⱼ)`.
pub fn pauli_node(tape: &mut Tape, rho: Var) -> Result<Var> {
    expect_cols(tape, rho, 32, "pauli expectations")?;
    tape.rowwise(
        rho,
        16,
        |r, out| out.copy_from_slice(&qstate::pauli_expectations_flat(r)),
        |_, _, g, gi| {
            for (k, entries) in pauli_table().iter().enumerate() {
                for &(r, c, v) in entries {
                    let idx = c * 4 + r;
                    gi[idx] += g[k] * v.re;
                    gi[16 + idx] -= g[k] * v.im;
                }
            }
        },
    )
}

fn correlation(phi: &[f64]) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| phi[4 * (i + 1) + j + 1]))
}

/// `(B, 16)` embeddings → `(B, 1)` sums of singular values of the
/// correlation block.
pub fn nuclear_norm_node(tape: &mut Tape, phi: Var) -> Result<Var> {
    expect_cols(tape, phi, 16, "nuclear norm")?;
    scalar_rows(tape, phi, |p, grad| {
        let t = correlation(p);
        let mut tt = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                tt[3 * i + j] = (0..3).map(|k| t[k][i] * t[k][j]).sum();
            }
        }
        let Ok(eig) = ComplexMatrix::from_real(3, 3, &tt).and_then(|m| linalg::hermitian_eig(&m)) else {
            return f64::NAN;
        };
        let mut n = 0.0;
        // ∂n/∂T = Σ_{σ>0} (T v)(vᵀ)/σ
        let mut g = [[0.0; 3]; 3];
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            let s = lam.max(0.0).sqrt();
            n += s;
            if s < 1e-12 {
                continue;
            }
            let v: Vec<f64> = eig.eigenvector(j).iter().map(|z| z.re).collect();
            for a in 0..3 {
                let tv: f64 = (0..3).map(|k| t[a][k] * v[k]).sum();
                for b in 0..3 {
                    g[a][b] += tv * v[b] / s;
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                grad[4 * (i + 1) + j + 1] = g[i][j];
            }
        }
        n
    })
}

/// `(B, 16)` embeddings → `(B, 1)` best signed vertex sum of `diag(T)`.
pub fn best_vertex_node(tape: &mut Tape, phi: Var) -> Result<Var> {
    expect_cols(tape, phi, 16, "vertex sum")?;
    let signs = vertex_signs();
    scalar_rows(tape, phi, move |p, grad| {
        let c = [p[5], p[10], p[15]];
        let (k, s) = crate::families::best_vertex_sum(&c);
        for i in 0..3 {
            grad[5 * (i + 1)] = signs[k][i];
        }
        s
    })
}

/// `(B, 16)` embeddings → scalar mean over pairs `i < j` of
/// `max(0, margin − ‖φᵢ − φⱼ‖₂)`. Zero for a single row.
pub fn diversity_node(tape: &mut Tape, phi: Var, margin: f64) -> Result<Var> {
    let (rows, cols) = tape.shape(phi);
    let pairs = rows * rows.saturating_sub(1) / 2;
    let mut grad = vec![0.0; rows * cols];
    let mut total = 0.0;
    {
        let x = tape.value(phi);
        let mut diff = vec![0.0; cols];
        for i in 0..rows {
            for j in i + 1..rows {
                let mut d2 = 0.0;
                for c in 0..cols {
                    diff[c] = x[i * cols + c] - x[j * cols + c];
                    d2 += diff[c] * diff[c];
                }
                let d = d2.sqrt();
                if d >= margin {
                    continue;
                }
                total += margin - d;
                if d > 0.0 {
                    for c in 0..cols {
                        grad[i * cols + c] -= diff[c] / d;
                        grad[j * cols + c] += diff[c] / d;
                    }
                }
            }
        }
    }
    let scale = if pairs > 0 { 1.0 / pairs as f64 } else { 0.0 };
    grad.iter_mut().for_each(|g| *g *= scale);
    tape.custom(
        &[phi],
        1,
        1,
        vec![total * scale],
        Box::new(move |a: &VjpArgs| vec![Some(grad.iter().map(|g| g * a.out_grad[0]).collect())]),
    )
}

fn expect_cols(tape: &Tape, x: Var, cols: usize, what: &str) -> Result<()> {
    let got = tape.shape(x).1;
    if got != cols {
        return Err(Error::DimensionMismatch(format!("{what}: expected {cols} columns, got {got}")));
    }
    Ok(())
}
