//! Independent oracles shared by the integration tests. Nothing in here calls
//! into the library's numerical routines, except `gradcheck`, which drives the
//! library's tape against finite differences.
#![allow(dead_code)]

pub mod gradcheck;

/// Plain triple-loop complex product on (re, im) pairs, row-major.
pub fn naive_matmul(
    a: &[(f64, f64)],
    b: &[(f64, f64)],
    n: usize,
    k: usize,
    m: usize,
) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); n * m];
    for i in 0..n {
        for j in 0..m {
            let (mut re, mut im) = (0.0, 0.0);
            for l in 0..k {
                let (ar, ai) = a[i * k + l];
                let (br, bi) = b[l * m + j];
                re += ar * br - ai * bi;
                im += ar * bi + ai * br;
            }
            out[i * m + j] = (re, im);
        }
    }
    out
}

/// Eigenvalues of a Hermitian matrix given as row-major (re, im) pairs,
/// computed through its real-symmetric embedding [[X, -Y], [Y, X]],
/// Householder tridiagonalisation and Sturm-sequence bisection.
pub fn bisection_eigenvalues(h: &[(f64, f64)], n: usize) -> Vec<f64> {
    let m = 2 * n;
    let mut s = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let (x, y) = h[i * n + j];
            s[i * m + j] = x;
            s[(i + n) * m + (j + n)] = x;
            s[i * m + (j + n)] = -y;
            s[(i + n) * m + j] = y;
        }
    }
    let (d, e) = tridiagonalize(&mut s, m);
    let all = sturm_bisection(&d, &e);
    all.iter().step_by(2).copied().collect()
}

/// Householder reduction of a real symmetric matrix to tridiagonal form.
/// Returns (diagonal, subdiagonal).
fn tridiagonalize(a: &mut [f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    for k in 0..n.saturating_sub(2) {
        let alpha_sq: f64 = ((k + 1)..n).map(|i| a[i * n + k] * a[i * n + k]).sum();
        if alpha_sq == 0.0 {
            continue;
        }
        let x0 = a[(k + 1) * n + k];
        let alpha = if x0 >= 0.0 { -alpha_sq.sqrt() } else { alpha_sq.sqrt() };
        let mut v = vec![0.0; n];
        v[k + 1] = x0 - alpha;
        for i in (k + 2)..n {
            v[i] = a[i * n + k];
        }
        let vnorm_sq: f64 = v.iter().map(|x| x * x).sum();
        if vnorm_sq == 0.0 {
            continue;
        }
        // A <- H A H with H = I - 2 v v^T / (v^T v)
        let mut p = vec![0.0; n];
        for i in 0..n {
            p[i] = (0..n).map(|j| a[i * n + j] * v[j]).sum::<f64>() * 2.0 / vnorm_sq;
        }
        let kfac: f64 = (0..n).map(|i| v[i] * p[i]).sum::<f64>() / vnorm_sq;
        let q: Vec<f64> = (0..n).map(|i| p[i] - kfac * v[i]).collect();
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] -= v[i] * q[j] + q[i] * v[j];
            }
        }
    }
    let d = (0..n).map(|i| a[i * n + i]).collect();
    let e = (1..n).map(|i| a[i * n + i - 1]).collect();
    (d, e)
}

/// Number of eigenvalues of the tridiagonal (d, e) strictly below x.
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        let denom = if q == 0.0 { 1e-300 } else { q };
        q = d[i] - x - e[i - 1] * e[i - 1] / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn sturm_bisection(d: &[f64], e: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut bound = 0.0f64;
    for i in 0..n {
        let left = if i > 0 { e[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < n { e[i].abs() } else { 0.0 };
        bound = bound.max(d[i].abs() + left + right);
    }
    let bound = bound + 1.0;
    (0..n)
        .map(|k| {
            let (mut lo, mut hi) = (-bound, bound);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if sturm_count(d, e, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

/// Central finite difference of a scalar function along coordinate `i`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Relative error used by every gradient check: |a - b| / max(|a|, |b|, 1e-6).
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}
