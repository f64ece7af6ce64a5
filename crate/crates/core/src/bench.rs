//! Scaling micro-benchmarks: generator forward pass, factor assembly and
//! eigenvalue-based validity checks versus Hilbert dimension `d`.

use std::time::Instant;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::autodiff::{normal_fill, Rng, LAYER_NORM_VAR_FLOOR};
use crate::error::{Error, Result};
use crate::gan::{GeneratorKind, LATENT_DIM};
use crate::linalg::{self, ComplexMatrix, PSD_TOL};

pub const SAMPLES_HEADER: &str = "op,d,batch,repeat,threads,seconds_per_state";
pub const SUMMARY_HEADER: &str = "op,d,median,mean,ci95_lo,ci95_hi";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    /// Batch sizes for forward and assembly timings.
    pub batch_sizes: Vec<usize>,
    /// Batch size for eigenvalue checks, which are far costlier per state.
    pub check_batch: usize,
    pub repeats: usize,
    pub thread_cap: usize,
    pub include_ppt_up_to: usize,
    pub seed: u64,
    pub hidden: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            dims: vec![16, 32, 64, 128, 256],
            batch_sizes: vec![64],
            check_batch: 2,
            repeats: 15,
            thread_cap: 4,
            include_ppt_up_to: 32,
            seed: 0,
            hidden: 256,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("dims must be nonempty and strictly ascending".into()));
        }
        if self.dims.iter().any(|&d| d < 2 || d % 2 != 0) {
            return Err(Error::Config("dims must be even and ≥ 2".into()));
        }
        if self.repeats < 2 {
            return Err(Error::Config("repeats must be ≥ 2".into()));
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) || self.check_batch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if self.thread_cap == 0 || self.hidden == 0 {
            return Err(Error::Config("thread_cap and hidden must be positive".into()));
        }
        Ok(())
    }

    /// Threads actually used: the cap, limited by the machine.
    pub fn threads(&self) -> usize {
        let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        self.thread_cap.min(avail).max(1)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads())
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSample {
    pub op_name: String,
    pub d: usize,
    pub batch: usize,
    pub repeat_index: usize,
    pub threads: usize,
    pub seconds_per_state: f64,
}

impl BenchSample {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.op_name, self.d, self.batch, self.repeat_index, self.threads, self.seconds_per_state
        )
    }
}

/// Times `op` once as warm-up and then `repeats` times.
fn time_repeats(
    config: &BenchConfig,
    op_name: &str,
    d: usize,
    batch: usize,
    mut op: impl FnMut() -> Result<()>,
) -> Result<Vec<BenchSample>> {
    op()?;
    let threads = config.threads();
    let mut out = Vec::with_capacity(config.repeats);
    for r in 0..config.repeats {
        let t = Instant::now();
        op()?;
        let secs = t.elapsed().as_secs_f64();
        out.push(BenchSample {
            op_name: op_name.to_string(),
            d,
            batch,
            repeat_index: r,
            threads,
            seconds_per_state: (secs / batch as f64).max(f64::MIN_POSITIVE),
        });
    }
    Ok(out)
}

/// Inference-only generator sized for dimension `d`, with preallocated
/// buffers so the timed region only computes.
struct ScaledGenerator {
    hidden: usize,
    head: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    w3: Vec<f64>,
    b3: Vec<f64>,
}

/// Real outputs of a generator head for `d × d` states.
pub fn head_width(kind: GeneratorKind, d: usize) -> usize {
    match kind {
        // d real diagonal entries plus d(d−1)/2 complex sub-diagonal ones;
        // the LDL head has d(d−1) off-diagonal reals plus d pivots.
        GeneratorKind::Cholesky | GeneratorKind::Ldl => d * d,
        GeneratorKind::Direct => 2 * d * d,
    }
}

fn uniform_vec(n: usize, bound: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_range(-bound, bound)).collect()
}

impl ScaledGenerator {
    fn new(kind: GeneratorKind, d: usize, hidden: usize, rng: &mut Rng) -> Self {
        let head = head_width(kind, d);
        let b_in = 1.0 / (LATENT_DIM as f64).sqrt();
        let b_h = 1.0 / (hidden as f64).sqrt();
        ScaledGenerator {
            hidden,
            head,
            w1: uniform_vec(LATENT_DIM * hidden, b_in, rng),
            b1: uniform_vec(hidden, b_in, rng),
            w2: uniform_vec(hidden * hidden, b_h, rng),
            b2: uniform_vec(hidden, b_h, rng),
            w3: uniform_vec(hidden * head, b_h, rng),
            b3: uniform_vec(head, b_h, rng),
        }
    }

    fn affine(x: &[f64], rows: usize, k: usize, w: &[f64], b: &[f64], out: &mut [f64]) {
        let n = b.len();
        for r in 0..rows {
            out[r * n..(r + 1) * n].copy_from_slice(b);
        }
        // SAFETY: x is rows×k, w is k×n and out is rows×n, all row-major.
        unsafe {
            matrixmultiply::dgemm(
                rows,
                k,
                n,
                1.0,
                x.as_ptr(),
                k as isize,
                1,
                w.as_ptr(),
                n as isize,
                1,
                1.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }

    fn norm_act(h: &mut [f64], width: usize) {
        for row in h.chunks_mut(width) {
            let n = width as f64;
            let mu = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            let is = 1.0 / var.max(LAYER_NORM_VAR_FLOOR).sqrt();
            for v in row.iter_mut() {
                let y = (*v - mu) * is;
                *v = if y > 0.0 { y } else { 0.2 * y };
            }
        }
    }

    /// Head outputs for `rows` latents.
    fn forward(&self, z: &[f64], rows: usize, h1: &mut [f64], h2: &mut [f64], out: &mut [f64]) {
        let hd = self.hidden;
        Self::affine(z, rows, LATENT_DIM, &self.w1, &self.b1, h1);
        Self::norm_act(h1, hd);
        Self::affine(h1, rows, hd, &self.w2, &self.b2, h2);
        Self::norm_act(h2, hd);
        for (a, b) in h2.iter_mut().zip(h1.iter()) {
            *a += b;
        }
        Self::affine(h2, rows, hd, &self.w3, &self.b3, out);
    }
}

/// Forward-pass timing of untrained generators whose heads are sized for `d`.
pub fn bench_forward(config: &BenchConfig) -> Result<Vec<BenchSample>> {
    config.validate()?;
    let pool = config.pool()?;
    let threads = config.threads();
    let mut rng = Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    for kind in GeneratorKind::ALL {
        for &d in &config.dims {
            let gen = ScaledGenerator::new(kind, d, config.hidden, &mut rng);
            for &batch in &config.batch_sizes {
                let mut z = vec![0.0; batch * LATENT_DIM];
                normal_fill(&mut rng, &mut z);
                let chunk = batch.div_ceil(threads);
                let mut bufs: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..threads)
                    .map(|_| (vec![0.0; chunk * gen.hidden], vec![0.0; chunk * gen.hidden], vec![0.0; chunk * gen.head]))
                    .collect();
                let mut first: Option<Vec<f64>> = None;
                let samples = time_repeats(config, &format!("forward-{kind}"), d, batch, || {
                    pool.install(|| {
                        z.par_chunks(chunk * LATENT_DIM).zip(bufs.par_iter_mut()).for_each(|(zc, (h1, h2, o))| {
                            let rows = zc.len() / LATENT_DIM;
                            gen.forward(zc, rows, &mut h1[..rows * gen.hidden], &mut h2[..rows * gen.hidden], &mut o[..rows * gen.head]);
                        })
                    });
                    // Values (not times) must repeat exactly.
                    let head0 = &bufs[0].2;
                    match &first {
                        None => first = Some(head0.clone()),
                        Some(f) if f != head0 => {
                            return Err(Error::NumericAbort("forward outputs differ across repeats".into()))
                        }
                        Some(_) => {}
                    }
                    if !head0.iter().all(|v| v.is_finite()) {
                        return Err(Error::NonFinite("bench forward"));
                    }
                    Ok(())
                })?;
                out.extend(samples);
            }
        }
    }
    Ok(out)
}

/// Random lower-triangular factor; unit diagonal when `unit`.
fn random_lower(d: usize, unit: bool, rng: &mut Rng) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(d, d);
    let data = m.as_mut_slice();
    for i in 0..d {
        for j in 0..i {
            data[i * d + j] = C64::new(rng.normal(), rng.normal());
        }
        data[i * d + i] = C64::new(if unit { 1.0 } else { rng.normal() }, 0.0);
    }
    m
}

/// `L L†` (or `L D L†` when `pivots` is given) normalized to unit trace.
///
/// `scratch` holds `L D` when pivots are present.
pub fn assemble_into(
    l: &ComplexMatrix,
    pivots: Option<&[f64]>,
    scratch: &mut ComplexMatrix,
    out: &mut ComplexMatrix,
) -> Result<()> {
    match pivots {
        None => linalg::matmul_adjoint_into(l, l, out)?,
        Some(p) => {
            let d = l.cols();
            for (dst, (k, src)) in scratch.as_mut_slice().iter_mut().zip(l.as_slice().iter().enumerate()) {
                *dst = src * p[k % d];
            }
            linalg::matmul_adjoint_into(scratch, l, out)?;
        }
    }
    let t = out.trace().re;
    let t = if t < 1e-12 { 1e-12 } else { t };
    out.as_mut_slice().iter_mut().for_each(|z| *z /= t);
    Ok(())
}

/// Timing of `LL†` and `LDL†` assembly plus normalization for random factors.
pub fn bench_assembly(config: &BenchConfig) -> Result<Vec<BenchSample>> {
    config.validate()?;
    // Correctness guard: the identity factor yields I/d.
    for &d in &config.dims {
        let mut scratch = ComplexMatrix::zeros(d, d);
        let mut out = ComplexMatrix::zeros(d, d);
        assemble_into(&ComplexMatrix::identity(d), None, &mut scratch, &mut out)?;
        if out.max_abs_diff(&ComplexMatrix::identity(d).scale(1.0 / d as f64)) > 1e-15 {
            return Err(Error::NumericAbort(format!("identity assembly guard failed at d={d}")));
        }
    }
    let pool = config.pool()?;
    let mut rng = Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    for (name, ldl) in [("assembly-llt", false), ("assembly-ldl", true)] {
        for &d in &config.dims {
            for &batch in &config.batch_sizes {
                let factors: Vec<ComplexMatrix> = (0..batch).map(|_| random_lower(d, ldl, &mut rng)).collect();
                let pivots: Vec<Vec<f64>> = (0..batch)
                    .map(|_| (0..d).map(|_| crate::autodiff::softplus(rng.normal()) + 1e-6).collect())
                    .collect();
                let mut bufs: Vec<(ComplexMatrix, ComplexMatrix)> =
                    (0..batch).map(|_| (ComplexMatrix::zeros(d, d), ComplexMatrix::zeros(d, d))).collect();
                let samples = time_repeats(config, name, d, batch, || {
                    pool.install(|| {
                        factors
                            .par_iter()
                            .zip(&pivots)
                            .zip(bufs.par_iter_mut())
                            .try_for_each(|((l, p), (s, o))| assemble_into(l, ldl.then_some(p.as_slice()), s, o))
                    })
                })?;
                out.extend(samples);
            }
        }
    }
    Ok(out)
}

/// Partial transpose on the second factor of a `2 ⊗ (d/2)` split.
fn partial_transpose_2x(m: &ComplexMatrix, out: &mut ComplexMatrix) {
    let d = m.rows();
    let k = d / 2;
    let src = m.as_slice();
    let dst = out.as_mut_slice();
    for a in 0..2 {
        for b in 0..2 {
            for i in 0..k {
                for j in 0..k {
                    dst[(a * k + i) * d + b * k + j] = src[(a * k + j) * d + b * k + i];
                }
            }
        }
    }
}

/// Eigensolve-based PSD check timing, plus PPT up to `include_ppt_up_to`.
pub fn bench_checks(config: &BenchConfig) -> Result<Vec<BenchSample>> {
    config.validate()?;
    let guard = linalg::hermitian_eigvals(&ComplexMatrix::identity(4))?;
    if guard[0] < -PSD_TOL {
        return Err(Error::NumericAbort("PSD guard on identity failed".into()));
    }
    let pool = config.pool()?;
    let mut rng = Rng::seed_from_u64(config.seed);
    let batch = config.check_batch;
    let mut out = Vec::new();
    for &d in &config.dims {
        let states: Vec<ComplexMatrix> = (0..batch)
            .map(|_| {
                let l = random_lower(d, false, &mut rng);
                let mut s = ComplexMatrix::zeros(d, d);
                let mut o = ComplexMatrix::zeros(d, d);
                assemble_into(&l, None, &mut s, &mut o).map(|_| o)
            })
            .collect::<Result<_>>()?;
        out.extend(time_repeats(config, "check-psd", d, batch, || {
            pool.install(|| {
                states.par_iter().try_for_each(|s| {
                    let ev = linalg::hermitian_eigvals(s)?;
                    if ev[0] < -PSD_TOL {
                        return Err(Error::NumericAbort(format!("PSD guard failed at d={d}")));
                    }
                    Ok(())
                })
            })
        })?);
        if d <= config.include_ppt_up_to {
            let mut pts: Vec<ComplexMatrix> = (0..batch).map(|_| ComplexMatrix::zeros(d, d)).collect();
            out.extend(time_repeats(config, "check-ppt", d, batch, || {
                pool.install(|| {
                    states.par_iter().zip(pts.par_iter_mut()).try_for_each(|(s, pt)| {
                        partial_transpose_2x(s, pt);
                        linalg::hermitian_eigvals(pt).map(|_| ())
                    })
                })
            })?);
        }
    }
    Ok(out)
}

/// Least-squares slope of log-median-time versus log `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub op: String,
    pub d_min: usize,
    pub slope: f64,
    pub ci95: (f64, f64),
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn t_quantile(dof: usize) -> Result<f64> {
    let t = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(t.inverse_cdf(0.975))
}

/// Median per `d` of the given samples, ascending in `d`.
pub fn medians_by_d(samples: &[BenchSample]) -> Vec<(usize, f64)> {
    let mut ds: Vec<usize> = samples.iter().map(|s| s.d).collect();
    ds.sort_unstable();
    ds.dedup();
    ds.into_iter()
        .map(|d| {
            let mut v: Vec<f64> = samples.iter().filter(|s| s.d == d).map(|s| s.seconds_per_state).collect();
            (d, median(&mut v))
        })
        .collect()
}

/// OLS slope of `(log d, log median)` over `d ≥ d_min` with a 95% t-interval.
pub fn fit_slope(samples: &[BenchSample], d_min: usize) -> Result<(f64, (f64, f64))> {
    let pts: Vec<(f64, f64)> = medians_by_d(samples)
        .into_iter()
        .filter(|&(d, _)| d >= d_min)
        .map(|(d, t)| ((d as f64).ln(), t.ln()))
        .collect();
    let n = pts.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "slope fit needs ≥ 3 distinct d ≥ {d_min}, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let se = (sse / (nf - 2.0) / sxx).sqrt();
    let half = t_quantile(n - 2)? * se;
    Ok((slope, (slope - half, slope + half)))
}

pub fn slope_report(samples: &[BenchSample], op: &str, d_min: usize) -> Result<SlopeReport> {
    let own: Vec<BenchSample> = samples.iter().filter(|s| s.op_name == op).cloned().collect();
    let (slope, ci95) = fit_slope(&own, d_min)?;
    Ok(SlopeReport {
        op: op.to_string(),
        d_min,
        slope,
        ci95,
    })
}

/// `(op, d, median, mean, ci95_lo, ci95_hi)` rows, CI of the mean by t-interval.
pub fn summarize(samples: &[BenchSample]) -> Result<Vec<(String, usize, f64, f64, f64, f64)>> {
    let mut ops: Vec<&str> = samples.iter().map(|s| s.op_name.as_str()).collect();
    ops.dedup();
    let mut seen = Vec::new();
    let mut rows = Vec::new();
    for op in ops {
        if seen.contains(&op) {
            continue;
        }
        seen.push(op);
        let own: Vec<&BenchSample> = samples.iter().filter(|s| s.op_name == op).collect();
        let mut ds: Vec<usize> = own.iter().map(|s| s.d).collect();
        ds.sort_unstable();
        ds.dedup();
        for d in ds {
            let mut v: Vec<f64> = own.iter().filter(|s| s.d == d).map(|s| s.seconds_per_state).collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let half = if v.len() >= 2 {
                let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                t_quantile(v.len() - 1)? * sd / n.sqrt()
            } else {
                0.0
            };
            let med = median(&mut v);
            rows.push((op.to_string(), d, med, mean, mean - half, mean + half));
        }
    }
    Ok(rows)
}
