//! Finite-difference checks of every loss term against reverse mode.

use super::relative_error;
use qresgan::autodiff::{self, ParamStore, Rng, Tape, Var};
use qresgan::families::{Family, Task};
use qresgan::gan::{
    discriminator_loss, generator_loss, task_hinge, Architecture, Discriminator, GeneratedVars, GeneratorKind,
    LossWeights, LOG_FLOOR,
};
use qresgan::Result;

const H: f64 = 1e-5;
const PROBES: usize = 200;
const TOL: f64 = 1e-4;
/// Relative departure from halving of the one-sided slope gap that marks a
/// kink at the probe point itself.
const KINK: f64 = 0.25;

type Build<'a> = dyn Fn(&mut Tape, Var) -> Result<Var> + 'a;

fn eval(build: &Build, rows: usize, cols: usize, x: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let v = tape.leaf(rows, cols, x.to_vec(), false).unwrap();
    let out = build(&mut tape, v).unwrap();
    tape.scalar(out)
}

fn analytic(build: &Build, rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut tape = Tape::new();
    let v = tape.leaf(rows, cols, x.to_vec(), true).unwrap();
    let out = build(&mut tape, v).unwrap();
    let grads = tape.backward(out, &mut ParamStore::new()).unwrap();
    grads.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.len()])
}

/// Central difference along coordinate `i`, or `None` when the quotient is
/// not stable under halving the step (a kink within reach) or the one-sided
/// slopes jump at `x`.
fn numeric_coord(build: &Build, rows: usize, cols: usize, x: &[f64], f0: f64, i: usize) -> Option<f64> {
    let mut xp = x.to_vec();
    let mut at = |d: f64| {
        xp[i] = x[i] + d;
        eval(build, rows, cols, &xp)
    };
    let (fp, fm) = (at(H), at(-H));
    let (fp2, fm2) = (at(H / 2.0), at(-H / 2.0));
    let c = (fp - fm) / (2.0 * H);
    let c2 = (fp2 - fm2) / H;
    let roundoff = 1e-10 * f0.abs().max(1.0);
    if (c - c2).abs() > 0.1 * TOL * c.abs().max(1e-6) + roundoff {
        return None;
    }
    // Slope jump: smooth curvature halves with the step, a kink at `x` does not.
    let s1 = (fp - f0) / H - (f0 - fm) / H;
    let s2 = (fp2 - f0) / (H / 2.0) - (f0 - fm2) / (H / 2.0);
    if s1.abs() > 100.0 * roundoff && (s2 - 0.5 * s1).abs() > KINK * s1.abs() {
        return None;
    }
    Some(c)
}

/// Outcome of one term's check.
#[derive(Debug)]
pub struct Report {
    pub name: &'static str,
    pub checked: usize,
    pub skipped: usize,
    pub worst: f64,
    pub failure: Option<String>,
}

impl Report {
    /// Every checked coordinate within `TOL` and at most 10% skipped.
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.skipped * 10 <= self.checked + self.skipped
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {PROBES} probes, {} coordinates checked, {} skipped as kinked, worst relative error {:.2e}{}",
            self.name,
            self.checked,
            self.skipped,
            self.worst,
            self.failure.as_deref().map(|f| format!("; {f}")).unwrap_or_default()
        )
    }
}

/// Checks `PROBES` points drawn by `sample`, every coordinate of each.
/// Coordinates whose difference quotient is unstable are skipped.
fn check(
    name: &'static str,
    rows: usize,
    cols: usize,
    build: &Build,
    sample: &mut dyn FnMut(&mut Rng) -> Vec<f64>,
) -> Report {
    let mut rng = Rng::seed_from_u64(name.bytes().map(u64::from).sum());
    let mut report = Report {
        name,
        checked: 0,
        skipped: 0,
        worst: 0.0,
        failure: None,
    };
    for _ in 0..PROBES {
        let x = sample(&mut rng);
        let f0 = eval(build, rows, cols, &x);
        let ana = analytic(build, rows, cols, &x);
        for (i, a) in ana.iter().enumerate() {
            let Some(n) = numeric_coord(build, rows, cols, &x, f0, i) else {
                report.skipped += 1;
                continue;
            };
            let e = relative_error(*a, n);
            if e > TOL && report.failure.is_none() {
                report.failure = Some(format!("coordinate {i} analytic {a} numeric {n} (rel {e:e}) at {x:?}"));
            }
            report.worst = report.worst.max(e);
            report.checked += 1;
        }
    }
    report
}

fn normals(n: usize, scale: f64) -> impl FnMut(&mut Rng) -> Vec<f64> {
    move |rng| (0..n).map(|_| scale * rng.normal()).collect()
}

/// Hermitian 4×4 matrices (flat 32) with spectra of mixed sign and unit-ish trace.
fn mixed_spectrum(rows: usize) -> impl FnMut(&mut Rng) -> Vec<f64> {
    move |rng| {
        let mut out = Vec::with_capacity(rows * 32);
        for _ in 0..rows {
            let mut re = [0.0; 16];
            let mut im = [0.0; 16];
            for i in 0..4 {
                re[i * 5] = 0.25 + 0.5 * rng.normal();
                for j in 0..i {
                    let (a, b) = (0.3 * rng.normal(), 0.3 * rng.normal());
                    re[i * 4 + j] = a;
                    re[j * 4 + i] = a;
                    im[i * 4 + j] = b;
                    im[j * 4 + i] = -b;
                }
            }
            out.extend(re);
            out.extend(im);
        }
        out
    }
}

pub fn cholesky_assembly() -> Report {
    let w: Vec<f64> = (0..64).map(|k| ((k * 37 % 11) as f64 - 5.0) / 7.0).collect();
    let build = move |t: &mut Tape, x: Var| -> Result<Var> {
        let rho = autodiff::cholesky_assemble(t, x)?;
        let wv = t.leaf(2, 32, w.clone(), false)?;
        dot(t, rho, wv)
    };
    check("cholesky_assemble", 2, 16, &build, &mut normals(32, 1.0))
}

pub fn ldl_assembly() -> Report {
    let w: Vec<f64> = (0..64).map(|k| ((k * 29 % 13) as f64 - 6.0) / 5.0).collect();
    let build = move |t: &mut Tape, x: Var| -> Result<Var> {
        let rho = autodiff::ldl_assemble(t, x)?;
        let wv = t.leaf(2, 32, w.clone(), false)?;
        dot(t, rho, wv)
    };
    check("ldl_assemble", 2, 16, &build, &mut normals(32, 1.0))
}

/// `Σ a ⊙ b` as a scalar node.
fn dot(t: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let (rows, cols) = t.shape(a);
    let bv = t.value(b).to_vec();
    let n = rows * cols;
    let v: f64 = t.value(a).iter().zip(&bv).map(|(x, y)| x * y).sum();
    t.custom(
        &[a],
        1,
        1,
        vec![v],
        Box::new(move |args| vec![Some(bv.iter().take(n).map(|w| w * args.out_grad[0]).collect())]),
    )
}

pub fn trace_term() -> Report {
    let build = |t: &mut Tape, x: Var| -> Result<Var> {
        let rho = autodiff::direct_assemble(t, x)?;
        let v = autodiff::trace_violation_node(t, rho)?;
        t.mean(v)
    };
    check("l_trace", 2, 32, &build, &mut normals(64, 0.5))
}

pub fn psd_term_on_mixed_spectra() -> Report {
    let build = |t: &mut Tape, x: Var| -> Result<Var> {
        let v = autodiff::eig_penalty_node(t, x)?;
        t.mean(v)
    };
    let mut sample = mixed_spectrum(2);
    // Every probe must have at least one negative and one positive eigenvalue.
    let mut mixed = |rng: &mut Rng| loop {
        let x = sample(rng);
        let ok = x.chunks(32).all(|m| {
            let ev = qresgan::qstate::DensityCandidate::from_flat(m).unwrap().eigenvalues().unwrap();
            ev[0] < -1e-3 && ev[3] > 1e-3
        });
        if ok {
            return x;
        }
    };
    check("l_psd", 2, 32, &build, &mut mixed)
}

pub fn herm_term() -> Report {
    let build = |t: &mut Tape, x: Var| -> Result<Var> {
        let v = autodiff::herm_residual(t, x)?;
        t.mean(v)
    };
    check("l_herm", 2, 32, &build, &mut normals(64, 0.5))
}

fn task_build(family: Family, task: Task) -> impl Fn(&mut Tape, Var) -> Result<Var> {
    move |t: &mut Tape, x: Var| {
        let rho = autodiff::direct_assemble(t, x)?;
        let phi = autodiff::pauli_node(t, rho)?;
        let h = task_hinge(t, rho, phi, family, task)?;
        t.mean(h)
    }
}

pub fn task_term_teleportation() -> Report {
    let build = task_build(Family::BellDiagonal, Task::Teleportation);
    // Small entries keep the nuclear norm below 1, where the hinge is active.
    check("l_task teleportation", 2, 32, &build, &mut mixed_spectrum_scaled(2, 0.3))
}

fn mixed_spectrum_scaled(rows: usize, s: f64) -> impl FnMut(&mut Rng) -> Vec<f64> {
    let mut inner = mixed_spectrum(rows);
    move |rng| inner(rng).into_iter().map(|v| v * s).collect()
}

pub fn task_term_bell_broadcast() -> Report {
    let build = task_build(Family::BellDiagonal, Task::LocalBroadcast);
    check("l_task bell broadcast", 2, 32, &build, &mut mixed_spectrum(2))
}

pub fn task_term_werner_broadcast() -> Report {
    let build = task_build(Family::WernerLike, Task::NonlocalBroadcast);
    // Near a diagonal state with a spread spectrum the partial transpose
    // stays positive and nondegenerate, so the hinge is active and smooth.
    let mut sample = |rng: &mut Rng| {
        let mut x = mixed_spectrum_scaled(2, 0.02)(rng);
        for m in x.chunks_mut(32) {
            for k in 0..4 {
                m[5 * k] += 0.1 * (k + 1) as f64;
            }
        }
        x
    };
    check("l_task werner broadcast", 2, 32, &build, &mut sample)
}

pub fn diversity_term() -> Report {
    let build = |t: &mut Tape, x: Var| -> Result<Var> { autodiff::diversity_node(t, x, 0.1) };
    // Rows close enough that some pairs fall inside the margin.
    let mut sample = |rng: &mut Rng| {
        let base: Vec<f64> = (0..16).map(|_| rng.normal()).collect();
        (0..3 * 16).map(|k| base[k % 16] + 0.02 * rng.normal()).collect()
    };
    check("l_div", 3, 16, &build, &mut sample)
}

pub fn adversarial_term() -> Report {
    let disc = Discriminator::new(Architecture::default(), &mut Rng::seed_from_u64(4)).unwrap();
    let build = |t: &mut Tape, x: Var| -> Result<Var> {
        let rho = autodiff::cholesky_assemble(t, x)?;
        let d = disc.forward_on(t, rho, false, &mut Rng::seed_from_u64(0), false)?;
        let l = t.log_clamped(d, LOG_FLOOR)?;
        let m = t.mean(l)?;
        t.affine_scalar(m, -1.0, 0.0)
    };
    check("l_adv", 2, 16, &build, &mut normals(32, 1.0))
}

pub fn discriminator_objective() -> Report {
    let build = |t: &mut Tape, x: Var| -> Result<Var> {
        let s = t.sigmoid(x)?;
        let real = t.slice_rows(s, 0, 2)?;
        let fake = t.slice_rows(s, 2, 4)?;
        discriminator_loss(t, real, fake)
    };
    check("discriminator loss", 4, 1, &build, &mut normals(4, 2.0))
}

pub fn composite_generator_objective() -> Report {
    let disc = Discriminator::new(Architecture::default(), &mut Rng::seed_from_u64(9)).unwrap();
    let weights = LossWeights::for_task(Task::Teleportation);
    let build = |t: &mut Tape, x: Var| -> Result<Var> {
        let rho = autodiff::direct_assemble(t, x)?;
        let d = disc.forward_on(t, rho, false, &mut Rng::seed_from_u64(0), false)?;
        let vars = generator_loss(
            t,
            GeneratedVars { head: x, rho },
            GeneratorKind::Direct,
            d,
            &weights,
            Family::BellDiagonal,
            Task::Teleportation,
        )?;
        Ok(vars.total)
    };
    // Generic (non-Hermitian) heads keep the Hermiticity residual smooth.
    let mut sample = |rng: &mut Rng| {
        let mut x = mixed_spectrum_scaled(2, 0.5)(rng);
        x.iter_mut().for_each(|v| *v += 0.1 * rng.normal());
        x
    };
    check("generator total", 2, 32, &build, &mut sample)
}

/// Every term, in a fixed order.
pub const ALL: [fn() -> Report; 12] = [cholesky_assembly, ldl_assembly, trace_term, psd_term_on_mixed_spectra, herm_term, task_term_teleportation, task_term_bell_broadcast, task_term_werner_broadcast, diversity_term, adversarial_term, discriminator_objective, composite_generator_objective];
