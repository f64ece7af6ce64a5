use serde::{Deserialize, Serialize};

use super::{GeneratedVars, GeneratorKind};
use crate::autodiff::{self, Tape, Var};
use crate::error::{Error, Result};
use crate::families::{Family, Task};

/// Floor applied inside every logarithm of the adversarial terms.
pub const LOG_FLOOR: f64 = 1e-12;

/// Broadcasting threshold on `−min_eig_pt` for Werner-like targets.
pub const WERNER_BROADCAST_THETA: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_psd: f64,
    pub lambda_trace: f64,
    pub lambda_herm: f64,
    pub lambda_task_base: f64,
    pub lambda_div: f64,
    pub m_task: f64,
    /// Margin of the pairwise diversity hinge in embedding space.
    pub div_margin: f64,
}

impl LossWeights {
    pub fn for_task(task: Task) -> Self {
        LossWeights {
            lambda_psd: 10.0,
            lambda_trace: 10.0,
            lambda_herm: 5.0,
            lambda_task_base: 5.0,
            lambda_div: 0.5,
            m_task: task.m_task(),
            div_margin: 0.1,
        }
    }

    pub fn effective_task_weight(&self) -> f64 {
        self.lambda_task_base * self.m_task
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_psd,
            self.lambda_trace,
            self.lambda_herm,
            self.lambda_task_base,
            self.lambda_div,
            self.m_task,
            self.div_margin,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Individually computed (unweighted) generator loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_adv: f64,
    pub l_trace: f64,
    pub l_psd: f64,
    pub l_herm: f64,
    pub l_task: f64,
    pub l_div: f64,
}

impl LossBreakdown {
    /// Weighted sum, in the same order the tape uses.
    pub fn total(&self, w: &LossWeights) -> f64 {
        self.l_adv
            + w.lambda_trace * self.l_trace
            + w.lambda_psd * self.l_psd
            + w.lambda_herm * self.l_herm
            + w.effective_task_weight() * self.l_task
            + w.lambda_div * self.l_div
    }
}

/// Scalar nodes of the generator objective.
#[derive(Clone, Copy, Debug)]
pub struct GenLossVars {
    pub total: Var,
    pub adv: Var,
    pub trace: Var,
    pub psd: Var,
    pub herm: Var,
    pub task: Var,
    pub div: Var,
}

impl GenLossVars {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            l_adv: tape.scalar(self.adv),
            l_trace: tape.scalar(self.trace),
            l_psd: tape.scalar(self.psd),
            l_herm: tape.scalar(self.herm),
            l_task: tape.scalar(self.task),
            l_div: tape.scalar(self.div),
        }
    }
}

/// Per-state hinge on the criterion statistic, `(B, 1)`.
pub fn task_hinge(tape: &mut Tape, rho: Var, phi: Var, family: Family, task: Task) -> Result<Var> {
    let pre = match (family, task) {
        (_, Task::Teleportation) => {
            // 2/3 − ½(1 + n/3)
            let n = autodiff::nuclear_norm_node(tape, phi)?;
            tape.affine_scalar(n, -1.0 / 6.0, 1.0 / 6.0)?
        }
        (Family::BellDiagonal, _) => {
            let theta = task.bell_threshold();
            let s = autodiff::best_vertex_node(tape, phi)?;
            tape.affine_scalar(s, -1.0 / theta, 1.0)?
        }
        (Family::WernerLike, _) => {
            // (θ − (−λ_min)) / θ
            let m = autodiff::min_eig_pt_node(tape, rho)?;
            tape.affine_scalar(m, 1.0 / WERNER_BROADCAST_THETA, 1.0)?
        }
    };
    tape.relu(pre)
}

/// Records the composite generator objective for a generated batch and its
/// discriminator scores.
pub fn generator_loss(
    tape: &mut Tape,
    generated: GeneratedVars,
    kind: GeneratorKind,
    d_scores: Var,
    weights: &LossWeights,
    family: Family,
    task: Task,
) -> Result<GenLossVars> {
    let rho = generated.rho;
    let log_d = tape.log_clamped(d_scores, LOG_FLOOR)?;
    let mean_log_d = tape.mean(log_d)?;
    let adv = tape.affine_scalar(mean_log_d, -1.0, 0.0)?;

    let tv = autodiff::trace_violation_node(tape, rho)?;
    let trace = tape.mean(tv)?;
    let pv = autodiff::eig_penalty_node(tape, rho)?;
    let psd = tape.mean(pv)?;
    let herm = if kind == GeneratorKind::Direct {
        let h = autodiff::herm_residual(tape, generated.head)?;
        tape.mean(h)?
    } else {
        tape.leaf(1, 1, vec![0.0], false)?
    };

    let phi = autodiff::pauli_node(tape, rho)?;
    let hinge = task_hinge(tape, rho, phi, family, task)?;
    let task_term = tape.mean(hinge)?;
    let div = autodiff::diversity_node(tape, phi, weights.div_margin)?;

    let total = tape.weighted_sum(&[
        (1.0, adv),
        (weights.lambda_trace, trace),
        (weights.lambda_psd, psd),
        (weights.lambda_herm, herm),
        (weights.effective_task_weight(), task_term),
        (weights.lambda_div, div),
    ])?;
    Ok(GenLossVars {
        total,
        adv,
        trace,
        psd,
        herm,
        task: task_term,
        div,
    })
}

/// `−mean log D(real) − mean log(1 − D(fake))` with clamped logs.
pub fn discriminator_loss(tape: &mut Tape, real_scores: Var, fake_scores: Var) -> Result<Var> {
    let lr = tape.log_clamped(real_scores, LOG_FLOOR)?;
    let mr = tape.mean(lr)?;
    let one_minus = tape.affine_scalar(fake_scores, -1.0, 1.0)?;
    let lf = tape.log_clamped(one_minus, LOG_FLOOR)?;
    let mf = tape.mean(lf)?;
    tape.weighted_sum(&[(-1.0, mr), (-1.0, mf)])
}

/// Plain-value form of [`discriminator_loss`].
pub fn discriminator_loss_value(real_scores: &[f64], fake_scores: &[f64]) -> Result<f64> {
    if real_scores.is_empty() || fake_scores.is_empty() {
        return Err(Error::InsufficientData("discriminator loss needs nonempty batches".into()));
    }
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&x| f(x).max(LOG_FLOOR).ln()).sum::<f64>() / v.len() as f64;
    Ok(-mean(real_scores, &|x| x) - mean(fake_scores, &|x| 1.0 - x))
}
