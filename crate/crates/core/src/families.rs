//! Werner-like and Bell-diagonal state families, task criteria, region
//! geometry and rejection-sampled datasets.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use rand::Rng;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64, PSD_TOL};
use crate::qstate::{self, BlochForm, DensityCandidate};

/// Margin by which a criterion statistic must clear its threshold.
/// Anything within this distance of a boundary counts as not useful.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Bell-diagonal local-broadcasting cut: signed sum must exceed 9/4.
pub const LOCAL_BROADCAST_THRESHOLD: f64 = 9.0 / 4.0;
/// Bell-diagonal nonlocal-broadcasting cut: signed sum must exceed 5/3.
pub const NONLOCAL_BROADCAST_THRESHOLD: f64 = 5.0 / 3.0;
/// Teleportation: `N(ρ) > 1`.
pub const TELEPORTATION_THRESHOLD: f64 = 1.0;

/// Vertices of the Bell-diagonal tetrahedron, labelled A..D.
pub const TETRAHEDRON: [(char, [i64; 3]); 4] = [
    ('A', [1, -1, 1]),
    ('B', [-1, 1, 1]),
    ('C', [1, 1, -1]),
    ('D', [-1, -1, -1]),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    WernerLike,
    BellDiagonal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Teleportation,
    LocalBroadcast,
    NonlocalBroadcast,
}

impl Task {
    /// Multiplier applied to the base task-loss weight.
    pub fn m_task(self) -> f64 {
        match self {
            Task::Teleportation => 1.0,
            Task::NonlocalBroadcast => 1.2,
            Task::LocalBroadcast => 1.5,
        }
    }

    /// Signed-sum threshold of the Bell-diagonal region for this task.
    pub fn bell_threshold(self) -> f64 {
        match self {
            Task::Teleportation => TELEPORTATION_THRESHOLD,
            Task::LocalBroadcast => LOCAL_BROADCAST_THRESHOLD,
            Task::NonlocalBroadcast => NONLOCAL_BROADCAST_THRESHOLD,
        }
    }

    /// Same threshold as an exact rational.
    pub fn bell_threshold_exact(self) -> Ratio<i64> {
        match self {
            Task::Teleportation => Ratio::from_integer(1),
            Task::LocalBroadcast => Ratio::new(9, 4),
            Task::NonlocalBroadcast => Ratio::new(5, 3),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::WernerLike => "werner-like",
            Family::BellDiagonal => "bell-diagonal",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "werner-like" | "wernerlike" | "werner" => Ok(Family::WernerLike),
            "bell-diagonal" | "belldiagonal" | "bell" => Ok(Family::BellDiagonal),
            other => Err(Error::Config(format!("unknown family {other:?}"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Teleportation => "teleportation",
            Task::LocalBroadcast => "local-broadcast",
            Task::NonlocalBroadcast => "nonlocal-broadcast",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "teleportation" => Ok(Task::Teleportation),
            "local-broadcast" | "localbroadcast" => Ok(Task::LocalBroadcast),
            "nonlocal-broadcast" | "nonlocalbroadcast" => Ok(Task::NonlocalBroadcast),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

/// `ρ(p, α) = p|ψ><ψ| + (1−p)/4 I` with `|ψ> = α|00> + β|11>`, `β = √(1−α²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WernerLikeParams {
    pub p: f64,
    pub alpha: f64,
}

impl WernerLikeParams {
    pub fn new(p: f64, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "Werner-like parameters need p, alpha in [0, 1], got p={p}, alpha={alpha}"
            )));
        }
        Ok(WernerLikeParams { p, alpha })
    }

    pub fn beta(&self) -> f64 {
        (1.0 - self.alpha * self.alpha).max(0.0).sqrt()
    }

    /// `p(1 + 4αβ)`, the teleportation statistic of the family.
    pub fn teleportation_statistic(&self) -> f64 {
        self.p * (1.0 + 4.0 * self.alpha * self.beta())
    }

    /// Closed-form smallest eigenvalue of the partial transpose.
    pub fn min_eig_pt(&self) -> f64 {
        (1.0 - self.p) / 4.0 - self.p * self.alpha * self.beta()
    }

    pub fn bloch_form(&self) -> BlochForm {
        let (p, a, b) = (self.p, self.alpha, self.beta());
        let x = p * (a * a - b * b);
        BlochForm {
            a: [0.0, 0.0, x],
            b: [0.0, 0.0, x],
            t: [
                [2.0 * p * a * b, 0.0, 0.0],
                [0.0, -2.0 * p * a * b, 0.0],
                [0.0, 0.0, p],
            ],
        }
    }
}

/// `ρ = ¼(I⊗I + Σ cᵢ σᵢ⊗σᵢ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellDiagonalParams {
    pub c: [f64; 3],
}

impl BellDiagonalParams {
    pub fn new(c: [f64; 3]) -> Result<Self> {
        if c.iter().any(|x| !(-1.0..=1.0).contains(x)) {
            return Err(Error::InvalidParameter(format!(
                "Bell-diagonal coefficients must lie in [-1, 1], got {c:?}"
            )));
        }
        let params = BellDiagonalParams { c };
        let lmin = params.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if lmin < -1e-12 {
            return Err(Error::InvalidParameter(format!(
                "c = {c:?} is not a state (eigenvalue {lmin})"
            )));
        }
        Ok(params)
    }

    /// `λ_mn = ¼[1 + (−1)^m c₁ − (−1)^{m+n} c₂ + (−1)^n c₃]` for `(m, n)` in
    /// `(0,0), (0,1), (1,0), (1,1)`.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let [c1, c2, c3] = self.c;
        let sign = |k: u32| if k % 2 == 0 { 1.0 } else { -1.0 };
        let mut out = [0.0; 4];
        for m in 0..2u32 {
            for n in 0..2u32 {
                out[(2 * m + n) as usize] =
                    0.25 * (1.0 + sign(m) * c1 - sign(m + n) * c2 + sign(n) * c3);
            }
        }
        out
    }

    pub fn is_valid(c: [f64; 3]) -> bool {
        Self::new(c).is_ok()
    }

    pub fn l1(&self) -> f64 {
        self.c.iter().map(|x| x.abs()).sum()
    }

    pub fn bloch_form(&self) -> BlochForm {
        let [c1, c2, c3] = self.c;
        BlochForm {
            a: [0.0; 3],
            b: [0.0; 3],
            t: [[c1, 0.0, 0.0], [0.0, c2, 0.0], [0.0, 0.0, c3]],
        }
    }
}

/// Exact family coordinates of a dataset record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilyParams {
    WernerLike(WernerLikeParams),
    BellDiagonal(BellDiagonalParams),
}

impl FamilyParams {
    pub fn family(&self) -> Family {
        match self {
            FamilyParams::WernerLike(_) => Family::WernerLike,
            FamilyParams::BellDiagonal(_) => Family::BellDiagonal,
        }
    }

    pub fn state(&self) -> Result<DensityCandidate> {
        match self {
            FamilyParams::WernerLike(w) => werner_like_state(w),
            FamilyParams::BellDiagonal(b) => bell_diagonal_state(b),
        }
    }

    fn dedup_key(&self) -> Vec<i64> {
        let q = |x: f64| (x * 1e12).round() as i64;
        match self {
            FamilyParams::WernerLike(w) => vec![q(w.p), q(w.alpha)],
            FamilyParams::BellDiagonal(b) => b.c.iter().map(|&x| q(x)).collect(),
        }
    }
}

/// Mixture form `p|ψ><ψ| + (1−p)/4 I`.
pub fn werner_like_state(params: &WernerLikeParams) -> Result<DensityCandidate> {
    let params = WernerLikeParams::new(params.p, params.alpha)?;
    let (a, b) = (params.alpha, params.beta());
    let psi = [C64::new(a, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(b, 0.0)];
    let pure = ComplexMatrix::outer(&psi, &psi);
    let mixed = ComplexMatrix::identity(4).scale((1.0 - params.p) / 4.0);
    DensityCandidate::new(&pure.scale(params.p).add(&mixed)?)
}

pub fn bell_diagonal_state(params: &BellDiagonalParams) -> Result<DensityCandidate> {
    let params = BellDiagonalParams::new(params.c)?;
    DensityCandidate::new(&params.bloch_form().to_matrix())
}

/// Sign vector of each tetrahedron vertex.
pub fn vertex_signs() -> [[f64; 3]; 4] {
    TETRAHEDRON.map(|(_, v)| v.map(|x| x as f64))
}

/// `max_v Σᵢ sᵥᵢ cᵢ` over the four tetrahedron vertices, with the index of
/// the maximizing vertex.
pub fn best_vertex_sum(c: &[f64; 3]) -> (usize, f64) {
    vertex_signs()
        .iter()
        .enumerate()
        .map(|(k, s)| (k, s[0] * c[0] + s[1] * c[1] + s[2] * c[2]))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
}

/// Region test on Bell-diagonal coordinates.
pub fn bell_region_test(c: &[f64; 3], task: Task) -> bool {
    match task {
        Task::Teleportation => {
            c.iter().map(|x| x.abs()).sum::<f64>() > TELEPORTATION_THRESHOLD + BOUNDARY_TOL
        }
        _ => best_vertex_sum(c).1 > task.bell_threshold() + BOUNDARY_TOL,
    }
}

/// Whether exact family parameters are useful for `task`.
pub fn criterion_params(params: &FamilyParams, task: Task) -> Result<bool> {
    match params {
        FamilyParams::WernerLike(w) => Ok(match task {
            Task::Teleportation => w.teleportation_statistic() > 1.0 + BOUNDARY_TOL,
            _ => w.min_eig_pt() < -PSD_TOL,
        }),
        FamilyParams::BellDiagonal(b) => {
            BellDiagonalParams::new(b.c)?;
            Ok(bell_region_test(&b.c, task))
        }
    }
}

/// Whether a (possibly generated) candidate is useful for `task` when scored
/// against `family`.
///
/// Bell-diagonal broadcasting projects onto `c̃ = diag(T)`; everything else
/// uses the state directly.
pub fn criterion(family: Family, task: Task, state: &DensityCandidate) -> Result<bool> {
    match (family, task) {
        (_, Task::Teleportation) => {
            Ok(qstate::teleportation_score(state)?.n > TELEPORTATION_THRESHOLD + BOUNDARY_TOL)
        }
        (Family::WernerLike, _) => qstate::is_ppt_entangled(state),
        (Family::BellDiagonal, _) => {
            let c = qstate::bloch_decompose(state).correlation_diagonal();
            Ok(bell_region_test(&c, task))
        }
    }
}

/// Scalar statistic behind each criterion and the threshold it must clear.
/// Teleportation reports `f_max` against 2/3.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionStatistic {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
}

pub fn criterion_statistic(
    family: Family,
    task: Task,
    state: &DensityCandidate,
) -> Result<CriterionStatistic> {
    Ok(match (family, task) {
        (_, Task::Teleportation) => CriterionStatistic {
            name: "f_max",
            value: qstate::teleportation_score(state)?.f_max,
            threshold: 2.0 / 3.0,
        },
        (Family::WernerLike, _) => CriterionStatistic {
            name: "min_eig_pt",
            value: qstate::min_eig_pt(state)?,
            threshold: -PSD_TOL,
        },
        (Family::BellDiagonal, _) => CriterionStatistic {
            name: "signed_sum",
            value: best_vertex_sum(&qstate::bloch_decompose(state).correlation_diagonal()).1,
            threshold: task.bell_threshold(),
        },
    })
}

/// How far a candidate sits from the family manifold in Bloch coordinates.
///
/// Bell-diagonal: `‖a‖ + ‖b‖ + ‖T − diag(T)‖_F`. Werner-like: transverse
/// local components, `|a_z − b_z|`, off-diagonal `T` and `|t₁₁ + t₂₂|`.
pub fn offfamily_residual(family: Family, state: &DensityCandidate) -> f64 {
    let f = qstate::bloch_decompose(state);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut off = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                off += f.t[i][j] * f.t[i][j];
            }
        }
    }
    let off = off.sqrt();
    match family {
        Family::BellDiagonal => norm(&f.a) + norm(&f.b) + off,
        Family::WernerLike => {
            norm(&f.a[..2]) + norm(&f.b[..2]) + (f.a[2] - f.b[2]).abs() + off + (f.t[0][0] + f.t[1][1]).abs()
        }
    }
}

/// Best-effort Werner-like coordinates `(p, α)` of an arbitrary candidate,
/// read off `t₃₃` and the local `z` components.
pub fn werner_coordinates(state: &DensityCandidate) -> (f64, f64) {
    let f = qstate::bloch_decompose(state);
    let p = f.t[2][2];
    let x = 0.5 * (f.a[2] + f.b[2]);
    let ratio = if p.abs() > 1e-12 { x / p } else { 0.0 };
    let alpha = ((1.0 + ratio.clamp(-1.0, 1.0)) / 2.0).sqrt();
    (p, alpha)
}

/// One dataset entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub params: FamilyParams,
    pub state: DensityCandidate,
}

#[derive(Clone, Debug)]
pub struct SampledDataset {
    pub samples: Vec<Sample>,
    pub proposals: u64,
}

impl SampledDataset {
    pub fn acceptance_rate(&self) -> f64 {
        self.samples.len() as f64 / self.proposals as f64
    }
}

const MAX_LOW_ACCEPTANCE_PROPOSALS: u64 = 10_000_000;
const MIN_ACCEPTANCE_RATE: f64 = 1e-4;

/// Rejection-samples `n` distinct useful states.
///
/// Werner-like: `p ~ U[0,1)`, `α = |cos θ|`, `θ ~ U[0, 2π)`. Bell-diagonal:
/// `cᵢ ~ U[−1, 1)` kept only when the result is a state. Deterministic in
/// `seed`.
pub fn sample_dataset(family: Family, task: Task, n: usize, seed: u64) -> Result<SampledDataset> {
    if n == 0 {
        return Err(Error::InvalidParameter("n ≥ 1 required".into()));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut samples = Vec::with_capacity(n);
    let mut proposals: u64 = 0;
    while samples.len() < n {
        proposals += 1;
        if proposals >= MAX_LOW_ACCEPTANCE_PROPOSALS {
            let rate = samples.len() as f64 / proposals as f64;
            if rate < MIN_ACCEPTANCE_RATE {
                return Err(Error::LowAcceptance { proposals, rate });
            }
        }
        let params = match family {
            Family::WernerLike => {
                let p: f64 = rng.gen_range(0.0..1.0);
                let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                FamilyParams::WernerLike(WernerLikeParams {
                    p,
                    alpha: theta.cos().abs().min(1.0),
                })
            }
            Family::BellDiagonal => {
                let c = [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ];
                if !BellDiagonalParams::is_valid(c) {
                    continue;
                }
                FamilyParams::BellDiagonal(BellDiagonalParams { c })
            }
        };
        if !criterion_params(&params, task)? {
            continue;
        }
        if !seen.insert(params.dedup_key()) {
            continue;
        }
        let state = params.state()?;
        samples.push(Sample { params, state });
    }
    Ok(SampledDataset { samples, proposals })
}

/// Exact rational point in Bell-diagonal coordinate space.
pub type ExactPoint = [Ratio<i64>; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct SubRegion {
    pub vertex: char,
    /// Tetrahedron vertex first, then the three points where the cut plane
    /// meets the edges leaving it.
    pub corners: [ExactPoint; 4],
}

#[derive(Clone, Debug, PartialEq)]
pub enum RegionGeometry {
    BellDiagonal {
        task: Task,
        tetrahedron: Vec<(char, ExactPoint)>,
        octahedron_vertices: Vec<ExactPoint>,
        octahedron_edges: Vec<(usize, usize)>,
        subregions: Vec<SubRegion>,
    },
    WernerLike {
        task: Task,
        /// `(α, p)` samples of `p = 1 / (1 + 4α√(1−α²))`.
        boundary: Vec<(f64, f64)>,
    },
}

/// `p` on the Werner-like boundary at `α`.
pub fn werner_boundary(alpha: f64) -> f64 {
    1.0 / (1.0 + 4.0 * (alpha * alpha * (1.0 - alpha * alpha)).max(0.0).sqrt())
}

fn int_point(v: [i64; 3]) -> ExactPoint {
    v.map(Ratio::from_integer)
}

/// Corners of the sub-tetrahedron cut off at vertex `v` by the plane
/// `Σ sᵢcᵢ = θ`. Each cut point keeps one coordinate at the vertex value and
/// shrinks the other two to magnitude `(θ − 1)/2`.
fn subregion_at(label: char, v: [i64; 3], threshold: Ratio<i64>) -> SubRegion {
    let k = (threshold - Ratio::from_integer(1)) / Ratio::from_integer(2);
    let vertex = int_point(v);
    let cut = |keep: usize| -> ExactPoint {
        std::array::from_fn(|i| {
            if i == keep {
                vertex[i]
            } else {
                k * Ratio::from_integer(v[i].signum())
            }
        })
    };
    SubRegion {
        vertex: label,
        corners: [vertex, cut(2), cut(0), cut(1)],
    }
}

pub fn region_export(family: Family, task: Task, resolution: usize) -> Result<RegionGeometry> {
    if resolution < 2 {
        return Err(Error::InvalidParameter("resolution ≥ 2 required".into()));
    }
    Ok(match family {
        Family::BellDiagonal => {
            let octahedron_vertices = vec![
                int_point([1, 0, 0]),
                int_point([-1, 0, 0]),
                int_point([0, 1, 0]),
                int_point([0, -1, 0]),
                int_point([0, 0, 1]),
                int_point([0, 0, -1]),
            ];
            // Every pair of vertices not antipodal is an edge.
            let mut octahedron_edges = Vec::new();
            for i in 0..6 {
                for j in (i + 1)..6 {
                    if i / 2 != j / 2 {
                        octahedron_edges.push((i, j));
                    }
                }
            }
            let threshold = task.bell_threshold_exact();
            RegionGeometry::BellDiagonal {
                task,
                tetrahedron: TETRAHEDRON.iter().map(|&(l, v)| (l, int_point(v))).collect(),
                octahedron_vertices,
                octahedron_edges,
                subregions: TETRAHEDRON
                    .iter()
                    .map(|&(l, v)| subregion_at(l, v, threshold))
                    .collect(),
            }
        }
        Family::WernerLike => RegionGeometry::WernerLike {
            task,
            boundary: (0..resolution)
                .map(|i| {
                    let alpha = i as f64 / (resolution - 1) as f64;
                    (alpha, werner_boundary(alpha))
                })
                .collect(),
        },
    })
}
