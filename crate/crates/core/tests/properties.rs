use proptest::prelude::*;
use qresgan::autodiff::{Rng, Tape};
use qresgan::bench::{fit_slope, BenchSample};
use qresgan::cli::canonical_json;
use qresgan::families::{
    criterion, criterion_params, sample_dataset, werner_like_state, BellDiagonalParams, Family, FamilyParams, Task,
    WernerLikeParams,
};
use qresgan::gan::{
    evaluate, fid, generator_loss, latent_batch, Architecture, Discriminator, Generator, GeneratorKind, LossWeights,
};
use qresgan::qstate::{self, DensityCandidate, FidelityConvention};

fn embeddings(states: &[DensityCandidate]) -> Vec<[f64; 16]> {
    states.iter().map(|s| qstate::pauli_embedding(s).phi).collect()
}

fn dataset_states(family: Family, task: Task, n: usize, seed: u64) -> Vec<DensityCandidate> {
    sample_dataset(family, task, n, seed)
        .unwrap()
        .samples
        .into_iter()
        .map(|s| s.state)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn werner_teleportation_iff_ppt_entangled(p in 0.0f64..=1.0, alpha in 0.0f64..=1.0) {
        let w = WernerLikeParams::new(p, alpha).unwrap();
        let beta = w.beta();
        prop_assume!((p * (1.0 + 4.0 * alpha * beta) - 1.0).abs() > 1e-6);
        let rho = werner_like_state(&w).unwrap();
        let useful = criterion(Family::WernerLike, Task::Teleportation, &rho).unwrap();
        prop_assert_eq!(useful, qstate::min_eig_pt(&rho).unwrap() < -1e-9);
        prop_assert_eq!(useful, criterion_params(&FamilyParams::WernerLike(w), Task::Teleportation).unwrap());
    }

    #[test]
    fn bell_regions_are_nested(c in prop::array::uniform3(-1.0f64..1.0)) {
        prop_assume!(BellDiagonalParams::is_valid(c));
        let p = FamilyParams::BellDiagonal(BellDiagonalParams::new(c).unwrap());
        let local = criterion_params(&p, Task::LocalBroadcast).unwrap();
        let nonlocal = criterion_params(&p, Task::NonlocalBroadcast).unwrap();
        let tele = criterion_params(&p, Task::Teleportation).unwrap();
        prop_assert!(!local || nonlocal);
        prop_assert!(!nonlocal || tele);
    }

    #[test]
    fn decomposition_generators_are_physical(seed in any::<u64>(), kind in prop::sample::select(vec![GeneratorKind::Cholesky, GeneratorKind::Ldl])) {
        let mut rng = Rng::seed_from_u64(seed);
        let g = Generator::new(kind, Architecture::default(), &mut rng).unwrap();
        for s in g.sample(64, &mut rng).unwrap() {
            prop_assert!(s.eigenvalues().unwrap()[0] >= -1e-10);
            prop_assert!((s.trace() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn generator_loss_is_sum_of_terms(seed in any::<u64>(), kind in prop::sample::select(GeneratorKind::ALL.to_vec()), task in prop::sample::select(vec![Task::Teleportation, Task::NonlocalBroadcast, Task::LocalBroadcast])) {
        let mut rng = Rng::seed_from_u64(seed);
        let g = Generator::new(kind, Architecture::default(), &mut rng).unwrap();
        let d = Discriminator::new(Architecture::default(), &mut rng).unwrap();
        let weights = LossWeights::for_task(task);
        let mut tape = Tape::new();
        let z = latent_batch(16, &mut rng);
        let zv = tape.constant(&z);
        let out = g.forward_on(&mut tape, zv, false).unwrap();
        let scores = d.forward_on(&mut tape, out.rho, false, &mut rng, false).unwrap();
        let vars = generator_loss(&mut tape, out, kind, scores, &weights, Family::BellDiagonal, task).unwrap();
        let total = tape.scalar(vars.total);
        prop_assert!((total - vars.breakdown(&tape).total(&weights)).abs() <= 1e-12 * total.abs().max(1.0));
    }

    #[test]
    fn accuracy_ignores_order(seed in any::<u64>(), rot in 0usize..40) {
        let mut rng = Rng::seed_from_u64(seed);
        let g = Generator::new(GeneratorKind::Cholesky, Architecture::default(), &mut rng).unwrap();
        let mut gen = g.sample(40, &mut rng).unwrap();
        let train = dataset_states(Family::BellDiagonal, Task::Teleportation, 20, seed);
        let a = evaluate(&gen, &train, Family::BellDiagonal, Task::Teleportation, FidelityConvention::Squared).unwrap();
        gen.rotate_left(rot);
        gen.reverse();
        let b = evaluate(&gen, &train, Family::BellDiagonal, Task::Teleportation, FidelityConvention::Squared).unwrap();
        prop_assert_eq!(a.accuracy, b.accuracy);
    }

    #[test]
    fn fid_is_a_symmetric_nonnegative_distance(seed in 0u64..1000) {
        let a = embeddings(&dataset_states(Family::WernerLike, Task::Teleportation, 40, seed));
        let b = embeddings(&dataset_states(Family::BellDiagonal, Task::Teleportation, 40, seed));
        prop_assert!(fid(&a, &a).unwrap().abs() <= 1e-8);
        let ab = fid(&a, &b).unwrap();
        prop_assert!((ab - fid(&b, &a).unwrap()).abs() <= 1e-8);
        prop_assert!(ab >= -1e-8);
    }

    #[test]
    fn canonical_json_roundtrips_floats(xs in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 1..20)) {
        let text = canonical_json(&xs).unwrap();
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &xs);
        prop_assert_eq!(canonical_json(&back).unwrap(), text);
    }

    #[test]
    fn slope_of_exact_power_law(k in 0.5f64..4.0, scale in 1e-9f64..1e-3) {
        let samples: Vec<BenchSample> = [16usize, 32, 64, 128, 256]
            .iter()
            .flat_map(|&d| (0..3).map(move |r| BenchSample {
                op_name: "synthetic".into(),
                d,
                batch: 1,
                repeat_index: r,
                threads: 1,
                seconds_per_state: scale * (d as f64).powf(k),
            }))
            .collect();
        let (slope, ci) = fit_slope(&samples, 32).unwrap();
        prop_assert!((slope - k).abs() < 1e-9);
        prop_assert!(ci.0 <= slope && slope <= ci.1);
    }
}

#[test]
fn task_weights_scale_with_multiplier() {
    let w = |t| LossWeights::for_task(t).effective_task_weight();
    assert_eq!(w(Task::Teleportation), 5.0);
    assert_eq!(w(Task::NonlocalBroadcast), 6.0);
    assert_eq!(w(Task::LocalBroadcast), 7.5);
}

#[test]
fn datasets_are_deterministic_and_useful() {
    for (family, task) in [
        (Family::BellDiagonal, Task::Teleportation),
        (Family::BellDiagonal, Task::LocalBroadcast),
        (Family::WernerLike, Task::Teleportation),
        (Family::WernerLike, Task::NonlocalBroadcast),
    ] {
        let a = sample_dataset(family, task, 200, 7).unwrap();
        let b = sample_dataset(family, task, 200, 7).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.samples.len(), 200);
        for s in &a.samples {
            assert!(criterion_params(&s.params, task).unwrap());
            assert!(criterion(family, task, &s.state).unwrap());
        }
    }
}

#[test]
fn bell_teleportation_dataset_clears_l1_threshold() {
    let ds = sample_dataset(Family::BellDiagonal, Task::Teleportation, 2000, 7).unwrap();
    for s in &ds.samples {
        let FamilyParams::BellDiagonal(b) = s.params else { panic!("wrong family") };
        assert!(b.c.iter().map(|x| x.abs()).sum::<f64>() > 1.0);
        assert!(b.eigenvalues().iter().all(|&l| l >= 0.0));
    }
}

#[test]
fn werner_teleportation_dataset_clears_threshold() {
    let ds = sample_dataset(Family::WernerLike, Task::Teleportation, 10, 1).unwrap();
    for s in &ds.samples {
        let FamilyParams::WernerLike(w) = s.params else { panic!("wrong family") };
        assert!(w.p * (1.0 + 4.0 * w.alpha * w.beta()) > 1.0);
    }
}
