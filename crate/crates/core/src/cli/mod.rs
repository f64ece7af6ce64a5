//! Command-line surface: `gen-data`, `train`, `sample`, `eval`, `regions`
//! and `bench`.

mod config;
mod records;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

pub use config::{bench_config_text, parse_bench_config, parse_flat, RunConfig, BENCH_KEYS, TRAIN_SIZES};
pub use records::{
    canonical_json, config_hash, load_states, records_to_jsonl, sha256_hex, Diagnostics, LoadedStates, Provenance,
    StateRecord, DATASET_FORMAT, PARAMS_MATCH_TOL, TOOL_VERSION,
};

use crate::autodiff::Rng;
use crate::bench::{self, BenchConfig, BenchSample};
use crate::error::{Error, Result};
use crate::families::{self, criterion, region_export, werner_coordinates, Family, RegionGeometry, Task};
use crate::gan::{self, evaluate, self_fidelity_baseline, Checkpoint};
use crate::qstate::{bloch_decompose, FidelityConvention};

pub const SUMMARY_FORMAT: &str = "qresgan-dataset-summary/1";
pub const RUN_FORMAT: &str = "qresgan-run/1";
pub const EVAL_FORMAT: &str = "qresgan-eval/1";
pub const REGIONS_FORMAT: &str = "qresgan-regions/1";
pub const BENCH_FORMAT: &str = "qresgan-bench/1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
        Error::Data(_)
        | Error::Io { .. }
        | Error::Json(_)
        | Error::InsufficientData(_)
        | Error::LowAcceptance { .. } => EXIT_DATA,
        Error::NumericAbort(_)
        | Error::NonFinite(_)
        | Error::NoConvergence { .. }
        | Error::NotPsd { .. }
        | Error::NotNormalized { .. }
        | Error::DimensionMismatch(_)
        | Error::Backward(_) => EXIT_NUMERIC,
    }
}

#[derive(Debug, Parser)]
#[command(name = "qresgan", version, about = "Physics-informed generation of two-qubit resource states")]
pub struct Cli {
    /// Random seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Flat `key = value` configuration file (`train`, `bench`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rejection-sample a dataset of useful states.
    GenData {
        #[arg(long)]
        family: Family,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        n: usize,
    },
    /// Train a generator; needs `--config`.
    Train,
    /// Draw states from a checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
    /// Compare generated states against a dataset.
    Eval {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "squared")]
        fidelity: FidelityConvention,
    },
    /// Export region geometry, optionally with a classified scatter.
    Regions {
        #[arg(long)]
        family: Family,
        #[arg(long)]
        task: Task,
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        #[arg(long)]
        scatter: Option<PathBuf>,
    },
    /// Scaling micro-benchmarks.
    Bench,
}

/// Parses `args` and runs the command, returning the exit code. Diagnostics
/// go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be ≥ 1".into()));
        }
        // Only the first call in a process configures the pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::GenData { family, task, n } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("dataset.jsonl"));
            gen_data(*family, *task, *n, seed, &out)
        }
        Command::Train => {
            let path = cli
                .config
                .as_deref()
                .ok_or_else(|| Error::Config("train needs --config".into()))?;
            let mut cfg = RunConfig::parse(&config::read_text(path)?)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(o) = &cli.out {
                cfg.out_dir = o.clone();
            }
            train(&cfg).map(|_| ())
        }
        Command::Sample { checkpoint, n } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("samples.jsonl"));
            sample(checkpoint, *n, seed, &out)
        }
        Command::Eval {
            generated,
            dataset,
            fidelity,
        } => {
            let report = eval(generated, dataset, *fidelity, seed)?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            if let Some(o) = &cli.out {
                records::write_file(o, &text)?;
            }
            print!("{text}");
            Ok(())
        }
        Command::Regions {
            family,
            task,
            resolution,
            scatter,
        } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("regions.json"));
            let doc = regions(*family, *task, *resolution, scatter.as_deref(), seed)?;
            records::write_file(&out, &(serde_json::to_string_pretty(&doc)? + "\n"))
        }
        Command::Bench => {
            let mut cfg = match &cli.config {
                Some(p) => parse_bench_config(&config::read_text(p)?)?,
                None => BenchConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(t) = cli.threads {
                cfg.thread_cap = t;
            }
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("bench"));
            run_bench(&cfg, &out).map(|_| ())
        }
    }
}

/// Path of the summary written next to a dataset.
pub fn summary_path(dataset: &Path) -> PathBuf {
    let mut s = dataset.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}

/// Human-readable form of the usefulness test.
pub fn criterion_label(family: Family, task: Task) -> String {
    match (family, task) {
        (_, Task::Teleportation) => "teleportation: N(rho) = sum of singular values of T > 1".into(),
        (Family::WernerLike, t) => format!("{t}: partial transpose has a negative eigenvalue"),
        (Family::BellDiagonal, t) => format!("{t}: max over vertices of signed sum of c > {}", t.bell_threshold()),
    }
}

/// `gen-data`: dataset JSON-lines plus a summary sidecar.
pub fn gen_data(family: Family, task: Task, n: usize, seed: u64, out: &Path) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("n ≥ 1 required".into()));
    }
    let hash = config_hash(&json!({"command": "gen-data", "family": family, "task": task, "n": n, "seed": seed}))?;
    let ds = families::sample_dataset(family, task, n, seed)?;
    let meta = Provenance::new(DATASET_FORMAT, seed, hash.clone());
    let recs: Vec<StateRecord> = ds
        .samples
        .iter()
        .map(|s| StateRecord::new(family, task, Some(s.params), &s.state, None, meta.clone()))
        .collect();
    records::write_file(out, &records_to_jsonl(&recs)?)?;
    let summary = json!({
        "n": n,
        "acceptance_rate": ds.acceptance_rate(),
        "proposals": ds.proposals,
        "seed": seed,
        "family": family,
        "task": task,
        "criterion": criterion_label(family, task),
        "meta": Provenance::new(SUMMARY_FORMAT, seed, hash),
    });
    records::write_file(&summary_path(out), &(canonical_json(&summary)? + "\n"))
}

/// `train`: resolved config, metric log, checkpoints and a manifest in
/// `out_dir`. Returns the final log.
pub fn train(cfg: &RunConfig) -> Result<Vec<gan::Metrics>> {
    cfg.validate()?;
    let data = load_states(&cfg.dataset, true)?;
    if !data.records.is_empty() {
        let (family, task) = data.family_task()?;
        if (family, task) != (cfg.family, cfg.task) {
            return Err(Error::Data(format!(
                "{}: holds {family}/{task} states, config asks for {}/{}",
                cfg.dataset.display(),
                cfg.family,
                cfg.task
            )));
        }
    }
    if data.states.len() < cfg.train_size {
        return Err(Error::InsufficientData(format!(
            "{}: {} states, train_size is {}",
            cfg.dataset.display(),
            data.states.len(),
            cfg.train_size
        )));
    }
    let resolved = cfg.to_text();
    let hash = sha256_hex(resolved.as_bytes());
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    records::write_file(&cfg.out_dir.join("config.resolved"), &resolved)?;
    let outcome = gan::train(
        &cfg.train_config(),
        &cfg.weights(),
        &data.states[..cfg.train_size],
        Some(&cfg.out_dir),
    )?;
    let mut artifacts = Vec::new();
    let mut names = vec!["config.resolved".to_string(), "metrics.csv".to_string()];
    names.extend(outcome.log.iter().map(|m| gan::checkpoint_file_name(m.step)));
    for name in names {
        let path = cfg.out_dir.join(&name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        artifacts.push(json!({"file": name, "sha256": sha256_hex(&bytes)}));
    }
    let manifest = json!({
        "meta": Provenance::new(RUN_FORMAT, cfg.seed, hash),
        "dataset_sha256": sha256_hex(&fs::read(&cfg.dataset).map_err(|e| Error::io(&cfg.dataset, e))?),
        "artifacts": artifacts,
    });
    records::write_file(
        &cfg.out_dir.join("manifest.json"),
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )?;
    Ok(outcome.log)
}

/// `sample`: `n` generated states with per-state diagnostics.
pub fn sample(checkpoint: &Path, n: usize, seed: u64, out: &Path) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("n ≥ 1 required".into()));
    }
    let bytes = fs::read(checkpoint).map_err(|e| Error::io(checkpoint, e))?;
    let ckpt = Checkpoint::read(checkpoint)?;
    let (gen, _) = ckpt.restore()?;
    let hash = config_hash(&json!({"command": "sample", "checkpoint_sha256": sha256_hex(&bytes), "n": n, "seed": seed}))?;
    let meta = Provenance::new(DATASET_FORMAT, seed, hash);
    let states = gen.sample(n, &mut Rng::seed_from_u64(seed))?;
    let recs: Vec<StateRecord> = states
        .iter()
        .map(|s| {
            let diag = Diagnostics::of(ckpt.family, ckpt.task, s)?;
            Ok(StateRecord::new(ckpt.family, ckpt.task, None, s, Some(diag), meta.clone()))
        })
        .collect::<Result<_>>()?;
    records::write_file(out, &records_to_jsonl(&recs)?)
}

/// `eval`: metrics of a generated file against a dataset.
pub fn eval(generated: &Path, dataset: &Path, fidelity: FidelityConvention, seed: u64) -> Result<serde_json::Value> {
    let gen = load_states(generated, false)?;
    if gen.states.is_empty() {
        return Err(Error::Data(format!("{}: no generated states", generated.display())));
    }
    let data = load_states(dataset, true)?;
    if data.states.is_empty() {
        return Err(Error::Data(format!("{}: empty dataset", dataset.display())));
    }
    let ft = data.family_task()?;
    if gen.family_task()? != ft {
        return Err(Error::Data(format!(
            "{} and {} describe different families or tasks",
            generated.display(),
            dataset.display()
        )));
    }
    let (family, task) = ft;
    let read = |p: &Path| fs::read(p).map_err(|e| Error::io(p, e));
    let hash = config_hash(&json!({
        "command": "eval",
        "generated_sha256": sha256_hex(&read(generated)?),
        "dataset_sha256": sha256_hex(&read(dataset)?),
        "fidelity": fidelity,
    }))?;
    let m = evaluate(&gen.states, &data.states, family, task, fidelity)?;
    let baseline = self_fidelity_baseline(&data.states, fidelity)?;
    Ok(json!({
        "accuracy": m.accuracy,
        "cross_fidelity": m.cross_fidelity,
        "self_fidelity_baseline": baseline,
        "fid": m.fid,
        "offfamily_residual": m.offfamily_residual,
        "n_generated": gen.states.len(),
        "n_dataset": data.states.len(),
        "meta": Provenance::new(EVAL_FORMAT, seed, hash),
    }))
}

fn exact(p: &families::ExactPoint) -> serde_json::Value {
    json!(p.iter().map(|r| r.to_string()).collect::<Vec<_>>())
}

/// `regions`: geometry document, coordinates of exact points as rational
/// strings.
pub fn regions(
    family: Family,
    task: Task,
    resolution: usize,
    scatter: Option<&Path>,
    seed: u64,
) -> Result<serde_json::Value> {
    let mut hash_input = json!({"command": "regions", "family": family, "task": task, "resolution": resolution});
    let mut doc = match region_export(family, task, resolution)? {
        RegionGeometry::BellDiagonal {
            task,
            tetrahedron,
            octahedron_vertices,
            octahedron_edges,
            subregions,
        } => json!({
            "family": family,
            "task": task,
            "tetrahedron": tetrahedron.iter().map(|(l, p)| json!({"label": l.to_string(), "point": exact(p)})).collect::<Vec<_>>(),
            "octahedron": {
                "vertices": octahedron_vertices.iter().map(exact).collect::<Vec<_>>(),
                "edges": octahedron_edges,
            },
            "subregions": subregions.iter().map(|s| json!({
                "vertex": s.vertex.to_string(),
                "corners": s.corners.iter().map(exact).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        }),
        RegionGeometry::WernerLike { task, boundary } => json!({
            "family": family,
            "task": task,
            "boundary": boundary.iter().map(|&(alpha, p)| json!({"alpha": alpha, "p": p})).collect::<Vec<_>>(),
        }),
    };
    if let Some(path) = scatter {
        let set = load_states(path, false)?;
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        hash_input["scatter_sha256"] = json!(sha256_hex(&bytes));
        let points = set
            .states
            .iter()
            .map(|s| {
                let useful = criterion(family, task, s)?;
                Ok(match family {
                    Family::BellDiagonal => json!({"c": bloch_decompose(s).correlation_diagonal(), "useful": useful}),
                    Family::WernerLike => {
                        let (p, alpha) = werner_coordinates(s);
                        json!({"p": p, "alpha": alpha, "useful": useful})
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        doc["scatter"] = json!(points);
    }
    doc["meta"] = json!(Provenance::new(REGIONS_FORMAT, seed, config_hash(&hash_input)?));
    Ok(doc)
}

/// Outputs of a bench run.
pub struct BenchRun {
    pub samples: Vec<BenchSample>,
    pub slopes: serde_json::Value,
}

/// Smallest `d` used for slope fits when at least three sizes reach it.
pub const SLOPE_D_MIN: usize = 32;

/// `bench`: raw and summary CSVs plus a slope report with one entry per op.
pub fn run_bench(cfg: &BenchConfig, out: &Path) -> Result<BenchRun> {
    cfg.validate()?;
    let mut samples = bench::bench_forward(cfg)?;
    samples.extend(bench::bench_assembly(cfg)?);
    samples.extend(bench::bench_checks(cfg)?);

    let mut raw = String::from(bench::SAMPLES_HEADER);
    raw.push('\n');
    for s in &samples {
        raw.push_str(&s.csv_row());
        raw.push('\n');
    }
    let mut summary = String::from(bench::SUMMARY_HEADER);
    summary.push('\n');
    for (op, d, med, mean, lo, hi) in bench::summarize(&samples)? {
        let _ = writeln!(summary, "{op},{d},{med},{mean},{lo},{hi}");
    }

    let mut ops: Vec<String> = Vec::new();
    for s in &samples {
        if !ops.contains(&s.op_name) {
            ops.push(s.op_name.clone());
        }
    }
    let mut entries = Vec::new();
    for op in &ops {
        let mut ds: Vec<usize> = samples.iter().filter(|s| &s.op_name == op).map(|s| s.d).collect();
        ds.sort_unstable();
        ds.dedup();
        let d_min = if ds.iter().filter(|&&d| d >= SLOPE_D_MIN).count() >= 3 {
            SLOPE_D_MIN
        } else {
            ds[0]
        };
        entries.push(match bench::slope_report(&samples, op, d_min) {
            Ok(r) => json!({"op": r.op, "d_min": r.d_min, "slope": r.slope, "ci95": [r.ci95.0, r.ci95.1]}),
            Err(Error::InsufficientData(why)) => {
                json!({"op": op, "d_min": d_min, "slope": null, "ci95": null, "note": why})
            }
            Err(e) => return Err(e),
        });
    }
    let resolved = bench_config_text(cfg);
    let slopes = json!({
        "meta": Provenance::new(BENCH_FORMAT, cfg.seed, sha256_hex(resolved.as_bytes())),
        "threads": cfg.threads(),
        "slopes": entries,
    });
    records::write_file(&out.join("bench_samples.csv"), &raw)?;
    records::write_file(&out.join("bench_summary.csv"), &summary)?;
    records::write_file(&out.join("bench_config.resolved"), &resolved)?;
    records::write_file(&out.join("slopes.json"), &(serde_json::to_string_pretty(&slopes)? + "\n"))?;
    Ok(BenchRun { samples, slopes })
}
