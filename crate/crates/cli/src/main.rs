use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use lmtune::config::{Paths, RunConfig};
use lmtune::dataset::{self, LabeledInstance};
use lmtune::eval::{self, EvalReport};
use lmtune::{access, codegen, forest, Error, KernelInstance};

/// Auto-tuning for the GPU local-memory caching optimization.
#[derive(Parser)]
#[command(name = "lmtune", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for sampling, the train/test split and forest training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on labeled kernel instances.
    #[arg(long, global = true)]
    max_instances: Option<usize>,
    /// Fraction of the dataset used for training.
    #[arg(long, global = true)]
    train_fraction: Option<f64>,
    /// Directory for all input and output files (overrides paths.*).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample kernels, label them with the cost model and write the dataset.
    Gen {
        /// Also write baseline and optimized OpenCL sources for each kernel.
        #[arg(long)]
        emit_kernels: bool,
    },
    /// Train a forest on part of the dataset and evaluate it on the rest.
    Train,
    /// Predict whether to optimize one kernel instance.
    Predict {
        /// key=value instance description, or `-` for stdin.
        instance: PathBuf,
    },
    /// Evaluate the model on the whole dataset and write a speedup histogram.
    Report,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

const USAGE: u8 = 1;
const DATA: u8 = 2;
const INTERNAL: u8 = 3;

fn classify(error: anyhow::Error) -> Failure {
    let code = match error.downcast_ref::<Error>() {
        Some(Error::Config(_)) => USAGE,
        _ => DATA,
    };
    Failure { code, error }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        classify(error)
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        classify(error.into())
    }
}

fn internal(message: String) -> Failure {
    Failure { code: INTERNAL, error: anyhow::anyhow!(message) }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).map_err(|e| Failure { code: USAGE, error: e.into() })?,
        None => RunConfig::default(),
    };
    cfg.apply_env(std::env::vars())?;
    if let Some(seed) = common.seed {
        cfg.sampling.seed = seed;
        cfg.hyperparams.seed = seed;
    }
    if let Some(n) = common.max_instances {
        cfg.sampling.max_instances = n;
    }
    if let Some(f) = common.train_fraction {
        cfg.train_fraction = f;
    }
    if let Some(dir) = &common.out {
        cfg.paths = Paths::under(dir);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    create_parent(path)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen(cfg: &RunConfig, emit_kernels: bool) -> Result<(), Failure> {
    let ds = dataset::build_dataset(&cfg.sampling, &cfg.device)?;
    create_parent(&cfg.paths.dataset)?;
    dataset::write_rows(&cfg.paths.dataset, &ds.rows)?;
    create_parent(&cfg.paths.skip_log)?;
    dataset::write_skip_log(&cfg.paths.skip_log, &ds.skipped)?;

    let positive = ds.rows.iter().filter(|r| r.beneficial).count();
    let infeasible = ds.rows.iter().filter(|r| r.speedup == 0.0).count();
    let represented: std::collections::HashSet<_> = ds.rows.iter().map(|r| r.instance.params).collect();
    println!("kernels:     {} sampled, {} in dataset", ds.kernels, represented.len());
    println!("instances:   {}", ds.rows.len());
    println!("skipped:     {}", ds.skipped.len());
    println!("beneficial:  {positive}");
    println!("infeasible:  {infeasible}");
    println!("dataset:     {}", cfg.paths.dataset.display());
    if emit_kernels {
        let files = emit_kernel_sources(&cfg.paths.kernels, &ds.rows, cfg)?;
        println!("kernel sources: {files} in {}", cfg.paths.kernels.display());
    }
    Ok(())
}

/// Writes both variants for one representative instance per kernel. The
/// instance is the kernel's first dataset row whose staged region fits in
/// local memory, else the first fitting configuration of its launch sweep.
fn emit_kernel_sources(dir: &Path, rows: &[LabeledInstance], cfg: &RunConfig) -> Result<usize, Failure> {
    let fits = |inst: &KernelInstance| access::footprint(inst, &cfg.device).bytes <= cfg.device.lmem_capacity_bytes;
    let mut order = Vec::new();
    let mut pick: HashMap<_, KernelInstance> = HashMap::new();
    for row in rows {
        let inst = row.instance;
        match pick.get_mut(&inst.params) {
            None => {
                order.push(inst.params);
                pick.insert(inst.params, inst);
            }
            Some(current) if !fits(current) && fits(&inst) => *current = inst,
            Some(_) => {}
        }
    }
    let mut files = 0;
    for (k, params) in order.iter().enumerate() {
        let mut inst = pick[params];
        if !fits(&inst) {
            if let Some(launch) = dataset::enumerate_launch_configs(params, &cfg.sampling.limits)
                .into_iter()
                .find(|l| fits(&KernelInstance::new(*params, *l)))
            {
                inst = KernelInstance::new(*params, launch);
            }
        }
        files += codegen::write_kernel_files(&dir.join(format!("k{k:05}")), &inst, &cfg.device)?.len();
    }
    Ok(files)
}

fn read_dataset(path: &Path) -> Result<Vec<LabeledInstance>, Failure> {
    let rows = dataset::read_rows(path)?;
    if rows.len() < 2 {
        return Err(Error::InvalidInput(format!("{} has {} rows, at least 2 are needed", path.display(), rows.len())).into());
    }
    Ok(rows)
}

fn evaluate(model: &forest::Forest, rows: &[LabeledInstance]) -> Result<EvalReport, Failure> {
    let pred: Vec<bool> = rows.iter().map(|r| model.decide(&r.features)).collect();
    let speedups: Vec<f64> = rows.iter().map(|r| r.speedup).collect();
    let report = EvalReport::new(&pred, &speedups)?;
    if report.penalty_weighted_accuracy < report.count_accuracy {
        return Err(internal(format!(
            "penalty-weighted accuracy {} below count-based {}",
            report.penalty_weighted_accuracy, report.count_accuracy
        )));
    }
    Ok(report)
}

fn write_report(cfg: &RunConfig, report: &EvalReport) -> Result<(), Failure> {
    write_file(&cfg.paths.report, &format!("{report}\n"))?;
    write_file(&cfg.paths.metrics, &report.to_key_values())?;
    println!("{report}");
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<(), Failure> {
    let rows = read_dataset(&cfg.paths.dataset)?;
    let (train, held_out) = dataset::split_train_test(&rows, cfg.train_fraction, cfg.hyperparams.seed);
    let positive = train.iter().filter(|r| r.beneficial).count();
    if positive == 0 || positive == train.len() {
        eprintln!("warning: training rows are all one class ({positive} of {} beneficial)", train.len());
    }
    let model = forest::train(&train, &cfg.hyperparams)?;
    create_parent(&cfg.paths.model)?;
    forest::save(&model, &cfg.paths.model)?;
    println!("trained on {} rows, evaluated on {} held-out rows", train.len(), held_out.len());
    println!("model: {}", cfg.paths.model.display());
    let report = evaluate(&model, &held_out)?;
    write_report(cfg, &report)
}

fn cmd_predict(cfg: &RunConfig, instance: &Path) -> Result<(), Failure> {
    let text = if instance == Path::new("-") {
        std::io::read_to_string(std::io::stdin()).context("reading instance from stdin")?
    } else {
        fs::read_to_string(instance).map_err(|e| Error::Io { path: instance.to_path_buf(), source: e })?
    };
    let inst = dataset::parse_instance(&text)?;
    lmtune::kernel_model::check_instance(&inst)?;
    let model = forest::load(&cfg.paths.model)?;
    let features = access::extract_features(&inst, &cfg.device)?;
    let predicted = model.predict(&features);
    println!("predicted_speedup={predicted}");
    let fp = access::footprint(&inst, &cfg.device);
    if fp.bytes > cfg.device.lmem_capacity_bytes {
        println!("decision=DO-NOT-OPTIMIZE");
        println!(
            "reason=infeasible: local region needs {} bytes, capacity is {}",
            fp.bytes, cfg.device.lmem_capacity_bytes
        );
    } else if predicted > 1.0 {
        println!("decision=OPTIMIZE");
    } else {
        println!("decision=DO-NOT-OPTIMIZE");
    }
    Ok(())
}

fn cmd_report(cfg: &RunConfig) -> Result<(), Failure> {
    let model = forest::load(&cfg.paths.model)?;
    let rows = read_dataset(&cfg.paths.dataset)?;
    let report = evaluate(&model, &rows)?;
    let speedups: Vec<f64> = rows.iter().map(|r| r.speedup).collect();
    let hist = eval::speedup_histogram(&speedups, &eval::default_edges())?;
    let total: usize = hist.iter().map(|b| b.count).sum();
    if total != rows.len() {
        return Err(internal(format!("histogram holds {total} of {} rows", rows.len())));
    }
    write_file(&cfg.paths.histogram, &eval::histogram_csv(&hist))?;
    write_report(cfg, &report)?;
    println!("histogram: {}", cfg.paths.histogram.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Gen { emit_kernels } => cmd_gen(&cfg, emit_kernels),
        Command::Train => cmd_train(&cfg),
        Command::Predict { instance } => cmd_predict(&cfg, &instance),
        Command::Report => cmd_report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(INTERNAL),
    }
}
