use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use reclab_core::harness::{
    emit_report, load_run_data, negative_indices, read_results, recourse_instance, run_sweep,
    train_family, vae_config_for, write_bounds_csv, ExperimentConfig, ModelFamily, ResultRow,
};
use reclab_core::linalg::Vector;
use reclab_core::models::{
    parse_predictor, parse_vae, write_predictor, write_vae, Predictor, VaeModel,
};
use reclab_core::recourse::Method;
use reclab_core::training::{train_linear_logged, train_mlp_logged, train_vae, write_run_log};

/// Robust-training and recourse laboratory.
#[derive(Parser)]
#[command(name = "reclab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model on the configured data and write it to a model file.
    Train(TrainArgs),
    /// Generate recourse for negatively predicted points with one method.
    Recourse(RecourseArgs),
    /// Run the full ε-sweep and write results, bounds, summary and plot data.
    Sweep(ConfigArgs),
    /// Run the sweep and write only the per-instance bound intervals.
    VerifyBounds(ConfigArgs),
    /// Print seed-averaged validity and cost from an existing results.csv.
    Report(ReportArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config; flags below override its fields.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    /// Comma-separated ε grid, must start at 0.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    /// Comma-separated subset of SCFE, GSM, CCHVAE.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Model family: linear, ntk or mlp.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    attack_epsilon: Option<f64>,
    #[arg(long)]
    max_instances: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.name {
            cfg.name = v.clone();
        }
        if let Some(v) = &self.epsilons {
            cfg.epsilons = v.clone();
        }
        if let Some(v) = &self.methods {
            cfg.methods = v.clone();
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(family) = &self.family {
            cfg.model = match family.to_ascii_lowercase().as_str() {
                "linear" => ModelFamily::Linear,
                "ntk" => ModelFamily::Ntk {
                    beta: self.beta.unwrap_or(0.5),
                    rounds: 1,
                },
                "mlp" => ModelFamily::Mlp {
                    depth: self.depth.unwrap_or(2),
                    width: self.width.unwrap_or(16),
                },
                other => bail!("unknown model family {other:?} (expected linear, ntk or mlp)"),
            };
        }
        match &mut cfg.model {
            ModelFamily::Ntk { beta, .. } => *beta = self.beta.unwrap_or(*beta),
            ModelFamily::Mlp { depth, width } => {
                *depth = self.depth.unwrap_or(*depth);
                *width = self.width.unwrap_or(*width);
            }
            ModelFamily::Linear => {}
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = self.test_fraction {
            cfg.test_fraction = v;
        }
        if let Some(v) = self.attack_epsilon {
            cfg.attack_epsilon = v;
        }
        if self.max_instances.is_some() {
            cfg.max_instances = self.max_instances;
        }
        if let Some(v) = &self.output {
            cfg.output_dir = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Robustness radius ε used for training.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Run seed selecting the data draw and split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch JSONL log (linear and mlp families).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Also train a VAE on the same split and write it here.
    #[arg(long)]
    vae_out: Option<PathBuf>,
}

#[derive(Args)]
struct RecourseArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    method: Method,
    /// VAE file for CCHVAE; trained from the config when absent.
    #[arg(long)]
    vae: Option<PathBuf>,
    /// Run seed selecting the data draw and split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Single comma-separated input point instead of the test split.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    point: Option<Vec<f64>>,
    /// CSV file to write; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory containing results.csv, or the file itself.
    input: PathBuf,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn train(args: &TrainArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let (train, _) = load_run_data(&cfg, args.seed)?;
    let tc = cfg.train.with_epsilon(args.epsilon).with_seed(args.seed);
    let (model, log): (Predictor, _) = match cfg.model {
        ModelFamily::Linear => {
            let (m, log) = train_linear_logged(&train, &tc)?;
            (m.into(), Some(log))
        }
        ModelFamily::Mlp { depth, width } => {
            let (m, log) = train_mlp_logged(&train, depth, width, &tc)?;
            (m.into(), Some(log))
        }
        ModelFamily::Ntk { .. } => {
            let baseline = if args.epsilon > 0.0 {
                Some(train_family(&cfg, &train, 0.0, args.seed, None)?)
            } else {
                None
            };
            (
                train_family(&cfg, &train, args.epsilon, args.seed, baseline.as_ref())?,
                None,
            )
        }
    };
    write_text(&args.out, &write_predictor(&model))?;
    if let Some(path) = &args.log {
        match log {
            Some(records) => write_run_log(path, &records)?,
            None => bail!("the {} family has no epoch log", cfg.model.name()),
        }
    }
    if let Some(path) = &args.vae_out {
        let vae = train_vae(&train, &vae_config_for(&cfg, args.seed))?;
        write_text(path, &write_vae(&vae))?;
    }
    eprintln!(
        "trained {} model (epsilon {}) on {} rows -> {}",
        model.kind(),
        args.epsilon,
        train.len(),
        args.out.display()
    );
    Ok(())
}

fn read_model(path: &Path) -> Result<Predictor> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_predictor(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_vae(path: &Path) -> Result<VaeModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_vae(&text).with_context(|| format!("parsing {}", path.display()))
}

fn recourse(args: &RecourseArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    let model = read_model(&args.model)?;
    let needs_data = args.point.is_none() || (args.method == Method::Cchvae && args.vae.is_none());
    let data = if needs_data {
        Some(load_run_data(&cfg, args.seed)?)
    } else {
        None
    };
    let vae = match (&args.vae, args.method) {
        (Some(p), _) => Some(read_vae(p)?),
        (None, Method::Cchvae) => {
            let (train, _) = data.as_ref().expect("data loaded for VAE training");
            Some(train_vae(train, &vae_config_for(&cfg, args.seed))?)
        }
        (None, _) => None,
    };
    let points: Vec<(usize, Vector)> = match &args.point {
        Some(p) => vec![(0, Vector::from_vec(p.clone()))],
        None => {
            let (_, test) = data.as_ref().expect("data loaded");
            negative_indices(&model, test, cfg.max_instances)?
                .into_iter()
                .map(|i| (i, test.row(i)))
                .collect()
        }
    };

    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => {
            Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(
        out,
        "instance_id,method,valid,cost,iterations,budget_exhausted,x_cf"
    )?;
    let mut valid = 0;
    for (i, x) in &points {
        let o = recourse_instance(&cfg, args.method, &model, vae.as_ref(), x, args.seed, *i)?;
        valid += o.valid as usize;
        let cf = o
            .x_cf
            .as_ref()
            .map(|v| {
                v.iter()
                    .map(|c| format!("{c:.16e}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .unwrap_or_default();
        let cost = o.cost.map(|c| format!("{c:.16e}")).unwrap_or_default();
        writeln!(
            out,
            "{i},{},{},{cost},{},{},{cf}",
            o.method, o.valid, o.iterations, o.budget_exhausted
        )?;
    }
    out.flush()?;
    eprintln!("{valid}/{} recourses valid", points.len());
    Ok(())
}

fn sweep(args: &ConfigArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let report = run_sweep(&cfg)?;
    let paths = emit_report(&report, &cfg.output_dir)?;
    eprintln!(
        "{} rows, {} bound intervals, {} violations, {} vacuous -> {}",
        report.rows.len(),
        report.bounds.len(),
        report.total_violations(),
        report.total_vacuous(),
        paths.results.display()
    );
    Ok(())
}

fn verify_bounds(args: &ConfigArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let report = run_sweep(&cfg)?;
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let path = cfg.output_dir.join("bounds.csv");
    write_bounds_csv(&path, &report.bounds)?;
    println!(
        "bounds: {} rows, {} violations, {} vacuous -> {}",
        report.bounds.len(),
        report.total_violations(),
        report.total_vacuous(),
        path.display()
    );
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn report(args: &ReportArgs) -> Result<()> {
    let path = if args.input.is_dir() {
        args.input.join("results.csv")
    } else {
        args.input.clone()
    };
    let rows = read_results(&path)?;
    let mut keys: Vec<(Method, f64)> = Vec::new();
    for r in &rows {
        if !keys.iter().any(|k| k.0 == r.method && k.1 == r.epsilon) {
            keys.push((r.method, r.epsilon));
        }
    }
    println!(
        "{:<8} {:>8} {:>6} {:>9} {:>10} {:>10} {:>9} {:>11}",
        "method", "epsilon", "seeds", "validity", "cost", "cost_diff", "adv_acc", "violations"
    );
    for (m, e) in keys {
        let group: Vec<&ResultRow> = rows
            .iter()
            .filter(|r| r.method == m && r.epsilon == e)
            .collect();
        println!(
            "{:<8} {:>8} {:>6} {:>9} {:>10} {:>10} {:>9} {:>11}",
            m.as_str(),
            e,
            group.len(),
            fmt_opt(mean(group.iter().filter_map(|r| r.validity))),
            fmt_opt(mean(group.iter().filter_map(|r| r.mean_cost))),
            fmt_opt(mean(group.iter().filter_map(|r| r.cost_diff_vs_eps0))),
            fmt_opt(mean(group.iter().map(|r| r.adv_accuracy))),
            group.iter().map(|r| r.bound_violations).sum::<usize>(),
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Recourse(a) => recourse(a),
        Command::Sweep(a) => sweep(a),
        Command::VerifyBounds(a) => verify_bounds(a),
        Command::Report(a) => report(a),
    }
}
