use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bispectral_ot::cli::{
    cmd_diststats, cmd_embed, cmd_evaluate, cmd_mds, cmd_pipeline, cmd_transport, EvaluateArgs,
    ExperimentConfig, FigureArgs, TransportArgs, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK,
};
use bispectral_ot::cost::{Metric, DEFAULT_BLOCK_BUDGET};
use bispectral_ot::ot::{SolverKind, SolverParams};
use bispectral_ot::spectra::Representation;
use bispectral_ot::Result;

/// Bispectral optimal transport between rotated and unrotated image sets.
#[derive(Parser)]
#[command(name = "bispot", version)]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split, rotate and embed both halves of a dataset.
    Embed(ConfigArgs),
    /// Solve entropic OT between two feature files.
    Transport(TransportCli),
    /// Score a plan against source and target labels.
    Evaluate(EvaluateCli),
    /// Run split → rotate → embed → cost → solve → evaluate and write summary.csv.
    Pipeline(ConfigArgs),
    /// 2-D classical MDS of rotated copies of sampled images.
    Mds {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        figure: FigureCli,
    },
    /// Rotation distance grids and inter/intra-class distance statistics.
    Diststats {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        figure: FigureCli,
    },
}

/// A TOML config file plus flag overrides; flags win.
#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    /// IDX image file (plain or .gz).
    #[arg(long)]
    images: Option<PathBuf>,
    /// IDX label file (plain or .gz).
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    rotation_seed: Option<u64>,
    #[arg(long)]
    subsample_seed: Option<u64>,
    /// Images per class kept in each half (0 = all).
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    radial_bins: Option<usize>,
    #[arg(long)]
    angular_bins: Option<usize>,
    /// raw or bispectral; repeat for several.
    #[arg(long = "representation")]
    representations: Vec<Representation>,
    /// l1, l2, l2sq or cosine; repeat for several.
    #[arg(long = "metric")]
    metrics: Vec<Metric>,
    /// Entropic regularization; repeat to sweep.
    #[arg(long = "epsilon")]
    epsilons: Vec<f64>,
    #[arg(long)]
    solver: Option<SolverKind>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Divide each cost matrix by its maximum before solving.
    #[arg(long)]
    normalize_cost: bool,
    /// Leave both halves unrotated.
    #[arg(long)]
    baseline: bool,
    /// Transport from the unrotated half to the rotated one.
    #[arg(long)]
    swap_direction: bool,
    #[arg(long)]
    block_budget: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn build(self, threads: Option<usize>) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.dataset {
            cfg.dataset.name = v;
        }
        if self.images.is_some() {
            cfg.dataset.images = self.images;
        }
        if self.labels.is_some() {
            cfg.dataset.labels = self.labels;
        }
        let s = &mut cfg.split;
        s.seed = self.split_seed.unwrap_or(s.seed);
        s.rotation_seed = self.rotation_seed.unwrap_or(s.rotation_seed);
        s.subsample_seed = self.subsample_seed.unwrap_or(s.subsample_seed);
        s.per_class = self.per_class.unwrap_or(s.per_class);
        s.baseline |= self.baseline;
        s.swap_direction |= self.swap_direction;
        let e = &mut cfg.embedding;
        if self.radial_bins.is_some() {
            e.radial_bins = self.radial_bins;
        }
        e.angular_bins = self.angular_bins.unwrap_or(e.angular_bins);
        if !self.representations.is_empty() {
            e.representations = self.representations;
        }
        let t = &mut cfg.transport;
        if !self.metrics.is_empty() {
            t.metrics = self.metrics;
        }
        if !self.epsilons.is_empty() {
            t.epsilons = self.epsilons;
        }
        t.solver = self.solver.unwrap_or(t.solver);
        t.tol = self.tol.unwrap_or(t.tol);
        t.max_iter = self.max_iter.unwrap_or(t.max_iter);
        t.normalize_cost |= self.normalize_cost;
        t.block_budget = self.block_budget.unwrap_or(t.block_budget);
        if let Some(out) = self.out {
            cfg.output.dir = out;
        }
        if let Some(n) = threads {
            cfg.output.threads = n;
        }
        cfg.resolved()
    }
}

#[derive(Args)]
struct TransportCli {
    #[arg(long)]
    features_a: PathBuf,
    #[arg(long)]
    features_b: PathBuf,
    /// Plan file; the JSON sidecar goes next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "l1")]
    metric: Metric,
    #[arg(long, default_value = "sinkhorn")]
    solver: SolverKind,
    #[arg(long, default_value_t = SolverParams::default().epsilon)]
    epsilon: f64,
    #[arg(long, default_value_t = SolverParams::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = SolverParams::default().max_iter)]
    max_iter: usize,
    #[arg(long)]
    normalize_cost: bool,
    #[arg(long, default_value_t = DEFAULT_BLOCK_BUDGET)]
    block_budget: usize,
}

#[derive(Args)]
struct EvaluateCli {
    #[arg(long)]
    plan: PathBuf,
    /// CSV with a `label` header, one row per plan row.
    #[arg(long)]
    source_labels: PathBuf,
    /// CSV with a `label` header, one row per plan column.
    #[arg(long)]
    target_labels: PathBuf,
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FigureCli {
    /// Images sampled per class.
    #[arg(long, default_value_t = 1)]
    samples: usize,
    /// Rotation step in degrees.
    #[arg(long, default_value_t = 9.0)]
    step: f64,
    #[arg(long, default_value = "l2")]
    distance: Metric,
    #[arg(long, default_value_t = 0)]
    sample_seed: u64,
}

impl FigureCli {
    fn args(&self) -> FigureArgs {
        FigureArgs {
            per_class: self.samples,
            step_degrees: self.step,
            metric: self.distance,
            seed: self.sample_seed,
        }
    }
}

fn init_threads(n: usize) {
    if n > 0 {
        // only fails if a pool already exists, in which case it is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn run(cli: Cli) -> Result<i32> {
    let threads = cli.threads;
    let status = match cli.command {
        Command::Embed(c) => {
            let cfg = c.build(threads)?;
            init_threads(cfg.output.threads);
            let out = cmd_embed(&cfg)?;
            for f in &out.files {
                println!("{}", f.display());
            }
            EXIT_OK
        }
        Command::Pipeline(c) => {
            let cfg = c.build(threads)?;
            init_threads(cfg.output.threads);
            let report = cmd_pipeline(&cfg)?;
            print!("{}", std::fs::read_to_string(&report.summary)?);
            if report.all_converged() {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            }
        }
        Command::Transport(t) => {
            init_threads(threads.unwrap_or(0));
            let mut args = TransportArgs::new(t.features_a, t.features_b, t.out);
            args.metric = t.metric;
            args.solver = t.solver;
            args.params = SolverParams {
                epsilon: t.epsilon,
                tol: t.tol,
                max_iter: t.max_iter,
            };
            args.normalize_cost = t.normalize_cost;
            args.block_budget = t.block_budget;
            let plan = cmd_transport(&args)?;
            let d = &plan.diagnostics;
            println!(
                "{} iterations, marginal violation {:e}, converged {}",
                d.iterations, d.marginal_violation, d.converged
            );
            if d.converged {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            }
        }
        Command::Evaluate(e) => {
            init_threads(threads.unwrap_or(0));
            let report = cmd_evaluate(&EvaluateArgs {
                plan: e.plan,
                source_labels: e.source_labels,
                target_labels: e.target_labels,
                num_classes: e.num_classes,
                output_dir: e.out,
            })?;
            println!("accuracy {}", report.accuracy);
            EXIT_OK
        }
        Command::Mds { config, figure } => {
            let cfg = config.build(threads)?;
            init_threads(cfg.output.threads);
            for out in cmd_mds(&cfg, &figure.args())? {
                println!("{}", out.file.display());
            }
            EXIT_OK
        }
        Command::Diststats { config, figure } => {
            let cfg = config.build(threads)?;
            init_threads(cfg.output.threads);
            for out in cmd_diststats(&cfg, &figure.args())? {
                let s = &out.separation;
                println!(
                    "{}: mean intra {:.6} mean inter {:.6} overlapping classes {:?}",
                    out.representation,
                    s.mean_intra(),
                    s.mean_inter(),
                    s.overlapping()
                );
            }
            EXIT_OK
        }
    };
    Ok(status)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                msg.push_str(&format!("\n  caused by: {s}"));
                source = s.source();
            }
            eprintln!("{msg}");
            ExitCode::from(EXIT_INPUT as u8)
        }
    }
}
