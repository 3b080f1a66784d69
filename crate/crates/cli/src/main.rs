use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pkmeans::clustering::LloydConfig;
use pkmeans::evaluation::{cluster_stats, compare, AlgorithmSpec};
use pkmeans::profile::{profile_clusters, render_profiles};
use pkmeans::{json, par, Dataset, PkmConfig, PkmModel, SchemaDecl, Variant};

#[derive(Parser)]
#[command(name = "pkm", version, about = "Predictive k-means: train, predict, evaluate, profile")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write it as JSON.
    Train(TrainArgs),
    /// Predict cluster, class probabilities and label for every row.
    Predict(PredictArgs),
    /// Repeated stratified cross-validation of one or more variants.
    Evaluate(EvaluateArgs),
    /// Per-cluster profiles of a model over its training data.
    Report(ReportArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Schema sidecar (`name,kind` lines then `target,<name>`). Defaults to
    /// the data path with a `.schema` extension, else kinds are inferred.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Number of clusters; defaults to the number of classes.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = pkmeans::clustering::DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = pkmeans::clustering::DEFAULT_TOL)]
    tol: f64,
    /// Worker threads: 1 runs sequentially, 0 uses every core.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

impl FitArgs {
    fn config(&self, variant: Variant) -> PkmConfig {
        let mut c = PkmConfig::new(variant).with_seed(self.seed);
        c.k = self.k;
        c.lloyd = LloydConfig {
            max_iter: self.max_iter,
            tol: self.tol,
        };
        c
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "pkm-snb")]
    variant: Variant,
    #[command(flatten)]
    fit: FitArgs,
    /// Model file to write.
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with the model's feature columns; the target column is optional.
    #[arg(long)]
    data: PathBuf,
    /// Predictions CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Variants to compare over the same folds; all three by default.
    #[arg(long = "variant")]
    variants: Vec<Variant>,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Output directory for report.json, report.txt and runs.csv.
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    model: PathBuf,
    /// The model's training CSV.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for profiles.json and profiles.txt; text goes to
    /// stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_data(args: &DataArgs) -> Result<Dataset> {
    let sidecar = args.schema.clone().or_else(|| {
        let p = args.data.with_extension("schema");
        p.exists().then_some(p)
    });
    let data = match sidecar {
        Some(path) => {
            let decl = SchemaDecl::from_file(&path)?;
            Dataset::load_csv(&args.data, &decl)?
        }
        None => Dataset::load_csv_inferred(&args.data, None)?,
    };
    Ok(data)
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn train(args: TrainArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let config = args.fit.config(args.variant);
    let start = Instant::now();
    let model = par::with_threads(args.fit.threads, |exec| PkmModel::fit(&data, &config, exec))?;
    let seconds = start.elapsed().as_secs_f64();
    json::save(&args.out, &model)?;
    let stats = cluster_stats([&model]);
    println!("variant      {}", args.variant.name());
    println!("instances    {}  features {}  classes {}", data.len(), data.n_features(), data.n_classes());
    println!("clusters     {}  (iterations {}, inertia {:.6})", model.k, model.clustering.iterations, model.clustering.inertia);
    println!(
        "pure {:.2}%  local model {:.2}%  majority vote {:.2}%",
        stats.pct_pure, stats.pct_local_model, stats.pct_no_local_model
    );
    for (c, p) in model.predictors.iter().enumerate() {
        let kind = match (&p.snb, p.pure) {
            (Some(s), _) => format!("snb ({} features)", s.selected().len()),
            (None, true) => "mv (pure)".into(),
            (None, false) => "mv".into(),
        };
        println!("  cluster {c:>3}  size {:>6}  {kind}", p.majority.size());
    }
    println!("train time   {seconds:.4} s");
    println!("model        {}", args.out.display());
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let model: PkmModel = json::load(&args.model)?;
    let file = fs::File::open(&args.data).with_context(|| format!("opening {}", args.data.display()))?;
    let (rows, _) = Dataset::read_unlabeled(file, &model.schema)?;
    let preds = par::with_threads(args.threads, |exec| model.predict_batch(&rows, exec))?;
    let sink: Box<dyn std::io::Write> = match &args.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["id".to_string(), "cluster".to_string()];
    header.extend(model.schema.classes.iter().map(|c| format!("p_{c}")));
    header.push("label".into());
    w.write_record(&header)?;
    for (i, p) in preds.iter().enumerate() {
        let mut rec = vec![i.to_string(), p.cluster.to_string()];
        rec.extend(p.probabilities.iter().map(|v| format!("{v:.16e}")));
        rec.push(model.schema.classes[p.label].clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let variants = if args.variants.is_empty() { Variant::ALL.to_vec() } else { args.variants.clone() };
    let specs: Vec<AlgorithmSpec> = variants.iter().map(|&v| AlgorithmSpec::new(args.fit.config(v))).collect();
    let name = dataset_name(&args.data.data);
    let report = par::with_threads(args.fit.threads, |exec| {
        compare(&data, &name, &specs, args.repeats, args.folds, args.fit.seed, exec)
    })?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    json::save(args.out.join("report.json"), &report)?;
    let table = report.render_table();
    write(&args.out.join("report.txt"), &table)?;
    let runs = fs::File::create(args.out.join("runs.csv"))?;
    report.write_runs_csv(runs)?;
    print!("{table}");
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let model: PkmModel = json::load(&args.model)?;
    let data = Dataset::load_csv_with_schema(&args.data, &model.schema)?;
    let profiles = profile_clusters(&model, &data)?;
    let text = render_profiles(&profiles, &model.schema.classes);
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            json::save(dir.join("profiles.json"), &profiles)?;
            write(&dir.join("profiles.txt"), &text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => {
            if a.repeats == 0 || a.folds < 2 {
                bail!("need --repeats >= 1 and --folds >= 2");
            }
            evaluate(a)
        }
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
