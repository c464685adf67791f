use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chval::ame::SubsetExperiments;
use chval::characteristics::{extract_characteristics, relevance_report, CharacteristicsMatrix};
use chval::config::RunConfig;
use chval::corpus::{load_corpus_csv, make_synthetic, Corpus, CsvSchema, SyntheticKind, SyntheticSpec};
use chval::curves::{point_addition_curve, point_removal_curve, Direction, Ordering};
use chval::learners::{train_with_trace, TrainingTrace};
use chval::report::{
    compare_to_reference, curves_csv, emit_report, merge_curve, merge_values, metrics_csv, read_json, read_reference,
    read_values, write_json, write_text, Report, REFERENCE_METHODS,
};
use chval::rng::SeedSpec;
use chval::srt::{extract_rules, SrtModel};
use chval::valuation::{Artifacts, Registry, ValuationContext};
use chval::{Error, Result};

/// Learnable, interpretable data valuation.
///
/// Stages share a run directory (`--out`): each one reads what earlier stages
/// left there and recomputes anything missing.
#[derive(Parser)]
#[command(name = "chval", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration; defaults apply to omitted keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory holding every artifact.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Corpus file (CSV or JSON); defaults to `<out>/corpus.json`.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus, or import a CSV, into the run directory.
    GenData(GenData),
    /// Sample subsets and train a sub-model on each, caching masks and utilities.
    Subsets,
    /// Train the traced model that records per-sample training dynamics.
    Trace,
    /// Compute the 11 standardized characteristics from the trace.
    Features,
    /// Value every training sample with one method.
    Value {
        #[arg(long)]
        method: String,
    },
    /// Compare stored values with reference values.
    Eval {
        /// `values.json`-style map or a JSON array.
        #[arg(long)]
        reference: PathBuf,
        /// Entry of the reference map to use.
        #[arg(long)]
        reference_method: Option<String>,
    },
    /// Point-removal or point-addition curve on the test split.
    Curve {
        #[arg(long)]
        direction: Direction,
        #[arg(long)]
        order: Ordering,
        /// Valuation method whose values order the points.
        #[arg(long)]
        method: Option<String>,
    },
    /// Extract readable rules from the stored regression tree.
    Rules,
    /// Gather every artifact into `<out>/report`.
    Report,
    /// List the available valuation methods.
    Methods,
}

#[derive(Args)]
struct GenData {
    #[arg(long, default_value = "blobs")]
    kind: SyntheticKind,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Import this CSV instead of generating data.
    #[arg(long)]
    csv: Option<PathBuf>,
}

struct Run {
    config: RunConfig,
    out: PathBuf,
    data: Option<PathBuf>,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn corpus(&self) -> Result<Corpus> {
        let path = self.data.clone().unwrap_or_else(|| self.path("corpus.json"));
        if !path.exists() {
            return Err(Error::InvalidInput(format!("{} not found; run `gen-data` first or pass --data", path.display())));
        }
        if path.extension().is_some_and(|e| e == "csv") {
            let schema = CsvSchema { seed: SeedSpec::new(self.config.seed), ..CsvSchema::default() };
            load_corpus_csv(&path, &schema)
        } else {
            read_json(&path)
        }
    }

    /// Context primed with whichever cached stages exist on disk.
    fn context<'a>(&'a self, corpus: &'a Corpus) -> Result<ValuationContext<'a>> {
        let mut ctx = ValuationContext::new(corpus, &self.config);
        let subsets = self.path("subsets.json");
        if subsets.exists() {
            ctx = ctx.with_experiments(SubsetExperiments::load(&subsets)?);
        }
        let trace = self.path("trace.json");
        if trace.exists() {
            ctx = ctx.with_trace(TrainingTrace::load(&trace)?);
        }
        let features = self.path("characteristics.json");
        if features.exists() {
            let u: CharacteristicsMatrix = read_json(&features)?;
            if u.len() == corpus.len() {
                ctx = ctx.with_characteristics(u);
            }
        }
        Ok(ctx)
    }
}

fn gen_data(run: &Run, args: &GenData) -> Result<()> {
    let corpus = match &args.csv {
        Some(path) => load_corpus_csv(path, &CsvSchema { seed: SeedSpec::new(run.config.seed), ..CsvSchema::default() })?,
        None => {
            let spec = SyntheticSpec::new(args.kind, args.n, args.classes, args.dim, args.noise);
            make_synthetic(&spec, SeedSpec::new(run.config.seed))?
        }
    };
    write_json(&run.path("corpus.json"), &corpus)?;
    corpus.write_csv(&run.path("corpus.csv"))?;
    println!("{} train / {} validation / {} test samples, {} classes", corpus.len(), corpus.validation.len(), corpus.test.len(), corpus.num_classes);
    Ok(())
}

fn value(run: &Run, method: &str) -> Result<()> {
    let registry = Registry::with_builtins();
    let valuator = registry.get(method)?;
    let corpus = run.corpus()?;
    let ctx = run.context(&corpus)?;
    let valuation = valuator.value(&ctx)?;
    match &valuation.artifacts {
        Artifacts::Mlp(ensemble) => ensemble.save(&run.path("mlp_model.json"))?,
        Artifacts::Srt { training, rules } => {
            training.model.save(&run.path("srt_model.json"))?;
            write_json(&run.path("srt_rounds.json"), &training.rounds)?;
            write_text(&run.path("rules.txt"), &rules.to_text())?;
            write_text(&run.path("rules.json"), &(rules.to_json()? + "\n"))?;
        }
        Artifacts::Lasso { lambda } => log::info!("selected lambda {lambda}"),
        Artifacts::None => {}
    }
    let runtime = valuation.result.provenance.runtime_seconds;
    let name = valuation.result.method.clone();
    merge_values(&run.path("values.json"), valuation.result)?;
    println!("{name}: {} values in {runtime:.2}s", corpus.len());
    Ok(())
}

fn eval(run: &Run, reference: &Path, reference_method: Option<&str>) -> Result<()> {
    let values = read_values(&run.path("values.json"))?;
    let (name, reference) = read_reference(reference, reference_method)?;
    let rows = compare_to_reference(&values, &name, &reference)?;
    let csv = metrics_csv(&rows);
    write_text(&run.path("metrics.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn curve(run: &Run, direction: Direction, order: Ordering, method: Option<&str>) -> Result<()> {
    let method = method.unwrap_or(&run.config.curves.method);
    let method = Registry::with_builtins().get(method)?.name();
    let values = read_values(&run.path("values.json"))?;
    let entry = values
        .get(method)
        .ok_or_else(|| Error::InvalidInput(format!("no stored values for {method}; run `value --method {method}` first")))?;
    let corpus = run.corpus()?;
    let seed = SeedSpec::new(run.config.seed);
    let stride = run.config.curves.stride;
    let mut curve = match direction {
        Direction::Removal => point_removal_curve(&corpus, &entry.values, &run.config.learner, order, stride, &seed)?,
        Direction::Addition => point_addition_curve(&corpus, &entry.values, &run.config.learner, order, stride, &seed)?,
    };
    curve.label = method.to_string();
    println!("{method} {direction} by {order}: accuracy {:.4} -> {:.4} over {} points", curve.points[0].1, curve.final_accuracy(), curve.k);
    let path = run.path("curves.json");
    let mut curves = if path.exists() { read_json(&path)? } else { Vec::new() };
    merge_curve(&mut curves, curve);
    write_json(&path, &curves)?;
    write_text(&run.path("curves.csv"), &curves_csv(&curves))
}

fn rules(run: &Run) -> Result<()> {
    let model = SrtModel::load(&run.path("srt_model.json"))?;
    let rules = extract_rules(&model)?;
    let text = rules.to_text();
    write_text(&run.path("rules.txt"), &text)?;
    write_text(&run.path("rules.json"), &(rules.to_json()? + "\n"))?;
    print!("{text}");
    Ok(())
}

fn report(run: &Run) -> Result<()> {
    let values = read_values(&run.path("values.json"))?;
    let reference = REFERENCE_METHODS.iter().find_map(|m| values.get(*m)).map(|r| (r.method.clone(), r.values.clone()));
    let curves_path = run.path("curves.json");
    let srt_path = run.path("srt_model.json");
    let features_path = run.path("characteristics.json");
    let relevance = match &reference {
        Some((_, v)) if features_path.exists() => {
            let u: CharacteristicsMatrix = read_json(&features_path)?;
            Some(relevance_report(u.values.view(), v)?)
        }
        _ => None,
    };
    let report = Report {
        values,
        reference,
        curves: if curves_path.exists() { read_json(&curves_path)? } else { Vec::new() },
        rules: if srt_path.exists() { Some(extract_rules(&SrtModel::load(&srt_path)?)?) } else { None },
        relevance,
    };
    let dir = run.path("report");
    emit_report(&report, &dir)?;
    println!("report written to {}", dir.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let mut config = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        config.seed = seed;
    }
    if let Some(workers) = cli.global.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    }
    std::fs::create_dir_all(&cli.global.out).map_err(|e| Error::io(&cli.global.out, e))?;
    let run = Run { config, out: cli.global.out, data: cli.global.data };

    match &cli.command {
        Command::GenData(args) => gen_data(&run, args),
        Command::Subsets => {
            let corpus = run.corpus()?;
            let ctx = ValuationContext::new(&corpus, &run.config);
            let experiments = ctx.experiments()?;
            experiments.save(&run.path("subsets.json"))?;
            println!("{} subset experiments", experiments.masks.len());
            Ok(())
        }
        Command::Trace => {
            let corpus = run.corpus()?;
            let trace = train_with_trace(&corpus, &run.config.trace, run.config.learner.l2, SeedSpec::new(run.config.seed))?;
            trace.save(&run.path("trace.json"))?;
            println!("{} epochs traced over {} samples", trace.num_epochs(), trace.num_samples());
            Ok(())
        }
        Command::Features => {
            let corpus = run.corpus()?;
            let ctx = run.context(&corpus)?;
            let trace = ctx.trace()?;
            let u = extract_characteristics(trace, &corpus, run.config.trace.neighbors)?;
            write_json(&run.path("characteristics.json"), &u)?;
            u.write_csv(&run.path("characteristics.csv"))?;
            println!("{} x {} characteristics", u.values.nrows(), u.values.ncols());
            Ok(())
        }
        Command::Value { method } => value(&run, method),
        Command::Eval { reference, reference_method } => eval(&run, reference, reference_method.as_deref()),
        Command::Curve { direction, order, method } => curve(&run, *direction, *order, method.as_deref()),
        Command::Rules => rules(&run),
        Command::Report => report(&run),
        Command::Methods => {
            let registry = Registry::with_builtins();
            for name in registry.names() {
                let m = registry.get(name)?;
                println!("{name:<14} {}", m.description());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
