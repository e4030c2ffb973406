use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use pnp::demo::{two_choice_sketch, zero_params, DEMO_HIDDEN, DEMO_INPUT};
use pnp::foodweb::{ModelKind, ModelSpec};
use pnp::graph::ParamSet;
use pnp::harness::{
    evaluate, generate, load_dataset, load_params, read_gen_config, save_dataset, save_params, save_report,
    train_model, EvalScorer, GenConfig, HarnessError,
};
use pnp::training::TrainConfig;
use pnp::{beam_search, marginalize};

/// Probabilistic neural programs over synthetic food-web diagrams.
#[derive(Parser)]
#[command(name = "pnp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen {
        /// Generator config (JSON). Defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a scoring model.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: ModelKind,
        #[arg(long, default_value_t = ModelSpec::DEFAULT_HIDDEN)]
        hidden_dim: usize,
        #[arg(long, default_value_t = 32)]
        beam_width: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0.0)]
        l2: f64,
        /// Seeds parameter initialization and example order.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate parameters on a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, required_unless_present = "oracle")]
        params: Option<PathBuf>,
        /// Needed only when the parameter file does not record its model.
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        hidden_dim: Option<usize>,
        #[arg(long, default_value_t = 32)]
        beam_width: usize,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Score decisions from each example's hidden web instead.
        #[arg(long, conflicts_with = "params")]
        oracle: bool,
    },
    /// Print the distribution of the two-choice demo program.
    Demo {
        #[arg(long, default_value_t = 4)]
        beam_width: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen { config, seed, out } => {
            let mut cfg = match config {
                Some(path) => read_gen_config(&path)?,
                None => GenConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let data = generate(&cfg)?;
            save_dataset(&out, &data)?;
            let programs: usize = data.iter().map(|e| e.programs.len()).sum();
            println!("wrote {} webs, {programs} programs to {}", data.len(), out.display());
        }
        Command::Train {
            data,
            model,
            hidden_dim,
            beam_width,
            lr,
            epochs,
            l2,
            seed,
            out,
        } => {
            let data = load_dataset(&data)?;
            let spec = ModelSpec::new(model, seed).with_hidden(hidden_dim);
            let config = TrainConfig {
                learning_rate: lr,
                epochs,
                beam_width,
                shuffle_seed: seed,
                l2,
            };
            let (params, report) = train_model(&data, &spec, &config)?;
            for e in &report.epochs {
                println!(
                    "epoch {:>3}  mean loglik {:>10.5}  skipped {}",
                    e.epoch, e.mean_log_likelihood, e.skipped
                );
            }
            save_params(&out, Some(spec), &params)?;
            println!("wrote {}", out.display());
        }
        Command::Eval {
            data,
            params,
            model,
            hidden_dim,
            beam_width,
            report,
            oracle,
        } => {
            let data = load_dataset(&data)?;
            let (scorer, params) = if oracle {
                (EvalScorer::Oracle, ParamSet::new())
            } else {
                let path = params.expect("required unless --oracle");
                let file = load_params(&path)?;
                let mut spec = match (file.model, model) {
                    (Some(s), Some(k)) if s.kind != k => {
                        return Err(anyhow!("{} holds a {} model, not {k}", path.display(), s.kind))
                    }
                    (Some(s), _) => s,
                    (None, Some(k)) => ModelSpec::new(k, 0),
                    (None, None) => return Err(anyhow!("{} does not record its model; pass --model", path.display())),
                };
                if let Some(h) = hidden_dim {
                    spec = spec.with_hidden(h);
                }
                let params = file.to_params()?;
                check_shapes(&spec, &params).with_context(|| path.display().to_string())?;
                (EvalScorer::Model(spec), params)
            };
            let r = evaluate(&data, &scorer, &params, beam_width)?;
            println!("programs            {}", r.programs);
            println!("choose accuracy     {:.4}", r.choose_accuracy);
            println!("execution accuracy  {:.4}", r.execution_accuracy);
            println!("answer accuracy     {:.4}", r.answer_accuracy);
            for (k, s) in &r.per_kind {
                println!("  {k:<10} {:.4} ({}/{})", s.accuracy, s.correct, s.decisions);
            }
            for (f, s) in &r.per_family {
                println!("  {f:<18} exec {:.4} ({}/{})", s.execution_accuracy, s.execution_correct, s.programs);
            }
            if let Some(path) = report {
                save_report(&path, &r)?;
            }
        }
        Command::Demo { beam_width } => {
            let params = zero_params(DEMO_INPUT.len(), DEMO_HIDDEN);
            let dist = beam_search(&two_choice_sketch(&DEMO_INPUT), beam_width, &params)
                .map_err(HarnessError::from)?;
            for e in dist.entries() {
                let trace: Vec<String> = e.trace.iter().map(|r| format!("{}={}", r.tag, r.value)).collect();
                println!("{}  p={:.4}  score={}  [{}]", e.value, e.prob, e.score, trace.join(", "));
            }
            println!("marginal:");
            for e in marginalize(&dist).entries() {
                println!("{}  p={:.4}", e.value, e.prob);
            }
        }
    }
    Ok(())
}

fn check_shapes(spec: &ModelSpec, params: &ParamSet) -> Result<()> {
    for (name, shape) in spec.param_shapes() {
        let t = params
            .get(&name)
            .ok_or_else(|| anyhow!("missing parameter {name} for the {} model", spec.kind))?;
        if t.shape() != shape.as_slice() {
            return Err(anyhow!("parameter {name} has shape {:?}, expected {shape:?}", t.shape()));
        }
    }
    Ok(())
}
