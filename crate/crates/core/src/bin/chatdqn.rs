use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;

use chatdqn::agent::{evaluate, Checkpoint};
use chatdqn::chat::chat_repl;
use chatdqn::corpus::{load_corpus, parse_personachat, Corpus};
use chatdqn::environment::ChatEnvironment;
use chatdqn::experiment::{Experiment, ExperimentConfig};
use chatdqn::plot::emit_learning_curve;
use chatdqn::{Error, Result, SeededRng};

#[derive(Parser)]
#[command(name = "chatdqn", version, about = "Train and inspect chitchat DQN agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (JSON).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write a default config file.
    Init {
        #[arg(long, default_value = "config.json")]
        out: PathBuf,
        /// Desk-scale synthetic settings instead of full-size defaults.
        #[arg(long)]
        toy: bool,
    },
    /// Load the corpora into the run directory, or convert one file with
    /// `--from personachat <in> <out>`.
    Ingest {
        #[arg(long, short, required_unless_present = "from")]
        config: Option<PathBuf>,
        #[arg(long, value_enum, requires_all = ["input", "output"])]
        from: Option<SourceFormat>,
        input: Option<PathBuf>,
        output: Option<PathBuf>,
    },
    /// Write per-dim embedding tables restricted to the corpus vocabulary.
    Embed(ConfigArg),
    /// Fit the sentence clusters (action set) or the dialogue clusters.
    Cluster {
        #[arg(value_enum, default_value = "sentences")]
        target: ClusterTarget,
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Cluster whole dialogues into data splits.
    Split {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// 2-D PCA of sentence or dialogue vectors as `x,y` CSV.
    Project {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(value_enum, default_value = "sentences")]
        target: ClusterTarget,
        /// Defaults to the first configured dim.
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, default_value = "projection.csv")]
        out: PathBuf,
    },
    /// Train agents (all selected splits, or one).
    Train {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        split: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        checkpoint: PathBuf,
        /// `train`, `test`, or a JSONL corpus file.
        #[arg(long, default_value = "test")]
        dialogues: String,
    },
    /// Run every stage and write report.csv (and comparison.json).
    Report(ConfigArg),
    /// Reward-predictor analyses.
    PredictReward {
        #[command(subcommand)]
        action: PredictAction,
    },
    /// Talk to a trained agent on stdin/stdout.
    Chat {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "chat.jsonl")]
        transcript: PathBuf,
    },
    /// Write curve.csv and curve.svg for a training run directory.
    Plot {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceFormat {
    Personachat,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClusterTarget {
    Sentences,
    Dialogues,
}

#[derive(Subcommand)]
enum PredictAction {
    /// Pearson correlation per history length.
    Study {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, default_value = "study.csv")]
        out: PathBuf,
    },
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Init { .. } => "init",
            Command::Ingest { .. } => "ingest",
            Command::Embed(_) => "embed",
            Command::Cluster { .. } => "cluster",
            Command::Split { .. } => "split",
            Command::Project { .. } => "project",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Report(_) => "report",
            Command::PredictReward { .. } => "predict-reward",
            Command::Chat { .. } => "chat",
            Command::Plot { .. } => "plot",
        }
    }
}

fn open(arg: &ConfigArg) -> Result<Experiment> {
    Experiment::open(ExperimentConfig::load(&arg.config)?)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Init { out, toy } => {
            let cfg = if toy { ExperimentConfig::toy() } else { ExperimentConfig::default() };
            cfg.save(&out)?;
            println!("wrote {}", out.display());
        }
        Command::Ingest { config, from, input, output } => match (from, input, output) {
            (Some(SourceFormat::Personachat), Some(input), Some(output)) => {
                let text = std::fs::read_to_string(&input).map_err(|e| Error::io(&input, e))?;
                let prefix = input.file_stem().and_then(|s| s.to_str()).unwrap_or("dialogue");
                let corpus = Corpus::new(parse_personachat(&text, prefix)?)?;
                corpus.save_jsonl(&output)?;
                println!("{} dialogues -> {}", corpus.len(), output.display());
            }
            _ => {
                let config = config.ok_or_else(|| Error::invalid("--config is required"))?;
                open(&ConfigArg { config })?.ingest()?
            }
        },
        Command::Embed(c) => open(&c)?.embed()?,
        Command::Cluster { target, cfg, k } => {
            let mut config = ExperimentConfig::load(&cfg.config)?;
            match target {
                ClusterTarget::Sentences => {
                    if let Some(k) = k {
                        config.agent.k = k;
                    }
                    Experiment::open(config)?.cluster()?
                }
                ClusterTarget::Dialogues => {
                    if let Some(k) = k {
                        config.split_k = k;
                    }
                    Experiment::open(config)?.split()?
                }
            }
        }
        Command::Split { cfg, k, seed } => {
            let mut config = ExperimentConfig::load(&cfg.config)?;
            if let Some(k) = k {
                config.split_k = k;
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            let exp = Experiment::open(config)?;
            exp.split()?;
            for s in exp.load_splits()? {
                println!("split {}: {} dialogues", s.split_id, s.dialogue_ids.len());
            }
        }
        Command::Project { cfg, target, dim, out } => {
            let exp = open(&cfg)?;
            let dim = dim.unwrap_or(exp.cfg.dims[0]);
            let csv = exp.projection_csv(dim, matches!(target, ClusterTarget::Dialogues))?;
            std::fs::write(&out, csv).map_err(|e| Error::io(&out, e))?;
            println!("wrote {}", out.display());
        }
        Command::Train { cfg, split, k, dim, seed, steps, out } => {
            let mut config = ExperimentConfig::load(&cfg.config)?;
            if let Some(k) = k {
                config.agent.k = k;
            }
            if let Some(d) = dim {
                config.dims = vec![d];
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            if let Some(s) = steps {
                config.agent.learn_steps = s;
                config.agent.burn_in = config.agent.burn_in.min(s);
            }
            if let Some(o) = out {
                config.output_dir = o;
            }
            let exp = Experiment::open(config)?;
            exp.split()?;
            let splits = match split {
                Some(id) => vec![exp
                    .load_splits()?
                    .into_iter()
                    .find(|s| s.split_id == id && !s.dialogue_ids.is_empty())
                    .ok_or_else(|| Error::InvalidArgument(format!("split {id} is missing or empty")))?],
                None => exp.selected_splits()?,
            };
            for &d in &exp.cfg.dims {
                for s in &splits {
                    exp.train_split(d, s)?;
                    println!("{}", exp.run_dir(d, s.split_id).display());
                }
            }
        }
        Command::Eval { cfg, checkpoint, dialogues } => {
            let exp = open(&cfg)?;
            exp.cluster()?;
            let ck = Checkpoint::load(&checkpoint)?;
            let dim = ck.cfg.embedding_dim;
            if !exp.cfg.dims.contains(&dim) {
                return Err(Error::IncompatibleCheckpoint(format!("dim {dim} is not configured")));
            }
            ck.check_architecture(&exp.cfg.agent_config(dim, 0))?;
            let corpus = match dialogues.as_str() {
                "train" => exp.load_train()?,
                "test" => exp.load_test()?,
                path => load_corpus(path.as_ref())?,
            };
            let table = exp.load_table(dim)?;
            let actions = exp.load_actions(dim)?;
            let env = ChatEnvironment::new(&corpus, &table, &actions, ck.cfg.env_config())?;
            let summary = evaluate(&ck.online, &env, corpus.dialogues(), exp.eval_options())?;
            println!(
                "{}",
                serde_json::json!({
                    "config_hash": exp.config_hash(),
                    "checkpoint_config_hash": ck.config_hash,
                    "episodes": summary.episodes,
                    "steps": summary.steps,
                    "mean_reward": summary.mean_reward,
                })
            );
        }
        Command::Report(c) => {
            let exp = open(&c)?;
            exp.report()?;
            print!("{}", std::fs::read_to_string(exp.report_path()).map_err(|e| Error::Io {
                path: exp.report_path(),
                source: e,
            })?);
        }
        Command::PredictReward {
            action: PredictAction::Study { cfg, lengths, runs, out },
        } => {
            let mut config = ExperimentConfig::load(&cfg.config)?;
            if let Some(l) = lengths {
                config.predictor.history_lens = l;
            }
            if let Some(r) = runs {
                config.predictor.runs = r;
            }
            let rows = Experiment::open(config)?.predictor_study(&out)?;
            for r in rows {
                println!("h={:<3} mean={:.4} std={:.4}", r.h, r.mean, r.std);
            }
        }
        Command::Chat { cfg, checkpoint, transcript } => {
            let exp = open(&cfg)?;
            exp.cluster()?;
            let ck = Checkpoint::load(&checkpoint)?;
            let dim = ck.cfg.embedding_dim;
            ck.check_architecture(&exp.cfg.agent_config(dim, 0))?;
            let pool = exp.load_test()?;
            let table = exp.load_table(dim)?;
            let actions = exp.load_actions(dim)?;
            let env = ChatEnvironment::new(&pool, &table, &actions, ck.cfg.env_config())?;
            let mut rng = SeededRng::seed_from_u64(exp.cfg.seed);
            let stdin = std::io::stdin();
            chat_repl(&ck.online, &env, stdin.lock(), std::io::stdout(), &transcript, &mut rng)?;
        }
        Command::Plot { run } => {
            let (csv, svg) = emit_learning_curve(&run)?;
            println!("{}\n{}", csv.display(), svg.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = cli.command.stage();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let e = match e {
                e @ Error::Stage { .. } => e,
                other => other.in_stage(stage),
            };
            eprintln!("chatdqn: {e}");
            ExitCode::FAILURE
        }
    }
}
