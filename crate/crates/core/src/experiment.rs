//! Versioned experiment configuration and the staged pipeline behind the
//! command-line tool.
//!
//! Stages write into one run directory. `manifest.json` records the config
//! hash under which each stage completed; a stage whose outputs exist and
//! whose recorded hash matches the current config is skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::agent::{config_hash, evaluate, train, Agent, AgentConfig, Checkpoint, EvalOptions, EvalSummary, RunReport};
use crate::clustering::{dialogue_vector, fit, pca_project, ClusterModel, FitOptions};
use crate::corpus::{load_corpus, load_splits, parse_personachat, save_splits, split_corpus, Corpus, DataSplit};
use crate::embeddings::{embed_text, load_embeddings, tokenize, WordEmbeddingTable};
use crate::environment::{baseline_bounds, Bounds, ChatEnvironment};
use crate::error::{Error, Result};
use crate::plot::{emit_learning_curve, REPORT_FILE};
use crate::reward_predictor::{history_length_study, write_study_csv, PredictorConfig, StudyRow};
use crate::stats::{wilcoxon_signed_rank, ComparisonResult};
use crate::synth::{embedding_table, generate, SynthConfig};
use crate::SeededRng;

pub const CONFIG_VERSION: u32 = 1;
pub const SEED_ENV: &str = "CHATDQN_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// One `{"id", "turns"}` object per line.
    Jsonl,
    /// Numbered `your persona:` / tab-separated exchange lines.
    Personachat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SynthConfig),
    Files {
        train: PathBuf,
        test: PathBuf,
        format: CorpusFormat,
        embeddings: Vec<EmbeddingFile>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataSource,
    /// Embedding sizes to run; two sizes enable the paired comparison.
    pub dims: Vec<usize>,
    /// Number of dialogue clusters that define the data splits.
    pub split_k: usize,
    /// Train only the largest this-many splits.
    pub max_splits: Option<usize>,
    /// K-Means settings shared by action and split clustering.
    #[serde(default)]
    pub clustering: FitOptions,
    /// `embedding_dim` and `seed` are set per run from `dims` and `seed`.
    pub agent: AgentConfig,
    pub predictor: PredictorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            output_dir: PathBuf::from("run"),
            data: DataSource::Synthetic(SynthConfig::default()),
            dims: vec![100, 300],
            split_k: 20,
            max_splits: None,
            clustering: FitOptions::default(),
            agent: AgentConfig::default(),
            predictor: PredictorConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Small synthetic setup that finishes in minutes on one core.
    pub fn toy() -> Self {
        Self {
            data: DataSource::Synthetic(SynthConfig::default()),
            split_k: 5,
            max_splits: Some(2),
            agent: AgentConfig {
                k: 20,
                hidden_dim: 32,
                learn_steps: 2_000,
                burn_in: 300,
                batch_size: 32,
                memory_size: 5_000,
                target_sync_period: 500,
                test_steps: 10_000,
                ..AgentConfig::default()
            },
            predictor: PredictorConfig {
                hidden_dim: 16,
                epochs: 15,
                learning_rate: 3e-3,
                ..PredictorConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Format(format!("unsupported config version {}", self.version)));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::invalid("dims must be nonempty and positive"));
        }
        let unique: BTreeSet<_> = self.dims.iter().collect();
        if unique.len() != self.dims.len() {
            return Err(Error::invalid("dims must be distinct"));
        }
        if self.split_k == 0 {
            return Err(Error::invalid("split_k must be positive"));
        }
        if self.clustering.max_iters == 0 || self.clustering.n_init == 0 || !(self.clustering.tol >= 0.0) {
            return Err(Error::invalid("clustering needs max_iters, n_init > 0 and tol >= 0"));
        }
        self.agent.validate()?;
        self.predictor.validate()?;
        if let DataSource::Files { train, test, embeddings, .. } = &self.data {
            for p in [train, test].into_iter().chain(embeddings.iter().map(|e| &e.path)) {
                if !p.exists() {
                    return Err(Error::invalid(format!("{} does not exist", p.display())));
                }
            }
            for d in &self.dims {
                if !embeddings.iter().any(|e| e.dim == *d) {
                    return Err(Error::invalid(format!("no embedding file for dim {d}")));
                }
            }
        }
        Ok(())
    }

    /// `CHATDQN_SEED`, when set, replaces the configured seed.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    /// Hash of everything except the output location.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        config_hash(&c)
    }

    /// Agent settings for one run.
    pub fn agent_config(&self, dim: usize, split_id: usize) -> AgentConfig {
        AgentConfig {
            embedding_dim: dim,
            seed: self.seed.wrapping_add(split_id as u64),
            ..self.agent.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Manifest {
    stages: BTreeMap<String, String>,
}

/// Per-run evaluation record. The episode budget is stored explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub config_hash: String,
    pub options: EvalOptions,
    pub on_train: EvalSummary,
    pub on_test: EvalSummary,
}

/// One column pair of the embedding-size comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimComparison {
    pub column: String,
    pub dim_a: usize,
    pub dim_b: usize,
    pub result: Option<ComparisonResult>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config_hash: String,
    pub comparisons: Vec<DimComparison>,
}

/// Split-level numbers behind one report row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowValues {
    pub training: f64,
    pub testing_train: f64,
    pub testing_test: f64,
}

pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub dir: PathBuf,
    hash: String,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

impl Experiment {
    /// Opens (or creates) the run directory and records the config there.
    pub fn open(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let dir = cfg.output_dir.clone();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        cfg.save(&dir.join("config.json"))?;
        Ok(Self {
            hash: cfg.hash(),
            cfg,
            dir,
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    fn manifest(&self) -> Manifest {
        read_json(&self.dir.join("manifest.json")).unwrap_or_default()
    }

    /// Runs `body` unless `name` already completed under this config hash
    /// and all `outputs` exist. Errors carry the stage name.
    fn stage(&self, name: &str, outputs: &[PathBuf], body: impl FnOnce() -> Result<()>) -> Result<()> {
        let done = self.manifest().stages.get(name) == Some(&self.hash) && outputs.iter().all(|p| p.exists());
        if done {
            return Ok(());
        }
        body().map_err(|e| e.in_stage(name))?;
        let mut m = self.manifest();
        m.stages.insert(name.to_string(), self.hash.clone());
        write(&self.dir.join("manifest.json"), serde_json::to_string_pretty(&m)? + "\n")
    }

    fn train_path(&self) -> PathBuf {
        self.dir.join("corpus").join("train.jsonl")
    }

    fn test_path(&self) -> PathBuf {
        self.dir.join("corpus").join("test.jsonl")
    }

    fn table_path(&self, dim: usize) -> PathBuf {
        self.dir.join("embeddings").join(format!("d{dim}.txt"))
    }

    fn actions_path(&self, dim: usize) -> PathBuf {
        self.dir.join("actions").join(format!("d{dim}.json"))
    }

    fn splits_path(&self) -> PathBuf {
        self.dir.join("splits.json")
    }

    pub fn run_dir(&self, dim: usize, split_id: usize) -> PathBuf {
        self.dir.join("runs").join(format!("d{dim}")).join(format!("split{split_id}"))
    }

    pub fn report_path(&self) -> PathBuf {
        self.dir.join("report.csv")
    }

    pub fn comparison_path(&self) -> PathBuf {
        self.dir.join("comparison.json")
    }

    pub fn load_train(&self) -> Result<Corpus> {
        load_corpus(&self.train_path())
    }

    pub fn load_test(&self) -> Result<Corpus> {
        load_corpus(&self.test_path())
    }

    pub fn load_table(&self, dim: usize) -> Result<WordEmbeddingTable> {
        load_embeddings(&self.table_path(dim), dim)
    }

    pub fn load_actions(&self, dim: usize) -> Result<ClusterModel> {
        ClusterModel::load(&self.actions_path(dim))
    }

    pub fn load_splits(&self) -> Result<Vec<DataSplit>> {
        load_splits(&self.splits_path())
    }

    /// Writes the train and test corpora in the line-delimited format.
    pub fn ingest(&self) -> Result<()> {
        let outputs = [self.train_path(), self.test_path()];
        self.stage("ingest", &outputs, || {
            let (train, test) = match &self.cfg.data {
                DataSource::Synthetic(s) => {
                    let w = generate(&SynthConfig { seed: self.cfg.seed, ..*s })?;
                    (w.train, w.test)
                }
                DataSource::Files { train, test, format, .. } => {
                    let read = |p: &Path, prefix: &str| -> Result<Corpus> {
                        match format {
                            CorpusFormat::Jsonl => load_corpus(p),
                            CorpusFormat::Personachat => {
                                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                                Corpus::new(parse_personachat(&text, prefix)?)
                            }
                        }
                    };
                    (read(train, "train")?, read(test, "test")?)
                }
            };
            fs::create_dir_all(self.dir.join("corpus")).map_err(|e| Error::io(self.dir.join("corpus"), e))?;
            train.save_jsonl(&outputs[0])?;
            test.save_jsonl(&outputs[1])
        })
    }

    /// Writes one embedding table per dim, restricted to the corpus
    /// vocabulary.
    pub fn embed(&self) -> Result<()> {
        self.ingest()?;
        let outputs: Vec<PathBuf> = self.cfg.dims.iter().map(|&d| self.table_path(d)).collect();
        self.stage("embed", &outputs, || {
            let (train, test) = (self.load_train()?, self.load_test()?);
            let vocab: BTreeSet<String> = train
                .dialogues()
                .iter()
                .chain(test.dialogues())
                .flat_map(|d| d.texts().flat_map(tokenize).collect::<Vec<_>>())
                .collect();
            for (&dim, out) in self.cfg.dims.iter().zip(&outputs) {
                let full = match &self.cfg.data {
                    DataSource::Synthetic(s) => embedding_table(&SynthConfig {
                        seed: self.cfg.seed,
                        dim,
                        ..*s
                    })?,
                    DataSource::Files { embeddings, .. } => {
                        let src = embeddings.iter().find(|e| e.dim == dim).expect("validated");
                        load_embeddings(&src.path, dim)?
                    }
                };
                let mut table = WordEmbeddingTable::new(dim)?;
                for w in &vocab {
                    if let Some(v) = full.lookup(w) {
                        table.insert(w, v.to_vec())?;
                    }
                }
                if let Some(parent) = out.parent() {
                    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                table.save(out)?;
            }
            Ok(())
        })
    }

    /// Fits the sentence clustering (the action set) per dim on the
    /// training sentences.
    pub fn cluster(&self) -> Result<()> {
        self.embed()?;
        let outputs: Vec<PathBuf> = self.cfg.dims.iter().map(|&d| self.actions_path(d)).collect();
        self.stage("cluster", &outputs, || {
            let train = self.load_train()?;
            for (&dim, out) in self.cfg.dims.iter().zip(&outputs) {
                let table = self.load_table(dim)?;
                let points: Vec<Vec<f64>> = train
                    .dialogues()
                    .iter()
                    .flat_map(|d| d.texts().map(|t| embed_text(t, &table).values).collect::<Vec<_>>())
                    .collect();
                let mut rng = SeededRng::seed_from_u64(self.cfg.seed);
                let model = fit(&points, self.cfg.agent.k, &mut rng, self.cfg.clustering)?;
                if let Some(parent) = out.parent() {
                    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                model.save(out)?;
            }
            Ok(())
        })
    }

    /// Clusters whole training dialogues (first dim's vectors) into splits.
    pub fn split(&self) -> Result<()> {
        self.cluster()?;
        let outputs = [self.splits_path(), self.dir.join("dialogue_clusters.json")];
        self.stage("split", &outputs, || {
            let train = self.load_train()?;
            let table = self.load_table(self.cfg.dims[0])?;
            let points = train
                .dialogues()
                .iter()
                .map(|d| dialogue_vector(d, &table))
                .collect::<Result<Vec<_>>>()?;
            let k = self.cfg.split_k.min(points.len());
            let mut rng = SeededRng::seed_from_u64(self.cfg.seed);
            let model = fit(&points, k, &mut rng, self.cfg.clustering)?;
            model.save(&outputs[1])?;
            save_splits(&split_corpus(&train, &model, &table)?, &outputs[0])
        })
    }

    /// Nonempty splits to train, largest first up to `max_splits`, then
    /// ordered by id.
    pub fn selected_splits(&self) -> Result<Vec<DataSplit>> {
        let mut splits: Vec<DataSplit> = self.load_splits()?.into_iter().filter(|s| !s.dialogue_ids.is_empty()).collect();
        splits.sort_by(|a, b| b.dialogue_ids.len().cmp(&a.dialogue_ids.len()).then(a.split_id.cmp(&b.split_id)));
        if let Some(m) = self.cfg.max_splits {
            splits.truncate(m);
        }
        splits.sort_by_key(|s| s.split_id);
        Ok(splits)
    }

    /// Trains the agent for one (dim, split) and writes its checkpoint and
    /// learning-curve report.
    pub fn train_split(&self, dim: usize, split: &DataSplit) -> Result<()> {
        self.split()?;
        let dir = self.run_dir(dim, split.split_id);
        let outputs = [dir.join("checkpoint.json"), dir.join(REPORT_FILE)];
        let name = format!("train/d{dim}/split{}", split.split_id);
        self.stage(&name, &outputs, || {
            let train_corpus = self.load_train()?;
            let table = self.load_table(dim)?;
            let actions = self.load_actions(dim)?;
            let subset = train_corpus.subset(&split.dialogue_ids)?;
            let cfg = self.cfg.agent_config(dim, split.split_id);
            let env = ChatEnvironment::new(&train_corpus, &table, &actions, cfg.env_config())?;
            let mut agent = Agent::new(cfg)?;
            let report = train(&mut agent, &env, subset.dialogues())?;
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            agent.checkpoint().save(&outputs[0])?;
            write(&outputs[1], serde_json::to_string(&report)? + "\n")?;
            emit_learning_curve(&dir).map(|_| ())
        })
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            seed: self.cfg.seed,
            episodes: None,
            max_steps: Some(self.cfg.agent.test_steps),
        }
    }

    /// Greedy evaluation of one trained run on its split and on the test
    /// corpus. Test candidates use the same seed for every run.
    pub fn eval_split(&self, dim: usize, split: &DataSplit) -> Result<()> {
        self.train_split(dim, split)?;
        let dir = self.run_dir(dim, split.split_id);
        let outputs = [dir.join("eval.json")];
        let name = format!("eval/d{dim}/split{}", split.split_id);
        self.stage(&name, &outputs, || {
            let train_corpus = self.load_train()?;
            let test_corpus = self.load_test()?;
            let table = self.load_table(dim)?;
            let actions = self.load_actions(dim)?;
            let ck = Checkpoint::load(&dir.join("checkpoint.json"))?;
            ck.check_architecture(&self.cfg.agent_config(dim, split.split_id))?;
            let subset = train_corpus.subset(&split.dialogue_ids)?;
            let env_cfg = ck.cfg.env_config();
            let opts = self.eval_options();
            let train_env = ChatEnvironment::new(&train_corpus, &table, &actions, env_cfg)?;
            let test_env = ChatEnvironment::new(&test_corpus, &table, &actions, env_cfg)?;
            let on_train = evaluate(&ck.online, &train_env, subset.dialogues(), opts)?;
            let on_test = evaluate(&ck.online, &test_env, test_corpus.dialogues(), opts)?;
            let mut report: RunReport = read_json(&dir.join(REPORT_FILE))?;
            report.mean_train_eval = Some(on_train.mean_reward);
            report.mean_test_eval = Some(on_test.mean_reward);
            write(&dir.join(REPORT_FILE), serde_json::to_string(&report)? + "\n")?;
            let record = EvalRecord {
                config_hash: self.hash.clone(),
                options: opts,
                on_train,
                on_test,
            };
            write(&outputs[0], serde_json::to_string_pretty(&record)? + "\n")
        })
    }

    /// Final moving average and both greedy evaluations of one run.
    pub fn row_values(&self, dim: usize, split_id: usize) -> Result<RowValues> {
        let dir = self.run_dir(dim, split_id);
        let report: RunReport = read_json(&dir.join(REPORT_FILE))?;
        let eval: EvalRecord = read_json(&dir.join("eval.json"))?;
        Ok(RowValues {
            training: report.final_moving_average().unwrap_or(0.0),
            testing_train: eval.on_train.mean_reward,
            testing_test: eval.on_test.mean_reward,
        })
    }

    /// Bounds for the training columns (whole training corpus) and the
    /// test column (test corpus).
    pub fn bounds(&self) -> Result<(Bounds, Bounds)> {
        let c = self.cfg.agent.candidates;
        Ok((
            baseline_bounds(self.load_train()?.dialogues(), c)?,
            baseline_bounds(self.load_test()?.dialogues(), c)?,
        ))
    }

    /// Trains and evaluates every selected split for every dim, then writes
    /// `report.csv` and, with two or more dims, `comparison.json`.
    pub fn report(&self) -> Result<()> {
        self.split()?;
        let splits = self.selected_splits().map_err(|e| e.in_stage("report"))?;
        for &dim in &self.cfg.dims {
            for s in &splits {
                self.eval_split(dim, s)?;
            }
        }
        let mut outputs = vec![self.report_path()];
        if self.cfg.dims.len() >= 2 {
            outputs.push(self.comparison_path());
        }
        self.stage("report", &outputs, || {
            let mut values: BTreeMap<usize, Vec<RowValues>> = BTreeMap::new();
            for &dim in &self.cfg.dims {
                let rows = splits
                    .iter()
                    .map(|s| self.row_values(dim, s.split_id))
                    .collect::<Result<Vec<_>>>()?;
                values.insert(dim, rows);
            }
            let (train_b, test_b) = self.bounds()?;
            let ids: Vec<usize> = splits.iter().map(|s| s.split_id).collect();
            write(&outputs[0], render_report(&self.cfg.dims, &ids, &values, train_b, test_b))?;
            if self.cfg.dims.len() >= 2 {
                let cmp = ComparisonReport {
                    config_hash: self.hash.clone(),
                    comparisons: compare_dims(self.cfg.dims[0], self.cfg.dims[1], &values),
                };
                write(&outputs[1], serde_json::to_string_pretty(&cmp)? + "\n")?;
            }
            Ok(())
        })
    }

    /// 2-D PCA of the training sentence vectors (or dialogue vectors) for
    /// `dim`, as `x,y` CSV rows in corpus order.
    pub fn projection_csv(&self, dim: usize, dialogues: bool) -> Result<String> {
        self.embed()?;
        let run = || -> Result<String> {
            if !self.cfg.dims.contains(&dim) {
                return Err(Error::invalid(format!("dim {dim} is not configured")));
            }
            let train = self.load_train()?;
            let table = self.load_table(dim)?;
            let points: Vec<Vec<f64>> = if dialogues {
                train.dialogues().iter().map(|d| dialogue_vector(d, &table)).collect::<Result<_>>()?
            } else {
                train
                    .dialogues()
                    .iter()
                    .flat_map(|d| d.texts().map(|t| embed_text(t, &table).values).collect::<Vec<_>>())
                    .collect()
            };
            let mut csv = String::from("x,y\n");
            for p in pca_project(&points, 2.min(dim))? {
                let _ = writeln!(csv, "{},{}", p[0], p.get(1).copied().unwrap_or(0.0));
            }
            Ok(csv)
        };
        run().map_err(|e| e.in_stage("project"))
    }

    /// Reward-predictor study on the ingested corpora with the first dim.
    pub fn predictor_study(&self, out: &Path) -> Result<Vec<StudyRow>> {
        self.embed()?;
        let run = || -> Result<Vec<StudyRow>> {
            let table = self.load_table(self.cfg.dims[0])?;
            let cfg = PredictorConfig {
                seed: self.cfg.seed,
                ..self.cfg.predictor.clone()
            };
            let rows = history_length_study(&self.load_train()?, &self.load_test()?, &table, &cfg)?;
            write_study_csv(&rows, out)?;
            Ok(rows)
        };
        run().map_err(|e| e.in_stage("predict-reward"))
    }
}

const COLUMNS: [&str; 3] = ["training", "testing_train", "testing_test"];

fn pick(v: &RowValues, column: usize) -> f64 {
    [v.training, v.testing_train, v.testing_test][column]
}

/// Table with one row per split, Average and Sum rows, then the Upper,
/// Lower and Random bound rows; three columns per dim.
pub fn render_report(
    dims: &[usize],
    split_ids: &[usize],
    values: &BTreeMap<usize, Vec<RowValues>>,
    train_bounds: Bounds,
    test_bounds: Bounds,
) -> String {
    let mut out = String::from("row");
    for d in dims {
        for c in COLUMNS {
            write!(out, ",{c}_d{d}").expect("string");
        }
    }
    out.push('\n');
    let mut line = |label: &str, cell: &dyn Fn(usize, usize) -> f64| {
        out.push_str(label);
        for &d in dims {
            for c in 0..COLUMNS.len() {
                write!(out, ",{:.4}", cell(d, c)).expect("string");
            }
        }
        out.push('\n');
    };
    for (i, id) in split_ids.iter().enumerate() {
        line(&format!("split-{id}"), &|d, c| pick(&values[&d][i], c));
    }
    let sum = |d: usize, c: usize| values[&d].iter().map(|v| pick(v, c)).sum::<f64>();
    let n = split_ids.len().max(1) as f64;
    line("Average", &|d, c| sum(d, c) / n);
    line("Sum", &sum);
    let bound = |c: usize| if c == 2 { test_bounds } else { train_bounds };
    line("Upper", &|_, c| bound(c).upper);
    line("Lower", &|_, c| bound(c).lower);
    line("Random", &|_, c| bound(c).random);
    out
}

/// Paired Wilcoxon tests of dim `a` against dim `b`, one per column.
pub fn compare_dims(a: usize, b: usize, values: &BTreeMap<usize, Vec<RowValues>>) -> Vec<DimComparison> {
    COLUMNS
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let xs: Vec<f64> = values[&a].iter().map(|v| pick(v, c)).collect();
            let ys: Vec<f64> = values[&b].iter().map(|v| pick(v, c)).collect();
            let (result, note) = match wilcoxon_signed_rank(&xs, &ys) {
                Ok(r) => {
                    let note = (r.n < 5).then(|| format!("only {} nonzero pairs", r.n));
                    (Some(r), note)
                }
                Err(e) => (None, Some(e.to_string())),
            };
            DimComparison {
                column: name.to_string(),
                dim_a: a,
                dim_b: b,
                result,
                note,
            }
        })
        .collect()
}

/// Full pipeline: ingest, embed, cluster, split, train, evaluate, report.
pub fn run_experiment(cfg: ExperimentConfig) -> Result<PathBuf> {
    let exp = Experiment::open(cfg)?;
    exp.report()?;
    Ok(exp.dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::toy();
        cfg.output_dir = dir.to_path_buf();
        cfg.dims = vec![8, 12];
        cfg.data = DataSource::Synthetic(SynthConfig {
            train_dialogues: 30,
            test_dialogues: 10,
            ..SynthConfig::default()
        });
        cfg.agent.hidden_dim = 8;
        cfg.agent.learn_steps = 200;
        cfg.agent.burn_in = 50;
        cfg.agent.batch_size = 8;
        cfg.agent.target_sync_period = 100;
        cfg
    }

    #[test]
    fn config_round_trips_and_seed_override() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::toy();
        let path = dir.path().join("c.json");
        cfg.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        for key in ["\"gamma\"", "\"burn_in\"", "\"memory_size\"", "\"target_sync_period\"", "\"learn_steps\"", "\"test_steps\""] {
            assert!(text.contains(key), "{key}");
        }
        let mut c = cfg.clone();
        c.apply_seed_override(Some("42")).unwrap();
        assert_eq!(c.seed, 42);
        c.apply_seed_override(None).unwrap();
        assert_eq!(c.seed, 42);
        assert!(c.apply_seed_override(Some("x")).is_err());
        assert_ne!(c.hash(), cfg.hash());
    }

    #[test]
    fn missing_input_files_are_rejected() {
        let mut cfg = ExperimentConfig::toy();
        cfg.data = DataSource::Files {
            train: "/nonexistent/train.jsonl".into(),
            test: "/nonexistent/test.jsonl".into(),
            format: CorpusFormat::Jsonl,
            embeddings: vec![],
        };
        assert!(cfg.validate().is_err());
        let bad_version = ExperimentConfig {
            version: 9,
            ..ExperimentConfig::toy()
        };
        assert!(bad_version.validate().is_err());
    }

    #[test]
    fn report_shape_bounds_and_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let out = run_experiment(cfg.clone()).unwrap();
        let exp = Experiment::open(cfg.clone()).unwrap();
        let csv = fs::read_to_string(exp.report_path()).unwrap();
        let rows: Vec<&str> = csv.lines().map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(rows.len(), 1 + 2 + 2 + 3);
        assert_eq!(&rows[3..], ["Average", "Sum", "Upper", "Lower", "Random"]);
        let random: Vec<f64> = csv.lines().last().unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        let (tb, sb) = exp.bounds().unwrap();
        assert_eq!(random[0], format!("{:.4}", tb.random).parse::<f64>().unwrap());
        assert_eq!(random[2], format!("{:.4}", sb.random).parse::<f64>().unwrap());
        assert!(exp.comparison_path().exists());

        // completed stages are skipped; outputs stay byte-identical
        let before = fs::read(exp.report_path()).unwrap();
        let ck = exp.run_dir(8, exp.selected_splits().unwrap()[0].split_id).join("checkpoint.json");
        let stamp = fs::metadata(&ck).unwrap().modified().unwrap();
        run_experiment(cfg.clone()).unwrap();
        assert_eq!(fs::metadata(&ck).unwrap().modified().unwrap(), stamp);
        assert_eq!(fs::read(exp.report_path()).unwrap(), before);

        // a fresh directory with the same seed reproduces every byte
        let other = tempfile::tempdir().unwrap();
        let cfg2 = ExperimentConfig {
            output_dir: other.path().to_path_buf(),
            ..cfg
        };
        run_experiment(cfg2).unwrap();
        assert_eq!(fs::read(other.path().join("report.csv")).unwrap(), before);
        assert_eq!(fs::read(other.path().join("comparison.json")).unwrap(), fs::read(out.join("comparison.json")).unwrap());
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.agent.k = 10_000;
        let err = run_experiment(cfg).unwrap_err();
        assert!(err.to_string().starts_with("stage cluster failed"), "{err}");
    }
}
