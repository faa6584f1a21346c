//! Command-line interface.
//!
//! Every subcommand takes its settings from an optional JSON config file
//! whose keys are the long flag names; flags given on the command line
//! override file values. Each output document carries the resolved config
//! and a SHA-256 hash of the input files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::attribution::{
    exact_asv, exact_shapley_subset_form, global_asv, mc_asv, point_seed, AttributionResult, GlobalConfig, Method,
};
use crate::data::{Dataset, Schema};
use crate::error::{AsvError, Result};
use crate::models::{evaluate, train, BayesPredictor, Metrics, Model, NetworkKind, TrainConfig, TrainReport};
use crate::ordering::{OrderingSpec, WeightedOrdering, DEFAULT_ENUMERATION_CAP};
use crate::rng::{stream, STREAM_PERMUTATIONS};
use crate::scenarios::{
    admissions_summary, generate, run_fairness_audit, run_feature_selection_study, AdmissionsSummary,
    FeatureSelectionConfig, GenerativeProcess, GraphKind, MarkovConfig, ProcessSpec,
};
use crate::value::{CacheStats, ClassChoice, Explainer, Marginalizer, Strategy, ValueConfig, ValueFunction};

/// Exit status for a failed oracle check.
pub const EXIT_ORACLE_FAILURE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "asv", version, about = "Asymmetric Shapley value attributions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic dataset: data.csv, schema.json and manifest.json.
    GenData(GenDataArgs),
    /// Train a model and report its accuracy.
    Train(TrainArgs),
    /// Attribute a model's output for one row or the whole dataset.
    Explain(ExplainArgs),
    /// Audit a model for unresolved discrimination.
    Fairness(FairnessArgs),
    /// Compare cumulative attributions with retrained-model accuracy gains.
    Featselect(FeatselectArgs),
    /// Cross-check the exact and sampled estimators on random games.
    OracleCheck(OracleArgs),
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn default_workers() -> usize {
    std::env::var("ASV_WORKERS")
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&w: &usize| w > 0)
        .unwrap_or(1)
}

fn default_k() -> usize {
    10
}
fn default_samples() -> usize {
    100
}
fn default_cap() -> usize {
    DEFAULT_ENUMERATION_CAP
}
fn default_permutations() -> usize {
    1000
}
fn default_rows() -> usize {
    10_000
}
fn default_steps() -> usize {
    12
}
fn default_test_fraction() -> f64 {
    0.25
}
fn default_trials() -> usize {
    5
}
fn default_games() -> usize {
    50
}
fn default_oracle_n() -> usize {
    6
}
fn default_oracle_permutations() -> usize {
    10_000
}
fn default_tolerance() -> f64 {
    1e-9
}

/// Overlays non-empty flag values on the config file and deserialises the
/// result.
fn resolve<A: Serialize, R: DeserializeOwned>(flags: &A, config: Option<&Path>) -> Result<R> {
    let mut merged = match config {
        Some(path) => match serde_json::from_str(&fs::read_to_string(path)?)? {
            Value::Object(map) => map,
            _ => return Err(AsvError::InvalidArgument("config file must hold a JSON object".into())),
        },
        None => Map::new(),
    };
    if let Value::Object(map) = serde_json::to_value(flags)? {
        for (k, v) in map {
            if !(v.is_null() || v == Value::Bool(false)) {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| AsvError::InvalidArgument(format!("invalid configuration: {e}")))
}

struct InputHasher(Sha256);

impl InputHasher {
    fn new() -> Self {
        Self(Sha256::new())
    }

    fn file(mut self, label: &str, path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| {
            AsvError::InvalidArgument(format!("cannot read {label} file {}: {e}", path.display()))
        })?;
        self.0.update(label.as_bytes());
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(&bytes);
        Ok(self)
    }

    fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, T: Serialize> {
    command: &'a str,
    config: &'a C,
    input_hash: String,
    result: &'a T,
}

fn render<C: Serialize, T: Serialize>(command: &str, config: &C, input_hash: String, result: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Envelope {
        command,
        config,
        input_hash,
        result,
    })?;
    s.push('\n');
    Ok(s)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn sibling(data: &Path, name: &str) -> PathBuf {
    data.parent().unwrap_or(Path::new(".")).join(name)
}

fn schema_path(data: &Path, schema: &Option<PathBuf>) -> PathBuf {
    schema.clone().unwrap_or_else(|| sibling(data, "schema.json"))
}

fn load_dataset(data: &Path, schema: &Option<PathBuf>) -> Result<(Dataset, PathBuf)> {
    let spath = schema_path(data, schema);
    if !spath.exists() {
        return Err(AsvError::Schema(format!("schema file {} not found", spath.display())));
    }
    let schema = Arc::new(Schema::read(&spath)?);
    Ok((Dataset::read_csv(data, schema)?, spath))
}

/// The generating process recorded by `gen-data`, if a manifest exists.
fn load_manifest(data: &Path, manifest: &Option<PathBuf>) -> Result<Option<(GenDataResult, PathBuf)>> {
    let path = match manifest {
        Some(p) => p.clone(),
        None => {
            let p = sibling(data, "manifest.json");
            if !p.exists() {
                return Ok(None);
            }
            p
        }
    };
    let doc: Value = serde_json::from_str(&fs::read_to_string(&path)?)?;
    let result = doc
        .get("result")
        .cloned()
        .ok_or_else(|| AsvError::InvalidArgument(format!("{} is not a gen-data manifest", path.display())))?;
    Ok(Some((serde_json::from_value(result)?, path)))
}

// ---------------------------------------------------------------- gen-data

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    FairAdmissions,
    UnfairAdmissions,
    Chain,
    Collider,
    Mixed,
    Markov,
    Xor,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GenDataArgs {
    /// fair-admissions, unfair-admissions, chain, collider, mixed, markov or xor.
    #[arg(value_parser = parse_enum::<Scenario>)]
    scenario: Option<Scenario>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of steps of the markov scenario.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    steps: Option<usize>,
    #[arg(long)]
    ar: Option<f64>,
    #[arg(long)]
    shift: Option<f64>,
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct GenDataConfig {
    scenario: Scenario,
    #[serde(default = "default_rows")]
    rows: usize,
    seed: u64,
    out: PathBuf,
    #[serde(rename = "T", default = "default_steps")]
    steps: usize,
    #[serde(default)]
    ar: Option<f64>,
    #[serde(default)]
    shift: Option<f64>,
    #[serde(default)]
    decay: Option<f64>,
    #[serde(default)]
    noise_sd: Option<f64>,
}

impl GenDataConfig {
    fn process(&self) -> ProcessSpec {
        match self.scenario {
            Scenario::FairAdmissions => ProcessSpec::FairAdmissions,
            Scenario::UnfairAdmissions => ProcessSpec::UnfairAdmissions,
            Scenario::Chain => ProcessSpec::TwoFeature { graph: GraphKind::Chain },
            Scenario::Collider => ProcessSpec::TwoFeature { graph: GraphKind::Collider },
            Scenario::Mixed => ProcessSpec::TwoFeature { graph: GraphKind::Mixed },
            Scenario::Markov => {
                let d = MarkovConfig::default();
                ProcessSpec::Markov(MarkovConfig {
                    steps: self.steps,
                    ar: self.ar.unwrap_or(d.ar),
                    shift: self.shift.unwrap_or(d.shift),
                    decay: self.decay.unwrap_or(d.decay),
                    noise_sd: self.noise_sd.unwrap_or(d.noise_sd),
                })
            }
            Scenario::Xor => ProcessSpec::Xor,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenDataResult {
    pub process: ProcessSpec,
    pub rows: usize,
    pub bayes_accuracy: f64,
    pub files: Vec<String>,
    pub hidden_columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admissions: Option<AdmissionsSummary>,
}

fn cmd_gen_data(args: &GenDataArgs) -> Result<()> {
    let cfg: GenDataConfig = resolve(args, args.config.as_deref())?;
    let spec = cfg.process();
    let process = spec.build()?;
    let generated = generate(process.as_ref(), cfg.rows, cfg.seed)?;
    fs::create_dir_all(&cfg.out)?;
    let mut files = vec!["data.csv".to_string(), "schema.json".to_string()];
    generated.dataset.write_csv(&cfg.out.join("data.csv"))?;
    generated.dataset.schema().write(&cfg.out.join("schema.json"))?;
    if !generated.hidden_names.is_empty() {
        let mut w = csv::Writer::from_path(cfg.out.join("audit.csv"))?;
        let mut header = vec!["row".to_string()];
        header.extend(generated.hidden_names.iter().cloned());
        w.write_record(&header)?;
        for (r, h) in generated.hidden.iter().enumerate() {
            let mut rec = vec![r.to_string()];
            rec.extend(h.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        files.push("audit.csv".into());
    }
    let admissions = match spec {
        ProcessSpec::FairAdmissions | ProcessSpec::UnfairAdmissions => Some(admissions_summary(&generated.dataset)?),
        _ => None,
    };
    let result = GenDataResult {
        process: spec,
        rows: cfg.rows,
        bayes_accuracy: process.bayes_accuracy(),
        files,
        hidden_columns: generated.hidden_names.clone(),
        admissions,
    };
    let hash = InputHasher::new().finish();
    let text = render("gen-data", &cfg, hash, &result)?;
    fs::write(cfg.out.join("manifest.json"), &text)?;
    emit(None, &text)
}

// ------------------------------------------------------------------- train

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    Logistic,
    Mlp,
    Bayes,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    /// Training CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Schema JSON; defaults to schema.json next to the data.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// gen-data manifest; defaults to manifest.json next to the data.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// logistic, mlp or bayes.
    #[arg(long, value_parser = parse_enum::<ModelChoice>)]
    model: Option<ModelChoice>,
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the model JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the metrics JSON; stdout if absent.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct TrainCliConfig {
    data: PathBuf,
    #[serde(default)]
    schema: Option<PathBuf>,
    #[serde(default)]
    manifest: Option<PathBuf>,
    model: ModelChoice,
    seed: u64,
    out: PathBuf,
    #[serde(default)]
    metrics: Option<PathBuf>,
    #[serde(default = "default_test_fraction")]
    test_fraction: f64,
    #[serde(default)]
    hidden: Option<Vec<usize>>,
    #[serde(default)]
    learning_rate: Option<f64>,
    #[serde(default)]
    momentum: Option<f64>,
    #[serde(default)]
    batch_size: Option<usize>,
    #[serde(default)]
    max_epochs: Option<usize>,
    #[serde(default)]
    patience: Option<usize>,
    #[serde(default)]
    validation_fraction: Option<f64>,
    #[serde(default)]
    l2: Option<f64>,
}

impl TrainCliConfig {
    fn training(&self, kind: NetworkKind) -> TrainConfig {
        let d = TrainConfig::new(kind, self.seed);
        TrainConfig {
            hidden: self.hidden.clone().unwrap_or(d.hidden),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            momentum: self.momentum.unwrap_or(d.momentum),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
            patience: self.patience.unwrap_or(d.patience),
            validation_fraction: self.validation_fraction.unwrap_or(d.validation_fraction),
            l2: self.l2.unwrap_or(d.l2),
            ..d
        }
    }
}

#[derive(Serialize)]
struct TrainResult {
    model: ModelChoice,
    training: Option<TrainConfig>,
    report: Option<TrainReport>,
    train: Metrics,
    test: Metrics,
    bayes_accuracy: Option<f64>,
    warnings: Vec<String>,
}

/// Test accuracy this far below the Bayes rate triggers a warning.
const BELOW_BAYES_MARGIN: f64 = 0.02;

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg: TrainCliConfig = resolve(args, args.config.as_deref())?;
    let (data, spath) = load_dataset(&cfg.data, &cfg.schema)?;
    let manifest = load_manifest(&cfg.data, &cfg.manifest)?;
    if !(0.0..1.0).contains(&cfg.test_fraction) || cfg.test_fraction == 0.0 {
        return Err(AsvError::InvalidArgument("test-fraction must be in (0, 1)".into()));
    }
    let (train_set, test_set) = data.split(1.0 - cfg.test_fraction, cfg.seed)?;
    let (model, training, report) = match cfg.model {
        ModelChoice::Bayes => {
            let (m, _) = manifest
                .as_ref()
                .ok_or_else(|| AsvError::InvalidArgument("a Bayes model needs the gen-data manifest".into()))?;
            let model = Model::Bayes(BayesPredictor::new(m.process.build()?));
            model.check_schema(data.schema())?;
            (model, None, None)
        }
        choice => {
            let kind = if choice == ModelChoice::Logistic { NetworkKind::Logistic } else { NetworkKind::Mlp };
            let tcfg = cfg.training(kind);
            let (m, report) = train(&train_set, &tcfg)?;
            (Model::Network(m), Some(tcfg), Some(report))
        }
    };
    let test = evaluate(&model, &test_set)?;
    let bayes_accuracy = manifest.as_ref().map(|(m, _)| m.bayes_accuracy);
    let mut warnings = Vec::new();
    if let Some(bayes) = bayes_accuracy {
        if test.max_class_accuracy < bayes - BELOW_BAYES_MARGIN {
            let msg = format!(
                "below-Bayes accuracy: test accuracy {:.4} is more than {BELOW_BAYES_MARGIN} under the Bayes accuracy {:.4} of the generating process",
                test.max_class_accuracy, bayes
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    model.save(&cfg.out)?;
    let result = TrainResult {
        model: cfg.model,
        training,
        report,
        train: evaluate(&model, &train_set)?,
        test,
        bayes_accuracy,
        warnings,
    };
    let mut hasher = InputHasher::new().file("data", &cfg.data)?.file("schema", &spath)?;
    if let Some((_, mpath)) = &manifest {
        hasher = hasher.file("manifest", mpath)?;
    }
    emit(cfg.metrics.as_deref(), &render("train", &cfg, hasher.finish(), &result)?)
}

// ---------------------------------------------------------------- explain

/// Value-function flags shared by the attribution commands.
#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ValueArgs {
    /// off-manifold, exact-match, knn, empirical or generative.
    #[arg(long, value_parser = parse_enum::<Strategy>)]
    strategy: Option<Strategy>,
    /// Neighbours for k-NN conditionals.
    #[arg(long)]
    k: Option<usize>,
    /// Marginalisation samples per coalition.
    #[arg(long)]
    samples: Option<usize>,
    /// Class to explain: true-label or argmax.
    #[arg(long, value_parser = parse_enum::<ClassChoice>)]
    class: Option<ClassChoice>,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExplainArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Ordering spec JSON, or `uniform` / `chain`.
    #[arg(long)]
    spec: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    value: ValueArgs,
    /// Enumerate every consistent ordering instead of sampling.
    #[arg(long)]
    exact: bool,
    /// Orderings sampled per data point.
    #[arg(long)]
    permutations: Option<usize>,
    /// Explain a single row.
    #[arg(long)]
    row: Option<usize>,
    /// Average local explanations over the dataset.
    #[arg(long)]
    global: bool,
    /// Maximum number of rows a global run visits.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Largest feature count for exact enumeration.
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of local attributions for a global run.
    #[arg(long)]
    local_csv: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

fn default_off_manifold() -> Strategy {
    Strategy::OffManifold
}
fn default_empirical() -> Strategy {
    Strategy::Empirical
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ExplainConfig {
    model: PathBuf,
    data: PathBuf,
    #[serde(default)]
    schema: Option<PathBuf>,
    #[serde(default)]
    manifest: Option<PathBuf>,
    spec: String,
    seed: u64,
    #[serde(default = "default_off_manifold")]
    strategy: Strategy,
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default = "default_samples")]
    samples: usize,
    #[serde(default)]
    class: ClassChoice,
    #[serde(default)]
    exact: bool,
    #[serde(default = "default_permutations")]
    permutations: usize,
    #[serde(default)]
    row: Option<usize>,
    #[serde(default)]
    global: bool,
    #[serde(default)]
    budget: Option<usize>,
    #[serde(default = "default_workers")]
    workers: usize,
    #[serde(default = "default_cap")]
    cap: usize,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    local_csv: Option<PathBuf>,
}

/// Feature reference in a spec file: a column name or an index.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum FeatureRef {
    Index(usize),
    Name(String),
}

impl FeatureRef {
    fn resolve(&self, schema: &Schema) -> Result<usize> {
        match self {
            FeatureRef::Index(i) if *i < schema.n_features() => Ok(*i),
            FeatureRef::Index(i) => Err(AsvError::Schema(format!(
                "feature index {i} out of range for {} features",
                schema.n_features()
            ))),
            FeatureRef::Name(n) => schema.feature_index(n),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    groups: Vec<Vec<FeatureRef>>,
    #[serde(default)]
    edges: Vec<(FeatureRef, FeatureRef)>,
    #[serde(default)]
    direction: crate::ordering::Direction,
}

/// Reads an ordering spec whose features are given by name or index.
pub fn parse_spec_file(text: &str, schema: &Schema) -> Result<OrderingSpec> {
    let raw: SpecFile = serde_json::from_str(text)
        .map_err(|e| AsvError::InvalidSpec(format!("cannot parse ordering spec: {e}")))?;
    let n = schema.n_features();
    if let Some(m) = raw.n {
        if m != n {
            return Err(AsvError::Schema(format!("spec declares {m} features, schema has {n}")));
        }
    }
    let groups = raw
        .groups
        .iter()
        .map(|g| g.iter().map(|f| f.resolve(schema)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let edges = raw
        .edges
        .iter()
        .map(|(a, b)| Ok((a.resolve(schema)?, b.resolve(schema)?)))
        .collect::<Result<Vec<_>>>()?;
    let weighted = WeightedOrdering {
        spec: OrderingSpec::new(n, groups, edges)?,
        direction: raw.direction,
    };
    Ok(weighted.resolve())
}

fn load_spec(spec: &str, schema: &Schema) -> Result<(OrderingSpec, Option<PathBuf>)> {
    let path = PathBuf::from(spec);
    if path.exists() {
        return Ok((parse_spec_file(&fs::read_to_string(&path)?, schema)?, Some(path)));
    }
    match spec {
        "uniform" => Ok((OrderingSpec::uniform(schema.n_features())?, None)),
        "chain" => Ok((OrderingSpec::chain(schema.n_features())?, None)),
        _ => Err(AsvError::InvalidArgument(format!("ordering spec file {spec} not found"))),
    }
}

struct Loaded {
    data: Arc<Dataset>,
    model: Model,
    process: Option<Arc<dyn GenerativeProcess>>,
    hasher: InputHasher,
}

fn load_inputs(model: &Path, data: &Path, schema: &Option<PathBuf>, manifest: &Option<PathBuf>) -> Result<Loaded> {
    let (dataset, spath) = load_dataset(data, schema)?;
    let m = Model::load(model)?;
    m.check_schema(dataset.schema())?;
    let mut hasher = InputHasher::new()
        .file("model", model)?
        .file("data", data)?
        .file("schema", &spath)?;
    let process = match load_manifest(data, manifest)? {
        Some((mf, mpath)) => {
            hasher = hasher.file("manifest", &mpath)?;
            Some(mf.process.build()?)
        }
        None => None,
    };
    Ok(Loaded {
        data: Arc::new(dataset),
        model: m,
        process,
        hasher,
    })
}

#[derive(Serialize)]
struct LocalExplanation {
    row: usize,
    label: usize,
    class: usize,
    feature_names: Vec<String>,
    attribution: AttributionResult,
    cache: CacheStats,
}

#[derive(Serialize)]
struct SumRule {
    attribution_sum: f64,
    accuracy_gain: f64,
    gap: f64,
}

#[derive(Serialize)]
struct GlobalExplanation {
    attribution: crate::attribution::GlobalAttribution,
    sum_rule: SumRule,
}

fn cmd_explain(args: &ExplainArgs) -> Result<()> {
    let cfg: ExplainConfig = resolve(args, args.config.as_deref())?;
    let loaded = load_inputs(&cfg.model, &cfg.data, &cfg.schema, &cfg.manifest)?;
    let (spec, spec_path) = load_spec(&cfg.spec, loaded.data.schema())?;
    let mut hasher = loaded.hasher;
    if let Some(p) = &spec_path {
        hasher = hasher.file("spec", p)?;
    }
    let vcfg = ValueConfig {
        strategy: cfg.strategy,
        k: cfg.k,
        samples: cfg.samples,
        seed: cfg.seed,
        class: cfg.class,
    };
    let marg = Marginalizer::from_config(&vcfg, Arc::clone(&loaded.data), loaded.process.clone())?;
    let explainer = Explainer::new(&loaded.model, &marg, &vcfg);
    let data = &loaded.data;
    let text = match (cfg.row, cfg.global) {
        (Some(row), false) => {
            if row >= data.len() {
                return Err(AsvError::IndexOutOfRange { index: row, n: data.len() });
            }
            let x = data.row(row);
            let class = explainer.class_for(x, data.label(row));
            let ps = point_seed(cfg.seed, row);
            let mut v = explainer.value_fn(x, class, ps);
            let attribution = if cfg.exact {
                exact_asv(&mut v, &spec, cfg.cap)?
            } else {
                mc_asv(&mut v, &spec, cfg.permutations, &mut stream(ps, STREAM_PERMUTATIONS))?
            };
            let result = LocalExplanation {
                row,
                label: data.label(row),
                class,
                feature_names: data.schema().feature_names(),
                attribution,
                cache: v.stats(),
            };
            render("explain", &cfg, hasher.finish(), &result)?
        }
        (None, true) => {
            let gcfg = GlobalConfig {
                method: if cfg.exact { Method::Exact } else { Method::MonteCarlo },
                permutations: cfg.permutations,
                budget: cfg.budget,
                workers: cfg.workers,
                enumeration_cap: cfg.cap,
            };
            let global = global_asv(&explainer, data, &spec, &gcfg)?;
            if let Some(path) = &cfg.local_csv {
                write_local_csv(path, &global)?;
            }
            let sum_rule = SumRule {
                attribution_sum: global.sum(),
                accuracy_gain: global.accuracy_gain(),
                gap: (global.sum() - global.accuracy_gain()).abs(),
            };
            render("explain", &cfg, hasher.finish(), &GlobalExplanation { attribution: global, sum_rule })?
        }
        _ => return Err(AsvError::InvalidArgument("give exactly one of --row or --global".into())),
    };
    emit(cfg.out.as_deref(), &text)
}

fn write_local_csv(path: &Path, global: &crate::attribution::GlobalAttribution) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["row".to_string()];
    header.extend(global.feature_names.iter().cloned());
    w.write_record(&header)?;
    for (r, values) in global.rows.iter().zip(&global.local) {
        let mut rec = vec![r.to_string()];
        rec.extend(values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

// --------------------------------------------------------------- fairness

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FairnessArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Resolving features, comma separated.
    #[arg(long, value_delimiter = ',')]
    resolving: Option<Vec<String>>,
    /// Sensitive features, comma separated.
    #[arg(long, value_delimiter = ',')]
    sensitive: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    value: ValueArgs,
    /// Orderings sampled per data point when the feature count exceeds the cap.
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct FairnessConfig {
    model: PathBuf,
    data: PathBuf,
    #[serde(default)]
    schema: Option<PathBuf>,
    #[serde(default)]
    manifest: Option<PathBuf>,
    #[serde(default)]
    resolving: Vec<String>,
    sensitive: Vec<String>,
    seed: u64,
    #[serde(default = "default_empirical")]
    strategy: Strategy,
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default = "default_samples")]
    samples: usize,
    #[serde(default)]
    class: ClassChoice,
    #[serde(default = "default_permutations")]
    permutations: usize,
    #[serde(default)]
    budget: Option<usize>,
    #[serde(default = "default_workers")]
    workers: usize,
    #[serde(default = "default_cap")]
    cap: usize,
    #[serde(default)]
    out: Option<PathBuf>,
}

fn cmd_fairness(args: &FairnessArgs) -> Result<()> {
    let cfg: FairnessConfig = resolve(args, args.config.as_deref())?;
    let loaded = load_inputs(&cfg.model, &cfg.data, &cfg.schema, &cfg.manifest)?;
    let schema = loaded.data.schema();
    let names = |v: &[String]| v.iter().map(|n| schema.feature_index(n)).collect::<Result<Vec<_>>>();
    let resolving = names(&cfg.resolving)?;
    let sensitive = names(&cfg.sensitive)?;
    let vcfg = ValueConfig {
        strategy: cfg.strategy,
        k: cfg.k,
        samples: cfg.samples,
        seed: cfg.seed,
        class: cfg.class,
    };
    let marg = Marginalizer::from_config(&vcfg, Arc::clone(&loaded.data), loaded.process.clone())?;
    let explainer = Explainer::new(&loaded.model, &marg, &vcfg);
    let gcfg = GlobalConfig {
        method: if schema.n_features() <= cfg.cap { Method::Exact } else { Method::MonteCarlo },
        permutations: cfg.permutations,
        budget: cfg.budget,
        workers: cfg.workers,
        enumeration_cap: cfg.cap,
    };
    let report = run_fairness_audit(&explainer, &loaded.data, &resolving, &sensitive, &gcfg)?;
    emit(cfg.out.as_deref(), &render("fairness", &cfg, loaded.hasher.finish(), &report)?)
}

// -------------------------------------------------------------- featselect

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FeatselectArgs {
    /// Dataset CSV; without it a markov dataset is generated.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Rows of the generated markov dataset.
    #[arg(long)]
    rows: Option<usize>,
    /// Steps of the generated markov dataset.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    steps: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// logistic or mlp.
    #[arg(long, value_parser = parse_enum::<ModelChoice>)]
    model: Option<ModelChoice>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    value: ValueArgs,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of per-trial accuracy gains.
    #[arg(long)]
    trials_csv: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

fn default_logistic() -> ModelChoice {
    ModelChoice::Logistic
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct FeatselectConfig {
    #[serde(default)]
    data: Option<PathBuf>,
    #[serde(default)]
    schema: Option<PathBuf>,
    #[serde(default)]
    manifest: Option<PathBuf>,
    #[serde(default = "default_rows")]
    rows: usize,
    #[serde(rename = "T", default = "default_steps")]
    steps: usize,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default = "default_logistic")]
    model: ModelChoice,
    seed: u64,
    #[serde(default)]
    strategy: Option<Strategy>,
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default = "default_samples")]
    samples: usize,
    #[serde(default)]
    class: ClassChoice,
    #[serde(default)]
    budget: Option<usize>,
    #[serde(default = "default_workers")]
    workers: usize,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    trials_csv: Option<PathBuf>,
}

fn cmd_featselect(args: &FeatselectArgs) -> Result<()> {
    let cfg: FeatselectConfig = resolve(args, args.config.as_deref())?;
    let kind = match cfg.model {
        ModelChoice::Logistic => NetworkKind::Logistic,
        ModelChoice::Mlp => NetworkKind::Mlp,
        ModelChoice::Bayes => {
            return Err(AsvError::InvalidArgument("featselect retrains models; choose logistic or mlp".into()))
        }
    };
    let (data, process, hasher) = match &cfg.data {
        Some(path) => {
            let (d, spath) = load_dataset(path, &cfg.schema)?;
            let mut hasher = InputHasher::new().file("data", path)?.file("schema", &spath)?;
            let process = match load_manifest(path, &cfg.manifest)? {
                Some((m, mpath)) => {
                    hasher = hasher.file("manifest", &mpath)?;
                    Some(m.process.build()?)
                }
                None => None,
            };
            (d, process, hasher)
        }
        None => {
            let p = ProcessSpec::Markov(MarkovConfig::with_steps(cfg.steps)).build()?;
            let d = generate(p.as_ref(), cfg.rows, cfg.seed)?.dataset;
            (d, Some(p), InputHasher::new())
        }
    };
    let strategy = cfg.strategy.unwrap_or(if process.is_some() { Strategy::Generative } else { Strategy::Empirical });
    let study_cfg = FeatureSelectionConfig {
        trials: cfg.trials,
        train: TrainConfig::new(kind, cfg.seed),
        value: ValueConfig {
            strategy,
            k: cfg.k,
            samples: cfg.samples,
            seed: cfg.seed,
            class: cfg.class,
        },
        test_fraction: default_test_fraction(),
        budget: cfg.budget,
        workers: cfg.workers,
    };
    let study = run_feature_selection_study(&data, process, &study_cfg)?;
    if let Some(path) = &cfg.trials_csv {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "feature", "trial", "accuracy_gain", "cumulative_asv", "cumulative_asv_stderr"])?;
        for s in &study.steps {
            for (k, g) in s.trial_gains.iter().enumerate() {
                w.write_record([
                    s.t.to_string(),
                    s.feature.clone(),
                    k.to_string(),
                    g.to_string(),
                    s.cumulative_asv.value.to_string(),
                    s.cumulative_asv.stderr.to_string(),
                ])?;
            }
        }
        w.flush()?;
    }
    #[derive(Serialize)]
    struct Echo<'a> {
        #[serde(flatten)]
        cli: &'a FeatselectConfig,
        study: &'a FeatureSelectionConfig,
    }
    let echo = Echo {
        cli: &cfg,
        study: &study_cfg,
    };
    emit(cfg.out.as_deref(), &render("featselect", &echo, hasher.finish(), &study)?)
}

// ------------------------------------------------------------ oracle-check

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct OracleArgs {
    /// Features per game.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    games: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Orderings sampled per game for the Monte Carlo check.
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct OracleConfig {
    #[serde(default = "default_oracle_n")]
    n: usize,
    #[serde(default = "default_games")]
    games: usize,
    seed: u64,
    #[serde(default = "default_oracle_permutations")]
    permutations: usize,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
    #[serde(default)]
    out: Option<PathBuf>,
}

/// Outcome of the estimator cross-checks on random games.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub games: usize,
    pub n: usize,
    /// Largest gap between ordering enumeration and the subset formula.
    pub dual_formula_max_gap: f64,
    /// Largest `|Σφ − (v(N) − v({}))|` over exact runs with random specs.
    pub efficiency_max_gap: f64,
    /// Feature-game pairs where sampling lands within 4 stderr of exact.
    pub monte_carlo_within: usize,
    pub monte_carlo_pairs: usize,
    pub dual_formula_pass: bool,
    pub efficiency_pass: bool,
    pub monte_carlo_pass: bool,
    pub pass: bool,
}

/// Runs the dual-formula, efficiency and sampling-versus-enumeration checks.
pub fn oracle_suite(n: usize, games: usize, seed: u64, permutations: usize, tolerance: f64) -> Result<OracleReport> {
    use rand::Rng;
    if n == 0 || n > DEFAULT_ENUMERATION_CAP {
        return Err(AsvError::InvalidArgument(format!(
            "n must be in 1..={DEFAULT_ENUMERATION_CAP}"
        )));
    }
    let mut dual = 0.0f64;
    let mut eff = 0.0f64;
    let mut within = 0;
    let mut pairs = 0;
    for g in 0..games {
        let mut rng = stream(seed, g as u64);
        let mut game = crate::value::TableGame::from_fn(n, |_| rng.random_range(-1.0..1.0));
        let uniform = OrderingSpec::uniform(n)?;
        let a = exact_asv(&mut game, &uniform, n)?;
        let b = exact_shapley_subset_form(&mut game, n)?;
        for (x, y) in a.values.iter().zip(&b.values) {
            dual = dual.max((x.value - y.value).abs());
        }
        let spec = OrderingSpec::random(n, &mut rng)?;
        let exact = exact_asv(&mut game, &spec, n)?;
        eff = eff.max((exact.sum() - (game.value(crate::Coalition::full(n))? - game.value(crate::Coalition::empty(n))?)).abs());
        let mc = mc_asv(&mut game, &spec, permutations, &mut rng)?;
        for (m, e) in mc.values.iter().zip(&exact.values) {
            pairs += 1;
            if (m.value - e.value).abs() <= 4.0 * m.stderr + tolerance {
                within += 1;
            }
        }
    }
    let dual_formula_pass = dual <= tolerance;
    let efficiency_pass = eff <= tolerance;
    let monte_carlo_pass = within as f64 >= 0.99 * pairs as f64;
    Ok(OracleReport {
        games,
        n,
        dual_formula_max_gap: dual,
        efficiency_max_gap: eff,
        monte_carlo_within: within,
        monte_carlo_pairs: pairs,
        dual_formula_pass,
        efficiency_pass,
        monte_carlo_pass,
        pass: dual_formula_pass && efficiency_pass && monte_carlo_pass,
    })
}

fn cmd_oracle_check(args: &OracleArgs) -> Result<bool> {
    let cfg: OracleConfig = resolve(args, args.config.as_deref())?;
    let report = oracle_suite(cfg.n, cfg.games, cfg.seed, cfg.permutations, cfg.tolerance)?;
    emit(cfg.out.as_deref(), &render("oracle-check", &cfg, InputHasher::new().finish(), &report)?)?;
    Ok(report.pass)
}

/// Runs a parsed command and maps failures to exit codes: 2 for invalid
/// input, 3 for estimator failures, 4 for a failed oracle check.
pub fn run(cli: Cli) -> ExitCode {
    let outcome = match &cli.command {
        Command::GenData(a) => cmd_gen_data(a).map(|_| true),
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Explain(a) => cmd_explain(a).map(|_| true),
        Command::Fairness(a) => cmd_fairness(a).map(|_| true),
        Command::Featselect(a) => cmd_featselect(a).map(|_| true),
        Command::OracleCheck(a) => cmd_oracle_check(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("oracle check failed");
            ExitCode::from(EXIT_ORACLE_FAILURE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_estimator_failure() { 3 } else { 2 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn schema() -> Schema {
        Schema::with_label(
            vec![
                Column::discrete("gender", 2),
                Column::continuous("score"),
                Column::discrete("department", 2),
            ],
            "admitted",
            2,
        )
        .unwrap()
    }

    #[test]
    fn spec_files_accept_names_and_indices() {
        let s = schema();
        let spec = parse_spec_file(r#"{"edges": [["department", 0]]}"#, &s).unwrap();
        assert_eq!(spec, OrderingSpec::from_edges(3, vec![(2, 0)]).unwrap());
        let spec = parse_spec_file(r#"{"groups": [["score"], [0, "department"]], "direction": "proximate"}"#, &s).unwrap();
        assert_eq!(spec, OrderingSpec::from_groups(3, vec![vec![0, 2], vec![1]]).unwrap());
        assert!(matches!(
            parse_spec_file(r#"{"edges": [["height", 0]]}"#, &s),
            Err(AsvError::Schema(_))
        ));
        assert!(parse_spec_file(r#"{"n": 4}"#, &s).is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"n": 4, "games": 3, "seed": 5}"#).unwrap();
        let args = OracleArgs {
            n: None,
            games: Some(7),
            seed: None,
            permutations: None,
            tolerance: None,
            out: None,
            config: None,
        };
        let cfg: OracleConfig = resolve(&args, Some(&path)).unwrap();
        assert_eq!((cfg.n, cfg.games, cfg.seed), (4, 7, 5));
        let missing_seed: Result<OracleConfig> = resolve(&args, None);
        assert!(matches!(missing_seed, Err(AsvError::InvalidArgument(_))));
    }

    #[test]
    fn oracle_suite_passes() {
        let r = oracle_suite(4, 5, 1, 2000, 1e-9).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
