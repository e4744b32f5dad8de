//! `cfx` command line: every subcommand reads an optional TOML run config,
//! applies flag overrides (flags win), writes the resolved configuration next
//! to its outputs, and derives all randomness from the global seed.
//!
//! Exit codes: 0 success, 1 invalid input or missing files, 2 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, evaluate_classifier, Architecture, ClassifierConfig, ClassifierModel};
use crate::dataset::{self, Dataset, DatasetManifest, Image, Split, SplitRatios, SynthSpec, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::eval::{self, evaluate_flips};
use crate::explain::{explain, plan_pairs};
use crate::gan::{train_gan_with_checkpoints, AdversarialForm, GanBundle, GanConfig};
use crate::service::{self, ServiceState};

pub const DEFAULT_SEED: u64 = 7;
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

#[derive(Debug, Parser)]
#[command(name = "cfx", version, about = "Counterfactual explanations for a binary image classifier")]
pub struct Cli {
    /// Seed for every random choice [default: 7]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root; results go to <out>/<run-name>/ [default: runs]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run directory name under the output root [default: default]
    #[arg(long, global = true)]
    pub run_name: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic two-class dataset into <run>/dataset
    Synth(SynthArgs),
    /// Import a class-per-directory image tree into <run>/dataset and split it
    Ingest(IngestArgs),
    /// Re-split <run>/dataset in place
    Split(SplitArgs),
    /// Train and freeze the classifier into <run>/classifier
    TrainClassifier(ClassifierArgs),
    /// Train the counterfactual translation bundle into <run>/gan
    TrainCf(TrainCfArgs),
    /// Explain one image: JSON, original and counterfactual PNGs, optional frames
    Explain(ExplainArgs),
    /// Flip-accuracy report for a trained bundle
    Evaluate(EvaluateArgs),
    /// Train with and without the counter loss and compare flip accuracy
    Ablation(GanArgs),
    /// List the unordered class pairs a multi-class setup needs one model each for
    PlanPairs(PlanPairsArgs),
    /// Serve classification and explanation over HTTP
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Images per class [default: 200]
    #[arg(long)]
    pub n: Option<usize>,
    /// Image side in pixels [default: 64]
    #[arg(long)]
    pub res: Option<usize>,
    /// Contrast of the opacity pattern, in (0, 1] [default: 0.6]
    #[arg(long)]
    pub strength: Option<f64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory with one subdirectory per class
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Subdirectory-to-label map, e.g. "Normal=NORMAL,Lung Opacity=OPACITY"
    #[arg(long)]
    pub classes: Option<String>,
    /// Image side in pixels [default: 64]
    #[arg(long)]
    pub res: Option<usize>,
    #[command(flatten)]
    pub ratios: RatioArgs,
}

#[derive(Debug, Args)]
pub struct RatioArgs {
    /// Training fraction [default: 0.7]
    #[arg(long)]
    pub train: Option<f64>,
    /// Validation fraction [default: 0.1]
    #[arg(long)]
    pub val: Option<f64>,
    /// Test fraction [default: 0.2]
    #[arg(long)]
    pub test: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub ratios: RatioArgs,
}

#[derive(Debug, Args)]
pub struct ClassifierArgs {
    /// ALEXNET_VARIANT, SMALL_CNN or TINY_DENSE [default: SMALL_CNN]
    #[arg(long, value_parser = parse_enum::<Architecture>)]
    pub arch: Option<Architecture>,
    /// Training epochs [default: 1000 for ALEXNET_VARIANT, 30 otherwise]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// SGD learning rate [default: 0.0001 for ALEXNET_VARIANT, 0.01 otherwise]
    #[arg(long)]
    pub lr: Option<f64>,
    /// SGD momentum [default: 0.9]
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Mini-batch size [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// L2 factor on kernels and dense biases [default: 0.001 for ALEXNET_VARIANT, 0.0001 otherwise]
    #[arg(long)]
    pub l2: Option<f64>,
    /// Dropout probability [default: 0.4 for ALEXNET_VARIANT, 0.2 for SMALL_CNN, 0 for TINY_DENSE]
    #[arg(long)]
    pub dropout: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct GanArgs {
    /// Network widths: "desk" (8 filters) or "reference" (64 filters, 20 epochs) [default: desk]
    #[arg(long)]
    pub preset: Option<String>,
    /// Training epochs [default: 4 (desk), 20 (reference)]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Steps per epoch [default: one pass over the larger class]
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    /// Batch size [default: 1]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate [default: 0.0002]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Adam beta1 [default: 0.5]
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Adam beta2 [default: 0.999]
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Cycle-consistency weight lambda [default: 10]
    #[arg(long = "lambda")]
    pub lambda_cycle: Option<f64>,
    /// Identity weight mu [default: 1]
    #[arg(long = "mu")]
    pub mu_identity: Option<f64>,
    /// Counter-loss weight gamma [default: 1]
    #[arg(long = "gamma")]
    pub gamma_counter: Option<f64>,
    /// Generator filters in the first layer [default: 8 (desk), 64 (reference)]
    #[arg(long)]
    pub ngf: Option<usize>,
    /// Discriminator filters in the first layer [default: 8 (desk), 64 (reference)]
    #[arg(long)]
    pub ndf: Option<usize>,
    /// Stride-2 discriminator layers [default: scaled to the resolution, 3 at 256 and above]
    #[arg(long)]
    pub n_down: Option<usize>,
    /// least_squares or log [default: least_squares]
    #[arg(long, value_parser = parse_enum::<AdversarialForm>)]
    pub adversarial: Option<AdversarialForm>,
    /// Image-history buffer for discriminator updates [default: 50]
    #[arg(long)]
    pub pool_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainCfArgs {
    /// Plain cycle-consistent training: sets gamma to 0
    #[arg(long)]
    pub plain: bool,
    #[command(flatten)]
    pub gan: GanArgs,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Image file to explain
    #[arg(long, conflicts_with = "id")]
    pub image: Option<PathBuf>,
    /// Dataset sample id to explain
    #[arg(long)]
    pub id: Option<String>,
    /// Also write N interpolation frames (2..=33)
    #[arg(long)]
    pub frames: Option<usize>,
    /// Bundle directory (a checkpoint, or a training directory to take the last epoch from) [default: <run>/gan]
    #[arg(long)]
    pub bundle: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// TRAIN, VAL or TEST [default: TEST]
    #[arg(long, value_parser = parse_enum::<Split>)]
    pub split: Option<Split>,
    /// Bundle directory [default: <run>/gan]
    #[arg(long)]
    pub bundle: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanPairsArgs {
    /// Comma-separated class names
    #[arg(long)]
    pub classes: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Port on the bind address [default: 8080]
    #[arg(long)]
    pub port: Option<u16>,
    /// Bind 0.0.0.0 instead of loopback
    #[arg(long)]
    pub expose: bool,
    /// Largest accepted request body in bytes [default: 8388608]
    #[arg(long)]
    pub body_limit: Option<usize>,
    /// Bundle directory [default: <run>/gan]
    #[arg(long)]
    pub bundle: Option<PathBuf>,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    let candidates = [s.to_string(), s.to_ascii_uppercase().replace('-', "_"), s.to_ascii_lowercase().replace('-', "_")];
    candidates
        .iter()
        .find_map(|c| serde_json::from_value(serde_json::Value::String(c.clone())).ok())
        .ok_or_else(|| format!("unrecognized value `{s}`"))
}

/// Contents of `--config`. Every key is optional; unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output_root: Option<PathBuf>,
    pub run_name: Option<String>,
    pub dataset: DatasetSection,
    pub classifier: ClassifierSection,
    pub gan: GanSection,
    pub eval: EvalSection,
    pub serve: ServeSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub n_per_class: Option<usize>,
    pub resolution: Option<usize>,
    pub opacity_strength: Option<f64>,
    pub source: Option<PathBuf>,
    pub classes: Option<String>,
    pub train: Option<f64>,
    pub val: Option<f64>,
    pub test: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSection {
    pub architecture: Option<Architecture>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub momentum: Option<f64>,
    pub batch_size: Option<usize>,
    pub l2_factor: Option<f64>,
    pub dropout_p: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanSection {
    pub preset: Option<String>,
    pub epochs: Option<usize>,
    pub steps_per_epoch: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub lambda_cycle: Option<f64>,
    pub mu_identity: Option<f64>,
    pub gamma_counter: Option<f64>,
    pub ngf: Option<usize>,
    pub ndf: Option<usize>,
    pub n_downsample_layers: Option<usize>,
    pub adversarial: Option<AdversarialForm>,
    pub pool_size: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub split: Option<Split>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeSection {
    pub port: Option<u16>,
    pub expose: Option<bool>,
    pub body_limit: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(format!("config {}", path.display()), e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    fn ratios(&self) -> Result<SplitRatios> {
        let d = SplitRatios::default();
        let s = &self.dataset;
        SplitRatios::new(s.train.unwrap_or(d.train), s.val.unwrap_or(d.val), s.test.unwrap_or(d.test))
    }

    /// Classifier configuration for `resolution`: architecture defaults, then overrides.
    pub fn classifier_config(&self, resolution: usize) -> ClassifierConfig {
        let s = &self.classifier;
        let mut c = ClassifierConfig::for_architecture(s.architecture.unwrap_or(Architecture::SmallCnn), resolution);
        set(&mut c.epochs, s.epochs);
        set(&mut c.optimizer.learning_rate, s.learning_rate);
        set(&mut c.optimizer.momentum, s.momentum);
        set(&mut c.batch_size, s.batch_size);
        set(&mut c.l2_factor, s.l2_factor);
        set(&mut c.dropout_p, s.dropout_p);
        c
    }

    /// Translation configuration for `resolution`: preset, then overrides.
    pub fn gan_config(&self, resolution: usize) -> Result<GanConfig> {
        let s = &self.gan;
        let mut c = match s.preset.as_deref().unwrap_or("desk") {
            "desk" => GanConfig::desk(resolution),
            "reference" => GanConfig::reference(resolution),
            other => return Err(Error::invalid(format!("unknown gan preset `{other}` (expected desk or reference)"))),
        };
        set(&mut c.epochs, s.epochs);
        if s.steps_per_epoch.is_some() {
            c.steps_per_epoch = s.steps_per_epoch;
        }
        set(&mut c.batch_size, s.batch_size);
        set(&mut c.optimizer.learning_rate, s.learning_rate);
        set(&mut c.optimizer.beta1, s.beta1);
        set(&mut c.optimizer.beta2, s.beta2);
        set(&mut c.weights.lambda_cycle, s.lambda_cycle);
        set(&mut c.weights.mu_identity, s.mu_identity);
        set(&mut c.weights.gamma_counter, s.gamma_counter);
        set(&mut c.generator.ngf, s.ngf);
        set(&mut c.patch_gan.ndf, s.ndf);
        set(&mut c.patch_gan.n_downsample_layers, s.n_downsample_layers);
        set(&mut c.adversarial, s.adversarial);
        set(&mut c.pool_size, s.pool_size);
        c.validate()?;
        Ok(c)
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn over<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

impl GanArgs {
    fn apply(&self, s: &mut GanSection) {
        over(&mut s.preset, self.preset.clone());
        over(&mut s.epochs, self.epochs);
        over(&mut s.steps_per_epoch, self.steps_per_epoch);
        over(&mut s.batch_size, self.batch_size);
        over(&mut s.learning_rate, self.lr);
        over(&mut s.beta1, self.beta1);
        over(&mut s.beta2, self.beta2);
        over(&mut s.lambda_cycle, self.lambda_cycle);
        over(&mut s.mu_identity, self.mu_identity);
        over(&mut s.gamma_counter, self.gamma_counter);
        over(&mut s.ngf, self.ngf);
        over(&mut s.ndf, self.ndf);
        over(&mut s.n_downsample_layers, self.n_down);
        over(&mut s.adversarial, self.adversarial);
        over(&mut s.pool_size, self.pool_size);
    }
}

impl RatioArgs {
    fn apply(&self, s: &mut DatasetSection) {
        over(&mut s.train, self.train);
        over(&mut s.val, self.val);
        over(&mut s.test, self.test);
    }
}

/// What a command writes beside its outputs.
#[derive(Serialize)]
struct Resolved<'a> {
    command: &'a str,
    seed: u64,
    run: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    classifier: Option<&'a ClassifierConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gan: Option<&'a GanConfig>,
}

/// Directory layout of one run.
#[derive(Clone, Debug)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }
    pub fn manifest(&self) -> PathBuf {
        self.dataset().join(MANIFEST_FILE)
    }
    pub fn classifier(&self) -> PathBuf {
        self.root.join("classifier")
    }
    pub fn gan(&self) -> PathBuf {
        self.root.join("gan")
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
    pub fn explanations(&self) -> PathBuf {
        self.root.join("explanations")
    }
}

struct Ctx {
    seed: u64,
    config: RunConfig,
    paths: RunPaths,
}

impl Ctx {
    fn write_resolved(&self, dir: &Path, command: &str, c: Option<&ClassifierConfig>, g: Option<&GanConfig>) -> Result<()> {
        let r = Resolved {
            command,
            seed: self.seed,
            run: &self.config,
            classifier: c,
            gan: g,
        };
        let text = toml::to_string_pretty(&r).map_err(|e| Error::format("resolved config", e.to_string()))?;
        write(&dir.join(RESOLVED_CONFIG_FILE), text.as_bytes())
    }

    fn dataset(&self) -> Result<Dataset> {
        let p = self.paths.manifest();
        require(&p, "run `cfx synth` or `cfx ingest` first")?;
        Dataset::load(&p)
    }

    fn classifier(&self) -> Result<ClassifierModel> {
        let p = self.paths.classifier();
        require(&p.join(classifier::WEIGHTS_FILE), "run `cfx train-classifier` first")?;
        ClassifierModel::load(&p)
    }

    fn bundle(&self, dir: Option<&PathBuf>) -> Result<GanBundle> {
        let p = dir.cloned().unwrap_or_else(|| self.paths.gan());
        require(&p, "run `cfx train-cf` first or pass --bundle")?;
        GanBundle::load_latest(&p)
    }
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::invalid(format!("missing {} ({hint})", path.display())))
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => {
            require(p, "check the --config path")?;
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    };
    over(&mut config.seed, cli.seed);
    over(&mut config.output_root, cli.out.clone());
    over(&mut config.run_name, cli.run_name.clone());
    let seed = config.seed.unwrap_or(DEFAULT_SEED);
    let root = config
        .output_root
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs"))
        .join(config.run_name.as_deref().unwrap_or("default"));
    let mut ctx = Ctx {
        seed,
        config,
        paths: RunPaths { root },
    };
    match cli.command {
        Command::Synth(a) => synth(&mut ctx, a),
        Command::Ingest(a) => ingest(&mut ctx, a),
        Command::Split(a) => resplit(&mut ctx, a),
        Command::TrainClassifier(a) => train_classifier(&mut ctx, a),
        Command::TrainCf(a) => train_cf(&mut ctx, a),
        Command::Explain(a) => explain_cmd(&mut ctx, a),
        Command::Evaluate(a) => evaluate(&mut ctx, a),
        Command::Ablation(a) => ablation(&mut ctx, a),
        Command::PlanPairs(a) => {
            let names: Vec<String> = a.classes.split(',').map(|s| s.trim().to_string()).collect();
            let plan = plan_pairs(&names)?;
            for (x, y) in &plan.pairs {
                println!("{x} {y}");
            }
            Ok(())
        }
        Command::Serve(a) => serve(&mut ctx, a),
    }
}

fn synth(ctx: &mut Ctx, a: SynthArgs) -> Result<()> {
    let d = &mut ctx.config.dataset;
    over(&mut d.n_per_class, a.n);
    over(&mut d.resolution, a.res);
    over(&mut d.opacity_strength, a.strength);
    let def = SynthSpec::default();
    let spec = SynthSpec {
        n_per_class: d.n_per_class.unwrap_or(def.n_per_class),
        resolution: d.resolution.unwrap_or(def.resolution),
        opacity_strength: d.opacity_strength.unwrap_or(def.opacity_strength),
        noise_seed: ctx.seed,
    };
    let ratios = ctx.config.ratios()?;
    let dir = ctx.paths.dataset();
    let data = dataset::synthesize_dataset(&spec)?.resplit(ratios, ctx.seed)?;
    data.save(&dir)?;
    ctx.write_resolved(&dir, "synth", None, None)?;
    print_counts(&data.manifest, &dir);
    Ok(())
}

fn print_counts(m: &DatasetManifest, dir: &Path) {
    println!("{} images at {}x{} in {}", m.len(), m.resolution, m.resolution, dir.display());
    for ((split, label), n) in m.counts() {
        println!("  {split:<5} {label:<7} {n}");
    }
}

fn ingest(ctx: &mut Ctx, a: IngestArgs) -> Result<()> {
    let d = &mut ctx.config.dataset;
    over(&mut d.source, a.source);
    over(&mut d.classes, a.classes);
    over(&mut d.resolution, a.res);
    a.ratios.apply(d);
    let source = d
        .source
        .clone()
        .ok_or_else(|| Error::invalid("ingest needs --source (or dataset.source in the config)"))?;
    let classes = d
        .classes
        .clone()
        .ok_or_else(|| Error::invalid("ingest needs --classes (or dataset.classes in the config)"))?;
    let res = d.resolution.unwrap_or(SynthSpec::default().resolution);
    let map = dataset::parse_class_map(&classes)?;
    let dir = ctx.paths.dataset();
    let (manifest, report) = dataset::ingest(&source, &map, res, &dir)?;
    let manifest = dataset::split(&manifest, ctx.config.ratios()?, ctx.seed)?;
    manifest.save(&dir.join(MANIFEST_FILE))?;
    ctx.write_resolved(&dir, "ingest", None, None)?;
    print_counts(&manifest, &dir);
    println!("skipped {} unreadable, {} duplicates", report.skipped.len(), report.duplicates);
    Ok(())
}

fn resplit(ctx: &mut Ctx, a: SplitArgs) -> Result<()> {
    a.ratios.apply(&mut ctx.config.dataset);
    let p = ctx.paths.manifest();
    require(&p, "run `cfx synth` or `cfx ingest` first")?;
    let manifest = dataset::split(&DatasetManifest::load(&p)?, ctx.config.ratios()?, ctx.seed)?;
    manifest.save(&p)?;
    ctx.write_resolved(&ctx.paths.dataset(), "split", None, None)?;
    print_counts(&manifest, &ctx.paths.dataset());
    Ok(())
}

fn train_classifier(ctx: &mut Ctx, a: ClassifierArgs) -> Result<()> {
    let s = &mut ctx.config.classifier;
    over(&mut s.architecture, a.arch);
    over(&mut s.epochs, a.epochs);
    over(&mut s.learning_rate, a.lr);
    over(&mut s.momentum, a.momentum);
    over(&mut s.batch_size, a.batch_size);
    over(&mut s.l2_factor, a.l2);
    over(&mut s.dropout_p, a.dropout);
    let data = ctx.dataset()?;
    let cfg = ctx.config.classifier_config(data.resolution());
    cfg.validate()?;
    let model = classifier::train(classifier::build(&cfg, ctx.seed)?, &data, ctx.seed)?;
    let dir = ctx.paths.classifier();
    model.save(&dir)?;
    ctx.write_resolved(&dir, "train-classifier", Some(&cfg), None)?;
    let m = evaluate_classifier(&model, &data, Split::Test)?;
    write(
        &ctx.paths.reports().join("classifier_metrics.json"),
        &serde_json::to_vec_pretty(&m)?,
    )?;
    println!(
        "test accuracy {:.4}  f1 {:.4}  f2 {:.4}  checksum {}",
        m.accuracy,
        m.f1,
        m.f2,
        model.checksum()
    );
    Ok(())
}

fn train_cf(ctx: &mut Ctx, a: TrainCfArgs) -> Result<()> {
    a.gan.apply(&mut ctx.config.gan);
    if a.plain {
        ctx.config.gan.gamma_counter = Some(0.0);
    }
    let data = ctx.dataset()?;
    let c = ctx.classifier()?;
    let cfg = ctx.config.gan_config(data.resolution())?;
    let dir = ctx.paths.gan();
    ctx.write_resolved(&dir, "train-cf", None, Some(&cfg))?;
    let bundle = train_gan_with_checkpoints(&data, &c, &cfg, ctx.seed, &dir)?;
    if let Some(last) = bundle.training_log.last() {
        println!(
            "trained {} epochs; last epoch generator {:.4} discriminator {:.4} counter {:.4}",
            cfg.epochs, last.gen_total, last.disc_total, last.counter
        );
    }
    println!("checkpoints in {}", dir.display());
    Ok(())
}

fn explain_cmd(ctx: &mut Ctx, a: ExplainArgs) -> Result<()> {
    if let Some(n) = a.frames {
        if !(service::MIN_FRAMES..=service::MAX_FRAMES).contains(&n) {
            return Err(Error::invalid(format!(
                "--frames must be in {}..={}, got {n}",
                service::MIN_FRAMES,
                service::MAX_FRAMES
            )));
        }
    }
    let c = ctx.classifier()?;
    let bundle = ctx.bundle(a.bundle.as_ref())?;
    let (id, image) = match (&a.image, &a.id) {
        (Some(p), _) => {
            require(p, "check the --image path")?;
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
            (id, Image::load_png(p, c.resolution())?.quantized())
        }
        (None, Some(id)) => {
            let data = ctx.dataset()?;
            let s = data
                .get(id)
                .ok_or_else(|| Error::invalid(format!("no sample `{id}` in {}", ctx.paths.manifest().display())))?;
            (id.clone(), s.image.clone())
        }
        (None, None) => return Err(Error::invalid("explain needs --image or --id")),
    };
    let e = explain(&bundle, &c, &id, &image)?;
    let dir = ctx.paths.explanations();
    e.save(&dir, a.frames)?;
    ctx.write_resolved(&dir, "explain", None, Some(&bundle.config))?;
    println!("{}", serde_json::to_string_pretty(&e)?);
    Ok(())
}

fn evaluate(ctx: &mut Ctx, a: EvaluateArgs) -> Result<()> {
    over(&mut ctx.config.eval.split, a.split);
    let split = ctx.config.eval.split.unwrap_or(Split::Test);
    let data = ctx.dataset()?;
    let c = ctx.classifier()?;
    let bundle = ctx.bundle(a.bundle.as_ref())?;
    let report = evaluate_flips(&bundle, &c, &data, split)?;
    let dir = ctx.paths.reports();
    let stem = format!("flip_report_{}", split.as_str().to_ascii_lowercase());
    report.save_json(&dir.join(format!("{stem}.json")))?;
    write(&dir.join(format!("{stem}.txt")), report.to_text().as_bytes())?;
    ctx.write_resolved(&dir, "evaluate", None, Some(&bundle.config))?;
    print!("{}", report.to_text());
    Ok(())
}

fn ablation(ctx: &mut Ctx, a: GanArgs) -> Result<()> {
    a.apply(&mut ctx.config.gan);
    let data = ctx.dataset()?;
    let c = ctx.classifier()?;
    let cfg = ctx.config.gan_config(data.resolution())?;
    let dir = ctx.paths.gan().join("ablation");
    ctx.write_resolved(&dir, "ablation", None, Some(&cfg))?;
    let summary = eval::ablation(&data, &c, &cfg, ctx.seed, &dir)?;
    let reports = ctx.paths.reports();
    write(&reports.join("ablation.json"), &serde_json::to_vec_pretty(&summary)?)?;
    write(&reports.join("ablation.txt"), summary.to_text().as_bytes())?;
    print!("{}", summary.to_text());
    Ok(())
}

fn serve(ctx: &mut Ctx, a: ServeArgs) -> Result<()> {
    let s = &mut ctx.config.serve;
    over(&mut s.port, a.port);
    if a.expose {
        s.expose = Some(true);
    }
    over(&mut s.body_limit, a.body_limit);
    let port = s.port.unwrap_or(8080);
    let host = if s.expose.unwrap_or(false) { [0, 0, 0, 0] } else { [127, 0, 0, 1] };
    let limit = s.body_limit.unwrap_or(service::DEFAULT_BODY_LIMIT);
    let c = ctx.classifier()?;
    let bundle = ctx.bundle(a.bundle.as_ref())?;
    let data = if ctx.paths.manifest().exists() {
        Some(ctx.dataset()?)
    } else {
        log::warn!("no dataset at {}; sample browsing disabled", ctx.paths.manifest().display());
        None
    };
    let state = ServiceState::new(c, bundle, data)?.with_body_limit(limit);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::invalid(format!("cannot start runtime: {e}")))?;
    rt.block_on(service::serve(state, SocketAddr::from((host, port))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(toml::from_str::<RunConfig>("[gan]\nlamda_cycle = 3.0\n").is_err());
        let c: RunConfig = toml::from_str("seed = 3\n[gan]\nlambda_cycle = 3.0\nadversarial = \"log\"\n").unwrap();
        assert_eq!(c.seed, Some(3));
        let g = c.gan_config(32).unwrap();
        assert_eq!(g.weights.lambda_cycle, 3.0);
        assert_eq!(g.adversarial, AdversarialForm::Log);
    }

    #[test]
    fn classifier_defaults_follow_architecture() {
        let mut c = RunConfig::default();
        c.classifier.architecture = Some(Architecture::AlexnetVariant);
        let cfg = c.classifier_config(512);
        assert_eq!(cfg, ClassifierConfig::alexnet_variant(512));
        c.classifier.learning_rate = Some(0.5);
        assert_eq!(c.classifier_config(512).optimizer.learning_rate, 0.5);
    }

    #[test]
    fn enum_flags_accept_both_spellings() {
        assert_eq!(parse_enum::<Architecture>("small-cnn"), Ok(Architecture::SmallCnn));
        assert_eq!(parse_enum::<Split>("test"), Ok(Split::Test));
        assert_eq!(parse_enum::<AdversarialForm>("LOG"), Ok(AdversarialForm::Log));
        assert!(parse_enum::<Split>("nope").is_err());
    }

    #[test]
    fn resolved_config_serializes() {
        let mut c = RunConfig::default();
        c.gan.gamma_counter = Some(0.0);
        let g = c.gan_config(32).unwrap();
        let r = Resolved {
            command: "x",
            seed: 1,
            run: &c,
            classifier: Some(&ClassifierConfig::small_cnn(32)),
            gan: Some(&g),
        };
        let text = toml::to_string_pretty(&r).unwrap();
        assert!(text.contains("gamma_counter = 0.0"));
        assert_eq!(toml::from_str::<RunConfig>(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["cfx", "plan-pairs", "--classes", "a,b,c,d"]), 0);
        assert_eq!(run(["cfx", "plan-pairs", "--classes", "a,a"]), 1);
        assert_eq!(run(["cfx", "no-such-command"]), 1);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run(["cfx", "--out", out, "train-classifier"]), 1);
        assert_eq!(run(["cfx", "--config", "/nonexistent.toml", "plan-pairs", "--classes", "a,b"]), 1);
    }
}
