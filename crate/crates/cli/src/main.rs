//! `zdl`: command-line driver for the detection pipeline.
//!
//! Every subcommand writes `<output>.manifest.json` next to its main output,
//! recording the resolved configuration and the digests of all inputs and
//! outputs.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use zdl_core::digest::{file_sha256, sha256_hex};
use zdl_core::eval::{evaluate, render_report, ReportFormat, ReportMeta};
use zdl_core::features::{ExtractorKind, FeatureSet};
use zdl_core::features_ae::{frames_from_packets, train_ae, AeConfig, AeDims, AeModel};
use zdl_core::features_embed::{self, train_embeddings, EmbedConfig, EmbeddingModel};
use zdl_core::features_manual::{self, KeywordTable};
use zdl_core::flowstats::{self, DEFAULT_IDLE_TIMEOUT};
use zdl_core::ingest::{store_to_string, Label, PacketRecord};
use zdl_core::models::{predict_model, train_model, InputMode, ModelCheckpoint, ModelConfig, ModelKind};
use zdl_core::scenarios::{
    assemble, generate_synthetic, load_labeled, read_capture, split_80_20, AttackType, BenignMix, LabeledDataset,
    Origin, ScenarioSpec, Source, SynthConfig,
};
use zdl_core::{Error, Result};

const MANIFEST_FORMAT: &str = "zdl-run";
const MANIFEST_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "zdl", version, about = "Zero-day DDoS detection experiments on packet captures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a pcap or hex dump (plus optional label sidecar) into a packet store.
    Ingest(IngestArgs),
    /// Train the embedding or autoencoder extractor on a packet store.
    FitExtractor(FitArgs),
    /// Turn a packet store into a feature CSV.
    Extract(ExtractArgs),
    /// Train a classifier on a feature CSV.
    Train(TrainArgs),
    /// Score a feature CSV with a trained classifier and write a report.
    Eval(EvalArgs),
    /// Assemble train/test datasets from a scenario spec.
    Scenario(ScenarioArgs),
    /// Seeded 80/20 split of a packet store.
    Split(SplitArgs),
    /// Generate a labeled synthetic capture.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Label sidecar: `index,label` or `src_ip,start_ts,end_ts,label`.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    extractor: ExtractorKind,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    extractor: ExtractorKind,
    /// Trained extractor (embed, embed-batched, ae).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TrainArgs {
    /// Feature CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model: ModelKind,
    /// Extractor that produced the features; read from the feature manifest when omitted.
    #[arg(long)]
    extractor: Option<ExtractorKind>,
    /// Packet store the features came from (needed by the LSTM).
    #[arg(long)]
    packets: Option<PathBuf>,
    #[arg(long)]
    time_step: Option<usize>,
    #[arg(long)]
    mode: Option<InputMode>,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvalArgs {
    /// Feature CSV.
    #[arg(long)]
    input: PathBuf,
    /// Classifier checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Packet store the features came from.
    #[arg(long)]
    packets: PathBuf,
    #[arg(long)]
    extractor: Option<ExtractorKind>,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
    /// Also write per-row predictions as CSV.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario spec (TOML or JSON). Relative paths resolve against
    /// ZDL_DATA_DIR, or the spec's directory when it is unset.
    #[arg(long)]
    input: PathBuf,
    /// Output prefix: writes `<prefix>.train.jsonl`, `<prefix>.test.jsonl` and their dataset manifests.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output prefix: writes `<prefix>.train.jsonl` and `<prefix>.test.jsonl`.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    /// syn_flood, udp_flood, slow_http or none.
    #[arg(long)]
    attack: Option<String>,
    #[arg(long)]
    benign_mix: Option<BenignMix>,
    #[arg(long)]
    benign_count: Option<usize>,
    #[arg(long)]
    attack_count: Option<usize>,
    /// Pcap path; the label sidecar goes to `<output>.labels.csv`.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    common: Common,
}

/// Settings file shared by all subcommands; every section is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    model: ModelConfig,
    ae: AeConfig,
    embed: EmbedConfig,
    synth: SynthConfig,
    keywords: Option<KeywordTable>,
    window: Option<usize>,
    idle_timeout: Option<f64>,
}

impl RunConfig {
    fn load(common: &Common) -> Result<Self> {
        let mut cfg = match &common.config {
            None => RunConfig::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|_| Error::MissingSource(path.clone()))?;
                if text.trim_start().starts_with('{') {
                    serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
                } else {
                    toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
                }
            }
        };
        if let Some(seed) = common.seed {
            cfg.model.train.seed = seed;
            cfg.ae.seed = seed;
            cfg.embed.seed = seed;
            cfg.synth.seed = seed;
        }
        if let Some(k) = &cfg.keywords {
            k.validate()?;
        }
        Ok(cfg)
    }

    fn keywords(&self) -> KeywordTable {
        self.keywords.clone().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FileDigest {
    path: PathBuf,
    sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunManifest {
    format: String,
    version: u32,
    tool_version: String,
    command: String,
    config: serde_json::Value,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

fn digest(path: &Path) -> Result<FileDigest> {
    let sha256 = file_sha256(path).map_err(|_| Error::MissingSource(path.to_path_buf()))?;
    Ok(FileDigest { path: path.to_path_buf(), sha256 })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn manifest_path(output: &Path) -> PathBuf {
    sibling(output, ".manifest.json")
}

fn write_manifest(
    output: &Path,
    command: &str,
    config: serde_json::Value,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<()> {
    let m = RunManifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config,
        inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        outputs: outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
    };
    write(&manifest_path(output), &(serde_json::to_string_pretty(&m)? + "\n"))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|_| Error::MissingSource(path.to_path_buf()))
}

fn read_model_text(path: Option<&Path>, what: &str) -> Result<String> {
    let path = path.ok_or_else(|| Error::MissingModel(format!("{what} needs a trained model (--model)")))?;
    std::fs::read_to_string(path).map_err(|_| Error::MissingModel(format!("cannot read {}", path.display())))
}

fn load_store(path: &Path) -> Result<Vec<PacketRecord>> {
    read_capture(path)
}

/// Extractor recorded in a feature file's run manifest, if any.
fn recorded_extractor(features: &Path) -> Option<ExtractorKind> {
    let text = std::fs::read_to_string(manifest_path(features)).ok()?;
    let m: RunManifest = serde_json::from_str(&text).ok()?;
    m.config.get("extractor")?.as_str()?.parse().ok()
}

fn load_features(path: &Path, extractor: Option<ExtractorKind>) -> Result<FeatureSet> {
    let extractor = extractor.or_else(|| recorded_extractor(path));
    FeatureSet::from_csv(&read_text(path)?, extractor)
}

fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    let packets = load_labeled(&a.input, a.labels.as_deref())?;
    write(&a.output, &store_to_string(&packets))?;
    let labeled = packets.iter().filter(|p| p.label != Label::Unlabeled).count();
    println!("{} packets ({} labeled) -> {}", packets.len(), labeled, a.output.display());
    let mut inputs = vec![a.input.as_path()];
    inputs.extend(a.labels.as_deref());
    write_manifest(&a.output, "ingest", serde_json::json!({ "labels": a.labels }), &inputs, &[&a.output])
}

fn cmd_fit_extractor(a: &FitArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.common)?;
    let packets = load_store(&a.input)?;
    let (text, config) = match a.extractor {
        ExtractorKind::Embed | ExtractorKind::EmbedBatched => {
            let corpus: Vec<(String, Label)> = packets.iter().map(|p| (p.info.clone(), p.label)).collect();
            let m = train_embeddings(&corpus, &cfg.embed)?;
            println!("embedding: {} tokens, dim {}", m.vocab.len(), cfg.embed.dim);
            (m.to_json()?, serde_json::to_value(cfg.embed)?)
        }
        ExtractorKind::Ae => {
            let benign: Vec<PacketRecord> = packets.into_iter().filter(|p| p.label == Label::Benign).collect();
            let frames = frames_from_packets(&benign);
            let m = train_ae(&frames, AeDims::frames(cfg.ae.h1, cfg.ae.h3), &cfg.ae)?;
            println!("autoencoder: {} benign frames, final loss {:?}", frames.len(), m.epoch_losses.last());
            (m.to_json()?, serde_json::to_value(cfg.ae)?)
        }
        other => return Err(Error::InvalidConfig(format!("extractor {other} has nothing to train"))),
    };
    write(&a.output, &text)?;
    let config = serde_json::json!({ "extractor": a.extractor, "settings": config });
    write_manifest(&a.output, "fit-extractor", config, &[&a.input], &[&a.output])
}

fn cmd_extract(a: &ExtractArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.common)?;
    let packets = load_store(&a.input)?;
    let window = cfg.window.unwrap_or(features_manual::DEFAULT_WINDOW);
    let mut extra_outputs: Vec<PathBuf> = Vec::new();
    let mut inputs = vec![a.input.clone()];
    let set = match a.extractor {
        ExtractorKind::Manual => features_manual::manual_feature_set(&packets, &cfg.keywords()),
        ExtractorKind::ManualBatched => features_manual::batched_feature_set(&packets, &cfg.keywords(), window),
        ExtractorKind::Embed | ExtractorKind::EmbedBatched => {
            let m = EmbeddingModel::from_json(&read_model_text(a.model.as_deref(), a.extractor.name())?)?;
            inputs.extend(a.model.clone());
            if a.extractor == ExtractorKind::Embed {
                features_embed::embed_feature_set(&packets, &m)
            } else {
                features_embed::embed_batched_feature_set(&packets, &m, window)
            }
        }
        ExtractorKind::Ae => {
            let m = AeModel::from_json(&read_model_text(a.model.as_deref(), "ae")?)?;
            inputs.extend(a.model.clone());
            zdl_core::features_ae::ae_feature_set(&m, &packets)?
        }
        ExtractorKind::Flowstats => {
            let flows = flowstats::assign_flows(&packets, cfg.idle_timeout.unwrap_or(DEFAULT_IDLE_TIMEOUT));
            let flows_path = sibling(&a.output, ".flows.csv");
            write(&flows_path, &flowstats::flows_to_csv(&flows))?;
            extra_outputs.push(flows_path);
            flowstats::flow_feature_set(&flows)
        }
    };
    write(&a.output, &set.to_csv())?;
    println!("{} rows x {} features ({}) -> {}", set.len(), set.dim(), a.extractor, a.output.display());
    let config = serde_json::json!({
        "extractor": a.extractor,
        "window": window,
        "keywords": cfg.keywords(),
        "idle_timeout": cfg.idle_timeout.unwrap_or(DEFAULT_IDLE_TIMEOUT),
    });
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let mut outputs = vec![a.output.as_path()];
    outputs.extend(extra_outputs.iter().map(PathBuf::as_path));
    write_manifest(&a.output, "extract", config, &inputs, &outputs)
}

fn check_compatible(extractor: Option<ExtractorKind>, model: ModelKind) -> Result<()> {
    match extractor {
        Some(e) if model == ModelKind::Lstm && !e.supports_sequences() => Err(Error::InvalidConfig(format!(
            "extractor {e} yields flow records without packet order; it cannot feed the {model} model"
        ))),
        _ => Ok(()),
    }
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.common)?;
    if let Some(t) = a.time_step {
        cfg.model.time_step = t;
    }
    if let Some(m) = a.mode {
        cfg.model.mode = m;
    }
    let extractor = a.extractor.or_else(|| recorded_extractor(&a.input));
    check_compatible(extractor, a.model)?;
    let set = load_features(&a.input, extractor)?;
    let mut inputs = vec![a.input.as_path()];
    let packets = match (&a.packets, a.model) {
        (Some(p), _) => {
            inputs.push(p);
            Some(load_store(p)?)
        }
        (None, ModelKind::Lstm) => return Err(Error::InvalidConfig("the lstm model needs --packets".into())),
        (None, _) => None,
    };
    let aligned = packets.map(|ps| align(&ps, &set.indices)).transpose()?;
    let ck = train_model(a.model, &set, aligned.as_deref(), &cfg.model)?;
    write(&a.output, &ck.to_json()?)?;
    println!("{} trained on {} rows, final loss {:?}", a.model, set.len(), ck.model.loss_curve().last());
    let config = serde_json::json!({ "model": a.model, "extractor": extractor, "settings": cfg.model });
    write_manifest(&a.output, "train", config, &inputs, &[&a.output])
}

/// The packets with the given indices, in that order.
fn align(packets: &[PacketRecord], indices: &[usize]) -> Result<Vec<PacketRecord>> {
    let by_index: HashMap<usize, &PacketRecord> = packets.iter().map(|p| (p.index, p)).collect();
    indices
        .iter()
        .map(|i| {
            by_index
                .get(i)
                .map(|p| (*p).clone())
                .ok_or_else(|| Error::InvalidInput(format!("packet {i} is not in the packet store")))
        })
        .collect()
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.model)
        .map_err(|_| Error::MissingModel(format!("cannot read {}", a.model.display())))?;
    let ck = ModelCheckpoint::from_json(&text)?;
    let extractor = a.extractor.or_else(|| recorded_extractor(&a.input)).or(ck.extractor);
    check_compatible(extractor, ck.model.kind())?;
    let set = load_features(&a.input, extractor)?;
    let packets = load_store(&a.packets)?;
    let mut inputs = vec![a.input.clone(), a.model.clone(), a.packets.clone()];

    let (scored, preds, rows) = if extractor == Some(ExtractorKind::Flowstats) {
        let flows_path = sibling(&a.input, ".flows.csv");
        let members = flowstats::flow_members_from_csv(&read_text(&flows_path)?)?;
        inputs.push(flows_path);
        if members.len() != set.len() {
            return Err(Error::InvalidInput("flow membership file does not match the feature rows".into()));
        }
        let p = predict_model(&ck, &set, None)?;
        let expanded = flowstats::expand_to_packets(&members, &p.classes);
        let idx: Vec<usize> = expanded.iter().map(|(i, _)| *i).collect();
        (align(&packets, &idx)?, expanded.into_iter().map(|(_, c)| c).collect::<Vec<u8>>(), p)
    } else {
        let aligned = align(&packets, &set.indices)?;
        let p = predict_model(&ck, &set, Some(&aligned))?;
        (aligned, p.classes.clone(), p)
    };

    let cfg = &ck.config;
    let lstm = ck.model.kind() == ModelKind::Lstm;
    let meta = ReportMeta {
        model: ck.model.kind().to_string(),
        extractor: extractor.map_or_else(|| "unknown".to_string(), |e| e.to_string()),
        threshold: cfg.train.threshold,
        time_step: Some(if lstm { cfg.time_step } else { 1 }),
        mode: lstm.then(|| cfg.mode.to_string()),
        seed: Some(cfg.train.seed),
    };
    let report = evaluate(meta, &scored, &preds)?;
    write(&a.output, &render_report(&report, a.format)?)?;
    let mut outputs = vec![a.output.clone()];
    if let Some(path) = &a.predictions {
        write(path, &rows.to_csv())?;
        outputs.push(path.clone());
    }
    println!(
        "detection rate {}, false positive rate {} over {} packets -> {}",
        zdl_core::eval::format_rate(report.detection_rate),
        zdl_core::eval::format_rate(report.false_positive_rate),
        report.packets,
        a.output.display()
    );
    let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let outputs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    let config = serde_json::json!({ "format": a.format.name(), "extractor": extractor });
    write_manifest(&a.output, "eval", config, &inputs, &outputs)
}

fn data_dir(spec_path: &Path) -> PathBuf {
    match std::env::var_os("ZDL_DATA_DIR") {
        Some(d) => PathBuf::from(d),
        None => spec_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    }
}

fn write_dataset(prefix: &Path, side: &str, ds: &LabeledDataset, base: &Path) -> Result<[PathBuf; 2]> {
    let store = sibling(prefix, &format!(".{side}.jsonl"));
    let manifest = sibling(prefix, &format!(".{side}.dataset.json"));
    write(&store, &ds.store())?;
    write(&manifest, &(ds.manifest(base)?.to_json() + "\n"))?;
    println!("{side}: {} packets ({} attack) -> {}", ds.len(), ds.attack_count(), store.display());
    Ok([store, manifest])
}

fn cmd_scenario(a: &ScenarioArgs) -> Result<()> {
    let spec = ScenarioSpec::load(&a.input)?;
    let base = data_dir(&a.input);
    let (train, test) = assemble(&spec, &base)?;
    let mut outputs = write_dataset(&a.output, "train", &train, &base)?.to_vec();
    outputs.extend(write_dataset(&a.output, "test", &test, &base)?);
    let outputs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    let config = serde_json::json!({ "spec": spec, "data_dir": base });
    write_manifest(&a.output, "scenario", config, &[&a.input], &outputs)
}

fn cmd_split(a: &SplitArgs) -> Result<()> {
    let packets = load_store(&a.input)?;
    let base = a.input.parent().map(Path::to_path_buf).unwrap_or_default();
    let name = a.input.file_name().map(PathBuf::from).unwrap_or_else(|| a.input.clone());
    let ds = LabeledDataset {
        name: name.display().to_string(),
        origins: packets.iter().map(|p| Origin { source: 0, index: p.index }).collect(),
        packets,
        sources: vec![Source { capture: name, labels: None }],
        target_count: None,
    };
    let (train, test) = split_80_20(&ds, a.seed)?;
    let mut outputs = write_dataset(&a.output, "train", &train, &base)?.to_vec();
    outputs.extend(write_dataset(&a.output, "test", &test, &base)?);
    let outputs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&a.output, "split", serde_json::json!({ "seed": a.seed }), &[&a.input], &outputs)
}

fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.common)?.synth;
    match a.attack.as_deref() {
        Some("none") => {
            cfg.attack = None;
            cfg.attack_count = 0;
        }
        Some(name) => cfg.attack = Some(name.parse::<AttackType>()?),
        None => {}
    }
    if let Some(m) = a.benign_mix {
        cfg.benign_mix = m;
    }
    if let Some(n) = a.benign_count {
        cfg.benign_count = n;
    }
    if let Some(n) = a.attack_count {
        cfg.attack_count = n;
    }
    let cap = generate_synthetic(&cfg)?;
    let pcap = cap.to_pcap();
    write_bytes(&a.output, &pcap)?;
    let labels = sibling(&a.output, ".labels.csv");
    write(&labels, &cap.index_sidecar())?;
    println!(
        "{} packets ({} attack, sha256 {}) -> {}",
        cap.packets.len(),
        cap.attack_count(),
        &sha256_hex(&pcap)[..16],
        a.output.display()
    );
    write_manifest(&a.output, "generate", serde_json::to_value(cfg)?, &[], &[&a.output, &labels])
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MissingModel(_) => 3,
        Error::InvalidConfig(_) | Error::ModelShape(_) | Error::DegenerateClustering => 4,
        Error::DivergedTraining { .. } => 5,
        _ => 2,
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::FitExtractor(a) => cmd_fit_extractor(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Scenario(a) => cmd_scenario(a),
        Command::Split(a) => cmd_split(a),
        Command::Generate(a) => cmd_generate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
