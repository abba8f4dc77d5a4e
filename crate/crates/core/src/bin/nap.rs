//! Batch command-line interface: generate synthetic corpora, train proxy
//! heads, and evaluate them on detection, filtering and deferral.
//!
//! Every command is a thin shell over the library: output values equal
//! direct library-call values exactly, and identical invocations produce
//! byte-identical outputs.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use nap::error::{NapError, Result};
use nap::losses::{LossKind, LossSpec};
use nap::naphead::{
    load_params, save_params, score_all, train_head, HeadParams, Pooling, TrainConfig, Variant,
};
use nap::record::{read_jsonl, write_jsonl, ScoreRecord, Split};
use nap::synthkit::{gen_corpus, geometric_unigram, CorpusSpec, TeacherSpec};
use nap::tasks::{
    deferral_curve, filtering_curve, matched_operating_point_full, ood_detect, AggMode,
    DeferralDirection, DeferralInput, DeferralPolicy, FilterDirection, FilterMetric, MatchTarget,
    ModelOutcome, OodDirection, OperatingCurve, OperatingPoint,
};

#[derive(Parser)]
#[command(name = "nap", about = "Non-autoregressive proxy head toolkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scored corpora from a TOML config.
    Gen(GenArgs),
    /// Train a proxy head on a JSONL record file.
    TrainHead(TrainArgs),
    /// OOD-detection AUROC of a trained head on an ID/OOD file pair.
    EvalDetect(DetectArgs),
    /// Dataset-filtering curve of a trained head.
    EvalFilter(FilterArgs),
    /// Small/large deferral operating curve with matched-point queries.
    EvalDefer(DeferArgs),
}

#[derive(Args)]
struct GenArgs {
    /// TOML config with one [teacher] block and one or more [[corpus]] blocks.
    config: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training records (JSONL); must contain train and validation splits.
    records: PathBuf,
    /// Target field to imitate.
    #[arg(long)]
    target: String,
    /// Training loss.
    #[arg(long, default_value = "scc", value_parser = LossKind::parse)]
    loss: LossKind,
    /// Soft-rank smoothing for scc/ep_al.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Decorrelation weight for ep_al.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Head architecture.
    #[arg(long, default_value = "3L-SM", value_parser = Variant::parse)]
    variant: Variant,
    /// Feature pooling.
    #[arg(long, default_value = "average", value_parser = Pooling::parse)]
    pooling: Pooling,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Minibatch size (minimum 8 for correlation losses).
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Seed for initialization and batch shuffling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hidden width of the head.
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
    #[arg(long, default_value_t = 10)]
    evals_per_epoch: usize,
    /// Early-stopping patience in evaluations; 0 means one epoch's worth.
    #[arg(long, default_value_t = 0)]
    patience: usize,
    /// Aleatoric target field for ep_al (defaults to "aleatoric").
    #[arg(long)]
    aux_field: Option<String>,
    /// Output params file (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Validation-history CSV (defaults to <out> with a .history.csv suffix).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    id_records: PathBuf,
    ood_records: PathBuf,
    params: PathBuf,
    #[arg(long, default_value = "higher_is_ood", value_parser = OodDirection::parse)]
    direction: OodDirection,
    /// Optional CSV row output (full precision).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    records: PathBuf,
    params: PathBuf,
    /// Actual-quality field; in corpus_wer mode, the error-count field
    /// (paired with ref_len).
    #[arg(long)]
    metric_field: String,
    #[arg(long, default_value = "mean_metric", value_parser = AggMode::parse)]
    mode: AggMode,
    #[arg(long, default_value = "remove_lowest_predicted", value_parser = FilterDirection::parse)]
    direction: FilterDirection,
    /// Comma-separated removal fractions; default 0,0.05,...,0.9.
    #[arg(long)]
    fractions: Option<String>,
    /// Output CSV (fraction_removed,metric).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DeferArgs {
    records: PathBuf,
    /// Trained proxy head used to score each source.
    #[arg(long, conflicts_with = "proxy_field", required_unless_present = "proxy_field")]
    params: Option<PathBuf>,
    /// Use a stored target field as the proxy score instead of a head.
    #[arg(long)]
    proxy_field: Option<String>,
    #[arg(long, default_value = "mean_metric", value_parser = AggMode::parse)]
    mode: AggMode,
    #[arg(long, default_value = "above_threshold_small", value_parser = DeferralDirection::parse)]
    direction: DeferralDirection,
    #[arg(long, default_value = "proxy", value_parser = DeferralPolicy::parse)]
    policy: DeferralPolicy,
    /// Per-model quality fields <metric_field>_small / <metric_field>_large
    /// (error counts in corpus_wer mode).
    #[arg(long)]
    metric_field: String,
    /// Output CSV (threshold,fraction_deferred,metric,time).
    #[arg(long)]
    out: PathBuf,
    /// Append the operating point interpolated at this time budget.
    #[arg(long)]
    match_time: Vec<f64>,
    /// Append the operating point interpolated at this metric level.
    #[arg(long)]
    match_metric: Vec<f64>,
}

fn main() {
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::TrainHead(a) => cmd_train(a),
        Command::EvalDetect(a) => cmd_detect(a),
        Command::EvalFilter(a) => cmd_filter(a),
        Command::EvalDefer(a) => cmd_defer(a),
    };
    if let Err(e) = run {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenConfig {
    teacher: TeacherBlock,
    corpus: Vec<CorpusBlock>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TeacherBlock {
    vocab_size: usize,
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusBlock {
    output: PathBuf,
    n_examples: usize,
    length_min: usize,
    length_max: usize,
    /// Explicit source distribution; exclusive with geometric_ratio.
    source_unigram: Option<Vec<f64>>,
    /// Geometric source distribution parameter; exclusive with source_unigram.
    geometric_ratio: Option<f64>,
    #[serde(default)]
    geometric_reversed: bool,
    domain: String,
    split: String,
    temperature_small: f64,
    temperature_large: f64,
    ensemble_size: usize,
    member_perturbation: f64,
    seed: u64,
    encoder_depth: usize,
    encoder_width: usize,
    encoder_seed: u64,
}

impl CorpusBlock {
    fn to_spec(&self, vocab_size: usize) -> Result<CorpusSpec> {
        let source_unigram = match (&self.source_unigram, self.geometric_ratio) {
            (Some(u), None) => u.clone(),
            (None, Some(r)) => geometric_unigram(vocab_size, r, self.geometric_reversed),
            _ => {
                return Err(NapError::InvalidConfig(
                    "corpus needs exactly one of source_unigram, geometric_ratio".into(),
                ))
            }
        };
        Ok(CorpusSpec {
            n_examples: self.n_examples,
            length_range: (self.length_min, self.length_max),
            source_unigram,
            domain_tag: self.domain.clone(),
            split: Split::parse(&self.split)?,
            temperature_small: self.temperature_small,
            temperature_large: self.temperature_large,
            ensemble_size: self.ensemble_size,
            member_perturbation: self.member_perturbation,
            seed: self.seed,
            encoder_depth: self.encoder_depth,
            encoder_width: self.encoder_width,
            encoder_seed: self.encoder_seed,
        })
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)?;
    let config: GenConfig = toml::from_str(&text)
        .map_err(|e| NapError::InvalidConfig(format!("{}: {e}", args.config.display())))?;
    if config.corpus.is_empty() {
        return Err(NapError::InvalidConfig("config has no [[corpus]] blocks".into()));
    }
    let teacher = TeacherSpec::generate(config.teacher.vocab_size, config.teacher.seed)?;

    // Blocks sharing an output path append to the same file, in config order.
    let mut outputs: Vec<PathBuf> = Vec::new();
    let mut per_output: Vec<Vec<ScoreRecord>> = Vec::new();
    println!("output\tdomain\tsplit\tn\tmean_source_len");
    for block in &config.corpus {
        let spec = block.to_spec(config.teacher.vocab_size)?;
        let generated = gen_corpus(&teacher, &spec)?;
        let mean_len = generated.iter().map(|g| g.source.len() as f64).sum::<f64>()
            / generated.len() as f64;
        println!(
            "{}\t{}\t{}\t{}\t{mean_len:.2}",
            block.output.display(),
            block.domain,
            block.split,
            generated.len()
        );
        let slot = match outputs.iter().position(|p| p == &block.output) {
            Some(i) => i,
            None => {
                outputs.push(block.output.clone());
                per_output.push(Vec::new());
                outputs.len() - 1
            }
        };
        per_output[slot].extend(generated.into_iter().map(|g| g.record));
    }
    for (path, records) in outputs.iter().zip(&per_output) {
        let mut ids = BTreeSet::new();
        for r in records {
            if !ids.insert(&r.id) {
                return Err(NapError::InvalidConfig(format!(
                    "duplicate record id '{}' in {}",
                    r.id,
                    path.display()
                )));
            }
        }
        write_jsonl(path, records)?;
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let records = read_jsonl(&args.records)?;
    let dim = records[0].feature_dim();
    let config = TrainConfig {
        loss: LossSpec { kind: args.loss, epsilon: args.epsilon, alpha: args.alpha },
        learning_rate: args.lr,
        batch_size: args.batch,
        max_epochs: args.max_epochs,
        evals_per_epoch: args.evals_per_epoch,
        patience_evals: args.patience,
        seed: args.seed,
        hidden_width: args.hidden,
        aux_field: args.aux_field.clone(),
    };
    let init = HeadParams::init(args.variant, args.pooling, dim, args.hidden, args.seed);
    let (params, history) = train_head(&records, &args.target, &config, &init)?;
    save_params(&args.out, &params)?;

    let history_path = args.history.clone().unwrap_or_else(|| {
        let mut name = args.out.file_stem().unwrap_or_default().to_os_string();
        name.push(".history.csv");
        args.out.with_file_name(name)
    });
    let mut csv = String::from("step,validation_spearman\n");
    for (step, spearman) in &history {
        csv.push_str(&format!("{step},{spearman}\n"));
    }
    write_text(&history_path, &csv)?;

    let best = history.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    println!("best_validation_spearman {best}");
    Ok(())
}

fn scored(records_path: &Path, params: &HeadParams) -> Result<(Vec<ScoreRecord>, Vec<f64>)> {
    let records = read_jsonl(records_path)?;
    let dim = records[0].feature_dim();
    if dim != params.input_dim() {
        return Err(NapError::DimensionMismatch(format!(
            "records in {} have feature width {dim}, params expect {}",
            records_path.display(),
            params.input_dim()
        )));
    }
    let scores = score_all(params, &records)?;
    Ok((records, scores))
}

fn cmd_detect(args: DetectArgs) -> Result<()> {
    let params = load_params(&args.params)?;
    let (_, id_scores) = scored(&args.id_records, &params)?;
    let (_, ood_scores) = scored(&args.ood_records, &params)?;
    let pct = ood_detect(&id_scores, &ood_scores, args.direction)?;
    println!("{pct:.1}");
    if let Some(csv_path) = &args.csv {
        let dir = match args.direction {
            OodDirection::HigherIsOod => "higher_is_ood",
            OodDirection::LowerIsOod => "lower_is_ood",
        };
        let csv = format!(
            "id_records,ood_records,direction,auroc_percent\n{},{},{dir},{pct}\n",
            args.id_records.display(),
            args.ood_records.display()
        );
        write_text(csv_path, &csv)?;
    }
    Ok(())
}

fn parse_fractions(arg: &Option<String>) -> Result<Vec<f64>> {
    match arg {
        None => Ok((0..=18).map(|i| i as f64 * 0.05).collect()),
        Some(s) => s
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| NapError::InvalidConfig(format!("bad fraction '{tok}'")))
            })
            .collect(),
    }
}

fn cmd_filter(args: FilterArgs) -> Result<()> {
    let params = load_params(&args.params)?;
    let (records, predicted) = scored(&args.records, &params)?;
    let actual: Vec<FilterMetric> = records
        .iter()
        .map(|r| match args.mode {
            AggMode::MeanMetric => Ok(FilterMetric::Scalar(r.target(&args.metric_field)?)),
            AggMode::CorpusWer => Ok(FilterMetric::Wer {
                errors: r.target(&args.metric_field)? as u64,
                ref_len: r.target("ref_len")? as u64,
            }),
        })
        .collect::<Result<_>>()?;
    let fractions = parse_fractions(&args.fractions)?;
    let curve = filtering_curve(&predicted, &actual, &fractions, args.direction)?;
    let mut csv = String::from("fraction_removed,metric\n");
    for (f, m) in &curve {
        csv.push_str(&format!("{f},{m}\n"));
    }
    write_text(&args.out, &csv)
}

fn deferral_inputs(
    records: &[ScoreRecord],
    proxy_scores: &[f64],
    mode: AggMode,
    metric_field: &str,
) -> Result<Vec<DeferralInput>> {
    records
        .iter()
        .zip(proxy_scores)
        .map(|(r, &proxy_score)| {
            let small_field = format!("{metric_field}_small");
            let large_field = format!("{metric_field}_large");
            let ref_len = match mode {
                AggMode::MeanMetric => r.targets.get("ref_len").map_or(1, |&v| v as u64),
                AggMode::CorpusWer => r.target("ref_len")? as u64,
            };
            let outcome = |field: &str| -> Result<ModelOutcome> {
                let v = r.target(field)?;
                Ok(match mode {
                    AggMode::MeanMetric => ModelOutcome { metric: v, errors: 0 },
                    AggMode::CorpusWer => {
                        ModelOutcome { metric: v / ref_len as f64, errors: v as u64 }
                    }
                })
            };
            Ok(DeferralInput {
                proxy_score,
                small: outcome(&small_field)?,
                large: outcome(&large_field)?,
                ref_len,
                time_small: r.times.small,
                time_large: r.times.large,
                time_proxy: r.times.proxy,
            })
        })
        .collect()
}

fn curve_row(p: &OperatingPoint) -> String {
    format!("{},{},{},{}\n", p.threshold, p.fraction_deferred, p.metric, p.time)
}

fn cmd_defer(args: DeferArgs) -> Result<()> {
    let (records, proxy_scores) = match (&args.params, &args.proxy_field) {
        (Some(p), None) => {
            let params = load_params(p)?;
            scored(&args.records, &params)?
        }
        (None, Some(field)) => {
            let records = read_jsonl(&args.records)?;
            let scores =
                records.iter().map(|r| r.target(field)).collect::<Result<Vec<f64>>>()?;
            (records, scores)
        }
        _ => unreachable!("clap enforces exactly one of --params, --proxy-field"),
    };
    let inputs = deferral_inputs(&records, &proxy_scores, args.mode, &args.metric_field)?;
    let curve: OperatingCurve =
        deferral_curve(&inputs, args.policy, args.direction, args.mode, None)?;

    let mut csv = String::from("threshold,fraction_deferred,metric,time\n");
    for p in &curve.points {
        csv.push_str(&curve_row(p));
    }
    for &t in &args.match_time {
        let p = matched_operating_point_full(&curve, MatchTarget::Time(t))?;
        csv.push_str(&format!("match_time={t}\n"));
        csv.push_str(&curve_row(&p));
        println!("match_time={t} fraction_deferred={} metric={} time={}", p.fraction_deferred, p.metric, p.time);
    }
    for &m in &args.match_metric {
        let p = matched_operating_point_full(&curve, MatchTarget::Metric(m))?;
        csv.push_str(&format!("match_metric={m}\n"));
        csv.push_str(&curve_row(&p));
        println!("match_metric={m} fraction_deferred={} metric={} time={}", p.fraction_deferred, p.metric, p.time);
    }
    write_text(&args.out, &csv)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
