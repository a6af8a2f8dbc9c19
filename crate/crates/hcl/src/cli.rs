//! Command line: argument parsing and the subcommands.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use hcl_core::corpus::{self, Dataset, Split};
use hcl_core::curriculum::{build_plan, difficulty, entropy_curve, DifficultyScore, ShiftMode};
use hcl_core::eval::{es_partition, hesf_groups, report, EvalReport, LabelGroup, Metric};
use hcl_core::synth::{generate, sweep_pshift, SynthConfig};
use hcl_core::training::{predict, train, DeltaT, FinalMetrics, StepRecord, Strategy, TrainConfig, TrainLog};
use hcl_core::wheel::{normalize_rows, EmotionWheel, WheelConfig};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::compare::{run_compare, CompareReport};
use crate::config::{load_wheel, parse_wheel};
use crate::format::{read_dataset, write_dataset};
use crate::run::{RunDir, RunManifest};
use crate::table::{f4, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "hcl",
    version,
    about = "Hybrid curriculum learning for emotion recognition in conversation",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus and print its statistics.
    Stats(StatsArgs),
    /// Difficulty score of every conversation.
    Score(ScoreArgs),
    /// Baby-step buckets and the label-entropy curve.
    Plan(PlanArgs),
    /// Wheel similarity matrix and the initial soft-target matrix.
    Simmatrix(SimmatrixArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Train one strategy into a run directory.
    Train(TrainArgs),
    /// Evaluate a trained run on a corpus split.
    Eval(EvalArgs),
    /// Train all strategies over several seeds and tabulate the results.
    Compare(CompareArgs),
    /// One summary line per run directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShiftArg {
    /// Any two consecutive utterances with different labels.
    Any,
    /// Only label changes between different speakers.
    InterSpeaker,
}

impl From<ShiftArg> for ShiftMode {
    fn from(s: ShiftArg) -> Self {
        match s {
            ShiftArg::Any => ShiftMode::Any,
            ShiftArg::InterSpeaker => ShiftMode::InterSpeakerOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub file: PathBuf,
    /// Write the statistics as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value = "any")]
    pub shift_mode: ShiftArg,
    /// Write one JSON record per conversation.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    pub corpus: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "any")]
    pub shift_mode: ShiftArg,
    /// Write the plan as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the entropy curve as two-column CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimmatrixArgs {
    pub wheel: PathBuf,
    /// Comma-separated label list, in matrix order.
    #[arg(value_delimiter = ',', required = true)]
    pub labels: Vec<String>,
    /// Neutral label; defaults to the one label the wheel lists without an angle.
    #[arg(long)]
    pub neutral: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator config (JSON); see the README for the accepted shapes.
    #[arg(long)]
    pub config: PathBuf,
    /// Output corpus file, `-` for standard output.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Strategy::ALL.iter().map(|s| s.name()).collect();
        format!("unknown strategy `{s}` (expected one of {})", names.join(", "))
    })
}

/// `N` is N optimizer steps; `Nep`, `Nepoch` or `Nepochs` is N passes over the
/// visible conversations.
pub fn parse_delta_t(s: &str) -> Result<DeltaT, String> {
    let (num, epochs) = match s.find(|c: char| !c.is_ascii_digit()) {
        None => (s, false),
        Some(i) if matches!(&s[i..], "ep" | "epoch" | "epochs") => (&s[..i], true),
        Some(_) => return Err(format!("bad interval `{s}` (use e.g. 100 or 1epoch)")),
    };
    let n: u64 = num.parse().map_err(|_| format!("bad interval `{s}`"))?;
    Ok(if epochs { DeltaT::Epochs(n) } else { DeltaT::Steps(n) })
}

/// Hyperparameters shared by `train` and `compare`; unset flags keep the
/// library defaults.
#[derive(Debug, Args)]
pub struct TrainFlags {
    /// Wheel file; defaults to $HCL_CONFIG_DIR/wheel.json, then the built-in wheel.
    #[arg(long)]
    pub wheel: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Steps between target updates (`100`) or epochs (`1epoch`).
    #[arg(long, value_parser = parse_delta_t)]
    pub delta_t: Option<DeltaT>,
    #[arg(long)]
    pub epochs_per_step: Option<usize>,
    #[arg(long)]
    pub extra_epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub hash_dim: Option<usize>,
    #[arg(long, value_enum)]
    pub shift_mode: Option<ShiftArg>,
    /// Carry soft targets across baby steps instead of re-initializing them.
    #[arg(long)]
    pub no_esc_reset: bool,
}

impl TrainFlags {
    fn apply(&self, mut c: TrainConfig) -> TrainConfig {
        if let Some(v) = self.k {
            c.k = v;
        }
        if let Some(v) = self.epsilon {
            c.epsilon = v;
        }
        if let Some(v) = self.delta_t {
            c.delta_t = v;
        }
        if let Some(v) = self.epochs_per_step {
            c.epochs_per_step = v;
        }
        if let Some(v) = self.extra_epochs {
            c.extra_epochs = v;
        }
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.hidden {
            c.hidden = v;
        }
        if let Some(v) = self.hash_dim {
            c.hash_dim = v;
        }
        if let Some(v) = self.shift_mode {
            c.shift_mode = v.into();
        }
        if self.no_esc_reset {
            c.esc_reset_per_step = false;
        }
        c
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub corpus: PathBuf,
    #[arg(long, value_parser = parse_strategy, default_value = "hcl")]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Run directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace an existing run directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    /// Support-weighted F1.
    Weighted,
    /// Micro-F1 with the neutral label left out.
    Micro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupsArg {
    None,
    /// {happy, excited, sad, frustrated} and {neutral, angry}.
    Hesf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub run_dir: PathBuf,
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value = "weighted")]
    pub metric: MetricArg,
    #[arg(long, value_enum, default_value = "none")]
    pub groups: GroupsArg,
    #[arg(long, value_enum, default_value = "any")]
    pub shift_mode: ShiftArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub corpus: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    /// Subset of strategies; all six by default.
    #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
    pub strategies: Vec<Strategy>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub run_dirs: Vec<PathBuf>,
}

/// Why a subcommand failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

impl From<hcl_core::Error> for Failure {
    fn from(e: hcl_core::Error) -> Self {
        Failure::Data(e.into())
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Stats(a) => cmd_stats(a, out, err),
        Command::Score(a) => cmd_score(a, out, err),
        Command::Plan(a) => cmd_plan(a, out, err),
        Command::Simmatrix(a) => cmd_simmatrix(a, out),
        Command::Synth(a) => cmd_synth(a, out, err),
        Command::Train(a) => cmd_train(a, out, err),
        Command::Eval(a) => cmd_eval(a, out, err),
        Command::Compare(a) => cmd_compare(a, out, err),
        Command::Report(a) => cmd_report(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_DATA
        }
    }
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Reads and validates a corpus; warnings go to `err`, errors fail the load.
pub fn load_corpus(path: &Path, err: &mut dyn Write) -> anyhow::Result<Dataset> {
    let dataset = read_dataset(path)?;
    let issues = corpus::validate(&dataset);
    let mut errors = 0;
    for issue in &issues {
        writeln!(err, "{}: {issue}", path.display())?;
        errors += usize::from(issue.is_error());
    }
    if errors > 0 {
        anyhow::bail!("{}: {errors} validation error(s)", path.display());
    }
    Ok(dataset)
}

fn cmd_stats(a: &StatsArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let dataset = load_corpus(&a.file, err)?;
    let st = corpus::stats(&dataset)?;
    let mut t = Table::new(&["split", "conversations", "utterances"]);
    for s in &st.splits {
        t.row(vec![s.split.to_string(), s.conversations.to_string(), s.utterances.to_string()]);
    }
    t.row(vec![
        "total".into(),
        st.total_conversations().to_string(),
        st.total_utterances().to_string(),
    ]);
    writeln!(out, "dataset {}", st.name)?;
    write!(out, "{}", t.render())?;
    writeln!(out, "classes {}  avg_utt {:.2}", st.classes, st.avg_utt)?;
    let mut header = vec!["label".to_string()];
    header.extend(Split::ALL.iter().map(|s| s.to_string()));
    let mut h = Table::new(&header);
    for (i, label) in st.labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend(st.splits.iter().map(|s| s.histogram[i].to_string()));
        h.row(row);
    }
    write!(out, "{}", h.render())?;
    if let Some(p) = &a.out {
        write_json_file(p, &st)?;
    }
    Ok(())
}

fn cmd_score(a: &ScoreArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let dataset = load_corpus(&a.corpus, err)?;
    let scores = dataset
        .split(a.split.into())
        .iter()
        .map(|c| difficulty(c, a.shift_mode.into()))
        .collect::<hcl_core::Result<Vec<DifficultyScore>>>()?;
    let mut t = Table::new(&["conversation", "n_u", "n_sp", "n_es", "score"]);
    for s in &scores {
        t.row(vec![
            s.conversation.clone(),
            s.n_u.to_string(),
            s.n_sp.to_string(),
            s.n_es.to_string(),
            f4(s.score),
        ]);
    }
    write!(out, "{}", t.render())?;
    if let Some(p) = &a.out {
        let mut text = String::new();
        for s in &scores {
            text += &serde_json::to_string(s).map_err(anyhow::Error::from)?;
            text.push('\n');
        }
        std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDoc {
    pub k: usize,
    pub shift_mode: ShiftMode,
    /// Conversation ids per bucket, easiest first.
    pub buckets: Vec<Vec<String>>,
    pub scores: Vec<DifficultyScore>,
    /// Label entropy (nats) of the visible set after each baby step.
    pub entropy_curve: Vec<f64>,
}

fn cmd_plan(a: &PlanArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let dataset = load_corpus(&a.corpus, err)?;
    let mode: ShiftMode = a.shift_mode.into();
    let plan = build_plan(&dataset, a.k, mode)?;
    let curve = entropy_curve(&plan, &dataset);
    let mut t = Table::new(&["bucket", "conversations", "min_score", "max_score", "entropy"]);
    for (b, bucket) in plan.buckets.iter().enumerate() {
        let s: Vec<f64> = bucket.iter().map(|&i| plan.scores[i].score).collect();
        t.row(vec![
            (b + 1).to_string(),
            bucket.len().to_string(),
            f4(s.iter().copied().fold(f64::INFINITY, f64::min)),
            f4(s.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            f4(curve[b]),
        ]);
    }
    write!(out, "{}", t.render())?;
    if let Some(p) = &a.out {
        let doc = PlanDoc {
            k: plan.k(),
            shift_mode: mode,
            buckets: plan
                .bucket_ids()
                .into_iter()
                .map(|b| b.into_iter().map(String::from).collect())
                .collect(),
            scores: plan.scores.clone(),
            entropy_curve: curve.clone(),
        };
        write_json_file(p, &doc)?;
    }
    if let Some(p) = &a.csv {
        let mut text = String::from("stage,entropy\n");
        for (s, e) in curve.iter().enumerate() {
            text += &format!("{},{}\n", s + 1, f4(*e));
        }
        std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimmatrixDoc {
    pub labels: Vec<String>,
    pub neutral: Option<String>,
    pub similarity: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

fn matrix_table(labels: &[String], rows: &[Vec<f64>]) -> String {
    let mut header = vec![String::new()];
    header.extend(labels.iter().cloned());
    let mut t = Table::new(&header);
    for (l, r) in labels.iter().zip(rows) {
        let mut row = vec![l.clone()];
        row.extend(r.iter().map(|&x| f4(x)));
        t.row(row);
    }
    t.render()
}

fn cmd_simmatrix(a: &SimmatrixArgs, out: &mut dyn Write) -> CmdResult {
    let text = std::fs::read_to_string(&a.wheel).with_context(|| format!("reading {}", a.wheel.display()))?;
    let config = parse_wheel(&text).with_context(|| format!("parsing wheel {}", a.wheel.display()))?;
    let neutral = match &a.neutral {
        Some(n) => Some(n.clone()),
        None => {
            let angleless: Vec<&str> = config
                .angleless()
                .filter(|l| a.labels.iter().any(|x| x == l))
                .collect();
            match angleless.as_slice() {
                [] => None,
                [one] => Some(one.to_string()),
                _ => {
                    return Err(Failure::Usage(format!(
                        "several labels without an angle ({}); pick one with --neutral",
                        angleless.join(", ")
                    )))
                }
            }
        }
    };
    let wheel = EmotionWheel::load(&config, &a.labels, neutral.as_deref())?;
    let sim = wheel.similarity_matrix();
    let targets = normalize_rows(&sim)?;
    writeln!(out, "similarity")?;
    write!(out, "{}", matrix_table(&a.labels, &sim.values))?;
    writeln!(out, "targets")?;
    write!(out, "{}", matrix_table(&a.labels, targets.rows()))?;
    if let Some(p) = &a.out {
        let doc = SimmatrixDoc {
            labels: a.labels.clone(),
            neutral,
            similarity: sim.values.clone(),
            targets: targets.rows().to_vec(),
        };
        write_json_file(p, &doc)?;
    }
    Ok(())
}

/// Accepted shapes of a `synth` config file.
#[derive(Debug, Clone, PartialEq)]
pub enum SynthSpec {
    Single(SynthConfig),
    Sweep(Vec<SynthConfig>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepDoc {
    sweep: Vec<SynthConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BaseDoc {
    base: SynthConfig,
    p_shifts: Vec<f64>,
}

impl SynthSpec {
    /// A plain generator config, `{"sweep": [config, ...]}`, or
    /// `{"base": config, "p_shifts": [...]}`. In the last form batch `i` uses
    /// seed `base.seed + i`.
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let has = |k: &str| value.get(k).is_some();
        Ok(if has("sweep") {
            SynthSpec::Sweep(serde_json::from_value::<SweepDoc>(value)?.sweep)
        } else if has("base") {
            let doc: BaseDoc = serde_json::from_value(value)?;
            SynthSpec::Sweep(
                doc.p_shifts
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| SynthConfig {
                        p_shift: p,
                        seed: doc.base.seed + i as u64,
                        ..doc.base.clone()
                    })
                    .collect(),
            )
        } else {
            SynthSpec::Single(serde_json::from_value(value)?)
        })
    }

    pub fn generate(&self) -> hcl_core::Result<Dataset> {
        match self {
            SynthSpec::Single(c) => generate(c),
            SynthSpec::Sweep(cs) => sweep_pshift(cs),
        }
    }
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let spec = SynthSpec::parse(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    let dataset = spec.generate()?;
    if a.out.as_os_str() == "-" {
        write_dataset(&dataset, &mut *out)?;
    } else {
        let file = std::fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
        write_dataset(&dataset, std::io::BufWriter::new(file))?;
    }
    writeln!(
        err,
        "wrote {} train, {} val, {} test conversations",
        dataset.train.len(),
        dataset.val.len(),
        dataset.test.len()
    )?;
    Ok(())
}

/// `config.json` of a `train` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub corpus: String,
    /// Wheel file read, or `None` for the built-in wheel.
    pub wheel: Option<String>,
    pub wheel_angles: WheelConfig,
    pub train: TrainConfig,
}

/// One line of `trainlog.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LogLine {
    Phase {
        stage: usize,
        esc: hcl_core::training::EscMode,
        steps: usize,
        conversations: Vec<String>,
    },
    Step(StepRecord),
    Final {
        strategy: Strategy,
        steps: u64,
        offdiag_mass: f64,
        train_weighted_f1: f64,
        val_weighted_f1: Option<f64>,
    },
}

pub fn log_lines(log: &TrainLog, dataset: &Dataset) -> Vec<LogLine> {
    let mut lines: Vec<LogLine> = log
        .phases
        .iter()
        .map(|p| LogLine::Phase {
            stage: p.stage,
            esc: p.esc,
            steps: p.steps,
            conversations: p.visible.iter().map(|&i| dataset.train[i].id.clone()).collect(),
        })
        .collect();
    lines.extend(log.records.iter().cloned().map(LogLine::Step));
    let FinalMetrics {
        steps,
        offdiag_mass,
        train_weighted_f1,
        val_weighted_f1,
    } = log.final_metrics.clone();
    lines.push(LogLine::Final {
        strategy: log.strategy,
        steps,
        offdiag_mass,
        train_weighted_f1,
        val_weighted_f1,
    });
    lines
}

pub fn curve_csv(records: &[StepRecord]) -> String {
    let mut s = String::from("step,babystep,loss,offdiag_mass,entropy\n");
    for r in records {
        s += &format!(
            "{},{},{},{},{}\n",
            r.step,
            r.babystep,
            f4(r.loss),
            f4(r.offdiag_mass),
            f4(r.entropy)
        );
    }
    s
}

fn resolve_train_config(flags: &TrainFlags, strategy: Strategy, seed: u64) -> Result<TrainConfig, Failure> {
    let config = flags.apply(TrainConfig {
        strategy,
        seed,
        ..TrainConfig::default()
    });
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(config)
}

fn load_wheel_for(
    flags: &TrainFlags,
    dataset: &Dataset,
) -> anyhow::Result<(WheelConfig, Option<PathBuf>, EmotionWheel)> {
    let (config, path) = load_wheel(flags.wheel.as_deref())?;
    let wheel = EmotionWheel::load(&config, &dataset.label_set, dataset.neutral_label.as_deref())
        .with_context(|| "placing the corpus labels on the wheel")?;
    Ok((config, path, wheel))
}

fn check_k(config: &TrainConfig, dataset: &Dataset) -> CmdResult {
    if config.k > dataset.train.len() {
        return Err(Failure::Usage(format!(
            "k = {} exceeds the {} training conversations",
            config.k,
            dataset.train.len()
        )));
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let config = resolve_train_config(&a.flags, a.strategy, a.seed)?;
    let dataset = load_corpus(&a.corpus, err)?;
    check_k(&config, &dataset)?;
    let (wheel_config, wheel_path, wheel) = load_wheel_for(&a.flags, &dataset)?;
    let run = RunDir::create(&a.out, a.force).map_err(|e| Failure::Usage(format!("{e:#}")))?;

    let run_config = TrainRunConfig {
        corpus: a.corpus.display().to_string(),
        wheel: wheel_path.as_ref().map(|p| p.display().to_string()),
        wheel_angles: wheel_config,
        train: config.clone(),
    };
    let mut inputs: Vec<&Path> = vec![&a.corpus];
    if let Some(p) = &wheel_path {
        inputs.push(p);
    }
    let manifest = RunManifest::new(
        "train",
        serde_json::to_value(&run_config).map_err(anyhow::Error::from)?,
        &inputs,
        vec![config.seed],
    )?;
    run.write_json("config.json", &run_config)?;

    let (params, log) = train(&dataset, &wheel, &config)?;

    let mut text = String::new();
    for line in log_lines(&log, &dataset) {
        text += &serde_json::to_string(&line).map_err(anyhow::Error::from)?;
        text.push('\n');
    }
    run.write_text("trainlog.jsonl", &text)?;
    run.write_text("curve.csv", &curve_csv(&log.records))?;
    Checkpoint::new(params, config.seed, dataset.label_set.clone()).save(&run.file("checkpoint.json"))?;
    run.finish(manifest)?;

    let f = &log.final_metrics;
    let mut t = Table::new(&["strategy", "steps", "offdiag_mass", "train_wf1", "val_wf1"]);
    t.row(vec![
        config.strategy.name().into(),
        f.steps.to_string(),
        f4(f.offdiag_mass),
        f4(f.train_weighted_f1),
        f.val_weighted_f1.map_or("-".into(), f4),
    ]);
    write!(out, "{}", t.render())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalDoc {
    pub run: String,
    pub corpus: String,
    pub split: Split,
    pub report: EvalReport,
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let run = RunDir::open(&a.run_dir)?;
    let ck = Checkpoint::load(&run.file("checkpoint.json"))?;
    let dataset = load_corpus(&a.corpus, err)?;
    if ck.labels != dataset.label_set {
        return Err(Failure::Data(anyhow::anyhow!(
            "label set of {} differs from the checkpoint's",
            a.corpus.display()
        )));
    }
    let split: Split = a.split.into();
    let convs = dataset.split(split);
    if convs.is_empty() {
        return Err(Failure::Data(anyhow::anyhow!("split {split} is empty")));
    }
    let metric = match a.metric {
        MetricArg::Weighted => Metric::WeightedF1,
        MetricArg::Micro => {
            let n = dataset
                .neutral_label
                .as_deref()
                .and_then(|n| dataset.label_index(n))
                .ok_or_else(|| Failure::Usage("--metric micro needs a neutral label in the corpus header".into()))?;
            Metric::MicroF1Excluding { excluded: n }
        }
    };
    let groups: Vec<LabelGroup> = match a.groups {
        GroupsArg::None => Vec::new(),
        GroupsArg::Hesf => hesf_groups(),
    };
    let (gold, pred) = predict(&ck.params, &dataset, convs)?;
    let part = es_partition(convs, a.shift_mode.into());
    let rep = report(&gold, &pred, &part.mask(), &dataset.label_set, &metric, &groups)?;

    writeln!(
        out,
        "{} on {split}: {}{}",
        rep.metric,
        f4(rep.overall),
        if rep.degenerate { " (degenerate)" } else { "" }
    )?;
    let mut t = Table::new(&["label", "f1", "share"]);
    for l in &rep.per_label {
        t.row(vec![l.label.clone(), f4(l.f1), f4(l.share)]);
    }
    write!(out, "{}", t.render())?;
    let mut p = Table::new(&["partition", "f1", "share"]);
    p.row(vec!["ES".into(), f4(rep.shift.f1), f4(rep.shift.share)]);
    p.row(vec!["N-ES".into(), f4(rep.no_shift.f1), f4(rep.no_shift.share)]);
    write!(out, "{}", p.render())?;
    if !rep.groups.is_empty() {
        let mut g = Table::new(&["group", "f1", "share"]);
        for s in &rep.groups {
            g.row(vec![s.name.clone(), f4(s.f1), f4(s.share)]);
        }
        write!(out, "{}", g.render())?;
    }
    if let Some(path) = &a.out {
        let doc = EvalDoc {
            run: a.run_dir.display().to_string(),
            corpus: a.corpus.display().to_string(),
            split,
            report: rep,
        };
        write_json_file(path, &doc)?;
    }
    Ok(())
}

/// `config.json` of a `compare` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRunConfig {
    pub corpus: String,
    pub wheel: Option<String>,
    pub wheel_angles: WheelConfig,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub split: Split,
    /// Shared hyperparameters; `strategy` and `seed` are overridden per run.
    pub train: TrainConfig,
}

fn cmd_compare(a: &CompareArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let base = resolve_train_config(&a.flags, Strategy::Hcl, 0)?;
    if a.seeds.is_empty() {
        return Err(Failure::Usage("--seeds is empty".into()));
    }
    let mut seeds = a.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let strategies: Vec<Strategy> = if a.strategies.is_empty() {
        Strategy::ALL.to_vec()
    } else {
        Strategy::ALL.into_iter().filter(|s| a.strategies.contains(s)).collect()
    };
    let dataset = load_corpus(&a.corpus, err)?;
    check_k(&base, &dataset)?;
    let (wheel_config, wheel_path, wheel) = load_wheel_for(&a.flags, &dataset)?;
    let split: Split = a.split.into();
    let run = RunDir::create(&a.out, a.force).map_err(|e| Failure::Usage(format!("{e:#}")))?;
    let run_config = CompareRunConfig {
        corpus: a.corpus.display().to_string(),
        wheel: wheel_path.as_ref().map(|p| p.display().to_string()),
        wheel_angles: wheel_config,
        strategies: strategies.clone(),
        seeds: seeds.clone(),
        split,
        train: base.clone(),
    };
    let mut inputs: Vec<&Path> = vec![&a.corpus];
    if let Some(p) = &wheel_path {
        inputs.push(p);
    }
    let manifest = RunManifest::new(
        "compare",
        serde_json::to_value(&run_config).map_err(anyhow::Error::from)?,
        &inputs,
        seeds.clone(),
    )?;
    run.write_json("config.json", &run_config)?;

    let job = || run_compare(&dataset, &wheel, &base, &strategies, &seeds, split);
    let result: CompareReport = match a.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(anyhow::Error::from)?
            .install(job)?,
        None => job()?,
    };
    run.write_json("compare.json", &result)?;
    run.write_text("compare.csv", &result.summary_csv())?;
    run.write_text("runs.csv", &result.runs_csv())?;
    run.finish(manifest)?;

    writeln!(out, "weighted_f1 on {split}, {} seed(s)", seeds.len())?;
    write!(out, "{}", result.table())?;
    match result.ordering_holds {
        Some(h) => writeln!(out, "hcl >= ucf >= ccf: {}", if h { "yes" } else { "no" })?,
        None => writeln!(out, "hcl >= ucf >= ccf: n/a")?,
    }
    Ok(())
}

fn report_line(dir: &Path) -> anyhow::Result<Vec<String>> {
    let run = RunDir::open(dir)?;
    let manifest = run.manifest()?;
    let inputs = match manifest.verify_inputs() {
        Ok(()) => "ok",
        Err(_) => "changed",
    };
    let seeds = manifest
        .seeds
        .iter()
        .map(u64::to_string)
        .collect::<Vec<_>>()
        .join(",");
    let name = dir.display().to_string();
    match manifest.subcommand.as_str() {
        "train" => {
            let text = std::fs::read_to_string(run.file("trainlog.jsonl"))?;
            let last = text.lines().last().context("empty trainlog.jsonl")?;
            let LogLine::Final {
                strategy,
                steps,
                offdiag_mass,
                train_weighted_f1,
                val_weighted_f1,
            } = serde_json::from_str(last)?
            else {
                anyhow::bail!("{name}: trainlog.jsonl does not end with a final record");
            };
            Ok(vec![
                name,
                "train".into(),
                strategy.short().into(),
                seeds,
                steps.to_string(),
                f4(offdiag_mass),
                f4(train_weighted_f1),
                val_weighted_f1.map_or("-".into(), f4),
                "-".into(),
                inputs.into(),
            ])
        }
        "compare" => {
            let rep: CompareReport = run.read_json("compare.json")?;
            let best = rep
                .summary
                .iter()
                .max_by(|a, b| a.mean.total_cmp(&b.mean))
                .context("compare.json has no results")?;
            let steps = rep.runs.iter().find(|r| r.strategy == best.strategy).map_or(0, |r| r.steps);
            Ok(vec![
                name,
                "compare".into(),
                best.strategy.short().into(),
                seeds,
                steps.to_string(),
                f4(best.offdiag_mass),
                "-".into(),
                "-".into(),
                f4(best.mean),
                inputs.into(),
            ])
        }
        other => anyhow::bail!("{name}: unknown run kind `{other}`"),
    }
}

fn cmd_report(a: &ReportArgs, out: &mut dyn Write) -> CmdResult {
    let mut t = Table::new(&[
        "run",
        "kind",
        "strategy",
        "seeds",
        "steps",
        "offdiag_mass",
        "train_wf1",
        "val_wf1",
        "test_wf1",
        "inputs",
    ]);
    for dir in &a.run_dirs {
        t.row(report_line(dir)?);
    }
    write!(out, "{}", t.render())?;
    Ok(())
}
