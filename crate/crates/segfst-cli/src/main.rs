//! Command-line front end for the segmentation toolkit.
//!
//! One passage per input line, whitespace tokenized. `segment` inserts
//! `<SENT>` delimiters, `evaluate` scores a prediction file against a
//! reference, `oracle` projects boundaries from punctuated text, and
//! `train-scorer` fits the bundled n-gram scorer. `scorer-stub` is a
//! reference implementation of the external scorer protocol, mainly useful
//! for loopback testing.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for unreadable or
//! malformed data, 3 when a scorer is unavailable or misbehaves.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use segfst::decode::{parse_annotated, DecodeError};
use segfst::eval::{
    oracle_segment, reference_boundaries, EvalReport, HistogramSpec, LengthHistogram,
    OracleOptions, PassageRow, PrfCounts,
};
use segfst::fst::SymbolTable;
use segfst::scoring::external::ExternalScorer;
use segfst::scoring::ngram::{NgramModel, NgramScorer};
use segfst::scoring::{
    CopyScorer, HallucinateScorer, MarkerScorer, RandomScorer, ScoringError,
    NEG_INFINITY_SURROGATE,
};
use segfst::text::{render, tokenize, DELIMITER_TEXT, END_TEXT};
use segfst::window::{make_windows, WindowError};
use segfst::{constraints, DecodeConfig, DecodeMode, Scorer, Segmentation, TokenSeq, WindowSpec};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEGFST_LOG", "warn"))
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("segfst: {err}");
            ExitCode::from(err.code())
        }
    }
}

#[derive(Parser)]
#[command(
    name = "segfst",
    version,
    about = "Segment unpunctuated transcripts into sentence-like units"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Insert sentence delimiters into transcripts, one passage per line
    Segment(SegmentArgs),
    /// Score predicted segmentations against a reference file
    Evaluate(EvaluateArgs),
    /// Project boundaries from punctuated references onto transcripts
    Oracle(OracleArgs),
    /// Train the n-gram scorer on delimited text
    TrainScorer(TrainScorerArgs),
    /// Print the sliding-window plan for a passage length
    Windows(WindowsArgs),
    /// Answer scorer requests on stdin with copy-scorer semantics
    ScorerStub,
}

#[derive(Args)]
struct WindowArgs {
    /// Window size in tokens
    #[arg(short = 'w', long = "window-size", default_value_t = 40)]
    window: usize,
    /// Tokens shared between consecutive windows
    #[arg(short = 'b', long = "context", default_value_t = 10)]
    overlap: usize,
    /// Tokens at the end of each window whose boundaries are discarded
    #[arg(short = 'r', long = "right-context", default_value_t = 5)]
    split_back: usize,
}

impl WindowArgs {
    fn spec(&self) -> Result<WindowSpec, CliError> {
        WindowSpec::new(self.window, self.overlap, self.split_back)
            .map_err(|err| CliError::Usage(err.to_string()))
    }
}

#[derive(Args)]
struct SegmentArgs {
    /// Transcript file, one passage per line ("-" for stdin)
    #[arg(default_value = "-")]
    input: String,
    #[command(flatten)]
    windows: WindowArgs,
    /// Number of hypotheses kept per decoding step
    #[arg(long, default_value_t = 4)]
    beam: usize,
    /// How decoder output is kept admissible
    #[arg(long, value_enum, default_value_t = ModeArg::Fst)]
    mode: ModeArg,
    /// Scorer to drive the search: mock:{copy,hallucinate,random,marker:<tok>},
    /// ngram:<model.json>, or external:<command>
    #[arg(long)]
    scorer: String,
    /// Seed for mock:random
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seconds to wait for each external scorer response
    #[arg(long, default_value_t = 30.0)]
    scorer_timeout: f64,
    /// Write each window's compiled constraint automaton into this directory
    #[arg(long, value_name = "DIR")]
    dump_fst: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    /// Search inside the compiled window constraint
    Fst,
    /// Search freely, then repair the output by alignment
    Repair,
    /// Search freely and reject ill-formed output
    None,
}

impl From<ModeArg> for DecodeMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Fst => DecodeMode::FstConstrained,
            ModeArg::Repair => DecodeMode::LevenshteinRepair,
            ModeArg::None => DecodeMode::Unconstrained,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted segmentations, one delimited passage per line
    pred: String,
    /// Reference segmentations in the same format
    #[arg(long)]
    gold: String,
    /// What to count as a hit
    #[arg(long, value_enum, default_value_t = UnitArg::Boundary)]
    unit: UnitArg,
    /// Emit the full report as JSON instead of a summary
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum UnitArg {
    /// Boundary positions between tokens
    Boundary,
    /// Whole segments with exact spans
    Segment,
}

impl UnitArg {
    fn name(self) -> &'static str {
        match self {
            UnitArg::Boundary => "boundary",
            UnitArg::Segment => "segment",
        }
    }
}

#[derive(Args)]
struct OracleArgs {
    /// Transcript file to project boundaries onto; defaults to the stripped reference
    transcript: Option<String>,
    /// Punctuated reference text, one passage per line
    #[arg(long)]
    reference: String,
    /// File of abbreviations whose trailing period never ends a sentence
    #[arg(long)]
    abbreviations: Option<String>,
}

#[derive(Args)]
struct TrainScorerArgs {
    /// Delimited training text, one passage per line ("-" for stdin)
    #[arg(default_value = "-")]
    input: String,
    /// Where to write the model file
    #[arg(long, short = 'o')]
    output: PathBuf,
    /// Longest context plus one
    #[arg(long, default_value_t = 3)]
    order: usize,
    /// Add-k smoothing constant
    #[arg(long, default_value_t = 0.1)]
    smoothing: f64,
}

#[derive(Args)]
struct WindowsArgs {
    /// Passage length in tokens
    length: usize,
    #[command(flatten)]
    windows: WindowArgs,
}

enum CliError {
    Usage(String),
    Data(String),
    Scorer(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Scorer(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Data(msg) | CliError::Scorer(msg) => f.write_str(msg),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Segment(args) => segment(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Oracle(args) => oracle(args),
        Command::TrainScorer(args) => train_scorer(args),
        Command::Windows(args) => windows(args),
        Command::ScorerStub => scorer_stub(),
    }
}

fn read_lines(path: &str) -> Result<Vec<String>, CliError> {
    let text = if path == "-" {
        io::read_to_string(io::stdin())
    } else {
        fs::read_to_string(path)
    };
    let text = text.map_err(|err| CliError::Data(format!("cannot read {path}: {err}")))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn build_scorer(
    spec: &str,
    seed: u64,
    timeout: f64,
) -> Result<Box<dyn Scorer + Send + Sync>, CliError> {
    let (scheme, rest) = spec.split_once(':').ok_or_else(|| {
        CliError::Usage(format!(
            "scorer {spec:?} has no scheme; expected mock:, ngram:, or external:"
        ))
    })?;
    match scheme {
        "mock" => match rest {
            "copy" => Ok(Box::new(CopyScorer)),
            "hallucinate" => Ok(Box::new(HallucinateScorer)),
            "random" => Ok(Box::new(RandomScorer::new(seed))),
            _ => match rest.strip_prefix("marker:") {
                Some(marker) if !marker.is_empty() => Ok(Box::new(MarkerScorer::new(marker))),
                _ => Err(CliError::Usage(format!(
                    "unknown mock scorer {rest:?}; expected copy, hallucinate, random, or marker:<token>"
                ))),
            },
        },
        "ngram" => {
            let json = fs::read_to_string(rest)
                .map_err(|err| CliError::Data(format!("cannot read model {rest}: {err}")))?;
            let model = NgramModel::from_json(&json)
                .map_err(|err| CliError::Data(format!("model {rest}: {err}")))?;
            Ok(Box::new(NgramScorer::new(model)))
        }
        "external" => {
            let command: Vec<String> = rest.split_whitespace().map(str::to_owned).collect();
            if command.is_empty() {
                return Err(CliError::Usage("external scorer command is empty".to_owned()));
            }
            if !timeout.is_finite() || timeout <= 0.0 {
                return Err(CliError::Usage(format!(
                    "scorer timeout must be positive, got {timeout}"
                )));
            }
            let scorer = ExternalScorer::spawn(&command, Duration::from_secs_f64(timeout))
                .map_err(|err| CliError::Scorer(err.to_string()))?;
            Ok(Box::new(scorer))
        }
        _ => Err(CliError::Usage(format!(
            "unknown scorer scheme {scheme:?}; expected mock, ngram, or external"
        ))),
    }
}

fn warn_if_unnormalized(lineno: usize, line: &str) {
    if line.chars().any(char::is_uppercase) {
        log::warn!("line {lineno} contains uppercase; expected a lowercased transcript");
    }
    if line.chars().any(|c| matches!(c, '.' | ',' | '!' | '?' | ';' | ':')) {
        log::warn!("line {lineno} contains punctuation; expected an unpunctuated transcript");
    }
}

fn segment(args: SegmentArgs) -> Result<(), CliError> {
    let spec = args.windows.spec()?;
    if args.beam == 0 {
        return Err(CliError::Usage("beam width must be at least 1".to_owned()));
    }
    let scorer = build_scorer(&args.scorer, args.seed, args.scorer_timeout)?;
    let config = DecodeConfig { beam_size: args.beam, mode: args.mode.into(), max_output_len: None };
    if let Some(dir) = &args.dump_fst {
        fs::create_dir_all(dir)
            .map_err(|err| CliError::Data(format!("cannot create {}: {err}", dir.display())))?;
    }

    let lines = read_lines(&args.input)?;
    if lines.is_empty() {
        log::warn!("input has no passages");
        return Ok(());
    }

    // Passages are independent, so they decode in parallel; writing
    // happens afterwards in input order.
    let results = in_input_order(&lines, |idx, line| {
        segment_passage_line(idx + 1, line, &spec, scorer.as_ref(), &config, args.dump_fst.as_deref())
    });

    let stdout = io::stdout();
    let mut out = stdout.lock();
    for result in results {
        writeln!(out, "{}", result?).map_err(|err| CliError::Data(err.to_string()))?;
    }
    Ok(())
}

fn segment_passage_line(
    lineno: usize,
    line: &str,
    spec: &WindowSpec,
    scorer: &(dyn Scorer + Sync),
    config: &DecodeConfig,
    dump_dir: Option<&Path>,
) -> Result<String, CliError> {
    warn_if_unnormalized(lineno, line);
    let passage = TokenSeq::from_line(format!("line{lineno}"), line);
    if passage.is_empty() {
        log::warn!("line {lineno} is empty; passing it through");
        return Ok(String::new());
    }
    if let Some(dir) = dump_dir {
        dump_window_fsts(dir, lineno, &passage, spec)?;
    }
    let outcome = segfst::segment_passage(&passage, spec, scorer, config)
        .map_err(|err| classify_window_error(lineno, err))?;
    log::info!(
        "line {lineno}: {} windows, wellformed rate {:.2}, {} boundaries",
        outcome.windows.len(),
        outcome.wellformed_rate(),
        outcome.segmentation.boundaries().len()
    );
    Ok(render(passage.tokens(), &outcome.segmentation))
}

/// Maps `work` over the lines on a small thread pool and hands back one
/// result per line, in line order.
fn in_input_order<T, F>(lines: &[String], work: F) -> Vec<Result<T, CliError>>
where
    T: Send,
    F: Fn(usize, &str) -> Result<T, CliError> + Sync,
{
    let threads =
        thread::available_parallelism().map(usize::from).unwrap_or(1).min(lines.len());
    if threads <= 1 {
        return lines.iter().enumerate().map(|(idx, line)| work(idx, line)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T, CliError>>>> =
        lines.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(line) = lines.get(idx) else { break };
                let result = work(idx, line);
                *slots[idx].lock().expect("result slot") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("result slot").expect("worker filled every slot"))
        .collect()
}

fn classify_window_error(lineno: usize, err: WindowError) -> CliError {
    match &err {
        WindowError::Decode { source: DecodeError::Scoring(ScoringError::Unavailable(_)), .. } => {
            CliError::Scorer(format!("line {lineno}: {err}"))
        }
        _ => CliError::Data(format!("line {lineno}: {err}")),
    }
}

fn dump_window_fsts(
    dir: &Path,
    lineno: usize,
    passage: &TokenSeq,
    spec: &WindowSpec,
) -> Result<(), CliError> {
    let plan = make_windows(passage.len(), spec)
        .map_err(|err| CliError::Data(format!("line {lineno}: {err}")))?;
    for (k, planned) in plan.iter().enumerate() {
        let window = passage.window(planned.span.start, planned.span.end);
        let mut table = SymbolTable::new();
        let automaton = constraints::compile_window_constraint(&window, &mut table)
            .map_err(|err| CliError::Data(format!("line {lineno} window {k}: {err}")))?;
        let path = dir.join(format!("line{lineno}_w{k}.fst"));
        fs::write(&path, automaton.dump_text(&table))
            .map_err(|err| CliError::Data(format!("cannot write {}: {err}", path.display())))?;
    }
    Ok(())
}

fn parse_annotated_line(
    kind: &str,
    lineno: usize,
    line: &str,
) -> Result<(Vec<String>, Segmentation), CliError> {
    parse_annotated(&tokenize(line))
        .map_err(|err| CliError::Data(format!("{kind} line {lineno}: {err}")))
}

fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let pred_lines = read_lines(&args.pred)?;
    let gold_lines = read_lines(&args.gold)?;
    if pred_lines.len() != gold_lines.len() {
        return Err(CliError::Data(format!(
            "{} has {} passages but {} has {}",
            args.pred,
            pred_lines.len(),
            args.gold,
            gold_lines.len()
        )));
    }

    let mut pooled = PrfCounts::default();
    let mut histogram = LengthHistogram::new(HistogramSpec::default());
    let mut per_passage = Vec::with_capacity(pred_lines.len());
    for (idx, (pred_line, gold_line)) in pred_lines.iter().zip(&gold_lines).enumerate() {
        let lineno = idx + 1;
        let (pred_tokens, pred_seg) = parse_annotated_line("predicted", lineno, pred_line)?;
        let (gold_tokens, gold_seg) = parse_annotated_line("reference", lineno, gold_line)?;
        if pred_tokens != gold_tokens {
            return Err(CliError::Data(format!(
                "line {lineno}: predicted tokens do not match the reference tokens"
            )));
        }
        let mut counts = PrfCounts::default();
        let observed = match args.unit {
            UnitArg::Boundary => counts.observe_boundaries(&pred_seg, &gold_seg),
            UnitArg::Segment => counts.observe_segments(&pred_seg, &gold_seg),
        };
        observed.map_err(|err| CliError::Data(format!("line {lineno}: {err}")))?;
        histogram.observe(&pred_seg);
        let prf = counts.prf();
        per_passage.push(PassageRow {
            line: lineno,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            predicted: counts.predicted,
            gold: counts.gold,
            matched: counts.matched,
        });
        pooled.predicted += counts.predicted;
        pooled.gold += counts.gold;
        pooled.matched += counts.matched;
    }

    let micro = pooled.prf();
    let report = EvalReport {
        passages: pred_lines.len(),
        unit: args.unit.name().to_owned(),
        precision: micro.precision,
        recall: micro.recall,
        f1: micro.f1,
        predicted: pooled.predicted,
        gold: pooled.gold,
        matched: pooled.matched,
        wellformed_rate: None,
        length_histogram: histogram.rows(),
        per_passage,
    };

    if args.json {
        let json =
            serde_json::to_string_pretty(&report).map_err(|err| CliError::Data(err.to_string()))?;
        println!("{json}");
    } else {
        print_report(&report, &histogram);
    }
    Ok(())
}

fn print_report(report: &EvalReport, histogram: &LengthHistogram) {
    println!("passages   {}", report.passages);
    println!("unit       {}", report.unit);
    println!("precision  {:.4}", report.precision);
    println!("recall     {:.4}", report.recall);
    println!("f1         {:.4}", report.f1);
    println!(
        "predicted  {}   reference  {}   matched  {}",
        report.predicted, report.gold, report.matched
    );
    println!("segment lengths");
    print!("{}", histogram.to_csv());
}

fn oracle(args: OracleArgs) -> Result<(), CliError> {
    let references = read_lines(&args.reference)?;
    let transcripts = match &args.transcript {
        Some(path) => {
            let lines = read_lines(path)?;
            if lines.len() != references.len() {
                return Err(CliError::Data(format!(
                    "{} has {} passages but {} has {}",
                    path,
                    lines.len(),
                    args.reference,
                    references.len()
                )));
            }
            Some(lines)
        }
        None => None,
    };
    let mut options = OracleOptions::default();
    if let Some(path) = &args.abbreviations {
        for line in read_lines(path)? {
            let word = line.trim();
            if !word.is_empty() {
                options.abbreviations.insert(word.to_lowercase());
            }
        }
    }

    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (idx, reference) in references.iter().enumerate() {
        let lineno = idx + 1;
        let ref_tokens = tokenize(reference);
        let (tokens, segmentation) = match &transcripts {
            Some(lines) => {
                let transcript = TokenSeq::from_line(format!("line{lineno}"), &lines[idx]);
                let segmentation = oracle_segment(&ref_tokens, &transcript, &options);
                (transcript.tokens().to_vec(), segmentation)
            }
            None => reference_boundaries(&ref_tokens, &options),
        };
        if segmentation.boundaries().is_empty() {
            log::warn!("line {lineno} yields no boundaries; missing terminal punctuation?");
        }
        writeln!(out, "{}", render(&tokens, &segmentation))
            .map_err(|err| CliError::Data(err.to_string()))?;
    }
    Ok(())
}

fn train_scorer(args: TrainScorerArgs) -> Result<(), CliError> {
    let lines = read_lines(&args.input)?;
    let passages: Vec<Vec<String>> =
        lines.iter().map(|line| tokenize(line)).filter(|tokens| !tokens.is_empty()).collect();
    let model = NgramModel::train(&passages, args.order, args.smoothing).map_err(|err| match err {
        ScoringError::InvalidOrder(_) | ScoringError::InvalidSmoothing(_) => {
            CliError::Usage(err.to_string())
        }
        _ => CliError::Data(err.to_string()),
    })?;
    fs::write(&args.output, model.to_json())
        .map_err(|err| CliError::Data(format!("cannot write {}: {err}", args.output.display())))?;
    println!(
        "wrote order-{} model over {} word types to {}",
        model.order(),
        model.vocab().len(),
        args.output.display()
    );
    Ok(())
}

fn windows(args: WindowsArgs) -> Result<(), CliError> {
    let spec = args.windows.spec()?;
    let plan = make_windows(args.length, &spec).map_err(|err| CliError::Usage(err.to_string()))?;
    for (k, planned) in plan.iter().enumerate() {
        println!(
            "window {k}: span [{}, {}) adopt [{}, {})",
            planned.span.start, planned.span.end, planned.adopt.start, planned.adopt.end
        );
    }
    Ok(())
}

#[derive(Deserialize)]
struct StubRequest {
    id: u64,
    window: Vec<String>,
    prefix: Vec<String>,
    candidates: Vec<String>,
}

#[derive(Serialize)]
struct StubResponse {
    id: u64,
    logprobs: Vec<f64>,
}

/// Answers each request like the copy scorer: the next window token, plus
/// the end candidate once the window is exhausted, gets zero; everything
/// else is unusable.
fn scorer_stub() -> Result<(), CliError> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let line = line.map_err(|err| CliError::Data(err.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let request: StubRequest = serde_json::from_str(&line)
            .map_err(|err| CliError::Data(format!("bad request: {err}")))?;
        let consumed = request.prefix.iter().filter(|t| *t != DELIMITER_TEXT).count();
        let want = request.window.get(consumed);
        let logprobs = request
            .candidates
            .iter()
            .map(|candidate| {
                let hit = if candidate == END_TEXT {
                    consumed == request.window.len()
                } else {
                    Some(candidate) == want
                };
                if hit {
                    0.0
                } else {
                    NEG_INFINITY_SURROGATE
                }
            })
            .collect();
        let response = StubResponse { id: request.id, logprobs };
        let json =
            serde_json::to_string(&response).map_err(|err| CliError::Data(err.to_string()))?;
        writeln!(out, "{json}").map_err(|err| CliError::Data(err.to_string()))?;
        out.flush().map_err(|err| CliError::Data(err.to_string()))?;
    }
    Ok(())
}
