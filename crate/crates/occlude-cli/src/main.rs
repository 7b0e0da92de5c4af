//! Command-line interface: validate subject data against an estimand spec,
//! derive analysis datasets, run estimators and sensitivity analyses,
//! simulate trials, and tabulate operating characteristics.
//!
//! Exit codes: 0 success; 1 data or derivation errors; 2 usage errors;
//! 3 spec syntax error; 4 unknown key/strategy in the spec; 5 missing
//! required spec field. Findings from `validate` are report content, not
//! failures. `OCCLUDE_THREADS` caps the worker pool.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use occlude_core::derive::derive_dataset;
use occlude_core::domain::{
    validate_spec_against_data, validate_subject, Day, EstimandSpec, SubjectRecord,
};
use occlude_core::io::{self, parse_spec_file, write_atomic, SpecErrorKind};
use occlude_core::report;
use occlude_core::sensitivity::{
    build_report, departure_summary, dual_occlusion_dating, impute_target_times, redate,
};
use occlude_core::sim::{self, Analysis, TrialScenario};
use occlude_core::Error;

#[derive(Parser)]
#[command(
    name = "occlude",
    version,
    about = "Derive and analyze time-to-event estimands with explicit occlusion handling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Primary stdout format; files are always written in every applicable
    /// format. With json, errors are mirrored to stderr as JSON.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Check subject records and the spec against the observed data.
    Validate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive one analysis dataset per estimand in the spec.
    Derive {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive and run the estimator suite (KM, log-rank, Cox, RMST, CIF).
    Analyze {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Restricted-mean horizon in days; defaults to the largest common
        /// follow-up and is echoed prominently.
        #[arg(long)]
        tau: Option<Day>,
    },
    /// Sensitivity analyses: re-dating, target-time imputation, departure
    /// summaries, dual occlusion dating.
    Sensitivity {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Variant::All)]
        variant: Variant,
        #[arg(long)]
        tau: Option<Day>,
        #[arg(long)]
        landmark: Option<Day>,
    },
    /// Simulate a trial scenario into subject records.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Power / estimate tables over a grid of administrative cutoffs.
    Opchar {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        analysis: AnalysisArg,
        /// Comma-separated calendar cutoff days.
        #[arg(long, value_delimiter = ',', required = true)]
        cutoff: Vec<Day>,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        /// RMST horizon (required when --analysis rmst).
        #[arg(long)]
        tau: Option<Day>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    Redate,
    Impute,
    Departure,
    Dual,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AnalysisArg {
    LogRank,
    Cox,
    Rmst,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

impl From<io::SpecParseError> for Failure {
    fn from(e: io::SpecParseError) -> Self {
        let code = match e.kind {
            SpecErrorKind::Syntax => 3,
            SpecErrorKind::UnknownName => 4,
            SpecErrorKind::MissingField => 5,
            SpecErrorKind::Constraint => 1,
        };
        Failure { code, message: e.message }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("OCCLUDE_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let format = cli.format;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            if format == Format::Json {
                let mirror = serde_json::json!({
                    "error": { "message": failure.message, "exit_code": failure.code }
                });
                eprintln!("{mirror}");
            }
            ExitCode::from(failure.code)
        }
    }
}

/// Write to stdout, treating a closed pipe (e.g. `occlude derive | head`) as
/// a normal early exit instead of a panic. Files are already on disk by the
/// time reports are echoed.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if out.write_all(text.as_bytes()).is_err() || out.flush().is_err() {
        std::process::exit(0);
    }
}

fn emitln(text: &str) {
    emit(text);
    emit("\n");
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { data, spec, out } => cmd_validate(&data, &spec, &out, cli.format),
        Command::Derive { data, spec, out } => cmd_derive(&data, &spec, &out, cli.format),
        Command::Analyze { data, spec, out, tau } => {
            cmd_analyze(&data, &spec, &out, tau, cli.format)
        }
        Command::Sensitivity { data, spec, out, variant, tau, landmark } => {
            cmd_sensitivity(&data, &spec, &out, variant, tau, landmark, cli.format)
        }
        Command::Simulate { scenario, seed, out } => cmd_simulate(&scenario, seed, &out),
        Command::Opchar { scenario, seed, out, analysis, cutoff, reps, tau } => {
            cmd_opchar(&scenario, seed, &out, analysis, &cutoff, reps, tau, cli.format)
        }
    }
}

fn load_inputs(
    data: &Path,
    spec: &Path,
) -> Result<(Vec<SubjectRecord>, Vec<EstimandSpec>), Failure> {
    let subjects = io::load_subjects(data)?;
    let (specs, warnings) = parse_spec_file(spec)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok((subjects, specs))
}

fn ensure_out(out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| Failure {
        code: 1,
        message: format!("cannot create output directory {}: {e}", out.display()),
    })
}

fn require_valid_subjects(subjects: &[SubjectRecord]) -> Result<(), Failure> {
    let violations: Vec<String> = subjects
        .iter()
        .flat_map(|s| validate_subject(s).into_iter().map(|v| v.to_string()))
        .collect();
    if violations.is_empty() {
        return Ok(());
    }
    let shown = violations.iter().take(5).cloned().collect::<Vec<_>>().join("; ");
    Err(Failure {
        code: 1,
        message: format!(
            "{} subject-record violation(s) (run `occlude validate` for the full report): {shown}",
            violations.len()
        ),
    })
}

fn cmd_validate(data: &Path, spec: &Path, out: &Path, format: Format) -> Result<(), Failure> {
    let (subjects, specs) = load_inputs(data, spec)?;
    ensure_out(out)?;
    let violations: Vec<_> = subjects.iter().flat_map(validate_subject).collect();
    let mut findings = Vec::new();
    for estimand in &specs {
        findings.extend(validate_spec_against_data(estimand, &subjects));
    }
    let text = report::findings_text(&violations, &findings);
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "violations": violations,
        "findings": findings,
    }))
    .map_err(Error::from)?;
    write_atomic(&out.join("findings.txt"), &text)?;
    write_atomic(&out.join("findings.json"), &json)?;
    match format {
        Format::Json => emitln(&json),
        _ => emit(&text),
    }
    Ok(())
}

fn cmd_derive(data: &Path, spec: &Path, out: &Path, format: Format) -> Result<(), Failure> {
    let (subjects, specs) = load_inputs(data, spec)?;
    require_valid_subjects(&subjects)?;
    ensure_out(out)?;
    for estimand in &specs {
        let (records, audit) = derive_dataset(&subjects, estimand)?;
        let id = &estimand.estimand_id;
        write_atomic(&out.join(format!("derived_{id}.csv")), &io::derived_to_csv(&records)?)?;
        write_atomic(
            &out.join(format!("derived_{id}.json")),
            &io::derived_to_json(id, &records, &audit)?,
        )?;
        let text = report::derivation_text(estimand, &audit);
        write_atomic(&out.join(format!("derived_{id}.txt")), &text)?;
        match format {
            Format::Json => emitln(&serde_json::to_string(&audit).map_err(Error::from)?),
            _ => emit(&text),
        }
    }
    Ok(())
}

fn cmd_analyze(
    data: &Path,
    spec: &Path,
    out: &Path,
    tau: Option<Day>,
    format: Format,
) -> Result<(), Failure> {
    let (subjects, specs) = load_inputs(data, spec)?;
    require_valid_subjects(&subjects)?;
    ensure_out(out)?;
    for estimand in &specs {
        let (records, _) = derive_dataset(&subjects, estimand)?;
        let by_arm = occlude_core::estimators::observations_by_arm(&records, &subjects)?;
        let analysis = report::analyze(&estimand.estimand_id, &by_arm, tau)?;
        let id = &estimand.estimand_id;
        let text = report::analysis_text(&analysis);
        write_atomic(
            &out.join(format!("analysis_{id}.json")),
            &serde_json::to_string_pretty(&analysis).map_err(Error::from)?,
        )?;
        write_atomic(&out.join(format!("analysis_{id}.txt")), &text)?;
        match format {
            Format::Json => emitln(&serde_json::to_string(&analysis).map_err(Error::from)?),
            _ => emit(&text),
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sensitivity(
    data: &Path,
    spec: &Path,
    out: &Path,
    variant: Variant,
    tau: Option<Day>,
    landmark: Option<Day>,
    format: Format,
) -> Result<(), Failure> {
    let (subjects, specs) = load_inputs(data, spec)?;
    require_valid_subjects(&subjects)?;
    ensure_out(out)?;
    for estimand in &specs {
        let id = &estimand.estimand_id;
        let mut emitted = Vec::new();

        if matches!(variant, Variant::Redate | Variant::All) {
            let (primary, _) = derive_dataset(&subjects, estimand)?;
            let left = redate(&primary, occlude_core::domain::DatingMode::Left);
            let midpoint = redate(&primary, occlude_core::domain::DatingMode::Midpoint);
            let rep = build_report(
                &format!("{id}_redating"),
                vec![
                    ("right".into(), primary),
                    ("left".into(), left),
                    ("midpoint".into(), midpoint),
                ],
                &subjects,
                tau,
                landmark,
            )?;
            emitted.push(("redating", rep));
        }
        if matches!(variant, Variant::Impute | Variant::All) {
            let (observed, _) = derive_dataset(&subjects, estimand)?;
            let imputed = impute_target_times(&subjects)?;
            for note in &imputed.notes {
                eprintln!("note: {note}");
            }
            let (on_target, _) = derive_dataset(&imputed.subjects, estimand)?;
            let rep = build_report(
                &format!("{id}_target_time_imputation"),
                vec![("observed".into(), observed), ("imputed_targets".into(), on_target)],
                &subjects,
                tau,
                landmark,
            )?;
            emitted.push(("imputation", rep));
        }
        if matches!(variant, Variant::Dual | Variant::All) {
            let rep = dual_occlusion_dating(&subjects, estimand, tau, landmark)?;
            emitted.push(("dual_dating", rep));
        }
        if matches!(variant, Variant::Departure | Variant::All) {
            let rows = departure_summary(&subjects);
            let json = serde_json::to_string_pretty(&rows).map_err(Error::from)?;
            let mut text =
                String::from("assessment departure from target (actual - target days)\n");
            text.push_str(&format!(
                "{:<12} {:<12} {:>6} {:>8} {:>8} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
                "arm", "stream", "n", "mean", "sd", "min", "q25", "med", "q75", "max"
            ));
            for r in &rows {
                text.push_str(&format!(
                    "{:<12} {:<12} {:>6} {:>8.2} {:>8.2} {:>7.1} {:>7.1} {:>7.1} {:>7.1} {:>7.1}\n",
                    r.arm,
                    r.component_id,
                    r.stats.count,
                    r.stats.mean,
                    r.stats.sd,
                    r.stats.min,
                    r.stats.q25,
                    r.stats.median,
                    r.stats.q75,
                    r.stats.max
                ));
            }
            write_atomic(&out.join(format!("sensitivity_departure_{id}.json")), &json)?;
            write_atomic(&out.join(format!("sensitivity_departure_{id}.txt")), &text)?;
            match format {
                Format::Json => emitln(&json),
                _ => emit(&text),
            }
        }

        for (name, rep) in emitted {
            let json = serde_json::to_string_pretty(&rep).map_err(Error::from)?;
            let text = report::sensitivity_text(&rep);
            write_atomic(&out.join(format!("sensitivity_{name}_{id}.json")), &json)?;
            write_atomic(&out.join(format!("sensitivity_{name}_{id}.txt")), &text)?;
            match format {
                Format::Json => emitln(&json),
                _ => emit(&text),
            }
        }
    }
    Ok(())
}

fn load_scenario(path: &Path) -> Result<TrialScenario, Failure> {
    let data = std::fs::read_to_string(path).map_err(|e| Failure {
        code: 1,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let scenario: TrialScenario = serde_json::from_str(&data).map_err(|e| Failure {
        code: 1,
        message: format!("scenario error in {}: {e}", path.display()),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

fn cmd_simulate(scenario_path: &Path, seed: u64, out: &Path) -> Result<(), Failure> {
    let scenario = load_scenario(scenario_path)?;
    ensure_out(out)?;
    let subjects = sim::simulate_trial(&scenario, seed)?;
    write_atomic(&out.join("subjects.csv"), &io::subjects_to_csv(&subjects)?)?;
    write_atomic(&out.join("subjects.json"), &io::subjects_to_json(&subjects)?)?;
    emitln(&format!(
        "simulated {} subjects across {} arm(s) with seed {seed}",
        subjects.len(),
        scenario.arms.len()
    ));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_opchar(
    scenario_path: &Path,
    seed: u64,
    out: &Path,
    analysis: AnalysisArg,
    cutoffs: &[Day],
    reps: usize,
    tau: Option<Day>,
    format: Format,
) -> Result<(), Failure> {
    let scenario = load_scenario(scenario_path)?;
    ensure_out(out)?;
    let analysis = match analysis {
        AnalysisArg::LogRank => Analysis::LogRank,
        AnalysisArg::Cox => Analysis::Cox,
        AnalysisArg::Rmst => Analysis::Rmst {
            tau: tau.ok_or_else(|| Failure {
                code: 2,
                message: "--tau is required with --analysis rmst".into(),
            })?,
        },
    };
    let table = sim::operating_characteristics(&scenario, analysis, cutoffs, reps, seed)?;
    let json = serde_json::to_string_pretty(&table).map_err(Error::from)?;
    let csv = report::opchar_csv(&table)?;
    let text = report::opchar_text(&table);
    write_atomic(&out.join("opchar.json"), &json)?;
    write_atomic(&out.join("opchar.csv"), &csv)?;
    write_atomic(&out.join("opchar.txt"), &text)?;
    match format {
        Format::Json => emitln(&json),
        Format::Csv => emit(&csv),
        Format::Text => emit(&text),
    }
    Ok(())
}
