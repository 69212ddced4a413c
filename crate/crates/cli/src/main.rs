//! `randtest`: randomization tests, group checks and size/power studies.

mod data;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use randtest::engine::{
    randomization_pvalue, randomization_test, randomization_test_mc, TestReport,
};
use randtest::ltt::{level_table, ltt_run, ltt_run_free_guess, LevelRow};
use randtest::power::{parse_alpha, resolution_report, simulate_with_workers, SimConfig};
use randtest::schemes::{
    balanced_permutations, check_group, scheme_by_name, AssignmentPattern, RandomizationScheme,
    SchemeFile, Transformation, TransformationGroup,
};
use randtest::statistics::{Sidedness, StatisticKind, StatisticSpec};
use randtest::{Error, Fraction};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("transformation set is not a group")]
    NotAGroup,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Core(e) => match e {
                Error::DesignViolation(_) => 3,
                Error::GroupViolation(_) => 4,
                Error::InfeasibleEnumeration(_) => 5,
                _ => 2,
            },
            CliError::NotAGroup => 4,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "randtest",
    version,
    about = "Randomization and group invariance tests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Randomization test on an `id,w,y` CSV file.
    Test(TestArgs),
    /// Check the group axioms for a transformation set.
    GroupCheck(GroupCheckArgs),
    /// Size and resolution of a named scheme.
    SchemeInfo(SchemeInfoArgs),
    /// The tea-tasting test.
    Ltt(LttArgs),
    /// Size/power comparison of two schemes.
    Power(PowerArgs),
}

#[derive(clap::Args)]
struct TestArgs {
    #[arg(long)]
    data: PathBuf,
    /// Named scheme over the units in the data file.
    #[arg(
        long,
        conflicts_with = "scheme_file",
        required_unless_present = "scheme_file"
    )]
    scheme: Option<String>,
    /// JSON scheme file with `n`, `label`, `patterns` and optional `weights`.
    #[arg(long)]
    scheme_file: Option<PathBuf>,
    #[arg(long, default_value = "centered-diff")]
    stat: String,
    #[arg(long, default_value = "0.05", value_parser = alpha_arg)]
    alpha: f64,
    #[arg(long, default_value = "upper")]
    sided: String,
    /// Sample this many patterns instead of enumerating.
    #[arg(long, requires = "seed")]
    draws: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct GroupCheckArgs {
    /// `perms:N`, `sign-flips:N`, `balanced-perms:C,D` or `cyclic:<element>`.
    #[arg(conflicts_with = "file", required_unless_present = "file")]
    spec: Option<String>,
    /// One element per line, e.g. `2 3 1` or `+-+`.
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SchemeInfoArgs {
    #[arg(long)]
    name: String,
    #[arg(long)]
    n: usize,
    /// Print the scheme file (all patterns) instead of the summary.
    #[arg(long)]
    patterns: bool,
}

#[derive(clap::Args)]
struct LttArgs {
    #[arg(long, default_value_t = 4)]
    m: usize,
    /// Milk-first cups as a 0/1 string, cup 1 first.
    #[arg(long)]
    truth: String,
    #[arg(long)]
    guess: String,
    #[arg(long, default_value = "0.05", value_parser = alpha_arg)]
    alpha: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct PowerArgs {
    /// TOML or JSON configuration; defaults to the 8-unit two-scheme study.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    replications: Option<u64>,
    #[arg(long)]
    effect: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn alpha_arg(s: &str) -> Result<f64, String> {
    parse_alpha(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Test(args) => run_test(args),
        Command::GroupCheck(args) => run_group_check(args),
        Command::SchemeInfo(args) => run_scheme_info(args),
        Command::Ltt(args) => run_ltt(args),
        Command::Power(args) => run_power(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::NotAGroup) {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    emit(&(text + "\n"))
}

/// Writes to stdout; a closed pipe downstream is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(CliError::Input(format!("writing output: {e}")))
        }
        _ => Ok(()),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Report for weighted schemes, where only the p-value is defined.
#[derive(Serialize)]
struct WeightedReport {
    observed_t: f64,
    p_value_real: f64,
    alpha: f64,
    reject: bool,
    weighted: bool,
}

fn run_test(args: TestArgs) -> Result<(), CliError> {
    let data = data::read_dataset(&args.data)?;
    let scheme = match (&args.scheme, &args.scheme_file) {
        (Some(name), _) => scheme_by_name(name, data.w.len())?,
        (None, Some(path)) => {
            let file: SchemeFile = serde_json::from_str(&read_text(path)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            RandomizationScheme::from_file(file)?
        }
        (None, None) => unreachable!("clap requires one of --scheme, --scheme-file"),
    };
    if scheme.n() != data.w.len() {
        return Err(CliError::Input(format!(
            "scheme has {} units, data has {}",
            scheme.n(),
            data.w.len()
        )));
    }
    let kind: StatisticKind = args.stat.parse()?;
    let sided: Sidedness = args.sided.parse()?;
    let stat = StatisticSpec::new(kind, sided)?;
    if let (Some(draws), Some(seed)) = (args.draws, args.seed) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let report = randomization_test_mc(
            &scheme, &data.w, &data.y, &stat, args.alpha, draws, &mut rng,
        )?;
        return print_json(&report);
    }
    if scheme.is_uniform() {
        let report = randomization_test(&scheme, &data.w, &data.y, &stat, args.alpha)?;
        print_json(&report)
    } else {
        let p = randomization_pvalue(&scheme, &data.w, &data.y, &stat)?.to_f64();
        print_json(&WeightedReport {
            observed_t: stat.evaluate(&data.w, data.y.values())?,
            p_value_real: p,
            alpha: args.alpha,
            reject: p <= args.alpha,
            weighted: true,
        })
    }
}

fn parse_group_spec(spec: &str) -> Result<TransformationGroup, CliError> {
    let (family, arg) = spec
        .split_once(':')
        .ok_or_else(|| CliError::Input(format!("group spec {spec:?} has no ':'")))?;
    let size = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| CliError::Input(format!("bad size {s:?} in {spec:?}")))
    };
    Ok(match family {
        "perms" => TransformationGroup::symmetric(size(arg)?)?,
        "sign-flips" => TransformationGroup::sign_flips(size(arg)?)?,
        "balanced-perms" => {
            let (c, d) = arg.split_once(',').ok_or_else(|| {
                CliError::Input(format!("expected balanced-perms:C,D, got {spec:?}"))
            })?;
            balanced_permutations(size(c)?, size(d)?)?
        }
        "cyclic" => TransformationGroup::cyclic(&arg.parse::<Transformation>()?)?,
        other => return Err(CliError::Input(format!(
            "unknown group family {other:?}; expected perms, sign-flips, balanced-perms or cyclic"
        ))),
    })
}

fn read_group_file(path: &Path) -> Result<TransformationGroup, CliError> {
    let elements = read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse::<Transformation>)
        .collect::<Result<Vec<_>, _>>()?;
    let label = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "file".into());
    Ok(TransformationGroup::from_elements(label, elements)?)
}

fn run_group_check(args: GroupCheckArgs) -> Result<(), CliError> {
    let group = match (&args.spec, &args.file) {
        (Some(spec), _) => parse_group_spec(spec)?,
        (None, Some(path)) => read_group_file(path)?,
        (None, None) => unreachable!("clap requires a spec or --file"),
    };
    let report = check_group(&group)?;
    print_json(&report)?;
    if let Some(summary) = report.failure_summary() {
        eprintln!("not a group: {summary}");
        return Err(CliError::NotAGroup);
    }
    Ok(())
}

#[derive(Serialize)]
struct SchemeInfo {
    label: String,
    n: usize,
    r: u128,
    uniform: bool,
    min_p: Option<Fraction>,
    spacing: Option<Fraction>,
}

fn run_scheme_info(args: SchemeInfoArgs) -> Result<(), CliError> {
    let scheme = scheme_by_name(&args.name, args.n)?;
    if args.patterns {
        return print_json(&scheme.to_file()?);
    }
    let resolution = resolution_report(&scheme).ok();
    print_json(&SchemeInfo {
        label: scheme.label().to_owned(),
        n: scheme.n(),
        r: scheme.size(),
        uniform: scheme.is_uniform(),
        min_p: resolution.as_ref().map(|r| r.min_p),
        spacing: resolution.as_ref().map(|r| r.spacing),
    })
}

#[derive(Serialize)]
struct LttResult {
    m: usize,
    correct_milk_first: usize,
    free_guess: bool,
    level_table: Vec<LevelRow>,
    report: TestReport,
}

fn run_ltt(args: LttArgs) -> Result<(), CliError> {
    let truth: AssignmentPattern = args.truth.parse()?;
    let guess: AssignmentPattern = args.guess.parse()?;
    if truth.len() != 2 * args.m {
        return Err(CliError::Input(format!(
            "--truth has {} cups, expected {}",
            truth.len(),
            2 * args.m
        )));
    }
    let free_guess = guess.count_ones() != args.m;
    let report = if free_guess {
        eprintln!(
            "guess labels {} cups milk-first, not {}; using the free-guess test",
            guess.count_ones(),
            args.m
        );
        ltt_run_free_guess(&truth, &guess, args.alpha)?
    } else {
        ltt_run(&truth, &guess, args.alpha)?
    };
    print_json(&LttResult {
        m: args.m,
        correct_milk_first: truth.overlap(&guess),
        free_guess,
        level_table: level_table(args.m)?,
        report,
    })
}

fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = read_text(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn run_power(args: PowerArgs) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => SimConfig::reference_study(args.seed),
    };
    config.seed = args.seed;
    if let Some(r) = args.replications {
        config.replications = r;
    }
    if let Some(e) = args.effect {
        config.effect = e;
    }
    if let Some(n) = args.n {
        config.n = n;
    }
    if args.workers == 0 {
        return Err(CliError::Input("--workers must be at least 1".into()));
    }
    let table = simulate_with_workers(&config, args.workers)?;
    let text = match args.format {
        Format::Csv => table.to_csv(),
        Format::Json => {
            serde_json::to_string_pretty(&table).map_err(|e| CliError::Input(e.to_string()))? + "\n"
        }
    };
    match &args.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
        None => emit(&text)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_specs() {
        assert_eq!(parse_group_spec("perms:4").unwrap().order(), 24);
        assert_eq!(parse_group_spec("sign-flips:3").unwrap().order(), 8);
        assert_eq!(parse_group_spec("balanced-perms:2,2").unwrap().order(), 16);
        assert_eq!(parse_group_spec("cyclic:2,3,1").unwrap().order(), 3);
        assert_eq!(parse_group_spec("cyclic:+-").unwrap().order(), 2);
        assert!(parse_group_spec("perms").is_err());
        assert!(parse_group_spec("rotations:3").is_err());
        assert!(parse_group_spec("balanced-perms:2").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Input(String::new()).exit_code(), 2);
        assert_eq!(
            CliError::from(Error::DesignViolation(String::new())).exit_code(),
            3
        );
        assert_eq!(
            CliError::from(Error::GroupViolation(String::new())).exit_code(),
            4
        );
        assert_eq!(CliError::NotAGroup.exit_code(), 4);
        assert_eq!(
            CliError::from(Error::InfeasibleEnumeration(String::new())).exit_code(),
            5
        );
        assert_eq!(
            CliError::from(Error::EmptyScheme(String::new())).exit_code(),
            2
        );
    }
}
