//! `dirci`: direction-preferring and conditional confidence intervals from
//! the command line.

mod svg;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dirci::dist::Normal;
use dirci::invert::{ConfidenceInterval, Inverter};
use dirci::multiplicity::Adjustment;
use dirci::pipeline::{gwas_report, read_batch, run_batch, BatchConfig, BatchRow, Transform};
use dirci::regions::{Method, MethodSpec, Setting};
use dirci::simulate::{format_sig6, presets, FcpHistogram, MethodEntry, Study};
use dirci::solve::SolveError;
use dirci::Error;

const SEED_VAR: &str = "DIRCI_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "dirci",
    version,
    about = "Direction-preferring and conditional confidence intervals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Interval for a single estimate.
    Compute(ComputeArgs),
    /// Intervals for a CSV of estimates (`id,estimate[,se]`).
    Batch(BatchArgs),
    /// Run a simulation study from a preset or a scenario file.
    Simulate(SimulateArgs),
    /// Bonferroni selection, then conditional and BY05 intervals per SNP.
    Gwas(GwasArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MethodArg {
    Shortest,
    Mp,
    Pp,
    Np,
    Equivariant,
    OneSided,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SettingArg {
    Marginal,
    Conditional,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum AdjustmentArg {
    None,
    By05,
    Bonferroni,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum TransformArg {
    Identity,
    Exp,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
struct MethodArgs {
    #[arg(long, value_enum, default_value = "shortest")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "marginal")]
    setting: SettingArg,
    /// Selection threshold for the conditional setting.
    #[arg(long, default_value_t = 1.96)]
    c: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Inflation factor of MP.
    #[arg(long, default_value_t = 1.3)]
    r: f64,
    /// Inflation factor of PP and NP.
    #[arg(long, default_value_t = 1.3)]
    r_minus: f64,
    /// Lower tail mass of the equivariant method.
    #[arg(long)]
    beta_minus: Option<f64>,
    /// Upper tail mass of the equivariant method.
    #[arg(long)]
    beta_plus: Option<f64>,
}

impl MethodArgs {
    fn spec(&self) -> Result<MethodSpec, Error> {
        let method = match self.method {
            MethodArg::Shortest => Method::Shortest,
            MethodArg::Mp => Method::Mp { r: self.r },
            MethodArg::Pp => Method::Pp {
                r_minus: self.r_minus,
            },
            MethodArg::Np => Method::Np {
                r_minus: self.r_minus,
            },
            MethodArg::OneSided => Method::OneSidedCond,
            MethodArg::Equivariant => {
                let (lo, hi) = match (self.beta_minus, self.beta_plus) {
                    (Some(lo), Some(hi)) => (lo, hi),
                    (Some(lo), None) => (lo, self.alpha - lo),
                    (None, Some(hi)) => (self.alpha - hi, hi),
                    (None, None) => (0.5 * self.alpha, 0.5 * self.alpha),
                };
                Method::Equivariant {
                    beta_minus: lo,
                    beta_plus: hi,
                }
            }
        };
        let setting = match self.setting {
            SettingArg::Marginal => Setting::Marginal,
            SettingArg::Conditional => Setting::Conditional { c: self.c },
        };
        MethodSpec::new(method, setting, self.alpha)
    }
}

#[derive(Args, Debug)]
struct ComputeArgs {
    #[command(flatten)]
    method: MethodArgs,
    /// The estimate, on the standardized scale.
    #[arg(long, allow_hyphen_values = true)]
    y: f64,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args, Debug)]
struct BatchArgs {
    #[command(flatten)]
    method: MethodArgs,
    /// Input CSV; `-` reads stdin.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    adjustment: AdjustmentArg,
    /// Parameters considered before selection (defaults to the row count).
    #[arg(long)]
    m: Option<usize>,
    /// Report only rows with `|estimate / se|` above this.
    #[arg(long)]
    select_c: Option<f64>,
    #[arg(long, value_enum, default_value = "identity")]
    transform: TransformArg,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// fig3, fig4, fig5, fig7 or two-group.
    #[arg(long, conflicts_with = "scenario")]
    preset: Option<String>,
    /// Scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Master seed; the DIRCI_SEED environment variable takes precedence.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Replications per cell.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write an SVG plot of one metric against θ.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Metric plotted with --svg; defaults to the first one in the report.
    #[arg(long)]
    svg_metric: Option<String>,
    /// Write FCP histograms of a two-group run as CSV.
    #[arg(long)]
    histogram: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GwasArgs {
    /// CSV with `id,estimate,se` (log odds ratios and standard errors).
    #[arg(long)]
    input: PathBuf,
    /// Total number of tests before selection.
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Inflation factor for MP and PP.
    #[arg(long, default_value_t = 1.3)]
    r: f64,
    #[arg(long, value_enum, default_value = "identity")]
    transform: TransformArg,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parameter(_) | Error::Io { .. } | Error::Input { .. } | Error::Json(_) => 2,
            Error::NotSelected { .. } | Error::Domain(_) | Error::NothingSelected => 3,
            Error::Solve(SolveError::Infeasible(_)) => 3,
            _ => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<Box<dyn io::Read>, Failure> {
    if path == Path::new("-") {
        return Ok(Box::new(io::stdin()));
    }
    let f = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(Box::new(f))
}

fn create(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        None => Box::new(BufWriter::new(io::stdout())),
        Some(p) => {
            let f = File::create(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            Box::new(BufWriter::new(f))
        }
    })
}

fn closure(lower_closed: bool, upper_closed: bool) -> &'static str {
    match (lower_closed, upper_closed) {
        (true, true) => "[]",
        (true, false) => "[)",
        (false, true) => "(]",
        (false, false) => "()",
    }
}

fn compute(args: &ComputeArgs) -> Result<(), Failure> {
    let spec = args.method.spec()?;
    let ci: ConfidenceInterval = Inverter::new(&Normal, spec)?.interval(args.y)?;
    let mut out = io::stdout().lock();
    match args.format {
        Format::Json => {
            let v = serde_json::json!({
                "lower": ci.lower,
                "upper": ci.upper,
                "lower_closed": ci.lower_closed,
                "upper_closed": ci.upper_closed,
                "sign": ci.sign_call(),
                "method": spec.to_string(),
                "y": ci.y,
            });
            writeln!(out, "{v}")?;
        }
        Format::Csv => {
            writeln!(out, "lower,upper,closure,sign")?;
            writeln!(
                out,
                "{},{},{},{}",
                format_sig6(ci.lower),
                format_sig6(ci.upper),
                closure(ci.lower_closed, ci.upper_closed),
                ci.sign_call()
            )?;
        }
        Format::Text => writeln!(out, "{ci} {}", ci.sign_call())?,
    }
    Ok(())
}

fn write_rows<W: Write>(out: W, rows: &[BatchRow]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Failure {
        code: 4,
        message: e.to_string(),
    };
    w.write_record([
        "id", "estimate", "se", "lower", "upper", "closure", "sign", "level",
    ])
    .map_err(err)?;
    for r in rows {
        w.write_record([
            r.id.as_str(),
            &format_sig6(r.estimate),
            &format_sig6(r.se),
            &format_sig6(r.lower),
            &format_sig6(r.upper),
            closure(r.lower_closed, r.upper_closed),
            r.sign.as_str(),
            &format_sig6(r.level),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

fn transform(t: TransformArg) -> Transform {
    match t {
        TransformArg::Identity => Transform::Identity,
        TransformArg::Exp => Transform::Exp,
    }
}

fn batch(args: &BatchArgs) -> Result<(), Failure> {
    let records = read_batch(open(&args.input)?, false)?;
    let adjustment = match args.adjustment {
        AdjustmentArg::None => Adjustment::None,
        AdjustmentArg::By05 => Adjustment::By05,
        AdjustmentArg::Bonferroni => Adjustment::Bonferroni,
    };
    let cfg = BatchConfig {
        entry: MethodEntry::new(args.method.spec()?, adjustment),
        select_c: args.select_c,
        m: args.m,
        transform: transform(args.transform),
    };
    let rows = run_batch(&Normal, &records, &cfg)?;
    write_rows(create(args.output.as_deref())?, &rows)
}

fn seed(flag: u64) -> Result<u64, Failure> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_VAR} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(flag),
    }
}

fn write_histograms<W: Write>(out: W, hists: &[FcpHistogram]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Failure {
        code: 4,
        message: e.to_string(),
    };
    w.write_record(["method", "bin_lo", "bin_hi", "count"])
        .map_err(err)?;
    for h in hists {
        for (i, n) in h.counts.iter().enumerate() {
            w.write_record([
                h.method.as_str(),
                &format_sig6(h.edges[i]),
                &format_sig6(h.edges[i + 1]),
                &n.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let seed = seed(args.seed)?;
    let mut study = match (&args.preset, &args.scenario) {
        (Some(name), _) => presets::by_name(name, args.reps, seed).ok_or_else(|| {
            usage(format!(
                "unknown preset `{name}`, expected one of {}",
                presets::NAMES.join(", ")
            ))
        })?,
        (None, Some(path)) => {
            let mut s: Study = serde_json::from_reader(open(path)?).map_err(Error::from)?;
            if std::env::var(SEED_VAR).is_ok() {
                s.set_seed(seed);
            }
            s
        }
        (None, None) => return Err(usage("give --preset or --scenario")),
    };
    if let Some(reps) = args.reps {
        study.set_reps(reps);
    }
    let (report, hists) = study.run(&Normal)?;
    report.write_csv(create(args.output.as_deref())?)?;
    if let Some(path) = &args.svg {
        let metric = args
            .svg_metric
            .clone()
            .or_else(|| report.rows.first().map(|r| r.metric.clone()))
            .unwrap_or_default();
        let doc = svg::plot_metric(&report, &metric);
        std::fs::write(path, doc).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = &args.histogram {
        write_histograms(create(Some(path))?, &hists)?;
    }
    Ok(())
}

fn gwas(args: &GwasArgs) -> Result<(), Failure> {
    let records = read_batch(open(&args.input)?, true)?;
    if args.m < records.len() {
        return Err(usage(format!(
            "--m {} is below the {} rows given",
            args.m,
            records.len()
        )));
    }
    let report = gwas_report(
        &Normal,
        &records,
        args.m,
        args.alpha,
        args.r,
        transform(args.transform),
    )?;
    let mut out = BufWriter::new(io::stdout().lock());
    match args.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &report).map_err(Error::from)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            let err = |e: csv::Error| Failure {
                code: 4,
                message: e.to_string(),
            };
            w.write_record([
                "kind",
                "method",
                "sign_determined",
                "mean_length",
                "mean_lower",
            ])
            .map_err(err)?;
            for s in &report.summary {
                w.write_record([
                    s.kind.as_str(),
                    &s.method,
                    &s.sign_determined.to_string(),
                    &format_sig6(s.mean_length),
                    &format_sig6(s.mean_lower),
                ])
                .map_err(err)?;
            }
            w.flush()?;
        }
        Format::Text => {
            writeln!(
                out,
                "m = {}, threshold |z| > {:.4}, selected {}",
                report.m, report.c, report.n_selected
            )?;
            writeln!(out)?;
            for (kind, method, r) in &report.rows {
                let open = if r.lower_closed { '[' } else { '(' };
                let close = if r.upper_closed { ']' } else { ')' };
                writeln!(
                    out,
                    "{:<12} {:<9} {:<12} {open}{:.4}, {:.4}{close} {}",
                    kind, method, r.id, r.lower, r.upper, r.sign
                )?;
            }
            writeln!(out)?;
            writeln!(
                out,
                "{:<12} {:<9} {:>5} {:>8} {:>8}",
                "type", "method", "signs", "length", "lower"
            )?;
            for s in &report.summary {
                writeln!(
                    out,
                    "{:<12} {:<9} {:>5} {:>8.4} {:>8.4}",
                    s.kind, s.method, s.sign_determined, s.mean_length, s.mean_lower
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Compute(a) => compute(a),
        Command::Batch(a) => batch(a),
        Command::Simulate(a) => simulate(a),
        Command::Gwas(a) => gwas(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("dirci: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
