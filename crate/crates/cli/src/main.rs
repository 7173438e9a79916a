use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use modeqfi::applications::pipeline::beam_family;
use modeqfi::applications::{BeamGeometry, ClosedForm};
use modeqfi::modes::{
    mode_encoded_qfi_with, HermiteGaussFamily, ModeEncodedProblem, ModeFamily, PulsePairFamily,
    PulseShape, SampledFamily, StaticFamily,
};
use modeqfi::qfi::QfiBreakdown;
use modeqfi::scans::{displacement_scan, pulse_scan, DisplacementScan, PulseScan, ScanOutput};
use modeqfi::selftest::{run_selftest, Fault, SelftestOptions};
use modeqfi::states::GaussianState;
use modeqfi::sweep::{Axis, Execution, Spacing};
use modeqfi::{Error, Tolerances};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(
    name = "modeqfi",
    version,
    about = "Quantum Fisher information for mode-encoded parameters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Output file; stdout when absent. A `<out>.manifest.json` sidecar is written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Number of points on the swept axis.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Relative tolerance for self-test and dual-run comparisons.
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// QFI of beam displacement against derivative-mode population and squeezing fraction.
    DisplacementScan(DisplacementArgs),
    /// QFI of pulse separation against τ/w for thermal and coherent pulses.
    PulseScan(PulseArgs),
    /// Evaluate a scenario file through the general pipeline.
    QfiEval(EvalArgs),
    /// Cross-check closed forms, pipeline and limits on a reduced grid.
    Selftest(SelftestArgs),
}

#[derive(Args, Serialize)]
struct DisplacementArgs {
    #[arg(long, default_value_t = 10.0)]
    n0: f64,
    /// Squeezing fractions, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.25, 0.5, 0.75, 1.0])]
    chi: Vec<f64>,
    #[arg(long, default_value_t = 1e-2)]
    n1_min: f64,
    #[arg(long, default_value_t = 10.0)]
    n1_max: f64,
    #[arg(long, default_value_t = 1.0)]
    waist: f64,
}

#[derive(Copy, Clone, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ShapeArg {
    Gaussian,
    Sech,
}

#[derive(Args, Serialize)]
struct PulseArgs {
    #[arg(long, default_value_t = 1.0)]
    n0: f64,
    /// Squeezing parameters, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.5, 1.0])]
    r: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ShapeArg::Gaussian)]
    shape: ShapeArg,
    #[arg(long, default_value_t = 1.0)]
    width: f64,
    #[arg(long, default_value_t = 0.01)]
    tau_min: f64,
    #[arg(long, default_value_t = 6.0)]
    tau_max: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Also evaluate the scenario's closed form and report both values.
    #[arg(long)]
    dual: bool,
}

#[derive(Copy, Clone, ValueEnum)]
enum FaultArg {
    PulseConstant,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<FaultArg>,
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn check(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    scenario_sha256: String,
    tolerances: Tolerances,
    comparison_tol: f64,
    threads: usize,
    wall_time_s: f64,
    warnings: Vec<String>,
}

struct Run<'a> {
    common: &'a Common,
    command: &'static str,
    started: Instant,
    exec: Execution,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

impl Run<'_> {
    /// Writes `body` to --out (plus manifest) or stdout.
    fn emit(&self, body: &str, scenario: &[u8], warnings: Vec<String>) -> Result<(), Failure> {
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        let Some(out) = &self.common.out else {
            print!("{body}");
            return Ok(());
        };
        std::fs::write(out, body)
            .map_err(|e| Failure::input(format!("cannot write {}: {e}", out.display())))?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            scenario_sha256: sha256_hex(scenario),
            tolerances: Tolerances::default(),
            comparison_tol: self.common.tol,
            threads: match self.exec {
                Execution::Sequential => 1,
                Execution::Parallel => rayon::current_num_threads(),
            },
            wall_time_s: self.started.elapsed().as_secs_f64(),
            warnings,
        };
        let mut path = out.clone().into_os_string();
        path.push(".manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
        std::fs::write(&path, text)
            .map_err(|e| Failure::input(format!("cannot write manifest: {e}")))
    }
}

fn csv_table(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn json_body<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serialises") + "\n"
}

#[derive(Serialize)]
struct ScanJson<'a, R> {
    columns: &'a [&'a str],
    normalization: f64,
    rows: &'a [R],
}

fn scan_body<R: Serialize>(
    fmt: Format,
    header: &[&str],
    out: &ScanOutput<R>,
    row: impl Fn(&R) -> Vec<String>,
) -> String {
    match fmt {
        Format::Csv => csv_table(header, out.rows.iter().map(row)),
        Format::Json => json_body(&ScanJson {
            columns: header,
            normalization: out.normalization,
            rows: &out.rows,
        }),
    }
}

fn axis(min: f64, max: f64, count: usize, spacing: Spacing) -> Result<Axis, Failure> {
    Axis::new(min, max, count, spacing).map_err(|e| Failure::input(e.to_string()))
}

fn cmd_displacement(run: &Run, a: &DisplacementArgs) -> Result<(), Failure> {
    let spec = DisplacementScan {
        n0: a.n0,
        chis: a.chi.clone(),
        n1: axis(
            a.n1_min,
            a.n1_max,
            run.common.grid.unwrap_or(61),
            Spacing::Log,
        )?,
        waist: a.waist,
    };
    if spec.chis.is_empty() {
        return Err(Failure::input("at least one squeezing fraction is needed"));
    }
    let out = displacement_scan(&spec, run.exec)?;
    let body = scan_body(
        run.common.format,
        &["chi", "N1", "qfi", "qfi_normalized"],
        &out,
        |r| vec![num(r.chi), num(r.n1), num(r.qfi), num(r.qfi_normalized)],
    );
    let mut warnings = out.warnings.clone();
    warnings.push(format!(
        "axis: N1 = 0 plus {} log-spaced points in [{}, {}]; normalised by the N1 = 0 value",
        spec.n1.count, spec.n1.min, spec.n1.max
    ));
    run.emit(
        &body,
        &serde_json::to_vec(&spec).expect("spec serialises"),
        warnings,
    )
}

fn cmd_pulse(run: &Run, a: &PulseArgs) -> Result<(), Failure> {
    let shape = match a.shape {
        ShapeArg::Gaussian => PulseShape::Gaussian { width: a.width },
        ShapeArg::Sech => PulseShape::Sech { width: a.width },
    };
    let spec = PulseScan {
        shape,
        n0: a.n0,
        rs: a.r.clone(),
        tau_over_w: axis(
            a.tau_min,
            a.tau_max,
            run.common.grid.unwrap_or(120),
            Spacing::Linear,
        )?,
        ..PulseScan::default()
    };
    if spec.rs.is_empty() {
        return Err(Failure::input("at least one squeezing value is needed"));
    }
    let out = pulse_scan(&spec, run.exec)?;
    let body = scan_body(
        run.common.format,
        &["tau_over_w", "source", "r", "qfi", "qfi_normalized"],
        &out,
        |r| {
            vec![
                num(r.tau_over_w),
                r.source.name().to_string(),
                num(r.r),
                num(r.qfi),
                num(r.qfi_normalized),
            ]
        },
    );
    let mut warnings = out.warnings.clone();
    warnings.push(format!(
        "axis: {} linear points tau/w in [{}, {}]; normalised by the largest thermal r = 0 value ({})",
        spec.tau_over_w.count, spec.tau_over_w.min, spec.tau_over_w.max, out.normalization
    ));
    run.emit(
        &body,
        &serde_json::to_vec(&spec).expect("spec serialises"),
        warnings,
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Scenario {
    schema_version: u32,
    #[serde(default)]
    theta: f64,
    state: Option<GaussianState>,
    derivatives: Option<Derivatives>,
    family: Option<FamilySpec>,
    closed_form: Option<ClosedForm>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Derivatives {
    dxbar: Vec<f64>,
    dsigma: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum FamilySpec {
    Static {
        modes: usize,
    },
    HermiteGauss {
        orders: Vec<usize>,
        waist: f64,
    },
    PulsePair {
        shape: PulseShape,
        derivative_modes: bool,
    },
    Sampled {
        path: PathBuf,
    },
    Beam {
        geometry: BeamGeometry,
        derivative_mode: bool,
    },
}

impl FamilySpec {
    fn build(&self, base: &Path) -> Result<Box<dyn ModeFamily>, Failure> {
        Ok(match self {
            FamilySpec::Static { modes } => Box::new(StaticFamily { modes: *modes }),
            FamilySpec::HermiteGauss { orders, waist } => {
                Box::new(HermiteGaussFamily::new(orders.clone(), *waist)?)
            }
            FamilySpec::PulsePair {
                shape,
                derivative_modes,
            } => Box::new(PulsePairFamily::new(*shape, *derivative_modes)?),
            FamilySpec::Sampled { path } => Box::new(SampledFamily::from_path(base.join(path))?),
            FamilySpec::Beam {
                geometry,
                derivative_mode,
            } => Box::new(beam_family(*geometry, *derivative_mode)),
        })
    }
}

#[derive(Serialize)]
struct Dual {
    form: &'static str,
    closed_form: f64,
    pipeline: f64,
    difference: f64,
    relative_difference: f64,
    within_tol: bool,
}

#[derive(Serialize)]
struct EvalOutput {
    schema_version: u32,
    #[serde(flatten)]
    breakdown: Option<QfiBreakdown>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dual: Option<Dual>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<nalgebra::DMatrix<f64>, Failure> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Failure::input(format!(
            "{what} must be a square array of rows"
        )));
    }
    Ok(nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn cmd_eval(run: &Run, a: &EvalArgs) -> Result<(), Failure> {
    let bytes = std::fs::read(&a.scenario)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", a.scenario.display())))?;
    let de = &mut serde_json::Deserializer::from_slice(&bytes);
    let sc: Scenario = serde_path_to_error::deserialize(de)
        .map_err(|e| Failure::input(format!("scenario field `{}`: {}", e.path(), e.inner())))?;
    if sc.schema_version != SCHEMA_VERSION {
        return Err(Failure::input(format!(
            "scenario field `schema_version`: unsupported version {} (expected {SCHEMA_VERSION})",
            sc.schema_version
        )));
    }
    let base = a.scenario.parent().unwrap_or(Path::new("."));
    let breakdown = match (&sc.state, &sc.family) {
        (Some(state), Some(fam)) => {
            let family = fam.build(base)?;
            let mut p = ModeEncodedProblem::new(family.as_ref(), sc.theta, state);
            if let Some(d) = &sc.derivatives {
                p = p.with_derivatives(
                    matrix(&d.dsigma, "derivatives.dsigma")?,
                    nalgebra::DVector::from_vec(d.dxbar.clone()),
                );
            }
            Some(mode_encoded_qfi_with(&p, &Tolerances::default())?)
        }
        (None, None) => None,
        _ => {
            return Err(Failure::input(
                "scenario needs both `state` and `family`, or neither",
            ))
        }
    };
    let dual = if a.dual {
        let form = sc
            .closed_form
            .as_ref()
            .ok_or_else(|| Failure::input("--dual needs a `closed_form` in the scenario"))?;
        let closed = form.value()?;
        let pipeline = match &breakdown {
            Some(b) => b.total,
            None => form.pipeline()?,
        };
        let difference = pipeline - closed;
        let scale = closed.abs().max(pipeline.abs());
        let relative_difference = if scale > 0.0 {
            difference.abs() / scale
        } else {
            0.0
        };
        Some(Dual {
            form: form.name(),
            closed_form: closed,
            pipeline,
            difference,
            relative_difference,
            within_tol: relative_difference <= run.common.tol,
        })
    } else {
        None
    };
    if breakdown.is_none() && dual.is_none() {
        return Err(Failure::input(
            "scenario has no `state`/`family`; add them or run with --dual and a `closed_form`",
        ));
    }
    let mut warnings = Vec::new();
    if let Some(b) = &breakdown {
        if !b.clamped.is_empty() {
            warnings.push(format!(
                "symplectic eigenvalues clamped to 1 at indices {:?}",
                b.clamped
            ));
        }
    }
    let mismatch = dual.as_ref().filter(|d| !d.within_tol).map(|d| {
        format!(
            "closed form {} = {} but pipeline = {} (relative {:.3e} > {})",
            d.form, d.closed_form, d.pipeline, d.relative_difference, run.common.tol
        )
    });
    let out = EvalOutput {
        schema_version: SCHEMA_VERSION,
        breakdown,
        dual,
    };
    let body = match run.common.format {
        Format::Json => json_body(&out),
        Format::Csv => {
            let mut rows: Vec<Vec<String>> = Vec::new();
            if let Some(b) = &out.breakdown {
                rows.push(vec!["total".into(), num(b.total)]);
                rows.push(vec!["f_sigma".into(), num(b.f_sigma)]);
                rows.push(vec!["f_xbar".into(), num(b.f_xbar)]);
                for g in &b.groups {
                    let name = serde_json::to_value(g.group).expect("group serialises");
                    rows.push(vec![
                        format!("group:{}", name.as_str().unwrap_or_default()),
                        num(g.value),
                    ]);
                }
            }
            if let Some(d) = &out.dual {
                rows.push(vec!["closed_form".into(), num(d.closed_form)]);
                rows.push(vec!["pipeline".into(), num(d.pipeline)]);
                rows.push(vec!["difference".into(), num(d.difference)]);
            }
            csv_table(&["quantity", "value"], rows.into_iter())
        }
    };
    run.emit(&body, &bytes, warnings)?;
    match mismatch {
        Some(m) => Err(Failure::check(m)),
        None => Ok(()),
    }
}

fn cmd_selftest(run: &Run, a: &SelftestArgs) -> Result<(), Failure> {
    if !(run.common.tol > 0.0 && run.common.tol.is_finite()) {
        return Err(Failure::input(format!(
            "--tol must be positive, got {}",
            run.common.tol
        )));
    }
    let opts = SelftestOptions {
        tol: run.common.tol,
        fault: a.inject_fault.map(|f| match f {
            FaultArg::PulseConstant => Fault::PulseConstant,
        }),
        exec: run.exec,
    };
    let reports = run_selftest(&opts);
    for r in &reports {
        eprintln!(
            "suite {:<20} {}  checks={:<3} max_residual={:.3e}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.checks,
            r.max_residual
        );
        if let Some(f) = &r.first_failure {
            eprintln!("  first failure: {f}");
        }
    }
    if run.common.out.is_some() {
        let body = match run.common.format {
            Format::Json => json_body(&reports),
            Format::Csv => csv_table(
                &["suite", "passed", "checks", "max_residual"],
                reports.iter().map(|r| {
                    vec![
                        r.name.to_string(),
                        r.passed.to_string(),
                        r.checks.to_string(),
                        num(r.max_residual),
                    ]
                }),
            ),
        };
        run.emit(
            &body,
            format!("selftest tol={}", opts.tol).as_bytes(),
            Vec::new(),
        )?;
    }
    match reports.iter().find(|r| !r.passed) {
        Some(r) => Err(Failure::check(format!(
            "selftest failed in suite {}: {}",
            r.name,
            r.first_failure.as_deref().unwrap_or("")
        ))),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let exec = match cli.common.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        Some(1) => Execution::Sequential,
        Some(k) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build_global()
            {
                eprintln!("error: cannot start {k} threads: {e}");
                return ExitCode::from(2);
            }
            Execution::Parallel
        }
        None => Execution::Parallel,
    };
    let name = match cli.command {
        Command::DisplacementScan(_) => "displacement-scan",
        Command::PulseScan(_) => "pulse-scan",
        Command::QfiEval(_) => "qfi-eval",
        Command::Selftest(_) => "selftest",
    };
    let run = Run {
        common: &cli.common,
        command: name,
        started: Instant::now(),
        exec,
    };
    let result = match &cli.command {
        Command::DisplacementScan(a) => cmd_displacement(&run, a),
        Command::PulseScan(a) => cmd_pulse(&run, a),
        Command::QfiEval(a) => cmd_eval(&run, a),
        Command::Selftest(a) => cmd_selftest(&run, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
