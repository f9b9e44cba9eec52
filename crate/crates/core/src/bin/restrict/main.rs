mod config;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use affine_restriction::decompose::{decompose_raw, validate, DecomposeConfig, DecompositionResult, ValidationReport, FORMAT_VERSION};
use affine_restriction::dyadic;
use affine_restriction::measures::MeasureSpec;
use affine_restriction::surfaces::SurfaceSpec;
use affine_restriction::verify::{
    counterexample_scan, decoupling_ensemble, restriction_sweep, CounterexampleReport, DecouplingEnsemble,
    DecouplingOptions, EnsembleOptions, RestrictionSweep,
};

use config::{parse_range, RunConfig};
use plot::Series;

const BUILD_ID: &str = env!("RESTRICT_BUILD_ID");

#[derive(Parser)]
#[command(name = "restrict", version, about = "Admissible decompositions and restriction/decoupling checks for polynomial surfaces")]
struct Cli {
    /// JSON config; any flag given on the command line overrides it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the admissible-parallelogram decomposition and validate it.
    Decompose(DecomposeArgs),
    /// Re-validate a stored decomposition.
    Validate(ValidateArgs),
    /// Empirical restriction ratios over random phase ensembles.
    VerifyRestriction(RestrictionArgs),
    /// Empirical decoupling ratios for each family of a stored decomposition.
    VerifyDecoupling(DecouplingArgs),
    /// Quadrature scan of the oscillatory counterexample.
    Counterexample(CounterexampleArgs),
    /// Tables and log-log plots from an artifact.
    Report(ReportArgs),
}

#[derive(Args)]
struct DecomposeArgs {
    /// Catalog name, `random:SEED:DEGREE`, inline polynomial JSON, or a JSON file.
    #[arg(long)]
    surface: Option<String>,
    #[arg(long = "R")]
    r: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "K")]
    big_k: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    overlap_constant: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Surface to validate against; defaults to the one stored in the decomposition.
    #[arg(long)]
    surface: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RestrictionArgs {
    #[arg(long)]
    surface: Option<String>,
    /// One or more radii, comma separated.
    #[arg(long = "R", value_delimiter = ',')]
    r: Option<Vec<f64>>,
    /// `M` or `Meps` (the damped measure with exponent `-1/4 - eps`).
    #[arg(long)]
    spec: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid_cap: Option<usize>,
    #[arg(long)]
    window: Option<bool>,
    #[arg(long)]
    stratified: Option<bool>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecouplingArgs {
    #[arg(long)]
    decomposition: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    nodes_per_piece: Option<usize>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CounterexampleArgs {
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    q: Option<f64>,
    /// Inclusive range such as `5..25`.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    n_step: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Also write an SVG log-log plot.
    #[arg(long)]
    plot: bool,
    /// Defaults to the directory of the input.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Envelope shared by every artifact.
#[derive(Serialize, Deserialize)]
struct Artifact<T> {
    version: String,
    build: String,
    command: String,
    config: RunConfig,
    pass: bool,
    failures: Vec<String>,
    result: T,
}

#[derive(Serialize, Deserialize)]
struct DecomposeOutput {
    decomposition: DecompositionResult,
    validation: ValidationReport,
}

#[derive(Serialize, Deserialize)]
struct DecouplingOutput {
    families: Vec<DecouplingEnsemble>,
    /// Largest `LHS / (σ^{-ε} RHS)` over all families.
    c_dec: f64,
    floor_violations: usize,
    ceiling_violations: usize,
}

fn surface_spec(s: &str) -> Result<SurfaceSpec> {
    let path = Path::new(s);
    if !s.trim_start().starts_with('{') && path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading surface {s}"))?;
        return Ok(serde_json::from_str(&text).with_context(|| format!("parsing surface {s}"))?);
    }
    Ok(SurfaceSpec::parse(s)?)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_artifact<T: Serialize>(path: &Path, command: &str, config: &RunConfig, failures: Vec<String>, result: T) -> Result<bool> {
    let pass = failures.is_empty();
    let art = Artifact {
        version: FORMAT_VERSION.into(),
        build: BUILD_ID.into(),
        command: command.into(),
        config: config.clone(),
        pass,
        failures,
        result,
    };
    let mut text = serde_json::to_string_pretty(&art)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    if !pass {
        let report = serde_json::json!({
            "status": "fail",
            "command": command,
            "artifact": path,
            "failures": art.failures,
        });
        println!("{report}");
    }
    Ok(pass)
}

/// Decompositions are stored inside an artifact; a bare result is accepted too.
fn load_decomposition(path: &Path) -> Result<(DecompositionResult, Option<ValidationReport>)> {
    let v: Value = read_json(path)?;
    if v.get("result").is_some() {
        let art: Artifact<DecomposeOutput> = serde_json::from_value(v).context("not a decompose artifact")?;
        Ok((art.result.decomposition, Some(art.result.validation)))
    } else {
        Ok((serde_json::from_value(v).context("not a decomposition")?, None))
    }
}

fn validation_failures(rep: &ValidationReport) -> Vec<String> {
    let mut f = Vec::new();
    if !rep.coverage_pass {
        f.push(format!("coverage {:.6} with uncovered point {:?}", rep.coverage_fraction, rep.uncovered_witness));
    }
    if !rep.overlap_pass {
        f.push("per-family overlap bound".into());
    }
    for (name, list) in [("admissibility", &rep.admissibility_failures), ("tiny", &rep.tiny_failures), ("width", &rep.width_failures)] {
        for l in list {
            f.push(format!("{name}: sigma {:e} leaf {}: {}", l.sigma, l.index, l.reason));
        }
    }
    if f.is_empty() && !rep.pass {
        f.push("validation failed".into());
    }
    f
}

fn run_decompose(a: DecomposeArgs, file: RunConfig) -> Result<bool> {
    let flags = RunConfig {
        surface: a.surface.as_deref().map(surface_spec).transpose()?,
        r: a.r.map(|r| vec![r]),
        eps: a.eps,
        big_k: a.big_k,
        alpha: a.alpha,
        overlap_constant: a.overlap_constant,
        out: a.out,
        ..Default::default()
    };
    let mut cfg = file.overlay(flags);
    let phi = cfg.surface()?.resolve()?;
    let r = cfg.single_r()?;
    let eps = *cfg.eps.get_or_insert(0.25);
    let d = DecomposeConfig::default();
    let dc = DecomposeConfig {
        k: *cfg.big_k.get_or_insert(d.k),
        alpha: *cfg.alpha.get_or_insert(d.alpha),
        overlap_constant: *cfg.overlap_constant.get_or_insert(d.overlap_constant),
        constants: cfg.constants,
        ..d
    };
    let res = decompose_raw(&phi, r, eps, &dc)?;
    let rep = validate(&res, &phi);
    let out = cfg.out.clone().unwrap_or_else(|| "result.json".into());
    let failures = validation_failures(&rep);
    write_artifact(&out, "decompose", &cfg, failures, DecomposeOutput { decomposition: res, validation: rep })
}

fn run_validate(a: ValidateArgs) -> Result<bool> {
    let (res, stored) = load_decomposition(&a.input)?;
    let phi = match &a.surface {
        Some(s) => surface_spec(s)?.resolve()?,
        None => res.phi.clone(),
    };
    let rep = validate(&res, &phi);
    let mut failures = validation_failures(&rep);
    if stored.as_ref().is_some_and(|s| *s != rep) {
        failures.push("validation report differs from the one stored with the decomposition".into());
    }
    let pass = failures.is_empty();
    match a.out {
        Some(out) => {
            let cfg = RunConfig { decomposition: Some(a.input), ..Default::default() };
            write_artifact(&out, "validate", &cfg, failures, rep)
        }
        None => {
            println!("{}", serde_json::to_string_pretty(&rep)?);
            if !pass {
                println!("{}", serde_json::json!({ "status": "fail", "command": "validate", "failures": failures }));
            }
            Ok(pass)
        }
    }
}

fn measure_spec(name: &str, eps: f64) -> Result<MeasureSpec> {
    Ok(match name {
        "M" => MeasureSpec::M,
        "Meps" | "M_damped" => MeasureSpec::MDamped { eps },
        "affine" => MeasureSpec::Affine,
        "affine_damped" => MeasureSpec::AffineDamped { eps },
        "surface_measure" => MeasureSpec::SurfaceMeasure,
        "lebesgue_pullback" => MeasureSpec::LebesguePullback,
        _ => bail!("unknown measure spec \"{name}\""),
    })
}

fn run_restriction(a: RestrictionArgs, file: RunConfig) -> Result<bool> {
    let flags = RunConfig {
        surface: a.surface.as_deref().map(surface_spec).transpose()?,
        r: a.r,
        spec: a.spec,
        eps: a.eps,
        trials: a.trials,
        seed: a.seed,
        grid_cap: a.grid_cap,
        window: a.window,
        stratified: a.stratified,
        out: a.out,
        ..Default::default()
    };
    let mut cfg = file.overlay(flags);
    let phi = cfg.surface()?.resolve()?;
    let rs = cfg.r.clone().context("R is required")?;
    if rs.is_empty() || rs.iter().any(|&r| !(r >= 1.0)) {
        bail!("R values must be at least 1");
    }
    let d = EnsembleOptions::default();
    let opts = EnsembleOptions {
        trials: *cfg.trials.get_or_insert(d.trials),
        seed: *cfg.seed.get_or_insert(d.seed),
        grid_cap: *cfg.grid_cap.get_or_insert(d.grid_cap),
        window: *cfg.window.get_or_insert(d.window),
        stratified: *cfg.stratified.get_or_insert(d.stratified),
    };
    let spec_name = cfg.spec.get_or_insert_with(|| "M".into()).clone();
    let eps = *cfg.eps.get_or_insert(0.25);
    let spec = measure_spec(&spec_name, eps)?;
    let sweep = restriction_sweep(&phi, &rs, spec, &opts)?;
    let mut failures = Vec::new();
    for p in &sweep.points {
        if !p.ratios.iter().all(|r| r.is_finite()) {
            failures.push(format!("non-finite ratio at R = {}", p.r));
        }
    }
    let out = cfg.out.clone().unwrap_or_else(|| "report.json".into());
    write_artifact(&out, "verify-restriction", &cfg, failures, sweep)
}

fn run_decoupling(a: DecouplingArgs, file: RunConfig) -> Result<bool> {
    let flags = RunConfig {
        decomposition: a.decomposition,
        p: a.p,
        trials: a.trials,
        seed: a.seed,
        nodes_per_piece: a.nodes_per_piece,
        grid_n: a.grid_n,
        out: a.out,
        ..Default::default()
    };
    let mut cfg = file.overlay(flags);
    let path = cfg.decomposition.clone().context("--decomposition is required")?;
    let (res, _) = load_decomposition(&path)?;
    let d = DecouplingOptions::default();
    let opts = DecouplingOptions {
        p: *cfg.p.get_or_insert(d.p),
        trials: *cfg.trials.get_or_insert(d.trials),
        seed: *cfg.seed.get_or_insert(d.seed),
        nodes_per_piece: *cfg.nodes_per_piece.get_or_insert(d.nodes_per_piece),
        grid_n: *cfg.grid_n.get_or_insert(d.grid_n),
        ..d
    };
    let mut families = Vec::new();
    for (&k, leaves) in &res.families {
        // Leaves without a verdict belong to the tiny-curvature family, which is not decoupled.
        let family: Vec<_> = leaves.iter().filter(|l| l.verdict.is_some()).map(|l| l.parallelogram).collect();
        if family.is_empty() {
            continue;
        }
        families.push(decoupling_ensemble(&res.phi, &family, dyadic::value(k), res.eps, res.r, &opts)?);
    }
    let out = DecouplingOutput {
        c_dec: families.iter().map(|f| f.max_ratio_sigma).fold(0.0, f64::max),
        floor_violations: families.iter().map(|f| f.floor_violations).sum(),
        ceiling_violations: families.iter().map(|f| f.ceiling_violations).sum(),
        families,
    };
    // The floor is reported only: unresolved pieces can cancel.
    let mut failures = Vec::new();
    if out.ceiling_violations > 0 {
        failures.push(format!("{} trials above the count^(1/2) ceiling", out.ceiling_violations));
    }
    let path = cfg.out.clone().unwrap_or_else(|| "decoupling.json".into());
    write_artifact(&path, "verify-decoupling", &cfg, failures, out)
}

fn counterexample_rows(rep: &CounterexampleReport) -> Vec<Vec<f64>> {
    rep.rows.iter().map(|r| vec![r.n, r.integral, r.error, r.ratio, r.lower_const]).collect()
}

const COUNTEREXAMPLE_HEADER: [&str; 5] = ["n", "integral", "error", "ratio", "lower_const"];

fn run_counterexample(a: CounterexampleArgs, file: RunConfig) -> Result<bool> {
    let flags = RunConfig { k: a.k, q: a.q, n: a.n, n_step: a.n_step, out: a.out, ..Default::default() };
    let mut cfg = file.overlay(flags);
    let k = *cfg.k.get_or_insert(3);
    let q = *cfg.q.get_or_insert(2.0);
    let step = *cfg.n_step.get_or_insert(1.0);
    let ns = parse_range(cfg.n.get_or_insert_with(|| "5..25".into()), step)?;
    let rep = counterexample_scan(k, q, &ns)?;
    let mut failures = Vec::new();
    if !rep.increasing {
        failures.push("ratio(n) is not strictly increasing".into());
    }
    if !(rep.c_min > 0.0) {
        failures.push(format!("lower-bound constant {} is not positive", rep.c_min));
    }
    let out = cfg.out.clone().unwrap_or_else(|| "counterexample.json".into());
    plot::write_csv(&out.with_extension("csv"), &COUNTEREXAMPLE_HEADER, &counterexample_rows(&rep))?;
    write_artifact(&out, "counterexample", &cfg, failures, rep)
}

fn run_report(a: ReportArgs) -> Result<bool> {
    let v: Value = read_json(&a.input)?;
    let command = v.get("command").and_then(Value::as_str).context("input is not an artifact")?.to_string();
    let result = v.get("result").cloned().context("artifact has no result")?;
    let (header, rows, series, title, xlabel, ylabel): (Vec<&str>, Vec<Vec<f64>>, Vec<Series>, &str, &str, &str) =
        match command.as_str() {
            "counterexample" => {
                let rep: CounterexampleReport = serde_json::from_value(result)?;
                println!("k = {} q = {} slope = {:.4} increasing = {} c in [{:.4e}, {:.4e}]", rep.k, rep.q, rep.slope, rep.increasing, rep.c_min, rep.c_max);
                let s = vec![
                    Series { name: "ratio".into(), points: rep.rows.iter().map(|r| (r.n, r.ratio)).collect() },
                    Series { name: "lower constant".into(), points: rep.rows.iter().map(|r| (r.n, r.lower_const)).collect() },
                ];
                (COUNTEREXAMPLE_HEADER.to_vec(), counterexample_rows(&rep), s, "counterexample scan", "n", "ratio")
            }
            "verify-restriction" => {
                let sw: RestrictionSweep = serde_json::from_value(result)?;
                println!("slope = {:.4} max/min = {:.4}", sw.slope, sw.max_over_min);
                let rows = sw.points.iter().map(|p| vec![p.r, p.max, p.min, p.mean]).collect();
                let pick = |name: &str, f: fn(&affine_restriction::verify::RestrictionEnsemble) -> f64| Series {
                    name: name.into(),
                    points: sw.points.iter().map(|p| (p.r, f(p))).collect(),
                };
                let s = vec![pick("max", |p| p.max), pick("mean", |p| p.mean), pick("min", |p| p.min)];
                (vec!["R", "max", "min", "mean"], rows, s, "restriction ratio", "R", "ratio")
            }
            "verify-decoupling" => {
                let out: DecouplingOutput = serde_json::from_value(result)?;
                println!("C_dec = {:.4} floor violations = {} ceiling violations = {}", out.c_dec, out.floor_violations, out.ceiling_violations);
                let rows = out
                    .families
                    .iter()
                    .map(|f| vec![f.sigma, f.pieces as f64, f.max_ratio, f.max_ratio_sigma, f.min_ratio, f.min_floor_margin])
                    .collect();
                let s = vec![
                    Series { name: "max ratio".into(), points: out.families.iter().map(|f| (f.sigma, f.max_ratio)).collect() },
                    Series { name: "max ratio sigma^eps".into(), points: out.families.iter().map(|f| (f.sigma, f.max_ratio_sigma)).collect() },
                ];
                let h = vec!["sigma", "pieces", "max_ratio", "max_ratio_sigma", "min_ratio", "min_floor_margin"];
                (h, rows, s, "decoupling ratio by family", "sigma", "ratio")
            }
            "decompose" => {
                let out: DecomposeOutput = serde_json::from_value(result)?;
                println!("leaves = {} pass = {}", out.decomposition.num_leaves(), out.validation.pass);
                let fams = &out.validation.families;
                let rows = fams
                    .iter()
                    .map(|f| vec![f.sigma, f.leaves as f64, f.max_overlap50 as f64, f.overlap_times_sigma_eps, f.min_width])
                    .collect();
                let s = vec![
                    Series { name: "leaves".into(), points: fams.iter().map(|f| (f.sigma, f.leaves as f64)).collect() },
                    Series { name: "overlap sigma^eps".into(), points: fams.iter().map(|f| (f.sigma, f.overlap_times_sigma_eps)).collect() },
                ];
                let h = vec!["sigma", "leaves", "max_overlap50", "overlap_times_sigma_eps", "min_width"];
                (h, rows, s, "decomposition families", "sigma", "count")
            }
            other => bail!("no report for artifacts of command \"{other}\""),
        };
    let dir = a.out_dir.clone().unwrap_or_else(|| a.input.parent().map(Path::to_path_buf).unwrap_or_default());
    let stem = a.input.file_stem().context("input has no file name")?.to_string_lossy().into_owned();
    let csv = dir.join(format!("{stem}.csv"));
    plot::write_csv(&csv, &header, &rows)?;
    eprintln!("wrote {}", csv.display());
    if a.plot {
        let svg = dir.join(format!("{stem}.svg"));
        std::fs::write(&svg, plot::loglog_svg(title, xlabel, ylabel, &series)?)?;
        eprintln!("wrote {}", svg.display());
    }
    Ok(true)
}

fn setup_threads() -> Result<()> {
    if let Ok(v) = std::env::var("RESTRICT_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n > 0).context("RESTRICT_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Decompose(_) => "decompose",
        Command::Validate(_) => "validate",
        Command::VerifyRestriction(_) => "verify-restriction",
        Command::VerifyDecoupling(_) => "verify-decoupling",
        Command::Counterexample(_) => "counterexample",
        Command::Report(_) => "report",
    }
}

fn run(cli: Cli) -> Result<bool> {
    setup_threads()?;
    let file = cli.config.as_deref().map(RunConfig::load).transpose()?.unwrap_or_default();
    match cli.command {
        Command::Decompose(a) => run_decompose(a, file),
        Command::Validate(a) => run_validate(a),
        Command::VerifyRestriction(a) => run_restriction(a, file),
        Command::VerifyDecoupling(a) => run_decoupling(a, file),
        Command::Counterexample(a) => run_counterexample(a, file),
        Command::Report(a) => run_report(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = command_name(&cli.command);
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            let kind = e
                .downcast_ref::<affine_restriction::Error>()
                .map(|le| format!("{le:?}").split(['(', ' ', '{']).next().unwrap_or("").to_string())
                .unwrap_or_else(|| "Io".into());
            eprintln!("error: {e:#}");
            println!("{}", serde_json::json!({ "status": "error", "command": name, "kind": kind, "error": format!("{e:#}") }));
            ExitCode::FAILURE
        }
    }
}
