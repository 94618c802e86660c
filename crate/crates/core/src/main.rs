use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rcmode::datagen::{builtin_scenarios, sample_dgp, scenario};
use rcmode::error::{Error, Result};
use rcmode::geometry::{normalize, RawDataset};
use rcmode::io::{
    load_dataset, manifest_path, resolve_threads, save_dataset, write_arrows, write_dataset, write_json, write_kernel,
    Bandwidth, Manifest, QuantileCache, QuantileKind, ResultDocument, RunConfig,
};
use rcmode::kernels::KernelTable;
use rcmode::limit_sim::{calibrated_quantiles, LimitConfig, PipelineConfig};
use rcmode::seeds::derive_seed;
use rcmode::studies::{reproduce_table, StudySize, TableId};
use rcmode::testing::{
    global_mode_scan, mode_test, monotonicity_map, multiscale_mode_test, ols_baseline, HcType, MapSpec,
    ModeFamilySpec, MultiscaleRule, QuantileSource, ScanSpec, TestOutcome, TestSettings, Verdict,
};

#[derive(Parser)]
#[command(name = "rcmode", version, about = "Multiscale mode and monotonicity tests for random coefficient densities")]
struct Cli {
    /// TOML run configuration; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: RCM_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a dataset from a named scenario.
    Simulate(SimulateArgs),
    /// Test for a mode at b0 on one or more scales.
    TestMode(TestModeArgs),
    /// Scan a rectangle for modes.
    ScanModes(ScanArgs),
    /// Arrow map of certified decreases (d = 2).
    MonoMap(MapArgs),
    /// Simulate a calibrated threshold for a mode family under a null scenario.
    Calibrate(CalibrateArgs),
    /// Write the tabulated kernel ψ_d.
    KernelDump(KernelArgs),
    /// Rerun one of the reference simulation tables at reduced size.
    ReproduceTable(TableArgs),
    /// Heteroscedasticity-robust least squares of S on Θ.
    OlsBaseline(OlsArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, required_unless_present = "list")]
    scenario: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep the coefficient draws as beta1..betad columns.
    #[arg(long)]
    retain_beta: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// List the scenario catalogue and exit.
    #[arg(long)]
    list: bool,
}

/// Options shared by the commands that test a dataset.
#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model with intercept: column x1 must be identically one.
    #[arg(long)]
    intercept: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Bandwidth of the direction density estimate (number or "auto").
    #[arg(long)]
    h_star: Option<String>,
    /// Bandwidth of the joint density estimate (number or "auto").
    #[arg(long)]
    h_plus: Option<String>,
    #[arg(long)]
    n_mc: Option<usize>,
    /// Directory of the quantile cache.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestModeArgs {
    #[command(flatten)]
    common: DataArgs,
    /// Candidate mode, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    b0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    /// Use a threshold calibrated under `--null-scenario`.
    #[arg(long)]
    calibrated: bool,
    #[arg(long)]
    null_scenario: Option<String>,
    /// Null replications for calibration.
    #[arg(long)]
    reps: Option<usize>,
    /// How per-scale rejections combine when several scales are given.
    #[arg(long, value_enum, default_value_t = RuleArg::EveryDirection)]
    rule: RuleArg,
    /// Scales entering the combined verdict (default: all).
    #[arg(long, value_delimiter = ',')]
    rule_scales: Option<Vec<f64>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    EveryDirection,
    AnyScale,
    AllScales,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    common: DataArgs,
    /// Rectangle as a1:a2 with comma separated corners, e.g. -1,-1:2,2.
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    common: DataArgs,
    #[arg(long)]
    h0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    /// Grid spacing (default 2·h0).
    #[arg(long)]
    width: Option<f64>,
    /// Also write the full result JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    scenario_null: Option<String>,
    /// Sample size of each null replication.
    #[arg(long)]
    n: Option<usize>,
    /// Mode family at b0 (the only family kind).
    #[arg(long, value_enum, default_value_t = FamilyArg::Mode)]
    family: FamilyArg,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    b0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Mode,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, value_enum)]
    table: TableArg,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Null replications per calibrated threshold.
    #[arg(long, default_value_t = 200)]
    cal_reps: usize,
    #[arg(long, default_value_t = 5000)]
    n_mc: usize,
    /// Sample sizes (default: those of the reference table).
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableArg {
    LevelPowerUniform,
    LevelPowerCauchy,
    Multiscale,
}

#[derive(Args)]
struct OlsArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    intercept: bool,
    #[arg(long, value_enum, default_value_t = HcArg::Hc1)]
    hc: HcArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum HcArg {
    Hc0,
    Hc1,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let threads = resolve_threads(cli.threads.or(file.threads))?;
    if threads == Some(0) {
        return Err(Error::config("threads", "need at least one thread"));
    }
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config("threads", e.to_string()))?;
    }
    let started = Instant::now();
    let (name, cfg, outputs) = match cli.cmd {
        Cmd::Simulate(a) => simulate(file, a)?,
        Cmd::TestMode(a) => test_mode(file, a)?,
        Cmd::ScanModes(a) => scan(file, a)?,
        Cmd::MonoMap(a) => mono_map(file, a)?,
        Cmd::Calibrate(a) => calibrate(file, a)?,
        Cmd::KernelDump(a) => return kernel_dump(a),
        Cmd::ReproduceTable(a) => reproduce(file, a)?,
        Cmd::OlsBaseline(a) => ols(file, a)?,
    };
    if let (Some(cfg), Some(first)) = (cfg, outputs.first()) {
        let manifest = Manifest {
            command: name.to_string(),
            config_hash: cfg.hash()?,
            seed: cfg.seed.unwrap_or(0),
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: rayon::current_num_threads(),
            wall_time_s: started.elapsed().as_secs_f64(),
            outputs: outputs.clone(),
        };
        write_json(&manifest_path(first), &manifest)?;
    }
    Ok(())
}

type Ran = (&'static str, Option<RunConfig>, Vec<PathBuf>);

fn bandwidth(s: Option<String>) -> Option<Bandwidth> {
    s.map(|s| match s.parse::<f64>() {
        Ok(h) => Bandwidth::Value(h),
        Err(_) => Bandwidth::Word(s),
    })
}

fn parse_region(s: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let bad = || Error::config("region", format!("expected a1:a2 with comma separated corners, got {s:?}"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let parse = |t: &str| t.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<f64>>>();
    Ok((parse(a)?, parse(b)?))
}

fn common_layer(c: DataArgs) -> RunConfig {
    RunConfig {
        seed: c.seed,
        alpha: c.alpha,
        data: c.data,
        intercept: c.intercept.then_some(true),
        h_star: bandwidth(c.h_star),
        h_plus: bandwidth(c.h_plus),
        n_mc: c.n_mc,
        cache_dir: c.cache_dir,
        out: c.out,
        ..Default::default()
    }
}

fn require<T: Clone>(v: &Option<T>, key: &str) -> Result<T> {
    v.clone().ok_or_else(|| Error::config(key, "missing"))
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => quiet_pipe(std::io::stdout().write_all(bytes).map_err(Error::from))?,
    }
    Ok(())
}

/// A closed stdout (e.g. piped into `head`) is not an error.
fn quiet_pipe(r: Result<()>) -> Result<()> {
    match r {
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(Error::Csv(e)) if matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe) => Ok(()),
        r => r,
    }
}

fn simulate(file: RunConfig, a: SimulateArgs) -> Result<Ran> {
    if a.list {
        for s in builtin_scenarios() {
            println!("{:<24} {}", s.name, s.description);
        }
        return Ok(("simulate", None, vec![]));
    }
    let cfg = file.overlay(RunConfig { scenario: a.scenario, n: a.n, seed: a.seed, out: a.out, ..Default::default() });
    cfg.validate()?;
    let mut spec = scenario(&require(&cfg.scenario, "scenario")?, require(&cfg.n, "n")?, cfg.seed()?)?;
    spec.retain_beta = a.retain_beta;
    let raw = sample_dgp(&spec)?;
    match &cfg.out {
        Some(p) => save_dataset(p, &raw)?,
        None => quiet_pipe(write_dataset(std::io::stdout().lock(), &raw))?,
    }
    let outs = cfg.out.iter().cloned().collect();
    Ok(("simulate", Some(cfg), outs))
}

/// Loaded data plus everything the test procedures need.
struct Prepared {
    cfg: RunConfig,
    raw: RawDataset,
    kt: KernelTable,
    settings: TestSettings,
}

fn prepare(cfg: RunConfig, calibrated_family: Option<&[f64]>) -> Result<Prepared> {
    cfg.validate()?;
    let data = require(&cfg.data, "data")?;
    let raw = load_dataset(&data, cfg.intercept.unwrap_or(false))?;
    let kt = cfg.kernel_table(raw.dim)?;
    let seed = cfg.seed()?;
    let quantile = match cfg.quantile.unwrap_or(QuantileKind::Theoretical) {
        QuantileKind::Theoretical => {
            QuantileSource::Theoretical(LimitConfig { n_mc: cfg.n_mc.unwrap_or(5000), ..Default::default() })
        }
        QuantileKind::Calibrated => {
            if calibrated_family.is_none() {
                return Err(Error::config("quantile", "calibrated thresholds apply to mode tests only"));
            }
            let name = require(&cfg.null_scenario, "null_scenario")?;
            let null = scenario(&name, raw.len() / 2, 0)?;
            if null.dim != raw.dim || null.model != raw.model {
                return Err(Error::config("null_scenario", format!("{name} does not match the data's dimension or model")));
            }
            QuantileSource::Calibrated { null, n_reps: cfg.n_reps.unwrap_or(1000) }
        }
    };
    let settings = TestSettings {
        alpha: cfg.alpha()?,
        design: cfg.design()?,
        quantile,
        seed: derive_seed(seed, 1),
        cache: cfg.cache_dir.clone().map(QuantileCache::new),
        ..Default::default()
    };
    Ok(Prepared { cfg, raw, kt, settings })
}

fn finish(p: &Prepared, outcome: TestOutcome) -> Result<Vec<PathBuf>> {
    let doc = ResultDocument::new(outcome, p.cfg.seed()?, p.cfg.hash()?);
    let text = rcmode::io::to_json(&doc)?;
    write_out(p.cfg.out.as_deref(), text.as_bytes())?;
    Ok(p.cfg.out.iter().cloned().collect())
}

fn test_mode(file: RunConfig, a: TestModeArgs) -> Result<Ran> {
    let layer = RunConfig {
        b0: a.b0,
        scales: a.scales,
        quantile: a.calibrated.then_some(QuantileKind::Calibrated),
        null_scenario: a.null_scenario,
        n_reps: a.reps,
        ..common_layer(a.common)
    };
    let cfg = file.overlay(layer);
    let b0 = require(&cfg.b0, "b0")?;
    let p = prepare(cfg, Some(&b0))?;
    if b0.len() != p.raw.dim {
        return Err(Error::config("b0", format!("has {} coordinates, data has d = {}", b0.len(), p.raw.dim)));
    }
    let scales = p.cfg.scales.clone().unwrap_or_else(|| vec![1.0]);
    let sample = normalize(&p.raw, derive_seed(p.cfg.seed()?, 0))?;
    let spec = ModeFamilySpec::default();
    let outcome = if scales.len() == 1 {
        mode_test(&b0, &scales, &sample, &p.kt, &p.settings, &spec)?
    } else {
        let subset = a.rule_scales;
        let rule = match a.rule {
            RuleArg::EveryDirection => MultiscaleRule::EveryDirectionSomeScale { subset },
            RuleArg::AnyScale => MultiscaleRule::AnyScale { subset },
            RuleArg::AllScales => MultiscaleRule::AllScales { subset },
        };
        multiscale_mode_test(&b0, &scales, &sample, &p.kt, &p.settings, &spec, &rule)?
    };
    if let Verdict::Mode { detected } | Verdict::Multiscale { detected, .. } = &outcome.verdict {
        eprintln!("mode at {b0:?}: {}", if *detected { "detected" } else { "not detected" });
    }
    let outs = finish(&p, outcome)?;
    Ok(("test-mode", Some(p.cfg), outs))
}

fn region_layer(region: Option<String>) -> Result<(Option<Vec<f64>>, Option<Vec<f64>>)> {
    match region {
        Some(r) => {
            let (a1, a2) = parse_region(&r)?;
            Ok((Some(a1), Some(a2)))
        }
        None => Ok((None, None)),
    }
}

fn scan(file: RunConfig, a: ScanArgs) -> Result<Ran> {
    let (a1, a2) = region_layer(a.region)?;
    let cfg = file.overlay(RunConfig { a1, a2, scales: a.scales, ..common_layer(a.common) });
    let p = prepare(cfg, None)?;
    let spec = ScanSpec {
        a1: require(&p.cfg.a1, "region")?,
        a2: require(&p.cfg.a2, "region")?,
        scales: require(&p.cfg.scales, "scales")?,
        family: ModeFamilySpec::default(),
    };
    let sample = normalize(&p.raw, derive_seed(p.cfg.seed()?, 0))?;
    let outcome = global_mode_scan(&sample, &p.kt, &p.settings, &spec)?;
    if let Verdict::Candidates { vertices, .. } = &outcome.verdict {
        eprintln!("{} candidate mode(s)", vertices.len());
    }
    let outs = finish(&p, outcome)?;
    Ok(("scan-modes", Some(p.cfg), outs))
}

fn mono_map(file: RunConfig, a: MapArgs) -> Result<Ran> {
    let (a1, a2) = region_layer(a.region)?;
    let cfg = file.overlay(RunConfig { a1, a2, h0: a.h0, width: a.width, ..common_layer(a.common) });
    let p = prepare(cfg, None)?;
    let defaults = MapSpec::default();
    let spec = MapSpec {
        a1: p.cfg.a1.clone().unwrap_or(defaults.a1),
        a2: p.cfg.a2.clone().unwrap_or(defaults.a2),
        h0: p.cfg.h0.unwrap_or(defaults.h0),
        width: p.cfg.width.or(defaults.width),
    };
    let sample = normalize(&p.raw, derive_seed(p.cfg.seed()?, 0))?;
    let outcome = monotonicity_map(&sample, &p.kt, &p.settings, &spec)?;
    let Verdict::Arrows { arrows } = &outcome.verdict else { unreachable!() };
    let mut csv = Vec::new();
    write_arrows(&mut csv, arrows)?;
    write_out(p.cfg.out.as_deref(), &csv)?;
    let mut outs: Vec<PathBuf> = p.cfg.out.iter().cloned().collect();
    if let Some(j) = a.json {
        let doc = ResultDocument::new(outcome, p.cfg.seed()?, p.cfg.hash()?);
        write_json(&j, &doc)?;
        outs.push(j);
    }
    Ok(("mono-map", Some(p.cfg), outs))
}

fn calibrate(file: RunConfig, a: CalibrateArgs) -> Result<Ran> {
    let FamilyArg::Mode = a.family;
    let cfg = file.overlay(RunConfig {
        null_scenario: a.scenario_null,
        n: a.n,
        b0: a.b0,
        scales: a.scales,
        n_reps: a.reps,
        alpha: a.alpha,
        seed: a.seed,
        out: a.out,
        ..Default::default()
    });
    cfg.validate()?;
    let null = scenario(&require(&cfg.null_scenario, "scenario_null")?, require(&cfg.n, "n")?, 0)?;
    let b0 = cfg.b0.clone().unwrap_or_else(|| vec![0.0; null.dim]);
    if b0.len() != null.dim {
        return Err(Error::config("b0", format!("has {} coordinates, scenario has d = {}", b0.len(), null.dim)));
    }
    let scales = cfg.scales.clone().unwrap_or_else(|| vec![1.0]);
    let family = ModeFamilySpec::default().points(&b0, &scales)?;
    let kt = cfg.kernel_table(null.dim)?;
    let pipeline = PipelineConfig { design: cfg.design()?, ..Default::default() };
    let q = calibrated_quantiles(&family, &null, &kt, &pipeline, cfg.alpha()?, cfg.n_reps.unwrap_or(1000), cfg.seed()?)?;
    for w in &q.warnings {
        eprintln!("warning: {w}");
    }
    write_out(cfg.out.as_deref(), rcmode::io::to_json(&q)?.as_bytes())?;
    let outs = cfg.out.iter().cloned().collect();
    Ok(("calibrate", Some(cfg), outs))
}

fn kernel_dump(a: KernelArgs) -> Result<()> {
    let kt = KernelTable::new(a.d)?;
    let mut buf = Vec::new();
    write_kernel(&mut buf, &kt)?;
    write_out(a.out.as_deref(), &buf)
}

fn reproduce(file: RunConfig, a: TableArgs) -> Result<Ran> {
    let cfg = file.overlay(RunConfig { seed: a.seed, out: a.out, ..Default::default() });
    cfg.validate()?;
    let table = match a.table {
        TableArg::LevelPowerUniform => TableId::LevelPowerUniform,
        TableArg::LevelPowerCauchy => TableId::LevelPowerCauchy,
        TableArg::Multiscale => TableId::Multiscale,
    };
    let ns = a.n.unwrap_or_else(|| table.reference().iter().map(|(n, _)| *n).collect());
    let size = StudySize { reps: a.reps, cal_reps: a.cal_reps, n_mc: a.n_mc };
    let report = reproduce_table(table, &ns, size, cfg.alpha()?, cfg.seed()?)?;
    print!("{report}");
    if let Some(p) = &cfg.out {
        write_json(p, &report)?;
    }
    let outs = cfg.out.iter().cloned().collect();
    Ok(("reproduce-table", Some(cfg), outs))
}

fn ols(file: RunConfig, a: OlsArgs) -> Result<Ran> {
    let cfg = file.overlay(RunConfig {
        data: a.data,
        intercept: a.intercept.then_some(true),
        out: a.out,
        ..Default::default()
    });
    let data = require(&cfg.data, "data")?;
    if !data.is_file() {
        return Err(Error::config("data", format!("{} does not exist", data.display())));
    }
    let raw = load_dataset(&data, cfg.intercept.unwrap_or(false))?;
    let hc = match a.hc {
        HcArg::Hc0 => HcType::Hc0,
        HcArg::Hc1 => HcType::Hc1,
    };
    let r = ols_baseline(&raw, hc)?;
    write_out(cfg.out.as_deref(), rcmode::io::to_json(&r)?.as_bytes())?;
    let outs = cfg.out.iter().cloned().collect();
    Ok(("ols-baseline", Some(cfg), outs))
}
