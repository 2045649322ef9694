use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rydsync::config::{RunConfig, MODEL_KEYS};
use rydsync::continuation::{
    label_changes, locate_transitions, phase_diagram, EventOptions, PhaseDiagramOptions,
};
use rydsync::dynamics::VInterFamily;
use rydsync::integrate::{AdaptiveOptions, Rk4Options};
use rydsync::oscillation::{analyse_cycle, basin_sample, classify_attractor, AttractorOptions, CycleClass, CycleOptions};
use rydsync::report::{self, Provenance};
use rydsync::seeds::{self, SeedKind};
use rydsync::steady::census;

/// Run options that may appear in a config file next to the model keys.
const RUN_KEYS: [&str; 15] = [
    "rng",
    "seed_kind",
    "stream",
    "t_max",
    "dt",
    "stride",
    "adaptive",
    "tol",
    "n_seeds",
    "n_samples",
    "t_transient",
    "t_limit",
    "grid_min",
    "grid_max",
    "grid_step",
];

#[derive(Parser)]
#[command(name = "rydsync", version, about = "Mean-field dynamics and phase analysis of coupled Rydberg chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write it as CSV.
    Simulate(SimulateArgs),
    /// Multistart Newton census of the fixed points.
    FixedPoints(CensusArgs),
    /// Phase labels over a V_i grid plus the bifurcation events.
    PhaseDiagram(PhaseArgs),
    /// Attractor fractions from random seeds.
    Basins(BasinArgs),
    /// Classify the limit cycle of a trajectory file or of a fresh run.
    CycleClassify(CycleArgs),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Random seed.
    #[arg(long, value_name = "N")]
    rng: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Named parameter preset applied before the config file.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    #[arg(long)]
    omega: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    v_intra: Option<String>,
    #[arg(long)]
    v_inter: Option<String>,
    /// Number or `geometric`.
    #[arg(long)]
    v_diag: Option<String>,
    #[arg(long)]
    diag_multiplicity: Option<String>,
    #[arg(long)]
    r_high_order: Option<String>,
    /// `local` or `neighbor`.
    #[arg(long)]
    high_order_form: Option<String>,
    /// Number or `auto` (V/64).
    #[arg(long)]
    v_nnn: Option<String>,
    #[arg(long)]
    rows: Option<String>,
    #[arg(long)]
    cols: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    seed: SeedArgs,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Record every `stride`-th step.
    #[arg(long)]
    stride: Option<usize>,
    /// Step-doubling adaptive RK4 instead of fixed steps.
    #[arg(long)]
    adaptive: bool,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct SeedArgs {
    /// ground | random-bloch | random-population | af | af2
    #[arg(long)]
    seed_kind: Option<String>,
    /// Random stream index.
    #[arg(long)]
    stream: Option<u64>,
}

#[derive(Args)]
struct CensusArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n_seeds: Option<usize>,
}

#[derive(Args)]
struct PhaseArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    grid_min: Option<f64>,
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    n_seeds: Option<usize>,
    /// Only the grid; no branch tracking.
    #[arg(long)]
    skip_events: bool,
}

#[derive(Args)]
struct BasinArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n_samples: Option<usize>,
    /// random-bloch | random-population
    #[arg(long)]
    seed_kind: Option<String>,
    #[arg(long)]
    t_limit: Option<f64>,
}

#[derive(Args)]
struct CycleArgs {
    #[command(flatten)]
    common: Common,
    /// Trajectory CSV to classify; without it a run is started from the seed.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArgs,
    #[arg(long)]
    t_transient: Option<f64>,
    #[arg(long)]
    t_limit: Option<f64>,
}

/// Whether every requested analysis completed and classified.
enum Outcome {
    Complete,
    Incomplete(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Incomplete(why)) => {
            eprintln!("incomplete: {why}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::FixedPoints(a) => fixed_points(a),
        Command::PhaseDiagram(a) => phase(a),
        Command::Basins(a) => basins(a),
        Command::CycleClassify(a) => cycle(a),
    }
}

fn load_config(c: &Common) -> Result<RunConfig> {
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut text = String::new();
    if let Some(p) = &c.preset {
        text.push_str(&format!("preset = {p}\n"));
    }
    if let Some(path) = &c.config {
        text.push_str(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?);
    }
    let mut cfg = RunConfig::parse(&text).context("parsing the configuration")?;
    if let Some(bad) = cfg.options.keys().find(|k| !RUN_KEYS.contains(&k.as_str())) {
        bail!("unknown config key '{bad}' (model keys: {}; run keys: {})", MODEL_KEYS.join(", "), RUN_KEYS.join(", "));
    }
    let overrides = [
        ("omega", &c.omega),
        ("delta", &c.delta),
        ("gamma", &c.gamma),
        ("v_intra", &c.v_intra),
        ("v_inter", &c.v_inter),
        ("v_diag", &c.v_diag),
        ("diag_multiplicity", &c.diag_multiplicity),
        ("r_high_order", &c.r_high_order),
        ("high_order_form", &c.high_order_form),
        ("rows", &c.rows),
        ("cols", &c.cols),
        // last, so `auto` sees the final v_intra
        ("v_nnn", &c.v_nnn),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, v).map_err(|msg| anyhow::anyhow!("--{}: {msg}", key.replace('_', "-")))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Flag value, else config value, else default; the result is recorded in the config.
fn resolve<T>(cfg: &mut RunConfig, key: &str, flag: Option<T>, default: T) -> Result<T>
where
    T: FromStr + ToString,
{
    let value = match flag {
        Some(v) => v,
        None => match cfg.option(key) {
            Some(s) => s.parse().map_err(|_| anyhow::anyhow!("config key '{key}': cannot parse '{s}'"))?,
            None => default,
        },
    };
    cfg.options.insert(key.to_string(), value.to_string());
    Ok(value)
}

fn seed_kind(cfg: &mut RunConfig, flag: Option<String>, default: SeedKind) -> Result<SeedKind> {
    let raw = resolve(cfg, "seed_kind", flag, default.as_str().to_string())?;
    let kind: SeedKind = raw.parse()?;
    cfg.options.insert("seed_kind".into(), kind.as_str().into());
    Ok(kind)
}

fn prepare_out(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.txt"), cfg.echo())?;
    Ok(())
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn simulate(a: SimulateArgs) -> Result<Outcome> {
    let mut cfg = load_config(&a.common)?;
    let rng = resolve(&mut cfg, "rng", a.common.rng, 0u64)?;
    let kind = seed_kind(&mut cfg, a.seed.seed_kind, SeedKind::RandomBloch)?;
    let stream = resolve(&mut cfg, "stream", a.seed.stream, 0u64)?;
    let t_max = resolve(&mut cfg, "t_max", a.t_max, 200.0)?;
    let dt = resolve(&mut cfg, "dt", a.dt, 1e-3)?;
    let stride = resolve(&mut cfg, "stride", a.stride, 10usize)?;
    let adaptive = resolve(&mut cfg, "adaptive", a.adaptive.then_some(true), false)?;
    let model = cfg.model()?;
    let seed = seeds::generate(kind, &model, rng, stream)?;
    let traj = if adaptive {
        let tol = resolve(&mut cfg, "tol", a.tol, 1e-9)?;
        model.integrate_adaptive(&seed, &AdaptiveOptions::new(t_max, tol).sample_every(dt * stride as f64))?
    } else {
        model.integrate_rk4(&seed, &Rk4Options::new(t_max).dt(dt).stride(stride))?
    };
    prepare_out(&a.common.out, &cfg)?;
    let path = a.common.out.join("trajectory.csv");
    report::write_trajectory_csv(std::io::BufWriter::new(create(&path)?), &traj, &model.cell, &cfg)?;
    println!("wrote {} samples to {}", traj.len(), path.display());
    Ok(Outcome::Complete)
}

fn fixed_points(a: CensusArgs) -> Result<Outcome> {
    let mut cfg = load_config(&a.common)?;
    let rng = resolve(&mut cfg, "rng", a.common.rng, 0u64)?;
    let n_seeds = resolve(&mut cfg, "n_seeds", a.n_seeds, 100usize)?;
    let model = cfg.model()?;
    let c = census(&model, n_seeds, rng)?;
    prepare_out(&a.common.out, &cfg)?;
    write_json(&a.common.out.join("census.json"), &report::census_json(&c, &model.cell, &cfg))?;
    for cc in c.counts() {
        println!("{:<12} {:>3} ({} stable, {} unstable)", cc.class.as_str(), cc.count, cc.stable, cc.unstable);
    }
    Ok(Outcome::Complete)
}

fn grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(max >= min) {
        bail!("grid needs step > 0 and max >= min, got min {min}, max {max}, step {step}");
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| ((min + k as f64 * step) * 1e9).round() / 1e9).collect())
}

fn phase(a: PhaseArgs) -> Result<Outcome> {
    let mut cfg = load_config(&a.common)?;
    let rng = resolve(&mut cfg, "rng", a.common.rng, 0u64)?;
    let n_seeds = resolve(&mut cfg, "n_seeds", a.n_seeds, 100usize)?;
    let g_min = resolve(&mut cfg, "grid_min", a.grid_min, 0.05)?;
    let v_intra = cfg.params.v_intra;
    let g_max = resolve(&mut cfg, "grid_max", a.grid_max, v_intra)?;
    let g_step = resolve(&mut cfg, "grid_step", a.grid_step, 0.05)?;
    let family = VInterFamily::new(cfg.params.clone(), cfg.rows, cfg.cols);
    let opts = PhaseDiagramOptions {
        n_seeds,
        rng_seed: rng,
        ..PhaseDiagramOptions::default()
    };
    let points = phase_diagram(&family, &grid(g_min, g_max, g_step)?, &opts)?;
    prepare_out(&a.common.out, &cfg)?;
    report::write_phase_csv(std::io::BufWriter::new(create(&a.common.out.join("phase.csv"))?), &points, &cfg)?;
    let mut problems = Vec::new();
    for p in points.iter().filter(|p| p.flagged()) {
        problems.push(format!("V_i = {} (af: {}, af2: {})", p.v_inter, p.af_attractor, p.af2_attractor));
    }
    for (lo, hi) in label_changes(&points) {
        println!("phase change between V_i = {lo} and {hi}");
    }
    if !a.skip_events {
        let ev = locate_transitions(
            &family,
            &EventOptions {
                n_seeds,
                rng_seed: rng,
                ..EventOptions::default()
            },
        )?;
        write_json(&a.common.out.join("events.json"), &report::events_json(&ev, &cfg))?;
        let model = cfg.model()?;
        let mut branches = vec![("AF2", &ev.af2_branch), ("uniform", &ev.uniform_branch)];
        if let Some(nu) = &ev.nonuniform_branch {
            branches.push(("non-uniform", nu));
        }
        report::write_branches_csv(
            std::io::BufWriter::new(create(&a.common.out.join("branches.csv"))?),
            &branches,
            &model.cell,
            &cfg,
        )?;
        for (name, r) in [("hopf", &ev.hopf), ("pitchfork", &ev.pitchfork), ("merge", &ev.merge)] {
            match r {
                Ok(e) => println!("{name:<10} V_i = {:.5} [{:.5}, {:.5}]", e.location, e.lo, e.hi),
                Err(e) => problems.push(format!("{name}: {e}")),
            }
        }
    }
    Ok(if problems.is_empty() {
        Outcome::Complete
    } else {
        Outcome::Incomplete(problems.join("; "))
    })
}

fn attractor_options(cfg: &mut RunConfig, t_transient: Option<f64>, t_limit: Option<f64>) -> Result<AttractorOptions<f64>> {
    let d = AttractorOptions::<f64>::default();
    let t_transient = resolve(cfg, "t_transient", t_transient, d.cycle.t_transient)?;
    let t_limit = resolve(cfg, "t_limit", t_limit, d.t_limit)?;
    Ok(AttractorOptions {
        t_limit,
        cycle: CycleOptions { t_transient, ..d.cycle.clone() },
        ..d
    })
}

fn basins(a: BasinArgs) -> Result<Outcome> {
    let mut cfg = load_config(&a.common)?;
    let rng = resolve(&mut cfg, "rng", a.common.rng, 0u64)?;
    let n = resolve(&mut cfg, "n_samples", a.n_samples, 100usize)?;
    let kind = seed_kind(&mut cfg, a.seed_kind, SeedKind::RandomBloch)?;
    if !kind.is_random() {
        bail!("basin sampling needs a random seed kind, got '{kind}'");
    }
    let opts = attractor_options(&mut cfg, None, a.t_limit)?;
    let model = cfg.model()?;
    let sample = basin_sample(&model, n, rng, kind, &opts)?;
    prepare_out(&a.common.out, &cfg)?;
    write_json(&a.common.out.join("basins.json"), &report::basin_json(&sample, &cfg))?;
    for (label, f) in sample.fractions() {
        println!("{label:<24} {f:.3}");
    }
    Ok(match sample.unclassified() {
        0 => Outcome::Complete,
        k => Outcome::Incomplete(format!("{k} of {n} seeds unclassified")),
    })
}

fn cycle(a: CycleArgs) -> Result<Outcome> {
    let (value, class) = if let Some(path) = &a.input {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let imported = report::read_trajectory_csv(std::io::BufReader::new(file))?;
        let fallback = load_config(&a.common)?;
        let mut cfg = imported.config.unwrap_or(fallback);
        let t_transient = resolve(&mut cfg, "t_transient", a.t_transient, 100.0)?;
        let opts = CycleOptions {
            t_transient,
            ..CycleOptions::default()
        };
        let desc = match analyse_cycle(&imported.traj, &imported.cell, &opts) {
            Ok(d) => d,
            Err(rydsync::Error::TooShort(msg)) => bail!("{}: {msg}", path.display()),
            Err(e) => return Err(e.into()),
        };
        prepare_out(&a.common.out, &cfg)?;
        let source = Provenance::File(path.display().to_string());
        (report::cycle_json(&desc, None, &imported.cell, &source, &cfg), desc.class)
    } else {
        let mut cfg = load_config(&a.common)?;
        let rng = resolve(&mut cfg, "rng", a.common.rng, 0u64)?;
        let kind = seed_kind(&mut cfg, a.seed.seed_kind, SeedKind::Af2Biased)?;
        let stream = resolve(&mut cfg, "stream", a.seed.stream, 0u64)?;
        let opts = attractor_options(&mut cfg, a.t_transient, a.t_limit)?;
        let model = cfg.model()?;
        let seed = seeds::generate(kind, &model, rng, stream)?;
        let rep = classify_attractor(&model, &seed, &opts)?;
        prepare_out(&a.common.out, &cfg)?;
        let source = Provenance::Seed {
            kind: kind.as_str().into(),
            rng_seed: rng,
            stream,
        };
        println!("attractor {}", rep.attractor);
        let class = if rep.attractor.is_classified() {
            rep.descriptor.class
        } else {
            CycleClass::Unclassified
        };
        (report::cycle_json(&rep.descriptor, Some(&rep), &model.cell, &source, &cfg), class)
    };
    write_json(&a.common.out.join("cycle.json"), &value)?;
    println!("class {}", class.as_str());
    if let Some(t) = value["period"].as_f64() {
        println!("period {t:.6}");
    }
    Ok(match class {
        CycleClass::Unclassified => Outcome::Incomplete("cycle unclassified".into()),
        _ => Outcome::Complete,
    })
}
