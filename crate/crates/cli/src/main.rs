use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iceberg_bench::bench::{quality_metrics, run_depth_sweep, run_energy_bench, run_qaoa_bench};
use iceberg_bench::manifest::Manifest;
use iceberg_bench::report::{depth_summary, read_rows, write_plotdata, write_rows, ReportRow, FIGURES};
use iceberg_bench::spec::{ParamSource, SweepSpec};
use iceberg_bench::CliError;
use iceberg_core::circuit::{read_circuit, write_circuit};
use iceberg_core::compiler::{compile, CompileConfig, GadgetSet, Mode};
use iceberg_core::ft::{check_circuit_faults, check_gadget_ft, classify_rotation_faults, FtSummary};
use iceberg_core::gadgets::{GadgetKind, IcebergLayout};
use iceberg_core::par::ExecPolicy;
use iceberg_core::qaoa::{brute_force_optimum, build_qaoa, generate_instance, GraphKind, ProblemGraph, QaoaParams};
use iceberg_core::sim::{sample_shots, NoiseModel};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde_json::json;

#[derive(Parser)]
#[command(name = "iceberg", version, about = "Iceberg-encoded QAOA: compile, verify, simulate and benchmark")]
struct Cli {
    /// Directory for CSV, plot data, circuits and the run manifest.
    #[arg(long, global = true, env = "ICEBERG_OUT_DIR", default_value = "iceberg-out")]
    out_dir: PathBuf,
    /// Run sweep points, shots and fault locations on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a MaxCut instance and, optionally, QAOA angles.
    Gen(GenArgs),
    /// Compile a graph and angles into an encoded circuit.
    Compile(CompileArgs),
    /// Exhaustive single-fault check of gadgets or a compiled circuit.
    VerifyFt(VerifyArgs),
    /// Sample a compiled circuit under the synthetic noise model.
    Simulate(SimulateArgs),
    /// Compile-only depth sweep.
    BenchDepth(SweepArgs),
    /// Sampled AR, success probability and post-selection rate.
    BenchQaoa(SweepArgs),
    /// Energy-distribution distance under scaled noise.
    BenchEnergy(SweepArgs),
    /// Turn a report CSV into plot-ready tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "regular3")]
    family: String,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Edge probability for Erdős–Rényi graphs.
    #[arg(long)]
    density: Option<f64>,
    /// Also write angles for this many QAOA layers.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, value_enum, default_value = "random")]
    params: ParamArg,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ParamArg {
    Random,
    Fixed,
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value = "resynth+z2")]
    mode: String,
    #[arg(long, default_value_t = 1)]
    syndromes: usize,
    /// Gadget set for the search modes; the baseline always uses `old`.
    #[arg(long, default_value = "new")]
    gadget_set: String,
    #[arg(long)]
    beam_width: Option<usize>,
    #[arg(long)]
    expansion_width: Option<usize>,
    #[arg(long)]
    queue_cap: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Check a compiled circuit instead of standalone gadgets.
    #[arg(long)]
    circuit: Option<PathBuf>,
    /// Gadget kinds to check (default: all that the layout supports).
    #[arg(long, value_delimiter = ',')]
    gadgets: Vec<String>,
    #[arg(long, default_value_t = 6)]
    k: usize,
    /// Random data-qubit orders per gadget, the default order included.
    #[arg(long, default_value_t = 20)]
    perms: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Branch cap per fault location for rotations in compiled circuits.
    #[arg(long, default_value_t = 64)]
    max_branches: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    shots: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// `key: value` noise file; defaults to the synthetic model.
    #[arg(long)]
    noise: Option<PathBuf>,
    /// Global noise scale.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML sweep spec, or a previous run's manifest.json.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Comma list or half-open range such as `0..10`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Seeds>,
    #[arg(long, value_delimiter = ',')]
    densities: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    syndromes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<String>>,
    #[arg(long, value_enum)]
    params: Option<ParamArg>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
}

#[derive(Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad range start `{a}`"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad range end `{b}`"))?;
        return Ok(Seeds((a..b).collect()));
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| format!("bad seed `{x}`"))).collect::<Result<_, _>>().map(Seeds)
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
    /// Figure id, or `all` for every figure the rows support.
    #[arg(long)]
    figure: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let policy = if cli.sequential { ExecPolicy::Sequential } else { ExecPolicy::default() };
    let policy_name = if policy.is_parallel() { "parallel" } else { "sequential" };
    let out = cli.out_dir.as_path();
    let mut code = ExitCode::SUCCESS;
    let manifest = match cli.cmd {
        Cmd::Gen(a) => gen(a, out, policy_name)?,
        Cmd::Compile(a) => compile_cmd(a, out, policy_name)?,
        Cmd::VerifyFt(a) => {
            let (m, ok) = verify(a, policy, policy_name)?;
            if !ok {
                code = ExitCode::FAILURE;
            }
            m
        }
        Cmd::Simulate(a) => simulate(a, out, policy, policy_name)?,
        Cmd::BenchDepth(a) => sweep("bench-depth", a, out, policy, policy_name)?,
        Cmd::BenchQaoa(a) => sweep("bench-qaoa", a, out, policy, policy_name)?,
        Cmd::BenchEnergy(a) => sweep("bench-energy", a, out, policy, policy_name)?,
        Cmd::Report(a) => report(a, out, policy_name)?,
    };
    let path = manifest.write(out)?;
    eprintln!("manifest: {}", path.display());
    Ok(code)
}

fn gen(a: GenArgs, out: &Path, policy: &str) -> Result<Manifest, CliError> {
    let kind = GraphKind::parse(&a.family).ok_or_else(|| CliError::Config(format!("unknown family `{}`", a.family)))?;
    let graph = generate_instance(kind, a.k, a.density, a.seed)?;
    let mut m = Manifest::new("gen", policy);
    m.settings = json!({"family": kind.name(), "k": a.k, "seed": a.seed, "density": a.density, "p": a.p});
    m.outputs.push(write(&out.join("graph.txt"), &graph.to_text())?);
    if let Some(p) = a.p {
        let params = match a.params {
            ParamArg::Random => QaoaParams::random(p, a.seed),
            ParamArg::Fixed => QaoaParams::fixed_regular3(p)
                .ok_or_else(|| CliError::Config(format!("no fixed angles tabulated for p = {p}")))?,
        };
        m.outputs.push(write(&out.join("params.txt"), &params.to_text())?);
    }
    println!("k={} edges={}", graph.k, graph.edges.len());
    Ok(m)
}

fn compile_cmd(a: CompileArgs, out: &Path, policy: &str) -> Result<Manifest, CliError> {
    let graph = ProblemGraph::from_text(&read(&a.graph)?)?;
    let params = QaoaParams::from_text(&read(&a.params)?)?;
    let mode = Mode::parse(&a.mode).ok_or_else(|| CliError::Config(format!("unknown mode `{}`", a.mode)))?;
    let set = GadgetSet::parse(&a.gadget_set).ok_or_else(|| CliError::Config(format!("unknown gadget set `{}`", a.gadget_set)))?;
    let d = CompileConfig::default();
    let cfg = if mode == Mode::Baseline {
        CompileConfig { num_syndromes: a.syndromes, ..CompileConfig::baseline() }
    } else {
        CompileConfig {
            num_syndromes: a.syndromes,
            gadget_set: set,
            beam_width: a.beam_width.unwrap_or(d.beam_width),
            expansion_width: a.expansion_width.unwrap_or(d.expansion_width),
            queue_cap: a.queue_cap.unwrap_or(d.queue_cap),
            ..d
        }
    };
    let res = compile(&build_qaoa(&graph, &params), mode, &cfg)?;
    let s = &res.stats;
    println!(
        "mode={} gadgets={} 2q_gates={} algorithmic={} depth_2q={} area={} time={:.3}s",
        mode,
        s.gadget_set.name(),
        s.two_qubit_gates,
        s.algorithmic_two_qubit_gates,
        s.depth_2q,
        s.area,
        s.wall_time_s
    );
    let row = ReportRow {
        command: "compile".into(),
        family: graph.kind.name().into(),
        k: graph.k,
        p: params.p(),
        syndromes: a.syndromes,
        mode: mode.name().into(),
        gadget_set: Some(s.gadget_set.name().into()),
        two_qubit_gates: Some(s.two_qubit_gates),
        algorithmic_two_qubit_gates: Some(s.algorithmic_two_qubit_gates),
        depth_2q: Some(s.depth_2q),
        area: Some(s.area),
        h_source: s.search.as_ref().map(|x| x.h_source),
        planned_layers: s.search.as_ref().map(|x| x.planned_layers),
        fell_back: s.search.as_ref().map(|x| x.fell_back_to_baseline),
        compile_time_s: Some(s.wall_time_s),
        ..Default::default()
    };
    let mut m = Manifest::new("compile", policy);
    m.settings = json!({
        "graph": a.graph, "params": a.params, "mode": mode.name(), "syndromes": a.syndromes,
        "gadget_set": s.gadget_set.name(), "beam_width": cfg.beam_width,
        "expansion_width": cfg.expansion_width, "queue_cap": cfg.queue_cap,
    });
    m.outputs.push(write(&out.join("circuit.txt"), &write_circuit(&res.circuit))?);
    let csv = out.join("compile.csv");
    write_rows(&csv, &[row])?;
    m.outputs.push(csv);
    Ok(m)
}

fn print_summary(label: &str, s: &FtSummary) {
    println!(
        "{label}: locations={} branches={} detected={} stabilizer={} logical_errors={} unresolved={} -> {}",
        s.locations,
        s.branches,
        s.detected,
        s.stabilizer_equivalent,
        s.logical_errors,
        s.unresolved,
        if s.is_fault_tolerant() { "FT" } else { "NOT FT" }
    );
}

fn verify(a: VerifyArgs, policy: ExecPolicy, name: &str) -> Result<(Manifest, bool), CliError> {
    let mut m = Manifest::new("verify-ft", name);
    let mut ok = true;
    if let Some(path) = &a.circuit {
        let c = read_circuit(&read(path)?)?;
        let s = check_circuit_faults(&c, a.max_branches, policy)?;
        print_summary(&path.display().to_string(), &s);
        ok = s.logical_errors == 0 && s.unresolved == 0;
        m.settings = json!({"circuit": path, "max_branches": a.max_branches});
        return Ok((m, ok));
    }
    let layout = IcebergLayout::new(a.k)?;
    let kinds: Vec<GadgetKind> = if a.gadgets.is_empty() {
        GadgetKind::ALL.into_iter().filter(|k| *k != GadgetKind::SyndromeNew || layout.supports_new_syndrome()).collect()
    } else {
        a.gadgets
            .iter()
            .map(|g| GadgetKind::parse(g).ok_or_else(|| CliError::Config(format!("unknown gadget `{g}`"))))
            .collect::<Result<_, _>>()?
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
    let mut orders = vec![layout.default_order()];
    while orders.len() < a.perms.max(1) {
        let mut o = layout.default_order();
        o.shuffle(&mut rng);
        orders.push(o);
    }
    for kind in &kinds {
        let mut total = FtSummary::default();
        for order in &orders {
            let s = check_gadget_ft(&kind.build(layout, order)?, policy)?;
            total.locations += s.locations;
            total.branches += s.branches;
            total.detected += s.detected;
            total.stabilizer_equivalent += s.stabilizer_equivalent;
            total.logical_errors += s.logical_errors;
            total.unresolved += s.unresolved;
        }
        print_summary(&format!("{} x{} orders", kind.name(), orders.len()), &total);
        ok &= total.is_fault_tolerant();
    }
    for bottom in [false, true] {
        let part = classify_rotation_faults(&layout, 1, bottom);
        println!("rotation anchored on {}: undetectable {:?}", if bottom { "b" } else { "t" }, part.undetectable);
    }
    m.settings = json!({"k": a.k, "perms": orders.len(), "seed": a.seed,
        "gadgets": kinds.iter().map(|k| k.name()).collect::<Vec<_>>()});
    Ok((m, ok))
}

fn simulate(a: SimulateArgs, out: &Path, policy: ExecPolicy, name: &str) -> Result<Manifest, CliError> {
    let c = read_circuit(&read(&a.circuit)?)?;
    let graph = ProblemGraph::from_text(&read(&a.graph)?)?;
    let mut noise = match &a.noise {
        Some(p) => NoiseModel::from_text(&read(p)?)?,
        None => NoiseModel::default(),
    };
    if let Some(l) = a.lambda {
        noise = noise.scaled(l);
    }
    let records = sample_shots(&c, &noise, a.shots, a.seed, policy)?;
    let f_max = brute_force_optimum(&graph)?;
    let mut row = ReportRow {
        command: "simulate".into(),
        family: graph.kind.name().into(),
        k: graph.k,
        mode: a.circuit.display().to_string(),
        lambda: Some(noise.scale),
        ..Default::default()
    };
    quality_metrics(&mut row, &records, &graph, f_max);
    let f = |x: Option<f64>| x.map_or("n/a".into(), |v| format!("{v:.4}"));
    println!(
        "shots={} accepted={} psr={} ± {} AR={} ± {} success={} ± {}",
        a.shots,
        row.accepted.unwrap_or(0),
        f(row.psr),
        f(row.psr_se),
        f(row.ar),
        f(row.ar_se),
        f(row.success_prob),
        f(row.success_se)
    );
    let mut m = Manifest::new("simulate", name);
    m.settings = json!({"circuit": a.circuit, "graph": a.graph, "shots": a.shots, "seed": a.seed,
        "noise": noise.to_text()});
    let csv = out.join("simulate.csv");
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_rows(&csv, &[row])?;
    m.outputs.push(csv);
    Ok(m)
}

fn resolve_spec(a: SweepArgs) -> Result<SweepSpec, CliError> {
    let mut spec = match &a.config {
        Some(p) => SweepSpec::from_path(p)?,
        None => SweepSpec::default(),
    };
    if let Some(x) = a.family {
        spec.family = x;
    }
    if let Some(x) = a.sizes {
        spec.sizes = x;
    }
    if let Some(Seeds(x)) = a.seeds {
        spec.seeds = x;
    }
    if let Some(x) = a.densities {
        spec.densities = x;
    }
    if let Some(x) = a.p {
        spec.p = x;
    }
    if let Some(x) = a.syndromes {
        spec.syndromes = x;
    }
    if let Some(x) = a.modes {
        spec.modes = x;
    }
    if let Some(x) = a.params {
        spec.params = match x {
            ParamArg::Random => ParamSource::Random,
            ParamArg::Fixed => ParamSource::Fixed,
        };
    }
    if let Some(x) = a.shots {
        spec.shots = x;
    }
    if let Some(x) = a.lambdas {
        spec.lambdas = x;
    }
    spec.validate()?;
    Ok(spec)
}

fn sweep(command: &str, a: SweepArgs, out: &Path, policy: ExecPolicy, name: &str) -> Result<Manifest, CliError> {
    let spec = resolve_spec(a)?;
    let rows = match command {
        "bench-depth" => run_depth_sweep(&spec, policy)?,
        "bench-qaoa" => run_qaoa_bench(&spec, policy)?,
        _ => run_energy_bench(&spec, policy)?,
    };
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut m = Manifest::new(command, name);
    let csv = out.join(format!("{command}.csv"));
    write_rows(&csv, &rows)?;
    m.outputs.push(csv);
    if command == "bench-depth" {
        let path = out.join("bench-depth-summary.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::csv(&path, e))?;
        for s in depth_summary(&rows) {
            if let Some(r) = s.mean_reduction {
                println!("{} k={} density={:?} {}: mean depth {:.1}, reduction {:.1}%", s.family, s.k, s.density, s.mode, s.mean, 100.0 * r);
            }
            w.serialize(&s).map_err(|e| CliError::csv(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        m.outputs.push(path);
    } else {
        println!("{} rows", rows.len());
    }
    m.spec = Some(spec);
    Ok(m)
}

fn report(a: ReportArgs, out: &Path, name: &str) -> Result<Manifest, CliError> {
    let rows = read_rows(&a.input)?;
    let mut m = Manifest::new("report", name);
    m.settings = json!({"input": a.input, "figure": a.figure});
    if a.figure == "all" {
        for fig in FIGURES {
            if let Ok(p) = write_plotdata(&rows, fig, out) {
                m.outputs.push(p);
            }
        }
        if m.outputs.is_empty() {
            return Err(CliError::Report("no figure applies to these rows".into()));
        }
    } else {
        m.outputs.push(write_plotdata(&rows, &a.figure, out)?);
    }
    for p in &m.outputs {
        println!("{}", p.display());
    }
    Ok(m)
}
