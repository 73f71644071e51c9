//! Sweep drivers: compile-only depth sweeps, sampled QAOA quality and the
//! energy-distribution distance under scaled noise.

use iceberg_core::circuit::{space_time_area, two_qubit_depth, PhysicalCircuit};
use iceberg_core::compiler::compile;
use iceberg_core::par::ExecPolicy;
use iceberg_core::qaoa::{
    approximation_ratio, brute_force_optimum, build_qaoa, cut_value, energy, generate_instance, unencoded_circuit, ProblemGraph,
};
use iceberg_core::sim::{
    energy_distribution, energy_distribution_from_records, postprocess_truncate, sample_shots, simulate_exact, total_variation,
    tv_standard_error, Cutoff, ShotRecord,
};

use crate::report::ReportRow;
use crate::spec::{Point, SweepSpec, Variant};
use crate::CliError;

/// Largest problem the sampled benches accept (`k + 4` simulated qubits).
pub const MAX_SIM_K: usize = 12;

struct Built {
    graph: ProblemGraph,
    circuit: PhysicalCircuit,
    row: ReportRow,
}

fn build(spec: &SweepSpec, pt: &Point, command: &str) -> Result<Built, CliError> {
    let graph = generate_instance(pt.family, pt.k, pt.density, pt.seed)?;
    let logical = build_qaoa(&graph, &spec.qaoa_params(pt.p, pt.seed)?);
    let mut row = ReportRow {
        command: command.into(),
        family: pt.family.name().into(),
        k: pt.k,
        density: pt.density,
        seed: pt.seed,
        p: pt.p,
        syndromes: pt.syndromes,
        mode: pt.variant.name().into(),
        ..Default::default()
    };
    let circuit = match pt.variant {
        Variant::Unencoded => {
            let c = unencoded_circuit(&logical);
            row.two_qubit_gates = Some(c.two_qubit_gate_count());
            row.algorithmic_two_qubit_gates = Some(logical.phase_gate_count());
            row.depth_2q = Some(two_qubit_depth(&c)?);
            row.area = Some(space_time_area(&c, pt.k)?);
            c
        }
        Variant::Encoded(mode) => {
            let cfg = spec.compile_config(pt);
            let out = compile(&logical, mode, &cfg)?;
            let s = &out.stats;
            row.gadget_set = Some(s.gadget_set.name().into());
            row.two_qubit_gates = Some(s.two_qubit_gates);
            row.algorithmic_two_qubit_gates = Some(s.algorithmic_two_qubit_gates);
            row.depth_2q = Some(s.depth_2q);
            row.area = Some(s.area);
            row.compile_time_s = Some(s.wall_time_s);
            if let Some(search) = &s.search {
                row.h_source = Some(search.h_source);
                row.planned_layers = Some(search.planned_layers);
                row.fell_back = Some(search.fell_back_to_baseline);
            }
            out.circuit
        }
    };
    Ok(Built { graph, circuit, row })
}

/// Compiles every sweep point; points run under `policy`, rows come back in
/// sweep order.
pub fn run_depth_sweep(spec: &SweepSpec, policy: ExecPolicy) -> Result<Vec<ReportRow>, CliError> {
    spec.validate()?;
    let points = spec.points()?;
    policy.map_slice(&points, |pt| build(spec, pt, "bench-depth").map(|b| b.row)).into_iter().collect()
}

fn check_sim_size(k: usize) -> Result<(), CliError> {
    if k > MAX_SIM_K {
        return Err(CliError::Config(format!("sampled benches simulate k <= {MAX_SIM_K}, got {k}")));
    }
    Ok(())
}

fn proportion(hits: usize, n: usize) -> (Option<f64>, Option<f64>) {
    if n == 0 {
        return (None, None);
    }
    let p = hits as f64 / n as f64;
    (Some(p), Some((p * (1.0 - p) / n as f64).sqrt()))
}

/// Sample mean and its standard error.
fn mean_se(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (None, None);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

/// Fills the shot-sampled quality metrics from accepted shots.
pub fn quality_metrics(row: &mut ReportRow, records: &[ShotRecord], graph: &ProblemGraph, f_max: i64) {
    let accepted: Vec<u64> = records.iter().filter_map(|r| r.logical).collect();
    row.shots = Some(records.len());
    row.accepted = Some(accepted.len());
    (row.psr, row.psr_se) = proportion(accepted.len(), records.len());
    let ratios: Vec<f64> = accepted.iter().map(|&x| cut_value(graph, x) as f64 / f_max as f64).collect();
    (row.ar, row.ar_se) = mean_se(&ratios);
    let optimal = accepted.iter().filter(|&&x| cut_value(graph, x) == f_max).count();
    (row.success_prob, row.success_se) = proportion(optimal, accepted.len());
}

/// Samples every point at noise scale 1 and reports AR, success probability
/// and post-selection rate over accepted shots.
pub fn run_qaoa_bench(spec: &SweepSpec, policy: ExecPolicy) -> Result<Vec<ReportRow>, CliError> {
    spec.validate()?;
    let noise = spec.noise.model(1.0);
    let mut rows = Vec::new();
    for pt in spec.points()? {
        check_sim_size(pt.k)?;
        let Built { graph, circuit, mut row } = build(spec, &pt, "bench-qaoa")?;
        let f_max = brute_force_optimum(&graph)?;
        let records = sample_shots(&circuit, &noise, spec.shots, spec.sim_seed, policy)?;
        row.lambda = Some(1.0);
        quality_metrics(&mut row, &records, &graph, f_max);
        let logical = build_qaoa(&graph, &spec.qaoa_params(pt.p, pt.seed)?);
        let exact = simulate_exact(&unencoded_circuit(&logical))?;
        row.ar_exact = Some(approximation_ratio(exact, &graph, f_max));
        rows.push(row);
    }
    Ok(rows)
}

/// λ-sweep of the energy-distribution distance to the noiseless QAOA state,
/// raw and after truncating both distributions at the noiseless quantile.
pub fn run_energy_bench(spec: &SweepSpec, policy: ExecPolicy) -> Result<Vec<ReportRow>, CliError> {
    spec.validate()?;
    let mut rows = Vec::new();
    for pt in spec.points()? {
        check_sim_size(pt.k)?;
        let Built { graph, circuit, row } = build(spec, &pt, "bench-energy")?;
        let logical = build_qaoa(&graph, &spec.qaoa_params(pt.p, pt.seed)?);
        let ideal = energy_distribution(simulate_exact(&unencoded_circuit(&logical))?, &graph);
        let kept = postprocess_truncate(&ideal, Cutoff::Quantile(spec.truncate_quantile)).dist;
        let cutoff = *kept.keys().last().expect("truncation keeps at least one level");
        for &lambda in &spec.lambdas {
            let records = sample_shots(&circuit, &spec.noise.model(lambda), spec.shots, spec.sim_seed, policy)?;
            let accepted = records.iter().filter(|r| r.accepted).count();
            let noisy = energy_distribution_from_records(&records, &graph);
            let truncated = postprocess_truncate(&noisy, Cutoff::Energy(cutoff));
            let kept_shots = if truncated.all_removed {
                0
            } else {
                records.iter().filter_map(|r| r.logical).filter(|&x| energy(&graph, x) <= cutoff).count()
            };
            for (post, dist, reference, n) in [("none", &noisy, &ideal, accepted), ("truncate", &truncated.dist, &kept, kept_shots)] {
                let mut r = row.clone();
                r.lambda = Some(lambda);
                r.postprocess = Some(post.into());
                r.shots = Some(records.len());
                r.accepted = Some(n);
                (r.psr, r.psr_se) = proportion(accepted, records.len());
                if n > 0 {
                    r.tv = Some(total_variation(dist, reference));
                    r.tv_se = Some(tv_standard_error(dist, reference, n));
                }
                rows.push(r);
            }
        }
    }
    Ok(rows)
}
