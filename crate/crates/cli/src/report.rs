//! Report rows, CSV input/output and plot-ready summaries.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// One schema for every subcommand; metrics that a subcommand does not
/// produce stay empty. Standard-error columns are filled exactly for the
/// shot-sampled metrics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub command: String,
    pub family: String,
    pub k: usize,
    pub density: Option<f64>,
    pub seed: u64,
    pub p: usize,
    pub syndromes: usize,
    pub mode: String,
    pub gadget_set: Option<String>,
    pub lambda: Option<f64>,
    pub postprocess: Option<String>,
    pub two_qubit_gates: Option<usize>,
    pub algorithmic_two_qubit_gates: Option<usize>,
    pub depth_2q: Option<usize>,
    pub area: Option<usize>,
    pub h_source: Option<usize>,
    pub planned_layers: Option<usize>,
    pub fell_back: Option<bool>,
    pub compile_time_s: Option<f64>,
    pub shots: Option<usize>,
    pub accepted: Option<usize>,
    pub psr: Option<f64>,
    pub psr_se: Option<f64>,
    pub ar: Option<f64>,
    pub ar_se: Option<f64>,
    /// Noiseless approximation ratio of the unencoded circuit, computed exactly.
    pub ar_exact: Option<f64>,
    pub success_prob: Option<f64>,
    pub success_se: Option<f64>,
    pub tv: Option<f64>,
    pub tv_se: Option<f64>,
}

pub fn write_rows(path: &Path, rows: &[ReportRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_rows(path: &Path) -> Result<Vec<ReportRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e))?;
    r.deserialize().collect::<Result<Vec<ReportRow>, _>>().map_err(|e| CliError::csv(path, e))
}

/// Per-(family, k, density, p, s, mode) depth statistics over seeds, with
/// the mean reduction against the baseline of the same seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DepthSummary {
    pub family: String,
    pub k: usize,
    pub density: Option<f64>,
    pub p: usize,
    pub syndromes: usize,
    pub mode: String,
    pub instances: usize,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
    pub mean_reduction: Option<f64>,
}

type GroupKey = (String, usize, Option<u64>, usize, usize);

fn group_key(r: &ReportRow) -> GroupKey {
    (r.family.clone(), r.k, r.density.map(f64::to_bits), r.p, r.syndromes)
}

pub fn depth_summary(rows: &[ReportRow]) -> Vec<DepthSummary> {
    let mut baseline: BTreeMap<(GroupKey, u64), usize> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.mode == "baseline") {
        if let Some(d) = r.depth_2q {
            baseline.insert((group_key(r), r.seed), d);
        }
    }
    let mut groups: BTreeMap<(GroupKey, String), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.depth_2q.is_some()) {
        groups.entry((group_key(r), r.mode.clone())).or_default().push(r);
    }
    let mut out: Vec<DepthSummary> = groups
        .into_iter()
        .map(|((key, mode), rs)| {
            let depths: Vec<usize> = rs.iter().map(|r| r.depth_2q.unwrap()).collect();
            let reductions: Vec<f64> = rs
                .iter()
                .filter_map(|r| baseline.get(&(key.clone(), r.seed)).map(|&b| 1.0 - r.depth_2q.unwrap() as f64 / b as f64))
                .collect();
            DepthSummary {
                family: key.0,
                k: key.1,
                density: key.2.map(f64::from_bits),
                p: key.3,
                syndromes: key.4,
                mode,
                instances: depths.len(),
                mean: depths.iter().sum::<usize>() as f64 / depths.len() as f64,
                min: *depths.iter().min().unwrap(),
                max: *depths.iter().max().unwrap(),
                mean_reduction: (reductions.len() == depths.len())
                    .then(|| reductions.iter().sum::<f64>() / reductions.len() as f64),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.family, a.k, a.density.unwrap_or(0.0).to_bits(), a.p, a.syndromes, &a.mode).cmp(&(
            &b.family,
            b.k,
            b.density.unwrap_or(0.0).to_bits(),
            b.p,
            b.syndromes,
            &b.mode,
        ))
    });
    out
}

/// Figures the plot-data emitter knows about.
pub const FIGURES: [&str; 5] = ["depth-k", "depth-density", "ar-p", "ar-syndromes", "energy-tv"];

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("nan".into(), |v| format!("{v:.6}"))
}

/// Mean of sampled metrics over seeds; the standard error of the mean of
/// independent estimates is `sqrt(Σ se²) / n`.
fn pooled(rs: &[&ReportRow], val: fn(&ReportRow) -> Option<f64>, se: fn(&ReportRow) -> Option<f64>) -> (Option<f64>, Option<f64>) {
    let vals: Vec<f64> = rs.iter().filter_map(|r| val(r)).collect();
    if vals.is_empty() {
        return (None, None);
    }
    let n = vals.len() as f64;
    let ses: Vec<f64> = rs.iter().filter_map(|r| se(r)).collect();
    let se = (ses.len() == vals.len()).then(|| ses.iter().map(|s| s * s).sum::<f64>().sqrt() / n);
    (Some(vals.iter().sum::<f64>() / n), se)
}

/// Whitespace-separated, `#`-headed table for one figure.
pub fn plotdata(rows: &[ReportRow], figure: &str) -> Result<String, CliError> {
    if rows.is_empty() {
        return Err(CliError::Report("no rows to summarize".into()));
    }
    let mut out = String::new();
    match figure {
        "depth-k" | "depth-density" => {
            let by_density = figure == "depth-density";
            out += if by_density { "# density mode mean min max mean_reduction\n" } else { "# k mode mean min max mean_reduction\n" };
            for s in depth_summary(rows) {
                let x = if by_density { fmt_opt(s.density) } else { s.k.to_string() };
                out += &format!("{x} {} {:.3} {} {} {}\n", s.mode, s.mean, s.min, s.max, fmt_opt(s.mean_reduction));
            }
        }
        "ar-p" | "ar-syndromes" => {
            out += if figure == "ar-p" { "# p syndromes" } else { "# syndromes p" };
            out += " mode ar ar_se success_prob success_se psr psr_se\n";
            let mut groups: BTreeMap<(usize, usize, String), Vec<&ReportRow>> = BTreeMap::new();
            for r in rows.iter().filter(|r| r.ar.is_some()) {
                let key = if figure == "ar-p" { (r.p, r.syndromes) } else { (r.syndromes, r.p) };
                groups.entry((key.0, key.1, r.mode.clone())).or_default().push(r);
            }
            for ((a, b, mode), rs) in groups {
                let (ar, ar_se) = pooled(&rs, |r| r.ar, |r| r.ar_se);
                let (sp, sp_se) = pooled(&rs, |r| r.success_prob, |r| r.success_se);
                let (psr, psr_se) = pooled(&rs, |r| r.psr, |r| r.psr_se);
                out += &format!(
                    "{a} {b} {mode} {} {} {} {} {} {}\n",
                    fmt_opt(ar),
                    fmt_opt(ar_se),
                    fmt_opt(sp),
                    fmt_opt(sp_se),
                    fmt_opt(psr),
                    fmt_opt(psr_se)
                );
            }
        }
        "energy-tv" => {
            out += "# lambda mode postprocess tv tv_se\n";
            let mut groups: BTreeMap<(u64, String, String), Vec<&ReportRow>> = BTreeMap::new();
            for r in rows.iter().filter(|r| r.tv.is_some()) {
                let key = (r.lambda.unwrap_or(1.0).to_bits(), r.mode.clone(), r.postprocess.clone().unwrap_or_default());
                groups.entry(key).or_default().push(r);
            }
            for ((l, mode, post), rs) in groups {
                let (tv, se) = pooled(&rs, |r| r.tv, |r| r.tv_se);
                out += &format!("{} {mode} {post} {} {}\n", f64::from_bits(l), fmt_opt(tv), fmt_opt(se));
            }
        }
        other => {
            return Err(CliError::Report(format!("unknown figure `{other}`; valid ids: {}", FIGURES.join(", "))));
        }
    }
    if out.lines().count() == 1 {
        return Err(CliError::Report(format!("no rows carry the metrics figure `{figure}` needs")));
    }
    Ok(out)
}

pub fn write_plotdata(rows: &[ReportRow], figure: &str, dir: &Path) -> Result<PathBuf, CliError> {
    let text = plotdata(rows, figure)?;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(format!("{figure}.dat"));
    let mut f = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mode: &str, seed: u64, depth: usize) -> ReportRow {
        ReportRow { command: "bench-depth".into(), family: "REGULAR_3".into(), k: 10, seed, p: 1, syndromes: 1, mode: mode.into(), depth_2q: Some(depth), ..Default::default() }
    }

    #[test]
    fn depth_summary_pairs_seeds_with_the_baseline() {
        let rows = vec![row("baseline", 0, 100), row("baseline", 1, 200), row("resynth+z2", 0, 50), row("resynth+z2", 1, 150)];
        let s = depth_summary(&rows);
        assert_eq!(s.len(), 2);
        let z = s.iter().find(|s| s.mode == "resynth+z2").unwrap();
        assert_eq!((z.min, z.max, z.mean), (50, 150, 100.0));
        assert!((z.mean_reduction.unwrap() - 0.375).abs() < 1e-12);
        let text = plotdata(&rows, "depth-k").unwrap();
        assert!(text.starts_with("# k mode mean min max"));
        assert!(text.contains("10 resynth+z2 100.000 50 150 0.375000"));
    }

    #[test]
    fn plotdata_errors() {
        assert!(plotdata(&[], "depth-k").is_err());
        let err = plotdata(&[row("baseline", 0, 1)], "fig9").unwrap_err().to_string();
        assert!(err.contains("depth-k") && err.contains("energy-tv"));
        assert!(plotdata(&[row("baseline", 0, 1)], "energy-tv").is_err());
    }

    #[test]
    fn csv_round_trip_keeps_empty_fields_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        let mut r = row("baseline", 3, 7);
        r.psr = Some(0.5);
        r.psr_se = Some(0.01);
        write_rows(&path, std::slice::from_ref(&r)).unwrap();
        assert_eq!(read_rows(&path).unwrap(), vec![r]);
    }
}
