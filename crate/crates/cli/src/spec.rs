//! Sweep description shared by the bench subcommands, loadable from TOML or
//! from a previous run's `manifest.json`.

use std::path::Path;

use iceberg_core::compiler::{CompileConfig, GadgetSet, Mode};
use iceberg_core::qaoa::{GraphKind, QaoaParams};
use iceberg_core::sim::NoiseModel;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// What a sweep point compiles: the plain logical circuit or one compiler mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Unencoded,
    Encoded(Mode),
}

impl Variant {
    pub fn parse(s: &str) -> Option<Self> {
        if s == "unencoded" {
            return Some(Variant::Unencoded);
        }
        Mode::parse(s).map(Variant::Encoded)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Unencoded => "unencoded",
            Variant::Encoded(m) => m.name(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamSource {
    /// Uniform random angles drawn from the instance seed.
    Random,
    /// Tabulated 3-regular fixed angles (p ≤ 3).
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompilerSpec {
    pub gadget_set: String,
    pub expansion_width: usize,
    pub beam_width: usize,
    pub queue_cap: usize,
}

impl Default for CompilerSpec {
    fn default() -> Self {
        let d = CompileConfig::default();
        CompilerSpec {
            gadget_set: d.gadget_set.name().into(),
            expansion_width: d.expansion_width,
            beam_width: d.beam_width,
            queue_cap: d.queue_cap,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub p2: f64,
    pub p1: f64,
    pub p_idle: f64,
    pub p_meas: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        let d = NoiseModel::default();
        NoiseSpec { p2: d.p2, p1: d.p1, p_idle: d.p_idle, p_meas: d.p_meas }
    }
}

impl NoiseSpec {
    pub fn model(&self, scale: f64) -> NoiseModel {
        NoiseModel { p2: self.p2, p1: self.p1, p_idle: self.p_idle, p_meas: self.p_meas, scale }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub family: String,
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Edge probabilities; only read for Erdős–Rényi instances.
    pub densities: Vec<f64>,
    pub p: Vec<usize>,
    pub syndromes: Vec<usize>,
    pub modes: Vec<String>,
    pub params: ParamSource,
    pub shots: usize,
    pub sim_seed: u64,
    pub lambdas: Vec<f64>,
    /// Energy levels holding this much of the noiseless mass (lowest first) survive truncation.
    pub truncate_quantile: f64,
    pub compiler: CompilerSpec,
    pub noise: NoiseSpec,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            family: "regular3".into(),
            sizes: vec![10],
            seeds: vec![0],
            densities: vec![0.5],
            p: vec![1],
            syndromes: vec![1],
            modes: vec!["baseline".into(), "resynth".into(), "resynth+z2".into()],
            params: ParamSource::Random,
            shots: 1000,
            sim_seed: 42,
            lambdas: vec![0.0, 0.25, 0.5, 1.0],
            truncate_quantile: 0.9,
            compiler: CompilerSpec::default(),
            noise: NoiseSpec::default(),
        }
    }
}

/// One instance of the cartesian product.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub family: GraphKind,
    pub k: usize,
    pub density: Option<f64>,
    pub seed: u64,
    pub p: usize,
    pub syndromes: usize,
    pub variant: Variant,
}

impl SweepSpec {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let spec: SweepSpec = if path.extension().is_some_and(|e| e == "json") {
            // a manifest stores the resolved spec under `spec`
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
            let inner = v.get("spec").cloned().unwrap_or(v);
            serde_json::from_value(inner).map_err(|e| CliError::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn family_kind(&self) -> Result<GraphKind, CliError> {
        match GraphKind::parse(&self.family) {
            Some(GraphKind::Custom) | None => Err(CliError::Config(format!(
                "unknown family `{}`; expected regular3 or erdos-renyi",
                self.family
            ))),
            Some(k) => Ok(k),
        }
    }

    pub fn variants(&self) -> Result<Vec<Variant>, CliError> {
        self.modes
            .iter()
            .map(|m| {
                Variant::parse(m).ok_or_else(|| {
                    let names: Vec<_> = Mode::ALL.iter().map(|m| m.name()).collect();
                    CliError::Config(format!("unknown mode `{m}`; expected unencoded or one of {}", names.join(", ")))
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let kind = self.family_kind()?;
        self.variants()?;
        GadgetSet::parse(&self.compiler.gadget_set)
            .ok_or_else(|| CliError::Config(format!("unknown gadget set `{}`", self.compiler.gadget_set)))?;
        let empty = [
            ("sizes", self.sizes.is_empty()),
            ("seeds", self.seeds.is_empty()),
            ("p", self.p.is_empty()),
            ("syndromes", self.syndromes.is_empty()),
            ("modes", self.modes.is_empty()),
            ("densities", kind == GraphKind::ErdosRenyi && self.densities.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(CliError::Config(format!("`{name}` must not be empty")));
        }
        if !(0.0..=1.0).contains(&self.truncate_quantile) || self.truncate_quantile == 0.0 {
            return Err(CliError::Config("truncate_quantile must lie in (0, 1]".into()));
        }
        for &l in &self.lambdas {
            self.noise.model(l).effective().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Cartesian product in a fixed order: family, k, density, seed, p, s, mode.
    pub fn points(&self) -> Result<Vec<Point>, CliError> {
        let family = self.family_kind()?;
        let densities: Vec<Option<f64>> = match family {
            GraphKind::ErdosRenyi => self.densities.iter().copied().map(Some).collect(),
            _ => vec![None],
        };
        let variants = self.variants()?;
        let mut out = Vec::new();
        for &k in &self.sizes {
            for &density in &densities {
                for &seed in &self.seeds {
                    for &p in &self.p {
                        for &syndromes in &self.syndromes {
                            for &variant in &variants {
                                out.push(Point { family, k, density, seed, p, syndromes, variant });
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn compile_config(&self, point: &Point) -> CompileConfig {
        match point.variant {
            Variant::Encoded(Mode::Baseline) => {
                CompileConfig { num_syndromes: point.syndromes, ..CompileConfig::baseline() }
            }
            Variant::Encoded(m) => CompileConfig {
                num_syndromes: point.syndromes,
                gadget_set: GadgetSet::parse(&self.compiler.gadget_set).unwrap_or(GadgetSet::New),
                expansion_width: self.compiler.expansion_width,
                beam_width: self.compiler.beam_width,
                queue_cap: self.compiler.queue_cap,
                ..CompileConfig::default()
            }
            .with_mode(m),
            Variant::Unencoded => CompileConfig::default(),
        }
    }

    pub fn qaoa_params(&self, p: usize, seed: u64) -> Result<QaoaParams, CliError> {
        match self.params {
            ParamSource::Random => Ok(QaoaParams::random(p, seed)),
            ParamSource::Fixed => QaoaParams::fixed_regular3(p)
                .ok_or_else(|| CliError::Config(format!("no fixed angles tabulated for p = {p}; use params = \"random\""))),
        }
    }
}
