//! Encoded circuits from every compiler path reproduce the plain QAOA state
//! after post-selection and decoding.

use iceberg_core::compiler::{compile_baseline, compile_cooptimized, CompileConfig, GadgetSet, Mode};
use iceberg_core::qaoa::{build_qaoa, generate_instance, GraphKind, LogicalCircuit, LogicalLayer, QaoaParams};
use iceberg_core::sim::{logical_distribution, simulate_exact};
use num_complex::Complex64;

/// Dense QAOA: `exp(-iθ ZZ)` phases and `exp(-iβ X)` mixers on `|+⟩^k`.
fn oracle(logical: &LogicalCircuit) -> Vec<f64> {
    let k = logical.k;
    let dim = 1usize << k;
    let mut psi = vec![Complex64::new((dim as f64).powf(-0.5), 0.0); dim];
    for layer in &logical.layers {
        match layer {
            LogicalLayer::Phase(terms) => {
                for (x, amp) in psi.iter_mut().enumerate() {
                    let phase: f64 = terms
                        .iter()
                        .map(|&(u, v, t)| if (x >> u & 1) == (x >> v & 1) { -t } else { t })
                        .sum();
                    *amp *= Complex64::from_polar(1.0, phase);
                }
            }
            LogicalLayer::Mixer(beta) => {
                let (c, s) = (beta.cos(), beta.sin());
                for q in 0..k {
                    for x in 0..dim {
                        if x >> q & 1 == 0 {
                            let (a, b) = (psi[x], psi[x | 1 << q]);
                            psi[x] = a * c - Complex64::i() * s * b;
                            psi[x | 1 << q] = b * c - Complex64::i() * s * a;
                        }
                    }
                }
            }
        }
    }
    psi.iter().map(|a| a.norm_sqr()).collect()
}

fn check(logical: &LogicalCircuit, circuit: &iceberg_core::circuit::PhysicalCircuit, label: &str) {
    let exact = simulate_exact(circuit).unwrap();
    let (dist, acceptance) = logical_distribution(circuit, &exact);
    assert!((acceptance - 1.0).abs() < 1e-9, "{label}: acceptance {acceptance}");
    let want = oracle(logical);
    let tv: f64 = want.iter().enumerate().map(|(x, p)| (p - dist.get(&(x as u64)).copied().unwrap_or(0.0)).abs()).sum::<f64>() / 2.0;
    assert!(tv <= 1e-6, "{label}: tv {tv}");
}

#[test]
fn all_compiler_paths_preserve_the_logical_state() {
    for (k, s) in [(4, 0), (6, 1)] {
        for p in [1, 2] {
            let graph = generate_instance(GraphKind::ErdosRenyi, k, Some(0.6), 7 + p as u64).unwrap();
            let logical = build_qaoa(&graph, &QaoaParams::random(p, 11 * p as u64 + k as u64));
            for set in [GadgetSet::Old, GadgetSet::New] {
                let cfg = CompileConfig { num_syndromes: s, gadget_set: set, ..Default::default() };
                check(&logical, &compile_baseline(&logical, &cfg).unwrap().circuit, "baseline");
                for mode in [Mode::Search, Mode::Resynth, Mode::Z2, Mode::ResynthZ2] {
                    let r = compile_cooptimized(&logical, &cfg.clone().with_mode(mode)).unwrap();
                    check(&logical, &r.circuit, &format!("k={k} p={p} {set:?} {mode}"));
                }
            }
        }
    }
}
