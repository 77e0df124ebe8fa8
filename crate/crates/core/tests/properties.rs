// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use std::collections::BTreeMap;

use common::exact_tables;
use concept_subspace::causal::{theorem1_check, DoFactorization};
use concept_subspace::counterfactual::{
    build_counterfactual, check_decomposition, compute_metrics, mi_q, mi_q_conditional, RepView,
};
use concept_subspace::distribution::{
    build_unigram_exact, conditional_mi, entropy, mutual_information, JointDist,
};
use concept_subspace::geometry::subspace_angle;
use concept_subspace::io::{RepRecord, RepRecordFile};
use concept_subspace::lm::{
    build_causal_toy, sample_corpus, CausalToyConfig, CausalToyLm, PriorKind, SamplerConfig, DEFAULT_ENUMERATION_BUDGET,
};
use concept_subspace::{ConceptSet, Projector, Rep, Vocab};
use proptest::prelude::*;

fn joint2(cells: &[(usize, usize, f64)]) -> JointDist<2> {
    let mut j = JointDist::new(["x", "y"]);
    for &(x, y, p) in cells {
        j.add([x, y], p);
    }
    j
}

fn cells2() -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    prop::collection::vec((0..4usize, 0..5usize, 0.01..1.0f64), 1..20)
}

fn toy_config() -> impl Strategy<Value = CausalToyConfig> {
    (2..6usize, 2..4usize, 2..4usize, 1..6usize, any::<bool>(), 0..1000u64).prop_map(
        |(dim, k, lemmas, contexts, uniform, seed)| CausalToyConfig {
            dim,
            n_concepts: k.min(dim),
            n_lemmas: lemmas,
            n_contexts: contexts,
            max_len: 2,
            prior: if uniform { PriorKind::Uniform } else { PriorKind::Random },
            seed,
        },
    )
}

fn toy(cfg: &CausalToyConfig) -> CausalToyLm {
    build_causal_toy(cfg).unwrap()
}

fn random_projector(d: usize, dirs: &[Vec<f64>]) -> Projector {
    let dirs: Vec<Vec<f64>> = dirs.iter().map(|v| v[..d].to_vec()).collect();
    Projector::removing_span(d, &dirs).unwrap()
}

fn directions() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 8), 0..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mi_is_nonnegative_symmetric_and_bounded(cells in cells2()) {
        let j = joint2(&cells);
        let mi = mutual_information(&j);
        let swapped = joint2(&cells.iter().map(|&(x, y, p)| (y, x, p)).collect::<Vec<_>>());
        prop_assert!(mi >= 0.0);
        prop_assert!((mi - mutual_information(&swapped)).abs() < 1e-12);
        let total = j.total();
        let hx = entropy(j.marginal(0).values().map(|m| m / total));
        let hy = entropy(j.marginal(1).values().map(|m| m / total));
        prop_assert!(mi <= hx.min(hy) + 1e-12);
    }

    #[test]
    fn mi_ignores_label_names(cells in cells2(), shift in 1..50usize) {
        let renamed = joint2(&cells.iter().map(|&(x, y, p)| ((x * 7 + shift) % 31, 40 - y, p)).collect::<Vec<_>>());
        prop_assert!((mutual_information(&joint2(&cells)) - mutual_information(&renamed)).abs() < 1e-12);
    }

    #[test]
    fn mi_ignores_overall_scale(cells in cells2(), scale in 0.01..100.0f64) {
        let scaled = joint2(&cells.iter().map(|&(x, y, p)| (x, y, p * scale)).collect::<Vec<_>>());
        prop_assert!((mutual_information(&joint2(&cells)) - mutual_information(&scaled)).abs() < 1e-10);
    }

    #[test]
    fn conditional_mi_matches_definition(cells in prop::collection::vec((0..3usize, 0..3usize, 0..3usize, 0.01..1.0f64), 1..25)) {
        let mut j = JointDist::new(["x", "y", "z"]);
        let mut dense = [[[0.0f64; 3]; 3]; 3];
        for &(x, y, z, p) in &cells {
            j.add([x, y, z], p);
            dense[x][y][z] += p;
        }
        let t: f64 = cells.iter().map(|c| c.3).sum();
        // Σ p(x,y,z) log p(z) p(x,y,z) / (p(x,z) p(y,z))
        let mut oracle = 0.0;
        for x in 0..3 {
            for y in 0..3 {
                for z in 0..3 {
                    let pxyz = dense[x][y][z] / t;
                    if pxyz == 0.0 {
                        continue;
                    }
                    let pz: f64 = (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).map(|(a, b)| dense[a][b][z]).sum::<f64>() / t;
                    let pxz: f64 = (0..3).map(|b| dense[x][b][z]).sum::<f64>() / t;
                    let pyz: f64 = (0..3).map(|a| dense[a][y][z]).sum::<f64>() / t;
                    oracle += pxyz * (pz * pxyz / (pxz * pyz)).log2();
                }
            }
        }
        let cmi = conditional_mi(&j);
        prop_assert!(cmi >= 0.0);
        prop_assert!((cmi - oracle.max(0.0)).abs() < 1e-10);
    }

    #[test]
    fn projector_invariants(dirs in directions(), d in 1..8usize, h in prop::collection::vec(-5.0..5.0f64, 8)) {
        let p = random_projector(d, &dirs);
        let m = p.matrix();
        prop_assert!((m - m.transpose()).amax() <= 1e-10);
        prop_assert!((m * m - m).amax() <= 1e-10);
        prop_assert!((m.trace() - (d - p.rank_removed()) as f64).abs() <= 1e-9);
        prop_assert!(p.rank_removed() <= dirs.len().min(d));
        let h = Rep::new(h[..d].to_vec()).unwrap();
        let (perp, par) = p.split(&h).unwrap();
        for i in 0..d {
            prop_assert!((perp.as_slice()[i] + par.as_slice()[i] - h.as_slice()[i]).abs() <= 1e-12);
        }
        prop_assert!(perp.dot(par.as_slice()).abs() <= 1e-9 * (1.0 + h.norm_sq()));
        prop_assert!(subspace_angle(&p, &p).unwrap() <= 1e-6);
    }

    #[test]
    fn record_files_round_trip(
        dim in 1..6usize,
        rows in prop::collection::vec((0..4usize, 0..3usize, prop::collection::vec(-1e6..1e6f32, 6)), 0..40),
    ) {
        let file = RepRecordFile {
            dim,
            vocab: Vocab::new(["a", "b", "c"], "<eos>").unwrap(),
            concepts: ConceptSet::new(["n/a", "x", "y"], 0).unwrap(),
            records: rows.into_iter().map(|(word, concept, v)| RepRecord { word, concept, rep: v[..dim].to_vec() }).collect(),
        };
        prop_assert_eq!(RepRecordFile::from_bytes(&file.to_bytes().unwrap()).unwrap(), file);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn counterfactual_table_is_a_product(cfg in toy_config(), dirs in directions()) {
        let lm = toy(&cfg);
        let p = random_projector(cfg.dim, &dirs);
        let full = build_unigram_exact(&lm, lm.annotator(), DEFAULT_ENUMERATION_BUDGET).unwrap();
        prop_assert!((full.total() - 1.0).abs() <= 1e-9);
        let q = build_counterfactual(&full, &lm, lm.annotator(), &p).unwrap();
        prop_assert!((q.total() + q.dropped_pair_mass() - 1.0).abs() <= 1e-9);
        prop_assert!(mutual_information(&q.par_perp_joint()) <= 1e-9);
    }

    #[test]
    fn data_processing_and_decomposition(cfg in toy_config(), dirs in directions()) {
        let lm = toy(&cfg);
        let p = random_projector(cfg.dim, &dirs);
        let (table, q) = exact_tables(&lm, lm.annotator(), &p);
        let full = mi_q(&q, RepView::Full);
        prop_assert!(mi_q(&q, RepView::Perp) <= full + 1e-9);
        prop_assert!(mi_q(&q, RepView::Par) <= full + 1e-9);
        let full_x = mi_q_conditional(&q, RepView::Full);
        prop_assert!(mi_q_conditional(&q, RepView::Perp) <= full_x + 1e-9);
        prop_assert!(mi_q_conditional(&q, RepView::Par) <= full_x + 1e-9);
        let m = compute_metrics(&table, &q, &p, 1e-3).unwrap();
        let r = &m.ratios;
        if let (Some(rec), Some(enc), Some(era)) = (r.reconstructed, r.encapsulation, r.erasure) {
            prop_assert!((rec - (enc + 1.0 - era)).abs() <= 1e-12);
        }
    }

    #[test]
    fn oracle_projector_decomposes_and_factorizes(cfg in toy_config()) {
        let lm = toy(&cfg);
        let (_, q) = exact_tables(&lm, lm.annotator(), lm.ground_truth());
        prop_assert!(check_decomposition(&q, 1e-9).holds);
        prop_assert!(mi_q(&q, RepView::Perp) <= 1e-9);
        let f = DoFactorization::from_causal_toy(&lm, lm.ground_truth()).unwrap();
        let r = theorem1_check(&f, lm.ground_truth(), lm.annotator()).unwrap();
        prop_assert!(r.holds, "{r:?}");
    }

    #[test]
    fn factorization_ignores_concept_names(cfg in toy_config()) {
        let lm = toy(&cfg);
        let f = DoFactorization::from_causal_toy(&lm, lm.ground_truth()).unwrap();
        let subst: Vec<usize> = lm.concepts().substantive().collect();
        let mut map = BTreeMap::new();
        for (i, &c) in subst.iter().enumerate() {
            map.insert(c, subst[(i + 1) % subst.len()]);
        }
        let a = theorem1_check(&f, lm.ground_truth(), lm.annotator()).unwrap();
        let b = theorem1_check(&f.relabeled(&map).unwrap(), lm.ground_truth(), lm.annotator()).unwrap();
        prop_assert!((a.max_abs - b.max_abs).abs() <= 1e-12);
    }

    #[test]
    fn sampling_is_seed_deterministic(cfg in toy_config(), seed in any::<u64>(), top_p in 0.5..=1.0f64) {
        let lm = toy(&cfg);
        let s = SamplerConfig { top_p };
        let a = sample_corpus(&lm, lm.annotator(), 50, s.clone(), seed).unwrap();
        let b = sample_corpus(&lm, lm.annotator(), 50, s, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
