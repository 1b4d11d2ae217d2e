//! Acceptance criteria, run in order. Each prints one PASS or FAIL line; the
//! process fails if any criterion does.

mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::Rng;
use taxo_expand::baselines::{closest_neighbor, closest_parent};
use taxo_expand::clean::{self_clean, CleanConfig};
use taxo_expand::diff::gradcheck::primitive_suite;
use taxo_expand::diff::{Matrix, Tape};
use taxo_expand::egonet::{batch_egonets, Egonet, EgonetOptions};
use taxo_expand::infer::{rank_queries, uncached_logits, AnchorCache};
use taxo_expand::metrics::{hit_at_k, mean_rank, scaled_mrr, wup, MetricsReport};
use taxo_expand::model::{
    all_variants, gat_head, gcn_aggregate, model_gradcheck, propagate, random_egonet, readout, Arch, Bound, Matcher,
    ModelConfig, Readout,
};
use taxo_expand::split::{mask_leaf_counts, Query, TaxonomySplit};
use taxo_expand::synthetic::{benchmark, inject_label_noise, rewire_leaves, SyntheticConfig};
use taxo_expand::train::{fit, infonce_loss, infonce_on_tape, Loss, TrainConfig, TrainInstance, Trainer};
use taxo_expand::{Concept, ConceptId, SeedStream, Taxonomy};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Criterion 1

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let base = ModelConfig {
        heads: vec![2, 1],
        hidden: vec![3, 3],
        position_dim: 2,
        matcher_hidden: 4,
        ..ModelConfig::default()
    };
    let mut checks = 0;
    let mut worst: (f64, String) = (0.0, String::new());
    for seed in 0..10u64 {
        let stream = SeedStream::new(seed).split_str("acceptance-gradients");
        let mut all = primitive_suite(stream.split_str("primitives")).map_err(|e| e.to_string())?;
        for (i, c) in all_variants(&base).iter().enumerate() {
            all.extend(model_gradcheck(c, 4, stream.split(i as u64)).map_err(|e| e.to_string())?);
        }
        for c in all {
            checks += 1;
            if c.max_relative_error > worst.0 {
                worst = (c.max_relative_error, format!("{} (seed {seed})", c.name));
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(
        worst.0 < 1e-4 && elapsed < Duration::from_secs(30),
        format!(
            "{checks} checks over 10 seeds, worst relative error {:.2e} at {}, {:.1}s",
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

// Criterion 2

fn random_egonets(rng: &mut impl Rng, dim: usize) -> Vec<Egonet> {
    let n = rng.random_range(1..4);
    (0..n)
        .map(|i| {
            let (parents, siblings) = (rng.random_range(0..3), rng.random_range(0..5));
            random_egonet(rng, i as u32, parents, siblings, dim)
        })
        .collect()
}

fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Rows of `m` belonging to each egonet, in batch order.
fn per_egonet(m: &Matrix, egonets: &[Egonet]) -> Vec<common::Rows> {
    let rows = common::to_rows(m);
    let mut out = Vec::new();
    let mut offset = 0;
    for e in egonets {
        out.push(rows[offset..offset + e.nodes.len()].to_vec());
        offset += e.nodes.len();
    }
    out
}

fn random_dag(rng: &mut impl Rng, n: usize) -> Taxonomy {
    let concepts = (0..n)
        .map(|i| Concept::new(ConceptId(i as u32), format!("n{i}"), vec![1.0]))
        .collect();
    let mut edges = Vec::new();
    for c in 1..n {
        for p in 0..c {
            if rng.random_bool((1.5 / c as f64).min(1.0)) {
                edges.push((ConceptId(p as u32), ConceptId(c as u32)));
            }
        }
    }
    Taxonomy::new(1, concepts, edges).unwrap()
}

/// Wu&P by explicit enumeration of every root path.
fn wup_oracle(t: &Taxonomy, a: ConceptId, b: ConceptId) -> f64 {
    fn ancestors_or_self(t: &Taxonomy, x: ConceptId) -> BTreeSet<ConceptId> {
        let mut out = BTreeSet::from([x]);
        for &p in t.parents(x).unwrap() {
            out.extend(ancestors_or_self(t, p));
        }
        out
    }
    fn depth(t: &Taxonomy, x: ConceptId, multi: bool) -> usize {
        let ps = t.parents(x).unwrap();
        if ps.is_empty() {
            if multi {
                2
            } else {
                1
            }
        } else {
            1 + ps.iter().map(|&p| depth(t, p, multi)).min().unwrap()
        }
    }
    let multi = t.roots().count() > 1;
    let common: Vec<ConceptId> = ancestors_or_self(t, a)
        .intersection(&ancestors_or_self(t, b))
        .copied()
        .collect();
    let lca_depth = common.iter().map(|&c| depth(t, c, multi)).max().unwrap_or(1);
    2.0 * lca_depth as f64 / (depth(t, a, multi) + depth(t, b, multi)) as f64
}

fn oracle_equivalence() -> Outcome {
    let mut rng = SeedStream::new(2).split_str("acceptance-oracles").rng();
    let mut worst: f64 = 0.0;
    let fixtures = 120;
    let mut metric_mismatch = 0;
    for f in 0..fixtures {
        let dim = rng.random_range(1..5);
        let egonets = random_egonets(&mut rng, dim);
        let batch = batch_egonets(&egonets).unwrap();
        let out = rng.random_range(1..5);
        let slope = rng.random_range(0.05..0.5);

        // GCN and single-head GAT layers.
        let w = random_matrix(&mut rng, dim, out);
        let z = random_matrix(&mut rng, 2 * out, 1);
        let mut tape = Tape::new();
        let x = tape.constant(batch.features.clone());
        let (wv, zv) = (tape.constant(w.clone()), tape.constant(z.clone()));
        let g = gcn_aggregate(&mut tape, &batch, x, wv).unwrap();
        let a = gat_head(&mut tape, &batch, x, wv, zv, slope).unwrap();
        let (g, a) = (tape.value(g).clone(), tape.value(a).clone());
        for ((e, gr), ar) in egonets.iter().zip(per_egonet(&g, &egonets)).zip(per_egonet(&a, &egonets)) {
            let xs: common::Rows = e.nodes.iter().map(|n| n.features.clone()).collect();
            worst = worst.max(max_diff(&gr.concat(), &common::gcn_layer(e, &xs, &w).concat()));
            worst = worst.max(max_diff(&ar.concat(), &common::gat_head(e, &xs, &w, &z, slope).concat()));
        }

        // WMR and CR over arbitrary node embeddings.
        let h = random_matrix(&mut rng, batch.node_count(), out);
        let alpha = random_matrix(&mut rng, 3, 1);
        for kind in [Readout::Mean, Readout::Wmr, Readout::Cr] {
            let mut tape = Tape::new();
            let hv = tape.constant(h.clone());
            let av = tape.constant(alpha.clone());
            let r = readout(&mut tape, &batch, hv, kind, Some(av)).unwrap();
            let r = tape.value(r).clone();
            for ((e, hs), row) in egonets.iter().zip(per_egonet(&h, &egonets)).zip(common::to_rows(&r)) {
                worst = worst.max(max_diff(&row, &common::readout(kind, e, &hs, Some(&alpha))));
            }
        }

        // Multi-head layers and the whole model, one variant per fixture.
        let variants = all_variants(&common::small_config(Arch::Pgat, Readout::Wmr, Matcher::Lbm));
        let cfg = &variants[f % variants.len()];
        let p = common::random_params(cfg, dim, &mut rng);
        let mut tape = Tape::new();
        let bound = Bound::frozen(&mut tape, &p);
        let hv = propagate(&mut tape, cfg, &bound, &batch, None).unwrap();
        let hm = tape.value(hv).clone();
        let queries = random_matrix(&mut rng, egonets.len(), dim);
        let reps = p.anchor_representations(&batch).unwrap();
        let logits = p.logits(&reps, &queries).unwrap();
        for (i, (e, hs)) in egonets.iter().zip(per_egonet(&hm, &egonets)).enumerate() {
            worst = worst.max(max_diff(&hs.concat(), &common::propagate(&p, e).concat()));
            let rep = common::anchor(&p, e);
            worst = worst.max(max_diff(reps.row(i), &rep));
            worst = worst.max((logits[i] - common::logit(&p, &rep, queries.row(i))).abs());
        }

        // InfoNCE, plain and on the tape.
        let n = rng.random_range(1..12);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..5.0)).collect();
        let pos = rng.random_range(0..n);
        let plain = infonce_loss(&scores, pos).unwrap();
        let mut tape = Tape::new();
        let ls = tape.constant(Matrix::column(scores.iter().map(|s| s.ln()).collect()));
        let taped = infonce_on_tape(&mut tape, ls, vec![0; n], vec![pos]).unwrap();
        let oracle = common::infonce(&scores, pos);
        worst = worst.max((plain - oracle).abs()).max((tape.value(taped).item() - oracle).abs());

        // Metrics must match exactly.
        let queries = rng.random_range(1..20);
        let ranks: Vec<Vec<usize>> = (0..queries)
            .map(|_| (0..rng.random_range(1..4)).map(|_| rng.random_range(1..200)).collect())
            .collect();
        let k = *[1usize, 3, 5, 10].choose(&mut rng).unwrap();
        let exact = common::scaled_mrr_exact(&ranks);
        if mean_rank(&ranks).unwrap() != common::mean_rank(&ranks)
            || hit_at_k(&ranks, k).unwrap() != common::hit_at(&ranks, k)
            || scaled_mrr(&ranks).unwrap() != common::scaled_mrr(&ranks)
            || (scaled_mrr(&ranks).unwrap() - exact.0 as f64 / exact.1 as f64).abs() > 1e-12
        {
            metric_mismatch += 1;
        }
        let n = rng.random_range(2..12);
        let t = random_dag(&mut rng, n);
        let ids: Vec<ConceptId> = t.ids().collect();
        let (a, b) = (*ids.choose(&mut rng).unwrap(), *ids.choose(&mut rng).unwrap());
        if wup(&t, a, b).unwrap() != wup_oracle(&t, a, b) {
            metric_mismatch += 1;
        }
    }
    ensure(
        worst < 1e-10 && metric_mismatch == 0,
        format!("{fixtures} fixtures, worst deviation {worst:.2e}, {metric_mismatch} metric mismatches"),
    )
}

// Criterion 3

fn analytic_anchors() -> Outcome {
    let mut worst_nce: f64 = 0.0;
    for n in [1usize, 4, 31, 127] {
        let l = infonce_loss(&vec![0.37; n + 1], n / 2).unwrap();
        worst_nce = worst_nce.max((l - ((n + 1) as f64).ln()).abs());
    }
    let mut rng = SeedStream::new(3).rng();
    let egonets = random_egonets(&mut rng, 3);
    let batch = batch_egonets(&egonets).unwrap();
    let h = random_matrix(&mut rng, batch.node_count(), 4);
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let zero = tape.constant(Matrix::zeros(3, 1));
    let wmr = readout(&mut tape, &batch, hv, Readout::Wmr, Some(zero)).unwrap();
    let wmr = tape.value(wmr).clone();
    let mut wmr_err: f64 = 0.0;
    for (i, hs) in per_egonet(&h, &egonets).iter().enumerate() {
        let m = common::mean(&hs.iter().collect::<Vec<_>>(), 4);
        wmr_err = wmr_err.max(max_diff(wmr.row(i), &m));
    }
    let mut tape = Tape::new();
    let z = tape.constant(Matrix::scalar(0.0));
    let sp = tape.softplus(z);
    let sp0 = tape.value(sp).item();
    let boundary = (scaled_mrr(&[vec![10]]).unwrap(), scaled_mrr(&[vec![11]]).unwrap());
    ensure(
        worst_nce <= 1e-9 && wmr_err <= 1e-12 && sp0 == 2f64.ln() && boundary == (1.0, 0.5),
        format!(
            "InfoNCE off by {worst_nce:.1e}, WMR(α=0) vs mean {wmr_err:.1e}, softplus(0) = {sp0}, MRR(10), MRR(11) = {boundary:?}"
        ),
    )
}

// Criteria 4 and 5 share the benchmark protocol.

fn bench_model(arch: Arch) -> ModelConfig {
    ModelConfig {
        heads: vec![2, 1],
        hidden: vec![32, 32],
        position_dim: 8,
        matcher_hidden: 32,
        ..ModelConfig::default()
    }
    .with_arch(arch)
}

fn bench_train(seed: u64, loss: Loss) -> TrainConfig {
    TrainConfig {
        max_epochs: 20,
        loss,
        seed,
        ..TrainConfig::default()
    }
}

fn bench_split(seed: u64) -> TaxonomySplit {
    let t = benchmark(&SyntheticConfig {
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap();
    mask_leaf_counts(&t, 25, 50, seed).unwrap()
}

fn trained_metrics(split: &TaxonomySplit, model: &ModelConfig, train: &TrainConfig) -> MetricsReport {
    let f = fit(split, model, train).unwrap();
    let cache = AnchorCache::build(&split.existing, &f.best, &train.egonet_options()).unwrap();
    MetricsReport::from_results(&rank_queries(&split.test, &cache, &f.best).unwrap()).unwrap()
}

fn baseline_metrics(
    split: &TaxonomySplit,
    rank: fn(&Taxonomy, ConceptId, &[f64]) -> taxo_expand::Result<taxo_expand::infer::RankResult>,
) -> MetricsReport {
    let rs: Vec<_> = split
        .test
        .iter()
        .map(|q| rank(&split.existing, q.concept.id, &q.concept.embedding).unwrap().with_gold(&q.gold).unwrap())
        .collect();
    MetricsReport::from_results(&rs).unwrap()
}

fn directional_reproduction() -> Outcome {
    let start = Instant::now();
    let (mut model, mut cp, mut cn) = ([0.0; 2], [0.0; 2], [0.0; 2]);
    for seed in 0..3 {
        let split = bench_split(seed);
        let add = |acc: &mut [f64; 2], m: MetricsReport| {
            acc[0] += m.hit_at_1 / 3.0;
            acc[1] += m.mrr / 3.0;
        };
        add(&mut model, trained_metrics(&split, &bench_model(Arch::Pgat), &bench_train(seed, Loss::InfoNce)));
        add(&mut cp, baseline_metrics(&split, closest_parent));
        add(&mut cn, baseline_metrics(&split, closest_neighbor));
    }
    let elapsed = start.elapsed();
    ensure(
        model[0] >= cp[0] && model[0] >= cn[0] && model[1] >= cp[1] && model[1] >= cn[1] && elapsed.as_secs() < 600,
        format!(
            "Hit@1/MRR: model {:.3}/{:.3}, closest-parent {:.3}/{:.3}, closest-neighbor {:.3}/{:.3}, {:.0}s",
            model[0],
            model[1],
            cp[0],
            cp[1],
            cn[0],
            cn[1],
            elapsed.as_secs_f64()
        ),
    )
}

fn ablation_direction() -> Outcome {
    let (mut pgat, mut gat, mut nce, mut bce) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..3 {
        let split = bench_split(seed);
        pgat += trained_metrics(&split, &bench_model(Arch::Pgat), &bench_train(seed, Loss::InfoNce)).mrr / 3.0;
        gat += trained_metrics(&split, &bench_model(Arch::Gat), &bench_train(seed, Loss::InfoNce)).mrr / 3.0;
        let mut noisy = split.clone();
        noisy.existing = inject_label_noise(&split.existing, 0.1, seed).unwrap().0;
        nce += trained_metrics(&noisy, &bench_model(Arch::Pgat), &bench_train(seed, Loss::InfoNce)).mrr / 3.0;
        bce += trained_metrics(&noisy, &bench_model(Arch::Pgat), &bench_train(seed, Loss::Bce)).mrr / 3.0;
    }
    ensure(
        pgat >= gat - 0.005 && nce >= bce - 0.005,
        format!("MRR: PGAT {pgat:.3} vs GAT {gat:.3}; with 10% label noise InfoNCE {nce:.3} vs BCE {bce:.3}"),
    )
}

// Criterion 6

/// One query, eight anchors, and a known posterior over which anchor is the
/// query's parent. Every instance lists all eight anchors, so InfoNCE is the
/// cross entropy against the posterior and its optimum is the posterior.
fn density_world(seed: u64) -> f64 {
    let stream = SeedStream::new(seed).split_str("density");
    let mut rng = stream.split_str("world").rng();
    let dim = 8;
    let mut concepts: Vec<Concept> = (0..9)
        .map(|i| {
            Concept::new(
                ConceptId(i),
                format!("c{i}"),
                (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
        })
        .collect();
    concepts[8].name = "query".into();
    let root = ConceptId(0);
    let anchors: Vec<ConceptId> = (1..=8).map(ConceptId).collect();
    let edges: Vec<_> = anchors[..4].iter().map(|&a| (root, a)).collect();
    let t = Taxonomy::new(dim, concepts, edges).unwrap();
    let query = ConceptId(8);
    let raw: Vec<f64> = (0..8).map(|_| rng.random_range(-1.5f64..1.5).exp()).collect();
    let posterior: Vec<f64> = raw.iter().map(|r| r / raw.iter().sum::<f64>()).collect();

    let model = ModelConfig {
        heads: vec![2, 1],
        hidden: vec![8, 16],
        position_dim: 4,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let train = TrainConfig {
        negatives: 7,
        seed,
        ..TrainConfig::default()
    };
    let params = taxo_expand::model::ModelParams::init(&model, dim, seed).unwrap();
    let mut trainer = Trainer::new(params, train).unwrap();
    let mut sample = stream.split_str("instances").rng();
    let steps = 600;
    for step in 0..steps {
        trainer.optimizer.lr = if step < 400 { 0.01 } else { 0.001 };
        let batch: Vec<TrainInstance> = (0..128)
            .map(|_| {
                let u: f64 = sample.random();
                let mut acc = 0.0;
                let pick = posterior
                    .iter()
                    .position(|&p| {
                        acc += p;
                        u < acc
                    })
                    .unwrap_or(7);
                TrainInstance {
                    query,
                    positive: anchors[pick],
                    negatives: anchors.iter().copied().filter(|&a| a != anchors[pick]).collect(),
                }
            })
            .collect();
        trainer.step(&t, &batch, None).unwrap();
    }
    let logits = uncached_logits(&t, &trainer.params, t.embedding(query).unwrap(), &EgonetOptions::default()).unwrap();
    let ls: Vec<f64> = anchors.iter().map(|a| logits[a.0 as usize]).collect();
    let m = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = ls.iter().map(|l| (l - m).exp()).sum();
    ls.iter()
        .zip(&posterior)
        .map(|(l, p)| ((l - m).exp() / z - p).abs())
        .sum::<f64>()
        / 2.0
}

fn density_property() -> Outcome {
    let tvs: Vec<f64> = (0..5).map(density_world).collect();
    let mean = tvs.iter().sum::<f64>() / tvs.len() as f64;
    ensure(
        mean < 0.05,
        format!("mean total variation {mean:.4} over 5 seeds ({tvs:.4?})"),
    )
}

// Criterion 7

fn inference_efficiency() -> Outcome {
    // 1 + 27 groups + 108 categories + 864 leaves = 1000 anchors.
    let t = benchmark(&SyntheticConfig {
        groups: 27,
        categories_per_group: 4,
        leaves_per_category: 8,
        seed: 7,
        ..SyntheticConfig::default()
    })
    .unwrap();
    assert_eq!(t.len(), 1000);
    let model = ModelConfig {
        heads: vec![2, 1],
        hidden: vec![64, 64],
        position_dim: 16,
        ..ModelConfig::default()
    };
    let params = taxo_expand::model::ModelParams::init(&model, t.dimension(), 7).unwrap();
    let mut rng = SeedStream::new(7).split_str("queries").rng();
    let queries: Vec<Query> = (0..100)
        .map(|i| Query {
            concept: Concept::new(
                ConceptId(5000 + i),
                format!("q{i}"),
                (0..t.dimension()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            ),
            gold: vec![ConceptId(0)],
        })
        .collect();
    let opts = EgonetOptions::default();

    let start = Instant::now();
    let cache = AnchorCache::build(&t, &params, &opts).unwrap();
    let cached: Vec<Vec<f64>> = queries
        .iter()
        .map(|q| cache.logits(&params, &q.concept.embedding).unwrap())
        .collect();
    let fast = start.elapsed();

    let start = Instant::now();
    let slow_logits: Vec<Vec<f64>> = queries
        .iter()
        .map(|q| uncached_logits(&t, &params, &q.concept.embedding, &opts).unwrap())
        .collect();
    let slow = start.elapsed();
    let diff = cached
        .iter()
        .zip(&slow_logits)
        .map(|(a, b)| max_diff(a, b))
        .fold(0.0, f64::max);
    let speedup = slow.as_secs_f64() / fast.as_secs_f64();
    ensure(
        speedup >= 10.0 && fast.as_secs_f64() < 10.0 && diff <= 1e-12,
        format!(
            "cached {:.3}s (including cache build), recomputed {:.3}s, speedup {speedup:.1}x, max logit gap {diff:.1e}",
            fast.as_secs_f64(),
            slow.as_secs_f64()
        ),
    )
}

// Criterion 8

fn scalability_shape() -> Outcome {
    let model = bench_model(Arch::Pgat);
    let mut points = Vec::new();
    // Growing the number of groups keeps the fan-out, and so the egonet
    // sizes, fixed. Growing leaves per category instead also grows every
    // positive egonet and the epoch cost becomes superlinear in edges.
    for groups in [8, 17, 35, 71] {
        let t = benchmark(&SyntheticConfig {
            groups,
            categories_per_group: 10,
            leaves_per_category: 11,
            seed: 8,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let split = TaxonomySplit::unmasked(t);
        let train = TrainConfig {
            max_epochs: 1,
            seed: 8,
            ..TrainConfig::default()
        };
        // Fastest of two runs, to damp interference from the host.
        let secs = (0..2)
            .map(|_| {
                let start = Instant::now();
                fit(&split, &model, &train).unwrap();
                start.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min);
        points.push((split.existing.edge_count() as f64, secs));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let fit_err: f64 = points.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let total: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = 1.0 - fit_err / total;
    let shown: Vec<String> = points.iter().map(|(e, s)| format!("{e:.0} edges {s:.2}s")).collect();
    ensure(r2 > 0.95, format!("R² {r2:.4}; {}", shown.join(", ")))
}

// Criterion 9

fn planted_error_cleaning() -> Outcome {
    let mut found = Vec::new();
    for seed in 0..3 {
        let clean = benchmark(&SyntheticConfig {
            seed,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let (dirty, moves) = rewire_leaves(&clean, 10, seed).unwrap();
        let report = self_clean(
            &dirty,
            &CleanConfig {
                seed,
                ..CleanConfig::default()
            },
            &bench_model(Arch::Pgat),
            &bench_train(seed, Loss::InfoNce),
            |_| Ok(()),
        )
        .unwrap();
        let top: BTreeSet<(ConceptId, ConceptId)> =
            report.most_suspicious(20).iter().map(|e| (e.leaf, e.parent)).collect();
        found.push(moves.iter().filter(|m| top.contains(&(m.leaf, m.to))).count());
    }
    let mean = found.iter().sum::<usize>() as f64 / found.len() as f64;
    ensure(
        mean >= 7.0,
        format!("planted edges in the top 20: {found:?}, mean {mean:.2} of 10"),
    )
}

// Criterion 10

fn run_once(threads: usize) -> (String, String) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let split = bench_split(10);
        let train = TrainConfig {
            max_epochs: 3,
            seed: 10,
            ..TrainConfig::default()
        };
        let mut log = String::new();
        let state = taxo_expand::train::TrainingState::new(&bench_model(Arch::Pgat), 64, &train).unwrap();
        let f = taxo_expand::train::fit_with(&split, &train, state, |e| {
            log.push_str(&serde_json::to_string(e).unwrap());
            log.push('\n');
            Ok(())
        })
        .unwrap();
        let cache = AnchorCache::build(&split.existing, &f.best, &train.egonet_options()).unwrap();
        let ranks = serde_json::to_string(&rank_queries(&split.test, &cache, &f.best).unwrap()).unwrap();
        (log, ranks)
    })
}

fn determinism() -> Outcome {
    let a = run_once(1);
    let b = run_once(1);
    let c = run_once(3);
    ensure(
        a == b && a == c,
        format!(
            "logs identical: {}, ranks identical: {} (1 vs 1 vs 3 threads, {} log bytes, {} rank bytes)",
            a.0 == b.0 && a.0 == c.0,
            a.1 == b.1 && a.1 == c.1,
            a.0.len(),
            a.1.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient suite", gradient_suite),
        ("oracle equivalence", oracle_equivalence),
        ("analytic anchors", analytic_anchors),
        ("directional reproduction", directional_reproduction),
        ("ablation direction", ablation_direction),
        ("density property", density_property),
        ("inference efficiency", inference_efficiency),
        ("scalability shape", scalability_shape),
        ("planted-error self-cleaning", planted_error_cleaning),
        ("determinism", determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag}: {name}: {detail} [{secs:.1}s]", i + 1);
        std::io::stdout().flush().unwrap();
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
