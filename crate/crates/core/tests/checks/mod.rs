//! Randomized comparisons between the library and the oracles, shared by the
//! integration tests and the acceptance report. Each check returns a short
//! summary on success and a description of the first mismatch on failure.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use eventscope_core::cut::{informative_cut, scent, CutParams};
use eventscope_core::model::{HierarchyEdge, TypeHierarchy};
use eventscope_core::stats::{chi_square_yates, ContingencyTable};
use eventscope_core::timeline::product_limit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracles::{self, Tree};

pub fn to_hierarchy(t: &Tree) -> TypeHierarchy {
    TypeHierarchy::build((0..t.codes.len()).map(|i| {
        HierarchyEdge::new(t.codes[i].clone(), t.parent[i].map(|p| t.codes[p].as_str()), "")
    }))
    .expect("random tree is a valid hierarchy")
}

/// Library node values aligned with the oracle tree's indices.
fn by_tree_index(h: &TypeHierarchy, t: &Tree, values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; h.len()];
    for (i, code) in t.codes.iter().enumerate() {
        out[h.id(code).expect("code present").index()] = values[i];
    }
    out
}

fn random_table(rng: &mut ChaCha8Rng) -> ContingencyTable {
    let scale = [5u64, 100, 10_000, 1_000_000][rng.random_range(0..4)];
    let mut cell = || if rng.random_bool(0.05) { 0 } else { rng.random_range(0..=scale) };
    ContingencyTable::new(cell(), cell(), cell(), cell())
}

/// Largest relative error of the statistic against the cell-sum form.
pub fn chi2_against_cell_sum(tables: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..tables {
        let t = random_table(&mut rng);
        let ours = chi_square_yates(&t);
        let reference = oracles::chi2_cell_sum(t.n00, t.n01, t.n10, t.n11);
        let err = if reference == 0.0 { ours.abs() } else { ((ours - reference) / reference).abs() };
        if ours.is_nan() || err > 1e-9 {
            return Err(format!("{t:?}: {ours} vs {reference}"));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Node count between 2 and `max`, spread evenly in log scale.
fn tree_size(rng: &mut ChaCha8Rng, max: usize) -> usize {
    let x: f64 = rng.random_range(0.0..(max as f64).ln());
    (x.exp() as usize).clamp(2, max)
}

/// Statistic values with frequent ties and zeros.
fn random_stats(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| match rng.random_range(0..4) {
            0 => 0.0,
            1 => rng.random_range(0..4) as f64,
            _ => rng.random_range(0.0..50.0),
        })
        .collect()
}

/// Every leaf has exactly one cut member on its root path.
fn is_exact_cut(t: &Tree, cut: &BTreeSet<String>) -> bool {
    t.leaves()
        .into_iter()
        .all(|l| t.path_to_root(l).iter().filter(|&&a| cut.contains(&t.codes[a])).count() == 1)
}

/// `coarse` is at least as coarse as `fine`: every member of `fine` has an
/// ancestor-or-self in `coarse`.
fn is_refined_by(t: &Tree, index: &BTreeMap<&str, usize>, fine: &BTreeSet<String>, coarse: &BTreeSet<String>) -> bool {
    fine.iter().all(|c| t.path_to_root(index[c.as_str()]).iter().any(|&a| coarse.contains(&t.codes[a])))
}

/// Cut against the recursive traversal over R in {0, 0.1, ..., 1}, with
/// exact-cut, nesting and size checks. Returns the number of comparisons.
pub fn cut_against_brute(trees: usize, max_nodes: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    for k in 0..trees {
        let n = tree_size(&mut rng, max_nodes);
        let t = oracles::random_tree(&mut rng, n);
        let h = to_hierarchy(&t);
        let stats = random_stats(&mut rng, n);
        let chi2 = by_tree_index(&h, &t, &stats);
        let index: BTreeMap<&str, usize> = t.codes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let mut previous: Option<BTreeSet<String>> = None;
        for step in 0..=10 {
            let r = step as f64 / 10.0;
            let cut = informative_cut(&h, &chi2, CutParams::new(r).expect("valid R"));
            let ours: Vec<String> = cut.codes(&h, false).into_iter().map(String::from).collect();
            let ours_set: BTreeSet<String> = ours.iter().cloned().collect();
            if ours_set.len() != ours.len() {
                return Err(format!("tree {k} (n={n}) R={r}: duplicate cut members"));
            }
            let brute = oracles::brute_cut(&t, &stats, r);
            if ours_set != brute {
                return Err(format!("tree {k} (n={n}) R={r}: {} vs {} members", ours_set.len(), brute.len()));
            }
            if !is_exact_cut(&t, &ours_set) {
                return Err(format!("tree {k} (n={n}) R={r}: not an exact cut"));
            }
            let post: BTreeSet<String> = cut.codes(&h, true).into_iter().map(String::from).collect();
            let expected_post: BTreeSet<String> =
                brute.iter().filter(|c| stats[index[c.as_str()]] > 0.0).cloned().collect();
            if post != expected_post {
                return Err(format!("tree {k} (n={n}) R={r}: post filter differs"));
            }
            if let Some(prev) = &previous {
                if ours_set.len() > prev.len() || !is_refined_by(&t, &index, prev, &ours_set) {
                    return Err(format!("tree {k} (n={n}) R={r}: not nested in the R={} cut", r - 0.1));
                }
            }
            previous = Some(ours_set);
            compared += 1;
        }
    }
    Ok(compared)
}

/// Scent against the brute-force subtree maximum; exact equality.
pub fn scent_against_brute(trees: usize, max_nodes: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = 0;
    for k in 0..trees {
        let n = tree_size(&mut rng, max_nodes);
        let t = oracles::random_tree(&mut rng, n);
        let h = to_hierarchy(&t);
        let rho: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let ours = scent(&h, &by_tree_index(&h, &t, &rho));
        for (i, code) in t.codes.iter().enumerate() {
            let expected = oracles::brute_scent(&t, &rho, i);
            let got = ours[h.id(code).expect("code present").index()];
            if got != expected {
                return Err(format!("tree {k} (n={n}) node {code}: {got} vs {expected}"));
            }
        }
        nodes += n;
    }
    Ok(nodes)
}

/// Product-limit curves against the definition at every integer time in
/// range; returns the largest absolute difference.
pub fn km_against_brute(samples: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..samples {
        let n = rng.random_range(1..60);
        let data: Vec<(i64, bool)> =
            (0..n).map(|_| (rng.random_range(0..40), rng.random_bool(0.6))).collect();
        let curve = product_limit(&data);
        for t in -1..42 {
            let diff = (curve.survival_at(t) - oracles::brute_km(&data, t)).abs();
            if diff > 1e-12 {
                return Err(format!("sample {k} t={t}: off by {diff}"));
            }
            worst = worst.max(diff);
        }
    }
    Ok(worst)
}
