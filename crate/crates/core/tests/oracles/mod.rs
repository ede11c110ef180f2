//! Independent reference implementations used by the integration and
//! acceptance tests. None of these call into the library's algorithms.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

/// Yates-corrected chi-square as a sum over the four cells of
/// `(max(|O - E| - 1/2, 0))^2 / E`, with 0 on an empty margin.
pub fn chi2_cell_sum(n00: u64, n01: u64, n10: u64, n11: u64) -> f64 {
    let n = (n00 + n01 + n10 + n11) as f64;
    let (r0, r1) = ((n00 + n01) as f64, (n10 + n11) as f64);
    let (c0, c1) = ((n00 + n10) as f64, (n01 + n11) as f64);
    if r0 == 0.0 || r1 == 0.0 || c0 == 0.0 || c1 == 0.0 {
        return 0.0;
    }
    [(n00, r0, c0), (n01, r0, c1), (n10, r1, c0), (n11, r1, c1)]
        .iter()
        .map(|&(o, r, c)| {
            let e = r * c / n;
            let dev = ((o as f64 - e).abs() - 0.5).max(0.0);
            dev * dev / e
        })
        .sum()
}

/// Plain parent-pointer tree used by the brute-force oracles.
#[derive(Debug, Clone)]
pub struct Tree {
    pub codes: Vec<String>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
}

impl Tree {
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.codes.len()).filter(|&i| self.children[i].is_empty()).collect()
    }

    /// Ancestors of `i` including `i` itself.
    pub fn path_to_root(&self, mut i: usize) -> Vec<usize> {
        let mut out = vec![i];
        while let Some(p) = self.parent[i] {
            out.push(p);
            i = p;
        }
        out
    }

    pub fn subtree(&self, i: usize) -> Vec<usize> {
        let mut out = vec![i];
        let mut k = 0;
        while k < out.len() {
            out.extend(self.children[out[k]].iter().copied());
            k += 1;
        }
        out
    }
}

/// Random tree with `n` nodes: node `i > 0` picks a parent among earlier
/// nodes, biased toward recent ones so that depth varies. Codes are random
/// so that code order differs from creation order.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize) -> Tree {
    let mut codes: Vec<String> = (0..n).map(|i| format!("N{i:05}")).collect();
    codes[1..].shuffle(rng);
    codes[0] = "ROOT".to_owned();
    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    for i in 1..n {
        let p = if rng.random_bool(0.5) { rng.random_range(i.saturating_sub(8)..i) } else { rng.random_range(0..i) };
        parent[i] = Some(p);
        children[p].push(i);
    }
    Tree { codes, parent, children }
}

/// Recursive cut traversal over the plain tree.
pub fn brute_cut(t: &Tree, chi2: &[f64], r: f64) -> BTreeSet<String> {
    fn visit(t: &Tree, chi2: &[f64], r: f64, j: usize, out: &mut BTreeSet<String>) {
        let kids = &t.children[j];
        if kids.is_empty() {
            out.insert(t.codes[j].clone());
            return;
        }
        let better = kids.iter().filter(|&&c| chi2[j] < chi2[c]).count();
        if better as f64 / kids.len() as f64 <= r {
            out.insert(t.codes[j].clone());
        } else {
            for &c in kids {
                visit(t, chi2, r, c, out);
            }
        }
    }
    let mut out = BTreeSet::new();
    visit(t, chi2, r, 0, &mut out);
    out
}

/// Largest (max - min) of children correlations over every node in the
/// subtree of `j` that has at least two children; 0 if there is none.
pub fn brute_scent(t: &Tree, rho: &[f64], j: usize) -> f64 {
    let mut best: f64 = 0.0;
    for d in t.subtree(j) {
        let kids = &t.children[d];
        if kids.len() < 2 {
            continue;
        }
        let hi = kids.iter().map(|&c| rho[c]).fold(f64::NEG_INFINITY, f64::max);
        let lo = kids.iter().map(|&c| rho[c]).fold(f64::INFINITY, f64::min);
        best = best.max(hi - lo);
    }
    best
}

/// Kaplan-Meier survival at `t` computed straight from the definition:
/// the product over distinct event times `s <= t` of `1 - d(s) / n(s)`.
pub fn brute_km(samples: &[(i64, bool)], t: i64) -> f64 {
    let times: BTreeSet<i64> = samples.iter().filter(|s| s.1 && s.0 <= t).map(|s| s.0).collect();
    times
        .into_iter()
        .map(|s| {
            let at_risk = samples.iter().filter(|x| x.0 >= s).count() as f64;
            let deaths = samples.iter().filter(|x| x.1 && x.0 == s).count() as f64;
            1.0 - deaths / at_risk
        })
        .product()
}

/// One mark for the grid search: code, x, initial y.
#[derive(Debug, Clone)]
pub struct GridMark {
    pub code: String,
    pub x: f64,
    pub y0: f64,
}

fn ov(x1: f64, y1: f64, x2: f64, y2: f64, d: f64) -> f64 {
    let dist = ((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt();
    if dist < d {
        d - dist
    } else {
        0.0
    }
}

/// The layout objective written out directly.
pub fn grid_cost(marks: &[GridMark], y: &[f64], d: f64, alpha: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..marks.len() {
        for j in 0..marks.len() {
            total += alpha * ov(marks[i].x, y[i], marks[j].x, y[j], d);
        }
        total += (1.0 - alpha) * (y[i] - marks[i].y0).abs();
    }
    total
}

/// Exhaustive branch-and-bound over grid positions `y_min + k * step`,
/// honoring bounds and order (strict between distinct initial positions,
/// weak inside ties, ties ordered by code). Returns the cheapest grid layout
/// whose cost is below `upper` (positions in input order), or `None` if no
/// grid layout is that cheap. With `upper = f64::INFINITY` this is the grid
/// optimum.
pub fn grid_search(
    marks: &[GridMark],
    d: f64,
    alpha: f64,
    y_min: f64,
    y_max: f64,
    step: f64,
    upper: f64,
) -> Option<(f64, Vec<f64>)> {
    let n = marks.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        marks[a].y0.partial_cmp(&marks[b].y0).unwrap().then_with(|| marks[a].code.cmp(&marks[b].code)).then(a.cmp(&b))
    });
    let levels = ((y_max - y_min) / step + 1e-9).floor() as i64;

    struct Search<'a> {
        marks: &'a [GridMark],
        order: Vec<usize>,
        d: f64,
        alpha: f64,
        levels: i64,
        step: f64,
        y_min: f64,
        assigned: Vec<f64>,
        best: f64,
        best_y: Vec<f64>,
    }

    impl Search<'_> {
        fn shift_bound(&self, p: usize, y: f64) -> f64 {
            self.order[p + 1..].iter().map(|&r| (1.0 - self.alpha) * (y - self.marks[r].y0).max(0.0)).sum()
        }

        /// Lower bound on what marks after position `p` must still add once
        /// position `p` sits at `y` (not yet pushed): each of them lies at or
        /// above `y` and pays its own displacement plus its overlap with the
        /// marks placed so far, `p` included.
        fn rest_bound(&self, p: usize, y: f64) -> f64 {
            let placed = &self.assigned;
            let mut total = 0.0;
            for &r in &self.order[p + 1..] {
                let m = &self.marks[r];
                let free = m.y0.max(y + self.d);
                let mut best = (1.0 - self.alpha) * (free - m.y0).abs();
                let mut k = ((y - self.y_min) / self.step).round() as i64;
                loop {
                    let yy = self.y_min + k as f64 * self.step;
                    if k > self.levels || yy >= y + self.d {
                        break;
                    }
                    let mut c = (1.0 - self.alpha) * (yy - m.y0).abs();
                    if c < best {
                        c += 2.0 * self.alpha * ov(m.x, yy, self.marks[self.order[p]].x, y, self.d);
                        for q in (0..placed.len()).rev() {
                            if yy - placed[q] >= self.d {
                                break;
                            }
                            c += 2.0 * self.alpha * ov(m.x, yy, self.marks[self.order[q]].x, placed[q], self.d);
                        }
                        best = best.min(c);
                    }
                    k += 1;
                }
                total += best;
            }
            total
        }

        fn go(&mut self, p: usize, min_k: i64, partial: f64) {
            let n = self.order.len();
            if p == n {
                if partial < self.best {
                    self.best = partial;
                    self.best_y = self.assigned.clone();
                }
                return;
            }
            let m = &self.marks[self.order[p]];
            let target = (((m.y0 - self.y_min) / self.step).round() as i64).clamp(min_k, self.levels);
            // upward from the nearest level, then downward
            let mut ks: Vec<i64> = (target..=self.levels).collect();
            let up = ks.len();
            ks.extend((min_k..target).rev());
            let mut skip_up = false;
            for (idx, k) in ks.into_iter().enumerate() {
                if idx < up && skip_up {
                    continue;
                }
                let y = self.y_min + k as f64 * self.step;
                let shift = (1.0 - self.alpha) * (y - m.y0).abs();
                let floor_y = if idx < up { y } else { self.y_min + min_k as f64 * self.step };
                if partial + shift + self.shift_bound(p, floor_y) >= self.best {
                    if idx < up {
                        // farther up only grows both terms
                        skip_up = true;
                        continue;
                    }
                    break;
                }
                let mut over = 0.0;
                for q in (0..p).rev() {
                    let yq = self.assigned[q];
                    if y - yq >= self.d {
                        break;
                    }
                    over += 2.0 * self.alpha * ov(m.x, y, self.marks[self.order[q]].x, yq, self.d);
                }
                let next = partial + shift + over;
                if next + self.rest_bound(p, y) >= self.best {
                    continue;
                }
                self.assigned.push(y);
                let strict = p + 1 < n && self.marks[self.order[p + 1]].y0 > m.y0;
                self.go(p + 1, if strict { k + 1 } else { k }, next);
                self.assigned.pop();
            }
        }
    }

    let mut s = Search {
        marks,
        order: order.clone(),
        d,
        alpha,
        levels,
        step,
        y_min,
        assigned: Vec::with_capacity(n),
        best: upper,
        best_y: Vec::new(),
    };
    s.go(0, 0, alpha * n as f64 * d);
    if s.best_y.is_empty() {
        return None;
    }
    let mut y = vec![0.0; n];
    for (p, &i) in order.iter().enumerate() {
        y[i] = s.best_y[p];
    }
    Some((s.best, y))
}
