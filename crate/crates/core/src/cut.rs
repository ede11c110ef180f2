//! Informative cut through the hierarchy and the recursive scent score.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{NodeId, TypeHierarchy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CutError {
    #[error("`{0}` is a leaf and has no comparison ratio")]
    LeafNode(String),
    #[error("R must lie in [0, 1], got {0}")]
    InvalidR(f64),
}

/// Traversal threshold; `r = 0` (the default) descends wherever any child
/// beats its parent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CutParams {
    pub r: f64,
}

impl CutParams {
    pub fn new(r: f64) -> Result<Self, CutError> {
        if (0.0..=1.0).contains(&r) {
            Ok(CutParams { r })
        } else {
            Err(CutError::InvalidR(r))
        }
    }
}

/// Share of `j`'s children whose statistic strictly exceeds `j`'s.
pub fn comparison_ratio(h: &TypeHierarchy, chi2: &[f64], j: NodeId) -> Result<f64, CutError> {
    let children = h.children(j);
    if children.is_empty() {
        return Err(CutError::LeafNode(h.code(j).to_owned()));
    }
    let better = children.iter().filter(|c| chi2[j.index()] < chi2[c.index()]).count();
    Ok(better as f64 / children.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutResult {
    pub params: CutParams,
    /// Selected nodes in preorder.
    pub pre_filter: Vec<NodeId>,
    /// Selected nodes with a positive statistic.
    pub post_filter: Vec<NodeId>,
}

impl CutResult {
    pub fn codes<'h>(&self, h: &'h TypeHierarchy, post: bool) -> Vec<&'h str> {
        let ids = if post { &self.post_filter } else { &self.pre_filter };
        ids.iter().map(|&id| h.code(id)).collect()
    }
}

/// Depth-first traversal from the root: a node is selected when it is a
/// leaf or its comparison ratio is at most `params.r`; otherwise each child
/// is visited in turn.
pub fn informative_cut(h: &TypeHierarchy, chi2: &[f64], params: CutParams) -> CutResult {
    let mut pre_filter = Vec::new();
    let mut j = 0;
    while j < h.len() {
        let id = NodeId(j as u32);
        let descend = comparison_ratio(h, chi2, id).is_ok_and(|ratio| ratio > params.r);
        if descend {
            // descend: the first child is the next node in preorder
            j += 1;
        } else {
            pre_filter.push(id);
            j = h.subtree_range(id).end;
        }
    }
    let post_filter = pre_filter.iter().copied().filter(|id| chi2[id.index()] > 0.0).collect();
    CutResult { params, pre_filter, post_filter }
}

/// Scent of every node: zero at leaves; otherwise the larger of the spread
/// (max minus min) of the children's correlations and the children's scents.
pub fn scent(h: &TypeHierarchy, correlation: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; h.len()];
    for j in h.ids().rev() {
        let children = h.children(j);
        if children.is_empty() {
            continue;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut best: f64 = 0.0;
        for c in children {
            let rho = correlation[c.index()];
            lo = lo.min(rho);
            hi = hi.max(rho);
            best = best.max(out[c.index()]);
        }
        out[j.index()] = best.max(hi - lo);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HierarchyEdge;

    fn fixture() -> (TypeHierarchy, Vec<f64>) {
        let h = TypeHierarchy::build([
            HierarchyEdge::new("ROOT", None, ""),
            HierarchyEdge::new("A", Some("ROOT"), ""),
            HierarchyEdge::new("B", Some("ROOT"), ""),
            HierarchyEdge::new("B1", Some("B"), ""),
            HierarchyEdge::new("B2", Some("B"), ""),
        ])
        .unwrap();
        let mut chi2 = vec![0.0; h.len()];
        for (code, v) in [("ROOT", 1.0), ("A", 5.0), ("B", 2.0), ("B1", 3.0), ("B2", 0.0)] {
            chi2[h.id(code).unwrap().index()] = v;
        }
        (h, chi2)
    }

    fn cut_codes(h: &TypeHierarchy, chi2: &[f64], r: f64, post: bool) -> Vec<String> {
        let c = informative_cut(h, chi2, CutParams::new(r).unwrap());
        c.codes(h, post).into_iter().map(String::from).collect()
    }

    #[test]
    fn hand_traced_cuts() {
        let (h, chi2) = fixture();
        assert_eq!(cut_codes(&h, &chi2, 0.0, false), ["A", "B1", "B2"]);
        assert_eq!(cut_codes(&h, &chi2, 0.0, true), ["A", "B1"]);
        assert_eq!(cut_codes(&h, &chi2, 0.5, false), ["A", "B"]);
        assert_eq!(cut_codes(&h, &chi2, 0.5, true), ["A", "B"]);
        assert_eq!(cut_codes(&h, &chi2, 1.0, false), ["ROOT"]);
    }

    #[test]
    fn ratio_examples() {
        let h = TypeHierarchy::build([
            HierarchyEdge::new("J", None, ""),
            HierarchyEdge::new("C1", Some("J"), ""),
            HierarchyEdge::new("C2", Some("J"), ""),
            HierarchyEdge::new("C3", Some("J"), ""),
        ])
        .unwrap();
        let ratio = |vals: [f64; 4]| comparison_ratio(&h, &vals, h.root()).unwrap();
        assert!((ratio([5.0, 6.0, 3.0, 4.0]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(ratio([5.0, 1.0, 2.0, 5.0]), 0.0);
        assert_eq!(ratio([5.0, 5.0, 5.0, 5.0]), 0.0);
        assert!(matches!(
            comparison_ratio(&h, &[0.0; 4], h.id("C1").unwrap()),
            Err(CutError::LeafNode(_))
        ));
    }

    #[test]
    fn bad_r_rejected() {
        assert!(CutParams::new(-0.1).is_err());
        assert!(CutParams::new(1.5).is_err());
        assert!(CutParams::new(f64::NAN).is_err());
    }

    #[test]
    fn scent_examples() {
        let h = TypeHierarchy::build([
            HierarchyEdge::new("ROOT", None, ""),
            HierarchyEdge::new("A", Some("ROOT"), ""),
            HierarchyEdge::new("B", Some("ROOT"), ""),
            HierarchyEdge::new("B1", Some("B"), ""),
            HierarchyEdge::new("B2", Some("B"), ""),
        ])
        .unwrap();
        let mut rho = vec![0.0; h.len()];
        for (code, v) in [("A", 0.5), ("B", 0.1), ("B1", 0.3), ("B2", -0.1)] {
            rho[h.id(code).unwrap().index()] = v;
        }
        let s = scent(&h, &rho);
        let at = |c: &str| s[h.id(c).unwrap().index()];
        assert_eq!(at("A"), 0.0);
        assert!((at("B") - 0.4).abs() < 1e-12);
        assert!((at("ROOT") - 0.4).abs() < 1e-12);
    }
}
