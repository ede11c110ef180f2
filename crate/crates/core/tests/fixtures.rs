//! Demo datasets reproduce their documented counts.

use std::sync::Arc;

use eventscope_core::fixtures::{self, *};
use eventscope_core::timeline::{EdgeId, Selection};
use eventscope_core::{context_window, execute_query, stats_for_all_types, AnalyticContext, TimelineModel};

#[test]
fn heart_failure_counts() {
    let ds = fixtures::heart_failure().unwrap();
    assert_eq!(ds.entities.len(), HF_ENTITIES);
    let h = &ds.hierarchy;
    let i50 = h.id("I50").unwrap();
    let mut carriers = 0;
    let mut subtree_events = 0;
    let mut generic = 0;
    for e in &ds.entities {
        let n = e.events.iter().filter(|ev| h.in_subtree(i50, ev.node)).count();
        carriers += usize::from(n > 0);
        subtree_events += n;
        generic += e.events.iter().filter(|ev| ev.node == i50).count();
    }
    assert_eq!(carriers, HF_CARRIERS);
    assert_eq!(subtree_events, HF_EVENTS);
    assert_eq!(generic, HF_GENERIC);
    let distinct: std::collections::BTreeSet<_> = ds
        .entities
        .iter()
        .flat_map(|e| &e.events)
        .filter(|ev| h.in_subtree(i50, ev.node) && ev.node != i50)
        .map(|ev| ev.node)
        .collect();
    assert_eq!(distinct.len(), 13);

    let cohort = execute_query(&ds, &heart_failure_query()).unwrap();
    assert_eq!(cohort.len(), HF_ENTITIES);
}

fn use_case_cohort() -> Arc<eventscope_core::Cohort> {
    let ds = fixtures::use_case().unwrap();
    assert_eq!(ds.entities.len(), UC_TOTAL);
    Arc::new(execute_query(&ds, &use_case_query()).unwrap())
}

#[test]
fn use_case_cohort_and_windows() {
    let cohort = use_case_cohort();
    assert_eq!(cohort.len(), UC_COHORT);
    assert_eq!(cohort.positives(), UC_POSITIVE);

    let tl = TimelineModel::build(&cohort);
    // lookback edge plus pain -> discharge
    assert_eq!(tl.edges.len(), 2);
    let h = &cohort.hierarchy;
    let seq = |sel: &Selection, code: &str| {
        let ctx = context_window(&cohort, &tl, sel).unwrap();
        stats_for_all_types(&ctx).unwrap().get(h.id(code).unwrap()).seq_count as usize
    };
    let stay = Selection::Edge(EdgeId(1));
    assert_eq!(seq(&stay, "DX.SUB"), UC_SUBSTANCE_IN_STAY);
    assert_eq!(seq(&stay, "NIC"), UC_NICOTINE_IN_STAY);
    assert_eq!(seq(&stay, "PX.HEART"), UC_HEART_IN_STAY);
    assert_eq!(seq(&stay, "ECG"), UC_ECG_IN_STAY);
    // only the discharge anchor itself falls in the stay
    assert_eq!(seq(&stay, "ENC.DISCH"), UC_COHORT);
    assert_eq!(seq(&stay, "DX.PAIN"), 0);

    let lookback = Selection::Edge(EdgeId(0));
    assert_eq!(seq(&lookback, "DX.SUB"), UC_SUBSTANCE_LOOKBACK);
    assert_eq!(seq(&lookback, "ENC.DISCH"), UC_PRIOR_DISCHARGE);

    let ctx = context_window(&cohort, &tl, &stay).unwrap();
    let t = stats_for_all_types(&ctx).unwrap();
    let rho = |c: &str| t.get(h.id(c).unwrap()).correlation;
    assert!(rho("NIC") > 0.1 && rho("NIC") < 0.15, "NIC {}", rho("NIC"));
    assert!(rho("DX.SUB") > rho("NIC"));
    assert!(rho("PX.HEART") > 0.2);

    let whole = stats_for_all_types(&AnalyticContext::whole_record(cohort.clone())).unwrap();
    assert_eq!(whole.get(h.id("DX.PAIN").unwrap()).seq_count as usize, UC_COHORT);
}

#[test]
fn milestone_on_substance_abuse_splits_stay() {
    let cohort = use_case_cohort();
    let tl = TimelineModel::build(&cohort);
    let next = tl.add_milestone(&cohort, EdgeId(1), "DX.SUB").unwrap();
    let m = next.milestones.iter().find(|m| m.code == "DX.SUB").unwrap();
    assert_eq!(m.stats.members, UC_SUBSTANCE_IN_STAY);
    let bypass: usize = next
        .edges
        .iter()
        .filter(|e| e.kind == eventscope_core::timeline::EdgeKind::Bypass)
        .map(|e| e.stats.members)
        .sum();
    assert_eq!(bypass, UC_COHORT - UC_SUBSTANCE_IN_STAY);
}

#[test]
fn fixtures_are_deterministic() {
    assert_eq!(fixtures::use_case_tables(), fixtures::use_case_tables());
}
