//! Built-in demo datasets.
//!
//! * [`heart_failure`]: 16,983 diabetes patients of whom 5,084 carry heart
//!   failure codes (`I50` family), with 26,153 such events in total and
//!   10,739 of them coded as plain `I50`.
//! * [`use_case`]: a small clinical hierarchy with pain diagnoses, hospital
//!   discharges, substance abuse, heart procedures and opiate-related
//!   disorders. Querying pain followed by discharge with a one-year lookback
//!   yields 1,732 patients, 121 of whom (7%) develop an opiate-related
//!   disorder after discharge; 360 have a substance-abuse diagnosis between
//!   pain and discharge.
//!
//! Both are produced as CSV tables and ingested like user data.

use std::fmt::Write as _;

use chrono::{Days, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{ingest, DataSource, Dataset, DatasetManifest, IngestError};
use crate::model::TypeHierarchy;
use crate::query::{OutcomeSpec, QuerySpec};

/// Hierarchy, events and attributes as CSV text.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureTables {
    pub hierarchy: String,
    pub events: String,
    pub attributes: String,
}

impl FixtureTables {
    pub fn ingest(&self, dataset_id: &str) -> Result<Dataset, IngestError> {
        ingest(&DatasetManifest {
            dataset_id: dataset_id.to_owned(),
            hierarchy: DataSource::Inline(self.hierarchy.clone()),
            events: DataSource::Inline(self.events.clone()),
            attributes: Some(DataSource::Inline(self.attributes.clone())),
        })
    }
}

struct TableWriter {
    events: String,
    attributes: String,
}

impl TableWriter {
    fn new() -> Self {
        TableWriter {
            events: "entity_id,type_code,timestamp\n".to_owned(),
            attributes: "entity_id,age,sex\n".to_owned(),
        }
    }

    fn event(&mut self, entity: &str, code: &str, date: NaiveDate) {
        writeln!(self.events, "{entity},{code},{date}").expect("write to string");
    }

    fn person(&mut self, entity: &str, rng: &mut ChaCha8Rng) {
        let sex = if rng.random_bool(0.5) { "F" } else { "M" };
        writeln!(self.attributes, "{entity},{},{sex}", rng.random_range(18..=90)).expect("write to string");
    }
}

fn day(base: NaiveDate, offset: i64) -> NaiveDate {
    if offset >= 0 {
        base + Days::new(offset as u64)
    } else {
        base - Days::new(offset.unsigned_abs())
    }
}

fn hierarchy_csv(h: &TypeHierarchy) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["code", "parent", "label"]).expect("in-memory write");
    for e in h.edges() {
        w.write_record([e.code, e.parent.unwrap_or_default(), e.label]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub const HF_ENTITIES: usize = 16_983;
pub const HF_CARRIERS: usize = 5_084;
pub const HF_EVENTS: usize = 26_153;
pub const HF_GENERIC: usize = 10_739;

/// The thirteen specific heart-failure codes with their event counts
/// (summing to 26,153 - 10,739 = 15,414).
pub const HF_SPECIFIC: [(&str, usize); 13] = [
    ("I50.1", 512),
    ("I50.20", 1_406),
    ("I50.21", 402),
    ("I50.22", 2_311),
    ("I50.23", 1_208),
    ("I50.30", 1_517),
    ("I50.31", 386),
    ("I50.32", 2_604),
    ("I50.33", 1_139),
    ("I50.40", 297),
    ("I50.41", 158),
    ("I50.42", 603),
    ("I50.9", 2_871),
];

const HF_OTHER: [&str; 5] = ["E78.5", "I10", "N18.3", "N18.4", "Z79.4"];

pub fn heart_failure_tables() -> FixtureTables {
    let mut rng = ChaCha8Rng::seed_from_u64(16_983);
    let mut codes: Vec<&str> = vec!["E11", "E11.9", "I21", "I50"];
    codes.extend(HF_SPECIFIC.iter().map(|(c, _)| *c));
    codes.extend(HF_OTHER);
    let h = TypeHierarchy::from_prefix_codes(&codes).expect("static code list");

    let mut hf_codes: Vec<&str> = vec!["I50"; HF_GENERIC];
    for (code, n) in HF_SPECIFIC {
        hf_codes.extend(std::iter::repeat_n(code, n));
    }
    debug_assert_eq!(hf_codes.len(), HF_EVENTS);
    hf_codes.shuffle(&mut rng);

    let mut patients: Vec<usize> = (0..HF_ENTITIES).collect();
    patients.shuffle(&mut rng);
    let mut per_patient = vec![0usize; HF_ENTITIES];
    for &p in &patients[..HF_CARRIERS] {
        per_patient[p] = 1;
    }
    for _ in HF_CARRIERS..HF_EVENTS {
        per_patient[patients[rng.random_range(0..HF_CARRIERS)]] += 1;
    }

    let base = NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date");
    let mut w = TableWriter::new();
    let mut next_hf = 0;
    for (p, &count) in per_patient.iter().enumerate() {
        let id = format!("HF{p:05}");
        w.person(&id, &mut rng);
        let start = day(base, rng.random_range(0..1_460));
        w.event(&id, if rng.random_bool(0.3) { "E11.9" } else { "E11" }, start);
        let mut t = 0;
        for _ in 0..count {
            t += rng.random_range(1..90);
            w.event(&id, hf_codes[next_hf], day(start, t));
            next_hf += 1;
        }
        for _ in 0..rng.random_range(0..4) {
            w.event(&id, HF_OTHER.choose(&mut rng).expect("non-empty"), day(start, rng.random_range(1..900)));
        }
        if rng.random_bool(if count > 0 { 0.18 } else { 0.06 }) {
            w.event(&id, "I21", day(start, rng.random_range(30..1_200)));
        }
    }
    FixtureTables { hierarchy: hierarchy_csv(&h), events: w.events, attributes: w.attributes }
}

pub fn heart_failure() -> Result<Dataset, IngestError> {
    heart_failure_tables().ingest("heart-failure")
}

/// Diabetes cohort over full records, labeled by later myocardial infarction.
pub fn heart_failure_query() -> QuerySpec {
    QuerySpec {
        inclusion: vec!["E11".into()],
        attribute_constraints: Vec::new(),
        lookback_days: 0,
        outcome: OutcomeSpec { codes: vec!["I21".into()], relation: Default::default() },
    }
}

/// `(code, parent, label)` rows of the demo clinical hierarchy.
pub const USE_CASE_HIERARCHY: &[(&str, &str, &str)] = &[
    ("ROOT", "", "All event types"),
    ("DX", "ROOT", "Diagnoses"),
    ("DX.PAIN", "DX", "Pain"),
    ("G89", "DX.PAIN", "Chronic pain"),
    ("M54", "DX.PAIN", "Back pain"),
    ("R52", "DX.PAIN", "Pain, unspecified"),
    ("DX.SUB", "DX", "Substance abuse"),
    ("NIC", "DX.SUB", "Nicotine dependence"),
    ("NIC.CIG", "NIC", "Nicotine dependence, cigarettes"),
    ("ALC", "DX.SUB", "Alcohol abuse"),
    ("CAN", "DX.SUB", "Cannabis abuse"),
    ("DX.OPI", "DX", "Opiate-related disorders"),
    ("OPI.ABU", "DX.OPI", "Opioid abuse"),
    ("OPI.DEP", "DX.OPI", "Opioid dependence"),
    ("DX.CIRC", "DX", "Circulatory diseases"),
    ("I10", "DX.CIRC", "Essential hypertension"),
    ("I25", "DX.CIRC", "Chronic ischemic heart disease"),
    ("DX.RESP", "DX", "Respiratory diseases"),
    ("J44", "DX.RESP", "Chronic obstructive pulmonary disease"),
    ("J45", "DX.RESP", "Asthma"),
    ("DX.MENT", "DX", "Mental disorders"),
    ("F32", "DX.MENT", "Depressive episode"),
    ("F41", "DX.MENT", "Anxiety disorder"),
    ("PX", "ROOT", "Procedures"),
    ("PX.HEART", "PX", "Heart procedures"),
    ("ECG", "PX.HEART", "Electrocardiogram"),
    ("ECHO", "PX.HEART", "Echocardiogram"),
    ("PX.IMG", "PX", "Imaging"),
    ("CT", "PX.IMG", "Computed tomography"),
    ("MRI", "PX.IMG", "Magnetic resonance imaging"),
    ("XR", "PX.IMG", "Radiography"),
    ("PX.LAB", "PX", "Laboratory tests"),
    ("BMP", "PX.LAB", "Basic metabolic panel"),
    ("CBC", "PX.LAB", "Complete blood count"),
    ("ENC", "ROOT", "Encounters"),
    ("ENC.DISCH", "ENC", "Hospital discharge"),
    ("DISCH.HOME", "ENC.DISCH", "Discharged home"),
    ("DISCH.SNF", "ENC.DISCH", "Discharged to skilled nursing facility"),
    ("ENC.ED", "ENC", "Emergency department visit"),
    ("ENC.OUT", "ENC", "Outpatient visit"),
];

pub const UC_TOTAL: usize = 2_400;
pub const UC_COHORT: usize = 1_732;
pub const UC_POSITIVE: usize = 121;
pub const UC_SUBSTANCE_IN_STAY: usize = 360;
pub const UC_NICOTINE_IN_STAY: usize = 330;
pub const UC_SUBSTANCE_LOOKBACK: usize = 240;
pub const UC_HEART_IN_STAY: usize = 148;
pub const UC_ECG_IN_STAY: usize = 138;
pub const UC_PRIOR_DISCHARGE: usize = 800;

const FILLERS: [&str; 14] =
    ["BMP", "CBC", "CT", "ENC.ED", "ENC.OUT", "F32", "F41", "I10", "I25", "J44", "J45", "MRI", "XR", "ENC.OUT"];
const PAIN: [&str; 3] = ["G89", "M54", "R52"];
const DISCHARGE: [&str; 2] = ["DISCH.HOME", "DISCH.SNF"];
const OPIATE: [&str; 2] = ["OPI.ABU", "OPI.DEP"];

/// `k` members of `pool` (order kept) chosen at random.
fn pick(rng: &mut ChaCha8Rng, pool: &[usize], k: usize) -> Vec<usize> {
    let mut v: Vec<usize> = pool.choose_multiple(rng, k).copied().collect();
    v.sort_unstable();
    v
}

fn flags(n: usize, members: &[usize]) -> Vec<bool> {
    let mut f = vec![false; n];
    for &m in members {
        f[m] = true;
    }
    f
}

pub fn use_case_tables() -> FixtureTables {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let h = TypeHierarchy::build(
        USE_CASE_HIERARCHY
            .iter()
            .map(|&(c, p, l)| crate::model::HierarchyEdge::new(c, (!p.is_empty()).then_some(p), l)),
    )
    .expect("static hierarchy");

    // cohort member k has the k-th id of a shuffled list
    let mut ids: Vec<usize> = (0..UC_TOTAL).collect();
    ids.shuffle(&mut rng);
    let name = |i: usize| format!("P{:04}", ids[i]);

    let members: Vec<usize> = (0..UC_COHORT).collect();
    let positive = pick(&mut rng, &members, UC_POSITIVE);
    let is_pos = flags(UC_COHORT, &positive);
    let negative: Vec<usize> = members.iter().copied().filter(|&m| !is_pos[m]).collect();

    // substance abuse during the stay: 330 with nicotine (45 positive),
    // 30 more with alcohol or cannabis only (15 positive)
    let mut nicotine = pick(&mut rng, &positive, 45);
    nicotine.extend(pick(&mut rng, &negative, UC_NICOTINE_IN_STAY - 45));
    let is_nic = flags(UC_COHORT, &nicotine);
    let pos_rest: Vec<usize> = positive.iter().copied().filter(|&m| !is_nic[m]).collect();
    let neg_rest: Vec<usize> = negative.iter().copied().filter(|&m| !is_nic[m]).collect();
    let mut other_sub = pick(&mut rng, &pos_rest, 15);
    other_sub.extend(pick(&mut rng, &neg_rest, UC_SUBSTANCE_IN_STAY - UC_NICOTINE_IN_STAY - 15));
    let is_other_sub = flags(UC_COHORT, &other_sub);

    let mut lookback_sub = pick(&mut rng, &positive, 30);
    lookback_sub.extend(pick(&mut rng, &negative, UC_SUBSTANCE_LOOKBACK - 30));
    let is_lb_sub = flags(UC_COHORT, &lookback_sub);

    let mut heart = pick(&mut rng, &positive, 40);
    heart.extend(pick(&mut rng, &negative, UC_HEART_IN_STAY - 40));
    let ecg = pick(&mut rng, &heart, UC_ECG_IN_STAY);
    let is_heart = flags(UC_COHORT, &heart);
    let is_ecg = flags(UC_COHORT, &ecg);

    let is_prior_disch = flags(UC_COHORT, &pick(&mut rng, &members, UC_PRIOR_DISCHARGE));
    let early_opiate = flags(UC_COHORT, &pick(&mut rng, &negative, 40));

    let base = NaiveDate::from_ymd_opt(2016, 1, 1).expect("valid date");
    let mut w = TableWriter::new();
    for m in 0..UC_COHORT {
        let id = name(m);
        w.person(&id, &mut rng);
        let pain = day(base, rng.random_range(0..730));
        let stay = rng.random_range(2..=30);
        let discharge = day(pain, stay);
        let in_stay = |rng: &mut ChaCha8Rng| day(pain, rng.random_range(1..=stay));
        let in_lookback = |rng: &mut ChaCha8Rng| day(pain, -rng.random_range(1..=365));

        w.event(&id, PAIN.choose(&mut rng).expect("non-empty"), pain);
        w.event(&id, DISCHARGE.choose(&mut rng).expect("non-empty"), discharge);
        if is_nic[m] {
            let code = if rng.random_bool(0.8) { "NIC.CIG" } else { "NIC" };
            let d = in_stay(&mut rng);
            w.event(&id, code, d);
            if rng.random_bool(0.15) {
                let d = in_stay(&mut rng);
                w.event(&id, "ALC", d);
            }
        }
        if is_other_sub[m] {
            let d = in_stay(&mut rng);
            w.event(&id, if rng.random_bool(0.6) { "ALC" } else { "CAN" }, d);
        }
        if is_lb_sub[m] {
            let d = in_lookback(&mut rng);
            w.event(&id, ["NIC.CIG", "ALC", "CAN"].choose(&mut rng).expect("non-empty"), d);
        }
        if is_heart[m] {
            let d = in_stay(&mut rng);
            w.event(&id, if is_ecg[m] { "ECG" } else { "ECHO" }, d);
            if is_ecg[m] && rng.random_bool(0.1) {
                let d = in_stay(&mut rng);
                w.event(&id, "ECHO", d);
            }
        }
        if is_prior_disch[m] {
            let d = in_lookback(&mut rng);
            w.event(&id, DISCHARGE.choose(&mut rng).expect("non-empty"), d);
        }
        if is_pos[m] {
            let d = day(discharge, rng.random_range(1..=400));
            w.event(&id, OPIATE.choose(&mut rng).expect("non-empty"), d);
        } else if early_opiate[m] {
            let d = in_lookback(&mut rng);
            w.event(&id, OPIATE.choose(&mut rng).expect("non-empty"), d);
        }
        for _ in 0..rng.random_range(3..=12) {
            let offset = rng.random_range(-365..=stay + 400);
            w.event(&id, FILLERS.choose(&mut rng).expect("non-empty"), day(pain, offset));
        }
    }

    // everyone else misses the ordered pain-then-discharge pattern
    for m in UC_COHORT..UC_TOTAL {
        let id = name(m);
        w.person(&id, &mut rng);
        let t = day(base, rng.random_range(0..730));
        match m % 3 {
            0 => {
                w.event(&id, DISCHARGE.choose(&mut rng).expect("non-empty"), t);
                w.event(&id, PAIN.choose(&mut rng).expect("non-empty"), day(t, rng.random_range(1..200)));
            }
            1 => w.event(&id, PAIN.choose(&mut rng).expect("non-empty"), t),
            _ => w.event(&id, DISCHARGE.choose(&mut rng).expect("non-empty"), t),
        }
        if rng.random_bool(0.1) {
            w.event(&id, OPIATE.choose(&mut rng).expect("non-empty"), day(t, rng.random_range(200..500)));
        }
        for _ in 0..rng.random_range(2..=8) {
            let offset = rng.random_range(-300..=300);
            w.event(&id, FILLERS.choose(&mut rng).expect("non-empty"), day(t, offset));
        }
    }
    FixtureTables { hierarchy: hierarchy_csv(&h), events: w.events, attributes: w.attributes }
}

pub fn use_case() -> Result<Dataset, IngestError> {
    use_case_tables().ingest("use-case")
}

/// Pain diagnosis followed by hospital discharge, one year of lookback,
/// labeled by a later opiate-related disorder.
pub fn use_case_query() -> QuerySpec {
    QuerySpec {
        inclusion: vec!["DX.PAIN".into(), "ENC.DISCH".into()],
        attribute_constraints: Vec::new(),
        lookback_days: 365,
        outcome: OutcomeSpec { codes: vec!["DX.OPI".into()], relation: Default::default() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specific_counts_add_up() {
        let specific: usize = HF_SPECIFIC.iter().map(|(_, n)| n).sum();
        assert_eq!(specific + HF_GENERIC, HF_EVENTS);
    }
}
