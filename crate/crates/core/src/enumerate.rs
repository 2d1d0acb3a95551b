//! Exhaustive enumeration of `{+, -, D}^6` and the GHZ constraint filter.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::types::{DiscreteSetting, HiddenTuple, Outcome, ProductObservable};

/// The reference 48-tuple table, one tuple per line in canonical order.
pub const TABLE_ONE: &str = include_str!("../fixtures/table1.txt");

/// Cardinalities of the allowed tuples grouped by how many of the eight
/// settings give a triple coincidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub total: usize,
    pub allowed: usize,
    pub by_coincidence_count: BTreeMap<u8, usize>,
}

impl Partition {
    /// `total=729 allowed=409 c0=217 c1=48 c2=96 c4=48`
    pub fn summary_line(&self) -> String {
        let mut line = format!("total={} allowed={}", self.total, self.allowed);
        for (count, n) in &self.by_coincidence_count {
            line.push_str(&format!(" c{count}={n}"));
        }
        line
    }
}

/// All 729 tuples in canonical order.
pub fn enumerate_all() -> Vec<HiddenTuple> {
    let mut out = Vec::with_capacity(729);
    for code in 0..729u32 {
        let mut slots = [Outcome::Minus; 6];
        let mut rest = code;
        // most significant base-3 digit first, so `code` order is lexicographic
        for slot in slots.iter_mut().rev() {
            *slot = Outcome::ALL[(rest % 3) as usize];
            rest /= 3;
        }
        out.push(HiddenTuple(slots));
    }
    out
}

/// A constrained setting is vacuous when any of its three slots is `D`;
/// otherwise the slot product must equal the observable's required value.
pub fn satisfies_ghz_constraints(t: &HiddenTuple) -> bool {
    ProductObservable::ALL.iter().all(|obs| {
        let outcomes = t.outcomes(obs.setting());
        match outcomes
            .iter()
            .map(|o| o.value())
            .collect::<Option<Vec<i8>>>()
        {
            None => true,
            Some(values) => values.iter().product::<i8>() == obs.required_value(),
        }
    })
}

/// Number of the eight settings in which all three read-out slots fire.
pub fn coincidence_setup_count(t: &HiddenTuple) -> u8 {
    DiscreteSetting::all()
        .iter()
        .filter(|s| t.outcomes(**s).iter().all(|o| o.is_detected()))
        .count() as u8
}

pub fn allowed_tuples() -> Vec<HiddenTuple> {
    enumerate_all()
        .into_iter()
        .filter(satisfies_ghz_constraints)
        .collect()
}

pub fn classify_allowed() -> Partition {
    let all = enumerate_all();
    let mut by_coincidence_count = BTreeMap::new();
    let mut allowed = 0;
    for t in all.iter().filter(|t| satisfies_ghz_constraints(t)) {
        allowed += 1;
        *by_coincidence_count
            .entry(coincidence_setup_count(t))
            .or_insert(0) += 1;
    }
    Partition {
        total: all.len(),
        allowed,
        by_coincidence_count,
    }
}

/// The 48 allowed tuples that coincide in four settings, canonically sorted.
pub fn build_lambda48() -> Vec<HiddenTuple> {
    allowed_tuples()
        .into_iter()
        .filter(|t| coincidence_setup_count(t) == 4)
        .collect()
}

/// Parses a fixture file (one tuple per line, blank lines ignored).
pub fn parse_fixture(text: &str) -> Result<Vec<HiddenTuple>, crate::types::TupleParseError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(crate::types::parse_tuple)
        .collect()
}

/// Line-by-line comparison of a generated list against a reference list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureComparison {
    pub expected: usize,
    pub generated: usize,
    pub matching: usize,
    /// `(1-based index, expected, generated)` for each differing line.
    pub mismatches: Vec<(usize, Option<HiddenTuple>, Option<HiddenTuple>)>,
}

impl FixtureComparison {
    pub fn is_exact(&self) -> bool {
        self.mismatches.is_empty() && self.expected == self.generated
    }
}

pub fn compare_with_fixture(generated: &[HiddenTuple], expected: &[HiddenTuple]) -> FixtureComparison {
    let len = generated.len().max(expected.len());
    let mut mismatches = Vec::new();
    let mut matching = 0;
    for n in 0..len {
        let (e, g) = (expected.get(n).copied(), generated.get(n).copied());
        if e == g {
            matching += 1;
        } else {
            mismatches.push((n + 1, e, g));
        }
    }
    FixtureComparison {
        expected: expected.len(),
        generated: generated.len(),
        matching,
        mismatches,
    }
}
