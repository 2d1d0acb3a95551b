//! Integer tallies and the post-selected estimates derived from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Schedule, SimError, TrialRecord};
use crate::discrete::dbs_inequality;
use crate::types::{DiscreteSetting, OutcomeSign, ProductObservable, Sign};

/// Which coincidences define the post-selected sub-ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// All three stations fire.
    Triple,
    /// All three stations and the trigger fire.
    Fourfold,
}

/// Raw counts for one setting group.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroupTally {
    pub emitted: u64,
    pub triple: [u64; 8],
    pub fourfold: [u64; 8],
}

impl GroupTally {
    pub fn counts(&self, selection: Selection) -> &[u64; 8] {
        match selection {
            Selection::Triple => &self.triple,
            Selection::Fourfold => &self.fourfold,
        }
    }

    pub fn selected(&self, selection: Selection) -> u64 {
        self.counts(selection).iter().sum()
    }

    fn merge(&mut self, other: &GroupTally) {
        self.emitted += other.emitted;
        for k in 0..8 {
            self.triple[k] += other.triple[k];
            self.fourfold[k] += other.fourfold[k];
        }
    }
}

/// Mergeable integer counters, one group per schedule setting or bin.
///
/// Merging only adds integers, so the result is independent of the order in
/// which partial tallies are combined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    pub groups: Vec<GroupTally>,
}

impl Tally {
    pub fn new(groups: usize) -> Self {
        Self {
            groups: vec![GroupTally::default(); groups],
        }
    }

    pub fn record(&mut self, group: usize, r: &TrialRecord) {
        let g = &mut self.groups[group];
        g.emitted += 1;
        let signs: Option<Vec<Sign>> = r.observed.iter().map(|o| o.sign()).collect();
        if let Some(s) = signs {
            let k = OutcomeSign::new(s[0], s[1], s[2]).index();
            g.triple[k] += 1;
            if r.trigger {
                g.fourfold[k] += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &Tally) {
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            a.merge(b);
        }
    }

    pub fn emitted(&self) -> u64 {
        self.groups.iter().map(|g| g.emitted).sum()
    }

    pub fn triple(&self) -> u64 {
        self.groups.iter().map(|g| g.selected(Selection::Triple)).sum()
    }

    pub fn fourfold(&self) -> u64 {
        self.groups.iter().map(|g| g.selected(Selection::Fourfold)).sum()
    }

    /// Post-selected estimates. Fails when nothing was selected at all, or
    /// when a GHZ setting was run but none of its trials was selected.
    pub fn estimate(
        &self,
        schedule: &Schedule,
        selection: Selection,
        seed: u64,
    ) -> Result<CoincidenceStats, SimError> {
        let labels = schedule.group_labels();
        let mut settings = Vec::with_capacity(self.groups.len());
        for (idx, (g, label)) in self.groups.iter().zip(&labels).enumerate() {
            settings.push(SettingStats::from_tally(label, schedule.group_angles(idx), g, selection));
        }

        let n_selected: u64 = settings.iter().map(|s| s.selected).sum();
        if n_selected == 0 {
            let names = settings.iter().map(|s| s.label.clone()).collect::<Vec<_>>();
            return Err(SimError::InsufficientData(if names.is_empty() {
                vec!["no trials".into()]
            } else {
                names
            }));
        }

        let mut expectations = BTreeMap::new();
        let mut starved = Vec::new();
        for obs in ProductObservable::ALL {
            let target = obs.setting();
            let mut counts = [0u64; 8];
            let mut emitted = 0;
            for (g, s) in self.groups.iter().zip(&settings) {
                let matches = s
                    .angles
                    .and_then(DiscreteSetting::from_radians)
                    .is_some_and(|d| d == target);
                if matches {
                    emitted += g.emitted;
                    for (c, n) in counts.iter_mut().zip(g.counts(selection)) {
                        *c += n;
                    }
                }
            }
            if emitted == 0 {
                continue;
            }
            match product_mean(&counts) {
                Some(e) => {
                    expectations.insert(obs.name().to_string(), e);
                }
                None => starved.push(format!("{} ({target})", obs.name())),
            }
        }
        if !starved.is_empty() {
            return Err(SimError::InsufficientData(starved));
        }

        let e = |k: usize| expectations.get(ProductObservable::ALL[k].name()).copied();
        let epsilon = match (e(0), e(1), e(2)) {
            (Some(a), Some(b), Some(c)) => Some(1.0 - (a + b + c) / 3.0),
            _ => None,
        };
        let dbs_statistic = match (e(0), e(1), e(2), e(3)) {
            (Some(a), Some(b), Some(c), Some(d)) => dbs_inequality(a, b, c, d).ok().map(|r| r.statistic),
            _ => None,
        };

        Ok(CoincidenceStats {
            seed,
            selection,
            n_emitted: self.emitted(),
            n_triple: self.triple(),
            n_fourfold: self.fourfold(),
            n_selected,
            settings,
            expectations,
            epsilon,
            dbs_statistic,
        })
    }
}

/// Mean of the sign product over counts indexed like [`OutcomeSign::all`].
fn product_mean(counts: &[u64; 8]) -> Option<f64> {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return None;
    }
    let mut signed: i64 = 0;
    for (s, &c) in OutcomeSign::all().iter().zip(counts) {
        signed += s.product().value() as i64 * c as i64;
    }
    Some(signed as f64 / n as f64)
}

/// Post-selected statistics of one setting group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingStats {
    pub label: String,
    /// The setting angles, or `None` for a bin of random settings.
    pub angles: Option<[f64; 3]>,
    pub emitted: u64,
    pub triple: u64,
    pub fourfold: u64,
    pub selected: u64,
    /// Selected counts keyed by `ijk`.
    pub counts: BTreeMap<String, u64>,
    /// `n(ijk) / selected`; absent when nothing was selected.
    pub conditional: Option<BTreeMap<String, f64>>,
    /// `triple / emitted`.
    pub triple_rate: Option<f64>,
    pub product_expectation: Option<f64>,
}

impl SettingStats {
    fn from_tally(label: &str, angles: Option<[f64; 3]>, g: &GroupTally, selection: Selection) -> Self {
        let counts_arr = g.counts(selection);
        let selected = g.selected(selection);
        let names = OutcomeSign::all().map(|s| s.to_string());
        let counts = names.iter().cloned().zip(counts_arr.iter().copied()).collect();
        let conditional = (selected > 0).then(|| {
            names
                .iter()
                .cloned()
                .zip(counts_arr.iter().map(|&c| c as f64 / selected as f64))
                .collect()
        });
        let triple = g.selected(Selection::Triple);
        Self {
            label: label.to_string(),
            angles,
            emitted: g.emitted,
            triple,
            fourfold: g.selected(Selection::Fourfold),
            selected,
            counts,
            conditional,
            triple_rate: (g.emitted > 0).then(|| triple as f64 / g.emitted as f64),
            product_expectation: product_mean(counts_arr),
        }
    }

    pub fn count(&self, signs: OutcomeSign) -> u64 {
        self.counts.get(&signs.to_string()).copied().unwrap_or(0)
    }

    pub fn frequency(&self, signs: OutcomeSign) -> Option<f64> {
        self.conditional.as_ref().and_then(|c| c.get(&signs.to_string()).copied())
    }
}

/// Estimates on the post-selected sub-ensemble of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceStats {
    pub seed: u64,
    pub selection: Selection,
    pub n_emitted: u64,
    pub n_triple: u64,
    pub n_fourfold: u64,
    pub n_selected: u64,
    pub settings: Vec<SettingStats>,
    /// `E(Ω)` keyed by observable name, for the GHZ settings that were run.
    pub expectations: BTreeMap<String, f64>,
    /// `1 − (E(Ω1) + E(Ω2) + E(Ω3)) / 3`.
    pub epsilon: Option<f64>,
    /// `E(Ω1) + E(Ω2) + E(Ω3) − E(Ω4)`.
    pub dbs_statistic: Option<f64>,
}

impl CoincidenceStats {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("stats serialise");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::InvalidConfig(format!("stats file: {e}")))
    }

    pub fn expectation(&self, obs: ProductObservable) -> Option<f64> {
        self.expectations.get(obs.name()).copied()
    }

    pub fn setting(&self, label: &str) -> Option<&SettingStats> {
        self.settings.iter().find(|s| s.label == label)
    }

    /// Plain-text summary for the console.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed {}  selection {:?}", self.seed, self.selection);
        let _ = writeln!(
            out,
            "emitted {}  triple {}  fourfold {}  selected {}",
            self.n_emitted, self.n_triple, self.n_fourfold, self.n_selected
        );
        let _ = writeln!(out, "{:<22} {:>10} {:>10} {:>9} {:>8}", "setting", "emitted", "selected", "rate", "E");
        for s in &self.settings {
            let rate = s.triple_rate.map_or("-".into(), |r| format!("{r:.5}"));
            let e = s.product_expectation.map_or("-".into(), |e| format!("{e:+.4}"));
            let _ = writeln!(out, "{:<22} {:>10} {:>10} {:>9} {:>8}", s.label, s.emitted, s.selected, rate, e);
        }
        for (name, e) in &self.expectations {
            let _ = writeln!(out, "E({name}) = {e:+.6}");
        }
        if let Some(eps) = self.epsilon {
            let _ = writeln!(out, "epsilon = {eps:.6}");
        }
        if let Some(d) = self.dbs_statistic {
            let verdict = if d.abs() > 2.0 { "violates" } else { "satisfies" };
            let _ = writeln!(out, "dbs statistic = {d:.6} ({verdict} |.| <= 2)");
        }
        out
    }
}

/// Tallies and estimates a set of records against a schedule.
pub fn estimate_stats(
    records: &[TrialRecord],
    schedule: &Schedule,
    selection: Selection,
    seed: u64,
) -> Result<CoincidenceStats, SimError> {
    let mut tally = Tally::new(schedule.group_count());
    for r in records {
        let group = schedule
            .group_of(r.settings)
            .ok_or_else(|| SimError::InvalidConfig(format!("trial {} has unscheduled settings", r.trial_id)))?;
        tally.record(group, r);
    }
    tally.estimate(schedule, selection, seed)
}
