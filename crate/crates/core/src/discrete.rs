//! Exact probability calculus on a finite prism model.
//!
//! Every probability here is a [`Rational`], so identities such as `24/48 = 1/2`
//! are checked as equalities.

use std::fmt::{self, Write as _};

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::enumerate::build_lambda48;
use crate::types::{
    Angle, DiscreteSetting, HiddenTuple, Outcome, OutcomeSign, ProductObservable, Sign, Station,
};

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiscreteError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("event condition must constrain at least one station")]
    EmptyCondition,
    #[error("condition angle at station {station:?} disagrees with setting {setting}")]
    ConditionMismatch {
        station: Station,
        setting: DiscreteSetting,
    },
    #[error("triple-coincidence subset for setting {0} has zero weight")]
    UndefinedConditional(DiscreteSetting),
    #[error("expectation value {0} outside [-1, 1]")]
    OutOfRange(String),
}

/// A weighted set of hidden tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    tuples: Vec<HiddenTuple>,
    weights: Vec<Rational>,
}

impl DiscreteModel {
    pub fn new(tuples: Vec<HiddenTuple>, weights: Vec<Rational>) -> Result<Self, DiscreteError> {
        if tuples.is_empty() {
            return Err(DiscreteError::InvalidModel("no tuples".into()));
        }
        if tuples.len() != weights.len() {
            return Err(DiscreteError::InvalidModel(format!(
                "{} tuples but {} weights",
                tuples.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| w.is_negative()) {
            return Err(DiscreteError::InvalidModel(format!("negative weight {w}")));
        }
        let total: Rational = weights.iter().sum();
        if !total.is_one() {
            return Err(DiscreteError::InvalidModel(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { tuples, weights })
    }

    pub fn uniform(tuples: Vec<HiddenTuple>) -> Result<Self, DiscreteError> {
        let n = tuples.len() as i64;
        if n == 0 {
            return Err(DiscreteError::InvalidModel("no tuples".into()));
        }
        let weights = vec![Rational::new(1, n); tuples.len()];
        Self::new(tuples, weights)
    }

    /// The 48-tuple model with uniform weight 1/48.
    pub fn lambda48() -> Self {
        Self::uniform(build_lambda48()).expect("lambda48 is non-empty")
    }

    /// All weight on `tuples[index]`.
    pub fn point_mass(tuples: Vec<HiddenTuple>, index: usize) -> Result<Self, DiscreteError> {
        if index >= tuples.len() {
            return Err(DiscreteError::InvalidModel(format!(
                "index {index} out of {} tuples",
                tuples.len()
            )));
        }
        let mut weights = vec![Rational::zero(); tuples.len()];
        weights[index] = Rational::one();
        Self::new(tuples, weights)
    }

    pub fn tuples(&self) -> &[HiddenTuple] {
        &self.tuples
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn weight_of(&self, indices: &[usize]) -> Rational {
        indices.iter().map(|&i| self.weights[i]).sum()
    }

    /// Indices of the tuples meeting every requirement of `cond`.
    pub fn event_subset(&self, cond: &EventCondition) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| cond.matches(&self.tuples[i]))
            .collect()
    }

    /// Indices of the tuples that give a triple coincidence under `s`.
    pub fn triple_subset(&self, s: DiscreteSetting) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.tuples[i].outcomes(s).iter().all(|o| o.is_detected()))
            .collect()
    }

    pub fn triple_efficiency(&self, s: DiscreteSetting) -> Rational {
        self.weight_of(&self.triple_subset(s))
    }

    /// `p(event | triple coincidence under s)`.
    pub fn conditional_probability(
        &self,
        cond: &EventCondition,
        s: DiscreteSetting,
    ) -> Result<Rational, DiscreteError> {
        cond.check_against(s)?;
        let triple = self.triple_subset(s);
        let denominator = self.weight_of(&triple);
        if denominator.is_zero() {
            return Err(DiscreteError::UndefinedConditional(s));
        }
        let joint: Vec<usize> = triple
            .into_iter()
            .filter(|&i| cond.matches(&self.tuples[i]))
            .collect();
        Ok(self.weight_of(&joint) / denominator)
    }

    /// Probability of outcome `signs` given a triple coincidence under `s`.
    pub fn outcome_probability(
        &self,
        s: DiscreteSetting,
        signs: OutcomeSign,
    ) -> Result<Rational, DiscreteError> {
        self.conditional_probability(&EventCondition::outcome(s, signs), s)
    }

    /// Mean of the product of the three read-out values over the triple subset.
    pub fn product_expectation(&self, s: DiscreteSetting) -> Result<Rational, DiscreteError> {
        let triple = self.triple_subset(s);
        let denominator = self.weight_of(&triple);
        if denominator.is_zero() {
            return Err(DiscreteError::UndefinedConditional(s));
        }
        let numerator: Rational = triple
            .iter()
            .map(|&i| {
                let product: i64 = self.tuples[i]
                    .outcomes(s)
                    .iter()
                    .map(|o| o.value().expect("triple subset is detected") as i64)
                    .product();
                self.weights[i] * product
            })
            .sum();
        Ok(numerator / denominator)
    }

    pub fn observable_expectation(&self, obs: ProductObservable) -> Result<Rational, DiscreteError> {
        self.product_expectation(obs.setting())
    }

    /// Compares all 8 x 8 conditional probabilities with the quantum values.
    pub fn verify_against_quantum(&self) -> VerificationReport {
        let mut cases = Vec::with_capacity(64);
        for setting in DiscreteSetting::all() {
            for signs in OutcomeSign::all() {
                let model = self.outcome_probability(setting, signs).ok();
                let quantum = quantum_conditional(setting, signs);
                cases.push(VerificationCase {
                    setting,
                    signs,
                    model,
                    quantum,
                    matches: model == Some(quantum),
                });
            }
        }
        VerificationReport { cases }
    }
}

/// What a station must show for an event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Requirement {
    Plus,
    Minus,
    NonDefective,
}

impl Requirement {
    fn accepts(self, o: Outcome) -> bool {
        match self {
            Requirement::Plus => o == Outcome::Plus,
            Requirement::Minus => o == Outcome::Minus,
            Requirement::NonDefective => o.is_detected(),
        }
    }
}

impl From<Sign> for Requirement {
    fn from(s: Sign) -> Self {
        match s {
            Sign::Plus => Requirement::Plus,
            Sign::Minus => Requirement::Minus,
        }
    }
}

/// A conjunction of at most one requirement per station.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventCondition {
    requirements: [Option<(Angle, Requirement)>; 3],
}

impl EventCondition {
    pub fn new(requirements: [Option<(Angle, Requirement)>; 3]) -> Result<Self, DiscreteError> {
        if requirements.iter().all(Option::is_none) {
            return Err(DiscreteError::EmptyCondition);
        }
        Ok(Self { requirements })
    }

    pub fn single(station: Station, angle: Angle, req: Requirement) -> Self {
        let mut requirements = [None; 3];
        requirements[station.index()] = Some((angle, req));
        Self { requirements }
    }

    /// Adds (or replaces) the requirement at `station`.
    pub fn and(mut self, station: Station, angle: Angle, req: Requirement) -> Self {
        self.requirements[station.index()] = Some((angle, req));
        self
    }

    /// The full triple outcome `signs` under `s`.
    pub fn outcome(s: DiscreteSetting, signs: OutcomeSign) -> Self {
        Self {
            requirements: [
                Some((s.x, signs.i.into())),
                Some((s.y, signs.j.into())),
                Some((s.z, signs.k.into())),
            ],
        }
    }

    pub fn requirement(&self, station: Station) -> Option<(Angle, Requirement)> {
        self.requirements[station.index()]
    }

    pub fn matches(&self, t: &HiddenTuple) -> bool {
        Station::ALL.iter().all(|&st| match self.requirement(st) {
            None => true,
            Some((angle, req)) => req.accepts(t.response(st, angle)),
        })
    }

    fn check_against(&self, s: DiscreteSetting) -> Result<(), DiscreteError> {
        for st in Station::ALL {
            if let Some((angle, _)) = self.requirement(st) {
                if angle != s.angle(st) {
                    return Err(DiscreteError::ConditionMismatch {
                        station: st,
                        setting: s,
                    });
                }
            }
        }
        Ok(())
    }
}

/// `(1 + ijk sin(x+y+z)) / 8`, exact for the discrete settings.
pub fn quantum_conditional(s: DiscreteSetting, signs: OutcomeSign) -> Rational {
    let ijk = signs.product().value() as i64;
    Rational::new(1 + ijk * s.sin_of_sum() as i64, 8)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationCase {
    pub setting: DiscreteSetting,
    pub signs: OutcomeSign,
    /// `None` when the conditional is undefined (zero-weight triple subset).
    #[serde(serialize_with = "ser_opt_ratio")]
    pub model: Option<Rational>,
    #[serde(serialize_with = "ser_ratio")]
    pub quantum: Rational,
    pub matches: bool,
}

fn ser_ratio<S: serde::Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

fn ser_opt_ratio<S: serde::Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_str(&r.to_string()),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub cases: Vec<VerificationCase>,
}

impl VerificationReport {
    pub fn match_count(&self) -> usize {
        self.cases.iter().filter(|c| c.matches).count()
    }

    pub fn is_exact(&self) -> bool {
        self.match_count() == self.cases.len()
    }

    pub fn mismatches(&self) -> impl Iterator<Item = &VerificationCase> {
        self.cases.iter().filter(|c| !c.matches)
    }

    /// One CSV line per case: `x,y,z,signs,model,quantum,match`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,z,signs,model,quantum,match\n");
        for c in &self.cases {
            let model = c
                .model
                .map(|m| m.to_string())
                .unwrap_or_else(|| "undefined".into());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.setting.x, c.setting.y, c.setting.z, c.signs, model, c.quantum, c.matches
            );
        }
        out
    }
}

/// Result of evaluating `-2 <= E1 + E2 + E3 - E4 <= 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport<T> {
    pub statistic: T,
    pub lower: T,
    pub upper: T,
    pub satisfied: bool,
    /// Correlation reduction at which the bound is first reached.
    pub epsilon_needed: T,
}

/// Evaluates the inequality on four product expectations.
///
/// Generic so the same code serves exact rationals and sampled estimates.
pub fn dbs_inequality<T>(e1: T, e2: T, e3: T, e4: T) -> Result<InequalityReport<T>, DiscreteError>
where
    T: Signed + PartialOrd + Clone + fmt::Display,
{
    let one = T::one();
    let two = one.clone() + one.clone();
    for e in [&e1, &e2, &e3, &e4] {
        if *e > one || *e < -one.clone() {
            return Err(DiscreteError::OutOfRange(e.to_string()));
        }
    }
    let statistic = e1 + e2 + e3 - e4;
    let lower = -two.clone();
    let satisfied = statistic >= lower && statistic <= two;
    Ok(InequalityReport {
        statistic,
        lower,
        upper: two.clone(),
        satisfied,
        epsilon_needed: one / two,
    })
}

/// `[1-ε, 1-ε, 1-ε, -1+ε]`, the uniformly degraded GHZ correlations.
pub fn epsilon_reduced_expectations<T>(epsilon: T) -> [T; 4]
where
    T: Signed + Clone,
{
    let one = T::one();
    let reduced = one.clone() - epsilon.clone();
    [reduced.clone(), reduced.clone(), reduced, epsilon - one]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::allowed_tuples;
    use num_traits::Zero as _;
    use crate::types::parse_tuple;
    use Angle::{HalfPi, Zero};
    use Requirement as R;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    fn labels(idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|i| i + 1).collect()
    }

    #[test]
    fn model_validation() {
        let lambda = build_lambda48();
        assert!(DiscreteModel::new(lambda.clone(), vec![r(1, 48); 47]).is_err());
        assert!(DiscreteModel::new(lambda.clone(), vec![r(1, 47); 48]).is_err());
        let mut w = vec![r(1, 48); 48];
        w[0] = r(-1, 48);
        w[1] = r(3, 48);
        assert!(DiscreteModel::new(lambda, w).is_err());
        assert!(DiscreteModel::uniform(vec![]).is_err());
    }

    #[test]
    fn event_subsets_from_table() {
        let m = DiscreteModel::lambda48();
        let cond = EventCondition::single(Station::A, HalfPi, R::Plus).and(Station::B, Zero, R::Plus);
        assert_eq!(
            labels(&m.event_subset(&cond)),
            vec![31, 33, 36, 38, 40, 43, 45, 48]
        );
        let empty = cond.and(Station::C, Zero, R::Minus);
        assert!(m.event_subset(&empty).is_empty());
        // the printed listing for this event skips λ33 although λ33 = (+-D+-+)
        let b0 = m.event_subset(&EventCondition::single(Station::B, Zero, R::Plus));
        assert_eq!(b0.len(), 20);
        assert!(b0.contains(&32));
        assert_eq!(m.tuples()[32], parse_tuple("+-D+-+").unwrap());
    }

    #[test]
    fn defective_never_matches_a_sign() {
        let m = DiscreteModel::new(vec![parse_tuple("DDDDDD").unwrap()], vec![r(1, 1)]).unwrap();
        for req in [R::Plus, R::Minus, R::NonDefective] {
            assert!(m.event_subset(&EventCondition::single(Station::A, Zero, req)).is_empty());
        }
        assert_eq!(EventCondition::new([None; 3]), Err(DiscreteError::EmptyCondition));
    }

    #[test]
    fn triple_subsets() {
        let m = DiscreteModel::lambda48();
        let mut union = [false; 48];
        for s in DiscreteSetting::all() {
            let t = m.triple_subset(s);
            assert_eq!(t.len(), 24, "{s}");
            t.iter().for_each(|&i| union[i] = true);
        }
        assert!(union.iter().all(|&b| b));
        assert!(m
            .triple_subset(ProductObservable::Omega1.setting())
            .contains(&0));
    }

    #[test]
    fn worked_conditionals() {
        let m = DiscreteModel::lambda48();
        let s = DiscreteSetting::new(HalfPi, Zero, Zero);
        let a_minus = EventCondition::single(Station::A, HalfPi, R::Minus);
        assert_eq!(
            labels(&m.event_subset(&a_minus).into_iter().filter(|i| m.triple_subset(s).contains(i)).collect::<Vec<_>>()),
            vec![1, 4, 5, 8, 9, 10, 11, 12, 15, 16, 17, 18]
        );
        assert_eq!(m.conditional_probability(&a_minus, s).unwrap(), r(1, 2));

        let s2 = DiscreteSetting::new(HalfPi, HalfPi, Zero);
        let c = EventCondition::single(Station::A, HalfPi, R::Plus)
            .and(Station::B, HalfPi, R::Plus)
            .and(Station::C, Zero, R::Minus);
        assert_eq!(m.conditional_probability(&c, s2).unwrap(), r(1, 8));

        let zero = EventCondition::single(Station::A, HalfPi, R::Minus)
            .and(Station::B, Zero, R::Plus)
            .and(Station::C, Zero, R::Plus);
        assert_eq!(m.conditional_probability(&zero, s).unwrap(), r(0, 1));
    }

    #[test]
    fn condition_must_agree_with_setting() {
        let m = DiscreteModel::lambda48();
        let cond = EventCondition::single(Station::B, HalfPi, R::Plus);
        let err = m
            .conditional_probability(&cond, ProductObservable::Omega1.setting())
            .unwrap_err();
        assert!(matches!(err, DiscreteError::ConditionMismatch { station: Station::B, .. }));
    }

    #[test]
    fn quantum_values() {
        let p = Sign::Plus;
        let n = Sign::Minus;
        assert_eq!(
            quantum_conditional(DiscreteSetting::new(HalfPi, Zero, Zero), OutcomeSign::new(p, p, p)),
            r(1, 4)
        );
        for signs in OutcomeSign::all() {
            assert_eq!(
                quantum_conditional(DiscreteSetting::new(Zero, Zero, Zero), signs),
                r(1, 8)
            );
        }
        assert_eq!(
            quantum_conditional(DiscreteSetting::new(HalfPi, HalfPi, Zero), OutcomeSign::new(p, p, n)),
            r(1, 8)
        );
    }

    #[test]
    fn uniform_lambda_reproduces_quantum() {
        let report = DiscreteModel::lambda48().verify_against_quantum();
        assert_eq!(report.cases.len(), 64);
        assert!(report.is_exact());
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 65);
        assert!(csv.lines().nth(1).unwrap().starts_with("pi/2,pi/2,pi/2,+++,0,0,true"));
    }

    #[test]
    fn point_mass_mismatches() {
        let m = DiscreteModel::point_mass(build_lambda48(), 0).unwrap();
        let report = m.verify_against_quantum();
        assert!(!report.is_exact());
        assert!(report
            .mismatches()
            .any(|c| c.model.is_none()));
        assert!(report.to_csv().contains("undefined"));
    }

    #[test]
    fn uniform_409_is_only_reported() {
        let m = DiscreteModel::uniform(allowed_tuples()).unwrap();
        let report = m.verify_against_quantum();
        assert_eq!(report.cases.len(), 64);
        // no assertion on the match count: the uniform weights are not claimed to work
        let _ = report.match_count();
    }

    #[test]
    fn expectations() {
        let m = DiscreteModel::lambda48();
        for obs in ProductObservable::ALL {
            assert_eq!(
                m.observable_expectation(obs).unwrap(),
                r(obs.required_value() as i64, 1)
            );
        }
        assert_eq!(
            m.product_expectation(DiscreteSetting::new(Zero, Zero, Zero)).unwrap(),
            r(0, 1)
        );
    }

    #[test]
    fn triple_efficiencies() {
        let m = DiscreteModel::lambda48();
        for s in DiscreteSetting::all() {
            assert_eq!(m.triple_efficiency(s), r(1, 2));
        }
        let point = DiscreteModel::point_mass(build_lambda48(), 0).unwrap();
        let values: Vec<Rational> = DiscreteSetting::all()
            .iter()
            .map(|s| point.triple_efficiency(*s))
            .collect();
        assert!(values.iter().all(|v| v.is_zero() || v.is_one()));
        assert_eq!(values.iter().filter(|v| v.is_one()).count(), 4);
        let err = point
            .product_expectation(
                *DiscreteSetting::all()
                    .iter()
                    .find(|s| point.triple_efficiency(**s).is_zero())
                    .unwrap(),
            )
            .unwrap_err();
        assert!(matches!(err, DiscreteError::UndefinedConditional(_)));
    }

    #[test]
    fn inequality() {
        let one = r(1, 1);
        let rep = dbs_inequality(one, one, one, -one).unwrap();
        assert_eq!(rep.statistic, r(4, 1));
        assert!(!rep.satisfied);
        assert_eq!(rep.epsilon_needed, r(1, 2));

        let rep = dbs_inequality(0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(rep.statistic, 0.0);
        assert!(rep.satisfied);

        let [a, b, c, d] = epsilon_reduced_expectations(r(1, 2));
        let rep = dbs_inequality(a, b, c, d).unwrap();
        assert_eq!(rep.statistic, r(2, 1));
        assert!(rep.satisfied);

        assert!(matches!(
            dbs_inequality(1.5, 0.0, 0.0, 0.0),
            Err(DiscreteError::OutOfRange(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn weights_strategy() -> impl Strategy<Value = Vec<i64>> {
            proptest::collection::vec(0i64..5, 48)
                .prop_filter("non-zero total", |v| v.iter().sum::<i64>() > 0)
        }

        fn model_from(raw: &[i64]) -> DiscreteModel {
            let total: i64 = raw.iter().sum();
            let w = raw.iter().map(|&x| Rational::new(x, total)).collect();
            DiscreteModel::new(build_lambda48(), w).unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn conditionals_sum_to_one(raw in weights_strategy()) {
                let m = model_from(&raw);
                for s in DiscreteSetting::all() {
                    let probs: Result<Vec<Rational>, _> =
                        OutcomeSign::all().iter().map(|g| m.outcome_probability(s, *g)).collect();
                    match probs {
                        Ok(p) => prop_assert_eq!(p.iter().sum::<Rational>(), Rational::one()),
                        Err(e) => prop_assert_eq!(e, DiscreteError::UndefinedConditional(s)),
                    }
                }
            }

            #[test]
            fn expectation_two_routes_agree(raw in weights_strategy()) {
                let m = model_from(&raw);
                for s in DiscreteSetting::all() {
                    let Ok(direct) = m.product_expectation(s) else { continue };
                    let via_signs: Rational = OutcomeSign::all()
                        .iter()
                        .map(|g| m.outcome_probability(s, *g).unwrap() * (g.product().value() as i64))
                        .sum();
                    prop_assert_eq!(direct, via_signs);
                }
            }

            #[test]
            fn mean_triple_efficiency_is_half(raw in weights_strategy()) {
                let m = model_from(&raw);
                let total: Rational = DiscreteSetting::all().iter().map(|s| m.triple_efficiency(*s)).sum();
                prop_assert_eq!(total / 8, Rational::new(1, 2));
            }
        }
    }

    #[test]
    fn single_station_conditionals_are_half() {
        let m = DiscreteModel::lambda48();
        for s in DiscreteSetting::all() {
            for st in Station::ALL {
                for sign in Sign::BOTH {
                    let cond = EventCondition::single(st, s.angle(st), sign.into());
                    assert_eq!(m.conditional_probability(&cond, s).unwrap(), r(1, 2));
                }
            }
        }
    }
}
