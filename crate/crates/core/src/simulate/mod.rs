//! Event-by-event Monte Carlo of the GHZ experiment.
//!
//! Each trial draws a hidden variable from the source, reads out the three
//! stations at the scheduled settings, then passes the ideal outcomes through
//! the detector error model. Statistics are taken on the post-selected
//! sub-ensemble: triple coincidences, or four-fold ones when the trigger is on.
//!
//! Trial `t` uses the ChaCha8 stream `t` of the run seed, so every trial is
//! reproducible on its own and the run does not depend on how trials are
//! spread over threads.

mod sampler;
mod stats;

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::continuous::{in_window, ContinuousSettings};
use crate::par::Execution;
use crate::types::{Angle, DiscreteSetting, HiddenTuple, Outcome, Sign, Station};

pub use sampler::{ContinuousSampler, DiscreteSampler, Hidden, HiddenPoint, Source};
pub use stats::{estimate_stats, CoincidenceStats, GroupTally, Selection, SettingStats, Tally};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid experiment: {0}")]
    InvalidConfig(String),
    #[error("density solution not converged: residual {residual:e} > tol {tol:e}")]
    NotConverged { residual: f64, tol: f64 },
    #[error("no post-selected trials for: {}", .0.join(", "))]
    InsufficientData(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Detector imperfections applied on top of the ideal outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModel {
    pub detector_efficiency: f64,
    pub dark_count_prob: f64,
    pub trigger_enabled: bool,
    pub trigger_efficiency: f64,
}

impl ErrorModel {
    pub fn ideal() -> Self {
        Self {
            detector_efficiency: 1.0,
            dark_count_prob: 0.0,
            trigger_enabled: false,
            trigger_efficiency: 1.0,
        }
    }

    pub fn new(
        detector_efficiency: f64,
        dark_count_prob: f64,
        trigger: Option<f64>,
    ) -> Result<Self, SimError> {
        let em = Self {
            detector_efficiency,
            dark_count_prob,
            trigger_enabled: trigger.is_some(),
            trigger_efficiency: trigger.unwrap_or(1.0),
        };
        em.validate()?;
        Ok(em)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, p) in [
            ("detector efficiency", self.detector_efficiency),
            ("dark count probability", self.dark_count_prob),
            ("trigger efficiency", self.trigger_efficiency),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::InvalidConfig(format!("{name} {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn selection(&self) -> Selection {
        if self.trigger_enabled {
            Selection::Fourfold
        } else {
            Selection::Triple
        }
    }
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self::ideal()
    }
}

/// Outcomes after the error model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub observed: [Outcome; 3],
    pub dark: [bool; 3],
    pub trigger: bool,
}

/// Loses each firing with probability `1 − d`; a silent detector then
/// dark-fires with probability `dark`, with a fair random sign. The trigger
/// is an independent detector and only fires when enabled.
pub fn apply_error_model<R: Rng + ?Sized>(ideal: [Outcome; 3], em: &ErrorModel, rng: &mut R) -> Observation {
    let mut observed = [Outcome::Defective; 3];
    let mut dark = [false; 3];
    for k in 0..3 {
        if ideal[k].is_detected() && rng.random_bool(em.detector_efficiency) {
            observed[k] = ideal[k];
        } else if rng.random_bool(em.dark_count_prob) {
            dark[k] = true;
            observed[k] = Outcome::from_sign(if rng.random_bool(0.5) { Sign::Plus } else { Sign::Minus });
        }
    }
    let trigger = em.trigger_enabled && rng.random_bool(em.trigger_efficiency);
    Observation {
        observed,
        dark,
        trigger,
    }
}

/// Continuum response: the region's sign if the station's coordinate lies in
/// `[angle, angle + Δ]` modulo 2π, otherwise no detection.
pub fn station_response(point: &HiddenPoint, station: Station, angle: f64, delta: crate::continuous::WindowWidth) -> Outcome {
    if in_window(point.coordinate(station), angle.rem_euclid(TAU), delta) {
        Outcome::from_sign(point.sign(station))
    } else {
        Outcome::Defective
    }
}

/// Discrete response: the tuple slot for `(station, angle)`; `None` if the
/// angle is neither `0` nor `π/2`.
pub fn discrete_response(tuple: &HiddenTuple, station: Station, angle: f64) -> Option<Outcome> {
    Angle::from_radians(angle).map(|a| tuple.response(station, a))
}

/// One simulated emission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub settings: [f64; 3],
    pub ideal: [Outcome; 3],
    pub observed: [Outcome; 3],
    pub dark: [bool; 3],
    pub trigger: bool,
}

pub const TRIAL_LOG_HEADER: &str =
    "trial_id,alpha,beta,gamma,a_ideal,b_ideal,c_ideal,a_obs,b_obs,c_obs,dark_a,dark_b,dark_c,trigger";

fn code(o: Outcome) -> &'static str {
    match o {
        Outcome::Plus => "+1",
        Outcome::Minus => "-1",
        Outcome::Defective => "0",
    }
}

impl TrialRecord {
    pub fn is_triple(&self) -> bool {
        self.observed.iter().all(|o| o.is_detected())
    }

    /// One trial-log line, without the newline.
    pub fn csv_line(&self) -> String {
        let mut s = format!(
            "{},{},{},{}",
            self.trial_id, self.settings[0], self.settings[1], self.settings[2]
        );
        for o in self.ideal.iter().chain(&self.observed) {
            s.push(',');
            s.push_str(code(*o));
        }
        for flag in self.dark.iter().chain(std::iter::once(&self.trigger)) {
            let _ = write!(s, ",{}", *flag as u8);
        }
        s
    }
}

/// How the settings change from trial to trial.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Fixed([f64; 3]),
    /// Trial `t` uses entry `t mod len`.
    Cycle(Vec<[f64; 3]>),
    /// Each trial picks one entry uniformly at random.
    Random(Vec<[f64; 3]>),
    /// Uniform random angles per trial; statistics binned by phase sum.
    Uniform { bins: usize },
}

fn normalise(a: [f64; 3]) -> [f64; 3] {
    a.map(|x| x.rem_euclid(TAU))
}

fn angle_label(a: [f64; 3]) -> String {
    match DiscreteSetting::from_radians(a) {
        Some(d) => d.to_string(),
        None => format!("({:.6},{:.6},{:.6})", a[0], a[1], a[2]),
    }
}

impl Schedule {
    pub fn fixed(angles: [f64; 3]) -> Self {
        Schedule::Fixed(normalise(angles))
    }

    pub fn cycle(list: Vec<[f64; 3]>) -> Result<Self, SimError> {
        Self::checked_list(list).map(Schedule::Cycle)
    }

    pub fn random(list: Vec<[f64; 3]>) -> Result<Self, SimError> {
        Self::checked_list(list).map(Schedule::Random)
    }

    /// The eight discrete settings in turn.
    pub fn cycle8() -> Self {
        Schedule::Cycle(DiscreteSetting::all().iter().map(|s| s.radians()).collect())
    }

    pub fn random8() -> Self {
        Schedule::Random(DiscreteSetting::all().iter().map(|s| s.radians()).collect())
    }

    pub fn uniform(bins: usize) -> Result<Self, SimError> {
        if bins == 0 {
            return Err(SimError::InvalidConfig("uniform schedule needs at least one bin".into()));
        }
        Ok(Schedule::Uniform { bins })
    }

    fn checked_list(list: Vec<[f64; 3]>) -> Result<Vec<[f64; 3]>, SimError> {
        if list.is_empty() {
            return Err(SimError::InvalidConfig("empty settings list".into()));
        }
        let list: Vec<[f64; 3]> = list.into_iter().map(normalise).collect();
        for (i, a) in list.iter().enumerate() {
            if list[..i].contains(a) {
                return Err(SimError::InvalidConfig(format!("duplicate setting {}", angle_label(*a))));
            }
        }
        Ok(list)
    }

    pub fn group_count(&self) -> usize {
        match self {
            Schedule::Fixed(_) => 1,
            Schedule::Cycle(l) | Schedule::Random(l) => l.len(),
            Schedule::Uniform { bins } => *bins,
        }
    }

    /// Angles of a group, `None` for phase-sum bins.
    pub fn group_angles(&self, group: usize) -> Option<[f64; 3]> {
        match self {
            Schedule::Fixed(a) => Some(*a),
            Schedule::Cycle(l) | Schedule::Random(l) => l.get(group).copied(),
            Schedule::Uniform { .. } => None,
        }
    }

    pub fn group_labels(&self) -> Vec<String> {
        match self {
            Schedule::Uniform { bins } => (0..*bins)
                .map(|b| {
                    let width = TAU / *bins as f64;
                    format!("w[{:.4},{:.4})", b as f64 * width, (b + 1) as f64 * width)
                })
                .collect(),
            _ => (0..self.group_count())
                .map(|g| angle_label(self.group_angles(g).expect("listed group")))
                .collect(),
        }
    }

    /// The group a trial with these settings is counted in.
    pub fn group_of(&self, angles: [f64; 3]) -> Option<usize> {
        match self {
            Schedule::Fixed(a) => (*a == angles).then_some(0),
            Schedule::Cycle(l) | Schedule::Random(l) => l.iter().position(|a| *a == angles),
            Schedule::Uniform { bins } => {
                let w = ContinuousSettings::new(angles[0], angles[1], angles[2]).sum();
                Some(((w / TAU * *bins as f64) as usize).min(bins - 1))
            }
        }
    }

    /// Settings and group of trial `trial_id`; random schedules draw from `rng`.
    fn draw<R: Rng + ?Sized>(&self, trial_id: u64, rng: &mut R) -> ([f64; 3], usize) {
        match self {
            Schedule::Fixed(a) => (*a, 0),
            Schedule::Cycle(l) => {
                let g = (trial_id % l.len() as u64) as usize;
                (l[g], g)
            }
            Schedule::Random(l) => {
                let g = rng.random_range(0..l.len());
                (l[g], g)
            }
            Schedule::Uniform { .. } => {
                let a = normalise([(); 3].map(|_| rng.random::<f64>() * TAU));
                (a, self.group_of(a).expect("bins cover the circle"))
            }
        }
    }

    fn all_discrete(&self) -> bool {
        match self {
            Schedule::Fixed(a) => DiscreteSetting::from_radians(*a).is_some(),
            Schedule::Cycle(l) | Schedule::Random(l) => {
                l.iter().all(|a| DiscreteSetting::from_radians(*a).is_some())
            }
            Schedule::Uniform { .. } => false,
        }
    }
}

/// A fully specified run.
#[derive(Debug, Clone)]
pub struct Experiment {
    source: Source,
    schedule: Schedule,
    errors: ErrorModel,
    trials: u64,
    seed: u64,
}

impl Experiment {
    pub fn new(
        source: Source,
        schedule: Schedule,
        errors: ErrorModel,
        trials: u64,
        seed: u64,
    ) -> Result<Self, SimError> {
        errors.validate()?;
        if trials == 0 {
            return Err(SimError::InvalidConfig("number of trials must be positive".into()));
        }
        if source.is_discrete() && !schedule.all_discrete() {
            return Err(SimError::InvalidConfig(
                "discrete source only answers settings 0 and pi/2".into(),
            ));
        }
        Ok(Self {
            source,
            schedule,
            errors,
            trials,
            seed,
        })
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn errors(&self) -> &ErrorModel {
        &self.errors
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn base_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn trial(&self, base: &ChaCha8Rng, trial_id: u64) -> (TrialRecord, usize) {
        let mut rng = base.clone();
        rng.set_stream(trial_id);
        let (settings, group) = self.schedule.draw(trial_id, &mut rng);
        let hidden = self.source.sample(&mut rng);
        let ideal = match (&hidden, &self.source) {
            (Hidden::Tuple(t), _) => Station::ALL.map(|s| {
                discrete_response(t, s, settings[s.index()]).expect("validated discrete schedule")
            }),
            (Hidden::Point(p), Source::Continuous(c)) => {
                Station::ALL.map(|s| station_response(p, s, settings[s.index()], c.delta()))
            }
            (Hidden::Point(_), Source::Discrete(_)) => unreachable!("source yields its own kind"),
        };
        let obs = apply_error_model(ideal, &self.errors, &mut rng);
        let record = TrialRecord {
            trial_id,
            settings,
            ideal,
            observed: obs.observed,
            dark: obs.dark,
            trigger: obs.trigger,
        };
        (record, group)
    }

    /// Trial `trial_id` on its own, exactly as it appears inside a run.
    pub fn simulate_trial(&self, trial_id: u64) -> TrialRecord {
        self.trial(&self.base_rng(), trial_id).0
    }

    /// Records for a range of trial ids.
    pub fn records(&self, ids: std::ops::Range<u64>) -> Vec<TrialRecord> {
        let base = self.base_rng();
        ids.map(|t| self.trial(&base, t).0).collect()
    }
}

/// Trials per parallel work item.
const CHUNK: u64 = 4096;
/// Work items per streamed block.
const CHUNKS_PER_BLOCK: u64 = 64;

/// Result of a run: the raw tally and its post-selected estimates.
#[derive(Debug, Clone)]
pub struct Run {
    pub tally: Tally,
    pub stats: CoincidenceStats,
}

impl Run {
    /// Estimates under another post-selection rule.
    pub fn restated(&self, exp: &Experiment, selection: Selection) -> Result<CoincidenceStats, SimError> {
        self.tally.estimate(exp.schedule(), selection, exp.seed())
    }
}

type RecordSink<'a> = &'a mut dyn FnMut(&[TrialRecord]) -> std::io::Result<()>;

fn run_blocks(
    exp: &Experiment,
    exec: Execution,
    mut sink: Option<RecordSink<'_>>,
) -> Result<Tally, SimError> {
    let base = exp.base_rng();
    let groups = exp.schedule.group_count();
    let keep = sink.is_some();
    let mut total = Tally::new(groups);
    let block = CHUNK * CHUNKS_PER_BLOCK;
    let mut start = 0;
    while start < exp.trials {
        let end = (start + block).min(exp.trials);
        let chunks = (end - start).div_ceil(CHUNK) as usize;
        let parts = exec.map_indexed(chunks, |c| {
            let lo = start + c as u64 * CHUNK;
            let hi = (lo + CHUNK).min(end);
            let mut tally = Tally::new(groups);
            let mut records = Vec::with_capacity(if keep { (hi - lo) as usize } else { 0 });
            for t in lo..hi {
                let (r, g) = exp.trial(&base, t);
                tally.record(g, &r);
                if keep {
                    records.push(r);
                }
            }
            (tally, records)
        });
        for (tally, records) in parts {
            total.merge(&tally);
            if let Some(f) = sink.as_mut() {
                f(&records)?;
            }
        }
        start = end;
    }
    Ok(total)
}

fn finish(exp: &Experiment, tally: Tally) -> Result<Run, SimError> {
    let stats = tally.estimate(&exp.schedule, exp.errors.selection(), exp.seed)?;
    Ok(Run { tally, stats })
}

/// Runs all trials and returns the statistics.
pub fn run_experiment(exp: &Experiment, exec: Execution) -> Result<Run, SimError> {
    let tally = run_blocks(exp, exec, None)?;
    finish(exp, tally)
}

/// Like [`run_experiment`], also writing the trial log in trial order.
pub fn run_experiment_logged<W: Write>(exp: &Experiment, exec: Execution, log: &mut W) -> Result<Run, SimError> {
    writeln!(log, "{TRIAL_LOG_HEADER}")?;
    let mut write = |records: &[TrialRecord]| -> std::io::Result<()> {
        for r in records {
            writeln!(log, "{}", r.csv_line())?;
        }
        Ok(())
    };
    let tally = run_blocks(exp, exec, Some(&mut write))?;
    log.flush()?;
    finish(exp, tally)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuous::{SignRegion, WindowWidth};
    use crate::discrete::DiscreteModel;
    use crate::types::OutcomeSign;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn lambda_experiment(schedule: Schedule, errors: ErrorModel, n: u64) -> Experiment {
        let source = Source::discrete(&DiscreteModel::lambda48()).unwrap();
        Experiment::new(source, schedule, errors, n, 7).unwrap()
    }

    fn plus_point(x: f64) -> HiddenPoint {
        HiddenPoint {
            region: SignRegion::new(OutcomeSign::all()[0]),
            x,
            y: 0.0,
            z: 0.0,
        }
    }

    #[test]
    fn continuous_response_window() {
        let d = WindowWidth::new(0.9 * PI / 3.0).unwrap();
        let alpha = 1.0;
        assert_eq!(station_response(&plus_point(alpha + d.get() / 2.0), Station::A, alpha, d), Outcome::Plus);
        assert_eq!(station_response(&plus_point(alpha + 1.5 * d.get()), Station::A, alpha, d), Outcome::Defective);
        // window wrapping through 2π
        let start = TAU - d.get() / 2.0;
        assert_eq!(station_response(&plus_point(d.get() / 4.0), Station::A, start, d), Outcome::Plus);
        assert_eq!(station_response(&plus_point(d.get() / 4.0), Station::A, start - TAU, d), Outcome::Plus);
    }

    #[test]
    fn identity_and_null_error_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ideal = [Outcome::Plus, Outcome::Defective, Outcome::Minus];
        for _ in 0..1000 {
            let o = apply_error_model(ideal, &ErrorModel::ideal(), &mut rng);
            assert_eq!(o.observed, ideal);
            assert!(!o.trigger);
        }
        let dead = ErrorModel::new(0.0, 0.0, None).unwrap();
        for _ in 0..1000 {
            let o = apply_error_model(ideal, &dead, &mut rng);
            assert!(o.observed.iter().all(|x| *x == Outcome::Defective));
        }
    }

    #[test]
    fn dark_counts_only_fill_silent_detectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let em = ErrorModel::new(0.5, 0.5, Some(0.5)).unwrap();
        let ideal = [Outcome::Plus, Outcome::Defective, Outcome::Minus];
        for _ in 0..5000 {
            let o = apply_error_model(ideal, &em, &mut rng);
            for (k, &want) in ideal.iter().enumerate() {
                if !o.dark[k] && want == Outcome::Defective {
                    assert_eq!(o.observed[k], Outcome::Defective);
                }
                if !o.dark[k] && o.observed[k].is_detected() {
                    assert_eq!(o.observed[k], want);
                }
            }
        }
    }

    #[test]
    fn error_model_ranges() {
        assert!(ErrorModel::new(1.5, 0.0, None).is_err());
        assert!(ErrorModel::new(1.0, -0.1, None).is_err());
        assert!(ErrorModel::new(1.0, 0.0, Some(2.0)).is_err());
        assert!(ErrorModel::new(f64::NAN, 0.0, None).is_err());
    }

    #[test]
    fn ideal_omega_runs_give_perfect_correlations() {
        for (obs, expected) in [(0usize, 1.0), (3, -1.0)] {
            let setting = crate::types::ProductObservable::ALL[obs].setting().radians();
            let exp = lambda_experiment(Schedule::fixed(setting), ErrorModel::ideal(), 20_000);
            let run = run_experiment(&exp, Execution::Sequential).unwrap();
            let name = crate::types::ProductObservable::ALL[obs].name();
            assert_eq!(run.stats.expectations[name], expected);
            assert_eq!(run.stats.expectations.len(), 1);
            assert!(run.stats.epsilon.is_none());
        }
    }

    #[test]
    fn full_cycle_gives_dbs_four() {
        let run = run_experiment(&lambda_experiment(Schedule::cycle8(), ErrorModel::ideal(), 40_000), Execution::default()).unwrap();
        assert_eq!(run.stats.epsilon, Some(0.0));
        assert_eq!(run.stats.dbs_statistic, Some(4.0));
        assert_eq!(run.stats.n_emitted, 40_000);
        assert_eq!(run.stats.settings.len(), 8);
        assert!(run.stats.settings.iter().all(|s| s.emitted == 5000));
    }

    #[test]
    fn heavy_dark_counts_raise_epsilon() {
        let mut last = -1.0;
        for dark in [0.0, 0.2, 0.6] {
            let em = ErrorModel::new(0.5, dark, None).unwrap();
            let run = run_experiment(&lambda_experiment(Schedule::cycle8(), em, 80_000), Execution::default()).unwrap();
            let eps = run.stats.epsilon.unwrap();
            assert!(eps > last, "dark={dark}: epsilon {eps} not above {last}");
            last = eps;
        }
        assert!(last > 0.0);
    }

    #[test]
    fn empty_and_starved_inputs_are_errors() {
        let schedule = Schedule::cycle8();
        assert!(matches!(
            estimate_stats(&[], &schedule, Selection::Triple, 0),
            Err(SimError::InsufficientData(_))
        ));
        let dead = ErrorModel::new(0.0, 0.0, None).unwrap();
        let exp = lambda_experiment(Schedule::fixed([FRAC_PI_2, 0.0, 0.0]), dead, 100);
        match run_experiment(&exp, Execution::Sequential) {
            Err(SimError::InsufficientData(list)) => assert!(list[0].contains("(pi/2,0,0)")),
            other => panic!("expected insufficient data, got {other:?}"),
        }
    }

    #[test]
    fn records_reproduce_run_statistics() {
        let exp = lambda_experiment(Schedule::random8(), ErrorModel::new(0.9, 0.01, Some(0.7)).unwrap(), 10_000);
        let run = run_experiment(&exp, Execution::default()).unwrap();
        let direct = estimate_stats(&exp.records(0..10_000), exp.schedule(), Selection::Fourfold, 7).unwrap();
        assert_eq!(run.stats, direct);
        assert_eq!(exp.simulate_trial(1234), exp.records(1234..1235)[0]);
    }

    #[test]
    fn discrete_source_rejects_continuous_angles() {
        let source = Source::discrete(&DiscreteModel::lambda48()).unwrap();
        assert!(Experiment::new(source.clone(), Schedule::fixed([0.3, 0.0, 0.0]), ErrorModel::ideal(), 10, 0).is_err());
        assert!(Experiment::new(source, Schedule::uniform(4).unwrap(), ErrorModel::ideal(), 10, 0).is_err());
    }

    #[test]
    fn schedule_grouping() {
        let s = Schedule::uniform(4).unwrap();
        assert_eq!(s.group_of([0.1, 0.1, 0.1]), Some(0));
        assert_eq!(s.group_of([PI, 0.1, 0.0]), Some(2));
        assert_eq!(s.group_of([TAU - 1e-12, 0.0, 0.0]), Some(3));
        assert!(Schedule::cycle(vec![[0.0; 3], [TAU, 0.0, 0.0]]).is_err());
        assert_eq!(Schedule::cycle8().group_labels()[0], "(pi/2,pi/2,pi/2)");
    }

    #[test]
    fn csv_line_format() {
        let r = TrialRecord {
            trial_id: 3,
            settings: [FRAC_PI_2, 0.0, 0.0],
            ideal: [Outcome::Plus, Outcome::Minus, Outcome::Defective],
            observed: [Outcome::Plus, Outcome::Defective, Outcome::Minus],
            dark: [false, false, true],
            trigger: true,
        };
        assert_eq!(r.csv_line(), format!("3,{FRAC_PI_2},0,0,+1,-1,0,+1,0,-1,0,0,1,1"));
        assert_eq!(TRIAL_LOG_HEADER.split(',').count(), r.csv_line().split(',').count());
    }
}
