//! `key=value` experiment configuration files and angle literals.
//!
//! ```text
//! # four-fold run with a trigger photon
//! source=discrete
//! schedule=cycle8
//! N=1e6
//! d=0.8
//! trigger=on
//! trigger_eff=0.5
//! seed=42
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::continuous::{self, ContinuousError, DensitySolution, SolverParams, WindowWidth};
use crate::discrete::DiscreteModel;
use crate::par::Execution;
use crate::simulate::{ErrorModel, Experiment, Schedule, SimError, Source};

/// Parses an angle in radians, with `pi` literals: `0.3pi`, `pi/2`,
/// `0.9pi/3`, `-pi/4`, `2*pi`, `1.5707963`.
pub fn parse_angle(text: &str) -> Result<f64, String> {
    let s: String = text
        .trim()
        .to_ascii_lowercase()
        .replace('π', "pi")
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    if s.is_empty() {
        return Err("empty angle".into());
    }
    let bad = || format!("cannot parse angle `{}`", text.trim());
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n, Some(d)),
        None => (s.as_str(), None),
    };
    let value = match num.strip_suffix("pi") {
        Some(coef) => {
            let coef = coef.strip_suffix('*').unwrap_or(coef);
            let c = match coef {
                "" | "+" => 1.0,
                "-" => -1.0,
                other => other.parse::<f64>().map_err(|_| bad())?,
            };
            c * PI
        }
        None => num.parse::<f64>().map_err(|_| bad())?,
    };
    let value = match den {
        Some(d) => {
            let d: f64 = d.parse().map_err(|_| bad())?;
            if d == 0.0 {
                return Err(format!("division by zero in angle `{}`", text.trim()));
            }
            value / d
        }
        None => value,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

/// Three comma-separated angles.
pub fn parse_setting(text: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three angles, got `{}`", text.trim()));
    }
    Ok([parse_angle(parts[0])?, parse_angle(parts[1])?, parse_angle(parts[2])?])
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "config line {n}: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

fn at(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: Some(line),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Fixed,
    Cycle,
    Cycle8,
    Random8,
    Uniform,
}

/// A parsed configuration file. Defaults: `d=1`, `dark=0`, `trigger=off`,
/// `schedule=cycle8`, `N=1e6`, `seed=0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: SourceKind,
    pub trials: u64,
    pub seed: u64,
    pub detector_efficiency: f64,
    pub dark_count_prob: f64,
    pub trigger: bool,
    pub trigger_efficiency: f64,
    pub schedule: Schedule,
    /// Saved density solution; resolved against the config file's directory.
    pub solution: Option<PathBuf>,
    /// Solver parameters used when no solution file is given.
    pub solver: SolverParams,
}

impl ExperimentConfig {
    pub fn error_model(&self) -> ErrorModel {
        ErrorModel {
            detector_efficiency: self.detector_efficiency,
            dark_count_prob: self.dark_count_prob,
            trigger_enabled: self.trigger,
            trigger_efficiency: self.trigger_efficiency,
        }
    }

    /// Builds the experiment, loading or solving the density solution for a
    /// continuous source.
    pub fn build(&self, exec: Execution) -> Result<Experiment, BuildError> {
        let source = match self.source {
            SourceKind::Discrete => Source::discrete(&DiscreteModel::lambda48())?,
            SourceKind::Continuous => {
                let solution = match &self.solution {
                    Some(path) => {
                        let text = std::fs::read_to_string(path)
                            .map_err(|e| BuildError::Io(format!("{}: {e}", path.display())))?;
                        DensitySolution::from_json(&text)?
                    }
                    None => continuous::solve_densities_with(&self.solver, exec)?,
                };
                Source::continuous(&solution)?
            }
        };
        Ok(Experiment::new(
            source,
            self.schedule.clone(),
            self.error_model(),
            self.trials,
            self.seed,
        )?)
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Solver(#[from] ContinuousError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("{0}")]
    Io(String),
}

const KEYS: &[&str] = &[
    "source", "n", "seed", "d", "dark", "trigger", "trigger_eff", "schedule", "setting", "settings",
    "bins", "solution", "delta", "grid", "tol", "max_iter",
];

fn probability(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    let p: f64 = v
        .parse()
        .map_err(|_| at(line, format!("`{key}` expects a number, got `{v}`")))?;
    if !(0.0..=1.0).contains(&p) {
        return Err(at(line, format!("`{key}` = {p} outside [0, 1]")));
    }
    Ok(p)
}

/// Non-negative integer, also accepting exponent notation such as `1e6`.
fn count(line: usize, key: &str, v: &str) -> Result<u64, ConfigError> {
    if let Ok(n) = v.parse::<u64>() {
        return Ok(n);
    }
    let bad = || at(line, format!("`{key}` expects a non-negative integer, got `{v}`"));
    let x: f64 = v.parse().map_err(|_| bad())?;
    if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(63) {
        Ok(x as u64)
    } else {
        Err(bad())
    }
}

/// Parses configuration text. `base` resolves a relative `solution` path.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig, ConfigError> {
    let mut seen: Vec<(String, usize, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| at(line, format!("expected key=value, got `{content}`")))?;
        let key = key.trim().to_ascii_lowercase();
        let key = if key == "trials" { "n".to_string() } else { key };
        if !KEYS.contains(&key.as_str()) {
            return Err(at(line, format!("unknown key `{}`", raw.split('=').next().unwrap_or("").trim())));
        }
        if let Some((_, first, _)) = seen.iter().find(|(k, _, _)| *k == key) {
            return Err(at(line, format!("`{key}` already set on line {first}")));
        }
        seen.push((key, line, value.trim().to_string()));
    }
    let get = |k: &str| seen.iter().find(|(key, _, _)| key == k).map(|(_, l, v)| (*l, v.as_str()));

    let source = match get("source") {
        None => {
            return Err(ConfigError {
                line: None,
                message: "missing required key `source`".into(),
            })
        }
        Some((l, "discrete")) => (l, SourceKind::Discrete),
        Some((l, "continuous")) => (l, SourceKind::Continuous),
        Some((l, v)) => return Err(at(l, format!("`source` must be discrete or continuous, got `{v}`"))),
    };

    let trials = match get("n") {
        Some((l, v)) => {
            let n = count(l, "N", v)?;
            if n == 0 {
                return Err(at(l, "`N` must be positive"));
            }
            n
        }
        None => 1_000_000,
    };
    let seed = get("seed").map(|(l, v)| count(l, "seed", v)).transpose()?.unwrap_or(0);
    let d = get("d").map(|(l, v)| probability(l, "d", v)).transpose()?.unwrap_or(1.0);
    let dark = get("dark").map(|(l, v)| probability(l, "dark", v)).transpose()?.unwrap_or(0.0);
    let trigger = match get("trigger") {
        None => false,
        Some((_, "on" | "true" | "1" | "yes")) => true,
        Some((_, "off" | "false" | "0" | "no")) => false,
        Some((l, v)) => return Err(at(l, format!("`trigger` must be on or off, got `{v}`"))),
    };
    let trigger_eff = get("trigger_eff")
        .map(|(l, v)| probability(l, "trigger_eff", v))
        .transpose()?
        .unwrap_or(1.0);

    let (schedule_line, kind) = match get("schedule") {
        None => (0, ScheduleKind::Cycle8),
        Some((l, v)) => (
            l,
            match v {
                "fixed" => ScheduleKind::Fixed,
                "cycle" => ScheduleKind::Cycle,
                "cycle8" => ScheduleKind::Cycle8,
                "random8" => ScheduleKind::Random8,
                "uniform" => ScheduleKind::Uniform,
                other => {
                    return Err(at(
                        l,
                        format!("unknown schedule `{other}` (fixed, cycle, cycle8, random8, uniform)"),
                    ))
                }
            },
        ),
    };
    let setting = get("setting")
        .map(|(l, v)| parse_setting(v).map_err(|e| at(l, e)).map(|s| (l, s)))
        .transpose()?;
    let settings = get("settings")
        .map(|(l, v)| {
            v.split(';')
                .filter(|s| !s.trim().is_empty())
                .map(parse_setting)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| at(l, e))
                .map(|s| (l, s))
        })
        .transpose()?;
    let bins = get("bins").map(|(l, v)| count(l, "bins", v).map(|b| (l, b))).transpose()?;
    let unused = |key: &str, line: usize| at(line, format!("`{key}` does not apply to schedule {kind:?}"));
    let schedule = match kind {
        ScheduleKind::Fixed => {
            let (_, s) = setting.ok_or_else(|| at(schedule_line, "schedule=fixed needs `setting=a,b,c`"))?;
            Schedule::fixed(s)
        }
        ScheduleKind::Cycle => {
            let (l, list) =
                settings.clone().ok_or_else(|| at(schedule_line, "schedule=cycle needs `settings=a,b,c; ...`"))?;
            Schedule::cycle(list).map_err(|e| at(l, e.to_string()))?
        }
        ScheduleKind::Cycle8 => Schedule::cycle8(),
        ScheduleKind::Random8 => Schedule::random8(),
        ScheduleKind::Uniform => {
            let (l, b) = bins.unwrap_or((schedule_line, 8));
            Schedule::uniform(b as usize).map_err(|e| at(l, e.to_string()))?
        }
    };
    if let (Some((l, _)), false) = (setting, kind == ScheduleKind::Fixed) {
        return Err(unused("setting", l));
    }
    if let (Some((l, _)), false) = (&settings, kind == ScheduleKind::Cycle) {
        return Err(unused("settings", *l));
    }
    if let (Some((l, _)), false) = (bins, kind == ScheduleKind::Uniform) {
        return Err(unused("bins", l));
    }
    if source.1 == SourceKind::Discrete && kind == ScheduleKind::Uniform {
        return Err(at(schedule_line, "the discrete source only answers settings 0 and pi/2"));
    }

    let solution = get("solution").map(|(_, v)| base.join(v));
    let delta = match get("delta") {
        Some((l, v)) => {
            let a = parse_angle(v).map_err(|e| at(l, e))?;
            WindowWidth::new(a).map_err(|e| at(l, e.to_string()))?
        }
        None => WindowWidth::new(0.9 * PI / 3.0).expect("default window is valid"),
    };
    let mut solver = SolverParams::new(delta);
    if let Some((l, v)) = get("grid") {
        solver.grid_n = count(l, "grid", v)? as usize;
        if solver.grid_n < SolverParams::MIN_GRID {
            return Err(at(l, format!("`grid` must be at least {}", SolverParams::MIN_GRID)));
        }
    }
    if let Some((l, v)) = get("tol") {
        solver.tol = v
            .parse::<f64>()
            .ok()
            .filter(|t| *t > 0.0)
            .ok_or_else(|| at(l, format!("`tol` expects a positive number, got `{v}`")))?;
    }
    if let Some((l, v)) = get("max_iter") {
        solver.max_iter = count(l, "max_iter", v)? as usize;
    }
    if source.1 == SourceKind::Discrete {
        for key in ["solution", "delta", "grid", "tol", "max_iter"] {
            if let Some((l, _)) = get(key) {
                return Err(at(l, format!("`{key}` only applies to source=continuous")));
            }
        }
    }
    if solution.is_some() {
        for key in ["delta", "grid", "tol", "max_iter"] {
            if let Some((l, _)) = get(key) {
                return Err(at(l, format!("`{key}` conflicts with `solution`")));
            }
        }
    }

    Ok(ExperimentConfig {
        source: source.1,
        trials,
        seed,
        detector_efficiency: d,
        dark_count_prob: dark,
        trigger,
        trigger_efficiency: trigger_eff,
        schedule,
        solution,
        solver,
    })
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        line: None,
        message: format!("{}: {e}", path.display()),
    })?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        parse_config(text, Path::new("/cfg"))
    }

    #[test]
    fn angle_literals() {
        assert_eq!(parse_angle("pi/2").unwrap(), FRAC_PI_2);
        assert_eq!(parse_angle("0.9pi/3").unwrap(), 0.9 * PI / 3.0);
        assert_eq!(parse_angle("0.3pi").unwrap(), 0.3 * PI);
        assert_eq!(parse_angle("-pi/4").unwrap(), -PI / 4.0);
        assert_eq!(parse_angle("2*pi").unwrap(), 2.0 * PI);
        assert_eq!(parse_angle(" 0.9422 ").unwrap(), 0.9422);
        assert_eq!(parse_angle("3π/2").unwrap(), 3.0 * PI / 2.0);
        for bad in ["", "pie", "pi/0", "1/x", "abc"] {
            assert!(parse_angle(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let c = parse("source=discrete\n").unwrap();
        assert_eq!(c.source, SourceKind::Discrete);
        assert_eq!(c.trials, 1_000_000);
        assert_eq!(c.detector_efficiency, 1.0);
        assert_eq!(c.dark_count_prob, 0.0);
        assert!(!c.trigger);
        assert_eq!(c.schedule, Schedule::cycle8());
        assert_eq!(c.error_model(), ErrorModel::ideal());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("source=discrete\n# comment\nd=1.5\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.message.contains("outside [0, 1]"));
        let e = parse("source=discrete\ncolour=blue\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.to_string().starts_with("config line 2: unknown key"));
        let e = parse("source=discrete\nN=ten\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = parse("d=0.5\n").unwrap_err();
        assert_eq!(e.line, None);
        assert!(e.message.contains("source"));
        let e = parse("source=discrete\nd=0.5\nd=0.6\n").unwrap_err();
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn triggered_discrete_config() {
        let c = parse("source = discrete\nschedule=cycle8\nN=1e5\nd=0.8\ntrigger=on\ntrigger_eff=0.5\nseed=9\n").unwrap();
        assert!(c.trigger);
        assert_eq!(c.error_model().selection(), crate::simulate::Selection::Fourfold);
        assert_eq!(c.trials, 100_000);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn schedules() {
        let c = parse("source=continuous\nschedule=fixed\nsetting=pi/2, 0, 0.3pi\n").unwrap();
        assert_eq!(c.schedule, Schedule::fixed([FRAC_PI_2, 0.0, 0.3 * PI]));
        let c = parse("source=continuous\nschedule=cycle\nsettings=0,0,0; pi,0,0\n").unwrap();
        assert_eq!(c.schedule.group_count(), 2);
        let c = parse("source=continuous\nschedule=uniform\nbins=16\n").unwrap();
        assert_eq!(c.schedule, Schedule::Uniform { bins: 16 });
        assert_eq!(parse("source=continuous\nschedule=fixed\n").unwrap_err().line, Some(2));
        assert_eq!(parse("source=discrete\nschedule=uniform\n").unwrap_err().line, Some(2));
        assert_eq!(parse("source=discrete\nbins=3\n").unwrap_err().line, Some(2));
    }

    #[test]
    fn continuous_solver_keys() {
        let c = parse("source=continuous\ndelta=0.5pi/3\ngrid=512\ntol=2e-3\n").unwrap();
        assert_eq!(c.solver.delta.get(), 0.5 * PI / 3.0);
        assert_eq!(c.solver.grid_n, 512);
        assert_eq!(c.solver.tol, 2e-3);
        assert_eq!(parse("source=continuous\ndelta=1.2pi/3\n").unwrap_err().line, Some(2));
        let c = parse("source=continuous\nsolution=sol.json\n").unwrap();
        assert_eq!(c.solution, Some(PathBuf::from("/cfg/sol.json")));
        assert!(parse("source=continuous\nsolution=s.json\ngrid=512\n").is_err());
        assert!(parse("source=discrete\ndelta=0.5\n").is_err());
    }
}
