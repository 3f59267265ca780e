//! Domain vocabulary: strategies, game and coevolution parameters, seeding
//! modes and the full simulation configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The three actions an agent can play.
///
/// Serialized codes are stable: `C = 0`, `D = 1`, `A = 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Strategy {
    Cooperator = 0,
    Defector = 1,
    Abstainer = 2,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Cooperator, Strategy::Defector, Strategy::Abstainer];

    #[inline]
    pub fn code(self) -> u8 {
        self as u8
    }

    #[inline]
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Strategy::Cooperator),
            1 => Some(Strategy::Defector),
            2 => Some(Strategy::Abstainer),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Strategy::Cooperator => 'C',
            Strategy::Defector => 'D',
            Strategy::Abstainer => 'A',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'C' => Some(Strategy::Cooperator),
            'D' => Some(Strategy::Defector),
            'A' => Some(Strategy::Abstainer),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_char())
    }
}

/// Normalized weak prisoner's dilemma payoffs with a loner's payoff.
///
/// Only the temptation `b` and loner's payoff `l` are free; `R = 1`,
/// `P = S = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub b: f64,
    pub l: f64,
}

impl GameParams {
    pub const REWARD: f64 = 1.0;
    pub const PUNISHMENT: f64 = 0.0;
    pub const SUCKER: f64 = 0.0;

    pub fn new(b: f64, l: f64) -> Self {
        GameParams { b, l }
    }

    #[inline]
    pub fn temptation(&self) -> f64 {
        self.b
    }

    #[inline]
    pub fn loner(&self) -> f64 {
        self.l
    }
}

/// Link-weight step (`big_delta`) and weight amplitude (`small_delta`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoevParams {
    pub big_delta: f64,
    pub small_delta: f64,
}

impl CoevParams {
    pub fn new(big_delta: f64, small_delta: f64) -> Self {
        CoevParams {
            big_delta,
            small_delta,
        }
    }

    /// Static network: weights never leave 1.0.
    pub fn frozen() -> Self {
        CoevParams::new(0.0, 0.0)
    }

    #[inline]
    pub fn lower_bound(&self) -> f64 {
        1.0 - self.small_delta
    }

    #[inline]
    pub fn upper_bound(&self) -> f64 {
        1.0 + self.small_delta
    }

    #[inline]
    pub fn clamp(&self, w: f64) -> f64 {
        w.max(self.lower_bound()).min(self.upper_bound())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Placement {
    RandomCell,
    CenterCell,
}

impl Placement {
    pub fn as_str(self) -> &'static str {
        match self {
            Placement::RandomCell => "random",
            Placement::CenterCell => "center",
        }
    }
}

impl FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Placement::RandomCell),
            "center" => Ok(Placement::CenterCell),
            other => Err(format!("unknown placement `{other}` (expected random|center)")),
        }
    }
}

/// How the initial strategies are laid out on the lattice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SeedingSpec {
    /// Each cell independently uniform over {C, D, A}.
    Unbiased,
    /// Exactly `round(f * N)` abstainers; the rest split evenly between C and D.
    BiasedFraction { abstainer_fraction: f64 },
    /// One abstainer, everything else split evenly between C and D.
    SingleAbstainer { placement: Placement },
    /// One cooperator and one defector in a sea of abstainers.
    AllAbstainersExceptPair,
}

impl SeedingSpec {
    pub fn mode_name(&self) -> &'static str {
        match self {
            SeedingSpec::Unbiased => "unbiased",
            SeedingSpec::BiasedFraction { .. } => "biased",
            SeedingSpec::SingleAbstainer { .. } => "single-abstainer",
            SeedingSpec::AllAbstainersExceptPair => "all-abstainers-except-pair",
        }
    }

    /// Compact label used in summary tables, e.g. `biased:0.05`.
    pub fn label(&self) -> String {
        match self {
            SeedingSpec::BiasedFraction { abstainer_fraction } => {
                format!("biased:{abstainer_fraction}")
            }
            SeedingSpec::SingleAbstainer { placement } => {
                format!("single-abstainer:{}", placement.as_str())
            }
            other => other.mode_name().to_string(),
        }
    }
}

/// Complete description of one simulation (all replicates share it).
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub side: usize,
    pub game: GameParams,
    pub coev: CoevParams,
    pub steps: usize,
    pub tail_window: usize,
    pub seeding: SeedingSpec,
    pub rng_seed: u64,
    pub replicates: usize,
    pub snapshot_steps: Vec<usize>,
}

/// Preset scales for runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Profile {
    /// side 50, 2e4 steps, tail 1e3, 5 replicates.
    #[default]
    Desk,
    /// side 102, 1e5 steps, tail 1e3, 10 replicates.
    Paper,
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(format!("unknown profile `{other}` (expected desk|paper)")),
        }
    }
}

impl SimConfig {
    /// Profile defaults with the headline game (b = 1.9, l = 0.6, Δ = 0.72, δ = 0.8).
    pub fn from_profile(profile: Profile) -> Self {
        let (side, steps, replicates) = match profile {
            Profile::Desk => (50, 20_000, 5),
            Profile::Paper => (102, 100_000, 10),
        };
        SimConfig {
            side,
            game: GameParams::new(1.9, 0.6),
            coev: CoevParams::new(0.72, 0.8),
            steps,
            tail_window: 1_000,
            seeding: SeedingSpec::Unbiased,
            rng_seed: 0,
            replicates,
            snapshot_steps: Vec::new(),
        }
    }

    #[inline]
    pub fn population(&self) -> usize {
        self.side * self.side
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::from_profile(Profile::Desk)
    }
}

/// One violated constraint, naming the field and the bound.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ConstraintViolation {
    pub field: &'static str,
    pub message: String,
}

impl ConstraintViolation {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        ConstraintViolation {
            field,
            message: message.into(),
        }
    }
}

/// Every violated constraint of a rejected config.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("invalid configuration: {}", join(.0))]
pub struct ValidationErrors(pub Vec<ConstraintViolation>);

fn join(v: &[ConstraintViolation]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; ")
}

/// Checks every parameter constraint and reports all violations at once.
///
/// `l = 0` and `Δ = 0` / `δ = 0` are accepted so that the CPD, OPD and PD
/// reductions can be expressed.
pub fn validate_config(config: SimConfig) -> Result<SimConfig, ValidationErrors> {
    let mut errs = Vec::new();
    let b = config.game.b;
    let l = config.game.l;
    let big = config.coev.big_delta;
    let small = config.coev.small_delta;

    if !b.is_finite() || b <= 1.0 {
        errs.push(ConstraintViolation::new("b", format!("must exceed 1 (got {b})")));
    } else if b >= 2.0 {
        errs.push(ConstraintViolation::new("b", format!("must be below 2 (got {b})")));
    }
    if !l.is_finite() || l < 0.0 {
        errs.push(ConstraintViolation::new("l", format!("must be at least 0 (got {l})")));
    } else if l >= 1.0 {
        errs.push(ConstraintViolation::new("l", format!("must be below 1 (got {l})")));
    }
    if !small.is_finite() || small < 0.0 {
        errs.push(ConstraintViolation::new(
            "small_delta",
            format!("must be at least 0 (got {small})"),
        ));
    } else if small > 1.0 {
        errs.push(ConstraintViolation::new(
            "small_delta",
            format!("must be at most 1 (got {small})"),
        ));
    }
    if !big.is_finite() || big < 0.0 {
        errs.push(ConstraintViolation::new(
            "big_delta",
            format!("must be at least 0 (got {big})"),
        ));
    } else if small.is_finite() && big > small {
        errs.push(ConstraintViolation::new(
            "big_delta",
            format!("must satisfy big_delta <= small_delta (got {big} > {small})"),
        ));
    }
    if config.side < 3 {
        errs.push(ConstraintViolation::new(
            "side",
            format!("must be at least 3 (got {})", config.side),
        ));
    }
    if config.steps == 0 {
        errs.push(ConstraintViolation::new("steps", "must be positive"));
    }
    if config.tail_window == 0 {
        errs.push(ConstraintViolation::new("tail_window", "must be positive"));
    } else if config.tail_window > config.steps {
        errs.push(ConstraintViolation::new(
            "tail_window",
            format!(
                "must not exceed steps ({} > {})",
                config.tail_window, config.steps
            ),
        ));
    }
    if config.replicates == 0 {
        errs.push(ConstraintViolation::new("replicates", "must be positive"));
    }
    if let SeedingSpec::BiasedFraction { abstainer_fraction } = config.seeding {
        if !(0.0..=1.0).contains(&abstainer_fraction) {
            errs.push(ConstraintViolation::new(
                "seeding.abstainer_fraction",
                format!("must lie in [0, 1] (got {abstainer_fraction})"),
            ));
        }
    }
    if let Some(&bad) = config.snapshot_steps.iter().find(|&&s| s > config.steps) {
        errs.push(ConstraintViolation::new(
            "snapshot_steps",
            format!("step {bad} is beyond the last step {}", config.steps),
        ));
    }

    if errs.is_empty() {
        Ok(config)
    } else {
        Err(ValidationErrors(errs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn headline() -> SimConfig {
        SimConfig {
            side: 102,
            game: GameParams::new(1.9, 0.6),
            coev: CoevParams::new(0.72, 0.8),
            ..SimConfig::default()
        }
    }

    #[test]
    fn headline_config_is_valid() {
        let cfg = headline();
        assert_eq!(validate_config(cfg.clone()), Ok(cfg));
    }

    #[test]
    fn b_at_one_is_rejected() {
        let mut cfg = headline();
        cfg.game.b = 1.0;
        let errs = validate_config(cfg).unwrap_err().0;
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].field, "b");
        assert!(errs[0].message.contains("exceed 1"));
    }

    #[test]
    fn big_delta_above_small_delta_is_rejected() {
        let mut cfg = headline();
        cfg.coev = CoevParams::new(0.9, 0.8);
        let errs = validate_config(cfg).unwrap_err().0;
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].field, "big_delta");
    }

    #[test]
    fn all_violations_are_reported() {
        let mut cfg = headline();
        cfg.game = GameParams::new(2.5, 1.0);
        cfg.side = 2;
        cfg.tail_window = cfg.steps + 1;
        let errs = validate_config(cfg).unwrap_err().0;
        let fields: Vec<_> = errs.iter().map(|e| e.field).collect();
        assert_eq!(fields, ["b", "l", "side", "tail_window"]);
    }

    #[test]
    fn reductions_are_accepted() {
        let mut cfg = headline();
        cfg.game.l = 0.0;
        cfg.coev = CoevParams::frozen();
        assert!(validate_config(cfg).is_ok());
    }

    #[test]
    fn validation_is_idempotent() {
        let cfg = validate_config(headline()).unwrap();
        assert_eq!(validate_config(cfg.clone()).unwrap(), cfg);
    }

    #[test]
    fn strategy_codes_are_stable() {
        assert_eq!(Strategy::Cooperator.code(), 0);
        assert_eq!(Strategy::Defector.code(), 1);
        assert_eq!(Strategy::Abstainer.code(), 2);
        for s in Strategy::ALL {
            assert_eq!(Strategy::from_code(s.code()), Some(s));
            assert_eq!(Strategy::from_char(s.to_char()), Some(s));
        }
        assert_eq!(Strategy::from_code(3), None);
    }
}
