//! Complete runs, replicate batches and parameter sweeps.
//!
//! Per-run seeds come from [`derive_seed`], a pure function of the base seed,
//! the sweep point index and the replicate index. Execution order therefore
//! never affects results: the same inputs give the same numbers for any
//! worker-pool size.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rayon::prelude::*;

use crate::config::to_config_string;
use crate::draws::SimRng;
use crate::dynamics::Engine;
use crate::lattice::{build_lattice, Grid};
use crate::metrics::{
    aggregate_replicates, record_fractions, summary_row, tail_average, Aggregate, Fractions,
    InvariantReport, RunResult, SUMMARY_HEADER,
};
use crate::model::{validate_config, SeedingSpec, SimConfig, Strategy, ValidationErrors};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replicate `replicate` of sweep point `point`:
///
/// `splitmix64(splitmix64(base ^ splitmix64(point)) ^ replicate)`
///
/// A single run outside a sweep is point 0.
pub fn derive_seed(base: u64, point: u64, replicate: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(point)) ^ replicate)
}

/// Stable identifier of everything that shapes a run except its seed and
/// the replicate count (FNV-1a over the canonical config text).
pub fn config_digest(config: &SimConfig) -> String {
    let mut canonical = config.clone();
    canonical.rng_seed = 0;
    canonical.replicates = 1;
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in to_config_string(&canonical).bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Check weight bounds, population conservation and fraction sums after
    /// every elementary step.
    pub check_invariants: bool,
}

/// Runs one simulation and also hands back the final lattice.
pub fn run_simulation_with_grid(
    config: &SimConfig,
    seed: u64,
    opts: RunOptions,
) -> Result<(RunResult, Grid), ValidationErrors> {
    let config = validate_config(config.clone())?;
    let mut rng = SimRng::seed_from_u64(seed);
    let mut grid = build_lattice(config.side, config.seeding, config.coev, &mut rng)
        .expect("validated side");
    let engine = Engine::new(&config.game, &config.coev);

    let mut series = Vec::with_capacity(config.steps + 1);
    let mut snapshots = BTreeMap::new();
    let mut report = opts.check_invariants.then(InvariantReport::default);

    series.push(record_fractions(&grid, 0));
    if config.snapshot_steps.contains(&0) {
        snapshots.insert(0, grid.strategies().to_vec());
    }
    for step in 1..=config.steps {
        match report.as_mut() {
            None => engine.mc_step(&mut grid, &mut rng),
            Some(report) => checked_mc_step(&engine, &mut grid, &mut rng, report),
        }
        let sample = record_fractions(&grid, step);
        if let Some(report) = report.as_mut() {
            let sum = sample.rho.c + sample.rho.d + sample.rho.a;
            if !(sum - 1.0).abs().le(&1e-12) || sample.rho.as_array().iter().any(|v| !(0.0..=1.0).contains(v)) {
                report.fraction_sum += 1;
            }
        }
        series.push(sample);
        if config.snapshot_steps.contains(&step) {
            snapshots.insert(step, grid.strategies().to_vec());
        }
    }

    let final_fractions = tail_average(&series, config.tail_window).expect("validated window");
    let result = RunResult {
        series,
        final_fractions,
        snapshots,
        config_digest: config_digest(&config),
        seed,
        invariants: report,
    };
    Ok((result, grid))
}

fn checked_mc_step(engine: &Engine, grid: &mut Grid, rng: &mut SimRng, report: &mut InvariantReport) {
    let n = grid.population();
    let (lo, hi) = (grid.coev().lower_bound(), grid.coev().upper_bound());
    for _ in 0..n {
        let step = engine.elementary_step(grid, rng);
        let x = step.cell;
        report.checked_steps += 1;
        let after = grid.strategy(x);
        if after != step.previous && after != grid.strategy(step.adoption.source) {
            report.foreign_strategy += 1;
        }
        if grid.link_weights(x).iter().any(|w| !(lo..=hi).contains(w)) {
            report.weight_bound += 1;
        }
        let counts = grid.counts();
        if counts.iter().sum::<usize>() != n {
            report.population += 1;
        }
    }
    if grid.recount() != grid.counts() {
        report.population += 1;
    }
    report.weight_bound += grid.weight_bound_violations() as u64;
}

/// Runs one simulation. Identical `(config, seed)` give identical results.
pub fn run_simulation(config: &SimConfig, seed: u64) -> Result<RunResult, ValidationErrors> {
    run_simulation_with_grid(config, seed, RunOptions::default()).map(|(r, _)| r)
}

#[derive(Clone, Debug)]
pub struct Replicates {
    pub results: Vec<RunResult>,
    pub aggregate: Aggregate,
}

/// `n` independent runs seeded by `derive_seed(base_seed, 0, k)`, executed on
/// the current rayon pool.
pub fn run_replicates(
    config: &SimConfig,
    base_seed: u64,
    n: usize,
    opts: RunOptions,
) -> Result<Replicates, ValidationErrors> {
    let config = validate_config(config.clone())?;
    assert!(n >= 1, "at least one replicate");
    let results = (0..n)
        .into_par_iter()
        .map(|k| run_simulation_with_grid(&config, derive_seed(base_seed, 0, k as u64), opts).map(|(r, _)| r))
        .collect::<Result<Vec<_>, _>>()?;
    let aggregate = aggregate_replicates(&results).expect("same config");
    Ok(Replicates { results, aggregate })
}

/// Parameters a sweep can vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepParam {
    B,
    L,
    BigDelta,
    SmallDelta,
    AbstainerFraction,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::B => "b",
            SweepParam::L => "l",
            SweepParam::BigDelta => "big_delta",
            SweepParam::SmallDelta => "small_delta",
            SweepParam::AbstainerFraction => "abstainer_fraction",
        }
    }

    pub fn apply(self, config: &mut SimConfig, value: f64) {
        match self {
            SweepParam::B => config.game.b = value,
            SweepParam::L => config.game.l = value,
            SweepParam::BigDelta => config.coev.big_delta = value,
            SweepParam::SmallDelta => config.coev.small_delta = value,
            SweepParam::AbstainerFraction => {
                config.seeding = SeedingSpec::BiasedFraction {
                    abstainer_fraction: value,
                }
            }
        }
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "b" => Ok(SweepParam::B),
            "l" => Ok(SweepParam::L),
            "big_delta" | "big-delta" => Ok(SweepParam::BigDelta),
            "small_delta" | "small-delta" => Ok(SweepParam::SmallDelta),
            "abstainer_fraction" | "abstainer-fraction" => Ok(SweepParam::AbstainerFraction),
            other => Err(format!(
                "unknown sweep parameter `{other}` (expected b|l|big_delta|small_delta|abstainer_fraction)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub axes: Vec<(SweepParam, Vec<f64>)>,
    pub base: SimConfig,
    pub replicates_per_point: usize,
}

impl SweepSpec {
    /// Every grid point in lexicographic axis order (first axis slowest).
    pub fn points(&self) -> Vec<SimConfig> {
        let mut points = vec![self.base.clone()];
        for (param, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|cfg| {
                    values.iter().map(move |&v| {
                        let mut next = cfg.clone();
                        param.apply(&mut next, v);
                        next
                    })
                })
                .collect();
        }
        points
    }
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub index: usize,
    pub config: SimConfig,
    pub outcome: Result<Aggregate, String>,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
}

impl SweepOutcome {
    /// Summary CSV, one row per point in point order.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for p in &self.points {
            out.push_str(&summary_row(&p.config, &p.outcome));
            out.push('\n');
        }
        out
    }
}

/// Runs every valid point of `spec`. `sink` sees each finished run (for
/// writing per-replicate outputs); its error is recorded on the point.
/// Invalid points are reported, not fatal.
pub fn run_sweep_with<F>(spec: &SweepSpec, base_seed: u64, opts: RunOptions, sink: F) -> SweepOutcome
where
    F: Fn(usize, usize, &SimConfig, &RunResult) -> Result<(), String> + Sync,
{
    let configs: Vec<Result<SimConfig, String>> = spec
        .points()
        .into_iter()
        .map(|c| validate_config(c).map_err(|e| e.to_string()))
        .collect();
    let reps = spec.replicates_per_point.max(1);

    let jobs: Vec<(usize, usize)> = configs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_ok())
        .flat_map(|(i, _)| (0..reps).map(move |k| (i, k)))
        .collect();

    let finished: Vec<(usize, usize, Result<RunResult, String>)> = jobs
        .into_par_iter()
        .map(|(i, k)| {
            let cfg = configs[i].as_ref().expect("filtered");
            let seed = derive_seed(base_seed, i as u64, k as u64);
            let run = run_simulation_with_grid(cfg, seed, opts)
                .map_err(|e| e.to_string())
                .and_then(|(mut r, _)| {
                    sink(i, k, cfg, &r)?;
                    r.series = Vec::new();
                    r.snapshots.clear();
                    Ok(r)
                });
            (i, k, run)
        })
        .collect();

    let mut per_point: BTreeMap<usize, Vec<(usize, Result<RunResult, String>)>> = BTreeMap::new();
    for (i, k, r) in finished {
        per_point.entry(i).or_default().push((k, r));
    }

    let points = configs
        .into_iter()
        .enumerate()
        .map(|(index, cfg)| match cfg {
            Err(msg) => SweepPoint {
                index,
                config: spec.points()[index].clone(),
                outcome: Err(msg),
            },
            Ok(config) => {
                let mut runs = per_point.remove(&index).unwrap_or_default();
                runs.sort_by_key(|(k, _)| *k);
                let outcome = runs
                    .into_iter()
                    .map(|(_, r)| r)
                    .collect::<Result<Vec<_>, _>>()
                    .and_then(|rs| aggregate_replicates(&rs).map_err(|e| e.to_string()));
                SweepPoint {
                    index,
                    config,
                    outcome,
                }
            }
        })
        .collect();
    SweepOutcome { points }
}

pub fn run_sweep(spec: &SweepSpec, base_seed: u64) -> SweepOutcome {
    run_sweep_with(spec, base_seed, RunOptions::default(), |_, _, _, _| Ok(()))
}

/// Which strategies survive in a run's tail average.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub cooperators: bool,
    pub defectors: bool,
    pub abstainers: bool,
}

impl Outcome {
    pub fn label(&self) -> String {
        let present: Vec<char> = [
            (self.cooperators, 'C'),
            (self.defectors, 'D'),
            (self.abstainers, 'A'),
        ]
        .iter()
        .filter(|(p, _)| *p)
        .map(|(_, c)| *c)
        .collect();
        match present.len() {
            0 => "none".to_string(),
            1 => format!("{}-dominant", present[0]),
            _ => present.into_iter().collect(),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub const COEXISTENCE_THRESHOLD: f64 = 0.01;

pub fn classify_fractions(rho: &Fractions, threshold: f64) -> Outcome {
    Outcome {
        cooperators: rho.get(Strategy::Cooperator) > threshold,
        defectors: rho.get(Strategy::Defector) > threshold,
        abstainers: rho.get(Strategy::Abstainer) > threshold,
    }
}

pub fn classify_outcome(result: &RunResult, threshold: f64) -> Outcome {
    classify_fractions(&result.final_fractions, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoevParams, GameParams};

    fn small(steps: usize) -> SimConfig {
        SimConfig {
            side: 12,
            steps,
            tail_window: steps.min(5),
            game: GameParams::new(1.9, 0.6),
            coev: CoevParams::new(0.72, 0.8),
            ..SimConfig::default()
        }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(derive_seed(7, 0, 0), derive_seed(7, 0, 0));
        let mut seen = std::collections::HashSet::new();
        for p in 0..20 {
            for k in 0..20 {
                assert!(seen.insert(derive_seed(42, p, k)));
            }
        }
        // splitmix64 reference output for a zero state
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = small(30);
        let a = run_simulation(&cfg, 99).unwrap();
        let b = run_simulation(&cfg, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.series.len(), 31);
        assert_ne!(run_simulation(&cfg, 100).unwrap().series, a.series);
    }

    #[test]
    fn snapshots_only_at_requested_steps() {
        let mut cfg = small(10);
        cfg.snapshot_steps = vec![0, 3, 10];
        let r = run_simulation(&cfg, 1).unwrap();
        assert_eq!(r.snapshots.keys().copied().collect::<Vec<_>>(), vec![0, 3, 10]);
        assert!(r.snapshots.values().all(|s| s.len() == 144));
    }

    #[test]
    fn digest_ignores_seed_and_replicates() {
        let mut a = small(10);
        let mut b = a.clone();
        a.rng_seed = 1;
        b.rng_seed = 2;
        b.replicates = 9;
        assert_eq!(config_digest(&a), config_digest(&b));
        b.game.b = 1.5;
        assert_ne!(config_digest(&a), config_digest(&b));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = small(10);
        cfg.game.b = 2.5;
        assert!(run_simulation(&cfg, 0).is_err());
    }

    #[test]
    fn single_replicate_aggregate_equals_run() {
        let cfg = small(20);
        let reps = run_replicates(&cfg, 5, 1, RunOptions::default()).unwrap();
        assert_eq!(reps.aggregate.mean, reps.results[0].final_fractions);
        assert_eq!(reps.aggregate.sd, Fractions::default());
        let direct = run_simulation(&cfg, derive_seed(5, 0, 0)).unwrap();
        assert_eq!(direct, reps.results[0]);
    }

    #[test]
    fn aggregate_ignores_completion_order() {
        let cfg = small(20);
        let mut reps = run_replicates(&cfg, 3, 4, RunOptions::default()).unwrap();
        reps.results.reverse();
        let again = aggregate_replicates(&reps.results).unwrap();
        for (a, b) in again.mean.as_array().iter().zip(reps.aggregate.mean.as_array()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn sweep_points_are_lexicographic() {
        let spec = SweepSpec {
            axes: vec![(SweepParam::B, vec![1.2, 1.5]), (SweepParam::L, vec![0.1, 0.2, 0.3])],
            base: small(5),
            replicates_per_point: 1,
        };
        let pts: Vec<_> = spec.points().iter().map(|c| (c.game.b, c.game.l)).collect();
        assert_eq!(
            pts,
            vec![(1.2, 0.1), (1.2, 0.2), (1.2, 0.3), (1.5, 0.1), (1.5, 0.2), (1.5, 0.3)]
        );
    }

    #[test]
    fn invalid_sweep_points_are_reported() {
        let spec = SweepSpec {
            axes: vec![(SweepParam::BigDelta, vec![0.4, 0.9])],
            base: small(5),
            replicates_per_point: 2,
        };
        let out = run_sweep(&spec, 1);
        assert!(out.points[0].outcome.is_ok());
        let err = out.points[1].outcome.as_ref().unwrap_err();
        assert!(err.contains("big_delta"));
        let csv = out.summary_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(2).unwrap().contains("big_delta"));
    }

    #[test]
    fn single_point_sweep_matches_replicates() {
        let cfg = small(15);
        let spec = SweepSpec {
            axes: vec![],
            base: cfg.clone(),
            replicates_per_point: 3,
        };
        let out = run_sweep(&spec, 11);
        let reps = run_replicates(&cfg, 11, 3, RunOptions::default()).unwrap();
        assert_eq!(out.points.len(), 1);
        assert_eq!(out.points[0].outcome.as_ref().unwrap(), &reps.aggregate);
    }

    #[test]
    fn checked_runs_report_no_violations() {
        let cfg = small(10);
        let (r, grid) = run_simulation_with_grid(&cfg, 4, RunOptions { check_invariants: true }).unwrap();
        let report = r.invariants.unwrap();
        assert_eq!(report.checked_steps, 10 * 144);
        assert_eq!(report.violations(), 0);
        assert_eq!(grid.weight_bound_violations(), 0);
        // checking must not perturb the trajectory
        assert_eq!(run_simulation(&cfg, 4).unwrap().series, r.series);
    }

    #[test]
    fn classification_labels() {
        let f = |c, d, a| classify_fractions(&Fractions { c, d, a }, COEXISTENCE_THRESHOLD).label();
        assert_eq!(f(1.0, 0.0, 0.0), "C-dominant");
        assert_eq!(f(0.0, 0.0, 1.0), "A-dominant");
        assert_eq!(f(0.5, 0.5, 0.004), "CD");
        assert_eq!(f(0.3, 0.3, 0.4), "CDA");
        assert_eq!(f(0.6, 0.0, 0.4), "CA");
        assert_eq!(f(0.0, 0.02, 0.98), "DA");
    }
}
