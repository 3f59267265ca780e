//! Strategy fractions, tail averages, replicate aggregation and the
//! snapshot/CSV writers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::lattice::{Grid, LatticeError};
use crate::model::{SimConfig, Strategy};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("tail window {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("cannot aggregate results from different configurations ({0} vs {1})")]
    MixedConfigs(String, String),
    #[error("nothing to aggregate")]
    Empty,
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl MetricsError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        MetricsError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Strategy fractions (C, D, A).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Fractions {
    pub c: f64,
    pub d: f64,
    pub a: f64,
}

impl Fractions {
    pub fn as_array(&self) -> [f64; 3] {
        [self.c, self.d, self.a]
    }

    pub fn from_array([c, d, a]: [f64; 3]) -> Self {
        Fractions { c, d, a }
    }

    pub fn get(&self, s: Strategy) -> f64 {
        self.as_array()[s.code() as usize]
    }
}

/// One row of a time series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FractionSample {
    pub step: usize,
    pub rho: Fractions,
    /// Mean link weight over all edges.
    pub mean_weight: f64,
}

pub fn fractions_from_counts(counts: [usize; 3]) -> Fractions {
    let n = (counts[0] + counts[1] + counts[2]) as f64;
    Fractions::from_array(counts.map(|c| c as f64 / n))
}

pub fn record_fractions(grid: &Grid, step: usize) -> FractionSample {
    FractionSample {
        step,
        rho: fractions_from_counts(grid.counts()),
        mean_weight: grid.mean_weight(),
    }
}

/// Componentwise mean of the last `window` samples.
pub fn tail_average(series: &[FractionSample], window: usize) -> Result<Fractions, MetricsError> {
    if window == 0 || window > series.len() {
        return Err(MetricsError::WindowTooLarge {
            window,
            len: series.len(),
        });
    }
    let mut sum = [0.0; 3];
    for s in &series[series.len() - window..] {
        for (acc, v) in sum.iter_mut().zip(s.rho.as_array()) {
            *acc += v;
        }
    }
    Ok(Fractions::from_array(sum.map(|v| v / window as f64)))
}

/// Counters filled when a run executes with invariant checking on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InvariantReport {
    pub checked_steps: u64,
    pub weight_bound: u64,
    pub fraction_sum: u64,
    pub population: u64,
    pub foreign_strategy: u64,
}

impl InvariantReport {
    pub fn violations(&self) -> u64 {
        self.weight_bound + self.fraction_sum + self.population + self.foreign_strategy
    }

    pub fn merge(&mut self, other: &InvariantReport) {
        self.checked_steps += other.checked_steps;
        self.weight_bound += other.weight_bound;
        self.fraction_sum += other.fraction_sum;
        self.population += other.population;
        self.foreign_strategy += other.foreign_strategy;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    /// Step 0 plus one sample per MC step.
    pub series: Vec<FractionSample>,
    pub final_fractions: Fractions,
    pub snapshots: BTreeMap<usize, Vec<Strategy>>,
    pub config_digest: String,
    pub seed: u64,
    pub invariants: Option<InvariantReport>,
}

/// Mean and sample standard deviation of final fractions across replicates.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub mean: Fractions,
    pub sd: Fractions,
    pub replicates: usize,
}

pub fn aggregate_replicates(results: &[RunResult]) -> Result<Aggregate, MetricsError> {
    let first = results.first().ok_or(MetricsError::Empty)?;
    if let Some(other) = results.iter().find(|r| r.config_digest != first.config_digest) {
        return Err(MetricsError::MixedConfigs(
            first.config_digest.clone(),
            other.config_digest.clone(),
        ));
    }
    let n = results.len() as f64;
    let mut mean = [0.0; 3];
    for r in results {
        for (m, v) in mean.iter_mut().zip(r.final_fractions.as_array()) {
            *m += v;
        }
    }
    let mean = mean.map(|m| m / n);
    let mut var = [0.0; 3];
    if results.len() > 1 {
        for r in results {
            for ((acc, v), m) in var.iter_mut().zip(r.final_fractions.as_array()).zip(mean) {
                *acc += (v - m) * (v - m);
            }
        }
        var = var.map(|v| v / (n - 1.0));
    }
    Ok(Aggregate {
        mean: Fractions::from_array(mean),
        sd: Fractions::from_array(var.map(f64::sqrt)),
        replicates: results.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotFormat {
    TextGrid,
    PortablePixmap,
}

impl SnapshotFormat {
    pub fn extension(self) -> &'static str {
        match self {
            SnapshotFormat::TextGrid => "txt",
            SnapshotFormat::PortablePixmap => "ppm",
        }
    }
}

/// Colors used in pixmap snapshots: C blue, D red, A green.
pub fn color(s: Strategy) -> [u8; 3] {
    match s {
        Strategy::Cooperator => [0, 0, 255],
        Strategy::Defector => [255, 0, 0],
        Strategy::Abstainer => [0, 255, 0],
    }
}

pub fn export_snapshot(grid: &Grid, format: SnapshotFormat) -> Vec<u8> {
    encode_snapshot(grid.side(), grid.strategies(), format)
}

pub fn encode_snapshot(side: usize, cells: &[Strategy], format: SnapshotFormat) -> Vec<u8> {
    match format {
        SnapshotFormat::TextGrid => {
            let mut out = Vec::with_capacity(side * (side + 1));
            for row in cells.chunks(side) {
                out.extend(row.iter().map(|s| s.to_char() as u8));
                out.push(b'\n');
            }
            out
        }
        SnapshotFormat::PortablePixmap => {
            let mut out = format!("P6\n{side} {side}\n255\n").into_bytes();
            out.reserve(3 * cells.len());
            for &s in cells {
                out.extend_from_slice(&color(s));
            }
            out
        }
    }
}

/// Inverse of the text snapshot encoding.
pub fn parse_text_grid(text: &str) -> Result<(usize, Vec<Strategy>), LatticeError> {
    let rows: Vec<&str> = text.lines().collect();
    let side = rows.len();
    let mut cells = Vec::with_capacity(side * side);
    for (i, row) in rows.iter().enumerate() {
        if row.chars().count() != side {
            return Err(LatticeError::Malformed(format!(
                "row {i} has {} cells, expected {side}",
                row.chars().count()
            )));
        }
        for c in row.chars() {
            cells.push(
                Strategy::from_char(c)
                    .ok_or_else(|| LatticeError::Malformed(format!("unexpected `{c}` in row {i}")))?,
            );
        }
    }
    Ok((side, cells))
}

pub const TIMESERIES_HEADER: &str = "step,rho_c,rho_d,rho_a,mean_w";

/// Fractions in millionths, rounded by largest remainder so that the three
/// printed values always sum to exactly 1. Ties go to the later strategy.
fn micro_units(rho: &Fractions) -> [u64; 3] {
    const SCALE: f64 = 1_000_000.0;
    let scaled = rho.as_array().map(|v| v.clamp(0.0, 1.0) * SCALE);
    let mut units = scaled.map(|v| v.floor() as u64);
    let total: u64 = units.iter().sum();
    let target = SCALE as u64;
    if total < target {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| {
            let (fi, fj) = (scaled[i] - units[i] as f64, scaled[j] - units[j] as f64);
            fj.total_cmp(&fi).then(j.cmp(&i))
        });
        for &i in order.iter().take((target - total) as usize) {
            units[i] += 1;
        }
    }
    units
}

fn fmt_micro(units: u64) -> String {
    format!("{}.{:06}", units / 1_000_000, units % 1_000_000)
}

pub fn write_timeseries<W: Write>(series: &[FractionSample], mut out: W) -> io::Result<()> {
    writeln!(out, "{TIMESERIES_HEADER}")?;
    for s in series {
        let [c, d, a] = micro_units(&s.rho).map(fmt_micro);
        writeln!(out, "{},{c},{d},{a},{:.6}", s.step, s.mean_weight)?;
    }
    out.flush()
}

pub fn write_timeseries_csv(result: &RunResult, path: &Path) -> Result<(), MetricsError> {
    let file = File::create(path).map_err(|e| MetricsError::io(path, e))?;
    write_timeseries(&result.series, BufWriter::new(file)).map_err(|e| MetricsError::io(path, e))
}

pub const SUMMARY_HEADER: &str = "b,l,big_delta,small_delta,seeding,mean_rho_c,sd_rho_c,mean_rho_d,sd_rho_d,mean_rho_a,sd_rho_a,replicates,error";

/// One summary row; `outcome` is either the aggregate or an error message.
pub fn summary_row(config: &SimConfig, outcome: &Result<Aggregate, String>) -> String {
    let prefix = format!(
        "{},{},{},{},{}",
        config.game.b,
        config.game.l,
        config.coev.big_delta,
        config.coev.small_delta,
        config.seeding.label()
    );
    match outcome {
        Ok(agg) => format!(
            "{prefix},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},",
            agg.mean.c, agg.sd.c, agg.mean.d, agg.sd.d, agg.mean.a, agg.sd.a, agg.replicates
        ),
        Err(msg) => format!("{prefix},,,,,,,0,{}", csv_escape(msg)),
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CoevParams;
    use crate::model::Strategy::{Abstainer, Cooperator, Defector};
    use proptest::prelude::{prop_assert, prop_assert_eq, prop_oneof, proptest, Just};
    use proptest::strategy::Strategy as _;

    fn sample(step: usize, c: f64, d: f64, a: f64) -> FractionSample {
        FractionSample {
            step,
            rho: Fractions { c, d, a },
            mean_weight: 1.0,
        }
    }

    fn result(digest: &str, c: f64) -> RunResult {
        RunResult {
            series: vec![],
            final_fractions: Fractions { c, d: 1.0 - c, a: 0.0 },
            snapshots: BTreeMap::new(),
            config_digest: digest.into(),
            seed: 0,
            invariants: None,
        }
    }

    #[test]
    fn fractions_of_small_grids() {
        let g = Grid::uniform(3, Cooperator, CoevParams::frozen()).unwrap();
        assert_eq!(record_fractions(&g, 0).rho, Fractions { c: 1.0, d: 0.0, a: 0.0 });

        let cells = vec![Cooperator, Cooperator, Cooperator, Cooperator, Defector, Defector, Defector, Abstainer, Abstainer];
        let g = Grid::from_strategies(3, cells, CoevParams::frozen()).unwrap();
        let s = record_fractions(&g, 4);
        assert_eq!(s.step, 4);
        assert_eq!(s.rho, Fractions { c: 4.0 / 9.0, d: 3.0 / 9.0, a: 2.0 / 9.0 });
        assert!((s.rho.c + s.rho.d + s.rho.a - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tail_average_cases() {
        let constant: Vec<_> = (0..10).map(|i| sample(i, 0.2, 0.3, 0.5)).collect();
        let t = tail_average(&constant, 4).unwrap();
        assert!((t.c - 0.2).abs() < 1e-15 && (t.d - 0.3).abs() < 1e-15 && (t.a - 0.5).abs() < 1e-15);

        let mixed = vec![sample(0, 0.1, 0.1, 0.8), sample(1, 0.7, 0.2, 0.1)];
        assert_eq!(tail_average(&mixed, 1).unwrap(), mixed[1].rho);

        let alternating: Vec<_> = (0..10)
            .map(|i| if i % 2 == 0 { sample(i, 0.0, 1.0, 0.0) } else { sample(i, 1.0, 0.0, 0.0) })
            .collect();
        assert_eq!(tail_average(&alternating, 6).unwrap().c, 0.5);

        assert!(matches!(
            tail_average(&mixed, 3),
            Err(MetricsError::WindowTooLarge { window: 3, len: 2 })
        ));
    }

    #[test]
    fn aggregate_cases() {
        let same: Vec<_> = (0..10).map(|_| result("x", 0.25)).collect();
        let agg = aggregate_replicates(&same).unwrap();
        assert_eq!(agg.mean.c, 0.25);
        assert_eq!(agg.sd.c, 0.0);
        assert_eq!(agg.replicates, 10);

        let pair = [result("x", 0.4), result("x", 0.6)];
        let agg = aggregate_replicates(&pair).unwrap();
        assert!((agg.mean.c - 0.5).abs() < 1e-15);
        assert!((agg.sd.c - (0.02f64).sqrt()).abs() < 1e-12);

        let one = aggregate_replicates(&[result("x", 0.3)]).unwrap();
        assert_eq!(one.mean.c, 0.3);
        assert_eq!(one.sd.c, 0.0);

        assert!(matches!(
            aggregate_replicates(&[result("x", 0.4), result("y", 0.4)]),
            Err(MetricsError::MixedConfigs(..))
        ));
        assert!(matches!(aggregate_replicates(&[]), Err(MetricsError::Empty)));
    }

    #[test]
    fn text_snapshot_of_abstainers() {
        let g = Grid::uniform(3, Abstainer, CoevParams::frozen()).unwrap();
        assert_eq!(export_snapshot(&g, SnapshotFormat::TextGrid), b"AAA\nAAA\nAAA\n");
    }

    #[test]
    fn pixmap_layout() {
        let g = Grid::uniform(102, Defector, CoevParams::frozen()).unwrap();
        let bytes = export_snapshot(&g, SnapshotFormat::PortablePixmap);
        let header = b"P6\n102 102\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 3 * 102 * 102);

        let g = Grid::uniform(3, Cooperator, CoevParams::frozen()).unwrap();
        let bytes = export_snapshot(&g, SnapshotFormat::PortablePixmap);
        let body = &bytes[b"P6\n3 3\n255\n".len()..];
        assert_eq!(body.len(), 27);
        assert!(body.chunks(3).all(|p| p == [0, 0, 255]));
    }

    #[test]
    fn csv_lines_and_formatting() {
        let mut buf = Vec::new();
        let series = vec![sample(0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0), sample(1, 1.0, 0.0, 0.0)];
        write_timeseries(&series, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], TIMESERIES_HEADER);
        assert_eq!(lines[1], "0,0.333333,0.333333,0.333334,1.000000");
        assert_eq!(lines[2], "1,1.000000,0.000000,0.000000,1.000000");
        assert!(text.ends_with('\n'));

        let mut buf = Vec::new();
        write_timeseries(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{TIMESERIES_HEADER}\n"));
    }

    #[test]
    fn io_errors_name_the_path() {
        let r = result("x", 0.5);
        let err = write_timeseries_csv(&r, Path::new("/nonexistent-dir/ts.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/ts.csv"));
    }

    #[test]
    fn summary_row_with_error() {
        let cfg = SimConfig::default();
        let row = summary_row(&cfg, &Err("b: must be below 2".into()));
        assert_eq!(row.split(',').count(), SUMMARY_HEADER.split(',').count());
        assert!(row.ends_with(",0,b: must be below 2"));
        let row = summary_row(&cfg, &Err("b: bad; l: bad, really".into()));
        assert!(row.ends_with(",0,\"b: bad; l: bad, really\""));
    }

    fn arb_cells() -> impl proptest::strategy::Strategy<Value = (usize, Vec<crate::model::Strategy>)> {
        (3usize..20).prop_flat_map(|side| {
            (
                Just(side),
                proptest::collection::vec(
                    prop_oneof![Just(Cooperator), Just(Defector), Just(Abstainer)],
                    side * side,
                ),
            )
        })
    }

    proptest! {
        #[test]
        fn text_snapshots_round_trip((side, cells) in arb_cells()) {
            let bytes = encode_snapshot(side, &cells, SnapshotFormat::TextGrid);
            let (side2, back) = parse_text_grid(std::str::from_utf8(&bytes).unwrap()).unwrap();
            prop_assert_eq!(side2, side);
            prop_assert_eq!(back, cells);
        }

        #[test]
        fn emitted_rows_sum_to_one((side, cells) in arb_cells()) {
            let g = Grid::from_strategies(side, cells, CoevParams::frozen()).unwrap();
            let mut buf = Vec::new();
            write_timeseries(&[record_fractions(&g, 0)], &mut buf).unwrap();
            let text = String::from_utf8(buf).unwrap();
            let row = text.lines().nth(1).unwrap();
            let sum: f64 = row.split(',').skip(1).take(3).map(|v| v.parse::<f64>().unwrap()).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-6);
            for v in row.split(',').skip(1).take(3) {
                let digits = v.split('.').nth(1).unwrap();
                prop_assert!(digits.len() <= 6);
            }
        }
    }
}
