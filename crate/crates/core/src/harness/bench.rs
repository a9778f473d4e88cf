//! Puzzle timing across list sizes.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::report::Report;
use crate::puzzle::{
    encode_solution, puzzle_gen, puzzle_match, puzzle_rerandomize, puzzle_setup, Puzzle, PuzzleError, Scheme,
    SecurityLevel,
};
use crate::stats::{linear_fit, summarize, LinearFit, Summary};

pub const DEFAULT_COUNTS: [usize; 5] = [10, 20, 30, 50, 100];
/// Each list size is timed until at least this many single-puzzle operations ran.
pub const DEFAULT_MIN_OPS: usize = 1000;
/// Lower bound on timed repetitions per list size.
pub const MIN_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Op {
    /// Generate `n` puzzles (edge server registration).
    Generate,
    /// Test all `n` puzzles of a list (user selection).
    Match,
    /// Rerandomize all `n` puzzles (base station).
    Rerandomize,
}

impl Op {
    pub const ALL: [Op; 3] = [Op::Generate, Op::Match, Op::Rerandomize];

    pub fn name(self) -> &'static str {
        match self {
            Op::Generate => "generate",
            Op::Match => "match",
            Op::Rerandomize => "rerandomize",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scheme: Scheme,
    pub count: usize,
    pub op: Op,
    /// Milliseconds per list.
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub level: SecurityLevel,
    pub rows: Vec<BenchRow>,
}

pub fn samples_for(count: usize, min_ops: usize) -> usize {
    min_ops.div_ceil(count.max(1)).max(MIN_SAMPLES)
}

fn time_ms(f: impl FnOnce()) -> f64 {
    let t = Instant::now();
    f();
    t.elapsed().as_secs_f64() * 1e3
}

pub fn bench_puzzle(
    scheme: Scheme,
    level: SecurityLevel,
    counts: &[usize],
    min_ops: usize,
    seed: u64,
) -> Result<BenchReport, PuzzleError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (params, trapdoor) = puzzle_setup(scheme, level, &mut rng)?;
    let solution = encode_solution(&[7; 32], &params);
    let mut rows = Vec::new();
    for &count in counts {
        let samples = samples_for(count, min_ops);
        let mut timings = [Vec::new(), Vec::new(), Vec::new()];
        for _ in 0..samples {
            let mut list: Vec<Puzzle> = Vec::with_capacity(count);
            timings[0].push(time_ms(|| {
                for _ in 0..count {
                    list.push(puzzle_gen(&params, &solution, &mut rng).expect("same params"));
                }
            }));
            let mut hits = 0;
            timings[1].push(time_ms(|| {
                for p in &list {
                    hits += usize::from(puzzle_match(&params, &trapdoor, &solution, p).expect("same params"));
                }
            }));
            assert_eq!(hits, count, "every generated puzzle opens under its solution");
            let mut fresh = Vec::with_capacity(count);
            timings[2].push(time_ms(|| {
                for p in &list {
                    fresh.push(puzzle_rerandomize(&params, p, &mut rng).expect("same params"));
                }
            }));
        }
        for (op, t) in Op::ALL.into_iter().zip(&timings) {
            rows.push(BenchRow { scheme, count, op, summary: summarize(t).expect("at least one sample") });
        }
    }
    Ok(BenchReport { level, rows })
}

impl BenchReport {
    pub fn merge(mut self, other: BenchReport) -> Self {
        self.rows.extend(other.rows);
        self
    }

    pub fn schemes(&self) -> Vec<Scheme> {
        let mut s: Vec<Scheme> = self.rows.iter().map(|r| r.scheme).collect();
        s.dedup();
        s
    }

    /// `(count, median ms)` for one series, in list-size order.
    pub fn series(&self, scheme: Scheme, op: Op) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> =
            self.rows.iter().filter(|r| r.scheme == scheme && r.op == op).map(|r| (r.count, r.summary.median)).collect();
        v.sort_by_key(|&(c, _)| c);
        v
    }

    pub fn fit(&self, scheme: Scheme, op: Op) -> Option<LinearFit> {
        let s = self.series(scheme, op);
        let xs: Vec<f64> = s.iter().map(|&(c, _)| c as f64).collect();
        let ys: Vec<f64> = s.iter().map(|&(_, m)| m).collect();
        linear_fit(&xs, &ys)
    }

    /// Medians strictly increase with list size.
    pub fn monotone(&self, scheme: Scheme, op: Op) -> bool {
        self.series(scheme, op).windows(2).all(|w| w[1].1 > w[0].1)
    }
}

impl Report for BenchReport {
    fn title(&self) -> String {
        format!("puzzle benchmark ({}-bit)", self.level.bits())
    }

    fn summary(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for scheme in self.schemes() {
            for op in Op::ALL {
                if let Some(f) = self.fit(scheme, op) {
                    out.push((
                        format!("{scheme}.{}", op.name()),
                        format!("slope {:.4} ms/puzzle, r2 {:.4}, monotone {}", f.slope, f.r_squared, self.monotone(scheme, op)),
                    ));
                }
            }
        }
        out
    }

    fn header(&self) -> Vec<&'static str> {
        vec!["scheme", "count", "op", "median_ms", "ci_low_ms", "ci_high_ms", "samples"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.scheme.to_string(),
                    r.count.to_string(),
                    r.op.name().to_owned(),
                    format!("{:.4}", r.summary.median),
                    format!("{:.4}", r.summary.ci_low),
                    format!("{:.4}", r.summary.ci_high),
                    r.summary.samples.to_string(),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_counts_cover_the_operation_budget() {
        assert_eq!(samples_for(10, 1000), 100);
        assert_eq!(samples_for(30, 1000), 34);
        assert_eq!(samples_for(100, 1000), 10);
        assert_eq!(samples_for(1000, 1000), MIN_SAMPLES);
    }
}
