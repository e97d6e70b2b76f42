//! Aggregation of finished runs into a summary table and learning curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::agents::Algorithm;
use crate::envs::{write_ppm, Tier};
use crate::error::{Error, Result};
use crate::types::Frame;

use super::metrics::RunMetrics;
use super::run_config::RunConfig;
use super::stats::{in_final_window, mean, welch_t_test, FinalScore};

pub const SUMMARY_HEADER: &str = "algorithm,tier,mean,stderr,p_vs_best";

/// One completed run directory.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub metrics: RunMetrics,
}

impl RunResult {
    pub fn load(dir: &Path) -> Result<Self> {
        let empty = std::fs::read_dir(dir).map(|mut d| d.next().is_none()).unwrap_or(true);
        if empty {
            return Err(Error::config(format!("{} is not a run directory", dir.display())));
        }
        Ok(RunResult {
            dir: dir.to_path_buf(),
            config: RunConfig::load(&dir.join("config.resolved"))?,
            metrics: RunMetrics::read(dir)?,
        })
    }

    /// Mean return over the final-window evaluation points of `tier`;
    /// `None` if the run never evaluated on it.
    pub fn score(&self, tier: Tier) -> Result<Option<f64>> {
        let curve = self.metrics.curve(tier);
        if curve.is_empty() {
            return Ok(None);
        }
        let total = self.config.hp.total_steps;
        let window: Vec<f64> = curve
            .iter()
            .filter(|(s, _)| in_final_window(*s, total))
            .map(|p| p.1)
            .collect();
        if window.is_empty() {
            return Err(Error::Format {
                path: self.dir.join("eval.csv"),
                msg: format!("no {tier} evaluation in the last 10% of {total} steps"),
            });
        }
        Ok(Some(mean(&window)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub tier: Tier,
    pub score: FinalScore,
    /// Seed scores behind `score`.
    pub values: Vec<f64>,
    /// Welch p against the tier's best cell (the runner-up for the best
    /// cell itself); `None` when the test is undefined.
    pub p_vs_best: Option<f64>,
}

pub fn summarize(runs: &[RunResult]) -> Result<Vec<SummaryRow>> {
    let mut cells: BTreeMap<(Tier, Algorithm), Vec<f64>> = BTreeMap::new();
    for run in runs {
        for tier in Tier::ALL {
            if let Some(s) = run.score(tier)? {
                cells.entry((tier, run.config.algorithm)).or_default().push(s);
            }
        }
    }
    let mut rows = Vec::new();
    for tier in Tier::ALL {
        let mut tier_rows: Vec<SummaryRow> = cells
            .iter()
            .filter(|((t, _), _)| *t == tier)
            .map(|(&(_, algorithm), values)| {
                Ok(SummaryRow {
                    algorithm,
                    tier,
                    score: FinalScore::from_seeds(values)?,
                    values: values.clone(),
                    p_vs_best: None,
                })
            })
            .collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..tier_rows.len()).collect();
        order.sort_by(|&a, &b| tier_rows[b].score.mean.total_cmp(&tier_rows[a].score.mean));
        if let [best, runner_up, ..] = order[..] {
            for i in 0..tier_rows.len() {
                let other = if i == best { runner_up } else { best };
                tier_rows[i].p_vs_best = welch_t_test(&tier_rows[other].values, &tier_rows[i].values)
                    .ok()
                    .map(|w| w.p);
            }
        }
        rows.extend(tier_rows);
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.algorithm,
            r.tier,
            r.score.mean,
            opt(r.score.stderr),
            opt(r.p_vs_best)
        );
    }
    s
}

/// Seed-averaged learning curve per algorithm, at the steps every seed
/// evaluated.
pub fn mean_curves(runs: &[RunResult], tier: Tier) -> BTreeMap<Algorithm, Vec<(usize, f64)>> {
    let mut acc: BTreeMap<Algorithm, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let mut seeds: BTreeMap<Algorithm, usize> = BTreeMap::new();
    for run in runs {
        let curve = run.metrics.curve(tier);
        if curve.is_empty() {
            continue;
        }
        *seeds.entry(run.config.algorithm).or_default() += 1;
        let e = acc.entry(run.config.algorithm).or_default();
        for (s, v) in curve {
            e.entry(s).or_default().push(v);
        }
    }
    acc.into_iter()
        .map(|(a, pts)| {
            let n = seeds[&a];
            let c = pts
                .into_iter()
                .filter(|(_, v)| v.len() == n)
                .map(|(s, v)| (s, mean(&v)))
                .collect();
            (a, c)
        })
        .collect()
}

const PLOT_W: usize = 320;
const PLOT_H: usize = 200;
const MARGIN: usize = 16;
const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
];

struct Canvas {
    px: Vec<u8>,
}

impl Canvas {
    fn new() -> Self {
        Canvas {
            px: vec![255; PLOT_W * PLOT_H * 3],
        }
    }

    fn set(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if (0..PLOT_W as i64).contains(&x) && (0..PLOT_H as i64).contains(&y) {
            let i = (y as usize * PLOT_W + x as usize) * 3;
            self.px[i..i + 3].copy_from_slice(&c);
        }
    }

    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: [u8; 3]) {
        let n = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
        for i in 0..=n {
            let x = x0 + (x1 - x0) * i / n;
            let y = y0 + (y1 - y0) * i / n;
            self.set(x, y, c);
        }
    }
}

/// Line plot of curves on shared axes; colours follow algorithm order.
pub fn plot_curves(curves: &BTreeMap<Algorithm, Vec<(usize, f64)>>) -> Frame {
    let mut cv = Canvas::new();
    let (l, r, t, b) = (MARGIN as i64, (PLOT_W - MARGIN) as i64, MARGIN as i64, (PLOT_H - MARGIN) as i64);
    cv.line((l, b), (r, b), [0; 3]);
    cv.line((l, t), (l, b), [0; 3]);
    let pts = curves.values().flatten();
    let max_s = pts.clone().map(|p| p.0).max().unwrap_or(1).max(1) as f64;
    let (mut lo, mut hi) = pts.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 1.0, hi + 1.0);
    }
    let map = |(s, v): (usize, f64)| {
        let x = l + ((r - l) as f64 * s as f64 / max_s).round() as i64;
        let y = b - ((b - t) as f64 * (v - lo) / (hi - lo)).round() as i64;
        (x, y)
    };
    for (a, curve) in curves {
        let c = PALETTE[Algorithm::ALL.iter().position(|x| x == a).unwrap_or(0) % PALETTE.len()];
        for w in curve.windows(2) {
            cv.line(map(w[0]), map(w[1]), c);
        }
        if let [only] = curve[..] {
            let (x, y) = map(only);
            cv.line((x - 1, y), (x + 1, y), c);
        }
    }
    Frame::new(PLOT_H, PLOT_W, cv.px).expect("fixed plot size")
}

/// Reads every run, writes `summary.csv` and `curve_<tier>.ppm` to `out`.
pub fn report(dirs: &[PathBuf], out: &Path) -> Result<Vec<SummaryRow>> {
    if dirs.is_empty() {
        return Err(Error::config("report needs at least one run directory"));
    }
    let runs: Vec<RunResult> = dirs.iter().map(|d| RunResult::load(d)).collect::<Result<_>>()?;
    let rows = summarize(&runs)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let p = out.join("summary.csv");
    std::fs::write(&p, summary_csv(&rows)).map_err(|e| Error::io(&p, e))?;
    for tier in Tier::ALL {
        let curves = mean_curves(&runs, tier);
        if !curves.is_empty() {
            write_ppm(&out.join(format!("curve_{tier}.ppm")), &plot_curves(&curves))?;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::EvalRecord;

    fn run(algorithm: Algorithm, seed: u64, total: usize, points: &[(usize, f64)]) -> RunResult {
        let mut config = RunConfig::default();
        config.algorithm = algorithm;
        config.seed = seed;
        config.hp.total_steps = total;
        RunResult {
            dir: PathBuf::from(format!("{algorithm}-{seed}")),
            config,
            metrics: RunMetrics {
                eval: points
                    .iter()
                    .map(|&(step, mean_return)| EvalRecord {
                        step,
                        tier: Tier::VideoHard,
                        mean_return,
                    })
                    .collect(),
                train: vec![],
            },
        }
    }

    #[test]
    fn score_uses_the_inclusive_final_window() {
        // Points at 8000 and below fall outside 10·s ≥ 9·10000.
        let r = run(Algorithm::Sac, 0, 10_000, &[(8000, 100.0), (9000, 4.0), (10_000, 6.0)]);
        assert_eq!(r.score(Tier::VideoHard).unwrap(), Some(5.0));
        assert_eq!(r.score(Tier::Clean).unwrap(), None);
        let early = run(Algorithm::Sac, 0, 10_000, &[(5000, 1.0)]);
        assert!(early.score(Tier::VideoHard).is_err());
    }

    #[test]
    fn hand_computed_summary() {
        // madi seeds 10, 12, 14: mean 12, sd 2, se 2/√3.
        // sac seeds 5, 6: mean 5.5, sd √0.5, se 0.5.
        let runs = vec![
            run(Algorithm::Madi, 0, 100, &[(100, 10.0)]),
            run(Algorithm::Madi, 1, 100, &[(100, 12.0)]),
            run(Algorithm::Madi, 2, 100, &[(100, 14.0)]),
            run(Algorithm::Sac, 0, 100, &[(100, 5.0)]),
            run(Algorithm::Sac, 1, 100, &[(100, 6.0)]),
        ];
        let rows = summarize(&runs).unwrap();
        assert_eq!(rows.len(), 2);
        let madi = rows.iter().find(|r| r.algorithm == Algorithm::Madi).unwrap();
        let sac = rows.iter().find(|r| r.algorithm == Algorithm::Sac).unwrap();
        assert_eq!(madi.score.mean, 12.0);
        assert!((madi.score.stderr.unwrap() - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(sac.score.mean, 5.5);
        assert!((sac.score.stderr.unwrap() - 0.5).abs() < 1e-12);
        // Both cells compare against each other, so they share one p.
        let p = welch_t_test(&[10.0, 12.0, 14.0], &[5.0, 6.0]).unwrap().p;
        assert_eq!(madi.p_vs_best, Some(p));
        assert_eq!(sac.p_vs_best, Some(p));
    }

    #[test]
    fn constant_and_single_seed_cells() {
        let runs: Vec<_> = (0..5).map(|s| run(Algorithm::Drq, s, 10, &[(10, 7.25)])).collect();
        let rows = summarize(&runs).unwrap();
        assert_eq!(rows[0].score.mean, 7.25);
        assert_eq!(rows[0].score.stderr, Some(0.0));
        let rows = summarize(&runs[..1]).unwrap();
        assert_eq!(rows[0].score.stderr, None);
        assert!(summary_csv(&rows).ends_with("drq,video_hard,7.25,,\n"));
    }

    #[test]
    fn curves_average_seeds_and_plot() {
        let runs = vec![
            run(Algorithm::Svea, 0, 20, &[(10, 1.0), (20, 3.0)]),
            run(Algorithm::Svea, 1, 20, &[(10, 3.0), (20, 5.0)]),
        ];
        let c = mean_curves(&runs, Tier::VideoHard);
        assert_eq!(c[&Algorithm::Svea], vec![(10, 2.0), (20, 4.0)]);
        let f = plot_curves(&c);
        assert_eq!((f.height(), f.width()), (PLOT_H, PLOT_W));
        assert!(f.pixels().chunks(3).any(|p| p == PALETTE[3]));
    }

    #[test]
    fn empty_run_list_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(report(&[], dir.path()), Err(Error::Config(_))));
        let run = dir.path().join("run");
        std::fs::create_dir(&run).unwrap();
        assert!(matches!(report(std::slice::from_ref(&run), dir.path()), Err(Error::Config(_))));
        assert!(matches!(report(&[run.join("absent")], dir.path()), Err(Error::Config(_))));
    }
}
