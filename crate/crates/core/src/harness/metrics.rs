//! Per-run training and evaluation logs, stored as CSV.

use std::fmt::Write as _;
use std::path::Path;

use crate::envs::Tier;
use crate::error::{Error, Result};

pub const EVAL_HEADER: &str = "step,tier,mean_return";
pub const TRAIN_HEADER: &str = "step,loss_q,loss_pi,loss_alpha,alpha,mask_task_mean,mask_bg_mean";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub tier: Tier,
    pub mean_return: f64,
}

/// One training log row. Optional fields are empty in the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub loss_q: f64,
    pub loss_pi: Option<f64>,
    pub loss_alpha: Option<f64>,
    pub alpha: f64,
    pub mask_task_mean: Option<f64>,
    pub mask_bg_mean: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub eval: Vec<EvalRecord>,
    pub train: Vec<TrainRecord>,
}

fn format_err(path: &Path, msg: String) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| format_err(path, format!("line {line}: cannot parse '{s}'")))
}

fn opt_field(path: &Path, line: usize, s: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        field(path, line, s).map(Some)
    }
}

fn rows<'a>(path: &Path, text: &'a str, header: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => return Err(format_err(path, format!("expected header '{header}'"))),
    }
    let width = header.split(',').count();
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let cols: Vec<&str> = l.split(',').collect();
            if cols.len() != width {
                return Err(format_err(
                    path,
                    format!("line {}: expected {width} columns, got {}", n + 1, cols.len()),
                ));
            }
            Ok((n + 1, cols))
        })
        .collect()
}

impl RunMetrics {
    pub fn eval_csv(&self) -> String {
        let mut s = format!("{EVAL_HEADER}\n");
        for r in &self.eval {
            let _ = writeln!(s, "{},{},{}", r.step, r.tier, r.mean_return);
        }
        s
    }

    pub fn train_csv(&self) -> String {
        let mut s = format!("{TRAIN_HEADER}\n");
        for r in &self.train {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.step,
                r.loss_q,
                opt(r.loss_pi),
                opt(r.loss_alpha),
                r.alpha,
                opt(r.mask_task_mean),
                opt(r.mask_bg_mean)
            );
        }
        s
    }

    pub fn parse_eval(path: &Path, text: &str) -> Result<Vec<EvalRecord>> {
        rows(path, text, EVAL_HEADER)?
            .into_iter()
            .map(|(n, c)| {
                Ok(EvalRecord {
                    step: field(path, n, c[0])?,
                    tier: c[1].trim().parse()?,
                    mean_return: field(path, n, c[2])?,
                })
            })
            .collect()
    }

    pub fn parse_train(path: &Path, text: &str) -> Result<Vec<TrainRecord>> {
        rows(path, text, TRAIN_HEADER)?
            .into_iter()
            .map(|(n, c)| {
                Ok(TrainRecord {
                    step: field(path, n, c[0])?,
                    loss_q: field(path, n, c[1])?,
                    loss_pi: opt_field(path, n, c[2])?,
                    loss_alpha: opt_field(path, n, c[3])?,
                    alpha: field(path, n, c[4])?,
                    mask_task_mean: opt_field(path, n, c[5])?,
                    mask_bg_mean: opt_field(path, n, c[6])?,
                })
            })
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, body) in [("eval.csv", self.eval_csv()), ("train.csv", self.train_csv())] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    /// Reads `eval.csv` and, if present, `train.csv` from a run directory.
    pub fn read(dir: &Path) -> Result<Self> {
        let ep = dir.join("eval.csv");
        let text = std::fs::read_to_string(&ep).map_err(|e| Error::io(&ep, e))?;
        let eval = Self::parse_eval(&ep, &text)?;
        let tp = dir.join("train.csv");
        let train = match std::fs::read_to_string(&tp) {
            Ok(t) => Self::parse_train(&tp, &t)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Error::io(&tp, e)),
        };
        Ok(RunMetrics { eval, train })
    }

    /// Evaluation points of one tier, in step order.
    pub fn curve(&self, tier: Tier) -> Vec<(usize, f64)> {
        let mut c: Vec<_> = self
            .eval
            .iter()
            .filter(|r| r.tier == tier)
            .map(|r| (r.step, r.mean_return))
            .collect();
        c.sort_by_key(|p| p.0);
        c
    }
}
