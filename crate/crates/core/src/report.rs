//! CSV artifacts and key/value summaries.
//!
//! Numbers are written with `f64`'s `Display`, which is the shortest decimal
//! string that parses back to the same value: '.' decimal separator, no
//! exponent, no grouping.

use crate::mcsim::RecursionReport;
use crate::synth::{SweepResult, TimingRow};

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn to_string(header: &[String], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

/// `sigma2,status,margin,rho_M,error`.
pub fn sweep_csv(r: &SweepResult) -> String {
    let rows = r
        .points
        .iter()
        .map(|p| {
            vec![
                num(p.sigma2),
                p.status.as_str().to_string(),
                num(p.margin),
                opt(p.rho_m),
                p.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    to_string(&header(&["sigma2", "status", "margin", "rho_M", "error"]), rows)
}

/// `n,mean_t_thm2,mean_t_baseline,trials,...`; the time columns are wall
/// clock and not reproducible.
pub fn timing_csv(rows: &[TimingRow]) -> String {
    let body = rows
        .iter()
        .map(|t| {
            vec![
                t.n.to_string(),
                num(t.mean_t_thm2),
                num(t.mean_t_baseline),
                t.trials.to_string(),
                t.attempts.to_string(),
                t.block_thm2.to_string(),
                t.block_baseline.to_string(),
                t.skipped.to_string(),
            ]
        })
        .collect();
    to_string(
        &header(&[
            "n",
            "mean_t_thm2",
            "mean_t_baseline",
            "trials",
            "attempts",
            "block_thm2",
            "block_baseline",
            "skipped",
        ]),
        body,
    )
}

/// One row per step: `k`, then the upper triangle of the empirical
/// covariance, the analytic covariance, the standard errors and the
/// z-scores. Entry `(i,j)` is labelled with 1-based indices.
pub fn sim_csv(r: &RecursionReport) -> String {
    let n = r.rows.first().map_or(0, |row| row.empirical.dim());
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|j| (0..=j).map(move |i| (i, j))).collect();
    let mut cols = vec!["k".to_string()];
    for prefix in ["emp", "ana", "se", "z"] {
        cols.extend(pairs.iter().map(|(i, j)| format!("{prefix}_{}{}", i + 1, j + 1)));
    }
    let rows = r
        .rows
        .iter()
        .map(|row| {
            let mut out = vec![row.k.to_string()];
            out.extend(pairs.iter().map(|&p| num(row.empirical[p])));
            out.extend(pairs.iter().map(|&p| num(row.analytic[p])));
            out.extend(pairs.iter().map(|&p| num(row.se[p])));
            out.extend(pairs.iter().map(|&p| num(row.z_scores[p])));
            out
        })
        .collect();
    to_string(&cols, rows)
}

/// Ordered key/value pairs behind a text report. The same pairs are written
/// to `summary.csv`, so every number shown to the user is also in a CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.entries.push((key.to_string(), value.into()));
        self
    }

    pub fn num(&mut self, key: &str, value: f64) -> &mut Self {
        self.text(key, num(value))
    }

    pub fn opt(&mut self, key: &str, value: Option<f64>) -> &mut Self {
        self.text(key, opt(value))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_csv(&self) -> String {
        let rows = self.entries.iter().map(|(k, v)| vec![k.clone(), v.clone()]).collect();
        to_string(&header(&["key", "value"]), rows)
    }

    /// Aligned `key  value` lines.
    pub fn to_text(&self) -> String {
        let width = self.entries.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        self.entries
            .iter()
            .map(|(k, v)| format!("{k:<width$}  {v}\n"))
            .collect()
    }
}
