//! CSV emission and aggregation over replications.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use super::RegretRecord;

/// Scientific notation with 17 significant digits, enough to round-trip.
pub fn format_decimal(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `sweep,rep,agent,t,inst_regret,cum_regret`, followed by
/// `G_0..G_{L-1},in_C` when `latent_columns` is `Some(L)`. Diagnostic cells
/// are left empty for agents without them. Lines end in `\n`.
pub fn write_csv<W: Write>(records: &[RegretRecord], latent_columns: Option<usize>, mut w: W) -> std::io::Result<()> {
    let mut header = String::from("sweep,rep,agent,t,inst_regret,cum_regret");
    if let Some(l) = latent_columns {
        for s in 0..l {
            header.push_str(&format!(",G_{s}"));
        }
        header.push_str(",in_C");
    }
    header.push('\n');
    w.write_all(header.as_bytes())?;
    let mut line = String::new();
    for r in records {
        line.clear();
        line.push_str(&format_decimal(r.sweep));
        line.push_str(&format!(",{},{},{},", r.rep, r.agent, r.t));
        line.push_str(&format_decimal(r.inst_regret));
        line.push(',');
        line.push_str(&format_decimal(r.cum_regret));
        if let Some(l) = latent_columns {
            match &r.diagnostics {
                Some(d) => {
                    for s in 0..l {
                        line.push(',');
                        if let Some(g) = d.g.get(s) {
                            line.push_str(&format_decimal(*g));
                        }
                    }
                    line.push(',');
                    if let Some(c) = d.in_c {
                        line.push(if c { '1' } else { '0' });
                    }
                }
                None => {
                    for _ in 0..=l {
                        line.push(',');
                    }
                }
            }
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Mean and standard error of cumulative regret over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub sweep: f64,
    pub agent: Arc<str>,
    pub t: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(reps)`; zero when `reps == 1`.
    pub stderr: f64,
    pub reps: usize,
}

impl AggregateRow {
    /// A single replication has no spread estimate.
    pub fn single_replication(&self) -> bool {
        self.reps == 1
    }
}

/// Groups by `(sweep, agent, t)` in order of first appearance.
pub fn aggregate(records: &[RegretRecord]) -> Vec<AggregateRow> {
    let mut index: HashMap<(u64, Arc<str>, usize), usize> = HashMap::new();
    let mut groups: Vec<(f64, Arc<str>, usize, Vec<f64>)> = Vec::new();
    for r in records {
        let key = (r.sweep.to_bits(), r.agent.clone(), r.t);
        let i = *index.entry(key).or_insert_with(|| {
            groups.push((r.sweep, r.agent.clone(), r.t, Vec::new()));
            groups.len() - 1
        });
        groups[i].3.push(r.cum_regret);
    }
    groups
        .into_iter()
        .map(|(sweep, agent, t, vals)| {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let stderr = if vals.len() > 1 {
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            AggregateRow {
                sweep,
                agent,
                t,
                mean,
                stderr,
                reps: vals.len(),
            }
        })
        .collect()
}

/// Aggregate rows at the last round `t`.
pub fn final_rows(records: &[RegretRecord]) -> Vec<AggregateRow> {
    let last = records.iter().map(|r| r.t).max().unwrap_or(0);
    let tail: Vec<RegretRecord> = records.iter().filter(|r| r.t == last).cloned().collect();
    aggregate(&tail)
}

/// `sweep,agent,t,mean_cum_regret,stderr,reps`.
pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], mut w: W) -> std::io::Result<()> {
    w.write_all(b"sweep,agent,t,mean_cum_regret,stderr,reps\n")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            format_decimal(r.sweep),
            r.agent,
            r.t,
            format_decimal(r.mean),
            format_decimal(r.stderr),
            r.reps
        )?;
    }
    Ok(())
}
