//! Result tables and summaries.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{mean_dice, mean_noi_by_position, ProtocolTrace, SweepRow};
use crate::error::{Error, Result};
use crate::metrics::{bootstrap_ci, mean};

/// One row of the sequential results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub run: usize,
    pub seed: u64,
    pub task: String,
    pub protocol: String,
    pub context_label_mode: String,
    pub example: usize,
    pub context_size: usize,
    pub noi: usize,
    pub final_dice: f64,
}

fn tag<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::input(format!("csv: {e}"))
}

/// One row per example per run.
pub fn write_traces_csv<W: Write>(out: W, traces: &[ProtocolTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (run, t) in traces.iter().enumerate() {
        for e in &t.examples {
            w.serialize(TraceRecord {
                run,
                seed: t.seed,
                task: t.task.dataset.clone(),
                protocol: tag(&t.protocol),
                context_label_mode: tag(&t.context_label_mode),
                example: e.index,
                context_size: e.context_size,
                noi: e.noi,
                final_dice: *e.dice_per_step.last().unwrap_or(&f64::NAN),
            })
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_traces_csv<R: std::io::Read>(input: R) -> Result<Vec<TraceRecord>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(csv_err)).collect()
}

/// Mean NoI per example position for each (protocol, context label mode)
/// group in a results table, in first-seen group order.
pub fn noi_curves(records: &[TraceRecord]) -> Vec<(String, Vec<f64>)> {
    let mut groups: Vec<(String, Vec<(f64, usize)>)> = Vec::new();
    for r in records {
        let key = format!("{} / {}", r.protocol, r.context_label_mode);
        let idx = match groups.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                groups.push((key, Vec::new()));
                groups.len() - 1
            }
        };
        let slots = &mut groups[idx].1;
        if slots.len() < r.example {
            slots.resize(r.example, (0.0, 0));
        }
        let slot = &mut slots[r.example - 1];
        slot.0 += r.noi as f64;
        slot.1 += 1;
    }
    groups
        .into_iter()
        .map(|(k, slots)| (k, slots.into_iter().map(|(s, n)| if n == 0 { f64::NAN } else { s / n as f64 }).collect()))
        .collect()
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(csv_err)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionSummary {
    pub example: usize,
    pub mean_noi: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequentialSummary {
    pub runs: usize,
    pub mean_noi: f64,
    pub by_position: Vec<PositionSummary>,
}

pub fn summarize_sequential(traces: &[ProtocolTrace], seed: u64) -> SequentialSummary {
    let means = mean_noi_by_position(traces);
    let by_position = means
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let vals: Vec<f64> = traces.iter().filter_map(|t| t.examples.get(k)).map(|e| e.noi as f64).collect();
            let (lo, hi) = bootstrap_ci(&vals, mean, 1000, 0.95, seed).unwrap_or((m, m));
            PositionSummary {
                example: k + 1,
                mean_noi: m,
                ci_low: lo,
                ci_high: hi,
            }
        })
        .collect();
    let all: Vec<f64> = traces.iter().flat_map(|t| t.examples.iter().map(|e| e.noi as f64)).collect();
    SequentialSummary {
        runs: traces.len(),
        mean_noi: mean(&all),
        by_position,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub context_size: usize,
    pub step: usize,
    pub mean_dice: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn summarize_sweep(rows: &[SweepRow], seed: u64) -> Vec<SweepCell> {
    let mut keys: Vec<(usize, usize)> = rows.iter().map(|r| (r.context_size, r.step)).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|(c, s)| {
            let vals: Vec<f64> = rows.iter().filter(|r| r.context_size == c && r.step == s).map(|r| r.dice).collect();
            let m = mean_dice(rows, c, s);
            let (lo, hi) = bootstrap_ci(&vals, mean, 1000, 0.95, seed).unwrap_or((m, m));
            SweepCell {
                context_size: c,
                step: s,
                mean_dice: m,
                ci_low: lo,
                ci_high: hi,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TaskId;
    use crate::evaluation::{ContextLabelMode, ExampleTrace};
    use crate::interaction::Protocol;

    fn trace(seed: u64, nois: &[usize]) -> ProtocolTrace {
        ProtocolTrace {
            seed,
            task: TaskId {
                dataset: "d".into(),
                modality: "m".into(),
                axis: None,
                label: "l".into(),
                subdataset: None,
            },
            protocol: Protocol::CenterClicks,
            context_label_mode: ContextLabelMode::BinaryPred,
            seed_noi: 1,
            examples: nois
                .iter()
                .enumerate()
                .map(|(i, &n)| ExampleTrace {
                    index: i + 1,
                    noi: n,
                    dice_per_step: vec![0.5, 0.95],
                    context_size: i + 1,
                })
                .collect(),
        }
    }

    #[test]
    fn traces_table_round_trips_to_curves() {
        let traces = [trace(1, &[4, 2, 0]), trace(2, &[2, 2, 1])];
        let mut buf = Vec::new();
        write_traces_csv(&mut buf, &traces).unwrap();
        let records = read_traces_csv(buf.as_slice()).unwrap();
        assert_eq!(records.len(), 6);
        assert_eq!(records[0].protocol, "center_clicks");
        let curves = noi_curves(&records);
        assert_eq!(curves, vec![("center_clicks / binary_pred".to_string(), vec![3.0, 2.0, 0.5])]);
        assert_eq!(mean_noi_by_position(&traces), vec![3.0, 2.0, 0.5]);
    }

    #[test]
    fn sweep_table_round_trips() {
        let rows = vec![SweepRow {
            task: "t".into(),
            example: 0,
            context_size: 4,
            step: 1,
            dice: 0.75,
        }];
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        assert_eq!(read_sweep_csv(buf.as_slice()).unwrap(), rows);
    }
}
