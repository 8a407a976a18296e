//! Periodic schedules and their `schedule v1` text form.
//!
//! Processors and frequency indices are zero-based in memory and one-based
//! in text, matching the naming used in exported LP files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::{TaskGraph, TaskId};
use crate::power::PowerModel;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScheduledTask {
    pub id: TaskId,
    pub processor: usize,
    /// Start offset within the period, seconds.
    pub start: f64,
    /// `(frequency index, cycles)` pairs; zero entries are omitted.
    pub split: Vec<(usize, f64)>,
}

impl ScheduledTask {
    pub fn duration(&self, power: &PowerModel) -> f64 {
        self.split.iter().map(|&(i, cycles)| cycles / power.freqs[i]).sum()
    }

    pub fn finish(&self, power: &PowerModel) -> f64 {
        self.start + self.duration(power)
    }

    pub fn cycles(&self) -> f64 {
        self.split.iter().map(|&(_, c)| c).sum()
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Schedule {
    pub period: f64,
    /// Processors available on the platform, used or not.
    pub processors: usize,
    /// One entry per task, sorted by id.
    pub tasks: Vec<ScheduledTask>,
    /// Sleep decisions keyed by `(processor, interval index)`. Interval `j`
    /// of a processor is the idle time right before its `j`-th task in
    /// start order; index 0 is the wrap-around interval (tail of the
    /// previous period plus head of this one).
    pub switches: BTreeMap<(usize, usize), bool>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

impl Schedule {
    pub fn empty(period: f64, processors: usize) -> Self {
        Self {
            period,
            processors,
            tasks: Vec::new(),
            switches: BTreeMap::new(),
        }
    }

    pub fn task(&self, id: TaskId) -> Option<&ScheduledTask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Task positions (into `tasks`) per processor, in start order with
    /// ties broken by id.
    pub fn lanes(&self) -> Vec<Vec<usize>> {
        let mut lanes = vec![Vec::new(); self.processors];
        for (i, t) in self.tasks.iter().enumerate() {
            if t.processor < self.processors {
                lanes[t.processor].push(i);
            }
        }
        for lane in &mut lanes {
            lane.sort_by(|&a, &b| {
                self.tasks[a]
                    .start
                    .total_cmp(&self.tasks[b].start)
                    .then(self.tasks[a].id.cmp(&self.tasks[b].id))
            });
        }
        lanes
    }

    pub fn used_processors(&self) -> usize {
        self.lanes().iter().filter(|l| !l.is_empty()).count()
    }

    /// Per-processor task id sequences of used processors.
    pub fn configuration_key(&self) -> Vec<Vec<TaskId>> {
        self.lanes()
            .into_iter()
            .filter(|l| !l.is_empty())
            .map(|l| l.into_iter().map(|i| self.tasks[i].id).collect())
            .collect()
    }

    pub fn total_busy(&self, power: &PowerModel) -> f64 {
        self.tasks.iter().map(|t| t.duration(power)).sum()
    }

    /// Check that every task of `graph` appears exactly once.
    pub fn covers(&self, graph: &TaskGraph) -> bool {
        let mut ids: Vec<TaskId> = self.tasks.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        ids == (1..=graph.len()).collect::<Vec<_>>()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("schedule v1\n");
        let _ = writeln!(s, "period {} s", self.period);
        let _ = writeln!(s, "processors {}", self.processors);
        let mut tasks: Vec<&ScheduledTask> = self.tasks.iter().collect();
        tasks.sort_by_key(|t| t.id);
        for t in &tasks {
            let _ = writeln!(s, "task {} proc {} start {}", t.id, t.processor + 1, t.start);
        }
        for t in &tasks {
            for &(i, cycles) in &t.split {
                let _ = writeln!(s, "split {} {} {}", t.id, i + 1, cycles);
            }
        }
        for (&(p, j), &on) in &self.switches {
            let _ = writeln!(s, "switch {} {} {}", p + 1, j, u8::from(on));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ScheduleParseError> {
        let mut header = false;
        let mut period = None;
        let mut processors = None;
        let mut tasks: Vec<ScheduledTask> = Vec::new();
        let mut splits: Vec<(usize, TaskId, usize, f64)> = Vec::new();
        let mut switches = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |msg: &str| ScheduleParseError::Syntax {
                line,
                msg: msg.to_string(),
            };
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let tok: Vec<&str> = body.split_whitespace().collect();
            if !header {
                if tok != ["schedule", "v1"] {
                    return Err(err("expected header `schedule v1`"));
                }
                header = true;
                continue;
            }
            let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| err(what));
            let int = |s: &str, what: &str| s.parse::<usize>().map_err(|_| err(what));
            match tok[0] {
                "period" if tok.len() == 3 && tok[2] == "s" => {
                    period = Some(num(tok[1], "bad period")?);
                }
                "processors" if tok.len() == 2 => {
                    processors = Some(int(tok[1], "bad processor count")?);
                }
                "task" if tok.len() == 6 && tok[2] == "proc" && tok[4] == "start" => {
                    let proc = int(tok[3], "bad processor")?;
                    if proc == 0 {
                        return Err(err("processors are numbered from 1"));
                    }
                    tasks.push(ScheduledTask {
                        id: int(tok[1], "bad task id")?,
                        processor: proc - 1,
                        start: num(tok[5], "bad start time")?,
                        split: Vec::new(),
                    });
                }
                "split" if tok.len() == 4 => {
                    let fi = int(tok[2], "bad frequency index")?;
                    if fi == 0 {
                        return Err(err("frequency indices are numbered from 1"));
                    }
                    splits.push((line, int(tok[1], "bad task id")?, fi - 1, num(tok[3], "bad cycles")?));
                }
                "switch" if tok.len() == 4 => {
                    let proc = int(tok[1], "bad processor")?;
                    if proc == 0 {
                        return Err(err("processors are numbered from 1"));
                    }
                    let on = match tok[3] {
                        "0" => false,
                        "1" => true,
                        _ => return Err(err("switch flag must be 0 or 1")),
                    };
                    switches.insert((proc - 1, int(tok[2], "bad interval index")?), on);
                }
                _ => return Err(err(&format!("unrecognized line `{body}`"))),
            }
        }
        let eof = text.lines().count().max(1);
        let missing = |what: &str| ScheduleParseError::Syntax {
            line: eof,
            msg: format!("missing {what}"),
        };
        if !header {
            return Err(missing("header"));
        }
        for (line, id, fi, cycles) in splits {
            let t = tasks
                .iter_mut()
                .find(|t| t.id == id)
                .ok_or(ScheduleParseError::Syntax {
                    line,
                    msg: format!("split for undeclared task {id}"),
                })?;
            t.split.push((fi, cycles));
        }
        tasks.sort_by_key(|t| t.id);
        Ok(Self {
            period: period.ok_or_else(|| missing("period"))?,
            processors: processors.ok_or_else(|| missing("processors"))?,
            tasks,
            switches,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Schedule {
        let mut s = Schedule::empty(0.008, 2);
        s.tasks.push(ScheduledTask {
            id: 1,
            processor: 0,
            start: 0.0,
            split: vec![(2, 2e6)],
        });
        s.tasks.push(ScheduledTask {
            id: 2,
            processor: 0,
            start: 0.00130718954248366,
            split: vec![(1, 1.25e5), (2, 1.875e6)],
        });
        s.switches.insert((0, 0), true);
        s.switches.insert((0, 1), false);
        s
    }

    #[test]
    fn text_round_trip_is_exact() {
        let s = sample();
        let text = s.to_text();
        assert_eq!(Schedule::from_text(&text).unwrap(), s);
        assert!(text.contains("task 2 proc 1 start 0.00130718954248366"));
        assert!(text.contains("split 2 2 125000"));
        assert!(text.contains("switch 1 0 1"));
    }

    #[test]
    fn lanes_and_keys() {
        let s = sample();
        assert_eq!(s.lanes(), vec![vec![0, 1], vec![]]);
        assert_eq!(s.configuration_key(), vec![vec![1, 2]]);
        assert_eq!(s.used_processors(), 1);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let bad = "schedule v1\nperiod 1 s\nprocessors 1\ntask 1 proc 0 start 0\n";
        assert!(matches!(
            Schedule::from_text(bad),
            Err(ScheduleParseError::Syntax { line: 4, .. })
        ));
        let bad = "schedule v1\nperiod 1 s\nprocessors 1\nsplit 3 1 10\n";
        assert!(matches!(
            Schedule::from_text(bad),
            Err(ScheduleParseError::Syntax { line: 4, .. })
        ));
        assert!(Schedule::from_text("schedule v1\nprocessors 1\n").is_err());
    }
}
