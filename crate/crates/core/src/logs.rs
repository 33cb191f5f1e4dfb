//! Episode log files: one JSON step record per line.
//!
//! Episodes are concatenated; a record with `time == 0` opens a new episode.

use std::io::Write;
use std::path::Path;

use crate::copilots::EpisodeLog;
use crate::error::{Error, ParseError, Result};
use crate::mdp::StepRecord;

pub fn write_jsonl<W: Write>(mut out: W, logs: &[EpisodeLog]) -> Result<()> {
    for log in logs {
        for rec in &log.records {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn to_jsonl(logs: &[EpisodeLog]) -> Result<String> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, logs)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Parses step records, checking the per-record invariants; blank lines are
/// skipped. Errors carry the zero-based line number.
pub fn parse_records(text: &str) -> Result<Vec<StepRecord>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: StepRecord =
            serde_json::from_str(line).map_err(|e| ParseError::at(i, e.column().saturating_sub(1), e.to_string()))?;
        if rec.intervened != (rec.agent_action != rec.human_action) {
            return Err(ParseError::line(i, "`intervened` disagrees with the actions").into());
        }
        if rec.env_state.iter().any(|v| !v.is_finite()) || !rec.raw_reward.is_finite() || !rec.shaped_reward.is_finite() {
            return Err(ParseError::line(i, "non-finite value").into());
        }
        records.push(rec);
    }
    Ok(records)
}

/// Splits records into episodes at every `time == 0`.
pub fn split_episodes(records: Vec<StepRecord>) -> Result<Vec<EpisodeLog>> {
    let mut logs: Vec<EpisodeLog> = Vec::new();
    for rec in records {
        if rec.time == 0 {
            logs.push(EpisodeLog {
                records: Vec::new(),
                success: false,
            });
        }
        let log = logs
            .last_mut()
            .ok_or_else(|| Error::contract("log does not start at time 0"))?;
        if rec.time != log.records.len() {
            return Err(Error::contract(format!(
                "step {} follows step {} within an episode",
                rec.time,
                log.records.len().wrapping_sub(1)
            )));
        }
        if let Some(s) = rec.success {
            log.success = s;
        }
        log.records.push(rec);
    }
    Ok(logs)
}

pub fn from_jsonl(text: &str) -> Result<Vec<EpisodeLog>> {
    split_episodes(parse_records(text)?)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<EpisodeLog>> {
    from_jsonl(&std::fs::read_to_string(path)?)
}

/// Reads every `*.jsonl` file in `dir`, in file-name order.
pub fn read_dir(dir: &Path) -> Result<Vec<EpisodeLog>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut logs = Vec::new();
    for p in paths {
        logs.extend(read_jsonl(&p)?);
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(time: usize, intervened: bool, success: Option<bool>) -> StepRecord {
        StepRecord {
            time,
            env_state: vec![0.5, -1.0],
            human_action: 0,
            agent_action: usize::from(intervened),
            intervened,
            raw_reward: 0.1,
            shaped_reward: 0.1,
            budget_after: Some(2),
            lambda_at_step: None,
            success,
        }
    }

    #[test]
    fn round_trip_and_episode_split() {
        let logs = vec![
            EpisodeLog {
                records: vec![rec(0, false, None), rec(1, true, Some(true))],
                success: true,
            },
            EpisodeLog {
                records: vec![rec(0, false, Some(false))],
                success: false,
            },
        ];
        let text = to_jsonl(&logs).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(from_jsonl(&text).unwrap(), logs);
    }

    #[test]
    fn field_names_match_step_record() {
        let line = serde_json::to_string(&rec(0, true, None)).unwrap();
        for key in [
            "time",
            "env_state",
            "human_action",
            "agent_action",
            "intervened",
            "raw_reward",
            "shaped_reward",
            "budget_after",
            "lambda_at_step",
        ] {
            assert!(line.contains(&format!("\"{key}\"")), "{key}");
        }
    }

    #[test]
    fn bad_lines_are_rejected() {
        assert!(from_jsonl("{").is_err());
        let mut r = rec(0, true, None);
        r.agent_action = 0;
        assert!(from_jsonl(&serde_json::to_string(&r).unwrap()).is_err());
        let skip = format!(
            "{}\n{}",
            serde_json::to_string(&rec(0, false, None)).unwrap(),
            serde_json::to_string(&rec(2, false, None)).unwrap()
        );
        assert!(from_jsonl(&skip).is_err());
        assert!(from_jsonl(&serde_json::to_string(&rec(1, false, None)).unwrap()).is_err());
    }
}
