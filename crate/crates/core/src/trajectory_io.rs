//! Trajectory file format: delimited text with header
//! `episode,step,agent_id,role,x,y,vx,vy,reward`, one row per agent per
//! step, UTF-8, LF line endings, shortest-round-trip decimal floats (so a
//! write/read cycle is bit-exact). Writes go to a temporary file that is
//! renamed on success, so failures leave nothing behind.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::harness::{AgentRecord, Condition, ConditionName, HarnessError, Trajectory};
use crate::vec2::Vec2;

pub const TRAJECTORY_HEADER: &str = "episode,step,agent_id,role,x,y,vx,vy,reward";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

impl DataError {
    fn io(path: &Path, source: io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        DataError::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }
}

/// Write through a temp file in the same directory, renaming into place only
/// after a successful flush.
pub fn atomic_write<F>(path: &Path, write_fn: F) -> Result<(), DataError>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    let file_name = path
        .file_name()
        .ok_or_else(|| DataError::io(path, io::Error::other("path has no file name")))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp_path = path.with_file_name(tmp_name);

    let result = (|| {
        let file = File::create(&tmp_path)?;
        let mut writer = BufWriter::new(file);
        write_fn(&mut writer)?;
        writer.flush()?;
        std::fs::rename(&tmp_path, path)
    })();

    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp_path);
        return Err(DataError::io(path, e));
    }
    Ok(())
}

fn role_name(agent: usize, n_agents: usize) -> &'static str {
    if agent + 1 == n_agents {
        "prey"
    } else {
        "predator"
    }
}

/// Export trajectories; the `episode` column is the index within this file.
pub fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<(), DataError> {
    atomic_write(path, |w| {
        writeln!(w, "{TRAJECTORY_HEADER}")?;
        for (episode, t) in trajectories.iter().enumerate() {
            let n = t.n_agents();
            for step in 0..t.n_steps() {
                for agent in 0..n {
                    let r = t.record(step, agent);
                    writeln!(
                        w,
                        "{episode},{step},{agent},{role},{},{},{},{},{}",
                        r.pos.x,
                        r.pos.y,
                        r.vel.x,
                        r.vel.y,
                        t.reward(step, agent),
                        role = role_name(agent, n),
                    )?;
                }
            }
        }
        Ok(())
    })
}

struct Row {
    line: usize,
    episode: u64,
    step: u64,
    agent: u64,
    role: String,
    pos: Vec2,
    vel: Vec2,
    reward: f64,
}

/// Parse and validate a trajectory file: contiguous episode blocks, steps
/// counting up from 0, a consistent agent set with the prey last, and finite
/// values everywhere. Ingested trajectories are marked `scripted`.
pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| DataError::parse(path, 1, "empty file"))?;
    let header = header.map_err(|e| DataError::io(path, e))?;
    if header.trim_end() != TRAJECTORY_HEADER {
        return Err(DataError::parse(
            path,
            1,
            format!("bad header; expected {TRAJECTORY_HEADER:?}"),
        ));
    }

    let mut rows: Vec<Row> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| DataError::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(DataError::parse(
                path,
                line_no,
                format!("expected 9 fields, got {}", fields.len()),
            ));
        }
        let parse_count = |s: &str, name: &str| -> Result<u64, DataError> {
            s.parse()
                .map_err(|_| DataError::parse(path, line_no, format!("bad {name} value {s:?}")))
        };
        let parse_real = |s: &str, name: &str| -> Result<f64, DataError> {
            let v: f64 = s
                .parse()
                .map_err(|_| DataError::parse(path, line_no, format!("bad {name} value {s:?}")))?;
            if !v.is_finite() {
                return Err(DataError::parse(
                    path,
                    line_no,
                    format!("non-finite {name} value {s:?}"),
                ));
            }
            Ok(v)
        };
        rows.push(Row {
            line: line_no,
            episode: parse_count(fields[0], "episode")?,
            step: parse_count(fields[1], "step")?,
            agent: parse_count(fields[2], "agent_id")?,
            role: fields[3].to_string(),
            pos: Vec2::new(parse_real(fields[4], "x")?, parse_real(fields[5], "y")?),
            vel: Vec2::new(parse_real(fields[6], "vx")?, parse_real(fields[7], "vy")?),
            reward: parse_real(fields[8], "reward")?,
        });
    }
    if rows.is_empty() {
        return Err(DataError::parse(path, 2, "no data rows"));
    }

    // split into contiguous episode groups
    let mut groups: Vec<&[Row]> = Vec::new();
    let mut start = 0;
    for i in 1..=rows.len() {
        if i == rows.len() || rows[i].episode != rows[start].episode {
            groups.push(&rows[start..i]);
            start = i;
        }
    }
    let mut seen: Vec<u64> = Vec::new();
    for g in &groups {
        if seen.contains(&g[0].episode) {
            return Err(DataError::parse(
                path,
                g[0].line,
                format!("episode {} appears in two separate blocks", g[0].episode),
            ));
        }
        seen.push(g[0].episode);
    }

    let mut trajectories = Vec::with_capacity(groups.len());
    let mut n_agents_expected: Option<usize> = None;
    for group in groups {
        let n_agents = group.iter().take_while(|r| r.step == 0).count();
        if n_agents < 2 {
            return Err(DataError::parse(
                path,
                group[0].line,
                "episode must start at step 0 with at least 2 agents",
            ));
        }
        if let Some(expected) = n_agents_expected {
            if n_agents != expected {
                return Err(DataError::parse(
                    path,
                    group[0].line,
                    format!("inconsistent agent set: expected {expected} agents, got {n_agents}"),
                ));
            }
        } else {
            n_agents_expected = Some(n_agents);
        }
        if group.len() % n_agents != 0 {
            return Err(DataError::parse(
                path,
                group.last().unwrap().line,
                format!(
                    "episode {} has {} rows, not a multiple of {n_agents} agents",
                    group[0].episode,
                    group.len()
                ),
            ));
        }
        let mut records = Vec::with_capacity(group.len());
        let mut rewards = Vec::with_capacity(group.len());
        for (i, row) in group.iter().enumerate() {
            let expected_step = (i / n_agents) as u64;
            let expected_agent = (i % n_agents) as u64;
            if row.step != expected_step || row.agent != expected_agent {
                return Err(DataError::parse(
                    path,
                    row.line,
                    format!(
                        "out-of-order row: expected step {expected_step} agent {expected_agent}, \
                         got step {} agent {}",
                        row.step, row.agent
                    ),
                ));
            }
            let expected_role = role_name(row.agent as usize, n_agents);
            if row.role != expected_role {
                return Err(DataError::parse(
                    path,
                    row.line,
                    format!(
                        "agent {} must have role {expected_role:?}, got {:?}",
                        row.agent, row.role
                    ),
                ));
            }
            records.push(AgentRecord {
                pos: row.pos,
                vel: row.vel,
            });
            rewards.push(row.reward);
        }
        let steps = group.len() / n_agents;
        let condition = Condition {
            name: ConditionName::Scripted,
            perturbed: false,
            n_episodes: 1,
            steps,
            seed: 0,
        };
        let trajectory =
            Trajectory::new(condition, group[0].episode, n_agents, records, rewards, 0)
                .map_err(|e: HarnessError| DataError::parse(path, group[0].line, e.to_string()))?;
        trajectories.push(trajectory);
    }
    Ok(trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_condition, Condition, ConditionName, SimParams};
    use std::fs;

    fn sim_small() -> Vec<Trajectory> {
        let c = Condition {
            name: ConditionName::Spring,
            perturbed: true,
            n_episodes: 2,
            steps: 40,
            seed: 5,
        };
        run_condition(&c, &SimParams::default()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path_a = dir.path().join("a.csv");
        let path_b = dir.path().join("b.csv");
        let original = sim_small();
        write_trajectories(&path_a, &original).unwrap();
        let ingested = read_trajectories(&path_a).unwrap();
        assert_eq!(ingested.len(), original.len());
        for (orig, back) in original.iter().zip(&ingested) {
            assert_eq!(orig.n_steps(), back.n_steps());
            for s in 0..orig.n_steps() {
                for a in 0..orig.n_agents() {
                    assert_eq!(orig.record(s, a), back.record(s, a));
                    assert_eq!(orig.reward(s, a), back.reward(s, a));
                }
            }
            assert_eq!(back.condition.name, ConditionName::Scripted);
        }
        write_trajectories(&path_b, &ingested).unwrap();
        assert_eq!(fs::read(&path_a).unwrap(), fs::read(&path_b).unwrap());
    }

    #[test]
    fn nan_position_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(
            &path,
            format!(
                "{TRAJECTORY_HEADER}\n0,0,0,predator,0.0,0.0,0.0,0.0,0\n0,0,1,prey,NaN,0.0,0.0,0.0,0\n"
            ),
        )
        .unwrap();
        let err = read_trajectories(&path).unwrap_err();
        match err {
            DataError::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("non-finite x"), "{message}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "episode,step\n").unwrap();
        let err = read_trajectories(&path).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 1, .. }));
    }

    #[test]
    fn inconsistent_agent_count_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut text = format!("{TRAJECTORY_HEADER}\n");
        text.push_str("0,0,0,predator,0,0,0,0,0\n");
        text.push_str("0,0,1,prey,0,0,0,0,0\n");
        text.push_str("1,0,0,predator,0,0,0,0,0\n");
        text.push_str("1,0,1,predator,0,0,0,0,0\n");
        text.push_str("1,0,2,prey,0,0,0,0,0\n");
        fs::write(&path, text).unwrap();
        let err = read_trajectories(&path).unwrap_err();
        match err {
            DataError::Parse { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("inconsistent agent set"), "{message}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn out_of_order_steps_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut text = format!("{TRAJECTORY_HEADER}\n");
        text.push_str("0,0,0,predator,0,0,0,0,0\n");
        text.push_str("0,0,1,prey,0,0,0,0,0\n");
        text.push_str("0,2,0,predator,0,0,0,0,0\n");
        text.push_str("0,2,1,prey,0,0,0,0,0\n");
        fs::write(&path, text).unwrap();
        let err = read_trajectories(&path).unwrap_err();
        match err {
            DataError::Parse { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("out-of-order"), "{message}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn wrong_role_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut text = format!("{TRAJECTORY_HEADER}\n");
        text.push_str("0,0,0,prey,0,0,0,0,0\n");
        text.push_str("0,0,1,prey,0,0,0,0,0\n");
        fs::write(&path, text).unwrap();
        let err = read_trajectories(&path).unwrap_err();
        match err {
            DataError::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("role"), "{message}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn atomic_write_leaves_no_partial_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let result = atomic_write(&path, |w| {
            writeln!(w, "partial")?;
            Err(io::Error::other("simulated failure"))
        });
        assert!(result.is_err());
        assert!(!path.exists());
        assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
    }
}
