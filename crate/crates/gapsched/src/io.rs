//! JSON persistence for the problem and result types.
//!
//! All documents are strict: unknown fields are rejected at parse time so a
//! typo in an experiment config fails loudly instead of silently using a
//! default. Serialization is deterministic (sorted maps, fixed field order),
//! so re-saving an unchanged value reproduces the file byte for byte.

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs;
use std::path::Path;
use thiserror::Error;

use crate::periodic::HyperSchedule;
use crate::platform::Platform;
use crate::workload::DagSpec;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn save<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("all our types serialize");
    text.push('\n');
    fs::write(path, text).map_err(|source| IoError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_dag(path: &Path) -> Result<DagSpec, IoError> {
    load(path)
}

pub fn save_dag(path: &Path, dag: &DagSpec) -> Result<(), IoError> {
    save(path, dag)
}

pub fn load_platform(path: &Path) -> Result<Platform, IoError> {
    load(path)
}

pub fn save_platform(path: &Path, platform: &Platform) -> Result<(), IoError> {
    save(path, platform)
}

pub fn load_schedule(path: &Path) -> Result<HyperSchedule, IoError> {
    load(path)
}

pub fn save_schedule(path: &Path, hs: &HyperSchedule) -> Result<(), IoError> {
    save(path, hs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::generator::{generate_dag, generate_preoccupation, GenParams, OccupancyParams};
    use crate::periodic::{schedule_periodic, SchedulerOptions};
    use proptest::prelude::*;

    #[test]
    fn dag_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dag.json");
        let dag = fixtures::diamond_dag();
        save_dag(&path, &dag).unwrap();
        assert_eq!(load_dag(&path).unwrap(), dag);
    }

    #[test]
    fn platform_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("platform.json");
        let p = fixtures::platform_with_busy(&[(0, 2)], &[(4, 6)]);
        save_platform(&path, &p).unwrap();
        assert_eq!(load_platform(&path).unwrap(), p);
    }

    #[test]
    fn schedule_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("schedule.json");
        let platform = fixtures::platform_with_busy(&[(0, 2)], &[(4, 6)]);
        let dag = fixtures::diamond_dag();
        let hs = schedule_periodic(&[dag], &platform, SchedulerOptions::default()).unwrap();
        save_schedule(&path, &hs).unwrap();
        assert_eq!(load_schedule(&path).unwrap(), hs);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dag.json");
        let dag = fixtures::diamond_dag();
        let mut v = serde_json::to_value(&dag).unwrap();
        v.as_object_mut().unwrap().insert("perriod".into(), 13.into());
        std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
        let err = load_dag(&path).unwrap_err();
        assert!(matches!(err, IoError::Parse { .. }), "{err}");
        assert!(err.to_string().contains("perriod"));
    }

    #[test]
    fn parse_errors_carry_path_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, "{\n  \"dag_id\": \"x\",\n").unwrap();
        let err = load_dag(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("broken.json:3"), "{msg}");
    }

    #[test]
    fn resaving_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        let dag = generate_dag(&GenParams { n_tasks: 10, seed: 7, ..Default::default() }).unwrap();
        save_dag(&a, &dag).unwrap();
        save_dag(&b, &load_dag(&a).unwrap()).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    proptest! {
        /// parse(serialize(x)) = x over generated artifacts.
        #[test]
        fn generated_round_trip(seed in 0u64..100, n in 1usize..15) {
            let dir = tempfile::tempdir().unwrap();
            let dag = generate_dag(&GenParams { n_tasks: n, seed, ..Default::default() }).unwrap();
            let platform = generate_preoccupation(&OccupancyParams { seed, ..Default::default() }).unwrap();
            let dp = dir.path().join("dag.json");
            let pp = dir.path().join("platform.json");
            save_dag(&dp, &dag).unwrap();
            save_platform(&pp, &platform).unwrap();
            prop_assert_eq!(load_dag(&dp).unwrap(), dag);
            prop_assert_eq!(load_platform(&pp).unwrap(), platform);
        }
    }
}
