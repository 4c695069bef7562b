//! Shared worked-example fixtures used across tests and docs.

use std::collections::BTreeMap;

use crate::platform::{EventQueue, IdleSlot, Platform, VmDescriptor};
use crate::types::{Rat, Tick};
use crate::workload::{DagSpec, EdgeSpec, QualityVersion, TaskSpec};

fn exec_both_vms(levels: &[Tick]) -> BTreeMap<String, BTreeMap<u32, Tick>> {
    ["v0", "v1"]
        .iter()
        .map(|&vm| {
            (
                vm.to_string(),
                levels
                    .iter()
                    .enumerate()
                    .map(|(i, &d)| (i as u32 + 1, d))
                    .collect(),
            )
        })
        .collect()
}

fn level_rewards(n: u32) -> Vec<QualityVersion> {
    (1..=n)
        .map(|level| QualityVersion {
            level,
            reward: Rat::from_integer(level as u64),
        })
        .collect()
}

/// Diamond DAG with the worked-example execution times: T1 and T4 take
/// 1 tick at Q1 and 2 at Q2 on either VM, T2 and T3 take 2 and 3.
/// Period 12; rewards equal the level index. The diamond topology itself
/// is a local test fixture, not taken from elsewhere.
pub fn diamond_dag() -> DagSpec {
    let edge = |src: &str, dst: &str| EdgeSpec {
        src: src.into(),
        dst: dst.into(),
        data_volume: Rat::from_integer(0),
    };
    DagSpec {
        dag_id: "diamond".into(),
        tasks: vec![
            TaskSpec { task_id: "t1".into(), versions: level_rewards(2), exec_time: exec_both_vms(&[1, 2]) },
            TaskSpec { task_id: "t2".into(), versions: level_rewards(2), exec_time: exec_both_vms(&[2, 3]) },
            TaskSpec { task_id: "t3".into(), versions: level_rewards(2), exec_time: exec_both_vms(&[2, 3]) },
            TaskSpec { task_id: "t4".into(), versions: level_rewards(2), exec_time: exec_both_vms(&[1, 2]) },
        ],
        edges: vec![edge("t1", "t2"), edge("t1", "t3"), edge("t2", "t4"), edge("t3", "t4")],
        period: 12,
        release: 0,
    }
}

/// Two fully idle VMs with a background period of 8 ticks.
pub fn two_idle_vms() -> Platform {
    platform_with_busy(&[], &[])
}

/// Two VMs, background period 8, with the given busy intervals per VM
/// (the queues store the free complement).
pub fn platform_with_busy(busy_v0: &[(Tick, Tick)], busy_v1: &[(Tick, Tick)]) -> Platform {
    let period = 8;
    let free = |busy: &[(Tick, Tick)]| {
        let mut slots = Vec::new();
        let mut cursor = 0;
        for &(s, e) in busy {
            if s > cursor {
                slots.push(IdleSlot::new(cursor, s - cursor));
            }
            cursor = e;
        }
        if cursor < period {
            slots.push(IdleSlot::new(cursor, period - cursor));
        }
        EventQueue { slots }
    };
    Platform {
        vms: vec![
            VmDescriptor { vm_id: "v0".into(), host_id: "h0".into() },
            VmDescriptor { vm_id: "v1".into(), host_id: "h1".into() },
        ],
        bandwidth: vec![
            vec![Rat::from_integer(1), Rat::from_integer(2)],
            vec![Rat::from_integer(2), Rat::from_integer(1)],
        ],
        queues: [
            ("v0".to_string(), free(busy_v0)),
            ("v1".to_string(), free(busy_v1)),
        ]
        .into(),
        background_period: period,
    }
}
