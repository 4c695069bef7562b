//! Modified HEFT core: gap-aware base placement at level 1 followed by a
//! stepwise quality-enhancement pass, both confined to one cycle window.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::platform::{allocate_interval, find_feasible_gap, release_interval, EventQueue, Platform};
use crate::ranking::{priority_order, upward_ranks, RankError};
use crate::types::Tick;
use crate::workload::{comm_delay, DagSpec, TaskInstance};

/// The `[start, end)` interval confining one DAG instance; its length equals
/// the DAG period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleWindow {
    pub start: Tick,
    pub end: Tick,
}

/// One placed task instance: VM, quality level, and timing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub instance: TaskInstance,
    pub vm: String,
    pub level: u32,
    pub start: Tick,
    pub finish: Tick,
}

/// Entries placed so far plus the per-VM idle time left after carving them
/// (and the pre-occupation) out. Cloned wholesale for tentative work, so a
/// rejected attempt restores state exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialSchedule {
    pub entries: BTreeMap<String, ScheduleEntry>,
    pub queues: BTreeMap<String, EventQueue>,
}

impl PartialSchedule {
    pub fn from_queues(queues: BTreeMap<String, EventQueue>) -> Self {
        Self {
            entries: BTreeMap::new(),
            queues,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum HeftError {
    #[error("no feasible placement for task `{0}`")]
    Unplaceable(String),
    #[error("predecessor `{0}` not scheduled before its successor")]
    UnscheduledPredecessor(String),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error("platform lookup failed: {0}")]
    Platform(#[from] crate::platform::PlatformError),
    #[error("queue corruption: {0}")]
    Queue(#[from] crate::platform::QueueError),
}

/// Lower bound on the start of `task_id` on `vm`: the window start or the
/// latest predecessor finish plus communication delay, whichever is later.
pub fn earliest_start_time(
    task_id: &str,
    vm: &str,
    sched: &PartialSchedule,
    window: CycleWindow,
    dag: &DagSpec,
    platform: &Platform,
) -> Result<Tick, HeftError> {
    let mut est = window.start;
    for edge in dag.predecessors(task_id) {
        let pred = sched
            .entries
            .get(&edge.src)
            .ok_or_else(|| HeftError::UnscheduledPredecessor(edge.src.clone()))?;
        let delay = comm_delay(edge, &pred.vm, vm, platform)?;
        est = est.max(pred.finish + delay);
    }
    Ok(est)
}

/// Best placement of `task_id` at `level` over all VMs: the (vm, start)
/// minimizing finish time, ties broken by lower VM index then earlier
/// start. `None` when no VM admits the task inside the window.
pub fn place_task(
    task_id: &str,
    sched: &PartialSchedule,
    window: CycleWindow,
    dag: &DagSpec,
    platform: &Platform,
    level: u32,
) -> Result<Option<(String, Tick)>, HeftError> {
    let task = dag.task(task_id).expect("task exists in dag");
    let mut best: Option<(Tick, usize, Tick)> = None; // (finish, vm index, start)
    for (vm_idx, vm) in platform.vms.iter().enumerate() {
        let Some(dur) = task.exec(&vm.vm_id, level) else {
            continue;
        };
        let est = earliest_start_time(task_id, &vm.vm_id, sched, window, dag, platform)?;
        if est > window.end {
            continue;
        }
        let queue = &sched.queues[&vm.vm_id];
        if let Some((_, start)) = find_feasible_gap(queue, est, dur, window.end) {
            let finish = start + dur;
            let candidate = (finish, vm_idx, start);
            if best.is_none_or(|b| candidate < b) {
                best = Some(candidate);
            }
        }
    }
    Ok(best.map(|(_, vm_idx, start)| (platform.vms[vm_idx].vm_id.clone(), start)))
}

/// Phase 1: place every task of `dag_instance` at base quality in priority
/// order. On any unplaceable task the input schedule is returned untouched
/// inside the error path; on success all placements are committed.
pub fn schedule_base(
    dag_instance: &DagSpec,
    instances: &BTreeMap<String, TaskInstance>,
    sched: &PartialSchedule,
    window: CycleWindow,
    platform: &Platform,
) -> Result<PartialSchedule, HeftError> {
    let ranks = upward_ranks(dag_instance, platform)?;
    let order = priority_order(&ranks);
    // instances is keyed by original task id; look placed tasks up by the
    // fresh instance id instead.
    let by_instance_id: BTreeMap<&str, &TaskInstance> = instances
        .values()
        .map(|i| (i.instance_id.as_str(), i))
        .collect();
    let mut work = sched.clone();
    for task_id in &order {
        let Some((vm, start)) = place_task(task_id, &work, window, dag_instance, platform, 1)?
        else {
            return Err(HeftError::Unplaceable(task_id.clone()));
        };
        let dur = dag_instance.task(task_id).unwrap().exec(&vm, 1).unwrap();
        let queue = allocate_interval(&work.queues[&vm], start, dur)?;
        work.queues.insert(vm.clone(), queue);
        let instance = by_instance_id
            .get(task_id.as_str())
            .map(|i| (*i).clone())
            .unwrap_or_else(|| TaskInstance {
                instance_id: task_id.clone(),
                source_task: task_id.clone(),
                dag_id: dag_instance.dag_id.clone(),
                cycle_index: 0,
            });
        work.entries.insert(
            task_id.clone(),
            ScheduleEntry {
                instance,
                vm,
                level: 1,
                start,
                finish: start + dur,
            },
        );
    }
    Ok(work)
}

/// Phase 2: walk tasks in descending rank order and repeatedly bump each
/// one to the next quality level on its assigned VM, sliding no earlier
/// than its current start. An upgrade is kept only if the new finish stays
/// inside the window, clears every scheduled successor's start (minus its
/// communication delay), and starts no earlier than any predecessor allows;
/// otherwise the original entry is restored exactly.
pub fn enhance_quality(
    dag_instance: &DagSpec,
    sched: &PartialSchedule,
    window: CycleWindow,
    platform: &Platform,
) -> Result<PartialSchedule, HeftError> {
    let ranks = upward_ranks(dag_instance, platform)?;
    let order = priority_order(&ranks);
    let mut work = sched.clone();
    for task_id in &order {
        loop {
            let entry = work.entries[task_id].clone();
            let task = dag_instance.task(task_id).expect("task exists");
            let next_level = entry.level + 1;
            if next_level > task.max_level() {
                break;
            }
            let Some(dur) = task.exec(&entry.vm, next_level) else {
                break;
            };

            // Floor: current start and every predecessor's finish + delay.
            let mut earliest = entry.start;
            for edge in dag_instance.predecessors(task_id) {
                let pred = &work.entries[&edge.src];
                earliest = earliest.max(pred.finish + comm_delay(edge, &pred.vm, &entry.vm, platform)?);
            }
            // Ceiling: window end and every scheduled successor's start
            // minus the delay owed to it.
            let mut latest = window.end;
            let mut blocked = false;
            for edge in dag_instance.successors(task_id) {
                let succ = &work.entries[&edge.dst];
                let delay = comm_delay(edge, &entry.vm, &succ.vm, platform)?;
                match succ.start.checked_sub(delay) {
                    Some(bound) => latest = latest.min(bound),
                    None => blocked = true,
                }
            }
            if blocked {
                break;
            }

            let freed = release_interval(
                &work.queues[&entry.vm],
                entry.start,
                entry.finish - entry.start,
            )?;
            match find_feasible_gap(&freed, earliest, dur, latest) {
                Some((_, start)) => {
                    let queue = allocate_interval(&freed, start, dur)?;
                    work.queues.insert(entry.vm.clone(), queue);
                    work.entries.insert(
                        task_id.clone(),
                        ScheduleEntry {
                            level: next_level,
                            start,
                            finish: start + dur,
                            ..entry
                        },
                    );
                }
                // No gap admits the longer version; keep the base entry.
                None => break,
            }
        }
    }
    Ok(work)
}
