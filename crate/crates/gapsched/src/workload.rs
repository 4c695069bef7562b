//! Periodic DAG applications with quality-versioned tasks.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::platform::{Platform, PlatformError};
use crate::types::{ceil_ticks, Rat, Tick};

/// One selectable implementation of a task. Level 1 is the base quality;
/// higher levels run longer and earn a strictly higher reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityVersion {
    pub level: u32,
    pub reward: Rat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: String,
    pub versions: Vec<QualityVersion>,
    /// vm_id -> level -> execution time in ticks.
    pub exec_time: BTreeMap<String, BTreeMap<u32, Tick>>,
}

impl TaskSpec {
    pub fn max_level(&self) -> u32 {
        self.versions.last().map(|v| v.level).unwrap_or(1)
    }

    pub fn reward_at(&self, level: u32) -> Option<Rat> {
        self.versions.iter().find(|v| v.level == level).map(|v| v.reward)
    }

    pub fn max_reward(&self) -> Rat {
        self.versions
            .iter()
            .map(|v| v.reward)
            .max()
            .unwrap_or_else(|| Rat::new(0, 1))
    }

    pub fn exec(&self, vm_id: &str, level: u32) -> Option<Tick> {
        self.exec_time.get(vm_id).and_then(|m| m.get(&level)).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub src: String,
    pub dst: String,
    pub data_volume: Rat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DagSpec {
    pub dag_id: String,
    pub tasks: Vec<TaskSpec>,
    pub edges: Vec<EdgeSpec>,
    pub period: Tick,
    #[serde(default)]
    pub release: Tick,
}

/// One per-cycle occurrence of a task within the hyper-schedule.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskInstance {
    pub instance_id: String,
    pub source_task: String,
    pub dag_id: String,
    pub cycle_index: u32,
}

impl DagSpec {
    pub fn task(&self, task_id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn predecessors<'a>(&'a self, task_id: &'a str) -> impl Iterator<Item = &'a EdgeSpec> {
        self.edges.iter().filter(move |e| e.dst == task_id)
    }

    pub fn successors<'a>(&'a self, task_id: &'a str) -> impl Iterator<Item = &'a EdgeSpec> {
        self.edges.iter().filter(move |e| e.src == task_id)
    }

    /// Kahn topological order; `None` if the edge set has a cycle.
    pub fn topological_order(&self) -> Option<Vec<&str>> {
        let mut indegree: BTreeMap<&str, usize> =
            self.tasks.iter().map(|t| (t.task_id.as_str(), 0)).collect();
        for e in &self.edges {
            *indegree.get_mut(e.dst.as_str())? += 1;
            if !indegree.contains_key(e.src.as_str()) {
                return None;
            }
        }
        let mut ready: Vec<&str> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&t, _)| t)
            .collect();
        let mut order = Vec::with_capacity(self.tasks.len());
        while let Some(t) = ready.pop() {
            order.push(t);
            for e in self.successors(t) {
                let d = indegree.get_mut(e.dst.as_str()).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(&e.dst);
                }
            }
        }
        (order.len() == self.tasks.len()).then_some(order)
    }
}

/// A single structural problem found by [`validate_dag`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.detail)
    }
}

/// Check every DagSpec/TaskSpec invariant against a platform. Violations are
/// returned as data; an empty list means the DAG is well formed.
pub fn validate_dag(dag: &DagSpec, platform: &Platform) -> Vec<Violation> {
    let mut report = Vec::new();
    let mut push = |location: &str, detail: String| {
        report.push(Violation {
            location: location.to_string(),
            detail,
        })
    };

    if dag.period == 0 {
        push(&dag.dag_id, "period must be positive".into());
    }
    if dag.tasks.is_empty() {
        push(&dag.dag_id, "DAG has no tasks".into());
    }
    let mut seen = BTreeSet::new();
    for t in &dag.tasks {
        if !seen.insert(t.task_id.as_str()) {
            push(&t.task_id, "duplicate task_id".into());
        }
    }

    for t in &dag.tasks {
        if t.versions.is_empty() {
            push(&t.task_id, "task has no quality versions".into());
            continue;
        }
        for (i, v) in t.versions.iter().enumerate() {
            if v.level != i as u32 + 1 {
                push(&t.task_id, format!("levels must be consecutive from 1, found {} at position {}", v.level, i));
            }
        }
        for pair in t.versions.windows(2) {
            if pair[1].reward <= pair[0].reward {
                push(&t.task_id, format!("reward must strictly increase with level (level {})", pair[1].level));
            }
        }
        for vm in &platform.vms {
            let Some(times) = t.exec_time.get(&vm.vm_id) else {
                push(&t.task_id, format!("no exec_time entries for VM `{}`", vm.vm_id));
                continue;
            };
            let mut prev: Option<Tick> = None;
            for v in &t.versions {
                match times.get(&v.level) {
                    None => push(&t.task_id, format!("missing exec_time for (VM `{}`, level {})", vm.vm_id, v.level)),
                    Some(&d) => {
                        if d == 0 {
                            push(&t.task_id, format!("exec_time must be positive (VM `{}`, level {})", vm.vm_id, v.level));
                        }
                        if prev.is_some_and(|p| d <= p) {
                            push(&t.task_id, format!("non-monotone version times on VM `{}` at level {}", vm.vm_id, v.level));
                        }
                        prev = Some(d);
                    }
                }
            }
        }
    }

    for (i, e) in dag.edges.iter().enumerate() {
        let loc = format!("{}:edge[{}]", dag.dag_id, i);
        if e.src == e.dst {
            push(&loc, format!("self-loop on `{}`", e.src));
        }
        if dag.task(&e.src).is_none() {
            push(&loc, format!("unknown src task `{}`", e.src));
        }
        if dag.task(&e.dst).is_none() {
            push(&loc, format!("unknown dst task `{}`", e.dst));
        }
    }

    drop(push);
    if report.is_empty() {
        let mut push = |location: &str, detail: String| {
            report.push(Violation {
                location: location.to_string(),
                detail,
            })
        };
        if dag.topological_order().is_none() {
            push(&dag.dag_id, "cycle detected".into());
        } else {
            // Acyclic with >= 1 task implies entry and exit tasks exist, but
            // check explicitly so the validator stands on its own.
            let has_entry = dag.tasks.iter().any(|t| dag.predecessors(&t.task_id).next().is_none());
            let has_exit = dag.tasks.iter().any(|t| dag.successors(&t.task_id).next().is_none());
            if !has_entry {
                push(&dag.dag_id, "no entry task".into());
            }
            if !has_exit {
                push(&dag.dag_id, "no exit task".into());
            }
        }
    }
    report
}

/// Structurally identical copy of `dag` with globally fresh task ids of the
/// form `<namespace>.<old_id>`, plus the old-id-to-instance mapping.
pub fn instantiate_cycle(
    dag: &DagSpec,
    cycle_index: u32,
    id_namespace: &str,
) -> (DagSpec, BTreeMap<String, TaskInstance>) {
    let fresh = |old: &str| format!("{id_namespace}.{old}");
    let tasks = dag
        .tasks
        .iter()
        .map(|t| TaskSpec {
            task_id: fresh(&t.task_id),
            versions: t.versions.clone(),
            exec_time: t.exec_time.clone(),
        })
        .collect();
    let edges = dag
        .edges
        .iter()
        .map(|e| EdgeSpec {
            src: fresh(&e.src),
            dst: fresh(&e.dst),
            data_volume: e.data_volume,
        })
        .collect();
    let mapping = dag
        .tasks
        .iter()
        .map(|t| {
            (
                t.task_id.clone(),
                TaskInstance {
                    instance_id: fresh(&t.task_id),
                    source_task: t.task_id.clone(),
                    dag_id: dag.dag_id.clone(),
                    cycle_index,
                },
            )
        })
        .collect();
    (
        DagSpec {
            dag_id: format!("{}#{}", dag.dag_id, cycle_index),
            tasks,
            edges,
            period: dag.period,
            release: dag.release,
        },
        mapping,
    )
}

/// Data-transfer delay of an edge between two VMs: zero when co-located,
/// otherwise `ceil(volume / bandwidth)` on the integer tick grid.
pub fn comm_delay(
    edge: &EdgeSpec,
    src_vm: &str,
    dst_vm: &str,
    platform: &Platform,
) -> Result<Tick, PlatformError> {
    if src_vm == dst_vm {
        // Both endpoints still must exist.
        platform.vm_index(src_vm)?;
        return Ok(0);
    }
    let bw = platform.bandwidth_between(src_vm, dst_vm)?;
    Ok(ceil_ticks(edge.data_volume / bw))
}
