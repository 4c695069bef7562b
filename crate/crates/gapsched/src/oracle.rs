//! Independent verification and small-instance exhaustive optimization.
//!
//! Everything here works on plain interval lists derived directly from the
//! platform's busy pattern, never on the scheduler's event queues, so a bug
//! in the queue algebra cannot hide from the checker.

use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

use crate::heft::{CycleWindow, ScheduleEntry};
use crate::periodic::HyperSchedule;
use crate::platform::Platform;
use crate::types::{big, narrow, Rat, Tick};
use crate::workload::{comm_delay, DagSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Overlap,
    Precedence,
    Window,
    Preoccupation,
    Version,
    Periodicity,
    Integrity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleViolation {
    pub kind: ViolationKind,
    pub location: String,
    pub detail: String,
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}] {}: {}", self.kind, self.location, self.detail)
    }
}

pub type ViolationReport = Vec<ScheduleViolation>;

/// Busy intervals of the background workload on one VM over `[0, span)`,
/// tiled straight from the pattern (no event-queue code involved).
fn tiled_busy(platform: &Platform, vm: &str, span: Tick) -> Vec<(Tick, Tick)> {
    let pattern = platform.busy_pattern(vm);
    let mut busy = Vec::new();
    let mut offset = 0;
    while offset < span {
        for &(s, e) in &pattern {
            if offset + s < span {
                busy.push((offset + s, (offset + e).min(span)));
            }
        }
        offset += platform.background_period;
    }
    busy
}

fn check_horizon(
    entries: &[ScheduleEntry],
    dags: &[DagSpec],
    platform: &Platform,
    span: Tick,
    report: &mut ViolationReport,
    kind_for_overflow: ViolationKind,
) {
    let by_dag: BTreeMap<&str, &DagSpec> = dags.iter().map(|d| (d.dag_id.as_str(), d)).collect();

    // (1) per-VM non-overlap among entries, by sorted pairwise scan.
    let mut per_vm: BTreeMap<&str, Vec<&ScheduleEntry>> = BTreeMap::new();
    for e in entries {
        per_vm.entry(e.vm.as_str()).or_default().push(e);
    }
    for (vm, mut list) in per_vm {
        if platform.vm_index(vm).is_err() {
            report.push(ScheduleViolation {
                kind: ViolationKind::Integrity,
                location: vm.to_string(),
                detail: "entry references unknown VM".into(),
            });
            continue;
        }
        list.sort_by_key(|e| e.start);
        for pair in list.windows(2) {
            if pair[1].start < pair[0].finish {
                report.push(ScheduleViolation {
                    kind: ViolationKind::Overlap,
                    location: format!("{vm}: {} / {}", pair[0].instance.instance_id, pair[1].instance.instance_id),
                    detail: format!(
                        "[{}, {}) overlaps [{}, {})",
                        pair[0].start, pair[0].finish, pair[1].start, pair[1].finish
                    ),
                });
            }
        }
        // (2) entries must avoid the pre-occupied complement.
        let busy = tiled_busy(platform, vm, span);
        for e in &list {
            if busy.iter().any(|&(s, t)| e.start < t && s < e.finish) {
                report.push(ScheduleViolation {
                    kind: ViolationKind::Preoccupation,
                    location: e.instance.instance_id.clone(),
                    detail: format!("[{}, {}) intersects pre-occupied time on {vm}", e.start, e.finish),
                });
            }
            if e.finish > span {
                report.push(ScheduleViolation {
                    kind: kind_for_overflow,
                    location: e.instance.instance_id.clone(),
                    detail: format!("finish {} beyond scheduled span {span}", e.finish),
                });
            }
        }
    }

    // Per-instance lookups for precedence and window checks.
    let mut by_instance: BTreeMap<(&str, u32, &str), &ScheduleEntry> = BTreeMap::new();
    for e in entries {
        by_instance.insert(
            (e.instance.dag_id.as_str(), e.instance.cycle_index, e.instance.source_task.as_str()),
            e,
        );
    }

    for e in entries {
        let Some(dag) = by_dag.get(e.instance.dag_id.as_str()) else {
            report.push(ScheduleViolation {
                kind: ViolationKind::Integrity,
                location: e.instance.instance_id.clone(),
                detail: format!("unknown DAG `{}`", e.instance.dag_id),
            });
            continue;
        };
        let Some(task) = dag.task(&e.instance.source_task) else {
            report.push(ScheduleViolation {
                kind: ViolationKind::Integrity,
                location: e.instance.instance_id.clone(),
                detail: format!("unknown task `{}`", e.instance.source_task),
            });
            continue;
        };

        // (5) version level exists and timing is consistent with it.
        match task.exec(&e.vm, e.level) {
            None => report.push(ScheduleViolation {
                kind: ViolationKind::Version,
                location: e.instance.instance_id.clone(),
                detail: format!("level {} undefined on {}", e.level, e.vm),
            }),
            Some(dur) => {
                if e.finish != e.start + dur {
                    report.push(ScheduleViolation {
                        kind: ViolationKind::Version,
                        location: e.instance.instance_id.clone(),
                        detail: format!(
                            "duration {} does not match exec time {dur} at level {}",
                            e.finish - e.start,
                            e.level
                        ),
                    });
                }
            }
        }

        // (4) window containment: nominal cycle window of the instance.
        let window_start = dag.period * e.instance.cycle_index as Tick;
        let window_end = window_start + dag.period;
        if e.start < window_start.max(dag.release) || e.finish > window_end.max(dag.release + dag.period) {
            report.push(ScheduleViolation {
                kind: ViolationKind::Window,
                location: e.instance.instance_id.clone(),
                detail: format!(
                    "[{}, {}) outside cycle window [{window_start}, {window_end})",
                    e.start, e.finish
                ),
            });
        }

        // (3) precedence with communication delays.
        for edge in dag.predecessors(&e.instance.source_task) {
            let key = (e.instance.dag_id.as_str(), e.instance.cycle_index, edge.src.as_str());
            match by_instance.get(&key) {
                None => report.push(ScheduleViolation {
                    kind: ViolationKind::Precedence,
                    location: e.instance.instance_id.clone(),
                    detail: format!("predecessor `{}` has no entry", edge.src),
                }),
                Some(pred) => {
                    let delay = comm_delay(edge, &pred.vm, &e.vm, platform).unwrap_or(0);
                    if e.start < pred.finish + delay {
                        report.push(ScheduleViolation {
                            kind: ViolationKind::Precedence,
                            location: e.instance.instance_id.clone(),
                            detail: format!(
                                "starts at {} before predecessor finish {} + delay {delay}",
                                e.start, pred.finish
                            ),
                        });
                    }
                }
            }
        }
    }

    // Completeness: every instance with any entry must have one per task.
    let mut seen: BTreeMap<(&str, u32), usize> = BTreeMap::new();
    for e in entries {
        *seen.entry((e.instance.dag_id.as_str(), e.instance.cycle_index)).or_default() += 1;
    }
    for ((dag_id, cycle), count) in seen {
        if let Some(dag) = by_dag.get(dag_id) {
            if count != dag.tasks.len() {
                report.push(ScheduleViolation {
                    kind: ViolationKind::Integrity,
                    location: format!("{dag_id}#{cycle}"),
                    detail: format!("instance has {count} entries for {} tasks", dag.tasks.len()),
                });
            }
        }
    }
}

/// Check a hyper-schedule against every problem constraint by direct
/// interval arithmetic, including a second tiled copy of the schedule to
/// confirm the pattern repeats feasibly.
pub fn verify_schedule(
    hs: &HyperSchedule,
    dags: &[DagSpec],
    platform: &Platform,
) -> ViolationReport {
    let mut report = ViolationReport::new();
    let span = hs
        .horizon()
        .max(platform.background_period)
        .next_multiple_of(platform.background_period);
    check_horizon(&hs.entries, dags, platform, span, &mut report, ViolationKind::Window);

    // (6) periodicity: the schedule tiled once more must stay feasible.
    let horizon = hs.horizon();
    if !hs.entries.is_empty() && horizon > 0 {
        let mut tiled = hs.entries.clone();
        let cycles_per_tile: BTreeMap<&str, u32> = dags
            .iter()
            .map(|d| (d.dag_id.as_str(), (horizon / d.period) as u32))
            .collect();
        for e in &hs.entries {
            let mut copy = e.clone();
            copy.start += horizon;
            copy.finish += horizon;
            copy.instance.cycle_index += cycles_per_tile[e.instance.dag_id.as_str()];
            copy.instance.instance_id = format!("tile2:{}", e.instance.instance_id);
            tiled.push(copy);
        }
        let mut tiled_report = ViolationReport::new();
        check_horizon(&tiled, dags, platform, 2 * span, &mut tiled_report, ViolationKind::Periodicity);
        for mut v in tiled_report {
            if v.location.starts_with("tile2:") || v.detail.contains("tile2:") {
                v.kind = ViolationKind::Periodicity;
                report.push(v);
            }
        }
    }
    report
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("search space too large: {0}")]
    SearchSpaceExceeded(String),
    #[error("DAG is cyclic")]
    Cyclic,
}

/// Result of the exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub enum BruteForceResult {
    Infeasible,
    Optimal {
        reward: Rat,
        witness: Vec<ScheduleEntry>,
    },
}

/// Per-tick availability grid for one VM over the search window; built from
/// the busy pattern, independent of the event-queue representation.
struct TickGrid {
    window_start: Tick,
    free: Vec<Vec<bool>>, // [vm][tick - window_start]
}

impl TickGrid {
    fn fits(&self, vm: usize, start: Tick, dur: Tick) -> bool {
        let s = (start - self.window_start) as usize;
        let e = s + dur as usize;
        e <= self.free[vm].len() && self.free[vm][s..e].iter().all(|&f| f)
    }

    fn set(&mut self, vm: usize, start: Tick, dur: Tick, value: bool) {
        let s = (start - self.window_start) as usize;
        for t in s..s + dur as usize {
            self.free[vm][t] = value;
        }
    }
}

/// Exhaustively search (VM, level, start) per task for the maximum total
/// reward within one cycle window. Bounded to tiny instances by a guard.
pub fn brute_force_optimal(
    dag: &DagSpec,
    platform: &Platform,
    window: CycleWindow,
) -> Result<BruteForceResult, OracleError> {
    let n_vms = platform.vms.len();
    let width = window.end - window.start;
    if dag.tasks.len() > 6 || n_vms > 3 || width > 32 {
        return Err(OracleError::SearchSpaceExceeded(format!(
            "{} tasks, {n_vms} VMs, window {width}",
            dag.tasks.len()
        )));
    }
    let order = dag.topological_order().ok_or(OracleError::Cyclic)?;

    // Availability grid from the tiled busy pattern.
    let span = window.end.next_multiple_of(platform.background_period);
    let mut grid = TickGrid {
        window_start: window.start,
        free: platform
            .vms
            .iter()
            .map(|vm| {
                let busy = tiled_busy(platform, &vm.vm_id, span);
                (window.start..window.end)
                    .map(|t| !busy.iter().any(|&(s, e)| s <= t && t < e))
                    .collect()
            })
            .collect(),
    };

    struct Search<'a> {
        dag: &'a DagSpec,
        platform: &'a Platform,
        order: Vec<&'a str>,
        window: CycleWindow,
        best: Option<(Rat, Vec<(usize, u32, Tick)>)>,
        current: Vec<(usize, u32, Tick)>, // (vm index, level, start) per order position
        remaining_max: Vec<Rat>,          // suffix sums of max rewards
    }

    impl Search<'_> {
        fn placed(&self, task_id: &str) -> Option<(usize, Tick)> {
            let pos = self.order.iter().position(|&t| t == task_id)?;
            self.current
                .get(pos)
                .map(|&(vm, level, start)| {
                    let dur = self.dag.task(task_id).unwrap().exec(&self.platform.vms[vm].vm_id, level).unwrap();
                    (vm, start + dur)
                })
        }

        fn recurse(&mut self, depth: usize, grid: &mut TickGrid, reward_so_far: Rat) {
            if depth == self.order.len() {
                if self.best.as_ref().is_none_or(|(r, _)| reward_so_far > *r) {
                    self.best = Some((reward_so_far, self.current.clone()));
                }
                return;
            }
            // Bound: even taking max reward for every remaining task cannot
            // beat the incumbent.
            if let Some((best_r, _)) = &self.best {
                if reward_so_far + self.remaining_max[depth] <= *best_r {
                    return;
                }
            }
            let task_id = self.order[depth];
            let task = self.dag.task(task_id).unwrap();
            for (vm_idx, vm) in self.platform.vms.iter().enumerate() {
                // Earliest admissible start given predecessors on this VM.
                let mut floor = self.window.start;
                let mut missing_pred = false;
                for edge in self.dag.predecessors(task_id) {
                    match self.placed(&edge.src) {
                        None => missing_pred = true,
                        Some((pvm, pfinish)) => {
                            let delay = comm_delay(
                                edge,
                                &self.platform.vms[pvm].vm_id,
                                &vm.vm_id,
                                self.platform,
                            )
                            .unwrap();
                            floor = floor.max(pfinish + delay);
                        }
                    }
                }
                debug_assert!(!missing_pred, "order is topological");
                for version in &task.versions {
                    let Some(dur) = task.exec(&vm.vm_id, version.level) else {
                        continue;
                    };
                    if dur > self.window.end.saturating_sub(floor) {
                        continue;
                    }
                    for start in floor..=(self.window.end - dur) {
                        if !grid.fits(vm_idx, start, dur) {
                            continue;
                        }
                        grid.set(vm_idx, start, dur, false);
                        self.current.push((vm_idx, version.level, start));
                        self.recurse(depth + 1, grid, reward_so_far + version.reward);
                        self.current.pop();
                        grid.set(vm_idx, start, dur, true);
                    }
                }
            }
        }
    }

    let mut remaining_max: Vec<Rat> = vec![Rat::new(0, 1); order.len() + 1];
    for (i, task_id) in order.iter().enumerate().rev() {
        remaining_max[i] = remaining_max[i + 1] + dag.task(task_id).unwrap().max_reward();
    }

    let mut search = Search {
        dag,
        platform,
        order: order.clone(),
        window,
        best: None,
        current: Vec::new(),
        remaining_max,
    };
    search.recurse(0, &mut grid, Rat::new(0, 1));

    match search.best {
        None => Ok(BruteForceResult::Infeasible),
        Some((reward, assignment)) => {
            let witness = order
                .iter()
                .zip(&assignment)
                .map(|(task_id, &(vm, level, start))| {
                    let dur = dag.task(task_id).unwrap().exec(&platform.vms[vm].vm_id, level).unwrap();
                    ScheduleEntry {
                        instance: crate::workload::TaskInstance {
                            instance_id: task_id.to_string(),
                            source_task: task_id.to_string(),
                            dag_id: dag.dag_id.clone(),
                            cycle_index: 0,
                        },
                        vm: platform.vms[vm].vm_id.clone(),
                        level,
                        start,
                        finish: start + dur,
                    }
                })
                .collect();
            Ok(BruteForceResult::Optimal { reward, witness })
        }
    }
}

/// Total reward of a set of entries against their source DAGs.
pub fn entries_reward(entries: &[ScheduleEntry], dags: &[DagSpec]) -> Rat {
    let by_dag: BTreeMap<&str, &DagSpec> = dags.iter().map(|d| (d.dag_id.as_str(), d)).collect();
    let total = entries
        .iter()
        .filter_map(|e| {
            by_dag
                .get(e.instance.dag_id.as_str())
                .and_then(|d| d.task(&e.instance.source_task))
                .and_then(|t| t.reward_at(e.level))
        })
        .map(big)
        .sum::<num_rational::BigRational>();
    narrow(&total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::periodic::{schedule_periodic, SchedulerOptions};
    use crate::workload::{QualityVersion, TaskSpec};

    #[test]
    fn scheduler_output_verifies_clean() {
        let platform = fixtures::platform_with_busy(&[(0, 2)], &[(4, 6)]);
        let dag = fixtures::diamond_dag();
        let hs = schedule_periodic(&[dag.clone()], &platform, SchedulerOptions::default()).unwrap();
        let report = verify_schedule(&hs, &[dag], &platform);
        assert!(report.is_empty(), "{report:?}");
    }

    #[test]
    fn overlapping_entries_are_reported() {
        let platform = fixtures::two_idle_vms();
        let dag = fixtures::diamond_dag();
        let mut hs = schedule_periodic(&[dag.clone()], &platform, SchedulerOptions::default()).unwrap();
        // Force two entries on one VM to collide.
        let vm = hs.entries[0].vm.clone();
        hs.entries[1].vm = vm;
        hs.entries[1].start = hs.entries[0].start;
        hs.entries[1].finish = hs.entries[0].finish + 1;
        let report = verify_schedule(&hs, &[dag], &platform);
        assert!(report.iter().any(|v| v.kind == ViolationKind::Overlap), "{report:?}");
    }

    #[test]
    fn entry_inside_preoccupied_time_is_reported() {
        let platform = fixtures::platform_with_busy(&[(0, 4)], &[]);
        let dag = fixtures::diamond_dag();
        let mut hs = schedule_periodic(&[dag.clone()], &platform, SchedulerOptions::default()).unwrap();
        hs.entries[0].vm = "v0".into();
        hs.entries[0].start = 0;
        hs.entries[0].finish = 2;
        let report = verify_schedule(&hs, &[dag], &platform);
        assert!(report.iter().any(|v| v.kind == ViolationKind::Preoccupation), "{report:?}");
    }

    fn one_task_dag(q1: Tick, q2: Tick) -> DagSpec {
        DagSpec {
            dag_id: "solo".into(),
            tasks: vec![TaskSpec {
                task_id: "t".into(),
                versions: vec![
                    QualityVersion { level: 1, reward: Rat::from_integer(1) },
                    QualityVersion { level: 2, reward: Rat::from_integer(2) },
                ],
                exec_time: [
                    ("v0".to_string(), [(1, q1), (2, q2)].into()),
                    ("v1".to_string(), [(1, q1), (2, q2)].into()),
                ]
                .into(),
            }],
            edges: vec![],
            period: 8,
            release: 0,
        }
    }

    #[test]
    fn brute_force_prefers_higher_version_when_it_fits() {
        // v1 fully busy so only v0's [0,4) idle window matters.
        let platform = fixtures::platform_with_busy(&[(4, 8)], &[(0, 8)]);
        let dag = one_task_dag(2, 3);
        let result = brute_force_optimal(&dag, &platform, CycleWindow { start: 0, end: 8 }).unwrap();
        match result {
            BruteForceResult::Optimal { reward, witness } => {
                assert_eq!(reward, Rat::from_integer(2));
                assert_eq!(witness[0].level, 2);
                assert_eq!(witness[0].start, 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn brute_force_falls_back_to_base_version() {
        let platform = fixtures::platform_with_busy(&[(2, 8)], &[(0, 8)]);
        let dag = one_task_dag(2, 3);
        let result = brute_force_optimal(&dag, &platform, CycleWindow { start: 0, end: 8 }).unwrap();
        match result {
            BruteForceResult::Optimal { reward, .. } => assert_eq!(reward, Rat::from_integer(1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn brute_force_reports_infeasible() {
        let platform = fixtures::platform_with_busy(&[(1, 8)], &[(0, 7)]);
        let dag = one_task_dag(2, 3);
        let result = brute_force_optimal(&dag, &platform, CycleWindow { start: 0, end: 8 }).unwrap();
        assert_eq!(result, BruteForceResult::Infeasible);
    }

    #[test]
    fn guard_rejects_large_instances() {
        let platform = fixtures::two_idle_vms();
        let dag = one_task_dag(2, 3);
        let err = brute_force_optimal(&dag, &platform, CycleWindow { start: 0, end: 64 }).unwrap_err();
        assert!(matches!(err, OracleError::SearchSpaceExceeded(_)));
    }

    #[test]
    fn oracle_bounds_heuristic_on_diamond() {
        let platform = fixtures::platform_with_busy(&[(0, 2)], &[(4, 6)]);
        let dag = fixtures::diamond_dag();
        let hs = schedule_periodic(&[dag.clone()], &platform, SchedulerOptions::default()).unwrap();
        // First instance only.
        let first: Vec<ScheduleEntry> = hs
            .entries
            .iter()
            .filter(|e| e.instance.cycle_index == 0)
            .cloned()
            .collect();
        let heuristic = entries_reward(&first, &[dag.clone()]);
        match brute_force_optimal(&dag, &platform, CycleWindow { start: 0, end: 12 }).unwrap() {
            BruteForceResult::Optimal { reward, .. } => assert!(heuristic <= reward),
            BruteForceResult::Infeasible => panic!("scheduler succeeded, oracle must be feasible"),
        }
    }
}
