//! Normalized reward and tick-accounting statistics over a hyper-schedule.

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::periodic::HyperSchedule;
use crate::platform::Platform;
use crate::types::{big, Tick};
use crate::workload::DagSpec;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("entry references unknown DAG `{0}`")]
    UnknownDag(String),
    #[error("entry references unknown task `{0}`")]
    UnknownTask(String),
    #[error("entry of task `{task}` uses unknown level {level}")]
    UnknownLevel { task: String, level: u32 },
    #[error("entry references unknown VM `{0}`")]
    UnknownVm(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DagReward {
    pub r_act: BigRational,
    pub r_max: BigRational,
    pub nullified_instances: u64,
}

/// Actual vs. maximum achievable reward. The maximum counts every task
/// instance at its highest level, including instances that failed to
/// schedule, so failures pull the normalized reward down.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardReport {
    pub r_act: BigRational,
    pub r_max: BigRational,
    pub nr_percent: BigRational,
    pub per_dag: BTreeMap<String, DagReward>,
    pub nullified_instances: u64,
}

impl RewardReport {
    pub fn nr_as_f64(&self) -> f64 {
        self.nr_percent.to_f64().unwrap_or(0.0)
    }

    /// Rendered at two decimal places for reports.
    pub fn nr_display(&self) -> String {
        format!("{:.2}", self.nr_as_f64())
    }
}

pub fn normalized_reward(
    hs: &HyperSchedule,
    dags: &[DagSpec],
) -> Result<RewardReport, MetricsError> {
    let by_id: BTreeMap<&str, &DagSpec> = dags.iter().map(|d| (d.dag_id.as_str(), d)).collect();
    let mut per_dag: BTreeMap<String, DagReward> = dags
        .iter()
        .map(|d| {
            let cycles = hs.repetition_factor as Tick * hs.hyperperiod / d.period;
            let max_per_cycle: BigRational =
                d.tasks.iter().map(|t| big(t.max_reward())).sum();
            (
                d.dag_id.clone(),
                DagReward {
                    r_act: BigRational::zero(),
                    r_max: BigRational::from_integer(cycles.into()) * max_per_cycle,
                    nullified_instances: 0,
                },
            )
        })
        .collect();

    for e in &hs.entries {
        let dag = by_id
            .get(e.instance.dag_id.as_str())
            .ok_or_else(|| MetricsError::UnknownDag(e.instance.dag_id.clone()))?;
        let task = dag
            .task(&e.instance.source_task)
            .ok_or_else(|| MetricsError::UnknownTask(e.instance.source_task.clone()))?;
        let reward = task.reward_at(e.level).ok_or(MetricsError::UnknownLevel {
            task: task.task_id.clone(),
            level: e.level,
        })?;
        per_dag.get_mut(&e.instance.dag_id).unwrap().r_act += big(reward);
    }
    for f in &hs.failures {
        if let Some(d) = per_dag.get_mut(&f.dag_id) {
            d.nullified_instances += 1;
        }
    }

    let r_act: BigRational = per_dag.values().map(|d| d.r_act.clone()).sum();
    let r_max: BigRational = per_dag.values().map(|d| d.r_max.clone()).sum();
    let nr_percent = if r_max.is_zero() {
        BigRational::from_integer(100.into())
    } else {
        &r_act / &r_max * BigRational::from_integer(100.into())
    };
    let nullified_instances = per_dag.values().map(|d| d.nullified_instances).sum();
    Ok(RewardReport {
        r_act,
        r_max,
        nr_percent,
        per_dag,
        nullified_instances,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmUsage {
    /// Ticks spent running newly scheduled DAG tasks over the horizon.
    pub busy: Tick,
    /// Idle ticks left over after both pre-occupation and new tasks.
    pub idle: Tick,
    /// Ticks pre-occupied by the background workload.
    pub preoccupied: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleStats {
    pub per_vm: BTreeMap<String, VmUsage>,
    /// (dag_id, cycle_index) -> latest finish minus nominal window start.
    pub per_instance_makespan: BTreeMap<(String, u32), Tick>,
}

pub fn schedule_stats(
    hs: &HyperSchedule,
    platform: &Platform,
    dags: &[DagSpec],
) -> Result<ScheduleStats, MetricsError> {
    let horizon = hs.horizon();
    let periods: BTreeMap<&str, Tick> =
        dags.iter().map(|d| (d.dag_id.as_str(), d.period)).collect();
    let mut per_vm: BTreeMap<String, VmUsage> = platform
        .vms
        .iter()
        .map(|vm| {
            let idle_per_period = platform.queues[&vm.vm_id].total_idle();
            let tiles = horizon / platform.background_period;
            let idle_total = idle_per_period * tiles;
            (
                vm.vm_id.clone(),
                VmUsage {
                    busy: 0,
                    idle: idle_total,
                    preoccupied: horizon - idle_total,
                },
            )
        })
        .collect();

    let mut latest_finish: BTreeMap<(String, u32), Tick> = BTreeMap::new();
    for e in &hs.entries {
        let usage = per_vm
            .get_mut(&e.vm)
            .ok_or_else(|| MetricsError::UnknownVm(e.vm.clone()))?;
        let dur = e.finish - e.start;
        usage.busy += dur;
        usage.idle -= dur;
        let key = (e.instance.dag_id.clone(), e.instance.cycle_index);
        let f = latest_finish.entry(key).or_insert(0);
        *f = (*f).max(e.finish);
    }
    let per_instance_makespan = latest_finish
        .into_iter()
        .map(|((dag_id, cycle), finish)| {
            let window_start = periods
                .get(dag_id.as_str())
                .map(|p| p * cycle as Tick)
                .unwrap_or(0);
            ((dag_id, cycle), finish.saturating_sub(window_start))
        })
        .collect();
    Ok(ScheduleStats {
        per_vm,
        per_instance_makespan,
    })
}
