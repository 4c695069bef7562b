//! VMs, bandwidths and per-VM idle-slot event queues.
//!
//! The pre-occupied workload on each VM is represented only by its free
//! complement: an [`EventQueue`] of idle slots sorted by start time. The
//! scheduler carves task intervals out of these slots (split) and returns
//! them on rollback (merge); both operations run in linear time.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::types::{Rat, Tick};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueueError {
    #[error("idle slots overlap at t={0}")]
    OverlappingSlots(Tick),
    #[error("interval [{start}, {start}+{duration}) is not inside a single idle slot")]
    AllocationOutsideIdle { start: Tick, duration: Tick },
    #[error("released interval [{start}, {start}+{duration}) overlaps existing idle time")]
    DoubleFree { start: Tick, duration: Tick },
    #[error("zero-length interval")]
    ZeroDuration,
}

/// One free interval `[start, start + duration)` on a VM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdleSlot {
    pub start: Tick,
    pub duration: Tick,
}

impl IdleSlot {
    pub fn new(start: Tick, duration: Tick) -> Self {
        debug_assert!(duration > 0);
        Self { start, duration }
    }

    pub fn end(&self) -> Tick {
        self.start + self.duration
    }
}

/// Idle slots of one VM, sorted by start, non-overlapping, non-adjacent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EventQueue {
    pub slots: Vec<IdleSlot>,
}

impl EventQueue {
    pub fn new(slots: Vec<IdleSlot>) -> Result<Self, QueueError> {
        normalize_event_queue(EventQueue { slots })
    }

    /// Single slot covering `[0, horizon)`; empty queue when `horizon == 0`.
    pub fn fully_idle(horizon: Tick) -> Self {
        if horizon == 0 {
            return EventQueue::default();
        }
        EventQueue {
            slots: vec![IdleSlot::new(0, horizon)],
        }
    }

    pub fn total_idle(&self) -> Tick {
        self.slots.iter().map(|s| s.duration).sum()
    }

    fn assert_normalized(&self) {
        debug_assert!(self
            .slots
            .windows(2)
            .all(|w| w[0].end() < w[1].start && w[0].duration > 0 && w[1].duration > 0));
    }
}

/// Sort and coalesce adjacent or contiguous slots. Overlaps are structural
/// corruption and rejected.
pub fn normalize_event_queue(queue: EventQueue) -> Result<EventQueue, QueueError> {
    let mut slots = queue.slots;
    if slots.iter().any(|s| s.duration == 0) {
        return Err(QueueError::ZeroDuration);
    }
    slots.sort_by_key(|s| s.start);
    let mut out: Vec<IdleSlot> = Vec::with_capacity(slots.len());
    for s in slots {
        match out.last_mut() {
            Some(prev) if s.start < prev.end() => {
                return Err(QueueError::OverlappingSlots(s.start))
            }
            Some(prev) if s.start == prev.end() => prev.duration += s.duration,
            _ => out.push(s),
        }
    }
    Ok(EventQueue { slots: out })
}

/// Carve `[start, start + duration)` out of the idle slot containing it,
/// leaving at most two residual slots.
pub fn allocate_interval(
    queue: &EventQueue,
    start: Tick,
    duration: Tick,
) -> Result<EventQueue, QueueError> {
    queue.assert_normalized();
    if duration == 0 {
        return Err(QueueError::ZeroDuration);
    }
    let end = start + duration;
    let idx = queue
        .slots
        .iter()
        .position(|s| s.start <= start && end <= s.end())
        .ok_or(QueueError::AllocationOutsideIdle { start, duration })?;
    let slot = queue.slots[idx];
    let mut slots = queue.slots.clone();
    let mut residuals = Vec::with_capacity(2);
    if start > slot.start {
        residuals.push(IdleSlot::new(slot.start, start - slot.start));
    }
    if end < slot.end() {
        residuals.push(IdleSlot::new(end, slot.end() - end));
    }
    slots.splice(idx..=idx, residuals);
    Ok(EventQueue { slots })
}

/// Reinsert a previously allocated interval, merging with any neighbours.
/// Exact inverse of [`allocate_interval`].
pub fn release_interval(
    queue: &EventQueue,
    start: Tick,
    duration: Tick,
) -> Result<EventQueue, QueueError> {
    queue.assert_normalized();
    if duration == 0 {
        return Err(QueueError::ZeroDuration);
    }
    let end = start + duration;
    if queue.slots.iter().any(|s| s.start < end && start < s.end()) {
        return Err(QueueError::DoubleFree { start, duration });
    }
    let mut slots = queue.slots.clone();
    slots.push(IdleSlot::new(start, duration));
    normalize_event_queue(EventQueue { slots })
}

/// Earliest placement of a `duration`-long interval that starts at or after
/// `earliest` and finishes by `latest_finish`, scanning slots in start order.
/// Returns `(slot_index, placement_start)`; `None` when no slot qualifies.
pub fn find_feasible_gap(
    queue: &EventQueue,
    earliest: Tick,
    duration: Tick,
    latest_finish: Tick,
) -> Option<(usize, Tick)> {
    debug_assert!(duration > 0);
    for (idx, slot) in queue.slots.iter().enumerate() {
        let place = earliest.max(slot.start);
        let bound = slot.end().min(latest_finish);
        if place + duration <= bound {
            return Some((idx, place));
        }
    }
    None
}

/// A virtual machine and the MEC host it lives on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VmDescriptor {
    pub vm_id: String,
    pub host_id: String,
}

/// The scheduling substrate: VMs, pairwise link bandwidths and the idle-slot
/// pattern of the background workload within one background period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Platform {
    pub vms: Vec<VmDescriptor>,
    /// Symmetric, indexed by VM position in `vms`; diagonal unused.
    pub bandwidth: Vec<Vec<Rat>>,
    /// Idle slots within `[0, background_period)` per VM, keyed by vm_id.
    pub queues: BTreeMap<String, EventQueue>,
    pub background_period: Tick,
}

#[derive(Debug, Error, PartialEq)]
pub enum PlatformError {
    #[error("unknown VM `{0}`")]
    UnknownVm(String),
    #[error("bandwidth matrix must be {n}x{n} for {n} VMs")]
    BadBandwidthShape { n: usize },
    #[error("bandwidth[{i}][{j}] must be positive and symmetric")]
    BadBandwidth { i: usize, j: usize },
    #[error("VM `{0}` has no event queue")]
    MissingQueue(String),
    #[error("vm_id `{0}` duplicated")]
    DuplicateVm(String),
    #[error("queue of VM `{vm}`: {source}")]
    CorruptQueue { vm: String, source: QueueError },
    #[error("queue of VM `{vm}` extends past the background period")]
    QueueBeyondPeriod { vm: String },
    #[error("background period must be positive")]
    ZeroBackgroundPeriod,
}

impl Platform {
    pub fn vm_index(&self, vm_id: &str) -> Result<usize, PlatformError> {
        self.vms
            .iter()
            .position(|v| v.vm_id == vm_id)
            .ok_or_else(|| PlatformError::UnknownVm(vm_id.to_string()))
    }

    pub fn bandwidth_between(&self, a: &str, b: &str) -> Result<Rat, PlatformError> {
        let i = self.vm_index(a)?;
        let j = self.vm_index(b)?;
        Ok(self.bandwidth[i][j])
    }

    /// Mean link bandwidth over distinct VM pairs; `None` on a single VM.
    pub fn mean_bandwidth(&self) -> Option<Rat> {
        let n = self.vms.len();
        if n < 2 {
            return None;
        }
        let mut sum = Rat::new(0, 1);
        let mut count = 0u64;
        for i in 0..n {
            for j in (i + 1)..n {
                sum += self.bandwidth[i][j];
                count += 1;
            }
        }
        Some(sum / Rat::from_integer(count))
    }

    /// Structural checks on shape, symmetry and queue normalization.
    pub fn validate(&self) -> Result<(), PlatformError> {
        if self.background_period == 0 {
            return Err(PlatformError::ZeroBackgroundPeriod);
        }
        let n = self.vms.len();
        for (k, vm) in self.vms.iter().enumerate() {
            if self.vms[..k].iter().any(|v| v.vm_id == vm.vm_id) {
                return Err(PlatformError::DuplicateVm(vm.vm_id.clone()));
            }
        }
        if self.bandwidth.len() != n || self.bandwidth.iter().any(|row| row.len() != n) {
            return Err(PlatformError::BadBandwidthShape { n });
        }
        for i in 0..n {
            for j in 0..n {
                if i != j
                    && (self.bandwidth[i][j] != self.bandwidth[j][i]
                        || self.bandwidth[i][j] == Rat::new(0, 1))
                {
                    return Err(PlatformError::BadBandwidth { i, j });
                }
            }
        }
        for vm in &self.vms {
            let q = self
                .queues
                .get(&vm.vm_id)
                .ok_or_else(|| PlatformError::MissingQueue(vm.vm_id.clone()))?;
            let normalized =
                normalize_event_queue(q.clone()).map_err(|source| PlatformError::CorruptQueue {
                    vm: vm.vm_id.clone(),
                    source,
                })?;
            if normalized != *q {
                return Err(PlatformError::CorruptQueue {
                    vm: vm.vm_id.clone(),
                    source: QueueError::OverlappingSlots(0),
                });
            }
            if q.slots.last().is_some_and(|s| s.end() > self.background_period) {
                return Err(PlatformError::QueueBeyondPeriod {
                    vm: vm.vm_id.clone(),
                });
            }
        }
        Ok(())
    }

    /// Repeat each VM's idle pattern across `[0, horizon)`, merging slots
    /// that touch across tile boundaries. `horizon` must be a multiple of
    /// the background period.
    pub fn tiled_queues(&self, horizon: Tick) -> BTreeMap<String, EventQueue> {
        assert_eq!(horizon % self.background_period, 0);
        let tiles = horizon / self.background_period;
        self.queues
            .iter()
            .map(|(vm, q)| {
                let mut slots = Vec::with_capacity(q.slots.len() * tiles as usize);
                for t in 0..tiles {
                    let off = t * self.background_period;
                    slots.extend(
                        q.slots
                            .iter()
                            .map(|s| IdleSlot::new(s.start + off, s.duration)),
                    );
                }
                let tiled = normalize_event_queue(EventQueue { slots })
                    .expect("tiling a valid queue cannot overlap");
                (vm.clone(), tiled)
            })
            .collect()
    }

    /// Busy (pre-occupied) intervals within `[0, background_period)` per VM:
    /// the complement of the idle slots.
    pub fn busy_pattern(&self, vm_id: &str) -> Vec<(Tick, Tick)> {
        let q = &self.queues[vm_id];
        let mut busy = Vec::new();
        let mut cursor = 0;
        for s in &q.slots {
            if s.start > cursor {
                busy.push((cursor, s.start));
            }
            cursor = s.end();
        }
        if cursor < self.background_period {
            busy.push((cursor, self.background_period));
        }
        busy
    }
}
