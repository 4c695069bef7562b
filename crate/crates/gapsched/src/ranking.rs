//! Upward-rank computation and the resulting task priority order.
//!
//! A task's rank is its mean base-quality execution time over all VMs plus
//! the maximum over successors of (mean communication cost + successor
//! rank). Ranks are exact rationals so tie detection never depends on
//! floating-point rounding.

use num_rational::BigRational;
use num_traits::Zero;
use std::collections::BTreeMap;
use thiserror::Error;

use crate::platform::Platform;
use crate::types::big;
use crate::workload::DagSpec;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RankError {
    #[error("DAG `{0}` is cyclic")]
    Cyclic(String),
    #[error("task `{task}` has no base exec time for VM `{vm}`")]
    MissingExec { task: String, vm: String },
}

/// task_id -> upward rank. Strictly decreasing along every edge.
pub type RankTable = BTreeMap<String, BigRational>;

/// Mean level-1 execution time of `task_id` over all platform VMs.
fn mean_base_exec(
    dag: &DagSpec,
    task_id: &str,
    platform: &Platform,
) -> Result<BigRational, RankError> {
    let task = dag.task(task_id).expect("task exists");
    let mut sum = BigRational::zero();
    for vm in &platform.vms {
        let d = task.exec(&vm.vm_id, 1).ok_or_else(|| RankError::MissingExec {
            task: task_id.to_string(),
            vm: vm.vm_id.clone(),
        })?;
        sum += BigRational::from_integer(d.into());
    }
    Ok(sum / BigRational::from_integer((platform.vms.len() as u64).into()))
}

/// Upward ranks per the recursive definition, evaluated in reverse
/// topological order. The mean communication cost of an edge is its data
/// volume divided by the mean bandwidth over distinct VM pairs (zero on a
/// single-VM platform, where everything is co-located).
pub fn upward_ranks(dag: &DagSpec, platform: &Platform) -> Result<RankTable, RankError> {
    let order = dag
        .topological_order()
        .ok_or_else(|| RankError::Cyclic(dag.dag_id.clone()))?;
    let mean_bw = platform.mean_bandwidth().map(big);
    let mut ranks = RankTable::new();
    for task_id in order.iter().rev() {
        let w = mean_base_exec(dag, task_id, platform)?;
        let mut best_tail = BigRational::zero();
        for e in dag.successors(task_id) {
            let comm = match &mean_bw {
                Some(bw) => big(e.data_volume) / bw,
                None => BigRational::zero(),
            };
            let tail = comm + &ranks[e.dst.as_str()];
            if tail > best_tail {
                best_tail = tail;
            }
        }
        ranks.insert(task_id.to_string(), w + best_tail);
    }
    Ok(ranks)
}

/// Tasks in descending rank order, ties broken by ascending task_id.
/// Because ranks strictly decrease along edges, the result is always a
/// valid topological order.
pub fn priority_order(ranks: &RankTable) -> Vec<String> {
    let mut tasks: Vec<&String> = ranks.keys().collect();
    tasks.sort_by(|a, b| ranks[*b].cmp(&ranks[*a]).then_with(|| a.cmp(b)));
    tasks.into_iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::types::Rat;
    use crate::workload::{DagSpec, EdgeSpec, QualityVersion, TaskSpec};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn task(id: &str, times: &[(&str, u64)]) -> TaskSpec {
        TaskSpec {
            task_id: id.into(),
            versions: vec![QualityVersion { level: 1, reward: Rat::from_integer(1) }],
            exec_time: times
                .iter()
                .map(|&(vm, t)| (vm.to_string(), [(1u32, t)].into()))
                .collect(),
        }
    }

    fn dag(tasks: Vec<TaskSpec>, edges: &[(&str, &str, u64)]) -> DagSpec {
        DagSpec {
            dag_id: "d".into(),
            tasks,
            edges: edges
                .iter()
                .map(|&(s, t, v)| EdgeSpec {
                    src: s.into(),
                    dst: t.into(),
                    data_volume: Rat::from_integer(v),
                })
                .collect(),
            period: 100,
            release: 0,
        }
    }

    #[test]
    fn single_task_rank_is_mean_exec() {
        let p = fixtures::two_idle_vms();
        let d = dag(vec![task("a", &[("v0", 2), ("v1", 4)])], &[]);
        let ranks = upward_ranks(&d, &p).unwrap();
        assert_eq!(ranks["a"], rat(3, 1));
    }

    #[test]
    fn chain_rank_is_recursive() {
        // w(a)=2, w(b)=3, volume 2 over mean bandwidth 2 -> comm cost 1
        let p = fixtures::two_idle_vms();
        let d = dag(
            vec![task("a", &[("v0", 2), ("v1", 2)]), task("b", &[("v0", 3), ("v1", 3)])],
            &[("a", "b", 2)],
        );
        let ranks = upward_ranks(&d, &p).unwrap();
        assert_eq!(ranks["b"], rat(3, 1));
        assert_eq!(ranks["a"], rat(6, 1));
    }

    #[test]
    fn fork_takes_max_over_successors() {
        let p = fixtures::two_idle_vms();
        let d = dag(
            vec![
                task("a", &[("v0", 1), ("v1", 1)]),
                task("b", &[("v0", 5), ("v1", 5)]),
                task("c", &[("v0", 2), ("v1", 2)]),
            ],
            &[("a", "b", 2), ("a", "c", 2)],
        );
        let ranks = upward_ranks(&d, &p).unwrap();
        assert_eq!(ranks["a"], rat(7, 1)); // 1 + max(1+5, 1+2)
    }

    #[test]
    fn priority_sorts_descending_with_id_tiebreak() {
        let mut ranks = RankTable::new();
        ranks.insert("a".into(), rat(6, 1));
        ranks.insert("b".into(), rat(3, 1));
        assert_eq!(priority_order(&ranks), vec!["a", "b"]);

        let mut tied = RankTable::new();
        tied.insert("b".into(), rat(5, 1));
        tied.insert("a".into(), rat(5, 1));
        assert_eq!(priority_order(&tied), vec!["a", "b"]);
    }

    #[test]
    fn diamond_priority_is_topological() {
        let p = fixtures::two_idle_vms();
        let d = fixtures::diamond_dag();
        let ranks = upward_ranks(&d, &p).unwrap();
        let order = priority_order(&ranks);
        let pos: BTreeMap<&str, usize> =
            order.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        for e in &d.edges {
            assert!(pos[e.src.as_str()] < pos[e.dst.as_str()]);
        }
    }

    fn random_layered(
        layer_of: &[u8],
        edge_bits: &[bool],
        times: &[u64],
        volumes: &[u64],
    ) -> DagSpec {
        let n = layer_of.len();
        let ids: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let tasks = (0..n)
            .map(|i| task(&ids[i], &[("v0", times[i] + 1), ("v1", times[(i + 1) % n] + 1)]))
            .collect();
        let mut edges = Vec::new();
        let mut k = 0;
        for i in 0..n {
            for j in 0..n {
                if i != j && layer_of[i] < layer_of[j] {
                    if edge_bits[k % edge_bits.len()] {
                        edges.push((ids[i].clone(), ids[j].clone(), volumes[k % volumes.len()]));
                    }
                    k += 1;
                }
            }
        }
        dag(
            tasks,
            &edges
                .iter()
                .map(|(s, t, v)| (s.as_str(), t.as_str(), *v))
                .collect::<Vec<_>>(),
        )
    }

    proptest! {
        #[test]
        fn priority_respects_precedence_and_scaling(
            layer_of in proptest::collection::vec(0u8..4, 3..8),
            edge_bits in proptest::collection::vec(any::<bool>(), 16),
            times in proptest::collection::vec(0u64..9, 8),
            volumes in proptest::collection::vec(0u64..9, 8),
            k in 2u64..5,
        ) {
            let p = fixtures::two_idle_vms();
            let d = random_layered(&layer_of, &edge_bits, &times, &volumes);
            let ranks = upward_ranks(&d, &p).unwrap();

            // Parent ranks strictly exceed child ranks.
            for e in &d.edges {
                prop_assert!(ranks[e.src.as_str()] > ranks[e.dst.as_str()]);
            }

            // Priority order is topological.
            let order = priority_order(&ranks);
            let pos: BTreeMap<&str, usize> =
                order.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
            for e in &d.edges {
                prop_assert!(pos[e.src.as_str()] < pos[e.dst.as_str()]);
            }

            // Scaling every time and volume by k scales ranks by k and
            // leaves the order unchanged.
            let mut scaled = d.clone();
            for t in &mut scaled.tasks {
                for m in t.exec_time.values_mut() {
                    for v in m.values_mut() {
                        *v *= k;
                    }
                }
            }
            for e in &mut scaled.edges {
                e.data_volume *= Rat::from_integer(k);
            }
            let scaled_ranks = upward_ranks(&scaled, &p).unwrap();
            let kk = BigRational::from_integer(k.into());
            for (t, r) in &ranks {
                prop_assert_eq!(&scaled_ranks[t], &(r * &kk));
            }
            prop_assert_eq!(priority_order(&scaled_ranks), order);
        }

        /// Adding an edge (i, j) never decreases rank(i).
        #[test]
        fn rank_monotone_under_edge_addition(
            layer_of in proptest::collection::vec(0u8..4, 3..8),
            edge_bits in proptest::collection::vec(any::<bool>(), 16),
            times in proptest::collection::vec(0u64..9, 8),
            volumes in proptest::collection::vec(0u64..9, 8),
            pick in 0usize..64,
        ) {
            let p = fixtures::two_idle_vms();
            let d = random_layered(&layer_of, &edge_bits, &times, &volumes);
            let n = layer_of.len();
            // Candidate forward pairs not already connected; skip quietly
            // if the graph happens to be complete.
            let candidates: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|&(i, j)| layer_of[i] < layer_of[j])
                .filter(|&(i, j)| {
                    let (s, t) = (format!("t{i}"), format!("t{j}"));
                    !d.edges.iter().any(|e| e.src == s && e.dst == t)
                })
                .collect();
            prop_assume!(!candidates.is_empty());
            let (i, j) = candidates[pick % candidates.len()];
            let src = format!("t{i}");
            let dst = format!("t{j}");

            let before = upward_ranks(&d, &p).unwrap();
            let mut with_edge = d.clone();
            with_edge.edges.push(EdgeSpec { src: src.clone(), dst, data_volume: Rat::from_integer(3) });
            let after = upward_ranks(&with_edge, &p).unwrap();
            prop_assert!(after[&src] >= before[&src]);
        }
    }
}
