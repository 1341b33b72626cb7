//! Host parent graph and DOWN/UNREACHABLE classification.

use std::collections::{HashMap, VecDeque};

use indexmap::{IndexMap, IndexSet};

use crate::config::Model;
use crate::state::StateError;
use crate::status::HostReachability;

/// Hosts with their parent edges. Parents sit between the monitor and the host.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    parents: IndexMap<String, Vec<String>>,
    children: IndexMap<String, Vec<String>>,
}

impl Topology {
    /// Builds a topology from `(host, parents)` pairs. The caller guarantees
    /// the parent relation is acyclic and references only listed hosts.
    pub fn new<I, S>(edges: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<S>)>,
        S: Into<String>,
    {
        let mut parents: IndexMap<String, Vec<String>> = IndexMap::new();
        for (h, ps) in edges {
            parents.insert(h.into(), ps.into_iter().map(Into::into).collect());
        }
        let mut children: IndexMap<String, Vec<String>> =
            parents.keys().map(|h| (h.clone(), Vec::new())).collect();
        for (h, ps) in &parents {
            for p in ps {
                children.entry(p.clone()).or_default().push(h.clone());
            }
        }
        Topology { parents, children }
    }

    pub fn from_model(model: &Model) -> Self {
        Topology::new(
            model
                .hosts
                .values()
                .map(|h| (h.host_name.clone(), h.parents.clone())),
        )
    }

    pub fn contains(&self, host: &str) -> bool {
        self.parents.contains_key(host)
    }

    pub fn hosts(&self) -> impl Iterator<Item = &str> {
        self.parents.keys().map(String::as_str)
    }

    pub fn parents(&self, host: &str) -> &[String] {
        self.parents.get(host).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn children(&self, host: &str) -> &[String] {
        self.children.get(host).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All hosts below `host`, breadth-first, each listed once.
    pub fn descendants(&self, host: &str) -> Vec<String> {
        let mut seen: IndexSet<String> = IndexSet::new();
        let mut queue: VecDeque<&str> = self.children(host).iter().map(String::as_str).collect();
        while let Some(h) = queue.pop_front() {
            if seen.insert(h.to_string()) {
                queue.extend(self.children(h).iter().map(String::as_str));
            }
        }
        seen.into_iter().collect()
    }
}

/// UP if the host's own check passed. A failed host is DOWN when it has no
/// parents or some parent is reached by the monitor through passing hosts,
/// and UNREACHABLE otherwise.
pub fn classify_host(
    topology: &Topology,
    own_check_failed: &dyn Fn(&str) -> bool,
    host: &str,
) -> Result<HostReachability, StateError> {
    if !topology.contains(host) {
        return Err(StateError::UnknownHost(host.to_string()));
    }
    let mut memo = HashMap::new();
    Ok(classify_memo(topology, own_check_failed, host, &mut memo))
}

/// Classification of every host in the topology.
pub fn classify_all(
    topology: &Topology,
    own_check_failed: &dyn Fn(&str) -> bool,
) -> IndexMap<String, HostReachability> {
    let mut memo = HashMap::new();
    topology
        .hosts()
        .map(|h| (h.to_string(), classify_memo(topology, own_check_failed, h, &mut memo)))
        .collect()
}

fn parent_reached<'a>(
    topology: &'a Topology,
    failed: &dyn Fn(&str) -> bool,
    host: &'a str,
    memo: &mut HashMap<&'a str, bool>,
) -> bool {
    let parents = topology.parents(host);
    parents.is_empty() || parents.iter().any(|p| reached(topology, failed, p, memo))
}

fn reached<'a>(
    topology: &'a Topology,
    failed: &dyn Fn(&str) -> bool,
    host: &'a str,
    memo: &mut HashMap<&'a str, bool>,
) -> bool {
    if let Some(r) = memo.get(host) {
        return *r;
    }
    let r = !failed(host) && parent_reached(topology, failed, host, memo);
    memo.insert(host, r);
    r
}

fn classify_memo<'a>(
    topology: &'a Topology,
    failed: &dyn Fn(&str) -> bool,
    host: &'a str,
    memo: &mut HashMap<&'a str, bool>,
) -> HostReachability {
    if !failed(host) {
        HostReachability::Up
    } else if parent_reached(topology, failed, host, memo) {
        HostReachability::Down
    } else {
        HostReachability::Unreachable
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use HostReachability::*;

    fn chain() -> Topology {
        Topology::new(vec![
            ("root", vec![]),
            ("a", vec!["root"]),
            ("b", vec!["a"]),
            ("c", vec!["b"]),
        ])
    }

    #[test]
    fn failed_chain() {
        let t = chain();
        let all = classify_all(&t, &|_| true);
        assert_eq!(all["root"], Down);
        assert_eq!(all["a"], Unreachable);
        assert_eq!(all["b"], Unreachable);
        assert_eq!(all["c"], Unreachable);
    }

    #[test]
    fn diamond_with_one_live_parent() {
        let t = Topology::new(vec![
            ("p1", vec![]),
            ("p2", vec![]),
            ("child", vec!["p1", "p2"]),
        ]);
        let failed = |h: &str| h != "p1";
        assert_eq!(classify_host(&t, &failed, "child").unwrap(), Down);
        assert_eq!(classify_host(&t, &failed, "p2").unwrap(), Down);
    }

    #[test]
    fn everything_up() {
        let t = chain();
        assert!(classify_all(&t, &|_| false).values().all(|r| *r == Up));
    }

    #[test]
    fn unknown_host() {
        assert!(matches!(
            classify_host(&chain(), &|_| false, "zz"),
            Err(StateError::UnknownHost(_))
        ));
    }

    #[test]
    fn descendants_breadth_first_without_repeats() {
        let t = Topology::new(vec![
            ("r", vec![]),
            ("a", vec!["r"]),
            ("b", vec!["r"]),
            ("c", vec!["a", "b"]),
        ]);
        assert_eq!(t.descendants("r"), ["a", "b", "c"]);
        assert!(t.descendants("c").is_empty());
    }
}
