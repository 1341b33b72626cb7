use gridwatch_core::config::ValidationError;
use gridwatch_core::{load_str, ConfigError};
use proptest::prelude::*;

fn hosts_text(parents: &[Vec<usize>]) -> String {
    let mut text = String::new();
    for (i, ps) in parents.iter().enumerate() {
        text.push_str(&format!("define host{{\n host_name h{i}\n address 10.0.0.{}\n", i + 1));
        if !ps.is_empty() {
            let names: Vec<String> = ps.iter().map(|p| format!("h{p}")).collect();
            text.push_str(&format!(" parents {}\n", names.join(",")));
        }
        text.push_str(" check_command check_tcp!22\n}\n");
        text.push_str(&format!(
            "define service{{\n host_name h{i}\n service_description svc\n check_command check_tcp!80\n}}\n"
        ));
    }
    text
}

fn dag() -> impl Strategy<Value = Vec<Vec<usize>>> {
    (1usize..20).prop_flat_map(|n| {
        (0..n)
            .map(|i| {
                if i == 0 {
                    Just(vec![]).boxed()
                } else {
                    prop::collection::btree_set(0..i, 0..3).prop_map(|s| s.into_iter().collect()).boxed()
                }
            })
            .collect::<Vec<_>>()
    })
}

proptest! {
    #[test]
    fn loading_is_deterministic(parents in dag()) {
        let text = hosts_text(&parents);
        let a = load_str(&text).unwrap();
        let b = load_str(&text).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.hosts.len(), parents.len());
        prop_assert_eq!(a.services.len(), parents.len());
    }

    #[test]
    fn back_edge_is_a_cycle(parents in dag().prop_filter("needs an edge", |p| p.iter().any(|x| !x.is_empty()))) {
        // point the first parent of some host back at that host's child
        let mut p = parents.clone();
        let (child, ps) = p.iter().enumerate().find(|(_, ps)| !ps.is_empty()).map(|(i, ps)| (i, ps.clone())).unwrap();
        p[ps[0]].push(child);
        match load_str(&hosts_text(&p)) {
            Err(ConfigError::Validation(ValidationError::ParentCycle(path))) => prop_assert!(path.len() >= 2),
            other => prop_assert!(false, "expected cycle, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn dangling_parent_rejected(parents in dag()) {
        let mut p = parents;
        let n = p.len();
        p[0].push(n + 5);
        let err = load_str(&hosts_text(&p)).unwrap_err();
        prop_assert!(matches!(err, ConfigError::Validation(ValidationError::DanglingReference { .. })), "{}", err);
    }
}
