use gridwatch_core::state::{apply_service_result, EngineEvent, NotificationReason, ServiceState, StateType};
use gridwatch_core::{CheckResult, Origin, StatusCode, Target, Timestamp};
use proptest::prelude::*;

const STATUSES: [StatusCode; 4] = [
    StatusCode::Ok,
    StatusCode::Warning,
    StatusCode::Unknown,
    StatusCode::Critical,
];

#[derive(Debug, PartialEq)]
struct Expected {
    status: StatusCode,
    hard: bool,
    attempt: u32,
    notify: Option<NotificationReason>,
    change_event: bool,
}

/// Row-by-row transition rules, written out case by case.
fn table(cur: StatusCode, hard: bool, attempt: u32, max: u32, res: StatusCode) -> Expected {
    use StatusCode::Ok;
    let (status, hard_after, attempt_after, notify) = match (cur == Ok, hard, res == Ok) {
        // recovery or steady OK
        (false, true, true) => (Ok, true, 1, Some(NotificationReason::Recovery)),
        (false, false, true) => (Ok, true, 1, None),
        (true, _, true) => (Ok, true, 1, None),
        // first failure
        (true, _, false) if max == 1 => (res, true, 1, Some(NotificationReason::Problem)),
        (true, _, false) => (res, false, 1, None),
        // soft episode continues
        (false, false, false) if attempt + 1 >= max => (res, true, max, Some(NotificationReason::Problem)),
        (false, false, false) => (res, false, attempt + 1, None),
        // hard problem persists
        (false, true, false) => (res, true, max, None),
    };
    Expected {
        status,
        hard: hard_after,
        attempt: attempt_after,
        notify,
        change_event: status != cur || hard_after != hard,
    }
}

fn state(cur: StatusCode, hard: bool, attempt: u32) -> ServiceState {
    let mut s = ServiceState::new(Target::service("h", "s"));
    s.current_status = cur;
    s.last_hard_status = if hard { cur } else { StatusCode::Ok };
    s.state_type = if hard { StateType::Hard } else { StateType::Soft };
    s.attempt = attempt;
    s.notification_number = u32::from(hard && cur != StatusCode::Ok);
    s.acknowledged = hard && cur != StatusCode::Ok;
    s
}

fn result(status: StatusCode, t: i64) -> CheckResult {
    CheckResult::new(
        Target::service("h", "s"),
        status,
        "x",
        vec![],
        Timestamp::from_secs(t),
        Timestamp::from_secs(t),
        Origin::Active,
    )
}

#[test]
fn exhaustive_agreement_with_table() {
    let mut cases = 0;
    let mut mismatches = Vec::new();
    for max in 1..=5u32 {
        for cur in STATUSES {
            for hard in [false, true] {
                for attempt in 1..=5u32 {
                    if attempt > max {
                        continue;
                    }
                    for res in STATUSES {
                        cases += 1;
                        let before = state(cur, hard, attempt);
                        let (after, events) = apply_service_result(&before, &result(res, 100), max).unwrap();
                        let notify = events.iter().find_map(|e| match e {
                            EngineEvent::NotificationCandidate { reason, .. } => Some(*reason),
                            _ => None,
                        });
                        let got = Expected {
                            status: after.current_status,
                            hard: after.state_type == StateType::Hard,
                            attempt: after.attempt,
                            notify,
                            change_event: events.iter().any(|e| matches!(e, EngineEvent::StateChange { .. })),
                        };
                        let want = table(cur, hard, attempt, max, res);
                        if got != want {
                            mismatches.push(format!("{cur:?}/{hard}/{attempt} max={max} + {res:?}: {got:?} != {want:?}"));
                        }
                        if res == StatusCode::Ok && cur != StatusCode::Ok {
                            assert!(!after.acknowledged);
                            assert_eq!(after.notification_number, 0);
                        }
                    }
                }
            }
        }
    }
    assert!(cases >= 4 * 2 * 4 * 5);
    assert!(mismatches.is_empty(), "{} mismatches:\n{}", mismatches.len(), mismatches.join("\n"));
}

fn status() -> impl Strategy<Value = StatusCode> {
    prop::sample::select(STATUSES.to_vec())
}

proptest! {
    #[test]
    fn replay_is_deterministic(log in prop::collection::vec(status(), 0..60), max in 1u32..6) {
        let run = || {
            let mut s = ServiceState::new(Target::service("h", "s"));
            for (i, r) in log.iter().enumerate() {
                s = apply_service_result(&s, &result(*r, i as i64), max).unwrap().0;
            }
            s
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn candidates_only_at_hard_edges(log in prop::collection::vec(status(), 1..80), max in 1u32..6) {
        let mut s = ServiceState::new(Target::service("h", "s"));
        for (i, r) in log.iter().enumerate() {
            let (next, events) = apply_service_result(&s, &result(*r, i as i64), max).unwrap();
            let candidates: Vec<_> = events
                .iter()
                .filter_map(|e| match e {
                    EngineEvent::NotificationCandidate { reason, .. } => Some(*reason),
                    _ => None,
                })
                .collect();
            prop_assert!(candidates.len() <= 1);
            match candidates.first() {
                Some(NotificationReason::Problem) => {
                    prop_assert!(next.state_type == StateType::Hard);
                    prop_assert!(!(s.state_type == StateType::Hard && s.current_status != StatusCode::Ok));
                }
                Some(NotificationReason::Recovery) => {
                    prop_assert!(s.state_type == StateType::Hard && s.current_status != StatusCode::Ok);
                    prop_assert_eq!(next.current_status, StatusCode::Ok);
                }
                None => {}
            }
            // HARD implies attempt == max or OK
            if next.state_type == StateType::Hard {
                prop_assert!(next.attempt == max || next.current_status == StatusCode::Ok);
            }
            prop_assert!(next.attempt >= 1 && next.attempt <= max);
            s = next;
        }
    }
}
