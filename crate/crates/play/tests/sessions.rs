use std::time::Duration;

use intervene_core::copilots::{train, MethodSpec, TrainedCopilot};
use intervene_core::env::{EnvKind, EnvSpec, Observation};
use intervene_core::harness::{evaluate, Metrics};
use intervene_core::learners::{LearnerConfig, LearnerKind};
use intervene_core::pilots::{NoopPilot, Pilot, PilotSpec};
use intervene_play::{CheckpointStore, ClientMessage, ErrorCode, ServerMessage, SessionManager, DEFAULT_TTL, PROTOCOL_VERSION};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid_copilot(method: MethodSpec, frames: usize) -> TrainedCopilot {
    let env = EnvSpec::gridworld();
    let mut learner = LearnerConfig::new(LearnerKind::Tabular);
    learner.final_exploration_frame = frames / 2;
    let mut pilot = PilotSpec::scripted().build(&env.build(0).unwrap(), 0).unwrap();
    train(&method, &env, Some(pilot.as_mut()), &learner, frames, 11).unwrap().0
}

fn lander_copilot() -> TrainedCopilot {
    let env = EnvSpec::minilander();
    let mut learner = LearnerConfig::new(LearnerKind::Ddqn);
    learner.replay_start_size = 200;
    learner.final_exploration_frame = 1_000;
    learner.hidden_sizes = vec![16];
    let mut pilot = NoopPilot::new(&env.build(0).unwrap()).unwrap();
    train(&MethodSpec::Penalty { lambda: 0.1 }, &env, Some(&mut pilot), &learner, 2_000, 5).unwrap().0
}

fn manager() -> SessionManager {
    let m = SessionManager::new(CheckpointStore::new("/nonexistent"), DEFAULT_TTL);
    m.store().insert("grid-penalty", grid_copilot(MethodSpec::Penalty { lambda: 0.5 }, 20_000));
    m
}

fn create(m: &SessionManager, id: &str, env: EnvKind, seed: u64, budget: Option<u32>) -> ServerMessage {
    let mut replies = m.handle(ClientMessage::Create {
        protocol_version: PROTOCOL_VERSION,
        env,
        checkpoint: id.into(),
        seed,
        budget,
    });
    assert_eq!(replies.len(), 1);
    replies.remove(0)
}

fn session_id(msg: &ServerMessage) -> String {
    match msg {
        ServerMessage::State { session, .. } => session.clone(),
        other => panic!("expected state, got {other:?}"),
    }
}

fn error_code(msgs: &[ServerMessage]) -> ErrorCode {
    match msgs {
        [ServerMessage::Error { code, .. }] => *code,
        other => panic!("expected one error, got {other:?}"),
    }
}

fn act(m: &SessionManager, session: &str, action: usize) -> Vec<ServerMessage> {
    m.handle(ClientMessage::Action {
        protocol_version: PROTOCOL_VERSION,
        session: session.into(),
        action,
    })
}

/// Drives a session to the end with `pilot`, returning the final summary.
fn drive(m: &SessionManager, session: &str, mut obs: Observation, pilot: &mut dyn Pilot) -> (Metrics, bool) {
    loop {
        let a = pilot.act(&obs).unwrap();
        let replies = act(m, session, a);
        match &replies[0] {
            ServerMessage::StepResult {
                observation,
                executed_action,
                done,
                ..
            } => {
                pilot.observe_executed(*executed_action);
                obs = Observation {
                    features: observation.clone(),
                    cell: obs_cell(observation, &obs),
                };
                if *done {
                    match &replies[1] {
                        ServerMessage::Summary { metrics, success, .. } => return (metrics.clone(), *success),
                        other => panic!("expected summary, got {other:?}"),
                    }
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

/// Gridworld observations are `(x, y)`; the cell index follows from the
/// default 8-wide map. Lander observations carry no cell.
fn obs_cell(features: &[f64], prev: &Observation) -> Option<usize> {
    prev.cell.map(|_| features[1] as usize * 8 + features[0] as usize)
}

#[test]
fn create_emits_step_zero_state() {
    let m = manager();
    match create(&m, "grid-penalty", EnvKind::Gridworld, 1, None) {
        ServerMessage::State {
            hud,
            map,
            action_names,
            method,
            observation,
            ..
        } => {
            assert_eq!(hud.step, 0);
            assert_eq!(hud.interventions, 0);
            assert!(map.unwrap().contains('S'));
            assert_eq!(action_names, ["up", "right", "down", "left"]);
            assert_eq!(method, "penalty");
            assert_eq!(observation, [7.0, 0.0]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn mismatched_or_missing_checkpoints_create_no_session() {
    let m = manager();
    let e = create(&m, "grid-penalty", EnvKind::Minilander, 1, None);
    assert_eq!(error_code(&[e]), ErrorCode::EnvMismatch);
    let e = create(&m, "missing.ckpt", EnvKind::Gridworld, 1, None);
    assert_eq!(error_code(&[e]), ErrorCode::UnknownCheckpoint);
    let e = create(&m, "../etc/passwd", EnvKind::Gridworld, 1, None);
    assert_eq!(error_code(&[e]), ErrorCode::UnknownCheckpoint);
    assert!(m.is_empty());
}

#[test]
fn checkpoints_load_from_the_store_directory() {
    let dir = tempfile::tempdir().unwrap();
    let copilot = grid_copilot(MethodSpec::Penalty { lambda: 1.0 }, 5_000);
    let ckpt = intervene_core::checkpoint::Checkpoint::from_trained(&copilot);
    intervene_core::checkpoint::save(&dir.path().join("p.ckpt"), &ckpt).unwrap();
    let m = SessionManager::new(CheckpointStore::new(dir.path()), DEFAULT_TTL);
    let state = create(&m, "p.ckpt", EnvKind::Gridworld, 0, None);
    assert!(matches!(state, ServerMessage::State { .. }));
}

#[test]
fn scripted_client_reproduces_offline_evaluation() {
    let m = manager();
    let env = EnvSpec::gridworld().resolve(None).unwrap();
    let copilot = m.store().get("grid-penalty").unwrap();
    let spec = PilotSpec::scripted().resolve(None).unwrap();
    for seed in [0u64, 7, 42] {
        let mut pilot = spec.build(&env.build(0).unwrap(), 0).unwrap();
        let (offline, logs) = evaluate(Some(&copilot), Some(pilot.as_mut()), &env, 1, seed, None).unwrap();
        let state = create(&m, "grid-penalty", EnvKind::Gridworld, seed, None);
        let id = session_id(&state);
        let obs = Observation {
            features: vec![7.0, 0.0],
            cell: Some(7),
        };
        let (online, success) = drive(&m, &id, obs, pilot.as_mut());
        assert_eq!(online, offline);
        assert_eq!(success, logs[0].success);
        assert_eq!(m.replay(&id).unwrap(), logs[0]);
    }
}

#[test]
fn noop_client_reproduces_offline_lander_evaluation() {
    let m = manager();
    m.store().insert("lander", lander_copilot());
    let copilot = m.store().get("lander").unwrap();
    let env = EnvSpec::minilander();
    let mut pilot = NoopPilot::new(&env.build(0).unwrap()).unwrap();
    for seed in [3u64, 4] {
        let (offline, logs) = evaluate(Some(&copilot), Some(&mut pilot), &env, 1, seed, None).unwrap();
        let id = session_id(&create(&m, "lander", EnvKind::Minilander, seed, None));
        let mut n = 0;
        loop {
            let replies = act(&m, &id, 0);
            n += 1;
            if let ServerMessage::StepResult { done: true, .. } = replies[0] {
                match &replies[1] {
                    ServerMessage::Summary { metrics, .. } => assert_eq!(*metrics, offline),
                    other => panic!("{other:?}"),
                }
                break;
            }
        }
        assert_eq!(n, logs[0].steps());
        assert_eq!(m.replay(&id).unwrap(), logs[0]);
    }
}

#[test]
fn sessions_are_deterministic_and_independent() {
    let m = manager();
    m.store().insert("lander", lander_copilot());
    let first = |seed| match create(&m, "lander", EnvKind::Minilander, seed, None) {
        ServerMessage::State { observation, .. } => observation,
        other => panic!("{other:?}"),
    };
    assert_eq!(first(1), first(1));
    assert_ne!(first(1), first(2));
}

#[test]
fn hard_budget_holds_across_the_wire() {
    let m = manager();
    m.store().insert("grid-budget", grid_copilot(MethodSpec::Budget { budget: 3, lambda: 0.0 }, 20_000));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (seed, budget) in (0..40u64).zip([0u32, 1, 3, 5].into_iter().cycle()) {
        let id = session_id(&create(&m, "grid-budget", EnvKind::Gridworld, seed, Some(budget)));
        let mut remaining = budget;
        loop {
            let human = rng.gen_range(0..4);
            let replies = act(&m, &id, human);
            let ServerMessage::StepResult {
                human_action,
                executed_action,
                intervened,
                budget_remaining,
                hud,
                done,
                ..
            } = &replies[0]
            else {
                panic!("{replies:?}");
            };
            assert_eq!(*human_action, human);
            if remaining == 0 {
                assert_eq!(*executed_action, human);
            }
            if *intervened {
                remaining -= 1;
            }
            assert_eq!(*budget_remaining, Some(remaining));
            assert!(hud.interventions as u32 <= budget);
            if *done || hud.step >= 100 {
                break;
            }
        }
    }
}

#[test]
fn rejected_actions_leave_the_session_unchanged() {
    let m = manager();
    let id = session_id(&create(&m, "grid-penalty", EnvKind::Gridworld, 3, None));
    assert_eq!(error_code(&act(&m, &id, 4)), ErrorCode::InvalidAction);
    assert!(m.replay(&id).unwrap().records.is_empty());
    assert_eq!(error_code(&act(&m, "nope", 0)), ErrorCode::UnknownSession);
    // Play to the end, then one more action is out of turn.
    let mut steps = 0;
    loop {
        let replies = act(&m, &id, 2);
        steps += 1;
        if matches!(replies[0], ServerMessage::StepResult { done: true, .. }) {
            break;
        }
    }
    assert_eq!(error_code(&act(&m, &id, 0)), ErrorCode::OutOfTurn);
    assert_eq!(m.replay(&id).unwrap().steps(), steps);
}

#[test]
fn unknown_message_types_get_error_replies() {
    let m = manager();
    let replies = m.handle_text(r#"{"type":"warp","protocol_version":1}"#);
    assert_eq!(error_code(&replies), ErrorCode::UnknownType);
    assert_eq!(error_code(&m.handle_text("{")), ErrorCode::BadRequest);
}

#[test]
fn closed_sessions_expire_after_the_ttl() {
    let m = SessionManager::new(CheckpointStore::new("/nonexistent"), Duration::from_millis(50));
    m.store().insert("g", grid_copilot(MethodSpec::Penalty { lambda: 0.5 }, 5_000));
    let id = session_id(&create(&m, "g", EnvKind::Gridworld, 0, None));
    act(&m, &id, 0);
    assert_eq!(m.replay(&id).unwrap().steps(), 1);
    std::thread::sleep(Duration::from_millis(120));
    assert!(m.replay(&id).is_err());
    assert!(m.is_empty());
}
