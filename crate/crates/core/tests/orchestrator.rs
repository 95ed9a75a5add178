mod common;

use std::fs;
use std::sync::Arc;

use common::*;
use divq::corpus::read_pseudo_pairs;
use divq::mock::{EchoRole, MockServer, Scripted};
use divq::orchestrator::{resume, Orchestrator, OrchestratorError, OrchestratorState, Phase, STATE_FILE};
use divq::selection::Direction;

/// Backward maps each external question to a source; forward regenerates it.
/// Three of four round trips reproduce the question, one drifts.
fn scripted_servers() -> (MockServer, MockServer, Vec<divq::corpus::Instance>, Vec<divq::corpus::Question>) {
    let insts = instances(3);
    let ext = external_questions(4);
    let mut fwd = Scripted::new();
    let mut bwd = Scripted::new();
    for (j, q) in ext.iter().enumerate() {
        let src = format!("src {j} </s> home games");
        bwd = bwd.on(q.text.clone(), &[&src]);
        let rt = if j == 2 { "completely unrelated words".to_string() } else { q.text.clone() };
        fwd = fwd.on(src, &[&rt]);
    }
    for i in &insts {
        let team = &i.subgraph.triplets[0].head;
        // rank 0 repeats the gold question (diverse 0), rank 2 rephrases it,
        // rank 1 is off topic and fails the gate.
        let outs = [
            i.gold.text.clone(),
            "how tall was mount everest".to_string(),
            format!("the {team} are coached by whom ?"),
        ];
        let outs: Vec<&str> = outs.iter().map(String::as_str).collect();
        fwd = fwd.on(linearized(i), &outs);
    }
    (
        MockServer::start(Arc::new(fwd)).unwrap(),
        MockServer::start(Arc::new(bwd)).unwrap(),
        insts,
        ext,
    )
}

#[test]
fn scripted_run_selects_expected_pairs() {
    let (fwd, bwd, insts, ext) = scripted_servers();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_run(dir.path(), &insts, &ext, fwd.url(), bwd.url(), "alpha = 0.3\nalpha_inclusive = true");
    let report = Orchestrator::from_config_file(&cfg, None).unwrap().run().unwrap();
    assert!(!report.already_done);
    assert_eq!(report.history.len(), 2);

    let run = dir.path().join("run");
    let forward = read_pseudo_pairs(&run.join("iter0/forward_epoch0.jsonl")).unwrap();
    assert_eq!(forward.len(), 3);
    assert!(forward.iter().all(|p| p.direction == Direction::Backward && p.origin_id != "q002"));
    assert_eq!(forward[0].source, "src 0 </s> home games");
    assert_eq!(forward[0].target, ext[0].text);

    let backward = read_pseudo_pairs(&run.join("iter0/backward_epoch0.jsonl")).unwrap();
    assert_eq!(backward.len(), 3);
    for (p, i) in backward.iter().zip(&insts) {
        assert_eq!(p.source, linearized(i));
        assert!(p.target.contains("coached by whom"), "{}", p.target);
    }

    // pretrain (2) + forward fine-tune + backward fine-tune
    let fwd_calls = fwd.train_calls();
    let bwd_calls = bwd.train_calls();
    assert_eq!(fwd_calls.len(), 2);
    assert_eq!(bwd_calls.len(), 2);
    assert_eq!(fwd_calls[1].pairs.len(), 3);
    // backward model learns question -> graph
    assert_eq!(bwd_calls[1].pairs[0].target, linearized(&insts[0]));
    assert!(bwd_calls[1].pairs[0].source.contains("coached by whom"));

    let state = OrchestratorState::load(&run).unwrap();
    assert_eq!(state.phase, Phase::Done);
}

#[test]
fn empty_generation_halts_with_empty_group() {
    let insts = instances(2);
    let ext = external_questions(2);
    let fwd = MockServer::start(Arc::new(Scripted::new())).unwrap();
    let bwd = MockServer::echo(EchoRole::Backward).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_run(dir.path(), &insts, &ext, fwd.url(), bwd.url(), "");
    let err = Orchestrator::from_config_file(&cfg, None).unwrap().run().unwrap_err();
    // forward returns nothing for round trips either, so the run stops there
    let msg = err.to_string();
    assert!(matches!(err.root(), OrchestratorError::Endpoint { .. }), "{msg}");
    assert!(msg.contains("forward_epochs"), "{msg}");
}

#[test]
fn empty_top_k_list_is_empty_group() {
    let insts = instances(2);
    let ext = external_questions(1);
    let mut fwd = Scripted::new();
    let src = "a </s> b".to_string();
    let bwd = MockServer::start(Arc::new(Scripted::new().on(ext[0].text.clone(), &[&src]))).unwrap();
    fwd = fwd.on(src, &[&ext[0].text]).on(linearized(&insts[0]), &["who coaches them ?"]);
    let fwd = MockServer::start(Arc::new(fwd)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_run(dir.path(), &insts, &ext, fwd.url(), bwd.url(), "");
    let err = Orchestrator::from_config_file(&cfg, None).unwrap().run().unwrap_err();
    assert!(
        matches!(err.root(), OrchestratorError::Selection(divq::selection::SelectionError::EmptyGroup(id)) if id == "inst001"),
        "{err}"
    );
    let state = OrchestratorState::load(&dir.path().join("run")).unwrap();
    assert_eq!(state.phase, Phase::BackwardEpochs);
}

#[test]
fn unreachable_endpoint_writes_nothing() {
    let bwd = MockServer::echo(EchoRole::Backward).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_run(dir.path(), &instances(2), &external_questions(2), "http://127.0.0.1:9", bwd.url(), "");
    let err = Orchestrator::from_config_file(&cfg, None).unwrap().run().unwrap_err();
    assert!(matches!(err, OrchestratorError::Endpoint { .. }), "{err}");
    assert!(!dir.path().join("run").exists());
}

#[test]
fn unhealthy_endpoint_writes_nothing() {
    let fwd = MockServer::echo(EchoRole::Forward).unwrap();
    let bwd = MockServer::echo(EchoRole::Backward).unwrap();
    bwd.set_healthy(false);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_run(dir.path(), &instances(2), &external_questions(2), fwd.url(), bwd.url(), "");
    assert!(Orchestrator::from_config_file(&cfg, None).unwrap().run().is_err());
    assert!(!dir.path().join("run").exists());
    assert_eq!(fwd.train_calls().len(), 0);
}

fn echo_run(dir: &std::path::Path, fwd: &MockServer, bwd: &MockServer, extra: &str) -> std::path::PathBuf {
    write_run(dir, &instances(4), &external_questions(4), fwd.url(), bwd.url(), extra)
}

#[test]
fn config_drift_is_refused() {
    let fwd = MockServer::echo(EchoRole::Forward).unwrap();
    let bwd = MockServer::echo(EchoRole::Backward).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = echo_run(dir.path(), &fwd, &bwd, "");
    let mut orch = Orchestrator::from_config_file(&cfg, None)
        .unwrap()
        .on_boundary(Box::new(|s| s.phase == Phase::Pretrain));
    assert!(matches!(orch.run().unwrap_err(), OrchestratorError::Interrupted(_)));

    let text = fs::read_to_string(&cfg).unwrap().replace("iterations = 1", "iterations = 2");
    fs::write(&cfg, text).unwrap();
    let err = resume(&dir.path().join("run")).unwrap_err();
    assert!(matches!(err, OrchestratorError::ConfigDrift { .. }), "{err}");
}

#[test]
fn endpoint_relocation_is_not_drift() {
    let fwd = MockServer::echo(EchoRole::Forward).unwrap();
    let bwd = MockServer::echo(EchoRole::Backward).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = echo_run(dir.path(), &fwd, &bwd, "");
    let mut orch = Orchestrator::from_config_file(&cfg, None)
        .unwrap()
        .on_boundary(Box::new(|s| s.phase < Phase::BackwardEpochs));
    assert!(orch.run().is_err());
    drop((fwd, bwd));

    let fwd = MockServer::echo(EchoRole::Forward).unwrap();
    let bwd = MockServer::echo(EchoRole::Backward).unwrap();
    let text = fs::read_to_string(&cfg).unwrap();
    let text = text
        .lines()
        .map(|l| {
            if l.starts_with("base_url") {
                String::new()
            } else {
                l.to_owned()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
        .replace("[endpoints.forward]", &format!("[endpoints.forward]\nbase_url = \"{}\"", fwd.url()))
        .replace("[endpoints.backward]", &format!("[endpoints.backward]\nbase_url = \"{}\"", bwd.url()));
    fs::write(&cfg, text).unwrap();
    let report = resume(&dir.path().join("run")).unwrap();
    assert_eq!(report.history.len(), 2);
}

#[test]
fn missing_artifact_is_corrupt_state() {
    let fwd = MockServer::echo(EchoRole::Forward).unwrap();
    let bwd = MockServer::echo(EchoRole::Backward).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = echo_run(dir.path(), &fwd, &bwd, "");
    let mut orch = Orchestrator::from_config_file(&cfg, None)
        .unwrap()
        .on_boundary(Box::new(|s| s.phase < Phase::BackwardEpochs));
    assert!(orch.run().is_err());
    let run = dir.path().join("run");
    fs::remove_file(run.join("iter0/forward_epoch0.jsonl")).unwrap();
    let err = resume(&run).unwrap_err();
    assert!(
        matches!(&err, OrchestratorError::CorruptState(m) if m.contains("missing artifact iter0/forward_epoch0.jsonl")),
        "{err}"
    );
}

#[test]
fn tampered_artifact_is_corrupt_state() {
    let fwd = MockServer::echo(EchoRole::Forward).unwrap();
    let bwd = MockServer::echo(EchoRole::Backward).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = echo_run(dir.path(), &fwd, &bwd, "");
    Orchestrator::from_config_file(&cfg, None).unwrap().run().unwrap();
    let run = dir.path().join("run");
    fs::write(run.join("iter0/forward_epoch0.jsonl"), "{}\n").unwrap();
    let err = resume(&run).unwrap_err();
    assert!(matches!(&err, OrchestratorError::CorruptState(m) if m.contains("digest mismatch")), "{err}");
}

#[test]
fn done_run_reports_already_done() {
    let fwd = MockServer::echo(EchoRole::Forward).unwrap();
    let bwd = MockServer::echo(EchoRole::Backward).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = echo_run(dir.path(), &fwd, &bwd, "");
    Orchestrator::from_config_file(&cfg, None).unwrap().run().unwrap();
    let before = fwd.request_count() + bwd.request_count();
    let report = resume(&dir.path().join("run")).unwrap();
    assert!(report.already_done);
    assert_eq!(fwd.request_count() + bwd.request_count(), before);
}

#[test]
fn transient_failures_are_retried() {
    let fwd = MockServer::echo(EchoRole::Forward).unwrap();
    let bwd = MockServer::echo(EchoRole::Backward).unwrap();
    fwd.fail_next("/generate", 1, 503);
    let dir = tempfile::tempdir().unwrap();
    let cfg = echo_run(dir.path(), &fwd, &bwd, "");
    Orchestrator::from_config_file(&cfg, None).unwrap().run().unwrap();
}

#[test]
fn persistent_train_failure_halts_then_resumes() {
    let fwd = MockServer::echo(EchoRole::Forward).unwrap();
    let bwd = MockServer::echo(EchoRole::Backward).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = echo_run(dir.path(), &fwd, &bwd, "");
    bwd.fail_next("/train", 10, 500);
    let err = Orchestrator::from_config_file(&cfg, None).unwrap().run().unwrap_err();
    assert!(matches!(err.root(), OrchestratorError::Endpoint { .. }));
    assert!(err.to_string().contains("pretrain"), "{err}");
    let state = OrchestratorState::load(&dir.path().join("run")).unwrap();
    assert!(state.pretrain.forward && !state.pretrain.backward);

    bwd.fail_next("/train", 0, 500);
    let report = resume(&dir.path().join("run")).unwrap();
    assert_eq!(report.history.len(), 2);
    // the forward model is not pretrained twice
    assert_eq!(fwd.train_calls().len(), 2);
}

#[test]
fn multiple_epochs_and_iterations() {
    let fwd = MockServer::echo(EchoRole::Forward).unwrap();
    let bwd = MockServer::echo(EchoRole::Backward).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = echo_run(dir.path(), &fwd, &bwd, "");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("iterations = 1", "iterations = 2")
        .replace("epochs_per_phase = 1", "epochs_per_phase = 2");
    fs::write(&cfg, text).unwrap();
    let report = Orchestrator::from_config_file(&cfg, None).unwrap().run().unwrap();
    assert_eq!(report.history.len(), 8);
    let run = dir.path().join("run");
    for i in 0..2 {
        for e in 0..2 {
            assert!(run.join(format!("iter{i}/forward_epoch{e}.jsonl")).exists());
            assert!(run.join(format!("iter{i}/backward_epoch{e}.jsonl")).exists());
        }
    }
    assert!(!fs::read_to_string(run.join(STATE_FILE)).unwrap().is_empty());
}
