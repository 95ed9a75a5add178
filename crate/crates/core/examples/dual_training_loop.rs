//! A full pretrain + one iteration run against in-process echo model
//! servers, interrupted halfway and resumed.

use std::fs;

use divq::corpus::{Instance, Question, Subgraph, Triplet};
use divq::mock::{EchoRole, MockServer};
use divq::orchestrator::{resume, Orchestrator, Phase};

fn write_jsonl<T: serde::Serialize>(path: &std::path::Path, rows: &[T]) -> std::io::Result<()> {
    let body: String = rows.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    fs::write(path, body)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DIVQ_LOG", "info")).init();
    let forward = MockServer::echo(EchoRole::Forward)?;
    let backward = MockServer::echo(EchoRole::Backward)?;

    let dir = std::env::temp_dir().join(format!("divq-demo-{}", std::process::id()));
    fs::create_dir_all(&dir)?;
    let teams = ["ravens", "falcons", "bears", "jets"];
    let instances: Vec<Instance> = teams
        .iter()
        .enumerate()
        .map(|(i, t)| Instance {
            id: format!("d{i}"),
            subgraph: Subgraph {
                triplets: vec![
                    Triplet::new(*t, "sports team coach", format!("coach {i}")),
                    Triplet::new(*t, "location", "somewhere"),
                ],
                answer: None,
            },
            gold: Question::new(format!("g{i}"), format!("who is the coach of the {t} ?")),
            candidates: None,
        })
        .collect();
    let external: Vec<Question> = teams
        .iter()
        .enumerate()
        .map(|(j, t)| Question::new(format!("q{j}"), format!("which city do the {t} play in ?")))
        .collect();
    write_jsonl(&dir.join("instances.jsonl"), &instances)?;
    write_jsonl(&dir.join("external.jsonl"), &external)?;
    fs::write(
        dir.join("run.toml"),
        format!(
            r#"preset = "pq"
epochs_per_phase = 1
alpha = 0.3
instances = "instances.jsonl"
external_questions = "external.jsonl"
run_dir = "run"

[hparams]
learning_rate = 5e-5
batch_size = 8

[endpoints.forward]
base_url = "{}"

[endpoints.backward]
base_url = "{}"
"#,
            forward.url(),
            backward.url()
        ),
    )?;

    // stop as soon as the forward phase is finished, as if the process died
    let interrupted = Orchestrator::from_config_file(&dir.join("run.toml"), None)?
        .on_boundary(Box::new(|s| s.phase < Phase::BackwardEpochs))
        .run();
    println!("first attempt: {}", interrupted.unwrap_err());

    let report = resume(&dir.join("run"))?;
    for r in &report.history {
        println!(
            "iteration {} {}: {} generated, {} selected, trained = {}",
            r.iteration, r.phase, r.generated, r.selected, r.trained
        );
    }
    println!("forward fine-tune calls: {}", forward.train_calls().len());
    println!("backward fine-tune calls: {}", backward.train_calls().len());
    println!("artifacts under {}", dir.join("run").display());
    Ok(())
}
