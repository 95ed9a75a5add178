#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use divq::corpus::{Instance, Question, Subgraph, Triplet};
use divq::textproc::{linearize, DEFAULT_SEPARATOR};

const TEAMS: [&str; 5] = ["ravens", "falcons", "bears", "jets", "colts"];
const CITIES: [&str; 4] = ["baltimore", "atlanta", "chicago", "denver"];

pub fn instance(i: usize) -> Instance {
    let team = format!("{} {i}", TEAMS[i % TEAMS.len()]);
    Instance {
        id: format!("inst{i:03}"),
        subgraph: Subgraph {
            triplets: vec![
                Triplet::new(team.clone(), "sports team coach", format!("coach {i}")),
                Triplet::new(team.clone(), "location", CITIES[i % CITIES.len()]),
            ],
            answer: Some(format!("coach {i}")),
        },
        gold: Question::new(format!("g{i}"), format!("who is the coach of the {team} ?")),
        candidates: None,
    }
}

pub fn instances(n: usize) -> Vec<Instance> {
    (0..n).map(instance).collect()
}

pub fn external_questions(n: usize) -> Vec<Question> {
    (0..n)
        .map(|j| {
            Question::new(
                format!("q{j:03}"),
                format!(
                    "which city do the {} {j} play their home games in ?",
                    TEAMS[(j + 2) % TEAMS.len()]
                ),
            )
        })
        .collect()
}

pub fn linearized(i: &Instance) -> String {
    linearize(&i.subgraph, DEFAULT_SEPARATOR)
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r).unwrap());
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

/// Writes instances, external questions and a run config into `dir`.
pub fn write_run(dir: &Path, insts: &[Instance], ext: &[Question], forward: &str, backward: &str, extra: &str) -> PathBuf {
    write_jsonl(&dir.join("instances.jsonl"), insts);
    write_jsonl(&dir.join("external.jsonl"), ext);
    let alpha = if extra.contains("alpha =") { "" } else { "alpha = 0.5" };
    let cfg = format!(
        r#"run_id = "test"
iterations = 1
epochs_per_phase = 1
k_generate = 5
{alpha}
seed = 7
instances = "instances.jsonl"
external_questions = "external.jsonl"
run_dir = "run"
{extra}
[endpoints.forward]
base_url = "{forward}"
timeout_secs = 5
retry_limit = 1

[endpoints.backward]
base_url = "{backward}"
timeout_secs = 5
retry_limit = 1
"#
    );
    let path = dir.join("run.toml");
    fs::write(&path, cfg).unwrap();
    path
}

/// Every regular file under `root` with its bytes, sorted by relative path.
pub fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    walk(root, root, &mut out);
    out.sort();
    out
}

pub fn run_cli(args: &[&str]) -> (u8, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut full = vec!["divq"];
    full.extend_from_slice(args);
    let code = divq::cli::run_from(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}
