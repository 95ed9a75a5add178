//! Iterative dual-model training driven against external model servers.
//!
//! After both models are pretrained on the gold pairs, each iteration runs
//! `epochs_per_phase` forward epochs then as many backward epochs:
//!
//! * **forward epoch**: the backward model maps every external question to a
//!   pseudo source, the forward model regenerates a question from each
//!   source, round trips that stay close to the original are kept, and the
//!   forward model is fine-tuned on `(source, external question)`.
//! * **backward epoch**: the forward model generates top-k questions for every
//!   training subgraph, the most diverse relevant one per instance is kept,
//!   and the backward model is fine-tuned on `(question, linearized graph)`.
//!
//! Every sub-step writes its output under the run directory and then
//! rewrites `state.json`, so a crashed run resumes from the last completed
//! sub-step without regenerating anything already on disk.

mod config;
mod service;
mod state;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{EndpointConfig, Endpoints, GenerationConfig, Preset, RunConfig, ScorerChoice, ScorerConfig};
pub use service::{generate_all, HttpModel, ModelService, Role, TrainReceipt};
pub use state::{
    sha256_file, ArtifactRef, EpochRecord, OrchestratorState, Phase, Position, PretrainProgress, Step, STATE_FILE,
};

use crate::corpus::{
    load_external_questions, load_instances, read_jsonl_all, read_pseudo_pairs, write_atomic, write_jsonl_atomic,
    write_pseudo_pairs, CorpusError, ExternalQuestionCorpus, Instance, Question,
};
use crate::http::HttpError;
use crate::protocol::WirePair;
use crate::relevance::{Relevance, RelevanceError};
use crate::selection::{
    select_backward, select_forward, ForwardGroup, ForwardOptions, Provenance, PseudoPair, RoundTrip, SelectionError,
    SelectionOutcome, ThresholdRule,
};
use crate::textproc::linearize;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{role} endpoint failure: {source}")]
    Endpoint {
        role: Role,
        #[source]
        source: HttpError,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Scorer(#[from] RelevanceError),
    #[error("config changed since the run started (digest {recorded} vs {current})")]
    ConfigDrift { recorded: String, current: String },
    #[error("corrupt run state: {0}")]
    CorruptState(String),
    #[error("{0}")]
    Io(String),
    #[error("interrupted at {0}")]
    Interrupted(Position),
    #[error("halted at {at}: {source}")]
    Halted {
        at: Position,
        #[source]
        source: Box<OrchestratorError>,
    },
}

impl OrchestratorError {
    /// The underlying failure, looking through [`OrchestratorError::Halted`].
    pub fn root(&self) -> &OrchestratorError {
        match self {
            OrchestratorError::Halted { source, .. } => source.root(),
            other => other,
        }
    }
}

fn endpoint(role: Role) -> impl FnOnce(HttpError) -> OrchestratorError {
    move |source| OrchestratorError::Endpoint { role, source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub origin_id: String,
    pub question: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRecord {
    pub instance_id: String,
    pub questions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub already_done: bool,
    pub history: Vec<EpochRecord>,
}

/// Called after every persisted state transition; returning `false` stops
/// the run as if the process had died right there.
pub type BoundaryHook = Box<dyn FnMut(&OrchestratorState) -> bool + Send>;

pub struct Orchestrator {
    config: RunConfig,
    config_path: PathBuf,
    run_dir: PathBuf,
    digest: String,
    instances: Vec<Instance>,
    external: ExternalQuestionCorpus,
    forward: Box<dyn ModelService>,
    backward: Box<dyn ModelService>,
    scorer: Box<dyn Relevance>,
    hook: Option<BoundaryHook>,
    seed_override: Option<u64>,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator")
            .field("config_path", &self.config_path)
            .field("run_dir", &self.run_dir)
            .field("digest", &self.digest)
            .finish_non_exhaustive()
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

impl Orchestrator {
    /// Loads the config and data and connects to the configured endpoints.
    ///
    /// `run_dir` overrides the config's `run_dir`.
    pub fn from_config_file(config_path: &Path, run_dir: Option<&Path>) -> Result<Self, OrchestratorError> {
        Self::load(config_path, run_dir, None)
    }

    /// Like [`Orchestrator::from_config_file`] with the generation seed
    /// replaced. The override is stored in the run state so `resume` reapplies it.
    pub fn load(config_path: &Path, run_dir: Option<&Path>, seed_override: Option<u64>) -> Result<Self, OrchestratorError> {
        let mut config = RunConfig::load(config_path)?;
        if seed_override.is_some() {
            config.seed = seed_override;
        }
        let config_path = absolute(config_path);
        let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let run_dir = match (run_dir, &config.run_dir) {
            (Some(d), _) => d.to_path_buf(),
            (None, Some(d)) => base.join(d),
            (None, None) => return Err(OrchestratorError::Config("no run_dir given".into())),
        };
        let digest = config.digest(&base)?;
        let instances = load_instances(&base.join(&config.instances), None)?;
        let external = load_external_questions(&base.join(&config.external_questions))?;
        let forward = Box::new(HttpModel::new(Role::Forward, &config.endpoints.forward));
        let backward = Box::new(HttpModel::new(Role::Backward, &config.endpoints.backward));
        let timeout = config.endpoints.forward.timeout();
        let scorer = Box::new(config.scorer.build(&base, config.tokenizer, timeout)?);
        Ok(Orchestrator {
            config,
            config_path,
            run_dir,
            digest,
            instances,
            external,
            forward,
            backward,
            scorer,
            hook: None,
            seed_override,
        })
    }

    pub fn with_services(mut self, forward: Box<dyn ModelService>, backward: Box<dyn ModelService>) -> Self {
        self.forward = forward;
        self.backward = backward;
        self
    }

    pub fn with_scorer(mut self, scorer: Box<dyn Relevance>) -> Self {
        self.scorer = scorer;
        self
    }

    pub fn on_boundary(mut self, hook: BoundaryHook) -> Self {
        self.hook = Some(hook);
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn config_digest(&self) -> &str {
        &self.digest
    }

    /// Existing state for this run directory, checked against the current
    /// config and the artifacts on disk.
    fn existing_state(&self) -> Result<Option<OrchestratorState>, OrchestratorError> {
        if !self.run_dir.join(STATE_FILE).exists() {
            return Ok(None);
        }
        let state = OrchestratorState::load(&self.run_dir)?;
        if state.config_digest != self.digest {
            return Err(OrchestratorError::ConfigDrift {
                recorded: state.config_digest,
                current: self.digest.clone(),
            });
        }
        state.verify_artifacts(&self.run_dir)?;
        Ok(Some(state))
    }

    pub fn health_check(&self) -> Result<(), OrchestratorError> {
        self.forward.health().map_err(endpoint(Role::Forward))?;
        self.backward.health().map_err(endpoint(Role::Backward))?;
        Ok(())
    }

    /// Starts a fresh run or continues the one recorded in the run directory.
    pub fn run(&mut self) -> Result<RunReport, OrchestratorError> {
        let existing = self.existing_state()?;
        if let Some(state) = existing.as_ref().filter(|s| s.is_done()) {
            return Ok(self.report(state, true));
        }
        self.health_check()?;
        let mut state = match existing {
            Some(s) => {
                log::info!("resuming run {} at {}", s.run_id, s.position());
                s
            }
            None => {
                fs::create_dir_all(&self.run_dir)
                    .map_err(|e| OrchestratorError::Io(format!("{}: {e}", self.run_dir.display())))?;
                let run_id = self.config.run_id.clone().unwrap_or_else(|| self.digest[..12].to_owned());
                let mut s = OrchestratorState::new(run_id, self.digest.clone(), self.config_path.clone());
                s.seed_override = self.seed_override;
                s.save(&self.run_dir)?;
                s
            }
        };
        while !state.is_done() {
            let at = state.position();
            let result = match state.phase {
                Phase::Pretrain => self.pretrain(&mut state),
                Phase::ForwardEpochs => self.run_forward_epoch(&mut state),
                Phase::BackwardEpochs => self.run_backward_epoch(&mut state),
                Phase::Done => unreachable!(),
            };
            result.map_err(|e| match e {
                OrchestratorError::Interrupted(_) => e,
                other => OrchestratorError::Halted {
                    at: if state.position() == at { at } else { state.position() },
                    source: Box::new(other),
                },
            })?;
        }
        Ok(self.report(&state, false))
    }

    fn report(&self, state: &OrchestratorState, already_done: bool) -> RunReport {
        RunReport {
            run_id: state.run_id.clone(),
            run_dir: self.run_dir.clone(),
            already_done,
            history: state.history.clone(),
        }
    }

    fn commit(&mut self, state: &OrchestratorState) -> Result<(), OrchestratorError> {
        state.save(&self.run_dir)?;
        if let Some(hook) = self.hook.as_mut() {
            if !hook(state) {
                return Err(OrchestratorError::Interrupted(state.position()));
            }
        }
        Ok(())
    }

    fn train(&self, role: Role, pairs: &[WirePair]) -> Result<TrainReceipt, OrchestratorError> {
        let service = match role {
            Role::Forward => &self.forward,
            _ => &self.backward,
        };
        service.train(pairs, &self.config.hparams).map_err(endpoint(role))
    }

    /// Trains the forward model on `(graph, question)` and the backward model
    /// on `(question, graph)` for every gold pair.
    pub fn pretrain(&mut self, state: &mut OrchestratorState) -> Result<(), OrchestratorError> {
        if state.phase != Phase::Pretrain {
            return Ok(());
        }
        let gold: Vec<(String, String)> = self
            .instances
            .iter()
            .map(|i| (linearize(&i.subgraph, &self.config.separator), i.gold.text.clone()))
            .collect();
        if !state.pretrain.forward {
            let pairs: Vec<WirePair> = gold
                .iter()
                .map(|(g, q)| WirePair { source: g.clone(), target: q.clone() })
                .collect();
            self.train(Role::Forward, &pairs)?;
            state.pretrain.forward = true;
            self.commit(state)?;
        }
        if !state.pretrain.backward {
            let pairs: Vec<WirePair> = gold
                .iter()
                .map(|(g, q)| WirePair { source: q.clone(), target: g.clone() })
                .collect();
            self.train(Role::Backward, &pairs)?;
            state.pretrain.backward = true;
            state.phase = Phase::ForwardEpochs;
            state.iteration = 0;
            state.epoch = 0;
            state.step = Step::Start;
            self.commit(state)?;
        }
        Ok(())
    }

    fn rel(&self, iteration: u32, name: String, work: bool) -> Result<String, OrchestratorError> {
        let dir = if work {
            format!("iter{iteration}/work")
        } else {
            format!("iter{iteration}")
        };
        let full = self.run_dir.join(&dir);
        fs::create_dir_all(&full).map_err(|e| OrchestratorError::Io(format!("{}: {e}", full.display())))?;
        Ok(format!("{dir}/{name}"))
    }

    fn artifact_key(state: &OrchestratorState, name: &str) -> String {
        format!("iter{}/{}/epoch{}/{name}", state.iteration, state.phase, state.epoch)
    }

    fn write_outcome(
        &self,
        state: &mut OrchestratorState,
        stem: &str,
        outcome: &SelectionOutcome,
    ) -> Result<String, OrchestratorError> {
        let pairs_rel = self.rel(state.iteration, format!("{stem}.jsonl"), false)?;
        let summary_rel = self.rel(state.iteration, format!("{stem}.summary.json"), false)?;
        let rejected_rel = self.rel(state.iteration, format!("{stem}.rejected.jsonl"), true)?;
        write_pseudo_pairs(&outcome.selected, &self.run_dir.join(&pairs_rel))?;
        write_jsonl_atomic(&outcome.rejected, &self.run_dir.join(&rejected_rel))?;
        let mut summary = serde_json::to_vec_pretty(&outcome.summary()).expect("serializes");
        summary.push(b'\n');
        write_atomic(&self.run_dir.join(&summary_rel), &summary)?;
        let run_dir = self.run_dir.clone();
        state.register(&run_dir, Self::artifact_key(state, "pairs"), &pairs_rel)?;
        state.register(&run_dir, Self::artifact_key(state, "rejected"), &rejected_rel)?;
        state.register(&run_dir, Self::artifact_key(state, "summary"), &summary_rel)?;
        Ok(pairs_rel)
    }

    fn artifact_path(&self, state: &OrchestratorState, name: &str) -> Result<PathBuf, OrchestratorError> {
        let key = Self::artifact_key(state, name);
        state
            .artifacts
            .get(&key)
            .map(|a| self.run_dir.join(&a.path))
            .ok_or_else(|| OrchestratorError::CorruptState(format!("no artifact recorded for {key}")))
    }

    fn record_selection(state: &mut OrchestratorState, generated: usize, outcome: &SelectionOutcome) {
        let (iteration, phase, epoch) = (state.iteration, state.phase, state.epoch);
        state.history.retain(|r| !(r.iteration == iteration && r.phase == phase && r.epoch == epoch));
        state.history.push(EpochRecord {
            iteration,
            phase,
            epoch,
            generated,
            selected: outcome.selected.len(),
            rejected: outcome.rejected.len(),
            trained: false,
            train_steps: None,
            warning: None,
        });
    }

    fn finish_training(&mut self, state: &mut OrchestratorState, role: Role, wire: Vec<WirePair>) -> Result<(), OrchestratorError> {
        let receipt = if wire.is_empty() {
            log::warn!("{}: no pairs selected, skipping fine-tune", state.position());
            None
        } else {
            Some(self.train(role, &wire)?)
        };
        if let Some(rec) = state.history.last_mut() {
            rec.trained = receipt.is_some();
            rec.train_steps = receipt.map(|r| r.steps);
            if wire.is_empty() {
                rec.warning = Some("no pairs selected; fine-tune skipped".into());
            }
        }
        state.step = Step::Trained;
        self.commit(state)
    }

    fn generate(&self, role: Role, inputs: &[String], k: usize) -> Result<Vec<Vec<String>>, OrchestratorError> {
        let service = match role {
            Role::Forward => &self.forward,
            _ => &self.backward,
        };
        let g = &self.config.generation;
        generate_all(service.as_ref(), inputs, k, self.config.seed, g.batch_size, g.max_in_flight).map_err(endpoint(role))
    }

    /// One pass of round-trip mining over the external questions, ending with
    /// a forward-model fine-tune on the selected pairs.
    pub fn run_forward_epoch(&mut self, state: &mut OrchestratorState) -> Result<(), OrchestratorError> {
        if state.phase != Phase::ForwardEpochs {
            return Ok(());
        }
        let stem = format!("forward_epoch{}", state.epoch);
        let run_dir = self.run_dir.clone();

        if state.step == Step::Start {
            let texts: Vec<String> = self.external.questions.iter().map(|q| q.text.clone()).collect();
            let outputs = self.generate(Role::Backward, &texts, 1)?;
            let mut records = Vec::with_capacity(texts.len());
            for (q, out) in self.external.questions.iter().zip(outputs) {
                let source = out.into_iter().next().ok_or_else(|| OrchestratorError::Endpoint {
                    role: Role::Backward,
                    source: HttpError::Decode {
                        url: "/generate".into(),
                        detail: format!("no pseudo source for external question {:?}", q.id),
                    },
                })?;
                records.push(SourceRecord {
                    origin_id: q.id.clone(),
                    question: q.text.clone(),
                    source,
                });
            }
            let rel = self.rel(state.iteration, format!("{stem}.sources.jsonl"), true)?;
            write_jsonl_atomic(&records, &run_dir.join(&rel))?;
            state.register(&run_dir, Self::artifact_key(state, "sources"), &rel)?;
            state.step = Step::Sourced;
            self.commit(state)?;
        }

        if state.step == Step::Sourced {
            let sources: Vec<SourceRecord> = read_jsonl_all(&self.artifact_path(state, "sources")?)?;
            let inputs: Vec<String> = sources.iter().map(|s| s.source.clone()).collect();
            let outputs = self.generate(Role::Forward, &inputs, 1)?;
            let mut trips = Vec::with_capacity(sources.len());
            for (s, out) in sources.into_iter().zip(outputs) {
                let text = out.into_iter().next().ok_or_else(|| OrchestratorError::Endpoint {
                    role: Role::Forward,
                    source: HttpError::Decode {
                        url: "/generate".into(),
                        detail: format!("no round-trip question for {:?}", s.origin_id),
                    },
                })?;
                trips.push(RoundTrip {
                    roundtrip: Question::new(format!("{}#rt", s.origin_id), text),
                    external: Question::new(s.origin_id.clone(), s.question),
                    origin_id: s.origin_id,
                    pseudo_source: s.source,
                });
            }
            let rel = self.rel(state.iteration, format!("{stem}.roundtrip.jsonl"), true)?;
            write_jsonl_atomic(&trips, &run_dir.join(&rel))?;
            state.register(&run_dir, Self::artifact_key(state, "roundtrip"), &rel)?;
            state.step = Step::Generated;
            self.commit(state)?;
        }

        if state.step == Step::Generated {
            let trips: Vec<RoundTrip> = read_jsonl_all(&self.artifact_path(state, "roundtrip")?)?;
            let rule = ThresholdRule {
                threshold: self.config.roundtrip_threshold,
                inclusive: self.config.roundtrip_inclusive,
            };
            let provenance = Provenance {
                iteration: state.iteration,
                epoch: state.epoch,
            };
            let outcome = select_backward(&trips, self.scorer.as_ref(), rule, provenance)?;
            self.write_outcome(state, &stem, &outcome)?;
            Self::record_selection(state, trips.len(), &outcome);
            state.step = Step::Selected;
            self.commit(state)?;
        }

        if state.step == Step::Selected {
            let pairs = read_pseudo_pairs(&self.artifact_path(state, "pairs")?)?;
            let wire = pairs
                .into_iter()
                .map(|p| WirePair { source: p.source, target: p.target })
                .collect();
            self.finish_training(state, Role::Forward, wire)?;
        }

        if state.step == Step::Trained {
            if state.epoch + 1 < self.config.epochs_per_phase {
                state.epoch += 1;
            } else {
                state.phase = Phase::BackwardEpochs;
                state.epoch = 0;
            }
            state.step = Step::Start;
            self.commit(state)?;
        }
        Ok(())
    }

    /// One pass of top-k generation over the training graphs, ending with a
    /// backward-model fine-tune on the selected pairs.
    pub fn run_backward_epoch(&mut self, state: &mut OrchestratorState) -> Result<(), OrchestratorError> {
        if state.phase != Phase::BackwardEpochs {
            return Ok(());
        }
        let stem = format!("backward_epoch{}", state.epoch);
        let run_dir = self.run_dir.clone();

        if state.step == Step::Start {
            let inputs: Vec<String> = self
                .instances
                .iter()
                .map(|i| linearize(&i.subgraph, &self.config.separator))
                .collect();
            let outputs = self.generate(Role::Forward, &inputs, self.config.k_generate)?;
            let records: Vec<GeneratedRecord> = self
                .instances
                .iter()
                .zip(outputs)
                .map(|(i, questions)| GeneratedRecord {
                    instance_id: i.id.clone(),
                    questions,
                })
                .collect();
            let rel = self.rel(state.iteration, format!("{stem}.generated.jsonl"), true)?;
            write_jsonl_atomic(&records, &run_dir.join(&rel))?;
            state.register(&run_dir, Self::artifact_key(state, "generated"), &rel)?;
            state.step = Step::Generated;
            self.commit(state)?;
        }

        if state.step == Step::Generated {
            let records: Vec<GeneratedRecord> = read_jsonl_all(&self.artifact_path(state, "generated")?)?;
            if records.len() != self.instances.len() {
                return Err(OrchestratorError::CorruptState(format!(
                    "{} generated records for {} instances",
                    records.len(),
                    self.instances.len()
                )));
            }
            let questions: Vec<Vec<Question>> = records
                .iter()
                .map(|r| {
                    r.questions
                        .iter()
                        .enumerate()
                        .map(|(rank, t)| Question::new(format!("{}#{rank}", r.instance_id), t.clone()))
                        .collect()
                })
                .collect();
            let groups: Vec<ForwardGroup<'_>> = self
                .instances
                .iter()
                .zip(&questions)
                .map(|(instance, generated)| ForwardGroup { instance, generated })
                .collect();
            let opts = ForwardOptions {
                rule: ThresholdRule {
                    threshold: self.config.alpha,
                    inclusive: self.config.alpha_inclusive,
                },
                k: self.config.k_generate,
                separator: self.config.separator.clone(),
                tokenizer: self.config.tokenizer,
            };
            let provenance = Provenance {
                iteration: state.iteration,
                epoch: state.epoch,
            };
            let outcome = select_forward(&groups, self.scorer.as_ref(), &opts, provenance)?;
            let generated = questions.iter().map(|q| q.len().min(opts.k)).sum();
            self.write_outcome(state, &stem, &outcome)?;
            Self::record_selection(state, generated, &outcome);
            state.step = Step::Selected;
            self.commit(state)?;
        }

        if state.step == Step::Selected {
            let pairs: Vec<PseudoPair> = read_pseudo_pairs(&self.artifact_path(state, "pairs")?)?;
            let wire = pairs
                .into_iter()
                .map(|p| WirePair { source: p.target, target: p.source })
                .collect();
            self.finish_training(state, Role::Backward, wire)?;
        }

        if state.step == Step::Trained {
            if state.epoch + 1 < self.config.epochs_per_phase {
                state.epoch += 1;
            } else if state.iteration + 1 < self.config.iterations() {
                state.phase = Phase::ForwardEpochs;
                state.iteration += 1;
                state.epoch = 0;
            } else {
                state.phase = Phase::Done;
                state.epoch = 0;
            }
            state.step = Step::Start;
            self.commit(state)?;
        }
        Ok(())
    }
}

/// Continues the run recorded in `run_dir` using the config it was started with.
pub fn resume(run_dir: &Path) -> Result<RunReport, OrchestratorError> {
    resume_with(run_dir, |o| o)
}

/// Like [`resume`], letting the caller adjust the orchestrator first
/// (swap services, attach a boundary hook).
pub fn resume_with(
    run_dir: &Path,
    adjust: impl FnOnce(Orchestrator) -> Orchestrator,
) -> Result<RunReport, OrchestratorError> {
    let state = OrchestratorState::load(run_dir)?;
    let orch = Orchestrator::load(&state.config_path, Some(run_dir), state.seed_override)?;
    adjust(orch).run()
}
