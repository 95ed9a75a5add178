//! Domain types shared across the toolkit and their JSONL representation.
//!
//! Every corpus file is UTF-8 JSONL: one object per line, LF terminated.
//! Blank lines are skipped but still count toward line numbers so error
//! messages point at the physical line.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::selection::PseudoPair;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}:{line}: malformed line: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{0}: no records found")]
    EmptyCorpus(PathBuf),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        CorpusError::Io {
            context: context.into(),
            source,
        }
    }

    /// 1-based line number for line-level failures.
    pub fn line(&self) -> Option<usize> {
        match self {
            CorpusError::MalformedLine { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Question {
            id: id.into(),
            text: text.into(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.text.trim().is_empty() {
            return Err(format!("question {:?} has empty text", self.id));
        }
        Ok(())
    }
}

/// One `(head, relation, tail)` fact. Serialized as a three-element array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[String; 3]", into = "[String; 3]")]
pub struct Triplet {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triplet {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Triplet {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        for (name, value) in [
            ("head", &self.head),
            ("relation", &self.relation),
            ("tail", &self.tail),
        ] {
            if value.trim().is_empty() {
                return Err(format!("triplet {name} is empty"));
            }
        }
        Ok(())
    }
}

impl From<[String; 3]> for Triplet {
    fn from([head, relation, tail]: [String; 3]) -> Self {
        Triplet {
            head,
            relation,
            tail,
        }
    }
}

impl From<Triplet> for [String; 3] {
    fn from(t: Triplet) -> Self {
        [t.head, t.relation, t.tail]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgraph {
    pub triplets: Vec<Triplet>,
    /// Retained for lossless ingestion; no metric reads it.
    #[serde(default)]
    pub answer: Option<String>,
}

impl Subgraph {
    fn validate(&self) -> Result<(), String> {
        if self.triplets.is_empty() {
            return Err("subgraph has no triplets".into());
        }
        self.triplets.iter().try_for_each(Triplet::validate)
    }
}

/// Ordered top-k generated questions for one instance, in beam order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    #[serde(default)]
    pub instance_id: String,
    pub k: usize,
    pub questions: Vec<Question>,
}

impl CandidateSet {
    pub fn new(instance_id: impl Into<String>, questions: Vec<Question>) -> Self {
        let k = questions.len().max(1);
        CandidateSet {
            instance_id: instance_id.into(),
            k,
            questions,
        }
    }

    /// The first `k` questions in rank order.
    pub fn top(&self, k: usize) -> &[Question] {
        &self.questions[..k.min(self.questions.len())]
    }

    fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("candidates.k must be positive".into());
        }
        if self.questions.is_empty() || self.questions.len() > self.k {
            return Err(format!(
                "candidate count {} outside 1..={}",
                self.questions.len(),
                self.k
            ));
        }
        self.questions.iter().try_for_each(Question::validate)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    #[serde(default)]
    pub id: String,
    pub subgraph: Subgraph,
    pub gold: Question,
    #[serde(default)]
    pub candidates: Option<CandidateSet>,
}

impl Instance {
    fn validate(&self) -> Result<(), String> {
        self.subgraph.validate()?;
        self.gold.validate()?;
        if let Some(c) = &self.candidates {
            if c.instance_id != self.id {
                return Err(format!(
                    "candidates.instance_id {:?} does not match id {:?}",
                    c.instance_id, self.id
                ));
            }
            c.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalQuestionCorpus {
    pub questions: Vec<Question>,
}

impl ExternalQuestionCorpus {
    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }
}

/// Candidate lines in a standalone candidates file, joined to instances by id.
#[derive(Debug, Clone, Deserialize)]
struct CandidateLine {
    instance_id: String,
    k: usize,
    questions: Vec<Question>,
}

fn synth_id(line: usize) -> String {
    format!("L{line}")
}

/// Streams `(line_no, value)` pairs out of a JSONL file, skipping blank lines.
fn read_jsonl<T, F>(path: &Path, mut visit: F) -> Result<(), CorpusError>
where
    T: DeserializeOwned,
    F: FnMut(usize, T) -> Result<bool, CorpusError>,
{
    let file = File::open(path).map_err(|e| CorpusError::io(path.display().to_string(), e))?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: T = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            reason: e.to_string(),
        })?;
        if !visit(line_no, value)? {
            break;
        }
    }
    Ok(())
}

fn malformed(path: &Path, line: usize, reason: String) -> CorpusError {
    CorpusError::MalformedLine {
        path: path.to_path_buf(),
        line,
        reason,
    }
}

/// Reads instances in file order, stopping after `limit` records.
pub fn load_instances(path: &Path, limit: Option<usize>) -> Result<Vec<Instance>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    if limit == Some(0) {
        return Err(CorpusError::EmptyCorpus(path.to_path_buf()));
    }
    read_jsonl(path, |line, mut inst: Instance| {
        if inst.id.is_empty() {
            inst.id = synth_id(line);
        }
        if let Some(c) = inst.candidates.as_mut() {
            if c.instance_id.is_empty() {
                c.instance_id = inst.id.clone();
            }
        }
        inst.validate().map_err(|r| malformed(path, line, r))?;
        if !seen.insert(inst.id.clone()) {
            return Err(malformed(path, line, format!("duplicate id {:?}", inst.id)));
        }
        out.push(inst);
        Ok(limit.is_none_or(|l| out.len() < l))
    })?;
    if out.is_empty() {
        return Err(CorpusError::EmptyCorpus(path.to_path_buf()));
    }
    Ok(out)
}

/// Reads the external natural-question corpus.
pub fn load_external_questions(path: &Path) -> Result<ExternalQuestionCorpus, CorpusError> {
    #[derive(Deserialize)]
    struct Line {
        #[serde(default)]
        id: Option<String>,
        text: String,
    }

    let mut questions = Vec::new();
    let mut seen = HashSet::new();
    read_jsonl(path, |line, raw: Line| {
        let q = Question {
            id: raw.id.unwrap_or_else(|| synth_id(line)),
            text: raw.text,
        };
        q.validate().map_err(|r| malformed(path, line, r))?;
        if !seen.insert(q.id.clone()) {
            return Err(CorpusError::DuplicateId(q.id));
        }
        questions.push(q);
        Ok(true)
    })?;
    if questions.is_empty() {
        return Err(CorpusError::EmptyCorpus(path.to_path_buf()));
    }
    Ok(ExternalQuestionCorpus { questions })
}

/// Attaches candidate sets from a separate JSONL file to `instances` by id.
///
/// Returns the id of the first instance without a candidate line as a
/// `MalformedLine`-free error so callers can name it.
pub fn attach_candidates(instances: &mut [Instance], path: &Path) -> Result<(), AttachError> {
    let mut by_id = std::collections::HashMap::new();
    read_jsonl(path, |line, c: CandidateLine| {
        let set = CandidateSet {
            instance_id: c.instance_id,
            k: c.k,
            questions: c.questions,
        };
        set.validate().map_err(|r| malformed(path, line, r))?;
        if by_id.insert(set.instance_id.clone(), set).is_some() {
            return Err(malformed(path, line, "duplicate instance_id".into()));
        }
        Ok(true)
    })?;
    for inst in instances.iter_mut() {
        match by_id.remove(&inst.id) {
            Some(set) => inst.candidates = Some(set),
            None => return Err(AttachError::MissingInstance(inst.id.clone())),
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum AttachError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("candidates file has no entry for instance {0:?}")]
    MissingInstance(String),
}

/// Writes `records` as JSONL through a temp file renamed into place.
pub fn write_jsonl_atomic<T: Serialize>(records: &[T], path: &Path) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| CorpusError::io(path.display().to_string(), e.into()))?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Replaces `path` with `bytes` via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    let ctx = || path.display().to_string();
    let file_name = path
        .file_name()
        .ok_or_else(|| CorpusError::io(ctx(), io::Error::new(io::ErrorKind::InvalidInput, "no file name")))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let f = File::create(&tmp).map_err(|e| CorpusError::io(ctx(), e))?;
        let mut w = BufWriter::new(f);
        w.write_all(bytes).map_err(|e| CorpusError::io(ctx(), e))?;
        let f = w.into_inner().map_err(|e| CorpusError::io(ctx(), e.into_error()))?;
        f.sync_all().map_err(|e| CorpusError::io(ctx(), e))?;
    }
    fs::rename(&tmp, path).map_err(|e| CorpusError::io(ctx(), e))
}

pub fn write_pseudo_pairs(pairs: &[PseudoPair], path: &Path) -> Result<(), CorpusError> {
    write_jsonl_atomic(pairs, path)
}

/// Reads any JSONL file of `T`; an empty file yields an empty list.
pub fn read_jsonl_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let mut out = Vec::new();
    read_jsonl(path, |_, v: T| {
        out.push(v);
        Ok(true)
    })?;
    Ok(out)
}

pub fn read_pseudo_pairs(path: &Path) -> Result<Vec<PseudoPair>, CorpusError> {
    read_jsonl_all(path)
}
