//! Batch front end: load tasks and models, run the outer loop per task, and
//! write one record line per task.

mod eval;
mod record;
mod trace;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{mpsc, Arc};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use eval::{aggregate, read_records, render_table, write_csv, AggregateRow};
pub use record::{EssSummary, RecordError, RunRecord};
pub use trace::{render_trace_csv, render_trace_html, TraceFile};

use crate::engine::{InferenceConfig, InferenceOutcome, Method};
use crate::error::{Error, Result};
use crate::planner::{steer, PlanSource, SourceExhausted};
use crate::rng::stream_key;
use crate::steering::ModelSet;
use crate::tasks::{coherency_proxy, uniform_pass_at_1, weighted_pass_at_1, TaskSpec};
use crate::token_model::{TokenModel, Tokenizer, Vocabulary};

/// Where the follower model comes from, written `kind:location`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSource {
    Table(PathBuf),
    Ngram(PathBuf),
    /// Uniform over the vocabulary listed in the file.
    Uniform(PathBuf),
    Remote(String),
}

impl FromStr for ModelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::schema("model", format!("expected kind:location, got {s:?}")))?;
        if rest.is_empty() {
            return Err(Error::schema("model", "empty location"));
        }
        match kind {
            "table" => Ok(Self::Table(rest.into())),
            "ngram" => Ok(Self::Ngram(rest.into())),
            "uniform" => Ok(Self::Uniform(rest.into())),
            "remote" => Ok(Self::Remote(rest.into())),
            other => Err(Error::schema(
                "model",
                format!("unknown kind {other:?}; use table, ngram, uniform or remote"),
            )),
        }
    }
}

/// Settings that only matter for some model kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    pub ngram_order: usize,
    pub smoothing: f64,
    pub tokenizer: Tokenizer,
    /// Vocabulary file for remote models: a JSON list of token strings,
    /// EOS last.
    pub vocab: Option<PathBuf>,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            ngram_order: 3,
            smoothing: 0.1,
            tokenizer: Tokenizer::Char,
            vocab: None,
        }
    }
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let text = std::fs::read_to_string(path)?;
    let tokens: Vec<String> = serde_json::from_str(&text).map_err(|e| Error::from_json(&e))?;
    Vocabulary::with_trailing_eos(tokens)
}

pub fn load_model(source: &ModelSource, options: &ModelOptions) -> Result<TokenModel> {
    match source {
        ModelSource::Table(p) => TokenModel::load_table(&std::fs::read_to_string(p)?),
        ModelSource::Ngram(p) => TokenModel::train_ngram(
            &std::fs::read_to_string(p)?,
            options.ngram_order,
            options.smoothing,
            options.tokenizer,
        ),
        ModelSource::Uniform(p) => Ok(TokenModel::uniform(read_vocab(p)?)),
        ModelSource::Remote(url) => {
            let path = options
                .vocab
                .as_ref()
                .ok_or_else(|| Error::schema("vocab", "remote models need a vocabulary file"))?;
            TokenModel::remote(url, read_vocab(path)?)
        }
    }
}

/// Tasks from a line-delimited file; blank lines are skipped.
pub fn read_tasks(path: &Path) -> Result<Vec<TaskSpec>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut tasks = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let task: TaskSpec = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("{}:{}", path.display(), i + 1), e.to_string()))?;
        task.validate()?;
        tasks.push(task);
    }
    Ok(tasks)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: InferenceConfig,
    /// Total attempts per task, first one included.
    pub max_attempts: usize,
    pub jobs: usize,
    /// Directory for per-run step traces.
    pub trace_dir: Option<PathBuf>,
    pub timing: bool,
}

/// Seed for task `index` of a run seeded with `seed`.
pub fn task_seed(seed: u64, index: usize) -> u64 {
    stream_key(&[seed, index as u64])
}

pub fn run_id(task: &TaskSpec, index: usize, method: Method, seed: u64) -> String {
    let id = task
        .id
        .clone()
        .unwrap_or_else(|| format!("{}-{index}", task.task_type));
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.{}.{seed}", method.as_str())
}

/// Run one task through the outer loop and summarize it as a record.
pub fn run_task(
    task: &TaskSpec,
    index: usize,
    source: &dyn PlanSource,
    models: &ModelSet,
    opts: &RunOptions,
) -> Result<RunRecord> {
    let start = Instant::now();
    let seed = task_seed(opts.config.seed, index);
    let config = InferenceConfig {
        seed,
        record_steps: opts.trace_dir.is_some(),
        ..opts.config.clone()
    };
    let result = match steer(task, source, models, &config, opts.max_attempts) {
        Ok(r) => r,
        Err(SourceExhausted(r)) => *r,
    };
    let outcome = &result.final_outcome;
    let run_id = run_id(task, index, config.method, opts.config.seed);
    let selected_text = outcome.selected_text().map(str::to_string);
    let passed = selected_text
        .as_deref()
        .is_some_and(|t| task.verify(t).passed);
    let coherency = match (&outcome.selected, &result.final_plan) {
        (Some(tokens), Some(plan)) => {
            Some(coherency_proxy(tokens, &models.prior, &plan.prior_tag)?)
        }
        _ => None,
    };
    if let Some(dir) = &opts.trace_dir {
        TraceFile::from_outcome(&run_id, outcome).write(dir)?;
    }
    Ok(RunRecord {
        task_index: index,
        task_id: task.id.clone(),
        task_type: task.task_type.clone(),
        constraints: task.constraints.clone(),
        method: config.method.as_str().to_string(),
        n_particles: config.n_particles,
        seed: opts.config.seed,
        task_seed: seed,
        selected_text,
        passed,
        weighted_pass_at_1: candidate_pass_at_1(task, config.method, outcome),
        coherency_proxy: coherency,
        retries_used: result.retries_used,
        attempts: result.attempts.len(),
        error: outcome.error.as_ref().map(RecordError::from),
        wall_time: opts.timing.then(|| start.elapsed().as_secs_f64()),
        ess: EssSummary::from_diagnostics(&outcome.diagnostics),
        run_id,
    })
}

/// Weighted Pass@1 of the final candidate set against the task's verifier.
/// Rejection carries no weights, so every candidate counts once.
fn candidate_pass_at_1(task: &TaskSpec, method: Method, outcome: &InferenceOutcome) -> f64 {
    let passes = outcome
        .candidates
        .iter()
        .map(|c| task.verify(&c.text).passed);
    if method == Method::Rejection {
        return uniform_pass_at_1(&passes.collect::<Vec<_>>());
    }
    let weighted: Vec<(Option<f64>, bool)> = outcome
        .candidates
        .iter()
        .zip(passes)
        .map(|(c, p)| (Some(c.raw_log_weight), p))
        .collect();
    weighted_pass_at_1(&weighted)
}

/// Run every task on a pool of `opts.jobs` threads. Lines reach `out` in
/// task order through a single writer, so the bytes do not depend on the
/// pool size.
pub fn run_tasks(
    tasks: &[TaskSpec],
    source: &dyn PlanSource,
    models: &ModelSet,
    opts: &RunOptions,
    out: &mut (dyn Write + Send),
) -> Result<Vec<RunRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    let (tx, rx) = mpsc::channel::<(usize, Result<RunRecord>)>();
    std::thread::scope(|scope| {
        let writer = scope.spawn(move || -> Result<Vec<RunRecord>> {
            let mut pending = BTreeMap::new();
            let mut next = 0;
            let mut records = Vec::with_capacity(tasks.len());
            for (i, rec) in rx {
                pending.insert(i, rec);
                while let Some(rec) = pending.remove(&next) {
                    let rec = rec?;
                    writeln!(out, "{}", rec.to_line())?;
                    records.push(rec);
                    next += 1;
                }
            }
            out.flush()?;
            Ok(records)
        });
        pool.install(|| {
            tasks
                .par_iter()
                .enumerate()
                .for_each_with(tx, |tx, (i, task)| {
                    // The writer only hangs up after an error; the rest is moot then.
                    let _ = tx.send((i, run_task(task, i, source, models, opts)));
                });
        });
        writer.join().expect("writer thread panicked")
    })
}

/// Shared model handle for the common single-model setup.
pub fn single_model(model: TokenModel) -> ModelSet {
    ModelSet::single(Arc::new(model))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_source_syntax() {
        assert_eq!(
            "table:a/b.json".parse::<ModelSource>().unwrap(),
            ModelSource::Table("a/b.json".into())
        );
        assert_eq!(
            "remote:http://h:1".parse::<ModelSource>().unwrap(),
            ModelSource::Remote("http://h:1".into())
        );
        assert!("table:".parse::<ModelSource>().is_err());
        assert!("gguf:x".parse::<ModelSource>().is_err());
        assert!("nocolon".parse::<ModelSource>().is_err());
    }

    #[test]
    fn run_ids_are_filesystem_safe() {
        let task = TaskSpec {
            id: Some("a/b c".into()),
            task_type: "t".into(),
            prompt_text: String::new(),
            constraints: vec![],
        };
        assert_eq!(run_id(&task, 0, Method::Smc, 7), "a_b_c.smc.7");
        let anon = TaskSpec { id: None, ..task };
        assert_eq!(run_id(&anon, 3, Method::Rejection, 1), "t-3.rejection.1");
    }
}
