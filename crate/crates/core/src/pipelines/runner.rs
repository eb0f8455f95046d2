//! Parallel, resumable per-record execution shared by the pipelines.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::PipelineError;

/// Size of the window at the start of a run watched by the circuit breaker.
pub const CIRCUIT_WINDOW: usize = 20;

/// Machine-readable per-record status line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub snippet_id: String,
    pub stage: String,
    pub status: String,
    pub latency_ms: u64,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// A checkpointable per-record result.
pub trait Keyed {
    fn key(&self) -> &str;
}

pub(crate) struct Processed<T> {
    pub value: T,
    pub log: RunLogEntry,
    /// The backend could not be reached for this record.
    pub unreachable: bool,
}

/// Results in input order plus log lines for the records processed in this run.
#[derive(Debug, Clone)]
pub struct PipelineRun<T> {
    pub outcomes: Vec<T>,
    pub log: Vec<RunLogEntry>,
    /// Records taken from an existing checkpoint instead of being reprocessed.
    pub resumed: usize,
}

fn load_checkpoint<T: DeserializeOwned + Keyed>(path: &Path) -> Result<HashMap<String, T>, PipelineError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(HashMap::new()),
        Err(e) => return Err(PipelineError::io(path, e)),
    };
    let mut out = HashMap::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        // a torn final line from an interrupted run is simply redone
        if let Ok(entry) = serde_json::from_str::<T>(&line) {
            out.insert(entry.key().to_string(), entry);
        }
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let file = File::create(&tmp).map_err(|e| PipelineError::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        for item in items {
            serde_json::to_writer(&mut w, item).map_err(|e| PipelineError::io(&tmp, e.into()))?;
            w.write_all(b"\n").map_err(|e| PipelineError::io(&tmp, e))?;
        }
        w.flush().map_err(|e| PipelineError::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

/// Processes every id not already in `checkpoint`, with up to `concurrency`
/// workers. New results are appended to the checkpoint as they finish, and
/// the file is rewritten in input order at the end.
///
/// The run aborts when more than half of the first
/// `min(CIRCUIT_WINDOW, pending)` records could not reach the backend.
pub(crate) fn run_resumable<T, F>(
    ids: &[&str],
    checkpoint: Option<&Path>,
    concurrency: usize,
    work: F,
) -> Result<PipelineRun<T>, PipelineError>
where
    T: Serialize + DeserializeOwned + Keyed + Send + Clone,
    F: Fn(usize) -> Processed<T> + Sync,
{
    let mut seen = HashMap::new();
    for id in ids {
        if seen.insert(*id, ()).is_some() {
            return Err(PipelineError::DuplicateSnippetId(id.to_string()));
        }
    }

    let mut existing: HashMap<String, T> = match checkpoint {
        Some(path) => load_checkpoint(path)?,
        None => HashMap::new(),
    };
    existing.retain(|k, _| seen.contains_key(k.as_str()));
    let pending: Vec<usize> = (0..ids.len()).filter(|&i| !existing.contains_key(ids[i])).collect();

    let mut appender = match checkpoint {
        Some(path) => {
            // drop stale or torn lines before appending
            let kept: Vec<T> = ids.iter().filter_map(|id| existing.get(*id).cloned()).collect();
            write_jsonl(path, &kept)?;
            let file = OpenOptions::new()
                .append(true)
                .open(path)
                .map_err(|e| PipelineError::io(path, e))?;
            Some(BufWriter::new(file))
        }
        None => None,
    };

    let window = pending.len().min(CIRCUIT_WINDOW);
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let window_failures = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Processed<T>>>> = Mutex::new((0..pending.len()).map(|_| None).collect());
    let sink: Mutex<(Option<&mut BufWriter<File>>, Option<std::io::Error>)> =
        Mutex::new((appender.as_mut(), None));

    std::thread::scope(|scope| {
        for _ in 0..concurrency.max(1).min(pending.len().max(1)) {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    return;
                }
                let slot = next.fetch_add(1, Ordering::SeqCst);
                if slot >= pending.len() {
                    return;
                }
                let processed = work(pending[slot]);
                if slot < window && processed.unreachable {
                    let failures = window_failures.fetch_add(1, Ordering::SeqCst) + 1;
                    if failures * 2 > window {
                        abort.store(true, Ordering::SeqCst);
                    }
                }
                {
                    let mut guard = sink.lock().expect("checkpoint lock");
                    let (writer, err) = &mut *guard;
                    if let (Some(w), None) = (writer.as_mut(), err.as_ref()) {
                        let res = serde_json::to_writer(&mut **w, &processed.value)
                            .map_err(std::io::Error::from)
                            .and_then(|_| w.write_all(b"\n"))
                            .and_then(|_| w.flush());
                        if let Err(e) = res {
                            *err = Some(e);
                        }
                    }
                }
                results.lock().expect("results lock")[slot] = Some(processed);
            });
        }
    });

    if let (_, Some(err)) = sink.into_inner().expect("checkpoint lock") {
        return Err(PipelineError::io(checkpoint.unwrap_or(Path::new("<checkpoint>")), err));
    }
    drop(appender);

    if abort.load(Ordering::SeqCst) {
        return Err(PipelineError::CircuitOpen {
            failures: window_failures.load(Ordering::SeqCst),
            window,
        });
    }

    let mut fresh: HashMap<usize, T> = HashMap::new();
    let mut log = Vec::new();
    for (slot, processed) in results.into_inner().expect("results lock").into_iter().enumerate() {
        let processed = processed.expect("every pending record processed");
        log.push(processed.log);
        fresh.insert(pending[slot], processed.value);
    }
    let resumed = existing.len();
    let outcomes: Vec<T> = (0..ids.len())
        .map(|i| match fresh.remove(&i) {
            Some(v) => v,
            None => existing.remove(ids[i]).expect("checkpointed"),
        })
        .collect();
    if let Some(path) = checkpoint {
        write_jsonl(path, &outcomes)?;
    }
    Ok(PipelineRun {
        outcomes,
        log,
        resumed,
    })
}
