//! Session orchestration: wires ingestion, structuring, chunking, indexing,
//! retrieval, prompting, completion, and evaluation together.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cassette::{Cassette, Mode};
use crate::chunk::{render_scene, Chunk};
use crate::config::SessionConfig;
use crate::embed::{embed, EmbeddingProvider, HashEmbedder, RemoteEmbedder, RemoteEmbedderConfig};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate, evaluate_image, parse_structured_answer, ImageEvaluation, MetricsReport,
    PredictedScene, SynonymMap, ALL_ATTRIBUTES,
};
use crate::generation::{
    build_eval_prompt, build_prompt, ChatBackend, CompletionClient, HttpChatBackend,
};
use crate::index::EphemeralIndex;
use crate::scene::{build_structured_scene, SceneGraph, StructuredScene};
use crate::transport::ReqwestTransport;

/// Wall-clock of one pipeline stage. Durations are zeroed in replay mode so
/// replayed results are bit-reproducible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub micros: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedChunk {
    pub category: String,
    pub text: String,
    pub score: f64,
}

/// Result of one question-answering session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAResult {
    pub image_id: String,
    pub question: String,
    pub retrieved: Vec<RetrievedChunk>,
    pub prompt_digest: String,
    pub answer: String,
    pub backend: String,
    pub mode: Mode,
    pub timing: Vec<StageTiming>,
}

/// One line of the questions file (JSON lines).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub image_id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

pub fn read_questions(path: &Path) -> Result<Vec<QuestionRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: QuestionRecord = serde_json::from_str(line).map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: format!("line {}: {e}", lineno + 1),
        })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: "questions file contains no records".to_string(),
        });
    }
    Ok(records)
}

/// Everything a session needs at run time: the embedding provider, the
/// completion client, and resolved options.
pub struct SessionRuntime {
    pub config: SessionConfig,
    pub provider: Arc<dyn EmbeddingProvider>,
    pub client: CompletionClient,
    pub synonyms: SynonymMap,
}

impl SessionRuntime {
    /// Builds the runtime from configuration, constructing the HTTP backend
    /// for live/record modes.
    pub fn from_config(config: SessionConfig) -> Result<Self> {
        let backend: Option<Arc<dyn ChatBackend>> = match config.session.mode {
            Mode::Replay => None,
            Mode::Live | Mode::Record => {
                let transport = Arc::new(ReqwestTransport::new(Duration::from_secs(
                    config.completion.timeout_secs,
                ))?);
                Some(Arc::new(HttpChatBackend::new(
                    config.completion.clone(),
                    transport,
                )?))
            }
        };
        Self::with_backend(config, backend)
    }

    /// Builds the runtime with an explicit completion backend (tests and
    /// cassette recording use scripted backends here).
    pub fn with_backend(
        config: SessionConfig,
        backend: Option<Arc<dyn ChatBackend>>,
    ) -> Result<Self> {
        config.validate()?;
        let mode = config.session.mode;

        let cassette: Option<Arc<Cassette>> = match &config.session.cassette {
            Some(path) => Some(Arc::new(match mode {
                Mode::Record => Cassette::open_or_create(path)?,
                _ => Cassette::load(path)?,
            })),
            None => None,
        };

        let provider: Arc<dyn EmbeddingProvider> = match config.embedding.provider.as_str() {
            "hash" => Arc::new(HashEmbedder::new(config.embedding.dim, config.embedding.seed)?),
            "remote" => {
                let transport = Arc::new(ReqwestTransport::new(Duration::from_secs(
                    config.completion.timeout_secs,
                ))?);
                Arc::new(RemoteEmbedder::new(
                    RemoteEmbedderConfig {
                        url: config.embedding.url.clone(),
                        model: config.embedding.model.clone(),
                        dimension: config.embedding.dim,
                        auth_header: config.embedding.auth_header.clone(),
                        secret_env: config.embedding.secret_env.clone(),
                    },
                    transport,
                    mode,
                    cassette.clone(),
                )?)
            }
            other => {
                return Err(Error::Config(format!("unknown embedding provider {other:?}")));
            }
        };

        let client = CompletionClient::new(mode, backend, cassette)?;

        let synonyms = match &config.session.synonyms {
            Some(path) => SynonymMap::load(path)?,
            None => SynonymMap::default(),
        };

        Ok(SessionRuntime {
            config,
            provider,
            client,
            synonyms,
        })
    }
}

fn timed<T>(
    timing: &mut Vec<StageTiming>,
    zero_clock: bool,
    stage: &'static str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| Error::stage(stage, e))?;
    timing.push(StageTiming {
        stage: stage.to_string(),
        micros: if zero_clock {
            0
        } else {
            start.elapsed().as_micros() as u64
        },
    });
    Ok(out)
}

fn retrieve_for_question(
    index: &EphemeralIndex,
    question: &str,
    provider: &dyn EmbeddingProvider,
    k: usize,
) -> Result<Vec<(Chunk, f64)>> {
    if index.is_empty() {
        return Ok(Vec::new());
    }
    let query = embed(question, provider)?;
    index.top_k(&query, k)
}

fn build_index(
    scene: &StructuredScene,
    provider: &dyn EmbeddingProvider,
) -> Result<EphemeralIndex> {
    let mut index = EphemeralIndex::new(scene.image_id.clone(), provider);
    for chunk in render_scene(scene) {
        index.insert(chunk, provider)?;
    }
    Ok(index)
}

/// Runs the full question-answering pipeline over one scene file.
///
/// The vector index lives only inside this call; nothing is persisted. The
/// scene file is validated before any provider is touched, so an invalid
/// scene never causes network traffic.
pub fn answer_question(
    scene_path: &Path,
    question: &str,
    runtime: &SessionRuntime,
) -> Result<QAResult> {
    let graph = SceneGraph::from_file(scene_path).map_err(|e| Error::stage("load", e))?;
    let result = answer_question_graph(&graph, question, runtime)?;
    Ok(result)
}

/// Same pipeline, starting from an already validated scene graph.
pub fn answer_question_graph(
    graph: &SceneGraph,
    question: &str,
    runtime: &SessionRuntime,
) -> Result<QAResult> {
    let zero_clock = runtime.config.session.mode == Mode::Replay;
    let k = runtime.config.session.k;
    let mut timing = Vec::new();

    let structured = timed(&mut timing, zero_clock, "structure", || {
        build_structured_scene(graph)
    })?;
    let chunks = timed(&mut timing, zero_clock, "chunk", || Ok(render_scene(&structured)))?;
    let index = timed(&mut timing, zero_clock, "index", || {
        let mut index = EphemeralIndex::new(structured.image_id.clone(), runtime.provider.as_ref());
        for chunk in chunks {
            index.insert(chunk, runtime.provider.as_ref())?;
        }
        Ok(index)
    })?;
    let retrieved = timed(&mut timing, zero_clock, "retrieve", || {
        retrieve_for_question(&index, question, runtime.provider.as_ref(), k)
    })?;
    let prompt = timed(&mut timing, zero_clock, "prompt", || {
        let ranked: Vec<Chunk> = retrieved.iter().map(|(c, _)| c.clone()).collect();
        build_prompt(&ranked, question)
    })?;
    let answer = timed(&mut timing, zero_clock, "complete", || {
        runtime.client.complete(&prompt)
    })?;

    // `index` is dropped here with the stack frame; it was never written out.
    Ok(QAResult {
        image_id: structured.image_id,
        question: question.to_string(),
        retrieved: retrieved
            .into_iter()
            .map(|(c, score)| RetrievedChunk {
                category: c.category,
                text: c.text,
                score,
            })
            .collect(),
        prompt_digest: answer.prompt_digest,
        answer: answer.answer,
        backend: answer.backend,
        mode: answer.mode,
        timing,
    })
}

/// Serializes a QA result as pretty JSON with a trailing newline.
pub fn qa_result_to_json(result: &QAResult) -> String {
    let mut s = serde_json::to_string_pretty(result).expect("qa result serializes");
    s.push('\n');
    s
}

fn scene_file(dataset_dir: &Path, image_id: &str) -> PathBuf {
    dataset_dir.join(format!("{image_id}.json"))
}

/// Evaluates one question record against its ground-truth scene. Backend,
/// cassette, and parse failures are recorded (zero-recall row); they do not
/// abort the batch.
fn evaluate_record(
    record: &QuestionRecord,
    gt: &StructuredScene,
    index: &EphemeralIndex,
    runtime: &SessionRuntime,
) -> Result<ImageEvaluation> {
    let answer = retrieve_for_question(
        index,
        &record.question,
        runtime.provider.as_ref(),
        runtime.config.session.k,
    )
    .and_then(|retrieved| {
        let ranked: Vec<Chunk> = retrieved.into_iter().map(|(c, _)| c).collect();
        let prompt = build_eval_prompt(&ranked, &record.question, &ALL_ATTRIBUTES)?;
        runtime.client.complete(&prompt)
    });

    let mut pred = match answer {
        Ok(record) => parse_structured_answer(&record.answer, &gt.image_id),
        Err(_) => PredictedScene {
            image_id: gt.image_id.clone(),
            parse_ok: false,
            ..PredictedScene::default()
        },
    };
    pred.apply_synonyms(&runtime.synonyms);
    evaluate_image(&pred, gt)
}

/// Runs the batch evaluation: one row per question record, aggregated into a
/// [`MetricsReport`]. Records are processed concurrently up to the configured
/// worker cap; aggregation order is the questions-file order.
pub fn run_eval(
    dataset_dir: &Path,
    questions_path: &Path,
    runtime: &SessionRuntime,
) -> Result<MetricsReport> {
    let records = read_questions(questions_path)?;

    // Every referenced scene file must exist before any work starts.
    for record in &records {
        let path = scene_file(dataset_dir, &record.image_id);
        if !path.exists() {
            return Err(Error::Config(format!(
                "scene file {} for image {:?} does not exist",
                path.display(),
                record.image_id
            )));
        }
    }

    // Ground truth is required for scoring, so scene problems abort the run.
    let mut scenes: HashMap<String, Arc<StructuredScene>> = HashMap::new();
    for record in &records {
        if !scenes.contains_key(&record.image_id) {
            let graph = SceneGraph::from_file(&scene_file(dataset_dir, &record.image_id))?;
            scenes.insert(record.image_id.clone(), Arc::new(build_structured_scene(&graph)?));
        }
    }

    // Optional per-image index cache; indexes are immutable once built.
    let mut index_cache: HashMap<String, Arc<EphemeralIndex>> = HashMap::new();
    if runtime.config.session.per_image_cache {
        for (image_id, scene) in &scenes {
            index_cache.insert(
                image_id.clone(),
                Arc::new(build_index(scene, runtime.provider.as_ref())?),
            );
        }
    }

    let workers = runtime.config.session.workers.min(records.len()).max(1);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ImageEvaluation>>>> =
        Mutex::new((0..records.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= records.len() {
                    break;
                }
                let record = &records[i];
                let gt = scenes[&record.image_id].clone();
                let outcome = match index_cache.get(&record.image_id) {
                    Some(index) => evaluate_record(record, &gt, index, runtime),
                    None => build_index(&gt, runtime.provider.as_ref())
                        .and_then(|index| evaluate_record(record, &gt, &index, runtime)),
                };
                results.lock().unwrap()[i] = Some(outcome);
            });
        }
    });

    let evaluations: Vec<ImageEvaluation> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every record processed"))
        .collect::<Result<_>>()?;

    let dataset = dataset_dir
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| dataset_dir.display().to_string());
    aggregate(
        &dataset,
        &evaluations,
        runtime.config.session.pooling,
        runtime.config.session.threshold,
    )
}
