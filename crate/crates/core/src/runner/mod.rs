//! Batch engine: renders each sample for the configured setting, queries
//! the backend, grades the answer and persists one JSONL line per sample.

pub mod report;
pub mod spec;

use std::collections::{HashMap, HashSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::replay::{canonical_json, sha256_hex, ReplayStore};
use crate::backend::{preset, BackendRequest, ModelBackend, Preset, Purpose};
use crate::captions::{attach_caption, CaptionCache, CaptionPipeline, CaptionRequest, CaptionStrategy};
use crate::cot::{cot_context, cot_iterative, self_consistency, CotSettings, RationaleAnswer, VoteCount};
use crate::datasets::{build_quad, load_dataset, Dataset, LoadError, QuestionRecord, WinogroundSample};
use crate::embed::EmbeddingProvider;
use crate::exec::{self, ExecMode};
use crate::exemplars::{embed_missing, load_pool, select_exemplars, Exemplar, PoolError};
use crate::metrics::{llm_parse, normalize, winoground_group_score, yes_no_of, Grader, YesNo};
use crate::templates::{builtin_registry, render_exemplar_block, FewShotSetting, PromptContext, TemplateSpec};

pub use report::{compare, report_by_type, DeltaReport, Report, TypeStat};
pub use spec::{AnswerMode, BackendSpec, EmbedderSpec, ExperimentSpec, Setting};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot compare: {0}")]
    CompareMismatch(String),
}

impl RunError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// One probe of a Winoground quad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub image_ref: String,
    pub question: String,
    pub expected: YesNo,
    pub prompt: String,
    pub raw: Vec<String>,
    pub candidate: String,
    pub parsed: String,
    pub answer: YesNo,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_type: Option<String>,
    pub question: String,
    pub prompt: String,
    /// Backend outputs in call order.
    pub raw: Vec<String>,
    /// Answer before optional LLM parsing.
    pub candidate: String,
    pub parsed: String,
    pub normalized: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grader: Option<Grader>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tally: Option<Vec<VoteCount>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub items: Vec<ItemResult>,
    pub timing_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SampleResult {
    fn failed(id: &str, question_type: Option<String>, question: &str, grader: Option<Grader>, error: String) -> Self {
        SampleResult {
            id: id.to_string(),
            question_type,
            question: question.to_string(),
            prompt: String::new(),
            raw: Vec::new(),
            candidate: String::new(),
            parsed: String::new(),
            normalized: String::new(),
            score: 0.0,
            grader,
            caption: None,
            rationale: None,
            tally: None,
            items: Vec::new(),
            timing_ms: 0,
            warnings: vec![format!("SampleError: {error}")],
            error: Some(error),
        }
    }
}

/// Backends and providers a run talks to.
#[derive(Clone)]
pub struct Backends {
    pub model: Arc<dyn ModelBackend>,
    /// Text-only model for parsing and caption fusion.
    pub text: Arc<dyn ModelBackend>,
    pub grounder: Option<Arc<dyn ModelBackend>>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    /// Content digests of any replay stores, folded into the run digest.
    pub store_digests: Vec<String>,
}

impl Backends {
    pub fn from_spec(spec: &ExperimentSpec) -> Result<Self, RunError> {
        let model = spec.backend.build()?;
        let text = match &spec.text_backend {
            Some(t) => t.build()?,
            None => model.clone(),
        };
        let mut store_digests = Vec::new();
        for b in std::iter::once(&spec.backend).chain(spec.text_backend.as_ref()) {
            if let Some(path) = b.store() {
                let store = ReplayStore::open(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
                store_digests.push(store.content_digest());
            }
        }
        Ok(Backends {
            model,
            text,
            grounder: None,
            embedder: spec.embedder.build()?,
            store_digests,
        })
    }
}

pub struct RunOutcome {
    pub report: Report,
    /// Every result for the run, including resumed ones, sorted by id.
    pub results: Vec<SampleResult>,
    /// Samples processed in this invocation.
    pub processed: usize,
}

impl RunOutcome {
    pub fn has_sample_errors(&self) -> bool {
        self.report.errors > 0
    }
}

enum Work<'a> {
    Question(&'a QuestionRecord),
    Quad(&'a WinogroundSample),
}

impl Work<'_> {
    fn id(&self) -> &str {
        match self {
            Work::Question(r) => &r.id,
            Work::Quad(s) => &s.id,
        }
    }
}

struct Trace {
    prompt: String,
    raw: Vec<String>,
    candidate: String,
    parsed: String,
    caption: Option<String>,
    rationale: Option<String>,
    tally: Option<Vec<VoteCount>>,
    warnings: Vec<String>,
}

pub struct Runner {
    spec: ExperimentSpec,
    backends: Backends,
    template: TemplateSpec,
    cot_template: TemplateSpec,
    pool: Vec<Exemplar>,
    captions: CaptionCache,
}

pub fn file_digest(path: &Path) -> Result<String, RunError> {
    let bytes = std::fs::read(path).map_err(|e| RunError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Strips location-dependent fields so moving a checkout keeps digests.
fn digestible_config(config: &Value) -> Value {
    match config {
        Value::Object(map) => Value::Object(
            map.iter()
                .filter(|(k, _)| !matches!(k.as_str(), "path" | "pool" | "store" | "caption_cache"))
                .map(|(k, v)| (k.clone(), digestible_config(v)))
                .collect(),
        ),
        Value::Array(items) => Value::Array(items.iter().map(digestible_config).collect()),
        other => other.clone(),
    }
}

impl Runner {
    pub fn new(spec: ExperimentSpec, backends: Backends) -> Result<Self, RunError> {
        spec.validate()?;
        let registry = builtin_registry();
        let template = registry.get(&spec.template).map_err(|e| RunError::Config(e.to_string()))?.clone();
        let cot_template = registry.get(&spec.cot_template).map_err(|e| RunError::Config(e.to_string()))?.clone();
        let pool = match &spec.few_shot {
            Some(fs) => {
                let mut pool = load_pool(&fs.pool)?;
                let added = embed_missing(&mut pool, backends.embedder.as_ref())?;
                if added > 0 {
                    log::warn!("embedded {added} pool items in memory; run embed-pool to persist them");
                }
                pool
            }
            None => Vec::new(),
        };
        let captions = match &spec.caption_cache {
            Some(path) => CaptionCache::open(path).map_err(|e| RunError::Config(e.to_string()))?,
            None => CaptionCache::in_memory(),
        };
        Ok(Runner {
            spec,
            backends,
            template,
            cot_template,
            pool,
            captions,
        })
    }

    pub fn spec(&self) -> &ExperimentSpec {
        &self.spec
    }

    fn run_digest(&self, dataset_digest: &str) -> Result<String, RunError> {
        let config = serde_json::to_value(&self.spec).expect("spec serializes");
        let mut parts = vec![canonical_json(&digestible_config(&config)), dataset_digest.to_string()];
        if let Some(fs) = &self.spec.few_shot {
            parts.push(file_digest(&fs.pool)?);
        }
        parts.extend(self.backends.store_digests.iter().cloned());
        Ok(sha256_hex(parts.join("\n").as_bytes()))
    }

    fn multiple_choice(&self, record: &QuestionRecord) -> bool {
        match self.spec.dataset.answer_mode {
            AnswerMode::Open => false,
            AnswerMode::MultipleChoice | AnswerMode::Auto => record.is_multiple_choice(),
        }
    }

    fn exemplars(&self, question: &str) -> Result<Vec<Exemplar>, String> {
        let Some(cfg) = self.spec.selection() else {
            return Ok(Vec::new());
        };
        let query = self.backends.embedder.embed(question).map_err(|e| e.to_string())?;
        let picked = select_exemplars(&query, &self.pool, &cfg).map_err(|e| e.to_string())?;
        Ok(picked.into_iter().map(|s| self.pool[s.index].clone()).collect())
    }

    fn caption_for(&self, image_ref: &str, question: &str) -> Result<Option<String>, String> {
        let Some(strategy) = self.spec.caption_strategy else {
            return Ok(None);
        };
        let req = match strategy {
            CaptionStrategy::Dense => CaptionRequest::dense(image_ref, self.spec.dense_samples),
            CaptionStrategy::Grounded => CaptionRequest::grounded(image_ref),
            CaptionStrategy::QuestionGuided => CaptionRequest::question_guided(image_ref, question),
        };
        let pipeline = CaptionPipeline {
            captioner: self.backends.model.as_ref(),
            grounder: self.backends.grounder.as_deref(),
            fuser: self.backends.text.as_ref(),
            cache: &self.captions,
            omit_image: self.spec.omit_image,
        };
        pipeline.caption(&req).map(|c| Some(c.text)).map_err(|e| e.to_string())
    }

    fn answer_gen(&self) -> crate::backend::GenerationConfig {
        let p = if self.spec.use_llm_parse {
            Preset::VerboseAnswer
        } else {
            Preset::Answer
        };
        preset(p).without_image(self.spec.omit_image)
    }

    fn cot_settings(&self) -> CotSettings {
        let mut s = CotSettings::new(self.cot_template.clone(), self.template.clone()).omit_image(self.spec.omit_image);
        s.answer_gen = self.answer_gen();
        s
    }

    /// Runs one question through the configured setting.
    fn answer(&self, image_ref: &str, ctx: PromptContext) -> Result<Trace, String> {
        let mut warnings = Vec::new();
        let caption = self.caption_for(image_ref, &ctx.question)?;
        let ctx = match &caption {
            Some(c) => attach_caption(
                &ctx,
                &crate::captions::Caption {
                    text: c.clone(),
                    strategy: self.spec.caption_strategy.expect("caption implies strategy"),
                    provenance: Vec::new(),
                },
            )
            .map_err(|e| e.to_string())?,
            None => ctx,
        };
        let exemplars = self.exemplars(&ctx.question)?;
        let model = self.backends.model.as_ref();

        let (prompt, raw, candidate, rationale, tally) = match self.spec.setting {
            Setting::Standard | Setting::Caption => {
                let fs = if caption.is_some() {
                    FewShotSetting::Caption
                } else {
                    FewShotSetting::Standard
                };
                let prompt = render_exemplar_block(&self.template, &exemplars, fs, &ctx).map_err(|e| e.to_string())?;
                let req = BackendRequest::new(prompt.clone(), Some(image_ref), self.answer_gen(), Purpose::Answer);
                let resp = model.complete(&req).map_err(|e| e.to_string())?;
                let candidate = resp.first().trim().to_string();
                (prompt, resp.texts, candidate, None, None)
            }
            Setting::Cot => {
                let prompt = render_exemplar_block(&self.cot_template, &exemplars, FewShotSetting::Cot, &ctx)
                    .map_err(|e| e.to_string())?;
                let gen = preset(Preset::Rationale).without_image(self.spec.omit_image);
                let req = BackendRequest::new(prompt.clone(), Some(image_ref), gen, Purpose::Rationale);
                let resp = model.complete(&req).map_err(|e| e.to_string())?;
                let ra = RationaleAnswer::from_raw(resp.first());
                warnings.extend(ra.warnings.iter().cloned());
                (prompt, resp.texts, ra.answer, Some(ra.rationale), None)
            }
            Setting::CotIterative | Setting::CotContext => {
                let settings = self.cot_settings();
                let chain = if self.spec.setting == Setting::CotIterative {
                    cot_iterative(&ctx, Some(image_ref), model, &settings)
                } else {
                    cot_context(&ctx, Some(image_ref), model, &settings)
                }
                .map_err(|e| e.to_string())?;
                warnings.extend(chain.rationale_stage.warnings.iter().cloned());
                warnings.extend(chain.answer_stage.warnings.iter().cloned());
                let raw = vec![chain.rationale_stage.raw.clone(), chain.answer_stage.raw.clone()];
                (
                    chain.answer_prompt.clone(),
                    raw,
                    chain.answer().to_string(),
                    Some(chain.rationale_stage.rationale.clone()),
                    None,
                )
            }
            Setting::CotConsistency => {
                let cfg = self.spec.consistency.expect("validated");
                let out = self_consistency(
                    &ctx,
                    Some(image_ref),
                    model,
                    &self.cot_settings(),
                    &cfg,
                    normalize,
                    self.spec.max_in_flight,
                )
                .map_err(|e| e.to_string())?;
                warnings.extend(out.warnings.iter().cloned());
                let raw = out
                    .paths
                    .iter()
                    .map(|p| p.result.as_ref().map(|r| r.raw.clone()).unwrap_or_default())
                    .collect();
                (out.prompt, raw, out.answer, None, Some(out.tally))
            }
        };

        let parsed = self.parse(&ctx.question, &candidate, &mut warnings);
        Ok(Trace {
            prompt,
            raw,
            candidate,
            parsed,
            caption,
            rationale,
            tally,
            warnings,
        })
    }

    fn parse(&self, question: &str, candidate: &str, warnings: &mut Vec<String>) -> String {
        if !self.spec.use_llm_parse {
            return candidate.to_string();
        }
        let out = llm_parse(question, candidate, self.backends.text.as_ref());
        warnings.extend(out.warning);
        out.text
    }

    fn process(&self, work: &Work) -> SampleResult {
        let started = Instant::now();
        let mut result = match work {
            Work::Question(r) => self.process_question(r),
            Work::Quad(s) => self.process_quad(s),
        };
        result.timing_ms = started.elapsed().as_millis() as u64;
        result
    }

    fn process_question(&self, record: &QuestionRecord) -> SampleResult {
        let mc = self.multiple_choice(record);
        let grader = record.grader(mc);
        let mut ctx = PromptContext::new(record.question.clone()).binary(record.is_binary_question());
        if mc {
            ctx.options = record.options.clone();
        }
        if let Some(instruction) = &self.spec.task_instruction {
            ctx.task_instruction = Some(instruction.clone());
        }
        match self.answer(&record.image_ref, ctx) {
            Ok(t) => SampleResult {
                id: record.id.clone(),
                question_type: record.question_type.clone(),
                question: record.question.clone(),
                prompt: t.prompt,
                raw: t.raw,
                normalized: normalize(&t.parsed),
                score: grader.score(&t.parsed),
                candidate: t.candidate,
                parsed: t.parsed,
                grader: Some(grader),
                caption: t.caption,
                rationale: t.rationale,
                tally: t.tally,
                items: Vec::new(),
                timing_ms: 0,
                warnings: t.warnings,
                error: None,
            },
            Err(e) => SampleResult::failed(
                &record.id,
                record.question_type.clone(),
                &record.question,
                Some(grader),
                e,
            ),
        }
    }

    fn process_quad(&self, sample: &WinogroundSample) -> SampleResult {
        let question = sample.captions.join(" / ");
        let quad = match build_quad(sample, self.spec.winoground.framing) {
            Ok(q) => q,
            Err(e) => return SampleResult::failed(&sample.id, None, &question, None, e.to_string()),
        };
        let mut items = Vec::with_capacity(4);
        let mut warnings = Vec::new();
        for item in &quad.items {
            let ctx = PromptContext::new(item.question.clone()).binary(true);
            match self.answer(&item.image_ref, ctx) {
                Ok(t) => {
                    warnings.extend(t.warnings);
                    let answer = yes_no_of(&t.parsed);
                    items.push(ItemResult {
                        image_ref: item.image_ref.clone(),
                        question: item.question.clone(),
                        expected: item.expected,
                        prompt: t.prompt,
                        raw: t.raw,
                        candidate: t.candidate,
                        parsed: t.parsed,
                        correct: answer != YesNo::Unknown && answer == item.expected,
                        answer,
                    });
                }
                Err(e) => return SampleResult::failed(&sample.id, None, &question, None, e),
            }
        }
        let answers: [String; 4] = std::array::from_fn(|i| items[i].parsed.clone());
        let group = winoground_group_score(&quad, &answers);
        if !group.non_binary.is_empty() {
            warnings.push(format!("NonBinaryAnswer: items {:?}", group.non_binary));
        }
        SampleResult {
            id: sample.id.clone(),
            question_type: None,
            question,
            prompt: String::new(),
            raw: Vec::new(),
            candidate: String::new(),
            parsed: answers.join(" / "),
            normalized: answers.iter().map(|a| normalize(a)).collect::<Vec<_>>().join(" / "),
            score: group.score as f64,
            grader: None,
            caption: None,
            rationale: None,
            tally: None,
            items,
            timing_ms: 0,
            warnings,
            error: None,
        }
    }

    /// Runs every pending sample, appending to `results_path`, then writes
    /// the report next to it when `report_path` is given.
    pub fn run(&self, results_path: &Path, report_path: Option<&Path>) -> Result<RunOutcome, RunError> {
        let dataset = load_dataset(&self.spec.dataset.path, self.spec.dataset.format)?;
        let dataset_digest = file_digest(&self.spec.dataset.path)?;
        let run_digest = self.run_digest(&dataset_digest)?;

        let mut work: Vec<Work> = match &dataset {
            Dataset::Questions(r) => r.iter().map(Work::Question).collect(),
            Dataset::Winoground(s) => s.iter().map(Work::Quad).collect(),
        };
        if let Some(limit) = self.spec.sample_limit {
            work.truncate(limit);
        }
        let wanted: HashSet<&str> = work.iter().map(Work::id).collect();

        let previous = read_results_for_resume(results_path)?;
        let done: HashSet<String> = previous.iter().map(|r| r.id.clone()).collect();
        let pending: Vec<&Work> = work.iter().filter(|w| !done.contains(w.id())).collect();

        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(results_path)
            .map_err(|e| RunError::io(results_path, e))?;
        let chunk = (self.spec.workers * 4).max(1);
        let fresh = exec::with_workers(self.spec.workers, |mode: ExecMode| -> Result<Vec<SampleResult>, RunError> {
            let mut fresh = Vec::with_capacity(pending.len());
            for batch in pending.chunks(chunk) {
                let out = exec::map(mode, batch, |w| self.process(w));
                for r in out {
                    let line = serde_json::to_string(&r).expect("result serializes");
                    writeln!(file, "{line}").map_err(|e| RunError::io(results_path, e))?;
                    fresh.push(r);
                }
                file.flush().map_err(|e| RunError::io(results_path, e))?;
            }
            Ok(fresh)
        })?;

        let processed = fresh.len();
        let mut results: Vec<SampleResult> = previous
            .into_iter()
            .filter(|r| wanted.contains(r.id.as_str()))
            .chain(fresh)
            .collect();
        results.sort_by(|a, b| a.id.cmp(&b.id));
        let config = serde_json::to_value(&self.spec).expect("spec serializes");
        let report = Report::build(self.spec.name.clone(), &results, config, run_digest, dataset_digest);
        if let Some(path) = report_path {
            report.write(path)?;
        }
        Ok(RunOutcome {
            report,
            results,
            processed,
        })
    }
}

/// Reads a results file. A torn final line (from an interrupted run) is
/// dropped and the file rewritten without it; later duplicates of an id
/// win.
pub fn read_results_for_resume(path: &Path) -> Result<Vec<SampleResult>, RunError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    let mut results = Vec::new();
    let mut keep = String::with_capacity(text.len());
    let mut torn = false;
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SampleResult>(line) {
            Ok(r) if line.ends_with('\n') => {
                keep.push_str(line);
                results.push(r);
            }
            _ if i + 1 == lines.len() => torn = true,
            Err(e) => {
                return Err(RunError::Config(format!("{}: line {}: {e}", path.display(), i + 1)));
            }
            Ok(_) => unreachable!(),
        }
    }
    if torn {
        log::warn!("{}: dropping a partial final line", path.display());
        report::write_atomic(path, keep.as_bytes())?;
    }
    Ok(dedup_last_wins(results))
}

fn dedup_last_wins(results: Vec<SampleResult>) -> Vec<SampleResult> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<SampleResult> = Vec::with_capacity(results.len());
    for r in results {
        match index.get(&r.id) {
            Some(&i) => out[i] = r,
            None => {
                index.insert(r.id.clone(), out.len());
                out.push(r);
            }
        }
    }
    out
}

pub fn read_results(path: &Path) -> Result<Vec<SampleResult>, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(line)
                .map_err(|e| RunError::Config(format!("{}: line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(dedup_last_wins(out))
}

pub fn write_results(path: &Path, results: &[SampleResult]) -> Result<(), RunError> {
    let mut buf = String::new();
    for r in results {
        buf.push_str(&serde_json::to_string(r).expect("result serializes"));
        buf.push('\n');
    }
    report::write_atomic(path, buf.as_bytes())
}

/// Re-grades stored outputs without new model calls (other than the parser
/// when `use_llm_parse` is on). Errored samples stay at score 0.
pub fn rescore(results: &[SampleResult], use_llm_parse: bool, parser: Option<&dyn ModelBackend>) -> Vec<SampleResult> {
    let parse = |question: &str, candidate: &str, warnings: &mut Vec<String>| -> String {
        match (use_llm_parse, parser) {
            (true, Some(backend)) => {
                let out = llm_parse(question, candidate, backend);
                warnings.extend(out.warning);
                out.text
            }
            _ => candidate.to_string(),
        }
    };
    results
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if r.error.is_some() {
                return r;
            }
            r.warnings.retain(|w| !w.starts_with("ParseFallback"));
            let mut warnings = Vec::new();
            if r.items.is_empty() {
                r.parsed = parse(&r.question, &r.candidate, &mut warnings);
                r.normalized = normalize(&r.parsed);
                r.score = r.grader.as_ref().map_or(0.0, |g| g.score(&r.parsed));
            } else {
                for item in &mut r.items {
                    item.parsed = parse(&item.question, &item.candidate, &mut warnings);
                    item.answer = yes_no_of(&item.parsed);
                    item.correct = item.answer != YesNo::Unknown && item.answer == item.expected;
                }
                r.parsed = r.items.iter().map(|i| i.parsed.as_str()).collect::<Vec<_>>().join(" / ");
                r.normalized = r.items.iter().map(|i| normalize(&i.parsed)).collect::<Vec<_>>().join(" / ");
                r.score = r.items.iter().all(|i| i.correct) as u8 as f64;
            }
            r.warnings.extend(warnings);
            r
        })
        .collect()
}

/// Builds a runner from a spec file and executes it.
pub fn run_spec_file(
    spec_path: &Path,
    results_path: &Path,
    report_path: Option<&Path>,
) -> Result<RunOutcome, RunError> {
    let spec = ExperimentSpec::from_toml_file(spec_path)?;
    let backends = Backends::from_spec(&spec)?;
    Runner::new(spec, backends)?.run(results_path, report_path)
}

/// Default report location for a results file: `<results>.report.json`.
pub fn default_report_path(results: &Path) -> PathBuf {
    let mut name = results.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".report.json");
    results.with_file_name(name)
}
