use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::LoadedConfig;
use super::manifest::{display_path, write_file, Manifest};
use super::{
    BuildPromptsArgs, CliError, Command, CriticArgs, DetectArgs, ExportArgs, FinetuneArgs, GlobalArgs, IngestArgs, LabelArgs,
    ReplayArgs, ReportArgs, ScoreArgs,
};
use crate::address::Address;
use crate::corpus::{self, pragma_version, ContractRecord, CorpusConfig, CorpusError, ExplorerClient};
use crate::detectors::{
    read_predictions, run_critic, run_detection, write_predictions, DetectorSpec, FinetunedModel, GptLensConfig, Prediction,
    RankWeights, ScoringMode, Strategy, SynonymTable, ThresholdConfig,
};
use crate::evaluation::{evaluate, render_report, write_reports, GoldLabels, MetricsReport, ReportFormat, SupportWeighting};
use crate::gateway::{Fingerprint, Gateway, GatewayConfig, ResponseCache};
use crate::http::{RateLimiter, RetryPolicy};
use crate::jsonl;
use crate::parallel::{self, Execution};
use crate::prompts::{build_prompts, stratified_cap, write_prompts, PromptRecord, Rendering, SubsetSpec};
use crate::taxonomy::{label_corpus, load_tool_report, LabelSet, ReportMode, TaxonomyConfig, Tool};

struct Ctx {
    loaded: LoadedConfig,
    mode: Execution,
}

#[derive(Debug, Serialize, Deserialize)]
struct GoldEntry {
    address: Address,
    labels: Option<LabelSet>,
}

#[derive(Debug, Serialize)]
struct ErrorEntry {
    address: Address,
    error: String,
}

fn set(snapshot: &mut serde_json::Value, key: &str, value: serde_json::Value) {
    if let Some(obj) = snapshot.as_object_mut() {
        obj.insert(key.to_string(), value);
    }
}

impl Ctx {
    fn new(g: &GlobalArgs) -> Result<Self, CliError> {
        let mut loaded = LoadedConfig::discover(g.config.as_deref())?;
        let (cfg, snap) = (&mut loaded.config, &mut loaded.snapshot);
        if let Some(out) = &g.out {
            cfg.out = out.clone();
            set(snap, "out", json!(out));
        }
        if let Some(seed) = g.seed {
            cfg.seed = seed;
            set(snap, "seed", json!(seed));
        }
        if let Some(w) = g.workers {
            if w == 0 {
                return Err(CliError::usage("--workers must be at least 1"));
            }
            cfg.workers = w;
            set(snap, "workers", json!(w));
        }
        if g.offline {
            cfg.offline = true;
            set(snap, "offline", json!(true));
        }
        if g.strict {
            cfg.strict = true;
            set(snap, "strict", json!(true));
        }
        if let Some(id) = &g.run_id {
            cfg.run_id = Some(id.clone());
            set(snap, "run_id", json!(id));
        }
        cfg.check_paths()?;
        let mode = if g.sequential { Execution::Sequential } else { Execution::Parallel };
        Ok(Ctx { loaded, mode })
    }

    fn cfg(&self) -> &super::RunConfig {
        &self.loaded.config
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.cfg().out.join(rel)
    }

    fn manifest(&self, command: &str) -> Manifest {
        Manifest::new(command, self.cfg().seed, self.loaded.snapshot.clone())
    }

    fn rel(&self, p: &Path) -> String {
        display_path(&self.cfg().out, p)
    }

    fn scoring(&self) -> ScoringMode {
        if self.cfg().strict {
            ScoringMode::Strict
        } else {
            ScoringMode::Lenient
        }
    }

    fn taxonomy(&self, flag: Option<&Path>) -> Result<TaxonomyConfig, CliError> {
        match flag.or(self.cfg().taxonomy.path.as_deref()) {
            Some(p) => Ok(TaxonomyConfig::load(p)?),
            None => Ok(TaxonomyConfig::default()),
        }
    }

    fn synonyms(&self) -> Result<SynonymTable, CliError> {
        let mapping = self.taxonomy(None)?.swc;
        match &self.cfg().detectors.synonyms {
            Some(p) => Ok(SynonymTable::load(p, mapping)?),
            None => Ok(SynonymTable::from_toml(include_str!("../../data/synonyms.toml"), mapping)?),
        }
    }

    fn retry(&self) -> RetryPolicy {
        let h = &self.cfg().http;
        RetryPolicy {
            max_attempts: h.max_attempts.max(1),
            base_delay: Duration::from_millis(h.base_delay_ms),
            factor: 2.0,
            max_delay: Duration::from_millis(h.max_delay_ms.max(h.base_delay_ms)),
        }
    }

    fn gateway_config(&self, offline: bool) -> GatewayConfig {
        let cfg = self.cfg();
        GatewayConfig {
            endpoints: cfg.endpoints.clone().into_iter().collect(),
            retry: self.retry(),
            timeout: Duration::from_secs(cfg.http.timeout_secs.max(1)),
            offline,
            run_id: cfg.run_id(),
        }
    }

    fn gateway(&self) -> Result<Gateway, CliError> {
        let cache = ResponseCache::open(&self.cfg().cache_path())?;
        Ok(Gateway::new(self.gateway_config(self.cfg().offline), cache))
    }

    /// Offline gateway over the existing cache; nothing is written.
    fn replay_gateway(&self) -> Result<Gateway, CliError> {
        let cache = ResponseCache::in_memory();
        let path = self.cfg().cache_path();
        if path.exists() {
            cache.load(&path)?;
        }
        Ok(Gateway::new(self.gateway_config(true), cache))
    }

    fn pooled<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        parallel::with_workers(self.cfg().workers, f)
    }
}

pub(super) fn dispatch(cli: super::Cli) -> Result<(), CliError> {
    let ctx = Ctx::new(&cli.global)?;
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Label(a) => label(&ctx, a),
        Command::BuildPrompts(a) => build(&ctx, a),
        Command::Export(a) => export(&ctx, a),
        Command::Finetune(a) => finetune(&ctx, a),
        Command::Detect(a) => detect(&ctx, a),
        Command::Critic(a) => critic(&ctx, a),
        Command::Score(a) => score(&ctx, a),
        Command::Report(a) => report(&ctx, a),
        Command::Replay(a) => replay(&ctx, a),
    }
}

fn read_addresses(path: &Path) -> Result<Vec<Address>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let a: Address = line
            .parse()
            .map_err(|e| CliError::pipeline(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if seen.insert(a.clone()) {
            out.push(a);
        } else {
            log::warn!("{}:{}: duplicate address {a} ignored", path.display(), i + 1);
        }
    }
    Ok(out)
}

fn read_sources_dir(dir: &Path) -> Result<Vec<ContractRecord>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "sol"))
        .collect();
    files.sort();
    let mut records = Vec::with_capacity(files.len());
    for p in files {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let address: Address = stem
            .parse()
            .map_err(|e| CliError::pipeline(format!("{}: file name is not an address: {e}", p.display())))?;
        let source = std::fs::read_to_string(&p).map_err(|e| CliError::pipeline(format!("{}: {e}", p.display())))?;
        let version = pragma_version(&source).unwrap_or_default();
        records.push(ContractRecord::from_raw(address, source, version));
    }
    records.sort_by(|a, b| a.address.cmp(&b.address));
    Ok(records)
}

fn ingest(ctx: &Ctx, a: IngestArgs) -> Result<(), CliError> {
    let cfg = ctx.cfg();
    let corpus_cfg = CorpusConfig {
        max_tokens: a.max_tokens.unwrap_or(cfg.corpus.max_tokens),
        explorer_base_url: cfg.corpus.explorer_base_url.clone(),
        api_key_env_var: cfg.corpus.api_key_env.clone(),
        chain_id: (cfg.corpus.chain_id != 0).then_some(cfg.corpus.chain_id),
    };
    let mut manifest = ctx.manifest("ingest");
    let mut errors: Vec<ErrorEntry> = Vec::new();
    let sources_dir = a.sources_dir.or_else(|| cfg.corpus.sources_dir.clone());
    let mut records = if let Some(dir) = sources_dir {
        manifest.input(&cfg.out, &dir)?;
        read_sources_dir(&dir)?
    } else {
        let file = a
            .addresses_file
            .or_else(|| cfg.corpus.addresses_file.clone())
            .ok_or_else(|| CliError::usage("ingest needs --addresses-file or --sources-dir"))?;
        manifest.input(&cfg.out, &file)?;
        let addresses = read_addresses(&file)?;
        if cfg.offline {
            return Err(CliError::pipeline("ingest from the explorer is not possible with --offline"));
        }
        let limiter = RateLimiter::new(cfg.corpus.requests_per_second.max(0.01), cfg.corpus.requests_per_second.max(1.0));
        let client = ExplorerClient::from_env(corpus_cfg.clone(), ctx.retry(), limiter).map_err(|e| match e {
            CorpusError::MissingApiKey(v) => CliError::config(format!("explorer API key: environment variable {v} is not set")),
            other => other.into(),
        })?;
        let mut out = Vec::new();
        for r in client.fetch_all(&addresses, cfg.workers) {
            match r {
                Ok(rec) => out.push(rec),
                Err(CorpusError::Unverified(address)) => {
                    log::warn!("{address}: no verified source, skipped");
                    errors.push(ErrorEntry { address: address.clone(), error: CorpusError::Unverified(address).to_string() });
                }
                Err(e) => return Err(e.into()),
            }
        }
        out
    };

    let failed = corpus::clean_all(ctx.mode, &mut records);
    let failed_set: BTreeSet<&Address> = failed.iter().map(|(a, _)| a).collect();
    records.retain(|r| !failed_set.contains(&r.address));
    for (address, e) in &failed {
        log::warn!("{address}: {e}, skipped");
        errors.push(ErrorEntry { address: address.clone(), error: e.to_string() });
    }
    errors.sort_by(|x, y| x.address.cmp(&y.address));
    let (kept, excluded) = corpus::filter_by_budget(records, &corpus_cfg);

    let contracts = ctx.out("corpus/contracts.jsonl");
    let over = ctx.out("corpus/excluded.jsonl");
    let errs = ctx.out("corpus/errors.jsonl");
    corpus::write_records(&contracts, &kept)?;
    corpus::write_records(&over, &excluded)?;
    jsonl::write(&errs, &errors)?;
    for p in [&contracts, &over, &errs] {
        manifest.output(&cfg.out, p)?;
    }
    manifest.details = json!({
        "max_tokens": corpus_cfg.max_tokens,
        "kept": kept.len(),
        "over_budget": excluded.len(),
        "failed": errors.len(),
    });
    manifest.write(&ctx.out("corpus/manifest.json"))?;
    println!(
        "{} contracts kept, {} over the {}-token budget, {} failed",
        kept.len(),
        excluded.len(),
        corpus_cfg.max_tokens,
        errors.len()
    );
    Ok(())
}

fn parse_report_flag(s: &str) -> Result<(String, PathBuf), CliError> {
    let (tool, path) = s.split_once('=').ok_or_else(|| CliError::usage(format!("--report `{s}`: expected TOOL=PATH")))?;
    let p = PathBuf::from(path);
    if !p.exists() {
        return Err(CliError::config(format!("--report {tool}: {} does not exist", p.display())));
    }
    Ok((tool.to_string(), p))
}

fn label(ctx: &Ctx, a: LabelArgs) -> Result<(), CliError> {
    let cfg = ctx.cfg();
    let input = a.input.unwrap_or_else(|| ctx.out("corpus/contracts.jsonl"));
    let taxonomy = ctx.taxonomy(a.taxonomy.as_deref())?;
    let reports: BTreeMap<String, PathBuf> = if a.reports.is_empty() {
        cfg.taxonomy.reports.clone()
    } else {
        a.reports.iter().map(|s| parse_report_flag(s)).collect::<Result<_, _>>()?
    };
    if reports.is_empty() {
        return Err(CliError::usage("label needs tool reports (--report TOOL=PATH or [taxonomy.reports])"));
    }
    let mode = if cfg.strict { ReportMode::Strict } else { ReportMode::Lenient };

    let mut manifest = ctx.manifest("label");
    manifest.input(&cfg.out, &input)?;
    if let Some(p) = a.taxonomy.as_deref().or(cfg.taxonomy.path.as_deref()) {
        manifest.input(&cfg.out, p)?;
    }
    let mut parsed: Vec<(Tool, PathBuf)> = Vec::new();
    for (name, path) in &reports {
        let tool: Tool = name.parse().map_err(|e: crate::taxonomy::TaxonomyError| CliError::config(e.to_string()))?;
        parsed.push((tool, path.clone()));
    }
    parsed.sort();
    let mut findings = Vec::new();
    let mut unmapped = BTreeMap::new();
    for (tool, path) in &parsed {
        manifest.input(&cfg.out, path)?;
        let r = load_tool_report(*tool, path, &taxonomy, mode)?;
        findings.extend(r.findings);
        if !r.unmapped.is_empty() {
            unmapped.insert(tool.to_string(), r.unmapped);
        }
    }

    let mut records = corpus::read_records(&input)?;
    let summary = label_corpus(ctx.mode, &mut records, &findings, &taxonomy.vote);
    let gold: Vec<GoldEntry> = records.iter().map(|r| GoldEntry { address: r.address.clone(), labels: r.labels }).collect();

    let labelled = ctx.out("labels/contracts.jsonl");
    let gold_path = ctx.out("labels/gold.jsonl");
    let summary_path = ctx.out("labels/summary.txt");
    corpus::write_records(&labelled, &records)?;
    jsonl::write(&gold_path, &gold)?;
    write_file(&summary_path, summary.to_string().as_bytes())?;
    for p in [&labelled, &gold_path, &summary_path] {
        manifest.output(&cfg.out, p)?;
    }
    manifest.details = json!({ "findings": findings.len(), "unmapped_detector_ids": unmapped });
    manifest.write(&ctx.out("labels/manifest.json"))?;
    print!("{summary}");
    Ok(())
}

fn labelled_input(ctx: &Ctx, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| {
        let labelled = ctx.out("labels/contracts.jsonl");
        if labelled.exists() {
            labelled
        } else {
            ctx.out("corpus/contracts.jsonl")
        }
    })
}

fn build(ctx: &Ctx, a: BuildPromptsArgs) -> Result<(), CliError> {
    let cfg = ctx.cfg();
    let input = a.input.unwrap_or_else(|| ctx.out("labels/contracts.jsonl"));
    let mapping = ctx.taxonomy(None)?.swc;
    let records = corpus::read_records(&input)?;
    let spec = if a.detection_only { SubsetSpec::detection_only(None, cfg.seed) } else { SubsetSpec::full(None, cfg.seed) };
    let prompts = build_prompts(&records, &mapping, &spec)?;
    let path = ctx.out("prompts/prompts.jsonl");
    jsonl::write(&path, &prompts)?;
    let mut manifest = ctx.manifest("build-prompts");
    manifest.input(&cfg.out, &input)?;
    manifest.output(&cfg.out, &path)?;
    manifest.details = json!({ "prompts": prompts.len(), "generation": spec.generation });
    manifest.write(&ctx.out("prompts/manifest.json"))?;
    println!("{} prompts from {} contracts", prompts.len(), records.len());
    Ok(())
}

fn rendering_name(r: Rendering) -> &'static str {
    match r {
        Rendering::AlpacaInstruct => "alpaca",
        Rendering::ChatMessages => "chat",
    }
}

fn export(ctx: &Ctx, a: ExportArgs) -> Result<(), CliError> {
    let cfg = ctx.cfg();
    let rendering: Rendering = a.rendering.parse().map_err(CliError::usage)?;
    let input = a.input.unwrap_or_else(|| ctx.out("prompts/prompts.jsonl"));
    let mut prompts: Vec<PromptRecord> = jsonl::read(&input)?;
    if let Some(cap) = a.cap {
        prompts = stratified_cap(prompts, cap, cfg.seed);
    }
    let name = rendering_name(rendering);
    let path = ctx.out(&format!("prompts/dataset-{name}.jsonl"));
    let mut dataset = write_prompts(&prompts, rendering, &path, ctx.mode)?;
    dataset.seed = cfg.seed;
    dataset.cap = a.cap;
    let mut manifest = ctx.manifest("export");
    manifest.input(&cfg.out, &input)?;
    manifest.output(&cfg.out, &path)?;
    manifest.details = serde_json::to_value(&dataset).expect("in-memory serialization");
    manifest.write(&ctx.out(&format!("prompts/dataset-{name}.manifest.json")))?;
    println!("{} records, {} tokens -> {}", dataset.total_records, dataset.token_total, path.display());
    Ok(())
}

fn finetune(ctx: &Ctx, a: FinetuneArgs) -> Result<(), CliError> {
    let cfg = ctx.cfg();
    let dataset = a.dataset.unwrap_or_else(|| ctx.out("prompts/dataset-chat.jsonl"));
    let gw = ctx.gateway()?;
    let mut job = gw.create_finetune(&dataset, &a.base_model, a.epochs)?;
    if a.wait {
        job = gw.wait_for(job, Duration::from_secs(a.poll_secs), a.max_polls)?;
    }
    let path = ctx.out(&format!("runs/finetune/{}.json", file_label(&job.job_id)));
    let text = serde_json::to_string_pretty(&job).expect("in-memory serialization");
    write_file(&path, format!("{text}\n").as_bytes())?;
    let mut manifest = ctx.manifest("finetune");
    manifest.input(&cfg.out, &dataset)?;
    manifest.output(&cfg.out, &path)?;
    manifest.details = json!({ "base_model": a.base_model, "epochs": a.epochs });
    manifest.write(&ctx.out(&format!("runs/finetune/{}.manifest.json", file_label(&job.job_id))))?;
    println!("{text}");
    Ok(())
}

/// File-name-safe form of a model or job label.
fn file_label(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' }).collect()
}

fn detector_spec(ctx: &Ctx, a: &DetectArgs) -> Result<DetectorSpec, CliError> {
    let cfg = ctx.cfg();
    let strategy: Strategy = a.strategy.parse().map_err(CliError::usage)?;
    let model = || a.model.clone().ok_or_else(|| CliError::usage(format!("--strategy {strategy} needs --model")));
    Ok(match strategy {
        Strategy::Random => DetectorSpec::Random { seed: cfg.seed },
        Strategy::Finetuned => {
            let name = model()?;
            let rendering = match &a.rendering {
                Some(r) => r.parse().map_err(CliError::usage)?,
                None => cfg.models.get(&name).and_then(|m| m.rendering).unwrap_or(Rendering::ChatMessages),
            };
            DetectorSpec::Finetuned(FinetunedModel { name, rendering })
        }
        Strategy::ZeroShot => DetectorSpec::ZeroShot { model: model()? },
        Strategy::ZeroShotCritic => {
            let m = model()?;
            DetectorSpec::ZeroShotCritic { critic: a.critic_model.clone().unwrap_or_else(|| m.clone()), model: m }
        }
        Strategy::GptLens => {
            let auditor = model()?;
            let [c, s, p] = cfg.detectors.weights;
            let threshold: ThresholdConfig = a
                .threshold
                .as_deref()
                .unwrap_or(&cfg.detectors.threshold)
                .parse()
                .map_err(|e: crate::detectors::DetectorError| CliError::usage(e.to_string()))?;
            DetectorSpec::GptLens(GptLensConfig {
                critic: a.critic_model.clone().unwrap_or_else(|| auditor.clone()),
                auditor,
                top_k: a.top_k.unwrap_or(cfg.detectors.top_k).max(1),
                weights: RankWeights::new(c, s, p).map_err(|e| CliError::config(format!("detectors.weights: {e}")))?,
                threshold,
            })
        }
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectDetails {
    spec: DetectorSpec,
    scoring: ScoringMode,
    input: String,
    predictions: String,
    flagged: usize,
}

fn detect(ctx: &Ctx, a: DetectArgs) -> Result<(), CliError> {
    let cfg = ctx.cfg();
    let spec = detector_spec(ctx, &a)?;
    let input = labelled_input(ctx, a.input.clone());
    let records = corpus::read_records(&input)?;
    let synonyms = ctx.synonyms()?;
    let gateway = match spec {
        DetectorSpec::Random { .. } => None,
        _ => Some(ctx.gateway()?),
    };
    let preds = ctx.pooled(|| run_detection(&spec, gateway.as_ref(), &records, &synonyms, ctx.scoring(), ctx.mode))?;
    let stem = format!("predictions-{}-{}", spec.strategy(), file_label(&spec.model_label()));
    let dir = ctx.out(&format!("runs/{}", file_label(&cfg.run_id())));
    let path = dir.join(format!("{stem}.jsonl"));
    write_predictions(&path, &preds)?;

    let flagged = preds.iter().filter(|p| !p.flags.is_empty()).count();
    let mut manifest = ctx.manifest("detect");
    manifest.input(&cfg.out, &input)?;
    manifest.output(&cfg.out, &path)?;
    manifest.details = serde_json::to_value(DetectDetails {
        spec,
        scoring: ctx.scoring(),
        input: ctx.rel(&input),
        predictions: ctx.rel(&path),
        flagged,
    })
    .expect("in-memory serialization");
    manifest.write(&dir.join(format!("{stem}.manifest.json")))?;
    if let Some(g) = &gateway {
        log::info!("{} HTTP attempts", g.attempts());
    }
    println!("{} predictions ({flagged} flagged) -> {}", preds.len(), path.display());
    Ok(())
}

fn critic(ctx: &Ctx, a: CriticArgs) -> Result<(), CliError> {
    let cfg = ctx.cfg();
    let base = read_predictions(&a.preds)?;
    let gw = ctx.gateway()?;
    let preds = ctx.pooled(|| run_critic(&gw, &a.model, &base, ctx.scoring(), ctx.mode))?;
    let label = preds.first().and_then(|p| p.model.clone()).unwrap_or_else(|| a.model.clone());
    let stem = format!("predictions-{}-{}", Strategy::ZeroShotCritic, file_label(&label));
    let dir = ctx.out(&format!("runs/{}", file_label(&cfg.run_id())));
    let path = dir.join(format!("{stem}.jsonl"));
    write_predictions(&path, &preds)?;
    let mut manifest = ctx.manifest("critic");
    manifest.input(&cfg.out, &a.preds)?;
    manifest.output(&cfg.out, &path)?;
    manifest.details = json!({ "critic": a.model, "scoring": ctx.scoring() });
    manifest.write(&dir.join(format!("{stem}.manifest.json")))?;
    println!("{} predictions -> {}", preds.len(), path.display());
    Ok(())
}

fn read_gold(path: &Path) -> Result<GoldLabels, CliError> {
    let entries: Vec<GoldEntry> = jsonl::read(path)?;
    let mut gold = GoldLabels::new();
    for e in entries {
        let labels = e
            .labels
            .ok_or_else(|| CliError::pipeline(format!("{}: {} has no gold labels", path.display(), e.address)))?;
        gold.insert(e.address, labels);
    }
    Ok(gold)
}

fn score(ctx: &Ctx, a: ScoreArgs) -> Result<(), CliError> {
    let cfg = ctx.cfg();
    let weighting: SupportWeighting = a.weighting.parse().map_err(CliError::usage)?;
    let gold_path = a.gold.unwrap_or_else(|| ctx.out("labels/gold.jsonl"));
    let gold = read_gold(&gold_path)?;
    let mut manifest = ctx.manifest("score");
    manifest.input(&cfg.out, &gold_path)?;
    let mut reports = Vec::new();
    for p in &a.preds {
        manifest.input(&cfg.out, p)?;
        let preds: Vec<Prediction> = read_predictions(p)?;
        reports.push(evaluate(&preds, &gold, weighting)?);
    }
    let dir = a.report_dir.unwrap_or_else(|| ctx.out("reports"));
    for p in write_reports(&reports, &dir)? {
        manifest.output(&cfg.out, &p)?;
    }
    manifest.details = json!({ "weighting": weighting });
    manifest.write(&dir.join("manifest.json"))?;
    print!("{}", render_report(&reports, ReportFormat::Text));
    Ok(())
}

fn report(ctx: &Ctx, a: ReportArgs) -> Result<(), CliError> {
    let format: ReportFormat = a.format.parse().map_err(CliError::usage)?;
    let mut reports: Vec<MetricsReport> = Vec::new();
    for p in &a.metrics {
        reports.extend(jsonl::read::<MetricsReport>(p)?);
    }
    if let Some(dir) = &a.report_dir {
        let mut manifest = ctx.manifest("report");
        for p in &a.metrics {
            manifest.input(&ctx.cfg().out, p)?;
        }
        for p in write_reports(&reports, dir)? {
            manifest.output(&ctx.cfg().out, &p)?;
        }
        manifest.write(&dir.join("manifest.json"))?;
    }
    print!("{}", render_report(&reports, format));
    Ok(())
}

fn replay(ctx: &Ctx, a: ReplayArgs) -> Result<(), CliError> {
    if let Some(fp) = a.fingerprint {
        let gw = ctx.replay_gateway()?;
        println!("{}", gw.replay(&Fingerprint(fp))?);
        return Ok(());
    }
    let path = a.manifest.ok_or_else(|| CliError::usage("replay needs --fingerprint or --manifest"))?;
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let manifest: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if manifest["command"] != "detect" {
        return Err(CliError::config(format!("{}: not a detect manifest", path.display())));
    }
    let details: DetectDetails = serde_json::from_value(manifest["details"].clone())
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let resolve = |p: &str| {
        let p = PathBuf::from(p);
        if p.is_relative() { ctx.cfg().out.join(p) } else { p }
    };
    let records = corpus::read_records(&resolve(&details.input))?;
    let synonyms = ctx.synonyms()?;
    let gateway = match details.spec {
        DetectorSpec::Random { .. } => None,
        _ => Some(ctx.replay_gateway()?),
    };
    let preds = ctx.pooled(|| run_detection(&details.spec, gateway.as_ref(), &records, &synonyms, details.scoring, ctx.mode))?;
    let replayed = jsonl::to_string(&preds);
    let stored_path = resolve(&details.predictions);
    let stored = std::fs::read_to_string(&stored_path).map_err(|e| CliError::pipeline(format!("{}: {e}", stored_path.display())))?;
    if replayed != stored {
        return Err(CliError::pipeline(format!("replay of {} differs from the stored predictions", stored_path.display())));
    }
    println!("replay matches {} ({} predictions)", stored_path.display(), preds.len());
    Ok(())
}
