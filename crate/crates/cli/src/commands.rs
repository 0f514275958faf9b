use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use honeycomb_core::agent::{write_trace, Ablation};
use honeycomb_core::config::{Config, ProviderSpec};
use honeycomb_core::eval::{ablation_report, load_dataset, run_eval, Dataset, EvalReport};
use honeycomb_core::itc::{
    apply_review, decompose_function, export_atoms, generate_function, merge_atoms, parse_review, pending_review,
    read_jsonl, split_dataset, write_jsonl, AtomicFunction, AuditEvent, AuditLog, GeneratedFunction, ATOMS_FILE,
};
use honeycomb_core::knowledge_base::{EntryDraft, EntryId, KbManifest, KbRecord, KnowledgeBase, SourceKind};
use honeycomb_core::llm::{GenerationSettings, LlmGateway, TemplateSet};
use honeycomb_core::session::{build_provider, build_registry, Session};
use serde_json::Value;

use crate::{EvalCommand, GlobalOpts, ItcCommand, KbCommand, ToolsCommand};

/// Config file plus flag and environment overrides.
struct Resolved {
    cfg: Config,
    provider: ProviderSpec,
    ablation: Ablation,
}

fn resolve(opts: &GlobalOpts) -> Result<Resolved> {
    let mut cfg = match &opts.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(kb) = &opts.kb {
        cfg.kb = Some(kb.clone());
    }
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(a) = &opts.ablation {
        cfg.ablation = Some(a.clone());
    }
    let provider = match &opts.provider {
        Some(p) => p.parse()?,
        None => cfg.provider()?,
    };
    let ablation = cfg.ablation()?;
    Ok(Resolved { cfg, provider, ablation })
}

fn kb_dir(r: &Resolved) -> Result<&Path> {
    r.cfg
        .kb
        .as_deref()
        .context("no knowledge base configured (use --kb, HONEYCOMB_KB or `kb` in the config file)")
}

/// The configured store, or an empty one when none is configured.
fn load_kb(r: &Resolved) -> Result<KnowledgeBase> {
    match &r.cfg.kb {
        Some(dir) if dir.exists() => Ok(KnowledgeBase::load(dir)?),
        Some(dir) => bail!("knowledge base {} does not exist", dir.display()),
        None => Ok(KnowledgeBase::default()),
    }
}

fn session(r: &Resolved) -> Result<Session> {
    Ok(Session::build(&r.cfg, &r.provider, load_kb(r)?)?)
}

fn gateway(r: &Resolved) -> Result<LlmGateway> {
    let templates = match &r.cfg.llm.templates_dir {
        Some(dir) => TemplateSet::with_overrides(dir)?,
        None => TemplateSet::default(),
    };
    Ok(LlmGateway::new(build_provider(&r.provider, r.cfg.llm.record_dir.as_ref())?)
        .with_templates(templates)
        .with_settings(GenerationSettings {
            temperature: r.cfg.llm.temperature,
            max_output_tokens: r.cfg.llm.max_output_tokens,
        }))
}

fn source_kind(s: &str) -> Result<SourceKind> {
    s.parse::<SourceKind>().map_err(anyhow::Error::msg)
}

pub fn kb(opts: &GlobalOpts, cmd: KbCommand) -> Result<()> {
    if let KbCommand::Stats { manifest: Some(path) } = &cmd {
        let manifest = KbManifest::load(path)?;
        print!("{}", manifest.stats());
        if !manifest.is_consistent() {
            bail!(
                "manifest declares {} entries but its sources sum to {}",
                manifest.total,
                manifest.stats().total
            );
        }
        return Ok(());
    }
    let r = resolve(opts)?;
    let dir = kb_dir(&r)?;
    let mut kb = KnowledgeBase::open_or_default(dir)?;
    match cmd {
        KbCommand::Import { file, source_kind: kind } => {
            let kind = kind.as_deref().map(source_kind).transpose()?;
            let report = kb.import_corpus(&file, kind)?;
            for d in &report.diagnostics {
                eprintln!("{}:{}: skipped: {}", file.display(), d.line, d.message);
            }
            kb.save(dir)?;
            println!("imported {} entries ({} skipped)", report.imported, report.diagnostics.len());
        }
        KbCommand::Put {
            key,
            value,
            source_kind: kind,
            category,
            id,
        } => {
            let mut draft = EntryDraft::new(key, value, source_kind(&kind)?, &category);
            if let Some(id) = id {
                draft = draft.with_id(id);
            }
            let id = kb.put_entry(draft)?;
            kb.save(dir)?;
            println!("{id}");
        }
        KbCommand::Get { id } => {
            let entry = kb.get_entry(&EntryId(id.clone())).with_context(|| format!("no entry `{id}`"))?;
            println!("{}", serde_json::to_string(&KbRecord::from(entry))?);
        }
        KbCommand::Delete { id } => {
            if !kb.delete_entry(&EntryId(id.clone())) {
                bail!("no entry `{id}`");
            }
            kb.save(dir)?;
        }
        KbCommand::Stats { .. } => print!("{}", kb.stats()),
    }
    Ok(())
}

pub fn ask(opts: &GlobalOpts, query: &str, trace_out: Option<&Path>) -> Result<()> {
    let r = resolve(opts)?;
    let session = session(&r)?;
    let answer = session.agent().answer(query, r.ablation)?;
    if let Some(path) = trace_out {
        fs::write(path, write_trace(&answer)).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{}", answer.final_text);
    Ok(())
}

fn warn_invalid(dataset: &Dataset) {
    for bad in &dataset.invalid {
        eprintln!(
            "{}: line {}{}: skipped: {}",
            dataset.name,
            bad.line,
            bad.id.as_deref().map(|id| format!(" ({id})")).unwrap_or_default(),
            bad.message
        );
    }
}

pub fn eval(opts: &GlobalOpts, cmd: EvalCommand) -> Result<()> {
    match cmd {
        EvalCommand::Run { dataset, out } => {
            let r = resolve(opts)?;
            let data = load_dataset(&dataset)?;
            warn_invalid(&data);
            let session = session(&r)?;
            let (report, _) = run_eval(
                &session.agent(),
                &data.name,
                &data.records,
                r.ablation,
                r.cfg.grading,
                out.as_deref(),
            )?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        EvalCommand::Ablation { summaries, json } => {
            let reports = summaries
                .iter()
                .map(|p| EvalReport::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            let table = ablation_report(&reports)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&table)?);
            } else {
                print!("{table}");
            }
        }
    }
    Ok(())
}

pub fn tools(opts: &GlobalOpts, cmd: ToolsCommand) -> Result<()> {
    let r = resolve(opts)?;
    let registry = build_registry(&r.cfg)?;
    match cmd {
        ToolsCommand::List => {
            for spec in registry.specs() {
                let kind = serde_json::to_value(spec.kind)?;
                println!("{}\t{}\t{}", spec.name, kind.as_str().unwrap_or_default(), spec.signature());
            }
        }
        ToolsCommand::Describe { name } => println!("{}", registry.describe_tool(&name)?),
        ToolsCommand::Invoke { name, args } => {
            let args: Value = serde_json::from_str(&args).context("tool arguments must be JSON")?;
            let result = registry.invoke_tool(&name, &args);
            if !result.is_ok() {
                bail!("{}", result.render());
            }
            println!("{}", result.render());
        }
    }
    Ok(())
}

fn read_functions(path: &Path) -> Result<Vec<GeneratedFunction>> {
    Ok(read_jsonl(path)?)
}

pub fn itc(opts: &GlobalOpts, cmd: ItcCommand) -> Result<()> {
    match cmd {
        ItcCommand::Split { questions, ratio, out } => {
            let r = resolve(opts)?;
            let items: Vec<Value> = read_jsonl(&questions)?;
            let split = split_dataset(&items, ratio, r.cfg.seed)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write_jsonl(&out.join("train.jsonl"), &split.d_train)?;
            write_jsonl(&out.join("test.jsonl"), &split.d_test)?;
            println!("train {} test {}", split.d_train.len(), split.d_test.len());
        }
        ItcCommand::Generate {
            questions,
            functions,
            review_sheet,
        } => {
            let r = resolve(opts)?;
            let data = load_dataset(&questions)?;
            warn_invalid(&data);
            let gateway = gateway(&r)?;
            let mut generated = read_functions(&functions)?;
            let mut failed = 0;
            for q in &data.records {
                if generated.iter().any(|f| f.question_id == q.id) {
                    continue;
                }
                match generate_function(&gateway, &q.id, &q.text) {
                    Ok(f) => generated.push(f),
                    Err(e) => {
                        failed += 1;
                        eprintln!("{}: {e}", q.id);
                    }
                }
            }
            write_jsonl(&functions, &generated)?;
            if let Some(sheet) = review_sheet {
                write_jsonl(&sheet, &pending_review(&generated))?;
            }
            println!("{} functions ({failed} failed)", generated.len());
            if failed > 0 {
                bail!("{failed} questions produced no function");
            }
        }
        ItcCommand::Review { functions, verdicts } => {
            let mut fns = read_functions(&functions)?;
            let text = fs::read_to_string(&verdicts).with_context(|| format!("reading {}", verdicts.display()))?;
            let outcome = apply_review(&mut fns, &parse_review(&text)?);
            write_jsonl(&functions, &fns)?;
            println!("{}", serde_json::to_string_pretty(&outcome)?);
        }
        ItcCommand::Decompose { functions, out, audit } => {
            let r = resolve(opts)?;
            let fns = read_functions(&functions)?;
            let gateway = gateway(&r)?;
            let previous: Vec<AuditEvent> = read_jsonl(&audit)?;
            let mut log = AuditLog { events: previous.clone() };
            let prior = AuditLog { events: previous };
            let done = prior.decomposed_ids();
            let mut atoms: Vec<AtomicFunction> = Vec::new();
            let mut failed = 0;
            for f in fns.iter().filter(|f| !done.contains(&f.function_id.as_str())) {
                match decompose_function(&gateway, f, &mut log) {
                    Ok(a) => atoms.extend(a),
                    Err(honeycomb_core::itc::ItcError::NotApproved(_)) => {}
                    Err(e) => {
                        failed += 1;
                        eprintln!("{}: {e}", f.function_id);
                    }
                }
            }
            write_jsonl(&out, &atoms)?;
            write_jsonl(&audit, &log.events)?;
            println!("{} atomic functions from {} attempts", atoms.len(), log.events.len() - prior.events.len());
            if failed > 0 {
                bail!("{failed} decompositions failed");
            }
        }
        ItcCommand::Merge { new, atoms_dir } => {
            let existing: Vec<AtomicFunction> = read_jsonl(&atoms_dir.join(ATOMS_FILE))?;
            let incoming: Vec<AtomicFunction> = read_jsonl(&new)?;
            let merged = merge_atoms(&existing, &incoming);
            let (registry, _) = export_atoms(&merged, &atoms_dir)?;
            println!("{} atomic functions -> {}", merged.len(), registry.display());
        }
    }
    Ok(())
}
