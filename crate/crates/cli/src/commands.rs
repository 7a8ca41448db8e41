use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use docspan::config::RunConfig;
use docspan::datasets::{
    gen_synthetic, load_cord, load_jsonl, save_jsonl, CordOptions, Dataset, Split, SplitSizes, SynthConfig,
};
use docspan::doc_model::{Document, Vocab};
use docspan::eval::{compare_report, entity_f1, DocEntities, EvalReport};
use docspan::model::{Model, ModelKind};
use docspan::recursive::{pretrain_csv, pretrain_spans};
use docspan::train::fit;
use docspan::visualize::{render_svg, FieldChain};
use docspan::Execution;
use serde_json::json;

use crate::manifest;
use crate::{DecodeArgs, EvalArgs, Failure, GenDataArgs, ImportCordArgs, RunArgs, VisualizeArgs, EXIT_DATA, EXIT_THRESHOLD};

type CmdResult = Result<(), Failure>;

pub fn write_file(path: &Path, contents: &str) -> CmdResult {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| data_failure(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| data_failure(path, e))
}

fn ensure_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| data_failure(dir, e))
}

fn data_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    }
}

fn to_json(v: &impl serde::Serialize) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

fn load_dataset(path: &Path, max_seq_len: usize) -> Result<Dataset, Failure> {
    let mut ds = load_jsonl(path)?;
    ds.truncate(max_seq_len);
    log::info!("{}: {} documents, {} entities", path.display(), ds.len(), ds.num_entities());
    Ok(ds)
}

fn load_checkpoint(path: &Path) -> Result<Model, Failure> {
    let model = Model::load(path)?;
    log::info!("{}: {} model, {} fields", path.display(), model.kind(), model.fields().len());
    Ok(model)
}

/// Config file plus command-line overrides, validated.
fn run_config(args: &RunArgs) -> Result<(RunConfig, PathBuf), Failure> {
    let mut cfg = RunConfig::load(&args.config).map_err(|e| Failure::usage(e.to_string()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(kind) = args.model {
        cfg.model.kind = kind;
    }
    if let Some(t) = args.threshold_micro {
        cfg.thresholds.micro = Some(t);
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Failure::usage("no output directory (pass --out or set `out` in the config)"))?;
    ensure_dir(&out)?;
    Ok((cfg, out))
}

fn check_threshold(name: &str, value: f64, threshold: Option<f64>) -> CmdResult {
    match threshold {
        Some(t) if value < t => Err(Failure {
            code: EXIT_THRESHOLD,
            message: format!("{name} {value:.4} is below the threshold {t}"),
        }),
        _ => Ok(()),
    }
}

pub fn gen_data(args: GenDataArgs) -> CmdResult {
    let mut cfg = match (&args.config, args.preset.as_deref()) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        }
        (None, Some(preset)) => {
            let sizes = SplitSizes {
                train: args.train,
                dev: args.dev,
                test: args.test,
            };
            let seed = args.seed.unwrap_or(0);
            match preset {
                "receipts" => SynthConfig::receipts(seed, sizes),
                "invoices" => SynthConfig::invoices(seed, sizes),
                "rare-fields" | "rare_fields" => SynthConfig::rare_fields(seed, sizes),
                other => {
                    return Err(Failure::usage(format!(
                        "unknown preset `{other}` (expected receipts, invoices or rare-fields)"
                    )))
                }
            }
        }
        (None, None) => return Err(Failure::usage("gen-data needs --config or --preset")),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let datasets = gen_synthetic(&cfg)?;
    ensure_dir(&args.out)?;
    let mut outputs = Vec::new();
    for ds in &datasets {
        let name = format!("{}-{}.jsonl", ds.dataset_id, ds.split);
        save_jsonl(ds, &args.out.join(&name))?;
        log::info!("wrote {name}: {} documents, {} entities", ds.len(), ds.num_entities());
        outputs.push(name);
    }
    let synth_toml = toml::to_string(&cfg).map_err(|e| Failure::usage(e.to_string()))?;
    write_file(&args.out.join("synth.toml"), &synth_toml)?;
    outputs.push("synth.toml".into());
    let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    manifest::write(&args.out, "gen-data", Some(cfg.seed), to_json(&cfg), &outputs)
}

pub fn import_cord(args: ImportCordArgs) -> CmdResult {
    let splits = match &args.split {
        Some(s) => vec![s.parse::<Split>()?],
        None => Split::ALL.to_vec(),
    };
    let options = CordOptions {
        page_size: args.page_width.zip(args.page_height),
    };
    ensure_dir(&args.out)?;
    let mut outputs = Vec::new();
    let mut summary = BTreeMap::new();
    for split in splits {
        let load = load_cord(&args.root, split, &options)?;
        for (path, err) in &load.errors {
            log::warn!("skipped {}: {err}", path.display());
        }
        if load.dataset.is_empty() && !load.errors.is_empty() {
            return Err(Failure {
                code: EXIT_DATA,
                message: format!("no receipt of the {split} split could be read"),
            });
        }
        let name = format!("cord-{split}.jsonl");
        save_jsonl(&load.dataset, &args.out.join(&name))?;
        summary.insert(
            split.to_string(),
            json!({"documents": load.dataset.len(), "skipped": load.errors.len()}),
        );
        outputs.push(name);
    }
    let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    let config = json!({
        "root": args.root,
        "page_size": options.page_size,
        "splits": summary,
    });
    manifest::write(&args.out, "import-cord", None, config, &outputs)
}

pub fn pretrain(args: RunArgs) -> CmdResult {
    let (cfg, out) = run_config(&args)?;
    if cfg.model.kind != ModelKind::Span {
        return Err(Failure::usage("pre-training needs model type `span`"));
    }
    if cfg.data.pretrain.is_empty() {
        return Err(Failure::usage("no pre-training datasets (`data.pretrain` is empty)"));
    }
    let max_len = cfg.model.encoder.max_seq_len;
    let datasets = cfg
        .data
        .pretrain
        .iter()
        .map(|p| load_dataset(p, max_len))
        .collect::<Result<Vec<_>, _>>()?;
    let docs: Vec<Document> = datasets.iter().flat_map(|d| d.documents.iter().cloned()).collect();
    let mut model = match &args.init_from {
        Some(path) => Model::init_from(&load_checkpoint(path)?, cfg.model.clone(), &docs, &[], cfg.seed)?,
        None => Model::new(cfg.model.clone(), Vocab::from_documents(&docs), &[], cfg.seed)?,
    };
    let refs: Vec<&Dataset> = datasets.iter().collect();
    let logs = pretrain_spans(&mut model, &refs, &cfg.pretrain.train_config(), cfg.seed)?;
    model.save(&out.join("model.ckpt"))?;
    write_file(&out.join("pretrain_log.csv"), &pretrain_csv(&logs))?;
    manifest::write(
        &out,
        "pretrain",
        Some(cfg.seed),
        to_json(&cfg),
        &["model.ckpt", "pretrain_log.csv"],
    )
}

fn write_reports(out: &Path, stem: &str, rows: &[(String, EvalReport)]) -> CmdResult {
    let table = compare_report(rows);
    write_file(&out.join(format!("{stem}.txt")), &table.text)?;
    write_file(&out.join(format!("{stem}.csv")), &table.csv)?;
    let full: BTreeMap<&str, &EvalReport> = rows.iter().map(|(n, r)| (n.as_str(), r)).collect();
    write_file(
        &out.join(format!("{stem}.json")),
        &serde_json::to_string_pretty(&full).expect("report serializes"),
    )?;
    print!("{}", table.text);
    Ok(())
}

pub fn train(args: RunArgs) -> CmdResult {
    let (cfg, out) = run_config(&args)?;
    let max_len = cfg.model.encoder.max_seq_len;
    let train_path = cfg
        .data
        .train
        .as_ref()
        .ok_or_else(|| Failure::usage("no training data (`data.train`)"))?;
    let train = load_dataset(train_path, max_len)?;
    let dev = cfg.data.dev.as_ref().map(|p| load_dataset(p, max_len)).transpose()?;
    let test = cfg.data.test.as_ref().map(|p| load_dataset(p, max_len)).transpose()?;
    let fields = &train.schema.field_ids;
    let mut model = match &args.init_from {
        Some(path) => Model::init_from(
            &load_checkpoint(path)?,
            cfg.model.clone(),
            &train.documents,
            fields,
            cfg.seed,
        )?,
        None => Model::new(cfg.model.clone(), Vocab::from_documents(&train.documents), fields, cfg.seed)?,
    };
    let result = fit(&mut model, &train, dev.as_ref(), &cfg.train, cfg.seed)?;
    log::info!(
        "kept epoch {} (dev micro {:?}) after {} steps",
        result.best_epoch,
        result.best_dev_micro_f1,
        result.steps
    );
    model.save(&out.join("model.ckpt"))?;
    write_file(&out.join("train_log.csv"), &result.csv())?;
    let mut outputs = vec!["model.ckpt".to_string(), "train_log.csv".to_string()];

    let mut last = None;
    for ds in [dev.as_ref(), test.as_ref()].into_iter().flatten() {
        let report = model.evaluate(&ds.documents, &ds.schema.field_ids, cfg.train.execution)?;
        let stem = format!("report-{}", ds.split);
        write_reports(&out, &stem, &[(cfg.model.kind.to_string(), report.clone())])?;
        outputs.extend(["txt", "csv", "json"].map(|ext| format!("{stem}.{ext}")));
        last = Some((ds.split, report));
    }
    let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    manifest::write(&out, "train", Some(cfg.seed), to_json(&cfg), &outputs)?;
    if let Some((split, report)) = last {
        check_threshold(&format!("{split} micro F1"), report.micro_f1, cfg.thresholds.micro)?;
        check_threshold(&format!("{split} macro F1"), report.macro_f1, cfg.thresholds.macro_)?;
    }
    Ok(())
}

fn eval_dataset_path(args: &EvalArgs) -> Result<PathBuf, Failure> {
    if let Some(p) = &args.data {
        return Ok(p.clone());
    }
    let (Some(config), Some(split)) = (&args.config, &args.split) else {
        return Err(Failure::usage("eval needs --data, or --config with --split"));
    };
    let cfg = RunConfig::load(config).map_err(|e| Failure::usage(e.to_string()))?;
    let path = match split.parse::<Split>()? {
        Split::Train => cfg.data.train,
        Split::Dev => cfg.data.dev,
        Split::Test => cfg.data.test,
    };
    path.ok_or_else(|| Failure::usage(format!("the config has no `data.{split}` path")))
}

pub fn eval(args: EvalArgs) -> CmdResult {
    let path = eval_dataset_path(&args)?;
    let dataset = load_jsonl(&path)?;
    if let Some(split) = &args.split {
        let want: Split = split.parse()?;
        if want != dataset.split {
            log::warn!("{}: file holds the {} split, not {want}", path.display(), dataset.split);
        }
    }
    let fields = &dataset.schema.field_ids;
    let mut rows: Vec<(String, EvalReport)> = Vec::new();
    let mut checked = Vec::new();
    if args.gold {
        let gold: Vec<DocEntities> = dataset.documents.iter().map(DocEntities::gold).collect();
        rows.push(("gold".into(), entity_f1(&gold, &gold, Some(fields))?));
    }
    for ckpt in &args.checkpoints {
        let model = load_checkpoint(ckpt)?;
        if let Some(kind) = args.model {
            if kind != model.kind() {
                return Err(Failure::usage(format!(
                    "{} holds a {} model, not {kind}",
                    ckpt.display(),
                    model.kind()
                )));
            }
        }
        let mut ds = dataset.clone();
        ds.truncate(model.config.encoder.max_seq_len);
        let report = model.evaluate(&ds.documents, fields, Execution::default())?;
        let mut name = model.kind().to_string();
        if rows.iter().any(|(n, _)| *n == name) || args.checkpoints.len() > 1 {
            name = format!("{name}:{}", ckpt.display());
        }
        checked.push((name.clone(), report.micro_f1));
        rows.push((name, report));
    }
    write_reports(&args.out, "report", &rows)?;
    let config = json!({
        "data": path,
        "split": dataset.split,
        "checkpoints": args.checkpoints,
        "gold": args.gold,
        "threshold_micro": args.threshold_micro,
    });
    manifest::write(&args.out, "eval", None, config, &["report.txt", "report.csv", "report.json"])?;
    for (name, micro) in checked {
        check_threshold(&format!("{name} micro F1"), micro, args.threshold_micro)?;
    }
    Ok(())
}

pub fn decode(args: DecodeArgs) -> CmdResult {
    let model = load_checkpoint(&args.checkpoint)?;
    let mut dataset = load_jsonl(&args.data)?;
    dataset.truncate(model.config.encoder.max_seq_len);
    let fields = &dataset.schema.field_ids;
    let preds = Execution::default()
        .map(&dataset.documents, |d| model.predict(d, fields))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut lines = String::new();
    for (doc, pred) in dataset.documents.iter().zip(&preds) {
        let entities: Vec<_> = pred
            .entities
            .iter()
            .map(|e| {
                let text: Vec<&str> = doc.tokens()[e.span.start..=e.span.end]
                    .iter()
                    .map(|t| t.text.as_str())
                    .collect();
                json!({"field_id": e.field_id, "start": e.span.start, "end": e.span.end, "text": text.join(" ")})
            })
            .collect();
        lines.push_str(&json!({"doc_id": doc.doc_id, "entities": entities}).to_string());
        lines.push('\n');
    }
    write_file(&args.out.join("predictions.jsonl"), &lines)?;
    let config = json!({"checkpoint": args.checkpoint, "data": args.data});
    manifest::write(&args.out, "decode", None, config, &["predictions.jsonl"])
}

/// Entities grouped by field, keeping their order (chain order for the span
/// model).
fn chains_of(pred: &DocEntities) -> Vec<FieldChain> {
    let mut chains: Vec<FieldChain> = Vec::new();
    for e in &pred.entities {
        match chains.iter_mut().find(|c| c.field_id == e.field_id) {
            Some(c) => c.spans.push(e.span),
            None => chains.push(FieldChain {
                field_id: e.field_id.clone(),
                spans: vec![e.span],
            }),
        }
    }
    chains
}

fn file_stem(doc_id: &str) -> String {
    doc_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

pub fn visualize(args: VisualizeArgs) -> CmdResult {
    let model = args.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let mut dataset = load_jsonl(&args.data)?;
    if let Some(m) = &model {
        dataset.truncate(m.config.encoder.max_seq_len);
    }
    let docs: Vec<&Document> = match &args.doc_id {
        Some(id) => {
            let doc = dataset.documents.iter().find(|d| &d.doc_id == id).ok_or_else(|| Failure {
                code: EXIT_DATA,
                message: format!("{}: no document `{id}`", args.data.display()),
            })?;
            vec![doc]
        }
        None => dataset.documents.iter().collect(),
    };
    let mut outputs = Vec::new();
    for doc in docs {
        let pred = match &model {
            Some(m) => m.predict(doc, &dataset.schema.field_ids)?,
            None => DocEntities::gold(doc),
        };
        let name = format!("{}.svg", file_stem(&doc.doc_id));
        write_file(&args.out.join(&name), &render_svg(doc, &chains_of(&pred), args.width))?;
        outputs.push(name);
    }
    log::info!("wrote {} SVG files to {}", outputs.len(), args.out.display());
    let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    let config = json!({"checkpoint": args.checkpoint, "data": args.data, "doc_id": args.doc_id, "width": args.width});
    manifest::write(&args.out, "visualize", None, config, &outputs)
}
