use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pgn_core::evalkit::{
    credit_assignment, evaluate_with, mean_std, pathological_protocol, rollout_structure,
    summarise_credit, trace_all, truth_pointers, write_dot_files, EvalReport, PointerMetric,
};
use pgn_core::pgn::{
    load_checkpoint, save_checkpoint, Checkpoint, ModelConfig, ModelParams, Variant,
};
use pgn_core::tracegen::{
    episode_from_line, generate_splits, load_dataset, validate_episode, write_atomic,
    write_dataset, DatasetSpec, Episode, Split,
};
use pgn_core::train::{
    gradient_check, record_pointers, train_loop_with, write_recorded, EpochRecord, Snapshots,
    TrainOutcome,
};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, PointerSource};
use crate::error::CliError;
use crate::{
    CreditArgs, EvalArgs, GenerateArgs, GradcheckArgs, RolloutArgs, TrainArgs, ValidateArgs,
};

type Pointers = Vec<Vec<Vec<usize>>>;

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(write_atomic(path, text.as_bytes())?)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    Ok(write_atomic(path, text.as_bytes())?)
}

fn find_split<'a>(splits: &'a [Split], name: &str) -> Result<&'a [Episode], CliError> {
    splits
        .iter()
        .find(|s| s.name == name)
        .map(|s| s.episodes.as_slice())
        .ok_or_else(|| CliError::Config(format!("dataset has no '{name}' split")))
}

/// Pointer snapshots for every split, or `None` for variants that take no
/// external pointers.
fn external_pointers(
    config: &ModelConfig,
    splits: &[Split],
    source: Option<&Checkpoint>,
) -> Result<Option<BTreeMap<String, Pointers>>, CliError> {
    if config.variant != Variant::FixedPtrs {
        return Ok(None);
    }
    let mut out = BTreeMap::new();
    for s in splits {
        let ptrs = match source {
            Some(c) => record_pointers(&c.params, &c.config, &s.episodes)?,
            None => s.episodes.iter().map(truth_pointers).collect(),
        };
        out.insert(s.name.clone(), ptrs);
    }
    Ok(Some(out))
}

fn eval_splits(
    params: &ModelParams,
    config: &ModelConfig,
    splits: &[Split],
    external: Option<&BTreeMap<String, Pointers>>,
    metric: PointerMetric,
) -> Result<BTreeMap<String, EvalReport>, CliError> {
    let mut out = BTreeMap::new();
    for s in splits.iter().filter(|s| s.name != "train") {
        let ext = external.map(|e| e[&s.name].as_slice());
        out.insert(
            s.name.clone(),
            evaluate_with(params, config, &s.episodes, ext, metric)?,
        );
    }
    Ok(out)
}

pub fn generate(a: &GenerateArgs) -> Result<Value, CliError> {
    let spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let spec: DatasetSpec = toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if spec.kind != a.kind {
                return Err(CliError::Config(format!(
                    "spec kind {} disagrees with --kind {}",
                    spec.kind, a.kind
                )));
            }
            DatasetSpec {
                master_seed: a.seed,
                ..spec
            }
        }
        None => DatasetSpec::standard(a.kind, a.seed),
    };
    let splits = generate_splits(&spec)?;
    let paths = write_dataset(&spec, &splits, &a.out)?;
    Ok(json!({
        "out": a.out,
        "splits": splits.iter().map(|s| json!({"name": s.name, "episodes": s.episodes.len()})).collect::<Vec<_>>(),
        "files": paths,
    }))
}

fn load_experiment(a: &TrainArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if a.paper {
        cfg.apply_full_protocol();
    }
    if let Some(v) = a.variant {
        cfg.model.variant = v;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(d) = &a.data {
        cfg.dataset.dir = Some(d.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train_seed(
    cfg: &ExperimentConfig,
    splits: &[Split],
    seed: u64,
    dir: &Path,
) -> Result<(Checkpoint, BTreeMap<String, EvalReport>, TrainOutcome), CliError> {
    fs::create_dir_all(dir)?;
    let model = cfg.model.config();
    let tcfg = pgn_core::train::TrainConfig {
        init_seed: seed,
        shuffle_seed: seed,
        ..cfg.train.clone()
    };
    let train = find_split(splits, "train")?;
    let val = find_split(splits, "val")?;

    let phase1 = if cfg.model.pointer_source == PointerSource::Learned {
        let p1_config = ModelConfig {
            pointer_loss_scope: model.pointer_loss_scope,
            ..ModelConfig::with_latent(Variant::Pgn, model.latent_dim)
        };
        let p1 = train_loop_with(&p1_config, &tcfg, train, val, None, |_| {})?;
        let ckpt = Checkpoint {
            config: p1_config,
            params: p1.best,
            meta: json!({ "seed": seed, "best_epoch": p1.best_epoch, "best_val_f1": p1.best_val_f1 }),
        };
        save_checkpoint(&dir.join("phase1.ckpt"), &ckpt)?;
        Some(ckpt)
    } else {
        None
    };
    let external = external_pointers(&model, splits, phase1.as_ref())?;
    if let (Some(ext), Some(_)) = (&external, &phase1) {
        let rows: Vec<(&str, &[Vec<Vec<usize>>])> = ext
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
            .collect();
        write_recorded(&dir.join("pointers.jsonl"), &rows)?;
    }
    let snapshots = external.as_ref().map(|e| Snapshots {
        train: &e["train"],
        val: &e["val"],
    });

    let mut history: Vec<EpochRecord> = Vec::new();
    let outcome = train_loop_with(&model, &tcfg, train, val, snapshots, |r| {
        history.push(r.clone())
    })?;
    write_jsonl(&dir.join("history.jsonl"), &history)?;
    let reports = eval_splits(
        &outcome.best,
        &model,
        splits,
        external.as_ref(),
        PointerMetric::Carried,
    )?;
    let ckpt = Checkpoint {
        config: model,
        params: outcome.best.clone(),
        meta: json!({
            "seed": seed,
            "best_epoch": outcome.best_epoch,
            "best_val_f1": outcome.best_val_f1,
            "initial_val_f1": outcome.initial_val_f1,
            "train": tcfg,
            "pointer_source": cfg.model.pointer_source,
        }),
    };
    save_checkpoint(&dir.join("model.ckpt"), &ckpt)?;
    write_json(
        &dir.join("report.json"),
        &json!({
            "seed": seed,
            "best_epoch": outcome.best_epoch,
            "best_val_f1": outcome.best_val_f1,
            "initial_val_f1": outcome.initial_val_f1,
            "splits": reports,
        }),
    )?;
    Ok((ckpt, reports, outcome))
}

pub fn train(a: &TrainArgs) -> Result<Value, CliError> {
    let cfg = load_experiment(a)?;
    fs::create_dir_all(&a.out)?;
    let splits = match &cfg.dataset.dir {
        Some(dir) => {
            let (spec, splits) = load_dataset(dir)?;
            if spec.kind != cfg.dataset.kind {
                return Err(CliError::Config(format!(
                    "dataset at {} holds {} episodes, config expects {}",
                    dir.display(),
                    spec.kind,
                    cfg.dataset.kind
                )));
            }
            splits
        }
        None => {
            let spec = cfg.dataset.spec();
            let splits = generate_splits(&spec)?;
            write_dataset(&spec, &splits, &a.out.join("data"))?;
            splits
        }
    };
    write_json(&a.out.join("manifest.json"), &serde_json::to_value(&cfg)?)?;

    let mut per_seed = Vec::new();
    let mut by_split: BTreeMap<String, Vec<&EvalReport>> = BTreeMap::new();
    let mut results = Vec::new();
    for &seed in &cfg.seeds {
        let (_, reports, outcome) =
            train_seed(&cfg, &splits, seed, &a.out.join(format!("seed_{seed}")))?;
        results.push((seed, reports, outcome));
    }
    for (seed, reports, outcome) in &results {
        per_seed.push(json!({
            "seed": seed,
            "best_epoch": outcome.best_epoch,
            "best_val_f1": outcome.best_val_f1,
            "initial_val_f1": outcome.initial_val_f1,
        }));
        for (name, r) in reports {
            by_split.entry(name.clone()).or_default().push(r);
        }
    }
    let summary: BTreeMap<String, Value> = by_split
        .into_iter()
        .map(|(name, rs)| {
            let f1: Vec<f64> = rs.iter().map(|r| r.query_f1).collect();
            let ptr: Vec<f64> = rs.iter().filter_map(|r| r.pointer_accuracy).collect();
            let mask: Vec<f64> = rs.iter().filter_map(|r| r.mask_accuracy).collect();
            let opt = |xs: &[f64]| (!xs.is_empty()).then(|| mean_std(xs));
            (
                name,
                json!({
                    "query_f1": mean_std(&f1),
                    "pointer_accuracy": opt(&ptr),
                    "mask_accuracy": opt(&mask),
                }),
            )
        })
        .collect();
    let report = json!({
        "variant": cfg.model.variant,
        "kind": cfg.dataset.kind,
        "epochs": cfg.train.epochs,
        "seeds": per_seed,
        "splits": summary,
    });
    write_json(&a.out.join("report.json"), &report)?;
    Ok(report)
}

fn load_pointer_source(
    path: Option<&PathBuf>,
    config: &ModelConfig,
) -> Result<Option<Checkpoint>, CliError> {
    match path {
        None => Ok(None),
        Some(p) => {
            if config.variant != Variant::FixedPtrs {
                return Err(CliError::Config(
                    "--pointers applies to fixed_ptrs checkpoints only".into(),
                ));
            }
            let c = load_checkpoint(p)?;
            if !c.config.variant.uses_pointers() || c.config.variant == Variant::FixedPtrs {
                return Err(CliError::Config(format!(
                    "pointer source must infer its own pointers, found {}",
                    c.config.variant
                )));
            }
            Ok(Some(c))
        }
    }
}

pub fn eval(a: &EvalArgs) -> Result<Value, CliError> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let source = load_pointer_source(a.pointers.as_ref(), &ckpt.config)?;
    let (spec, splits) = load_dataset(&a.data)?;
    let external = external_pointers(&ckpt.config, &splits, source.as_ref())?;
    let reports = eval_splits(
        &ckpt.params,
        &ckpt.config,
        &splits,
        external.as_ref(),
        a.pointer_metric,
    )?;
    let report = json!({
        "checkpoint": a.checkpoint,
        "variant": ckpt.config.variant,
        "kind": spec.kind,
        "pointer_metric": match a.pointer_metric {
            PointerMetric::Carried => "carried",
            PointerMetric::TeacherForcedArgmax => "teacher_forced_argmax",
        },
        "splits": reports,
    });
    write_json(&a.report, &report)?;
    Ok(report)
}

fn load_episode(path: &Path, index: usize) -> Result<Episode, CliError> {
    let text = fs::read_to_string(path)?;
    let line = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .nth(index)
        .ok_or_else(|| CliError::Config(format!("{} has no episode {index}", path.display())))?;
    Ok(episode_from_line(line)?)
}

pub fn rollout(a: &RolloutArgs) -> Result<Value, CliError> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    if !ckpt.config.variant.uses_pointers() {
        return Err(CliError::Config(format!(
            "variant {} carries no pointers to roll out",
            ckpt.config.variant
        )));
    }
    let (ep, label) = match (&a.episode, a.pathological) {
        (Some(path), _) => (load_episode(path, a.index)?, "episode"),
        (None, Some(n)) => (pathological_protocol(n)?, "pathological"),
        (None, None) => return Err(CliError::Config("need --episode or --pathological".into())),
    };
    let source = load_pointer_source(a.pointers.as_ref(), &ckpt.config)?;
    let external: Option<Pointers> = if ckpt.config.variant == Variant::FixedPtrs {
        Some(match &source {
            Some(c) => record_pointers(&c.params, &c.config, std::slice::from_ref(&ep))?,
            None => vec![truth_pointers(&ep)],
        })
    } else {
        None
    };
    let trace = trace_all(
        &ckpt.params,
        &ckpt.config,
        std::slice::from_ref(&ep),
        external.as_deref(),
    )?
    .pop()
    .expect("one trace per episode");
    let structure = rollout_structure(&trace.pointers, &ep)?;
    let model_files = write_dot_files(&a.dot, &format!("{label}_model"), a.index, &trace.pointers)?;
    let truth_files = write_dot_files(
        &a.dot,
        &format!("{label}_truth"),
        a.index,
        &truth_pointers(&ep),
    )?;
    write_jsonl(&a.dot.join("structure.jsonl"), &structure)?;
    let valid = structure.iter().filter(|s| s.valid).count();
    let matched = structure.iter().filter(|s| s.partition_match).count();
    let max_depth = structure.iter().filter_map(|s| s.depth).max();
    Ok(json!({
        "episode": label,
        "n": ep.n,
        "steps": structure.len(),
        "valid_steps": valid,
        "partition_matches": matched,
        "max_depth": max_depth,
        "dot_files": model_files.len() + truth_files.len(),
    }))
}

pub fn credit(a: &CreditArgs) -> Result<Value, CliError> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let source = load_pointer_source(a.pointers.as_ref(), &ckpt.config)?;
    let (_, splits) = load_dataset(&a.data)?;
    let chosen: Vec<Split> = match &a.split {
        Some(name) => vec![Split {
            name: name.clone(),
            episodes: find_split(&splits, name)?.to_vec(),
        }],
        None => splits.into_iter().filter(|s| s.name != "train").collect(),
    };
    let external = external_pointers(&ckpt.config, &chosen, source.as_ref())?;
    let mut per_split = BTreeMap::new();
    let mut rows = Vec::new();
    for s in &chosen {
        let ext = external.as_ref().map(|e| e[&s.name].as_slice());
        let traces = trace_all(&ckpt.params, &ckpt.config, &s.episodes, ext)?;
        let steps = credit_assignment(&traces, &s.episodes)?;
        let summary = summarise_credit(&steps);
        per_split.insert(
            s.name.clone(),
            json!({
                "steps": summary.steps,
                "operated": summary.operated,
                "relevant": summary.relevant,
                "irrelevant": summary.irrelevant,
                "relevant_total": summary.relevant_total(),
            }),
        );
        rows.extend(steps.into_iter().map(|c| (s.name.clone(), c)));
    }
    if let Some(out) = &a.out {
        let lines: Vec<Value> = rows
            .iter()
            .map(|(split, c)| {
                let mut v = serde_json::to_value(c).expect("plain struct");
                v["split"] = json!(split);
                v
            })
            .collect();
        write_jsonl(out, &lines)?;
    }
    Ok(json!({ "variant": ckpt.config.variant, "splits": per_split }))
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<Value, CliError> {
    if !(a.threshold > 0.0) {
        return Err(CliError::Config("--threshold must be positive".into()));
    }
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for &v in &a.variants {
        let r = gradient_check(v, a.latent, a.nodes, a.steps, a.seed)?;
        let pass = r.max_rel_error < a.threshold;
        if !pass {
            failed.push(format!("{v}: {:.3e}", r.max_rel_error));
        }
        rows.push(json!({
            "variant": v,
            "max_rel_error": r.max_rel_error,
            "checked": r.checked,
            "pass": pass,
        }));
    }
    let out = json!({ "threshold": a.threshold, "variants": rows });
    if failed.is_empty() {
        Ok(out)
    } else {
        println!("{}", serde_json::to_string_pretty(&out)?);
        Err(CliError::Check(format!(
            "gradient check failed for {}",
            failed.join(", ")
        )))
    }
}

pub fn validate(a: &ValidateArgs) -> Result<Value, CliError> {
    let (spec, splits) = load_dataset(&a.data)?;
    let mut violations = Vec::new();
    let mut episodes = 0;
    for s in &splits {
        for (i, ep) in s.episodes.iter().enumerate() {
            episodes += 1;
            for v in validate_episode(ep).violations {
                violations.push(json!({ "split": s.name, "episode": i, "violation": v }));
            }
        }
    }
    let out = json!({
        "kind": spec.kind,
        "episodes": episodes,
        "violations": violations.len(),
    });
    if violations.is_empty() {
        Ok(out)
    } else {
        for v in violations.iter().take(20) {
            eprintln!("{v}");
        }
        Err(CliError::Check(format!(
            "{} violations in {}",
            violations.len(),
            a.data.display()
        )))
    }
}
