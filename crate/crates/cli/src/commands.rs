//! The command implementations. Each run directory is self-describing:
//! resolved config, seed, dataset content hash, per-epoch history,
//! checkpoint, and after evaluation the report files.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use privnet_core::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use privnet_core::data::{
    generate_synthetic, load_movielens, prepare_dataset, read_container, write_container, Dataset,
};
use privnet_core::defenses::DefenseStrategy;
use privnet_core::eval::{
    evaluate_ranking, kmeans_vmeasure, majority_confusion, test_time_attack, weighted_prf,
    PrivacyResult, TEST_HOLDOUT,
};
use privnet_core::model::{transferred_users, ModelConfig, RecommenderParams};
use privnet_core::report::{write_embeddings, EvalReport};
use privnet_core::train::{fit, history_to_csv};
use privnet_core::{Error, Result};

use crate::config::{DatasetSpec, ExperimentConfig};

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    match read_container(path) {
        Err(Error::Io(e)) => Err(Error::data(format!(
            "cannot read dataset container {}: {e}; run `privnet prepare` first",
            path.display()
        ))),
        other => other,
    }
}

fn attribute_names(dataset: &Dataset) -> Vec<String> {
    dataset.attributes.attributes.iter().map(|a| a.name.clone()).collect()
}

/// Builds the dataset container at `config.data` and prints per-domain
/// summary statistics.
pub fn cmd_prepare(config: &ExperimentConfig) -> Result<()> {
    let (source, target, attributes) = match &config.dataset {
        DatasetSpec::Synthetic(synth) => generate_synthetic(synth)?,
        DatasetSpec::Movielens { ratings, users, movies, year_threshold } => {
            load_movielens(ratings, users, movies, *year_threshold)?
        }
    };
    let dataset =
        prepare_dataset(source, target, attributes, &config.split, config.eval.negatives)?;
    if let Some(parent) = config.data.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    write_container(&config.data, &dataset)?;
    println!("{}", dataset.summary());
    println!("wrote {}", config.data.display());
    Ok(())
}

/// Trains one model and writes the run directory.
pub fn cmd_train(mut config: ExperimentConfig) -> Result<PathBuf> {
    config.train.lambda = config.effective_lambda();
    config.defense.validate(config.train.lambda)?;
    let mut dataset = load_dataset(&config.data)?;
    dataset.source = config.defense.apply(&dataset.source)?;
    let model = config.model.resolve(&dataset);
    let result = fit(&dataset, &model, &config.train)?;

    let out = config.out.clone();
    fs::create_dir_all(&out)?;
    config.save(&out.join("config.json"))?;
    fs::write(out.join("seed.txt"), format!("{}\n", config.train.seed))?;
    fs::write(out.join("dataset.sha256"), format!("{}\n", file_sha256(&config.data)?))?;
    fs::write(
        out.join("history.csv"),
        history_to_csv(&result.history, &attribute_names(&dataset)),
    )?;
    write_checkpoint(
        &out.join("model.ckpt"),
        &Checkpoint::new(&model, &result.params, &result.attacker),
    )?;
    println!(
        "{}: stopped after epoch {}, best validation HR@10 {:.4} at epoch {}",
        out.display(),
        result.state.epoch,
        result.state.best_hr,
        result.state.best_epoch
    );
    Ok(out)
}

/// Everything a post-training command needs, loaded from a run
/// directory: the resolved config, the (defense-transformed) dataset
/// and the checkpointed parameters.
pub struct RunContext {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    pub model: ModelConfig,
    pub params: RecommenderParams,
}

pub fn load_run(run: &Path, data_override: Option<&Path>) -> Result<RunContext> {
    let config = ExperimentConfig::load(&run.join("config.json"))?;
    let data = data_override.unwrap_or(&config.data);
    let stored_hash_path = run.join("dataset.sha256");
    if data_override.is_none() && stored_hash_path.exists() {
        let stored = fs::read_to_string(&stored_hash_path)?;
        let actual = file_sha256(data)?;
        if stored.trim() != actual {
            return Err(Error::data(format!(
                "dataset container {} changed since training (content hash mismatch)",
                data.display()
            )));
        }
    }
    let mut dataset = load_dataset(data)?;
    dataset.source = config.defense.apply(&dataset.source)?;
    let checkpoint = match read_checkpoint(&run.join("model.ckpt")) {
        Err(Error::Io(e)) => {
            return Err(Error::data(format!(
                "cannot read checkpoint in {}: {e}",
                run.display()
            )))
        }
        other => other?,
    };
    // the checkpointed training-time attacker is not needed here: eval
    // and attack both retrain a fresh one against the frozen model
    let (model, params, _) = checkpoint.into_params()?;
    Ok(RunContext { config, dataset, model, params })
}

fn all_users(dataset: &Dataset) -> Vec<u32> {
    (0..dataset.user_count() as u32).collect()
}

/// Ranking metrics on the held-out test set, the simulated test-time
/// attack, the clustering analysis, and the representation export.
/// Writes report.csv, report.txt and embeddings.tsv into the run dir.
pub fn run_evaluation(run: &Path, data_override: Option<&Path>) -> Result<EvalReport> {
    let ctx = load_run(run, data_override)?;
    let method = ctx.config.defense.strategy.name();
    let lambda = ctx.config.train.lambda;
    let mut report = EvalReport::default();

    for (i, &k) in ctx.config.eval.ks.iter().enumerate() {
        let (_, m) = evaluate_ranking(
            &ctx.params,
            &ctx.model,
            &ctx.dataset.target,
            &ctx.dataset.source,
            &ctx.dataset.ranking_test,
            TEST_HOLDOUT,
            k,
        )?;
        report.push(method, lambda, &format!("hr@{k}"), m.hr);
        report.push(method, lambda, &format!("ndcg@{k}"), m.ndcg);
        if i == 0 {
            report.push(method, lambda, "mrr", m.mrr);
            report.push(method, lambda, "auc", m.auc);
        }
    }

    let privacy = attack(&ctx, ctx.config.train.seed)?;
    for attr in &privacy.attributes {
        report.push(method, lambda, &format!("attacker_f1_{}", attr.name), attr.f1);
    }
    for (p, attr) in ctx.dataset.attributes.attributes.iter().enumerate() {
        let labels: Vec<u32> = ctx
            .dataset
            .privacy_split
            .test
            .iter()
            .map(|&u| ctx.dataset.attributes.label(u, p))
            .collect();
        let (_, _, f1) = weighted_prf(&majority_confusion(&labels, attr.classes)?)?;
        report.push(method, lambda, &format!("majority_f1_{}", attr.name), f1);
    }

    let users = all_users(&ctx.dataset);
    let x = transferred_users(&ctx.params, &ctx.model, &ctx.dataset.source, &users)?;
    for (p, attr) in ctx.dataset.attributes.attributes.iter().enumerate() {
        let labels: Vec<u32> =
            users.iter().map(|&u| ctx.dataset.attributes.label(u, p)).collect();
        let (_, v) =
            kmeans_vmeasure(&x, &labels, attr.classes as usize, ctx.config.train.seed)?;
        report.push(method, lambda, &format!("vmeasure_{}", attr.name), v);
    }
    write_embeddings(&run.join("embeddings.tsv"), &users, &x)?;

    fs::write(run.join("report.csv"), report.to_csv())?;
    fs::write(run.join("report.txt"), report.to_table())?;
    Ok(report)
}

pub fn cmd_eval(run: &Path, data_override: Option<&Path>) -> Result<()> {
    let report = run_evaluation(run, data_override)?;
    print!("{}", report.to_table());
    Ok(())
}

fn attack(ctx: &RunContext, seed: u64) -> Result<PrivacyResult> {
    test_time_attack(
        &ctx.params,
        &ctx.model,
        &ctx.dataset.source,
        &ctx.dataset.attributes,
        &ctx.dataset.privacy_split,
        &ctx.config.train,
        seed,
    )
}

/// Re-runs only the attack phase, optionally under a different seed.
pub fn cmd_attack(run: &Path, data_override: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let ctx = load_run(run, data_override)?;
    let seed = seed.unwrap_or(ctx.config.train.seed);
    let privacy = attack(&ctx, seed)?;
    let mut report = EvalReport::default();
    let method = ctx.config.defense.strategy.name();
    let lambda = ctx.config.train.lambda;
    for attr in &privacy.attributes {
        report.push(method, lambda, &format!("attacker_precision_{}", attr.name), attr.precision);
        report.push(method, lambda, &format!("attacker_recall_{}", attr.name), attr.recall);
        report.push(method, lambda, &format!("attacker_f1_{}", attr.name), attr.f1);
    }
    fs::write(run.join("attack.csv"), report.to_csv())?;
    print!("{}", report.to_table());
    Ok(())
}

pub fn cmd_export(run: &Path, data_override: Option<&Path>, out: Option<PathBuf>) -> Result<()> {
    let ctx = load_run(run, data_override)?;
    let users = all_users(&ctx.dataset);
    let x = transferred_users(&ctx.params, &ctx.model, &ctx.dataset.source, &users)?;
    let path = out.unwrap_or_else(|| run.join("embeddings.tsv"));
    write_embeddings(&path, &users, &x)?;
    println!("wrote {} representations to {}", users.len(), path.display());
    Ok(())
}

/// Label used in run directory names and aggregated report columns.
fn trimmed(value: f64) -> String {
    let mut s = format!("{value}");
    if s.starts_with("0.") {
        s.remove(0);
    }
    s
}

/// A grid of runs over the adversary weight, or over the public-user
/// fraction when `fractions` is non-empty. Each run gets its own
/// directory under `base.out`; per-run reports aggregate into one table.
pub fn cmd_sweep(
    base: &ExperimentConfig,
    lambdas: &[f64],
    fractions: &[f64],
    parallel: bool,
) -> Result<()> {
    let root = base.out.clone();
    fs::create_dir_all(&root)?;
    let mut runs: Vec<(String, ExperimentConfig)> = Vec::new();

    if fractions.is_empty() {
        // one shared container, strategy degrades to `none` at λ = 0
        if !base.data.exists() {
            cmd_prepare(base)?;
        }
        for &lambda in lambdas {
            let mut config = base.clone();
            config.train.lambda = lambda;
            config.defense.strategy = if lambda > 0.0 {
                DefenseStrategy::Adversarial
            } else {
                DefenseStrategy::None
            };
            config.out = root.join(format!("lambda-{lambda}"));
            runs.push((String::new(), config));
        }
    } else {
        for &fraction in fractions {
            let mut config = base.clone();
            config.split.public_fraction = fraction;
            let dir = root.join(format!("public-{fraction}"));
            config.data = dir.join("dataset.privnet");
            config.out = dir;
            cmd_prepare(&config)?;
            runs.push((format!(" public={}", trimmed(fraction)), config));
        }
    }

    let execute = |(label, config): &(String, ExperimentConfig)| -> Result<EvalReport> {
        let out = cmd_train(config.clone())?;
        let mut report = run_evaluation(&out, None)?;
        for entry in &mut report.entries {
            entry.method.push_str(label);
        }
        Ok(report)
    };
    let reports: Vec<Result<EvalReport>> = if parallel {
        runs.par_iter().map(execute).collect()
    } else {
        runs.iter().map(execute).collect()
    };

    let mut combined = EvalReport::default();
    for report in reports {
        combined.entries.extend(report?.entries);
    }
    fs::write(root.join("report.csv"), combined.to_csv())?;
    fs::write(root.join("report.txt"), combined.to_table())?;
    print!("{}", combined.to_table());
    println!("{} runs under {}", runs.len(), root.display());
    Ok(())
}
