//! Chain-extraction training over several annotated datasets that share one
//! encoder and span head, each contributing its own namespaced queries.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::model::{Model, ModelKind};
use crate::train::{sub_seed, Example, TrainConfig, Trainer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    pub epoch: usize,
    pub dataset: String,
    pub mean_loss: f64,
}

/// Loss curve as CSV with columns `epoch,dataset,mean_loss`.
pub fn pretrain_csv(logs: &[PretrainLog]) -> String {
    let mut out = String::from("epoch,dataset,mean_loss\n");
    for l in logs {
        out.push_str(&format!("{},{},{:.6}\n", l.epoch, l.dataset, l.mean_loss));
    }
    out
}

fn check_namespaces(datasets: &[&Dataset]) -> Result<()> {
    let mut ids = BTreeSet::new();
    let mut fields = BTreeSet::new();
    for ds in datasets {
        if !ids.insert(ds.dataset_id.as_str()) {
            return Err(Error::Config(format!("dataset id `{}` used twice", ds.dataset_id)));
        }
        for f in &ds.schema.field_ids {
            if !f.starts_with(&format!("{}/", ds.dataset_id)) {
                return Err(Error::Config(format!("field `{f}` is not namespaced by `{}`", ds.dataset_id)));
            }
            if !fields.insert(f.as_str()) {
                return Err(Error::Config(format!("field `{f}` appears in two datasets")));
            }
        }
    }
    Ok(())
}

/// Interleaves shuffled datasets so each is spread evenly over the epoch in
/// proportion to its size: item `j` of a dataset with `n` items sits at
/// relative position `(j + ½) / n`.
fn interleave(sizes: &[usize], rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut keyed = Vec::new();
    for (d, &n) in sizes.iter().enumerate() {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for (j, doc) in order.into_iter().enumerate() {
            keyed.push(((2 * j + 1) as f64 / (2 * n) as f64, d, doc));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, d, doc)| (d, doc)).collect()
}

/// Trains `model` (a span model) on every `(document, dataset fields)` pair
/// with the chain loss, drawing documents round-robin across datasets.
/// Queries for every dataset's fields are registered up front. Returns the
/// mean loss per epoch and dataset.
pub fn pretrain_spans(
    model: &mut Model,
    datasets: &[&Dataset],
    config: &TrainConfig,
    seed: u64,
) -> Result<Vec<PretrainLog>> {
    if model.kind() != ModelKind::Span {
        return Err(Error::Config("span pre-training needs a span model".into()));
    }
    if datasets.is_empty() {
        return Err(Error::Config("span pre-training needs at least one dataset".into()));
    }
    check_namespaces(datasets)?;
    model.set_auto_register(true);
    for ds in datasets {
        model.register_fields(&ds.schema.field_ids)?;
    }

    let mut examples = Vec::new();
    let mut offsets = Vec::with_capacity(datasets.len());
    for ds in datasets {
        offsets.push(examples.len());
        examples.extend(ds.documents.iter().map(|doc| Example {
            doc,
            fields: &ds.schema.field_ids,
        }));
    }
    let sizes: Vec<usize> = datasets.iter().map(|d| d.len()).collect();
    let mut trainer = Trainer::new(config.clone(), seed)?;
    let mut logs = Vec::new();
    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 0x9e, epoch as u64));
        let order: Vec<usize> = interleave(&sizes, &mut rng)
            .into_iter()
            .map(|(d, j)| offsets[d] + j)
            .collect();
        let losses = trainer.run_ordered(model, &examples, &order)?;
        if losses.is_empty() {
            break;
        }
        for (d, ds) in datasets.iter().enumerate() {
            let range = offsets[d]..offsets[d] + sizes[d];
            let mine: Vec<f64> = losses.iter().filter(|(i, _)| range.contains(i)).map(|&(_, l)| l).collect();
            if mine.is_empty() {
                continue;
            }
            let mean_loss = mine.iter().sum::<f64>() / mine.len() as f64;
            log::info!("pretrain epoch {epoch} {}: {mean_loss:.5}", ds.dataset_id);
            logs.push(PretrainLog {
                epoch,
                dataset: ds.dataset_id.clone(),
                mean_loss,
            });
        }
    }
    Ok(logs)
}
