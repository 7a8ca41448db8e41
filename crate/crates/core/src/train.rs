//! Mini-batch training with Adam.
//!
//! Each document of a batch gets its own graph; per-document gradients are
//! computed in parallel (when allowed) and summed in batch order, so results
//! do not depend on the execution mode.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::doc_model::Document;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::Model;
use crate::numerics::{Adam, AdamConfig, Gradients, Graph, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many optimizer steps.
    pub max_steps: Option<usize>,
    pub adam: AdamConfig,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 8,
            max_steps: None,
            adam: AdamConfig::default(),
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.adam.lr)));
        }
        Ok(())
    }
}

/// One training example: a document and the fields it is trained on.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub doc: &'a Document,
    pub fields: &'a [String],
}

/// Derives an independent stream from `(seed, a, b)`.
pub(crate) fn sub_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-example losses and the batch-mean gradient.
pub fn batch_gradients(
    model: &Model,
    batch: &[Example<'_>],
    dropout_seed: Option<u64>,
    exec: Execution,
) -> Result<(Vec<f64>, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let parts = exec.map_range(batch.len(), |i| -> Result<(f64, Gradients)> {
        let ex = batch[i];
        let mut g = Graph::new(&model.store);
        let loss = match dropout_seed {
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, i as u64, 0));
                model.loss(&mut g, ex.doc, ex.fields, Some(&mut rng))?
            }
            None => model.loss(&mut g, ex.doc, ex.fields, None)?,
        };
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss on {}", ex.doc.doc_id)));
        }
        Ok((value, g.backward(loss)?))
    });
    let mut losses = Vec::with_capacity(parts.len());
    let mut grads = Vec::with_capacity(parts.len());
    for p in parts {
        let (l, g) = p?;
        losses.push(l);
        grads.push(g);
    }
    let mut sum = Gradients::sum_in_order(grads).expect("non-empty batch");
    sum.scale(1.0 / batch.len() as f64);
    if !sum.is_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    Ok((losses, sum))
}

/// Optimizer state plus step counter over one model.
pub struct Trainer {
    pub config: TrainConfig,
    pub seed: u64,
    adam: Adam,
    steps: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            adam: Adam::new(config.adam.clone()),
            config,
            seed,
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn exhausted(&self) -> bool {
        self.config.max_steps.is_some_and(|m| self.steps >= m)
    }

    /// One optimizer step on `batch`; returns the per-example losses.
    pub fn step(&mut self, model: &mut Model, batch: &[Example<'_>]) -> Result<Vec<f64>> {
        let dropout_seed = sub_seed(self.seed, 0xd0, self.steps as u64);
        let (losses, grads) = batch_gradients(model, batch, Some(dropout_seed), self.config.execution)?;
        self.adam.step(&mut model.store, &grads)?;
        self.steps += 1;
        Ok(losses)
    }

    /// One pass over `examples` in a seeded shuffled order. Returns the mean
    /// example loss, or `None` if the step budget was already spent.
    pub fn epoch(&mut self, model: &mut Model, examples: &[Example<'_>], epoch: usize) -> Result<Option<f64>> {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(self.seed, 0x5f, epoch as u64)));
        let losses = self.run_ordered(model, examples, &order)?;
        Ok((!losses.is_empty()).then(|| losses.iter().map(|(_, l)| l).sum::<f64>() / losses.len() as f64))
    }

    /// Batches `order` and steps through it until done or out of budget.
    /// Returns `(example index, loss)` for every example trained on.
    pub(crate) fn run_ordered(
        &mut self,
        model: &mut Model,
        examples: &[Example<'_>],
        order: &[usize],
    ) -> Result<Vec<(usize, f64)>> {
        let mut out = Vec::with_capacity(order.len());
        for chunk in order.chunks(self.config.batch_size) {
            if self.exhausted() {
                break;
            }
            let batch: Vec<Example<'_>> = chunk.iter().map(|&i| examples[i]).collect();
            out.extend(chunk.iter().copied().zip(self.step(model, &batch)?));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub dev_micro_f1: Option<f64>,
    pub dev_macro_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept (1-based; 0 = initialization).
    pub best_epoch: usize,
    pub best_dev_micro_f1: Option<f64>,
    pub steps: usize,
}

impl FitResult {
    pub fn csv(&self) -> String {
        let mut out = String::from("epoch,steps,train_loss,dev_micro_f1,dev_macro_f1\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{:.6},{},{}\n",
                e.epoch,
                e.steps,
                e.train_loss,
                opt(e.dev_micro_f1),
                opt(e.dev_macro_f1)
            ));
        }
        out
    }
}

/// Trains on `train`, evaluating on `dev` after every epoch and keeping the
/// parameters with the best dev micro F1 (the earliest on ties). Without a
/// dev set the final parameters are kept.
pub fn fit(
    model: &mut Model,
    train: &Dataset,
    dev: Option<&Dataset>,
    config: &TrainConfig,
    seed: u64,
) -> Result<FitResult> {
    let fields = &train.schema.field_ids;
    model.register_fields(fields)?;
    let examples: Vec<Example<'_>> = train.documents.iter().map(|doc| Example { doc, fields }).collect();
    let mut trainer = Trainer::new(config.clone(), seed)?;
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for epoch in 1..=config.epochs {
        let Some(train_loss) = trainer.epoch(model, &examples, epoch)? else {
            break;
        };
        let dev_report = match dev {
            Some(d) => Some(model.evaluate(&d.documents, &d.schema.field_ids, config.execution)?),
            None => None,
        };
        let log = EpochLog {
            epoch,
            steps: trainer.steps(),
            train_loss,
            dev_micro_f1: dev_report.as_ref().map(|r| r.micro_f1),
            dev_macro_f1: dev_report.as_ref().map(|r| r.macro_f1),
        };
        log::info!(
            "epoch {epoch} steps {} loss {train_loss:.5} dev micro {:?}",
            log.steps,
            log.dev_micro_f1
        );
        if let Some(m) = log.dev_micro_f1 {
            if best.as_ref().is_none_or(|(b, _, _)| m > *b) {
                best = Some((m, epoch, model.store.clone()));
            }
        }
        epochs.push(log);
    }
    let last = epochs.last().map_or(0, |e| e.epoch);
    let (best_epoch, best_dev) = match best {
        Some((m, e, store)) => {
            model.store = store;
            (e, Some(m))
        }
        None => (last, None),
    };
    Ok(FitResult {
        epochs,
        best_epoch,
        best_dev_micro_f1: best_dev,
        steps: trainer.steps(),
    })
}
