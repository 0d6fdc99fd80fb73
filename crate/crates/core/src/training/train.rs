use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::folds::FoldSpec;
use crate::data::{ImageSource, Label};
use crate::error::{Error, Result};
use crate::evaluation::{confusion, ConfusionMatrix, MetricsReport, TraceRow};
use crate::model::{Network, DECISION_THRESHOLD};
use crate::tensor::{Real, Tensor};

/// Images per forward pass when evaluating without gradients.
const EVAL_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.5e-3,
            batch_size: 2,
            epochs: 30,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    /// A zero learning rate is accepted and freezes the parameters.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTrainConfig(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("betas must lie in [0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub trace: Vec<TraceRow>,
    /// Optimizer steps taken during this call.
    pub steps: u64,
    /// Mean loss over the fold's training images before the first update.
    pub initial_loss: f64,
    /// Mean loss over the same images after the last update.
    pub final_loss: f64,
    pub adam: AdamState<T>,
}

/// Validation confusion counts and metrics for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub probabilities: Vec<f64>,
    pub labels: Vec<u8>,
}

fn fold_items(fold: &FoldSpec, src: &dyn ImageSource) -> Result<Vec<(Label, usize)>> {
    if fold.is_empty() {
        return Err(Error::EmptyFold);
    }
    let (n, o) = (src.count(Label::Normal), src.count(Label::Opacity));
    if fold.normal.end > n || fold.opacity.end > o {
        return Err(Error::InvalidFolds(format!(
            "fold {} needs {} normal and {} opacity images, source has {n} and {o}",
            fold.index, fold.normal.end, fold.opacity.end
        )));
    }
    Ok(fold
        .normal
        .clone()
        .map(|i| (Label::Normal, i))
        .chain(fold.opacity.clone().map(|i| (Label::Opacity, i)))
        .collect())
}

fn all_items(src: &dyn ImageSource) -> Vec<(Label, usize)> {
    Label::BOTH
        .iter()
        .flat_map(|&l| (0..src.count(l)).map(move |i| (l, i)))
        .collect()
}

fn load_batch<T: Real>(
    network: &Network<T>,
    src: &dyn ImageSource,
    items: &[(Label, usize)],
) -> Result<(Tensor<T>, Vec<T>)> {
    let want = network.input_shape(1);
    let mut images = Vec::with_capacity(items.len());
    for &(label, idx) in items {
        let img = src.load(label, idx)?;
        if img.shape() != want {
            return Err(Error::ShapeMismatch {
                op: "train",
                detail: format!("{label:?} image {idx} has shape {}, network expects {want}", img.shape()),
            });
        }
        images.push(img.cast::<T>());
    }
    let labels = items.iter().map(|&(l, _)| T::from_f64_lossy(l.target() as f64)).collect();
    Ok((Tensor::stack(&images)?, labels))
}

/// Mean loss and probabilities over `items`, evaluated in chunks.
fn sweep<T: Real>(network: &Network<T>, src: &dyn ImageSource, items: &[(Label, usize)]) -> Result<(f64, Vec<f64>)> {
    let mut total = 0.0;
    let mut probs = Vec::with_capacity(items.len());
    for chunk in items.chunks(EVAL_CHUNK) {
        let (batch, labels) = load_batch(network, src, chunk)?;
        let p = network.predict(&batch)?;
        let pt = Tensor::from_vec(crate::tensor::Shape::new(p.len(), 1, 1, 1), p)?;
        total += crate::ops::bce_loss(&pt, &labels)?.to_f64_lossy() * chunk.len() as f64;
        probs.extend(pt.data().iter().map(|v| v.to_f64_lossy()));
    }
    Ok((total / items.len().max(1) as f64, probs))
}

/// Classify every image of `src` at the 0.5 threshold.
pub fn evaluate<T: Real>(network: &Network<T>, src: &dyn ImageSource) -> Result<Evaluation> {
    let items = all_items(src);
    if items.is_empty() {
        return Err(Error::EmptyFold);
    }
    let (_, probabilities) = sweep(network, src, &items)?;
    let labels: Vec<u8> = items.iter().map(|&(l, _)| l.target()).collect();
    let cm = confusion(&probabilities, &labels, DECISION_THRESHOLD)?;
    Ok(Evaluation {
        confusion: cm,
        metrics: MetricsReport::new(&cm, network.params_millions())?,
        probabilities,
        labels,
    })
}

/// Train from freshly zeroed Adam moments.
pub fn train<T: Real>(
    network: &mut Network<T>,
    fold: &FoldSpec,
    train_src: &dyn ImageSource,
    val_src: &dyn ImageSource,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let adam = {
        let params: Vec<&Tensor<T>> = network.params().entries().iter().map(|p| &p.value).collect();
        AdamState::zeros_like(&params)
    };
    train_resume(network, adam, fold, train_src, val_src, config)
}

/// Continue training from an existing optimizer state. Shuffling draws from
/// a stream keyed by the seed and the optimizer step reached so far.
pub fn train_resume<T: Real>(
    network: &mut Network<T>,
    mut adam: AdamState<T>,
    fold: &FoldSpec,
    train_src: &dyn ImageSource,
    val_src: &dyn ImageSource,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    if adam.m.len() != network.params().len() || adam.v.len() != network.params().len() {
        return Err(Error::LengthMismatch {
            expected: network.params().len(),
            found: adam.m.len(),
        });
    }
    let mut items = fold_items(fold, train_src)?;
    let opt = config.adam();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(adam.step);

    let (initial_loss, _) = sweep(network, train_src, &items)?;
    info!("fold {}: {} training images, initial loss {initial_loss:.6}", fold.index, items.len());

    let start_step = adam.step;
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        if config.shuffle {
            items.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for batch_items in items.chunks(config.batch_size) {
            let (batch, labels) = load_batch(network, train_src, batch_items)?;
            let (loss, grads) = network.loss_and_gradients(&batch, &labels)?;
            loss_sum += loss.to_f64_lossy() * batch_items.len() as f64;
            adam.step += 1;
            let mut params: Vec<&mut Tensor<T>> = network.params_mut().tensors_mut().collect();
            adam_step(&mut params, &grads, &mut adam.m, &mut adam.v, &opt, adam.step)?;
        }
        let train_loss = loss_sum / items.len() as f64;
        let eval = evaluate(network, val_src)?;
        let row = TraceRow::new(epoch, train_loss, &eval.metrics);
        info!(
            "epoch {epoch}: loss {train_loss:.6} val acc {}",
            crate::evaluation::metrics::format_metric(eval.metrics.acc)
        );
        trace.push(row);
    }
    let (final_loss, _) = sweep(network, train_src, &items)?;
    Ok(TrainOutcome {
        trace,
        steps: adam.step - start_step,
        initial_loss,
        final_loss,
        adam,
    })
}
