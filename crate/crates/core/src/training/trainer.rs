use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use super::loss::{combined_loss, LossWeights};
use super::optim::{clip_grad_norm, poly_lr, Sgd};
use super::schedule::{choose_stride, DsdSchedule, Stage};
use crate::autodiff::{Shape, Tape, Tensor};
use crate::error::{bail, Error, Result};
use crate::eval::{dice_per_volume, predict_volume};
use crate::network::{Network, NetworkConfig};
use crate::rng;
use crate::sampling::{extract_stack, SliceStack};
use crate::volume::Volume;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    /// Not part of the serialized form; configuration files carry the
    /// network in its own section.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub network: NetworkConfig,
    pub batch_size: usize,
    /// Minibatch iterations per epoch.
    pub iterations_per_epoch: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    /// Exponent of the polynomial learning-rate decay.
    pub lr_decay_exponent: f64,
    /// Global gradient-norm bound; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub schedule: DsdSchedule,
    pub loss: LossWeights,
    pub seed: u64,
    /// Probability that a stack is centered on a slice containing a randomly
    /// chosen foreground class, rather than on a uniform slice.
    pub foreground_oversample: f64,
    /// Trailing volumes held out for validation Dice.
    pub validation_volumes: usize,
    /// Validate every this many epochs (and after the last one); 0 disables.
    pub validate_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            batch_size: 4,
            iterations_per_epoch: 8,
            learning_rate: 0.01,
            momentum: 0.99,
            nesterov: true,
            weight_decay: 3e-5,
            lr_decay_exponent: 0.9,
            grad_clip: Some(12.0),
            schedule: DsdSchedule::default(),
            loss: LossWeights::default(),
            seed: 0,
            foreground_oversample: 0.33,
            validation_volumes: 0,
            validate_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn thickness(&self) -> usize {
        self.network.thickness
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.schedule.validate()?;
        self.loss.validate()?;
        if self.batch_size == 0 || self.iterations_per_epoch == 0 {
            bail!(Config, "batch_size and iterations_per_epoch must be >= 1");
        }
        if !(self.learning_rate >= 0.0) || !(self.momentum >= 0.0 && self.momentum < 1.0) {
            bail!(Config, "learning_rate must be >= 0 and momentum in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.foreground_oversample) {
            bail!(Config, "foreground_oversample must be in [0, 1]");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                bail!(Config, "grad_clip must be positive");
            }
        }
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// Zero-based.
    pub epoch: usize,
    pub stage: Stage,
    pub stride_counts: BTreeMap<usize, usize>,
    pub train_loss: f64,
    /// Mean validation Dice per foreground class, when validated.
    pub val_dice: Option<Vec<f64>>,
}

/// Tab-separated per-epoch metrics:
///
/// ```text
/// epoch  stage  strides  train_loss  val_dice_1 ... val_dice_{C-1}
/// ```
///
/// `strides` is `stride:count` pairs joined by `,` in increasing stride
/// order. Losses and Dice scores use six decimals; a Dice cell is `-` when
/// the epoch was not validated.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub num_classes: usize,
    pub records: Vec<EpochRecord>,
}

impl MetricsLog {
    pub fn write_header(&self, f: &mut impl fmt::Write) -> fmt::Result {
        f.write_str("epoch\tstage\tstrides\ttrain_loss")?;
        for c in 1..self.num_classes {
            write!(f, "\tval_dice_{c}")?;
        }
        f.write_char('\n')
    }
}

impl EpochRecord {
    pub fn write_row(&self, num_classes: usize, f: &mut impl fmt::Write) -> fmt::Result {
        write!(f, "{}\t{}\t", self.epoch, self.stage)?;
        for (i, (s, n)) in self.stride_counts.iter().enumerate() {
            if i > 0 {
                f.write_char(',')?;
            }
            write!(f, "{s}:{n}")?;
        }
        write!(f, "\t{:.6}", self.train_loss)?;
        for c in 0..num_classes.saturating_sub(1) {
            match &self.val_dice {
                Some(d) => write!(f, "\t{:.6}", d[c])?,
                None => f.write_str("\t-")?,
            }
        }
        f.write_char('\n')
    }
}

impl fmt::Display for MetricsLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = alloc::string::String::new();
        self.write_header(&mut s)?;
        for r in &self.records {
            r.write_row(self.num_classes, &mut s)?;
        }
        f.write_str(&s)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub network: Network,
    pub log: MetricsLog,
}

/// Stacks → `N×T×H×W` input and `N×H×W` target.
pub fn batch_tensors(stacks: &[SliceStack]) -> Result<(Tensor, Vec<u8>)> {
    let Some(first) = stacks.first() else { bail!(Data, "empty batch") };
    let shape = Shape::new(stacks.len(), first.thickness, first.height, first.width);
    let mut data = Vec::with_capacity(shape.len());
    let mut target = Vec::with_capacity(stacks.len() * shape.plane());
    for s in stacks {
        if (s.thickness, s.height, s.width) != (first.thickness, first.height, first.width) {
            bail!(Shape, "stacks in one batch must share T×H×W");
        }
        data.extend(s.data.iter().map(|&v| f64::from(v)));
        match &s.label {
            Some(l) => target.extend_from_slice(l),
            None => bail!(Data, "training stack without labels"),
        }
    }
    Ok((Tensor::new(shape, data)?, target))
}

pub fn train(volumes: &[Volume], config: &TrainConfig) -> Result<TrainOutput> {
    train_with(volumes, config, |_| {})
}

/// Trains a freshly built network, calling `on_epoch` after each epoch.
///
/// The last `validation_volumes` volumes are held out; the rest provide
/// training stacks. Each stack picks a volume and center slice uniformly
/// and a stride from [`choose_stride`]. Runs are deterministic for a fixed
/// config (including seed).
pub fn train_with(
    volumes: &[Volume],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutput> {
    config.validate()?;
    if volumes.is_empty() {
        bail!(Data, "no training volumes");
    }
    if config.validation_volumes >= volumes.len() {
        bail!(Data, "{} volumes cannot hold out {} for validation", volumes.len(), config.validation_volumes);
    }
    let (train_set, val_set) = volumes.split_at(volumes.len() - config.validation_volumes);
    let plane = (volumes[0].shape().height, volumes[0].shape().width);
    for v in volumes {
        if v.labels().is_none() {
            bail!(Data, "every training volume needs labels");
        }
        if (v.shape().height, v.shape().width) != plane {
            bail!(Data, "all volumes must share one in-plane size");
        }
    }
    let m = config.network.spatial_multiple();
    if !plane.0.is_multiple_of(m) || !plane.1.is_multiple_of(m) {
        bail!(Shape, "in-plane size {}x{} is not a multiple of {}", plane.0, plane.1, m);
    }

    let classes = config.network.num_classes;
    let class_slices: Vec<Vec<Vec<usize>>> = train_set.iter().map(|v| slices_by_class(v, classes)).collect();

    let mut network = Network::build(&config.network, rng::derive(config.seed, 1).random())?;
    let mut sampler = rng::derive(config.seed, 2);
    let mut sgd = Sgd::new(config.momentum, config.nesterov, config.weight_decay);
    let total = config.schedule.total_epochs();
    let thickness = config.thickness();
    let mut records = Vec::with_capacity(total);

    for epoch in 0..total {
        let stage = config.schedule.stage(epoch)?;
        let lr = poly_lr(config.learning_rate, epoch, total, config.lr_decay_exponent);
        let mut stride_counts = BTreeMap::new();
        let mut loss_sum = 0.0;
        for _ in 0..config.iterations_per_epoch {
            let mut stacks = Vec::with_capacity(config.batch_size);
            for _ in 0..config.batch_size {
                let vi = sampler.random_range(0..train_set.len());
                let v = &train_set[vi];
                let mut center = sampler.random_range(1..=v.depth());
                if sampler.random_bool(config.foreground_oversample) {
                    let with_class = &class_slices[vi][sampler.random_range(1..classes)];
                    if !with_class.is_empty() {
                        center = with_class[sampler.random_range(0..with_class.len())];
                    }
                }
                let stride = choose_stride(epoch, &config.schedule, &mut sampler)?;
                *stride_counts.entry(stride).or_insert(0) += 1;
                stacks.push(extract_stack(v, center, thickness, stride)?);
            }
            let (input, target) = batch_tensors(&stacks)?;
            let mut tape = Tape::new();
            let params = network.bind(&mut tape, true);
            let x = tape.constant(input);
            let logits = network.forward(&mut tape, &params, x)?;
            let loss = combined_loss(&mut tape, logits, &target, &config.loss)?;
            let value = tape.value(loss).item().unwrap_or(f64::NAN);
            if !value.is_finite() {
                return Err(Error::Divergence { epoch, loss: value });
            }
            tape.backward(loss)?;
            let mut grads: Vec<Vec<f64>> = params
                .vars()
                .iter()
                .zip(network.params())
                .map(|(&v, p)| tape.grad(v).map_or_else(|| alloc::vec![0.0; p.shape().len()], |g| g.to_vec()))
                .collect();
            drop(tape);
            if let Some(max) = config.grad_clip {
                clip_grad_norm(&mut grads, max);
            }
            sgd.step(network.params_mut(), &grads, lr)?;
            loss_sum += value;
        }
        let last = epoch + 1 == total;
        let validate =
            !val_set.is_empty() && config.validate_every > 0 && ((epoch + 1) % config.validate_every == 0 || last);
        let val_dice = if validate { Some(validation_dice(&network, val_set, thickness)?) } else { None };
        let record = EpochRecord {
            epoch,
            stage,
            stride_counts,
            train_loss: loss_sum / config.iterations_per_epoch as f64,
            val_dice,
        };
        on_epoch(&record);
        records.push(record);
    }
    Ok(TrainOutput { network, log: MetricsLog { num_classes: config.network.num_classes, records } })
}

/// For each class, the 1-based slices where it occurs.
fn slices_by_class(volume: &Volume, classes: usize) -> Vec<Vec<usize>> {
    let mut out = alloc::vec![Vec::new(); classes];
    for z in 0..volume.depth() {
        let labels = volume.label_slice(z).expect("checked for labels");
        for (c, list) in out.iter_mut().enumerate() {
            if labels.iter().any(|&l| usize::from(l) == c) {
                list.push(z + 1);
            }
        }
    }
    out
}

fn validation_dice(network: &Network, volumes: &[Volume], thickness: usize) -> Result<Vec<f64>> {
    let classes = network.config().num_classes;
    let mut sums = alloc::vec![0.0; classes - 1];
    for v in volumes {
        let pred = predict_volume(network, v, thickness)?;
        let gt = v
            .label_volume()
            .ok_or_else(|| Error::Data(alloc::string::String::from("validation volume needs labels")))?;
        for (c, s) in sums.iter_mut().enumerate() {
            *s += dice_per_volume(&pred, &gt, (c + 1) as u8)?;
        }
    }
    Ok(sums.into_iter().map(|s| s / volumes.len() as f64).collect())
}
