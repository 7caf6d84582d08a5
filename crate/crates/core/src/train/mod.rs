//! Optimization, the two-stage training regime, evaluation and checkpoints.

mod adam;
mod checkpoint;
mod schedule;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use schedule::lr_at;

use crate::data::{load_samples, Manifest, Sample};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::losses::{LossMode, LossWeights, PerceptualNet};
use crate::metrics::{psnr, ssim_metric, MetricsReport, SampleMetrics};
use crate::net::{forward, infer, NetConfig, Params};
use crate::tensor::Tensor;

/// How long a stage runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageLength {
    Epochs(usize),
    /// Optimizer steps; epochs are repeated (and reshuffled) as needed.
    Steps(usize),
}

impl StageLength {
    fn steps(self, batches_per_epoch: usize) -> usize {
        match self {
            StageLength::Epochs(e) => e * batches_per_epoch,
            StageLength::Steps(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub net: NetConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// When set, stage lengths are counted in optimizer steps instead of epochs.
    pub steps: Option<usize>,
    /// Share of the run trained with the first-stage loss.
    pub stage1_fraction: f64,
    pub lr_init: f64,
    pub lr_final: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    pub stage1_loss: LossMode,
    pub stage2_loss: LossMode,
    /// Train on half-resolution copies of the images.
    pub train_resize: bool,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            net: NetConfig::default(),
            batch_size: 2,
            epochs: 2500,
            steps: None,
            stage1_fraction: 0.5,
            lr_init: 2e-3,
            lr_final: 5e-5,
            adam: AdamConfig::default(),
            seed: 0,
            stage1_loss: LossMode::Mse,
            stage2_loss: LossMode::Combined,
            train_resize: false,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.stage1_fraction) {
            return bad(format!(
                "stage1_fraction must lie in [0, 1], got {}",
                self.stage1_fraction
            ));
        }
        if !(self.lr_init.is_finite() && self.lr_final.is_finite() && self.lr_final >= 0.0) {
            return bad("learning rates must be finite and non-negative".into());
        }
        if self.lr_final > self.lr_init {
            return bad(format!("lr_final {} exceeds lr_init {}", self.lr_final, self.lr_init));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be positive".into());
        }
        Ok(())
    }

    /// The two stages implied by the totals and `stage1_fraction`.
    pub fn stages(&self) -> [StageConfig; 2] {
        let split = |total: usize| {
            let first = ((self.stage1_fraction * total as f64).ceil() as usize).min(total);
            (first, total - first)
        };
        let (a, b) = match self.steps {
            Some(s) => {
                let (a, b) = split(s);
                (StageLength::Steps(a), StageLength::Steps(b))
            }
            None => {
                let (a, b) = split(self.epochs);
                (StageLength::Epochs(a), StageLength::Epochs(b))
            }
        };
        [
            StageConfig {
                stage: 1,
                loss: self.stage1_loss,
                length: a,
            },
            StageConfig {
                stage: 2,
                loss: self.stage2_loss,
                length: b,
            },
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageConfig {
    pub stage: u8,
    pub loss: LossMode,
    pub length: StageLength,
}

/// One optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub global_step: u64,
    pub stage: u8,
    pub lr: f64,
    pub loss: f64,
    /// Unweighted value of each loss term.
    pub terms: Vec<(&'static str, f64)>,
}

impl StepRecord {
    /// `step<TAB>stage<TAB>lr<TAB>loss[<TAB>term=value...]`
    pub fn log_line(&self) -> String {
        let mut s = format!(
            "{}\t{}\t{:.6e}\t{:.8e}",
            self.global_step, self.stage, self.lr, self.loss
        );
        for (name, v) in &self.terms {
            let _ = write!(s, "\t{name}={v:.8e}");
        }
        s
    }
}

/// Hooks called from the training loop. All default to no-ops.
pub trait TrainObserver {
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }

    fn on_epoch_end(
        &mut self,
        _stage: u8,
        _epoch: usize,
        _params: &Params<f32>,
        _adam: &AdamState<f32>,
        _global_step: u64,
    ) -> Result<()> {
        Ok(())
    }

    fn on_stage_end(&mut self, _stage: u8, _params: &Params<f32>) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<StepRecord>,
}

/// Train one stage in place. Returns the per-step records.
#[allow(clippy::too_many_arguments)]
pub fn run_stage(
    params: &mut Params<f32>,
    adam: &mut AdamState<f32>,
    samples: &[Sample],
    stage: &StageConfig,
    cfg: &TrainConfig,
    perceptual: &PerceptualNet,
    global_step: &mut u64,
    observer: &mut dyn TrainObserver,
) -> Result<Vec<StepRecord>> {
    if samples.is_empty() {
        return Err(Error::Dataset("no training samples".into()));
    }
    let batches = samples.len().div_ceil(cfg.batch_size);
    let total = stage.length.steps(batches);
    let mut history = Vec::with_capacity(total);
    let mut step = 0;
    let mut epoch = 0;
    while step < total {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(((stage.stage as u64) << 32) | epoch as u64);
        order.shuffle(&mut rng);

        for chunk in order.chunks(cfg.batch_size) {
            if step == total {
                break;
            }
            let lr = lr_at(step, total, cfg.lr_init, cfg.lr_final)?;
            let record = train_step(params, adam, samples, chunk, stage, cfg, perceptual, lr, *global_step)?;
            observer.on_step(&record)?;
            history.push(record);
            step += 1;
            *global_step += 1;
        }
        epoch += 1;
        observer.on_epoch_end(stage.stage, epoch, params, adam, *global_step)?;
    }
    observer.on_stage_end(stage.stage, params)?;
    Ok(history)
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    params: &mut Params<f32>,
    adam: &mut AdamState<f32>,
    samples: &[Sample],
    batch: &[usize],
    stage: &StageConfig,
    cfg: &TrainConfig,
    perceptual: &PerceptualNet,
    lr: f64,
    global_step: u64,
) -> Result<StepRecord> {
    let inputs: Vec<&Tensor<f32>> = batch.iter().map(|&i| &samples[i].input).collect();
    let targets: Vec<&Tensor<f32>> = batch.iter().map(|&i| &samples[i].target).collect();

    let mut g = Graph::new();
    let vars = params.bind(&mut g, true);
    let x = g.constant(Tensor::stack(&inputs)?);
    let y = g.constant(Tensor::stack(&targets)?);
    let pred = forward(&mut g, &vars, params.config(), x)?;
    let loss = stage.loss.compute(&mut g, pred, y, &cfg.weights, perceptual)?;
    let value = g.scalar(loss.total)?;
    let terms: Vec<(&'static str, f64)> = loss.breakdown(&g)?.into_iter().map(|(n, _, v)| (n, v)).collect();
    if !value.is_finite() {
        let breakdown = terms
            .iter()
            .map(|(n, v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::NonFinite {
            step: global_step as usize,
            lr,
            breakdown: format!("total={value}, {breakdown}"),
        });
    }

    let mut grads = g.backward(loss.total)?;
    let grads: BTreeMap<String, Tensor<f32>> = vars
        .iter()
        .map(|(name, &v)| {
            let t = grads
                .take(v)
                .unwrap_or_else(|| Tensor::zeros(params.get(name).expect("bound from params").shape()));
            (name.clone(), t)
        })
        .collect();
    adam_step(params, &grads, adam, lr, &cfg.adam)?;

    Ok(StepRecord {
        global_step,
        stage: stage.stage,
        lr,
        loss: value,
        terms,
    })
}

/// Full two-stage run from a fresh initialization.
pub fn train_two_stage(
    cfg: &TrainConfig,
    manifest: &Manifest,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    let samples = load_samples(manifest, cfg.train_resize)?;
    train_two_stage_on(cfg, &samples, observer)
}

/// [`train_two_stage`] on already decoded samples.
pub fn train_two_stage_on(
    cfg: &TrainConfig,
    samples: &[Sample],
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Dataset("no training samples".into()));
    }
    let mut params = Params::init(cfg.net)?;
    let perceptual = PerceptualNet::new();
    let mut global_step = 0u64;
    let mut history = Vec::new();
    let mut adam = AdamState::new(&params);
    let mut last_stage = 0;
    for stage in cfg.stages() {
        adam = AdamState::new(&params);
        history.extend(run_stage(
            &mut params,
            &mut adam,
            samples,
            &stage,
            cfg,
            &perceptual,
            &mut global_step,
            observer,
        )?);
        last_stage = stage.stage;
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params,
            adam: Some(adam),
            global_step,
            stage: last_stage,
        },
        history,
    })
}

/// Full-resolution inference on every sample, clamped to [0, 1] and scored.
pub fn evaluate(params: &Params<f32>, samples: &[Sample]) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::Dataset("nothing to evaluate".into()));
    }
    let rows = samples
        .iter()
        .map(|s| {
            let pred = infer(params, &s.input)?.clamp(0.0, 1.0);
            if pred.shape() != s.target.shape() {
                return Err(Error::ShapeMismatch {
                    op: "evaluate",
                    lhs: pred.shape(),
                    rhs: s.target.shape(),
                });
            }
            Ok(SampleMetrics {
                id: s.id.clone(),
                psnr: psnr(&pred, &s.target, 1.0)?,
                ssim: ssim_metric(&pred, &s.target)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::from_rows(rows))
}

/// [`evaluate`] on the decoded pairs of `manifest`.
pub fn evaluate_manifest(params: &Params<f32>, manifest: &Manifest) -> Result<MetricsReport> {
    evaluate(params, &load_samples(manifest, false)?)
}
