//! Flat `key = value` configuration files.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use relight_core::data::{INPUT_TAG, TARGET_TAG};
use relight_core::{LossMode, NetConfig, TrainConfig};

/// Every accepted key with its meaning. Defaults come from [`CliConfig::default`].
pub const KEYS: &[(&str, &str)] = &[
    ("base_channels", "feature width C of the first encoder layer"),
    ("stacks", "1 for the single network, 2 for the stacked variant"),
    ("init_seed", "seed of the weight initialization"),
    ("batch_size", "images per optimizer step"),
    ("epochs", "total epochs across both stages"),
    (
        "steps",
        "total optimizer steps across both stages, or none to count epochs",
    ),
    ("stage1_fraction", "share of the run trained with stage1_loss"),
    ("stage1_loss", "mse, cl or csl"),
    ("stage2_loss", "mse, cl or csl"),
    ("lr_init", "learning rate at the start of each stage"),
    ("lr_final", "learning rate at the end of each stage"),
    ("adam_beta1", "Adam first-moment decay"),
    ("adam_beta2", "Adam second-moment decay"),
    ("adam_eps", "Adam denominator offset"),
    ("seed", "seed of the per-epoch shuffling"),
    ("train_resize", "train on half-resolution images"),
    ("lambda_l1", "weight of the L1 term"),
    ("lambda_ssim", "weight of the SSIM term"),
    ("lambda_perceptual", "weight of the perceptual term"),
    ("lambda_tv", "weight of the total-variation term"),
    ("sobel_mix", "weight of the Sobel term in csl"),
    ("data_root", "dataset root, or none"),
    ("split", "subdirectory of data_root holding the scenes"),
    ("input_tag", "file stem of input images"),
    ("target_tag", "file stem of target images"),
    ("manifest", "CSV manifest used instead of scanning data_root, or none"),
    ("out_dir", "output directory for checkpoints and logs, or none"),
    (
        "checkpoint_every",
        "epochs between periodic checkpoints, 0 for final only",
    ),
];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub train: TrainConfig,
    pub data_root: Option<PathBuf>,
    pub split: String,
    pub input_tag: String,
    pub target_tag: String,
    pub manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint_every: usize,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            train: TrainConfig::default(),
            data_root: None,
            split: "train".into(),
            input_tag: INPUT_TAG.into(),
            target_tag: TARGET_TAG.into(),
            manifest: None,
            out_dir: None,
            checkpoint_every: 100,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| ConfigError(format!("{key}: cannot parse {value:?}: {e}")))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

impl CliConfig {
    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let t = &mut self.train;
        let net = &mut t.net;
        match key {
            "base_channels" => net.base_channels = parse(key, value)?,
            "stacks" => net.stacks = parse(key, value)?,
            "init_seed" => net.init_seed = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "steps" => t.steps = optional(key, value)?,
            "stage1_fraction" => t.stage1_fraction = parse(key, value)?,
            "stage1_loss" => t.stage1_loss = parse::<LossMode>(key, value)?,
            "stage2_loss" => t.stage2_loss = parse::<LossMode>(key, value)?,
            "lr_init" => t.lr_init = parse(key, value)?,
            "lr_final" => t.lr_final = parse(key, value)?,
            "adam_beta1" => t.adam.beta1 = parse(key, value)?,
            "adam_beta2" => t.adam.beta2 = parse(key, value)?,
            "adam_eps" => t.adam.eps = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "train_resize" => t.train_resize = parse(key, value)?,
            "lambda_l1" => t.weights.l1 = parse(key, value)?,
            "lambda_ssim" => t.weights.ssim = parse(key, value)?,
            "lambda_perceptual" => t.weights.perceptual = parse(key, value)?,
            "lambda_tv" => t.weights.tv = parse(key, value)?,
            "sobel_mix" => t.weights.sobel_mix = parse(key, value)?,
            "data_root" => self.data_root = optional(key, value)?,
            "split" => self.split = value.to_string(),
            "input_tag" => self.input_tag = value.to_string(),
            "target_tag" => self.target_tag = value.to_string(),
            "manifest" => self.manifest = optional(key, value)?,
            "out_dir" => self.out_dir = optional(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            _ => return Err(ConfigError(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Apply a `key=value` override given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("expected key=value, got {pair:?}")))?;
        self.set(k.trim(), v.trim())
    }

    /// Apply every assignment of a configuration file. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected `key = value`, got {raw:?}", n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| ConfigError(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        let net: &NetConfig = &t.net;
        Some(match key {
            "base_channels" => net.base_channels.to_string(),
            "stacks" => net.stacks.to_string(),
            "init_seed" => net.init_seed.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "epochs" => t.epochs.to_string(),
            "steps" => show(&t.steps),
            "stage1_fraction" => t.stage1_fraction.to_string(),
            "stage1_loss" => t.stage1_loss.to_string(),
            "stage2_loss" => t.stage2_loss.to_string(),
            "lr_init" => t.lr_init.to_string(),
            "lr_final" => t.lr_final.to_string(),
            "adam_beta1" => t.adam.beta1.to_string(),
            "adam_beta2" => t.adam.beta2.to_string(),
            "adam_eps" => t.adam.eps.to_string(),
            "seed" => t.seed.to_string(),
            "train_resize" => t.train_resize.to_string(),
            "lambda_l1" => t.weights.l1.to_string(),
            "lambda_ssim" => t.weights.ssim.to_string(),
            "lambda_perceptual" => t.weights.perceptual.to_string(),
            "lambda_tv" => t.weights.tv.to_string(),
            "sobel_mix" => t.weights.sobel_mix.to_string(),
            "data_root" => show(&self.data_root.as_ref().map(|p| p.display())),
            "split" => self.split.clone(),
            "input_tag" => self.input_tag.clone(),
            "target_tag" => self.target_tag.clone(),
            "manifest" => show(&self.manifest.as_ref().map(|p| p.display())),
            "out_dir" => show(&self.out_dir.as_ref().map(|p| p.display())),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            _ => return None,
        })
    }

    /// Every key with its resolved value, in [`KEYS`] order. The output is
    /// itself a valid configuration file.
    pub fn render(&self) -> String {
        KEYS.iter()
            .map(|(k, _)| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }
}
