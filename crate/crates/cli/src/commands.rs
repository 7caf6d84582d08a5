use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use relight_core::data::{load_image, save_image, scan_dataset, synth_generate, Manifest, SynthConfig};
use relight_core::timing::{compare_stacks, WARMUPS};
use relight_core::train::{evaluate_manifest, train_two_stage, StepRecord};
use relight_core::{infer as run_net, AdamState, Checkpoint, NetConfig, Params, TrainObserver};

use crate::config::{CliConfig, ConfigError};

pub const THREADS_VAR: &str = "RELIGHT_THREADS";

pub fn configure_threads() -> Result<()> {
    let n = match std::env::var(THREADS_VAR) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| ConfigError(format!("{THREADS_VAR} must be a positive integer, got {v:?}")))?,
        Err(_) => 1,
    };
    relight_core::set_threads(n);
    Ok(())
}

fn echo(pairs: &[(&str, String)]) {
    println!("# effective configuration");
    for (k, v) in pairs {
        println!("{k} = {v}");
    }
}

pub fn synth(seed: u64, scenes: usize, size: usize, split: &str, out: &Path) -> Result<()> {
    echo(&[
        ("seed", seed.to_string()),
        ("scenes", scenes.to_string()),
        ("size", size.to_string()),
        ("split", split.to_string()),
        ("out", out.display().to_string()),
    ]);
    let cfg = SynthConfig {
        seed,
        scenes,
        size,
        split: split.to_string(),
    };
    let manifest = synth_generate(out, &cfg)?;
    println!("wrote {} scenes under {}", manifest.len(), out.display());
    Ok(())
}

fn load_manifest(
    root: Option<&Path>,
    manifest: Option<&Path>,
    split: &str,
    input_tag: &str,
    target_tag: &str,
) -> Result<Manifest> {
    let m = match (manifest, root) {
        (Some(csv), _) => {
            let m = Manifest::read_csv(csv, split)?;
            m.validate()?;
            m
        }
        (None, Some(root)) => scan_dataset(root, split, input_tag, target_tag)?,
        (None, None) => return Err(ConfigError("no dataset given: set data_root, manifest or --data".into()).into()),
    };
    if m.skipped > 0 {
        log::warn!("{} incomplete scenes skipped", m.skipped);
    }
    Ok(m)
}

/// Writes the step log and periodic checkpoints during training.
struct TrainWriter {
    log: BufWriter<File>,
    dir: PathBuf,
    every: usize,
    epochs: usize,
    epoch_loss: (f64, usize),
}

impl TrainObserver for TrainWriter {
    fn on_step(&mut self, r: &StepRecord) -> relight_core::Result<()> {
        writeln!(self.log, "{}", r.log_line())?;
        self.epoch_loss.0 += r.loss;
        self.epoch_loss.1 += 1;
        Ok(())
    }

    fn on_epoch_end(
        &mut self,
        stage: u8,
        epoch: usize,
        params: &Params<f32>,
        adam: &AdamState<f32>,
        global_step: u64,
    ) -> relight_core::Result<()> {
        self.epochs += 1;
        let (sum, n) = std::mem::take(&mut self.epoch_loss);
        info!(
            "stage {stage} epoch {epoch}: mean loss {:.6} over {n} steps",
            sum / n.max(1) as f64
        );
        self.log.flush()?;
        if self.every > 0 && self.epochs.is_multiple_of(self.every) {
            let ck = Checkpoint {
                params: params.clone(),
                adam: Some(adam.clone()),
                global_step,
                stage,
            };
            let path = self.dir.join(format!("epoch_{:05}.dmsh", self.epochs));
            ck.save(&path)?;
            info!("saved {}", path.display());
        }
        Ok(())
    }

    fn on_stage_end(&mut self, stage: u8, _params: &Params<f32>) -> relight_core::Result<()> {
        info!("stage {stage} done");
        self.log.flush()?;
        Ok(())
    }
}

pub fn train(config: Option<&Path>, data: Option<PathBuf>, out: Option<PathBuf>, overrides: &[String]) -> Result<()> {
    let mut cfg = CliConfig::default();
    if let Some(path) = config {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply_text(&text)?;
    }
    for pair in overrides {
        cfg.set_pair(pair)?;
    }
    if data.is_some() {
        cfg.data_root = data;
    }
    if out.is_some() {
        cfg.out_dir = out;
    }
    print!("# effective configuration\n{}", cfg.render());
    cfg.train.validate()?;
    let Some(out_dir) = cfg.out_dir.clone() else {
        return Err(ConfigError("no output directory: set out_dir or --out".into()).into());
    };

    let manifest = load_manifest(
        cfg.data_root.as_deref(),
        cfg.manifest.as_deref(),
        &cfg.split,
        &cfg.input_tag,
        &cfg.target_tag,
    )?;
    info!("training on {} pairs", manifest.len());
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("config.txt"), cfg.render())?;
    fs::write(out_dir.join("manifest.csv"), manifest.to_csv()?)?;

    let mut writer = TrainWriter {
        log: BufWriter::new(File::create(out_dir.join("train.log"))?),
        dir: out_dir.clone(),
        every: cfg.checkpoint_every,
        epochs: 0,
        epoch_loss: (0.0, 0),
    };
    let result = train_two_stage(&cfg.train, &manifest, &mut writer);
    writer.log.flush()?;
    let outcome = result?;
    let path = out_dir.join("final.dmsh");
    outcome.checkpoint.save(&path)?;
    let last = outcome.history.last().map_or(f64::NAN, |r| r.loss);
    println!(
        "{} steps, final loss {last:.6}, checkpoint {}",
        outcome.checkpoint.global_step,
        path.display()
    );
    Ok(())
}

pub fn eval(ckpt: &Path, data: &Path, split: &str, manifest: Option<&Path>, tsv: Option<&Path>) -> Result<()> {
    echo(&[
        ("ckpt", ckpt.display().to_string()),
        ("data", data.display().to_string()),
        ("split", split.to_string()),
        ("manifest", manifest.map_or("none".into(), |p| p.display().to_string())),
    ]);
    let ck = Checkpoint::load(ckpt)?;
    let m = load_manifest(
        Some(data),
        manifest,
        split,
        relight_core::data::INPUT_TAG,
        relight_core::data::TARGET_TAG,
    )?;
    let report = evaluate_manifest(&ck.params, &m)?;
    print!("{}", report.to_table());
    if let Some(path) = tsv {
        fs::write(path, report.to_tsv())?;
    }
    Ok(())
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn infer(ckpt: &Path, input: &Path, out: &Path) -> Result<()> {
    echo(&[
        ("ckpt", ckpt.display().to_string()),
        ("in", input.display().to_string()),
        ("out", out.display().to_string()),
    ]);
    let ck = Checkpoint::load(ckpt)?;
    let jobs: Vec<(PathBuf, PathBuf)> = if input.is_dir() {
        let files = png_files(input)?;
        if files.is_empty() {
            bail!(relight_core::Error::Dataset(format!(
                "no PNG files in {}",
                input.display()
            )));
        }
        fs::create_dir_all(out)?;
        files
            .into_iter()
            .map(|f| {
                let name = f.file_name().expect("listed file").to_owned();
                (f, out.join(name))
            })
            .collect()
    } else {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        vec![(input.to_path_buf(), out.to_path_buf())]
    };
    for (src, dst) in &jobs {
        let image = load_image(src)?;
        let pred = run_net(&ck.params, &image)?.clamp(0.0, 1.0);
        save_image(&pred, dst)?;
        info!("{} -> {}", src.display(), dst.display());
    }
    println!("relit {} image(s)", jobs.len());
    Ok(())
}

pub fn bench(ckpt: Option<&Path>, size: usize, repeats: usize, base_channels: usize) -> Result<()> {
    let net = match ckpt {
        Some(p) => *Checkpoint::load(p)?.config(),
        None => NetConfig::new(base_channels, 2, 0)?,
    };
    echo(&[
        ("base_channels", net.base_channels.to_string()),
        ("init_seed", net.init_seed.to_string()),
        ("size", size.to_string()),
        ("repeats", repeats.to_string()),
        ("warmups", WARMUPS.to_string()),
        ("threads", relight_core::threads().to_string()),
    ]);
    let t = compare_stacks(net, size, WARMUPS, repeats)?;
    println!("single_median_s = {:.6}", t.single_median());
    println!("stacked_median_s = {:.6}", t.stacked_median());
    println!("ratio = {:.3}", t.ratio());
    Ok(())
}
