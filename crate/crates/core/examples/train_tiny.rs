//! Train a narrow model for a few epochs, checkpoint halfway, and resume.

use std::error::Error;
use std::io::Write;
use std::path::Path;

use msdnet::config::RunConfig;
use msdnet::hsi::{extract_patches, synth_cube};
use msdnet::train::{load_checkpoint, save_checkpoint, train, train_with, Progress};

const CONFIG: &str = "
base_channels = 4
block_growth = 1
unet_widths = 4,8,16
epochs = 4
batch_size = 2
patch_size = 16
learning_rate = 0.001
seed = 5
";

pub fn run_example(dir: &Path, out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let cfg = RunConfig::parse(CONFIG)?;
    let cube = synth_cube(1, 1, 32, 32)?;
    let patches = extract_patches(&cube, cfg.train.patch_size, cfg.train.stride())?;
    writeln!(out, "{} patches, batch {}", patches.len(), cfg.train.batch_size)?;

    let mut half = cfg.clone();
    half.train.epochs = 2;
    let first = train(&patches, &half)?;
    let path = dir.join("half.msdc");
    save_checkpoint(&first, &path)?;
    writeln!(out, "saved epoch {} to {}", first.epoch, path.display())?;

    let mut log = |p: Progress| {
        if let Progress::Epoch { epoch, mean_loss } = p {
            let _ = writeln!(out, "epoch {} loss {mean_loss:.5}", epoch + 1);
        }
    };
    let resumed = train_with(&patches, &cfg, Some(load_checkpoint(&path)?), &mut log)?;
    let straight = train(&patches, &cfg)?;
    writeln!(out, "resumed run matches uninterrupted run: {}", resumed == straight)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    run_example(dir.path(), &mut std::io::stdout())
}
