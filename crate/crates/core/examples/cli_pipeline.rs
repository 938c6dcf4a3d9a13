//! The command line end to end: synth, corrupt, train, denoise, evaluate.

use std::error::Error;
use std::io::Write;
use std::path::Path;

use msdnet::cli;

const CONFIG: &str = "base_channels = 4
block_growth = 1
unet_widths = 4,8,16
epochs = 2
batch_size = 2
patch_size = 16
";

fn msdnet(args: &[&str], out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    writeln!(out, "$ msdnet {}", args.join(" "))?;
    let mut err = Vec::new();
    let code = cli::run(std::iter::once("msdnet").chain(args.iter().copied()), out, &mut err);
    if code != 0 {
        return Err(format!("exit {code}: {}", String::from_utf8_lossy(&err)).into());
    }
    Ok(())
}

pub fn run_example(dir: &Path, out: &mut dyn Write) -> Result<(), Box<dyn Error>> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    std::fs::create_dir_all(dir.join("data"))?;
    std::fs::write(dir.join("tiny.cfg"), CONFIG)?;

    msdnet(&["synth", "--seed", "1", "--bands", "1", "--height", "32", "--width", "32", "--out", &p("data/train.hsif")], out)?;
    msdnet(&["synth", "--seed", "2", "--bands", "2", "--height", "16", "--width", "16", "--out", &p("clean.hsif")], out)?;
    msdnet(&["add-noise", "--in", &p("clean.hsif"), "--out", &p("noisy.hsif"), "--blind", "10", "70", "--seed", "3"], out)?;
    msdnet(&["train", "--config", &p("tiny.cfg"), "--data-dir", &p("data"), "--out-checkpoint", &p("model.msdc")], out)?;
    msdnet(&["denoise", "--in", &p("noisy.hsif"), "--checkpoint", &p("model.msdc"), "--out", &p("denoised.hsif")], out)?;
    msdnet(&["evaluate", "--clean", &p("clean.hsif"), "--checkpoint", &p("model.msdc"), "--sigmas", "30,50", "--report", &p("report.csv")], out)?;
    msdnet(&["export-band", "--in", &p("denoised.hsif"), "--band", "1", "--out", &p("denoised.pgm")], out)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    run_example(dir.path(), &mut std::io::stdout())
}
