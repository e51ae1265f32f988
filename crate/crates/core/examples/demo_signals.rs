//! Writes the synthetic signals used by the configs in `configs/`.
//!
//! Usage: `cargo run --release --example demo_signals -- <out_dir>`

use std::path::PathBuf;

use spnf::signals::synth::{harmonics_1d, waves_2d};
use spnf::signals::write_signal;

fn main() -> spnf::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "configs/data".into()));
    std::fs::create_dir_all(&dir).map_err(|source| spnf::Error::Io { path: dir.clone(), source })?;
    write_signal(&harmonics_1d(1024, 8, 7)?, dir.join("harmonics_1d.spng"))?;
    write_signal(&waves_2d(128, 6, 5, 3)?, dir.join("waves_2d.spng"))?;
    println!("wrote signals to {}", dir.display());
    Ok(())
}
