//! Writes the synthetic Desharnais- and ISBSG-shaped fixtures as CSV.
//!
//! cargo run --example synthetic -- <out-dir> [seed]

use std::{env, fs, path::PathBuf};

use effort_core::fixtures;

fn main() -> std::io::Result<()> {
    let mut args = env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| ".".into()));
    let seed: u64 = args
        .next()
        .map_or(1, |s| s.parse().expect("seed must be an integer"));
    fs::create_dir_all(&dir)?;
    fs::write(
        dir.join("synthetic_desharnais.csv"),
        fixtures::desharnais_csv(81, seed),
    )?;
    fs::write(
        dir.join("synthetic_isbsg.csv"),
        fixtures::isbsg_csv(300, seed),
    )?;
    Ok(())
}
