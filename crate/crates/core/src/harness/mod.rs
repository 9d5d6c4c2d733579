//! Experiment orchestration: waterfall campaigns, table reproduction and
//! figure data.

mod plots;
mod rank;
mod tables;
mod waterfall;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub use plots::{emit_plot_data, evolution_series, EvolutionSeries, PlotFiles};
pub use rank::gf2_rank;
pub use tables::{reproduce_tables, Cell, OrderCheck, Table, TableOptions, TableReport, Tolerance};
pub use waterfall::{
    campaign_graph, run_waterfall, Counts, ExperimentConfig, ResultRow, ResultTable, RunControl,
};

use crate::error::Result;

/// Environment variable naming the directory under which runs write.
pub const OUTPUT_ROOT_VAR: &str = "SFC_OUTPUT_ROOT";

pub const WATERFALL_FILE: &str = "summary.json";
pub const PREDICTION_FILE: &str = "prediction.json";
pub const EVOLUTION_FILE: &str = "evolution.json";

/// `$SFC_OUTPUT_ROOT`, or `./sfc-output`.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("sfc-output"))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
