//! The `sheetqv` command line.
//!
//! Exit codes: 0 success, 1 a statistical verdict failed, 2 bad configuration
//! or input file, 3 runtime failure.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Deserialize;

use sheetqv_core::limit::write_tightness_csv;
use sheetqv_core::{
    generate_sheet, run_campaign, write_dump, write_reports_csv, CampaignSpec, Grid, McSummary, SeedSpec, SheetRole,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERDICT: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "sheetqv", version, about = "Quadratic variation of Brownian-sheet diffusions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte Carlo campaign described by a TOML config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (0 = all cores); overrides the config.
        #[arg(long)]
        workers: Option<usize>,
        /// Master seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for summary.json and reports.csv; overrides the config paths.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the verdict table of a summary JSON file.
    Report { summary: PathBuf },
    /// Write one Brownian sheet in the binary dump format.
    DumpSheet {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        stream: Option<u64>,
        /// `driving_w` or `independent_b`.
        #[arg(long)]
        role: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Outcome of a subcommand: exit code and an optional message for stderr.
pub type Outcome = (u8, Option<String>);

pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Simulate {
            config,
            workers,
            seed,
            out,
        } => cmd_simulate(&config, workers, seed, out.as_deref()),
        Command::Report { summary } => cmd_report(&summary),
        Command::DumpSheet {
            config,
            m,
            seed,
            stream,
            role,
            out,
        } => cmd_dump_sheet(
            config.as_deref(),
            DumpOverrides {
                m,
                seed,
                stream,
                role,
                out,
            },
        ),
    }
}

fn fail(code: u8, err: impl std::fmt::Display) -> Outcome {
    (code, Some(err.to_string()))
}

/// A simulate config: the campaign fields plus output locations.
#[derive(Debug)]
pub struct SimulateConfig {
    pub spec: CampaignSpec,
    pub summary_json: PathBuf,
    pub reports_csv: PathBuf,
    pub workers: usize,
}

const OUTPUT_KEYS: [&str; 3] = ["summary_json", "reports_csv", "workers"];

pub fn parse_simulate_config(text: &str) -> anyhow::Result<SimulateConfig> {
    let mut table: toml::Table = toml::from_str(text)?;
    let mut take_path = |key: &str, default: &str| -> anyhow::Result<PathBuf> {
        match table.remove(key) {
            None => Ok(PathBuf::from(default)),
            Some(toml::Value::String(s)) => Ok(PathBuf::from(s)),
            Some(_) => anyhow::bail!("`{key}` must be a string"),
        }
    };
    let summary_json = take_path(OUTPUT_KEYS[0], "summary.json")?;
    let reports_csv = take_path(OUTPUT_KEYS[1], "reports.csv")?;
    let workers = match table.remove(OUTPUT_KEYS[2]) {
        None => 0,
        Some(toml::Value::Integer(w)) if w >= 0 => w as usize,
        Some(_) => anyhow::bail!("`workers` must be a non-negative integer"),
    };
    let spec: CampaignSpec = toml::Value::Table(table).try_into()?;
    Ok(SimulateConfig {
        spec,
        summary_json,
        reports_csv,
        workers,
    })
}

fn create(path: &Path) -> anyhow::Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn cmd_simulate(config: &Path, workers: Option<usize>, seed: Option<u64>, out: Option<&Path>) -> Outcome {
    let text = match fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, format!("reading {}: {e}", config.display())),
    };
    let mut cfg = match parse_simulate_config(&text) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, format!("{}: {e}", config.display())),
    };
    if let Some(w) = workers {
        cfg.workers = w;
    }
    if let Some(s) = seed {
        cfg.spec.master_seed = s;
    }
    if let Some(dir) = out {
        cfg.summary_json = dir.join("summary.json");
        cfg.reports_csv = dir.join("reports.csv");
    }
    if let Err(e) = cfg.spec.validate() {
        return fail(EXIT_CONFIG, format!("{}: {e}", config.display()));
    }
    let output = match run_campaign(&cfg.spec, cfg.workers) {
        Ok(o) => o,
        Err(e) => return fail(EXIT_RUNTIME, e),
    };
    let written = (|| -> anyhow::Result<()> {
        let mut json = create(&cfg.summary_json)?;
        json.write_all(output.summary.to_json()?.as_bytes())?;
        json.write_all(b"\n")?;
        json.flush()?;
        let csv = create(&cfg.reports_csv)?;
        match &output.summary.tightness {
            Some(rows) => write_tightness_csv(rows, csv)?,
            None => write_reports_csv(&output.reports, csv)?,
        }
        Ok(())
    })();
    if let Err(e) = written {
        return fail(EXIT_RUNTIME, format!("{e:#}"));
    }
    print!("{}", verdict_table(&output.summary));
    if output.summary.all_pass() {
        (EXIT_OK, None)
    } else {
        fail(EXIT_VERDICT, "one or more verdicts failed")
    }
}

/// Fixed-format verdict table: one row per verdict.
pub fn verdict_table(summary: &McSummary) -> String {
    let mut out = format!("{:>8}  {:>14}  {:>14}  {:<4}  {}\n", "n_obs", "statistic", "threshold", "pass", "check");
    for v in &summary.verdicts {
        out.push_str(&format!(
            "{:>8}  {:>14.6e}  {:>14.6e}  {:<4}  {}\n",
            v.n_obs,
            v.statistic,
            v.threshold,
            if v.pass { "pass" } else { "FAIL" },
            v.description
        ));
    }
    out
}

pub fn cmd_report(path: &Path) -> Outcome {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, format!("reading {}: {e}", path.display())),
    };
    match McSummary::from_json(&text) {
        Ok(summary) => {
            print!("{}", verdict_table(&summary));
            (EXIT_OK, None)
        }
        Err(e) => fail(EXIT_CONFIG, format!("{}: {e}", path.display())),
    }
}

fn default_stream() -> u64 {
    0
}
fn default_role() -> SheetRole {
    SheetRole::DrivingW
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpConfig {
    pub m: usize,
    pub master_seed: u64,
    #[serde(default = "default_stream")]
    pub stream_index: u64,
    #[serde(default = "default_role")]
    pub sheet_role: SheetRole,
    pub output: PathBuf,
}

#[derive(Debug, Default)]
pub struct DumpOverrides {
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub stream: Option<u64>,
    pub role: Option<String>,
    pub out: Option<PathBuf>,
}

fn dump_config(config: Option<&Path>, o: DumpOverrides) -> anyhow::Result<DumpConfig> {
    let mut table = match config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<toml::Table>(&text)?
        }
        None => toml::Table::new(),
    };
    if let Some(m) = o.m {
        table.insert("m".into(), toml::Value::Integer(i64::try_from(m)?));
    }
    if let Some(s) = o.seed {
        table.insert("master_seed".into(), toml::Value::Integer(i64::try_from(s)?));
    }
    if let Some(k) = o.stream {
        table.insert("stream_index".into(), toml::Value::Integer(i64::try_from(k)?));
    }
    if let Some(r) = o.role {
        table.insert("sheet_role".into(), toml::Value::String(r));
    }
    if let Some(p) = o.out {
        table.insert("output".into(), toml::Value::String(p.to_string_lossy().into_owned()));
    }
    Ok(toml::Value::Table(table).try_into()?)
}

pub fn cmd_dump_sheet(config: Option<&Path>, overrides: DumpOverrides) -> Outcome {
    let cfg = match dump_config(config, overrides) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, format!("{e:#}")),
    };
    let grid = match Grid::new(cfg.m) {
        Ok(g) => g,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let sheet = generate_sheet(grid, SeedSpec::new(cfg.master_seed, cfg.stream_index, cfg.sheet_role));
    let written = (|| -> anyhow::Result<()> {
        let mut file = create(&cfg.output)?;
        write_dump(&sheet, &mut file)?;
        file.flush()?;
        Ok(())
    })();
    match written {
        Ok(()) => (EXIT_OK, None),
        Err(e) => fail(EXIT_RUNTIME, format!("{e:#}")),
    }
}
