use std::path::{Path, PathBuf};

use clap::Args;
use log::info;
use wavecal::sim::{
    compare_methods, comparison_csv, replications_csv, run_scenario, summary_csv, RunOptions, ScenarioFile,
    ScenarioReport,
};

use crate::failure::Failure;
use crate::manifest::{hash_json, now, read_input, Outputs, RunManifest, ScenarioEntry};
use crate::{Global, OutDir};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPLICATIONS_FILE: &str = "replications.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file (TOML with `[[scenario]]` tables).
    pub scenario_file: PathBuf,
    #[command(flatten)]
    pub out: OutDir,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Run only the scenario with this id (repeatable).
    #[arg(long = "only", value_name = "ID")]
    pub only: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Scenario file with `[[comparison]]` pairs.
    pub scenario_file: PathBuf,
    #[command(flatten)]
    pub out: OutDir,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Args)]
pub struct Overrides {
    /// Replications per scenario.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Chain length of Gamma-route scenarios.
    #[arg(long)]
    pub iterations: Option<usize>,
}

/// Parses the file and applies the command-line overrides.
fn load(
    path: &Path,
    overrides: &Overrides,
    global: &Global,
) -> Result<(ScenarioFile, crate::manifest::InputEntry), Failure> {
    let (bytes, entry) = read_input(path)?;
    let text =
        String::from_utf8(bytes).map_err(|_| Failure::validation(format!("{}: not UTF-8 text", path.display())))?;
    let mut file = ScenarioFile::parse(&text).map_err(|e| Failure::from(e).context(path.display()))?;
    for spec in &mut file.scenarios {
        if let Some(seed) = global.seed {
            spec.seed = seed;
        }
        if let Some(r) = overrides.replications {
            spec.replications = r;
        }
        if let Some(k) = overrides.iterations {
            spec.sampler.iterations = k;
        }
    }
    file.validate().map_err(|e| Failure::from(e).context(path.display()))?;
    Ok((file, entry))
}

fn options(global: &Global) -> Result<RunOptions, Failure> {
    if global.threads == Some(0) {
        return Err(Failure::validation("--threads must be at least 1"));
    }
    Ok(RunOptions {
        threads: global.threads,
        full_scale: global.full_scale,
    })
}

fn manifest(command: &'static str, global: &Global, file: &ScenarioFile, started: String) -> RunManifest {
    let scenarios = file
        .scenarios
        .iter()
        .map(|s| {
            let spec = if global.full_scale {
                s.at_full_scale()
            } else {
                s.clone()
            };
            ScenarioEntry {
                id: s.id.clone(),
                hash: spec.canonical_hash(),
            }
        })
        .collect();
    RunManifest {
        tool: "wavecal",
        version: env!("CARGO_PKG_VERSION"),
        command,
        scenario_hash: hash_json(file),
        seed: global.seed.unwrap_or_else(|| file.scenarios[0].seed),
        threads: global.threads,
        full_scale: global.full_scale,
        started,
        finished: String::new(),
        scenarios,
        inputs: Vec::new(),
        outputs: Vec::new(),
    }
}

fn log_report(report: &ScenarioReport) {
    for row in &report.summary {
        info!(
            "{} {}: AMSE {:.6} (sd {:.6}, {} ok, {} failed)",
            row.scenario_id, row.component, row.amse, row.sd, row.replications, row.failures
        );
    }
}

pub fn simulate(args: &SimulateArgs, global: &Global) -> Result<(), Failure> {
    let started = now();
    let options = options(global)?;
    let (mut file, input) = load(&args.scenario_file, &args.overrides, global)?;
    if !args.only.is_empty() {
        for id in &args.only {
            file.get(id)?;
        }
        file.scenarios.retain(|s| args.only.contains(&s.id));
        file.comparisons.clear();
    }
    let mut reports = Vec::with_capacity(file.scenarios.len());
    for spec in &file.scenarios {
        info!("running scenario `{}` ({} replications)", spec.id, spec.replications);
        let report = run_scenario(spec, &options)?;
        log_report(&report);
        reports.push(report);
    }
    let mut outputs = Outputs::default();
    outputs.add(SUMMARY_FILE, summary_csv(&reports)?);
    outputs.add(REPLICATIONS_FILE, replications_csv(&reports)?);
    let mut manifest = manifest("simulate", global, &file, started);
    manifest.inputs.push(input);
    outputs.commit(&args.out.out, manifest)?;
    Ok(())
}

pub fn compare(args: &CompareArgs, global: &Global) -> Result<(), Failure> {
    let started = now();
    let options = options(global)?;
    let (file, input) = load(&args.scenario_file, &args.overrides, global)?;
    if file.comparisons.is_empty() {
        return Err(Failure::validation(format!(
            "{}: no [[comparison]] pairs to run",
            args.scenario_file.display()
        )));
    }
    let mut comparisons = Vec::with_capacity(file.comparisons.len());
    for pair in &file.comparisons {
        info!("comparing `{}` with `{}`", pair.left, pair.right);
        let cmp = compare_methods(file.get(&pair.left)?, file.get(&pair.right)?, &options)?;
        log_report(&cmp.left);
        log_report(&cmp.right);
        comparisons.push(cmp);
    }
    let reports: Vec<&ScenarioReport> = comparisons.iter().flat_map(|c| [&c.left, &c.right]).collect();
    let mut outputs = Outputs::default();
    outputs.add(COMPARISON_FILE, comparison_csv(&comparisons)?);
    outputs.add(SUMMARY_FILE, summary_csv(reports.iter().copied())?);
    outputs.add(REPLICATIONS_FILE, replications_csv(reports.iter().copied())?);
    let mut manifest = manifest("compare", global, &file, started);
    manifest.inputs.push(input);
    outputs.commit(&args.out.out, manifest)?;
    Ok(())
}
