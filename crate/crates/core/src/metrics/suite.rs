use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compare_summary, default_label, emit_plots, load_run, write_run, Comparison, PlotKind, RunSummary};
use crate::error::{Error, Result};
use crate::train::{train, ConfigOverrides};

/// Environment variable capping the number of runs trained at once.
pub const THREADS_VAR: &str = "FG_SFRQL_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteRun {
    pub id: String,
    /// Series label in plots and tables; defaults to the algorithm name.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub config: ConfigOverrides,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotSpec {
    pub kind: PlotKind,
    /// Ids of the runs to draw, all seeds included.
    pub runs: Vec<String>,
    /// Output path relative to the suite's output directory.
    pub out: PathBuf,
}

/// Runs × seeds, trained and written under `output_dir/<id>/seed_<seed>/`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSuite {
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub runs: Vec<SuiteRun>,
    #[serde(default)]
    pub plots: Vec<PlotSpec>,
}

impl ExperimentSuite {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let suite: Self =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() || self.runs.is_empty() {
            return Err(Error::Config("suite needs at least one run and one seed".into()));
        }
        for (k, r) in self.runs.iter().enumerate() {
            if self.runs[..k].iter().any(|o| o.id == r.id) {
                return Err(Error::Config(format!("duplicate run id {}", r.id)));
            }
        }
        for p in &self.plots {
            if let Some(bad) = p.runs.iter().find(|id| self.runs.iter().all(|r| &r.id != *id)) {
                return Err(Error::Config(format!("plot references unknown run {bad}")));
            }
        }
        Ok(())
    }

    pub fn run_dir(&self, id: &str, seed: u64) -> PathBuf {
        self.output_dir.join(id).join(format!("seed_{seed}"))
    }
}

/// Value of `FG_SFRQL_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub summaries: Vec<RunSummary>,
    pub comparison: Option<Comparison>,
}

/// Trains every run for every seed, then writes plots and, with two or more
/// labels, `compare.txt` and `compare.csv`.
pub fn run_suite(suite: &ExperimentSuite, base: &ConfigOverrides) -> Result<SuiteOutcome> {
    suite.validate()?;
    let mut jobs = Vec::new();
    for run in &suite.runs {
        for &seed in &suite.seeds {
            let seed_layer = ConfigOverrides {
                seed: Some(seed),
                ..Default::default()
            };
            let cfg = ConfigOverrides::resolve(&[base, &run.config, &seed_layer])?;
            let label = run.label.clone().unwrap_or_else(|| default_label(&cfg));
            jobs.push((suite.run_dir(&run.id, seed), cfg, label));
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let summaries = pool.install(|| {
        jobs.par_iter()
            .map(|(dir, cfg, label)| write_run(dir, &train(cfg)?, label))
            .collect::<Result<Vec<_>>>()
    })?;

    for plot in &suite.plots {
        let mut loaded = Vec::new();
        for id in &plot.runs {
            for &seed in &suite.seeds {
                loaded.push(load_run(&suite.run_dir(id, seed))?);
            }
        }
        emit_plots(&loaded, plot.kind, &suite.output_dir.join(&plot.out))?;
    }

    let comparison = match compare_summary(&summaries) {
        Ok(c) => {
            std::fs::write(suite.output_dir.join("compare.txt"), c.to_text())?;
            c.write_csv(BufWriter::new(File::create(suite.output_dir.join("compare.csv"))?))?;
            Some(c)
        }
        Err(Error::Usage(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(SuiteOutcome {
        summaries,
        comparison,
    })
}
