//! Config-driven experiment runs with hashed artifact directories.

mod artifacts;
mod config;
mod runner;

pub use artifacts::{sha256_hex, Artifacts, Manifest, ManifestEntry, Plot, MANIFEST};
pub use config::*;
pub use runner::{Check, CheckStatus, StageRecord, Summary};

use runner::Ctx;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const SUMMARY: &str = "summary.json";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{}", .0.to_json())]
    Config(ConfigError),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: Summary,
    pub manifest: Manifest,
}

impl RunOutcome {
    /// True when some numerical stage returned an error.
    pub fn stage_failed(&self) -> bool {
        self.summary.failed_stages() > 0
    }
}

/// Reads and validates a config; relative paths inside resolve against its directory.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, PathBuf, usize), RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(ConfigError::invalid("", &format!("cannot read {}: {e}", path.display()))))?;
    let cfg = parse_config(&text).map_err(RunError::Config)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let n = cfg.validate(&base).map_err(RunError::Config)?;
    Ok((cfg, base, n))
}

/// Runs every stage in memory, then writes artifacts and the manifest.
pub fn run_config(cfg: &ExperimentConfig, base: &Path, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let n = cfg.validate(base).map_err(RunError::Config)?;
    let field = cfg.field.build(base).map_err(RunError::Config)?;
    let u = field.as_ref();
    let mut ctx = Ctx::new();
    match &cfg.experiment {
        Experiment::Frequency(p) => runner::frequency(u, p, &mut ctx),
        Experiment::Monotonicity(p) => runner::monotonicity(u, p, cfg.seed, &mut ctx),
        Experiment::Minimize(p) => runner::minimize(u, p, &mut ctx),
        Experiment::Decay(p) => runner::decay(u, &cfg.field, p, &mut ctx),
        Experiment::Spectral(p) => runner::spectral(u, &cfg.field, p, &mut ctx),
        Experiment::Corollaries(p) => runner::corollaries(u, &cfg.field, p, &mut ctx),
        Experiment::FullPipeline(p) => runner::full_pipeline(u, &cfg.field, p, &mut ctx),
    }
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        kind: cfg.experiment.kind().to_string(),
        name: cfg.name.clone(),
        seed: cfg.seed,
        dim: n,
        stages: ctx.stages,
        checks: ctx.checks,
        values: ctx.values,
    };
    let mut artifacts = ctx.artifacts;
    artifacts.json("config.json", cfg);
    artifacts.json(SUMMARY, &summary);
    let manifest = artifacts.write(out_dir, SCHEMA_VERSION).map_err(|e| RunError::io(out_dir, e))?;
    Ok(RunOutcome { dir: out_dir.to_path_buf(), summary, manifest })
}

/// Runs a config file. Without an override the output goes to the configured
/// `output_dir`, or `runs/<name or kind>` next to the config.
pub fn run_path(path: &Path, out_override: Option<&Path>) -> Result<RunOutcome, RunError> {
    let (cfg, base, _) = load_config(path)?;
    let out = match (out_override, &cfg.output_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(d)) => base.join(d),
        (None, None) => base.join("runs").join(cfg.name.clone().unwrap_or_else(|| cfg.experiment.kind().to_string())),
    };
    run_config(&cfg, &base, &out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub run: String,
    pub item: String,
    pub status: String,
    pub value: Option<f64>,
    pub threshold: String,
    pub green: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub hash_mismatches: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no manifest found under {0}")]
    NoManifest(PathBuf),
    #[error("manifest at {0} lists no files")]
    EmptyManifest(PathBuf),
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl Report {
    pub fn all_green(&self) -> bool {
        self.hash_mismatches.is_empty() && self.rows.iter().all(|r| r.green)
    }

    pub fn render(&self) -> String {
        let w_run = self.rows.iter().map(|r| r.run.len()).max().unwrap_or(3).max(3);
        let w_item = self.rows.iter().map(|r| r.item.len()).max().unwrap_or(4).max(4);
        let mut s = String::new();
        writeln!(s, "{:w_run$}  {:w_item$}  {:15}  {:>12}  threshold", "run", "item", "status", "value").unwrap();
        for r in &self.rows {
            let v = r.value.map(|v| format!("{v:.4e}")).unwrap_or_else(|| "-".into());
            writeln!(s, "{:w_run$}  {:w_item$}  {:15}  {:>12}  {}", r.run, r.item, r.status, v, r.threshold).unwrap();
        }
        for m in &self.hash_mismatches {
            writeln!(s, "hash mismatch: {m}").unwrap();
        }
        let green = self.rows.iter().filter(|r| r.green).count();
        writeln!(s, "{green}/{} green, {} hash mismatches", self.rows.len(), self.hash_mismatches.len()).unwrap();
        s
    }
}

fn read_run(dir: &Path, label: &str, report: &mut Report) -> Result<(), ReportError> {
    let invalid = |path: &Path, message: String| ReportError::Invalid { path: path.to_path_buf(), message };
    let mpath = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&mpath).map_err(|e| invalid(&mpath, e.to_string()))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| invalid(&mpath, e.to_string()))?;
    if manifest.files.is_empty() {
        return Err(ReportError::EmptyManifest(mpath));
    }
    for f in &manifest.files {
        let ok = std::fs::read(dir.join(&f.path)).map(|d| sha256_hex(&d) == f.sha256).unwrap_or(false);
        if !ok {
            report.hash_mismatches.push(format!("{label}/{}", f.path));
        }
    }
    let spath = dir.join(SUMMARY);
    let text = std::fs::read_to_string(&spath).map_err(|e| invalid(&spath, e.to_string()))?;
    let summary: Summary = serde_json::from_str(&text).map_err(|e| invalid(&spath, e.to_string()))?;
    for st in &summary.stages {
        if !st.ok {
            report.rows.push(ReportRow {
                run: label.into(),
                item: format!("stage:{}", st.stage),
                status: "error".into(),
                value: None,
                threshold: st.error.clone().unwrap_or_default(),
                green: false,
            });
        }
    }
    for c in &summary.checks {
        let status = serde_json::to_value(c.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        report.rows.push(ReportRow {
            run: label.into(),
            item: c.name.clone(),
            status,
            value: c.value,
            threshold: c.threshold.clone(),
            green: c.status.is_green(),
        });
    }
    Ok(())
}

/// Summarizes a run directory, or a directory whose subdirectories are runs.
pub fn report(dir: &Path) -> Result<Report, ReportError> {
    let mut rep = Report { rows: Vec::new(), hash_mismatches: Vec::new() };
    if dir.join(MANIFEST).is_file() {
        let label = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| ".".into());
        read_run(dir, &label, &mut rep)?;
        return Ok(rep);
    }
    let mut subs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|_| ReportError::NoManifest(dir.to_path_buf()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST).is_file())
        .collect();
    if subs.is_empty() {
        return Err(ReportError::NoManifest(dir.to_path_buf()));
    }
    subs.sort();
    for s in subs {
        let label = s.file_name().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
        read_run(&s, &label, &mut rep)?;
    }
    Ok(rep)
}
