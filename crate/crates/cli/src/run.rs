//! `stabledecay run`: execute a config and record a manifest.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stabledecay::experiments::{run_experiment, ExperimentConfig};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandStatus {
    pub command: String,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// What was run and what it produced; enough to reproduce the numeric outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub config_path: String,
    pub config_sha256: String,
    pub master_seed: Option<u64>,
    pub threads: usize,
    pub wall_seconds: f64,
    pub status: String,
    pub commands: Vec<CommandStatus>,
    pub files: Vec<FileRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

impl RunManifest {
    pub fn succeeded(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn record(path: &Path, out: &Path) -> std::io::Result<FileRecord> {
    let bytes = std::fs::read(path)?;
    Ok(FileRecord {
        path: path.strip_prefix(out).unwrap_or(path).display().to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Runs the config and writes outputs plus `manifest.json` into `args.out`.
///
/// The manifest is written on failure too; its status is then "failed" and it
/// lists whatever outputs with the config's stem were already on disk.
pub fn run_config(args: &RunArgs) -> anyhow::Result<RunManifest> {
    let start = Instant::now();
    let threads = args.threads.unwrap_or_else(rayon::current_num_threads);
    let mut manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_path: args.config.display().to_string(),
        config_sha256: String::new(),
        master_seed: None,
        threads,
        wall_seconds: 0.0,
        status: "failed".into(),
        commands: Vec::new(),
        files: Vec::new(),
        summary: None,
    };
    std::fs::create_dir_all(&args.out)?;
    let mut stem = None;
    let outcome = (|| -> anyhow::Result<serde_json::Value> {
        let text = std::fs::read(&args.config).map_err(|e| anyhow::anyhow!("{}: {e}", args.config.display()))?;
        manifest.config_sha256 = sha256_hex(&text);
        let text = String::from_utf8(text)?;
        let mut cfg = ExperimentConfig::from_json(&text)?;
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        manifest.master_seed = Some(cfg.seed);
        stem = Some(cfg.stem());
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        let wos = cfg.wos.options();
        let out = pool.install(|| run_experiment(&cfg, &args.out, &wos))?;
        Ok(out.summary)
    })();
    match outcome {
        Ok(summary) => {
            manifest.status = "ok".into();
            manifest.summary = Some(summary);
            manifest.commands.push(CommandStatus {
                command: "run".into(),
                exit_code: 0,
                error: None,
            });
        }
        Err(e) => manifest.commands.push(CommandStatus {
            command: "run".into(),
            exit_code: 1,
            error: Some(format!("{e:#}")),
        }),
    }
    if let Some(stem) = stem {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&args.out)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_stem().and_then(|s| s.to_str()) == Some(stem.as_str())
                    && matches!(p.extension().and_then(|s| s.to_str()), Some("csv" | "json"))
            })
            .collect();
        paths.sort();
        for p in paths {
            manifest.files.push(record(&p, &args.out)?);
        }
    }
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    std::fs::write(args.out.join(MANIFEST_NAME), json)?;
    Ok(manifest)
}
