use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{ExperimentConfig, ReplicaRecord, ResultRecord};
use crate::error::{Error, Result};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_CSV: &str = "summary.csv";

/// Format of the summary file. Per-replica records are always JSON lines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "json" => Some(OutputFormat::Json),
            "csv" => Some(OutputFormat::Csv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub tag: String,
    pub records_sha256: String,
    pub record_count: usize,
    pub files: Vec<String>,
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> Error + '_ {
    move |source| Error::Json {
        path: path.to_path_buf(),
        source,
    }
}

/// Depth-first `(dotted.key, scalar)` pairs; arrays are indexed.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(&join(prefix, k), x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&join(prefix, &i.to_string()), x, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn write_summary_csv(path: &Path, summary: &BTreeMap<String, Value>) -> Result<()> {
    let mut rows = Vec::new();
    for (k, v) in summary {
        flatten(k, v, &mut rows);
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["key", "value"])?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `records.jsonl`, the summary in `format`, and `manifest.json`
/// into `dir` (created if missing).
pub fn persist(result: &ResultRecord, dir: &Path, format: OutputFormat) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rec_path = dir.join(RECORDS_FILE);
    let file = File::create(&rec_path).map_err(|e| Error::io(&rec_path, e))?;
    let mut w = BufWriter::new(file);
    let mut hasher = Sha256::new();
    for r in &result.records {
        let line = serde_json::to_vec(r).map_err(json_err(&rec_path))?;
        hasher.update(&line);
        hasher.update(b"\n");
        w.write_all(&line).map_err(|e| Error::io(&rec_path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(&rec_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&rec_path, e))?;
    let summary_file = match format {
        OutputFormat::Json => {
            let p = dir.join(SUMMARY_JSON);
            let bytes = serde_json::to_vec_pretty(&result.summary).map_err(json_err(&p))?;
            fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
            SUMMARY_JSON
        }
        OutputFormat::Csv => {
            write_summary_csv(&dir.join(SUMMARY_CSV), &result.summary)?;
            SUMMARY_CSV
        }
    };
    let config_hash = result.config.hash();
    let manifest = Manifest {
        config: result.config.clone(),
        seed: result.config.seed,
        version: result.version.clone(),
        tag: format!("covertime-{}-g{}", result.version, &config_hash[..8]),
        config_hash,
        records_sha256: hex::encode(hasher.finalize()),
        record_count: result.records.len(),
        files: vec![RECORDS_FILE.into(), summary_file.into(), MANIFEST_FILE.into()],
    };
    let p = dir.join(MANIFEST_FILE);
    let bytes = serde_json::to_vec_pretty(&manifest).map_err(json_err(&p))?;
    fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    Ok(manifest)
}

/// Reads back a persisted result. A CSV summary is returned flat, keyed by
/// the dotted paths it was written with.
pub fn load(dir: &Path) -> Result<ResultRecord> {
    let mp = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(json_err(&mp))?;
    let rp = dir.join(RECORDS_FILE);
    let file = File::open(&rp).map_err(|e| Error::io(&rp, e))?;
    let mut records = Vec::with_capacity(manifest.record_count);
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(&rp, e))?;
        if line.is_empty() {
            continue;
        }
        records.push(serde_json::from_str::<ReplicaRecord>(&line).map_err(json_err(&rp))?);
    }
    let sj = dir.join(SUMMARY_JSON);
    let sc = dir.join(SUMMARY_CSV);
    let summary = if sj.exists() {
        let text = fs::read_to_string(&sj).map_err(|e| Error::io(&sj, e))?;
        serde_json::from_str(&text).map_err(json_err(&sj))?
    } else if sc.exists() {
        let mut r = csv::Reader::from_path(&sc)?;
        let mut m = BTreeMap::new();
        for row in r.records() {
            let row = row?;
            let v = serde_json::from_str(&row[1]).unwrap_or_else(|_| Value::String(row[1].to_string()));
            m.insert(row[0].to_string(), v);
        }
        m
    } else {
        BTreeMap::new()
    };
    Ok(ResultRecord {
        experiment: manifest.config.experiment,
        config: manifest.config,
        version: manifest.version,
        records,
        summary,
    })
}
