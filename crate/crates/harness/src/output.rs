//! Run directories and file emission. Every file carries the config hash,
//! the seed and the version string.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::{ExperimentConfig, HarnessError};

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: &'static str,
}

/// JSON envelope of every report.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema: &'a str,
    pub provenance: &'a Provenance,
    pub config: &'a ExperimentConfig,
    pub report: &'a T,
}

/// An append-only run directory `run-<hash12>-s<seed>`.
pub struct RunDir {
    pub path: PathBuf,
    pub provenance: Provenance,
    config: ExperimentConfig,
}

impl RunDir {
    pub fn create(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let path = cfg.run_dir();
        fs::create_dir_all(&path)?;
        // the embedded config omits what cannot change the results
        let mut config = cfg.clone();
        config.workers = 1;
        config.out = PathBuf::new();
        Ok(RunDir {
            path,
            provenance: Provenance {
                config_hash: cfg.content_hash(),
                seed: cfg.seed,
                version: VERSION,
            },
            config,
        })
    }

    pub fn csv_preamble(&self, schema: &str) -> String {
        let p = &self.provenance;
        format!(
            "# schema={schema} config_hash={} seed={} version={}\n",
            p.config_hash, p.seed, p.version
        )
    }

    /// Writes `name` unless it already exists. An existing file with the
    /// same bytes is left alone; different bytes are an error, so earlier
    /// results are never overwritten.
    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, HarnessError> {
        let target = self.path.join(name);
        if target.exists() {
            if fs::read(&target)? == bytes {
                return Ok(target);
            }
            return Err(HarnessError::Validation(format!(
                "{} exists with different content; refusing to overwrite",
                target.display()
            )));
        }
        let tmp = self.path.join(format!(".{name}.partial"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &target)?;
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, schema: &str, report: &T) -> Result<PathBuf, HarnessError> {
        let env = Envelope {
            schema,
            provenance: &self.provenance,
            config: &self.config,
            report,
        };
        let mut bytes = serde_json::to_vec_pretty(&env).expect("report serializes");
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn write_csv(&self, name: &str, schema: &str, header: &str, rows: &[String]) -> Result<PathBuf, HarnessError> {
        let mut s = self.csv_preamble(schema);
        s.push_str(header);
        s.push('\n');
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        self.write(name, s.as_bytes())
    }

    pub fn root(&self) -> &Path {
        &self.path
    }
}
