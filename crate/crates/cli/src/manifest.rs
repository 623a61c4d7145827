use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Phase {
    pub name: String,
    pub wall_ms: f64,
}

#[derive(Debug, Default, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
}

/// Everything about a run that is not part of the report payload.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command_line: Vec<String>,
    pub subcommand: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    /// path or field name → content hash
    pub config_hashes: BTreeMap<String, String>,
    pub cache: CacheStats,
    pub phases: Vec<Phase>,
    pub report_sha256: Option<String>,
}

impl Manifest {
    pub fn new(command_line: Vec<String>, seed: u64, threads: usize) -> Self {
        Manifest {
            command_line,
            subcommand: String::new(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            threads,
            config_hashes: BTreeMap::new(),
            cache: CacheStats::default(),
            phases: Vec::new(),
            report_sha256: None,
        }
    }

    pub fn phase<T, E>(&mut self, name: &str, f: impl FnOnce() -> Result<T, E>) -> Result<T, E> {
        let start = Instant::now();
        let out = f();
        self.phases.push(Phase { name: name.into(), wall_ms: start.elapsed().as_secs_f64() * 1e3 });
        out
    }

    pub fn record_cache(&mut self, hit: bool) {
        if hit {
            self.cache.hits += 1;
        } else {
            self.cache.misses += 1;
        }
    }

    pub fn set_report(&mut self, text: &str) {
        self.report_sha256 = Some(format!("{:x}", Sha256::digest(text.as_bytes())));
    }
}

/// A small CSV table. Cells containing commas or quotes are quoted.
pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, r: Vec<String>) {
        debug_assert_eq!(r.len(), self.header.len());
        self.rows.push(r);
    }

    pub fn render(&self) -> String {
        let cell = |c: &String| {
            if c.contains([',', '"', '\n']) {
                format!("\"{}\"", c.replace('"', "\"\""))
            } else {
                c.clone()
            }
        };
        let mut out = String::new();
        for r in std::iter::once(&self.header).chain(&self.rows) {
            out.push_str(&r.iter().map(cell).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}
