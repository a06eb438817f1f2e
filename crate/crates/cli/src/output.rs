use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tna::export::{self, format_decimal, DotOptions};

use crate::error::CliError;

/// Config hash and seed stamped on every artifact.
#[derive(Debug, Clone)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    pub fn lines(&self) -> Vec<String> {
        vec![format!("config_hash={}", self.config_hash), format!("seed={}", self.seed)]
    }
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

/// Collects the files written by one command.
pub struct Outputs {
    pub dir: PathBuf,
    pub stamp: Stamp,
    pub written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: PathBuf, stamp: Stamp) -> Self {
        Outputs {
            dir,
            stamp,
            written: Vec::new(),
        }
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Delimited table with stamp comment lines before the header.
    pub fn table(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        for l in self.stamp.lines() {
            writeln!(buf, "# {l}").expect("write to memory");
        }
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let io = |e: csv::Error| CliError::Data(format!("{name}: {e}"));
            w.write_record(header).map_err(io)?;
            for r in rows {
                w.write_record(&r).map_err(io)?;
            }
            w.flush().map_err(|e| CliError::io(self.dir.join(name), e))?;
        }
        self.put(name, &buf)
    }

    pub fn matrix(&mut self, name: &str, labels: &[String], m: &nalgebra::DMatrix<f64>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        export::write_matrix_csv(&mut buf, labels, m, &self.stamp.lines())?;
        self.put(name, &buf)
    }

    pub fn dot(
        &mut self,
        name: &str,
        labels: &[String],
        edges: &[(usize, usize, f64)],
        mut opts: DotOptions,
    ) -> Result<(), CliError> {
        opts.comments.splice(0..0, self.stamp.lines());
        let mut buf = Vec::new();
        export::write_dot(&mut buf, labels, edges, &opts)?;
        self.put(name, &buf)
    }

    pub fn graphml(
        &mut self,
        name: &str,
        labels: &[String],
        initial: Option<&[f64]>,
        edges: &[(usize, usize, f64)],
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        export::write_graphml(&mut buf, labels, initial, edges, &self.stamp.lines())?;
        self.put(name, &buf)
    }

    pub fn json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Data(format!("{name}: {e}")))?;
        bytes.push(b'\n');
        self.put(name, &bytes)
    }
}

pub fn num(v: f64) -> String {
    format_decimal(v)
}
