use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ais_core::io::{write_tensor, Tensor};
use ais_core::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Input(String),
    /// Numerical degeneracy left nothing to write.
    #[error("{0}")]
    Degenerate(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "IoError",
            CliError::Input(_) => "InvalidArgument",
            CliError::Degenerate(_) => "Degenerate",
        }
    }

    /// 2 input, 3 numerical degeneracy, 4 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e.kind() {
                "IoError" => 4,
                "ZeroVectorError" | "DomainError" | "NoPositiveAis" | "DegenerateMap" => 3,
                _ => 2,
            },
            CliError::Io { .. } => 4,
            CliError::Input(_) => 2,
            CliError::Degenerate(_) => 3,
        }
    }

    pub fn json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

/// Output directory of one run.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: impl Into<PathBuf>) -> CliResult<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(OutDir { root })
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn subdir(&self, rel: &str) -> CliResult<PathBuf> {
        let p = self.path(rel);
        fs::create_dir_all(&p).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }

    pub fn text(&self, rel: &str, body: &str) -> CliResult<()> {
        let p = self.path(rel);
        fs::write(&p, body).map_err(|e| CliError::io(&p, e))
    }

    pub fn tensor(&self, rel: &str, t: &Tensor) -> CliResult<()> {
        Ok(write_tensor(t, self.path(rel))?)
    }
}

/// Tab-separated table with `# key\tvalue` trailer lines.
pub struct Table {
    buf: String,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            buf: columns.join("\t") + "\n",
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.buf.push_str(&cells.join("\t"));
        self.buf.push('\n');
    }

    pub fn meta(&mut self, key: &str, value: impl std::fmt::Display) {
        writeln!(self.buf, "# {key}\t{value}").unwrap();
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// Reads `# key\tvalue` lines of a table written by [`Table`].
pub fn read_meta(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once('\t'))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
