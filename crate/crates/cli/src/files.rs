use std::io::Write;
use std::path::{Path, PathBuf};

use crate::fail::{CliError, CliResult};

/// Numbers separated by commas, whitespace or newlines, one CSV row per line.
pub fn read_rows(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    CliError::input(format!("{}:{}: not a number: {t:?}", path.display(), k + 1))
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::input(format!("{}: no numbers found", path.display())));
    }
    Ok(rows)
}

pub fn read_vector(path: &Path) -> CliResult<Vec<f64>> {
    Ok(read_rows(path)?.into_iter().flatten().collect())
}

/// Files produced by a command; written only once the command has succeeded.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
    stdout: Vec<String>,
}

impl Outputs {
    pub fn file(&mut self, path: &Path, bytes: impl Into<Vec<u8>>) {
        self.files.push((path.to_path_buf(), bytes.into()));
    }

    pub fn print(&mut self, text: impl Into<String>) {
        self.stdout.push(text.into());
    }

    /// A file when `path` is given, standard output otherwise.
    pub fn emit(&mut self, path: Option<&Path>, text: String) {
        match path {
            Some(p) => self.file(p, text),
            None => self.print(text),
        }
    }

    pub fn flush(self) -> CliResult<()> {
        for (path, bytes) in &self.files {
            std::fs::write(path, bytes)
                .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
        }
        let mut out = std::io::stdout().lock();
        for s in self.stdout {
            match writeln!(out, "{s}") {
                Ok(()) => {}
                // a closed reader (e.g. `| head`) is not an error
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
                Err(e) => return Err(CliError::input(format!("cannot write to stdout: {e}"))),
            }
        }
        Ok(())
    }
}
