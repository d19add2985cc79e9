use nalgebra::DMatrix;
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;
use xcforge::io::{matrix_to_csv, svg_plot, write_atomic, IoError, Series};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Tracks every file written by one invocation.
pub struct Output {
    dir: PathBuf,
    prefix: String,
    pub csv: bool,
    pub files: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path, prefix: &str, csv: bool) -> Self {
        Output { dir: dir.to_path_buf(), prefix: prefix.to_string(), csv, files: Vec::new() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{}-{name}", self.prefix))
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        write_atomic(&path, bytes)?;
        self.files.push(path.display().to_string());
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `name` only when CSV dumps were requested.
    pub fn matrix(&mut self, name: &str, m: &DMatrix<f64>) -> Result<(), CliError> {
        if self.csv {
            self.write(name, matrix_to_csv(m)?.as_bytes())?;
        }
        Ok(())
    }

    pub fn plot(&mut self, title: &str, x: &str, y: &str, series: &[Series]) -> Result<(), CliError> {
        self.write("plot.svg", svg_plot(title, x, y, series).as_bytes())?;
        Ok(())
    }
}

/// `(√n, r)` pairs as a scatter series.
pub fn scatter(name: &str, pts: impl IntoIterator<Item = (usize, usize)>) -> Series {
    Series { name: name.into(), points: pts.into_iter().map(|(n, r)| ((n as f64).sqrt(), r as f64)).collect(), line: false }
}

/// `f(√n)` sampled on `[0, max √n]`.
pub fn curve(name: &str, max_root: f64, f: impl Fn(f64) -> f64) -> Series {
    Series { name: name.into(), points: (0..=40).map(|i| max_root * i as f64 / 40.0).map(|x| (x, f(x))).collect(), line: true }
}
