use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::io(&format!("cannot create {}", root.display()), e))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::io(name, std::io::Error::other(e)))?;
        text.push('\n');
        self.text(name, &text)
    }

    pub fn csv<T: Serialize>(
        &self,
        name: &str,
        rows: impl IntoIterator<Item = T>,
    ) -> Result<(), CliError> {
        let path = self.path(name);
        let err =
            |e: csv::Error| CliError::io(&path.display().to_string(), std::io::Error::other(e));
        let mut w = csv::Writer::from_path(&path).map_err(err)?;
        for row in rows {
            w.serialize(row).map_err(err)?;
        }
        w.flush()
            .map_err(|e| CliError::io(&path.display().to_string(), e))
    }

    pub fn text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path.display().to_string(), e))
    }
}

/// Character plot of `ys` against `xs`, `height` rows tall.
pub fn ascii_plot(xs: &[f64], ys: &[f64], width: usize, height: usize) -> String {
    let finite = |v: &f64| v.is_finite();
    let (lo, hi) = ys
        .iter()
        .copied()
        .filter(finite)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
            (a.min(y), b.max(y))
        });
    if xs.len() < 2 || hi < lo || !hi.is_finite() {
        return String::from("(no data)\n");
    }
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut grid = vec![vec![' '; width]; height];
    for (&x, &y) in xs.iter().zip(ys) {
        if !y.is_finite() {
            continue;
        }
        let c = (((x - x0) / (x1 - x0)) * (width - 1) as f64).round() as usize;
        let r = (((hi - y) / span) * (height - 1) as f64).round() as usize;
        grid[r.min(height - 1)][c.min(width - 1)] = '*';
    }
    if lo < 0.0 && hi > 0.0 {
        let r = ((hi / span) * (height - 1) as f64).round() as usize;
        for cell in grid[r].iter_mut().filter(|c| **c == ' ') {
            *cell = '-';
        }
    }
    let mut out = String::new();
    for (i, row) in grid.iter().enumerate() {
        let label = if i == 0 {
            format!("{hi:>11.4e}")
        } else if i + 1 == height {
            format!("{lo:>11.4e}")
        } else {
            " ".repeat(11)
        };
        out.push_str(&label);
        out.push_str(" |");
        out.extend(row.iter());
        out.push('\n');
    }
    out.push_str(&format!(
        "{:>11}  {:<w$}{:>10.4}\n",
        "",
        format!("{x0:.4}"),
        x1,
        w = width - 10
    ));
    out
}
