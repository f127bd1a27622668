use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sphere_pint::diagnostics::format_f64;
use sphere_pint::dynamics::PrognosticState;

/// Collects the files a command wrote, relative to the output directory.
pub struct OutDir {
    root: PathBuf,
    pub written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Writes a CSV with `header` and pre-formatted rows.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<()> {
        let path = self.root.join(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> anyhow::Result<()> {
        let path = self.root.join(name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Spectral coefficients of all three fields, `m ≥ 0` only.
    pub fn snapshot(&mut self, name: &str, state: &PrognosticState) -> anyhow::Result<()> {
        let trunc = state.truncation();
        let mut rows = Vec::new();
        for (label, field) in [("phi", &state.phi), ("xi", &state.xi), ("delta", &state.delta)] {
            for (m, n) in trunc.modes() {
                let c = field.get(m, n);
                rows.push(vec![
                    label.to_string(),
                    m.to_string(),
                    n.to_string(),
                    format_f64(c.re),
                    format_f64(c.im),
                ]);
            }
        }
        self.csv(name, &["field", "m", "n", "re", "im"], rows)
    }
}

pub fn f(v: f64) -> String {
    format_f64(v)
}
