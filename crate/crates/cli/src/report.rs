//! Output directory handling: JSON reports, CSV tables and plot scripts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use epp_core::grid::Field;
use serde_json::{json, Value};

use crate::config::Effective;
use crate::CliError;

pub struct Output {
    dir: PathBuf,
    written: Vec<String>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn io(&self, name: &str, e: std::io::Error) -> CliError {
        CliError::Io(format!("{}: {e}", self.dir.join(name).display()))
    }

    pub fn field(&mut self, name: &str, field: &Field) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        field.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| self.io(name, e))
    }

    /// A CSV table; cells are written as given.
    pub fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        let mut body = header.join(",");
        body.push('\n');
        for r in rows {
            body.push_str(&r.join(","));
            body.push('\n');
        }
        w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| self.io(name, e))
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| self.io(name, e))
    }

    /// Writes `<command>.json` wrapping `results` with provenance fields.
    /// Lists every file written before it, so call it last.
    pub fn report(&mut self, command: &str, cfg: &Effective, options: Value, results: Value) -> Result<(), CliError> {
        let doc = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": cfg.hash(),
            "config": cfg,
            "options": options,
            "results": results,
            "artifacts": self.written,
        });
        let mut body = serde_json::to_string_pretty(&doc).expect("report serializes");
        body.push('\n');
        self.text(&format!("{command}.json"), &body)
    }
}

/// Compact, round-trippable number formatting for CSV cells.
pub fn num(x: f64) -> String {
    format!("{x:.12e}")
}

/// A matplotlib script that reads `csv` and plots `y` columns against `x`.
pub fn line_plot_script(csv: &str, x: &str, ys: &[&str], logy: bool, png: &str) -> String {
    let cols = ys.iter().map(|c| format!("{c:?}")).collect::<Vec<_>>().join(", ");
    format!(
        "import pandas as pd\nimport matplotlib.pyplot as plt\n\n\
         df = pd.read_csv({csv:?})\n\
         fig, ax = plt.subplots()\n\
         for col in [{cols}]:\n    ax.plot(df[{x:?}], df[col], marker=\"o\", label=col)\n\
         ax.set_xlabel({x:?})\n{}\
         ax.legend()\nfig.savefig({png:?}, dpi=150)\n",
        if logy { "ax.set_yscale(\"log\")\n" } else { "" }
    )
}

/// A matplotlib script drawing strip fields as heat maps.
pub fn field_plot_script(csvs: &[&str]) -> String {
    let files = csvs.iter().map(|c| format!("{c:?}")).collect::<Vec<_>>().join(", ");
    format!(
        "import pandas as pd\nimport matplotlib.pyplot as plt\n\n\
         for name in [{files}]:\n\
         \x20   df = pd.read_csv(name)\n\
         \x20   strip = df[df.region == \"interior\"]\n\
         \x20   grid = strip.pivot(index=\"z\", columns=\"y\", values=\"value\")\n\
         \x20   fig, ax = plt.subplots(figsize=(8, 3))\n\
         \x20   m = ax.pcolormesh(grid.columns, grid.index, grid.values, shading=\"auto\")\n\
         \x20   fig.colorbar(m, ax=ax)\n\
         \x20   ax.set_xlabel(\"y\")\n\
         \x20   ax.set_ylabel(\"z\")\n\
         \x20   ax.set_title(name)\n\
         \x20   fig.savefig(name.replace(\".csv\", \".png\"), dpi=150)\n"
    )
}
