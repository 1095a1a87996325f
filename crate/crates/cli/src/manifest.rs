//! Reproducibility manifest written alongside every experiment output.

use std::path::Path;
use std::time::Duration;

pub struct RunManifest {
    pub command_line: String,
    pub config: Vec<(String, String)>,
    pub seed: u64,
    pub corpus_hash: Option<String>,
    pub duration: Duration,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("command: {}\n", self.command_line));
        s.push_str(&format!("version: {}\n", env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("seed: {}\n", self.seed));
        s.push_str(&format!(
            "corpus_hash: {}\n",
            self.corpus_hash.as_deref().unwrap_or("none")
        ));
        s.push_str(&format!("duration_ms: {}\n", self.duration.as_millis()));
        for (k, v) in &self.config {
            s.push_str(&format!("config.{k}: {v}\n"));
        }
        s
    }

    /// Writes `manifest.txt` into `dir`, replacing any previous one.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("manifest.txt"), self.render())
    }
}
