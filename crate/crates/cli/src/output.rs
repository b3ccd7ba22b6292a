use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use msoe_core::io::Manifest;

use crate::error::CliError;

/// Output directory that remembers every file it hands out.
pub struct OutDir {
    dir: PathBuf,
    files: Vec<PathBuf>,
    started: Instant,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(OutDir { dir: dir.to_path_buf(), files: Vec::new(), started: Instant::now() })
    }

    pub fn file(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        log::info!("writing {}", path.display());
        let f = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }

    /// Writes manifest.json and returns every path written.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<Vec<PathBuf>, CliError> {
        manifest.wall_time_seconds = self.started.elapsed().as_secs_f64();
        manifest.files = self.files.iter().filter_map(|p| p.file_name().map(PathBuf::from)).collect();
        let path = self.dir.join("manifest.json");
        manifest.write(BufWriter::new(File::create(&path)?))?;
        self.files.push(path);
        Ok(self.files)
    }
}
