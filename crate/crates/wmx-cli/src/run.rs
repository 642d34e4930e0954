//! Output-directory bookkeeping: locking, artifact registry, config echo and
//! run manifest.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use wmx_core::store::{
    fnv1a64, manifest_path, palette_path, save_model, weights_path, write_ppm, FrameDataset, ModelManifest, Palette,
    RgbImage, TensorMap,
};

use crate::error::{CliError, Result};

pub const LOCK_FILE: &str = ".wmx.lock";
pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Serialize)]
struct FileRecord {
    path: String,
    bytes: u64,
    fnv1a64: String,
}

impl FileRecord {
    fn of(path: &Path, label: String) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            path: label,
            bytes: bytes.len() as u64,
            fnv1a64: format!("{:016x}", fnv1a64(&bytes)),
        })
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    threads: usize,
    parameters: &'a Value,
    inputs: Vec<FileRecord>,
    artifacts: Vec<FileRecord>,
}

/// One invocation writing into one output directory.
pub struct Run {
    dir: PathBuf,
    command: String,
    inputs: Vec<PathBuf>,
    artifacts: Vec<String>,
    started: SystemTime,
}

fn unix_ms(t: SystemTime) -> u128 {
    t.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

impl Run {
    /// Creates the directory and takes its lock.
    pub fn start(command: &str, dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let lock = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => return Err(CliError::Locked(dir.to_path_buf())),
            Err(e) => return Err(CliError::io(lock, e)),
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
            started: SystemTime::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Records an input file for the manifest.
    pub fn input(&mut self, path: &Path) {
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
    }

    /// Records the manifest and weights of a stored model.
    pub fn model_input(&mut self, prefix: &Path) {
        self.input(&manifest_path(prefix));
        self.input(&weights_path(prefix));
    }

    /// Records a frame file and its palette, if present.
    pub fn frames_input(&mut self, path: &Path) {
        self.input(path);
        let pal = palette_path(path);
        if pal.exists() {
            self.input(&pal);
        }
    }

    /// Registers a file written into the output directory.
    pub fn produced(&mut self, name: impl Into<String>) {
        let name = name.into();
        if !self.artifacts.contains(&name) {
            self.artifacts.push(name);
        }
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(path, e))?;
        self.produced(name);
        Ok(())
    }

    pub fn write_json<S: Serialize + ?Sized>(&mut self, name: &str, value: &S) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write_text(name, &text)
    }

    pub fn write_ppm(&mut self, name: &str, image: &RgbImage) -> Result<()> {
        write_ppm(image, self.path(name))?;
        self.produced(name);
        Ok(())
    }

    /// Writes `<stem>.frm` and `<stem>.palette.json`.
    pub fn write_frames(&mut self, stem: &str, frames: &FrameDataset, palette: &Palette) -> Result<()> {
        let name = format!("{stem}.frm");
        let path = self.path(&name);
        frames.write(&path)?;
        self.produced(name);
        palette.write(palette_path(&path))?;
        self.produced(format!("{stem}.palette.json"));
        Ok(())
    }

    /// Writes `<stem>.manifest.json` and `<stem>.weights.bin`.
    pub fn save_model(&mut self, stem: &str, manifest: &ModelManifest, tensors: &TensorMap) -> Result<ModelManifest> {
        let saved = save_model(manifest, tensors, self.path(stem))?;
        self.produced(format!("{stem}.manifest.json"));
        self.produced(format!("{stem}.weights.bin"));
        Ok(saved)
    }

    /// Writes the config echo and the run manifest, then releases the lock.
    pub fn finish(mut self, parameters: &Value) -> Result<()> {
        self.write_json(CONFIG_FILE, parameters)?;
        let mut artifacts = self
            .artifacts
            .iter()
            .map(|name| FileRecord::of(&self.dir.join(name), name.clone()))
            .collect::<Result<Vec<_>>>()?;
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let inputs = self
            .inputs
            .iter()
            .map(|p| FileRecord::of(p, p.display().to_string()))
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            started_unix_ms: unix_ms(self.started),
            finished_unix_ms: unix_ms(SystemTime::now()),
            threads: rayon::current_num_threads(),
            parameters,
            inputs,
            artifacts,
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        let path = self.path(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| CliError::io(path, e))
    }
}

impl Drop for Run {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(self.dir.join(LOCK_FILE));
    }
}
