//! Adapter for the `tesseract` command-line OCR program. Each call spawns
//! its own process, so concurrent use is safe.

use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use image::{GrayImage, ImageFormat};

use crate::{OcrEngine, OcrError, Result};

#[derive(Debug, Clone)]
pub struct TesseractEngine {
    binary: PathBuf,
    version: String,
}

impl TesseractEngine {
    /// Locate `tesseract` on `PATH` (or `$TESSERACT` when set).
    pub fn detect() -> Result<Self> {
        let binary = std::env::var_os("TESSERACT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("tesseract"));
        Self::with_binary(&binary)
    }

    pub fn with_binary(binary: &Path) -> Result<Self> {
        let out = Command::new(binary)
            .arg("--version")
            .output()
            .map_err(|e| OcrError::EngineUnavailable(format!("{}: {e}", binary.display())))?;
        if !out.status.success() {
            return Err(OcrError::EngineUnavailable(format!(
                "{} --version exited with {}",
                binary.display(),
                out.status
            )));
        }
        // Older releases print the version on stderr.
        let text = [out.stdout, out.stderr].concat();
        let version = String::from_utf8_lossy(&text)
            .lines()
            .next()
            .unwrap_or("tesseract")
            .trim()
            .to_string();
        Ok(Self {
            binary: binary.to_path_buf(),
            version,
        })
    }
}

impl OcrEngine for TesseractEngine {
    fn name(&self) -> &str {
        "tesseract"
    }

    fn version(&self) -> String {
        self.version.clone()
    }

    fn recognize(&self, image: &GrayImage) -> Result<String> {
        let mut png = Vec::new();
        image
            .write_to(&mut Cursor::new(&mut png), ImageFormat::Png)
            .map_err(|e| OcrError::EngineFailed(e.to_string()))?;
        // --psm 7: treat the image as a single text line.
        let mut child = Command::new(&self.binary)
            .args(["stdin", "stdout", "--psm", "7"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| OcrError::EngineUnavailable(e.to_string()))?;
        child
            .stdin
            .take()
            .expect("stdin is piped")
            .write_all(&png)
            .map_err(|e| OcrError::EngineFailed(e.to_string()))?;
        let out = child
            .wait_with_output()
            .map_err(|e| OcrError::EngineFailed(e.to_string()))?;
        if !out.status.success() {
            return Err(OcrError::EngineFailed(
                String::from_utf8_lossy(&out.stderr).into_owned(),
            ));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }
}
