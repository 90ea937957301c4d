//! Saved classifiers: `<name>.model` holds the weights, the sibling
//! `<name>.manifest.json` everything needed to interpret them.

use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::net::Network;
use crate::train::{prepare_image, to_tensor, TrainConfig};
use crate::{Recognizer, RecognizerError, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"PRCN";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub backbone: String,
    /// Output order of the network.
    pub class_names: Vec<String>,
    pub input_side: u32,
    /// Per-channel normalization of `[0,1]` RGB input.
    pub mean: [f32; 3],
    pub std: [f32; 3],
    pub param_count: usize,
    /// Digest of the `.model` file.
    pub model_sha256: String,
    pub train_config: TrainConfig,
    pub train_config_hash: String,
    pub producer: String,
}

/// A trained network, read-only after construction.
#[derive(Debug, Clone)]
pub struct Classifier {
    manifest: Manifest,
    net: Network,
    params: Vec<f32>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn encode(params: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8]) -> std::result::Result<Vec<f32>, String> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err("not a model file".into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(format!("unsupported model format version {version}"));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() != n.saturating_mul(4) {
        return Err(format!("expected {n} weights, file holds {} bytes", body.len()));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

/// `dir/clf.model` → `dir/clf.manifest.json`.
pub fn manifest_path_for(model_path: &Path) -> PathBuf {
    model_path.with_extension("manifest.json")
}

impl Classifier {
    pub(crate) fn from_params(
        cfg: &TrainConfig,
        class_names: &[String],
        mean: [f32; 3],
        std: [f32; 3],
        net: Network,
        params: Vec<f32>,
    ) -> Self {
        let cfg_json = serde_json::to_vec(cfg).expect("config serializes");
        let manifest = Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            backbone: cfg.backbone.clone(),
            class_names: class_names.to_vec(),
            input_side: cfg.input_side,
            mean,
            std,
            param_count: params.len(),
            model_sha256: hex(&Sha256::digest(encode(&params))),
            train_config: cfg.clone(),
            train_config_hash: hex(&Sha256::digest(cfg_json)),
            producer: format!("proctor-recognizer {}", env!("CARGO_PKG_VERSION")),
        };
        Self { manifest, net, params }
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Write the weights to `model_path` and the manifest beside it;
    /// returns the manifest path.
    pub fn save(&self, model_path: &Path) -> Result<PathBuf> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| RecognizerError::Io { path, source }
        };
        if let Some(dir) = model_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io(dir))?;
        }
        fs::write(model_path, encode(&self.params)).map_err(io(model_path))?;
        let mpath = manifest_path_for(model_path);
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&mpath, json + "\n").map_err(io(&mpath))?;
        Ok(mpath)
    }

    pub fn load(model_path: &Path) -> Result<Self> {
        let mpath = manifest_path_for(model_path);
        let bad = |path: &Path, reason: String| RecognizerError::BadModel {
            path: path.to_path_buf(),
            reason,
        };
        let text = fs::read_to_string(&mpath).map_err(|source| RecognizerError::Io {
            path: mpath.clone(),
            source,
        })?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| bad(&mpath, e.to_string()))?;
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(bad(
                &mpath,
                format!("unsupported schema_version {}", manifest.schema_version),
            ));
        }
        manifest
            .train_config
            .validate()
            .map_err(|e| bad(&mpath, e.to_string()))?;
        if manifest.class_names.is_empty() {
            return Err(bad(&mpath, "no classes".into()));
        }
        let bytes = fs::read(model_path).map_err(|source| RecognizerError::Io {
            path: model_path.to_path_buf(),
            source,
        })?;
        let digest = hex(&Sha256::digest(&bytes));
        if digest != manifest.model_sha256 {
            return Err(bad(model_path, format!("sha256 {digest} does not match manifest")));
        }
        let params = decode(&bytes).map_err(|e| bad(model_path, e))?;
        let net = Network::small_resnet(manifest.input_side as usize, manifest.class_names.len());
        if params.len() != net.param_len() || manifest.param_count != params.len() {
            return Err(bad(
                model_path,
                format!("{} weights, architecture needs {}", params.len(), net.param_len()),
            ));
        }
        Ok(Self { manifest, net, params })
    }
}

impl Recognizer for Classifier {
    fn class_names(&self) -> &[String] {
        &self.manifest.class_names
    }

    fn logits(&self, face: &RgbImage) -> Result<Vec<f32>> {
        if face.width() == 0 || face.height() == 0 {
            return Err(RecognizerError::EmptyImage);
        }
        let img = prepare_image(face, self.manifest.input_side);
        let x = to_tensor(&img, &self.manifest.mean, &self.manifest.std);
        Ok(self.net.forward(&self.params, &x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_codec_round_trip() {
        let p = vec![0.5f32, -1.25, f32::MIN_POSITIVE, 3.0e7];
        assert_eq!(decode(&encode(&p)).unwrap(), p);
        let mut bytes = encode(&p);
        bytes.pop();
        assert!(decode(&bytes).is_err());
        assert!(decode(b"nope").is_err());
    }

    #[test]
    fn manifest_path() {
        assert_eq!(
            manifest_path_for(Path::new("out/clf.model")),
            PathBuf::from("out/clf.manifest.json")
        );
    }
}
