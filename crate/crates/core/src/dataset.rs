//! Microstructure dataset directories.
//!
//! A dataset is a directory holding `manifest.json` plus one raw label file
//! per image, `img_{index:05}.lbl`: `width * height` unsigned bytes, row-major,
//! each byte a [`Phase`](crate::micro::Phase) code.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::micro::MicrostructureImage;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub width: usize,
    pub height: usize,
    pub count: usize,
    pub label_legend: BTreeMap<u8, String>,
    /// Seed of the run that produced the images.
    pub seed: u64,
    /// Free-form provenance (producer name, snapshot interval, ...).
    #[serde(default)]
    pub provenance: BTreeMap<String, serde_json::Value>,
}

impl DatasetManifest {
    pub fn new(width: usize, height: usize, count: usize, seed: u64) -> Self {
        let label_legend = [(0u8, "ferrite"), (1, "variant1"), (2, "variant2")]
            .into_iter()
            .map(|(k, v)| (k, v.to_string()))
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            width,
            height,
            count,
            label_legend,
            seed,
            provenance: BTreeMap::new(),
        }
    }
}

pub fn image_file_name(index: usize) -> String {
    format!("img_{index:05}.lbl")
}

pub fn image_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(image_file_name(index))
}

pub fn write_image(path: &Path, image: &MicrostructureImage) -> Result<()> {
    fs::write(path, image.codes())?;
    Ok(())
}

pub fn read_image(path: &Path, width: usize, height: usize) -> Result<MicrostructureImage> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    if bytes.len() != width * height {
        return Err(Error::Format(format!(
            "{}: {} bytes, expected {}",
            path.display(),
            bytes.len(),
            width * height
        )));
    }
    MicrostructureImage::from_codes(width, height, &bytes)
}

/// Write a whole dataset. Returns the list of files written, relative to `dir`.
pub fn write_dataset(
    dir: &Path,
    images: &[MicrostructureImage],
    mut manifest: DatasetManifest,
) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    if let Some(first) = images.first() {
        if images
            .iter()
            .any(|im| im.width() != first.width() || im.height() != first.height())
        {
            return Err(Error::Dimension("dataset images differ in size".into()));
        }
        manifest.width = first.width();
        manifest.height = first.height();
    }
    manifest.count = images.len();
    let mut files = Vec::with_capacity(images.len() + 1);
    for (i, im) in images.iter().enumerate() {
        write_image(&image_path(dir, i), im)?;
        files.push(image_file_name(i));
    }
    write_manifest(dir, &manifest)?;
    files.push(MANIFEST_FILE.to_string());
    Ok(files)
}

pub fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.clone()),
        _ => Error::Io(e),
    })?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(Error::Version {
            found: manifest.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(manifest)
}

/// Load every image listed by the manifest.
pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<MicrostructureImage>)> {
    let manifest = read_manifest(dir)?;
    let images = (0..manifest.count)
        .map(|i| read_image(&image_path(dir, i), manifest.width, manifest.height))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, images))
}
