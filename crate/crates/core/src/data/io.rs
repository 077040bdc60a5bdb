use std::fs;
use std::path::Path;

use image::{ImageBuffer, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{dequantize_u16, quantize_u16, AnnotatedPatch, DotAnnotation, Image};

pub const IMAGES_DIR: &str = "images";
pub const ANNOTATIONS_DIR: &str = "annotations";

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationFile {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<usize>,
    dots: Vec<DotAnnotation>,
}

/// Writes `<root>/images/<id>.png` (16-bit RGB) and
/// `<root>/annotations/<id>.json` for every patch.
pub fn save_dataset(patches: &[AnnotatedPatch], root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    let images = root.join(IMAGES_DIR);
    let annotations = root.join(ANNOTATIONS_DIR);
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    fs::create_dir_all(&annotations).map_err(|e| Error::io(&annotations, e))?;
    for patch in patches {
        if patch.image.channels() != 3 {
            return Err(Error::InvalidInput(format!(
                "patch `{}` has {} channels, expected 3",
                patch.id,
                patch.image.channels()
            )));
        }
        let path = images.join(format!("{}.png", patch.id));
        let raw: Vec<u16> = patch.image.data().iter().map(|&v| quantize_u16(v)).collect();
        let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
            ImageBuffer::from_raw(patch.width() as u32, patch.height() as u32, raw)
                .expect("buffer length matches dimensions");
        buf.save(&path).map_err(|e| Error::image(&path, e))?;

        let record = AnnotationFile {
            id: patch.id.clone(),
            width: Some(patch.width()),
            height: Some(patch.height()),
            dots: patch.dots.clone(),
        };
        let path = annotations.join(format!("{}.json", patch.id));
        let json = serde_json::to_string_pretty(&record).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Reads every `images/*.png` with its annotation sidecar, ordered by id.
/// A root without an `images` directory is an empty dataset.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Vec<AnnotatedPatch>> {
    let root = root.as_ref();
    let images = root.join(IMAGES_DIR);
    if !images.exists() {
        if root.exists() {
            return Ok(Vec::new());
        }
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root does not exist"),
        ));
    }
    let mut ids: Vec<String> = fs::read_dir(&images)
        .map_err(|e| Error::io(&images, e))?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            (path.extension()? == "png").then(|| path.file_stem()?.to_str().map(str::to_owned))?
        })
        .collect();
    ids.sort();

    ids.into_iter()
        .map(|id| load_patch(root, &id))
        .collect()
}

/// Reads PNG images (any bit depth, converted to RGB) from `<root>/images`
/// when present, otherwise from `root` itself, ordered by file stem.
/// Annotations are not required.
pub fn load_images(root: impl AsRef<Path>) -> Result<Vec<(String, Image)>> {
    let root = root.as_ref();
    let dir = if root.join(IMAGES_DIR).is_dir() { root.join(IMAGES_DIR) } else { root.to_path_buf() };
    let mut paths: Vec<_> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            (path.extension()? == "png").then_some(path)
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
            Ok((id, read_rgb(&path)?))
        })
        .collect()
}

fn read_rgb(path: &Path) -> Result<Image> {
    let rgb = image::open(path).map_err(|e| Error::image(path, e))?.to_rgb16();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    Image::from_vec(w, h, 3, rgb.into_raw().into_iter().map(dequantize_u16).collect())
}

fn load_patch(root: &Path, id: &str) -> Result<AnnotatedPatch> {
    let ann_path = root.join(ANNOTATIONS_DIR).join(format!("{id}.json"));
    if !ann_path.exists() {
        return Err(Error::MissingAnnotation { id: id.to_owned() });
    }
    let text = fs::read_to_string(&ann_path).map_err(|e| Error::io(&ann_path, e))?;
    let record: AnnotationFile =
        serde_json::from_str(&text).map_err(|e| Error::MalformedAnnotation {
            id: id.to_owned(),
            detail: e.to_string(),
        })?;
    if record.id != id {
        return Err(Error::MalformedAnnotation {
            id: id.to_owned(),
            detail: format!("annotation id `{}` does not match file name", record.id),
        });
    }

    let img_path = root.join(IMAGES_DIR).join(format!("{id}.png"));
    let image = read_rgb(&img_path)?;
    let (w, h) = (image.width(), image.height());
    if let (Some(ann_w), Some(ann_h)) = (record.width, record.height) {
        if (w, h) != (ann_w, ann_h) {
            return Err(Error::DimensionMismatch { id: id.to_owned(), image_w: w, image_h: h, ann_w, ann_h });
        }
    }
    AnnotatedPatch::new(id, image, record.dots)
}
