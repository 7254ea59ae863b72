//! 8-bit RGB rasters stored as binary PPM (`P6`) files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::Post;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_ppm_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        // Header: magic, width, height, maxval, each separated by whitespace,
        // with '#' comments allowed; a single whitespace byte precedes the raster.
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated header".into());
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?);
        }
        if fields[0] != "P6" {
            return Err(format!("unsupported magic {:?}", fields[0]));
        }
        let parse = |s: &str, what: &str| -> std::result::Result<usize, String> {
            s.parse::<usize>().map_err(|_| format!("bad {what} {s:?}"))
        };
        let width = parse(fields[1], "width")?;
        let height = parse(fields[2], "height")?;
        let maxval = parse(fields[3], "maxval")?;
        if width == 0 || height == 0 {
            return Err("zero-sized image".into());
        }
        if maxval != 255 {
            return Err(format!("unsupported maxval {maxval}"));
        }
        pos += 1;
        let len = width * height * 3;
        if bytes.len() < pos + len {
            return Err(format!(
                "raster truncated: expected {len} bytes, found {}",
                bytes.len().saturating_sub(pos)
            ));
        }
        Ok(RgbImage {
            width,
            height,
            data: bytes[pos..pos + len].to_vec(),
        })
    }
}

pub fn write_ppm(path: impl AsRef<Path>, image: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, image.to_ppm_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    RgbImage::from_ppm_bytes(&bytes).map_err(|message| Error::Image {
        post_id: String::new(),
        message: format!("{}: {message}", path.display()),
    })
}

/// Resolves the pixels behind a post's image reference.
pub trait ImageSource {
    fn image_for(&self, post: &Post) -> Result<Option<RgbImage>>;
}

/// Images stored on disk relative to a corpus directory.
#[derive(Debug, Clone)]
pub struct ImageDir {
    root: PathBuf,
}

impl ImageDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ImageDir { root: root.into() }
    }
}

impl ImageSource for ImageDir {
    fn image_for(&self, post: &Post) -> Result<Option<RgbImage>> {
        let Some(rel) = &post.image else {
            return Ok(None);
        };
        let path = self.root.join(rel);
        let bytes = fs::read(&path).map_err(|e| Error::Image {
            post_id: post.id.clone(),
            message: format!("{}: {e}", path.display()),
        })?;
        RgbImage::from_ppm_bytes(&bytes)
            .map(Some)
            .map_err(|message| Error::Image {
                post_id: post.id.clone(),
                message,
            })
    }
}

/// Image source that treats every post as text-only.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoImages;

impl ImageSource for NoImages {
    fn image_for(&self, _post: &Post) -> Result<Option<RgbImage>> {
        Ok(None)
    }
}

impl ImageSource for BTreeMap<String, RgbImage> {
    fn image_for(&self, post: &Post) -> Result<Option<RgbImage>> {
        match &post.image {
            None => Ok(None),
            Some(rel) => self.get(rel).cloned().map(Some).ok_or_else(|| Error::Image {
                post_id: post.id.clone(),
                message: format!("no image stored under {rel}"),
            }),
        }
    }
}
