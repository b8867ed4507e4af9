//! The only place pixels are touched: decoding quadrat photos and producing
//! the PNG payload sent to remote backends.

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use image::{DynamicImage, ImageFormat, ImageReader, RgbImage};
use reef_core::model::ModelError;
use reef_core::{BoundingBox, ImageRef};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: unsupported image format (PNG and JPEG are accepted)")]
    Format { path: PathBuf },
    #[error("{path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A quadrat image: metadata plus, when decoded from disk, its pixels.
///
/// Images without pixels (synthetic or received over the wire) encode as a
/// black frame of the right size.
#[derive(Debug, Clone)]
pub struct QuadratImage {
    meta: ImageRef,
    pixels: Option<Arc<DynamicImage>>,
    png_base64: OnceLock<Arc<str>>,
}

impl QuadratImage {
    /// Decodes a PNG or JPEG file; the id is the file stem.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref();
        let io = |source| ImageError::Io {
            path: path.to_path_buf(),
            source,
        };
        let reader = ImageReader::open(path).map_err(io)?.with_guessed_format().map_err(io)?;
        match reader.format() {
            Some(ImageFormat::Png | ImageFormat::Jpeg) => {}
            _ => {
                return Err(ImageError::Format {
                    path: path.to_path_buf(),
                })
            }
        }
        let pixels = reader.decode().map_err(|source| ImageError::Decode {
            path: path.to_path_buf(),
            source,
        })?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let meta = ImageRef::new(id, pixels.width(), pixels.height(), path.display().to_string())?;
        Ok(Self {
            meta,
            pixels: Some(Arc::new(pixels)),
            png_base64: OnceLock::new(),
        })
    }

    pub fn from_pixels(id: impl Into<String>, pixels: DynamicImage) -> Result<Self, ImageError> {
        let meta = ImageRef::new(id, pixels.width(), pixels.height(), "")?;
        Ok(Self {
            meta,
            pixels: Some(Arc::new(pixels)),
            png_base64: OnceLock::new(),
        })
    }

    /// An image known only by its dimensions.
    pub fn blank(id: impl Into<String>, width: u32, height: u32) -> Result<Self, ImageError> {
        Ok(Self {
            meta: ImageRef::new(id, width, height, "")?,
            pixels: None,
            png_base64: OnceLock::new(),
        })
    }

    /// An image as received in a protocol request; the payload is kept as is.
    pub fn from_wire(
        id: impl Into<String>,
        width: u32,
        height: u32,
        png_base64: String,
    ) -> Result<Self, ImageError> {
        let img = Self::blank(id, width, height)?;
        let _ = img.png_base64.set(png_base64.into());
        Ok(img)
    }

    pub fn meta(&self) -> &ImageRef {
        &self.meta
    }

    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn width(&self) -> u32 {
        self.meta.width
    }

    pub fn height(&self) -> u32 {
        self.meta.height
    }

    pub fn pixels(&self) -> Option<&DynamicImage> {
        self.pixels.as_deref()
    }

    /// Base64 PNG of the image, encoded on first use.
    pub fn png_base64(&self) -> &str {
        self.png_base64.get_or_init(|| {
            let mut buf = Cursor::new(Vec::new());
            let result = match &self.pixels {
                Some(p) => p.write_to(&mut buf, ImageFormat::Png),
                None => DynamicImage::ImageRgb8(RgbImage::new(self.width(), self.height()))
                    .write_to(&mut buf, ImageFormat::Png),
            };
            result.expect("PNG encoding into memory");
            STANDARD.encode(buf.into_inner()).into()
        })
    }

    /// The part of the image inside `region` (already clamped to the frame).
    pub fn crop(&self, region: &BoundingBox) -> Result<QuadratImage, ImageError> {
        let (x, y) = (region.x_min as u32, region.y_min as u32);
        let (w, h) = (region.width() as u32, region.height() as u32);
        let id = format!("{}#{}_{}_{}_{}", self.id(), region.x_min, region.y_min, region.x_max, region.y_max);
        match &self.pixels {
            Some(p) => Self::from_pixels(id, p.crop_imm(x, y, w, h)),
            None => Self::blank(id, w, h),
        }
    }
}

impl PartialEq for QuadratImage {
    fn eq(&self, other: &Self) -> bool {
        self.meta == other.meta && self.pixels == other.pixels
    }
}
