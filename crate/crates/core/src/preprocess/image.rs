use std::path::Path;

use image::{GrayImage, Luma, RgbImage};

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

/// Row-major 8-bit RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<Rgb>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract(format!("image dimensions must be >= 1, got {width}x{height}")));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(Error::contract(format!(
                "{} pixels do not fill a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(RasterImage { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, color: Rgb) -> Result<Self> {
        Self::new(width, height, vec![color; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> Rgb {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut Rgb {
        &mut self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn row(&self, y: u32) -> &[Rgb] {
        let w = self.width as usize;
        &self.pixels[y as usize * w..(y as usize + 1) * w]
    }

    /// Loads a PNG or binary PPM (P6), chosen by content.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::ImageReader::open(path.as_ref())?
            .with_guessed_format()?
            .decode()?
            .into_rgb8();
        Self::from_rgb_image(img)
    }

    pub fn from_rgb_image(img: RgbImage) -> Result<Self> {
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        Self::new(w, h, pixels)
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        let raw = self.pixels.iter().flatten().copied().collect();
        RgbImage::from_raw(self.width, self.height, raw).expect("buffer sized from dims")
    }

    /// Saves as PNG, or PPM when the extension is `.ppm`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("ppm") => image::ImageFormat::Pnm,
            _ => image::ImageFormat::Png,
        };
        self.to_rgb_image().save_with_format(path, format)?;
        Ok(())
    }
}

/// Per-pixel tissue map, `true` = tissue.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TissueMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl TissueMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::contract(format!(
                "{} mask bits do not fill {width}x{height}",
                bits.len()
            )));
        }
        Ok(TissueMask { width, height, bits })
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        TissueMask {
            width,
            height,
            bits: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Tissue pixels inside the `size`×`size` block at `(x, y)`.
    pub fn count_in_block(&self, x: u32, y: u32, size: u32) -> usize {
        let w = self.width as usize;
        (y..y + size)
            .map(|row| {
                let start = row as usize * w + x as usize;
                self.bits[start..start + size as usize].iter().filter(|&&b| b).count()
            })
            .sum()
    }

    /// Intersection-over-union against another mask of the same size.
    /// Two empty masks have IoU 1.
    pub fn iou(&self, other: &TissueMask) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::contract(format!(
                "mask dims {:?} and {:?} differ",
                self.dims(),
                other.dims()
            )));
        }
        let (inter, union) = self
            .bits
            .iter()
            .zip(&other.bits)
            .fold((0usize, 0usize), |(i, u), (&a, &b)| (i + (a && b) as usize, u + (a || b) as usize));
        Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
    }

    /// PNG export, tissue = white.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut img = GrayImage::new(self.width, self.height);
        for (p, &b) in img.pixels_mut().zip(&self.bits) {
            *p = Luma([if b { 255 } else { 0 }]);
        }
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    /// Loads a mask PNG; any non-zero luma counts as tissue.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.into_luma8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.pixels().map(|p| p.0[0] > 0).collect())
    }
}
