use std::fs;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{EnsError, Result};

const MAGIC: &[u8; 4] = b"ENSF";
const VERSION: u32 = 1;
const HEADER: usize = 20;

/// Row-major float image with interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(EnsError::Argument(format!(
                "image data has {} values, expected {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel(&self, p: usize) -> &[f32] {
        &self.data[p * self.channels..(p + 1) * self.channels]
    }

    pub fn pixel_mut(&mut self, p: usize) -> &mut [f32] {
        &mut self.data[p * self.channels..(p + 1) * self.channels]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.width as u32, self.height as u32, self.channels as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < HEADER || &bytes[..4] != MAGIC {
            return Err(EnsError::format(path, "not a float image"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
        if word(0) != VERSION as usize {
            return Err(EnsError::Versioning(format!(
                "{}: float image version {}, expected {VERSION}",
                path.display(),
                word(0)
            )));
        }
        let (w, h, c) = (word(1), word(2), word(3));
        if bytes.len() != HEADER + 4 * w * h * c {
            return Err(EnsError::format(path, "payload size does not match header"));
        }
        let data = bytes[HEADER..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        Self::from_data(w, h, c, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| EnsError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| EnsError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// 8-bit PNG; one channel is written as grayscale, three as RGB.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let color = match self.channels {
            1 => png::ColorType::Grayscale,
            3 => png::ColorType::Rgb,
            c => return Err(EnsError::Argument(format!("cannot write {c}-channel PNG"))),
        };
        let file = fs::File::create(path).map_err(|e| EnsError::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let bytes: Vec<u8> = self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        enc.write_header()
            .and_then(|mut w| w.write_image_data(&bytes))
            .map_err(|e| EnsError::format(path, &e.to_string()))
    }
}

/// Peak signal-to-noise ratio in dB for signals in `[0, 1]`, over the listed pixels or all pixels.
pub fn psnr(a: &FloatImage, b: &FloatImage, pixels: Option<&[usize]>) -> Result<f64> {
    if a.width != b.width || a.height != b.height || a.channels != b.channels {
        return Err(EnsError::Argument("psnr: image shapes differ".into()));
    }
    let all: Vec<usize>;
    let pixels = match pixels {
        Some(p) => p,
        None => {
            all = (0..a.pixel_count()).collect();
            &all
        }
    };
    if pixels.is_empty() {
        return Err(EnsError::Argument("psnr: no pixels".into()));
    }
    let mut se = 0.0;
    for &p in pixels {
        for (x, y) in a.pixel(p).iter().zip(b.pixel(p)) {
            se += (*x as f64 - *y as f64).powi(2);
        }
    }
    let mse = se / (pixels.len() * a.channels) as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}
