//! Grayscale textures and foveal sampling.
//!
//! Textures are either read from PGM files or synthesized with a 1/f
//! amplitude spectrum. The fovea is a 55×55 window sampled with bilinear
//! interpolation and toroidal wrap, so any real-valued center is valid.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Side length of the foveal window in pixels (11 deg at 5 px/deg).
pub const FOVEA_PX: usize = 55;

/// Minimum texture side accepted by the environment.
pub const MIN_TEXTURE_PX: usize = FOVEA_PX;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Argument(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !p.is_finite()) {
            return Err(Error::Argument(format!("pixel {i} is not finite")));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Pixel lookup with toroidal wrap in both axes.
    #[inline]
    pub fn get_wrapped(&self, x: i64, y: i64) -> f64 {
        let xw = x.rem_euclid(self.width as i64) as usize;
        let yw = y.rem_euclid(self.height as i64) as usize;
        self.pixels[yw * self.width + xw]
    }

    /// Bilinear interpolation at real-valued coordinates, wrapping at the borders.
    #[inline]
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as i64, y0 as i64);
        let p00 = self.get_wrapped(xi, yi);
        let p10 = self.get_wrapped(xi + 1, yi);
        let p01 = self.get_wrapped(xi, yi + 1);
        let p11 = self.get_wrapped(xi + 1, yi + 1);
        (1.0 - fy) * ((1.0 - fx) * p00 + fx * p10) + fy * ((1.0 - fx) * p01 + fx * p11)
    }

    /// Rescale to zero mean and unit variance. Constant images become all zero.
    pub fn standardized(&self) -> GrayImage {
        let n = self.pixels.len() as f64;
        let mean = self.pixels.iter().sum::<f64>() / n;
        let var = self.pixels.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| (p - mean) * scale).collect(),
        }
    }

    /// Affinely rescale pixel values to [0, 1].
    pub fn rescaled_unit(&self) -> GrayImage {
        let (lo, hi) = self
            .pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        let span = hi - lo;
        let pixels = if span > 0.0 {
            self.pixels.iter().map(|p| (p - lo) / span).collect()
        } else {
            vec![0.0; self.pixels.len()]
        };
        GrayImage {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoveaFrame {
    pub values: Vec<f64>,
    pub frame_index: u64,
}

impl FoveaFrame {
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * FOVEA_PX + col]
    }
}

/// Two consecutive foveal frames, one frame period apart.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    pub previous: FoveaFrame,
    pub current: FoveaFrame,
}

/// Sample the 55×55 foveal window centered at a real-valued position.
///
/// Output pixel (row, col) reads the texture at
/// `(center_x + col - 27, center_y + row - 27)`.
pub fn sample_window(image: &GrayImage, center_x: f64, center_y: f64, frame_index: u64) -> FoveaFrame {
    let half = (FOVEA_PX / 2) as f64;
    let x_start = center_x - half;
    let y_start = center_y - half;
    let mut values = Vec::with_capacity(FOVEA_PX * FOVEA_PX);

    // The fractional parts are shared by every output pixel, so split once.
    let x0 = x_start.floor();
    let y0 = y_start.floor();
    let fx = x_start - x0;
    let fy = y_start - y0;
    let (xi, yi) = (x0 as i64, y0 as i64);
    for row in 0..FOVEA_PX as i64 {
        for col in 0..FOVEA_PX as i64 {
            let p00 = image.get_wrapped(xi + col, yi + row);
            let p10 = image.get_wrapped(xi + col + 1, yi + row);
            let p01 = image.get_wrapped(xi + col, yi + row + 1);
            let p11 = image.get_wrapped(xi + col + 1, yi + row + 1);
            values.push((1.0 - fy) * ((1.0 - fx) * p00 + fx * p10) + fy * ((1.0 - fx) * p01 + fx * p11));
        }
    }
    FoveaFrame {
        values,
        frame_index,
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn read_uint(&mut self, what: &str) -> Result<u32> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| Error::Parse {
                offset: start,
                message: format!("{what} out of range"),
            })
    }
}

/// Decode a binary (P5) or ASCII (P2) PGM, scaling luminance to [0, 1].
pub fn load_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(cur.err("missing PGM magic"));
    }
    let binary = match bytes[1] {
        b'5' => true,
        b'2' => false,
        _ => return Err(cur.err(format!("unsupported magic P{}", bytes[1] as char))),
    };
    cur.pos = 2;
    let width = cur.read_uint("width")? as usize;
    let height = cur.read_uint("height")? as usize;
    cur.skip_whitespace_and_comments();
    let maxval_offset = cur.pos;
    let maxval = cur.read_uint("max value")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse {
            offset: maxval_offset,
            message: format!("unsupported max value {maxval}"),
        });
    }
    if width == 0 || height == 0 {
        return Err(cur.err("zero image dimension"));
    }
    let count = width * height;
    let maxval_f = maxval as f64;
    let mut pixels = Vec::with_capacity(count);

    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(cur.err("expected whitespace before raster"));
        }
        cur.pos += 1;
        let wide = maxval > 255;
        let sample_len = if wide { 2 } else { 1 };
        for i in 0..count {
            let off = cur.pos + i * sample_len;
            if off + sample_len > bytes.len() {
                return Err(Error::Parse {
                    offset: bytes.len(),
                    message: format!("truncated raster: sample {i} of {count} missing"),
                });
            }
            let v = if wide {
                u16::from_be_bytes([bytes[off], bytes[off + 1]]) as u32
            } else {
                bytes[off] as u32
            };
            if v > maxval {
                return Err(Error::Parse {
                    offset: off,
                    message: format!("sample {v} exceeds max value {maxval}"),
                });
            }
            pixels.push(v as f64 / maxval_f);
        }
    } else {
        for i in 0..count {
            cur.skip_whitespace_and_comments();
            if cur.pos >= bytes.len() {
                return Err(Error::Parse {
                    offset: bytes.len(),
                    message: format!("truncated raster: sample {i} of {count} missing"),
                });
            }
            let off = cur.pos;
            let v = cur.read_uint("sample")?;
            if v > maxval {
                return Err(Error::Parse {
                    offset: off,
                    message: format!("sample {v} exceeds max value {maxval}"),
                });
            }
            pixels.push(v as f64 / maxval_f);
        }
    }
    GrayImage::new(width, height, pixels)
}

/// Encode as 8-bit binary PGM. Values are clamped to [0, 1].
pub fn save_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(
        image
            .pixels
            .iter()
            .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn read_pgm_file(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    load_pgm(&bytes)
}

pub fn write_pgm_file(path: &Path, image: &GrayImage) -> Result<()> {
    fs::write(path, save_pgm(image)).map_err(|e| Error::io(path, e))
}

/// Deterministic natural-image-like texture: Gaussian white noise shaped to
/// a 1/f amplitude spectrum, rescaled to [0, 1].
pub fn synth_texture(seed: u64, width: usize, height: usize) -> Result<GrayImage> {
    if width < MIN_TEXTURE_PX || height < MIN_TEXTURE_PX {
        return Err(Error::Argument(format!(
            "synthetic texture must be at least {MIN_TEXTURE_PX}x{MIN_TEXTURE_PX}, got {width}x{height}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex<f64>> = (0..width * height)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    fft_2d(&mut planner, &mut buf, width, height, false);
    for ky in 0..height {
        let fy = signed_freq(ky, height);
        for kx in 0..width {
            let fx = signed_freq(kx, width);
            let r = (fx * fx + fy * fy).sqrt();
            let gain = if r > 0.0 { 1.0 / r } else { 0.0 };
            buf[ky * width + kx] *= gain;
        }
    }
    fft_2d(&mut planner, &mut buf, width, height, true);

    let pixels: Vec<f64> = buf.iter().map(|c| c.re).collect();
    Ok(GrayImage::new(width, height, pixels)?.rescaled_unit())
}

fn signed_freq(k: usize, n: usize) -> f64 {
    let k = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    k / n as f64
}

fn fft_2d(planner: &mut FftPlanner<f64>, buf: &mut [Complex<f64>], width: usize, height: usize, inverse: bool) {
    let row_fft = if inverse {
        planner.plan_fft_inverse(width)
    } else {
        planner.plan_fft_forward(width)
    };
    for row in buf.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(height)
    } else {
        planner.plan_fft_forward(height)
    };
    let mut col = vec![Complex::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            col[y] = buf[y * width + x];
        }
        col_fft.process(&mut col);
        for y in 0..height {
            buf[y * width + x] = col[y];
        }
    }
}

/// A set of standardized textures.
#[derive(Debug, Clone)]
pub struct Corpus {
    textures: Vec<GrayImage>,
}

impl Corpus {
    /// Build a corpus, standardizing every texture to zero mean and unit variance.
    pub fn new(images: Vec<GrayImage>) -> Result<Self> {
        for (i, img) in images.iter().enumerate() {
            if img.width < MIN_TEXTURE_PX || img.height < MIN_TEXTURE_PX {
                return Err(Error::Argument(format!(
                    "texture {i} is {}x{}, smaller than the {MIN_TEXTURE_PX}px fovea",
                    img.width, img.height
                )));
            }
        }
        Ok(Corpus {
            textures: images.iter().map(GrayImage::standardized).collect(),
        })
    }

    pub fn synthetic(base_seed: u64, count: usize, size: usize) -> Result<Self> {
        let images = (0..count as u64)
            .map(|i| synth_texture(base_seed.wrapping_add(i), size, size))
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(images)
    }

    /// Load every `*.pgm` in a directory, in file-name order.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path
                .extension()
                .is_some_and(|ext| ext.eq_ignore_ascii_case("pgm"))
            {
                paths.push(path);
            }
        }
        paths.sort();
        let images = paths
            .iter()
            .map(|p| read_pgm_file(p))
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(images)
    }

    pub fn len(&self) -> usize {
        self.textures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.textures.is_empty()
    }

    pub fn get(&self, i: usize) -> &GrayImage {
        &self.textures[i]
    }

    pub fn textures(&self) -> &[GrayImage] {
        &self.textures
    }

    /// True if no texture of `self` also appears in `other`.
    pub fn is_disjoint_from(&self, other: &Corpus) -> bool {
        self.textures.iter().all(|a| other.textures.iter().all(|b| a != b))
    }
}
