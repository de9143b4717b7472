//! Grayscale image containers and the 8-bit PGM codec.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::binio::{read_all, write_atomic};
use crate::error::{invalid, Error, Result};

/// Channel-major `[C,H,W]` float image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(invalid("image dimensions must be positive"));
        }
        if data.len() != channels * height * width {
            return Err(invalid(format!(
                "image {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn gray(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(1, height, width, data)
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Rectangular crop of every channel.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Image> {
        if y0 + h > self.height || x0 + w > self.width || h == 0 || w == 0 {
            return Err(invalid("crop window outside the image"));
        }
        let mut data = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for y in y0..y0 + h {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
            }
        }
        Image::new(self.channels, h, w, data)
    }

    /// 8-bit binary PGM (P5, maxval 255) of channel 0, values clamped to [0,1].
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.plane(0).iter().map(|&v| quantize(v)));
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Image> {
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Truncated { what: "pgm" });
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| Error::BadHeader { what: "pgm" })?);
        }
        if fields[0] != "P5" {
            return Err(Error::BadHeader { what: "pgm" });
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::BadHeader { what: "pgm" });
        let (w, h, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        if maxval != 255 {
            return Err(Error::BadHeader { what: "pgm" });
        }
        pos += 1;
        let pixels = bytes.get(pos..pos + w * h).ok_or(Error::Truncated { what: "pgm" })?;
        Image::gray(h, w, pixels.iter().map(|&b| b as f32 / 255.0).collect())
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_pgm())?;
        Ok(())
    }

    pub fn read_pgm(path: &Path) -> Result<Image> {
        Image::from_pgm(&read_all(path)?)
    }
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Presentation class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    /// Bona fide presentation.
    Live,
    /// Attack presentation.
    Spoof,
}

impl Label {
    /// Index into two-class outputs; class 0 is live.
    pub fn index(self) -> usize {
        match self {
            Label::Live => 0,
            Label::Spoof => 1,
        }
    }

    pub fn one_hot(self) -> [f32; 2] {
        match self {
            Label::Live => [1.0, 0.0],
            Label::Spoof => [0.0, 1.0],
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Live => "live",
            Label::Spoof => "spoof",
        })
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(Label::Live),
            "spoof" => Ok(Label::Spoof),
            other => Err(Error::Data(format!("unknown label {other:?}"))),
        }
    }
}

/// Presentation material.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Material {
    Live,
    Silica,
    Gelatin,
    Latex,
}

impl Material {
    pub const ALL: [Material; 4] = [Material::Live, Material::Silica, Material::Gelatin, Material::Latex];

    pub fn label(self) -> Label {
        if self == Material::Live {
            Label::Live
        } else {
            Label::Spoof
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Material::Live => "live",
            Material::Silica => "silica",
            Material::Gelatin => "gelatin",
            Material::Latex => "latex",
        }
    }
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Material {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Material::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Data(format!("unknown material {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub subject: u32,
    pub finger: u32,
    pub scanner: u32,
    pub material: Material,
    pub impression: u32,
    pub split: Split,
}

impl Default for SampleMeta {
    fn default() -> Self {
        Self {
            subject: 0,
            finger: 0,
            scanner: 0,
            material: Material::Live,
            impression: 0,
            split: Split::Train,
        }
    }
}

/// Image with its presentation label and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub image: Image,
    pub label: Label,
    pub meta: SampleMeta,
}

impl ImageSample {
    pub fn new(image: Image, label: Label) -> Self {
        let meta = SampleMeta {
            material: if label == Label::Live {
                Material::Live
            } else {
                Material::Silica
            },
            ..SampleMeta::default()
        };
        Self { image, label, meta }
    }
}
