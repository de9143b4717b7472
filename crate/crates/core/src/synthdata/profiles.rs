//! Scanner and material appearance models.

use autodiff::rng::mix;
use autodiff::RngStream;

use crate::error::{invalid, Result};
use crate::image::Material;

/// Acquisition device: intensity gain/offset, optical blur, sensor noise
/// and radial fall-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScannerProfile {
    pub id: u32,
    /// In `[0.5, 1.5]`.
    pub gain: f32,
    /// In `[-0.3, 0.3]`.
    pub offset: f32,
    /// Gaussian blur sigma in pixels, `[0, 2]`.
    pub blur_radius: f32,
    /// Additive Gaussian noise sigma, `[0, 0.1]`.
    pub noise_sigma: f32,
    /// Relative brightness loss at the corners, `[0, 0.5]`.
    pub vignette: f32,
}

impl ScannerProfile {
    /// Scanners 0–3 are fixed; higher ids are drawn from the documented
    /// ranges with the id as seed.
    pub fn preset(id: u32) -> Self {
        let fixed = |gain, offset, blur_radius, noise_sigma, vignette| Self {
            id,
            gain,
            offset,
            blur_radius,
            noise_sigma,
            vignette,
        };
        match id {
            0 => fixed(1.0, 0.0, 0.5, 0.02, 0.10),
            1 => fixed(0.75, 0.12, 0.9, 0.03, 0.25),
            2 => fixed(1.2, -0.08, 0.3, 0.025, 0.05),
            3 => fixed(0.9, 0.05, 1.2, 0.04, 0.35),
            _ => {
                let mut r = RngStream::new(mix(0x5ca7, id as u64), 0);
                fixed(
                    r.range(0.7, 1.3),
                    r.range(-0.15, 0.15),
                    r.range(0.2, 1.4),
                    r.range(0.01, 0.05),
                    r.range(0.0, 0.4),
                )
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.5..=1.5).contains(&self.gain)
            && (-0.3..=0.3).contains(&self.offset)
            && (0.0..=2.0).contains(&self.blur_radius)
            && (0.0..=0.1).contains(&self.noise_sigma)
            && (0.0..=0.5).contains(&self.vignette);
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("scanner {} parameters out of range", self.id)))
        }
    }
}

/// Texture of the presented finger or artefact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialProfile {
    pub kind: Material,
    /// Amplitude of additive high-frequency banding.
    pub artifact_amplitude: f32,
    /// Banding frequency range in cycles per pixel.
    pub band_frequency: (f32, f32),
    /// Multiplier on ridge contrast; 1 means none.
    pub contrast: f32,
    /// Fraction of sweat pores lost in the cast.
    pub pore_dropout: f32,
}

impl MaterialProfile {
    pub fn preset(kind: Material) -> Self {
        let p = |artifact_amplitude, band_frequency, contrast, pore_dropout| Self {
            kind,
            artifact_amplitude,
            band_frequency,
            contrast,
            pore_dropout,
        };
        match kind {
            Material::Live => p(0.0, (0.0, 0.0), 1.0, 0.0),
            Material::Silica => p(0.07, (0.36, 0.44), 0.72, 0.7),
            Material::Gelatin => p(0.05, (0.30, 0.38), 0.62, 0.85),
            Material::Latex => p(0.09, (0.40, 0.48), 0.80, 0.55),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == Material::Live
            && (self.artifact_amplitude != 0.0 || self.pore_dropout != 0.0 || self.contrast != 1.0)
        {
            return Err(invalid("live material carries no artefacts"));
        }
        let ok = (0.0..=0.5).contains(&self.artifact_amplitude)
            && (0.0..=0.5).contains(&self.band_frequency.0)
            && self.band_frequency.0 <= self.band_frequency.1
            && self.band_frequency.1 <= 0.5
            && self.contrast > 0.0
            && self.contrast <= 1.0
            && (0.0..=1.0).contains(&self.pore_dropout);
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("material {} parameters out of range", self.kind)))
        }
    }
}
