//! Synthetic fingerprints with per-material and per-scanner appearance.

pub mod dataset;
pub mod identity;
pub mod profiles;
pub mod render;

pub use dataset::{
    build_dataset, build_identities, image_file_name, impression_from_path, load_dataset, manifest_csv, parse_manifest,
    ManifestRow, SplitMode, SynthConfig, SynthDataset, MANIFEST_HEADER,
};
pub use identity::{field_correlation, orientation_field, synth_finger, synth_finger_with, FingerIdentity};
pub use profiles::{MaterialProfile, ScannerProfile};
pub use render::{band_energy_ratio, gaussian_blur, render_impression, ImpressionInfo, IMAGE_SIZE};
