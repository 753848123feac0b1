//! On-disk formats and the synthetic dataset generator.

pub mod manifest;
pub mod metadata;
pub mod pfm;
pub mod synth;

pub use manifest::{format_manifest, load_manifest, parse_manifest, write_manifest, DatasetManifest, ManifestEntry};
pub use metadata::{format_camera_metadata, load_camera_metadata, parse_camera_metadata, write_camera_metadata};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, read_pfm_gray, write_pfm, write_pfm_gray, PfmImage};
pub use synth::{
    generate_synthetic_dataset, synthesize_camera, synthesize_dataset, synthesize_scene, write_synthetic_dataset,
    SyntheticCamera, SyntheticCameraSpec, SyntheticScene,
};
