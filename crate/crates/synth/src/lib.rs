//! Synthetic Lambertian face world: parametric identities, landmark-aligned
//! morphs, simulated gate cameras and a print-scan channel, all with exact
//! ground-truth normals, albedo, lighting and landmarks.

pub mod camera;
pub mod dataset;
pub mod degrade;
pub mod face;

pub use camera::{
    directional_lighting, render_gate_capture, studio_lighting, CameraProfile, GateCapture,
};
pub use dataset::{derive_seed, emit_dataset, plan_dataset, DatasetPlan, SynthConfig};
pub use degrade::{degrade_print_scan, gaussian_blur};
pub use face::{
    gen_identity, gen_morph, normals_from_heightmap, Face, FaceModel, IdentityParams, FACE_SIZE,
};
