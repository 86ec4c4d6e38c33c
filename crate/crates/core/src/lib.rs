//! Differential morphing-attack detection core.

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod learning;
pub mod linalg;
pub mod manifest;
pub mod normal_map;
pub mod raster;
pub mod scalar;
pub mod scores;
pub mod shading;

pub use error::{Error, Result};
pub use scalar::Real;

pub use evaluation::{DetCurve, Metrics, Rate};
pub use features::{Embedding, Extractor, FeatureKind, PairFeature, QuantizedNormalMap};
pub use geometry::{CanonicalFrame, LandmarkSet, SimilarityTransform};
pub use learning::{FusionWeights, LinearSvmModel, SvmParams};
pub use manifest::{CameraId, DatasetManifest, Record, Role, Split};
pub use normal_map::NormalMap;
pub use raster::Raster;
pub use scores::{Label, ScoreEntry, ScoreSet};
pub use shading::{DecomposerMode, Decomposition, ShLighting};

/// Single-precision map, the on-disk interchange precision.
pub type FloatMap = Raster<f32>;
/// Double-precision map used for in-memory computation.
pub type FloatMap64 = Raster<f64>;
pub type NormalMap32 = NormalMap<f32>;
pub type NormalMap64 = NormalMap<f64>;
pub type Landmarks = LandmarkSet<f64>;
pub type Lighting = ShLighting<f64>;
pub type SvmModel = LinearSvmModel<f64>;
