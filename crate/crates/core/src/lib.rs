pub mod annotate;
pub mod camera;
pub mod codec;
pub mod error;
pub mod eval;
pub mod filters;
pub mod geometry;
pub mod io;
pub mod lift;
pub mod losses;

pub use camera::{rsh8, CameraModel, RayField};
pub use codec::{decode, encode, fuse_score, BoxEncoding12, ConfidenceTarget};
pub use error::{Error, Result};
pub use geometry::{giou2d, iou3d, normalize_rotation, rot6d_to_matrix, Box2D, Box3D, Rot6D};
pub use losses::LossReport;
