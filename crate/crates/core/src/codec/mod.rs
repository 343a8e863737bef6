//! Heatmap targets, keypoint decoding and crop geometry.

mod affine;
mod decode;
mod gaussian;
mod heatmap;

pub use affine::{
    box_to_input_transform, heatmap_to_image_coords, AffineTransform, PersonBox, DEFAULT_MARGIN,
};
pub use decode::{decode_argmax_quarter, decode_dark, DarkKeypoint, Fallback, LOG_FLOOR};
pub use gaussian::{encode_gaussian_targets, GaussianSpec};
pub use heatmap::{HeatmapSet, Keypoint};
