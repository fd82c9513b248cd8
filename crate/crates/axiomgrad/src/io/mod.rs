//! External formats: IDX datasets, JSON model files, PPM overlays.

pub mod idx;
pub mod model;
pub mod ppm;

pub use idx::{load_idx, load_idx_images, load_idx_labels, write_idx_images, write_idx_labels};
pub use model::{load_model, model_from_json, model_to_json, save_model};
pub use ppm::{render_overlay, OverlayImage};
