//! Data pipeline: face alignment, resampling, clip containers, manifests,
//! mouth-region masks, augmentation and training-window sampling.

pub mod align;
pub mod augment;
pub mod clip;
pub mod landmarks;
pub mod manifest;
pub mod mrm;
pub mod preprocess;
pub mod similarity;
pub mod synth;
pub mod template;
pub mod window;
