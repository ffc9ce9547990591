pub mod config;
pub mod dataset;
pub mod discriminators;
pub mod emotion;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod inference;
pub mod losses;
pub mod media;
pub mod nets;
pub mod optim;
pub mod perceptual;
pub mod stimuli;
pub mod training;
pub mod video;
