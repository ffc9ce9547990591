//! Objective evaluation: frame metrics against ground truth, cross-system
//! alignment, and emotion classification of generated videos.

pub mod classifier;
pub mod compare;
pub mod emotion_report;
pub mod metrics;
pub mod report;

pub use classifier::{classify, evaluate_emotion_expression, load_classifier, train_emotion_classifier};
pub use compare::{align_for_comparison, ComparisonInput};
pub use emotion_report::EmotionEvalReport;
pub use metrics::{nlmd, psnr, ssim, PSNR_CAP};
pub use report::{evaluate_directories, MetricReport};
