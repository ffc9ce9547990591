//! Accuracy, macro-F1 and confusion matrices for six-way emotion predictions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::emotion::{Emotion, NUM_EMOTIONS};
use crate::error::{Error, Result};
use crate::media::write_png;
use crate::video::Video8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionEvalReport {
    /// Percent correct.
    pub accuracy: f64,
    /// Unweighted mean of per-class F1, in percent, over classes that occur
    /// in the labels or the predictions.
    pub macro_f1: f64,
    pub per_class_f1: [f64; NUM_EMOTIONS],
    /// `counts[true][predicted]`.
    pub counts: [[u64; NUM_EMOTIONS]; NUM_EMOTIONS],
    /// Row-normalized percentages; rows without samples are all zero.
    pub confusion: [[f64; NUM_EMOTIONS]; NUM_EMOTIONS],
    pub support: [u64; NUM_EMOTIONS],
}

impl EmotionEvalReport {
    pub fn from_predictions(labels: &[Emotion], predictions: &[Emotion]) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::Shape(format!("{} labels for {} predictions", labels.len(), predictions.len())));
        }
        if labels.is_empty() {
            return Err(Error::InvalidInput("no predictions to score".into()));
        }
        let mut counts = [[0u64; NUM_EMOTIONS]; NUM_EMOTIONS];
        for (l, p) in labels.iter().zip(predictions) {
            counts[l.index()][p.index()] += 1;
        }
        let support: [u64; NUM_EMOTIONS] = std::array::from_fn(|i| counts[i].iter().sum());
        let predicted: [u64; NUM_EMOTIONS] = std::array::from_fn(|j| (0..NUM_EMOTIONS).map(|i| counts[i][j]).sum());
        let confusion = std::array::from_fn(|i| {
            std::array::from_fn(|j| if support[i] == 0 { 0.0 } else { 100.0 * counts[i][j] as f64 / support[i] as f64 })
        });
        let correct: u64 = (0..NUM_EMOTIONS).map(|i| counts[i][i]).sum();
        let per_class_f1: [f64; NUM_EMOTIONS] = std::array::from_fn(|i| {
            let denom = support[i] + predicted[i];
            if denom == 0 {
                0.0
            } else {
                100.0 * 2.0 * counts[i][i] as f64 / denom as f64
            }
        });
        let present: Vec<usize> = (0..NUM_EMOTIONS).filter(|&i| support[i] + predicted[i] > 0).collect();
        let macro_f1 = present.iter().map(|&i| per_class_f1[i]).sum::<f64>() / present.len() as f64;
        Ok(Self {
            accuracy: 100.0 * correct as f64 / labels.len() as f64,
            macro_f1,
            per_class_f1,
            counts,
            confusion,
            support,
        })
    }

    pub fn confusion_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(Emotion::ALL.iter().map(|e| e.name().to_string()));
        w.write_record(&header)?;
        for (i, e) in Emotion::ALL.iter().enumerate() {
            let mut row = vec![e.name().to_string()];
            row.extend(self.confusion[i].iter().map(|v| format!("{v:.4}")));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `{prefix}.json`, `{prefix}_confusion.csv` and `{prefix}_confusion.png`.
    pub fn save(&self, dir: &Path, prefix: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{prefix}.json"));
        std::fs::write(&json, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join(format!("{prefix}_confusion.csv"));
        std::fs::write(&csv, self.confusion_csv()?).map_err(|e| Error::io(&csv, e))?;
        write_png(&dir.join(format!("{prefix}_confusion.png")), &render_confusion(&self.confusion), 0)
    }
}

const CELL: usize = 44;
const SCALE: usize = 2;

fn glyph(c: char) -> Option<[u8; 5]> {
    // 3×5 bitmaps, one row per entry, high bit on the left.
    Some(match c {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' | 'S' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '.' => [0, 0, 0, 0, 2],
        'A' => [2, 5, 7, 5, 5],
        'D' => [6, 5, 5, 5, 6],
        'F' => [7, 4, 6, 4, 4],
        'H' => [5, 5, 7, 5, 5],
        'N' => [5, 7, 7, 7, 5],
        _ => return None,
    })
}

fn draw_text(img: &mut Video8, text: &str, cx: usize, cy: usize, color: u8) {
    let advance = 4 * SCALE;
    let width = text.chars().count() * advance - SCALE;
    let x0 = cx.saturating_sub(width / 2);
    let y0 = cy.saturating_sub(5 * SCALE / 2);
    let w = img.width;
    let frame = img.frame_mut(0);
    for (k, c) in text.chars().enumerate() {
        let Some(rows) = glyph(c) else { continue };
        for (ry, bits) in rows.iter().enumerate() {
            for rx in 0..3 {
                if bits & (4 >> rx) == 0 {
                    continue;
                }
                for dy in 0..SCALE {
                    for dx in 0..SCALE {
                        let x = x0 + k * advance + rx * SCALE + dx;
                        let y = y0 + ry * SCALE + dy;
                        let i = (y * w + x) * 3;
                        if i + 2 < frame.len() {
                            frame[i..i + 3].fill(color);
                        }
                    }
                }
            }
        }
    }
}

/// Heat map of a row-normalized confusion matrix with the percentages
/// printed in each cell; rows are true classes, columns predictions.
pub fn render_confusion(confusion: &[[f64; NUM_EMOTIONS]; NUM_EMOTIONS]) -> Video8 {
    let n = NUM_EMOTIONS + 1;
    let mut img = Video8::filled(1, n * CELL, n * CELL, 255);
    let w = img.width;
    for (i, row) in confusion.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let s = (v / 100.0).clamp(0.0, 1.0);
            let color = [255.0 * (1.0 - 0.85 * s), 255.0 * (1.0 - 0.6 * s), 255.0 * (1.0 - 0.2 * s)];
            let frame = img.frame_mut(0);
            for y in (i + 1) * CELL + 1..(i + 2) * CELL - 1 {
                for x in (j + 1) * CELL + 1..(j + 2) * CELL - 1 {
                    let p = (y * w + x) * 3;
                    for c in 0..3 {
                        frame[p + c] = color[c] as u8;
                    }
                }
            }
            let text = if v >= 99.95 { "100".to_string() } else { format!("{v:.1}") };
            let ink = if s > 0.5 { 255 } else { 0 };
            draw_text(&mut img, &text, (j + 1) * CELL + CELL / 2, (i + 1) * CELL + CELL / 2, ink);
        }
    }
    for (k, e) in Emotion::ALL.iter().enumerate() {
        let initial = e.name()[..1].to_ascii_uppercase();
        draw_text(&mut img, &initial, CELL / 2, (k + 1) * CELL + CELL / 2, 0);
        draw_text(&mut img, &initial, (k + 1) * CELL + CELL / 2, CELL / 2, 0);
    }
    img
}
