//! The six categorical emotions, in alphabetical index order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Number of real emotion classes.
pub const NUM_EMOTIONS: usize = 6;
/// Index of the extra "generated video" class used by the emotion discriminator.
pub const FAKE_CLASS: i64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Disgust,
    Fear,
    Happiness,
    Neutral,
    Sadness,
}

impl Emotion {
    pub const ALL: [Emotion; NUM_EMOTIONS] =
        [Emotion::Anger, Emotion::Disgust, Emotion::Fear, Emotion::Happiness, Emotion::Neutral, Emotion::Sadness];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: i64) -> Result<Self, Error> {
        usize::try_from(index).ok().and_then(|i| Self::ALL.get(i).copied()).ok_or(Error::EmotionIndex(index))
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Happiness => "happiness",
            Emotion::Neutral => "neutral",
            Emotion::Sadness => "sadness",
        }
    }

    /// Three-letter code used in CREMA-D file names (`1001_DFA_ANG_XX`).
    pub fn crema_code(self) -> &'static str {
        match self {
            Emotion::Anger => "ANG",
            Emotion::Disgust => "DIS",
            Emotion::Fear => "FEA",
            Emotion::Happiness => "HAP",
            Emotion::Neutral => "NEU",
            Emotion::Sadness => "SAD",
        }
    }

    pub fn from_crema_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.crema_code().eq_ignore_ascii_case(code))
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    /// Case-insensitive; accepts full names and CREMA-D codes.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|e| e.name() == lower)
            .or_else(|| Self::from_crema_code(&lower))
            .ok_or(Error::UnknownEmotion { name: s.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabetical_indices() {
        let names: Vec<_> = Emotion::ALL.iter().map(|e| e.name()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert_eq!(Emotion::Anger.index(), 0);
        assert_eq!(Emotion::Sadness.index(), 5);
        assert_eq!(FAKE_CLASS, 6);
    }

    #[test]
    fn parse_case_insensitive() {
        assert_eq!("HaPPiness".parse::<Emotion>().unwrap(), Emotion::Happiness);
        assert_eq!("NEU".parse::<Emotion>().unwrap(), Emotion::Neutral);
        assert!("joy".parse::<Emotion>().is_err());
        assert!(Emotion::from_index(6).is_err());
        assert!(Emotion::from_index(-1).is_err());
    }
}
