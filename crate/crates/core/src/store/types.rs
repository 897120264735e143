use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Vision,
    Audio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Standard,
    Misleading,
}

/// One cell of the 2x2 design. Serialized as `std_v`, `std_a`, `mis_v`, `mis_a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SplitLabel {
    pub modality: Modality,
    pub condition: Condition,
}

impl SplitLabel {
    pub const STD_V: SplitLabel = SplitLabel::new(Modality::Vision, Condition::Standard);
    pub const STD_A: SplitLabel = SplitLabel::new(Modality::Audio, Condition::Standard);
    pub const MIS_V: SplitLabel = SplitLabel::new(Modality::Vision, Condition::Misleading);
    pub const MIS_A: SplitLabel = SplitLabel::new(Modality::Audio, Condition::Misleading);

    /// Table order: std_v, std_a, mis_v, mis_a.
    pub const ALL: [SplitLabel; 4] = [Self::STD_V, Self::STD_A, Self::MIS_V, Self::MIS_A];

    pub const fn new(modality: Modality, condition: Condition) -> Self {
        Self {
            modality,
            condition,
        }
    }

    pub fn as_str(self) -> &'static str {
        match (self.condition, self.modality) {
            (Condition::Standard, Modality::Vision) => "std_v",
            (Condition::Standard, Modality::Audio) => "std_a",
            (Condition::Misleading, Modality::Vision) => "mis_v",
            (Condition::Misleading, Modality::Audio) => "mis_a",
        }
    }

    /// Position in [`SplitLabel::ALL`].
    pub fn index(self) -> usize {
        match self.as_str() {
            "std_v" => 0,
            "std_a" => 1,
            "mis_v" => 2,
            _ => 3,
        }
    }

    pub fn is_misleading(self) -> bool {
        self.condition == Condition::Misleading
    }
}

impl fmt::Display for SplitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SplitLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown split `{s}`")))
    }
}

impl Serialize for SplitLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SplitLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Answer option letter. A-D are content answers, E rejects the visual
/// premise, F rejects the audio premise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Letter {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Letter {
    pub const ALL: [Letter; 6] = [Letter::A, Letter::B, Letter::C, Letter::D, Letter::E, Letter::F];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Letter> {
        Letter::ALL.get(i).copied()
    }

    pub fn as_char(self) -> char {
        (b'A' + self as u8) as char
    }

    pub fn is_content(self) -> bool {
        self.index() < 4
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Letter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(Letter::A),
            "B" => Ok(Letter::B),
            "C" => Ok(Letter::C),
            "D" => Ok(Letter::D),
            "E" => Ok(Letter::E),
            "F" => Ok(Letter::F),
            other => Err(Error::Parse(format!("unknown letter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Existence,
    TimeOrder,
    Emotional,
    SceneDescription,
    CrossModality,
    Plot,
    Causal,
    Temporal,
}

impl QuestionType {
    pub const ALL: [QuestionType; 8] = [
        QuestionType::Existence,
        QuestionType::TimeOrder,
        QuestionType::Emotional,
        QuestionType::SceneDescription,
        QuestionType::CrossModality,
        QuestionType::Plot,
        QuestionType::Causal,
        QuestionType::Temporal,
    ];
}

/// Which perceptual element a misleading premise swaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MisleadingSubcategory {
    PersonPosition,
    PersonAction,
    PersonIdentity,
    PersonAppearance,
    ObjectLocation,
    ObjectType,
    ObjectAttribute,
    LocationSetting,
    LocationDetail,
    SpeechTone,
    SoundType,
    AmbientSound,
    SpeechContent,
    SoundSource,
    SoundIntensity,
    SpeechContext,
    BackgroundMusic,
    SpeechSpeaker,
}

impl MisleadingSubcategory {
    pub const VISION: [MisleadingSubcategory; 9] = [
        Self::PersonPosition,
        Self::PersonAction,
        Self::PersonIdentity,
        Self::PersonAppearance,
        Self::ObjectLocation,
        Self::ObjectType,
        Self::ObjectAttribute,
        Self::LocationSetting,
        Self::LocationDetail,
    ];
    pub const AUDIO: [MisleadingSubcategory; 9] = [
        Self::SpeechTone,
        Self::SoundType,
        Self::AmbientSound,
        Self::SpeechContent,
        Self::SoundSource,
        Self::SoundIntensity,
        Self::SpeechContext,
        Self::BackgroundMusic,
        Self::SpeechSpeaker,
    ];

    pub fn modality(self) -> Modality {
        if Self::VISION.contains(&self) {
            Modality::Vision
        } else {
            Modality::Audio
        }
    }
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sample_id: String,
    pub video_id: String,
    pub split: SplitLabel,
    pub question_type: QuestionType,
    #[serde(default)]
    pub misleading_subcategory: Option<MisleadingSubcategory>,
    pub duration_s: f64,
    pub answer_ts_start_s: f64,
    pub answer_ts_end_s: f64,
    pub correct_letter: Letter,
    pub bundle_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_text: Option<String>,
}

impl SampleMeta {
    /// Evidence start as a fraction of the clip duration.
    pub fn position_ratio(&self) -> f64 {
        self.answer_ts_start_s / self.duration_s
    }
}

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub model_name: String,
    pub samples: Vec<SampleMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assets_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings_path: Option<String>,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    pub fn sample(&self, sample_id: &str) -> Option<&SampleMeta> {
        self.samples.iter().find(|s| s.sample_id == sample_id)
    }
}
