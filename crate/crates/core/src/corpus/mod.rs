//! Recordings, annotation tracks and the on-disk challenge layout.

mod index;
mod io;
pub mod synth;

pub use index::{enumerate_dataset, parse_entry_name, DatasetIndex, IndexEntry, Scenario, Split};
pub use io::{
    load_annotation_grid, load_annotations, load_recording, save_annotations, save_recording,
};
pub use synth::{generate_synthetic_dataset, SynthSpec};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use thiserror::Error;

pub const SAMPLE_RATE: f64 = 1000.0;
pub const ANNOTATION_STEP: f64 = 0.05;
pub const RATING_MIN: f64 = 0.5;
pub const RATING_MAX: f64 = 9.5;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: non-uniform sampling at row {row}: {detail}")]
    NonUniformSampling {
        path: PathBuf,
        row: usize,
        detail: String,
    },
    #[error("{path}: non-finite sample in column `{column}` at row {row}")]
    NonFiniteSample {
        path: PathBuf,
        row: usize,
        column: String,
    },
    #[error("{path}: {column} = {value} at row {row} is outside [0.5, 9.5]")]
    RangeViolation {
        path: PathBuf,
        row: usize,
        column: String,
        value: f64,
    },
    #[error("{path}: unsupported sample rate {rate:.3} Hz")]
    UnsupportedSampleRate { path: PathBuf, rate: f64 },
    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("{0}: no physiology/annotation counterpart")]
    OrphanFile(PathBuf),
    #[error("{0}: malformed name, expected sub_S_vid_V.csv")]
    MalformedName(PathBuf),
    #[error("duplicate index key {0}")]
    DuplicateEntry(String),
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Unit of a file's time column, inferred from the median step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Seconds,
    Milliseconds,
}

impl TimeUnit {
    pub fn to_seconds(self) -> f64 {
        match self {
            TimeUnit::Seconds => 1.0,
            TimeUnit::Milliseconds => 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Ecg,
    Bvp,
    Gsr,
    Rsp,
    Skt,
    EmgZygo,
    EmgCoru,
    EmgTrap,
}

impl Channel {
    pub const ALL: [Channel; 8] = [
        Channel::Ecg,
        Channel::Bvp,
        Channel::Gsr,
        Channel::Rsp,
        Channel::Skt,
        Channel::EmgZygo,
        Channel::EmgCoru,
        Channel::EmgTrap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Ecg => "ecg",
            Channel::Bvp => "bvp",
            Channel::Gsr => "gsr",
            Channel::Rsp => "rsp",
            Channel::Skt => "skt",
            Channel::EmgZygo => "emg_zygo",
            Channel::EmgCoru => "emg_coru",
            Channel::EmgTrap => "emg_trap",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One subject x video multi-channel recording at 1 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: u32,
    pub video_id: u32,
    pub sample_rate: f64,
    /// Time of the first sample, seconds.
    pub t0: f64,
    pub time_unit: TimeUnit,
    /// Indexed by [`Channel::index`].
    pub channels: [Vec<f64>; 8],
}

impl Recording {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, ch: Channel) -> &[f64] {
        &self.channels[ch.index()]
    }

    /// Time of the last sample.
    pub fn t_end(&self) -> f64 {
        self.t0 + (self.len() as f64 - 1.0) / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }
}

/// Valence/arousal ratings on a 20 Hz grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationTrack {
    pub timestamps: Vec<f64>,
    pub valence: Vec<f64>,
    pub arousal: Vec<f64>,
    pub time_unit: TimeUnit,
}

impl AnnotationTrack {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.timestamps.first(), self.timestamps.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn target(&self, target: Target) -> &[f64] {
        match target {
            Target::Valence => &self.valence,
            Target::Arousal => &self.arousal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Valence,
    Arousal,
}

impl Target {
    pub const BOTH: [Target; 2] = [Target::Valence, Target::Arousal];

    pub fn name(self) -> &'static str {
        match self {
            Target::Valence => "valence",
            Target::Arousal => "arousal",
        }
    }

    pub fn other(self) -> Target {
        match self {
            Target::Valence => Target::Arousal,
            Target::Arousal => Target::Valence,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
