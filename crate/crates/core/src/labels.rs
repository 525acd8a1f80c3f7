//! Closed label sets for activity and transport classification.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The twelve protocol activities, in confusion-matrix order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityLabel {
    Lying,
    Sitting,
    Standing,
    Walking,
    Running,
    Cycling,
    NordicWalking,
    AscendingStairs,
    DescendingStairs,
    VacuumCleaning,
    Ironing,
    RopeJumping,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; 12] = [
        Self::Lying,
        Self::Sitting,
        Self::Standing,
        Self::Walking,
        Self::Running,
        Self::Cycling,
        Self::NordicWalking,
        Self::AscendingStairs,
        Self::DescendingStairs,
        Self::VacuumCleaning,
        Self::Ironing,
        Self::RopeJumping,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lying => "lying",
            Self::Sitting => "sitting",
            Self::Standing => "standing",
            Self::Walking => "walking",
            Self::Running => "running",
            Self::Cycling => "cycling",
            Self::NordicWalking => "nordic_walking",
            Self::AscendingStairs => "ascending_stairs",
            Self::DescendingStairs => "descending_stairs",
            Self::VacuumCleaning => "vacuum_cleaning",
            Self::Ironing => "ironing",
            Self::RopeJumping => "rope_jumping",
        }
    }

    /// Maps a PAMAP2 `activityID`. Transient (0) and the optional
    /// non-protocol activities map to `Ok(None)`.
    pub fn from_pamap2_id(id: u32) -> Result<Option<Self>, Error> {
        Ok(Some(match id {
            0 | 9 | 10 | 11 | 18 | 19 | 20 => return Ok(None),
            1 => Self::Lying,
            2 => Self::Sitting,
            3 => Self::Standing,
            4 => Self::Walking,
            5 => Self::Running,
            6 => Self::Cycling,
            7 => Self::NordicWalking,
            12 => Self::AscendingStairs,
            13 => Self::DescendingStairs,
            16 => Self::VacuumCleaning,
            17 => Self::Ironing,
            24 => Self::RopeJumping,
            other => return Err(Error::Invalid(format!("unknown activity ID {other}"))),
        }))
    }

    pub fn pamap2_id(self) -> u32 {
        match self {
            Self::Lying => 1,
            Self::Sitting => 2,
            Self::Standing => 3,
            Self::Walking => 4,
            Self::Running => 5,
            Self::Cycling => 6,
            Self::NordicWalking => 7,
            Self::AscendingStairs => 12,
            Self::DescendingStairs => 13,
            Self::VacuumCleaning => 16,
            Self::Ironing => 17,
            Self::RopeJumping => 24,
        }
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown activity label `{s}`")))
    }
}

/// Transport classes used for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportLabel {
    WalkRun,
    Bike,
    Car,
    Bus,
    TrainSubway,
}

impl TransportLabel {
    pub const ALL: [TransportLabel; 5] = [
        Self::WalkRun,
        Self::Bike,
        Self::Car,
        Self::Bus,
        Self::TrainSubway,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::WalkRun => "walk_run",
            Self::Bike => "bike",
            Self::Car => "car",
            Self::Bus => "bus",
            Self::TrainSubway => "train_subway",
        }
    }
}

impl fmt::Display for TransportLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransportLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown transport label `{s}`")))
    }
}

/// The eight SHL coarse locomotion modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShlMode {
    Still,
    Walk,
    Run,
    Bike,
    Car,
    Bus,
    Train,
    Subway,
}

impl ShlMode {
    /// SHL coarse label code; 0 (null) maps to `Ok(None)`.
    pub fn from_code(code: u32) -> Result<Option<Self>, Error> {
        Ok(Some(match code {
            0 => return Ok(None),
            1 => Self::Still,
            2 => Self::Walk,
            3 => Self::Run,
            4 => Self::Bike,
            5 => Self::Car,
            6 => Self::Bus,
            7 => Self::Train,
            8 => Self::Subway,
            other => return Err(Error::Invalid(format!("unknown SHL coarse label {other}"))),
        }))
    }

    pub fn code(self) -> u32 {
        self as u32 + 1
    }

    /// Evaluation class; `Still` has none.
    pub fn transport(self) -> Option<TransportLabel> {
        match self {
            Self::Still => None,
            Self::Walk | Self::Run => Some(TransportLabel::WalkRun),
            Self::Bike => Some(TransportLabel::Bike),
            Self::Car => Some(TransportLabel::Car),
            Self::Bus => Some(TransportLabel::Bus),
            Self::Train | Self::Subway => Some(TransportLabel::TrainSubway),
        }
    }
}
