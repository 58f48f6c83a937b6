//! The four feeding-intensity classes, in increasing order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Intensity {
    None,
    Weak,
    Medium,
    Strong,
}

pub const NUM_CLASSES: usize = 4;

impl Intensity {
    pub const ALL: [Intensity; NUM_CLASSES] = [Intensity::None, Intensity::Weak, Intensity::Medium, Intensity::Strong];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Intensity::None => "None",
            Intensity::Weak => "Weak",
            Intensity::Medium => "Medium",
            Intensity::Strong => "Strong",
        }
    }
}

impl fmt::Display for Intensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Intensity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Input(format!("unknown intensity label `{s}`")))
    }
}
