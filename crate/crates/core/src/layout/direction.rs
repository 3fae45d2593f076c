use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Screen-space movement direction; y grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LeftToRight,
    RightToLeft,
    TopToBottom,
    BottomToTop,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::LeftToRight,
        Direction::RightToLeft,
        Direction::TopToBottom,
        Direction::BottomToTop,
    ];

    pub fn phrase(self) -> &'static str {
        match self {
            Self::LeftToRight => "left to right",
            Self::RightToLeft => "right to left",
            Self::TopToBottom => "top to bottom",
            Self::BottomToTop => "bottom to top",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LeftToRight => "left_to_right",
            Self::RightToLeft => "right_to_left",
            Self::TopToBottom => "top_to_bottom",
            Self::BottomToTop => "bottom_to_top",
        }
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, Self::LeftToRight | Self::RightToLeft)
    }

    /// Sign of the expected center displacement along the moving axis.
    pub fn sign(self) -> f64 {
        match self {
            Self::LeftToRight | Self::TopToBottom => 1.0,
            Self::RightToLeft | Self::BottomToTop => -1.0,
        }
    }

    pub fn reversed(self) -> Self {
        match self {
            Self::LeftToRight => Self::RightToLeft,
            Self::RightToLeft => Self::LeftToRight,
            Self::TopToBottom => Self::BottomToTop,
            Self::BottomToTop => Self::TopToBottom,
        }
    }

    /// Earliest direction phrase in `text` (case-insensitive) and its byte
    /// range.
    pub fn find_in(text: &str) -> Option<(Direction, std::ops::Range<usize>)> {
        let lower = text.to_ascii_lowercase();
        Self::ALL
            .iter()
            .filter_map(|d| lower.find(d.phrase()).map(|i| (*d, i..i + d.phrase().len())))
            .min_by_key(|(_, r)| r.start)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        match norm.as_str() {
            "left_to_right" | "l2r" => Ok(Self::LeftToRight),
            "right_to_left" | "r2l" => Ok(Self::RightToLeft),
            "top_to_bottom" | "t2b" => Ok(Self::TopToBottom),
            "bottom_to_top" | "b2t" => Ok(Self::BottomToTop),
            _ => Err(format!("unknown direction {s:?}")),
        }
    }
}
