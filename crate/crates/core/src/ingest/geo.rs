//! State codes and census-style regions.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Northeast,
    MidAtlantic,
    South,
    Midwest,
    West,
}

impl Region {
    pub const ALL: [Region; 5] =
        [Region::Northeast, Region::MidAtlantic, Region::South, Region::Midwest, Region::West];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Northeast => "northeast",
            Region::MidAtlantic => "mid_atlantic",
            Region::South => "south",
            Region::Midwest => "midwest",
            Region::West => "west",
        }
    }
}

/// Where a state code places a household.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Residence {
    /// One of the 48 contiguous states or DC.
    Contiguous(Region),
    /// Alaska, Hawaii or a territory: outside the study area.
    Outside,
}

const NORTHEAST: &[&str] = &["ME", "NH", "VT", "NY", "MA", "CT", "RI"];
const MID_ATLANTIC: &[&str] = &["PA", "NJ", "DC", "DE", "MD", "VA"];
// Kentucky is absent from the published region table; it is placed in the South.
const SOUTH: &[&str] = &["NC", "SC", "GA", "TN", "WV", "FL", "AL", "AR", "MS", "LA", "TX", "KY"];
const MIDWEST: &[&str] = &["OH", "IN", "MI", "IL", "MN", "WI", "IA", "MO"];
const WEST: &[&str] = &[
    "KS", "NE", "ND", "SD", "OK", "AZ", "CO", "ID", "MT", "NV", "NM", "UT", "WY", "OR", "WA", "CA",
];
const OUTSIDE: &[&str] = &["AK", "HI", "PR", "GU", "VI", "AS", "MP", "TERR"];

/// Classify a two-letter state code. Returns `None` for unknown codes.
pub fn residence(code: &str) -> Option<Residence> {
    let code = code.trim().to_ascii_uppercase();
    let code = code.as_str();
    let table: [(&[&str], Region); 5] = [
        (NORTHEAST, Region::Northeast),
        (MID_ATLANTIC, Region::MidAtlantic),
        (SOUTH, Region::South),
        (MIDWEST, Region::Midwest),
        (WEST, Region::West),
    ];
    for (codes, region) in table {
        if codes.contains(&code) {
            return Some(Residence::Contiguous(region));
        }
    }
    OUTSIDE.contains(&code).then_some(Residence::Outside)
}

/// All contiguous-state codes (including DC) in a fixed order.
pub fn contiguous_codes() -> Vec<&'static str> {
    [NORTHEAST, MID_ATLANTIC, SOUTH, MIDWEST, WEST].concat()
}
