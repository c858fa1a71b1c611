//! Raw person-year records and the categorical codes they carry.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! code_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal $(| $alias:literal)*),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            /// Case-insensitive parse of the canonical code or a known alias.
            pub fn parse(s: &str) -> Option<Self> {
                let s = s.trim().to_ascii_lowercase();
                match s.as_str() {
                    $($text $(| $alias)* => Some($name::$variant),)+
                    _ => None,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

code_enum!(
    /// Household role of a person in a given year.
    Role {
        Rp => "rp" | "head" | "reference_person",
        Sp => "sp" | "spouse" | "partner",
        Ch => "ch" | "child",
        Other => "other",
    }
);

code_enum!(
    SampleFlag {
        Original1968 => "original_1968" | "original",
        LinealDescendant => "lineal_descendant" | "descendant",
        Nonsample => "nonsample",
        LatinoSupplement => "latino_supplement",
        ImmigrantRefresher => "immigrant_refresher",
    }
);

code_enum!(
    /// Recall period of a reported amount.
    Recall {
        Week => "week" | "weekly",
        TwoWeek => "two_week" | "biweekly",
        Month => "month" | "monthly",
        Year => "year" | "annual" | "yearly",
        Other => "other" | "dk" | "dont_know" | "don't know" | "refused" | "na" | "n/a",
        Missing => "missing",
    }
);

code_enum!(
    FoodStatus {
        Secure => "secure",
        Insecure => "insecure",
    }
);

code_enum!(
    Sex {
        Male => "male" | "m",
        Female => "female" | "f",
    }
);

code_enum!(
    /// Binary race classification: every race other than White is non-White.
    Race {
        White => "white",
        NonWhite => "nonwhite" | "non-white" | "non_white",
    }
);

code_enum!(
    Education {
        LessHs => "less_hs",
        Hs => "hs" | "ged",
        SomeCollege => "some_college",
        College => "college",
    }
);

impl Recall {
    /// Multiplier converting an amount over this recall period into a
    /// monthly flow, or `None` when the period is unknown.
    pub fn monthly_factor(self) -> Option<f64> {
        match self {
            Recall::Week => Some(52.0 / 12.0),
            Recall::TwoWeek => Some(26.0 / 12.0),
            Recall::Month => Some(1.0),
            Recall::Year => Some(1.0 / 12.0),
            Recall::Other | Recall::Missing => None,
        }
    }
}

impl Race {
    /// First listed race decides; anything other than White is non-White.
    pub fn from_raw(s: &str) -> Option<Self> {
        let first = s.split([';', '|', '/']).next()?.trim();
        if first.is_empty() {
            return None;
        }
        Some(Race::parse(first).unwrap_or(Race::NonWhite))
    }
}

impl Education {
    pub const ALL: [Education; 4] =
        [Education::LessHs, Education::Hs, Education::SomeCollege, Education::College];
}

/// Answer to a non-response-style numeric question, such as a benefit amount
/// reported as "refused".
pub(crate) fn is_nonresponse_token(s: &str) -> bool {
    matches!(
        s.trim().to_ascii_lowercase().as_str(),
        "refused" | "dk" | "dont_know" | "don't know" | "na" | "n/a" | "inap" | "other" | "not applicable"
    )
}

/// Demographics of the household's reference person.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RpDemographics {
    pub age: Option<f64>,
    pub sex: Option<Sex>,
    pub race: Option<Race>,
    pub married: Option<bool>,
    pub education: Option<Education>,
    pub employed: Option<bool>,
    pub disabled: Option<bool>,
}

/// The sample individual's own demographics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersonDemographics {
    pub age: Option<f64>,
    pub sex: Option<Sex>,
    pub race: Option<Race>,
    pub education: Option<Education>,
}

/// One reported food-expenditure component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub amount: Option<f64>,
    pub recall: Recall,
}

impl Default for Component {
    fn default() -> Self {
        Self { amount: None, recall: Recall::Missing }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FoodComponents {
    /// At home (pre-1994: at home and delivered combined; 1994+ SNAP
    /// recipients: the amount spent beyond the benefit).
    pub home: Component,
    pub delivered: Component,
    pub eaten_out: Component,
}

impl FoodComponents {
    pub fn all_missing(&self) -> bool {
        self.home.amount.is_none() && self.delivered.amount.is_none() && self.eaten_out.amount.is_none()
    }
}

/// One sample individual observed in one survey wave, as read from input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub person_id: String,
    pub year: i32,
    pub household_id: String,
    pub role: Role,
    pub interview_month: Option<u8>,
    pub individual_weight: f64,
    pub state: String,
    pub sample_flag: SampleFlag,
    /// Count (1977–1993), yes/no answer (1994–1997, 2009+), or a 12-char
    /// string of monthly 0/1 flags, January first (1999–2007).
    pub snap_raw: Option<String>,
    pub snap_benefit_raw: Option<f64>,
    pub benefit_recall: Recall,
    pub food: FoodComponents,
    pub family_size: u32,
    pub n_children: u32,
    pub income_annual: Option<f64>,
    /// Monthly per-capita Thrifty Food Plan cost, nominal dollars.
    pub tfp_cost_pc: f64,
    pub fsss_raw: Option<u8>,
    pub fsss_status: Option<FoodStatus>,
    pub rp: RpDemographics,
    pub person: PersonDemographics,
}

/// Years in which the food security scale was administered.
pub const FSSS_WAVES: [i32; 6] = [1999, 2001, 2003, 2015, 2017, 2019];
