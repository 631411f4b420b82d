use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Languages with a shipped normalization profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    Urdu,
    Persian,
    Arabic,
}

impl Lang {
    pub const ALL: [Lang; 3] = [Lang::Urdu, Lang::Persian, Lang::Arabic];

    pub fn as_str(&self) -> &'static str {
        match self {
            Lang::Urdu => "urdu",
            Lang::Persian => "persian",
            Lang::Arabic => "arabic",
        }
    }

    /// Capitalized name used in report headers.
    pub fn title(&self) -> &'static str {
        match self {
            Lang::Urdu => "Urdu",
            Lang::Persian => "Persian",
            Lang::Arabic => "Arabic",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("UnknownLanguage: {0:?} (expected urdu, persian or arabic)")]
pub struct UnknownLang(pub String);

impl FromStr for Lang {
    type Err = UnknownLang;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "urdu" | "ur" => Ok(Lang::Urdu),
            "persian" | "fa" | "farsi" => Ok(Lang::Persian),
            "arabic" | "ar" => Ok(Lang::Arabic),
            _ => Err(UnknownLang(s.to_string())),
        }
    }
}
