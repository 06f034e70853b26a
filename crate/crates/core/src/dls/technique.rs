use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Loop scheduling techniques. Names follow the usual abbreviations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Technique {
    Static,
    SS,
    FSC,
    MFSC,
    GSS,
    TSS,
    FAC,
    WF,
    AwfB,
    AwfC,
    AwfD,
    AwfE,
    AF,
}

impl Technique {
    pub const ALL: [Technique; 13] = [
        Technique::Static,
        Technique::SS,
        Technique::FSC,
        Technique::MFSC,
        Technique::GSS,
        Technique::TSS,
        Technique::FAC,
        Technique::WF,
        Technique::AwfB,
        Technique::AwfC,
        Technique::AwfD,
        Technique::AwfE,
        Technique::AF,
    ];

    /// Everything except GSS, TSS and FAC, which do poorly on heterogeneous
    /// systems and only slow the predictions down.
    pub fn standard_portfolio() -> Vec<Technique> {
        Self::ALL
            .into_iter()
            .filter(|t| !matches!(t, Technique::GSS | Technique::TSS | Technique::FAC))
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Technique::Static => "STATIC",
            Technique::SS => "SS",
            Technique::FSC => "FSC",
            Technique::MFSC => "mFSC",
            Technique::GSS => "GSS",
            Technique::TSS => "TSS",
            Technique::FAC => "FAC",
            Technique::WF => "WF",
            Technique::AwfB => "AWF-B",
            Technique::AwfC => "AWF-C",
            Technique::AwfD => "AWF-D",
            Technique::AwfE => "AWF-E",
            Technique::AF => "AF",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(
            self,
            Technique::AwfB | Technique::AwfC | Technique::AwfD | Technique::AwfE | Technique::AF
        )
    }

    /// Techniques that size chunks from per-PE weights.
    pub fn is_weighted(self) -> bool {
        matches!(
            self,
            Technique::WF | Technique::AwfB | Technique::AwfC | Technique::AwfD | Technique::AwfE
        )
    }

    /// Techniques that group chunks into batches of half the remaining work.
    pub fn uses_batches(self) -> bool {
        self == Technique::FAC || self.is_weighted()
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        Technique::ALL
            .into_iter()
            .find(|t| t.name().to_ascii_uppercase() == norm)
            .ok_or_else(|| Error::UnknownTechnique(s.to_string()))
    }
}
