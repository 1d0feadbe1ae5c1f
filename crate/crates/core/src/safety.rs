//! ASIL determination from severity, exposure and controllability.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SafetyError {
    #[error("max_asil needs at least one level")]
    EmptyInput,
    #[error("cannot parse `{0}` as a classification value")]
    Parse(String),
}

macro_rules! class_enum {
    ($(#[$m:meta])* $name:ident { $($var:ident = $n:expr),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($var = $n),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$var),+];

            /// One-based class number.
            pub fn rank(self) -> u8 {
                self as u8
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                match self {
                    $($name::$var => f.write_str(stringify!($var))),+
                }
            }
        }

        impl FromStr for $name {
            type Err = SafetyError;

            fn from_str(s: &str) -> Result<Self, SafetyError> {
                match s.trim().to_ascii_uppercase().as_str() {
                    $(x if x == stringify!($var) => Ok($name::$var),)+
                    _ => Err(SafetyError::Parse(s.to_owned())),
                }
            }
        }
    };
}

class_enum!(Severity { S1 = 1, S2 = 2, S3 = 3 });
class_enum!(Exposure { E1 = 1, E2 = 2, E3 = 3, E4 = 4 });
class_enum!(Controllability { C1 = 1, C2 = 2, C3 = 3 });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AsilLevel {
    QM,
    A,
    B,
    C,
    D,
}

impl AsilLevel {
    pub const ALL: [AsilLevel; 5] = [Self::QM, Self::A, Self::B, Self::C, Self::D];
}

impl fmt::Display for AsilLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::QM => "QM",
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
            Self::D => "D",
        })
    }
}

use AsilLevel::{A, B, C, D, QM};

/// Rows are severity × exposure, columns controllability C1..C3.
const TABLE: [[[AsilLevel; 3]; 4]; 3] = [
    [[QM, QM, QM], [QM, QM, QM], [QM, QM, A], [QM, A, B]],
    [[QM, QM, QM], [QM, QM, A], [QM, A, B], [A, B, C]],
    // S3/E1/C3 is the "A/QM" cell
    [[QM, QM, A], [QM, A, B], [A, B, C], [B, C, D]],
];

/// Table lookup. `relax_s3e1c3` picks QM for the one cell printed as "A/QM";
/// the default is A.
pub fn determine_asil(
    s: Severity,
    e: Exposure,
    c: Controllability,
    relax_s3e1c3: bool,
) -> AsilLevel {
    if relax_s3e1c3 && (s, e, c) == (Severity::S3, Exposure::E1, Controllability::C3) {
        return QM;
    }
    TABLE[s.rank() as usize - 1][e.rank() as usize - 1][c.rank() as usize - 1]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardRecord {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub severity: Severity,
    pub exposure: Exposure,
    pub controllability: Controllability,
}

impl HazardRecord {
    pub fn asil(&self, relax_s3e1c3: bool) -> AsilLevel {
        determine_asil(self.severity, self.exposure, self.controllability, relax_s3e1c3)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassifiedHazard {
    pub id: String,
    pub level: AsilLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BatchReport {
    /// Sorted by id; records sharing an id keep their input order.
    pub entries: Vec<ClassifiedHazard>,
    /// Count per level, every level present.
    pub histogram: BTreeMap<AsilLevel, usize>,
    pub duplicate_ids: BTreeSet<String>,
}

impl BatchReport {
    pub fn total(&self) -> usize {
        self.histogram.values().sum()
    }
}

impl fmt::Display for BatchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let dup = if self.duplicate_ids.contains(&e.id) {
                " (duplicate id)"
            } else {
                ""
            };
            writeln!(f, "{}\t{}{}", e.id, e.level, dup)?;
        }
        let hist: Vec<String> = self
            .histogram
            .iter()
            .map(|(l, n)| format!("{l}={n}"))
            .collect();
        write!(f, "histogram: {}", hist.join(" "))
    }
}

pub fn classify_batch(records: &[HazardRecord], relax_s3e1c3: bool) -> BatchReport {
    let mut entries: Vec<ClassifiedHazard> = records
        .iter()
        .map(|r| ClassifiedHazard {
            id: r.id.clone(),
            level: r.asil(relax_s3e1c3),
        })
        .collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let mut histogram: BTreeMap<AsilLevel, usize> =
        AsilLevel::ALL.iter().map(|l| (*l, 0)).collect();
    for e in &entries {
        *histogram.entry(e.level).or_default() += 1;
    }
    let duplicate_ids = entries
        .windows(2)
        .filter(|w| w[0].id == w[1].id)
        .map(|w| w[0].id.clone())
        .collect();
    BatchReport {
        entries,
        histogram,
        duplicate_ids,
    }
}

pub fn max_asil(levels: &[AsilLevel]) -> Result<AsilLevel, SafetyError> {
    levels.iter().copied().max().ok_or(SafetyError::EmptyInput)
}
