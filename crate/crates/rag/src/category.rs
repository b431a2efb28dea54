//! The fixed set of clinical note categories.
//!
//! Progress notes arrive pre-sectioned under twenty-one standardized
//! category labels. The labels are matched verbatim (including their
//! inconsistent historical casing, e.g. `cc` vs `CurrentMeds`); anything
//! else is rejected at ingestion.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::RagError;

/// One of the 21 standardized clinical note categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClinicalCategory {
    #[serde(rename = "cc")]
    Cc,
    #[serde(rename = "CurrentMeds")]
    CurrentMeds,
    #[serde(rename = "PastHistory")]
    PastHistory,
    #[serde(rename = "Allergies")]
    Allergies,
    #[serde(rename = "vitals2BR")]
    Vitals2Br,
    #[serde(rename = "PhysicalExamination")]
    PhysicalExamination,
    #[serde(rename = "Treatment")]
    Treatment,
    #[serde(rename = "Immunization")]
    Immunization,
    #[serde(rename = "Procedure")]
    Procedure,
    #[serde(rename = "SurgicalHistory")]
    SurgicalHistory,
    #[serde(rename = "Hospitalization")]
    Hospitalization,
    #[serde(rename = "FamilyHistory")]
    FamilyHistory,
    #[serde(rename = "SocialHistory")]
    SocialHistory,
    #[serde(rename = "ros")]
    Ros,
    #[serde(rename = "hpi")]
    Hpi,
    #[serde(rename = "assessment")]
    Assessment,
    #[serde(rename = "ClinicalNotes")]
    ClinicalNotes,
    #[serde(rename = "Injection")]
    Injection,
    #[serde(rename = "labs")]
    Labs,
    #[serde(rename = "PastOrders")]
    PastOrders,
    #[serde(rename = "Preventive")]
    Preventive,
}

impl ClinicalCategory {
    /// Every category, in declaration order.
    pub const ALL: [ClinicalCategory; 21] = [
        ClinicalCategory::Cc,
        ClinicalCategory::CurrentMeds,
        ClinicalCategory::PastHistory,
        ClinicalCategory::Allergies,
        ClinicalCategory::Vitals2Br,
        ClinicalCategory::PhysicalExamination,
        ClinicalCategory::Treatment,
        ClinicalCategory::Immunization,
        ClinicalCategory::Procedure,
        ClinicalCategory::SurgicalHistory,
        ClinicalCategory::Hospitalization,
        ClinicalCategory::FamilyHistory,
        ClinicalCategory::SocialHistory,
        ClinicalCategory::Ros,
        ClinicalCategory::Hpi,
        ClinicalCategory::Assessment,
        ClinicalCategory::ClinicalNotes,
        ClinicalCategory::Injection,
        ClinicalCategory::Labs,
        ClinicalCategory::PastOrders,
        ClinicalCategory::Preventive,
    ];

    /// The canonical label, exactly as it appears in note exports.
    pub fn as_str(self) -> &'static str {
        match self {
            ClinicalCategory::Cc => "cc",
            ClinicalCategory::CurrentMeds => "CurrentMeds",
            ClinicalCategory::PastHistory => "PastHistory",
            ClinicalCategory::Allergies => "Allergies",
            ClinicalCategory::Vitals2Br => "vitals2BR",
            ClinicalCategory::PhysicalExamination => "PhysicalExamination",
            ClinicalCategory::Treatment => "Treatment",
            ClinicalCategory::Immunization => "Immunization",
            ClinicalCategory::Procedure => "Procedure",
            ClinicalCategory::SurgicalHistory => "SurgicalHistory",
            ClinicalCategory::Hospitalization => "Hospitalization",
            ClinicalCategory::FamilyHistory => "FamilyHistory",
            ClinicalCategory::SocialHistory => "SocialHistory",
            ClinicalCategory::Ros => "ros",
            ClinicalCategory::Hpi => "hpi",
            ClinicalCategory::Assessment => "assessment",
            ClinicalCategory::ClinicalNotes => "ClinicalNotes",
            ClinicalCategory::Injection => "Injection",
            ClinicalCategory::Labs => "labs",
            ClinicalCategory::PastOrders => "PastOrders",
            ClinicalCategory::Preventive => "Preventive",
        }
    }
}

impl fmt::Display for ClinicalCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClinicalCategory {
    type Err = RagError;

    /// Exact-match parse; casing is significant.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClinicalCategory::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| RagError::UnknownCategory(s.to_string()))
    }
}
