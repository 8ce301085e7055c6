use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::service::CommMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    /// Lower is better; the ranking is reversed before scoring.
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Significance {
    Significant,
    Marginal,
    NotSignificant,
}

impl Significance {
    pub fn from_p(p: f64) -> Self {
        if p < 0.05 {
            Significance::Significant
        } else if p < 0.10 {
            Significance::Marginal
        } else {
            Significance::NotSignificant
        }
    }
}

/// Which rankings a Borda count takes into account.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Include {
    SignificantOnly,
    /// Significant and marginal.
    Stated,
    All,
}

impl Include {
    pub fn admits(self, s: Significance) -> bool {
        match self {
            Include::SignificantOnly => s == Significance::Significant,
            Include::Stated => s != Significance::NotSignificant,
            Include::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRanking {
    pub name: String,
    pub polarity: Polarity,
    /// Best to worst as reported (before any inversion).
    pub ordering: [CommMode; 4],
    pub significance: Significance,
}

impl ScaleRanking {
    pub fn new(
        name: &str,
        polarity: Polarity,
        ordering: &[CommMode],
        significance: Significance,
    ) -> Result<Self, StatsError> {
        let bad = || StatsError::NotAPermutation {
            name: name.to_owned(),
        };
        let ordering: [CommMode; 4] = ordering.try_into().map_err(|_| bad())?;
        if CommMode::ALL.iter().any(|m| !ordering.contains(m)) {
            return Err(bad());
        }
        Ok(Self {
            name: name.to_owned(),
            polarity,
            ordering,
            significance,
        })
    }
}

pub type BordaResult = BTreeMap<CommMode, u32>;

/// Borda count: first place earns 4 points down to 1 for last.
pub fn borda(rankings: &[ScaleRanking], include: Include, invert_negative: bool) -> BordaResult {
    let mut scores: BordaResult = CommMode::ALL.iter().map(|m| (*m, 0)).collect();
    for r in rankings.iter().filter(|r| include.admits(r.significance)) {
        let mut order = r.ordering;
        if invert_negative && r.polarity == Polarity::Negative {
            order.reverse();
        }
        for (place, mode) in order.iter().enumerate() {
            *scores.get_mut(mode).expect("all modes present") += (order.len() - place) as u32;
        }
    }
    scores
}

/// Parses lines of `name, polarity, ordering, significance`, e.g.
/// `Faith, positive, MC>IC>DC>NC, significant`. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_rankings(text: &str) -> Result<Vec<ScaleRanking>, StatsError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| StatsError::Parse {
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [name, polarity, ordering, significance] = fields[..] else {
            return Err(err(format!(
                "expected 4 comma-separated fields, got {}",
                fields.len()
            )));
        };
        let polarity = match polarity.to_ascii_lowercase().as_str() {
            "positive" | "+" => Polarity::Positive,
            "negative" | "-" => Polarity::Negative,
            other => return Err(err(format!("unknown polarity {other:?}"))),
        };
        let significance = match significance.to_ascii_lowercase().as_str() {
            "significant" | "*" => Significance::Significant,
            "marginal" | "**" => Significance::Marginal,
            "not_significant" | "ns" | "none" => Significance::NotSignificant,
            other => return Err(err(format!("unknown significance {other:?}"))),
        };
        let modes = ordering
            .split('>')
            .map(|m| m.trim().parse::<CommMode>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(e.to_string()))?;
        let r = ScaleRanking::new(name, polarity, &modes, significance)
            .map_err(|e| err(e.to_string()))?;
        out.push(r);
    }
    Ok(out)
}

/// Per-scale relationships from the user study, one line per scale that
/// showed a (marginally) significant difference.
pub const STUDY_RANKINGS: &str = include_str!("../../data/study_rankings.txt");

pub fn study_rankings() -> Vec<ScaleRanking> {
    parse_rankings(STUDY_RANKINGS).expect("bundled rankings parse")
}
