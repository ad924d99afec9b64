//! Binary object-existence probing: answer parsing and confusion-matrix scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
    Unparseable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    #[default]
    Random,
    Popular,
    Adversarial,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [Stratum::Random, Stratum::Popular, Stratum::Adversarial];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Popular => "popular",
            Self::Adversarial => "adversarial",
        }
    }
}

/// One probe question with its ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopeItem {
    pub id: String,
    pub image: String,
    pub object: String,
    /// `true` when the object is present.
    pub ground_truth: bool,
    pub stratum: Stratum,
}

/// `yes`/`no` from the first alphabetic word, else from whichever of the two
/// words occurs alone anywhere in the text.
pub fn parse_binary_answer(text: &str) -> Answer {
    let lower = text.to_lowercase();
    let words: Vec<&str> = lower
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .collect();
    match words.first() {
        Some(&"yes") => return Answer::Yes,
        Some(&"no") => return Answer::No,
        _ => {}
    }
    let has_yes = words.contains(&"yes");
    let has_no = words.contains(&"no");
    match (has_yes, has_no) {
        (true, false) => Answer::Yes,
        (false, true) => Answer::No,
        _ => Answer::Unparseable,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// Unparseable answers on present objects, already counted in `fn_`.
    pub unparseable_present: usize,
    /// Unparseable answers on absent objects, already counted in `fp`.
    pub unparseable_absent: usize,
}

impl Confusion {
    pub fn add(&mut self, ground_truth: bool, answer: Answer) {
        match (ground_truth, answer) {
            (true, Answer::Yes) => self.tp += 1,
            (true, Answer::No) => self.fn_ += 1,
            (false, Answer::Yes) => self.fp += 1,
            (false, Answer::No) => self.tn += 1,
            (true, Answer::Unparseable) => {
                self.fn_ += 1;
                self.unparseable_present += 1;
            }
            (false, Answer::Unparseable) => {
                self.fp += 1;
                self.unparseable_absent += 1;
            }
        }
    }

    pub fn unparseable(&self) -> usize {
        self.unparseable_present + self.unparseable_absent
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Set when a metric's denominator was zero and it was reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UndefinedFlags {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopeScore {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub unparseable_rate: f64,
    /// Fraction of absent-object items answered yes.
    pub yes_rate_absent: f64,
    pub counts: Confusion,
    pub undefined: UndefinedFlags,
}

impl PopeScore {
    pub fn from_confusion(c: Confusion) -> Result<Self, MetricsError> {
        let total = c.total();
        if total == 0 {
            return Err(MetricsError::EmptyInput);
        }
        let ratio = |num: usize, den: usize| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
        let (precision, p_undef) = ratio(c.tp, c.tp + c.fp);
        let (recall, r_undef) = ratio(c.tp, c.tp + c.fn_);
        let (f1, f_undef) = if precision + recall == 0.0 {
            (0.0, true)
        } else {
            (2.0 * precision * recall / (precision + recall), false)
        };
        Ok(Self {
            accuracy: (c.tp + c.tn) as f64 / total as f64,
            precision,
            recall,
            f1,
            unparseable_rate: c.unparseable() as f64 / total as f64,
            yes_rate_absent: ratio(c.fp - c.unparseable_absent, c.fp + c.tn).0,
            counts: c,
            undefined: UndefinedFlags {
                precision: p_undef,
                recall: r_undef,
                f1: f_undef,
            },
        })
    }
}

/// Scores `(ground truth, answer)` pairs; `yes` is the positive class.
pub fn pope_score<I>(items: I) -> Result<PopeScore, MetricsError>
where
    I: IntoIterator<Item = (bool, Answer)>,
{
    let mut c = Confusion::default();
    for (gt, a) in items {
        c.add(gt, a);
    }
    PopeScore::from_confusion(c)
}

/// Overall score plus one per sampling stratum present in the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedPope {
    pub overall: PopeScore,
    pub strata: BTreeMap<Stratum, PopeScore>,
}

pub fn pope_score_stratified<'a, I>(items: I) -> Result<StratifiedPope, MetricsError>
where
    I: IntoIterator<Item = (&'a PopeItem, Answer)>,
{
    let mut overall = Confusion::default();
    let mut strata: BTreeMap<Stratum, Confusion> = BTreeMap::new();
    for (item, answer) in items {
        overall.add(item.ground_truth, answer);
        strata.entry(item.stratum).or_default().add(item.ground_truth, answer);
    }
    Ok(StratifiedPope {
        overall: PopeScore::from_confusion(overall)?,
        strata: strata
            .into_iter()
            .map(|(k, c)| Ok((k, PopeScore::from_confusion(c)?)))
            .collect::<Result<_, MetricsError>>()?,
    })
}
