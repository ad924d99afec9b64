//! Caption hallucination: object extraction by n-gram lookup and CHAIR scores.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Canonical object name -> surface forms (one or two words each).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SynonymMap {
    canonical: BTreeMap<String, BTreeSet<String>>,
    surface: HashMap<String, String>,
}

/// One line of a synonym file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynonymEntry {
    pub canonical: String,
    #[serde(default)]
    pub surface_forms: Vec<String>,
}

fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl SynonymMap {
    /// Every canonical name is also a surface form of itself.
    pub fn new(entries: impl IntoIterator<Item = SynonymEntry>) -> Result<Self, MetricsError> {
        let mut map = Self::default();
        for entry in entries {
            let canonical = normalize(&entry.canonical);
            if canonical.is_empty() {
                return Err(MetricsError::Malformed("empty canonical name".into()));
            }
            let forms: Vec<String> = std::iter::once(canonical.clone())
                .chain(entry.surface_forms.iter().map(|s| normalize(s)))
                .collect();
            for form in forms {
                if form.is_empty() || form.split(' ').count() > 2 {
                    return Err(MetricsError::Malformed(format!("surface form `{form}` must have one or two words")));
                }
                match map.surface.get(&form) {
                    Some(owner) if owner != &canonical => {
                        return Err(MetricsError::SynonymConflict {
                            surface: form,
                            first: owner.clone(),
                            second: canonical,
                        })
                    }
                    _ => {}
                }
                map.surface.insert(form.clone(), canonical.clone());
                map.canonical.entry(canonical.clone()).or_default().insert(form);
            }
        }
        Ok(map)
    }

    /// Canonical names mapped to themselves plus a plural `s` form.
    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Self, MetricsError> {
        Self::new(names.into_iter().map(|n| SynonymEntry {
            canonical: n.to_string(),
            surface_forms: vec![format!("{n}s")],
        }))
    }

    pub fn contains(&self, canonical: &str) -> bool {
        self.canonical.contains_key(canonical)
    }

    pub fn canonical_of(&self, surface: &str) -> Option<&str> {
        self.surface.get(surface).map(String::as_str)
    }

    pub fn canonical_names(&self) -> impl Iterator<Item = &str> {
        self.canonical.keys().map(String::as_str)
    }

    pub fn entries(&self) -> Vec<SynonymEntry> {
        self.canonical
            .iter()
            .map(|(c, forms)| SynonymEntry {
                canonical: c.clone(),
                surface_forms: forms.iter().filter(|f| *f != c).cloned().collect(),
            })
            .collect()
    }
}

/// Canonical objects mentioned in `caption`. Bigrams are tried before
/// unigrams and consume both words.
pub fn extract_objects(caption: &str, synonyms: &SynonymMap) -> BTreeSet<String> {
    let cleaned: String = caption
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    let words: Vec<&str> = cleaned.split_whitespace().collect();
    let mut found = BTreeSet::new();
    let mut i = 0;
    while i < words.len() {
        if i + 1 < words.len() {
            if let Some(c) = synonyms.canonical_of(&format!("{} {}", words[i], words[i + 1])) {
                found.insert(c.to_string());
                i += 2;
                continue;
            }
        }
        if let Some(c) = synonyms.canonical_of(words[i]) {
            found.insert(c.to_string());
        }
        i += 1;
    }
    found
}

/// Ground-truth objects of one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChairAnnotation {
    pub image: String,
    pub objects: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChairCounts {
    pub captions: usize,
    pub hallucinated_captions: usize,
    /// Distinct objects per caption, summed over captions.
    pub mentions: usize,
    pub hallucinated_mentions: usize,
    pub ground_truth_objects: usize,
    pub covered_ground_truth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChairScore {
    pub chair_s: f64,
    pub chair_i: f64,
    pub object_precision: f64,
    pub object_recall: f64,
    pub object_f1: f64,
    pub counts: ChairCounts,
    /// No object was mentioned anywhere; CHAIR_I and precision reported as 0.
    pub zero_mentions: bool,
}

impl ChairScore {
    pub fn from_counts(c: ChairCounts) -> Result<Self, MetricsError> {
        if c.captions == 0 {
            return Err(MetricsError::EmptyInput);
        }
        let zero_mentions = c.mentions == 0;
        let (chair_i, precision) = if zero_mentions {
            (0.0, 0.0)
        } else {
            let ci = c.hallucinated_mentions as f64 / c.mentions as f64;
            (ci, (c.mentions - c.hallucinated_mentions) as f64 / c.mentions as f64)
        };
        let recall = if c.ground_truth_objects == 0 {
            0.0
        } else {
            c.covered_ground_truth as f64 / c.ground_truth_objects as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Ok(Self {
            chair_s: c.hallucinated_captions as f64 / c.captions as f64,
            chair_i,
            object_precision: precision,
            object_recall: recall,
            object_f1: f1,
            counts: c,
            zero_mentions,
        })
    }
}

/// Per-caption breakdown kept for auditable reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionObjects {
    pub image: String,
    pub mentioned: BTreeSet<String>,
    pub hallucinated: BTreeSet<String>,
}

pub fn caption_objects(caption: &str, annotation: &ChairAnnotation, synonyms: &SynonymMap) -> CaptionObjects {
    let mentioned = extract_objects(caption, synonyms);
    let hallucinated = mentioned.difference(&annotation.objects).cloned().collect();
    CaptionObjects {
        image: annotation.image.clone(),
        mentioned,
        hallucinated,
    }
}

pub fn chair_score<'a, I>(results: I, synonyms: &SynonymMap) -> Result<ChairScore, MetricsError>
where
    I: IntoIterator<Item = (&'a str, &'a ChairAnnotation)>,
{
    Ok(chair_score_detailed(results, synonyms)?.0)
}

pub fn chair_score_detailed<'a, I>(results: I, synonyms: &SynonymMap) -> Result<(ChairScore, Vec<CaptionObjects>), MetricsError>
where
    I: IntoIterator<Item = (&'a str, &'a ChairAnnotation)>,
{
    let mut counts = ChairCounts::default();
    let mut details = Vec::new();
    for (caption, annotation) in results {
        if let Some(unknown) = annotation.objects.iter().find(|o| !synonyms.contains(o)) {
            return Err(MetricsError::UnknownObject {
                image: annotation.image.clone(),
                object: unknown.clone(),
            });
        }
        let found = caption_objects(caption, annotation, synonyms);
        counts.captions += 1;
        counts.mentions += found.mentioned.len();
        counts.hallucinated_mentions += found.hallucinated.len();
        counts.hallucinated_captions += usize::from(!found.hallucinated.is_empty());
        counts.ground_truth_objects += annotation.objects.len();
        counts.covered_ground_truth += found.mentioned.intersection(&annotation.objects).count();
        details.push(found);
    }
    Ok((ChairScore::from_counts(counts)?, details))
}
