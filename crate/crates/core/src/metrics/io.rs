//! JSON-lines inputs for offline scoring and the reports built from them.
//!
//! * POPE items: `{"id", "image", "object", "ground_truth": "yes"|"no", "stratum"}`
//! * POPE answers: `{"id", "answer"}` (free text, parsed with [`parse_binary_answer`])
//! * captions: `{"image", "caption"}`
//! * annotations: `{"image", "objects": [..]}`
//! * synonyms: `{"canonical", "surface_forms": [..]}`

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};

use super::chair::{chair_score_detailed, CaptionObjects, ChairAnnotation, ChairScore, SynonymEntry, SynonymMap};
use super::pope::{parse_binary_answer, pope_score_stratified, Answer, PopeItem, PopeScore, Stratum};
use super::MetricsError;

/// Parses one JSON value per non-blank line, reporting 1-based line numbers.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<T>, MetricsError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| MetricsError::Record {
                path: origin.to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, MetricsError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_jsonl(&text, &path.display().to_string())
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> std::io::Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(std::io::Error::other)?);
        out.push('\n');
    }
    std::fs::write(path, out)
}

fn id_string<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        Text(String),
        Number(u64),
    }
    Ok(match Id::deserialize(d)? {
        Id::Text(s) => s,
        Id::Number(n) => n.to_string(),
    })
}

fn yes_no<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Truth {
        Flag(bool),
        Text(String),
    }
    match Truth::deserialize(d)? {
        Truth::Flag(b) => Ok(b),
        Truth::Text(s) => match s.to_lowercase().as_str() {
            "yes" => Ok(true),
            "no" => Ok(false),
            other => Err(serde::de::Error::custom(format!("ground_truth must be yes|no, got `{other}`"))),
        },
    }
}

fn ser_yes_no<S: serde::Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(if *v { "yes" } else { "no" })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopeItemRecord {
    #[serde(deserialize_with = "id_string")]
    pub id: String,
    pub image: String,
    pub object: String,
    #[serde(deserialize_with = "yes_no", serialize_with = "ser_yes_no")]
    pub ground_truth: bool,
    #[serde(default)]
    pub stratum: Stratum,
}

impl From<PopeItemRecord> for PopeItem {
    fn from(r: PopeItemRecord) -> Self {
        Self {
            id: r.id,
            image: r.image,
            object: r.object,
            ground_truth: r.ground_truth,
            stratum: r.stratum,
        }
    }
}

impl From<&PopeItem> for PopeItemRecord {
    fn from(r: &PopeItem) -> Self {
        Self {
            id: r.id.clone(),
            image: r.image.clone(),
            object: r.object.clone(),
            ground_truth: r.ground_truth,
            stratum: r.stratum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    #[serde(deserialize_with = "id_string")]
    pub id: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image: String,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopeReport {
    pub items: usize,
    pub overall: PopeScore,
    pub strata: BTreeMap<Stratum, PopeScore>,
}

/// Joins answers to items by id; every item needs exactly one answer.
pub fn score_pope(items: &[PopeItem], answers: &[AnswerRecord]) -> Result<PopeReport, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut by_id: HashMap<&str, Answer> = HashMap::new();
    for a in answers {
        if by_id.insert(&a.id, parse_binary_answer(&a.answer)).is_some() {
            return Err(MetricsError::Malformed(format!("duplicate answer for item `{}`", a.id)));
        }
    }
    let mut joined = Vec::with_capacity(items.len());
    for item in items {
        let answer = by_id
            .get(item.id.as_str())
            .copied()
            .ok_or_else(|| MetricsError::Malformed(format!("no answer for item `{}`", item.id)))?;
        joined.push((item, answer));
    }
    let scored = pope_score_stratified(joined)?;
    Ok(PopeReport {
        items: items.len(),
        overall: scored.overall,
        strata: scored.strata,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChairReport {
    pub score: ChairScore,
    pub captions: Vec<CaptionObjects>,
}

pub fn score_chair(
    captions: &[CaptionRecord],
    annotations: &[ChairAnnotation],
    synonyms: &SynonymMap,
) -> Result<ChairReport, MetricsError> {
    if captions.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let by_image: HashMap<&str, &ChairAnnotation> = annotations.iter().map(|a| (a.image.as_str(), a)).collect();
    let mut pairs = Vec::with_capacity(captions.len());
    for c in captions {
        let ann = by_image
            .get(c.image.as_str())
            .ok_or_else(|| MetricsError::Malformed(format!("no annotation for image `{}`", c.image)))?;
        pairs.push((c.caption.as_str(), *ann));
    }
    let (score, captions) = chair_score_detailed(pairs, synonyms)?;
    Ok(ChairReport { score, captions })
}

pub fn load_synonyms(path: impl AsRef<Path>) -> Result<SynonymMap, MetricsError> {
    SynonymMap::new(read_jsonl::<SynonymEntry>(path)?)
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

impl PopeReport {
    /// Aligned text table with the confusion counts behind every number.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>6} {:>9} {:>9} {:>7} {:>9} {:>5} {:>5} {:>5} {:>5} {:>6}\n",
            "setting", "n", "accuracy", "precision", "recall", "f1", "tp", "fp", "fn", "tn", "unparsed"
        );
        let rows = self
            .strata
            .iter()
            .map(|(k, v)| (k.as_str().to_string(), v))
            .chain(std::iter::once(("overall".to_string(), &self.overall)));
        for (name, s) in rows {
            let c = &s.counts;
            out.push_str(&format!(
                "{:<12} {:>6} {:>9} {:>9} {:>7} {:>9} {:>5} {:>5} {:>5} {:>5} {:>6}\n",
                name,
                c.total(),
                pct(s.accuracy),
                pct(s.precision),
                pct(s.recall),
                pct(s.f1),
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                c.unparseable()
            ));
        }
        out
    }
}

impl ChairReport {
    pub fn to_table(&self) -> String {
        let s = &self.score;
        let c = &s.counts;
        format!(
            "CHAIR_S {:>7}  ({} / {} captions)\nCHAIR_I {:>7}  ({} / {} mentions)\nrecall  {:>7}  ({} / {} ground-truth objects)\nF1      {:>7}\n",
            pct(s.chair_s),
            c.hallucinated_captions,
            c.captions,
            pct(s.chair_i),
            c.hallucinated_mentions,
            c.mentions,
            pct(s.object_recall),
            c.covered_ground_truth,
            c.ground_truth_objects,
            pct(s.object_f1),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_lines_report_line_numbers() {
        let text = "{\"id\":1,\"image\":\"a\",\"object\":\"dog\",\"ground_truth\":\"yes\"}\n\n{\"id\":2}\n";
        match parse_jsonl::<PopeItemRecord>(text, "items.jsonl") {
            Err(MetricsError::Record { line, path, .. }) => assert_eq!((line, path.as_str()), (3, "items.jsonl")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn item_record_forms() {
        let items: Vec<PopeItemRecord> = parse_jsonl(
            "{\"id\":\"x\",\"image\":\"a\",\"object\":\"dog\",\"ground_truth\":\"No\",\"stratum\":\"popular\"}\n{\"id\":7,\"image\":\"a\",\"object\":\"dog\",\"ground_truth\":true}",
            "t",
        )
        .unwrap();
        assert_eq!(items[0].stratum, Stratum::Popular);
        assert!(!items[0].ground_truth);
        assert_eq!(items[1].id, "7");
        assert_eq!(items[1].stratum, Stratum::Random);
        assert!(parse_jsonl::<PopeItemRecord>("{\"id\":1,\"image\":\"a\",\"object\":\"d\",\"ground_truth\":\"maybe\"}", "t").is_err());
    }

    #[test]
    fn pope_join_requires_answers() {
        let item = PopeItem {
            id: "1".into(),
            image: "a".into(),
            object: "dog".into(),
            ground_truth: true,
            stratum: Stratum::Random,
        };
        assert!(score_pope(std::slice::from_ref(&item), &[]).is_err());
        let ans = AnswerRecord {
            id: "1".into(),
            answer: "Yes.".into(),
        };
        let r = score_pope(&[item], &[ans.clone(), ans]);
        assert!(r.is_err());
        assert!(matches!(score_pope(&[], &[]), Err(MetricsError::EmptyInput)));
    }
}
