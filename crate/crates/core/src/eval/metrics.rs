//! Exact classification and agreement metrics.
//!
//! All values are rationals so that results can be compared without
//! tolerance; `to_f64` is for display.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("article ids differ between gold and prediction: {0}")]
    IdMismatch(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("input is empty")]
    Empty,
    #[error("non-binary value {0}")]
    NonBinary(i64),
}

/// Serializes a rational as `{"value": <float>, "exact": "n/d"}`.
pub fn serialize_rational<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
    let mut st = s.serialize_struct("Rational", 2)?;
    st.serialize_field("value", &to_f64(*r))?;
    st.serialize_field("exact", &format!("{}/{}", r.numer(), r.denom()))?;
    st.end()
}

fn serialize_opt_rational<S: Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
    match r {
        Some(r) => serialize_rational(r, s),
        None => s.serialize_none(),
    }
}

pub fn to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn ratio(n: usize, d: usize) -> Rational {
    if d == 0 {
        Rational::from_integer(0)
    } else {
        Rational::new(n as i64, d as i64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl LabelCounts {
    pub fn precision(&self) -> Rational {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Rational {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// 2PR/(P+R), written as 2TP/(2TP+FP+FN); zero when undefined.
    pub fn f1(&self) -> Rational {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    #[serde(serialize_with = "serialize_rational")]
    pub precision: Rational,
    #[serde(serialize_with = "serialize_rational")]
    pub recall: Rational,
    #[serde(serialize_with = "serialize_rational")]
    pub f1: Rational,
    #[serde(serialize_with = "serialize_opt_rational", skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<Rational>,
    pub totals: LabelCounts,
    pub per_label: BTreeMap<String, LabelCounts>,
    pub n: usize,
}

/// Per-article label set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleLabelSet {
    pub article_id: String,
    pub labels: BTreeSet<String>,
}

impl ArticleLabelSet {
    pub fn new<I, S>(article_id: impl Into<String>, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            article_id: article_id.into(),
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }
}

fn index(sets: &[ArticleLabelSet]) -> Result<BTreeMap<&str, &BTreeSet<String>>, MetricError> {
    let mut map = BTreeMap::new();
    for s in sets {
        if map.insert(s.article_id.as_str(), &s.labels).is_some() {
            return Err(MetricError::IdMismatch(format!("duplicate article `{}`", s.article_id)));
        }
    }
    Ok(map)
}

/// Micro-averaged precision, recall and F1 over all (article, label) pairs.
pub fn micro_f1(gold: &[ArticleLabelSet], pred: &[ArticleLabelSet]) -> Result<MetricReport, MetricError> {
    let gold = index(gold)?;
    let pred = index(pred)?;
    if let Some(id) = gold
        .keys()
        .find(|k| !pred.contains_key(*k))
        .or_else(|| pred.keys().find(|k| !gold.contains_key(*k)))
    {
        return Err(MetricError::IdMismatch(format!("article `{id}` missing on one side")));
    }
    let mut per_label: BTreeMap<String, LabelCounts> = BTreeMap::new();
    let mut totals = LabelCounts::default();
    for (id, g) in &gold {
        let p = pred[id];
        for label in g.union(p) {
            let c = per_label.entry(label.clone()).or_default();
            match (g.contains(label), p.contains(label)) {
                (true, true) => {
                    c.tp += 1;
                    totals.tp += 1;
                }
                (false, true) => {
                    c.fp += 1;
                    totals.fp += 1;
                }
                (true, false) => {
                    c.fn_ += 1;
                    totals.fn_ += 1;
                }
                (false, false) => unreachable!("label comes from the union"),
            }
        }
    }
    Ok(MetricReport {
        precision: totals.precision(),
        recall: totals.recall(),
        f1: totals.f1(),
        macro_f1: None,
        totals,
        per_label,
        n: gold.len(),
    })
}

/// Binary classification: F1 for the positive and the negative class and
/// their unweighted mean. `precision`/`recall`/`f1` refer to the positive class.
pub fn macro_f1_binary(gold: &[bool], pred: &[bool]) -> Result<MetricReport, MetricError> {
    if gold.len() != pred.len() {
        return Err(MetricError::LengthMismatch(gold.len(), pred.len()));
    }
    let mut pos = LabelCounts::default();
    let mut neg = LabelCounts::default();
    for (&g, &p) in gold.iter().zip(pred) {
        match (g, p) {
            (true, true) => pos.tp += 1,
            (false, false) => neg.tp += 1,
            (false, true) => {
                pos.fp += 1;
                neg.fn_ += 1;
            }
            (true, false) => {
                pos.fn_ += 1;
                neg.fp += 1;
            }
        }
    }
    let macro_f1 = (pos.f1() + neg.f1()) / 2;
    Ok(MetricReport {
        precision: pos.precision(),
        recall: pos.recall(),
        f1: pos.f1(),
        macro_f1: Some(macro_f1),
        totals: pos,
        per_label: BTreeMap::from([("negative".to_string(), neg), ("positive".to_string(), pos)]),
        n: gold.len(),
    })
}

/// Converts 0/1 integers into flags.
pub fn to_flags(values: &[i64]) -> Result<Vec<bool>, MetricError> {
    values
        .iter()
        .map(|&v| match v {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(MetricError::NonBinary(other)),
        })
        .collect()
}

pub fn observed_agreement(a: &[bool], b: &[bool]) -> Result<Rational, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(ratio(agree, a.len()))
}

/// PABAK for binary labels given observed agreement: `2·p_o − 1`.
pub fn pabak_from_agreement(p_o: Rational) -> Rational {
    p_o * 2 - 1
}

pub fn pabak(a: &[bool], b: &[bool]) -> Result<Rational, MetricError> {
    observed_agreement(a, b).map(pabak_from_agreement)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairAgreement {
    pub a: String,
    pub b: String,
    #[serde(serialize_with = "serialize_rational")]
    pub observed: Rational,
    #[serde(serialize_with = "serialize_rational")]
    pub pabak: Rational,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    /// Model against each rater.
    pub model_pairs: Vec<PairAgreement>,
    /// Every rater pair.
    pub rater_pairs: Vec<PairAgreement>,
    /// Headline: mean of the model-vs-rater PABAKs.
    #[serde(serialize_with = "serialize_rational")]
    pub aggregate_pabak: Rational,
    #[serde(serialize_with = "serialize_opt_rational")]
    pub mean_rater_pabak: Option<Rational>,
    /// Model against the raters' majority vote; ties count as negative.
    #[serde(serialize_with = "serialize_rational")]
    pub majority_vote_pabak: Rational,
}

fn pair(a: &str, b: &str, x: &[bool], y: &[bool]) -> Result<PairAgreement, MetricError> {
    let observed = observed_agreement(x, y)?;
    Ok(PairAgreement {
        a: a.to_string(),
        b: b.to_string(),
        observed,
        pabak: pabak_from_agreement(observed),
    })
}

fn mean(values: impl Iterator<Item = Rational>) -> Option<Rational> {
    let (sum, n) = values.fold((Rational::from_integer(0), 0i64), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n)
}

pub fn aggregate_pabak(model: &[bool], raters: &[Vec<bool>]) -> Result<AgreementReport, MetricError> {
    if raters.is_empty() {
        return Err(MetricError::Empty);
    }
    let model_pairs = raters
        .iter()
        .enumerate()
        .map(|(i, r)| pair("model", &format!("rater-{}", i + 1), model, r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rater_pairs = Vec::new();
    for i in 0..raters.len() {
        for j in i + 1..raters.len() {
            rater_pairs.push(pair(
                &format!("rater-{}", i + 1),
                &format!("rater-{}", j + 1),
                &raters[i],
                &raters[j],
            )?);
        }
    }
    let majority: Vec<bool> = (0..model.len())
        .map(|k| 2 * raters.iter().filter(|r| r[k]).count() > raters.len())
        .collect();
    Ok(AgreementReport {
        aggregate_pabak: mean(model_pairs.iter().map(|p| p.pabak)).expect("non-empty"),
        mean_rater_pabak: mean(rater_pairs.iter().map(|p| p.pabak)),
        majority_vote_pabak: pabak(model, &majority)?,
        model_pairs,
        rater_pairs,
    })
}
