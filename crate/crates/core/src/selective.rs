//! Selection functions, threshold calibration and risk-coverage evaluation.
//!
//! Every selector is oriented so that a higher score means more confident,
//! and an example is covered when its score is `>= h`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::OOD_LABEL;
use crate::error::{Error, Result};
use crate::gambling::entropy;
use crate::nn::predict_classes;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// `1 − p̂_{m+1}`: the trained reservation output.
    Gambler,
    /// Negative entropy of the renormalized class probabilities.
    Entropy,
    /// Largest class probability.
    SoftmaxResponse,
}

impl Selector {
    pub const ALL: [Selector; 3] = [Selector::Gambler, Selector::Entropy, Selector::SoftmaxResponse];

    pub fn name(self) -> &'static str {
        match self {
            Selector::Gambler => "gambler",
            Selector::Entropy => "entropy",
            Selector::SoftmaxResponse => "softmax_response",
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Selector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gambler" => Ok(Selector::Gambler),
            "entropy" => Ok(Selector::Entropy),
            "softmax_response" | "sr" => Ok(Selector::SoftmaxResponse),
            other => Err(Error::UnknownSelector(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorScores {
    pub selector: Selector,
    pub confidence: Vec<f64>,
}

impl SelectorScores {
    pub fn len(&self) -> usize {
        self.confidence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.confidence.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> SelectorScores {
        SelectorScores {
            selector: self.selector,
            confidence: indices.iter().map(|&i| self.confidence[i]).collect(),
        }
    }
}

/// Scores each row of an `n × (m+1)` probability matrix.
pub fn confidence(probabilities: &Tensor, selector: Selector) -> Result<SelectorScores> {
    if probabilities.rank() != 2 || probabilities.cols() < 2 {
        return Err(Error::invalid(format!(
            "expected n × (m+1) probabilities, got {:?}",
            probabilities.shape()
        )));
    }
    let width = probabilities.cols();
    let m = width - 1;
    let confidence = probabilities
        .data()
        .chunks_exact(width)
        .map(|row| match selector {
            Selector::Gambler => 1.0 - row[m],
            Selector::SoftmaxResponse => row[..m].iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Selector::Entropy => {
                let mass: f64 = row[..m].iter().sum();
                if mass > 0.0 {
                    let renorm: Vec<f64> = row[..m].iter().map(|p| p / mass).collect();
                    -entropy(&renorm)
                } else {
                    -(m as f64).ln()
                }
            }
        })
        .collect();
    Ok(SelectorScores { selector, confidence })
}

fn covered_target(coverage: f64, n: usize) -> usize {
    // guard against 0.8 * 10 = 8.000000000000002 rounding up to 9
    ((coverage * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// The `⌈coverage·n⌉`-th largest confidence. Ties at the threshold are all
/// covered, so the realized coverage can exceed the target.
pub fn calibrate_threshold(scores: &[f64], coverage: f64) -> Result<f64> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::invalid(format!("coverage {coverage} outside (0, 1]")));
    }
    if scores.is_empty() {
        return Err(Error::invalid("cannot calibrate on an empty score set"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[covered_target(coverage, scores.len()) - 1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectiveResult {
    pub coverage: f64,
    pub threshold: f64,
    /// Error rate over the covered set; `None` when nothing is covered.
    pub risk: Option<f64>,
    pub covered: usize,
    pub total: usize,
}

/// Error rate among examples scoring `>= h`.
///
/// Out-of-distribution examples (label [`OOD_LABEL`]) are left out of both
/// the coverage and the risk.
pub fn selective_risk(
    predictions: &[usize],
    labels: &[usize],
    scores: &SelectorScores,
    threshold: f64,
) -> Result<SelectiveResult> {
    if predictions.len() != labels.len() || labels.len() != scores.len() {
        return Err(Error::invalid(format!(
            "misaligned inputs: {} predictions, {} labels, {} scores",
            predictions.len(),
            labels.len(),
            scores.len()
        )));
    }
    let (mut total, mut covered, mut wrong) = (0usize, 0usize, 0usize);
    for ((&p, &y), &c) in predictions.iter().zip(labels).zip(&scores.confidence) {
        if y == OOD_LABEL {
            continue;
        }
        total += 1;
        if c >= threshold {
            covered += 1;
            if p != y {
                wrong += 1;
            }
        }
    }
    Ok(SelectiveResult {
        coverage: if total == 0 { 0.0 } else { covered as f64 / total as f64 },
        threshold,
        risk: (covered > 0).then(|| wrong as f64 / covered as f64),
        covered,
        total,
    })
}

/// Predictions, labels and selector scores for one split.
#[derive(Clone, Debug)]
pub struct EvalSplit {
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
    pub scores: SelectorScores,
}

impl EvalSplit {
    /// Argmax predictions and `selector` scores from `n × (m+1)` probabilities.
    pub fn from_probabilities(probabilities: &Tensor, labels: Vec<usize>, selector: Selector) -> Result<Self> {
        if labels.len() != probabilities.rows() {
            return Err(Error::DimensionMismatch {
                expected: probabilities.rows(),
                got: labels.len(),
            });
        }
        Ok(EvalSplit {
            predictions: predict_classes(probabilities),
            labels,
            scores: confidence(probabilities, selector)?,
        })
    }

    pub fn subset(&self, indices: &[usize]) -> EvalSplit {
        EvalSplit {
            predictions: indices.iter().map(|&i| self.predictions[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            scores: self.scores.subset(indices),
        }
    }

    fn in_distribution_scores(&self) -> Vec<f64> {
        self.labels
            .iter()
            .zip(&self.scores.confidence)
            .filter(|(&y, _)| y != OOD_LABEL)
            .map(|(_, &c)| c)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCoveragePoint {
    pub target_coverage: f64,
    pub result: SelectiveResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCoverageCurve {
    pub selector: Selector,
    /// Strictly decreasing target coverage.
    pub points: Vec<RiskCoveragePoint>,
}

impl RiskCoverageCurve {
    pub fn at(&self, target: f64) -> Option<&RiskCoveragePoint> {
        self.points.iter().find(|p| (p.target_coverage - target).abs() < 1e-12)
    }
}

/// Calibrates `h` on `calibration` for every target coverage and measures
/// selective risk on `evaluation`. The two splits must be disjoint.
///
/// Target coverage 1.0 uses `h = −∞`, so that row is the plain error rate
/// of the classifier on `evaluation`.
pub fn risk_coverage_curve(
    calibration: &EvalSplit,
    evaluation: &EvalSplit,
    coverages: &[f64],
) -> Result<RiskCoverageCurve> {
    if calibration.scores.selector != evaluation.scores.selector {
        return Err(Error::invalid("calibration and evaluation use different selectors"));
    }
    let mut targets = coverages.to_vec();
    targets.sort_by(|a, b| b.total_cmp(a));
    targets.dedup();
    let cal_scores = calibration.in_distribution_scores();
    let points = targets
        .into_iter()
        .map(|target| {
            let h = if target == 1.0 {
                f64::NEG_INFINITY
            } else {
                calibrate_threshold(&cal_scores, target)?
            };
            let result = selective_risk(&evaluation.predictions, &evaluation.labels, &evaluation.scores, h)?;
            Ok(RiskCoveragePoint {
                target_coverage: target,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RiskCoverageCurve {
        selector: calibration.scores.selector,
        points,
    })
}

/// Smallest threshold that rejects every out-of-distribution example, and
/// the in-distribution coverage it keeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodRejection {
    pub threshold: f64,
    pub in_distribution_coverage: f64,
}

/// `None` when the split has no out-of-distribution or no in-distribution
/// examples.
pub fn ood_rejection(split: &EvalSplit) -> Option<OodRejection> {
    let mut ood_max = f64::NEG_INFINITY;
    let mut id = Vec::new();
    for (&y, &c) in split.labels.iter().zip(&split.scores.confidence) {
        if y == OOD_LABEL {
            ood_max = ood_max.max(c);
        } else {
            id.push(c);
        }
    }
    if ood_max == f64::NEG_INFINITY || id.is_empty() {
        return None;
    }
    let kept: Vec<f64> = id.iter().copied().filter(|&c| c > ood_max).collect();
    let threshold = kept.iter().copied().reduce(f64::min).unwrap_or(ood_max.next_up());
    Some(OodRejection {
        threshold,
        in_distribution_coverage: kept.len() as f64 / id.len() as f64,
    })
}

/// Indices of the `k` least confident examples, ascending by confidence,
/// ties broken by lower index.
pub fn top_k_uncertain(scores: &SelectorScores, k: usize) -> Result<Vec<usize>> {
    let n = scores.len();
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds {n} examples")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores.confidence[a].total_cmp(&scores.confidence[b]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

pub const CURVE_CSV_HEADER: &str =
    "selector,target_coverage,realized_coverage,threshold,selective_risk,covered_n,total_n";

/// Written in place of a risk when nothing is covered.
pub const UNDEFINED_RISK: &str = "NA";

/// Formats with 6 significant digits in the style of C's `%g`.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub fn curve_csv_rows(curve: &RiskCoverageCurve) -> Vec<String> {
    curve
        .points
        .iter()
        .map(|p| {
            let r = &p.result;
            format!(
                "{},{},{},{},{},{},{}",
                curve.selector,
                format_sig6(p.target_coverage),
                format_sig6(r.coverage),
                format_sig6(r.threshold),
                r.risk.map_or_else(|| UNDEFINED_RISK.to_string(), format_sig6),
                r.covered,
                r.total
            )
        })
        .collect()
}

/// Header plus one row per `(selector, coverage)`.
pub fn curves_to_csv(curves: &[RiskCoverageCurve]) -> String {
    let mut out = String::from(CURVE_CSV_HEADER);
    out.push('\n');
    for c in curves {
        for row in curve_csv_rows(c) {
            out.push_str(&row);
            out.push('\n');
        }
    }
    out
}

/// One parsed row of the risk-coverage CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveCsvRow {
    pub selector: Selector,
    pub target_coverage: f64,
    pub realized_coverage: f64,
    pub threshold: f64,
    pub selective_risk: Option<f64>,
    pub covered_n: usize,
    pub total_n: usize,
}

pub fn parse_curves_csv(text: &str) -> Result<Vec<CurveCsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_CSV_HEADER) {
        return Err(Error::invalid("risk-coverage CSV header mismatch"));
    }
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| Error::invalid(format!("bad number `{s}`: {e}")))
    };
    let count = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| Error::invalid(format!("bad count `{s}`: {e}")))
    };
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(Error::invalid(format!("expected 7 fields: `{line}`")));
            }
            Ok(CurveCsvRow {
                selector: f[0].parse()?,
                target_coverage: num(f[1])?,
                realized_coverage: num(f[2])?,
                threshold: num(f[3])?,
                selective_risk: if f[4] == UNDEFINED_RISK { None } else { Some(num(f[4])?) },
                covered_n: count(f[5])?,
                total_n: count(f[6])?,
            })
        })
        .collect()
}
