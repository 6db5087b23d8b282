//! Per-feature group comparison: one-way ANOVA, Welch t-tests, the
//! lowest-mean rule and the majority vote over features.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureRow, FEATURE_NAMES};
use crate::io::ClassLabel;
use crate::parallel::map_ordered;

const CF_TOL: f64 = 1e-12;
const CF_MAX_ITER: usize = 300;
pub const ALPHA: f64 = 0.05;

/// Lanczos approximation (g = 7, 9 terms), reflection below 0.5.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_TOL {
            return Ok(h);
        }
    }
    Err(Error::NoConvergence(format!("incomplete beta a={a} b={b} x={x}")))
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidArgument(format!("incomplete beta needs a, b > 0, got {a}, {b}")));
    }
    if x.is_nan() {
        return Err(Error::NonFinite("incomplete beta argument"));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x >= 1.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The fraction converges fast on this side of the mean; use symmetry otherwise.
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok((front * beta_cf(a, b, x)? / a).clamp(0.0, 1.0))
    } else {
        Ok((1.0 - front * beta_cf(b, a, 1.0 - x)? / b).clamp(0.0, 1.0))
    }
}

fn check_df(v: f64, name: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

/// Student-t CDF.
pub fn t_cdf(x: f64, df: f64) -> Result<f64> {
    check_df(df, "df")?;
    if x.is_nan() {
        return Err(Error::NonFinite("t statistic"));
    }
    let tail = 0.5 * inc_beta(df / 2.0, 0.5, df / (df + x * x))?;
    Ok(if x >= 0.0 { 1.0 - tail } else { tail })
}

/// Two-sided `P(|T| >= |t|)`, computed without cancellation.
pub fn t_two_sided(t: f64, df: f64) -> Result<f64> {
    check_df(df, "df")?;
    if t.is_infinite() {
        return Ok(0.0);
    }
    inc_beta(df / 2.0, 0.5, df / (df + t * t))
}

/// Fisher F CDF.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    check_df(d1, "d1")?;
    check_df(d2, "d2")?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    inc_beta(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))
}

/// Upper tail `P(F >= x)`.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    check_df(d1, "d1")?;
    check_df(d2, "d2")?;
    if x <= 0.0 {
        return Ok(1.0);
    }
    inc_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x))
}

/// `(n, mean, sample variance)`.
pub fn describe(x: &[f64]) -> (usize, f64, f64) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    (n, mean, var)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub f: f64,
    pub df_between: f64,
    pub df_within: f64,
    pub p: f64,
}

pub fn anova_oneway(groups: &[&[f64]]) -> Result<Anova> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(format!("ANOVA needs at least 2 groups, got {}", groups.len())));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::TooShort { needed: 2, got: g.len() });
    }
    let k = groups.len() as f64;
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let (mut ssb, mut ssw) = (0.0, 0.0);
    for g in groups {
        let (m, mean, var) = describe(g);
        ssb += m as f64 * (mean - grand).powi(2);
        ssw += var * (m - 1) as f64;
    }
    if !(ssw > 0.0) {
        return Err(Error::Degenerate("ANOVA with zero within-group variance".into()));
    }
    let (d1, d2) = (k - 1.0, n as f64 - k);
    let f = (ssb / d1) / (ssw / d2);
    Ok(Anova {
        f,
        df_between: d1,
        df_within: d2,
        p: f_sf(f, d1, d2)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Welch {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

pub fn welch_t(a: &[f64], b: &[f64]) -> Result<Welch> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(Error::TooShort { needed: 2, got: s.len() });
        }
    }
    let (na, ma, va) = describe(a);
    let (nb, mb, vb) = describe(b);
    let (qa, qb) = (va / na as f64, vb / nb as f64);
    let se2 = qa + qb;
    if se2 == 0.0 {
        if ma == mb {
            return Err(Error::Degenerate("t statistic undefined: both samples constant and equal".into()));
        }
        let t = if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY };
        return Ok(Welch {
            t,
            df: (na + nb - 2) as f64,
            p: 0.0,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (na - 1) as f64 + qb * qb / (nb - 1) as f64);
    Ok(Welch {
        t,
        df,
        p: t_two_sided(t, df)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pick {
    pub label: ClassLabel,
    /// More than one class shared the extreme value.
    pub tie: bool,
}

/// Preference among tied classes: the baseline condition first.
const TIE_ORDER: [ClassLabel; 3] = [ClassLabel::NormalSilence, ClassLabel::SpiritualMeditation, ClassLabel::Music];

fn pick_from(tied: &[ClassLabel]) -> Pick {
    let label = TIE_ORDER.into_iter().find(|l| tied.contains(l)).unwrap_or(tied[0]);
    Pick {
        label,
        tie: tied.len() > 1,
    }
}

/// Class with the lowest mean.
pub fn calmest_per_feature(means: &[(ClassLabel, f64)]) -> Result<Pick> {
    if means.is_empty() || means.iter().any(|(_, m)| !m.is_finite()) {
        return Err(Error::NonFinite("class mean"));
    }
    let lo = means.iter().map(|(_, m)| *m).fold(f64::INFINITY, f64::min);
    let tied: Vec<ClassLabel> = means.iter().filter(|(_, m)| *m == lo).map(|(l, _)| *l).collect();
    Ok(pick_from(&tied))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    /// Counts in `ClassLabel::REPORT_ORDER`.
    pub tally: Vec<(ClassLabel, usize)>,
    pub winner: Pick,
}

pub fn majority_vote(labels: &[ClassLabel]) -> Result<Vote> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("majority vote over no labels".into()));
    }
    let tally: Vec<(ClassLabel, usize)> = ClassLabel::REPORT_ORDER
        .into_iter()
        .map(|l| (l, labels.iter().filter(|x| **x == l).count()))
        .collect();
    let hi = tally.iter().map(|(_, c)| *c).max().unwrap_or(0);
    let tied: Vec<ClassLabel> = tally.iter().filter(|(_, c)| *c == hi).map(|(l, _)| *l).collect();
    Ok(Vote {
        tally,
        winner: pick_from(&tied),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub label: ClassLabel,
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: ClassLabel,
    pub b: ClassLabel,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroupSummary {
    pub feature: String,
    /// In report order SM, NS, M; classes absent from the input are skipped.
    pub groups: Vec<GroupStats>,
    /// E.g. `SM < NS < M`.
    pub comparison: String,
    pub anova: Anova,
    /// SM vs M, SM vs NS, M vs NS.
    pub pairs: Vec<PairTest>,
    pub calmest: Pick,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalmnessReport {
    pub rows: Vec<FeatureGroupSummary>,
    pub vote: Vote,
}

const PAIRS: [(ClassLabel, ClassLabel); 3] = [
    (ClassLabel::SpiritualMeditation, ClassLabel::Music),
    (ClassLabel::SpiritualMeditation, ClassLabel::NormalSilence),
    (ClassLabel::Music, ClassLabel::NormalSilence),
];

fn comparison(groups: &[GroupStats]) -> String {
    let mut s = groups[0].label.code().to_string();
    for w in groups.windows(2) {
        let op = match w[0].mean.total_cmp(&w[1].mean) {
            std::cmp::Ordering::Less => "<",
            std::cmp::Ordering::Greater => ">",
            std::cmp::Ordering::Equal => "=",
        };
        s.push_str(&format!(" {op} {}", w[1].label.code()));
    }
    s
}

/// `No diff` unless ANOVA and at least one pair fall below `ALPHA`.
fn result_wording(anova: &Anova, pairs: &[PairTest]) -> String {
    let sig: Vec<String> = pairs
        .iter()
        .filter(|p| p.significant)
        .map(|p| format!("{} vs {} diff", p.a.code(), p.b.code()))
        .collect();
    if anova.p < ALPHA && !sig.is_empty() {
        sig.join("; ")
    } else {
        "No diff".into()
    }
}

/// One Table-III-style row from per-class samples of a single feature.
pub fn summarize_feature(feature: &str, samples: &[(ClassLabel, Vec<f64>)]) -> Result<FeatureGroupSummary> {
    let groups: Vec<GroupStats> = ClassLabel::REPORT_ORDER
        .into_iter()
        .filter_map(|l| samples.iter().find(|(k, _)| *k == l))
        .map(|(l, x)| {
            let (n, mean, variance) = describe(x);
            GroupStats {
                label: *l,
                n,
                mean,
                variance,
            }
        })
        .collect();
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(format!("feature {feature}: need at least 2 classes")));
    }
    let slices: Vec<&[f64]> = ClassLabel::REPORT_ORDER
        .into_iter()
        .filter_map(|l| samples.iter().find(|(k, _)| *k == l))
        .map(|(_, x)| x.as_slice())
        .collect();
    let anova = anova_oneway(&slices).map_err(|e| Error::InvalidArgument(format!("feature {feature}: {e}")))?;
    let mut pairs = Vec::new();
    for (a, b) in PAIRS {
        let (Some(xa), Some(xb)) = (
            samples.iter().find(|(k, _)| *k == a),
            samples.iter().find(|(k, _)| *k == b),
        ) else {
            continue;
        };
        let w = welch_t(&xa.1, &xb.1).map_err(|e| Error::InvalidArgument(format!("feature {feature}: {e}")))?;
        pairs.push(PairTest {
            a,
            b,
            t: w.t,
            df: w.df,
            p: w.p,
            significant: w.p < ALPHA,
        });
    }
    let means: Vec<(ClassLabel, f64)> = groups.iter().map(|g| (g.label, g.mean)).collect();
    Ok(FeatureGroupSummary {
        feature: feature.to_string(),
        comparison: comparison(&groups),
        calmest: calmest_per_feature(&means)?,
        result: result_wording(&anova, &pairs),
        groups,
        anova,
        pairs,
    })
}

/// Columns of a feature table: `values[i][f]` is feature `f` of item `i`.
pub fn calmness_report(names: &[&str], labels: &[ClassLabel], values: &[Vec<f64>], jobs: usize) -> Result<CalmnessReport> {
    if labels.len() != values.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: values.len(),
        });
    }
    if names.is_empty() {
        return Err(Error::InvalidArgument("no features to analyse".into()));
    }
    if let Some(v) = values.iter().find(|v| v.len() != names.len()) {
        return Err(Error::LengthMismatch {
            left: v.len(),
            right: names.len(),
        });
    }
    let idx: Vec<usize> = (0..names.len()).collect();
    let rows: Vec<FeatureGroupSummary> = map_ordered(&idx, jobs, |&f| {
        let samples: Vec<(ClassLabel, Vec<f64>)> = ClassLabel::REPORT_ORDER
            .into_iter()
            .filter(|l| labels.contains(l))
            .map(|l| {
                let col = labels.iter().zip(values).filter(|(k, _)| **k == l).map(|(_, v)| v[f]).collect();
                (l, col)
            })
            .collect();
        summarize_feature(names[f], &samples)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let calm: Vec<ClassLabel> = rows.iter().map(|r| r.calmest.label).collect();
    Ok(CalmnessReport {
        vote: majority_vote(&calm)?,
        rows,
    })
}

pub fn calmness_from_rows(rows: &[FeatureRow], jobs: usize) -> Result<CalmnessReport> {
    let labels: Vec<ClassLabel> = rows.iter().map(|r| r.label).collect();
    let values: Vec<Vec<f64>> = rows.iter().map(|r| r.values.to_vec()).collect();
    calmness_report(&FEATURE_NAMES, &labels, &values, jobs)
}

fn mean_of(r: &FeatureGroupSummary, l: ClassLabel) -> String {
    r.groups.iter().find(|g| g.label == l).map_or(String::new(), |g| format!("{:.4}", g.mean))
}

fn p_of(r: &FeatureGroupSummary, a: ClassLabel, b: ClassLabel) -> String {
    r.pairs.iter().find(|p| p.a == a && p.b == b).map_or(String::new(), |p| format!("{:.4}", p.p))
}

/// Table-style CSV: feature, means (SM, NS, M), comparison, calmest, ANOVA p, pairwise p's, result.
pub fn write_calmness_csv(path: &Path, report: &CalmnessReport) -> Result<()> {
    use ClassLabel::*;
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::malformed("csv", e))?;
    w.write_record([
        "feature", "mean_SM", "mean_NS", "mean_M", "comparison", "calmest", "anova_p", "p_SM_M", "p_SM_NS", "p_M_NS",
        "result",
    ])
    .map_err(|e| Error::malformed("csv", e))?;
    for r in &report.rows {
        let calm = if r.calmest.tie {
            format!("{} (tie)", r.calmest.label.code())
        } else {
            r.calmest.label.code().to_string()
        };
        w.write_record([
            r.feature.clone(),
            mean_of(r, SpiritualMeditation),
            mean_of(r, NormalSilence),
            mean_of(r, Music),
            r.comparison.clone(),
            calm,
            format!("{:.4}", r.anova.p),
            p_of(r, SpiritualMeditation, Music),
            p_of(r, SpiritualMeditation, NormalSilence),
            p_of(r, Music, NormalSilence),
            r.result.clone(),
        ])
        .map_err(|e| Error::malformed("csv", e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
