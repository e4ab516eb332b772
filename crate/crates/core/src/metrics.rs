//! Threshold-free detection metrics with in-distribution as the positive class.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_scores(id_scores: &[f64], ood_scores: &[f64]) -> Result<()> {
    if id_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::input("both ID and OOD score sets must be nonempty"));
    }
    if id_scores.iter().chain(ood_scores).any(|v| !v.is_finite()) {
        return Err(Error::input("scores must be finite"));
    }
    Ok(())
}

/// Probability that a random ID score exceeds a random OOD score, ties
/// counting one half. Computed from midranks of the pooled sample.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores(id_scores, ood_scores)?;
    let mut pooled: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Twice the rank sum of the ID scores, so midranks stay integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        // Ranks i+1..=j share the midrank (i + 1 + j) / 2.
        let twice_mid = (i + 1 + j) as u128;
        let ids = pooled[i..j].iter().filter(|p| p.1).count() as u128;
        twice_rank_sum += ids * twice_mid;
        i = j;
    }
    let (n, m) = (id_scores.len() as u128, ood_scores.len() as u128);
    let twice_u = twice_rank_sum - n * (n + 1);
    let twice_total = 2 * n * m;
    // Evaluate the smaller side directly so auroc(a, b) + auroc(b, a) == 1.
    if 2 * twice_u <= twice_total {
        Ok(twice_u as f64 / twice_total as f64)
    } else {
        Ok(1.0 - (twice_total - twice_u) as f64 / twice_total as f64)
    }
}

/// Area under the precision-recall curve with ID as positives: a descending
/// sweep over distinct scores, summing `precision · Δrecall`.
pub fn aupr_in(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores(id_scores, ood_scores)?;
    let mut pooled: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));

    let n_id = id_scores.len() as f64;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            if pooled[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / n_id;
        let precision = tp as f64 / (tp + fp) as f64;
        area += precision * (recall - prev_recall);
        prev_recall = recall;
        i = j;
    }
    Ok(area)
}

/// Mean per-class recall over classes that occur in `truth`.
pub fn balanced_accuracy(predicted: &[usize], truth: &[usize], classes: usize) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::input("predictions and labels differ in length"));
    }
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if t >= classes || p >= classes {
            return Err(Error::InvalidClass {
                class: t.max(p),
                classes,
            });
        }
        totals[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    let present: Vec<f64> = hits
        .iter()
        .zip(&totals)
        .filter(|(_, &n)| n > 0)
        .map(|(&h, &n)| h as f64 / n as f64)
        .collect();
    if present.is_empty() {
        return Err(Error::input("no class occurs in the ground truth"));
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub id_count: usize,
    pub ood_count: usize,
}

/// Bin edges `lo + (hi − lo)·i/bins`, with the last edge pinned to `hi`.
fn bin_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut edges: Vec<f64> = (0..=bins)
        .map(|i| lo + (hi - lo) * (i as f64 / bins as f64))
        .collect();
    edges[bins] = hi;
    edges
}

/// Equal-width histogram over the pooled range. Bins are right-open except
/// the last; a degenerate range collapses to one bin.
pub fn histogram(id_scores: &[f64], ood_scores: &[f64], bins: usize) -> Result<Vec<HistBin>> {
    if bins == 0 {
        return Err(Error::input("histogram needs at least one bin"));
    }
    let all = id_scores.iter().chain(ood_scores);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        if id_scores.is_empty() && ood_scores.is_empty() {
            return Ok(Vec::new());
        }
        return Err(Error::input("scores must be finite"));
    }
    let bins = if hi > lo { bins } else { 1 };
    let edges = bin_edges(lo, hi, bins);
    let mut out: Vec<HistBin> = edges
        .windows(2)
        .map(|w| HistBin {
            bin_low: w[0],
            bin_high: w[1],
            id_count: 0,
            ood_count: 0,
        })
        .collect();
    let locate = |v: f64| -> usize {
        if v >= hi {
            return bins - 1;
        }
        // Guess from the width, then settle against the stored edges.
        let mut b = (((v - lo) / (hi - lo)) * bins as f64) as usize;
        b = b.min(bins - 1);
        while b > 0 && v < edges[b] {
            b -= 1;
        }
        while b + 1 < bins && v >= edges[b + 1] {
            b += 1;
        }
        b
    };
    for &v in id_scores {
        out[locate(v)].id_count += 1;
    }
    for &v in ood_scores {
        out[locate(v)].ood_count += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub aupr_in: f64,
    pub n_id: usize,
    pub n_ood: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub histogram: Vec<HistBin>,
}

impl EvalReport {
    pub fn compute(id_scores: &[f64], ood_scores: &[f64], bins: Option<usize>) -> Result<Self> {
        Ok(Self {
            auroc: auroc(id_scores, ood_scores)?,
            aupr_in: aupr_in(id_scores, ood_scores)?,
            n_id: id_scores.len(),
            n_ood: ood_scores.len(),
            histogram: match bins {
                Some(b) => histogram(id_scores, ood_scores, b)?,
                None => Vec::new(),
            },
        })
    }

    /// Metric names to values.
    pub fn to_json(&self) -> String {
        let v = serde_json::json!({
            "auroc": self.auroc,
            "aupr_in": self.aupr_in,
            "n_id": self.n_id,
            "n_ood": self.n_ood,
        });
        serde_json::to_string_pretty(&v).expect("plain JSON object")
    }
}

pub fn write_histogram_csv(path: impl AsRef<Path>, bins: &[HistBin]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    for b in bins {
        w.serialize(b).map_err(crate::energy::csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Self-contained SVG with the ID and OOD histograms as overlaid step outlines.
pub fn histogram_svg(bins: &[HistBin]) -> String {
    let (w, h, pad) = (640.0, 360.0, 40.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    if let (Some(first), Some(last)) = (bins.first(), bins.last()) {
        let (lo, hi) = (first.bin_low, last.bin_high);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let peak = bins
            .iter()
            .map(|b| b.id_count.max(b.ood_count))
            .max()
            .unwrap_or(1)
            .max(1) as f64;
        let x = |v: f64| pad + (v - lo) / span * (w - 2.0 * pad);
        let y = |c: usize| h - pad - c as f64 / peak * (h - 2.0 * pad);
        let outline = |count: fn(&HistBin) -> usize| {
            let mut pts = vec![format!("{:.2},{:.2}", x(lo), y(0))];
            for b in bins {
                pts.push(format!("{:.2},{:.2}", x(b.bin_low), y(count(b))));
                pts.push(format!("{:.2},{:.2}", x(b.bin_high), y(count(b))));
            }
            pts.push(format!("{:.2},{:.2}", x(hi), y(0)));
            pts.join(" ")
        };
        svg += &format!(
            "<line x1=\"{pad}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
            h - pad,
            w - pad
        );
        svg += &format!(
            "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>\n",
            outline(|b| b.id_count)
        );
        svg += &format!(
            "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" points=\"{}\"/>\n",
            outline(|b| b.ood_count)
        );
        svg += &format!(
            "<text x=\"{pad}\" y=\"{}\" font-size=\"12\">{lo:.3}</text>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{hi:.3}</text>\n\
             <text x=\"{}\" y=\"20\" font-size=\"12\" fill=\"#1f77b4\">ID</text>\n\
             <text x=\"{}\" y=\"20\" font-size=\"12\" fill=\"#d62728\">OOD</text>\n",
            h - pad + 16.0,
            w - pad,
            h - pad + 16.0,
            w - 2.0 * pad,
            w - pad,
        );
    }
    svg += "</svg>\n";
    svg
}

pub fn write_histogram_svg(path: impl AsRef<Path>, bins: &[HistBin]) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(histogram_svg(bins).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_small_fixture() {
        assert_eq!(auroc(&[3.0, 2.0], &[2.0, 1.0]).unwrap(), 0.875);
        assert_eq!(auroc(&[5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(auroc(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap(), 0.5);
        assert!(auroc(&[], &[1.0]).is_err());
        assert!(auroc(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn aupr_edge_cases() {
        assert_eq!(aupr_in(&[5.0, 6.0], &[1.0, 2.0]).unwrap(), 1.0);
        let tied = aupr_in(&[1.0; 3], &[1.0; 5]).unwrap();
        assert!((tied - 3.0 / 8.0).abs() < 1e-15);
        assert!(aupr_in(&[1.0], &[]).is_err());
    }

    #[test]
    fn aupr_can_fall_below_prior() {
        // One OOD score above both ID scores: P = 1/2 at R = 1/2, P = 2/3 at R = 1.
        let v = aupr_in(&[1.0, 2.0], &[3.0]).unwrap();
        assert!((v - (0.25 + 1.0 / 3.0)).abs() < 1e-15);
        assert!(v < 2.0 / 3.0);
    }

    #[test]
    fn balanced_accuracy_cases() {
        assert_eq!(balanced_accuracy(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 1.0);
        // class 0 recall 1.0, class 1 recall 0.5; class 2 absent
        assert_eq!(balanced_accuracy(&[0, 0, 1, 0], &[0, 0, 1, 1], 3).unwrap(), 0.75);
        assert!(balanced_accuracy(&[], &[], 2).is_err());
        assert!(balanced_accuracy(&[0], &[3], 2).is_err());
    }

    #[test]
    fn histogram_basics() {
        let h = histogram(&[1.0], &[1.0], 1).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!((h[0].id_count, h[0].ood_count), (1, 1));

        let h = histogram(&[0.0, 1.0, 2.0], &[4.0], 4).unwrap();
        let ids: Vec<usize> = h.iter().map(|b| b.id_count).collect();
        assert_eq!(ids, vec![1, 1, 1, 0]);
        assert_eq!(h[3].ood_count, 1);
        assert_eq!(h[3].bin_high, 4.0);

        // Degenerate range collapses to one bin.
        let h = histogram(&[2.0, 2.0], &[2.0], 10).unwrap();
        assert_eq!(h.len(), 1);
        assert!(histogram(&[1.0], &[2.0], 0).is_err());
    }

    #[test]
    fn report_json_names() {
        let r = EvalReport::compute(&[3.0, 2.0], &[2.0, 1.0], Some(3)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["auroc"], 0.875);
        assert_eq!(v["n_id"], 2);
        assert_eq!(r.histogram.iter().map(|b| b.id_count + b.ood_count).sum::<usize>(), 4);
        let svg = histogram_svg(&r.histogram);
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    }
}
