use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::boundary::BoundaryScores;
use crate::error::{Error, Result};

/// One scored output: a test case processed by one method variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub case_id: String,
    pub method: String,
    pub param: String,
    pub psnr: f64,
    pub ssim: f64,
    pub boundary: BoundaryScores,
}

/// Means over every row of one `(method, param)` variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub param: String,
    pub cases: usize,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    /// `None` when any contributing row is undefined.
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
    pub mean_f1: Option<f64>,
    /// Rows whose F1 was undefined.
    pub undefined: usize,
    /// Highest mean PSNR among the variants of this method.
    pub optimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<CaseRow>,
    pub summaries: Vec<MethodSummary>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.map(|v| mean(v.into_iter()))
}

/// Groups rows by `(method, param)` in first-appearance order and marks,
/// per method, the variant with the highest mean PSNR (first wins ties).
pub fn aggregate_report(rows: Vec<CaseRow>) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::Empty("no rows to aggregate".into()));
    }
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in &rows {
        let k = (r.method.as_str(), r.param.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut summaries: Vec<MethodSummary> = keys
        .iter()
        .map(|&(method, param)| {
            let group: Vec<&CaseRow> = rows
                .iter()
                .filter(|r| r.method == method && r.param == param)
                .collect();
            MethodSummary {
                method: method.to_string(),
                param: param.to_string(),
                cases: group.len(),
                mean_psnr: mean(group.iter().map(|r| r.psnr)),
                mean_ssim: mean(group.iter().map(|r| r.ssim)),
                mean_precision: mean_opt(group.iter().map(|r| r.boundary.precision)),
                mean_recall: mean_opt(group.iter().map(|r| r.boundary.recall)),
                mean_f1: mean_opt(group.iter().map(|r| r.boundary.f1)),
                undefined: group.iter().filter(|r| r.boundary.f1.is_none()).count(),
                optimal: false,
            }
        })
        .collect();

    let mut methods: Vec<String> = Vec::new();
    for s in &summaries {
        if !methods.contains(&s.method) {
            methods.push(s.method.clone());
        }
    }
    for m in &methods {
        let mut best: Option<usize> = None;
        for (i, s) in summaries.iter().enumerate().filter(|(_, s)| &s.method == m) {
            if best.is_none_or(|b| s.mean_psnr > summaries[b].mean_psnr) {
                best = Some(i);
            }
        }
        if let Some(b) = best {
            summaries[b].optimal = true;
        }
    }
    Ok(EvalReport { rows, summaries })
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{v:.5}"))
}

impl EvalReport {
    /// Summary of the optimal variant of `method`.
    pub fn best(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries
            .iter()
            .find(|s| s.optimal && s.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "case_id,method,param,psnr_db,ssim,count_o,count_ans,count_and,precision,recall,f1\n",
        );
        for r in &self.rows {
            let b = &r.boundary;
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{},{},{},{},{},{}",
                r.case_id,
                r.method,
                r.param,
                fmt_db(r.psnr),
                r.ssim,
                b.count_o,
                b.count_ans,
                b.count_and,
                fmt_opt(b.precision),
                fmt_opt(b.recall),
                fmt_opt(b.f1)
            );
        }
        out
    }

    /// Two Markdown tables: the optimal variant of each method with its
    /// average PSNR and SSIM, then every variant's boundary scores.
    pub fn to_markdown(&self, title: &str) -> String {
        let mut out =
            format!("## {title}\n\n### Average PSNR and SSIM (best parameter per method)\n\n");
        out.push_str("| Method | Param | PSNR (dB) | SSIM |\n|---|---|---|---|\n");
        for s in self.summaries.iter().filter(|s| s.optimal) {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {:.4} |",
                s.method,
                s.param,
                fmt_db(s.mean_psnr),
                s.mean_ssim
            );
        }
        out.push_str("\n### Boundary preservation\n\n");
        out.push_str(
            "| Method | Param | Precision | Recall | F1 | Undefined |\n|---|---|---|---|---|---|\n",
        );
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                s.method,
                s.param,
                fmt_opt(s.mean_precision),
                fmt_opt(s.mean_recall),
                fmt_opt(s.mean_f1),
                s.undefined
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(case: &str, method: &str, param: &str, psnr: f64, counts: (u64, u64, u64)) -> CaseRow {
        CaseRow {
            case_id: case.into(),
            method: method.into(),
            param: param.into(),
            psnr,
            ssim: psnr / 100.0,
            boundary: BoundaryScores::from_counts(counts.0, counts.1, counts.2).unwrap(),
        }
    }

    #[test]
    fn single_row_is_its_own_average() {
        let r = row("c1", "ddae", "-", 26.69, (70631, 63171, 48858));
        let rep = aggregate_report(vec![r.clone()]).unwrap();
        let s = &rep.summaries[0];
        assert_eq!(
            (s.mean_psnr, s.mean_ssim, s.mean_f1),
            (r.psnr, r.ssim, r.boundary.f1)
        );
        assert!(s.optimal);
        assert!(aggregate_report(vec![]).is_err());
    }

    #[test]
    fn three_case_average() {
        let rows = [26.69, 26.89, 26.21]
            .iter()
            .enumerate()
            .map(|(i, &p)| row(&format!("c{i}"), "ddae", "-", p, (10, 10, 5)))
            .collect();
        let rep = aggregate_report(rows).unwrap();
        assert!((rep.summaries[0].mean_psnr - 26.60).abs() <= 0.005);
    }

    #[test]
    fn optimal_variant_by_mean_psnr() {
        let mut rows = Vec::new();
        for (sigma, psnr) in [("1", 21.3), ("3", 25.6), ("5", 25.5), ("10", 24.6)] {
            rows.push(row("c1", "gaussian", sigma, psnr, (10, 10, 5)));
            rows.push(row("c2", "gaussian", sigma, psnr - 0.2, (10, 10, 5)));
        }
        rows.push(row("c1", "median", "3", 18.0, (10, 10, 5)));
        rows.push(row("c1", "median", "5", 18.0, (10, 10, 5)));
        let rep = aggregate_report(rows).unwrap();
        assert_eq!(rep.best("gaussian").unwrap().param, "3");
        // ties go to the first variant
        assert_eq!(rep.best("median").unwrap().param, "3");
        assert_eq!(rep.summaries.iter().filter(|s| s.optimal).count(), 2);
        assert_eq!(rep.summaries[0].cases, 2);
    }

    #[test]
    fn undefined_scores_stay_visible() {
        let rows = vec![
            row("c1", "median", "11", 15.0, (0, 10, 0)),
            row("c2", "median", "11", 16.0, (10, 10, 4)),
        ];
        let rep = aggregate_report(rows).unwrap();
        let s = &rep.summaries[0];
        assert_eq!((s.mean_precision, s.mean_f1, s.undefined), (None, None, 1));
        assert_eq!(s.mean_recall, Some(0.2));
        let csv = rep.to_csv();
        assert!(csv
            .lines()
            .nth(1)
            .unwrap()
            .ends_with(",0,10,0,undefined,0.00000,undefined"));
        assert!(rep
            .to_markdown("t")
            .contains("| median | 11 | undefined | 0.20000 | undefined | 1 |"));
    }

    #[test]
    fn csv_layout_and_infinity() {
        let mut r = row("loc_029", "identity", "-", f64::INFINITY, (5, 5, 5));
        r.ssim = 1.0;
        let rep = aggregate_report(vec![r]).unwrap();
        assert_eq!(
            rep.to_csv(),
            "case_id,method,param,psnr_db,ssim,count_o,count_ans,count_and,precision,recall,f1\n\
             loc_029,identity,-,inf,1.000000,5,5,5,1.00000,1.00000,1.00000\n"
        );
        assert!(rep
            .to_markdown("t")
            .contains("| identity | - | inf | 1.0000 |"));
    }
}
