//! Result tables and bar charts.
//!
//! One panel per condition, one horizontal bar per spec. A bar's length is
//! the change in held-out NLL relative to the full-information model, its
//! label reads `ΔNLL (A)` and its whiskers are the bootstrap interval of A
//! mapped back to the NLL scale.

use std::fmt::Write as _;
use std::path::Path;

use ctxinfo::metrics::AblatedInformationResult;

use crate::manifest::write_atomic;
use crate::runner::{load_results, ResultsFile};
use crate::RunError;

pub const CHART_FILE: &str = "chart.svg";
pub const TABLE_FILE: &str = "table.txt";

/// Fixed-point formatting without a sign on values that round to zero.
pub fn fixed(x: f64, digits: usize) -> String {
    let s = format!("{x:.digits$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_string(),
        _ => s,
    }
}

pub fn bar_label(row: &AblatedInformationResult) -> String {
    let a = row.a.map_or_else(|| "n/a".to_string(), |a| fixed(a, 2));
    format!("{} ({a})", fixed(row.numerator, 3))
}

fn find<'a>(r: &'a ResultsFile, spec: &str, cond: &str) -> Option<&'a AblatedInformationResult> {
    r.rows.iter().find(|x| x.spec == spec && x.condition == cond)
}

pub fn render_table(r: &ResultsFile) -> String {
    let width = r.specs.iter().map(|s| s.len()).max().unwrap_or(4).max(4);
    let mut out = String::new();
    let _ = writeln!(out, "model: {}", r.model);
    for cond in &r.conditions {
        let _ = writeln!(out, "\n[{cond}]");
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>8}  {:>17}  {:>10}",
            "spec", "nll", "full", "none", "A", "95% CI", "ppl"
        );
        for spec in &r.specs {
            match find(r, spec, cond) {
                Some(row) => {
                    let a = row.a.map_or("n/a".into(), |a| fixed(a, 4));
                    let ci = match (row.ci_low, row.ci_high) {
                        (Some(lo), Some(hi)) => format!("[{}, {}]", fixed(lo, 3), fixed(hi, 3)),
                        _ => "n/a".into(),
                    };
                    let _ = writeln!(
                        out,
                        "{:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>8}  {:>17}  {:>10.2}",
                        spec,
                        row.nll_ablated,
                        row.nll_full,
                        row.nll_none,
                        a,
                        ci,
                        row.nll_ablated.exp()
                    );
                }
                None => {
                    let _ = writeln!(out, "{spec:<width$}  missing");
                }
            }
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const LABEL_W: f64 = 190.0;
const PLOT_W: f64 = 420.0;
const TEXT_W: f64 = 130.0;
const ROW_H: f64 = 22.0;
const HEAD_H: f64 = 30.0;
const PAD: f64 = 12.0;

/// Interval of a row on the ΔNLL scale.
fn whiskers(row: &AblatedInformationResult) -> Option<(f64, f64)> {
    match (row.ci_low, row.ci_high, row.degenerate) {
        (Some(lo), Some(hi), false) => Some((lo * row.denominator, hi * row.denominator)),
        _ => None,
    }
}

pub fn render_svg(r: &ResultsFile) -> String {
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for row in &r.rows {
        lo = lo.min(row.numerator);
        hi = hi.max(row.numerator);
        if let Some((a, b)) = whiskers(row) {
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    if hi - lo <= 0.0 {
        hi = lo + 1.0;
    }
    let x = |v: f64| LABEL_W + (v - lo) / (hi - lo) * PLOT_W;

    let panel_h = HEAD_H + ROW_H * r.specs.len() as f64 + PAD;
    let warnings: Vec<String> = r
        .missing
        .iter()
        .map(|m| format!("warning: no result for {m}"))
        .chain(
            r.rows
                .iter()
                .filter(|row| row.degenerate)
                .map(|row| format!("warning: A undefined for {}/{}", row.spec, row.condition)),
        )
        .collect();
    let width = LABEL_W + PLOT_W + TEXT_W;
    let height = panel_h * r.conditions.len() as f64 + ROW_H * warnings.len() as f64 + PAD;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for (p, cond) in r.conditions.iter().enumerate() {
        let top = p as f64 * panel_h;
        let _ = writeln!(
            s,
            r#"<text x="{PAD}" y="{}" font-weight="bold">{} (ΔNLL vs. full information, A in parentheses)</text>"#,
            top + 18.0,
            escape(cond)
        );
        let zero = x(0.0);
        let _ = writeln!(
            s,
            r#"<line x1="{zero:.2}" y1="{:.2}" x2="{zero:.2}" y2="{:.2}" stroke="black"/>"#,
            top + HEAD_H - 4.0,
            top + panel_h - PAD
        );
        for (i, spec) in r.specs.iter().enumerate() {
            let y = top + HEAD_H + i as f64 * ROW_H;
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LABEL_W - 6.0,
                y + 15.0,
                escape(spec)
            );
            let Some(row) = find(r, spec, cond) else {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" fill="firebrick">missing</text>"#,
                    zero + 4.0,
                    y + 15.0
                );
                continue;
            };
            let (a, b) = (x(0.0_f64.min(row.numerator)), x(0.0_f64.max(row.numerator)));
            let _ = writeln!(
                s,
                r#"<rect x="{a:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="steelblue"/>"#,
                y + 3.0,
                b - a,
                ROW_H - 6.0
            );
            if let Some((wl, wh)) = whiskers(row) {
                let mid = y + ROW_H / 2.0;
                let _ = writeln!(
                    s,
                    r#"<path d="M{:.2} {:.2}V{:.2}M{:.2} {mid:.2}H{:.2}M{:.2} {:.2}V{:.2}" stroke="black" fill="none"/>"#,
                    x(wl),
                    mid - 4.0,
                    mid + 4.0,
                    x(wl),
                    x(wh),
                    x(wh),
                    mid - 4.0,
                    mid + 4.0
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
                LABEL_W + PLOT_W + 6.0,
                y + 15.0,
                escape(&bar_label(row))
            );
        }
    }
    let base = panel_h * r.conditions.len() as f64;
    for (i, w) in warnings.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{PAD}" y="{:.2}" fill="firebrick">{}</text>"#,
            base + 15.0 + i as f64 * ROW_H,
            escape(w)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Write `table.txt` and `chart.svg` next to the results in `dir`.
pub fn emit_report(dir: &Path) -> Result<(), RunError> {
    let results = load_results(dir)?;
    write_atomic(&dir.join(TABLE_FILE), render_table(&results).as_bytes())?;
    write_atomic(&dir.join(CHART_FILE), render_svg(&results).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Paradigm;

    fn row(spec: &str, cond: &str, abl: f64, a: Option<f64>) -> AblatedInformationResult {
        AblatedInformationResult {
            spec: spec.into(),
            condition: cond.into(),
            a,
            numerator: abl - 3.0,
            denominator: 0.5,
            degenerate: a.is_none(),
            ci_low: a.map(|a| a - 0.1),
            ci_high: a.map(|a| a + 0.1),
            ci_degenerate: false,
            seeds_used: vec![1],
            window_count: 4,
            nll_ablated: abl,
            nll_full: 3.0,
            nll_none: 3.5,
        }
    }

    fn results(rows: Vec<AblatedInformationResult>, missing: Vec<String>) -> ResultsFile {
        ResultsFile {
            config_hash: "h".into(),
            model: "ngram3".into(),
            paradigm: Paradigm::TrainAndEval,
            conditions: vec!["mid_range".into(), "long_range".into()],
            specs: vec!["identity".into(), "shuffle-all".into()],
            rows,
            missing,
        }
    }

    #[test]
    fn labels() {
        assert_eq!(bar_label(&row("identity", "m", 3.0, Some(0.0))), "0.000 (0.00)");
        assert_eq!(bar_label(&row("x", "m", 3.2, Some(0.4))), "0.200 (0.40)");
        assert_eq!(bar_label(&row("x", "m", 3.2, None)), "0.200 (n/a)");
        assert_eq!(fixed(-0.0001, 3), "0.000");
        assert_eq!(fixed(-0.25, 2), "-0.25");
    }

    #[test]
    fn four_bars_for_two_by_two() {
        let r = results(
            vec![
                row("identity", "mid_range", 3.0, Some(0.0)),
                row("shuffle-all", "mid_range", 3.2, Some(0.4)),
                row("identity", "long_range", 3.0, Some(0.0)),
                row("shuffle-all", "long_range", 3.4, Some(0.8)),
            ],
            vec![],
        );
        let svg = render_svg(&r);
        assert_eq!(svg.matches("fill=\"steelblue\"").count(), 4);
        assert_eq!(svg.matches("0.000 (0.00)").count(), 2);
        assert!(svg.contains("0.400 (0.80)"));
        assert!(!svg.contains("warning"));
        assert_eq!(svg, render_svg(&r));
    }

    #[test]
    fn missing_arm_leaves_gap_and_warning() {
        let r = results(
            vec![
                row("identity", "mid_range", 3.0, Some(0.0)),
                row("identity", "long_range", 3.0, Some(0.0)),
            ],
            vec!["shuffle-all/mid_range".into(), "shuffle-all/long_range".into()],
        );
        let svg = render_svg(&r);
        assert_eq!(svg.matches("fill=\"steelblue\"").count(), 2);
        assert_eq!(svg.matches(">missing<").count(), 2);
        assert!(svg.contains("warning: no result for shuffle-all/mid_range"));
        assert!(render_table(&r).contains("shuffle-all  missing"));
    }
}
