//! Plain-text comparison tables.

use std::fmt::Write;

use super::{ComparisonSummary, MetricSummary};

fn group(s: &ComparisonSummary) -> (String, String) {
    (
        s.env.map_or_else(|| "all".into(), |e| e.to_string()),
        s.agent.map_or_else(|| "all".into(), |a| a.to_string()),
    )
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.digits$}"))
}

fn p_value(m: &MetricSummary) -> String {
    match (m.p_value, &m.test_note) {
        (Some(p), None) => format!("{p:.4}"),
        (Some(p), Some(_)) => format!("{p:.4}*"),
        (None, _) => "-".into(),
    }
}

fn effect(m: &MetricSummary) -> String {
    match (m.a12, m.magnitude) {
        (Some(a), Some(g)) => format!("{a:.3} ({})", g.name()),
        _ => "-".into(),
    }
}

/// Renders the improvement table (ratios, p-values, effect sizes per
/// metric) and the adaptability table (scenario counts and AR per method).
///
/// Cost metrics show the percentage decrease of drdrl relative to
/// vanilla_cl, reward shows the percentage increase. A `*` after a p-value
/// marks a degenerate test.
pub fn render_report(summaries: &[ComparisonSummary]) -> String {
    let mut out = String::new();
    let mut rows = vec![vec![
        "env".to_string(),
        "agent".into(),
        "pairs".into(),
        "episodes %DR".into(),
        "p".into(),
        "A12".into(),
        "time %DR".into(),
        "p".into(),
        "A12".into(),
        "reward %IR".into(),
        "p".into(),
        "A12".into(),
    ]];
    for s in summaries {
        let (e, a) = group(s);
        let mut row = vec![e, a, s.pairs.to_string()];
        for m in &s.metrics {
            row.extend([opt(m.ratio, 2), p_value(m), effect(m)]);
        }
        rows.push(row);
    }
    out.push_str("improvement of drdrl over vanilla_cl\n");
    table(&mut out, &rows);

    let mut rows = vec![vec![
        "env".to_string(),
        "agent".into(),
        "both".into(),
        "drdrl only".into(),
        "vanilla_cl only".into(),
        "neither".into(),
        "AR drdrl %".into(),
        "AR vanilla_cl %".into(),
    ]];
    for s in summaries {
        let (e, a) = group(s);
        let q = s.quadrants;
        rows.push(vec![
            e,
            a,
            q.both.to_string(),
            q.drdrl_only.to_string(),
            q.cl_only.to_string(),
            q.neither.to_string(),
            format!("{:.2}", s.ar_drdrl),
            format!("{:.2}", s.ar_cl),
        ]);
    }
    out.push_str("\nadaptability\n");
    table(&mut out, &rows);
    out
}

fn table(out: &mut String, rows: &[Vec<String>]) {
    let cols = rows[0].len();
    let widths: Vec<usize> = (0..cols).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "{}", rule.join("  "));
        }
    }
}
