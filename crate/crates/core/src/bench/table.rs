use crate::metrics::{Metric, ReportRow};

use super::config::Method;

const GAP: &str = "  ";

/// Column heading for a method key; unknown keys are shown as given.
pub fn method_label(key: &str) -> String {
    match Method::from_key(key) {
        Some(Method::Zf) => "ZF",
        Some(Method::Tv) => "TV",
        Some(Method::Dict) => "DL",
        Some(Method::Dagan) => "DAGAN",
        Some(Method::Kigan) => "KIGAN",
        Some(Method::Recon) => "ReconGAN",
        Some(Method::Refine) => "RefineGAN",
        None => key,
    }
    .to_string()
}

/// `cartesian` → `Cartesian`.
pub fn scheme_label(scheme: &str) -> String {
    let mut c = scheme.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn method_rank(key: &str) -> usize {
    Method::ALL
        .iter()
        .position(|m| m.key() == key)
        .unwrap_or(Method::ALL.len())
}

/// Plain-text comparison table: one row per (mask, target, metric), one
/// column per method, `mean±std` to two decimals. The best value of each
/// row is suffixed with `*` (every entry tied with it after rounding, too).
/// Mask and target labels are printed on the first row of their group only,
/// and a rule closes each mask group.
pub fn format_table(rows: &[ReportRow]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    methods.sort_by_key(|m| method_rank(m));

    let mut groups: Vec<(&str, &str, Metric)> = Vec::new();
    for r in rows {
        let key = (r.mask.as_str(), r.target.as_str(), r.metric);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }

    let mut header = vec!["Mask".to_string(), "AF/SR".to_string(), "Metric".to_string()];
    header.extend(methods.iter().map(|m| method_label(m)));
    let mut body: Vec<Vec<String>> = Vec::new();
    let mut group_ends = Vec::new();
    for (i, &(mask, target, metric)) in groups.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| groups[j]);
        let new_mask = prev.is_none_or(|p| p.0 != mask);
        let new_target = new_mask || prev.is_some_and(|p| p.1 != target);
        let cells: Vec<Option<String>> = methods
            .iter()
            .map(|m| {
                rows.iter()
                    .find(|r| r.mask == mask && r.target == target && r.metric == metric && r.method == *m)
                    .map(|r| match r.value {
                        Some(v) => format!("{:.2}±{:.2}", v.mean, v.std),
                        None => "failed".to_string(),
                    })
            })
            .collect();
        let best = best_mean(&cells, metric);
        let mut line = vec![
            if new_mask { scheme_label(mask) } else { String::new() },
            if new_target { target.to_string() } else { String::new() },
            metric.to_string(),
        ];
        line.extend(cells.into_iter().map(|c| match c {
            Some(s) if best.as_deref().is_some_and(|b| mean_part(&s) == Some(b)) => format!("{s}*"),
            Some(s) => s,
            None => "-".to_string(),
        }));
        body.push(line);
        if groups.get(i + 1).is_none_or(|n| n.0 != mask) {
            group_ends.push(body.len() - 1);
        }
    }

    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for line in &body {
        for (w, c) in widths.iter_mut().zip(line) {
            *w = (*w).max(c.chars().count());
        }
    }
    let total = widths.iter().sum::<usize>() + GAP.len() * (widths.len() - 1);
    let rule = "-".repeat(total);
    let render = |line: &[String]| -> String {
        let padded: Vec<String> = line
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        padded.join(GAP).trim_end().to_string()
    };

    let mut out = String::new();
    out.push_str(&render(&header));
    out.push('\n');
    out.push_str(&rule);
    out.push('\n');
    for (i, line) in body.iter().enumerate() {
        out.push_str(&render(line));
        out.push('\n');
        if group_ends.contains(&i) {
            out.push_str(&rule);
            out.push('\n');
        }
    }
    out
}

fn mean_part(cell: &str) -> Option<&str> {
    cell.split_once('±').map(|(m, _)| m)
}

/// The formatted mean of the best entry, if any entry has a value.
fn best_mean(cells: &[Option<String>], metric: Metric) -> Option<String> {
    let means = cells
        .iter()
        .flatten()
        .filter_map(|c| mean_part(c))
        .filter_map(|m| m.parse::<f64>().ok().map(|v| (v, m)));
    let best = if metric.higher_is_better() {
        means.max_by(|a, b| a.0.total_cmp(&b.0))
    } else {
        means.min_by(|a, b| a.0.total_cmp(&b.0))
    };
    best.map(|(_, m)| m.to_string())
}
