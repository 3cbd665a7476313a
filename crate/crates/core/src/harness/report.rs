use std::collections::BTreeSet;

use super::ResultRow;

/// Header of the label column for a set of rows: whichever axis varies.
pub fn table_label_column(rows: &[&ResultRow]) -> &'static str {
    let distinct = |f: &dyn Fn(&ResultRow) -> &'static str| {
        rows.iter().map(|r| f(r)).collect::<BTreeSet<_>>().len() > 1
    };
    if distinct(&|r| r.config.strategy.wire_name()) {
        "Strategy"
    } else if distinct(&|r| r.config.query_type.wire_name()) {
        "Query Type"
    } else if distinct(&|r| r.config.history_type.wire_name()) {
        "History Type"
    } else {
        "Strategy"
    }
}

fn label_for(row: &ResultRow, column: &str) -> String {
    match column {
        "Query Type" => row.config.query_type.label().to_string(),
        "History Type" => row.config.history_type.label().to_string(),
        _ => row.config.strategy.label().to_string(),
    }
}

/// Tables in order of first appearance; untagged rows form one group.
fn groups(rows: &[ResultRow]) -> Vec<(Option<String>, Vec<usize>)> {
    let mut out: Vec<(Option<String>, Vec<usize>)> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        match out.iter_mut().find(|(t, _)| *t == r.table) {
            Some((_, idx)) => idx.push(i),
            None => out.push((r.table.clone(), vec![i])),
        }
    }
    out
}

pub(super) fn table_names(rows: &[ResultRow]) -> Vec<String> {
    groups(rows).into_iter().filter_map(|(t, _)| t).collect()
}

/// Display label of every row, chosen per table.
pub(super) fn row_labels(rows: &[ResultRow]) -> Vec<String> {
    let mut labels = vec![String::new(); rows.len()];
    for (_, idx) in groups(rows) {
        let members: Vec<&ResultRow> = idx.iter().map(|&i| &rows[i]).collect();
        let column = table_label_column(&members);
        for i in idx {
            labels[i] = label_for(&rows[i], column);
        }
    }
    labels
}

pub(super) fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

fn metric(v: Option<f64>, precision: usize) -> String {
    match v {
        Some(x) => format!("{x:.precision$}"),
        None => "NA".into(),
    }
}

/// CSV of the rows (all, or one table's).
pub fn render_csv(rows: &[ResultRow], labels: &[String], table: Option<&str>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record([
        "table",
        "label",
        "strategy",
        "query_type",
        "history_type",
        "k",
        "theta",
        "c_score",
        "entropy",
        "persona_f1",
        "rouge_l",
        "n_responses",
        "dialogues_scored",
        "dialogues_excluded",
    ])
    .expect("in-memory csv");
    for (r, label) in rows.iter().zip(labels) {
        if table.is_some_and(|t| r.table.as_deref() != Some(t)) {
            continue;
        }
        let m = r.report.as_ref();
        w.write_record([
            r.table.clone().unwrap_or_default(),
            label.clone(),
            r.config.strategy.wire_name().to_string(),
            r.config.query_type.wire_name().to_string(),
            r.config.history_type.wire_name().to_string(),
            r.config.k.to_string(),
            r.config.theta.to_string(),
            metric(m.map(|m| m.c_score), 6),
            metric(m.map(|m| m.entropy), 6),
            metric(m.map(|m| m.persona_f1), 6),
            metric(m.map(|m| m.rouge_l), 6),
            m.map_or(0, |m| m.n_responses).to_string(),
            r.dialogues_scored.to_string(),
            r.dialogues_excluded.to_string(),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

/// One Markdown table per tagged group, columns as in the comparison tables.
pub fn render_markdown(rows: &[ResultRow], labels: &[String]) -> String {
    let mut out = String::new();
    for (table, idx) in groups(rows) {
        let members: Vec<&ResultRow> = idx.iter().map(|&i| &rows[i]).collect();
        let column = table_label_column(&members);
        if let Some(t) = &table {
            out.push_str(&format!("## {t}\n\n"));
        }
        out.push_str(&format!(
            "| {column} | C-Score | ENTR | P-F1 | ROUGE | Responses | Dialogues |\n"
        ));
        out.push_str("|---|---|---|---|---|---|---|\n");
        for i in idx {
            let r = &rows[i];
            let m = r.report.as_ref();
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {}/{} |\n",
                labels[i],
                metric(m.map(|m| m.c_score), 4),
                metric(m.map(|m| m.entropy), 4),
                metric(m.map(|m| m.persona_f1), 4),
                metric(m.map(|m| m.rouge_l), 4),
                m.map_or(0, |m| m.n_responses),
                r.dialogues_scored,
                r.dialogues_scored + r.dialogues_excluded,
            ));
        }
        out.push('\n');
    }
    out
}
