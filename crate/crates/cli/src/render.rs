//! Text rendering of a plan space as a numbered decision tree.
//!
//! ```text
//! 2> PA / AGG eliminated              10K rows   1.2MB
//! 2>   JOIN                           10K rows   1.2MB
//! 2>     MERGE(product_id)            10K rows   200KB
//! ```
//!
//! Each alternative opens with a summary line carrying the cost of its
//! topmost rendered operator. The
//! aggregate above the join collapses into one `AGG(keys, aggs)` line, and
//! PROJECT, EXCHANGE and BROADCAST nodes are left out.

use ppa_core::plan::{NodeKind, PhysicalNode};
use ppa_core::PlanSpace;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unit {
    Rows,
    Bytes,
}

fn scaled(value: u64, steps: &[(u64, &str)]) -> String {
    for &(scale, suffix) in steps {
        if value >= scale {
            let s = format!("{:.1}", value as f64 / scale as f64);
            let s = s.strip_suffix(".0").unwrap_or(&s);
            return format!("{s}{suffix}");
        }
    }
    value.to_string()
}

/// `10000` rows → `10K`, `1200000` bytes → `1.2MB`; values below 1000 stay plain.
pub fn format_human(value: u64, unit: Unit) -> String {
    match unit {
        Unit::Rows => scaled(value, &[(1_000_000, "M"), (1_000, "K")]),
        Unit::Bytes => scaled(value, &[(1_000_000_000, "GB"), (1_000_000, "MB"), (1_000, "KB")]),
    }
}

struct Line {
    marker: String,
    depth: usize,
    label: String,
    rows: u64,
    bytes: u64,
}

fn contains_join(node: &PhysicalNode) -> bool {
    node.count(|k| matches!(k, NodeKind::Join { .. })) > 0
}

fn collect(node: &PhysicalNode, depth: usize, marker: &str, out: &mut Vec<Line>) {
    let cost = node.cost();
    let mut push = |label: String| {
        out.push(Line { marker: marker.to_owned(), depth, label, rows: cost.rows, bytes: cost.bytes })
    };
    match &node.kind {
        NodeKind::Project { .. } | NodeKind::Exchange { .. } | NodeKind::Broadcast => {
            for c in &node.children {
                collect(c, depth, marker, out);
            }
        }
        NodeKind::Merge { keys, aggregates } if contains_join(node) => {
            let keys = keys.iter().map(|k| k.column.as_str());
            let aggs = aggregates.iter().map(|a| a.to_string());
            push(format!("AGG({})", keys.map(str::to_owned).chain(aggs).collect::<Vec<_>>().join(", ")));
            // MERGE over DISTRIBUTE over COMPUTE
            let compute = &node.children[0].children[0];
            for c in &compute.children {
                collect(c, depth + 1, marker, out);
            }
        }
        kind => {
            push(match kind {
                NodeKind::Join { .. } => "JOIN".to_owned(),
                other => other.to_string(),
            });
            for c in &node.children {
                collect(c, depth + 1, marker, out);
            }
        }
    }
}

/// Renders every alternative of `space` in slot order, marking the chosen
/// one with `>`.
pub fn render_decision_tree(space: &PlanSpace) -> String {
    let mut lines = Vec::new();
    for alt in &space.alternatives {
        let index = alt.strategy.index();
        let marker = format!("{index}{}", if index == space.chosen_index { '>' } else { '.' });
        let summary = lines.len();
        lines.push(Line { marker: marker.clone(), depth: 0, label: alt.summary_label().to_owned(), rows: 0, bytes: 0 });
        collect(&alt.root, 1, &marker, &mut lines);
        // the summary repeats the topmost rendered operator
        if let Some(top) = lines.get(summary + 1) {
            let (rows, bytes) = (top.rows, top.bytes);
            lines[summary].rows = rows;
            lines[summary].bytes = bytes;
        }
    }
    let width = lines.iter().map(|l| 2 * l.depth + l.label.len()).max().unwrap_or(0) + 2;
    let mut out = String::new();
    for l in &lines {
        let head = format!("{}{}", "  ".repeat(l.depth), l.label);
        out.push_str(&format!(
            "{} {head:<width$}{:>8} rows{:>8}\n",
            l.marker,
            format_human(l.rows, Unit::Rows),
            format_human(l.bytes, Unit::Bytes),
        ));
    }
    out
}
