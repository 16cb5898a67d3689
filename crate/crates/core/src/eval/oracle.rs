//! Brute-force gold answers computed straight from the hidden table. This
//! deliberately shares no code with the engine's query path.

use std::collections::BTreeSet;

use super::{Aggregate, EvidenceRef, HiddenRow, QuestionSpec};

fn passes(spec: &QuestionSpec, row: &HiddenRow) -> bool {
    match &spec.filter {
        None => true,
        Some(f) => match row.metrics.get(&f.key) {
            Some(v) if f.above => *v > f.threshold,
            Some(v) => *v < f.threshold,
            None => false,
        },
    }
}

/// Gold value and evidence rows, or `None` when some group has nothing to
/// aggregate.
pub fn gold(spec: &QuestionSpec, table: &[HiddenRow]) -> Option<(f64, Vec<EvidenceRef>)> {
    let mut values = Vec::new();
    let mut evidence = BTreeSet::new();
    for g in &spec.groups {
        let rows: Vec<&HiddenRow> = table
            .iter()
            .filter(|r| r.entity == g.entity && r.date >= g.from && r.date <= g.to && passes(spec, r))
            .collect();
        if rows.is_empty() {
            return None;
        }
        let metric: Vec<f64> = match &spec.metric {
            Some(m) => rows.iter().filter_map(|r| r.metrics.get(m).copied()).collect(),
            None => Vec::new(),
        };
        let v = match spec.aggregate {
            Aggregate::Count => rows.len() as f64,
            _ if metric.is_empty() => return None,
            Aggregate::Sum => {
                let mut s = 0.0;
                for x in &metric {
                    s += x;
                }
                s
            }
            Aggregate::Avg => {
                let mut s = 0.0;
                for x in &metric {
                    s += x;
                }
                s / metric.len() as f64
            }
            Aggregate::Min => metric.iter().copied().fold(f64::INFINITY, f64::min),
            Aggregate::Max => metric.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        values.push(v);
        for r in rows {
            evidence.insert(EvidenceRef {
                entity: r.entity.clone(),
                date: r.date.clone(),
            });
        }
    }
    let value = match values[..] {
        [v] => v,
        [a, b] => a - b,
        _ => return None,
    };
    Some((value, evidence.into_iter().collect()))
}
