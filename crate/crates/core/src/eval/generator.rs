//! Seeded suite generator. Each hidden row is embedded as one sentence of
//! one user turn, between filler chat; questions are drawn per difficulty
//! band and graded by the oracle.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    oracle, Aggregate, Difficulty, DifficultyMix, Domain, EvalError, FilterSpec, GenConfig, GroupSpec, HiddenRow,
    QuestionSpec, SuiteQuestion, SyntheticSuite, Turn, SUITE_FORMAT,
};
use crate::init::{BucketSpec, GoalSpec, TemplateSpec};
use crate::provider::{ExtractionRules, KeyRule, KeySource, TextRule};
use crate::retrieval::QueryClass;
use crate::value::{Timestamp, ValueKind};

struct Metric {
    name: &'static str,
    decimals: usize,
    lo: f64,
    hi: f64,
}

struct DomainInfo {
    bucket: &'static str,
    centric: &'static str,
    meta: &'static str,
    meta_pattern: &'static str,
    entities: [&'static str; 8],
    metrics: [Metric; 2],
}

const FINANCE: DomainInfo = DomainInfo {
    bucket: "Market Data",
    centric: "Market data stock closed volume",
    meta: "Stock",
    meta_pattern: r"\bclosed at\b",
    entities: ["NFLX", "AAPL", "MSFT", "AMZN", "TSLA", "NVDA", "ORCL", "INTC"],
    metrics: [
        Metric {
            name: "close",
            decimals: 6,
            lo: 0.01,
            hi: 2.0,
        },
        Metric {
            name: "volume",
            decimals: 0,
            lo: 100.0,
            hi: 5000.0,
        },
    ],
};

const MEDICAL: DomainInfo = DomainInfo {
    bucket: "Health Vitals",
    centric: "Health vitals glucose pulse readings",
    meta: "Vitals",
    meta_pattern: r"\bhad glucose\b",
    entities: ["Avery", "Blake", "Casey", "Devon", "Emery", "Finley", "Harper", "Jordan"],
    metrics: [
        Metric {
            name: "glucose",
            decimals: 2,
            lo: 4.0,
            hi: 9.0,
        },
        Metric {
            name: "pulse",
            decimals: 0,
            lo: 55.0,
            hi: 110.0,
        },
    ],
};

const USER_FILLER: &[&str] = &[
    "Here is another update.",
    "Quick note for you.",
    "Hope your day is going well.",
    "Adding this to my notes.",
    "Sharing the latest figures now.",
];

const ASSISTANT_FILLER: &[&str] = &["Thanks, noted.", "Got it, I will remember that.", "Understood, saved."];

const DATE_KEY: &str = "date";
const START: (i32, u32, u32) = (2024, 4, 1);

fn info(domain: Domain) -> &'static DomainInfo {
    match domain {
        Domain::Finance => &FINANCE,
        Domain::Medical => &MEDICAL,
    }
}

fn date(day: usize) -> String {
    let start = NaiveDate::from_ymd_opt(START.0, START.1, START.2).expect("valid start");
    (start + Duration::days(day as i64)).format("%Y-%m-%d").to_string()
}

fn fmt(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

fn sentence(domain: Domain, entity: &str, date: &str, values: &[String; 2]) -> String {
    match domain {
        Domain::Finance => format!("On {date}, {entity} closed at {} with volume {}.", values[0], values[1]),
        Domain::Medical => format!("On {date}, {entity} had glucose {} and pulse {}.", values[0], values[1]),
    }
}

fn goal(d: &DomainInfo) -> GoalSpec {
    GoalSpec {
        goal: format!("Remember the {} figures the user shares in conversation", d.meta.to_lowercase()),
        buckets: vec![
            // first, so text matching no bucket lands here
            BucketSpec {
                name: "Conversation".into(),
                centric_info: "Conversation chat small talk greetings".into(),
                canonical_keys: vec!["speaker".into()],
                optional_keys: vec![],
                schema_templates: vec![],
            },
            BucketSpec {
                name: d.bucket.into(),
                centric_info: d.centric.into(),
                canonical_keys: vec![DATE_KEY.into()],
                optional_keys: d.metrics.iter().map(|m| m.name.to_string()).collect(),
                schema_templates: vec![TemplateSpec {
                    meta: d.meta.into(),
                    watched_keys: d.metrics.iter().map(|m| m.name.to_string()).collect(),
                }],
            },
        ],
    }
}

fn rules(d: &DomainInfo) -> ExtractionRules {
    let number = |m: &Metric| {
        let prefix = match m.name {
            "close" => "closed at",
            other => other,
        };
        KeyRule {
            key: m.name.into(),
            kind: ValueKind::Number,
            source: KeySource::Text,
            patterns: vec![TextRule::new(&format!(r"\b{prefix} ([0-9]+(?:\.[0-9]+)?)"))],
        }
    };
    ExtractionRules {
        meta: vec![TextRule::with_value(d.meta_pattern, d.meta)],
        entity: vec![TextRule {
            case_sensitive: true,
            ..TextRule::new(&format!(r"\b({})\b", d.entities.join("|")))
        }],
        keys: vec![
            KeyRule {
                key: DATE_KEY.into(),
                kind: ValueKind::Timestamp,
                source: KeySource::Text,
                patterns: vec![TextRule::new(r"\bOn ([0-9]{4}-[0-9]{2}-[0-9]{2})\b")],
            },
            number(&d.metrics[0]),
            number(&d.metrics[1]),
            KeyRule {
                key: "speaker".into(),
                kind: ValueKind::String,
                source: KeySource::SourceTag,
                patterns: vec![],
            },
        ],
    }
}

/// Largest-remainder split of `n` by the mix.
fn split(n: usize, mix: &DifficultyMix) -> Result<[usize; 3], EvalError> {
    let w = [mix.easy, mix.medium, mix.hard];
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(EvalError::ConfigInvalid("difficulty weights must be finite and >= 0".into()));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(EvalError::ConfigInvalid("difficulty weights sum to zero".into()));
    }
    let exact: Vec<f64> = w.iter().map(|x| x / total * n as f64).collect();
    let mut out = [0usize; 3];
    for i in 0..3 {
        out[i] = exact[i].floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut rest = n - out.iter().sum::<usize>();
    for i in order {
        if rest == 0 {
            break;
        }
        out[i] += 1;
        rest -= 1;
    }
    Ok(out)
}

struct Gen<'a> {
    rng: ChaCha8Rng,
    d: &'a DomainInfo,
    entities: Vec<&'static str>,
    /// Rows per entity; entity `i` covers days `0..counts[i]`.
    counts: Vec<usize>,
    table: &'a [HiddenRow],
}

fn word(a: Aggregate) -> &'static str {
    match a {
        Aggregate::Sum => "total",
        Aggregate::Avg => "average",
        Aggregate::Max => "highest",
        Aggregate::Min => "lowest",
        Aggregate::Count => "number of",
    }
}

impl Gen<'_> {
    fn entity_with(&mut self, min: usize) -> Option<usize> {
        let ok: Vec<usize> = (0..self.entities.len()).filter(|&i| self.counts[i] >= min).collect();
        ok.choose(&mut self.rng).copied()
    }

    fn metric(&mut self) -> usize {
        self.rng.gen_range(0..2)
    }

    fn group(&self, entity: usize, start: usize, len: usize) -> GroupSpec {
        GroupSpec {
            entity: self.entities[entity].to_string(),
            from: date(start),
            to: date(start + len - 1),
        }
    }

    fn single(&mut self, difficulty: Difficulty) -> Option<(String, QuestionSpec)> {
        let (min_len, max_len) = match difficulty {
            Difficulty::Easy => (1, 7),
            _ => (8, 31),
        };
        let e = self.entity_with(min_len)?;
        let n = self.counts[e];
        let len = self.rng.gen_range(min_len..=max_len.min(n));
        let start = self.rng.gen_range(0..=n - len);
        let aggregate = *[Aggregate::Sum, Aggregate::Avg, Aggregate::Count, Aggregate::Min, Aggregate::Max]
            .choose(&mut self.rng)
            .expect("non-empty");
        let m = self.metric();
        let metric = (aggregate != Aggregate::Count).then(|| self.d.metrics[m].name.to_string());
        let group = self.group(e, start, len);
        let mut filter_text = String::new();
        let filter = if difficulty == Difficulty::Medium {
            let fk = if aggregate == Aggregate::Count { self.metric() } else { 1 - m };
            let key = &self.d.metrics[fk];
            let mut values: Vec<f64> = self
                .table
                .iter()
                .filter(|r| r.entity == group.entity && r.date >= group.from && r.date <= group.to)
                .map(|r| r.metrics[key.name])
                .collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            let (above, threshold) = if values.len() < 2 {
                (true, values[0] - 1.0)
            } else if self.rng.gen_bool(0.5) {
                (true, values[self.rng.gen_range(0..values.len() - 1)])
            } else {
                (false, values[self.rng.gen_range(1..values.len())])
            };
            filter_text = format!(
                " when {} was {} {}",
                key.name,
                if above { "above" } else { "below" },
                fmt(threshold, key.decimals)
            );
            Some(FilterSpec {
                key: key.name.to_string(),
                above,
                threshold,
            })
        } else {
            None
        };
        let (a, b) = (&group.from, &group.to);
        let text = match &metric {
            None => format!("How many days of {} records are there between {a} and {b}{filter_text}?", group.entity),
            Some(m) => format!("What was the {} {m} of {} between {a} and {b}{filter_text}?", word(aggregate), group.entity),
        };
        Some((
            text,
            QuestionSpec {
                aggregate,
                metric,
                groups: vec![group],
                filter,
            },
        ))
    }

    fn hard(&mut self) -> Option<(String, QuestionSpec)> {
        let aggregate = *[Aggregate::Sum, Aggregate::Avg, Aggregate::Min, Aggregate::Max]
            .choose(&mut self.rng)
            .expect("non-empty");
        let metric = self.d.metrics[self.metric()].name;
        let two_ranges = self.counts.iter().any(|&c| c >= 12);
        let two_entities = self.counts.iter().filter(|&&c| c >= 6).count() >= 2;
        let use_ranges = match (two_ranges, two_entities) {
            (false, false) => return None,
            (true, true) => self.rng.gen_bool(0.5),
            (r, _) => r,
        };
        if use_ranges {
            let e = self.entity_with(12)?;
            let n = self.counts[e];
            let la = self.rng.gen_range(6..=15.min(n - 6));
            let lb = self.rng.gen_range(6..=15.min(n - la));
            let slack = n - la - lb;
            let gap = self.rng.gen_range(0..=slack);
            let offset = self.rng.gen_range(0..=slack - gap);
            let mut groups = vec![self.group(e, offset, la), self.group(e, offset + la + gap, lb)];
            if self.rng.gen_bool(0.5) {
                groups.reverse();
            }
            let text = format!(
                "What is the difference between the {} {metric} of {} from {} to {} and from {} to {}?",
                word(aggregate),
                groups[0].entity,
                groups[0].from,
                groups[0].to,
                groups[1].from,
                groups[1].to
            );
            Some((
                text,
                QuestionSpec {
                    aggregate,
                    metric: Some(metric.to_string()),
                    groups,
                    filter: None,
                },
            ))
        } else {
            let ok: Vec<usize> = (0..self.entities.len()).filter(|&i| self.counts[i] >= 6).collect();
            let pick: Vec<usize> = ok.choose_multiple(&mut self.rng, 2).copied().collect();
            let n = self.counts[pick[0]].min(self.counts[pick[1]]);
            let len = self.rng.gen_range(6..=31.min(n));
            let start = self.rng.gen_range(0..=n - len);
            let groups = vec![self.group(pick[0], start, len), self.group(pick[1], start, len)];
            let text = format!(
                "What is the difference between the {} {metric} of {} and {} from {} to {}?",
                word(aggregate),
                groups[0].entity,
                groups[1].entity,
                groups[0].from,
                groups[0].to
            );
            Some((
                text,
                QuestionSpec {
                    aggregate,
                    metric: Some(metric.to_string()),
                    groups,
                    filter: None,
                },
            ))
        }
    }
}

fn validate(config: &GenConfig) -> Result<[usize; 3], EvalError> {
    if config.n_records < 3 {
        return Err(EvalError::ConfigInvalid(format!("n_records {} < 3", config.n_records)));
    }
    if config.n_questions == 0 {
        return Err(EvalError::ConfigInvalid("n_questions must be at least 1".into()));
    }
    if !(1..=8).contains(&config.entities) {
        return Err(EvalError::ConfigInvalid(format!("entities {} outside 1..=8", config.entities)));
    }
    let bands = split(config.n_questions, &config.difficulty_mix)?;
    let entities = config.entities.min(config.n_records);
    let longest = config.n_records.div_ceil(entities);
    let second = if entities >= 2 { config.n_records / entities } else { 0 };
    if bands[1] > 0 && longest < 8 {
        return Err(EvalError::ConfigInvalid("medium questions need an entity with >= 8 records".into()));
    }
    if bands[2] > 0 && longest < 12 && second < 6 {
        return Err(EvalError::ConfigInvalid(
            "hard questions need an entity with >= 12 records or two with >= 6".into(),
        ));
    }
    Ok(bands)
}

/// Deterministic per `(seed, config)`.
pub fn generate(seed: u64, config: &GenConfig) -> Result<SyntheticSuite, EvalError> {
    let bands = validate(config)?;
    let d = info(config.domain);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_entities = config.entities.min(config.n_records);
    let entities: Vec<&'static str> = d.entities[..n_entities].to_vec();
    let counts: Vec<usize> = (0..n_entities)
        .map(|i| config.n_records / n_entities + usize::from(i < config.n_records % n_entities))
        .collect();

    let mut table = Vec::with_capacity(config.n_records);
    let days = counts.iter().copied().max().unwrap_or(0);
    for day in 0..days {
        for (i, entity) in entities.iter().enumerate() {
            if day >= counts[i] {
                continue;
            }
            let mut metrics = BTreeMap::new();
            let mut shown: [String; 2] = Default::default();
            for (j, m) in d.metrics.iter().enumerate() {
                let text = fmt(rng.gen_range(m.lo..m.hi), m.decimals);
                metrics.insert(m.name.to_string(), text.parse::<f64>().expect("formatted number"));
                shown[j] = text;
            }
            let date = date(day);
            table.push(HiddenRow {
                entity: entity.to_string(),
                text: sentence(config.domain, entity, &date, &shown),
                date,
                metrics,
            });
        }
    }

    let base = Timestamp::from_ymd(2024, 7, 1).expect("valid date").0 + 9 * 3600;
    let mut dialogue = Vec::new();
    let mut push = |speaker: &str, text: String| {
        let at = Timestamp(base + 60 * dialogue.len() as i64);
        dialogue.push(Turn {
            speaker: speaker.to_string(),
            text,
            at,
        });
    };
    for row in &table {
        let text = if rng.gen_bool(0.4) {
            format!("{} {}", USER_FILLER.choose(&mut rng).expect("filler"), row.text)
        } else {
            row.text.clone()
        };
        push("user", text);
        if rng.gen_bool(0.3) {
            push("assistant", ASSISTANT_FILLER.choose(&mut rng).expect("filler").to_string());
        }
    }
    let now = Timestamp(base + 60 * dialogue.len() as i64);

    let mut plan: Vec<Difficulty> = Difficulty::ALL
        .iter()
        .zip(bands)
        .flat_map(|(d, n)| std::iter::repeat_n(*d, n))
        .collect();
    plan.shuffle(&mut rng);
    let mut g = Gen {
        rng,
        d,
        entities,
        counts,
        table: &table,
    };
    let mut questions = Vec::with_capacity(plan.len());
    for (i, difficulty) in plan.into_iter().enumerate() {
        let (text, spec) = match difficulty {
            Difficulty::Hard => g.hard(),
            other => g.single(other),
        }
        .ok_or_else(|| EvalError::ConfigInvalid(format!("cannot draw a {difficulty:?} question")))?;
        let (value, evidence) = oracle::gold(&spec, &table)
            .ok_or_else(|| EvalError::ConfigInvalid(format!("question `{text}` has no gold answer")))?;
        questions.push(SuiteQuestion {
            id: format!("q{:03}", i + 1),
            text,
            class: QueryClass::Aggregation,
            difficulty,
            spec,
            gold_value: Some(value),
            gold_text: None,
            gold_evidence: evidence,
        });
    }

    Ok(SyntheticSuite {
        format: SUITE_FORMAT.to_string(),
        seed,
        config: *config,
        goal: goal(d),
        rules: rules(d),
        date_key: DATE_KEY.to_string(),
        now,
        dialogue,
        hidden_table: table,
        questions,
    })
}
