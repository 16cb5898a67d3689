//! Conflict detection, reliability scoring and deactivation within one
//! element.
//!
//! Two records contradict when some canonical key they both carry holds
//! conflicting values. Contradictions form a graph over the element's
//! records; in every connected component exactly one record (the most
//! reliable) stays active and the rest are deactivated. Records outside any
//! contradiction are left alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::RecordId;
use crate::store::{Element, Record};
use crate::text::canonical_string;
use crate::value::{KeyName, Timestamp, Value};

#[derive(Debug, Error, PartialEq)]
pub enum ConflictError {
    #[error("record {record} was created after the evaluation time")]
    NegativeAge { record: RecordId },
    #[error("invalid reliability weights: {0}")]
    InvalidWeights(String),
    #[error("invalid age unit `{0}`")]
    InvalidAgeUnit(String),
}

/// Numeric tolerance for the conflict predicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tolerance {
    /// Conflict when `|a - b| > tol`.
    Absolute(f64),
    /// Conflict when `|a - b| > tol * max(|a|, |b|)`.
    Relative(f64),
}

impl Tolerance {
    fn exceeded(self, a: f64, b: f64) -> bool {
        let diff = (a - b).abs();
        match self {
            Tolerance::Absolute(tol) => diff > tol,
            Tolerance::Relative(tol) => diff > tol * a.abs().max(b.abs()),
        }
    }
}

/// Domain configuration of the per-key conflict predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConflictPolicy {
    /// Applied to numeric keys without an explicit entry.
    pub default_tolerance: Tolerance,
    pub tolerances: BTreeMap<KeyName, Tolerance>,
    /// Timestamps further apart than this conflict. `None` means timestamps
    /// record when something was observed and never contradict.
    pub time_tolerance_secs: Option<i64>,
    /// Keys that never take part in contradictions (log-style measurements
    /// whose values are expected to vary between records).
    pub exempt_keys: BTreeSet<KeyName>,
}

impl Default for ConflictPolicy {
    fn default() -> Self {
        ConflictPolicy {
            default_tolerance: Tolerance::Relative(1e-6),
            tolerances: BTreeMap::new(),
            time_tolerance_secs: None,
            exempt_keys: BTreeSet::new(),
        }
    }
}

impl ConflictPolicy {
    pub fn tolerance(&self, key: &str) -> Tolerance {
        self.tolerances
            .get(key)
            .copied()
            .unwrap_or(self.default_tolerance)
    }

    /// The conflict predicate on two values of one key. Values of different
    /// types never conflict.
    pub fn value_conflict(&self, key: &str, a: &Value, b: &Value) -> bool {
        if self.exempt_keys.contains(key) {
            return false;
        }
        match (a, b) {
            (Value::Str(x), Value::Str(y)) => canonical_string(x) != canonical_string(y),
            (Value::Num(x), Value::Num(y)) => self.tolerance(key).exceeded(*x, *y),
            (Value::Time(x), Value::Time(y)) => self
                .time_tolerance_secs
                .is_some_and(|tol| (x.secs() - y.secs()).abs() > tol),
            (Value::Bool(x), Value::Bool(y)) => x != y,
            (Value::Null, _) | (_, Value::Null) => false,
            _ => {
                tracing::debug!(key, "type mismatch in conflict check; treated as no conflict");
                false
            }
        }
    }

    /// Strict agreement: both values present, same type and canonically
    /// equal (numbers within tolerance). Used to count supporting records.
    pub fn values_agree(&self, key: &str, a: &Value, b: &Value) -> bool {
        match (a, b) {
            (Value::Str(x), Value::Str(y)) => canonical_string(x) == canonical_string(y),
            (Value::Num(x), Value::Num(y)) => !self.tolerance(key).exceeded(*x, *y),
            (Value::Time(x), Value::Time(y)) => x == y,
            (Value::Bool(x), Value::Bool(y)) => x == y,
            _ => false,
        }
    }
}

/// True iff some key in `canonical_keys` present in both records holds
/// conflicting values under `conflict`.
pub fn contradicts_with<F>(r1: &Record, r2: &Record, canonical_keys: &[KeyName], conflict: F) -> bool
where
    F: Fn(&str, &Value, &Value) -> bool,
{
    canonical_keys.iter().any(|k| match (r1.values.get(k), r2.values.get(k)) {
        (Some(a), Some(b)) => conflict(k, a, b),
        _ => false,
    })
}

pub fn contradicts(r1: &Record, r2: &Record, canonical_keys: &[KeyName], policy: &ConflictPolicy) -> bool {
    contradicts_with(r1, r2, canonical_keys, |k, a, b| policy.value_conflict(k, a, b))
}

/// True iff both records carry every canonical key with agreeing values.
pub fn supports(r1: &Record, r2: &Record, canonical_keys: &[KeyName], policy: &ConflictPolicy) -> bool {
    canonical_keys.iter().all(|k| match (r1.values.get(k), r2.values.get(k)) {
        (Some(a), Some(b)) => policy.values_agree(k, a, b),
        _ => false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReliabilityWeights {
    pub recency: f64,
    pub source: f64,
    pub support: f64,
}

impl Default for ReliabilityWeights {
    fn default() -> Self {
        ReliabilityWeights {
            recency: 1.0 / 3.0,
            source: 1.0 / 3.0,
            support: 1.0 / 3.0,
        }
    }
}

impl ReliabilityWeights {
    pub fn new(recency: f64, source: f64, support: f64) -> Result<Self, ConflictError> {
        let w = ReliabilityWeights {
            recency,
            source,
            support,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ConflictError> {
        let all = [self.recency, self.source, self.support];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ConflictError::InvalidWeights("weights must be finite and >= 0".into()));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ConflictError::InvalidWeights(format!("weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Unit in which record age enters the recency term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeUnit {
    secs: f64,
}

impl AgeUnit {
    pub const SECONDS: AgeUnit = AgeUnit { secs: 1.0 };
    pub const MINUTES: AgeUnit = AgeUnit { secs: 60.0 };
    pub const HOURS: AgeUnit = AgeUnit { secs: 3600.0 };
    pub const DAYS: AgeUnit = AgeUnit { secs: 86400.0 };
    pub const WEEKS: AgeUnit = AgeUnit { secs: 604800.0 };

    pub fn from_secs(secs: f64) -> Result<Self, ConflictError> {
        if secs.is_finite() && secs > 0.0 {
            Ok(AgeUnit { secs })
        } else {
            Err(ConflictError::InvalidAgeUnit(secs.to_string()))
        }
    }

    pub fn secs(self) -> f64 {
        self.secs
    }
}

impl Default for AgeUnit {
    fn default() -> Self {
        AgeUnit::DAYS
    }
}

impl FromStr for AgeUnit {
    type Err = ConflictError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "s" | "sec" | "second" | "seconds" => Ok(AgeUnit::SECONDS),
            "m" | "min" | "minute" | "minutes" => Ok(AgeUnit::MINUTES),
            "h" | "hour" | "hours" => Ok(AgeUnit::HOURS),
            "d" | "day" | "days" => Ok(AgeUnit::DAYS),
            "w" | "week" | "weeks" => Ok(AgeUnit::WEEKS),
            other => other
                .parse::<f64>()
                .map_err(|_| ConflictError::InvalidAgeUnit(s.to_string()))
                .and_then(AgeUnit::from_secs),
        }
    }
}

impl fmt::Display for AgeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let named = [
            (AgeUnit::SECONDS, "seconds"),
            (AgeUnit::MINUTES, "minutes"),
            (AgeUnit::HOURS, "hours"),
            (AgeUnit::DAYS, "days"),
            (AgeUnit::WEEKS, "weeks"),
        ];
        match named.iter().find(|(u, _)| u == self) {
            Some((_, name)) => f.write_str(name),
            None => write!(f, "{}", self.secs),
        }
    }
}

impl Serialize for AgeUnit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for AgeUnit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            Secs(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Name(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Secs(n) => AgeUnit::from_secs(n).map_err(serde::de::Error::custom),
        }
    }
}

/// How the support count enters the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportScaling {
    /// `supports / (1 + supports)`, keeping the score in [0, 1].
    #[default]
    Saturating,
    /// The raw count.
    Raw,
}

/// Everything the reliability score depends on besides the record itself.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scoring {
    pub weights: ReliabilityWeights,
    pub age_unit: AgeUnit,
    pub support_scaling: SupportScaling,
}

impl Scoring {
    pub fn age(&self, record: &Record, now: Timestamp) -> Result<f64, ConflictError> {
        let secs = now.secs() - record.created_at.secs();
        if secs < 0 {
            return Err(ConflictError::NegativeAge {
                record: record.id.clone(),
            });
        }
        Ok(secs as f64 / self.age_unit.secs())
    }

    fn support_term(&self, supports: u64) -> f64 {
        let s = supports as f64;
        match self.support_scaling {
            SupportScaling::Saturating => s / (1.0 + s),
            SupportScaling::Raw => s,
        }
    }
}

/// Reliability score of one record:
/// `w_recency / (1 + age) + w_source * quality + w_support * support_term`.
pub fn reliability(record: &Record, scoring: &Scoring, now: Timestamp) -> Result<f64, ConflictError> {
    let age = scoring.age(record, now)?;
    let w = &scoring.weights;
    Ok(w.recency * (1.0 / (1.0 + age))
        + w.source * record.source_quality
        + w.support * scoring.support_term(record.supports))
}

/// Outcome of resolving one element.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResolutionReport {
    /// Connected components with at least one contradiction edge, each sorted
    /// by record id; components are ordered by their first id.
    pub components: Vec<Vec<RecordId>>,
    /// One winner per component, in component order.
    pub winners: Vec<RecordId>,
    /// Records whose flag this resolution turns off.
    pub deactivated: Vec<RecordId>,
    /// Previously inactive winners this resolution turns back on.
    pub reactivated: Vec<RecordId>,
}

impl ResolutionReport {
    pub fn changed(&self) -> bool {
        !self.deactivated.is_empty() || !self.reactivated.is_empty()
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so roots are deterministic
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Resolves contradictions in `element` using a caller-supplied conflict
/// predicate. Pure: the returned report says which flags to change.
///
/// The winner of each component maximizes the reliability score; ties go
/// to the younger record, then the higher source quality, then the smaller
/// record id.
pub fn resolve_with<F>(
    element: &Element,
    canonical_keys: &[KeyName],
    scoring: &Scoring,
    now: Timestamp,
    conflict: F,
) -> Result<ResolutionReport, ConflictError>
where
    F: Fn(&str, &Value, &Value) -> bool,
{
    let records: Vec<&Record> = {
        let mut rs: Vec<&Record> = element.records.iter().collect();
        rs.sort_by(|a, b| a.id.cmp(&b.id));
        rs
    };
    let n = records.len();
    let mut sets = DisjointSet::new(n);
    let mut in_edge = vec![false; n];
    for i in 0..n {
        for j in i + 1..n {
            if contradicts_with(records[i], records[j], canonical_keys, &conflict) {
                sets.union(i, j);
                in_edge[i] = true;
                in_edge[j] = true;
            }
        }
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in (0..n).filter(|i| in_edge[*i]) {
        let root = sets.find(i);
        groups.entry(root).or_default().push(i);
    }

    let mut report = ResolutionReport::default();
    for members in groups.values() {
        let mut best: Option<(usize, f64)> = None;
        for &i in members {
            let score = reliability(records[i], scoring, now)?;
            let better = match best {
                None => true,
                Some((b, best_score)) => {
                    let (r, w) = (records[i], records[b]);
                    score > best_score
                        || (score == best_score
                            && (r.created_at > w.created_at
                                || (r.created_at == w.created_at
                                    && (r.source_quality > w.source_quality
                                        || (r.source_quality == w.source_quality && r.id < w.id)))))
                }
            };
            if better {
                best = Some((i, score));
            }
        }
        let (winner, _) = best.expect("component is non-empty");
        for &i in members {
            let r = records[i];
            if i == winner {
                if !r.active {
                    report.reactivated.push(r.id.clone());
                }
            } else if r.active {
                report.deactivated.push(r.id.clone());
            }
        }
        report
            .components
            .push(members.iter().map(|&i| records[i].id.clone()).collect());
        report.winners.push(records[winner].id.clone());
    }
    Ok(report)
}

pub fn resolve(
    element: &Element,
    canonical_keys: &[KeyName],
    policy: &ConflictPolicy,
    scoring: &Scoring,
    now: Timestamp,
) -> Result<ResolutionReport, ConflictError> {
    resolve_with(element, canonical_keys, scoring, now, |k, a, b| policy.value_conflict(k, a, b))
}

/// Applies a report's flag changes to an in-memory element copy.
pub fn apply_report(element: &mut Element, report: &ResolutionReport) {
    let off: BTreeSet<&RecordId> = report.deactivated.iter().collect();
    let on: BTreeSet<&RecordId> = report.reactivated.iter().collect();
    for r in &mut element.records {
        if off.contains(&r.id) {
            r.active = false;
        } else if on.contains(&r.id) {
            r.active = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{ElementId, ExperienceId};

    const DAY: i64 = 86400;

    fn rec(seq: u64, values: &[(&str, Value)], created_at: i64, q: f64, supports: u64) -> Record {
        Record {
            id: RecordId::from_seq(seq),
            values: values.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            created_at: Timestamp(created_at),
            source_quality: q,
            supports,
            active: true,
            experience_id: ExperienceId::from_seq(0),
        }
    }

    fn keys(ks: &[&str]) -> Vec<KeyName> {
        ks.iter().map(|k| k.to_string()).collect()
    }

    fn element(records: Vec<Record>) -> Element {
        Element {
            id: ElementId::from_seq(1),
            label: "Coffee".into(),
            records,
        }
    }

    #[test]
    fn value_conflict_examples() {
        let p = ConflictPolicy::default();
        assert!(!p.value_conflict("attitude", &"like".into(), &"Like".into()));
        assert!(p.value_conflict("attitude", &"like".into(), &"dislike".into()));
        let mut abs = ConflictPolicy::default();
        abs.tolerances.insert("close".into(), Tolerance::Absolute(0.01));
        // |0.5070 - 0.5071| = 1e-4 <= 0.01
        assert!(!abs.value_conflict("close", &Value::Num(0.5070), &Value::Num(0.5071)));
        assert!(p.value_conflict("close", &Value::Num(0.5070), &Value::Num(0.5071)));
        assert!(!p.value_conflict("x", &Value::Num(1.0), &"1".into()));
        assert!(p.value_conflict("b", &Value::Bool(true), &Value::Bool(false)));
    }

    #[test]
    fn time_tolerance_is_opt_in() {
        let a = Value::Time(Timestamp(0));
        let b = Value::Time(Timestamp(100));
        assert!(!ConflictPolicy::default().value_conflict("time", &a, &b));
        let strict = ConflictPolicy {
            time_tolerance_secs: Some(60),
            ..ConflictPolicy::default()
        };
        assert!(strict.value_conflict("time", &a, &b));
        assert!(!strict.value_conflict("time", &a, &Value::Time(Timestamp(60))));
    }

    #[test]
    fn contradicts_examples() {
        let p = ConflictPolicy::default();
        let k = keys(&["attitude", "scenes"]);
        let like = rec(1, &[("attitude", "like".into())], 0, 0.5, 0);
        let winter = rec(2, &[("scenes", "winter".into())], 0, 0.5, 0);
        let dislike = rec(3, &[("attitude", "dislike".into())], 0, 0.5, 0);
        let like_sp = rec(4, &[("attitude", "Like ".into())], 0, 0.5, 0);
        assert!(!contradicts(&like, &winter, &k, &p));
        assert!(contradicts(&like, &dislike, &k, &p));
        assert!(!contradicts(&like_sp, &like, &k, &p));
        // keys outside the canonical set are ignored
        assert!(!contradicts(&like, &dislike, &keys(&["scenes"]), &p));
    }

    #[test]
    fn reliability_examples() {
        let now = Timestamp(10 * DAY);
        let unit = |w: ReliabilityWeights| Scoring {
            weights: w,
            ..Scoring::default()
        };
        let fresh = rec(1, &[], 10 * DAY, 0.3, 7);
        let s = reliability(&fresh, &unit(ReliabilityWeights::new(1.0, 0.0, 0.0).unwrap()), now).unwrap();
        assert_eq!(s, 1.0);

        // 0.5 * 1/(1+1) + 0.3 * 0.8 + 0.2 * 1/(1+1) = 0.25 + 0.24 + 0.10
        let r = rec(2, &[], 9 * DAY, 0.8, 1);
        let s = reliability(&r, &unit(ReliabilityWeights::new(0.5, 0.3, 0.2).unwrap()), now).unwrap();
        assert!((s - 0.59).abs() < 1e-12, "{s}");

        let r = rec(3, &[], 2 * DAY, 0.25, 40);
        let s = reliability(&r, &unit(ReliabilityWeights::new(0.0, 1.0, 0.0).unwrap()), now).unwrap();
        assert_eq!(s, 0.25);

        let future = rec(4, &[], 11 * DAY, 0.5, 0);
        assert!(matches!(
            reliability(&future, &Scoring::default(), now),
            Err(ConflictError::NegativeAge { .. })
        ));
    }

    #[test]
    fn raw_support_scaling_can_exceed_one() {
        let scoring = Scoring {
            weights: ReliabilityWeights::new(0.0, 0.0, 1.0).unwrap(),
            support_scaling: SupportScaling::Raw,
            ..Scoring::default()
        };
        let r = rec(1, &[], 0, 0.5, 3);
        assert_eq!(reliability(&r, &scoring, Timestamp(0)).unwrap(), 3.0);
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(ReliabilityWeights::new(0.5, 0.5, 0.5).is_err());
        assert!(ReliabilityWeights::new(-0.5, 1.0, 0.5).is_err());
        assert!(ReliabilityWeights::default().validate().is_ok());
    }

    #[test]
    fn highest_score_wins_component() {
        // source-only weights make the score equal the quality
        let scoring = Scoring {
            weights: ReliabilityWeights::new(0.0, 1.0, 0.0).unwrap(),
            ..Scoring::default()
        };
        let k = keys(&["attitude"]);
        let el = element(vec![
            rec(1, &[("attitude", "like".into())], 0, 0.5, 0),
            rec(2, &[("attitude", "dislike".into())], 0, 0.9, 0),
            rec(3, &[("attitude", "neutral".into())], 0, 0.5, 0),
        ]);
        let report = resolve(&el, &k, &ConflictPolicy::default(), &scoring, Timestamp(0)).unwrap();
        assert_eq!(report.winners, vec![RecordId::from_seq(2)]);
        assert_eq!(report.deactivated, vec![RecordId::from_seq(1), RecordId::from_seq(3)]);
    }

    #[test]
    fn ties_prefer_younger_record() {
        let scoring = Scoring {
            weights: ReliabilityWeights::new(0.0, 1.0, 0.0).unwrap(),
            ..Scoring::default()
        };
        let now = 10 * DAY;
        let el = element(vec![
            rec(1, &[("attitude", "like".into())], now - 5 * DAY, 0.5, 0),
            rec(2, &[("attitude", "dislike".into())], now - 2 * DAY, 0.5, 0),
        ]);
        let report = resolve(&el, &keys(&["attitude"]), &ConflictPolicy::default(), &scoring, Timestamp(now)).unwrap();
        assert_eq!(report.winners, vec![RecordId::from_seq(2)]);
    }

    #[test]
    fn ties_then_quality_then_id() {
        let scoring = Scoring {
            weights: ReliabilityWeights::new(1.0, 0.0, 0.0).unwrap(),
            ..Scoring::default()
        };
        let k = keys(&["attitude"]);
        let el = element(vec![
            rec(1, &[("attitude", "like".into())], 0, 0.4, 0),
            rec(2, &[("attitude", "dislike".into())], 0, 0.6, 0),
        ]);
        let r = resolve(&el, &k, &ConflictPolicy::default(), &scoring, Timestamp(0)).unwrap();
        assert_eq!(r.winners, vec![RecordId::from_seq(2)]);
        let el = element(vec![
            rec(5, &[("attitude", "like".into())], 0, 0.6, 0),
            rec(2, &[("attitude", "dislike".into())], 0, 0.6, 0),
        ]);
        let r = resolve(&el, &k, &ConflictPolicy::default(), &scoring, Timestamp(0)).unwrap();
        assert_eq!(r.winners, vec![RecordId::from_seq(2)]);
    }

    #[test]
    fn no_conflicts_no_changes() {
        let el = element(vec![
            rec(1, &[("attitude", "like".into())], 0, 0.4, 0),
            rec(2, &[("attitude", "like".into())], 0, 0.6, 0),
            rec(3, &[("scenes", "winter".into())], 0, 0.6, 0),
        ]);
        let r = resolve(&el, &keys(&["attitude", "scenes"]), &ConflictPolicy::default(), &Scoring::default(), Timestamp(0)).unwrap();
        assert!(r.components.is_empty());
        assert!(!r.changed());
    }

    #[test]
    fn resolve_is_idempotent_and_reactivates_winners() {
        let scoring = Scoring {
            weights: ReliabilityWeights::new(0.0, 1.0, 0.0).unwrap(),
            ..Scoring::default()
        };
        let k = keys(&["attitude"]);
        let mut low = rec(1, &[("attitude", "like".into())], 0, 0.9, 0);
        low.active = false;
        let mut el = element(vec![low, rec(2, &[("attitude", "dislike".into())], 0, 0.1, 0)]);
        let first = resolve(&el, &k, &ConflictPolicy::default(), &scoring, Timestamp(0)).unwrap();
        assert_eq!(first.reactivated, vec![RecordId::from_seq(1)]);
        assert_eq!(first.deactivated, vec![RecordId::from_seq(2)]);
        apply_report(&mut el, &first);
        let second = resolve(&el, &k, &ConflictPolicy::default(), &scoring, Timestamp(0)).unwrap();
        assert!(!second.changed());
        assert_eq!(second.winners, first.winners);
    }

    #[test]
    fn age_unit_parsing() {
        assert_eq!("days".parse::<AgeUnit>().unwrap(), AgeUnit::DAYS);
        assert_eq!("3600".parse::<AgeUnit>().unwrap(), AgeUnit::HOURS);
        assert!("fortnights".parse::<AgeUnit>().is_err());
        assert!("-1".parse::<AgeUnit>().is_err());
    }
}
