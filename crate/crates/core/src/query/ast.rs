//! Structured query AST and its canonical text form.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::value::{KeyName, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketRef {
    /// Every bucket in the pool (`FROM *`).
    All,
    /// Bucket id or name.
    Named(String),
}

/// Per-record attributes addressable like keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pseudo {
    Bucket,
    Schema,
    Element,
    Record,
    CreatedAt,
    Active,
}

impl Pseudo {
    pub const ALL: [Pseudo; 6] = [
        Pseudo::Bucket,
        Pseudo::Schema,
        Pseudo::Element,
        Pseudo::Record,
        Pseudo::CreatedAt,
        Pseudo::Active,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pseudo::Bucket => "bucket",
            Pseudo::Schema => "schema",
            Pseudo::Element => "element",
            Pseudo::Record => "record",
            Pseudo::CreatedAt => "created_at",
            Pseudo::Active => "active",
        }
    }

    pub fn from_name(name: &str) -> Option<Pseudo> {
        Pseudo::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    Key(KeyName),
    Pseudo(Pseudo),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Compare(CmpOp, Value),
    /// Case-insensitive substring test on string values.
    Contains(String),
    /// Inclusive on both ends.
    Between(Value, Value),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub column: Column,
    pub condition: Condition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFn {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFn {
    pub const ALL: [AggFn; 5] = [AggFn::Count, AggFn::Sum, AggFn::Avg, AggFn::Min, AggFn::Max];

    pub fn name(self) -> &'static str {
        match self {
            AggFn::Count => "count",
            AggFn::Sum => "sum",
            AggFn::Avg => "avg",
            AggFn::Min => "min",
            AggFn::Max => "max",
        }
    }

    pub fn from_name(name: &str) -> Option<AggFn> {
        AggFn::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectItem {
    Column(Column),
    /// `None` argument is `count(*)`; only count accepts it.
    Aggregate(AggFn, Option<Column>),
}

impl SelectItem {
    pub fn is_aggregate(&self) -> bool {
        matches!(self, SelectItem::Aggregate(..))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredQuery {
    pub bucket: BucketRef,
    pub schema_pattern: Option<String>,
    pub element_pattern: Option<String>,
    pub filters: Vec<Predicate>,
    pub group_by: Vec<Column>,
    pub select: Vec<SelectItem>,
    pub include_inactive: bool,
}

impl StructuredQuery {
    pub fn has_aggregates(&self) -> bool {
        self.select.iter().any(SelectItem::is_aggregate)
    }

    /// Every key the query mentions, in order of first appearance.
    pub fn keys(&self) -> Vec<&KeyName> {
        let selected = self.select.iter().filter_map(|s| match s {
            SelectItem::Column(c) | SelectItem::Aggregate(_, Some(c)) => Some(c),
            SelectItem::Aggregate(_, None) => None,
        });
        let mut out: Vec<&KeyName> = Vec::new();
        for c in self.filters.iter().map(|p| &p.column).chain(&self.group_by).chain(selected) {
            if let Column::Key(k) = c {
                if !out.contains(&k) {
                    out.push(k);
                }
            }
        }
        out
    }
}

pub(crate) const KEYWORDS: &[&str] = &[
    "from", "schema", "element", "where", "and", "group", "by", "select", "include", "inactive", "between",
    "contains", "true", "false", "null",
];

pub(crate) fn is_plain_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        && !KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(s))
}

pub(crate) fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str, quote: char) -> fmt::Result {
    write!(f, "{quote}")?;
    for c in s.chars() {
        match c {
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            '\r' => f.write_str("\\r")?,
            c if c == quote => write!(f, "\\{c}")?,
            c => write!(f, "{c}")?,
        }
    }
    write!(f, "{quote}")
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Column::Pseudo(p) => write!(f, "${}", p.name()),
            Column::Key(k) if is_plain_ident(k) => f.write_str(k),
            Column::Key(k) => write_quoted(f, k, '`'),
        }
    }
}

/// Literal syntax: strings double-quoted, numbers in shortest round-trip
/// form, timestamps as `@<rfc3339>`, booleans bare.
pub(crate) struct Literal<'a>(pub &'a Value);

impl fmt::Display for Literal<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Value::Null => f.write_str("null"),
            Value::Str(s) => write_quoted(f, s, '"'),
            Value::Num(n) => write!(f, "{n}"),
            Value::Time(t) => write!(f, "@{}", t.to_rfc3339()),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ", self.column)?;
        match &self.condition {
            Condition::Compare(op, v) => write!(f, "{} {}", op.symbol(), Literal(v)),
            Condition::Contains(s) => {
                f.write_str("CONTAINS ")?;
                write_quoted(f, s, '"')
            }
            Condition::Between(lo, hi) => write!(f, "BETWEEN {} AND {}", Literal(lo), Literal(hi)),
        }
    }
}

impl fmt::Display for SelectItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectItem::Column(c) => write!(f, "{c}"),
            SelectItem::Aggregate(func, None) => write!(f, "{}(*)", func.name()),
            SelectItem::Aggregate(func, Some(c)) => write!(f, "{}({c})", func.name()),
        }
    }
}

impl fmt::Display for StructuredQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FROM ")?;
        match &self.bucket {
            BucketRef::All => f.write_str("*")?,
            BucketRef::Named(n) if is_plain_ident(n) => f.write_str(n)?,
            BucketRef::Named(n) => write_quoted(f, n, '"')?,
        }
        if let Some(p) = &self.schema_pattern {
            f.write_str(" SCHEMA ")?;
            write_quoted(f, p, '"')?;
        }
        if let Some(p) = &self.element_pattern {
            f.write_str(" ELEMENT ")?;
            write_quoted(f, p, '"')?;
        }
        for (i, p) in self.filters.iter().enumerate() {
            f.write_str(if i == 0 { " WHERE " } else { " AND " })?;
            write!(f, "{p}")?;
        }
        for (i, c) in self.group_by.iter().enumerate() {
            f.write_str(if i == 0 { " GROUP BY " } else { ", " })?;
            write!(f, "{c}")?;
        }
        for (i, s) in self.select.iter().enumerate() {
            f.write_str(if i == 0 { " SELECT " } else { ", " })?;
            write!(f, "{s}")?;
        }
        if self.include_inactive {
            f.write_str(" INCLUDE INACTIVE")?;
        }
        Ok(())
    }
}
