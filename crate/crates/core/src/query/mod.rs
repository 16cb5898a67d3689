//! The structured query language over records, and the calculator.

pub mod ast;
pub mod calc;
pub mod eval;
pub mod glob;
pub mod parser;
pub mod table;

use thiserror::Error;

pub use ast::{AggFn, BucketRef, CmpOp, Column, Condition, Predicate, Pseudo, SelectItem, StructuredQuery};
pub use calc::{calculate, eval_str, parse_calc, CalcError, CalcExpr, CalcValue};
pub use eval::evaluate;
pub use glob::{glob_escape, glob_match};
pub use parser::parse;
pub use table::ResultTable;

use crate::store::MemoryPool;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("syntax error at {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("column {column} at {position} must appear in GROUP BY when aggregating")]
    InvalidSelect { position: usize, column: String },
    #[error("unknown bucket `{0}`")]
    UnknownBucket(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("type mismatch on {0}")]
    TypeMismatch(String),
}

impl QueryError {
    pub fn code(&self) -> &'static str {
        match self {
            QueryError::Syntax { .. } => "SyntaxError",
            QueryError::InvalidSelect { .. } => "InvalidSelect",
            QueryError::UnknownBucket(_) => "UnknownBucket",
            QueryError::UnknownKey(_) => "UnknownKey",
            QueryError::TypeMismatch(_) => "TypeMismatch",
        }
    }
}

/// Parses and evaluates query text against a pool.
pub fn run(text: &str, pool: &MemoryPool) -> Result<ResultTable, QueryError> {
    evaluate(&parse(text)?, pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{BucketDef, NewExperience, NewRecord, Store};
    use crate::value::{Timestamp, Value};

    fn fixture() -> Store {
        let store = Store::in_memory();
        let b = store
            .put_bucket(BucketDef {
                name: "user_events".into(),
                ..BucketDef::new("User Events", &["topic", "time"])
            })
            .unwrap();
        let mut def = BucketDef::new("User Trait", &["topic", "attitude"]);
        def.name = "user_trait".into();
        let t = store.put_bucket(def).unwrap();
        let exp = store
            .put_experience(NewExperience {
                raw_text: "log".into(),
                received_at: Timestamp(0),
                source_tag: "t".into(),
                source_quality: 1.0,
            })
            .unwrap();
        let drink = store.create_schema(&b, "Drink", vec![], Timestamp(0)).unwrap();
        let coffee = store.create_element(&b, &drink, "Coffee").unwrap();
        let tea = store.create_element(&b, &drink, "Tea").unwrap();
        for (el, day, cups) in [(&coffee, 3, 2.0), (&coffee, 4, 1.0), (&coffee, 5, 3.0), (&tea, 4, 5.0)] {
            let values = [
                ("topic".to_string(), Value::from("drink")),
                ("time".to_string(), Value::Time(Timestamp::from_ymd(2024, 6, day).unwrap())),
                ("cups".to_string(), Value::Num(cups)),
            ];
            store
                .insert_record(
                    &b,
                    &drink,
                    el,
                    NewRecord {
                        values: values.into_iter().collect(),
                        created_at: Timestamp(day as i64),
                        source_quality: 1.0,
                        supports: 0,
                        experience_id: exp.clone(),
                    },
                )
                .unwrap();
        }
        let prefs = store.create_schema(&t, "Drink", vec![], Timestamp(0)).unwrap();
        let c = store.create_element(&t, &prefs, "Coffee").unwrap();
        let mut ids = Vec::new();
        for att in ["like", "dislike"] {
            let values = [("topic".to_string(), Value::from("coffee")), ("attitude".to_string(), Value::from(att))];
            ids.push(
                store
                    .insert_record(
                        &t,
                        &prefs,
                        &c,
                        NewRecord {
                            values: values.into_iter().collect(),
                            created_at: Timestamp(1),
                            source_quality: 1.0,
                            supports: 0,
                            experience_id: exp.clone(),
                        },
                    )
                    .unwrap(),
            );
        }
        store.set_active(&t, &prefs, &c, &ids[1], false).unwrap();
        store
    }

    #[test]
    fn sum_of_cups() {
        let s = fixture();
        let t = run(r#"FROM user_events SCHEMA "Drink" ELEMENT "Coffee" SELECT sum(cups)"#, &s.pool()).unwrap();
        assert_eq!(t.scalar(), Some(&Value::Num(6.0)));
        assert_eq!(t.provenance[0].len(), 3);
        let t = run(
            r#"FROM user_events ELEMENT "coffee" WHERE time BETWEEN @2024-06-04 AND @2024-06-05 SELECT sum(cups), count(*)"#,
            &s.pool(),
        )
        .unwrap();
        assert_eq!(t.rows, vec![vec![Value::Num(4.0), Value::Num(2.0)]]);
    }

    #[test]
    fn empty_aggregates() {
        let s = fixture();
        let t = run("FROM user_events WHERE cups > 100 SELECT count(*), count(cups), avg(cups), sum(cups), min(cups)", &s.pool()).unwrap();
        assert_eq!(t.rows, vec![vec![Value::Num(0.0), Value::Num(0.0), Value::Null, Value::Null, Value::Null]]);
        assert_eq!(t.provenance, vec![Vec::<crate::ids::RecordId>::new()]);
    }

    #[test]
    fn inactive_records_hidden_by_default() {
        let s = fixture();
        let t = run("FROM user_trait SELECT attitude", &s.pool()).unwrap();
        assert_eq!(t.rows, vec![vec![Value::from("like")]]);
        let t = run("FROM user_trait SELECT attitude, $active INCLUDE INACTIVE", &s.pool()).unwrap();
        assert_eq!(t.rows.len(), 2);
    }

    #[test]
    fn grouping_is_sorted() {
        let s = fixture();
        let t = run("FROM user_events GROUP BY $element SELECT $element, sum(cups), max(time)", &s.pool()).unwrap();
        assert_eq!(t.columns, ["$element", "sum(cups)", "max(time)"]);
        assert_eq!(t.rows[0][0], Value::from("Coffee"));
        assert_eq!(t.rows[0][1], Value::Num(6.0));
        assert_eq!(t.rows[1], vec![Value::from("Tea"), Value::Num(5.0), Value::Time(Timestamp::from_ymd(2024, 6, 4).unwrap())]);
        let text = t.to_text();
        assert!(text.starts_with("$element  sum(cups)  max(time)"));
        assert!(text.ends_with("(2 rows)"));
    }

    #[test]
    fn validation_errors() {
        let s = fixture();
        let p = s.pool();
        assert_eq!(run("FROM nope SELECT x", &p), Err(QueryError::UnknownBucket("nope".into())));
        assert_eq!(run("FROM user_events SELECT mood", &p), Err(QueryError::UnknownKey("mood".into())));
        assert_eq!(run("FROM user_events WHERE cups = \"two\" SELECT cups", &p), Err(QueryError::TypeMismatch("cups".into())));
        assert_eq!(run("FROM user_events SELECT sum(topic)", &p), Err(QueryError::TypeMismatch("topic".into())));
        assert_eq!(run("FROM * WHERE $active = 1 SELECT topic", &p), Err(QueryError::TypeMismatch("$active".into())));
        // the bucket can be named by its display name too
        assert!(run("FROM \"User Events\" SELECT count(*)", &p).is_ok());
    }
}
