//! Tokenizer and recursive-descent parser for the query language.
//!
//! ```text
//! query   := FROM bucket [SCHEMA str] [ELEMENT str] [WHERE pred {AND pred}]
//!            [GROUP BY col {, col}] SELECT item {, item} [INCLUDE INACTIVE]
//! bucket  := ident | str | *
//! pred    := col (cmp lit | CONTAINS str | BETWEEN lit AND lit)
//! col     := ident | `quoted key` | $pseudo
//! item    := col | fn ( col | * )
//! lit     := str | number | @timestamp | true | false | null
//! ```
//!
//! Keywords are case-insensitive. Positions in errors are byte offsets.

use super::ast::{AggFn, BucketRef, CmpOp, Column, Condition, Predicate, Pseudo, SelectItem, StructuredQuery};
use super::QueryError;
use crate::value::{Timestamp, Value};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Backtick(String),
    Num(f64),
    Time(Timestamp),
    Dollar(String),
    Star,
    Comma,
    LParen,
    RParen,
    Cmp(CmpOp),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    pos: usize,
}

fn syntax(position: usize, expected: &str) -> QueryError {
    QueryError::Syntax {
        position,
        expected: expected.to_string(),
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.src[self.pos..].chars();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(&f) {
            self.bump();
        }
        &self.src[start..self.pos]
    }

    fn quoted(&mut self, quote: char, what: &str) -> Result<String, QueryError> {
        let start = self.pos;
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(syntax(start, &format!("closing {what}"))),
                Some(c) if c == quote => return Ok(out),
                Some('\\') => {
                    let at = self.pos;
                    match self.bump() {
                        Some('n') => out.push('\n'),
                        Some('t') => out.push('\t'),
                        Some('r') => out.push('\r'),
                        Some(c @ ('\\' | '"' | '`')) => out.push(c),
                        _ => return Err(syntax(at, "escape sequence")),
                    }
                }
                Some(c) => out.push(c),
            }
        }
    }

    fn number(&mut self) -> Result<f64, QueryError> {
        let start = self.pos;
        if self.peek() == Some('-') {
            self.bump();
        }
        let digits = |c: char| c.is_ascii_digit();
        if self.take_while(digits).is_empty() {
            return Err(syntax(start, "number"));
        }
        if self.peek() == Some('.') && self.peek2().is_some_and(digits) {
            self.bump();
            self.take_while(digits);
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.bump();
            if matches!(self.peek(), Some('+' | '-')) {
                self.bump();
            }
            if self.take_while(digits).is_empty() {
                self.pos = save;
            }
        }
        let text = &self.src[start..self.pos];
        match text.parse::<f64>() {
            Ok(n) if n.is_finite() => Ok(n),
            _ => Err(syntax(start, "finite number")),
        }
    }

    fn tokens(mut self) -> Result<Vec<Spanned>, QueryError> {
        let mut out = Vec::new();
        loop {
            self.take_while(char::is_whitespace);
            let pos = self.pos;
            let Some(c) = self.peek() else {
                return Ok(out);
            };
            let tok = match c {
                '"' => Tok::Str(self.quoted('"', "quote")?),
                '`' => Tok::Backtick(self.quoted('`', "backtick")?),
                '*' => {
                    self.bump();
                    Tok::Star
                }
                ',' => {
                    self.bump();
                    Tok::Comma
                }
                '(' => {
                    self.bump();
                    Tok::LParen
                }
                ')' => {
                    self.bump();
                    Tok::RParen
                }
                '=' => {
                    self.bump();
                    if self.peek() == Some('=') {
                        self.bump();
                    }
                    Tok::Cmp(CmpOp::Eq)
                }
                '≠' => {
                    self.bump();
                    Tok::Cmp(CmpOp::Ne)
                }
                '≤' => {
                    self.bump();
                    Tok::Cmp(CmpOp::Le)
                }
                '≥' => {
                    self.bump();
                    Tok::Cmp(CmpOp::Ge)
                }
                '!' => {
                    self.bump();
                    if self.bump() != Some('=') {
                        return Err(syntax(pos, "!="));
                    }
                    Tok::Cmp(CmpOp::Ne)
                }
                '<' | '>' => {
                    self.bump();
                    let eq = self.peek() == Some('=');
                    if eq {
                        self.bump();
                    }
                    match (c, eq) {
                        ('<', false) if self.peek() == Some('>') => {
                            self.bump();
                            Tok::Cmp(CmpOp::Ne)
                        }
                        ('<', false) => Tok::Cmp(CmpOp::Lt),
                        ('<', true) => Tok::Cmp(CmpOp::Le),
                        (_, false) => Tok::Cmp(CmpOp::Gt),
                        (_, true) => Tok::Cmp(CmpOp::Ge),
                    }
                }
                '@' => {
                    self.bump();
                    let raw = self.take_while(|c| !c.is_whitespace() && !matches!(c, ',' | ')' | '('));
                    match Timestamp::parse(raw) {
                        Some(t) => Tok::Time(t),
                        None => return Err(syntax(pos + 1, "timestamp")),
                    }
                }
                '$' => {
                    self.bump();
                    let name = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
                    if name.is_empty() {
                        return Err(syntax(pos + 1, "pseudo-column name"));
                    }
                    Tok::Dollar(name.to_string())
                }
                '-' | '0'..='9' => Tok::Num(self.number()?),
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let w = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
                    Tok::Word(w.to_string())
                }
                _ => return Err(syntax(pos, "token")),
            };
            out.push(Spanned { tok, pos });
        }
    }
}

struct Parser {
    toks: Vec<Spanned>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn pos(&self) -> usize {
        self.toks.get(self.idx).map_or(self.end, |t| t.pos)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|t| &t.tok)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.idx).map(|t| t.tok.clone());
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        let hit = self.at_keyword(kw);
        if hit {
            self.idx += 1;
        }
        hit
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(syntax(self.pos(), &kw.to_uppercase()))
        }
    }

    fn string(&mut self, what: &str) -> Result<String, QueryError> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Str(s)) => Ok(s),
            _ => Err(syntax(pos, what)),
        }
    }

    fn bucket(&mut self) -> Result<BucketRef, QueryError> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Star) => Ok(BucketRef::All),
            Some(Tok::Str(s)) => Ok(BucketRef::Named(s)),
            Some(Tok::Word(w)) if !is_keyword(&w) => Ok(BucketRef::Named(w)),
            _ => Err(syntax(pos, "bucket")),
        }
    }

    fn column(&mut self) -> Result<Column, QueryError> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Word(w)) if !is_keyword(&w) => Ok(Column::Key(w)),
            Some(Tok::Backtick(k)) if !k.is_empty() => Ok(Column::Key(k)),
            Some(Tok::Dollar(name)) => Pseudo::from_name(&name)
                .map(Column::Pseudo)
                .ok_or_else(|| syntax(pos + 1, "pseudo-column ($bucket, $schema, $element, $record, $created_at, $active)")),
            _ => Err(syntax(pos, "key")),
        }
    }

    fn literal(&mut self) -> Result<Value, QueryError> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Str(s)) => Ok(Value::Str(s)),
            Some(Tok::Num(n)) => Ok(Value::Num(n)),
            Some(Tok::Time(t)) => Ok(Value::Time(t)),
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("true") => Ok(Value::Bool(true)),
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("false") => Ok(Value::Bool(false)),
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("null") => Ok(Value::Null),
            _ => Err(syntax(pos, "literal")),
        }
    }

    fn predicate(&mut self) -> Result<Predicate, QueryError> {
        let column = self.column()?;
        let pos = self.pos();
        let condition = match self.next() {
            Some(Tok::Cmp(op)) => Condition::Compare(op, self.literal()?),
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("contains") => Condition::Contains(self.string("string")?),
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("between") => {
                let lo = self.literal()?;
                self.expect_keyword("and")?;
                Condition::Between(lo, self.literal()?)
            }
            _ => return Err(syntax(pos, "operator")),
        };
        Ok(Predicate { column, condition })
    }

    fn select_item(&mut self) -> Result<SelectItem, QueryError> {
        if let (Some(Tok::Word(w)), Some(Tok::LParen)) = (self.peek(), self.toks.get(self.idx + 1).map(|t| &t.tok)) {
            let pos = self.pos();
            let Some(func) = AggFn::from_name(w) else {
                return Err(syntax(pos, "aggregate function (count, sum, avg, min, max)"));
            };
            self.idx += 2;
            let arg = if matches!(self.peek(), Some(Tok::Star)) {
                let star = self.pos();
                self.idx += 1;
                if func != AggFn::Count {
                    return Err(syntax(star, "key"));
                }
                None
            } else {
                Some(self.column()?)
            };
            let close = self.pos();
            if self.next() != Some(Tok::RParen) {
                return Err(syntax(close, ")"));
            }
            return Ok(SelectItem::Aggregate(func, arg));
        }
        self.column().map(SelectItem::Column)
    }

    fn query(&mut self) -> Result<StructuredQuery, QueryError> {
        self.expect_keyword("from")?;
        let bucket = self.bucket()?;
        let schema_pattern = if self.eat_keyword("schema") {
            Some(self.string("schema pattern")?)
        } else {
            None
        };
        let element_pattern = if self.eat_keyword("element") {
            Some(self.string("element pattern")?)
        } else {
            None
        };
        let mut filters = Vec::new();
        if self.eat_keyword("where") {
            filters.push(self.predicate()?);
            while self.eat_keyword("and") {
                filters.push(self.predicate()?);
            }
        }
        let mut group_by = Vec::new();
        if self.eat_keyword("group") {
            self.expect_keyword("by")?;
            group_by.push(self.column()?);
            while matches!(self.peek(), Some(Tok::Comma)) {
                self.idx += 1;
                group_by.push(self.column()?);
            }
        }
        self.expect_keyword("select")?;
        let mut select = Vec::new();
        let mut select_pos = vec![self.pos()];
        select.push(self.select_item()?);
        while matches!(self.peek(), Some(Tok::Comma)) {
            self.idx += 1;
            select_pos.push(self.pos());
            select.push(self.select_item()?);
        }
        let include_inactive = if self.eat_keyword("include") {
            self.expect_keyword("inactive")?;
            true
        } else {
            false
        };
        if self.idx < self.toks.len() {
            return Err(syntax(self.pos(), "end of query"));
        }
        let q = StructuredQuery {
            bucket,
            schema_pattern,
            element_pattern,
            filters,
            group_by,
            select,
            include_inactive,
        };
        if q.has_aggregates() || !q.group_by.is_empty() {
            for (item, pos) in q.select.iter().zip(select_pos) {
                if let SelectItem::Column(c) = item {
                    if !q.group_by.contains(c) {
                        return Err(QueryError::InvalidSelect {
                            position: pos,
                            column: c.to_string(),
                        });
                    }
                }
            }
        }
        Ok(q)
    }
}

fn is_keyword(w: &str) -> bool {
    super::ast::KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(w))
}

/// Parses query text. Never panics, whatever the input.
pub fn parse(text: &str) -> Result<StructuredQuery, QueryError> {
    let toks = Lexer { src: text, pos: 0 }.tokens()?;
    if toks.is_empty() {
        return Err(syntax(0, "FROM"));
    }
    Parser {
        toks,
        idx: 0,
        end: text.len(),
    }
    .query()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_pos(text: &str) -> (usize, String) {
        match parse(text) {
            Err(QueryError::Syntax { position, expected }) => (position, expected),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn coffee_query() {
        let q = parse(
            r#"FROM user_events SCHEMA "Drink" ELEMENT "Coffee" WHERE time BETWEEN @2024-06-03 AND @2024-06-09T23:59:59Z SELECT sum(cups)"#,
        )
        .unwrap();
        assert_eq!(q.bucket, BucketRef::Named("user_events".into()));
        assert_eq!(q.schema_pattern.as_deref(), Some("Drink"));
        assert_eq!(q.element_pattern.as_deref(), Some("Coffee"));
        assert_eq!(q.filters.len(), 1);
        assert_eq!(
            q.filters[0].condition,
            Condition::Between(
                Value::Time(Timestamp::from_ymd(2024, 6, 3).unwrap()),
                Value::Time(Timestamp::parse("2024-06-09T23:59:59Z").unwrap())
            )
        );
        assert_eq!(q.select, vec![SelectItem::Aggregate(AggFn::Sum, Some(Column::Key("cups".into())))]);
    }

    #[test]
    fn empty_input_expects_from() {
        assert_eq!(err_pos(""), (0, "FROM".into()));
        assert_eq!(err_pos("   "), (0, "FROM".into()));
        assert_eq!(err_pos("SELECT x"), (0, "FROM".into()));
    }

    #[test]
    fn error_positions() {
        assert_eq!(err_pos("FROM b WHERE x ~ 1 SELECT x").0, 15);
        assert_eq!(err_pos("FROM b SELECT").1, "key");
        assert_eq!(err_pos("FROM b SELECT x extra").1, "end of query");
        assert_eq!(err_pos("FROM b WHERE x = SELECT y").1, "literal");
        assert_eq!(err_pos("FROM b SELECT sum(*)").1, "key");
        assert_eq!(err_pos("FROM b SELECT median(x)").1, "aggregate function (count, sum, avg, min, max)");
        assert_eq!(err_pos("FROM \"b SELECT x").1, "closing quote");
        assert_eq!(err_pos("FROM b WHERE t > @yesterday SELECT x").0, 18);
    }

    #[test]
    fn operators_and_literals() {
        let q = parse("from b where a != 1 and b ≠ -2.5e3 and c <= 3 and d ≥ true and e <> \"x\\\"y\" and `odd key` contains \"z\" and f = null select a, $created_at include inactive").unwrap();
        let ops: Vec<_> = q.filters.iter().map(|p| p.condition.clone()).collect();
        assert_eq!(ops[0], Condition::Compare(CmpOp::Ne, Value::Num(1.0)));
        assert_eq!(ops[1], Condition::Compare(CmpOp::Ne, Value::Num(-2500.0)));
        assert_eq!(ops[2], Condition::Compare(CmpOp::Le, Value::Num(3.0)));
        assert_eq!(ops[3], Condition::Compare(CmpOp::Ge, Value::Bool(true)));
        assert_eq!(ops[4], Condition::Compare(CmpOp::Ne, Value::Str("x\"y".into())));
        assert_eq!(q.filters[5].column, Column::Key("odd key".into()));
        assert_eq!(ops[6], Condition::Compare(CmpOp::Eq, Value::Null));
        assert!(q.include_inactive);
        assert_eq!(q.select[1], SelectItem::Column(Column::Pseudo(Pseudo::CreatedAt)));
    }

    #[test]
    fn bare_columns_must_be_grouped_with_aggregates() {
        assert!(matches!(
            parse("FROM b SELECT x, count(*)"),
            Err(QueryError::InvalidSelect { position: 14, .. })
        ));
        assert!(parse("FROM b GROUP BY x SELECT x, count(*)").is_ok());
        assert!(parse("FROM * SELECT count(*)").is_ok());
    }

    #[test]
    fn printing_round_trips() {
        for text in [
            r#"FROM user_events SCHEMA "Dr*nk" ELEMENT "Coffee" WHERE time BETWEEN @2024-06-03T00:00:00Z AND @2024-06-09T23:59:59Z SELECT sum(cups)"#,
            r#"FROM "User Events" WHERE `select` = "a\\b" AND x CONTAINS "q" GROUP BY $element, y SELECT $element, y, count(*), avg(x) INCLUDE INACTIVE"#,
            "FROM * WHERE n > 0.1 AND m < -3 SELECT n",
        ] {
            let q = parse(text).unwrap();
            assert_eq!(q.to_string(), text);
            assert_eq!(parse(&q.to_string()).unwrap(), q);
        }
    }
}
