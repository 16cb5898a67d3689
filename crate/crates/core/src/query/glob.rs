//! Case-insensitive glob matching for meta and label filters.
//!
//! `*` matches any run of characters, `?` exactly one, and `\` escapes the
//! next character.

#[derive(Debug, Clone, PartialEq)]
enum Part {
    Lit(char),
    One,
    Any,
}

fn compile(pattern: &str) -> Vec<Part> {
    let mut out = Vec::new();
    let mut chars = pattern.chars();
    while let Some(c) = chars.next() {
        out.push(match c {
            '*' => Part::Any,
            '?' => Part::One,
            '\\' => match chars.next() {
                Some(n) => Part::Lit(n),
                None => Part::Lit('\\'),
            },
            c => Part::Lit(c),
        });
    }
    out
}

fn fold(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

/// Escapes `text` so it matches only itself.
pub fn glob_escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if matches!(c, '*' | '?' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

pub fn glob_match(pattern: &str, text: &str) -> bool {
    let parts = compile(pattern);
    let text: Vec<char> = text.chars().map(fold).collect();
    // iterative matcher with single-star backtracking
    let (mut p, mut t) = (0usize, 0usize);
    let mut star: Option<(usize, usize)> = None;
    while t < text.len() {
        match parts.get(p) {
            Some(Part::Any) => {
                star = Some((p, t));
                p += 1;
            }
            Some(Part::One) => {
                p += 1;
                t += 1;
            }
            Some(Part::Lit(c)) if fold(*c) == text[t] => {
                p += 1;
                t += 1;
            }
            _ => match star {
                Some((sp, st)) => {
                    p = sp + 1;
                    t = st + 1;
                    star = Some((sp, st + 1));
                }
                None => return false,
            },
        }
    }
    parts[p..].iter().all(|x| *x == Part::Any)
}
