//! Tolerant surface parser for SELECT statements: a SQL-aware tokenizer
//! plus feature counting. No AST — just the syntactic features the
//! component-difficulty policy scores: aggregates, grouping, ordering, set
//! operators, nested subqueries, joins and the top-level select-list width.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SqlParseError {
    #[error("empty statement")]
    Empty,
    #[error("statement must start with SELECT or WITH, found {0:?}")]
    NotSelect(String),
    #[error("unterminated {0} starting at byte {1}")]
    Unterminated(&'static str, usize),
    #[error("unbalanced parenthesis at byte {0}")]
    Unbalanced(usize),
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Word(String),
    Punct(char),
    Literal,
}

fn tokenize(sql: &str) -> Result<Vec<Token>, SqlParseError> {
    let bytes = sql.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            c if c.is_ascii_whitespace() => i += 1,
            '-' if bytes.get(i + 1) == Some(&b'-') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            '/' if bytes.get(i + 1) == Some(&b'*') => {
                let start = i;
                i += 2;
                loop {
                    if i + 1 >= bytes.len() {
                        return Err(SqlParseError::Unterminated("block comment", start));
                    }
                    if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                        i += 2;
                        break;
                    }
                    i += 1;
                }
            }
            '\'' | '"' | '`' => {
                let quote = bytes[i];
                let start = i;
                i += 1;
                loop {
                    if i >= bytes.len() {
                        let what = if quote == b'\'' { "string literal" } else { "quoted identifier" };
                        return Err(SqlParseError::Unterminated(what, start));
                    }
                    if bytes[i] == quote {
                        // Doubled quotes escape.
                        if bytes.get(i + 1) == Some(&quote) {
                            i += 2;
                            continue;
                        }
                        i += 1;
                        break;
                    }
                    i += 1;
                }
                tokens.push(Token::Literal);
            }
            '[' => {
                let start = i;
                while i < bytes.len() && bytes[i] != b']' {
                    i += 1;
                }
                if i >= bytes.len() {
                    return Err(SqlParseError::Unterminated("bracketed identifier", start));
                }
                i += 1;
                tokens.push(Token::Literal);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() {
                    let c = bytes[i] as char;
                    if c.is_ascii_alphanumeric() || c == '_' || c == '$' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                tokens.push(Token::Word(sql[start..i].to_ascii_uppercase()));
            }
            c if c.is_ascii_digit() => {
                while i < bytes.len() {
                    let c = bytes[i] as char;
                    if c.is_ascii_alphanumeric() || c == '.' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                tokens.push(Token::Literal);
            }
            c => {
                tokens.push(Token::Punct(c));
                i += 1;
            }
        }
    }
    Ok(tokens)
}

/// Syntactic features counted across the whole statement, subqueries
/// included.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SqlFeatures {
    /// Aggregate function calls (COUNT, SUM, AVG, MIN, MAX, TOTAL,
    /// GROUP_CONCAT followed by an opening parenthesis).
    pub aggregates: usize,
    pub has_group_by: bool,
    pub has_order_by: bool,
    /// UNION / INTERSECT / EXCEPT occurrences.
    pub set_operations: usize,
    /// SELECT keywords inside parentheses (subqueries and CTE bodies).
    pub nested_subqueries: usize,
    /// JOIN keywords.
    pub joins: usize,
    /// Items in the outermost select list.
    pub selected_columns: usize,
}

const AGGREGATES: [&str; 7] = ["COUNT", "SUM", "AVG", "MIN", "MAX", "TOTAL", "GROUP_CONCAT"];

/// Parses a SELECT statement (optionally WITH-prefixed) and counts its
/// features. Rejects statements that are not SELECTs, have unterminated
/// literals or unbalanced parentheses.
pub fn parse_features(sql: &str) -> Result<SqlFeatures, SqlParseError> {
    let tokens = tokenize(sql)?;
    let first_word = tokens.iter().find_map(|t| match t {
        Token::Word(w) => Some(w.as_str()),
        _ => None,
    });
    match first_word {
        None => return Err(SqlParseError::Empty),
        Some("SELECT") | Some("WITH") => {}
        Some(other) => return Err(SqlParseError::NotSelect(other.to_string())),
    }

    let mut features = SqlFeatures::default();
    let mut depth: i32 = 0;
    // Select-list tracking for the outermost SELECT.
    let mut top_select_depth: Option<i32> = None;
    let mut in_top_select_list = false;
    let mut top_commas = 0usize;
    let mut saw_top_list_item = false;

    for (idx, token) in tokens.iter().enumerate() {
        match token {
            Token::Punct('(') => depth += 1,
            Token::Punct(')') => {
                depth -= 1;
                if depth < 0 {
                    return Err(SqlParseError::Unbalanced(idx));
                }
            }
            Token::Punct(',') => {
                if in_top_select_list && Some(depth) == top_select_depth {
                    top_commas += 1;
                }
            }
            Token::Word(word) => {
                match word.as_str() {
                    "SELECT" => {
                        if depth > 0 {
                            features.nested_subqueries += 1;
                        } else if top_select_depth.is_none() {
                            top_select_depth = Some(depth);
                            in_top_select_list = true;
                        }
                    }
                    "FROM" => {
                        if in_top_select_list && Some(depth) == top_select_depth {
                            in_top_select_list = false;
                        }
                    }
                    "UNION" | "INTERSECT" | "EXCEPT" => {
                        features.set_operations += 1;
                        if in_top_select_list {
                            in_top_select_list = false;
                        }
                    }
                    "GROUP" => {
                        if matches!(tokens.get(idx + 1), Some(Token::Word(w)) if w == "BY") {
                            features.has_group_by = true;
                        }
                    }
                    "ORDER" => {
                        if matches!(tokens.get(idx + 1), Some(Token::Word(w)) if w == "BY") {
                            features.has_order_by = true;
                        }
                    }
                    "JOIN" => features.joins += 1,
                    "DISTINCT" => {}
                    w if AGGREGATES.contains(&w) => {
                        if matches!(tokens.get(idx + 1), Some(Token::Punct('('))) {
                            features.aggregates += 1;
                        }
                    }
                    _ => {}
                }
                if in_top_select_list
                    && Some(depth) == top_select_depth
                    && word != "SELECT"
                    && word != "DISTINCT"
                {
                    saw_top_list_item = true;
                }
            }
            Token::Literal => {
                if in_top_select_list && Some(depth) == top_select_depth {
                    saw_top_list_item = true;
                }
            }
            Token::Punct('*') => {
                if in_top_select_list && Some(depth) == top_select_depth {
                    saw_top_list_item = true;
                }
            }
            Token::Punct(_) => {}
        }
    }
    if depth != 0 {
        return Err(SqlParseError::Unbalanced(tokens.len()));
    }
    if saw_top_list_item {
        features.selected_columns = top_commas + 1;
    }
    Ok(features)
}
