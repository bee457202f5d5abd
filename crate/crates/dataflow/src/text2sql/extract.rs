//! SQL extraction from model replies: last fenced block tagged `sql`, else
//! last fenced block of any tag, else the longest suffix starting with
//! SELECT or WITH. Deterministic and robust to chatty replies.

struct FencedBlock<'a> {
    tag: String,
    body: &'a str,
}

fn fenced_blocks(reply: &str) -> Vec<FencedBlock<'_>> {
    let mut blocks = Vec::new();
    let mut rest = reply;
    let mut offset = 0;
    while let Some(start) = rest.find("```") {
        let after_fence = start + 3;
        let Some(newline) = rest[after_fence..].find('\n') else { break };
        let tag = rest[after_fence..after_fence + newline].trim().to_ascii_lowercase();
        let body_start = after_fence + newline + 1;
        let Some(end) = rest[body_start..].find("```") else { break };
        blocks.push(FencedBlock { tag, body: &reply[offset + body_start..offset + body_start + end] });
        let consumed = body_start + end + 3;
        rest = &rest[consumed..];
        offset += consumed;
    }
    blocks
}

/// The earliest word-boundary occurrence of SELECT or WITH, case-insensitive.
fn first_select_or_with(text: &str) -> Option<usize> {
    let upper = text.to_ascii_uppercase();
    let bytes = upper.as_bytes();
    let mut earliest: Option<usize> = None;
    for keyword in ["SELECT", "WITH"] {
        let mut from = 0;
        while let Some(pos) = upper[from..].find(keyword) {
            let at = from + pos;
            let before_ok = at == 0
                || !(bytes[at - 1].is_ascii_alphanumeric() || bytes[at - 1] == b'_');
            let after = at + keyword.len();
            let after_ok = after >= bytes.len()
                || !(bytes[after].is_ascii_alphanumeric() || bytes[after] == b'_');
            if before_ok && after_ok {
                // WITH only counts when SELECT appears later (a CTE), so
                // prose like "with the table" is not mistaken for SQL.
                let counts = keyword == "SELECT" || upper[after..].contains("SELECT");
                if counts {
                    earliest = Some(earliest.map_or(at, |e| e.min(at)));
                    break;
                }
            }
            from = at + 1;
        }
    }
    earliest
}

/// Extracts the SQL payload from a model reply, if any.
pub fn extract_sql(reply: &str) -> Option<String> {
    let blocks = fenced_blocks(reply);
    let chosen = blocks
        .iter()
        .filter(|b| b.tag == "sql")
        .next_back()
        .or_else(|| blocks.last());
    if let Some(block) = chosen {
        let body = block.body.trim();
        if !body.is_empty() {
            return Some(body.trim_end_matches(';').trim().to_string());
        }
    }
    let at = first_select_or_with(reply)?;
    let suffix = reply[at..].trim().trim_end_matches(';').trim();
    if suffix.is_empty() {
        None
    } else {
        Some(suffix.to_string())
    }
}
