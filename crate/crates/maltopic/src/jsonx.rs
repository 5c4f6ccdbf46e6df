//! Extraction of the first well-formed JSON array embedded in free text.

use serde_json::Value;

/// Scans `text` for the first substring that parses as a JSON array.
///
/// Bracket matching is string-aware so arrays inside prose, markdown fences,
/// or trailing explanations are found. Returns `None` when no candidate
/// parses.
pub fn extract_first_array(text: &str) -> Option<Value> {
    extract_arrays(text).into_iter().next()
}

/// All parseable JSON arrays in `text`, in order of appearance.
///
/// Callers that expect a particular element schema should take the first
/// array that validates, which skips incidental arrays like `[1]` in prose.
pub fn extract_arrays(text: &str) -> Vec<Value> {
    let bytes = text.as_bytes();
    let mut found = Vec::new();
    let mut start = 0;
    while let Some(offset) = text[start..].find('[') {
        let open = start + offset;
        let mut next = open + 1;
        if let Some(end) = matching_bracket(bytes, open) {
            let candidate = &text[open..=end];
            if let Ok(value @ Value::Array(_)) = serde_json::from_str::<Value>(candidate) {
                found.push(value);
                next = end + 1;
            }
        }
        start = next;
    }
    found
}

fn matching_bracket(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'[' | b'{' => depth += 1,
            b']' | b'}' => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    return if b == b']' { Some(i) } else { None };
                }
            }
            _ => {}
        }
    }
    None
}
