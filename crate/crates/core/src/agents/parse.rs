//! Extraction of the single structured block an agent reply must carry.

use serde::de::DeserializeOwned;
use serde_json::Value;

/// Finds the one fenced block in `reply` and parses it as a JSON object.
///
/// Prose outside the block is ignored. A reply without any fence is accepted
/// when the whole reply is a JSON object. Zero or several fenced blocks, or a
/// block that is not a JSON object, is an error.
pub fn extract_block(reply: &str) -> Result<Value, String> {
    let blocks = fenced_blocks(reply);
    let body = match blocks.as_slice() {
        [] => reply.trim(),
        [one] => one.trim(),
        many => return Err(format!("expected one fenced block, found {}", many.len())),
    };
    if body.is_empty() {
        return Err("empty reply".into());
    }
    let value: Value = serde_json::from_str(body).map_err(|e| {
        if blocks.is_empty() {
            format!("no fenced ```json block and reply is not JSON ({e})")
        } else {
            format!("block is not valid JSON: {e}")
        }
    })?;
    if !value.is_object() {
        return Err("block must be a JSON object".into());
    }
    Ok(value)
}

/// Parses the block into a typed payload.
pub fn parse_block<T: DeserializeOwned>(reply: &str) -> Result<T, String> {
    let value = extract_block(reply)?;
    serde_json::from_value(value).map_err(|e| format!("block does not match schema: {e}"))
}

/// Contents of each closed ``` fenced region; an unterminated fence is ignored.
fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // skip the info string (`json`, `JSON`, ...) up to the end of line
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let info = &after[..body_start];
        let (body_from, search) = if info.trim().chars().all(|c| c.is_ascii_alphanumeric()) {
            (body_start, &after[body_start..])
        } else {
            (0, after)
        };
        match search.find("```") {
            Some(close) => {
                blocks.push(&after[body_from..body_from + close]);
                rest = &search[close + 3..];
            }
            None => break,
        }
    }
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_block_with_prose() {
        let reply = "Sure, here you go:\n```json\n{\"terms\": []}\n```\nHope it helps.";
        assert_eq!(extract_block(reply).unwrap(), serde_json::json!({"terms": []}));
    }

    #[test]
    fn bare_json_reply() {
        assert_eq!(extract_block(r#"{"terms": []}"#).unwrap(), serde_json::json!({"terms": []}));
    }

    #[test]
    fn inline_fence() {
        assert_eq!(
            extract_block("```{\"a\": 1}```").unwrap(),
            serde_json::json!({"a": 1})
        );
    }

    #[test]
    fn rejects_multiple_blocks() {
        let reply = "```json\n{}\n```\n```json\n{}\n```";
        assert!(extract_block(reply).unwrap_err().contains("found 2"));
    }

    #[test]
    fn rejects_garbage_and_non_objects() {
        assert!(extract_block("I cannot help with that").is_err());
        assert!(extract_block("```json\n[1,2]\n```").is_err());
        assert!(extract_block("```json\n{\"a\": \n```").is_err());
        assert!(extract_block("   ").is_err());
    }
}
