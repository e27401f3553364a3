//! Extracts runnable code from raw model output.

/// Pulls the candidate code out of a model response.
///
/// Fenced code blocks win: the first block containing a function definition
/// is preferred, falling back to the first block. A leading language-tag
/// line inside a block (`python`, `py`) is stripped, as is a tag on the
/// fence itself. Without any fences the trimmed raw text is returned.
/// Returns `None` when nothing non-empty remains — the degenerate-output
/// signal; callers keep their prior code.
pub fn extract_code(raw: &str) -> Option<String> {
    let blocks = fenced_blocks(raw);
    let chosen = if blocks.is_empty() {
        raw.trim().to_string()
    } else {
        blocks
            .iter()
            .find(|b| contains_function_definition(b))
            .unwrap_or(&blocks[0])
            .clone()
    };
    let cleaned = strip_language_tag(&chosen).trim().to_string();
    if cleaned.is_empty() {
        None
    } else {
        Some(cleaned)
    }
}

fn fenced_blocks(raw: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in raw.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(lines) => blocks.push(lines.join("\n")),
                None => current = Some(Vec::new()),
            }
        } else if let Some(lines) = current.as_mut() {
            lines.push(line);
        }
    }
    // An unclosed fence still yields its content.
    if let Some(lines) = current {
        blocks.push(lines.join("\n"));
    }
    blocks
}

fn contains_function_definition(block: &str) -> bool {
    block
        .lines()
        .any(|l| l.trim_start().starts_with("def ") || l.trim_start().starts_with("async def "))
}

fn strip_language_tag(block: &str) -> &str {
    let mut lines = block.lines();
    if let Some(first) = lines.next() {
        let tag = first.trim();
        if matches!(tag, "python" | "py" | "python3") {
            return block[first.len()..].trim_start_matches(['\r', '\n']);
        }
    }
    block
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_fenced_block() {
        assert_eq!(
            extract_code("```\ndef f(): pass\n```"),
            Some("def f(): pass".to_string())
        );
    }

    #[test]
    fn prose_without_fences_returned_trimmed() {
        assert_eq!(
            extract_code("  here is my answer in plain words  "),
            Some("here is my answer in plain words".to_string())
        );
    }

    #[test]
    fn prefers_block_with_function_definition() {
        let raw = "First the idea:\n```\nx = 1\n```\nThen the code:\n```\ndef f():\n    return 1\n```";
        assert_eq!(extract_code(raw), Some("def f():\n    return 1".to_string()));
    }

    #[test]
    fn strips_language_tag_on_fence_and_inside() {
        assert_eq!(
            extract_code("```python\ndef f(): pass\n```"),
            Some("def f(): pass".to_string())
        );
        assert_eq!(
            extract_code("```\npython\ndef f(): pass\n```"),
            Some("def f(): pass".to_string())
        );
    }

    #[test]
    fn empty_output_is_degenerate() {
        assert_eq!(extract_code(""), None);
        assert_eq!(extract_code("```\n\n```"), None);
        assert_eq!(extract_code("   \n  "), None);
    }

    #[test]
    fn unclosed_fence_still_extracts() {
        assert_eq!(
            extract_code("```python\ndef f():\n    return 2"),
            Some("def f():\n    return 2".to_string())
        );
    }
}
