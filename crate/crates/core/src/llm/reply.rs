use super::LlmReply;

/// Body of a reply's code block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeBlock {
    pub text: String,
    /// `false` when the reply had no fence and the whole text was taken.
    pub fenced: bool,
}

/// Interior of the first fenced code block. Without a fence the whole reply
/// is returned and a warning is logged; an unclosed fence runs to the end.
pub fn extract_code_block(reply: &LlmReply) -> CodeBlock {
    extract_code_text(&reply.text)
}

pub fn extract_code_text(text: &str) -> CodeBlock {
    let block = first_fence(text);
    if !block.fenced {
        log::warn!("reply has no fenced code block; using the full text");
    }
    block
}

fn first_fence(text: &str) -> CodeBlock {
    let mut lines = text.split_inclusive('\n');
    let mut found = false;
    for line in lines.by_ref() {
        if line.trim_start().starts_with("```") {
            found = true;
            break;
        }
    }
    if !found {
        return CodeBlock {
            text: text.to_string(),
            fenced: false,
        };
    }
    let mut body = String::new();
    for line in lines {
        if line.trim_start().starts_with("```") {
            break;
        }
        body.push_str(line);
    }
    CodeBlock { text: body, fenced: true }
}

/// First JSON value found in a reply: the whole text, then the first code
/// block, then the widest `[...]` or `{...}` span.
pub fn extract_json(text: &str) -> Option<serde_json::Value> {
    let parse = |s: &str| serde_json::from_str::<serde_json::Value>(s.trim()).ok();
    if let Some(v) = parse(text) {
        return Some(v);
    }
    let block = first_fence(text);
    if block.fenced {
        if let Some(v) = parse(&block.text) {
            return Some(v);
        }
    }
    for (open, close) in [('[', ']'), ('{', '}')] {
        if let (Some(a), Some(b)) = (text.find(open), text.rfind(close)) {
            if a < b {
                if let Some(v) = parse(&text[a..=b]) {
                    return Some(v);
                }
            }
        }
    }
    None
}
