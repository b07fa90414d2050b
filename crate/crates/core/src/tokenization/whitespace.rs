//! Word segmentation used as the tokenizer-free baseline.

pub(super) const DEFINITION: &[u8] = b"whitespace: lowercase; alphanumeric runs; one token per other non-space char";

pub(super) fn for_each_token(text: &str, mut emit: impl FnMut(&str)) {
    let lowered = text.to_lowercase();
    let mut start = None;
    for (i, c) in lowered.char_indices() {
        if c.is_alphanumeric() {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            emit(&lowered[s..i]);
        }
        if !c.is_whitespace() {
            emit(&lowered[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = start {
        emit(&lowered[s..]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(text: &str) -> Vec<String> {
        let mut v = Vec::new();
        for_each_token(text, |t| v.push(t.to_string()));
        v
    }

    #[test]
    fn punctuation_boundaries() {
        assert_eq!(split("Don't stop!"), ["don", "'", "t", "stop", "!"]);
        assert_eq!(split("  x\t\ny  "), ["x", "y"]);
        assert_eq!(split("Über 3.5"), ["über", "3", ".", "5"]);
        assert_eq!(split("日本語 テキスト"), ["日本語", "テキスト"]);
    }
}
