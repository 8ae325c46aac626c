use super::DischargeDocument;

/// Sentence ranges of a document, as half-open character offsets.
///
/// Documents that carry `sentence_offsets` get them back unchanged. Otherwise
/// text is cut at every newline and after `.`, `?` or `!` when followed by
/// whitespace and an uppercase letter. Ranges are trimmed of surrounding
/// whitespace and whitespace-only pieces are dropped.
pub fn segment(document: &DischargeDocument) -> Vec<(usize, usize)> {
    if let Some(offsets) = &document.sentence_offsets {
        return offsets.clone();
    }
    split_text(&document.text)
}

pub(crate) fn split_text(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut ranges = Vec::new();
    let mut start: Option<usize> = None;

    let close = |start: &mut Option<usize>, end: usize, ranges: &mut Vec<(usize, usize)>| {
        if let Some(s) = start.take() {
            let mut e = end;
            while e > s && chars[e - 1].is_whitespace() {
                e -= 1;
            }
            if e > s {
                ranges.push((s, e));
            }
        }
    };

    for i in 0..n {
        let c = chars[i];
        if c == '\n' {
            close(&mut start, i, &mut ranges);
            continue;
        }
        if start.is_none() {
            if c.is_whitespace() {
                continue;
            }
            start = Some(i);
        }
        if matches!(c, '.' | '?' | '!') {
            let mut j = i + 1;
            while j < n && chars[j].is_whitespace() && chars[j] != '\n' {
                j += 1;
            }
            if j > i + 1 && j < n && chars[j].is_uppercase() {
                close(&mut start, i + 1, &mut ranges);
            }
        }
    }
    close(&mut start, n, &mut ranges);
    ranges
}
