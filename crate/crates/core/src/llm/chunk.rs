//! Splitting long texts into model-sized pieces.

/// A contiguous piece of a larger text. `offset` is in characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunk<'a> {
    pub offset: usize,
    pub text: &'a str,
}

/// Splits `text` into chunks of at most `budget` characters. Cuts prefer
/// paragraph breaks (blank lines), then line breaks, then whitespace; a
/// chunk is only cut mid-word when a single word exceeds the budget.
/// Concatenating the chunks reproduces `text` exactly.
pub fn chunk_text(text: &str, budget: usize) -> Vec<Chunk<'_>> {
    let budget = budget.max(1);
    let mut chunks = Vec::new();
    let mut rest = text;
    let mut offset = 0;
    while !rest.is_empty() {
        let (cut_byte, cut_chars) = cut_point(rest, budget);
        chunks.push(Chunk {
            offset,
            text: &rest[..cut_byte],
        });
        offset += cut_chars;
        rest = &rest[cut_byte..];
    }
    chunks
}

/// Returns (byte index, char count) of where to end the next chunk.
fn cut_point(text: &str, budget: usize) -> (usize, usize) {
    let mut end_byte = text.len();
    let mut count = 0;
    for (i, (b, _)) in text.char_indices().enumerate() {
        if i == budget {
            end_byte = b;
            break;
        }
        count = i + 1;
    }
    if end_byte == text.len() {
        return (end_byte, count);
    }
    let window = &text[..end_byte];
    let best = window
        .rfind("\n\n")
        .map(|i| i + 2)
        .or_else(|| window.rfind('\n').map(|i| i + 1))
        .or_else(|| {
            window
                .char_indices()
                .rev()
                .find(|(_, c)| c.is_whitespace())
                .map(|(i, c)| i + c.len_utf8())
        })
        .filter(|&i| i > 0)
        .unwrap_or(end_byte);
    (best, text[..best].chars().count())
}
