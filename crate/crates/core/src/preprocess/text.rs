use super::emoji;

pub const URL_PLACEHOLDER: &str = "HTTPURL";
pub const USER_PLACEHOLDER: &str = "@USER";

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Lowercase, replace URLs and @-mentions with placeholders, spell out emoji
/// as `:name:` and collapse whitespace.
pub fn normalize_text(raw: &str) -> String {
    let spelled = spell_emoji(raw);
    let mut pieces: Vec<String> = Vec::new();
    for chunk in spelled.split_whitespace() {
        let lower = chunk.to_lowercase();
        if lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
        {
            pieces.push(URL_PLACEHOLDER.to_owned());
            continue;
        }
        pieces.push(normalize_chunk(chunk));
    }
    pieces.join(" ").split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Replace each emoji with a space-delimited `:name:` and drop variation
/// selectors and zero-width joiners.
fn spell_emoji(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(c) = rest.chars().next() {
        if let Some((name, len)) = emoji::match_prefix(rest) {
            out.push_str(" :");
            out.push_str(name);
            out.push_str(": ");
            rest = &rest[len..];
            continue;
        }
        if c != '\u{fe0f}' && c != '\u{200d}' {
            out.push(c);
        }
        rest = &rest[c.len_utf8()..];
    }
    out
}

fn normalize_chunk(chunk: &str) -> String {
    let mut out = String::with_capacity(chunk.len());
    let mut rest = chunk;
    let mut prev_word = false;
    while let Some(c) = rest.chars().next() {
        if c == '@' && !prev_word {
            let name_len: usize = rest[1..]
                .chars()
                .take_while(|&ch| is_word_char(ch))
                .map(char::len_utf8)
                .sum();
            if name_len > 0 {
                out.push_str(USER_PLACEHOLDER);
                rest = &rest[1 + name_len..];
                prev_word = true;
                continue;
            }
        }
        if is_word_char(c) {
            let word_len: usize = rest
                .chars()
                .take_while(|&ch| is_word_char(ch))
                .map(char::len_utf8)
                .sum();
            let word = &rest[..word_len];
            if word.eq_ignore_ascii_case(URL_PLACEHOLDER) {
                out.push_str(URL_PLACEHOLDER);
            } else {
                out.push_str(&word.to_lowercase());
            }
            rest = &rest[word_len..];
            prev_word = true;
            continue;
        }
        out.extend(c.to_lowercase());
        rest = &rest[c.len_utf8()..];
        prev_word = false;
    }
    out
}

/// A token with its byte range in the source string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

/// Whitespace-and-punctuation segmentation.
///
/// Word runs are tokens; `#` stays attached to a following word (hashtags), `@`
/// to a following word (mentions) and `:name:` emoji spellings are atomic. Any
/// other non-space character is a token on its own.
pub fn segment(text: &str) -> Vec<Token<'_>> {
    let bytes_len = text.len();
    let mut tokens = Vec::new();
    let mut i = 0;
    let word_len_at = |from: usize| -> usize {
        text[from..]
            .chars()
            .take_while(|&c| is_word_char(c))
            .map(char::len_utf8)
            .sum()
    };
    while i < bytes_len {
        let c = text[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        let start = i;
        let end = if c == '#' || c == '@' {
            let n = word_len_at(i + 1);
            if n > 0 {
                i + 1 + n
            } else {
                i + 1
            }
        } else if c == ':' {
            let n: usize = text[i + 1..]
                .chars()
                .take_while(|&ch| ch.is_ascii_lowercase() || ch.is_ascii_digit() || "_-+".contains(ch))
                .map(char::len_utf8)
                .sum();
            if n > 0 && text[i + 1 + n..].starts_with(':') {
                i + n + 2
            } else {
                i + 1
            }
        } else if is_word_char(c) {
            i + word_len_at(i)
        } else {
            i + c.len_utf8()
        };
        tokens.push(Token {
            text: &text[start..end],
            start,
            end,
        });
        i = end;
    }
    tokens
}
