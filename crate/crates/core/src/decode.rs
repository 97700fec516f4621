//! Byte-to-text decoding for raw pages.

use std::borrow::Cow;

use encoding_rs::Encoding;

use crate::error::{Error, Result};

/// How far into the document a `charset` declaration is searched for.
const SNIFF_LIMIT: usize = 4096;

/// Decodes a page as UTF-8, falling back to the charset the document declares.
///
/// Input that is neither valid UTF-8 nor valid in its declared charset is an
/// error; no replacement characters are ever produced.
pub fn decode_page(bytes: &[u8]) -> Result<Cow<'_, str>> {
    let body = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    if let Ok(text) = std::str::from_utf8(body) {
        return Ok(Cow::Borrowed(text));
    }
    let label = declared_charset(bytes)
        .ok_or_else(|| Error::Encoding("declares no charset".to_string()))?;
    let encoding = Encoding::for_label(label.as_bytes())
        .ok_or_else(|| Error::Encoding(format!("declares unknown charset `{label}`")))?;
    if encoding == encoding_rs::UTF_8 {
        return Err(Error::Encoding("declares utf-8".to_string()));
    }
    encoding
        .decode_without_bom_handling_and_without_replacement(bytes)
        .map(|text| Cow::Owned(text.into_owned()))
        .ok_or_else(|| Error::Encoding(format!("is not valid in its declared charset `{label}`")))
}

/// Finds `charset=<label>` in the document head, as written by either
/// `<meta charset>` or `<meta http-equiv="Content-Type">`.
pub fn declared_charset(bytes: &[u8]) -> Option<String> {
    let head = &bytes[..bytes.len().min(SNIFF_LIMIT)];
    let lower: Vec<u8> = head.iter().map(u8::to_ascii_lowercase).collect();
    let needle = b"charset";
    let mut from = 0;
    while let Some(pos) = find(&lower[from..], needle) {
        let mut i = from + pos + needle.len();
        from = i;
        while i < lower.len() && lower[i].is_ascii_whitespace() {
            i += 1;
        }
        if lower.get(i) != Some(&b'=') {
            continue;
        }
        i += 1;
        while i < lower.len()
            && (lower[i].is_ascii_whitespace() || lower[i] == b'"' || lower[i] == b'\'')
        {
            i += 1;
        }
        let start = i;
        while i < lower.len()
            && (lower[i].is_ascii_alphanumeric() || matches!(lower[i], b'-' | b'_' | b':' | b'.'))
        {
            i += 1;
        }
        if i > start {
            return Some(String::from_utf8_lossy(&lower[start..i]).into_owned());
        }
    }
    None
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}
