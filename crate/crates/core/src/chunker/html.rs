//! A small, lenient HTML tokenizer that keeps byte offsets into the source.
//!
//! Full HTML5 tree construction is not needed for chunking; what is needed is
//! the position of every text run in the original document, which mainstream
//! DOM parsers discard.

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Token<'a> {
    Start { name: String, self_closing: bool },
    End { name: String },
    /// Raw (undecoded) text and its byte range in the source.
    Text { raw: &'a str, start: usize, end: usize },
}

const RAW_TEXT: &[&str] = &["script", "style", "textarea", "title"];

pub(crate) fn tokenize<'a>(src: &'a str) -> Vec<Token<'a>> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;
    let mut text_start = 0;

    let flush_text = |tokens: &mut Vec<Token<'a>>, from: usize, to: usize| {
        if to > from {
            tokens.push(Token::Text { raw: &src[from..to], start: from, end: to });
        }
    };

    while pos < bytes.len() {
        if bytes[pos] != b'<' {
            pos += 1;
            continue;
        }
        let rest = &src[pos..];
        if rest.starts_with("<!--") {
            flush_text(&mut tokens, text_start, pos);
            pos = rest.find("-->").map_or(bytes.len(), |i| pos + i + 3);
            text_start = pos;
            continue;
        }
        if rest.starts_with("<!") || rest.starts_with("<?") {
            flush_text(&mut tokens, text_start, pos);
            pos = rest.find('>').map_or(bytes.len(), |i| pos + i + 1);
            text_start = pos;
            continue;
        }
        let is_end = rest.starts_with("</");
        let name_start = pos + if is_end { 2 } else { 1 };
        if !bytes.get(name_start).is_some_and(|b| b.is_ascii_alphabetic()) {
            // A stray '<' is ordinary text.
            pos += 1;
            continue;
        }
        let Some(tag_end) = find_tag_end(bytes, name_start) else {
            pos += 1;
            continue;
        };
        flush_text(&mut tokens, text_start, pos);
        let mut name_end = name_start;
        while name_end < tag_end
            && !bytes[name_end].is_ascii_whitespace()
            && bytes[name_end] != b'/'
            && bytes[name_end] != b'>'
        {
            name_end += 1;
        }
        let name = src[name_start..name_end].to_ascii_lowercase();
        pos = tag_end + 1;
        if is_end {
            tokens.push(Token::End { name });
        } else {
            let self_closing = tag_end > 0 && bytes[tag_end - 1] == b'/';
            let raw = RAW_TEXT.contains(&name.as_str()) && !self_closing;
            tokens.push(Token::Start { name: name.clone(), self_closing });
            if raw {
                let close = format!("</{name}");
                let body_end = find_ci(&src[pos..], &close).map_or(bytes.len(), |i| pos + i);
                // Raw text bodies are dropped; only the element boundaries matter.
                pos = body_end;
            }
        }
        text_start = pos;
    }
    flush_text(&mut tokens, text_start, bytes.len());
    tokens
}

fn find_tag_end(bytes: &[u8], from: usize) -> Option<usize> {
    let mut quote: Option<u8> = None;
    for (i, &b) in bytes.iter().enumerate().skip(from) {
        match quote {
            Some(q) if b == q => quote = None,
            Some(_) => {}
            None if b == b'"' || b == b'\'' => quote = Some(b),
            None if b == b'>' => return Some(i),
            None if b == b'<' => return None,
            None => {}
        }
    }
    None
}

fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.len() > h.len() {
        return None;
    }
    (0..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

/// Decodes the character references that show up in real ToS pages.
pub(crate) fn decode_entities(raw: &str) -> String {
    if !raw.contains('&') {
        return raw.to_string();
    }
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let decoded = rest
            .find(';')
            .filter(|&semi| semi <= 12)
            .and_then(|semi| decode_one(&rest[1..semi]).map(|c| (c, semi)));
        match decoded {
            Some((c, semi)) => {
                out.push(c);
                rest = &rest[semi + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn decode_one(entity: &str) -> Option<char> {
    if let Some(num) = entity.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok()?,
            None => num.parse().ok()?,
        };
        return char::from_u32(code);
    }
    let c = match entity {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => '\u{a0}',
        "aacute" => 'á',
        "eacute" => 'é',
        "iacute" => 'í',
        "oacute" => 'ó',
        "uacute" => 'ú',
        "Aacute" => 'Á',
        "Eacute" => 'É',
        "Iacute" => 'Í',
        "Oacute" => 'Ó',
        "Uacute" => 'Ú',
        "ntilde" => 'ñ',
        "Ntilde" => 'Ñ',
        "uuml" => 'ü',
        "iexcl" => '¡',
        "iquest" => '¿',
        "laquo" => '«',
        "raquo" => '»',
        "ldquo" => '“',
        "rdquo" => '”',
        "lsquo" => '‘',
        "rsquo" => '’',
        "ndash" => '–',
        "mdash" => '—',
        "hellip" => '…',
        "copy" => '©',
        "reg" => '®',
        "ordm" => 'º',
        "ordf" => 'ª',
        _ => return None,
    };
    Some(c)
}
