//! Hierarchical, structure-aware chunking of ToS pages into candidate clauses.

mod html;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::text::{normalize_whitespace, word_count};
use html::{decode_entities, tokenize, Token};

/// Corpus-level minimum clause length in words.
pub const DEFAULT_MIN_WORDS: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub text: String,
    /// Character (Unicode scalar) offsets `[start, end)` into the source.
    pub char_span: (usize, usize),
    /// Open elements from the root when the chunk's text began; empty for plain text.
    pub dom_path: Vec<String>,
    pub word_count: usize,
}

const BLOCK: &[&str] = &[
    "p", "li", "h1", "h2", "h3", "h4", "h5", "h6", "td", "th", "blockquote", "div", "ul", "ol",
    "dl", "dt", "dd", "table", "thead", "tbody", "tfoot", "tr", "caption", "section", "article",
    "main", "header", "footer", "aside", "body", "html", "form", "fieldset", "figure",
    "figcaption", "details", "summary", "pre", "address", "hr", "center",
];

/// Elements whose content is never clause text.
const SKIPPED: &[&str] =
    &["script", "style", "nav", "noscript", "template", "head", "svg", "iframe", "select", "title"];

const VOID: &[&str] = &[
    "br", "hr", "img", "input", "meta", "link", "area", "base", "col", "embed", "param", "source",
    "track", "wbr",
];

/// Elements closed implicitly when a sibling of the same kind opens.
const AUTO_CLOSE: &[&str] = &["p", "li", "td", "th", "tr", "dt", "dd"];

struct OpenElement {
    name: String,
    /// For lists: the colon-terminated lead-in sentence preceding the list.
    context: Option<String>,
}

#[derive(Default)]
struct Run {
    text: String,
    start: Option<usize>,
    end: usize,
    dom_path: Vec<String>,
}

struct HtmlChunker<'a> {
    src: &'a str,
    min_words: usize,
    stack: Vec<OpenElement>,
    run: Run,
    pending_context: Option<String>,
    out: Vec<Chunk>,
    char_index: CharIndex,
}

/// Splits an HTML page into chunks at block-level boundaries.
///
/// List items whose list is introduced by a block ending in ':' carry that
/// lead-in sentence as a prefix, so "We may: <ul><li>...</li></ul>" yields
/// self-contained clauses. Script, style and navigation content is dropped
/// and chunks shorter than `min_words` are discarded.
pub fn chunk_html(html: &str, min_words: usize) -> Vec<Chunk> {
    let mut chunker = HtmlChunker {
        src: html,
        min_words,
        stack: Vec::new(),
        run: Run::default(),
        pending_context: None,
        out: Vec::new(),
        char_index: CharIndex::new(html),
    };
    let mut skip: Option<(String, usize)> = None;

    for token in tokenize(html) {
        if let Some((name, depth)) = skip.as_mut() {
            match &token {
                Token::Start { name: n, self_closing: false } if n == name => *depth += 1,
                Token::End { name: n } if n == name => {
                    *depth -= 1;
                    if *depth == 0 {
                        skip = None;
                    }
                }
                Token::Start { name: n, .. } if name == "head" && n == "body" => {
                    skip = None;
                    chunker.start(n);
                }
                _ => {}
            }
            continue;
        }
        match token {
            Token::Start { name, self_closing } => {
                if SKIPPED.contains(&name.as_str()) {
                    if !self_closing {
                        chunker.flush();
                        skip = Some((name, 1));
                    }
                } else if VOID.contains(&name.as_str()) || self_closing {
                    if BLOCK.contains(&name.as_str()) {
                        chunker.flush();
                    } else {
                        chunker.run.text.push(' ');
                    }
                } else {
                    chunker.start(&name);
                }
            }
            Token::End { name } => chunker.end(&name),
            Token::Text { raw, start, end } => chunker.text(raw, start, end),
        }
    }
    chunker.flush();
    chunker.out
}

impl HtmlChunker<'_> {
    fn start(&mut self, name: &str) {
        let is_block = BLOCK.contains(&name);
        if is_block {
            self.flush();
        }
        if AUTO_CLOSE.contains(&name) {
            let barrier = |n: &str| matches!(n, "ul" | "ol" | "table" | "tbody" | "thead" | "dl");
            if let Some(pos) = self.stack.iter().rposition(|e| e.name == name || barrier(&e.name)) {
                if self.stack[pos].name == name {
                    self.stack.truncate(pos);
                }
            }
        }
        let context = if matches!(name, "ul" | "ol") { self.pending_context.take() } else { None };
        self.stack.push(OpenElement { name: name.to_string(), context });
    }

    fn end(&mut self, name: &str) {
        if BLOCK.contains(&name) {
            self.flush();
        }
        if let Some(pos) = self.stack.iter().rposition(|e| e.name == name) {
            self.stack.truncate(pos);
        }
        if matches!(name, "ul" | "ol") {
            self.pending_context = None;
        }
    }

    fn text(&mut self, raw: &str, start: usize, end: usize) {
        let trimmed_start = raw.len() - raw.trim_start().len();
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            self.run.text.push(' ');
            return;
        }
        if self.run.start.is_none() {
            self.run.start = Some(start + trimmed_start);
            self.run.dom_path = self.stack.iter().map(|e| e.name.clone()).collect();
        }
        self.run.end = start + trimmed_start + trimmed.len();
        debug_assert!(self.run.end <= end);
        self.run.text.push_str(&decode_entities(raw));
    }

    /// Nearest list context if the innermost list-related element is an `li`.
    fn list_item_context(&self) -> Option<&str> {
        let li = self.stack.iter().rposition(|e| matches!(e.name.as_str(), "li" | "ul" | "ol"))?;
        if self.stack[li].name != "li" {
            return None;
        }
        self.stack[..li]
            .iter()
            .rev()
            .find(|e| matches!(e.name.as_str(), "ul" | "ol"))
            .and_then(|e| e.context.as_deref())
    }

    fn flush(&mut self) {
        let run = std::mem::take(&mut self.run);
        let Some(start) = run.start else {
            return;
        };
        let own = normalize_whitespace(&run.text);
        if own.is_empty() {
            return;
        }
        self.pending_context = own.ends_with(':').then(|| lead_in_sentence(&own).to_string());
        let text = match self.list_item_context() {
            Some(ctx) => format!("{ctx} {own}"),
            None => own,
        };
        let words = word_count(&text);
        if words < self.min_words {
            return;
        }
        debug_assert!(self.src.is_char_boundary(start));
        self.out.push(Chunk {
            text,
            char_span: (self.char_index.of(start), self.char_index.of(run.end)),
            dom_path: run.dom_path,
            word_count: words,
        });
    }
}

/// The last sentence of a block, i.e. the part introducing a following list.
fn lead_in_sentence(text: &str) -> &str {
    let mut cut = 0;
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') && text[i + c.len_utf8()..].starts_with(' ') {
            cut = i + c.len_utf8();
        }
    }
    text[cut..].trim()
}

/// Byte offset to character offset conversion.
struct CharIndex {
    byte_starts: Vec<usize>,
}

impl CharIndex {
    fn new(src: &str) -> Self {
        Self { byte_starts: src.char_indices().map(|(b, _)| b).collect() }
    }

    fn of(&self, byte: usize) -> usize {
        self.byte_starts.partition_point(|&b| b < byte)
    }
}

static NUMBERED: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^\s*\d+\.(\d+\.?)*(\s|$)").expect("valid regex"));

/// Plain-text fallback: paragraphs separated by blank lines, further split at
/// lines opening a numbered clause ("3." or "3.1").
pub fn chunk_text(text: &str, min_words: usize) -> Vec<Chunk> {
    let index = CharIndex::new(text);
    let mut out = Vec::new();
    let mut segment: Option<(usize, usize)> = None;

    let emit = |seg: Option<(usize, usize)>, out: &mut Vec<Chunk>| {
        let Some((start, end)) = seg else { return };
        let body = normalize_whitespace(&text[start..end]);
        let words = word_count(&body);
        if body.is_empty() || words < min_words {
            return;
        }
        let lead = text[start..end].len() - text[start..end].trim_start().len();
        let trail = text[start..end].len() - text[start..end].trim_end().len();
        out.push(Chunk {
            text: body,
            char_span: (index.of(start + lead), index.of(end - trail)),
            dom_path: Vec::new(),
            word_count: words,
        });
    };

    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        let content_end = line_start + line.trim_end_matches(['\n', '\r']).len();
        if line.trim().is_empty() {
            emit(segment.take(), &mut out);
            continue;
        }
        if NUMBERED.is_match(line) {
            emit(segment.take(), &mut out);
        }
        segment = Some(match segment {
            Some((s, _)) => (s, content_end),
            None => (line_start, content_end),
        });
    }
    emit(segment.take(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(chunks: &[Chunk]) -> Vec<&str> {
        chunks.iter().map(|c| c.text.as_str()).collect()
    }

    #[test]
    fn seven_words_pass_the_filter() {
        let chunks = chunk_html("<p>one two three four five six seven</p>", 7);
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].word_count, 7);
        assert_eq!(chunks[0].char_span, (3, 36));
        assert_eq!(chunks[0].dom_path, vec!["p"]);
    }

    #[test]
    fn short_paragraphs_are_dropped() {
        assert!(chunk_html("<p>too short here</p>", 7).is_empty());
    }

    #[test]
    fn fixture_page_in_document_order() {
        let page = "<html><head><title>Términos</title><style>p{color:red}</style></head><body>\
            <nav><ul><li>Inicio Productos Ayuda Contacto Blog Tienda Cuenta</li></ul></nav>\
            <p>Estos términos regulan el uso del sitio web de la empresa.</p>\
            <p>El usuario debe ser mayor de edad para <b>contratar</b> servicios.</p>\
            <ul><li>La empresa puede suspender cuentas que infrinjan estas reglas.</li>\
            <li>Los pagos se procesan mediante proveedores externos autorizados.</li></ul>\
            <script>var x = \"<p>not a clause at all, seven words here</p>\";</script>\
            <p>Cualquier consulta puede enviarse al correo de soporte indicado.</p>\
            </body></html>";
        let chunks = chunk_html(page, 7);
        assert_eq!(
            texts(&chunks),
            vec![
                "Estos términos regulan el uso del sitio web de la empresa.",
                "El usuario debe ser mayor de edad para contratar servicios.",
                "La empresa puede suspender cuentas que infrinjan estas reglas.",
                "Los pagos se procesan mediante proveedores externos autorizados.",
                "Cualquier consulta puede enviarse al correo de soporte indicado.",
            ]
        );
        for pair in chunks.windows(2) {
            assert!(pair[0].char_span.1 <= pair[1].char_span.0);
        }
        assert_eq!(chunks[2].dom_path, vec!["html", "body", "ul", "li"]);
    }

    #[test]
    fn list_items_inherit_colon_lead_in() {
        let page = "<p>Para efectos de este contrato. La empresa podrá:</p>\
            <ol><li>modificar los precios sin aviso</li><li>cerrar la cuenta</li></ol>\
            <p>Sin lead-in esta lista no tiene contexto alguno.</p><ul><li>uno dos tres</li></ul>";
        let chunks = chunk_html(page, 5);
        assert_eq!(
            texts(&chunks),
            vec![
                "Para efectos de este contrato. La empresa podrá:",
                "La empresa podrá: modificar los precios sin aviso",
                "La empresa podrá: cerrar la cuenta",
                "Sin lead-in esta lista no tiene contexto alguno.",
            ]
        );
    }

    #[test]
    fn nested_list_uses_parent_item_lead_in() {
        let page = "<ul><li>El usuario acepta lo siguiente:<ul><li>renuncia a reclamar daños</li></ul></li></ul>";
        let chunks = chunk_html(page, 3);
        assert_eq!(
            texts(&chunks),
            vec!["El usuario acepta lo siguiente:", "El usuario acepta lo siguiente: renuncia a reclamar daños"]
        );
        assert!(chunks[0].char_span.1 <= chunks[1].char_span.0);
    }

    #[test]
    fn div_without_block_children_is_one_chunk() {
        let page = "<div>Una cláusula <span>dentro</span> de un div sin bloques hijos.</div>\
            <div><p>Un párrafo dentro de un div con bloques hijos.</p></div>";
        let chunks = chunk_html(page, 7);
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunks[0].text, "Una cláusula dentro de un div sin bloques hijos.");
    }

    #[test]
    fn malformed_html_is_tolerated() {
        let page = "<p>Primer párrafo sin cierre con bastantes palabras aquí<p>Segundo párrafo también sin cierre y largo <b>negrita";
        let chunks = chunk_html(page, 7);
        assert_eq!(chunks.len(), 2);
        assert_eq!(chunk_html("", 7), vec![]);
        assert_eq!(chunk_html("<<<>>> <p", 1).len(), 1);
    }

    #[test]
    fn char_spans_count_characters_not_bytes() {
        let page = "<p>ñandú</p><p>águila árbol ámbar</p>";
        let chunks = chunk_html(page, 1);
        let chars: Vec<char> = page.chars().collect();
        for c in &chunks {
            let s: String = chars[c.char_span.0..c.char_span.1].iter().collect();
            assert_eq!(s, c.text);
        }
    }

    #[test]
    fn plain_text_empty_and_paragraphs() {
        assert!(chunk_text("", 7).is_empty());
        let t = "Primer párrafo con siete palabras en total.\n\nSegundo párrafo también tiene siete palabras aquí.";
        let chunks = chunk_text(t, 7);
        assert_eq!(chunks.len(), 2);
        let chars: Vec<char> = t.chars().collect();
        let s: String = chars[chunks[1].char_span.0..chunks[1].char_span.1].iter().collect();
        assert_eq!(s, chunks[1].text);
    }

    #[test]
    fn numbered_contract_splits_on_headings() {
        let contract = "\
1. Objeto. Estos términos regulan el acceso
al sitio y a los servicios ofrecidos por la empresa.
2. Registro. El usuario debe crear una cuenta
con datos verdaderos y mantenerlos actualizados.
3. Precios. Los precios publicados incluyen impuestos
y pueden variar según promociones vigentes.
3.1 Las promociones tienen stock limitado
y se informan en el sitio oportunamente.
4. Responsabilidad. En ningún caso la empresa
responderá por daños indirectos o lucro cesante.
5. Ley aplicable. Estos términos se rigen
por las leyes de la República de Chile.
";
        let chunks = chunk_text(contract, 7);
        assert_eq!(
            texts(&chunks),
            vec![
                "1. Objeto. Estos términos regulan el acceso al sitio y a los servicios ofrecidos por la empresa.",
                "2. Registro. El usuario debe crear una cuenta con datos verdaderos y mantenerlos actualizados.",
                "3. Precios. Los precios publicados incluyen impuestos y pueden variar según promociones vigentes.",
                "3.1 Las promociones tienen stock limitado y se informan en el sitio oportunamente.",
                "4. Responsabilidad. En ningún caso la empresa responderá por daños indirectos o lucro cesante.",
                "5. Ley aplicable. Estos términos se rigen por las leyes de la República de Chile.",
            ]
        );
    }

    #[test]
    fn lead_in_sentence_extraction() {
        assert_eq!(lead_in_sentence("Intro. More text. We may:"), "We may:");
        assert_eq!(lead_in_sentence("We may:"), "We may:");
    }
}
