//! Delimited text (CSV-style) reader with double-quote escaping.

use std::collections::BTreeMap;

use super::CaptureError;

/// A data row keyed by header name.
pub type Row = BTreeMap<String, String>;

/// One physical record: its fields and the 1-based line it starts on.
struct RawRecord {
    line: usize,
    fields: Vec<String>,
}

/// Splits text into records. A field that starts with `"` runs to the
/// matching unescaped quote and may contain delimiters and newlines; `""`
/// inside it is a literal quote. Blank lines are skipped.
fn records(text: &str, delimiter: char, limit: Option<usize>) -> Vec<RawRecord> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1usize;
    while chars.peek().is_some() {
        if limit.is_some_and(|l| out.len() >= l) {
            break;
        }
        let start_line = line;
        let mut fields = Vec::new();
        let mut field = String::new();
        let mut at_field_start = true;
        let mut in_quotes = false;
        let mut quoted_any = false;
        loop {
            let Some(c) = chars.next() else {
                fields.push(std::mem::take(&mut field));
                break;
            };
            if in_quotes {
                match c {
                    '"' if chars.peek() == Some(&'"') => {
                        chars.next();
                        field.push('"');
                    }
                    '"' => in_quotes = false,
                    '\n' => {
                        line += 1;
                        field.push(c);
                    }
                    _ => field.push(c),
                }
                continue;
            }
            match c {
                '"' if at_field_start => {
                    in_quotes = true;
                    quoted_any = true;
                    at_field_start = false;
                }
                c if c == delimiter => {
                    fields.push(std::mem::take(&mut field));
                    at_field_start = true;
                }
                '\r' if chars.peek() == Some(&'\n') => {}
                '\n' => {
                    line += 1;
                    fields.push(std::mem::take(&mut field));
                    break;
                }
                _ => {
                    field.push(c);
                    at_field_start = false;
                }
            }
        }
        let blank = fields.len() == 1 && fields[0].is_empty() && !quoted_any;
        if !blank {
            out.push(RawRecord {
                line: start_line,
                fields,
            });
        }
    }
    out
}

/// Parses delimited text whose first record is the header.
pub fn parse_delimited(data: &[u8], delimiter: char) -> Result<Vec<Row>, CaptureError> {
    let text = std::str::from_utf8(data).map_err(|e| CaptureError::Encoding {
        offset: e.valid_up_to(),
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut recs = records(text, delimiter, None).into_iter();
    let header = recs.next().ok_or(CaptureError::MissingHeader)?;
    let mut seen = std::collections::BTreeSet::new();
    for name in &header.fields {
        if !seen.insert(name.as_str()) {
            return Err(CaptureError::DuplicateHeader(name.clone()));
        }
    }
    let mut rows = Vec::new();
    for rec in recs {
        if rec.fields.len() != header.fields.len() {
            return Err(CaptureError::RaggedRow {
                line: rec.line,
                expected: header.fields.len(),
                found: rec.fields.len(),
            });
        }
        rows.push(header.fields.iter().cloned().zip(rec.fields).collect());
    }
    Ok(rows)
}

const CANDIDATES: [char; 4] = [',', '\t', ';', '|'];
const SNIFF_LINES: usize = 20;
const MAX_HEADER_CELL: usize = 64;
const MAX_HEADER_WORDS: usize = 4;

/// Guesses the delimiter of a table: the first `SNIFF_LINES` records must
/// agree on a field count of at least two, and the first record must look
/// like a header (short, unique, non-empty labels that are not sentences).
pub fn sniff_delimiter(text: &str) -> Option<char> {
    let mut best: Option<(usize, char)> = None;
    for d in CANDIDATES {
        let recs = records(text, d, Some(SNIFF_LINES));
        if recs.len() < 2 {
            continue;
        }
        let width = recs[0].fields.len();
        if width < 2 || recs.iter().any(|r| r.fields.len() != width) {
            continue;
        }
        if !looks_like_header(&recs[0].fields) {
            continue;
        }
        if best.is_none_or(|(w, _)| width > w) {
            best = Some((width, d));
        }
    }
    best.map(|(_, d)| d)
}

fn looks_like_header(cells: &[String]) -> bool {
    let mut seen = std::collections::BTreeSet::new();
    cells.iter().all(|c| {
        let t = c.trim();
        !t.is_empty()
            && t.len() <= MAX_HEADER_CELL
            && t.split_whitespace().count() <= MAX_HEADER_WORDS
            && !t.ends_with(['.', '!', '?', ':'])
            && !t.contains('\n')
            && seen.insert(t.to_owned())
    })
}
