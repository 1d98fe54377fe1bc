//! Canonical text codec.
//!
//! Writer rules: object keys in code-point order, no whitespace, integers
//! in plain decimal, decimals in shortest round-trip form that always
//! carries a `.` or an exponent, text in NFC with only `"`, `\` and control
//! characters escaped. The reader accepts any JSON (plus the `NaN` and
//! `Infinity` literals, so that such input can be reported as an invariant
//! violation rather than a syntax error) and reports byte offsets.

use std::collections::BTreeMap;

use super::value::{nfc, FieldValue};
use super::ModelError;

const MAX_DEPTH: usize = 128;

pub fn write_value(out: &mut Vec<u8>, v: &FieldValue) {
    match v {
        FieldValue::Null => out.extend_from_slice(b"null"),
        FieldValue::Bool(true) => out.extend_from_slice(b"true"),
        FieldValue::Bool(false) => out.extend_from_slice(b"false"),
        FieldValue::Integer(i) => out.extend_from_slice(i.to_string().as_bytes()),
        FieldValue::Decimal(d) => write_decimal(out, *d),
        FieldValue::Text(s) => write_str(out, s),
        FieldValue::List(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(out, item);
            }
            out.push(b']');
        }
        FieldValue::Map(m) => write_map(out, m),
    }
}

pub fn write_map(out: &mut Vec<u8>, m: &BTreeMap<String, FieldValue>) {
    out.push(b'{');
    let mut first = true;
    for (k, v) in m {
        if !first {
            out.push(b',');
        }
        first = false;
        write_str(out, k);
        out.push(b':');
        write_value(out, v);
    }
    out.push(b'}');
}

pub fn write_decimal(out: &mut Vec<u8>, d: f64) {
    let d = if d == 0.0 { 0.0 } else { d };
    let mut buf = ryu::Buffer::new();
    out.extend_from_slice(buf.format_finite(d).as_bytes());
}

pub fn write_str(out: &mut Vec<u8>, s: &str) {
    let s = nfc(s);
    out.push(b'"');
    for c in s.chars() {
        match c {
            '"' => out.extend_from_slice(b"\\\""),
            '\\' => out.extend_from_slice(b"\\\\"),
            '\n' => out.extend_from_slice(b"\\n"),
            '\r' => out.extend_from_slice(b"\\r"),
            '\t' => out.extend_from_slice(b"\\t"),
            '\u{08}' => out.extend_from_slice(b"\\b"),
            '\u{0c}' => out.extend_from_slice(b"\\f"),
            c if (c as u32) < 0x20 => {
                out.extend_from_slice(format!("\\u{:04x}", c as u32).as_bytes());
            }
            c => {
                let mut buf = [0u8; 4];
                out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
        }
    }
    out.push(b'"');
}

/// Parses one JSON value occupying the whole input (surrounding
/// whitespace allowed).
pub fn parse(data: &[u8], allow_non_finite: bool) -> Result<FieldValue, ModelError> {
    let mut p = Parser {
        data,
        pos: 0,
        allow_non_finite,
    };
    p.skip_ws();
    let v = p.value(0)?;
    p.skip_ws();
    if p.pos != data.len() {
        return Err(p.err("trailing characters after value"));
    }
    Ok(v)
}

struct Parser<'a> {
    data: &'a [u8],
    pos: usize,
    allow_non_finite: bool,
}

impl<'a> Parser<'a> {
    fn err(&self, message: impl Into<String>) -> ModelError {
        self.err_at(self.pos, message)
    }

    fn err_at(&self, offset: usize, message: impl Into<String>) -> ModelError {
        let (line, column) = line_col(self.data, offset);
        ModelError::Parse {
            offset,
            line,
            column,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while let Some(b' ' | b'\t' | b'\n' | b'\r') = self.peek() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, lit: &[u8]) -> bool {
        if self.data[self.pos..].starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn value(&mut self, depth: usize) -> Result<FieldValue, ModelError> {
        if depth > MAX_DEPTH {
            return Err(self.err("nesting too deep"));
        }
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'{') => self.object(depth),
            Some(b'[') => self.array(depth),
            Some(b'"') => Ok(FieldValue::Text(self.string()?)),
            Some(b't') if self.eat(b"true") => Ok(FieldValue::Bool(true)),
            Some(b'f') if self.eat(b"false") => Ok(FieldValue::Bool(false)),
            Some(b'n') if self.eat(b"null") => Ok(FieldValue::Null),
            Some(b'N') => self.non_finite(b"NaN", f64::NAN),
            Some(b'I') => self.non_finite(b"Infinity", f64::INFINITY),
            Some(b'-') if self.data[self.pos..].starts_with(b"-Infinity") => {
                self.non_finite(b"-Infinity", f64::NEG_INFINITY)
            }
            Some(b'-' | b'0'..=b'9') => self.number(),
            Some(c) => Err(self.err(format!("unexpected character {:?}", c as char))),
        }
    }

    fn non_finite(&mut self, lit: &[u8], v: f64) -> Result<FieldValue, ModelError> {
        let start = self.pos;
        if !self.eat(lit) {
            return Err(self.err("invalid literal"));
        }
        if !self.allow_non_finite {
            return Err(self.err_at(start, "non-finite number"));
        }
        Ok(FieldValue::Decimal(v))
    }

    fn object(&mut self, depth: usize) -> Result<FieldValue, ModelError> {
        self.pos += 1;
        let mut map = BTreeMap::new();
        self.skip_ws();
        if self.peek() == Some(b'}') {
            self.pos += 1;
            return Ok(FieldValue::Map(map));
        }
        loop {
            self.skip_ws();
            let key_at = self.pos;
            if self.peek() != Some(b'"') {
                return Err(self.err("expected string key"));
            }
            let key = self.string()?;
            self.skip_ws();
            if self.peek() != Some(b':') {
                return Err(self.err("expected ':'"));
            }
            self.pos += 1;
            self.skip_ws();
            let v = self.value(depth + 1)?;
            if map.insert(key.clone(), v).is_some() {
                return Err(self.err_at(key_at, format!("duplicate key {key:?}")));
            }
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(FieldValue::Map(map));
                }
                None => return Err(self.err("unexpected end of input")),
                _ => return Err(self.err("expected ',' or '}'")),
            }
        }
    }

    fn array(&mut self, depth: usize) -> Result<FieldValue, ModelError> {
        self.pos += 1;
        let mut items = Vec::new();
        self.skip_ws();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(FieldValue::List(items));
        }
        loop {
            self.skip_ws();
            items.push(self.value(depth + 1)?);
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b']') => {
                    self.pos += 1;
                    return Ok(FieldValue::List(items));
                }
                None => return Err(self.err("unexpected end of input")),
                _ => return Err(self.err("expected ',' or ']'")),
            }
        }
    }

    fn string(&mut self) -> Result<String, ModelError> {
        self.pos += 1;
        let mut out = String::new();
        loop {
            let start = self.pos;
            while let Some(c) = self.peek() {
                if c == b'"' || c == b'\\' || c < 0x20 {
                    break;
                }
                self.pos += 1;
            }
            let chunk = std::str::from_utf8(&self.data[start..self.pos])
                .map_err(|e| self.err_at(start + e.valid_up_to(), "invalid UTF-8"))?;
            out.push_str(chunk);
            match self.peek() {
                None => return Err(self.err("unterminated string")),
                Some(b'"') => {
                    self.pos += 1;
                    return Ok(nfc(&out));
                }
                Some(b'\\') => {
                    self.pos += 1;
                    let esc = self.peek().ok_or_else(|| self.err("unterminated escape"))?;
                    self.pos += 1;
                    match esc {
                        b'"' => out.push('"'),
                        b'\\' => out.push('\\'),
                        b'/' => out.push('/'),
                        b'b' => out.push('\u{08}'),
                        b'f' => out.push('\u{0c}'),
                        b'n' => out.push('\n'),
                        b'r' => out.push('\r'),
                        b't' => out.push('\t'),
                        b'u' => out.push(self.unicode_escape()?),
                        _ => return Err(self.err_at(self.pos - 1, "invalid escape")),
                    }
                }
                Some(_) => return Err(self.err("control character in string")),
            }
        }
    }

    fn hex4(&mut self) -> Result<u32, ModelError> {
        let s = self
            .data
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| self.err("truncated \\u escape"))?;
        let s = std::str::from_utf8(s).map_err(|_| self.err("invalid \\u escape"))?;
        let v = u32::from_str_radix(s, 16).map_err(|_| self.err("invalid \\u escape"))?;
        self.pos += 4;
        Ok(v)
    }

    fn unicode_escape(&mut self) -> Result<char, ModelError> {
        let at = self.pos;
        let hi = self.hex4()?;
        if (0xD800..0xDC00).contains(&hi) {
            if !self.eat(b"\\u") {
                return Err(self.err_at(at, "unpaired surrogate"));
            }
            let lo = self.hex4()?;
            if !(0xDC00..0xE000).contains(&lo) {
                return Err(self.err_at(at, "unpaired surrogate"));
            }
            let c = 0x10000 + ((hi - 0xD800) << 10) + (lo - 0xDC00);
            return char::from_u32(c).ok_or_else(|| self.err_at(at, "invalid code point"));
        }
        char::from_u32(hi).ok_or_else(|| self.err_at(at, "unpaired surrogate"))
    }

    fn number(&mut self) -> Result<FieldValue, ModelError> {
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        match self.peek() {
            Some(b'0') => self.pos += 1,
            Some(b'1'..=b'9') => {
                while let Some(b'0'..=b'9') = self.peek() {
                    self.pos += 1;
                }
            }
            _ => return Err(self.err("invalid number")),
        }
        let mut is_decimal = false;
        if self.peek() == Some(b'.') {
            is_decimal = true;
            self.pos += 1;
            if !matches!(self.peek(), Some(b'0'..=b'9')) {
                return Err(self.err("expected digit after '.'"));
            }
            while let Some(b'0'..=b'9') = self.peek() {
                self.pos += 1;
            }
        }
        if let Some(b'e' | b'E') = self.peek() {
            is_decimal = true;
            self.pos += 1;
            if let Some(b'+' | b'-') = self.peek() {
                self.pos += 1;
            }
            if !matches!(self.peek(), Some(b'0'..=b'9')) {
                return Err(self.err("expected digit in exponent"));
            }
            while let Some(b'0'..=b'9') = self.peek() {
                self.pos += 1;
            }
        }
        let text = std::str::from_utf8(&self.data[start..self.pos]).expect("ascii");
        if !is_decimal {
            if let Ok(i) = text.parse::<i64>() {
                return Ok(FieldValue::Integer(i));
            }
        }
        let d: f64 = text
            .parse()
            .map_err(|_| self.err_at(start, "invalid number"))?;
        if !d.is_finite() && !self.allow_non_finite {
            return Err(self.err_at(start, "number out of range"));
        }
        Ok(FieldValue::Decimal(d))
    }
}

/// 1-based line and column (in bytes) of a byte offset.
pub fn line_col(data: &[u8], offset: usize) -> (usize, usize) {
    let upto = &data[..offset.min(data.len())];
    let line = upto.iter().filter(|&&b| b == b'\n').count() + 1;
    let col = match upto.iter().rposition(|&b| b == b'\n') {
        Some(nl) => offset - nl,
        None => offset + 1,
    };
    (line, col)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn render(v: &FieldValue) -> String {
        let mut out = Vec::new();
        write_value(&mut out, v);
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn decimals_keep_a_marker() {
        assert_eq!(render(&FieldValue::Decimal(12.0)), "12.0");
        assert_eq!(render(&FieldValue::Decimal(0.1)), "0.1");
        assert_eq!(render(&FieldValue::Decimal(-0.0)), "0.0");
        assert_eq!(render(&FieldValue::Decimal(1e21)), "1e21");
        assert_eq!(render(&FieldValue::Integer(-3)), "-3");
    }

    #[test]
    fn integer_and_decimal_stay_distinct() {
        assert_eq!(parse(b"12", false).unwrap(), FieldValue::Integer(12));
        assert_eq!(parse(b"12.0", false).unwrap(), FieldValue::Decimal(12.0));
        assert_eq!(parse(b"1e2", false).unwrap(), FieldValue::Decimal(100.0));
        assert_eq!(
            parse(b"99999999999999999999", false).unwrap(),
            FieldValue::Decimal(1e20)
        );
    }

    #[test]
    fn escapes_controls() {
        assert_eq!(render(&FieldValue::text("a\"b\\c\n\u{1}")), r#""a\"b\\c\n\u0001""#);
    }

    #[test]
    fn truncated_object_reports_offset() {
        match parse(br#"{"a":"#, false) {
            Err(ModelError::Parse { offset, line, column, .. }) => {
                assert_eq!((offset, line, column), (5, 1, 6));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_keys_rejected() {
        assert!(matches!(
            parse(br#"{"a":1,"a":2}"#, false),
            Err(ModelError::Parse { offset: 7, .. })
        ));
    }

    #[test]
    fn non_finite_literals_are_gated() {
        assert!(parse(b"NaN", false).is_err());
        assert!(matches!(parse(b"NaN", true), Ok(FieldValue::Decimal(d)) if d.is_nan()));
        assert!(matches!(parse(b"-Infinity", true), Ok(FieldValue::Decimal(d)) if d == f64::NEG_INFINITY));
        assert!(parse(b"1e999", false).is_err());
    }

    #[test]
    fn surrogate_pairs() {
        assert_eq!(parse(br#""\ud83c\udf3f""#, false).unwrap(), FieldValue::text("\u{1f33f}"));
        assert!(parse(br#""\ud83c""#, false).is_err());
    }

    #[test]
    fn line_col_counts_newlines() {
        assert_eq!(line_col(b"ab\ncd", 4), (2, 2));
    }
}
