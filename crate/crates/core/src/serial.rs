//! Helpers for the line-oriented model file format.

use std::str::FromStr;

use crate::error::Error;

/// 17 significant digits; parses back to the identical `f64`.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Percent-escapes whitespace and `%` so a surface form is one field.
pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c == '%' || c.is_whitespace() {
            let mut buf = [0u8; 4];
            for b in c.encode_utf8(&mut buf).bytes() {
                out.push_str(&format!("%{b:02X}"));
            }
        } else {
            out.push(c);
        }
    }
    out
}

pub fn unescape(s: &str) -> Result<String, String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s
                .get(i + 1..i + 3)
                .ok_or_else(|| format!("truncated escape in `{s}`"))?;
            out.push(u8::from_str_radix(hex, 16).map_err(|_| format!("bad escape in `{s}`"))?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| format!("escape in `{s}` is not UTF-8"))
}

/// Cursor over the non-empty lines of a model file.
pub struct Lines<'a> {
    source_name: String,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    current: usize,
}

impl<'a> Lines<'a> {
    pub fn new(text: &'a str, source_name: &str) -> Self {
        Lines {
            source_name: source_name.to_string(),
            lines: text.lines().enumerate().peekable(),
            current: 0,
        }
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(&self.source_name, self.current, message)
    }

    pub fn next_line(&mut self) -> Result<&'a str, Error> {
        for (i, line) in self.lines.by_ref() {
            self.current = i + 1;
            if !line.trim().is_empty() {
                return Ok(line);
            }
        }
        Err(self.error("unexpected end of file"))
    }

    pub fn peek_line(&mut self) -> Option<&'a str> {
        while let Some(&(_, line)) = self.lines.peek() {
            if line.trim().is_empty() {
                self.lines.next();
            } else {
                return Some(line);
            }
        }
        None
    }

    pub fn expect_exact(&mut self, expected: &str) -> Result<(), Error> {
        let line = self.next_line()?;
        if line.trim_end() != expected {
            return Err(self.error(format!("expected `{expected}`, found `{line}`")));
        }
        Ok(())
    }

    /// Next line must be `keyword f1 ... fn`; returns the fields.
    pub fn fields(&mut self, keyword: &str, n: usize) -> Result<Vec<&'a str>, Error> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(keyword) {
            return Err(self.error(format!("expected `{keyword}` line, found `{line}`")));
        }
        let fields: Vec<&str> = parts.collect();
        if fields.len() != n {
            return Err(self.error(format!(
                "`{keyword}` line needs {n} fields, found {}",
                fields.len()
            )));
        }
        Ok(fields)
    }

    pub fn float(&self, s: &str) -> Result<f64, Error> {
        s.parse::<f64>()
            .map_err(|_| self.error(format!("bad number `{s}`")))
    }

    pub fn int<T: FromStr>(&self, s: &str) -> Result<T, Error> {
        s.parse::<T>()
            .map_err(|_| self.error(format!("bad integer `{s}`")))
    }
}
