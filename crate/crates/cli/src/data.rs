//! Plain-text sample ingestion.
//!
//! One number per line. Blank lines and lines starting with `#` are skipped,
//! and the first content line may be a single-column header. A trailing comma
//! is tolerated so single-column CSV exports load unchanged.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub values: Vec<f64>,
    pub source: PathBuf,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub source: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{l}: {}", self.source.display(), self.message),
            None => write!(f, "{}: {}", self.source.display(), self.message),
        }
    }
}

impl Dataset {
    /// Reads `path`, or standard input when `path` is `-`.
    pub fn load(path: &Path) -> Result<Self, ParseError> {
        let text = if path == Path::new("-") {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map(|_| s)
                .map_err(|e| e.to_string())
        } else {
            std::fs::read_to_string(path).map_err(|e| e.to_string())
        }
        .map_err(|message| ParseError {
            source: path.to_path_buf(),
            line: None,
            message,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self, ParseError> {
        let err = |line: usize, message: String| ParseError {
            source: source.to_path_buf(),
            line: Some(line),
            message,
        };
        let mut values = Vec::new();
        let mut warnings = Vec::new();
        let mut seen_content = false;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let field = line.strip_suffix(',').unwrap_or(line).trim();
            if field.contains(',') || field.contains(char::is_whitespace) {
                return Err(err(lineno, format!("expected one value, found '{line}'")));
            }
            let field = field.trim_matches('"');
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                Ok(_) => return Err(err(lineno, format!("non-finite value '{field}'"))),
                Err(_) if !seen_content && !looks_numeric(field) => {
                    warnings.push(format!("line {lineno}: treated '{field}' as a header"));
                }
                Err(_) => return Err(err(lineno, format!("cannot parse '{field}' as a number"))),
            }
            seen_content = true;
        }
        if values.is_empty() {
            return Err(ParseError {
                source: source.to_path_buf(),
                line: None,
                message: "no data values".into(),
            });
        }
        Ok(Self {
            values,
            source: source.to_path_buf(),
            warnings,
        })
    }
}

/// Header names must not start like a number, so a typo such as `1.2.3` on
/// the first line is reported instead of being skipped.
fn looks_numeric(s: &str) -> bool {
    s.starts_with(|c: char| c.is_ascii_digit() || matches!(c, '+' | '-' | '.'))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset, ParseError> {
        Dataset::parse(text, Path::new("mem"))
    }

    #[test]
    fn values_comments_and_header() {
        let d = parse("# returns\nret\n1.5\n\n-2e-3\n# mid comment\n4,\n").unwrap();
        assert_eq!(d.values, vec![1.5, -0.002, 4.0]);
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn rejects_non_finite_with_line_number() {
        for bad in ["NaN", "inf", "-Infinity"] {
            let e = parse(&format!("1\n2\n{bad}\n")).unwrap_err();
            assert_eq!(e.line, Some(3), "{bad}");
            assert!(e.to_string().starts_with("mem:3:"));
        }
    }

    #[test]
    fn second_header_is_an_error() {
        let e = parse("x\n1\ny\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = parse("1.2.3\n4\n").unwrap_err();
        assert_eq!(e.line, Some(1));
    }

    #[test]
    fn multi_column_and_empty_inputs() {
        assert_eq!(parse("1,2\n").unwrap_err().line, Some(1));
        assert_eq!(parse("1 2\n").unwrap_err().line, Some(1));
        assert!(parse("# nothing\n\n").is_err());
        assert!(parse("header\n").is_err());
    }
}
