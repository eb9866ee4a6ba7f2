//! Comment removal and blank-line normalization for Solidity source text.

use super::CorpusError;

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Code,
    LineComment,
    BlockComment { start_line: usize },
    Str { quote: char, start_line: usize },
}

/// Tracks the output line being built so that lines which held nothing but
/// comments can be dropped whole.
struct LineWriter {
    out: String,
    line_start: usize,
    had_comment: bool,
    had_code: bool,
}

impl LineWriter {
    fn push_code(&mut self, c: char) {
        if !c.is_whitespace() {
            self.had_code = true;
        }
        self.out.push(c);
    }

    fn end_line(&mut self) {
        if self.had_comment && !self.had_code {
            self.out.truncate(self.line_start);
        } else {
            self.out.push('\n');
        }
        self.line_start = self.out.len();
        self.had_comment = false;
        self.had_code = false;
    }

    fn finish(mut self) -> String {
        if self.had_comment && !self.had_code {
            self.out.truncate(self.line_start);
        }
        self.out
    }

    fn last_char(&self) -> Option<char> {
        self.out[self.line_start..].chars().next_back()
    }
}

/// Removes `//` and `/* */` comments, leaving string literals untouched.
///
/// A line that held only comments (and whitespace) is removed together with
/// its newline; any other line keeps its position. Block comments do not nest:
/// the first `*/` closes. When a block comment sits between two
/// non-whitespace characters a single space replaces it so the neighbouring
/// tokens stay separate.
pub fn strip_comments(source: &str) -> Result<String, CorpusError> {
    let mut w = LineWriter {
        out: String::with_capacity(source.len()),
        line_start: 0,
        had_comment: false,
        had_code: false,
    };
    let mut state = State::Code;
    let mut line = 1usize;
    let mut chars = source.chars().peekable();

    while let Some(c) = chars.next() {
        match state {
            State::Code => match c {
                '/' if chars.peek() == Some(&'/') => {
                    chars.next();
                    w.had_comment = true;
                    state = State::LineComment;
                }
                '/' if chars.peek() == Some(&'*') => {
                    chars.next();
                    w.had_comment = true;
                    state = State::BlockComment { start_line: line };
                }
                '"' | '\'' => {
                    w.push_code(c);
                    state = State::Str { quote: c, start_line: line };
                }
                '\n' => {
                    w.end_line();
                    line += 1;
                }
                _ => w.push_code(c),
            },
            State::LineComment => {
                if c == '\n' {
                    w.end_line();
                    line += 1;
                    state = State::Code;
                }
            }
            State::BlockComment { .. } => match c {
                '*' if chars.peek() == Some(&'/') => {
                    chars.next();
                    let before = w.last_char().is_some_and(|p| !p.is_whitespace());
                    let after = chars.peek().is_some_and(|n| !n.is_whitespace());
                    if before && after {
                        w.out.push(' ');
                    }
                    state = State::Code;
                }
                '\n' => {
                    w.end_line();
                    w.had_comment = true;
                    line += 1;
                }
                _ => {}
            },
            State::Str { quote, start_line } => match c {
                '\\' => {
                    w.push_code(c);
                    match chars.next() {
                        Some('\n') | None => return Err(CorpusError::UnterminatedString { line: start_line }),
                        Some(escaped) => w.push_code(escaped),
                    }
                }
                '\n' => return Err(CorpusError::UnterminatedString { line: start_line }),
                _ => {
                    w.push_code(c);
                    if c == quote {
                        state = State::Code;
                    }
                }
            },
        }
    }

    match state {
        State::BlockComment { start_line } => Err(CorpusError::UnterminatedBlockComment { line: start_line }),
        State::Str { start_line, .. } => Err(CorpusError::UnterminatedString { line: start_line }),
        State::Code | State::LineComment => Ok(w.finish()),
    }
}

/// Strips trailing whitespace from every line, drops leading and trailing
/// blank lines, and collapses each run of blank lines to a single one.
/// Non-empty output ends with exactly one newline; input without any
/// content yields the empty string.
pub fn collapse_blank_lines(source: &str) -> String {
    let mut out = String::with_capacity(source.len());
    let mut pending_blank = false;
    for raw in source.split('\n') {
        let line = raw.trim_end();
        if line.is_empty() {
            pending_blank = !out.is_empty();
            continue;
        }
        if pending_blank {
            out.push('\n');
            pending_blank = false;
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// The full cleaning pass applied to every downloaded source.
pub fn clean_source(raw: &str) -> Result<String, CorpusError> {
    strip_comments(raw).map(|s| collapse_blank_lines(&s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn own_line_comment_is_removed_with_its_newline() {
        assert_eq!(strip_comments("// note\nuint a;").unwrap(), "uint a;");
        assert_eq!(strip_comments("uint a;\n    // note\nuint b;\n").unwrap(), "uint a;\nuint b;\n");
    }

    #[test]
    fn inline_block_comment() {
        assert_eq!(strip_comments("uint a; /* x */ uint b;").unwrap(), "uint a;  uint b;");
    }

    #[test]
    fn adjacent_tokens_are_kept_apart() {
        assert_eq!(strip_comments("a/**/b").unwrap(), "a b");
        assert_eq!(strip_comments("a /**/b").unwrap(), "a b");
    }

    #[test]
    fn strings_are_untouched() {
        let s = "string s = \"//not a comment\";";
        assert_eq!(strip_comments(s).unwrap(), s);
        let s = "string t = '/* nor this */'; string u = \"esc \\\" // still\";";
        assert_eq!(strip_comments(s).unwrap(), s);
    }

    #[test]
    fn trailing_comment_keeps_code_line() {
        assert_eq!(strip_comments("uint a; // trailing\nuint b;").unwrap(), "uint a; \nuint b;");
    }

    #[test]
    fn multiline_block_comments() {
        let src = "/**\n * @title T\n */\ncontract T {\n    uint a; /* spans\n    lines */ uint b;\n}\n";
        assert_eq!(strip_comments(src).unwrap(), "contract T {\n    uint a; \n uint b;\n}\n");
    }

    #[test]
    fn block_comments_do_not_nest() {
        assert_eq!(strip_comments("a /* /* inner */ b */").unwrap(), "a  b */");
    }

    #[test]
    fn unterminated_constructs_report_line() {
        assert!(matches!(
            strip_comments("uint a;\n/* open\nnever closed"),
            Err(CorpusError::UnterminatedBlockComment { line: 2 })
        ));
        assert!(matches!(
            strip_comments("a;\nb;\nstring s = \"oops\nc;"),
            Err(CorpusError::UnterminatedString { line: 3 })
        ));
        assert!(matches!(strip_comments("'x"), Err(CorpusError::UnterminatedString { line: 1 })));
    }

    #[test]
    fn collapse_examples() {
        assert_eq!(collapse_blank_lines("a\n\n\n\nb"), "a\n\nb\n");
        assert_eq!(collapse_blank_lines(""), "");
        assert_eq!(collapse_blank_lines("a  \nb"), "a\nb\n");
        assert_eq!(collapse_blank_lines("\n\n  \n"), "");
        assert_eq!(collapse_blank_lines("\n\na\r\n\t\n \nb\n\n\n"), "a\n\nb\n");
    }

    #[test]
    fn clean_is_idempotent_on_examples() {
        let src = "pragma solidity ^0.4.24; // v\n\n\n/* hdr */\ncontract A {   \n  function f() { x = a/b; } // y\n}\n";
        let once = clean_source(src).unwrap();
        assert_eq!(clean_source(&once).unwrap(), once);
        assert_eq!(once, "pragma solidity ^0.4.24;\n\ncontract A {\n  function f() { x = a/b; }\n}\n");
    }
}
