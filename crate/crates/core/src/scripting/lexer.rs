use super::{ErrorKind, ScriptError};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    Assign,
    LParen,
    RParen,
    Comma,
    Amp,
    Newline,
    For,
    In,
    EndFor,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier {s:?}"),
            Tok::Number(x) => format!("number {x}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Assign => "'='".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::Amp => "'&'".into(),
            Tok::Newline => "end of line".into(),
            Tok::For => "'for'".into(),
            Tok::In => "'in'".into(),
            Tok::EndFor => "'endfor'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

/// Splits source text into tokens. `#` starts a comment running to the end
/// of the line; line and column numbers are 1-based, columns count chars.
pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ScriptError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| ScriptError::new(line, col, ErrorKind::Syntax(msg));

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let push = |out: &mut Vec<Token>, tok| {
            out.push(Token {
                tok,
                line: tl,
                col: tc,
            })
        };
        match c {
            '\n' => {
                push(&mut out, Tok::Newline);
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            ' ' | '\t' | '\r' => {}
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '=' => push(&mut out, Tok::Assign),
            '(' => push(&mut out, Tok::LParen),
            ')' => push(&mut out, Tok::RParen),
            ',' => push(&mut out, Tok::Comma),
            '&' => push(&mut out, Tok::Amp),
            '"' => {
                let mut s = String::new();
                let mut j = i + 1;
                loop {
                    match chars.get(j) {
                        None | Some('\n') => {
                            return Err(err(tl, tc, "unterminated string literal".into()))
                        }
                        Some('"') => break,
                        Some('\\') => {
                            let e = match chars.get(j + 1) {
                                Some('"') => '"',
                                Some('\\') => '\\',
                                Some('n') => '\n',
                                Some('t') => '\t',
                                other => {
                                    return Err(err(
                                        line,
                                        col + (j - i),
                                        format!(
                                            "bad escape sequence \\{}",
                                            other.map_or(String::new(), |c| c.to_string())
                                        ),
                                    ))
                                }
                            };
                            s.push(e);
                            j += 2;
                        }
                        Some(&c) => {
                            s.push(c);
                            j += 1;
                        }
                    }
                }
                push(&mut out, Tok::Str(s));
                col += j + 1 - i;
                i = j + 1;
                continue;
            }
            c if c.is_ascii_digit()
                || c == '.'
                || (c == '-' && next_starts_number(&chars, i + 1)) =>
            {
                let mut j = i + 1;
                while j < chars.len() {
                    let d = chars[j];
                    let exp_sign = (d == '+' || d == '-') && matches!(chars[j - 1], 'e' | 'E');
                    if d.is_ascii_alphanumeric() || d == '.' || d == '_' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let text: String = chars[i..j].iter().collect();
                let value = text
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(tl, tc, format!("bad number literal {text:?}")))?;
                push(&mut out, Tok::Number(value));
                col += j - i;
                i = j;
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i + 1;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                let tok = match word.as_str() {
                    "for" => Tok::For,
                    "in" => Tok::In,
                    "endfor" => Tok::EndFor,
                    _ => Tok::Ident(word),
                };
                push(&mut out, tok);
                col += j - i;
                i = j;
                continue;
            }
            other => return Err(err(tl, tc, format!("unexpected character {other:?}"))),
        }
        i += 1;
        col += 1;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

fn next_starts_number(chars: &[char], i: usize) -> bool {
    chars
        .get(i)
        .is_some_and(|c| c.is_ascii_digit() || *c == '.')
}
