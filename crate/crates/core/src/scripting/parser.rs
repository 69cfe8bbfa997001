use super::ast::{Call, Expr, Script, Stmt, StmtKind};
use super::lexer::{tokenize, Tok, Token};
use super::{is_command, ErrorKind, ScriptError};

/// Parses script text into a [`Script`].
///
/// ```
/// let s = tofbench::scripting::parse("x = 1\n").unwrap();
/// assert_eq!(s.statements.len(), 1);
/// ```
pub fn parse(text: &str) -> Result<Script, ScriptError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let statements = p.block(None)?;
    Ok(Script { statements })
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn error_at(t: &Token, msg: String) -> ScriptError {
        ScriptError::new(t.line, t.col, ErrorKind::Syntax(msg))
    }

    fn expected(t: &Token, what: &str) -> ScriptError {
        Parser::error_at(t, format!("expected {what}, found {}", t.tok.describe()))
    }

    /// Statements up to `endfor` (inside a loop opened at `open`) or the
    /// end of input (top level).
    fn block(&mut self, open: Option<&Token>) -> Result<Vec<Stmt>, ScriptError> {
        let mut stmts = Vec::new();
        loop {
            let t = self.peek().clone();
            match (&t.tok, open) {
                (Tok::Newline, _) => {
                    self.next();
                }
                (Tok::Eof, None) => return Ok(stmts),
                (Tok::Eof, Some(o)) => {
                    return Err(Parser::error_at(
                        &t,
                        format!("missing endfor for the loop opened at line {}", o.line),
                    ))
                }
                (Tok::EndFor, None) => {
                    return Err(Parser::error_at(&t, "endfor without a matching for".into()))
                }
                (Tok::EndFor, Some(_)) => {
                    self.next();
                    self.end_of_statement()?;
                    return Ok(stmts);
                }
                _ => stmts.push(self.statement()?),
            }
        }
    }

    fn end_of_statement(&mut self) -> Result<(), ScriptError> {
        let t = self.next();
        match t.tok {
            Tok::Newline | Tok::Eof => Ok(()),
            _ => Err(Parser::expected(&t, "end of line")),
        }
    }

    fn statement(&mut self) -> Result<Stmt, ScriptError> {
        let start = self.next();
        let kind = match &start.tok {
            Tok::For => {
                let var = self.ident("loop variable")?;
                let t = self.next();
                if t.tok != Tok::In {
                    return Err(Parser::expected(&t, "'in'"));
                }
                let iter = self.expr()?;
                let t = self.next();
                if t.tok != Tok::Newline {
                    return Err(Parser::expected(&t, "end of line after the loop header"));
                }
                let body = self.block(Some(&start))?;
                StmtKind::For { var, iter, body }
            }
            Tok::Ident(name) => match self.peek().tok {
                Tok::Assign => {
                    self.next();
                    let value = self.expr()?;
                    self.end_of_statement()?;
                    StmtKind::Assign {
                        name: name.clone(),
                        value,
                    }
                }
                Tok::LParen => {
                    let call = self.call(&start, name)?;
                    self.end_of_statement()?;
                    StmtKind::Call(call)
                }
                _ => return Err(Parser::expected(self.peek(), "'=' or '('")),
            },
            _ => return Err(Parser::expected(&start, "a statement")),
        };
        Ok(Stmt {
            kind,
            line: start.line,
            col: start.col,
        })
    }

    fn ident(&mut self, what: &str) -> Result<String, ScriptError> {
        let t = self.next();
        match t.tok {
            Tok::Ident(name) => Ok(name),
            _ => Err(Parser::expected(&t, what)),
        }
    }

    /// Argument list of a call whose name token has been consumed.
    fn call(&mut self, name_tok: &Token, name: &str) -> Result<Call, ScriptError> {
        if !is_command(name) {
            return Err(ScriptError::new(
                name_tok.line,
                name_tok.col,
                ErrorKind::UnknownCommand(name.to_string()),
            ));
        }
        self.next(); // '('
        let mut args = Vec::new();
        if self.peek().tok == Tok::RParen {
            self.next();
        } else {
            loop {
                args.push(self.expr()?);
                let t = self.next();
                match t.tok {
                    Tok::Comma => continue,
                    Tok::RParen => break,
                    _ => return Err(Parser::expected(&t, "',' or ')'")),
                }
            }
        }
        Ok(Call {
            name: name.to_string(),
            args,
        })
    }

    fn expr(&mut self) -> Result<Expr, ScriptError> {
        let mut parts = vec![self.primary()?];
        while self.peek().tok == Tok::Amp {
            self.next();
            parts.push(self.primary()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Expr::Concat(parts)
        })
    }

    fn primary(&mut self) -> Result<Expr, ScriptError> {
        let t = self.next();
        match &t.tok {
            Tok::Number(x) => Ok(Expr::Number(*x)),
            Tok::Str(s) => Ok(Expr::Str(s.clone())),
            Tok::Ident(name) => {
                if self.peek().tok == Tok::LParen {
                    Ok(Expr::Call(self.call(&t, name)?))
                } else {
                    Ok(Expr::Var(name.clone()))
                }
            }
            _ => Err(Parser::expected(&t, "an expression")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scripting::REFERENCE_SCRIPT;

    #[test]
    fn single_assignment() {
        let s = parse("x = 1").unwrap();
        assert_eq!(s.statements.len(), 1);
        assert_eq!(
            s.statements[0].kind,
            StmtKind::Assign {
                name: "x".into(),
                value: Expr::Number(1.0)
            }
        );
    }

    #[test]
    fn reference_script_shape() {
        let s = parse(REFERENCE_SCRIPT).unwrap();
        let loops: Vec<_> = s
            .statements
            .iter()
            .filter_map(|st| match &st.kind {
                StmtKind::For { body, .. } => Some(body),
                _ => None,
            })
            .collect();
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].len(), 5);
        assert_eq!(s.statements.len(), 3);
    }

    #[test]
    fn loop_without_body_fails_at_eof() {
        let e = parse("for f in").unwrap_err();
        assert!(matches!(e.kind, ErrorKind::Syntax(_)));
        assert_eq!((e.line, e.col), (1, 9));
        assert!(e.to_string().contains("end of input"), "{e}");
    }

    #[test]
    fn unbalanced_loops() {
        let e = parse("for f in files(\"*\")\n  Echo(f)\n").unwrap_err();
        assert!(e.to_string().contains("missing endfor"), "{e}");
        assert_eq!(e.line, 3);
        let e = parse("x = 1\nendfor\n").unwrap_err();
        assert_eq!((e.line, e.col), (2, 1));
    }

    #[test]
    fn unknown_command_is_positioned() {
        let e = parse("x = 1\ny = Frobnicate(x)\n").unwrap_err();
        assert_eq!(e.kind, ErrorKind::UnknownCommand("Frobnicate".into()));
        assert_eq!((e.line, e.col), (2, 5));
    }

    #[test]
    fn bad_literals_and_stray_tokens() {
        assert!(parse("x = 1e\n").is_err());
        assert!(parse("x = (1)\n").is_err());
        assert!(parse("x\n").is_err());
        assert!(parse("Echo(1,)\n").is_err());
        assert!(parse("Echo(1) 2\n").is_err());
    }

    #[test]
    fn concatenation_is_flat() {
        let s = parse("x = \"a\" & b & 1\n").unwrap();
        match &s.statements[0].kind {
            StmtKind::Assign {
                value: Expr::Concat(p),
                ..
            } => assert_eq!(p.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pretty_print_reparses_to_same_tree() {
        let src = "# header\nall = EmptyDataSet(\"tof_us\")\n\nfor f in files(\"r/*.trf\")\n    Echo(\"q\\\"\" & f, -0.25)\nendfor\n";
        let a = parse(src).unwrap();
        let printed = a.to_string();
        let b = parse(&printed).unwrap();
        assert_eq!(a.without_positions(), b.without_positions());
        assert_eq!(b.to_string(), printed);
    }
}
