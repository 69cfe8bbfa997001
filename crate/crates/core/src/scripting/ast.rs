use std::fmt;

/// A parsed script: a sequence of statements.
#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub statements: Vec<Stmt>,
}

/// One statement with the 1-based position of its first token.
#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign {
        name: String,
        value: Expr,
    },
    Call(Call),
    For {
        var: String,
        iter: Expr,
        body: Vec<Stmt>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub name: String,
    pub args: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Str(String),
    Var(String),
    Call(Call),
    /// `a & b & ...`, at least two parts.
    Concat(Vec<Expr>),
}

impl Script {
    /// Number of statements, counting loop bodies recursively.
    pub fn statement_count(&self) -> usize {
        fn count(stmts: &[Stmt]) -> usize {
            stmts
                .iter()
                .map(|s| match &s.kind {
                    StmtKind::For { body, .. } => 1 + count(body),
                    _ => 1,
                })
                .sum()
        }
        count(&self.statements)
    }

    /// The same tree with every position reset to line 0, column 0, for
    /// comparing structure only.
    pub fn without_positions(&self) -> Script {
        fn strip(stmts: &[Stmt]) -> Vec<Stmt> {
            stmts
                .iter()
                .map(|s| Stmt {
                    kind: match &s.kind {
                        StmtKind::For { var, iter, body } => StmtKind::For {
                            var: var.clone(),
                            iter: iter.clone(),
                            body: strip(body),
                        },
                        k => k.clone(),
                    },
                    line: 0,
                    col: 0,
                })
                .collect()
        }
        Script {
            statements: strip(&self.statements),
        }
    }
}

/// Canonical source form: one statement per line, loop bodies indented by
/// two spaces. Parsing the output yields the same tree.
impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn block(f: &mut fmt::Formatter<'_>, stmts: &[Stmt], depth: usize) -> fmt::Result {
            for s in stmts {
                write!(f, "{:width$}", "", width = depth * 2)?;
                match &s.kind {
                    StmtKind::Assign { name, value } => writeln!(f, "{name} = {value}")?,
                    StmtKind::Call(c) => writeln!(f, "{c}")?,
                    StmtKind::For { var, iter, body } => {
                        writeln!(f, "for {var} in {iter}")?;
                        block(f, body, depth + 1)?;
                        writeln!(f, "{:width$}endfor", "", width = depth * 2)?;
                    }
                }
            }
            Ok(())
        }
        block(f, &self.statements, 0)
    }
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // f64 Display is the shortest string that parses back exactly.
            Expr::Number(x) => write!(f, "{x}"),
            Expr::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Expr::Var(v) => f.write_str(v),
            Expr::Call(c) => write!(f, "{c}"),
            Expr::Concat(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" & ")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}
