//! Concrete syntax of document scripts.
//!
//! ```text
//! LOOP OVER x0 DO
//!  FOR SOME x1 SUCH THAT f2(x0) = x1 DO
//!   PRINT x1
//!  END
//! ENDFOR
//! ```
//!
//! One command per line, keywords in upper case, indentation ignored on
//! input. Binders are named by their nesting level (`x0` outermost).

use std::fmt::Write;

use crate::error::{Error, Result};

use super::ast::{Block, Command, Condition, ScriptAst, Var};

/// How function indices are spelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FunctionNaming {
    /// `f1` is the identity.
    #[default]
    OneBased,
    /// `f0` is the identity.
    ZeroBased,
}

impl FunctionNaming {
    fn label(self, function: usize) -> usize {
        match self {
            FunctionNaming::OneBased => function,
            FunctionNaming::ZeroBased => function - 1,
        }
    }

    fn index(self, label: usize) -> usize {
        match self {
            FunctionNaming::OneBased => label,
            FunctionNaming::ZeroBased => label + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    pub naming: FunctionNaming,
    pub free_vars: usize,
}

pub fn parse_script(text: &str) -> Result<ScriptAst> {
    parse_script_with(text, ParseOptions::default())
}

pub fn parse_script_with(text: &str, options: ParseOptions) -> Result<ScriptAst> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        naming: options.naming,
        bound: options.free_vars,
    };
    let root = parser.command()?;
    if let Some(tok) = parser.peek() {
        return Err(tok.syntax(format!("unexpected `{}` after script", tok.text)));
    }
    let ast = ScriptAst {
        free_vars: options.free_vars,
        root,
    };
    ast.validate()?;
    Ok(ast)
}

pub fn render_script(ast: &ScriptAst) -> String {
    render_script_with(ast, FunctionNaming::default())
}

pub fn render_script_with(ast: &ScriptAst, naming: FunctionNaming) -> String {
    let mut out = String::new();
    render_command(&ast.root, ast.free_vars, 0, naming, &mut out);
    out.pop();
    out
}

/// Trims every line, collapses runs of blanks and drops empty lines.
pub fn normalize_whitespace(text: &str) -> String {
    text.lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_condition(c: &Condition, naming: FunctionNaming) -> String {
    format!("f{}(x{}) = x{}", naming.label(c.function), c.arg, c.result)
}

fn render_block(block: &Block, bound: usize, indent: usize, naming: FunctionNaming, out: &mut String) {
    for c in &block.0 {
        render_command(c, bound, indent, naming, out);
    }
}

fn render_command(cmd: &Command, bound: usize, indent: usize, naming: FunctionNaming, out: &mut String) {
    let pad = " ".repeat(indent);
    match cmd {
        Command::Print(v) => {
            let _ = writeln!(out, "{pad}PRINT x{v}");
        }
        Command::If {
            condition,
            then_block,
            else_block,
        } => {
            let _ = writeln!(out, "{pad}IF {} THEN", render_condition(condition, naming));
            render_block(then_block, bound, indent + 1, naming, out);
            let _ = writeln!(out, "{pad}ELSE");
            render_block(else_block, bound, indent + 1, naming, out);
            let _ = writeln!(out, "{pad}ENDIF");
        }
        Command::Loop { body } => {
            let _ = writeln!(out, "{pad}LOOP OVER x{bound} DO");
            render_block(body, bound + 1, indent + 1, naming, out);
            let _ = writeln!(out, "{pad}ENDFOR");
        }
        Command::ForSome { condition, body } => {
            let _ = writeln!(
                out,
                "{pad}FOR SOME x{bound} SUCH THAT {} DO",
                render_condition(condition, naming)
            );
            render_block(body, bound + 1, indent + 1, naming, out);
            let _ = writeln!(out, "{pad}END");
        }
    }
}

#[derive(Debug, Clone)]
struct Tok {
    text: String,
    line: usize,
    column: usize,
}

impl Tok {
    fn syntax(&self, message: String) -> Error {
        Error::Syntax {
            line: self.line,
            column: self.column,
            message,
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<Tok>> {
    let mut tokens = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let mut chars = line.char_indices().peekable();
        while let Some(&(ci, ch)) = chars.peek() {
            let (line, column) = (li + 1, ci + 1);
            if ch.is_whitespace() {
                chars.next();
            } else if matches!(ch, '(' | ')' | '=') {
                chars.next();
                tokens.push(Tok {
                    text: ch.to_string(),
                    line,
                    column,
                });
            } else if ch.is_ascii_alphanumeric() || ch == '_' {
                let mut word = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        word.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Tok {
                    text: word,
                    line,
                    column,
                });
            } else {
                return Err(Error::Syntax {
                    line,
                    column,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
    naming: FunctionNaming,
    /// Number of variables in scope.
    bound: usize,
}

const BLOCK_TERMINATORS: [&str; 4] = ["ELSE", "ENDIF", "ENDFOR", "END"];

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eof_error(&self, expected: &str) -> Error {
        let (line, column) = self
            .tokens
            .last()
            .map(|t| (t.line, t.column + t.text.len()))
            .unwrap_or((1, 1));
        Error::Syntax {
            line,
            column,
            message: format!("expected {expected}, found end of input"),
        }
    }

    fn next(&mut self, expected: &str) -> Result<Tok> {
        let tok = self.peek().cloned().ok_or_else(|| self.eof_error(expected))?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, keyword: &str) -> Result<Tok> {
        let tok = self.next(&format!("`{keyword}`"))?;
        if tok.text == keyword {
            Ok(tok)
        } else {
            Err(tok.syntax(format!("expected `{keyword}`, found `{}`", tok.text)))
        }
    }

    fn numbered(tok: &Tok, prefix: char) -> Option<usize> {
        let rest = tok.text.strip_prefix(prefix)?;
        if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        rest.parse().ok()
    }

    /// A variable reference; must be in scope.
    fn variable(&mut self) -> Result<Var> {
        let tok = self.next("a variable")?;
        let v = Self::numbered(&tok, 'x')
            .ok_or_else(|| tok.syntax(format!("expected a variable, found `{}`", tok.text)))?;
        if v >= self.bound {
            return Err(Error::Scope {
                line: tok.line,
                column: tok.column,
                variable: tok.text,
            });
        }
        Ok(v)
    }

    /// The variable introduced by a binder; must be the next level.
    fn binder(&mut self) -> Result<Var> {
        let tok = self.next("a variable")?;
        let v = Self::numbered(&tok, 'x')
            .ok_or_else(|| tok.syntax(format!("expected a variable, found `{}`", tok.text)))?;
        if v != self.bound {
            return Err(tok.syntax(format!(
                "binder introduces `{}` but the next free level is x{}",
                tok.text, self.bound
            )));
        }
        Ok(v)
    }

    fn function(&mut self) -> Result<usize> {
        let tok = self.next("a function")?;
        let label = Self::numbered(&tok, 'f')
            .ok_or_else(|| tok.syntax(format!("expected a function, found `{}`", tok.text)))?;
        if self.naming == FunctionNaming::OneBased && label == 0 {
            return Err(tok.syntax("function names start at f1".to_string()));
        }
        Ok(self.naming.index(label))
    }

    /// `fN ( xA ) = xB`, with variables resolved in the current scope.
    fn condition(&mut self) -> Result<Condition> {
        let function = self.function()?;
        self.expect("(")?;
        let arg = self.variable()?;
        self.expect(")")?;
        self.expect("=")?;
        let result = self.variable()?;
        Ok(Condition::new(function, arg, result))
    }

    fn block(&mut self) -> Result<Block> {
        let mut commands = Vec::new();
        while let Some(tok) = self.peek() {
            if BLOCK_TERMINATORS.contains(&tok.text.as_str()) {
                break;
            }
            commands.push(self.command()?);
        }
        if commands.is_empty() {
            return Err(match self.peek() {
                Some(tok) => tok.syntax(format!("empty block before `{}`", tok.text)),
                None => self.eof_error("a command"),
            });
        }
        Ok(Block(commands))
    }

    fn command(&mut self) -> Result<Command> {
        let tok = self.next("a command")?;
        match tok.text.as_str() {
            "PRINT" => Ok(Command::Print(self.variable()?)),
            "IF" => {
                let condition = self.condition()?;
                self.expect("THEN")?;
                let then_block = self.block()?;
                self.expect("ELSE")?;
                let else_block = self.block()?;
                self.expect("ENDIF")?;
                Ok(Command::If {
                    condition,
                    then_block,
                    else_block,
                })
            }
            "LOOP" => {
                self.expect("OVER")?;
                self.binder()?;
                self.expect("DO")?;
                self.bound += 1;
                let body = self.block();
                self.bound -= 1;
                let body = body?;
                self.expect("ENDFOR")?;
                Ok(Command::Loop { body })
            }
            "FOR" => {
                self.expect("SOME")?;
                let new = self.binder()?;
                self.expect("SUCH")?;
                self.expect("THAT")?;
                // The condition may mention the variable being introduced.
                self.bound += 1;
                let condition = self.condition();
                let condition = match condition {
                    Ok(c) if c.arg == new && c.result == new => Err(tok.syntax(format!(
                        "FOR SOME condition mentions x{new} twice"
                    ))),
                    Ok(c) if !c.mentions(new) => Err(tok.syntax(format!(
                        "FOR SOME condition must mention x{new}"
                    ))),
                    other => other,
                };
                let result = condition.and_then(|condition| {
                    self.expect("DO")?;
                    let body = self.block()?;
                    Ok((condition, body))
                });
                self.bound -= 1;
                let (condition, body) = result?;
                // The published grammar closes FOR SOME with ENDFOR; the
                // example scripts use END. Both are accepted.
                let close = self.next("`END`")?;
                if close.text != "END" && close.text != "ENDFOR" {
                    return Err(close.syntax(format!("expected `END`, found `{}`", close.text)));
                }
                Ok(Command::ForSome { condition, body })
            }
            other => Err(tok.syntax(format!("expected a command, found `{other}`"))),
        }
    }
}
