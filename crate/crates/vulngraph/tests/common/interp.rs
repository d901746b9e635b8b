//! A concrete interpreter for the C subset, used as an independent
//! ground-truth check on corpus labels: a sample is vulnerable exactly
//! when executing it performs an out-of-bounds array write.
//!
//! Generated functions take no inputs, so a single execution decides the
//! label. Anything the interpreter does not model (or a read of an
//! undeclared/uninitialized scalar) is an error, so silent disagreement
//! is impossible.

use std::collections::HashMap;
use vulngraph::frontend::{lex, parse_source, AstNode, NodeType};

/// Run the function and report whether any out-of-bounds write happened.
pub fn observed_out_of_bounds_write(code: &str) -> Result<bool, String> {
    let ast = parse_source(code).map_err(|e| e.to_string())?;
    let body = ast.children.last().ok_or("function has no body")?;
    let mut interp = Interp::default();
    interp.exec(body)?;
    Ok(interp.oob_write)
}

#[derive(Default)]
struct Interp {
    scalars: HashMap<String, Option<i64>>,
    arrays: HashMap<String, Vec<i64>>,
    steps: usize,
    oob_write: bool,
}

enum Flow {
    Normal,
    Return,
}

impl Interp {
    fn tick(&mut self) -> Result<(), String> {
        self.steps += 1;
        if self.steps > 2_000_000 {
            return Err("step budget exceeded (non-terminating function?)".into());
        }
        Ok(())
    }

    fn exec(&mut self, stmt: &AstNode) -> Result<Flow, String> {
        self.tick()?;
        match stmt.node_type {
            NodeType::CompoundStatement => {
                for child in &stmt.children {
                    if let Flow::Return = self.exec(child)? {
                        return Ok(Flow::Return);
                    }
                }
                Ok(Flow::Normal)
            }
            NodeType::IdentifierDeclStmt => {
                self.declare(&stmt.children[0])?;
                Ok(Flow::Normal)
            }
            NodeType::ExpressionStmt => {
                self.eval(&stmt.children[0])?;
                Ok(Flow::Normal)
            }
            NodeType::IfStatement => {
                let cond = self.eval(&stmt.children[0].children[0])?;
                if cond != 0 {
                    self.exec(&stmt.children[1])
                } else if let Some(els) = stmt.children.get(2) {
                    self.exec(&els.children[0])
                } else {
                    Ok(Flow::Normal)
                }
            }
            NodeType::WhileStatement => {
                while self.eval(&stmt.children[0].children[0])? != 0 {
                    if let Flow::Return = self.exec(&stmt.children[1])? {
                        return Ok(Flow::Return);
                    }
                    self.tick()?;
                }
                Ok(Flow::Normal)
            }
            NodeType::ReturnStatement => {
                if let Some(expr) = stmt.children.first() {
                    self.eval(expr)?;
                }
                Ok(Flow::Return)
            }
            other => Err(format!("unsupported statement {other}")),
        }
    }

    /// `IdentifierDecl` children are `[type, name]` plus an array size or
    /// a scalar initializer; the two are distinguished by whether a `[`
    /// follows the declared name in the declaration text.
    fn declare(&mut self, decl: &AstNode) -> Result<(), String> {
        let name = decl.children[1].code.clone();
        let toks = lex(&decl.code).map_err(|e| e.to_string())?;
        let is_array = toks.get(1).is_some_and(|t| t.text == "[");
        match (is_array, decl.children.len()) {
            (true, 3) => {
                let len = self.eval(&decl.children[2])?;
                if !(0..=1_000_000).contains(&len) {
                    return Err(format!("implausible array length {len} for {name}"));
                }
                self.arrays.insert(name, vec![0; len as usize]);
            }
            (false, 3) => {
                let value = self.eval(&decl.children[2])?;
                self.scalars.insert(name, Some(value));
            }
            (false, 2) => {
                self.scalars.insert(name, None);
            }
            _ => return Err(format!("unsupported declaration {:?}", decl.code)),
        }
        Ok(())
    }

    fn eval(&mut self, expr: &AstNode) -> Result<i64, String> {
        self.tick()?;
        match expr.node_type {
            NodeType::PrimaryExpr => literal_value(&expr.code),
            NodeType::Identifier => match self.scalars.get(&expr.code) {
                Some(Some(v)) => Ok(*v),
                Some(None) => Err(format!("read of uninitialized scalar {:?}", expr.code)),
                None => Err(format!("read of undeclared scalar {:?}", expr.code)),
            },
            NodeType::ArrayIndexing => {
                let (name, idx) = self.index_target(expr)?;
                let cells = self
                    .arrays
                    .get(&name)
                    .ok_or_else(|| format!("indexing undeclared array {name:?}"))?;
                usize::try_from(idx)
                    .ok()
                    .and_then(|i| cells.get(i).copied())
                    .ok_or_else(|| format!("out-of-bounds read {name}[{idx}]"))
            }
            NodeType::AssignmentExpression => self.assign(expr),
            NodeType::RelationalExpression => {
                let lhs = self.eval(&expr.children[0])?;
                let rhs = self.eval(&expr.children[1])?;
                let op = top_level_op(&expr.code, &["<", ">", "<=", ">=", "==", "!="], true)?;
                let hit = match op.as_str() {
                    "<" => lhs < rhs,
                    ">" => lhs > rhs,
                    "<=" => lhs <= rhs,
                    ">=" => lhs >= rhs,
                    "==" => lhs == rhs,
                    _ => lhs != rhs,
                };
                Ok(hit as i64)
            }
            NodeType::AdditiveExpression => {
                let lhs = self.eval(&expr.children[0])?;
                let rhs = self.eval(&expr.children[1])?;
                match top_level_op(&expr.code, &["+", "-"], true)?.as_str() {
                    "+" => Ok(lhs.wrapping_add(rhs)),
                    _ => Ok(lhs.wrapping_sub(rhs)),
                }
            }
            NodeType::CallExpression => self.call(expr),
            other => Err(format!("unsupported expression {other}")),
        }
    }

    fn assign(&mut self, expr: &AstNode) -> Result<i64, String> {
        let op = top_level_op(&expr.code, &["=", "+=", "-="], false)?;
        let rhs = self.eval(&expr.children[1])?;
        let target = &expr.children[0];
        match target.node_type {
            NodeType::Identifier => {
                let name = target.code.clone();
                let new = match op.as_str() {
                    "=" => rhs,
                    _ => {
                        let old = match self.scalars.get(&name) {
                            Some(Some(v)) => *v,
                            _ => return Err(format!("compound assignment to unset {name:?}")),
                        };
                        if op == "+=" {
                            old.wrapping_add(rhs)
                        } else {
                            old.wrapping_sub(rhs)
                        }
                    }
                };
                self.scalars.insert(name, Some(new));
                Ok(new)
            }
            NodeType::ArrayIndexing => {
                let (name, idx) = self.index_target(target)?;
                let len = self
                    .arrays
                    .get(&name)
                    .ok_or_else(|| format!("write to undeclared array {name:?}"))?
                    .len();
                let in_bounds = (0..len as i64).contains(&idx);
                if !in_bounds {
                    self.oob_write = true;
                    return Ok(rhs);
                }
                let cells = self.arrays.get_mut(&name).unwrap();
                let new = match op.as_str() {
                    "=" => rhs,
                    "+=" => cells[idx as usize].wrapping_add(rhs),
                    _ => cells[idx as usize].wrapping_sub(rhs),
                };
                cells[idx as usize] = new;
                Ok(new)
            }
            ref other => Err(format!("unsupported assignment target {other}")),
        }
    }

    fn index_target(&mut self, expr: &AstNode) -> Result<(String, i64), String> {
        let base = &expr.children[0];
        if base.node_type != NodeType::Identifier {
            return Err(format!("unsupported array base {}", base.node_type));
        }
        let idx = self.eval(&expr.children[1])?;
        Ok((base.code.clone(), idx))
    }

    fn call(&mut self, expr: &AstNode) -> Result<i64, String> {
        let callee = expr.children[0].code.as_str();
        let args: Vec<&AstNode> = expr.children[1..].iter().map(|a| &a.children[0]).collect();
        match callee {
            "printf" => Ok(0), // output only; generated arguments are literals
            "memset" => {
                let [dst, _val, count] = args[..] else {
                    return Err("memset expects 3 arguments".into());
                };
                let count = self.eval(count)?;
                self.bulk_write(dst, count)
            }
            "memcpy" => {
                let [dst, _src, count] = args[..] else {
                    return Err("memcpy expects 3 arguments".into());
                };
                let count = self.eval(count)?;
                self.bulk_write(dst, count)
            }
            "strcpy" => {
                let [dst, src] = args[..] else {
                    return Err("strcpy expects 2 arguments".into());
                };
                if src.node_type != NodeType::PrimaryExpr || !src.code.starts_with('"') {
                    return Err("strcpy source must be a string literal".into());
                }
                let bytes = unescape(&src.code[1..src.code.len() - 1])?;
                self.bulk_write(dst, bytes.len() as i64 + 1)
            }
            other => Err(format!("unsupported callee {other:?}")),
        }
    }

    /// Model a library write of `count` cells starting at `dst[0]`.
    fn bulk_write(&mut self, dst: &AstNode, count: i64) -> Result<i64, String> {
        if dst.node_type != NodeType::Identifier {
            return Err(format!("unsupported write destination {}", dst.node_type));
        }
        let cells = self
            .arrays
            .get_mut(&dst.code)
            .ok_or_else(|| format!("write to undeclared array {:?}", dst.code))?;
        if count < 0 {
            return Err(format!("negative write length {count}"));
        }
        if count as usize > cells.len() {
            self.oob_write = true;
        }
        let stop = (count as usize).min(cells.len());
        cells[..stop].fill(0);
        Ok(0)
    }
}

/// Operator of a compound expression, recovered by re-lexing its text and
/// scanning bracket-depth 0; `last` selects the outermost operator of a
/// left-associative chain.
fn top_level_op(code: &str, candidates: &[&str], last: bool) -> Result<String, String> {
    let toks = lex(code).map_err(|e| e.to_string())?;
    let mut depth = 0i32;
    let mut found = None;
    for t in toks {
        match t.text.as_str() {
            "(" | "[" => depth += 1,
            ")" | "]" => depth -= 1,
            s if depth == 0 && candidates.contains(&s) => {
                found = Some(s.to_string());
                if !last {
                    break;
                }
            }
            _ => {}
        }
    }
    found.ok_or_else(|| format!("no operator from {candidates:?} in {code:?}"))
}

fn literal_value(text: &str) -> Result<i64, String> {
    if let Ok(n) = text.parse::<i64>() {
        return Ok(n);
    }
    if text.starts_with('\'') && text.ends_with('\'') && text.len() >= 3 {
        let bytes = unescape(&text[1..text.len() - 1])?;
        if bytes.len() == 1 {
            return Ok(bytes[0] as i64);
        }
        return Err(format!("multi-character literal {text:?}"));
    }
    if text.starts_with('"') {
        return Ok(0); // string value itself is never used arithmetically
    }
    Err(format!("unsupported literal {text:?}"))
}

fn unescape(body: &str) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    let mut bytes = body.bytes();
    while let Some(b) = bytes.next() {
        if b != b'\\' {
            out.push(b);
            continue;
        }
        let esc = bytes.next().ok_or("dangling escape")?;
        out.push(match esc {
            b'0' => 0,
            b'n' => b'\n',
            b't' => b'\t',
            b'r' => b'\r',
            b'\\' => b'\\',
            b'\'' => b'\'',
            b'"' => b'"',
            other => return Err(format!("unsupported escape \\{}", other as char)),
        });
    }
    Ok(out)
}
