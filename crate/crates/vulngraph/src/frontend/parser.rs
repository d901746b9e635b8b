//! Recursive-descent parser producing [`AstNode`] trees.
//!
//! Each node's `code` is reconstructed from the token span it covers
//! (original gluing preserved, whitespace runs collapsed); compound
//! constructs carry header text only (`if (a < 55)`, `while (i < n)`,
//! `foo ()`), and statements drop their trailing `;`.

use super::ast::{AstNode, NodeType};
use super::token::{render_tokens, Token, TokenKind};
use super::FrontendError;

/// Only these callees are accepted by the parser.
pub(crate) const CALL_WHITELIST: [&str; 5] = ["malloc", "memset", "memcpy", "printf", "strcpy"];

const TYPE_KEYWORDS: [&str; 5] = ["void", "int", "char", "long", "unsigned"];

/// Parse a single C function definition from its token stream.
pub fn parse_function(tokens: &[Token]) -> Result<AstNode, FrontendError> {
    let mut parser = Parser { toks: tokens, pos: 0 };
    let mut root = parser.function()?;
    if let Some(tok) = parser.peek() {
        return Err(parser.err_at(tok, "unexpected tokens after function definition"));
    }
    root.assign_preorder_ids();
    Ok(root)
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let tok = self.toks.get(self.pos);
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    /// Current token text if it has one of the given kinds.
    fn at(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.text == text)
    }

    fn eat(&mut self, text: &str) -> bool {
        if self.at(text) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn err_at(&self, tok: &Token, message: impl Into<String>) -> FrontendError {
        FrontendError::parse(tok.line, tok.col, message)
    }

    fn err_here(&self, message: impl std::fmt::Display) -> FrontendError {
        match self.peek() {
            Some(tok) => FrontendError::parse(
                tok.line,
                tok.col,
                format!("{message}, found {:?}", tok.text),
            ),
            None => {
                let (line, col) = self
                    .toks
                    .last()
                    .map(|t| (t.line, t.col + t.text.len() as u32))
                    .unwrap_or((1, 1));
                FrontendError::parse(line, col, format!("{message}, found end of input"))
            }
        }
    }

    fn expect(&mut self, text: &str) -> Result<&'a Token, FrontendError> {
        if self.at(text) {
            Ok(self.bump().unwrap())
        } else {
            Err(self.err_here(format_args!("expected {text:?}")))
        }
    }

    fn expect_identifier(&mut self) -> Result<&'a Token, FrontendError> {
        match self.peek() {
            Some(tok) if tok.kind == TokenKind::Identifier => Ok(self.bump().unwrap()),
            _ => Err(self.err_here("expected identifier")),
        }
    }

    fn render(&self, start: usize, end: usize) -> String {
        render_tokens(&self.toks[start..end])
    }

    // --- declarations -----------------------------------------------------

    fn at_type_keyword(&self) -> bool {
        self.peek()
            .is_some_and(|t| t.kind == TokenKind::Keyword && TYPE_KEYWORDS.contains(&t.text.as_str()))
    }

    /// `int` / `char` / `long` / `void` / `unsigned (int|char|long)?`
    fn type_name(&mut self) -> Result<String, FrontendError> {
        let start = self.pos;
        if !self.at_type_keyword() {
            return Err(self.err_here("expected type name"));
        }
        let first = self.bump().unwrap();
        if first.text == "unsigned" && self.peek().is_some_and(|t| matches!(t.text.as_str(), "int" | "char" | "long")) {
            self.bump();
        }
        Ok(self.render(start, self.pos))
    }

    fn function(&mut self) -> Result<AstNode, FrontendError> {
        if self.toks.is_empty() {
            return Err(FrontendError::parse(1, 1, "empty input"));
        }
        self.type_name()?;
        let name = self.expect_identifier()?;
        let lparen = self.pos;
        self.expect("(")?;
        let mut params = Vec::new();
        let params_start = self.pos;
        if !self.at(")") {
            loop {
                params.push(self.parameter()?);
                if !self.eat(",") {
                    break;
                }
            }
        }
        let params_end = self.pos;
        self.expect(")")?;
        let header = format!("{} {}", name.text, self.render(lparen, self.pos));

        let body = self.compound()?;
        let mut children = Vec::new();
        if !params.is_empty() {
            children.push(AstNode::with_children(
                NodeType::ParameterList,
                self.render(params_start, params_end),
                params,
            ));
        }
        children.push(body);
        Ok(AstNode::with_children(NodeType::FunctionDef, header, children))
    }

    fn parameter(&mut self) -> Result<AstNode, FrontendError> {
        let start = self.pos;
        let ty = self.type_name()?;
        let name = self.expect_identifier()?;
        let mut children = vec![
            AstNode::new(NodeType::IdentifierDeclType, ty),
            AstNode::new(NodeType::Identifier, name.text.clone()),
        ];
        if self.eat("[") {
            if !self.at("]") {
                children.push(self.expression()?);
            }
            self.expect("]")?;
        }
        Ok(AstNode::with_children(NodeType::Parameter, self.render(start, self.pos), children))
    }

    // --- statements -------------------------------------------------------

    fn compound(&mut self) -> Result<AstNode, FrontendError> {
        self.expect("{")?;
        let mut stmts = Vec::new();
        while !self.at("}") {
            if self.peek().is_none() {
                return Err(self.err_here("expected \"}\""));
            }
            stmts.push(self.statement()?);
        }
        self.expect("}")?;
        Ok(AstNode::with_children(NodeType::CompoundStatement, "", stmts))
    }

    fn statement(&mut self) -> Result<AstNode, FrontendError> {
        if self.at("{") {
            self.compound()
        } else if self.at("if") {
            self.if_statement()
        } else if self.at("while") {
            self.while_statement()
        } else if self.at("return") {
            self.return_statement()
        } else if self.at_type_keyword() {
            self.declaration_statement()
        } else {
            self.expression_statement()
        }
    }

    /// `type name ( [ size ] )? ( = init )? ;` — the statement wraps an
    /// `IdentifierDecl` whose text starts at the declared name, mirroring
    /// the split between row texts `int a = 43` and `a = 43`.
    fn declaration_statement(&mut self) -> Result<AstNode, FrontendError> {
        let start = self.pos;
        let ty = self.type_name()?;
        let decl_start = self.pos;
        let name = self.expect_identifier()?;
        let mut children = vec![
            AstNode::new(NodeType::IdentifierDeclType, ty),
            AstNode::new(NodeType::Identifier, name.text.clone()),
        ];
        if self.eat("[") {
            children.push(self.expression()?);
            self.expect("]")?;
        }
        if self.eat("=") {
            children.push(self.expression()?);
        }
        let end = self.pos;
        self.expect(";")?;
        let decl =
            AstNode::with_children(NodeType::IdentifierDecl, self.render(decl_start, end), children);
        Ok(AstNode::with_children(
            NodeType::IdentifierDeclStmt,
            self.render(start, end),
            vec![decl],
        ))
    }

    /// Wrap a parenthesized controlling expression in a `Condition` node.
    fn condition(&mut self) -> Result<AstNode, FrontendError> {
        self.expect("(")?;
        let start = self.pos;
        let expr = self.expression()?;
        let code = self.render(start, self.pos);
        self.expect(")")?;
        Ok(AstNode::with_children(NodeType::Condition, code, vec![expr]))
    }

    fn if_statement(&mut self) -> Result<AstNode, FrontendError> {
        let start = self.pos;
        self.expect("if")?;
        let cond_start = self.pos;
        let cond = self.condition()?;
        let header = self.render(start, self.pos);
        debug_assert!(self.toks[cond_start].text == "(");
        let then = self.statement()?;
        let mut children = vec![cond, then];
        if self.at("else") {
            self.expect("else")?;
            let body = self.statement()?;
            children.push(AstNode::with_children(NodeType::ElseStatement, "else", vec![body]));
        }
        Ok(AstNode::with_children(NodeType::IfStatement, header, children))
    }

    fn while_statement(&mut self) -> Result<AstNode, FrontendError> {
        let start = self.pos;
        self.expect("while")?;
        let cond = self.condition()?;
        let header = self.render(start, self.pos);
        let body = self.statement()?;
        Ok(AstNode::with_children(NodeType::WhileStatement, header, vec![cond, body]))
    }

    fn return_statement(&mut self) -> Result<AstNode, FrontendError> {
        let start = self.pos;
        self.expect("return")?;
        let mut children = Vec::new();
        if !self.at(";") {
            children.push(self.expression()?);
        }
        let code = self.render(start, self.pos);
        self.expect(";")?;
        Ok(AstNode::with_children(NodeType::ReturnStatement, code, children))
    }

    fn expression_statement(&mut self) -> Result<AstNode, FrontendError> {
        let start = self.pos;
        let expr = self.expression()?;
        let code = self.render(start, self.pos);
        self.expect(";")?;
        Ok(AstNode::with_children(NodeType::ExpressionStmt, code, vec![expr]))
    }

    // --- expressions --------------------------------------------------------

    fn expression(&mut self) -> Result<AstNode, FrontendError> {
        self.assignment()
    }

    fn assignment(&mut self) -> Result<AstNode, FrontendError> {
        let start = self.pos;
        let lhs = self.relational()?;
        let is_assign_op =
            self.peek().is_some_and(|t| matches!(t.text.as_str(), "=" | "+=" | "-="));
        if !is_assign_op {
            return Ok(lhs);
        }
        if !matches!(lhs.node_type, NodeType::Identifier | NodeType::ArrayIndexing) {
            return Err(self.err_here("invalid assignment target"));
        }
        self.bump();
        let rhs = self.assignment()?;
        Ok(AstNode::with_children(
            NodeType::AssignmentExpression,
            self.render(start, self.pos),
            vec![lhs, rhs],
        ))
    }

    fn relational(&mut self) -> Result<AstNode, FrontendError> {
        let start = self.pos;
        let mut lhs = self.additive()?;
        while self
            .peek()
            .is_some_and(|t| matches!(t.text.as_str(), "<" | ">" | "<=" | ">=" | "==" | "!="))
        {
            self.bump();
            let rhs = self.additive()?;
            lhs = AstNode::with_children(
                NodeType::RelationalExpression,
                self.render(start, self.pos),
                vec![lhs, rhs],
            );
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<AstNode, FrontendError> {
        let start = self.pos;
        let mut lhs = self.postfix()?;
        loop {
            if self.at("+") || self.at("-") {
                self.bump();
                let rhs = self.postfix()?;
                lhs = AstNode::with_children(
                    NodeType::AdditiveExpression,
                    self.render(start, self.pos),
                    vec![lhs, rhs],
                );
            } else if self
                .peek()
                .is_some_and(|t| matches!(t.text.as_str(), "*" | "/" | "%" | "&&" | "||"))
            {
                return Err(self.err_here("unsupported operator"));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn postfix(&mut self) -> Result<AstNode, FrontendError> {
        let start = self.pos;
        let mut base = self.primary()?;
        loop {
            if self.at("[") {
                self.bump();
                let index = self.expression()?;
                self.expect("]")?;
                base = AstNode::with_children(
                    NodeType::ArrayIndexing,
                    self.render(start, self.pos),
                    vec![base, index],
                );
            } else if self.at("(") {
                if base.node_type != NodeType::Identifier {
                    return Err(self.err_here("only direct calls to named functions are supported"));
                }
                if !CALL_WHITELIST.contains(&base.code.as_str()) {
                    return Err(self.err_here(format_args!(
                        "call to unsupported function {:?}",
                        base.code
                    )));
                }
                self.bump();
                let mut children = vec![base];
                if !self.at(")") {
                    loop {
                        let arg_start = self.pos;
                        let arg = self.expression()?;
                        children.push(AstNode::with_children(
                            NodeType::Argument,
                            self.render(arg_start, self.pos),
                            vec![arg],
                        ));
                        if !self.eat(",") {
                            break;
                        }
                    }
                }
                self.expect(")")?;
                base = AstNode::with_children(
                    NodeType::CallExpression,
                    self.render(start, self.pos),
                    children,
                );
            } else {
                return Ok(base);
            }
        }
    }

    fn primary(&mut self) -> Result<AstNode, FrontendError> {
        match self.peek() {
            Some(tok) if tok.kind == TokenKind::Identifier => {
                self.bump();
                Ok(AstNode::new(NodeType::Identifier, tok.text.clone()))
            }
            Some(tok)
                if matches!(
                    tok.kind,
                    TokenKind::Number | TokenKind::CharLiteral | TokenKind::StringLiteral
                ) =>
            {
                self.bump();
                Ok(AstNode::new(NodeType::PrimaryExpr, tok.text.clone()))
            }
            Some(tok) if tok.text == "(" => {
                self.bump();
                let inner = self.expression()?;
                self.expect(")")?;
                Ok(inner)
            }
            _ => Err(self.err_here("expected expression")),
        }
    }
}
