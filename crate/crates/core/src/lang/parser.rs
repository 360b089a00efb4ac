use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::value::Datum;
use super::LangError;

/// Parses Mini source text into a resolved program with numbered nodes.
pub fn parse(source: &str) -> Result<Program, LangError> {
    let tokens = tokenize(source)?;
    let (functions, globals) = prescan(&tokens);
    let mut p = Parser {
        tokens,
        pos: 0,
        function_names: functions,
        global_slots: globals,
        scopes: Vec::new(),
        slots: Vec::new(),
    };
    p.program()
}

/// Collects top-level `fn NAME` and `global NAME` declarations so bodies can
/// refer to items declared later in the text.
fn prescan(tokens: &[Token]) -> (HashSet<String>, HashMap<String, u32>) {
    let mut functions = HashSet::new();
    let mut globals = HashMap::new();
    let mut depth = 0i32;
    for w in tokens.windows(2) {
        match &w[0].tok {
            Tok::LBrace => depth += 1,
            Tok::RBrace => depth -= 1,
            Tok::Fn if depth == 0 => {
                if let Tok::Ident(name) = &w[1].tok {
                    functions.insert(name.clone());
                }
            }
            Tok::Global if depth == 0 => {
                if let Tok::Ident(name) = &w[1].tok {
                    let next = globals.len() as u32;
                    globals.entry(name.clone()).or_insert(next);
                }
            }
            _ => {}
        }
    }
    (functions, globals)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    function_names: HashSet<String>,
    global_slots: HashMap<String, u32>,
    scopes: Vec<Vec<(String, u32)>>,
    slots: Vec<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, LangError> {
        let t = &self.tokens[self.pos];
        Err(LangError::Syntax { line: t.line, col: t.col, message: message.into() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, LangError> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            self.error(format!("expected {what}, found {:?}", self.peek()))
        }
    }

    fn ident(&mut self) -> Result<String, LangError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok(name)
            }
            other => self.error(format!("expected identifier, found {other:?}")),
        }
    }

    fn program(&mut self) -> Result<Program, LangError> {
        let mut globals: Vec<(String, Datum)> = Vec::new();
        let mut functions = BTreeMap::new();
        let mut tests = Vec::new();
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Global => {
                    self.bump();
                    let name = self.ident()?;
                    if globals.iter().any(|(g, _)| *g == name) {
                        return self.error(format!("duplicate global {name}"));
                    }
                    if self.function_names.contains(&name) || Builtin::from_name(&name).is_some() {
                        return self.error(format!("global {name} shadows a function"));
                    }
                    self.expect(Tok::Assign, "'='")?;
                    let init = self.literal()?;
                    self.expect(Tok::Semi, "';'")?;
                    debug_assert_eq!(self.global_slots[&name] as usize, globals.len());
                    globals.push((name, init));
                }
                Tok::Fn => {
                    let f = self.function()?;
                    if functions.contains_key(&f.name) {
                        return self.error(format!("duplicate function {}", f.name));
                    }
                    if f.is_test() {
                        if !f.params.is_empty() {
                            return self.error(format!("test {} must take no parameters", f.name));
                        }
                        tests.push(f.name.clone());
                    }
                    functions.insert(f.name.clone(), Arc::new(f));
                }
                other => return self.error(format!("expected 'fn' or 'global', found {other:?}")),
            }
        }
        Ok(Program { globals, functions, tests })
    }

    fn literal(&mut self) -> Result<Datum, LangError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Datum::Int(n))
            }
            Tok::Minus => {
                self.bump();
                match self.peek().clone() {
                    Tok::Int(n) => {
                        self.bump();
                        Ok(Datum::Int(n.wrapping_neg()))
                    }
                    _ => self.error("expected integer after '-'"),
                }
            }
            Tok::True => {
                self.bump();
                Ok(Datum::Bool(true))
            }
            Tok::False => {
                self.bump();
                Ok(Datum::Bool(false))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Datum::Str(s))
            }
            Tok::LBracket => {
                self.bump();
                let mut items = Vec::new();
                if *self.peek() != Tok::RBracket {
                    loop {
                        items.push(self.literal()?);
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBracket, "']'")?;
                Ok(Datum::Arr(items))
            }
            Tok::Amp => {
                self.bump();
                let name = self.ident()?;
                self.check_callable(&name)?;
                Ok(Datum::FnRef(name))
            }
            other => self.error(format!("global initializers must be literals, found {other:?}")),
        }
    }

    fn check_callable(&self, name: &str) -> Result<(), LangError> {
        if self.function_names.contains(name) || Builtin::from_name(name).is_some() {
            Ok(())
        } else {
            Err(LangError::Resolution(name.to_string()))
        }
    }

    fn function(&mut self) -> Result<FunctionDef, LangError> {
        self.expect(Tok::Fn, "'fn'")?;
        let name = self.ident()?;
        if Builtin::from_name(&name).is_some() {
            return self.error(format!("function {name} shadows a builtin"));
        }
        self.expect(Tok::LParen, "'('")?;
        self.slots.clear();
        self.scopes = vec![Vec::new()];
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let p = self.ident()?;
                if params.contains(&p) {
                    return self.error(format!("duplicate parameter {p}"));
                }
                self.declare(&p);
                params.push(p);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "')'")?;
        let mut body = self.block()?;
        let node_count = number_function(&mut body);
        Ok(FunctionDef {
            name,
            params,
            body,
            slots: std::mem::take(&mut self.slots),
            node_count,
        })
    }

    fn declare(&mut self, name: &str) -> u32 {
        let slot = self.slots.len() as u32;
        self.slots.push(name.to_string());
        self.scopes.last_mut().expect("scope").push((name.to_string(), slot));
        slot
    }

    fn lookup_local(&self, name: &str) -> Option<u32> {
        self.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter().rev())
            .find(|(n, _)| n == name)
            .map(|(_, slot)| *slot)
    }

    fn block(&mut self) -> Result<Vec<Stmt>, LangError> {
        self.expect(Tok::LBrace, "'{'")?;
        self.scopes.push(Vec::new());
        let mut stmts = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return self.error("unexpected end of input, expected '}'");
            }
            stmts.push(self.statement()?);
        }
        self.bump();
        self.scopes.pop();
        Ok(stmts)
    }

    fn stmt(kind: StmtKind) -> Stmt {
        Stmt { id: 0, kind }
    }

    fn statement(&mut self) -> Result<Stmt, LangError> {
        match self.peek() {
            Tok::Let => {
                self.bump();
                let name = self.ident()?;
                self.expect(Tok::Assign, "'='")?;
                // The initializer is resolved before the new binding is visible.
                let init = self.expr()?;
                self.expect(Tok::Semi, "';'")?;
                let slot = self.declare(&name);
                Ok(Self::stmt(StmtKind::Let { slot, name, init }))
            }
            Tok::If => self.if_statement(),
            Tok::While => {
                self.bump();
                self.expect(Tok::LParen, "'('")?;
                let cond = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                let body = self.block()?;
                Ok(Self::stmt(StmtKind::While(cond, body)))
            }
            Tok::Return => {
                self.bump();
                let value = if *self.peek() == Tok::Semi { None } else { Some(self.expr()?) };
                self.expect(Tok::Semi, "';'")?;
                Ok(Self::stmt(StmtKind::Return(value)))
            }
            Tok::Assert => {
                self.bump();
                self.expect(Tok::LParen, "'('")?;
                let cond = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                self.expect(Tok::Semi, "';'")?;
                Ok(Self::stmt(StmtKind::Assert(cond)))
            }
            _ => {
                let e = self.expr()?;
                if *self.peek() == Tok::Assign {
                    self.bump();
                    let target = match e.kind {
                        ExprKind::Local { slot, name } => Target::Local { slot, name },
                        ExprKind::Global { slot, name } => Target::Global { slot, name },
                        ExprKind::Index(base, idx) => Target::Index(base, idx),
                        _ => return self.error("invalid assignment target"),
                    };
                    let value = self.expr()?;
                    self.expect(Tok::Semi, "';'")?;
                    Ok(Self::stmt(StmtKind::Assign(target, value)))
                } else {
                    self.expect(Tok::Semi, "';'")?;
                    Ok(Self::stmt(StmtKind::Expr(e)))
                }
            }
        }
    }

    fn if_statement(&mut self) -> Result<Stmt, LangError> {
        self.expect(Tok::If, "'if'")?;
        self.expect(Tok::LParen, "'('")?;
        let cond = self.expr()?;
        self.expect(Tok::RParen, "')'")?;
        let then = self.block()?;
        let els = if *self.peek() == Tok::Else {
            self.bump();
            if *self.peek() == Tok::If {
                Some(vec![self.if_statement()?])
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(Self::stmt(StmtKind::If(cond, then, els)))
    }

    fn node(kind: ExprKind) -> Expr {
        Expr { id: 0, kind }
    }

    fn expr(&mut self) -> Result<Expr, LangError> {
        self.binary(1)
    }

    fn binop(tok: &Tok) -> Option<BinOp> {
        Some(match tok {
            Tok::OrOr => BinOp::Or,
            Tok::AndAnd => BinOp::And,
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            Tok::Percent => BinOp::Rem,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, LangError> {
        let mut lhs = self.unary()?;
        while let Some(op) = Self::binop(self.peek()) {
            if op.precedence() < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Self::node(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, LangError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                let inner = self.unary()?;
                Ok(Self::node(ExprKind::Unary(UnOp::Neg, Box::new(inner))))
            }
            Tok::Bang => {
                self.bump();
                let inner = self.unary()?;
                Ok(Self::node(ExprKind::Unary(UnOp::Not, Box::new(inner))))
            }
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> Result<Expr, LangError> {
        let mut e = self.primary()?;
        while *self.peek() == Tok::LBracket {
            self.bump();
            let idx = self.expr()?;
            self.expect(Tok::RBracket, "']'")?;
            e = Self::node(ExprKind::Index(Box::new(e), Box::new(idx)));
        }
        Ok(e)
    }

    fn args(&mut self) -> Result<Vec<Expr>, LangError> {
        self.expect(Tok::LParen, "'('")?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.expr()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "')'")?;
        Ok(args)
    }

    fn primary(&mut self) -> Result<Expr, LangError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Self::node(ExprKind::Int(n)))
            }
            Tok::True => {
                self.bump();
                Ok(Self::node(ExprKind::Bool(true)))
            }
            Tok::False => {
                self.bump();
                Ok(Self::node(ExprKind::Bool(false)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Self::node(ExprKind::Str(s)))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::LBracket => {
                self.bump();
                let mut items = Vec::new();
                if *self.peek() != Tok::RBracket {
                    loop {
                        items.push(self.expr()?);
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBracket, "']'")?;
                Ok(Self::node(ExprKind::Array(items)))
            }
            Tok::Amp => {
                self.bump();
                let name = self.ident()?;
                self.check_callable(&name)?;
                Ok(Self::node(ExprKind::FnRef(name)))
            }
            Tok::Ident(name) => {
                if *self.peek_at(1) == Tok::LParen {
                    self.bump();
                    let callee = self.resolve_callee(&name)?;
                    let args = self.args()?;
                    return Ok(Self::node(ExprKind::Call(callee, args)));
                }
                self.bump();
                if let Some(slot) = self.lookup_local(&name) {
                    Ok(Self::node(ExprKind::Local { slot, name }))
                } else if let Some(&slot) = self.global_slots.get(&name) {
                    Ok(Self::node(ExprKind::Global { slot, name }))
                } else {
                    Err(LangError::Resolution(name))
                }
            }
            other => self.error(format!("expected expression, found {other:?}")),
        }
    }

    fn resolve_callee(&self, name: &str) -> Result<Callee, LangError> {
        if let Some(slot) = self.lookup_local(name) {
            Ok(Callee::Local { slot, name: name.to_string() })
        } else if self.function_names.contains(name) {
            Ok(Callee::Direct(name.to_string()))
        } else if let Some(b) = Builtin::from_name(name) {
            Ok(Callee::Builtin(b))
        } else if let Some(&slot) = self.global_slots.get(name) {
            Ok(Callee::Global { slot, name: name.to_string() })
        } else {
            Err(LangError::Resolution(name.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let p = parse("fn test_a(){ assert(1+1==2); }").unwrap();
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.tests, vec!["test_a"]);
        assert!(p.globals.is_empty());
    }

    #[test]
    fn undeclared_callee() {
        assert_eq!(parse("fn f(){ g(); }"), Err(LangError::Resolution("g".into())));
    }

    #[test]
    fn undeclared_reference() {
        assert_eq!(parse("fn f(){ let v = &nope; }"), Err(LangError::Resolution("nope".into())));
        assert_eq!(parse("fn f(){ return x; }"), Err(LangError::Resolution("x".into())));
    }

    #[test]
    fn syntax_error_position() {
        match parse("fn f() {\n  let = 3;\n}") {
            Err(LangError::Syntax { line, col, .. }) => assert_eq!((line, col), (2, 7)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn test_with_params_rejected() {
        assert!(matches!(parse("fn test_x(a){}"), Err(LangError::Syntax { .. })));
    }

    #[test]
    fn globals_declared_after_use() {
        let p = parse("fn f(){ return G; } global G = [1, -2, \"s\", &f];").unwrap();
        assert_eq!(
            p.globals[0].1,
            Datum::Arr(vec![
                Datum::Int(1),
                Datum::Int(-2),
                Datum::Str("s".into()),
                Datum::FnRef("f".into())
            ])
        );
    }

    #[test]
    fn globals_must_be_literals() {
        assert!(matches!(
            parse("fn f(){ return 1; } global G = f();"),
            Err(LangError::Syntax { .. })
        ));
    }

    #[test]
    fn node_ids_are_contiguous_preorder() {
        let p = parse("fn f(x){ if (x < 2) { return 1; } return x + f(x - 1); }").unwrap();
        let f = p.function("f").unwrap();
        let mut ids = Vec::new();
        visit_stmts(&f.body, &mut |s| ids.push(s.id));
        visit_exprs(&f.body, &mut |e| ids.push(e.id));
        ids.sort_unstable();
        assert_eq!(ids, (0..f.node_count).collect::<Vec<_>>());
        // if-stmt is node 0, its condition node 1
        assert_eq!(f.body[0].id, 0);
        let StmtKind::If(cond, ..) = &f.body[0].kind else { panic!() };
        assert_eq!(cond.id, 1);
    }

    #[test]
    fn indirect_call_through_local() {
        let p = parse("fn a(){ let v = &b; v(); } fn b(){}").unwrap();
        let a = p.function("a").unwrap();
        let StmtKind::Expr(call) = &a.body[1].kind else { panic!() };
        assert!(matches!(&call.kind, ExprKind::Call(Callee::Local { name, .. }, _) if name == "v"));
    }

    #[test]
    fn precedence_and_associativity() {
        let p = parse("fn f(){ return 1 - 2 - 3 * 4; }").unwrap();
        let StmtKind::Return(Some(e)) = &p.function("f").unwrap().body[0].kind else { panic!() };
        let ExprKind::Binary(BinOp::Sub, l, r) = &e.kind else { panic!() };
        assert!(matches!(l.kind, ExprKind::Binary(BinOp::Sub, ..)));
        assert!(matches!(r.kind, ExprKind::Binary(BinOp::Mul, ..)));
    }

    #[test]
    fn block_scoping_shadows() {
        let p = parse("fn f(a){ let a = 1; if (true) { let a = 2; } return a; }").unwrap();
        let f = p.function("f").unwrap();
        assert_eq!(f.slots, vec!["a", "a", "a"]);
        let StmtKind::Return(Some(e)) = &f.body[2].kind else { panic!() };
        assert!(matches!(e.kind, ExprKind::Local { slot: 1, .. }));
    }
}
