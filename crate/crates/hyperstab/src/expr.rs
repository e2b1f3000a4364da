//! Closed-form expression mini-language used for coefficient functions,
//! source terms, boundary maps, initial data and disturbances.
//!
//! Grammar (whitespace insignificant between tokens):
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := '-' factor | power
//! power  := atom ('^' factor)?
//! atom   := NUMBER | IDENT | IDENT '[' INT ']'
//!         | IDENT '(' expr (',' expr)? ')' | '(' expr ')'
//! NUMBER := digits ('.' digits)? (('e'|'E') ('+'|'-')? digits)?
//! IDENT  := letter (letter|digit|'_')*
//! ```
//!
//! `^` is right-associative and unary minus binds looser than `^`, so
//! `-x^2` is `-(x^2)` and `2^3^2` is `2^(3^2)`. The constants `pi` and `e`
//! are predefined names available in every context. Which other variables
//! are legal depends on the expression's role and is enforced at parse
//! time through a [`VariableContext`].
//!
//! Parsed expressions are immutable and safe to evaluate from concurrent
//! tasks.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

/// Built-in functions. `min`/`max` take two arguments, everything else one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Tanh,
    Exp,
    Sqrt,
    Abs,
    Min,
    Max,
    Sign,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Tanh => "tanh",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Sign => "sign",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// A node of the expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Number(f64),
    /// Named variable (`x`, `t`, `pi`, ...).
    Var(String),
    /// Indexed variable with a 1-based index (`u[2]`, `I[1]`, `out[1]`).
    Indexed(String, usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A variable occurrence: either a plain name or a 1-based indexed slot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKey {
    Scalar(String),
    Indexed(String, usize),
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarKey::Scalar(name) => write!(f, "{name}"),
            VarKey::Indexed(name, i) => write!(f, "{name}[{i}]"),
        }
    }
}

/// Set of variable names and indexed families legal for one expression role.
#[derive(Debug, Clone)]
pub struct VariableContext {
    scalars: BTreeSet<&'static str>,
    /// family name -> largest legal index (indices start at 1)
    families: BTreeMap<&'static str, usize>,
}

impl VariableContext {
    fn new(scalars: &[&'static str], families: &[(&'static str, usize)]) -> Self {
        VariableContext {
            scalars: scalars.iter().copied().collect(),
            families: families.iter().copied().collect(),
        }
    }

    /// Coefficient functions such as the characteristic speeds: `{x}`.
    pub fn coefficient() -> Self {
        Self::new(&["x"], &[])
    }

    /// Source components: `{x, u[1..=n], I[1..=n]}` where `I[j]` is the
    /// integral of component `j` over the domain.
    pub fn source(n: usize) -> Self {
        Self::new(&["x"], &[("u", n), ("I", n)])
    }

    /// Boundary maps over the outgoing traces: `{out[1..=n]}`.
    pub fn boundary(n: usize) -> Self {
        Self::new(&[], &[("out", n)])
    }

    /// Interior disturbances: `{t, x}`.
    pub fn disturbance_interior() -> Self {
        Self::new(&["t", "x"], &[])
    }

    /// Boundary disturbances: `{t}`.
    pub fn disturbance_boundary() -> Self {
        Self::new(&["t"], &[])
    }

    /// Initial data: `{x}`.
    pub fn initial() -> Self {
        Self::new(&["x"], &[])
    }

    fn allows_scalar(&self, name: &str) -> bool {
        name == "pi" || name == "e" || self.scalars.contains(name)
    }

    fn allows_indexed(&self, name: &str, index: usize) -> bool {
        index >= 1 && self.families.get(name).is_some_and(|&max| index <= max)
    }
}

/// Parse error with the byte offset it occurred at.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub position: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    EmptyInput,
    UnexpectedChar(char),
    InvalidNumber(String),
    /// `expected` is a short token description, `found` the offending lexeme.
    UnexpectedToken { expected: &'static str, found: String },
    UnexpectedEnd { expected: &'static str },
    UnknownVariable(String),
    UnknownFunction(String),
    ArityMismatch { func: String, expected: usize, got: usize },
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at offset {}: ", self.position)?;
        match &self.kind {
            ParseErrorKind::EmptyInput => write!(f, "empty input"),
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character '{c}'"),
            ParseErrorKind::InvalidNumber(s) => write!(f, "invalid number '{s}'"),
            ParseErrorKind::UnexpectedToken { expected, found } => {
                write!(f, "expected {expected}, found '{found}'")
            }
            ParseErrorKind::UnexpectedEnd { expected } => {
                write!(f, "expected {expected}, found end of input")
            }
            ParseErrorKind::UnknownVariable(v) => write!(f, "unknown variable '{v}'"),
            ParseErrorKind::UnknownFunction(name) => write!(f, "unknown function '{name}'"),
            ParseErrorKind::ArityMismatch { func, expected, got } => {
                write!(f, "function '{func}' takes {expected} argument(s), got {got}")
            }
        }
    }
}

impl std::error::Error for ParseError {}

/// Evaluation error.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    /// Variable present in the tree but absent from the bindings.
    Unbound(VarKey),
    /// Domain error (sqrt of a negative, division by zero, ...) carrying the
    /// offending subexpression and a short reason.
    Domain { subexpr: String, reason: &'static str },
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Unbound(key) => write!(f, "unbound variable '{key}'"),
            EvalError::Domain { subexpr, reason } => {
                write!(f, "domain error in '{subexpr}': {reason}")
            }
        }
    }
}

impl std::error::Error for EvalError {}

/// Variable bindings consulted during evaluation. `pi` and `e` are resolved
/// internally and never reach the bindings.
pub trait Bindings {
    fn value(&self, name: &str, index: Option<usize>) -> Option<f64>;
}

/// Map-backed bindings, convenient for tests and one-off evaluations.
#[derive(Debug, Clone, Default)]
pub struct VarMap {
    map: HashMap<VarKey, f64>,
}

impl VarMap {
    pub fn new() -> Self {
        VarMap::default()
    }

    pub fn set(&mut self, name: &str, value: f64) -> &mut Self {
        self.map.insert(VarKey::Scalar(name.to_string()), value);
        self
    }

    pub fn set_indexed(&mut self, name: &str, index: usize, value: f64) -> &mut Self {
        self.map.insert(VarKey::Indexed(name.to_string(), index), value);
        self
    }
}

impl Bindings for VarMap {
    fn value(&self, name: &str, index: Option<usize>) -> Option<f64> {
        let key = match index {
            None => VarKey::Scalar(name.to_string()),
            Some(i) => VarKey::Indexed(name.to_string(), i),
        };
        self.map.get(&key).copied()
    }
}

/// A parsed, immutable expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
}

impl Expression {
    /// Parse `source` against `context`. All free variables of the result
    /// belong to the context; function names and arities are checked.
    pub fn parse(source: &str, context: &VariableContext) -> Result<Expression, ParseError> {
        let tokens = lex(source)?;
        let mut parser = Parser { src: source, tokens, pos: 0, ctx: context };
        let root = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(ParseError {
                position: tok.start,
                kind: ParseErrorKind::UnexpectedToken {
                    expected: "end of input",
                    found: parser.lexeme(tok).to_string(),
                },
            });
        }
        Ok(Expression { root })
    }

    /// Parse a literal constant (no variables beyond `pi`/`e`).
    pub fn parse_constant(source: &str) -> Result<Expression, ParseError> {
        Self::parse(source, &VariableContext::new(&[], &[]))
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn from_node(root: Node) -> Expression {
        Expression { root }
    }

    /// IEEE-754 double evaluation of the tree; deterministic for fixed
    /// bindings. Any non-finite intermediate is reported as a domain error
    /// for the subexpression that produced it.
    pub fn eval<B: Bindings + ?Sized>(&self, bindings: &B) -> Result<f64, EvalError> {
        eval_node(&self.root, bindings)
    }

    /// Exact set of user variables occurring in the tree (`pi`/`e` excluded).
    pub fn free_variables(&self) -> BTreeSet<VarKey> {
        let mut out = BTreeSet::new();
        collect_vars(&self.root, &mut out);
        out
    }

    /// True if the expression mentions any slot of the indexed family `name`.
    pub fn uses_family(&self, name: &str) -> bool {
        self.free_variables()
            .iter()
            .any(|k| matches!(k, VarKey::Indexed(n, _) if n == name))
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        print_node(&self.root, 0, f)
    }
}

fn collect_vars(node: &Node, out: &mut BTreeSet<VarKey>) {
    match node {
        Node::Number(_) => {}
        Node::Var(name) => {
            if name != "pi" && name != "e" {
                out.insert(VarKey::Scalar(name.clone()));
            }
        }
        Node::Indexed(name, i) => {
            out.insert(VarKey::Indexed(name.clone(), *i));
        }
        Node::Neg(inner) => collect_vars(inner, out),
        Node::Bin(_, l, r) => {
            collect_vars(l, out);
            collect_vars(r, out);
        }
        Node::Call(_, args) => {
            for a in args {
                collect_vars(a, out);
            }
        }
    }
}

fn domain(node: &Node, reason: &'static str) -> EvalError {
    EvalError::Domain { subexpr: node_to_string(node), reason }
}

fn eval_node<B: Bindings + ?Sized>(node: &Node, b: &B) -> Result<f64, EvalError> {
    let v = match node {
        Node::Number(v) => *v,
        Node::Var(name) => match name.as_str() {
            "pi" => std::f64::consts::PI,
            "e" => std::f64::consts::E,
            _ => b
                .value(name, None)
                .ok_or_else(|| EvalError::Unbound(VarKey::Scalar(name.clone())))?,
        },
        Node::Indexed(name, i) => b
            .value(name, Some(*i))
            .ok_or_else(|| EvalError::Unbound(VarKey::Indexed(name.clone(), *i)))?,
        Node::Neg(inner) => -eval_node(inner, b)?,
        Node::Bin(op, l, r) => {
            let lv = eval_node(l, b)?;
            let rv = eval_node(r, b)?;
            match op {
                BinOp::Add => lv + rv,
                BinOp::Sub => lv - rv,
                BinOp::Mul => lv * rv,
                BinOp::Div => {
                    if rv == 0.0 {
                        return Err(domain(node, "division by zero"));
                    }
                    lv / rv
                }
                BinOp::Pow => {
                    if lv == 0.0 && rv < 0.0 {
                        return Err(domain(node, "zero raised to a negative power"));
                    }
                    lv.powf(rv)
                }
            }
        }
        Node::Call(func, args) => {
            let a0 = eval_node(&args[0], b)?;
            match func {
                Func::Sin => a0.sin(),
                Func::Cos => a0.cos(),
                Func::Tan => a0.tan(),
                Func::Tanh => a0.tanh(),
                Func::Exp => a0.exp(),
                Func::Sqrt => {
                    if a0 < 0.0 {
                        return Err(domain(node, "square root of a negative value"));
                    }
                    a0.sqrt()
                }
                Func::Abs => a0.abs(),
                Func::Sign => {
                    if a0 > 0.0 {
                        1.0
                    } else if a0 < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
                Func::Min => a0.min(eval_node(&args[1], b)?),
                Func::Max => a0.max(eval_node(&args[1], b)?),
            }
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(domain(node, "non-finite result"))
    }
}

// ---------------------------------------------------------------------------
// Pretty printing
// ---------------------------------------------------------------------------

// Precedence levels used when printing: Add/Sub 1, Mul/Div 2, Neg 3, Pow 4,
// atoms 5. `min_prec` is the lowest level printable without parentheses in
// the current position; the choices below mirror the grammar exactly so the
// printed text reparses to a structurally identical tree.
fn prec(node: &Node) -> u8 {
    match node {
        Node::Bin(BinOp::Add | BinOp::Sub, _, _) => 1,
        Node::Bin(BinOp::Mul | BinOp::Div, _, _) => 2,
        Node::Neg(_) => 3,
        Node::Bin(BinOp::Pow, _, _) => 4,
        Node::Number(_) | Node::Var(_) | Node::Indexed(_, _) | Node::Call(_, _) => 5,
    }
}

fn print_node(node: &Node, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let needs_parens = prec(node) < min_prec;
    if needs_parens {
        write!(f, "(")?;
    }
    match node {
        Node::Number(v) => write!(f, "{v}")?,
        Node::Var(name) => write!(f, "{name}")?,
        Node::Indexed(name, i) => write!(f, "{name}[{i}]")?,
        Node::Neg(inner) => {
            write!(f, "-")?;
            print_node(inner, 3, f)?;
        }
        Node::Bin(op, l, r) => {
            let (sym, lp, rp) = match op {
                BinOp::Add => ("+", 1, 2),
                BinOp::Sub => ("-", 1, 2),
                BinOp::Mul => ("*", 2, 3),
                BinOp::Div => ("/", 2, 3),
                // left operand of `^` must be an atom; right is a factor
                BinOp::Pow => ("^", 5, 3),
            };
            print_node(l, lp, f)?;
            write!(f, "{sym}")?;
            print_node(r, rp, f)?;
        }
        Node::Call(func, args) => {
            write!(f, "{}(", func.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                print_node(a, 0, f)?;
            }
            write!(f, ")")?;
        }
    }
    if needs_parens {
        write!(f, ")")?;
    }
    Ok(())
}

fn node_to_string(node: &Node) -> String {
    struct Wrap<'a>(&'a Node);
    impl fmt::Display for Wrap<'_> {
        fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            print_node(self.0, 0, f)
        }
    }
    Wrap(node).to_string()
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum TokKind {
    Number(f64),
    Ident,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
}

#[derive(Debug, Clone, Copy)]
struct Token {
    kind: TokKind,
    start: usize,
    end: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = match c {
            '+' => {
                i += 1;
                TokKind::Plus
            }
            '-' => {
                i += 1;
                TokKind::Minus
            }
            '*' => {
                i += 1;
                TokKind::Star
            }
            '/' => {
                i += 1;
                TokKind::Slash
            }
            '^' => {
                i += 1;
                TokKind::Caret
            }
            '(' => {
                i += 1;
                TokKind::LParen
            }
            ')' => {
                i += 1;
                TokKind::RParen
            }
            '[' => {
                i += 1;
                TokKind::LBracket
            }
            ']' => {
                i += 1;
                TokKind::RBracket
            }
            ',' => {
                i += 1;
                TokKind::Comma
            }
            '0'..='9' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    if i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit() {
                        i += 1;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    } else {
                        return Err(ParseError {
                            position: i,
                            kind: ParseErrorKind::InvalidNumber(src[start..=i].to_string()),
                        });
                    }
                }
                // exponent part only if followed by digits (possibly signed);
                // otherwise the 'e' starts a new identifier token
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError {
                    position: start,
                    kind: ParseErrorKind::InvalidNumber(text.to_string()),
                })?;
                TokKind::Number(value)
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                TokKind::Ident
            }
            other => {
                return Err(ParseError {
                    position: i,
                    kind: ParseErrorKind::UnexpectedChar(other),
                })
            }
        };
        tokens.push(Token { kind, start, end: i });
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Recursive-descent parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    ctx: &'a VariableContext,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.pos).copied()
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn lexeme(&self, tok: Token) -> &'a str {
        &self.src[tok.start..tok.end]
    }

    fn end_position(&self) -> usize {
        self.src.len()
    }

    fn expect(&mut self, kind: TokKind, expected: &'static str) -> Result<Token, ParseError> {
        match self.peek() {
            Some(t) if t.kind == kind => {
                self.pos += 1;
                Ok(t)
            }
            Some(t) => Err(ParseError {
                position: t.start,
                kind: ParseErrorKind::UnexpectedToken {
                    expected,
                    found: self.lexeme(t).to_string(),
                },
            }),
            None => Err(ParseError {
                position: self.end_position(),
                kind: ParseErrorKind::UnexpectedEnd { expected },
            }),
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        if self.tokens.is_empty() {
            return Err(ParseError { position: 0, kind: ParseErrorKind::EmptyInput });
        }
        let mut node = self.term()?;
        while let Some(t) = self.peek() {
            let op = match t.kind {
                TokKind::Plus => BinOp::Add,
                TokKind::Minus => BinOp::Sub,
                _ => break,
            };
            self.advance();
            let rhs = self.term()?;
            node = Node::Bin(op, Box::new(node), Box::new(rhs));
        }
        Ok(node)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut node = self.factor()?;
        while let Some(t) = self.peek() {
            let op = match t.kind {
                TokKind::Star => BinOp::Mul,
                TokKind::Slash => BinOp::Div,
                _ => break,
            };
            self.advance();
            let rhs = self.factor()?;
            node = Node::Bin(op, Box::new(node), Box::new(rhs));
        }
        Ok(node)
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        if let Some(t) = self.peek() {
            if t.kind == TokKind::Minus {
                self.advance();
                return Ok(Node::Neg(Box::new(self.factor()?)));
            }
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if let Some(t) = self.peek() {
            if t.kind == TokKind::Caret {
                self.advance();
                let exponent = self.factor()?;
                return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let tok = self.advance().ok_or(ParseError {
            position: self.end_position(),
            kind: ParseErrorKind::UnexpectedEnd { expected: "a number, variable or '('" },
        })?;
        match tok.kind {
            TokKind::Number(v) => Ok(Node::Number(v)),
            TokKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokKind::RParen, "')'")?;
                Ok(inner)
            }
            TokKind::Ident => {
                let name = self.lexeme(tok).to_string();
                match self.peek().map(|t| t.kind) {
                    Some(TokKind::LParen) => self.call(tok, name),
                    Some(TokKind::LBracket) => self.indexed(tok, name),
                    _ => {
                        if self.ctx.allows_scalar(&name) {
                            Ok(Node::Var(name))
                        } else {
                            Err(ParseError {
                                position: tok.start,
                                kind: ParseErrorKind::UnknownVariable(name),
                            })
                        }
                    }
                }
            }
            _ => Err(ParseError {
                position: tok.start,
                kind: ParseErrorKind::UnexpectedToken {
                    expected: "a number, variable or '('",
                    found: self.lexeme(tok).to_string(),
                },
            }),
        }
    }

    fn call(&mut self, name_tok: Token, name: String) -> Result<Node, ParseError> {
        self.expect(TokKind::LParen, "'('")?;
        let func = Func::from_name(&name).ok_or(ParseError {
            position: name_tok.start,
            kind: ParseErrorKind::UnknownFunction(name.clone()),
        })?;
        let mut args = vec![self.expr()?];
        if let Some(t) = self.peek() {
            if t.kind == TokKind::Comma {
                self.advance();
                args.push(self.expr()?);
            }
        }
        self.expect(TokKind::RParen, "')'")?;
        if args.len() != func.arity() {
            return Err(ParseError {
                position: name_tok.start,
                kind: ParseErrorKind::ArityMismatch {
                    func: name,
                    expected: func.arity(),
                    got: args.len(),
                },
            });
        }
        Ok(Node::Call(func, args))
    }

    fn indexed(&mut self, name_tok: Token, name: String) -> Result<Node, ParseError> {
        self.expect(TokKind::LBracket, "'['")?;
        let idx_tok = self.expect_integer()?;
        self.expect(TokKind::RBracket, "']'")?;
        let index: usize = self.lexeme(idx_tok).parse().map_err(|_| ParseError {
            position: idx_tok.start,
            kind: ParseErrorKind::InvalidNumber(self.lexeme(idx_tok).to_string()),
        })?;
        if !self.ctx.allows_indexed(&name, index) {
            return Err(ParseError {
                position: name_tok.start,
                kind: ParseErrorKind::UnknownVariable(format!("{name}[{index}]")),
            });
        }
        Ok(Node::Indexed(name, index))
    }

    fn expect_integer(&mut self) -> Result<Token, ParseError> {
        match self.peek() {
            Some(t) if matches!(t.kind, TokKind::Number(_)) => {
                let text = self.lexeme(t);
                if text.bytes().all(|b| b.is_ascii_digit()) {
                    self.advance();
                    Ok(t)
                } else {
                    Err(ParseError {
                        position: t.start,
                        kind: ParseErrorKind::UnexpectedToken {
                            expected: "an integer index",
                            found: text.to_string(),
                        },
                    })
                }
            }
            Some(t) => Err(ParseError {
                position: t.start,
                kind: ParseErrorKind::UnexpectedToken {
                    expected: "an integer index",
                    found: self.lexeme(t).to_string(),
                },
            }),
            None => Err(ParseError {
                position: self.end_position(),
                kind: ParseErrorKind::UnexpectedEnd { expected: "an integer index" },
            }),
        }
    }
}
