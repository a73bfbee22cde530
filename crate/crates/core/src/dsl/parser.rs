use std::collections::{BTreeMap, HashMap, HashSet};

use super::lexer::{tokenize, Tok, Token};
use super::{EdgeDef, GraphModelDef, ParseError, ParsedQuery, TableItem, VertexDef};
use crate::ops::{CmpOp, Operand, Predicate};
use crate::relation::ColumnRef;
use crate::value::Value;

const RESERVED: &[&str] = &["select", "from", "where", "and", "as", "null"];

type PResult<T> = Result<T, ParseError>;

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

/// Column term before alias resolution.
struct RawCol {
    alias: Option<String>,
    column: String,
    line: usize,
    col: usize,
}

enum RawTerm {
    Col(RawCol),
    Lit(Value),
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, msg: impl Into<String>) -> ParseError {
        let t = self.peek();
        ParseError::new(t.line, t.col, msg)
    }

    fn expected(&self, what: &str) -> ParseError {
        self.error_here(format!("expected {what}, found {}", self.peek().tok.describe()))
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<Token> {
        if self.peek().tok == tok {
            Ok(self.advance())
        } else {
            Err(self.expected(what))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Token> {
        if self.peek().tok.is_kw(kw) {
            Ok(self.advance())
        } else {
            Err(self.expected(&format!("`{}`", kw.to_ascii_uppercase())))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Token)> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                Ok((s, self.advance()))
            }
            _ => Err(self.expected(what)),
        }
    }

    /// `, Key :` ends an embedded SQL value.
    fn at_next_key(&self) -> bool {
        matches!(self.peek_at(1), Tok::Ident(_)) && *self.peek_at(2) == Tok::Colon
    }

    fn query(&mut self) -> PResult<ParsedQuery> {
        self.expect_kw("select")?;
        let mut select = Vec::new();
        if self.peek().tok.is_kw("null") {
            self.advance();
        } else {
            loop {
                if self.peek().tok == Tok::Star {
                    return Err(self.error_here("`*` is not supported; list the columns"));
                }
                select.push(self.column()?);
                if self.peek().tok == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect_kw("from")?;
        let mut from: Vec<(TableItem, bool, Token)> = Vec::new();
        loop {
            let (table, tok) = self.ident("table name")?;
            let alias = if self.peek().tok.is_kw("as") {
                self.advance();
                Some(self.ident("alias")?.0)
            } else {
                match &self.peek().tok {
                    Tok::Ident(s)
                        if !RESERVED.iter().any(|r| s.eq_ignore_ascii_case(r)) && *self.peek_at(1) != Tok::Colon =>
                    {
                        Some(self.ident("alias")?.0)
                    }
                    _ => None,
                }
            };
            let explicit = alias.is_some();
            let alias = alias.unwrap_or_else(|| table.clone());
            from.push((TableItem { table, alias }, explicit, tok));
            if self.peek().tok == Tok::Comma && !self.at_next_key() {
                self.advance();
            } else {
                break;
            }
        }
        let mut raw_conj = Vec::new();
        if self.peek().tok.is_kw("where") {
            self.advance();
            loop {
                let start = self.peek().clone();
                let l = self.term()?;
                let op = match self.peek().tok {
                    Tok::Op(o) => {
                        self.advance();
                        parse_op(o)
                    }
                    _ => return Err(self.expected("comparison operator")),
                };
                let r = self.term()?;
                raw_conj.push((l, op, r, start));
                if self.peek().tok.is_kw("and") {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        resolve_query(select, from, raw_conj)
    }

    fn column(&mut self) -> PResult<RawCol> {
        let (first, tok) = self.ident("column")?;
        if RESERVED.iter().any(|r| first.eq_ignore_ascii_case(r)) {
            return Err(ParseError::new(
                tok.line,
                tok.col,
                format!("expected column, found keyword `{first}`"),
            ));
        }
        if self.peek().tok == Tok::Dot {
            self.advance();
            let (column, _) = self.ident("column name")?;
            Ok(RawCol {
                alias: Some(first),
                column,
                line: tok.line,
                col: tok.col,
            })
        } else {
            Ok(RawCol {
                alias: None,
                column: first,
                line: tok.line,
                col: tok.col,
            })
        }
    }

    fn term(&mut self) -> PResult<RawTerm> {
        let lit = match &self.peek().tok {
            Tok::Int(i) => Value::Int(*i),
            Tok::Float(x) => Value::Float(*x),
            Tok::Str(s) => Value::text(s),
            Tok::Ident(s) if s.eq_ignore_ascii_case("true") => Value::Bool(true),
            Tok::Ident(s) if s.eq_ignore_ascii_case("false") => Value::Bool(false),
            Tok::Ident(s) if s.eq_ignore_ascii_case("null") => {
                return Err(self.error_here("comparison with null is never true; not supported"))
            }
            Tok::Ident(_) => return Ok(RawTerm::Col(self.column()?)),
            _ => return Err(self.expected("column or literal")),
        };
        self.advance();
        Ok(RawTerm::Lit(lit))
    }
}

fn parse_op(o: &str) -> CmpOp {
    match o {
        "=" => CmpOp::Eq,
        "<>" => CmpOp::Ne,
        "<" => CmpOp::Lt,
        "<=" => CmpOp::Le,
        ">" => CmpOp::Gt,
        _ => CmpOp::Ge,
    }
}

/// Strip a trailing run of ASCII digits; `None` if nothing would remain or
/// nothing was stripped.
fn numbered_stem(name: &str) -> Option<&str> {
    let stem = name.trim_end_matches(|c: char| c.is_ascii_digit());
    (!stem.is_empty() && stem.len() < name.len()).then_some(stem)
}

fn resolve_query(
    select: Vec<RawCol>,
    mut from: Vec<(TableItem, bool, Token)>,
    conj: Vec<(RawTerm, CmpOp, RawTerm, Token)>,
) -> PResult<ParsedQuery> {
    // numbered-alias shorthand
    let mut stems: HashMap<String, usize> = HashMap::new();
    for (item, explicit, _) in &from {
        if !explicit {
            if let Some(stem) = numbered_stem(&item.table) {
                *stems.entry(stem.to_string()).or_default() += 1;
            }
        }
    }
    for (item, explicit, _) in &mut from {
        if !*explicit {
            if let Some(stem) = numbered_stem(&item.table) {
                if stems[stem] >= 2 {
                    item.table = stem.to_string();
                }
            }
        }
    }
    let mut seen = HashSet::new();
    for (item, _, tok) in &from {
        if !seen.insert(item.alias.clone()) {
            return Err(ParseError::new(
                tok.line,
                tok.col,
                format!("duplicate alias `{}`", item.alias),
            ));
        }
    }
    let from: Vec<TableItem> = from.into_iter().map(|(t, _, _)| t).collect();
    let resolve = |c: RawCol| -> PResult<ColumnRef> {
        match c.alias {
            Some(a) => {
                if from.iter().any(|t| t.alias == a) {
                    Ok(ColumnRef::new(a, c.column))
                } else {
                    Err(ParseError::new(c.line, c.col, format!("undeclared alias `{a}`")))
                }
            }
            None if from.len() == 1 => Ok(ColumnRef::new(from[0].alias.clone(), c.column)),
            None => Err(ParseError::new(
                c.line,
                c.col,
                format!("column `{}` must be qualified with an alias", c.column),
            )),
        }
    };
    let select = select.into_iter().map(resolve).collect::<PResult<Vec<_>>>()?;
    let mut conjuncts = Vec::with_capacity(conj.len());
    for (l, op, r, tok) in conj {
        let p = match (l, r) {
            (RawTerm::Col(l), RawTerm::Col(r)) => {
                let (l, r) = (resolve(l)?, resolve(r)?);
                if r < l {
                    Predicate::new(r, op.flip(), Operand::Column(l))
                } else {
                    Predicate::new(l, op, Operand::Column(r))
                }
            }
            (RawTerm::Col(l), RawTerm::Lit(v)) => Predicate::new(resolve(l)?, op, Operand::Literal(v)),
            (RawTerm::Lit(v), RawTerm::Col(r)) => Predicate::new(resolve(r)?, op.flip(), Operand::Literal(v)),
            (RawTerm::Lit(_), RawTerm::Lit(_)) => {
                return Err(ParseError::new(tok.line, tok.col, "comparison between two literals"))
            }
        };
        conjuncts.push(p);
    }
    conjuncts.sort();
    Ok(ParsedQuery {
        select,
        from,
        conjuncts,
    })
}

/// Parse a single embedded SQL query (no surrounding statement).
pub fn parse_query(src: &str) -> Result<ParsedQuery, ParseError> {
    let mut p = Parser {
        toks: tokenize(src)?,
        pos: 0,
    };
    let q = p.query()?;
    if p.peek().tok != Tok::Eof {
        return Err(p.expected("end of query"));
    }
    Ok(q)
}

enum Val {
    Ident(String),
    Query(ParsedQuery),
}

struct Stmt {
    kind: String,
    tok: Token,
    /// key (lowercase) → (value, key token)
    keys: BTreeMap<String, (Val, Token)>,
}

impl Stmt {
    fn ident(&self, key: &str) -> PResult<(String, &Token)> {
        match self.keys.get(key) {
            Some((Val::Ident(s), t)) => Ok((s.clone(), t)),
            Some((Val::Query(_), t)) => Err(ParseError::new(t.line, t.col, format!("`{key}` takes an identifier"))),
            None => Err(ParseError::new(
                self.tok.line,
                self.tok.col,
                format!("CREATE {} is missing `{}`", self.kind, display_key(key)),
            )),
        }
    }

    fn opt_ident(&self, key: &str) -> PResult<Option<(String, &Token)>> {
        if self.keys.contains_key(key) {
            self.ident(key).map(Some)
        } else {
            Ok(None)
        }
    }

    fn query(&self) -> PResult<(&ParsedQuery, &Token)> {
        match self.keys.get("query") {
            Some((Val::Query(q), t)) => Ok((q, t)),
            _ => Err(ParseError::new(
                self.tok.line,
                self.tok.col,
                format!("CREATE {} is missing `Query`", self.kind),
            )),
        }
    }
}

fn display_key(k: &str) -> &'static str {
    match k {
        "graph_name" => "Graph_Name",
        "label" => "Label",
        "id_column" => "ID_Column",
        "query" => "Query",
        "src_label" => "Src_Label",
        "dst_label" => "Dst_Label",
        "src_alias" => "Src_Alias",
        _ => "Dst_Alias",
    }
}

fn allowed_keys(kind: &str) -> &'static [&'static str] {
    match kind {
        "GRAPH" => &["graph_name"],
        "VERTEX" => &["graph_name", "label", "id_column", "query"],
        _ => &[
            "graph_name",
            "label",
            "src_label",
            "dst_label",
            "query",
            "src_alias",
            "dst_alias",
        ],
    }
}

fn statement(p: &mut Parser) -> PResult<Stmt> {
    let tok = p.expect_kw("create")?;
    let (kind_raw, ktok) = p.ident("GRAPH, VERTEX or EDGE")?;
    let kind = kind_raw.to_ascii_uppercase();
    if !["GRAPH", "VERTEX", "EDGE"].contains(&kind.as_str()) {
        return Err(ParseError::new(
            ktok.line,
            ktok.col,
            format!("expected GRAPH, VERTEX or EDGE, found `{kind_raw}`"),
        ));
    }
    p.expect(Tok::LParen, "`(`")?;
    let mut keys = BTreeMap::new();
    loop {
        let (key_raw, key_tok) = p.ident("key")?;
        let key = key_raw.to_ascii_lowercase();
        if !allowed_keys(&kind).contains(&key.as_str()) {
            return Err(ParseError::new(
                key_tok.line,
                key_tok.col,
                format!("unknown key `{key_raw}` for CREATE {kind}"),
            ));
        }
        if keys.contains_key(&key) {
            return Err(ParseError::new(
                key_tok.line,
                key_tok.col,
                format!("duplicate key `{key_raw}`"),
            ));
        }
        p.expect(Tok::Colon, "`:`")?;
        let val = if key == "query" {
            Val::Query(p.query()?)
        } else {
            Val::Ident(p.ident("identifier")?.0)
        };
        keys.insert(key, (val, key_tok));
        if p.peek().tok == Tok::Comma {
            p.advance();
        } else {
            break;
        }
    }
    p.expect(Tok::RParen, "`,` or `)`")?;
    p.expect(Tok::Semi, "`;`")?;
    Ok(Stmt { kind, tok, keys })
}

/// Parse a model and resolve its label cross-references. Table and column
/// names are checked separately by [`super::validate_against_catalog`].
pub fn parse_model(src: &str) -> Result<GraphModelDef, ParseError> {
    let mut p = Parser {
        toks: tokenize(src)?,
        pos: 0,
    };
    let mut stmts = Vec::new();
    while p.peek().tok != Tok::Eof {
        stmts.push(statement(&mut p)?);
    }
    let first = match stmts.first() {
        Some(s) if s.kind == "GRAPH" => s,
        Some(s) => {
            return Err(ParseError::new(
                s.tok.line,
                s.tok.col,
                "the first statement must be CREATE GRAPH",
            ))
        }
        None => return Err(p.error_here("expected CREATE GRAPH statement")),
    };
    let graph_name = first.ident("graph_name")?.0;
    let mut model = GraphModelDef {
        graph_name: graph_name.clone(),
        ..Default::default()
    };
    let mut edge_stmts = Vec::new();
    for s in &stmts[1..] {
        let (g, gtok) = s.ident("graph_name")?;
        if g != graph_name {
            let msg = if s.kind == "GRAPH" {
                "only one CREATE GRAPH statement is allowed".to_string()
            } else {
                format!("unknown graph `{g}`; this model declares `{graph_name}`")
            };
            let t = if s.kind == "GRAPH" { &s.tok } else { gtok };
            return Err(ParseError::new(t.line, t.col, msg));
        }
        match s.kind.as_str() {
            "GRAPH" => {
                return Err(ParseError::new(
                    s.tok.line,
                    s.tok.col,
                    "only one CREATE GRAPH statement is allowed",
                ))
            }
            "VERTEX" => {
                let (label, ltok) = s.ident("label")?;
                if model.vertex(&label).is_some() {
                    return Err(ParseError::new(
                        ltok.line,
                        ltok.col,
                        format!("duplicate vertex label `{label}`"),
                    ));
                }
                let (id_column, _) = s.ident("id_column")?;
                let (query, qtok) = s.query()?;
                if query.from.len() != 1 {
                    return Err(ParseError::new(
                        qtok.line,
                        qtok.col,
                        format!("vertex `{label}` query must read exactly one table"),
                    ));
                }
                let mut properties: Vec<String> = Vec::new();
                for c in &query.select {
                    if c.column != id_column && !properties.contains(&c.column) {
                        properties.push(c.column.clone());
                    }
                }
                model.vertices.push(VertexDef {
                    label,
                    table: query.from[0].table.clone(),
                    id_column,
                    properties,
                    query: query.clone(),
                });
            }
            _ => edge_stmts.push(s),
        }
    }
    for s in edge_stmts {
        let (label, ltok) = s.ident("label")?;
        if model.edge(&label).is_some() {
            return Err(ParseError::new(
                ltok.line,
                ltok.col,
                format!("duplicate edge label `{label}`"),
            ));
        }
        let (query, _) = s.query()?;
        let binding = |end_key: &str, alias_key: &str, first: bool| -> PResult<(String, ColumnRef)> {
            let (vlabel, vtok) = s.ident(end_key)?;
            let v = model.vertex(&vlabel).ok_or_else(|| {
                ParseError::new(
                    vtok.line,
                    vtok.col,
                    format!("edge `{label}` references undeclared vertex label `{vlabel}`"),
                )
            })?;
            let alias = match s.opt_ident(alias_key)? {
                Some((a, atok)) => {
                    if query.table_of(&a) != Some(v.table.as_str()) {
                        return Err(ParseError::new(
                            atok.line,
                            atok.col,
                            format!("`{a}` is not an alias of vertex table `{}` in edge `{label}`", v.table),
                        ));
                    }
                    a
                }
                None => {
                    let mut it = query.from.iter().filter(|t| t.table == v.table);
                    let item = if first { it.next() } else { it.next_back() };
                    match item {
                        Some(t) => t.alias.clone(),
                        None => {
                            return Err(ParseError::new(
                                vtok.line,
                                vtok.col,
                                format!(
                                    "edge `{label}`: FROM has no instance of `{}`, the table of vertex `{vlabel}`",
                                    v.table
                                ),
                            ))
                        }
                    }
                }
            };
            Ok((vlabel, ColumnRef::new(alias, v.id_column.clone())))
        };
        let (src_label, src_binding) = binding("src_label", "src_alias", true)?;
        let (dst_label, dst_binding) = binding("dst_label", "dst_alias", false)?;
        model.edges.push(EdgeDef {
            label,
            src_label,
            dst_label,
            query: query.clone(),
            src_binding,
            dst_binding,
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_only() {
        let m = parse_model("CREATE GRAPH(Graph_Name: G);").unwrap();
        assert_eq!(m.graph_name, "G");
        assert!(m.vertices.is_empty() && m.edges.is_empty());
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let m = parse_model(
            "create graph(graph_name: G);\ncreate vertex(GRAPH_NAME: G, label: V, id_column: id, query: select x from T);",
        )
        .unwrap();
        assert_eq!(m.vertices[0].properties, vec!["x"]);
        assert_eq!(m.vertices[0].query.select, vec![ColumnRef::new("T", "x")]);
    }

    #[test]
    fn undeclared_label_is_named() {
        let src = "CREATE GRAPH(Graph_Name: G);
CREATE VERTEX(Graph_Name: G, Label: Customer, ID_Column: c_id, Query: SELECT name FROM C);
CREATE EDGE(Graph_Name: G, Label: Visits, Src_Label: Customer, Dst_Label: Store,
  Query: SELECT null FROM C, S WHERE C.s_id = S.s_id);";
        let e = parse_model(src).unwrap_err();
        assert!(e.message.contains("`Store`"), "{e}");
        assert_eq!(e.line, 3);
    }

    #[test]
    fn predicates_are_normalized() {
        let q = parse_query("SELECT null FROM B, A WHERE 5 < B.x AND B.k = A.k").unwrap();
        assert_eq!(q.conjuncts[0].to_string(), "A.k = B.k");
        assert_eq!(q.conjuncts[1].to_string(), "B.x > 5");
    }

    #[test]
    fn numbered_shorthand_and_explicit_aliases() {
        let q = parse_query("SELECT null FROM C1, SS1, I, SS2, C2, T9").unwrap();
        let tables: Vec<_> = q.from.iter().map(|t| t.table.as_str()).collect();
        assert_eq!(tables, ["C", "SS", "I", "SS", "C", "T9"]);
        let q = parse_query("SELECT null FROM C AS x, C y").unwrap();
        assert_eq!(
            q.from[1],
            TableItem {
                table: "C".into(),
                alias: "y".into()
            }
        );
    }

    #[test]
    fn query_errors() {
        assert!(parse_query("SELECT null FROM A, A").is_err());
        assert!(parse_query("SELECT null FROM A WHERE B.x = 1").is_err());
        assert!(parse_query("SELECT x FROM A, B").is_err());
        assert!(parse_query("SELECT null FROM A WHERE 1 = 2").is_err());
        assert!(parse_query("SELECT * FROM A").is_err());
    }

    #[test]
    fn explicit_endpoint_aliases() {
        let src = "CREATE GRAPH(Graph_Name: G);
CREATE VERTEX(Graph_Name: G, Label: P, ID_Column: id, Query: SELECT null FROM T);
CREATE EDGE(Graph_Name: G, Label: E, Src_Label: P, Dst_Label: P,
  Src_Alias: T2, Dst_Alias: T1, Query: SELECT null FROM T1, T2 WHERE T1.id < T2.id);";
        let m = parse_model(src).unwrap();
        assert_eq!(m.edges[0].src_binding, ColumnRef::new("T2", "id"));
        assert_eq!(parse_model(&m.render()).unwrap(), m);
    }
}
