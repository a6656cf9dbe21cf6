//! Line-oriented graph and model text format.
//!
//! ```text
//! param <name> range <min> <max> [latent]
//! node <name>
//! coupling <integrative|synchronous|differential> <++|+-|-+> from <node> to <node>
//! modulator <++|+-|--> inputs <node> <node> output <node>
//! summator output <node> inputs <+node|-node> <+node|-node> [...]
//! constants <component-id> <k1> <k2> ...      (model files only)
//! ```
//!
//! `#` starts a comment. Components are numbered `u1, u2, ...` in order of
//! appearance.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::ParseError;
use crate::error::Result;
use crate::graph::{Component, ComponentId, ComponentKind, Graph, NodeId, ParameterDecl, Sign, SignVariant};
use crate::monotone::{ModulatorSpec, MonotoneSpec};
use crate::network::{ComponentSpec, Model};

#[derive(Clone, Copy, Debug)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
    end_column: usize,
}

impl<'a> Line<'a> {
    fn split(number: usize, raw: &'a str) -> Self {
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = Vec::new();
        let mut start = None;
        for (i, ch) in content.char_indices() {
            if ch.is_whitespace() {
                if let Some(s) = start.take() {
                    tokens.push(Token {
                        text: &content[s..i],
                        column: content[..s].chars().count() + 1,
                    });
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            tokens.push(Token {
                text: &content[s..],
                column: content[..s].chars().count() + 1,
            });
        }
        Line {
            number,
            tokens,
            end_column: content.trim_end().chars().count() + 1,
        }
    }

    fn error(&self, column: usize, message: impl Into<String>, expected: Option<&str>) -> ParseError {
        ParseError {
            line: self.number,
            column,
            message: message.into(),
            expected: expected.map(str::to_string),
        }
    }
}

struct Cursor<'l, 'a> {
    line: &'l Line<'a>,
    pos: usize,
}

impl<'a> Cursor<'_, 'a> {
    fn next(&mut self, expected: &str) -> Result<Token<'a>, ParseError> {
        match self.line.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(*t)
            }
            None => Err(self
                .line
                .error(self.line.end_column, "unexpected end of line", Some(expected))),
        }
    }

    fn keyword(&mut self, word: &str) -> Result<(), ParseError> {
        let t = self.next(&format!("`{word}`"))?;
        if t.text == word {
            Ok(())
        } else {
            Err(self
                .line
                .error(t.column, format!("unexpected `{}`", t.text), Some(&format!("`{word}`"))))
        }
    }

    fn name(&mut self) -> Result<Token<'a>, ParseError> {
        let t = self.next("a name")?;
        if is_name(t.text) {
            Ok(t)
        } else {
            Err(self
                .line
                .error(t.column, format!("`{}` is not a valid name", t.text), Some("a name")))
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let t = self.next("a number")?;
        match t.text.parse::<f64>() {
            Ok(v) if !v.is_nan() => Ok(v),
            _ => Err(self
                .line
                .error(t.column, format!("`{}` is not a number", t.text), Some("a number"))),
        }
    }

    fn peek(&self) -> Option<Token<'a>> {
        self.line.tokens.get(self.pos).copied()
    }

    fn rest(&mut self) -> &[Token<'a>] {
        let r = &self.line.tokens[self.pos..];
        self.pos = self.line.tokens.len();
        r
    }

    fn finish(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self
                .line
                .error(t.column, format!("unexpected `{}`", t.text), Some("end of line"))),
        }
    }
}

fn is_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

#[derive(Clone, Copy, PartialEq)]
enum Strictness {
    Strict,
    Lenient,
}

struct Parsed<'a> {
    graph: Graph,
    /// Each component reference with its location, for strict checks.
    references: Vec<(NodeId, usize, usize)>,
    constants: Vec<(Token<'a>, usize, Vec<f64>)>,
}

fn parse_document(text: &str, strictness: Strictness, allow_constants: bool) -> Result<Parsed<'_>, ParseError> {
    let mut graph = Graph::default();
    let mut declared: HashMap<String, (usize, usize)> = HashMap::new();
    let mut references = Vec::new();
    let mut constants = Vec::new();
    let lines: Vec<Line<'_>> = text.lines().enumerate().map(|(i, l)| Line::split(i + 1, l)).collect();

    for line in &lines {
        let Some(head) = line.tokens.first() else { continue };
        let mut cur = Cursor { line, pos: 1 };
        let mut declare = |t: Token<'_>| -> Result<NodeId, ParseError> {
            if let Some((l, c)) = declared.get(t.text) {
                return Err(line.error(
                    t.column,
                    format!("`{}` is already declared at line {l}, column {c}", t.text),
                    None,
                ));
            }
            declared.insert(t.text.to_string(), (line.number, t.column));
            Ok(NodeId::new(t.text))
        };
        match head.text {
            "param" => {
                let name = cur.name()?;
                cur.keyword("range")?;
                let min = cur.number()?;
                let max = cur.number()?;
                let observed = match cur.peek() {
                    Some(t) if t.text == "latent" => {
                        cur.pos += 1;
                        false
                    }
                    _ => true,
                };
                cur.finish()?;
                let node = declare(name)?;
                graph.nodes.push(node.clone());
                graph.parameters.push(ParameterDecl {
                    node,
                    min,
                    max,
                    observed,
                });
            }
            "node" => {
                let name = cur.name()?;
                cur.finish()?;
                let node = declare(name)?;
                graph.nodes.push(node);
            }
            "coupling" => {
                let kind_tok = cur.next("a coupling kind")?;
                let kind = match kind_tok.text {
                    "integrative" => ComponentKind::Integrative,
                    "synchronous" => ComponentKind::Synchronous,
                    "differential" => ComponentKind::Differential,
                    other => {
                        return Err(line.error(
                            kind_tok.column,
                            format!("unknown coupling kind `{other}`"),
                            Some("`integrative`, `synchronous` or `differential`"),
                        ))
                    }
                };
                let variant = variant(&mut cur, kind, strictness, "`++`, `+-` or `-+`")?;
                cur.keyword("from")?;
                let from = cur.name()?;
                cur.keyword("to")?;
                let to = cur.name()?;
                cur.finish()?;
                for t in [from, to] {
                    references.push((NodeId::new(t.text), line.number, t.column));
                }
                let id = ComponentId::positional(graph.components.len());
                graph.components.push(Component {
                    id,
                    kind,
                    variant: Some(variant),
                    inputs: vec![(NodeId::new(from.text), Sign::Plus)],
                    output: NodeId::new(to.text),
                });
            }
            "modulator" => {
                let variant = variant(&mut cur, ComponentKind::Modulator, strictness, "`++`, `+-` or `--`")?;
                cur.keyword("inputs")?;
                let a = cur.name()?;
                let b = cur.name()?;
                cur.keyword("output")?;
                let out = cur.name()?;
                cur.finish()?;
                for t in [a, b, out] {
                    references.push((NodeId::new(t.text), line.number, t.column));
                }
                let id = ComponentId::positional(graph.components.len());
                graph.components.push(Component {
                    id,
                    kind: ComponentKind::Modulator,
                    variant: Some(variant),
                    inputs: vec![(NodeId::new(a.text), Sign::Plus), (NodeId::new(b.text), Sign::Plus)],
                    output: NodeId::new(out.text),
                });
            }
            "summator" => {
                cur.keyword("output")?;
                let out = cur.name()?;
                cur.keyword("inputs")?;
                references.push((NodeId::new(out.text), line.number, out.column));
                let mut inputs = Vec::new();
                for t in cur.rest() {
                    let (sign, name) = match t.text.split_at_checked(1) {
                        Some(("+", n)) => (Sign::Plus, n),
                        Some(("-", n)) => (Sign::Minus, n),
                        _ => {
                            return Err(line.error(
                                t.column,
                                format!("summator input `{}` lacks a sign", t.text),
                                Some("`+name` or `-name`"),
                            ))
                        }
                    };
                    if !is_name(name) {
                        return Err(line.error(
                            t.column + 1,
                            format!("`{name}` is not a valid name"),
                            Some("a name"),
                        ));
                    }
                    references.push((NodeId::new(name), line.number, t.column + 1));
                    inputs.push((NodeId::new(name), sign));
                }
                if strictness == Strictness::Strict && inputs.len() < 2 {
                    return Err(line.error(
                        line.end_column,
                        format!("a summator needs at least two inputs, got {}", inputs.len()),
                        Some("another signed input"),
                    ));
                }
                let id = ComponentId::positional(graph.components.len());
                graph.components.push(Component {
                    id,
                    kind: ComponentKind::Summator,
                    variant: None,
                    inputs,
                    output: NodeId::new(out.text),
                });
            }
            "constants" if allow_constants => {
                let id = cur.name()?;
                let mut ks = Vec::new();
                while cur.peek().is_some() {
                    ks.push(cur.number()?);
                }
                constants.push((id, line.number, ks));
            }
            other => {
                let expected = if allow_constants {
                    "`param`, `node`, `coupling`, `modulator`, `summator` or `constants`"
                } else {
                    "`param`, `node`, `coupling`, `modulator` or `summator`"
                };
                return Err(line.error(head.column, format!("unknown statement `{other}`"), Some(expected)));
            }
        }
    }

    if strictness == Strictness::Strict {
        for (node, l, c) in &references {
            if !declared.contains_key(node.as_str()) {
                return Err(ParseError {
                    line: *l,
                    column: *c,
                    message: format!("unknown node `{node}`"),
                    expected: Some("a declared `param` or `node`".into()),
                });
            }
        }
    }
    Ok(Parsed {
        graph,
        references,
        constants,
    })
}

fn variant(
    cur: &mut Cursor<'_, '_>,
    kind: ComponentKind,
    strictness: Strictness,
    expected: &str,
) -> Result<SignVariant, ParseError> {
    let t = cur.next(expected)?;
    match SignVariant::parse(t.text) {
        Some(v) if strictness == Strictness::Lenient || v.is_legal_for(kind) => Ok(v),
        Some(_) => Err(cur
            .line
            .error(t.column, format!("variant `{}` is not allowed for a {kind}", t.text), Some(expected))),
        None => Err(cur
            .line
            .error(t.column, format!("`{}` is not a sign variant", t.text), Some(expected))),
    }
}

/// Parses a graph document. Rejects duplicate names, unknown node
/// references, variants illegal for their kind and summators with fewer than
/// two inputs; every other structural rule is left to the validator.
pub fn parse_graph(text: &str) -> Result<Graph> {
    Ok(parse_document(text, Strictness::Strict, false)?.graph)
}

/// Parses only the syntax: unknown references, illegal variants and short
/// summators are kept so the validator can report them. `constants` lines
/// are accepted and ignored, so model files can be checked too.
pub fn parse_unchecked(text: &str) -> Result<Graph> {
    let parsed = parse_document(text, Strictness::Lenient, true)?;
    let _ = parsed.references;
    Ok(parsed.graph)
}

pub fn serialize_graph(graph: &Graph) -> String {
    let mut out = String::new();
    for node in &graph.nodes {
        match graph.parameter(node) {
            Some(p) => {
                let _ = write!(out, "param {} range {} {}", node, p.min, p.max);
                if !p.observed {
                    out.push_str(" latent");
                }
                out.push('\n');
            }
            None => {
                let _ = writeln!(out, "node {node}");
            }
        }
    }
    for c in &graph.components {
        let variant = c.variant.map(SignVariant::tag).unwrap_or("");
        let _ = match c.kind {
            ComponentKind::Integrative | ComponentKind::Synchronous | ComponentKind::Differential => writeln!(
                out,
                "coupling {} {} from {} to {}",
                c.kind, variant, c.inputs[0].0, c.output
            ),
            ComponentKind::Modulator => writeln!(
                out,
                "modulator {} inputs {} {} output {}",
                variant, c.inputs[0].0, c.inputs[1].0, c.output
            ),
            ComponentKind::Summator => {
                let inputs: Vec<String> = c.inputs.iter().map(|(n, s)| format!("{}{}", s.symbol(), n)).collect();
                writeln!(out, "summator output {} inputs {}", c.output, inputs.join(" "))
            }
        };
    }
    out
}

/// Parses a model file: a graph document plus one `constants` line per
/// calibratable component.
pub fn parse_model(text: &str) -> Result<Model> {
    let parsed = parse_document(text, Strictness::Strict, true)?;
    let graph = parsed.graph;
    let mut specs = BTreeMap::new();
    for (id_tok, line, ks) in parsed.constants {
        let at = |message: String| ParseError {
            line,
            column: id_tok.column,
            message,
            expected: None,
        };
        let id = ComponentId::new(id_tok.text);
        let comp = graph
            .component(&id)
            .ok_or_else(|| at(format!("unknown component `{id}`")))?;
        let spec = match comp.kind {
            ComponentKind::Summator => return Err(at(format!("summator `{id}` takes no constants")).into()),
            ComponentKind::Modulator => {
                let variant = comp.variant.expect("modulators carry a variant");
                ComponentSpec::Modulator(ModulatorSpec::from_constants(variant, &ks).map_err(|e| at(e.to_string()))?)
            }
            _ => ComponentSpec::Univariate(MonotoneSpec::from_constants(&ks).map_err(|e| at(e.to_string()))?),
        };
        if specs.insert(id.clone(), spec).is_some() {
            return Err(at(format!("constants for `{id}` given twice")).into());
        }
    }
    Model::new(graph, specs)
}

/// Graph text followed by the constants of every calibratable component,
/// each printed in its shortest round-trip decimal form.
pub fn serialize_model(model: &Model) -> String {
    let mut out = serialize_graph(model.graph());
    for (id, spec) in model.specs() {
        let ks: Vec<String> = spec.constants().iter().map(|k| format!("{k:?}")).collect();
        let _ = writeln!(out, "constants {} {}", id, ks.join(" "));
    }
    out
}
