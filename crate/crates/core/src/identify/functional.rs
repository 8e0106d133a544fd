//! Expressions of a causal effect in terms of the input distributions.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{Distribution, VarSet};

/// A functional over the inputs.
///
/// Variable tokens are vertex names, optionally followed by primes; a token
/// `c'` denotes a value of vertex `c` distinct from `c`. Sums shadow outer
/// bindings of the same token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    /// `p(measured | do(intervened), conditioned)` obtained from input
    /// `input` by marginalisation and conditioning alone.
    Term {
        input: usize,
        measured: VarSet,
        intervened: VarSet,
        conditioned: VarSet,
    },
    Sum {
        over: VarSet,
        body: Box<Functional>,
    },
    Product {
        factors: Vec<Functional>,
    },
    Quotient {
        numerator: Box<Functional>,
        denominator: Box<Functional>,
    },
}

/// The vertex a variable token refers to.
pub fn vertex_of(token: &str) -> &str {
    token.trim_end_matches('\'')
}

impl Functional {
    pub fn term(input: usize, d: &Distribution) -> Self {
        Functional::Term {
            input,
            measured: d.measured.clone(),
            intervened: d.intervened.clone(),
            conditioned: d.conditioned.clone(),
        }
    }

    /// Sum over `vars`, merging with a directly nested sum.
    pub fn sum(vars: VarSet, body: Functional) -> Self {
        if vars.is_empty() {
            return body;
        }
        match body {
            Functional::Sum { over, body } if over.is_disjoint(&vars) => Functional::Sum {
                over: over.union(&vars).cloned().collect(),
                body,
            },
            body => Functional::Sum {
                over: vars,
                body: Box::new(body),
            },
        }
    }

    /// Product with nested products flattened.
    pub fn product(factors: Vec<Functional>) -> Self {
        let mut flat = Vec::new();
        for f in factors {
            match f {
                Functional::Product { factors } => flat.extend(factors),
                f => flat.push(f),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Functional::Product { factors: flat }
        }
    }

    pub fn quotient(num: Functional, den: Functional) -> Self {
        Functional::Quotient {
            numerator: Box::new(num),
            denominator: Box::new(den),
        }
    }

    /// Tokens occurring free.
    pub fn free_vars(&self) -> VarSet {
        match self {
            Functional::Term {
                measured,
                intervened,
                conditioned,
                ..
            } => measured.iter().chain(intervened).chain(conditioned).cloned().collect(),
            Functional::Sum { over, body } => body.free_vars().difference(over).cloned().collect(),
            Functional::Product { factors } => factors.iter().flat_map(|f| f.free_vars()).collect(),
            Functional::Quotient { numerator, denominator } => {
                numerator.free_vars().union(&denominator.free_vars()).cloned().collect()
            }
        }
    }

    /// Input indices referenced, in first-use order.
    pub fn inputs_used(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit_terms(&mut |i, _, _, _| {
            if !out.contains(&i) {
                out.push(i);
            }
        });
        out
    }

    fn visit_terms(&self, f: &mut impl FnMut(usize, &VarSet, &VarSet, &VarSet)) {
        match self {
            Functional::Term {
                input,
                measured,
                intervened,
                conditioned,
            } => f(*input, measured, intervened, conditioned),
            Functional::Sum { body, .. } => body.visit_terms(f),
            Functional::Product { factors } => factors.iter().for_each(|x| x.visit_terms(f)),
            Functional::Quotient { numerator, denominator } => {
                numerator.visit_terms(f);
                denominator.visit_terms(f);
            }
        }
    }

    /// Number of `Term` leaves.
    pub fn term_count(&self) -> usize {
        let mut n = 0;
        self.visit_terms(&mut |_, _, _, _| n += 1);
        n
    }

    /// Rendering with product factors sorted, for order-insensitive
    /// structural comparison.
    pub fn canonical(&self) -> String {
        match self {
            Functional::Product { factors } => {
                let mut parts: Vec<String> = factors.iter().map(wrap_canonical).collect();
                parts.sort();
                parts.join(" * ")
            }
            Functional::Sum { over, body } => {
                format!("sum_{{{}}} {}", join(over), body.canonical())
            }
            Functional::Quotient { numerator, denominator } => {
                format!("({}) / ({})", numerator.canonical(), denominator.canonical())
            }
            t => t.to_string(),
        }
    }
}

fn wrap_canonical(f: &Functional) -> String {
    match f {
        Functional::Term { .. } => f.canonical(),
        _ => format!("({})", f.canonical()),
    }
}

fn join(s: &VarSet) -> String {
    s.iter().cloned().collect::<Vec<_>>().join(",")
}

struct Renderer {
    /// Display names for tokens in scope, innermost last.
    scope: Vec<(String, String)>,
    used: BTreeSet<String>,
}

impl Renderer {
    fn display(&self, token: &str) -> String {
        self.scope
            .iter()
            .rev()
            .find(|(t, _)| t == token)
            .map(|(_, d)| d.clone())
            .unwrap_or_else(|| token.to_string())
    }

    fn names(&self, s: &VarSet) -> String {
        s.iter().map(|t| self.display(t)).collect::<Vec<_>>().join(",")
    }

    fn render(&mut self, f: &Functional, out: &mut String) {
        match f {
            Functional::Term {
                measured,
                intervened,
                conditioned,
                ..
            } => {
                out.push_str("p(");
                out.push_str(&self.names(measured));
                if !intervened.is_empty() || !conditioned.is_empty() {
                    out.push('|');
                    if !intervened.is_empty() {
                        out.push_str("do(");
                        out.push_str(&self.names(intervened));
                        out.push(')');
                        if !conditioned.is_empty() {
                            out.push(',');
                        }
                    }
                    out.push_str(&self.names(conditioned));
                }
                out.push(')');
            }
            Functional::Sum { over, body } => {
                let mark = self.scope.len();
                let mut shown = Vec::new();
                for t in over {
                    let mut d = t.clone();
                    while self.used.contains(&d) {
                        d.push('\'');
                    }
                    self.used.insert(d.clone());
                    self.scope.push((t.clone(), d.clone()));
                    shown.push(d);
                }
                out.push_str("sum_{");
                out.push_str(&shown.join(","));
                out.push_str("} ");
                self.render(body, out);
                for (_, d) in self.scope.drain(mark..) {
                    self.used.remove(&d);
                }
            }
            Functional::Product { factors } => {
                for (i, x) in factors.iter().enumerate() {
                    if i > 0 {
                        out.push_str(" * ");
                    }
                    let wrap = matches!(x, Functional::Sum { .. } | Functional::Quotient { .. })
                        && i + 1 < factors.len()
                        || matches!(x, Functional::Quotient { .. });
                    self.render_wrapped(x, wrap, out);
                }
            }
            Functional::Quotient { numerator, denominator } => {
                let wn = !matches!(**numerator, Functional::Term { .. });
                let wd = !matches!(**denominator, Functional::Term { .. });
                self.render_wrapped(numerator, wn, out);
                out.push_str(" / ");
                self.render_wrapped(denominator, wd, out);
            }
        }
    }

    fn render_wrapped(&mut self, f: &Functional, wrap: bool, out: &mut String) {
        if wrap {
            out.push('(');
        }
        self.render(f, out);
        if wrap {
            out.push(')');
        }
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut r = Renderer {
            scope: Vec::new(),
            used: self.free_vars(),
        };
        let mut out = String::new();
        r.render(self, &mut out);
        f.write_str(&out)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("functional parse error at byte {pos}: {message}")]
pub struct FunctionalParseError {
    pub pos: usize,
    pub message: String,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    inputs: &'a [Distribution],
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, FunctionalParseError> {
        Err(FunctionalParseError {
            pos: self.pos,
            message: message.into(),
        })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), FunctionalParseError> {
        if self.eat(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn token(&mut self) -> Result<String, FunctionalParseError> {
        self.skip_ws();
        let r = self.rest();
        let len = r
            .char_indices()
            .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_' || *c == '\''))
            .map_or(r.len(), |(i, _)| i);
        let tok = &r[..len];
        if tok.is_empty() || !crate::graph::is_identifier(vertex_of(tok)) {
            return self.err("expected a variable");
        }
        self.pos += len;
        Ok(tok.to_string())
    }

    fn token_list(&mut self, close: &str) -> Result<VarSet, FunctionalParseError> {
        let mut out = VarSet::new();
        loop {
            out.insert(self.token()?);
            if !self.eat(",") {
                break;
            }
        }
        self.expect(close)?;
        Ok(out)
    }

    fn at_sum(&mut self) -> bool {
        self.eat("sum_{") || self.eat("Σ_{") || self.eat("\\sum_{")
    }

    fn product(&mut self) -> Result<Functional, FunctionalParseError> {
        let mut factors = Vec::new();
        loop {
            self.skip_ws();
            if self.at_sum() {
                let over = self.token_list("}")?;
                let body = self.product()?;
                factors.push(Functional::sum(over, body));
                break;
            }
            let mut f = self.factor()?;
            while self.eat("/") {
                let den = self.factor()?;
                f = Functional::quotient(f, den);
            }
            factors.push(f);
            self.eat("*");
            self.skip_ws();
            let r = self.rest();
            if r.is_empty() || r.starts_with(')') {
                break;
            }
        }
        Ok(Functional::product(factors))
    }

    fn factor(&mut self) -> Result<Functional, FunctionalParseError> {
        self.skip_ws();
        if self.eat("(") {
            let f = self.product()?;
            self.expect(")")?;
            return Ok(f);
        }
        if self.eat("p(") || self.eat("P(") {
            let measured = self.token_list_until_bar()?;
            let mut intervened = VarSet::new();
            let mut conditioned = VarSet::new();
            if self.eat("|") {
                loop {
                    if self.eat("do(") {
                        intervened.extend(self.token_list(")")?);
                    } else {
                        conditioned.insert(self.token()?);
                    }
                    if !self.eat(",") {
                        break;
                    }
                }
            }
            self.expect(")")?;
            let input = self.resolve(&measured, &intervened, &conditioned)?;
            return Ok(Functional::Term {
                input,
                measured,
                intervened,
                conditioned,
            });
        }
        self.err("expected `p(`, `(` or a sum")
    }

    fn token_list_until_bar(&mut self) -> Result<VarSet, FunctionalParseError> {
        let mut out = VarSet::new();
        loop {
            out.insert(self.token()?);
            if !self.eat(",") {
                break;
            }
        }
        Ok(out)
    }

    /// First input from which the term follows by marginalising and
    /// conditioning.
    fn resolve(&self, a: &VarSet, b: &VarSet, c: &VarSet) -> Result<usize, FunctionalParseError> {
        let strip = |s: &VarSet| -> VarSet { s.iter().map(|t| vertex_of(t).to_string()).collect() };
        let (a, b, c) = (strip(a), strip(b), strip(c));
        for (i, d) in self.inputs.iter().enumerate() {
            let pool: VarSet = d.measured.union(&d.conditioned).cloned().collect();
            if b == d.intervened && d.conditioned.is_subset(&c) && a.is_subset(&pool) && c.is_subset(&pool) {
                return Ok(i);
            }
        }
        self.err("term follows from no input")
    }
}

impl Functional {
    /// Parses the text form produced by `Display`, also accepting `Σ_{..}`,
    /// implicit multiplication and parentheses. Each term is attached to
    /// the first input it can be read off from.
    pub fn parse(text: &str, inputs: &[Distribution]) -> Result<Self, FunctionalParseError> {
        let mut p = Parser {
            src: text,
            pos: 0,
            inputs,
        };
        let f = p.product()?;
        p.skip_ws();
        if !p.rest().is_empty() {
            return p.err("trailing input");
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> Vec<Distribution> {
        ["p(y|do(w1),w2)", "p(w1|do(x1,x2),w2)", "p(w2)"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect()
    }

    #[test]
    fn render_parse_round_trip() {
        let text = "sum_{w1,w2} p(y|do(w1),w2) * p(w1|do(x1,x2),w2) * p(w2)";
        let f = Functional::parse(text, &inputs()).unwrap();
        assert_eq!(f.to_string(), text);
        assert_eq!(f.inputs_used(), vec![0, 1, 2]);
        assert_eq!(f.free_vars(), ["x1", "x2", "y"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn implicit_products_and_nesting() {
        let ins: Vec<Distribution> = vec!["p(a,b,c)".parse().unwrap()];
        let f = Functional::parse("Σ_{b} (sum_{c} p(a|b) p(c)) p(b)", &ins).unwrap();
        match &f {
            Functional::Sum { body, .. } => match &**body {
                Functional::Product { factors } => assert_eq!(factors.len(), 2),
                other => panic!("{other:?}"),
            },
            other => panic!("{other:?}"),
        }
        assert!(Functional::parse("p(a|do(z))", &ins).is_err());
    }

    #[test]
    fn shadowed_bindings_get_primes() {
        let ins: Vec<Distribution> = vec!["p(c,g)".parse().unwrap()];
        let inner = Functional::sum(
            ["c".to_string()].into(),
            Functional::parse("p(c) p(g|c)", &ins).unwrap(),
        );
        let f = Functional::product(vec![Functional::parse("p(c)", &ins).unwrap(), inner]);
        assert_eq!(f.to_string(), "p(c) * sum_{c'} p(c') * p(g|c')");
        let back = Functional::parse(&f.to_string(), &ins).unwrap();
        assert!(back.free_vars().contains("c"));
    }

    #[test]
    fn canonical_ignores_factor_order() {
        let a = Functional::parse("p(w2) p(y|do(w1),w2)", &inputs()).unwrap();
        let b = Functional::parse("p(y|do(w1),w2) * p(w2)", &inputs()).unwrap();
        assert_eq!(a.canonical(), b.canonical());
    }

    #[test]
    fn json_tree() {
        let f = Functional::parse("sum_{w2} p(w2)", &inputs()).unwrap();
        let v = serde_json::to_value(&f).unwrap();
        assert_eq!(v["kind"], "sum");
        assert_eq!(v["body"]["kind"], "term");
        let back: Functional = serde_json::from_value(v).unwrap();
        assert_eq!(back, f);
    }
}
