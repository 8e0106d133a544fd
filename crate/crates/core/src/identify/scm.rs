//! Binary structural causal models used as a numerical oracle.
//!
//! Interventional distributions are computed by brute-force summation of
//! the truncated factorisation over every configuration of the observed and
//! latent vertices, so graphs should stay small (roughly 20 vertices).

use std::cell::RefCell;
use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use super::functional::{vertex_of, Functional};
use crate::distributions::Query;
use crate::graph::{CausalGraph, GraphError, VertexSet};

/// Lower bound applied to every CPT entry before renormalising.
pub const CPT_FLOOR: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ScmError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("model too large for exhaustive evaluation ({0} vertices)")]
    TooLarge(usize),
    #[error("conditioning event has zero probability")]
    ZeroProbability,
}

/// A binary SCM over a causal graph; each latent is an explicit root.
pub struct DiscreteScm {
    graph: CausalGraph,
    order: Vec<usize>,
    /// `p1[v][k]`: probability that `v = 1` given parent configuration `k`,
    /// where bit `j` of `k` is the value of the `j`-th parent in slot order.
    p1: Vec<Vec<f64>>,
    /// Compact bit position of each observed vertex.
    obs_pos: Vec<usize>,
    obs: Vec<usize>,
    cache: RefCell<HashMap<(u64, u64), Vec<f64>>>,
    marginals: RefCell<HashMap<(u64, u64, u64), Vec<f64>>>,
}

const MAX_MODEL_VERTICES: usize = 26;

fn floored(p: f64) -> f64 {
    let (a, b) = (p.max(CPT_FLOOR), (1.0 - p).max(CPT_FLOOR));
    a / (a + b)
}

impl DiscreteScm {
    /// Draws every CPT entry uniformly, floors at [`CPT_FLOOR`] and
    /// renormalises.
    pub fn random<R: Rng>(g: &CausalGraph, rng: &mut R) -> Result<Self, ScmError> {
        let n = g.vertices().len();
        if n > MAX_MODEL_VERTICES {
            return Err(ScmError::TooLarge(n));
        }
        let order = g.topological_order()?;
        let mut p1 = vec![Vec::new(); g.slot_count()];
        for &v in &order {
            let k = g.parents(v).len();
            p1[v] = (0..1usize << k).map(|_| floored(rng.gen::<f64>())).collect();
        }
        let obs: Vec<usize> = g.observed().iter().collect();
        let mut obs_pos = vec![usize::MAX; g.slot_count()];
        for (i, &v) in obs.iter().enumerate() {
            obs_pos[v] = i;
        }
        Ok(DiscreteScm {
            graph: g.clone(),
            order,
            p1,
            obs_pos,
            obs,
            cache: RefCell::new(HashMap::new()),
            marginals: RefCell::new(HashMap::new()),
        })
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    /// Joint over observed vertices under `do(b = vals)`, indexed by the
    /// compact observed bit layout.
    fn do_joint(&self, b: VertexSet, vals: u64) -> std::cell::Ref<'_, Vec<f64>> {
        let key = (b.0, vals & b.0);
        if !self.cache.borrow().contains_key(&key) {
            let mut table = vec![0.0; 1usize << self.obs.len()];
            let mut assign = 0u64;
            self.enumerate(0, b, vals, 1.0, &mut assign, &mut table);
            self.cache.borrow_mut().insert(key, table);
        }
        std::cell::Ref::map(self.cache.borrow(), |c| &c[&key])
    }

    fn enumerate(&self, i: usize, b: VertexSet, vals: u64, prob: f64, assign: &mut u64, table: &mut [f64]) {
        if i == self.order.len() {
            let mut idx = 0usize;
            for (k, &v) in self.obs.iter().enumerate() {
                if *assign & (1u64 << v) != 0 {
                    idx |= 1 << k;
                }
            }
            table[idx] += prob;
            return;
        }
        let v = self.order[i];
        if b.contains(v) {
            let bit = vals & (1u64 << v);
            *assign = (*assign & !(1u64 << v)) | bit;
            self.enumerate(i + 1, b, vals, prob, assign, table);
            return;
        }
        let mut k = 0usize;
        for (j, p) in self.graph.parents(v).iter().enumerate() {
            if *assign & (1u64 << p) != 0 {
                k |= 1 << j;
            }
        }
        let q = self.p1[v][k];
        *assign |= 1u64 << v;
        self.enumerate(i + 1, b, vals, prob * q, assign, table);
        *assign &= !(1u64 << v);
        self.enumerate(i + 1, b, vals, prob * (1.0 - q), assign, table);
    }

    /// Marginal of observed `s` under `do(b = vals)`, indexed by the bits
    /// of `s` in slot order.
    fn marginal(&self, b: VertexSet, vals: u64, s: VertexSet) -> std::cell::Ref<'_, Vec<f64>> {
        let key = (b.0, vals & b.0, s.0);
        if !self.marginals.borrow().contains_key(&key) {
            let joint = self.do_joint(b, vals);
            let pos: Vec<usize> = s.iter().map(|v| self.obs_pos[v]).collect();
            let mut out = vec![0.0; 1usize << pos.len()];
            for (idx, &p) in joint.iter().enumerate() {
                let mut k = 0usize;
                for (j, &q) in pos.iter().enumerate() {
                    if idx & (1 << q) != 0 {
                        k |= 1 << j;
                    }
                }
                out[k] += p;
            }
            drop(joint);
            self.marginals.borrow_mut().insert(key, out);
        }
        std::cell::Ref::map(self.marginals.borrow(), |c| &c[&key])
    }

    fn pick(s: VertexSet, values: u64) -> usize {
        let mut k = 0usize;
        for (j, v) in s.iter().enumerate() {
            if values & (1u64 << v) != 0 {
                k |= 1 << j;
            }
        }
        k
    }

    /// `p(a | do(b), c)` at the values in `values` (bit `v` holds vertex `v`).
    pub fn conditional(&self, a: VertexSet, b: VertexSet, c: VertexSet, values: u64) -> Result<f64, ScmError> {
        let a = a - c;
        let joint = self.marginal(b, values, a | c)[Self::pick(a | c, values)];
        if c.is_empty() {
            return Ok(joint);
        }
        let den = self.marginal(b, values, c)[Self::pick(c, values)];
        if den <= 0.0 {
            return Err(ScmError::ZeroProbability);
        }
        Ok(joint / den)
    }

    /// `p(Y | do(X))` for every joint value of `X` and `Y`.
    pub fn interventional(&self, q: &Query) -> Result<EffectTable, ScmError> {
        let g = &self.graph;
        let x = g.set_of(&q.treatment)?;
        let y = g.set_of(&q.outcome)?;
        let mut values = Vec::with_capacity(1 << (x.len() + y.len()));
        for xv in 0..1u64 << x.len() {
            for yv in 0..1u64 << y.len() {
                let bits = spread(x, xv) | spread(y, yv);
                values.push(self.conditional(y, x, VertexSet::EMPTY, bits)?);
            }
        }
        Ok(EffectTable {
            treatment: g.sorted_names_slot(x),
            outcome: g.sorted_names_slot(y),
            values,
        })
    }

    /// Evaluates a functional for every joint value of the query variables.
    /// Free tokens outside the query take value 0.
    pub fn evaluate(&self, f: &Functional, q: &Query) -> Result<EffectTable, ScmError> {
        let g = &self.graph;
        let x = g.set_of(&q.treatment)?;
        let y = g.set_of(&q.outcome)?;
        let compiled = self.compile(f)?;
        let mut values = Vec::with_capacity(1 << (x.len() + y.len()));
        let mut env: Vec<(String, bool)> = Vec::new();
        for xv in 0..1u64 << x.len() {
            for yv in 0..1u64 << y.len() {
                env.clear();
                let bits = spread(x, xv) | spread(y, yv);
                for v in x | y {
                    env.push((g.name(v).to_string(), bits & (1u64 << v) != 0));
                }
                values.push(self.eval(&compiled, &mut env)?);
            }
        }
        Ok(EffectTable {
            treatment: g.sorted_names_slot(x),
            outcome: g.sorted_names_slot(y),
            values,
        })
    }

    fn compile(&self, f: &Functional) -> Result<Compiled, ScmError> {
        let g = &self.graph;
        let resolve = |toks: &crate::distributions::VarSet| -> Result<Vec<(String, usize)>, ScmError> {
            toks.iter()
                .map(|t| {
                    g.id(vertex_of(t))
                        .map(|v| (t.clone(), v))
                        .ok_or_else(|| GraphError::UnknownVertex(t.clone()).into())
                })
                .collect()
        };
        Ok(match f {
            Functional::Term {
                measured,
                intervened,
                conditioned,
                ..
            } => Compiled::Term {
                a: resolve(measured)?,
                b: resolve(intervened)?,
                c: resolve(conditioned)?,
            },
            Functional::Sum { over, body } => Compiled::Sum {
                over: over.iter().cloned().collect(),
                body: Box::new(self.compile(body)?),
            },
            Functional::Product { factors } => {
                Compiled::Product(factors.iter().map(|x| self.compile(x)).collect::<Result<_, _>>()?)
            }
            Functional::Quotient { numerator, denominator } => {
                Compiled::Quotient(Box::new(self.compile(numerator)?), Box::new(self.compile(denominator)?))
            }
        })
    }

    fn eval(&self, f: &Compiled, env: &mut Vec<(String, bool)>) -> Result<f64, ScmError> {
        match f {
            Compiled::Term { a, b, c } => {
                let lookup = |t: &str| env.iter().rev().find(|(n, _)| n == t).is_some_and(|(_, v)| *v);
                // The same vertex can appear under two tokens; conflicting
                // values give probability zero.
                let mut values = 0u64;
                let mut fixed = 0u64;
                let mut set = |v: usize, val: bool| -> bool {
                    let bit = 1u64 << v;
                    if fixed & bit != 0 {
                        return (values & bit != 0) == val;
                    }
                    fixed |= bit;
                    if val {
                        values |= bit;
                    }
                    true
                };
                let mut ok = true;
                let mut sets = [VertexSet::EMPTY; 3];
                for (k, group) in [a, b, c].into_iter().enumerate() {
                    for (t, v) in group {
                        ok &= set(*v, lookup(t));
                        sets[k].insert(*v);
                    }
                }
                if !ok {
                    return Ok(0.0);
                }
                let [sa, sb, sc] = sets;
                self.conditional(sa, sb, sc - sb, values)
            }
            Compiled::Sum { over, body } => {
                let mark = env.len();
                let mut total = 0.0;
                for bits in 0..1u64 << over.len() {
                    env.truncate(mark);
                    for (j, t) in over.iter().enumerate() {
                        env.push((t.clone(), bits & (1 << j) != 0));
                    }
                    total += self.eval(body, env)?;
                }
                env.truncate(mark);
                Ok(total)
            }
            Compiled::Product(fs) => {
                let mut acc = 1.0;
                for x in fs {
                    acc *= self.eval(x, env)?;
                    if acc == 0.0 {
                        break;
                    }
                }
                Ok(acc)
            }
            Compiled::Quotient(n, d) => {
                let den = self.eval(d, env)?;
                if den == 0.0 {
                    return Err(ScmError::ZeroProbability);
                }
                Ok(self.eval(n, env)? / den)
            }
        }
    }
}

enum Compiled {
    Term {
        a: Vec<(String, usize)>,
        b: Vec<(String, usize)>,
        c: Vec<(String, usize)>,
    },
    Sum {
        over: Vec<String>,
        body: Box<Compiled>,
    },
    Product(Vec<Compiled>),
    Quotient(Box<Compiled>, Box<Compiled>),
}

/// Places the bits of `k` on the members of `s` in slot order.
fn spread(s: VertexSet, k: u64) -> u64 {
    let mut out = 0u64;
    for (j, v) in s.iter().enumerate() {
        if k & (1 << j) != 0 {
            out |= 1u64 << v;
        }
    }
    out
}

/// `p(Y | do(X))` tabulated; entry `x * 2^|Y| + y` with bits in slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectTable {
    pub treatment: Vec<String>,
    pub outcome: Vec<String>,
    pub values: Vec<f64>,
}

impl EffectTable {
    pub fn max_abs_diff(&self, other: &EffectTable) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl CausalGraph {
    /// Names in slot order, matching the bit layout of effect tables.
    pub fn sorted_names_slot(&self, s: VertexSet) -> Vec<String> {
        s.iter().map(|v| self.name(v).to_string()).collect()
    }
}
