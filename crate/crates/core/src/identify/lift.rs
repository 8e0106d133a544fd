//! Mapping functionals found on a reduced problem back to the original.

use std::collections::BTreeMap;

use super::functional::{vertex_of, Functional};
use crate::clustering::{ClusterMapping, Slot};
use crate::distributions::VarSet;
use crate::pruning::Pruned;

/// Re-points every term at the original input it was restricted from.
/// Variables are untouched: a term read off a restricted input can be read
/// off the unrestricted one by marginalising further.
pub fn lift_pruned(f: &Functional, pruned: &Pruned) -> Functional {
    map_terms(f, &mut |input, a, b, c| Functional::Term {
        input: pruned.input_origin(input),
        measured: a.clone(),
        intervened: b.clone(),
        conditioned: c.clone(),
    })
}

fn map_terms(f: &Functional, g: &mut impl FnMut(usize, &VarSet, &VarSet, &VarSet) -> Functional) -> Functional {
    match f {
        Functional::Term {
            input,
            measured,
            intervened,
            conditioned,
        } => g(*input, measured, intervened, conditioned),
        Functional::Sum { over, body } => Functional::Sum {
            over: over.clone(),
            body: Box::new(map_terms(body, g)),
        },
        Functional::Product { factors } => Functional::Product {
            factors: factors.iter().map(|x| map_terms(x, g)).collect(),
        },
        Functional::Quotient { numerator, denominator } => Functional::Quotient {
            numerator: Box::new(map_terms(numerator, g)),
            denominator: Box::new(map_terms(denominator, g)),
        },
    }
}

/// Replaces the cluster vertex by cluster members.
///
/// Where the original input measured the cluster, the emitters stand in
/// for it (the other members can be marginalised away). Where it was
/// intervened on or conditioned on, the members that input mentions stand
/// in. A sum over the cluster becomes a sum over every member introduced
/// inside it.
pub fn lift_clustered(f: &Functional, mapping: &ClusterMapping) -> Functional {
    lift_rec(f, mapping).0
}

/// Member tokens introduced for each free cluster token.
type Introduced = BTreeMap<String, VarSet>;

fn with_suffix(members: &VarSet, suffix: &str) -> VarSet {
    members.iter().map(|m| format!("{m}{suffix}")).collect()
}

fn lift_rec(f: &Functional, m: &ClusterMapping) -> (Functional, Introduced) {
    match f {
        Functional::Term {
            input,
            measured,
            intervened,
            conditioned,
        } => {
            let info = &m.per_input[*input];
            let stand_in = match info.slot {
                Some(Slot::Measured) | None => &m.emitters,
                Some(Slot::Intervened) | Some(Slot::Conditioned) => &info.present,
            };
            let mut intro = Introduced::new();
            let mut sub = |s: &VarSet| -> VarSet {
                let mut out = VarSet::new();
                for t in s {
                    if vertex_of(t) == m.name {
                        let suffix = &t[m.name.len()..];
                        let members = with_suffix(stand_in, suffix);
                        intro.entry(t.clone()).or_default().extend(members.iter().cloned());
                        out.extend(members);
                    } else {
                        out.insert(t.clone());
                    }
                }
                out
            };
            let term = Functional::Term {
                input: *input,
                measured: sub(measured),
                intervened: sub(intervened),
                conditioned: sub(conditioned),
            };
            (term, intro)
        }
        Functional::Sum { over, body } => {
            let (body, mut intro) = lift_rec(body, m);
            let mut vars = VarSet::new();
            for t in over {
                if vertex_of(t) == m.name {
                    let members = intro
                        .remove(t)
                        .unwrap_or_else(|| with_suffix(&m.emitters, &t[m.name.len()..]));
                    vars.extend(members);
                } else {
                    vars.insert(t.clone());
                }
            }
            (
                Functional::Sum {
                    over: vars,
                    body: Box::new(body),
                },
                intro,
            )
        }
        Functional::Product { factors } => {
            let mut intro = Introduced::new();
            let mut out = Vec::with_capacity(factors.len());
            for x in factors {
                let (y, i) = lift_rec(x, m);
                merge(&mut intro, i);
                out.push(y);
            }
            (Functional::Product { factors: out }, intro)
        }
        Functional::Quotient { numerator, denominator } => {
            let (n, mut i) = lift_rec(numerator, m);
            let (d, j) = lift_rec(denominator, m);
            merge(&mut i, j);
            (Functional::quotient(n, d), i)
        }
    }
}

fn merge(into: &mut Introduced, from: Introduced) {
    for (k, v) in from {
        into.entry(k).or_default().extend(v);
    }
}
