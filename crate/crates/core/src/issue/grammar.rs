//! The stack-trace grammar and a derivation checker over element-kind
//! sequences.
//!
//! ```text
//! Root            ::= StackTraceElems
//! StackTraceElems ::= StackTraceElem StackTraceElems | StackTraceElem
//! StackTraceElem  ::= ExceptionElems | CodeDetails
//! ExceptionElems  ::= ExceptionElem ExceptionElems | ExceptionElem
//! ExceptionElem   ::= ExceptionType | ExceptionMessage
//! CodeDetails     ::= ClassElem | MethodElem | FileElem | LineElem
//! ```
//!
//! The grammar is ambiguous (a run of exception elements splits many ways), so
//! the checker computes, per nonterminal and start position, the set of
//! reachable end positions with memoization, then extracts one derivation.

use std::collections::{BTreeSet, HashMap};

use super::ElementKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NonTerminal {
    Root,
    StackTraceElems,
    StackTraceElem,
    ExceptionElems,
    ExceptionElem,
    CodeDetails,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    N(NonTerminal),
    T(ElementKind),
}

use ElementKind as K;
use NonTerminal as NT;
use Symbol::{N, T};

/// Productions, alternatives in source order.
pub fn productions(nt: NonTerminal) -> &'static [&'static [Symbol]] {
    match nt {
        NT::Root => &[&[N(NT::StackTraceElems)]],
        NT::StackTraceElems => &[&[N(NT::StackTraceElem), N(NT::StackTraceElems)], &[N(NT::StackTraceElem)]],
        NT::StackTraceElem => &[&[N(NT::ExceptionElems)], &[N(NT::CodeDetails)]],
        NT::ExceptionElems => &[&[N(NT::ExceptionElem), N(NT::ExceptionElems)], &[N(NT::ExceptionElem)]],
        NT::ExceptionElem => &[&[T(K::ExceptionType)], &[T(K::ExceptionMessage)]],
        NT::CodeDetails => &[
            &[T(K::ClassElem)],
            &[T(K::MethodElem)],
            &[T(K::FileElem)],
            &[T(K::LineElem)],
        ],
    }
}

/// A node of a derivation tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Derivation {
    Node { symbol: NonTerminal, children: Vec<Derivation> },
    Leaf(ElementKind),
}

impl Derivation {
    /// Terminals at the leaves, left to right.
    pub fn yield_kinds(&self) -> Vec<ElementKind> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<ElementKind>) {
        match self {
            Derivation::Leaf(k) => out.push(*k),
            Derivation::Node { children, .. } => children.iter().for_each(|c| c.collect(out)),
        }
    }
}

struct Checker<'a> {
    input: &'a [ElementKind],
    memo: HashMap<(NonTerminal, usize), BTreeSet<usize>>,
}

impl<'a> Checker<'a> {
    fn ends_symbol(&mut self, sym: Symbol, start: usize) -> BTreeSet<usize> {
        match sym {
            T(k) => {
                if self.input.get(start) == Some(&k) {
                    BTreeSet::from([start + 1])
                } else {
                    BTreeSet::new()
                }
            }
            N(nt) => self.ends(nt, start),
        }
    }

    fn ends_seq(&mut self, seq: &[Symbol], start: usize) -> BTreeSet<usize> {
        let mut frontier = BTreeSet::from([start]);
        for &sym in seq {
            let mut next = BTreeSet::new();
            for pos in frontier {
                next.extend(self.ends_symbol(sym, pos));
            }
            if next.is_empty() {
                return next;
            }
            frontier = next;
        }
        frontier
    }

    /// End positions reachable deriving `nt` from `start`. No production is
    /// left-recursive and every one consumes input, so recursion terminates.
    fn ends(&mut self, nt: NonTerminal, start: usize) -> BTreeSet<usize> {
        if let Some(hit) = self.memo.get(&(nt, start)) {
            return hit.clone();
        }
        let mut out = BTreeSet::new();
        if start < self.input.len() {
            for alt in productions(nt) {
                out.extend(self.ends_seq(alt, start));
            }
        }
        self.memo.insert((nt, start), out.clone());
        out
    }

    fn build_symbol(&mut self, sym: Symbol, start: usize, end: usize) -> Option<Derivation> {
        match sym {
            T(k) => (self.input.get(start) == Some(&k) && end == start + 1).then_some(Derivation::Leaf(k)),
            N(nt) => self.build(nt, start, end),
        }
    }

    fn build_seq(&mut self, seq: &[Symbol], start: usize, end: usize) -> Option<Vec<Derivation>> {
        let (first, rest) = seq.split_first()?;
        if rest.is_empty() {
            return self.build_symbol(*first, start, end).map(|d| vec![d]);
        }
        for mid in self.ends_symbol(*first, start) {
            if mid >= end {
                continue;
            }
            if self.ends_seq(rest, mid).contains(&end) {
                let head = self.build_symbol(*first, start, mid)?;
                let mut tail = self.build_seq(rest, mid, end)?;
                tail.insert(0, head);
                return Some(tail);
            }
        }
        None
    }

    fn build(&mut self, nt: NonTerminal, start: usize, end: usize) -> Option<Derivation> {
        for alt in productions(nt) {
            if self.ends_seq(alt, start).contains(&end) {
                let children = self.build_seq(alt, start, end)?;
                return Some(Derivation::Node { symbol: nt, children });
            }
        }
        None
    }
}

/// A derivation of `kinds` from `Root`, if one exists.
pub fn derive(kinds: &[ElementKind]) -> Option<Derivation> {
    let mut checker = Checker { input: kinds, memo: HashMap::new() };
    if !checker.ends(NT::Root, 0).contains(&kinds.len()) {
        return None;
    }
    checker.build(NT::Root, 0, kinds.len())
}

pub fn is_derivable(kinds: &[ElementKind]) -> bool {
    let mut checker = Checker { input: kinds, memo: HashMap::new() };
    checker.ends(NT::Root, 0).contains(&kinds.len())
}
