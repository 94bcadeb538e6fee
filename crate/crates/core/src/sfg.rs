//! Signal-flow graphs and Mason's gain formula.
//!
//! Nodes are signal variables and an edge `x -> y` with gain `c` means the
//! term `c·x` appears in the equation defining `y`. Two loops (or a loop and
//! a path) touch when they share a node.
//!
//! Node order is insertion order; all enumerations are deterministic in it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Cap on enumerated cycles or paths unless the caller picks another.
pub const DEFAULT_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SfgError {
    #[error("variable '{0}' is defined by more than one equation")]
    MultipleDefinitions(String),
    #[error("more than {0} cycles or paths; raise the limit")]
    LimitExceeded(usize),
    #[error("graph determinant is zero")]
    ZeroDeterminant,
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("source and sink must differ")]
    SameEndpoints,
    #[error("non-finite gain on edge {from} -> {to}")]
    NonFiniteGain { from: String, to: String },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub gain: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowGraph {
    names: Vec<String>,
    index: HashMap<String, usize>,
    edges: BTreeMap<(usize, usize), f64>,
}

impl FlowGraph {
    pub fn new() -> Self {
        FlowGraph::default()
    }

    /// Index of `name`, inserting it if new.
    pub fn add_node(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    /// Adds `gain` to the edge `from -> to`; an edge summing to zero is dropped.
    pub fn add_edge(&mut self, from: &str, to: &str, gain: f64) -> Result<(), SfgError> {
        if !gain.is_finite() {
            return Err(SfgError::NonFiniteGain {
                from: from.into(),
                to: to.into(),
            });
        }
        let (a, b) = (self.add_node(from), self.add_node(to));
        let g = self.edges.get(&(a, b)).copied().unwrap_or(0.0) + gain;
        if g == 0.0 {
            self.edges.remove(&(a, b));
        } else {
            self.edges.insert((a, b), g);
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[String] {
        &self.names
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn gain(&self, from: &str, to: &str) -> f64 {
        match (self.node_index(from), self.node_index(to)) {
            (Some(a), Some(b)) => self.edges.get(&(a, b)).copied().unwrap_or(0.0),
            _ => 0.0,
        }
    }

    /// Edges ordered by (source, target) node order.
    pub fn edges(&self) -> Vec<Edge> {
        self.edges
            .iter()
            .map(|(&(a, b), &g)| Edge {
                from: self.names[a].clone(),
                to: self.names[b].clone(),
                gain: g,
            })
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn successors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.names.len()];
        for (&(a, b), &g) in &self.edges {
            adj[a].push((b, g));
        }
        adj
    }

    fn require(&self, name: &str) -> Result<usize, SfgError> {
        self.node_index(name)
            .ok_or_else(|| SfgError::UnknownNode(name.to_string()))
    }

    /// Parses the edge-list format: `from to gain` per line, a lone name
    /// declares an isolated node, `#` starts a comment.
    pub fn parse_edge_list(text: &str) -> Result<FlowGraph, SfgError> {
        let mut g = FlowGraph::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            let toks: Vec<&str> = line.split_whitespace().collect();
            let err = |reason: String| SfgError::Syntax { line: i + 1, reason };
            match toks.as_slice() {
                [] => {}
                [n] => {
                    g.add_node(n);
                }
                [from, to, gain] => {
                    let v = crate::units::parse_value(gain).map_err(err)?;
                    g.add_edge(from, to, v).map_err(|e| err(e.to_string()))?;
                }
                _ => return Err(err(format!("expected 'from to gain', got '{line}'"))),
            }
        }
        Ok(g)
    }

    pub fn to_edge_list(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FlowGraph {
    /// Edge-list text that parses back to the same node order: isolated
    /// nodes are declared first, and when the edges alone would introduce
    /// nodes out of order every node is declared up front.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut touched = vec![false; self.names.len()];
        for &(a, b) in self.edges.keys() {
            touched[a] = true;
            touched[b] = true;
        }
        let mut order: Vec<usize> = (0..self.names.len()).filter(|&i| !touched[i]).collect();
        let mut seen = vec![false; self.names.len()];
        for &i in &order {
            seen[i] = true;
        }
        for &(a, b) in self.edges.keys() {
            for i in [a, b] {
                if !seen[i] {
                    seen[i] = true;
                    order.push(i);
                }
            }
        }
        if order.iter().enumerate().all(|(k, &i)| k == i) {
            for (n, _) in self.names.iter().zip(&touched).filter(|(_, t)| !**t) {
                writeln!(f, "{n}")?;
            }
        } else {
            for n in &self.names {
                writeln!(f, "{n}")?;
            }
        }
        for e in self.edges() {
            writeln!(f, "{} {} {:?}", e.from, e.to, e.gain)?;
        }
        Ok(())
    }
}

/// `lhs = Σ coefficient·variable`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equation {
    pub lhs: String,
    pub terms: Vec<(String, f64)>,
}

impl Equation {
    pub fn new(lhs: &str, terms: &[(&str, f64)]) -> Self {
        Equation {
            lhs: lhs.to_string(),
            terms: terms.iter().map(|(v, c)| (v.to_string(), *c)).collect(),
        }
    }
}

pub fn from_linear_system(equations: &[Equation]) -> Result<FlowGraph, SfgError> {
    let mut g = FlowGraph::new();
    let mut defined = std::collections::HashSet::new();
    for eq in equations {
        if !defined.insert(eq.lhs.as_str()) {
            return Err(SfgError::MultipleDefinitions(eq.lhs.clone()));
        }
        g.add_node(&eq.lhs);
        for (var, c) in &eq.terms {
            g.add_edge(var, &eq.lhs, *c)?;
        }
    }
    Ok(g)
}

/// Small fixed-width node set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64).max(1)])
    }
    fn of(n: usize, items: &[usize]) -> Self {
        let mut b = Bits::new(n);
        for &i in items {
            b.0[i / 64] |= 1 << (i % 64);
        }
        b
    }
    fn disjoint(&self, o: &Bits) -> bool {
        self.0.iter().zip(&o.0).all(|(a, b)| a & b == 0)
    }
    fn union(&self, o: &Bits) -> Bits {
        Bits(self.0.iter().zip(&o.0).map(|(a, b)| a | b).collect())
    }
    /// Keeps only members with index >= `from`.
    fn above(&self, from: usize) -> Bits {
        let mut b = self.clone();
        for (w, word) in b.0.iter_mut().enumerate() {
            let lo = w * 64;
            if lo + 64 <= from {
                *word = 0;
            } else if lo < from {
                *word &= !0u64 << (from - lo);
            }
        }
        b
    }
}

/// Double-double accumulator; Mason sums alternate in sign and can cancel
/// by many orders of magnitude.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    fn new(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Dd {
            hi: s,
            lo: lo - (s - hi),
        }
    }

    fn add(self, o: Dd) -> Dd {
        let s = self.hi + o.hi;
        let z = s - self.hi;
        let e = (self.hi - (s - z)) + (o.hi - z);
        Dd::renorm(s, e + self.lo + o.lo)
    }

    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::renorm(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// A simple cycle, rotated to start at its earliest node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Loop {
    pub nodes: Vec<String>,
    pub gain: f64,
    #[serde(skip)]
    idx: Vec<usize>,
    #[serde(skip)]
    exact: Dd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    pub nodes: Vec<String>,
    pub gain: f64,
    #[serde(skip)]
    idx: Vec<usize>,
    #[serde(skip)]
    exact: Dd,
}

fn touches(a: &[usize], b: &[usize]) -> bool {
    a.iter().any(|x| b.contains(x))
}

impl Loop {
    pub fn touches(&self, other: &Loop) -> bool {
        touches(&self.idx, &other.idx)
    }

    pub fn touches_path(&self, p: &Path) -> bool {
        touches(&self.idx, &p.idx)
    }
}

/// Index pairs of loops that share no node.
pub fn non_touching_pairs(loops: &[Loop]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..loops.len() {
        for j in i + 1..loops.len() {
            if !loops[i].touches(&loops[j]) {
                out.push((i, j));
            }
        }
    }
    out
}

struct Johnson<'a> {
    adj: &'a [Vec<(usize, f64)>],
    start: usize,
    blocked: Vec<bool>,
    b: Vec<Vec<usize>>,
    stack: Vec<usize>,
    found: Vec<Vec<usize>>,
    earlier: usize,
    limit: usize,
}

impl Johnson<'_> {
    fn unblock(&mut self, u: usize) {
        self.blocked[u] = false;
        while let Some(w) = self.b[u].pop() {
            if self.blocked[w] {
                self.unblock(w);
            }
        }
    }

    fn circuit(&mut self, v: usize) -> Result<bool, SfgError> {
        let mut closed = false;
        self.stack.push(v);
        self.blocked[v] = true;
        for &(w, _) in self.adj[v].iter() {
            if w < self.start {
                continue;
            }
            if w == self.start {
                if self.earlier + self.found.len() == self.limit {
                    return Err(SfgError::LimitExceeded(self.limit));
                }
                self.found.push(self.stack.clone());
                closed = true;
            } else if !self.blocked[w] && self.circuit(w)? {
                closed = true;
            }
        }
        if closed {
            self.unblock(v);
        } else {
            for &(w, _) in self.adj[v].iter() {
                if w >= self.start && !self.b[w].contains(&v) {
                    self.b[w].push(v);
                }
            }
        }
        self.stack.pop();
        Ok(closed)
    }
}

fn product(g: &FlowGraph, cyc: &[usize], closed: bool) -> Dd {
    let mut p = Dd::ONE;
    for w in cyc.windows(2) {
        p = p.mul(Dd::new(g.edges[&(w[0], w[1])]));
    }
    if closed {
        p = p.mul(Dd::new(g.edges[&(cyc[cyc.len() - 1], cyc[0])]));
    }
    p
}

/// All simple cycles, ordered by earliest node and then by node sequence.
pub fn enumerate_loops(g: &FlowGraph) -> Result<Vec<Loop>, SfgError> {
    enumerate_loops_with_limit(g, DEFAULT_LIMIT)
}

pub fn enumerate_loops_with_limit(g: &FlowGraph, limit: usize) -> Result<Vec<Loop>, SfgError> {
    let adj = g.successors();
    let n = g.names.len();
    let mut all: Vec<Vec<usize>> = Vec::new();
    for s in 0..n {
        let mut j = Johnson {
            adj: &adj,
            start: s,
            blocked: vec![false; n],
            b: vec![Vec::new(); n],
            stack: Vec::new(),
            found: Vec::new(),
            earlier: all.len(),
            limit,
        };
        j.circuit(s)?;
        let mut found = j.found;
        found.sort();
        all.extend(found);
    }
    Ok(all
        .into_iter()
        .map(|idx| {
            let exact = product(g, &idx, true);
            Loop {
                nodes: idx.iter().map(|&i| g.names[i].clone()).collect(),
                gain: exact.value(),
                idx,
                exact,
            }
        })
        .collect())
}

pub fn enumerate_forward_paths(g: &FlowGraph, src: &str, dst: &str) -> Result<Vec<Path>, SfgError> {
    enumerate_forward_paths_with_limit(g, src, dst, DEFAULT_LIMIT)
}

pub fn enumerate_forward_paths_with_limit(
    g: &FlowGraph,
    src: &str,
    dst: &str,
    limit: usize,
) -> Result<Vec<Path>, SfgError> {
    let (s, t) = (g.require(src)?, g.require(dst)?);
    if s == t {
        return Err(SfgError::SameEndpoints);
    }
    let adj = g.successors();
    let mut on_path = vec![false; adj.len()];
    let mut stack = vec![s];
    let mut out = Vec::new();
    fn dfs(
        adj: &[Vec<(usize, f64)>],
        t: usize,
        on_path: &mut [bool],
        stack: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        limit: usize,
    ) -> Result<(), SfgError> {
        let v = *stack.last().expect("non-empty");
        if v == t {
            if out.len() == limit {
                return Err(SfgError::LimitExceeded(limit));
            }
            out.push(stack.clone());
            return Ok(());
        }
        on_path[v] = true;
        for &(w, _) in &adj[v] {
            if !on_path[w] {
                stack.push(w);
                dfs(adj, t, on_path, stack, out, limit)?;
                stack.pop();
            }
        }
        on_path[v] = false;
        Ok(())
    }
    dfs(&adj, t, &mut on_path, &mut stack, &mut out, limit)?;
    Ok(out
        .into_iter()
        .map(|idx| {
            let exact = product(g, &idx, false);
            Path {
                nodes: idx.iter().map(|&i| g.names[i].clone()).collect(),
                gain: exact.value(),
                idx,
                exact,
            }
        })
        .collect())
}

/// `1 − ΣL + Σ(pairs) − …` over mutually non-touching loop sets, together
/// with the same sum taken over absolute values (a scale for zero tests).
fn determinant_of(n: usize, loops: &[&Loop]) -> (Dd, f64) {
    let mut by_min: Vec<Vec<(Bits, Dd)>> = vec![Vec::new(); n];
    for l in loops {
        let m = *l.idx.iter().min().expect("loops are non-empty");
        by_min[m].push((Bits::of(n, &l.idx), l.exact));
    }
    // Sweep nodes in order; at node v either no chosen loop has v as its
    // earliest node, or exactly one does.
    fn go(
        v: usize,
        used: Bits,
        by_min: &[Vec<(Bits, Dd)>],
        memo: &mut HashMap<(usize, Bits), (Dd, f64)>,
    ) -> (Dd, f64) {
        let v = (v..by_min.len()).find(|&i| !by_min[i].is_empty()).unwrap_or(by_min.len());
        if v == by_min.len() {
            return (Dd::ONE, 1.0);
        }
        let key = (v, used.above(v));
        if let Some(&r) = memo.get(&key) {
            return r;
        }
        let (mut d, mut a) = go(v + 1, used.clone(), by_min, memo);
        for (bits, gain) in &by_min[v] {
            if bits.disjoint(&used) {
                let (sd, sa) = go(v + 1, used.union(bits), by_min, memo);
                d = d.add(gain.mul(sd).neg());
                a += gain.hi.abs() * sa;
            }
        }
        memo.insert(key, (d, a));
        (d, a)
    }
    go(0, Bits::new(n), &by_min, &mut HashMap::new())
}

pub fn graph_determinant(g: &FlowGraph) -> Result<f64, SfgError> {
    let loops = enumerate_loops(g)?;
    Ok(determinant_of(g.names.len(), &loops.iter().collect::<Vec<_>>()).0.value())
}

/// Everything that enters Mason's formula for one source/sink pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MasonTerms {
    pub forward_paths: Vec<Path>,
    pub loops: Vec<Loop>,
    pub determinant: f64,
    /// `Δ_k`, aligned with `forward_paths`.
    pub cofactors: Vec<f64>,
    #[serde(skip)]
    scale: f64,
    #[serde(skip)]
    exact: (Dd, Vec<Dd>),
}

impl MasonTerms {
    /// `Σ P_k Δ_k / Δ`.
    pub fn gain(&self) -> Result<f64, SfgError> {
        if self.determinant.is_nan() || self.determinant.abs() <= 1e-12 * self.scale {
            return Err(SfgError::ZeroDeterminant);
        }
        let num = self
            .forward_paths
            .iter()
            .zip(&self.exact.1)
            .fold(Dd::default(), |acc, (p, c)| acc.add(p.exact.mul(*c)));
        Ok(num.value() / self.exact.0.value())
    }
}

pub fn mason_terms(g: &FlowGraph, src: &str, dst: &str, limit: usize) -> Result<MasonTerms, SfgError> {
    let forward_paths = enumerate_forward_paths_with_limit(g, src, dst, limit)?;
    let loops = enumerate_loops_with_limit(g, limit)?;
    let n = g.names.len();
    let all: Vec<&Loop> = loops.iter().collect();
    let (determinant, scale) = determinant_of(n, &all);
    let cofactors: Vec<Dd> = forward_paths
        .iter()
        .map(|p| {
            let rest: Vec<&Loop> = loops.iter().filter(|l| !l.touches_path(p)).collect();
            determinant_of(n, &rest).0
        })
        .collect();
    Ok(MasonTerms {
        forward_paths,
        loops,
        determinant: determinant.value(),
        cofactors: cofactors.iter().map(|c| c.value()).collect(),
        scale,
        exact: (determinant, cofactors),
    })
}

/// Transmission from a unit injection at `src` to `dst`.
pub fn mason_gain(g: &FlowGraph, src: &str, dst: &str) -> Result<f64, SfgError> {
    mason_terms(g, src, dst, DEFAULT_LIMIT)?.gain()
}
