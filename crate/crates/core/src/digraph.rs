//! Implication digraph and linear-time satisfiability.
//!
//! A clause `(u v v)` contributes the edges `~u -> v` and `~v -> u`. The
//! formula is satisfiable iff no variable has both literals in one strongly
//! connected component.

use std::collections::VecDeque;

use crate::formula::{Formula, Literal};
use crate::{Error, Result};

/// Compressed adjacency over the `2n` literal vertices.
#[derive(Clone, Debug)]
pub struct ImplicationDigraph {
    n: usize,
    offsets: Vec<u32>,
    targets: Vec<u32>,
}

impl ImplicationDigraph {
    pub fn build(f: &Formula) -> Self {
        let vertices = 2 * f.n();
        let mut degree = vec![0u32; vertices + 1];
        for c in f.clauses() {
            degree[c.first().complement().index()] += 1;
            degree[c.second().complement().index()] += 1;
        }
        let mut offsets = vec![0u32; vertices + 1];
        for v in 0..vertices {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; 2 * f.len()];
        for c in f.clauses() {
            let (u, v) = (c.first(), c.second());
            let from = u.complement().index();
            targets[fill[from] as usize] = v.index() as u32;
            fill[from] += 1;
            let from = v.complement().index();
            targets[fill[from] as usize] = u.index() as u32;
            fill[from] += 1;
        }
        ImplicationDigraph { n: f.n(), offsets, targets }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vertex_count(&self) -> usize {
        2 * self.n
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    fn neighbor_indices(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }

    pub fn out_neighbors(&self, l: Literal) -> impl Iterator<Item = Literal> + '_ {
        self.neighbor_indices(l.index()).iter().map(|&t| Literal::from_index(t as usize))
    }

    pub fn out_degree(&self, l: Literal) -> usize {
        self.neighbor_indices(l.index()).len()
    }

    pub fn has_edge(&self, from: Literal, to: Literal) -> bool {
        self.neighbor_indices(from.index()).contains(&(to.index() as u32))
    }

    pub fn edges(&self) -> impl Iterator<Item = (Literal, Literal)> + '_ {
        (0..self.vertex_count()).flat_map(move |v| {
            self.neighbor_indices(v)
                .iter()
                .map(move |&t| (Literal::from_index(v), Literal::from_index(t as usize)))
        })
    }

    /// Component id per vertex. Ids follow Tarjan completion order, which is a
    /// reverse topological order of the condensation (sinks first).
    pub fn scc(&self) -> Vec<u32> {
        tarjan(self)
    }
}

pub fn build_digraph(f: &Formula) -> ImplicationDigraph {
    ImplicationDigraph::build(f)
}

const UNVISITED: u32 = u32::MAX;

fn tarjan(g: &ImplicationDigraph) -> Vec<u32> {
    let nv = g.vertex_count();
    let mut index = vec![UNVISITED; nv];
    let mut low = vec![0u32; nv];
    let mut comp = vec![UNVISITED; nv];
    let mut on_stack = vec![false; nv];
    let mut stack: Vec<u32> = Vec::new();
    // (vertex, position in its adjacency list)
    let mut call: Vec<(u32, u32)> = Vec::new();
    let mut next_index = 0u32;
    let mut next_comp = 0u32;

    for root in 0..nv {
        if index[root] != UNVISITED {
            continue;
        }
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root as u32);
        on_stack[root] = true;
        call.push((root as u32, g.offsets[root]));

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let v = v as usize;
            let end = g.offsets[v + 1];
            if *pos < end {
                let w = g.targets[*pos as usize] as usize;
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w as u32);
                    on_stack[w] = true;
                    call.push((w as u32, g.offsets[w]));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                let p = parent as usize;
                low[p] = low[p].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("root is on the stack") as usize;
                    on_stack[w] = false;
                    comp[w] = next_comp;
                    if w == v {
                        break;
                    }
                }
                next_comp += 1;
            }
        }
    }
    comp
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SatVerdict {
    pub satisfiable: bool,
    /// Satisfying assignment, `witness[v - 1]` for variable `v`.
    pub witness: Option<Vec<bool>>,
    /// A variable whose two literals share a component.
    pub contradiction_variable: Option<u32>,
}

pub fn is_satisfiable(f: &Formula) -> SatVerdict {
    verdict_from(&ImplicationDigraph::build(f))
}

pub fn verdict_from(g: &ImplicationDigraph) -> SatVerdict {
    let comp = g.scc();
    let mut witness = Vec::with_capacity(g.n());
    for var in 1..=g.n() as u32 {
        let pos = comp[Literal::positive(var).index()];
        let neg = comp[Literal::negative(var).index()];
        if pos == neg {
            return SatVerdict {
                satisfiable: false,
                witness: None,
                contradiction_variable: Some(var),
            };
        }
        // x is set true when its component comes after ~x's in topological
        // order, i.e. has the smaller completion id.
        witness.push(pos < neg);
    }
    SatVerdict { satisfiable: true, witness: Some(witness), contradiction_variable: None }
}

/// The two directed paths `u ~> ~u` and `~u ~> u`, each listed vertex by
/// vertex including both endpoints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContradictoryCycle {
    pub forward: Vec<Literal>,
    pub backward: Vec<Literal>,
}

impl ContradictoryCycle {
    /// Every consecutive pair is an edge and the endpoints are complementary.
    pub fn is_valid_in(&self, g: &ImplicationDigraph) -> bool {
        let path_ok = |p: &[Literal]| {
            p.len() >= 2
                && p.first().map(|l| l.complement()) == p.last().copied()
                && p.windows(2).all(|w| g.has_edge(w[0], w[1]))
        };
        path_ok(&self.forward)
            && path_ok(&self.backward)
            && self.forward[0] == self.backward[self.backward.len() - 1]
    }
}

pub fn find_contradictory_cycle(f: &Formula) -> Option<ContradictoryCycle> {
    let g = ImplicationDigraph::build(f);
    contradictory_cycle_in(&g)
}

pub fn contradictory_cycle_in(g: &ImplicationDigraph) -> Option<ContradictoryCycle> {
    let comp = g.scc();
    let var = (1..=g.n() as u32).find(|&v| {
        comp[Literal::positive(v).index()] == comp[Literal::negative(v).index()]
    })?;
    let x = Literal::positive(var);
    let target = comp[x.index()];
    let forward = shortest_path_within(g, &comp, target, x, x.complement())?;
    let backward = shortest_path_within(g, &comp, target, x.complement(), x)?;
    Some(ContradictoryCycle { forward, backward })
}

fn shortest_path_within(
    g: &ImplicationDigraph,
    comp: &[u32],
    component: u32,
    from: Literal,
    to: Literal,
) -> Option<Vec<Literal>> {
    let mut parent = vec![UNVISITED; g.vertex_count()];
    let mut queue = VecDeque::new();
    parent[from.index()] = from.index() as u32;
    queue.push_back(from.index());
    while let Some(v) = queue.pop_front() {
        if v == to.index() {
            let mut path = vec![to];
            let mut cur = v;
            while cur != from.index() {
                cur = parent[cur] as usize;
                path.push(Literal::from_index(cur));
            }
            path.reverse();
            return Some(path);
        }
        for &w in g.neighbor_indices(v) {
            let w = w as usize;
            if comp[w] == component && parent[w] == UNVISITED {
                parent[w] = v as u32;
                queue.push_back(w);
            }
        }
    }
    None
}

pub const BRUTE_FORCE_MAX_VARS: usize = 25;

/// Exhaustive search over all `2^n` assignments.
pub fn brute_force_satisfiable(f: &Formula) -> Result<bool> {
    if f.n() > BRUTE_FORCE_MAX_VARS {
        return Err(Error::TooLarge(format!(
            "n = {} exceeds the exhaustive limit of {BRUTE_FORCE_MAX_VARS}",
            f.n()
        )));
    }
    // Clause is falsified iff the bits of its two variables equal the
    // pattern that makes both literals false.
    let checks: Vec<(u32, u32)> = f
        .clauses()
        .iter()
        .map(|c| {
            let mut mask = 0u32;
            let mut falsifying = 0u32;
            for l in c.literals() {
                let bit = 1u32 << (l.var() - 1);
                mask |= bit;
                if !l.is_positive() {
                    falsifying |= bit;
                }
            }
            (mask, falsifying)
        })
        .collect();
    let total = 1u64 << f.n();
    Ok((0..total).any(|a| {
        let a = a as u32;
        checks.iter().all(|&(mask, bad)| a & mask != bad)
    }))
}
