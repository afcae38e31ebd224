//! Hierarchical navigable small-world graph over unit vectors, scored by
//! inner product.
//!
//! Layer 0 keeps up to `2 * max_degree` links per node, upper layers
//! `max_degree`. Neighbors are chosen with the diversity heuristic and topped
//! up with the closest pruned candidates.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::dot;

/// (distance, node); distance = -similarity. Ties order by node id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    dist: f32,
    node: u32,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.node.cmp(&other.node))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Visited {
    bits: Vec<u64>,
}

impl Visited {
    fn new(n: usize) -> Self {
        Self {
            bits: vec![0; n.div_ceil(64)],
        }
    }

    /// Marks `i`; returns false if it was already marked.
    #[inline]
    fn insert(&mut self, i: u32) -> bool {
        let (w, b) = ((i / 64) as usize, i % 64);
        let was = self.bits[w] >> b & 1 == 1;
        self.bits[w] |= 1 << b;
        !was
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Hnsw {
    pub(crate) max_degree: usize,
    pub(crate) entry: u32,
    pub(crate) max_level: usize,
    /// links[node][layer]
    pub(crate) links: Vec<Vec<Vec<u32>>>,
}

pub(crate) struct GraphView<'a> {
    pub data: &'a [f32],
    pub dim: usize,
}

impl GraphView<'_> {
    #[inline]
    fn vec(&self, i: u32) -> &[f32] {
        let i = i as usize;
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn dist_to(&self, q: &[f32], i: u32) -> f32 {
        -dot(q, self.vec(i))
    }

    #[inline]
    fn dist(&self, a: u32, b: u32) -> f32 {
        -dot(self.vec(a), self.vec(b))
    }
}

impl Hnsw {
    fn cap(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.max_degree
        } else {
            self.max_degree
        }
    }

    /// Inserts nodes `0..n` in order.
    pub(crate) fn build(view: &GraphView<'_>, max_degree: usize, ef_construction: usize, seed: u64) -> Self {
        let n = view.data.len() / view.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ml = 1.0 / (max_degree.max(2) as f64).ln();
        let mut g = Hnsw {
            max_degree,
            entry: 0,
            max_level: 0,
            links: Vec::with_capacity(n),
        };
        for node in 0..n as u32 {
            let u: f64 = rng.random::<f64>();
            let level = ((-(1.0 - u).ln()) * ml).floor().min(16.0) as usize;
            g.links.push(vec![Vec::new(); level + 1]);
            if node == 0 {
                g.max_level = level;
                continue;
            }
            g.insert(view, node, level, ef_construction);
        }
        g
    }

    fn insert(&mut self, view: &GraphView<'_>, node: u32, level: usize, ef_construction: usize) {
        let q = view.vec(node);
        let mut ep = Cand {
            dist: view.dist_to(q, self.entry),
            node: self.entry,
        };
        for layer in (level + 1..=self.max_level).rev() {
            ep = self.greedy(view, q, ep, layer);
        }
        let mut eps = vec![ep];
        for layer in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(view, q, &eps, ef_construction, layer, None);
            let chosen = select_neighbors(view, &found, self.cap(layer));
            self.links[node as usize][layer] = chosen.iter().map(|c| c.node).collect();
            for c in &chosen {
                self.link_back(view, c.node, node, c.dist, layer);
            }
            eps = found;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = node;
        }
    }

    fn link_back(&mut self, view: &GraphView<'_>, from: u32, to: u32, dist: f32, layer: usize) {
        let cap = self.cap(layer);
        let list = &mut self.links[from as usize][layer];
        list.push(to);
        if list.len() <= cap {
            return;
        }
        let mut cands: Vec<Cand> = list
            .iter()
            .map(|&n| Cand {
                dist: if n == to { dist } else { view.dist(from, n) },
                node: n,
            })
            .collect();
        cands.sort();
        let kept = select_neighbors(view, &cands, cap);
        self.links[from as usize][layer] = kept.iter().map(|c| c.node).collect();
    }

    fn greedy(&self, view: &GraphView<'_>, q: &[f32], mut cur: Cand, layer: usize) -> Cand {
        loop {
            let mut improved = false;
            for &nb in &self.links[cur.node as usize][layer] {
                let c = Cand {
                    dist: view.dist_to(q, nb),
                    node: nb,
                };
                if c < cur {
                    cur = c;
                    improved = true;
                }
            }
            if !improved {
                return cur;
            }
        }
    }

    /// Beam search on one layer; result sorted nearest first.
    fn search_layer(
        &self,
        view: &GraphView<'_>,
        q: &[f32],
        entry: &[Cand],
        ef: usize,
        layer: usize,
        visited: Option<&mut Visited>,
    ) -> Vec<Cand> {
        let mut local;
        let visited = match visited {
            Some(v) => v,
            None => {
                local = Visited::new(self.links.len());
                &mut local
            }
        };
        let mut frontier: BinaryHeap<Reverse<Cand>> = BinaryHeap::new();
        let mut best: BinaryHeap<Cand> = BinaryHeap::new();
        for &e in entry {
            if visited.insert(e.node) {
                frontier.push(Reverse(e));
                best.push(e);
            }
        }
        while best.len() > ef {
            best.pop();
        }
        while let Some(Reverse(c)) = frontier.pop() {
            if best.len() >= ef && c > *best.peek().expect("non-empty") {
                break;
            }
            for &nb in &self.links[c.node as usize][layer] {
                if !visited.insert(nb) {
                    continue;
                }
                let cand = Cand {
                    dist: view.dist_to(q, nb),
                    node: nb,
                };
                if best.len() < ef || cand < *best.peek().expect("non-empty") {
                    frontier.push(Reverse(cand));
                    best.push(cand);
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_sorted_vec()
    }

    /// Approximate `ef` nearest nodes to `q`, nearest first.
    pub(crate) fn search(&self, view: &GraphView<'_>, q: &[f32], ef: usize) -> Vec<(u32, f32)> {
        let mut ep = Cand {
            dist: view.dist_to(q, self.entry),
            node: self.entry,
        };
        for layer in (1..=self.max_level).rev() {
            ep = self.greedy(view, q, ep, layer);
        }
        let mut visited = Visited::new(self.links.len());
        self.search_layer(view, q, &[ep], ef, 0, Some(&mut visited))
            .into_iter()
            .map(|c| (c.node, -c.dist))
            .collect()
    }

    /// Number of nodes reachable from the entry point on layer 0.
    #[cfg(test)]
    pub(crate) fn reachable(&self) -> usize {
        let mut seen = Visited::new(self.links.len());
        let mut stack = vec![self.entry];
        seen.insert(self.entry);
        let mut count = 0;
        while let Some(n) = stack.pop() {
            count += 1;
            for &nb in &self.links[n as usize][0] {
                if seen.insert(nb) {
                    stack.push(nb);
                }
            }
        }
        count
    }
}

/// Diversity heuristic over candidates sorted nearest first; pruned
/// candidates fill any remaining slots.
fn select_neighbors(view: &GraphView<'_>, sorted: &[Cand], m: usize) -> Vec<Cand> {
    let mut kept: Vec<Cand> = Vec::with_capacity(m);
    let mut pruned: Vec<Cand> = Vec::new();
    for &c in sorted {
        if kept.len() >= m {
            break;
        }
        let diverse = kept.iter().all(|k| c.dist < view.dist(c.node, k.node));
        if diverse {
            kept.push(c);
        } else {
            pruned.push(c);
        }
    }
    for c in pruned {
        if kept.len() >= m {
            break;
        }
        kept.push(c);
    }
    kept
}
