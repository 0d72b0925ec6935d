//! Two-terminal max-flow / min-cut on an explicit graph, using the
//! Boykov–Kolmogorov search-tree algorithm (two growing trees, orphan
//! adoption, tree reuse across augmentations).
//!
//! Terminal links are stored as one signed residual per node: positive means
//! capacity from the source, negative capacity to the sink.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parent {
    None,
    Terminal,
    Orphan,
    Arc(usize),
}

#[derive(Debug, Clone)]
struct Node {
    first: Option<usize>,
    parent: Parent,
    is_sink: bool,
    tr_cap: f64,
    ts: u64,
    dist: u32,
    active: bool,
}

#[derive(Debug, Clone)]
struct Arc {
    head: usize,
    next: Option<usize>,
    r_cap: f64,
}

/// Which side of the minimum cut a node ends up on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Source,
    Sink,
}

#[derive(Debug, Clone)]
pub struct FlowGraph {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    flow: f64,
    active: VecDeque<usize>,
    orphans: VecDeque<usize>,
    time: u64,
}

impl FlowGraph {
    pub fn new(num_nodes: usize, arc_hint: usize) -> Self {
        Self {
            nodes: vec![
                Node {
                    first: None,
                    parent: Parent::None,
                    is_sink: false,
                    tr_cap: 0.0,
                    ts: 0,
                    dist: 0,
                    active: false,
                };
                num_nodes
            ],
            arcs: Vec::with_capacity(2 * arc_hint),
            flow: 0.0,
            active: VecDeque::new(),
            orphans: VecDeque::new(),
            time: 0,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Adds capacities `source -> i` and `i -> sink`. Repeated calls accumulate.
    pub fn add_tweights(&mut self, i: usize, cap_source: f64, cap_sink: f64) {
        debug_assert!(cap_source >= 0.0 && cap_sink >= 0.0);
        let delta = self.nodes[i].tr_cap;
        let (mut s, mut t) = if delta > 0.0 {
            (cap_source + delta, cap_sink)
        } else {
            (cap_source, cap_sink - delta)
        };
        let m = s.min(t);
        self.flow += m;
        s -= m;
        t -= m;
        self.nodes[i].tr_cap = s - t;
    }

    /// Adds the arc pair `i -> j` (capacity `cap`) and `j -> i` (`rev_cap`).
    pub fn add_edge(&mut self, i: usize, j: usize, cap: f64, rev_cap: f64) {
        debug_assert!(i != j && cap >= 0.0 && rev_cap >= 0.0);
        let a = self.arcs.len();
        self.arcs.push(Arc {
            head: j,
            next: self.nodes[i].first,
            r_cap: cap,
        });
        self.nodes[i].first = Some(a);
        self.arcs.push(Arc {
            head: i,
            next: self.nodes[j].first,
            r_cap: rev_cap,
        });
        self.nodes[j].first = Some(a + 1);
    }

    #[inline]
    fn sister(a: usize) -> usize {
        a ^ 1
    }

    fn set_active(&mut self, i: usize) {
        if !self.nodes[i].active {
            self.nodes[i].active = true;
            self.active.push_back(i);
        }
    }

    /// Runs the max-flow computation and returns the total flow, which
    /// equals the capacity of the minimum cut.
    pub fn maxflow(&mut self) -> f64 {
        for i in 0..self.nodes.len() {
            let n = &mut self.nodes[i];
            n.active = false;
            n.ts = 0;
            if n.tr_cap > 0.0 {
                n.is_sink = false;
                n.parent = Parent::Terminal;
                n.dist = 1;
                self.set_active(i);
            } else if n.tr_cap < 0.0 {
                n.is_sink = true;
                n.parent = Parent::Terminal;
                n.dist = 1;
                self.set_active(i);
            } else {
                n.parent = Parent::None;
            }
        }
        self.time = 0;

        while let Some(&i) = self.active.front() {
            if self.nodes[i].parent == Parent::None {
                self.active.pop_front();
                self.nodes[i].active = false;
                continue;
            }
            match self.grow(i) {
                Some(middle) => {
                    self.time += 1;
                    self.augment(middle);
                    self.adopt();
                    // Keep working from `i` while it still has a tree.
                }
                None => {
                    self.active.pop_front();
                    self.nodes[i].active = false;
                }
            }
        }
        self.flow
    }

    /// Expands the tree of `i`; returns an arc from the source tree to the
    /// sink tree when the trees touch.
    fn grow(&mut self, i: usize) -> Option<usize> {
        let in_sink = self.nodes[i].is_sink;
        let mut a_opt = self.nodes[i].first;
        while let Some(a) = a_opt {
            a_opt = self.arcs[a].next;
            let cap = if in_sink {
                self.arcs[Self::sister(a)].r_cap
            } else {
                self.arcs[a].r_cap
            };
            if cap <= 0.0 {
                continue;
            }
            let j = self.arcs[a].head;
            let (its, idist) = (self.nodes[i].ts, self.nodes[i].dist);
            if self.nodes[j].parent == Parent::None {
                let nj = &mut self.nodes[j];
                nj.is_sink = in_sink;
                nj.parent = Parent::Arc(Self::sister(a));
                nj.ts = its;
                nj.dist = idist + 1;
                self.set_active(j);
            } else if self.nodes[j].is_sink != in_sink {
                return Some(if in_sink { Self::sister(a) } else { a });
            } else if self.nodes[j].ts <= its && self.nodes[j].dist > idist {
                let nj = &mut self.nodes[j];
                nj.parent = Parent::Arc(Self::sister(a));
                nj.ts = its;
                nj.dist = idist + 1;
            }
        }
        None
    }

    fn augment(&mut self, middle: usize) {
        // Bottleneck.
        let mut bottleneck = self.arcs[middle].r_cap;
        // Source side: walk from the tail of `middle` to the source.
        let mut i = self.arcs[Self::sister(middle)].head;
        loop {
            match self.nodes[i].parent {
                Parent::Arc(a) => {
                    bottleneck = bottleneck.min(self.arcs[Self::sister(a)].r_cap);
                    i = self.arcs[a].head;
                }
                _ => {
                    bottleneck = bottleneck.min(self.nodes[i].tr_cap);
                    break;
                }
            }
        }
        let mut i = self.arcs[middle].head;
        loop {
            match self.nodes[i].parent {
                Parent::Arc(a) => {
                    bottleneck = bottleneck.min(self.arcs[a].r_cap);
                    i = self.arcs[a].head;
                }
                _ => {
                    bottleneck = bottleneck.min(-self.nodes[i].tr_cap);
                    break;
                }
            }
        }

        self.arcs[Self::sister(middle)].r_cap += bottleneck;
        self.arcs[middle].r_cap -= bottleneck;

        let mut i = self.arcs[Self::sister(middle)].head;
        loop {
            match self.nodes[i].parent {
                Parent::Arc(a) => {
                    self.arcs[a].r_cap += bottleneck;
                    self.arcs[Self::sister(a)].r_cap -= bottleneck;
                    if self.arcs[Self::sister(a)].r_cap <= 0.0 {
                        self.arcs[Self::sister(a)].r_cap = 0.0;
                        self.make_orphan_front(i);
                    }
                    i = self.arcs[a].head;
                }
                _ => {
                    self.nodes[i].tr_cap -= bottleneck;
                    if self.nodes[i].tr_cap <= 0.0 {
                        self.nodes[i].tr_cap = 0.0;
                        self.make_orphan_front(i);
                    }
                    break;
                }
            }
        }
        let mut i = self.arcs[middle].head;
        loop {
            match self.nodes[i].parent {
                Parent::Arc(a) => {
                    self.arcs[Self::sister(a)].r_cap += bottleneck;
                    self.arcs[a].r_cap -= bottleneck;
                    if self.arcs[a].r_cap <= 0.0 {
                        self.arcs[a].r_cap = 0.0;
                        self.make_orphan_front(i);
                    }
                    i = self.arcs[a].head;
                }
                _ => {
                    self.nodes[i].tr_cap += bottleneck;
                    if self.nodes[i].tr_cap >= 0.0 {
                        self.nodes[i].tr_cap = 0.0;
                        self.make_orphan_front(i);
                    }
                    break;
                }
            }
        }
        self.flow += bottleneck;
    }

    fn make_orphan_front(&mut self, i: usize) {
        self.nodes[i].parent = Parent::Orphan;
        self.orphans.push_front(i);
    }

    fn make_orphan_rear(&mut self, i: usize) {
        self.nodes[i].parent = Parent::Orphan;
        self.orphans.push_back(i);
    }

    fn adopt(&mut self) {
        while let Some(i) = self.orphans.pop_front() {
            self.process_orphan(i);
        }
    }

    fn process_orphan(&mut self, i: usize) {
        let in_sink = self.nodes[i].is_sink;
        let mut best: Option<usize> = None;
        let mut d_min = u32::MAX;

        let mut a0_opt = self.nodes[i].first;
        while let Some(a0) = a0_opt {
            a0_opt = self.arcs[a0].next;
            // Residual capacity from the candidate parent towards i
            // (source tree) or from i towards the candidate (sink tree).
            let cap = if in_sink {
                self.arcs[a0].r_cap
            } else {
                self.arcs[Self::sister(a0)].r_cap
            };
            if cap <= 0.0 {
                continue;
            }
            let j0 = self.arcs[a0].head;
            if self.nodes[j0].is_sink != in_sink || self.nodes[j0].parent == Parent::None {
                continue;
            }
            // Walk to the root to check the origin and measure the distance.
            let mut j = j0;
            let mut d: u32 = 0;
            loop {
                if self.nodes[j].ts == self.time {
                    d += self.nodes[j].dist;
                    break;
                }
                d += 1;
                match self.nodes[j].parent {
                    Parent::Terminal => {
                        self.nodes[j].ts = self.time;
                        self.nodes[j].dist = 1;
                        break;
                    }
                    Parent::Orphan | Parent::None => {
                        d = u32::MAX;
                        break;
                    }
                    Parent::Arc(a) => j = self.arcs[a].head,
                }
            }
            if d == u32::MAX {
                continue;
            }
            if d < d_min {
                best = Some(a0);
                d_min = d;
            }
            // Cache distances along the verified path.
            let mut j = j0;
            let mut dd = d;
            while self.nodes[j].ts != self.time {
                self.nodes[j].ts = self.time;
                self.nodes[j].dist = dd;
                dd -= 1;
                match self.nodes[j].parent {
                    Parent::Arc(a) => j = self.arcs[a].head,
                    _ => break,
                }
            }
        }

        if let Some(a0) = best {
            self.nodes[i].parent = Parent::Arc(a0);
            self.nodes[i].ts = self.time;
            self.nodes[i].dist = d_min + 1;
            return;
        }

        // No valid parent: i becomes free; neighbors may need work.
        self.nodes[i].parent = Parent::None;
        let mut a0_opt = self.nodes[i].first;
        while let Some(a0) = a0_opt {
            a0_opt = self.arcs[a0].next;
            let j = self.arcs[a0].head;
            if self.nodes[j].is_sink != in_sink {
                continue;
            }
            let pj = self.nodes[j].parent;
            if pj == Parent::None {
                continue;
            }
            let cap = if in_sink {
                self.arcs[a0].r_cap
            } else {
                self.arcs[Self::sister(a0)].r_cap
            };
            if cap > 0.0 {
                self.set_active(j);
            }
            if let Parent::Arc(a) = pj {
                if self.arcs[a].head == i {
                    self.make_orphan_rear(j);
                }
            }
        }
    }

    /// Side of the cut after [`FlowGraph::maxflow`]; free nodes count as source.
    pub fn segment(&self, i: usize) -> Segment {
        let n = &self.nodes[i];
        if n.parent != Parent::None && n.is_sink {
            Segment::Sink
        } else {
            Segment::Source
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_path() {
        let mut g = FlowGraph::new(2, 1);
        g.add_tweights(0, 5.0, 0.0);
        g.add_tweights(1, 0.0, 3.0);
        g.add_edge(0, 1, 2.0, 0.0);
        assert_eq!(g.maxflow(), 2.0);
        assert_eq!(g.segment(0), Segment::Source);
        assert_eq!(g.segment(1), Segment::Sink);
    }

    #[test]
    fn tweights_accumulate() {
        let mut g = FlowGraph::new(1, 0);
        g.add_tweights(0, 2.0, 5.0);
        g.add_tweights(0, 4.0, 0.0);
        // source 6, sink 5 in total.
        assert_eq!(g.maxflow(), 5.0);
        assert_eq!(g.segment(0), Segment::Source);
    }

    // Exhaustive min cut over all 2^n node partitions.
    fn brute_min_cut(n: usize, src: &[f64], snk: &[f64], arcs: &[(usize, usize, f64)]) -> f64 {
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << n) {
            let in_sink = |i: usize| mask >> i & 1 == 1;
            let mut c = 0.0;
            for i in 0..n {
                c += if in_sink(i) { src[i] } else { snk[i] };
            }
            for &(i, j, w) in arcs {
                if !in_sink(i) && in_sink(j) {
                    c += w;
                }
            }
            best = best.min(c);
        }
        best
    }

    #[test]
    fn random_graphs_match_exhaustive_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.random_range(2..=9);
            // Dyadic capacities keep the arithmetic exact.
            let q = |rng: &mut ChaCha8Rng| (rng.random_range(0..64) as f64) / 8.0;
            let src: Vec<f64> = (0..n).map(|_| q(&mut rng)).collect();
            let snk: Vec<f64> = (0..n).map(|_| q(&mut rng)).collect();
            let mut arcs = Vec::new();
            let mut g = FlowGraph::new(n, n * n);
            for i in 0..n {
                g.add_tweights(i, src[i], snk[i]);
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random_bool(0.5) {
                        let (c, r) = (q(&mut rng), q(&mut rng));
                        g.add_edge(i, j, c, r);
                        arcs.push((i, j, c));
                        arcs.push((j, i, r));
                    }
                }
            }
            let flow = g.maxflow();
            assert_eq!(flow, brute_min_cut(n, &src, &snk, &arcs));
            // The reported partition is a cut of that capacity.
            let mut cut = 0.0;
            for i in 0..n {
                cut += match g.segment(i) {
                    Segment::Sink => src[i],
                    Segment::Source => snk[i],
                };
            }
            for &(i, j, w) in &arcs {
                if g.segment(i) == Segment::Source && g.segment(j) == Segment::Sink {
                    cut += w;
                }
            }
            assert_eq!(cut, flow);
        }
    }
}
