//! Social graph, behavior matrix and label sets, plus the seeded generators
//! used for desk-scale experiments.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::{Bernoulli, Distribution};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Undirected simple graph stored as a symmetric CSR adjacency structure.
///
/// Neighbor lists are sorted ascending, so any reduction over a row has a
/// fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialGraph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    max_degree: usize,
}

impl SocialGraph {
    /// Builds a graph from unordered pairs. Rejects self-loops, duplicate
    /// edges (in either orientation) and ids outside `0..node_count`.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut seen = BTreeSet::new();
        for (u, v) in edges {
            for id in [u, v] {
                if id >= node_count {
                    return Err(Error::NodeOutOfRange { id, count: node_count });
                }
            }
            if u == v {
                return Err(Error::SelfLoop { node: u });
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::DuplicateEdge { u, v });
            }
        }
        Ok(Self::from_sorted_pairs(node_count, &seen))
    }

    fn from_sorted_pairs(node_count: usize, pairs: &BTreeSet<(usize, usize)>) -> Self {
        let mut degree = vec![0usize; node_count];
        for &(u, v) in pairs {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(node_count + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..node_count].to_vec();
        let mut neighbors = vec![0usize; 2 * pairs.len()];
        for &(u, v) in pairs {
            neighbors[fill[u]] = v;
            fill[u] += 1;
            neighbors[fill[v]] = u;
            fill[v] += 1;
        }
        for u in 0..node_count {
            neighbors[offsets[u]..offsets[u + 1]].sort_unstable();
        }
        let max_degree = degree.iter().copied().max().unwrap_or(0);
        SocialGraph { offsets, neighbors, max_degree }
    }

    pub fn empty(node_count: usize) -> Self {
        Self::from_sorted_pairs(node_count, &BTreeSet::new())
    }

    pub fn path(n: usize) -> Self {
        Self::from_edges(n, (1..n).map(|i| (i - 1, i))).expect("path is simple")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs at least 3 nodes");
        Self::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).expect("cycle is simple")
    }

    /// Star with one hub (node 0) and `leaves` leaves.
    pub fn star(leaves: usize) -> Self {
        Self::from_edges(leaves + 1, (1..=leaves).map(|i| (0, i))).expect("star is simple")
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v)));
        Self::from_edges(n, edges).expect("complete graph is simple")
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn degrees(&self) -> impl Iterator<Item = usize> + '_ {
        self.offsets.windows(2).map(|w| w[1] - w[0])
    }

    /// Maximum degree, which is also the induced l1 norm of the adjacency matrix.
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn avg_degree(&self) -> f64 {
        if self.node_count() == 0 {
            0.0
        } else {
            self.neighbors.len() as f64 / self.node_count() as f64
        }
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count())
            .flat_map(move |u| self.neighbors(u).iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Offset range of `u`'s neighbor list inside the flat directed-slot array.
    pub(crate) fn slots(&self, u: usize) -> core::ops::Range<usize> {
        self.offsets[u]..self.offsets[u + 1]
    }

    pub(crate) fn slot_count(&self) -> usize {
        self.neighbors.len()
    }

    /// Slot of `v` in `u`'s neighbor list.
    pub(crate) fn slot_of(&self, u: usize, v: usize) -> Option<usize> {
        self.neighbors(u).binary_search(&v).ok().map(|k| self.offsets[u] + k)
    }

    /// `y = M x` with rows reduced in ascending column order.
    pub fn adjacency_mul(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.node_count());
        for (u, out) in y.iter_mut().enumerate() {
            *out = self.neighbors(u).iter().map(|&v| x[v]).sum();
        }
    }

    /// Breadth-first spanning forest rooted at the lowest id of each component.
    pub fn spanning_forest(&self) -> SocialGraph {
        let n = self.node_count();
        let mut visited = vec![false; n];
        let mut pairs = BTreeSet::new();
        let mut queue = alloc::collections::VecDeque::new();
        for root in 0..n {
            if visited[root] {
                continue;
            }
            visited[root] = true;
            queue.push_back(root);
            while let Some(u) = queue.pop_front() {
                for &v in self.neighbors(u) {
                    if !visited[v] {
                        visited[v] = true;
                        pairs.insert((u.min(v), u.max(v)));
                        queue.push_back(v);
                    }
                }
            }
        }
        Self::from_sorted_pairs(n, &pairs)
    }

    /// Subgraph induced on `keep`, with nodes renumbered in the order given.
    pub fn induced(&self, keep: &[usize]) -> SocialGraph {
        let mut index = BTreeMap::new();
        for (new, &old) in keep.iter().enumerate() {
            index.insert(old, new);
        }
        let mut pairs = BTreeSet::new();
        for (&old, &new) in &index {
            for v in self.neighbors(old) {
                if let Some(&w) = index.get(v) {
                    pairs.insert((new.min(w), new.max(w)));
                }
            }
        }
        Self::from_sorted_pairs(keep.len(), &pairs)
    }
}

/// Random recursive tree on `n` nodes: node `i` attaches to a uniform parent in `0..i`.
pub fn random_tree(n: usize, seed: u64) -> SocialGraph {
    let mut rng = rng::seeded(seed);
    let edges: Vec<_> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    SocialGraph::from_edges(n, edges).expect("tree is simple")
}

/// Random simple graph with exactly `edge_count` edges drawn uniformly.
pub fn random_graph(node_count: usize, edge_count: usize, seed: u64) -> Result<SocialGraph> {
    let possible = node_count.saturating_mul(node_count.saturating_sub(1)) / 2;
    if edge_count > possible {
        return Err(Error::invalid(format!(
            "{edge_count} edges do not fit in a simple graph on {node_count} nodes"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut pairs = BTreeSet::new();
    while pairs.len() < edge_count {
        let u = rng.random_range(0..node_count);
        let v = rng.random_range(0..node_count);
        if u != v {
            pairs.insert((u.min(v), u.max(v)));
        }
    }
    Ok(SocialGraph::from_sorted_pairs(node_count, &pairs))
}

/// Sparse user x object matrix with values in `[0, 1]`, stored row-major
/// (CSR) with objects sorted inside each row.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorMatrix {
    object_count: usize,
    offsets: Vec<usize>,
    objects: Vec<usize>,
    values: Vec<f64>,
}

impl BehaviorMatrix {
    pub fn from_triplets<I>(user_count: usize, object_count: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut cells = BTreeMap::new();
        for (user, object, value) in triplets {
            if user >= user_count {
                return Err(Error::NodeOutOfRange { id: user, count: user_count });
            }
            if object >= object_count {
                return Err(Error::invalid(format!(
                    "object id {object} out of range for {object_count} objects"
                )));
            }
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::ValueOutOfRange { user, object, value });
            }
            if cells.insert((user, object), value).is_some() {
                return Err(Error::DuplicateEntry { user, object });
            }
        }
        let mut offsets = vec![0usize; user_count + 1];
        let mut objects = Vec::with_capacity(cells.len());
        let mut values = Vec::with_capacity(cells.len());
        for (&(user, object), &value) in &cells {
            offsets[user + 1] += 1;
            objects.push(object);
            values.push(value);
        }
        for u in 0..user_count {
            offsets[u + 1] += offsets[u];
        }
        Ok(BehaviorMatrix { object_count, offsets, objects, values })
    }

    /// Builds from dense rows, storing only nonzero entries.
    pub fn from_dense_rows(object_count: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let triplets = rows.iter().enumerate().flat_map(|(u, row)| {
            row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(move |(j, &v)| (u, j, v))
        });
        for row in rows {
            if row.len() != object_count {
                return Err(Error::Dimension { expected: object_count, got: row.len() });
            }
        }
        Self::from_triplets(rows.len(), object_count, triplets)
    }

    pub fn user_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn object_count(&self) -> usize {
        self.object_count
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, user: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[user]..self.offsets[user + 1];
        self.objects[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// True if the user has at least one stored entry.
    pub fn has_behaviors(&self, user: usize) -> bool {
        self.offsets[user + 1] > self.offsets[user]
    }

    pub fn dense_row(&self, user: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.object_count];
        for (j, v) in self.row(user) {
            out[j] = v;
        }
        out
    }

    pub fn dense_rows(&self) -> Vec<Vec<f64>> {
        (0..self.user_count()).map(|u| self.dense_row(u)).collect()
    }

    /// Stored entries ordered by `(user, object)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.user_count()).flat_map(move |u| self.row(u).map(move |(j, v)| (u, j, v)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

/// Partial map from user to a binary attribute state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinaryLabels {
    labels: BTreeMap<usize, Sign>,
}

impl BinaryLabels {
    pub fn new<I: IntoIterator<Item = (usize, Sign)>>(labels: I) -> Self {
        BinaryLabels { labels: labels.into_iter().collect() }
    }

    pub fn get(&self, user: usize) -> Option<Sign> {
        self.labels.get(&user).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Sign)> + '_ {
        self.labels.iter().map(|(&u, &s)| (u, s))
    }

    pub fn check_users(&self, user_count: usize) -> Result<()> {
        match self.labels.keys().next_back() {
            Some(&u) if u >= user_count => Err(Error::NodeOutOfRange { id: u, count: user_count }),
            _ => Ok(()),
        }
    }

    pub fn restrict(&self, users: &[usize]) -> BinaryLabels {
        BinaryLabels::new(users.iter().filter_map(|&u| self.get(u).map(|s| (u, s))))
    }
}

/// Partial map from user to one of `classes` attribute values.
///
/// Classes are 0-based here; file formats and the CLI use `1..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassLabels {
    classes: usize,
    labels: BTreeMap<usize, usize>,
}

impl MulticlassLabels {
    pub fn new<I: IntoIterator<Item = (usize, usize)>>(classes: usize, labels: I) -> Result<Self> {
        if classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {classes}")));
        }
        let labels: BTreeMap<_, _> = labels.into_iter().collect();
        if let Some((&u, &c)) = labels.iter().find(|(_, &c)| c >= classes) {
            return Err(Error::invalid(format!("user {u}: class {c} out of range for {classes} classes")));
        }
        Ok(MulticlassLabels { classes, labels })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, user: usize) -> Option<usize> {
        self.labels.get(&user).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels.iter().map(|(&u, &c)| (u, c))
    }

    pub fn check_users(&self, user_count: usize) -> Result<()> {
        match self.labels.keys().next_back() {
            Some(&u) if u >= user_count => Err(Error::NodeOutOfRange { id: u, count: user_count }),
            _ => Ok(()),
        }
    }

    pub fn restrict(&self, users: &[usize]) -> MulticlassLabels {
        MulticlassLabels {
            classes: self.classes,
            labels: users.iter().filter_map(|&u| self.get(u).map(|c| (u, c))).collect(),
        }
    }

    /// Class `positive` becomes `+1`, every other class `-1`.
    pub fn to_binary(&self, positive: usize) -> BinaryLabels {
        BinaryLabels::new(self.iter().map(|(u, c)| {
            (u, if c == positive { Sign::Positive } else { Sign::Negative })
        }))
    }

    /// Number of labeled users per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for c in self.labels.values() {
            counts[*c] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LabelSet {
    Binary(BinaryLabels),
    Multiclass(MulticlassLabels),
}

/// Parameters of the planted-partition synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub node_count: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub class_proportions: Vec<f64>,
    /// Objects owned by each class; the object space has `classes * objects_per_class` columns.
    pub objects_per_class: usize,
    /// Probability that a user rates an object of its own class.
    pub signal: f64,
    /// Probability that a user rates an object of another class.
    pub background: f64,
    /// Fraction of users with no behavior at all.
    pub silent_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            node_count: 400,
            p_intra: 0.05,
            p_inter: 0.005,
            class_proportions: vec![0.5, 0.5],
            objects_per_class: 10,
            signal: 0.3,
            background: 0.1,
            silent_fraction: 0.1,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_intra", self.p_intra),
            ("p_inter", self.p_inter),
            ("signal", self.signal),
            ("background", self.background),
            ("silent_fraction", self.silent_fraction),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} = {p} is not a probability")));
            }
        }
        if self.p_intra < self.p_inter {
            return Err(Error::invalid("p_intra must be at least p_inter (homophily)"));
        }
        if self.node_count == 0 {
            return Err(Error::invalid("node_count must be positive"));
        }
        if self.objects_per_class == 0 {
            return Err(Error::invalid("objects_per_class must be positive"));
        }
        if self.class_proportions.len() < 2 {
            return Err(Error::invalid("need at least 2 classes"));
        }
        if self.class_proportions.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("class proportions must lie in [0, 1]"));
        }
        let total: f64 = self.class_proportions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("class proportions sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.class_proportions.len()
    }

    /// Integer class sizes: floors of `n * p`, remainder handed out in class order.
    fn class_sizes(&self) -> Vec<usize> {
        let n = self.node_count;
        let mut sizes: Vec<usize> =
            self.class_proportions.iter().map(|p| libm::floor(p * n as f64) as usize).collect();
        let mut rest = n - sizes.iter().sum::<usize>();
        let k = sizes.len();
        let mut i = 0;
        while rest > 0 {
            sizes[i % k] += 1;
            rest -= 1;
            i += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub graph: SocialGraph,
    pub behaviors: BehaviorMatrix,
    pub labels: MulticlassLabels,
}

/// Planted-partition graph plus class-signal behavior blocks.
///
/// All branching is on integers drawn from ChaCha8 (Bernoulli draws compare
/// against a precomputed integer threshold), so a seed reproduces the world
/// bit for bit on any platform.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<SyntheticWorld> {
    cfg.validate()?;
    let n = cfg.node_count;
    let k = cfg.classes();
    let mut rng = rng::seeded(cfg.seed);

    let mut class_of: Vec<usize> =
        cfg.class_sizes().iter().enumerate().flat_map(|(c, &s)| core::iter::repeat_n(c, s)).collect();
    class_of.shuffle(&mut rng);

    let bern = |p: f64| Bernoulli::new(p).expect("validated probability");
    let intra = bern(cfg.p_intra);
    let inter = bern(cfg.p_inter);
    let mut pairs = BTreeSet::new();
    for u in 0..n {
        for v in u + 1..n {
            let d = if class_of[u] == class_of[v] { &intra } else { &inter };
            if d.sample(&mut rng) {
                pairs.insert((u, v));
            }
        }
    }
    let graph = SocialGraph::from_sorted_pairs(n, &pairs);

    let own = bern(cfg.signal);
    let other = bern(cfg.background);
    let silent = bern(cfg.silent_fraction);
    let objects = k * cfg.objects_per_class;
    let mut triplets = Vec::new();
    for (u, &c) in class_of.iter().enumerate() {
        if silent.sample(&mut rng) {
            continue;
        }
        for j in 0..objects {
            let d = if j / cfg.objects_per_class == c { &own } else { &other };
            if d.sample(&mut rng) {
                // ratings 1..=5 normalized to (0, 1]
                let level: u32 = rng.random_range(1..=5);
                triplets.push((u, j, f64::from(level) / 5.0));
            }
        }
    }
    let behaviors = BehaviorMatrix::from_triplets(n, objects, triplets)?;
    let labels = MulticlassLabels::new(k, class_of.into_iter().enumerate())?;
    Ok(SyntheticWorld { graph, behaviors, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_edges_reads_back() {
        let g = SocialGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.degrees().collect::<Vec<_>>(), vec![1, 2, 1]);
        assert_eq!(g.max_degree(), 2);
    }

    #[test]
    fn rejects_bad_edges() {
        assert_eq!(SocialGraph::from_edges(4, [(3, 3)]), Err(Error::SelfLoop { node: 3 }));
        assert!(matches!(
            SocialGraph::from_edges(4, [(0, 1), (1, 0)]),
            Err(Error::DuplicateEdge { .. })
        ));
        assert!(matches!(SocialGraph::from_edges(2, [(0, 2)]), Err(Error::NodeOutOfRange { .. })));
    }

    #[test]
    fn isolated_nodes() {
        let g = SocialGraph::empty(5);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.max_degree(), 0);
        assert_eq!(g.avg_degree(), 0.0);
    }

    #[test]
    fn adjacency_is_symmetric_and_degrees_match() {
        let g = random_graph(30, 80, 3).unwrap();
        for u in 0..g.node_count() {
            assert_eq!(g.neighbors(u).len(), g.degree(u));
            for &v in g.neighbors(u) {
                assert!(g.has_edge(v, u));
                assert_ne!(u, v);
            }
        }
        assert_eq!(g.edges().count(), 80);
    }

    #[test]
    fn behavior_rows_match_triplets() {
        let b = BehaviorMatrix::from_triplets(3, 8, [(2, 7, 0.4), (0, 1, 1.0), (2, 0, 0.2)]).unwrap();
        assert_eq!(b.triplets().collect::<Vec<_>>(), vec![(0, 1, 1.0), (2, 0, 0.2), (2, 7, 0.4)]);
        for u in 0..3 {
            let dense = b.dense_row(u);
            for (j, v) in dense.iter().enumerate() {
                let stored = b.row(u).find(|(o, _)| *o == j).map(|(_, v)| v).unwrap_or(0.0);
                assert_eq!(*v, stored);
            }
        }
        assert!(!b.has_behaviors(1));
    }

    #[test]
    fn behavior_validation() {
        assert!(matches!(
            BehaviorMatrix::from_triplets(3, 8, [(2, 7, 1.3)]),
            Err(Error::ValueOutOfRange { .. })
        ));
        assert!(matches!(
            BehaviorMatrix::from_triplets(3, 8, [(2, 7, 0.3), (2, 7, 0.5)]),
            Err(Error::DuplicateEntry { .. })
        ));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = SynthConfig { seed: 7, ..Default::default() };
        assert_eq!(gen_synthetic(&cfg).unwrap(), gen_synthetic(&cfg).unwrap());
    }

    #[test]
    fn zero_inter_probability_means_no_cross_edges() {
        let cfg = SynthConfig { p_intra: 0.1, p_inter: 0.0, node_count: 120, ..Default::default() };
        let w = gen_synthetic(&cfg).unwrap();
        assert!(w.graph.edge_count() > 0);
        for (u, v) in w.graph.edges() {
            assert_eq!(w.labels.get(u), w.labels.get(v));
        }
    }

    #[test]
    fn synthetic_homophily_and_edge_rate() {
        let cfg = SynthConfig { node_count: 400, p_intra: 0.05, p_inter: 0.005, ..Default::default() };
        let w = gen_synthetic(&cfg).unwrap();
        let (mut within, mut pairs_within) = (0usize, 0usize);
        for (u, v) in w.graph.edges() {
            if w.labels.get(u) == w.labels.get(v) {
                within += 1;
            }
        }
        let counts = w.labels.class_counts();
        for c in counts {
            pairs_within += c * (c - 1) / 2;
        }
        let homophily = within as f64 / w.graph.edge_count() as f64;
        assert!(homophily > 0.8, "homophily {homophily}");
        let rate = within as f64 / pairs_within as f64;
        assert!((rate - 0.05).abs() <= 0.2 * 0.05, "intra rate {rate}");
    }

    #[test]
    fn config_validation() {
        let bad = SynthConfig { p_intra: 0.01, p_inter: 0.02, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SynthConfig { class_proportions: vec![0.5, 0.6], ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn spanning_forest_is_acyclic() {
        let g = random_graph(40, 100, 9).unwrap();
        let f = g.spanning_forest();
        assert_eq!(f.node_count(), 40);
        for (u, v) in f.edges() {
            assert!(g.has_edge(u, v));
        }
        // connected components are preserved, so edges = n - components
        assert!(f.edge_count() < 40);
    }

    #[test]
    fn labels_out_of_range() {
        assert!(MulticlassLabels::new(3, [(0, 3)]).is_err());
        assert!(MulticlassLabels::new(1, []).is_err());
        let l = BinaryLabels::new([(4, Sign::Positive)]);
        assert!(l.check_users(4).is_err());
        assert!(l.check_users(5).is_ok());
    }
}
