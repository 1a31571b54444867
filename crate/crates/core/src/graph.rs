//! Immutable adjacency graph with external node labels, and node class labels.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Directed or undirected graph over dense node indices `0..N`.
///
/// Out-neighbor lists are sorted ascending and free of duplicates and
/// self-loops. An undirected graph stores every edge in both directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    directed: bool,
    out: Vec<Vec<usize>>,
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Graph {
    /// Builds a graph whose node labels are the decimal indices `"0".."N-1"`.
    pub fn from_index_edges(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        directed: bool,
    ) -> Result<Graph> {
        let mut b = GraphBuilder::new(directed);
        for v in 0..node_count {
            b.add_node(&v.to_string());
        }
        for (u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(Error::NodeOutOfRange {
                    index: u.max(v),
                    node_count,
                });
            }
            b.add_edge_indices(u, v);
        }
        b.build()
    }

    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn out_neighbors(&self, v: usize) -> Result<&[usize]> {
        self.out
            .get(v)
            .map(Vec::as_slice)
            .ok_or(Error::NodeOutOfRange {
                index: v,
                node_count: self.node_count(),
            })
    }

    /// Unchecked variant for hot loops; panics when `v` is out of range.
    #[inline]
    pub(crate) fn neighbors(&self, v: usize) -> &[usize] {
        &self.out[v]
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.out.get(v).map_or(0, Vec::len)
    }

    /// Number of stored arcs (an undirected edge counts twice).
    pub fn arc_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    /// Number of distinct edges: arcs for a directed graph, unordered pairs
    /// for an undirected one.
    pub fn edge_count(&self) -> usize {
        if self.directed {
            self.arc_count()
        } else {
            self.arc_count() / 2
        }
    }

    /// All arcs `(u, v)` in ascending order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| vs.iter().map(move |&v| (u, v)))
    }

    pub fn has_arc(&self, u: usize, v: usize) -> bool {
        self.out
            .get(u)
            .is_some_and(|vs| vs.binary_search(&v).is_ok())
    }

    pub fn label(&self, v: usize) -> Option<&str> {
        self.labels.get(v).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }
}

/// Accumulates labeled edges; indices are assigned in first-seen order.
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    directed: bool,
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
    edges: Vec<(usize, usize)>,
}

impl GraphBuilder {
    pub fn new(directed: bool) -> Self {
        GraphBuilder {
            directed,
            ..Default::default()
        }
    }

    pub fn add_node(&mut self, label: &str) -> usize {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        let i = self.labels.len();
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), i);
        i
    }

    pub fn add_edge(&mut self, src: &str, dst: &str) {
        let u = self.add_node(src);
        let v = self.add_node(dst);
        self.add_edge_indices(u, v);
    }

    fn add_edge_indices(&mut self, u: usize, v: usize) {
        self.edges.push((u, v));
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    /// Drops self-loops, collapses duplicates, and mirrors edges of an
    /// undirected graph.
    pub fn build(self) -> Result<Graph> {
        let n = self.labels.len();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut out = alloc::vec![Vec::new(); n];
        for (u, v) in self.edges {
            if u == v {
                continue;
            }
            out[u].push(v);
            if !self.directed {
                out[v].push(u);
            }
        }
        for vs in &mut out {
            vs.sort_unstable();
            vs.dedup();
        }
        Ok(Graph {
            directed: self.directed,
            out,
            labels: self.labels,
            index: self.index,
        })
    }
}

/// Class labels for a subset of the graph's nodes.
///
/// Entries keep the order in which they were added; class ids are assigned
/// to class names in first-seen order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    entries: Vec<(usize, usize)>,
    by_node: Vec<Option<usize>>,
    class_names: Vec<String>,
}

impl LabelTable {
    /// Builds the table from `(node label, class name)` pairs.
    ///
    /// A node repeated with the same class is accepted once; a node repeated
    /// with a different class, or absent from the graph, is an error.
    pub fn from_pairs<'a>(
        graph: &Graph,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<LabelTable> {
        LabelTable::from_named(graph.node_count(), |s| graph.index_of(s), pairs)
    }

    /// Like [`LabelTable::from_pairs`], resolving node labels through
    /// `lookup` instead of a graph's id map.
    pub fn from_named<'a>(
        node_count: usize,
        lookup: impl Fn(&str) -> Option<usize>,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<LabelTable> {
        let mut class_ids: BTreeMap<&str, usize> = BTreeMap::new();
        let mut class_names: Vec<String> = Vec::new();
        let mut by_node: Vec<Option<usize>> = alloc::vec![None; node_count];
        let mut entries = Vec::new();
        for (node, class) in pairs {
            let v = lookup(node)
                .filter(|&v| v < node_count)
                .ok_or_else(|| Error::UnknownNode(node.to_string()))?;
            let next = class_ids.len();
            let c = *class_ids.entry(class).or_insert_with(|| {
                class_names.push(class.to_string());
                next
            });
            match by_node[v] {
                Some(prev) if prev == c => {}
                Some(prev) => {
                    return Err(Error::ConflictingLabel {
                        node: node.to_string(),
                        first: class_names[prev].clone(),
                        second: class.to_string(),
                    })
                }
                None => {
                    by_node[v] = Some(c);
                    entries.push((v, c));
                }
            }
        }
        Ok(LabelTable {
            entries,
            by_node,
            class_names,
        })
    }

    /// Builds a table directly from dense `(node, class id)` pairs. Class
    /// ids must already be contiguous from zero.
    pub fn from_indices(
        node_count: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<LabelTable> {
        let mut by_node: Vec<Option<usize>> = alloc::vec![None; node_count];
        let mut entries = Vec::new();
        let mut max_class = None::<usize>;
        for (v, c) in pairs {
            if v >= node_count {
                return Err(Error::NodeOutOfRange {
                    index: v,
                    node_count,
                });
            }
            match by_node[v] {
                Some(prev) if prev == c => continue,
                Some(prev) => {
                    return Err(Error::ConflictingLabel {
                        node: v.to_string(),
                        first: prev.to_string(),
                        second: c.to_string(),
                    })
                }
                None => {}
            }
            by_node[v] = Some(c);
            entries.push((v, c));
            max_class = Some(max_class.map_or(c, |m| m.max(c)));
        }
        let class_count = max_class.map_or(0, |m| m + 1);
        let mut seen = alloc::vec![false; class_count];
        for &(_, c) in &entries {
            seen[c] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParameter(alloc::format!(
                "class ids are not contiguous: class {missing} has no members"
            )));
        }
        Ok(LabelTable {
            entries,
            by_node,
            class_names: (0..class_count).map(|c| c.to_string()).collect(),
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_of(&self, v: usize) -> Option<usize> {
        self.by_node.get(v).copied().flatten()
    }

    /// `(node, class)` pairs in insertion order.
    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.by_node.len()
    }
}
