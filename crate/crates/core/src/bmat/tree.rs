use std::fmt;

/// Handle of a segment in the BMAT's segment arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentId(pub(crate) u32);

impl SegmentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Payload of a tree node: the segment starting at the node's key and, when
/// the key itself arrived as an update that had no placeholder, its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeEntry {
    pub segment: SegmentId,
    pub buffered: Option<u64>,
}

impl NodeEntry {
    /// Contribution of this node to the bias of keys above it.
    pub fn weight(&self) -> i64 {
        i64::from(self.buffered.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Backend {
    RedBlack,
    BPlus,
}

impl Backend {
    pub fn other(self) -> Self {
        match self {
            Backend::RedBlack => Backend::BPlus,
            Backend::BPlus => Backend::RedBlack,
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::RedBlack => "rbmat",
            Backend::BPlus => "bplusmat",
        })
    }
}

/// Greatest node with key `<=` the probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Floor {
    pub key: u64,
    pub entry: NodeEntry,
    /// Signed count of buffered updates strictly below `key`.
    pub rank_below: i64,
}

/// Result of a single root-to-leaf descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Locate {
    /// Signed count of buffered updates strictly below the probe.
    pub rank_below: i64,
    pub floor: Option<Floor>,
    pub nodes_visited: usize,
}

/// Ordered map from boundary key to [`NodeEntry`], augmented with subtree
/// weight sums so rank queries cost one descent.
pub(crate) trait OrderedTree: fmt::Debug + Send + Sync {
    fn backend(&self) -> Backend;
    fn len(&self) -> usize;
    fn height(&self) -> usize;
    fn get(&self, key: u64) -> Option<NodeEntry>;
    /// Inserts or replaces; returns the previous entry.
    fn insert(&mut self, key: u64, entry: NodeEntry) -> Option<NodeEntry>;
    fn locate(&self, key: u64) -> Locate;
    /// In-order visit of nodes with key `>= from`; stops when `f` returns false.
    fn visit_from(&self, from: u64, f: &mut dyn FnMut(u64, &NodeEntry) -> bool);
    fn memory_bytes(&self) -> usize;
    fn check_invariants(&self) -> Result<(), String>;

    fn rank(&self, key: u64) -> i64 {
        self.locate(key).rank_below
    }

    fn entries(&self) -> Vec<(u64, NodeEntry)> {
        let mut out = Vec::with_capacity(self.len());
        self.visit_from(0, &mut |k, e| {
            out.push((k, *e));
            true
        });
        out
    }
}

pub(crate) fn build_tree(
    backend: Backend,
    branching: usize,
    sorted: Vec<(u64, NodeEntry)>,
) -> Box<dyn OrderedTree> {
    match backend {
        Backend::RedBlack => Box::new(super::rb::RbTree::from_sorted(sorted)),
        Backend::BPlus => Box::new(super::bplus::BPlusTree::from_sorted(branching, sorted)),
    }
}

/// Height of a tree freshly built from `n` sorted entries.
pub(crate) fn built_height(backend: Backend, branching: usize, n: usize) -> usize {
    match backend {
        Backend::RedBlack => (usize::BITS - n.leading_zeros()) as usize,
        Backend::BPlus => super::bplus::built_height(branching, n),
    }
}
