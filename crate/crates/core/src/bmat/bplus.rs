//! Arena-backed B+ tree with per-child weight sums.
//!
//! Separators are the minimum key of their right child, so a floor lookup is
//! always answered inside the leaf reached by the descent.

use super::tree::{Backend, Floor, Locate, NodeEntry, OrderedTree};

const NIL: u32 = u32::MAX;
const NODE_HEADER_BYTES: usize = 16;

#[derive(Debug, Clone)]
enum BNode {
    Leaf {
        keys: Vec<u64>,
        entries: Vec<NodeEntry>,
    },
    Internal {
        seps: Vec<u64>,
        children: Vec<u32>,
        weights: Vec<i64>,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct BPlusTree {
    nodes: Vec<BNode>,
    root: u32,
    fanout: usize,
    len: usize,
    height: usize,
}

/// Height after bulk building `n` entries with fan-out `b`.
pub(crate) fn built_height(b: usize, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let mut m = n.div_ceil(b - 1);
    let mut h = 1;
    while m > 1 {
        m = m.div_ceil(b);
        h += 1;
    }
    h
}

/// Splits `n` items into `parts` runs whose lengths differ by at most one.
fn even_runs(n: usize, parts: usize) -> impl Iterator<Item = usize> {
    let (base, extra) = (n / parts, n % parts);
    (0..parts).map(move |i| base + usize::from(i < extra))
}

impl BPlusTree {
    pub fn new(fanout: usize) -> Self {
        assert!(fanout >= 4, "B+ fan-out must be at least 4");
        Self {
            nodes: Vec::new(),
            root: NIL,
            fanout,
            len: 0,
            height: 0,
        }
    }

    pub fn from_sorted(fanout: usize, sorted: Vec<(u64, NodeEntry)>) -> Self {
        let mut tree = Self::new(fanout);
        let n = sorted.len();
        if n == 0 {
            return tree;
        }
        tree.len = n;
        let mut level: Vec<(u32, u64, i64)> = Vec::new();
        let mut it = sorted.into_iter();
        for run in even_runs(n, n.div_ceil(fanout - 1)) {
            let (keys, entries): (Vec<u64>, Vec<NodeEntry>) = it.by_ref().take(run).unzip();
            let weight = entries.iter().map(NodeEntry::weight).sum();
            level.push((tree.nodes.len() as u32, keys[0], weight));
            tree.nodes.push(BNode::Leaf { keys, entries });
        }
        tree.height = 1;
        while level.len() > 1 {
            let m = level.len();
            let mut next = Vec::with_capacity(m.div_ceil(fanout));
            let mut it = level.into_iter();
            for run in even_runs(m, m.div_ceil(fanout)) {
                let group: Vec<(u32, u64, i64)> = it.by_ref().take(run).collect();
                let min_key = group[0].1;
                let seps = group[1..].iter().map(|g| g.1).collect();
                let children = group.iter().map(|g| g.0).collect();
                let weights: Vec<i64> = group.iter().map(|g| g.2).collect();
                let weight = weights.iter().sum();
                next.push((tree.nodes.len() as u32, min_key, weight));
                tree.nodes.push(BNode::Internal {
                    seps,
                    children,
                    weights,
                });
            }
            level = next;
            tree.height += 1;
        }
        tree.root = level[0].0;
        tree
    }

    fn node_weight(&self, x: u32) -> i64 {
        match &self.nodes[x as usize] {
            BNode::Leaf { entries, .. } => entries.iter().map(NodeEntry::weight).sum(),
            BNode::Internal { weights, .. } => weights.iter().sum(),
        }
    }

    fn push(&mut self, node: BNode) -> u32 {
        self.nodes.push(node);
        (self.nodes.len() - 1) as u32
    }

    fn visit(&self, x: u32, from: u64, f: &mut dyn FnMut(u64, &NodeEntry) -> bool) -> bool {
        match &self.nodes[x as usize] {
            BNode::Leaf { keys, entries } => {
                let start = keys.partition_point(|&k| k < from);
                keys[start..]
                    .iter()
                    .zip(&entries[start..])
                    .all(|(&k, e)| f(k, e))
            }
            BNode::Internal { seps, children, .. } => {
                let start = seps.partition_point(|&s| s <= from);
                children[start..].iter().all(|&c| self.visit(c, from, f))
            }
        }
    }

    /// Returns (weight, min key) of the subtree.
    fn check(
        &self,
        x: u32,
        depth: usize,
        bounds: (Option<u64>, Option<u64>),
        is_root: bool,
    ) -> Result<(i64, u64), String> {
        let min_fill = self.fanout.div_ceil(2) - 1;
        let in_bounds =
            |k: u64| bounds.0.is_none_or(|lo| k >= lo) && bounds.1.is_none_or(|hi| k < hi);
        match &self.nodes[x as usize] {
            BNode::Leaf { keys, entries } => {
                if depth != self.height {
                    return Err(format!("leaf at depth {depth}, height {}", self.height));
                }
                if keys.len() != entries.len() || keys.is_empty() {
                    return Err("malformed leaf".into());
                }
                if keys.len() > self.fanout - 1 || (!is_root && keys.len() < min_fill) {
                    return Err(format!("leaf occupancy {}", keys.len()));
                }
                if !keys.windows(2).all(|w| w[0] < w[1]) || !keys.iter().all(|&k| in_bounds(k)) {
                    return Err(format!("leaf keys out of order near {}", keys[0]));
                }
                Ok((entries.iter().map(NodeEntry::weight).sum(), keys[0]))
            }
            BNode::Internal {
                seps,
                children,
                weights,
            } => {
                if children.len() != seps.len() + 1 || weights.len() != children.len() {
                    return Err("malformed internal node".into());
                }
                if seps.len() > self.fanout - 1
                    || (!is_root && seps.len() < min_fill)
                    || children.len() < 2
                {
                    return Err(format!("internal occupancy {}", seps.len()));
                }
                let mut min_key = None;
                for (i, &c) in children.iter().enumerate() {
                    let lo = if i == 0 { bounds.0 } else { Some(seps[i - 1]) };
                    let hi = seps.get(i).copied().or(bounds.1);
                    let (w, m) = self.check(c, depth + 1, (lo, hi), false)?;
                    if w != weights[i] {
                        return Err(format!("child weight {} recorded as {}", w, weights[i]));
                    }
                    if i > 0 && m != seps[i - 1] {
                        return Err(format!("separator {} but child min {m}", seps[i - 1]));
                    }
                    min_key.get_or_insert(m);
                }
                Ok((weights.iter().sum(), min_key.unwrap()))
            }
        }
    }

    fn split_leaf(&mut self, x: u32) -> (u64, u32, i64) {
        let BNode::Leaf { keys, entries } = &mut self.nodes[x as usize] else {
            unreachable!()
        };
        let half = keys.len() / 2;
        let rk = keys.split_off(half);
        let re = entries.split_off(half);
        let w = re.iter().map(NodeEntry::weight).sum();
        let sep = rk[0];
        let r = self.push(BNode::Leaf {
            keys: rk,
            entries: re,
        });
        (sep, r, w)
    }

    fn split_internal(&mut self, x: u32) -> (u64, u32, i64) {
        let BNode::Internal {
            seps,
            children,
            weights,
        } = &mut self.nodes[x as usize]
        else {
            unreachable!()
        };
        let mid = children.len().div_ceil(2);
        let rc = children.split_off(mid);
        let rw = weights.split_off(mid);
        let rs = seps.split_off(mid);
        let up = seps.pop().unwrap();
        let w = rw.iter().sum();
        let r = self.push(BNode::Internal {
            seps: rs,
            children: rc,
            weights: rw,
        });
        (up, r, w)
    }
}

impl OrderedTree for BPlusTree {
    fn backend(&self) -> Backend {
        Backend::BPlus
    }

    fn len(&self) -> usize {
        self.len
    }

    fn height(&self) -> usize {
        self.height
    }

    fn get(&self, key: u64) -> Option<NodeEntry> {
        let loc = self.locate(key);
        loc.floor.filter(|f| f.key == key).map(|f| f.entry)
    }

    fn insert(&mut self, key: u64, entry: NodeEntry) -> Option<NodeEntry> {
        if self.root == NIL {
            self.root = self.push(BNode::Leaf {
                keys: vec![key],
                entries: vec![entry],
            });
            self.len = 1;
            self.height = 1;
            return None;
        }
        let mut path: Vec<(u32, usize)> = Vec::with_capacity(self.height);
        let mut x = self.root;
        while let BNode::Internal { seps, children, .. } = &self.nodes[x as usize] {
            let idx = seps.partition_point(|&s| s <= key);
            path.push((x, idx));
            x = children[idx];
        }
        let BNode::Leaf { keys, entries } = &mut self.nodes[x as usize] else {
            unreachable!()
        };
        let (old, delta, overflow) = match keys.binary_search(&key) {
            Ok(i) => {
                let old = std::mem::replace(&mut entries[i], entry);
                (Some(old), entry.weight() - old.weight(), false)
            }
            Err(i) => {
                keys.insert(i, key);
                entries.insert(i, entry);
                (None, entry.weight(), keys.len() >= self.fanout)
            }
        };
        if delta != 0 {
            for &(p, idx) in &path {
                if let BNode::Internal { weights, .. } = &mut self.nodes[p as usize] {
                    weights[idx] += delta;
                }
            }
        }
        if old.is_some() {
            return old;
        }
        self.len += 1;
        if !overflow {
            return None;
        }

        let mut carry = Some(self.split_leaf(x));
        while let Some((sep, right, rw)) = carry.take() {
            let Some((p, idx)) = path.pop() else {
                // Root split.
                let old_root = self.root;
                let lw = self.node_weight(old_root);
                self.root = self.push(BNode::Internal {
                    seps: vec![sep],
                    children: vec![old_root, right],
                    weights: vec![lw, rw],
                });
                self.height += 1;
                break;
            };
            let BNode::Internal {
                seps,
                children,
                weights,
            } = &mut self.nodes[p as usize]
            else {
                unreachable!()
            };
            weights[idx] -= rw;
            seps.insert(idx, sep);
            children.insert(idx + 1, right);
            weights.insert(idx + 1, rw);
            if children.len() > self.fanout {
                carry = Some(self.split_internal(p));
            }
        }
        None
    }

    fn locate(&self, key: u64) -> Locate {
        let mut loc = Locate {
            rank_below: 0,
            floor: None,
            nodes_visited: 0,
        };
        if self.root == NIL {
            return loc;
        }
        let mut acc = 0i64;
        let mut x = self.root;
        loop {
            loc.nodes_visited += 1;
            match &self.nodes[x as usize] {
                BNode::Internal {
                    seps,
                    children,
                    weights,
                } => {
                    let idx = seps.partition_point(|&s| s <= key);
                    acc += weights[..idx].iter().sum::<i64>();
                    x = children[idx];
                }
                BNode::Leaf { keys, entries } => {
                    let upto = keys.partition_point(|&k| k <= key);
                    let below = keys.partition_point(|&k| k < key);
                    let w = |n: usize| entries[..n].iter().map(NodeEntry::weight).sum::<i64>();
                    loc.rank_below = acc + w(below);
                    loc.floor = (upto > 0).then(|| Floor {
                        key: keys[upto - 1],
                        entry: entries[upto - 1],
                        rank_below: acc + w(upto - 1),
                    });
                    return loc;
                }
            }
        }
    }

    fn visit_from(&self, from: u64, f: &mut dyn FnMut(u64, &NodeEntry) -> bool) {
        if self.root != NIL {
            self.visit(self.root, from, f);
        }
    }

    /// Nodes are sized for full occupancy, so free places count.
    fn memory_bytes(&self) -> usize {
        let b = self.fanout;
        let leaf = NODE_HEADER_BYTES + (b - 1) * (8 + std::mem::size_of::<NodeEntry>());
        let internal = NODE_HEADER_BYTES + (b - 1) * 8 + b * (4 + 8);
        self.nodes
            .iter()
            .map(|n| match n {
                BNode::Leaf { .. } => leaf,
                BNode::Internal { .. } => internal,
            })
            .sum()
    }

    fn check_invariants(&self) -> Result<(), String> {
        if self.root == NIL {
            return if self.len == 0 && self.height == 0 {
                Ok(())
            } else {
                Err("empty tree with nonzero size".into())
            };
        }
        self.check(self.root, 1, (None, None), true)?;
        let mut count = 0;
        self.visit_from(0, &mut |_, _| {
            count += 1;
            true
        });
        if count != self.len {
            return Err(format!("{count} entries reachable, len {}", self.len));
        }
        Ok(())
    }
}
