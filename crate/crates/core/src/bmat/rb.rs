//! Arena-backed red-black tree with subtree weight sums.

use super::tree::{Backend, Floor, Locate, NodeEntry, OrderedTree};

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    key: u64,
    entry: NodeEntry,
    left: u32,
    right: u32,
    parent: u32,
    red: bool,
    /// Weight sum of this node's subtree.
    sum: i64,
}

#[derive(Debug, Clone)]
pub(crate) struct RbTree {
    nodes: Vec<Node>,
    root: u32,
}

impl RbTree {
    #[cfg(test)]
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            root: NIL,
        }
    }

    /// Balanced build: every level black except an incomplete bottom level,
    /// which is red.
    pub fn from_sorted(sorted: Vec<(u64, NodeEntry)>) -> Self {
        let n = sorted.len();
        let mut tree = Self {
            nodes: Vec::with_capacity(n),
            root: NIL,
        };
        if n == 0 {
            return tree;
        }
        let deepest = (usize::BITS - n.leading_zeros()) as usize - 1;
        let perfect = (n + 1).is_power_of_two();
        tree.nodes.extend(sorted.into_iter().map(|(key, entry)| Node {
            key,
            entry,
            left: NIL,
            right: NIL,
            parent: NIL,
            red: false,
            sum: entry.weight(),
        }));
        // Nodes are stored in key order; link them as an implicit balanced tree.
        tree.root = tree.link(0, n, 0, NIL, deepest, perfect);
        tree
    }

    fn link(&mut self, lo: usize, hi: usize, depth: usize, parent: u32, deepest: usize, perfect: bool) -> u32 {
        if lo >= hi {
            return NIL;
        }
        let mid = lo + (hi - lo) / 2;
        let left = self.link(lo, mid, depth + 1, mid as u32, deepest, perfect);
        let right = self.link(mid + 1, hi, depth + 1, mid as u32, deepest, perfect);
        let sum = self.sum(left) + self.sum(right) + self.nodes[mid].entry.weight();
        let node = &mut self.nodes[mid];
        node.left = left;
        node.right = right;
        node.parent = parent;
        node.red = !perfect && depth == deepest;
        node.sum = sum;
        mid as u32
    }

    fn sum(&self, x: u32) -> i64 {
        if x == NIL {
            0
        } else {
            self.nodes[x as usize].sum
        }
    }

    fn is_red(&self, x: u32) -> bool {
        x != NIL && self.nodes[x as usize].red
    }

    fn n(&self, x: u32) -> &Node {
        &self.nodes[x as usize]
    }

    fn m(&mut self, x: u32) -> &mut Node {
        &mut self.nodes[x as usize]
    }

    fn refresh_sum(&mut self, x: u32) {
        let (l, r) = (self.n(x).left, self.n(x).right);
        let s = self.sum(l) + self.sum(r) + self.n(x).entry.weight();
        self.m(x).sum = s;
    }

    fn add_to_ancestors(&mut self, mut x: u32, delta: i64) {
        while x != NIL {
            self.m(x).sum += delta;
            x = self.n(x).parent;
        }
    }

    fn rotate_left(&mut self, x: u32) {
        let y = self.n(x).right;
        let y_left = self.n(y).left;
        self.m(x).right = y_left;
        if y_left != NIL {
            self.m(y_left).parent = x;
        }
        let xp = self.n(x).parent;
        self.m(y).parent = xp;
        if xp == NIL {
            self.root = y;
        } else if self.n(xp).left == x {
            self.m(xp).left = y;
        } else {
            self.m(xp).right = y;
        }
        self.m(y).left = x;
        self.m(x).parent = y;
        self.refresh_sum(x);
        self.refresh_sum(y);
    }

    fn rotate_right(&mut self, x: u32) {
        let y = self.n(x).left;
        let y_right = self.n(y).right;
        self.m(x).left = y_right;
        if y_right != NIL {
            self.m(y_right).parent = x;
        }
        let xp = self.n(x).parent;
        self.m(y).parent = xp;
        if xp == NIL {
            self.root = y;
        } else if self.n(xp).right == x {
            self.m(xp).right = y;
        } else {
            self.m(xp).left = y;
        }
        self.m(y).right = x;
        self.m(x).parent = y;
        self.refresh_sum(x);
        self.refresh_sum(y);
    }

    fn insert_fixup(&mut self, mut z: u32) {
        while self.is_red(self.n(z).parent) {
            let p = self.n(z).parent;
            let g = self.n(p).parent;
            if p == self.n(g).left {
                let uncle = self.n(g).right;
                if self.is_red(uncle) {
                    self.m(p).red = false;
                    self.m(uncle).red = false;
                    self.m(g).red = true;
                    z = g;
                } else {
                    if z == self.n(p).right {
                        z = p;
                        self.rotate_left(z);
                    }
                    let p = self.n(z).parent;
                    let g = self.n(p).parent;
                    self.m(p).red = false;
                    self.m(g).red = true;
                    self.rotate_right(g);
                }
            } else {
                let uncle = self.n(g).left;
                if self.is_red(uncle) {
                    self.m(p).red = false;
                    self.m(uncle).red = false;
                    self.m(g).red = true;
                    z = g;
                } else {
                    if z == self.n(p).left {
                        z = p;
                        self.rotate_right(z);
                    }
                    let p = self.n(z).parent;
                    let g = self.n(p).parent;
                    self.m(p).red = false;
                    self.m(g).red = true;
                    self.rotate_left(g);
                }
            }
        }
        let root = self.root;
        self.m(root).red = false;
    }

    fn height_of(&self, x: u32) -> usize {
        // Iterative to survive degenerate inputs in tests.
        let mut best = 0;
        let mut stack = vec![(x, 1usize)];
        while let Some((n, d)) = stack.pop() {
            if n == NIL {
                continue;
            }
            best = best.max(d);
            stack.push((self.n(n).left, d + 1));
            stack.push((self.n(n).right, d + 1));
        }
        best
    }

    /// Returns (black height, weight sum) of the subtree, or an error.
    fn check_subtree(&self, x: u32, lo: Option<u64>, hi: Option<u64>) -> Result<(usize, i64), String> {
        if x == NIL {
            return Ok((1, 0));
        }
        let node = self.n(x);
        if lo.is_some_and(|l| node.key <= l) || hi.is_some_and(|h| node.key >= h) {
            return Err(format!("key {} violates search order", node.key));
        }
        for c in [node.left, node.right] {
            if c != NIL {
                if self.n(c).parent != x {
                    return Err(format!("broken parent link below {}", node.key));
                }
                if node.red && self.n(c).red {
                    return Err(format!("red node {} has a red child", node.key));
                }
            }
        }
        let (bl, sl) = self.check_subtree(node.left, lo, Some(node.key))?;
        let (br, sr) = self.check_subtree(node.right, Some(node.key), hi)?;
        if bl != br {
            return Err(format!("black height mismatch at {}: {bl} vs {br}", node.key));
        }
        let sum = sl + sr + node.entry.weight();
        if sum != node.sum {
            return Err(format!("weight sum at {} is {} but subtree holds {sum}", node.key, node.sum));
        }
        Ok((bl + usize::from(!node.red), sum))
    }
}

impl OrderedTree for RbTree {
    fn backend(&self) -> Backend {
        Backend::RedBlack
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }

    fn height(&self) -> usize {
        self.height_of(self.root)
    }

    fn get(&self, key: u64) -> Option<NodeEntry> {
        let mut x = self.root;
        while x != NIL {
            let n = self.n(x);
            match key.cmp(&n.key) {
                std::cmp::Ordering::Less => x = n.left,
                std::cmp::Ordering::Greater => x = n.right,
                std::cmp::Ordering::Equal => return Some(n.entry),
            }
        }
        None
    }

    fn insert(&mut self, key: u64, entry: NodeEntry) -> Option<NodeEntry> {
        let mut parent = NIL;
        let mut x = self.root;
        let mut go_left = false;
        while x != NIL {
            parent = x;
            let n = self.n(x);
            match key.cmp(&n.key) {
                std::cmp::Ordering::Less => {
                    go_left = true;
                    x = n.left;
                }
                std::cmp::Ordering::Greater => {
                    go_left = false;
                    x = n.right;
                }
                std::cmp::Ordering::Equal => {
                    let old = n.entry;
                    self.m(x).entry = entry;
                    self.add_to_ancestors(x, entry.weight() - old.weight());
                    return Some(old);
                }
            }
        }
        let z = self.nodes.len() as u32;
        self.nodes.push(Node {
            key,
            entry,
            left: NIL,
            right: NIL,
            parent,
            red: true,
            sum: entry.weight(),
        });
        if parent == NIL {
            self.root = z;
        } else if go_left {
            self.m(parent).left = z;
        } else {
            self.m(parent).right = z;
        }
        self.add_to_ancestors(parent, entry.weight());
        self.insert_fixup(z);
        None
    }

    fn locate(&self, key: u64) -> Locate {
        let mut x = self.root;
        let mut acc = 0i64;
        let mut floor = None;
        let mut visited = 0;
        while x != NIL {
            visited += 1;
            let n = self.n(x);
            if key < n.key {
                x = n.left;
                continue;
            }
            // Right turn (or hit): everything in the left subtree is below `key`.
            let below = acc + self.sum(n.left);
            floor = Some(Floor {
                key: n.key,
                entry: n.entry,
                rank_below: below,
            });
            if key == n.key {
                return Locate {
                    rank_below: below,
                    floor,
                    nodes_visited: visited,
                };
            }
            acc = below + n.entry.weight();
            x = n.right;
        }
        Locate {
            rank_below: acc,
            floor,
            nodes_visited: visited,
        }
    }

    fn visit_from(&self, from: u64, f: &mut dyn FnMut(u64, &NodeEntry) -> bool) {
        let mut stack = Vec::new();
        let mut x = self.root;
        while x != NIL {
            if self.n(x).key >= from {
                stack.push(x);
                x = self.n(x).left;
            } else {
                x = self.n(x).right;
            }
        }
        while let Some(x) = stack.pop() {
            let n = self.n(x);
            if !f(n.key, &n.entry) {
                return;
            }
            let mut c = n.right;
            while c != NIL {
                stack.push(c);
                c = self.n(c).left;
            }
        }
    }

    fn memory_bytes(&self) -> usize {
        self.nodes.len() * std::mem::size_of::<Node>()
    }

    fn check_invariants(&self) -> Result<(), String> {
        if self.root == NIL {
            return if self.nodes.is_empty() {
                Ok(())
            } else {
                Err("nodes without a root".into())
            };
        }
        if self.n(self.root).red {
            return Err("red root".into());
        }
        if self.n(self.root).parent != NIL {
            return Err("root has a parent".into());
        }
        self.check_subtree(self.root, None, None)?;
        let mut count = 0;
        self.visit_from(0, &mut |_, _| {
            count += 1;
            true
        });
        if count != self.nodes.len() {
            return Err(format!("{} nodes reachable of {}", count, self.nodes.len()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::tree::SegmentId;
    use super::*;
    use proptest::prelude::*;

    fn e(buffered: bool) -> NodeEntry {
        NodeEntry {
            segment: SegmentId(0),
            buffered: buffered.then_some(1),
        }
    }

    #[test]
    fn ascending_inserts_stay_balanced() {
        let mut t = RbTree::new();
        for k in 0..10_000u64 {
            t.insert(k, e(k % 3 == 0));
            if k % 1000 == 999 {
                t.check_invariants().unwrap();
            }
        }
        let n = t.len() as f64;
        assert!(t.height() as f64 <= 2.0 * (n + 1.0).log2());
        assert_eq!(t.rank(3001), 1001);
    }

    #[test]
    fn built_trees_are_valid_for_all_small_sizes() {
        for n in 0..200u64 {
            let t = RbTree::from_sorted((0..n).map(|k| (k * 2, e(k % 2 == 1))).collect());
            t.check_invariants().unwrap();
            assert_eq!(t.height(), (u64::BITS - n.leading_zeros()) as usize);
        }
    }

    proptest! {
        #[test]
        fn rank_and_floor_match_brute_force(
            ops in proptest::collection::vec((0u64..500, any::<bool>()), 1..300),
            probes in proptest::collection::vec(0u64..520, 40),
        ) {
            let mut t = RbTree::new();
            let mut oracle = std::collections::BTreeMap::new();
            for (k, b) in ops {
                t.insert(k, e(b));
                oracle.insert(k, b);
            }
            t.check_invariants().unwrap();
            for p in probes {
                let want: i64 = oracle.range(..p).filter(|(_, &b)| b).count() as i64;
                let loc = t.locate(p);
                prop_assert_eq!(loc.rank_below, want);
                let floor = oracle.range(..=p).next_back().map(|(&k, _)| k);
                prop_assert_eq!(loc.floor.map(|f| f.key), floor);
                if let Some(f) = loc.floor {
                    let below: i64 = oracle.range(..f.key).filter(|(_, &b)| b).count() as i64;
                    prop_assert_eq!(f.rank_below, below);
                }
                let mut seen = Vec::new();
                t.visit_from(p, &mut |k, _| { seen.push(k); seen.len() < 5 });
                let want: Vec<u64> = oracle.range(p..).take(5).map(|(&k, _)| k).collect();
                prop_assert_eq!(seen, want);
            }
        }
    }
}
