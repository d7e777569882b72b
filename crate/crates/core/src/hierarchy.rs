//! Immutable class hierarchy: a rooted tree whose leaves are the classes.
//!
//! Node ids are dense and assigned breadth-first, so the root is `0` and every
//! child id is larger than its parent's. Class ids follow depth-first leaf
//! order, which makes the class set of every node a contiguous id range.

use std::collections::{HashMap, VecDeque};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type ClassId = usize;

/// Nested node description; the JSON hierarchy file format.
///
/// A node without `children` is a leaf, and its `name` is the class name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub children: Option<Vec<TreeNode>>,
}

impl TreeNode {
    pub fn leaf(name: impl Into<String>) -> Self {
        TreeNode {
            name: name.into(),
            children: None,
        }
    }

    pub fn internal(name: impl Into<String>, children: Vec<TreeNode>) -> Self {
        TreeNode {
            name: name.into(),
            children: Some(children),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    name: String,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    classes: Range<ClassId>,
    depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    nodes: Vec<Node>,
    leaf_of_class: Vec<NodeId>,
    class_names: Vec<String>,
    class_index: HashMap<String, ClassId>,
}

// Depth-first intermediate form used while building.
struct Flat {
    name: String,
    children: Vec<usize>,
    classes: Range<ClassId>,
}

fn flatten(
    node: &TreeNode,
    path: &str,
    out: &mut Vec<Flat>,
    class_names: &mut Vec<String>,
    seen: &mut HashMap<String, String>,
) -> Result<usize> {
    let index = out.len();
    let lo = class_names.len();
    out.push(Flat {
        name: node.name.clone(),
        children: Vec::new(),
        classes: lo..lo,
    });
    match &node.children {
        None => {
            if let Some(first) = seen.insert(node.name.clone(), path.to_string()) {
                return Err(Error::hierarchy(
                    path,
                    format!(
                        "duplicate leaf name `{}` (first seen at `{first}`)",
                        node.name
                    ),
                ));
            }
            class_names.push(node.name.clone());
        }
        Some(children) if children.is_empty() => {
            return Err(Error::hierarchy(
                path,
                "internal node has an empty `children` list",
            ));
        }
        Some(children) => {
            if children.len() == 1 {
                log::warn!("hierarchy node `{path}` has a single child");
            }
            let mut ids = Vec::with_capacity(children.len());
            for child in children {
                let child_path = format!("{path}/{}", child.name);
                ids.push(flatten(child, &child_path, out, class_names, seen)?);
            }
            out[index].children = ids;
        }
    }
    out[index].classes = lo..class_names.len();
    Ok(index)
}

impl Hierarchy {
    pub fn from_tree(root: &TreeNode) -> Result<Self> {
        let mut flat = Vec::new();
        let mut class_names = Vec::new();
        let mut seen = HashMap::new();
        flatten(root, &root.name, &mut flat, &mut class_names, &mut seen)?;

        // Renumber breadth-first.
        let mut nodes: Vec<Node> = Vec::with_capacity(flat.len());
        let mut queue = VecDeque::new();
        queue.push_back((0usize, None::<NodeId>, 0usize));
        while let Some((fi, parent, depth)) = queue.pop_front() {
            let id = nodes.len();
            nodes.push(Node {
                name: flat[fi].name.clone(),
                parent,
                children: Vec::new(),
                classes: flat[fi].classes.clone(),
                depth,
            });
            if let Some(p) = parent {
                nodes[p].children.push(id);
            }
            for &child in &flat[fi].children {
                queue.push_back((child, Some(id), depth + 1));
            }
        }

        let mut leaf_of_class = vec![usize::MAX; class_names.len()];
        for (id, node) in nodes.iter().enumerate() {
            if node.children.is_empty() {
                leaf_of_class[node.classes.start] = id;
            }
        }
        let class_index = class_names
            .iter()
            .enumerate()
            .map(|(c, name)| (name.clone(), c))
            .collect();
        Ok(Hierarchy {
            nodes,
            leaf_of_class,
            class_names,
            class_index,
        })
    }

    pub fn from_json(document: &str) -> Result<Self> {
        let root: TreeNode = serde_json::from_str(document).map_err(Error::HierarchyJson)?;
        Self::from_tree(&root)
    }

    /// Rebuilds the nested description (children in original order).
    pub fn to_tree(&self) -> TreeNode {
        fn build(h: &Hierarchy, v: NodeId) -> TreeNode {
            let node = &h.nodes[v];
            if node.children.is_empty() {
                TreeNode::leaf(node.name.clone())
            } else {
                TreeNode::internal(
                    node.name.clone(),
                    node.children.iter().map(|&c| build(h, c)).collect(),
                )
            }
        }
        build(self, self.root())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_tree()).expect("tree serialization is infallible")
    }

    /// Balanced tree of the given arity over `k` leaves named `c0..c{k-1}`.
    ///
    /// Each internal node splits its class range into `arity` near-equal
    /// parts. With `k == 1` the root gets a single leaf child.
    pub fn balanced(k: usize, arity: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("balanced tree needs k >= 1".into()));
        }
        if arity < 2 {
            return Err(Error::InvalidParameter(
                "balanced tree needs arity >= 2".into(),
            ));
        }
        fn split(lo: usize, hi: usize, arity: usize) -> TreeNode {
            let len = hi - lo;
            if len == 1 {
                return TreeNode::leaf(format!("c{lo}"));
            }
            let parts = arity.min(len);
            let children = (0..parts)
                .map(|i| split(lo + len * i / parts, lo + len * (i + 1) / parts, arity))
                .collect();
            TreeNode::internal("", children)
        }
        let root = if k == 1 {
            TreeNode::internal("", vec![TreeNode::leaf("c0")])
        } else {
            split(0, k, arity)
        };
        let mut h = Self::from_tree(&root)?;
        for (id, node) in h.nodes.iter_mut().enumerate() {
            if !node.children.is_empty() {
                node.name = format!("n{id}");
            }
        }
        Ok(h)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    fn node(&self, v: NodeId) -> Result<&Node> {
        self.nodes.get(v).ok_or(Error::InvalidNode(v))
    }

    pub fn check_node(&self, v: NodeId) -> Result<()> {
        self.node(v).map(|_| ())
    }

    pub fn check_class(&self, c: ClassId) -> Result<()> {
        if c < self.num_classes() {
            Ok(())
        } else {
            Err(Error::InvalidClass(c))
        }
    }

    /// Panics on an invalid id, like slice indexing.
    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.nodes[v].parent
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.nodes[v].children
    }

    /// Class ids below `v`, as a contiguous range.
    pub fn classes(&self, v: NodeId) -> Range<ClassId> {
        self.nodes[v].classes.clone()
    }

    pub fn class_count(&self, v: NodeId) -> usize {
        self.nodes[v].classes.len()
    }

    pub fn is_leaf(&self, v: NodeId) -> bool {
        self.nodes[v].children.is_empty()
    }

    pub fn depth(&self, v: NodeId) -> usize {
        self.nodes[v].depth
    }

    pub fn node_name(&self, v: NodeId) -> &str {
        &self.nodes[v].name
    }

    /// First node carrying `name`, in id order.
    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn class_name(&self, c: ClassId) -> &str {
        &self.class_names[c]
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.class_index.get(name).copied()
    }

    pub fn leaf_of_class(&self, c: ClassId) -> NodeId {
        self.leaf_of_class[c]
    }

    /// True if the class sets of `a` and `b` do not overlap.
    pub fn disjoint(&self, a: NodeId, b: NodeId) -> bool {
        let (x, y) = (&self.nodes[a].classes, &self.nodes[b].classes);
        x.end <= y.start || y.end <= x.start
    }

    /// `v`, its parent, and so on up to the root.
    pub fn path_to_root(&self, v: NodeId) -> Result<Vec<NodeId>> {
        self.check_node(v)?;
        let mut path = Vec::with_capacity(self.nodes[v].depth + 1);
        let mut cur = Some(v);
        while let Some(u) = cur {
            path.push(u);
            cur = self.nodes[u].parent;
        }
        Ok(path)
    }

    /// Lowest node whose class set contains every class in `classes`.
    pub fn lowest_common_ancestor(&self, classes: &[ClassId]) -> Result<NodeId> {
        let lo = *classes.iter().min().ok_or(Error::Empty("class set"))?;
        let hi = *classes.iter().max().unwrap();
        self.check_class(hi)?;
        let mut v = self.leaf_of_class[lo];
        while self.nodes[v].classes.end <= hi {
            v = self.nodes[v].parent.expect("root covers every class");
        }
        Ok(v)
    }

    /// The unique smallest set of disjoint nodes whose classes union to
    /// exactly `classes`: every node contained in the set whose parent is not.
    ///
    /// Duplicates in the input are ignored. The empty set maps to the empty
    /// cover.
    pub fn minimal_cover(&self, classes: &[ClassId]) -> Result<NodeSet> {
        let k = self.num_classes();
        let mut member = vec![false; k];
        for &c in classes {
            self.check_class(c)?;
            member[c] = true;
        }
        let mut prefix = Vec::with_capacity(k + 1);
        prefix.push(0usize);
        for &m in &member {
            prefix.push(prefix.last().unwrap() + m as usize);
        }
        let contained = |v: NodeId| {
            let r = &self.nodes[v].classes;
            prefix[r.end] - prefix[r.start] == r.len()
        };
        let nodes = (0..self.num_nodes())
            .filter(|&v| contained(v) && self.nodes[v].parent.is_none_or(|p| !contained(p)))
            .collect();
        Ok(NodeSet(nodes))
    }

    /// Minimum number of disjoint nodes needed to represent `classes`.
    pub fn representation_complexity(&self, classes: &[ClassId]) -> Result<usize> {
        Ok(self.minimal_cover(classes)?.len())
    }
}

/// Pairwise-disjoint hierarchy nodes, kept sorted by id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct NodeSet(Vec<NodeId>);

impl NodeSet {
    pub fn new(h: &Hierarchy, mut nodes: Vec<NodeId>) -> Result<Self> {
        for &v in &nodes {
            h.check_node(v)?;
        }
        nodes.sort_unstable();
        let mut by_range = nodes.clone();
        by_range.sort_by_key(|&v| (h.classes(v).start, h.classes(v).end));
        for pair in by_range.windows(2) {
            if !h.disjoint(pair[0], pair[1]) {
                return Err(Error::InvalidParameter(format!(
                    "nodes {} and {} overlap",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(NodeSet(nodes))
    }

    pub fn empty() -> Self {
        NodeSet(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[NodeId] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().copied()
    }

    /// Union of the member class sets, sorted.
    pub fn classes(&self, h: &Hierarchy) -> Vec<ClassId> {
        let mut out: Vec<ClassId> = self.0.iter().flat_map(|&v| h.classes(v)).collect();
        out.sort_unstable();
        out
    }

    pub fn class_count(&self, h: &Hierarchy) -> usize {
        self.0.iter().map(|&v| h.class_count(v)).sum()
    }
}

/// Tracks the minimal cover size of a growing class set.
///
/// Adding a class walks its root path once; a node that becomes fully
/// contained replaces its (previously maximal) children in the cover.
#[derive(Debug, Clone)]
pub struct IncrementalCover<'a> {
    h: &'a Hierarchy,
    contained: Vec<usize>,
    complexity: usize,
    size: usize,
}

impl<'a> IncrementalCover<'a> {
    pub fn new(h: &'a Hierarchy) -> Self {
        IncrementalCover {
            h,
            contained: vec![0; h.num_nodes()],
            complexity: 0,
            size: 0,
        }
    }

    /// Adds `c`; returns false if it was already present.
    pub fn add(&mut self, c: ClassId) -> bool {
        let leaf = self.h.leaf_of_class(c);
        if self.contained[leaf] == 1 {
            return false;
        }
        self.size += 1;
        let mut cur = Some(leaf);
        while let Some(v) = cur {
            self.contained[v] += 1;
            if self.contained[v] == self.h.class_count(v) {
                self.complexity = self.complexity + 1 - self.h.children(v).len();
            }
            cur = self.h.parent(v);
        }
        true
    }

    pub fn contains(&self, c: ClassId) -> bool {
        self.contained[self.h.leaf_of_class(c)] == 1
    }

    pub fn complexity(&self) -> usize {
        self.complexity
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn classes_of(names: &[&str], h: &Hierarchy) -> Vec<ClassId> {
        names.iter().map(|n| h.class_id(n).unwrap()).collect()
    }

    #[test]
    fn eight_class_tree_shape() {
        let h = fixtures::eight_class_tree();
        assert_eq!(h.num_classes(), 8);
        assert_eq!(h.num_nodes(), 15);
        // breadth-first ids line up with the v1..v15 labels
        for id in 0..15 {
            if !h.is_leaf(id) {
                assert_eq!(h.node_name(id), format!("v{}", id + 1));
            }
        }
        assert_eq!(h.classes(1), 0..4);
        assert_eq!(h.leaf_of_class(0), 7);
    }

    #[test]
    fn small_trees() {
        let one =
            Hierarchy::from_tree(&TreeNode::internal("r", vec![TreeNode::leaf("a")])).unwrap();
        assert_eq!((one.num_classes(), one.num_nodes()), (1, 2));
        let three = Hierarchy::from_tree(&TreeNode::internal(
            "r",
            vec![
                TreeNode::leaf("a"),
                TreeNode::leaf("b"),
                TreeNode::leaf("c"),
            ],
        ))
        .unwrap();
        assert_eq!((three.num_classes(), three.num_nodes()), (3, 4));
        assert_eq!(three.class_id("c"), Some(2));
    }

    #[test]
    fn parse_errors_name_the_node() {
        let dup =
            r#"{"name":"r","children":[{"name":"a"},{"name":"x","children":[{"name":"a"}]}]}"#;
        match Hierarchy::from_json(dup) {
            Err(Error::Hierarchy { path, .. }) => assert_eq!(path, "r/x/a"),
            other => panic!("unexpected {other:?}"),
        }
        let empty = r#"{"name":"r","children":[{"name":"a"},{"name":"x","children":[]}]}"#;
        match Hierarchy::from_json(empty) {
            Err(Error::Hierarchy { path, .. }) => assert_eq!(path, "r/x"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Hierarchy::from_json(r#"{"name":"r","children":{"name":"a"}}"#),
            Err(Error::HierarchyJson(_))
        ));
        assert!(matches!(
            Hierarchy::from_json(r#"{"children":[]}"#),
            Err(Error::HierarchyJson(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let h = fixtures::eight_class_tree();
        let again = Hierarchy::from_json(&h.to_json()).unwrap();
        assert_eq!(again.to_tree(), h.to_tree());
    }

    #[test]
    fn paths() {
        let h = fixtures::eight_class_tree();
        let leaf = h.leaf_of_class(h.class_id("1").unwrap());
        assert_eq!(h.path_to_root(leaf).unwrap(), vec![7, 3, 1, 0]);
        assert_eq!(h.path_to_root(0).unwrap(), vec![0]);
        assert_eq!(h.path_to_root(4).unwrap(), vec![4, 1, 0]);
        assert!(matches!(h.path_to_root(15), Err(Error::InvalidNode(15))));
    }

    #[test]
    fn covers() {
        let h = fixtures::eight_class_tree();
        let cover = h
            .minimal_cover(&classes_of(&["1", "2", "4", "7", "8"], &h))
            .unwrap();
        // v4, v7, v11
        assert_eq!(cover.as_slice(), &[3, 6, 10]);
        assert_eq!(
            h.minimal_cover(&(0..8).collect::<Vec<_>>())
                .unwrap()
                .as_slice(),
            &[0]
        );
        assert_eq!(
            h.minimal_cover(&classes_of(&["3"], &h)).unwrap().as_slice(),
            &[9]
        );
        assert_eq!(
            h.representation_complexity(&classes_of(&["1", "3", "5", "7"], &h))
                .unwrap(),
            4
        );
        assert_eq!(h.representation_complexity(&[]).unwrap(), 0);
        assert!(matches!(h.minimal_cover(&[8]), Err(Error::InvalidClass(8))));
    }

    #[test]
    fn single_child_chain_covered_by_topmost() {
        let tree = TreeNode::internal(
            "r",
            vec![
                TreeNode::internal(
                    "x",
                    vec![TreeNode::internal("y", vec![TreeNode::leaf("a")])],
                ),
                TreeNode::leaf("b"),
            ],
        );
        let h = Hierarchy::from_tree(&tree).unwrap();
        let x = h.node_by_name("x").unwrap();
        assert_eq!(h.minimal_cover(&[0]).unwrap().as_slice(), &[x]);
    }

    #[test]
    fn balanced_shapes() {
        let h = Hierarchy::balanced(8, 2).unwrap();
        assert_eq!(h.num_nodes(), 15);
        assert_eq!(h.classes(1), 0..4);
        let h = Hierarchy::balanced(10, 3).unwrap();
        assert_eq!(h.num_classes(), 10);
        assert_eq!(h.children(0).len(), 3);
        assert_eq!(Hierarchy::balanced(1, 2).unwrap().num_nodes(), 2);
        assert!(Hierarchy::balanced(4, 1).is_err());
    }

    #[test]
    fn lca_and_node_sets() {
        let h = fixtures::eight_class_tree();
        assert_eq!(h.lowest_common_ancestor(&[0, 1]).unwrap(), 3);
        assert_eq!(h.lowest_common_ancestor(&[0, 4]).unwrap(), 0);
        assert_eq!(h.lowest_common_ancestor(&[2]).unwrap(), 9);
        assert!(NodeSet::new(&h, vec![1, 3]).is_err());
        let s = NodeSet::new(&h, vec![11, 3]).unwrap();
        assert_eq!(s.as_slice(), &[3, 11]);
        assert_eq!(s.classes(&h), vec![0, 1, 4]);
    }

    #[test]
    fn incremental_cover_tracks_minimal_cover() {
        let h = fixtures::eight_class_tree();
        let mut inc = IncrementalCover::new(&h);
        let mut so_far = Vec::new();
        for c in [0, 4, 1, 3, 5, 6, 7, 2] {
            assert!(inc.add(c));
            so_far.push(c);
            assert_eq!(
                inc.complexity(),
                h.representation_complexity(&so_far).unwrap()
            );
        }
        assert!(!inc.add(3));
        assert_eq!((inc.size(), inc.complexity()), (8, 1));
    }
}
