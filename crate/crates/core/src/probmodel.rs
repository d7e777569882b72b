//! Per-instance class distributions and their hierarchical views.
//!
//! A node's mass can be obtained two ways: by summing the masses of the
//! classes below it, or by multiplying branch (child-given-parent)
//! probabilities along its path to the root. [`NodeMasses`] does the former,
//! [`BranchTable`] converts between the two.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::hierarchy::{ClassId, Hierarchy, NodeId};
use crate::numeric::compensated_sum;

/// Tolerance for all normalization checks.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// One instance's distribution over classes, with its ranking.
///
/// `order` lists classes by descending mass, ties broken by ascending class
/// id. Every rank-based quantity downstream uses this order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityView {
    leaf_mass: Vec<f64>,
    order: Vec<ClassId>,
    rank: Vec<usize>,
}

impl ProbabilityView {
    pub fn new(leaf_mass: Vec<f64>) -> Result<Self> {
        if leaf_mass.is_empty() {
            return Err(Error::Empty("probability vector"));
        }
        for (c, &m) in leaf_mass.iter().enumerate() {
            if !m.is_finite() || !(0.0..=1.0 + MASS_TOLERANCE).contains(&m) {
                return Err(Error::Distribution(format!("class {c} has mass {m}")));
            }
        }
        let total = compensated_sum(leaf_mass.iter().copied());
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Distribution(format!("masses sum to {total}, not 1")));
        }
        Ok(Self::ranked(leaf_mass))
    }

    /// Rescales non-negative weights to sum to one.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Distribution(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total = compensated_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::Distribution("weights sum to zero".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    fn ranked(leaf_mass: Vec<f64>) -> Self {
        let mut order: Vec<ClassId> = (0..leaf_mass.len()).collect();
        order.sort_by(|&a, &b| descending(leaf_mass[a], leaf_mass[b]).then(a.cmp(&b)));
        let mut rank = vec![0; order.len()];
        for (i, &c) in order.iter().enumerate() {
            rank[c] = i;
        }
        ProbabilityView {
            leaf_mass,
            order,
            rank,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.leaf_mass.len()
    }

    pub fn mass(&self, c: ClassId) -> f64 {
        self.leaf_mass[c]
    }

    pub fn masses(&self) -> &[f64] {
        &self.leaf_mass
    }

    /// Classes by descending mass.
    pub fn order(&self) -> &[ClassId] {
        &self.order
    }

    /// Position of `c` in [`order`](Self::order).
    pub fn rank(&self, c: ClassId) -> usize {
        self.rank[c]
    }

    /// Most probable class.
    pub fn mode(&self) -> ClassId {
        self.order[0]
    }

    /// Sum of the class masses below `v`.
    pub fn node_mass(&self, h: &Hierarchy, v: NodeId) -> Result<f64> {
        check_width(h, self)?;
        h.check_node(v)?;
        Ok(compensated_sum(h.classes(v).map(|c| self.leaf_mass[c])))
    }

    /// Mass of an arbitrary class set.
    pub fn set_mass(&self, classes: &[ClassId]) -> f64 {
        compensated_sum(classes.iter().map(|&c| self.leaf_mass[c]))
    }
}

fn descending(a: f64, b: f64) -> Ordering {
    b.total_cmp(&a)
}

pub(crate) fn check_width(h: &Hierarchy, p: &ProbabilityView) -> Result<()> {
    if h.num_classes() == p.num_classes() {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what: "hierarchy classes vs probability vector",
            left: h.num_classes(),
            right: p.num_classes(),
        })
    }
}

/// Mass of every node for one instance, computed eagerly.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMasses(Vec<f64>);

impl NodeMasses {
    pub fn new(h: &Hierarchy, p: &ProbabilityView) -> Result<Self> {
        check_width(h, p)?;
        Ok(NodeMasses(
            (0..h.num_nodes())
                .map(|v| compensated_sum(h.classes(v).map(|c| p.mass(c))))
                .collect(),
        ))
    }

    pub fn get(&self, v: NodeId) -> f64 {
        self.0[v]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Conditional mass of each node given its parent; the root entry is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchTable(Vec<f64>);

impl BranchTable {
    /// Takes raw per-node branch probabilities, indexed by node id.
    pub fn new(h: &Hierarchy, branch: Vec<f64>) -> Result<Self> {
        if branch.len() != h.num_nodes() {
            return Err(Error::LengthMismatch {
                what: "branch table vs hierarchy nodes",
                left: branch.len(),
                right: h.num_nodes(),
            });
        }
        for (v, &b) in branch.iter().enumerate().skip(1) {
            if !b.is_finite() || !(-MASS_TOLERANCE..=1.0 + MASS_TOLERANCE).contains(&b) {
                return Err(Error::BranchTable(format!("node {v} has branch mass {b}")));
            }
        }
        for v in 0..h.num_nodes() {
            let children = h.children(v);
            if children.is_empty() {
                continue;
            }
            let total = compensated_sum(children.iter().map(|&c| branch[c]));
            if (total - 1.0).abs() > MASS_TOLERANCE {
                return Err(Error::BranchTable(format!(
                    "children of node {v} sum to {total}, not 1"
                )));
            }
        }
        let mut branch = branch;
        branch[0] = 1.0;
        Ok(BranchTable(branch))
    }

    /// Factorizes a flat distribution. Children of a zero-mass parent get
    /// uniform branches.
    pub fn from_view(h: &Hierarchy, p: &ProbabilityView) -> Result<Self> {
        let masses = NodeMasses::new(h, p)?;
        let mut branch = vec![1.0; h.num_nodes()];
        for v in 0..h.num_nodes() {
            let children = h.children(v);
            let parent_mass = masses.get(v);
            for &c in children {
                branch[c] = if parent_mass > 0.0 {
                    masses.get(c) / parent_mass
                } else {
                    1.0 / children.len() as f64
                };
            }
        }
        Ok(BranchTable(branch))
    }

    pub fn get(&self, v: NodeId) -> f64 {
        self.0[v]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Node masses as products of branch masses along each root path.
    pub fn node_masses(&self, h: &Hierarchy) -> Vec<f64> {
        let mut mass = vec![1.0; h.num_nodes()];
        // Breadth-first ids: parents come first.
        for v in 1..h.num_nodes() {
            let p = h.parent(v).expect("non-root node has a parent");
            mass[v] = mass[p] * self.0[v];
        }
        mass
    }

    pub fn to_view(&self, h: &Hierarchy) -> Result<ProbabilityView> {
        let mass = self.node_masses(h);
        let leaves = (0..h.num_classes())
            .map(|c| mass[h.leaf_of_class(c)].max(0.0))
            .collect();
        ProbabilityView::new(leaves)
    }
}
