//! A small worked example: an eight-class binary hierarchy with one
//! instance's class probabilities. Used by the docs and the test suites.
//!
//! ```text
//!                      v1 = {1..8}
//!            v2 = {1,2,3,4}        v3 = {5,6,7,8}
//!         v4={1,2}  v5={3,4}     v6={5,6}  v7={7,8}
//!         1    2    3    4       5    6    7    8
//!       .15  .13  .08  .125    .14  .125 .125 .125
//! ```

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::hierarchy::{Hierarchy, TreeNode};
use crate::probmodel::ProbabilityView;

/// Leaf masses in class order `1..8`.
pub const EIGHT_CLASS_MASSES: [f64; 8] = [0.15, 0.13, 0.08, 0.125, 0.14, 0.125, 0.125, 0.125];

pub const EIGHT_CLASS_JSON: &str = r#"{
  "name": "v1",
  "children": [
    {"name": "v2", "children": [
      {"name": "v4", "children": [{"name": "1"}, {"name": "2"}]},
      {"name": "v5", "children": [{"name": "3"}, {"name": "4"}]}
    ]},
    {"name": "v3", "children": [
      {"name": "v6", "children": [{"name": "5"}, {"name": "6"}]},
      {"name": "v7", "children": [{"name": "7"}, {"name": "8"}]}
    ]}
  ]
}"#;

pub fn eight_class_tree() -> Hierarchy {
    fn pair(name: &str, a: &str, b: &str) -> TreeNode {
        TreeNode::internal(name, vec![TreeNode::leaf(a), TreeNode::leaf(b)])
    }
    let root = TreeNode::internal(
        "v1",
        vec![
            TreeNode::internal("v2", vec![pair("v4", "1", "2"), pair("v5", "3", "4")]),
            TreeNode::internal("v3", vec![pair("v6", "5", "6"), pair("v7", "7", "8")]),
        ],
    );
    Hierarchy::from_tree(&root).expect("fixture is well formed")
}

pub fn eight_class_view() -> ProbabilityView {
    ProbabilityView::new(EIGHT_CLASS_MASSES.to_vec()).expect("fixture masses sum to one")
}

/// Random tree over leaves `c0..c{k-1}`: repeatedly merges a run of 2 to
/// `max_arity` adjacent subtrees under a new parent.
pub fn random_hierarchy<R: Rng + ?Sized>(
    k: usize,
    max_arity: usize,
    rng: &mut R,
) -> Result<Hierarchy> {
    if k == 0 || max_arity < 2 {
        return Err(Error::InvalidParameter(format!(
            "need k >= 1 and arity >= 2, got k = {k}, arity = {max_arity}"
        )));
    }
    let mut forest: Vec<TreeNode> = (0..k).map(|c| TreeNode::leaf(format!("c{c}"))).collect();
    let mut next = 0;
    while forest.len() > 1 {
        let g = rng.random_range(2..=max_arity.min(forest.len()));
        let start = rng.random_range(0..=forest.len() - g);
        let group: Vec<TreeNode> = forest.drain(start..start + g).collect();
        forest.insert(start, TreeNode::internal(format!("n{next}"), group));
        next += 1;
    }
    Hierarchy::from_tree(&forest[0])
}

/// Draws a view from a symmetric Dirichlet(`concentration`).
pub fn dirichlet_view<R: Rng + ?Sized>(
    k: usize,
    concentration: f64,
    rng: &mut R,
) -> Result<ProbabilityView> {
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::InvalidParameter(format!("concentration: {e}")))?;
    loop {
        let weights: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        // tiny concentrations can underflow every draw
        if let Ok(view) = ProbabilityView::from_weights(&weights) {
            return Ok(view);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_trees_respect_arity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in 1..12 {
            let h = random_hierarchy(k, 3, &mut rng).unwrap();
            assert_eq!(h.num_classes(), k);
            for v in 0..h.num_nodes() {
                assert!(h.children(v).len() <= 3);
                assert!(h.is_leaf(v) || h.children(v).len() >= 2);
            }
        }
        assert!(random_hierarchy(4, 1, &mut rng).is_err());
    }

    #[test]
    fn dirichlet_views_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for c in [1e-3, 0.5, 10.0] {
            let v = dirichlet_view(16, c, &mut rng).unwrap();
            assert!((v.masses().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(dirichlet_view(4, 0.0, &mut rng).is_err());
    }
}
