//! Lowest sets of common ancestors under a representation-complexity budget.
//!
//! Given the classes `omega` that must be predicted, find the class set
//! `Y ⊇ omega` representable by at most `r` disjoint nodes that minimizes
//! `|Y| − P(Y)`. With `r = 1` this is the classic lowest common ancestor.
//!
//! The solver is a bottom-up dynamic program. For every node `v` that has
//! `omega` classes below it and every budget `b`, [`AncestorTable`] keeps the
//! best cover of those classes using at most `b` nodes inside `v`'s subtree.
//! An internal node either collapses to `{v}` or splits its budget over the
//! children that hold `omega` classes (every such child gets at least one
//! unit, the others get none), taking the union of the children's covers.
//!
//! Equal-cost candidates (within `1e-12`) are ordered by their class sets:
//! at the smallest class id on which two sets differ, the set containing it
//! wins. For sets of equal size this is plain lexicographic order of the
//! sorted class lists, and unlike that order it composes over disjoint
//! subtrees, which the dynamic program relies on.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::hierarchy::{ClassId, Hierarchy, NodeId, NodeSet};
use crate::numeric::compensated_sum;
use crate::probmodel::{check_width, NodeMasses, ProbabilityView};

/// Largest budget accepted below `K`; the enumeration is exponential in it.
pub const MAX_BUDGET: usize = 16;
/// Node-count limit for [`bruteforce_ancestors`].
pub const ORACLE_MAX_NODES: usize = 25;

const COST_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AncestorSolution {
    /// Sorted class ids.
    pub classes: Vec<ClassId>,
    /// Minimal cover of `classes`.
    pub cover: NodeSet,
    pub mass: f64,
    /// `|classes| − mass`.
    pub cost: f64,
}

/// One element of the nested sequence of lowest common ancestor sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceEntry {
    pub classes: Vec<ClassId>,
    pub cover: NodeSet,
    pub mass: f64,
}

/// Classes ranked at or above `y`: `{y' : P(y') ≥ P(y)}` under the view's
/// tie-broken order. Sorted by class id.
pub fn omega_set(p: &ProbabilityView, y: ClassId) -> Result<Vec<ClassId>> {
    if y >= p.num_classes() {
        return Err(Error::InvalidClass(y));
    }
    let mut omega = p.order()[..=p.rank(y)].to_vec();
    omega.sort_unstable();
    Ok(omega)
}

/// Budgets must be positive, and either at most [`MAX_BUDGET`] or at least
/// `k` (unrestricted).
pub fn check_budget(r: usize, k: usize) -> Result<()> {
    if r == 0 {
        return Err(Error::InvalidParameter(
            "budget r must be at least 1".into(),
        ));
    }
    if r > MAX_BUDGET && r < k {
        return Err(Error::InvalidParameter(format!(
            "budget r = {r} exceeds {MAX_BUDGET}; use r <= {MAX_BUDGET} or r >= K = {k}"
        )));
    }
    Ok(())
}

/// Tie-break order between two sorted class lists; `Less` means `a` wins.
pub fn tie_order(a: &[ClassId], b: &[ClassId]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x.cmp(y);
        }
    }
    // One is a prefix of the other: the longer one contains the first
    // differing class.
    b.len().cmp(&a.len())
}

pub fn solve_ancestors(
    h: &Hierarchy,
    p: &ProbabilityView,
    omega: &[ClassId],
    r: usize,
) -> Result<AncestorSolution> {
    AncestorSolver::new(h, p)?.solve(omega, r)
}

pub fn ancestor_sequence(
    h: &Hierarchy,
    p: &ProbabilityView,
    r: usize,
) -> Result<Vec<SequenceEntry>> {
    AncestorSolver::new(h, p)?.sequence(r)
}

/// Solver bound to one instance; node masses are computed once.
#[derive(Debug)]
pub struct AncestorSolver<'a> {
    h: &'a Hierarchy,
    p: &'a ProbabilityView,
    masses: NodeMasses,
}

#[derive(Debug, Clone)]
struct Cover {
    nodes: Vec<NodeId>,
    size: usize,
    mass: f64,
}

impl Cover {
    fn node(h: &Hierarchy, masses: &NodeMasses, v: NodeId) -> Self {
        Cover {
            nodes: vec![v],
            size: h.class_count(v),
            mass: masses.get(v),
        }
    }

    fn cost(&self) -> f64 {
        self.size as f64 - self.mass
    }

    fn classes(&self, h: &Hierarchy) -> Vec<ClassId> {
        let mut out: Vec<ClassId> = self.nodes.iter().flat_map(|&v| h.classes(v)).collect();
        out.sort_unstable();
        out
    }

    fn beats(&self, other: &Cover, h: &Hierarchy) -> bool {
        let diff = self.cost() - other.cost();
        if diff < -COST_TIE {
            return true;
        }
        if diff > COST_TIE {
            return false;
        }
        match tie_order(&self.classes(h), &other.classes(h)) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => self.nodes.len() < other.nodes.len(),
        }
    }
}

/// Per-node best covers, `covers[v][b - 1]` for budgets `b = 1..=cap(v)`
/// where `cap(v) = min(r, omega classes below v)`. Larger budgets cannot
/// improve on `cap(v)`.
#[derive(Debug)]
pub struct AncestorTable {
    covers: Vec<Vec<Cover>>,
}

impl AncestorTable {
    fn best(&self, v: NodeId, budget: usize) -> &Cover {
        let entries = &self.covers[v];
        &entries[budget.min(entries.len()) - 1]
    }

    fn cap(&self, v: NodeId) -> usize {
        self.covers[v].len()
    }
}

impl<'a> AncestorSolver<'a> {
    pub fn new(h: &'a Hierarchy, p: &'a ProbabilityView) -> Result<Self> {
        check_width(h, p)?;
        Ok(AncestorSolver {
            h,
            p,
            masses: NodeMasses::new(h, p)?,
        })
    }

    pub fn node_masses(&self) -> &NodeMasses {
        &self.masses
    }

    /// Number of `omega` classes below every node.
    fn omega_counts(&self, omega: &[ClassId]) -> Result<Vec<usize>> {
        let k = self.h.num_classes();
        let mut member = vec![0usize; k];
        for &c in omega {
            self.h.check_class(c)?;
            member[c] = 1;
        }
        let mut prefix = vec![0usize; k + 1];
        for c in 0..k {
            prefix[c + 1] = prefix[c] + member[c];
        }
        Ok((0..self.h.num_nodes())
            .map(|v| {
                let r = self.h.classes(v);
                prefix[r.end] - prefix[r.start]
            })
            .collect())
    }

    pub fn solve(&self, omega: &[ClassId], r: usize) -> Result<AncestorSolution> {
        check_budget(r, self.h.num_classes())?;
        if omega.is_empty() {
            return Err(Error::Empty("omega class set"));
        }
        let mut sorted = omega.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let cover = self.h.minimal_cover(&sorted)?;
        // omega itself is optimal once it fits the budget, unless some
        // outside class carries (almost) all the mass and ties it.
        if cover.len() <= r && !self.has_near_unit_mass_outside(&sorted) {
            return Ok(self.finish(sorted));
        }
        self.solve_table(&sorted, r)
    }

    fn has_near_unit_mass_outside(&self, sorted_omega: &[ClassId]) -> bool {
        (0..self.h.num_classes())
            .any(|c| self.p.mass(c) > 1.0 - 1e-9 && sorted_omega.binary_search(&c).is_err())
    }

    /// Runs the dynamic program unconditionally.
    fn solve_table(&self, omega: &[ClassId], r: usize) -> Result<AncestorSolution> {
        let table = self.build_table(omega, r)?;
        let root = self.h.root();
        let best = table.best(root, r);
        Ok(self.finish(best.classes(self.h)))
    }

    pub fn build_table(&self, omega: &[ClassId], r: usize) -> Result<AncestorTable> {
        if r == 0 {
            return Err(Error::InvalidParameter(
                "budget r must be at least 1".into(),
            ));
        }
        if omega.is_empty() {
            return Err(Error::Empty("omega class set"));
        }
        let h = self.h;
        let counts = self.omega_counts(omega)?;
        let mut table = AncestorTable {
            covers: vec![Vec::new(); h.num_nodes()],
        };
        // Breadth-first ids: descending id visits children before parents.
        for v in (0..h.num_nodes()).rev() {
            if counts[v] == 0 {
                continue;
            }
            let cap = r.min(counts[v]);
            if h.is_leaf(v) {
                table.covers[v] = vec![Cover::node(h, &self.masses, v); cap];
                continue;
            }
            let active: Vec<NodeId> = h
                .children(v)
                .iter()
                .copied()
                .filter(|&c| counts[c] > 0)
                .collect();
            let mut entries: Vec<Cover> = Vec::with_capacity(cap);
            for budget in 1..=cap {
                let mut best = match entries.last() {
                    Some(prev) => prev.clone(),
                    None => Cover::node(h, &self.masses, v),
                };
                if active.len() <= budget {
                    let mut alloc = vec![0usize; active.len()];
                    self.distribute(&table, &active, 0, budget, &mut alloc, &mut best);
                }
                entries.push(best);
            }
            table.covers[v] = entries;
        }
        Ok(table)
    }

    /// Tries every split of exactly `remaining` budget units over
    /// `active[i..]`, each child receiving between 1 and its cap.
    fn distribute(
        &self,
        table: &AncestorTable,
        active: &[NodeId],
        i: usize,
        remaining: usize,
        alloc: &mut [usize],
        best: &mut Cover,
    ) {
        let left = active.len() - i;
        if left == 0 {
            if remaining == 0 {
                let mut union = Cover {
                    nodes: Vec::new(),
                    size: 0,
                    mass: 0.0,
                };
                for (&child, &b) in active.iter().zip(alloc.iter()) {
                    let part = table.best(child, b);
                    union.nodes.extend_from_slice(&part.nodes);
                    union.size += part.size;
                    union.mass += part.mass;
                }
                if union.beats(best, self.h) {
                    *best = union;
                }
            }
            return;
        }
        let child = active[i];
        let max = table.cap(child).min(remaining.saturating_sub(left - 1));
        for b in 1..=max {
            alloc[i] = b;
            self.distribute(table, active, i + 1, remaining - b, alloc, best);
        }
    }

    fn finish(&self, classes: Vec<ClassId>) -> AncestorSolution {
        let cover = self
            .h
            .minimal_cover(&classes)
            .expect("solver classes are valid ids");
        let mass = compensated_sum(cover.iter().map(|v| self.masses.get(v)));
        AncestorSolution {
            cost: classes.len() as f64 - mass,
            classes,
            cover,
            mass,
        }
    }

    /// The ordered unique lowest common ancestor sets for classes taken in
    /// descending probability. Ends with the full class set.
    pub fn sequence(&self, r: usize) -> Result<Vec<SequenceEntry>> {
        check_budget(r, self.h.num_classes())?;
        let k = self.h.num_classes();
        let order = self.p.order();
        let mut entries: Vec<SequenceEntry> = Vec::new();
        let mut member = vec![false; k];
        let mut omega: Vec<ClassId> = Vec::with_capacity(k);
        for (i, &y) in order.iter().enumerate() {
            let pos = omega.binary_search(&y).unwrap_err();
            omega.insert(pos, y);
            if member[y] {
                continue;
            }
            let mut sol = self.solve(&omega, r)?;
            if let Some(prev) = entries.last() {
                if !prev
                    .classes
                    .iter()
                    .all(|c| sol.classes.binary_search(c).is_ok())
                {
                    log::warn!(
                        "non-nested ancestor sequence at rank {i} (r = {r}): {:?} then {:?}; masses {:?}",
                        prev.classes,
                        sol.classes,
                        self.p.masses()
                    );
                    // Near-ties (within the cost tolerance) can swap classes
                    // of negligible mass. Requiring the previous set keeps the
                    // chain nested; when nestedness holds this is a no-op.
                    let mut widened: Vec<ClassId> =
                        omega.iter().chain(&prev.classes).copied().collect();
                    widened.sort_unstable();
                    widened.dedup();
                    sol = self.solve(&widened, r)?;
                }
            }
            let prev_len = entries.last().map_or(0, |e| e.classes.len());
            if sol.classes.len() == prev_len {
                continue;
            }
            member.iter_mut().for_each(|m| *m = false);
            for &c in &sol.classes {
                member[c] = true;
            }
            entries.push(SequenceEntry {
                classes: sol.classes,
                cover: sol.cover,
                mass: sol.mass,
            });
        }
        Ok(entries)
    }
}

/// Exhaustive reference solver: tries every set of at most `r` pairwise
/// disjoint nodes whose classes contain `omega`.
pub fn bruteforce_ancestors(
    h: &Hierarchy,
    p: &ProbabilityView,
    omega: &[ClassId],
    r: usize,
) -> Result<AncestorSolution> {
    check_width(h, p)?;
    if h.num_nodes() > ORACLE_MAX_NODES {
        return Err(Error::OracleTooLarge {
            nodes: h.num_nodes(),
            limit: ORACLE_MAX_NODES,
        });
    }
    if r == 0 {
        return Err(Error::InvalidParameter(
            "budget r must be at least 1".into(),
        ));
    }
    if omega.is_empty() {
        return Err(Error::Empty("omega class set"));
    }
    let mut required = vec![false; h.num_classes()];
    for &c in omega {
        h.check_class(c)?;
        required[c] = true;
    }

    struct Search<'s> {
        h: &'s Hierarchy,
        p: &'s ProbabilityView,
        required: Vec<bool>,
        budget: usize,
        chosen: Vec<NodeId>,
        best: Option<(f64, Vec<ClassId>)>,
    }

    impl Search<'_> {
        fn visit(&mut self, start: NodeId) {
            for v in start..self.h.num_nodes() {
                if self.chosen.iter().any(|&u| !self.h.disjoint(u, v)) {
                    continue;
                }
                self.chosen.push(v);
                self.evaluate();
                if self.chosen.len() < self.budget {
                    self.visit(v + 1);
                }
                self.chosen.pop();
            }
        }

        fn evaluate(&mut self) {
            let mut covered = vec![false; self.required.len()];
            for &v in &self.chosen {
                for c in self.h.classes(v) {
                    covered[c] = true;
                }
            }
            if self.required.iter().zip(&covered).any(|(&r, &c)| r && !c) {
                return;
            }
            let classes: Vec<ClassId> = (0..covered.len()).filter(|&c| covered[c]).collect();
            let cost =
                classes.len() as f64 - compensated_sum(classes.iter().map(|&c| self.p.mass(c)));
            let better = match &self.best {
                None => true,
                Some((best_cost, best_classes)) => {
                    let diff = cost - best_cost;
                    diff < -COST_TIE
                        || (diff <= COST_TIE && tie_order(&classes, best_classes) == Ordering::Less)
                }
            };
            if better {
                self.best = Some((cost, classes));
            }
        }
    }

    let mut search = Search {
        h,
        p,
        required,
        budget: r.min(h.num_nodes()),
        chosen: Vec::new(),
        best: None,
    };
    search.visit(0);
    let (cost, classes) = search.best.expect("the root always covers omega");
    let cover = h.minimal_cover(&classes)?;
    let mass = p.set_mass(&classes);
    Ok(AncestorSolution {
        classes,
        cover,
        mass,
        cost,
    })
}
