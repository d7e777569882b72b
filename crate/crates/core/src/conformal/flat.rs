//! Baselines that ignore the hierarchy.

use super::family::{FamilyBuilder, NestedFamily};
use super::registry::NestedSetMethod;
use crate::error::Result;
use crate::hierarchy::Hierarchy;
use crate::numeric::Accumulator;
use crate::probmodel::{check_width, ProbabilityView};

/// Adaptive prediction sets: score `ρ(y) + u·P(y)`, where `ρ(y)` is the
/// mass ranked strictly before `y`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Aps;

impl NestedSetMethod for Aps {
    fn name(&self) -> &'static str {
        "aps"
    }

    fn family(&self, h: &Hierarchy, p: &ProbabilityView) -> Result<NestedFamily> {
        check_width(h, p)?;
        let mut builder = FamilyBuilder::new(h);
        let mut cumulative = Accumulator::default();
        for &c in p.order() {
            cumulative.add(p.mass(c));
            builder.push_nested([c], cumulative.value());
        }
        builder.finish()
    }
}

/// Least ambiguous classifier: score `1 − P(y)`; classes of equal mass
/// enter together.
#[derive(Debug, Clone, Copy, Default)]
pub struct Lac;

impl NestedSetMethod for Lac {
    fn name(&self) -> &'static str {
        "lac"
    }

    fn is_randomizable(&self) -> bool {
        false
    }

    fn family(&self, h: &Hierarchy, p: &ProbabilityView) -> Result<NestedFamily> {
        check_width(h, p)?;
        let mut builder = FamilyBuilder::new(h);
        let mut cumulative = Accumulator::default();
        let order = p.order();
        let mut start = 0;
        while start < order.len() {
            let level = p.mass(order[start]);
            let end = start
                + order[start..]
                    .iter()
                    .take_while(|&&c| p.mass(c) == level)
                    .count();
            for &c in &order[start..end] {
                cumulative.add(p.mass(c));
            }
            builder.push_threshold(
                order[start..end].iter().copied(),
                cumulative.value(),
                1.0 - level,
            );
            start = end;
        }
        builder.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{eight_class_tree, eight_class_view};

    #[test]
    fn aps_on_worked_example() {
        let h = eight_class_tree();
        let f = Aps.family(&h, &eight_class_view()).unwrap();
        let names = |classes: Vec<usize>| -> Vec<String> {
            classes
                .into_iter()
                .map(|c| h.class_name(c).to_string())
                .collect()
        };
        assert_eq!(
            names(f.classes(f.select(0.3, 0.0, true))),
            vec!["1", "2", "5"]
        );
        assert_eq!(names(f.classes(f.select(0.15, 1.0, true))), vec!["1"]);
        assert_eq!(f.classes(f.select(f64::INFINITY, 0.3, true)).len(), 8);
        assert_eq!(f.score(h.class_id("5").unwrap(), 0.0).unwrap(), 0.15);
    }

    #[test]
    fn lac_on_worked_example() {
        let h = eight_class_tree();
        let f = Lac.family(&h, &eight_class_view()).unwrap();
        let names: Vec<&str> = f
            .classes(f.select(0.86, 0.7, true))
            .into_iter()
            .map(|c| h.class_name(c))
            .collect();
        assert_eq!(names, vec!["1", "5"]);
        assert_eq!(f.score(h.class_id("3").unwrap(), 0.3).unwrap(), 0.92);
        // the four 0.125 classes enter together
        assert_eq!(f.entries().len(), 5);
        assert_eq!(f.classes(f.select(0.0, 0.0, true)), Vec::<usize>::new());
        assert_eq!(f.classes(f.select(0.0, 0.0, false)), vec![0]);
    }
}
