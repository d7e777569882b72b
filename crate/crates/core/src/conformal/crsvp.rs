//! Single-node predictions: the nodes on the path from the mode's leaf to
//! the root, taken as a nested family.

use super::family::{FamilyBuilder, NestedFamily};
use super::registry::NestedSetMethod;
use crate::error::Result;
use crate::hierarchy::Hierarchy;
use crate::probmodel::{NodeMasses, ProbabilityView};

#[derive(Debug, Clone, Copy, Default)]
pub struct Crsvp;

impl NestedSetMethod for Crsvp {
    fn name(&self) -> &'static str {
        "crsvp"
    }

    fn family(&self, h: &Hierarchy, p: &ProbabilityView) -> Result<NestedFamily> {
        let masses = NodeMasses::new(h, p)?;
        let mut builder = FamilyBuilder::new(h);
        // Single-child chains repeat a class set; the builder drops repeats.
        for v in h.path_to_root(h.leaf_of_class(p.mode()))? {
            builder.push_nested(h.classes(v), masses.get(v));
        }
        builder.finish()
    }
}
