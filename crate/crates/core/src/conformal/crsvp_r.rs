//! Predictions with at most `r` disjoint nodes, built from the nested
//! sequence of lowest common ancestor sets.

use super::family::{FamilyBuilder, NestedFamily};
use super::registry::NestedSetMethod;
use crate::ancestors::AncestorSolver;
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::probmodel::ProbabilityView;

#[derive(Debug, Clone, Copy)]
pub struct CrsvpR {
    budget: usize,
}

impl CrsvpR {
    pub fn new(budget: usize) -> Result<Self> {
        if budget == 0 {
            return Err(Error::InvalidParameter(
                "budget r must be at least 1".into(),
            ));
        }
        Ok(CrsvpR { budget })
    }

    pub fn budget(&self) -> usize {
        self.budget
    }
}

impl NestedSetMethod for CrsvpR {
    fn name(&self) -> &'static str {
        "crsvp-r"
    }

    fn label(&self) -> String {
        format!("crsvp-{}", self.budget)
    }

    fn family(&self, h: &Hierarchy, p: &ProbabilityView) -> Result<NestedFamily> {
        let sequence = AncestorSolver::new(h, p)?.sequence(self.budget)?;
        let mut builder = FamilyBuilder::new(h);
        for entry in sequence {
            builder.push_nested(entry.classes, entry.mass);
        }
        builder.finish()
    }
}
