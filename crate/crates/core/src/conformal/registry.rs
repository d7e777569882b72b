//! Name-keyed registry of nested set-valued methods.
//!
//! Every method turns one instance's distribution into a [`NestedFamily`];
//! calibration and prediction are shared on top of that. Built-in methods:
//!
//! | name      | sets                                              |
//! |-----------|---------------------------------------------------|
//! | `crsvp`   | nodes on the mode's path to the root              |
//! | `crsvp-r` | lowest sets of common ancestors, at most `r` nodes |
//! | `aps`     | top-k classes by probability                      |
//! | `lac`     | classes above a probability level                 |

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use super::crsvp::Crsvp;
use super::crsvp_r::CrsvpR;
use super::family::NestedFamily;
use super::flat::{Aps, Lac};
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::probmodel::ProbabilityView;

pub trait NestedSetMethod: Send + Sync + fmt::Debug {
    /// Registry key.
    fn name(&self) -> &'static str;

    /// Display label including parameters, e.g. `crsvp-3`.
    fn label(&self) -> String {
        self.name().to_string()
    }

    /// Whether the uniform draw affects scores at all.
    fn is_randomizable(&self) -> bool {
        true
    }

    fn family(&self, h: &Hierarchy, p: &ProbabilityView) -> Result<NestedFamily>;
}

/// Parameters a factory may need.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MethodParams {
    pub r: Option<usize>,
}

pub type MethodFactory = fn(&MethodParams) -> Result<Arc<dyn NestedSetMethod>>;

#[derive(Debug, Clone)]
struct Registration {
    description: &'static str,
    factory: MethodFactory,
}

#[derive(Debug, Clone)]
pub struct MethodRegistry {
    methods: BTreeMap<String, Registration>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        MethodRegistry {
            methods: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, description: &'static str, factory: MethodFactory) {
        self.methods.insert(
            name.to_string(),
            Registration {
                description,
                factory,
            },
        );
    }

    pub fn build(&self, name: &str, params: &MethodParams) -> Result<Arc<dyn NestedSetMethod>> {
        let reg = self
            .methods
            .get(name)
            .ok_or_else(|| Error::UnknownMethod(name.to_string()))?;
        (reg.factory)(params)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.methods.contains_key(name)
    }

    /// `(name, description)` pairs, sorted by name.
    pub fn list(&self) -> Vec<(&str, &'static str)> {
        self.methods
            .iter()
            .map(|(k, v)| (k.as_str(), v.description))
            .collect()
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut reg = MethodRegistry::empty();
        reg.register("crsvp", "single hierarchy node on the mode's path", |_| {
            Ok(Arc::new(Crsvp))
        });
        reg.register(
            "crsvp-r",
            "at most r disjoint hierarchy nodes (requires r)",
            |params| {
                let r = params.r.ok_or_else(|| {
                    Error::InvalidParameter("method crsvp-r requires a budget r".into())
                })?;
                Ok(Arc::new(CrsvpR::new(r)?))
            },
        );
        reg.register(
            "aps",
            "adaptive prediction sets, ignores the hierarchy",
            |_| Ok(Arc::new(Aps)),
        );
        reg.register(
            "lac",
            "least ambiguous classifier, ignores the hierarchy",
            |_| Ok(Arc::new(Lac)),
        );
        reg
    }
}

/// The registry with the built-in methods.
pub fn builtin() -> &'static MethodRegistry {
    static REGISTRY: OnceLock<MethodRegistry> = OnceLock::new();
    REGISTRY.get_or_init(MethodRegistry::default)
}
