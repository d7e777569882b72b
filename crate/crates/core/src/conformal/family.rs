use crate::error::{Error, Result};
use crate::hierarchy::{ClassId, Hierarchy, IncrementalCover, NodeSet};

/// One candidate set of a nested family.
///
/// The threshold at which the entry is reached for a uniform draw `u` is
/// `score_lo + u·(score_hi − score_lo)`. For the interpolating methods
/// `score_lo` is the previous entry's mass and `score_hi` this entry's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyEntry {
    pub size: usize,
    pub mass: f64,
    pub complexity: usize,
    pub score_lo: f64,
    pub score_hi: f64,
}

impl FamilyEntry {
    pub fn score(&self, u: f64) -> f64 {
        // Clamped so consecutive entries' scores never cross by an ulp.
        (self.score_lo + u * (self.score_hi - self.score_lo)).clamp(self.score_lo, self.score_hi)
    }
}

/// Per-instance chain of growing class sets `S_1 ⊂ … ⊂ S_L = Y`.
///
/// A class belongs to `S_k` iff its first entry is at most `k`, so
/// membership is stored once per class rather than once per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedFamily {
    entries: Vec<FamilyEntry>,
    first_entry: Vec<usize>,
}

impl NestedFamily {
    pub fn entries(&self) -> &[FamilyEntry] {
        &self.entries
    }

    pub fn num_classes(&self) -> usize {
        self.first_entry.len()
    }

    /// Index of the first entry containing `y`.
    pub fn first_entry(&self, y: ClassId) -> Result<usize> {
        self.first_entry
            .get(y)
            .copied()
            .ok_or(Error::InvalidClass(y))
    }

    /// Nonconformity score of label `y`.
    pub fn score(&self, y: ClassId, u: f64) -> Result<f64> {
        Ok(self.entries[self.first_entry(y)?].score(u))
    }

    /// Largest entry whose score is within `tau`. `None` is the empty set.
    ///
    /// Scores are non-decreasing along the family, so the qualifying
    /// entries form a prefix.
    pub fn select(&self, tau: f64, u: f64, allow_empty: bool) -> Option<usize> {
        let reached = self
            .entries
            .iter()
            .take_while(|e| e.score(u) <= tau)
            .count();
        match reached {
            0 if allow_empty => None,
            0 => Some(0),
            n => Some(n - 1),
        }
    }

    pub fn classes(&self, entry: Option<usize>) -> Vec<ClassId> {
        match entry {
            None => Vec::new(),
            Some(k) => (0..self.first_entry.len())
                .filter(|&c| self.first_entry[c] <= k)
                .collect(),
        }
    }

    pub fn prediction(&self, h: &Hierarchy, entry: Option<usize>, u: f64) -> Prediction {
        let classes = self.classes(entry);
        let cover = h.minimal_cover(&classes).expect("family classes are valid");
        Prediction {
            size: classes.len(),
            complexity: cover.len(),
            classes,
            cover,
            u,
        }
    }

    /// Whether the label is inside the selected set.
    pub fn covers(&self, entry: Option<usize>, y: ClassId) -> bool {
        entry.is_some_and(|k| self.first_entry[y] <= k)
    }

    pub fn size(&self, entry: Option<usize>) -> usize {
        entry.map_or(0, |k| self.entries[k].size)
    }

    pub fn complexity(&self, entry: Option<usize>) -> usize {
        entry.map_or(0, |k| self.entries[k].complexity)
    }
}

/// Incrementally assembles a [`NestedFamily`]; sizes and representation
/// complexities are tracked as classes arrive.
#[derive(Debug)]
pub struct FamilyBuilder<'a> {
    cover: IncrementalCover<'a>,
    entries: Vec<FamilyEntry>,
    first_entry: Vec<usize>,
}

impl<'a> FamilyBuilder<'a> {
    pub fn new(h: &'a Hierarchy) -> Self {
        FamilyBuilder {
            cover: IncrementalCover::new(h),
            entries: Vec::new(),
            first_entry: vec![usize::MAX; h.num_classes()],
        }
    }

    fn absorb(&mut self, classes: impl IntoIterator<Item = ClassId>) -> bool {
        let k = self.entries.len();
        let mut grew = false;
        for c in classes {
            if self.cover.add(c) {
                self.first_entry[c] = k;
                grew = true;
            }
        }
        grew
    }

    fn last_hi(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.score_hi)
    }

    /// Appends a set whose score interpolates from the previous mass to
    /// `mass`. Classes already present are ignored; an entry that adds
    /// nothing is dropped.
    pub fn push_nested(&mut self, classes: impl IntoIterator<Item = ClassId>, mass: f64) {
        let lo = self.last_hi();
        if self.absorb(classes) {
            self.push_entry(mass, lo, mass.max(lo));
        }
    }

    /// Appends a set reached at a fixed score (no randomization).
    pub fn push_threshold(
        &mut self,
        classes: impl IntoIterator<Item = ClassId>,
        mass: f64,
        score: f64,
    ) {
        let score = score.max(self.last_hi());
        if self.absorb(classes) {
            self.push_entry(mass, score, score);
        }
    }

    fn push_entry(&mut self, mass: f64, lo: f64, hi: f64) {
        self.entries.push(FamilyEntry {
            size: self.cover.size(),
            mass,
            complexity: self.cover.complexity(),
            score_lo: lo,
            score_hi: hi,
        });
    }

    pub fn finish(self) -> Result<NestedFamily> {
        if let Some(c) = self.first_entry.iter().position(|&e| e == usize::MAX) {
            return Err(Error::Format(format!(
                "nested family never reaches class {c}; the last set must be the full class set"
            )));
        }
        Ok(NestedFamily {
            entries: self.entries,
            first_entry: self.first_entry,
        })
    }
}

/// A set-valued prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub classes: Vec<ClassId>,
    pub cover: NodeSet,
    pub size: usize,
    /// Representation complexity, `cover.len()`.
    pub complexity: usize,
    /// The uniform draw used.
    pub u: f64,
}

impl AsRef<[ClassId]> for Prediction {
    fn as_ref(&self) -> &[ClassId] {
        &self.classes
    }
}

impl Prediction {
    pub fn contains(&self, y: ClassId) -> bool {
        self.classes.binary_search(&y).is_ok()
    }
}
