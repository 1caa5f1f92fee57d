//! Shared inputs for the benchmarks: a seeded synthetic universe scored by the mock backend.

use std::sync::Arc;

use newsmom_core::prompt::TemplateSet;
use newsmom_core::scorer::{MockBackend, ScoreCache, Scorer};
use newsmom_core::search::{DateRange, SampleSplit, ScoringInputs};
use newsmom_core::synthetic::{generate, SyntheticData, SyntheticSpec};

pub struct Fixture {
    pub data: SyntheticData,
    pub templates: TemplateSet,
    pub scorer: Scorer,
}

impl Fixture {
    /// The default 250-name universe with an in-memory cache.
    pub fn universe(seed: u64) -> Self {
        Self::with_spec(&SyntheticSpec::universe(seed))
    }

    pub fn with_spec(spec: &SyntheticSpec) -> Self {
        Self {
            data: generate(spec).expect("synthetic spec is valid"),
            templates: TemplateSet::default(),
            scorer: Scorer::new(Arc::new(MockBackend), Arc::new(ScoreCache::in_memory())),
        }
    }

    pub fn inputs(&self) -> ScoringInputs<'_> {
        ScoringInputs {
            panel: &self.data.panel,
            news: &self.data.news,
            templates: &self.templates,
            scorer: &self.scorer,
        }
    }

    pub fn validation() -> DateRange {
        SampleSplit::default().validation
    }
}
