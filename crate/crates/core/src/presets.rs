//! Built-in reference setup: the four-variable catalogue domain and a synthetic
//! interaction log over layout and theme.

use crate::domain::{paper_domain, DomainSpec};
use crate::error::Result;
use crate::reward::{fit_generality, ingest_interactions, EngagementWeights, GeneralityModel};

/// Synthetic interaction log (40 sessions over every layout/theme pair).
pub const CATALOGUE_INTERACTIONS: &str = include_str!("../assets/paper_interactions.csv");

pub fn catalogue_domain() -> DomainSpec {
    paper_domain()
}

/// Engagement table fitted from [`CATALOGUE_INTERACTIONS`] over layout and theme.
pub fn catalogue_generality(domain: &DomainSpec) -> Result<GeneralityModel> {
    let records = ingest_interactions(CATALOGUE_INTERACTIONS.as_bytes(), domain)?;
    let modeled: Vec<usize> = ["layout", "theme"]
        .iter()
        .filter_map(|n| domain.variable_index(n))
        .collect();
    fit_generality(&records, domain, &modeled, &EngagementWeights::default())
}
