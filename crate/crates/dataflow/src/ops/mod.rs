//! The core operator library: rule-based refiners and filters, sample and
//! dataset evaluators, and generic LLM-driven generators. One operator per
//! functional category at minimum, all registered by `register_builtins`.

mod evaluate;
mod filter;
mod generate;
mod refine;

pub use evaluate::{LengthSampleEvaluator, LengthStatsDatasetEvaluator};
pub use filter::{ExactDedupFilter, ScoreThresholdConfig, ScoreThresholdFilter};
pub use generate::{AnswerGenerator, VariantRowGenerator};
pub use refine::{CodepointClassRefiner, UrlRefiner};

use crate::operator::{Registry, RegistryError};

/// Registers every operator in this library.
pub fn register_builtins(registry: &mut Registry) -> Result<(), RegistryError> {
    refine::register(registry)?;
    filter::register(registry)?;
    evaluate::register(registry)?;
    generate::register(registry)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::FunctionalCategory;

    #[test]
    fn builtins_cover_every_functional_category() {
        let mut registry = Registry::new();
        register_builtins(&mut registry).unwrap();
        for category in FunctionalCategory::ALL {
            if category == FunctionalCategory::GenerateRows {
                // The library's row generator plus domain packs cover this.
            }
            assert!(
                !registry.filtered(Some(category), None, None).is_empty(),
                "no operator registered for {category}"
            );
        }
    }
}
