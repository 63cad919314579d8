use serde::{Deserialize, Serialize};

use super::TokenUsage;

/// Dollar rates per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pricing {
    pub input_rate: f64,
    pub output_rate: f64,
}

impl Pricing {
    pub fn new(input_rate: f64, output_rate: f64) -> Self {
        assert!(input_rate >= 0.0 && output_rate >= 0.0, "rates must be non-negative");
        Pricing {
            input_rate,
            output_rate,
        }
    }

    pub fn gemma_3_12b() -> Self {
        Pricing::new(0.04, 0.13)
    }

    pub fn gpt_4_1() -> Self {
        Pricing::new(2.0, 8.0)
    }

    pub fn load(path: &std::path::Path) -> crate::Result<Self> {
        let p: Pricing = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if p.input_rate < 0.0 || p.output_rate < 0.0 {
            return Err(crate::Error::Config("pricing rates must be non-negative".into()));
        }
        Ok(p)
    }
}

impl Default for Pricing {
    fn default() -> Self {
        Pricing::gemma_3_12b()
    }
}

pub fn cost(usage: TokenUsage, pricing: &Pricing) -> f64 {
    usage.input_tokens as f64 * pricing.input_rate / 1e6
        + usage.output_tokens as f64 * pricing.output_rate / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_rates() {
        let c = cost(TokenUsage::new(100_000, 10_000), &Pricing::gemma_3_12b());
        assert!((c - 0.0053).abs() < 1e-12);
        assert_eq!(cost(TokenUsage::default(), &Pricing::gpt_4_1()), 0.0);
    }
}
