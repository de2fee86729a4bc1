//! Token usage and cost accounting per cycle phase.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

/// Amount in picodollars, so per-token prices stay exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cost(pub u128);

const PICO_PER_CENT: u128 = 10_000_000_000;

impl Cost {
    /// Whole cents, rounding half up.
    pub fn cents(self) -> u128 {
        (self.0 + PICO_PER_CENT / 2) / PICO_PER_CENT
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 1e12
    }
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        Cost(self.0 + rhs.0)
    }
}

impl std::iter::Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::default(), Add::add)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.cents();
        write!(f, "${}.{:02}", c / 100, c % 100)
    }
}

/// Prices in microdollars per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pricing {
    pub input_per_million: u64,
    pub output_per_million: u64,
}

impl Default for Pricing {
    /// $2.50 in, $10.00 out.
    fn default() -> Self {
        Pricing {
            input_per_million: 2_500_000,
            output_per_million: 10_000_000,
        }
    }
}

impl Pricing {
    pub fn cost(&self, input_tokens: u64, output_tokens: u64) -> Cost {
        Cost(
            u128::from(input_tokens) * u128::from(self.input_per_million)
                + u128::from(output_tokens) * u128::from(self.output_per_million),
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub calls: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub pricing: Pricing,
    pub phases: BTreeMap<String, PhaseUsage>,
    /// Set when counts come from the whitespace approximation instead of provider reports.
    pub approximate: bool,
}

/// Whitespace token count used when no provider report exists.
pub fn count_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    pub phase: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: String,
    pub wall_time_s: f64,
}

impl CostLedger {
    pub fn new(pricing: Pricing) -> Self {
        CostLedger {
            pricing,
            ..Default::default()
        }
    }

    pub fn record(&mut self, phase: &str, usage: Usage) {
        let row = self.phases.entry(phase.to_string()).or_default();
        row.input_tokens += usage.input_tokens;
        row.output_tokens += usage.output_tokens;
        row.calls += 1;
    }

    pub fn record_time(&mut self, phase: &str, wall_ms: u64) {
        self.phases.entry(phase.to_string()).or_default().wall_ms += wall_ms;
    }

    pub fn totals(&self) -> PhaseUsage {
        self.phases.values().fold(PhaseUsage::default(), |a, p| PhaseUsage {
            input_tokens: a.input_tokens + p.input_tokens,
            output_tokens: a.output_tokens + p.output_tokens,
            calls: a.calls + p.calls,
            wall_ms: a.wall_ms + p.wall_ms,
        })
    }

    /// Ledger union: per-phase counts add. Pricing of `self` is kept.
    pub fn merge(&mut self, other: &CostLedger) {
        for (phase, u) in &other.phases {
            let row = self.phases.entry(phase.clone()).or_default();
            row.input_tokens += u.input_tokens;
            row.output_tokens += u.output_tokens;
            row.calls += u.calls;
            row.wall_ms += u.wall_ms;
        }
        self.approximate |= other.approximate;
    }

    /// One row per phase plus a final `all` row.
    pub fn rows(&self) -> Vec<LedgerRow> {
        let row = |phase: &str, u: &PhaseUsage| LedgerRow {
            phase: phase.to_string(),
            input_tokens: u.input_tokens,
            output_tokens: u.output_tokens,
            cost: self.pricing.cost(u.input_tokens, u.output_tokens).to_string(),
            wall_time_s: u.wall_ms as f64 / 1000.0,
        };
        let mut out: Vec<LedgerRow> = self.phases.iter().map(|(p, u)| row(p, u)).collect();
        out.push(row("all", &self.totals()));
        out
    }
}

pub fn ledger_cost(ledger: &CostLedger) -> Cost {
    ledger
        .phases
        .values()
        .map(|u| ledger.pricing.cost(u.input_tokens, u.output_tokens))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ledger(input: u64, output: u64) -> CostLedger {
        let mut l = CostLedger::default();
        l.record(
            "all-phases",
            Usage {
                input_tokens: input,
                output_tokens: output,
            },
        );
        l
    }

    #[test]
    fn reference_costs() {
        assert_eq!(ledger_cost(&ledger(59_000, 5_900)).to_string(), "$0.21");
        assert_eq!(ledger_cost(&ledger(59_000, 5_900)), Cost(206_500_000_000));
        assert_eq!(ledger_cost(&ledger(284_000, 13_000)).to_string(), "$0.84");
        assert_eq!(ledger_cost(&ledger(0, 0)).to_string(), "$0.00");
    }

    #[test]
    fn half_cent_rounds_up() {
        assert_eq!(Cost(5_000_000_000).to_string(), "$0.01");
        assert_eq!(Cost(4_999_999_999).to_string(), "$0.00");
    }
}
