//! Scenario presets shared by the benchmarks.

use bdt_core::bolt::FastlaneKind;
use bdt_core::config::ScenarioConfig;

/// One epoch of `esize` blocks with a steady transaction stream.
pub fn epoch_scenario(n: usize, f: usize, fastlane: FastlaneKind, faults: &str) -> ScenarioConfig {
    ScenarioConfig {
        n,
        f,
        fastlane,
        faults: faults.to_string(),
        esize: 8,
        max_epochs: 1,
        tx_count: 32,
        tx_interval: 1,
        seed: 7,
        ..ScenarioConfig::default()
    }
}
