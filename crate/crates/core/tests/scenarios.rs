mod common;

use bdt_core::bolt::FastlaneKind;
use bdt_core::config::{ConfigError, ScenarioConfig};
use bdt_core::monitor::ViolationKind;
use bdt_core::node::{GapMode, Interrupt, Path, TcvMode};
use bdt_core::scenario::{run_scenario, RunOptions, RunReport};
use bdt_core::sim::DelayRule;
use common::sweep_config;

fn run(cfg: &ScenarioConfig) -> RunReport {
    run_scenario(cfg, RunOptions::default()).unwrap()
}

fn traced(cfg: &ScenarioConfig) -> RunReport {
    run_scenario(cfg, RunOptions { trace: true }).unwrap()
}

fn laggard(faults: &str, seed: u64) -> ScenarioConfig {
    let rule = DelayRule { from: None, to: Some(3), kind: Some("proposal".into()), epochs: Some((1, 1)), window: None, extra: 1_000_000 };
    ScenarioConfig { delay_rules: vec![rule], ..sweep_config(4, 1, FastlaneKind::Hs, faults, seed) }
}

#[test]
fn fault_free_logs_are_equal_and_nonempty() {
    for fastlane in [FastlaneKind::Hs, FastlaneKind::Rbc, FastlaneKind::Timeout] {
        let r = run(&ScenarioConfig { fastlane, ..ScenarioConfig::default() });
        assert!(r.ok(), "{fastlane}: {:?}", r.violations);
        assert!(r.logs_agree());
        assert!(r.nodes.iter().all(|p| !p.log().is_empty()));
    }
}

#[test]
fn resilience_bound_is_enforced() {
    let err = run_scenario(&ScenarioConfig { n: 3, f: 1, ..ScenarioConfig::default() }, RunOptions::default()).err().unwrap();
    assert!(matches!(err, ConfigError::Field { ref field, .. } if field == "n"), "{err}");
}

#[test]
fn paths_follow_the_fastlane_kind() {
    let hs = run(&ScenarioConfig::default());
    assert_eq!(hs.metrics.path_share(Path::Fastlane), 1.0);
    let timeout = run(&ScenarioConfig { fastlane: FastlaneKind::Timeout, ..ScenarioConfig::default() });
    assert_eq!(timeout.metrics.path_share(Path::Fallback), 1.0);
    assert!(timeout.nodes.iter().flat_map(|p| p.paces()).all(|rec| rec.agreed == Some(0) || rec.agreed == Some(1)));
}

#[test]
fn full_epoch_claims_esize() {
    let r = run(&ScenarioConfig { esize: 6, tx_count: 80, tx_interval: 1, max_epochs: 1, ..ScenarioConfig::default() });
    let recs: Vec<_> = r.nodes.iter().flat_map(|p| p.paces()).collect();
    assert!(recs.iter().any(|rec| rec.interrupt == Some(Interrupt::EpochFull)));
    assert!(recs.iter().all(|rec| rec.claimed == 6 && rec.maxpace == 6 && rec.agreed == Some(6)));
    // Pace 5 commits slots 1..5; the 1-notarized slot 6 is dropped.
    assert!(r.nodes.iter().all(|p| p.log_epoch(1).len() == 5));
}

#[test]
fn dumbo_block_draws_from_every_party() {
    for seed in 0..10 {
        let cfg = ScenarioConfig { fastlane: FastlaneKind::Timeout, batch: 8, tx_count: 8, tx_interval: 0, max_epochs: 1, seed, ..ScenarioConfig::default() };
        let r = run(&cfg);
        let block = &r.nodes[0].log()[0];
        assert!((2..=8).contains(&block.txs.len()), "seed {seed}: {}", block.txs.len());
        assert!(r.nodes.iter().all(|p| p.evidence().is_empty()));
        assert_eq!(r.count(ViolationKind::EarlyDecryption), 0);
    }
}

#[test]
fn crashed_leader_falls_back() {
    for seed in 0..10 {
        let r = run(&ScenarioConfig { faults: "crash:0@0".into(), seed, ..ScenarioConfig::default() });
        assert!(r.ok() && r.logs_agree(), "seed {seed}");
        assert!(r.metrics.blocks.iter().any(|b| b.epoch == 1 && b.path == Path::Fallback));
        assert!(r.metrics.blocks.iter().any(|b| b.epoch == 2 && b.path == Path::Fastlane));
    }
}

#[test]
fn forged_pacesync_is_discarded() {
    for seed in 0..20 {
        let r = run(&ScenarioConfig { faults: "byz-leader:0".into(), seed, ..ScenarioConfig::default() });
        assert!(r.ok() && r.logs_agree(), "seed {seed}: {:?}", r.violations);
        for p in r.live_honest() {
            for rec in r.nodes[p].paces() {
                assert!(rec.maxpace <= r.notarized[rec.epoch as usize], "seed {seed}");
            }
        }
    }
}

#[test]
fn laggard_fetches_blocks_despite_garbage() {
    for seed in 0..20 {
        let r = run(&laggard("garbage:2", seed));
        assert!(r.ok(), "seed {seed}: {:?}", r.violations);
        let lag = &r.nodes[3];
        assert!(lag.paths().contains(&Path::Help), "seed {seed}");
        assert_eq!(lag.fastlane_delivered(1), 0);
        let strip = |p: usize| r.nodes[p].log_epoch(1).iter().map(|b| (b.slot, b.txs.clone())).collect::<Vec<_>>();
        assert_eq!(strip(3), strip(0));
    }
}

#[test]
fn no_callhelp_without_a_gap() {
    let r = traced(&ScenarioConfig { seed: 3, ..ScenarioConfig::default() });
    assert!(!r.trace.unwrap().iter().any(|e| e.kind == "callhelp"));
}

/// Taken literally, the gap formula subtracts the two registers a second
/// time, so a laggard fetches too few blocks and its log diverges.
#[test]
fn literal_gap_formula_loses_blocks() {
    let mut short = 0;
    for seed in 0..10 {
        let consistent = run(&laggard("", seed));
        assert!(consistent.ok() && consistent.logs_agree(), "seed {seed}");
        let literal = run(&ScenarioConfig { gap_mode: GapMode::Literal, ..laggard("", seed) });
        if literal.nodes[3].log_epoch(1).len() < literal.nodes[0].log_epoch(1).len() {
            short += 1;
            assert!(literal.count(ViolationKind::PrefixConsistency) > 0, "seed {seed}");
        }
    }
    assert!(short > 0);
}

#[test]
fn register_variants_and_blackbox_agreement_run_clean() {
    for seed in 0..5 {
        let base = sweep_config(4, 1, FastlaneKind::Hs, "crash:1@25", seed);
        for cfg in [
            ScenarioConfig { tcv_mode: TcvMode::Blackbox, ..base.clone() },
            ScenarioConfig { empty_tail: true, ..base.clone() },
            ScenarioConfig { dumbo_blocks_per_fallback: 2, fastlane: FastlaneKind::Timeout, ..base.clone() },
        ] {
            let r = run(&cfg);
            assert!(r.ok() && r.logs_agree(), "seed {seed} {cfg:?}: {:?}", r.violations);
        }
    }
}

/// Without shifting on duplicate blocks the registers stop at the first
/// duplicate, so claimed paces can trail the notarized maximum by more than
/// one. Logs stay consistent either way.
#[test]
fn frozen_registers_keep_logs_consistent() {
    for seed in 0..10 {
        let cfg = ScenarioConfig { dup_shift: false, ..sweep_config(4, 1, FastlaneKind::Hs, "crash:1@25", seed) };
        let r = run(&cfg);
        assert!(r.completed() && r.logs_agree(), "seed {seed}");
        for kind in [ViolationKind::PrefixConsistency, ViolationKind::Revocation, ViolationKind::Notarizability, ViolationKind::PaceSafety] {
            assert_eq!(r.count(kind), 0, "seed {seed}: {:?}", r.violations);
        }
    }
}

#[test]
fn empty_tail_leaves_last_two_slots_empty() {
    let r = run(&ScenarioConfig { empty_tail: true, esize: 6, tx_count: 80, tx_interval: 1, max_epochs: 1, ..ScenarioConfig::default() });
    let log = r.nodes[0].log_epoch(1);
    assert_eq!(log.len(), 5);
    assert!(log[4].txs.is_empty());
    // Slot 1 goes out before the first injection.
    assert!(log[1..4].iter().all(|b| !b.txs.is_empty()), "{:?}", log.iter().map(|b| b.txs.len()).collect::<Vec<_>>());
}

#[test]
fn silent_leader_epoch_falls_back() {
    // Party 1 leads epoch 2 and never proposes.
    let r = run(&ScenarioConfig { faults: "silent:1".into(), ..ScenarioConfig::default() });
    assert!(r.ok() && r.logs_agree());
    assert!(r.metrics.blocks.iter().filter(|b| b.epoch == 2).all(|b| b.path == Path::Fallback));
    assert!(r.metrics.blocks.iter().any(|b| b.epoch == 3 && b.path == Path::Fastlane));
}

#[test]
fn censorship_timer_interrupts_the_epoch() {
    let cfg = ScenarioConfig {
        censorship_timeout: 30,
        tau: 60,
        esize: 64,
        tx_count: 120,
        tx_interval: 3,
        faults: "censor:0:1".into(),
        ..ScenarioConfig::default()
    };
    let r = run(&cfg);
    assert!(r.ok());
    let recs: Vec<_> = r.live_honest().into_iter().flat_map(|p| r.nodes[p].paces().to_vec()).collect();
    assert!(recs.iter().any(|rec| rec.epoch == 1 && rec.interrupt == Some(Interrupt::Censorship)));
    assert_eq!(r.commit_epoch(1), Some(2));
    assert!(r.nodes[0].log_epoch(1).iter().all(|b| b.txs.iter().all(|t| t.id != 1)));
}

#[test]
fn mutant_is_caught() {
    let r = run(&ScenarioConfig { faults: "mutant:1".into(), max_epochs: 1, ..ScenarioConfig::default() });
    assert!(r.count(ViolationKind::PrefixConsistency) > 0);
    assert!(!r.ok());
}
