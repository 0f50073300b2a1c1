//! Acceptance checks with pinned tolerances. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bdt_core::bolt::FastlaneKind;
use bdt_core::config::ScenarioConfig;
use bdt_core::crypto::{
    erasure_decode, erasure_encode, merkle_build, merkle_verify_at, tpke_setup, tsig_setup, CryptoError, DecShare,
};
use bdt_core::monitor::ViolationKind;
use bdt_core::node::{Interrupt, Path};
use bdt_core::scenario::{run_scenario, RunOptions, RunReport};
use bdt_core::sim::{write_jsonl, DelayRule};
use bdt_core::types::encode_blocks;
use bdt_core::Block;

use common::{run_tcv, sweep_config, sweep_faults};

const SWEEP_SEEDS: u64 = 200;
const SWEEP_BUDGET: Duration = Duration::from_secs(300);
const TCV_INSTANCES: u64 = 500;
const TCV_MEAN_ROUNDS: f64 = 4.0;
const TCV_MAX_ROUNDS: u32 = 30;
const HS_MSGS_PER_BLOCK: u64 = 6;
const RBC_RATIO: (f64, f64) = (2.4, 3.6);
const LATENCY_FACTOR: f64 = 3.0;
const CALLHELP_SEEDS: u64 = 100;

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: u32, name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { id, name, pass, detail }
}

fn run(cfg: &ScenarioConfig) -> RunReport {
    run_scenario(cfg, RunOptions::default()).expect("valid scenario")
}

fn seeds(count: u64) -> impl Iterator<Item = u64> {
    (0..count).map(|s| s * 7919 + 11)
}

#[derive(Default)]
struct SweepTally {
    runs: u64,
    prefix: u64,
    revocation: u64,
    notarizability: u64,
    pace_range: u64,
    pace_entries: u64,
    other: u64,
    incomplete: u64,
    first_failure: Option<String>,
}

fn safety_sweep() -> (SweepTally, Duration) {
    let start = Instant::now();
    let mut t = SweepTally::default();
    for (n, f) in [(4, 1), (7, 2)] {
        for fastlane in [FastlaneKind::Hs, FastlaneKind::Rbc, FastlaneKind::Timeout] {
            for seed in seeds(SWEEP_SEEDS) {
                for (label, faults) in sweep_faults(n, f, seed) {
                    let r = run(&sweep_config(n, f, fastlane, &faults, seed));
                    t.runs += 1;
                    t.prefix += r.count(ViolationKind::PrefixConsistency);
                    t.revocation += r.count(ViolationKind::Revocation);
                    t.notarizability += r.count(ViolationKind::Notarizability);
                    t.pace_range += r.count(ViolationKind::PaceRange);
                    t.pace_entries += r.live_honest().iter().map(|&p| r.nodes[p].paces().len() as u64).sum::<u64>();
                    let counted = [
                        ViolationKind::PrefixConsistency,
                        ViolationKind::Revocation,
                        ViolationKind::Notarizability,
                        ViolationKind::PaceRange,
                    ];
                    t.other += r.safety_violations() - counted.iter().map(|k| r.count(*k)).sum::<u64>();
                    if !r.completed() {
                        t.incomplete += 1;
                    }
                    if (!r.ok() || !r.logs_agree()) && t.first_failure.is_none() {
                        t.first_failure = Some(format!(
                            "{fastlane} n={n} {label} seed {seed}: {:?} {:?}",
                            r.outcome,
                            r.violations.first().map(ToString::to_string)
                        ));
                    }
                }
            }
        }
    }
    (t, start.elapsed())
}

fn tcv_suite() -> Verdict {
    let mut failures = Vec::new();
    let mut rounds = Vec::new();
    for (n, f) in [(4, 1), (7, 2)] {
        for seed in 0..TCV_INSTANCES {
            let run = run_tcv(n, f, seed);
            if !run.terminated() || !run.agreement() || !run.valid() {
                failures.push(format!("n={n} seed {seed}"));
            }
            rounds.extend(run.honest().filter_map(|p| p.decided_round()));
        }
    }
    let mean = rounds.iter().map(|&r| r as f64).sum::<f64>() / rounds.len().max(1) as f64;
    let max = rounds.iter().copied().max().unwrap_or(0);
    let pass = failures.is_empty() && mean <= TCV_MEAN_ROUNDS && max <= TCV_MAX_ROUNDS;
    verdict(
        2,
        "tcv agreement",
        pass,
        format!(
            "{} instances, {} failed {:?}, mean decision round {mean:.2} (<= {TCV_MEAN_ROUNDS}), max {max} (<= {TCV_MAX_ROUNDS})",
            2 * TCV_INSTANCES,
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn steady_config(n: usize, f: usize, fastlane: FastlaneKind, seed: u64) -> ScenarioConfig {
    ScenarioConfig { esize: 12, max_epochs: 1, tx_count: 96, tx_interval: 1, ..sweep_config(n, f, fastlane, "", seed) }
}

fn message_counts() -> Verdict {
    let steady = |n, f, fastlane| -> Vec<u64> {
        seeds(5).filter_map(|seed| run(&steady_config(n, f, fastlane, seed)).metrics.steady_fastlane_msgs()).collect()
    };
    let hs = steady(4, 1, FastlaneKind::Hs);
    let rbc4 = steady(4, 1, FastlaneKind::Rbc);
    let rbc7 = steady(7, 2, FastlaneKind::Rbc);
    let mean = |v: &[u64]| v.iter().sum::<u64>() as f64 / v.len().max(1) as f64;
    let ratio = mean(&rbc7) / mean(&rbc4);
    let pass = hs.len() == 5 && hs.iter().all(|&m| m == HS_MSGS_PER_BLOCK) && rbc4.len() == 5 && rbc7.len() == 5 && (RBC_RATIO.0..=RBC_RATIO.1).contains(&ratio);
    verdict(
        5,
        "message counts",
        pass,
        format!("hs n=4 msgs/block {hs:?} (== {HS_MSGS_PER_BLOCK}); rbc n=4 {rbc4:?}, n=7 {rbc7:?}, ratio {ratio:.2} in {RBC_RATIO:?}"),
    )
}

fn latency_ordering() -> Verdict {
    let mean_latency = |fastlane, path| {
        let rows: Vec<u64> = seeds(10)
            .flat_map(|seed| run(&sweep_config(4, 1, fastlane, "", seed)).metrics.blocks)
            .filter(|b| b.path == path)
            .map(|b| b.latency_rounds)
            .collect();
        rows.iter().sum::<u64>() as f64 / rows.len().max(1) as f64
    };
    let fast = mean_latency(FastlaneKind::Hs, Path::Fastlane);
    let slow = mean_latency(FastlaneKind::Timeout, Path::Fallback);
    verdict(
        6,
        "latency ordering",
        fast > 0.0 && fast * LATENCY_FACTOR < slow,
        format!("fastlane {fast:.1} rounds vs fallback {slow:.1} rounds (need < 1/{LATENCY_FACTOR})"),
    )
}

fn censorship_resilience() -> Verdict {
    let mut missing = Vec::new();
    for (n, f) in [(4, 1), (7, 2)] {
        let batch = 2 * n;
        for seed in seeds(50) {
            let cfg = ScenarioConfig {
                batch,
                tx_count: batch as u64,
                tx_interval: 0,
                max_epochs: 3,
                ..sweep_config(n, f, FastlaneKind::Timeout, "", seed)
            };
            let r = run(&cfg);
            if !r.completed() || !r.uncommitted().is_empty() {
                missing.push(format!("n={n} seed {seed}: {:?}", r.uncommitted()));
            }
        }
    }
    let target = 1;
    let mut late = Vec::new();
    let mut spreads = Vec::new();
    for seed in seeds(20) {
        let cfg = ScenarioConfig {
            censorship_timeout: 30,
            tau: 60,
            esize: 64,
            max_epochs: 3,
            tx_count: 120,
            tx_interval: 3,
            ..sweep_config(4, 1, FastlaneKind::Hs, &format!("censor:0:{target}"), seed)
        };
        let r = run(&cfg);
        let expired = r
            .live_honest()
            .iter()
            .flat_map(|&p| r.nodes[p].paces())
            .filter(|rec| rec.interrupt == Some(Interrupt::Censorship))
            .map(|rec| rec.epoch)
            .min();
        let committed = r.commit_epoch(target);
        match (expired, committed) {
            (Some(e), Some(c)) if c <= e + 2 => spreads.push(c - e),
            _ => late.push(format!("seed {seed}: expired {expired:?} committed {committed:?}")),
        }
    }
    verdict(
        7,
        "censorship resilience",
        missing.is_empty() && late.is_empty(),
        format!(
            "timeout mode: {} of 100 runs left txs out {:?}; censored tx: {} of 20 late {:?}, epochs after expiry {:?}",
            missing.len(),
            missing.iter().take(2).collect::<Vec<_>>(),
            late.len(),
            late.iter().take(2).collect::<Vec<_>>(),
            spreads.iter().max()
        ),
    )
}

/// Payload bytes of a block: proofs differ between parties by construction.
fn payload(blocks: &[Block]) -> Vec<u8> {
    let stripped: Vec<Block> = blocks.iter().map(|b| Block { proof: None, ..b.clone() }).collect();
    encode_blocks(&stripped)
}

fn callhelp() -> Verdict {
    let laggard = 3;
    let mut good = 0;
    let mut failures = Vec::new();
    for seed in seeds(CALLHELP_SEEDS) {
        let rule = DelayRule {
            from: None,
            to: Some(laggard),
            kind: Some("proposal".into()),
            epochs: Some((1, 1)),
            window: None,
            extra: 1_000_000,
        };
        let cfg = ScenarioConfig { delay_rules: vec![rule], ..sweep_config(4, 1, FastlaneKind::Hs, "garbage:2", seed) };
        let r = run(&cfg);
        let node = &r.nodes[laggard];
        let helped = node.log().iter().zip(node.paths()).any(|(b, p)| b.epoch == 1 && *p == Path::Help);
        let mine = payload(node.log_epoch(1));
        let holders = [0, 1].iter().all(|&h| payload(r.nodes[h].log_epoch(1)) == mine);
        if helped && holders && !mine.is_empty() && r.ok() {
            good += 1;
        } else {
            failures.push(format!("seed {seed}: helped={helped} identical={holders} ok={}", r.ok()));
        }
    }
    verdict(
        8,
        "callhelp reconstruction",
        good == CALLHELP_SEEDS,
        format!("{good}/{CALLHELP_SEEDS} laggard logs rebuilt byte-identical {:?}", failures.iter().take(3).collect::<Vec<_>>()),
    )
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n).filter(|m| m.count_ones() as usize == k).map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect()).collect()
}

fn crypto_suite() -> Verdict {
    let mut checks = 0u64;
    let mut errors: Vec<String> = Vec::new();
    let mut check = |ok: bool, what: String| {
        checks += 1;
        if !ok && errors.len() < 5 {
            errors.push(what);
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    for width in 1..=7usize {
        let leaves: Vec<Vec<u8>> = (0..width).map(|i| vec![i as u8; 3 + i]).collect();
        let (root, proofs) = merkle_build(&leaves).expect("non-empty");
        for (i, leaf) in leaves.iter().enumerate() {
            check(merkle_verify_at(&root, leaf, &proofs[i], i, width), format!("merkle {width}: leaf {i}"));
            let mut bad = leaf.clone();
            bad[0] ^= 1;
            check(!merkle_verify_at(&root, &bad, &proofs[i], i, width), format!("merkle {width}: flipped leaf {i}"));
            for j in (0..width).filter(|&j| j != i) {
                check(!merkle_verify_at(&root, leaf, &proofs[i], j, width), format!("merkle {width}: leaf {i} at {j}"));
            }
        }
    }

    for n in 1..=7usize {
        for k in 1..=n {
            let data: Vec<u8> = (0..rng.gen_range(0..200)).map(|_| rng.gen()).collect();
            let frags = erasure_encode(k, n, &data).expect("valid k, n");
            for set in subsets(n, k) {
                let picked: Vec<(usize, Vec<u8>)> = set.iter().map(|&i| (i, frags[i].clone())).collect();
                check(erasure_decode(k, n, &picked).ok().as_deref() == Some(&data[..]), format!("erasure ({k},{n}) {set:?}"));
            }
            for set in subsets(n, k - 1) {
                let picked: Vec<(usize, Vec<u8>)> = set.iter().map(|&i| (i, frags[i].clone())).collect();
                check(matches!(erasure_decode(k, n, &picked), Err(CryptoError::InsufficientFragments { .. })), format!("erasure ({k},{n}) short {set:?}"));
            }
        }
    }

    for n in 1..=7usize {
        for t in 1..=n {
            let (scheme, shares) = tsig_setup(t, n, (n * 10 + t) as u64).expect("valid t, n");
            let msg = format!("tsig {t}/{n}").into_bytes();
            let signed: Vec<_> = shares.iter().map(|s| s.sign_share(&msg)).collect();
            for set in subsets(n, t) {
                let picked: Vec<_> = set.iter().map(|&i| signed[i].clone()).collect();
                let sig = scheme.combine(&msg, &picked);
                check(sig.as_ref().is_ok_and(|s| scheme.verify(&msg, s)), format!("tsig {t}/{n} {set:?}"));
                if let Ok(sig) = sig {
                    check(!scheme.verify(b"other", &sig), format!("tsig {t}/{n} {set:?} other message"));
                }
            }
            for set in subsets(n, t - 1) {
                let picked: Vec<_> = set.iter().map(|&i| signed[i].clone()).collect();
                check(scheme.combine(&msg, &picked).is_err(), format!("tsig {t}/{n} short {set:?}"));
            }
        }
    }

    for n in 1..=7usize {
        for t in 1..=n {
            let (public, secrets) = tpke_setup(t, n, (n * 10 + t) as u64).expect("valid t, n");
            for set in subsets(n, t) {
                // Fresh ciphertext per subset so every combination is computed.
                let msg: Vec<u8> = (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect();
                let ct = public.encrypt(&msg, b"label", &mut rng);
                let picked: Vec<DecShare> = set.iter().map(|&i| secrets[i].dec_share(&ct).expect("well-formed")).collect();
                check(picked.iter().all(|s| public.verify_share(&ct, s)), format!("tpke {t}/{n} share check {set:?}"));
                check(public.decrypt(&ct, &picked).ok() == Some(msg.clone()), format!("tpke {t}/{n} {set:?}"));
                if t > 1 {
                    let short = &picked[..t - 1];
                    check(
                        matches!(public.decrypt(&ct, short), Err(CryptoError::InsufficientShares { .. })),
                        format!("tpke {t}/{n} short {set:?}"),
                    );
                }
            }
            if n >= 2 {
                let ct = public.encrypt(b"x", b"label", &mut rng);
                let other = public.encrypt(b"x", b"label", &mut rng);
                let wrong = secrets[0].dec_share(&other).expect("well-formed");
                check(!public.verify_share(&ct, &wrong), format!("tpke {t}/{n} share for another ciphertext"));
                let mut tampered = ct.clone();
                tampered.body.push(0);
                let shares: Vec<DecShare> = secrets[..t].iter().map(|s| s.dec_share(&tampered).expect("well-formed")).collect();
                check(
                    matches!(public.decrypt(&tampered, &shares), Err(CryptoError::IntegrityFailure)),
                    format!("tpke {t}/{n} tampered ciphertext"),
                );
            }
        }
    }
    verdict(9, "crypto suite", errors.is_empty(), format!("{checks} checks, failures {errors:?}"))
}

fn determinism() -> Verdict {
    let cases = [
        sweep_config(4, 1, FastlaneKind::Hs, "garbage:2", 5),
        sweep_config(7, 2, FastlaneKind::Rbc, "crash:0@20;byz-leader:1", 6),
        sweep_config(4, 1, FastlaneKind::Timeout, "crash:3@0", 7),
    ];
    let render = |cfg: &ScenarioConfig| {
        let r = run_scenario(cfg, RunOptions { trace: true }).expect("valid scenario");
        let mut trace = Vec::new();
        write_jsonl(r.trace.as_deref().unwrap_or_default(), &mut trace).expect("in-memory write");
        (trace, serde_json::to_vec_pretty(&r.metrics).expect("serializable"))
    };
    let mut same = 0;
    let mut bytes = 0;
    for cfg in &cases {
        let (a, b) = (render(cfg), render(cfg));
        bytes += a.0.len() + a.1.len();
        if a == b && !a.0.is_empty() {
            same += 1;
        }
    }
    verdict(10, "determinism", same == cases.len(), format!("{same}/{} scenarios byte-identical ({bytes} bytes compared)", cases.len()))
}

fn main() {
    let started = Instant::now();
    let mut verdicts = Vec::new();

    // Optional criterion ids on the command line restrict the run.
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: u32| only.is_empty() || only.contains(&id);

    if wanted(1) || wanted(3) || wanted(4) {
        let (t, took) = safety_sweep();
        verdicts.push(verdict(
            1,
            "safety sweep",
            t.prefix == 0 && t.revocation == 0 && took < SWEEP_BUDGET,
            format!(
                "{} runs in {:.1}s (< {}s): prefix {} revocation {}; other monitors {} incomplete {} first failure {:?}",
                t.runs,
                took.as_secs_f64(),
                SWEEP_BUDGET.as_secs(),
                t.prefix,
                t.revocation,
                t.other,
                t.incomplete,
                t.first_failure
            ),
        ));
        verdicts.push(verdict(3, "notarizability", t.notarizability == 0, format!("{} violations over {} runs", t.notarizability, t.runs)));
        verdicts.push(verdict(
            4,
            "pace range",
            t.pace_range == 0 && t.pace_entries > 0,
            format!("{} violations over {} transformer entries", t.pace_range, t.pace_entries),
        ));
    }
    let rest: [(u32, fn() -> Verdict); 7] = [
        (2, tcv_suite),
        (5, message_counts),
        (6, latency_ordering),
        (7, censorship_resilience),
        (8, callhelp),
        (9, crypto_suite),
        (10, determinism),
    ];
    for (id, check) in rest {
        if wanted(id) {
            verdicts.push(check());
        }
    }

    verdicts.sort_by_key(|v| v.id);
    for v in &verdicts {
        println!("criterion {:>2} {:<24} {} | {}", v.id, v.name, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!("acceptance: {} passed, {failed} failed in {:.1}s", verdicts.len() - failed, started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
