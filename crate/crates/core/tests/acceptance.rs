//! Acceptance suite: ten numbered criteria, one pass/fail line each.
//!
//! Runs as a plain binary (no libtest harness) so the lines are printed even
//! when `cargo test` captures output. Exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use dualphase::codec::AdaptationMode;
use dualphase::cqi::bandit::{BanditTraining, BanditWorld};
use dualphase::cqi::dqn::{dqn_loss, td_target, AgentParams};
use dualphase::cqi::qnet::Gradients;
use dualphase::cqi::{train_alternating, CqiConfig, DqnAgent, Experience, QNetwork, UniformQuantizer};
use dualphase::harness::config::ConfigFile;
use dualphase::harness::episode::{run_trials, FeedbackPolicy, Link, PreparedTrial};
use dualphase::harness::metrics::{fmt_sig, paired_not_worse, Z_95};
use dualphase::harness::scenario::{build_fig6_scenarios, scenario_group, FeedbackMode, ScenarioConfig};
use dualphase::harness::sweep::{run_sweep, SweepGrid};
use dualphase::phy::{apply_channel, frequency_correlation, sample_channel_process, ChannelProcessConfig, ChannelRealization, OfdmConfig, OfdmModem, SymbolBlock};
use dualphase::receiver::{ls_estimate, EstimationMethod, LmmseFilter};
use dualphase::rng::{complex_gaussian, stream};
use dualphase::snr::eesm_effective_snr;
use dualphase::Complex64;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// ---------------------------------------------------------------- 1: PHY

fn phy() -> Check {
    let cfg = OfdmConfig::default();
    let modem = OfdmModem::new(&cfg).map_err(|e| e.to_string())?;
    let pilot = vec![Complex64::new(1.0, 0.0); cfg.n_subcarriers];
    let mut rng = stream(1);
    let random_block = |rng: &mut _| {
        let rows: Vec<Vec<Complex64>> = (0..cfg.n_data_symbols)
            .map(|_| (0..cfg.n_subcarriers).map(|_| complex_gaussian(rng, 1.0)).collect())
            .collect();
        SymbolBlock::from_rows(&rows).unwrap()
    };

    let block = random_block(&mut rng);
    let frame = modem.modulate(&block, &pilot).map_err(|e| e.to_string())?;
    let (back, pilots) = modem.demodulate(&frame).map_err(|e| e.to_string())?;
    let round_trip = block
        .symbols
        .iter()
        .zip(&back.symbols)
        .chain(pilots.iter().flatten().zip(pilot.iter().cycle()))
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);

    // Y_k = H_k X_k on every data and pilot symbol when the taps fit the prefix
    let mut relation = 0.0f64;
    for _ in 0..100 {
        let n_taps = rng.random_range(1..=cfg.cp_length + 1);
        let taps: Vec<Complex64> = (0..n_taps).map(|_| complex_gaussian(&mut rng, 1.0 / n_taps as f64)).collect();
        let ch = ChannelRealization::new(taps, cfg.n_subcarriers, 0.0);
        let block = random_block(&mut rng);
        let frame = modem.modulate(&block, &pilot).map_err(|e| e.to_string())?;
        let rx = apply_channel(&frame, &ch, &mut rng).map_err(|e| e.to_string())?;
        let (y, pilots) = modem.demodulate(&rx).map_err(|e| e.to_string())?;
        for t in 0..cfg.n_data_symbols {
            for k in 0..cfg.n_subcarriers {
                relation = relation.max((y.get(t, k) - ch.freq_response[k] * block.get(t, k)).norm());
            }
        }
        for row in &pilots {
            for k in 0..cfg.n_subcarriers {
                relation = relation.max((row[k] - ch.freq_response[k] * pilot[k]).norm());
            }
        }
    }
    ensure(
        round_trip <= 1e-9 && relation <= 1e-8,
        format!("round trip max err {round_trip:.2e} (<= 1e-9), Y=HX max err over 100 channels {relation:.2e} (<= 1e-8)"),
    )
}

// ---------------------------------------------------------------- 2: EESM

/// Exponential effective SNR evaluated directly on the dB values.
fn eesm_scalar(db: &[f64], beta: f64) -> f64 {
    let m = db.iter().map(|g| (-g / beta).exp()).sum::<f64>() / db.len() as f64;
    -beta * m.ln()
}

fn eesm() -> Check {
    let mut fixed = 0.0f64;
    for g in [-10.0, 0.0, 3.0, 17.25, 40.0] {
        let v = eesm_effective_snr(&vec![g; 64], 5.0).map_err(|e| e.to_string())?;
        fixed = fixed.max((v - g).abs());
    }
    let pair = eesm_effective_snr(&[0.0, 20.0], 5.0).map_err(|e| e.to_string())?;
    let scalar = eesm_scalar(&[0.0, 20.0], 5.0);

    let mut rng = stream(2);
    let (mut bound_fail, mut mono_fail) = (0, 0);
    for _ in 0..10_000 {
        let n = rng.random_range(1..=64);
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0..40.0)).collect();
        let eff = eesm_effective_snr(&v, 5.0).map_err(|e| e.to_string())?;
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        if !(eff >= lo - 1e-9 && eff <= mean(&v) + 1e-9) {
            bound_fail += 1;
        }
        let i = rng.random_range(0..n);
        v[i] += rng.random_range(0.0..10.0);
        if eesm_effective_snr(&v, 5.0).map_err(|e| e.to_string())? < eff - 1e-12 {
            mono_fail += 1;
        }
    }
    ensure(
        fixed <= 1e-9 && (pair - 3.375).abs() <= 1e-3 && (pair - scalar).abs() <= 1e-9 && bound_fail == 0 && mono_fail == 0,
        format!(
            "fixed point err {fixed:.1e}; [0,20] dB -> {pair:.4} dB (scalar {scalar:.4}); bound violations {bound_fail}, monotonicity violations {mono_fail} of 1e4"
        ),
    )
}

// ---------------------------------------------------------------- 3: estimation

fn estimation() -> Check {
    let cfg = OfdmConfig::default();
    let modem = OfdmModem::new(&cfg).map_err(|e| e.to_string())?;
    let channel = ChannelProcessConfig::default();
    let l_f = cfg.n_subcarriers;
    let corr = frequency_correlation(&channel.power_delay_profile, l_f);
    let pilot = vec![Complex64::new(1.0, 0.0); l_f];
    let block = SymbolBlock::zeros(&cfg, 0, 0);
    let frame = modem.modulate(&block, &pilot).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, noise) in [0.01, 0.1, 1.0].into_iter().enumerate() {
        let filter = LmmseFilter::new(&corr, l_f, noise / cfg.n_pilot_symbols as f64, 1.0).map_err(|e| e.to_string())?;
        let mut rng = stream(30 + i as u64);
        let (mut ls_err, mut lm_err) = (Vec::with_capacity(10_000), Vec::with_capacity(10_000));
        for _ in 0..10_000 {
            let ch = &sample_channel_process(&channel, 1, l_f, noise, &mut rng).map_err(|e| e.to_string())?[0];
            let rx = apply_channel(&frame, ch, &mut rng).map_err(|e| e.to_string())?;
            let (_, pilots) = modem.demodulate(&rx).map_err(|e| e.to_string())?;
            let ls = ls_estimate(&pilots, &pilot).map_err(|e| e.to_string())?;
            let lm = filter.apply(&ls);
            let err = |v: &[Complex64]| v.iter().zip(&ch.freq_response).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / l_f as f64;
            ls_err.push(err(&ls.values));
            lm_err.push(err(&lm.values));
        }
        let cmp = paired_not_worse(&lm_err, &ls_err, Z_95);
        ok &= cmp.holds();
        lines.push(format!(
            "sigma2 {noise}: LMMSE {} vs LS {} (diff upper {})",
            fmt_sig(mean(&lm_err), 4),
            fmt_sig(mean(&ls_err), 4),
            fmt_sig(cmp.upper, 3)
        ));
    }
    ensure(ok, lines.join("; "))
}

// ---------------------------------------------------------------- 4: codec oracle

/// Powers minimising `sum v_j n / (p_j + n)` subject to `sum p_j = budget`:
/// `p_j = max(0, sqrt(v_j n / mu) - n)` with `mu` found by bisection.
fn oracle_waterfill(v: &[f64], n: f64, budget: f64) -> Vec<f64> {
    let alloc = |s: f64| -> Vec<f64> { v.iter().map(|&vj| ((vj * n).sqrt() * s - n).max(0.0)).collect() };
    // s = 1 / sqrt(mu); total power is increasing in s
    let (mut lo, mut hi) = (0.0, 1.0);
    while alloc(hi).iter().sum::<f64>() < budget {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if alloc(mid).iter().sum::<f64>() < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    alloc(0.5 * (lo + hi))
}

fn codec_oracle() -> Check {
    let s = ScenarioConfig {
        channel: ChannelProcessConfig::flat(),
        estimator: EstimationMethod::Oracle,
        ..ScenarioConfig::default()
    };
    let link = Link::new(&s).map_err(|e| e.to_string())?;
    let power = s.ofdm.power_budget;
    let block_power = s.ofdm.symbols_per_block() as f64 * power;
    let mut lines = Vec::new();
    let mut ok = true;
    for snr in [0.0, 10.0, 20.0] {
        for (cbr, name) in [(1.0 / 24.0, "1/24"), (1.0 / 12.0, "1/12")] {
            let recs = run_trials(&link, &FeedbackPolicy::Perfect, cbr, snr, 1000, 4).map_err(|e| e.to_string())?;
            let sim = mean(&recs.iter().map(|r| r.mse).collect::<Vec<_>>());

            // layout of kept coefficients does not depend on the source draw
            let trial = PreparedTrial::prepare(&link, cbr, snr, snr, 4).map_err(|e| e.to_string())?;
            let n = power / (2.0 * 10f64.powf(snr / 10.0));
            let mut total = 0.0;
            let mut kept_var = 0.0;
            for (l, enc) in trial.layers.iter().enumerate() {
                for plan in &enc.plans {
                    let p = oracle_waterfill(&plan.variances, n, block_power);
                    total += plan.variances.iter().zip(&p).map(|(v, p)| v * n / (p + n)).sum::<f64>();
                    kept_var += plan.variances.iter().sum::<f64>();
                }
                total += trial.source.layer(l).1.iter().sum::<f64>();
            }
            let expected = (total - kept_var) / trial.source.len() as f64;
            let rel = sim / expected - 1.0;
            ok &= rel.abs() < 0.05;
            lines.push(format!("{snr} dB cbr {name}: {:+.2}%", 100.0 * rel));
        }
    }
    ensure(ok, format!("simulated vs oracle MSE (< 5%): {}", lines.join(", ")))
}

// ---------------------------------------------------------------- 5: ablation

fn ablation() -> Check {
    let group2 = build_fig6_scenarios(&ScenarioConfig::default())
        .into_iter()
        .enumerate()
        .find(|(i, _)| scenario_group(*i) == 1)
        .map(|(_, s)| s)
        .expect("group 2 present");
    let mut mse = Vec::new();
    for mode in AdaptationMode::ALL {
        let link = Link::new(&ScenarioConfig { mode, ..group2.clone() }).map_err(|e| e.to_string())?;
        let recs = run_trials(&link, &FeedbackPolicy::Perfect, group2.cbr, group2.avg_snr_db, 1000, 55).map_err(|e| e.to_string())?;
        mse.push(recs.iter().map(|r| r.mse).collect::<Vec<_>>());
    }
    let [both, coarse, fine, neither] = [&mse[0], &mse[1], &mse[2], &mse[3]];
    let checks = [
        ("both<=coarse-only", paired_not_worse(both, coarse, Z_95)),
        ("both<=fine-only", paired_not_worse(both, fine, Z_95)),
        ("fine-only<=neither", paired_not_worse(fine, neither, Z_95)),
    ];
    let means = format!(
        "means both {} coarse {} fine {} neither {}",
        fmt_sig(mean(both), 4),
        fmt_sig(mean(coarse), 4),
        fmt_sig(mean(fine), 4),
        fmt_sig(mean(neither), 4)
    );
    let detail: Vec<String> = checks.iter().map(|(n, c)| format!("{n} upper {}", fmt_sig(c.upper, 3))).collect();
    ensure(checks.iter().all(|(_, c)| c.holds()), format!("{means}; {}", detail.join(", ")))
}

// ---------------------------------------------------------------- 6: DQN

fn flat_grad(g: &Gradients, mut i: usize) -> f64 {
    for l in &g.layers {
        if i < l.weights.len() {
            return l.weights[i];
        }
        i -= l.weights.len();
        if i < l.bias.len() {
            return l.bias[i];
        }
        i -= l.bias.len();
    }
    panic!("gradient index out of range")
}

fn dqn() -> Check {
    let mut rng = stream(6);
    let sizes = [5, 16, 8, 3];
    let net = QNetwork::random(&sizes, &mut rng);
    let target = QNetwork::random(&sizes, &mut rng);
    let state = |rng: &mut _| (0..5).map(|_| dualphase::rng::gaussian(rng)).collect::<Vec<f64>>();
    let batch: Vec<Experience> = (0..8)
        .map(|i| Experience {
            state: state(&mut rng),
            action: i % 3,
            reward: dualphase::rng::gaussian(&mut rng),
            next: (i % 4 != 0).then(|| state(&mut rng)),
        })
        .collect();
    let refs: Vec<&Experience> = batch.iter().collect();
    let (_, grads) = dqn_loss(&refs, &net, &target, 0.9);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let i = rng.random_range(0..net.n_params());
        let (mut up, mut down) = (net.clone(), net.clone());
        *up.param_mut(i) += h;
        *down.param_mut(i) -= h;
        let fd = (dqn_loss(&refs, &up, &target, 0.9).0 - dqn_loss(&refs, &down, &target, 0.9).0) / (2.0 * h);
        let an = flat_grad(&grads, i);
        let scale = an.abs().max(fd.abs());
        if scale > 1e-10 {
            worst = worst.max((an - fd).abs() / scale);
        }
    }

    // target net Q(next) = [2, 0.5] regardless of input
    let mut fixed = QNetwork::zeros(&[1, 2]);
    fixed.layers[0].bias = vec![2.0, 0.5];
    let e = Experience {
        state: vec![0.0],
        action: 0,
        reward: 1.0,
        next: Some(vec![0.0]),
    };
    let boot = td_target(&e, &fixed, 0.9);
    let term = td_target(&Experience { next: None, ..e.clone() }, &fixed, 0.9);

    let period = 5;
    let mut agent = DqnAgent::new(
        QNetwork::random(&[2, 8, 2], &mut rng),
        AgentParams {
            replay_capacity: 100,
            batch_size: 4,
            target_sync_interval: period,
            discount: 0.9,
            step_size: 1e-2,
        },
    );
    for i in 0..20 {
        agent.replay.push(Experience {
            state: vec![i as f64 * 0.1, 1.0],
            action: i % 2,
            reward: i as f64,
            next: None,
        });
    }
    let frozen = agent.target.clone();
    let mut frozen_ok = true;
    for _ in 0..period - 1 {
        agent.learn(&mut rng).map_err(|e| e.to_string())?;
        frozen_ok &= agent.target == frozen && agent.net != frozen;
    }
    agent.learn(&mut rng).map_err(|e| e.to_string())?;
    let synced = agent.target == agent.net && agent.syncs() == 1;
    ensure(
        worst < 1e-4 && boot == 1.0 + 0.9 * 2.0 && (boot - 2.8).abs() < 1e-12 && term == 1.0 && frozen_ok && synced,
        format!(
            "gradient check worst rel err {worst:.2e} (< 1e-4); targets {boot} (2.8) and terminal {term} (1); target frozen for {} updates {frozen_ok}, synced at {period} {synced}",
            period - 1
        ),
    )
}

// ---------------------------------------------------------------- 7: bandit

fn bandit() -> Check {
    let world = BanditWorld::default();
    let agent = world.train(&BanditTraining::default(), 7).map_err(|e| e.to_string())?;
    let switches = world.policy_switch_points(&agent.net, 0.01);
    let best = world.optimal_threshold(0.01);
    match switches.as_slice() {
        [t] => ensure((t - best).abs() <= 0.5, format!("learned threshold {t:.2} dB, exhaustive optimum {best:.2} dB")),
        other => Err(format!("expected one switch point, policy switches at {other:?} (optimum {best:.2} dB)")),
    }
}

// ---------------------------------------------------------------- 8: learned CQI

fn training_config(bits: u32) -> Result<(ScenarioConfig, u64), String> {
    let file = ConfigFile::parse(include_str!("../configs/train_cqi.toml")).map_err(|e| e.to_string())?;
    let mut s = file.scenario().map_err(|e| e.to_string())?;
    s.cqi.bits = bits;
    Ok((s.clone(), s.seed))
}

fn learned_cqi() -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for bits in [1, 3] {
        let (s, seed) = training_config(bits)?;
        let policy = train_alternating(&s.cqi, &s, seed).map_err(|e| e.to_string())?.policy;
        let link = Link::new(&s).map_err(|e| e.to_string())?;
        let [lo, hi] = s.cqi.inst_snr_range_db;
        let learned = FeedbackPolicy::Learned(Box::new(policy));
        let baseline = if bits == 1 {
            FeedbackPolicy::Uniform(UniformQuantizer::new(lo, hi, 1).map_err(|e| e.to_string())?)
        } else {
            FeedbackPolicy::Perfect
        };
        for snr in [2.5, 10.0] {
            let run = |p: &FeedbackPolicy| -> Result<Vec<f64>, String> {
                Ok(run_trials(&link, p, s.cbr, snr, 2000, 99)
                    .map_err(|e| e.to_string())?
                    .iter()
                    .map(|r| r.mse)
                    .collect())
            };
            let (rl, base) = (run(&learned)?, run(&baseline)?);
            if bits == 1 {
                let c = paired_not_worse(&rl, &base, Z_95);
                ok &= c.holds();
                lines.push(format!(
                    "B=1 {snr} dB: RL {} vs uniform {} (diff upper {})",
                    fmt_sig(mean(&rl), 5),
                    fmt_sig(mean(&base), 5),
                    fmt_sig(c.upper, 3)
                ));
            } else {
                let gap = mean(&rl) / mean(&base) - 1.0;
                ok &= gap < 0.05;
                lines.push(format!("B=3 {snr} dB: gap to perfect {:+.2}% (< 5%)", 100.0 * gap));
            }
        }
    }
    ensure(ok, lines.join("; "))
}

// ---------------------------------------------------------------- 9: tables

fn tables() -> Check {
    let cfg = CqiConfig::default();
    let avg = cfg.avg_quantizer();
    let cqi = avg.index(1.0);
    let back = avg.midpoint(cqi);
    let q = |lo, hi, bits| UniformQuantizer::new(lo, hi, bits).map(|q| q.midpoints()).map_err(|e| e.to_string());
    let avg3 = q(0.0, 20.0, 3)?;
    let inst1 = q(-5.0, 25.0, 1)?;
    let inst3 = q(-5.0, 25.0, 3)?;
    let ok = cqi == 0
        && back == 1.25
        && avg.midpoints() == avg3
        && avg3 == [1.25, 3.75, 6.25, 8.75, 11.25, 13.75, 16.25, 18.75]
        && inst1 == [2.5, 17.5]
        && inst3 == [-3.125, 0.625, 4.375, 8.125, 11.875, 15.625, 19.375, 23.125];
    ensure(ok, format!("1.0 dB -> CQI {cqi} -> {back} dB; avg 3-bit {avg3:?}; inst 1-bit {inst1:?}; inst 3-bit {inst3:?}"))
}

// ---------------------------------------------------------------- 10: determinism

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = ScenarioConfig {
        n_trials: 40,
        ..ScenarioConfig::default()
    };
    let grid = SweepGrid {
        avg_snr_db: vec![0.0, 10.0],
        cbr: vec![1.0 / 24.0, 1.0 / 12.0],
        feedback: vec![FeedbackMode::Perfect, FeedbackMode::Uniform { bits: 1 }, FeedbackMode::Average],
    };
    let mut outputs = Vec::new();
    for (i, workers) in [Some(1), None, Some(4), Some(1)].into_iter().enumerate() {
        let path = dir.path().join(format!("sweep{i}.csv"));
        run_sweep(&base, &grid, &path, workers).map_err(|e| e.to_string())?;
        outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    let rows = String::from_utf8_lossy(&outputs[0]).lines().count() - 1;
    ensure(
        outputs.windows(2).all(|w| w[0] == w[1]) && rows == grid.cells(),
        format!("{rows} rows, {} bytes; serial, all-core, 4-worker and serial rerun outputs identical", outputs[0].len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check, Option<Duration>); 10] = [
        ("PHY round trip and Y=HX", phy, Some(Duration::from_secs(5))),
        ("EESM fixed point, value, bounds", eesm, None),
        ("LMMSE no worse than LS", estimation, Some(Duration::from_secs(30))),
        ("codec matches water-filling oracle", codec_oracle, Some(Duration::from_secs(120))),
        ("adaptation ablation ordering", ablation, Some(Duration::from_secs(300))),
        ("DQN gradients, targets, freeze", dqn, None),
        ("bandit threshold near optimum", bandit, Some(Duration::from_secs(300))),
        ("learned CQI vs baselines", learned_cqi, Some(Duration::from_secs(900))),
        ("quantizer tables", tables, None),
        ("sweep determinism", determinism, None),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let over = limit.is_some_and(|l| took > l);
        let (pass, detail) = match result {
            Ok(d) if over => (false, format!("{d}; over time limit {:?}", limit.unwrap())),
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {n:2} {} ({:.1} s) {name}: {detail}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
