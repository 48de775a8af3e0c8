// Temporary full-scale rehearsal of the acceptance pipeline (one seed):
// demos -> classifier -> BC -> classifier-reward fine-tune -> eval.
// Not shipped; used to pin training budgets before freezing acceptance.
// Args: seed beta fixed|random alpha max_env_steps [auto] [gamma]

use std::time::Instant;

use regrasp_core::config::{RewardKind, RunConfig};
use regrasp_core::env::ResetMode;
use regrasp_core::harness::RewardSource;
use regrasp_core::pipeline::{
    collect_demo_set, collect_failure_set, evaluate, pretrain_actor, train_reward_classifier,
    FinetuneOutcome,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let beta: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let fixed: bool = args.get(3).map_or(false, |s| s == "fixed");
    let alpha: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let max_steps: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let auto: bool = args.get(6).map_or(false, |s| s == "auto");
    let gamma: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(0.99);

    let mut cfg = RunConfig::default();
    cfg.rl.reward = RewardKind::Classifier;
    cfg.rl.hp.beta = beta;
    cfg.rl.hp.alpha = alpha;
    cfg.rl.hp.auto_alpha = auto;
    cfg.rl.hp.gamma = gamma;
    cfg.rl.max_env_steps = max_steps;
    cfg.rl.early_stop = true;
    if fixed {
        cfg.rl.reset = ResetMode::Fixed;
        cfg.eval.reset = ResetMode::Fixed;
        cfg.demos.reset = ResetMode::Random;
    }
    println!(
        "seed={seed} beta={beta} fixed={fixed} alpha={alpha} max_steps={max_steps} auto={auto} gamma={gamma}"
    );

    let t0 = Instant::now();
    let demos = collect_demo_set(&cfg, seed).unwrap();
    let failures = collect_failure_set(&cfg, seed).unwrap();
    let (model, report) = train_reward_classifier(&cfg, &demos, &failures, seed).unwrap();
    println!(
        "[{:6.1}s] classifier: acc {:.3} fpr {:.3} fnr {:.3}",
        t0.elapsed().as_secs_f64(),
        report.accuracy,
        report.false_positive_rate,
        report.false_negative_rate,
    );

    let bc = pretrain_actor(&cfg, &demos, seed).unwrap();
    let bc_eval = evaluate(&cfg, &bc.params, seed).unwrap();
    println!(
        "[{:6.1}s] bc: eval SR {:.1}% mean CT {:?}",
        t0.elapsed().as_secs_f64(),
        100.0 * bc_eval.success_rate,
        bc_eval.mean_ct
    );

    let tf = Instant::now();
    // drive the harness manually so we can probe eval SR/CT during training
    let hc = cfg.harness_config(RewardSource::Classifier(model.clone()));
    let mut harness =
        regrasp_core::harness::Harness::new(hc, bc.params.clone(), &demos, seed, false).unwrap();
    let mut next_probe = 5_000u64;
    while !harness.should_stop() {
        harness.run_one_episode().unwrap();
        if harness.driver.env_steps >= next_probe {
            let probe = evaluate(&cfg, &harness.driver.state.actor, seed).unwrap();
            println!(
                "  probe @{:>6} env steps: SR {:.1}% CT {:?}",
                harness.driver.env_steps,
                100.0 * probe.success_rate,
                probe.mean_ct
            );
            next_probe += 5_000;
        }
    }
    let outcome = FinetuneOutcome {
        final_actor: harness.driver.state.actor.clone(),
        env_steps: harness.driver.env_steps,
        episodes_done: harness.driver.episodes_done,
        update_count: harness.driver.state.update_count,
        last_lambda: harness.driver.state.last_lambda,
        metrics: harness.driver.metrics,
        episode_rows: harness.driver.episode_rows,
        async_stats: None,
    };
    println!(
        "[{:6.1}s] finetune: {} env steps, {} episodes, {} updates in {:.1}s ({:.1} ms/update)",
        t0.elapsed().as_secs_f64(),
        outcome.env_steps,
        outcome.episodes_done,
        outcome.update_count,
        tf.elapsed().as_secs_f64(),
        1000.0 * tf.elapsed().as_secs_f64() / outcome.update_count.max(1) as f64
    );

    // traces per 1k updates: lambda mean, entropy term (alpha times -log pi), bc term
    println!("trace (per 1k updates): lambda | entropy_term | bc_term");
    for (k, chunk) in outcome.metrics.chunks(1000).enumerate() {
        let lam = chunk.iter().map(|m| m.lambda).sum::<f64>() / chunk.len() as f64;
        let ent = chunk.iter().map(|m| m.entropy_term).sum::<f64>() / chunk.len() as f64;
        let bct = chunk.iter().map(|m| m.bc_term).sum::<f64>() / chunk.len() as f64;
        println!("  {:>3}k: {:.3} | {:+.4} | {:.4}", k + 1, lam, ent, bct);
    }
    let lams: Vec<f64> = outcome.metrics.iter().map(|m| m.lambda).collect();
    if !lams.is_empty() {
        let peak = lams.iter().cloned().fold(f64::MIN, f64::max);
        let tail = &lams[lams.len() - lams.len() / 10..];
        let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
        println!(
            "lambda: first {:.3} peak {:.3} final-10%-mean {:.4}",
            lams[0], peak, tail_mean
        );
    }
    let n = outcome.episode_rows.len();
    for chunk in outcome.episode_rows.chunks((n / 10).max(1)) {
        let sr = chunk.iter().filter(|r| r.success).count() as f64 / chunk.len() as f64;
        print!("{:.0}% ", 100.0 * sr);
    }
    println!("(training rolling SR by decile)");

    let ft_eval = evaluate(&cfg, &outcome.final_actor, seed).unwrap();
    println!(
        "[{:6.1}s] finetuned eval: SR {:.1}% mean CT {:?}  (bc SR {:.1}% CT {:?})",
        t0.elapsed().as_secs_f64(),
        100.0 * ft_eval.success_rate,
        ft_eval.mean_ct,
        100.0 * bc_eval.success_rate,
        bc_eval.mean_ct
    );

    // critic speed-slope probe: at fresh approach states, do the critics
    // prefer faster, equal, or slower versions of the policy's own action?
    {
        let spec = cfg.harness_config(RewardSource::Oracle).actor_spec();
        let critic_spec = regrasp_core::net::MlpSpec::new(
            regrasp_core::OBS_DIM + regrasp_core::ACT_DIM,
            &cfg.rl.hidden_dims,
            1,
            regrasp_core::net::Activation::Relu,
        );
        let mut env = regrasp_core::env::GraspEnv::new(cfg.env);
        let mut d_fast_sum = 0.0;
        let mut d_slow_sum = 0.0;
        let mut count = 0u32;
        for trial in 0..10u64 {
            let ep_seed = regrasp_core::seeding::derive_seed(
                seed,
                regrasp_core::seeding::Domain::Eval,
                900 + trial,
            );
            let mut obs = env.reset(ep_seed, cfg.rl.reset);
            for _ in 0..12 {
                let batch = regrasp_core::net::sample_policy_batch(
                    &outcome.final_actor,
                    &spec,
                    &obs,
                    1,
                    None,
                )
                .unwrap();
                let mut base = [0.0; regrasp_core::ACT_DIM];
                base.copy_from_slice(&batch.actions);
                let variants: [[f64; 3]; 3] = [
                    [base[0] * 0.75, base[1] * 0.75, base[2]],
                    base,
                    [
                        (base[0] * 1.3).clamp(-1.0, 1.0),
                        (base[1] * 1.3).clamp(-1.0, 1.0),
                        base[2],
                    ],
                ];
                let mut q = [0.0f64; 3];
                for (k, a) in variants.iter().enumerate() {
                    let mut input = Vec::with_capacity(10);
                    input.extend_from_slice(&obs);
                    input.extend_from_slice(a);
                    let mut acc = 0.0;
                    for critic in &harness.driver.state.critics {
                        let out =
                            regrasp_core::net::forward(critic, &critic_spec, &input).unwrap();
                        acc += out[0];
                    }
                    q[k] = acc / harness.driver.state.critics.len() as f64;
                }
                d_slow_sum += q[0] - q[1];
                d_fast_sum += q[2] - q[1];
                count += 1;
                let (next, _r, done) = env.step(base).unwrap();
                obs = next;
                if done {
                    break;
                }
            }
        }
        println!(
            "critic speed slope over {count} approach states: mean Q(fast)-Q(own) = {:+.4}, mean Q(slow)-Q(own) = {:+.4}",
            d_fast_sum / f64::from(count),
            d_slow_sum / f64::from(count)
        );
    }

    // classifier timing probe: on stochastic rollouts of the final actor,
    // when does the classifier fire relative to oracle success?
    {
        use regrasp_core::seeding::{derive_seed, Domain};
        let spec = cfg.harness_config(RewardSource::Oracle).actor_spec();
        let mut env = regrasp_core::env::GraspEnv::new(cfg.env);
        let (mut fired_early, mut fired_at, mut fired_late, mut missed, mut no_oracle) =
            (0u32, 0u32, 0u32, 0u32, 0u32);
        let mut late_sum = 0i64;
        for trial in 0..100u64 {
            let ep_seed = derive_seed(seed, Domain::FailureRollout, 77_000 + trial);
            let mut obs = env.reset(ep_seed, cfg.rl.reset);
            let mut noise_rng = regrasp_core::seeding::rng_for(ep_seed, Domain::ActionNoise, 1);
            let mut oracle_step: Option<u32> = None;
            let mut fire_step: Option<u32> = None;
            for step in 0..cfg.env.horizon {
                let mut noise = vec![0.0; regrasp_core::ACT_DIM];
                for v in noise.iter_mut() {
                    *v = rand_distr::Distribution::sample(
                        &rand_distr::StandardNormal,
                        &mut noise_rng,
                    );
                }
                let batch = regrasp_core::net::sample_policy_batch(
                    &outcome.final_actor,
                    &spec,
                    &obs,
                    1,
                    Some(&noise),
                )
                .unwrap();
                let mut a = [0.0; regrasp_core::ACT_DIM];
                a.copy_from_slice(&batch.actions);
                let (next, reward, done) = env.step(a).unwrap();
                if reward == 1.0 && oracle_step.is_none() {
                    oracle_step = Some(step);
                }
                if model.predict_reward(&next) == 1.0 && fire_step.is_none() {
                    fire_step = Some(step);
                    if oracle_step.is_none() && fired_early + no_oracle < 8 {
                        println!(
                            "  early fire obs: ee=({:+.2},{:+.2}) ap={:.2} obj=({:+.2},{:+.2}) h={:.2} g={:.0}",
                            next[0], next[1], next[2], next[3], next[4], next[5], next[6]
                        );
                    }
                }
                obs = next;
                if done || (oracle_step.is_some() && fire_step.is_some()) {
                    break;
                }
            }
            match (oracle_step, fire_step) {
                (Some(o), Some(f)) if f < o => fired_early += 1,
                (Some(o), Some(f)) if f == o => fired_at += 1,
                (Some(o), Some(f)) => {
                    fired_late += 1;
                    late_sum += i64::from(f - o);
                }
                (Some(_), None) => missed += 1,
                (None, Some(_)) => {
                    fired_early += 1;
                    no_oracle += 1;
                }
                (None, None) => no_oracle += 1,
            }
        }
        println!(
            "classifier timing over 100 stochastic rollouts: early {fired_early} at-success {fired_at} late {fired_late} (mean lateness {:.1}) missed {missed} no-oracle {no_oracle}",
            late_sum as f64 / f64::from(fired_late.max(1))
        );
    }

    // deterministic single-episode state traces: where do the steps go?
    for (name, actor) in [("bc", &bc.params), ("ft", &outcome.final_actor)] {
        let spec = cfg.harness_config(RewardSource::Oracle).actor_spec();
        let mut env = regrasp_core::env::GraspEnv::new(cfg.env);
        let mut obs = env.reset(
            regrasp_core::seeding::derive_seed(seed, regrasp_core::seeding::Domain::Eval, 0),
            cfg.eval.reset,
        );
        println!("{name} trace (step: ee | aperture | d(obj) | h):");
        for step in 0..cfg.env.horizon {
            let batch =
                regrasp_core::net::sample_policy_batch(actor, &spec, &obs, 1, None).unwrap();
            let mut a = [0.0; regrasp_core::ACT_DIM];
            a.copy_from_slice(&batch.actions);
            let (next, reward, done) = env.step(a).unwrap();
            if step % 5 == 0 || done {
                let d = ((next[0] - next[3]).powi(2) + (next[1] - next[4]).powi(2)).sqrt();
                println!(
                    "  {:>3}: ({:+.2},{:+.2}) | {:.2} | {:.3} | {:.2} | a=({:+.2},{:+.2},{:+.2})",
                    step + 1, next[0], next[1], next[2], d, next[5], a[0], a[1], a[2]
                );
            }
            obs = next;
            if done {
                println!("  done at {} reward {}", step + 1, reward);
                break;
            }
        }
    }
}
