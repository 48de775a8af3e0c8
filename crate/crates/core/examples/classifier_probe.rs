// Temporary: trains the reward classifier exactly as the pipeline does and
// maps its decision boundary over a synthetic state grid, without any RL.
// Args: seed

use regrasp_core::config::RunConfig;
use regrasp_core::pipeline::{collect_demo_set, collect_failure_set, train_reward_classifier};

fn main() {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let cfg = RunConfig::default();
    let demos = collect_demo_set(&cfg, seed).unwrap();
    let failures = collect_failure_set(&cfg, seed).unwrap();
    for (i, ep) in failures.iter().enumerate() {
        let grasped_frames = ep.transitions.iter().filter(|t| t.next_obs[6] == 1.0).count();
        let max_h = ep.transitions.iter().map(|t| t.next_obs[5]).fold(0.0, f64::max);
        let min_ap = ep.transitions.iter().map(|t| t.next_obs[2]).fold(1.0, f64::min);
        println!(
            "failure {i} (variant {}): len {} grasped_frames {grasped_frames} max_h {max_h:.2} min_ap {min_ap:.2}",
            i % 3,
            ep.transitions.len()
        );
    }
    let (model, report) = train_reward_classifier(&cfg, &demos, &failures, seed).unwrap();
    println!(
        "acc {:.3} fpr {:.3} fnr {:.3} (train {} test {})",
        report.accuracy, report.false_positive_rate, report.false_negative_rate, report.n_train, report.n_test
    );

    // grid sweep: vary height and aperture at the grasp site, grasped on/off
    println!("fires on grid (rows h, cols aperture; ee=obj=(0.3,0.2)):");
    for &g in &[1.0, 0.0] {
        println!("  grasped={g}");
        print!("      h\\ap ");
        for ap in [0.0, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0] {
            print!("{ap:>5.1}");
        }
        println!();
        for h in [0.0, 0.05, 0.10, 0.125, 0.15, 0.20] {
            print!("    {h:>6.3}: ");
            for ap in [0.0, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0] {
                let obs = [0.3, 0.2, ap, 0.3, 0.2, h, g];
                print!("{:>5}", if model.predict_reward(&obs) == 1.0 { "1" } else { "." });
            }
            println!();
        }
    }

    // sweep ee/obj positions at h=0 closed, grasped=1 (the hold states)
    println!("fires over workspace at h=0, ap=0.1, grasped=1 (x = obj_x = ee_x):");
    print!("    y\\x  ");
    for x in [-0.8, -0.4, 0.0, 0.2, 0.4, 0.6, 0.8] {
        print!("{x:>5.1}");
    }
    println!();
    for y in [-0.8, -0.4, 0.0, 0.2, 0.4, 0.6, 0.8] {
        print!("    {y:>4.1}: ");
        for x in [-0.8f64, -0.4, 0.0, 0.2, 0.4, 0.6, 0.8] {
            let obs = [x, y, 0.1, x, y, 0.0, 1.0];
            print!("{:>5}", if model.predict_reward(&obs) == 1.0 { "1" } else { "." });
        }
        println!();
    }

    // hold states without the grasped flag
    println!("same sweep with grasped=0:");
    print!("    y\\x  ");
    for x in [-0.8, -0.4, 0.0, 0.2, 0.4, 0.6, 0.8] {
        print!("{x:>5.1}");
    }
    println!();
    for y in [-0.8, -0.4, 0.0, 0.2, 0.4, 0.6, 0.8] {
        print!("    {y:>4.1}: ");
        for x in [-0.8f64, -0.4, 0.0, 0.2, 0.4, 0.6, 0.8] {
            let obs = [x, y, 0.1, x, y, 0.0, 0.0];
            print!("{:>5}", if model.predict_reward(&obs) == 1.0 { "1" } else { "." });
        }
        println!();
    }

    // mismatched ee vs obj (carried object tracks ee, so mismatch = not carrying)
    println!("ee far from obj, closed, grasped=1, h varying (ee=(-0.5,-0.5), obj=(0.3,0.2)):");
    for h in [0.0, 0.05, 0.10, 0.15] {
        let obs = [-0.5, -0.5, 0.1, 0.3, 0.2, h, 1.0];
        println!("    h={h:.2}: {}", model.predict_reward(&obs));
    }
}
