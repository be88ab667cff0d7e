use oncsim::channel::ReceptionBitmap;
use oncsim::protocol::{Algorithm, FeedbackModel, FeedbackPolicy};
use oncsim::rng::{stream, Purpose};
use oncsim::sim::{run_batch, run_sim, RunOptions, SimConfig};
use rand::Rng;

fn lossy(fb_loss: f64, fb_delay: u32, policy: FeedbackPolicy) -> FeedbackModel {
    FeedbackModel::Lossy {
        fb_loss,
        fb_delay,
        policy,
    }
}

fn random_pattern(n: usize, slots: usize, seed: u64) -> Vec<ReceptionBitmap> {
    let mut rng = stream(seed, 0, Purpose::Channel);
    (0..slots)
        .map(|_| ReceptionBitmap((0..n).map(|_| rng.gen::<f64>() >= 0.3).collect()))
        .collect()
}

fn sent_supports(config: &SimConfig, pattern: Vec<ReceptionBitmap>) -> Vec<String> {
    let options = RunOptions {
        pattern: Some(pattern),
        trace: true,
        ..RunOptions::default()
    };
    run_sim(config, 0, &options)
        .unwrap()
        .trace
        .into_iter()
        .map(|r| r.support)
        .collect()
}

#[test]
fn lost_reports_with_optimism_still_deliver_everything() {
    for algorithm in Algorithm::ALL {
        let mut config = SimConfig::new(algorithm, vec![0.25; 4]);
        config.m_packets = 50;
        config.runs = 20;
        config.seed = 3;
        config.threshold = algorithm.uses_threshold().then_some(10);
        config.feedback = lossy(0.2, 1, FeedbackPolicy::Optimistic);
        let report = run_batch(&config, &RunOptions::default()).unwrap().report;
        assert_eq!(report.completed_runs, 20, "{algorithm}");
        let decoded: u64 = report.per_receiver.iter().map(|r| r.decoded).sum();
        assert_eq!(decoded, 20 * 4 * 50);
    }
}

#[test]
fn every_policy_terminates() {
    for policy in [
        FeedbackPolicy::Pessimistic,
        FeedbackPolicy::Random { q: 0.5 },
        FeedbackPolicy::Ignore,
    ] {
        let mut config = SimConfig::new(Algorithm::Snc, vec![0.2, 0.3, 0.1]);
        config.m_packets = 40;
        config.runs = 10;
        config.feedback = lossy(0.3, 2, policy);
        let report = run_batch(&config, &RunOptions::default()).unwrap().report;
        assert_eq!(report.completed_runs, 10, "{policy:?}");
    }
}

#[test]
fn silent_pessimism_matches_all_erasures() {
    for algorithm in [Algorithm::Anc, Algorithm::Snc] {
        let mut config = SimConfig::new(algorithm, vec![0.3, 0.3, 0.3]);
        config.m_packets = 20;
        let erased = vec!["E,E,E".parse().unwrap(); 40];
        let expected = sent_supports(&config, erased);
        config.feedback = lossy(1.0, 0, FeedbackPolicy::Pessimistic);
        for seed in 0..5 {
            assert_eq!(sent_supports(&config, random_pattern(3, 40, seed)), expected, "{algorithm}");
        }
    }
}

#[test]
fn lossless_reports_match_perfect_feedback() {
    let pattern = random_pattern(4, 300, 9);
    for algorithm in [Algorithm::Anc, Algorithm::Snc] {
        let mut config = SimConfig::new(algorithm, vec![0.3; 4]);
        config.m_packets = 60;
        let perfect = sent_supports(&config, pattern.clone());
        config.feedback = lossy(0.0, 0, FeedbackPolicy::Pessimistic);
        assert_eq!(sent_supports(&config, pattern.clone()), perfect);
    }
}
