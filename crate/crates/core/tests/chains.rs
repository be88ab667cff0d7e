use oncsim::analysis::{chain_duration_pmf, multi_chain_delay, sample_chain_duration};
use oncsim::protocol::Algorithm;
use oncsim::rng::{stream, Purpose};
use oncsim::sim::{run_sim, RunOptions, SimConfig};

/// Chains at receiver 2 in two-receiver ANC runs follow the analytic
/// duration distribution. The analytic model treats every chain in
/// isolation, so agreement is checked in total variation and mean rather
/// than bin by bin.
#[test]
fn protocol_chains_follow_analytic_durations() {
    let mut config = SimConfig::new(Algorithm::Anc, vec![0.25, 0.25]);
    config.m_packets = 300;
    let horizon = 400;
    let mut counts = vec![0u64; horizon];
    let mut n = 0u64;
    for run in 0..300 {
        let out = run_sim(&config, run, &RunOptions::default()).unwrap();
        for c in &out.chains[1] {
            if (c.duration as usize) < horizon {
                counts[c.duration as usize] += 1;
            }
            n += 1;
        }
    }
    let pmf = chain_duration_pmf(0.25, 0.25, horizon as u32).unwrap();
    let freq = |t: usize| counts[t] as f64 / n as f64;
    let tv: f64 = (1..horizon).map(|t| (freq(t) - pmf.p(t as u32)).abs()).sum::<f64>() / 2.0;
    let mean: f64 = (1..horizon).map(|t| t as f64 * freq(t)).sum();
    assert!(n > 5000);
    assert_eq!(counts[0], 0);
    assert!(tv < 0.06, "total variation {tv}");
    assert!((mean / pmf.mean() - 1.0).abs() < 0.05, "mean {mean} vs {}", pmf.mean());
}

#[test]
fn convolution_matches_sampled_sums() {
    let pmf = chain_duration_pmf(0.25, 0.25, 600).unwrap();
    let three = multi_chain_delay(&pmf, 2);
    let mut rng = stream(17, 0, Purpose::Analysis);
    let trials = 1_000_000u64;
    let mut counts = vec![0u64; 601];
    for _ in 0..trials {
        let d: u32 = (0..3).map(|_| sample_chain_duration(0.25, 0.25, &mut rng).unwrap()).sum();
        if d <= 600 {
            counts[d as usize] += 1;
        }
    }
    let mut checked = 0;
    let mut violations = 0;
    for (d, &p) in three.mass.iter().enumerate() {
        if p * (trials as f64) < 25.0 {
            continue;
        }
        checked += 1;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        if (counts[d] as f64 / trials as f64 - p).abs() > 3.0 * sigma {
            violations += 1;
        }
    }
    assert!(checked > 30);
    assert!(violations as f64 <= 0.01 * checked as f64 + 1.0, "{violations} of {checked}");
    assert!(three.tail < 1e-6);
}
