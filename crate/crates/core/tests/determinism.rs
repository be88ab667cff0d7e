use oncsim::protocol::Algorithm;
use oncsim::sim::{run_batch, run_sim, RunOptions, SimConfig};

fn config(seed: u64) -> SimConfig {
    let mut c = SimConfig::new(Algorithm::Snct, vec![0.25, 0.2, 0.15, 0.1]);
    c.threshold = Some(10);
    c.m_packets = 50;
    c.runs = 12;
    c.seed = seed;
    c
}

fn report_json(c: &SimConfig) -> String {
    let options = RunOptions {
        packets: true,
        ..RunOptions::default()
    };
    let batch = run_batch(c, &options).unwrap();
    serde_json::to_string(&batch.report).unwrap() + &serde_json::to_string(&batch.packets).unwrap()
}

#[test]
fn same_seed_same_bytes() {
    assert_eq!(report_json(&config(5)), report_json(&config(5)));
    assert_ne!(report_json(&config(5)), report_json(&config(6)));
}

#[test]
fn single_run_batch_equals_run() {
    let mut c = config(8);
    c.runs = 1;
    let batch = run_batch(&c, &RunOptions::default()).unwrap().report;
    let single = run_sim(&c, 0, &RunOptions::default()).unwrap().report();
    assert_eq!(batch, single);
}

#[test]
fn config_round_trips_through_json() {
    let c = config(11);
    let back: oncsim::sim::SimConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(back, c);
    assert_eq!(report_json(&back), report_json(&c));
}
