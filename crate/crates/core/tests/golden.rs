use std::path::Path;

use oncsim::channel::parse_pattern;
use oncsim::protocol::Algorithm;
use oncsim::sim::{golden_trace, run_sim, RunOptions, SimConfig, TraceRow};

fn fixture(name: &str) -> Vec<oncsim::channel::ReceptionBitmap> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
    parse_pattern(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn sent(rows: &[TraceRow]) -> Vec<&str> {
    rows.iter().map(|r| r.support.as_str()).collect()
}

#[test]
fn arq_coding_table() {
    let pattern = fixture("table1.pattern");
    let rows = golden_trace(Algorithm::Anc, &pattern, 100).unwrap();
    assert_eq!(
        sent(&rows),
        ["1", "1+2", "2+3", "3+4", "4+5", "4+6", "6+7", "7", "5+8", "8+9", "9", "9+10"]
    );
    for (row, bitmap) in rows.iter().zip(&pattern) {
        let expected: Vec<String> = bitmap.to_string().split(',').map(String::from).collect();
        assert_eq!(row.receptions, expected);
    }
    // Receiver 2 clears its first chain with the uncoded p7.
    assert_eq!(rows[7].newly_decoded[1], "1 2 3 4 6 7");
    assert!(rows[..7].iter().all(|r| r.newly_decoded[1].is_empty()));
    // Receiver 1 never falls behind before slot 7 and decodes on arrival.
    for r in &rows[..6] {
        assert_eq!(r.newly_decoded[0], r.slot.to_string());
    }
}

#[test]
fn systematic_table() {
    let rows = golden_trace(Algorithm::Snc, &fixture("table4.pattern"), 100).unwrap();
    assert_eq!(
        sent(&rows),
        ["1", "2", "3", "4", "5", "6", "7", "1+7", "8", "9", "5+9", "10"]
    );
    assert_eq!(rows[7].support, "1+7");
    assert_eq!(rows[10].support, "5+9");
}

#[test]
fn first_packet_delay_at_receiver_two() {
    let pattern = fixture("table1.pattern");
    let mut config = SimConfig::new(Algorithm::Anc, vec![0.0, 0.0]);
    config.m_packets = 100;
    let options = RunOptions {
        pattern: Some(pattern),
        packets: true,
        ..RunOptions::default()
    };
    let out = run_sim(&config, 0, &options).unwrap();
    let p1 = out
        .packets
        .iter()
        .find(|r| r.receiver == 2 && r.packet == 1)
        .unwrap();
    assert_eq!((p1.first_tx_slot, p1.decode_slot, p1.delay), (1, 8, 7));
    let chain = out.chains[1][0];
    assert_eq!((chain.start_slot, chain.break_slot, chain.duration, chain.size), (1, 8, 6, 5));
}
