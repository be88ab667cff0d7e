//! Named experiment sweeps.

use oncsim::protocol::Algorithm;
use oncsim::sim::SimConfig;
use thiserror::Error;

pub const DEFAULT_RUNS: u64 = 100;

/// Thresholds of the delay sweep; `None` is no threshold.
pub const FIG3_THRESHOLDS: [Option<u32>; 6] = [None, Some(40), Some(20), Some(10), Some(5), Some(2)];

pub const FIG4_RECEIVERS: [usize; 4] = [2, 4, 8, 16];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown preset {0:?} (expected one of fig3, fig4, fig5)")]
pub struct UnknownPreset(pub String);

/// One configuration of a sweep with the label of its sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetEntry {
    pub scenario: String,
    pub config: SimConfig,
}

fn entry(scenario: String, algorithm: Algorithm, epsilons: Vec<f64>, threshold: Option<u32>) -> PresetEntry {
    let mut config = SimConfig::new(algorithm, epsilons);
    config.threshold = threshold;
    config.runs = DEFAULT_RUNS;
    PresetEntry { scenario, config }
}

/// Without a threshold the plain algorithms run; with one, their threshold
/// variants.
fn both_algorithms(scenario: &str, epsilons: &[f64], threshold: Option<u32>) -> [PresetEntry; 2] {
    let t = threshold.is_some();
    [Algorithm::Anc, Algorithm::Snc]
        .map(|a| entry(scenario.to_string(), a.with_threshold(t), epsilons.to_vec(), threshold))
}

pub fn fig5_cases() -> [(&'static str, Vec<f64>); 4] {
    let mut case1 = vec![0.25; 7];
    case1.push(0.15);
    [
        ("case1", case1),
        ("case2", vec![0.25, 0.25, 0.2, 0.2, 0.15, 0.15, 0.1, 0.1]),
        ("case3", vec![0.25; 8]),
        ("case4", vec![0.1; 8]),
    ]
}

/// Expands a preset with seed 0, 100 runs and 100 packets per run.
pub fn preset_expand(name: &str) -> Result<Vec<PresetEntry>, UnknownPreset> {
    let entries = match name {
        "fig3" => FIG3_THRESHOLDS
            .iter()
            .flat_map(|&t| both_algorithms("n=8 eps=0.25", &[0.25; 8], t))
            .collect(),
        "fig4" => FIG4_RECEIVERS
            .iter()
            .flat_map(|&n| {
                [None, Some(10)]
                    .into_iter()
                    .flat_map(move |t| both_algorithms(&format!("n={n}"), &vec![0.25; n], t))
            })
            .collect(),
        "fig5" => fig5_cases()
            .into_iter()
            .flat_map(|(case, eps)| {
                [None, Some(10)]
                    .into_iter()
                    .flat_map(move |t| both_algorithms(case, &eps, t))
            })
            .collect(),
        other => return Err(UnknownPreset(other.to_string())),
    };
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig3_sweeps_thresholds() {
        let e = preset_expand("fig3").unwrap();
        assert_eq!(e.len(), 12);
        assert!(e.iter().all(|p| p.config.epsilons == vec![0.25; 8]));
        let plain: Vec<_> = e.iter().filter(|p| p.config.threshold.is_none()).map(|p| p.config.algorithm).collect();
        assert_eq!(plain, [Algorithm::Anc, Algorithm::Snc]);
        let t2: Vec<_> = e.iter().filter(|p| p.config.threshold == Some(2)).map(|p| p.config.algorithm).collect();
        assert_eq!(t2, [Algorithm::Anct, Algorithm::Snct]);
        assert!(e.iter().all(|p| p.config.validate().is_ok()));
    }

    #[test]
    fn fig4_receiver_counts() {
        let e = preset_expand("fig4").unwrap();
        assert_eq!(e.len(), 16);
        let mut ns: Vec<_> = e.iter().map(|p| p.config.n_receivers).collect();
        ns.dedup();
        assert_eq!(ns, FIG4_RECEIVERS);
    }

    #[test]
    fn fig5_cases_match_setup() {
        let e = preset_expand("fig5").unwrap();
        assert_eq!(e.len(), 16);
        let case2 = e.iter().find(|p| p.scenario == "case2").unwrap();
        assert_eq!(case2.config.epsilons, [0.25, 0.25, 0.2, 0.2, 0.15, 0.15, 0.1, 0.1]);
        let case1 = e.iter().find(|p| p.scenario == "case1").unwrap();
        assert_eq!(case1.config.epsilons.iter().filter(|&&x| x == 0.25).count(), 7);
        assert_eq!(case1.config.epsilons[7], 0.15);
        assert!(e.iter().all(|p| p.config.runs == DEFAULT_RUNS && p.config.n_receivers == 8));
    }

    #[test]
    fn unknown_name() {
        assert_eq!(preset_expand("fig9"), Err(UnknownPreset("fig9".into())));
    }
}
