//! Chain-duration distributions for two receivers, their Monte Carlo
//! oracle, higher-order delay by convolution, and the random-walk model of
//! received-packet differences with its delay-bound estimator.
//!
//! Two-receiver events per slot (receiver 1 first):
//! A = (OK, OK), B = (OK, E), C = (E, OK), D = (E, E).
//! A chain at receiver 2 starts with a B event and is broken by a C event
//! followed, ignoring D events, by an A or C event. `T` counts the slots from
//! the chain start up to the slot before the breaking event.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ReceptionBitmap;
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("erasure probability {0} is outside (0, 1)")]
    Domain(f64),
    #[error("{what} must be at least 1")]
    Empty { what: &'static str },
    #[error("dimension mismatch: walk has {walk} coordinates, bitmap has {bitmap} receivers")]
    Dimension { walk: usize, bitmap: usize },
    #[error("need at least two receivers for the walk")]
    TooFewReceivers,
    #[error("erasure probability {0} is outside [0, 1)")]
    Epsilon(f64),
}

fn check_open(eps: f64) -> Result<(), AnalysisError> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(AnalysisError::Domain(eps))
    }
}

/// Slot event probabilities `(A, B, C, D)`.
fn events(eps1: f64, eps2: f64) -> (f64, f64, f64, f64) {
    (
        (1.0 - eps1) * (1.0 - eps2),
        (1.0 - eps1) * eps2,
        eps1 * (1.0 - eps2),
        eps1 * eps2,
    )
}

/// `P(T)` for `T = 1..=t_max`, with the mass beyond `t_max` kept as `tail`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDurationPmf {
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub t_max: u32,
    /// `mass[T - 1] = P(T)`.
    pub mass: Vec<f64>,
    pub tail: f64,
}

impl ChainDurationPmf {
    fn from_mass(eps1: f64, eps2: f64, mass: Vec<f64>) -> Self {
        let total: f64 = mass.iter().sum();
        Self {
            epsilon1: eps1,
            epsilon2: eps2,
            t_max: mass.len() as u32,
            tail: 1.0 - total,
            mass,
        }
    }

    /// `P(T)`; zero outside `1..=t_max`.
    pub fn p(&self, t: u32) -> f64 {
        if t == 0 {
            return 0.0;
        }
        self.mass.get(t as usize - 1).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }
}

/// Chain duration at receiver 2.
///
/// Tracks two states: `s0` (the most recent non-D event was not C) and `s1`
/// (it was C). From `s1`, an A or C event breaks the chain, B returns to
/// `s0` and D stays. `P(T)` is the probability of being in `s1` after `T`
/// slots times the probability that the next event breaks the chain.
pub fn chain_duration_pmf(eps1: f64, eps2: f64, t_max: u32) -> Result<ChainDurationPmf, AnalysisError> {
    check_open(eps1)?;
    check_open(eps2)?;
    if t_max == 0 {
        return Err(AnalysisError::Empty { what: "t_max" });
    }
    let (a, b, c, d) = events(eps1, eps2);
    let (mut s0, mut s1) = (1.0, 0.0);
    let mut mass = Vec::with_capacity(t_max as usize);
    for _ in 0..t_max {
        let n0 = s0 * (a + b + d) + s1 * b;
        let n1 = s0 * c + s1 * d;
        s0 = n0;
        s1 = n1;
        mass.push(s1 * (a + c));
    }
    Ok(ChainDurationPmf::from_mass(eps1, eps2, mass))
}

/// Chain duration at receiver 1: receiver 2's formula with the roles of the
/// two channels swapped.
pub fn chain_duration_pmf_r1(eps1: f64, eps2: f64, t_max: u32) -> Result<ChainDurationPmf, AnalysisError> {
    let mut pmf = chain_duration_pmf(eps2, eps1, t_max)?;
    pmf.epsilon1 = eps1;
    pmf.epsilon2 = eps2;
    Ok(pmf)
}

/// The same distribution as [`chain_duration_pmf`] by explicit enumeration.
///
/// With `t1` D events, `t2` C-then-B pairs and `t3` single A or B events
/// before the final C,
/// `P(T) = P(C)(1-ε2) Σ_{t1} C(T, t1) P(D)^t1 Σ_{2t2+t3=T-1-t1} C(t2+t3, t2) (P(C)P(B))^t2 (1-ε1)^t3`.
/// The binomials count the orderings of the events. Cost is cubic in
/// `t_max`; meant for cross-checking.
pub fn chain_duration_pmf_direct(
    eps1: f64,
    eps2: f64,
    t_max: u32,
) -> Result<ChainDurationPmf, AnalysisError> {
    check_open(eps1)?;
    check_open(eps2)?;
    if t_max == 0 {
        return Err(AnalysisError::Empty { what: "t_max" });
    }
    let (_, b, c, d) = events(eps1, eps2);
    let ln_fact = ln_factorials(t_max as usize + 1);
    let ln_choose = |n: usize, k: usize| ln_fact[n] - ln_fact[k] - ln_fact[n - k];
    let (ln_d, ln_cb, ln_ab) = (d.ln(), (c * b).ln(), (1.0 - eps1).ln());
    let lead = c * (1.0 - eps2);
    let mass = (1..=t_max as usize)
        .map(|t| {
            let mut sum = 0.0;
            for t1 in 0..t {
                let rest = t - 1 - t1;
                let outer = ln_choose(t, t1) + t1 as f64 * ln_d;
                for t2 in 0..=rest / 2 {
                    let t3 = rest - 2 * t2;
                    let ln_term =
                        outer + ln_choose(t2 + t3, t2) + t2 as f64 * ln_cb + t3 as f64 * ln_ab;
                    sum += ln_term.exp();
                }
            }
            lead * sum
        })
        .collect();
    Ok(ChainDurationPmf::from_mass(eps1, eps2, mass))
}

/// The closed form without the ordering multiplicities:
/// `ε1(1-ε2)² Σ_{t1=0}^{T-1} (ε1ε2)^t1 Σ_{2t2+t3=T-1-t1} (ε1ε2(1-ε1)(1-ε2))^t2 (1-ε1)^t3`.
///
/// Each term is the probability of one event sequence, so this sums only one
/// ordering per `(t1, t2, t3)` and its total mass is below one. Kept for
/// reference; [`chain_duration_pmf`] is the distribution.
pub fn chain_duration_pmf_unweighted(
    eps1: f64,
    eps2: f64,
    t_max: u32,
) -> Result<ChainDurationPmf, AnalysisError> {
    check_open(eps1)?;
    check_open(eps2)?;
    if t_max == 0 {
        return Err(AnalysisError::Empty { what: "t_max" });
    }
    let (x, y, z) = (eps1 * eps2 * (1.0 - eps1) * (1.0 - eps2), 1.0 - eps1, eps1 * eps2);
    let n = t_max as usize;
    // g[k] = Σ_{2t2+t3=k} x^t2 y^t3 = y^k + x g[k-2]
    let mut g = vec![0.0; n];
    let mut y_pow = 1.0;
    for k in 0..n {
        g[k] = y_pow + if k >= 2 { x * g[k - 2] } else { 0.0 };
        y_pow *= y;
    }
    // h[T-1] = Σ_{t1} z^t1 g[T-1-t1]
    let mut h = vec![0.0; n];
    for k in 0..n {
        h[k] = g[k] + if k > 0 { z * h[k - 1] } else { 0.0 };
    }
    let lead = eps1 * (1.0 - eps2) * (1.0 - eps2);
    let mass = h.into_iter().map(|v| lead * v).collect();
    Ok(ChainDurationPmf::from_mass(eps1, eps2, mass))
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Histogram of simulated chain durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPmf {
    pub trials: u64,
    /// `counts[T]`; index 0 is unused.
    pub counts: Vec<u64>,
    /// Trials that had not broken after [`MC_MAX_SLOTS`] slots.
    pub censored: u64,
}

impl EmpiricalPmf {
    pub fn frequency(&self, t: u32) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        self.counts.get(t as usize).copied().unwrap_or(0) as f64 / self.trials as f64
    }

    pub fn is_empty(&self) -> bool {
        self.trials == 0
    }

    fn merge(mut self, other: EmpiricalPmf) -> EmpiricalPmf {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.trials += other.trials;
        self.censored += other.censored;
        self
    }
}

/// Longest simulated chain before a trial is counted as censored.
pub const MC_MAX_SLOTS: u32 = 1 << 20;

const MC_BLOCK: u64 = 1 << 14;

/// One chain at receiver 2, started by a B event: per slot each receiver
/// draws its erasure independently; returns `T` or `None` if censored.
pub fn sample_chain_duration<R: Rng>(eps1: f64, eps2: f64, rng: &mut R) -> Option<u32> {
    let mut after_c = false;
    for slot in 1..=MC_MAX_SLOTS {
        let r1_erased = rng.gen::<f64>() < eps1;
        let r2_erased = rng.gen::<f64>() < eps2;
        match (r1_erased, r2_erased) {
            (true, true) => {}
            (_, false) if after_c => return Some(slot - 1),
            (true, false) => after_c = true,
            (false, false) => {}
            (false, true) => after_c = false,
        }
    }
    None
}

/// Monte Carlo estimate of the chain-duration distribution at receiver 2.
/// Trials run in blocks on independent streams of `seed`, in parallel.
/// With `eps2 = 0` no chain ever starts and the histogram is empty.
pub fn mc_chain_duration(eps1: f64, eps2: f64, trials: u64, seed: u64) -> Result<EmpiricalPmf, AnalysisError> {
    for e in [eps1, eps2] {
        if !(0.0..1.0).contains(&e) {
            return Err(AnalysisError::Epsilon(e));
        }
    }
    let empty = EmpiricalPmf {
        trials: 0,
        counts: Vec::new(),
        censored: 0,
    };
    if eps2 == 0.0 {
        return Ok(empty);
    }
    let blocks = trials.div_ceil(MC_BLOCK);
    let result = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = stream(seed, block, Purpose::Analysis);
            let n = MC_BLOCK.min(trials - block * MC_BLOCK);
            let mut h = EmpiricalPmf {
                trials: n,
                counts: Vec::new(),
                censored: 0,
            };
            for _ in 0..n {
                match sample_chain_duration(eps1, eps2, &mut rng) {
                    Some(t) => {
                        let t = t as usize;
                        if h.counts.len() <= t {
                            h.counts.resize(t + 1, 0);
                        }
                        h.counts[t] += 1;
                    }
                    None => h.censored += 1,
                }
            }
            h
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(empty, EmpiricalPmf::merge);
    Ok(result)
}

/// Per-bin comparison of an analytic PMF with a Monte Carlo histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    /// Bins whose expected count is at least `min_expected`.
    pub bins_checked: u32,
    /// Checked bins outside three binomial standard deviations.
    pub violations: u32,
    pub max_abs_z: f64,
}

impl Agreement {
    pub fn violation_fraction(&self) -> f64 {
        if self.bins_checked == 0 {
            0.0
        } else {
            f64::from(self.violations) / f64::from(self.bins_checked)
        }
    }
}

pub fn agreement(pmf: &ChainDurationPmf, mc: &EmpiricalPmf, min_expected: f64) -> Agreement {
    let n = mc.trials as f64;
    let mut out = Agreement {
        bins_checked: 0,
        violations: 0,
        max_abs_z: 0.0,
    };
    for t in 1..=pmf.t_max {
        let p = pmf.p(t);
        if n * p < min_expected {
            continue;
        }
        let sigma = (p * (1.0 - p) / n).sqrt();
        let z = (mc.frequency(t) - p) / sigma;
        out.bins_checked += 1;
        out.max_abs_z = out.max_abs_z.max(z.abs());
        if z.abs() > 3.0 {
            out.violations += 1;
        }
    }
    out
}

/// Distribution of a nonnegative integer delay, truncated at `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayDistribution {
    /// `mass[d] = P(D = d)` for `d = 0..=horizon`.
    pub mass: Vec<f64>,
    pub tail: f64,
}

/// Distribution of the sum of `k + 1` independent chain durations, truncated
/// at the PMF's `t_max`; mass beyond it (including the PMF's own tail) goes
/// to `tail`.
pub fn multi_chain_delay(pmf: &ChainDurationPmf, k: u32) -> DelayDistribution {
    let horizon = pmf.t_max as usize;
    let mut single = vec![0.0; horizon + 1];
    single[1..].copy_from_slice(&pmf.mass);
    let mut acc = single.clone();
    for _ in 0..k {
        let mut next = vec![0.0; horizon + 1];
        for (i, &a) in acc.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in single.iter().enumerate().take(horizon + 1 - i) {
                next[i + j] += a * b;
            }
        }
        acc = next;
    }
    let tail = 1.0 - acc.iter().sum::<f64>();
    DelayDistribution { mass: acc, tail }
}

/// Differences in received packets between receiver 1 and each other
/// receiver: `x[k] = count(R1) - count(R(k+2))`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WalkState {
    pub x: Vec<i64>,
}

impl WalkState {
    pub fn origin(receivers: usize) -> Self {
        Self {
            x: vec![0; receivers.saturating_sub(1)],
        }
    }

    /// Receiver 1 has received at least as many packets as everyone else.
    pub fn is_leader(&self) -> bool {
        self.x.iter().all(|&v| v >= 0)
    }
}

pub fn rw_step(state: &WalkState, bitmap: &ReceptionBitmap) -> Result<WalkState, AnalysisError> {
    if bitmap.len() != state.x.len() + 1 {
        return Err(AnalysisError::Dimension {
            walk: state.x.len(),
            bitmap: bitmap.len(),
        });
    }
    let r1 = bitmap.received(0);
    let x = state
        .x
        .iter()
        .enumerate()
        .map(|(k, &v)| match (r1, bitmap.received(k + 1)) {
            (true, false) => v + 1,
            (false, true) => v - 1,
            _ => v,
        })
        .collect();
    Ok(WalkState { x })
}

/// Empirical CDF of the per-packet delay bound at receiver 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayBoundCdf {
    pub epsilons: Vec<f64>,
    pub runs: u64,
    pub horizon: u32,
    pub samples: u64,
    /// Samples from excursions still open at the horizon.
    pub censored_samples: u64,
    /// `cdf[d]` for `d = 0..=horizon`.
    pub cdf: Vec<f64>,
}

/// Per-slot bound samples of one walk over `bitmaps`, added to `hist`;
/// returns the number of censored samples.
///
/// Receiver 1 decodes everything transmitted so far when it receives in a
/// slot that it entered as a leader (walk in the closed first quadrant);
/// such a slot gives 0. Every other slot belongs to a maximal run `t1..t2`
/// of such slots ended by the decoding slot `t2`, and gives `t2 - t1`, the
/// delay of the run's first packet. Returning to the quadrant by a
/// reception is not enough: the packet of that slot was coded for the
/// leaders. A run still open at the horizon gives `horizon + 1 - t1` per
/// slot.
fn walk_samples(receivers: usize, bitmaps: impl Iterator<Item = ReceptionBitmap>, hist: &mut [u64]) -> u64 {
    let mut state = WalkState::origin(receivers);
    let mut waiting_since: Option<u32> = None;
    let mut horizon = 0;
    for (slot, bitmap) in (1..).zip(bitmaps) {
        horizon = slot;
        let decodes = state.is_leader() && bitmap.received(0);
        state = rw_step(&state, &bitmap).expect("dimensions match");
        if decodes {
            if let Some(t1) = waiting_since.take() {
                hist[(slot - t1) as usize] += u64::from(slot - t1);
            }
            hist[0] += 1;
        } else if waiting_since.is_none() {
            waiting_since = Some(slot);
        }
    }
    match waiting_since {
        Some(t1) => {
            let v = horizon + 1 - t1;
            hist[v as usize] += u64::from(v);
            u64::from(v)
        }
        None => 0,
    }
}

/// Simulates `runs` walks of `slots` slots each and returns the empirical
/// CDF of the delay bound at receiver 1.
pub fn rw_delay_bound_cdf(epsilons: &[f64], slots: u32, runs: u64, seed: u64) -> Result<DelayBoundCdf, AnalysisError> {
    if epsilons.len() < 2 {
        return Err(AnalysisError::TooFewReceivers);
    }
    if let Some(&e) = epsilons.iter().find(|e| !(0.0..1.0).contains(*e)) {
        return Err(AnalysisError::Epsilon(e));
    }
    if slots == 0 {
        return Err(AnalysisError::Empty { what: "slots" });
    }
    if runs == 0 {
        return Err(AnalysisError::Empty { what: "runs" });
    }
    let len = slots as usize + 1;
    let (hist, censored) = (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = stream(seed, run, Purpose::Analysis);
            let mut hist = vec![0u64; len];
            let bitmaps = (0..slots)
                .map(|_| ReceptionBitmap(epsilons.iter().map(|&e| rng.gen::<f64>() >= e).collect()));
            let censored = walk_samples(epsilons.len(), bitmaps, &mut hist);
            (hist, censored)
        })
        .reduce(
            || (vec![0u64; len], 0),
            |(mut a, ca), (b, cb)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                (a, ca + cb)
            },
        );
    let samples: u64 = hist.iter().sum();
    let mut running = 0;
    let cdf = hist
        .iter()
        .map(|&c| {
            running += c;
            if samples == 0 {
                1.0
            } else {
                running as f64 / samples as f64
            }
        })
        .collect();
    Ok(DelayBoundCdf {
        epsilons: epsilons.to_vec(),
        runs,
        horizon: slots,
        samples,
        censored_samples: censored,
        cdf,
    })
}

/// `value,probability_mass` rows.
pub fn pmf_csv(rows: impl IntoIterator<Item = (u32, f64)>) -> Result<String, csv::Error> {
    two_column_csv(["value", "probability_mass"], rows)
}

/// `delay,cumulative_probability` rows.
pub fn cdf_csv(rows: impl IntoIterator<Item = (u32, f64)>) -> Result<String, csv::Error> {
    two_column_csv(["delay", "cumulative_probability"], rows)
}

fn two_column_csv(header: [&str; 2], rows: impl IntoIterator<Item = (u32, f64)>) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for (v, p) in rows {
        w.write_record([v.to_string(), p.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_slot_mass() {
        let pmf = chain_duration_pmf(0.25, 0.25, 10).unwrap();
        assert_eq!(pmf.p(1), 0.140625);
        let r1 = chain_duration_pmf_r1(0.25, 0.1, 10).unwrap();
        assert!((r1.p(1) - 0.05625).abs() < 1e-15);
    }

    #[test]
    fn two_slot_mass_counts_both_orderings() {
        // C then B-or-A: P(C)(1-ε2)(1-ε1); D before or after the C: 2 P(D).
        let pmf = chain_duration_pmf(0.25, 0.25, 10).unwrap();
        assert!((pmf.p(2) - 0.140625 * (0.75 + 2.0 * 0.0625)).abs() < 1e-15);
        let lit = chain_duration_pmf_unweighted(0.25, 0.25, 10).unwrap();
        assert!((lit.p(2) - 0.1142578125).abs() < 1e-15);
        assert_eq!(lit.p(1), 0.140625);
    }

    #[test]
    fn direct_sum_matches_recursion() {
        for (e1, e2) in [(0.25, 0.25), (0.1, 0.4), (0.5, 0.05), (0.05, 0.5)] {
            let fast = chain_duration_pmf(e1, e2, 300).unwrap();
            let slow = chain_duration_pmf_direct(e1, e2, 300).unwrap();
            for t in 1..=300 {
                assert!((fast.p(t) - slow.p(t)).abs() < 1e-12, "{e1},{e2} T={t}");
            }
        }
    }

    #[test]
    fn unweighted_form_matches_term_by_term_sum() {
        let (e1, e2) = (0.3, 0.2);
        let lit = chain_duration_pmf_unweighted(e1, e2, 40).unwrap();
        for t in 1..=40u32 {
            let mut sum = 0.0;
            for t1 in 0..t {
                let rest = t - 1 - t1;
                for t2 in 0..=rest / 2 {
                    let t3 = rest - 2 * t2;
                    sum += (e1 * e2).powi(t1 as i32)
                        * (e1 * e2 * (1.0 - e1) * (1.0 - e2)).powi(t2 as i32)
                        * (1.0 - e1).powi(t3 as i32);
                }
            }
            let expected = e1 * (1.0 - e2) * (1.0 - e2) * sum;
            assert!((lit.p(t) - expected).abs() < 1e-14, "T={t}");
        }
    }

    #[test]
    fn symmetry_and_domain() {
        let a = chain_duration_pmf_r1(0.2, 0.35, 50).unwrap();
        let b = chain_duration_pmf(0.35, 0.2, 50).unwrap();
        assert_eq!(a.mass, b.mass);
        assert!(chain_duration_pmf(0.0, 0.2, 10).is_err());
        assert!(chain_duration_pmf(0.2, 1.0, 10).is_err());
        assert!(chain_duration_pmf(0.2, 0.2, 0).is_err());
    }

    #[test]
    fn mc_without_receiver_two_losses_is_empty() {
        let h = mc_chain_duration(0.3, 0.0, 1000, 1).unwrap();
        assert!(h.is_empty());
    }

    #[test]
    fn mc_is_deterministic() {
        assert_eq!(
            mc_chain_duration(0.25, 0.25, 40_000, 9).unwrap(),
            mc_chain_duration(0.25, 0.25, 40_000, 9).unwrap()
        );
    }

    #[test]
    fn convolution_basics() {
        let pmf = chain_duration_pmf(0.25, 0.25, 60).unwrap();
        let same = multi_chain_delay(&pmf, 0);
        assert_eq!(&same.mass[1..], &pmf.mass[..]);
        assert_eq!(same.mass[0], 0.0);

        let point = ChainDurationPmf::from_mass(0.5, 0.5, vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        let twice = multi_chain_delay(&point, 1);
        assert_eq!(twice.mass, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(twice.tail, 0.0);
        let thrice = multi_chain_delay(&point, 2);
        assert!(thrice.mass.iter().all(|&m| m == 0.0));
        assert_eq!(thrice.tail, 1.0);
    }

    #[test]
    fn walk_transitions_three_receivers() {
        let s = WalkState { x: vec![3, 5] };
        let step = |b: &str| rw_step(&s, &b.parse().unwrap()).unwrap().x;
        assert_eq!(step("OK,OK,OK"), [3, 5]);
        assert_eq!(step("OK,OK,E"), [3, 6]);
        assert_eq!(step("OK,E,OK"), [4, 5]);
        assert_eq!(step("OK,E,E"), [4, 6]);
        assert_eq!(step("E,OK,OK"), [2, 4]);
        assert_eq!(step("E,OK,E"), [2, 5]);
        assert_eq!(step("E,E,OK"), [3, 4]);
        assert_eq!(step("E,E,E"), [3, 5]);
        assert!(rw_step(&s, &"OK,OK".parse().unwrap()).is_err());
    }

    #[test]
    fn walk_sign_rule_exhaustive() {
        for n in 2..=4 {
            let s = WalkState::origin(n);
            for i in 0..1 << n {
                let b = ReceptionBitmap::from_index(i, n);
                let next = rw_step(&s, &b).unwrap();
                for k in 0..n - 1 {
                    let expected = match (b.received(0), b.received(k + 1)) {
                        (true, false) => 1,
                        (false, true) => -1,
                        _ => 0,
                    };
                    assert_eq!(next.x[k], expected);
                }
            }
        }
    }

    #[test]
    fn lossless_tagged_receiver_never_waits() {
        let cdf = rw_delay_bound_cdf(&[0.0, 0.3, 0.6], 200, 50, 4).unwrap();
        assert_eq!(cdf.cdf[0], 1.0);
        assert_eq!(cdf.censored_samples, 0);
    }

    #[test]
    fn excursion_samples_by_hand() {
        let pattern = |text: &str| -> Vec<ReceptionBitmap> { text.split(';').map(|b| b.parse().unwrap()).collect() };
        // Walk after each slot: 1, 0, -1, -1, 0, 0. Slot 1 decodes; slots
        // 2-5 wait (slot 5 re-enters the quadrant but started outside it)
        // until slot 6 decodes.
        let mut hist = vec![0u64; 8];
        let c = walk_samples(2, pattern("OK,E;E,OK;E,OK;E,E;OK,E;OK,OK").into_iter(), &mut hist);
        assert_eq!(c, 0);
        assert_eq!(hist[..6], [2, 0, 0, 0, 4, 0]);

        // Waiting from slot 2 to the horizon at 4: three censored samples of 3.
        let mut hist = vec![0u64; 8];
        let c = walk_samples(2, pattern("OK,OK;E,OK;E,E;OK,OK").into_iter(), &mut hist);
        assert_eq!(c, 3);
        assert_eq!(hist[..4], [1, 0, 0, 3]);
    }

    #[test]
    fn csv_helpers() {
        let csv = pmf_csv([(1, 0.5), (2, 0.25)]).unwrap();
        assert_eq!(csv, "value,probability_mass\n1,0.5\n2,0.25\n");
        assert!(cdf_csv([(0, 1.0)]).unwrap().starts_with("delay,cumulative_probability\n"));
    }
}
