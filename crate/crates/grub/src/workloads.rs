//! Workload generators: fixed-ratio synthetic traces, YCSB-style mixed
//! phases, and stochastic feeds drawn from published reads-per-write
//! distributions. All generators are deterministic under a fixed seed.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Zipf;
use thiserror::Error;

use crate::trace::{Key, Operation, Trace};

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("invalid workload spec: {0}")]
    BadSpec(&'static str),
    #[error("distribution probabilities must be >= 0")]
    NegativeProbability,
    #[error("distribution probabilities sum to {0}, expected 1")]
    BadProbabilitySum(f64),
    #[error("distribution parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn key_name(i: u64) -> Key {
    format!("k{:05}", i).as_str().into()
}

fn pick_key(rng: &mut ChaCha8Rng, key_count: u64) -> u64 {
    rng.gen_range(0..key_count)
}

/// Fixed-ratio workload: repeating blocks of one write followed by
/// reads-per-write reads of the same key.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSpec {
    /// X2/X1: reads per write; fractional ratios are realized by alternating
    /// block sizes so the long-run mean matches.
    pub reads_per_write: f64,
    pub total_ops: u64,
    pub key_count: u64,
    pub record_words: u64,
}

impl RatioSpec {
    fn validate(&self) -> Result<(), WorkloadError> {
        if !(self.reads_per_write >= 0.0) {
            return Err(WorkloadError::BadSpec("reads_per_write must be >= 0"));
        }
        if self.record_words == 0 {
            return Err(WorkloadError::BadSpec("record_words must be >= 1"));
        }
        if self.key_count == 0 {
            return Err(WorkloadError::BadSpec("key_count must be >= 1"));
        }
        Ok(())
    }
}

pub fn gen_ratio(spec: &RatioSpec, seed: u64) -> Result<Trace, WorkloadError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::with_capacity(spec.total_ops as usize);
    // error accumulator realizes fractional ratios exactly in the long run
    let mut acc = 0.0f64;
    while (trace.len() as u64) < spec.total_ops {
        let key = key_name(pick_key(&mut rng, spec.key_count));
        trace.push(Operation::Write {
            key: key.clone(),
            words: spec.record_words,
        });
        acc += spec.reads_per_write;
        let reads = acc.floor() as u64;
        acc -= reads as f64;
        for _ in 0..reads {
            if (trace.len() as u64) >= spec.total_ops {
                break;
            }
            trace.push(Operation::Read { key: key.clone() });
        }
    }
    trace.truncate(spec.total_ops as usize);
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YcsbPhase {
    A,
    B,
    E,
    F,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyDistribution {
    Uniform,
    Zipfian(f64),
    /// Reads biased toward recently written keys.
    Latest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpec {
    pub phase: YcsbPhase,
    pub op_count: u64,
    pub key_count: u64,
    pub key_distribution: KeyDistribution,
    pub record_words: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixPhaseSpec {
    pub phases: Vec<PhaseSpec>,
}

struct KeyChooser {
    key_count: u64,
    dist: KeyDistribution,
    zipf: Option<Zipf<f64>>,
    last_written: u64,
}

impl KeyChooser {
    fn new(key_count: u64, dist: KeyDistribution) -> Result<Self, WorkloadError> {
        let theta = match dist {
            KeyDistribution::Zipfian(t) => t,
            KeyDistribution::Latest => 0.99,
            KeyDistribution::Uniform => 0.0,
        };
        let zipf = if matches!(dist, KeyDistribution::Uniform) {
            None
        } else {
            Some(
                Zipf::new(key_count, theta)
                    .map_err(|_| WorkloadError::BadSpec("bad zipf parameters"))?,
            )
        };
        Ok(KeyChooser {
            key_count,
            dist,
            zipf,
            last_written: 0,
        })
    }

    fn choose(&mut self, rng: &mut ChaCha8Rng, is_write: bool) -> u64 {
        let idx = match (self.dist, &self.zipf) {
            (KeyDistribution::Uniform, _) => pick_key(rng, self.key_count),
            (KeyDistribution::Zipfian(_), Some(z)) => z.sample(rng) as u64 - 1,
            (KeyDistribution::Latest, Some(z)) => {
                // rank 1 = most recently written key
                let offset = z.sample(rng) as u64 - 1;
                (self.last_written + self.key_count - offset % self.key_count)
                    % self.key_count
            }
            _ => unreachable!(),
        };
        if is_write {
            self.last_written = idx;
        }
        idx
    }
}

impl PhaseSpec {
    fn validate(&self) -> Result<(), WorkloadError> {
        if self.op_count == 0 {
            return Err(WorkloadError::BadSpec("op_count must be >= 1"));
        }
        if self.key_count == 0 || self.record_words == 0 {
            return Err(WorkloadError::BadSpec("key_count and record_words must be >= 1"));
        }
        Ok(())
    }
}

/// One YCSB-style phase: A = 50% reads / 50% writes, B = 95% reads,
/// E = 95% scans (length uniform 1..10), F = 75% reads / 25%
/// read-modify-write emitted as a read then a write on the same key.
pub fn gen_ycsb_phase(spec: &PhaseSpec, seed: u64) -> Result<Trace, WorkloadError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_phase_with(spec, &mut rng)
}

fn gen_phase_with(spec: &PhaseSpec, rng: &mut ChaCha8Rng) -> Result<Trace, WorkloadError> {
    let mut chooser = KeyChooser::new(spec.key_count, spec.key_distribution)?;
    let mut trace = Vec::with_capacity(spec.op_count as usize);
    while (trace.len() as u64) < spec.op_count {
        let roll: f64 = rng.gen();
        match spec.phase {
            YcsbPhase::A | YcsbPhase::B => {
                let read_frac = if spec.phase == YcsbPhase::A { 0.5 } else { 0.95 };
                if roll < read_frac {
                    let key = key_name(chooser.choose(rng, false));
                    trace.push(Operation::Read { key });
                } else {
                    let key = key_name(chooser.choose(rng, true));
                    trace.push(Operation::Write {
                        key,
                        words: spec.record_words,
                    });
                }
            }
            YcsbPhase::E => {
                if roll < 0.95 {
                    let start_key = key_name(chooser.choose(rng, false));
                    let count = rng.gen_range(1..=10);
                    trace.push(Operation::Scan { start_key, count });
                } else {
                    let key = key_name(chooser.choose(rng, true));
                    trace.push(Operation::Write {
                        key,
                        words: spec.record_words,
                    });
                }
            }
            YcsbPhase::F => {
                if roll < 0.75 {
                    let key = key_name(chooser.choose(rng, false));
                    trace.push(Operation::Read { key });
                } else {
                    let key = key_name(chooser.choose(rng, true));
                    trace.push(Operation::Read { key: key.clone() });
                    trace.push(Operation::Write {
                        key,
                        words: spec.record_words,
                    });
                }
            }
        }
    }
    trace.truncate(spec.op_count as usize);
    Ok(trace)
}

/// Concatenates the phases of a mix, continuing the same RNG stream.
pub fn gen_mix(mix: &MixPhaseSpec, seed: u64) -> Result<Trace, WorkloadError> {
    if mix.phases.is_empty() {
        return Err(WorkloadError::BadSpec("mix needs at least one phase"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::new();
    for phase in &mix.phases {
        trace.extend(gen_phase_with(phase, &mut rng)?);
    }
    Ok(trace)
}

/// Distribution of writes by the number of reads that follow each.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadsPerWriteDistribution {
    entries: Vec<(u32, f64)>,
}

impl ReadsPerWriteDistribution {
    pub fn new(entries: Vec<(u32, f64)>) -> Result<Self, WorkloadError> {
        if entries.iter().any(|&(_, p)| p < 0.0 || !p.is_finite()) {
            return Err(WorkloadError::NegativeProbability);
        }
        let sum: f64 = entries.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(WorkloadError::BadProbabilitySum(sum));
        }
        Ok(ReadsPerWriteDistribution { entries })
    }

    /// Rescales so probabilities sum to exactly 1; accepts tables whose
    /// published percentages carry rounding error.
    pub fn new_normalized(entries: Vec<(u32, f64)>) -> Result<Self, WorkloadError> {
        if entries.iter().any(|&(_, p)| p < 0.0 || !p.is_finite()) {
            return Err(WorkloadError::NegativeProbability);
        }
        let sum: f64 = entries.iter().map(|&(_, p)| p).sum();
        if sum <= 0.0 {
            return Err(WorkloadError::BadProbabilitySum(sum));
        }
        Self::new(entries.into_iter().map(|(r, p)| (r, p / sum)).collect())
    }

    /// Published ethPriceOracle reads-per-write table (normalized).
    pub fn eth_price_oracle() -> Self {
        Self::new_normalized(vec![
            (0, 0.704),
            (1, 0.160),
            (2, 0.0646),
            (3, 0.0291),
            (4, 0.0152),
            (5, 0.0076),
            (6, 0.0063),
            (7, 0.0025),
            (8, 0.0013),
            (9, 0.0025),
            (10, 0.0013),
            (12, 0.0013),
            (13, 0.0025),
            (17, 0.0013),
            (20, 0.0013),
        ])
        .expect("built-in table is valid")
    }

    /// Published BtcRelay reads-per-write table (normalized).
    pub fn btc_relay() -> Self {
        Self::new_normalized(vec![
            (0, 0.937),
            (1, 0.0530),
            (2, 0.0077),
            (3, 0.0015),
            (4, 0.0005),
            (5, 0.0004),
            (6, 0.0002),
            (7, 0.0001),
        ])
        .expect("built-in table is valid")
    }

    /// Loads `reads,probability` CSV lines; a header row is allowed.
    pub fn from_csv(text: &str) -> Result<Self, WorkloadError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("reads")) {
                continue;
            }
            let mut parts = line.split(',');
            let err = |msg: &str| WorkloadError::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let reads: u32 = parts
                .next()
                .ok_or_else(|| err("missing reads column"))?
                .trim()
                .parse()
                .map_err(|_| err("bad reads count"))?;
            let prob: f64 = parts
                .next()
                .ok_or_else(|| err("missing probability column"))?
                .trim()
                .parse()
                .map_err(|_| err("bad probability"))?;
            entries.push((reads, prob));
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn mean(&self) -> f64 {
        self.entries.iter().map(|&(r, p)| r as f64 * p).sum()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u32 {
        let mut roll: f64 = rng.gen();
        for &(reads, p) in &self.entries {
            if roll < p {
                return reads;
            }
            roll -= p;
        }
        self.entries.last().map(|&(r, _)| r).unwrap_or(0)
    }
}

/// Single-feed stochastic trace: `write_count` writes, each followed by a
/// read count sampled i.i.d. from the distribution.
pub fn gen_from_distribution(
    dist: &ReadsPerWriteDistribution,
    write_count: u64,
    seed: u64,
) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key: Key = "feed".into();
    let mut trace = Vec::new();
    for _ in 0..write_count {
        trace.push(Operation::Write {
            key: key.clone(),
            words: 1,
        });
        for _ in 0..dist.sample(&mut rng) {
            trace.push(Operation::Read { key: key.clone() });
        }
    }
    trace
}

/// Expands each base write into a batch of writes on distinct asset keys
/// drawn from a key space of `asset_count`; reads follow the keys of the most
/// recent batch, cycling through it.
pub fn multi_asset_feed(
    base: &Trace,
    asset_count: u64,
    batch_size: u64,
    seed: u64,
) -> Result<Trace, WorkloadError> {
    if batch_size == 0 || asset_count < batch_size {
        return Err(WorkloadError::BadSpec("need asset_count >= batch_size >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::new();
    let mut batch: Vec<u64> = (0..batch_size).collect();
    let mut read_cursor = 0usize;
    for op in base {
        match op {
            Operation::Write { words, .. } => {
                batch = rand::seq::index::sample(&mut rng, asset_count as usize, batch_size as usize)
                    .into_iter()
                    .map(|i| i as u64)
                    .collect();
                batch.sort_unstable();
                for &asset in &batch {
                    trace.push(Operation::Write {
                        key: key_name(asset),
                        words: *words,
                    });
                }
                read_cursor = 0;
            }
            Operation::Read { .. } => {
                let asset = batch[read_cursor % batch.len()];
                read_cursor += 1;
                trace.push(Operation::Read {
                    key: key_name(asset),
                });
            }
            Operation::Scan { .. } => trace.push(op.clone()),
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ratio_of(trace: &Trace) -> f64 {
        let writes = trace.iter().filter(|o| o.is_write()).count() as f64;
        (trace.len() as f64 - writes) / writes
    }

    #[test]
    fn ratio_zero_is_pure_writes() {
        let t = gen_ratio(
            &RatioSpec {
                reads_per_write: 0.0,
                total_ops: 100,
                key_count: 4,
                record_words: 1,
            },
            1,
        )
        .unwrap();
        assert_eq!(t.len(), 100);
        assert!(t.iter().all(|o| o.is_write()));
    }

    #[test]
    fn ratio_256_blocks() {
        let t = gen_ratio(
            &RatioSpec {
                reads_per_write: 256.0,
                total_ops: 257 * 3,
                key_count: 1,
                record_words: 1,
            },
            1,
        )
        .unwrap();
        assert!(t[0].is_write());
        assert!(t[1..257].iter().all(|o| !o.is_write()));
        assert!(t[257].is_write());
    }

    #[test]
    fn fractional_ratio_alternates_and_converges() {
        let t = gen_ratio(
            &RatioSpec {
                reads_per_write: 1.5,
                total_ops: 5000,
                key_count: 1,
                record_words: 1,
            },
            1,
        )
        .unwrap();
        // first blocks: W R, W R R, W R, ...
        assert!(t[0].is_write() && !t[1].is_write() && t[2].is_write());
        assert!(!t[3].is_write() && !t[4].is_write() && t[5].is_write());
        assert!((ratio_of(&t) - 1.5).abs() < 0.01);
    }

    #[test]
    fn ycsb_a_read_fraction() {
        let spec = PhaseSpec {
            phase: YcsbPhase::A,
            op_count: 4096,
            key_count: 256,
            key_distribution: KeyDistribution::Zipfian(0.99),
            record_words: 1,
        };
        let t = gen_ycsb_phase(&spec, 42).unwrap();
        let reads = t.iter().filter(|o| matches!(o, Operation::Read { .. })).count();
        let frac = reads as f64 / t.len() as f64;
        assert!((frac - 0.5).abs() < 0.02, "read fraction {}", frac);
    }

    #[test]
    fn ycsb_e_scan_fraction() {
        let spec = PhaseSpec {
            phase: YcsbPhase::E,
            op_count: 4096,
            key_count: 256,
            key_distribution: KeyDistribution::Uniform,
            record_words: 1,
        };
        let t = gen_ycsb_phase(&spec, 42).unwrap();
        let scans = t.iter().filter(|o| matches!(o, Operation::Scan { .. })).count();
        let frac = scans as f64 / t.len() as f64;
        assert!((frac - 0.95).abs() < 0.01, "scan fraction {}", frac);
        assert!(t.iter().all(|o| match o {
            Operation::Scan { count, .. } => (1..=10).contains(count),
            _ => true,
        }));
    }

    #[test]
    fn ycsb_f_rmw_pairs() {
        let spec = PhaseSpec {
            phase: YcsbPhase::F,
            op_count: 4096,
            key_count: 256,
            key_distribution: KeyDistribution::Latest,
            record_words: 1,
        };
        let t = gen_ycsb_phase(&spec, 42).unwrap();
        // every write is immediately preceded by a read of the same key
        for (i, op) in t.iter().enumerate() {
            if let Operation::Write { key, .. } = op {
                match &t[i - 1] {
                    Operation::Read { key: rk } => assert_eq!(rk, key),
                    other => panic!("write not preceded by its read: {:?}", other),
                }
            }
        }
    }

    #[test]
    fn mix_concatenates_phases() {
        let phase = |p| PhaseSpec {
            phase: p,
            op_count: 100,
            key_count: 16,
            key_distribution: KeyDistribution::Uniform,
            record_words: 1,
        };
        let mix = MixPhaseSpec {
            phases: vec![phase(YcsbPhase::A), phase(YcsbPhase::B)],
        };
        let t = gen_mix(&mix, 3).unwrap();
        assert_eq!(t.len(), 200);
    }

    #[test]
    fn built_in_tables_validate() {
        let eth = ReadsPerWriteDistribution::eth_price_oracle();
        assert!((eth.entries().iter().map(|&(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-9);
        let btc = ReadsPerWriteDistribution::btc_relay();
        assert!((btc.mean() - 0.076).abs() < 0.01);
    }

    #[test]
    fn distribution_sum_tolerance_enforced() {
        assert!(matches!(
            ReadsPerWriteDistribution::new(vec![(0, 0.5), (1, 0.499)]),
            Err(WorkloadError::BadProbabilitySum(_))
        ));
        assert!(matches!(
            ReadsPerWriteDistribution::new(vec![(0, 1.5), (1, -0.5)]),
            Err(WorkloadError::NegativeProbability)
        ));
    }

    #[test]
    fn eth_zero_read_fraction_empirical() {
        let dist = ReadsPerWriteDistribution::eth_price_oracle();
        let t = gen_from_distribution(&dist, 10_000, 9);
        let mut zero_read_writes = 0u64;
        let mut writes = 0u64;
        for (i, op) in t.iter().enumerate() {
            if op.is_write() {
                writes += 1;
                let followed = t.get(i + 1).map(|o| !o.is_write()).unwrap_or(false);
                if !followed {
                    zero_read_writes += 1;
                }
            }
        }
        let frac = zero_read_writes as f64 / writes as f64;
        assert!((frac - 0.704).abs() < 0.02, "zero-read fraction {}", frac);
    }

    #[test]
    fn degenerate_distribution_exact() {
        let dist = ReadsPerWriteDistribution::new(vec![(3, 1.0)]).unwrap();
        let t = gen_from_distribution(&dist, 100, 5);
        assert_eq!(t.len(), 400);
    }

    #[test]
    fn distribution_csv_roundtrip() {
        let dist = ReadsPerWriteDistribution::from_csv("reads,probability\n0,0.25\n2,0.75\n").unwrap();
        assert_eq!(dist.entries(), &[(0, 0.25), (2, 0.75)]);
        assert!(ReadsPerWriteDistribution::from_csv("0,0.5\n1,0.4\n").is_err());
    }

    #[test]
    fn multi_asset_expansion_law() {
        let base = gen_from_distribution(&ReadsPerWriteDistribution::eth_price_oracle(), 200, 11);
        let base_writes = base.iter().filter(|o| o.is_write()).count();
        let t = multi_asset_feed(&base, 4096, 10, 11).unwrap();
        let writes = t.iter().filter(|o| o.is_write()).count();
        assert_eq!(writes, base_writes * 10);
        // each batch touches 10 distinct keys
        let first_batch: Vec<_> = t.iter().take(10).map(|o| o.key().clone()).collect();
        let mut uniq = first_batch.clone();
        uniq.dedup();
        assert_eq!(uniq.len(), 10);
    }

    #[test]
    fn identity_transform() {
        let base = vec![
            Operation::Write {
                key: "feed".into(),
                words: 1,
            },
            Operation::Read { key: "feed".into() },
        ];
        let t = multi_asset_feed(&base, 1, 1, 0).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t[0].is_write());
    }

    #[test]
    fn generators_deterministic() {
        let spec = PhaseSpec {
            phase: YcsbPhase::B,
            op_count: 512,
            key_count: 64,
            key_distribution: KeyDistribution::Latest,
            record_words: 1,
        };
        assert_eq!(gen_ycsb_phase(&spec, 7).unwrap(), gen_ycsb_phase(&spec, 7).unwrap());
        let dist = ReadsPerWriteDistribution::btc_relay();
        assert_eq!(
            gen_from_distribution(&dist, 500, 3),
            gen_from_distribution(&dist, 500, 3)
        );
    }
}
