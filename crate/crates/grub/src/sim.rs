//! Discrete-event simulation of the three-actor protocol: the data owner
//! (control plane and write path), the storage provider (KV store, Merkle
//! tree, watchdog), and a modeled blockchain running the storage-manager
//! contract, with exact gas accounting per epoch.
//!
//! Timing model: one workload operation per tick; a transaction submitted at
//! t finalizes at t + Pt + B·F; the DO batches an epoch every E ticks and
//! sends one update transaction carrying the digest, replicated-record
//! writes, and state transitions. Non-replicated writes travel off-chain and
//! reach the chain only through the digest.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use thiserror::Error;

use crate::ads::{self, AdsTree, Digest, IntervalProof, KeyProof, MembershipProof};
use crate::decision::{
    AdaptiveKState, AdaptiveVariant, Decider, DecisionError, MemorizingState, MemorylessState,
    OpCostModel, Transition,
};
use crate::gas::{Gas, GasSchedule};
use crate::trace::{Key, Operation, Record, ReplState, Trace};

/// Per-record cost attribution shared between online-policy replay and the
/// offline DP. Deliver transaction overhead is amortized away: an NR read is
/// charged the marginal payload words plus proof verification, not a full
/// transaction base; writes carry the per-epoch digest transaction.
pub fn amortized_costs(schedule: &GasSchedule, words: u64) -> OpCostModel {
    let digest_tx = schedule.tx_cost(1) + schedule.update_cost(1);
    OpCostModel {
        nr_read: schedule.tx_per_word * (words + 1) + schedule.hash_cost(1),
        r_read: schedule.read_cost(words),
        nr_write: digest_tx,
        r_write: digest_tx + schedule.tx_per_word * words + schedule.update_cost(words),
        nr_to_r: schedule.insert_cost(words) + schedule.tx_per_word * words,
        r_to_nr: 0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Memoryless(u32),
    Memorizing(u32, u32),
    AdaptiveK1 { window: usize },
    AdaptiveK2 { window: usize },
    Bl1,
    Bl2,
}

/// Scripted storage-provider strategies for security testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpBehavior {
    Honest,
    /// Deliver a forged value under an honest proof.
    ForgeValue,
    /// Serve values and proofs from a stale snapshot after the root moved.
    StaleServe,
    /// Drop one matching record from every range proof.
    OmitFromRange,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub epoch_len: u64,
    pub block_time: u64,
    pub finality_blocks: u64,
    pub propagation_delay: u64,
    pub schedule: GasSchedule,
    pub policy: Policy,
    pub rng_seed: u64,
    /// Emit a pure-digest transaction even for empty epochs.
    pub always_digest: bool,
    pub sp_behavior: SpBehavior,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            epoch_len: 60,
            block_time: 15,
            finality_blocks: 6,
            propagation_delay: 1,
            schedule: GasSchedule::default(),
            policy: Policy::Memoryless(2),
            rng_seed: 0,
            always_digest: false,
            sp_behavior: SpBehavior::Honest,
        }
    }
}

impl SimConfig {
    pub fn validated(self) -> Result<Self, SimError> {
        if self.epoch_len == 0 || self.block_time == 0 || self.propagation_delay == 0 {
            return Err(SimError::BadConfig("E, B, Pt must be > 0"));
        }
        if self.finality_blocks == 0 {
            return Err(SimError::BadConfig("F must be >= 1"));
        }
        Ok(self)
    }

    /// The freshness bound E + Pt + B·F.
    pub fn freshness_bound(&self) -> u64 {
        self.epoch_len + self.propagation_delay + self.block_time * self.finality_blocks
    }

    fn finalize_at(&self, submit_t: u64) -> u64 {
        submit_t + self.propagation_delay + self.block_time * self.finality_blocks
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    BadConfig(&'static str),
    #[error("decision error: {0}")]
    Decision(#[from] DecisionError),
    #[error("ads error: {0}")]
    Ads(#[from] ads::AdsError),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EpochRow {
    pub epoch: u64,
    pub ops: u64,
    pub tx_gas: Gas,
    pub storage_gas: Gas,
    pub verify_gas: Gas,
}

impl EpochRow {
    pub fn total_gas(&self) -> Gas {
        self.tx_gas + self.storage_gas + self.verify_gas
    }
}

#[derive(Debug, Clone, Default)]
pub struct GasLedger {
    rows: BTreeMap<u64, EpochRow>,
}

impl GasLedger {
    fn row(&mut self, epoch: u64) -> &mut EpochRow {
        self.rows.entry(epoch).or_insert_with(|| EpochRow {
            epoch,
            ..EpochRow::default()
        })
    }

    fn add(&mut self, epoch: u64, tx: Gas, storage: Gas, verify: Gas) {
        let r = self.row(epoch);
        r.tx_gas += tx;
        r.storage_gas += storage;
        r.verify_gas += verify;
    }

    fn count_op(&mut self, epoch: u64) {
        self.row(epoch).ops += 1;
    }

    pub fn rows(&self) -> impl Iterator<Item = &EpochRow> {
        self.rows.values()
    }

    pub fn total_gas(&self) -> Gas {
        self.rows.values().map(|r| r.total_gas()).sum()
    }

    pub fn total_ops(&self) -> u64 {
        self.rows.values().map(|r| r.ops).sum()
    }

    pub fn per_op_gas(&self) -> f64 {
        let ops = self.total_ops();
        if ops == 0 {
            0.0
        } else {
            self.total_gas() as f64 / ops as f64
        }
    }

    /// Per-op gas over epochs `from..`, for converged-tail measurements.
    pub fn per_op_gas_from(&self, from_epoch: u64) -> f64 {
        let (gas, ops) = self
            .rows
            .values()
            .filter(|r| r.epoch >= from_epoch)
            .fold((0u64, 0u64), |(g, o), r| (g + r.total_gas(), o + r.ops));
        if ops == 0 {
            0.0
        } else {
            gas as f64 / ops as f64
        }
    }

    /// CSV export: `epoch,ops,tx_gas,storage_gas,verify_gas,total_gas,per_op_gas`.
    pub fn csv(&self) -> String {
        let mut out = String::from("epoch,ops,tx_gas,storage_gas,verify_gas,total_gas,per_op_gas\n");
        for r in self.rows.values() {
            let per_op = if r.ops == 0 {
                0.0
            } else {
                r.total_gas() as f64 / r.ops as f64
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.2}\n",
                r.epoch,
                r.ops,
                r.tx_gas,
                r.storage_gas,
                r.verify_gas,
                r.total_gas(),
                per_op
            ));
        }
        out
    }
}

/// A read observation: which write's value a gGet saw, and when.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreshnessEntry {
    pub key: Key,
    pub gget_t: u64,
    pub observed_put_t: u64,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub ledger: GasLedger,
    pub decision_log: Vec<(u64, Transition)>,
    pub freshness_log: Vec<FreshnessEntry>,
    /// Put times per key, indexed by version (version 0 is genesis).
    pub put_history: BTreeMap<Key, Vec<u64>>,
    /// Deliver transactions rejected by on-chain proof verification.
    pub integrity_failures: u64,
    pub delivered_ok: u64,
}

impl SimResult {
    pub fn decision_csv(&self) -> String {
        let mut out = String::from("epoch,key,old,new\n");
        for (epoch, t) in &self.decision_log {
            out.push_str(&format!("{},{},{},{}\n", epoch, t.key, t.old, t.new));
        }
        out
    }
}

/// True iff every gGet issued more than E + Pt + B·F after a gPut on the same
/// key observed that gPut's value or a later one. Reads inside the
/// concurrency window are excluded.
pub fn check_freshness(result: &SimResult, config: &SimConfig) -> bool {
    let bound = config.freshness_bound();
    result.freshness_log.iter().all(|e| {
        let Some(puts) = result.put_history.get(&e.key) else {
            return true;
        };
        let required = puts
            .iter()
            .copied()
            .filter(|&t| e.gget_t > t + bound)
            .max();
        match required {
            Some(t) => e.observed_put_t >= t,
            None => true,
        }
    })
}

/// The contract's view of a replicated record.
#[derive(Debug, Clone, Copy)]
struct Replica {
    words: u64,
    put_t: u64,
}

/// On-chain state of the storage-manager contract.
#[derive(Debug, Clone, Default)]
pub struct ChainState {
    root_hash: Option<Digest>,
    replicas: BTreeMap<Key, Replica>,
    event_log: Vec<(u64, Key)>,
}

impl ChainState {
    pub fn root(&self) -> Option<Digest> {
        self.root_hash
    }

    pub fn replica_keys(&self) -> Vec<Key> {
        self.replicas.keys().cloned().collect()
    }
}

fn value_bytes(version: u64, words: u64) -> Vec<u8> {
    let mut v = vec![0u8; (words * 32) as usize];
    v[..8].copy_from_slice(&version.to_le_bytes());
    v
}

fn version_of(value: &[u8]) -> u64 {
    let mut b = [0u8; 8];
    b.copy_from_slice(&value[..8]);
    u64::from_le_bytes(b)
}

#[derive(Debug)]
enum TxApply {
    Update {
        digest: Digest,
        upserts: Vec<(Key, u64, u64, u64)>, // key, words, version, put_t
        deletes: Vec<Key>,
        snapshot: Option<usize>,
    },
    Deliver {
        gget_t: u64,
        ok: bool,
        entries: Vec<(Key, u64, u64)>, // key, version, put_t
    },
}

struct KeyMeta {
    words: u64,
    version: u64,
}

struct Sim {
    cfg: SimConfig,
    chain: ChainState,
    live_tree: AdsTree,
    /// Tree snapshots by id; entries older than the in-force snapshot are
    /// freed (genesis stays for the stale-SP script).
    snapshots: BTreeMap<usize, AdsTree>,
    next_snapshot: usize,
    /// (finalization time, snapshot index) of every update tx, in order.
    update_schedule: Vec<(u64, usize)>,
    pending: BinaryHeap<Reverse<(u64, u64, usize)>>,
    pending_txs: Vec<Option<TxApply>>,
    decider: Option<Box<dyn Decider>>,
    keys: BTreeMap<Key, KeyMeta>,
    sorted_keys: Vec<Key>,
    put_history: BTreeMap<Key, Vec<u64>>,
    /// Keys the chain will hold replicated once all pending updates land.
    predicted_replicas: BTreeSet<Key>,
    epoch_ops: Vec<(Key, bool)>,
    epoch_writes: BTreeMap<Key, (u64, u64)>, // version, put_t of last write
    ledger: GasLedger,
    decision_log: Vec<(u64, Transition)>,
    freshness_log: Vec<FreshnessEntry>,
    integrity_failures: u64,
    delivered_ok: u64,
    seq: u64,
    /// Independent recount of every itemized transaction cost.
    recount: Gas,
}

impl Sim {
    fn new(cfg: SimConfig, workload: &[Operation]) -> Result<Self, SimError> {
        let cfg = cfg.validated()?;
        // Genesis: every key in the workload exists off-chain at version 0.
        let mut keys: BTreeMap<Key, KeyMeta> = BTreeMap::new();
        for op in workload {
            match op {
                Operation::Write { key, words } => {
                    let m = keys.entry(key.clone()).or_insert(KeyMeta {
                        words: *words,
                        version: 0,
                    });
                    m.words = m.words.max(*words);
                }
                Operation::Read { key } => {
                    keys.entry(key.clone()).or_insert(KeyMeta {
                        words: 1,
                        version: 0,
                    });
                }
                Operation::Scan { start_key, .. } => {
                    keys.entry(start_key.clone()).or_insert(KeyMeta {
                        words: 1,
                        version: 0,
                    });
                }
            }
        }
        let bl2 = cfg.policy == Policy::Bl2;
        let genesis_state = if bl2 { ReplState::R } else { ReplState::Nr };
        let records: Vec<Record> = keys
            .iter()
            .map(|(k, m)| {
                Record::new(k.clone(), value_bytes(0, m.words), genesis_state)
                    .expect("non-empty genesis value")
            })
            .collect();
        let live_tree = AdsTree::build(records)?;
        let mut chain = ChainState {
            root_hash: Some(live_tree.root_hash()),
            ..ChainState::default()
        };
        if bl2 {
            for (k, m) in &keys {
                chain.replicas.insert(
                    k.clone(),
                    Replica {
                        words: m.words,
                        put_t: 0,
                    },
                );
            }
        }
        let decider: Option<Box<dyn Decider>> = match cfg.policy {
            Policy::Memoryless(k) => Some(Box::new(MemorylessState::new(k)?)),
            Policy::Memorizing(k, d) => Some(Box::new(MemorizingState::new(k, d)?)),
            Policy::AdaptiveK1 { window } => Some(Box::new(AdaptiveKState::new(
                AdaptiveVariant::K1,
                window,
                cfg.schedule.default_k() as f64,
            )?)),
            Policy::AdaptiveK2 { window } => Some(Box::new(AdaptiveKState::new(
                AdaptiveVariant::K2,
                window,
                cfg.schedule.default_k() as f64,
            )?)),
            Policy::Bl1 | Policy::Bl2 => None,
        };
        let sorted_keys: Vec<Key> = keys.keys().cloned().collect();
        let put_history = keys.keys().map(|k| (k.clone(), vec![0u64])).collect();
        let predicted = if bl2 {
            keys.keys().cloned().collect()
        } else {
            BTreeSet::new()
        };
        Ok(Sim {
            cfg,
            chain,
            snapshots: BTreeMap::from([(0, live_tree.clone())]),
            next_snapshot: 1,
            live_tree,
            update_schedule: vec![(0, 0)],
            pending: BinaryHeap::new(),
            pending_txs: Vec::new(),
            decider,
            keys,
            sorted_keys,
            put_history,
            predicted_replicas: predicted,
            epoch_ops: Vec::new(),
            epoch_writes: BTreeMap::new(),
            ledger: GasLedger::default(),
            decision_log: Vec::new(),
            freshness_log: Vec::new(),
            integrity_failures: 0,
            delivered_ok: 0,
            seq: 0,
            recount: 0,
        })
    }

    fn epoch_of(&self, t: u64) -> u64 {
        t / self.cfg.epoch_len
    }

    fn submit(&mut self, submit_t: u64, apply: TxApply) {
        let final_t = self.cfg.finalize_at(submit_t);
        let idx = self.pending_txs.len();
        self.pending_txs.push(Some(apply));
        self.pending.push(Reverse((final_t, self.seq, idx)));
        self.seq += 1;
    }

    fn advance(&mut self, now: u64) {
        while let Some(&Reverse((ft, _, idx))) = self.pending.peek() {
            if ft > now {
                break;
            }
            self.pending.pop();
            let tx = self.pending_txs[idx].take().expect("tx applied once");
            self.apply_tx(tx);
        }
    }

    fn apply_tx(&mut self, tx: TxApply) {
        match tx {
            TxApply::Update {
                digest,
                upserts,
                deletes,
                snapshot,
            } => {
                // contract update(): only the DO reaches this path.
                self.chain.root_hash = Some(digest);
                for (key, words, _version, put_t) in upserts {
                    self.chain.replicas.insert(key, Replica { words, put_t });
                }
                for key in deletes {
                    self.chain.replicas.remove(&key);
                }
                if let Some(snapshot) = snapshot {
                    debug_assert_eq!(self.snapshots[&snapshot].root_hash(), digest);
                    self.snapshots.retain(|&i, _| i == 0 || i >= snapshot);
                }
            }
            TxApply::Deliver { gget_t, ok, entries } => {
                if !ok {
                    self.integrity_failures += 1;
                    return;
                }
                self.delivered_ok += 1;
                for (key, _version, put_t) in entries {
                    self.freshness_log.push(FreshnessEntry {
                        key,
                        gget_t,
                        observed_put_t: put_t,
                    });
                }
            }
        }
    }

    /// Snapshot in force on-chain at time t (counting already-scheduled
    /// updates): the honest SP proves against this.
    fn snapshot_at(&self, t: u64) -> usize {
        self.update_schedule
            .iter()
            .rev()
            .find(|&&(ft, _)| ft <= t)
            .map(|&(_, idx)| idx)
            .unwrap_or(0)
    }

    fn charge(&mut self, epoch: u64, tx: Gas, storage: Gas, verify: Gas) {
        self.ledger.add(epoch, tx, storage, verify);
        self.recount += tx + storage + verify;
    }

    fn proof_words(p: &MembershipProof) -> u64 {
        p.siblings.len() as u64 + 1
    }

    /// gGet read path for one key. Returns true on a synchronous replica hit.
    fn gget(&mut self, t: u64, key: &Key) -> bool {
        let epoch = self.epoch_of(t);
        if let Some(rep) = self.chain.replicas.get(key).copied() {
            // replica hit: synchronous callback, no request event
            self.charge(epoch, 0, self.cfg.schedule.read_cost(rep.words), 0);
            self.freshness_log.push(FreshnessEntry {
                key: key.clone(),
                gget_t: t,
                observed_put_t: rep.put_t,
            });
            return true;
        }
        self.chain.event_log.push((t, key.clone()));
        self.watchdog_deliver(t, key.clone());
        false
    }

    /// The SP watchdog observes the request after Pt and answers with a
    /// proven deliver transaction.
    fn watchdog_deliver(&mut self, gget_t: u64, key: Key) {
        let submit_t = gget_t + self.cfg.propagation_delay;
        let final_t = self.cfg.finalize_at(submit_t);
        let root = self.snapshots[&self.snapshot_at(final_t)].root_hash();
        let proof_snapshot = match self.cfg.sp_behavior {
            SpBehavior::StaleServe => 0,
            _ => self.snapshot_at(final_t),
        };
        let snap = &self.snapshots[&proof_snapshot];
        let record = snap
            .find(&key)
            .expect("genesis seeds every key")
            .clone();
        let proof = match snap.prove_key(&record.key, record.state) {
            KeyProof::Present(p) => p,
            KeyProof::Absent(_) => unreachable!("record exists in snapshot"),
        };
        let mut delivered = record.clone();
        if self.cfg.sp_behavior == SpBehavior::ForgeValue {
            let forged_version = version_of(&delivered.value) + 1_000_000;
            delivered.value = value_bytes(forged_version, delivered.value_words);
        }
        let ok = ads::verify_membership(&root, &delivered, &proof);
        let version = version_of(&delivered.value);
        let put_t = self
            .put_history
            .get(&key)
            .and_then(|v| v.get(version as usize).copied())
            .unwrap_or(0);
        // deliver gas: payload + proof words, one hash per proof node
        let words = delivered.value_words + Self::proof_words(&proof);
        let hashes = proof.siblings.len() as u64 + 1;
        self.charge(
            self.epoch_of(submit_t),
            self.cfg.schedule.tx_cost(words),
            0,
            hashes * self.cfg.schedule.hash_cost(1),
        );
        self.submit(
            submit_t,
            TxApply::Deliver {
                gget_t,
                ok,
                entries: vec![(key, version, put_t)],
            },
        );
    }

    /// Scan read path: replica hits served on-chain, all NR records in range
    /// answered by a single range-proof deliver.
    fn scan(&mut self, t: u64, start_key: &Key, count: u64) {
        let range: Vec<Key> = self
            .sorted_keys
            .iter()
            .filter(|k| *k >= start_key)
            .take(count as usize)
            .cloned()
            .collect();
        let Some(end_key) = range.last().cloned() else {
            return;
        };
        let mut missing = Vec::new();
        for key in &range {
            if let Some(rep) = self.chain.replicas.get(key).copied() {
                self.charge(self.epoch_of(t), 0, self.cfg.schedule.read_cost(rep.words), 0);
                self.freshness_log.push(FreshnessEntry {
                    key: key.clone(),
                    gget_t: t,
                    observed_put_t: rep.put_t,
                });
            } else {
                missing.push(key.clone());
            }
        }
        if missing.is_empty() {
            return;
        }
        self.chain.event_log.push((t, start_key.clone()));
        self.range_deliver(t, start_key.clone(), end_key);
    }

    fn range_deliver(&mut self, gget_t: u64, start: Key, end: Key) {
        let submit_t = gget_t + self.cfg.propagation_delay;
        let final_t = self.cfg.finalize_at(submit_t);
        let root = self.snapshots[&self.snapshot_at(final_t)].root_hash();
        let proof_snapshot = match self.cfg.sp_behavior {
            SpBehavior::StaleServe => 0,
            _ => self.snapshot_at(final_t),
        };
        let snap = &self.snapshots[&proof_snapshot];
        let mut proof: IntervalProof = snap.prove_range(&start, &end);
        if self.cfg.sp_behavior == SpBehavior::OmitFromRange {
            let victim = proof.leaves.iter().position(|l| {
                matches!(&l.content, ads::LeafContent::Valid(r)
                    if r.state == ReplState::Nr && r.key >= start && r.key <= end)
            });
            if let Some(i) = victim {
                proof.leaves.remove(i);
            }
        }
        let ok = ads::verify_range(&root, &start, &end, &proof);
        let matches = ads::range_records(&start, &end, &proof);
        let mut entries = Vec::new();
        let mut payload_words = 0u64;
        for r in &matches {
            let version = version_of(&r.value);
            let put_t = self
                .put_history
                .get(&r.key)
                .and_then(|v| v.get(version as usize).copied())
                .unwrap_or(0);
            entries.push((r.key.clone(), version, put_t));
            payload_words += r.value_words;
        }
        // proof words: one per sibling digest plus metadata word per leaf,
        // plus payloads of non-matching boundary leaves
        let mut proof_words = 0u64;
        let mut hashes = 0u64;
        for leaf in &proof.leaves {
            proof_words += leaf.siblings.len() as u64 + 1;
            hashes += leaf.siblings.len() as u64 + 1;
            if let ads::LeafContent::Valid(r) = &leaf.content {
                if !(r.state == ReplState::Nr && r.key >= start && r.key <= end) {
                    proof_words += r.value_words;
                }
            }
        }
        self.charge(
            self.epoch_of(submit_t),
            self.cfg.schedule.tx_cost(payload_words + proof_words),
            0,
            hashes * self.cfg.schedule.hash_cost(1),
        );
        self.submit(submit_t, TxApply::Deliver { gget_t, ok, entries });
    }

    /// BL2 write path: immediate on-chain transaction carrying the value and
    /// a digest refresh, no batching.
    fn bl2_write(&mut self, t: u64, key: &Key, words: u64) {
        let meta = self.keys.get_mut(key).expect("seeded key");
        meta.version += 1;
        let version = meta.version;
        self.put_history.get_mut(key).expect("seeded").push(t);
        self.live_tree
            .apply_update(key, ReplState::R, value_bytes(version, words))
            .expect("bl2 keys live in R group");
        // every key stays replicated, so no deliver ever consults a BL2
        // snapshot: skip the clone
        let digest = self.live_tree.root_hash();
        let sched = &self.cfg.schedule;
        self.charge(
            self.epoch_of(t),
            sched.tx_cost(words),
            sched.update_cost(words) + sched.update_cost(1),
            0,
        );
        self.submit(
            t,
            TxApply::Update {
                digest,
                upserts: vec![(key.clone(), words, version, t)],
                deletes: Vec::new(),
                snapshot: None,
            },
        );
    }

    /// GRuB/BL1 write path: the value goes to the SP off-chain; the chain
    /// learns of it through the next epoch transaction.
    fn grub_write(&mut self, t: u64, key: &Key, words: u64) {
        let meta = self.keys.get_mut(key).expect("seeded key");
        meta.version += 1;
        meta.words = words;
        let version = meta.version;
        self.put_history.get_mut(key).expect("seeded").push(t);
        let state = self
            .live_tree
            .find(key)
            .expect("seeded key in tree")
            .state;
        self.live_tree
            .apply_update(key, state, value_bytes(version, words))
            .expect("key exists");
        self.epoch_writes.insert(key.clone(), (version, t));
    }

    /// Epoch close: run the decision policy over the federated trace, apply
    /// relocations, and submit the batched update transaction.
    fn end_epoch(&mut self, t: u64) -> Result<(), SimError> {
        let epoch = self.epoch_of(t);
        // decision pass over the epoch's operations, in arrival order
        let mut net: BTreeMap<Key, (ReplState, ReplState)> = BTreeMap::new();
        if let Some(decider) = self.decider.as_mut() {
            let ops = std::mem::take(&mut self.epoch_ops);
            for (key, is_write) in &ops {
                for tr in decider.step(key, *is_write) {
                    net.entry(tr.key.clone())
                        .and_modify(|e| e.1 = tr.new)
                        .or_insert((tr.old, tr.new));
                }
            }
        } else {
            self.epoch_ops.clear();
        }
        let transitions: Vec<(Key, ReplState, ReplState)> = net
            .into_iter()
            .filter(|(_, (old, new))| old != new)
            .map(|(k, (old, new))| (k, old, new))
            .collect();
        for (key, tr) in transitions.iter().map(|(k, o, n)| {
            (
                k.clone(),
                Transition {
                    key: k.clone(),
                    old: *o,
                    new: *n,
                },
            )
        }) {
            let _ = key;
            self.decision_log.push((epoch, tr));
        }
        // relocate transitioned records in the SP tree
        for (key, old, new) in &transitions {
            let value = self
                .live_tree
                .get(key, *old)
                .expect("transitioned key exists")
                .value
                .clone();
            self.live_tree.apply_relocate(key, *old, *new, value)?;
        }
        self.live_tree.compact_if_needed();

        let writes = std::mem::take(&mut self.epoch_writes);
        if writes.is_empty() && transitions.is_empty() && !self.cfg.always_digest {
            return Ok(());
        }
        // assemble the batch: replicated-record writes and transitions
        let mut upserts: BTreeMap<Key, (u64, u64, u64)> = BTreeMap::new();
        let mut deletes: Vec<Key> = Vec::new();
        let mut to_r: BTreeSet<Key> = BTreeSet::new();
        for (key, old, new) in &transitions {
            match new {
                ReplState::R => {
                    to_r.insert(key.clone());
                    let meta = &self.keys[key];
                    let put_t = *self.put_history[key].last().expect("genesis put");
                    upserts.insert(key.clone(), (meta.words, meta.version, put_t));
                }
                ReplState::Nr => {
                    debug_assert_eq!(*old, ReplState::R);
                    deletes.push(key.clone());
                }
            }
        }
        for (key, (version, put_t)) in &writes {
            let replicated_after = if deletes.contains(key) {
                false
            } else {
                to_r.contains(key) || self.predicted_replicas.contains(key)
            };
            if replicated_after {
                let words = self.keys[key].words;
                upserts.insert(key.clone(), (words, *version, *put_t));
            }
        }
        // gas: one transaction with digest word + key/value words per upsert
        // + one key word per delete; storage per Table rates
        let sched = self.cfg.schedule;
        let mut payload_words = 1u64;
        let mut storage = sched.update_cost(1); // digest slot
        for (key, (words, _, _)) in &upserts {
            payload_words += words + 1;
            storage += if self.predicted_replicas.contains(key) {
                sched.update_cost(*words)
            } else {
                sched.insert_cost(*words)
            };
        }
        for _ in &deletes {
            payload_words += 1;
            storage += sched.update_cost(1);
        }
        for key in upserts.keys() {
            self.predicted_replicas.insert(key.clone());
        }
        for key in &deletes {
            self.predicted_replicas.remove(key);
        }
        self.charge(epoch, sched.tx_cost(payload_words), storage, 0);

        let snapshot = self.next_snapshot;
        self.next_snapshot += 1;
        self.snapshots.insert(snapshot, self.live_tree.clone());
        let final_t = self.cfg.finalize_at(t);
        self.update_schedule.push((final_t, snapshot));
        self.submit(
            t,
            TxApply::Update {
                digest: self.live_tree.root_hash(),
                upserts: upserts
                    .into_iter()
                    .map(|(k, (w, v, p))| (k, w, v, p))
                    .collect(),
                deletes,
                snapshot: Some(snapshot),
            },
        );
        Ok(())
    }

    fn step_op(&mut self, t: u64, op: &Operation) -> Result<(), SimError> {
        self.advance(t);
        self.ledger.count_op(self.epoch_of(t));
        let bl2 = self.cfg.policy == Policy::Bl2;
        match op {
            Operation::Write { key, words } => {
                if bl2 {
                    self.bl2_write(t, key, *words);
                } else {
                    self.grub_write(t, key, *words);
                    self.epoch_ops.push((key.clone(), true));
                }
            }
            Operation::Read { key } => {
                self.gget(t, key);
                if !bl2 {
                    self.epoch_ops.push((key.clone(), false));
                }
            }
            Operation::Scan { start_key, count } => {
                self.scan(t, start_key, *count);
                if !bl2 {
                    let range: Vec<Key> = self
                        .sorted_keys
                        .iter()
                        .filter(|k| *k >= start_key)
                        .take(*count as usize)
                        .cloned()
                        .collect();
                    for key in range {
                        self.epoch_ops.push((key, false));
                    }
                }
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<SimResult, SimError> {
        self.advance(u64::MAX);
        if self.ledger.total_gas() != self.recount {
            return Err(SimError::Invariant(format!(
                "ledger total {} != itemized recount {}",
                self.ledger.total_gas(),
                self.recount
            )));
        }
        Ok(SimResult {
            ledger: self.ledger,
            decision_log: self.decision_log,
            freshness_log: self.freshness_log,
            put_history: self.put_history,
            integrity_failures: self.integrity_failures,
            delivered_ok: self.delivered_ok,
        })
    }
}

/// Runs a workload under the configured policy. Deterministic for identical
/// (workload, config).
pub fn run(workload: &Trace, config: &SimConfig) -> Result<SimResult, SimError> {
    let mut sim = Sim::new(config.clone(), workload)?;
    let epoch_len = sim.cfg.epoch_len;
    let bl2 = sim.cfg.policy == Policy::Bl2;
    for (i, op) in workload.iter().enumerate() {
        let t = i as u64;
        sim.step_op(t, op)?;
        if !bl2 && (t + 1) % epoch_len == 0 {
            sim.end_epoch(t)?;
        }
    }
    if !bl2 && !workload.is_empty() && (workload.len() as u64) % epoch_len != 0 {
        sim.end_epoch(workload.len() as u64 - 1)?;
    }
    sim.finish()
}

/// Runs the static baselines: BL1 never replicates; BL2 replicates
/// everything and writes through immediately.
pub fn run_baseline(
    workload: &Trace,
    config: &SimConfig,
    which: Policy,
) -> Result<SimResult, SimError> {
    let mut cfg = config.clone();
    match which {
        Policy::Bl1 | Policy::Bl2 => cfg.policy = which,
        _ => return Err(SimError::BadConfig("run_baseline takes Bl1 or Bl2")),
    }
    run(workload, &cfg)
}
