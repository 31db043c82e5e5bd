//! Blockchain cost model: the five Ethereum cost functions plus the derived
//! off-chain-read unit cost.
//!
//! All costs are linear in the number of 32-byte words. The schedule is
//! immutable after construction and shared by every other module for gas
//! accounting and for deriving the replication threshold `K`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gas units.
pub type Gas = u64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GasScheduleError {
    #[error("gas schedule field `{0}` must be strictly positive")]
    NonPositiveField(&'static str),
    #[error("gas schedule ordering violated: insert > update > tx-per-word > read must hold")]
    OrderingViolated,
}

/// Per-word gas costs of the modeled chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GasSchedule {
    /// Base cost of any transaction.
    pub tx_base: Gas,
    /// Marginal cost per 32-byte word of transaction payload.
    pub tx_per_word: Gas,
    /// Cost per word of writing a fresh storage slot.
    pub insert_per_word: Gas,
    /// Cost per word of overwriting an existing storage slot.
    pub update_per_word: Gas,
    /// Cost per word of reading contract storage.
    pub read_per_word: Gas,
    /// Base cost of a hash computation.
    pub hash_base: Gas,
    /// Cost per word hashed.
    pub hash_per_word: Gas,
}

impl Default for GasSchedule {
    fn default() -> Self {
        GasSchedule {
            tx_base: 21_000,
            tx_per_word: 2_176,
            insert_per_word: 20_000,
            update_per_word: 5_000,
            read_per_word: 200,
            hash_base: 30,
            hash_per_word: 6,
        }
    }
}

impl GasSchedule {
    /// Validates the schedule invariants, returning the schedule on success.
    pub fn validated(self) -> Result<Self, GasScheduleError> {
        let fields = [
            ("tx_base", self.tx_base),
            ("tx_per_word", self.tx_per_word),
            ("insert_per_word", self.insert_per_word),
            ("update_per_word", self.update_per_word),
            ("read_per_word", self.read_per_word),
            ("hash_base", self.hash_base),
            ("hash_per_word", self.hash_per_word),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(GasScheduleError::NonPositiveField(name));
            }
        }
        if !(self.insert_per_word > self.update_per_word
            && self.update_per_word > self.tx_per_word
            && self.tx_per_word > self.read_per_word)
        {
            return Err(GasScheduleError::OrderingViolated);
        }
        Ok(self)
    }

    /// Cost of a transaction carrying `words` payload words.
    pub fn tx_cost(&self, words: u64) -> Gas {
        self.tx_base + self.tx_per_word * words
    }

    /// Cost of writing `words` fresh storage slots.
    pub fn insert_cost(&self, words: u64) -> Gas {
        self.insert_per_word * words
    }

    /// Cost of overwriting `words` existing storage slots.
    pub fn update_cost(&self, words: u64) -> Gas {
        self.update_per_word * words
    }

    /// Cost of reading `words` words of contract storage.
    pub fn read_cost(&self, words: u64) -> Gas {
        self.read_per_word * words
    }

    /// Cost of hashing `words` words of input.
    pub fn hash_cost(&self, words: u64) -> Gas {
        self.hash_base + self.hash_per_word * words
    }

    /// Unit gas to move one word of data from off-chain onto the chain:
    /// the marginal per-word transaction cost, excluding the amortized base.
    pub fn off_chain_read_unit_cost(&self) -> Gas {
        self.tx_per_word
    }

    /// The replication threshold `K`: the number of off-chain reads whose
    /// marginal cost equals one on-chain storage update. Floor, minimum 1.
    pub fn default_k(&self) -> u32 {
        let k = self.update_per_word / self.off_chain_read_unit_cost();
        (k as u32).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tx_cost_matches_table() {
        let s = GasSchedule::default();
        assert_eq!(s.tx_cost(0), 21_000);
        assert_eq!(s.tx_cost(1), 23_176);
        assert_eq!(s.tx_cost(10), 42_760);
    }

    #[test]
    fn linear_costs_match_table() {
        let s = GasSchedule::default();
        assert_eq!(s.insert_cost(3), 60_000);
        assert_eq!(s.update_cost(0), 0);
        assert_eq!(s.hash_cost(2), 42);
        assert_eq!(s.read_cost(1), 200);
    }

    #[test]
    fn off_chain_read_unit_cost_is_marginal_tx_cost() {
        assert_eq!(GasSchedule::default().off_chain_read_unit_cost(), 2_176);
        let s = GasSchedule {
            tx_per_word: 1_000,
            ..GasSchedule::default()
        };
        assert_eq!(s.off_chain_read_unit_cost(), 1_000);
        let s = GasSchedule {
            tx_per_word: 4_000,
            insert_per_word: 20_001,
            update_per_word: 5_000,
            ..GasSchedule::default()
        };
        assert_eq!(s.validated().unwrap().off_chain_read_unit_cost(), 4_000);
    }

    #[test]
    fn default_k_floors_with_min_one() {
        assert_eq!(GasSchedule::default().default_k(), 2);
        let s = GasSchedule {
            update_per_word: 2_177,
            ..GasSchedule::default()
        };
        assert_eq!(s.default_k(), 1);
        let s = GasSchedule {
            update_per_word: 21_760,
            insert_per_word: 30_000,
            ..GasSchedule::default()
        };
        assert_eq!(s.validated().unwrap().default_k(), 10);
        // ratio below one clamps to the minimum
        let s = GasSchedule {
            tx_per_word: 6_000,
            update_per_word: 7_000,
            ..GasSchedule::default()
        };
        assert_eq!(s.default_k(), 1);
    }

    #[test]
    fn validation_rejects_bad_schedules() {
        let zero = GasSchedule {
            tx_base: 0,
            ..GasSchedule::default()
        };
        assert_eq!(
            zero.validated(),
            Err(GasScheduleError::NonPositiveField("tx_base"))
        );
        let unordered = GasSchedule {
            insert_per_word: 4_000,
            ..GasSchedule::default()
        };
        assert_eq!(unordered.validated(), Err(GasScheduleError::OrderingViolated));
    }

    proptest! {
        #[test]
        fn costs_are_linear(a in 0u64..10_000, b in 0u64..10_000) {
            let s = GasSchedule::default();
            prop_assert_eq!(s.tx_cost(a + b) + s.tx_base, s.tx_cost(a) + s.tx_cost(b));
            prop_assert_eq!(s.insert_cost(a + b), s.insert_cost(a) + s.insert_cost(b));
            prop_assert_eq!(s.update_cost(a + b), s.update_cost(a) + s.update_cost(b));
            prop_assert_eq!(s.read_cost(a + b), s.read_cost(a) + s.read_cost(b));
            prop_assert_eq!(s.hash_cost(a + b) + s.hash_base, s.hash_cost(a) + s.hash_cost(b));
        }

        #[test]
        fn costs_are_monotone(a in 0u64..10_000, d in 0u64..10_000) {
            let s = GasSchedule::default();
            prop_assert!(s.tx_cost(a + d) >= s.tx_cost(a));
            prop_assert!(s.insert_cost(a + d) >= s.insert_cost(a));
            prop_assert!(s.hash_cost(a + d) >= s.hash_cost(a));
        }

        #[test]
        fn default_k_at_least_one(tx in 1u64..50_000, upd in 1u64..200_000) {
            let s = GasSchedule {
                tx_per_word: tx,
                update_per_word: upd,
                ..GasSchedule::default()
            };
            prop_assert!(s.default_k() >= 1);
        }
    }
}
