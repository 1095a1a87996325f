//! Donation allocation: weighting, weighted sampling without replacement,
//! exact integer allocation, and a mock settlement ledger.
//!
//! Amounts are integer base units. The proportional shares are floored and
//! leftover units handed out by descending fractional remainder, so a payout
//! always sums exactly to the donated amount; should extreme weight skew
//! leave a sampled recipient at zero, units are moved from the largest
//! allocations until everyone holds at least one.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::reputation::ReputationVector;
use crate::rng::derive_rng;
use crate::types::NodeId;

/// Lottery policy: `W_j = (R_j + epsilon)^alpha`, `recipients` sampled.
#[derive(Debug, Clone, Copy)]
pub struct DonationPolicy {
    pub epsilon: f64,
    pub alpha: f64,
    pub recipients: usize,
}

impl Default for DonationPolicy {
    fn default() -> Self {
        DonationPolicy {
            epsilon: 0.01,
            alpha: 0.5,
            recipients: 50,
        }
    }
}

impl DonationPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig("epsilon must be >= 0".into()));
        }
        if self.alpha <= 0.0 || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig("alpha must be > 0".into()));
        }
        if self.recipients == 0 {
            return Err(Error::InvalidConfig("recipients must be >= 1".into()));
        }
        Ok(())
    }
}

/// Lottery weights over the eligible set: nodes with positive reputation,
/// excluding the evaluator. Errors when nobody is eligible.
pub fn weights(reputation: &ReputationVector, policy: &DonationPolicy) -> Result<BTreeMap<NodeId, f64>> {
    policy.validate()?;
    let out: BTreeMap<NodeId, f64> = reputation
        .scores
        .iter()
        .filter(|(node, score)| **node != reputation.evaluator && **score > 0.0)
        .map(|(node, score)| (*node, (score + policy.epsilon).powf(policy.alpha)))
        .collect();
    if out.is_empty() {
        return Err(Error::NoEligibleRecipients);
    }
    Ok(out)
}

/// Weighted random sampling without replacement: sequential draws, each
/// proportional to the remaining weights. Deterministic given the seed.
pub fn sample_recipients(weights: &BTreeMap<NodeId, f64>, n: usize, seed: u64) -> BTreeSet<NodeId> {
    let mut rng = derive_rng(seed, &[0x10_77]);
    let mut pool: Vec<(NodeId, f64)> = weights.iter().map(|(k, v)| (*k, *v)).collect();
    let mut chosen = BTreeSet::new();
    while chosen.len() < n && !pool.is_empty() {
        let total: f64 = pool.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            // only zero-weight nodes remain: deterministic fill by node id
            for (node, _) in pool.drain(..) {
                if chosen.len() == n {
                    break;
                }
                chosen.insert(node);
            }
            break;
        }
        let draw = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = pool.len() - 1;
        for (i, (_, w)) in pool.iter().enumerate() {
            acc += w;
            if draw < acc {
                pick = i;
                break;
            }
        }
        let (node, _) = pool.remove(pick);
        chosen.insert(node);
    }
    chosen
}

/// Splits `amount` among the sampled recipients proportionally to their
/// weights: floored shares, then leftover units by descending fractional
/// remainder (ties by ascending node id). Every recipient ends with at least
/// one unit and the total is exactly `amount`.
pub fn allocate(
    sampled: &BTreeSet<NodeId>,
    weights: &BTreeMap<NodeId, f64>,
    amount: u64,
) -> Result<Vec<(NodeId, u64)>> {
    if sampled.is_empty() {
        return Err(Error::NoEligibleRecipients);
    }
    if amount < sampled.len() as u64 {
        return Err(Error::DonationTooSmall {
            amount,
            recipients: sampled.len(),
        });
    }
    let mut total_w = 0.0;
    let mut entries: Vec<(NodeId, f64)> = Vec::with_capacity(sampled.len());
    for node in sampled {
        let w = *weights
            .get(node)
            .ok_or_else(|| Error::InvalidConfig(format!("sampled node {node} has no weight")))?;
        total_w += w;
        entries.push((*node, w));
    }
    if total_w <= 0.0 {
        return Err(Error::InvalidConfig("total weight of sampled set is zero".into()));
    }

    let mut alloc: Vec<(NodeId, u64, f64)> = entries
        .iter()
        .map(|(node, w)| {
            let share = amount as f64 * w / total_w;
            (*node, share.floor() as u64, share - share.floor())
        })
        .collect();
    let assigned: u64 = alloc.iter().map(|(_, a, _)| a).sum();
    let mut leftover = amount - assigned;

    // leftover units by descending remainder, ties by ascending node id
    let mut order: Vec<usize> = (0..alloc.len()).collect();
    order.sort_by(|&a, &b| {
        alloc[b]
            .2
            .partial_cmp(&alloc[a].2)
            .unwrap()
            .then(alloc[a].0.cmp(&alloc[b].0))
    });
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        alloc[i].1 += 1;
        leftover -= 1;
    }

    // extreme skew can still floor someone to zero: top up from the largest
    loop {
        let Some(zero_at) = alloc.iter().position(|(_, a, _)| *a == 0) else {
            break;
        };
        let donor_at = alloc
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .expect("allocation is non-empty");
        debug_assert!(alloc[donor_at].1 > 1, "amount >= recipients guarantees headroom");
        alloc[donor_at].1 -= 1;
        alloc[zero_at].1 += 1;
    }

    Ok(alloc.into_iter().map(|(n, a, _)| (n, a)).collect())
}

/// Signed payout message with a canonical, byte-exact serialization.
///
/// Layout: four length-prefixed fields in fixed order, each prefixed by its
/// little-endian `u32` byte length:
/// donor (`u64` LE), total (`u64` LE), entries (recipient/amount `u64` LE
/// pairs, sorted by recipient), epoch (`i64` LE).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayoutMessage {
    pub donor: NodeId,
    pub total: u64,
    pub entries: Vec<(NodeId, u64)>,
    pub epoch: i64,
    pub signature: Vec<u8>,
}

impl PayoutMessage {
    /// Builds and signs a payout from an allocation.
    pub fn build(
        donor: NodeId,
        mut entries: Vec<(NodeId, u64)>,
        epoch: i64,
        key: &[u8; 32],
    ) -> PayoutMessage {
        entries.sort_by_key(|(n, _)| *n);
        let total = entries.iter().map(|(_, a)| a).sum();
        let mut msg = PayoutMessage {
            donor,
            total,
            entries,
            epoch,
            signature: Vec::new(),
        };
        msg.signature = sign(key, &msg.canonical_bytes());
        msg
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut field = |bytes: &[u8]| {
            out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
            out.extend_from_slice(bytes);
        };
        field(&self.donor.0.to_le_bytes());
        field(&self.total.to_le_bytes());
        let mut entries = Vec::with_capacity(self.entries.len() * 16);
        for (node, amount) in &self.entries {
            entries.extend_from_slice(&node.0.to_le_bytes());
            entries.extend_from_slice(&amount.to_le_bytes());
        }
        field(&entries);
        field(&self.epoch.to_le_bytes());
        out
    }

    /// Digest of the canonical bytes; doubles as the replay-detection id.
    pub fn message_id(&self) -> [u8; 32] {
        let digest = Sha256::digest(self.canonical_bytes());
        digest.into()
    }

    fn validate(&self) -> Result<()> {
        let sum: u64 = self.entries.iter().map(|(_, a)| a).sum();
        if sum != self.total {
            return Err(Error::MalformedPayout(format!(
                "entries sum {sum} != total {}",
                self.total
            )));
        }
        if self.entries.iter().any(|(_, a)| *a == 0) {
            return Err(Error::MalformedPayout("zero-amount entry".into()));
        }
        let distinct: BTreeSet<NodeId> = self.entries.iter().map(|(n, _)| *n).collect();
        if distinct.len() != self.entries.len() {
            return Err(Error::MalformedPayout("duplicate recipient".into()));
        }
        Ok(())
    }
}

// Stub keyed-hash signature: SHA-256 over key || message. The scheme is
// pluggable behind `sign`/`verify`; the simulator only needs determinism and
// tamper evidence.
fn sign(key: &[u8; 32], bytes: &[u8]) -> Vec<u8> {
    let mut hasher = Sha256::new();
    hasher.update(key);
    hasher.update(bytes);
    hasher.finalize().to_vec()
}

fn verify(key: &[u8; 32], bytes: &[u8], signature: &[u8]) -> bool {
    sign(key, bytes) == signature
}

/// Append-only mock settlement ledger: balances, signing keys, and executed
/// payout ids for replay protection.
#[derive(Debug, Default, Clone)]
pub struct MockLedger {
    balances: BTreeMap<NodeId, u64>,
    keys: BTreeMap<NodeId, [u8; 32]>,
    executed: BTreeSet<[u8; 32]>,
    log: Vec<PayoutMessage>,
}

impl MockLedger {
    pub fn new() -> MockLedger {
        MockLedger::default()
    }

    pub fn register(&mut self, node: NodeId, key: [u8; 32], balance: u64) {
        self.keys.insert(node, key);
        self.balances.insert(node, balance);
    }

    pub fn balance(&self, node: NodeId) -> u64 {
        self.balances.get(&node).copied().unwrap_or(0)
    }

    pub fn total_supply(&self) -> u64 {
        self.balances.values().sum()
    }

    pub fn payouts(&self) -> &[PayoutMessage] {
        &self.log
    }

    /// Settles a payout atomically: signature, replay, and balance checks,
    /// then debit/credit. Replays are rejected without state change.
    pub fn execute_payout(&mut self, message: &PayoutMessage) -> Result<()> {
        message.validate()?;
        let key = self
            .keys
            .get(&message.donor)
            .ok_or(Error::SignatureInvalid)?;
        if !verify(key, &message.canonical_bytes(), &message.signature) {
            return Err(Error::SignatureInvalid);
        }
        if self.executed.contains(&message.message_id()) {
            return Err(Error::DuplicatePayout);
        }
        let donor_balance = self.balance(message.donor);
        if donor_balance < message.total {
            return Err(Error::InsufficientBalance {
                have: donor_balance,
                need: message.total,
            });
        }
        self.balances.insert(message.donor, donor_balance - message.total);
        for (node, amount) in &message.entries {
            *self.balances.entry(*node).or_insert(0) += amount;
        }
        self.executed.insert(message.message_id());
        self.log.push(message.clone());
        Ok(())
    }
}

/// Frequency of inclusion of each node over many sampling seeds; shared by
/// tests and the donation demo.
pub fn inclusion_frequency(
    weights: &BTreeMap<NodeId, f64>,
    n: usize,
    trials: usize,
    seed: u64,
) -> BTreeMap<NodeId, f64> {
    let mut counts: BTreeMap<NodeId, usize> = weights.keys().map(|k| (*k, 0)).collect();
    for t in 0..trials {
        for node in sample_recipients(weights, n, derive_rng(seed, &[t as u64]).random()) {
            *counts.get_mut(&node).unwrap() += 1;
        }
    }
    counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / trials as f64))
        .collect()
}
