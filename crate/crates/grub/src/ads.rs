//! Authenticated data structure: a binary Merkle tree over the state-grouped,
//! key-sorted record layout.
//!
//! The storage provider (SP) holds the full tree; the data owner (DO) tracks
//! only the root and advances it from proofs. Membership and range proofs let
//! an untrusted SP serve reads without being able to forge, omit, or replay
//! records.
//!
//! Layout: NR records first, then R records, keys ascending within each
//! group. Relocated records leave an invalid marker behind; the replacement
//! leaf is paired with its canonical predecessor (or successor when none
//! exists), forming a new internal node in place of that leaf. Odd node
//! counts promote the last node instead of duplicating it.

use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::trace::{Key, Record, ReplState};

const TAG_LEAF: u8 = 0x00;
const TAG_INTERNAL: u8 = 0x01;
const TAG_EMPTY: u8 = 0x02;
const TAG_INVALID: u8 = 0x03;

/// 256-bit node digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest(pub [u8; 32]);

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self)
    }
}

fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// Leaf encoding: state byte, key length, key, value. Fully determines the
/// leaf hash so roots are bit-exact across implementations.
pub fn leaf_encoding(key: &Key, state: ReplState, value: &[u8]) -> Vec<u8> {
    let kb = key.as_str().as_bytes();
    let mut enc = Vec::with_capacity(1 + 4 + kb.len() + value.len());
    enc.push(match state {
        ReplState::Nr => 0,
        ReplState::R => 1,
    });
    enc.extend_from_slice(&(kb.len() as u32).to_le_bytes());
    enc.extend_from_slice(kb);
    enc.extend_from_slice(value);
    enc
}

pub fn leaf_hash(key: &Key, state: ReplState, value: &[u8]) -> Digest {
    hash_parts(&[&[TAG_LEAF], &leaf_encoding(key, state, value)])
}

fn invalid_hash(original_encoding: &[u8]) -> Digest {
    hash_parts(&[&[TAG_INVALID], original_encoding])
}

fn internal_hash(left: &Digest, right: &Digest) -> Digest {
    hash_parts(&[&[TAG_INTERNAL], &left.0, &right.0])
}

/// Root of a tree with no leaves.
pub fn empty_root() -> Digest {
    hash_parts(&[&[TAG_EMPTY]])
}

/// Contents of a leaf: a live record or the marker left behind by a
/// relocation. Markers carry the original encoding so verifiers recompute the
/// tagged hash themselves; a marker can never be passed off as a live record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LeafContent {
    Valid(Record),
    Invalid(Vec<u8>),
}

impl LeafContent {
    pub fn hash(&self) -> Digest {
        match self {
            LeafContent::Valid(r) => leaf_hash(&r.key, r.state, &r.value),
            LeafContent::Invalid(enc) => invalid_hash(enc),
        }
    }

    fn canonical_pos(&self) -> Option<(u8, &Key)> {
        match self {
            LeafContent::Valid(r) => Some((group_of(r.state), &r.key)),
            LeafContent::Invalid(_) => None,
        }
    }
}

fn group_of(state: ReplState) -> u8 {
    match state {
        ReplState::Nr => 0,
        ReplState::R => 1,
    }
}

/// One step of an authentication path: the sibling digest, which side it sits
/// on, and the leaf-index span it covers (used by the DO to line up
/// overlapping paths during relocation).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofNode {
    pub hash: Digest,
    /// True when the sibling is the left child.
    pub is_left: bool,
    pub span: (u64, u64),
}

/// Authentication path from one leaf to the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipProof {
    pub leaf_index: u64,
    pub content: LeafContent,
    pub siblings: Vec<ProofNode>,
}

impl MembershipProof {
    fn fold(&self, leaf: Digest) -> Digest {
        fold_path(leaf, &self.siblings)
    }

    /// True when this path belongs to the leftmost leaf.
    fn is_leftmost(&self) -> bool {
        self.siblings.iter().all(|s| !s.is_left)
    }

    /// True when this path belongs to the rightmost leaf.
    fn is_rightmost(&self) -> bool {
        self.siblings.iter().all(|s| s.is_left)
    }
}

fn fold_path(leaf: Digest, siblings: &[ProofNode]) -> Digest {
    let mut h = leaf;
    for s in siblings {
        h = if s.is_left {
            internal_hash(&s.hash, &h)
        } else {
            internal_hash(&h, &s.hash)
        };
    }
    h
}

/// Recomputes the path from `record` through the proof's siblings and checks
/// the result against `root`.
pub fn verify_membership(root: &Digest, record: &Record, proof: &MembershipProof) -> bool {
    proof.fold(leaf_hash(&record.key, record.state, &record.value)) == *root
}

/// Proof for a contiguous run of leaves. Used both for range completeness and
/// for key absence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalProof {
    pub leaves: Vec<MembershipProof>,
}

/// Result of asking the SP to prove a key: either the record is present, or
/// the proof pins down the gap where it would have to be.
#[derive(Debug, Clone)]
pub enum KeyProof {
    Present(MembershipProof),
    Absent(IntervalProof),
}

/// Structural adjacency: `a` and `b` are consecutive leaves under the same
/// root. Checked from path shape alone; no SP-supplied index is trusted.
fn adjacent(a: &MembershipProof, b: &MembershipProof) -> bool {
    // a must be the rightmost leaf of the left subtree at the merge point and
    // b the leftmost leaf of the right subtree.
    let Some(ma) = a.siblings.iter().position(|s| !s.is_left) else {
        return false;
    };
    let Some(mb) = b.siblings.iter().position(|s| s.is_left) else {
        return false;
    };
    let a_sub = fold_path(a.content.hash(), &a.siblings[..ma]);
    let b_sub = fold_path(b.content.hash(), &b.siblings[..mb]);
    if a.siblings[ma].hash != b_sub || b.siblings[mb].hash != a_sub {
        return false;
    }
    // Above the merge the two paths coincide.
    let ra = &a.siblings[ma + 1..];
    let rb = &b.siblings[mb + 1..];
    ra.len() == rb.len()
        && ra
            .iter()
            .zip(rb)
            .all(|(x, y)| x.hash == y.hash && x.is_left == y.is_left)
}

fn verify_interval(root: &Digest, proof: &IntervalProof) -> bool {
    for leaf in &proof.leaves {
        if leaf.fold(leaf.content.hash()) != *root {
            return false;
        }
    }
    proof.leaves.windows(2).all(|w| adjacent(&w[0], &w[1]))
}

/// Verifies that `proof` covers every NR record with key in
/// `[start, end]` under `root`. On success the matching records are exactly
/// [`range_records`] of the proof.
pub fn verify_range(root: &Digest, start: &Key, end: &Key, proof: &IntervalProof) -> bool {
    if start > end {
        return false;
    }
    if proof.leaves.is_empty() {
        // Only an empty tree has nothing to anchor the range to.
        return *root == empty_root();
    }
    if !verify_interval(root, proof) {
        return false;
    }
    let first = proof.leaves.first().unwrap();
    let last = proof.leaves.last().unwrap();
    let left_ok = first.is_leftmost()
        || match first.content.canonical_pos() {
            Some((g, k)) => (g, k) < (0, start),
            None => false,
        };
    let right_ok = last.is_rightmost()
        || match last.content.canonical_pos() {
            Some((g, k)) => (g, k) > (0, end),
            None => false,
        };
    left_ok && right_ok
}

/// The NR records within `[start, end]` contained in a verified range proof.
pub fn range_records(start: &Key, end: &Key, proof: &IntervalProof) -> Vec<Record> {
    proof
        .leaves
        .iter()
        .filter_map(|l| match &l.content {
            LeafContent::Valid(r)
                if r.state == ReplState::Nr && r.key >= *start && r.key <= *end =>
            {
                Some(r.clone())
            }
            _ => None,
        })
        .collect()
}

/// Verifies an absence proof for `(key, state)`: a contiguous run whose valid
/// boundaries straddle the key's canonical slot, with nothing but invalid
/// markers in between.
pub fn verify_absence(root: &Digest, key: &Key, state: ReplState, proof: &IntervalProof) -> bool {
    if proof.leaves.is_empty() {
        return *root == empty_root();
    }
    if !verify_interval(root, proof) {
        return false;
    }
    let target = (group_of(state), key);
    let first = proof.leaves.first().unwrap();
    let last = proof.leaves.last().unwrap();
    let left_ok = first.is_leftmost()
        || first
            .content
            .canonical_pos()
            .map_or(false, |p| p < target);
    let right_ok = last.is_rightmost()
        || last.content.canonical_pos().map_or(false, |p| p > target);
    if !(left_ok && right_ok) {
        return false;
    }
    // No interior leaf may be the record itself.
    proof
        .leaves
        .iter()
        .all(|l| l.content.canonical_pos() != Some(target))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AdsError {
    #[error("records not in canonical order or duplicate key at position {0}")]
    NotCanonical(usize),
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("leaf ({key}, {state}) not found")]
    LeafNotFound { key: String, state: ReplState },
    #[error("proof failed verification against the current root")]
    IntegrityViolation,
    #[error("relocation target slot mismatch")]
    BadRelocation,
}

type NodeId = u32;

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf(LeafContent),
    Internal { left: NodeId, right: NodeId },
}

#[derive(Debug, Clone)]
struct Node {
    parent: Option<NodeId>,
    hash: Digest,
    leaf_count: u64,
    kind: NodeKind,
}

/// The SP-side Merkle tree: full leaf set plus an ordered index of the valid
/// leaves.
#[derive(Debug, Clone)]
pub struct AdsTree {
    nodes: Vec<Node>,
    root: Option<NodeId>,
    index: BTreeMap<(u8, String), NodeId>,
    invalid_count: u64,
}

impl AdsTree {
    /// Builds the tree over records already in canonical order with unique
    /// keys.
    pub fn build(records: Vec<Record>) -> Result<Self, AdsError> {
        for (i, w) in records.windows(2).enumerate() {
            if w[0].canonical_cmp(&w[1]) != std::cmp::Ordering::Less {
                return Err(AdsError::NotCanonical(i + 1));
            }
        }
        {
            let mut keys: Vec<&Key> = records.iter().map(|r| &r.key).collect();
            keys.sort();
            for w in keys.windows(2) {
                if w[0] == w[1] {
                    return Err(AdsError::DuplicateKey(w[0].as_str().to_string()));
                }
            }
        }
        let mut tree = AdsTree {
            nodes: Vec::new(),
            root: None,
            index: BTreeMap::new(),
            invalid_count: 0,
        };
        let mut level: Vec<NodeId> = Vec::with_capacity(records.len());
        for r in records {
            let pos = (group_of(r.state), r.key.as_str().to_string());
            let content = LeafContent::Valid(r);
            let id = tree.push_node(Node {
                parent: None,
                hash: content.hash(),
                leaf_count: 1,
                kind: NodeKind::Leaf(content),
            });
            tree.index.insert(pos, id);
            level.push(id);
        }
        // Pair left to right; an odd tail promotes to the next level.
        while level.len() > 1 {
            let mut next = Vec::with_capacity((level.len() + 1) / 2);
            let mut it = level.chunks(2);
            for chunk in &mut it {
                match chunk {
                    [l, r] => {
                        let (l, r) = (*l, *r);
                        let hash = internal_hash(&tree.nodes[l as usize].hash, &tree.nodes[r as usize].hash);
                        let leaf_count =
                            tree.nodes[l as usize].leaf_count + tree.nodes[r as usize].leaf_count;
                        let id = tree.push_node(Node {
                            parent: None,
                            hash,
                            leaf_count,
                            kind: NodeKind::Internal { left: l, right: r },
                        });
                        tree.nodes[l as usize].parent = Some(id);
                        tree.nodes[r as usize].parent = Some(id);
                        next.push(id);
                    }
                    [single] => next.push(*single),
                    _ => unreachable!(),
                }
            }
            level = next;
        }
        tree.root = level.first().copied();
        Ok(tree)
    }

    fn push_node(&mut self, node: Node) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(node);
        id
    }

    pub fn root_hash(&self) -> Digest {
        match self.root {
            Some(id) => self.nodes[id as usize].hash,
            None => empty_root(),
        }
    }

    pub fn leaf_count(&self) -> u64 {
        self.root.map_or(0, |id| self.nodes[id as usize].leaf_count)
    }

    pub fn valid_count(&self) -> u64 {
        self.index.len() as u64
    }

    pub fn invalid_count(&self) -> u64 {
        self.invalid_count
    }

    /// All live records in canonical order.
    pub fn valid_records(&self) -> Vec<Record> {
        self.index
            .values()
            .filter_map(|&id| match &self.nodes[id as usize].kind {
                NodeKind::Leaf(LeafContent::Valid(r)) => Some(r.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn get(&self, key: &Key, state: ReplState) -> Option<&Record> {
        let id = self
            .index
            .get(&(group_of(state), key.as_str().to_string()))?;
        match &self.nodes[*id as usize].kind {
            NodeKind::Leaf(LeafContent::Valid(r)) => Some(r),
            _ => None,
        }
    }

    /// Looks a key up in either group.
    pub fn find(&self, key: &Key) -> Option<&Record> {
        self.get(key, ReplState::Nr).or_else(|| self.get(key, ReplState::R))
    }

    fn leaf_index_of(&self, id: NodeId) -> u64 {
        let mut idx = 0u64;
        let mut cur = id;
        while let Some(p) = self.nodes[cur as usize].parent {
            if let NodeKind::Internal { left, right } = self.nodes[p as usize].kind {
                if right == cur {
                    idx += self.nodes[left as usize].leaf_count;
                }
            }
            cur = p;
        }
        idx
    }

    fn leaf_id_at(&self, index: u64) -> Option<NodeId> {
        let mut cur = self.root?;
        if index >= self.nodes[cur as usize].leaf_count {
            return None;
        }
        let mut index = index;
        loop {
            match self.nodes[cur as usize].kind {
                NodeKind::Leaf(_) => return Some(cur),
                NodeKind::Internal { left, right } => {
                    let lc = self.nodes[left as usize].leaf_count;
                    if index < lc {
                        cur = left;
                    } else {
                        index -= lc;
                        cur = right;
                    }
                }
            }
        }
    }

    fn prove_leaf(&self, id: NodeId) -> MembershipProof {
        let content = match &self.nodes[id as usize].kind {
            NodeKind::Leaf(c) => c.clone(),
            NodeKind::Internal { .. } => unreachable!("prove_leaf on internal node"),
        };
        let leaf_index = self.leaf_index_of(id);
        let mut span = (leaf_index, leaf_index);
        let mut siblings = Vec::new();
        let mut cur = id;
        while let Some(p) = self.nodes[cur as usize].parent {
            if let NodeKind::Internal { left, right } = self.nodes[p as usize].kind {
                let (sib, is_left) = if cur == left { (right, false) } else { (left, true) };
                let sc = self.nodes[sib as usize].leaf_count;
                let sib_span = if is_left {
                    (span.0 - sc, span.0 - 1)
                } else {
                    (span.1 + 1, span.1 + sc)
                };
                siblings.push(ProofNode {
                    hash: self.nodes[sib as usize].hash,
                    is_left,
                    span: sib_span,
                });
                span = (span.0.min(sib_span.0), span.1.max(sib_span.1));
            }
            cur = p;
        }
        MembershipProof {
            leaf_index,
            content,
            siblings,
        }
    }

    /// Membership proof for a present `(key, state)` leaf, or an absence
    /// proof pinning its canonical gap.
    pub fn prove_key(&self, key: &Key, state: ReplState) -> KeyProof {
        let pos = (group_of(state), key.as_str().to_string());
        if let Some(&id) = self.index.get(&pos) {
            return KeyProof::Present(self.prove_leaf(id));
        }
        KeyProof::Absent(self.interval_around(&pos, &pos))
    }

    /// Contiguous leaf interval from the valid predecessor of `lo` to the
    /// valid successor of `hi` (canonical positions), clamped to the tree
    /// edges.
    fn interval_around(&self, lo: &(u8, String), hi: &(u8, String)) -> IntervalProof {
        if self.root.is_none() {
            return IntervalProof { leaves: Vec::new() };
        }
        let first = self
            .index
            .range(..lo.clone())
            .next_back()
            .map(|(_, &id)| self.leaf_index_of(id))
            .unwrap_or(0);
        let last = self
            .index
            .range((
                std::ops::Bound::Excluded(hi.clone()),
                std::ops::Bound::Unbounded,
            ))
            .next()
            .map(|(_, &id)| self.leaf_index_of(id))
            .unwrap_or(self.leaf_count() - 1);
        let leaves = (first..=last)
            .map(|i| self.prove_leaf(self.leaf_id_at(i).expect("index in range")))
            .collect();
        IntervalProof { leaves }
    }

    /// Completeness proof for the NR records with keys in `[start, end]`.
    pub fn prove_range(&self, start: &Key, end: &Key) -> IntervalProof {
        let lo = (0u8, start.as_str().to_string());
        let hi = (0u8, end.as_str().to_string());
        self.interval_around(&lo, &hi)
    }

    fn bubble_up(&mut self, from: NodeId) {
        let mut cur = self.nodes[from as usize].parent;
        while let Some(p) = cur {
            if let NodeKind::Internal { left, right } = self.nodes[p as usize].kind {
                self.nodes[p as usize].hash =
                    internal_hash(&self.nodes[left as usize].hash, &self.nodes[right as usize].hash);
                self.nodes[p as usize].leaf_count =
                    self.nodes[left as usize].leaf_count + self.nodes[right as usize].leaf_count;
            }
            cur = self.nodes[p as usize].parent;
        }
    }

    /// In-place value update of an existing leaf; no state change.
    pub fn apply_update(&mut self, key: &Key, state: ReplState, value: Vec<u8>) -> Result<(), AdsError> {
        let pos = (group_of(state), key.as_str().to_string());
        let &id = self.index.get(&pos).ok_or_else(|| AdsError::LeafNotFound {
            key: key.as_str().to_string(),
            state,
        })?;
        let record = Record::new(key.clone(), value, state).expect("non-empty value");
        let content = LeafContent::Valid(record);
        self.nodes[id as usize].hash = content.hash();
        self.nodes[id as usize].kind = NodeKind::Leaf(content);
        self.bubble_up(id);
        Ok(())
    }

    /// Inserts a brand-new record next to its canonical neighbor.
    pub fn apply_insert(&mut self, record: Record) -> Result<(), AdsError> {
        if self.find(&record.key).is_some() {
            return Err(AdsError::DuplicateKey(record.key.as_str().to_string()));
        }
        let pos = (group_of(record.state), record.key.as_str().to_string());
        let content = LeafContent::Valid(record);
        match self.pairing_anchor(&pos) {
            None => {
                // First valid leaf. An empty arena starts fresh; a tree of
                // only invalid markers pairs with the leftmost marker.
                if self.root.is_none() {
                    let id = self.push_node(Node {
                        parent: None,
                        hash: content.hash(),
                        leaf_count: 1,
                        kind: NodeKind::Leaf(content),
                    });
                    self.index.insert(pos, id);
                    self.root = Some(id);
                } else {
                    let anchor = self.leaf_id_at(0).expect("non-empty tree");
                    let id = self.insert_at(anchor, content, false);
                    self.index.insert(pos, id);
                }
            }
            Some((anchor, after)) => {
                let id = self.insert_at(anchor, content, after);
                self.index.insert(pos, id);
            }
        }
        Ok(())
    }

    /// The valid leaf the new record pairs with, and whether it goes after
    /// (right of) that leaf.
    fn pairing_anchor(&self, pos: &(u8, String)) -> Option<(NodeId, bool)> {
        if let Some((_, &id)) = self.index.range(..pos.clone()).next_back() {
            return Some((id, true));
        }
        self.index
            .range((
                std::ops::Bound::Excluded(pos.clone()),
                std::ops::Bound::Unbounded,
            ))
            .next()
            .map(|(_, &id)| (id, false))
    }

    /// Replaces `anchor` with an internal node pairing it with `content`.
    fn insert_at(&mut self, anchor: NodeId, content: LeafContent, after: bool) -> NodeId {
        let new_leaf = self.push_node(Node {
            parent: None,
            hash: content.hash(),
            leaf_count: 1,
            kind: NodeKind::Leaf(content),
        });
        let parent = self.nodes[anchor as usize].parent;
        let (left, right) = if after {
            (anchor, new_leaf)
        } else {
            (new_leaf, anchor)
        };
        let pair = self.push_node(Node {
            parent,
            hash: internal_hash(&self.nodes[left as usize].hash, &self.nodes[right as usize].hash),
            leaf_count: 2,
            kind: NodeKind::Internal { left, right },
        });
        self.nodes[anchor as usize].parent = Some(pair);
        self.nodes[new_leaf as usize].parent = Some(pair);
        match parent {
            None => self.root = Some(pair),
            Some(p) => {
                if let NodeKind::Internal { left, right } = &mut self.nodes[p as usize].kind {
                    if *left == anchor {
                        *left = pair;
                    } else if *right == anchor {
                        *right = pair;
                    }
                }
                self.bubble_up(pair);
            }
        }
        new_leaf
    }

    /// Moves a record between state groups: the old leaf becomes an invalid
    /// marker and the record re-enters at its new canonical slot.
    pub fn apply_relocate(
        &mut self,
        key: &Key,
        old_state: ReplState,
        new_state: ReplState,
        value: Vec<u8>,
    ) -> Result<(), AdsError> {
        let old_pos = (group_of(old_state), key.as_str().to_string());
        let &id = self.index.get(&old_pos).ok_or_else(|| AdsError::LeafNotFound {
            key: key.as_str().to_string(),
            state: old_state,
        })?;
        let old_enc = match &self.nodes[id as usize].kind {
            NodeKind::Leaf(LeafContent::Valid(r)) => leaf_encoding(&r.key, r.state, &r.value),
            _ => unreachable!("index points at valid leaf"),
        };
        self.index.remove(&old_pos);
        let marker = LeafContent::Invalid(old_enc);
        self.nodes[id as usize].hash = marker.hash();
        self.nodes[id as usize].kind = NodeKind::Leaf(marker);
        self.invalid_count += 1;
        self.bubble_up(id);

        if self.index.is_empty() {
            // Relocating the only record: rebuild to the single-leaf tree.
            let record = Record::new(key.clone(), value, new_state).expect("non-empty value");
            *self = AdsTree::build(vec![record])?;
            return Ok(());
        }
        let record = Record::new(key.clone(), value, new_state).expect("non-empty value");
        self.apply_insert(record)
    }

    /// Rebuilds from the live records when invalid markers exceed half the
    /// leaves. Returns true when a rebuild ran.
    pub fn compact_if_needed(&mut self) -> bool {
        let total = self.leaf_count();
        if total == 0 || self.invalid_count * 2 <= total {
            return false;
        }
        *self = AdsTree::build(self.valid_records()).expect("live records stay canonical");
        true
    }
}

/// DO-side root advance for an in-place value update, computed from the SP's
/// proof alone.
pub fn do_update_root(
    old_root: &Digest,
    proof: &MembershipProof,
    old_record: &Record,
    new_record: &Record,
) -> Result<Digest, AdsError> {
    if !verify_membership(old_root, old_record, proof) {
        return Err(AdsError::IntegrityViolation);
    }
    if old_record.key != new_record.key || old_record.state != new_record.state {
        return Err(AdsError::BadRelocation);
    }
    Ok(proof.fold(leaf_hash(&new_record.key, new_record.state, &new_record.value)))
}

/// DO-side root advance for a state transition. The old leaf becomes an
/// invalid marker; the record re-enters paired with the neighbor whose proof
/// is supplied. `new_position_proof` is `None` only when the relocated record
/// is the sole live record.
pub fn do_relocate_root(
    old_root: &Digest,
    old_proof: &MembershipProof,
    new_position_proof: Option<&MembershipProof>,
    record: &Record,
    new_state: ReplState,
) -> Result<Digest, AdsError> {
    let old_record = match &old_proof.content {
        LeafContent::Valid(r) => r.clone(),
        LeafContent::Invalid(_) => return Err(AdsError::IntegrityViolation),
    };
    if old_record.key != record.key || old_record.state == new_state {
        return Err(AdsError::BadRelocation);
    }
    if !verify_membership(old_root, &old_record, old_proof) {
        return Err(AdsError::IntegrityViolation);
    }
    let new_record = Record::new(record.key.clone(), record.value.clone(), new_state)
        .expect("non-empty value");

    let Some(anchor_proof) = new_position_proof else {
        // Sole live record: the rebuilt tree is the single new leaf.
        return Ok(leaf_hash(&new_record.key, new_state, &new_record.value));
    };
    let anchor = match &anchor_proof.content {
        LeafContent::Valid(r) => r.clone(),
        LeafContent::Invalid(_) => return Err(AdsError::IntegrityViolation),
    };
    if !verify_membership(old_root, &anchor, anchor_proof) {
        return Err(AdsError::IntegrityViolation);
    }

    // Fold the invalidation path, recording every updated ancestor by the
    // leaf span it covers.
    let marker = invalid_hash(&leaf_encoding(&old_record.key, old_record.state, &old_record.value));
    let mut updated: Vec<((u64, u64), Digest)> = Vec::new();
    let mut span = (old_proof.leaf_index, old_proof.leaf_index);
    let mut h = marker;
    updated.push((span, h));
    for s in &old_proof.siblings {
        h = if s.is_left {
            internal_hash(&s.hash, &h)
        } else {
            internal_hash(&h, &s.hash)
        };
        span = (span.0.min(s.span.0), span.1.max(s.span.1));
        updated.push((span, h));
    }

    // The new leaf pairs with the anchor, then the anchor's path is refolded
    // with post-invalidation sibling values substituted where the paths
    // overlap.
    let new_leaf = leaf_hash(&new_record.key, new_state, &new_record.value);
    let anchor_pos = canonical_pair(&anchor);
    let new_pos = canonical_pair(&new_record);
    let after = anchor_pos < new_pos;
    let anchor_hash = anchor_proof.content.hash();
    let mut h = if after {
        internal_hash(&anchor_hash, &new_leaf)
    } else {
        internal_hash(&new_leaf, &anchor_hash)
    };
    for s in &anchor_proof.siblings {
        let sib_hash = updated
            .iter()
            .find(|(sp, _)| *sp == s.span)
            .map(|(_, d)| *d)
            .unwrap_or(s.hash);
        h = if s.is_left {
            internal_hash(&sib_hash, &h)
        } else {
            internal_hash(&h, &sib_hash)
        };
    }
    Ok(h)
}

fn canonical_pair(r: &Record) -> (u8, String) {
    (group_of(r.state), r.key.as_str().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(key: &str, state: ReplState, val: u64) -> Record {
        Record::new(key.into(), val.to_le_bytes().repeat(4), state).unwrap()
    }

    /// The four-record layout from the worked examples: NR pair (w, y) on the
    /// left, R pair (x, z) on the right.
    fn fixture() -> Vec<Record> {
        vec![
            rec("w", ReplState::Nr, 100),
            rec("y", ReplState::Nr, 200),
            rec("x", ReplState::R, 300),
            rec("z", ReplState::R, 400),
        ]
    }

    fn fixture_hashes() -> [Digest; 4] {
        let recs = fixture();
        [
            leaf_hash(&recs[0].key, recs[0].state, &recs[0].value),
            leaf_hash(&recs[1].key, recs[1].state, &recs[1].value),
            leaf_hash(&recs[2].key, recs[2].state, &recs[2].value),
            leaf_hash(&recs[3].key, recs[3].state, &recs[3].value),
        ]
    }

    #[test]
    fn build_matches_manual_four_leaf_shape() {
        let tree = AdsTree::build(fixture()).unwrap();
        let [h4, h5, h6, h7] = fixture_hashes();
        let h2 = internal_hash(&h4, &h5);
        let h3 = internal_hash(&h6, &h7);
        assert_eq!(tree.root_hash(), internal_hash(&h2, &h3));
    }

    #[test]
    fn single_and_empty_roots() {
        let r = rec("a", ReplState::Nr, 1);
        let tree = AdsTree::build(vec![r.clone()]).unwrap();
        assert_eq!(tree.root_hash(), leaf_hash(&r.key, r.state, &r.value));
        let empty = AdsTree::build(vec![]).unwrap();
        assert_eq!(empty.root_hash(), empty_root());
    }

    #[test]
    fn build_rejects_disorder_and_duplicates() {
        let mut recs = fixture();
        recs.swap(0, 1);
        assert!(matches!(AdsTree::build(recs), Err(AdsError::NotCanonical(_))));
        let recs = vec![rec("w", ReplState::Nr, 1), rec("w", ReplState::R, 2)];
        assert!(matches!(AdsTree::build(recs), Err(AdsError::DuplicateKey(_))));
    }

    #[test]
    fn membership_proof_for_w_is_h5_h3() {
        let tree = AdsTree::build(fixture()).unwrap();
        let [_, h5, h6, h7] = fixture_hashes();
        let h3 = internal_hash(&h6, &h7);
        let KeyProof::Present(proof) = tree.prove_key(&"w".into(), ReplState::Nr) else {
            panic!("w is present");
        };
        let sibs: Vec<Digest> = proof.siblings.iter().map(|s| s.hash).collect();
        assert_eq!(sibs, vec![h5, h3]);
        assert!(verify_membership(
            &tree.root_hash(),
            &rec("w", ReplState::Nr, 100),
            &proof
        ));
    }

    #[test]
    fn single_leaf_proof_is_empty() {
        let tree = AdsTree::build(vec![rec("a", ReplState::Nr, 1)]).unwrap();
        let KeyProof::Present(proof) = tree.prove_key(&"a".into(), ReplState::Nr) else {
            panic!()
        };
        assert!(proof.siblings.is_empty());
    }

    #[test]
    fn absent_key_yields_boundary_proof() {
        let tree = AdsTree::build(fixture()).unwrap();
        let KeyProof::Absent(proof) = tree.prove_key(&"x".into(), ReplState::Nr) else {
            panic!("x is not NR");
        };
        assert!(verify_absence(
            &tree.root_hash(),
            &"x".into(),
            ReplState::Nr,
            &proof
        ));
        // the straddling neighbors are w and y
        assert_eq!(proof.leaves.len(), 2);
        // and the proof does not verify for a key outside the gap
        assert!(!verify_absence(
            &tree.root_hash(),
            &"z".into(),
            ReplState::Nr,
            &proof
        ));
    }

    #[test]
    fn tampered_payload_rejected() {
        let tree = AdsTree::build(fixture()).unwrap();
        let KeyProof::Present(proof) = tree.prove_key(&"w".into(), ReplState::Nr) else {
            panic!()
        };
        let honest = rec("w", ReplState::Nr, 100);
        for byte in 0..honest.value.len() {
            for bit in 0..8 {
                let mut tampered = honest.clone();
                tampered.value[byte] ^= 1 << bit;
                assert!(!verify_membership(&tree.root_hash(), &tampered, &proof));
            }
        }
    }

    #[test]
    fn tampered_sibling_rejected() {
        let tree = AdsTree::build(fixture()).unwrap();
        let KeyProof::Present(mut proof) = tree.prove_key(&"y".into(), ReplState::Nr) else {
            panic!()
        };
        proof.siblings[0].hash = Digest([0xab; 32]);
        assert!(!verify_membership(
            &tree.root_hash(),
            &rec("y", ReplState::Nr, 200),
            &proof
        ));
    }

    #[test]
    fn range_proof_matches_appendix_example() {
        let tree = AdsTree::build(fixture()).unwrap();
        let proof = tree.prove_range(&"x".into(), &"z".into());
        assert!(verify_range(
            &tree.root_hash(),
            &"x".into(),
            &"z".into(),
            &proof
        ));
        let matches = range_records(&"x".into(), &"z".into(), &proof);
        assert_eq!(matches, vec![rec("y", ReplState::Nr, 200)]);
        // interval is [w, y, x_R]: boundary w below, the R group entry above
        let contents: Vec<&LeafContent> = proof.leaves.iter().map(|l| &l.content).collect();
        assert_eq!(contents.len(), 3);
        assert_eq!(contents[0], &LeafContent::Valid(rec("w", ReplState::Nr, 100)));
        assert_eq!(contents[2], &LeafContent::Valid(rec("x", ReplState::R, 300)));
    }

    #[test]
    fn range_with_no_matches_still_verifies() {
        let tree = AdsTree::build(fixture()).unwrap();
        let proof = tree.prove_range(&"wa".into(), &"xz".into());
        assert!(verify_range(
            &tree.root_hash(),
            &"wa".into(),
            &"xz".into(),
            &proof
        ));
        assert!(range_records(&"wa".into(), &"xz".into(), &proof).is_empty());
    }

    #[test]
    fn omitted_range_member_rejected() {
        let tree = AdsTree::build(fixture()).unwrap();
        let mut proof = tree.prove_range(&"x".into(), &"z".into());
        // adversarial SP drops the matching record y from the interval
        proof.leaves.remove(1);
        assert!(!verify_range(
            &tree.root_hash(),
            &"x".into(),
            &"z".into(),
            &proof
        ));
    }

    #[test]
    fn update_root_matches_appendix_chain() {
        let tree = AdsTree::build(fixture()).unwrap();
        let [_, h5, h6, h7] = fixture_hashes();
        let old = rec("w", ReplState::Nr, 100);
        let new = rec("w", ReplState::Nr, 110);
        let KeyProof::Present(proof) = tree.prove_key(&"w".into(), ReplState::Nr) else {
            panic!()
        };
        let root = do_update_root(&tree.root_hash(), &proof, &old, &new).unwrap();
        let h4p = leaf_hash(&new.key, new.state, &new.value);
        let h2p = internal_hash(&h4p, &h5);
        let h3 = internal_hash(&h6, &h7);
        assert_eq!(root, internal_hash(&h2p, &h3));
        // and matches the SP applying the same update
        let mut sp = tree.clone();
        sp.apply_update(&"w".into(), ReplState::Nr, new.value.clone()).unwrap();
        assert_eq!(sp.root_hash(), root);
    }

    #[test]
    fn update_root_noop_returns_old_root() {
        let tree = AdsTree::build(fixture()).unwrap();
        let r = rec("y", ReplState::Nr, 200);
        let KeyProof::Present(proof) = tree.prove_key(&"y".into(), ReplState::Nr) else {
            panic!()
        };
        assert_eq!(
            do_update_root(&tree.root_hash(), &proof, &r, &r).unwrap(),
            tree.root_hash()
        );
    }

    #[test]
    fn update_root_rejects_tampered_proof() {
        let tree = AdsTree::build(fixture()).unwrap();
        let KeyProof::Present(mut proof) = tree.prove_key(&"w".into(), ReplState::Nr) else {
            panic!()
        };
        proof.siblings[1].hash = Digest([7; 32]);
        let old = rec("w", ReplState::Nr, 100);
        let new = rec("w", ReplState::Nr, 110);
        assert_eq!(
            do_update_root(&tree.root_hash(), &proof, &old, &new),
            Err(AdsError::IntegrityViolation)
        );
    }

    #[test]
    fn relocate_root_matches_appendix_chain() {
        let tree = AdsTree::build(fixture()).unwrap();
        let [h4, h5, _, h7] = fixture_hashes();
        let old = rec("x", ReplState::R, 300);
        let new = rec("x", ReplState::Nr, 310);
        let KeyProof::Present(old_proof) = tree.prove_key(&"x".into(), ReplState::R) else {
            panic!()
        };
        // new slot (NR, x) sits between w and y; predecessor is w
        let KeyProof::Present(anchor_proof) = tree.prove_key(&"w".into(), ReplState::Nr) else {
            panic!()
        };
        let root = do_relocate_root(
            &tree.root_hash(),
            &old_proof,
            Some(&anchor_proof),
            &new,
            ReplState::Nr,
        )
        .unwrap();
        // appendix chain: h6' = H(invalid x), h3' = H(h6'||h7),
        // h8 = H(<x,NR,310>), h9 = H(h4||h8), h2' = H(h9||h5), h1'' = H(h2'||h3')
        let h6p = invalid_hash(&leaf_encoding(&old.key, old.state, &old.value));
        let h3p = internal_hash(&h6p, &h7);
        let h8 = leaf_hash(&new.key, ReplState::Nr, &new.value);
        let h9 = internal_hash(&h4, &h8);
        let h2p = internal_hash(&h9, &h5);
        assert_eq!(root, internal_hash(&h2p, &h3p));
        // SP-side relocation agrees
        let mut sp = tree.clone();
        sp.apply_relocate(&"x".into(), ReplState::R, ReplState::Nr, new.value.clone())
            .unwrap();
        assert_eq!(sp.root_hash(), root);
    }

    #[test]
    fn relocate_only_record_rebuilds_single_leaf() {
        let tree = AdsTree::build(vec![rec("a", ReplState::R, 5)]).unwrap();
        let new = rec("a", ReplState::Nr, 6);
        let KeyProof::Present(proof) = tree.prove_key(&"a".into(), ReplState::R) else {
            panic!()
        };
        let root =
            do_relocate_root(&tree.root_hash(), &proof, None, &new, ReplState::Nr).unwrap();
        assert_eq!(root, leaf_hash(&new.key, ReplState::Nr, &new.value));
        let mut sp = tree.clone();
        sp.apply_relocate(&"a".into(), ReplState::R, ReplState::Nr, new.value.clone())
            .unwrap();
        assert_eq!(sp.root_hash(), root);
    }

    #[test]
    fn compaction_runs_past_half_invalid() {
        let mut tree = AdsTree::build(fixture()).unwrap();
        tree.apply_relocate(&"w".into(), ReplState::Nr, ReplState::R, vec![1; 32])
            .unwrap();
        assert!(!tree.compact_if_needed());
        tree.apply_relocate(&"y".into(), ReplState::Nr, ReplState::R, vec![2; 32])
            .unwrap();
        tree.apply_relocate(&"x".into(), ReplState::R, ReplState::Nr, vec![3; 32])
            .unwrap();
        tree.apply_relocate(&"z".into(), ReplState::R, ReplState::Nr, vec![4; 32])
            .unwrap();
        tree.apply_relocate(&"w".into(), ReplState::R, ReplState::Nr, vec![5; 32])
            .unwrap();
        assert!(tree.invalid_count() * 2 > tree.leaf_count());
        assert!(tree.compact_if_needed());
        assert_eq!(tree.invalid_count(), 0);
        assert_eq!(tree.valid_count(), 4);
        let rebuilt = AdsTree::build(tree.valid_records()).unwrap();
        assert_eq!(rebuilt.root_hash(), tree.root_hash());
    }

    #[test]
    fn stale_proof_fails_against_new_root() {
        let mut tree = AdsTree::build(fixture()).unwrap();
        let KeyProof::Present(stale) = tree.prove_key(&"w".into(), ReplState::Nr) else {
            panic!()
        };
        tree.apply_update(&"w".into(), ReplState::Nr, rec("w", ReplState::Nr, 110).value)
            .unwrap();
        assert!(!verify_membership(
            &tree.root_hash(),
            &rec("w", ReplState::Nr, 100),
            &stale
        ));
    }
}
