//! XOR inter-flow coding: neighbor knowledge, decodability, coding-option
//! search and encode/decode.
//!
//! Payloads are modelled as 64-bit tags; XOR on tags mirrors XOR on packet
//! bodies of equal length, so the algebra can be checked without carrying
//! bytes around.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::ops::{BitXor, BitXorAssign};

use thiserror::Error;

use crate::ids::{FlowId, NodeId, PacketId};

/// Largest queue the exhaustive search accepts.
pub const EXHAUSTIVE_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodingError {
    #[error("reception report from {0}, which is not a neighbor")]
    UnknownNeighbor(NodeId),
    #[error("packet {0} is not available to the coder")]
    UnknownPacket(PacketId),
    #[error("output queue is empty")]
    EmptyQueue,
    #[error("queue of {len} packets exceeds the exhaustive search limit of {limit}")]
    OracleScope { len: usize, limit: usize },
    #[error("packet {0} appears twice in one coding option")]
    DuplicateMember(PacketId),
    #[error("two members share next hop {0}")]
    NextHopCollision(NodeId),
    #[error("option is not decodable by every next hop")]
    Undecodable,
    #[error("{receiver} is not a next hop of this coded packet")]
    Misdelivery { receiver: NodeId },
    #[error("{receiver} cannot decode: missing native {missing}")]
    DecodeFailure { receiver: NodeId, missing: PacketId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PayloadTag(pub u64);

impl BitXor for PayloadTag {
    type Output = PayloadTag;

    fn bitxor(self, rhs: Self) -> Self {
        PayloadTag(self.0 ^ rhs.0)
    }
}

impl BitXorAssign for PayloadTag {
    fn bitxor_assign(&mut self, rhs: Self) {
        self.0 ^= rhs.0;
    }
}

/// Everything about a native packet except its payload.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketHeader {
    pub id: PacketId,
    pub flow: FlowId,
    pub source: NodeId,
    pub destination: NodeId,
    /// Next hop from the node currently holding the packet.
    pub next_hop: NodeId,
    pub size_bytes: u32,
    pub created_at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub header: PacketHeader,
    pub payload: PayloadTag,
}

impl Packet {
    pub fn id(&self) -> PacketId {
        self.header.id
    }

    pub fn next_hop(&self) -> NodeId {
        self.header.next_hop
    }
}

/// Lookup of packets by id.
pub trait PacketSource {
    fn packet(&self, id: PacketId) -> Option<&Packet>;
}

impl PacketSource for [Packet] {
    fn packet(&self, id: PacketId) -> Option<&Packet> {
        self.iter().find(|p| p.id() == id)
    }
}

impl PacketSource for Vec<Packet> {
    fn packet(&self, id: PacketId) -> Option<&Packet> {
        self.as_slice().packet(id)
    }
}

impl PacketSource for VecDeque<Packet> {
    fn packet(&self, id: PacketId) -> Option<&Packet> {
        self.iter().find(|p| p.id() == id)
    }
}

impl PacketSource for HashMap<PacketId, Packet> {
    fn packet(&self, id: PacketId) -> Option<&Packet> {
        self.get(&id)
    }
}

impl PacketSource for BTreeMap<PacketId, Packet> {
    fn packet(&self, id: PacketId) -> Option<&Packet> {
        self.get(&id)
    }
}

/// Payloads a node holds (its own, received and overheard packets).
pub trait PayloadPool {
    fn payload(&self, id: PacketId) -> Option<PayloadTag>;
}

impl PayloadPool for HashMap<PacketId, PayloadTag> {
    fn payload(&self, id: PacketId) -> Option<PayloadTag> {
        self.get(&id).copied()
    }
}

impl PayloadPool for BTreeMap<PacketId, PayloadTag> {
    fn payload(&self, id: PacketId) -> Option<PayloadTag> {
        self.get(&id).copied()
    }
}

impl PayloadPool for [Packet] {
    fn payload(&self, id: PacketId) -> Option<PayloadTag> {
        self.packet(id).map(|p| p.payload)
    }
}

/// What a node believes each neighbor holds, learned from reception reports
/// and overheard transmissions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborKnowledge {
    known: BTreeMap<NodeId, HashSet<PacketId>>,
}

impl NeighborKnowledge {
    pub fn new(neighbors: impl IntoIterator<Item = NodeId>) -> Self {
        Self {
            known: neighbors.into_iter().map(|n| (n, HashSet::new())).collect(),
        }
    }

    pub fn is_neighbor(&self, node: NodeId) -> bool {
        self.known.contains_key(&node)
    }

    /// Unions `packet_ids` into what `reporter` is known to hold. Returns the
    /// number of ids that were new.
    pub fn apply_reception_report(
        &mut self,
        reporter: NodeId,
        packet_ids: impl IntoIterator<Item = PacketId>,
    ) -> Result<usize, CodingError> {
        let set = self
            .known
            .get_mut(&reporter)
            .ok_or(CodingError::UnknownNeighbor(reporter))?;
        let before = set.len();
        set.extend(packet_ids);
        Ok(set.len() - before)
    }

    pub fn holds(&self, node: NodeId, id: PacketId) -> bool {
        self.known.get(&node).is_some_and(|s| s.contains(&id))
    }

    pub fn known(&self, node: NodeId) -> Option<&HashSet<PacketId>> {
        self.known.get(&node)
    }

    /// Drops every entry for which `keep` is false.
    pub fn retain(&mut self, mut keep: impl FnMut(PacketId) -> bool) {
        for set in self.known.values_mut() {
            set.retain(|&id| keep(id));
        }
    }

    pub fn entry_count(&self) -> usize {
        self.known.values().map(HashSet::len).sum()
    }
}

/// A set of queued packets to XOR together; `members[0]` is the head of line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodingOption {
    pub members: Vec<PacketId>,
}

impl CodingOption {
    pub fn singleton(head: PacketId) -> Self {
        Self {
            members: vec![head],
        }
    }

    pub fn degree(&self) -> u32 {
        self.members.len() as u32
    }

    pub fn head(&self) -> PacketId {
        self.members[0]
    }
}

/// True iff the next hop of every member is known to hold every other member.
pub fn is_decodable<S: PacketSource + ?Sized>(
    option: &CodingOption,
    knowledge: &NeighborKnowledge,
    packets: &S,
) -> Result<bool, CodingError> {
    let resolved = resolve(option, packets)?;
    Ok(resolved.iter().all(|p| {
        resolved
            .iter()
            .filter(|q| q.id() != p.id())
            .all(|q| knowledge.holds(p.next_hop(), q.id()))
    }))
}

fn resolve<'a, S: PacketSource + ?Sized>(
    option: &CodingOption,
    packets: &'a S,
) -> Result<Vec<&'a Packet>, CodingError> {
    option
        .members
        .iter()
        .map(|&id| packets.packet(id).ok_or(CodingError::UnknownPacket(id)))
        .collect()
}

/// Whether `candidate` can join the members without breaking decodability
/// or the distinct-next-hop rule.
fn compatible(members: &[&Packet], candidate: &Packet, knowledge: &NeighborKnowledge) -> bool {
    members.iter().all(|m| {
        m.next_hop() != candidate.next_hop()
            && m.id() != candidate.id()
            && knowledge.holds(candidate.next_hop(), m.id())
            && knowledge.holds(m.next_hop(), candidate.id())
    })
}

/// Greedy search for a high-degree decodable option containing the head of
/// `queue`, scanning in queue order.
pub fn find_best_coding_option(
    queue: &[Packet],
    knowledge: &NeighborKnowledge,
) -> Result<CodingOption, CodingError> {
    let (head, rest) = queue.split_first().ok_or(CodingError::EmptyQueue)?;
    let mut members = vec![head];
    for candidate in rest {
        if compatible(&members, candidate, knowledge) {
            members.push(candidate);
        }
    }
    Ok(CodingOption {
        members: members.iter().map(|p| p.id()).collect(),
    })
}

/// Maximum-degree decodable option containing the head; ties go to the
/// lexicographically smallest set of queue positions. Test oracle only.
pub fn exhaustive_best_option(
    queue: &[Packet],
    knowledge: &NeighborKnowledge,
) -> Result<CodingOption, CodingError> {
    if queue.is_empty() {
        return Err(CodingError::EmptyQueue);
    }
    if queue.len() > EXHAUSTIVE_LIMIT {
        return Err(CodingError::OracleScope {
            len: queue.len(),
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let rest = queue.len() - 1;
    let mut best: Vec<usize> = vec![0];
    for mask in 0u32..(1 << rest) {
        let positions: Vec<usize> = std::iter::once(0)
            .chain((0..rest).filter(|b| mask & (1 << b) != 0).map(|b| b + 1))
            .collect();
        if positions.len() < best.len() {
            continue;
        }
        let valid = positions.iter().enumerate().all(|(i, &a)| {
            positions[i + 1..].iter().all(|&b| {
                let (p, q) = (&queue[a], &queue[b]);
                p.next_hop() != q.next_hop()
                    && knowledge.holds(p.next_hop(), q.id())
                    && knowledge.holds(q.next_hop(), p.id())
            })
        });
        if valid && (positions.len() > best.len() || positions < best) {
            best = positions;
        }
    }
    Ok(CodingOption {
        members: best.into_iter().map(|i| queue[i].id()).collect(),
    })
}

/// A transmitted XOR combination of natives with distinct next hops.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedPacket {
    pub natives: Vec<PacketHeader>,
    pub xor_tag: PayloadTag,
}

impl CodedPacket {
    pub fn degree(&self) -> u32 {
        self.natives.len() as u32
    }

    pub fn native_ids(&self) -> impl Iterator<Item = PacketId> + '_ {
        self.natives.iter().map(|h| h.id)
    }

    /// The native addressed to `receiver`, if any.
    pub fn intended_for(&self, receiver: NodeId) -> Option<&PacketHeader> {
        self.natives.iter().find(|h| h.next_hop == receiver)
    }

    pub fn per_next_hop(&self) -> BTreeMap<NodeId, PacketId> {
        self.natives.iter().map(|h| (h.next_hop, h.id)).collect()
    }
}

/// XORs the members of a decodable option into one coded packet.
pub fn encode<S: PacketSource + ?Sized>(
    option: &CodingOption,
    knowledge: &NeighborKnowledge,
    packets: &S,
) -> Result<CodedPacket, CodingError> {
    let resolved = resolve(option, packets)?;
    let mut ids = HashSet::new();
    let mut hops = HashSet::new();
    for p in &resolved {
        if !ids.insert(p.id()) {
            return Err(CodingError::DuplicateMember(p.id()));
        }
        if !hops.insert(p.next_hop()) {
            return Err(CodingError::NextHopCollision(p.next_hop()));
        }
    }
    if !is_decodable(option, knowledge, packets)? {
        return Err(CodingError::Undecodable);
    }
    let xor_tag = resolved
        .iter()
        .fold(PayloadTag::default(), |acc, p| acc ^ p.payload);
    Ok(CodedPacket {
        natives: resolved.iter().map(|p| p.header.clone()).collect(),
        xor_tag,
    })
}

/// Recovers the native addressed to `receiver` by cancelling every other
/// native against the receiver's pool.
pub fn decode<P: PayloadPool + ?Sized>(
    coded: &CodedPacket,
    receiver: NodeId,
    pool: &P,
) -> Result<Packet, CodingError> {
    let intended = coded
        .intended_for(receiver)
        .ok_or(CodingError::Misdelivery { receiver })?;
    let mut tag = coded.xor_tag;
    for other in coded.natives.iter().filter(|h| h.id != intended.id) {
        let held = pool.payload(other.id).ok_or(CodingError::DecodeFailure {
            receiver,
            missing: other.id,
        })?;
        tag ^= held;
    }
    Ok(Packet {
        header: intended.clone(),
        payload: tag,
    })
}

/// Natives a bystander can extract: if it holds all but one native, the
/// remaining one; if it holds all of them, nothing new.
pub fn overhear<P: PayloadPool + ?Sized>(coded: &CodedPacket, pool: &P) -> Option<Packet> {
    let mut missing = None;
    let mut tag = coded.xor_tag;
    for h in &coded.natives {
        match pool.payload(h.id) {
            Some(t) => tag ^= t,
            None if missing.is_none() => missing = Some(h),
            None => return None,
        }
    }
    missing.map(|h| Packet {
        header: h.clone(),
        payload: tag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pkt(id: u64, next_hop: u32, tag: u64) -> Packet {
        Packet {
            header: PacketHeader {
                id: PacketId(id),
                flow: FlowId(0),
                source: NodeId(100),
                destination: NodeId(next_hop),
                next_hop: NodeId(next_hop),
                size_bytes: 1000,
                created_at: 0.0,
            },
            payload: PayloadTag(tag),
        }
    }

    /// Relay scenario: P1 from N1 heading to N2, P2 from N2 heading to N1.
    fn relay() -> (Vec<Packet>, NeighborKnowledge) {
        let queue = vec![pkt(1, 2, 0xAAAA), pkt(2, 1, 0x5555)];
        let mut k = NeighborKnowledge::new([NodeId(1), NodeId(2)]);
        k.apply_reception_report(NodeId(1), [PacketId(1)]).unwrap();
        k.apply_reception_report(NodeId(2), [PacketId(2)]).unwrap();
        (queue, k)
    }

    #[test]
    fn reception_reports() {
        let mut k = NeighborKnowledge::new([NodeId(1)]);
        assert_eq!(k.apply_reception_report(NodeId(1), []).unwrap(), 0);
        assert_eq!(k.entry_count(), 0);
        k.apply_reception_report(NodeId(1), [PacketId(1)]).unwrap();
        assert!(k.holds(NodeId(1), PacketId(1)));
        let snapshot = k.clone();
        assert_eq!(
            k.apply_reception_report(NodeId(1), [PacketId(1)]).unwrap(),
            0
        );
        assert_eq!(k, snapshot);
        assert_eq!(
            k.apply_reception_report(NodeId(9), [PacketId(1)]),
            Err(CodingError::UnknownNeighbor(NodeId(9)))
        );
    }

    #[test]
    fn decodability_examples() {
        let (queue, k) = relay();
        assert!(is_decodable(&CodingOption::singleton(PacketId(1)), &k, &queue).unwrap());
        let both = CodingOption {
            members: vec![PacketId(1), PacketId(2)],
        };
        assert!(is_decodable(&both, &k, &queue).unwrap());
        let mut partial = NeighborKnowledge::new([NodeId(1), NodeId(2)]);
        partial
            .apply_reception_report(NodeId(1), [PacketId(1)])
            .unwrap();
        assert!(!is_decodable(&both, &partial, &queue).unwrap());
        let ghost = CodingOption {
            members: vec![PacketId(1), PacketId(7)],
        };
        assert_eq!(
            is_decodable(&ghost, &k, &queue),
            Err(CodingError::UnknownPacket(PacketId(7)))
        );
    }

    #[test]
    fn greedy_examples() {
        let (queue, k) = relay();
        assert_eq!(
            find_best_coding_option(&queue[..1], &k).unwrap().degree(),
            1
        );
        let best = find_best_coding_option(&queue, &k).unwrap();
        assert_eq!(best.members, vec![PacketId(1), PacketId(2)]);
        assert_eq!(exhaustive_best_option(&queue, &k).unwrap().degree(), 2);
        assert_eq!(
            find_best_coding_option(&[], &k),
            Err(CodingError::EmptyQueue)
        );
    }

    #[test]
    fn greedy_can_trail_exhaustive() {
        // Head -> n1. Packet 2 (-> n2) is compatible with the head but blocks
        // packets 3 (-> n3) and 4 (-> n4), which together with the head form
        // a degree-3 option.
        let queue = vec![
            pkt(1, 1, 1),
            pkt(2, 2, 2),
            pkt(3, 3, 3),
            pkt(4, 4, 4),
            pkt(5, 1, 5),
        ];
        let mut k = NeighborKnowledge::new((1..=4).map(NodeId));
        k.apply_reception_report(NodeId(1), [PacketId(2), PacketId(3), PacketId(4)])
            .unwrap();
        k.apply_reception_report(NodeId(2), [PacketId(1)]).unwrap();
        k.apply_reception_report(NodeId(3), [PacketId(1), PacketId(4)])
            .unwrap();
        k.apply_reception_report(NodeId(4), [PacketId(1), PacketId(3)])
            .unwrap();
        let greedy = find_best_coding_option(&queue, &k).unwrap();
        let exact = exhaustive_best_option(&queue, &k).unwrap();
        assert_eq!(greedy.degree(), 2);
        assert_eq!(exact.members, vec![PacketId(1), PacketId(3), PacketId(4)]);
    }

    #[test]
    fn exhaustive_scope_guard() {
        let queue: Vec<Packet> = (0..13).map(|i| pkt(i, 1, i)).collect();
        let k = NeighborKnowledge::new([NodeId(1)]);
        assert!(matches!(
            exhaustive_best_option(&queue, &k),
            Err(CodingError::OracleScope { len: 13, .. })
        ));
    }

    #[test]
    fn encode_examples() {
        let (queue, k) = relay();
        let single = encode(&CodingOption::singleton(PacketId(1)), &k, &queue).unwrap();
        assert_eq!(single.xor_tag, PayloadTag(0xAAAA));
        let both = CodingOption {
            members: vec![PacketId(1), PacketId(2)],
        };
        let coded = encode(&both, &k, &queue).unwrap();
        assert_eq!(coded.xor_tag, PayloadTag(0xAAAA ^ 0x5555));
        assert_eq!(coded.per_next_hop()[&NodeId(2)], PacketId(1));
        let dup = CodingOption {
            members: vec![PacketId(1), PacketId(1)],
        };
        assert_eq!(
            encode(&dup, &k, &queue),
            Err(CodingError::DuplicateMember(PacketId(1)))
        );
    }

    #[test]
    fn encode_rejects_undecodable() {
        let (queue, _) = relay();
        let empty = NeighborKnowledge::new([NodeId(1), NodeId(2)]);
        let both = CodingOption {
            members: vec![PacketId(1), PacketId(2)],
        };
        assert_eq!(encode(&both, &empty, &queue), Err(CodingError::Undecodable));
    }

    #[test]
    fn decode_examples() {
        let (queue, k) = relay();
        let both = CodingOption {
            members: vec![PacketId(1), PacketId(2)],
        };
        let coded = encode(&both, &k, &queue).unwrap();
        // N1 holds P1 and extracts P2.
        let n1_pool: HashMap<PacketId, PayloadTag> = [(PacketId(1), PayloadTag(0xAAAA))].into();
        let got = decode(&coded, NodeId(1), &n1_pool).unwrap();
        assert_eq!(got.id(), PacketId(2));
        assert_eq!(got.payload, PayloadTag(0x5555));

        let single = encode(&CodingOption::singleton(PacketId(1)), &k, &queue).unwrap();
        let empty: HashMap<PacketId, PayloadTag> = HashMap::new();
        assert_eq!(decode(&single, NodeId(2), &empty).unwrap(), queue[0]);

        assert_eq!(
            decode(&coded, NodeId(2), &empty),
            Err(CodingError::DecodeFailure {
                receiver: NodeId(2),
                missing: PacketId(2)
            })
        );
        assert_eq!(
            decode(&coded, NodeId(3), &empty),
            Err(CodingError::Misdelivery {
                receiver: NodeId(3)
            })
        );
    }

    #[test]
    fn bystander_extracts_single_missing_native() {
        let (queue, k) = relay();
        let both = CodingOption {
            members: vec![PacketId(1), PacketId(2)],
        };
        let coded = encode(&both, &k, &queue).unwrap();
        let pool: HashMap<PacketId, PayloadTag> = [(PacketId(2), PayloadTag(0x5555))].into();
        assert_eq!(overhear(&coded, &pool).unwrap(), queue[0]);
        let empty: HashMap<PacketId, PayloadTag> = HashMap::new();
        assert!(overhear(&coded, &empty).is_none());
    }

    /// Random queue with random, partially overlapping neighbor knowledge.
    fn random_instance(
        rng: &mut ChaCha8Rng,
        len: usize,
        hops: u32,
    ) -> (Vec<Packet>, NeighborKnowledge) {
        let queue: Vec<Packet> = (0..len as u64)
            .map(|i| pkt(i, rng.random_range(1..=hops), rng.random()))
            .collect();
        let mut k = NeighborKnowledge::new((1..=hops).map(NodeId));
        for hop in 1..=hops {
            let held: Vec<PacketId> = queue
                .iter()
                .filter(|p| p.next_hop() != NodeId(hop) && rng.random_bool(0.7))
                .map(Packet::id)
                .collect();
            k.apply_reception_report(NodeId(hop), held).unwrap();
        }
        (queue, k)
    }

    #[test]
    fn exhaustive_dominates_greedy_on_seeded_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut equal = 0;
        for _ in 0..1000 {
            let (queue, k) = random_instance(&mut rng, 6, 5);
            let g = find_best_coding_option(&queue, &k).unwrap();
            let e = exhaustive_best_option(&queue, &k).unwrap();
            assert!(is_decodable(&g, &k, &queue).unwrap());
            assert!(is_decodable(&e, &k, &queue).unwrap());
            assert!(g.degree() >= 1 && g.degree() <= e.degree());
            equal += usize::from(g.degree() == e.degree());
        }
        assert!(equal > 0);
    }

    proptest! {
        #[test]
        fn greedy_is_sound(seed in any::<u64>(), len in 1usize..20, hops in 1u32..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (queue, k) = random_instance(&mut rng, len, hops);
            let option = find_best_coding_option(&queue, &k).unwrap();
            prop_assert_eq!(option.head(), queue[0].id());
            prop_assert!(is_decodable(&option, &k, &queue).unwrap());
            prop_assert!(encode(&option, &k, &queue).is_ok());
        }

        #[test]
        fn decode_inverts_encode(seed in any::<u64>(), len in 1usize..12, hops in 1u32..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (queue, k) = random_instance(&mut rng, len, hops);
            let option = find_best_coding_option(&queue, &k).unwrap();
            let coded = encode(&option, &k, &queue).unwrap();
            for &member in &option.members {
                let original = queue.packet(member).unwrap();
                let pool: HashMap<PacketId, PayloadTag> = option
                    .members
                    .iter()
                    .filter(|&&m| m != member)
                    .map(|&m| (m, queue.payload(m).unwrap()))
                    .collect();
                prop_assert_eq!(&decode(&coded, original.next_hop(), &pool).unwrap(), original);
            }
        }

        #[test]
        fn knowledge_only_grows(reports in proptest::collection::vec((0u32..4, proptest::collection::vec(0u64..50, 0..10)), 0..30)) {
            let mut k = NeighborKnowledge::new((0..4).map(NodeId));
            let mut previous = 0;
            for (node, ids) in reports {
                k.apply_reception_report(NodeId(node), ids.into_iter().map(PacketId)).unwrap();
                prop_assert!(k.entry_count() >= previous);
                previous = k.entry_count();
            }
        }
    }
}
