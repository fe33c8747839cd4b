use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::energy::{account_energy, PowerModel};
use super::metrics::{coding_gain, FinalEstimates, MetricsReport};
use super::rng::{mix, sample_interval, stream_rng, Stream, RNG_ALGORITHM};
use super::topology::{build_flows, build_topology, route_next_hop, Flow, Topology};
use super::SimError;
use crate::coding::{
    decode, encode, find_best_coding_option, overhear, CodedPacket, CodingError, CodingOption,
    NeighborKnowledge, Packet, PacketHeader, PayloadTag,
};
use crate::config::{PolicyKind, ScenarioConfig};
use crate::estimators::{
    degree_growth_estimate, DegreeGrowthStats, DegreeRateEstimator, RateCounter,
};
use crate::ids::{FlowId, NodeId, PacketId};
use crate::policy::{decide_against, threshold, Decision, PolicyParams, StateDegree};

/// Whether the engine generates its own stochastic events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Arrivals, opportunities, reports and ticks renew themselves.
    Stochastic,
    /// Only injected events (and the deliveries and timeouts they cause)
    /// happen.
    Scripted,
}

/// Events a caller may inject.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Injection {
    Arrival(FlowId),
    Opportunity(NodeId),
    Report(NodeId),
    Tick,
}

/// One processed event, for determinism checks and debugging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub event: &'static str,
    pub node: u32,
    pub detail: u64,
}

#[derive(Debug)]
struct Transmission {
    index: usize,
    sender: NodeId,
    coded: CodedPacket,
}

#[derive(Debug)]
enum EventKind {
    Delivery {
        transmission: Rc<Transmission>,
        receiver: NodeId,
    },
    AckTimeout {
        node: NodeId,
        packet: PacketId,
    },
    ReceptionReport(NodeId),
    PacketArrival(FlowId),
    TxOpportunity(NodeId),
    MeasurementTick,
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::Delivery { .. } => 0,
            EventKind::AckTimeout { .. } => 1,
            EventKind::ReceptionReport(_) => 2,
            EventKind::PacketArrival(_) => 3,
            EventKind::TxOpportunity(_) => 4,
            EventKind::MeasurementTick => 5,
        }
    }
}

#[derive(Debug)]
struct Event {
    time: f64,
    rank: u8,
    node: u32,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.rank.cmp(&self.rank))
            .then(other.node.cmp(&self.node))
            .then(other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Default)]
struct Agenda {
    heap: BinaryHeap<Event>,
    seq: u64,
}

impl Agenda {
    fn push(&mut self, time: f64, node: u32, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event {
            time,
            rank: kind.rank(),
            node,
            seq: self.seq,
            kind,
        });
    }
}

/// Per-node protocol state.
#[derive(Debug, Clone)]
pub struct NodeState {
    id: NodeId,
    queue: VecDeque<Packet>,
    pool: HashMap<PacketId, PayloadTag>,
    report_backlog: Vec<PacketId>,
    knowledge: NeighborKnowledge,
    pending: BTreeMap<PacketId, Packet>,
    best: Option<CodingOption>,
    degree_rate: DegreeRateEstimator,
    tx_counter: RateCounter,
    /// Growth counts conditioned on a waiting head.
    window: DegreeGrowthStats,
    totals: DegreeGrowthStats,
    /// All data and knowledge events this window, for the raw rates.
    window_data: u64,
    window_reports: u64,
    lambda_d: f64,
    lambda_t: f64,
    d_star: f64,
    tx_bits: u64,
    rx_bits: u64,
    last_opportunity: Option<f64>,
}

impl NodeState {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn queue(&self) -> &VecDeque<Packet> {
        &self.queue
    }

    pub fn best_option(&self) -> Option<&CodingOption> {
        self.best.as_ref()
    }

    /// Degree of the cached best option; 0 with an empty queue.
    pub fn best_degree(&self) -> u32 {
        self.best.as_ref().map_or(0, CodingOption::degree)
    }

    pub fn knowledge(&self) -> &NeighborKnowledge {
        &self.knowledge
    }

    pub fn holds(&self, id: PacketId) -> bool {
        self.pool.contains_key(&id)
    }

    pub fn pending(&self) -> impl Iterator<Item = &Packet> {
        self.pending.values()
    }

    pub fn lambda_t(&self) -> f64 {
        self.lambda_t
    }

    pub fn lambda_d(&self) -> f64 {
        self.lambda_d
    }

    /// Current stopping threshold `d*`.
    pub fn threshold(&self) -> f64 {
        self.d_star
    }

    pub fn opportunities(&self) -> u64 {
        self.tx_counter.count()
    }

    pub fn growth(&self) -> DegreeGrowthStats {
        let mut all = self.totals;
        all.merge(&self.window);
        all
    }

    fn hold(&mut self, id: PacketId, tag: PayloadTag) {
        if self.pool.insert(id, tag).is_none() {
            self.report_backlog.push(id);
        }
    }

    /// Recomputes the best option from scratch.
    fn reset_best(&mut self) {
        self.best = if self.queue.is_empty() {
            None
        } else {
            find_best_coding_option(self.queue.make_contiguous(), &self.knowledge).ok()
        };
    }

    /// Re-runs the search after the queue grew at the tail or knowledge grew,
    /// keeping the cached option if it is still larger. Returns the degree
    /// increase.
    fn improve_best(&mut self) -> u32 {
        let before = self.best_degree();
        if self.queue.is_empty() {
            return 0;
        }
        let Ok(candidate) = find_best_coding_option(self.queue.make_contiguous(), &self.knowledge)
        else {
            return 0;
        };
        if before == 0 || candidate.degree() > before {
            self.best = Some(candidate);
        }
        self.best_degree().saturating_sub(before.max(1))
    }
}

/// The event loop together with all network state.
pub struct Simulator {
    config: ScenarioConfig,
    mode: Mode,
    topology: Topology,
    flows: Vec<Flow>,
    nodes: Vec<NodeState>,
    agenda: Agenda,
    now: f64,
    next_packet: u64,
    payload_seed: u64,
    arrival_rng: Vec<ChaCha8Rng>,
    opportunity_rng: Vec<ChaCha8Rng>,
    report_rng: Vec<ChaCha8Rng>,
    loss_rng: Vec<ChaCha8Rng>,
    dead: HashSet<PacketId>,
    decoded: Vec<u32>,
    histogram: BTreeMap<u32, u64>,
    generated: u64,
    delivered: u64,
    drops: u64,
    unroutable: u64,
    decode_failures: u64,
    retransmissions: u64,
    opportunities: u64,
    delay_sum: f64,
    last_tick: f64,
    trace: Option<Vec<TraceRecord>>,
    intervals: Option<Vec<f64>>,
}

impl Simulator {
    /// Builds topology and flows from `seed` and schedules the first event
    /// of every stochastic process.
    pub fn new(config: &ScenarioConfig, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        let topology = build_topology(
            config.node_count,
            (config.field_width, config.field_height),
            config.rho,
            &mut stream_rng(seed, Stream::Topology, 0),
        )?;
        let flows = build_flows(
            &topology,
            config.flow_count,
            config.packet_rate,
            config.min_route_hops,
            &mut stream_rng(seed, Stream::Flows, 0),
        )?;
        Self::with_parts(config, topology, flows, seed, Mode::Stochastic)
    }

    /// Uses a caller-supplied topology and flows. Flow ids are renumbered to
    /// their positions.
    pub fn with_parts(
        config: &ScenarioConfig,
        topology: Topology,
        mut flows: Vec<Flow>,
        seed: u64,
        mode: Mode,
    ) -> Result<Self, SimError> {
        config.validate()?;
        for (i, f) in flows.iter_mut().enumerate() {
            f.id = FlowId(i as u32);
        }
        let n = topology.node_count();
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let id = NodeId(i as u32);
            nodes.push(NodeState {
                id,
                queue: VecDeque::new(),
                pool: HashMap::new(),
                report_backlog: Vec::new(),
                knowledge: NeighborKnowledge::new(topology.neighbors(id).iter().copied()),
                pending: BTreeMap::new(),
                best: None,
                degree_rate: DegreeRateEstimator::new(config.lms_taps, config.lms_step)?,
                tx_counter: RateCounter::new(0.0),
                window: DegreeGrowthStats::default(),
                totals: DegreeGrowthStats::default(),
                window_data: 0,
                window_reports: 0,
                lambda_d: 0.0,
                lambda_t: config.opportunity_rate,
                d_star: 0.0,
                tx_bits: 0,
                rx_bits: 0,
                last_opportunity: None,
            });
        }
        let streams = |stream, count: usize| -> Vec<ChaCha8Rng> {
            (0..count as u64)
                .map(|i| stream_rng(seed, stream, i))
                .collect()
        };
        let mut sim = Self {
            config: config.clone(),
            mode,
            arrival_rng: streams(Stream::Arrivals, flows.len()),
            opportunity_rng: streams(Stream::Opportunities, n),
            report_rng: streams(Stream::Reports, n),
            loss_rng: streams(Stream::Loss, n),
            payload_seed: mix(seed, Stream::Payload as u64),
            topology,
            flows,
            nodes,
            agenda: Agenda::default(),
            now: 0.0,
            next_packet: 0,
            dead: HashSet::new(),
            decoded: Vec::new(),
            histogram: BTreeMap::new(),
            generated: 0,
            delivered: 0,
            drops: 0,
            unroutable: 0,
            decode_failures: 0,
            retransmissions: 0,
            opportunities: 0,
            delay_sum: 0.0,
            last_tick: 0.0,
            trace: None,
            intervals: None,
        };
        for node in &mut sim.nodes {
            node.d_star = node_threshold(&sim.config, node.lambda_d, node.lambda_t)?;
        }
        if mode == Mode::Stochastic {
            for i in 0..sim.flows.len() {
                sim.schedule_arrival(FlowId(i as u32))?;
            }
            for i in 0..n {
                sim.schedule_opportunity(NodeId(i as u32))?;
            }
            for i in 0..n {
                sim.schedule_report(NodeId(i as u32))?;
            }
            sim.agenda
                .push(sim.config.tick, 0, EventKind::MeasurementTick);
        }
        Ok(sim)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Starts recording every processed event.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Starts recording per-node gaps between consecutive opportunities.
    pub fn record_intervals(&mut self) {
        self.intervals.get_or_insert_with(Vec::new);
    }

    pub fn opportunity_intervals(&self) -> &[f64] {
        self.intervals.as_deref().unwrap_or(&[])
    }

    pub fn schedule(&mut self, time: f64, injection: Injection) -> Result<(), SimError> {
        if time < self.now || !time.is_finite() {
            return Err(SimError::Past {
                at: time,
                now: self.now,
            });
        }
        let (node, kind) = match injection {
            Injection::Arrival(f) => (
                self.flows[f.0 as usize].source.0,
                EventKind::PacketArrival(f),
            ),
            Injection::Opportunity(n) => (n.0, EventKind::TxOpportunity(n)),
            Injection::Report(n) => (n.0, EventKind::ReceptionReport(n)),
            Injection::Tick => (0, EventKind::MeasurementTick),
        };
        self.agenda.push(time, node, kind);
        Ok(())
    }

    /// Processes every event with time `<= until`.
    pub fn run_until(&mut self, until: f64) -> Result<(), SimError> {
        while self.agenda.heap.peek().is_some_and(|e| e.time <= until) {
            let event = self.agenda.heap.pop().expect("peeked");
            self.now = event.time;
            self.dispatch(event)?;
        }
        self.now = self.now.max(until);
        Ok(())
    }

    fn record(&mut self, event: &'static str, node: u32, detail: u64) {
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord {
                time: self.now,
                event,
                node,
                detail,
            });
        }
    }

    fn dispatch(&mut self, event: Event) -> Result<(), SimError> {
        match event.kind {
            EventKind::PacketArrival(flow) => self.on_arrival(flow),
            EventKind::TxOpportunity(node) => self.on_tx_opportunity(node),
            EventKind::ReceptionReport(node) => self.on_report(node),
            EventKind::Delivery {
                transmission,
                receiver,
            } => self.on_delivery(&transmission, receiver),
            EventKind::AckTimeout { node, packet } => {
                self.on_ack_timeout(node, packet);
                Ok(())
            }
            EventKind::MeasurementTick => self.on_tick(),
        }
    }

    fn schedule_arrival(&mut self, flow: FlowId) -> Result<(), SimError> {
        let f = &self.flows[flow.0 as usize];
        let dt = sample_interval(f.packet_rate, &mut self.arrival_rng[flow.0 as usize])?;
        let source = f.source.0;
        self.agenda
            .push(self.now + dt, source, EventKind::PacketArrival(flow));
        Ok(())
    }

    fn schedule_opportunity(&mut self, node: NodeId) -> Result<(), SimError> {
        let dt = sample_interval(
            self.config.opportunity_rate,
            &mut self.opportunity_rng[node.index()],
        )?;
        self.agenda
            .push(self.now + dt, node.0, EventKind::TxOpportunity(node));
        Ok(())
    }

    fn schedule_report(&mut self, node: NodeId) -> Result<(), SimError> {
        let dt = sample_interval(self.config.report_rate, &mut self.report_rng[node.index()])?;
        self.agenda
            .push(self.now + dt, node.0, EventKind::ReceptionReport(node));
        Ok(())
    }

    fn on_arrival(&mut self, flow: FlowId) -> Result<(), SimError> {
        if self.mode == Mode::Stochastic {
            self.schedule_arrival(flow)?;
        }
        let f = &self.flows[flow.0 as usize];
        let (source, destination) = (f.source, f.destination);
        let id = PacketId(self.next_packet);
        self.next_packet += 1;
        self.generated += 1;
        self.record("arrival", source.0, id.0);
        let next_hop = match route_next_hop(source, destination, &self.topology) {
            Ok(hop) => hop,
            Err(_) => {
                self.unroutable += 1;
                return Ok(());
            }
        };
        let packet = Packet {
            header: PacketHeader {
                id,
                flow,
                source,
                destination,
                next_hop,
                size_bytes: self.config.packet_size,
                created_at: self.now,
            },
            payload: PayloadTag(mix(self.payload_seed, id.0)),
        };
        self.nodes[source.index()].hold(id, packet.payload);
        self.enqueue(source, packet);
        Ok(())
    }

    fn enqueue(&mut self, at: NodeId, packet: Packet) {
        let node = &mut self.nodes[at.index()];
        node.window_data += 1;
        if !node.queue.is_empty() {
            node.window.data_events += 1;
        }
        if node.queue.len() >= self.config.buffer_size as usize {
            self.drops += 1;
            self.dead.insert(packet.id());
            self.record("drop", at.0, packet.id().0);
            return;
        }
        node.queue.push_back(packet);
        let gained = node.improve_best();
        node.window.data_increments += u64::from(gained);
    }

    /// Knowledge that `from` holds `ids`, from a report or an overheard
    /// transmission.
    fn learn(
        &mut self,
        at: NodeId,
        from: NodeId,
        ids: impl IntoIterator<Item = PacketId>,
    ) -> Result<(), SimError> {
        let node = &mut self.nodes[at.index()];
        node.window_reports += 1;
        if node.queue.is_empty() {
            node.knowledge.apply_reception_report(from, ids)?;
            return Ok(());
        }
        node.window.report_events += 1;
        // Only knowledge about queued packets can change the best option.
        let mut relevant = false;
        let queue = &node.queue;
        let ids = ids.into_iter().inspect(|id| {
            relevant = relevant || queue.iter().any(|p| p.id() == *id);
        });
        let added = node.knowledge.apply_reception_report(from, ids)?;
        if added > 0 && relevant {
            let gained = node.improve_best();
            node.window.report_increments += u64::from(gained);
        }
        Ok(())
    }

    fn on_tx_opportunity(&mut self, at: NodeId) -> Result<(), SimError> {
        if self.mode == Mode::Stochastic {
            self.schedule_opportunity(at)?;
        }
        self.opportunities += 1;
        let now = self.now;
        let node = &mut self.nodes[at.index()];
        node.tx_counter.record(now)?;
        if let Some(intervals) = &mut self.intervals {
            if let Some(last) = node.last_opportunity {
                intervals.push(now - last);
            }
        }
        node.last_opportunity = Some(now);
        let Some(best) = node.best.clone() else {
            return Ok(());
        };
        let option = match self.config.policy {
            PolicyKind::NoCoding => CodingOption::singleton(best.head()),
            PolicyKind::ImmediateSend => best,
            PolicyKind::OptimalStopping => {
                let state = StateDegree::new(best.degree())?;
                if decide_against(state, node.d_star) == Decision::Wait {
                    self.record("wait", at.0, u64::from(best.degree()));
                    return Ok(());
                }
                best
            }
        };
        self.transmit(at, option)
    }

    fn transmit(&mut self, at: NodeId, option: CodingOption) -> Result<(), SimError> {
        let ack_at = self.now + self.config.ack_timeout();
        let node = &mut self.nodes[at.index()];
        let coded = encode(&option, &node.knowledge, &node.queue)?;
        let (sent, kept): (VecDeque<Packet>, VecDeque<Packet>) = node
            .queue
            .drain(..)
            .partition(|p| option.members.contains(&p.id()));
        node.queue = kept;
        for p in sent {
            self.agenda.push(
                ack_at,
                at.0,
                EventKind::AckTimeout {
                    node: at,
                    packet: p.id(),
                },
            );
            node.pending.insert(p.id(), p);
        }
        node.tx_bits += u64::from(self.config.packet_size) * 8;
        // The stopping state restarts at the new head.
        node.reset_best();

        let degree = coded.degree();
        *self.histogram.entry(degree).or_default() += 1;
        let transmission = Rc::new(Transmission {
            index: self.decoded.len(),
            sender: at,
            coded,
        });
        self.decoded.push(0);
        self.record("send", at.0, u64::from(degree));

        let arrive = self.now + self.config.airtime();
        let loss = self.config.loss_prob;
        for &v in self.topology.neighbors(at) {
            if loss > 0.0 && self.loss_rng[at.index()].random_bool(loss) {
                continue;
            }
            self.agenda.push(
                arrive,
                v.0,
                EventKind::Delivery {
                    transmission: Rc::clone(&transmission),
                    receiver: v,
                },
            );
        }
        Ok(())
    }

    fn on_delivery(&mut self, tx: &Transmission, at: NodeId) -> Result<(), SimError> {
        self.nodes[at.index()].rx_bits += u64::from(self.config.packet_size) * 8;
        self.learn(at, tx.sender, tx.coded.native_ids())?;
        if tx.coded.intended_for(at).is_none() {
            let node = &mut self.nodes[at.index()];
            if let Some(p) = overhear(&tx.coded, &node.pool) {
                node.hold(p.id(), p.payload);
            }
            return Ok(());
        }
        match decode(&tx.coded, at, &self.nodes[at.index()].pool) {
            Ok(packet) => {
                self.decoded[tx.index] += 1;
                self.record("decode", at.0, packet.id().0);
                self.acknowledge(tx.sender, packet.id());
                self.nodes[at.index()].hold(packet.id(), packet.payload);
                self.forward(at, packet);
                Ok(())
            }
            Err(CodingError::DecodeFailure { .. }) => {
                self.decode_failures += 1;
                Ok(())
            }
            Err(e) => Err(e.into()),
        }
    }

    fn acknowledge(&mut self, sender: NodeId, id: PacketId) {
        let node = &mut self.nodes[sender.index()];
        if node.pending.remove(&id).is_none() {
            // Already timed out and requeued.
            let before = node.queue.len();
            node.queue.retain(|p| p.id() != id);
            if node.queue.len() != before {
                node.reset_best();
            }
        }
    }

    fn forward(&mut self, at: NodeId, mut packet: Packet) {
        if packet.header.destination == at {
            self.delivered += 1;
            self.delay_sum += self.now - packet.header.created_at;
            self.dead.insert(packet.id());
            self.record("deliver", at.0, packet.id().0);
            return;
        }
        match route_next_hop(at, packet.header.destination, &self.topology) {
            Ok(next) => {
                packet.header.next_hop = next;
                self.enqueue(at, packet);
            }
            Err(_) => {
                self.unroutable += 1;
                self.dead.insert(packet.id());
            }
        }
    }

    fn on_ack_timeout(&mut self, at: NodeId, id: PacketId) {
        let node = &mut self.nodes[at.index()];
        let Some(packet) = node.pending.remove(&id) else {
            return;
        };
        self.retransmissions += 1;
        if node.queue.len() >= self.config.buffer_size as usize {
            self.drops += 1;
            self.dead.insert(id);
            return;
        }
        node.queue.push_front(packet);
        node.reset_best();
        self.record("requeue", at.0, id.0);
    }

    fn on_report(&mut self, at: NodeId) -> Result<(), SimError> {
        if self.mode == Mode::Stochastic {
            self.schedule_report(at)?;
        }
        let ids = std::mem::take(&mut self.nodes[at.index()].report_backlog);
        self.record("report", at.0, ids.len() as u64);
        let neighbors = self.topology.neighbors(at).to_vec();
        for v in neighbors {
            self.learn(v, at, ids.iter().copied())?;
        }
        Ok(())
    }

    fn on_tick(&mut self) -> Result<(), SimError> {
        if self.mode == Mode::Stochastic {
            self.agenda
                .push(self.now + self.config.tick, 0, EventKind::MeasurementTick);
        }
        let window = self.now - self.last_tick;
        self.last_tick = self.now;
        self.record("tick", 0, 0);
        if window > 0.0 {
            for node in &mut self.nodes {
                let w = node.window;
                let lambda_p = node.window_data as f64 / window;
                let lambda_r = node.window_reports as f64 / window;
                node.degree_rate
                    .observe(degree_growth_estimate(&w, lambda_p, lambda_r));
                node.lambda_d = node.degree_rate.predict();
                let measured = node.tx_counter.estimate(self.now)?;
                if measured > 0.0 {
                    node.lambda_t = measured;
                }
                node.d_star = node_threshold(&self.config, node.lambda_d, node.lambda_t)?;
                node.totals.merge(&w);
                node.window = DegreeGrowthStats::default();
                node.window_data = 0;
                node.window_reports = 0;
            }
        }
        if !self.dead.is_empty() {
            let dead = std::mem::take(&mut self.dead);
            for node in &mut self.nodes {
                node.pool.retain(|id, _| !dead.contains(id));
                node.report_backlog.retain(|id| !dead.contains(id));
                node.knowledge.retain(|id| !dead.contains(&id));
            }
        }
        Ok(())
    }

    /// Packets sitting in a queue or awaiting an acknowledgement.
    pub fn in_flight(&self) -> u64 {
        let mut ids = BTreeSet::new();
        for node in &self.nodes {
            ids.extend(node.queue.iter().map(Packet::id));
            ids.extend(node.pending.keys().copied());
        }
        ids.len() as u64
    }

    /// Metrics as of `horizon`.
    pub fn report(&self, horizon: f64) -> Result<MetricsReport, SimError> {
        let model = PowerModel::default();
        let node_energy: Vec<_> = self
            .nodes
            .iter()
            .map(|n| account_energy(n.tx_bits, n.rx_bits, horizon, self.config.bitrate, &model))
            .collect();
        let total_energy: f64 = node_energy.iter().map(|e| e.total_mj).sum();
        let n = self.nodes.len() as f64;
        let node_lambda_t = self
            .nodes
            .iter()
            .map(|node| node.tx_counter.estimate(horizon))
            .collect::<Result<Vec<_>, _>>()?;
        let mut growth = DegreeGrowthStats::default();
        for node in &self.nodes {
            growth.merge(&node.growth());
        }
        let final_estimates = FinalEstimates {
            lambda_t: node_lambda_t.iter().sum::<f64>() / n,
            lambda_d: self.nodes.iter().map(|x| x.lambda_d).sum::<f64>() / n,
            p_p: growth.observed_p_p(),
            p_r: growth.observed_p_r(),
        };
        let delivered = self.delivered;
        Ok(MetricsReport {
            coding_gain: coding_gain(&self.decoded),
            mean_e2e_delay: (delivered > 0).then(|| self.delay_sum / delivered as f64),
            throughput: if horizon > 0.0 {
                delivered as f64 / horizon
            } else {
                0.0
            },
            energy_per_node: total_energy / n,
            energy_per_delivered: (delivered > 0).then(|| total_energy / delivered as f64),
            transmissions: self.decoded.len() as u64,
            successful_transmissions: self.decoded.iter().filter(|&&d| d > 0).count() as u64,
            retransmissions: self.retransmissions,
            degree_histogram: self.histogram.clone(),
            generated: self.generated,
            delivered,
            in_flight: self.in_flight(),
            drops: self.drops,
            unroutable: self.unroutable,
            decode_failures: self.decode_failures,
            opportunities: self.opportunities,
            final_estimates,
            node_energy,
            node_lambda_t,
            rng_algorithm: RNG_ALGORITHM,
        })
    }
}

fn node_threshold(config: &ScenarioConfig, lambda_d: f64, lambda_t: f64) -> Result<f64, SimError> {
    let params = PolicyParams::new(
        lambda_d,
        lambda_t,
        config.delta,
        config.buffer_size,
        config.gain_slope,
        config.gain_intercept,
    )?;
    Ok(threshold(&params))
}

/// Runs `config` with `seed` up to the configured horizon.
pub fn run(config: &ScenarioConfig, seed: u64) -> Result<MetricsReport, SimError> {
    let mut sim = Simulator::new(config, seed)?;
    sim.run_until(config.horizon)?;
    sim.report(config.horizon)
}
