//! The network simulation: nodes with radios, energy accounts, CSMA/CA MAC
//! queues and routing state, driven by a single event queue.
//!
//! Channel model: every transmission draws one received power per
//! potential receiver from that receiver's channel stream. Frames at or
//! above the carrier-sense threshold are tracked as arrivals; when a frame
//! ends, the reception decision sees the summed power of every frame that
//! overlapped it. Nodes that are transmitting, asleep or dead receive
//! nothing, and a node that starts transmitting loses whatever it was
//! receiving.

mod node;

use std::collections::HashMap;

use crate::baseline::{greedy_unicast_next_hop, oppbcast_recv, OppBcastAction, OppBcastConfig};
use crate::energy::{is_eligible, EnergyAccount, RadioState};
use crate::engine::{EventHandle, Scheduler, SimTime};
use crate::error::{Error, Result};
use crate::mac::{airtime_of, BeBounds, CcaVerdict, CsmaProcess};
use crate::metrics::{MetricsCollector, MetricsRecord};
use crate::protocol::{
    compute_dhd, AckHeader, Address, CidOutcome, DataHeader, DropReason, Mode, NodeId,
    OpserNodeState, Packet, PacketKey, Payload, ProtocolKind, RecvDecision,
};
use crate::radio::{dbm_to_mw, reception_decision, PropagationModel};
use crate::scenario::{build_topology, Layout, Scenario};
use crate::trace::TraceRecord;

use node::{Active, Arrival, JobKind, MacJob, Node, PackWait, PendingFwd, Phase};

/// Shadowing draws further than this many standard deviations below the
/// mean are treated as impossible when deciding who can hear whom.
const LINK_SIGMA_CUTOFF: f64 = 6.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep the full event trace in memory.
    pub trace: bool,
}

/// Per-node Tx/Rx energy and receive time accumulated before traffic
/// starts, i.e. during the corona flood.
#[derive(Debug, Clone, PartialEq)]
pub struct CidPhaseStats {
    pub snapshot_time: SimTime,
    pub tx_fj: Vec<u64>,
    pub rx_fj: Vec<u64>,
    pub rx_us: Vec<u64>,
    pub cid_transmissions: Vec<u32>,
    pub cid_airtime: SimTime,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub trace: Option<Vec<TraceRecord>>,
    pub layout: Layout,
    pub corona_levels: Vec<Option<u16>>,
    pub cid: Option<CidPhaseStats>,
    pub energy: Vec<EnergyAccount>,
    pub events_dispatched: u64,
}

#[derive(Debug, Clone)]
enum Ev {
    CidStart,
    CidSlot(usize),
    Wake(usize),
    Generate(usize),
    CcaStart(usize),
    CcaEnd(usize),
    TxStart(usize),
    TxEnd(u64),
    AckTimeout(usize),
    SendAck {
        node: usize,
        to: NodeId,
        acked_frame: u64,
        key: Option<PacketKey>,
    },
    Forward {
        node: usize,
        key: PacketKey,
    },
    PackTimeout {
        node: usize,
        key: PacketKey,
    },
    Snapshot,
}

struct Frame {
    sender: usize,
    packet: Packet,
    receivers: Vec<usize>,
    /// Sent outside CSMA (acknowledgements).
    direct: bool,
}

struct Timing {
    unit: SimTime,
    cca: SimTime,
    turnaround: SimTime,
    ack_timeout: SimTime,
    cid_air: SimTime,
    hold_t: SimTime,
    pack_wait: SimTime,
    epoch: SimTime,
    jitter_us: u64,
    min_cid_sleep: SimTime,
    period: SimTime,
}

pub struct Simulation {
    sc: Scenario,
    sched: Scheduler<Ev>,
    nodes: Vec<Node>,
    layout: Layout,
    links: Vec<Vec<(usize, f64)>>,
    frames: HashMap<u64, Frame>,
    next_frame: u64,
    collector: MetricsCollector,
    trace: Option<Vec<TraceRecord>>,
    t: Timing,
    default_bounds: BeBounds,
    opp_cfg: OppBcastConfig,
    sensed_until: Vec<SimTime>,
    cid: Option<CidPhaseStats>,
    dispatched: u64,
    finished: bool,
}

impl Simulation {
    pub fn new(scenario: &Scenario, seed: u64, opts: RunOptions) -> Result<Self> {
        scenario.validate()?;
        let sc = scenario.clone();
        let layout = build_topology(&sc, seed)?;
        let n = layout.len();

        let nodes: Vec<Node> = (0..n)
            .map(|i| {
                let id = NodeId(i as u16);
                let proto =
                    OpserNodeState::new(id, id == layout.sink, sc.params.seen_cache as usize);
                Node::new(
                    id,
                    proto,
                    EnergyAccount::new(&sc.energy, SimTime::ZERO),
                    seed,
                )
            })
            .collect();

        let prop = &sc.propagation;
        let thr = prop.cs_thresh_dbm.min(prop.rx_thresh_dbm);
        let margin = match prop.model {
            PropagationModel::LogNormalShadowing => LINK_SIGMA_CUTOFF * prop.sigma_db,
            PropagationModel::TwoRayGroundWithError => 0.0,
        };
        let mut links = vec![Vec::new(); n];
        for (i, row) in links.iter_mut().enumerate() {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mean = prop.mean_rssi(layout.distance(NodeId(i as u16), NodeId(j as u16)))?;
                if mean + margin >= thr {
                    row.push((j, mean));
                }
            }
        }

        let rate = sc.mac.data_rate_bps;
        let data_air = airtime_of(sc.traffic.payload_bytes, rate)?;
        let cid_air = airtime_of(sc.params.cid_bytes, rate)?;
        let t = Timing {
            unit: sc.mac.backoff_unit(),
            cca: SimTime::from_secs(sc.mac.cca_s),
            turnaround: SimTime::from_secs(sc.mac.turnaround_s),
            ack_timeout: SimTime::from_secs(sc.mac.ack_timeout_s),
            cid_air,
            hold_t: sc.params.holding_time(),
            pack_wait: sc.params.passive_ack_wait(data_air),
            epoch: SimTime::from_secs(sc.params.epoch_s),
            jitter_us: SimTime::from_secs(sc.params.epoch_jitter_s).as_micros(),
            min_cid_sleep: sc.params.min_cid_sleep(cid_air),
            period: SimTime::from_secs(1.0 / sc.traffic.rate_pps).max(SimTime::from_micros(1)),
        };
        let default_bounds = sc.mac.default_bounds()?;
        let opp_cfg = OppBcastConfig::new(sc.params.oppbcast_window_s)?;

        let mut sim = Simulation {
            sched: Scheduler::new(),
            nodes,
            links,
            frames: HashMap::new(),
            next_frame: 0,
            collector: MetricsCollector::new(),
            trace: opts.trace.then(Vec::new),
            t,
            default_bounds,
            opp_cfg,
            sensed_until: vec![SimTime::ZERO; n],
            cid: None,
            dispatched: 0,
            finished: false,
            layout,
            sc,
        };
        sim.schedule_initial();
        Ok(sim)
    }

    fn schedule_initial(&mut self) {
        let end = SimTime::from_secs(self.sc.duration_s);
        self.sched
            .schedule_after(SimTime::from_secs(self.sc.params.cid_start_s), Ev::CidStart);
        let start = SimTime::from_secs(self.sc.traffic.start_s);
        if start <= end {
            self.sched.schedule_after(start, Ev::Snapshot);
        }
        let stop = SimTime::from_secs(self.sc.traffic_stop_s()).min(end);
        let period = self.t.period;
        for s in self.layout.sources.clone() {
            let i = s.index();
            let offset = self.nodes[i]
                .rng_traffic
                .uniform_int(0, period.as_micros() - 1);
            let first = start + SimTime::from_micros(offset);
            if first < stop {
                self.sched.schedule_after(first, Ev::Generate(i));
            }
        }
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn events_dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn corona_levels(&self) -> Vec<Option<u16>> {
        self.nodes.iter().map(|n| n.proto.corona_level).collect()
    }

    pub fn node_state(&self, id: NodeId) -> Option<&OpserNodeState> {
        self.nodes.get(id.index()).map(|n| &n.proto)
    }

    /// Dispatches every event up to and including `end`, then settles all
    /// energy accounts at `end` and returns the run's metrics. A simulation
    /// can be finished only once.
    pub fn run_until(&mut self, end: SimTime) -> Result<MetricsRecord> {
        if self.finished {
            return Err(Error::Config("simulation already finished".into()));
        }
        while let Some(d) = self.sched.pop_until(end) {
            self.dispatched += 1;
            self.dispatch(d.payload);
        }
        if end > self.now() {
            self.sched.advance_to(end);
        }
        self.finished = true;
        for i in 0..self.nodes.len() {
            self.close_rx(i);
            let profile = &self.sc.energy;
            let n = &mut self.nodes[i];
            n.energy.settle(profile, end);
            let rec = TraceRecord::Energy {
                t: end,
                node: n.id,
                initial: n.energy.initial_fj(),
                remaining: n.energy.remaining_fj(),
                per_state: n.energy.per_state_fj(),
            };
            self.emit(rec);
        }
        Ok(std::mem::take(&mut self.collector).finish())
    }

    pub fn into_output(self, metrics: MetricsRecord) -> RunOutput {
        RunOutput {
            metrics,
            corona_levels: self.corona_levels(),
            energy: self.nodes.iter().map(|n| n.energy.clone()).collect(),
            trace: self.trace,
            layout: self.layout,
            cid: self.cid,
            events_dispatched: self.dispatched,
        }
    }

    fn emit(&mut self, rec: TraceRecord) {
        self.collector.observe(&rec);
        if let Some(t) = &mut self.trace {
            t.push(rec);
        }
    }

    fn drop_packet(&mut self, i: usize, key: Option<PacketKey>, reason: DropReason) {
        let rec = TraceRecord::Drop {
            t: self.now(),
            node: self.nodes[i].id,
            key,
            reason,
        };
        self.emit(rec);
    }

    fn alive(&self, i: usize) -> bool {
        !self.nodes[i].energy.is_dead()
    }

    fn close_rx(&mut self, i: usize) {
        let now = self.now();
        let n = &mut self.nodes[i];
        if let Some(since) = n.rx_since {
            n.rx_us += (now - since).as_micros();
            n.rx_since = Some(now);
        }
    }

    /// Brings the energy account in line with what the radio is doing.
    fn set_radio(&mut self, i: usize) {
        let now = self.now();
        let profile = &self.sc.energy;
        let n = &mut self.nodes[i];
        let want = n.desired_radio();
        let cur = n.energy.state();
        if want == cur || n.energy.is_dead() {
            return;
        }
        if cur == RadioState::Rx {
            if let Some(s) = n.rx_since.take() {
                n.rx_us += (now - s).as_micros();
            }
        }
        if want == RadioState::Rx {
            n.rx_since = Some(now);
        }
        n.energy.transition(profile, want, now);
    }

    fn energy_ok(&mut self, i: usize) -> bool {
        let now = self.now();
        let profile = &self.sc.energy;
        let n = &mut self.nodes[i];
        n.energy.settle(profile, now);
        is_eligible(&n.energy, profile)
    }

    fn dispatch(&mut self, ev: Ev) {
        match ev {
            Ev::CidStart => self.on_cid_start(),
            Ev::CidSlot(i) => self.on_cid_slot(i),
            Ev::Wake(i) => {
                self.nodes[i].asleep = false;
                self.set_radio(i);
                self.start_next(i);
            }
            Ev::Generate(i) => self.on_generate(i),
            Ev::CcaStart(i) => self.on_cca_start(i),
            Ev::CcaEnd(i) => self.on_cca_end(i),
            Ev::TxStart(i) => self.on_tx_start(i),
            Ev::TxEnd(f) => self.on_tx_end(f),
            Ev::AckTimeout(i) => self.on_ack_timeout(i),
            Ev::SendAck {
                node,
                to,
                acked_frame,
                key,
            } => self.on_send_ack(node, to, acked_frame, key),
            Ev::Forward { node, key } => self.on_forward(node, key),
            Ev::PackTimeout { node, key } => self.on_pack_timeout(node, key),
            Ev::Snapshot => self.on_snapshot(),
        }
    }

    // ---- radio ----

    fn start_tx(
        &mut self,
        i: usize,
        packet: Packet,
        direct: bool,
        trig: Option<NodeId>,
        retry: u32,
    ) -> u64 {
        let now = self.now();
        let frame = self.next_frame;
        self.next_frame += 1;
        let air = airtime_of(packet.length_bytes, self.sc.mac.data_rate_bps)
            .expect("validated frame length");
        let end = now + air;
        {
            let n = &mut self.nodes[i];
            for a in &mut n.arrivals {
                a.corrupted = true;
            }
            n.transmitting = Some(frame);
            if n.in_cca {
                n.cca_busy = true;
            }
        }
        self.set_radio(i);

        let prop = self.sc.propagation.clone();
        let thr = prop.cs_thresh_dbm.min(prop.rx_thresh_dbm);
        let mut receivers = Vec::new();
        for k in 0..self.links[i].len() {
            let (j, mean) = self.links[i][k];
            let n = &mut self.nodes[j];
            if n.energy.is_dead() {
                continue;
            }
            let rssi = match prop.model {
                PropagationModel::LogNormalShadowing => {
                    mean + n.rng_channel.normal(0.0, prop.sigma_db)
                }
                PropagationModel::TwoRayGroundWithError => mean,
            };
            if rssi < thr {
                continue;
            }
            if !n.listening() {
                // Energy is still on the air for a carrier sense after the
                // node wakes or finishes sending.
                self.sensed_until[j] = self.sensed_until[j].max(end);
                continue;
            }
            let power = dbm_to_mw(rssi);
            let mut interference = 0.0;
            for a in &mut n.arrivals {
                a.interference_mw += power;
                interference += a.power_mw;
            }
            n.arrivals.push(Arrival {
                frame,
                rssi_dbm: rssi,
                power_mw: power,
                interference_mw: interference,
                corrupted: false,
            });
            if n.in_cca {
                n.cca_busy = true;
            }
            receivers.push(j);
            self.set_radio(j);
        }

        let (cl, seq) = match &packet.payload {
            Payload::Cid(h) => (h.cl, Some(h.cid_seq_number)),
            Payload::Data(h) => (h.cl, None),
            Payload::Ack(_) => (self.nodes[i].proto.corona_level.unwrap_or(0), None),
        };
        let rec = TraceRecord::Tx {
            t: now,
            node: self.nodes[i].id,
            frame,
            kind: packet.kind(),
            dst: packet.next_hop,
            cl,
            key: packet.key(),
            seq,
            trig,
            retry,
        };
        self.emit(rec);
        self.frames.insert(
            frame,
            Frame {
                sender: i,
                packet,
                receivers,
                direct,
            },
        );
        self.sched.schedule_after(air, Ev::TxEnd(frame));
        frame
    }

    fn on_tx_end(&mut self, frame: u64) {
        let Some(f) = self.frames.remove(&frame) else {
            return;
        };
        let s = f.sender;
        self.nodes[s].transmitting = None;
        self.set_radio(s);

        let mut decoded = Vec::new();
        for &j in &f.receivers {
            let n = &mut self.nodes[j];
            let Some(pos) = n.arrivals.iter().position(|a| a.frame == frame) else {
                continue;
            };
            let a = n.arrivals.remove(pos);
            if !a.corrupted && !n.energy.is_dead() {
                let rep = reception_decision(
                    &self.sc.propagation,
                    a.rssi_dbm,
                    a.interference_mw,
                    &mut n.rng_error,
                );
                if rep.received_ok {
                    decoded.push((j, rep.lqi));
                }
            }
            self.set_radio(j);
        }

        if !f.direct {
            self.mac_tx_done(s, frame);
        }
        for (j, lqi) in decoded {
            if self.alive(j) {
                self.on_receive(j, s, frame, &f.packet, lqi);
            }
        }
    }

    fn sleep_for(&mut self, i: usize, dur: SimTime) {
        let n = &mut self.nodes[i];
        n.asleep = true;
        n.arrivals.clear();
        n.in_cca = false;
        self.set_radio(i);
        self.sched.schedule_after(dur, Ev::Wake(i));
    }

    // ---- MAC ----

    fn enqueue(&mut self, i: usize, job: MacJob) {
        let n = &mut self.nodes[i];
        if n.queue.len() >= self.sc.mac.queue_capacity as usize {
            let key = job.key();
            self.drop_packet(i, key, DropReason::QueueFull);
            return;
        }
        n.queue.push_back(job);
        self.start_next(i);
    }

    fn start_next(&mut self, i: usize) {
        let max_backoffs = self.sc.mac.max_csma_backoffs;
        let n = &mut self.nodes[i];
        if n.active.is_some() || n.asleep || n.energy.is_dead() {
            return;
        }
        let Some(job) = n.queue.pop_front() else {
            return;
        };
        n.active = Some(Active {
            csma: CsmaProcess::new(job.bounds, max_backoffs),
            job,
            phase: Phase::Backoff,
            timer: None,
            tries: 0,
            frame: None,
        });
        self.begin_backoff(i);
    }

    fn begin_backoff(&mut self, i: usize) {
        let unit = self.t.unit;
        let n = &mut self.nodes[i];
        let Some(act) = n.active.as_mut() else {
            return;
        };
        let units = act.csma.draw_backoff(&mut n.rng_backoff);
        act.phase = Phase::Backoff;
        act.frame = None;
        act.timer = Some(
            self.sched
                .schedule_after(unit.times(units as u64), Ev::CcaStart(i)),
        );
        if act.job.kind == JobKind::Cid {
            n.rx_off = true;
            n.arrivals.clear();
        }
        self.set_radio(i);
    }

    fn on_cca_start(&mut self, i: usize) {
        let now = self.now();
        let cca = self.t.cca;
        let sensed = self.sensed_until[i] > now;
        let n = &mut self.nodes[i];
        let Some(act) = n.active.as_mut() else {
            return;
        };
        if act.phase != Phase::Backoff {
            return;
        }
        act.phase = Phase::Cca;
        act.timer = Some(self.sched.schedule_after(cca, Ev::CcaEnd(i)));
        n.rx_off = false;
        n.in_cca = true;
        n.cca_busy = sensed || !n.arrivals.is_empty() || n.transmitting.is_some();
        self.set_radio(i);
    }

    fn on_tx_start(&mut self, i: usize) {
        let n = &mut self.nodes[i];
        let Some(act) = n.active.as_mut() else {
            return;
        };
        if act.phase != Phase::Turnaround {
            return;
        }
        if n.transmitting.is_some() {
            // An acknowledgement took the radio during turnaround; count it
            // as a busy channel.
            act.timer = None;
            match act.csma.on_cca(true) {
                CcaVerdict::ChannelAccessFailure => self.channel_access_failure(i),
                _ => self.begin_backoff(i),
            }
            return;
        }
        act.phase = Phase::Tx;
        act.timer = None;
        let packet = act.job.packet;
        let trig = act.job.trig;
        let retry = act.job.retry + act.tries;
        let frame = self.start_tx(i, packet, false, trig, retry);
        if let Some(act) = self.nodes[i].active.as_mut() {
            act.frame = Some(frame);
        }
    }

    fn on_cca_end(&mut self, i: usize) {
        let n = &mut self.nodes[i];
        let Some(act) = n.active.as_mut() else {
            return;
        };
        if act.phase != Phase::Cca {
            return;
        }
        n.in_cca = false;
        let busy = n.cca_busy || n.transmitting.is_some();
        act.timer = None;
        match act.csma.on_cca(busy) {
            CcaVerdict::Transmit => {
                act.phase = Phase::Turnaround;
                act.timer = Some(self.sched.schedule_after(self.t.turnaround, Ev::TxStart(i)));
            }
            CcaVerdict::BackoffAgain => self.begin_backoff(i),
            CcaVerdict::ChannelAccessFailure => self.channel_access_failure(i),
        }
    }

    fn channel_access_failure(&mut self, i: usize) {
        let n = &mut self.nodes[i];
        let act = n.active.take().expect("active job");
        n.rx_off = false;
        self.set_radio(i);
        let rec = TraceRecord::Caf {
            t: self.now(),
            node: self.nodes[i].id,
            kind: act.job.packet.kind(),
            key: act.job.key(),
        };
        self.emit(rec);
        self.on_caf(i, act.job);
        self.start_next(i);
    }

    fn on_caf(&mut self, i: usize, job: MacJob) {
        match job.kind {
            // The flood must go out once per node; keep contending.
            JobKind::Cid => self.nodes[i].queue.push_front(job),
            JobKind::Bcast { passive: true } if job.retry < self.sc.mac.mac_retries as u32 => {
                self.enqueue(
                    i,
                    MacJob {
                        retry: job.retry + 1,
                        ..job
                    },
                );
            }
            JobKind::Bcast { .. } => {
                self.drop_packet(i, job.key(), DropReason::ChannelAccessFailure)
            }
            JobKind::Unicast { .. } => self.unicast_done(i, job, false, None),
        }
    }

    fn mac_tx_done(&mut self, i: usize, frame: u64) {
        let now = self.now();
        let n = &mut self.nodes[i];
        let Some(act) = n.active.as_mut() else {
            return;
        };
        if act.frame != Some(frame) {
            return;
        }
        match act.job.kind {
            JobKind::Cid => {
                n.active = None;
                n.cid_sent += 1;
                n.cid_pending = None;
                let cl = n.proto.corona_level.unwrap_or(1) as u64;
                let dur = self.t.min_cid_sleep.max(self.t.epoch.times(2 * cl + 2));
                self.sleep_for(i, dur);
            }
            JobKind::Bcast { passive } => {
                let job = n.active.take().expect("active job").job;
                if passive {
                    let header = job.data().expect("data job");
                    let key = header.key();
                    let handle = self
                        .sched
                        .schedule_after(self.t.pack_wait, Ev::PackTimeout { node: i, key });
                    let old = self.nodes[i].pack.insert(
                        key,
                        PackWait {
                            handle,
                            attempt: job.retry,
                            header,
                            bounds: job.bounds,
                            trig: job.trig,
                        },
                    );
                    if let Some(o) = old {
                        self.sched.cancel(o.handle);
                    }
                }
                let _ = now;
                self.start_next(i);
            }
            JobKind::Unicast { .. } => {
                act.phase = Phase::AwaitAck;
                act.timer = Some(
                    self.sched
                        .schedule_after(self.t.ack_timeout, Ev::AckTimeout(i)),
                );
            }
        }
    }

    fn on_ack_timeout(&mut self, i: usize) {
        let retries = self.sc.mac.mac_retries as u32;
        let max_backoffs = self.sc.mac.max_csma_backoffs;
        let n = &mut self.nodes[i];
        let Some(act) = n.active.as_mut() else {
            return;
        };
        if act.phase != Phase::AwaitAck {
            return;
        }
        act.tries += 1;
        act.timer = None;
        if act.tries <= retries {
            act.csma = CsmaProcess::new(act.job.bounds, max_backoffs);
            self.begin_backoff(i);
        } else {
            let act = n.active.take().expect("active job");
            self.unicast_done(i, act.job, false, None);
            self.start_next(i);
        }
    }

    fn on_send_ack(&mut self, i: usize, to: NodeId, acked_frame: u64, key: Option<PacketKey>) {
        let n = &self.nodes[i];
        if n.energy.is_dead() || n.asleep || n.rx_off || n.transmitting.is_some() {
            return;
        }
        let packet = Packet {
            payload: Payload::Ack(AckHeader { acked_frame, key }),
            next_hop: Address::Node(to),
            length_bytes: self.sc.mac.ack_bytes,
        };
        self.start_tx(i, packet, true, None, 0);
    }

    // ---- routing ----

    fn on_cid_start(&mut self) {
        let s = self.layout.sink.index();
        let ttl = self.sc.params.cid_ttl;
        let Ok(h) = self.nodes[s].proto.cid_originate(ttl) else {
            return;
        };
        let job = MacJob {
            packet: Packet::cid(h, self.sc.params.cid_bytes),
            bounds: self.default_bounds,
            kind: JobKind::Cid,
            trig: None,
            retry: 0,
        };
        self.enqueue(s, job);
    }

    fn on_cid_rx(&mut self, j: usize, h: crate::protocol::CidHeader, lqi: u8) {
        let now = self.now();
        let n = &mut self.nodes[j];
        if let CidOutcome::Learned { cl, rebroadcast } = n.proto.cid_receive(&h, lqi) {
            let rec = TraceRecord::CidRx {
                t: now,
                node: n.id,
                seq: h.cid_seq_number,
                from: h.prev_hop_id,
                cl,
            };
            if let Some(rb) = rebroadcast {
                n.cid_pending = Some(rb);
                let jitter = match self.t.jitter_us {
                    0 => 0,
                    w => n.rng_jitter.uniform_int(0, w - 1),
                };
                let delay = self.t.epoch.times(cl as u64 - 1) + SimTime::from_micros(jitter);
                n.asleep = true;
                n.arrivals.clear();
                self.sched.schedule_after(delay, Ev::CidSlot(j));
                self.set_radio(j);
            }
            self.emit(rec);
        }
    }

    fn on_cid_slot(&mut self, j: usize) {
        let n = &mut self.nodes[j];
        n.asleep = false;
        let Some(h) = n.cid_pending else {
            self.set_radio(j);
            self.start_next(j);
            return;
        };
        self.set_radio(j);
        let job = MacJob {
            packet: Packet::cid(h, self.sc.params.cid_bytes),
            bounds: self.default_bounds,
            kind: JobKind::Cid,
            trig: None,
            retry: 0,
        };
        self.enqueue(j, job);
    }

    fn on_snapshot(&mut self) {
        let now = self.now();
        let mut stats = CidPhaseStats {
            snapshot_time: now,
            tx_fj: Vec::new(),
            rx_fj: Vec::new(),
            rx_us: Vec::new(),
            cid_transmissions: Vec::new(),
            cid_airtime: self.t.cid_air,
        };
        for i in 0..self.nodes.len() {
            self.close_rx(i);
            let profile = &self.sc.energy;
            let n = &mut self.nodes[i];
            n.energy.settle(profile, now);
            stats.tx_fj.push(n.energy.state_fj(RadioState::Tx));
            stats.rx_fj.push(n.energy.state_fj(RadioState::Rx));
            stats.rx_us.push(n.rx_us);
            stats.cid_transmissions.push(n.cid_sent);
        }
        self.cid = Some(stats);
    }

    fn on_generate(&mut self, i: usize) {
        let now = self.now();
        let stop = SimTime::from_secs(self.sc.traffic_stop_s())
            .min(SimTime::from_secs(self.sc.duration_s));
        let n = &mut self.nodes[i];
        let pid = n.next_pid;
        n.next_pid += 1;
        let id = n.id;
        if now + self.t.period < stop {
            self.sched.schedule_after(self.t.period, Ev::Generate(i));
        }
        self.emit(TraceRecord::Gen {
            t: now,
            node: id,
            pid,
        });
        let header = DataHeader {
            cl: 0,
            packet_id: pid,
            destination_id: self.layout.sink,
            source_id: id,
        };
        if !self.alive(i) {
            self.drop_packet(i, Some(header.key()), DropReason::Energy);
            return;
        }
        self.send_data(i, header, None, self.default_bounds);
    }

    /// Originates or forwards a data packet with this node's transmit-mode
    /// logic.
    fn send_data(
        &mut self,
        i: usize,
        mut header: DataHeader,
        trig: Option<NodeId>,
        bounds: BeBounds,
    ) {
        let now = self.now();
        let key = header.key();
        let lqi_tl = self.sc.params.lqi_tl;
        let payload = self.sc.traffic.payload_bytes;
        let n = &mut self.nodes[i];
        let Some(cl) = n.proto.corona_level else {
            self.drop_packet(i, Some(key), DropReason::NoCorona);
            return;
        };
        header.cl = cl;
        n.proto.seen_cache.insert(key);
        let bcast = |passive| MacJob {
            packet: Packet::data_frame(header, Address::Broadcast, payload),
            bounds,
            kind: JobKind::Bcast { passive },
            trig,
            retry: 0,
        };
        let unicast = |nh: NodeId| MacJob {
            packet: Packet::data_frame(header, Address::Node(nh), payload),
            bounds,
            kind: JobKind::Unicast { next_hop: nh },
            trig,
            retry: 0,
        };
        match self.sc.protocol {
            ProtocolKind::Opser => {
                let first =
                    n.proto.sent_count == 0 || (header.source_id == n.id && header.packet_id == 1);
                let choice = n.proto.select_mode(first, lqi_tl);
                n.proto.sent_count += 1;
                n.proto.mode = choice.mode;
                let rec = TraceRecord::Mode {
                    t: now,
                    node: n.id,
                    key,
                    mode: choice.mode,
                    reason: choice.reason,
                    trust: choice.trust,
                };
                self.emit(rec);
                let job = match choice.mode {
                    Mode::Opportunistic => bcast(true),
                    Mode::Unicast(nh) => unicast(nh),
                };
                self.enqueue(i, job);
            }
            ProtocolKind::Oppbcast => self.enqueue(i, bcast(false)),
            ProtocolKind::GreedyUnicast => match greedy_unicast_next_hop(&n.proto) {
                Some(nh) => self.enqueue(i, unicast(nh)),
                None => self.drop_packet(i, Some(key), DropReason::Void),
            },
        }
    }

    fn unicast_done(&mut self, i: usize, job: MacJob, acked: bool, lqi: Option<u8>) {
        let JobKind::Unicast { next_hop } = job.kind else {
            return;
        };
        let header = job.data().expect("data job");
        let now = self.now();
        match self.sc.protocol {
            ProtocolKind::Opser => {
                let n = &mut self.nodes[i];
                let id = n.id;
                let change = n.proto.on_unicast_result(next_hop, acked, lqi);
                if let Some((old, new)) = change {
                    self.emit(TraceRecord::Trust {
                        t: now,
                        node: id,
                        nbr: next_hop,
                        old: Some(old),
                        new,
                    });
                }
                if !acked {
                    self.emit(TraceRecord::RouteFail {
                        t: now,
                        node: id,
                        nbr: next_hop,
                    });
                    self.send_data(i, header, job.trig, job.bounds);
                }
            }
            ProtocolKind::GreedyUnicast if !acked => {
                self.drop_packet(i, Some(header.key()), DropReason::UnicastFailed);
            }
            _ => {}
        }
    }

    fn on_receive(&mut self, j: usize, s: usize, frame: u64, packet: &Packet, lqi: u8) {
        let me = self.nodes[j].id;
        let sender = self.nodes[s].id;
        match packet.payload {
            Payload::Cid(h) => self.on_cid_rx(j, h, lqi),
            Payload::Ack(a) => {
                if packet.next_hop == Address::Node(me) {
                    match a.key {
                        None => self.on_mac_ack(j, a.acked_frame, lqi),
                        Some(k) => self.passive_ack(j, k, sender, 1, lqi),
                    }
                }
                if let Some(k) = a.key {
                    self.suppress(j, k, sender, None);
                }
            }
            Payload::Data(h) => {
                let key = h.key();
                self.passive_ack(j, key, sender, h.cl, lqi);
                self.suppress(j, key, sender, Some(h.cl));
                match packet.next_hop {
                    Address::Broadcast => self.recv_broadcast(j, sender, frame, h, lqi),
                    Address::Node(d) if d == me => self.recv_unicast(j, sender, frame, h),
                    Address::Node(_) => {}
                }
            }
        }
    }

    fn on_mac_ack(&mut self, i: usize, acked_frame: u64, lqi: u8) {
        let n = &mut self.nodes[i];
        let Some(act) = n.active.as_ref() else {
            return;
        };
        if act.phase != Phase::AwaitAck || act.frame != Some(acked_frame) {
            return;
        }
        let act = n.active.take().expect("active job");
        if let Some(h) = act.timer {
            self.sched.cancel(h);
        }
        self.unicast_done(i, act.job, true, Some(lqi));
        self.start_next(i);
    }

    /// Treats an overheard copy of `key` from `by` as confirmation of this
    /// node's own earlier broadcast.
    fn passive_ack(&mut self, j: usize, key: PacketKey, by: NodeId, by_cl: u16, lqi: u8) {
        let now = self.now();
        let n = &mut self.nodes[j];
        let mut hit = false;
        if let Some(w) = n.pack.remove(&key) {
            self.sched.cancel(w.handle);
            hit = true;
        } else {
            let own_retry = |job: &MacJob| {
                job.key() == Some(key)
                    && job.kind == JobKind::Bcast { passive: true }
                    && job.retry > 0
            };
            if let Some(pos) = n.queue.iter().position(own_retry) {
                n.queue.remove(pos);
                hit = true;
            } else if n.active.as_ref().is_some_and(|a| {
                own_retry(&a.job) && matches!(a.phase, Phase::Backoff | Phase::Cca)
            }) {
                let a = n.active.take().expect("active job");
                if let Some(h) = a.timer {
                    self.sched.cancel(h);
                }
                n.in_cca = false;
                n.rx_off = false;
                hit = true;
                self.set_radio(j);
                self.start_next(j);
            }
        }
        if !hit || self.sc.protocol != ProtocolKind::Opser {
            return;
        }
        let n = &mut self.nodes[j];
        let (old, new, _) = n.proto.on_passive_ack(by, by_cl, lqi);
        let id = n.id;
        self.emit(TraceRecord::Trust {
            t: now,
            node: id,
            nbr: by,
            old,
            new,
        });
    }

    /// Cancels a pending forward of `key` once another node is heard
    /// carrying it at this node's level or closer (`by_cl`), or the sink
    /// acknowledges it (`by_cl` None). Copies from the node that triggered
    /// the forward do not count.
    fn suppress(&mut self, j: usize, key: PacketKey, by: NodeId, by_cl: Option<u16>) {
        let now = self.now();
        let n = &mut self.nodes[j];
        let own = n.proto.corona_level;
        let applies =
            |trig: NodeId| trig != by && by_cl.is_none_or(|c| own.is_some_and(|o| c <= o));
        let mut cancelled = 0;
        if n.pending_fwd.get(&key).is_some_and(|p| applies(p.trig)) {
            let p = n.pending_fwd.remove(&key).expect("pending forward");
            self.sched.cancel(p.handle);
            cancelled += 1;
        }
        let is_target = |job: &MacJob| job.key() == Some(key) && job.trig.is_some_and(applies);
        let before = n.queue.len();
        n.queue.retain(|job| !is_target(job));
        cancelled += before - n.queue.len();
        let mut restart = false;
        if n.active
            .as_ref()
            .is_some_and(|a| is_target(&a.job) && matches!(a.phase, Phase::Backoff | Phase::Cca))
        {
            let a = n.active.take().expect("active job");
            if let Some(h) = a.timer {
                self.sched.cancel(h);
            }
            n.in_cca = false;
            n.rx_off = false;
            cancelled += 1;
            restart = true;
        }
        let id = n.id;
        for _ in 0..cancelled {
            self.emit(TraceRecord::Cancel {
                t: now,
                node: id,
                key,
                by,
            });
        }
        if restart {
            self.set_radio(j);
            self.start_next(j);
        }
    }

    fn recv_broadcast(&mut self, j: usize, from: NodeId, frame: u64, h: DataHeader, lqi: u8) {
        let now = self.now();
        let key = h.key();
        let me = self.nodes[j].id;
        let deliver = |sim: &mut Simulation| {
            sim.emit(TraceRecord::Deliver {
                t: now,
                node: me,
                key,
                from,
            });
        };
        match self.sc.protocol {
            ProtocolKind::Opser => {
                let energy_ok = self.energy_ok(j);
                let decision =
                    self.nodes[j]
                        .proto
                        .classify_broadcast(&h, lqi, energy_ok, &self.sc.params);
                match decision {
                    RecvDecision::Drop(r) => self.drop_packet(j, Some(key), r),
                    RecvDecision::Deliver => {
                        deliver(self);
                        self.sched.schedule_after(
                            self.t.turnaround,
                            Ev::SendAck {
                                node: j,
                                to: from,
                                acked_frame: frame,
                                key: Some(key),
                            },
                        );
                    }
                    RecvDecision::Contend(d) => {
                        let n = &mut self.nodes[j];
                        let dhd = compute_dhd(d.priority_level, self.t.hold_t, &mut n.rng_jitter)
                            .expect("priority within table range");
                        let bounds = if self.sc.params.priority_be {
                            d.be_bounds()
                        } else {
                            self.default_bounds
                        };
                        self.hold(j, from, frame, h, bounds, d.priority_level, dhd);
                    }
                }
            }
            ProtocolKind::Oppbcast => {
                let energy_ok = self.energy_ok(j);
                let n = &mut self.nodes[j];
                match oppbcast_recv(&n.proto, &h, energy_ok, &self.opp_cfg, &mut n.rng_jitter) {
                    OppBcastAction::Drop(r) => self.drop_packet(j, Some(key), r),
                    OppBcastAction::Deliver => deliver(self),
                    OppBcastAction::Hold(d) => {
                        self.hold(j, from, frame, h, self.default_bounds, 0, d)
                    }
                }
            }
            ProtocolKind::GreedyUnicast => {
                if self.nodes[j].proto.is_sink {
                    deliver(self);
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn hold(
        &mut self,
        j: usize,
        trig: NodeId,
        frame: u64,
        h: DataHeader,
        bounds: BeBounds,
        prio: u8,
        delay: SimTime,
    ) {
        let now = self.now();
        let key = h.key();
        let handle: EventHandle = self
            .sched
            .schedule_after(delay, Ev::Forward { node: j, key });
        let n = &mut self.nodes[j];
        n.proto.seen_cache.insert(key);
        if let Some(old) = n.pending_fwd.insert(
            key,
            PendingFwd {
                handle,
                trig,
                header: h,
                bounds,
            },
        ) {
            self.sched.cancel(old.handle);
        }
        let id = n.id;
        self.emit(TraceRecord::Dhd {
            t: now,
            node: id,
            key,
            frame,
            prio,
            fire: now + delay,
        });
    }

    fn on_forward(&mut self, j: usize, key: PacketKey) {
        let Some(p) = self.nodes[j].pending_fwd.remove(&key) else {
            return;
        };
        if !self.alive(j) {
            return;
        }
        self.send_data(j, p.header, Some(p.trig), p.bounds);
    }

    fn recv_unicast(&mut self, j: usize, from: NodeId, frame: u64, h: DataHeader) {
        let now = self.now();
        let key = h.key();
        self.sched.schedule_after(
            self.t.turnaround,
            Ev::SendAck {
                node: j,
                to: from,
                acked_frame: frame,
                key: None,
            },
        );
        let n = &self.nodes[j];
        if n.proto.is_sink {
            let id = n.id;
            self.emit(TraceRecord::Deliver {
                t: now,
                node: id,
                key,
                from,
            });
            return;
        }
        if n.proto.seen_cache.contains(&key) {
            self.drop_packet(j, Some(key), DropReason::Duplicate);
            return;
        }
        self.send_data(j, h, Some(from), self.default_bounds);
    }

    fn on_pack_timeout(&mut self, i: usize, key: PacketKey) {
        let Some(w) = self.nodes[i].pack.remove(&key) else {
            return;
        };
        if w.attempt < self.sc.mac.mac_retries as u32 {
            let payload = self.sc.traffic.payload_bytes;
            self.enqueue(
                i,
                MacJob {
                    packet: Packet::data_frame(w.header, Address::Broadcast, payload),
                    bounds: w.bounds,
                    kind: JobKind::Bcast { passive: true },
                    trig: w.trig,
                    retry: w.attempt + 1,
                },
            );
        } else {
            self.drop_packet(i, Some(key), DropReason::NoPassiveAck);
        }
    }
}

/// Builds and runs `scenario` under `seed` for its full duration.
pub fn run_scenario(scenario: &Scenario, seed: u64, opts: RunOptions) -> Result<RunOutput> {
    let mut sim = Simulation::new(scenario, seed, opts)?;
    let metrics = sim.run_until(SimTime::from_secs(scenario.duration_s))?;
    Ok(sim.into_output(metrics))
}
