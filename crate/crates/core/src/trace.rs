//! Line-oriented event trace.
//!
//! Every line is `<time_us> <node> <kind> key=value ...`. The format is
//! lossless for everything the metrics and the offline validator need, so a
//! persisted trace reproduces the in-run metrics exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::engine::SimTime;
use crate::error::{Error, Result};
use crate::protocol::{Address, DropReason, Mode, ModeReason, NodeId, PacketKey, PacketKind};

#[derive(Debug, Clone, PartialEq)]
pub enum TraceRecord {
    /// Application packet generated at a source.
    Gen { t: SimTime, node: NodeId, pid: u32 },
    /// Data frame decoded by the sink.
    Deliver {
        t: SimTime,
        node: NodeId,
        key: PacketKey,
        from: NodeId,
    },
    Tx {
        t: SimTime,
        node: NodeId,
        frame: u64,
        kind: PacketKind,
        dst: Address,
        cl: u16,
        key: Option<PacketKey>,
        seq: Option<u32>,
        /// Transmitter whose frame made this node a forwarder.
        trig: Option<NodeId>,
        /// Zero for the first transmission of a packet by this node.
        retry: u32,
    },
    /// Candidate holding timer armed on reception of `frame`.
    Dhd {
        t: SimTime,
        node: NodeId,
        key: PacketKey,
        frame: u64,
        prio: u8,
        fire: SimTime,
    },
    /// Pending forward suppressed after overhearing `by`.
    Cancel {
        t: SimTime,
        node: NodeId,
        key: PacketKey,
        by: NodeId,
    },
    Mode {
        t: SimTime,
        node: NodeId,
        key: PacketKey,
        mode: Mode,
        reason: ModeReason,
        /// Trust of the chosen next hop, unicast only.
        trust: Option<f64>,
    },
    Trust {
        t: SimTime,
        node: NodeId,
        nbr: NodeId,
        old: Option<f64>,
        new: f64,
    },
    RouteFail {
        t: SimTime,
        node: NodeId,
        nbr: NodeId,
    },
    Drop {
        t: SimTime,
        node: NodeId,
        key: Option<PacketKey>,
        reason: DropReason,
    },
    Caf {
        t: SimTime,
        node: NodeId,
        kind: PacketKind,
        key: Option<PacketKey>,
    },
    CidRx {
        t: SimTime,
        node: NodeId,
        seq: u32,
        from: NodeId,
        cl: u16,
    },
    /// Final energy account in femtojoules; per-state order is tx rx idle sleep.
    Energy {
        t: SimTime,
        node: NodeId,
        initial: u64,
        remaining: u64,
        per_state: [u64; 4],
    },
}

impl TraceRecord {
    pub fn time(&self) -> SimTime {
        use TraceRecord::*;
        match self {
            Gen { t, .. }
            | Deliver { t, .. }
            | Tx { t, .. }
            | Dhd { t, .. }
            | Cancel { t, .. }
            | Mode { t, .. }
            | Trust { t, .. }
            | RouteFail { t, .. }
            | Drop { t, .. }
            | Caf { t, .. }
            | CidRx { t, .. }
            | Energy { t, .. } => *t,
        }
    }

    pub fn key(&self) -> Option<PacketKey> {
        use TraceRecord::*;
        match self {
            Deliver { key, .. } | Dhd { key, .. } | Cancel { key, .. } | Mode { key, .. } => {
                Some(*key)
            }
            Tx { key, .. } | Drop { key, .. } | Caf { key, .. } => *key,
            Gen { node, pid, .. } => Some(PacketKey {
                source: *node,
                packet_id: *pid,
            }),
            _ => None,
        }
    }

    pub fn node(&self) -> NodeId {
        use TraceRecord::*;
        match self {
            Gen { node, .. }
            | Deliver { node, .. }
            | Tx { node, .. }
            | Dhd { node, .. }
            | Cancel { node, .. }
            | Mode { node, .. }
            | Trust { node, .. }
            | RouteFail { node, .. }
            | Drop { node, .. }
            | Caf { node, .. }
            | CidRx { node, .. }
            | Energy { node, .. } => *node,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        use TraceRecord::*;
        match self {
            Gen { .. } => "gen",
            Deliver { .. } => "deliver",
            Tx { .. } => "tx",
            Dhd { .. } => "dhd",
            Cancel { .. } => "cancel",
            Mode { .. } => "mode",
            Trust { .. } => "trust",
            RouteFail { .. } => "route_fail",
            Drop { .. } => "drop",
            Caf { .. } => "caf",
            CidRx { .. } => "cid_rx",
            Energy { .. } => "energy",
        }
    }
}

fn write_key(f: &mut fmt::Formatter<'_>, key: &PacketKey) -> fmt::Result {
    write!(f, " src={} pid={}", key.source, key.packet_id)
}

fn write_opt_key(f: &mut fmt::Formatter<'_>, key: &Option<PacketKey>) -> fmt::Result {
    match key {
        Some(k) => write_key(f, k),
        None => Ok(()),
    }
}

fn mode_name(mode: Mode) -> String {
    match mode {
        Mode::Opportunistic => "opp".to_string(),
        Mode::Unicast(n) => format!("uni:{n}"),
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}",
            self.time().as_micros(),
            self.node(),
            self.kind_name()
        )?;
        use TraceRecord::*;
        match self {
            Gen { pid, .. } => write!(f, " pid={pid}"),
            Deliver { key, from, .. } => {
                write_key(f, key)?;
                write!(f, " from={from}")
            }
            Tx {
                frame,
                kind,
                dst,
                cl,
                key,
                seq,
                trig,
                retry,
                ..
            } => {
                write!(f, " frame={frame} type={} dst={dst} cl={cl}", kind.name())?;
                write_opt_key(f, key)?;
                if let Some(s) = seq {
                    write!(f, " seq={s}")?;
                }
                if let Some(n) = trig {
                    write!(f, " trig={n}")?;
                }
                write!(f, " retry={retry}")
            }
            Dhd {
                key,
                frame,
                prio,
                fire,
                ..
            } => {
                write_key(f, key)?;
                write!(f, " frame={frame} prio={prio} fire={}", fire.as_micros())
            }
            Cancel { key, by, .. } => {
                write_key(f, key)?;
                write!(f, " by={by}")
            }
            Mode {
                key,
                mode,
                reason,
                trust,
                ..
            } => {
                write_key(f, key)?;
                write!(f, " mode={} reason={}", mode_name(*mode), reason.name())?;
                if let Some(tv) = trust {
                    write!(f, " trust={tv}")?;
                }
                Ok(())
            }
            Trust { nbr, old, new, .. } => {
                write!(f, " nbr={nbr}")?;
                if let Some(o) = old {
                    write!(f, " old={o}")?;
                }
                write!(f, " new={new}")
            }
            RouteFail { nbr, .. } => write!(f, " nbr={nbr}"),
            Drop { key, reason, .. } => {
                write_opt_key(f, key)?;
                write!(f, " reason={}", reason.name())
            }
            Caf { kind, key, .. } => {
                write!(f, " type={}", kind.name())?;
                write_opt_key(f, key)
            }
            CidRx { seq, from, cl, .. } => write!(f, " seq={seq} from={from} cl={cl}"),
            Energy {
                initial,
                remaining,
                per_state,
                ..
            } => write!(
                f,
                " initial={initial} remaining={remaining} tx={} rx={} idle={} sleep={}",
                per_state[0], per_state[1], per_state[2], per_state[3]
            ),
        }
    }
}

struct Fields<'a> {
    map: BTreeMap<&'a str, &'a str>,
}

fn perr(msg: impl Into<String>) -> Error {
    Error::TraceParse {
        line: 0,
        msg: msg.into(),
    }
}

impl<'a> Fields<'a> {
    fn raw(&self, k: &str) -> Result<&'a str> {
        self.map
            .get(k)
            .copied()
            .ok_or_else(|| perr(format!("missing field '{k}'")))
    }

    fn get<T: FromStr>(&self, k: &str) -> Result<T> {
        let v = self.raw(k)?;
        v.parse()
            .map_err(|_| perr(format!("bad value '{v}' for '{k}'")))
    }

    fn opt<T: FromStr>(&self, k: &str) -> Result<Option<T>> {
        match self.map.get(k) {
            None => Ok(None),
            Some(_) => self.get(k).map(Some),
        }
    }

    fn node(&self, k: &str) -> Result<NodeId> {
        self.get::<u16>(k).map(NodeId)
    }

    fn opt_node(&self, k: &str) -> Result<Option<NodeId>> {
        Ok(self.opt::<u16>(k)?.map(NodeId))
    }

    fn key(&self) -> Result<PacketKey> {
        Ok(PacketKey {
            source: self.node("src")?,
            packet_id: self.get("pid")?,
        })
    }

    fn opt_key(&self) -> Result<Option<PacketKey>> {
        if self.map.contains_key("src") {
            self.key().map(Some)
        } else {
            Ok(None)
        }
    }

    fn kind(&self) -> Result<PacketKind> {
        match self.raw("type")? {
            "CID" => Ok(PacketKind::Cid),
            "DATA" => Ok(PacketKind::Data),
            "ACK" => Ok(PacketKind::Ack),
            other => Err(perr(format!("unknown frame type '{other}'"))),
        }
    }
}

fn parse_mode(s: &str) -> Result<Mode> {
    if s == "opp" {
        return Ok(Mode::Opportunistic);
    }
    s.strip_prefix("uni:")
        .and_then(|n| n.parse::<u16>().ok())
        .map(|n| Mode::Unicast(NodeId(n)))
        .ok_or_else(|| perr(format!("bad mode '{s}'")))
}

fn parse_reason(s: &str) -> Result<ModeReason> {
    use ModeReason::*;
    [
        FirstPacket,
        Untrusted,
        RouteFailed,
        NoEligibleUnicast,
        TrustedNeighbor,
    ]
    .into_iter()
    .find(|r| r.name() == s)
    .ok_or_else(|| perr(format!("bad mode reason '{s}'")))
}

impl FromStr for TraceRecord {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace();
        let t = SimTime::from_micros(
            parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| perr("missing time"))?,
        );
        let node = NodeId(
            parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| perr("missing node"))?,
        );
        let kind = parts.next().ok_or_else(|| perr("missing kind"))?;
        let mut map = BTreeMap::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| perr(format!("bad field '{p}'")))?;
            map.insert(k, v);
        }
        let fl = Fields { map };
        Ok(match kind {
            "gen" => TraceRecord::Gen {
                t,
                node,
                pid: fl.get("pid")?,
            },
            "deliver" => TraceRecord::Deliver {
                t,
                node,
                key: fl.key()?,
                from: fl.node("from")?,
            },
            "tx" => TraceRecord::Tx {
                t,
                node,
                frame: fl.get("frame")?,
                kind: fl.kind()?,
                dst: match fl.raw("dst")? {
                    "*" => Address::Broadcast,
                    _ => Address::Node(fl.node("dst")?),
                },
                cl: fl.get("cl")?,
                key: fl.opt_key()?,
                seq: fl.opt("seq")?,
                trig: fl.opt_node("trig")?,
                retry: fl.get("retry")?,
            },
            "dhd" => TraceRecord::Dhd {
                t,
                node,
                key: fl.key()?,
                frame: fl.get("frame")?,
                prio: fl.get("prio")?,
                fire: SimTime::from_micros(fl.get("fire")?),
            },
            "cancel" => TraceRecord::Cancel {
                t,
                node,
                key: fl.key()?,
                by: fl.node("by")?,
            },
            "mode" => TraceRecord::Mode {
                t,
                node,
                key: fl.key()?,
                mode: parse_mode(fl.raw("mode")?)?,
                reason: parse_reason(fl.raw("reason")?)?,
                trust: fl.opt("trust")?,
            },
            "trust" => TraceRecord::Trust {
                t,
                node,
                nbr: fl.node("nbr")?,
                old: fl.opt("old")?,
                new: fl.get("new")?,
            },
            "route_fail" => TraceRecord::RouteFail {
                t,
                node,
                nbr: fl.node("nbr")?,
            },
            "drop" => TraceRecord::Drop {
                t,
                node,
                key: fl.opt_key()?,
                reason: fl
                    .raw("reason")?
                    .parse()
                    .map_err(|e: Error| perr(e.to_string()))?,
            },
            "caf" => TraceRecord::Caf {
                t,
                node,
                kind: fl.kind()?,
                key: fl.opt_key()?,
            },
            "cid_rx" => TraceRecord::CidRx {
                t,
                node,
                seq: fl.get("seq")?,
                from: fl.node("from")?,
                cl: fl.get("cl")?,
            },
            "energy" => TraceRecord::Energy {
                t,
                node,
                initial: fl.get("initial")?,
                remaining: fl.get("remaining")?,
                per_state: [
                    fl.get("tx")?,
                    fl.get("rx")?,
                    fl.get("idle")?,
                    fl.get("sleep")?,
                ],
            },
            other => return Err(perr(format!("unknown record kind '{other}'"))),
        })
    }
}

/// Parses a whole trace, skipping blank lines and `#` comments.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rec = line.parse::<TraceRecord>().map_err(|e| match e {
            Error::TraceParse { msg, .. } => Error::TraceParse { line: i + 1, msg },
            other => other,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn render_trace(records: &[TraceRecord]) -> String {
    let mut s = String::with_capacity(records.len() * 48);
    for r in records {
        use std::fmt::Write;
        writeln!(s, "{r}").expect("writing to a String cannot fail");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> PacketKey {
        PacketKey {
            source: NodeId(7),
            packet_id: 12,
        }
    }

    fn samples() -> Vec<TraceRecord> {
        let t = SimTime::from_micros(2_000_123);
        let node = NodeId(4);
        vec![
            TraceRecord::Gen { t, node, pid: 1 },
            TraceRecord::Deliver {
                t,
                node,
                key: key(),
                from: NodeId(3),
            },
            TraceRecord::Tx {
                t,
                node,
                frame: 99,
                kind: PacketKind::Data,
                dst: Address::Broadcast,
                cl: 3,
                key: Some(key()),
                seq: None,
                trig: Some(NodeId(8)),
                retry: 0,
            },
            TraceRecord::Tx {
                t,
                node,
                frame: 1,
                kind: PacketKind::Cid,
                dst: Address::Broadcast,
                cl: 2,
                key: None,
                seq: Some(1),
                trig: None,
                retry: 0,
            },
            TraceRecord::Tx {
                t,
                node,
                frame: 5,
                kind: PacketKind::Ack,
                dst: Address::Node(NodeId(2)),
                cl: 1,
                key: None,
                seq: None,
                trig: None,
                retry: 0,
            },
            TraceRecord::Dhd {
                t,
                node,
                key: key(),
                frame: 99,
                prio: 3,
                fire: SimTime::from_micros(2_012_000),
            },
            TraceRecord::Cancel {
                t,
                node,
                key: key(),
                by: NodeId(1),
            },
            TraceRecord::Mode {
                t,
                node,
                key: key(),
                mode: Mode::Unicast(NodeId(3)),
                reason: ModeReason::TrustedNeighbor,
                trust: Some(0.55),
            },
            TraceRecord::Mode {
                t,
                node,
                key: key(),
                mode: Mode::Opportunistic,
                reason: ModeReason::FirstPacket,
                trust: None,
            },
            TraceRecord::Trust {
                t,
                node,
                nbr: NodeId(3),
                old: Some(0.1 + 0.2),
                new: 0.5,
            },
            TraceRecord::Trust {
                t,
                node,
                nbr: NodeId(3),
                old: None,
                new: 0.5,
            },
            TraceRecord::RouteFail {
                t,
                node,
                nbr: NodeId(3),
            },
            TraceRecord::Drop {
                t,
                node,
                key: Some(key()),
                reason: DropReason::NoPassiveAck,
            },
            TraceRecord::Caf {
                t,
                node,
                kind: PacketKind::Cid,
                key: None,
            },
            TraceRecord::CidRx {
                t,
                node,
                seq: 1,
                from: NodeId(0),
                cl: 2,
            },
            TraceRecord::Energy {
                t,
                node,
                initial: 10,
                remaining: 4,
                per_state: [1, 2, 3, 0],
            },
        ]
    }

    #[test]
    fn every_record_round_trips() {
        for r in samples() {
            let line = r.to_string();
            assert_eq!(line.parse::<TraceRecord>().unwrap(), r, "{line}");
        }
    }

    #[test]
    fn whole_trace_round_trips_with_line_numbers() {
        let recs = samples();
        let text = render_trace(&recs);
        assert_eq!(parse_trace(&text).unwrap(), recs);
        let bad = format!("{text}12 3 bogus\n");
        match parse_trace(&bad) {
            Err(Error::TraceParse { line, .. }) => assert_eq!(line, recs.len() + 1),
            other => panic!("{other:?}"),
        }
    }
}
