//! JSONL event trace: one line per processed event, interleaved with the
//! radio audit records that event produced.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::radio::RadioRecord;
use crate::world::NodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub seq: u64,
    pub action: String,
    pub nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceLine {
    Event(EventRecord),
    Radio(RadioRecord),
}

/// In-memory JSONL buffer.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    buf: Vec<u8>,
    lines: usize,
}

impl Trace {
    pub fn push(&mut self, line: &TraceLine) {
        serde_json::to_writer(&mut self.buf, line).expect("trace line serializes");
        self.buf.push(b'\n');
        self.lines += 1;
    }

    pub fn bytes(&self) -> &[u8] {
        &self.buf
    }

    pub fn len(&self) -> usize {
        self.lines
    }

    pub fn is_empty(&self) -> bool {
        self.lines == 0
    }
}

pub fn parse(text: &str) -> Result<Vec<TraceLine>, serde_json::Error> {
    text.lines().filter(|l| !l.is_empty()).map(serde_json::from_str).collect()
}

/// Half-duplex violations found in a radio audit: a node receiving while it
/// transmits, receiving on two channels at once, hearing or sending while
/// retuning, or a retune that did not take `switch_latency`.
pub fn audit_half_duplex(records: &[RadioRecord], switch_latency: f64) -> Vec<String> {
    #[derive(Default)]
    struct Activity {
        tx: Vec<(f64, f64, u8)>,
        rx: Vec<(f64, f64, u8)>,
        switching: Vec<(f64, f64)>,
    }
    let mut nodes: BTreeMap<NodeId, Activity> = BTreeMap::new();
    let mut out = Vec::new();
    for r in records {
        match *r {
            RadioRecord::Tx {
                src,
                channel,
                start,
                end,
                ..
            } => nodes.entry(src).or_default().tx.push((start, end, channel)),
            RadioRecord::Rx {
                node,
                channel,
                start,
                end,
                ..
            } => nodes.entry(node).or_default().rx.push((start, end, channel)),
            RadioRecord::Switch {
                node, t, ready, latency, ..
            } => {
                if latency != switch_latency || ((ready - t) - switch_latency).abs() > 1e-9 {
                    out.push(format!("{node}: switch at {t} took {} s", ready - t));
                }
                nodes.entry(node).or_default().switching.push((t, ready));
            }
        }
    }
    let overlap = |a: (f64, f64), b: (f64, f64)| a.0 < b.1 && b.0 < a.1;
    for (node, act) in &nodes {
        for &(s, e, _) in &act.tx {
            for &(rs, re, _) in &act.rx {
                if overlap((s, e), (rs, re)) {
                    out.push(format!("{node}: transmits [{s}, {e}) while receiving [{rs}, {re})"));
                }
            }
            for &(ws, we) in &act.switching {
                if overlap((s, e), (ws, we)) {
                    out.push(format!("{node}: transmits [{s}, {e}) while retuning [{ws}, {we})"));
                }
            }
        }
        for (i, &(s, e, c)) in act.rx.iter().enumerate() {
            for &(s2, e2, c2) in &act.rx[i + 1..] {
                if c != c2 && overlap((s, e), (s2, e2)) {
                    out.push(format!("{node}: receives on channels {c} and {c2} at once"));
                }
            }
            for &(ws, we) in &act.switching {
                if overlap((s, e), (ws, we)) {
                    out.push(format!("{node}: receives [{s}, {e}) while retuning [{ws}, {we})"));
                }
            }
        }
        for (i, &(s, e, c)) in act.tx.iter().enumerate() {
            for &(s2, e2, c2) in &act.tx[i + 1..] {
                if overlap((s, e), (s2, e2)) {
                    out.push(format!("{node}: two frames at once on channels {c} and {c2}"));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::SensorId;

    fn n(i: u32) -> NodeId {
        NodeId::Sensor(SensorId(i))
    }

    #[test]
    fn clean_audit() {
        let recs = vec![
            RadioRecord::Switch {
                node: n(0),
                from: 6,
                to: 1,
                t: 0.0,
                ready: 224e-6,
                latency: 224e-6,
            },
            RadioRecord::Tx {
                src: n(0),
                dest: None,
                channel: 1,
                start: 224e-6,
                end: 0.01,
                bits: 10,
            },
            RadioRecord::Rx {
                node: n(0),
                src: n(1),
                channel: 1,
                start: 0.01,
                end: 0.02,
            },
        ];
        assert!(audit_half_duplex(&recs, 224e-6).is_empty());
    }

    #[test]
    fn overlapping_tx_rx_flagged() {
        let recs = vec![
            RadioRecord::Tx {
                src: n(0),
                dest: None,
                channel: 6,
                start: 0.0,
                end: 0.01,
                bits: 10,
            },
            RadioRecord::Rx {
                node: n(0),
                src: n(1),
                channel: 6,
                start: 0.005,
                end: 0.02,
            },
        ];
        assert_eq!(audit_half_duplex(&recs, 224e-6).len(), 1);
    }

    #[test]
    fn lines_round_trip() {
        let mut t = Trace::default();
        t.push(&TraceLine::Event(EventRecord {
            t: 1.5,
            seq: 3,
            action: "generate".into(),
            nodes: vec![n(2)],
        }));
        t.push(&TraceLine::Radio(RadioRecord::Switch {
            node: n(2),
            from: 6,
            to: 1,
            t: 1.5,
            ready: 1.500224,
            latency: 224e-6,
        }));
        let back = parse(std::str::from_utf8(t.bytes()).unwrap()).unwrap();
        assert_eq!(back.len(), 2);
        assert!(matches!(back[1], TraceLine::Radio(RadioRecord::Switch { .. })));
    }
}
