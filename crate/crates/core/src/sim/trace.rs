use serde::{Deserialize, Serialize};

use crate::channel::ReceptionBitmap;
use crate::field::CodedPacket;
use crate::protocol::{DeliveryReport, Slot};

/// One slot of a trace. Packet and receiver numbers are one-based; an idle
/// slot has an empty support.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub slot: Slot,
    /// e.g. `4+6`
    pub support: String,
    /// Hex coefficients aligned with the support, e.g. `1:1`.
    pub coefficients: String,
    /// `OK` or `E` per receiver.
    pub receptions: Vec<String>,
    /// Newly seen packet per receiver, empty if none.
    pub newly_seen: Vec<String>,
    /// Newly decoded packets per receiver, space separated.
    pub newly_decoded: Vec<String>,
    pub queue_size: usize,
    /// Receivers with the most receptions after this slot.
    pub leaders: Vec<usize>,
}

impl TraceRow {
    pub(crate) fn new(slot: Slot, sent: Option<&CodedPacket>, bitmap: &ReceptionBitmap) -> Self {
        let n = bitmap.len();
        Self {
            slot,
            support: sent.map(CodedPacket::support_label).unwrap_or_default(),
            coefficients: sent.map(CodedPacket::coefficient_label).unwrap_or_default(),
            receptions: bitmap
                .0
                .iter()
                .map(|&ok| if ok { "OK" } else { "E" }.to_string())
                .collect(),
            newly_seen: vec![String::new(); n],
            newly_decoded: vec![String::new(); n],
            queue_size: 0,
            leaders: Vec::new(),
        }
    }

    pub(crate) fn record_delivery(&mut self, receiver: usize, report: &DeliveryReport) {
        if let Some(p) = report.newly_seen {
            self.newly_seen[receiver] = (p.0 + 1).to_string();
        }
        self.newly_decoded[receiver] = report
            .decoded
            .iter()
            .map(|d| (d.packet.0 + 1).to_string())
            .collect::<Vec<_>>()
            .join(" ");
    }
}

/// CSV with one column group `rK_rx, rK_seen, rK_decoded` per receiver.
pub fn trace_csv(rows: &[TraceRow]) -> Result<String, csv::Error> {
    let n = rows.first().map_or(0, |r| r.receptions.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["slot".to_string(), "support".into(), "coefficients".into()];
    for k in 1..=n {
        header.extend([format!("r{k}_rx"), format!("r{k}_seen"), format!("r{k}_decoded")]);
    }
    header.extend(["queue_size".into(), "leaders".into()]);
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.slot.to_string(), row.support.clone(), row.coefficients.clone()];
        for k in 0..n {
            rec.extend([
                row.receptions[k].clone(),
                row.newly_seen[k].clone(),
                row.newly_decoded[k].clone(),
            ]);
        }
        rec.push(row.queue_size.to_string());
        rec.push(
            row.leaders
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        );
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PacketId;

    #[test]
    fn csv_layout() {
        let mut row = TraceRow::new(
            6,
            Some(&CodedPacket::xor([PacketId(3), PacketId(5)])),
            &"OK,OK".parse().unwrap(),
        );
        row.newly_seen[0] = "6".into();
        row.newly_decoded[1] = "2 3".into();
        row.queue_size = 2;
        row.leaders = vec![1, 2];
        let csv = trace_csv(&[row]).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "slot,support,coefficients,r1_rx,r1_seen,r1_decoded,r2_rx,r2_seen,r2_decoded,queue_size,leaders"
        );
        assert_eq!(lines.next().unwrap(), "6,4+6,1:1,OK,6,,OK,,2 3,2,1 2");
    }
}
