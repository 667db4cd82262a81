//! Byte-exact log of everything that crosses the connection.

use super::Tag;
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Sent => "sent",
            Direction::Received => "received",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub tag: Tag,
    /// Full frame size: 8-byte length prefix + tag byte + payload.
    pub bytes: u64,
    pub millis: u64,
}

/// Ordered log of framed messages; entry byte counts sum to the exact number
/// of bytes moved through the socket.
#[derive(Clone, Debug, Default)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn record(&mut self, direction: Direction, tag: Tag, bytes: u64, millis: u64) {
        self.entries.push(TranscriptEntry {
            direction,
            tag,
            bytes,
            millis,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_sent(&self) -> u64 {
        self.sent_in(0..self.entries.len())
    }

    pub fn total_received(&self) -> u64 {
        self.received_in(0..self.entries.len())
    }

    pub fn sent_in(&self, range: std::ops::Range<usize>) -> u64 {
        self.entries[range]
            .iter()
            .filter(|e| e.direction == Direction::Sent)
            .map(|e| e.bytes)
            .sum()
    }

    pub fn received_in(&self, range: std::ops::Range<usize>) -> u64 {
        self.entries[range]
            .iter()
            .filter(|e| e.direction == Direction::Received)
            .map(|e| e.bytes)
            .sum()
    }

    /// Export as `direction,tag,bytes,millis` CSV.
    pub fn to_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "direction,tag,bytes,millis")?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{},{}",
                e.direction.name(),
                e.tag.name(),
                e.bytes,
                e.millis
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_split_by_direction() {
        let mut t = Transcript::default();
        t.record(Direction::Sent, Tag::ActPlain, 100, 1);
        t.record(Direction::Received, Tag::OutPlain, 40, 2);
        t.record(Direction::Sent, Tag::GradOut, 60, 3);
        assert_eq!(t.total_sent(), 160);
        assert_eq!(t.total_received(), 40);
        assert_eq!(t.sent_in(1..3), 60);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut t = Transcript::default();
        t.record(Direction::Sent, Tag::Bye, 9, 10);
        let mut buf = Vec::new();
        t.to_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "direction,tag,bytes,millis\nsent,BYE,9,10\n");
    }
}
