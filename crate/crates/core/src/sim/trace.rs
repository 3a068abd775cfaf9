use std::fmt;
use std::io;

use thiserror::Error;

use super::SimTime;

/// A traced signal value: a plain integer level/count, or a raw message payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TraceValue {
    Int(i64),
    Bytes(Vec<u8>),
}

impl fmt::Display for TraceValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceValue::Int(v) => write!(f, "{v}"),
            TraceValue::Bytes(b) => write!(f, "0x{}", hex::encode(b)),
        }
    }
}

impl From<bool> for TraceValue {
    fn from(b: bool) -> Self {
        TraceValue::Int(b as i64)
    }
}

impl From<i64> for TraceValue {
    fn from(v: i64) -> Self {
        TraceValue::Int(v)
    }
}

impl From<&[u8]> for TraceValue {
    fn from(b: &[u8]) -> Self {
        TraceValue::Bytes(b.to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub channel: String,
    pub value: TraceValue,
}

#[derive(Debug, Error)]
pub enum TraceParseError {
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("line {line}: record at {time} precedes previous record")]
    OutOfOrder { line: u64, time: SimTime },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub const CSV_HEADER: [&str; 3] = ["time_ns", "channel", "value"];

/// Append-only, time-ordered signal log shared by every module of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceRecorder {
    records: Vec<TraceRecord>,
}

impl TraceRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics if `time` precedes the last record; the engine guarantees
    /// monotone delivery so this only fires on a modeling bug.
    pub fn record(&mut self, time: SimTime, channel: impl Into<String>, value: impl Into<TraceValue>) {
        if let Some(last) = self.records.last() {
            assert!(time >= last.time, "trace record at {time} precedes {}", last.time);
        }
        self.records.push(TraceRecord {
            time,
            channel: channel.into(),
            value: value.into(),
        });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn channel<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a TraceRecord> + 'a {
        self.records.iter().filter(move |r| r.channel == name)
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            w.write_record([r.time.as_nanos().to_string(), r.channel.clone(), r.value.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace csv is ascii")
    }

    pub fn from_csv<R: io::Read>(input: R) -> Result<Self, TraceParseError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
        let mut out = TraceRecorder::new();
        let mut rows = rdr.records();
        match rows.next() {
            Some(header) => {
                let header = header?;
                if header.iter().ne(CSV_HEADER) {
                    return Err(TraceParseError::Malformed {
                        line: 1,
                        msg: "expected header time_ns,channel,value".into(),
                    });
                }
            }
            None => {
                return Err(TraceParseError::Malformed {
                    line: 1,
                    msg: "missing header".into(),
                })
            }
        }
        for row in rows {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let bad = |msg: &str| TraceParseError::Malformed {
                line,
                msg: msg.to_string(),
            };
            if row.len() != 3 {
                return Err(bad("expected 3 fields"));
            }
            let time = row[0]
                .parse::<u64>()
                .map(SimTime::from_nanos)
                .map_err(|_| bad("time_ns is not an unsigned integer"))?;
            let channel = &row[1];
            if channel.is_empty() {
                return Err(bad("empty channel name"));
            }
            let value = parse_value(&row[2]).ok_or_else(|| bad("unparseable value"))?;
            if out.records.last().is_some_and(|last| last.time > time) {
                return Err(TraceParseError::OutOfOrder { line, time });
            }
            out.records.push(TraceRecord {
                time,
                channel: channel.to_string(),
                value,
            });
        }
        Ok(out)
    }
}

fn parse_value(s: &str) -> Option<TraceValue> {
    if let Some(hex_digits) = s.strip_prefix("0x") {
        if hex_digits.is_empty() || hex_digits.bytes().any(|c| c.is_ascii_uppercase()) {
            return None;
        }
        hex::decode(hex_digits).ok().map(TraceValue::Bytes)
    } else {
        s.parse::<i64>().ok().map(TraceValue::Int)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TraceRecorder {
        let mut t = TraceRecorder::new();
        t.record(SimTime::ZERO, "pta.request", true);
        t.record(
            SimTime::from_micros(10),
            "seci.bt2wifi",
            &[0xfe, 0xdb, 0xe1, 0xdb, 0x3c][..],
        );
        t.record(SimTime::from_micros(10), "medium.collision", -2i64);
        t
    }

    #[test]
    fn csv_layout() {
        assert_eq!(
            sample().to_csv_string(),
            "time_ns,channel,value\n0,pta.request,1\n10000,seci.bt2wifi,0xfedbe1db3c\n10000,medium.collision,-2\n"
        );
    }

    #[test]
    fn csv_reads_back() {
        let t = sample();
        let back = TraceRecorder::from_csv(t.to_csv_string().as_bytes()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "",
            "t,c,v\n",
            "time_ns,channel,value\nx,a,1\n",
            "time_ns,channel,value\n5,a,0xZZ\n",
            "time_ns,channel,value\n5,a,0xAB\n",
            "time_ns,channel,value\n5,,1\n",
            "time_ns,channel,value\n5,a,1\n4,a,1\n",
        ] {
            assert!(TraceRecorder::from_csv(bad.as_bytes()).is_err(), "{bad:?}");
        }
    }

    #[test]
    #[should_panic]
    fn out_of_order_record_panics() {
        let mut t = TraceRecorder::new();
        t.record(SimTime::from_micros(2), "a", 1i64);
        t.record(SimTime::from_micros(1), "a", 1i64);
    }
}
