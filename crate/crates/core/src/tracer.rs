//! Append-only capture of bus traffic with a deterministic, lossless text
//! format.
//!
//! Rendered logs start with a `START OF LOG` header and carry one line per
//! packet:
//!
//! ```text
//! T=2008000 DATA-IN EP=1 LEN=4 DATA=32 35 30 20 ASCII=|250 |
//! ```
//!
//! The hex column is authoritative (uppercase two-digit pairs); the ASCII
//! column shows bytes 0x20–0x7E literally inside `|…|` delimiters and `.` for
//! everything else, so trailing spaces in report payloads survive the round
//! trip. An optional ` # annotation` tail carries free text. NAK and SERVICE
//! packets are recorded unconditionally but hidden by the default rendering —
//! trace files are written verbose so `parse(render(log))` is the identity.

use thiserror::Error;

/// What a packet is. `Service` marks the device-side keep-alive call — not
/// bus traffic in the strict sense, but recorded so a saved trace still
/// supports service-rate analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketKind {
    Setup,
    DataIn,
    DataOut,
    Nak,
    Attach,
    Detach,
    Service,
}

impl PacketKind {
    fn name(self) -> &'static str {
        match self {
            PacketKind::Setup => "SETUP",
            PacketKind::DataIn => "DATA-IN",
            PacketKind::DataOut => "DATA-OUT",
            PacketKind::Nak => "NAK",
            PacketKind::Attach => "ATTACH",
            PacketKind::Detach => "DETACH",
            PacketKind::Service => "SERVICE",
        }
    }

    fn from_name(s: &str) -> Option<PacketKind> {
        Some(match s {
            "SETUP" => PacketKind::Setup,
            "DATA-IN" => PacketKind::DataIn,
            "DATA-OUT" => PacketKind::DataOut,
            "NAK" => PacketKind::Nak,
            "ATTACH" => PacketKind::Attach,
            "DETACH" => PacketKind::Detach,
            "SERVICE" => PacketKind::Service,
            _ => return None,
        })
    }
}

/// One recorded bus transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusPacket {
    pub timestamp_us: u64,
    pub kind: PacketKind,
    /// `None` renders as `EP=-` (attach/detach/service have no endpoint).
    pub endpoint: Option<u8>,
    pub payload: Vec<u8>,
    /// Free-text tail; must not contain newlines (enforced on record).
    pub annotation: String,
}

impl BusPacket {
    pub fn new(
        timestamp_us: u64,
        kind: PacketKind,
        endpoint: Option<u8>,
        payload: Vec<u8>,
    ) -> BusPacket {
        BusPacket {
            timestamp_us,
            kind,
            endpoint,
            payload,
            annotation: String::new(),
        }
    }

    pub fn with_annotation(mut self, annotation: impl Into<String>) -> BusPacket {
        self.annotation = annotation.into();
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("timestamp regression: {next} us after {prev} us")]
    TimestampRegression { prev: u64, next: u64 },
    #[error("annotation contains a newline")]
    AnnotationNewline,
    #[error("missing START OF LOG header")]
    MissingHeader,
    #[error("line {line}, column {column}: {reason}")]
    Malformed {
        line: usize,
        column: usize,
        reason: String,
    },
}

/// Mean/min/max of the gaps between consecutive EP1 DATA-IN packets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapStats {
    pub mean_us: f64,
    pub min_us: u64,
    pub max_us: u64,
}

/// Aggregate statistics over one log.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub setup: usize,
    pub data_in: usize,
    pub data_out: usize,
    pub nak: usize,
    pub attach: usize,
    pub detach: usize,
    pub service: usize,
    /// DATA-IN packets on endpoint 1 only (the report stream).
    pub reports: usize,
    /// Gaps between consecutive report deliveries.
    pub report_gap: Option<GapStats>,
    /// Keep-alive services per second over the log's time span.
    pub service_rate_hz: f64,
    /// NAKs as a fraction of interrupt-endpoint polls (NAK + report count).
    pub nak_ratio: f64,
}

impl std::fmt::Display for TraceSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let total = self.setup
            + self.data_in
            + self.data_out
            + self.nak
            + self.attach
            + self.detach
            + self.service;
        writeln!(
            f,
            "packets: total={} setup={} data-in={} data-out={} nak={} attach={} detach={} service={}",
            total, self.setup, self.data_in, self.data_out, self.nak, self.attach, self.detach, self.service
        )?;
        match &self.report_gap {
            Some(g) => writeln!(
                f,
                "reports: count={} gap-mean={:.1}ms gap-min={:.1}ms gap-max={:.1}ms",
                self.reports,
                g.mean_us / 1000.0,
                g.min_us as f64 / 1000.0,
                g.max_us as f64 / 1000.0
            )?,
            None => writeln!(f, "reports: count={}", self.reports)?,
        }
        writeln!(f, "keep-alive: {:.1} services/s", self.service_rate_hz)?;
        write!(f, "nak-ratio: {:.3}", self.nak_ratio)
    }
}

const HEADER: &str = "START OF LOG";

/// The capture: an ordered, append-only packet list.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraceLog {
    packets: Vec<BusPacket>,
}

impl TraceLog {
    pub fn new() -> TraceLog {
        TraceLog::default()
    }

    /// Append a packet. Timestamps must be non-decreasing — a regression
    /// means the scheduler misbehaved, so it is reported instead of stored.
    pub fn record(&mut self, p: BusPacket) -> Result<(), TraceError> {
        if let Some(last) = self.packets.last() {
            if p.timestamp_us < last.timestamp_us {
                return Err(TraceError::TimestampRegression {
                    prev: last.timestamp_us,
                    next: p.timestamp_us,
                });
            }
        }
        if p.annotation.contains('\n') {
            return Err(TraceError::AnnotationNewline);
        }
        self.packets.push(p);
        Ok(())
    }

    pub fn packets(&self) -> &[BusPacket] {
        &self.packets
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    /// Render to text. With `verbose` false, NAK and SERVICE lines are
    /// suppressed (one highlighted packet per report beats a millisecond NAK
    /// storm); pass true when writing a trace file so nothing is lost.
    pub fn render(&self, verbose: bool) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for p in &self.packets {
            if !verbose && matches!(p.kind, PacketKind::Nak | PacketKind::Service) {
                continue;
            }
            out.push_str(&format!("T={} {}", p.timestamp_us, p.kind.name()));
            match p.endpoint {
                Some(ep) => out.push_str(&format!(" EP={ep}")),
                None => out.push_str(" EP=-"),
            }
            out.push_str(&format!(" LEN={}", p.payload.len()));
            if !p.payload.is_empty() {
                out.push_str(" DATA=");
                for (i, b) in p.payload.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    out.push_str(&format!("{b:02X}"));
                }
                out.push_str(" ASCII=|");
                for &b in &p.payload {
                    out.push(if (0x20..=0x7E).contains(&b) {
                        b as char
                    } else {
                        '.'
                    });
                }
                out.push('|');
            }
            if !p.annotation.is_empty() {
                out.push_str(" # ");
                out.push_str(&p.annotation);
            }
            out.push('\n');
        }
        out
    }

    /// Exact inverse of [`TraceLog::render`] on verbose output. Errors name
    /// the line and column of the first offending byte.
    pub fn parse(text: &str) -> Result<TraceLog, TraceError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first == HEADER => {}
            _ => return Err(TraceError::MissingHeader),
        }
        let mut log = TraceLog::new();
        for (idx, line) in lines {
            let packet = parse_line(line, idx + 1)?;
            let ts = packet.timestamp_us;
            log.record(packet).map_err(|e| match e {
                TraceError::TimestampRegression { prev, .. } => TraceError::Malformed {
                    line: idx + 1,
                    column: 1,
                    reason: format!("timestamp {ts} regresses below {prev}"),
                },
                other => other,
            })?;
        }
        Ok(log)
    }

    /// Per-kind counts, report cadence, keep-alive rate and NAK ratio.
    pub fn summarize(&self) -> TraceSummary {
        let mut s = TraceSummary {
            setup: 0,
            data_in: 0,
            data_out: 0,
            nak: 0,
            attach: 0,
            detach: 0,
            service: 0,
            reports: 0,
            report_gap: None,
            service_rate_hz: 0.0,
            nak_ratio: 0.0,
        };
        let mut report_times = Vec::new();
        for p in &self.packets {
            match p.kind {
                PacketKind::Setup => s.setup += 1,
                PacketKind::DataIn => {
                    s.data_in += 1;
                    if p.endpoint == Some(1) {
                        s.reports += 1;
                        report_times.push(p.timestamp_us);
                    }
                }
                PacketKind::DataOut => s.data_out += 1,
                PacketKind::Nak => s.nak += 1,
                PacketKind::Attach => s.attach += 1,
                PacketKind::Detach => s.detach += 1,
                PacketKind::Service => s.service += 1,
            }
        }
        if report_times.len() >= 2 {
            let gaps: Vec<u64> = report_times.windows(2).map(|w| w[1] - w[0]).collect();
            s.report_gap = Some(GapStats {
                mean_us: gaps.iter().sum::<u64>() as f64 / gaps.len() as f64,
                min_us: *gaps.iter().min().unwrap(),
                max_us: *gaps.iter().max().unwrap(),
            });
        }
        if let (Some(first), Some(last)) = (self.packets.first(), self.packets.last()) {
            let span_s = (last.timestamp_us - first.timestamp_us) as f64 / 1e6;
            if span_s > 0.0 {
                s.service_rate_hz = s.service as f64 / span_s;
            }
        }
        let polls = s.nak + s.reports;
        if polls > 0 {
            s.nak_ratio = s.nak as f64 / polls as f64;
        }
        s
    }
}

/// Cursor over one line; tracks the column for error reporting.
struct LineCursor<'a> {
    line: &'a str,
    pos: usize,
    line_no: usize,
}

impl<'a> LineCursor<'a> {
    fn err<T>(&self, reason: impl Into<String>) -> Result<T, TraceError> {
        Err(TraceError::Malformed {
            line: self.line_no,
            column: self.pos + 1,
            reason: reason.into(),
        })
    }

    fn expect(&mut self, token: &str) -> Result<(), TraceError> {
        if self.line[self.pos..].starts_with(token) {
            self.pos += token.len();
            Ok(())
        } else {
            self.err(format!("expected {token:?}"))
        }
    }

    fn take_until_space(&mut self) -> &'a str {
        let rest = &self.line[self.pos..];
        let end = rest.find(' ').unwrap_or(rest.len());
        self.pos += end;
        &rest[..end]
    }

    fn take_number(&mut self) -> Result<u64, TraceError> {
        let token = self.take_until_space();
        match token.parse::<u64>() {
            Ok(n) => Ok(n),
            Err(_) => {
                self.pos -= token.len();
                self.err(format!("expected a number, got {token:?}"))
            }
        }
    }

    fn rest(&self) -> &'a str {
        &self.line[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos == self.line.len()
    }
}

fn hex_value(c: u8) -> Option<u8> {
    match c {
        b'0'..=b'9' => Some(c - b'0'),
        b'A'..=b'F' => Some(c - b'A' + 10),
        b'a'..=b'f' => Some(c - b'a' + 10),
        _ => None,
    }
}

fn parse_line(line: &str, line_no: usize) -> Result<BusPacket, TraceError> {
    let mut cur = LineCursor {
        line,
        pos: 0,
        line_no,
    };

    cur.expect("T=")?;
    let timestamp_us = cur.take_number()?;
    cur.expect(" ")?;

    let kind_token = cur.take_until_space();
    let kind = match PacketKind::from_name(kind_token) {
        Some(k) => k,
        None => {
            cur.pos -= kind_token.len();
            return cur.err(format!("unknown packet kind {kind_token:?}"));
        }
    };

    cur.expect(" EP=")?;
    let ep_token = cur.take_until_space();
    let endpoint = if ep_token == "-" {
        None
    } else {
        match ep_token.parse::<u8>() {
            Ok(ep) => Some(ep),
            Err(_) => {
                cur.pos -= ep_token.len();
                return cur.err(format!("bad endpoint {ep_token:?}"));
            }
        }
    };

    cur.expect(" LEN=")?;
    let len = cur.take_number()? as usize;

    let mut payload = Vec::with_capacity(len);
    if len > 0 {
        cur.expect(" DATA=")?;
        let bytes = cur.line.as_bytes();
        for i in 0..len {
            if i > 0 {
                cur.expect(" ")?;
            }
            if cur.pos + 2 > bytes.len() {
                return cur.err("hex pair runs past end of line");
            }
            let hi = hex_value(bytes[cur.pos]);
            let lo = hex_value(bytes[cur.pos + 1]);
            match (hi, lo) {
                (Some(h), Some(l)) => {
                    payload.push(h << 4 | l);
                    cur.pos += 2;
                }
                (None, _) => return cur.err("bad hex digit"),
                (_, None) => {
                    cur.pos += 1;
                    return cur.err("bad hex digit");
                }
            }
        }
        cur.expect(" ASCII=|")?;
        if cur.pos + len > bytes.len() {
            return cur.err("ASCII column runs past end of line");
        }
        // The ASCII view is derived from the payload; check it matches so
        // corruption is caught even when only this column was damaged.
        for (i, &b) in payload.iter().enumerate() {
            let expected = if (0x20..=0x7E).contains(&b) { b } else { b'.' };
            if bytes[cur.pos + i] != expected {
                cur.pos += i;
                return cur.err(format!(
                    "ASCII column disagrees with DATA (expected {:?})",
                    expected as char
                ));
            }
        }
        cur.pos += len;
        cur.expect("|")?;
    }

    let annotation = if cur.at_end() {
        String::new()
    } else {
        cur.expect(" # ")?;
        cur.rest().to_string()
    };

    Ok(BusPacket {
        timestamp_us,
        kind,
        endpoint,
        payload,
        annotation,
    })
}
