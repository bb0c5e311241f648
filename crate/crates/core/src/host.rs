//! Host-side HID stack and monitor logic: enumeration over control
//! transfers, VID/PID matching, report decoding, and the temperature display
//! fold.
//!
//! The monitor mirrors a passive readout: a status line ("Connected to
//! HID...", then "USB Plugged....." / "USB Unplugged....") and one line per
//! reading with the 4-character report text and a 0–500 progress bar. State
//! updates are a pure fold over [`HostEvent`]s, so the display is replayable
//! from an event list alone.

use thiserror::Error;

use crate::bus::{BusError, ControlPort, SetupRequest};
use crate::descriptors::{
    self, decode_langid_descriptor, decode_string_descriptor, parse_configuration_tree,
    parse_report_descriptor, DeviceDescriptor, DT_CONFIGURATION, DT_DEVICE, DT_STRING,
};

/// The VID the monitor binds to (4660).
pub const TARGET_VID: u16 = descriptors::VENDOR_ID;
/// The PID the monitor binds to.
pub const TARGET_PID: u16 = descriptors::PRODUCT_ID;

/// Status text shown before any device event arrives.
pub const STATUS_STARTUP: &str = "Connected to HID...";
/// Status text after a matching device attaches.
pub const STATUS_PLUGGED: &str = "USB Plugged.....";
/// Status text after the matching device detaches.
pub const STATUS_UNPLUGGED: &str = "USB Unplugged....";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HostError {
    #[error("enumeration step {step} failed: {source}")]
    EnumerationStep {
        step: &'static str,
        #[source]
        source: BusError,
    },
    #[error("enumeration step {step} returned a malformed descriptor: {detail}")]
    BadDescriptor { step: &'static str, detail: String },
    #[error("device answered with language IDs {got:?}, expected 0x0409 to be offered")]
    MissingLangId { got: Vec<u16> },
    #[error("read payload is {0} byte(s), need at least 5 (report ID + 4 data)")]
    ShortPayload(usize),
    #[error("nonzero report ID {0} (the report descriptor declares none)")]
    NonZeroReportId(u8),
    #[error("enumeration finished without step {0}")]
    IncompleteEnumeration(&'static str),
}

/// What the host learned about the attached device during enumeration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceInfo {
    pub handle: u32,
    pub vid: u16,
    pub pid: u16,
    pub manufacturer: String,
    pub product: String,
    /// From the report descriptor summary.
    pub input_report_length: u8,
    pub output_report_length: u8,
}

/// Host-visible notification kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HostEventKind {
    Plugged,
    Unplugged,
    Changed,
    Read,
}

/// One notification delivered to the monitor. `vid`/`pid` are the values the
/// host stack looked up for `handle`, so the fold can guard on them without
/// reaching back into the bus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostEvent {
    pub kind: HostEventKind,
    pub handle: u32,
    pub vid: u16,
    pub pid: u16,
    /// Read events only: report-ID byte followed by the report data.
    pub payload: Vec<u8>,
    pub time_us: u64,
}

/// One decoded reading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reading {
    pub time_us: u64,
    /// The raw 4-character report text, trailing spaces intact.
    pub text: String,
    /// Integer value when the text parses after trimming spaces.
    pub value: Option<i64>,
}

/// The monitor's display: current status, last reading, full history, and
/// the chronological console transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisplayState {
    pub status_line: String,
    pub temperature_text: String,
    pub temperature_int: Option<i64>,
    pub history: Vec<Reading>,
    /// True once a Changed notification armed read delivery.
    pub read_notify_armed: bool,
    /// Every status change and reading, in arrival order — what a scrolling
    /// terminal would have shown.
    pub console: Vec<String>,
}

impl DisplayState {
    pub fn new() -> DisplayState {
        DisplayState {
            status_line: STATUS_STARTUP.to_string(),
            temperature_text: String::new(),
            temperature_int: None,
            history: Vec::new(),
            read_notify_armed: false,
            console: vec![STATUS_STARTUP.to_string()],
        }
    }
}

impl Default for DisplayState {
    fn default() -> Self {
        DisplayState::new()
    }
}

/// Decode a Read payload: requires the report-ID byte (always 0 here) plus
/// four data bytes. Returns the 4-character text and its trimmed integer
/// parse, when there is one.
pub fn decode_report(payload: &[u8]) -> Result<(String, Option<i64>), HostError> {
    if payload.len() < 5 {
        return Err(HostError::ShortPayload(payload.len()));
    }
    if payload[0] != 0 {
        return Err(HostError::NonZeroReportId(payload[0]));
    }
    let text = String::from_utf8_lossy(&payload[1..5]).into_owned();
    let value = text.trim().parse::<i64>().ok();
    Ok((text, value))
}

fn reading_line(r: &Reading) -> String {
    match r.value {
        Some(v) => format!(
            "T={} {} C  [bar: {}/500]",
            r.time_us,
            r.text,
            v.clamp(0, 500)
        ),
        None => format!("T={} {} C", r.time_us, r.text),
    }
}

/// Fold one event into the display. Events whose VID/PID do not match the
/// monitor's target leave the state untouched; malformed Read payloads are
/// dropped (a real readout would simply show nothing).
pub fn on_event(event: &HostEvent, mut state: DisplayState) -> DisplayState {
    if event.vid != TARGET_VID || event.pid != TARGET_PID {
        return state;
    }
    match event.kind {
        HostEventKind::Plugged => {
            state.status_line = STATUS_PLUGGED.to_string();
            state.console.push(STATUS_PLUGGED.to_string());
        }
        HostEventKind::Unplugged => {
            state.status_line = STATUS_UNPLUGGED.to_string();
            state.console.push(STATUS_UNPLUGGED.to_string());
        }
        HostEventKind::Changed => {
            state.read_notify_armed = true;
        }
        HostEventKind::Read => {
            if let Ok((text, value)) = decode_report(&event.payload) {
                let reading = Reading {
                    time_us: event.time_us,
                    text: text.clone(),
                    value,
                };
                state.console.push(reading_line(&reading));
                state.temperature_text = text;
                state.temperature_int = value;
                state.history.push(reading);
            }
        }
    }
    state
}

/// Snapshot rendering: one line per reading, then the current status line.
pub fn render_status(state: &DisplayState) -> Vec<String> {
    let mut lines: Vec<String> = state.history.iter().map(reading_line).collect();
    lines.push(state.status_line.clone());
    lines
}

/// CSV export of the reading history: header `time_us,text,value`, the value
/// column empty for unparseable text.
pub fn export_csv(history: &[Reading]) -> String {
    let mut out = String::from("time_us,text,value\n");
    for r in history {
        let value = r.value.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{}\n", r.time_us, r.text, value));
    }
    out
}

/// Step-by-step enumeration driver. Steps are split out (rather than one
/// blocking call) so the bus scheduler can spend simulated time on each
/// control transfer; [`enumerate`] runs them back to back for direct use.
#[derive(Debug, Clone)]
pub struct Enumerator {
    device: Option<DeviceDescriptor>,
    report_desc_len: Option<u16>,
    input_len: Option<u8>,
    output_len: Option<u8>,
    manufacturer: Option<String>,
    product: Option<String>,
}

/// Number of control-transfer steps enumeration performs.
pub const ENUMERATION_STEPS: usize = 8;

impl Enumerator {
    pub fn new() -> Enumerator {
        Enumerator {
            device: None,
            report_desc_len: None,
            input_len: None,
            output_len: None,
            manufacturer: None,
            product: None,
        }
    }

    /// Run step `k` (0-based) against the bus. Steps assume their
    /// predecessors ran; the device descriptor fetch is first so later string
    /// fetches know the descriptor indices.
    pub fn perform_step(&mut self, k: usize, port: &mut dyn ControlPort) -> Result<(), HostError> {
        let transfer = |port: &mut dyn ControlPort,
                        step: &'static str,
                        req: SetupRequest|
         -> Result<Vec<u8>, HostError> {
            port.control_transfer(req)
                .map_err(|source| HostError::EnumerationStep { step, source })
        };
        match k {
            0 => {
                let step = "GET_DESCRIPTOR(device)";
                let data = transfer(port, step, SetupRequest::get_descriptor(DT_DEVICE, 0, 18))?;
                let desc =
                    DeviceDescriptor::parse(&data).map_err(|e| HostError::BadDescriptor {
                        step,
                        detail: e.to_string(),
                    })?;
                self.device = Some(desc);
            }
            1 => {
                transfer(port, "SET_ADDRESS", SetupRequest::set_address(1))?;
            }
            2 => {
                let step = "GET_DESCRIPTOR(configuration)";
                let data = transfer(
                    port,
                    step,
                    SetupRequest::get_descriptor(DT_CONFIGURATION, 0, 255),
                )?;
                let tree =
                    parse_configuration_tree(&data).map_err(|e| HostError::BadDescriptor {
                        step,
                        detail: e.to_string(),
                    })?;
                self.report_desc_len = Some(tree.hid.descriptor_length);
            }
            3 => {
                transfer(
                    port,
                    "SET_CONFIGURATION",
                    SetupRequest::set_configuration(1),
                )?;
            }
            4 => {
                let step = "GET_DESCRIPTOR(report)";
                let len = self
                    .report_desc_len
                    .ok_or(HostError::IncompleteEnumeration(
                        "GET_DESCRIPTOR(configuration)",
                    ))?;
                let data = transfer(port, step, SetupRequest::get_report_descriptor(0, len))?;
                let report =
                    parse_report_descriptor(&data).map_err(|e| HostError::BadDescriptor {
                        step,
                        detail: e.to_string(),
                    })?;
                let summary = report.summary();
                self.input_len = Some(summary.input_bytes.min(255) as u8);
                self.output_len = Some(summary.output_bytes.min(255) as u8);
            }
            5 => {
                let step = "GET_DESCRIPTOR(string langids)";
                let data = transfer(port, step, SetupRequest::get_descriptor(DT_STRING, 0, 255))?;
                let ids =
                    decode_langid_descriptor(&data).map_err(|e| HostError::BadDescriptor {
                        step,
                        detail: e.to_string(),
                    })?;
                if !ids.contains(&0x0409) {
                    return Err(HostError::MissingLangId { got: ids });
                }
            }
            6 => {
                self.manufacturer = Some(self.fetch_string(
                    port,
                    "GET_DESCRIPTOR(string manufacturer)",
                    self.device_ref()?.i_manufacturer,
                )?);
            }
            7 => {
                self.product = Some(self.fetch_string(
                    port,
                    "GET_DESCRIPTOR(string product)",
                    self.device_ref()?.i_product,
                )?);
            }
            _ => {}
        }
        Ok(())
    }

    fn device_ref(&self) -> Result<&DeviceDescriptor, HostError> {
        self.device
            .as_ref()
            .ok_or(HostError::IncompleteEnumeration("GET_DESCRIPTOR(device)"))
    }

    fn fetch_string(
        &self,
        port: &mut dyn ControlPort,
        step: &'static str,
        index: u8,
    ) -> Result<String, HostError> {
        if index == 0 {
            // No descriptor assigned for this string.
            return Ok(String::new());
        }
        let data = port
            .control_transfer(SetupRequest::get_descriptor(DT_STRING, index, 255))
            .map_err(|source| HostError::EnumerationStep { step, source })?;
        decode_string_descriptor(&data).map_err(|e| HostError::BadDescriptor {
            step,
            detail: e.to_string(),
        })
    }

    /// Assemble the [`DeviceInfo`] once all steps have run.
    pub fn finish(self, handle: u32) -> Result<DeviceInfo, HostError> {
        let device = self
            .device
            .ok_or(HostError::IncompleteEnumeration("GET_DESCRIPTOR(device)"))?;
        Ok(DeviceInfo {
            handle,
            vid: device.vid,
            pid: device.pid,
            manufacturer: self.manufacturer.ok_or(HostError::IncompleteEnumeration(
                "GET_DESCRIPTOR(string manufacturer)",
            ))?,
            product: self.product.ok_or(HostError::IncompleteEnumeration(
                "GET_DESCRIPTOR(string product)",
            ))?,
            input_report_length: self
                .input_len
                .ok_or(HostError::IncompleteEnumeration("GET_DESCRIPTOR(report)"))?,
            output_report_length: self
                .output_len
                .ok_or(HostError::IncompleteEnumeration("GET_DESCRIPTOR(report)"))?,
        })
    }
}

impl Default for Enumerator {
    fn default() -> Self {
        Enumerator::new()
    }
}

/// Enumerate in one call: all eight control transfers back to back.
pub fn enumerate(port: &mut dyn ControlPort, handle: u32) -> Result<DeviceInfo, HostError> {
    let mut e = Enumerator::new();
    for k in 0..ENUMERATION_STEPS {
        e.perform_step(k, port)?;
    }
    e.finish(handle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(kind: HostEventKind) -> HostEvent {
        HostEvent {
            kind,
            handle: 1,
            vid: TARGET_VID,
            pid: TARGET_PID,
            payload: vec![],
            time_us: 0,
        }
    }

    #[test]
    fn decode_report_examples() {
        assert_eq!(
            decode_report(&[0, b'2', b'5', b'0', b' ']).unwrap(),
            ("250 ".to_string(), Some(250))
        );
        assert_eq!(
            decode_report(&[0, b'0', b' ', b' ', b' ']).unwrap(),
            ("0   ".to_string(), Some(0))
        );
        assert_eq!(
            decode_report(&[0, b'x', b'y', b'z', b'w']).unwrap(),
            ("xyzw".to_string(), None)
        );
        assert_eq!(decode_report(&[0, b'2']), Err(HostError::ShortPayload(2)));
        assert_eq!(
            decode_report(&[7, b'2', b'5', b'0', b' ']),
            Err(HostError::NonZeroReportId(7))
        );
    }

    #[test]
    fn status_line_transitions() {
        let state = DisplayState::new();
        assert_eq!(state.status_line, STATUS_STARTUP);

        let state = on_event(&event(HostEventKind::Plugged), state);
        assert_eq!(state.status_line, STATUS_PLUGGED);

        let state = on_event(&event(HostEventKind::Unplugged), state);
        assert_eq!(state.status_line, STATUS_UNPLUGGED);
        assert_eq!(
            state.console,
            vec![STATUS_STARTUP, STATUS_PLUGGED, STATUS_UNPLUGGED]
        );
    }

    #[test]
    fn vid_mismatch_leaves_state_unchanged() {
        let state = DisplayState::new();
        let mut e = event(HostEventKind::Plugged);
        e.vid = 9999;
        let state2 = on_event(&e, state.clone());
        assert_eq!(state2, state);
    }

    #[test]
    fn read_event_updates_display_and_history() {
        let mut e = event(HostEventKind::Read);
        e.payload = vec![0, b'2', b'5', b'0', b' '];
        e.time_us = 2_008_000;
        let state = on_event(&e, DisplayState::new());
        assert_eq!(state.temperature_text, "250 ");
        assert_eq!(state.temperature_int, Some(250));
        assert_eq!(state.history.len(), 1);
        let line = state.console.last().unwrap();
        assert!(line.contains("250"));
        assert!(line.contains("bar: 250/500"));
    }

    #[test]
    fn malformed_read_is_dropped() {
        let mut e = event(HostEventKind::Read);
        e.payload = vec![9, 9];
        let before = DisplayState::new();
        let after = on_event(&e, before.clone());
        assert_eq!(after, before);
    }

    #[test]
    fn render_status_orders_lines() {
        let mut state = DisplayState::new();
        state.history.push(Reading {
            time_us: 2_008_000,
            text: "250 ".to_string(),
            value: Some(250),
        });
        state.history.push(Reading {
            time_us: 3_008_000,
            text: "xyzw".to_string(),
            value: None,
        });
        state.status_line = STATUS_PLUGGED.to_string();
        let lines = render_status(&state);
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains("bar: 250/500"));
        assert!(!lines[1].contains("bar:"), "no bar without a value");
        assert_eq!(lines[2], STATUS_PLUGGED);

        // Bar clamps into 0..=500.
        let big = reading_line(&Reading {
            time_us: 0,
            text: "9999".to_string(),
            value: Some(9999),
        });
        assert!(big.contains("bar: 500/500"));
    }

    #[test]
    fn csv_export_shape() {
        let history = vec![
            Reading {
                time_us: 2_008_000,
                text: "250 ".to_string(),
                value: Some(250),
            },
            Reading {
                time_us: 3_008_000,
                text: "xyzw".to_string(),
                value: None,
            },
        ];
        assert_eq!(
            export_csv(&history),
            "time_us,text,value\n2008000,250 ,250\n3008000,xyzw,\n"
        );
    }
}
