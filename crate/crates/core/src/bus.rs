//! Discrete-event USB bus: one virtual device, one virtual host, a
//! microsecond clock, and a keep-alive watchdog.
//!
//! The scheduler dispatches events in (time, insertion order), so identically
//! configured runs replay identically. Four event chains drive a simulation:
//! the device's Timer0 keep-alive (every 832 µs with stock registers), the
//! firmware main loop (first sample 2 s after attach, then every second),
//! the eight enumeration control transfers (one per 1 ms frame after
//! attach), and the host's interrupt-IN poll (every `host_poll_ms`, starting
//! one interval after enumeration completes).
//!
//! Fidelity is transaction-level: setup/data/NAK records, no token or
//! handshake sub-packets. The watchdog models the firmware's obligation to
//! service the USB stack: when no service arrives within one poll interval,
//! the device goes unresponsive and NAKs every poll until a service arrives.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::descriptors::{
    build_descriptor_set, DescriptorSet, DT_CONFIGURATION, DT_DEVICE, DT_REPORT, DT_STRING,
};
use crate::firmware::{Device, SensorSignal, REPORT_PERIOD_US, STARTUP_DELAY_US};
use crate::host::{self, DeviceInfo, DisplayState, HostError, HostEvent, HostEventKind};
use crate::registers::RegisterFile;
use crate::tracer::{BusPacket, PacketKind, TraceLog};

/// Standard request codes used during enumeration.
pub const REQ_SET_ADDRESS: u8 = 5;
pub const REQ_GET_DESCRIPTOR: u8 = 6;
pub const REQ_SET_CONFIGURATION: u8 = 9;

/// Simulated cost of one enumeration control transfer (one full-speed frame).
pub const ENUM_STEP_US: u64 = 1_000;

/// Default host poll interval in milliseconds.
pub const DEFAULT_HOST_POLL_MS: u64 = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BusError {
    #[error("a device is already attached")]
    AlreadyAttached,
    #[error("no device attached")]
    NotAttached,
    #[error("device not configured (SET_CONFIGURATION has not run)")]
    NotConfigured,
    #[error("endpoint {0} is not the interrupt-IN endpoint")]
    BadEndpoint(u8),
    #[error("control request stalled: {request}")]
    Stall { request: String },
}

/// The standard 8-byte setup packet, little-endian words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SetupRequest {
    pub bm_request_type: u8,
    pub b_request: u8,
    pub w_value: u16,
    pub w_index: u16,
    pub w_length: u16,
}

impl SetupRequest {
    pub fn to_bytes(&self) -> [u8; 8] {
        let mut b = [0u8; 8];
        b[0] = self.bm_request_type;
        b[1] = self.b_request;
        b[2..4].copy_from_slice(&self.w_value.to_le_bytes());
        b[4..6].copy_from_slice(&self.w_index.to_le_bytes());
        b[6..8].copy_from_slice(&self.w_length.to_le_bytes());
        b
    }

    pub fn from_bytes(bytes: &[u8; 8]) -> SetupRequest {
        SetupRequest {
            bm_request_type: bytes[0],
            b_request: bytes[1],
            w_value: u16::from_le_bytes([bytes[2], bytes[3]]),
            w_index: u16::from_le_bytes([bytes[4], bytes[5]]),
            w_length: u16::from_le_bytes([bytes[6], bytes[7]]),
        }
    }

    /// Device-recipient GET_DESCRIPTOR.
    pub fn get_descriptor(descriptor_type: u8, index: u8, length: u16) -> SetupRequest {
        SetupRequest {
            bm_request_type: 0x80,
            b_request: REQ_GET_DESCRIPTOR,
            w_value: (descriptor_type as u16) << 8 | index as u16,
            w_index: 0,
            w_length: length,
        }
    }

    /// Interface-recipient GET_DESCRIPTOR for the HID report descriptor.
    pub fn get_report_descriptor(interface: u16, length: u16) -> SetupRequest {
        SetupRequest {
            bm_request_type: 0x81,
            b_request: REQ_GET_DESCRIPTOR,
            w_value: (DT_REPORT as u16) << 8,
            w_index: interface,
            w_length: length,
        }
    }

    pub fn set_address(address: u8) -> SetupRequest {
        SetupRequest {
            bm_request_type: 0x00,
            b_request: REQ_SET_ADDRESS,
            w_value: address as u16,
            w_index: 0,
            w_length: 0,
        }
    }

    pub fn set_configuration(value: u8) -> SetupRequest {
        SetupRequest {
            bm_request_type: 0x00,
            b_request: REQ_SET_CONFIGURATION,
            w_value: value as u16,
            w_index: 0,
            w_length: 0,
        }
    }
}

/// Something that can carry a control transfer to the device — implemented
/// by [`Simulation`], and by test doubles in the host module's tests.
pub trait ControlPort {
    fn control_transfer(&mut self, req: SetupRequest) -> Result<Vec<u8>, BusError>;
}

/// Tracks whether the device firmware is keeping the USB link serviced.
/// `observe` is called at each host poll: once `now − last_service` exceeds
/// the window, the watchdog latches tripped until the next service.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeepAliveWatchdog {
    pub window_us: u64,
    pub last_service_us: u64,
    tripped: bool,
}

impl KeepAliveWatchdog {
    pub fn new(window_us: u64) -> KeepAliveWatchdog {
        KeepAliveWatchdog {
            window_us,
            last_service_us: 0,
            tripped: false,
        }
    }

    /// A service arrived: remember the time and clear any trip.
    pub fn service(&mut self, now_us: u64) {
        self.last_service_us = now_us;
        self.tripped = false;
    }

    /// Pure check: would the watchdog consider the link dead at `now`?
    pub fn is_expired(&self, now_us: u64) -> bool {
        now_us.saturating_sub(self.last_service_us) > self.window_us
    }

    /// Check at a poll; latches the tripped state.
    pub fn observe(&mut self, now_us: u64) -> bool {
        if self.is_expired(now_us) {
            self.tripped = true;
        }
        self.tripped
    }

    pub fn tripped(&self) -> bool {
        self.tripped
    }
}

#[derive(Debug, Clone, Copy)]
enum Event {
    KeepAlive,
    FirmwareTick,
    EnumStep(usize),
    HostPoll,
}

struct Scheduled {
    time: u64,
    seq: u64,
    gen: u32,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed so the std max-heap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// One device, one host, one clock. Construct, [`attach`](Simulation::attach),
/// then [`run_until`](Simulation::run_until); inspect the trace, the host
/// display, and the device afterwards. All operations are also callable
/// directly for fine-grained tests.
pub struct Simulation {
    now: u64,
    seq: u64,
    gen: u32,
    queue: BinaryHeap<Scheduled>,
    device: Device,
    descriptors: DescriptorSet,
    attached: bool,
    watchdog: KeepAliveWatchdog,
    ever_tripped: bool,
    enumerator: Option<host::Enumerator>,
    enum_error: Option<HostError>,
    device_info: Option<DeviceInfo>,
    host_state: DisplayState,
    trace: TraceLog,
    host_poll_us: u64,
    next_handle: u32,
}

impl Simulation {
    /// Build a simulation with the given register file and sensor. The poll
    /// interval doubles as the keep-alive watchdog window — the polling rate
    /// is the tightest deadline the host can observe the device at.
    pub fn new(regs: RegisterFile, signal: SensorSignal, host_poll_ms: u64) -> Simulation {
        let host_poll_us = host_poll_ms.max(1) * 1_000;
        Simulation {
            now: 0,
            seq: 0,
            gen: 0,
            queue: BinaryHeap::new(),
            device: Device::new(regs, signal),
            descriptors: build_descriptor_set(),
            attached: false,
            watchdog: KeepAliveWatchdog::new(host_poll_us),
            ever_tripped: false,
            enumerator: None,
            enum_error: None,
            device_info: None,
            host_state: DisplayState::new(),
            trace: TraceLog::new(),
            host_poll_us,
            next_handle: 1,
        }
    }

    /// Stock configuration: default registers, the given sensor, 10 ms polls.
    pub fn with_defaults(signal: SensorSignal) -> Simulation {
        Simulation::new(
            RegisterFile::firmware_defaults(),
            signal,
            DEFAULT_HOST_POLL_MS,
        )
    }

    pub fn now_us(&self) -> u64 {
        self.now
    }

    pub fn trace(&self) -> &TraceLog {
        &self.trace
    }

    pub fn host(&self) -> &DisplayState {
        &self.host_state
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn device_info(&self) -> Option<&DeviceInfo> {
        self.device_info.as_ref()
    }

    pub fn watchdog(&self) -> &KeepAliveWatchdog {
        &self.watchdog
    }

    /// True if the watchdog tripped at any point in this run.
    pub fn watchdog_ever_tripped(&self) -> bool {
        self.ever_tripped
    }

    /// The error that aborted enumeration, if one did.
    pub fn enumeration_error(&self) -> Option<&HostError> {
        self.enum_error.as_ref()
    }

    pub fn is_attached(&self) -> bool {
        self.attached
    }

    fn record(&mut self, p: BusPacket) {
        self.trace
            .record(p)
            .expect("scheduler keeps time monotone and annotations single-line");
    }

    fn schedule(&mut self, time: u64, event: Event) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Scheduled {
            time,
            seq,
            gen: self.gen,
            event,
        });
    }

    /// Plug the device in: records the attach, starts the firmware's
    /// keep-alive and main-loop schedules, and begins enumeration.
    pub fn attach(&mut self) -> Result<(), BusError> {
        if self.attached {
            return Err(BusError::AlreadyAttached);
        }
        self.attached = true;
        self.record(BusPacket::new(self.now, PacketKind::Attach, None, vec![]));
        self.watchdog = KeepAliveWatchdog::new(self.host_poll_us);
        self.watchdog.service(self.now);
        if let Some(period) = self.device.keep_alive_period_us() {
            self.schedule(self.now + period, Event::KeepAlive);
        }
        self.schedule(self.now + STARTUP_DELAY_US, Event::FirmwareTick);
        self.enumerator = Some(host::Enumerator::new());
        self.enum_error = None;
        self.schedule(self.now + ENUM_STEP_US, Event::EnumStep(0));
        Ok(())
    }

    /// Unplug the device: pending schedules are cancelled, the host is told,
    /// and bus-assigned device state (address, configuration, queued report)
    /// is forgotten so a later attach re-enumerates.
    pub fn detach(&mut self) -> Result<(), BusError> {
        if !self.attached {
            return Err(BusError::NotAttached);
        }
        self.record(BusPacket::new(self.now, PacketKind::Detach, None, vec![]));
        self.host_dispatch(HostEventKind::Unplugged, vec![]);
        self.attached = false;
        self.gen += 1;
        self.enumerator = None;
        self.device_info = None;
        self.device.reset_bus_state();
        Ok(())
    }

    /// Halt the device firmware (main loop and keep-alive stop; the bus and
    /// host keep going, so subsequent polls show the watchdog tripping).
    pub fn device_stop(&mut self) {
        self.device.stop();
    }

    /// Issue one control transfer. The setup packet is always recorded, with
    /// the outcome in its annotation; IN data stages are recorded as EP0
    /// DATA-IN packets. Responses honor wLength.
    pub fn control_transfer(&mut self, req: SetupRequest) -> Result<Vec<u8>, BusError> {
        if !self.attached {
            return Err(BusError::NotAttached);
        }
        match self.handle_control(&req) {
            Ok((mut data, label)) => {
                self.record(
                    BusPacket::new(
                        self.now,
                        PacketKind::Setup,
                        Some(0),
                        req.to_bytes().to_vec(),
                    )
                    .with_annotation(label),
                );
                data.truncate(req.w_length as usize);
                if !data.is_empty() {
                    self.record(BusPacket::new(
                        self.now,
                        PacketKind::DataIn,
                        Some(0),
                        data.clone(),
                    ));
                }
                Ok(data)
            }
            Err(request) => {
                self.record(
                    BusPacket::new(
                        self.now,
                        PacketKind::Setup,
                        Some(0),
                        req.to_bytes().to_vec(),
                    )
                    .with_annotation(format!("stall: {request}")),
                );
                Err(BusError::Stall { request })
            }
        }
    }

    /// Decode and execute a control request; returns the response data and a
    /// human-readable label, or a description of why the request stalls.
    fn handle_control(&mut self, req: &SetupRequest) -> Result<(Vec<u8>, String), String> {
        match (req.bm_request_type, req.b_request) {
            (0x80, REQ_GET_DESCRIPTOR) => {
                let ty = (req.w_value >> 8) as u8;
                let index = (req.w_value & 0xFF) as u8;
                match ty {
                    DT_DEVICE => Ok((
                        self.descriptors.device.serialize().to_vec(),
                        "GET_DESCRIPTOR(device)".to_string(),
                    )),
                    DT_CONFIGURATION => Ok((
                        self.descriptors
                            .configuration
                            .serialize()
                            .expect("stock configuration tree serializes"),
                        "GET_DESCRIPTOR(configuration)".to_string(),
                    )),
                    DT_STRING => match self.descriptors.strings.descriptor(index) {
                        Some(Ok(bytes)) => Ok((bytes, format!("GET_DESCRIPTOR(string {index})"))),
                        Some(Err(e)) => Err(format!("string descriptor {index}: {e}")),
                        None => Err(format!("no string descriptor at index {index}")),
                    },
                    other => Err(format!("unsupported descriptor type {other:#04X}")),
                }
            }
            (0x81, REQ_GET_DESCRIPTOR) if (req.w_value >> 8) as u8 == DT_REPORT => Ok((
                self.descriptors
                    .report
                    .serialize()
                    .expect("stock report descriptor serializes"),
                "GET_DESCRIPTOR(report)".to_string(),
            )),
            (0x00, REQ_SET_ADDRESS) => {
                self.device.address = req.w_value as u8;
                Ok((vec![], format!("SET_ADDRESS({})", req.w_value)))
            }
            (0x00, REQ_SET_CONFIGURATION) => {
                self.device.configured = req.w_value != 0;
                Ok((vec![], format!("SET_CONFIGURATION({})", req.w_value)))
            }
            _ => Err(format!(
                "unsupported request bmRequestType={:#04X} bRequest={:#04X}",
                req.bm_request_type, req.b_request
            )),
        }
    }

    /// Poll the interrupt-IN endpoint once, as the host does every poll
    /// interval. Returns the report payload, or `None` for a NAK (nothing
    /// queued, or watchdog tripped). Delivered reports are forwarded to the
    /// host display when read notification is armed.
    pub fn poll_interrupt_in(&mut self, ep: u8) -> Result<Option<Vec<u8>>, BusError> {
        if !self.attached {
            return Err(BusError::NotAttached);
        }
        if ep != 1 {
            return Err(BusError::BadEndpoint(ep));
        }
        if !self.device.configured {
            return Err(BusError::NotConfigured);
        }
        let was_tripped = self.watchdog.tripped();
        if self.watchdog.observe(self.now) {
            self.ever_tripped = true;
            let mut packet = BusPacket::new(self.now, PacketKind::Nak, Some(ep), vec![]);
            if !was_tripped {
                packet = packet.with_annotation(
                    "watchdog tripped: no keep-alive service within one poll window; device unresponsive",
                );
            }
            self.record(packet);
            return Ok(None);
        }
        match self.device.take_report() {
            Some((payload, overwritten)) => {
                let mut packet =
                    BusPacket::new(self.now, PacketKind::DataIn, Some(ep), payload.to_vec());
                if overwritten > 0 {
                    packet = packet
                        .with_annotation(format!("overwrote {overwritten} undelivered report(s)"));
                }
                self.record(packet);
                if self.host_state.read_notify_armed && self.device_info.is_some() {
                    let mut host_payload = Vec::with_capacity(1 + payload.len());
                    host_payload.push(0); // report ID
                    host_payload.extend_from_slice(&payload);
                    self.host_dispatch(HostEventKind::Read, host_payload);
                }
                Ok(Some(payload.to_vec()))
            }
            None => {
                self.record(BusPacket::new(self.now, PacketKind::Nak, Some(ep), vec![]));
                Ok(None)
            }
        }
    }

    /// The firmware's keep-alive call: reset the watchdog and log a SERVICE
    /// record. No-op while detached.
    pub fn usb_service(&mut self) {
        if !self.attached {
            return;
        }
        self.watchdog.service(self.now);
        self.record(BusPacket::new(self.now, PacketKind::Service, None, vec![]));
    }

    /// Dispatch every event with `time ≤ t_end_us` in (time, insertion)
    /// order, then land the clock exactly on `t_end_us`.
    pub fn run_until(&mut self, t_end_us: u64) {
        assert!(
            t_end_us >= self.now,
            "run_until({t_end_us}) would move time backwards from {}",
            self.now
        );
        while let Some(head) = self.queue.peek() {
            if head.time > t_end_us {
                break;
            }
            let scheduled = self.queue.pop().expect("peeked entry pops");
            self.now = scheduled.time;
            if scheduled.gen != self.gen {
                continue; // cancelled by a detach
            }
            self.dispatch(scheduled.event);
        }
        self.now = t_end_us;
    }

    fn dispatch(&mut self, event: Event) {
        match event {
            Event::KeepAlive => {
                if !self.attached || self.device.stopped() {
                    return;
                }
                self.usb_service();
                if let Some(period) = self.device.keep_alive_period_us() {
                    self.schedule(self.now + period, Event::KeepAlive);
                }
            }
            Event::FirmwareTick => {
                if !self.attached || self.device.stopped() {
                    return;
                }
                self.device.sample_and_queue(self.now);
                self.schedule(self.now + REPORT_PERIOD_US, Event::FirmwareTick);
            }
            Event::EnumStep(k) => {
                if !self.attached {
                    return;
                }
                let Some(mut enumerator) = self.enumerator.take() else {
                    return;
                };
                match enumerator.perform_step(k, self) {
                    Ok(()) => {
                        if k + 1 < host::ENUMERATION_STEPS {
                            self.enumerator = Some(enumerator);
                            self.schedule(self.now + ENUM_STEP_US, Event::EnumStep(k + 1));
                        } else {
                            self.complete_enumeration(enumerator);
                        }
                    }
                    Err(e) => {
                        self.enum_error = Some(e);
                    }
                }
            }
            Event::HostPoll => {
                if !self.attached || !self.device.configured {
                    return;
                }
                let _ = self.poll_interrupt_in(1);
                self.schedule(self.now + self.host_poll_us, Event::HostPoll);
            }
        }
    }

    fn complete_enumeration(&mut self, enumerator: host::Enumerator) {
        let handle = self.next_handle;
        self.next_handle += 1;
        match enumerator.finish(handle) {
            Ok(info) => {
                self.device_info = Some(info);
                self.host_dispatch(HostEventKind::Plugged, vec![]);
                self.host_dispatch(HostEventKind::Changed, vec![]);
                self.schedule(self.now + self.host_poll_us, Event::HostPoll);
            }
            Err(e) => {
                self.enum_error = Some(e);
            }
        }
    }

    fn host_dispatch(&mut self, kind: HostEventKind, payload: Vec<u8>) {
        let (handle, vid, pid) = match &self.device_info {
            Some(info) => (info.handle, info.vid, info.pid),
            None => (0, 0, 0),
        };
        let event = HostEvent {
            kind,
            handle,
            vid,
            pid,
            payload,
            time_us: self.now,
        };
        let state = std::mem::take(&mut self.host_state);
        self.host_state = host::on_event(&event, state);
    }
}

impl ControlPort for Simulation {
    fn control_transfer(&mut self, req: SetupRequest) -> Result<Vec<u8>, BusError> {
        Simulation::control_transfer(self, req)
    }
}
