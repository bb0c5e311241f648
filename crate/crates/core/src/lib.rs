//! Deterministic simulation of a USB-HID skin-temperature telemetry system.
//!
//! The simulated device is a PIC18F4550-class microcontroller that samples a
//! 0–5 V sensor on AN0 once per second, converts the 10-bit ADC code to a
//! temperature (`code × 5/1024 × 100` °C), formats it as a 4-character ASCII
//! report, and sends it over a USB HID interrupt endpoint. A Timer0 interrupt
//! services the USB stack every 0.832 ms to keep the link alive. The host side
//! enumerates the device (VID 0x1234, PID 0x0001), polls the interrupt
//! endpoint, and renders readings as a text display with a progress bar.
//!
//! Everything runs on a discrete-event clock in simulated microseconds: runs
//! are byte-for-byte reproducible given the same configuration and seed, and
//! every bus transaction is recorded in a [`tracer::TraceLog`] with a lossless
//! text format.
//!
//! Module map:
//! - [`registers`] — decode/validate the special-function register bytes
//!   (ADCON0..2, T0CON, INTCON, TRIS) that configure the virtual device.
//! - [`firmware`] — sensor waveforms, the ADC→Celsius→ASCII pipeline, Timer0
//!   arithmetic, clock derivation, and the device state machine.
//! - [`descriptors`] — byte-exact USB descriptor set, including the 47-byte
//!   HID report descriptor and its item grammar.
//! - [`bus`] — the event scheduler, control transfers, interrupt-IN polling
//!   with NAK semantics, and the keep-alive watchdog.
//! - [`host`] — enumeration, VID/PID matching, report decoding, and the
//!   temperature display state.
//! - [`tracer`] — append-only packet log with render/parse round-trip and
//!   summary statistics.

pub mod bus;
pub mod descriptors;
pub mod firmware;
pub mod host;
pub mod registers;
pub mod tracer;

pub use bus::Simulation;
pub use firmware::{AdcCode, SensorSignal};
pub use registers::RegisterFile;
pub use tracer::TraceLog;
