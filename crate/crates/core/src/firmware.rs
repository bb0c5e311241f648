//! The virtual device's firmware behavior: sensor sampling, the 10-bit
//! ADC→Celsius→ASCII pipeline, Timer0 keep-alive arithmetic, and clock
//! derivation.
//!
//! The pipeline mirrors the device program step for step: `Vin = adc read`,
//! `Voltage = Vin × 5.0/1024.0`, `Celsius = Voltage × 100.0`, `Cint = (int)
//! Celsius`, then a 12-character right-justified decimal conversion whose
//! blanks are stripped into a 4-byte report buffer. Every intermediate is
//! recorded in a [`ConversionTrace`].
//!
//! Timer0 note: the keep-alive interval is computed with a 1/f_cpu tick
//! (0.02083 µs at 48 MHz), i.e. `(256 − reload) × prescale / f_cpu`, matching
//! the firmware's own arithmetic. Real PIC18 timers tick at Fosc/4; this
//! module intentionally follows the firmware's math instead, so the stock
//! configuration yields exactly 832 µs.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::registers::{decode_intcon, decode_t0con, RegisterFile};

/// ADC reference span in volts; inputs are clamped to [0, VREF_VOLTS].
pub const VREF_VOLTS: f64 = 5.0;
/// Number of ADC quantization steps (10-bit converter).
pub const ADC_STEPS: u32 = 1024;
/// CPU clock the stock configuration derives (see [`derive_clocks`]).
pub const DEFAULT_CPU_HZ: u64 = 48_000_000;
/// Delay between main-loop reports, as coded in the firmware.
pub const REPORT_PERIOD_US: u64 = 1_000_000;
/// Two back-to-back 1 s delays run after HID enable, before the first sample.
pub const STARTUP_DELAY_US: u64 = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    /// The decimal representation (sign included) does not fit the
    /// 12-character conversion buffer.
    #[error("{value} does not fit in the 12-character conversion field")]
    FieldOverflow { value: i64 },
    /// Constructing an [`AdcCode`] outside the 10-bit range.
    #[error("ADC code {code} out of range (0-1023)")]
    CodeOutOfRange { code: u16 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClockError {
    /// The PLL prescaler output must be exactly 4 MHz.
    #[error("PLL input is {crystal_hz} Hz / {plldiv} = {input_hz} Hz, not the required 4 MHz")]
    PllInput {
        crystal_hz: u64,
        plldiv: u32,
        input_hz: f64,
    },
    #[error("divisor must be nonzero: {name}")]
    ZeroDivisor { name: &'static str },
    #[error("96 MHz PLL output is not divisible by {name} = {value}")]
    UnevenDivision { name: &'static str, value: u32 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorSpecError {
    #[error("unknown waveform kind {0:?} (expected constant, ramp, sine or steps)")]
    UnknownKind(String),
    #[error("waveform {kind:?} takes {expected} parameter(s), got {got}")]
    WrongArity {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid number {0:?}")]
    BadNumber(String),
    #[error("line {line}: expected key=value, got {text:?}")]
    BadLine { line: usize, text: String },
    #[error(
        "unknown key {0:?} (expected kind, volts, rate, freq, amplitude, offset, noise or seed)"
    )]
    UnknownKey(String),
    #[error("negative noise amplitude {0}")]
    NegativeNoise(f64),
    #[error("missing kind")]
    MissingKind,
}

/// A 10-bit ADC sample, guaranteed in 0..=1023.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct AdcCode(u16);

impl AdcCode {
    pub fn new(code: u16) -> Result<AdcCode, PipelineError> {
        if code > 1023 {
            Err(PipelineError::CodeOutOfRange { code })
        } else {
            Ok(AdcCode(code))
        }
    }

    pub fn value(self) -> u16 {
        self.0
    }
}

/// The deterministic input waveform standing in for the analog sensor.
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    /// Fixed voltage.
    Constant { volts: f64 },
    /// `start + rate × t`, rate in volts/second.
    Ramp { start: f64, rate: f64 },
    /// `offset + amplitude × sin(2π × freq × t)`.
    Sine {
        offset: f64,
        amplitude: f64,
        freq_hz: f64,
    },
    /// Staircase: `start + amplitude × floor(t × rate_hz)`.
    Steps {
        start: f64,
        amplitude: f64,
        rate_hz: f64,
    },
}

/// A sensor waveform plus optional seeded noise. Evaluation is a pure
/// function of `(signal, t)`, so replays are identical.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSignal {
    pub waveform: Waveform,
    /// Uniform noise in [-noise_amplitude, +noise_amplitude] volts.
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl SensorSignal {
    pub fn constant(volts: f64) -> SensorSignal {
        SensorSignal {
            waveform: Waveform::Constant { volts },
            noise_amplitude: 0.0,
            seed: 0,
        }
    }

    /// Voltage at simulated time `t_us`, clamped to [0, 5] V after noise.
    ///
    /// The noise generator is re-keyed from `(seed, t_us)` for every sample,
    /// so the value at a given time never depends on how many samples were
    /// drawn before it.
    pub fn eval(&self, t_us: u64) -> f64 {
        let t = t_us as f64 / 1e6;
        let base = match self.waveform {
            Waveform::Constant { volts } => volts,
            Waveform::Ramp { start, rate } => start + rate * t,
            Waveform::Sine {
                offset,
                amplitude,
                freq_hz,
            } => offset + amplitude * (2.0 * std::f64::consts::PI * freq_hz * t).sin(),
            Waveform::Steps {
                start,
                amplitude,
                rate_hz,
            } => start + amplitude * (t * rate_hz).floor(),
        };
        let noisy = if self.noise_amplitude > 0.0 {
            let mut rng =
                ChaCha8Rng::seed_from_u64(self.seed ^ t_us.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            // 53-bit uniform in [0,1), mapped to [-amp, +amp].
            let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            base + self.noise_amplitude * (2.0 * u - 1.0)
        } else {
            base
        };
        noisy.clamp(0.0, VREF_VOLTS)
    }

    /// Parse the flag-line mini-grammar: `constant:V`, `ramp:START:RATE`,
    /// `sine:OFFSET:AMPLITUDE:FREQ`, `steps:START:STEP:RATE`.
    pub fn parse_flag(spec: &str) -> Result<SensorSignal, SensorSpecError> {
        let mut parts = spec.split(':');
        let kind = parts.next().unwrap_or("");
        let args: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| SensorSpecError::BadNumber(p.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let arity = |expected: usize, kind: &'static str| {
            if args.len() == expected {
                Ok(())
            } else {
                Err(SensorSpecError::WrongArity {
                    kind,
                    expected,
                    got: args.len(),
                })
            }
        };
        let waveform = match kind {
            "constant" => {
                arity(1, "constant")?;
                Waveform::Constant { volts: args[0] }
            }
            "ramp" => {
                arity(2, "ramp")?;
                Waveform::Ramp {
                    start: args[0],
                    rate: args[1],
                }
            }
            "sine" => {
                arity(3, "sine")?;
                Waveform::Sine {
                    offset: args[0],
                    amplitude: args[1],
                    freq_hz: args[2],
                }
            }
            "steps" => {
                arity(3, "steps")?;
                Waveform::Steps {
                    start: args[0],
                    amplitude: args[1],
                    rate_hz: args[2],
                }
            }
            other => return Err(SensorSpecError::UnknownKind(other.to_string())),
        };
        Ok(SensorSignal {
            waveform,
            noise_amplitude: 0.0,
            seed: 0,
        })
    }

    /// Parse the key=value file format. Keys: `kind` (constant, ramp, sine,
    /// steps), `volts` (constant value / ramp or staircase start), `rate`
    /// (ramp volts-per-second or staircase steps-per-second), `freq` (sine
    /// Hz), `amplitude` (sine or staircase step size), `offset` (sine
    /// center), `noise`, `seed`. Blank lines and `#` comments are ignored.
    pub fn parse_key_values(text: &str) -> Result<SensorSignal, SensorSpecError> {
        let mut kind: Option<String> = None;
        let mut volts = 0.0f64;
        let mut rate = 0.0f64;
        let mut freq = 0.0f64;
        let mut amplitude = 0.0f64;
        let mut offset = 0.0f64;
        let mut noise = 0.0f64;
        let mut seed = 0u64;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SensorSpecError::BadLine {
                    line: idx + 1,
                    text: raw.to_string(),
                })?;
            let key = key.trim();
            let value = value.trim();
            let num = || {
                value
                    .parse::<f64>()
                    .map_err(|_| SensorSpecError::BadNumber(value.to_string()))
            };
            match key {
                "kind" => kind = Some(value.to_string()),
                "volts" => volts = num()?,
                "rate" => rate = num()?,
                "freq" => freq = num()?,
                "amplitude" => amplitude = num()?,
                "offset" => offset = num()?,
                "noise" => noise = num()?,
                "seed" => {
                    seed = value
                        .parse::<u64>()
                        .map_err(|_| SensorSpecError::BadNumber(value.to_string()))?
                }
                other => return Err(SensorSpecError::UnknownKey(other.to_string())),
            }
        }
        if noise < 0.0 {
            return Err(SensorSpecError::NegativeNoise(noise));
        }
        let waveform = match kind.as_deref() {
            Some("constant") => Waveform::Constant { volts },
            Some("ramp") => Waveform::Ramp { start: volts, rate },
            Some("sine") => Waveform::Sine {
                offset,
                amplitude,
                freq_hz: freq,
            },
            Some("steps") => Waveform::Steps {
                start: volts,
                amplitude,
                rate_hz: freq,
            },
            Some(other) => return Err(SensorSpecError::UnknownKind(other.to_string())),
            None => return Err(SensorSpecError::MissingKind),
        };
        Ok(SensorSignal {
            waveform,
            noise_amplitude: noise,
            seed,
        })
    }
}

/// Quantize a voltage to a 10-bit code: `floor(v × 1024/5)`, clamped to the
/// code range (so exactly 5.0 V reads as 1023).
pub fn adc_sample(v: f64) -> AdcCode {
    let raw = (v * ADC_STEPS as f64 / VREF_VOLTS).floor();
    AdcCode(raw.clamp(0.0, 1023.0) as u16)
}

/// `Voltage = Vin × 5.0/1024.0`.
pub fn code_to_voltage(c: AdcCode) -> f64 {
    c.0 as f64 * VREF_VOLTS / ADC_STEPS as f64
}

/// `Celsius = Voltage × 100.0`.
pub fn voltage_to_celsius(v: f64) -> f64 {
    v * 100.0
}

/// `Cint = (int) Celsius` — C cast semantics, truncation toward zero.
pub fn celsius_to_int(c: f64) -> i64 {
    c.trunc() as i64
}

/// Decimal conversion into a fixed 12-character field, right-justified and
/// left-padded with spaces; a `-` sign immediately precedes the digits.
/// Errors when the representation needs more than 12 characters.
pub fn long_to_str(n: i64) -> Result<[u8; 12], PipelineError> {
    let s = n.to_string();
    if s.len() > 12 {
        return Err(PipelineError::FieldOverflow { value: n });
    }
    let mut buf = [b' '; 12];
    buf[12 - s.len()..].copy_from_slice(s.as_bytes());
    Ok(buf)
}

/// The 4-byte ASCII payload sent over the interrupt endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemperatureReport([u8; 4]);

impl TemperatureReport {
    pub fn bytes(&self) -> &[u8; 4] {
        &self.0
    }

    /// The payload as text (always plain ASCII for pipeline-produced
    /// reports; other bytes are replaced when not valid UTF-8).
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.0).into_owned()
    }
}

impl std::fmt::Display for TemperatureReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.text())
    }
}

/// Strip blanks from the 12-character field into a 4-byte buffer: scans left
/// to right copying every non-space byte, space-padding the tail. Returns the
/// report and a truncation flag set when more than four non-space bytes were
/// present (the device program would overrun its buffer here; the simulation
/// clamps instead of emulating undefined behavior).
pub fn remove_blank(op: &[u8; 12]) -> (TemperatureReport, bool) {
    let mut buf = [b' '; 4];
    let mut n = 0;
    let mut truncated = false;
    for &b in op {
        if b != b' ' {
            if n < 4 {
                buf[n] = b;
                n += 1;
            } else {
                truncated = true;
            }
        }
    }
    (TemperatureReport(buf), truncated)
}

/// Every intermediate of one main-loop conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionTrace {
    pub vin: AdcCode,
    pub voltage: f64,
    pub celsius: f64,
    pub cint: i64,
    /// The 12-character decimal conversion buffer.
    pub op: [u8; 12],
    pub report: TemperatureReport,
    /// True when blank-stripping dropped bytes; unreachable from real codes
    /// (0..=1023 maps to 0..=499, at most three characters).
    pub truncated: bool,
}

/// Run the full conversion pipeline for one ADC code, recording every step.
///
/// Infallible: codes 0..=1023 yield 0..=499 °C, which always fits both the
/// 12-character field and the 4-byte report.
pub fn make_report(c: AdcCode) -> ConversionTrace {
    let voltage = code_to_voltage(c);
    let celsius = voltage_to_celsius(voltage);
    let cint = celsius_to_int(celsius);
    let op = long_to_str(cint).expect("0..=499 fits the 12-character field");
    let (report, truncated) = remove_blank(&op);
    ConversionTrace {
        vin: c,
        voltage,
        celsius,
        cint,
        op,
        report,
        truncated,
    }
}

/// Timer0 overflow interval in nanoseconds, on an exact integer grid:
/// `(256 − reload) × prescale × 10⁹ / f_cpu`, truncated.
pub fn timer0_interval_ns(prescale: u32, reload: u8, f_cpu_hz: u64) -> u64 {
    let ticks = (256 - reload as u64) * prescale as u64;
    (ticks as u128 * 1_000_000_000u128 / f_cpu_hz as u128) as u64
}

/// Timer0 overflow interval in microseconds (exact for the stock
/// configuration: 156 ticks × 256 at 48 MHz is 832 µs on the nose).
pub fn timer0_interval_us(prescale: u32, reload: u8, f_cpu_hz: u64) -> f64 {
    timer0_interval_ns(prescale, reload, f_cpu_hz) as f64 / 1000.0
}

/// Which clock feeds the CPU divider chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpuClockSource {
    /// 96 MHz PLL output / 2, then / cpudiv.
    Pll,
    /// Crystal directly, / cpudiv.
    Oscillator,
}

/// The derived clock tree for one oscillator configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClockPlan {
    pub crystal_hz: u64,
    pub plldiv: u32,
    pub cpudiv_source: CpuClockSource,
    pub cpudiv: u32,
    pub usbdiv: u32,
    pub cpu_hz: u64,
    pub usb_hz: u64,
}

const PLL_OUTPUT_HZ: u64 = 96_000_000;
const PLL_INPUT_HZ: u64 = 4_000_000;

/// Derive CPU and USB clocks from the oscillator configuration. The PLL
/// prescaler must divide the crystal to exactly 4 MHz (the full-speed USB
/// engine always runs from the 96 MHz PLL); the stock configuration — 8 MHz
/// crystal, PLL÷2, USB postscale ÷2, CPU from PLL ÷1 — yields 48 MHz for both.
pub fn derive_clocks(
    crystal_hz: u64,
    plldiv: u32,
    usbdiv: u32,
    cpu_source: CpuClockSource,
    cpudiv: u32,
) -> Result<ClockPlan, ClockError> {
    if plldiv == 0 {
        return Err(ClockError::ZeroDivisor { name: "plldiv" });
    }
    if usbdiv == 0 {
        return Err(ClockError::ZeroDivisor { name: "usbdiv" });
    }
    if cpudiv == 0 {
        return Err(ClockError::ZeroDivisor { name: "cpudiv" });
    }
    if !crystal_hz.is_multiple_of(plldiv as u64) || crystal_hz / plldiv as u64 != PLL_INPUT_HZ {
        return Err(ClockError::PllInput {
            crystal_hz,
            plldiv,
            input_hz: crystal_hz as f64 / plldiv as f64,
        });
    }
    if !PLL_OUTPUT_HZ.is_multiple_of(usbdiv as u64) {
        return Err(ClockError::UnevenDivision {
            name: "usbdiv",
            value: usbdiv,
        });
    }
    let usb_hz = PLL_OUTPUT_HZ / usbdiv as u64;
    let cpu_hz = match cpu_source {
        CpuClockSource::Pll => {
            let half = PLL_OUTPUT_HZ / 2;
            if !half.is_multiple_of(cpudiv as u64) {
                return Err(ClockError::UnevenDivision {
                    name: "cpudiv",
                    value: cpudiv,
                });
            }
            half / cpudiv as u64
        }
        CpuClockSource::Oscillator => {
            if !crystal_hz.is_multiple_of(cpudiv as u64) {
                return Err(ClockError::UnevenDivision {
                    name: "cpudiv",
                    value: cpudiv,
                });
            }
            crystal_hz / cpudiv as u64
        }
    };
    Ok(ClockPlan {
        crystal_hz,
        plldiv,
        cpudiv_source: cpu_source,
        cpudiv,
        usbdiv,
        cpu_hz,
        usb_hz,
    })
}

/// The device-side state machine: register file, sensor, the single-slot
/// report buffer, and the PORTB mirror. Driven by the bus scheduler; it holds
/// no clock of its own.
#[derive(Debug, Clone)]
pub struct Device {
    pub regs: RegisterFile,
    pub signal: SensorSignal,
    /// Low 8 bits of the last Cint, mirrored like the diagnostic port write.
    pub portb: u8,
    /// Bus address assigned during enumeration (0 = default address).
    pub address: u8,
    /// Set by SET_CONFIGURATION; interrupt endpoints answer only when true.
    pub configured: bool,
    cpu_hz: u64,
    queued: Option<[u8; 4]>,
    overwritten: u32,
    stopped: bool,
}

impl Device {
    pub fn new(regs: RegisterFile, signal: SensorSignal) -> Device {
        Device {
            regs,
            signal,
            portb: 0,
            address: 0,
            configured: false,
            cpu_hz: DEFAULT_CPU_HZ,
            queued: None,
            overwritten: 0,
            stopped: false,
        }
    }

    /// Keep-alive service period, or `None` when the Timer0 interrupt cannot
    /// fire (timer off, GIE clear, or TMR0IE clear) or the device is stopped.
    pub fn keep_alive_period_us(&self) -> Option<u64> {
        if self.stopped {
            return None;
        }
        let t0 = decode_t0con(self.regs.t0con);
        let ints = decode_intcon(self.regs.intcon);
        if !(t0.enabled && ints.gie && ints.tmr0ie) {
            return None;
        }
        let ns = timer0_interval_ns(t0.prescale as u32, self.regs.tmr0l_reload, self.cpu_hz);
        Some((ns / 1000).max(1))
    }

    /// One main-loop iteration at time `t_us`: sample the sensor, run the
    /// pipeline, mirror Cint to PORTB, and queue the report for the next
    /// interrupt-IN poll. The queue holds a single report — a fresh value
    /// overwrites an undelivered one and the overwrite is counted.
    pub fn sample_and_queue(&mut self, t_us: u64) -> ConversionTrace {
        let v = self.signal.eval(t_us);
        let trace = make_report(adc_sample(v));
        self.portb = trace.cint as u8;
        if self.queued.is_some() {
            self.overwritten += 1;
        }
        self.queued = Some(*trace.report.bytes());
        trace
    }

    /// Dequeue the pending report, if any, along with how many undelivered
    /// reports were overwritten since the last successful delivery.
    pub fn take_report(&mut self) -> Option<([u8; 4], u32)> {
        self.queued.take().map(|payload| {
            let overwritten = self.overwritten;
            self.overwritten = 0;
            (payload, overwritten)
        })
    }

    pub fn has_report(&self) -> bool {
        self.queued.is_some()
    }

    /// Halt the main loop and the keep-alive interrupt (the code path after
    /// the device program's endless loop; reachable here for testability).
    pub fn stop(&mut self) {
        self.stopped = true;
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    /// Forget bus-assigned state on detach so the device can re-enumerate.
    pub fn reset_bus_state(&mut self) {
        self.address = 0;
        self.configured = false;
        self.queued = None;
        self.overwritten = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sensor_examples() {
        let s = SensorSignal::constant(2.5);
        assert_eq!(s.eval(0), 2.5);
        assert_eq!(s.eval(12_345_678), 2.5);

        let ramp = SensorSignal {
            waveform: Waveform::Ramp {
                start: 0.0,
                rate: 1.0,
            },
            noise_amplitude: 0.0,
            seed: 0,
        };
        assert_eq!(ramp.eval(2_000_000), 2.0);
        // Clamped at the 5 V rail.
        assert_eq!(ramp.eval(7_000_000), 5.0);
    }

    #[test]
    fn sensor_noise_is_deterministic_and_bounded() {
        let s = SensorSignal {
            waveform: Waveform::Constant { volts: 2.5 },
            noise_amplitude: 0.25,
            seed: 99,
        };
        for t in [0u64, 1, 832, 1_000_000, 7_777_777] {
            let a = s.eval(t);
            let b = s.eval(t);
            assert_eq!(a, b, "same (seed, t) must reproduce");
            assert!((2.25..=2.75).contains(&a), "noise out of range: {a}");
        }
        // Different seeds decorrelate.
        let s2 = SensorSignal {
            seed: 100,
            ..s.clone()
        };
        assert_ne!(s.eval(1_000_000), s2.eval(1_000_000));
    }

    #[test]
    fn adc_sample_boundaries() {
        assert_eq!(adc_sample(0.0).value(), 0);
        assert_eq!(adc_sample(2.5).value(), 512);
        // Raw floor gives 1024; clamped to the top code.
        assert_eq!(adc_sample(5.0).value(), 1023);
    }

    /// adc_sample inverts code_to_voltage: each code's voltage maps back to
    /// itself, and anything below the next step stays put.
    #[test]
    fn adc_sample_is_floor_inverse_of_code_to_voltage() {
        for c in 0..1024u16 {
            let code = AdcCode::new(c).unwrap();
            let v = code_to_voltage(code);
            assert_eq!(adc_sample(v), code, "code {c}");
            let v_just_under_next = v + 0.9 * (VREF_VOLTS / ADC_STEPS as f64);
            assert_eq!(adc_sample(v_just_under_next), code, "code {c} + 0.9 LSB");
        }
    }

    #[test]
    fn conversion_formulas() {
        assert_eq!(code_to_voltage(AdcCode::new(0).unwrap()), 0.0);
        assert_eq!(code_to_voltage(AdcCode::new(512).unwrap()), 2.5);
        let top = code_to_voltage(AdcCode::new(1023).unwrap());
        assert!((top - 4.9951171875).abs() < 1e-12);

        assert_eq!(voltage_to_celsius(2.5), 250.0);
        assert_eq!(celsius_to_int(250.0), 250);
        assert_eq!(celsius_to_int(499.5117), 499);
        assert_eq!(celsius_to_int(0.999), 0);
        assert_eq!(celsius_to_int(-0.5), 0, "truncation toward zero");
    }

    #[test]
    fn long_to_str_examples() {
        assert_eq!(&long_to_str(250).unwrap(), b"         250");
        assert_eq!(&long_to_str(0).unwrap(), b"           0");
        assert_eq!(&long_to_str(-37).unwrap(), b"         -37");
        assert_eq!(&long_to_str(-99_999_999_999).unwrap(), b"-99999999999");
        assert_eq!(&long_to_str(999_999_999_999).unwrap(), b"999999999999");
        // Thirteen characters no longer fit.
        assert_eq!(
            long_to_str(1_000_000_000_000),
            Err(PipelineError::FieldOverflow {
                value: 1_000_000_000_000
            })
        );
        assert_eq!(
            long_to_str(-100_000_000_000),
            Err(PipelineError::FieldOverflow {
                value: -100_000_000_000
            })
        );
    }

    #[test]
    fn remove_blank_examples() {
        let (r, trunc) = remove_blank(b"         250");
        assert_eq!(r.bytes(), b"250 ");
        assert!(!trunc);

        let (r, trunc) = remove_blank(b"            ");
        assert_eq!(r.bytes(), b"    ");
        assert!(!trunc);

        let (r, trunc) = remove_blank(b"       12345");
        assert_eq!(r.bytes(), b"1234");
        assert!(trunc, "five significant chars must flag truncation");
    }

    #[test]
    fn make_report_composition() {
        let t = make_report(AdcCode::new(512).unwrap());
        assert_eq!(t.report.bytes(), b"250 ");
        assert_eq!(t.cint, 250);
        assert_eq!(&t.op, b"         250");
        assert!(!t.truncated);

        assert_eq!(
            make_report(AdcCode::new(0).unwrap()).report.bytes(),
            b"0   "
        );
        assert_eq!(
            make_report(AdcCode::new(1023).unwrap()).report.bytes(),
            b"499 "
        );
    }

    #[test]
    fn timer0_interval_stock_values() {
        assert_eq!(timer0_interval_ns(256, 100, 48_000_000), 832_000);
        assert_eq!(timer0_interval_us(256, 100, 48_000_000), 832.0);
        // Single tick at 48 MHz: 20 ns truncated (20.833..).
        assert_eq!(timer0_interval_ns(1, 255, 48_000_000), 20);
        // The reload the init comment mentions, run through the same formula.
        assert_eq!(timer0_interval_ns(256, 156, 48_000_000), 533_333);
    }

    #[test]
    fn derive_clocks_stock_and_errors() {
        let plan = derive_clocks(8_000_000, 2, 2, CpuClockSource::Pll, 1).unwrap();
        assert_eq!(plan.cpu_hz, 48_000_000);
        assert_eq!(plan.usb_hz, 48_000_000);

        let plan = derive_clocks(4_000_000, 1, 2, CpuClockSource::Pll, 1).unwrap();
        assert_eq!((plan.cpu_hz, plan.usb_hz), (48_000_000, 48_000_000));

        assert!(matches!(
            derive_clocks(8_000_000, 3, 2, CpuClockSource::Pll, 1),
            Err(ClockError::PllInput { .. })
        ));

        let plan = derive_clocks(8_000_000, 2, 2, CpuClockSource::Oscillator, 2).unwrap();
        assert_eq!(plan.cpu_hz, 4_000_000);
        assert_eq!(plan.usb_hz, 48_000_000);
    }

    #[test]
    fn parse_flag_grammar() {
        let s = SensorSignal::parse_flag("constant:2.5").unwrap();
        assert_eq!(s.waveform, Waveform::Constant { volts: 2.5 });

        let s = SensorSignal::parse_flag("ramp:0:0.5").unwrap();
        assert_eq!(
            s.waveform,
            Waveform::Ramp {
                start: 0.0,
                rate: 0.5
            }
        );

        let s = SensorSignal::parse_flag("sine:2.5:1.0:0.2").unwrap();
        assert_eq!(
            s.waveform,
            Waveform::Sine {
                offset: 2.5,
                amplitude: 1.0,
                freq_hz: 0.2
            }
        );

        assert!(SensorSignal::parse_flag("square:1").is_err());
        assert!(SensorSignal::parse_flag("constant").is_err());
        assert!(SensorSignal::parse_flag("ramp:1:x").is_err());
    }

    #[test]
    fn parse_key_values_file() {
        let s = SensorSignal::parse_key_values(
            "# staircase up the range\nkind = steps\nvolts = 0.5\namplitude = 0.5\nfreq = 1\nnoise = 0.01\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(
            s.waveform,
            Waveform::Steps {
                start: 0.5,
                amplitude: 0.5,
                rate_hz: 1.0
            }
        );
        assert_eq!(s.noise_amplitude, 0.01);
        assert_eq!(s.seed, 7);

        assert!(SensorSignal::parse_key_values("volts=1\n").is_err());
        assert!(SensorSignal::parse_key_values("kind=constant\nbogus=1\n").is_err());
        assert!(SensorSignal::parse_key_values("kind=constant\nnot a pair\n").is_err());
    }

    #[test]
    fn device_queue_overwrites_and_counts() {
        let mut dev = Device::new(
            RegisterFile::firmware_defaults(),
            SensorSignal::constant(2.5),
        );
        dev.sample_and_queue(2_000_000);
        assert!(dev.has_report());
        assert_eq!(dev.portb, 250);

        // Undelivered report overwritten twice before the next poll.
        dev.sample_and_queue(3_000_000);
        dev.sample_and_queue(4_000_000);
        let (payload, overwritten) = dev.take_report().unwrap();
        assert_eq!(&payload, b"250 ");
        assert_eq!(overwritten, 2);
        assert!(dev.take_report().is_none());

        // Counter resets after delivery.
        dev.sample_and_queue(5_000_000);
        assert_eq!(dev.take_report().unwrap().1, 0);
    }

    #[test]
    fn device_keep_alive_gating() {
        let mut regs = RegisterFile::firmware_defaults();
        let dev = Device::new(regs, SensorSignal::constant(2.5));
        assert_eq!(dev.keep_alive_period_us(), Some(832));

        regs.intcon = 0x00;
        let dev = Device::new(regs, SensorSignal::constant(2.5));
        assert_eq!(dev.keep_alive_period_us(), None);

        regs.intcon = 0xE0;
        regs.t0con = 0x47; // TMR0ON clear
        let dev = Device::new(regs, SensorSignal::constant(2.5));
        assert_eq!(dev.keep_alive_period_us(), None);

        let mut dev = Device::new(
            RegisterFile::firmware_defaults(),
            SensorSignal::constant(2.5),
        );
        dev.stop();
        assert_eq!(dev.keep_alive_period_us(), None);
    }
}
