//! Python bindings: the simulation loop, the conversion pipeline, register
//! decoding and the descriptor set, importable as `hidsense_py`.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use hidsense::bus::Simulation as CoreSimulation;
use hidsense::descriptors::build_descriptor_set;
use hidsense::firmware::{self, SensorSignal};
use hidsense::registers::{
    decode_adcon0, decode_adcon1, decode_adcon2, decode_intcon, decode_t0con, RegisterFile,
};
use hidsense::tracer::TraceLog;

/// One delivered temperature reading, as the host application saw it.
#[pyclass(frozen, get_all)]
struct Reading {
    time_us: u64,
    text: String,
    value: Option<i64>,
}

#[pymethods]
impl Reading {
    fn __repr__(&self) -> String {
        format!(
            "Reading(time_us={}, text={:?}, value={:?})",
            self.time_us, self.text, self.value
        )
    }
}

/// Every intermediate of the firmware's sample-to-text pipeline for one
/// input voltage.
#[pyclass(frozen, get_all)]
struct Conversion {
    code: u16,
    voltage: f64,
    celsius: f64,
    value: i64,
    text: String,
}

#[pymethods]
impl Conversion {
    fn __repr__(&self) -> String {
        format!(
            "Conversion(code={}, voltage={:.4}, celsius={:.2}, value={}, text={:?})",
            self.code, self.voltage, self.celsius, self.value, self.text
        )
    }
}

/// The full stack — virtual device, bus, host — on a microsecond clock.
#[pyclass]
struct Simulation {
    inner: CoreSimulation,
}

#[pymethods]
impl Simulation {
    /// Build a simulation. `sensor` uses the same `kind:arg:…` mini-grammar
    /// as the CLI flag; `registers` maps datasheet names to byte values.
    #[new]
    #[pyo3(signature = (sensor = "constant:2.5", *, seed = None, host_poll_ms = 10, registers = None))]
    fn new(
        sensor: &str,
        seed: Option<u64>,
        host_poll_ms: u64,
        registers: Option<BTreeMap<String, u8>>,
    ) -> PyResult<Self> {
        let mut signal = SensorSignal::parse_flag(sensor)
            .map_err(|e| PyValueError::new_err(format!("sensor {sensor:?}: {e}")))?;
        if let Some(seed) = seed {
            signal.seed = seed;
        }
        let mut regs = RegisterFile::firmware_defaults();
        for (name, value) in registers.unwrap_or_default() {
            regs.set_by_name(&name, value)
                .map_err(PyValueError::new_err)?;
        }
        Ok(Simulation {
            inner: CoreSimulation::new(regs, signal, host_poll_ms.max(1)),
        })
    }

    fn attach(&mut self) -> PyResult<()> {
        self.inner
            .attach()
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn detach(&mut self) -> PyResult<()> {
        self.inner
            .detach()
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Advance the clock to an absolute microsecond timestamp.
    fn run_until(&mut self, t_us: u64) {
        self.inner.run_until(t_us);
    }

    /// Advance the clock by a span of seconds.
    fn run_for(&mut self, seconds: f64) {
        let t = self.inner.now_us() + (seconds * 1_000_000.0).round() as u64;
        self.inner.run_until(t);
    }

    fn now_us(&self) -> u64 {
        self.inner.now_us()
    }

    /// All readings delivered so far, oldest first.
    fn readings(&self) -> Vec<Reading> {
        self.inner
            .host()
            .history
            .iter()
            .map(|r| Reading {
                time_us: r.time_us,
                text: r.text.clone(),
                value: r.value,
            })
            .collect()
    }

    /// The host application's console, line by line.
    fn console(&self) -> Vec<String> {
        self.inner.host().console.clone()
    }

    fn status(&self) -> String {
        self.inner.host().status_line.clone()
    }

    /// The packet trace in its text format.
    #[pyo3(signature = (verbose = true))]
    fn trace(&self, verbose: bool) -> String {
        self.inner.trace().render(verbose)
    }

    fn summary(&self) -> String {
        self.inner.trace().summarize().to_string()
    }

    fn watchdog_ever_tripped(&self) -> bool {
        self.inner.watchdog_ever_tripped()
    }

    /// `(vid, pid, manufacturer, product)` once enumeration has finished.
    fn device_info(&self) -> Option<(u16, u16, String, String)> {
        self.inner
            .device_info()
            .map(|i| (i.vid, i.pid, i.manufacturer.clone(), i.product.clone()))
    }
}

/// Run one voltage through the firmware conversion pipeline.
#[pyfunction]
fn pipeline(volts: f64) -> Conversion {
    let trace = firmware::make_report(firmware::adc_sample(volts));
    Conversion {
        code: trace.vin.value(),
        voltage: trace.voltage,
        celsius: trace.celsius,
        value: trace.cint,
        text: String::from_utf8_lossy(trace.report.bytes()).into_owned(),
    }
}

/// Timer0 overflow interval in nanoseconds.
#[pyfunction]
fn timer0_interval_ns(prescale: u32, reload: u8, f_cpu_hz: u64) -> u64 {
    firmware::timer0_interval_ns(prescale, reload, f_cpu_hz)
}

/// `(cpu_hz, usb_hz)` for an oscillator configuration; raises ValueError
/// when the PLL input is off 4 MHz or a divider doesn't divide evenly.
#[pyfunction]
#[pyo3(signature = (crystal_hz, plldiv, usbdiv, cpudiv, cpu_from_pll = true))]
fn derive_clocks(
    crystal_hz: u64,
    plldiv: u32,
    usbdiv: u32,
    cpudiv: u32,
    cpu_from_pll: bool,
) -> PyResult<(u64, u64)> {
    let source = if cpu_from_pll {
        firmware::CpuClockSource::Pll
    } else {
        firmware::CpuClockSource::Oscillator
    };
    let plan = firmware::derive_clocks(crystal_hz, plldiv, usbdiv, source, cpudiv)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((plan.cpu_hz, plan.usb_hz))
}

/// Decode a register byte into a `{field: value}` dict, same fields as the
/// CLI `decode` subcommand prints.
#[pyfunction]
fn decode_register(name: &str, value: u8) -> PyResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        out.insert(k.to_string(), v);
    };
    let onoff = |b: bool| if b { "enabled" } else { "disabled" }.to_string();
    match name.to_ascii_uppercase().as_str() {
        "ADCON0" => {
            let ch = decode_adcon0(value);
            put("channel", format!("AN{}", ch.channel));
            put(
                "channel-implemented",
                if ch.unimplemented { "no" } else { "yes" }.into(),
            );
            put(
                "conversion",
                if ch.go_done { "in-progress" } else { "idle" }.into(),
            );
            put("adc", if ch.enabled { "on" } else { "off" }.into());
        }
        "ADCON1" => {
            let ports = decode_adcon1(value);
            put(
                "vref-plus",
                if ports.vref_plus_external {
                    "external"
                } else {
                    "VDD"
                }
                .into(),
            );
            put(
                "vref-minus",
                if ports.vref_minus_external {
                    "external"
                } else {
                    "VSS"
                }
                .into(),
            );
            put("analog-channels", ports.analog_channel_count().to_string());
        }
        "ADCON2" => {
            let timing = decode_adcon2(value);
            put(
                "justification",
                if timing.right_justified {
                    "right"
                } else {
                    "left"
                }
                .into(),
            );
            put("acquisition", format!("{}TAD", timing.acquisition_tad));
            put("clock", timing.clock_divider.to_string());
        }
        "T0CON" => {
            let timer = decode_t0con(value);
            put("enabled", if timer.enabled { "yes" } else { "no" }.into());
            put(
                "mode",
                if timer.eight_bit_mode {
                    "8-bit"
                } else {
                    "16-bit"
                }
                .into(),
            );
            put("prescale", timer.prescale.to_string());
        }
        "INTCON" => {
            let irq = decode_intcon(value);
            put("gie", onoff(irq.gie));
            put("peie", onoff(irq.peie));
            put("tmr0ie", onoff(irq.tmr0ie));
            put("int0ie", onoff(irq.int0ie));
            put("rbie", onoff(irq.rbie));
            put("tmr0if", if irq.tmr0if { "set" } else { "clear" }.into());
            put("int0if", if irq.int0if { "set" } else { "clear" }.into());
            put("rbif", if irq.rbif { "set" } else { "clear" }.into());
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown register {other:?} (expected ADCON0, ADCON1, ADCON2, T0CON or INTCON)"
            )))
        }
    }
    Ok(out)
}

#[pyfunction]
fn device_descriptor_bytes(py: Python<'_>) -> Py<PyBytes> {
    PyBytes::new(py, &build_descriptor_set().device.serialize()).into()
}

#[pyfunction]
fn configuration_bytes(py: Python<'_>) -> Py<PyBytes> {
    let bytes = build_descriptor_set()
        .configuration
        .serialize()
        .expect("stock configuration serializes");
    PyBytes::new(py, &bytes).into()
}

#[pyfunction]
fn report_descriptor_bytes(py: Python<'_>) -> Py<PyBytes> {
    let bytes = build_descriptor_set()
        .report
        .serialize()
        .expect("stock report descriptor serializes");
    PyBytes::new(py, &bytes).into()
}

/// Parse a text trace and return its summary block; raises ValueError with
/// line/column context on malformed input.
#[pyfunction]
fn summarize_trace(text: &str) -> PyResult<String> {
    let log = TraceLog::parse(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(log.summarize().to_string())
}

#[pymodule]
fn hidsense_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Simulation>()?;
    m.add_class::<Reading>()?;
    m.add_class::<Conversion>()?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(timer0_interval_ns, m)?)?;
    m.add_function(wrap_pyfunction!(derive_clocks, m)?)?;
    m.add_function(wrap_pyfunction!(decode_register, m)?)?;
    m.add_function(wrap_pyfunction!(device_descriptor_bytes, m)?)?;
    m.add_function(wrap_pyfunction!(configuration_bytes, m)?)?;
    m.add_function(wrap_pyfunction!(report_descriptor_bytes, m)?)?;
    m.add_function(wrap_pyfunction!(summarize_trace, m)?)?;
    Ok(())
}
