//! `hidsense` — drive the simulated temperature device from the shell.
//!
//! Four subcommands: `simulate` runs the whole stack and prints what the
//! host application would display, `descriptors` dumps or parses descriptor
//! binaries, `decode` explains a register byte, and `analyze` digests a
//! packet trace. Identical flags and seed give byte-identical output.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hidsense::bus::Simulation;
use hidsense::descriptors::{
    build_descriptor_set, decode_string_descriptor, parse_configuration_tree,
    parse_report_descriptor, DeviceDescriptor, TransferType, DT_CONFIGURATION, DT_DEVICE,
    DT_STRING,
};
use hidsense::firmware::SensorSignal;
use hidsense::host::export_csv;
use hidsense::registers::{
    decode_adcon0, decode_adcon1, decode_adcon2, decode_intcon, decode_t0con,
    validate_firmware_config, RegisterFile,
};
use hidsense::tracer::TraceLog;

#[derive(Parser)]
#[command(
    name = "hidsense",
    version,
    about = "USB HID skin-temperature telemetry simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run device, bus and host for a stretch of simulated time
    Simulate(SimulateArgs),
    /// Dump the device's descriptor set to files, or parse one back
    Descriptors(DescriptorsArgs),
    /// Decode one special-function register byte
    Decode(DecodeArgs),
    /// Echo and summarize a recorded packet trace
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Sensor waveform: constant:V | ramp:START:RATE | sine:OFFSET:AMP:HZ | steps:START:AMP:HZ
    #[arg(long, default_value = "constant:2.5", conflicts_with = "sensor_file")]
    sensor: String,
    /// Sensor description file (key=value lines: kind, volts, rate, freq,
    /// amplitude, offset, noise, seed)
    #[arg(long, value_name = "FILE")]
    sensor_file: Option<PathBuf>,
    /// Simulated run length in seconds (fractions allowed, must be > 0)
    #[arg(long)]
    duration: f64,
    /// Host interrupt poll interval in milliseconds (≥ 1)
    #[arg(long, default_value_t = 10)]
    host_poll_ms: u64,
    /// Override a register, e.g. --reg INTCON=0x00 (repeatable)
    #[arg(long = "reg", value_name = "NAME=VALUE")]
    reg: Vec<String>,
    /// Noise seed; overrides any seed in the sensor spec
    #[arg(long, env = "HIDSENSE_SEED")]
    seed: Option<u64>,
    /// Write the full packet trace here
    #[arg(long, value_name = "FILE")]
    trace_out: Option<PathBuf>,
    /// Write delivered readings here as CSV
    #[arg(long, value_name = "FILE")]
    csv_out: Option<PathBuf>,
}

#[derive(Args)]
struct DescriptorsArgs {
    /// Write device.bin, configuration.bin and report.bin
    #[arg(long, conflicts_with = "parse")]
    dump: bool,
    /// Directory for --dump output
    #[arg(long, default_value = ".", value_name = "DIR")]
    out: PathBuf,
    /// Parse a descriptor binary and print its fields
    #[arg(long, value_name = "FILE")]
    parse: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Register name: ADCON0, ADCON1, ADCON2, T0CON or INTCON
    #[arg(long)]
    reg: String,
    /// Byte value, decimal or 0x-prefixed hex
    #[arg(long)]
    value: String,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Trace file to read
    path: PathBuf,
    /// Echo NAK and SERVICE records too
    #[arg(long)]
    verbose: bool,
}

/// Usage errors exit 2 (matching clap's own), runtime errors exit 1.
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn report(self) -> ExitCode {
        match self {
            CliError::Usage(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
            CliError::Runtime(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(1)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Descriptors(args) => cmd_descriptors(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Analyze(args) => cmd_analyze(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

fn parse_byte(text: &str) -> Result<u8, CliError> {
    let parsed = if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        u8::from_str_radix(hex, 16)
    } else {
        text.parse()
    };
    parsed.map_err(|_| CliError::Usage(format!("not a byte value: {text:?}")))
}

fn apply_register_override(regs: &mut RegisterFile, spec: &str) -> Result<(), CliError> {
    let (name, value) = spec.split_once('=').ok_or_else(|| {
        CliError::Usage(format!("register override must be NAME=VALUE: {spec:?}"))
    })?;
    let value = parse_byte(value.trim())?;
    regs.set_by_name(name.trim(), value)
        .map_err(CliError::Usage)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    if args.duration.is_nan() || args.duration <= 0.0 {
        return Err(CliError::Usage(
            "--duration must be greater than zero".into(),
        ));
    }
    if args.host_poll_ms == 0 {
        return Err(CliError::Usage("--host-poll-ms must be at least 1".into()));
    }

    let mut signal = match &args.sensor_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            SensorSignal::parse_key_values(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => SensorSignal::parse_flag(&args.sensor)
            .map_err(|e| CliError::Usage(format!("--sensor {:?}: {e}", args.sensor)))?,
    };
    if let Some(seed) = args.seed {
        signal.seed = seed;
    }

    let mut regs = RegisterFile::firmware_defaults();
    for spec in &args.reg {
        apply_register_override(&mut regs, spec)?;
    }
    for finding in validate_firmware_config(&regs) {
        eprintln!("warning: {finding}");
    }

    let t_end_us = (args.duration * 1_000_000.0).round() as u64;
    let mut sim = Simulation::new(regs, signal, args.host_poll_ms);
    sim.attach().expect("fresh bus accepts one device");
    sim.run_until(t_end_us);

    for line in &sim.host().console {
        println!("{line}");
    }

    if let Some(path) = &args.trace_out {
        std::fs::write(path, sim.trace().render(true))
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = &args.csv_out {
        std::fs::write(path, export_csv(&sim.host().history))
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_descriptors(args: DescriptorsArgs) -> Result<(), CliError> {
    match (&args.parse, args.dump) {
        (Some(path), false) => {
            let bytes = std::fs::read(path)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            let text = describe_descriptor(&bytes)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            print!("{text}");
            Ok(())
        }
        (None, true) => {
            let set = build_descriptor_set();
            let files: [(&str, Vec<u8>); 3] = [
                ("device.bin", set.device.serialize().to_vec()),
                (
                    "configuration.bin",
                    set.configuration
                        .serialize()
                        .expect("stock configuration serializes"),
                ),
                (
                    "report.bin",
                    set.report
                        .serialize()
                        .expect("stock report descriptor serializes"),
                ),
            ];
            for (name, bytes) in files {
                let path = args.out.join(name);
                std::fs::write(&path, &bytes)
                    .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
                println!("wrote {name} ({} bytes)", bytes.len());
            }
            Ok(())
        }
        _ => Err(CliError::Usage(
            "pass exactly one of --dump or --parse FILE".into(),
        )),
    }
}

/// Classify a descriptor binary by its bDescriptorType byte (falling back to
/// the report-item grammar, which has no such header) and lay out its fields.
fn describe_descriptor(bytes: &[u8]) -> Result<String, String> {
    let mut out = String::new();
    match bytes.get(1) {
        Some(&DT_DEVICE) => {
            let d = DeviceDescriptor::parse(bytes).map_err(|e| e.to_string())?;
            writeln!(out, "type=device").unwrap();
            writeln!(out, "usb-release=0x{:04X}", d.bcd_usb).unwrap();
            writeln!(out, "class=0x{:02X}", d.device_class).unwrap();
            writeln!(out, "subclass=0x{:02X}", d.device_subclass).unwrap();
            writeln!(out, "protocol=0x{:02X}", d.device_protocol).unwrap();
            writeln!(out, "max-packet-size0={}", d.max_packet_size0).unwrap();
            writeln!(out, "vid=0x{:04x}", d.vid).unwrap();
            writeln!(out, "pid=0x{:04x}", d.pid).unwrap();
            writeln!(out, "device-release=0x{:04X}", d.bcd_device).unwrap();
            writeln!(out, "manufacturer-index={}", d.i_manufacturer).unwrap();
            writeln!(out, "product-index={}", d.i_product).unwrap();
            writeln!(out, "serial-index={}", d.i_serial).unwrap();
            writeln!(out, "configurations={}", d.num_configurations).unwrap();
        }
        Some(&DT_CONFIGURATION) => {
            let tree = parse_configuration_tree(bytes).map_err(|e| e.to_string())?;
            writeln!(out, "type=configuration").unwrap();
            writeln!(out, "total-length={}", bytes.len()).unwrap();
            writeln!(out, "interfaces={}", tree.config.num_interfaces).unwrap();
            writeln!(
                out,
                "configuration-value={}",
                tree.config.configuration_value
            )
            .unwrap();
            writeln!(out, "attributes=0x{:02X}", tree.config.attributes).unwrap();
            writeln!(out, "max-power-ma={}", tree.config.max_power as u16 * 2).unwrap();
            writeln!(
                out,
                "interface-class=0x{:02X}",
                tree.interface.interface_class
            )
            .unwrap();
            writeln!(out, "hid-release=0x{:04X}", tree.hid.bcd_hid).unwrap();
            writeln!(
                out,
                "report-descriptor-length={}",
                tree.hid.descriptor_length
            )
            .unwrap();
            for ep in &tree.endpoints {
                let ty = match ep.transfer_type {
                    TransferType::Control => "control",
                    TransferType::Isochronous => "isochronous",
                    TransferType::Bulk => "bulk",
                    TransferType::Interrupt => "interrupt",
                };
                writeln!(
                    out,
                    "endpoint=0x{:02X} type={} max-packet={} interval-ms={}",
                    ep.address, ty, ep.max_packet_size, ep.interval_ms
                )
                .unwrap();
            }
        }
        Some(&DT_STRING) => {
            let text = decode_string_descriptor(bytes).map_err(|e| e.to_string())?;
            writeln!(out, "type=string").unwrap();
            writeln!(out, "text={text}").unwrap();
        }
        _ => {
            let report = parse_report_descriptor(bytes).map_err(|e| e.to_string())?;
            let summary = report.summary();
            writeln!(out, "type=report").unwrap();
            writeln!(out, "length={}", bytes.len()).unwrap();
            writeln!(out, "items={}", report.items.len()).unwrap();
            writeln!(out, "input-bytes={}", summary.input_bytes).unwrap();
            writeln!(out, "output-bytes={}", summary.output_bytes).unwrap();
            writeln!(out, "feature-bytes={}", summary.feature_bytes).unwrap();
        }
    }
    Ok(out)
}

fn cmd_decode(args: DecodeArgs) -> Result<(), CliError> {
    let value = parse_byte(&args.value)?;
    let onoff = |b: bool| if b { "enabled" } else { "disabled" };
    match args.reg.to_ascii_uppercase().as_str() {
        "ADCON0" => {
            let ch = decode_adcon0(value);
            println!("channel=AN{}", ch.channel);
            println!(
                "channel-implemented={}",
                if ch.unimplemented { "no" } else { "yes" }
            );
            println!(
                "conversion={}",
                if ch.go_done { "in-progress" } else { "idle" }
            );
            println!("adc={}", if ch.enabled { "on" } else { "off" });
        }
        "ADCON1" => {
            let ports = decode_adcon1(value);
            println!(
                "vref-plus={}",
                if ports.vref_plus_external {
                    "external"
                } else {
                    "VDD"
                }
            );
            println!(
                "vref-minus={}",
                if ports.vref_minus_external {
                    "external"
                } else {
                    "VSS"
                }
            );
            println!("analog-channels={}", ports.analog_channel_count());
            let analog = match ports.analog_channel_count() {
                0 => "none".to_string(),
                1 => "AN0".to_string(),
                n => format!("AN0-AN{}", n - 1),
            };
            println!("analog={analog}");
        }
        "ADCON2" => {
            let timing = decode_adcon2(value);
            println!(
                "justification={}",
                if timing.right_justified {
                    "right"
                } else {
                    "left"
                }
            );
            println!("acquisition={}TAD", timing.acquisition_tad);
            println!("clock={}", timing.clock_divider);
        }
        "T0CON" => {
            let timer = decode_t0con(value);
            println!("enabled={}", if timer.enabled { "yes" } else { "no" });
            println!(
                "mode={}",
                if timer.eight_bit_mode {
                    "8-bit"
                } else {
                    "16-bit"
                }
            );
            println!("prescale={}", timer.prescale);
        }
        "INTCON" => {
            let irq = decode_intcon(value);
            println!("gie={}", onoff(irq.gie));
            println!("peie={}", onoff(irq.peie));
            println!("tmr0ie={}", onoff(irq.tmr0ie));
            println!("int0ie={}", onoff(irq.int0ie));
            println!("rbie={}", onoff(irq.rbie));
            println!("tmr0if={}", if irq.tmr0if { "set" } else { "clear" });
            println!("int0if={}", if irq.int0if { "set" } else { "clear" });
            println!("rbif={}", if irq.rbif { "set" } else { "clear" });
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown register {other:?} (expected ADCON0, ADCON1, ADCON2, T0CON or INTCON)"
            )))
        }
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.path.display())))?;
    let log = TraceLog::parse(&text)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.path.display())))?;
    print!("{}", log.render(args.verbose));
    println!("{}", log.summarize());
    Ok(())
}
