//! Randomized invariants. Everything here must hold for *any* input in the
//! stated domain, not just the stock configuration the acceptance tests pin.

use proptest::prelude::*;

use hidsense::bus::KeepAliveWatchdog;
use hidsense::descriptors::{
    decode_string_descriptor, encode_string_descriptor, DeviceDescriptor, EndpointDescriptor,
    TransferType,
};
use hidsense::firmware::{
    adc_sample, celsius_to_int, code_to_voltage, long_to_str, make_report, remove_blank,
    timer0_interval_ns, voltage_to_celsius, SensorSignal, Waveform,
};
use hidsense::registers::{decode_adcon0, decode_adcon1, decode_adcon2, decode_t0con};
use hidsense::tracer::{BusPacket, PacketKind, TraceLog};

/// Exhaustive companion to the sampled properties below: every value the
/// 4-character report can carry without truncation round-trips exactly.
#[test]
fn every_four_character_value_survives_blank_stripping() {
    for n in 0..=9999i64 {
        let (report, truncated) = remove_blank(&long_to_str(n).unwrap());
        assert!(!truncated, "n={n}");
        assert_eq!(
            report.bytes(),
            format!("{n:<4}").as_bytes(),
            "n={n} must come out left-packed and space-padded"
        );
    }
}

fn kind_strategy() -> impl Strategy<Value = PacketKind> {
    prop_oneof![
        Just(PacketKind::Attach),
        Just(PacketKind::Detach),
        Just(PacketKind::Setup),
        Just(PacketKind::DataIn),
        Just(PacketKind::DataOut),
        Just(PacketKind::Nak),
        Just(PacketKind::Service),
    ]
}

fn transfer_type_strategy() -> impl Strategy<Value = TransferType> {
    prop_oneof![
        Just(TransferType::Control),
        Just(TransferType::Isochronous),
        Just(TransferType::Bulk),
        Just(TransferType::Interrupt),
    ]
}

proptest! {
    // ---- conversion pipeline -------------------------------------------

    #[test]
    fn sampling_is_monotone_and_in_range(a in 0.0f64..=5.0, b in 0.0f64..=5.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (ca, cb) = (adc_sample(lo), adc_sample(hi));
        prop_assert!(ca.value() <= cb.value());
        prop_assert!(cb.value() <= 1023);
    }

    #[test]
    fn quantization_law_holds_for_any_voltage(v in 0.0f64..=5.0) {
        let code = adc_sample(v);
        let cint = celsius_to_int(voltage_to_celsius(code_to_voltage(code)));
        prop_assert_eq!(cint, (code.value() as i64 * 500) / 1024);
        prop_assert!((0..=499).contains(&cint));
    }

    #[test]
    // Widest fits: "-99999999999" and "999999999999" are both 12 characters.
    fn conversion_buffer_is_right_justified_and_reversible(n in -99_999_999_999i64..=999_999_999_999) {
        let buf = long_to_str(n).unwrap();
        let text = std::str::from_utf8(&buf).unwrap();
        prop_assert_eq!(text.len(), 12);
        prop_assert_eq!(text.trim_start().parse::<i64>().unwrap(), n);
        // Right-justified: all padding is leading.
        prop_assert_eq!(text.trim_start(), text.trim());
        prop_assert_eq!(&text[12 - n.to_string().len()..], n.to_string());
    }

    #[test]
    fn blank_stripping_left_packs_into_four_bytes(n in -999i64..=9999) {
        let (report, truncated) = remove_blank(&long_to_str(n).unwrap());
        prop_assert!(!truncated, "anything up to four characters fits");
        let bytes = report.bytes();
        prop_assert_eq!(bytes.len(), 4);
        let text = std::str::from_utf8(bytes).unwrap();
        prop_assert_eq!(text.trim_end().parse::<i64>().unwrap(), n);
        // Left-packed: no leading blanks, all padding trailing.
        prop_assert!(!text.starts_with(' ') || n.to_string().len() == 4);
        prop_assert_eq!(text.trim_end(), n.to_string());
    }

    #[test]
    fn every_code_reports_exactly_four_bytes(code in 0u16..1024) {
        let trace = make_report(hidsense::AdcCode::new(code).unwrap());
        prop_assert_eq!(trace.report.bytes().len(), 4);
        prop_assert!(!trace.truncated);
        // The wire bytes are the decimal text, left-packed.
        let expected = format!("{:<4}", trace.cint);
        prop_assert_eq!(trace.report.bytes(), expected.as_bytes());
    }

    // ---- timer arithmetic ----------------------------------------------

    #[test]
    fn timer_interval_scales_with_prescale_and_shrinks_with_reload(
        reload in 0u8..=254,
        shift in 0u32..=8,
    ) {
        let prescale = 1u32 << shift;
        // At 1 MHz every division is exact, so scaling commutes exactly.
        let base = timer0_interval_ns(1, reload, 1_000_000);
        prop_assert_eq!(
            timer0_interval_ns(prescale, reload, 1_000_000),
            base * prescale as u64
        );
        // At 48 MHz the nanosecond grid truncates; the single floor at the
        // end can only exceed prescale-many floors of the base by < prescale.
        let scaled = timer0_interval_ns(prescale, reload, 48_000_000);
        let per_tick = timer0_interval_ns(1, reload, 48_000_000) * prescale as u64;
        prop_assert!(scaled >= per_tick && scaled - per_tick < prescale as u64);
        // A higher reload leaves fewer counts to overflow: shorter interval.
        prop_assert!(
            timer0_interval_ns(prescale, reload + 1, 48_000_000)
                < timer0_interval_ns(prescale, reload, 48_000_000)
        );
    }

    // ---- register decoding is total ------------------------------------

    #[test]
    fn register_decoders_accept_every_byte(value in 0u8..=255) {
        let ch = decode_adcon0(value);
        prop_assert_eq!(ch.channel, (value >> 2) & 0x0F);
        prop_assert_eq!(ch.unimplemented, ch.channel >= 13);

        let ports = decode_adcon1(value);
        prop_assert!(ports.analog_channel_count() <= 13);

        let timing = decode_adcon2(value);
        prop_assert!(timing.acquisition_tad <= 20);
        // Re-encoding reproduces the byte, modulo the unimplemented bit 6.
        prop_assert_eq!(timing.encode(), value & 0xBF);

        let timer = decode_t0con(value);
        prop_assert!(timer.prescale == 1 || timer.prescale.is_power_of_two());
        prop_assert!(timer.prescale <= 256);
    }

    // ---- descriptor serialization --------------------------------------

    #[test]
    fn device_descriptor_round_trips(
        bcd_usb in any::<u16>(),
        device_class in any::<u8>(),
        device_subclass in any::<u8>(),
        device_protocol in any::<u8>(),
        max_packet_size0 in any::<u8>(),
        vid in any::<u16>(),
        pid in any::<u16>(),
        bcd_device in any::<u16>(),
        i_manufacturer in any::<u8>(),
        i_product in any::<u8>(),
        i_serial in any::<u8>(),
        num_configurations in any::<u8>(),
    ) {
        let d = DeviceDescriptor {
            bcd_usb, device_class, device_subclass, device_protocol,
            max_packet_size0, vid, pid, bcd_device,
            i_manufacturer, i_product, i_serial, num_configurations,
        };
        prop_assert_eq!(DeviceDescriptor::parse(&d.serialize()).unwrap(), d);
    }

    #[test]
    fn endpoint_descriptor_round_trips(
        address in any::<u8>(),
        transfer_type in transfer_type_strategy(),
        max_packet_size in 0u16..=0x07FF,
        interval_ms in any::<u8>(),
    ) {
        let e = EndpointDescriptor { address, transfer_type, max_packet_size, interval_ms };
        prop_assert_eq!(EndpointDescriptor::parse(&e.serialize()).unwrap(), e);
    }

    #[test]
    fn string_descriptors_round_trip(s in "\\PC{0,60}") {
        let bytes = encode_string_descriptor(&s).unwrap();
        prop_assert_eq!(bytes.len(), 2 + 2 * s.encode_utf16().count());
        prop_assert_eq!(bytes[0] as usize, bytes.len());
        prop_assert_eq!(bytes[1], 0x03);
        prop_assert_eq!(decode_string_descriptor(&bytes).unwrap(), s);
    }

    // ---- trace format ---------------------------------------------------

    #[test]
    fn any_recordable_log_round_trips(
        packets in prop::collection::vec(
            (
                0u64..50_000,
                kind_strategy(),
                prop_oneof![Just(None), Just(Some(0u8)), Just(Some(1u8))],
                prop::collection::vec(any::<u8>(), 0..12),
                "[ -~]{0,30}",
            ),
            0..25,
        )
    ) {
        let mut log = TraceLog::new();
        let mut t = 0;
        for (delta, kind, endpoint, payload, annotation) in packets {
            t += delta;
            let mut p = BusPacket::new(t, kind, endpoint, payload);
            if !annotation.is_empty() {
                p = p.with_annotation(annotation);
            }
            log.record(p).unwrap();
        }
        let text = log.render(true);
        let back = TraceLog::parse(&text).unwrap();
        prop_assert_eq!(back.packets(), log.packets());
        prop_assert_eq!(back.render(true), text);
        // Quiet rendering is a pure filter: parseable, no NAK/SERVICE lines.
        let quiet = TraceLog::parse(&log.render(false)).unwrap();
        prop_assert!(quiet.packets().iter().all(
            |p| p.kind != PacketKind::Nak && p.kind != PacketKind::Service
        ));
    }

    // ---- watchdog -------------------------------------------------------

    #[test]
    fn watchdog_trips_exactly_on_gaps_beyond_the_window(
        window in 1u64..20_000,
        gaps in prop::collection::vec(1u64..30_000, 1..20),
    ) {
        let mut dog = KeepAliveWatchdog::new(window);
        let mut now = 0;
        for gap in gaps {
            now += gap;
            let expected = gap > window;
            prop_assert_eq!(dog.observe(now), expected, "gap {} window {}", gap, window);
            prop_assert_eq!(dog.tripped(), expected);
            dog.service(now); // recover before the next round
            prop_assert!(!dog.tripped());
        }
    }

    // ---- sensor determinism ---------------------------------------------

    #[test]
    fn sensor_evaluation_is_pure_and_bounded(
        offset in 0.0f64..=5.0,
        amplitude in 0.0f64..=5.0,
        freq_hz in 0.01f64..=10.0,
        noise in 0.0f64..=1.0,
        seed in any::<u64>(),
        t_us in 0u64..20_000_000,
    ) {
        let signal = SensorSignal {
            waveform: Waveform::Sine { offset, amplitude, freq_hz },
            noise_amplitude: noise,
            seed,
        };
        let once = signal.eval(t_us);
        prop_assert_eq!(once, signal.eval(t_us), "same instant, same volts");
        prop_assert!((0.0..=5.0).contains(&once), "clamped to the rail: {}", once);
    }
}
