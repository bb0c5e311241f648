//! Special-function register decoding for the virtual PIC18F4550.
//!
//! The simulated firmware is configured entirely through a handful of 8-bit
//! registers: ADCON0/1/2 select and time the A/D converter, T0CON and the
//! TMR0L reload value set the keep-alive interrupt period, INTCON gates the
//! interrupt sources, and TRISA/TRISB set port directions. The decoders here
//! are total functions over the full byte range — misconfigured values decode
//! to flagged-but-usable structures so traces of broken firmware remain
//! analyzable.

use thiserror::Error;

/// The register bytes the firmware writes during initialization.
///
/// Registers the simulation never reads back (INTCON2, INTCON3) are stored
/// and validated but have no behavioral effect; the stock firmware only sets
/// them to their power-on defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterFile {
    pub adcon0: u8,
    pub adcon1: u8,
    pub adcon2: u8,
    pub t0con: u8,
    pub intcon: u8,
    pub intcon2: u8,
    pub intcon3: u8,
    pub trisa: u8,
    pub trisb: u8,
    /// Value reloaded into TMR0L by the init code and by every overflow ISR.
    pub tmr0l_reload: u8,
}

impl RegisterFile {
    /// The configuration the stock firmware programs at startup: AN0 selected
    /// and enabled, all channels analog, right-justified 8 TAD Fosc/64
    /// conversions, Timer0 on in 8-bit mode with the 1:256 prescaler and a
    /// reload of 100, GIE/PEIE/TMR0IE enabled, PORTA input, PORTB output.
    pub fn firmware_defaults() -> Self {
        RegisterFile {
            adcon0: 0x01,
            adcon1: 0x00,
            adcon2: 0xA6,
            t0con: 0xC7,
            intcon: 0xE0,
            intcon2: 0xF5,
            intcon3: 0xC0,
            trisa: 0xFF,
            trisb: 0x00,
            tmr0l_reload: 100,
        }
    }

    /// Assign a register by its datasheet name, case-insensitively; `TMR0L`
    /// sets the reload value. Unknown names come back as an error message so
    /// front ends can report them in their own idiom.
    pub fn set_by_name(&mut self, name: &str, value: u8) -> Result<(), String> {
        match name.to_ascii_uppercase().as_str() {
            "ADCON0" => self.adcon0 = value,
            "ADCON1" => self.adcon1 = value,
            "ADCON2" => self.adcon2 = value,
            "T0CON" => self.t0con = value,
            "INTCON" => self.intcon = value,
            "INTCON2" => self.intcon2 = value,
            "INTCON3" => self.intcon3 = value,
            "TRISA" => self.trisa = value,
            "TRISB" => self.trisb = value,
            "TMR0L" => self.tmr0l_reload = value,
            other => return Err(format!("unknown register {other:?}")),
        }
        Ok(())
    }
}

impl Default for RegisterFile {
    fn default() -> Self {
        Self::firmware_defaults()
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum RegisterError {
    /// ADCON0 selects one of the channels the datasheet marks "Unimplemented"
    /// (13–15) while the converter is enabled.
    #[error("ADC channel {channel} is unimplemented (valid channels are 0-12)")]
    UnimplementedChannel { channel: u8 },
}

/// A/D conversion clock source, ADCON2 bits 2-0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockDivider {
    Fosc2,
    Fosc4,
    Fosc8,
    Fosc16,
    Fosc32,
    Fosc64,
    /// Internal RC oscillator; selected by two distinct encodings (011, 111).
    Frc,
}

impl std::fmt::Display for ClockDivider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ClockDivider::Fosc2 => "Fosc/2",
            ClockDivider::Fosc4 => "Fosc/4",
            ClockDivider::Fosc8 => "Fosc/8",
            ClockDivider::Fosc16 => "Fosc/16",
            ClockDivider::Fosc32 => "Fosc/32",
            ClockDivider::Fosc64 => "Fosc/64",
            ClockDivider::Frc => "FRC",
        };
        f.write_str(s)
    }
}

/// Decoded ADCON0: channel select, conversion status, and module enable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdcChannelSelect {
    /// CHS3:CHS0, bits 5-2. 0-12 select AN0-AN12; 13-15 are unimplemented.
    pub channel: u8,
    /// True when `channel` is one of the unimplemented selections (13-15).
    pub unimplemented: bool,
    /// GO/DONE, bit 1: conversion in progress.
    pub go_done: bool,
    /// ADON, bit 0: converter enabled.
    pub enabled: bool,
}

/// Decode ADCON0. Total over all 256 bytes; unimplemented channel selections
/// are flagged rather than rejected.
pub fn decode_adcon0(value: u8) -> AdcChannelSelect {
    let channel = (value >> 2) & 0x0F;
    AdcChannelSelect {
        channel,
        unimplemented: channel >= 13,
        go_done: value & 0x02 != 0,
        enabled: value & 0x01 != 0,
    }
}

/// Decoded ADCON1: reference selection and the PCFG analog/digital port map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdcPortConfig {
    /// VCFG1, bit 5: Vref- taken from the AN2 pin instead of VSS.
    pub vref_minus_external: bool,
    /// VCFG0, bit 4: Vref+ taken from the AN3 pin instead of VDD.
    pub vref_plus_external: bool,
    /// `analog_map[k]` is true when ANk is configured as an analog input.
    pub analog_map: [bool; 13],
}

impl AdcPortConfig {
    /// Number of channels configured analog (0-13).
    pub fn analog_channel_count(&self) -> u8 {
        self.analog_map.iter().filter(|&&a| a).count() as u8
    }
}

/// Decode ADCON1. PCFG rows 0000-0010 are all-analog; each higher value
/// converts one more channel to digital starting from AN12, down to row 1111
/// (all digital).
pub fn decode_adcon1(value: u8) -> AdcPortConfig {
    let pcfg = value & 0x0F;
    let analog_count: u8 = if pcfg <= 2 { 13 } else { 15 - pcfg };
    let mut analog_map = [false; 13];
    for (k, slot) in analog_map.iter_mut().enumerate() {
        *slot = (k as u8) < analog_count;
    }
    AdcPortConfig {
        vref_minus_external: value & 0x20 != 0,
        vref_plus_external: value & 0x10 != 0,
        analog_map,
    }
}

/// Decoded ADCON2: result justification, acquisition time, conversion clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdcTiming {
    /// ADFM, bit 7: result right-justified in ADRESH:ADRESL.
    pub right_justified: bool,
    /// Acquisition time in TAD periods: 0, 2, 4, 6, 8, 12, 16 or 20.
    pub acquisition_tad: u8,
    pub clock_divider: ClockDivider,
    /// Raw ACQT bits 5-3, kept so re-encoding is exact.
    pub acqt_bits: u8,
    /// Raw ADCS bits 2-0, kept because FRC has two encodings (011 and 111).
    pub adcs_bits: u8,
}

const ACQT_TAD: [u8; 8] = [0, 2, 4, 6, 8, 12, 16, 20];

const ADCS_DIVIDER: [ClockDivider; 8] = [
    ClockDivider::Fosc2,
    ClockDivider::Fosc8,
    ClockDivider::Fosc32,
    ClockDivider::Frc,
    ClockDivider::Fosc4,
    ClockDivider::Fosc16,
    ClockDivider::Fosc64,
    ClockDivider::Frc,
];

/// Decode ADCON2. Bit 6 is unimplemented and reads as zero.
pub fn decode_adcon2(value: u8) -> AdcTiming {
    let acqt_bits = (value >> 3) & 0x07;
    let adcs_bits = value & 0x07;
    AdcTiming {
        right_justified: value & 0x80 != 0,
        acquisition_tad: ACQT_TAD[acqt_bits as usize],
        clock_divider: ADCS_DIVIDER[adcs_bits as usize],
        acqt_bits,
        adcs_bits,
    }
}

impl AdcTiming {
    /// Reassemble the register byte over the defined bits (7 and 5-0).
    pub fn encode(&self) -> u8 {
        (if self.right_justified { 0x80 } else { 0 }) | (self.acqt_bits << 3) | self.adcs_bits
    }
}

/// Merged ADC view across ADCON0/1/2, as the firmware's sampling code sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdcConfig {
    pub channel: u8,
    pub enabled: bool,
    pub right_justified: bool,
    pub acquisition_tad: u8,
    pub clock_divider: ClockDivider,
    pub vref_plus_external: bool,
    pub vref_minus_external: bool,
    pub analog_channel_count: u8,
}

impl AdcConfig {
    /// Combine the three ADC registers. Errors when the converter is enabled
    /// on an unimplemented channel (13-15); a disabled converter may hold any
    /// channel bits.
    pub fn from_registers(regs: &RegisterFile) -> Result<AdcConfig, RegisterError> {
        let ch = decode_adcon0(regs.adcon0);
        if ch.enabled && ch.unimplemented {
            return Err(RegisterError::UnimplementedChannel {
                channel: ch.channel,
            });
        }
        let port = decode_adcon1(regs.adcon1);
        let timing = decode_adcon2(regs.adcon2);
        Ok(AdcConfig {
            channel: ch.channel,
            enabled: ch.enabled,
            right_justified: timing.right_justified,
            acquisition_tad: timing.acquisition_tad,
            clock_divider: timing.clock_divider,
            vref_plus_external: port.vref_plus_external,
            vref_minus_external: port.vref_minus_external,
            analog_channel_count: port.analog_channel_count(),
        })
    }
}

/// Decoded Timer0 configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timer0Config {
    /// TMR0ON, bit 7.
    pub enabled: bool,
    /// T08BIT, bit 6: 8-bit counter instead of 16-bit.
    pub eight_bit_mode: bool,
    /// Effective prescale ratio: 2^(T0PS+1) when the prescaler is assigned
    /// (PSA, bit 3, clear), otherwise 1.
    pub prescale: u16,
    /// TMR0L reload value; not part of T0CON, filled by [`Timer0Config::from_registers`].
    pub reload: u8,
    /// INTCON.TMR0IE; not part of T0CON, filled by [`Timer0Config::from_registers`].
    pub overflow_interrupt_enabled: bool,
}

/// Decode T0CON alone. `reload` and `overflow_interrupt_enabled` come from
/// other registers and are left at 0/false here.
pub fn decode_t0con(value: u8) -> Timer0Config {
    let prescaler_assigned = value & 0x08 == 0;
    let prescale = if prescaler_assigned {
        1u16 << ((value & 0x07) + 1)
    } else {
        1
    };
    Timer0Config {
        enabled: value & 0x80 != 0,
        eight_bit_mode: value & 0x40 != 0,
        prescale,
        reload: 0,
        overflow_interrupt_enabled: false,
    }
}

impl Timer0Config {
    /// Full timer view: T0CON plus the TMR0L reload and the INTCON gate.
    pub fn from_registers(regs: &RegisterFile) -> Timer0Config {
        let mut cfg = decode_t0con(regs.t0con);
        cfg.reload = regs.tmr0l_reload;
        cfg.overflow_interrupt_enabled = decode_intcon(regs.intcon).tmr0ie;
        cfg
    }
}

/// Decoded INTCON, one flag per bit, MSB first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterruptControl {
    pub gie: bool,
    pub peie: bool,
    pub tmr0ie: bool,
    pub int0ie: bool,
    pub rbie: bool,
    pub tmr0if: bool,
    pub int0if: bool,
    pub rbif: bool,
}

/// Decode INTCON.
pub fn decode_intcon(value: u8) -> InterruptControl {
    InterruptControl {
        gie: value & 0x80 != 0,
        peie: value & 0x40 != 0,
        tmr0ie: value & 0x20 != 0,
        int0ie: value & 0x10 != 0,
        rbie: value & 0x08 != 0,
        tmr0if: value & 0x04 != 0,
        int0if: value & 0x02 != 0,
        rbif: value & 0x01 != 0,
    }
}

/// Cross-check a register file against the configuration the stock firmware
/// intends: all-analog ports, right-justified 8 TAD Fosc/64 conversions,
/// Timer0 on with prescale 256 and reload 100, GIE/PEIE/TMR0IE set, PORTA as
/// input, PORTB as output. Returns one human-readable finding per deviation;
/// an empty list means the file matches.
pub fn validate_firmware_config(regs: &RegisterFile) -> Vec<String> {
    let mut findings = Vec::new();
    if regs.adcon1 != 0x00 {
        findings.push(format!(
            "ADCON1 is {:#04X}, expected 0x00 (all channels analog, Vref from VDD/VSS)",
            regs.adcon1
        ));
    }
    if regs.adcon2 != 0xA6 {
        findings.push(format!(
            "ADCON2 is {:#04X}, expected 0xA6 (right-justified, 8 TAD, Fosc/64)",
            regs.adcon2
        ));
    }
    if regs.trisa != 0xFF {
        findings.push(format!(
            "TRISA is {:#04X}: PORTA not configured as input (expected 0xFF)",
            regs.trisa
        ));
    }
    if regs.trisb != 0x00 {
        findings.push(format!(
            "TRISB is {:#04X}: PORTB not configured as output (expected 0x00)",
            regs.trisb
        ));
    }
    let t0 = decode_t0con(regs.t0con);
    if !t0.enabled {
        findings.push(format!("T0CON is {:#04X}: Timer0 not enabled", regs.t0con));
    }
    if t0.prescale != 256 {
        findings.push(format!(
            "T0CON is {:#04X}: Timer0 prescale is {}, expected 256",
            regs.t0con, t0.prescale
        ));
    }
    if regs.intcon != 0xE0 {
        findings.push(format!(
            "INTCON is {:#04X}, expected 0xE0 (GIE, PEIE, TMR0IE)",
            regs.intcon
        ));
    }
    if regs.tmr0l_reload != 100 {
        findings.push(format!(
            "TMR0L reload is {}, expected 100 (0.832 ms keep-alive period)",
            regs.tmr0l_reload
        ));
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_by_name_accepts_any_case_and_rejects_strangers() {
        let mut regs = RegisterFile::firmware_defaults();
        regs.set_by_name("intcon", 0x00).unwrap();
        assert_eq!(regs.intcon, 0x00);
        regs.set_by_name("Tmr0l", 156).unwrap();
        assert_eq!(regs.tmr0l_reload, 156);
        assert!(regs.set_by_name("PORTC", 1).is_err());
    }

    #[test]
    fn adcon0_examples() {
        let d = decode_adcon0(0x00);
        assert_eq!((d.channel, d.go_done, d.enabled), (0, false, false));
        assert!(!d.unimplemented);

        let d = decode_adcon0(0x01);
        assert_eq!((d.channel, d.enabled), (0, true));

        // 0b00001101: channel 3, ADON set.
        let d = decode_adcon0(0x0D);
        assert_eq!((d.channel, d.enabled), (3, true));
    }

    #[test]
    fn adcon0_channel_extraction_is_exhaustive() {
        for b in 0..=255u8 {
            let d = decode_adcon0(b);
            assert_eq!(d.channel, (b >> 2) & 0x0F);
            assert_eq!(d.unimplemented, d.channel >= 13);
            assert_eq!(d.go_done, b & 0x02 != 0);
            assert_eq!(d.enabled, b & 0x01 != 0);
        }
    }

    #[test]
    fn adcon1_port_map_rows() {
        assert_eq!(decode_adcon1(0x00).analog_map, [true; 13]);
        assert_eq!(decode_adcon1(0x00).analog_channel_count(), 13);
        // Rows 0000-0010 are identical.
        assert_eq!(decode_adcon1(0x01).analog_map, [true; 13]);
        assert_eq!(decode_adcon1(0x02).analog_map, [true; 13]);
        // 1111: all digital.
        assert_eq!(decode_adcon1(0x0F).analog_map, [false; 13]);
        // 1110: only AN0 analog.
        let m = decode_adcon1(0x0E).analog_map;
        assert!(m[0]);
        assert!(m[1..].iter().all(|&a| !a));
    }

    #[test]
    fn adcon1_vref_bits() {
        let d = decode_adcon1(0x30);
        assert!(d.vref_minus_external);
        assert!(d.vref_plus_external);
        let d = decode_adcon1(0x10);
        assert!(!d.vref_minus_external);
        assert!(d.vref_plus_external);
    }

    /// Increasing PCFG never converts a digital channel back to analog.
    #[test]
    fn adcon1_map_is_monotone_in_pcfg() {
        for pcfg in 2..15u8 {
            let lo = decode_adcon1(pcfg).analog_map;
            let hi = decode_adcon1(pcfg + 1).analog_map;
            for k in 0..13 {
                assert!(
                    !hi[k] || lo[k],
                    "PCFG {} -> {} turned AN{} analog again",
                    pcfg,
                    pcfg + 1,
                    k
                );
            }
        }
    }

    #[test]
    fn adcon2_examples() {
        let d = decode_adcon2(0xA6);
        assert!(d.right_justified);
        assert_eq!(d.acquisition_tad, 8);
        assert_eq!(d.clock_divider, ClockDivider::Fosc64);

        let d = decode_adcon2(0x00);
        assert!(!d.right_justified);
        assert_eq!(d.acquisition_tad, 0);
        assert_eq!(d.clock_divider, ClockDivider::Fosc2);

        // 0b10111111: right-justified, 20 TAD, FRC.
        let d = decode_adcon2(0xBF);
        assert!(d.right_justified);
        assert_eq!(d.acquisition_tad, 20);
        assert_eq!(d.clock_divider, ClockDivider::Frc);
    }

    /// Re-encoding reproduces bits 7 and 5-0 for every byte (bit 6 is
    /// unimplemented and reads as zero).
    #[test]
    fn adcon2_reencode_round_trips_defined_bits() {
        for b in 0..=255u8 {
            assert_eq!(decode_adcon2(b).encode(), b & 0xBF, "byte {b:#04X}");
        }
    }

    #[test]
    fn t0con_examples() {
        let d = decode_t0con(0x47);
        assert!(!d.enabled);
        assert!(d.eight_bit_mode);
        assert_eq!(d.prescale, 256);

        let d = decode_t0con(0xC7);
        assert!(d.enabled);
        assert!(d.eight_bit_mode);
        assert_eq!(d.prescale, 256);

        // PSA set: prescaler bypassed.
        assert_eq!(decode_t0con(0x08).prescale, 1);
    }

    /// 0x47 and 0xC7 differ only in the enable bit.
    #[test]
    fn t0con_enable_bit_only() {
        let off = decode_t0con(0x47);
        let on = decode_t0con(0xC7);
        assert!(!off.enabled && on.enabled);
        assert_eq!(off.eight_bit_mode, on.eight_bit_mode);
        assert_eq!(off.prescale, on.prescale);
    }

    #[test]
    fn intcon_examples() {
        let d = decode_intcon(0x00);
        assert!(
            !(d.gie || d.peie || d.tmr0ie || d.int0ie || d.rbie || d.tmr0if || d.int0if || d.rbif)
        );

        let d = decode_intcon(0xE0);
        assert!(d.gie && d.peie && d.tmr0ie);
        assert!(!(d.int0ie || d.rbie || d.tmr0if || d.int0if || d.rbif));

        let d = decode_intcon(0x04);
        assert!(d.tmr0if);
        assert!(!(d.gie || d.peie || d.tmr0ie || d.int0ie || d.rbie || d.int0if || d.rbif));
    }

    #[test]
    fn adc_config_merges_registers() {
        let cfg = AdcConfig::from_registers(&RegisterFile::firmware_defaults()).unwrap();
        assert_eq!(cfg.channel, 0);
        assert!(cfg.enabled);
        assert!(cfg.right_justified);
        assert_eq!(cfg.acquisition_tad, 8);
        assert_eq!(cfg.clock_divider, ClockDivider::Fosc64);
        assert_eq!(cfg.analog_channel_count, 13);
        assert!(!cfg.vref_plus_external && !cfg.vref_minus_external);
    }

    #[test]
    fn adc_config_rejects_enabled_unimplemented_channel() {
        let mut regs = RegisterFile::firmware_defaults();
        regs.adcon0 = 0x3D; // channel 15, ADON set
        assert_eq!(
            AdcConfig::from_registers(&regs),
            Err(RegisterError::UnimplementedChannel { channel: 15 })
        );
        regs.adcon0 = 0x3C; // channel 15, ADON clear: stored but inert
        assert!(AdcConfig::from_registers(&regs).is_ok());
    }

    #[test]
    fn validate_accepts_firmware_defaults() {
        assert!(validate_firmware_config(&RegisterFile::firmware_defaults()).is_empty());
    }

    #[test]
    fn validate_reports_single_deviation() {
        let mut regs = RegisterFile::firmware_defaults();
        regs.trisa = 0x00;
        let findings = validate_firmware_config(&regs);
        assert_eq!(findings.len(), 1);
        assert!(findings[0].contains("PORTA not configured as input"));
    }

    #[test]
    fn validate_flags_zeroed_file() {
        let regs = RegisterFile {
            adcon0: 0,
            adcon1: 0,
            adcon2: 0,
            t0con: 0,
            intcon: 0,
            intcon2: 0,
            intcon3: 0,
            trisa: 0,
            trisb: 0,
            tmr0l_reload: 0,
        };
        assert!(validate_firmware_config(&regs).len() >= 4);
    }

    #[test]
    fn timer0_config_from_registers() {
        let cfg = Timer0Config::from_registers(&RegisterFile::firmware_defaults());
        assert!(cfg.enabled && cfg.eight_bit_mode && cfg.overflow_interrupt_enabled);
        assert_eq!(cfg.prescale, 256);
        assert_eq!(cfg.reload, 100);
    }
}
