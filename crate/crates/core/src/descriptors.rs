//! The device's USB descriptor set: build, serialize byte-exactly, and parse.
//!
//! The emulated device reports VID 0x1234 / PID 0x0001, one bus-powered
//! configuration (remote wakeup, 100 mA), one HID interface with two
//! interrupt endpoints (IN 0x81, OUT 0x01, 4-byte packets, 1 ms interval),
//! and a 47-byte vendor-page report descriptor declaring 4 input, 4 output
//! and 2 feature report bytes. String descriptors carry the manufacturer and
//! product names in UTF-16LE.
//!
//! Parsers reject truncated items, long items, unbalanced collections and
//! total-length mismatches; serialize∘parse is the identity on everything
//! this module can produce.

use thiserror::Error;

/// Device descriptor type code.
pub const DT_DEVICE: u8 = 1;
pub const DT_CONFIGURATION: u8 = 2;
pub const DT_STRING: u8 = 3;
pub const DT_INTERFACE: u8 = 4;
pub const DT_ENDPOINT: u8 = 5;
/// HID class descriptor type (lives inside the configuration tree).
pub const DT_HID: u8 = 0x21;
/// HID report descriptor type (fetched with a class-specific GET_DESCRIPTOR).
pub const DT_REPORT: u8 = 0x22;

/// Control endpoint max packet size. The descriptor source leaves the symbol
/// unvalued; 8 is the smallest legal full-speed size and this chip family's
/// conventional default.
pub const EP0_PACKET_SIZE: u8 = 8;
/// Interrupt endpoint max packet size, matching the 4-byte reports.
pub const HID_PACKET_SIZE: u16 = 4;
/// Serialized length of the report descriptor built here.
pub const REPORT_DESCRIPTOR_LEN: u16 = 47;

pub const VENDOR_ID: u16 = 0x1234;
pub const PRODUCT_ID: u16 = 0x0001;
pub const MANUFACTURER: &str = "mikroElektronika";
pub const PRODUCT: &str = "mikroC HID Library test";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DescriptorError {
    #[error("descriptor is {got} bytes, expected {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("descriptor type byte is {got:#04X}, expected {expected:#04X}")]
    WrongType { expected: u8, got: u8 },
    #[error("bLength {got} does not match the {expected}-byte layout")]
    BadBLength { expected: u8, got: u8 },
    #[error("input ends before the configuration descriptor")]
    MissingConfiguration,
    #[error("wTotalLength says {declared} bytes but {actual} were consumed")]
    TotalLengthMismatch { declared: u16, actual: usize },
    #[error("unknown descriptor type {ty:#04X} at offset {offset}")]
    UnknownType { ty: u8, offset: usize },
    #[error("descriptor at offset {offset} runs past the end of input")]
    Truncated { offset: usize },
    #[error("report item at offset {offset} is truncated ({missing} data byte(s) missing)")]
    TruncatedItem { offset: usize, missing: usize },
    #[error("long item (prefix 0xFE) at offset {offset} is not supported")]
    LongItem { offset: usize },
    #[error("reserved item type at offset {offset} (prefix {prefix:#04X})")]
    ReservedItemType { offset: usize, prefix: u8 },
    #[error("END_COLLECTION at offset {offset} without matching COLLECTION")]
    UnbalancedEndCollection { offset: usize },
    #[error("{depth} collection(s) left open at end of descriptor")]
    UnclosedCollection { depth: usize },
    #[error("item data {data:#X} does not fit in {size} byte(s)")]
    DataTooWide { data: u32, size: u8 },
    #[error("string of {0} characters exceeds the 126-character descriptor limit")]
    StringTooLong(usize),
    #[error("string descriptor has odd payload length {0}")]
    OddStringPayload(usize),
    #[error("endpoint count {0} exceeds what one wTotalLength word can describe")]
    TooManyEndpoints(usize),
}

/// The standard 18-byte device descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceDescriptor {
    pub bcd_usb: u16,
    pub device_class: u8,
    pub device_subclass: u8,
    pub device_protocol: u8,
    pub max_packet_size0: u8,
    pub vid: u16,
    pub pid: u16,
    pub bcd_device: u16,
    pub i_manufacturer: u8,
    pub i_product: u8,
    pub i_serial: u8,
    pub num_configurations: u8,
}

impl DeviceDescriptor {
    pub fn serialize(&self) -> [u8; 18] {
        let mut b = [0u8; 18];
        b[0] = 18;
        b[1] = DT_DEVICE;
        b[2..4].copy_from_slice(&self.bcd_usb.to_le_bytes());
        b[4] = self.device_class;
        b[5] = self.device_subclass;
        b[6] = self.device_protocol;
        b[7] = self.max_packet_size0;
        b[8..10].copy_from_slice(&self.vid.to_le_bytes());
        b[10..12].copy_from_slice(&self.pid.to_le_bytes());
        b[12..14].copy_from_slice(&self.bcd_device.to_le_bytes());
        b[14] = self.i_manufacturer;
        b[15] = self.i_product;
        b[16] = self.i_serial;
        b[17] = self.num_configurations;
        b
    }

    pub fn parse(bytes: &[u8]) -> Result<DeviceDescriptor, DescriptorError> {
        if bytes.len() != 18 {
            return Err(DescriptorError::WrongLength {
                expected: 18,
                got: bytes.len(),
            });
        }
        if bytes[0] != 18 {
            return Err(DescriptorError::BadBLength {
                expected: 18,
                got: bytes[0],
            });
        }
        if bytes[1] != DT_DEVICE {
            return Err(DescriptorError::WrongType {
                expected: DT_DEVICE,
                got: bytes[1],
            });
        }
        Ok(DeviceDescriptor {
            bcd_usb: u16::from_le_bytes([bytes[2], bytes[3]]),
            device_class: bytes[4],
            device_subclass: bytes[5],
            device_protocol: bytes[6],
            max_packet_size0: bytes[7],
            vid: u16::from_le_bytes([bytes[8], bytes[9]]),
            pid: u16::from_le_bytes([bytes[10], bytes[11]]),
            bcd_device: u16::from_le_bytes([bytes[12], bytes[13]]),
            i_manufacturer: bytes[14],
            i_product: bytes[15],
            i_serial: bytes[16],
            num_configurations: bytes[17],
        })
    }
}

/// Endpoint transfer type, bmAttributes bits 1-0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferType {
    Control,
    Isochronous,
    Bulk,
    Interrupt,
}

impl TransferType {
    fn bits(self) -> u8 {
        match self {
            TransferType::Control => 0,
            TransferType::Isochronous => 1,
            TransferType::Bulk => 2,
            TransferType::Interrupt => 3,
        }
    }

    fn from_bits(b: u8) -> TransferType {
        match b & 0x03 {
            0 => TransferType::Control,
            1 => TransferType::Isochronous,
            2 => TransferType::Bulk,
            _ => TransferType::Interrupt,
        }
    }
}

/// A 7-byte endpoint descriptor. `address` bit 7 carries the direction
/// (1 = IN), bits 3-0 the endpoint number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndpointDescriptor {
    pub address: u8,
    pub transfer_type: TransferType,
    pub max_packet_size: u16,
    pub interval_ms: u8,
}

impl EndpointDescriptor {
    pub fn serialize(&self) -> [u8; 7] {
        let mps = self.max_packet_size.to_le_bytes();
        [
            7,
            DT_ENDPOINT,
            self.address,
            self.transfer_type.bits(),
            mps[0],
            mps[1],
            self.interval_ms,
        ]
    }

    pub fn parse(bytes: &[u8]) -> Result<EndpointDescriptor, DescriptorError> {
        if bytes.len() != 7 {
            return Err(DescriptorError::WrongLength {
                expected: 7,
                got: bytes.len(),
            });
        }
        if bytes[0] != 7 {
            return Err(DescriptorError::BadBLength {
                expected: 7,
                got: bytes[0],
            });
        }
        if bytes[1] != DT_ENDPOINT {
            return Err(DescriptorError::WrongType {
                expected: DT_ENDPOINT,
                got: bytes[1],
            });
        }
        Ok(EndpointDescriptor {
            address: bytes[2],
            transfer_type: TransferType::from_bits(bytes[3]),
            max_packet_size: u16::from_le_bytes([bytes[4], bytes[5]]),
            interval_ms: bytes[6],
        })
    }
}

/// Configuration descriptor body (wTotalLength is derived, not stored).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfigurationDescriptor {
    pub num_interfaces: u8,
    pub configuration_value: u8,
    pub i_configuration: u8,
    /// Bit 7 always set; bit 6 self-powered; bit 5 remote wakeup.
    pub attributes: u8,
    /// Units of 2 mA.
    pub max_power: u8,
}

/// Interface descriptor body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterfaceDescriptor {
    pub interface_number: u8,
    pub alternate_setting: u8,
    pub interface_class: u8,
    pub interface_subclass: u8,
    pub interface_protocol: u8,
    pub i_interface: u8,
}

/// HID class descriptor (the 9-byte one inside the configuration tree).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HidClassDescriptor {
    pub bcd_hid: u16,
    pub country_code: u8,
    /// Type of the single subordinate descriptor (0x22 = report).
    pub descriptor_type: u8,
    /// Length of that subordinate descriptor.
    pub descriptor_length: u16,
}

/// The full configuration hierarchy: configuration, one interface, one HID
/// class descriptor, and the interface's endpoints, serialized back to back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigurationTree {
    pub config: ConfigurationDescriptor,
    pub interface: InterfaceDescriptor,
    pub hid: HidClassDescriptor,
    pub endpoints: Vec<EndpointDescriptor>,
}

impl ConfigurationTree {
    /// 9 + 9 + 9 + 7 × endpoint count.
    pub fn total_length(&self) -> Result<u16, DescriptorError> {
        let n = self.endpoints.len();
        u16::try_from(27 + 7 * n).map_err(|_| DescriptorError::TooManyEndpoints(n))
    }

    pub fn serialize(&self) -> Result<Vec<u8>, DescriptorError> {
        let total = self.total_length()?;
        let mut out = Vec::with_capacity(total as usize);
        out.extend_from_slice(&[9, DT_CONFIGURATION]);
        out.extend_from_slice(&total.to_le_bytes());
        out.extend_from_slice(&[
            self.config.num_interfaces,
            self.config.configuration_value,
            self.config.i_configuration,
            self.config.attributes,
            self.config.max_power,
        ]);
        out.extend_from_slice(&[
            9,
            DT_INTERFACE,
            self.interface.interface_number,
            self.interface.alternate_setting,
            self.endpoints.len() as u8,
            self.interface.interface_class,
            self.interface.interface_subclass,
            self.interface.interface_protocol,
            self.interface.i_interface,
        ]);
        out.extend_from_slice(&[9, DT_HID]);
        out.extend_from_slice(&self.hid.bcd_hid.to_le_bytes());
        out.extend_from_slice(&[self.hid.country_code, 1, self.hid.descriptor_type]);
        out.extend_from_slice(&self.hid.descriptor_length.to_le_bytes());
        for ep in &self.endpoints {
            out.extend_from_slice(&ep.serialize());
        }
        debug_assert_eq!(out.len(), total as usize);
        Ok(out)
    }
}

/// Strict parse of a serialized configuration tree: every descriptor type
/// must be known and wTotalLength must match the bytes consumed.
pub fn parse_configuration_tree(bytes: &[u8]) -> Result<ConfigurationTree, DescriptorError> {
    let (tree, warnings) = parse_configuration_tree_inner(bytes, false)?;
    debug_assert!(warnings.is_empty());
    Ok(tree)
}

/// Lenient parse: unknown descriptor types are skipped with a warning
/// instead of failing, as long as their bLength stays in bounds.
pub fn parse_configuration_tree_lenient(
    bytes: &[u8],
) -> Result<(ConfigurationTree, Vec<String>), DescriptorError> {
    parse_configuration_tree_inner(bytes, true)
}

fn parse_configuration_tree_inner(
    bytes: &[u8],
    lenient: bool,
) -> Result<(ConfigurationTree, Vec<String>), DescriptorError> {
    if bytes.len() < 9 || bytes[1] != DT_CONFIGURATION {
        return Err(DescriptorError::MissingConfiguration);
    }
    if bytes[0] != 9 {
        return Err(DescriptorError::BadBLength {
            expected: 9,
            got: bytes[0],
        });
    }
    let declared_total = u16::from_le_bytes([bytes[2], bytes[3]]);
    let config = ConfigurationDescriptor {
        num_interfaces: bytes[4],
        configuration_value: bytes[5],
        i_configuration: bytes[6],
        attributes: bytes[7],
        max_power: bytes[8],
    };

    let mut warnings = Vec::new();
    let mut interface: Option<(InterfaceDescriptor, u8)> = None;
    let mut hid: Option<HidClassDescriptor> = None;
    let mut endpoints = Vec::new();
    let mut offset = 9usize;
    while offset < bytes.len() {
        let b_length = bytes[offset] as usize;
        if b_length < 2 || offset + b_length > bytes.len() {
            return Err(DescriptorError::Truncated { offset });
        }
        let chunk = &bytes[offset..offset + b_length];
        match chunk[1] {
            DT_INTERFACE => {
                if b_length != 9 {
                    return Err(DescriptorError::BadBLength {
                        expected: 9,
                        got: chunk[0],
                    });
                }
                interface = Some((
                    InterfaceDescriptor {
                        interface_number: chunk[2],
                        alternate_setting: chunk[3],
                        interface_class: chunk[5],
                        interface_subclass: chunk[6],
                        interface_protocol: chunk[7],
                        i_interface: chunk[8],
                    },
                    chunk[4], // bNumEndpoints, checked against what we collect
                ));
            }
            DT_HID => {
                if b_length != 9 {
                    return Err(DescriptorError::BadBLength {
                        expected: 9,
                        got: chunk[0],
                    });
                }
                hid = Some(HidClassDescriptor {
                    bcd_hid: u16::from_le_bytes([chunk[2], chunk[3]]),
                    country_code: chunk[4],
                    descriptor_type: chunk[6],
                    descriptor_length: u16::from_le_bytes([chunk[7], chunk[8]]),
                });
            }
            DT_ENDPOINT => {
                endpoints.push(EndpointDescriptor::parse(chunk)?);
            }
            other => {
                if lenient {
                    warnings.push(format!(
                        "skipped unknown descriptor type {other:#04X} ({b_length} bytes) at offset {offset}"
                    ));
                } else {
                    return Err(DescriptorError::UnknownType { ty: other, offset });
                }
            }
        }
        offset += b_length;
    }

    if declared_total as usize != offset {
        return Err(DescriptorError::TotalLengthMismatch {
            declared: declared_total,
            actual: offset,
        });
    }
    let (interface, declared_eps) = interface.ok_or(DescriptorError::MissingConfiguration)?;
    let hid = hid.ok_or(DescriptorError::MissingConfiguration)?;
    if declared_eps as usize != endpoints.len() {
        return Err(DescriptorError::WrongLength {
            expected: declared_eps as usize,
            got: endpoints.len(),
        });
    }
    Ok((
        ConfigurationTree {
            config,
            interface,
            hid,
            endpoints,
        },
        warnings,
    ))
}

/// Short-item type, prefix bits 3-2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HidItemType {
    Main,
    Global,
    Local,
}

impl HidItemType {
    fn bits(self) -> u8 {
        match self {
            HidItemType::Main => 0,
            HidItemType::Global => 1,
            HidItemType::Local => 2,
        }
    }
}

/// One short item of the report descriptor grammar. The prefix byte is
/// `(tag << 4) | (type << 2) | size_code` with size codes 0/1/2/3 for
/// 0/1/2/4 data bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HidItem {
    pub tag: u8,
    pub item_type: HidItemType,
    /// Data length in bytes: 0, 1, 2 or 4.
    pub size: u8,
    /// Data interpreted as an unsigned little-endian integer.
    pub data: u32,
}

// Main item tags.
const TAG_INPUT: u8 = 0x8;
const TAG_OUTPUT: u8 = 0x9;
const TAG_COLLECTION: u8 = 0xA;
const TAG_FEATURE: u8 = 0xB;
const TAG_END_COLLECTION: u8 = 0xC;
// Global item tags.
const TAG_USAGE_PAGE: u8 = 0x0;
const TAG_LOGICAL_MINIMUM: u8 = 0x1;
const TAG_LOGICAL_MAXIMUM: u8 = 0x2;
const TAG_REPORT_SIZE: u8 = 0x7;
const TAG_REPORT_COUNT: u8 = 0x9;
// Local item tags.
const TAG_USAGE: u8 = 0x0;

impl HidItem {
    fn size_code(size: u8) -> u8 {
        match size {
            4 => 3,
            s => s,
        }
    }

    pub fn prefix(&self) -> u8 {
        (self.tag << 4) | (self.item_type.bits() << 2) | Self::size_code(self.size)
    }

    fn global(tag: u8, size: u8, data: u32) -> HidItem {
        HidItem {
            tag,
            item_type: HidItemType::Global,
            size,
            data,
        }
    }

    fn local(tag: u8, size: u8, data: u32) -> HidItem {
        HidItem {
            tag,
            item_type: HidItemType::Local,
            size,
            data,
        }
    }

    fn main(tag: u8, size: u8, data: u32) -> HidItem {
        HidItem {
            tag,
            item_type: HidItemType::Main,
            size,
            data,
        }
    }
}

/// Per-direction report sizes declared by the main items, in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReportSummary {
    pub input_bytes: u32,
    pub output_bytes: u32,
    pub feature_bytes: u32,
}

/// A parsed (or built) report descriptor: the ordered item list plus the
/// derived report-size summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportDescriptor {
    pub items: Vec<HidItem>,
}

impl ReportDescriptor {
    pub fn serialize(&self) -> Result<Vec<u8>, DescriptorError> {
        let mut out = Vec::new();
        for item in &self.items {
            let max: u64 = match item.size {
                0 => 0,
                1 => 0xFF,
                2 => 0xFFFF,
                4 => 0xFFFF_FFFF,
                s => {
                    return Err(DescriptorError::DataTooWide {
                        data: item.data,
                        size: s,
                    })
                }
            };
            if item.data as u64 > max {
                return Err(DescriptorError::DataTooWide {
                    data: item.data,
                    size: item.size,
                });
            }
            out.push(item.prefix());
            out.extend_from_slice(&item.data.to_le_bytes()[..item.size as usize]);
        }
        Ok(out)
    }

    /// Accumulate REPORT_SIZE × REPORT_COUNT at each INPUT/OUTPUT/FEATURE
    /// main item, in bytes.
    pub fn summary(&self) -> ReportSummary {
        let mut size_bits = 0u32;
        let mut count = 0u32;
        let mut s = ReportSummary::default();
        for item in &self.items {
            match item.item_type {
                HidItemType::Global => match item.tag {
                    TAG_REPORT_SIZE => size_bits = item.data,
                    TAG_REPORT_COUNT => count = item.data,
                    _ => {}
                },
                HidItemType::Main => {
                    let bytes = size_bits * count / 8;
                    match item.tag {
                        TAG_INPUT => s.input_bytes += bytes,
                        TAG_OUTPUT => s.output_bytes += bytes,
                        TAG_FEATURE => s.feature_bytes += bytes,
                        _ => {}
                    }
                }
                HidItemType::Local => {}
            }
        }
        s
    }
}

/// Decode a stream of short items. Rejects long items (prefix 0xFE),
/// reserved item types, truncated data, and unbalanced collections.
pub fn parse_report_descriptor(bytes: &[u8]) -> Result<ReportDescriptor, DescriptorError> {
    let mut items = Vec::new();
    let mut depth = 0usize;
    let mut offset = 0usize;
    while offset < bytes.len() {
        let prefix = bytes[offset];
        if prefix == 0xFE {
            return Err(DescriptorError::LongItem { offset });
        }
        let type_bits = (prefix >> 2) & 0x03;
        let item_type = match type_bits {
            0 => HidItemType::Main,
            1 => HidItemType::Global,
            2 => HidItemType::Local,
            _ => return Err(DescriptorError::ReservedItemType { offset, prefix }),
        };
        let size = match prefix & 0x03 {
            3 => 4usize,
            s => s as usize,
        };
        if offset + 1 + size > bytes.len() {
            return Err(DescriptorError::TruncatedItem {
                offset,
                missing: offset + 1 + size - bytes.len(),
            });
        }
        let mut data = 0u32;
        for (i, &b) in bytes[offset + 1..offset + 1 + size].iter().enumerate() {
            data |= (b as u32) << (8 * i);
        }
        let tag = prefix >> 4;
        if item_type == HidItemType::Main {
            if tag == TAG_COLLECTION {
                depth += 1;
            } else if tag == TAG_END_COLLECTION {
                depth = depth
                    .checked_sub(1)
                    .ok_or(DescriptorError::UnbalancedEndCollection { offset })?;
            }
        }
        items.push(HidItem {
            tag,
            item_type,
            size: size as u8,
            data,
        });
        offset += 1 + size;
    }
    if depth != 0 {
        return Err(DescriptorError::UnclosedCollection { depth });
    }
    Ok(ReportDescriptor { items })
}

/// Encode a string descriptor: byte 0 = 2 + 2×len, byte 1 = type, then
/// UTF-16LE code units. Limited to 126 code units by the length byte.
pub fn encode_string_descriptor(s: &str) -> Result<Vec<u8>, DescriptorError> {
    let units: Vec<u16> = s.encode_utf16().collect();
    if units.len() > 126 {
        return Err(DescriptorError::StringTooLong(units.len()));
    }
    let mut out = Vec::with_capacity(2 + 2 * units.len());
    out.push(2 + 2 * units.len() as u8);
    out.push(DT_STRING);
    for u in units {
        out.extend_from_slice(&u.to_le_bytes());
    }
    Ok(out)
}

/// Decode a string descriptor back to text (lossy on unpaired surrogates).
pub fn decode_string_descriptor(bytes: &[u8]) -> Result<String, DescriptorError> {
    if bytes.len() < 2 {
        return Err(DescriptorError::WrongLength {
            expected: 2,
            got: bytes.len(),
        });
    }
    if bytes[1] != DT_STRING {
        return Err(DescriptorError::WrongType {
            expected: DT_STRING,
            got: bytes[1],
        });
    }
    if bytes[0] as usize != bytes.len() {
        return Err(DescriptorError::BadBLength {
            expected: bytes.len().min(255) as u8,
            got: bytes[0],
        });
    }
    let payload = &bytes[2..];
    if !payload.len().is_multiple_of(2) {
        return Err(DescriptorError::OddStringPayload(payload.len()));
    }
    let units: Vec<u16> = payload
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    Ok(String::from_utf16_lossy(&units))
}

/// String descriptor index 0 (the language ID list) plus the indexed strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StringDescriptorTable {
    pub lang_ids: Vec<u16>,
    /// strings[0] is descriptor index 1, and so on.
    pub strings: Vec<String>,
}

impl StringDescriptorTable {
    /// Serialized descriptor for `index`, or `None` when out of range.
    pub fn descriptor(&self, index: u8) -> Option<Result<Vec<u8>, DescriptorError>> {
        if index == 0 {
            let mut out = vec![2 + 2 * self.lang_ids.len() as u8, DT_STRING];
            for id in &self.lang_ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
            Some(Ok(out))
        } else {
            self.strings
                .get(index as usize - 1)
                .map(|s| encode_string_descriptor(s))
        }
    }
}

/// Decode a language-ID (index 0) string descriptor.
pub fn decode_langid_descriptor(bytes: &[u8]) -> Result<Vec<u16>, DescriptorError> {
    if bytes.len() < 2 || bytes[1] != DT_STRING {
        return Err(DescriptorError::WrongType {
            expected: DT_STRING,
            got: bytes.get(1).copied().unwrap_or(0),
        });
    }
    if bytes[0] as usize != bytes.len() {
        return Err(DescriptorError::BadBLength {
            expected: bytes.len().min(255) as u8,
            got: bytes[0],
        });
    }
    let payload = &bytes[2..];
    if !payload.len().is_multiple_of(2) {
        return Err(DescriptorError::OddStringPayload(payload.len()));
    }
    Ok(payload
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect())
}

/// Everything the virtual device serves during enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub device: DeviceDescriptor,
    pub configuration: ConfigurationTree,
    pub report: ReportDescriptor,
    pub strings: StringDescriptorTable,
}

/// Build the emulated device's descriptor set.
///
/// Notes on two byte-level choices: LOGICAL_MAXIMUM is emitted little-endian
/// (FF 00) to honor its stated value of 255, and bcdHID is 0x0101 (release
/// 1.01).
pub fn build_descriptor_set() -> DescriptorSet {
    let device = DeviceDescriptor {
        bcd_usb: 0x0200,
        device_class: 0,
        device_subclass: 0,
        device_protocol: 0,
        max_packet_size0: EP0_PACKET_SIZE,
        vid: VENDOR_ID,
        pid: PRODUCT_ID,
        bcd_device: 0x0001,
        i_manufacturer: 1,
        i_product: 2,
        i_serial: 0,
        num_configurations: 1,
    };

    let configuration = ConfigurationTree {
        config: ConfigurationDescriptor {
            num_interfaces: 1,
            configuration_value: 1,
            i_configuration: 0,
            attributes: 0xA0, // bus powered, remote wakeup
            max_power: 50,    // 100 mA
        },
        interface: InterfaceDescriptor {
            interface_number: 0,
            alternate_setting: 0,
            interface_class: 3, // HID, not a boot device
            interface_subclass: 0,
            interface_protocol: 0,
            i_interface: 0,
        },
        hid: HidClassDescriptor {
            bcd_hid: 0x0101,
            country_code: 0,
            descriptor_type: DT_REPORT,
            descriptor_length: REPORT_DESCRIPTOR_LEN,
        },
        endpoints: vec![
            EndpointDescriptor {
                address: 0x81, // EP1 IN
                transfer_type: TransferType::Interrupt,
                max_packet_size: HID_PACKET_SIZE,
                interval_ms: 1,
            },
            EndpointDescriptor {
                address: 0x01, // EP1 OUT
                transfer_type: TransferType::Interrupt,
                max_packet_size: HID_PACKET_SIZE,
                interval_ms: 1,
            },
        ],
    };

    // Vendor usage page 0xFFA0, one application collection, and three
    // identical 0-255 byte-array blocks: 4 input, 4 output, 2 feature.
    let mut items = vec![
        HidItem::global(TAG_USAGE_PAGE, 2, 0xFFA0),
        HidItem::local(TAG_USAGE, 1, 0x01),
        HidItem::main(TAG_COLLECTION, 1, 0x01), // application
    ];
    for (usage, count, main_tag) in [
        (0x03u32, 4u32, TAG_INPUT),
        (0x04, 4, TAG_OUTPUT),
        (0x05, 2, TAG_FEATURE),
    ] {
        items.extend_from_slice(&[
            HidItem::local(TAG_USAGE, 1, usage),
            HidItem::global(TAG_LOGICAL_MINIMUM, 1, 0x00),
            HidItem::global(TAG_LOGICAL_MAXIMUM, 2, 0x00FF),
            HidItem::global(TAG_REPORT_SIZE, 1, 8),
            HidItem::global(TAG_REPORT_COUNT, 1, count),
            HidItem::main(main_tag, 1, 0x02), // data, variable, absolute
        ]);
    }
    items.push(HidItem::main(TAG_END_COLLECTION, 0, 0));

    DescriptorSet {
        device,
        configuration,
        report: ReportDescriptor { items },
        strings: StringDescriptorTable {
            lang_ids: vec![0x0409],
            strings: vec![MANUFACTURER.to_string(), PRODUCT.to_string()],
        },
    }
}
