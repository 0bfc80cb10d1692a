//! Wireshark-style hex dumps.
//!
//! Each line is `<offset>  <up to 16 hex bytes>   <ascii>`; the byte column is
//! separated from the ascii column by three or more spaces. A new packet starts
//! after a blank line or whenever the offset resets to zero.

use crate::{Error, Result};

fn byte_section(line: &str) -> &str {
    match line.find("   ") {
        Some(i) => &line[..i],
        None => line,
    }
}

pub fn parse_hexdump(text: &str) -> Result<Vec<Vec<u8>>> {
    let mut packets: Vec<Vec<u8>> = Vec::new();
    let mut current: Option<Vec<u8>> = None;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            packets.extend(current.take());
            continue;
        }
        let mut tokens = byte_section(line.trim_start()).split_whitespace();
        let offset_tok = tokens.next().unwrap_or_default();
        let offset = usize::from_str_radix(offset_tok, 16)
            .map_err(|_| Error::Parse { line: line_no, message: format!("bad offset {offset_tok:?}") })?;
        if offset == 0 {
            packets.extend(current.take());
        }
        let buf = current.get_or_insert_with(Vec::new);
        if offset != buf.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("offset 0x{offset:x} does not follow previous line (expected 0x{:x})", buf.len()),
            });
        }
        for tok in tokens {
            if tok.len() != 2 || !tok.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(Error::Parse { line: line_no, message: format!("non-hex byte {tok:?}") });
            }
            buf.push(u8::from_str_radix(tok, 16).expect("validated hex"));
        }
    }
    packets.extend(current);
    Ok(packets)
}

/// Renders one packet in the layout [`parse_hexdump`] reads.
pub fn render_hexdump(bytes: &[u8]) -> String {
    let mut out = String::new();
    for (row, chunk) in bytes.chunks(16).enumerate() {
        out.push_str(&format!("{:04x}  ", row * 16));
        let mut hex = String::with_capacity(49);
        for (i, b) in chunk.iter().enumerate() {
            if i == 8 {
                hex.push(' ');
            }
            hex.push_str(&format!("{b:02x}"));
            if i + 1 < chunk.len() {
                hex.push(' ');
            }
        }
        out.push_str(&format!("{hex:<48}   "));
        out.extend(chunk.iter().map(|&b| if b.is_ascii_graphic() { b as char } else { '.' }));
        out.push('\n');
    }
    out
}

pub fn render_hexdump_many(packets: &[Vec<u8>]) -> String {
    packets.iter().map(|p| render_hexdump(p)).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_short_packet() {
        assert_eq!(parse_hexdump("0000  00 01 02   ...\n").unwrap(), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn blank_line_separates_packets() {
        let text = "0000  aa bb   ..\n\n0000  cc   .\n";
        assert_eq!(parse_hexdump(text).unwrap(), vec![vec![0xaa, 0xbb], vec![0xcc]]);
    }

    #[test]
    fn offset_reset_separates_packets() {
        let text = "0000  aa\n0000  bb\n";
        assert_eq!(parse_hexdump(text).unwrap(), vec![vec![0xaa], vec![0xbb]]);
    }

    #[test]
    fn non_hex_reports_line() {
        let text = "0000  00 01\n\n0000  0g 01\n";
        match parse_hexdump(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn full_frame_round_trip() {
        let bytes: Vec<u8> = (0..1518u32).map(|i| (i * 7 % 256) as u8).collect();
        let parsed = parse_hexdump(&render_hexdump(&bytes)).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].len(), 1518);
        assert_eq!(parsed[0], bytes);
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(bytes in proptest::collection::vec(any::<u8>(), 1..1518)) {
            prop_assert_eq!(parse_hexdump(&render_hexdump(&bytes)).unwrap(), vec![bytes]);
        }

        #[test]
        fn many_packets_round_trip(pkts in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 1..100), 1..5)) {
            prop_assert_eq!(parse_hexdump(&render_hexdump_many(&pkts)).unwrap(), pkts);
        }
    }
}
