//! Fixed-width text receipts.

use crate::money::{format_minor, parse_minor};
use crate::session::Receipt;

pub const WIDTH: usize = 40;
pub const HEADER: &str = "ARC CHECKOUT";

fn separator() -> String {
    "-".repeat(WIDTH)
}

// left text padded so that `right` ends at the last column
fn row(left: &str, right: &str) -> String {
    let room = WIDTH.saturating_sub(right.chars().count() + 1);
    let clean: String = left
        .chars()
        .map(|c| if c.is_control() { ' ' } else { c })
        .take(room)
        .collect();
    let pad = room - clean.chars().count();
    format!("{clean}{} {right}", " ".repeat(pad))
}

fn centered(text: &str) -> String {
    let n = text.chars().count().min(WIDTH);
    let left = (WIDTH - n) / 2;
    format!("{}{text}", " ".repeat(left))
}

/// Receipt as 40-column text: header, one line per item, the total, and a
/// footer with the receipt number and time of issue.
pub fn render_receipt(r: &Receipt) -> String {
    let mut out = vec![centered(HEADER), separator()];
    out.extend(r.lines.iter().map(|l| row(&l.name, &format_minor(l.unit_price))));
    out.push(separator());
    out.push(row(&format!("TOTAL {}", r.currency), &format_minor(r.total)));
    out.push(separator());
    out.push(format!("Receipt #{:06}", r.number));
    out.push(r.issued_at.format("%Y-%m-%d %H:%M:%S UTC").to_string());
    let mut text = out.join("\n");
    text.push('\n');
    text
}

/// Items, total and number read back from rendered text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedReceipt {
    pub lines: Vec<(String, u64)>,
    pub total: u64,
    pub number: u64,
}

impl ParsedReceipt {
    pub fn line_sum(&self) -> u64 {
        self.lines.iter().map(|(_, p)| p).sum()
    }
}

fn split_row(line: &str) -> Option<(String, u64)> {
    let (name, price) = line.trim_end().rsplit_once(' ')?;
    Some((name.trim_end().to_string(), parse_minor(price)?))
}

pub fn parse_receipt(text: &str) -> Option<ParsedReceipt> {
    let lines: Vec<&str> = text.lines().collect();
    let sep = separator();
    let marks: Vec<usize> = (0..lines.len()).filter(|&i| lines[i] == sep).collect();
    if marks.len() != 3 || lines.first()?.trim() != HEADER {
        return None;
    }
    let items = lines[marks[0] + 1..marks[1]]
        .iter()
        .map(|l| split_row(l))
        .collect::<Option<Vec<_>>>()?;
    let (label, total) = split_row(lines[marks[1] + 1])?;
    if !label.starts_with("TOTAL") {
        return None;
    }
    let number = lines.get(marks[2] + 1)?.strip_prefix("Receipt #")?.parse().ok()?;
    Some(ParsedReceipt {
        lines: items,
        total,
        number,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::ReceiptLine;
    use chrono::DateTime;

    fn receipt(items: &[(&str, u64)]) -> Receipt {
        Receipt {
            number: 42,
            session_id: "s".into(),
            lines: items
                .iter()
                .map(|&(n, p)| ReceiptLine {
                    name: n.into(),
                    unit_price: p,
                })
                .collect(),
            total: items.iter().map(|i| i.1).sum(),
            currency: "USD".into(),
            issued_at: DateTime::from_timestamp(1_700_000_000, 0).unwrap(),
        }
    }

    #[test]
    fn layout() {
        let text = render_receipt(&receipt(&[("Oat milk", 1250), ("Lemon", 330)]));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0].trim(), "ARC CHECKOUT");
        assert!(lines[2].starts_with("Oat milk") && lines[2].ends_with("12.50"));
        assert!(lines[3].ends_with(" 3.30"));
        assert!(lines[5].starts_with("TOTAL USD") && lines[5].ends_with("15.80"));
        assert_eq!(lines[7], "Receipt #000042");
        assert_eq!(lines[8], "2023-11-14 22:13:20 UTC");
        for l in &lines[1..7] {
            assert_eq!(l.chars().count(), WIDTH, "{l:?}");
        }
    }

    #[test]
    fn long_names_are_truncated_and_parse_back() {
        let long = "An extremely long product name that will not fit on one line";
        let r = receipt(&[(long, 99_999), ("Tab\tname", 5)]);
        let text = render_receipt(&r);
        assert!(text.lines().all(|l| l.chars().count() <= WIDTH));
        let p = parse_receipt(&text).unwrap();
        assert_eq!(p.total, 100_004);
        assert_eq!(p.line_sum(), p.total);
        assert_eq!(p.number, 42);
        assert!(long.starts_with(&p.lines[0].0));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_receipt("hello").is_none());
        assert!(parse_receipt("").is_none());
    }
}
