//! Integer minor units and their two-decimal display form.

/// `1250` -> `"12.50"`.
pub fn format_minor(amount: u64) -> String {
    format!("{}.{:02}", amount / 100, amount % 100)
}

/// Inverse of [`format_minor`]; requires exactly two decimals.
pub fn parse_minor(text: &str) -> Option<u64> {
    let (whole, frac) = text.split_once('.')?;
    if whole.is_empty() || frac.len() != 2 || !whole.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    whole
        .parse::<u64>()
        .ok()?
        .checked_mul(100)?
        .checked_add(frac.parse::<u64>().ok()?)
}
