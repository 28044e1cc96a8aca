use unicode_normalization::UnicodeNormalization;

/// NFC-normalizes `text`, collapses whitespace runs to a single space and trims the ends.
pub fn normalize_text(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    for word in nfc.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}
