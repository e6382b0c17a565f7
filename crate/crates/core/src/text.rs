/// Lowercased alphanumeric word tokens. Shared by the lexical scorers and
/// the mock providers so they agree on what a "token" is.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}
