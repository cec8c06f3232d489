//! Canonical JSON: object keys sorted lexicographically, arrays in emission
//! order. Routing every serialization through [`serde_json::Value`] gives the
//! key ordering for free since its map type is ordered.

use serde::Serialize;

fn to_value<T: Serialize + ?Sized>(value: &T) -> serde_json::Value {
    // Our types only contain string-keyed maps, so this cannot fail.
    serde_json::to_value(value).expect("value serializes to JSON")
}

/// Compact canonical form, used for checksums and the wire protocol.
pub fn to_string<T: Serialize + ?Sized>(value: &T) -> String {
    to_value(value).to_string()
}

/// Indented canonical form with a trailing newline, used for files and
/// command output.
pub fn to_pretty<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(&to_value(value)).expect("value serializes to JSON");
    out.push('\n');
    out
}
