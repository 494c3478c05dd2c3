//! Small JSON helpers for model output: locating a JSON value embedded in
//! prose and formatting values the way Python's `json.dumps` does.

use std::io;

use serde::Serialize;
use serde_json::Value;

/// Returns the end (exclusive) of the balanced bracket run starting at `start`.
fn balanced_end(text: &str, start: usize, open: u8, close: u8) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        if b == b'"' {
            in_string = true;
        } else if b == open {
            depth += 1;
        } else if b == close {
            depth -= 1;
            if depth == 0 {
                return Some(i + 1);
            }
        }
    }
    None
}

fn first_balanced(text: &str, open: u8, close: u8) -> Option<Value> {
    let bytes = text.as_bytes();
    (0..bytes.len())
        .filter(|&i| bytes[i] == open)
        .filter_map(|i| balanced_end(text, i, open, close).map(|end| &text[i..end]))
        .find_map(|candidate| serde_json::from_str::<Value>(candidate).ok())
}

/// First balanced `{...}` in `text` that parses as a JSON object.
pub fn find_json_object(text: &str) -> Option<Value> {
    first_balanced(text, b'{', b'}').filter(Value::is_object)
}

/// First balanced `[...]` in `text` that parses as a JSON array.
pub fn find_json_array(text: &str) -> Option<Value> {
    first_balanced(text, b'[', b']').filter(Value::is_array)
}

struct PythonFormatter;

impl serde_json::ser::Formatter for PythonFormatter {
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            w.write_all(b", ")
        }
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if first {
            Ok(())
        } else {
            w.write_all(b", ")
        }
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }
}

/// Serializes like `json.dumps(value, ensure_ascii=False)`.
pub fn python_dumps<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, PythonFormatter);
    value
        .serialize(&mut ser)
        .expect("serializing to a Vec does not fail");
    String::from_utf8(out).expect("serde_json writes UTF-8")
}
