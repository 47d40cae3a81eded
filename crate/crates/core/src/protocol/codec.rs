//! Newline-delimited JSON framing.
//!
//! Every message is a single UTF-8 JSON object terminated by `\n`. A line
//! that fails to decode is reported with its raw bytes and the reader moves
//! on to the next line.

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::io::{self, BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("malformed message {:?}: {source}", String::from_utf8_lossy(.line))]
    Malformed {
        line: Vec<u8>,
        #[source]
        source: serde_json::Error,
    },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Serializes a message as one `\n`-terminated line.
pub fn encode<T: Serialize>(msg: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec(msg).expect("protocol messages always serialize");
    out.push(b'\n');
    out
}

/// Decodes one line; a trailing `\n` (and `\r`) is ignored.
pub fn decode<T: DeserializeOwned>(line: &[u8]) -> Result<T, CodecError> {
    let trimmed = line
        .strip_suffix(b"\n")
        .map(|l| l.strip_suffix(b"\r").unwrap_or(l))
        .unwrap_or(line);
    serde_json::from_slice(trimmed).map_err(|source| CodecError::Malformed { line: trimmed.to_vec(), source })
}

pub fn write_message<W: Write, T: Serialize>(w: &mut W, msg: &T) -> io::Result<()> {
    w.write_all(&encode(msg))?;
    w.flush()
}

/// Reads framed messages from a byte stream.
pub struct LineReader<R> {
    inner: R,
    buf: Vec<u8>,
}

impl<R: BufRead> LineReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, buf: Vec::new() }
    }

    /// Returns `None` at end of stream. A decode error consumes only the
    /// offending line.
    pub fn next_message<T: DeserializeOwned>(&mut self) -> Option<Result<T, CodecError>> {
        self.buf.clear();
        match self.inner.read_until(b'\n', &mut self.buf) {
            Ok(0) => None,
            Ok(_) => Some(decode(&self.buf)),
            Err(e) => Some(Err(CodecError::Io(e))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Command, Response, Status};
    use proptest::prelude::*;
    use serde_json::{json, Value};

    #[test]
    fn fixed_command_vector() {
        let line = br#"{"id":"1","module":"ot2","action":"run_protocol","args":{}}"#;
        let cmd: Command = decode(line).unwrap();
        assert_eq!(cmd, Command::new("1", "ot2", "run_protocol"));
        assert_eq!(encode(&cmd), [&line[..], b"\n"].concat());
    }

    #[test]
    fn response_keys_are_fixed() {
        let v: Value = serde_json::from_slice(&encode(&Response::busy("7"))).unwrap();
        assert_eq!(v, json!({"id": "7", "status": "busy", "data": {}, "error": null}));
        let r: Response = decode(br#"{"id":"7","status":"failed","data":{},"error":"jammed"}"#).unwrap();
        assert_eq!((r.status, r.error.as_deref()), (Status::Failed, Some("jammed")));
    }

    #[test]
    fn truncated_line_is_reported_and_the_stream_resynchronizes() {
        let stream = b"{\"id\":\"1\",\"mod\n{\"id\":\"2\",\"module\":\"m\",\"action\":\"a\"}\n";
        let mut reader = LineReader::new(&stream[..]);
        match reader.next_message::<Command>() {
            Some(Err(CodecError::Malformed { line, .. })) => assert_eq!(line, b"{\"id\":\"1\",\"mod"),
            other => panic!("expected a malformed line, got {other:?}"),
        }
        let next = reader.next_message::<Command>().unwrap().unwrap();
        assert_eq!(next.id, "2");
        assert!(reader.next_message::<Command>().is_none());
    }

    #[test]
    fn crlf_is_tolerated() {
        let cmd: Command = decode(b"{\"id\":\"x\",\"module\":\"m\",\"action\":\"a\"}\r\n").unwrap();
        assert_eq!(cmd.id, "x");
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        let leaf = prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::from),
            any::<i64>().prop_map(Value::from),
            (-1e9..1e9f64).prop_map(Value::from),
            "[ -~\u{e9}\u{3bb}\n\"]{0,12}".prop_map(Value::from),
        ];
        leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                proptest::collection::vec(inner.clone(), 0..4).prop_map(Value::from),
                proptest::collection::btree_map("[a-z_]{1,6}", inner, 0..4)
                    .prop_map(|m| Value::Object(m.into_iter().collect())),
            ]
        })
    }

    proptest! {
        #[test]
        fn commands_round_trip(
            id in "[ -~]{1,16}",
            module in "[a-z0-9_]{1,8}",
            action in "[a-z_]{1,12}",
            args in proptest::collection::btree_map("[a-z_]{1,8}", arb_value(), 0..5),
        ) {
            let cmd = Command::new(id, module, action).with_args(args.into_iter().collect());
            let bytes = encode(&cmd);
            prop_assert_eq!(bytes.iter().filter(|b| **b == b'\n').count(), 1);
            prop_assert_eq!(decode::<Command>(&bytes).unwrap(), cmd);
        }

        #[test]
        fn responses_round_trip(id in "[ -~]{0,16}", duration in 0.0..1e6f64, err in "[ -~]{1,20}", kind in 0..3u8) {
            let r = match kind {
                0 => Response::succeeded(&id, Default::default(), duration),
                1 => Response::failed(&id, err),
                _ => Response::busy(&id),
            };
            prop_assert!(r.is_well_formed());
            prop_assert_eq!(decode::<Response>(&encode(&r)).unwrap(), r);
        }
    }
}
