//! Opaque, lexicographically sortable identifiers.
//!
//! Every id is a short kind prefix followed by a 26-character Crockford
//! base32 body (the ULID alphabet and width). The body encodes the store
//! version at which the entity was created, so ids sort in creation order
//! and are reproduced exactly when the event log is replayed.

use std::fmt;

use serde::{Deserialize, Serialize};

const CROCKFORD: &[u8; 32] = b"0123456789ABCDEFGHJKMNPQRSTVWXYZ";
const BODY_LEN: usize = 26;

/// Encodes `n` as 26 Crockford base32 digits, most significant first.
pub fn encode_base32(mut n: u128) -> String {
    let mut buf = [b'0'; BODY_LEN];
    for slot in buf.iter_mut().rev() {
        *slot = CROCKFORD[(n & 31) as usize];
        n >>= 5;
    }
    String::from_utf8(buf.to_vec()).expect("ascii")
}

pub fn decode_base32(text: &str) -> Option<u128> {
    if text.len() != BODY_LEN {
        return None;
    }
    text.bytes().try_fold(0u128, |acc, b| {
        let digit = CROCKFORD.iter().position(|c| *c == b.to_ascii_uppercase())?;
        acc.checked_mul(32)?.checked_add(digit as u128)
    })
}

macro_rules! define_id {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub const PREFIX: &'static str = $prefix;

            pub fn from_seq(seq: u64) -> Self {
                $name(format!("{}{}", $prefix, encode_base32(seq as u128)))
            }

            /// Creation sequence encoded in the id, if it is well formed.
            pub fn seq(&self) -> Option<u64> {
                self.0
                    .strip_prefix($prefix)
                    .and_then(decode_base32)
                    .and_then(|n| u64::try_from(n).ok())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }

            pub fn matches_kind(raw: &str) -> bool {
                raw.starts_with($prefix)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }
    };
}

define_id!(BucketId, "bkt_");
define_id!(SchemaId, "sch_");
define_id!(ElementId, "elm_");
define_id!(RecordId, "rec_");
define_id!(ExperienceId, "exp_");

/// Segment ids are derived from their experience and position.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentId(pub String);

impl SegmentId {
    pub fn new(experience: &ExperienceId, index: usize) -> Self {
        SegmentId(format!("{experience}-{index:04}"))
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
