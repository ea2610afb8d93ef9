//! Topic-based pub/sub bus — the middleware-neutral data stream between
//! drivers and the digital twin.
//!
//! Topics are `/`-separated paths. A subscription pattern may end in a single
//! `*` segment, which matches any non-empty suffix; mid-path wildcards are not
//! supported. Delivery is synchronous: `publish` pushes the envelope into the
//! queue of every matching subscription, in subscription registration order,
//! so a single-threaded run always yields the same delivery sequence.

use std::collections::{HashSet, VecDeque};
use std::sync::{Arc, Mutex, Weak};

use thiserror::Error;

use crate::time::{Timestamp, VirtualClock};

#[derive(Debug, Error)]
pub enum BusError {
    #[error("invalid topic `{0}`: {1}")]
    InvalidTopic(String, &'static str),
    #[error("invalid pattern `{0}`: {1}")]
    InvalidPattern(String, &'static str),
    #[error("payload kind `{0}` is not registered on the bus")]
    UnknownPayloadKind(String),
    #[error("envelope truncated at byte {0}")]
    Truncated(usize),
    #[error("envelope field is not valid UTF-8")]
    BadUtf8,
}

fn validate_segments(s: &str) -> Result<(), &'static str> {
    if s.is_empty() {
        return Err("empty topic");
    }
    for seg in s.split('/') {
        if seg.is_empty() {
            return Err("empty segment");
        }
        if seg.chars().any(char::is_whitespace) {
            return Err("whitespace in segment");
        }
    }
    Ok(())
}

/// A validated topic path.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Topic(String);

impl Topic {
    pub fn new(s: impl Into<String>) -> Result<Self, BusError> {
        let s = s.into();
        validate_segments(&s).map_err(|why| BusError::InvalidTopic(s.clone(), why))?;
        if s.contains('*') {
            return Err(BusError::InvalidTopic(s, "wildcard not allowed in topic"));
        }
        Ok(Topic(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for Topic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// A subscription pattern: a topic path whose final segment may be `*`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicPattern {
    prefix: Vec<String>,
    wildcard: bool,
}

impl TopicPattern {
    pub fn new(s: &str) -> Result<Self, BusError> {
        validate_segments(s).map_err(|why| BusError::InvalidPattern(s.to_string(), why))?;
        let segs: Vec<&str> = s.split('/').collect();
        let wildcard = *segs.last().unwrap() == "*";
        let prefix_len = if wildcard { segs.len() - 1 } else { segs.len() };
        if segs[..prefix_len].iter().any(|seg| seg.contains('*')) {
            return Err(BusError::InvalidPattern(
                s.to_string(),
                "`*` is only allowed as the final segment",
            ));
        }
        Ok(TopicPattern {
            prefix: segs[..prefix_len].iter().map(|s| s.to_string()).collect(),
            wildcard,
        })
    }

    pub fn matches(&self, topic: &Topic) -> bool {
        let segs: Vec<&str> = topic.as_str().split('/').collect();
        if self.wildcard {
            // `*` matches one or more remaining segments.
            segs.len() > self.prefix.len()
                && segs[..self.prefix.len()]
                    .iter()
                    .zip(&self.prefix)
                    .all(|(a, b)| a == b)
        } else {
            segs.len() == self.prefix.len() && segs.iter().zip(&self.prefix).all(|(a, b)| a == b)
        }
    }
}

/// A timestamped, topic-addressed message on the bus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub topic: Topic,
    /// Per-publisher counter, strictly increasing per (publisher, topic).
    pub seq: u64,
    pub publish_time: Timestamp,
    pub payload_kind: String,
    pub payload: Vec<u8>,
}

impl Envelope {
    /// Wire form, little-endian: u16-length topic | u64 seq | u64 time |
    /// u16-length payload kind | u32-length payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.topic.as_str().len() + self.payload.len());
        let topic = self.topic.as_str().as_bytes();
        out.extend_from_slice(&(topic.len() as u16).to_le_bytes());
        out.extend_from_slice(topic);
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.publish_time.as_nanos().to_le_bytes());
        let kind = self.payload_kind.as_bytes();
        out.extend_from_slice(&(kind.len() as u16).to_le_bytes());
        out.extend_from_slice(kind);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Envelope, BusError> {
        let mut cur = Cursor { buf, pos: 0 };
        let topic = String::from_utf8(cur.take_u16_prefixed()?.to_vec())
            .map_err(|_| BusError::BadUtf8)?;
        let seq = cur.take_u64()?;
        let publish_time = Timestamp::from_nanos(cur.take_u64()?);
        let payload_kind = String::from_utf8(cur.take_u16_prefixed()?.to_vec())
            .map_err(|_| BusError::BadUtf8)?;
        let len = cur.take_u32()? as usize;
        let payload = cur.take(len)?.to_vec();
        Ok(Envelope {
            topic: Topic::new(topic)?,
            seq,
            publish_time,
            payload_kind,
            payload,
        })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BusError> {
        if self.pos + n > self.buf.len() {
            return Err(BusError::Truncated(self.buf.len()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn take_u16(&mut self) -> Result<u16, BusError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn take_u32(&mut self) -> Result<u32, BusError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn take_u64(&mut self) -> Result<u64, BusError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn take_u16_prefixed(&mut self) -> Result<&'a [u8], BusError> {
        let n = self.take_u16()? as usize;
        self.take(n)
    }
}

struct SubEntry {
    pattern: TopicPattern,
    queue: Weak<Mutex<VecDeque<Envelope>>>,
}

struct BusInner {
    kinds: HashSet<String>,
    subs: Vec<SubEntry>,
    taps: Vec<Box<dyn FnMut(&Envelope) + Send>>,
}

/// Shared bus handle. Clones refer to the same bus.
#[derive(Clone)]
pub struct Bus {
    inner: Arc<Mutex<BusInner>>,
}

impl Default for Bus {
    fn default() -> Self {
        Self::new()
    }
}

impl Bus {
    pub fn new() -> Self {
        Bus {
            inner: Arc::new(Mutex::new(BusInner {
                kinds: HashSet::new(),
                subs: Vec::new(),
                taps: Vec::new(),
            })),
        }
    }

    /// Payload kinds must be registered before envelopes carrying them are
    /// accepted.
    pub fn register_payload_kind(&self, kind: &str) {
        self.inner.lock().unwrap().kinds.insert(kind.to_string());
    }

    pub fn subscribe(&self, pattern: &str) -> Result<Subscription, BusError> {
        let pattern = TopicPattern::new(pattern)?;
        let queue = Arc::new(Mutex::new(VecDeque::new()));
        self.inner.lock().unwrap().subs.push(SubEntry {
            pattern,
            queue: Arc::downgrade(&queue),
        });
        Ok(Subscription { queue })
    }

    /// Observes every accepted envelope, after subscriber delivery, in global
    /// publish order. Used by the recorder and the determinism hash.
    pub fn add_tap(&self, tap: impl FnMut(&Envelope) + Send + 'static) {
        self.inner.lock().unwrap().taps.push(Box::new(tap));
    }

    /// Delivers `envelope` to every matching subscriber exactly once.
    pub fn publish(&self, envelope: Envelope) -> Result<(), BusError> {
        let mut inner = self.inner.lock().unwrap();
        if !inner.kinds.contains(&envelope.payload_kind) {
            return Err(BusError::UnknownPayloadKind(envelope.payload_kind));
        }
        inner.subs.retain(|s| s.queue.strong_count() > 0);
        for sub in &inner.subs {
            if sub.pattern.matches(&envelope.topic) {
                if let Some(q) = sub.queue.upgrade() {
                    q.lock().unwrap().push_back(envelope.clone());
                }
            }
        }
        for tap in inner.taps.iter_mut() {
            tap(&envelope);
        }
        Ok(())
    }

    /// Binds a publisher to one topic and payload kind, owning the sequence
    /// counter for that stream.
    pub fn publisher(&self, topic: &str, payload_kind: &str) -> Result<Publisher, BusError> {
        Ok(Publisher {
            bus: self.clone(),
            topic: Topic::new(topic)?,
            payload_kind: payload_kind.to_string(),
            next_seq: 0,
            last_time: Timestamp::ZERO,
        })
    }
}

/// Receives envelopes matching one pattern, in delivery order.
pub struct Subscription {
    queue: Arc<Mutex<VecDeque<Envelope>>>,
}

impl Subscription {
    pub fn try_recv(&self) -> Option<Envelope> {
        self.queue.lock().unwrap().pop_front()
    }

    /// Drains everything currently queued.
    pub fn drain(&self) -> Vec<Envelope> {
        self.queue.lock().unwrap().drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.queue.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Per-(publisher, topic) envelope source enforcing strictly increasing
/// sequence numbers and non-decreasing publish times.
pub struct Publisher {
    bus: Bus,
    topic: Topic,
    payload_kind: String,
    next_seq: u64,
    last_time: Timestamp,
}

impl Publisher {
    pub fn topic(&self) -> &Topic {
        &self.topic
    }

    pub fn publish(
        &mut self,
        clock: &VirtualClock,
        payload: Vec<u8>,
    ) -> Result<Envelope, BusError> {
        self.publish_at(clock.now(), payload)
    }

    pub fn publish_at(&mut self, time: Timestamp, payload: Vec<u8>) -> Result<Envelope, BusError> {
        let time = time.max(self.last_time);
        let envelope = Envelope {
            topic: self.topic.clone(),
            seq: self.next_seq,
            publish_time: time,
            payload_kind: self.payload_kind.clone(),
            payload,
        };
        self.bus.publish(envelope.clone())?;
        self.next_seq += 1;
        self.last_time = time;
        Ok(envelope)
    }
}
