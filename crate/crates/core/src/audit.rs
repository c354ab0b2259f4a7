//! Record of everything that crosses the UE/server boundary, and the checks
//! that only parameters and current-slot batches travel upward.

use std::fmt;

use crate::env::{ContentId, RequestRecord, UeId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    /// UE → server: digest of an uploaded predictor.
    ParamUpload { ue: UeId, round: u64, digest: String },
    /// UE → server: one entry of the slot's request batch.
    RequestUpload { ue: UeId, slot: u64, content: ContentId },
    /// Server → UE: aggregated predictor.
    ParamBroadcast { round: u64, digest: String },
    /// Server → UE: a requested content.
    ContentDelivery { ue: UeId, slot: u64, content: ContentId },
    /// Server → UE: actor parameters.
    ActorBroadcast { digest: String },
}

impl Message {
    pub fn is_upward(&self) -> bool {
        matches!(self, Message::ParamUpload { .. } | Message::RequestUpload { .. })
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::ParamUpload { ue, round, digest } => write!(f, "param_upload\t{ue}\t{round}\t{digest}"),
            Message::RequestUpload { ue, slot, content } => write!(f, "request_upload\t{ue}\t{slot}\t{content}"),
            Message::ParamBroadcast { round, digest } => write!(f, "param_broadcast\t{round}\t{digest}"),
            Message::ContentDelivery { ue, slot, content } => write!(f, "content_delivery\t{ue}\t{slot}\t{content}"),
            Message::ActorBroadcast { digest } => write!(f, "actor_broadcast\t{digest}"),
        }
    }
}

fn is_digest(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit())
}

/// Streaming checker over boundary messages. Messages are optionally kept
/// for inspection; violations are always counted.
#[derive(Debug, Clone, Default)]
pub struct MessageLog {
    keep: bool,
    messages: Vec<Message>,
    counts: [u64; 5],
    violations: Vec<String>,
    slot: Option<u64>,
    slots_checked: u64,
}

impl MessageLog {
    pub fn new(keep: bool) -> Self {
        Self { keep, ..Default::default() }
    }

    /// Marks the start of slot `t`; only its batch may be uploaded until the
    /// next call.
    pub fn begin_slot(&mut self, t: u64) {
        self.slot = Some(t);
    }

    pub fn end_slot(&mut self) {
        self.slot = None;
    }

    pub fn send(&mut self, m: Message) {
        let idx = match &m {
            Message::ParamUpload { digest, .. } | Message::ParamBroadcast { digest, .. } | Message::ActorBroadcast { digest } => {
                if !is_digest(digest) {
                    self.violations.push(format!("parameter message without a digest payload: {m}"));
                }
                match &m {
                    Message::ParamUpload { .. } => 0,
                    Message::ParamBroadcast { .. } => 2,
                    _ => 4,
                }
            }
            Message::RequestUpload { slot, ue, .. } => {
                if self.slot != Some(*slot) {
                    self.violations.push(format!("UE {ue} uploaded a request from slot {slot} outside that slot"));
                }
                1
            }
            Message::ContentDelivery { .. } => 3,
        };
        self.counts[idx] += 1;
        if self.keep {
            self.messages.push(m);
        }
    }

    /// Post-erase introspection of what the server still holds at the end
    /// of slot `t`.
    pub fn check_server_after_erase(&mut self, t: u64, held: &[RequestRecord]) {
        self.slots_checked += 1;
        for r in held {
            self.violations.push(format!("server still holds UE {} request for {} from slot {} after slot {t}", r.ue_id, r.content, r.slot));
        }
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    pub fn report(&self) -> AuditReport {
        AuditReport {
            param_uploads: self.counts[0],
            request_uploads: self.counts[1],
            param_broadcasts: self.counts[2],
            content_deliveries: self.counts[3],
            actor_broadcasts: self.counts[4],
            slots_checked: self.slots_checked,
            violations: self.violations.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub param_uploads: u64,
    pub request_uploads: u64,
    pub param_broadcasts: u64,
    pub content_deliveries: u64,
    pub actor_broadcasts: u64,
    pub slots_checked: u64,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "param_uploads={} request_uploads={} param_broadcasts={} content_deliveries={} actor_broadcasts={} slots_checked={} violations={}",
            self.param_uploads,
            self.request_uploads,
            self.param_broadcasts,
            self.content_deliveries,
            self.actor_broadcasts,
            self.slots_checked,
            self.violations.len()
        )
    }
}
