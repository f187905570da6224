//! In-memory ordered message bus.
//!
//! Messages are delivered (and counted) in enqueue order by the coordination
//! driver; there is no wall-clock concurrency, which keeps trials
//! deterministic. Every message counts as one communication; replies count
//! separately.

use crate::schedule::{ResourceId, Tick};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum MessageKind {
    Request,
    Response,
    Inform,
    RemovalNotice,
    DirectoryQuery,
    DirectoryReply,
}

impl MessageKind {
    pub fn label(&self) -> &'static str {
        match self {
            MessageKind::Request => "request",
            MessageKind::Response => "response",
            MessageKind::Inform => "inform",
            MessageKind::RemovalNotice => "removal",
            MessageKind::DirectoryQuery => "dir-query",
            MessageKind::DirectoryReply => "dir-reply",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Message {
    pub tick: Tick,
    pub from: ResourceId,
    pub to: ResourceId,
    pub kind: MessageKind,
    pub payload: String,
}

/// Counts every message; optionally keeps the full trace for the
/// line-per-message log.
#[derive(Clone, Debug, Default)]
pub struct MessageBus {
    count: u64,
    trace: Option<Vec<Message>>,
}

impl MessageBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_trace() -> Self {
        Self {
            count: 0,
            trace: Some(Vec::new()),
        }
    }

    pub fn send(&mut self, msg: Message) {
        self.count += 1;
        if let Some(trace) = &mut self.trace {
            trace.push(msg);
        }
    }

    pub fn send_parts(
        &mut self,
        tick: Tick,
        from: &ResourceId,
        to: &ResourceId,
        kind: MessageKind,
        payload: impl Into<String>,
    ) {
        self.send(Message {
            tick,
            from: from.clone(),
            to: to.clone(),
            kind,
            payload: payload.into(),
        });
    }

    /// One round trip to the shared capability directory (query + reply).
    pub fn directory_round_trip(&mut self, tick: Tick, who: &ResourceId, what: impl Into<String>) {
        let directory = ResourceId::from("directory");
        let what = what.into();
        self.send_parts(tick, who, &directory, MessageKind::DirectoryQuery, what.clone());
        self.send_parts(tick, &directory, who, MessageKind::DirectoryReply, what);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Add communications that are accounted analytically rather than sent
    /// one by one (the centralized information sweep).
    pub fn charge(&mut self, n: u64) {
        self.count += n;
    }

    pub fn trace(&self) -> Option<&[Message]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Vec<Message> {
        self.trace.take().unwrap_or_default()
    }
}
