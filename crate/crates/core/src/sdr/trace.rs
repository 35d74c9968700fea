use std::fmt;

use crate::simnet::SimTime;

/// One line of a protocol trace:
/// `time,event,msg_id,generation,packet_offset,action`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub event: &'static str,
    pub msg_id: u32,
    pub generation: u32,
    pub packet_offset: u64,
    pub action: String,
}

impl TraceRecord {
    pub const HEADER: &'static str = "time,event,msg_id,generation,packet_offset,action";
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{}",
            self.time.as_nanos(),
            self.event,
            self.msg_id,
            self.generation,
            self.packet_offset,
            self.action
        )
    }
}
