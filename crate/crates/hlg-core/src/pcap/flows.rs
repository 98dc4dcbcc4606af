//! Five-tuple flow grouping.

use super::{FlowKey, RawPacket};
use indexmap::IndexMap;

/// Group packets by canonical five-tuple. Both directions of a conversation
/// land in one group; within a group, capture order is preserved. The map
/// iterates in first-seen order, which keeps downstream output deterministic.
pub fn group_by_five_tuple(
    packets: impl IntoIterator<Item = RawPacket>,
) -> IndexMap<FlowKey, Vec<RawPacket>> {
    let mut groups: IndexMap<FlowKey, Vec<RawPacket>> = IndexMap::new();
    for pkt in packets {
        groups
            .entry(FlowKey::of(&pkt.five_tuple))
            .or_default()
            .push(pkt);
    }
    groups
}
