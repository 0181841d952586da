//! Human-readable tree rendering for the explore command.

use std::collections::BTreeMap;

use super::{InvocationNode, StorageAccessKind};
use crate::decoder::DecodedCall;

/// Rendering controls. `decoded_calls` is keyed by node entry_index.
#[derive(Default)]
pub struct RenderOptions<'a> {
    pub decoded_calls: Option<&'a BTreeMap<usize, DecodedCall>>,
    /// Print storage access lines under each node (only meaningful in
    /// decode mode).
    pub show_storage: bool,
}

/// One line per node, two-space indent per depth:
/// `{kind} {code_address} {selector|"-"} calldata={N}B ret={M}B exit={reason}`.
pub fn render_tree(root: &InvocationNode, options: &RenderOptions) -> String {
    let mut out = String::new();
    render_node(root, 0, options, &mut out);
    out
}

fn render_node(node: &InvocationNode, depth: usize, options: &RenderOptions, out: &mut String) {
    let indent = "  ".repeat(depth);
    let decoded = options
        .decoded_calls
        .and_then(|m| m.get(&node.entry_index));
    let selector_col = decoded
        .and_then(|d| d.render())
        .or_else(|| node.selector.map(|s| s.to_string()))
        .unwrap_or_else(|| "-".to_string());
    out.push_str(&format!(
        "{indent}{} {:?} {} calldata={}B ret={}B exit={}\n",
        node.call_kind.label(),
        node.code_address,
        selector_col,
        node.calldata.len(),
        node.return_data.len(),
        node.exit_reason.label(),
    ));
    if options.show_storage {
        for event in &node.storage_events {
            let kind = match event.kind {
                StorageAccessKind::Load => "sload",
                StorageAccessKind::Store => "sstore",
            };
            let slot = match &event.decoded {
                Some(path) => path.render(),
                None => format!("slot {}", crate::primitives::hex_word(event.raw_slot)),
            };
            let rolled = if event.rolled_back { " (rolled back)" } else { "" };
            out.push_str(&format!(
                "{indent}  {kind} {slot} = {}{rolled}\n",
                crate::primitives::hex_word(event.value),
            ));
        }
    }
    for child in &node.children {
        render_node(child, depth + 1, options, out);
    }
}
