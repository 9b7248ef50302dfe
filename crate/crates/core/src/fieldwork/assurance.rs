//! Structured assurance arguments: claims supported by arguments,
//! assumptions and evidence links, open to auditor challenges.
//!
//! A valid argument is a tree rooted at a claim. Validation looks at nodes
//! in id order, so the outcome does not depend on the order they were
//! supplied in.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::ids::{ActorId, EvidenceId, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Claim,
    Argument,
    Assumption,
    EvidenceLink,
    Challenge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssuranceNode {
    pub id: NodeId,
    pub node_kind: NodeKind,
    pub text: String,
    #[serde(default)]
    pub children: Vec<NodeId>,
    #[serde(default)]
    pub evidence_ref: Option<EvidenceId>,
    pub author: ActorId,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssuranceError {
    #[error("argument has no nodes")]
    Empty,
    #[error("duplicate node id `{0}`")]
    DuplicateNode(NodeId),
    #[error("evidence link `{0}` has no evidence_ref")]
    MissingEvidenceRef(NodeId),
    #[error("node `{0}` is not an evidence link but carries an evidence_ref")]
    UnexpectedEvidenceRef(NodeId),
    #[error("node `{parent}` lists unknown child `{child}`")]
    DanglingChild { parent: NodeId, child: NodeId },
    #[error("cycle through nodes {0:?}")]
    Cycle(Vec<NodeId>),
    #[error("node `{0}` has more than one parent")]
    MultipleParents(NodeId),
    #[error("multiple roots: {0:?}")]
    MultipleRoots(Vec<NodeId>),
    #[error("no root node")]
    NoRoot,
    #[error("root `{0}` is not a claim")]
    RootNotClaim(NodeId),
    #[error("challenge `{challenge}` is attached to `{parent}`, which is not a claim, argument or assumption")]
    ChallengeOnInvalidParent { challenge: NodeId, parent: NodeId },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Claim or argument leaves: asserted but not backed by anything.
    pub unsupported_leaves: Vec<NodeId>,
    /// Challenges nobody has answered yet (challenge leaves).
    pub open_challenges: Vec<NodeId>,
    /// Evidence links whose evidence is not registered.
    pub unresolved_evidence_links: Vec<NodeId>,
    /// Registered evidence no link points at.
    pub unreferenced_evidence: Vec<EvidenceId>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.unsupported_leaves.is_empty() && self.open_challenges.is_empty() && self.unresolved_evidence_links.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssuranceArgument {
    pub root: NodeId,
    pub nodes: BTreeMap<NodeId, AssuranceNode>,
    pub report: ValidationReport,
}

pub fn build_assurance_argument(
    nodes: Vec<AssuranceNode>,
    evidence: &BTreeSet<EvidenceId>,
) -> Result<AssuranceArgument, AssuranceError> {
    if nodes.is_empty() {
        return Err(AssuranceError::Empty);
    }
    let mut by_id: BTreeMap<NodeId, AssuranceNode> = BTreeMap::new();
    let mut duplicates = BTreeSet::new();
    for node in nodes {
        if by_id.contains_key(&node.id) {
            duplicates.insert(node.id.clone());
        } else {
            by_id.insert(node.id.clone(), node);
        }
    }
    if let Some(dup) = duplicates.into_iter().next() {
        return Err(AssuranceError::DuplicateNode(dup));
    }

    for node in by_id.values() {
        match (node.node_kind, &node.evidence_ref) {
            (NodeKind::EvidenceLink, None) => return Err(AssuranceError::MissingEvidenceRef(node.id.clone())),
            (k, Some(_)) if k != NodeKind::EvidenceLink => return Err(AssuranceError::UnexpectedEvidenceRef(node.id.clone())),
            _ => {}
        }
        if let Some(child) = node.children.iter().find(|c| !by_id.contains_key(*c)) {
            return Err(AssuranceError::DanglingChild { parent: node.id.clone(), child: child.clone() });
        }
    }

    // Kahn peel: whatever cannot be peeled sits on or below a cycle.
    let mut indegree: BTreeMap<&NodeId, usize> = by_id.keys().map(|k| (k, 0)).collect();
    for node in by_id.values() {
        for c in &node.children {
            *indegree.get_mut(c).expect("resolved above") += 1;
        }
    }
    let mut remaining = indegree.clone();
    let mut queue: VecDeque<&NodeId> = remaining.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
    let mut peeled = 0;
    while let Some(id) = queue.pop_front() {
        peeled += 1;
        for c in &by_id[id].children {
            let d = remaining.get_mut(c).expect("resolved above");
            *d -= 1;
            if *d == 0 {
                queue.push_back(c);
            }
        }
    }
    if peeled < by_id.len() {
        let stuck: Vec<NodeId> = remaining.iter().filter(|(_, d)| **d > 0).map(|(k, _)| (*k).clone()).collect();
        return Err(AssuranceError::Cycle(stuck));
    }

    if let Some((id, _)) = indegree.iter().find(|(_, d)| **d > 1) {
        return Err(AssuranceError::MultipleParents((*id).clone()));
    }
    let roots: Vec<NodeId> = indegree.iter().filter(|(_, d)| **d == 0).map(|(k, _)| (*k).clone()).collect();
    let root = match roots.as_slice() {
        [] => return Err(AssuranceError::NoRoot),
        [one] => one.clone(),
        _ => return Err(AssuranceError::MultipleRoots(roots)),
    };
    if by_id[&root].node_kind != NodeKind::Claim {
        return Err(AssuranceError::RootNotClaim(root));
    }

    for parent in by_id.values() {
        for c in &parent.children {
            if by_id[c].node_kind == NodeKind::Challenge
                && !matches!(parent.node_kind, NodeKind::Claim | NodeKind::Argument | NodeKind::Assumption)
            {
                return Err(AssuranceError::ChallengeOnInvalidParent { challenge: c.clone(), parent: parent.id.clone() });
            }
        }
    }

    let mut report = ValidationReport::default();
    let mut linked = BTreeSet::new();
    for node in by_id.values() {
        if let Some(e) = &node.evidence_ref {
            linked.insert(e.clone());
            if !evidence.contains(e) {
                report.unresolved_evidence_links.push(node.id.clone());
            }
        }
        if node.children.is_empty() {
            match node.node_kind {
                NodeKind::Claim | NodeKind::Argument => report.unsupported_leaves.push(node.id.clone()),
                NodeKind::Challenge => report.open_challenges.push(node.id.clone()),
                NodeKind::Assumption | NodeKind::EvidenceLink => {}
            }
        }
    }
    report.unreferenced_evidence = evidence.difference(&linked).cloned().collect();

    Ok(AssuranceArgument { root, nodes: by_id, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: &str, kind: NodeKind, children: &[&str]) -> AssuranceNode {
        AssuranceNode {
            id: NodeId::new(id),
            node_kind: kind,
            text: id.into(),
            children: children.iter().map(|c| NodeId::new(*c)).collect(),
            evidence_ref: (kind == NodeKind::EvidenceLink).then(|| EvidenceId::new("model-card")),
            author: ActorId::new("dev"),
        }
    }

    fn ev() -> BTreeSet<EvidenceId> {
        [EvidenceId::new("model-card")].into_iter().collect()
    }

    #[test]
    fn minimal_tree_is_clean() {
        let arg = build_assurance_argument(
            vec![
                node("c", NodeKind::Claim, &["a"]),
                node("a", NodeKind::Argument, &["e"]),
                node("e", NodeKind::EvidenceLink, &[]),
            ],
            &ev(),
        )
        .unwrap();
        assert_eq!(arg.root, NodeId::new("c"));
        assert!(arg.report.is_clean());
        assert!(arg.report.open_challenges.is_empty());
        assert!(arg.report.unreferenced_evidence.is_empty());
    }

    #[test]
    fn argument_leaf_is_unsupported() {
        let arg = build_assurance_argument(vec![node("c", NodeKind::Claim, &["a"]), node("a", NodeKind::Argument, &[])], &ev()).unwrap();
        assert_eq!(arg.report.unsupported_leaves, vec![NodeId::new("a")]);
        assert_eq!(arg.report.unreferenced_evidence, vec![EvidenceId::new("model-card")]);
    }

    #[test]
    fn challenges() {
        let arg = build_assurance_argument(
            vec![
                node("c", NodeKind::Claim, &["s", "x"]),
                node("s", NodeKind::Assumption, &["x2"]),
                node("x", NodeKind::Challenge, &[]),
                node("x2", NodeKind::Challenge, &[]),
            ],
            &ev(),
        )
        .unwrap();
        assert_eq!(arg.report.open_challenges, vec![NodeId::new("x"), NodeId::new("x2")]);

        let bad = build_assurance_argument(
            vec![node("c", NodeKind::Claim, &["e"]), node("e", NodeKind::EvidenceLink, &["x"]), node("x", NodeKind::Challenge, &[])],
            &ev(),
        );
        assert!(matches!(bad, Err(AssuranceError::ChallengeOnInvalidParent { .. })));
    }

    #[test]
    fn structural_errors() {
        let cyc = build_assurance_argument(
            vec![node("c", NodeKind::Claim, &["a"]), node("a", NodeKind::Argument, &["b"]), node("b", NodeKind::Argument, &["a"])],
            &ev(),
        );
        assert_eq!(cyc, Err(AssuranceError::Cycle(vec![NodeId::new("a"), NodeId::new("b")])));

        let two_roots = build_assurance_argument(vec![node("c", NodeKind::Claim, &[]), node("d", NodeKind::Claim, &[])], &ev());
        assert_eq!(two_roots, Err(AssuranceError::MultipleRoots(vec![NodeId::new("c"), NodeId::new("d")])));

        let mut e = node("e", NodeKind::EvidenceLink, &[]);
        e.evidence_ref = None;
        assert_eq!(
            build_assurance_argument(vec![node("c", NodeKind::Claim, &["e"]), e], &ev()),
            Err(AssuranceError::MissingEvidenceRef(NodeId::new("e")))
        );

        assert_eq!(
            build_assurance_argument(vec![node("a", NodeKind::Argument, &[])], &ev()),
            Err(AssuranceError::RootNotClaim(NodeId::new("a")))
        );

        let diamond = build_assurance_argument(
            vec![
                node("c", NodeKind::Claim, &["a", "b"]),
                node("a", NodeKind::Argument, &["s"]),
                node("b", NodeKind::Argument, &["s"]),
                node("s", NodeKind::Assumption, &[]),
            ],
            &ev(),
        );
        assert_eq!(diamond, Err(AssuranceError::MultipleParents(NodeId::new("s"))));
        assert_eq!(build_assurance_argument(vec![], &ev()), Err(AssuranceError::Empty));
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let nodes = vec![
            node("c", NodeKind::Claim, &["a", "x"]),
            node("a", NodeKind::Argument, &["e", "s"]),
            node("e", NodeKind::EvidenceLink, &[]),
            node("s", NodeKind::Assumption, &[]),
            node("x", NodeKind::Challenge, &[]),
        ];
        let forward = build_assurance_argument(nodes.clone(), &ev()).unwrap();
        let mut reversed = nodes;
        reversed.reverse();
        assert_eq!(build_assurance_argument(reversed, &ev()).unwrap(), forward);
    }
}
