use rand::Rng;

use crate::error::{Error, Result};
use crate::hierarchy::{AgentTree, NodeId};
use crate::rl::{ActionMode, AgentBrain};

#[derive(Clone, Debug, PartialEq)]
pub struct Traversal {
    pub mask: Vec<bool>,
    /// Activated nodes in pre-order (left child first).
    pub activated: Vec<NodeId>,
    /// Action of each activated node; `true` means select.
    pub actions: Vec<bool>,
}

/// Top-down decision pass with a caller-supplied policy.
///
/// The root always decides. An internal node that selects activates both
/// children; one that drops excludes its whole member set. With a level cap
/// `L`, nodes at depth `L` (root depth 1) are terminal and a select there
/// admits every member.
pub fn traverse_with(
    tree: &AgentTree,
    level_cap: Option<usize>,
    mut decide: impl FnMut(NodeId) -> Result<bool>,
) -> Result<Traversal> {
    let mut mask = vec![false; tree.n_features()];
    let mut activated = Vec::new();
    let mut actions = Vec::new();
    let mut stack = vec![(tree.root, 1usize)];
    while let Some((id, depth)) = stack.pop() {
        let select = decide(id)?;
        activated.push(id);
        actions.push(select);
        if !select {
            continue;
        }
        let node = tree.node(id);
        match node.children {
            Some([left, right]) if level_cap != Some(depth) => {
                stack.push((right, depth + 1));
                stack.push((left, depth + 1));
            }
            _ => node.members.iter().for_each(|&f| mask[f] = true),
        }
    }
    Ok(Traversal {
        mask,
        activated,
        actions,
    })
}

/// Traversal where every activated brain acts on the shared state `s`.
pub fn traverse<R: Rng + ?Sized>(
    tree: &AgentTree,
    brains: &[AgentBrain],
    s: &[f64],
    mode: ActionMode,
    rng: &mut R,
    level_cap: Option<usize>,
) -> Result<Traversal> {
    if brains.len() != tree.len() {
        return Err(Error::DimensionMismatch {
            expected: tree.len(),
            actual: brains.len(),
            context: "one brain per tree node".into(),
        });
    }
    traverse_with(tree, level_cap, |id| brains[id].act(s, mode, rng))
}

/// Lowercase hex where byte `j` holds features `8j..8j+8`, feature `8j+b`
/// in bit `b`.
pub fn mask_to_hex(mask: &[bool]) -> String {
    mask.chunks(8)
        .map(|chunk| {
            let byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (b, &on)| acc | (u8::from(on) << b));
            format!("{byte:02x}")
        })
        .collect()
}

pub fn hex_to_mask(hex: &str, n: usize) -> Result<Vec<bool>> {
    let bad = || Error::InvalidArgument(format!("mask {hex:?} is not valid for {n} features"));
    if hex.len() != 2 * n.div_ceil(8) {
        return Err(bad());
    }
    let mut mask = Vec::with_capacity(n);
    for j in 0..hex.len() / 2 {
        let byte = u8::from_str_radix(hex.get(2 * j..2 * j + 2).ok_or_else(bad)?, 16).map_err(|_| bad())?;
        for b in 0..8 {
            if mask.len() < n {
                mask.push(byte >> b & 1 == 1);
            } else if byte >> b & 1 == 1 {
                return Err(bad());
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::build_hierarchy;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn balanced4() -> AgentTree {
        // leaves 0,1 merge into 4; 2,3 into 5; root 6 = [4, 5]
        let t = build_hierarchy(&[vec![0.0], vec![0.1], vec![10.0], vec![10.2]]).unwrap();
        assert_eq!(t.node(6).children, Some([4, 5]));
        assert_eq!(t.node(4).members, vec![0, 1]);
        t
    }

    #[test]
    fn root_drop_prunes_everything() {
        let t = balanced4();
        let tr = traverse_with(&t, None, |_| Ok(false)).unwrap();
        assert_eq!(tr.mask, vec![false; 4]);
        assert_eq!(tr.activated, vec![6]);
    }

    #[test]
    fn all_select_activates_every_node() {
        let t = balanced4();
        let tr = traverse_with(&t, None, |_| Ok(true)).unwrap();
        assert_eq!(tr.mask, vec![true; 4]);
        assert_eq!(tr.activated.len(), 7);
    }

    #[test]
    fn hand_traced_pruning() {
        let t = balanced4();
        let tr = traverse_with(&t, None, |id| Ok(!matches!(id, 4 | 3))).unwrap();
        assert_eq!(tr.mask, vec![false, false, true, false]);
        let mut act = tr.activated.clone();
        act.sort_unstable();
        assert_eq!(act, vec![2, 3, 4, 5, 6]);
        assert_eq!(tr.activated, vec![6, 4, 5, 2, 3]);
    }

    #[test]
    fn level_cap_makes_nodes_terminal() {
        let t = balanced4();
        let tr = traverse_with(&t, Some(1), |_| Ok(true)).unwrap();
        assert_eq!((tr.mask.clone(), tr.activated.clone()), (vec![true; 4], vec![6]));
        let tr = traverse_with(&t, Some(2), |id| Ok(id != 5)).unwrap();
        assert_eq!(tr.mask, vec![true, true, false, false]);
        assert_eq!(tr.activated, vec![6, 4, 5]);
    }

    #[test]
    fn hex_round_trip_and_layout() {
        let mut m = vec![false; 10];
        m[0] = true;
        m[9] = true;
        assert_eq!(mask_to_hex(&m), "0102");
        assert_eq!(hex_to_mask("0102", 10).unwrap(), m);
        assert!(hex_to_mask("01", 10).is_err());
        assert!(hex_to_mask("0104", 10).is_err());
    }

    proptest! {
        #[test]
        fn activation_topology_and_mask_law(points in prop::collection::vec(-5.0f64..5.0, 2..24), seed in any::<u64>(), cap in prop::option::of(1usize..6)) {
            let states: Vec<Vec<f64>> = points.iter().map(|&p| vec![p]).collect();
            let t = build_hierarchy(&states).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tr = traverse_with(&t, cap, |_| Ok(rand::Rng::gen_bool(&mut rng, 0.5))).unwrap();
            let n = t.n_features();
            prop_assert!(!tr.activated.is_empty() && tr.activated.len() <= 2 * n - 1);
            prop_assert_eq!(tr.activated[0], t.root);
            let parents = t.parents();
            let depths = t.depths();
            let active: std::collections::BTreeMap<usize, bool> =
                tr.activated.iter().copied().zip(tr.actions.iter().copied()).collect();
            for &id in &tr.activated {
                if let Some(p) = parents[id] {
                    // connected: parent active and selected, and not terminal
                    prop_assert_eq!(active.get(&p), Some(&true));
                    prop_assert!(cap.is_none_or(|c| depths[p] < c));
                }
            }
            for f in 0..n {
                // walk up from the leaf to the root
                let mut path = vec![f];
                while let Some(p) = parents[*path.last().unwrap()] {
                    path.push(p);
                }
                path.reverse();
                let effective: Vec<usize> = match cap {
                    Some(c) => path.into_iter().take(c).collect(),
                    None => path,
                };
                let admitted = effective.iter().all(|id| active.get(id) == Some(&true));
                prop_assert_eq!(tr.mask[f], admitted);
            }
        }

        #[test]
        fn hex_round_trips(mask in prop::collection::vec(any::<bool>(), 1..100)) {
            prop_assert_eq!(hex_to_mask(&mask_to_hex(&mask), mask.len()).unwrap(), mask);
        }
    }
}
