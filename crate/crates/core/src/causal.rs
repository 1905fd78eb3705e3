//! Causal graphs over channel indices and the pair selection they induce.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Directed cause → effect edges between channels.
///
/// An absent graph (`present == false`) means no structure is known, in which
/// case every other channel is treated as a cause of the target.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CausalGraph {
    edges: BTreeSet<(usize, usize)>,
    present: bool,
}

impl CausalGraph {
    pub fn absent() -> Self {
        Self::default()
    }

    pub fn new(edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (cause, effect) in edges {
            if cause == effect {
                return Err(Error::InvalidArgument(format!(
                    "self-loop on channel {cause}"
                )));
            }
            set.insert((cause, effect));
        }
        Ok(Self {
            edges: set,
            present: true,
        })
    }

    pub fn is_present(&self) -> bool {
        self.present
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Causes of `effect` in ascending channel order.
    pub fn parents(&self, effect: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(_, e)| e == effect)
            .map(|&(c, _)| c)
            .collect()
    }

    pub fn validate(&self, n_channels: usize) -> Result<()> {
        match self
            .edges
            .iter()
            .find(|&&(c, e)| c >= n_channels || e >= n_channels)
        {
            Some(&(c, e)) => Err(Error::InvalidArgument(format!(
                "edge {c}->{e} outside {n_channels} channels"
            ))),
            None => Ok(()),
        }
    }
}

/// Context channels paired with `target`, ascending and never including it.
///
/// With a graph these are the target's parents; without one, every other
/// channel.
pub fn select_contexts(graph: &CausalGraph, target: usize, n_channels: usize) -> Vec<usize> {
    if graph.is_present() {
        graph
            .parents(target)
            .into_iter()
            .filter(|&c| c != target && c < n_channels)
            .collect()
    } else {
        (0..n_channels).filter(|&c| c != target).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parents_from_graph() {
        let g = CausalGraph::new([(0, 3), (1, 3)]).unwrap();
        assert_eq!(select_contexts(&g, 3, 4), vec![0, 1]);
    }

    #[test]
    fn no_graph_means_all_other_channels() {
        assert_eq!(select_contexts(&CausalGraph::absent(), 3, 4), vec![0, 1, 2]);
    }

    #[test]
    fn orphan_target_has_no_contexts() {
        let g = CausalGraph::new([(0, 1)]).unwrap();
        assert!(select_contexts(&g, 3, 4).is_empty());
    }

    #[test]
    fn self_loops_rejected() {
        assert!(CausalGraph::new([(2, 2)]).is_err());
    }

    #[test]
    fn validate_checks_range() {
        let g = CausalGraph::new([(0, 5)]).unwrap();
        assert!(g.validate(4).is_err());
        assert!(g.validate(6).is_ok());
    }
}
