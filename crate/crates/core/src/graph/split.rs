use crate::error::{Error, Result};

/// Train/validation/test node masks for transductive node classification.
///
/// Labeled nodes are exactly the training nodes; everything else counts as
/// unlabeled for biased perturbation step sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSplit {
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl NodeSplit {
    pub fn from_indices(num_nodes: usize, train: &[usize], val: &[usize], test: &[usize]) -> Result<Self> {
        let mut owner: Vec<Option<&'static str>> = vec![None; num_nodes];
        let mut masks = [
            vec![false; num_nodes],
            vec![false; num_nodes],
            vec![false; num_nodes],
        ];
        for ((name, idx), mask) in [("train", train), ("val", val), ("test", test)]
            .into_iter()
            .zip(masks.iter_mut())
        {
            for &i in idx {
                if i >= num_nodes {
                    return Err(Error::Range {
                        what: "split node",
                        index: i,
                        limit: num_nodes,
                    });
                }
                match owner[i] {
                    Some(other) if other != name => {
                        return Err(Error::Validation(format!(
                            "overlapping splits: node {i} in both {other} and {name}"
                        )))
                    }
                    _ => owner[i] = Some(name),
                }
                mask[i] = true;
            }
        }
        let [train_mask, val_mask, test_mask] = masks;
        Ok(NodeSplit {
            train_mask,
            val_mask,
            test_mask,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.train_mask.len()
    }

    pub fn labeled_mask(&self) -> &[bool] {
        &self.train_mask
    }

    pub fn unlabeled_mask(&self) -> Vec<bool> {
        self.train_mask.iter().map(|&t| !t).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_and_unlabeled() {
        let s = NodeSplit::from_indices(4, &[0], &[1], &[2]).unwrap();
        assert_eq!(s.labeled_mask(), &[true, false, false, false]);
        assert_eq!(s.unlabeled_mask(), vec![false, true, true, true]);
    }

    #[test]
    fn empty_val_section() {
        let s = NodeSplit::from_indices(3, &[0], &[], &[1, 2]).unwrap();
        assert!(s.val_mask.iter().all(|&v| !v));
    }

    #[test]
    fn overlap_is_rejected() {
        let err = NodeSplit::from_indices(4, &[0], &[0], &[]).unwrap_err();
        assert!(err.to_string().contains("overlapping splits"));
    }

    #[test]
    fn range_is_checked() {
        assert!(matches!(
            NodeSplit::from_indices(2, &[5], &[], &[]),
            Err(Error::Range { index: 5, .. })
        ));
    }
}
