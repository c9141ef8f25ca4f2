use crate::error::{Error, Result};
use crate::graph::TokenRows;
use crate::linalg::Matrix;

/// Row-wise table lookup; a node with several tokens gets the sum of their
/// rows.
pub fn embed_discrete(tokens: &TokenRows, table: &Matrix) -> Result<Matrix> {
    let vocab = table.rows();
    let mut out = Matrix::zeros(tokens.num_rows(), table.cols());
    for i in 0..tokens.num_rows() {
        for &t in tokens.row(i) {
            if t >= vocab {
                return Err(Error::Range {
                    what: "token",
                    index: t,
                    limit: vocab,
                });
            }
            for (o, v) in out.row_mut(i).iter_mut().zip(table.row(t)) {
                *o += v;
            }
        }
    }
    Ok(out)
}

/// Gradient of the table given the gradient of the embedded rows.
pub fn embed_backward(tokens: &TokenRows, d_out: &Matrix, vocab: usize) -> Matrix {
    let mut grad = Matrix::zeros(vocab, d_out.cols());
    for i in 0..tokens.num_rows() {
        for &t in tokens.row(i) {
            for (g, d) in grad.row_mut(t).iter_mut().zip(d_out.row(i)) {
                *g += d;
            }
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Matrix {
        Matrix::from_rows(&[[0.1, -0.2], [1.0, 2.0], [-3.0, 0.5]]).unwrap()
    }

    #[test]
    fn single_token_lookup() {
        let out = embed_discrete(&TokenRows::new(&[vec![0]]), &table()).unwrap();
        assert_eq!(out.row(0), &[0.1, -0.2]);
    }

    #[test]
    fn multiple_tokens_sum() {
        let out = embed_discrete(&TokenRows::new(&[vec![1, 2]]), &table()).unwrap();
        assert_eq!(out.row(0), &[-2.0, 2.5]);
    }

    #[test]
    fn out_of_vocab() {
        assert!(matches!(
            embed_discrete(&TokenRows::new(&[vec![3]]), &table()),
            Err(Error::Range { index: 3, .. })
        ));
    }

    #[test]
    fn backward_scatters_rows() {
        let tokens = TokenRows::new(&[vec![0, 2], vec![2]]);
        let d = Matrix::from_rows(&[[1.0, 2.0], [10.0, 20.0]]).unwrap();
        let g = embed_backward(&tokens, &d, 3);
        assert_eq!(g.row(0), &[1.0, 2.0]);
        assert_eq!(g.row(1), &[0.0, 0.0]);
        assert_eq!(g.row(2), &[11.0, 22.0]);
    }
}
