use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Kept entries and the scale applied to them.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub scale: f64,
}

impl DropoutMask {
    pub fn all_keep(len: usize) -> Self {
        DropoutMask {
            keep: vec![true; len],
            scale: 1.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Result<Self> {
        check_p(p)?;
        if p == 0.0 {
            return Ok(Self::all_keep(len));
        }
        // an entry survives when a uniform 32-bit draw reaches ⌈p·2³²⌉
        let threshold = (p * 4294967296.0).ceil() as u32;
        Ok(DropoutMask {
            keep: (0..len).map(|_| rng.next_u32() >= threshold).collect(),
            scale: 1.0 / (1.0 - p),
        })
    }

    pub fn apply(&self, h: &Matrix) -> Result<Matrix> {
        if self.keep.len() != h.as_slice().len() {
            return Err(Error::dim(format!(
                "dropout mask of {} entries on a {}x{} matrix",
                self.keep.len(),
                h.rows(),
                h.cols()
            )));
        }
        let data = h
            .as_slice()
            .iter()
            .zip(&self.keep)
            .map(|(&v, &k)| v * (k as u8 as f64 * self.scale))
            .collect();
        Matrix::from_vec(h.rows(), h.cols(), data)
    }
}

impl DropoutMask {
    /// [`DropoutMask::apply`] without allocating.
    pub fn apply_in_place(&self, h: &mut Matrix) -> Result<()> {
        if self.keep.len() != h.as_slice().len() {
            return Err(Error::dim(format!(
                "dropout mask of {} entries on a {}x{} matrix",
                self.keep.len(),
                h.rows(),
                h.cols()
            )));
        }
        for (v, &k) in h.as_mut_slice().iter_mut().zip(&self.keep) {
            *v *= k as u8 as f64 * self.scale;
        }
        Ok(())
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout probability {p} not in [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout. With `rng = None` (evaluation) the input passes through
/// unchanged and the mask keeps everything.
pub fn dropout_apply<R: Rng + ?Sized>(
    h: &Matrix,
    p: f64,
    rng: Option<&mut R>,
) -> Result<(Matrix, DropoutMask)> {
    check_p(p)?;
    let len = h.as_slice().len();
    match rng {
        None => Ok((h.clone(), DropoutMask::all_keep(len))),
        Some(rng) => {
            let mask = DropoutMask::sample(len, p, rng)?;
            Ok((mask.apply(h)?, mask))
        }
    }
}
