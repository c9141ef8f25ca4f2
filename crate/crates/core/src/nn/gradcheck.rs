//! Central finite-difference check of the analytic gradients.

use super::dropout::DropoutMask;
use super::forward::{Mode, Structure};
use super::loss::softmax_cross_entropy;
use super::model::Model;
use crate::error::Result;
use crate::graph::NodeInput;
use crate::linalg::Matrix;
use crate::rng::SeededRng;

/// Dropout handling for a gradient check.
pub enum CheckMode<'a> {
    Eval,
    /// Draw masks once from the generator and reuse them for every
    /// difference evaluation.
    FrozenDropout(&'a mut SeededRng),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `None` for the input surface, otherwise the parameter tensor index.
    pub worst_tensor: Option<usize>,
    pub worst_index: usize,
    pub entries_checked: usize,
}

/// Denominator floor of the relative error. With `h = 1e-6` a central
/// difference of an O(1) loss carries about 1e-10 of rounding noise, so
/// entries smaller than this are effectively held to an absolute bound of
/// `tolerance · 1e-4`.
pub const REL_ERR_FLOOR: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// Compares every parameter entry and every entry of the input surface
/// against central differences with step `h`.
///
/// The relative error of each entry uses the denominator
/// `max(|analytic|, |numeric|, REL_ERR_FLOOR)`.
pub fn grad_check(
    model: &Model,
    input: &NodeInput,
    structure: Structure<'_>,
    labels: &[usize],
    mask: &[bool],
    h: f64,
    mode: CheckMode<'_>,
) -> Result<GradCheckReport> {
    let (rows, cols) = model.surface_shape(input);
    let zero = Matrix::zeros(rows, cols);

    let (masks, analytic) = {
        let mut fwd_mode = match mode {
            CheckMode::Eval => Mode::Eval,
            CheckMode::FrozenDropout(rng) => Mode::Train(rng),
        };
        let (logits, tape) = model.forward(input, Some(&zero), structure, &mut fwd_mode)?;
        let (_, d_logits) = softmax_cross_entropy(&logits, labels, mask)?;
        let grads = model.backward(&tape, &d_logits, true)?;
        (tape.masks.clone(), grads)
    };
    let masks: Vec<Option<DropoutMask>> = masks;

    let loss_at = |m: &Model, delta: &Matrix| -> Result<f64> {
        let (logits, _) = m.forward(input, Some(delta), structure, &mut Mode::Replay(&masks))?;
        Ok(softmax_cross_entropy(&logits, labels, mask)?.0)
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_tensor: None,
        worst_index: 0,
        entries_checked: 0,
    };
    let mut record = |err: f64, tensor: Option<usize>, index: usize| {
        report.entries_checked += 1;
        if err > report.max_rel_err || err.is_nan() {
            report.max_rel_err = err;
            report.worst_tensor = tensor;
            report.worst_index = index;
        }
    };

    let mut probe = model.clone();
    for (t, grad) in analytic.params.iter().enumerate() {
        for (j, &a) in grad.iter().enumerate() {
            let orig = probe.params()[t][j];
            probe.params_mut()[t][j] = orig + h;
            let plus = loss_at(&probe, &zero)?;
            probe.params_mut()[t][j] = orig - h;
            let minus = loss_at(&probe, &zero)?;
            probe.params_mut()[t][j] = orig;
            record(rel_err(a, (plus - minus) / (2.0 * h)), Some(t), j);
        }
    }

    let d_input = analytic.d_input.expect("requested");
    let mut delta = zero.clone();
    for (j, &a) in d_input.as_slice().iter().enumerate() {
        delta.as_mut_slice()[j] = h;
        let plus = loss_at(model, &delta)?;
        delta.as_mut_slice()[j] = -h;
        let minus = loss_at(model, &delta)?;
        delta.as_mut_slice()[j] = 0.0;
        record(rel_err(a, (plus - minus) / (2.0 * h)), None, j);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CsrGraph, NormalizedAdjacency};
    use crate::nn::model::{Affine, Layer, Task};
    use crate::rng::{stream, Stream};

    #[test]
    fn linear_model_self_test() {
        let g = CsrGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let s = NormalizedAdjacency::from_graph(&g);
        let mut rng = stream(11, Stream::Init);
        let model = Model::new(
            None,
            vec![Layer::Gcn(Affine::glorot(3, 2, &mut rng))],
            Task::NodeClassification,
        )
        .unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, -0.3], [0.5, -0.1, 0.0], [0.9, 0.4, 0.2], [-0.7, 0.3, 0.1]]).unwrap();
        let report = grad_check(
            &model,
            &x.into(),
            (&s).into(),
            &[0, 1, 1, 0],
            &[true, true, false, true],
            1e-6,
            CheckMode::Eval,
        )
        .unwrap();
        assert!(report.max_rel_err <= 1e-7, "{report:?}");
        assert_eq!(report.entries_checked, 3 * 2 + 2 + 4 * 3);
    }
}
