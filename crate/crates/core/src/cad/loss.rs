//! Reconstruction and adversarial losses. All pixel sums are divided by the
//! number of terms so thresholds do not depend on frame resolution.

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Mean squared intensity difference.
pub fn intensity_loss(tape: &mut Tape, pred: Var, actual: Var) -> Result<Var> {
    let diff = tape.sub(actual, pred)?;
    Ok(tape.mean_square(diff))
}

/// Per-channel `[1, 0, -1]` difference filter, horizontal or vertical.
fn gradient_kernel(channels: usize, vertical: bool) -> Tensor {
    let (kh, kw) = if vertical { (3, 1) } else { (1, 3) };
    let mut k = Tensor::zeros([channels, channels, kh, kw]);
    for c in 0..channels {
        let base = (c * channels + c) * 3;
        k.data_mut()[base] = 1.0;
        k.data_mut()[base + 2] = -1.0;
    }
    k
}

fn gradient_term(tape: &mut Tape, pred: Var, actual: Var, vertical: bool) -> Result<Var> {
    let shape = tape.shape(pred).to_vec();
    let kernel = tape.constant(&gradient_kernel(shape[1], vertical));
    let gp = tape.conv2d(pred, kernel, 1, 0)?;
    let ga = tape.conv2d(actual, kernel, 1, 0)?;
    let diff = tape.sub(ga, gp)?;
    Ok(tape.mean_square(diff))
}

/// Mean squared difference of first-order image gradients taken with the
/// `[1, 0, -1]` filter at valid (unpadded) positions. Horizontal only unless
/// `vertical` is set, in which case the vertical term is added.
pub fn gradient_loss(tape: &mut Tape, pred: Var, actual: Var, vertical: bool) -> Result<Var> {
    let (ps, as_) = (tape.shape(pred).to_vec(), tape.shape(actual).to_vec());
    if ps != as_ {
        return Err(Error::dim(format!(
            "gradient loss: shapes {ps:?} and {as_:?} differ"
        )));
    }
    if ps.len() != 4 || ps[3] < 3 || (vertical && ps[2] < 3) {
        return Err(Error::dim(format!(
            "gradient loss needs a [N, C, H, W] frame at least 3 wide, got {ps:?}"
        )));
    }
    let horizontal = gradient_term(tape, pred, actual, false)?;
    if !vertical {
        return Ok(horizontal);
    }
    let vert = gradient_term(tape, pred, actual, true)?;
    tape.add(horizontal, vert)
}

/// Terms of the reconstruction loss as recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct ReconstructionTerms {
    pub intensity: Var,
    pub gradient: Var,
    pub total: Var,
}

pub fn reconstruction_terms(
    tape: &mut Tape,
    pred: Var,
    actual: Var,
    vertical: bool,
) -> Result<ReconstructionTerms> {
    let intensity = intensity_loss(tape, pred, actual)?;
    let gradient = gradient_loss(tape, pred, actual, vertical)?;
    let total = tape.add(intensity, gradient)?;
    Ok(ReconstructionTerms {
        intensity,
        gradient,
        total,
    })
}

/// `−E[log D(real)] − E[log(1 − D(pred))]` over the probability maps.
pub fn discriminator_loss(tape: &mut Tape, d_real: Var, d_pred: Var) -> Result<Var> {
    let real = tape.bce_mean(d_real, 1.0);
    let fake = tape.bce_mean(d_pred, 0.0);
    tape.add(real, fake)
}

/// `−E[log D(pred)]`.
pub fn generator_adv_loss(tape: &mut Tape, d_pred: Var) -> Var {
    tape.bce_mean(d_pred, 1.0)
}
