//! Dense networks, reverse-mode differentiation and Adam.
//!
//! Parameters live in one flat vector ([`NetworkParams`]) so finite-difference
//! checks and checkpoints operate on a single slice. A [`Tape`] records
//! matrix-level operations; [`Tape::gradient`] walks it backwards from a
//! scalar loss.

mod adam;
mod checkpoint;
mod matrix;
mod params;
mod tape;

pub use adam::AdamState;
pub use checkpoint::{MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION};
pub use matrix::Matrix;
pub use params::{mlp_shapes, Activation, LayerShape, NetworkParams};
pub use tape::{Grads, ParamVars, Tape, Var};

use crate::Result;

/// Value and flat gradient of a loss built from one parameter set.
pub fn value_and_grad<F>(params: &NetworkParams, build: F) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> Fn(&'t Tape, &ParamVars<'t>) -> Var<'t>,
{
    let tape = Tape::new();
    let pv = tape.params(params);
    let loss = build(&tape, &pv);
    let grads = tape.gradient(loss)?;
    Ok((loss.scalar(), grads.wrt(&pv)))
}

/// Loss value only, for finite-difference checks.
pub fn value_of<F>(params: &NetworkParams, build: F) -> f64
where
    F: for<'t> Fn(&'t Tape, &ParamVars<'t>) -> Var<'t>,
{
    let tape = Tape::new();
    let pv = tape.frozen_params(params);
    build(&tape, &pv).scalar()
}

/// Central finite-difference gradient of `f` around `params`.
pub fn finite_difference<F>(params: &NetworkParams, h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&NetworkParams) -> f64,
{
    let mut p = params.clone();
    (0..params.len())
        .map(|i| {
            let orig = p.values()[i];
            p.values_mut()[i] = orig + h;
            let up = f(&p);
            p.values_mut()[i] = orig - h;
            let down = f(&p);
            p.values_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}
