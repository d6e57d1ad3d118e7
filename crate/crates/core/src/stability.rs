//! Layout stability across neighboring hyperparameter values: axis-mirror
//! alignment and seeded projection chains.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::engines::{Embedding2D, Engine, EngineRequest, HyperValue};
use crate::error::{Error, Result};

/// Candidate sign pairs in tie-breaking order.
pub const MIRROR_ORDER: [(i8, i8); 4] = [(1, 1), (-1, 1), (1, -1), (-1, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorChoice {
    pub sign_x: i8,
    pub sign_y: i8,
    /// Mean squared coordinate difference to the reference after mirroring.
    pub mse: f64,
}

fn mirrored_mse(current: ArrayView2<f64>, reference: ArrayView2<f64>, sx: f64, sy: f64) -> f64 {
    let mut total = 0.0;
    for (c, r) in current.rows().into_iter().zip(reference.rows()) {
        let dx = sx * c[0] - r[0];
        let dy = sy * c[1] - r[1];
        total += dx * dx + dy * dy;
    }
    total / (2 * current.nrows()).max(1) as f64
}

/// Picks the axis mirroring of `current` with the smallest MSE to `reference`.
/// Exact ties go to the earliest entry of [`MIRROR_ORDER`].
pub fn choose_mirror(current: ArrayView2<f64>, reference: ArrayView2<f64>) -> Result<MirrorChoice> {
    if current.dim() != reference.dim() {
        return Err(Error::DimensionMismatch {
            context: "mirror alignment rows",
            expected: reference.nrows(),
            actual: current.nrows(),
        });
    }
    if current.ncols() != 2 {
        return Err(Error::DimensionMismatch {
            context: "mirror alignment columns",
            expected: 2,
            actual: current.ncols(),
        });
    }
    let mut best: Option<MirrorChoice> = None;
    for (sx, sy) in MIRROR_ORDER {
        let mse = mirrored_mse(current, reference, sx as f64, sy as f64);
        if best.is_none_or(|b| mse < b.mse) {
            best = Some(MirrorChoice {
                sign_x: sx,
                sign_y: sy,
                mse,
            });
        }
    }
    Ok(best.expect("four candidates"))
}

/// Applies a sign pair to the columns of a layout.
pub fn apply_mirror(coords: ArrayView2<f64>, choice: &MirrorChoice) -> Array2<f64> {
    let mut out = coords.to_owned();
    let (sx, sy) = (choice.sign_x as f64, choice.sign_y as f64);
    for mut row in out.rows_mut() {
        row[0] *= sx;
        row[1] *= sy;
    }
    out
}

/// Mirrors `current` to best match `reference`.
pub fn align_mirror(current: &Embedding2D, reference: &Embedding2D) -> Result<(Embedding2D, MirrorChoice)> {
    let choice = choose_mirror(current.coords.view(), reference.coords.view())?;
    let aligned = Embedding2D {
        coords: apply_mirror(current.coords.view(), &choice),
        ..current.clone()
    };
    Ok((aligned, choice))
}

fn check_ascending(h_values: &[HyperValue]) -> Result<()> {
    for pair in h_values.windows(2) {
        if let (Some(a), Some(b)) = (pair[0].as_scalar(), pair[1].as_scalar()) {
            if !(a < b) {
                return Err(Error::InvalidArgument(format!(
                    "hyperparameter values must be strictly ascending, got {a} then {b}"
                )));
            }
        }
    }
    Ok(())
}

/// Projects `data` at every value of `h_values` in order. Each run after the
/// first starts from its aligned predecessor when the engine accepts a
/// starting layout, and every output after the first is mirror-aligned to
/// the output before it.
pub fn seeded_chain(
    engine: &Engine,
    data: ArrayView2<f64>,
    h_values: &[HyperValue],
    seed: u64,
) -> Result<Vec<Embedding2D>> {
    if h_values.is_empty() {
        return Err(Error::InvalidArgument("seeded chain needs at least one h value".into()));
    }
    check_ascending(h_values)?;
    let mut out: Vec<Embedding2D> = Vec::with_capacity(h_values.len());
    for h in h_values {
        let previous = out.last();
        let init = previous
            .filter(|_| engine.supports_init())
            .map(|p| p.coords.view());
        let raw = engine
            .project(EngineRequest {
                data,
                h,
                init,
                seed,
            })
            .map_err(|e| Error::Engine {
                h: h.to_string(),
                source: Box::new(e),
            })?;
        let next = match previous {
            Some(p) => align_mirror(&raw, p)?.0,
            None => raw,
        };
        log::debug!("chain step h = {h}: objective {:.6}", next.objective);
        out.push(next);
    }
    Ok(out)
}
