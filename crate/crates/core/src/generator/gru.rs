//! Gated recurrent unit with fused gate matrices.

use crate::numerics::{init_normal, NumericsError, ParamId, ParamStore, Rng, Tape, Tensor, Var};

/// Weights of one GRU cell. The input matrix holds the update, reset and
/// candidate blocks side by side; the recurrent matrix is split because the
/// candidate reads `r ⊙ h`.
#[derive(Clone, Copy, Debug)]
pub struct GruParams {
    /// `[input, 3·hidden]`
    pub w_x: ParamId,
    /// `[hidden, 2·hidden]`, update and reset blocks.
    pub u_zr: ParamId,
    /// `[hidden, hidden]`
    pub u_c: ParamId,
    /// `[1, 3·hidden]`
    pub b: ParamId,
    pub hidden: usize,
}

impl GruParams {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        std: f64,
        rng: &mut Rng,
    ) -> Self {
        Self {
            w_x: store.add(format!("{prefix}.W_x"), init_normal(input, 3 * hidden, std, rng)),
            u_zr: store.add(format!("{prefix}.U_zr"), init_normal(hidden, 2 * hidden, std, rng)),
            u_c: store.add(format!("{prefix}.U_c"), init_normal(hidden, hidden, std, rng)),
            b: store.add(format!("{prefix}.b"), Tensor::zeros(1, 3 * hidden)),
            hidden,
        }
    }

    pub fn resolve(store: &ParamStore, prefix: &str) -> Result<Self, NumericsError> {
        let id = |name: &str| {
            let full = format!("{prefix}.{name}");
            store.id(&full).ok_or(NumericsError::UnknownParam(full))
        };
        let u_c = id("U_c")?;
        Ok(Self {
            w_x: id("W_x")?,
            u_zr: id("U_zr")?,
            u_c,
            b: id("b")?,
            hidden: store.get(u_c).rows(),
        })
    }

    /// One step: `h' = (1 − z) ⊙ h + z ⊙ tanh(x W_c + (r ⊙ h) U_c + b_c)`.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var) -> Result<Var, NumericsError> {
        let n = self.hidden;
        let (w_x, u_zr, u_c, b) = (
            tape.param(self.w_x),
            tape.param(self.u_zr),
            tape.param(self.u_c),
            tape.param(self.b),
        );
        let xs = tape.linear(x, w_x, Some(b))?;
        let hs = tape.matmul(h, u_zr)?;
        let x_zr = tape.slice_cols(xs, 0, 2 * n)?;
        let zr = tape.add(x_zr, hs)?;
        let zr = tape.sigmoid(zr)?;
        let z = tape.slice_cols(zr, 0, n)?;
        let r = tape.slice_cols(zr, n, n)?;
        let rh = tape.mul(r, h)?;
        let rh = tape.matmul(rh, u_c)?;
        let x_c = tape.slice_cols(xs, 2 * n, n)?;
        let cand = tape.add(x_c, rh)?;
        let cand = tape.tanh(cand)?;
        let delta = tape.sub(cand, h)?;
        let delta = tape.mul(z, delta)?;
        tape.add(h, delta)
    }
}
