//! The relaxed momentum and local-energy equations, as residual maps.

use super::algebra::{contract_grad, dot, mat_vec, norm_sq, outer_self};
use super::Snapshot;
use crate::error::Result;
use crate::spectral::{div, from_spectrum, grad, to_spectrum, TorusField};

/// Zero every mode on a Nyquist plane. Odd derivatives already vanish there,
/// so neither residual can be closed at those modes by any stress or current.
pub fn drop_nyquist(f: &TorusField) -> TorusField {
    let g = f.grid();
    let mut s = to_spectrum(f);
    let half = (g.n() / 2) as i64;
    s.apply_multiplier(|k| if k.iter().any(|c| c.abs() == half) { 0.0 } else { 1.0 });
    from_spectrum(s).expect("same shape")
}

/// ∂_t v + div(u⊗u) + ∇p − div R, u = v + z.
pub fn momentum_residual(s: &Snapshot, dv_dt: &TorusField) -> Result<TorusField> {
    let u = s.u();
    let mut r = dv_dt.clone();
    r.add_assign(&div(&outer_self(&u)?)?)?;
    r.add_assign(&grad(&s.p)?)?;
    r.axpy(-1.0, &div(&s.r)?)?;
    Ok(drop_nyquist(&r))
}

/// LHS − RHS of the local energy equation:
/// ∂_t|v|²/2 + v·∇p + v·div(u⊗u) + E′ − ½D_t Tr R − div(Rv) − R:∇zᵀ − div φ,
/// with D_t = ∂_t + u·∇. The time derivatives are supplied by the caller.
pub fn energy_residual(
    s: &Snapshot,
    d_half_v2: &TorusField,
    d_tr_r: &TorusField,
    e_rate: f64,
) -> Result<TorusField> {
    let u = s.u();
    let tr = s.r.trace()?;
    let mut r = d_half_v2.clone();
    r.add_assign(&dot(&s.v, &grad(&s.p)?)?)?;
    r.add_assign(&dot(&s.v, &div(&outer_self(&u)?)?)?)?;
    r = r.map(|x| x + e_rate);
    r.axpy(-0.5, d_tr_r)?;
    r.axpy(-0.5, &dot(&u, &grad(&tr)?)?)?;
    r.axpy(-1.0, &div(&mat_vec(&s.r, &s.v)?)?)?;
    r.axpy(-1.0, &contract_grad(&s.r, &s.z)?)?;
    r.axpy(-1.0, &div(&s.phi)?)?;
    Ok(drop_nyquist(&r))
}

/// |v|²/2, the quantity whose rate enters the energy residual.
pub fn half_v2(s: &Snapshot) -> Result<TorusField> {
    Ok(norm_sq(&s.v)?.scale(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iterate::algebra::identity;
    use crate::spectral::{GridSpec, Rank};

    // A steady shear v = (sin y, 0, 0) with p = 0, R = 0 solves Euler; with
    // R = c Id, φ = 0 the energy equation holds with E′ = 0.
    #[test]
    fn steady_shear_is_exact() {
        let g = GridSpec::new(16).unwrap();
        let s = Snapshot {
            q: 0,
            t: 0.0,
            v: TorusField::vector_fn(g, |x| [x[1].sin(), 0.0, 0.0]),
            p: TorusField::zeros(g, Rank::Scalar),
            r: identity(g, 0.7),
            phi: TorusField::zeros(g, Rank::Vector),
            z: TorusField::zeros(g, Rank::Vector),
        };
        let zv = TorusField::zeros(g, Rank::Vector);
        let zs = TorusField::zeros(g, Rank::Scalar);
        assert!(momentum_residual(&s, &zv).unwrap().sup_norm() < 1e-13);
        let e = energy_residual(&s, &zs, &zs, 0.0).unwrap();
        assert!(e.sup_norm() < 1e-13);
        // a wrong loss rate shows up as a constant
        let e = energy_residual(&s, &zs, &zs, 0.25).unwrap();
        assert!((e.mean()[0] - 0.25).abs() < 1e-13);
    }

    #[test]
    fn nyquist_filter_kills_only_nyquist() {
        let g = GridSpec::new(8).unwrap();
        let f = TorusField::scalar_fn(g, |x| (4.0 * x[0]).cos() + x[1].sin());
        let d = drop_nyquist(&f);
        let want = TorusField::scalar_fn(g, |x| x[1].sin());
        assert!(d.sub(&want).unwrap().sup_norm() < 1e-13);
    }
}
