//! Flow maps of the regularised velocity and mollification along them.

pub mod band;
pub mod flow;
pub mod mollify;

pub use band::{BandField, BandHistory, Frozen};
pub use flow::{det3, inverse3, solve_flow, FlowMap, DET_GUARD};
pub use mollify::{lagrangian_mollify, Mollified, TimeKernel};

use crate::error::{Error, Result};
use crate::spectral::{advect_pointwise, TorusField};

/// (f(t+dt) − f(t−dt))/(2dt) + u·∇f(t).
pub fn advective_derivative(
    prev: Option<&TorusField>,
    cur: Option<&TorusField>,
    next: Option<&TorusField>,
    u: &TorusField,
    dt: f64,
) -> Result<TorusField> {
    let (Some(prev), Some(cur), Some(next)) = (prev, cur, next) else {
        return Err(Error::Snapshots("advective derivative needs three snapshots".into()));
    };
    let mut out = next.sub(prev)?.scale(0.5 / dt);
    out.add_assign(&advect_pointwise(u, cur)?)?;
    Ok(out)
}

/// Fourth-order one-sided derivative from f(t), f(t−h), …, f(t−4h).
pub fn causal_rate(values: [&TorusField; 5], h: f64) -> Result<TorusField> {
    const C: [f64; 5] = [25.0, -48.0, 36.0, -16.0, 3.0];
    let mut out = values[0].scale(C[0] / (12.0 * h));
    for j in 1..5 {
        out.axpy(C[j] / (12.0 * h), values[j])?;
    }
    Ok(out)
}

/// Second-order one-sided derivative from f(t), f(t−dt), f(t−2dt).
pub fn bdf2_rate(values: [&TorusField; 3], dt: f64) -> Result<TorusField> {
    let mut out = values[0].scale(1.5 / dt);
    out.axpy(-2.0 / dt, values[1])?;
    out.axpy(0.5 / dt, values[2])?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{GridSpec, Rank};

    #[test]
    fn centered_difference_exact_for_linear_in_time() {
        let g = GridSpec::new(8).unwrap();
        let base = TorusField::scalar_fn(g, |x| x[0].sin() * x[1].cos());
        let at = |t: f64| base.scale(t);
        let zero = TorusField::zeros(g, Rank::Vector);
        let d = advective_derivative(Some(&at(0.9)), Some(&at(1.0)), Some(&at(1.1)), &zero, 0.1).unwrap();
        assert!(d.sub(&base).unwrap().sup_norm() < 1e-12);
        assert!(advective_derivative(None, Some(&base), Some(&base), &zero, 0.1).is_err());
    }

    #[test]
    fn transported_profile_has_small_material_derivative() {
        let g = GridSpec::new(16).unwrap();
        let c = [0.3, -0.1, 0.2];
        let prof = |t: f64| TorusField::scalar_fn(g, |x| (x[0] - c[0] * t).sin() + (x[1] - c[1] * t + x[2] - c[2] * t).cos());
        let u = TorusField::constant(g, Rank::Vector, &c);
        let err = |dt: f64| {
            advective_derivative(Some(&prof(1.0 - dt)), Some(&prof(1.0)), Some(&prof(1.0 + dt)), &u, dt)
                .unwrap()
                .sup_norm()
        };
        let (a, b) = (err(0.02), err(0.01));
        assert!(a < 1e-4 && (a / b - 4.0).abs() < 0.1, "{a} {b}");
    }

    #[test]
    fn one_sided_rates() {
        let g = GridSpec::new(8).unwrap();
        let base = TorusField::scalar_fn(g, |x| x[2].cos());
        let f = |t: f64| base.scale(t * t * t);
        let h = 1e-2;
        let v: Vec<TorusField> = (0..5).map(|j| f(1.0 - j as f64 * h)).collect();
        let r4 = causal_rate([&v[0], &v[1], &v[2], &v[3], &v[4]], h).unwrap();
        assert!(r4.sub(&base.scale(3.0)).unwrap().sup_norm() < 1e-12);
        let r2 = bdf2_rate([&v[0], &v[1], &v[2]], h).unwrap();
        assert!(r2.sub(&base.scale(3.0)).unwrap().sup_norm() < 3.0 * h * h);
    }
}
