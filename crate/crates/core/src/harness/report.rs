//! Residuals of the relaxed equations measured from snapshots, convergence
//! orders under dt refinement, the local energy balance, and estimate ratios.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::Result;
use crate::iterate::algebra::{contract_grad, dot, mat_vec, norm_sq, outer_self};
use crate::iterate::{energy_residual, momentum_residual, ErFlow, Snapshot};
use crate::params::Cascade;
use crate::spectral::{div, grad, holder_norm, TorusField};
use crate::transport::bdf2_rate;

pub const MOMENTUM_ID: &str = "momentum = ∂t v + div(u⊗u) + ∇p − div R";
pub const ENERGY_ID: &str =
    "energy = ∂t|v|²/2 + v·∇p + v·div(u⊗u) + E′ − ½(∂t + u·∇)Tr R − div(Rv) − R:∇zᵀ − div φ";
pub const DIV_ID: &str = "div v";
pub const RATE_ID: &str = "∂t by BDF2 on (t − 2dt, t − dt, t)";

/// Residual norms at one time; L² norms are over the whole box, not averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub q: usize,
    pub t: f64,
    pub dt: f64,
    pub momentum_l2: f64,
    pub momentum_sup: f64,
    pub energy_l2: f64,
    pub energy_sup: f64,
    pub div_v_l2: f64,
    pub div_v_sup: f64,
    /// Size of the terms entering the residuals; the floor is relative to it.
    pub scale: f64,
}

impl ResidualRow {
    pub const HEADER: &'static str =
        "q,t,dt,momentum_l2,momentum_sup,energy_l2,energy_sup,div_v_l2,div_v_sup,scale";

    pub fn csv(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.q,
            self.t,
            self.dt,
            self.momentum_l2,
            self.momentum_sup,
            self.energy_l2,
            self.energy_sup,
            self.div_v_l2,
            self.div_v_sup,
            self.scale
        )
    }
}

/// Round-off allowance in units of machine epsilon.
pub const FLOOR_ULPS: f64 = 100.0;

/// Round-off level of an L² residual: a difference quotient of data of size
/// `scale` carries ε·scale/dt, integrated over a box of volume (2π)³.
pub fn floor_l2(scale: f64, dt: f64) -> f64 {
    FLOOR_ULPS * f64::EPSILON * scale.max(1.0) * (1.0 + 1.0 / dt) * (2.0 * std::f64::consts::PI).powf(1.5)
}

fn at_floor(row: &ResidualRow, value: f64) -> bool {
    value <= floor_l2(row.scale, row.dt)
}

/// Snapshots at t, t − dt, t − 2dt, newest first.
fn window(flow: &dyn ErFlow, t: f64, dt: f64) -> Result<Vec<Arc<Snapshot>>> {
    (0..3).map(|k| flow.snapshot(t - k as f64 * dt)).collect()
}

/// Both residuals at `t` with time derivatives from the snapshots at
/// t − 2dt, t − dt and t.
pub fn residual_row(flow: &dyn ErFlow, t: f64, dt: f64) -> Result<ResidualRow> {
    let s = window(flow, t, dt)?;
    let c = &s[0];
    let dv = bdf2_rate([&s[0].v, &s[1].v, &s[2].v], dt)?;
    let hv: Vec<TorusField> = s.iter().map(|x| norm_sq(&x.v).map(|f| f.scale(0.5))).collect::<Result<_>>()?;
    let tr: Vec<TorusField> = s.iter().map(|x| x.r.trace()).collect::<Result<_>>()?;
    let d_hv = bdf2_rate([&hv[0], &hv[1], &hv[2]], dt)?;
    let d_tr = bdf2_rate([&tr[0], &tr[1], &tr[2]], dt)?;
    let mom = momentum_residual(c, &dv)?;
    let en = energy_residual(c, &d_hv, &d_tr, flow.energy().rate(c.t))?;
    let dv_div = div(&c.v)?;
    let u = c.u();
    let scale = [c.r.sup_norm(), c.p.sup_norm(), u.sup_magnitude().powi(2), c.phi.sup_magnitude()]
        .into_iter()
        .fold(0.0, f64::max);
    Ok(ResidualRow {
        q: c.q,
        t: c.t,
        dt,
        momentum_l2: mom.l2_norm(),
        momentum_sup: mom.sup_magnitude(),
        energy_l2: en.l2_norm(),
        energy_sup: en.sup_norm(),
        div_v_l2: dv_div.l2_norm(),
        div_v_sup: dv_div.sup_norm(),
        scale,
    })
}

/// Residuals at one time for dt, dt/2, dt/4 and the observed orders.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub rows: [ResidualRow; 3],
    /// log₂ of successive L² ratios, coarse pair first; NaN once at the floor.
    pub momentum_order: [f64; 2],
    pub energy_order: [f64; 2],
}

fn orders(rows: &[ResidualRow; 3], value: impl Fn(&ResidualRow) -> f64) -> [f64; 2] {
    let r = rows.each_ref().map(&value);
    std::array::from_fn(|i| {
        if at_floor(&rows[i + 1], r[i + 1]) {
            f64::NAN
        } else {
            (r[i] / r[i + 1]).log2()
        }
    })
}

impl Refinement {
    pub fn momentum_at_floor(&self) -> bool {
        self.rows.iter().all(|r| at_floor(r, r.momentum_l2))
    }

    pub fn energy_at_floor(&self) -> bool {
        self.rows.iter().all(|r| at_floor(r, r.energy_l2))
    }

    /// Observed order ≥ `min` on the finest pair, or the residual is round-off throughout.
    pub fn momentum_converges(&self, min: f64) -> bool {
        self.momentum_at_floor() || self.momentum_order[1] >= min
    }

    pub fn energy_converges(&self, min: f64) -> bool {
        self.energy_at_floor() || self.energy_order[1] >= min
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let r = &self.rows;
        let _ = writeln!(s, "refinement q = {} t = {:.16e}", r[0].q, r[0].t);
        for row in r {
            let _ = writeln!(
                s,
                "  dt = {:.6e}  momentum L2 = {:.6e} sup = {:.6e}  energy L2 = {:.6e} sup = {:.6e}",
                row.dt, row.momentum_l2, row.momentum_sup, row.energy_l2, row.energy_sup
            );
        }
        let fmt = |o: [f64; 2], floor: bool| {
            if floor {
                "at round-off floor for every dt".to_string()
            } else {
                format!("orders {:.3}, {:.3}", o[0], o[1])
            }
        };
        let _ = writeln!(s, "  momentum: {}", fmt(self.momentum_order, self.momentum_at_floor()));
        let _ = writeln!(s, "  energy:   {}", fmt(self.energy_order, self.energy_at_floor()));
        s
    }
}

/// Residuals at `t` for dt = 4h, 2h, h.
pub fn refinement(flow: &dyn ErFlow, t: f64, h: f64) -> Result<Refinement> {
    let rows = [
        residual_row(flow, t, 4.0 * h)?,
        residual_row(flow, t, 2.0 * h)?,
        residual_row(flow, t, h)?,
    ];
    Ok(Refinement {
        momentum_order: orders(&rows, |r| r.momentum_l2),
        energy_order: orders(&rows, |r| r.energy_l2),
        rows,
    })
}

/// The local energy balance of v with every defect moved to the right:
/// D := −(∂t|v|²/2 + v·∇p + v·div(u⊗u)) + ½(∂t + u·∇)Tr R + div(Rv) + R:∇zᵀ + div φ.
/// For an exact flow D = E′ pointwise; in the limit the defects vanish and D
/// is the dissipation of the energy inequality, strict where E′ > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LeiSummary {
    pub t: f64,
    pub e_rate: f64,
    pub dissipation_mean: f64,
    pub dissipation_min: f64,
    /// sup and L¹ of D − E′, the signed residual.
    pub residual_sup: f64,
    pub residual_l1: f64,
    /// Itô correction ½ Σ|Q^{1/2}e_k|² per unit volume, reported for the u-form.
    pub noise_q: f64,
    pub stopping_time: f64,
    pub within_stopping_time: bool,
    /// E′ > 0 and D > 0 everywhere.
    pub strict: bool,
}

pub fn lei_check(flow: &dyn ErFlow, t: f64, dt: f64, noise_q: f64, stopping_time: f64) -> Result<LeiSummary> {
    let s = window(flow, t, dt)?;
    let c: &Snapshot = &s[0];
    let hv: Vec<TorusField> = s.iter().map(|x| norm_sq(&x.v).map(|f| f.scale(0.5))).collect::<Result<_>>()?;
    let tr: Vec<TorusField> = s.iter().map(|x| x.r.trace()).collect::<Result<_>>()?;
    let u = c.u();
    let mut d = bdf2_rate([&hv[0], &hv[1], &hv[2]], dt)?.scale(-1.0);
    d.axpy(-1.0, &dot(&c.v, &grad(&c.p)?)?)?;
    d.axpy(-1.0, &dot(&c.v, &div(&outer_self(&u)?)?)?)?;
    d.axpy(0.5, &bdf2_rate([&tr[0], &tr[1], &tr[2]], dt)?)?;
    d.axpy(0.5, &dot(&u, &grad(&tr[0])?)?)?;
    d.add_assign(&div(&mat_vec(&c.r, &c.v)?)?)?;
    d.add_assign(&contract_grad(&c.r, &c.z)?)?;
    d.add_assign(&div(&c.phi)?)?;
    let d = crate::iterate::drop_nyquist(&d);
    let e_rate = flow.energy().rate(c.t);
    let res = d.map(|x| x - e_rate);
    let min = d.comp(0).iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LeiSummary {
        t: c.t,
        e_rate,
        dissipation_mean: d.mean()[0],
        dissipation_min: min,
        residual_sup: res.sup_norm(),
        residual_l1: res.l1_norm(),
        noise_q,
        stopping_time,
        within_stopping_time: c.t <= stopping_time,
        strict: e_rate > 0.0 && min > 0.0,
    })
}

/// Measured / target for one inductive estimate; never a pass/fail verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRatio {
    pub q: usize,
    pub name: &'static str,
    pub n: i32,
    pub formula: &'static str,
    pub measured: f64,
    pub target: f64,
}

impl EstimateRatio {
    pub fn ratio(&self) -> f64 {
        self.measured / self.target
    }
}

/// Ratios of ‖v_q‖_N, ‖p_q‖_N, ‖R_q‖_N, ‖φ_q‖_N to their inductive bounds.
pub fn estimate_ratios(c: &Cascade, s: &Snapshot) -> Vec<EstimateRatio> {
    let q = s.q;
    let (cv, m) = (c.input.c_v, c.input.m_bar);
    let (lq, dq, dq1, g) = (c.lambda[q], c.delta[q], c.delta[q + 1], c.gamma);
    let mut out = Vec::new();
    let mut push = |name, n: i32, formula, field: &TorusField, target: f64| {
        out.push(EstimateRatio {
            q,
            name,
            n,
            formula,
            measured: holder_norm(field, n, 0.0),
            target,
        })
    };
    for n in 1..=2 {
        let nf = n as f64;
        push("V", n, "‖v_q‖_N / (C_v M̄ λ_q^N δ_q^½)", &s.v, cv * m * lq.powf(nf) * dq.sqrt());
        push("P", n, "‖p_q‖_N / (M̄ λ_q^N δ_q)", &s.p, m * lq.powf(nf) * dq);
    }
    for n in 0..=2 {
        let nf = n as f64;
        push("R", n, "‖R_q‖_N / (M̄ λ_q^(N−γ) δ_{q+1})", &s.r, m * lq.powf(nf - g) * dq1);
        push(
            "Phi",
            n,
            "‖φ_q‖_N / (M̄ λ_q^(N−3γ/2) δ_{q+1}^(3/2))",
            &s.phi,
            m * lq.powf(nf - 1.5 * g) * dq1.powf(1.5),
        );
    }
    out
}

/// Increments between consecutive levels at the same time, against their bounds.
pub fn distance_ratios(c: &Cascade, old: &Snapshot, new: &Snapshot) -> Result<Vec<EstimateRatio>> {
    let q = old.q;
    let (cv, m) = (c.input.c_v, c.input.m_bar);
    let (lq, lq1, dq1, g) = (c.lambda[q], c.lambda[q + 1], c.delta[q + 1], c.gamma);
    let both = |f: &TorusField| holder_norm(f, 0, 0.0) + holder_norm(f, 1, 0.0).max(0.0) / lq1;
    let dv = new.v.sub(&old.v)?;
    let dp = new.p.sub(&old.p)?;
    Ok(vec![
        EstimateRatio {
            q,
            name: "distance_v",
            n: 1,
            formula: "(‖v_{q+1}−v_q‖_0 + ‖v_{q+1}−v_q‖_1/λ_{q+1}) / (C_v M̄ δ_{q+1}^½ λ_q^(−γ/2))",
            measured: both(&dv),
            target: cv * m * dq1.sqrt() * lq.powf(-0.5 * g),
        },
        EstimateRatio {
            q,
            name: "distance_p",
            n: 1,
            formula: "(‖p_{q+1}−p_q‖_0 + ‖p_{q+1}−p_q‖_1/λ_{q+1}) / (M̄ δ_{q+1})",
            measured: both(&dp),
            target: m * dq1,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iterate::{EnergyProfile, InitialTuple};
    use crate::noise::{sample_path, NoiseSpec};
    use crate::spectral::GridSpec;

    fn level0(amplitude: f64, energy: EnergyProfile) -> InitialTuple {
        let spec = NoiseSpec {
            s_q: 128.0,
            k_max: 1,
            seed: 5,
            dt: 1e-3,
            horizon: 1.0,
            amplitude,
        };
        let path = Arc::new(sample_path(&spec).unwrap());
        InitialTuple::new(GridSpec::new(16).unwrap(), path, 0.05, energy)
    }

    #[test]
    fn constructed_tuple_is_at_floor() {
        let f = level0(1.0, EnergyProfile::Linear { e0: 0.2, slope: 1.0 });
        let r = refinement(&f, 0.4, 1e-3).unwrap();
        assert!(r.momentum_at_floor() && r.energy_at_floor(), "{}", r.summary());
        let lei = lei_check(&f, 0.4, 1e-3, 0.0, 2.0).unwrap();
        assert!((lei.dissipation_mean - 1.0).abs() < 1e-10 && lei.strict, "{lei:?}");
        assert!(lei.residual_sup < 1e-10);
    }

    // A flow whose current has been dropped must show a residual of the size of div φ.
    struct NoCurrent(InitialTuple);

    impl ErFlow for NoCurrent {
        fn level(&self) -> usize {
            0
        }
        fn grid(&self) -> GridSpec {
            self.0.grid()
        }
        fn energy(&self) -> &EnergyProfile {
            self.0.energy()
        }
        fn snapshot(&self, t: f64) -> Result<Arc<Snapshot>> {
            let mut s = (*self.0.snapshot(t)?).clone();
            s.phi = s.phi.scale(0.0);
            Ok(Arc::new(s))
        }
    }

    #[test]
    fn dropping_the_current_is_detected() {
        let f = level0(1.0, EnergyProfile::Constant(0.1));
        let s = f.snapshot(0.4).unwrap();
        let expect = div(&s.phi).unwrap().sup_norm();
        assert!(expect > 1e-4);
        let row = residual_row(&NoCurrent(f), 0.4, 1e-3).unwrap();
        assert!(!at_floor(&row, row.energy_l2));
        assert!((row.energy_sup - expect).abs() < 1e-9 * expect);
    }

    // v = (a(t) sin y, 0, 0) with R₁₂ = −a′(t) cos y solves the momentum
    // line exactly; BDF2 leaves an O(dt²) defect.
    struct Shear(GridSpec, EnergyProfile);

    impl ErFlow for Shear {
        fn level(&self) -> usize {
            0
        }
        fn grid(&self) -> GridSpec {
            self.0
        }
        fn energy(&self) -> &EnergyProfile {
            &self.1
        }
        fn snapshot(&self, t: f64) -> Result<Arc<Snapshot>> {
            let g = self.0;
            let (a, da) = (t.sin(), t.cos());
            Ok(Arc::new(Snapshot {
                q: 0,
                t,
                v: TorusField::vector_fn(g, |x| [a * x[1].sin(), 0.0, 0.0]),
                p: TorusField::zeros(g, crate::spectral::Rank::Scalar),
                r: TorusField::sym_fn(g, |x| {
                    let c = -da * x[1].cos();
                    [[0.0, c, 0.0], [c, 0.0, 0.0], [0.0, 0.0, 0.0]]
                }),
                phi: TorusField::zeros(g, crate::spectral::Rank::Vector),
                z: TorusField::zeros(g, crate::spectral::Rank::Vector),
            }))
        }
    }

    #[test]
    fn halving_dt_gives_second_order() {
        let f = Shear(GridSpec::new(8).unwrap(), EnergyProfile::Constant(0.0));
        let r = refinement(&f, 0.7, 0.01).unwrap();
        assert!(!r.momentum_at_floor());
        for o in r.momentum_order {
            assert!((o - 2.0).abs() < 0.05, "{}", r.summary());
        }
        assert!(r.momentum_converges(1.9));
    }

    #[test]
    fn zero_state_is_identically_zero() {
        let f = level0(0.0, EnergyProfile::Constant(0.0));
        let lei = lei_check(&f, 0.2, 1e-3, 0.0, 2.0).unwrap();
        assert_eq!((lei.dissipation_mean, lei.residual_sup, lei.residual_l1), (0.0, 0.0, 0.0));
        assert!(!lei.strict);
    }
}
