//! The parameter cascade: frequencies λ_q, amplitudes δ_q and the derived
//! scales ε, μ, l, l_temp, i_q, ρ.

use std::fmt::Write as _;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::geometry::{build_families, measure_n0};

/// Exponents (x₁..x₄) for q ≥ 1 and (x₅, x₆) for q = 0 of
/// λ_q^{x₁} λ_{q+1}^{x₂} δ_q^{x₃} δ_{q+1}^{x₄}, resp. λ₀^{x₅} λ₁^{x₆}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents(pub [f64; 6]);

/// Smallest N₀ over the 27 stress families.
pub fn inf_family_n0() -> f64 {
    static N0: OnceLock<f64> = OnceLock::new();
    *N0.get_or_init(|| {
        let fam = build_families().expect("hardcoded family search succeeds");
        fam.stress
            .iter()
            .map(|f| measure_n0(f).expect("validated family"))
            .fold(f64::INFINITY, f64::min)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeInput {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub delta_h: f64,
    /// Threshold of the stopping time.
    pub l_const: f64,
    pub t_final: f64,
    pub kappa: f64,
    pub q_max: usize,
    pub c_v: f64,
    pub m_bar: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for CascadeInput {
    fn default() -> Self {
        Self {
            a: 4.0,
            b: 1.25,
            alpha: 0.1,
            delta_h: 0.05,
            l_const: 10.0,
            t_final: 1.0,
            kappa: 0.5,
            q_max: 1,
            c_v: 1.0,
            m_bar: 1.0,
            c1: 1.0,
            c2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    pub input: CascadeInput,
    pub gamma: f64,
    pub nu: f64,
    pub n0: u32,
    pub h0: u32,
    pub n1: u32,
    pub inf_n0: f64,
    pub c_eps: f64,
    /// Constant C in ρ; 1 until the pipe geometry fixes it.
    pub c_rho: f64,
    pub m: Exponents,
    pub h: Exponents,
    pub u: Exponents,
    pub e: Exponents,
    pub s: Exponents,
    /// Indexed 0..=q_max+2.
    pub lambda: Vec<f64>,
    pub delta_bar: Vec<f64>,
    pub delta: Vec<f64>,
    /// Indexed 0..=q_max.
    pub eps: Vec<f64>,
    pub mu: Vec<f64>,
    pub ell: Vec<f64>,
    pub ell_temp: Vec<f64>,
    pub i_q: Vec<f64>,
    pub rho: Vec<f64>,
    pub rho1: Vec<f64>,
}

pub fn build_cascade(input: CascadeInput) -> Result<Cascade> {
    build_cascade_with(input, inf_family_n0())
}

pub fn build_cascade_with(input: CascadeInput, inf_n0: f64) -> Result<Cascade> {
    let CascadeInput {
        a, b, alpha, delta_h, ..
    } = input;
    if !(a > 2.0) {
        return Err(Error::Parameter(format!("a must exceed 2, got {a}")));
    }
    if !(b > 1.0) {
        return Err(Error::Parameter(format!("b must exceed 1, got {b}")));
    }
    if !(alpha > 0.0 && alpha < 1.0 / 7.0) {
        return Err(Error::Parameter(format!("α must lie in (0, 1/7), got {alpha}")));
    }
    if !(delta_h > 0.0 && delta_h < 0.5) {
        return Err(Error::Parameter(format!("δ must lie in (0, 1/2), got {delta_h}")));
    }
    let ratio = (0.5 + delta_h) / (0.5 - delta_h);
    let bound = ((1.0 - 4.0 * alpha) / (3.0 * alpha)).min(4.0 / 3.0);
    if !(ratio < bound) {
        return Err(Error::Parameter(format!(
            "δ = {delta_h} violates (1/2+δ)/(1/2−δ) = {ratio:.4} < {bound:.4}"
        )));
    }
    if input.q_max < 1 {
        return Err(Error::Parameter("q_max must be at least 1".into()));
    }
    if !(input.t_final > 0.0 && input.l_const >= 0.0 && input.kappa > 0.0 && input.kappa < 1.0) {
        return Err(Error::Parameter("need T > 0, L ≥ 0 and κ ∈ (0, 1)".into()));
    }
    let gamma = (b - 1.0).powi(2);
    let nu = (1.0 - 7.0 * alpha) / (3.0 * alpha);
    let n0 = (24.0 * b / (b - 1.0)).ceil() as u32 - 1;
    let h0 = (8.0 * b / (b - 1.0)).ceil() as u32;

    let m5 = 7.0 * alpha / (1.0 - 2.0 * delta_h);
    let k = 1.0 / (0.5 - delta_h);
    let m = Exponents([0.0, 0.0, -2.0 * k, 3.5 * k, m5, -m5]);
    let h = Exponents([-1.0, 0.0, -(2.0 + nu), (3.0 + 2.0 * nu) / 2.0, -0.5, -0.5]);
    let u = Exponents([-1.0, 0.0, -(2.0 + nu), 2.0 + nu, -0.5, -0.5]);
    let e = Exponents([-1.0, 0.0, -(4.0 + nu) / 2.0, (4.0 + nu) / 2.0, -0.5, -0.5]);
    let s = Exponents([-1.0, 0.0, -(4.0 + nu) / 2.0, (3.0 + nu) / 2.0, -0.5, -0.5]);

    let top = input.q_max + 2;
    let lambda: Vec<f64> = (0..=top).map(|q| a.powf(b.powi(q as i32)).floor()).collect();
    if lambda.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter(format!("λ_q not strictly increasing: {lambda:?}")));
    }
    let delta_bar: Vec<f64> = lambda.iter().map(|l| l.powf(-2.0 * alpha)).collect();
    let delta: Vec<f64> = (0..=top)
        .map(|q| {
            if q == 0 {
                lambda[0].powf(gamma)
            } else {
                lambda[0].powf(gamma) * delta_bar[q] * lambda[1].powf(2.0 * alpha)
            }
        })
        .collect();

    let c_eps = (input.c_v * input.m_bar + input.l_const).recip() * (0.5f64).min(inf_n0 / 6.0);
    let mut c = Cascade {
        input,
        gamma,
        nu,
        n0,
        h0,
        n1: n0 + 5,
        inf_n0,
        c_eps,
        c_rho: 1.0,
        m,
        h,
        u,
        e,
        s,
        lambda,
        delta_bar,
        delta,
        eps: vec![],
        mu: vec![],
        ell: vec![],
        ell_temp: vec![],
        i_q: vec![],
        rho: vec![],
        rho1: vec![],
    };
    let qs = 0..=c.input.q_max;
    c.eps = qs.clone().map(|q| c_eps * c.scale(q, &c.h)).collect();
    c.mu = qs.clone().map(|q| c.scale(q, &c.u)).collect();
    c.ell = qs.clone().map(|q| c.scale(q, &c.e)).collect();
    c.ell_temp = qs.clone().map(|q| c.scale(q, &c.s)).collect();
    c.i_q = qs.clone().map(|q| c.scale(q, &c.m)).collect();
    c.rho1 = qs
        .map(|q| c.lambda[q].powf(-1.5 * gamma) * c.delta[q + 1].powf(1.5))
        .collect();
    c.set_rho_constant(1.0);
    Ok(c)
}

impl Cascade {
    /// λ_q^{x₁} λ_{q+1}^{x₂} δ_q^{x₃} δ_{q+1}^{x₄} (q ≥ 1) or λ₀^{x₅} λ₁^{x₆} (q = 0).
    pub fn scale(&self, q: usize, x: &Exponents) -> f64 {
        let x = x.0;
        if q == 0 {
            self.lambda[0].powf(x[4]) * self.lambda[1].powf(x[5])
        } else {
            self.lambda[q].powf(x[0])
                * self.lambda[q + 1].powf(x[1])
                * self.delta[q].powf(x[2])
                * self.delta[q + 1].powf(x[3])
        }
    }

    /// ρ_q = C M̄² λ_q^{−γ} δ_{q+1} / inf N₀.
    pub fn set_rho_constant(&mut self, c_rho: f64) {
        self.c_rho = c_rho;
        let mb = self.input.m_bar;
        self.rho = (0..=self.input.q_max)
            .map(|q| c_rho * mb * mb * self.lambda[q].powf(-self.gamma) * self.delta[q + 1] / self.inf_n0)
            .collect();
    }

    pub fn q_max(&self) -> usize {
        self.input.q_max
    }

    /// Key-value block for the run manifest.
    pub fn manifest_block(&self) -> String {
        let mut s = String::new();
        let i = &self.input;
        for (k, v) in [
            ("a", i.a),
            ("b", i.b),
            ("alpha", i.alpha),
            ("delta_h", i.delta_h),
            ("L", i.l_const),
            ("T", i.t_final),
            ("kappa", i.kappa),
            ("C_v", i.c_v),
            ("M_bar", i.m_bar),
            ("C_1", i.c1),
            ("C_2", i.c2),
            ("gamma", self.gamma),
            ("nu", self.nu),
            ("inf_N0", self.inf_n0),
            ("C_eps", self.c_eps),
            ("C_rho", self.c_rho),
        ] {
            let _ = writeln!(s, "cascade.{k} = {v:e}");
        }
        let _ = writeln!(s, "cascade.n0 = {}", self.n0);
        let _ = writeln!(s, "cascade.h0 = {}", self.h0);
        let _ = writeln!(s, "cascade.N1 = {}", self.n1);
        for (name, v) in [
            ("lambda", &self.lambda),
            ("delta", &self.delta),
            ("eps", &self.eps),
            ("mu", &self.mu),
            ("l", &self.ell),
            ("l_temp", &self.ell_temp),
            ("i", &self.i_q),
            ("rho", &self.rho),
            ("rho1", &self.rho1),
        ] {
            for (q, x) in v.iter().enumerate() {
                let _ = writeln!(s, "cascade.{name}[{q}] = {x:e}");
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityRow {
    pub name: &'static str,
    /// log₁₀ of both sides, so that astronomically small or large values stay finite.
    pub log10_lhs: f64,
    pub log10_rhs: f64,
    pub satisfied: bool,
}

/// Measured two-sided audit of the asymptotic scale inequalities at level q.
pub fn audit_scale_inequalities(c: &Cascade, q: usize) -> Result<Vec<InequalityRow>> {
    if q > c.q_max() {
        return Err(Error::Parameter(format!("audit level {q} beyond q_max {}", c.q_max())));
    }
    let lg = f64::log10;
    let (lq, lq1) = (c.lambda[q], c.lambda[q + 1]);
    let (dq, dq1, dq2) = (c.delta[q], c.delta[q + 1], c.delta[q + 2]);
    let (eps, mu, ell, lt, iq, rho) = (c.eps[q], c.mu[q], c.ell[q], c.ell_temp[q], c.i_q[q], c.rho[q]);
    let g = c.gamma;
    let row = |name, lhs: f64, rhs: f64| InequalityRow {
        name,
        log10_lhs: lhs,
        log10_rhs: rhs,
        satisfied: lhs <= rhs,
    };
    let half_dq = 0.5 * lg(dq);
    Ok(vec![
        row(
            "n0: (rho/mu) lam_q delta_q^1/2 (mu lam_q+1)^-(n0+1) <= lam_q+1^-2gamma delta_q+2^3/2",
            lg(rho) - lg(mu) + lg(lq) + half_dq - (c.n0 as f64 + 1.0) * lg(mu * lq1),
            -2.0 * g * lg(lq1) + 1.5 * lg(dq2),
        ),
        row(
            "h0: (rho/eps) lam_q delta_q^1/2 (l lam_q+1)^-h0 <= lam_q+1^-1-2gamma delta_q+2^3/2 delta_q+1^1/2",
            lg(rho) - lg(eps) + lg(lq) + half_dq - c.h0 as f64 * lg(ell * lq1),
            -(1.0 + 2.0 * g) * lg(lq1) + 1.5 * lg(dq2) + 0.5 * lg(dq1),
        ),
        row("l < l_temp", lg(ell), lg(lt)),
        row("lam_q < 1/l", lg(lq), -lg(ell)),
        row(
            "i_q^(1/2-delta) <= rho^1/2",
            (0.5 - c.input.delta_h) * lg(iq),
            0.5 * lg(rho),
        ),
        row("l lam_q delta_q^1/2 <= rho^1/2", lg(ell) + lg(lq) + half_dq, 0.5 * lg(rho)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> Cascade {
        build_cascade(CascadeInput::default()).unwrap()
    }

    #[test]
    fn integer_constants() {
        let c = desk();
        assert_eq!(c.n0, 119);
        assert_eq!(c.h0, 40);
        assert_eq!(c.n1, 124);
        assert_eq!(c.gamma, 0.0625);
    }

    #[test]
    fn frequencies() {
        let c = desk();
        assert_eq!(&c.lambda[..3], &[4.0, 5.0, 8.0]);
    }

    #[test]
    fn q0_scales_use_second_branch() {
        let c = desk();
        let want = (4.0f64 * 5.0).powf(-0.5);
        assert!((c.mu[0] - want).abs() < 1e-15);
        assert!((c.ell[0] - want).abs() < 1e-15);
        assert!((c.ell_temp[0] - want).abs() < 1e-15);
        let m5 = 0.7 / 0.9;
        assert!((c.i_q[0] - (4.0f64 / 5.0).powf(m5)).abs() < 1e-15);
    }

    #[test]
    fn recomputation_is_exact() {
        let c = desk();
        let (l1, l2) = (c.lambda[1], c.lambda[2]);
        let d = |l: f64| 4f64.powf(0.0625) * l.powf(-0.2) * 5f64.powf(0.2);
        assert_eq!(c.delta[2], d(l2));
        let nu = (1.0 - 0.7) / 0.3;
        let mu1 = l1.powf(-1.0) * c.delta[1].powf(-(2.0 + nu)) * c.delta[2].powf(2.0 + nu);
        assert_eq!(c.mu[1], mu1);
    }

    #[test]
    fn parameter_errors() {
        let bad = |f: fn(&mut CascadeInput)| {
            let mut i = CascadeInput::default();
            f(&mut i);
            build_cascade_with(i, 0.1).is_err()
        };
        assert!(bad(|i| i.alpha = 0.15));
        assert!(bad(|i| i.delta_h = 0.2));
        assert!(bad(|i| i.a = 1.5));
        assert!(bad(|i| i.q_max = 0));
    }

    #[test]
    fn audit_reports_every_row() {
        let c = desk();
        for q in 0..=1 {
            let rows = audit_scale_inequalities(&c, q).unwrap();
            assert_eq!(rows.len(), 6);
            assert!(rows.iter().all(|r| r.log10_lhs.is_finite() && r.log10_rhs.is_finite()));
        }
    }

    #[test]
    fn large_a_satisfies_n0_h0() {
        let input = CascadeInput {
            a: 1e4,
            b: 1.02,
            ..CascadeInput::default()
        };
        let c = build_cascade_with(input, inf_family_n0()).unwrap();
        let rows = audit_scale_inequalities(&c, 1).unwrap();
        assert!(rows[0].satisfied, "{:?}", rows[0]);
        assert!(rows[1].satisfied, "{:?}", rows[1]);
    }

    #[test]
    fn delta_decreases_for_large_a() {
        let input = CascadeInput {
            a: 1e4,
            b: 1.02,
            q_max: 3,
            ..CascadeInput::default()
        };
        let c = build_cascade_with(input, 0.1).unwrap();
        for q in 2..c.delta.len() - 1 {
            assert!(c.delta[q + 1] < c.delta[q]);
        }
    }
}
