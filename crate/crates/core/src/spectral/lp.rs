use super::field::TorusField;
use super::fft::{from_spectrum, to_spectrum};
use crate::bump::plateau;

/// Radial Littlewood–Paley profile: 1 on B(0,1), 0 outside B(0,2).
#[inline]
pub fn mollifier(r: f64) -> f64 {
    plateau(r, 1.0, 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpKind {
    /// P_{≤2^j}
    Leq,
    /// P_{>2^j} = Id − P_{≤2^j}
    Gt,
    /// P_{2^j} = P_{>2^{j-1}} − P_{>2^j}
    Shell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LpBand {
    pub j: i32,
    pub kind: LpKind,
}

impl LpBand {
    pub fn leq(j: i32) -> Self {
        Self { j, kind: LpKind::Leq }
    }

    pub fn gt(j: i32) -> Self {
        Self { j, kind: LpKind::Gt }
    }

    pub fn shell(j: i32) -> Self {
        Self { j, kind: LpKind::Shell }
    }

    /// Band of P_{≤l⁻¹}: the largest j with 2^j ≤ 1/l.
    pub fn below_length(l: f64) -> Self {
        Self::leq(cutoff_exponent(l))
    }

    pub fn multiplier(&self, k: [i64; 3]) -> f64 {
        let r = ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64).sqrt();
        let leq = |j: i32| mollifier(r * 2f64.powi(-j));
        match self.kind {
            LpKind::Leq => leq(self.j),
            LpKind::Gt => 1.0 - leq(self.j),
            LpKind::Shell => leq(self.j) - leq(self.j - 1),
        }
    }
}

/// sup{j : 2^j ≤ 1/l}.
pub fn cutoff_exponent(l: f64) -> i32 {
    let mut j = (1.0 / l).log2().floor() as i32;
    // guard against rounding at exact powers of two
    while 2f64.powi(j + 1) <= 1.0 / l {
        j += 1;
    }
    while 2f64.powi(j) > 1.0 / l {
        j -= 1;
    }
    j
}

pub fn lp_project(field: &TorusField, band: LpBand) -> TorusField {
    let mut s = to_spectrum(field);
    s.apply_multiplier(|k| band.multiplier(k));
    from_spectrum(s).expect("projection preserves shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridSpec;

    #[test]
    fn plateau_and_support() {
        let g = GridSpec::new(32).unwrap();
        let f = TorusField::scalar_fn(g, |x| x[1].sin());
        let p = lp_project(&f, LpBand::leq(2));
        assert!(p.sub(&f).unwrap().sup_norm() < 1e-13);
        let h = TorusField::scalar_fn(g, |x| (16.0 * x[0]).cos());
        assert!(lp_project(&h, LpBand::leq(2)).sup_norm() < 1e-13);
    }

    #[test]
    fn leq_plus_gt_is_identity() {
        let g = GridSpec::new(16).unwrap();
        let f = TorusField::scalar_fn(g, |x| (x[0].sin() * 3.0 + x[2]).cos() * x[1].cos().exp());
        for j in 0..4 {
            let s = lp_project(&f, LpBand::leq(j))
                .add(&lp_project(&f, LpBand::gt(j)))
                .unwrap();
            assert!(s.sub(&f).unwrap().sup_norm() < 1e-13);
        }
    }

    #[test]
    fn shell_telescopes() {
        let g = GridSpec::new(16).unwrap();
        let f = TorusField::scalar_fn(g, |x| (x[0] + 2.0 * x[1]).sin() + (5.0 * x[2]).cos());
        let mut acc = lp_project(&f, LpBand::leq(0));
        for j in 1..=4 {
            acc.add_assign(&lp_project(&f, LpBand::shell(j))).unwrap();
        }
        assert!(acc.sub(&lp_project(&f, LpBand::leq(4))).unwrap().sup_norm() < 1e-13);
    }

    #[test]
    fn cutoff_exponent_values() {
        assert_eq!(cutoff_exponent(0.25), 2);
        assert_eq!(cutoff_exponent(0.2236), 2);
        assert_eq!(cutoff_exponent(0.9), 0);
        assert_eq!(cutoff_exponent(2.0), -1);
    }
}
