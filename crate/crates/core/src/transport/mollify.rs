use super::band::BandHistory;
use super::flow::Sweep;
use crate::error::{Error, Result};
use crate::par::map_indices;
use crate::quad::Composite;
use crate::spectral::{GridSpec, TorusField};

/// η(σ) ∝ exp(1/(σ(1+σ))) on (−1, 0), and η′.
fn eta(s: f64) -> (f64, f64) {
    let tau = -s;
    if tau <= 0.0 || tau >= 1.0 {
        return (0.0, 0.0);
    }
    let q = tau * (1.0 - tau);
    let g = (-1.0 / q).exp();
    // d/dτ g = g (1 − 2τ)/q², and dτ/dσ = −1
    (g, -g * (1.0 - 2.0 * tau) / (q * q))
}

/// Quadrature for ∫ F(t + ℓσ) η(σ) dσ over σ ∈ [−1, 0] and for the companion
/// −ℓ⁻¹ ∫ F(t + ℓσ) η′(σ) dσ, with the weights normalised to unit discrete mass.
#[derive(Debug, Clone)]
pub struct TimeKernel {
    /// σ nodes, descending from 0 towards −1.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub rate_weights: Vec<f64>,
}

impl TimeKernel {
    pub fn new(panels: usize, order: usize) -> Self {
        let rule = Composite::new(-1.0, 0.0, panels, order);
        let mut idx: Vec<usize> = (0..rule.nodes.len()).collect();
        idx.sort_by(|&a, &b| rule.nodes[b].partial_cmp(&rule.nodes[a]).unwrap());
        let nodes: Vec<f64> = idx.iter().map(|&i| rule.nodes[i]).collect();
        let raw: Vec<(f64, f64)> = idx.iter().map(|&i| {
            let (e, de) = eta(rule.nodes[i]);
            (rule.weights[i] * e, rule.weights[i] * de)
        }).collect();
        let z: f64 = raw.iter().map(|r| r.0).sum();
        Self {
            nodes,
            weights: raw.iter().map(|r| r.0 / z).collect(),
            rate_weights: raw.iter().map(|r| -r.1 / z).collect(),
        }
    }
}

impl Default for TimeKernel {
    fn default() -> Self {
        Self::new(8, 4)
    }
}

#[derive(Debug, Clone)]
pub struct Mollified {
    /// F_l(t) = ∫ F(t+s, μ(t; t+s, x)) η_ℓ(s) ds.
    pub value: TorusField,
    /// −∫ F(t+s, μ(t; t+s, x)) η_ℓ′(s) ds, which equals D_{t,l} F_l.
    pub rate: TorusField,
}

/// Mollification along the Lagrangian flow of `u`, for several band-limited
/// histories at once (they share the characteristics). Only times in
/// [t − ℓ, t] enter.
pub fn lagrangian_mollify(
    grid: GridSpec,
    fields: &[&dyn BandHistory],
    u: &dyn BandHistory,
    t: f64,
    ltemp: f64,
    kernel: &TimeKernel,
    substeps: usize,
) -> Result<Vec<Mollified>> {
    if !(ltemp > 0.0) {
        return Err(Error::Transport(format!("mollification length must be positive, got {ltemp}")));
    }
    let times: Vec<f64> = kernel.nodes.iter().map(|s| t + ltemp * s).collect();
    let bands: Vec<Vec<_>> = fields
        .iter()
        .map(|f| times.iter().map(|&r| f.band_at(r)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let ncomp: Vec<usize> = bands.iter().map(|b| b[0].components()).collect();
    let total: usize = ncomp.iter().sum();
    let sweep = Sweep::new(u, t, &times, substeps, grid.dx())?;
    let acc = map_indices(grid.len(), |p| {
        let mut out = vec![0.0; 2 * total];
        let mut tmp = [0.0; 6];
        sweep.trace(grid.point(p), |j, y| {
            let (w, dw) = (kernel.weights[j], kernel.rate_weights[j] / ltemp);
            let mut off = 0;
            for (f, b) in bands.iter().enumerate() {
                let nc = ncomp[f];
                b[j].eval_into(y, &mut tmp[..nc]);
                for c in 0..nc {
                    out[off + c] += w * tmp[c];
                    out[total + off + c] += dw * tmp[c];
                }
                off += nc;
            }
        });
        out
    });
    let mut result = Vec::with_capacity(fields.len());
    let mut off = 0;
    for (f, b) in bands.iter().enumerate() {
        let nc = ncomp[f];
        let pick = |base: usize| -> Vec<Vec<f64>> {
            (0..nc).map(|c| acc.iter().map(|a| a[base + off + c]).collect()).collect()
        };
        result.push(Mollified {
            value: TorusField::from_components(grid, b[0].rank, pick(0))?,
            rate: TorusField::from_components(grid, b[0].rank, pick(total))?,
        });
        off += nc;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{advect_pointwise, Rank};
    use crate::transport::band::{BandField, Frozen};
    use num_complex::Complex64;

    #[test]
    fn kernel_unit_mass_and_support() {
        let k = TimeKernel::default();
        assert!((k.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(k.nodes.iter().all(|&s| s < 0.0 && s > -1.0));
        assert!(k.nodes.windows(2).all(|w| w[0] > w[1]));
        // ∫η′ = 0
        assert!(k.rate_weights.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn static_field_static_flow() {
        let g = GridSpec::new(8).unwrap();
        let f = TorusField::scalar_fn(g, |x| x[0].sin() + 0.25);
        let b = Frozen(BandField::from_field(&f, None, 1e-14));
        let zero = Frozen(BandField::zero(Rank::Vector));
        let out = lagrangian_mollify(g, &[&b], &zero, 0.7, 0.2, &TimeKernel::default(), 2).unwrap();
        assert!(out[0].value.sub(&f).unwrap().sup_norm() < 1e-14);
        assert!(out[0].rate.sup_norm() < 1e-9);
    }

    #[test]
    fn causal_in_time() {
        let g = GridSpec::new(8).unwrap();
        let t = 0.5;
        let hist = |future: f64| {
            move |r: f64| -> Result<BandField> {
                let a = if r > t { future } else { r };
                BandField::from_modes(Rank::Scalar, vec![([1, 0, 0], vec![Complex64::new(a, 0.0)])])
            }
        };
        let u = Frozen(BandField::from_modes(Rank::Vector, vec![([0, 0, 0], vec![Complex64::new(0.3, 0.0); 3])]).unwrap());
        let k = TimeKernel::default();
        let a = lagrangian_mollify(g, &[&hist(1.0)], &u, t, 0.2, &k, 2).unwrap();
        let b = lagrangian_mollify(g, &[&hist(-5.0)], &u, t, 0.2, &k, 2).unwrap();
        assert_eq!(a[0].value, b[0].value);
        assert_eq!(a[0].rate, b[0].rate);
    }

    #[test]
    fn rate_is_the_material_derivative() {
        // F(t, x) = sin(x₁ + t) cos(2x₂) under a shear u = (0.2 sin x₂, 0.1, 0)
        let g = GridSpec::new(16).unwrap();
        let f_at = |r: f64| {
            BandField::from_modes(
                Rank::Scalar,
                vec![
                    ([1, 2, 0], vec![Complex64::from_polar(0.25, r - std::f64::consts::FRAC_PI_2)]),
                    ([1, -2, 0], vec![Complex64::from_polar(0.25, r - std::f64::consts::FRAC_PI_2)]),
                ],
            )
        };
        let ub = BandField::from_modes(
            Rank::Vector,
            vec![
                ([0, 1, 0], vec![Complex64::new(0.0, -0.1), Complex64::default(), Complex64::default()]),
                ([0, 0, 0], vec![Complex64::default(), Complex64::new(0.1, 0.0), Complex64::default()]),
            ],
        )
        .unwrap();
        let u = Frozen(ub.clone());
        let k = TimeKernel::new(16, 6);
        let (t, l, h) = (1.0, 0.3, 1e-3);
        let run = |s: f64| lagrangian_mollify(g, &[&f_at], &u, s, l, &k, 8).unwrap().remove(0);
        let (m0, mp, mm) = (run(t), run(t + h), run(t - h));
        let dt = mp.value.sub(&mm.value).unwrap().scale(0.5 / h);
        let uf = ub.to_field(g).unwrap();
        let material = dt.add(&advect_pointwise(&uf, &m0.value).unwrap()).unwrap();
        let err = material.sub(&m0.rate).unwrap().sup_norm();
        assert!(err < 1e-5, "{err}");
    }
}
