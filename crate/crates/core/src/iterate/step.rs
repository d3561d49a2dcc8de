use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use super::algebra::{
    contract_grad, div_outer, dot, identity, mat_vec, norm_sq, odot, odot_traceless, outer_self, times, traceless,
};
use super::equations::energy_residual;
use super::partition::{Cell, Partition};
use super::pieces::{natural_margin, piece_set, PieceSet, STRESS_SLOTS};
use super::{EnergyProfile, ErFlow, Snapshot};
use crate::error::{Error, Result};
use crate::geometry::{class_of, Mat3};
use crate::noise::{mollify_path, NoisePath};
use crate::par::map_indices;
use crate::params::Cascade;
use crate::spectral::{
    advect_pointwise, antidiv_scalar, antidiv_tensor, curl, div, grad, lp_project, sym_index, GridSpec, LpBand, Rank,
    TorusField,
};
use crate::transport::{causal_rate, lagrangian_mollify, solve_flow, BandField, FlowMap, TimeKernel};

/// Named scalar measurements of one step at one time.
pub type Diagnostics = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct StepConfig {
    /// Internal time step; ε_q / `steps_per_eps` when absent.
    pub h: Option<f64>,
    pub steps_per_eps: usize,
    /// Origin of the time grid and of f (f(anchor) = 0).
    pub anchor: f64,
    pub flow_substeps: usize,
    pub mollify_substeps: usize,
    pub kernel_panels: usize,
    pub kernel_order: usize,
    /// Assumed bound on |u_l|, which sets the drift margin λ ε U · safety the
    /// pipe shifts must absorb. When absent the margin is half the separation
    /// reachable without drift, and the bound it implies is reported.
    pub drift_bound: Option<f64>,
    pub drift_safety: f64,
    pub allow_unresolved_pipes: bool,
    /// Radius of the ball on which the flux weights Λ are certified.
    pub lambda_n0: f64,
    /// Memoised time levels kept per stage.
    pub cache: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            h: None,
            steps_per_eps: 32,
            anchor: 0.0,
            flow_substeps: 4,
            mollify_substeps: 2,
            kernel_panels: 8,
            kernel_order: 4,
            drift_bound: None,
            drift_safety: 1.25,
            allow_unresolved_pipes: false,
            lambda_n0: std::f64::consts::E,
            cache: 10,
        }
    }
}

/// Everything at one time that only needs the old tuple at that time.
#[derive(Debug)]
pub struct Core {
    pub j: i64,
    pub t: f64,
    pub base: Arc<Snapshot>,
    pub z_next: TorusField,
    pub v_l: TorusField,
    pub z_l: TorusField,
    pub u_l: TorusField,
    pub r_l: TorusField,
    pub phi_l: TorusField,
    pub c0: TorusField,
    pub d0: TorusField,
    pub w_o: TorusField,
    pub w: TorusField,
    pub stats: Diagnostics,
}

impl Core {
    pub fn w_c(&self) -> TorusField {
        self.w.sub(&self.w_o).expect("same grid")
    }
}

#[derive(Debug)]
pub struct StressParts {
    pub r_a: TorusField,
    /// R_{q+1} − (2/3) f Id.
    pub r_nof: TorusField,
    pub p_next: TorusField,
    pub stats: Diagnostics,
}

#[derive(Debug)]
pub struct CurrentParts {
    pub phi: TorusField,
    /// f′ imposed by the energy equation.
    pub f_rate: f64,
    pub stats: Diagnostics,
}

struct Memo<T> {
    cap: usize,
    clock: u64,
    map: HashMap<i64, (u64, Arc<T>)>,
}

impl<T> Memo<T> {
    fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            clock: 0,
            map: HashMap::new(),
        }
    }

    fn get(&mut self, j: i64) -> Option<Arc<T>> {
        self.clock += 1;
        let c = self.clock;
        self.map.get_mut(&j).map(|e| {
            e.0 = c;
            e.1.clone()
        })
    }

    fn put(&mut self, j: i64, v: Arc<T>) {
        if self.map.len() >= self.cap {
            if let Some(&old) = self.map.iter().min_by_key(|e| e.1 .0).map(|e| e.0) {
                self.map.remove(&old);
            }
        }
        self.clock += 1;
        self.map.insert(j, (self.clock, v));
    }
}

/// One convex-integration step on top of a level-q flow, evaluated lazily on
/// the time grid anchor + j·h.
pub struct Step {
    base: Arc<dyn ErFlow>,
    path: Arc<NoisePath>,
    pub cascade: Cascade,
    pub config: StepConfig,
    pub grid: GridSpec,
    pub q: usize,
    pub h: f64,
    pub pieces: Arc<PieceSet>,
    pub partition: Partition,
    kernel: TimeKernel,
    pub lambda: f64,
    pub rho: f64,
    pub rho1: f64,
    pub m_bar: f64,
    pub ell: f64,
    pub ltemp: f64,
    pub width_next: f64,
    pub resolved: bool,
    cores: Mutex<Memo<Core>>,
    stresses: Mutex<Memo<StressParts>>,
    currents: Mutex<Memo<CurrentParts>>,
    rates: Mutex<BTreeMap<i64, f64>>,
}

impl std::fmt::Debug for Step {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Step")
            .field("q", &self.q)
            .field("grid", &self.grid.n())
            .field("h", &self.h)
            .field("lambda", &self.lambda)
            .field("rho", &self.rho)
            .finish_non_exhaustive()
    }
}

impl Step {
    pub fn new(base: Arc<dyn ErFlow>, path: Arc<NoisePath>, cascade: &Cascade, config: StepConfig) -> Result<Self> {
        let q = base.level();
        if q >= 1 {
            return Err(Error::Config(format!(
                "only the first step (q = 0 → 1) is supported, got a level-{q} base: deeper levels need the \
                 previous step off its own time grid"
            )));
        }
        if q + 1 > cascade.q_max() {
            return Err(Error::Config(format!("cascade built for q_max = {}, step needs {}", cascade.q_max(), q + 1)));
        }
        let grid = base.grid();
        let eps = cascade.eps[q];
        let h = config.h.unwrap_or(eps / config.steps_per_eps.max(1) as f64);
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {h}")));
        }
        let lambda = cascade.lambda[q + 1];
        let margin = match config.drift_bound {
            Some(u) => lambda * eps * u * config.drift_safety,
            None => natural_margin()?,
        };
        let pieces = piece_set(margin, config.lambda_n0)?;
        let mut cascade = cascade.clone();
        cascade.set_rho_constant(pieces.rho_constant());
        let resolved = lambda * pieces.mode_bound() <= (grid.n() / 2) as f64 / 1.5;
        if !resolved && !config.allow_unresolved_pipes {
            return Err(Error::Guard(format!(
                "pipes unresolved: λ_{} · mode bound = {:.3e} exceeds Nyquist/1.5 = {:.3e} on an n = {} grid \
                 (tube radius {:.3e}); set allow_unresolved_pipes to proceed",
                q + 1,
                lambda * pieces.mode_bound(),
                (grid.n() / 2) as f64 / 1.5,
                grid.n(),
                pieces.tube_radius
            )));
        }
        let partition = Partition::new(eps, cascade.mu[q])?;
        Ok(Self {
            base,
            path,
            q,
            h,
            grid,
            pieces,
            partition,
            kernel: TimeKernel::new(config.kernel_panels, config.kernel_order),
            lambda,
            rho: cascade.rho[q],
            rho1: cascade.rho1[q],
            m_bar: cascade.input.m_bar,
            ell: cascade.ell[q],
            ltemp: cascade.ell_temp[q],
            width_next: cascade.i_q[q + 1],
            resolved,
            cores: Mutex::new(Memo::new(config.cache)),
            stresses: Mutex::new(Memo::new(config.cache)),
            currents: Mutex::new(Memo::new(config.cache)),
            rates: Mutex::new(BTreeMap::new()),
            cascade,
            config,
        })
    }

    pub fn base(&self) -> &Arc<dyn ErFlow> {
        &self.base
    }

    pub fn time(&self, j: i64) -> f64 {
        self.config.anchor + j as f64 * self.h
    }

    /// Grid index of t, which must lie on the grid.
    pub fn index_of(&self, t: f64) -> Result<i64> {
        let x = (t - self.config.anchor) / self.h;
        let j = x.round();
        if (x - j).abs() > 1e-6 {
            return Err(Error::Snapshots(format!(
                "t = {t} is off the step's time grid {} + j·{:.6e}",
                self.config.anchor, self.h
            )));
        }
        Ok(j as i64)
    }

    pub fn core(&self, j: i64) -> Result<Arc<Core>> {
        if let Some(c) = self.cores.lock().unwrap().get(j) {
            return Ok(c);
        }
        let c = Arc::new(self.build_core(j)?);
        self.cores.lock().unwrap().put(j, c.clone());
        Ok(c)
    }

    pub fn stress(&self, j: i64) -> Result<Arc<StressParts>> {
        if let Some(c) = self.stresses.lock().unwrap().get(j) {
            return Ok(c);
        }
        let c = Arc::new(self.build_stress(j)?);
        self.stresses.lock().unwrap().put(j, c.clone());
        Ok(c)
    }

    pub fn current(&self, j: i64) -> Result<Arc<CurrentParts>> {
        if let Some(c) = self.currents.lock().unwrap().get(j) {
            return Ok(c);
        }
        let c = Arc::new(self.build_current(j)?);
        self.rates.lock().unwrap().insert(j, c.f_rate);
        self.currents.lock().unwrap().put(j, c.clone());
        Ok(c)
    }

    fn f_rate(&self, j: i64) -> Result<f64> {
        if let Some(&r) = self.rates.lock().unwrap().get(&j) {
            return Ok(r);
        }
        Ok(self.current(j)?.f_rate)
    }

    /// f(t_j) = ∫_anchor^{t_j} f′ by the composite trapezoid rule on the grid.
    pub fn f_value(&self, j: i64) -> Result<f64> {
        let (lo, hi, sign) = if j >= 0 { (0, j, 1.0) } else { (j, 0, -1.0) };
        let mut acc = 0.0;
        let mut prev = self.f_rate(lo)?;
        for i in lo + 1..=hi {
            let cur = self.f_rate(i)?;
            acc += 0.5 * self.h * (prev + cur);
            prev = cur;
        }
        Ok(sign * acc)
    }

    fn velocity_history(&self) -> impl Fn(f64) -> Result<BandField> + Sync + '_ {
        move |s| self.base.velocity_band(s, self.ell)
    }

    fn build_core(&self, j: i64) -> Result<Core> {
        let t = self.time(j);
        let g = self.grid;
        let base = self.base.snapshot(t)?;
        let band = LpBand::below_length(self.ell);
        let v_l = lp_project(&base.v, band);
        let z_l = lp_project(&base.z, band);
        let u_l = v_l.add(&z_l)?;
        let z_next = mollify_path(&self.path, self.width_next).field_at(g, t)?;

        let uh = self.velocity_history();
        let sh = |s: f64| self.base.stress_band(s, self.ell);
        let ph = |s: f64| self.base.current_band(s, self.ell);
        let mut moll = lagrangian_mollify(g, &[&sh, &ph], &uh, t, self.ltemp, &self.kernel, self.config.mollify_substeps)?;
        let phi_l = moll.pop().expect("two fields").value;
        let r_l = moll.pop().expect("two fields").value;

        let active = self.partition.active_times(t);
        let flows = active
            .iter()
            .map(|&(m, _)| solve_flow(g, &uh, self.partition.anchor(m), t, self.config.flow_substeps))
            .collect::<Result<Vec<_>>>()?;

        let mut stats = Diagnostics::new();
        stats.insert("active_times".into(), active.len() as f64);
        let (mut dlo, mut dhi, mut dev) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for f in &flows {
            dlo = dlo.min(f.det_range.0);
            dhi = dhi.max(f.det_range.1);
            dev = dev.max(f.deviation);
        }
        stats.insert("flow_det_min".into(), dlo);
        stats.insert("flow_det_max".into(), dhi);
        stats.insert("flow_deviation".into(), dev);
        if flows.len() == 2 {
            let d = flows[0].displacement.sub(&flows[1].displacement)?.sup_magnitude() * self.lambda;
            stats.insert("pipe_drift".into(), d);
            if d > self.pieces.margin {
                return Err(Error::Guard(format!(
                    "relative pipe drift λ|ξ_m − ξ_m′| = {d:.3e} exceeds the shift margin {:.3e} at t = {t}; \
                     the flow is too fast for the shift table",
                    self.pieces.margin
                )));
            }
        }

        let out = self.assemble(&active, &flows, &r_l, &phi_l)?;
        let comps = |f: &dyn Fn(&PointOut) -> &[f64], nc: usize| -> Vec<Vec<f64>> {
            (0..nc).map(|c| out.iter().map(|o| f(o)[c]).collect()).collect()
        };
        let c0 = TorusField::from_components(g, Rank::Sym, comps(&|o| &o.c0, 6))?;
        let d0 = TorusField::from_components(g, Rank::Vector, comps(&|o| &o.d0, 3))?;
        let w_o = TorusField::from_components(g, Rank::Vector, comps(&|o| &o.wo, 3))?;
        let psi = TorusField::from_components(g, Rank::Vector, comps(&|o| &o.psi, 3))?;
        let w = curl(&psi)?;

        let fold = |init: f64, f: &dyn Fn(&PointOut) -> f64, op: fn(f64, f64) -> f64| out.iter().map(f).fold(init, op);
        stats.insert("fbar_min".into(), fold(f64::INFINITY, &|o| o.fbar_min, f64::min));
        stats.insert("lambda_arg_max".into(), fold(0.0, &|o| o.lam_arg, f64::max));
        stats.insert("k_deviation_max".into(), fold(0.0, &|o| o.k_dev, f64::max));
        stats.insert("gamma_min".into(), fold(f64::INFINITY, &|o| o.gamma_min, f64::min));
        stats.insert("non_neighbour_pairs".into(), fold(0.0, &|o| o.non_nb as f64, |a, b| a + b));
        stats.insert("pipe_hits".into(), fold(0.0, &|o| o.hits as f64, |a, b| a + b));

        let cancel_c = c0.add(&r_l)?.sub(&identity(g, self.rho))?;
        stats.insert("cancel_c0".into(), cancel_c.sup_norm() / self.rho);
        let cancel_d = d0.add(&phi_l)?;
        stats.insert(
            "cancel_d0".into(),
            cancel_d.sup_norm() / phi_l.sup_norm().max(self.rho1),
        );
        let w_c = w.sub(&w_o)?;
        stats.insert("w_l2".into(), w.l2_norm());
        stats.insert("div_w_l2".into(), div(&w_o.add(&w_c)?)?.l2_norm());
        stats.insert("w_sup".into(), w.sup_magnitude());
        stats.insert("w_o_sup".into(), w_o.sup_magnitude());
        stats.insert("w_c_sup".into(), w_c.sup_magnitude());
        stats.insert("r_l_sup".into(), r_l.sup_norm());
        stats.insert("phi_l_sup".into(), phi_l.sup_magnitude());

        Ok(Core {
            j,
            t,
            base,
            z_next,
            v_l,
            z_l,
            u_l,
            r_l,
            phi_l,
            c0,
            d0,
            w_o,
            w,
            stats,
        })
    }

    /// Per-point amplitudes, zero modes and pipes for every active piece.
    fn assemble(&self, active: &[(i64, f64)], flows: &[FlowMap], r_l: &TorusField, phi_l: &TorusField) -> Result<Vec<PointOut>> {
        let g = self.grid;
        let ps = &*self.pieces;
        let mb3 = self.m_bar.powi(3);
        let cbrt2 = 2f64.cbrt();
        let results = map_indices(g.len(), |p| -> Result<PointOut> {
            let mut o = PointOut::new();
            let mut cells: Vec<Cell> = Vec::with_capacity(8);
            // φ-pieces' θ⁴χ⁴ a² ⨍ψ² f̄⊗f̄, tagged by (m, cell) for the M_{m,n} sums
            let mut phi_terms: Vec<(i64, [usize; 3], Mat3)> = Vec::new();
            let mut r_cells: Vec<(usize, i64, f64, Cell)> = Vec::new();
            let phil = phi_l.vec_at(p);
            let rl = r_l.sym_at(p);
            for (mi, &(m, th6)) in active.iter().enumerate() {
                let fl = &flows[mi];
                let (gm, gi, xi) = (&fl.grad[p], &fl.inv[p], fl.xi(p));
                self.partition.active_cells(&xi, &mut cells);
                let u_arg = mat_vec3(gm, &phil).map(|x| -x / (mb3 * self.rho1));
                for cell in &cells {
                    let class = class_of(cell.n);
                    let lam = ps.flux[class].lambda(&u_arg).map_err(|e| {
                        Error::Guard(format!("φ-piece (m = {m}, n = {:?}, class {class}) at point {p}: {e}", cell.n))
                    })?;
                    o.lam_arg = o.lam_arg.max(norm3(&u_arg) / ps.flux[class].radius());
                    let (t2, c2) = (th6.cbrt(), cell.chi6.cbrt());
                    let mut cphi = [[0.0; 3]; 3];
                    for s in 0..4 {
                        let slot = STRESS_SLOTS + s;
                        let fb = mat_vec3(gi, &ps.direction(class, slot).map(|x| x as f64));
                        let nf = norm3(&fb);
                        o.fbar_min = o.fbar_min.min(nf);
                        let psi3 = ps.mean_cube[class][slot];
                        let psi2 = ps.mean_sq[class][slot];
                        let a = (cbrt2 * lam[s].cbrt() * self.m_bar * self.rho1.cbrt()) / (nf * nf * psi3).cbrt();
                        let k6 = th6 * cell.chi6;
                        for i in 0..3 {
                            o.d0[i] += k6 * a * a * a * psi3 * nf * nf * fb[i] * 0.5;
                        }
                        let k4 = t2 * t2 * c2 * c2 * a * a * psi2;
                        add_outer(&mut cphi, k4, &fb);
                        self.pipe(&mut o, m, class, slot, t2 * c2 * a, &xi, gm, &fb);
                    }
                    phi_terms.push((m, cell.n, cphi));
                    r_cells.push((mi, m, th6, *cell));
                }
            }
            for &(_, _, ref c) in &phi_terms {
                add_sym(&mut o.c0, c, 1.0);
            }
            for &(mi, m, th6, cell) in &r_cells {
                let fl = &flows[mi];
                let (gm, gi, xi) = (&fl.grad[p], &fl.inv[p], fl.xi(p));
                let class = class_of(cell.n);
                let mut mm = [[0.0; 3]; 3];
                for (mj, nj, c) in &phi_terms {
                    if (mj - m).abs() <= 1 && self.partition.neighbours(&cell.n, nj) {
                        for i in 0..3 {
                            for k in 0..3 {
                                mm[i][k] += c[i][k];
                            }
                        }
                    } else {
                        o.non_nb += 1;
                    }
                }
                let mut rm = [[0.0; 3]; 3];
                for i in 0..3 {
                    for k in 0..3 {
                        rm[i][k] = rl[i][k] + mm[i][k];
                    }
                }
                let ggt = mat_mul(gm, &transpose(gm));
                let grg = mat_mul(&mat_mul(gm, &rm), &transpose(gm));
                let mut kk = [[0.0; 3]; 3];
                for i in 0..3 {
                    for k in 0..3 {
                        kk[i][k] = ggt[i][k] - grg[i][k] / self.rho;
                        o.k_dev = o.k_dev.max((kk[i][k] - (i == k) as u8 as f64).abs());
                    }
                }
                let gam = ps.stress[class].gamma(&kk).map_err(|e| {
                    Error::Guard(format!(
                        "R-piece (m = {m}, n = {:?}, class {class}) at point {p}: {e}; ρ too small for R_l + M",
                        cell.n
                    ))
                })?;
                let (t3, c3) = (th6.sqrt(), cell.chi6.sqrt());
                for s in 0..STRESS_SLOTS {
                    o.gamma_min = o.gamma_min.min(gam[s]);
                    let fb = mat_vec3(gi, &ps.direction(class, s).map(|x| x as f64));
                    let psi2 = ps.mean_sq[class][s];
                    let a = self.rho.sqrt() * gam[s] / psi2.sqrt();
                    let mut c = [[0.0; 3]; 3];
                    add_outer(&mut c, th6 * cell.chi6 * a * a * psi2, &fb);
                    add_sym(&mut o.c0, &c, 1.0);
                    self.pipe(&mut o, m, class, s, t3 * c3 * a, &xi, gm, &fb);
                }
            }
            Ok(o)
        });
        results.into_iter().collect()
    }

    /// Adds amp·ψ f̄ to w_o and amp·∇ξᵀΦ/λ to the potential, Φ and ψ at λξ − shift.
    /// Unresolved tubes are only counted: isolated grid samples of a sub-grid
    /// profile carry no spectral meaning.
    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn pipe(&self, o: &mut PointOut, m: i64, class: usize, slot: usize, amp: f64, xi: &[f64; 3], gm: &Mat3, fb: &[f64; 3]) {
        let s = self.pieces.shifts.shift(m, class, slot);
        let y = std::array::from_fn(|i| self.lambda * xi[i] - s[i]);
        if let Some((psi, phi)) = self.pieces.pipes[class][slot].value_and_potential(&y) {
            o.hits += 1;
            if !self.resolved {
                return;
            }
            for i in 0..3 {
                o.wo[i] += amp * psi * fb[i];
                o.psi[i] += amp * (gm[0][i] * phi[0] + gm[1][i] * phi[1] + gm[2][i] * phi[2]) / self.lambda;
            }
        }
    }

    fn build_stress(&self, j: i64) -> Result<StressParts> {
        let cs: Vec<Arc<Core>> = (0..5).map(|k| self.core(j - k)).collect::<Result<_>>()?;
        let c = &cs[0];
        let b = &c.base;
        let ws: [&TorusField; 5] = std::array::from_fn(|k| &cs[k].w);
        let mut x = causal_rate(ws, self.h)?;
        x.add_assign(&div(&odot(&c.w, &c.u_l)?)?)?;
        x.add_assign(&div(&outer_self(&c.w_o)?.sub(&c.c0)?)?)?;
        let r_a = antidiv_tensor(&x)?;

        let dv = b.v.sub(&c.v_l)?;
        let mut r_t = outer_self(&c.w)?.sub(&outer_self(&c.w_o)?)?;
        r_t.add_assign(&odot(&c.w, &dv)?)?;
        r_t.add_assign(&b.r.sub(&c.r_l)?)?;

        let zbar = c.z_next.sub(&b.z)?;
        let dz = c.z_next.sub(&c.z_l)?;
        let u_q = b.u();
        let mut r_s = odot_traceless(&c.w, &dz)?;
        r_s.add_assign(&odot_traceless(&u_q, &zbar)?)?;
        r_s.add_assign(&traceless(&outer_self(&zbar)?)?)?;

        let r_nof = r_a.add(&r_t)?.add(&r_s)?;
        let mut p_next = b.p.clone();
        p_next.axpy(-2.0 / 3.0, &dot(&c.w, &dz)?)?;
        p_next.axpy(-2.0 / 3.0, &dot(&u_q, &zbar)?)?;
        p_next.axpy(-1.0 / 3.0, &norm_sq(&zbar)?)?;

        // independent evaluation of the trace
        let w_c = c.w_c();
        let mut tr = b.r.sub(&c.r_l)?.trace()?;
        tr.add_assign(&norm_sq(&w_c)?)?;
        tr.axpy(2.0, &dot(&w_c, &c.w_o)?)?;
        tr.axpy(2.0, &dot(&dv, &c.w)?)?;
        let mut stats = Diagnostics::new();
        stats.insert("trace_identity_err".into(), r_nof.trace()?.sub(&tr)?.sup_norm());
        stats.insert("r_a_trace".into(), r_a.trace()?.sup_norm());
        stats.insert("r_a_sup".into(), r_a.sup_norm());
        stats.insert("r_nof_sup".into(), r_nof.sup_norm());
        Ok(StressParts {
            r_a,
            r_nof,
            p_next,
            stats,
        })
    }

    fn build_current(&self, j: i64) -> Result<CurrentParts> {
        let t = self.time(j);
        let cs: Vec<Arc<Core>> = (0..5).map(|k| self.core(j - k)).collect::<Result<_>>()?;
        let ss: Vec<Arc<StressParts>> = (0..5).map(|k| self.stress(j - k)).collect::<Result<_>>()?;
        let (c, s) = (&cs[0], &ss[0]);
        let b = &c.base;
        let band = LpBand::below_length(self.ell);
        let u_q = b.u();
        let v_next = b.v.add(&c.w)?;
        let u_next = v_next.add(&c.z_next)?;
        let zbar = c.z_next.sub(&b.z)?;
        let dz = c.z_next.sub(&c.z_l)?;
        let dv = b.v.sub(&c.v_l)?;
        let w_c = c.w_c();

        // D_{t,l} of Tr(w_o⊗w_o − c₀)/2
        let gs: Vec<TorusField> = cs
            .iter()
            .map(|k| Ok(norm_sq(&k.w_o)?.sub(&k.c0.trace()?)?.scale(0.5)))
            .collect::<Result<_>>()?;
        let gref: [&TorusField; 5] = std::array::from_fn(|k| &gs[k]);
        let mut dg = causal_rate(gref, self.h)?;
        dg.add_assign(&advect_pointwise(&c.u_l, &gs[0])?)?;
        let g0 = &gs[0];

        let wo_wo = outer_self(&c.w_o)?.sub(&c.c0)?;
        let half_wo2 = norm_sq(&c.w_o)?.scale(0.5);
        let mut va = dg;
        va.add_assign(&div(&c.phi_l.add(&times(&half_wo2, &c.w_o)?)?)?)?;
        va.add_assign(&contract_grad(&wo_wo, &c.v_l.add(&b.z)?)?)?;
        va.add_assign(&contract_grad(&odot_traceless(&c.w, &dz)?, &b.z)?)?;
        va.axpy(-1.0, &dot(&dz, &div_outer(&c.w, &c.v_l)?)?)?;
        va.add_assign(&dot(&dv, &div_outer(&c.w, &zbar)?)?)?;
        let r_comm = outer_self(&c.u_l)?.sub(&lp_project(&outer_self(&u_q)?, band))?;
        let mut inner = div(&lp_project(&b.r, band).add(&r_comm)?)?;
        inner.axpy(-1.0, &div_outer(&zbar, &c.v_l)?)?;
        inner.add_assign(&div_outer(&dz, &b.z)?)?;
        inner.add_assign(&div_outer(&c.u_l, &b.z.sub(&c.z_l)?)?)?;
        inner.add_assign(&div_outer(&u_next, &zbar)?)?;
        va.add_assign(&dot(&c.w, &inner)?)?;
        va.add_assign(&dot(&c.w, &grad(&b.p.sub(&lp_project(&b.p, band))?)?)?)?;

        let vd2 = contract_grad(&s.r_a, &c.u_l)?;

        let mut vs2 = contract_grad(&s.r_a, &b.z.sub(&c.z_l)?)?;
        vs2.add_assign(&contract_grad(&odot_traceless(&u_q, &zbar)?.add(&outer_self(&zbar)?)?, &b.z)?)?;
        vs2.add_assign(&dot(&b.v, &div_outer(&u_q, &zbar)?.add(&div_outer(&zbar, &c.z_next)?)?)?)?;
        vs2.axpy(-1.0, &contract_grad(&s.r_nof, &zbar)?)?;

        let tr_half = s.r_nof.trace()?.scale(0.5);
        let mut pd1 = times(&tr_half, &c.w)?;
        pd1.add_assign(&times(g0, &dv)?)?;
        pd1.add_assign(&b.phi.sub(&c.phi_l)?)?;
        pd1.add_assign(&times(&norm_sq(&c.w)?.scale(0.5), &c.w)?)?;
        pd1.axpy(-1.0, &times(&half_wo2, &c.w_o)?)?;
        pd1.axpy(-1.0, &mat_vec(&s.r_nof, &c.w)?)?;
        pd1.add_assign(&times(&norm_sq(&dv)?.scale(0.5), &c.w)?)?;
        let big = b.r.sub(&outer_self(&c.w)?)?.sub(&s.r_nof)?.sub(&identity(self.grid, self.rho))?;
        pd1.add_assign(&mat_vec(&big, &dv)?)?;

        let mut ps1 = times(&tr_half.add(&norm_sq(&b.v)?.add(&norm_sq(&c.w)?)?.scale(0.5))?, &zbar)?;
        ps1.add_assign(&times(&dot(&b.v, &c.w)?, &zbar)?)?;
        let zv = dot(&zbar, &c.v_l)?;
        ps1.add_assign(&times(&zv, &zbar)?)?;
        ps1.add_assign(&times(&zv, &u_q)?)?;
        ps1.add_assign(&times(&dot(&u_q, &c.v_l)?, &zbar)?)?;
        ps1.add_assign(&times(&s.p_next.sub(&b.p)?, &c.w)?)?;

        let phi_a = antidiv_scalar(&va)?;
        let phi_d2 = antidiv_scalar(&vd2)?;
        let phi_s2 = antidiv_scalar(&vs2)?;
        let phi_paper = phi_a.add(&pd1)?.add(&phi_d2)?.add(&ps1)?.add(&phi_s2)?;
        let f_rate_paper = va.mean()[0] + vd2.mean()[0] + vs2.mean()[0];

        // the new tuple with R − (2/3) f Id and the assembled current
        let nof = Snapshot {
            q: self.q + 1,
            t,
            v: v_next,
            p: s.p_next.clone(),
            r: s.r_nof.clone(),
            phi: phi_paper,
            z: c.z_next.clone(),
        };
        let hv: Vec<TorusField> = cs.iter().map(|k| half_v2_of(&k.base.v.add(&k.w)?)).collect::<Result<_>>()?;
        let trs: Vec<TorusField> = ss.iter().map(|k| k.r_nof.trace()).collect::<Result<_>>()?;
        let d_hv = causal_rate(std::array::from_fn(|k| &hv[k]), self.h)?;
        let d_tr = causal_rate(std::array::from_fn(|k| &trs[k]), self.h)?;
        let res = energy_residual(&nof, &d_hv, &d_tr, self.base.energy().rate(t))?;
        let f_rate = res.mean()[0];
        let phi_cl = antidiv_scalar(&res)?;
        let phi = nof.phi.add(&phi_cl)?;

        let mut stats = Diagnostics::new();
        stats.insert("f_rate".into(), f_rate);
        stats.insert("f_rate_paper".into(), f_rate_paper);
        stats.insert("phi_closure_sup".into(), phi_cl.sup_magnitude());
        stats.insert("phi_paper_sup".into(), nof.phi.sup_magnitude());
        stats.insert("phi_a_sup".into(), phi_a.sup_magnitude());
        stats.insert("phi_d1_sup".into(), pd1.sup_magnitude());
        stats.insert("phi_d2_sup".into(), phi_d2.sup_magnitude());
        stats.insert("phi_s1_sup".into(), ps1.sup_magnitude());
        stats.insert("phi_s2_sup".into(), phi_s2.sup_magnitude());
        stats.insert("w_c_l2".into(), w_c.l2_norm());
        Ok(CurrentParts { phi, f_rate, stats })
    }

    /// All measurements at t_j.
    pub fn diagnostics(&self, t: f64) -> Result<Diagnostics> {
        let j = self.index_of(t)?;
        let mut d = self.core(j)?.stats.clone();
        d.extend(self.stress(j)?.stats.clone());
        d.extend(self.current(j)?.stats.clone());
        d.insert("f".into(), self.f_value(j)?);
        d.insert("rho".into(), self.rho);
        d.insert("rho1".into(), self.rho1);
        d.insert("lambda".into(), self.lambda);
        d.insert("tube_radius".into(), self.pieces.tube_radius);
        d.insert("drift_margin".into(), self.pieces.margin);
        d.insert(
            "drift_speed_capacity".into(),
            self.pieces.margin / (self.lambda * self.partition.eps * self.config.drift_safety),
        );
        d.insert("resolved".into(), self.resolved as u8 as f64);
        Ok(d)
    }
}

fn half_v2_of(v: &TorusField) -> Result<TorusField> {
    Ok(norm_sq(v)?.scale(0.5))
}

impl ErFlow for Step {
    fn level(&self) -> usize {
        self.q + 1
    }

    fn grid(&self) -> GridSpec {
        self.grid
    }

    fn energy(&self) -> &EnergyProfile {
        self.base.energy()
    }

    fn snapshot(&self, t: f64) -> Result<Arc<Snapshot>> {
        let j = self.index_of(t)?;
        let c = self.core(j)?;
        let s = self.stress(j)?;
        let cur = self.current(j)?;
        let f = self.f_value(j)?;
        let snap = Snapshot {
            q: self.q + 1,
            t: self.time(j),
            v: c.base.v.add(&c.w)?,
            p: s.p_next.clone(),
            r: s.r_nof.add(&identity(self.grid, 2.0 * f / 3.0))?,
            phi: cur.phi.clone(),
            z: c.z_next.clone(),
        };
        Ok(Arc::new(snap))
    }
}

#[derive(Debug, Clone, Copy)]
struct PointOut {
    c0: [f64; 6],
    d0: [f64; 3],
    wo: [f64; 3],
    psi: [f64; 3],
    fbar_min: f64,
    lam_arg: f64,
    k_dev: f64,
    gamma_min: f64,
    non_nb: u32,
    hits: u32,
}

impl PointOut {
    fn new() -> Self {
        Self {
            c0: [0.0; 6],
            d0: [0.0; 3],
            wo: [0.0; 3],
            psi: [0.0; 3],
            fbar_min: f64::INFINITY,
            lam_arg: 0.0,
            k_dev: 0.0,
            gamma_min: f64::INFINITY,
            non_nb: 0,
            hits: 0,
        }
    }
}

#[inline]
fn mat_vec3(m: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

#[inline]
fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j]))
}

#[inline]
fn transpose(a: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[j][i]))
}

#[inline]
fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[inline]
fn add_outer(m: &mut Mat3, c: f64, f: &[f64; 3]) {
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] += c * f[i] * f[j];
        }
    }
}

#[inline]
fn add_sym(out: &mut [f64; 6], m: &Mat3, c: f64) {
    for i in 0..3 {
        for j in i..3 {
            out[sym_index(i, j)] += c * m[i][j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iterate::InitialTuple;
    use crate::noise::{sample_path, NoiseSpec};
    use crate::params::{build_cascade, CascadeInput};

    fn setup(amplitude: f64, energy: EnergyProfile, n: usize) -> (Arc<InitialTuple>, Arc<NoisePath>, Cascade) {
        let c = build_cascade(CascadeInput::default()).unwrap();
        let spec = NoiseSpec {
            s_q: 128.0,
            k_max: 1,
            seed: 11,
            dt: 1e-3,
            horizon: 2.0,
            amplitude,
        };
        let path = Arc::new(sample_path(&spec).unwrap());
        let tuple = InitialTuple::new(GridSpec::new(n).unwrap(), path.clone(), c.i_q[0], energy);
        (Arc::new(tuple), path, c)
    }

    fn config() -> StepConfig {
        StepConfig {
            anchor: 0.3,
            allow_unresolved_pipes: true,
            ..StepConfig::default()
        }
    }

    #[test]
    fn unresolved_pipes_are_refused_by_default() {
        let (t, p, c) = setup(0.0, EnergyProfile::Constant(0.0), 16);
        let err = Step::new(t, p, &c, StepConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Guard(_)), "{err}");
    }

    #[test]
    fn second_step_is_refused() {
        let (t, p, c) = setup(0.0, EnergyProfile::Constant(0.0), 16);
        let mut c2 = c.clone();
        c2.input.q_max = 2;
        let s1: Arc<dyn ErFlow> = Arc::new(Step::new(t, p.clone(), &c, config()).unwrap());
        assert!(matches!(Step::new(s1, p, &c2, config()), Err(Error::Config(_))));
    }

    #[test]
    fn cancellations_and_trace_identity_with_noise() {
        let (t, p, c) = setup(0.1, EnergyProfile::Linear { e0: 0.2, slope: 1.0 }, 16);
        let step = Step::new(t, p, &c, config()).unwrap();
        let d = step.diagnostics(step.time(1)).unwrap();
        assert!(d["cancel_c0"] <= 1e-8, "{d:?}");
        assert!(d["cancel_d0"] <= 1e-8, "{d:?}");
        assert!(d["trace_identity_err"] <= 1e-9, "{d:?}");
        assert!(d["r_a_trace"] <= 1e-12 * d["r_a_sup"].max(1.0), "{d:?}");
        assert_eq!(d["non_neighbour_pairs"], 0.0);
        assert!(d["fbar_min"] > 0.5);
        let s = step.snapshot(step.time(1)).unwrap();
        assert_eq!(s.q, 1);
        assert!(s.r.sup_norm().is_finite() && s.phi.sup_norm().is_finite());
    }

    #[test]
    fn zero_data_keep_residuals_at_floor() {
        let (t, p, c) = setup(0.0, EnergyProfile::Constant(0.0), 16);
        let step = Step::new(t, p, &c, config()).unwrap();
        let s: Vec<_> = (0..3).map(|k| step.snapshot(step.time(2 - k)).unwrap()).collect();
        let dv = crate::transport::bdf2_rate([&s[0].v, &s[1].v, &s[2].v], step.h).unwrap();
        let m = crate::iterate::momentum_residual(&s[0], &dv).unwrap();
        assert!(m.sup_norm() <= 1e-12 * (1.0 + step.rho), "{}", m.sup_norm());
        assert_eq!(step.f_value(0).unwrap(), 0.0);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let (t, p, c) = setup(0.1, EnergyProfile::Constant(0.1), 16);
            let step = Step::new(t, p, &c, config()).unwrap();
            step.snapshot(step.time(0)).unwrap()
        };
        assert_eq!(run(), run());
    }
}
