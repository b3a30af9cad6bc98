//! Calabi flow on weighted intervals in symplectic-potential form.
//!
//! Potentials are split as `u = u0 + v` where `u0` is the weighted model
//! potential whose Hessian carries the boundary degeneracy and `v` stays
//! smooth up to the boundary.  The flow integrates `dv/dt = -S(u)` with an
//! affine gauge projection after every step.
//!
//! Two discrete curvatures appear.  `scalar_curvature` is the pointwise
//! field `-(1/u'')''` with the model part differentiated in closed form and
//! only smooth quantities touched by finite differences; convergence
//! statements are measured with it.  The step itself uses the variational
//! curvature defined by the gradient of the discrete Mabuchi functional, so
//! energy monotonicity and the decay identity for the target functional
//! hold at rounding level instead of mesh level.

use crate::error::FlowError;
use crate::functionals::{self, AffineFunction};
use crate::geometry::{build_quadrature, MeshSettings, Polytope, Quadrature};
use crate::rat;
use nalgebra::{DMatrix, DVector, LU};
use num::{Signed, Zero};
use std::io::{self, Write};

/// Flow state: the smooth part of the potential at the mesh nodes and the
/// elapsed time.  Values are kept quadrature-orthogonal to affines.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub v: DVector<f64>,
    pub time: f64,
}

/// One accepted step of the diagnostics series.
#[derive(Debug, Clone, Copy)]
pub struct FlowSample {
    pub time: f64,
    pub dt: f64,
    /// `||S - mean||` in the interior metric.
    pub calabi_energy: f64,
    /// `||S - B||` against the configured target density.
    pub target_residual: f64,
    /// Relative Mabuchi functional for the mean boundary density.
    pub f_mean: f64,
    /// Relative Mabuchi functional for the target density.
    pub f_target: f64,
    /// `L_{S(v0)}(u_t)` for the curvature of the run's initial state.
    pub l_reference: f64,
    /// Boundary integral of the normalised potential.
    pub boundary_integral: f64,
}

/// Bounded diagnostics series.  Long runs take tens of millions of steps, so
/// the buffer decimates itself: once it fills, every other retained sample is
/// dropped and the recording stride doubles, keeping the series evenly spaced
/// at a bounded memory cost.  Runs shorter than the capacity keep every step.
#[derive(Debug, Clone)]
pub struct FlowDiagnostics {
    pub samples: Vec<FlowSample>,
    stride: usize,
    seen: usize,
    cap: usize,
}

impl Default for FlowDiagnostics {
    fn default() -> Self {
        FlowDiagnostics::with_capacity(1 << 16)
    }
}

impl FlowDiagnostics {
    /// `cap` is rounded up to an even count of at least four so decimation
    /// preserves even spacing.
    pub fn with_capacity(cap: usize) -> Self {
        let cap = cap.max(4) + cap % 2;
        FlowDiagnostics {
            samples: Vec::new(),
            stride: 1,
            seen: 0,
            cap,
        }
    }

    /// Steps between retained samples in the current regime.
    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Number of accepted steps offered to the recorder, independent of how
    /// many rows the decimation kept.
    pub fn accepted_steps(&self) -> usize {
        self.seen.saturating_sub(1)
    }

    fn record(&mut self, sample: FlowSample) {
        if self.seen % self.stride == 0 {
            if self.samples.len() == self.cap {
                let mut i = 0usize;
                self.samples.retain(|_| {
                    let keep = i % 2 == 0;
                    i += 1;
                    keep
                });
                // This branch first runs at seen = cap * stride, which is a
                // multiple of the doubled stride because cap is even, so the
                // spacing stays uniform across the regime change.
                self.stride *= 2;
            }
            self.samples.push(sample);
        }
        self.seen += 1;
    }

    /// Records unconditionally; used for the final state of a run so the
    /// series always ends at the last accepted step.
    fn record_final(&mut self, sample: FlowSample) {
        if self.samples.last().map(|s| s.time) != Some(sample.time) {
            self.samples.push(sample);
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "t,dt,calabi_energy,target_residual,f_mean,f_target,l_reference,boundary_integral"
        )?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.time,
                s.dt,
                s.calabi_energy,
                s.target_residual,
                s.f_mean,
                s.f_target,
                s.l_reference,
                s.boundary_integral
            )?;
        }
        Ok(())
    }
}

/// Behaviour of a flow run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub t_end: f64,
    /// Base step is `dt_factor * h^4` for the smallest mesh spacing.
    pub dt_factor: f64,
    pub max_steps: usize,
    /// Target density `B` at the mesh nodes; `None` targets the constant
    /// mean boundary density.
    pub target: Option<Vec<f64>>,
    /// Early stop once `||S - B||` drops below this.
    pub target_tol: Option<f64>,
    /// Abort when `max |S|` exceeds this cap.
    pub blow_up_cap: f64,
    /// Accepted steps in a row before the step doubles.
    pub growth_streak: usize,
    /// Largest multiple of the base step the growth may reach; 1 keeps the
    /// step fixed, which is what tight decay-rate checks want.
    pub growth_cap: f64,
    /// Per-step slack allowed on the Calabi energy and the Mabuchi values
    /// before a step is rejected as too large.
    pub energy_slack: f64,
}

impl RunConfig {
    pub fn to_time(t_end: f64) -> Self {
        RunConfig {
            t_end,
            dt_factor: 0.1,
            max_steps: 50_000_000,
            target: None,
            target_tol: None,
            blow_up_cap: 1e6,
            growth_streak: 50,
            growth_cap: 64.0,
            energy_slack: 1e-10,
        }
    }
}

/// Mesh-bound model data for one weighted interval: the model potential, the
/// closed-form derivatives of `G = 1/u0''`, the difference stencils and the
/// factorised interior Gram matrix.
pub struct FlowModel {
    pub poly: Polytope,
    pub quad: Quadrature,
    xs: Vec<f64>,
    /// Model potential values; zero exactly at the endpoints.
    u0: Vec<f64>,
    g: Vec<f64>,
    gp: Vec<f64>,
    gpp: Vec<f64>,
    d1: Vec<Vec<(usize, f64)>>,
    d2: Vec<Vec<(usize, f64)>>,
    mass_lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Mean-boundary density functional coefficients.
    l_mean: DVector<f64>,
    /// Interior-orthonormal affine basis with its mass images, for the gauge.
    gauge: [(DVector<f64>, DVector<f64>); 2],
    boundary: DVector<f64>,
    s_hat: f64,
}

impl FlowModel {
    pub fn new(poly: &Polytope, settings: &MeshSettings) -> Result<Self, FlowError> {
        if poly.dim != 1 {
            return Err(FlowError::NotOneDimensional);
        }
        for (i, f) in poly.facets.iter().enumerate() {
            if f.sigma_weight.is_zero() {
                return Err(FlowError::ZeroWeightEndpoint(i));
            }
        }
        let quad = build_quadrature(poly, settings)?;
        let xs: Vec<f64> = quad.mesh_nodes.iter().map(|p| p[0]).collect();
        let n = xs.len();
        assert!(n >= 8, "the flow stencils need at least eight nodes");
        let (alpha, beta) = (xs[0], xs[n - 1]);
        let mut w = [0.0f64; 2];
        for f in &poly.facets {
            let weight = rat::to_f64(&f.sigma_weight);
            if f.normal[0].is_positive() {
                w[0] = weight;
            } else {
                w[1] = weight;
            }
        }

        // G = w0 w1 d0 d1 / (w0 d0 + w1 d1) with d0 = x - alpha, d1 = beta - x,
        // so 1/u0'' vanishes at each endpoint with slope equal to its weight.
        let mut u0 = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        let mut gp = Vec::with_capacity(n);
        let mut gpp = Vec::with_capacity(n);
        for &x in &xs {
            let d0 = x - alpha;
            let d1 = beta - x;
            u0.push(xlogx(d0) / w[0] + xlogx(d1) / w[1]);
            let nn = w[0] * w[1] * d0 * d1;
            let np = w[0] * w[1] * (d1 - d0);
            let npp = -2.0 * w[0] * w[1];
            let dd = w[0] * d0 + w[1] * d1;
            let dp = w[0] - w[1];
            g.push(nn / dd);
            gp.push(np / dd - nn * dp / (dd * dd));
            gpp.push(npp / dd - 2.0 * np * dp / (dd * dd) + 2.0 * nn * dp * dp / (dd * dd * dd));
        }

        let d1 = derivative_stencils(&xs, 1);
        let d2 = derivative_stencils(&xs, 2);
        let mass_lu = quad.mass().clone().lu();
        let l_mean = DVector::from_vec(functionals::l_vector(
            &quad,
            &AffineFunction::constant_fn(1, quad.s_hat),
        ));
        let boundary = DVector::from_column_slice(quad.boundary_vector());

        // Gram-Schmidt on {1, x} in the interior product.
        let mass = quad.mass();
        let ones = DVector::from_element(n, 1.0);
        let xvec = DVector::from_vec(xs.clone());
        let e0 = &ones / (mass * &ones).dot(&ones).sqrt();
        let m0 = mass * &e0;
        let x0 = &xvec - &e0 * m0.dot(&xvec);
        let e1 = &x0 / (mass * &x0).dot(&x0).sqrt();
        let m1 = mass * &e1;
        let s_hat = quad.s_hat;

        Ok(FlowModel {
            poly: poly.clone(),
            quad,
            xs,
            u0,
            g,
            gp,
            gpp,
            d1,
            d2,
            mass_lu,
            l_mean,
            gauge: [(e0, m0), (e1, m1)],
            boundary,
            s_hat,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.xs.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn mean_density(&self) -> f64 {
        self.s_hat
    }

    /// Model potential values at the nodes.
    pub fn model_potential(&self) -> &[f64] {
        &self.u0
    }

    /// `1/u0''` at the nodes, in closed form.
    pub fn model_inverse_hessian(&self) -> &[f64] {
        &self.g
    }

    /// Full potential values `u0 + v` at the nodes.
    pub fn potential_values(&self, state: &FlowState) -> Vec<f64> {
        self.u0
            .iter()
            .zip(state.v.iter())
            .map(|(a, b)| a + b)
            .collect()
    }

    /// Samples the perturbation at the nodes, projects the affine part away
    /// and verifies convexity of the resulting potential.
    pub fn initial_state(
        &self,
        perturbation: impl Fn(f64) -> f64,
    ) -> Result<FlowState, FlowError> {
        let mut v = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|&x| perturbation(x)));
        self.project_gauge(&mut v);
        let state = FlowState { v, time: 0.0 };
        self.hessian_ratio(&state)
            .map_err(FlowError::NonConvexStart)?;
        Ok(state)
    }

    /// `r = 1/(1 + G v'')`, the ratio of the full to the model inverse
    /// Hessian; errs with the first interior node where convexity fails.
    fn hessian_ratio(&self, state: &FlowState) -> Result<Vec<f64>, usize> {
        let vpp = apply(&self.d2, state.v.as_slice());
        let n = self.xs.len();
        let mut r = Vec::with_capacity(n);
        for (i, vppi) in vpp.iter().enumerate() {
            let q = 1.0 + self.g[i] * vppi;
            if q <= 0.0 {
                if i > 0 && i + 1 < n {
                    return Err(i);
                }
                // The endpoint value of r is irrelevant (G vanishes there);
                // clamp so downstream logs stay finite.
                r.push(1.0);
            } else {
                r.push(1.0 / q);
            }
        }
        Ok(r)
    }

    /// Pointwise scalar curvature `-(1/u'')''`: the model factors are
    /// differentiated in closed form, only the smooth Hessian ratio goes
    /// through the difference stencils.
    pub fn scalar_curvature(&self, state: &FlowState) -> Result<Vec<f64>, FlowError> {
        let r = self.hessian_ratio(state).map_err(FlowError::ConvexityLoss)?;
        let rp = apply(&self.d1, &r);
        let rpp = apply(&self.d2, &r);
        Ok((0..self.xs.len())
            .map(|i| -(self.gpp[i] * r[i] + 2.0 * self.gp[i] * rp[i] + self.g[i] * rpp[i]))
            .collect())
    }

    /// Variational curvature: the field `S` with `Gram * (S - mean)` equal
    /// to the gradient of the discrete Mabuchi functional.  Stepping with it
    /// makes the flow an exact gradient flow of that functional.
    pub fn weak_curvature(&self, state: &FlowState) -> Result<DVector<f64>, FlowError> {
        let r = self.hessian_ratio(state).map_err(FlowError::ConvexityLoss)?;
        Ok(self.weak_from_ratio(&r))
    }

    fn weak_from_ratio(&self, r: &[f64]) -> DVector<f64> {
        let masses = self.quad.interior_vector();
        let mut rhs = self.l_mean.clone();
        for (i, ri) in r.iter().enumerate() {
            let flux = masses[i] * ri * self.g[i];
            for &(j, c) in &self.d2[i] {
                rhs[j] -= c * flux;
            }
        }
        let mut s = self.mass_lu.solve(&rhs).expect("interior Gram is regular");
        s.add_scalar_mut(self.s_hat);
        s
    }

    fn project_gauge(&self, v: &mut DVector<f64>) {
        for (e, me) in &self.gauge {
            let c = me.dot(v);
            v.axpy(-c, e, 1.0);
        }
    }

    /// Euler update without acceptance checks.
    fn propose(&self, state: &FlowState, s: &DVector<f64>, dt: f64) -> FlowState {
        let mut v = &state.v - s * dt;
        self.project_gauge(&mut v);
        FlowState {
            v,
            time: state.time + dt,
        }
    }

    /// One explicit step of `dv/dt = -S(u)` followed by the affine gauge
    /// projection.  Rejects the step when the update breaks convexity,
    /// suggesting half the step.
    pub fn step(&self, state: &FlowState, dt: f64) -> Result<FlowState, FlowError> {
        assert!(dt > 0.0);
        let s = self.weak_curvature(state)?;
        let next = self.propose(state, &s, dt);
        match self.hessian_ratio(&next) {
            Ok(_) => Ok(next),
            Err(_) => Err(FlowError::StepRejected {
                dt,
                suggested: dt / 2.0,
            }),
        }
    }

    /// Interior-metric norm.
    fn norm(&self, f: &DVector<f64>) -> f64 {
        (self.quad.mass() * f).dot(f).max(0.0).sqrt()
    }

    /// Relative Mabuchi functional for the density with coefficients `l`:
    /// `L(v) - integral of log(1 + G v'')`.
    fn mabuchi(&self, l: &DVector<f64>, v: &DVector<f64>, r: &[f64]) -> f64 {
        let log_term: f64 = self
            .quad
            .interior_vector()
            .iter()
            .zip(r)
            .map(|(m, ri)| m * ri.ln())
            .sum();
        l.dot(v) + log_term
    }

    #[allow(clippy::too_many_arguments)]
    fn diagnostics_row(
        &self,
        state: &FlowState,
        dt: f64,
        s: &DVector<f64>,
        r: &[f64],
        target: &DVector<f64>,
        l_target: &DVector<f64>,
        s_reference: &DVector<f64>,
    ) -> FlowSample {
        let mean = DVector::from_element(s.len(), self.s_hat);
        let u = DVector::from_vec(self.potential_values(state));
        // Normalised potential: subtract the flat support plane through the
        // minimum, enough for the linear-growth guard.
        let umin = u.min();
        let boundary_integral = self
            .boundary
            .iter()
            .zip(u.iter())
            .map(|(b, ui)| b * (ui - umin))
            .sum();
        let l_reference = self.boundary.dot(&u) - (self.quad.mass() * &u).dot(s_reference);
        FlowSample {
            time: state.time,
            dt,
            calabi_energy: self.norm(&(s - &mean)),
            target_residual: self.norm(&(s - target)),
            f_mean: self.mabuchi(&self.l_mean, &state.v, r),
            f_target: self.mabuchi(l_target, &state.v, r),
            l_reference,
            boundary_integral,
        }
    }

    /// Adaptive explicit run: base step `dt_factor * h^4`, halving when a
    /// step breaks convexity or raises the energy, doubling after an accept
    /// streak, early stop on target residual, blow-up guard on `max |S|`.
    pub fn run(
        &self,
        start: FlowState,
        cfg: &RunConfig,
    ) -> Result<(FlowState, FlowDiagnostics), FlowError> {
        let n = self.xs.len();
        let h_min = self
            .xs
            .windows(2)
            .map(|p| p[1] - p[0])
            .fold(f64::INFINITY, f64::min);
        let dt_base = cfg.dt_factor * h_min.powi(4);
        let dt_floor = dt_base / 1024.0;
        let dt_cap = dt_base * cfg.growth_cap;

        let target = DVector::from_vec(cfg.target.clone().unwrap_or_else(|| vec![self.s_hat; n]));
        let l_target = {
            let dens = self.quad.mass() * &target;
            &self.boundary - &dens
        };

        let mut state = start;
        let r0 = self
            .hessian_ratio(&state)
            .map_err(FlowError::ConvexityLoss)?;
        let mut s = self.weak_from_ratio(&r0);
        let mut r = r0;
        let s_reference = s.clone();
        let mean = DVector::from_element(n, self.s_hat);
        let mut energy = self.norm(&(&s - &mean));
        let mut f_mean = self.mabuchi(&self.l_mean, &state.v, &r);

        let mut diagnostics = FlowDiagnostics::default();
        diagnostics.record(self.diagnostics_row(
            &state,
            0.0,
            &s,
            &r,
            &target,
            &l_target,
            &s_reference,
        ));

        let mut dt = dt_base;
        let mut streak = 0usize;
        let mut last_dt = 0.0_f64;
        for _ in 0..cfg.max_steps {
            if state.time >= cfg.t_end {
                break;
            }
            if let Some(tol) = cfg.target_tol {
                if self.norm(&(&s - &target)) < tol {
                    break;
                }
            }
            let dt_step = dt.min(cfg.t_end - state.time).max(dt_floor);
            let candidate = self.propose(&state, &s, dt_step);
            let accepted = match self.hessian_ratio(&candidate) {
                Ok(r_new) => {
                    let s_new = self.weak_from_ratio(&r_new);
                    let energy_new = self.norm(&(&s_new - &mean));
                    let f_mean_new = self.mabuchi(&self.l_mean, &candidate.v, &r_new);
                    if energy_new <= energy + cfg.energy_slack
                        && f_mean_new <= f_mean + cfg.energy_slack
                    {
                        Some((r_new, s_new, energy_new, f_mean_new))
                    } else {
                        None
                    }
                }
                Err(_) => None,
            };
            match accepted {
                Some((r_new, s_new, energy_new, f_mean_new)) => {
                    let s_max = s_new.amax();
                    if s_max > cfg.blow_up_cap {
                        return Err(FlowError::BlowUpDetected(s_max));
                    }
                    state = candidate;
                    r = r_new;
                    s = s_new;
                    energy = energy_new;
                    f_mean = f_mean_new;
                    last_dt = dt_step;
                    diagnostics.record(self.diagnostics_row(
                        &state,
                        dt_step,
                        &s,
                        &r,
                        &target,
                        &l_target,
                        &s_reference,
                    ));
                    streak += 1;
                    if streak >= cfg.growth_streak && dt * 2.0 <= dt_cap {
                        dt *= 2.0;
                        streak = 0;
                    }
                }
                None => {
                    dt = dt_step / 2.0;
                    streak = 0;
                    if dt < dt_floor {
                        let node = self.hessian_ratio(&candidate).err().unwrap_or(0);
                        return Err(FlowError::ConvexityLoss(node));
                    }
                }
            }
        }
        diagnostics.record_final(self.diagnostics_row(
            &state,
            last_dt,
            &s,
            &r,
            &target,
            &l_target,
            &s_reference,
        ));
        Ok((state, diagnostics))
    }
}

/// Smallest ratio `L_rho(f) / boundary integral of f` over a battery of
/// normalised convex samples; a positive value is the coercivity constant
/// that turns the linear-growth diagnostic into properness.
pub fn coercivity_estimate(
    poly: &Polytope,
    quad: &Quadrature,
    density: &[f64],
    battery: usize,
    seed: u64,
) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let samples = crate::convexcone::sample_cone(&mut rng, poly, quad, battery);
    let dens = DVector::from_column_slice(density);
    let mass = quad.mass();
    let bvec = DVector::from_column_slice(quad.boundary_vector());
    let mut lambda = f64::INFINITY;
    for f in &samples {
        let fv = DVector::from_column_slice(f);
        let denom = bvec.dot(&fv);
        if denom <= 1e-12 {
            continue;
        }
        let l = denom - (mass * &fv).dot(&dens);
        lambda = lambda.min(l / denom);
    }
    lambda
}

fn xlogx(d: f64) -> f64 {
    if d <= 0.0 {
        0.0
    } else {
        d * d.ln()
    }
}

fn apply(rows: &[Vec<(usize, f64)>], f: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|row| row.iter().map(|&(j, c)| c * f[j]).sum())
        .collect()
}

/// Difference stencils of the requested order on an arbitrary ascending
/// grid: centred three-point rows inside, one-sided rows at the ends with
/// one extra point so both orders stay second-order accurate.
fn derivative_stencils(xs: &[f64], order: usize) -> Vec<Vec<(usize, f64)>> {
    let n = xs.len();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let (start, width) = if i == 0 {
            (0, order + 2)
        } else if i + 1 == n {
            (n - order - 2, order + 2)
        } else {
            (i - 1, 3)
        };
        rows.push(interpolation_derivative_row(xs, i, start, width, order));
    }
    rows
}

/// Weights reproducing the derivative of the interpolating polynomial
/// through `width` consecutive points, solved from the moment conditions.
fn interpolation_derivative_row(
    xs: &[f64],
    at: usize,
    start: usize,
    width: usize,
    order: usize,
) -> Vec<(usize, f64)> {
    let mut vand = DMatrix::zeros(width, width);
    let mut rhs = DVector::zeros(width);
    let mut factorial = 1.0;
    for k in 0..width {
        if k > 0 {
            factorial *= k as f64;
        }
        for j in 0..width {
            vand[(k, j)] = (xs[start + j] - xs[at]).powi(k as i32);
        }
        if k == order {
            rhs[k] = factorial;
        }
    }
    let w = vand.lu().solve(&rhs).expect("distinct grid nodes");
    (0..width).map(|j| (start + j, w[j])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Facet;
    use crate::rat::{rat, rat_int, Rat};

    fn weighted_interval(w_lo: Rat, w_hi: Rat) -> Polytope {
        Polytope::from_facets(
            1,
            vec![
                Facet::new(vec![1], rat_int(0), w_lo),
                Facet::new(vec![-1], rat_int(-1), w_hi),
            ],
        )
        .unwrap()
    }

    fn model(w_lo: Rat, w_hi: Rat, res: usize) -> FlowModel {
        FlowModel::new(&weighted_interval(w_lo, w_hi), &MeshSettings::uniform(res)).unwrap()
    }

    #[test]
    fn model_potential_takes_the_weighted_form() {
        let m = model(rat(1, 2), rat_int(1), 128);
        for (x, u) in m.nodes().iter().zip(m.model_potential()) {
            let want = 2.0 * xlogx(*x) + xlogx(1.0 - x);
            assert!((u - want).abs() < 1e-12, "u0({x}) = {u}");
        }
        // 1/u'' vanishes at each endpoint with slope equal to its weight.
        let g = m.model_inverse_hessian();
        let xs = m.nodes();
        assert!((g[1] / xs[1] - 0.5).abs() < 0.02, "left slope {}", g[1] / xs[1]);
        let n = xs.len();
        let right = g[n - 2] / (1.0 - xs[n - 2]);
        assert!((right - 1.0).abs() < 0.02, "right slope {right}");
    }

    #[test]
    fn model_curvature_is_exact_for_canonical_and_weighted_ends() {
        let m = model(rat_int(1), rat_int(1), 64);
        let state = m.initial_state(|_| 0.0).unwrap();
        for s in m.scalar_curvature(&state).unwrap() {
            assert!((s - 2.0).abs() < 1e-9, "S = {s}");
        }
        let m = model(rat(1, 2), rat_int(1), 64);
        let state = m.initial_state(|_| 0.0).unwrap();
        for (x, s) in m.nodes().iter().zip(m.scalar_curvature(&state).unwrap()) {
            let want = 4.0 / (2.0 - x).powi(3);
            assert!((s - want).abs() < 1e-9, "S({x}) = {s}, want {want}");
        }
    }

    #[test]
    fn discrete_curvature_converges_quadratically_on_smooth_parts() {
        // u = u0 + c x^2 on the canonical interval has the closed form
        // S = (2(1+2cG) + 4c G'^2) / (1+2cG)^3 with G = x - x^2.
        let c = 0.25;
        let exact = |x: f64| {
            let g = x - x * x;
            let gp: f64 = 1.0 - 2.0 * x;
            let q = 1.0 + 2.0 * c * g;
            (2.0 * q + 4.0 * c * gp * gp) / (q * q * q)
        };
        let mut errs = Vec::new();
        for res in [32usize, 64] {
            let m = model(rat_int(1), rat_int(1), res);
            let state = m.initial_state(|x| c * x * x).unwrap();
            let s = m.scalar_curvature(&state).unwrap();
            let err = m
                .nodes()
                .iter()
                .zip(&s)
                .map(|(x, si)| (si - exact(*x)).abs())
                .fold(0.0_f64, f64::max);
            errs.push(err);
        }
        assert!(
            errs[1] < errs[0] / 3.0,
            "halving h cut the error only from {} to {}",
            errs[0],
            errs[1]
        );
    }

    #[test]
    fn curvature_is_unchanged_by_affine_shifts_of_the_potential() {
        let m = model(rat_int(1), rat_int(1), 48);
        let state = m.initial_state(|x| 0.3 * x * x).unwrap();
        let shifted = FlowState {
            v: DVector::from_iterator(
                m.num_nodes(),
                m.nodes()
                    .iter()
                    .zip(state.v.iter())
                    .map(|(x, v)| v + 3.0 - 5.0 * x),
            ),
            time: 0.0,
        };
        let a = m.scalar_curvature(&state).unwrap();
        let b = m.scalar_curvature(&shifted).unwrap();
        for (ai, bi) in a.iter().zip(&b) {
            assert!((ai - bi).abs() < 1e-9);
        }
    }

    #[test]
    fn the_model_potential_is_a_fixed_point_up_to_gauge() {
        let m = model(rat_int(1), rat_int(1), 64);
        let mut state = m.initial_state(|_| 0.0).unwrap();
        let dt = 0.1 * (1.0f64 / 64.0).powi(4);
        for _ in 0..1000 {
            state = m.step(&state, dt).unwrap();
        }
        assert!(state.v.amax() < 1e-8, "drift {}", state.v.amax());
    }

    #[test]
    fn oversized_steps_are_rejected_with_a_halved_suggestion() {
        let m = model(rat_int(1), rat_int(1), 24);
        let state = m.initial_state(|x| 0.5 * x * (1.0 - x)).unwrap();
        match m.step(&state, 1.0) {
            Err(FlowError::StepRejected { dt, suggested }) => {
                assert_eq!(dt, 1.0);
                assert_eq!(suggested, 0.5);
            }
            other => panic!("expected a rejection, got {other:?}"),
        }
        // Repeated halving from the rejected step eventually goes through.
        let mut dt = 0.5;
        loop {
            match m.step(&state, dt) {
                Ok(_) => break,
                Err(FlowError::StepRejected { suggested, .. }) => dt = suggested,
                Err(other) => panic!("unexpected error {other:?}"),
            }
            assert!(dt > 1e-12, "halving never recovered");
        }
    }

    #[test]
    fn zero_weight_endpoints_are_refused() {
        let poly = weighted_interval(rat_int(0), rat_int(1));
        match FlowModel::new(&poly, &MeshSettings::uniform(16)) {
            Err(FlowError::ZeroWeightEndpoint(0)) => {}
            Err(other) => panic!("expected the endpoint refusal, got {other}"),
            Ok(_) => panic!("a zero-weight endpoint was accepted"),
        }
    }

    #[test]
    fn nonconvex_perturbations_are_refused_at_start() {
        let m = model(rat_int(1), rat_int(1), 24);
        match m.initial_state(|x| 40.0 * x * (1.0 - x)) {
            Err(FlowError::NonConvexStart(_)) => {}
            Err(other) => panic!("expected the convexity refusal, got {other}"),
            Ok(_) => panic!("a strongly concave perturbation was accepted"),
        }
    }

    #[test]
    fn perturbed_flow_decreases_energy_to_constant_curvature() {
        let m = model(rat_int(1), rat_int(1), 24);
        let state = m.initial_state(|x| 0.5 * x * (1.0 - x)).unwrap();
        let mut cfg = RunConfig::to_time(1.0);
        cfg.target_tol = Some(5e-3);
        let (end, diag) = m.run(state, &cfg).unwrap();
        let samples = &diag.samples;
        assert!(samples.len() > 2);
        for pair in samples.windows(2) {
            assert!(
                pair[1].calabi_energy <= pair[0].calabi_energy + 1e-10,
                "energy rose from {} to {}",
                pair[0].calabi_energy,
                pair[1].calabi_energy
            );
            assert!(pair[1].f_mean <= pair[0].f_mean + 1e-10);
        }
        assert!(samples.last().unwrap().calabi_energy < 5e-3);
        // The pointwise curvature of the limit agrees with the constant.
        let s = m.scalar_curvature(&end).unwrap();
        let dev = s.iter().map(|si| (si - 2.0).abs()).fold(0.0_f64, f64::max);
        assert!(dev < 5e-2, "pointwise deviation {dev}");
        // Linear growth guards stay bounded.
        for s in samples {
            assert!(s.l_reference / (1.0 + s.time) < 1e3);
            assert!(s.boundary_integral / (1.0 + s.time) < 1e3);
        }
    }

    #[test]
    fn weighted_flow_approaches_the_extremal_affine_density() {
        let poly = weighted_interval(rat(1, 2), rat_int(1));
        let m = FlowModel::new(&poly, &MeshSettings::uniform(24)).unwrap();
        // The relative problem is stable here, so the flow limit density is
        // the extremal affine itself.
        let a = functionals::extremal_affine(&poly).unwrap();
        let a_fn = AffineFunction::from_rat(&a);
        let target: Vec<f64> = m.nodes().iter().map(|&x| a_fn.eval(&[x])).collect();
        let state = m.initial_state(|_| 0.0).unwrap();
        let mut cfg = RunConfig::to_time(2.0);
        cfg.target = Some(target);
        cfg.target_tol = Some(5e-2);
        let (_, diag) = m.run(state, &cfg).unwrap();
        let last = diag.samples.last().unwrap();
        assert!(
            last.target_residual < 5e-2,
            "residual stalled at {}",
            last.target_residual
        );
        for pair in diag.samples.windows(2) {
            assert!(pair[1].calabi_energy <= pair[0].calabi_energy + 1e-10);
        }
    }

    #[test]
    fn mabuchi_target_decay_matches_the_squared_residual() {
        let m = model(rat_int(1), rat_int(1), 24);
        let state = m.initial_state(|x| 0.5 * x * (1.0 - x)).unwrap();
        let mut cfg = RunConfig::to_time(2e-5);
        cfg.growth_cap = 1.0;
        let (_, diag) = m.run(state, &cfg).unwrap();
        assert!(diag.samples.len() > 10);
        for pair in diag.samples.windows(2) {
            let dt = pair[1].time - pair[0].time;
            let rate = (pair[1].f_target - pair[0].f_target) / dt;
            let bound = -pair[1].target_residual * pair[1].target_residual;
            assert!(rate <= bound + 1e-6, "dF_B/dt = {rate} exceeds {bound}");
        }
    }

    #[test]
    fn coercivity_of_the_reference_density_is_positive() {
        let poly = weighted_interval(rat_int(1), rat_int(1));
        let m = FlowModel::new(&poly, &MeshSettings::uniform(32)).unwrap();
        let state = m.initial_state(|x| 0.4 * x * x).unwrap();
        let s0 = m.weak_curvature(&state).unwrap();
        let lambda = coercivity_estimate(&m.poly, &m.quad, s0.as_slice(), 64, 11);
        assert!(lambda > 0.0, "lambda = {lambda}");
    }
}
