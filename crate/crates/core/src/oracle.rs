//! Exact continuum-field response: the two-time Green's function, its
//! tabulation on a uniform grid, and convolution with photon wavepackets.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::linalg::{expm, Operator, C64};
use crate::model::{build_continuum_generator, MatterModel};

/// Largest tolerated imaginary residue before a Green's value is cast to real.
pub const IMAG_TOL: f64 = 1e-9;

/// Default memory budget for table construction.
pub const DEFAULT_MEMORY_BUDGET: usize = 2 << 30;

/// Where the numbers in a table or curve came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Exact,
    Reconstructed,
    Sampled { trials: u64, seed: u64, rng: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub model_hash: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtraction: Option<f64>,
    /// Validity parameter `||L||^2 n_gamma^2` of the weak-pulse expansion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl TableMeta {
    pub fn exact(model_hash: String) -> Self {
        Self {
            model_hash,
            provenance: Provenance::Exact,
            n_gamma: None,
            t_gamma: None,
            chi: None,
            subtraction: None,
            validity: None,
            config_hash: None,
        }
    }
}

/// `G(t_m, t_int)` on the grid `t_m = m dt`, `t_int = k dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct GreensTable {
    pub dt: f64,
    pub values: Array2<f64>,
    pub sigma: Array2<f64>,
    pub meta: TableMeta,
}

impl GreensTable {
    pub fn m_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn k_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn t_m(&self, m: usize) -> f64 {
        m as f64 * self.dt
    }

    pub fn t_int(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Value at grid times, if both lie on the grid.
    pub fn at(&self, t_m: f64, t_int: f64) -> Option<f64> {
        let m = grid_index(t_m, self.dt)?;
        let k = grid_index(t_int, self.dt)?;
        self.values.get((m, k)).copied()
    }
}

/// Index of `t` on the grid `i * dt`, tolerating rounding.
pub fn grid_index(t: f64, dt: f64) -> Option<usize> {
    let x = t / dt;
    let r = x.round();
    if r < 0.0 || (x - r).abs() > 1e-6 {
        None
    } else {
        Some(r as usize)
    }
}

/// Number of grid points `0, dt, ..., <= t_max`.
pub fn grid_count(t_max: f64, dt: f64) -> usize {
    (t_max / dt + 1e-9).floor() as usize + 1
}

/// Exact response of a matter model to a weak continuum field.
#[derive(Clone, Debug)]
pub struct ContinuumOracle {
    dim: usize,
    generator: Array2<C64>,
    rho0: Array2<C64>,
    l_dag: Array2<C64>,
    l: Array2<C64>,
    measurement: Array1<C64>,
    model_hash: String,
}

impl ContinuumOracle {
    /// Restricts the model to the single-excitation manifold and builds the
    /// damped generator in the rotating frame.
    pub fn new(model: &MatterModel) -> Result<Self> {
        model.ensure_valid()?;
        let m = model.rotating_frame().restrict(1)?;
        let g = build_continuum_generator(&m)?;
        Ok(Self {
            dim: m.dim(),
            generator: g.matrix().clone(),
            rho0: m.initial_state().into_inner(),
            l_dag: m.coupling.dagger().into_inner(),
            l: m.coupling.entries().clone(),
            measurement: m.measurement_vector(),
            model_hash: model.hash(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    fn mat(&self, v: &Array1<C64>) -> Array2<C64> {
        v.clone()
            .into_shape_with_order((self.dim, self.dim))
            .expect("square")
    }

    fn flat(m: Array2<C64>) -> Array1<C64> {
        let n = m.len();
        m.into_shape_with_order(n).expect("contiguous")
    }

    /// Both field-interaction orderings after the first interaction:
    /// `rho L` (ket excited later) and `L^dagger rho` (ket excited first).
    fn first_interactions(&self) -> (Array1<C64>, Array1<C64>) {
        (
            Self::flat(self.rho0.dot(&self.l)),
            Self::flat(self.l_dag.dot(&self.rho0)),
        )
    }

    /// Second interaction for each ordering, summed.
    fn second_interaction(&self, right: &Array1<C64>, left: &Array1<C64>) -> Array1<C64> {
        Self::flat(self.l_dag.dot(&self.mat(right)) + self.mat(left).dot(&self.l))
    }

    fn check_real(z: C64) -> Result<f64> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("Green's function"));
        }
        if z.im.abs() > IMAG_TOL {
            return Err(Error::InvalidArgument(format!(
                "Green's function imaginary residue {:.3e}",
                z.im
            )));
        }
        Ok(z.re)
    }

    /// `G(t1, t2)` by direct exponentiation.
    pub fn greens(&self, t1: f64, t2: f64) -> Result<f64> {
        for t in [t1, t2] {
            if t < 0.0 {
                return Err(Error::NegativeTime(t));
            }
        }
        let p2 = expm(&(&self.generator * C64::new(t2, 0.0)))?;
        let p1 = expm(&(&self.generator * C64::new(t1, 0.0)))?;
        let (r, l) = self.first_interactions();
        let w = self.second_interaction(&p2.dot(&r), &p2.dot(&l));
        Self::check_real(self.measurement.dot(&p1.dot(&w)))
    }

    pub fn table_bytes(&self, m_count: usize, k_count: usize) -> usize {
        let d2 = self.dim * self.dim;
        16 * (d2 * d2 + (m_count + 2 * k_count) * d2 + m_count * k_count)
    }

    /// Exact table on `t_m in [0, t_max_m]`, `t_int in [0, t_max_int]`. One
    /// propagator `exp(G dt)` is built; every grid point comes from products
    /// of it.
    pub fn table(
        &self,
        dt: f64,
        t_max_m: f64,
        t_max_int: f64,
        policy: ExecPolicy,
        memory_budget: usize,
    ) -> Result<GreensTable> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if t_max_m < 0.0 || t_max_int < 0.0 {
            return Err(Error::NegativeTime(t_max_m.min(t_max_int)));
        }
        let mc = grid_count(t_max_m, dt);
        let kc = grid_count(t_max_int, dt);
        let required = self.table_bytes(mc, kc);
        if required > memory_budget {
            return Err(Error::GridTooLarge {
                required,
                budget: memory_budget,
            });
        }
        let step = expm(&(&self.generator * C64::new(dt, 0.0)))?;
        let d2 = self.dim * self.dim;

        // rows[m] = Pi^T P^m
        let rows_fn = || {
            let mut rows = Array2::zeros((mc, d2));
            let mut r = self.measurement.clone();
            for m in 0..mc {
                rows.row_mut(m).assign(&r);
                if m + 1 < mc {
                    r = r.dot(&step);
                }
            }
            rows
        };
        // cols[k] = second interaction after P^k on both orderings
        let cols_fn = || {
            let mut cols = Array2::zeros((d2, kc));
            let (mut r, mut l) = self.first_interactions();
            for k in 0..kc {
                cols.column_mut(k).assign(&self.second_interaction(&r, &l));
                if k + 1 < kc {
                    r = step.dot(&r);
                    l = step.dot(&l);
                }
            }
            cols
        };
        let (rows, cols) = if policy.is_parallel() {
            join(rows_fn, cols_fn)
        } else {
            (rows_fn(), cols_fn())
        };

        let row_values = policy.map_range(mc, |m| {
            rows.row(m)
                .dot(&cols)
                .iter()
                .map(|&z| Self::check_real(z))
                .collect::<Result<Vec<f64>>>()
        });
        let mut values = Array2::zeros((mc, kc));
        for (m, row) in row_values.into_iter().enumerate() {
            for (k, v) in row?.into_iter().enumerate() {
                values[[m, k]] = v;
            }
        }
        Ok(GreensTable {
            dt,
            sigma: Array2::zeros((mc, kc)),
            values,
            meta: TableMeta::exact(self.model_hash.clone()),
        })
    }
}

#[cfg(feature = "parallel")]
fn join<A: Send, B: Send>(a: impl FnOnce() -> A + Send, b: impl FnOnce() -> B + Send) -> (A, B) {
    rayon::join(a, b)
}

#[cfg(not(feature = "parallel"))]
fn join<A, B>(a: impl FnOnce() -> A, b: impl FnOnce() -> B) -> (A, B) {
    (a(), b())
}

/// Convenience: `G(t1, t2)` for a lab-frame model.
pub fn greens_exact(model: &MatterModel, t1: f64, t2: f64) -> Result<f64> {
    ContinuumOracle::new(model)?.greens(t1, t2)
}

pub fn greens_table_exact(model: &MatterModel, dt: f64, t_max_m: f64, t_max_int: f64) -> Result<GreensTable> {
    ContinuumOracle::new(model)?.table(dt, t_max_m, t_max_int, ExecPolicy::default(), DEFAULT_MEMORY_BUDGET)
}

/// Real single-photon amplitude profile sampled on `t_start + i dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wavepacket {
    pub t_start: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl Wavepacket {
    pub fn time(&self, i: usize) -> f64 {
        self.t_start + i as f64 * self.dt
    }

    /// `sum |eps|^2 dt`, equal to 1 for a single photon.
    pub fn norm(&self) -> f64 {
        self.samples.iter().map(|e| e * e).sum::<f64>() * self.dt
    }

    pub fn scaled(&self, c: f64) -> Wavepacket {
        Wavepacket {
            samples: self.samples.iter().map(|e| e * c).collect(),
            ..self.clone()
        }
    }

    /// Amplitude at signed sample index, zero off the grid.
    fn at(&self, i: i64) -> f64 {
        if i < 0 {
            0.0
        } else {
            self.samples.get(i as usize).copied().unwrap_or(0.0)
        }
    }
}

/// Gaussian amplitude `exp(-(t - t0)^2 / (4 sigma^2))`, so `|eps|^2` has
/// standard deviation `sigma`. The grid starts at `t_start` and holds `count`
/// samples.
pub fn gaussian_wavepacket(sigma_t: f64, t0: f64, t_start: f64, dt: f64, count: usize) -> Result<Wavepacket> {
    if !(sigma_t > 0.0) || !(dt > 0.0) || count == 0 {
        return Err(Error::InvalidArgument(format!(
            "gaussian wavepacket needs sigma_t > 0, dt > 0, count > 0 (got {sigma_t}, {dt}, {count})"
        )));
    }
    if sigma_t < 2.0 * dt {
        log::warn!("wavepacket grid too coarse: sigma_t = {sigma_t} < 2 dt = {}", 2.0 * dt);
    }
    let raw: Vec<f64> = (0..count)
        .map(|i| {
            let x = t_start + i as f64 * dt - t0;
            (-x * x / (4.0 * sigma_t * sigma_t)).exp()
        })
        .collect();
    let norm = raw.iter().map(|e| e * e).sum::<f64>() * dt;
    if norm == 0.0 {
        return Err(Error::InvalidArgument("wavepacket grid misses the pulse".into()));
    }
    let c = norm.sqrt().recip();
    Ok(Wavepacket {
        t_start,
        dt,
        samples: raw.into_iter().map(|e| e * c).collect(),
    })
}

/// Gaussian on a grid of spacing `dt` passing through `anchor` and covering
/// `t0 +- width_sigmas * sigma_t`.
pub fn gaussian_aligned(sigma_t: f64, t0: f64, dt: f64, anchor: f64, width_sigmas: f64) -> Result<Wavepacket> {
    let lo = t0 - width_sigmas * sigma_t;
    let hi = t0 + width_sigmas * sigma_t;
    let first = ((lo - anchor) / dt).floor();
    let last = ((hi - anchor) / dt).ceil();
    let count = (last - first) as usize + 1;
    gaussian_wavepacket(sigma_t, t0, anchor + first * dt, dt, count)
}

/// Edge weights of the ordered double sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    /// Every sample carried once with full weight.
    #[default]
    Riemann,
    /// Weight 1/2 on the `t_m = 0` row and on the `t_int = 0` column.
    Trapezoid,
    /// Weight 1/2 on the `t_int = 0` column only. Pulse-reconstructed tables
    /// measure the `t_m = 0` row at the centre of the second pulse, so that
    /// row already carries the endpoint half.
    Pulsed,
}

impl Quadrature {
    pub fn weight(self, m: usize, k: usize) -> f64 {
        let half = |b: bool| if b { 0.5 } else { 1.0 };
        match self {
            Quadrature::Riemann => 1.0,
            Quadrature::Trapezoid => half(m == 0) * half(k == 0),
            Quadrature::Pulsed => half(k == 0),
        }
    }

    /// Trapezoid for exact tables, `Pulsed` for protocol tables.
    pub fn for_table(table: &GreensTable) -> Self {
        match table.meta.provenance {
            Provenance::Exact => Quadrature::Trapezoid,
            _ => Quadrature::Pulsed,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "riemann" => Some(Quadrature::Riemann),
            "trapezoid" => Some(Quadrature::Trapezoid),
            "pulsed" => Some(Quadrature::Pulsed),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
}

/// Sample offsets of the table grid inside the wavepacket grid.
fn alignment(table: &GreensTable, wp: &Wavepacket, t: f64) -> Result<(i64, i64)> {
    let ratio = table.dt / wp.dt;
    let r = ratio.round();
    if r < 1.0 || (ratio - r).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "table dt {} is not an integer multiple of wavepacket dt {}",
            table.dt, wp.dt
        )));
    }
    let x = (t - wp.t_start) / wp.dt;
    let xi = x.round();
    if (x - xi).abs() > 1e-6 {
        return Err(Error::GridMismatch(format!(
            "t = {t} does not fall on the wavepacket grid (start {}, dt {})",
            wp.t_start, wp.dt
        )));
    }
    Ok((xi as i64, r as i64))
}

/// `P(t) = sum_m sum_k w_mk dt^2 eps(t - m dt) eps(t - (m + k) dt) G[m, k]`.
pub fn convolve(table: &GreensTable, wp: &Wavepacket, t: f64, quad: Quadrature) -> Result<f64> {
    Ok(convolve_with_error(table, wp, t, quad)?.0)
}

/// Population and its propagated sampling error (ordered sum of squared
/// weights times `sigma_G^2`).
pub fn convolve_with_error(table: &GreensTable, wp: &Wavepacket, t: f64, quad: Quadrature) -> Result<(f64, f64)> {
    let (it, r) = alignment(table, wp, t)?;
    let dt2 = table.dt * table.dt;
    let mc = table.m_count();
    let kc = table.k_count();
    warn_truncation(wp, it, r, mc.min(kc));
    let mut p = 0.0;
    let mut var = 0.0;
    for m in 0..mc {
        let ei = wp.at(it - m as i64 * r);
        if ei == 0.0 {
            continue;
        }
        for k in 0..kc {
            let ej = wp.at(it - (m + k) as i64 * r);
            if ej == 0.0 {
                continue;
            }
            let w = quad.weight(m, k) * dt2 * ei * ej;
            p += w * table.values[[m, k]];
            let s = table.sigma[[m, k]];
            var += w * w * s * s;
        }
    }
    Ok((p, var.sqrt()))
}

fn warn_truncation(wp: &Wavepacket, it: i64, r: i64, reach: usize) {
    let earliest = it - (reach as i64 - 1) * r;
    let lost: f64 = wp
        .samples
        .iter()
        .enumerate()
        .filter(|(i, _)| (*i as i64) < earliest && (*i as i64) <= it)
        .map(|(_, e)| e * e)
        .sum::<f64>()
        * wp.dt;
    if lost > 1e-6 {
        log::warn!("table domain truncates wavepacket support (lost weight {lost:.2e})");
    }
}

pub fn convolve_curve(table: &GreensTable, wp: &Wavepacket, times: &[f64], quad: Quadrature) -> Result<PopulationCurve> {
    let mut values = Vec::with_capacity(times.len());
    let mut errors = Vec::with_capacity(times.len());
    for &t in times {
        let (p, s) = convolve_with_error(table, wp, t, quad)?;
        values.push(p);
        errors.push(s);
    }
    Ok(PopulationCurve {
        times: times.to_vec(),
        values,
        errors,
    })
}

/// Zero-time value `2 |<i_M| L^dagger |0>|^2` used by calibration checks.
pub fn zero_time_value(model: &MatterModel) -> f64 {
    let l: &Operator = &model.coupling;
    let sd = model.spectator_dim;
    let mut total = 0.0;
    let spec = model.spectator_state();
    for f in 0..sd {
        let p = spec.population(f);
        if p == 0.0 {
            continue;
        }
        let g = model.ground_state * sd + f;
        for f2 in 0..sd {
            let i = model.measured_state * sd + f2;
            total += p * l.entries()[[g, i]].norm_sqr();
        }
    }
    2.0 * total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    /// Single-excitation amplitude `<1| exp(-i H_eff t) L^dagger |0>` for
    /// example 1 in the rotating frame, via the 2x2 closed-form exponential.
    fn amp(t: f64) -> C64 {
        let l = [0.06, 0.08];
        // H_eff = diag(0, -0.2) - i/2 l l^T ; exponent A = -i H_eff t
        let i = C64::new(0.0, 1.0);
        let h = [
            [C64::new(0.0, -0.5 * l[0] * l[0]), C64::new(0.0, -0.5 * l[0] * l[1])],
            [C64::new(0.0, -0.5 * l[1] * l[0]), C64::new(-0.2, -0.5 * l[1] * l[1])],
        ];
        let a = |r: usize, c: usize| -i * h[r][c] * t;
        let tr2 = (a(0, 0) + a(1, 1)) / 2.0;
        let delta = ((a(0, 0) - a(1, 1)) * (a(0, 0) - a(1, 1)) / 4.0 + a(0, 1) * a(1, 0)).sqrt();
        let (c, s) = (delta.cosh(), if delta.norm() < 1e-300 { C64::new(1.0, 0.0) } else { delta.sinh() / delta });
        let e00 = tr2.exp() * (c + s * (a(0, 0) - tr2));
        let e01 = tr2.exp() * s * a(0, 1);
        e00 * l[0] + e01 * l[1]
    }

    fn closed_form(t1: f64, t2: f64) -> f64 {
        2.0 * (amp(t1) * amp(t1 + t2).conj()).re
    }

    #[test]
    fn zero_coupling_gives_zero() {
        let mut m = presets::example1();
        m.coupling = Operator::zeros(3);
        let o = ContinuumOracle::new(&m).unwrap();
        assert_eq!(o.greens(3.0, 7.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_times_value() {
        let m = presets::example1();
        let g = greens_exact(&m, 0.0, 0.0).unwrap();
        assert!((g - 2.0 * 0.0036).abs() < 1e-15);
        assert!((zero_time_value(&m) - g).abs() < 1e-15);
    }

    #[test]
    fn negative_time_rejected() {
        assert!(matches!(greens_exact(&presets::example1(), -1.0, 0.0), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn example1_matches_closed_form() {
        let o = ContinuumOracle::new(&presets::example1()).unwrap();
        for &(t1, t2) in &[(0.0, 0.0), (10.0, 0.0), (50.0, 250.0), (123.4, 5.6), (700.0, 900.0)] {
            let g = o.greens(t1, t2).unwrap();
            assert!((g - closed_form(t1, t2)).abs() < 1e-12, "({t1},{t2}): {g} vs {}", closed_form(t1, t2));
        }
    }

    #[test]
    fn single_emitter_row_decays() {
        let t = greens_table_exact(&presets::single_emitter(1.0, 0.01), 5.0, 200.0, 0.0).unwrap();
        for m in 1..t.m_count() {
            assert!(t.values[[m, 0]] < t.values[[m - 1, 0]]);
        }
    }

    #[test]
    fn relabeling_symmetry() {
        let a = presets::example1();
        let mut b = a.clone();
        // swap chromophores but keep measuring the omega=1.0 one
        b.hamiltonian = Operator::diagonal(&[0.0, 0.8, 1.0]);
        b.coupling = Operator::from_real_rows(&[&[0.0, 0.08, 0.06], &[0.0; 3], &[0.0; 3]]).unwrap();
        b.measured_state = 2;
        let ta = greens_table_exact(&a, 10.0, 200.0, 200.0).unwrap();
        let tb = greens_table_exact(&b, 10.0, 200.0, 200.0).unwrap();
        assert!(ta.values.iter().zip(tb.values.iter()).all(|(x, y)| (x - y).abs() < 1e-13));
    }

    #[test]
    fn cached_table_matches_direct_exponentiation() {
        let o = ContinuumOracle::new(&presets::example1()).unwrap();
        let t = o.table(10.0, 1000.0, 1000.0, ExecPolicy::Parallel, DEFAULT_MEMORY_BUDGET).unwrap();
        for m in (0..t.m_count()).step_by(10) {
            for k in (0..t.k_count()).step_by(10) {
                let direct = o.greens(t.t_m(m), t.t_int(k)).unwrap();
                assert!((t.values[[m, k]] - direct).abs() < 1e-9);
            }
        }
        let seq = o.table(10.0, 1000.0, 1000.0, ExecPolicy::Sequential, DEFAULT_MEMORY_BUDGET).unwrap();
        assert_eq!(seq, t);
    }

    #[test]
    fn memory_budget_enforced() {
        let o = ContinuumOracle::new(&presets::example1()).unwrap();
        let err = o.table(1.0, 1000.0, 1000.0, ExecPolicy::Sequential, 1000).unwrap_err();
        assert!(matches!(err, Error::GridTooLarge { required, .. } if required > 1000));
    }

    #[test]
    fn example2_table_is_real_and_decays() {
        let o = ContinuumOracle::new(&presets::example2()).unwrap();
        assert_eq!(o.dim(), 20);
        let t = o.table(10.0, 300.0, 300.0, ExecPolicy::Parallel, DEFAULT_MEMORY_BUDGET).unwrap();
        assert_eq!(t.values[[0, 0]], 0.0);
        assert!(t.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gaussian_normalization_symmetry_and_moment() {
        let wp = gaussian_wavepacket(100.0, 0.0, -800.0, 1.0, 1601).unwrap();
        assert!((wp.norm() - 1.0).abs() < 1e-9);
        for i in 0..800 {
            assert!((wp.samples[i] - wp.samples[1600 - i]).abs() < 1e-15);
        }
        let var: f64 = (0..wp.samples.len())
            .map(|i| wp.time(i).powi(2) * wp.samples[i].powi(2) * wp.dt)
            .sum();
        assert!((var.sqrt() / 100.0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn convolve_zero_and_delta() {
        let table = greens_table_exact(&presets::example1(), 10.0, 500.0, 500.0).unwrap();
        let zero = Wavepacket { t_start: 0.0, dt: 10.0, samples: vec![0.0; 20] };
        assert_eq!(convolve(&table, &zero, 100.0, Quadrature::Riemann).unwrap(), 0.0);

        let mut samples = vec![0.0; 20];
        samples[3] = 1.0 / 10f64.sqrt();
        let delta = Wavepacket { t_start: 0.0, dt: 10.0, samples };
        let p = convolve(&table, &delta, 150.0, Quadrature::Riemann).unwrap();
        assert!((p - 10.0 * table.at(120.0, 0.0).unwrap()).abs() < 1e-15);
        let p = convolve(&table, &delta, 150.0, Quadrature::Pulsed).unwrap();
        assert!((p - 5.0 * table.at(120.0, 0.0).unwrap()).abs() < 1e-15);
        let p = convolve(&table, &delta, 30.0, Quadrature::Trapezoid).unwrap();
        assert!((p - 2.5 * table.at(0.0, 0.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn convolve_rejects_grid_mismatch() {
        let table = greens_table_exact(&presets::example1(), 10.0, 100.0, 100.0).unwrap();
        let wp = gaussian_wavepacket(20.0, 0.0, -60.0, 3.0, 41).unwrap();
        assert!(matches!(convolve(&table, &wp, 0.0, Quadrature::Riemann), Err(Error::GridMismatch(_))));
        let wp = gaussian_wavepacket(20.0, 0.0, -60.0, 5.0, 25).unwrap();
        assert!(matches!(convolve(&table, &wp, 2.0, Quadrature::Riemann), Err(Error::GridMismatch(_))));
        assert!(convolve(&table, &wp, 40.0, Quadrature::Riemann).is_ok());
    }

    #[test]
    fn convolve_is_quadratic_in_amplitude() {
        let table = greens_table_exact(&presets::example1(), 5.0, 600.0, 600.0).unwrap();
        let wp = gaussian_aligned(50.0, 0.0, 5.0, 100.0, 6.0).unwrap();
        let p = convolve(&table, &wp, 100.0, Quadrature::Riemann).unwrap();
        let p3 = convolve(&table, &wp.scaled(3.0), 100.0, Quadrature::Riemann).unwrap();
        assert!((p3 - 9.0 * p).abs() < 1e-15 * p3.abs().max(1.0) * 10.0);
    }

    #[test]
    fn fine_trapezoid_converges_to_amplitude_integral() {
        // |int a(t - s) eps(s) ds|^2 for a Gaussian, by direct quadrature.
        let sigma = 100.0;
        let wp = gaussian_aligned(sigma, 0.0, 0.5, 200.0, 7.0).unwrap();
        let mut c = C64::new(0.0, 0.0);
        for (i, &e) in wp.samples.iter().enumerate() {
            let s = wp.time(i);
            if s <= 200.0 {
                let w = if (s - 200.0).abs() < 1e-9 { 0.5 } else { 1.0 };
                c += amp(200.0 - s) * e * wp.dt * w;
            }
        }
        let reference = c.norm_sqr();
        let table = greens_table_exact(&presets::example1(), 0.5, 1000.0, 1000.0).unwrap();
        let p = convolve(&table, &wp, 200.0, Quadrature::Trapezoid).unwrap();
        assert!((p / reference - 1.0).abs() < 1e-5, "{p} vs {reference}");
    }
}
