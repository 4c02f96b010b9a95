//! Single-mode pulse-pair experiment: square coupling pulses, exact composite
//! evolution, and Green's-function reconstruction from the measured
//! populations.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::linalg::{expm, DensityMatrix, VectorizedState, C64};
use crate::model::{CompositeModel, SingleModeSystem};
use crate::oracle::{GreensTable, Provenance, TableMeta};

/// `G(t, 0) = CALIBRATION * P_1(t) / n_gamma^2` at leading order.
pub const CALIBRATION: f64 = 2.0;

/// Default coefficient of the single-pulse subtraction.
pub const DEFAULT_SUBTRACTION: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub center: f64,
    pub width: f64,
    pub area: f64,
}

impl Pulse {
    pub fn new(center: f64, width: f64, area: f64) -> Self {
        Self { center, width, area }
    }

    pub fn gamma(&self) -> f64 {
        self.area / self.width
    }

    pub fn start(&self) -> f64 {
        self.center - 0.5 * self.width
    }

    pub fn end(&self) -> f64 {
        self.center + 0.5 * self.width
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub pulses: Vec<Pulse>,
    pub measure_at: f64,
}

impl PulseSchedule {
    pub fn new(pulses: Vec<Pulse>, measure_at: f64) -> Self {
        Self { pulses, measure_at }
    }

    /// Piecewise-constant `(gamma, duration)` segments from the first pulse
    /// edge (or t = 0 without pulses) to the measurement. Overlapping pulses
    /// add their couplings when `allow_overlap` is set.
    pub fn segments(&self, allow_overlap: bool) -> Result<Vec<(f64, f64)>> {
        let mut pulses = self.pulses.clone();
        for p in &pulses {
            if !(p.width > 0.0) || !p.gamma().is_finite() || !p.center.is_finite() {
                return Err(Error::NonFinite("pulse coupling"));
            }
        }
        pulses.sort_by(|a, b| a.start().total_cmp(&b.start()));
        if !allow_overlap {
            for w in pulses.windows(2) {
                if w[1].start() < w[0].end() - 1e-12 {
                    return Err(Error::Overlap(format!(
                        "pulse at {} (width {}) overlaps pulse at {}",
                        w[0].center, w[0].width, w[1].center
                    )));
                }
            }
        }
        let start = pulses.first().map_or(0.0, |p| p.start()).min(self.measure_at);
        let mut edges: Vec<f64> = pulses
            .iter()
            .flat_map(|p| [p.start(), p.end()])
            .filter(|&t| t < self.measure_at)
            .chain([start, self.measure_at])
            .collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mut out = Vec::new();
        for w in edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            let gamma: f64 = pulses
                .iter()
                .filter(|p| p.start() <= mid && mid < p.end())
                .map(Pulse::gamma)
                .sum();
            out.push((gamma, b - a));
        }
        Ok(out)
    }
}

/// Exact single-mode simulator with a shared propagator cache.
#[derive(Debug)]
pub struct ProtocolEngine {
    system: SingleModeSystem,
    cache: RwLock<HashMap<(u64, u64), Arc<Array2<C64>>>>,
    validity_norm: f64,
    chi: Option<f64>,
    model_hash: String,
}

/// Exact protocol output on a `(t_m, t_int)` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolResult {
    /// `P_two[m, k]` at `t_m = m dt`, `t_int = k dt`.
    pub p_two: Array2<f64>,
    /// Single-pulse population at `t = j dt`, `j < M + K - 1`.
    pub p_one: Vec<f64>,
    pub reconstruction: GreensTable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dt: f64,
    pub m_count: usize,
    pub k_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    pub t_gamma: f64,
    pub n_gamma: f64,
    pub subtraction: f64,
}

impl PulseParams {
    pub fn new(t_gamma: f64, n_gamma: f64) -> Self {
        Self {
            t_gamma,
            n_gamma,
            subtraction: DEFAULT_SUBTRACTION,
        }
    }
}

impl ProtocolEngine {
    pub fn new(composite: &CompositeModel) -> Result<Self> {
        let system = composite.assemble()?;
        Ok(Self {
            system,
            cache: RwLock::new(HashMap::new()),
            validity_norm: composite.matter.coupling.spectral_norm().powi(2),
            chi: composite.aux.as_ref().map(|a| a.chi),
            model_hash: composite.matter.hash(),
        })
    }

    pub fn system(&self) -> &SingleModeSystem {
        &self.system
    }

    pub fn cached_propagators(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    /// `exp(G(gamma) tau)`, cached.
    pub fn propagator(&self, gamma: f64, tau: f64) -> Result<Arc<Array2<C64>>> {
        let key = (gamma.to_bits(), tau.to_bits());
        if let Some(p) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(p.clone());
        }
        let g = self.system.generator(gamma);
        let p = Arc::new(expm(&(g.matrix() * C64::new(tau, 0.0)))?);
        self.cache
            .write()
            .expect("cache lock")
            .entry(key)
            .or_insert_with(|| p.clone());
        Ok(p)
    }

    fn run_segments(&self, mut v: Array1<C64>, segments: &[(f64, f64)]) -> Result<Array1<C64>> {
        for &(gamma, tau) in segments {
            if tau > 0.0 {
                v = self.propagator(gamma, tau)?.dot(&v);
            }
        }
        Ok(v)
    }

    /// Final composite state of a non-overlapping schedule.
    pub fn evolve_schedule(&self, schedule: &PulseSchedule) -> Result<DensityMatrix> {
        let segs = schedule.segments(false)?;
        let v = self.run_segments(self.system.initial.entries().clone(), &segs)?;
        Ok(VectorizedState::from_vec(v)?.devectorize())
    }

    fn measure_schedule(&self, schedule: &PulseSchedule, allow_overlap: bool) -> Result<f64> {
        let segs = schedule.segments(allow_overlap)?;
        let v = self.run_segments(self.system.initial.entries().clone(), &segs)?;
        Ok(self.system.measure_vec(&v))
    }

    /// Two pulses centred at `-t_int` and 0, measured at `t_m`.
    pub fn run_two_pulse(&self, t_int: f64, t_m: f64, t_gamma: f64, n_gamma: f64) -> Result<f64> {
        if t_int < t_gamma {
            return Err(Error::Overlap(format!("t_int = {t_int} < t_gamma = {t_gamma}")));
        }
        self.measure_schedule(
            &PulseSchedule::new(
                vec![Pulse::new(-t_int, t_gamma, n_gamma), Pulse::new(0.0, t_gamma, n_gamma)],
                t_m,
            ),
            false,
        )
    }

    pub fn run_single_pulse(&self, t_m: f64, t_gamma: f64, n_gamma: f64) -> Result<f64> {
        self.measure_schedule(&PulseSchedule::new(vec![Pulse::new(0.0, t_gamma, n_gamma)], t_m), false)
    }

    /// Exact populations on the grid and their reconstruction. Pulse pairs
    /// closer than `t_gamma` are evolved with superposed couplings.
    pub fn run_grid(&self, grid: GridSpec, pulse: PulseParams, policy: ExecPolicy) -> Result<ProtocolResult> {
        let (p_two, p_one) = self.populations(grid, pulse, policy)?;
        let reconstruction = reconstruct_greens(&p_two, &p_one, grid.dt, pulse.n_gamma, pulse.subtraction)?;
        let mut reconstruction = reconstruction;
        reconstruction.meta = self.meta(pulse, Provenance::Reconstructed);
        Ok(ProtocolResult {
            p_two,
            p_one,
            reconstruction,
        })
    }

    pub fn meta(&self, pulse: PulseParams, provenance: Provenance) -> TableMeta {
        TableMeta {
            model_hash: self.model_hash.clone(),
            provenance,
            n_gamma: Some(pulse.n_gamma),
            t_gamma: Some(pulse.t_gamma),
            chi: self.chi,
            subtraction: Some(pulse.subtraction),
            validity: Some(self.validity(pulse.n_gamma)),
            config_hash: None,
        }
    }

    /// `||L||^2 n_gamma^2`; the expansion needs this small.
    pub fn validity(&self, n_gamma: f64) -> f64 {
        self.validity_norm * n_gamma * n_gamma
    }

    /// `(P_two[M x K], P_one[M + K - 1])` on the grid.
    pub fn populations(&self, grid: GridSpec, pulse: PulseParams, policy: ExecPolicy) -> Result<(Array2<f64>, Vec<f64>)> {
        let GridSpec { dt, m_count: mc, k_count: kc } = grid;
        let PulseParams { t_gamma: tg, n_gamma: n, .. } = pulse;
        if !(dt > 0.0) || mc == 0 || kc == 0 {
            return Err(Error::InvalidArgument("empty protocol grid".into()));
        }
        if !(tg > 0.0) || !n.is_finite() {
            return Err(Error::NonFinite("pulse parameters"));
        }
        let gamma = n / tg;
        let half = 0.5 * tg;
        let jc = mc + kc - 1;
        let rho0 = self.system.initial.entries().clone();
        let meas = &self.system.measurement;
        let off = self.propagator(0.0, dt)?;

        // Rows measuring at t = j dt after the end of the pulse centred at 0.
        let j0 = (0..jc).find(|&j| j as f64 * dt >= half - 1e-12).unwrap_or(jc);
        let mut rows = Array2::zeros((jc, meas.len()));
        if j0 < jc {
            let first = self.propagator(0.0, j0 as f64 * dt - half)?;
            let mut r = meas.dot(first.as_ref());
            for j in j0..jc {
                rows.row_mut(j).assign(&r);
                if j + 1 < jc {
                    r = r.dot(off.as_ref());
                }
            }
        }
        // Rows measuring inside the pulse, applied to the state at its start.
        for j in 0..j0 {
            let p = self.propagator(gamma, j as f64 * dt + half)?;
            rows.row_mut(j).assign(&meas.dot(p.as_ref()));
        }

        let on = self.propagator(gamma, tg)?;
        let after_one = on.dot(&rho0);
        let p_one: Vec<f64> = (0..jc)
            .map(|j| {
                let state = if j < j0 { &rho0 } else { &after_one };
                rows.row(j).dot(state).re
            })
            .collect();

        // State at the second pulse start (separated pulses) or after the
        // overlapping pair.
        let k0 = (0..kc).find(|&k| k as f64 * dt >= tg - 1e-12).unwrap_or(kc);
        let mut before_second = vec![None; kc];
        if k0 < kc {
            let first = self.propagator(0.0, k0 as f64 * dt - tg)?;
            let mut tau = first.dot(&after_one);
            for (k, slot) in before_second.iter_mut().enumerate().skip(k0) {
                *slot = Some(tau.clone());
                if k + 1 < kc {
                    tau = off.dot(&tau);
                }
            }
        }

        let columns: Vec<Column> = (0..kc)
            .map(|k| -> Result<Column> {
                Ok(match &before_second[k] {
                    Some(tau) => Column::Separated {
                        start: tau.clone(),
                        after: on.dot(tau),
                    },
                    None => {
                        let t_int = k as f64 * dt;
                        let segs = PulseSchedule::new(
                            vec![Pulse::new(-t_int, tg, n), Pulse::new(0.0, tg, n)],
                            half,
                        )
                        .segments(true)?;
                        Column::Overlapping {
                            after: self.run_segments(rho0.clone(), &segs)?,
                        }
                    }
                })
            })
            .collect::<Result<_>>()?;

        let row_vals = policy.map_range(mc, |m| -> Result<Vec<f64>> {
            (0..kc)
                .map(|k| match (&columns[k], m >= j0) {
                    (Column::Separated { after, .. }, true) | (Column::Overlapping { after }, true) => {
                        Ok(rows.row(m).dot(after).re)
                    }
                    (Column::Separated { start, .. }, false) => Ok(rows.row(m).dot(start).re),
                    (Column::Overlapping { .. }, false) => {
                        let t_int = k as f64 * dt;
                        self.measure_schedule(
                            &PulseSchedule::new(
                                vec![Pulse::new(-t_int, tg, n), Pulse::new(0.0, tg, n)],
                                m as f64 * dt,
                            ),
                            true,
                        )
                    }
                })
                .collect()
        });
        let mut p_two = Array2::zeros((mc, kc));
        for (m, row) in row_vals.into_iter().enumerate() {
            for (k, v) in row?.into_iter().enumerate() {
                p_two[[m, k]] = v;
            }
        }
        Ok((p_two, p_one))
    }
}

enum Column {
    Separated { start: Array1<C64>, after: Array1<C64> },
    Overlapping { after: Array1<C64> },
}

/// `G(t_m, t_int) = P_two / n^2 - c [G(t_m, 0) + G(t_m + t_int, 0)]` with
/// `G(t, 0) = CALIBRATION * P_one(t) / n^2`.
pub fn reconstruct_greens(p_two: &Array2<f64>, p_one: &[f64], dt: f64, n_gamma: f64, subtraction: f64) -> Result<GreensTable> {
    if n_gamma == 0.0 {
        return Err(Error::ZeroArea);
    }
    let (mc, kc) = p_two.dim();
    if p_one.len() < mc + kc - 1 {
        return Err(Error::MissingSinglePulse((mc + kc - 2) as f64 * dt));
    }
    let n2 = n_gamma * n_gamma;
    let g0 = |j: usize| CALIBRATION * p_one[j] / n2;
    let values = Array2::from_shape_fn((mc, kc), |(m, k)| p_two[[m, k]] / n2 - subtraction * (g0(m) + g0(m + k)));
    Ok(GreensTable {
        dt,
        values,
        sigma: Array2::zeros((mc, kc)),
        meta: TableMeta {
            model_hash: String::new(),
            provenance: Provenance::Reconstructed,
            n_gamma: Some(n_gamma),
            t_gamma: None,
            chi: None,
            subtraction: Some(subtraction),
            validity: None,
            config_hash: None,
        },
    })
}

/// Inverse of [`reconstruct_greens`]: two-pulse populations implied by a table
/// and a single-pulse channel.
pub fn synthesize_two_pulse(table: &Array2<f64>, p_one: &[f64], n_gamma: f64, subtraction: f64) -> Array2<f64> {
    let n2 = n_gamma * n_gamma;
    let g0 = |j: usize| CALIBRATION * p_one[j] / n2;
    Array2::from_shape_fn(table.dim(), |(m, k)| n2 * (table[[m, k]] + subtraction * (g0(m) + g0(m + k))))
}

/// Empirical calibration constant `n^2 G(t, 0) / P_1(t)` in the weak-pulse
/// limit, measured right after a short pulse.
pub fn calibrate(composite: &CompositeModel) -> Result<f64> {
    let engine = ProtocolEngine::new(composite)?;
    let (tg, n) = (1e-3, 1e-3);
    let p1 = engine.run_single_pulse(0.5 * tg, tg, n)?;
    let g0 = crate::oracle::greens_exact(&composite.matter, 0.0, 0.0)?;
    Ok(n * n * g0 / p1)
}
