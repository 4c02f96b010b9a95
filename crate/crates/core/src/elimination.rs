//! Fast-decaying auxiliary two-level system versus the effective dissipator
//! it produces after adiabatic elimination.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::linalg::{dissipator_super, hamiltonian_super, vectorize, DensityMatrix, Operator, SuperOperator, VectorizedState, C64};
use crate::model::{AuxCoupling, MatterModel};

/// Matter (x) aux generator restricted to states with
/// `grading + aux <= max grading`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledSystem {
    pub generator: SuperOperator,
    /// `(matter index, aux level)` of each retained basis state.
    pub basis: Vec<(usize, usize)>,
    pub matter_dim: usize,
}

impl CoupledSystem {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Embed a matter state with the aux in its ground state.
    pub fn lift(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.matter_dim {
            return Err(Error::DimensionMismatch {
                expected: self.matter_dim,
                found: rho.dim(),
            });
        }
        let d = self.dim();
        let r = rho.entries();
        let out = Array2::from_shape_fn((d, d), |(i, j)| {
            let ((a, x), (b, y)) = (self.basis[i], self.basis[j]);
            if x == 0 && y == 0 {
                r[[a, b]]
            } else {
                C64::new(0.0, 0.0)
            }
        });
        DensityMatrix::from_matrix(out)
    }

    /// Partial trace over the aux.
    pub fn reduce(&self, rho: &DensityMatrix) -> DensityMatrix {
        rho.reduce(&self.basis, self.matter_dim)
    }
}

fn to_rho(v: &ndarray::Array1<C64>) -> Result<DensityMatrix> {
    Ok(VectorizedState::from_vec(v.clone())?.devectorize())
}

fn check_chi(chi: f64) -> Result<()> {
    if !(chi > 0.0) || !chi.is_finite() {
        return Err(Error::InvalidArgument(format!("chi must be positive, got {chi}")));
    }
    Ok(())
}

/// `J` must lower the matter grading by exactly one.
fn check_lowering(model: &MatterModel, j: &Operator) -> Result<()> {
    if j.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: j.dim(),
        });
    }
    for ((a, b), z) in j.entries().indexed_iter() {
        if z.norm() > 1e-14 && model.excitation(a) + 1 != model.excitation(b) {
            return Err(Error::InvalidModel(vec![format!(
                "J[{a},{b}] connects gradings {} and {}; J must lower the grading by one",
                model.excitation(b),
                model.excitation(a)
            )]));
        }
    }
    Ok(())
}

/// `J` for a coupling rule at a given `chi`.
pub fn coupling_operator(model: &MatterModel, coupling: &AuxCoupling, chi: f64) -> Operator {
    match coupling {
        AuxCoupling::Matched => model.coupling.clone() * (0.5 * chi),
        AuxCoupling::Fixed(j) => j.clone(),
    }
}

/// `-i[H_M + J s+ + J^dagger s-, .] + sum D[Y_k] + D[chi s-]` in the frame
/// where the aux transition is resonant.
pub fn build_coupled(model: &MatterModel, j: &Operator, chi: f64) -> Result<CoupledSystem> {
    check_chi(chi)?;
    model.ensure_valid()?;
    check_lowering(model, j)?;
    let m = model.rotating_frame();
    let cap = m.max_excitation();
    let md = m.dim();
    let basis: Vec<(usize, usize)> = (0..md)
        .flat_map(|a| (0..2).map(move |x| (a, x)))
        .filter(|&(a, x)| m.excitation(a) + x <= cap)
        .collect();
    let dim = basis.len();
    let embed = |a: &Operator, x: &Operator| -> Operator {
        let (a, x) = (a.entries(), x.entries());
        Operator::new(Array2::from_shape_fn((dim, dim), |(i, k)| {
            let ((p, u), (q, v)) = (basis[i], basis[k]);
            a[[p, q]] * x[[u, v]]
        }))
        .expect("square")
    };
    let id_m = Operator::identity(md);
    let id_x = Operator::identity(2);
    let h = embed(&m.hamiltonian, &id_x)
        + embed(j, &Operator::sigma_plus())
        + embed(&j.dagger(), &Operator::sigma_minus());
    let mut g = hamiltonian_super(&h);
    for y in &m.dissipators {
        g += &dissipator_super(&embed(y, &id_x));
    }
    g += &dissipator_super(&embed(&id_m, &(Operator::sigma_minus() * chi)));
    Ok(CoupledSystem {
        generator: g,
        basis,
        matter_dim: md,
    })
}

/// `-i[H_M, .] + sum D[Y_k] + D[2 J / chi]` on the matter space.
pub fn effective_generator(model: &MatterModel, j: &Operator, chi: f64) -> Result<SuperOperator> {
    check_chi(chi)?;
    model.ensure_valid()?;
    check_lowering(model, j)?;
    let m = model.rotating_frame();
    let mut g = hamiltonian_super(&m.hamiltonian);
    for y in &m.dissipators {
        g += &dissipator_super(y);
    }
    g += &dissipator_super(&(j.clone() * (2.0 / chi)));
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EliminationReport {
    pub chi: Vec<f64>,
    pub times: Vec<f64>,
    /// Trace distance `errors[c][t]` between the reduced coupled state and the
    /// effective state.
    pub errors: Vec<Vec<f64>>,
    pub max_error: Vec<f64>,
    /// Error at the last time of the grid.
    pub probe_error: Vec<f64>,
    /// Least-squares slope of `ln(probe error)` against `ln(chi)`.
    pub exponent: Option<f64>,
}

/// Trace distance at every time in `times` (ascending, non-negative).
fn error_curve(model: &MatterModel, coupling: &AuxCoupling, chi: f64, times: &[f64], initial: &DensityMatrix) -> Result<Vec<f64>> {
    let j = coupling_operator(model, coupling, chi);
    let coupled = build_coupled(model, &j, chi)?;
    let eff = effective_generator(model, &j, chi)?;
    let mut vc = vectorize(&coupled.lift(initial)?).into_inner();
    let mut ve = vectorize(initial).into_inner();
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t < now {
            return Err(Error::InvalidArgument("time grid must be ascending and non-negative".into()));
        }
        let step = t - now;
        if step > 0.0 {
            vc = coupled.generator.exp(step)?.apply_raw(&vc);
            ve = eff.exp(step)?.apply_raw(&ve);
        }
        now = t;
        let rc = coupled.reduce(&to_rho(&vc)?);
        let re = to_rho(&ve)?;
        out.push(rc.trace_distance(&re));
    }
    Ok(out)
}

/// Least-squares slope of `ln y` against `ln x` over positive entries.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn compare_elimination(
    model: &MatterModel,
    coupling: &AuxCoupling,
    chis: &[f64],
    times: &[f64],
    initial: &DensityMatrix,
    policy: ExecPolicy,
) -> Result<EliminationReport> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("empty time grid".into()));
    }
    let errors = policy
        .map(chis.to_vec(), |chi| error_curve(model, coupling, chi, times, initial))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let max_error: Vec<f64> = errors.iter().map(|e| e.iter().cloned().fold(0.0, f64::max)).collect();
    let probe_error: Vec<f64> = errors.iter().map(|e| *e.last().expect("non-empty")).collect();
    let exponent = loglog_slope(chis, &probe_error);
    Ok(EliminationReport {
        chi: chis.to_vec(),
        times: times.to_vec(),
        errors,
        max_error,
        probe_error,
        exponent,
    })
}
