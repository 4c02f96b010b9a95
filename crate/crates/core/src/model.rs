//! Matter models, composite matter (x) mode (x) ancilla assembly and
//! excitation-manifold restriction.
//!
//! A matter space is `system (x) spectator`. The system factor carries an
//! excitation grading; the spectator factor (e.g. two-level fluctuators driven
//! by sigma-x noise) is ungraded and always kept whole. Composite bases are
//! ordered `(system, spectator, mode, aux)` with the aux index fastest.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{
    hamiltonian_super, kron, lindblad_generator, vectorize, anticommutator_super,
    DensityMatrix, Operator, SuperOperator, VectorizedState, C64, I, ONE,
};

/// Initial state of the spectator factor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectatorInit {
    #[default]
    Ground,
    Mixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatterModel {
    pub hamiltonian: Operator,
    /// Field coupling `L`, lowering the grading by one.
    pub coupling: Operator,
    pub dissipators: Vec<Operator>,
    pub omega0: f64,
    /// System-factor index of the measured state.
    pub measured_state: usize,
    pub ground_state: usize,
    /// Excitation count of every system-factor basis state.
    pub grading: Vec<usize>,
    pub spectator_dim: usize,
    pub spectator_init: SpectatorInit,
    /// Frequency of the frame the Hamiltonian is currently expressed in.
    pub frame: f64,
}

impl MatterModel {
    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn system_dim(&self) -> usize {
        self.grading.len()
    }

    /// Grading of a full matter-space index.
    pub fn excitation(&self, index: usize) -> usize {
        self.grading[index / self.spectator_dim]
    }

    pub fn max_excitation(&self) -> usize {
        self.grading.iter().copied().max().unwrap_or(0)
    }

    /// Excitation-number operator `N_exc` on the full matter space.
    pub fn excitation_operator(&self) -> Operator {
        let n: Vec<f64> = (0..self.dim()).map(|a| self.excitation(a) as f64).collect();
        Operator::diagonal(&n)
    }

    /// Report every structural problem; an empty list means well-formed.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let d = self.dim();
        if self.spectator_dim == 0 || self.grading.is_empty() {
            out.push("grading: missing excitation grading".to_string());
            return out;
        }
        if self.grading.len() * self.spectator_dim != d {
            out.push(format!(
                "grading: {} system states x {} spectator states != dimension {d}",
                self.grading.len(),
                self.spectator_dim
            ));
            return out;
        }
        let defect = self.hamiltonian.hermiticity_defect();
        if defect > 1e-12 {
            out.push(format!("H_M: not Hermitian (defect {defect:.3e})"));
        }
        if self.coupling.dim() != d {
            out.push(format!("L: dimension {} != {d}", self.coupling.dim()));
        }
        for (k, y) in self.dissipators.iter().enumerate() {
            if y.dim() != d {
                out.push(format!("Y[{k}]: dimension {} != {d}", y.dim()));
            }
        }
        if !out.is_empty() {
            return out;
        }
        if let Some((a, b)) = self.find_entry(&self.hamiltonian, |ga, gb| ga != gb) {
            out.push(format!(
                "H_M: couples states {a} and {b} of different excitation number (grading)"
            ));
        }
        if let Some((a, b)) = self.find_entry(&self.coupling, |ga, gb| ga + 1 != gb) {
            out.push(format!(
                "L: entry ({a},{b}) does not lower the excitation grading by one"
            ));
        }
        for (k, y) in self.dissipators.iter().enumerate() {
            if let Some((a, b)) = self.find_entry(y, |ga, gb| ga > gb) {
                out.push(format!("Y[{k}]: entry ({a},{b}) raises the excitation grading"));
            }
        }
        let ns = self.system_dim();
        if self.measured_state >= ns {
            out.push(format!("measured_state {} out of range", self.measured_state));
        }
        if self.ground_state >= ns {
            out.push(format!("ground_state {} out of range", self.ground_state));
        }
        if self.measured_state == self.ground_state {
            out.push("measured_state equals ground_state".to_string());
        }
        if self.ground_state < ns && self.grading[self.ground_state] != 0 {
            out.push("ground_state has nonzero grading".to_string());
        }
        out
    }

    fn find_entry(&self, op: &Operator, bad: impl Fn(usize, usize) -> bool) -> Option<(usize, usize)> {
        op.entries()
            .indexed_iter()
            .find(|((a, b), z)| z.norm() > 1e-14 && bad(self.excitation(*a), self.excitation(*b)))
            .map(|((a, b), _)| (a, b))
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(v))
        }
    }

    /// `H -> H - omega N_exc`.
    pub fn shift_frame(&self, omega: f64) -> MatterModel {
        let mut out = self.clone();
        if omega != 0.0 {
            out.hamiltonian = &self.hamiltonian - &(self.excitation_operator() * omega);
        }
        out.frame += omega;
        out
    }

    /// Express the model in the frame rotating at `omega0`. Idempotent.
    pub fn rotating_frame(&self) -> MatterModel {
        self.shift_frame(self.omega0 - self.frame)
    }

    /// Keep system states with grading `<= cap` (spectator untouched).
    pub fn restrict(&self, cap: usize) -> Result<MatterModel> {
        let kept_sys: Vec<usize> = (0..self.system_dim())
            .filter(|&s| self.grading[s] <= cap)
            .collect();
        if kept_sys.is_empty() {
            return Err(Error::EmptyBasis);
        }
        let pos = |s: usize| kept_sys.iter().position(|&k| k == s);
        let measured = pos(self.measured_state).ok_or(Error::IndexOutOfBasis {
            index: self.measured_state,
            size: kept_sys.len(),
        })?;
        let ground = pos(self.ground_state).ok_or(Error::IndexOutOfBasis {
            index: self.ground_state,
            size: kept_sys.len(),
        })?;
        let sd = self.spectator_dim;
        let kept: Vec<usize> = kept_sys
            .iter()
            .flat_map(|&s| (0..sd).map(move |f| s * sd + f))
            .collect();
        let cut = |op: &Operator| take(op, &kept);
        Ok(MatterModel {
            hamiltonian: cut(&self.hamiltonian),
            coupling: cut(&self.coupling),
            dissipators: self.dissipators.iter().map(cut).collect(),
            omega0: self.omega0,
            measured_state: measured,
            ground_state: ground,
            grading: kept_sys.iter().map(|&s| self.grading[s]).collect(),
            spectator_dim: sd,
            spectator_init: self.spectator_init,
            frame: self.frame,
        })
    }

    pub fn spectator_state(&self) -> DensityMatrix {
        match self.spectator_init {
            SpectatorInit::Ground => DensityMatrix::basis_state(self.spectator_dim, 0),
            SpectatorInit::Mixed => DensityMatrix::maximally_mixed(self.spectator_dim),
        }
    }

    /// `|ground><ground| (x) rho_spectator`.
    pub fn initial_state(&self) -> DensityMatrix {
        let g = Operator::basis(self.system_dim(), self.ground_state, self.ground_state);
        let spec = Operator::new(self.spectator_state().into_inner()).expect("square");
        DensityMatrix::from_matrix(kron(&g, &spec).into_inner()).expect("square")
    }

    /// Row vector extracting the measured population (spectator traced out)
    /// from a vectorized matter state.
    pub fn measurement_vector(&self) -> Array1<C64> {
        let d = self.dim();
        let sd = self.spectator_dim;
        let mut v = Array1::zeros(d * d);
        for f in 0..sd {
            let a = self.measured_state * sd + f;
            v[a * d + a] = ONE;
        }
        v
    }

    /// Stable content hash of the physical parameters.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |op: &Operator| {
            h.update((op.dim() as u64).to_le_bytes());
            for z in op.entries().iter() {
                h.update(z.re.to_bits().to_le_bytes());
                h.update(z.im.to_bits().to_le_bytes());
            }
        };
        feed(&self.hamiltonian);
        feed(&self.coupling);
        for y in &self.dissipators {
            feed(y);
        }
        for x in [self.omega0, self.frame] {
            h.update(x.to_bits().to_le_bytes());
        }
        for n in [self.measured_state, self.ground_state, self.spectator_dim]
            .into_iter()
            .chain(self.grading.iter().copied())
        {
            h.update((n as u64).to_le_bytes());
        }
        h.update([self.spectator_init as u8]);
        hex::encode(h.finalize())
    }
}

fn take(op: &Operator, kept: &[usize]) -> Operator {
    let n = kept.len();
    let m = op.entries();
    Operator::new(Array2::from_shape_fn((n, n), |(i, j)| m[[kept[i], kept[j]]])).expect("square")
}

/// Project `op` onto basis states whose grading is `<= cap`. Returns the
/// reduced operator and the retained original indices.
pub fn restrict_manifold(op: &Operator, grading: &[usize], cap: usize) -> Result<(Operator, Vec<usize>)> {
    if grading.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            found: grading.len(),
        });
    }
    let kept: Vec<usize> = (0..grading.len()).filter(|&a| grading[a] <= cap).collect();
    if kept.is_empty() {
        return Err(Error::EmptyBasis);
    }
    Ok((take(op, &kept), kept))
}

/// `-i[H, .] - 1/2 {L^dagger L, .} + sum_k D[Y_k]` in the rotating frame. The
/// jump part of `D[L]` is left out on purpose: it only refills the ground
/// state.
pub fn build_continuum_generator(model: &MatterModel) -> Result<SuperOperator> {
    model.ensure_valid()?;
    let m = model.rotating_frame();
    let mut g = lindblad_generator(&m.hamiltonian, &m.dissipators)?;
    let ll = m.coupling.dagger().matmul(&m.coupling);
    g += &anticommutator_super(&ll).scale(C64::new(-0.5, 0.0));
    Ok(g)
}

/// Bosonic mode truncation and initial Fock state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub n_max: usize,
    pub initial_fock: usize,
}

impl Default for ModeSpec {
    fn default() -> Self {
        Self {
            n_max: 1,
            initial_fock: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AuxCoupling {
    /// `J = (chi / 2) L`, so that the eliminated dissipator is `D[L]`.
    Matched,
    Fixed(Operator),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuxSpec {
    pub chi: f64,
    pub coupling: AuxCoupling,
}

impl AuxSpec {
    pub fn matched(chi: f64) -> Self {
        Self {
            chi,
            coupling: AuxCoupling::Matched,
        }
    }

    pub fn from_chi_squared(chi2: f64) -> Self {
        Self::matched(chi2.sqrt())
    }

    /// Matter-side coupling operator `J`.
    pub fn j_operator(&self, model: &MatterModel) -> Operator {
        match &self.coupling {
            AuxCoupling::Matched => model.coupling.clone() * (0.5 * self.chi),
            AuxCoupling::Fixed(j) => j.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeModel {
    pub matter: MatterModel,
    pub mode: ModeSpec,
    pub aux: Option<AuxSpec>,
    pub manifold_cap: usize,
}

impl CompositeModel {
    pub fn new(matter: MatterModel, aux: Option<AuxSpec>) -> Self {
        Self {
            matter,
            mode: ModeSpec::default(),
            aux,
            manifold_cap: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.matter.ensure_valid()?;
        if self.mode.initial_fock > self.mode.n_max || self.mode.n_max == 0 {
            return Err(Error::InvalidArgument(format!(
                "initial_fock {} must be in 1..=n_max ({})",
                self.mode.initial_fock, self.mode.n_max
            )));
        }
        if self.manifold_cap < self.mode.initial_fock {
            return Err(Error::CapTooSmall {
                cap: self.manifold_cap,
                initial: self.mode.initial_fock,
            });
        }
        if let Some(aux) = &self.aux {
            if !(aux.chi > 0.0 && aux.chi.is_finite()) {
                return Err(Error::InvalidArgument(format!("chi must be positive, got {}", aux.chi)));
            }
            let j = aux.j_operator(&self.matter);
            if j.dim() != self.matter.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.matter.dim(),
                    found: j.dim(),
                });
            }
            if let Some((a, b)) = self.matter.find_entry(&j, |ga, gb| ga + 1 != gb) {
                return Err(Error::InvalidModel(vec![format!(
                    "J: entry ({a},{b}) does not lower the excitation grading by one"
                )]));
            }
        }
        Ok(())
    }

    /// Assemble the restricted generator pieces.
    pub fn assemble(&self) -> Result<SingleModeSystem> {
        self.validate()?;
        let matter = self.matter.rotating_frame();
        let md = matter.dim();
        let sd = matter.spectator_dim;
        let nm = self.mode.n_max + 1;
        let na = if self.aux.is_some() { 2 } else { 1 };

        let mut basis = Vec::new();
        for m in 0..md {
            for n in 0..nm {
                for x in 0..na {
                    if matter.excitation(m) + n + x <= self.manifold_cap {
                        basis.push(CompositeLabel {
                            system: m / sd,
                            spectator: m % sd,
                            matter: m,
                            fock: n,
                            aux: x,
                        });
                    }
                }
            }
        }
        if basis.is_empty() {
            return Err(Error::EmptyBasis);
        }
        let dim = basis.len();

        let id_m = Operator::identity(md);
        let id_n = Operator::identity(nm);
        let id_x = Operator::identity(na);
        let embed = |a: &Operator, b: &Operator, c: &Operator| -> Operator {
            let (a, b, c) = (a.entries(), b.entries(), c.entries());
            Operator::new(Array2::from_shape_fn((dim, dim), |(i, j)| {
                let (p, q) = (&basis[i], &basis[j]);
                a[[p.matter, q.matter]] * b[[p.fock, q.fock]] * c[[p.aux, q.aux]]
            }))
            .expect("square")
        };

        let adag = Operator::annihilation(self.mode.n_max).dagger();
        let a = Operator::annihilation(self.mode.n_max);
        let l = &matter.coupling;
        let mut h = embed(&matter.hamiltonian, &id_n, &id_x);
        let mut collapse: Vec<Operator> = matter
            .dissipators
            .iter()
            .map(|y| embed(y, &id_n, &id_x))
            .collect();
        if let Some(aux) = &self.aux {
            let j = aux.j_operator(&matter);
            let sp = Operator::sigma_plus();
            let sm = Operator::sigma_minus();
            h = h + embed(&j, &id_n, &sp) + embed(&j.dagger(), &id_n, &sm);
            collapse.push(embed(&id_m, &id_n, &(sm * aux.chi)));
        }
        // Mode coupling i(L a^dagger - L^dagger a); its Liouvillian is linear in gamma.
        let k = (embed(l, &adag, &id_x) - embed(&l.dagger(), &a, &id_x)).scale(I);
        let free = lindblad_generator(&h, &collapse)?;
        let drive = hamiltonian_super(&k);

        let mut rho0 = Array2::zeros((dim, dim));
        let spec = matter.spectator_state();
        for (i, p) in basis.iter().enumerate() {
            for (j, q) in basis.iter().enumerate() {
                if p.system == matter.ground_state
                    && q.system == matter.ground_state
                    && p.fock == self.mode.initial_fock
                    && q.fock == self.mode.initial_fock
                    && p.aux == 0
                    && q.aux == 0
                {
                    rho0[[i, j]] = spec.entries()[[p.spectator, q.spectator]];
                }
            }
        }
        let initial = vectorize(&DensityMatrix::from_matrix(rho0)?);

        let mut meas = Array1::zeros(dim * dim);
        let mut found = false;
        for (i, p) in basis.iter().enumerate() {
            if p.system == matter.measured_state {
                meas[i * dim + i] = ONE;
                found = true;
            }
        }
        if !found {
            return Err(Error::IndexOutOfBasis {
                index: matter.measured_state,
                size: dim,
            });
        }

        Ok(SingleModeSystem {
            dim,
            basis,
            free,
            drive,
            initial,
            measurement: meas,
            measured_state: matter.measured_state,
        })
    }
}

/// Quantum numbers of a retained composite basis state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompositeLabel {
    pub system: usize,
    pub spectator: usize,
    /// Full matter index `system * spectator_dim + spectator`.
    pub matter: usize,
    pub fock: usize,
    pub aux: usize,
}

/// Restricted single-mode Liouvillian `G(gamma) = free + gamma * drive`.
#[derive(Clone, Debug)]
pub struct SingleModeSystem {
    pub dim: usize,
    pub basis: Vec<CompositeLabel>,
    pub free: SuperOperator,
    pub drive: SuperOperator,
    pub initial: VectorizedState,
    pub measurement: Array1<C64>,
    pub measured_state: usize,
}

impl SingleModeSystem {
    pub fn generator(&self, gamma: f64) -> SuperOperator {
        if gamma == 0.0 {
            return self.free.clone();
        }
        &self.free + &self.drive.scale(C64::new(gamma, 0.0))
    }

    /// Measured population of a vectorized composite state.
    pub fn measure_vec(&self, v: &Array1<C64>) -> f64 {
        self.measurement.dot(v).re
    }

    /// Partial trace over mode, aux and spectator, then the measured diagonal.
    pub fn measure_population(&self, rho: &DensityMatrix) -> Result<f64> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: rho.dim(),
            });
        }
        Ok(self
            .basis
            .iter()
            .enumerate()
            .filter(|(_, p)| p.system == self.measured_state)
            .map(|(i, _)| rho.population(i))
            .sum())
    }
}

fn site_op(n_sites: usize, site: usize, op: &Operator) -> Operator {
    let mut out = Operator::identity(1);
    for s in 0..n_sites {
        out = if s == site {
            kron(&out, op)
        } else {
            kron(&out, &Operator::identity(2))
        };
    }
    out
}

fn number(n_sites: usize, site: usize) -> Operator {
    site_op(n_sites, site, &Operator::basis(2, 1, 1))
}

/// Grading of `n_sites` two-level sites: number of excited sites.
fn site_grading(n_sites: usize) -> Vec<usize> {
    (0..1usize << n_sites).map(|i| i.count_ones() as usize).collect()
}

pub mod presets {
    use super::*;

    /// Two chromophores sharing a ground state: omega = (1.0, 0.8),
    /// l^2 = (0.0036, 0.0064), measuring chromophore 1.
    pub fn example1() -> MatterModel {
        MatterModel {
            hamiltonian: Operator::diagonal(&[0.0, 1.0, 0.8]),
            coupling: Operator::from_real_rows(&[
                &[0.0, 0.06, 0.08],
                &[0.0, 0.0, 0.0],
                &[0.0, 0.0, 0.0],
            ])
            .expect("square"),
            dissipators: Vec::new(),
            omega0: 1.0,
            measured_state: 1,
            ground_state: 0,
            grading: vec![0, 1, 1],
            spectator_dim: 1,
            spectator_init: SpectatorInit::Ground,
            frame: 0.0,
        }
    }

    /// A resonant two-level emitter with decay rate `l2`.
    pub fn single_emitter(omega: f64, l2: f64) -> MatterModel {
        MatterModel {
            hamiltonian: Operator::diagonal(&[0.0, omega]),
            coupling: Operator::sigma_minus() * l2.sqrt(),
            dissipators: Vec::new(),
            omega0: omega,
            measured_state: 1,
            ground_state: 0,
            grading: vec![0, 1],
            spectator_dim: 1,
            spectator_init: SpectatorInit::Ground,
            frame: 0.0,
        }
    }

    /// Parameters of the transport chain with two fluctuators.
    #[derive(Clone, Debug, PartialEq)]
    pub struct ChainParams {
        pub omega: [f64; 4],
        pub omega_fluct: [f64; 2],
        pub j12: f64,
        pub j23: f64,
        pub j2_fluct: [f64; 2],
        pub l: f64,
        pub gamma_f2: f64,
        pub gamma_fluct2: [f64; 2],
    }

    impl Default for ChainParams {
        fn default() -> Self {
            Self {
                omega: [1.0, 0.8, 0.9, 0.5],
                omega_fluct: [0.1, 0.1],
                j12: 0.096,
                j23: 0.1,
                j2_fluct: [0.02, 0.02],
                l: 0.01,
                gamma_f2: 0.4,
                gamma_fluct2: [0.25, 0.5],
            }
        }
    }

    /// Chain sites (1, 2, 3, f) form the graded system; fluctuators
    /// (alpha, beta) form the spectator factor. The measured state is the
    /// f site excited.
    pub fn example2() -> MatterModel {
        chain(&ChainParams::default())
    }

    pub fn chain(p: &ChainParams) -> MatterModel {
        let sys = 4;
        let id_sys = Operator::identity(16);
        let id_spec = Operator::identity(4);
        let sm = Operator::sigma_minus();
        let sp = Operator::sigma_plus();

        let mut h_sys = Operator::zeros(16);
        for (s, &w) in p.omega.iter().enumerate() {
            h_sys = h_sys + number(sys, s) * w;
        }
        for (a, b, j) in [(0, 1, p.j12), (1, 2, p.j23)] {
            let hop = site_op(sys, a, &sp).matmul(&site_op(sys, b, &sm));
            h_sys = h_sys + (&hop + &hop.dagger()) * j;
        }
        let mut h_spec = Operator::zeros(4);
        for (s, &w) in p.omega_fluct.iter().enumerate() {
            h_spec = h_spec + number(2, s) * w;
        }
        let mut h = kron(&h_sys, &id_spec) + kron(&id_sys, &h_spec);
        for (s, &j) in p.j2_fluct.iter().enumerate() {
            h = h + kron(&number(sys, 1), &number(2, s)) * j;
        }

        let coupling = kron(&site_op(sys, 0, &sm), &id_spec) * p.l;
        let y_f = kron(&site_op(sys, 2, &sm).matmul(&site_op(sys, 3, &sp)), &id_spec) * p.gamma_f2.sqrt();
        let mut dissipators = vec![y_f];
        for (s, &g2) in p.gamma_fluct2.iter().enumerate() {
            dissipators.push(kron(&id_sys, &site_op(2, s, &Operator::sigma_x())) * g2.sqrt());
        }

        MatterModel {
            hamiltonian: h,
            coupling,
            dissipators,
            omega0: p.omega[0],
            // |0001>: only f excited
            measured_state: 1,
            ground_state: 0,
            grading: site_grading(sys),
            spectator_dim: 4,
            spectator_init: SpectatorInit::Ground,
            frame: 0.0,
        }
    }

    pub fn by_name(name: &str) -> Option<MatterModel> {
        match name {
            "example1" => Some(example1()),
            "example2" => Some(example2()),
            "single_emitter" => Some(single_emitter(1.0, 0.0036)),
            _ => None,
        }
    }

    pub const NAMES: [&str; 3] = ["example1", "example2", "single_emitter"];
}
