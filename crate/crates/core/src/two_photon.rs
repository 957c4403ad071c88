//! Two-photon scattering with bosonized emitters and hardcore on-site
//! repulsion (U -> infinity).
//!
//! The interaction acts only on the 3N-dimensional doubly-excited subspace
//! {ee_i, ss_i, es_i}. The free two-excitation resolvent projected on that
//! subspace follows from the convolution of single-excitation resolvents; in
//! the frozen-phase model those are rational, so the frequency integral
//! collapses to a double sum over scattering-pole pairs,
//!   G0(E) = sum_{mu,nu} C(P_mu, P_nu) / (E - lambda_mu - lambda_nu).
//! The hardcore limit gives T(E) = -G0(E)^{-1} on the subspace, and the full
//! state |psi2> = |phi2> + G0 T |phi2> then has exactly zero doubly-excited
//! amplitude. A direct i*eps quadrature of the same convolution with
//! Richardson extrapolation provides an independent evaluation path.

use crate::effective::{Channel, EffectiveModel};
use crate::model::ValidatedConfig;
use crate::numerics::{integrate_mat_real_line, neville_to_zero, C64, NumericsError, QuadTol};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const SQRT2: f64 = std::f64::consts::SQRT_2;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairChannel {
    RR,
    LL,
    RL,
}

impl std::fmt::Display for PairChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PairChannel::RR => write!(f, "RR"),
            PairChannel::LL => write!(f, "LL"),
            PairChannel::RL => write!(f, "RL"),
        }
    }
}

#[derive(Debug, Error)]
pub enum TwoPhotonError {
    #[error("incident momentum must be positive, got {0}")]
    NonPositiveMomentum(f64),
    #[error("G0(E) numerically singular at E = {e} (condition number {cond:.3e})")]
    G0Singular { e: f64, cond: f64 },
    #[error("residue and quadrature paths disagree: relative deviation {0:.3e} > 1e-6")]
    DualPathMismatch(f64),
    #[error("quadrature path failed: {0}")]
    Quadrature(#[from] NumericsError),
    #[error("no usable G0 evaluation path: {0}")]
    NoPath(String),
    #[error("channel {0} does not exist for this topology")]
    NoSuchChannel(PairChannel),
    #[error("point ({x1}, {x2}) is not in the asymptotic outgoing region of channel {ch}")]
    NotAsymptotic { ch: PairChannel, x1: f64, x2: f64 },
    #[error("adaptive channel grid did not meet tolerance {0:.1e}")]
    GridRefinement(f64),
}

fn eslot(i: usize) -> usize {
    i
}
fn sslot(n: usize, i: usize) -> usize {
    n + i
}
pub fn ee_index(i: usize) -> usize {
    3 * i
}
pub fn ss_index(i: usize) -> usize {
    3 * i + 1
}
pub fn es_index(i: usize) -> usize {
    3 * i + 2
}

/// Contraction of two single-excitation propagator-like matrices onto the
/// doubly-excited pair basis.
fn pair_contract(g1: &DMatrix<C64>, g2: &DMatrix<C64>, n: usize) -> DMatrix<C64> {
    let mut c = DMatrix::<C64>::zeros(3 * n, 3 * n);
    let inv_sqrt2 = C64::new(1.0 / SQRT2, 0.0);
    for i in 0..n {
        let (ei, si) = (eslot(i), sslot(n, i));
        for j in 0..n {
            let (ej, sj) = (eslot(j), sslot(n, j));
            let g1ee = g1[(ei, ej)];
            let g1es = g1[(ei, sj)];
            let g1se = g1[(si, ej)];
            let g1ss = g1[(si, sj)];
            let g2ee = g2[(ei, ej)];
            let g2es = g2[(ei, sj)];
            let g2se = g2[(si, ej)];
            let g2ss = g2[(si, sj)];
            c[(ee_index(i), ee_index(j))] = g1ee * g2ee;
            c[(ee_index(i), ss_index(j))] = g1es * g2es;
            c[(ee_index(i), es_index(j))] = (g1ee * g2es + g1es * g2ee) * inv_sqrt2;
            c[(ss_index(i), ee_index(j))] = g1se * g2se;
            c[(ss_index(i), ss_index(j))] = g1ss * g2ss;
            c[(ss_index(i), es_index(j))] = (g1se * g2ss + g1ss * g2se) * inv_sqrt2;
            c[(es_index(i), ee_index(j))] = (g1ee * g2se + g1se * g2ee) * inv_sqrt2;
            c[(es_index(i), ss_index(j))] = (g1es * g2ss + g1ss * g2es) * inv_sqrt2;
            c[(es_index(i), es_index(j))] =
                (g1ee * g2ss + g1es * g2se + g1se * g2es + g1ss * g2ee) * C64::new(0.5, 0.0);
        }
    }
    c
}

/// Contraction of two emission row-vectors with the T-matrix output tau:
/// the outgoing pair amplitude kernel K.
fn emission_contract(tau: &DVector<C64>, eps1: &DVector<C64>, eps2: &DVector<C64>, n: usize) -> C64 {
    let inv_sqrt2 = C64::new(1.0 / SQRT2, 0.0);
    let mut k = C64::new(0.0, 0.0);
    for i in 0..n {
        let (ei, si) = (eslot(i), sslot(n, i));
        k += tau[ee_index(i)] * eps1[ei] * eps2[ei];
        k += tau[ss_index(i)] * eps1[si] * eps2[si];
        k += tau[es_index(i)] * (eps1[ei] * eps2[si] + eps1[si] * eps2[ei]) * inv_sqrt2;
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum G0Path {
    Residues,
    Quadrature,
}

pub struct TwoPhotonEngine {
    cfg: ValidatedConfig,
    model: EffectiveModel,
}

impl TwoPhotonEngine {
    /// Engine with propagation phases frozen at the carrier k0.
    pub fn new(cfg: &ValidatedConfig) -> Self {
        TwoPhotonEngine { cfg: cfg.clone(), model: EffectiveModel::new(cfg) }
    }

    /// Engine with phases frozen at the incident momentum: incoming
    /// amplitudes and elastic coefficients are then exact, and the frozen
    /// kernel error is second order in (omega - k_in).
    pub fn for_incident(cfg: &ValidatedConfig, k_in: f64) -> Self {
        TwoPhotonEngine { cfg: cfg.clone(), model: EffectiveModel::new_at(cfg, k_in) }
    }

    pub fn model(&self) -> &EffectiveModel {
        &self.model
    }
    pub fn config(&self) -> &ValidatedConfig {
        &self.cfg
    }

    /// Free two-excitation resolvent on the pair basis by the pole-pair sum.
    pub fn g0_residues(&self, e: C64) -> Result<DMatrix<C64>, TwoPhotonError> {
        let eig = self.model.eigen().map_err(|err| TwoPhotonError::NoPath(err.to_string()))?;
        let n = self.cfg.n_qubits();
        let dim = 2 * n;
        let mut g0 = DMatrix::<C64>::zeros(3 * n, 3 * n);
        // projectors P_mu = v_mu v_mu^T
        let projs: Vec<DMatrix<C64>> = (0..dim)
            .map(|mu| {
                let v = eig.vectors.column(mu);
                DMatrix::from_fn(dim, dim, |i, j| v[i] * v[j])
            })
            .collect();
        for mu in 0..dim {
            for nu in 0..dim {
                let denom = e - eig.values[mu] - eig.values[nu];
                let c = pair_contract(&projs[mu], &projs[nu], n);
                g0 += c * (C64::new(1.0, 0.0) / denom);
            }
        }
        Ok(g0)
    }

    /// Independent evaluation: adaptive quadrature of the resolvent
    /// convolution at finite i*eps, Richardson-extrapolated eps -> 0.
    pub fn g0_quadrature(&self, e: f64) -> Result<DMatrix<C64>, TwoPhotonError> {
        let n = self.cfg.n_qubits();
        let gamma = self.cfg.gamma_ref();
        // pole hints: diagonal of H_eff is a fair proxy when eigen data is
        // unavailable; use eigenvalues when we have them
        let hints: Vec<f64> = match self.model.eigen() {
            Ok(eig) => eig
                .values
                .iter()
                .flat_map(|l| [l.re, e - l.re])
                .collect(),
            Err(_) => self
                .model
                .matrix()
                .diagonal()
                .iter()
                .flat_map(|d| [d.re, e - d.re])
                .collect(),
        };
        let scale = 10.0 * gamma;
        let mut samples = Vec::new();
        for eps in [1e-3 * gamma, 1e-4 * gamma, 1e-5 * gamma] {
            let shift = C64::new(0.0, eps);
            let integrand = |w: f64| {
                let g1 = self.model.resolvent(C64::new(w, 0.0) + shift);
                let g2 = self.model.resolvent(C64::new(e - w, 0.0) + shift);
                pair_contract(&g1, &g2, n)
            };
            let (raw, _err) = integrate_mat_real_line(
                integrand,
                e / 2.0,
                scale,
                &hints,
                QuadTol { abs: 1e-11, rel: 1e-9, max_intervals: 30000 },
            )?;
            // -(1/2 pi i) * integral
            let val = raw * (C64::new(0.0, 1.0) / C64::new(TWO_PI, 0.0));
            samples.push((eps, val));
        }
        Ok(neville_to_zero(&samples))
    }

    /// Default-path G0 with automatic fallback.
    pub fn g0(&self, e: f64) -> Result<(DMatrix<C64>, G0Path), TwoPhotonError> {
        match self.g0_residues(C64::new(e, 0.0)) {
            Ok(m) => Ok((m, G0Path::Residues)),
            Err(_) => Ok((self.g0_quadrature(e)?, G0Path::Quadrature)),
        }
    }

    /// Relative deviation between the two G0 paths (diagnostic; errors above
    /// 1e-6 signal a pole-classification bug).
    pub fn verify_dual_path(&self, e: f64) -> Result<f64, TwoPhotonError> {
        let a = self.g0_residues(C64::new(e, 0.0))?;
        let b = self.g0_quadrature(e)?;
        let num: f64 = (&a - &b).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let rel = num / den.max(1e-300);
        if rel > 1e-6 {
            return Err(TwoPhotonError::DualPathMismatch(rel));
        }
        Ok(rel)
    }

    /// Hardcore T-matrix, T(E) = -G0(E)^{-1}.
    pub fn t_matrix(&self, e: f64) -> Result<DMatrix<C64>, TwoPhotonError> {
        let (g0, _) = self.g0(e)?;
        invert_checked(&g0, e).map(|inv| -inv)
    }

    /// Finite-U diagnostic mode: T_U(E) = U [1 - G0 U]^{-1} = (U^{-1} - G0)^{-1}.
    pub fn t_matrix_finite_u(&self, e: f64, u: f64) -> Result<DMatrix<C64>, TwoPhotonError> {
        let (g0, _) = self.g0(e)?;
        let dim = g0.nrows();
        let mut a = -g0;
        for i in 0..dim {
            a[(i, i)] += C64::new(1.0 / u, 0.0);
        }
        invert_checked(&a, e)
    }

    /// Projection of the symmetrized incident pair state (k, k) onto the
    /// doubly-excited basis.
    pub fn incoming_vector(&self, k_in: f64) -> DVector<C64> {
        let n = self.cfg.n_qubits();
        let (e_amp, s_amp) = self.model.amplitudes(k_in);
        let mut w = DVector::<C64>::zeros(3 * n);
        for i in 0..n {
            w[ee_index(i)] = e_amp[i] * e_amp[i];
            w[ss_index(i)] = s_amp[i] * s_amp[i];
            w[es_index(i)] = C64::new(SQRT2, 0.0) * e_amp[i] * s_amp[i];
        }
        w
    }

    /// Full two-photon scattering solution at equal incident momenta.
    pub fn scatter(&self, k_in: f64) -> Result<TwoPhotonSolution, TwoPhotonError> {
        if k_in <= 0.0 {
            return Err(TwoPhotonError::NonPositiveMomentum(k_in));
        }
        let e = 2.0 * k_in;
        let (g0, path, e_used) = match self.g0(e) {
            Ok((m, p)) => {
                if cond_estimate(&m) > 1e12 {
                    // isolated singular energies: nudge and retry once
                    let e2 = e + 1e-9 * self.cfg.gamma_ref();
                    let (m2, p2) = self.g0(e2)?;
                    let cond = cond_estimate(&m2);
                    if cond > 1e12 {
                        return Err(TwoPhotonError::G0Singular { e: e2, cond });
                    }
                    (m2, p2, e2)
                } else {
                    (m, p, e)
                }
            }
            Err(err) => return Err(err),
        };
        let w = self.incoming_vector(k_in);
        let tau = g0
            .clone()
            .lu()
            .solve(&(-&w))
            .ok_or(TwoPhotonError::G0Singular { e: e_used, cond: f64::INFINITY })?;
        // hardcore constraint: the full state has no doubly-excited amplitude
        let resid = (&g0 * &tau + &w).norm() / w.norm().max(1e-300);
        debug_assert!(resid < 1e-8, "hardcore residual {resid:e}");

        let n = self.cfg.n_qubits();
        let eig = self.model.eigen().map_err(|err| TwoPhotonError::NoPath(err.to_string()))?;
        let dim = 2 * n;
        let mut emission = Vec::new();
        for ch in self.model.channels() {
            let out = self.model.out_vector(ch).expect("channel exists");
            let mut m = DMatrix::<C64>::zeros(dim, dim);
            for mu in 0..dim {
                let v = eig.vectors.column(mu);
                let a: C64 = (0..dim).map(|j| out[j] * v[j]).sum();
                for u in 0..dim {
                    m[(mu, u)] = a * v[u];
                }
            }
            emission.push((ch, m));
        }

        let (elastic_rr, elastic_rl) = if self.cfg.is_semi_infinite() {
            (None, None)
        } else {
            let t = self.model.t_amp(k_in).expect("infinite topology has t");
            let r = self.model.r_amp(k_in);
            (Some(t * t), Some(2.0 * t * r))
        };
        let r = self.model.r_amp(k_in);
        let elastic_ll = r * r;

        let xs: Vec<f64> = self.cfg.qubits().iter().map(|q| q.position).collect();
        Ok(TwoPhotonSolution {
            k_in,
            e: e_used,
            n,
            lambdas: eig.values.clone(),
            emission,
            tau,
            w,
            g0,
            g0_path: path,
            elastic_rr,
            elastic_ll,
            elastic_rl,
            single_t: if self.cfg.is_semi_infinite() { None } else { self.model.t_amp(k_in).ok() },
            single_r: self.model.r_amp(k_in),
            is_mirror: self.cfg.is_semi_infinite(),
            x_min: xs.iter().cloned().fold(f64::INFINITY, f64::min),
            x_max: xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mirror_x: self.cfg.mirror_position(),
            gamma_ref: self.cfg.gamma_ref(),
            config_hash: self.cfg.hash(),
        })
    }
}

fn invert_checked(m: &DMatrix<C64>, e: f64) -> Result<DMatrix<C64>, TwoPhotonError> {
    let cond = cond_estimate(m);
    if cond > 1e12 {
        return Err(TwoPhotonError::G0Singular { e, cond });
    }
    m.clone()
        .lu()
        .try_inverse()
        .ok_or(TwoPhotonError::G0Singular { e, cond: f64::INFINITY })
}

fn cond_estimate(m: &DMatrix<C64>) -> f64 {
    let svd = m.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    }
}

/// Two-photon scattering state at total energy E = 2 k_in: elastic channel
/// coefficients, the hardcore T-matrix output tau, and closed-form access to
/// the inelastic ("bound state") channel amplitudes.
pub struct TwoPhotonSolution {
    pub k_in: f64,
    pub e: f64,
    n: usize,
    lambdas: Vec<C64>,
    /// Per channel: matrix [mu][slot] holding the residue of the emission
    /// row-vector at pole lambda_mu.
    emission: Vec<(Channel, DMatrix<C64>)>,
    pub tau: DVector<C64>,
    pub w: DVector<C64>,
    pub g0: DMatrix<C64>,
    pub g0_path: G0Path,
    pub elastic_rr: Option<C64>,
    pub elastic_ll: C64,
    pub elastic_rl: Option<C64>,
    pub single_t: Option<C64>,
    pub single_r: C64,
    pub is_mirror: bool,
    x_min: f64,
    x_max: f64,
    mirror_x: Option<f64>,
    gamma_ref: f64,
    pub config_hash: u64,
}

impl TwoPhotonSolution {
    pub fn n_qubits(&self) -> usize {
        self.n
    }
    pub fn poles(&self) -> &[C64] {
        &self.lambdas
    }

    /// Frequency-axis breakpoints bracketing every spectral feature of the
    /// bound channels: pole projections at omega = Re lambda and E - Re
    /// lambda, padded on the scale of each pole width. Quadratures seeded
    /// with these cannot overlook a narrow line far from the window center.
    pub fn spectral_breakpoints(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        for lam in &self.lambdas {
            let width = lam.im.abs().max(1e-3 * self.gamma_ref);
            for p in [lam.re, self.e - lam.re] {
                for pad in [-8.0, -3.0, -1.0, 0.0, 1.0, 3.0, 8.0] {
                    pts.push(p + pad * width);
                }
                for pad in [-2.0, -0.5, 0.5, 2.0] {
                    pts.push(p + pad * self.gamma_ref);
                }
            }
        }
        pts
    }

    pub fn channels(&self) -> Vec<PairChannel> {
        if self.is_mirror {
            vec![PairChannel::LL]
        } else {
            vec![PairChannel::RR, PairChannel::LL, PairChannel::RL]
        }
    }

    pub fn elastic(&self, ch: PairChannel) -> Result<C64, TwoPhotonError> {
        match ch {
            PairChannel::RR => self.elastic_rr.ok_or(TwoPhotonError::NoSuchChannel(ch)),
            PairChannel::LL => Ok(self.elastic_ll),
            PairChannel::RL => self.elastic_rl.ok_or(TwoPhotonError::NoSuchChannel(ch)),
        }
    }

    fn emission_matrix(&self, ch: Channel) -> Result<&DMatrix<C64>, TwoPhotonError> {
        self.emission
            .iter()
            .find(|(c, _)| *c == ch)
            .map(|(_, m)| m)
            .ok_or(TwoPhotonError::NoSuchChannel(match ch {
                Channel::R => PairChannel::RR,
                Channel::L => PairChannel::LL,
            }))
    }

    /// Emission row vector at complex frequency w for outgoing direction ch.
    fn epsilon(&self, ch: Channel, w: C64) -> Result<DVector<C64>, TwoPhotonError> {
        let m = self.emission_matrix(ch)?;
        let dim = 2 * self.n;
        let mut eps = DVector::<C64>::zeros(dim);
        for mu in 0..dim {
            let denom = w - self.lambdas[mu];
            for u in 0..dim {
                eps[u] += m[(mu, u)] / denom;
            }
        }
        Ok(eps)
    }

    fn directions(ch: PairChannel) -> (Channel, Channel) {
        match ch {
            PairChannel::RR => (Channel::R, Channel::R),
            PairChannel::LL => (Channel::L, Channel::L),
            PairChannel::RL => (Channel::R, Channel::L),
        }
    }

    /// Outgoing pair kernel K_ch(p) with photons at (p, E - p).
    pub fn k_channel(&self, ch: PairChannel, p: C64) -> Result<C64, TwoPhotonError> {
        let (d1, d2) = Self::directions(ch);
        let eps1 = self.epsilon(d1, p)?;
        let eps2 = self.epsilon(d2, C64::new(self.e, 0.0) - p)?;
        Ok(emission_contract(&self.tau, &eps1, &eps2, self.n))
    }

    /// Bound-state channel amplitude B_ch(p). Channel weights in the power
    /// spectrum are then 2 |B_RR|^2, 2 |B_LL|^2 and 1 |B_RL|^2 per direction.
    pub fn b_channel(&self, ch: PairChannel, p: f64) -> Result<C64, TwoPhotonError> {
        let k = self.k_channel(ch, C64::new(p, 0.0))?;
        let scale = match ch {
            PairChannel::RR | PairChannel::LL => 1.0 / TWO_PI,
            PairChannel::RL => SQRT2 / TWO_PI,
        };
        Ok(k * C64::new(scale, 0.0))
    }

    /// Inelastic power spectrum for direction alpha at frequency omega.
    pub fn spectral_density(&self, alpha: Channel, omega: f64) -> Result<f64, TwoPhotonError> {
        if self.is_mirror {
            return match alpha {
                Channel::L => Ok(2.0 * self.b_channel(PairChannel::LL, omega)?.norm_sqr()),
                Channel::R => Ok(0.0),
            };
        }
        match alpha {
            Channel::R => {
                let rr = self.b_channel(PairChannel::RR, omega)?;
                let rl = self.b_channel(PairChannel::RL, omega)?;
                Ok(2.0 * rr.norm_sqr() + rl.norm_sqr())
            }
            Channel::L => {
                let ll = self.b_channel(PairChannel::LL, omega)?;
                let rl = self.b_channel(PairChannel::RL, self.e - omega)?;
                Ok(2.0 * ll.norm_sqr() + rl.norm_sqr())
            }
        }
    }

    /// Total inelastic flux through the on-shell optical identity
    /// F = -(2/pi) Im <w|tau>; an internal consistency partner to the
    /// quadrature of the power spectrum.
    pub fn optical_flux(&self) -> f64 {
        -(2.0 / std::f64::consts::PI) * self.w.dotc(&self.tau).im
    }

    fn asymptotic_ok(&self, ch: PairChannel, x1: f64, x2: f64) -> bool {
        let margin = 0.0;
        match ch {
            PairChannel::RR => x1 > self.x_max + margin && x2 > self.x_max + margin,
            PairChannel::LL => x1 < self.x_min - margin && x2 < self.x_min - margin,
            PairChannel::RL => x1 > self.x_max + margin && x2 < self.x_min - margin,
        }
    }

    /// Real-space bound-state amplitude chi_ch(x1, x2) in the asymptotic
    /// outgoing region, synthesized from the pole-residue form.
    pub fn bound_realspace(&self, ch: PairChannel, x1: f64, x2: f64) -> Result<C64, TwoPhotonError> {
        if self.is_mirror && ch != PairChannel::LL {
            return Err(TwoPhotonError::NoSuchChannel(ch));
        }
        if self.mirror_x.is_some() && (x1 > self.x_max || x2 > self.x_max) {
            return Err(TwoPhotonError::NotAsymptotic { ch, x1, x2 });
        }
        if !self.asymptotic_ok(ch, x1, x2) {
            return Err(TwoPhotonError::NotAsymptotic { ch, x1, x2 });
        }
        let (d1, d2) = Self::directions(ch);
        let (s1, s2) = (direction_sign(d1), direction_sign(d2));
        let u = s1 * x1 - s2 * x2;
        let dim = 2 * self.n;
        let ec = C64::new(self.e, 0.0);
        let mut acc = C64::new(0.0, 0.0);
        if u >= 0.0 {
            // close upward: poles of the second factor at omega = E - lambda_nu
            let m2 = self.emission_matrix(d2)?.clone();
            for nu in 0..dim {
                let w_pole = ec - self.lambdas[nu];
                let eps1 = self.epsilon(d1, w_pole)?;
                let rho2 = m2.row(nu).transpose();
                let amp = emission_contract(&self.tau, &eps1, &rho2, self.n);
                // residue of eps2(E-w) in w is -rho2; the -(1/2pi i) * 2pi i
                // prefactor contributes another -1
                acc += amp * (C64::new(0.0, 1.0) * w_pole * u).exp();
            }
        } else {
            let m1 = self.emission_matrix(d1)?.clone();
            for mu in 0..dim {
                let w_pole = self.lambdas[mu];
                let rho1 = m1.row(mu).transpose();
                let eps2 = self.epsilon(d2, ec - w_pole)?;
                let amp = emission_contract(&self.tau, &rho1, &eps2, self.n);
                acc += amp * (C64::new(0.0, 1.0) * w_pole * u).exp();
            }
        }
        let com_phase = (C64::new(0.0, 1.0) * ec * C64::new(s2 * x2, 0.0)).exp();
        Ok(acc * com_phase)
    }

    /// Outgoing same-direction pair amplitude at detector delay t >= 0,
    /// relative to the centre-of-mass phase: elastic + bound. The elastic
    /// part factorizes into the squared single-photon amplitude. g2 is the
    /// modulus-squared of this, normalized by |single amplitude|^4.
    pub fn pair_amplitude_delay(&self, alpha: Channel, t: f64) -> Result<C64, TwoPhotonError> {
        let elastic = match alpha {
            Channel::R => self.elastic_rr.ok_or(TwoPhotonError::NoSuchChannel(PairChannel::RR))?,
            Channel::L => self.elastic_ll,
        };
        let dim = 2 * self.n;
        let m1 = self.emission_matrix(alpha)?.clone();
        let ec = C64::new(self.e, 0.0);
        let mut chi = C64::new(0.0, 0.0);
        for mu in 0..dim {
            let rho1 = m1.row(mu).transpose();
            let eps2 = self.epsilon(alpha, ec - self.lambdas[mu])?;
            let amp = emission_contract(&self.tau, &rho1, &eps2, self.n);
            chi += amp * (C64::new(0.0, 1.0) * (C64::new(self.k_in, 0.0) - self.lambdas[mu]) * t).exp();
        }
        Ok(elastic + chi)
    }

    /// Adaptive sampling of B_ch on [E/2 - w, E/2 + w]: bisect until the
    /// linear-interpolation error is below `rel_tol` of the channel maximum.
    pub fn sample_channel(
        &self,
        ch: PairChannel,
        halfwidth: f64,
        rel_tol: f64,
    ) -> Result<Vec<(f64, C64)>, TwoPhotonError> {
        let center = self.e / 2.0;
        let gamma = self.gamma_ref;
        let mut xs: Vec<f64> = Vec::new();
        let base = 160usize;
        for i in 0..=base {
            xs.push(center - halfwidth + 2.0 * halfwidth * (i as f64) / (base as f64));
        }
        // seed near every pole projection and the EIT scales
        for lam in &self.lambdas {
            for p in [lam.re, self.e - lam.re] {
                for d in [-1.0, 0.0, 1.0] {
                    let x = p + d * lam.im.abs().max(1e-6 * gamma);
                    if x > center - halfwidth && x < center + halfwidth {
                        xs.push(x);
                    }
                }
            }
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * gamma);
        let mut vals: Vec<C64> = Vec::with_capacity(xs.len());
        for &x in &xs {
            vals.push(self.b_channel(ch, x)?);
        }
        let cap = 20000usize;
        loop {
            let maxabs = vals.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
            let mut insert_at: Vec<(usize, f64, C64)> = Vec::new();
            for i in 0..xs.len() - 1 {
                let xm = 0.5 * (xs[i] + xs[i + 1]);
                if xm <= xs[i] || xm >= xs[i + 1] {
                    continue;
                }
                let vm = self.b_channel(ch, xm)?;
                let interp = (vals[i] + vals[i + 1]) * C64::new(0.5, 0.0);
                if (vm - interp).norm() > rel_tol * maxabs {
                    insert_at.push((i + 1, xm, vm));
                }
            }
            if insert_at.is_empty() {
                break;
            }
            if xs.len() + insert_at.len() > cap {
                return Err(TwoPhotonError::GridRefinement(rel_tol));
            }
            for (offset, (idx, x, v)) in insert_at.into_iter().enumerate() {
                xs.insert(idx + offset, x);
                vals.insert(idx + offset, v);
            }
        }
        Ok(xs.into_iter().zip(vals).collect())
    }

    /// CSV export of the sampled channel amplitudes on a merged grid.
    pub fn channels_csv(&self, halfwidth: f64, rel_tol: f64) -> Result<String, TwoPhotonError> {
        let channels = self.channels();
        let mut grids = Vec::new();
        for &ch in &channels {
            grids.push(self.sample_channel(ch, halfwidth, rel_tol)?);
        }
        let mut merged: Vec<f64> = grids.iter().flat_map(|g| g.iter().map(|(x, _)| *x)).collect();
        merged.sort_by(|a, b| a.partial_cmp(b).unwrap());
        merged.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mut out = String::new();
        out.push_str(&format!(
            "# config={:016x} E={:?} k_in={:?} source=two_photon\n",
            self.config_hash, self.e, self.k_in
        ));
        out.push('p');
        for ch in &channels {
            out.push_str(&format!(",Re_B_{ch},Im_B_{ch}"));
        }
        out.push('\n');
        for &p in &merged {
            out.push_str(&format!("{p:?}"));
            for &ch in &channels {
                let b = self.b_channel(ch, p)?;
                out.push_str(&format!(",{:?},{:?}", b.re, b.im));
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Structured text dump for the oracle comparator.
    pub fn text_dump(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("two_photon_solution config={:016x}\n", self.config_hash));
        out.push_str(&format!("k_in {:?}\nE {:?}\n", self.k_in, self.e));
        out.push_str(&format!("g0_path {:?}\n", self.g0_path));
        for ch in self.channels() {
            if let Ok(c) = self.elastic(ch) {
                out.push_str(&format!("elastic_{ch} {:?} {:?}\n", c.re, c.im));
            }
        }
        for (i, lam) in self.lambdas.iter().enumerate() {
            out.push_str(&format!("pole {i} {:?} {:?}\n", lam.re, lam.im));
        }
        for i in 0..self.tau.len() {
            out.push_str(&format!("tau {i} {:?} {:?}\n", self.tau[i].re, self.tau[i].im));
        }
        out
    }
}

fn direction_sign(ch: Channel) -> f64 {
    match ch {
        Channel::R => 1.0,
        Channel::L => -1.0,
    }
}

// -- free-function entry points matching the operation contracts ------------

pub fn g0_matrix(cfg: &ValidatedConfig, e: f64) -> Result<DMatrix<C64>, TwoPhotonError> {
    Ok(TwoPhotonEngine::for_incident(cfg, e / 2.0).g0(e)?.0)
}

pub fn t_matrix(cfg: &ValidatedConfig, e: f64) -> Result<DMatrix<C64>, TwoPhotonError> {
    TwoPhotonEngine::for_incident(cfg, e / 2.0).t_matrix(e)
}

pub fn scatter_two(cfg: &ValidatedConfig, k_in: f64) -> Result<TwoPhotonSolution, TwoPhotonError> {
    TwoPhotonEngine::for_incident(cfg, k_in).scatter(k_in)
}
