//! Effective emitter model with carrier-frozen propagation phases.
//!
//! Integrating out the photon field at linear dispersion leaves a constant
//! complex-symmetric matrix on the (e, s) amplitudes once every geometric
//! phase e^{ik|x|} is evaluated at the carrier k0. Within this model every
//! scattering amplitude is a rational function of k, which is what the
//! two-photon resolvent algebra relies on. For a single emitter at the origin
//! the model is exact.

use crate::model::ValidatedConfig;
use crate::numerics::{char_poly, poly_roots, C64};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Right-going outgoing photons (infinite topology only).
    R,
    /// Left-going outgoing photons.
    L,
}

#[derive(Debug, Error)]
pub enum EffectiveError {
    #[error("eigen decomposition failed: {0}")]
    Eigen(String),
    #[error("channel {0:?} does not exist for this topology")]
    NoSuchChannel(Channel),
}

/// Spectral data of the effective matrix: simple eigenvalues with
/// transpose-normalized eigenvectors (v^T v = 1), so that
/// (w - H)^{-1} = sum_mu v_mu v_mu^T / (w - lambda_mu).
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<C64>,
    /// Column mu is the eigenvector of values[mu].
    pub vectors: DMatrix<C64>,
}

#[derive(Debug, Clone)]
pub struct EffectiveModel {
    n: usize,
    h: DMatrix<C64>,
    /// Drive of the incident photon on the e slots (frozen phases).
    src: DVector<C64>,
    out_r: Option<DVector<C64>>,
    out_l: DVector<C64>,
    /// Elastic reflection of the bare mirror (semi-infinite only).
    bare_reflection: C64,
    eigen: Result<Eigen, String>,
}

fn phase(arg: f64) -> C64 {
    Complex64::from_polar(1.0, arg)
}

impl EffectiveModel {
    /// Model with phases frozen at the carrier k0.
    pub fn new(cfg: &ValidatedConfig) -> Self {
        Self::new_at(cfg, cfg.k0())
    }

    /// Model with phases frozen at an arbitrary momentum. Freezing at the
    /// incident momentum makes the incoming amplitudes and elastic
    /// coefficients exact (linear retardation retained); the residual error
    /// lives only in the off-shell kernel frequencies.
    pub fn new_at(cfg: &ValidatedConfig, k_freeze: f64) -> Self {
        let n = cfg.n_qubits();
        let dim = 2 * n;
        let k0 = k_freeze;
        let i1 = C64::new(0.0, 1.0);
        let xs: Vec<f64> = cfg.qubits().iter().map(|q| q.position).collect();
        let vs: Vec<f64> = (0..n).map(|i| cfg.coupling(i)).collect();
        let mirror = cfg.mirror_position();

        let mut h = DMatrix::<C64>::zeros(dim, dim);
        for i in 0..n {
            h[(i, i)] += C64::new(cfg.qubits()[i].omega_e, 0.0);
            h[(n + i, n + i)] += C64::new(cfg.omega_s()[i], 0.0);
            h[(i, n + i)] += C64::new(cfg.rabi() / 2.0, 0.0);
            h[(n + i, i)] += C64::new(cfg.rabi() / 2.0, 0.0);
            for j in 0..n {
                let mut g = phase(k0 * (xs[i] - xs[j]).abs());
                if let Some(xm) = mirror {
                    g -= phase(k0 * (2.0 * xm - xs[i] - xs[j]));
                }
                h[(i, j)] -= i1 * vs[i] * vs[j] * g;
            }
        }

        let mut src = DVector::<C64>::zeros(dim);
        for i in 0..n {
            let mut p = phase(k0 * xs[i]);
            if let Some(xm) = mirror {
                p -= phase(k0 * (2.0 * xm - xs[i]));
            }
            src[i] = vs[i] * p;
        }

        let out_l = {
            let mut v = DVector::<C64>::zeros(dim);
            for j in 0..n {
                let mut p = phase(k0 * xs[j]);
                if let Some(xm) = mirror {
                    p -= phase(k0 * (2.0 * xm - xs[j]));
                }
                v[j] = -i1 * vs[j] * p;
            }
            v
        };
        let out_r = if mirror.is_none() {
            let mut v = DVector::<C64>::zeros(dim);
            for j in 0..n {
                v[j] = -i1 * vs[j] * phase(-k0 * xs[j]);
            }
            Some(v)
        } else {
            None
        };
        let bare_reflection = match mirror {
            Some(xm) => -phase(2.0 * k0 * xm),
            None => C64::new(0.0, 0.0),
        };

        let eigen = eigen_symmetric(&h).map_err(|e| e.to_string());
        EffectiveModel { n, h, src, out_r, out_l, bare_reflection, eigen }
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }
    pub fn dim(&self) -> usize {
        2 * self.n
    }
    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.h
    }
    pub fn source(&self) -> &DVector<C64> {
        &self.src
    }
    pub fn bare_reflection(&self) -> C64 {
        self.bare_reflection
    }
    pub fn eigen(&self) -> Result<&Eigen, EffectiveError> {
        self.eigen.as_ref().map_err(|e| EffectiveError::Eigen(e.clone()))
    }
    pub fn has_channel(&self, ch: Channel) -> bool {
        match ch {
            Channel::R => self.out_r.is_some(),
            Channel::L => true,
        }
    }
    pub fn channels(&self) -> Vec<Channel> {
        if self.out_r.is_some() {
            vec![Channel::R, Channel::L]
        } else {
            vec![Channel::L]
        }
    }
    pub fn out_vector(&self, ch: Channel) -> Result<&DVector<C64>, EffectiveError> {
        match ch {
            Channel::R => self.out_r.as_ref().ok_or(EffectiveError::NoSuchChannel(ch)),
            Channel::L => Ok(&self.out_l),
        }
    }

    /// Resolvent (w - H)^{-1} by dense LU; valid at any complex w off the
    /// spectrum. Independent of the eigensolver.
    pub fn resolvent(&self, w: C64) -> DMatrix<C64> {
        let dim = self.dim();
        let mut a = -self.h.clone();
        for i in 0..dim {
            a[(i, i)] += w;
        }
        a.lu().try_inverse().unwrap_or_else(|| {
            // off-spectrum by construction at callers; a tiny shift rescues
            // the isolated unlucky evaluation
            let mut a2 = -self.h.clone();
            for i in 0..dim {
                a2[(i, i)] += w + C64::new(0.0, 1e-12);
            }
            a2.lu().try_inverse().expect("resolvent: singular after shift")
        })
    }

    /// Qubit amplitudes (e_i, s_i) of the scattering state at momentum k,
    /// unit incident amplitude.
    pub fn amplitudes(&self, k: f64) -> (Vec<C64>, Vec<C64>) {
        let g = self.resolvent(C64::new(k, 0.0));
        let psi = &g * &self.src;
        let e = (0..self.n).map(|i| psi[i]).collect();
        let s = (0..self.n).map(|i| psi[self.n + i]).collect();
        (e, s)
    }

    /// Emission row vector for channel `ch` at complex frequency w:
    /// eps_u(w) = sum_j out_j [g(w)]_{e_j, u}.
    pub fn emission(&self, ch: Channel, w: C64) -> Result<DVector<C64>, EffectiveError> {
        let out = self.out_vector(ch)?;
        let g = self.resolvent(w);
        Ok(g.tr_mul(out))
    }

    /// Transmission amplitude of the frozen-phase model (infinite only).
    pub fn t_amp(&self, k: f64) -> Result<C64, EffectiveError> {
        let out = self.out_vector(Channel::R)?;
        let g = self.resolvent(C64::new(k, 0.0));
        Ok(C64::new(1.0, 0.0) + (out.transpose() * &g * &self.src)[(0, 0)])
    }

    /// Reflection amplitude of the frozen-phase model.
    pub fn r_amp(&self, k: f64) -> C64 {
        let g = self.resolvent(C64::new(k, 0.0));
        self.bare_reflection + (self.out_l.transpose() * &g * &self.src)[(0, 0)]
    }
}

/// Eigen decomposition of a complex-symmetric matrix via the characteristic
/// polynomial (Faddeev-LeVerrier), Aberth root finding and inverse iteration.
pub fn eigen_symmetric(h: &DMatrix<C64>) -> Result<Eigen, EffectiveError> {
    let dim = h.nrows();
    let shift: C64 = h.diagonal().iter().sum::<C64>() / C64::new(dim as f64, 0.0);
    let shift = C64::new(shift.re, 0.0);
    let mut hs = h.clone();
    for i in 0..dim {
        hs[(i, i)] -= shift;
    }
    let cp = char_poly(&hs);
    let roots =
        poly_roots(&cp).map_err(|e| EffectiveError::Eigen(format!("root finder: {e}")))?;
    let scale = hs.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-30);

    let mut values = Vec::with_capacity(dim);
    let mut vectors = DMatrix::<C64>::zeros(dim, dim);
    for (mu, &root) in roots.iter().enumerate() {
        // inverse iteration on the shifted matrix
        let mut a = hs.clone();
        let reg = C64::new(0.0, 1e-13 * scale);
        for i in 0..dim {
            a[(i, i)] -= root + reg;
        }
        let lu = a.lu();
        let mut v = DVector::<C64>::from_fn(dim, |i, _| {
            C64::new(1.0, 0.3 + 0.1 * ((i + mu) as f64))
        });
        for _ in 0..3 {
            if let Some(w) = lu.solve(&v) {
                let norm = w.norm();
                if !norm.is_finite() || norm == 0.0 {
                    break;
                }
                v = w / C64::new(norm, 0.0);
            }
        }
        // Rayleigh polish with the bilinear (transpose) form
        let vtv = (v.transpose() * &v)[(0, 0)];
        if vtv.norm() < 1e-8 {
            return Err(EffectiveError::Eigen(
                "quasi-null eigenvector (near-defective matrix)".into(),
            ));
        }
        let lam = (v.transpose() * &hs * &v)[(0, 0)] / vtv;
        let v = v / vtv.sqrt();
        values.push(lam + shift);
        vectors.set_column(mu, &v);
    }

    // completeness: sum_mu v v^T = I
    let mut resid = DMatrix::<C64>::identity(dim, dim);
    for mu in 0..dim {
        let v = vectors.column(mu);
        for i in 0..dim {
            for j in 0..dim {
                resid[(i, j)] -= v[i] * v[j];
            }
        }
    }
    let err = resid.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if err > 1e-8 {
        return Err(EffectiveError::Eigen(format!(
            "spectral completeness residual {err:.3e} (near-degenerate spectrum)"
        )));
    }
    Ok(Eigen { values, vectors })
}
