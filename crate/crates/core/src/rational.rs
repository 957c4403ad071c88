//! Pole-residue representation of the frozen-phase scattering amplitudes.
//!
//! Every amplitude of the effective model is a ratio of polynomials in k with
//! shared denominator det(k - H_eff): numerators come from the adjugate
//! expansion, poles from the denominator roots. Polynomials are stored in the
//! shifted variable y = k - k_ref for conditioning.

use crate::effective::{Channel, EffectiveModel};
use crate::model::ValidatedConfig;
use crate::numerics::{char_poly_adjugate, poly_derivative, poly_eval, poly_roots, C64};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RationalError {
    #[error("denominator root finding failed; residue shortcuts disabled: {0}")]
    RootsUnavailable(String),
}

#[derive(Debug, Clone)]
pub struct RationalQuantity {
    /// Numerator coefficients in y = k - k_ref.
    pub numerator: Vec<C64>,
    /// Residue at each pole (aligned with `PoleResidueForm::poles`); poles
    /// whose residue vanishes are removable for this quantity.
    pub residues: Vec<C64>,
    /// Value at |k| -> infinity (ratio of leading coefficients).
    pub asymptote: C64,
}

#[derive(Debug, Clone)]
pub struct PoleResidueForm {
    pub k_ref: f64,
    /// Shared denominator det(k - H_eff) in y = k - k_ref (monic, degree 2N).
    pub denominator: Vec<C64>,
    /// Scattering poles in absolute k (lower half plane for decaying modes).
    pub poles: Vec<C64>,
    pub t: Option<RationalQuantity>,
    pub r: RationalQuantity,
    pub e: Vec<RationalQuantity>,
    pub s: Vec<RationalQuantity>,
}

impl RationalQuantity {
    fn build(numerator: Vec<C64>, denom: &[C64], poles_shifted: &[C64]) -> Self {
        let dq = poly_derivative(denom);
        let residues = poles_shifted
            .iter()
            .map(|&y| poly_eval(&numerator, y) / poly_eval(&dq, y))
            .collect();
        let asymptote = if numerator.len() == denom.len() {
            numerator[numerator.len() - 1] / denom[denom.len() - 1]
        } else {
            C64::new(0.0, 0.0)
        };
        RationalQuantity { numerator, residues, asymptote }
    }

    /// Poles that actually contribute to this quantity.
    pub fn active_poles<'a>(&'a self, poles: &'a [C64]) -> impl Iterator<Item = (C64, C64)> + 'a {
        let scale = self.residues.iter().map(|r| r.norm()).fold(0.0, f64::max);
        poles
            .iter()
            .zip(self.residues.iter())
            .filter(move |(_, r)| r.norm() > 1e-9 * scale)
            .map(|(&p, &r)| (p, r))
    }

    /// Reconstruct the quantity from poles and residues.
    pub fn eval_residues(&self, poles: &[C64], k: C64, k_ref: f64) -> C64 {
        let y = k - C64::new(k_ref, 0.0);
        let mut acc = self.asymptote;
        for (&p, &r) in poles.iter().zip(self.residues.iter()) {
            acc += r / (y - (p - C64::new(k_ref, 0.0)));
        }
        acc
    }
}

impl PoleResidueForm {
    fn eval_quantity(&self, q: &RationalQuantity, k: C64) -> C64 {
        let y = k - C64::new(self.k_ref, 0.0);
        poly_eval(&q.numerator, y) / poly_eval(&self.denominator, y)
    }
    pub fn t_amp(&self, k: C64) -> Option<C64> {
        self.t.as_ref().map(|q| self.eval_quantity(q, k))
    }
    pub fn r_amp(&self, k: C64) -> C64 {
        self.eval_quantity(&self.r, k)
    }
    pub fn e_amp(&self, i: usize, k: C64) -> C64 {
        self.eval_quantity(&self.e[i], k)
    }
    pub fn s_amp(&self, i: usize, k: C64) -> C64 {
        self.eval_quantity(&self.s[i], k)
    }
}

/// Closed rational form of all single-photon quantities of the frozen-phase
/// model: shared denominator, per-quantity numerators, poles and residues.
pub fn rational_form(cfg: &ValidatedConfig) -> Result<PoleResidueForm, RationalError> {
    let model = EffectiveModel::new(cfg);
    rational_form_of(cfg, &model)
}

pub fn rational_form_of(
    cfg: &ValidatedConfig,
    model: &EffectiveModel,
) -> Result<PoleResidueForm, RationalError> {
    let n = cfg.n_qubits();
    let dim = 2 * n;
    let k_ref = cfg.k0();
    let mut hs = model.matrix().clone();
    for i in 0..dim {
        hs[(i, i)] -= C64::new(k_ref, 0.0);
    }
    let (denom, adj) = char_poly_adjugate(&hs);
    let poles_shifted =
        poly_roots(&denom).map_err(|e| RationalError::RootsUnavailable(e.to_string()))?;
    let poles: Vec<C64> = poles_shifted.iter().map(|&y| y + C64::new(k_ref, 0.0)).collect();

    // numerator of (g . src)[slot]: sum_k (M_k src)[slot] y^{n-k}
    let src = model.source();
    let mut amp_num: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); dim]; dim];
    for (k_idx, m) in adj.iter().enumerate() {
        let msrc = m * src;
        let power = dim - 1 - k_idx;
        for slot in 0..dim {
            amp_num[slot][power] = msrc[slot];
        }
    }

    // t = 1 + out_R^T g src  ->  numerator = denom + sum_k (out_R^T M_k src) y^{n-k}
    let contraction = |out: &nalgebra::DVector<C64>| -> Vec<C64> {
        let mut num = vec![C64::new(0.0, 0.0); dim];
        for (k_idx, m) in adj.iter().enumerate() {
            let val = (out.transpose() * m * src)[(0, 0)];
            num[dim - 1 - k_idx] = val;
        }
        num
    };

    let t = if let Ok(out_r) = model.out_vector(Channel::R) {
        let mut num = contraction(out_r);
        num.resize(dim + 1, C64::new(0.0, 0.0));
        for (i, &d) in denom.iter().enumerate() {
            num[i] += d;
        }
        Some(RationalQuantity::build(num, &denom, &poles_shifted))
    } else {
        None
    };
    let r = {
        let out_l = model.out_vector(Channel::L).expect("L channel always exists");
        let mut num = contraction(out_l);
        let bare = model.bare_reflection();
        if bare.norm() > 0.0 {
            num.resize(dim + 1, C64::new(0.0, 0.0));
            for (i, &d) in denom.iter().enumerate() {
                num[i] += bare * d;
            }
        }
        RationalQuantity::build(num, &denom, &poles_shifted)
    };
    let e: Vec<RationalQuantity> = (0..n)
        .map(|i| RationalQuantity::build(amp_num[i].clone(), &denom, &poles_shifted))
        .collect();
    let s: Vec<RationalQuantity> = (0..n)
        .map(|i| RationalQuantity::build(amp_num[n + i].clone(), &denom, &poles_shifted))
        .collect();

    Ok(PoleResidueForm { k_ref, denominator: denom, poles, t, r, e, s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, SystemConfig};
    use crate::single_photon::solve_single;

    #[test]
    fn single_3ls_denominator_structure() {
        // denominator = (k - omega_e + i Gamma/2)(k - omega_s) - Omega^2/4;
        // at Delta = 0 the two pole imaginary parts sum to -Gamma/2
        let cfg = validate(SystemConfig::single(0.25)).unwrap();
        let form = rational_form(&cfg).unwrap();
        assert_eq!(form.poles.len(), 2);
        let sum_im: f64 = form.poles.iter().map(|p| p.im).sum();
        assert!((sum_im + 0.5).abs() < 1e-12, "sum Im poles = {sum_im}");
    }

    #[test]
    fn reconstruction_matches_exact_solver_single_3ls() {
        // a single emitter at the origin has no geometric phases: the
        // rational form reproduces the exact matching solution everywhere
        let cfg = validate(SystemConfig::single(0.25)).unwrap();
        let form = rational_form(&cfg).unwrap();
        for i in 0..100 {
            let k = 95.0 + 10.0 * (i as f64) / 99.0;
            let sol = solve_single(&cfg, k).unwrap();
            let kc = C64::new(k, 0.0);
            assert!((form.t_amp(kc).unwrap() - sol.t.unwrap()).norm() < 1e-10);
            assert!((form.r_amp(kc) - sol.r).norm() < 1e-10);
            assert!((form.e_amp(0, kc) - sol.e[0]).norm() < 1e-10);
            assert!((form.s_amp(0, kc) - sol.s[0]).norm() < 1e-10);
        }
    }

    #[test]
    fn residue_reconstruction_equals_polynomial_form() {
        let cfg = validate(SystemConfig::chain(2, 0.25, std::f64::consts::FRAC_PI_2)).unwrap();
        let form = rational_form(&cfg).unwrap();
        for k in [98.7, 100.0, 101.3] {
            let kc = C64::new(k, 0.0);
            let t_poly = form.t_amp(kc).unwrap();
            let t_res = form.t.as_ref().unwrap().eval_residues(&form.poles, kc, form.k_ref);
            assert!((t_poly - t_res).norm() < 1e-9, "k={k}: {t_poly} vs {t_res}");
        }
    }

    #[test]
    fn two_level_limit_has_single_active_pole() {
        let cfg = validate(SystemConfig::single(0.0)).unwrap();
        let form = rational_form(&cfg).unwrap();
        // two denominator roots, but t has a removable one at omega_s
        let active: Vec<_> = form.t.as_ref().unwrap().active_poles(&form.poles).collect();
        assert_eq!(active.len(), 1);
        let (pole, _) = active[0];
        assert!((pole - C64::new(100.0, -0.5)).norm() < 1e-9, "pole = {pole}");
    }
}
