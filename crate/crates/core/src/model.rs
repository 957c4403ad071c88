//! Domain types, unit conventions and validation.
//!
//! Units: hbar = c = 1 throughout; rates and frequencies in units of the
//! reference decay rate Gamma, lengths in units of c/Gamma. The drive Rabi
//! frequency and detuning are global (one classical drive per run).

use crate::numerics::fnv1a64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitSpec {
    /// Position along the waveguide.
    pub position: f64,
    /// Waveguide coupling decay rate, Gamma_i = 2 V_i^2.
    pub gamma: f64,
    /// |g> -> |e> transition frequency.
    pub omega_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Topology {
    Infinite,
    /// Mirror (hard wall) terminating the waveguide on the right.
    SemiInfinite { mirror_position: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub qubits: Vec<QubitSpec>,
    pub topology: Topology,
    /// Classical drive Rabi frequency (shared by all qubits).
    pub rabi: f64,
    /// Drive detuning: omega_s = omega_e - delta.
    pub delta: f64,
    /// Reference decay rate setting the unit scale.
    pub gamma_ref: f64,
}

pub const DEFAULT_OMEGA_E: f64 = 100.0;

impl SystemConfig {
    /// Single emitter at the origin with default operating point.
    pub fn single(rabi: f64) -> Self {
        SystemConfig {
            qubits: vec![QubitSpec { position: 0.0, gamma: 1.0, omega_e: DEFAULT_OMEGA_E }],
            topology: Topology::Infinite,
            rabi,
            delta: 0.0,
            gamma_ref: 1.0,
        }
    }

    /// Single emitter at the origin plus a mirror with k0 * a = `k0a`.
    pub fn single_with_mirror(rabi: f64, k0a: f64) -> Self {
        let a = k0a / DEFAULT_OMEGA_E;
        SystemConfig {
            qubits: vec![QubitSpec { position: 0.0, gamma: 1.0, omega_e: DEFAULT_OMEGA_E }],
            topology: Topology::SemiInfinite { mirror_position: a },
            rabi,
            delta: 0.0,
            gamma_ref: 1.0,
        }
    }

    /// N identical emitters with uniform spacing k0 * L = `k0l`.
    pub fn chain(n: usize, rabi: f64, k0l: f64) -> Self {
        let l = k0l / DEFAULT_OMEGA_E;
        SystemConfig {
            qubits: (0..n)
                .map(|i| QubitSpec { position: i as f64 * l, gamma: 1.0, omega_e: DEFAULT_OMEGA_E })
                .collect(),
            topology: Topology::Infinite,
            rabi,
            delta: 0.0,
            gamma_ref: 1.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("configuration has no qubits")]
    EmptySystem,
    #[error("duplicate qubit position x = {0}")]
    DuplicatePosition(f64),
    #[error("mirror at x = {mirror} does not lie to the right of all qubits (max qubit x = {max_qubit})")]
    MirrorInsideSystem { mirror: f64, max_qubit: f64 },
    #[error("nonpositive rate: {name} = {value}")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("negative drive: rabi = {0}")]
    NegativeRabi(f64),
    #[error("derived omega_s = {0} must be positive")]
    NonPositiveOmegaS(f64),
    #[error("config file: {0}")]
    ConfigFile(String),
}

/// Immutable, validated configuration with derived quantities filled in.
/// Safe to share across threads; all solvers take `&ValidatedConfig`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    qubits: Vec<QubitSpec>,
    topology: Topology,
    rabi: f64,
    delta: f64,
    gamma_ref: f64,
    // derived
    omega_s: Vec<f64>,
    k0: f64,
    separations: Vec<f64>,
    mirror_gap: Option<f64>,
    identical: bool,
    markov_warning: Option<String>,
    hash: u64,
}

pub fn validate(config: SystemConfig) -> Result<ValidatedConfig, ModelError> {
    let mut config = config;
    if config.qubits.is_empty() {
        return Err(ModelError::EmptySystem);
    }
    if config.gamma_ref <= 0.0 {
        return Err(ModelError::NonPositiveRate { name: "gamma_ref", value: config.gamma_ref });
    }
    if config.rabi < 0.0 {
        return Err(ModelError::NegativeRabi(config.rabi));
    }
    config
        .qubits
        .sort_by(|a, b| a.position.partial_cmp(&b.position).unwrap());
    for pair in config.qubits.windows(2) {
        if pair[0].position == pair[1].position {
            return Err(ModelError::DuplicatePosition(pair[0].position));
        }
    }
    let mut omega_s = Vec::with_capacity(config.qubits.len());
    for q in &config.qubits {
        if q.gamma <= 0.0 {
            return Err(ModelError::NonPositiveRate { name: "gamma", value: q.gamma });
        }
        if q.omega_e <= 0.0 {
            return Err(ModelError::NonPositiveRate { name: "omega_e", value: q.omega_e });
        }
        let ws = q.omega_e - config.delta;
        if ws <= 0.0 {
            return Err(ModelError::NonPositiveOmegaS(ws));
        }
        omega_s.push(ws);
    }
    let max_qubit = config.qubits.last().unwrap().position;
    let k0 = config.qubits[0].omega_e; // c = 1
    let mut mirror_gap = None;
    let mut markov_warning = None;
    if let Topology::SemiInfinite { mirror_position } = config.topology {
        if mirror_position <= max_qubit {
            return Err(ModelError::MirrorInsideSystem { mirror: mirror_position, max_qubit });
        }
        let gap = mirror_position - max_qubit;
        if k0 * gap > 2.0 * std::f64::consts::PI {
            markov_warning = Some(format!(
                "k0 * (x_M - max x_i) = {:.3} exceeds 2*pi; Markovian treatment of the mirror is unreliable",
                k0 * gap
            ));
        }
        mirror_gap = Some(gap);
    }
    let separations = config
        .qubits
        .windows(2)
        .map(|w| w[1].position - w[0].position)
        .collect();
    let q0 = &config.qubits[0];
    let identical = config
        .qubits
        .iter()
        .all(|q| rel_eq(q.gamma, q0.gamma) && rel_eq(q.omega_e, q0.omega_e));

    let hash = config_hash(&config);
    Ok(ValidatedConfig {
        qubits: config.qubits,
        topology: config.topology,
        rabi: config.rabi,
        delta: config.delta,
        gamma_ref: config.gamma_ref,
        omega_s,
        k0,
        separations,
        mirror_gap,
        identical,
        markov_warning,
        hash,
    })
}

fn rel_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn config_hash(config: &SystemConfig) -> u64 {
    let mut buf = String::new();
    for q in &config.qubits {
        buf.push_str(&format!("q:{:.17e},{:.17e},{:.17e};", q.position, q.gamma, q.omega_e));
    }
    match config.topology {
        Topology::Infinite => buf.push_str("inf;"),
        Topology::SemiInfinite { mirror_position } => {
            buf.push_str(&format!("mirror:{:.17e};", mirror_position))
        }
    }
    buf.push_str(&format!("rabi:{:.17e};delta:{:.17e};gref:{:.17e}", config.rabi, config.delta, config.gamma_ref));
    fnv1a64(buf.as_bytes())
}

impl ValidatedConfig {
    pub fn qubits(&self) -> &[QubitSpec] {
        &self.qubits
    }
    pub fn n_qubits(&self) -> usize {
        self.qubits.len()
    }
    pub fn topology(&self) -> &Topology {
        &self.topology
    }
    pub fn rabi(&self) -> f64 {
        self.rabi
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn gamma_ref(&self) -> f64 {
        self.gamma_ref
    }
    /// omega_s per qubit (= omega_e - delta).
    pub fn omega_s(&self) -> &[f64] {
        &self.omega_s
    }
    /// Carrier wavevector k0 = omega_e of the first qubit (c = 1).
    pub fn k0(&self) -> f64 {
        self.k0
    }
    pub fn separations(&self) -> &[f64] {
        &self.separations
    }
    pub fn mirror_position(&self) -> Option<f64> {
        match self.topology {
            Topology::SemiInfinite { mirror_position } => Some(mirror_position),
            Topology::Infinite => None,
        }
    }
    pub fn mirror_gap(&self) -> Option<f64> {
        self.mirror_gap
    }
    pub fn is_semi_infinite(&self) -> bool {
        matches!(self.topology, Topology::SemiInfinite { .. })
    }
    pub fn identical_qubits(&self) -> bool {
        self.identical
    }
    pub fn markov_warning(&self) -> Option<&str> {
        self.markov_warning.as_deref()
    }
    pub fn hash(&self) -> u64 {
        self.hash
    }
    /// Coupling amplitude V_i = sqrt(Gamma_i / 2).
    pub fn coupling(&self, i: usize) -> f64 {
        (self.qubits[i].gamma / 2.0).sqrt()
    }
    pub fn to_config(&self) -> SystemConfig {
        SystemConfig {
            qubits: self.qubits.clone(),
            topology: self.topology.clone(),
            rabi: self.rabi,
            delta: self.delta,
            gamma_ref: self.gamma_ref,
        }
    }
}

// ---------------------------------------------------------------------------
// Config file format (JSON): all numbers in Gamma-units.
// { "gamma": 1.0, "omega_e": 100.0, "rabi": 0.25, "delta": 0.0,
//   "qubit_positions": [0.0], "mirror": null | {"position": 0.0157} }
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct ConfigFile {
    pub gamma: f64,
    pub omega_e: f64,
    pub rabi: f64,
    pub delta: f64,
    pub qubit_positions: Vec<f64>,
    #[serde(default)]
    pub mirror: Option<MirrorSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MirrorSpec {
    pub position: f64,
}

impl ConfigFile {
    pub fn into_system(self) -> SystemConfig {
        SystemConfig {
            qubits: self
                .qubit_positions
                .iter()
                .map(|&x| QubitSpec { position: x, gamma: self.gamma, omega_e: self.omega_e })
                .collect(),
            topology: match self.mirror {
                Some(m) => Topology::SemiInfinite { mirror_position: m.position },
                None => Topology::Infinite,
            },
            rabi: self.rabi,
            delta: self.delta,
            gamma_ref: 1.0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::ConfigFile(e.to_string()))
    }
}

pub fn load_config(text: &str) -> Result<ValidatedConfig, ModelError> {
    validate(ConfigFile::from_json(text)?.into_system())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_qubit_fig2_point_is_valid() {
        let cfg = validate(SystemConfig::single(0.25)).unwrap();
        assert_eq!(cfg.omega_s()[0], 100.0);
        assert_eq!(cfg.k0(), 100.0);
        assert!(cfg.identical_qubits());
        assert!(cfg.markov_warning().is_none());
    }

    #[test]
    fn duplicate_positions_rejected() {
        let mut sys = SystemConfig::single(0.25);
        sys.qubits.push(QubitSpec { position: 0.0, gamma: 1.0, omega_e: 100.0 });
        assert!(matches!(validate(sys), Err(ModelError::DuplicatePosition(_))));
    }

    #[test]
    fn mirror_left_of_qubit_rejected() {
        let sys = SystemConfig {
            qubits: vec![QubitSpec { position: 1.0, gamma: 1.0, omega_e: 100.0 }],
            topology: Topology::SemiInfinite { mirror_position: 0.0 },
            rabi: 0.25,
            delta: 0.0,
            gamma_ref: 1.0,
        };
        assert!(matches!(validate(sys), Err(ModelError::MirrorInsideSystem { .. })));
    }

    #[test]
    fn nonpositive_rates_rejected() {
        let mut sys = SystemConfig::single(0.25);
        sys.qubits[0].gamma = 0.0;
        assert!(matches!(validate(sys), Err(ModelError::NonPositiveRate { .. })));
        let mut sys = SystemConfig::single(0.25);
        sys.rabi = -0.1;
        assert!(matches!(validate(sys), Err(ModelError::NegativeRabi(_))));
    }

    #[test]
    fn validate_is_idempotent() {
        let sys = SystemConfig::chain(2, 0.25, std::f64::consts::FRAC_PI_2);
        let v1 = validate(sys).unwrap();
        let v2 = validate(v1.to_config()).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn markov_flag_outside_range() {
        // mirror 25 wavelengths away from the qubit
        let sys = SystemConfig {
            qubits: vec![QubitSpec { position: 0.0, gamma: 1.0, omega_e: 100.0 }],
            topology: Topology::SemiInfinite { mirror_position: std::f64::consts::PI / 2.0 },
            rabi: 0.25,
            delta: 0.0,
            gamma_ref: 1.0,
        };
        let cfg = validate(sys).unwrap();
        assert!(cfg.markov_warning().is_some());
    }

    #[test]
    fn config_file_round_trip() {
        let text = r#"{ "gamma": 1.0, "omega_e": 100.0, "rabi": 0.25, "delta": 0.0,
                        "qubit_positions": [0.0, 0.015707963267948967],
                        "mirror": null }"#;
        let cfg = load_config(text).unwrap();
        assert_eq!(cfg.n_qubits(), 2);
        assert!((cfg.separations()[0] - 0.015707963267948967).abs() < 1e-18);
    }

    #[test]
    fn qubits_sorted_by_position() {
        let sys = SystemConfig {
            qubits: vec![
                QubitSpec { position: 0.5, gamma: 1.0, omega_e: 100.0 },
                QubitSpec { position: 0.0, gamma: 1.0, omega_e: 100.0 },
            ],
            topology: Topology::Infinite,
            rabi: 0.0,
            delta: 0.0,
            gamma_ref: 1.0,
        };
        let cfg = validate(sys).unwrap();
        assert!(cfg.qubits()[0].position < cfg.qubits()[1].position);
    }
}
