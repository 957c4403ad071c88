//! Command-line driver: config ingestion, sweeps, figure-reproduction
//! presets, oracle comparisons, CSV emission.

mod manifest;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use manifest::RunManifest;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;
use wqed_core::analytic;
use wqed_core::lattice;
use wqed_core::observables::{self, find_k_peak};
use wqed_core::single_photon;
use wqed_core::two_photon::TwoPhotonEngine;
use wqed_core::{load_config, validate, Channel, CurveSeries, SystemConfig, ValidatedConfig};

const EXIT_CONFIG: i32 = 2;
const EXIT_SOLVER: i32 = 3;
const EXIT_THRESHOLD: i32 = 4;

#[derive(Parser)]
#[command(name = "wqed", about = "Few-photon scattering in waveguides coupled to driven three-level emitters", version)]
struct Cli {
    /// Output directory (env WQED_OUT_DIR overrides the default).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for grid sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    R,
    L,
}

#[derive(Subcommand)]
enum Command {
    /// Single-photon transmission curve T(k).
    Transmission {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 97.0)]
        kmin: f64,
        #[arg(long, default_value_t = 103.0)]
        kmax: f64,
        #[arg(long, default_value_t = 1201)]
        points: usize,
    },
    /// Total inelastic flux F(k).
    Flux {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 97.0)]
        kmin: f64,
        #[arg(long, default_value_t = 103.0)]
        kmax: f64,
        #[arg(long, default_value_t = 1201)]
        points: usize,
    },
    /// Inelastic power spectrum S_R, S_L at fixed incident momentum.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "at_peak")]
        k: Option<f64>,
        /// Chain through the flux-peak finder.
        #[arg(long)]
        at_peak: bool,
        /// Resample on a uniform grid of this many points instead of the
        /// adaptive one.
        #[arg(long)]
        omega_grid: Option<usize>,
        /// Half-width of the uniform grid around E/2 (units of Gamma).
        #[arg(long, default_value_t = 6.0)]
        omega_halfwidth: f64,
        /// Export max-normalized values alongside raw ones.
        #[arg(long)]
        normalize: bool,
    },
    /// Photon-photon correlation g2(t).
    G2 {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "at_peak")]
        k: Option<f64>,
        #[arg(long)]
        at_peak: bool,
        #[arg(long, value_enum, default_value_t = Direction::R)]
        direction: Direction,
        #[arg(long, default_value_t = 160.0)]
        t_max: f64,
        #[arg(long, default_value_t = 801)]
        t_points: usize,
    },
    /// Locate the flux maximum: k_peak, F_peak, T(k_peak).
    FindPeak {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        window_lo: Option<f64>,
        #[arg(long)]
        window_hi: Option<f64>,
    },
    /// Wigner-Smith time delay at momentum k.
    Delay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: f64,
    },
    /// Emit all panel data for a reference figure at preset parameters.
    Reproduce {
        #[arg(value_parser = ["fig2", "fig3", "fig4"])]
        figure: String,
    },
    /// Run the discretized-waveguide oracle against the pipeline.
    OracleCompare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, conflicts_with = "at_peak")]
        k: Option<f64>,
        #[arg(long)]
        at_peak: bool,
        #[arg(long, default_value_t = 800)]
        sites: usize,
        /// Validated near-linear bandwidth (units of Gamma).
        #[arg(long, default_value_t = 1.0)]
        bandwidth: f64,
        /// Also run at half and double resolution and emit a convergence table.
        #[arg(long)]
        m_doubling: bool,
        /// Compare the numerical spectrum against the closed form instead
        /// (single emitter, zero drive detuning only).
        #[arg(long)]
        closed_form: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(cli));
}

fn out_dir(cli_dir: &Option<PathBuf>) -> PathBuf {
    if let Some(d) = cli_dir {
        return d.clone();
    }
    if let Ok(d) = std::env::var("WQED_OUT_DIR") {
        return PathBuf::from(d);
    }
    PathBuf::from("wqed_out")
}

fn run(cli: Cli) -> i32 {
    let dir = out_dir(&cli.out_dir);
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("error: cannot create output directory {}: {e}", dir.display());
        return EXIT_CONFIG;
    }
    if cli.jobs > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .ok();
    }
    let started = Instant::now();
    let result = dispatch(&cli, &dir);
    match result {
        Ok((mut manifest, files)) => {
            manifest.wall_clock_ms = started.elapsed().as_millis();
            if let Err(e) = manifest.write(&dir) {
                eprintln!("error writing manifest: {e}");
                return EXIT_SOLVER;
            }
            for f in files {
                println!("wrote {}", f.display());
            }
            println!("manifest {}", manifest.manifest_hash);
            0
        }
        Err(err) => {
            // machine-readable error record on stderr
            eprintln!("{{\"error\": \"{}\"}}", err.message.replace('"', "'"));
            err.code
        }
    }
}

struct CmdError {
    code: i32,
    message: String,
}

fn config_err(e: impl std::fmt::Display) -> CmdError {
    CmdError { code: EXIT_CONFIG, message: e.to_string() }
}
fn solver_err(e: impl std::fmt::Display) -> CmdError {
    CmdError { code: EXIT_SOLVER, message: e.to_string() }
}

fn read_config(path: &Path) -> Result<ValidatedConfig, CmdError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_err)?;
    load_config(&text).map_err(config_err)
}

fn write_series(
    dir: &Path,
    name: &str,
    series: &CurveSeries,
    manifest: &RunManifest,
) -> Result<PathBuf, CmdError> {
    let path = dir.join(name);
    let body = format!("{}{}", manifest.stamp(), series.to_csv());
    std::fs::write(&path, body).map_err(solver_err)?;
    Ok(path)
}

fn peak_momentum(cfg: &ValidatedConfig, at_peak: bool, k: Option<f64>) -> Result<f64, CmdError> {
    if at_peak {
        Ok(find_k_peak(cfg, None).map_err(solver_err)?.k_peak)
    } else {
        k.ok_or_else(|| config_err(anyhow!("either --k or --at-peak is required")))
    }
}

type CmdOutput = (RunManifest, Vec<PathBuf>);

fn dispatch(cli: &Cli, dir: &Path) -> Result<CmdOutput, CmdError> {
    match &cli.command {
        Command::Transmission { config, kmin, kmax, points } => {
            let cfg = read_config(config)?;
            let manifest = RunManifest::new(
                format!("transmission kmin={kmin:?} kmax={kmax:?} points={points}"),
                Some(config.display().to_string()),
                cfg.hash(),
                BTreeMap::new(),
                dir,
            );
            let grid = wqed_core::numerics::linspace(*kmin, *kmax, *points);
            let series = sweep_transmission(&cfg, &grid);
            let f = write_series(dir, "transmission.csv", &series, &manifest)?;
            Ok((manifest, vec![f]))
        }
        Command::Flux { config, kmin, kmax, points } => {
            let cfg = read_config(config)?;
            let manifest = RunManifest::new(
                format!("flux kmin={kmin:?} kmax={kmax:?} points={points}"),
                Some(config.display().to_string()),
                cfg.hash(),
                BTreeMap::new(),
                dir,
            );
            let grid = wqed_core::numerics::linspace(*kmin, *kmax, *points);
            let series = sweep_flux(&cfg, &grid);
            let f = write_series(dir, "flux.csv", &series, &manifest)?;
            Ok((manifest, vec![f]))
        }
        Command::Spectrum { config, k, at_peak, omega_grid, omega_halfwidth, normalize } => {
            let cfg = read_config(config)?;
            let k_in = peak_momentum(&cfg, *at_peak, *k)?;
            let manifest = RunManifest::new(
                format!(
                    "spectrum k={k_in:?} omega_grid={omega_grid:?} omega_halfwidth={omega_halfwidth:?} normalize={normalize}"
                ),
                Some(config.display().to_string()),
                cfg.hash(),
                BTreeMap::new(),
                dir,
            );
            let mut series = match omega_grid {
                None => observables::power_spectrum(&cfg, k_in).map_err(solver_err)?,
                Some(n) => {
                    let sol = wqed_core::scatter_two(&cfg, k_in).map_err(solver_err)?;
                    let grid = wqed_core::numerics::linspace(
                        k_in - omega_halfwidth,
                        k_in + omega_halfwidth,
                        (*n).max(2),
                    );
                    let mut s = CurveSeries::new(
                        "omega",
                        &["S_R", "S_L"],
                        cfg.hash(),
                        "uniform_grid",
                        "numeric",
                    );
                    for &w in &grid {
                        let sr = sol.spectral_density(Channel::R, w).map_err(solver_err)?;
                        let sl = sol.spectral_density(Channel::L, w).map_err(solver_err)?;
                        s.push(w, vec![sr, sl]);
                    }
                    s
                }
            };
            if *normalize {
                let smax = series
                    .rows
                    .iter()
                    .flat_map(|r| r.iter().copied())
                    .fold(0.0f64, f64::max)
                    .max(1e-300);
                for row in series.rows.iter_mut() {
                    let extra: Vec<f64> = row.iter().map(|v| v / smax).collect();
                    row.extend(extra);
                }
                series.columns = vec![
                    "S_R".into(),
                    "S_L".into(),
                    "S_R_normalized".into(),
                    "S_L_normalized".into(),
                ];
            }
            let f = write_series(dir, "spectrum.csv", &series, &manifest)?;
            Ok((manifest, vec![f]))
        }
        Command::G2 { config, k, at_peak, direction, t_max, t_points } => {
            let cfg = read_config(config)?;
            let k_in = peak_momentum(&cfg, *at_peak, *k)?;
            let alpha = match direction {
                Direction::R => Channel::R,
                Direction::L => Channel::L,
            };
            let manifest = RunManifest::new(
                format!(
                    "g2 k={k_in:?} direction={} t_max={t_max:?} t_points={t_points}",
                    match alpha {
                        Channel::R => "R",
                        Channel::L => "L",
                    }
                ),
                Some(config.display().to_string()),
                cfg.hash(),
                BTreeMap::new(),
                dir,
            );
            let grid = wqed_core::numerics::linspace(0.0, *t_max, *t_points);
            let series = observables::g2(&cfg, k_in, alpha, &grid).map_err(solver_err)?;
            let f = write_series(dir, "g2.csv", &series, &manifest)?;
            Ok((manifest, vec![f]))
        }
        Command::FindPeak { config, window_lo, window_hi } => {
            let cfg = read_config(config)?;
            let window = match (window_lo, window_hi) {
                (Some(lo), Some(hi)) => Some((*lo, *hi)),
                _ => None,
            };
            let manifest = RunManifest::new(
                format!("find-peak window={window:?}"),
                Some(config.display().to_string()),
                cfg.hash(),
                BTreeMap::new(),
                dir,
            );
            let report = find_k_peak(&cfg, window).map_err(solver_err)?;
            let t_at_peak = single_photon::solve_single(&cfg, report.k_peak)
                .map(|s| s.transmission())
                .unwrap_or(f64::NAN);
            let mut body = manifest.stamp();
            body.push_str(&format!(
                "{{\"k_peak\": {:?}, \"F_peak\": {:?}, \"T_at_peak\": {:?}",
                report.k_peak, report.f_peak, t_at_peak
            ));
            if let Some(twin) = report.twin {
                body.push_str(&format!(", \"twin\": {twin:?}"));
            }
            body.push_str("}\n");
            let path = dir.join("peak.txt");
            std::fs::write(&path, &body).map_err(solver_err)?;
            print!("{body}");
            Ok((manifest, vec![path]))
        }
        Command::Delay { config, k } => {
            let cfg = read_config(config)?;
            let manifest = RunManifest::new(
                format!("delay k={k:?}"),
                Some(config.display().to_string()),
                cfg.hash(),
                BTreeMap::new(),
                dir,
            );
            let (tau, err) = single_photon::time_delay(&cfg, *k).map_err(solver_err)?;
            let body = format!(
                "{}{{\"k\": {k:?}, \"tau\": {tau:?}, \"error\": {err:?}}}\n",
                manifest.stamp()
            );
            let path = dir.join("delay.txt");
            std::fs::write(&path, &body).map_err(solver_err)?;
            print!("{body}");
            Ok((manifest, vec![path]))
        }
        Command::Reproduce { figure } => reproduce(figure, dir),
        Command::OracleCompare { config, k, at_peak, sites, bandwidth, m_doubling, closed_form } => {
            oracle_compare(config, *k, *at_peak, *sites, *bandwidth, *m_doubling, *closed_form, dir)
        }
    }
}

fn sweep_transmission(cfg: &ValidatedConfig, grid: &[f64]) -> CurveSeries {
    use rayon::prelude::*;
    let rows: Vec<_> = grid
        .par_iter()
        .map(|&k| {
            single_photon::solve_single(cfg, k).ok().map(|s| {
                let t = s.t.unwrap_or_default();
                (s.transmission(), t.re, t.im, s.r.re, s.r.im)
            })
        })
        .collect();
    let mut series = CurveSeries::new(
        "k",
        &["T", "Re_t", "Im_t", "Re_r", "Im_r"],
        cfg.hash(),
        "lu_dense",
        "numeric",
    );
    for (&k, row) in grid.iter().zip(rows) {
        match row {
            Some((t, tre, tim, rre, rim)) => series.push(k, vec![t, tre, tim, rre, rim]),
            None => series.push_flagged(k),
        }
    }
    series
}

fn sweep_flux(cfg: &ValidatedConfig, grid: &[f64]) -> CurveSeries {
    use rayon::prelude::*;
    let rows: Vec<Option<f64>> = grid
        .par_iter()
        .map(|&k| {
            let engine = TwoPhotonEngine::for_incident(cfg, k);
            engine.scatter(k).ok().and_then(|sol| observables::flux_of(&sol).ok())
        })
        .collect();
    let mut series =
        CurveSeries::new("k", &["F"], cfg.hash(), "quad_abs=1e-8_rel=1e-6", "numeric");
    for (&k, row) in grid.iter().zip(rows) {
        match row {
            Some(f) => series.push(k, vec![f]),
            None => series.push_flagged(k),
        }
    }
    series
}

fn g2_grid(rabi: f64, n_emitters: usize, decay_scale: f64) -> Vec<f64> {
    // cover several slow-light delay times
    let tau = 2.0 * n_emitters as f64 * decay_scale / (rabi * rabi).max(1e-6);
    let t_max = (5.0 * tau).clamp(20.0, 400.0);
    wqed_core::numerics::linspace(0.0, t_max, 801)
}

fn reproduce(figure: &str, dir: &Path) -> Result<CmdOutput, CmdError> {
    let manifest =
        RunManifest::new(format!("reproduce {figure}"), None, 0, BTreeMap::new(), dir);
    let mut files = Vec::new();
    let mut summary = manifest.stamp();
    let kgrid = wqed_core::numerics::linspace(97.0, 103.0, 1201);
    match figure {
        "fig2" => {
            // single emitter, Omega in {Gamma/4, Gamma}, omega_0 = omega_s = 100 Gamma
            for rabi in [0.25, 1.0] {
                let cfg = validate(SystemConfig::single(rabi)).map_err(config_err)?;
                let tag = format!("omega{rabi}");
                files.push(write_series(
                    dir,
                    &format!("fig2_T_{tag}.csv"),
                    &sweep_transmission(&cfg, &kgrid),
                    &manifest,
                )?);
                files.push(write_series(
                    dir,
                    &format!("fig2_F_{tag}.csv"),
                    &sweep_flux(&cfg, &kgrid),
                    &manifest,
                )?);
                let peak = find_k_peak(&cfg, None).map_err(solver_err)?;
                let spec = observables::power_spectrum(&cfg, peak.k_peak).map_err(solver_err)?;
                files.push(write_series(dir, &format!("fig2_S_{tag}.csv"), &spec, &manifest)?);
                let tg = g2_grid(rabi, 1, 1.0);
                for (dirn, label) in [(Channel::R, "transmitted"), (Channel::L, "reflected")] {
                    let g = observables::g2(&cfg, peak.k_peak, dirn, &tg).map_err(solver_err)?;
                    files.push(write_series(
                        dir,
                        &format!("fig2_g2_{label}_{tag}.csv"),
                        &g,
                        &manifest,
                    )?);
                }
                let t_peak = single_photon::solve_single(&cfg, peak.k_peak)
                    .map_err(solver_err)?
                    .transmission();
                summary.push_str(&format!(
                    "fig2 rabi={rabi:?} k_peak={:?} F_peak={:?} T_at_peak={:.4}\n",
                    peak.k_peak, peak.f_peak, t_peak
                ));
            }
        }
        "fig3" => {
            // emitter + mirror: k0 a in {pi/2, pi/4}, Omega in {Gamma/4, Gamma}
            for (k0a, aname) in
                [(std::f64::consts::FRAC_PI_2, "pi2"), (std::f64::consts::FRAC_PI_4, "pi4")]
            {
                for rabi in [0.25, 1.0] {
                    let cfg = validate(SystemConfig::single_with_mirror(rabi, k0a))
                        .map_err(config_err)?;
                    let tag = format!("a{aname}_omega{rabi}");
                    files.push(write_series(
                        dir,
                        &format!("fig3_F_{tag}.csv"),
                        &sweep_flux(&cfg, &kgrid),
                        &manifest,
                    )?);
                    let peak = find_k_peak(&cfg, None).map_err(solver_err)?;
                    let spec =
                        observables::power_spectrum(&cfg, peak.k_peak).map_err(solver_err)?;
                    files.push(write_series(dir, &format!("fig3_S_{tag}.csv"), &spec, &manifest)?);
                    let gamma_eff = (1.0 - (2.0 * k0a).cos()).max(0.5);
                    let tg = g2_grid(rabi, 2, gamma_eff);
                    let g = observables::g2(&cfg, peak.k_peak, Channel::L, &tg)
                        .map_err(solver_err)?;
                    files.push(write_series(
                        dir,
                        &format!("fig3_g2_reflected_{tag}.csv"),
                        &g,
                        &manifest,
                    )?);
                    let g2_zero = g.rows[0][0];
                    summary.push_str(&format!(
                        "fig3 k0a={k0a:?} rabi={rabi:?} k_peak={:?} F_peak={:?} g2(0)={:.4}\n",
                        peak.k_peak, peak.f_peak, g2_zero
                    ));
                }
            }
        }
        "fig4" => {
            let mut t_values = Vec::new();
            for (k0l, lname) in
                [(std::f64::consts::FRAC_PI_2, "pi2"), (std::f64::consts::FRAC_PI_4, "pi4")]
            {
                for rabi in [0.25, 1.0] {
                    let cfg = validate(SystemConfig::chain(2, rabi, k0l)).map_err(config_err)?;
                    let tag = format!("L{lname}_omega{rabi}");
                    files.push(write_series(
                        dir,
                        &format!("fig4_T_{tag}.csv"),
                        &sweep_transmission(&cfg, &kgrid),
                        &manifest,
                    )?);
                    files.push(write_series(
                        dir,
                        &format!("fig4_F_{tag}.csv"),
                        &sweep_flux(&cfg, &kgrid),
                        &manifest,
                    )?);
                    let peak = find_k_peak(&cfg, None).map_err(solver_err)?;
                    let spec =
                        observables::power_spectrum(&cfg, peak.k_peak).map_err(solver_err)?;
                    files.push(write_series(dir, &format!("fig4_S_{tag}.csv"), &spec, &manifest)?);
                    let tg = g2_grid(rabi, 2, 1.0);
                    for (dirn, label) in [(Channel::R, "transmitted"), (Channel::L, "reflected")] {
                        let g = observables::g2(&cfg, peak.k_peak, dirn, &tg)
                            .map_err(solver_err)?;
                        files.push(write_series(
                            dir,
                            &format!("fig4_g2_{label}_{tag}.csv"),
                            &g,
                            &manifest,
                        )?);
                    }
                    let t_peak = single_photon::solve_single(&cfg, peak.k_peak)
                        .map_err(solver_err)?
                        .transmission();
                    t_values.push(t_peak);
                    summary.push_str(&format!(
                        "fig4 k0L={k0l:?} rabi={rabi:?} k_peak={:?} F_peak={:?} T_at_peak={:.4}\n",
                        peak.k_peak, peak.f_peak, t_peak
                    ));
                }
            }
            summary.push_str(&format!(
                "fig4 transmittance multiset {:?}\n",
                t_values.iter().map(|t| (t * 1000.0).round() / 1000.0).collect::<Vec<_>>()
            ));
        }
        other => return Err(config_err(anyhow!("unknown figure {other}"))),
    }
    let path = dir.join(format!("{figure}_summary.txt"));
    std::fs::write(&path, &summary).map_err(solver_err)?;
    print!("{summary}");
    files.push(path);
    Ok((manifest, files))
}

#[allow(clippy::too_many_arguments)]
fn oracle_compare(
    config: &Path,
    k: Option<f64>,
    at_peak: bool,
    sites: usize,
    bandwidth: f64,
    m_doubling: bool,
    closed_form: bool,
    dir: &Path,
) -> Result<CmdOutput, CmdError> {
    let cfg = read_config(config)?;
    let k_in = match k {
        Some(k) if !at_peak => k,
        _ => find_k_peak(&cfg, None).map_err(solver_err)?.k_peak,
    };
    let mut tol = BTreeMap::new();
    tol.insert("sites".to_string(), sites.to_string());
    tol.insert("bandwidth".to_string(), format!("{bandwidth:?}"));
    let manifest = RunManifest::new(
        format!("oracle-compare k={k_in:?} sites={sites} bandwidth={bandwidth:?} m_doubling={m_doubling} closed_form={closed_form}"),
        Some(config.display().to_string()),
        cfg.hash(),
        tol,
        dir,
    );

    if closed_form {
        // semi-analytic spectrum vs the closed form (single emitter, Delta = 0)
        if cfg.n_qubits() != 1 || cfg.is_semi_infinite() || cfg.delta() != 0.0 {
            return Err(config_err(anyhow!(
                "--closed-form applies to a single emitter in an infinite guide at zero drive detuning"
            )));
        }
        let gamma = cfg.qubits()[0].gamma;
        let omega0 = cfg.qubits()[0].omega_e;
        let sol = wqed_core::scatter_two(&cfg, k_in).map_err(solver_err)?;
        let mut worst = 0.0f64;
        let mut smax = 0.0f64;
        for i in 0..=500 {
            let w = k_in - 5.0 + 10.0 * (i as f64) / 500.0;
            let s_num = sol.spectral_density(Channel::R, w).map_err(solver_err)?;
            let s_ref =
                analytic::s_closed(gamma, cfg.rabi(), omega0, k_in, w).map_err(solver_err)?;
            smax = smax.max(s_ref);
            worst = worst.max((s_num - s_ref).abs());
        }
        let rel = worst / smax.max(1e-300);
        let body = format!(
            "{}closed-form comparison at k_in={k_in:?}: S rel Linf = {rel:.3e}\n",
            manifest.stamp()
        );
        let path = dir.join("oracle_closed_form.txt");
        std::fs::write(&path, &body).map_err(solver_err)?;
        print!("{body}");
        if rel > 1e-6 {
            return Err(CmdError {
                code: EXIT_THRESHOLD,
                message: format!("closed-form agreement {rel:.3e} above 1e-6"),
            });
        }
        return Ok((manifest, vec![path]));
    }

    let pipeline = wqed_core::scatter_two(&cfg, k_in).map_err(solver_err)?;
    // exportable solution data for downstream comparators
    let mut files = Vec::new();
    let channels = pipeline.channels_csv(12.0, 1e-6).map_err(solver_err)?;
    let chan_path = dir.join("two_photon_channels.csv");
    std::fs::write(&chan_path, format!("{}{}", manifest.stamp(), channels)).map_err(solver_err)?;
    files.push(chan_path);
    let dump_path = dir.join("two_photon_solution.txt");
    std::fs::write(&dump_path, format!("{}{}", manifest.stamp(), pipeline.text_dump()))
        .map_err(solver_err)?;
    files.push(dump_path);
    let mut report_text = manifest.stamp();
    let mut violated = Vec::new();
    let mut runs = vec![(sites, bandwidth)];
    if m_doubling {
        runs = vec![
            (sites / 2, bandwidth / 2.0),
            (sites, bandwidth),
            (sites * 2, bandwidth * 2.0),
        ];
        report_text.push_str("convergence table (fixed box, halving spacing per row):\n");
        report_text.push_str("sites spacing single_photon_T_rel S_Linf_rel chi_L2_rel\n");
    }
    for (m, w) in runs {
        let rep = lattice::compare_oracle(&cfg, &pipeline, m, w, k_in).map_err(solver_err)?;
        if m_doubling {
            report_text.push_str(&format!(
                "{m} {:.5} {:.3e} {:.3e} {:.3e}\n",
                rep.d, rep.single_photon_t_rel, rep.s_linf_rel, rep.chi_l2_rel
            ));
        }
        if m == sites {
            report_text.push_str(&rep.render());
            if rep.chi_l2_rel > 0.02 {
                violated.push(format!("chi_L2 {:.3e} > 2e-2", rep.chi_l2_rel));
            }
            if rep.s_linf_rel > 0.05 {
                violated.push(format!("S_Linf {:.3e} > 5e-2", rep.s_linf_rel));
            }
            if rep.flux_budget_rel > 1e-3 {
                violated.push(format!("flux budget {:.3e} > 1e-3", rep.flux_budget_rel));
            }
            if rep.single_photon_t_rel > 5e-3 {
                violated.push(format!("single-photon T {:.3e} > 5e-3", rep.single_photon_t_rel));
            }
        }
    }
    let path = dir.join("oracle_report.txt");
    std::fs::write(&path, &report_text).map_err(solver_err)?;
    print!("{report_text}");
    files.push(path);
    if !violated.is_empty() {
        return Err(CmdError {
            code: EXIT_THRESHOLD,
            message: format!("oracle agreement thresholds violated: {}", violated.join("; ")),
        });
    }
    Ok((manifest, files))
}
