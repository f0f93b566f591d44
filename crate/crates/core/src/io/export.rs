//! Plot-ready text exports: Poincaré sections, straight-field-line angle
//! contours, residual profiles and run summaries.
//!
//! Every table is comma-separated with one header row and `\n` line endings.
//! Floats are written with Rust's `{:e}`/`{}` formatting, which never depends
//! on the locale.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mhdkernel::{CollocationGrid, FieldState};
use crate::netfield::{EquilibriumInput, NetParams, ProfileBasis};
use crate::polygon::{is_nested_inside, is_simple_polygon, Point};
use crate::solver::{HistoryEntry, Termination};
use crate::spectral::{spectral_width, SurfaceCoefficients};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MHD_PINN_OUT";

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("mhd-pinn-out"))
}

/// `R`, `Z` and `lambda` Fourier coefficients on one surface.
#[derive(Clone, Debug)]
pub struct SurfaceShape {
    pub rho: f64,
    pub r: SurfaceCoefficients,
    pub z: SurfaceCoefficients,
    pub lambda: SurfaceCoefficients,
}

/// Evaluates surface shapes of a trained parametrization.
pub struct ShapeEvaluator<'a> {
    params: &'a NetParams,
    basis: ProfileBasis,
    boundary: (SurfaceCoefficients, SurfaceCoefficients),
}

impl<'a> ShapeEvaluator<'a> {
    pub fn new(params: &'a NetParams, input: &EquilibriumInput) -> Result<Self> {
        let basis = ProfileBasis::new(input, params.layout.width)?;
        if basis.layout != params.layout {
            return Err(Error::InvalidInput(
                "parameter layout does not match the input".into(),
            ));
        }
        Ok(ShapeEvaluator {
            params,
            basis,
            boundary: (input.boundary_r()?, input.boundary_z()?),
        })
    }

    /// Shape at `rho` in `[0, 1]`; `rho = 1` takes `R`, `Z` straight from the
    /// boundary coefficients.
    pub fn at(&self, rho: f64) -> Result<SurfaceShape> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::RadialDomain { rho });
        }
        let p = self.basis.profiles_at(self.params, rho);
        let (r, z) = if rho == 1.0 {
            self.boundary.clone()
        } else {
            (p.r, p.z)
        };
        Ok(SurfaceShape {
            rho,
            r,
            z,
            lambda: p.lambda,
        })
    }
}

/// Closed cross sections at fixed `zeta`.
#[derive(Clone, Debug, PartialEq)]
pub struct PoincareSection {
    pub zeta: f64,
    /// Per surface: `rho` and the polyline `(theta, R, Z)`, first point
    /// repeated at the end.
    pub surfaces: Vec<(f64, Vec<(f64, f64, f64)>)>,
}

/// Ten equally spaced surfaces ending at the boundary.
pub fn default_surfaces() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

pub const DEFAULT_THETA_SAMPLES: usize = 256;

pub fn poincare_section(
    params: &NetParams,
    input: &EquilibriumInput,
    zeta: f64,
    surfaces: &[f64],
    n_theta: usize,
) -> Result<PoincareSection> {
    if surfaces.is_empty() {
        return Err(Error::EmptyGrid(
            "Poincaré export needs at least one surface",
        ));
    }
    if n_theta < 3 {
        return Err(Error::EmptyGrid(
            "Poincaré export needs at least 3 theta samples",
        ));
    }
    if surfaces.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "surface radii must be strictly increasing".into(),
        ));
    }
    if let Some(&rho) = surfaces.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::RadialDomain { rho });
    }
    let eval = ShapeEvaluator::new(params, input)?;
    let mut out = Vec::with_capacity(surfaces.len());
    for &rho in surfaces {
        let shape = eval.at(rho)?;
        let mut line: Vec<(f64, f64, f64)> = (0..n_theta)
            .map(|i| {
                let theta = 2.0 * PI * i as f64 / n_theta as f64;
                (
                    theta,
                    shape.r.evaluate(theta, zeta),
                    shape.z.evaluate(theta, zeta),
                )
            })
            .collect();
        let first = line[0];
        line.push((2.0 * PI, first.1, first.2));
        out.push((rho, line));
    }
    Ok(PoincareSection {
        zeta,
        surfaces: out,
    })
}

impl PoincareSection {
    /// True when every cross section is a simple polygon lying strictly
    /// inside the next one.
    pub fn is_nested(&self) -> bool {
        let polys: Vec<Vec<Point>> = self
            .surfaces
            .iter()
            .map(|(_, l)| l[..l.len() - 1].iter().map(|&(_, r, z)| (r, z)).collect())
            .collect();
        polys.iter().all(|p| is_simple_polygon(p))
            && polys.windows(2).all(|w| is_nested_inside(&w[0], &w[1]))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("surface,rho,theta,R,Z\n");
        for (k, (rho, line)) in self.surfaces.iter().enumerate() {
            for &(t, r, z) in line {
                let _ = writeln!(s, "{k},{rho},{t:e},{r:e},{z:e}");
            }
        }
        s
    }
}

/// Largest admissible residual of `theta + lambda - target`.
pub const THETA_STAR_TOL: f64 = 1e-10;

/// Solves `theta + lambda(theta, zeta) = target` for `theta`.
///
/// The map must be strictly increasing in `theta`; this is checked on a
/// sampling fine enough to resolve every retained mode before iterating.
/// The root is bracketed in `target +- sum |lambda_mn|` and found by Newton
/// steps that fall back to bisection whenever they leave the bracket.
pub fn solve_theta_star(
    lambda: &SurfaceCoefficients,
    rho: f64,
    target: f64,
    zeta: f64,
) -> Result<f64> {
    let samples = 16 * (lambda.mode_set.m_count() as usize + 1);
    let min_slope = (0..samples)
        .map(|i| 1.0 + lambda.evaluate_d_theta(2.0 * PI * i as f64 / samples as f64, zeta))
        .fold(f64::INFINITY, f64::min);
    if !(min_slope > 0.0) {
        return Err(Error::NonMonotoneAngle { rho, min_slope });
    }
    let g = |t: f64| t + lambda.evaluate(t, zeta) - target;
    let amp: f64 = lambda.values.iter().map(|c| c.abs()).sum();
    let (mut lo, mut hi) = (target - amp - 1e-12, target + amp + 1e-12);
    let mut t = target;
    for _ in 0..200 {
        let r = g(t);
        if r.abs() <= 0.1 * THETA_STAR_TOL {
            break;
        }
        if r < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let d = 1.0 + lambda.evaluate_d_theta(t, zeta);
        let newton = t - r / d;
        t = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * (1.0 + t.abs()) {
            break;
        }
    }
    let residual = g(t);
    if !(residual.abs() <= THETA_STAR_TOL) {
        return Err(Error::NonMonotoneAngle {
            rho,
            min_slope: residual,
        });
    }
    Ok(t)
}

/// One emitted contour point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourPoint {
    pub target: f64,
    pub rho: f64,
    pub theta: f64,
    pub r: f64,
    pub z: f64,
    /// `theta + lambda - target` at emission.
    pub residual: f64,
}

/// Eight straight-field-line angles equally spaced in `[0, 2 pi)`.
pub fn default_theta_star_targets() -> Vec<f64> {
    (0..8).map(|k| k as f64 * PI / 4.0).collect()
}

/// 33 radii from the axis to the boundary.
pub fn default_contour_radii() -> Vec<f64> {
    (0..=32).map(|k| k as f64 / 32.0).collect()
}

/// Curves of constant straight-field-line angle from the axis outwards.
pub fn theta_star_contours(
    params: &NetParams,
    input: &EquilibriumInput,
    targets: &[f64],
    zeta: f64,
    radii: &[f64],
) -> Result<Vec<ContourPoint>> {
    let eval = ShapeEvaluator::new(params, input)?;
    let shapes = radii
        .iter()
        .map(|&r| eval.at(r))
        .collect::<Result<Vec<_>>>()?;
    contours_on(&shapes, targets, zeta)
}

/// [`theta_star_contours`] on precomputed surface shapes.
pub fn contours_on(
    shapes: &[SurfaceShape],
    targets: &[f64],
    zeta: f64,
) -> Result<Vec<ContourPoint>> {
    let mut out = Vec::with_capacity(shapes.len() * targets.len());
    for &target in targets {
        for s in shapes {
            let theta = solve_theta_star(&s.lambda, s.rho, target, zeta)?;
            out.push(ContourPoint {
                target,
                rho: s.rho,
                theta,
                r: s.r.evaluate(theta, zeta),
                z: s.z.evaluate(theta, zeta),
                residual: theta + s.lambda.evaluate(theta, zeta) - target,
            });
        }
    }
    Ok(out)
}

pub fn contours_to_csv(points: &[ContourPoint]) -> String {
    let mut s = String::from("target,rho,theta,R,Z\n");
    for p in points {
        let _ = writeln!(
            s,
            "{:e},{},{:e},{:e},{:e}",
            p.target, p.rho, p.theta, p.r, p.z
        );
    }
    s
}

/// Machine-readable run summary written as `summary.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    /// `None` when the residual could not be evaluated.
    pub f_vol_norm: Option<f64>,
    pub termination: Option<Termination>,
    pub iterations: Option<usize>,
    pub parameter_count: usize,
    pub width: usize,
    pub modes: usize,
    pub surfaces: usize,
    pub volume: Option<f64>,
    /// `(rho, M_sp)` per collocation surface.
    pub spectral_width: Vec<(f64, f64)>,
    pub poincare_nested: Option<bool>,
    pub errors: Vec<String>,
}

/// What [`export_metrics`] writes besides the parameters themselves.
pub struct RunRecord<'a> {
    pub history: &'a [HistoryEntry],
    pub termination: Option<Termination>,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

pub fn fnorm_profile_csv(rho: &[f64], profile: &[f64]) -> String {
    let mut s = String::from("surface,rho,f_norm\n");
    for (j, (r, f)) in rho.iter().zip(profile).enumerate() {
        let _ = writeln!(s, "{j},{r},{f:e}");
    }
    s
}

pub fn history_csv(history: &[HistoryEntry]) -> String {
    let mut s = String::from("iteration,stage,loss,wall_time\n");
    for h in history {
        let _ = writeln!(
            s,
            "{},{},{:e},{:.6}",
            h.iteration,
            h.stage.as_str(),
            h.loss,
            h.wall_time
        );
    }
    s
}

/// Writes every table and `summary.json` into `dir`, creating it if needed.
///
/// Numerical failures in individual diagnostics are recorded in the summary
/// and skip only the affected file; I/O failures abort.
pub fn export_metrics(
    dir: &Path,
    params: &NetParams,
    input: &EquilibriumInput,
    grid: &CollocationGrid,
    run: &RunRecord,
) -> Result<Summary> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut errors: Vec<String> = run.error.iter().cloned().collect();

    let (f_vol_norm, volume) = match FieldState::evaluate(params, input, grid).and_then(|s| {
        let f = s.f_norm_self()?;
        Ok((f, s.volume()))
    }) {
        Ok((f, vol)) => {
            write(
                dir,
                "fnorm_profile.csv",
                &fnorm_profile_csv(&grid.rho, &f.profile),
            )?;
            (Some(f.volume), Some(vol))
        }
        Err(e) => {
            errors.push(format!("residual: {e}"));
            (None, None)
        }
    };
    write(dir, "loss_history.csv", &history_csv(run.history))?;

    let eval = ShapeEvaluator::new(params, input)?;
    let mut widths = Vec::with_capacity(grid.rho.len());
    let mut sw = String::from("surface,rho,m_sp\n");
    for (j, &rho) in grid.rho.iter().enumerate() {
        let shape = eval.at(rho)?;
        let w = spectral_width(&shape.r, &shape.z)?;
        let _ = writeln!(sw, "{j},{rho},{w:e}");
        widths.push((rho, w));
    }
    write(dir, "spectral_width.csv", &sw)?;

    let section = poincare_section(
        params,
        input,
        0.0,
        &default_surfaces(),
        DEFAULT_THETA_SAMPLES,
    )?;
    let nested = section.is_nested();
    if !nested {
        errors.push("Poincaré cross sections are not nested".into());
    }
    write(dir, "poincare.csv", &section.to_csv())?;

    match theta_star_contours(
        params,
        input,
        &default_theta_star_targets(),
        0.0,
        &default_contour_radii(),
    ) {
        Ok(points) => write(dir, "theta_star.csv", &contours_to_csv(&points))?,
        Err(e) => errors.push(format!("theta* contours: {e}")),
    }

    let summary = Summary {
        f_vol_norm,
        termination: run.termination,
        iterations: run.iterations,
        parameter_count: params.values.len(),
        width: params.layout.width,
        modes: params.layout.modes,
        surfaces: grid.rho.len(),
        volume,
        spectral_width: widths,
        poincare_nested: Some(nested),
        errors,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(dir, "summary.json", &(json + "\n"))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netfield::{init_params, NetLayout, Polynomial};
    use crate::spectral::{ModeSet, Parity};
    use proptest::prelude::*;

    fn zero_params(input: &EquilibriumInput, width: usize) -> NetParams {
        NetParams::zeros(NetLayout {
            width,
            modes: input.mode_count(),
        })
    }

    #[test]
    fn dshape_boundary_points() {
        let input = EquilibriumInput::dshape(11);
        let p = init_params(&input, 4, 0).unwrap();
        let sec = poincare_section(&p, &input, 0.0, &[1.0], 4).unwrap();
        let line = &sec.surfaces[0].1;
        assert_eq!(line.len(), 5);
        assert!((line[0].1 - 2.616).abs() < 1e-12 && line[0].2.abs() < 1e-12);
        assert!((line[1].1 - 3.404).abs() < 1e-12 && (line[1].2 - 1.47).abs() < 1e-12);
        assert_eq!((line[4].1, line[4].2), (line[0].1, line[0].2));
    }

    #[test]
    fn untrained_surfaces_are_scaled_boundary() {
        let input = EquilibriumInput::dshape(5);
        let p = zero_params(&input, 3);
        let sec = poincare_section(&p, &input, 0.0, &default_surfaces(), 64).unwrap();
        let b = &sec.surfaces.last().unwrap().1;
        // m >= 1 modes scale as rho^m; the D-shape boundary has m = 1, 2
        let br = input.boundary_r().unwrap();
        let bz = input.boundary_z().unwrap();
        for (rho, line) in &sec.surfaces {
            for (k, &(t, r, z)) in line.iter().enumerate() {
                let er = 3.51
                    + rho * br.get(1, 0) * t.cos()
                    + rho * rho * br.get(2, 0) * (2.0 * t).cos();
                let ez = rho * bz.get(1, 0) * t.sin() + rho * rho * bz.get(2, 0) * (2.0 * t).sin();
                assert!(
                    (r - er).abs() < 1e-12 && (z - ez).abs() < 1e-12,
                    "rho {rho} k {k}"
                );
            }
        }
        assert!((b[0].1 - 2.616).abs() < 1e-12);
        assert!(sec.is_nested());
    }

    #[test]
    fn csv_schema() {
        let input = EquilibriumInput::dshape(5);
        let p = zero_params(&input, 2);
        let sec = poincare_section(&p, &input, 0.0, &[0.5, 1.0], 16).unwrap();
        let csv = sec.to_csv();
        assert!(csv.ends_with('\n'));
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[0], "surface,rho,theta,R,Z");
        assert_eq!(rows.len(), 1 + 2 * 17);
        assert!(rows.iter().all(|r| r.split(',').count() == 5));
    }

    #[test]
    fn empty_surface_list_rejected() {
        let input = EquilibriumInput::dshape(5);
        let p = zero_params(&input, 2);
        assert!(poincare_section(&p, &input, 0.0, &[], 16).is_err());
        assert!(poincare_section(&p, &input, 0.0, &[0.0, 1.0], 16).is_err());
        assert!(poincare_section(&p, &input, 0.0, &[0.5, 1.5], 16).is_err());
    }

    fn sine_lambda(amp: f64) -> SurfaceCoefficients {
        let ms = ModeSet::new(2, 0, 1, Parity::Sine).unwrap();
        let mut c = SurfaceCoefficients::zeros(ms);
        c.set(1, 0, amp).unwrap();
        c
    }

    #[test]
    fn theta_star_fixed_points() {
        let l = sine_lambda(0.1);
        assert_eq!(solve_theta_star(&l, 0.5, 0.0, 0.0).unwrap(), 0.0);
        let t = solve_theta_star(&sine_lambda(0.0), 0.5, 1.234, 0.0).unwrap();
        assert!((t - 1.234).abs() <= 1e-15);
    }

    #[test]
    fn non_monotone_lambda_rejected() {
        let l = sine_lambda(1.5);
        assert!(matches!(
            solve_theta_star(&l, 0.3, 1.0, 0.0),
            Err(Error::NonMonotoneAngle { .. })
        ));
    }

    #[test]
    fn zero_field_profile_is_zero() {
        let mut input = EquilibriumInput::dshape(3);
        input.toroidal_flux = 0.0;
        input.pressure = Polynomial::new(vec![0.0]);
        let p = init_params(&EquilibriumInput::dshape(3), 2, 1).unwrap();
        let grid =
            CollocationGrid::midpoints(4, crate::spectral::AngularGrid::uniform(12, 1, 1).unwrap())
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let run = RunRecord {
            history: &[],
            termination: None,
            iterations: None,
            error: None,
        };
        let s = export_metrics(dir.path(), &p, &input, &grid, &run).unwrap();
        assert_eq!(s.f_vol_norm, Some(0.0));
        let csv = std::fs::read_to_string(dir.path().join("fnorm_profile.csv")).unwrap();
        for row in csv.lines().skip(1) {
            assert_eq!(row.rsplit(',').next().unwrap().parse::<f64>().unwrap(), 0.0);
        }
        for f in [
            "loss_history.csv",
            "spectral_width.csv",
            "poincare.csv",
            "theta_star.csv",
            "summary.json",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    proptest! {
        #[test]
        fn theta_star_residual_small(amp in -0.8f64..0.8, a2 in -0.05f64..0.05, target in -7.0f64..7.0, zeta in 0.0f64..6.3) {
            let ms = ModeSet::new(3, 1, 2, Parity::Sine).unwrap();
            let mut l = SurfaceCoefficients::zeros(ms);
            l.set(1, 0, amp).unwrap();
            l.set(2, 1, a2).unwrap();
            l.set(1, -1, a2).unwrap();
            let t = solve_theta_star(&l, 0.5, target, zeta).unwrap();
            prop_assert!((t + l.evaluate(t, zeta) - target).abs() <= THETA_STAR_TOL);
        }
    }
}
