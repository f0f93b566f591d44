//! Sectioned plain-text case files.
//!
//! ```text
//! [global]
//! psi_b = 1.0      # total toroidal flux through the boundary, Wb
//! n_fp = 1
//! M = 11
//! N = 0
//!
//! [boundary]
//! # m  n   R_b     Z_b
//!   0  0   3.51    0.0
//!   1  0  -1.0     1.47
//!
//! [axis]           # optional
//! # n  R_a  Z_a
//!   0  3.6  0.0
//!
//! [profiles]       # polynomials in s = rho^2, ascending powers
//! pressure = 1600 -3200 1600
//! iota = 1 -0.67
//!
//! [solver]         # optional overrides
//! width = 8
//! n_rho = 50
//! ```
//!
//! Toroidal mode numbers follow the `m theta - n n_fp zeta` convention. A
//! VMEC `rbc(n, m)` entry maps to row `m n` here with the same sign of `n`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::netfield::{AxisMode, BoundaryMode, EquilibriumInput, Polynomial};
use crate::solver::SolverConfig;

/// Name of the built-in D-shaped tokamak case.
pub const DSHAPE: &str = "dshape";

pub const DSHAPE_CASE: &str = "\
# D-shaped tokamak
[global]
psi_b = 1.0
n_fp = 1
M = 11
N = 0

[boundary]
# m n R_b Z_b
0 0 3.51 0.0
1 0 -1.0 1.47
2 0 0.106 0.16

[profiles]
pressure = 1600 -3200 1600
iota = 1 -0.67
";

/// A parsed case: the physics input, solver settings and the source text.
#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub input: EquilibriumInput,
    pub solver: SolverConfig,
}

/// Reads a case file, or the built-in case when `path` is `dshape` and no
/// file of that name exists.
pub fn parse_case(path: &Path) -> Result<Case> {
    if path.as_os_str() == DSHAPE && !path.exists() {
        return parse_case_str(DSHAPE_CASE, DSHAPE);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_case_str(&text, &path.display().to_string())
}

struct Parser<'a> {
    label: &'a str,
}

impl Parser<'_> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.label.to_string(),
            line,
            msg: msg.into(),
        }
    }

    fn num<T: std::str::FromStr>(&self, line: usize, tok: &str, what: &str) -> Result<T> {
        tok.parse()
            .map_err(|_| self.err(line, format!("cannot parse {what} from '{tok}'")))
    }

    fn float(&self, line: usize, tok: &str, what: &str) -> Result<f64> {
        let v: f64 = self.num(line, tok, what)?;
        if !v.is_finite() {
            return Err(self.err(line, format!("{what} must be finite")));
        }
        Ok(v)
    }
}

#[derive(PartialEq, Clone, Copy)]
enum Section {
    None,
    Global,
    Boundary,
    Axis,
    Profiles,
    Solver,
}

/// Parses case text; `label` names the source in error messages.
pub fn parse_case_str(text: &str, label: &str) -> Result<Case> {
    let p = Parser { label };
    let mut section = Section::None;
    let mut seen_sections = Vec::new();
    let mut global: HashMap<String, (usize, String)> = HashMap::new();
    let mut profiles: HashMap<String, (usize, String)> = HashMap::new();
    let mut solver: Vec<(usize, String, String)> = Vec::new();
    let mut boundary: Vec<(usize, BoundaryMode)> = Vec::new();
    let mut axis: Vec<(usize, AxisMode)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| p.err(ln, "unterminated section header"))?
                .trim();
            section = match name {
                "global" => Section::Global,
                "boundary" => Section::Boundary,
                "axis" => Section::Axis,
                "profiles" => Section::Profiles,
                "solver" => Section::Solver,
                other => {
                    return Err(p.err(
                        ln,
                        format!("unknown section [{other}]; expected global, boundary, axis, profiles or solver"),
                    ))
                }
            };
            if seen_sections.contains(&name.to_string()) {
                return Err(p.err(ln, format!("section [{name}] appears twice")));
            }
            seen_sections.push(name.to_string());
            continue;
        }
        match section {
            Section::None => return Err(p.err(ln, "content before the first section header")),
            Section::Global | Section::Profiles | Section::Solver => {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| p.err(ln, "expected 'key = value'"))?;
                let (k, v) = (k.trim().to_string(), v.trim().to_string());
                let known: &[&str] = match section {
                    Section::Global => &["psi_b", "n_fp", "M", "N"],
                    Section::Profiles => &["pressure", "iota"],
                    _ => SOLVER_KEYS,
                };
                if !known.contains(&k.as_str()) {
                    return Err(p.err(
                        ln,
                        format!("unknown key '{k}'; valid keys: {}", known.join(", ")),
                    ));
                }
                let dup = match section {
                    Section::Global => global.insert(k.clone(), (ln, v)).is_some(),
                    Section::Profiles => profiles.insert(k.clone(), (ln, v)).is_some(),
                    _ => {
                        let d = solver.iter().any(|(_, key, _)| *key == k);
                        solver.push((ln, k.clone(), v));
                        d
                    }
                };
                if dup {
                    return Err(p.err(ln, format!("duplicate key '{k}'")));
                }
            }
            Section::Boundary => {
                let t: Vec<&str> = line.split_whitespace().collect();
                if t.len() != 4 {
                    return Err(p.err(
                        ln,
                        format!("boundary row needs 4 fields (m n R_b Z_b), got {}", t.len()),
                    ));
                }
                boundary.push((
                    ln,
                    BoundaryMode {
                        m: p.num(ln, t[0], "m")?,
                        n: p.num(ln, t[1], "n")?,
                        r: p.float(ln, t[2], "R_b")?,
                        z: p.float(ln, t[3], "Z_b")?,
                    },
                ));
            }
            Section::Axis => {
                let t: Vec<&str> = line.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(p.err(
                        ln,
                        format!("axis row needs 3 fields (n R_a Z_a), got {}", t.len()),
                    ));
                }
                axis.push((
                    ln,
                    AxisMode {
                        n: p.num(ln, t[0], "n")?,
                        r: p.float(ln, t[1], "R_a")?,
                        z: p.float(ln, t[2], "Z_a")?,
                    },
                ));
            }
        }
    }

    let last = text.lines().count().max(1);
    if !seen_sections.iter().any(|s| s == "global") {
        return Err(p.err(last, "missing [global] section"));
    }
    let get = |map: &HashMap<String, (usize, String)>, key: &str, sect: &str| {
        map.get(key)
            .cloned()
            .ok_or_else(|| p.err(last, format!("missing '{key}' in [{sect}]")))
    };
    let (ln, v) = get(&global, "psi_b", "global")?;
    let psi_b = p.float(ln, &v, "psi_b")?;
    let (ln, v) = get(&global, "M", "global")?;
    let m_count: u32 = p.num(ln, &v, "M")?;
    let n_max: u32 = match global.get("N") {
        Some((ln, v)) => p.num(*ln, v, "N")?,
        None => 0,
    };
    let nfp: u32 = match global.get("n_fp") {
        Some((ln, v)) => p.num(*ln, v, "n_fp")?,
        None => 1,
    };
    if m_count == 0 || nfp == 0 {
        return Err(p.err(ln, "M and n_fp must be >= 1"));
    }
    if psi_b == 0.0 {
        let ln = global["psi_b"].0;
        return Err(p.err(ln, "psi_b must be non-zero"));
    }

    let poly = |key: &str| -> Result<Polynomial> {
        let (ln, v) = get(&profiles, key, "profiles")?;
        let coeffs = v
            .split_whitespace()
            .map(|t| p.float(ln, t, key))
            .collect::<Result<Vec<_>>>()?;
        if coeffs.is_empty() {
            return Err(p.err(ln, format!("'{key}' needs at least one coefficient")));
        }
        Ok(Polynomial::new(coeffs))
    };
    let pressure = poly("pressure")?;
    let iota = poly("iota")?;

    if boundary.is_empty() {
        return Err(p.err(last, "missing [boundary] rows"));
    }
    for (ln, b) in &boundary {
        if b.m >= m_count {
            return Err(p.err(
                *ln,
                format!("boundary mode m={} exceeds M-1={}", b.m, m_count - 1),
            ));
        }
        if b.n.unsigned_abs() > n_max {
            return Err(p.err(*ln, format!("boundary mode n={} exceeds N={n_max}", b.n)));
        }
        if b.m == 0 && b.n < 0 {
            return Err(p.err(*ln, "m = 0 rows need n >= 0"));
        }
        if boundary
            .iter()
            .any(|(l2, b2)| l2 < ln && (b2.m, b2.n) == (b.m, b.n))
        {
            return Err(p.err(*ln, format!("duplicate boundary mode ({}, {})", b.m, b.n)));
        }
    }
    for (ln, a) in &axis {
        if a.n > n_max {
            return Err(p.err(*ln, format!("axis mode n={} exceeds N={n_max}", a.n)));
        }
    }

    let input = EquilibriumInput {
        m_count,
        n_max,
        nfp,
        boundary: boundary.into_iter().map(|(_, b)| b).collect(),
        axis: if seen_sections.iter().any(|s| s == "axis") {
            Some(axis.into_iter().map(|(_, a)| a).collect())
        } else {
            None
        },
        pressure,
        iota,
        toroidal_flux: psi_b,
    };
    input.validate().map_err(|e| p.err(last, e.to_string()))?;

    let mut cfg = SolverConfig::default();
    for (ln, k, v) in &solver {
        apply_solver_key(&mut cfg, k, v).map_err(|m| p.err(*ln, m))?;
    }
    cfg.validate().map_err(|e| p.err(last, e.to_string()))?;
    Ok(Case { input, solver: cfg })
}

const SOLVER_KEYS: &[&str] = &[
    "width",
    "seed",
    "n_rho",
    "n_theta",
    "n_zeta",
    "eval_n_rho",
    "eval_n_theta",
    "eval_n_zeta",
    "adamw_learning_rate",
    "adamw_beta1",
    "adamw_beta2",
    "adamw_epsilon",
    "adamw_weight_decay",
    "adamw_max_iter",
    "bfgs_max_iter",
    "bfgs_c1",
    "bfgs_c2",
    "bfgs_max_line_search",
    "bfgs_memory",
    "param_tol",
    "grad_tol",
    "target_fvol",
    "target_rel_tol",
    "target_every",
    "checkpoint_every",
];

fn apply_solver_key(
    cfg: &mut SolverConfig,
    key: &str,
    value: &str,
) -> std::result::Result<(), String> {
    fn f(v: &str) -> std::result::Result<f64, String> {
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("expected a finite number, got '{v}'"))
    }
    fn u(v: &str) -> std::result::Result<usize, String> {
        v.parse()
            .map_err(|_| format!("expected a non-negative integer, got '{v}'"))
    }
    let base = cfg.grid.clone();
    let eval = || base.clone();
    match key {
        "width" => cfg.width = u(value)?,
        "seed" => {
            cfg.seed = value
                .parse()
                .map_err(|_| format!("expected an integer seed, got '{value}'"))?
        }
        "n_rho" => cfg.grid.n_rho = u(value)?,
        "n_theta" => cfg.grid.n_theta = Some(u(value)?),
        "n_zeta" => cfg.grid.n_zeta = Some(u(value)?),
        "eval_n_rho" => cfg.eval_grid.get_or_insert_with(eval).n_rho = u(value)?,
        "eval_n_theta" => cfg.eval_grid.get_or_insert_with(eval).n_theta = Some(u(value)?),
        "eval_n_zeta" => cfg.eval_grid.get_or_insert_with(eval).n_zeta = Some(u(value)?),
        "adamw_learning_rate" => cfg.adamw.learning_rate = f(value)?,
        "adamw_beta1" => cfg.adamw.beta1 = f(value)?,
        "adamw_beta2" => cfg.adamw.beta2 = f(value)?,
        "adamw_epsilon" => cfg.adamw.epsilon = f(value)?,
        "adamw_weight_decay" => cfg.adamw.weight_decay = f(value)?,
        "adamw_max_iter" => cfg.adamw.max_iter = u(value)?,
        "bfgs_max_iter" => cfg.bfgs.max_iter = u(value)?,
        "bfgs_c1" => cfg.bfgs.c1 = f(value)?,
        "bfgs_c2" => cfg.bfgs.c2 = f(value)?,
        "bfgs_max_line_search" => cfg.bfgs.max_line_search = u(value)?,
        "bfgs_memory" => cfg.bfgs.memory = u(value)?,
        "param_tol" => cfg.stop.param_tol = f(value)?,
        "grad_tol" => cfg.stop.grad_tol = f(value)?,
        "target_fvol" => cfg.stop.target_fvol = Some(f(value)?),
        "target_rel_tol" => cfg.stop.target_rel_tol = f(value)?,
        "target_every" => cfg.stop.target_every = u(value)?,
        "checkpoint_every" => cfg.checkpoint_every = u(value)?,
        other => return Err(format!("unknown solver key '{other}'")),
    }
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|c| format!("{c:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Canonical text form of a case. Floats are written in shortest
/// round-trip form, so parsing the output reproduces `case` exactly.
pub fn write_case(case: &Case) -> String {
    let (input, cfg) = (&case.input, &case.solver);
    let mut s = String::new();
    let _ = writeln!(s, "[global]");
    let _ = writeln!(s, "psi_b = {:?}", input.toroidal_flux);
    let _ = writeln!(s, "n_fp = {}", input.nfp);
    let _ = writeln!(s, "M = {}", input.m_count);
    let _ = writeln!(s, "N = {}", input.n_max);
    let _ = writeln!(s, "\n[boundary]\n# m n R_b Z_b");
    for b in &input.boundary {
        let _ = writeln!(s, "{} {} {:?} {:?}", b.m, b.n, b.r, b.z);
    }
    if let Some(axis) = &input.axis {
        let _ = writeln!(s, "\n[axis]\n# n R_a Z_a");
        for a in axis {
            let _ = writeln!(s, "{} {:?} {:?}", a.n, a.r, a.z);
        }
    }
    let _ = writeln!(s, "\n[profiles]");
    let _ = writeln!(s, "pressure = {}", join(&input.pressure.coeffs));
    let _ = writeln!(s, "iota = {}", join(&input.iota.coeffs));

    let _ = writeln!(s, "\n[solver]");
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("width", cfg.width.to_string());
    kv("seed", cfg.seed.to_string());
    kv("n_rho", cfg.grid.n_rho.to_string());
    if let Some(n) = cfg.grid.n_theta {
        kv("n_theta", n.to_string());
    }
    if let Some(n) = cfg.grid.n_zeta {
        kv("n_zeta", n.to_string());
    }
    if let Some(g) = &cfg.eval_grid {
        kv("eval_n_rho", g.n_rho.to_string());
        if let Some(n) = g.n_theta {
            kv("eval_n_theta", n.to_string());
        }
        if let Some(n) = g.n_zeta {
            kv("eval_n_zeta", n.to_string());
        }
    }
    kv(
        "adamw_learning_rate",
        format!("{:?}", cfg.adamw.learning_rate),
    );
    kv("adamw_beta1", format!("{:?}", cfg.adamw.beta1));
    kv("adamw_beta2", format!("{:?}", cfg.adamw.beta2));
    kv("adamw_epsilon", format!("{:?}", cfg.adamw.epsilon));
    kv(
        "adamw_weight_decay",
        format!("{:?}", cfg.adamw.weight_decay),
    );
    kv("adamw_max_iter", cfg.adamw.max_iter.to_string());
    kv("bfgs_max_iter", cfg.bfgs.max_iter.to_string());
    kv("bfgs_c1", format!("{:?}", cfg.bfgs.c1));
    kv("bfgs_c2", format!("{:?}", cfg.bfgs.c2));
    kv("bfgs_max_line_search", cfg.bfgs.max_line_search.to_string());
    kv("bfgs_memory", cfg.bfgs.memory.to_string());
    kv("param_tol", format!("{:?}", cfg.stop.param_tol));
    kv("grad_tol", format!("{:?}", cfg.stop.grad_tol));
    if let Some(t) = cfg.stop.target_fvol {
        kv("target_fvol", format!("{t:?}"));
    }
    kv("target_rel_tol", format!("{:?}", cfg.stop.target_rel_tol));
    kv("target_every", cfg.stop.target_every.to_string());
    kv("checkpoint_every", cfg.checkpoint_every.to_string());
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builtin_dshape() {
        let c = parse_case(Path::new(DSHAPE)).unwrap();
        assert_eq!(c.input, EquilibriumInput::dshape(11));
        assert_eq!(c.solver, SolverConfig::default());
        let r = c.input.boundary_r().unwrap();
        let z = c.input.boundary_z().unwrap();
        assert_eq!((r.get(0, 0), r.get(1, 0), r.get(2, 0)), (3.51, -1.0, 0.106));
        assert_eq!((z.get(1, 0), z.get(2, 0)), (1.47, 0.16));
    }

    #[test]
    fn round_trip_builtin() {
        let c = parse_case_str(DSHAPE_CASE, "x").unwrap();
        let again = parse_case_str(&write_case(&c), "y").unwrap();
        assert_eq!(c, again);
    }

    fn expect_line(text: &str, line: usize) -> String {
        match parse_case_str(text, "t.case") {
            Err(Error::Parse { line: l, msg, .. }) => {
                assert_eq!(l, line, "{msg}");
                msg
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn mode_exceeding_m_names_row() {
        let text = DSHAPE_CASE.replace("M = 11", "M = 2");
        let line = text
            .lines()
            .position(|l| l.starts_with("2 0 0.106"))
            .unwrap()
            + 1;
        let msg = expect_line(&text, line);
        assert!(msg.contains("m=2"));
    }

    #[test]
    fn unknown_keys_and_sections_rejected() {
        let text = DSHAPE_CASE.replace("n_fp = 1", "nfp = 1");
        let msg = expect_line(&text, 4);
        assert!(msg.contains("valid keys"));
        let text = format!("{DSHAPE_CASE}[extras]\nfoo = 1\n");
        expect_line(&text, DSHAPE_CASE.lines().count() + 1);
        let text = format!("{DSHAPE_CASE}[solver]\nlearning_rate = 1\n");
        expect_line(&text, DSHAPE_CASE.lines().count() + 2);
    }

    #[test]
    fn malformed_rows_rejected() {
        let text = DSHAPE_CASE.replace("1 0 -1.0 1.47", "1 0 -1.0");
        expect_line(&text, 11);
        let text = DSHAPE_CASE.replace("1 0 -1.0 1.47", "1 0 abc 1.47");
        expect_line(&text, 11);
        let text = DSHAPE_CASE.replace("[global]", "[globals]");
        expect_line(&text, 2);
    }

    #[test]
    fn missing_global_rejected() {
        let text: String = DSHAPE_CASE
            .lines()
            .filter(|l| {
                !l.contains("[global]") && !l.contains(" = ")
                    || l.contains("pressure")
                    || l.contains("iota")
            })
            .collect::<Vec<_>>()
            .join("\n");
        assert!(parse_case_str(&text, "t").is_err());
    }

    #[test]
    fn solver_overrides_apply() {
        let text = format!(
            "{DSHAPE_CASE}\n[solver]\nwidth = 4\nadamw_max_iter = 10\ntarget_fvol = 0.01\n"
        );
        let c = parse_case_str(&text, "t").unwrap();
        assert_eq!(c.solver.width, 4);
        assert_eq!(c.solver.adamw.max_iter, 10);
        assert_eq!(c.solver.stop.target_fvol, Some(0.01));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            parse_case(Path::new("no/such/file.case")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip_random_inputs(
            r0 in 2.0f64..10.0,
            a in 0.1f64..1.0,
            kappa in 0.5f64..2.0,
            small in -0.05f64..0.05,
            nfp in 1u32..6,
            p in proptest::collection::vec(-1e4f64..1e4, 1..4),
            iota in proptest::collection::vec(-2.0f64..2.0, 1..4),
            flux in 0.01f64..10.0,
            width in 1usize..20,
            lr in 1e-5f64..1e-1,
            with_axis in any::<bool>(),
        ) {
            let input = EquilibriumInput {
                m_count: 4,
                n_max: 1,
                nfp,
                boundary: vec![
                    BoundaryMode { m: 0, n: 0, r: r0, z: 0.0 },
                    BoundaryMode { m: 1, n: 0, r: a, z: a * kappa },
                    BoundaryMode { m: 1, n: 1, r: small, z: -small },
                    BoundaryMode { m: 0, n: 1, r: small / 2.0, z: small },
                ],
                axis: with_axis.then(|| vec![AxisMode { n: 0, r: r0 + small, z: 0.0 }, AxisMode { n: 1, r: small, z: 0.0 }]),
                pressure: Polynomial::new(p),
                iota: Polynomial::new(iota),
                toroidal_flux: flux,
            };
            let mut solver = SolverConfig { width, ..Default::default() };
            solver.adamw.learning_rate = lr;
            let case = Case { input, solver };
            let again = parse_case_str(&write_case(&case), "t").unwrap();
            prop_assert_eq!(case, again);
        }
    }
}
