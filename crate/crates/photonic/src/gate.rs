//! Gates, programs, their text form and Gaussian simulation.
//!
//! Every gate is the time-`γ` flow of a Hamiltonian on one or two modes:
//!
//! | gate                  | Hamiltonian     | action                              |
//! |-----------------------|-----------------|-------------------------------------|
//! | `momentum_shift(γ)`   | `π`             | `φ += γ`                            |
//! | `momentum_square(γ)`  | `π²`            | `φ += 2γπ`                          |
//! | `cubic_phase(γ)`      | `φ³`            | `π −= 3γφ²`                         |
//! | `phase(θ)`            | `(φ² + π²)/2`   | `φ + iπ ↦ e^{iθ}(φ + iπ)`           |
//! | `rotation2(θ)`        | `φ_iπ_j − φ_jπ_i` | rotates `(x_i, x_j)` for `x = φ, π` |
//! | `squeeze(r)`          | `φπ`            | `φ e^r`, `π e^{-r}`                 |
//! | `displace(δφ, δπ)`    | linear          | shifts the mean                     |

use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, DVector};
use phasenet_core::gaussian::GaussianState;

use crate::CompileError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Rotation2 { i: usize, j: usize, theta: f64 },
    Phase { i: usize, theta: f64 },
    Squeeze { i: usize, r: f64 },
    Displace { i: usize, dphi: f64, dpi: f64 },
    MomentumShift { i: usize, eps: f64 },
    MomentumSquare { i: usize, eps: f64 },
    CubicPhase { i: usize, eps: f64 },
}

impl Gate {
    pub fn kind(&self) -> &'static str {
        match self {
            Gate::Rotation2 { .. } => "ROTATION2",
            Gate::Phase { .. } => "PHASE",
            Gate::Squeeze { .. } => "SQUEEZE",
            Gate::Displace { .. } => "DISPLACE",
            Gate::MomentumShift { .. } => "MOMENTUM_SHIFT",
            Gate::MomentumSquare { .. } => "MOMENTUM_SQUARE",
            Gate::CubicPhase { .. } => "CUBIC_PHASE",
        }
    }

    pub fn modes(&self) -> Vec<usize> {
        match *self {
            Gate::Rotation2 { i, j, .. } => vec![i, j],
            Gate::Phase { i, .. }
            | Gate::Squeeze { i, .. }
            | Gate::Displace { i, .. }
            | Gate::MomentumShift { i, .. }
            | Gate::MomentumSquare { i, .. }
            | Gate::CubicPhase { i, .. } => vec![i],
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Gate::Rotation2 { theta, .. } | Gate::Phase { theta, .. } => vec![theta],
            Gate::Squeeze { r, .. } => vec![r],
            Gate::Displace { dphi, dpi, .. } => vec![dphi, dpi],
            Gate::MomentumShift { eps, .. } | Gate::MomentumSquare { eps, .. } | Gate::CubicPhase { eps, .. } => {
                vec![eps]
            }
        }
    }

    /// True when every parameter is below `tol` in magnitude.
    pub fn is_trivial(&self, tol: f64) -> bool {
        self.params().iter().all(|p| p.abs() < tol)
    }

    pub fn is_gaussian(&self) -> bool {
        !matches!(self, Gate::CubicPhase { .. })
    }

    /// The same flow run backwards.
    pub fn inverse(&self) -> Gate {
        match *self {
            Gate::Rotation2 { i, j, theta } => Gate::Rotation2 { i, j, theta: -theta },
            Gate::Phase { i, theta } => Gate::Phase { i, theta: -theta },
            Gate::Squeeze { i, r } => Gate::Squeeze { i, r: -r },
            Gate::Displace { i, dphi, dpi } => Gate::Displace { i, dphi: -dphi, dpi: -dpi },
            Gate::MomentumShift { i, eps } => Gate::MomentumShift { i, eps: -eps },
            Gate::MomentumSquare { i, eps } => Gate::MomentumSquare { i, eps: -eps },
            Gate::CubicPhase { i, eps } => Gate::CubicPhase { i, eps: -eps },
        }
    }

    /// Linear part of a Gaussian gate on `modes` modes (`None` for cubic).
    pub fn symplectic(&self, modes: usize) -> Option<DMatrix<f64>> {
        let m = modes;
        let mut s = DMatrix::identity(2 * m, 2 * m);
        match *self {
            Gate::Rotation2 { i, j, theta } => {
                let (sn, c) = theta.sin_cos();
                for off in [0, m] {
                    s[(off + i, off + i)] = c;
                    s[(off + i, off + j)] = -sn;
                    s[(off + j, off + i)] = sn;
                    s[(off + j, off + j)] = c;
                }
            }
            Gate::Phase { i, theta } => {
                let (sn, c) = theta.sin_cos();
                s[(i, i)] = c;
                s[(i, m + i)] = -sn;
                s[(m + i, i)] = sn;
                s[(m + i, m + i)] = c;
            }
            Gate::Squeeze { i, r } => {
                s[(i, i)] = r.exp();
                s[(m + i, m + i)] = (-r).exp();
            }
            Gate::MomentumSquare { i, eps } => s[(i, m + i)] = 2.0 * eps,
            Gate::Displace { .. } | Gate::MomentumShift { .. } => {}
            Gate::CubicPhase { .. } => return None,
        }
        Some(s)
    }

    /// Constant shift of a Gaussian gate on `modes` modes.
    pub fn shift(&self, modes: usize) -> DVector<f64> {
        let mut v = DVector::zeros(2 * modes);
        match *self {
            Gate::Displace { i, dphi, dpi } => {
                v[i] = dphi;
                v[modes + i] = dpi;
            }
            Gate::MomentumShift { i, eps } => v[i] = eps,
            _ => {}
        }
        v
    }

    /// Exact classical flow of the gate on one phase-space point.
    pub fn apply_point(&self, z: &mut [f64]) {
        let m = z.len() / 2;
        match *self {
            Gate::CubicPhase { i, eps } => z[m + i] -= 3.0 * eps * z[i] * z[i],
            Gate::MomentumShift { i, eps } => z[i] += eps,
            Gate::Displace { i, dphi, dpi } => {
                z[i] += dphi;
                z[m + i] += dpi;
            }
            _ => {
                let s = self.symplectic(m).expect("non-cubic gates are linear");
                let out = s * DVector::from_column_slice(z);
                z.copy_from_slice(out.as_slice());
            }
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let modes: Vec<String> = self.modes().iter().map(|m| m.to_string()).collect();
        let params: Vec<String> = self.params().iter().map(|p| format_float(*p)).collect();
        write!(f, "{} {} {}", self.kind(), modes.join(","), params.join(","))
    }
}

/// Shortest-exact is not needed; 17 significant digits round-trip every f64.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Linear,
    Nonlinear,
}

impl Source {
    fn as_str(self) -> &'static str {
        match self {
            Source::Linear => "linear",
            Source::Nonlinear => "nonlinear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgramMeta {
    pub source: Source,
    pub k: usize,
    pub eps: f64,
    pub m_reps: usize,
}

impl ProgramMeta {
    pub fn linear() -> Self {
        Self { source: Source::Linear, k: 0, eps: 0.0, m_reps: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateProgram {
    pub modes: usize,
    pub gates: Vec<Gate>,
    pub meta: ProgramMeta,
}

/// Gate counts before and after dropping zero-parameter gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateCounts {
    pub raw: usize,
    pub pruned: usize,
}

pub const PRUNE_TOL: f64 = 1e-14;

impl GateProgram {
    pub fn new(modes: usize, gates: Vec<Gate>, meta: ProgramMeta) -> Result<Self, CompileError> {
        let p = Self { modes, gates, meta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        if self.modes == 0 {
            return Err(CompileError::Invalid("a program needs at least one mode".into()));
        }
        for (idx, g) in self.gates.iter().enumerate() {
            if let Some(&bad) = g.modes().iter().find(|&&i| i >= self.modes) {
                return Err(CompileError::ModeRange { index: idx, mode: bad, modes: self.modes });
            }
            if let Gate::Rotation2 { i, j, .. } = g {
                if i == j {
                    return Err(CompileError::Invalid(format!("gate {idx} rotates mode {i} with itself")));
                }
            }
            if g.params().iter().any(|p| !p.is_finite()) {
                return Err(CompileError::Invalid(format!("gate {idx} has a non-finite parameter")));
            }
            if self.meta.source == Source::Linear && !g.is_gaussian() {
                return Err(CompileError::Invalid(format!("linear program contains {} at gate {idx}", g.kind())));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn count(&self, kind: &str) -> usize {
        self.gates.iter().filter(|g| g.kind() == kind).count()
    }

    /// Drop gates whose parameters are all below [`PRUNE_TOL`].
    pub fn pruned(&self) -> (Self, GateCounts) {
        let gates: Vec<Gate> = self.gates.iter().copied().filter(|g| !g.is_trivial(PRUNE_TOL)).collect();
        let counts = GateCounts { raw: self.gates.len(), pruned: gates.len() };
        (Self { modes: self.modes, gates, meta: self.meta }, counts)
    }

    /// Net affine map `z ↦ S z + ξ` of a Gaussian program.
    pub fn affine_map(&self) -> Result<(DMatrix<f64>, DVector<f64>), CompileError> {
        let n = 2 * self.modes;
        let mut s = DMatrix::identity(n, n);
        let mut xi = DVector::zeros(n);
        for (idx, g) in self.gates.iter().enumerate() {
            let gs = g.symplectic(self.modes).ok_or(CompileError::UnsupportedGate { index: idx, kind: g.kind() })?;
            s = &gs * s;
            xi = &gs * xi + g.shift(self.modes);
        }
        Ok((s, xi))
    }

    /// Run the program classically on a single phase-space point.
    pub fn apply_point(&self, z: &mut [f64]) {
        for g in &self.gates {
            g.apply_point(z);
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "MODES {}; SOURCE {}; K {}; EPS {}; M_REPS {}",
            self.modes,
            self.meta.source.as_str(),
            self.meta.k,
            format_float(self.meta.eps),
            self.meta.m_reps
        );
        for g in &self.gates {
            let _ = writeln!(out, "{g}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CompileError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(CompileError::Parse { line: 1, msg: "empty program".into() })?;
        let mut modes = None;
        let mut meta = ProgramMeta::linear();
        for field in header.split(';') {
            let mut it = field.split_whitespace();
            let (key, val) = match (it.next(), it.next()) {
                (Some(k), Some(v)) => (k, v),
                _ => return Err(CompileError::Parse { line: 1, msg: format!("bad header field `{field}`") }),
            };
            let perr = |what: &str| CompileError::Parse { line: 1, msg: format!("bad {what} `{val}`") };
            match key {
                "MODES" => modes = Some(val.parse().map_err(|_| perr("mode count"))?),
                "SOURCE" => {
                    meta.source = match val {
                        "linear" => Source::Linear,
                        "nonlinear" => Source::Nonlinear,
                        _ => return Err(perr("source")),
                    }
                }
                "K" => meta.k = val.parse().map_err(|_| perr("K"))?,
                "EPS" => meta.eps = val.parse().map_err(|_| perr("EPS"))?,
                "M_REPS" => meta.m_reps = val.parse().map_err(|_| perr("M_REPS"))?,
                other => return Err(CompileError::Parse { line: 1, msg: format!("unknown header key `{other}`") }),
            }
        }
        let modes = modes.ok_or(CompileError::Parse { line: 1, msg: "missing MODES".into() })?;
        let mut gates = Vec::new();
        for (ln, line) in lines {
            gates.push(parse_gate(line).map_err(|msg| CompileError::Parse { line: ln + 1, msg })?);
        }
        Self::new(modes, gates, meta)
    }
}

fn parse_gate(line: &str) -> Result<Gate, String> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(format!("expected `KIND modes params`, got `{line}`"));
    }
    let modes: Vec<usize> =
        parts[1].split(',').map(|s| s.parse().map_err(|_| format!("bad mode `{s}`"))).collect::<Result<_, _>>()?;
    let params: Vec<f64> =
        parts[2].split(',').map(|s| s.parse().map_err(|_| format!("bad parameter `{s}`"))).collect::<Result<_, _>>()?;
    let shape = |nm: usize, np: usize| {
        if modes.len() == nm && params.len() == np {
            Ok(())
        } else {
            Err(format!("{} takes {nm} mode(s) and {np} parameter(s)", parts[0]))
        }
    };
    let g = match parts[0] {
        "ROTATION2" => {
            shape(2, 1)?;
            Gate::Rotation2 { i: modes[0], j: modes[1], theta: params[0] }
        }
        "PHASE" => {
            shape(1, 1)?;
            Gate::Phase { i: modes[0], theta: params[0] }
        }
        "SQUEEZE" => {
            shape(1, 1)?;
            Gate::Squeeze { i: modes[0], r: params[0] }
        }
        "DISPLACE" => {
            shape(1, 2)?;
            Gate::Displace { i: modes[0], dphi: params[0], dpi: params[1] }
        }
        "MOMENTUM_SHIFT" => {
            shape(1, 1)?;
            Gate::MomentumShift { i: modes[0], eps: params[0] }
        }
        "MOMENTUM_SQUARE" => {
            shape(1, 1)?;
            Gate::MomentumSquare { i: modes[0], eps: params[0] }
        }
        "CUBIC_PHASE" => {
            shape(1, 1)?;
            Gate::CubicPhase { i: modes[0], eps: params[0] }
        }
        other => return Err(format!("unknown gate `{other}`")),
    };
    Ok(g)
}

/// Fold a Gaussian program over a state, gate by gate.
pub fn simulate_gaussian(program: &GateProgram, state: &GaussianState) -> Result<GaussianState, CompileError> {
    if state.modes() != program.modes {
        return Err(CompileError::Invalid(format!(
            "program acts on {} modes, state has {}",
            program.modes,
            state.modes()
        )));
    }
    let mut st = state.clone();
    for (idx, g) in program.gates.iter().enumerate() {
        let s = g.symplectic(program.modes).ok_or(CompileError::UnsupportedGate { index: idx, kind: g.kind() })?;
        st = st.apply_symplectic(&s)?.displace(&g.shift(program.modes))?;
    }
    Ok(st)
}
