//! Run configuration: a JSON file with flat, documented fields; any CLI flag
//! overrides the corresponding field. The same struct is embedded verbatim
//! in every output file as provenance.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use lrorder::couplings::ResumParams;
use lrorder::geometry::{builtin_lattice, LatticeSpec};
use lrorder::models::{Engine, ExtentSpec, GridSpec, SweepAxis, SweepSpec};
use lrorder::optimizer::{Ensemble, SearchBudget};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Builtin lattice name (triangular | kagome_site | kagome_link) or a
    /// path to a JSON file holding a full lattice spec.
    pub lattice: String,
    pub alpha: f64,
    /// "grand_canonical" | "canonical" (the latter needs `f`).
    pub ensemble: String,
    /// Canonical filling as "p/q" (or a bare integer).
    pub f: Option<String>,
    /// Sweep axis: "V/U" | "delta/V".
    pub axis: String,
    /// Basis-vector window: B<m> (hexagonal) or A<m> (square).
    pub extent: String,
    pub grid: Option<GridConfig>,
    /// Single parameter point (ground-state subcommand).
    pub x: Option<f64>,
    /// Bisect phase boundaries to ≤ step/100.
    pub refine: bool,
    pub resum_k: Vec<u32>,
    pub fit_points: usize,
    pub resum_tol: f64,
    pub exhaustive_limit: u128,
    pub restarts: u32,
    pub scramble_moves: Option<usize>,
    pub seed: u64,
    pub allow_unconverged: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let engine = Engine::default();
        let budget = SearchBudget::default();
        Self {
            lattice: "triangular".into(),
            alpha: 3.0,
            ensemble: "grand_canonical".into(),
            f: None,
            axis: "delta/V".into(),
            extent: "B4".into(),
            grid: None,
            x: None,
            refine: true,
            resum_k: engine.k_schedule,
            fit_points: engine.fit_points,
            resum_tol: engine.tol_rel,
            exhaustive_limit: budget.exhaustive_limit,
            restarts: budget.restarts_without_improvement,
            scramble_moves: budget.scramble_moves,
            seed: budget.rng_seed,
            allow_unconverged: false,
        }
    }
}

/// Flag-level overrides shared by the config-driven subcommands.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub lattice: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// B<m> or A<m>, e.g. B4
    #[arg(long)]
    pub extent: Option<String>,
    /// start:stop:step
    #[arg(long)]
    pub grid: Option<String>,
    /// Single parameter point (ground-state)
    #[arg(long)]
    pub x: Option<f64>,
    /// Canonical filling p/q; switches the ensemble to canonical
    #[arg(long)]
    pub f: Option<String>,
    /// Sweep axis: V/U or delta/V
    #[arg(long)]
    pub axis: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated K cutoffs, e.g. 128,256,512,1024
    #[arg(long)]
    pub resum_k: Option<String>,
    #[arg(long)]
    pub resum_tol: Option<f64>,
    #[arg(long)]
    pub restarts: Option<u32>,
    #[arg(long)]
    pub exhaustive_limit: Option<u128>,
    #[arg(long)]
    pub allow_unconverged: bool,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn apply(&mut self, ov: &Overrides) -> Result<()> {
        if let Some(v) = &ov.lattice {
            self.lattice = v.clone();
        }
        if let Some(v) = ov.alpha {
            self.alpha = v;
        }
        if let Some(v) = &ov.extent {
            self.extent = v.clone();
        }
        if let Some(v) = &ov.grid {
            self.grid = Some(parse_grid(v)?);
        }
        if let Some(v) = ov.x {
            self.x = Some(v);
        }
        if let Some(v) = &ov.f {
            self.f = Some(v.clone());
            self.ensemble = "canonical".into();
        }
        if let Some(v) = &ov.axis {
            self.axis = v.clone();
        }
        if let Some(v) = ov.seed {
            self.seed = v;
        }
        if let Some(v) = &ov.resum_k {
            self.resum_k = parse_schedule(v)?;
        }
        if let Some(v) = ov.resum_tol {
            self.resum_tol = v;
        }
        if let Some(v) = ov.restarts {
            self.restarts = v;
        }
        if let Some(v) = ov.exhaustive_limit {
            self.exhaustive_limit = v;
        }
        if ov.allow_unconverged {
            self.allow_unconverged = true;
        }
        Ok(())
    }

    pub fn engine(&self) -> Engine {
        Engine {
            k_schedule: self.resum_k.clone(),
            fit_points: self.fit_points,
            tol_rel: self.resum_tol,
            budget: SearchBudget {
                exhaustive_limit: self.exhaustive_limit,
                restarts_without_improvement: self.restarts,
                scramble_moves: self.scramble_moves,
                rng_seed: self.seed,
            },
            allow_unconverged: self.allow_unconverged,
        }
    }

    pub fn lattice_spec(&self) -> Result<LatticeSpec<f64>> {
        match builtin_lattice::<f64>(&self.lattice) {
            Ok(spec) => Ok(spec),
            // not a builtin name: treat as a path to a custom lattice file
            Err(_) if Path::new(&self.lattice).exists() => {
                let text = fs::read_to_string(&self.lattice)
                    .with_context(|| format!("reading lattice {}", self.lattice))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing lattice {}", self.lattice))
            }
            Err(e) => Err(anyhow!(e)),
        }
    }

    pub fn extent(&self) -> Result<ExtentSpec> {
        parse_extent(&self.extent)
    }

    pub fn ensemble(&self) -> Result<Ensemble> {
        match self.ensemble.as_str() {
            "grand_canonical" => Ok(Ensemble::GrandCanonical),
            "canonical" => {
                let f = self
                    .f
                    .as_deref()
                    .ok_or_else(|| anyhow!("canonical ensemble needs a filling f"))?;
                Ok(Ensemble::Canonical(parse_filling(f)?))
            }
            other => bail!("unknown ensemble {other:?} (grand_canonical | canonical)"),
        }
    }

    pub fn axis(&self) -> Result<SweepAxis> {
        match self.axis.as_str() {
            "V/U" => Ok(SweepAxis::VOverU),
            "delta/V" => Ok(SweepAxis::DeltaOverV),
            other => bail!("unknown axis {other:?} (V/U | delta/V)"),
        }
    }

    pub fn resum_params(&self) -> Result<ResumParams> {
        let params = ResumParams {
            alpha: self.alpha,
            k_schedule: self.resum_k.clone(),
            fit_points: self.fit_points,
            tol_rel: self.resum_tol,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec<f64>> {
        let grid = self.grid.ok_or_else(|| anyhow!("sweep needs a grid"))?;
        Ok(SweepSpec {
            lattice: self.lattice_spec()?,
            alpha: self.alpha,
            ensemble: self.ensemble()?,
            axis: self.axis()?,
            grid: GridSpec::new(grid.start, grid.stop, grid.step),
            refine: self.refine,
            extent: self.extent()?,
        })
    }

    /// Spec for a single-point run: a degenerate one-point grid at x.
    pub fn point_spec(&self) -> Result<(SweepSpec<f64>, f64)> {
        let x = self.x.ok_or_else(|| anyhow!("ground-state needs x"))?;
        Ok((
            SweepSpec {
                lattice: self.lattice_spec()?,
                alpha: self.alpha,
                ensemble: self.ensemble()?,
                axis: self.axis()?,
                grid: GridSpec::new(x, x, 1.0),
                refine: false,
                extent: self.extent()?,
            },
            x,
        ))
    }
}

pub fn parse_extent(text: &str) -> Result<ExtentSpec> {
    let (kind, digits) = text.split_at(text.len().min(1));
    let m: i64 = digits
        .parse()
        .map_err(|_| anyhow!("extent {text:?} is not B<m> or A<m>"))?;
    if m < 0 {
        bail!("extent {text:?}: m must be ≥ 0");
    }
    match kind {
        "B" => Ok(ExtentSpec::B(m)),
        "A" => Ok(ExtentSpec::A(m)),
        _ => bail!("extent {text:?} is not B<m> or A<m>"),
    }
}

pub fn parse_grid(text: &str) -> Result<GridConfig> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        bail!("grid {text:?} is not start:stop:step");
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse().map_err(|_| anyhow!("grid {text:?}: bad number {p:?}")))
        .collect::<Result<_>>()?;
    Ok(GridConfig {
        start: nums[0],
        stop: nums[1],
        step: nums[2],
    })
}

pub fn parse_schedule(text: &str) -> Result<Vec<u32>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| anyhow!("K schedule: bad cutoff {p:?}"))
        })
        .collect()
}

pub fn parse_filling(text: &str) -> Result<Ratio<i64>> {
    let ratio = match text.split_once('/') {
        Some((num, den)) => {
            let n: i64 = num.trim().parse().context("filling numerator")?;
            let d: i64 = den.trim().parse().context("filling denominator")?;
            if d == 0 {
                bail!("filling {text:?}: zero denominator");
            }
            Ratio::new(n, d)
        }
        None => Ratio::from_integer(text.trim().parse::<i64>().context("filling")?),
    };
    if ratio < Ratio::from_integer(0) {
        bail!("filling {text:?} must be ≥ 0");
    }
    Ok(ratio)
}
