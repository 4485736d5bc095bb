//! Named scenarios resolved from a config, with their defaults.

use phaselattice::charts::{KramersFamily, ScalingFamily, SqrtFamily};
use phaselattice::dynamics::DriftSpec;
use phaselattice::evolve::{Analytic, ConvergeSetup, Domain};

use crate::config::{check_grid, positive, ChartKind, RawConfig, ScenarioName};
use crate::CliError;

/// How the distribution domain is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainRule {
    Unbounded,
    /// The admissible interval of each axis.
    Admissible,
    /// Given by the user; rejected up front if any corner is inadmissible.
    Checked(Domain),
    /// Given by the user, then intersected with the admissible intervals.
    Clipped(Domain),
}

pub struct Scenario {
    pub name: ScenarioName,
    pub family: Box<dyn ScalingFamily + Send + Sync>,
    pub drift: DriftSpec,
    pub eps: f64,
    pub eps_grid: Vec<f64>,
    pub horizon: f64,
    pub steps: Option<usize>,
    pub report_every: usize,
    pub trim_tol: f64,
    pub start: Vec<f64>,
    pub domain: DomainRule,
    pub analytic: Option<Analytic>,
    pub axes: Vec<String>,
}

fn sized(name: &str, v: Vec<f64>, n: usize) -> Result<Vec<f64>, CliError> {
    if v.len() != n {
        return Err(CliError::Config(format!("{name} needs {n} entries, got {}", v.len())));
    }
    Ok(v)
}

fn user_domain(c: &RawConfig, n: usize) -> Result<Option<Domain>, CliError> {
    match (&c.domain_lo, &c.domain_hi, c.window) {
        (Some(lo), Some(hi), _) => {
            let (lo, hi) = (sized("domain_lo", lo.clone(), n)?, sized("domain_hi", hi.clone(), n)?);
            if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
                return Err(CliError::Config("domain_lo must be below domain_hi".into()));
            }
            Ok(Some(Domain { lo, hi }))
        }
        (None, None, Some(w)) => {
            let w = positive("window", w)?;
            Ok(Some(Domain { lo: vec![-w; n], hi: vec![w; n] }))
        }
        (None, None, None) => Ok(None),
        _ => Err(CliError::Config("domain_lo and domain_hi go together".into())),
    }
}

impl Scenario {
    pub fn from_config(c: &RawConfig) -> Result<Self, CliError> {
        let name = c.scenario.ok_or_else(|| CliError::Config("no scenario given (set scenario = ...)".into()))?;
        let h = positive("h", c.h.unwrap_or(1.0))?;
        let s0 = positive("s0", c.s0.unwrap_or(0.5))?;
        let region = positive("region", c.region.unwrap_or(2.0))?;
        let one_d = |x0: &Option<Vec<f64>>, d: f64| sized("x0", x0.clone().unwrap_or(vec![d]), 1);
        let (family, drift, start, domain, analytic, eps, grid): (Box<dyn ScalingFamily + Send + Sync>, _, _, _, _, _, _) = match name {
            ScenarioName::Diffusion1d => (
                Box::new(SqrtFamily::lightcone(h)?),
                DriftSpec::Free(1),
                one_d(&c.x0, 0.0)?,
                DomainRule::Unbounded,
                Some(Analytic::HeatKernel { h, s0, region }),
                0.05,
                vec![0.1, 0.05, 0.025],
            ),
            ScenarioName::Smoluchowski => {
                let gamma = c.gamma.unwrap_or(0.5);
                (
                    Box::new(SqrtFamily::lightcone(h)?),
                    DriftSpec::constant_force(gamma, h),
                    one_d(&c.x0, 0.0)?,
                    DomainRule::Unbounded,
                    Some(Analytic::SmoluchowskiConst { h, gamma, s0, region }),
                    0.05,
                    vec![0.1, 0.05, 0.025],
                )
            }
            ScenarioName::Ou => {
                let beta = positive("beta", c.beta.unwrap_or(1.0))?;
                let start = one_d(&c.x0, 1.0)?;
                let dom = user_domain(c, 1)?;
                (
                    Box::new(SqrtFamily::lightcone(h)?),
                    DriftSpec::ou(beta),
                    start.clone(),
                    dom.map_or(DomainRule::Admissible, DomainRule::Checked),
                    Some(Analytic::Ou { beta, h, x0: start[0] }),
                    0.0125,
                    vec![0.05, 0.025, 0.0125],
                )
            }
            ScenarioName::Kramers => {
                let fam = KramersFamily {
                    h_x: positive("h_x", c.h_x.unwrap_or(0.04))?,
                    h22: positive("h22", c.h22.unwrap_or(1.0))?,
                    margin: positive("margin", c.margin.unwrap_or(7.0))?,
                    lambda_prime: 0.0,
                    compensate: c.compensate.unwrap_or(true),
                };
                let beta = c.beta.unwrap_or(0.5);
                let force = c.force.clone().unwrap_or(vec![0.0, -1.0]);
                let start = sized("x0", c.x0.clone().unwrap_or(vec![1.0, 0.0]), 2)?;
                let dom = user_domain(c, 2)?.unwrap_or(Domain { lo: vec![-6.0, -7.0], hi: vec![7.0, 7.0] });
                // moment equations are closed only for affine forces
                let analytic = (force.len() <= 2).then(|| Analytic::KramersMoments {
                    beta,
                    c0: force.first().copied().unwrap_or(0.0),
                    c1: force.get(1).copied().unwrap_or(0.0),
                    h22: fam.h22,
                    x0: start[0],
                    y0: start[1],
                });
                (Box::new(fam), DriftSpec::kramers(beta, &force), start, DomainRule::Clipped(dom), analytic, 0.025, vec![0.025, 0.0125])
            }
            ScenarioName::RandomwalkNd | ScenarioName::Custom => {
                let hd = c.h_diag.clone().unwrap_or(vec![1.0, 1.0]);
                let n = hd.len();
                let fam = match c.chart.unwrap_or(ChartKind::Simplex) {
                    ChartKind::Simplex => SqrtFamily::simplex(&hd)?,
                    ChartKind::AppendixB => SqrtFamily::appendix_b(&hd)?,
                    ChartKind::Lightcone if n == 1 => SqrtFamily::lightcone(hd[0])?,
                    ChartKind::Lightcone => return Err(CliError::Config("the lightcone chart is one-dimensional".into())),
                };
                let start = sized("x0", c.x0.clone().unwrap_or(vec![0.0; n]), n)?;
                if name == ScenarioName::RandomwalkNd {
                    (Box::new(fam), DriftSpec::Free(n), start, DomainRule::Unbounded, None, 0.1, vec![0.1])
                } else {
                    let r0 = sized("r0", c.r0.clone().unwrap_or(vec![0.0; n]), n)?;
                    let jac = sized("jac", c.jac.clone().unwrap_or(vec![0.0; n * n]), n * n)?;
                    let dom = user_domain(c, n)?.map_or(DomainRule::Unbounded, DomainRule::Checked);
                    (Box::new(fam), DriftSpec::Linear { r0, jac }, start, dom, None, 0.05, vec![0.05])
                }
            }
        };
        let eps = positive("eps", c.eps.unwrap_or(eps))?;
        let eps_grid = c.eps_grid.clone().unwrap_or(grid);
        check_grid(&eps_grid)?;
        let n = family.n();
        let axes = match (name, n) {
            (ScenarioName::Kramers, _) => vec!["x".into(), "y".into()],
            (_, 1) => vec!["x".into()],
            _ => (1..=n).map(|i| format!("x{i}")).collect(),
        };
        Ok(Self {
            name,
            family,
            drift,
            eps,
            eps_grid,
            horizon: positive("horizon", c.horizon.unwrap_or(1.0))?,
            steps: c.steps,
            report_every: c.report_every.unwrap_or(1).max(1),
            trim_tol: c.trim_tol.unwrap_or(if name == ScenarioName::Kramers { 1e-14 } else { 0.0 }),
            start,
            domain,
            analytic,
            axes,
        })
    }

    pub fn converge_setup(&self) -> Result<ConvergeSetup, CliError> {
        let analytic = self.analytic.clone().ok_or_else(|| CliError::Config(format!("scenario {:?} has no reference solution", self.name)))?;
        let domain = match &self.domain {
            DomainRule::Checked(d) | DomainRule::Clipped(d) => Some(d.clone()),
            DomainRule::Unbounded | DomainRule::Admissible => None,
        };
        Ok(ConvergeSetup { analytic, horizon: self.horizon, domain, trim_tol: self.trim_tol })
    }
}
