//! Error metrics, group-probability analysis (A/B/C/D), energy curves, and
//! local-standard-deviation maps.

use rand_chacha::ChaCha8Rng;

use crate::fdm::{GridKind, GridSolution};
use crate::geometry::{Domain, SpaceTimePoint};
use crate::model::{PdeSystem, QuadratureSpec};
use crate::network::SolutionModel;
use crate::sampling::{edras_topm, rad_sample, rar_select, score_pool_interior, CandidatePool, Strategy};
use crate::{Error, Result};

/// Headline error metrics of a model against an oracle.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub relative_mse: f64,
    pub mae: f64,
    pub relative_mae: f64,
    pub max_abs_error: f64,
    pub relative_linf: f64,
    pub n_points: usize,
}

/// Computes absolute and oracle-normalized error metrics at `eval_points`.
pub fn error_metrics(
    model: &SolutionModel,
    oracle: &GridSolution,
    eval_points: &[SpaceTimePoint],
) -> Result<MetricsReport> {
    if eval_points.is_empty() {
        return Err(Error::EmptySet("evaluation points"));
    }
    let n = eval_points.len() as f64;
    let mut se = 0.0;
    let mut ae = 0.0;
    let mut max_e = 0.0f64;
    let mut ref_sq = 0.0;
    let mut ref_abs = 0.0;
    let mut ref_max = 0.0f64;
    for p in eval_points {
        let truth = oracle.interpolate(p)?;
        let approx = model.evaluate(p)?;
        let e = (approx - truth).abs();
        se += e * e / n;
        ae += e / n;
        max_e = max_e.max(e);
        ref_sq += truth * truth / n;
        ref_abs += truth.abs() / n;
        ref_max = ref_max.max(truth.abs());
    }
    Ok(MetricsReport {
        mse: se,
        relative_mse: se / ref_sq,
        mae: ae,
        relative_mae: ae / ref_abs,
        max_abs_error: max_e,
        relative_linf: max_e / ref_max,
        n_points: eval_points.len(),
    })
}

/// Residual/error classification thresholds. A missing `r0` means "mean of
/// the residuals over the evaluated set".
#[derive(Debug, Clone, Copy)]
pub struct GroupThresholds {
    pub e0: f64,
    pub r0: Option<f64>,
}

impl Default for GroupThresholds {
    fn default() -> Self {
        Self { e0: 1e-3, r0: None }
    }
}

impl GroupThresholds {
    pub fn resolve_r0(&self, residuals: &[f64]) -> f64 {
        self.r0.unwrap_or_else(|| {
            residuals.iter().sum::<f64>() / residuals.len().max(1) as f64
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    /// Small residual, large error.
    A,
    /// Large residual, large error.
    B,
    /// Small residual, small error.
    C,
    /// Large residual, small error.
    D,
}

impl Group {
    pub fn index(self) -> usize {
        match self {
            Group::A => 0,
            Group::B => 1,
            Group::C => 2,
            Group::D => 3,
        }
    }
}

/// Labels each point by (residual vs R0) x (error vs e0); exact-threshold
/// values count as "small" on both axes.
pub fn classify_groups(
    residuals: &[f64],
    errors: &[f64],
    thresholds: &GroupThresholds,
) -> Vec<Group> {
    let r0 = thresholds.resolve_r0(residuals);
    residuals
        .iter()
        .zip(errors)
        .map(|(&r, &e)| match (r > r0, e > thresholds.e0) {
            (false, true) => Group::A,
            (true, true) => Group::B,
            (false, false) => Group::C,
            (true, false) => Group::D,
        })
        .collect()
}

/// Empirical selection probability of each group under a strategy.
/// Deterministic strategies count their picks directly; RAD-style draws are
/// averaged over `repeats` independent draws.
#[allow(clippy::too_many_arguments)]
pub fn strategy_group_probabilities(
    strategy: Strategy,
    model: &SolutionModel,
    sys: &PdeSystem,
    oracle: &GridSolution,
    pool: &CandidatePool,
    m: usize,
    thresholds: &GroupThresholds,
    repeats: usize,
    rng: &mut ChaCha8Rng,
) -> Result<[f64; 4]> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be positive".to_string()));
    }
    let (residuals, edrd) = score_pool_interior(pool, model, sys)?;
    let mut errors = Vec::with_capacity(pool.interior.len());
    for p in &pool.interior {
        errors.push((model.evaluate(p)? - oracle.interpolate(p)?).abs());
    }
    let labels = classify_groups(&residuals, &errors, thresholds);
    let count = |picks: &[usize]| -> [f64; 4] {
        let mut p = [0.0; 4];
        for &i in picks {
            p[labels[i].index()] += 1.0 / picks.len() as f64;
        }
        p
    };
    let m = m.min(pool.interior.len());
    let p = match strategy {
        Strategy::Rar => count(&rar_select(&residuals, m)?),
        Strategy::EdrasTopm | Strategy::EdrasFull => count(&edras_topm(&edrd, m)?),
        Strategy::EdrasRarCombo => {
            let mut picks = edras_topm(&edrd, m.div_ceil(2))?;
            for i in rar_select(&residuals, residuals.len())? {
                if picks.len() >= m {
                    break;
                }
                if !picks.contains(&i) {
                    picks.push(i);
                }
            }
            count(&picks)
        }
        Strategy::Uniform => {
            let all: Vec<usize> = (0..pool.interior.len()).collect();
            count(&all)
        }
        Strategy::Rad | Strategy::RarD => {
            let mut acc = [0.0; 4];
            for _ in 0..repeats.max(1) {
                let picks = if strategy == Strategy::Rad {
                    rad_sample(&residuals, m, rng)?
                } else {
                    let mut p = rar_select(&residuals, m - m / 2)?;
                    p.extend(rad_sample(&residuals, m / 2, rng)?);
                    p
                };
                let c = count(&picks);
                for k in 0..4 {
                    acc[k] += c[k] / repeats.max(1) as f64;
                }
            }
            acc
        }
    };
    Ok(p)
}

/// Energy at each requested time: (t, bulk, surface, total).
pub fn energy_curve(
    sys: &PdeSystem,
    domain: &Domain,
    model: &SolutionModel,
    times: &[f64],
    quad: &QuadratureSpec,
) -> Result<Vec<(f64, f64, f64, f64)>> {
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        let (bulk, surface, total) = crate::model::total_energy(sys, domain, model, t, quad)?;
        rows.push((t, bulk, surface, total));
    }
    Ok(rows)
}

pub fn write_energy_csv(rows: &[(f64, f64, f64, f64)], path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "t,bulk,surface,total")?;
    for (t, b, s, tot) in rows {
        writeln!(w, "{t:.8e},{b:.12e},{s:.12e},{tot:.12e}")?;
    }
    Ok(())
}

pub fn write_metrics_csv(
    rows: &[(String, MetricsReport)],
    path: &std::path::Path,
) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "run,mse,relative_mse,mae,relative_mae,max_abs_error,relative_linf")?;
    for (name, r) in rows {
        writeln!(
            w,
            "{name},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
            r.mse, r.relative_mse, r.mae, r.relative_mae, r.max_abs_error, r.relative_linf
        )?;
    }
    Ok(())
}

/// Local standard deviation of a 1D oracle over a (2 hx + 1) x (2 ht + 1)
/// node window (periodic wrap in x, clipped in t), plus the sigma > sigma0
/// mask. Returned row-major: [time][node].
pub fn local_std_map(
    solution: &GridSolution,
    hx: usize,
    ht: usize,
    sigma0: f64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<bool>>)> {
    let GridKind::Line1d { nx } = solution.kind else {
        return Err(Error::InvalidArgument(
            "local_std_map expects a 1D grid solution".to_string(),
        ));
    };
    let nt = solution.times.len();
    let mut sigma = vec![vec![0.0; nx]; nt];
    let mut mask = vec![vec![false; nx]; nt];
    for k in 0..nt {
        let k_lo = k.saturating_sub(ht);
        let k_hi = (k + ht).min(nt - 1);
        for i in 0..nx {
            let mut vals = Vec::with_capacity((2 * hx + 1) * (k_hi - k_lo + 1));
            for slice in &solution.slices[k_lo..=k_hi] {
                for di in 0..=2 * hx {
                    let j = (i + nx + di - hx) % nx;
                    vals.push(slice[j]);
                }
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let s = var.sqrt();
            sigma[k][i] = s;
            mask[k][i] = s > sigma0;
        }
    }
    Ok((sigma, mask))
}

/// Field snapshot rows (x[,y],t,phi) for external plotting.
pub fn write_field_csv(
    model: &SolutionModel,
    points: &[SpaceTimePoint],
    path: &std::path::Path,
) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let dim = model.dim();
    if dim == 1 {
        writeln!(w, "x,t,phi")?;
    } else {
        writeln!(w, "x,y,t,phi")?;
    }
    for p in points {
        let v = model.evaluate(p)?;
        if dim == 1 {
            writeln!(w, "{:.8e},{:.8e},{v:.12e}", p.x[0], p.t)?;
        } else {
            writeln!(w, "{:.8e},{:.8e},{:.8e},{v:.12e}", p.x[0], p.x[1], p.t)?;
        }
    }
    Ok(())
}
