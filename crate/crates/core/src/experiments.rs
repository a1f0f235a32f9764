//! Desk-scale rate studies for translated Poisson approximation of `K_n` and
//! `K_{n,r}`, log-log slope fits, Le Cam comparisons and CSV output.

use std::io::Write;
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::exactdist::{exact_pmf, low_boxes_all_occupied, poissonized_pmf, DpConfig};
use crate::metrics::{empirical_pmf, local_distance, total_variation, Distance, Pmf};
use crate::moments::{moments, MomentMode, MomentSummary, StatKind, Statistic};
use crate::occusim::{replicate_rng, sample_histogram};
use crate::tpoisson::{TranslatedPoisson, WINDOW_EPS};
use crate::weights::WeightModel;
use crate::Error;

/// Rows whose uncertainty exceeds this fraction of the distance are inconclusive.
pub const INCONCLUSIVE_FRACTION: f64 = 0.3;
/// Smallest Monte Carlo sample size accepted by [`rate_study`].
pub const MIN_MC_SAMPLES: u64 = 100_000;
/// Largest `n * tail(J)` left to the defect by the exact method.
pub const EXACT_DEFECT_TARGET: f64 = 1e-6;
/// Largest box count the exact method will process.
pub const EXACT_MAX_BOXES: usize = 20_000;

pub const CSV_HEADER: &str =
    "n,mu,sigma2,d_tv,d_tv_unc,d_loc,d_loc_unc,method,samples,wall_time_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMethod {
    Exact,
    MonteCarlo,
}

impl RateMethod {
    pub fn label(&self) -> &'static str {
        match self {
            RateMethod::Exact => "exact",
            RateMethod::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: u64,
    pub mu: f64,
    pub sigma2: f64,
    pub d_tv: f64,
    pub d_tv_uncertainty: f64,
    pub d_loc: f64,
    pub d_loc_uncertainty: f64,
    pub method: RateMethod,
    pub samples: u64,
    pub wall_time_ms: u64,
    pub tv_inconclusive: bool,
    pub loc_inconclusive: bool,
}

impl RateRow {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{},{},{}",
            self.n,
            self.mu,
            self.sigma2,
            self.d_tv,
            self.d_tv_uncertainty,
            self.d_loc,
            self.d_loc_uncertainty,
            self.method.label(),
            self.samples,
            self.wall_time_ms
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub stat: Statistic,
    pub rows: Vec<RateRow>,
    /// `log d_TV` against `log sigma` over conclusive rows.
    pub tv_fit: Option<LogLogFit>,
    /// `log d_loc` against `log sigma` over conclusive rows.
    pub loc_fit: Option<LogLogFit>,
    /// `max / min` of `sigma d_TV` over conclusive rows.
    pub tv_spread: Option<f64>,
    /// `max / min` of `sigma^2 d_loc` over conclusive rows.
    pub loc_spread: Option<f64>,
    pub warnings: Vec<String>,
}

/// Ordinary least squares of `log y` on `log x`; `None` below two points or
/// when the abscissae coincide.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Option<LogLogFit> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = points.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(LogLogFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: points.len(),
    })
}

fn spread(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    Some(max / min)
}

/// Exact law of `stat`, truncating where `n * tail(J) <= EXACT_DEFECT_TARGET`.
pub fn exact_law(model: &WeightModel, n: u64, stat: Statistic) -> Result<Pmf> {
    if model
        .truncation_point(n, EXACT_DEFECT_TARGET, EXACT_MAX_BOXES)
        .is_none()
    {
        return Err(Error::Resource(format!(
            "exact law at n = {n} needs more than {EXACT_MAX_BOXES} boxes; use monte_carlo"
        )));
    }
    exact_pmf(model, n, stat, DpConfig::new(exact_boxes(model, n), 0.0))
}

/// Monte Carlo distances between an empirical law from `samples` draws and
/// the reference `q`.
///
/// The TV uncertainty bounds the plug-in bias,
/// `|E d_TV(emp, q) - d_TV(p, q)| <= 1/2 sum_k E|emp_k - p_k|`, with
/// `E|emp_k - p_k| <= min(sqrt(p_k (1 - p_k) / N), 2 p_k)` evaluated at the
/// empirical mass (floored at `min(q_k, 1/N)`). The local uncertainty is the
/// standard error of the empirical mass at the maximizing point. Both add the
/// reference's tail defect.
pub fn monte_carlo_distances(emp: &Pmf, q: &Pmf, samples: u64) -> (Distance, Distance) {
    let nf = samples as f64;
    let tv = total_variation(emp, q);
    let loc = local_distance(emp, q);
    let lo = emp.offset.min(q.offset);
    let hi = emp.end().max(q.end());
    let mut bias = 0.0;
    let mut arg = lo;
    let mut best = -1.0;
    for k in lo..hi {
        let pk = emp.mass(k).max(q.mass(k).min(1.0 / nf));
        bias += (pk * (1.0 - pk) / nf).sqrt().min(2.0 * pk);
        let d = (emp.mass(k) - q.mass(k)).abs();
        if d > best {
            best = d;
            arg = k;
        }
    }
    let pa = emp.mass(arg);
    (
        Distance {
            value: tv.value,
            uncertainty: 0.5 * bias + tv.uncertainty,
        },
        Distance {
            value: loc.value,
            uncertainty: (pa * (1.0 - pa) / nf).sqrt() + loc.uncertainty,
        },
    )
}

/// Seed of grid point `n` under master seed `seed`.
pub fn point_seed(seed: u64, n: u64) -> u64 {
    replicate_rng(seed, n).next_u64()
}

/// `(mu, sigma^2)`, exact pairwise when affordable.
pub fn statistic_moments(model: &WeightModel, n: u64, stat: Statistic) -> Result<MomentSummary> {
    match moments(model, n, stat, MomentMode::ExactPairwise) {
        Err(Error::Resource(_)) => moments(model, n, stat, MomentMode::HybridLargeScale),
        other => other,
    }
}

fn premise_warnings(model: &WeightModel, stat: &Statistic, grid: &[u64]) -> Vec<String> {
    let mut out = Vec::new();
    let n0 = match model.min_n0() {
        Ok(n0) => n0,
        Err(e) => {
            out.push(format!("n_0 unavailable for this model: {e}"));
            return out;
        }
    };
    let floor = match stat.kind {
        StatKind::OccupiedBoxes => n0 as f64,
        StatKind::ExactlyR { r } => (n0 as f64).max((r as f64 / 4.0).exp()).max(2.0 * r as f64),
    };
    for &n in grid {
        if (n as f64) < floor {
            out.push(format!("n = {n} is below the premise n >= {floor}"));
        }
    }
    out
}

fn rate_row(
    model: &WeightModel,
    stat: Statistic,
    n: u64,
    method: RateMethod,
    samples: u64,
    seed: u64,
) -> Result<RateRow> {
    let start = Instant::now();
    let m = statistic_moments(model, n, stat)?;
    let tp = TranslatedPoisson::fit(m.mu, m.var)?.window(WINDOW_EPS);
    let (tv, loc, used) = match method {
        RateMethod::Exact => {
            let law = exact_law(model, n, stat)?;
            (total_variation(&law, &tp), local_distance(&law, &tp), 0)
        }
        RateMethod::MonteCarlo => {
            let hist = sample_histogram(model, n, stat, samples, point_seed(seed, n))?;
            let emp = empirical_pmf(&hist)?;
            let (tv, loc) = monte_carlo_distances(&emp, &tp, samples);
            (tv, loc, samples)
        }
    };
    let flag =
        |d: &Distance| d.uncertainty.is_nan() || d.uncertainty > INCONCLUSIVE_FRACTION * d.value;
    Ok(RateRow {
        n,
        mu: m.mu,
        sigma2: m.var,
        d_tv: tv.value.clamp(0.0, 1.0),
        d_tv_uncertainty: tv.uncertainty,
        d_loc: loc.value,
        d_loc_uncertainty: loc.uncertainty,
        method,
        samples: used,
        wall_time_ms: start.elapsed().as_millis() as u64,
        tv_inconclusive: flag(&tv),
        loc_inconclusive: flag(&loc),
    })
}

/// Distances between the law of `stat` and its fitted translated Poisson law
/// along `grid`, with slope fits against `sigma`.
pub fn rate_study(
    model: &WeightModel,
    stat: Statistic,
    grid: &[u64],
    method: RateMethod,
    samples: u64,
    seed: u64,
) -> Result<RateStudy> {
    stat.validate()?;
    if grid.is_empty() {
        return validation("rate_study: empty grid");
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] < 3 {
        return validation("rate_study: grid must be strictly increasing with every n >= 3");
    }
    if method == RateMethod::MonteCarlo && samples < MIN_MC_SAMPLES {
        return validation(format!(
            "rate_study: monte_carlo needs samples >= {MIN_MC_SAMPLES}"
        ));
    }
    let rows = grid
        .par_iter()
        .map(|&n| rate_row(model, stat, n, method, samples, seed))
        .collect::<Result<Vec<_>>>()?;

    let mut warnings = premise_warnings(model, &stat, grid);
    for row in &rows {
        if row.tv_inconclusive {
            warnings.push(format!(
                "n = {}: d_TV inconclusive, excluded from fit",
                row.n
            ));
        }
        if row.loc_inconclusive {
            warnings.push(format!(
                "n = {}: d_loc inconclusive, excluded from fit",
                row.n
            ));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let tv_rows: Vec<&RateRow> = rows.iter().filter(|r| !r.tv_inconclusive).collect();
    let loc_rows: Vec<&RateRow> = rows.iter().filter(|r| !r.loc_inconclusive).collect();
    let tv_pts: Vec<(f64, f64)> = tv_rows.iter().map(|r| (r.sigma(), r.d_tv)).collect();
    let loc_pts: Vec<(f64, f64)> = loc_rows.iter().map(|r| (r.sigma(), r.d_loc)).collect();
    Ok(RateStudy {
        stat,
        tv_fit: fit_loglog_slope(&tv_pts),
        loc_fit: fit_loglog_slope(&loc_pts),
        tv_spread: spread(tv_rows.iter().map(|r| r.sigma() * r.d_tv)),
        loc_spread: spread(loc_rows.iter().map(|r| r.sigma2 * r.d_loc)),
        rows,
        warnings,
    })
}

pub fn write_csv<W: Write>(rows: &[RateRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.csv_line())?;
    }
    Ok(())
}

/// Restricted exact law against its Poissonized counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeCamEntry {
    pub stat: Statistic,
    pub d_tv: f64,
    pub uncertainty: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeCamReport {
    pub n: u64,
    pub jn: usize,
    pub pn: f64,
    pub n_inv3: f64,
    /// `P[N_j >= 1 for all j < j_n]`, when the subset count is affordable.
    pub low_boxes_occupied: Option<f64>,
    pub low_boxes_ok: Option<bool>,
    /// Empty when the exact law is not computable.
    pub entries: Vec<LeCamEntry>,
    pub notes: Vec<String>,
}

/// Compare the laws of `K_n` and `K_{n,1}` restricted to `j >= j_n` with the
/// same statistics under independent Poisson counts, and report the
/// probability that every box below `j_n` is occupied.
pub fn lecam_report(model: &WeightModel, n: u64) -> Result<LeCamReport> {
    if n < 3 {
        return validation("lecam_report: n must be at least 3");
    }
    let tp = model.tail_profile(n);
    let n_inv3 = (n as f64).powi(-3);
    let mut notes = Vec::new();
    let (low, low_ok) = if tp.jn <= 1 {
        (Some(1.0), Some(true))
    } else {
        match low_boxes_all_occupied(model, n, tp.jn - 1) {
            Ok(v) => (Some(v), Some(v >= 1.0 - n_inv3 - 1e-15)),
            Err(Error::Resource(e)) => {
                notes.push(e);
                (None, None)
            }
            Err(e) => return Err(e),
        }
    };
    let mut entries = Vec::new();
    for stat in [Statistic::occupied(), Statistic::exactly(1)] {
        let stat = stat.from_box(tp.jn);
        let exact = match exact_law(model, n, stat) {
            Ok(p) => p,
            Err(Error::Resource(e)) => {
                notes.push(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let pois = poissonized_pmf(model, n, stat, exact_boxes(model, n))?;
        let d = total_variation(&exact, &pois);
        entries.push(LeCamEntry {
            stat,
            d_tv: d.value,
            uncertainty: d.uncertainty,
            holds: d.value <= tp.pn + d.uncertainty + 1e-12,
        });
    }
    Ok(LeCamReport {
        n,
        jn: tp.jn,
        pn: tp.pn,
        n_inv3,
        low_boxes_occupied: low,
        low_boxes_ok: low_ok,
        entries,
        notes,
    })
}

// truncation shared by `exact_law` and its Poissonized counterpart
fn exact_boxes(model: &WeightModel, n: u64) -> usize {
    model
        .truncation_point(n, EXACT_DEFECT_TARGET, EXACT_MAX_BOXES)
        .unwrap_or(EXACT_MAX_BOXES)
        .max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_examples() {
        let pts: Vec<(f64, f64)> = (1..6).map(|i| (i as f64, 1.0 / i as f64)).collect();
        let fit = fit_loglog_slope(&pts).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12 && (fit.r_squared - 1.0).abs() < 1e-12);
        let pts: Vec<(f64, f64)> = [2.0, 3.0, 7.0]
            .iter()
            .map(|&x| (x, 5.0 / (x * x)))
            .collect();
        let fit = fit_loglog_slope(&pts).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 5f64.ln()).abs() < 1e-12);
        assert!(fit_loglog_slope(&[(2.0, 1.0)]).is_none());
        assert!(fit_loglog_slope(&[(2.0, 1.0), (3.0, 0.0)]).is_none());
    }

    #[test]
    fn lecam_example() {
        let model = WeightModel::explicit(vec![0.5, 0.3, 0.15, 0.05]).unwrap();
        let rep = lecam_report(&model, 100).unwrap();
        assert_eq!(rep.jn, 3);
        assert!((rep.pn - 0.2).abs() < 1e-15);
        assert!((rep.n_inv3 - 1e-6).abs() < 1e-21);
        assert_eq!(rep.entries.len(), 2);
        for e in &rep.entries {
            assert!(e.holds, "{e:?}");
        }
        assert!(rep.low_boxes_ok.unwrap());
    }

    #[test]
    fn lecam_zero_tail() {
        // every box stays above the cutoff: nothing restricted
        let model = WeightModel::explicit(vec![0.5, 0.5]).unwrap();
        let rep = lecam_report(&model, 100).unwrap();
        assert_eq!((rep.jn, rep.pn), (3, 0.0));
        for e in &rep.entries {
            assert!(e.d_tv.abs() < 1e-15);
        }
    }

    #[test]
    fn single_point_grid_has_no_fit() {
        let model = WeightModel::explicit(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let st = rate_study(
            &model,
            Statistic::occupied(),
            &[20],
            RateMethod::Exact,
            0,
            1,
        )
        .unwrap();
        assert_eq!(st.rows.len(), 1);
        assert!(st.tv_fit.is_none() && st.loc_fit.is_none());
    }

    #[test]
    fn grid_validation() {
        let model = WeightModel::explicit(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let occ = Statistic::occupied();
        assert!(rate_study(&model, occ, &[10, 5], RateMethod::Exact, 0, 1).is_err());
        assert!(rate_study(&model, occ, &[2, 5], RateMethod::Exact, 0, 1).is_err());
        assert!(rate_study(&model, occ, &[10], RateMethod::MonteCarlo, 1000, 1).is_err());
    }

    #[test]
    fn mc_uncertainty_covers_a_perfect_fit() {
        // empirical law equal to the reference: distance zero, positive bias bound
        let q = Pmf::new(0, vec![0.25, 0.5, 0.25], 0.0).unwrap();
        let (tv, loc) = monte_carlo_distances(&q, &q, 100);
        assert_eq!(tv.value, 0.0);
        assert_eq!(loc.value, 0.0);
        let want = 0.5 * (2.0 * (0.1875f64 / 100.0).sqrt() + (0.25f64 / 100.0).sqrt());
        assert!((tv.uncertainty - want).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let row = RateRow {
            n: 10,
            mu: 1.5,
            sigma2: 0.25,
            d_tv: 0.1,
            d_tv_uncertainty: 0.0,
            d_loc: 0.05,
            d_loc_uncertainty: 0.0,
            method: RateMethod::Exact,
            samples: 0,
            wall_time_ms: 3,
            tv_inconclusive: false,
            loc_inconclusive: false,
        };
        let mut buf = Vec::new();
        write_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            format!("{CSV_HEADER}\n10,1.5,0.25,0.1,0.0,0.05,0.0,exact,0,3\n")
        );
    }
}
