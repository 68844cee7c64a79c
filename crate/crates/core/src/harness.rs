//! Convergence studies against the manufactured solution: configuration,
//! sweep orchestration, rates, CSV and table output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::drlm::{multiplier_bound_c0, run_simulation, RunConfig, RunOutput, StepDiagnostics};
use crate::error::{Error, Result};
use crate::grid::MacGrid;
use crate::manufactured::Manufactured;
use crate::operators::ConvectionForm;
use crate::stokes::{DEFAULT_MAX_ITER, DEFAULT_TOL};

pub const CSV_HEADER: &str =
    "theta,tau,h,err_u_l2,rate_u_l2,err_u_h1,rate_u_h1,err_p_l2,rate_p_l2,err_q,rate_q";

/// Time samples used to estimate `sup_t |f(t)|_0`.
pub const FORCING_SAMPLES: usize = 64;

/// Worst per-step residuals of a run. Residuals are relative to the largest
/// term of the identity they measure.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAudit {
    pub steps: usize,
    pub energy_max: f64,
    pub qdyn_max: f64,
    /// Multiplier dynamics with the convective work term included.
    pub qdyn_balanced_max: f64,
    pub momentum_max: f64,
    pub quadratic_max: f64,
    /// Largest `|div u|_0 / tolerance` over the steps.
    pub divergence_ratio_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub velocity_l2_max: f64,
    pub initial_l2: f64,
    /// Uniform multiplier bound; only meaningful for `theta >= 1`.
    pub c0: f64,
    pub failure: Option<String>,
}

impl RunAudit {
    pub fn from_output(out: &RunOutput, cf: f64, t_final: f64) -> Self {
        let mut a = Self::empty(out.initial_l2);
        a.c0 = multiplier_bound_c0(out.initial_l2, cf, t_final).unwrap_or(f64::NAN);
        for d in &out.diagnostics {
            a.absorb(d);
        }
        a
    }

    fn empty(initial_l2: f64) -> Self {
        Self {
            steps: 0,
            energy_max: 0.0,
            qdyn_max: 0.0,
            qdyn_balanced_max: 0.0,
            momentum_max: 0.0,
            quadratic_max: 0.0,
            divergence_ratio_max: 0.0,
            q_min: f64::INFINITY,
            q_max: f64::NEG_INFINITY,
            velocity_l2_max: initial_l2,
            initial_l2,
            c0: f64::NAN,
            failure: None,
        }
    }

    fn absorb(&mut self, d: &StepDiagnostics) {
        // NaN must not be swallowed by f64::max
        let worst = |acc: f64, x: f64| if x.is_nan() { f64::NAN } else { acc.max(x) };
        self.steps += 1;
        self.energy_max = worst(self.energy_max, d.energy_relative());
        self.qdyn_max = worst(self.qdyn_max, d.qdyn_relative());
        self.qdyn_balanced_max = worst(self.qdyn_balanced_max, d.qdyn_balanced_relative());
        self.momentum_max = worst(self.momentum_max, d.momentum_relative());
        self.quadratic_max = worst(self.quadratic_max, d.quadratic_relative());
        let ratio = if d.div_tolerance > 0.0 {
            d.div_l2 / d.div_tolerance
        } else if d.div_l2 == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        self.divergence_ratio_max = worst(self.divergence_ratio_max, ratio);
        self.q_min = self.q_min.min(d.q);
        self.q_max = worst(self.q_max, d.q);
        self.velocity_l2_max = worst(self.velocity_l2_max, d.velocity_l2);
    }

}

/// Error columns of one study entry, in CSV order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorColumns {
    pub u_l2: f64,
    pub u_h1: f64,
    pub p_l2: f64,
    pub q: f64,
}

impl ErrorColumns {
    pub const NAN: Self = Self {
        u_l2: f64::NAN,
        u_h1: f64::NAN,
        p_l2: f64::NAN,
        q: f64::NAN,
    };

    pub fn as_array(&self) -> [f64; 4] {
        [self.u_l2, self.u_h1, self.p_l2, self.q]
    }

    fn from_array(a: [f64; 4]) -> Self {
        Self {
            u_l2: a[0],
            u_h1: a[1],
            p_l2: a[2],
            q: a[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub theta: f64,
    pub tau: f64,
    pub h: f64,
    /// NaN in every column when the run failed.
    pub errors: ErrorColumns,
    /// log2 ratios against the record with the same theta and twice the tau.
    pub rates: [Option<f64>; 4],
    /// Absent for records read back from CSV.
    pub audit: Option<RunAudit>,
}

impl ConvergenceRecord {
    pub fn failed(&self) -> bool {
        self.errors.as_array().iter().any(|e| !e.is_finite())
            || self.audit.as_ref().is_some_and(|a| a.failure.is_some())
    }
}

/// `log2(coarse / fine)`, undefined unless both errors are positive.
pub fn compute_rate(err_coarse: f64, err_fine: f64) -> Option<f64> {
    if err_coarse > 0.0 && err_fine > 0.0 && err_coarse.is_finite() && err_fine.is_finite() {
        Some((err_coarse / err_fine).log2())
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub thetas: Vec<f64>,
    /// `(tau, h)` pairs, coarsest first.
    pub ladder: Vec<(f64, f64)>,
    pub nu: f64,
    pub t_final: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub convection: ConvectionForm,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            thetas: vec![0.1, 1.0, 10.0, 100.0],
            ladder: halving_ladder(0.125, 0.0625, 5),
            nu: 0.1,
            t_final: 1.0,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            convection: ConvectionForm::default(),
        }
    }
}

/// `rungs` pairs starting at `(tau, h)`, both halved at every rung.
pub fn halving_ladder(tau: f64, h: f64, rungs: usize) -> Vec<(f64, f64)> {
    (0..rungs)
        .map(|k| {
            let s = 0.5f64.powi(k as i32);
            (tau * s, h * s)
        })
        .collect()
}

/// Cells per direction for mesh size `h` on the unit square.
pub fn cells_for_h(h: f64) -> Result<usize> {
    let n = (1.0 / h).round();
    if !(h > 0.0 && n >= 2.0 && (n * h - 1.0).abs() <= 1e-12) {
        return Err(Error::InvalidConfig(format!(
            "h = {h} does not divide the unit interval into at least 2 cells"
        )));
    }
    Ok(n as usize)
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thetas.is_empty() || self.ladder.is_empty() {
            return Err(Error::InvalidConfig("empty theta list or ladder".into()));
        }
        if let Some(t) = self.thetas.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidConfig(format!("theta must be positive, got {t}")));
        }
        for &(tau, h) in &self.ladder {
            cells_for_h(h)?;
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::InvalidConfig(format!("tau must be positive, got {tau}")));
            }
        }
        for w in self.ladder.windows(2) {
            if !same(w[0].0, 2.0 * w[1].0) {
                return Err(Error::InvalidConfig(format!(
                    "ladder must halve tau at each rung: {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        if !(self.nu > 0.0 && self.t_final > 0.0) {
            return Err(Error::InvalidConfig("nu and T must be positive".into()));
        }
        Ok(())
    }

    fn finest_h(&self) -> f64 {
        self.ladder.iter().map(|r| r.1).fold(f64::INFINITY, f64::min)
    }

    /// `sup_t |f(t)|_0` estimated on the finest grid of the ladder.
    pub fn forcing_bound(&self) -> Result<f64> {
        let grid = MacGrid::square(cells_for_h(self.finest_h())?)?;
        Ok(Manufactured::new(self.nu).forcing_sup_norm(&grid, self.t_final, FORCING_SAMPLES))
    }

    pub fn run_config(&self, theta: f64, tau: f64, h: f64) -> Result<RunConfig> {
        let mut cfg = RunConfig::manufactured(theta, self.nu, tau, self.t_final, cells_for_h(h)?)?;
        cfg.tol = self.tol;
        cfg.max_iter = self.max_iter;
        cfg.convection = self.convection;
        Ok(cfg)
    }
}

/// Runs the manufactured problem for one `(theta, tau, h)`. Failures are
/// recorded in the audit and leave NaN errors.
pub fn run_record(study: &StudyConfig, theta: f64, tau: f64, h: f64, cf: f64) -> ConvergenceRecord {
    let mut record = ConvergenceRecord {
        theta,
        tau,
        h,
        errors: ErrorColumns::NAN,
        rates: [None; 4],
        audit: None,
    };
    let cfg = match study.run_config(theta, tau, h) {
        Ok(c) => c,
        Err(e) => {
            let mut audit = RunAudit::empty(f64::NAN);
            audit.failure = Some(e.to_string());
            record.audit = Some(audit);
            return record;
        }
    };
    match run_simulation(&cfg, |_, _| {}) {
        Ok(out) => {
            let e = Manufactured::new(study.nu).error_norms(&out.state, &cfg.grid);
            record.errors = ErrorColumns {
                u_l2: e.norms.l2_u,
                u_h1: e.norms.h1_u,
                p_l2: e.norms.l2_p,
                q: e.e_q.abs(),
            };
            record.audit = Some(RunAudit::from_output(&out, cf, study.t_final));
        }
        Err(fail) => {
            let mut audit = RunAudit::from_output(&fail.partial, cf, study.t_final);
            audit.failure = Some(fail.error.to_string());
            record.audit = Some(audit);
        }
    }
    record
}

/// One record per `(theta, rung)`, sorted by theta and then descending tau,
/// with rates attached. `progress` is called after every run.
pub fn run_study<F>(study: &StudyConfig, mut progress: F) -> Result<Vec<ConvergenceRecord>>
where
    F: FnMut(&ConvergenceRecord),
{
    study.validate()?;
    let cf = study.forcing_bound()?;
    let mut thetas = study.thetas.clone();
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    let mut records = Vec::with_capacity(thetas.len() * study.ladder.len());
    for &theta in &thetas {
        for &(tau, h) in &study.ladder {
            let r = run_record(study, theta, tau, h, cf);
            progress(&r);
            records.push(r);
        }
    }
    sort_records(&mut records);
    attach_rates(&mut records);
    Ok(records)
}

pub fn sort_records(records: &mut [ConvergenceRecord]) {
    records.sort_by(|a, b| a.theta.total_cmp(&b.theta).then(b.tau.total_cmp(&a.tau)));
}

/// Fills each record's rates from the record with the same theta and
/// `tau' = 2 tau`; rates stay empty when there is no such companion.
pub fn attach_rates(records: &mut [ConvergenceRecord]) {
    let snapshot: Vec<(f64, f64, [f64; 4])> = records
        .iter()
        .map(|r| (r.theta, r.tau, r.errors.as_array()))
        .collect();
    for r in records.iter_mut() {
        let coarse = snapshot
            .iter()
            .find(|(th, tau, _)| *th == r.theta && same(*tau, 2.0 * r.tau));
        let fine = r.errors.as_array();
        r.rates = match coarse {
            Some((_, _, c)) => std::array::from_fn(|k| compute_rate(c[k], fine[k])),
            None => [None; 4],
        };
    }
}

/// C-style `%.5e`: six significant digits, signed two-digit exponent.
pub fn format_sci(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.5e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn csv_string(records: &[ConvergenceRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let mut fields = vec![format_sci(r.theta), format_sci(r.tau), format_sci(r.h)];
        for (e, rate) in r.errors.as_array().iter().zip(&r.rates) {
            fields.push(format_sci(*e));
            fields.push(rate.map(format_sci).unwrap_or_default());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(records: &[ConvergenceRecord], path: &Path) -> Result<()> {
    fs::write(path, csv_string(records)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a file produced by [`write_csv`]. Audits are not stored in the
/// file and come back as `None`.
pub fn parse_csv(text: &str, path: &Path) -> Result<Vec<ConvergenceRecord>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(err(1, "missing or unexpected header".into())),
    }
    let mut records = Vec::new();
    for (k, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(err(k + 1, format!("expected 11 fields, got {}", fields.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| err(k + 1, format!("bad number {s:?}: {e}")))
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.trim().is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        let mut errors = [0.0; 4];
        let mut rates = [None; 4];
        for c in 0..4 {
            errors[c] = num(fields[3 + 2 * c])?;
            rates[c] = opt(fields[4 + 2 * c])?;
        }
        records.push(ConvergenceRecord {
            theta: num(fields[0])?,
            tau: num(fields[1])?,
            h: num(fields[2])?,
            errors: ErrorColumns::from_array(errors),
            rates,
            audit: None,
        });
    }
    Ok(records)
}

pub fn read_csv(path: &Path) -> Result<Vec<ConvergenceRecord>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, path)
}

/// `1/8` for dyadic fractions and other exact reciprocals, decimal otherwise.
fn fraction_label(x: f64) -> String {
    let inv = 1.0 / x;
    if inv >= 1.0 && (inv - inv.round()).abs() < 1e-9 {
        format!("1/{}", inv.round() as u64)
    } else {
        format!("{x}")
    }
}

/// Fixed-width table in the layout of the usual convergence tables: errors
/// with three significant digits, rates in brackets with two decimals.
pub fn format_table(records: &[ConvergenceRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>6}  {:>6}  {:>6}  {:>17}  {:>17}  {:>17}  {:>17}",
        "theta", "tau", "h", "|e_u|_0", "|e_u|_1", "|e_p|_0", "|e_q|"
    );
    let mut last_theta = None;
    for r in records {
        if last_theta.is_some_and(|t| t != r.theta) {
            out.push('\n');
        }
        last_theta = Some(r.theta);
        let _ = write!(
            out,
            "{:>6}  {:>6}  {:>6}",
            format!("{}", r.theta),
            fraction_label(r.tau),
            fraction_label(r.h)
        );
        for (e, rate) in r.errors.as_array().iter().zip(&r.rates) {
            let cell = match rate {
                Some(k) => format!("{e:.2e} [{k:.2}]"),
                None => format!("{e:.2e}"),
            };
            let _ = write!(out, "  {cell:>17}");
        }
        if let Some(f) = r.audit.as_ref().and_then(|a| a.failure.as_ref()) {
            let _ = write!(out, "  FAILED: {f}");
        }
        out.push('\n');
    }
    out
}

/// Overrides read from a `key = value` file or from the command line.
/// Numbers may be written as fractions such as `1/8`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub thetas: Option<Vec<f64>>,
    pub tau: Option<f64>,
    pub h: Option<f64>,
    pub rungs: Option<usize>,
    pub nu: Option<f64>,
    pub t_final: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub convection: Option<ConvectionForm>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    /// Values set in `other` replace the ones in `self`.
    pub fn merge(mut self, other: Overrides) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(thetas, tau, h, rungs, nu, t_final, tol, max_iter, convection, out);
        self
    }

    /// Study built from the defaults with these overrides applied. A given
    /// `tau` or `h` sets the coarsest rung; a missing `h` follows `tau = 2h`.
    pub fn study(&self) -> StudyConfig {
        let mut s = StudyConfig::default();
        if let Some(t) = &self.thetas {
            s.thetas = t.clone();
        }
        let (tau0, h0) = s.ladder[0];
        let tau = self.tau.unwrap_or(if self.h.is_some() { 2.0 * self.h.unwrap() } else { tau0 });
        let h = self.h.unwrap_or(if self.tau.is_some() { tau / 2.0 } else { h0 });
        let rungs = self.rungs.unwrap_or(s.ladder.len());
        s.ladder = halving_ladder(tau, h, rungs);
        s.nu = self.nu.unwrap_or(s.nu);
        s.t_final = self.t_final.unwrap_or(s.t_final);
        s.tol = self.tol.unwrap_or(s.tol);
        s.max_iter = self.max_iter.unwrap_or(s.max_iter);
        s.convection = self.convection.unwrap_or(s.convection);
        s
    }
}

/// Parses `3`, `0.125`, `1e-10` or `1/8`.
pub fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
            let d: f64 = d.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
            if d == 0.0 {
                return Err(format!("zero denominator in {s:?}"));
            }
            n / d
        }
        None => s.parse().map_err(|_| format!("not a number: {s:?}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("not finite: {s:?}"))
    }
}

pub fn parse_config(text: &str, path: &Path) -> Result<Overrides> {
    let mut o = Overrides::default();
    for (k, raw) in text.lines().enumerate() {
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
        let value = value.trim();
        let num = || parse_number(value).map_err(&err);
        let count = || {
            value
                .parse::<usize>()
                .map_err(|_| err(format!("expected a positive integer, got {value:?}")))
        };
        match key.trim() {
            "theta" => {
                let list = value
                    .split(',')
                    .map(|v| parse_number(v).map_err(&err))
                    .collect::<Result<Vec<_>>>()?;
                o.thetas = Some(list);
            }
            "tau" => o.tau = Some(num()?),
            "h" => o.h = Some(num()?),
            "rungs" => o.rungs = Some(count()?),
            "nu" => o.nu = Some(num()?),
            "T" => o.t_final = Some(num()?),
            "tol" => o.tol = Some(num()?),
            "max_iter" => o.max_iter = Some(count()?),
            "convection" => o.convection = Some(value.parse().map_err(&err)?),
            "out" => o.out = Some(PathBuf::from(value)),
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }
    Ok(o)
}

pub fn read_config(path: &Path) -> Result<Overrides> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(theta: f64, tau: f64, e: [f64; 4]) -> ConvergenceRecord {
        ConvergenceRecord {
            theta,
            tau,
            h: tau / 2.0,
            errors: ErrorColumns::from_array(e),
            rates: [None; 4],
            audit: None,
        }
    }

    #[test]
    fn rate_examples() {
        assert_eq!(format!("{:.2}", compute_rate(6.38e-2, 1.66e-2).unwrap()), "1.94");
        assert_eq!(compute_rate(0.3, 0.3), Some(0.0));
        assert_eq!(format!("{:.2}", compute_rate(4.51e-1, 2.66e-1).unwrap()), "0.76");
        assert_eq!(compute_rate(0.0, 1.0), None);
        assert_eq!(compute_rate(1.0, -1.0), None);
        assert_eq!(compute_rate(f64::NAN, 1.0), None);
    }

    #[test]
    fn sci_format_matches_c() {
        assert_eq!(format_sci(6.38e-2), "6.38000e-02");
        assert_eq!(format_sci(0.1), "1.00000e-01");
        assert_eq!(format_sci(100.0), "1.00000e+02");
        assert_eq!(format_sci(0.0), "0.00000e+00");
        assert_eq!(format_sci(-1.234567e-123), "-1.23457e-123");
        assert_eq!(format_sci(f64::NAN), "nan");
    }

    #[test]
    fn default_ladder_halves_and_couples() {
        let s = StudyConfig::default();
        s.validate().unwrap();
        let taus: Vec<f64> = s.ladder.iter().map(|r| r.0).collect();
        assert_eq!(taus, vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]);
        assert!(s.ladder.iter().all(|(t, h)| *t == 2.0 * h));
    }

    #[test]
    fn ladder_must_halve() {
        let mut s = StudyConfig::default();
        s.ladder = vec![(0.125, 0.0625), (0.1, 0.05)];
        assert!(s.validate().is_err());
        s.ladder = vec![(0.125, 0.3)];
        assert!(s.validate().is_err());
    }

    #[test]
    fn rates_need_a_coarser_companion() {
        let mut rs = vec![
            record(1.0, 0.0625, [0.5, 0.5, 0.5, 0.5]),
            record(1.0, 0.125, [1.0, 1.0, 1.0, 0.0]),
            record(0.1, 0.0625, [1.0; 4]),
        ];
        sort_records(&mut rs);
        attach_rates(&mut rs);
        assert_eq!(rs[0].theta, 0.1);
        assert_eq!(rs[0].rates, [None; 4]);
        assert_eq!(rs[1].tau, 0.125);
        assert_eq!(rs[1].rates, [None; 4]);
        assert_eq!(rs[2].rates, [Some(1.0), Some(1.0), Some(1.0), None]);
    }

    #[test]
    fn csv_empty_and_single() {
        assert_eq!(csv_string(&[]), format!("{CSV_HEADER}\n"));
        let s = csv_string(&[record(1.0, 0.125, [6.38e-2, 0.978, 0.978, 0.551])]);
        assert_eq!(s.lines().count(), 2);
        assert!(s.ends_with('\n'));
        assert_eq!(
            s.lines().nth(1).unwrap(),
            "1.00000e+00,1.25000e-01,6.25000e-02,6.38000e-02,,9.78000e-01,,9.78000e-01,,5.51000e-01,"
        );
    }

    #[test]
    fn csv_rejects_garbage() {
        let p = Path::new("x.csv");
        assert!(parse_csv("nope\n", p).is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n1,2,3\n"), p).is_err());
        let bad = format!("{CSV_HEADER}\n1,2,3,a,,1,,1,,1,\n");
        match parse_csv(&bad, p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn numbers_and_fractions() {
        assert_eq!(parse_number("1/8").unwrap(), 0.125);
        assert_eq!(parse_number(" 1e-10 ").unwrap(), 1e-10);
        assert!(parse_number("1/0").is_err());
        assert!(parse_number("x").is_err());
        assert!(parse_number("inf").is_err());
    }

    #[test]
    fn config_file_parsing() {
        let text = "# study\ntheta = 1, 100\ntau = 1/16   # coarsest\nT = 0.5\nrungs = 2\nconvection = skew\n\n";
        let o = parse_config(text, Path::new("c.cfg")).unwrap();
        assert_eq!(o.thetas, Some(vec![1.0, 100.0]));
        let s = o.study();
        assert_eq!(s.ladder, vec![(0.0625, 0.03125), (0.03125, 0.015625)]);
        assert_eq!(s.t_final, 0.5);
        assert_eq!(s.nu, 0.1);
        assert_eq!(s.convection, ConvectionForm::Skew);

        let e = parse_config("nu = 0.1\nbogus = 3\n", Path::new("c.cfg")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(parse_config("tau 3\n", Path::new("c.cfg")).is_err());
    }

    #[test]
    fn later_overrides_win() {
        let file = Overrides {
            nu: Some(0.2),
            tau: Some(0.25),
            ..Default::default()
        };
        let cli = Overrides {
            tau: Some(0.5),
            ..Default::default()
        };
        let s = file.merge(cli).study();
        assert_eq!(s.nu, 0.2);
        assert_eq!(s.ladder[0], (0.5, 0.25));
    }

    #[test]
    fn explicit_h_decouples_from_tau() {
        let o = Overrides {
            tau: Some(0.125),
            h: Some(1.0 / 32.0),
            rungs: Some(1),
            ..Default::default()
        };
        assert_eq!(o.study().ladder, vec![(0.125, 1.0 / 32.0)]);
    }

    #[test]
    fn bad_grid_is_recorded_not_fatal() {
        let s = StudyConfig::default();
        let r = run_record(&s, 1.0, 0.125, 0.3, 1.0);
        assert!(r.failed());
        assert!(r.audit.unwrap().failure.is_some());
    }

    #[test]
    fn table_shows_brackets_and_fractions() {
        let mut rs = vec![
            record(1.0, 0.125, [3.48e-2, 0.356, 0.421, 0.0999]),
            record(1.0, 0.0625, [1.29e-2, 0.129, 0.208, 0.0577]),
        ];
        attach_rates(&mut rs);
        let t = format_table(&rs);
        assert!(t.contains("1/16"));
        assert!(t.contains("1.29e-2 [1.43]"), "{t}");
    }
}
