use std::path::Path;

use ctexp::aircraft;
use ctexp::design::{
    rank_condition, run_online_design, verify_intersample, BranchBRule, DesignOptions, DesignResult, InputPolicy,
    SimulatedPlant,
};
use ctexp::filtered::{
    build_relation_matrices, factorization_residual, filtered_dataset, verify_algebraic, FilteredDataset,
};
use ctexp::filters::{decompose, make_filter_bank, FilterFamily};
use ctexp::lti::{dense_trajectory, simulate_sampled, ExactTrajectory, PiecewiseConstantInput, SampledDataset};
use ctexp::numlin::{svd_rank, Matrix};
use ctexp::sysid::{identify as identify_fd, IdentificationResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::config::{Overrides, Resolved, RunConfig};
use crate::output::{num, read_json, OutDir};
use crate::{CliError, GlobalArgs};

/// Relative residual bar for the algebraic and factorization checks.
const RESIDUAL_BAR: f64 = 1e-8;
/// Intersample instants checked by `verify`.
const INTERSAMPLE_POINTS: usize = 10;

fn resolve(g: &GlobalArgs) -> Result<Resolved, CliError> {
    let overrides = Overrides {
        seed: g.seed,
        rtol: g.rtol,
        panels: g.panels,
    };
    match &g.config {
        Some(path) => {
            let base = path.parent().unwrap_or(Path::new("."));
            RunConfig::load(path)?.resolve(&overrides, base)
        }
        None => Err(CliError::Validation("this command needs --config".into())),
    }
}

fn require_input(r: &Resolved) -> Result<&PiecewiseConstantInput, CliError> {
    r.input
        .as_ref()
        .ok_or_else(|| CliError::Validation("the configuration has no 'input'".into()))
}

pub fn simulate(g: &GlobalArgs, points: usize) -> Result<(), CliError> {
    let r = resolve(g)?;
    let input = require_input(&r)?;
    if points == 0 {
        return Err(CliError::Validation("--points must be at least 1".into()));
    }
    let out = OutDir::create(&g.out)?;
    let sampled = simulate_sampled(&r.system, input)?;
    let grid: Vec<f64> = (0..input.len() * points)
        .map(|i| (i / points) as f64 * r.period + r.period * (i % points) as f64 / points as f64)
        .collect();
    let traj = dense_trajectory(&r.system, input, &grid)?;
    let mut header = vec!["time".to_string()];
    header.extend((1..=r.system.n()).map(|i| format!("x{i}")));
    let rows: Vec<Vec<String>> = traj
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| std::iter::once(num(t)).chain(traj.states.column(i).iter().map(|&v| num(v))).collect())
        .collect();
    out.write_csv("trajectory.csv", &header, &rows)?;
    let path = out.write_json("sampled.json", &sampled)?;
    println!("{} samples written to {}", sampled.len(), path.display());
    Ok(())
}

fn design_with(r: &Resolved, opts: &DesignOptions) -> Result<DesignResult, ctexp::Error> {
    let mut plant = SimulatedPlant::new(r.system.clone(), r.period)?;
    run_online_design(&mut plant, r.system.n(), r.system.m(), r.period, opts)
}

pub fn design(g: &GlobalArgs) -> Result<(), CliError> {
    let r = resolve(g)?;
    let out = OutDir::create(&g.out)?;
    match design_with(&r, &r.design) {
        Ok(res) => {
            let path = out.write_json("design.json", &res)?;
            println!(
                "design reached rank {} with {} samples; written to {}",
                res.rank.rank,
                res.dataset.len(),
                path.display()
            );
            Ok(())
        }
        Err(e @ ctexp::Error::DesignFailure { .. }) => {
            if let ctexp::Error::DesignFailure { step, reason, ranks } = &e {
                let diag = serde_json::json!({ "step": step, "reason": reason, "ranks": ranks });
                out.write_json("design_failure.json", &diag)?;
            }
            Err(e.into())
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DatasetFile {
    Design(DesignResult),
    Sampled(SampledDataset),
}

/// The experiment to filter: a dataset file when given, else the configured input.
fn experiment(r: &Resolved, dataset: Option<&Path>) -> Result<ExactTrajectory, CliError> {
    let (input, x0) = match dataset {
        Some(path) => {
            let sd = match read_json::<DatasetFile>(path)? {
                DatasetFile::Design(d) => d.dataset,
                DatasetFile::Sampled(s) => s,
            };
            if sd.is_empty() {
                return Err(CliError::Validation("dataset has no samples".into()));
            }
            if (sd.period - r.period).abs() > 1e-12 * r.period {
                return Err(CliError::Validation("dataset period differs from the configuration".into()));
            }
            (sd.input()?, sd.chi.column(0).into_owned())
        }
        None => (require_input(r)?.clone(), r.system.x0.clone()),
    };
    Ok(ExactTrajectory::new(&r.system.with_x0(x0)?, &input)?)
}

fn filter_config(r: &Resolved) -> Result<&crate::config::FilterConfig, CliError> {
    r.filter
        .as_ref()
        .ok_or_else(|| CliError::Validation("the configuration has no 'filter'".into()))
}

fn filtered_for(r: &Resolved, traj: &ExactTrajectory, count: usize) -> Result<FilteredDataset, CliError> {
    let f = filter_config(r)?;
    let bank = make_filter_bank(f.family, f.rho, r.period, count, traj.intervals())?;
    let fd = filtered_dataset(&bank, traj, &r.numeric)?;
    if let Some(q) = &fd.quadrature_report {
        let worst = q.max_error();
        if worst > r.numeric.quad_error_bound {
            eprintln!("warning: quadrature error estimate {worst:e} exceeds {:e}", r.numeric.quad_error_bound);
        }
    }
    Ok(fd)
}

pub fn filter(g: &GlobalArgs, dataset: Option<&Path>) -> Result<(), CliError> {
    let r = resolve(g)?;
    let traj = experiment(&r, dataset)?;
    let f = filter_config(&r)?;
    let count = f.count.unwrap_or(traj.intervals());
    if count > traj.intervals() {
        return Err(CliError::Validation(format!(
            "M = {count} filters need at least as many samples, got N = {}",
            traj.intervals()
        )));
    }
    let fd = filtered_for(&r, &traj, count)?;
    let out = OutDir::create(&g.out)?;
    let path = out.write_json("filtered.json", &fd)?;
    println!("{} x {} filtered data ({}) written to {}", fd.n(), fd.count, fd.family, path.display());
    Ok(())
}

fn summary(res: &IdentificationResult) -> String {
    let verdict = if res.informative { "informative" } else { "NOT informative" };
    let mut s = format!(
        "rank {} ({verdict}), residual {:e}",
        res.stacked_rank.rank, res.residual
    );
    if let Some(e) = res.frobenius_error {
        s.push_str(&format!(", Frobenius error {e:e}"));
    }
    s
}

pub fn identify(g: &GlobalArgs, filtered: Option<&Path>, truth: bool) -> Result<(), CliError> {
    let default = g.out.join("filtered.json");
    let fd: FilteredDataset = read_json(filtered.unwrap_or(&default))?;
    let (rtol, sys) = match (&g.config, truth) {
        (Some(_), _) => {
            let r = resolve(g)?;
            (r.numeric.rank_rtol, truth.then_some(r.system))
        }
        (None, true) => return Err(CliError::Validation("--truth needs --config".into())),
        (None, false) => (g.rtol.unwrap_or(ctexp::NumericConfig::default().rank_rtol), None),
    };
    let res = identify_fd(&fd, rtol, sys.as_ref())?;
    let out = OutDir::create(&g.out)?;
    out.write_json("identification.json", &res)?;
    println!("{}", summary(&res));
    Ok(())
}

struct Check {
    name: &'static str,
    status: &'static str,
    value: String,
    bar: String,
}

impl Check {
    fn measured(name: &'static str, value: f64, bar: f64) -> Self {
        Check {
            name,
            status: if value <= bar { "pass" } else { "fail" },
            value: num(value),
            bar: num(bar),
        }
    }

    fn not_applicable(name: &'static str, why: &str) -> Self {
        Check {
            name,
            status: "not applicable",
            value: why.to_string(),
            bar: String::new(),
        }
    }
}

pub fn verify(g: &GlobalArgs, filtered: Option<&Path>) -> Result<(), CliError> {
    let r = resolve(g)?;
    let (n, m) = (r.system.n(), r.system.m());
    let input = match &r.input {
        Some(u) => u.clone(),
        None => design_with(&r, &r.design)?.dataset.input()?,
    };
    let traj = ExactTrajectory::new(&r.system, &input)?;
    let sampled = traj.sampled();
    let big_n = input.len();
    let fd = match filtered {
        Some(path) => read_json::<FilteredDataset>(path)?,
        None => filtered_for(&r, &traj, filter_config(&r)?.count.unwrap_or(big_n))?,
    };
    if fd.n() != n || fd.m() != m {
        return Err(CliError::Validation("filtered data does not match the system dimensions".into()));
    }
    let mut checks = Vec::new();

    let scale = fd.x_df.norm().max(f64::MIN_POSITIVE);
    checks.push(Check::measured("algebraic_relation", verify_algebraic(&fd, &r.system)? / scale, RESIDUAL_BAR));

    let decomposable = fd.count <= big_n;
    if decomposable {
        let bank = make_filter_bank(fd.family, fd.rho, r.period, fd.count, big_n)?;
        let rel = build_relation_matrices(&r.system, &decompose(&bank)?, &r.numeric)?;
        let res = factorization_residual(&rel, &sampled, &fd)? / fd.stacked().norm().max(f64::MIN_POSITIVE);
        checks.push(Check::measured("factorization", res, RESIDUAL_BAR));

        let mut mismatches = 0;
        for k in 1..=fd.count {
            let a = svd_rank(&sampled.stacked_prefix(k), r.numeric.rank_rtol)?.rank;
            let b = svd_rank(&fd.stacked_prefix(k), r.numeric.rank_rtol)?.rank;
            mismatches += usize::from(a != b);
        }
        checks.push(Check::measured("rank_ladder", mismatches as f64, 0.0));
    } else {
        let why = format!("M = {} exceeds N = {big_n}", fd.count);
        checks.push(Check::not_applicable("factorization", &why));
        checks.push(Check::not_applicable("rank_ladder", &why));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(g.seed.unwrap_or(0));
    let ts: Vec<f64> = (0..INTERSAMPLE_POINTS).map(|_| rng.random_range(0.0..r.period)).collect();
    let deficient = verify_intersample(&r.system, &input, &ts, r.numeric.rank_rtol)?
        .iter()
        .filter(|(_, rep)| rep.rank != n + m)
        .count();
    checks.push(Check::measured("intersample_rank", deficient as f64, 0.0));

    let out = OutDir::create(&g.out)?;
    let header: Vec<String> = ["check", "status", "value", "bar"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| vec![c.name.to_string(), c.status.to_string(), c.value.clone(), c.bar.clone()])
        .collect();
    out.write_csv("verify.csv", &header, &rows)?;
    for c in &checks {
        println!("{:<20} {:<15} {} {}", c.name, c.status, c.value, c.bar);
    }
    let failing: Vec<&str> = checks.iter().filter(|c| c.status == "fail").map(|c| c.name).collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failing.join(", ")))
    }
}

struct DiffRow {
    quantity: String,
    index: String,
    reference: f64,
    computed: f64,
    bar: f64,
    /// Compare `computed` alone against the bar instead of `|computed - reference|`.
    upper_bound: bool,
}

impl DiffRow {
    fn diff(&self) -> f64 {
        (self.computed - self.reference).abs()
    }

    fn pass(&self) -> bool {
        if self.upper_bound {
            self.computed <= self.bar
        } else {
            self.diff() <= self.bar
        }
    }
}

fn matrix_rows(quantity: &str, reference: &Matrix, computed: &Matrix, bar: f64, rows: &mut Vec<DiffRow>) {
    for i in 0..reference.nrows() {
        for j in 0..reference.ncols() {
            rows.push(DiffRow {
                quantity: quantity.to_string(),
                index: format!("{},{}", i + 1, j + 1),
                reference: reference[(i, j)],
                computed: computed[(i, j)],
                bar,
                upper_bound: false,
            });
        }
    }
}

pub fn demo_aircraft(g: &GlobalArgs) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: None,
        rtol: g.rtol,
        panels: g.panels,
    };
    let r = RunConfig::aircraft().resolve(&overrides, Path::new("."))?;
    let input = require_input(&r)?.clone();
    let rtol = r.numeric.rank_rtol;
    let out = OutDir::create(&g.out)?;
    let mut rows = Vec::new();

    let traj = ExactTrajectory::new(&r.system, &input)?;
    let sampled = simulate_sampled(&r.system, &input)?;
    out.write_json("sampled.json", &sampled)?;
    let chi = sampled.chi_with_terminal().expect("simulation records the terminal state");
    matrix_rows("chi", &aircraft::reference_chi(), &chi, 5e-4, &mut rows);
    let rank_row = |quantity: &str, computed: usize| DiffRow {
        quantity: quantity.to_string(),
        index: String::new(),
        reference: 6.0,
        computed: computed as f64,
        bar: 0.0,
        upper_bound: false,
    };
    rows.push(rank_row("rank_sampled", rank_condition(&sampled, rtol)?.rank));

    for family in [FilterFamily::PolyTest, FilterFamily::Lowpass] {
        let reference = aircraft::reference_filtered(family).expect("reference tables exist");
        let bank = make_filter_bank(family, reference.rho, r.period, input.len(), input.len())?;
        let fd = filtered_dataset(&bank, &traj, &r.numeric)?;
        out.write_json(&format!("filtered_{family}.json"), &fd)?;
        matrix_rows(&format!("{family}_x_f"), &reference.x_f, &fd.x_f, 5e-4, &mut rows);
        matrix_rows(&format!("{family}_u_f"), &reference.u_f, &fd.u_f, 5e-4, &mut rows);
        matrix_rows(&format!("{family}_x_df"), &reference.x_df, &fd.x_df, 5e-4, &mut rows);
        let id = identify_fd(&fd, rtol, Some(&r.system))?;
        out.write_json(&format!("identification_{family}.json"), &id)?;
        rows.push(rank_row(&format!("rank_{family}"), id.stacked_rank.rank));
        rows.push(DiffRow {
            quantity: format!("{family}_frobenius_error"),
            index: String::new(),
            reference: reference.error,
            computed: id.frobenius_error.expect("truth supplied"),
            bar: 1e-5,
            upper_bound: true,
        });
    }

    let online = design_with(&r, &r.design)?;
    out.write_json("design.json", &online)?;
    rows.push(rank_row("rank_online_design", online.rank.rank));
    let replay = DesignOptions {
        policy: InputPolicy::Alternating,
        branch_b: BranchBRule::PolicyFirst,
        rtol,
    };
    let replayed = design_with(&r, &replay)?;
    matrix_rows("design_input_alternating", &input.levels, &replayed.dataset.mu, 0.0, &mut rows);

    let header: Vec<String> = ["quantity", "index", "reference", "computed", "abs_diff", "bar", "pass"]
        .map(String::from)
        .to_vec();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|d| {
            vec![
                d.quantity.clone(),
                d.index.clone(),
                num(d.reference),
                num(d.computed),
                num(d.diff()),
                num(d.bar),
                d.pass().to_string(),
            ]
        })
        .collect();
    let path = out.write_csv("demo_aircraft.csv", &header, &table)?;

    let mut quantities: Vec<&str> = Vec::new();
    for d in &rows {
        if !quantities.contains(&d.quantity.as_str()) {
            quantities.push(&d.quantity);
        }
    }
    println!("{:<32} {:>8} {:>12} {:>10}", "quantity", "entries", "worst", "status");
    for q in &quantities {
        let group: Vec<&DiffRow> = rows.iter().filter(|d| d.quantity == *q).collect();
        let worst = group
            .iter()
            .map(|d| if d.upper_bound { d.computed } else { d.diff() })
            .fold(0.0, f64::max);
        let ok = group.iter().all(|d| d.pass());
        println!("{q:<32} {:>8} {worst:>12.3e} {:>10}", group.len(), if ok { "ok" } else { "FAIL" });
    }
    println!("diff table written to {}", path.display());
    let failing: Vec<&str> = quantities
        .iter()
        .copied()
        .filter(|q| rows.iter().any(|d| d.quantity == *q && !d.pass()))
        .collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failing.join(", ")))
    }
}

pub fn plot_data(
    g: &GlobalArgs,
    family: FilterFamily,
    rho: f64,
    period: f64,
    count: usize,
    intervals: usize,
    points: usize,
) -> Result<(), CliError> {
    if points == 0 {
        return Err(CliError::Validation("--points must be at least 1".into()));
    }
    let bank = make_filter_bank(family, rho, period, count, intervals)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=count).map(|l| format!("g{l}")));
    let rows: Vec<Vec<String>> = bank
        .plot_data(points)
        .into_iter()
        .map(|(t, vals)| std::iter::once(num(t)).chain(vals.into_iter().map(num)).collect())
        .collect();
    let out = OutDir::create(&g.out)?;
    let path = out.write_csv(&format!("filters_{family}.csv"), &header, &rows)?;
    println!("{} rows written to {}", rows.len(), path.display());
    Ok(())
}
