use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use serde::Serialize;

use qls_core::efficiency::are_csv;
use qls_core::gof::{bootstrap_pvalue, w_test, GofKind};
use qls_core::rng::stream_rng;
use qls_core::robustness::{influence_curve, BreakdownPoint};
use qls_core::sim::{run_timing, timing_csv, TimingConfig};
use qls_core::study::{parse_study, run_study, StudyConfig};
use qls_core::{
    are_table, breakdown_point, fit_mle, make_grid, AreResult, AreTarget, Error, EstimatorKind,
    Family, GofResult, OutGrid, ParamMode, Params, QlsFit, QlsModel, QuantileGrid,
};

use crate::data::Dataset;
use crate::{
    AreArgs, BenchArgs, Cli, Command, Failure, FitArgs, Format, GofArgs, GridArgs, InfluenceArgs,
    Layout, Method, Mode, QlsKind, SimulateArgs, Test,
};

const DEFAULT_SEED: u64 = 1;

type Outcome = Result<String, Failure>;

pub fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Fit(a) => fit(a, cli.format),
        Command::Gof(a) => gof(a, cli.format, cli.seed.unwrap_or(DEFAULT_SEED)),
        Command::Are(a) => are(a, cli.format),
        Command::Influence(a) => influence(a, cli.format),
        Command::Simulate(a) => simulate(a, cli.format, cli.seed),
        Command::Bench(a) => bench(a, cli.format, cli.seed.unwrap_or(DEFAULT_SEED)),
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn numeric(e: Error) -> Failure {
    Failure::Numeric(e.to_string())
}

fn json<T: Serialize + ?Sized>(value: &T) -> Outcome {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Numeric(format!("cannot encode output: {e}")))
}

fn family(name: &str) -> Result<Family, Failure> {
    name.parse().map_err(usage)
}

fn families(list: &str) -> Result<Vec<Family>, Failure> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(Family::ALL.to_vec());
    }
    list.split(',').map(family).collect()
}

fn grid(g: &GridArgs) -> Result<QuantileGrid, Failure> {
    make_grid(g.a, g.b, g.k).map_err(usage)
}

fn load(path: &Path) -> Result<Dataset, Failure> {
    let data = Dataset::load(path).map_err(|e| Failure::Input(e.to_string()))?;
    for w in &data.warnings {
        eprintln!("warning: {}: {w}", data.source.display());
    }
    Ok(data)
}

fn kind_of(k: QlsKind) -> EstimatorKind {
    match k {
        QlsKind::Oqls => EstimatorKind::Oqls,
        QlsKind::Gqls => EstimatorKind::Gqls,
    }
}

fn na(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| v.to_string())
}

fn param_mode(a: &FitArgs) -> Result<ParamMode, Failure> {
    match a.mode {
        Mode::LocationScale => Ok(ParamMode::LocationScale),
        Mode::Location => {
            let sigma = a
                .sigma
                .ok_or_else(|| usage("--mode location needs the known scale via --sigma"))?;
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(usage(format!("--sigma must be positive, got {sigma}")));
            }
            Ok(ParamMode::LocationOnly { sigma })
        }
        Mode::Scale => {
            let mu =
                a.mu.ok_or_else(|| usage("--mode scale needs the known location via --mu"))?;
            if !mu.is_finite() {
                return Err(usage(format!("--mu must be finite, got {mu}")));
            }
            Ok(ParamMode::ScaleOnly { mu })
        }
    }
}

#[derive(Serialize)]
struct FitReport {
    family: Family,
    method: EstimatorKind,
    mode: &'static str,
    n: usize,
    mu: f64,
    sigma: f64,
    se_mu: Option<f64>,
    se_sigma: Option<f64>,
    covariance: Vec<Vec<f64>>,
    grid: Option<GridReport>,
    breakdown: Option<BreakdownPoint>,
    iterations: Option<usize>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct GridReport {
    a: f64,
    b: f64,
    k: usize,
}

fn fit(a: &FitArgs, format: Format) -> Outcome {
    let fam = family(&a.family)?;
    let mode = param_mode(a)?;
    let kind = match a.method {
        Method::Oqls => EstimatorKind::Oqls,
        Method::Gqls => EstimatorKind::Gqls,
        Method::Mle => EstimatorKind::Mle,
    };
    let model = match kind {
        EstimatorKind::Mle => None,
        _ => Some(QlsModel::new(fam, grid(&a.grid)?, mode).map_err(numeric)?),
    };
    let data = load(&a.data)?;
    let fit = match &model {
        Some(m) => m.fit(kind, &data.values),
        None => fit_mle(fam, &data.values, mode),
    }
    .map_err(numeric)?;
    if !(fit.sigma > 0.0) {
        return Err(numeric(Error::NonPositiveScale(fit.sigma)));
    }
    let report = fit_report(&fit);
    match format {
        Format::Json => json(&report),
        Format::Csv => Ok(fit_csv(&report)),
        Format::Text => Ok(fit_text(&report)),
    }
}

fn fit_report(fit: &QlsFit) -> FitReport {
    let c = &fit.asy_cov;
    FitReport {
        family: fit.family,
        method: fit.kind,
        mode: fit.mode.name(),
        n: fit.n,
        mu: fit.mu,
        sigma: fit.sigma,
        se_mu: fit.se_mu(),
        se_sigma: fit.se_sigma(),
        covariance: (0..c.rows()).map(|i| c.row(i).to_vec()).collect(),
        grid: fit.grid.as_ref().map(|g| GridReport {
            a: g.a(),
            b: g.b(),
            k: g.k(),
        }),
        breakdown: fit.grid.as_ref().map(breakdown_point),
        iterations: fit.iterations,
        warnings: fit.warnings.iter().map(|w| w.to_string()).collect(),
    }
}

fn fit_csv(r: &FitReport) -> String {
    let (a, b, k) = r
        .grid
        .as_ref()
        .map_or(("NA".into(), "NA".into(), "NA".into()), |g| {
            (g.a.to_string(), g.b.to_string(), g.k.to_string())
        });
    format!(
        "family,method,mode,n,a,b,k,mu,sigma,se_mu,se_sigma,bp\n{},{},{},{},{a},{b},{k},{},{},{},{},{}\n",
        r.family,
        r.method,
        r.mode,
        r.n,
        r.mu,
        r.sigma,
        na(r.se_mu),
        na(r.se_sigma),
        na(r.breakdown.map(|bp| bp.bp)),
    )
}

fn fit_text(r: &FitReport) -> String {
    let se = |v: Option<f64>| v.map_or_else(|| "known".into(), |s| format!("se {s:.6}"));
    let mut out = String::new();
    let _ = writeln!(out, "family      {}", r.family);
    let _ = writeln!(out, "method      {}", r.method);
    let _ = writeln!(out, "mode        {}", r.mode);
    let _ = writeln!(out, "n           {}", r.n);
    if let Some(g) = &r.grid {
        let _ = writeln!(out, "grid        a = {}, b = {}, k = {}", g.a, g.b, g.k);
    }
    let _ = writeln!(out, "mu          {:.6}  ({})", r.mu, se(r.se_mu));
    let _ = writeln!(out, "sigma       {:.6}  ({})", r.sigma, se(r.se_sigma));
    if let Some(bp) = r.breakdown {
        let _ = writeln!(
            out,
            "breakdown   {:.6} (lower {:.6}, upper {:.6})",
            bp.bp, bp.lbp, bp.ubp
        );
    }
    if let Some(it) = r.iterations {
        let _ = writeln!(out, "iterations  {it}");
    }
    for w in &r.warnings {
        let _ = writeln!(out, "warning     {w}");
    }
    out
}

fn out_levels(spec: Option<&str>) -> Result<OutGrid, Failure> {
    let Some(spec) = spec else {
        return Ok(OutGrid::default());
    };
    let spec = spec.trim();
    let levels = if let Ok(r) = spec.parse::<usize>() {
        if r == 0 {
            return Err(usage("--out-levels needs at least one level"));
        }
        (1..=r).map(|j| (j as f64 - 0.5) / r as f64).collect()
    } else {
        spec.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| usage(format!("bad level '{s}' in --out-levels")))
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    OutGrid::new(levels).map_err(usage)
}

#[derive(Serialize)]
struct GofRow {
    family: Family,
    mu: Option<f64>,
    sigma: Option<f64>,
    #[serde(flatten)]
    result: Option<GofResult>,
    reject: Option<bool>,
    error: Option<String>,
}

fn gof(a: &GofArgs, format: Format, seed: u64) -> Outcome {
    let all = a.family.trim().eq_ignore_ascii_case("all");
    let fams = if all {
        Family::ALL.to_vec()
    } else {
        vec![family(&a.family)?]
    };
    let g = grid(&a.grid)?;
    let out = out_levels(a.out_levels.as_deref())?;
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(usage(format!(
            "--alpha must lie in (0, 1), got {}",
            a.alpha
        )));
    }
    if a.test == Test::Wout && a.bootstrap == 0 {
        return Err(usage("--B must be at least 1"));
    }
    let data = load(&a.data)?;

    let one = |fam: Family| -> Result<(QlsFit, GofResult), Error> {
        let model = QlsModel::new(fam, g.clone(), ParamMode::LocationScale)?;
        let fit = model.fit(EstimatorKind::Gqls, &data.values)?;
        if !(fit.sigma > 0.0) {
            return Err(Error::NonPositiveScale(fit.sigma));
        }
        let result = match a.test {
            Test::W => w_test(&model, &fit)?,
            Test::Wout => {
                let stream = Family::ALL.iter().position(|&f| f == fam).unwrap_or(0) as u64;
                let mut rng = stream_rng(seed, stream);
                bootstrap_pvalue(&data.values, fam, &g, &out, a.bootstrap, &mut rng)?
            }
        };
        Ok((fit, result))
    };

    let mut rows = Vec::with_capacity(fams.len());
    for &fam in &fams {
        match one(fam) {
            Ok((fit, result)) => rows.push(GofRow {
                family: fam,
                mu: Some(fit.mu),
                sigma: Some(fit.sigma),
                reject: Some(result.rejects(a.alpha)),
                result: Some(result),
                error: None,
            }),
            Err(e) if !all => return Err(numeric(e)),
            Err(e) => rows.push(GofRow {
                family: fam,
                mu: None,
                sigma: None,
                result: None,
                reject: None,
                error: Some(e.to_string()),
            }),
        }
    }
    if rows.iter().all(|r| r.result.is_none()) {
        return Err(Failure::Numeric("no family could be fitted".into()));
    }
    match format {
        Format::Json if all => json(&rows),
        Format::Json => json(&rows[0]),
        Format::Csv => Ok(gof_csv(&rows, a.alpha)),
        Format::Text if all => Ok(gof_table(&rows, a.alpha)),
        Format::Text => Ok(gof_text(&rows[0], a.alpha)),
    }
}

fn gof_csv(rows: &[GofRow], alpha: f64) -> String {
    let mut out = String::from("family,mu,sigma,test,statistic,dof,b,p_value,alpha,reject,note\n");
    for r in rows {
        match &r.result {
            Some(g) => {
                let test = match g.kind {
                    GofKind::InSample => "w",
                    GofKind::OutOfSample => "wout",
                };
                let warnings: Vec<String> = g.warnings.iter().map(|w| w.to_string()).collect();
                let _ = writeln!(
                    out,
                    "{},{},{},{test},{},{},{},{},{alpha},{},{}",
                    r.family,
                    na(r.mu),
                    na(r.sigma),
                    g.statistic,
                    g.dof.map_or("NA".into(), |d| d.to_string()),
                    g.b_replicates.map_or("NA".into(), |b| b.to_string()),
                    g.p_value,
                    g.rejects(alpha),
                    warnings.join("; ").replace(',', ";"),
                );
            }
            None => {
                let note = r.error.as_deref().unwrap_or("").replace(',', ";");
                let _ = writeln!(out, "{},NA,NA,NA,NA,NA,NA,NA,{alpha},NA,{note}", r.family);
            }
        }
    }
    out
}

fn gof_text(r: &GofRow, alpha: f64) -> String {
    let Some(g) = &r.result else {
        return String::new();
    };
    let mut out = String::new();
    let _ = writeln!(out, "family      {}", r.family);
    let _ = writeln!(out, "mu          {:.6}", r.mu.unwrap_or(f64::NAN));
    let _ = writeln!(out, "sigma       {:.6}", r.sigma.unwrap_or(f64::NAN));
    match g.kind {
        GofKind::InSample => {
            let _ = writeln!(out, "test        W (in-sample)");
            let _ = writeln!(out, "statistic   {:.6}", g.statistic);
            let _ = writeln!(out, "dof         {}", g.dof.unwrap_or(0));
        }
        GofKind::OutOfSample => {
            let _ = writeln!(out, "test        W_out (parametric bootstrap)");
            let _ = writeln!(out, "statistic   {:.6}", g.statistic);
            let _ = writeln!(out, "replicates  {}", g.b_replicates.unwrap_or(0));
        }
    }
    let _ = writeln!(out, "p-value     {}", g.p_value_display());
    let verdict = if g.rejects(alpha) {
        "reject"
    } else {
        "do not reject"
    };
    let _ = writeln!(out, "decision    {verdict} at alpha = {alpha}");
    for w in &g.warnings {
        let _ = writeln!(out, "warning     {w}");
    }
    out
}

fn gof_table(rows: &[GofRow], alpha: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>12} {:>12} {:>12} {:>8} {:>10}  reject({alpha})",
        "family", "mu", "sigma", "statistic", "dof/B", "p-value"
    );
    for r in rows {
        match &r.result {
            Some(g) => {
                let df = g.dof.or(g.b_replicates).unwrap_or(0);
                let _ = writeln!(
                    out,
                    "{:<12} {:>12.5} {:>12.5} {:>12.4} {:>8} {:>10}  {}",
                    r.family.name(),
                    r.mu.unwrap_or(f64::NAN),
                    r.sigma.unwrap_or(f64::NAN),
                    g.statistic,
                    df,
                    g.p_value_display(),
                    if g.rejects(alpha) { "yes" } else { "no" }
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "{:<12} {:>12} {:>12} {:>12} {:>8} {:>10}  NA  ({})",
                    r.family.name(),
                    "NA",
                    "NA",
                    "NA",
                    "NA",
                    "NA",
                    r.error.as_deref().unwrap_or("")
                );
            }
        }
    }
    out
}

fn parse_pairs(spec: &str) -> Result<Vec<(f64, f64)>, Failure> {
    spec.split(',')
        .map(|item| {
            let (a, b) = item
                .trim()
                .split_once(':')
                .ok_or_else(|| usage(format!("grid '{item}' is not of the form a:b")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| usage(format!("bad number '{s}' in grid '{item}'")))
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

fn parse_ks(spec: &str) -> Result<Vec<usize>, Failure> {
    let mut ks = Vec::new();
    for item in spec.split(',') {
        let item = item.trim();
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| usage(format!("bad k '{s}' in --k-range")))
        };
        match item.split_once(':') {
            Some((lo, hi)) => {
                let (lo, hi) = (parse(lo)?, parse(hi)?);
                if lo > hi {
                    return Err(usage(format!("empty k range '{item}'")));
                }
                ks.extend(lo..=hi);
            }
            None => ks.push(parse(item)?),
        }
    }
    Ok(ks)
}

fn are(a: &AreArgs, format: Format) -> Outcome {
    let kind = kind_of(a.kind);
    let fams = families(&a.families)?;
    let pairs = parse_pairs(&a.grids)?;
    let ks = parse_ks(&a.k_range)?;
    let targets = a
        .mode
        .split(',')
        .map(|t| t.trim().parse::<AreTarget>().map_err(usage))
        .collect::<Result<Vec<_>, _>>()?;
    for &(lo, hi) in &pairs {
        for &k in &ks {
            make_grid(lo, hi, k).map_err(usage)?;
        }
    }
    let grids: Vec<(f64, f64, usize)> = pairs
        .iter()
        .flat_map(|&(lo, hi)| ks.iter().map(move |&k| (lo, hi, k)))
        .collect();
    let rows = are_table(kind, &fams, &grids, &targets);
    match (format, a.layout) {
        (Format::Json, _) => json(&rows),
        (_, Layout::Long) => Ok(are_csv(&rows)),
        (_, Layout::Wide) => Ok(are_wide(&rows, kind, &fams, &pairs, &ks, &targets)),
    }
}

fn are_wide(
    rows: &[AreResult],
    kind: EstimatorKind,
    fams: &[Family],
    pairs: &[(f64, f64)],
    ks: &[usize],
    targets: &[AreTarget],
) -> String {
    let cell: HashMap<(Family, AreTarget, u64, u64, usize), Option<f64>> = rows
        .iter()
        .map(|r| {
            (
                (r.family, r.target, r.a.to_bits(), r.b.to_bits(), r.k),
                r.are,
            )
        })
        .collect();
    let mut out = String::from("family,kind,mode,a,b");
    for k in ks {
        let _ = write!(out, ",k{k}");
    }
    out.push('\n');
    for &(lo, hi) in pairs {
        for &fam in fams {
            for &t in targets {
                let _ = write!(out, "{fam},{kind},{t},{lo},{hi}");
                for &k in ks {
                    let v = cell
                        .get(&(fam, t, lo.to_bits(), hi.to_bits(), k))
                        .copied()
                        .flatten();
                    let _ = write!(out, ",{}", v.map_or("NA".into(), |v| format!("{v:.6}")));
                }
                out.push('\n');
            }
        }
    }
    out
}

fn parse_range(spec: &str) -> Result<(f64, f64), Failure> {
    let bad = || usage(format!("--range '{spec}' is not of the form lo:hi"));
    // A leading minus sign belongs to the lower bound, so split after it.
    let (lo, hi) = spec
        .get(1..)
        .and_then(|rest| rest.split_once(':'))
        .ok_or_else(bad)?;
    let lo = format!("{}{lo}", &spec[..1]);
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn influence(a: &InfluenceArgs, format: Format) -> Outcome {
    let fam = family(&a.family)?;
    let g = grid(&a.grid)?;
    let params = Params::new(a.mu, a.sigma).map_err(usage)?;
    let range = match &a.range {
        Some(r) => parse_range(r)?,
        None => {
            let lo = fam.qf(g.a(), params).map_err(numeric)?;
            let hi = fam.qf(g.b(), params).map_err(numeric)?;
            let pad = 0.25 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let curve =
        influence_curve(kind_of(a.kind), fam, params, &g, range, a.points).map_err(numeric)?;
    match format {
        Format::Json => json(&curve),
        _ => Ok(curve.to_csv()),
    }
}

fn simulate(a: &SimulateArgs, format: Format, seed: Option<u64>) -> Outcome {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| Failure::Input(format!("{}: {e}", a.config.display())))?;
    let input = |e: Error| Failure::Input(format!("{}: {e}", a.config.display()));
    let mut config = parse_study(&text).map_err(input)?;
    if let Some(s) = seed {
        match &mut config {
            StudyConfig::MonteCarlo(c) => c.seed = s,
            StudyConfig::Power(c) => c.seed = s,
            StudyConfig::Timing(c) => c.seed = s,
        }
    }
    match &config {
        StudyConfig::MonteCarlo(c) => c.to_config().map(drop),
        StudyConfig::Power(c) => c.to_study().map(drop),
        StudyConfig::Timing(c) => c.to_config().map(drop),
    }
    .map_err(input)?;
    let output = run_study(&config).map_err(numeric)?;
    match format {
        Format::Json => json(&output),
        _ => Ok(output.to_csv()),
    }
}

fn parse_size(s: &str) -> Result<usize, Failure> {
    let s = s.trim();
    let bad = || usage(format!("bad sample size '{s}'"));
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let v: f64 = s.parse().map_err(|_| bad())?;
    if v >= 1.0 && v.fract() == 0.0 && v <= 1e15 {
        Ok(v as usize)
    } else {
        Err(bad())
    }
}

fn bench(a: &BenchArgs, format: Format, seed: u64) -> Outcome {
    let sizes = a
        .sizes
        .split(',')
        .map(parse_size)
        .collect::<Result<Vec<_>, _>>()?;
    let estimators = a
        .methods
        .split(',')
        .map(|m| m.trim().parse::<EstimatorKind>().map_err(usage))
        .collect::<Result<Vec<_>, _>>()?;
    if !(a.cap > 0.0 && a.cap.is_finite()) {
        return Err(usage(format!("--cap must be positive, got {}", a.cap)));
    }
    let config = TimingConfig {
        families: families(&a.families)?,
        estimators,
        sizes,
        repeats: a.repeats,
        grid: grid(&a.grid)?,
        cap: Duration::from_secs_f64(a.cap),
        seed,
    };
    let rows = run_timing(&config).map_err(|e| match e {
        Error::InvalidConfig(m) => Failure::Usage(m),
        other => numeric(other),
    })?;
    match format {
        Format::Json => json(&rows),
        _ => Ok(timing_csv(&rows)),
    }
}
