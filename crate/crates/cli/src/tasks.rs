//! The ten batch tasks. Each returns a [`TaskReport`]; configuration
//! problems surface as [`CliError::Config`], library failures as
//! [`CliError::Computation`].

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use num_rational::BigRational;
use qes_core::conserved::{
    affine_fit, collocation_points, conserved_matrix, default_point_count, MAX_N,
};
use qes_core::degeneration::{
    degenerate_hamiltonian_matrix, degenerate_spectrum, gauge_limit_check, limit_spectrum_check,
    DegenerateCoupling,
};
use qes_core::elliptic::EllipticParams;
use qes_core::inozemtsev::{
    binomial, dimension_report, enumerate_gauge_choices, format_rational, hamiltonian_matrix,
    l2_membership, leading_coefficient_law, parse_rational, spectrum, CouplingSet, GaugeChoice,
};
use qes_core::operator::relative_commutator;
use qes_core::ring::ESym;
use qes_core::ruijsenaars::{
    nonrelativistic_limit_check, phi_isomorphism, theta_basis, theta_points, verify_y1_invariance,
    IndexPairing, LimitSetup, RuijsenaarsParams, TestFunction,
};
use qes_core::selftest::run_selftest;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{
    DegenerateSection, GaugePolicy, LimitNonrelSection, PairingChoice, RuijsenaarsSection,
    RunConfig,
};
use crate::output::{complex_json, complex_string, Assertion, Relation, Table, TaskReport};
use crate::CliError;

type C64 = Complex64;
type Q = BigRational;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Spectrum,
    VerifyInvariance,
    VerifyCommuting,
    Dims,
    RuijsenaarsCheck,
    PhiIsomorphism,
    LimitNonrel,
    DegenerateSpectrum,
    LimitTrig,
    SpecfunSelftest,
}

impl Task {
    pub const ALL: [Task; 10] = [
        Task::Spectrum,
        Task::VerifyInvariance,
        Task::VerifyCommuting,
        Task::Dims,
        Task::RuijsenaarsCheck,
        Task::PhiIsomorphism,
        Task::LimitNonrel,
        Task::DegenerateSpectrum,
        Task::LimitTrig,
        Task::SpecfunSelftest,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Task::Spectrum => "spectrum",
            Task::VerifyInvariance => "verify-invariance",
            Task::VerifyCommuting => "verify-commuting",
            Task::Dims => "dims",
            Task::RuijsenaarsCheck => "ruijsenaars-check",
            Task::PhiIsomorphism => "phi-isomorphism",
            Task::LimitNonrel => "limit-nonrel",
            Task::DegenerateSpectrum => "degenerate-spectrum",
            Task::LimitTrig => "limit-trig",
            Task::SpecfunSelftest => "specfun-selftest",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown task {s:?}")))
    }
}

pub fn run_task(task: Task, cfg: &RunConfig) -> Result<TaskReport, CliError> {
    log::info!("running {task} with seed {}", cfg.seed);
    let (table, assertions, results) = match task {
        Task::Spectrum => spectrum_task(cfg)?,
        Task::VerifyInvariance => verify_invariance(cfg)?,
        Task::VerifyCommuting => verify_commuting(cfg)?,
        Task::Dims => dims(cfg)?,
        Task::RuijsenaarsCheck => ruijsenaars_check(cfg)?,
        Task::PhiIsomorphism => phi_task(cfg)?,
        Task::LimitNonrel => limit_nonrel(cfg)?,
        Task::DegenerateSpectrum => degenerate_task(cfg)?,
        Task::LimitTrig => limit_trig(cfg)?,
        Task::SpecfunSelftest => specfun(cfg)?,
    };
    for a in &assertions {
        log::debug!(
            "{} -> {}",
            a.describe(),
            if a.passed { "pass" } else { "fail" }
        );
    }
    Ok(TaskReport {
        task: task.name().to_string(),
        table,
        assertions,
        results,
    })
}

type Outcome = (Table, Vec<Assertion>, Value);

fn tol(cfg: &RunConfig, default: f64) -> f64 {
    cfg.tol.unwrap_or(default)
}

fn rat(s: &str, key: &str) -> Result<Q, CliError> {
    parse_rational(s).map_err(|e| CliError::Config(format!("{key}: {e}")))
}

fn rat_str(q: &Q) -> String {
    format_rational(q)
}

fn elliptic(cfg: &RunConfig) -> Result<EllipticParams, CliError> {
    let e = &cfg.elliptic;
    let p = match e.nome {
        Some(p) => EllipticParams::from_real_nome(p),
        None => EllipticParams::new(C64::new(e.tau[0], e.tau[1])),
    };
    p.map_err(|err| CliError::Config(format!("elliptic: {err}")))
}

/// Gauge choices selected by `[gauge]` or enumerated from `[model]`.
fn gauges(cfg: &RunConfig) -> Result<Vec<GaugeChoice>, CliError> {
    if let Some(g) = &cfg.gauge {
        let b = [
            rat(&g.b[0], "gauge.b")?,
            rat(&g.b[1], "gauge.b")?,
            rat(&g.b[2], "gauge.b")?,
            rat(&g.b[3], "gauge.b")?,
        ];
        let choice = GaugeChoice::new(g.n, rat(&g.a, "gauge.a")?, b);
        if let Err(e) = choice.admissible_degree() {
            return Err(CliError::Config(format!("no admissible gauge choice: {e}")));
        }
        return Ok(vec![choice]);
    }
    let m = cfg
        .model
        .as_ref()
        .ok_or_else(|| CliError::Config("a [model] or [gauge] section is required".into()))?;
    let c = couplings(cfg)?;
    let mut out = Vec::new();
    for g in enumerate_gauge_choices(&c) {
        if m.degree.is_some() && g.degree() != m.degree {
            continue;
        }
        if m.policy == GaugePolicy::L2
            && !l2_membership(&g, &c)
                .map_err(|e| CliError::Config(e.to_string()))?
                .member
        {
            continue;
        }
        out.push(g);
    }
    if out.is_empty() {
        return Err(CliError::Config(format!(
            "no admissible gauge choice for N = {}, l = {}, l_ext = {:?}, degree {:?}, policy {:?}",
            m.n, m.l, m.l_ext, m.degree, m.policy
        )));
    }
    Ok(out)
}

fn couplings(cfg: &RunConfig) -> Result<CouplingSet, CliError> {
    let m = cfg
        .model
        .as_ref()
        .ok_or_else(|| CliError::Config("a [model] section is required".into()))?;
    let ls = [
        rat(&m.l_ext[0], "model.l_ext")?,
        rat(&m.l_ext[1], "model.l_ext")?,
        rat(&m.l_ext[2], "model.l_ext")?,
        rat(&m.l_ext[3], "model.l_ext")?,
    ];
    CouplingSet::new(m.n, rat(&m.l, "model.l")?, ls).map_err(|e| CliError::Config(e.to_string()))
}

fn gauge_json(g: &GaugeChoice) -> Value {
    json!({
        "n": g.n,
        "a": rat_str(&g.a),
        "b": g.b.iter().map(rat_str).collect::<Vec<_>>(),
        "d": rat_str(&g.d),
    })
}

fn gauge_cells(i: usize, g: &GaugeChoice) -> Vec<String> {
    let mut v = vec![i.to_string(), rat_str(&g.a)];
    v.extend(g.b.iter().map(rat_str));
    v.push(rat_str(&g.d));
    v
}

const GAUGE_COLUMNS: [(&str, &str); 7] = [
    ("gauge", "index of the gauge choice"),
    ("a", "pair exponent, exact rational"),
    ("b0", "exponent at half-period 0, exact rational"),
    ("b1", "exponent at half-period 1, exact rational"),
    ("b2", "exponent at half-period 2, exact rational"),
    ("b3", "exponent at half-period 3, exact rational"),
    ("d", "per-variable degree of the invariant space"),
];

fn with_gauge_columns(extra: &[(&'static str, &'static str)]) -> Table {
    let cols: Vec<(&str, &str)> = GAUGE_COLUMNS.iter().chain(extra).copied().collect();
    Table::new(&cols)
}

fn spectrum_task(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ep = elliptic(cfg)?;
    let gs = gauges(cfg)?;
    let t = tol(cfg, 1e-8);
    let mut table = with_gauge_columns(&[
        (
            "index",
            "eigenvalue index, sorted by real then imaginary part",
        ),
        (
            "eigenvalue",
            "eigenvalue of the gauged Hamiltonian, complex re+imi",
        ),
    ]);
    let mut assertions = Vec::new();
    let mut blocks = Vec::new();
    for (i, g) in gs.iter().enumerate() {
        let m = hamiltonian_matrix::<C64>(g, &ep.e)?;
        let s = spectrum(&m)?;
        for (k, ev) in s.eigenvalues.iter().enumerate() {
            let mut row = gauge_cells(i, g);
            row.extend([k.to_string(), complex_string(*ev)]);
            table.push(row);
        }
        assertions.push(Assertion::new(
            format!("closure_residual[{i}]"),
            m.closure_residual,
            Relation::Lt,
            t,
        ));
        assertions.push(Assertion::new(
            format!("backward_error[{i}]"),
            s.backward_error,
            Relation::Lt,
            t,
        ));
        blocks.push(json!({
            "gauge": gauge_json(g),
            "dim": m.dim(),
            "closure_residual": m.closure_residual,
            "backward_error": s.backward_error,
            "eigenvalues": s.eigenvalues.iter().map(|&z| complex_json(z)).collect::<Vec<_>>(),
            "clusters": s.clusters.iter().map(|(z, k)| json!({"value": complex_json(*z), "multiplicity": k})).collect::<Vec<_>>(),
        }));
    }
    Ok((
        table,
        assertions,
        json!({ "tau": complex_json(ep.tau), "spectra": blocks }),
    ))
}

fn verify_invariance(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let gs = gauges(cfg)?;
    let mut table = with_gauge_columns(&[
        ("dim", "dimension of the invariant space"),
        (
            "closure_residual",
            "largest coefficient outside the space, exact symbolic ring",
        ),
        (
            "leading_checked",
            "monomials checked against the leading-coefficient law",
        ),
        ("leading_violations", "monomials violating the law"),
    ]);
    let mut assertions = Vec::new();
    let mut blocks = Vec::new();
    for (i, g) in gs.iter().enumerate() {
        let m = hamiltonian_matrix::<ESym>(g, &ESym::triple())?;
        let law = leading_coefficient_law(g)?;
        let mut row = gauge_cells(i, g);
        row.extend([
            m.dim().to_string(),
            m.closure_residual.to_string(),
            law.checked.to_string(),
            law.violations.len().to_string(),
        ]);
        table.push(row);
        assertions.push(Assertion::new(
            format!("exact_closure[{i}]"),
            m.closure_residual,
            Relation::Eq,
            0.0,
        ));
        assertions.push(Assertion::new(
            format!("leading_coefficient_law[{i}]"),
            law.violations.len() as f64,
            Relation::Eq,
            0.0,
        ));
        blocks.push(json!({
            "gauge": gauge_json(g),
            "dim": m.dim(),
            "closure_residual": m.closure_residual,
            "leading_checked": law.checked,
            "leading_violations": law.violations.iter().map(|p| p.parts().to_vec()).collect::<Vec<_>>(),
        }));
    }
    Ok((table, assertions, json!({ "gauges": blocks })))
}

fn verify_commuting(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ep = elliptic(cfg)?;
    let gs = gauges(cfg)?;
    let t = tol(cfg, 1e-8);
    let mut table = with_gauge_columns(&[
        ("k", "index of the conserved operator"),
        (
            "closure_residual",
            "relative least-squares residual of the collocation fit",
        ),
        ("commutator_relnorm", "|[H, P_k]|_F / (|H|_F |P_k|_F)"),
    ]);
    let mut assertions = Vec::new();
    let mut blocks = Vec::new();
    let mut worst = 0.0f64;
    for (i, g) in gs.iter().enumerate() {
        if g.n > MAX_N {
            return Err(CliError::Config(format!(
                "verify-commuting supports N <= {MAX_N}, got {}",
                g.n
            )));
        }
        let d = g.admissible_degree()?;
        let dim = binomial(g.n as u64 + d as u64, g.n as u64) as usize;
        let count = cfg
            .collocation
            .points
            .unwrap_or_else(|| default_point_count(dim));
        let pts = collocation_points(g.n, &ep, count, cfg.seed, cfg.collocation.margin);
        let h = hamiltonian_matrix::<C64>(g, &ep.e)?.to_dmatrix();
        let mut ops = Vec::new();
        for k in 1..=g.n {
            let pk = conserved_matrix(k, g, &ep, &pts)?;
            let pm = pk.to_dmatrix();
            let comm = relative_commutator(&h, &pm);
            worst = worst.max(comm);
            let mut row = gauge_cells(i, g);
            row.extend([
                k.to_string(),
                pk.closure_residual.to_string(),
                comm.to_string(),
            ]);
            table.push(row);
            assertions.push(Assertion::new(
                format!("closure[{i}][P{k}]"),
                pk.closure_residual,
                Relation::Lt,
                t,
            ));
            assertions.push(Assertion::new(
                format!("commutator[{i}][P{k}]"),
                comm,
                Relation::Lt,
                t,
            ));
            let mut entry = json!({ "k": k, "closure_residual": pk.closure_residual, "commutator_relnorm": comm });
            if k == 1 {
                let fit = affine_fit(&pm, &h)?;
                assertions.push(Assertion::new(
                    format!("affine_fit[{i}][P1]"),
                    fit.residual,
                    Relation::Lt,
                    t,
                ));
                entry["affine"] = json!({ "a": complex_json(fit.a), "b": complex_json(fit.b), "residual": fit.residual });
            }
            ops.push(entry);
        }
        blocks
            .push(json!({ "gauge": gauge_json(g), "dim": dim, "points": count, "operators": ops }));
    }
    Ok((
        table,
        assertions,
        json!({ "commutator_relnorm": worst, "gauges": blocks }),
    ))
}

fn dims(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let c = couplings(cfg)?;
    let r = dimension_report(&c).map_err(|e| CliError::Config(e.to_string()))?;
    let mut table = with_gauge_columns(&[("dim", "binomial(N + d, N)")]);
    let mut sum = 0u64;
    for (i, (g, k)) in r.per_choice.iter().enumerate() {
        let mut row = gauge_cells(i, g);
        row.push(k.to_string());
        table.push(row);
        sum += k;
    }
    let assertions = vec![Assertion::new(
        "total_equals_sum_over_choices",
        r.total as f64,
        Relation::Eq,
        sum as f64,
    )];
    if r.agrees() == Some(false) {
        log::warn!(
            "enumerated total {} differs from the closed form {:?}",
            r.total,
            r.closed_form
        );
    }
    let results = json!({
        "n": r.n,
        "total_dim": r.total,
        "closed_form": r.closed_form,
        "closed_form_agrees": r.agrees(),
        "choices": r.per_choice.len(),
    });
    Ok((table, assertions, results))
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    s.as_ref()
        .ok_or_else(|| CliError::Config(format!("a [{name}] section is required")))
}

/// Real parameters with `nubar_0` solved from `level`.
fn draw_parameters(
    n: usize,
    level: f64,
    rng: &mut ChaCha8Rng,
) -> Result<RuijsenaarsParams, CliError> {
    let mut r = |lo: f64, hi: f64| C64::new(rng.random_range(lo..hi), 0.0);
    let kappa = r(0.08, 0.3);
    let mu = r(0.05, 0.25);
    let nu = [r(-0.2, 0.2), r(-0.2, 0.2), r(-0.2, 0.2), r(-0.2, 0.2)];
    let mut nubar = [C64::new(0.0, 0.0), r(-0.2, 0.2), r(-0.2, 0.2), r(-0.2, 0.2)];
    let rest: C64 = nu.iter().chain(&nubar[1..]).sum();
    nubar[0] = kappa * level - 2.0 * (n as f64 - 1.0) * mu - rest;
    Ok(RuijsenaarsParams::new(n, kappa, mu, nu, nubar)?)
}

fn explicit_parameters(s: &RuijsenaarsSection) -> Result<Option<RuijsenaarsParams>, CliError> {
    match (s.kappa, s.mu, s.nu, s.nubar) {
        (None, None, None, None) => Ok(None),
        (Some(k), Some(m), Some(nu), Some(nb)) => {
            let c = |v: f64| C64::new(v, 0.0);
            RuijsenaarsParams::new(s.n, c(k), c(m), nu.map(c), nb.map(c))
                .map(Some)
                .map_err(|e| CliError::Config(e.to_string()))
        }
        _ => Err(CliError::Config(
            "ruijsenaars: kappa, mu, nu and nubar must be given together".into(),
        )),
    }
}

fn ruijsenaars_check(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = section(&cfg.ruijsenaars, "ruijsenaars")?;
    let ep = elliptic(cfg)?;
    let t = tol(cfg, 1e-8);
    let control_min = 1e-2;
    let basis = theta_basis(s.n, s.k, &ep).map_err(|e| CliError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut runs: Vec<(RuijsenaarsParams, RuijsenaarsParams)> = Vec::new();
    if let Some(rp) = explicit_parameters(s)? {
        if rp.even_level(1e-9) != Some(s.k) {
            return Err(CliError::Config(format!(
                "ruijsenaars: parameters have level {}, expected {}",
                complex_string(rp.level()),
                s.k
            )));
        }
        let mut off = rp.clone();
        off.nubar[0] += off.kappa;
        runs.push((rp, off));
    } else {
        for _ in 0..s.draws {
            let rp = draw_parameters(s.n, s.k as f64, &mut rng)?;
            let off = draw_parameters(s.n, s.k as f64 + 1.0, &mut rng)?;
            runs.push((rp, off));
        }
    }
    let mut table = Table::new(&[
        ("draw", "parameter draw index"),
        (
            "kind",
            "level: level condition holds; control: level off by one",
        ),
        ("kappa", "shift parameter"),
        ("mu", "pair parameter"),
        (
            "level",
            "(2(N-1) mu + sum (nu + nubar)) / kappa, complex re+imi",
        ),
        (
            "residual",
            "relative weighted least-squares residual of the image fit",
        ),
    ]);
    let mut assertions = Vec::new();
    let mut out = Vec::new();
    for (i, (rp, off)) in runs.iter().enumerate() {
        let count = cfg.collocation.points.unwrap_or(3 * basis.dim() + 6);
        let pts = theta_points(
            rp,
            &ep,
            count,
            cfg.seed.wrapping_add(i as u64),
            cfg.collocation.margin,
        );
        let m = verify_y1_invariance(rp, &ep, &basis, &pts)?;
        let ctrl = verify_y1_invariance(off, &ep, &basis, &pts)?;
        for (kind, p, r) in [
            ("level", rp, m.closure_residual),
            ("control", off, ctrl.closure_residual),
        ] {
            table.push(vec![
                i.to_string(),
                kind.into(),
                p.kappa.re.to_string(),
                p.mu.re.to_string(),
                complex_string(p.level()),
                r.to_string(),
            ]);
        }
        assertions.push(Assertion::new(
            format!("closure[{i}]"),
            m.closure_residual,
            Relation::Lt,
            t,
        ));
        assertions.push(Assertion::new(
            format!("control_breaks_closure[{i}]"),
            ctrl.closure_residual,
            Relation::Gt,
            control_min,
        ));
        out.push(json!({
            "kappa": rp.kappa.re,
            "mu": rp.mu.re,
            "nu": rp.nu.iter().map(|z| z.re).collect::<Vec<_>>(),
            "nubar": rp.nubar.iter().map(|z| z.re).collect::<Vec<_>>(),
            "residual": m.closure_residual,
            "control_residual": ctrl.closure_residual,
            "matrix": m.entries.iter().map(|r| r.iter().map(|&z| complex_json(z)).collect::<Vec<_>>()).collect::<Vec<_>>(),
        }));
    }
    let results = json!({
        "n": s.n,
        "k": s.k,
        "dim": basis.dim(),
        "one_variable_exponents": basis.one_variable,
        "rank_certificate": basis.rank_certificate,
        "draws": out,
    });
    Ok((table, assertions, results))
}

fn phi_task(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ep = elliptic(cfg)?;
    let gs = gauges(cfg)?;
    let t = tol(cfg, 1e-8);
    let min_ratio = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = with_gauge_columns(&[
        ("dim", "dimension of both spaces"),
        (
            "fit_residual",
            "relative least-squares residual of the change of basis",
        ),
        ("singular_ratio", "smallest over largest singular value"),
    ]);
    let mut assertions = Vec::new();
    let mut blocks = Vec::new();
    for (i, g) in gs.iter().enumerate() {
        let d = g.admissible_degree()?;
        let basis = theta_basis(g.n, 2 * d, &ep)?;
        let rp = draw_parameters(g.n, 2.0, &mut rng)?;
        let count = cfg.collocation.points.unwrap_or(3 * basis.dim() + 6);
        let pts = theta_points(
            &rp,
            &ep,
            count,
            cfg.seed.wrapping_add(i as u64),
            cfg.collocation.margin,
        );
        let iso = phi_isomorphism(g, &ep, &basis, &pts)?;
        let ratio = iso.singular_ratio();
        let mut row = gauge_cells(i, g);
        row.extend([
            basis.dim().to_string(),
            iso.matrix.closure_residual.to_string(),
            ratio.to_string(),
        ]);
        table.push(row);
        assertions.push(Assertion::new(
            format!("fit_residual[{i}]"),
            iso.matrix.closure_residual,
            Relation::Lt,
            t,
        ));
        assertions.push(Assertion::new(
            format!("singular_ratio[{i}]"),
            ratio,
            Relation::Gt,
            min_ratio,
        ));
        blocks.push(json!({
            "gauge": gauge_json(g),
            "dim": basis.dim(),
            "fit_residual": iso.matrix.closure_residual,
            "singular_values": iso.singular_values,
        }));
    }
    Ok((table, assertions, json!({ "gauges": blocks })))
}

fn probe(values: &[[f64; 2]], n: usize, fallback: &[[f64; 2]]) -> Result<Vec<C64>, CliError> {
    let src = if values.is_empty() {
        &fallback[..n.min(fallback.len())]
    } else {
        values
    };
    if src.len() != n {
        return Err(CliError::Config(format!(
            "probe points need {n} coordinates, got {}",
            src.len()
        )));
    }
    Ok(src.iter().map(|v| C64::new(v[0], v[1])).collect())
}

fn test_function(name: &str, s: &LimitNonrelSection) -> Result<TestFunction, CliError> {
    match name {
        "cosine" => Ok(TestFunction::Cosine),
        "wp-shift" => Ok(TestFunction::ShiftedWp {
            shift: C64::new(s.shift[0], s.shift[1]),
        }),
        "constant" => Ok(TestFunction::Constant),
        other => Err(CliError::Config(format!("unknown test function {other:?}"))),
    }
}

fn limit_nonrel(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = section(&cfg.limit_nonrel, "limit_nonrel")?;
    let ep = elliptic(cfg)?;
    if s.kappas.len() < 2 {
        return Err(CliError::Config(
            "limit_nonrel: at least two kappas are required".into(),
        ));
    }
    let x = probe(&s.x, s.n, &[[0.23, 0.31], [0.57, 0.08], [0.41, -0.12]])?;
    let x2 = probe(&s.x2, s.n, &[[0.61, -0.17], [0.12, 0.2], [0.33, 0.27]])?;
    let pairing = match s.pairing {
        PairingChoice::Untwisted => IndexPairing::Untwisted,
        PairingChoice::Printed => IndexPairing::Printed,
    };
    let mut setup = LimitSetup::new(s.n, s.a, s.b, pairing);
    setup.split = s.split;
    let mut table = Table::new(&[
        ("function", "test function"),
        ("kappa", "shift parameter"),
        (
            "error",
            "|E(kappa)|: difference of the rescaled difference operator and H, constant eliminated",
        ),
        (
            "observed_order",
            "log ratio of successive errors over log ratio of kappas",
        ),
    ]);
    let mut assertions = Vec::new();
    let mut out = Vec::new();
    for name in &s.functions {
        let f = test_function(name, s)?;
        let rows = nonrelativistic_limit_check(&setup, &ep, &f, &x, &x2, &s.kappas)?;
        for r in &rows {
            table.push(vec![
                name.clone(),
                r.kappa.to_string(),
                r.error.to_string(),
                r.observed_order.map(|o| o.to_string()).unwrap_or_default(),
            ]);
        }
        let worst_step = rows
            .windows(2)
            .map(|w| w[1].error / w[0].error)
            .fold(0.0, f64::max);
        let final_ratio = rows.last().map(|r| r.error).unwrap_or(0.0) / rows[0].error;
        assertions.push(Assertion::new(
            format!("strictly_decreasing[{name}]"),
            worst_step,
            Relation::Lt,
            1.0,
        ));
        assertions.push(Assertion::new(
            format!("final_over_initial[{name}]"),
            final_ratio,
            Relation::Lt,
            s.final_ratio_max,
        ));
        out.push(json!({
            "function": name,
            "errors": rows.iter().map(|r| r.error).collect::<Vec<_>>(),
            "observed_orders": rows.iter().filter_map(|r| r.observed_order).collect::<Vec<_>>(),
            "final_over_initial": final_ratio,
        }));
    }
    Ok((
        table,
        assertions,
        json!({ "kappas": s.kappas, "functions": out }),
    ))
}

fn degenerate_coupling(s: &DegenerateSection) -> Result<DegenerateCoupling, CliError> {
    let l = rat(&s.l, "degenerate.l")?;
    let l0 = rat(&s.l0, "degenerate.l0")?;
    let l1 = rat(&s.l1, "degenerate.l1")?;
    let a = rat(&s.a_tilde, "degenerate.a_tilde")?;
    let mut dc = match (&s.big_l, &s.b_tilde) {
        (Some(big_l), None) => DegenerateCoupling::new(s.n, l, l0, l1, a, *big_l),
        (None, Some(b)) => {
            DegenerateCoupling::from_limit(s.n, l, l0, l1, a, rat(b, "degenerate.b_tilde")?)
        }
        _ => {
            return Err(CliError::Config(
                "degenerate: exactly one of big_l and b_tilde must be given".into(),
            ))
        }
    }
    .map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(c1) = &s.c1_over_pi2 {
        dc.c1_over_pi2 = rat(c1, "degenerate.c1_over_pi2")?;
    }
    if let Some(c2) = &s.c2_over_pi2 {
        dc.c2_over_pi2 = rat(c2, "degenerate.c2_over_pi2")?;
    }
    Ok(dc)
}

fn coupling_json(dc: &DegenerateCoupling) -> Value {
    json!({
        "n": dc.n,
        "L": dc.big_l,
        "b_tilde": rat_str(&dc.b_tilde),
        "c1_over_pi2": rat_str(&dc.c1_over_pi2),
        "c2_over_pi2": rat_str(&dc.c2_over_pi2),
        "required_c1_over_pi2": rat_str(&dc.required_c1_over_pi2()),
        "required_c2_over_pi2": rat_str(&dc.required_c2_over_pi2()),
        "c0_over_pi2": rat_str(&dc.c0_over_pi2()),
    })
}

fn degenerate_task(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let dc = degenerate_coupling(section(&cfg.degenerate, "degenerate")?)?;
    let m = degenerate_hamiltonian_matrix(&dc)?;
    let constraints = dc.check_constraints();
    let mut assertions = vec![Assertion::new(
        "exact_closure",
        m.closure_residual,
        Relation::Eq,
        0.0,
    )];
    assertions.push(Assertion::holds(
        "coupling_constraints",
        constraints.is_ok(),
    ));
    let mut table = Table::new(&[
        (
            "index",
            "eigenvalue index, sorted by real then imaginary part",
        ),
        (
            "eigenvalue",
            "eigenvalue of the gauged degenerate Hamiltonian, complex re+imi",
        ),
    ]);
    let eigenvalues = if constraints.is_ok() {
        degenerate_spectrum(&dc)?
    } else {
        Vec::new()
    };
    for (k, ev) in eigenvalues.iter().enumerate() {
        table.push(vec![k.to_string(), complex_string(*ev)]);
    }
    let results = json!({
        "coupling": coupling_json(&dc),
        "dim": m.dim(),
        "closure_residual": m.closure_residual,
        "constraint_violation": constraints.err().map(|e| e.to_string()),
        "matrix_over_pi2": m.entries.iter().map(|r| r.iter().map(rat_str).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "eigenvalues": eigenvalues.iter().map(|&z| complex_json(z)).collect::<Vec<_>>(),
    });
    Ok((table, assertions, results))
}

fn real_probe(values: &[f64], n: usize, fallback: &[f64]) -> Result<Vec<f64>, CliError> {
    let v = if values.is_empty() {
        fallback[..n.min(fallback.len())].to_vec()
    } else {
        values.to_vec()
    };
    if v.len() != n {
        return Err(CliError::Config(format!(
            "probe points need {n} coordinates, got {}",
            v.len()
        )));
    }
    Ok(v)
}

fn limit_trig(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = section(&cfg.degenerate, "degenerate")?;
    let dc = degenerate_coupling(s)?;
    dc.check_constraints()
        .map_err(|e| CliError::Config(e.to_string()))?;
    if s.ps.is_empty() {
        return Err(CliError::Config("degenerate: ps must not be empty".into()));
    }
    let t = tol(cfg, 1e-4);
    let min_factor = 5.0;
    let x = real_probe(&s.x, dc.n, &[0.13, 0.31, 0.41])?;
    let x2 = real_probe(&s.x2, dc.n, &[0.37, 0.08, 0.22])?;
    let gap_rows = limit_spectrum_check(&dc, &s.ps)?;
    let gauge = gauge_limit_check(&dc, &s.ps, &x, &x2)?;
    let mut table = Table::new(&[
        ("p", "real nome"),
        ("discrepancy", "max gap difference over max degenerate gap"),
        ("two_point_ratio", "[|Phi|/|Psi_D|](x) over the same at x2"),
        ("gauge_deviation", "|two_point_ratio - 1|"),
    ]);
    for (r, g) in gap_rows.iter().zip(&gauge) {
        table.push(vec![
            r.p.to_string(),
            r.discrepancy.to_string(),
            g.two_point_ratio.to_string(),
            g.deviation.to_string(),
        ]);
    }
    let mut assertions = Vec::new();
    if dc.dim() > 1 {
        let worst_factor = gap_rows
            .windows(2)
            .map(|w| w[0].discrepancy / w[1].discrepancy)
            .fold(f64::INFINITY, f64::min);
        if gap_rows.len() > 1 {
            assertions.push(Assertion::new(
                "gap_decrease_factor",
                worst_factor,
                Relation::Ge,
                min_factor,
            ));
        }
    }
    let last = gap_rows.last().map(|r| r.discrepancy).unwrap_or(0.0);
    assertions.push(Assertion::new(
        "final_gap_discrepancy",
        last,
        Relation::Lt,
        t,
    ));
    let dev = gauge.last().map(|g| g.deviation).unwrap_or(0.0);
    assertions.push(Assertion::new(
        "final_gauge_deviation",
        dev,
        Relation::Lt,
        t,
    ));
    let results = json!({
        "coupling": coupling_json(&dc),
        "ps": s.ps,
        "discrepancies": gap_rows.iter().map(|r| r.discrepancy).collect::<Vec<_>>(),
        "degenerate_gaps": gap_rows[0].degenerate_gaps.iter().map(|&z| complex_json(z)).collect::<Vec<_>>(),
        "elliptic_gaps": gap_rows.iter().map(|r| r.elliptic_gaps.iter().map(|&z| complex_json(z)).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "gauge_deviations": gauge.iter().map(|g| g.deviation).collect::<Vec<_>>(),
    });
    Ok((table, assertions, results))
}

fn specfun(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let s = cfg.specfun.clone().unwrap_or_default();
    let t = tol(cfg, 1e-10);
    let taus: Vec<C64> = s.taus.iter().map(|v| C64::new(v[0], v[1])).collect();
    for &tau in &taus {
        EllipticParams::new(tau).map_err(|e| CliError::Config(format!("specfun: {e}")))?;
    }
    let rows = run_selftest(&taus, s.points, cfg.seed)?;
    let mut table = Table::new(&[
        ("tau", "lattice parameter, complex re+imi"),
        ("identity", "identity family"),
        ("residual", "largest scaled residual over the sample"),
    ]);
    let mut assertions = Vec::new();
    for r in &rows {
        table.push(vec![
            complex_string(r.tau),
            r.identity.to_string(),
            r.residual.to_string(),
        ]);
        assertions.push(Assertion::new(
            format!("{} @ tau={}", r.identity, complex_string(r.tau)),
            r.residual,
            Relation::Lt,
            t,
        ));
    }
    let worst = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok((
        table,
        assertions,
        json!({ "points": s.points, "max_residual": worst }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_names_round_trip() {
        for t in Task::ALL {
            assert_eq!(t.name().parse::<Task>().unwrap(), t);
        }
        assert!(matches!("nope".parse::<Task>(), Err(CliError::Config(_))));
    }
}
