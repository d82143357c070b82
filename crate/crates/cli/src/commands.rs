use std::f64::consts::FRAC_PI_4;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use binet::analytic::{brgp_noisy_nme, brgp_uni_general, tgb_closed_form};
use binet::measurements::{JointKind, RoundSpec};
use binet::protocol::{averaged_table, report_from_table, BilocalReport, ScenarioConfig};
use binet::solver::{
    bidirectional_frontier, critical_schedule, entanglement_threshold, linear_grid, max_rounds, sweep_max_rounds,
    Family, Resource, Scenario, SharingResult, SweepPoint,
};
use binet::states::{BaseState, SourceSpec};
use binet::verify::{run_oracle_suite, OracleKind, DEFAULT_SEED};

use crate::config::{BaseArg, FamilyArg, JointArg, QuantityArg, RunConfig, ScenarioArg};
use crate::error::{CliError, Context};

/// Largest tolerated gap between brute force and closed form in `simulate`.
pub const SIMULATE_TOLERANCE: f64 = 1e-6;

fn base(cfg: &RunConfig, default: BaseState) -> BaseState {
    match cfg.base {
        Some(BaseArg::PhiPlus) => BaseState::PhiPlus,
        Some(BaseArg::PsiMinus) => BaseState::PsiMinus,
        None => default,
    }
}

fn family(cfg: &RunConfig) -> Result<Family, CliError> {
    match cfg.family {
        Some(FamilyArg::Nme) => Ok(Family::Nme),
        Some(FamilyArg::Werner) => Ok(Family::Werner),
        None => Err(CliError::Missing("family")),
    }
}

fn scenario(cfg: &RunConfig) -> Scenario {
    match cfg.scenario.unwrap_or(ScenarioArg::UniBrgp) {
        ScenarioArg::UniBrgp => Scenario::UniBrgp,
        ScenarioArg::BiEqualBrgp => Scenario::BiEqualBrgp,
        ScenarioArg::UniEjm => Scenario::UniEjm {
            theta: cfg.ejm_theta.unwrap_or(0.0),
        },
    }
}

fn resource(cfg: &RunConfig, base: BaseState) -> Result<Resource, CliError> {
    if let Some(e) = cfg.entanglement {
        let family = family(cfg)?;
        let p = family.parameter_for(e, base).context("entanglement lookup")?;
        return Ok(Resource::symmetric(family.source(p, base).context("source")?));
    }
    let eta = cfg.eta.unwrap_or(0.5);
    let v = cfg.v.unwrap_or(1.0);
    Ok(Resource {
        source1: SourceSpec::new(eta, v, base).context("source 1")?,
        source2: SourceSpec::new(cfg.eta2.unwrap_or(eta), cfg.v2.unwrap_or(v), base).context("source 2")?,
    })
}

fn joint(cfg: &RunConfig) -> JointKind {
    match cfg.joint.unwrap_or(JointArg::Bsm) {
        JointArg::Bsm => JointKind::Bsm,
        JointArg::Ejm => JointKind::Ejm {
            theta: cfg.ejm_theta.unwrap_or(0.0),
        },
    }
}

pub fn scenario_config(cfg: &RunConfig) -> Result<ScenarioConfig, CliError> {
    let joint = joint(cfg);
    let default_base = match joint {
        JointKind::Bsm => BaseState::PhiPlus,
        JointKind::Ejm { .. } => BaseState::PsiMinus,
    };
    let res = resource(cfg, base(cfg, default_base))?;
    let alice_g = cfg.alice_g.clone().unwrap_or_else(|| vec![1.0]);
    let charu_g = cfg.charu_g.clone().unwrap_or_else(|| vec![1.0]);
    let (alice_rounds, charu_rounds) = match joint {
        JointKind::Bsm => {
            let phi = cfg.phi.unwrap_or(FRAC_PI_4);
            let thetas = cfg.charu_theta.clone().unwrap_or_else(|| vec![FRAC_PI_4; charu_g.len()]);
            if thetas.len() != charu_g.len() {
                return Err(CliError::validation(
                    "charu_theta",
                    format!("{} angles for {} Charu rounds", thetas.len(), charu_g.len()),
                ));
            }
            let alice = alice_g.iter().map(|&g| RoundSpec::in_plane(phi, g)).collect::<Result<Vec<_>, _>>();
            let charu = charu_g
                .iter()
                .zip(&thetas)
                .map(|(&g, &t)| RoundSpec::in_plane(t, g))
                .collect::<Result<Vec<_>, _>>();
            (alice.context("alice rounds")?, charu.context("charu rounds")?)
        }
        JointKind::Ejm { .. } => {
            let pauli = |list: &[f64]| list.iter().map(|&g| RoundSpec::pauli(g)).collect::<Result<Vec<_>, _>>();
            (pauli(&alice_g).context("alice rounds")?, pauli(&charu_g).context("charu rounds")?)
        }
    };
    let config = ScenarioConfig {
        source1: res.source1,
        source2: res.source2,
        joint,
        alice_rounds,
        charu_rounds,
    };
    config.validate().context("scenario")?;
    Ok(config)
}

fn in_plane_angle(round: &RoundSpec) -> Option<f64> {
    match round.axis {
        binet::measurements::Axis::InPlane(a) => Some(a),
        binet::measurements::Axis::Pauli => None,
    }
}

/// The closed form covering this configuration, if any.
pub fn closed_form(config: &ScenarioConfig) -> Result<Option<f64>, CliError> {
    let alice: Vec<f64> = config.alice_rounds.iter().map(|r| r.sharpness).collect();
    let charu: Vec<f64> = config.charu_rounds.iter().map(|r| r.sharpness).collect();
    let (s1, s2) = (config.source1, config.source2);
    let value = match config.joint {
        JointKind::Bsm => {
            let angles: Vec<f64> = config.alice_rounds.iter().chain(&config.charu_rounds).filter_map(in_plane_angle).collect();
            let optimal = angles.iter().all(|a| (a - FRAC_PI_4).abs() < 1e-15);
            let me = [s1, s2].iter().all(|s| s.eta == 0.5 && s.visibility == 1.0);
            if optimal {
                Some(brgp_noisy_nme(&alice, &charu, s1.visibility, s2.visibility, s1.eta, s2.eta).context("closed form")?)
            } else if me && alice == [1.0] {
                let thetas: Vec<f64> = config.charu_rounds.iter().filter_map(in_plane_angle).collect();
                let phi = in_plane_angle(&config.alice_rounds[0]).unwrap_or(FRAC_PI_4);
                Some(brgp_uni_general(&charu, &thetas, phi).context("closed form")?.value())
            } else {
                None
            }
        }
        JointKind::Ejm { theta } => {
            let singlet = [s1, s2].iter().all(|s| s.base == BaseState::PsiMinus && s.eta == 0.5);
            if singlet {
                Some(tgb_closed_form(&alice, &charu, s1.visibility, s2.visibility, theta).context("closed form")?)
            } else {
                None
            }
        }
    };
    Ok(value)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).expect("results serialize");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::Io { path, source: e })
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let path = dir.join(name);
    let io = |e: csv::Error| CliError::Io {
        path: path.clone(),
        source: std::io::Error::other(e),
    };
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)
        .map_err(io)?;
    for row in rows {
        writer.serialize(row).map_err(io)?;
    }
    writer.flush().map_err(|e| CliError::Io {
        path: path.clone(),
        source: e,
    })
}

#[derive(Serialize)]
struct SimulateResult<'a> {
    command: &'static str,
    config: &'a ScenarioConfig,
    report: BilocalReport,
    closed_form: Option<f64>,
    difference: Option<f64>,
    normalization_error: f64,
}

pub fn simulate(cfg: &RunConfig, out: &mut impl Write) -> Result<(), CliError> {
    let config = scenario_config(cfg)?;
    let table = averaged_table(&config).context("simulation")?;
    let report = report_from_table(&table).context("inequality")?;
    let closed = closed_form(&config)?;
    let difference = closed.map(|c| (c - report.value()).abs());

    match report {
        BilocalReport::Brgp { i, j, .. } => {
            let _ = writeln!(out, "inequality: BRGP  I = {i:.12}  J = {j:.12}");
        }
        BilocalReport::Tgb { z, .. } => {
            let _ = writeln!(out, "inequality: TGB  Z = {z:.12}");
        }
    }
    let _ = writeln!(out, "brute force: {:.12}", report.value());
    match (closed, difference) {
        (Some(c), Some(d)) => {
            let _ = writeln!(out, "closed form: {c:.12}");
            let _ = writeln!(out, "difference: {d:.3e}");
        }
        _ => {
            let _ = writeln!(out, "closed form: not available for this configuration");
        }
    }
    let _ = writeln!(
        out,
        "bound: {:.12}  violated: {}",
        report.bound(),
        if report.violated() { "yes" } else { "no" }
    );

    if let Some(path) = &cfg.table_csv {
        let file = fs::File::create(path).map_err(|e| CliError::Io {
            path: path.clone(),
            source: e,
        })?;
        table.write_csv(file).context("table csv")?;
    }
    write_json(
        &cfg.out_dir(),
        "results.json",
        &SimulateResult {
            command: "simulate",
            config: &config,
            report,
            closed_form: closed,
            difference,
            normalization_error: table.normalization_error(),
        },
    )?;
    match difference {
        Some(d) if d > SIMULATE_TOLERANCE => Err(CliError::Verification(format!(
            "brute force and closed form differ by {d:.3e}"
        ))),
        _ => Ok(()),
    }
}

fn fmt3(values: &[f64]) -> String {
    values.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>().join(" ")
}

pub fn critical(cfg: &RunConfig, out: &mut impl Write) -> Result<(), CliError> {
    let scenario = scenario(cfg);
    let res = resource(cfg, base(cfg, scenario.natural_base()))?;
    let result: SharingResult = critical_schedule(scenario, &res).context("critical schedule")?;
    let _ = writeln!(out, "{}", fmt3(&result.schedule));
    if let Some(next) = result.next_root {
        let _ = writeln!(out, "next root: {next:.3}");
    }
    let _ = writeln!(out, "max rounds: {}", result.max_rounds);
    write_json(&cfg.out_dir(), "results.json", &result)
}

#[derive(Serialize)]
struct MaxRoundsResult {
    scenario: Scenario,
    resource: Resource,
    max_rounds: usize,
}

pub fn max_rounds_cmd(cfg: &RunConfig, out: &mut impl Write) -> Result<(), CliError> {
    let scenario = scenario(cfg);
    let res = resource(cfg, base(cfg, scenario.natural_base()))?;
    let rounds = max_rounds(&res, scenario).context("max rounds")?;
    let _ = writeln!(out, "max rounds: {rounds}");
    write_json(
        &cfg.out_dir(),
        "results.json",
        &MaxRoundsResult {
            scenario,
            resource: res,
            max_rounds: rounds,
        },
    )
}

pub fn threshold(cfg: &RunConfig, out: &mut impl Write) -> Result<(), CliError> {
    let rounds = cfg.rounds.ok_or(CliError::Missing("rounds"))?;
    let family = family(cfg)?;
    let t = entanglement_threshold(rounds, family, scenario(cfg)).context("threshold")?;
    let measure = match family {
        Family::Nme => "entanglement entropy",
        Family::Werner => "entanglement of formation",
    };
    let _ = writeln!(out, "{:.3}", t.entanglement);
    let _ = writeln!(out, "{measure}: {:.9}", t.entanglement);
    let _ = writeln!(out, "{}: {:.9}", family.parameter_name(), t.parameter);
    write_json(&cfg.out_dir(), "results.json", &t)
}

pub fn frontier(cfg: &RunConfig, out: &mut impl Write) -> Result<(), CliError> {
    let res = resource(cfg, base(cfg, BaseState::PhiPlus))?;
    let unequal = !cfg.equal_precision.unwrap_or(false);
    let f = bidirectional_frontier(&res, unequal).context("frontier")?;
    let pairs: Vec<String> = f.pareto.iter().map(|(m, n)| format!("({m},{n})")).collect();
    let _ = writeln!(out, "frontier: {}", pairs.join(" "));
    for (m, n) in f.max_partner_rounds.iter().filter(|p| p.1 > 0) {
        let _ = writeln!(out, "m = {m}: up to n = {n}");
    }
    let _ = writeln!(out, "grid check: {}", if f.grid_agrees { "agrees" } else { "DISAGREES" });
    write_json(&cfg.out_dir(), "results.json", &f)?;
    if f.grid_agrees {
        Ok(())
    } else {
        Err(CliError::Verification("grid scan disagrees with the anchored frontier".into()))
    }
}

#[derive(Serialize)]
struct ValuePoint {
    parameter: f64,
    value: f64,
    bound: f64,
    violated: bool,
}

#[derive(Serialize)]
struct ScheduleRow {
    round: usize,
    uni_brgp: Option<f64>,
    bi_equal_brgp: Option<f64>,
    uni_ejm: Option<f64>,
}

fn family_grid(family: Family, steps: usize) -> Result<Vec<f64>, CliError> {
    let (lo, hi) = family.range();
    linear_grid(lo, hi, steps).context("grid")
}

pub fn sweep(cfg: &RunConfig, out: &mut impl Write) -> Result<(), CliError> {
    let dir = cfg.out_dir();
    let theta = cfg.ejm_theta.unwrap_or(0.0);
    match cfg.quantity.unwrap_or(QuantityArg::MaxRounds) {
        QuantityArg::MaxRounds => {
            let family = family(cfg)?;
            let (lo, hi) = family.range();
            let grid = linear_grid(cfg.start.unwrap_or(lo), cfg.stop.unwrap_or(hi), cfg.steps.unwrap_or(101))
                .context("grid")?;
            if let Some(p) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(CliError::validation("start", format!("grid point {p} is outside [0, 1]")));
            }
            let points = sweep_max_rounds(family, &grid, theta).context("sweep")?;
            write_csv(&dir, "sweep.csv", &points)?;
            let _ = writeln!(out, "sweep: {} points over {}", points.len(), family.parameter_name());
        }
        QuantityArg::B => {
            let name = cfg.parameter.clone().ok_or(CliError::Missing("parameter"))?;
            let start = cfg.start.ok_or(CliError::Missing("start"))?;
            let stop = cfg.stop.ok_or(CliError::Missing("stop"))?;
            let grid = linear_grid(start, stop, cfg.steps.unwrap_or(101)).context("grid")?;
            let configs = grid
                .iter()
                .map(|&p| {
                    let mut c = cfg.clone();
                    match name.as_str() {
                        "eta" => c.eta = Some(p),
                        "v" => c.v = Some(p),
                        "alice-G" | "charu-G" => {
                            let list = if name == "alice-G" { &mut c.alice_g } else { &mut c.charu_g };
                            let mut g = list.clone().unwrap_or_else(|| vec![1.0]);
                            *g.last_mut().expect("nonempty") = p;
                            *list = Some(g);
                        }
                        _ => {
                            return Err(CliError::validation(
                                "parameter",
                                format!("`{name}` is not one of eta, v, alice-G, charu-G"),
                            ))
                        }
                    }
                    c.validate()?;
                    scenario_config(&c)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let points = grid
                .par_iter()
                .zip(configs.par_iter())
                .map(|(&p, c)| {
                    let report = report_from_table(&averaged_table(c)?)?;
                    Ok(ValuePoint {
                        parameter: p,
                        value: report.value(),
                        bound: report.bound(),
                        violated: report.violated(),
                    })
                })
                .collect::<Result<Vec<_>, binet::Error>>()
                .context("sweep")?;
            write_csv(&dir, "sweep.csv", &points)?;
            let _ = writeln!(out, "sweep: {} points over {name}", points.len());
        }
    }

    if cfg.figures.unwrap_or(false) {
        let schedules = [
            critical_schedule(Scenario::UniBrgp, &Resource::maximally_entangled(BaseState::PhiPlus)),
            critical_schedule(Scenario::BiEqualBrgp, &Resource::maximally_entangled(BaseState::PhiPlus)),
            critical_schedule(Scenario::UniEjm { theta }, &Resource::maximally_entangled(BaseState::PsiMinus)),
        ]
        .into_iter()
        .map(|r| r.map(|s| s.schedule))
        .collect::<Result<Vec<_>, _>>()
        .context("schedules")?;
        let depth = schedules.iter().map(Vec::len).max().unwrap_or(0);
        let rows: Vec<ScheduleRow> = (0..depth)
            .map(|k| ScheduleRow {
                round: k + 1,
                uni_brgp: schedules[0].get(k).copied(),
                bi_equal_brgp: schedules[1].get(k).copied(),
                uni_ejm: schedules[2].get(k).copied(),
            })
            .collect();
        write_csv(&dir, "figure1.csv", &rows)?;
        let steps = cfg.steps.unwrap_or(201);
        let nme: Vec<SweepPoint> = sweep_max_rounds(Family::Nme, &family_grid(Family::Nme, steps)?, theta).context("figure 2")?;
        write_csv(&dir, "figure2.csv", &nme)?;
        let werner: Vec<SweepPoint> =
            sweep_max_rounds(Family::Werner, &family_grid(Family::Werner, steps)?, theta).context("figure 3")?;
        write_csv(&dir, "figure3.csv", &werner)?;
        let _ = writeln!(out, "figures: figure1.csv figure2.csv figure3.csv");
    }
    Ok(())
}

pub fn verify(cfg: &RunConfig, out: &mut impl Write) -> Result<(), CliError> {
    let samples = cfg.samples.unwrap_or(100);
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let summary = run_oracle_suite(samples, seed).context("oracle suite")?;
    let _ = writeln!(out, "oracle suite: seed {seed}, {samples} samples");
    for kind in [OracleKind::BrgpNoisy, OracleKind::BrgpAngles, OracleKind::TgbWerner] {
        let cases: Vec<_> = summary.cases.iter().filter(|c| c.kind == kind).collect();
        let passed = cases.iter().filter(|c| c.pass).count();
        let name = serde_json::to_value(kind).expect("kind serializes");
        let _ = writeln!(out, "  {}: {passed}/{}", name.as_str().unwrap_or("?"), cases.len());
    }
    let _ = writeln!(out, "max |engine - closed form|: {:.3e}", summary.max_abs_diff);
    let _ = writeln!(out, "max normalization error: {:.3e}", summary.max_normalization_error);
    let _ = writeln!(out, "passed: {} failed: {}", summary.passed, summary.failed);
    write_json(&cfg.out_dir(), "results.json", &summary)?;
    if summary.all_passed() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("{} oracle cases failed", summary.failed)))
    }
}
