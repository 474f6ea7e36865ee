use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use seqtrial_core::asymptotics::{
    convergence_check, convergence_check_exponential, mixture_cdf_k_stage_grid, LocalAltSpec,
};
use seqtrial_core::design::{oc_row, validate_design, StageSolution, ValidationReport};
use seqtrial_core::estimation::{
    mle_conditional, mle_unconditional, observed_info, quadrature_moments, ConditionalMleOptions,
    Estimator, EstimatorMoments, MleResult, ObservedInfo, TrialOutcome,
};
use seqtrial_core::simulation::{histogram, run_estimator_study, run_oc, DivergencePolicy, SimConfig};
use seqtrial_core::{expected_info, Design, Engine};

use crate::design_file::DesignFile;
use crate::table::{nonempty, num, parse_grid, sink, Table};
use crate::{CliError, Method};

const OC_HEADER: [&str; 6] = [
    "theta",
    "stage",
    "stop_prob",
    "reject_prob_stagewise",
    "reject_prob_cumulative",
    "expected_N",
];

fn grid_arg(name: &str, text: &str) -> Result<Vec<f64>, CliError> {
    nonempty(name, parse_grid(text).map_err(|e| CliError::input(format!("{name}: {e}")))?)
}

fn load(path: &Path) -> Result<Design, CliError> {
    DesignFile::read(path)?.design()
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::input(format!("write failed: {e}")))?;
    writeln!(w).map_err(|e| CliError::input(format!("write failed: {e}")))
}

fn oc_rows(table: &mut Table, theta: f64, stop: &[f64], reject: &[f64], expected_n: f64) -> Result<(), CliError> {
    let mut cum = 0.0;
    for k in 0..stop.len() {
        cum += reject[k];
        table.row(&[
            num(theta),
            (k + 1).to_string(),
            num(stop[k]),
            num(reject[k]),
            num(cum),
            num(expected_n),
        ])?;
    }
    Ok(())
}

#[derive(Serialize)]
struct DesignOutput<'a> {
    #[serde(flatten)]
    file: DesignFile,
    stages: &'a [StageSolution],
    validation: &'a ValidationReport,
}

pub fn design(spec_path: &Path, out: Option<&Path>, oc_out: Option<&Path>) -> Result<(), CliError> {
    let file = DesignFile::read(spec_path)?;
    let spec = file.spec()?;
    let solved = file.solve()?;
    let report = validate_design(&solved.design, &spec);
    for m in &report.messages {
        eprintln!("warning: {m}");
    }
    write_json(
        &DesignOutput {
            file: file.with_design(&solved.design),
            stages: &solved.stages,
            validation: &report,
        },
        out,
    )?;
    if let Some(path) = oc_out {
        let mut t = Table::create(Some(path), &OC_HEADER)?;
        for row in &solved.oc {
            oc_rows(
                &mut t,
                row.theta,
                &row.probabilities.stop,
                &row.probabilities.reject,
                row.expected_sample_size,
            )?;
        }
        t.finish()?;
    }
    Ok(())
}

pub fn oc(path: &Path, theta: &str, method: Method, reps: u64, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let design = load(path)?;
    let thetas = grid_arg("theta", theta)?;
    let mut t = Table::create(out, &OC_HEADER)?;
    let engine = Engine::default();
    for th in thetas {
        match method {
            Method::Quad => {
                let row = oc_row(&engine, &design, th);
                oc_rows(
                    &mut t,
                    th,
                    &row.probabilities.stop,
                    &row.probabilities.reject,
                    row.expected_sample_size,
                )?;
            }
            Method::Mc => {
                let sim = run_oc(&SimConfig::new(design.clone(), th, reps, seed))?;
                oc_rows(
                    &mut t,
                    th,
                    &sim.stop_probabilities(),
                    &sim.reject_probabilities(),
                    sim.mean_n,
                )?;
            }
        }
    }
    t.finish()
}

#[derive(Debug, Deserialize)]
struct StageRow {
    stage: usize,
    n: u64,
    mean: f64,
}

/// Reads `stage,n,mean` rows; stages must be 1, 2, … in order.
fn read_stage_rows(path: &Path, design: &Design) -> Result<Vec<StageRow>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let row: StageRow = rec.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        if row.stage != rows.len() + 1 {
            return Err(CliError::input(format!(
                "{}: expected stage {} but found stage {}",
                path.display(),
                rows.len() + 1,
                row.stage
            )));
        }
        if row.n == 0 || !row.mean.is_finite() {
            return Err(CliError::input(format!("stage {}: n must be positive and mean finite", row.stage)));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::input(format!("{}: no stage rows", path.display())));
    }
    if rows.len() > design.stages() {
        return Err(CliError::from(seqtrial_core::Error::PathInconsistent {
            stage: design.stages(),
            reason: format!("{} stage rows for a {}-stage design", rows.len(), design.stages()),
        }));
    }
    Ok(rows)
}

/// The observed stage sizes replace the planned ones.
fn realised_design(design: &Design, rows: &[StageRow]) -> Result<Design, CliError> {
    let mut sizes = design.sizes().to_vec();
    for (k, r) in rows.iter().enumerate() {
        sizes[k] = r.n;
    }
    Design::new(sizes, design.critical_values().to_vec()).map_err(CliError::from)
}

fn decision(design: &Design, stage: usize, z: f64) -> String {
    let crossed = z > design.critical_values()[stage - 1];
    match (crossed, stage == design.stages()) {
        (true, _) => format!("reject at stage {stage}"),
        (false, true) => format!("accept at stage {stage}"),
        (false, false) => "continue".into(),
    }
}

#[derive(Serialize)]
struct EstimateOutput {
    stop_stage: usize,
    sample_size: u64,
    z: f64,
    decision: String,
    theta_hat: f64,
    theta_hat_c: f64,
    diverged: bool,
    conditional_search_bracket: [f64; 2],
    info_observed: ObservedInfo,
}

pub fn estimate(path: &Path, data: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let design = load(path)?;
    let rows = read_stage_rows(data, &design)?;
    let design = realised_design(&design, &rows)?;
    let outcome = TrialOutcome::new(design.clone(), rows.iter().map(|r| r.mean).collect())?;
    let unc: MleResult = mle_unconditional(&outcome);
    let con = mle_conditional(&outcome);
    let info = observed_info(&outcome, unc.estimate)?;
    let d = outcome.stop_stage();
    let z = outcome.cumulative_z()[d - 1];
    write_json(
        &EstimateOutput {
            stop_stage: d,
            sample_size: outcome.sample_size(),
            z,
            decision: decision(&design, d, z),
            theta_hat: unc.estimate,
            theta_hat_c: con.estimate,
            diverged: con.diverged,
            conditional_search_bracket: con.search_bracket,
            info_observed: info,
        },
        out,
    )
}

pub fn monitor(path: &Path, data: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let design = load(path)?;
    let rows = read_stage_rows(data, &design)?;
    let design = realised_design(&design, &rows)?;
    let mut t = Table::create(
        out,
        &["stage", "n", "cumulative_n", "mean", "cumulative_mean", "z", "critical", "decision"],
    )?;
    let mut sum = 0.0;
    for (k, r) in rows.iter().enumerate() {
        let stage = k + 1;
        sum += r.n as f64 * r.mean;
        let cum_n = design.cumulative_sizes()[k];
        let z = sum / (cum_n as f64).sqrt();
        let verdict = decision(&design, stage, z);
        t.row(&[
            stage.to_string(),
            r.n.to_string(),
            cum_n.to_string(),
            num(r.mean),
            num(sum / cum_n as f64),
            num(z),
            num(design.critical_values()[k]),
            verdict.clone(),
        ])?;
        if verdict != "continue" && stage < rows.len() {
            t.finish()?;
            return Err(seqtrial_core::Error::PathInconsistent {
                stage,
                reason: format!("trial stopped here (Z = {z:.4}) but data continue to stage {}", stage + 1),
            }
            .into());
        }
    }
    t.finish()
}

pub fn info(path: &Path, grid: &str, out: Option<&Path>) -> Result<(), CliError> {
    let design = load(path)?;
    let thetas = grid_arg("theta grid", grid)?;
    let big_k = design.stages();
    let mut header: Vec<String> = ["theta", "I", "I_c", "I_fix", "info_loss", "info_loss_score"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["stop_prob", "fraction", "fraction_c", "fraction_fix"] {
        header.extend((1..=big_k).map(|k| format!("{prefix}_{k}")));
    }
    let mut t = Table::create(out, &header)?;
    for th in thetas {
        let r = expected_info(&design, th)?;
        let mut row = vec![
            num(th),
            num(r.overall),
            num(r.overall_conditional),
            num(r.overall_fixed),
            num(r.info_loss),
            num(r.info_loss_score),
        ];
        row.extend(r.stages.iter().map(|s| num(s.stop_probability)));
        for v in [&r.fractions, &r.conditional_fractions, &r.fixed_fractions] {
            row.extend(v.iter().map(|&x| num(x)));
        }
        t.row(&row)?;
    }
    t.finish()
}

pub fn asymcdf(path: &Path, h: f64, v_grid: &str, out: Option<&Path>) -> Result<(), CliError> {
    let design = load(path)?;
    let v = grid_arg("v grid", v_grid)?;
    let spec = LocalAltSpec::from_design(&design, h)?;
    let mut header = vec!["v".to_string()];
    header.extend((1..=design.stages()).map(|k| format!("cdf_component_{k}")));
    header.push("cdf_total".into());
    let mut t = Table::create(out, &header)?;
    for (x, comps) in v.iter().zip(mixture_cdf_k_stage_grid(&spec, &v, &Engine::default())) {
        let mut row = vec![num(*x)];
        row.extend(comps.iter().map(|&c| num(c)));
        row.push(num(comps.iter().sum()));
        t.row(&row)?;
    }
    t.finish()
}

pub struct EstimatorArgs<'a> {
    pub theta: &'a str,
    pub method: Method,
    pub reps: u64,
    pub seed: u64,
    pub exclude_divergent: bool,
    pub hist_out: Option<&'a Path>,
    pub hist_bins: usize,
    pub hist_range: &'a str,
}

const ESTIMATOR_HEADER: [&str; 12] = [
    "theta",
    "estimator",
    "stage",
    "probability",
    "count",
    "bias",
    "sd",
    "mse",
    "bias_se",
    "sd_se",
    "mse_se",
    "divergent_fraction",
];

fn moment_rows(t: &mut Table, m: &EstimatorMoments) -> Result<(), CliError> {
    let name = match m.estimator {
        Estimator::Unconditional => "unconditional",
        Estimator::Conditional => "conditional",
    };
    let total_div: f64 = m
        .stages
        .iter()
        .zip(&m.divergent_fraction)
        .map(|(s, f)| s.probability * f)
        .sum();
    let rows = m
        .stages
        .iter()
        .enumerate()
        .map(|(k, s)| ((k + 1).to_string(), s, m.divergent_fraction[k]))
        .chain(std::iter::once(("all".to_string(), &m.overall, total_div)));
    for (stage, s, div) in rows {
        let (bse, sse, mse_se) = match s.se {
            Some(e) => (num(e.bias), num(e.sd), num(e.mse)),
            None => (String::new(), String::new(), String::new()),
        };
        t.row(&[
            num(m.theta),
            name.to_string(),
            stage,
            num(s.probability),
            s.count.map(|c| c.to_string()).unwrap_or_default(),
            num(s.bias),
            num(s.sd),
            num(s.mse),
            bse,
            sse,
            mse_se,
            num(div),
        ])?;
    }
    Ok(())
}

pub fn estimators(path: &Path, args: &EstimatorArgs, out: Option<&Path>) -> Result<(), CliError> {
    let design = load(path)?;
    let thetas = grid_arg("theta", args.theta)?;
    let range = parse_grid(&args.hist_range.replace(':', ","))
        .map_err(|e| CliError::input(format!("hist range: {e}")))?;
    if range.len() != 2 {
        return Err(CliError::input("hist range must be lower:upper"));
    }
    if args.hist_out.is_some() && args.method == Method::Quad {
        return Err(CliError::input("histograms need --method mc"));
    }
    let mut t = Table::create(out, &ESTIMATOR_HEADER)?;
    let mut hist = match args.hist_out {
        Some(p) => Some(Table::create(
            Some(p),
            &["theta", "estimator", "stage", "bin_left", "bin_right", "count"],
        )?),
        None => None,
    };
    for th in thetas {
        match args.method {
            Method::Quad => {
                let opts = ConditionalMleOptions::default();
                for e in [Estimator::Unconditional, Estimator::Conditional] {
                    moment_rows(&mut t, &quadrature_moments(&design, th, e, &opts)?)?;
                }
            }
            Method::Mc => {
                let mut cfg = SimConfig::new(design.clone(), th, args.reps, args.seed);
                if args.exclude_divergent {
                    cfg.divergence = DivergencePolicy::Exclude;
                }
                let study = run_estimator_study(&cfg)?;
                moment_rows(&mut t, &study.unconditional)?;
                moment_rows(&mut t, &study.conditional)?;
                eprintln!(
                    "theta {th}: divergent conditional MLE fraction by stage {:?}",
                    study.conditional.divergent_fraction
                );
                if let Some(h) = hist.as_mut() {
                    for (e, name) in [(Estimator::Unconditional, "unconditional"), (Estimator::Conditional, "conditional")] {
                        for k in 1..=design.stages() {
                            let bins = histogram(&study.stage_values(e, k), range[0], range[1], args.hist_bins)?;
                            for b in bins {
                                h.row(&[
                                    num(th),
                                    name.to_string(),
                                    k.to_string(),
                                    num(b.left),
                                    num(b.right),
                                    b.count.to_string(),
                                ])?;
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(h) = hist {
        h.finish()?;
    }
    t.finish()
}

pub fn convergence(
    path: &Path,
    h: f64,
    scales: &[u64],
    v_grid: &str,
    mc_reps: u64,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let design = load(path)?;
    let v = grid_arg("v grid", v_grid)?;
    if scales.is_empty() {
        return Err(CliError::input("scales is empty"));
    }
    let normal = convergence_check(&design, h, scales, &v)?;
    let expo = if mc_reps > 0 {
        Some(convergence_check_exponential(&design, h, scales, &v, mc_reps, seed)?)
    } else {
        None
    };
    let mut t = Table::create(out, &["scale", "sup_diff_normal", "sup_diff_exponential"])?;
    for (i, row) in normal.iter().enumerate() {
        t.row(&[
            row.scale.to_string(),
            num(row.sup_diff),
            expo.as_ref().map(|e| num(e[i].sup_diff)).unwrap_or_default(),
        ])?;
    }
    t.finish()
}
