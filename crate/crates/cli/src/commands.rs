use std::collections::BTreeMap;
use std::path::Path;

use laser_linewidth::diagnostics::{
    predicted_linewidth, schawlow_townes_chain, LimitInputs, LimitQuantity,
};
use laser_linewidth::dynamics::{
    self, default_omega_grid, default_time_grid, g1_series, linewidth, measure_many,
    power_spectrum, stationary_distribution, uniform_grid, CorrelationSeries, LinewidthReport,
};
use laser_linewidth::fock::{NORM_TOLERANCE, TAIL_TOLERANCE};
use laser_linewidth::models::LaserModel;
use laser_linewidth::ode::OdeOptions;
use laser_linewidth::trajectories::{
    self, ensemble_stats, run_ensemble, AtomInteraction, TrajectoryConfig,
};
use serde_json::{json, Value};

use crate::args::{Command, GridArgs, ModelArgs};
use crate::error::CliError;
use crate::output::{emit, Cell, Report};

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Stationary { model, output } => emit(&stationary(&model)?, &output),
        Command::Linewidth {
            model,
            grid,
            output,
        } => emit(&linewidth_cmd(&model, &grid)?, &output),
        Command::Sweep {
            model,
            phis,
            mus,
            output,
        } => emit(&sweep(&model, phis, mus)?, &output),
        Command::Traj {
            model,
            seed,
            seeds,
            duration,
            dt,
            burn_in,
            pass_epsilon,
            atom_rate,
            output,
        } => emit(
            &traj(
                &model,
                seed,
                seeds,
                duration,
                dt,
                burn_in,
                pass_epsilon,
                atom_rate,
            )?,
            &output,
        ),
        Command::Limits {
            input,
            omega,
            p_out,
            gamma,
            kappa,
            n_bar,
            n_coh,
            ell_bare,
            hbar,
            quantities,
            output,
        } => {
            let mut inputs = match &input {
                Some(path) => read_limit_file(path)?,
                None => LimitInputs::default(),
            };
            let overrides = [
                (&mut inputs.omega, omega),
                (&mut inputs.p_out, p_out),
                (&mut inputs.gamma, gamma),
                (&mut inputs.kappa, kappa),
                (&mut inputs.n_bar, n_bar),
                (&mut inputs.n_coh, n_coh),
                (&mut inputs.ell_bare, ell_bare),
                (&mut inputs.hbar, hbar),
            ];
            for (slot, value) in overrides {
                if value.is_some() {
                    *slot = value;
                }
            }
            emit(&limits(&inputs, quantities.as_deref())?, &output)
        }
        Command::G1 {
            model,
            grid,
            output,
        } => emit(&g1_cmd(&model, &grid)?, &output),
        Command::Spectrum {
            model,
            grid,
            output,
        } => emit(&spectrum_cmd(&model, &grid)?, &output),
    }
}

fn model_header(report: &mut Report, model: &LaserModel) {
    report.set(
        "model",
        json!({
            "kind": model.kind().name(),
            "mu": model.mu(),
            "epsilon": model.epsilon(),
            "phi": model.phi(),
            "kappa": model.kappa(),
        }),
    );
    report.set("n_max", json!(model.n_max()));
}

fn tolerances() -> Value {
    let ode = OdeOptions::default();
    json!({
        "tail": TAIL_TOLERANCE,
        "norm": NORM_TOLERANCE,
        "stationary_residual": dynamics::STATIONARY_RESIDUAL_TOLERANCE,
        "tail_monitor": dynamics::TAIL_MONITOR_TOLERANCE,
        "ode_rtol": ode.rtol,
        "ode_atol": ode.atol,
        "ode_min_step": ode.min_step,
    })
}

fn config_json<T: serde::Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("argument structs serialize")
}

fn stationary(args: &ModelArgs) -> Result<Report, CliError> {
    let model = args.build()?;
    let dist = stationary_distribution(&model)?;
    let moments = dist.moments();
    let mut report = Report::new("stationary", config_json(args), vec!["n", "p"]);
    model_header(&mut report, &model);
    report.set("tolerances", tolerances());
    report.set("mean", json!(moments.mean));
    report.set("variance", json!(moments.variance));
    report.set("fano", json!(moments.fano()?));
    for (n, p) in dist.probabilities().iter().enumerate() {
        report.push(vec![n.into(), (*p).into()]);
    }
    Ok(report)
}

const LINEWIDTH_COLUMNS: [&str; 12] = [
    "model",
    "mu",
    "phi",
    "n_max",
    "predicted",
    "eigen",
    "spectrum",
    "fit",
    "dev_eigen",
    "dev_spectrum",
    "dev_fit",
    "route_spread",
];

fn linewidth_row(r: &LinewidthReport) -> Vec<Cell> {
    vec![
        r.kind.name().into(),
        r.mu.into(),
        r.phi.into(),
        r.n_max.into(),
        r.predicted.into(),
        r.eigen.into(),
        r.spectrum.into(),
        r.fit.into(),
        r.deviation(r.eigen).into(),
        r.deviation(r.spectrum).into(),
        r.deviation(r.fit).into(),
        r.route_spread().into(),
    ]
}

fn time_grid(model: &LaserModel, grid: &GridArgs) -> Result<Vec<f64>, CliError> {
    if grid.tmax.is_none() && grid.dt.is_none() {
        return Ok(default_time_grid(model)?);
    }
    let default = default_time_grid(model)?;
    let tmax = grid
        .tmax
        .unwrap_or(*default.last().expect("non-empty grid"));
    let dt = grid.dt.unwrap_or(default[1] - default[0]);
    if !(tmax.is_finite() && tmax > 0.0) {
        return Err(CliError::Validation(format!(
            "invalid value for --tmax: must be positive, got {tmax}"
        )));
    }
    if !(dt.is_finite() && dt > 0.0 && dt <= tmax) {
        return Err(CliError::Validation(format!(
            "invalid value for --dt: must be positive and at most --tmax, got {dt}"
        )));
    }
    let steps = (tmax / dt).round() as usize;
    Ok(uniform_grid(0.0, steps as f64 * dt, steps + 1))
}

fn omega_grid(width: f64, grid: &GridArgs) -> Result<Vec<f64>, CliError> {
    if grid.points < 3 {
        return Err(CliError::Validation(
            "invalid value for --points: need at least 3".into(),
        ));
    }
    match grid.wmax {
        None if grid.points == 1201 => Ok(default_omega_grid(width)),
        None => Ok(uniform_grid(-3.0 * width, 3.0 * width, grid.points)),
        Some(w) if w.is_finite() && w > 0.0 => Ok(uniform_grid(-w, w, grid.points)),
        Some(w) => Err(CliError::Validation(format!(
            "invalid value for --wmax: must be positive, got {w}"
        ))),
    }
}

fn measure(model: &LaserModel, grid: &GridArgs) -> Result<LinewidthReport, CliError> {
    let eigen = linewidth(model)?;
    let series = g1_series(model, &time_grid(model, grid)?)?;
    let spectrum = power_spectrum(&series, &omega_grid(eigen, grid)?)?;
    Ok(LinewidthReport {
        kind: model.kind(),
        mu: model.mu(),
        phi: model.phi(),
        n_max: model.n_max(),
        predicted: predicted_linewidth(model),
        eigen,
        spectrum: spectrum.fwhm,
        fit: 2.0 * spectrum.fit_decay,
    })
}

fn linewidth_cmd(args: &ModelArgs, grid: &GridArgs) -> Result<Report, CliError> {
    let model = args.build()?;
    let r = measure(&model, grid)?;
    let mut report = Report::new(
        "linewidth",
        json!({ "model": config_json(args), "grid": config_json(grid) }),
        LINEWIDTH_COLUMNS.to_vec(),
    );
    model_header(&mut report, &model);
    report.set("tolerances", tolerances());
    report.push(linewidth_row(&r));
    Ok(report)
}

fn sweep(
    args: &ModelArgs,
    phis: Option<Vec<f64>>,
    mus: Option<Vec<f64>>,
) -> Result<Report, CliError> {
    let (parameter, models) = match (phis, mus) {
        (Some(phis), _) => {
            if phis.is_empty() {
                return Err(CliError::Validation(
                    "invalid value for --phis: empty sweep list".into(),
                ));
            }
            let mu = args.mu()?;
            let models = phis
                .iter()
                .map(|&phi| args.build_with(mu, Some(phi)))
                .collect::<Result<Vec<_>, _>>()?;
            ("phi", models)
        }
        (None, Some(mus)) => {
            if mus.is_empty() {
                return Err(CliError::Validation(
                    "invalid value for --mus: empty sweep list".into(),
                ));
            }
            let models = mus
                .iter()
                .map(|&mu| args.build_with(mu, args.phi))
                .collect::<Result<Vec<_>, _>>()?;
            ("mu", models)
        }
        (None, None) => {
            return Err(CliError::Validation(
                "one of --phis or --mus is required".into(),
            ))
        }
    };
    let results = measure_many(&models);
    let mut columns = vec!["point"];
    columns.extend(LINEWIDTH_COLUMNS);
    let mut report = Report::new("sweep", config_json(args), columns);
    report.set("parameter", json!(parameter));
    report.set(
        "n_max",
        json!(models.iter().map(|m| m.n_max()).collect::<Vec<_>>()),
    );
    report.set("tolerances", tolerances());
    for (i, r) in results.into_iter().enumerate() {
        let mut row = vec![i.into()];
        row.extend(linewidth_row(&r?));
        report.push(row);
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn traj(
    args: &ModelArgs,
    seed: u64,
    seeds: usize,
    duration: f64,
    dt: f64,
    burn_in: Option<f64>,
    pass_epsilon: Option<f64>,
    atom_rate: Option<f64>,
) -> Result<Report, CliError> {
    let model = args.build()?;
    if seeds < 2 {
        return Err(CliError::Validation(
            "invalid value for --seeds: need at least 2 trajectories".into(),
        ));
    }
    let mut config = TrajectoryConfig::new(model, duration, seed);
    config.sample_dt = dt;
    config.epsilon = pass_epsilon;
    if let Some(rate) = atom_rate {
        config.atom_rate = rate;
    }
    config.validate()?;
    let burn_in = burn_in.unwrap_or(0.1 * duration);
    if !(burn_in >= 0.0 && burn_in < duration) {
        return Err(CliError::Validation(format!(
            "invalid value for --burn-in: must lie in [0, duration), got {burn_in}"
        )));
    }
    let interaction = AtomInteraction::for_model(&model, pass_epsilon)?;
    let records = run_ensemble(&config, seeds)?;
    let stats = ensemble_stats(&records, burn_in)?;

    let mut report = Report::new(
        "traj",
        json!({
            "model": config_json(args),
            "seed": seed,
            "trajectories": seeds,
            "duration": duration,
            "sample_dt": dt,
            "burn_in": burn_in,
            "pass_epsilon": interaction.epsilon(),
            "atom_rate": config.atom_rate,
        }),
        vec!["quantity", "index", "value", "stderr"],
    );
    model_header(&mut report, &model);
    report.set(
        "tolerances",
        json!({
            "tail_monitor": trajectories::TRAJECTORY_TAIL_TOLERANCE,
            "repeat_limit": trajectories::REPEAT_LIMIT,
        }),
    );
    report.set("rng", json!("ChaCha8, stream i for trajectory i"));
    let row = |q: &str, i: Cell, v: Cell, se: Cell| vec![q.into(), i, v, se];
    report.push(row(
        "mean_n",
        Cell::Empty,
        stats.mean_n.into(),
        stats.mean_n_se.into(),
    ));
    report.push(row(
        "fano",
        Cell::Empty,
        stats.fano.into(),
        stats.fano_se.into(),
    ));
    report.push(row(
        "samples",
        Cell::Empty,
        stats.samples.into(),
        Cell::Empty,
    ));
    report.push(row(
        "atom_events",
        Cell::Empty,
        stats.atom_events.into(),
        Cell::Empty,
    ));
    report.push(row(
        "mean_repeats",
        Cell::Empty,
        stats.mean_repeats.into(),
        Cell::Empty,
    ));
    report.push(row(
        "repeat_chi_square",
        Cell::Empty,
        stats.repeat_chi_square.into(),
        Cell::Empty,
    ));
    report.push(row(
        "repeat_p_value",
        Cell::Empty,
        stats.repeat_p_value.into(),
        Cell::Empty,
    ));
    for (n, (p, se)) in stats
        .distribution
        .iter()
        .zip(&stats.distribution_se)
        .enumerate()
    {
        report.push(row("p_n", n.into(), (*p).into(), (*se).into()));
    }
    for (b, count) in stats.repeat_pit_histogram.iter().enumerate() {
        report.push(row(
            "repeat_pit_bin",
            b.into(),
            (*count).into(),
            Cell::Empty,
        ));
    }
    Ok(report)
}

fn read_limit_file(path: &Path) -> Result<LimitInputs, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut values = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| {
                CliError::Validation(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    lineno + 1
                ))
            })?;
        let value: f64 = value.trim().parse().map_err(|_| {
            CliError::Validation(format!(
                "{}:{}: `{}` is not a number",
                path.display(),
                lineno + 1,
                value.trim()
            ))
        })?;
        values.insert(key.trim().replace('-', "_"), value);
    }
    let mut inputs = LimitInputs::default();
    for (key, value) in values {
        let slot = match key.as_str() {
            "omega" => &mut inputs.omega,
            "p_out" => &mut inputs.p_out,
            "gamma" => &mut inputs.gamma,
            "kappa" => &mut inputs.kappa,
            "n_bar" => &mut inputs.n_bar,
            "n_coh" => &mut inputs.n_coh,
            "ell_bare" => &mut inputs.ell_bare,
            "hbar" => &mut inputs.hbar,
            other => {
                return Err(CliError::Validation(format!(
                    "{}: unknown key `{other}`",
                    path.display()
                )))
            }
        };
        *slot = Some(value);
    }
    Ok(inputs)
}

fn limits(inputs: &LimitInputs, requested: Option<&[String]>) -> Result<Report, CliError> {
    let chain = schawlow_townes_chain(inputs)?;
    let mut report = Report::new("limits", config_json(inputs), vec!["quantity", "value"]);
    report.set(
        "units",
        json!("SI: rad/s for rates and linewidths, W for power, J s for hbar"),
    );
    report.set("st_within_bound", json!(chain.st_within_bound));
    match requested {
        Some(names) => {
            for name in names {
                let q = LimitQuantity::from_name(name.trim()).ok_or_else(|| {
                    CliError::Validation(format!(
                        "invalid value for --quantities: unknown quantity `{name}`"
                    ))
                })?;
                report.push(vec![q.name().into(), inputs.evaluate(q)?.into()]);
            }
        }
        None => {
            for (q, v) in &chain.values {
                report.push(vec![q.name().into(), (*v).into()]);
            }
        }
    }
    Ok(report)
}

fn series_report(command: &str, args: &ModelArgs, grid: &GridArgs, model: &LaserModel) -> Report {
    let columns = if command == "g1" {
        vec!["tau", "re", "im"]
    } else {
        vec!["omega", "power"]
    };
    let mut report = Report::new(
        command,
        json!({ "model": config_json(args), "grid": config_json(grid) }),
        columns,
    );
    model_header(&mut report, model);
    report.set("tolerances", tolerances());
    report
}

fn g1_cmd(args: &ModelArgs, grid: &GridArgs) -> Result<Report, CliError> {
    let model = args.build()?;
    let series: CorrelationSeries = g1_series(&model, &time_grid(&model, grid)?)?;
    let mut report = series_report("g1", args, grid, &model);
    for (t, g) in series.tau.iter().zip(&series.g1) {
        report.push(vec![(*t).into(), g.re.into(), g.im.into()]);
    }
    Ok(report)
}

fn spectrum_cmd(args: &ModelArgs, grid: &GridArgs) -> Result<Report, CliError> {
    let model = args.build()?;
    let eigen = linewidth(&model)?;
    let series = g1_series(&model, &time_grid(&model, grid)?)?;
    let spectrum = power_spectrum(&series, &omega_grid(eigen, grid)?)?;
    let mut report = series_report("spectrum", args, grid, &model);
    report.set("fwhm", json!(spectrum.fwhm));
    report.set("fit_decay", json!(spectrum.fit_decay));
    report.set("predicted", json!(predicted_linewidth(&model)));
    for (w, p) in spectrum.omega.iter().zip(&spectrum.power) {
        report.push(vec![(*w).into(), (*p).into()]);
    }
    Ok(report)
}
