use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Axis};
use serde::{Deserialize, Serialize};
use survival_svb::cavi::{self, ElboTrace, FitDocument, FitOptions, InitStrategy};
use survival_svb::gof::{self, GridOptions, GridSearch};
use survival_svb::mcmc::{self, McmcConfig, McmcDocument, McmcSamples};
use survival_svb::simulate::{self, GroundTruth, SimConfig, Setting};
use survival_svb::summaries::{self, ThresholdRule};
use survival_svb::survival::prognostic_index;
use survival_svb::{io, model, Error, PriorConfig, SurvivalDataset};

use crate::model_file::{LoadedModel, ModelFile, Preprocessing};
use crate::{
    CliError, CompareRiskArgs, CvArgs, EvaluateArgs, FitArgs, FitControlArgs, GofArgs, InitKind, McmcArgs, PrepArgs, PriorArgs,
    RuleKind, SelectArgs, SettingKind, SimulateArgs,
};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_training(data: &Path, prep: &PrepArgs) -> Result<(SurvivalDataset, Preprocessing), CliError> {
    Preprocessing::fit(io::load_survival_csv(data)?, prep.filter_cv, prep.center)
}

fn prior_for(args: &PriorArgs, p: usize) -> Result<PriorConfig, CliError> {
    Ok(PriorConfig::new(args.lambda, args.a0, args.b0.unwrap_or(p as f64))?)
}

/// A bare JSON array, or any object carrying a `mu` array.
#[derive(Deserialize)]
#[serde(untagged)]
enum InitVector {
    Bare(Vec<f64>),
    Object { mu: Vec<f64> },
}

fn fit_options(control: &FitControlArgs, p: usize) -> Result<FitOptions, CliError> {
    let init = match control.init {
        InitKind::Lasso => InitStrategy::Lasso,
        InitKind::Ridge => InitStrategy::Ridge,
        InitKind::Zero => InitStrategy::Zero,
        InitKind::File => {
            let path = control
                .init_file
                .as_ref()
                .ok_or_else(|| CliError::Usage("--init file requires --init-file".into()))?;
            let mu = match io::load_json::<InitVector>(path)? {
                InitVector::Bare(mu) | InitVector::Object { mu } => mu,
            };
            if mu.len() != p {
                return Err(Error::Dimension {
                    what: format!("initial mu in {}", path.display()),
                    expected: p,
                    found: mu.len(),
                }
                .into());
            }
            InitStrategy::File(mu)
        }
    };
    let options = FitOptions {
        tol: control.tol,
        max_iter: control.max_iter,
        init,
        init_penalty_ratio: control.init_penalty,
        ..FitOptions::default()
    };
    options.validate()?;
    Ok(options)
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let setting = match args.setting {
        SettingKind::Independent => Setting::Independent,
        SettingKind::Block => Setting::Block {
            rho: args.rho,
            block_size: args.block_size,
        },
        SettingKind::External => {
            let path = args
                .design
                .as_ref()
                .ok_or_else(|| CliError::Usage("--setting external requires --design".into()))?;
            Setting::External(io::load_design_csv(path)?.0)
        }
    };
    let config = SimConfig {
        coef_low: args.coef_low,
        coef_high: args.coef_high,
        ..SimConfig::new(args.n, args.p, args.s, args.c, args.seed).with_setting(setting)
    };
    let (data, truth) = simulate::simulate(&config)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::Io(format!("{}: {e}", args.out_dir.display())))?;
    io::save_survival_csv(&data, &args.out_dir.join("data.csv"))?;
    io::save_json(&truth, &args.out_dir.join("truth.json"))?;
    let censored = 1.0 - data.n_events() as f64 / data.n() as f64;
    println!("n={} p={} s={} censored={censored:.4}", data.n(), data.p(), truth.support.len());
    Ok(())
}

pub fn fit(args: FitArgs) -> Result<(), CliError> {
    let (data, preprocessing) = load_training(&args.data, &args.prep)?;
    let prior = prior_for(&args.prior, data.p())?;
    let mut options = fit_options(&args.control, data.p())?;
    options.elbo_trace = args.elbo_samples.map(|samples| ElboTrace { samples, seed: args.seed });
    let result = cavi::fit(&data, &prior, &options)?;
    let file = ModelFile {
        fit: FitDocument::from(&result),
        preprocessing,
    };
    io::save_json(&file, &args.out)?;
    println!(
        "iterations={} converged={} selected={}",
        result.iterations,
        result.converged,
        result.params.gamma.iter().filter(|&&g| g >= 0.5).count()
    );
    if result.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(result.iterations))
    }
}

fn chain_path(base: &Path, chain: usize, chains: usize) -> PathBuf {
    if chains == 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}.{chain}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{chain}"),
    };
    base.with_file_name(name)
}

fn pool(chains: &[McmcSamples]) -> McmcSamples {
    let stack_f = |f: fn(&McmcSamples) -> &ndarray::Array2<f64>| {
        concatenate(Axis(0), &chains.iter().map(|c| f(c).view()).collect::<Vec<_>>()).expect("chains share p")
    };
    let z = concatenate(Axis(0), &chains.iter().map(|c| c.z.view()).collect::<Vec<_>>()).expect("chains share p");
    let p = chains[0].p();
    let acceptance_rate = (0..p)
        .map(|j| chains.iter().map(|c| c.acceptance_rate[j]).sum::<f64>() / chains.len() as f64)
        .collect();
    McmcSamples {
        beta: stack_f(|c| &c.beta),
        z,
        w: stack_f(|c| &c.w),
        acceptance_rate,
        first_iter: chains[0].first_iter,
    }
}

pub fn mcmc(args: McmcArgs) -> Result<(), CliError> {
    if args.chains == 0 {
        return Err(CliError::Usage("--chains must be at least 1".into()));
    }
    let (data, preprocessing) = load_training(&args.data, &args.prep)?;
    let prior = prior_for(&args.prior, data.p())?;
    let config = McmcConfig {
        n_iter: args.iters,
        burn_in: args.burnin,
        sigma_k: args.sigma_k,
        sigma_s: args.sigma_s,
        seed: args.seed,
    };
    let chains = mcmc::run_chains(&data, &prior, &config, args.chains)?;
    if let Some(base) = &args.samples {
        for (c, chain) in chains.iter().enumerate() {
            chain.write_csv(create(&chain_path(base, c, args.chains))?)?;
        }
    }
    let pooled = if chains.len() == 1 { chains.into_iter().next().expect("one chain") } else { pool(&chains) };
    let summary = mcmc::mcmc_summaries(&pooled, args.level, 0.95)?;
    let file = ModelFile {
        fit: McmcDocument::new(&summary, &prior, &config),
        preprocessing,
    };
    io::save_json(&file, &args.out)?;
    let mean_accept = summary.acceptance_rate.iter().sum::<f64>() / summary.acceptance_rate.len() as f64;
    println!(
        "draws={} selected={} acceptance={mean_accept:.3}",
        pooled.len(),
        summary.inclusion.iter().filter(|&&g| g >= 0.5).count()
    );
    Ok(())
}

#[derive(Serialize)]
struct GofOutput {
    #[serde(flatten)]
    report: gof::GofReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    lpds: Option<f64>,
}

pub fn gof(args: GofArgs) -> Result<(), CliError> {
    let model = LoadedModel::load(&args.fit)?;
    let data = model.prepare(&args.data)?;
    let prior = PriorConfig::new(model.doc.lambda, model.doc.a0, model.doc.b0)?;
    let params = model.params()?;
    let report = gof::estimate_elbo(&data, &params, &prior, args.samples, args.seed)?;
    let lpds = if args.lpds {
        Some(gof::log_predictive_density(&data, &params, args.samples, args.seed)?)
    } else {
        None
    };
    println!("elbo={:.4} ell={:.4} kl={:.4}", report.elbo, report.ell, report.kl);
    io::save_json(&GofOutput { report, lpds }, &args.out)?;
    Ok(())
}

#[derive(Serialize)]
struct CvSummary<'a> {
    b0: f64,
    folds: usize,
    cells: &'a [gof::CellSummary],
    recommended: &'a gof::CellSummary,
}

fn write_cv_table(grid: &GridSearch, path: &Path, lpds: bool) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["lambda", "a0", "fold", "elbo", "ell", "kl", "c_index"];
    if lpds {
        header.push("lpds");
    }
    wtr.write_record(&header).map_err(Error::from)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &grid.folds {
        let mut row = vec![
            r.lambda.to_string(),
            r.a0.to_string(),
            r.fold.to_string(),
            r.elbo.to_string(),
            r.ell.to_string(),
            r.kl.to_string(),
            opt(r.c_index),
        ];
        if lpds {
            row.push(opt(r.lpds));
        }
        wtr.write_record(&row).map_err(Error::from)?;
    }
    wtr.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn cv(args: CvArgs) -> Result<(), CliError> {
    let (data, _) = load_training(&args.data, &args.prep)?;
    let b0 = args.b0.unwrap_or(data.p() as f64);
    let options = GridOptions {
        folds: args.folds,
        lambda_grid: args.lambda_grid.clone(),
        a0_grid: args.a0_grid.clone(),
        b0,
        fit: fit_options(&args.control, data.p())?,
        mc_samples: args.mc_samples,
        seed: args.seed,
        lpds: args.lpds,
    };
    let grid = gof::grid_search(&data, &options)?;
    write_cv_table(&grid, &args.out, args.lpds)?;
    let best = grid.recommended_cell();
    io::save_json(
        &CvSummary {
            b0,
            folds: args.folds,
            cells: &grid.cells,
            recommended: best,
        },
        &args.summary,
    )?;
    println!("recommended lambda={} a0={} elbo={:.4}", best.lambda, best.a0, best.elbo.mean);
    Ok(())
}

#[derive(Serialize)]
struct Selection {
    k_star: f64,
    alpha: f64,
    selected: Vec<String>,
}

pub fn select(args: SelectArgs) -> Result<(), CliError> {
    let model = LoadedModel::load(&args.fit)?;
    let rule = match args.rule {
        RuleKind::Smallest => ThresholdRule::Smallest,
        RuleKind::Largest => ThresholdRule::Largest,
    };
    let choice = summaries::bfdr_threshold(&model.doc.gamma, args.alpha, rule)?;
    let selected: Vec<String> = choice.selected.iter().map(|&j| model.preprocessing.feature_name(j)).collect();
    println!("k_star={} selected={}", choice.k_star, selected.len());
    io::save_json(
        &Selection {
            k_star: choice.k_star,
            alpha: args.alpha,
            selected,
        },
        &args.out,
    )?;
    Ok(())
}

fn to_rows(ids: &[usize], n: usize, flag: &str) -> Result<Vec<usize>, CliError> {
    ids.iter()
        .map(|&i| {
            if i == 0 || i > n {
                Err(CliError::Usage(format!("--{flag}: row {i} is outside 1..={n}")))
            } else {
                Ok(i - 1)
            }
        })
        .collect()
}

pub fn compare_risk(args: CompareRiskArgs) -> Result<(), CliError> {
    let model = LoadedModel::load(&args.fit)?;
    let data = model.prepare(&args.data)?;
    let params = model.params()?;
    let (low, high) = if args.median_split {
        let eta = prognostic_index(&data, &model::posterior_mean(&params))?;
        summaries::median_split(&eta, &eta)?
    } else {
        (to_rows(&args.low, data.n(), "low")?, to_rows(&args.high, data.n(), "high")?)
    };
    if low.is_empty() || high.is_empty() {
        return Err(CliError::Usage("both risk groups must be nonempty".into()));
    }
    let matrix = summaries::risk_matrix(&params, &data, &low, &high, args.samples, args.seed)?;
    let mut wtr = csv::Writer::from_writer(create(&args.out)?);
    let mut header = vec!["patient".to_string()];
    header.extend(matrix.low.iter().map(|i| (i + 1).to_string()));
    wtr.write_record(&header).map_err(Error::from)?;
    for (a, &i) in matrix.high.iter().enumerate() {
        let mut row = vec![(i + 1).to_string()];
        row.extend(matrix.values.row(a).iter().map(|v| v.to_string()));
        wtr.write_record(&row).map_err(Error::from)?;
    }
    wtr.flush().map_err(|e| CliError::Io(format!("{}: {e}", args.out.display())))?;
    let mean = matrix.values.mean().unwrap_or(f64::NAN);
    println!("high={} low={} mean_probability={mean:.4}", matrix.high.len(), matrix.low.len());
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let model = LoadedModel::load(&args.fit)?;
    let truth: GroundTruth = io::load_json(&args.truth)?;
    truth.validate()?;
    let sets = match model.sets.clone() {
        Some(sets) => sets,
        None => summaries::credible_sets(&model.params()?, args.level, args.threshold)?,
    };
    let metrics = simulate::evaluate(&model.doc.beta_hat, &model.doc.gamma, &sets, &truth)?;
    println!("l2={:.4} fdr={:.4} tpr={:?} auc={:?}", metrics.l2_error, metrics.fdr, metrics.tpr, metrics.auc);
    io::save_json(&metrics, &args.out)?;
    Ok(())
}
