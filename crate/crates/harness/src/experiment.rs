//! Runs one configured experiment, streaming metric rows as it goes.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use brwp_core::kernels::KernelVariant;
use brwp_core::metrics::{
    error_norms, hpd_threshold, kde_on_grid, kl_on_grid, mixture_marginal_exact, Grid1D,
    MarginalCurve,
};
use brwp_core::problems::imaging::{box_taps, piecewise_constant_image};
use brwp_core::problems::{
    circulant_blur, cs_target, generate_logistic_data, logistic_posterior, mixture_target,
    ImagingSpec, L12Smooth, MixtureSpec, RegMode,
};
use brwp_core::samplers::{
    brwp_run, init_ensemble, run_sampler, tv_pd_step, Myula, SamplerConfig, TvProblem, TvState,
};
use brwp_core::target::{IsotropicQuadratic, Nonsmooth, SmoothPotential};
use brwp_core::{Ensemble, TargetSpec};
use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, SamplerKind};
use crate::error::HarnessError;
use crate::output::{quantize, write_ensemble_csv, write_pgm, MetricRow, MetricSink};
use crate::validate::{validate_kernels, ValidationReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { message: String },
}

/// `η_α` for each `α`, with the potential values they were computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HpdTable {
    pub alphas: Vec<f64>,
    pub etas: Vec<f64>,
    pub potential_values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config_hash: String,
    pub experiment: ExperimentKind,
    pub status: RunStatus,
    pub rows: Vec<MetricRow>,
    pub final_positions: Option<Array2<f64>>,
    pub hpd: Option<HpdTable>,
    pub validation: Option<ValidationReport>,
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.status == RunStatus::Completed
            && self.validation.as_ref().is_none_or(|v| v.all_passed())
    }

    /// Rows with the given metric name, in order.
    pub fn series(&self, metric: &str, dim: Option<usize>) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric && r.dim == dim)
            .map(|r| (r.iter, r.value))
            .collect()
    }

    pub fn first_last(&self, metric: &str, dim: Option<usize>) -> Option<(f64, f64)> {
        let s = self.series(metric, dim);
        Some((s.first()?.1, s.last()?.1))
    }
}

#[derive(Serialize)]
struct RecordSummary<'a> {
    config_hash: &'a str,
    experiment: &'static str,
    status: &'a RunStatus,
    n_rows: usize,
    wall_clock_secs: f64,
}

/// Collects rows and mirrors them to the metric CSV. I/O failures are kept
/// aside so the sampler can be stopped through its own error channel.
struct Recorder {
    sink: Option<MetricSink>,
    rows: Vec<MetricRow>,
    io_error: Option<HarnessError>,
}

impl Recorder {
    fn new(dir: Option<&Path>) -> Result<Self, HarnessError> {
        let sink = match dir {
            Some(d) => Some(MetricSink::create(&d.join("metrics.csv"))?),
            None => None,
        };
        Ok(Recorder {
            sink,
            rows: Vec::new(),
            io_error: None,
        })
    }

    fn push(&mut self, rows: Vec<MetricRow>) -> brwp_core::Result<()> {
        if let Some(s) = &mut self.sink {
            if let Err(e) = s.write(&rows) {
                self.io_error = Some(e);
                return Err(brwp_core::Error::Usage("metric output failed".into()));
            }
        }
        self.rows.extend(rows);
        Ok(())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Output directory of a run: `output_dir` when set.
pub fn output_dir(cfg: &ExperimentConfig) -> Option<PathBuf> {
    cfg.output_dir.as_ref().map(PathBuf::from)
}

fn sampler_config(cfg: &ExperimentConfig) -> Result<SamplerConfig, HarnessError> {
    let mut c = SamplerConfig::new(
        cfg.h,
        cfg.n_particles,
        cfg.n_iters,
        cfg.kernel_variant,
        cfg.seed,
    )?;
    c.kde_sigma = cfg.kde_sigma;
    c.validate()?;
    Ok(c)
}

fn initial(cfg: &ExperimentConfig, d: usize) -> Result<Ensemble, HarnessError> {
    let center = Array1::from_elem(d, cfg.init.center);
    Ok(init_ensemble(
        cfg.n_particles,
        center.view(),
        cfg.seed,
        cfg.init.spread,
    )?)
}

/// Runs the configured sampler with `metrics` evaluated on every iterate.
fn run_ensemble(
    cfg: &ExperimentConfig,
    target: &TargetSpec,
    e0: Ensemble,
    rec: &mut Recorder,
    metrics: impl Fn(&Ensemble) -> brwp_core::Result<Vec<MetricRow>>,
) -> brwp_core::Result<Ensemble> {
    let sc = match sampler_config(cfg) {
        Ok(c) => c,
        Err(HarnessError::Core(e)) => return Err(e),
        Err(e) => return Err(brwp_core::Error::Config(e.to_string())),
    };
    let hook = |e: &Ensemble| {
        let rows = metrics(e)?;
        rec.push(rows)
    };
    match cfg.sampler {
        SamplerKind::Brwp => brwp_run(e0, target, &sc, hook),
        SamplerKind::Myula => run_sampler(&mut Myula::new(target, &sc), e0, cfg.n_iters, hook),
    }
}

struct Outcome {
    final_positions: Option<Array2<f64>>,
    hpd: Option<HpdTable>,
    validation: Option<ValidationReport>,
    images: Vec<(String, Vec<f64>)>,
    image_shape: Option<(usize, usize)>,
}

impl Outcome {
    fn positions(p: Option<Array2<f64>>) -> Self {
        Outcome {
            final_positions: p,
            hpd: None,
            validation: None,
            images: Vec::new(),
            image_shape: None,
        }
    }
}

fn mixture(
    cfg: &ExperimentConfig,
    rec: &mut Recorder,
) -> Result<brwp_core::Result<Outcome>, HarnessError> {
    let m = cfg.mixture();
    let lambda = cfg.lambda_or(0.0);
    let spec = MixtureSpec::random(
        cfg.dims,
        m.n_centers,
        m.half_width,
        m.sigma,
        lambda,
        cfg.seed,
    )?;
    let target = mixture_target(&spec, cfg.beta);
    let grid = Grid1D::new(m.grid_lo, m.grid_hi, m.grid_points)?;
    let dims = cfg.marginals();
    let exact: Vec<MarginalCurve> = dims
        .iter()
        .map(|&k| mixture_marginal_exact(&spec, k, grid))
        .collect::<brwp_core::Result<_>>()?;
    if let Some(k) = exact.iter().position(|c| c.grid_too_narrow()) {
        eprintln!(
            "warning: grid captures only {:.6} of marginal {} mass",
            exact[k].mass_captured, dims[k]
        );
    }
    let e0 = initial(cfg, cfg.dims)?;
    let bandwidth = m.kde_bandwidth;
    let run = run_ensemble(cfg, &target, e0, rec, |e| {
        dims.iter()
            .zip(&exact)
            .map(|(&k, q)| {
                let col = e.positions.column(k).to_vec();
                let p = kde_on_grid(&col, bandwidth, grid)?;
                Ok(MetricRow::indexed(
                    e.iteration,
                    "kl",
                    k,
                    kl_on_grid(&p, &q.curve)?,
                ))
            })
            .collect()
    });
    Ok(run.map(|e| Outcome::positions(Some(e.positions))))
}

fn logistic(
    cfg: &ExperimentConfig,
    rec: &mut Recorder,
) -> Result<brwp_core::Result<Outcome>, HarnessError> {
    let mut data = generate_logistic_data(cfg.logistic().n_data, cfg.dims, cfg.seed)?;
    if let Some(l) = cfg.lambda {
        data.lambda = l;
    }
    let target = logistic_posterior(&data, cfg.beta);
    let e0 = initial(cfg, cfg.dims)?;
    let truth = data.theta_star.clone();
    let run = run_ensemble(cfg, &target, e0, rec, |e| {
        let n = error_norms(e.mean().view(), truth.view())?;
        Ok(vec![MetricRow::scalar(e.iteration, "l1_rel", n.l1_rel)])
    });
    Ok(run.map(|e| Outcome::positions(Some(e.positions))))
}

fn gaussian_sanity(
    cfg: &ExperimentConfig,
    rec: &mut Recorder,
) -> Result<brwp_core::Result<Outcome>, HarnessError> {
    let target = TargetSpec::new(
        Arc::new(IsotropicQuadratic { curvature: 1.0 }),
        Nonsmooth::L1 {
            lambda: cfg.lambda_or(0.0),
        },
        cfg.beta,
    );
    let e0 = initial(cfg, cfg.dims)?;
    let run = run_ensemble(cfg, &target, e0, rec, |e| {
        let mean = e.mean();
        let mut rows = vec![MetricRow::scalar(
            e.iteration,
            "mean_norm",
            mean.dot(&mean).sqrt(),
        )];
        for (l, col) in e.positions.columns().into_iter().enumerate() {
            rows.push(MetricRow::indexed(e.iteration, "var", l, col.var(0.0)));
        }
        Ok(rows)
    });
    Ok(run.map(|e| Outcome::positions(Some(e.positions))))
}

fn l12tv(
    cfg: &ExperimentConfig,
    rec: &mut Recorder,
) -> Result<brwp_core::Result<Outcome>, HarnessError> {
    let im = cfg.imaging();
    let (h, w) = (im.height, im.width);
    let lambda = cfg.lambda_or(0.0);
    let truth = piecewise_constant_image(h, w);
    let spec = ImagingSpec::sparse_corruption(
        truth.clone(),
        h,
        w,
        im.noise_var,
        im.corruption_var,
        lambda,
        RegMode::L12Tv,
        cfg.seed,
    )?;
    let extra: Arc<dyn SmoothPotential> = Arc::new(L12Smooth::negative_l2_part(&spec));
    let pb = TvProblem::new(
        spec.scaled_data_fit(),
        spec.gradient(),
        Some(extra),
        im.gamma,
        lambda,
        im.tau,
        cfg.h,
        cfg.beta,
    )?;
    let noisy = spec.data.observation.clone();
    let noisy_psnr = error_norms(noisy.view(), truth.view())?.psnr;
    let mut state = TvState::init(
        cfg.n_particles,
        noisy.view(),
        cfg.init.spread,
        &spec.gradient(),
        cfg.seed,
    )?;

    let rows = |s: &TvState| -> brwp_core::Result<Vec<MetricRow>> {
        let mut out = Vec::new();
        if s.iteration == 0 {
            out.push(MetricRow::scalar(0, "psnr_noisy", noisy_psnr));
        }
        out.push(MetricRow::scalar(
            s.iteration,
            "psnr",
            error_norms(s.mean_image().view(), truth.view())?.psnr,
        ));
        out.push(MetricRow::scalar(
            s.iteration,
            "dual_max",
            s.max_dual_norm(),
        ));
        Ok(out)
    };
    let run = (|| {
        rec.push(rows(&state)?)?;
        for _ in 0..cfg.n_iters {
            state = tv_pd_step(&state, &pb)?;
            rec.push(rows(&state)?)?;
        }
        Ok(())
    })();
    Ok(run.map(|()| Outcome {
        images: vec![
            ("truth".into(), truth.to_vec()),
            ("noisy".into(), noisy.to_vec()),
            ("mean".into(), state.mean_image().to_vec()),
        ],
        image_shape: Some((h, w)),
        ..Outcome::positions(Some(state.u.clone()))
    }))
}

fn cs_hpd(
    cfg: &ExperimentConfig,
    rec: &mut Recorder,
) -> Result<brwp_core::Result<Outcome>, HarnessError> {
    let im = cfg.imaging();
    let (h, w) = (im.height, im.width);
    let d = h * w;
    let truth = piecewise_constant_image(h, w);
    let blur = circulant_blur(d, &box_taps(im.blur_width), d / im.subsample)?;
    let spec = ImagingSpec::blurred(
        truth.clone(),
        h,
        w,
        &blur,
        im.noise_var,
        cfg.lambda_or(0.0),
        RegMode::L1,
        cfg.seed,
    )?;
    let target = cs_target(&spec, cfg.beta);
    let e0 = initial(cfg, d)?;
    let run = run_ensemble(cfg, &target, e0, rec, |e| {
        let psnr = error_norms(e.mean().view(), truth.view())?.psnr;
        Ok(vec![MetricRow::scalar(e.iteration, "psnr", psnr)])
    });
    let e = match run {
        Ok(e) => e,
        Err(err) => return Ok(Err(err)),
    };
    let values: Vec<f64> = e
        .positions
        .outer_iter()
        .map(|x| spec.potential(x))
        .collect();
    let alphas = im.hpd_alphas.clone();
    let etas: Vec<f64> = alphas
        .iter()
        .map(|&a| hpd_threshold(&values, a))
        .collect::<brwp_core::Result<_>>()?;
    let mut rows = Vec::new();
    for (k, (&a, &eta)) in alphas.iter().zip(&etas).enumerate() {
        rows.push(MetricRow::indexed(e.iteration, "hpd_alpha", k, a));
        rows.push(MetricRow::indexed(e.iteration, "hpd_eta", k, eta));
    }
    if let Err(err) = rec.push(rows) {
        return Ok(Err(err));
    }
    Ok(Ok(Outcome {
        hpd: Some(HpdTable {
            alphas,
            etas,
            potential_values: values,
        }),
        images: vec![
            ("truth".into(), truth.to_vec()),
            ("mean".into(), e.mean().to_vec()),
        ],
        image_shape: Some((h, w)),
        ..Outcome::positions(Some(e.positions))
    }))
}

fn kernel_validation(
    cfg: &ExperimentConfig,
    rec: &mut Recorder,
) -> Result<brwp_core::Result<Outcome>, HarnessError> {
    let report = validate_kernels(cfg.seed)?;
    let rows = report
        .checks
        .iter()
        .map(|c| MetricRow::scalar(0, &c.name, c.measured))
        .collect();
    if let Err(e) = rec.push(rows) {
        return Ok(Err(e));
    }
    Ok(Ok(Outcome {
        validation: Some(report),
        ..Outcome::positions(None)
    }))
}

/// Executes the experiment. Configuration and I/O problems are errors; a
/// numeric abort inside the sampler yields a record marked failed, with the
/// metric CSV written up to the last completed iteration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord, HarnessError> {
    let start = Instant::now();
    let dir = output_dir(cfg);
    if let Some(d) = &dir {
        std::fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
    }
    if cfg.experiment != ExperimentKind::KernelValidation
        && cfg.kernel_variant == KernelVariant::Gaussian
    {
        eprintln!("note: the gaussian kernel degrades when N is small relative to the dimension");
    }
    let mut rec = Recorder::new(dir.as_deref())?;
    let result = match cfg.experiment {
        ExperimentKind::Mixture => mixture(cfg, &mut rec),
        ExperimentKind::Logistic => logistic(cfg, &mut rec),
        ExperimentKind::L12tvDenoise => l12tv(cfg, &mut rec),
        ExperimentKind::CsHpd => cs_hpd(cfg, &mut rec),
        ExperimentKind::GaussianSanity => gaussian_sanity(cfg, &mut rec),
        ExperimentKind::KernelValidation => kernel_validation(cfg, &mut rec),
    }?;
    if let Some(e) = rec.io_error.take() {
        return Err(e);
    }
    let (status, outcome) = match result {
        Ok(o) => (RunStatus::Completed, o),
        Err(brwp_core::Error::Config(m)) | Err(brwp_core::Error::Usage(m)) => {
            return Err(HarnessError::config(m));
        }
        Err(e) => (
            RunStatus::Failed {
                message: e.to_string(),
            },
            Outcome::positions(None),
        ),
    };
    let record = RunRecord {
        config_hash: cfg.hash(),
        experiment: cfg.experiment,
        status,
        rows: rec.rows,
        final_positions: outcome.final_positions,
        hpd: outcome.hpd,
        validation: outcome.validation,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    if let Some(d) = &dir {
        write_artifacts(d, &record, &outcome.images, outcome.image_shape)?;
    }
    Ok(record)
}

fn write_artifacts(
    dir: &Path,
    record: &RunRecord,
    images: &[(String, Vec<f64>)],
    shape: Option<(usize, usize)>,
) -> Result<(), HarnessError> {
    if let Some(p) = &record.final_positions {
        write_ensemble_csv(p.view(), &dir.join("ensemble.csv"))?;
    }
    if let Some((h, w)) = shape {
        for (name, values) in images {
            write_pgm(
                &quantize(values, 0.0, 1.0),
                w,
                h,
                &dir.join(format!("{name}.pgm")),
            )?;
        }
    }
    if let Some(v) = &record.validation {
        let path = dir.join("validation.json");
        std::fs::write(&path, v.to_json()).map_err(|e| io_err(&path, e))?;
    }
    let summary = RecordSummary {
        config_hash: &record.config_hash,
        experiment: record.experiment.as_str(),
        status: &record.status,
        n_rows: record.rows.len(),
        wall_clock_secs: record.wall_clock_secs,
    };
    let path = dir.join("record.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&path, json).map_err(|e| io_err(&path, e))
}

/// Exact marginal curve of the configured mixture along `dim`.
pub fn mixture_marginal(cfg: &ExperimentConfig, dim: usize) -> Result<MarginalCurve, HarnessError> {
    if cfg.experiment != ExperimentKind::Mixture {
        return Err(HarnessError::config(format!(
            "marginal needs a mixture config, got {}",
            cfg.experiment.as_str()
        )));
    }
    if dim >= cfg.dims {
        return Err(HarnessError::config(format!(
            "dim {dim} out of range for dims = {}",
            cfg.dims
        )));
    }
    let m = cfg.mixture();
    let spec = MixtureSpec::random(
        cfg.dims,
        m.n_centers,
        m.half_width,
        m.sigma,
        cfg.lambda_or(0.0),
        cfg.seed,
    )?;
    Ok(mixture_marginal_exact(
        &spec,
        dim,
        Grid1D::new(m.grid_lo, m.grid_hi, m.grid_points)?,
    )?)
}
