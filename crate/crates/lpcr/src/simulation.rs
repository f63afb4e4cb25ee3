//! Ground-truth generation, the latent-variable generator and its moment
//! formulas, evaluation metrics, the trace diagnostic, and the seeded
//! experiment runner.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{
    fit_classical_pcr, fit_ols, fit_pls_krylov, lpcr_scan, select_k_loocv, Criterion, MethodTag,
};
use crate::linalg::{derive_seed, haar_semi_orthogonal, standard_normal_matrix};
use crate::model::{symmetrize, Dataset};
use crate::optimizer::OptimConfig;

/// Simulation ground truth.
#[derive(Debug, Clone)]
pub struct TrueParams {
    u_star: DMatrix<f64>,
    d_star: DVector<f64>,
    tau_star: f64,
    gamma_star: DMatrix<f64>,
    beta_star: DMatrix<f64>,
    sigma_star: DMatrix<f64>,
    sigma_x_star: DMatrix<f64>,
}

impl TrueParams {
    pub fn u_star(&self) -> &DMatrix<f64> {
        &self.u_star
    }

    pub fn d_star(&self) -> &DVector<f64> {
        &self.d_star
    }

    pub fn tau_star(&self) -> f64 {
        self.tau_star
    }

    pub fn gamma_star(&self) -> &DMatrix<f64> {
        &self.gamma_star
    }

    pub fn beta_star(&self) -> &DMatrix<f64> {
        &self.beta_star
    }

    pub fn sigma_star(&self) -> &DMatrix<f64> {
        &self.sigma_star
    }

    pub fn sigma_x_star(&self) -> &DMatrix<f64> {
        &self.sigma_x_star
    }

    pub fn p(&self) -> usize {
        self.u_star.nrows()
    }

    pub fn k(&self) -> usize {
        self.u_star.ncols()
    }

    pub fn r(&self) -> usize {
        self.sigma_star.nrows()
    }
}

/// Spike values: `k` equally spaced numbers from `1.1 d*` down to `0.9 d*`
/// (a single component takes the leading value).
pub fn spike_values(k: usize, d_star: f64) -> DVector<f64> {
    if k == 0 {
        return DVector::zeros(0);
    }
    if k == 1 {
        return DVector::from_element(1, 1.1 * d_star);
    }
    let step = 0.2 * d_star / (k - 1) as f64;
    DVector::from_iterator(k, (0..k).map(|j| 1.1 * d_star - step * j as f64))
}

/// Draws ground truth: Haar-uniform `U*`, equally spaced spikes, and
/// coefficient columns drawn uniform on (-1, 1) then rescaled to
/// `coef_norm`.
#[allow(clippy::too_many_arguments)]
pub fn gen_true_params(
    p: usize,
    k: usize,
    r: usize,
    d_star: f64,
    tau_star: f64,
    coef_norm: f64,
    sigma_star: &DMatrix<f64>,
    seed: u64,
) -> Result<TrueParams> {
    if p == 0 || r == 0 {
        return Err(Error::InvalidParameter("p and r must be positive".into()));
    }
    if k > p {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds p = {p}")));
    }
    if !(tau_star > 0.0) {
        return Err(Error::InvalidParameter("tau_star must be positive".into()));
    }
    if d_star < 0.0 || coef_norm < 0.0 {
        return Err(Error::InvalidParameter(
            "d_star and coef_norm must be nonnegative".into(),
        ));
    }
    if sigma_star.shape() != (r, r) {
        return Err(Error::InvalidParameter("sigma_star must be r x r".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u_star = haar_semi_orthogonal(&mut rng, p, k);
    let d_star_vec = spike_values(k, d_star);
    let mut gamma_star = DMatrix::from_fn(k, r, |_, _| rand::Rng::gen_range(&mut rng, -1.0..1.0));
    for j in 0..r {
        let norm = gamma_star.column(j).norm();
        if norm > 0.0 {
            gamma_star.column_mut(j).scale_mut(coef_norm / norm);
        }
    }
    if k == 0 {
        gamma_star = DMatrix::zeros(0, r);
    }
    let beta_star = &u_star * &gamma_star;
    let mut sigma_x_star = &u_star * DMatrix::from_diagonal(&d_star_vec) * u_star.transpose();
    for i in 0..p {
        sigma_x_star[(i, i)] += 1.0;
    }
    sigma_x_star *= tau_star;
    symmetrize(&mut sigma_x_star);
    Ok(TrueParams {
        u_star,
        d_star: d_star_vec,
        tau_star,
        gamma_star,
        beta_star,
        sigma_star: sigma_star.clone(),
        sigma_x_star,
    })
}

/// How observations are drawn from the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GenMode {
    /// `X_i ~ N(0, Sigma_X*)`, `Y_i ~ N(beta*' X_i, Sigma*)`.
    #[default]
    Gaussian,
    /// Common-factor form `Y = W Gamma_Y + tau_E E`, `X = W Gamma_X + tau_V V`.
    Latent,
}

impl GenMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            GenMode::Gaussian => "gaussian",
            GenMode::Latent => "latent",
        }
    }
}

impl std::str::FromStr for GenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(GenMode::Gaussian),
            "latent" => Ok(GenMode::Latent),
            other => Err(Error::InvalidParameter(format!(
                "unknown generator mode {other:?} (expected gaussian or latent)"
            ))),
        }
    }
}

/// Latent-variable parameters matched to a ground truth so that
/// `cov(X_i) = Sigma_X*` and the population regression coefficient equals
/// `beta*`.
#[derive(Debug, Clone)]
pub struct LatentParams {
    /// `k x p` predictor loadings `(tau* D*)^{1/2} U*'`.
    pub gamma_x: DMatrix<f64>,
    /// `k x r` response loadings `(I + D*) D*^{-1/2} sqrt(tau*) gamma*`.
    pub gamma_y: DMatrix<f64>,
    pub tau_e: f64,
    pub tau_v: f64,
}

impl LatentParams {
    pub fn from_truth(truth: &TrueParams) -> Result<Self> {
        let k = truth.k();
        if truth.d_star.iter().any(|&d| d <= 0.0) {
            return Err(Error::InvalidParameter(
                "latent generator needs strictly positive spike values".into(),
            ));
        }
        let tau = truth.tau_star;
        let gamma_x = {
            let scale = DVector::from_iterator(k, truth.d_star.iter().map(|d| (tau * d).sqrt()));
            DMatrix::from_diagonal(&scale) * truth.u_star.transpose()
        };
        let gamma_y = {
            let scale = DVector::from_iterator(
                k,
                truth.d_star.iter().map(|d| (1.0 + d) / d.sqrt() * tau.sqrt()),
            );
            DMatrix::from_diagonal(&scale) * &truth.gamma_star
        };
        let tau_e = (truth.sigma_star.trace() / truth.r() as f64).sqrt();
        Ok(Self { gamma_x, gamma_y, tau_e, tau_v: tau.sqrt() })
    }

    /// `cov(Y_i) = Gamma_Y' Gamma_Y + tau_E^2 I_r`.
    pub fn cov_y(&self) -> DMatrix<f64> {
        let r = self.gamma_y.ncols();
        let mut c = self.gamma_y.transpose() * &self.gamma_y;
        for i in 0..r {
            c[(i, i)] += self.tau_e * self.tau_e;
        }
        c
    }

    /// `cov(X_i) = Gamma_X' Gamma_X + tau_V^2 I_p`.
    pub fn cov_x(&self) -> DMatrix<f64> {
        let p = self.gamma_x.ncols();
        let mut c = self.gamma_x.transpose() * &self.gamma_x;
        for i in 0..p {
            c[(i, i)] += self.tau_v * self.tau_v;
        }
        c
    }

    /// `cov(Y_i, X_i) = Gamma_Y' Gamma_X`.
    pub fn cov_yx(&self) -> DMatrix<f64> {
        self.gamma_y.transpose() * &self.gamma_x
    }

    /// Population regression coefficient
    /// `(Gamma_X' Gamma_X + tau_V^2 I_p)^{-1} Gamma_X' Gamma_Y`.
    pub fn conditional_coef(&self) -> DMatrix<f64> {
        let cx = self.cov_x();
        nalgebra::Cholesky::new(cx)
            .expect("cov_x is PD")
            .solve(&(self.gamma_x.transpose() * &self.gamma_y))
    }

    /// `cov(Y_i | X_i) = tau_E^2 I_r
    ///   + Gamma_Y' [I_k - Gamma_X (Gamma_X'Gamma_X + tau_V^2 I)^{-1} Gamma_X'] Gamma_Y`.
    pub fn conditional_cov(&self) -> DMatrix<f64> {
        let k = self.gamma_x.nrows();
        let r = self.gamma_y.ncols();
        let cx = self.cov_x();
        let solved = nalgebra::Cholesky::new(cx)
            .expect("cov_x is PD")
            .solve(&self.gamma_x.transpose());
        let middle = DMatrix::identity(k, k) - &self.gamma_x * solved;
        let mut c = self.gamma_y.transpose() * middle * &self.gamma_y;
        for i in 0..r {
            c[(i, i)] += self.tau_e * self.tau_e;
        }
        symmetrize(&mut c);
        c
    }
}

/// Draws `n` observations from the ground truth under the requested mode.
pub fn gen_dataset(truth: &TrueParams, n: usize, seed: u64, mode: GenMode) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let (p, k, r) = (truth.p(), truth.k(), truth.r());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        GenMode::Gaussian => {
            // X = sqrt(tau*) (W D^{1/2} U*' + E) has covariance
            // tau* (I + U* D* U*'), exactly the spiked form.
            let w = standard_normal_matrix(&mut rng, n, k);
            let e = standard_normal_matrix(&mut rng, n, p);
            let half_d =
                DVector::from_iterator(k, truth.d_star.iter().map(|d| d.max(0.0).sqrt()));
            let x = (w * DMatrix::from_diagonal(&half_d) * truth.u_star.transpose() + e)
                * truth.tau_star.sqrt();
            let noise = standard_normal_matrix(&mut rng, n, r);
            let sigma_chol = nalgebra::Cholesky::new(truth.sigma_star.clone())
                .ok_or_else(|| Error::InvalidParameter("sigma_star is not PD".into()))?;
            let y = &x * &truth.beta_star + noise * sigma_chol.l().transpose();
            Dataset::new(y, x)
        }
        GenMode::Latent => {
            let latent = LatentParams::from_truth(truth)?;
            let w = standard_normal_matrix(&mut rng, n, k);
            let e = standard_normal_matrix(&mut rng, n, r);
            let v = standard_normal_matrix(&mut rng, n, p);
            let x = &w * &latent.gamma_x + v * latent.tau_v;
            let y = &w * &latent.gamma_y + e * latent.tau_e;
            Dataset::new(y, x)
        }
    }
}

/// `||beta_hat - beta*||_F / sqrt(r p)`.
pub fn estimation_rmse(beta_hat: &DMatrix<f64>, beta_star: &DMatrix<f64>) -> Result<f64> {
    if beta_hat.shape() != beta_star.shape() {
        return Err(Error::InvalidParameter(format!(
            "coefficient shapes differ: {:?} vs {:?}",
            beta_hat.shape(),
            beta_star.shape()
        )));
    }
    let (p, r) = beta_hat.shape();
    Ok((beta_hat - beta_star).norm() / ((r * p) as f64).sqrt())
}

/// `||X_new beta_hat - Y_new||_F / sqrt(r n)`.
pub fn prediction_rmse(beta_hat: &DMatrix<f64>, test: &Dataset) -> Result<f64> {
    if beta_hat.nrows() != test.p() || beta_hat.ncols() != test.r() {
        return Err(Error::InvalidParameter(format!(
            "coefficient is {:?}, test set expects {:?}",
            beta_hat.shape(),
            (test.p(), test.r())
        )));
    }
    let resid = test.x() * beta_hat - test.y();
    Ok(resid.norm() / ((test.r() * test.n()) as f64).sqrt())
}

/// `|tr(S_X - Sigma_X*)|`, the sample-trace diagnostic.
pub fn trace_gap(x: &DMatrix<f64>, sigma_x_star: &DMatrix<f64>) -> Result<f64> {
    if x.ncols() != sigma_x_star.nrows() || sigma_x_star.nrows() != sigma_x_star.ncols() {
        return Err(Error::InvalidParameter("shape mismatch in trace_gap".into()));
    }
    let s_x = x.transpose() * x / x.nrows() as f64;
    Ok((s_x.trace() - sigma_x_star.trace()).abs())
}

/// One swept axis of the experiment design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    CoefNorm,
    DStar,
    P,
    K,
    N,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::CoefNorm => "coef_norm",
            Axis::DStar => "d_star",
            Axis::P => "p",
            Axis::K => "k",
            Axis::N => "n",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coef_norm" => Ok(Axis::CoefNorm),
            "d_star" => Ok(Axis::DStar),
            "p" => Ok(Axis::P),
            "k" => Ok(Axis::K),
            "n" => Ok(Axis::N),
            other => Err(Error::InvalidParameter(format!(
                "unknown axis {other:?} (expected coef_norm, d_star, p, k, or n)"
            ))),
        }
    }
}

/// Fixed design settings for one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSettings {
    pub n: usize,
    pub p: usize,
    pub k_star: usize,
    pub r: usize,
    pub tau_star: f64,
    pub d_star: f64,
    pub coef_norm: f64,
    /// `Sigma* = sigma_scale * I_r`.
    pub sigma_scale: f64,
}

impl Default for SimSettings {
    /// The baseline design: n=120, p=40, k=4, r=2, Sigma*=2I, tau*=1,
    /// d*=3, coefficient column norm 2.
    fn default() -> Self {
        Self {
            n: 120,
            p: 40,
            k_star: 4,
            r: 2,
            tau_star: 1.0,
            d_star: 3.0,
            coef_norm: 2.0,
            sigma_scale: 2.0,
        }
    }
}

impl SimSettings {
    pub fn sigma_star(&self) -> DMatrix<f64> {
        DMatrix::identity(self.r, self.r) * self.sigma_scale
    }
}

/// A one-axis sweep with a replication count and a master seed.
#[derive(Debug, Clone)]
pub struct SimGrid {
    pub base: SimSettings,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub mode: GenMode,
}

impl SimGrid {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidParameter("axis values must be non-empty".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be positive".into()));
        }
        for &v in &self.values {
            match self.axis {
                Axis::P | Axis::K | Axis::N => {
                    if v <= 0.0 || v.fract() != 0.0 {
                        return Err(Error::InvalidParameter(format!(
                            "axis {} requires positive integer values, got {v}",
                            self.axis.as_str()
                        )));
                    }
                }
                Axis::CoefNorm | Axis::DStar => {
                    if v < 0.0 {
                        return Err(Error::InvalidParameter(format!(
                            "axis {} requires nonnegative values, got {v}",
                            self.axis.as_str()
                        )));
                    }
                }
            }
            let s = self.settings_at(v);
            if s.k_star > s.p || s.n < 2 {
                return Err(Error::InvalidParameter(format!(
                    "axis value {v} yields an invalid design (n={}, p={}, k={})",
                    s.n, s.p, s.k_star
                )));
            }
        }
        Ok(())
    }

    pub fn settings_at(&self, value: f64) -> SimSettings {
        let mut s = self.base.clone();
        match self.axis {
            Axis::CoefNorm => s.coef_norm = value,
            Axis::DStar => s.d_star = value,
            Axis::P => s.p = value as usize,
            Axis::K => s.k_star = value as usize,
            Axis::N => s.n = value as usize,
        }
        s
    }
}

/// A method paired with its model-order selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSpec {
    Lpcr(Criterion),
    ClassicalPcrLoocv,
    PlsLoocv,
    Ols,
}

impl MethodSpec {
    pub fn method_label(&self) -> &'static str {
        match self {
            MethodSpec::Lpcr(_) => "lpcr",
            MethodSpec::ClassicalPcrLoocv => "pcr",
            MethodSpec::PlsLoocv => "pls",
            MethodSpec::Ols => "ols",
        }
    }

    pub fn selector_label(&self) -> &'static str {
        match self {
            MethodSpec::Lpcr(Criterion::Aic) => "aic",
            MethodSpec::Lpcr(Criterion::Bic) => "bic",
            MethodSpec::Lpcr(Criterion::Loocv) => "loocv",
            MethodSpec::ClassicalPcrLoocv | MethodSpec::PlsLoocv => "loocv",
            MethodSpec::Ols => "none",
        }
    }
}

impl std::str::FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lpcr" | "lpcr:bic" => Ok(MethodSpec::Lpcr(Criterion::Bic)),
            "lpcr:aic" => Ok(MethodSpec::Lpcr(Criterion::Aic)),
            "pcr" | "pcr:loocv" => Ok(MethodSpec::ClassicalPcrLoocv),
            "pls" | "pls:loocv" => Ok(MethodSpec::PlsLoocv),
            "ols" => Ok(MethodSpec::Ols),
            other => Err(Error::InvalidParameter(format!(
                "unknown method spec {other:?} (expected lpcr[:aic|:bic], pcr[:loocv], pls[:loocv], ols)"
            ))),
        }
    }
}

/// Harness options independent of the statistical design.
#[derive(Debug, Clone, Default)]
pub struct ExperimentConfig {
    /// Largest candidate order for selection; default
    /// `min(p - 1, 2 k* + 2)`.
    pub k_max: Option<usize>,
    pub optim: OptimConfig,
}

pub const METRICS: [&str; 3] = ["est_rmse_rel", "pred_rmse_rel", "selection_bias"];

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRow {
    pub axis_value: f64,
    pub replication: usize,
    pub method: &'static str,
    pub selector: &'static str,
    pub metric: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryCell {
    pub axis_value: f64,
    pub method: &'static str,
    pub selector: &'static str,
    pub metric: &'static str,
    pub mean: f64,
    pub mc_se: f64,
    pub count: usize,
}

/// Per-replication table plus aggregated means and Monte Carlo standard
/// errors.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub axis: &'static str,
    pub axis_values: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub mode: &'static str,
    pub rows: Vec<ExperimentRow>,
    pub summary: Vec<SummaryCell>,
}

impl ExperimentResult {
    /// Long-format CSV: `axis_value,replication,method,selector,metric,value`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("axis_value,replication,method,selector,metric,value\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt17(row.axis_value),
                row.replication,
                row.method,
                row.selector,
                row.metric,
                fmt17(row.value)
            ));
        }
        out
    }

    /// Summary JSON with 17-significant-digit numbers.
    pub fn to_json_string(&self) -> String {
        #[derive(Serialize)]
        struct SummaryDoc<'a> {
            axis: &'a str,
            axis_values: &'a [f64],
            replications: usize,
            seed: u64,
            mode: &'a str,
            cells: &'a [SummaryCell],
        }
        let doc = SummaryDoc {
            axis: self.axis,
            axis_values: &self.axis_values,
            replications: self.replications,
            seed: self.seed,
            mode: self.mode,
            cells: &self.summary,
        };
        to_json_17(&doc)
    }
}

/// Formats a float with 17 significant digits (round-trip exact), with
/// `inf`/`nan` spelled out.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Serializes to JSON writing every float with 17 significant digits.
pub fn to_json_17<T: Serialize>(value: &T) -> String {
    struct SigFig;
    impl serde_json::ser::Formatter for SigFig {
        fn write_f64<W: std::io::Write + ?Sized>(
            &mut self,
            writer: &mut W,
            value: f64,
        ) -> std::io::Result<()> {
            write!(writer, "{value:.16e}")
        }

        fn write_f32<W: std::io::Write + ?Sized>(
            &mut self,
            writer: &mut W,
            value: f32,
        ) -> std::io::Result<()> {
            write!(writer, "{value:.8e}")
        }
    }
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFig);
    value.serialize(&mut ser).expect("in-memory serialization");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

struct RepOutcome {
    point_idx: usize,
    replication: usize,
    per_method: Vec<Option<(f64, f64, f64)>>,
}

/// Runs the full sweep: per replication, fresh ground truth plus train and
/// test draws, every method with its selection rule, and metrics divided by
/// the same replication's OLS values. Fully seeded; replications may run in
/// parallel without changing the output.
pub fn run_experiment(
    grid: &SimGrid,
    methods: &[MethodSpec],
    config: &ExperimentConfig,
) -> Result<ExperimentResult> {
    grid.validate()?;
    config.optim.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidParameter("no methods requested".into()));
    }

    let jobs: Vec<(usize, usize)> = (0..grid.values.len())
        .flat_map(|pi| (0..grid.replications).map(move |rep| (pi, rep)))
        .collect();

    let outcomes: Vec<RepOutcome> = map_jobs(&jobs, |&(point_idx, replication)| {
        run_replication(grid, methods, config, point_idx, replication)
    });

    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (pi, &axis_value) in grid.values.iter().enumerate() {
        let mut collected: Vec<Vec<[f64; 3]>> = vec![Vec::new(); methods.len()];
        for outcome in outcomes.iter().filter(|o| o.point_idx == pi) {
            for (mi, spec) in methods.iter().enumerate() {
                if let Some((est, pred, bias)) = outcome.per_method[mi] {
                    for (metric, value) in METRICS.iter().zip([est, pred, bias]) {
                        rows.push(ExperimentRow {
                            axis_value,
                            replication: outcome.replication,
                            method: spec.method_label(),
                            selector: spec.selector_label(),
                            metric,
                            value,
                        });
                    }
                    collected[mi].push([est, pred, bias]);
                }
            }
        }
        for (mi, spec) in methods.iter().enumerate() {
            for (metric_idx, metric) in METRICS.iter().enumerate() {
                let values: Vec<f64> = collected[mi].iter().map(|v| v[metric_idx]).collect();
                let count = values.len();
                let (mean, mc_se) = if count == 0 {
                    (f64::NAN, f64::NAN)
                } else {
                    let mean = values.iter().sum::<f64>() / count as f64;
                    let se = if count > 1 {
                        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                            / (count - 1) as f64;
                        (var / count as f64).sqrt()
                    } else {
                        0.0
                    };
                    (mean, se)
                };
                summary.push(SummaryCell {
                    axis_value,
                    method: spec.method_label(),
                    selector: spec.selector_label(),
                    metric,
                    mean,
                    mc_se,
                    count,
                });
            }
        }
    }

    Ok(ExperimentResult {
        axis: grid.axis.as_str(),
        axis_values: grid.values.clone(),
        replications: grid.replications,
        seed: grid.seed,
        mode: grid.mode.as_str(),
        rows,
        summary,
    })
}

#[cfg(feature = "parallel")]
fn map_jobs<J: Sync, T: Send>(jobs: &[J], f: impl Fn(&J) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    jobs.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_jobs<J, T>(jobs: &[J], f: impl Fn(&J) -> T) -> Vec<T> {
    jobs.iter().map(f).collect()
}

fn run_replication(
    grid: &SimGrid,
    methods: &[MethodSpec],
    config: &ExperimentConfig,
    point_idx: usize,
    replication: usize,
) -> RepOutcome {
    let settings = grid.settings_at(grid.values[point_idx]);
    let missing = RepOutcome {
        point_idx,
        replication,
        per_method: vec![None; methods.len()],
    };
    let label = (point_idx as u64) << 32 | replication as u64;
    let truth = match gen_true_params(
        settings.p,
        settings.k_star,
        settings.r,
        settings.d_star,
        settings.tau_star,
        settings.coef_norm,
        &settings.sigma_star(),
        derive_seed(grid.seed, label, 1),
    ) {
        Ok(t) => t,
        Err(_) => return missing,
    };
    let train = match gen_dataset(&truth, settings.n, derive_seed(grid.seed, label, 2), grid.mode)
    {
        Ok(d) => d,
        Err(_) => return missing,
    };
    let test = match gen_dataset(&truth, settings.n, derive_seed(grid.seed, label, 3), grid.mode) {
        Ok(d) => d,
        Err(_) => return missing,
    };

    let ols_fit = match fit_ols(&train) {
        Ok(f) => f,
        Err(_) => return missing,
    };
    let ols_est = match estimation_rmse(&ols_fit.params.beta, truth.beta_star()) {
        Ok(v) if v > 0.0 => v,
        _ => return missing,
    };
    let ols_pred = match prediction_rmse(&ols_fit.params.beta, &test) {
        Ok(v) if v > 0.0 => v,
        _ => return missing,
    };

    let k_max = config
        .k_max
        .unwrap_or_else(|| (2 * settings.k_star + 2).min(settings.p.saturating_sub(1)));
    let mut optim = config.optim.clone();
    optim.seed = derive_seed(grid.seed, label, 4);

    // One likelihood scan shared by the information-criterion selectors.
    let wants_lpcr = methods.iter().any(|m| matches!(m, MethodSpec::Lpcr(_)));
    let scan = if wants_lpcr {
        lpcr_scan(&train, k_max, &optim).ok()
    } else {
        None
    };

    let relative_metrics = |beta: &DMatrix<f64>, k_hat: usize| -> Option<(f64, f64, f64)> {
        let est = estimation_rmse(beta, truth.beta_star()).ok()?;
        let pred = prediction_rmse(beta, &test).ok()?;
        Some((
            est / ols_est,
            pred / ols_pred,
            k_hat as f64 - settings.k_star as f64,
        ))
    };

    let mut per_method = Vec::with_capacity(methods.len());
    for spec in methods {
        let metrics: Option<(f64, f64, f64)> = match spec {
            MethodSpec::Ols => relative_metrics(&ols_fit.params.beta, settings.p),
            MethodSpec::Lpcr(criterion) => scan.as_ref().and_then(|fits| {
                let mut best: Option<(f64, usize)> = None;
                for (k, fit) in fits.iter().enumerate() {
                    if let Ok(f) = fit {
                        let score = match criterion {
                            Criterion::Aic => f.ic_aic,
                            Criterion::Bic => f.ic_bic,
                            Criterion::Loocv => f64::INFINITY,
                        };
                        if score.is_finite() && best.is_none_or(|(s, _)| score < s) {
                            best = Some((score, k));
                        }
                    }
                }
                let (_, k_hat) = best?;
                let fit = fits[k_hat].as_ref().ok()?;
                relative_metrics(&fit.params.beta, k_hat)
            }),
            MethodSpec::ClassicalPcrLoocv => select_k_loocv(&train, MethodTag::ClassicalPcr, k_max)
                .ok()
                .and_then(|report| {
                    let fit = fit_classical_pcr(&train, report.chosen_k).ok()?;
                    relative_metrics(&fit.params.beta, report.chosen_k)
                }),
            MethodSpec::PlsLoocv => {
                select_k_loocv(&train, MethodTag::Pls, k_max).ok().and_then(|report| {
                    if report.chosen_k == 0 {
                        let zero = DMatrix::zeros(settings.p, settings.r);
                        relative_metrics(&zero, 0)
                    } else {
                        let fit = fit_pls_krylov(&train, report.chosen_k).ok()?;
                        relative_metrics(&fit.params.beta, report.chosen_k)
                    }
                })
            }
        };
        per_method.push(metrics);
    }
    RepOutcome { point_idx, replication, per_method }
}
