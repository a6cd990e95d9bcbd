//! Deep matrix fitting: `S ~ X_1 ... X_k Y_k + Z_k` for each layer `k`, with
//! sparse residuals `Z_k`.
//!
//! Layers are trained one after another. Layer `k` keeps `X_1 .. X_{k-1}`
//! frozen from the earlier layers and optimizes `(X_k, Y_k, Z_k)`. Gradient
//! methods minimize the fit term plus a Huber-smoothed `lambda * ||Z_k||_1`;
//! traces report the fit term alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::optim::{run_optimizer, AdmmSplit, OptimizerConfig, OptimizerTrace, Params, Problem};
use crate::rng::RandomSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeepMfConfig {
    /// Per-layer ranks; an empty list means [`default_ranks`] for the input.
    pub ranks: Vec<usize>,
    pub lambda: f64,
    pub huber_delta: f64,
    pub init_scale: f64,
    /// Column blocks of the finite-sum view used by SVRG.
    pub blocks: usize,
}

impl Default for DeepMfConfig {
    fn default() -> Self {
        Self {
            ranks: Vec::new(),
            lambda: 0.1,
            huber_delta: 1e-4,
            init_scale: 0.1,
            blocks: 8,
        }
    }
}

/// `(min(m, n) / 4, min(m, n) / 8)`, floored, at least 1.
pub fn default_ranks(m: usize, n: usize) -> Vec<usize> {
    let base = m.min(n);
    vec![(base / 4).max(1), (base / 8).max(1)]
}

impl DeepMfConfig {
    pub fn layers(&self) -> usize {
        self.ranks.len()
    }

    /// Ranks to use for an `m x n` input.
    pub fn resolved_ranks(&self, m: usize, n: usize) -> Vec<usize> {
        if self.ranks.is_empty() {
            default_ranks(m, n)
        } else {
            self.ranks.clone()
        }
    }

    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        let ranks = self.resolved_ranks(m, n);
        validate_ranks(&ranks, m, n)?;
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.huber_delta > 0.0) {
            return Err(Error::Config(format!("huber_delta must be > 0, got {}", self.huber_delta)));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Config(format!("init_scale must be > 0, got {}", self.init_scale)));
        }
        if self.blocks == 0 {
            return Err(Error::Config("blocks must be at least 1".into()));
        }
        Ok(())
    }
}

fn validate_ranks(ranks: &[usize], m: usize, n: usize) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::Config("at least one layer is required".into()));
    }
    let cap = m.min(n);
    for (k, &r) in ranks.iter().enumerate() {
        if r == 0 || r > cap {
            return Err(Error::Config(format!(
                "rank {r} of layer {} must lie in 1..={cap} for a {m}x{n} input",
                k + 1
            )));
        }
    }
    if ranks.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Config(format!("ranks must be non-increasing, got {ranks:?}")));
    }
    Ok(())
}

/// Factors of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Mixing factor; `m x r_1` for the first layer, `r_{k-1} x r_k` after.
    pub x: DenseMatrix,
    /// Features, `r_k x n`.
    pub y: DenseMatrix,
    /// Sparse residual, `m x n`.
    pub z: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepMfModel {
    pub s: DenseMatrix,
    pub layers: Vec<Layer>,
}

/// Gradients of one layer's smoothed objective.
#[derive(Debug, Clone)]
pub struct LayerGradients {
    /// One entry per `X_i`, `i <= k`.
    pub x: Vec<DenseMatrix>,
    pub y: DenseMatrix,
    pub z: DenseMatrix,
}

fn chain(mats: &[DenseMatrix]) -> Result<Option<DenseMatrix>> {
    let mut it = mats.iter();
    let Some(first) = it.next() else {
        return Ok(None);
    };
    let mut acc = first.clone();
    for m in it {
        acc = acc.matmul(m)?;
    }
    Ok(Some(acc))
}

pub fn huber(z: f64, delta: f64) -> f64 {
    let a = z.abs();
    if a <= delta {
        z * z / (2.0 * delta)
    } else {
        a - 0.5 * delta
    }
}

pub fn huber_derivative(z: f64, delta: f64) -> f64 {
    (z / delta).clamp(-1.0, 1.0)
}

impl DeepMfModel {
    pub fn new(s: DenseMatrix, layers: Vec<Layer>) -> Result<Self> {
        let model = Self { s, layers };
        for k in 0..model.layers.len() {
            model.check_layer(k)?;
        }
        Ok(model)
    }

    fn check_layer(&self, k: usize) -> Result<()> {
        if k >= self.layers.len() {
            return Err(Error::Index {
                index: k,
                len: self.layers.len(),
            });
        }
        let (m, n) = self.s.shape();
        let mut rows = m;
        for (i, layer) in self.layers[..=k].iter().enumerate() {
            if layer.x.rows() != rows {
                return Err(Error::Shape {
                    op: "deep_mf_chain",
                    left: (rows, i),
                    right: layer.x.shape(),
                });
            }
            rows = layer.x.cols();
        }
        let layer = &self.layers[k];
        if layer.y.shape() != (rows, n) {
            return Err(Error::Shape {
                op: "deep_mf_features",
                left: (rows, n),
                right: layer.y.shape(),
            });
        }
        if layer.z.shape() != (m, n) {
            return Err(Error::Shape {
                op: "deep_mf_residual",
                left: (m, n),
                right: layer.z.shape(),
            });
        }
        Ok(())
    }

    /// `X_1 ... X_k` for the zero-based layer index `k`.
    pub fn mixing_product(&self, k: usize) -> Result<DenseMatrix> {
        self.check_layer(k)?;
        let xs: Vec<DenseMatrix> = self.layers[..=k].iter().map(|l| l.x.clone()).collect();
        Ok(chain(&xs)?.expect("at least one factor"))
    }

    /// `X_1 ... X_k Y_k + Z_k - S`
    pub fn residual(&self, k: usize) -> Result<DenseMatrix> {
        let p = self.mixing_product(k)?;
        let layer = &self.layers[k];
        let mut r = p.matmul(&layer.y)?;
        r.axpy(1.0, &layer.z)?;
        r.axpy(-1.0, &self.s)?;
        Ok(r)
    }

    /// Squared Frobenius norm of the layer-`k` constraint residual.
    pub fn training_loss(&self, k: usize) -> Result<f64> {
        Ok(self.residual(k)?.squared_norm())
    }

    /// Sum over layers of `||Z_k||_1`.
    pub fn l1_objective(&self) -> f64 {
        self.layers.iter().map(|l| l.z.l1_norm()).sum()
    }

    /// `||R||^2 + lambda * sum huber(Z_k)` for layer `k`.
    pub fn smoothed_objective(&self, k: usize, lambda: f64, huber_delta: f64) -> Result<f64> {
        let fit = self.training_loss(k)?;
        let reg: f64 = self.layers[k].z.data().iter().map(|z| huber(*z, huber_delta)).sum();
        Ok(fit + lambda * reg)
    }

    /// Analytic gradients of [`Self::smoothed_objective`] for layer `k`.
    pub fn layer_gradients(&self, k: usize, lambda: f64, huber_delta: f64) -> Result<LayerGradients> {
        let r = self.residual(k)?;
        let layer = &self.layers[k];
        let xs: Vec<DenseMatrix> = self.layers[..=k].iter().map(|l| l.x.clone()).collect();
        let p = chain(&xs)?.expect("at least one factor");

        let y = p.t_matmul(&r)?.scale(2.0);
        let z = r.zip_map(&layer.z, "layer_gradients", |ri, zi| {
            2.0 * ri + lambda * huber_derivative(zi, huber_delta)
        })?;

        let ryt = r.matmul_t(&layer.y)?;
        let mut x = Vec::with_capacity(xs.len());
        for i in 0..xs.len() {
            let left = chain(&xs[..i])?;
            let right = chain(&xs[i + 1..])?;
            let mut g = match &left {
                Some(l) => l.t_matmul(&ryt)?,
                None => ryt.clone(),
            };
            if let Some(rt) = &right {
                g = g.matmul_t(rt)?;
            }
            x.push(g.scale(2.0));
        }
        Ok(LayerGradients { x, y, z })
    }
}

/// Near-equal contiguous column blocks `[start, end)`.
pub fn column_blocks(n: usize, blocks: usize) -> Vec<(usize, usize)> {
    let b = blocks.clamp(1, n);
    let base = n / b;
    let extra = n % b;
    let mut out = Vec::with_capacity(b);
    let mut start = 0;
    for i in 0..b {
        let w = base + usize::from(i < extra);
        out.push((start, start + w));
        start += w;
    }
    out
}

/// One layer as an optimization problem over `[X_k, Y_k, Z_k]`.
///
/// The finite-sum view splits the columns of `S` into blocks; component `i`
/// is the block-`i` objective scaled by the block count, so the component
/// mean equals the full objective.
#[derive(Debug, Clone)]
pub struct LayerProblem {
    s: DenseMatrix,
    prefix: Option<DenseMatrix>,
    lambda: f64,
    huber_delta: f64,
    blocks: Vec<(usize, usize)>,
}

impl LayerProblem {
    pub fn new(
        s: DenseMatrix,
        prefix: Option<DenseMatrix>,
        lambda: f64,
        huber_delta: f64,
        blocks: usize,
    ) -> Result<Self> {
        if let Some(a) = &prefix {
            if a.rows() != s.rows() {
                return Err(Error::Shape {
                    op: "layer_problem",
                    left: s.shape(),
                    right: a.shape(),
                });
            }
        }
        if !(huber_delta > 0.0) || !(lambda >= 0.0) || blocks == 0 {
            return Err(Error::Config("invalid layer problem parameters".into()));
        }
        let blocks = column_blocks(s.cols(), blocks);
        Ok(Self {
            s,
            prefix,
            lambda,
            huber_delta,
            blocks,
        })
    }

    pub fn target(&self) -> &DenseMatrix {
        &self.s
    }

    pub fn prefix(&self) -> Option<&DenseMatrix> {
        self.prefix.as_ref()
    }

    fn unpack<'a>(&self, params: &'a [DenseMatrix]) -> Result<(&'a DenseMatrix, &'a DenseMatrix, &'a DenseMatrix)> {
        let [x, y, z] = params else {
            return Err(Error::Parameter(format!(
                "layer problem expects [X, Y, Z], got {} blocks",
                params.len()
            )));
        };
        let lead = self.prefix.as_ref().map(|a| a.cols()).unwrap_or(self.s.rows());
        if x.rows() != lead || x.cols() != y.rows() || y.cols() != self.s.cols() || z.shape() != self.s.shape() {
            return Err(Error::Shape {
                op: "layer_problem",
                left: x.shape(),
                right: y.shape(),
            });
        }
        Ok((x, y, z))
    }

    fn mixing(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        match &self.prefix {
            Some(a) => a.matmul(x),
            None => Ok(x.clone()),
        }
    }

    fn residual(&self, p: &DenseMatrix, y: &DenseMatrix, z: &DenseMatrix) -> Result<DenseMatrix> {
        let mut r = p.matmul(y)?;
        r.axpy(1.0, z)?;
        r.axpy(-1.0, &self.s)?;
        Ok(r)
    }

    fn penalty(&self, z: &DenseMatrix) -> f64 {
        self.lambda * z.data().iter().map(|v| huber(*v, self.huber_delta)).sum::<f64>()
    }

    fn x_gradient(&self, r: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
        let ryt = r.matmul_t(y)?;
        match &self.prefix {
            Some(a) => a.t_matmul(&ryt),
            None => Ok(ryt),
        }
    }

    fn z_gradient(&self, r: &DenseMatrix, z: &DenseMatrix) -> Result<DenseMatrix> {
        let (lambda, delta) = (self.lambda, self.huber_delta);
        r.zip_map(z, "z_gradient", |ri, zi| 2.0 * ri + lambda * huber_derivative(zi, delta))
    }
}

impl Problem for LayerProblem {
    fn objective(&self, params: &[DenseMatrix]) -> Result<f64> {
        let (x, y, z) = self.unpack(params)?;
        let r = self.residual(&self.mixing(x)?, y, z)?;
        Ok(r.squared_norm() + self.penalty(z))
    }

    fn report_loss(&self, params: &[DenseMatrix]) -> Result<f64> {
        let (x, y, z) = self.unpack(params)?;
        Ok(self.residual(&self.mixing(x)?, y, z)?.squared_norm())
    }

    fn gradient(&self, params: &[DenseMatrix]) -> Result<Params> {
        let (x, y, z) = self.unpack(params)?;
        let p = self.mixing(x)?;
        let r = self.residual(&p, y, z)?;
        let gx = self.x_gradient(&r, y)?.scale(2.0);
        let gy = p.t_matmul(&r)?.scale(2.0);
        let gz = self.z_gradient(&r, z)?;
        Ok(vec![gx, gy, gz])
    }

    fn components(&self) -> Option<usize> {
        Some(self.blocks.len())
    }

    fn component_gradient(&self, index: usize, params: &[DenseMatrix]) -> Result<Params> {
        let (x, y, z) = self.unpack(params)?;
        let &(start, end) = self.blocks.get(index).ok_or(Error::Index {
            index,
            len: self.blocks.len(),
        })?;
        let weight = self.blocks.len() as f64;
        let p = self.mixing(x)?;
        let yb = y.column_block(start, end);
        let zb = z.column_block(start, end);
        let mut rb = p.matmul(&yb)?;
        rb.axpy(1.0, &zb)?;
        rb.axpy(-1.0, &self.s.column_block(start, end))?;

        let gx = self.x_gradient(&rb, &yb)?.scale(2.0 * weight);
        let mut gy = DenseMatrix::zeros(y.rows(), y.cols());
        gy.set_column_block(start, &p.t_matmul(&rb)?.scale(2.0 * weight));
        let mut gz = DenseMatrix::zeros(z.rows(), z.cols());
        gz.set_column_block(start, &self.z_gradient(&rb, &zb)?.scale(weight));
        Ok(vec![gx, gy, gz])
    }

    fn admm_split(&self) -> Option<AdmmSplit<'_>> {
        Some(AdmmSplit {
            target: &self.s,
            prefix: self.prefix.as_ref(),
        })
    }
}

/// Layer-wise training of every layer in `config`.
///
/// Returns the trained model and one trace per layer. Layer `k` starts from
/// fresh factors drawn uniformly in `[-init_scale, init_scale]` with `Z = 0`.
pub fn decompose(
    s: &DenseMatrix,
    config: &DeepMfConfig,
    optimizer: &OptimizerConfig,
    seed: u64,
) -> Result<(DeepMfModel, Vec<OptimizerTrace>)> {
    let (m, n) = s.shape();
    config.validate(m, n)?;
    optimizer.validate()?;
    if !s.is_finite() {
        return Err(Error::Input("input matrix has non-finite entries".into()));
    }
    let ranks = config.resolved_ranks(m, n);

    let mut layers: Vec<Layer> = Vec::with_capacity(ranks.len());
    let mut traces = Vec::with_capacity(ranks.len());
    let mut prefix: Option<DenseMatrix> = None;
    let mut lead = m;
    for (k, &rank) in ranks.iter().enumerate() {
        let mut init_rng = RandomSource::derive(seed, 2 * k as u64);
        let run_seed = RandomSource::derive(seed, 2 * k as u64 + 1).next_u64();
        let a = config.init_scale;
        let x0 = DenseMatrix::random_uniform(lead, rank, -a, a, &mut init_rng);
        let y0 = DenseMatrix::random_uniform(rank, n, -a, a, &mut init_rng);
        let z0 = DenseMatrix::zeros(m, n);

        let problem = LayerProblem::new(s.clone(), prefix.clone(), config.lambda, config.huber_delta, config.blocks)?;
        let trace = run_optimizer(&problem, vec![x0, y0, z0], optimizer, run_seed)?;
        let [x, y, z] = <[DenseMatrix; 3]>::try_from(trace.params.clone())
            .map_err(|_| Error::Numerical("optimizer returned an unexpected parameter layout".into()))?;

        prefix = Some(match prefix {
            Some(p) => p.matmul(&x)?,
            None => x.clone(),
        });
        lead = rank;
        layers.push(Layer { x, y, z });
        traces.push(trace);
    }
    Ok((DeepMfModel::new(s.clone(), layers)?, traces))
}

/// Parameters of a synthetic Deep MF instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    /// Empty means [`default_ranks`].
    pub ranks: Vec<usize>,
    /// Fraction of entries carrying a sparse outlier.
    pub sparsity: f64,
    pub noise_sigma: f64,
    /// Ground-truth factor entries are uniform in `[-factor_scale, factor_scale]`.
    pub factor_scale: f64,
    /// Outlier entries are uniform in `[-spike_scale, spike_scale]`.
    pub spike_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 100,
            ranks: Vec::new(),
            sparsity: 0.05,
            noise_sigma: 0.01,
            factor_scale: 0.5,
            spike_scale: 2.0,
            seed: 0,
        }
    }
}

/// Builds `S = X_1 X_2 ... X_K Y_K + Z + noise` and its noiseless ground truth.
///
/// Features nest (`Y_k = X_{k+1} Y_{k+1}`), so the returned model satisfies
/// every layer constraint exactly when `noise_sigma == 0`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(DenseMatrix, DeepMfModel)> {
    let (m, n) = (spec.rows, spec.cols);
    if m == 0 || n == 0 {
        return Err(Error::Config(format!("invalid synthetic dimensions {m}x{n}")));
    }
    let ranks = if spec.ranks.is_empty() {
        default_ranks(m, n)
    } else {
        spec.ranks.clone()
    };
    validate_ranks(&ranks, m, n)?;
    if !(0.0..=1.0).contains(&spec.sparsity) {
        return Err(Error::Config(format!("sparsity must lie in [0, 1], got {}", spec.sparsity)));
    }
    if !(spec.noise_sigma >= 0.0) || !(spec.factor_scale > 0.0) || !(spec.spike_scale >= 0.0) {
        return Err(Error::Config("noise_sigma, factor_scale and spike_scale must be non-negative".into()));
    }

    let mut rng = RandomSource::new(spec.seed);
    let a = spec.factor_scale;
    let mut xs = Vec::with_capacity(ranks.len());
    let mut lead = m;
    for &r in &ranks {
        xs.push(DenseMatrix::random_uniform(lead, r, -a, a, &mut rng));
        lead = r;
    }
    let y_last = DenseMatrix::random_uniform(lead, n, -a, a, &mut rng);

    // Y_k = X_{k+1} ... X_K Y_K
    let mut ys = vec![y_last];
    for x in xs.iter().skip(1).rev() {
        let next = x.matmul(ys.last().unwrap())?;
        ys.push(next);
    }
    ys.reverse();

    let mut z = DenseMatrix::zeros(m, n);
    for v in z.data_mut() {
        if rng.uniform() < spec.sparsity {
            *v = rng.uniform_range(-spec.spike_scale, spec.spike_scale);
        }
    }
    let clean = xs[0].matmul(&ys[0])?.add(&z)?;
    let mut s = clean.clone();
    if spec.noise_sigma > 0.0 {
        s.axpy(1.0, &DenseMatrix::random_normal(m, n, spec.noise_sigma, &mut rng))?;
    }
    let layers = xs
        .into_iter()
        .zip(ys)
        .map(|(x, y)| Layer { x, y, z: z.clone() })
        .collect();
    let truth = DeepMfModel::new(clean, layers)?;
    Ok((s, truth))
}
