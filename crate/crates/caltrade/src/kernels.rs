//! Kernel evaluation, embedding constants and norms of induced functions.
//!
//! The Sobolev kernel reproduces `H¹([0,1])`; Gaussian and the half-period
//! cosine are classical kernels on `[0,1]`; the discretized rounding kernel
//! is the dot product of rounding weight vectors. `ExpSmooth` is a smooth
//! experiment-mode substitute for the combined kernel — it is not symmetric,
//! so it is excluded from Gram/PSD machinery and from induced norms.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rounding::RoundingGrid;

/// A kernel over `[0,1]^dim`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// Reproducing kernel of the Sobolev space `H¹([0,1])`:
    /// `cosh(min(t,t'))·cosh(min(1-t,1-t'))/sinh(1)`. One-dimensional.
    Sobolev,
    /// `exp(-‖x-y‖²/σ²)`, any dimension.
    Gaussian { sigma: f64 },
    /// `cos(π(t-t')/2)`, one-dimensional.
    CosineHalfPi,
    /// `exp(c(x₀-y₀) + c'(x₁-y₁))`, one- or two-dimensional; asymmetric.
    ExpSmooth { c: f64, c2: f64 },
    /// Dot product of rounding weight vectors on `grid`, any dimension.
    DiscretizedRounding(RoundingGrid),
    /// Identically zero.
    Zero,
    /// Pointwise sum of member kernels over a shared input dimension.
    Sum(Vec<KernelSpec>),
}

impl KernelSpec {
    /// Evaluates the kernel at a pair of points.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::domain(format!(
                "kernel dimension mismatch: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        match self {
            KernelSpec::Sobolev => {
                let (&t, &u) = one_dimensional(x, y, "Sobolev")?;
                Ok(t.min(u).cosh() * (1.0 - t.max(u)).cosh() / 1f64.sinh())
            }
            KernelSpec::Gaussian { sigma } => {
                if *sigma <= 0.0 {
                    return Err(Error::domain("Gaussian kernel needs sigma > 0"));
                }
                let dist2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                Ok((-dist2 / (sigma * sigma)).exp())
            }
            KernelSpec::CosineHalfPi => {
                let (&t, &u) = one_dimensional(x, y, "CosineHalfPi")?;
                Ok((std::f64::consts::FRAC_PI_2 * (t - u)).cos())
            }
            KernelSpec::ExpSmooth { c, c2 } => {
                if *c <= 0.0 || *c2 <= 0.0 {
                    return Err(Error::domain("ExpSmooth kernel needs c, c' > 0"));
                }
                if x.is_empty() || x.len() > 2 {
                    return Err(Error::domain(format!(
                        "ExpSmooth kernel takes 1 or 2 coordinates, got {}",
                        x.len()
                    )));
                }
                let mut exponent = c * (x[0] - y[0]);
                if x.len() == 2 {
                    exponent += c2 * (x[1] - y[1]);
                }
                Ok(exponent.exp())
            }
            KernelSpec::DiscretizedRounding(grid) => grid.rounding_kernel(x, y),
            KernelSpec::Zero => Ok(0.0),
            KernelSpec::Sum(members) => {
                let mut total = 0.0;
                for member in members {
                    total += member.eval(x, y)?;
                }
                Ok(total)
            }
        }
    }

    /// Scalar convenience for one-dimensional kernels.
    pub fn eval1(&self, x: f64, y: f64) -> Result<f64> {
        self.eval(&[x], &[y])
    }

    /// The embedding constant `c = sup_x sqrt(K(x,x))`.
    ///
    /// A sum kernel embeds with the root of the summed squares of its
    /// members' constants, matching the `c² + 1` factors that show up when a
    /// rounding kernel is added to an RKHS kernel.
    pub fn embedding_constant(&self) -> f64 {
        match self {
            KernelSpec::Sobolev => (1f64.cosh() / 1f64.sinh()).sqrt(),
            KernelSpec::Gaussian { .. } => 1.0,
            KernelSpec::CosineHalfPi => 1.0,
            KernelSpec::ExpSmooth { .. } => 1.0,
            KernelSpec::DiscretizedRounding(_) => 1.0,
            KernelSpec::Zero => 0.0,
            KernelSpec::Sum(members) => members
                .iter()
                .map(|m| {
                    let c = m.embedding_constant();
                    c * c
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Whether the kernel is symmetric (everything except the smooth
    /// exponential substitute).
    pub fn is_symmetric(&self) -> bool {
        match self {
            KernelSpec::ExpSmooth { .. } => false,
            KernelSpec::Sum(members) => members.iter().all(KernelSpec::is_symmetric),
            _ => true,
        }
    }

    /// Gram matrix `G[i][j] = K(points[i], points[j])`.
    pub fn gram(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        if points.is_empty() {
            return Err(Error::domain("Gram matrix needs at least one point"));
        }
        if !self.is_symmetric() {
            return Err(Error::domain("asymmetric kernels have no Gram matrix"));
        }
        let n = points.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let value = self.eval(&points[i], &points[j])?;
                g[(i, j)] = value;
                g[(j, i)] = value;
            }
        }
        Ok(g)
    }

    /// Gram matrix over scalar points.
    pub fn gram1(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        let wrapped: Vec<Vec<f64>> = points.iter().map(|&t| vec![t]).collect();
        self.gram(&wrapped)
    }
}

fn one_dimensional<'a>(x: &'a [f64], y: &'a [f64], name: &str) -> Result<(&'a f64, &'a f64)> {
    match (x.first(), y.first()) {
        (Some(a), Some(b)) if x.len() == 1 => Ok((a, b)),
        _ => Err(Error::domain(format!(
            "{name} kernel is one-dimensional, got {} coordinates",
            x.len()
        ))),
    }
}

/// A finite kernel combination `f(x) = Σ_j α_j K(c_j, x)`.
///
/// Stationary competitor strategies are expressed this way; the RKHS norm
/// `sqrt(αᵀ G α)` measures their complexity.
#[derive(Debug, Clone)]
pub struct InducedFunction {
    kernel: KernelSpec,
    centers: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
}

impl InducedFunction {
    pub fn new(kernel: KernelSpec, centers: Vec<Vec<f64>>, coefficients: Vec<f64>) -> Result<Self> {
        if centers.is_empty() || centers.len() != coefficients.len() {
            return Err(Error::domain(
                "induced function needs equally many centers and coefficients, at least one",
            ));
        }
        if matches!(kernel, KernelSpec::ExpSmooth { .. }) {
            return Err(Error::domain(
                "asymmetric smooth kernels do not induce RKHS functions",
            ));
        }
        Ok(InducedFunction {
            kernel,
            centers,
            coefficients,
        })
    }

    /// Single-center convenience over scalar inputs: `f = coefficient·k_center`.
    pub fn single(kernel: KernelSpec, center: f64, coefficient: f64) -> Result<Self> {
        InducedFunction::new(kernel, vec![vec![center]], vec![coefficient])
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (center, alpha) in self.centers.iter().zip(&self.coefficients) {
            total += alpha * self.kernel.eval(center, x)?;
        }
        Ok(total)
    }

    pub fn eval1(&self, x: f64) -> Result<f64> {
        self.eval(&[x])
    }

    /// RKHS norm `sqrt(αᵀ G α)` over the centers.
    pub fn norm(&self) -> Result<f64> {
        let g = self.kernel.gram(&self.centers)?;
        let n = self.coefficients.len();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += self.coefficients[i] * self.coefficients[j] * g[(i, j)];
            }
        }
        if quad < -1e-8 {
            return Err(Error::Numerical(format!(
                "negative quadratic form {quad} in induced norm"
            )));
        }
        Ok(quad.max(0.0).sqrt())
    }

    /// Sup norm over `[0,1]` by a dense grid scan (scalar inputs only).
    pub fn sup_norm(&self) -> Result<f64> {
        self.sup_norm_with_resolution(10_000)
    }

    pub fn sup_norm_with_resolution(&self, cells: usize) -> Result<f64> {
        let mut best = 0.0f64;
        for i in 0..=cells {
            let t = i as f64 / cells as f64;
            best = best.max(self.eval(&[t])?.abs());
        }
        Ok(best)
    }
}
