//! Operational profile approximation: kernel density estimation with
//! per-axis product kernels, bootstrap variance, per-cell pooled OP
//! estimates and weighted sample frames for the sampled mode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, LabeledDataset};
use crate::error::OpModelError;
use crate::estimate::{Estimate, EstimateMethod};
use crate::rng::{derive_rng, StreamDomain};

/// Kernel shape; both integrate to 1 over the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Gaussian,
    /// Laplace profile exp(-|u|)/2.
    Exponential,
}

impl Kernel {
    /// Normalized kernel value at u.
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            Kernel::Exponential => 0.5 * (-u.abs()).exp(),
        }
    }

    /// Kernel CDF at u; used for exact in-domain mass.
    pub fn cdf(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => statrs::distribution::ContinuousCDF::cdf(
                &statrs::distribution::Normal::standard(),
                u,
            ),
            Kernel::Exponential => {
                if u < 0.0 {
                    0.5 * u.exp()
                } else {
                    1.0 - 0.5 * (-u).exp()
                }
            }
        }
    }
}

/// How the bandwidth is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum BandwidthPolicy {
    /// One bandwidth for every axis.
    Fixed { h: f64 },
    /// Silverman-style per-axis rule: sigma_a * (4 / ((d+2) n))^(1/(d+4)).
    RuleOfThumb,
    /// Leave-one-out likelihood over a log-spaced grid of multipliers on
    /// the rule-of-thumb profile.
    CvGrid,
}

/// Fitted product-kernel density model over [0,1]^d.
///
/// The optional reflection correction mirrors every training point at the
/// 0 and 1 faces of each axis, which removes most of the boundary mass
/// deficit. Without it the density integrates to slightly less than 1
/// over the hypercube; that deficit is documented behavior.
#[derive(Debug, Clone)]
pub struct KdeModel {
    pub kernel: Kernel,
    /// Per-axis bandwidth, all positive.
    pub bandwidth: Vec<f64>,
    pub reflect: bool,
    /// How the bandwidth was obtained, for report metadata.
    pub policy: BandwidthPolicy,
    d: usize,
    n: usize,
    points: Vec<f64>,
}

/// Serializable description of a fitted model; points travel by reference
/// to keep the document small.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KdeModelDoc {
    pub kernel: Kernel,
    pub h: Vec<f64>,
    pub reflect: bool,
    pub policy: BandwidthPolicy,
    pub points_ref: Option<String>,
    pub n: usize,
}

/// Fit a KDE to the dataset under the given bandwidth policy.
pub fn fit_kde(
    ds: &LabeledDataset,
    kernel: Kernel,
    policy: BandwidthPolicy,
    reflect: bool,
) -> Result<KdeModel, OpModelError> {
    if ds.n() < 2 {
        return Err(OpModelError::DegenerateData);
    }
    let bandwidth = match &policy {
        BandwidthPolicy::Fixed { h } => {
            if !(*h > 0.0) {
                return Err(OpModelError::NonPositiveBandwidth);
            }
            vec![*h; ds.dim()]
        }
        BandwidthPolicy::RuleOfThumb => silverman_profile(ds)?,
        BandwidthPolicy::CvGrid => {
            let profile = silverman_profile(ds)?;
            let best = cv_best_multiplier(ds, kernel, &profile);
            profile.iter().map(|h| h * best).collect()
        }
    };
    Ok(KdeModel {
        kernel,
        bandwidth,
        reflect,
        policy,
        d: ds.dim(),
        n: ds.n(),
        points: (0..ds.n()).flat_map(|i| ds.point(i).to_vec()).collect(),
    })
}

fn silverman_profile(ds: &LabeledDataset) -> Result<Vec<f64>, OpModelError> {
    let d = ds.dim() as f64;
    let n = ds.n() as f64;
    let factor = (4.0 / ((d + 2.0) * n)).powf(1.0 / (d + 4.0));
    let sigmas = ds.axis_std();
    if sigmas.iter().any(|&s| s <= 0.0) {
        return Err(OpModelError::DegenerateData);
    }
    Ok(sigmas.iter().map(|s| s * factor).collect())
}

/// Log-spaced multipliers searched by the cv_grid policy.
const CV_GRID_LO: f64 = 0.1;
const CV_GRID_HI: f64 = 3.0;
const CV_GRID_POINTS: usize = 20;

fn cv_best_multiplier(ds: &LabeledDataset, kernel: Kernel, profile: &[f64]) -> f64 {
    let n = ds.n();
    let d = ds.dim();
    let mut best = (f64::NEG_INFINITY, 1.0);
    for g in 0..CV_GRID_POINTS {
        let t = g as f64 / (CV_GRID_POINTS - 1) as f64;
        let mult = CV_GRID_LO * (CV_GRID_HI / CV_GRID_LO).powf(t);
        let h: Vec<f64> = profile.iter().map(|v| v * mult).collect();
        let inv_h_prod: f64 = h.iter().map(|v| 1.0 / v).product();
        let mut score = 0.0;
        for i in 0..n {
            let xi = ds.point(i);
            let mut leave_out = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let xj = ds.point(j);
                let mut k = inv_h_prod;
                for a in 0..d {
                    k *= kernel.eval((xi[a] - xj[a]) / h[a]);
                }
                leave_out += k;
            }
            score += (leave_out / (n as f64 - 1.0)).max(f64::MIN_POSITIVE).ln();
        }
        if score > best.0 {
            best = (score, mult);
        }
    }
    best.1
}

impl KdeModel {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Density at x; the average of per-point product kernels.
    pub fn density(&self, x: &[f64]) -> f64 {
        self.weighted_density(x, None)
    }

    /// Density of a bootstrap resample described by per-point counts.
    /// `counts` must sum to n. `None` means the original sample.
    fn weighted_density(&self, x: &[f64], counts: Option<&[u32]>) -> f64 {
        let mut total = 0.0;
        for (j, p) in self.points.chunks_exact(self.d).enumerate() {
            let w = match counts {
                Some(c) => {
                    if c[j] == 0 {
                        continue;
                    }
                    f64::from(c[j])
                }
                None => 1.0,
            };
            let mut k = w;
            for a in 0..self.d {
                k *= self.axis_factor(x[a], p[a], self.bandwidth[a]);
            }
            total += k;
        }
        total / self.n as f64
    }

    fn axis_factor(&self, x: f64, p: f64, h: f64) -> f64 {
        let base = self.kernel.eval((x - p) / h) / h;
        if self.reflect {
            base + self.kernel.eval((x + p) / h) / h + self.kernel.eval((2.0 - x - p) / h) / h
        } else {
            base
        }
    }

    /// Exact probability mass inside [0,1]^d via kernel CDFs; the closed
    /// form the Riemann mass check is compared against.
    pub fn mass_in_unit_cube(&self) -> f64 {
        let mut total = 0.0;
        for p in self.points.chunks_exact(self.d) {
            let mut m = 1.0;
            for a in 0..self.d {
                let h = self.bandwidth[a];
                let mut axis = self.kernel.cdf((1.0 - p[a]) / h) - self.kernel.cdf(-p[a] / h);
                if self.reflect {
                    axis += self.kernel.cdf((1.0 + p[a]) / h) - self.kernel.cdf(p[a] / h);
                    axis +=
                        self.kernel.cdf((2.0 - p[a]) / h) - self.kernel.cdf((1.0 - p[a]) / h);
                }
                m *= axis;
            }
            total += m;
        }
        total / self.n as f64
    }

    pub fn to_doc(&self, points_ref: Option<String>) -> KdeModelDoc {
        KdeModelDoc {
            kernel: self.kernel,
            h: self.bandwidth.clone(),
            reflect: self.reflect,
            policy: self.policy.clone(),
            points_ref,
            n: self.n,
        }
    }
}

/// With-replacement resamples shared across query points, so one set of B
/// bootstrap KDEs serves every cell center.
#[derive(Debug, Clone)]
pub struct BootstrapKde {
    /// counts[b][j]: multiplicity of point j in replicate b.
    counts: Vec<Vec<u32>>,
}

impl BootstrapKde {
    /// Draw B resamples of size n. Replicate b uses the RNG stream
    /// (seed, BootstrapReplicate, b), so the set is schedule-independent.
    pub fn new(n: usize, b: usize, seed: u64) -> Result<Self, OpModelError> {
        if b < 2 {
            return Err(OpModelError::TooFewReplicates(b));
        }
        let counts = (0..b)
            .map(|rep| {
                let mut rng = derive_rng(seed, StreamDomain::BootstrapReplicate, rep as u64);
                let mut c = vec![0u32; n];
                for _ in 0..n {
                    let j = rng.random_range(0..n);
                    c[j] += 1;
                }
                c
            })
            .collect();
        Ok(BootstrapKde { counts })
    }

    pub fn replicates(&self) -> usize {
        self.counts.len()
    }

    /// Sample variance over replicate densities at x.
    pub fn variance_at(&self, kde: &KdeModel, x: &[f64]) -> f64 {
        let b = self.counts.len() as f64;
        let densities: Vec<f64> = self
            .counts
            .iter()
            .map(|c| kde.weighted_density(x, Some(c)))
            .collect();
        let mean = densities.iter().sum::<f64>() / b;
        densities.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (b - 1.0)
    }
}

/// Bootstrap variance of the KDE density at a single query point: fit on B
/// with-replacement resamples and take the sample variance.
pub fn bootstrap_variance(
    ds: &LabeledDataset,
    kernel: Kernel,
    bandwidth: &[f64],
    x: &[f64],
    b: usize,
    seed: u64,
) -> Result<f64, OpModelError> {
    if bandwidth.iter().any(|&h| !(h > 0.0)) {
        return Err(OpModelError::NonPositiveBandwidth);
    }
    let kde = KdeModel {
        kernel,
        bandwidth: bandwidth.to_vec(),
        reflect: false,
        policy: BandwidthPolicy::Fixed { h: bandwidth[0] },
        d: ds.dim(),
        n: ds.n(),
        points: (0..ds.n()).flat_map(|i| ds.point(i).to_vec()).collect(),
    };
    Ok(BootstrapKde::new(ds.n(), b, seed)?.variance_at(&kde, x))
}

/// Pooled OP of a cell: density at the central point times the cell
/// volume, with variance scaled from the bootstrap density variance.
pub fn cell_op(
    kde: &KdeModel,
    bootstrap: Option<&BootstrapKde>,
    center: &[f64],
    cell_volume: f64,
) -> Estimate {
    let mean = kde.density(center) * cell_volume;
    let variance = match bootstrap {
        Some(boot) => cell_volume * cell_volume * boot.variance_at(kde, center),
        None => 0.0,
    };
    Estimate::new(mean, variance, EstimateMethod::KdeBootstrap)
}

/// Exact-integration alternative to `cell_op` for oracle comparisons:
/// midpoint quadrature of an arbitrary density over the cell box.
pub fn cell_op_quadrature(
    density: &dyn Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    points_per_axis: usize,
) -> Estimate {
    let d = lo.len();
    let q = points_per_axis.max(1);
    let mut volume = 1.0;
    for a in 0..d {
        volume *= hi[a] - lo[a];
    }
    let total_nodes = q.pow(d as u32);
    let mut sum = 0.0;
    let mut x = vec![0.0; d];
    for node in 0..total_nodes {
        let mut rem = node;
        for a in 0..d {
            let i = rem % q;
            rem /= q;
            x[a] = lo[a] + (i as f64 + 0.5) * (hi[a] - lo[a]) / q as f64;
        }
        sum += density(&x);
    }
    Estimate::new(sum / total_nodes as f64 * volume, 0.0, EstimateMethod::Exact)
}

/// One norm ball of a sample frame: an L-infinity box of side `radius`
/// centered at `center`, carrying its OP weight and ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
    pub weight: f64,
    pub label: ClassId,
}

impl Ball {
    /// Ball box clipped to the unit hypercube.
    pub fn clipped_box(&self) -> (Vec<f64>, Vec<f64>) {
        let half = self.radius / 2.0;
        let lo = self.center.iter().map(|c| (c - half).clamp(0.0, 1.0)).collect();
        let hi = self.center.iter().map(|c| (c + half).clamp(0.0, 1.0)).collect();
        (lo, hi)
    }
}

/// Weighted collection of norm balls for the sampled (high-dimensional)
/// mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFrame {
    pub balls: Vec<Ball>,
}

impl SampleFrame {
    pub fn new(balls: Vec<Ball>) -> Self {
        SampleFrame { balls }
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.balls.iter().map(|b| b.weight).sum()
    }

    pub fn has_positive_weight(&self) -> bool {
        self.balls.iter().any(|b| b.weight > 0.0)
    }
}

/// One ball per dataset point: centered there, radius epsilon, weighted by
/// the cell-OP-style mean (density at the center times epsilon^d) and
/// carrying the point's own label as ground truth.
pub fn build_sample_frame(ds: &LabeledDataset, kde: &KdeModel, epsilon: f64) -> SampleFrame {
    let v_c = epsilon.powi(ds.dim() as i32);
    let balls = (0..ds.n())
        .map(|i| {
            let p = ds.point(i);
            Ball {
                center: p.to_vec(),
                radius: epsilon,
                weight: kde.density(p) * v_c,
                label: ds.label(i),
            }
        })
        .collect();
    SampleFrame::new(balls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;
    use crate::dataset::{LabelRule, MixtureComponent, MixtureSpec};
    use approx::assert_abs_diff_eq;

    fn ds_1d(points: &[f64]) -> LabeledDataset {
        let labels = vec![0; points.len()];
        LabeledDataset::new(1, points.to_vec(), labels).unwrap()
    }

    #[test]
    fn gaussian_density_matches_hand_value() {
        // Two points at 0 and 1, h = 1: density at 0.5 is phi(0.5).
        let ds = ds_1d(&[0.0, 1.0]);
        let kde = fit_kde(&ds, Kernel::Gaussian, BandwidthPolicy::Fixed { h: 1.0 }, false).unwrap();
        assert_abs_diff_eq!(kde.density(&[0.5]), 0.352065, epsilon = 1e-6);
    }

    #[test]
    fn density_is_nonnegative_everywhere() {
        let spec = MixtureSpec {
            components: vec![MixtureComponent {
                mean: vec![0.4, 0.6],
                scale: vec![0.2, 0.1],
                weight: 1.0,
            }],
            label_rule: LabelRule::Halfplane {
                normal: vec![0.0, 1.0],
                offset: 0.5,
            },
        };
        let ds = generate_synthetic(&spec, 80, 21).unwrap();
        for kernel in [Kernel::Gaussian, Kernel::Exponential] {
            let kde = fit_kde(&ds, kernel, BandwidthPolicy::RuleOfThumb, false).unwrap();
            let mut rng = crate::rng::derive_rng(4, crate::rng::StreamDomain::CellRobustness, 0);
            for _ in 0..1000 {
                let x = [rng.random::<f64>(), rng.random::<f64>()];
                assert!(kde.density(&x) >= 0.0);
            }
        }
    }

    #[test]
    fn degenerate_data_needs_fixed_bandwidth() {
        let ds = ds_1d(&[0.5, 0.5, 0.5]);
        assert!(matches!(
            fit_kde(&ds, Kernel::Gaussian, BandwidthPolicy::RuleOfThumb, false),
            Err(OpModelError::DegenerateData)
        ));
        assert!(fit_kde(&ds, Kernel::Gaussian, BandwidthPolicy::Fixed { h: 0.1 }, false).is_ok());
    }

    #[test]
    fn riemann_mass_matches_closed_form() {
        let spec = MixtureSpec {
            components: vec![MixtureComponent {
                mean: vec![0.3],
                scale: vec![0.2],
                weight: 1.0,
            }],
            label_rule: LabelRule::Halfplane {
                normal: vec![1.0],
                offset: 0.5,
            },
        };
        let ds = generate_synthetic(&spec, 60, 2).unwrap();
        for reflect in [false, true] {
            let kde =
                fit_kde(&ds, Kernel::Gaussian, BandwidthPolicy::Fixed { h: 0.15 }, reflect).unwrap();
            let g = 400;
            let step = 1.0 / g as f64;
            let riemann: f64 = (0..g)
                .map(|i| kde.density(&[(i as f64 + 0.5) * step]) * step)
                .sum();
            let exact = kde.mass_in_unit_cube();
            assert_abs_diff_eq!(riemann, exact, epsilon = 5e-4);
            assert!(exact <= 1.0 + 1e-9);
            if reflect {
                assert!((riemann - 1.0).abs() < 0.02, "reflected mass {riemann}");
            } else {
                assert!(riemann < 1.0);
            }
        }
    }

    #[test]
    fn bootstrap_variance_zero_for_degenerate_data() {
        let ds = ds_1d(&[0.5, 0.5, 0.5, 0.5]);
        let var = bootstrap_variance(&ds, Kernel::Gaussian, &[0.1], &[0.4], 50, 7).unwrap();
        assert_eq!(var, 0.0);
    }

    #[test]
    fn bootstrap_variance_b2_matches_hand_computation() {
        let ds = ds_1d(&[0.2, 0.8]);
        let h = [0.3];
        let seed = 11;
        let var = bootstrap_variance(&ds, Kernel::Gaussian, &h, &[0.5], 2, seed).unwrap();

        // Recompute by hand from the pinned resample counts.
        let mut densities = Vec::new();
        for rep in 0..2u64 {
            let mut rng = derive_rng(seed, StreamDomain::BootstrapReplicate, rep);
            let mut counts = [0u32; 2];
            for _ in 0..2 {
                counts[rng.random_range(0..2usize)] += 1;
            }
            let pts = [0.2, 0.8];
            let mut dens = 0.0;
            for (j, &p) in pts.iter().enumerate() {
                dens += f64::from(counts[j]) * Kernel::Gaussian.eval((0.5 - p) / h[0]) / h[0];
            }
            densities.push(dens / 2.0);
        }
        let mu = (densities[0] + densities[1]) / 2.0;
        let expected = (densities[0] - mu).powi(2) + (densities[1] - mu).powi(2);
        assert_abs_diff_eq!(var, expected, epsilon = 1e-15);
    }

    #[test]
    fn bootstrap_variance_is_order_invariant() {
        let a = ds_1d(&[0.1, 0.4, 0.9]);
        let b = ds_1d(&[0.9, 0.1, 0.4]);
        // Same multiset of points: resample count vectors permute with the
        // points, and the density is a sum over points, so the variance
        // pool is identical as a distribution; with a common seed the
        // count vectors are index-based, so compare across many seeds via
        // averages instead of one draw.
        let mean_var = |ds: &LabeledDataset| -> f64 {
            (0..20)
                .map(|s| bootstrap_variance(ds, Kernel::Gaussian, &[0.2], &[0.5], 40, s).unwrap())
                .sum::<f64>()
                / 20.0
        };
        let va = mean_var(&a);
        let vb = mean_var(&b);
        assert!((va - vb).abs() < 0.1 * va.max(vb), "{va} vs {vb}");
    }

    #[test]
    fn cell_op_scales_density_by_volume() {
        let ds = ds_1d(&[0.0, 1.0]);
        let kde = fit_kde(&ds, Kernel::Gaussian, BandwidthPolicy::Fixed { h: 1.0 }, false).unwrap();
        let est = cell_op(&kde, None, &[0.5], 0.000016);
        assert_abs_diff_eq!(est.mean, 0.352065 * 0.000016, epsilon = 1e-10);
        assert_eq!(est.variance, 0.0);
    }

    #[test]
    fn cell_op_sums_to_one_on_fine_partition() {
        // Near-uniform data with reflection: summed cell OP approximates 1.
        let n = 40;
        let pts: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let ds = ds_1d(&pts);
        let kde = fit_kde(&ds, Kernel::Gaussian, BandwidthPolicy::Fixed { h: 0.1 }, true).unwrap();
        let cells = 200;
        let eps = 1.0 / cells as f64;
        let total: f64 = (0..cells)
            .map(|i| cell_op(&kde, None, &[(i as f64 + 0.5) * eps], eps).mean)
            .sum();
        assert!((total - 1.0).abs() < 0.01, "total {total}");
    }

    #[test]
    fn quadrature_matches_closed_form_box_mass() {
        let spec = MixtureSpec {
            components: vec![MixtureComponent {
                mean: vec![0.5, 0.5],
                scale: vec![0.2, 0.2],
                weight: 1.0,
            }],
            label_rule: LabelRule::Halfplane {
                normal: vec![1.0, 0.0],
                offset: 0.5,
            },
        };
        let lo = [0.4, 0.4];
        let hi = [0.6, 0.6];
        let est = cell_op_quadrature(&|x| spec.density(x), &lo, &hi, 32);
        // Independent route: product of per-axis truncated-normal masses.
        let std = statrs::distribution::Normal::standard();
        use statrs::distribution::ContinuousCDF;
        let axis_mass = (std.cdf(0.5) - std.cdf(-0.5)) / (std.cdf(2.5) - std.cdf(-2.5));
        let expected = axis_mass * axis_mass;
        assert_abs_diff_eq!(est.mean, expected, epsilon = 1e-6);
    }

    #[test]
    fn sample_frame_weights_proportional_to_density() {
        let ds = LabeledDataset::new(
            2,
            vec![0.2, 0.2, 0.2, 0.2, 0.8, 0.8],
            vec![0, 0, 1],
        )
        .unwrap();
        let kde = fit_kde(&ds, Kernel::Gaussian, BandwidthPolicy::Fixed { h: 0.2 }, false).unwrap();
        let frame = build_sample_frame(&ds, &kde, 0.05);
        assert_eq!(frame.len(), 3);
        assert!(frame.has_positive_weight());
        // Identical points carry identical weights.
        assert_eq!(frame.balls[0].weight, frame.balls[1].weight);
        // Weight is density times epsilon^d.
        let v_c = 0.05f64.powi(2);
        assert_abs_diff_eq!(
            frame.balls[2].weight,
            kde.density(&[0.8, 0.8]) * v_c,
            epsilon = 1e-15
        );
        assert_eq!(frame.balls[2].label, 1);
    }

    #[test]
    fn cv_grid_recovers_reasonable_bandwidth() {
        let spec = MixtureSpec {
            components: vec![MixtureComponent {
                mean: vec![0.5],
                scale: vec![0.15],
                weight: 1.0,
            }],
            label_rule: LabelRule::Halfplane {
                normal: vec![1.0],
                offset: 0.5,
            },
        };
        let ds = generate_synthetic(&spec, 120, 8).unwrap();
        let kde = fit_kde(&ds, Kernel::Gaussian, BandwidthPolicy::CvGrid, false).unwrap();
        // Sanity band: the CV choice should stay within an order of
        // magnitude of the data scale.
        assert!(kde.bandwidth[0] > 0.005 && kde.bandwidth[0] < 0.5);
    }
}
