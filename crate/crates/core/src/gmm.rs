//! Per-patch Gaussian mixture with a uniform outlier component, optimized
//! by EM: Bayes posteriors in the E-step, gradient-descent centroid update
//! with a bilateral smoothness pull in the M-step, closed-form variances.

use crate::error::{Error, Result};
use crate::patch::PatchPair;

/// Below this posterior mass a component is treated as data-free: its
/// centroid feels no data pull and its variance is left unchanged.
const DEGENERATE_MASS: f64 = 1e-12;

/// Mixture/EM parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmConfig {
    /// Uniform outlier weight, in `[0, 1)`.
    pub omega: f64,
    /// Data-term weight in the combined M-step objective, in `(0, 1]`.
    pub lambda: f64,
    /// Bilateral pull weight in the centroid update (direct constant).
    pub mu: f64,
    /// Gradient-descent step size.
    pub alpha: f64,
    /// Gradient-descent iterations per M-step.
    pub gd_iterations: usize,
    /// EM rounds per patch.
    pub em_iterations: usize,
    /// Initial per-component variance (intensity squared).
    pub sigma_init: f64,
    /// Bilateral spatial scale, pixels.
    pub sigma_d: f64,
    /// Bilateral range scale, intensity units.
    pub sigma_l: f64,
    /// Lower bound kept on every variance.
    pub variance_floor: f64,
    /// Observation dimension (1 for grayscale).
    pub dim: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            omega: 0.02,
            lambda: 0.775,
            mu: 0.5,
            alpha: 0.1,
            gd_iterations: 50,
            em_iterations: 3,
            sigma_init: 300.0,
            sigma_d: 1.0,
            sigma_l: 20.0,
            variance_floor: 1e-4,
            dim: 1,
        }
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if !(0.0..1.0).contains(&self.omega) {
            return bad(format!("omega must be in [0,1), got {}", self.omega));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad(format!("lambda must be in (0,1], got {}", self.lambda));
        }
        if self.mu.is_nan() || self.mu < 0.0 {
            return bad(format!("mu must be >= 0, got {}", self.mu));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if self.sigma_init.is_nan() || self.sigma_init <= 0.0 {
            return bad(format!("sigma_init must be > 0, got {}", self.sigma_init));
        }
        if self.variance_floor.is_nan() || self.variance_floor <= 0.0 {
            return bad(format!(
                "variance_floor must be > 0, got {}",
                self.variance_floor
            ));
        }
        if self.sigma_d.is_nan()
            || self.sigma_d <= 0.0
            || self.sigma_l.is_nan()
            || self.sigma_l <= 0.0
        {
            return bad(format!(
                "bilateral scales must be > 0, got sigma_d={} sigma_l={}",
                self.sigma_d, self.sigma_l
            ));
        }
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        Ok(())
    }
}

/// Neighbor structure of a patch: for each element, the indices of its
/// 8-connected in-patch neighbors and their spatial distances.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl Neighborhood {
    /// 8-connected neighbors on a `w x h` grid; boundary elements keep only
    /// their in-grid neighbors.
    pub fn grid8(w: usize, h: usize) -> Self {
        let mut neighbors = Vec::with_capacity(w * h);
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut nb = Vec::new();
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x + dx, y + dy);
                        if nx >= 0 && nx < w as i64 && ny >= 0 && ny < h as i64 {
                            let dist = ((dx * dx + dy * dy) as f64).sqrt();
                            nb.push(((ny as usize) * w + nx as usize, dist));
                        }
                    }
                }
                neighbors.push(nb);
            }
        }
        Self { neighbors }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn of(&self, m: usize) -> &[(usize, f64)] {
        &self.neighbors[m]
    }
}

/// Mixture state for one patch: component centroids, variances and the
/// `M x K` posterior matrix (row-major by component).
#[derive(Debug, Clone)]
pub struct GmmState {
    pub centroids: Vec<f64>,
    pub variances: Vec<f64>,
    pub posteriors: Vec<f64>,
}

impl GmmState {
    /// Centroids taken from the blurred patch, uniform initial variance.
    pub fn init(x: &[f64], k: usize, sigma_init: f64) -> Self {
        Self {
            centroids: x.to_vec(),
            variances: vec![sigma_init; x.len()],
            posteriors: vec![0.0; x.len() * k],
        }
    }

    pub fn m(&self) -> usize {
        self.centroids.len()
    }
}

#[inline]
fn log_gaussian(y: f64, x: f64, var: f64, dim: usize) -> f64 {
    let d = dim as f64;
    -(d / 2.0) * (2.0 * std::f64::consts::PI * var).ln() - (y - x) * (y - x) / (2.0 * var)
}

/// Log mixture density of one observation:
/// `log( (1-w)/M * sum_m N(y; x_m, var_m) + w/K )`, evaluated by
/// log-sum-exp so far-away observations do not underflow.
fn log_mixture(state: &GmmState, y: f64, k_total: usize, cfg: &GmmConfig) -> f64 {
    let m = state.m() as f64;
    let log_comp_w = ((1.0 - cfg.omega) / m).ln();
    let mut max = f64::NEG_INFINITY;
    let mut terms = Vec::with_capacity(state.m() + 1);
    for (&x, &var) in state.centroids.iter().zip(&state.variances) {
        let t = log_comp_w + log_gaussian(y, x, var, cfg.dim);
        terms.push(t);
        max = max.max(t);
    }
    if cfg.omega > 0.0 {
        let t = (cfg.omega / k_total as f64).ln();
        terms.push(t);
        max = max.max(t);
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// E-step: exact Bayes posteriors
/// `p_mk = (1-w)/M N(y_k; x_m, var_m) / ((1-w)/M sum_j N(y_k; x_j, var_j) + w/K)`.
///
/// When every component underflows and there is no outlier term the
/// posterior column falls back to uniform `1/M`.
pub fn e_step(state: &mut GmmState, y: &[f64], cfg: &GmmConfig) -> Result<()> {
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("observation {bad}")));
    }
    let m = state.m();
    let log_comp_w = ((1.0 - cfg.omega) / m as f64).ln();
    for (k, &yk) in y.iter().enumerate() {
        let log_z = log_mixture(state, yk, y.len(), cfg);
        for j in 0..m {
            let p = if log_z == f64::NEG_INFINITY {
                1.0 / m as f64
            } else {
                let lw =
                    log_comp_w + log_gaussian(yk, state.centroids[j], state.variances[j], cfg.dim);
                (lw - log_z).exp()
            };
            state.posteriors[j * y.len() + k] = p;
        }
    }
    Ok(())
}

/// Negative log-likelihood of the observations under the current mixture.
pub fn nll(state: &GmmState, y: &[f64], cfg: &GmmConfig) -> f64 {
    -y.iter()
        .map(|&yk| log_mixture(state, yk, y.len(), cfg))
        .sum::<f64>()
}

#[inline]
fn bilateral_weight(spatial_dist: f64, intensity_diff: f64, cfg: &GmmConfig) -> f64 {
    (-spatial_dist * spatial_dist / (2.0 * cfg.sigma_d * cfg.sigma_d)).exp()
        * (-intensity_diff * intensity_diff / (2.0 * cfg.sigma_l * cfg.sigma_l)).exp()
}

/// Bilateral smoothness energy over all ordered neighbor pairs:
/// `sum_m sum_{m' in N(m)} (x_m - x_m')^2 w_spatial w_range`.
pub fn bilateral_term(values: &[f64], nbrs: &Neighborhood, cfg: &GmmConfig) -> f64 {
    let mut b = 0.0;
    for (m, &xm) in values.iter().enumerate() {
        for &(n, dist) in nbrs.of(m) {
            let diff = xm - values[n];
            b += diff * diff * bilateral_weight(dist, diff, cfg);
        }
    }
    b
}

/// Posterior-weighted pull of each centroid toward its observations:
/// `sum_k p_mk (y_k - x_m) / sum_k p_mk`, zero for data-free components.
pub fn data_direction(posteriors: &[f64], y: &[f64], centroids: &[f64]) -> Vec<f64> {
    let k = y.len();
    centroids
        .iter()
        .enumerate()
        .map(|(m, &xm)| {
            let row = &posteriors[m * k..(m + 1) * k];
            let mass: f64 = row.iter().sum();
            if mass < DEGENERATE_MASS {
                return 0.0;
            }
            let pull: f64 = row.iter().zip(y).map(|(&p, &yk)| p * (yk - xm)).sum();
            pull / mass
        })
        .collect()
}

/// Bilateral pull on each centroid, with weights evaluated at the current
/// values: `sum_{m' in N(m)} (x_m - x_m') w_spatial w_range`.
pub fn bilateral_direction(values: &[f64], nbrs: &Neighborhood, cfg: &GmmConfig) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(m, &xm)| {
            nbrs.of(m)
                .iter()
                .map(|&(n, dist)| {
                    let diff = xm - values[n];
                    diff * bilateral_weight(dist, diff, cfg)
                })
                .sum()
        })
        .collect()
}

/// Gradient-descent centroid update with frozen posteriors:
/// `x <- x + alpha (lambda * data_pull - mu * bilateral_pull)` for
/// `gd_iterations` steps; bilateral weights are re-evaluated at each step
/// from the current centroids.
pub fn m_step_centroids(state: &mut GmmState, y: &[f64], nbrs: &Neighborhood, cfg: &GmmConfig) {
    let k = y.len();
    let m = state.m();
    // Posterior sums are constant during the inner loop.
    let mut mass = vec![0.0; m];
    let mut weighted_y = vec![0.0; m];
    for j in 0..m {
        let row = &state.posteriors[j * k..(j + 1) * k];
        mass[j] = row.iter().sum();
        weighted_y[j] = row.iter().zip(y).map(|(&p, &yk)| p * yk).sum();
    }

    let mut delta = vec![0.0; m];
    for _ in 0..cfg.gd_iterations {
        let bil = bilateral_direction(&state.centroids, nbrs, cfg);
        for (j, d) in delta.iter_mut().enumerate() {
            let data = if mass[j] < DEGENERATE_MASS {
                0.0
            } else {
                weighted_y[j] / mass[j] - state.centroids[j]
            };
            *d = cfg.lambda * data - cfg.mu * bil[j];
        }
        for (x, d) in state.centroids.iter_mut().zip(&delta) {
            *x += cfg.alpha * d;
        }
    }
}

/// Closed-form variance update with floor:
/// `var_m <- max(sum_k p_mk (x_m - y_k)^2 / sum_k p_mk, floor)`;
/// data-free components keep their variance.
pub fn m_step_variance(state: &mut GmmState, y: &[f64], cfg: &GmmConfig) {
    let k = y.len();
    for j in 0..state.m() {
        let row = &state.posteriors[j * k..(j + 1) * k];
        let mass: f64 = row.iter().sum();
        if mass < DEGENERATE_MASS {
            continue;
        }
        let xm = state.centroids[j];
        let ss: f64 = row
            .iter()
            .zip(y)
            .map(|(&p, &yk)| p * (xm - yk) * (xm - yk))
            .sum();
        state.variances[j] = (ss / mass).max(cfg.variance_floor);
    }
}

/// Data part of the M-step upper bound:
/// `sum_k sum_m p_mk (y_k - x_m)^2 / (2 var_m) + sum_k sum_m p_mk d/2 ln var_m`.
pub fn q_bound(state: &GmmState, y: &[f64], cfg: &GmmConfig) -> f64 {
    let k = y.len();
    let d = cfg.dim as f64;
    let mut q = 0.0;
    for j in 0..state.m() {
        let row = &state.posteriors[j * k..(j + 1) * k];
        let xm = state.centroids[j];
        let var = state.variances[j];
        let log_var = var.ln();
        for (&p, &yk) in row.iter().zip(y) {
            q += p * (yk - xm) * (yk - xm) / (2.0 * var) + p * (d / 2.0) * log_var;
        }
    }
    q
}

/// Combined M-step objective `lambda Q + (1 - lambda) B`.
pub fn combined_objective(
    state: &GmmState,
    y: &[f64],
    nbrs: &Neighborhood,
    cfg: &GmmConfig,
) -> f64 {
    cfg.lambda * q_bound(state, y, cfg)
        + (1.0 - cfg.lambda) * bilateral_term(&state.centroids, nbrs, cfg)
}

/// Result of running EM on one patch.
#[derive(Debug, Clone)]
pub struct PatchEmResult {
    /// Updated latent intensities.
    pub x: Vec<f64>,
    /// Negative log-likelihood of the final state.
    pub nll: f64,
}

/// Run the per-patch EM: centroids from the blurred patch, `em_iterations`
/// rounds of E-step / centroid update / variance update.
pub fn run_patch_em(
    pair: &PatchPair,
    nbrs: &Neighborhood,
    cfg: &GmmConfig,
) -> Result<PatchEmResult> {
    debug_assert_eq!(nbrs.len(), pair.x.len());
    let mut state = GmmState::init(&pair.x, pair.y.len(), cfg.sigma_init);
    for _ in 0..cfg.em_iterations {
        e_step(&mut state, &pair.y, cfg)?;
        m_step_centroids(&mut state, &pair.y, nbrs, cfg);
        m_step_variance(&mut state, &pair.y, cfg);
    }
    let energy = nll(&state, &pair.y, cfg);
    if state.centroids.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "patch centroids at {:?}",
            pair.center
        )));
    }
    Ok(PatchEmResult {
        x: state.centroids,
        nll: energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    const INV_SQRT_2PI: f64 = 0.39894228040143267;

    fn single(x: f64, var: f64, k: usize) -> GmmState {
        GmmState::init(&[x], k, var)
    }

    #[test]
    fn e_step_single_component_no_outlier() {
        let cfg = GmmConfig {
            omega: 0.0,
            ..GmmConfig::default()
        };
        let mut state = single(0.0, 1.0, 1);
        e_step(&mut state, &[0.0], &cfg).unwrap();
        assert!((state.posteriors[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn e_step_single_component_with_outlier() {
        let cfg = GmmConfig {
            omega: 0.02,
            ..GmmConfig::default()
        };
        let mut state = single(0.0, 1.0, 1);
        e_step(&mut state, &[0.0], &cfg).unwrap();
        let expected = 0.98 * INV_SQRT_2PI / (0.98 * INV_SQRT_2PI + 0.02);
        assert!((state.posteriors[0] - expected).abs() < 1e-12);
        assert!((state.posteriors[0] - 0.9513).abs() < 1e-3);
    }

    #[test]
    fn e_step_symmetric_centroids_split_evenly() {
        let cfg = GmmConfig {
            omega: 0.0,
            ..GmmConfig::default()
        };
        let mut state = GmmState::init(&[-5.0, 5.0], 1, 4.0);
        e_step(&mut state, &[0.0], &cfg).unwrap();
        assert!((state.posteriors[0] - 0.5).abs() < 1e-12);
        assert!((state.posteriors[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn e_step_rejects_non_finite() {
        let cfg = GmmConfig::default();
        let mut state = single(0.0, 1.0, 1);
        assert!(e_step(&mut state, &[f64::NAN], &cfg).is_err());
    }

    #[test]
    fn posterior_sums_bounded() {
        let mut rng = StdRng::seed_from_u64(7);
        for trial in 0..200 {
            let omega = if trial % 2 == 0 {
                0.0
            } else {
                rng.gen_range(0.0..0.5)
            };
            let cfg = GmmConfig {
                omega,
                ..GmmConfig::default()
            };
            let m = rng.gen_range(1..=9);
            let k = rng.gen_range(1..=25);
            let x: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..255.0)).collect();
            let y: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..255.0)).collect();
            let mut state = GmmState::init(&x, k, rng.gen_range(100.0..500.0));
            e_step(&mut state, &y, &cfg).unwrap();
            for kk in 0..k {
                let s: f64 = (0..m).map(|j| state.posteriors[j * k + kk]).sum();
                assert!(s <= 1.0 + 1e-9, "sum {s} > 1");
                assert!(s >= 0.0);
                if omega == 0.0 {
                    assert!((s - 1.0).abs() < 1e-9, "omega=0 sum {s}");
                }
            }
        }
    }

    #[test]
    fn nll_standard_normal_at_mode() {
        let cfg = GmmConfig {
            omega: 0.0,
            ..GmmConfig::default()
        };
        let state = single(0.0, 1.0, 1);
        let e = nll(&state, &[0.0], &cfg);
        let expected = 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((e - expected).abs() < 1e-12, "nll {e} vs {expected}");
    }

    #[test]
    fn nll_additive_over_observations() {
        let cfg = GmmConfig {
            omega: 0.0,
            ..GmmConfig::default()
        };
        let state = GmmState::init(&[10.0, 30.0], 2, 50.0);
        let e1 = nll(&state, &[12.0, 28.0], &cfg);
        let state4 = GmmState::init(&[10.0, 30.0], 4, 50.0);
        let e2 = nll(&state4, &[12.0, 28.0, 12.0, 28.0], &cfg);
        assert!((e2 - 2.0 * e1).abs() < 1e-9);
    }

    #[test]
    fn nll_far_observation_stays_finite() {
        let cfg = GmmConfig {
            omega: 0.0,
            variance_floor: 1e-4,
            ..GmmConfig::default()
        };
        let mut state = single(0.0, 1e-4, 1);
        state.variances[0] = 1e-4;
        let e = nll(&state, &[255.0], &cfg);
        assert!(e.is_finite(), "nll underflowed: {e}");
    }

    #[test]
    fn bilateral_constant_patch_is_zero() {
        let cfg = GmmConfig::default();
        let nbrs = Neighborhood::grid8(3, 3);
        assert_eq!(bilateral_term(&[7.0; 9], &nbrs, &cfg), 0.0);
    }

    #[test]
    fn bilateral_two_pixel_closed_form() {
        let cfg = GmmConfig {
            sigma_d: 1.0,
            sigma_l: 10.0,
            ..GmmConfig::default()
        };
        let nbrs = Neighborhood::grid8(2, 1);
        let b = bilateral_term(&[0.0, 10.0], &nbrs, &cfg);
        // Each ordered pair contributes 100 e^-0.5 e^-0.5.
        let per_pair = 100.0 * (-1.0f64).exp();
        assert!((b - 2.0 * per_pair).abs() < 1e-9, "got {b}");
    }

    #[test]
    fn bilateral_term_nonnegative() {
        let mut rng = StdRng::seed_from_u64(5);
        let cfg = GmmConfig::default();
        let nbrs = Neighborhood::grid8(3, 3);
        for _ in 0..100 {
            let x: Vec<f64> = (0..9).map(|_| rng.gen_range(-50.0..300.0)).collect();
            assert!(bilateral_term(&x, &nbrs, &cfg) >= 0.0);
        }
    }

    #[test]
    fn unit_step_jumps_to_weighted_mean() {
        let cfg = GmmConfig {
            omega: 0.0,
            lambda: 1.0,
            mu: 0.0,
            alpha: 1.0,
            gd_iterations: 1,
            ..GmmConfig::default()
        };
        let y = vec![10.0, 20.0, 90.0];
        let mut state = single(0.0, 200.0, y.len());
        e_step(&mut state, &y, &cfg).unwrap();
        let row = state.posteriors.clone();
        let target: f64 =
            row.iter().zip(&y).map(|(p, v)| p * v).sum::<f64>() / row.iter().sum::<f64>();
        let nbrs = Neighborhood::grid8(1, 1);
        m_step_centroids(&mut state, &y, &nbrs, &cfg);
        assert!((state.centroids[0] - target).abs() < 1e-12);
    }

    #[test]
    fn geometric_convergence_of_data_term() {
        let cfg = GmmConfig {
            omega: 0.0,
            lambda: 1.0,
            mu: 0.0,
            alpha: 0.1,
            gd_iterations: 50,
            ..GmmConfig::default()
        };
        let y = vec![40.0, 60.0];
        let mut state = single(0.0, 500.0, y.len());
        e_step(&mut state, &y, &cfg).unwrap();
        let mass: f64 = state.posteriors.iter().sum();
        let target: f64 = state
            .posteriors
            .iter()
            .zip(&y)
            .map(|(p, v)| p * v)
            .sum::<f64>()
            / mass;
        let init_gap = target - state.centroids[0];
        let nbrs = Neighborhood::grid8(1, 1);
        m_step_centroids(&mut state, &y, &nbrs, &cfg);
        let expected_gap = 0.9f64.powi(50) * init_gap;
        let got_gap = target - state.centroids[0];
        assert!(
            (got_gap - expected_gap).abs() < 1e-9 * init_gap.abs(),
            "gap {got_gap} vs {expected_gap}"
        );
    }

    #[test]
    fn constant_patch_feels_no_bilateral_force() {
        let cfg = GmmConfig {
            mu: 5.0,
            ..GmmConfig::default()
        };
        let nbrs = Neighborhood::grid8(3, 3);
        let bil = bilateral_direction(&[42.0; 9], &nbrs, &cfg);
        assert!(bil.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn variance_update_weighted_spread() {
        let cfg = GmmConfig::default();
        // |x - y1| = 1, |x - y2| = 3, equal posteriors.
        let mut state = single(0.0, 100.0, 2);
        state.posteriors = vec![0.5, 0.5];
        m_step_variance(&mut state, &[1.0, 3.0], &cfg);
        assert!(
            (state.variances[0] - 5.0).abs() < 1e-12,
            "var {}",
            state.variances[0]
        );
    }

    #[test]
    fn variance_floored_on_collapse() {
        let cfg = GmmConfig {
            variance_floor: 1e-4,
            ..GmmConfig::default()
        };
        let mut state = single(5.0, 100.0, 1);
        state.posteriors = vec![1.0];
        m_step_variance(&mut state, &[5.0], &cfg);
        assert_eq!(state.variances[0], 1e-4);
    }

    #[test]
    fn variance_unchanged_without_mass() {
        let cfg = GmmConfig::default();
        let mut state = single(5.0, 123.0, 2);
        state.posteriors = vec![0.0, 0.0];
        m_step_variance(&mut state, &[0.0, 1.0], &cfg);
        assert_eq!(state.variances[0], 123.0);
    }

    #[test]
    fn q_bound_cases() {
        let cfg = GmmConfig {
            lambda: 1.0,
            dim: 1,
            ..GmmConfig::default()
        };
        let mut state = single(0.0, 1.0, 1);
        state.posteriors = vec![0.0];
        assert_eq!(q_bound(&state, &[2.0], &cfg), 0.0);
        state.posteriors = vec![1.0];
        state.variances[0] = 1.0;
        assert!((q_bound(&state, &[2.0], &cfg) - 2.0).abs() < 1e-12);
        // lambda = 1: combined objective equals Q exactly.
        let nbrs = Neighborhood::grid8(1, 1);
        assert_eq!(
            combined_objective(&state, &[2.0], &nbrs, &cfg),
            q_bound(&state, &[2.0], &cfg)
        );
    }

    fn binary_pair() -> PatchPair {
        // 3x3 two-level patch, observations replicate the same levels.
        let x = vec![0.0, 0.0, 255.0, 0.0, 0.0, 255.0, 0.0, 0.0, 255.0];
        let mut y = Vec::new();
        for i in 0..25 {
            y.push(if i % 5 >= 3 { 255.0 } else { 0.0 });
        }
        PatchPair {
            center: (1, 1),
            x,
            y,
            positions: (0..9).map(|i| (i % 3, i / 3)).collect(),
        }
    }

    #[test]
    fn em_fixed_point_on_self_consistent_patch() {
        let cfg = GmmConfig {
            omega: 0.0,
            mu: 0.0,
            ..GmmConfig::default()
        };
        let pair = binary_pair();
        let nbrs = Neighborhood::grid8(3, 3);
        let out = run_patch_em(&pair, &nbrs, &cfg).unwrap();
        for (a, b) in out.x.iter().zip(&pair.x) {
            assert!((a - b).abs() < 1e-6, "moved from {b} to {a}");
        }
    }

    #[test]
    fn zero_em_iterations_is_noop() {
        let cfg = GmmConfig {
            em_iterations: 0,
            ..GmmConfig::default()
        };
        let pair = binary_pair();
        let nbrs = Neighborhood::grid8(3, 3);
        let out = run_patch_em(&pair, &nbrs, &cfg).unwrap();
        assert_eq!(out.x, pair.x);
    }

    #[test]
    fn em_moves_blurred_edge_toward_sharp() {
        // Blurred 3x3 patch of a vertical step edge (ramp), clean sharp
        // observations; the updated centroids should land closer to the
        // sharp values than the blurred initialization.
        let blurred = vec![64.0, 128.0, 192.0, 64.0, 128.0, 192.0, 64.0, 128.0, 192.0];
        let sharp = vec![0.0, 0.0, 255.0, 0.0, 0.0, 255.0, 0.0, 0.0, 255.0];
        let mut y = Vec::new();
        for i in 0..25 {
            y.push(if i % 5 >= 3 { 255.0 } else { 0.0 });
        }
        let pair = PatchPair {
            center: (1, 1),
            x: blurred.clone(),
            y,
            positions: (0..9).map(|i| (i % 3, i / 3)).collect(),
        };
        let nbrs = Neighborhood::grid8(3, 3);
        let cfg = GmmConfig::default();
        let out = run_patch_em(&pair, &nbrs, &cfg).unwrap();
        let dist = |v: &[f64]| -> f64 {
            v.iter()
                .zip(&sharp)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        assert!(
            dist(&out.x) < dist(&blurred),
            "no improvement: {} vs {}",
            dist(&out.x),
            dist(&blurred)
        );
    }

    #[test]
    fn em_monotone_nll_with_pure_data_term() {
        let mut rng = StdRng::seed_from_u64(11);
        let cfg = GmmConfig {
            lambda: 1.0,
            mu: 0.0,
            gd_iterations: 200,
            omega: 0.02,
            ..GmmConfig::default()
        };
        let nbrs = Neighborhood::grid8(3, 3);
        for _ in 0..20 {
            let x: Vec<f64> = (0..9).map(|_| rng.gen_range(0.0..255.0)).collect();
            let y: Vec<f64> = (0..25).map(|_| rng.gen_range(0.0..255.0)).collect();
            let mut state = GmmState::init(&x, 25, cfg.sigma_init);
            let mut last = nll(&state, &y, &cfg);
            for _ in 0..10 {
                e_step(&mut state, &y, &cfg).unwrap();
                m_step_centroids(&mut state, &y, &nbrs, &cfg);
                m_step_variance(&mut state, &y, &cfg);
                let e = nll(&state, &y, &cfg);
                assert!(
                    e <= last + 1e-7 * last.abs().max(1.0),
                    "nll rose {last} -> {e}"
                );
                last = e;
            }
        }
    }

    #[test]
    fn translation_equivariance() {
        let cfg = GmmConfig::default();
        let nbrs = Neighborhood::grid8(3, 3);
        let pair = binary_pair();
        let shift = 37.0;
        let shifted = PatchPair {
            center: pair.center,
            x: pair.x.iter().map(|v| v + shift).collect(),
            y: pair.y.iter().map(|v| v + shift).collect(),
            positions: pair.positions.clone(),
        };
        let a = run_patch_em(&pair, &nbrs, &cfg).unwrap();
        let b = run_patch_em(&shifted, &nbrs, &cfg).unwrap();
        for (va, vb) in a.x.iter().zip(&b.x) {
            assert!((va + shift - vb).abs() < 1e-9, "{va} + {shift} != {vb}");
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn update_direction_matches_frozen_objective_gradient() {
        // With posteriors and bilateral weights frozen, the update direction
        // scaled by mass/var is the negative gradient of
        //   lambda * Q_data + (1 - lambda) * B_half,
        // where B_half counts each unordered neighbor pair once and the
        // analytic mu is 2 var (1 - lambda) / mass per component.
        let mut rng = StdRng::seed_from_u64(23);
        let cfg = GmmConfig {
            lambda: 0.775,
            omega: 0.02,
            ..GmmConfig::default()
        };
        let nbrs = Neighborhood::grid8(3, 3);
        for _ in 0..20 {
            let x: Vec<f64> = (0..9).map(|_| rng.gen_range(0.0..255.0)).collect();
            let y: Vec<f64> = (0..25).map(|_| rng.gen_range(0.0..255.0)).collect();
            let mut state = GmmState::init(&x, 25, rng.gen_range(100.0..500.0));
            e_step(&mut state, &y, &cfg).unwrap();

            let k = y.len();
            let mass: Vec<f64> = (0..9)
                .map(|j| state.posteriors[j * k..(j + 1) * k].iter().sum())
                .collect();

            // Frozen weights at the current centroids.
            let frozen: Vec<Vec<f64>> = (0..9)
                .map(|j| {
                    nbrs.of(j)
                        .iter()
                        .map(|&(n, dist)| bilateral_weight(dist, x[j] - x[n], &cfg))
                        .collect()
                })
                .collect();
            let objective = |z: &[f64]| -> f64 {
                let mut q = 0.0;
                for j in 0..9 {
                    for (kk, &yk) in y.iter().enumerate() {
                        let p = state.posteriors[j * k + kk];
                        q += p * (yk - z[j]) * (yk - z[j]) / (2.0 * state.variances[j]);
                    }
                }
                let mut b_half = 0.0;
                for j in 0..9 {
                    for (ni, &(n, _)) in nbrs.of(j).iter().enumerate() {
                        let diff = z[j] - z[n];
                        b_half += 0.5 * diff * diff * frozen[j][ni];
                    }
                }
                cfg.lambda * q + (1.0 - cfg.lambda) * b_half
            };

            let data = data_direction(&state.posteriors, &y, &x);
            let bil = bilateral_direction(&x, &nbrs, &cfg);
            let h = 1e-4;
            let mut analytic = [0.0; 9];
            let mut numeric = [0.0; 9];
            for j in 0..9 {
                let mu_j = 2.0 * state.variances[j] * (1.0 - cfg.lambda) / mass[j];
                let u = cfg.lambda * data[j] - mu_j * bil[j];
                analytic[j] = u * mass[j] / state.variances[j];
                let mut zp = x.clone();
                let mut zm = x.clone();
                zp[j] += h;
                zm[j] -= h;
                numeric[j] = -(objective(&zp) - objective(&zm)) / (2.0 * h);
            }
            let err: f64 = analytic
                .iter()
                .zip(&numeric)
                .map(|(a, n)| (a - n) * (a - n))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
            assert!(err / norm.max(1e-9) < 1e-4, "relative error {}", err / norm);
        }
    }
}
