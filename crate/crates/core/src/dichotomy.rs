//! Bisection searches for the weakest damping that prevents blow-up.
//!
//! A trial is one simulation with a candidate profile; it "explodes" when the
//! run ends in any [`Outcome::BlowUp`]. [`algorithm1_constant`] brackets the
//! critical constant damping, [`algorithm3_band`] repeats the search on the
//! modes `|j| > N` of an already damping profile, [`build_staircase`] chains
//! the two over increasing cutoffs, and [`gaussian_envelopes`] fits Gaussian
//! profiles above and below the resulting staircases.

use log::{info, warn};
use serde::Serialize;
use thiserror::Error;

use crate::damping::{
    constant_profile, explicit_profile, gaussian_profile, gaussian_shape, DampingError,
    DampingProfile, DampingSpec,
};
use crate::simulation::{run_with_profile, ConfigError, Outcome, SimulationConfig};
use crate::spectral::Grid;

/// Cap on doublings/halvings while looking for the initial bracket.
pub const MAX_SCALE_STEPS: usize = 60;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search argument: {0}")]
    InvalidArgument(String),
    #[error("no bracket found after {scale_steps} doublings/halvings")]
    BracketNotFound { scale_steps: usize },
    #[error("the base profile does not prevent blow-up")]
    BaseExplodes,
    #[error("trial simulation failed: {0}")]
    TrialFailed(String),
    #[error("no admissible gaussian envelope: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Damping(#[from] DampingError),
}

/// Runs one trial for a candidate profile.
pub trait TrialOracle {
    fn grid(&self) -> &Grid;
    fn run(&self, profile: &DampingProfile) -> Result<Outcome, SearchError>;
}

/// Oracle backed by full simulations of a fixed template.
#[derive(Debug, Clone)]
pub struct SimulationOracle {
    template: SimulationConfig,
}

impl SimulationOracle {
    pub fn new(template: SimulationConfig) -> Result<Self, SearchError> {
        template.validate()?;
        Ok(Self { template })
    }

    pub fn template(&self) -> &SimulationConfig {
        &self.template
    }
}

impl TrialOracle for SimulationOracle {
    fn grid(&self) -> &Grid {
        &self.template.grid
    }

    fn run(&self, profile: &DampingProfile) -> Result<Outcome, SearchError> {
        let report = run_with_profile(&self.template, profile)?;
        Ok(report.outcome)
    }
}

/// Oracle defined by a closure, for synthetic frontiers.
pub struct FnOracle<F> {
    grid: Grid,
    f: F,
}

impl<F: Fn(&DampingProfile) -> Outcome> FnOracle<F> {
    pub fn new(grid: Grid, f: F) -> Self {
        Self { grid, f }
    }
}

impl<F: Fn(&DampingProfile) -> Outcome> TrialOracle for FnOracle<F> {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn run(&self, profile: &DampingProfile) -> Result<Outcome, SearchError> {
        Ok((self.f)(profile))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchKind {
    Constant,
    Band,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trial {
    /// Searched scalar: the constant value, or the tail level for band searches.
    pub level: f64,
    pub gamma_spec: DampingSpec,
    pub outcome: Outcome,
}

impl Trial {
    pub fn explodes(&self) -> bool {
        self.outcome.is_blow_up()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DichotomyResult {
    pub kind: SearchKind,
    /// Band searches only: modes `|j| > cutoff` were varied.
    pub cutoff: Option<i64>,
    pub gamma_a: f64,
    /// `None` when the band search returned early because a zero tail damps.
    pub gamma_e: Option<f64>,
    pub profile_a: DampingProfile,
    pub profile_e: Option<DampingProfile>,
    pub trials: Vec<Trial>,
    pub scale_steps: usize,
    pub iterations: usize,
}

impl DichotomyResult {
    pub fn width(&self) -> Option<f64> {
        self.gamma_e.map(|e| self.gamma_a - e)
    }
}

/// Pairs of trials where a larger level exploded while a smaller one damped.
pub fn monotonicity_violations(trials: &[Trial]) -> usize {
    let mut count = 0;
    for hi in trials.iter().filter(|t| t.explodes()) {
        count += trials
            .iter()
            .filter(|lo| !lo.explodes() && lo.level < hi.level)
            .count();
    }
    count
}

struct TrialLog<'a, O: TrialOracle + ?Sized> {
    oracle: &'a O,
    trials: Vec<Trial>,
}

impl<'a, O: TrialOracle + ?Sized> TrialLog<'a, O> {
    fn new(oracle: &'a O) -> Self {
        Self {
            oracle,
            trials: Vec::new(),
        }
    }

    fn explodes(&mut self, level: f64, profile: &DampingProfile) -> Result<bool, SearchError> {
        let outcome = self.oracle.run(profile)?;
        if let Outcome::Failure { description } = &outcome {
            return Err(SearchError::TrialFailed(description.clone()));
        }
        let explodes = outcome.is_blow_up();
        info!(
            "trial level {level:.6e}: {}",
            if explodes { "blow-up" } else { "damped" }
        );
        self.trials.push(Trial {
            level,
            gamma_spec: profile.spec().clone(),
            outcome,
        });
        Ok(explodes)
    }

    fn finish(self) -> Vec<Trial> {
        let violations = monotonicity_violations(&self.trials);
        if violations > 0 {
            warn!("{violations} trial pairs contradict monotonicity of blow-up in the damping level");
        }
        self.trials
    }
}

/// Bracket the critical constant damping: scale `gamma0` by 2 until the
/// outcome flips, then bisect until `gamma_a - gamma_e <= eps`.
pub fn algorithm1_constant<O: TrialOracle + ?Sized>(
    gamma0: f64,
    eps: f64,
    oracle: &O,
) -> Result<DichotomyResult, SearchError> {
    if !(gamma0.is_finite() && gamma0 > 0.0) {
        return Err(SearchError::InvalidArgument(format!(
            "gamma0 must be positive, got {gamma0}"
        )));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(SearchError::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let grid = *oracle.grid();
    let mut log = TrialLog::new(oracle);
    let trial = |log: &mut TrialLog<O>, g: f64| -> Result<bool, SearchError> {
        log.explodes(g, &constant_profile(&grid, g)?)
    };

    let mut gamma = gamma0;
    let mut scale_steps = 0;
    let (mut a, mut e);
    if trial(&mut log, gamma)? {
        loop {
            if scale_steps == MAX_SCALE_STEPS {
                return Err(SearchError::BracketNotFound { scale_steps });
            }
            gamma *= 2.0;
            scale_steps += 1;
            if !trial(&mut log, gamma)? {
                break;
            }
        }
        a = gamma;
        e = gamma / 2.0;
    } else {
        loop {
            if scale_steps == MAX_SCALE_STEPS {
                return Err(SearchError::BracketNotFound { scale_steps });
            }
            gamma /= 2.0;
            scale_steps += 1;
            if trial(&mut log, gamma)? {
                break;
            }
        }
        e = gamma;
        a = 2.0 * gamma;
    }

    let mut iterations = 0;
    while (a - e).abs() > eps {
        let mid = 0.5 * (a + e);
        if trial(&mut log, mid)? {
            e = mid;
        } else {
            a = mid;
        }
        iterations += 1;
    }
    Ok(DichotomyResult {
        kind: SearchKind::Constant,
        cutoff: None,
        gamma_a: a,
        gamma_e: Some(e),
        profile_a: constant_profile(&grid, a)?,
        profile_e: Some(constant_profile(&grid, e)?),
        trials: log.finish(),
        scale_steps,
        iterations,
    })
}

// `base` with every entry |j| > cutoff multiplied by `scale`.
fn with_tail(base: &DampingProfile, cutoff: i64, scale: f64) -> Result<DampingProfile, DampingError> {
    let values = base
        .by_abs_mode()
        .iter()
        .enumerate()
        .map(|(a, g)| if a as i64 > cutoff { g * scale } else { *g })
        .collect();
    explicit_profile(base.grid(), values)
}

/// Tail search on modes `|j| > cutoff` of a damping `base` profile: try a
/// zero tail, else halve the tail until blow-up and bisect `nb_iter` times.
/// One extra trial first confirms that `base` itself damps.
pub fn algorithm3_band<O: TrialOracle + ?Sized>(
    base: &DampingProfile,
    cutoff: i64,
    nb_iter: usize,
    oracle: &O,
) -> Result<DichotomyResult, SearchError> {
    band_search(base, cutoff, nb_iter, oracle, true)
}

fn band_search<O: TrialOracle + ?Sized>(
    base: &DampingProfile,
    cutoff: i64,
    nb_iter: usize,
    oracle: &O,
    verify_base: bool,
) -> Result<DichotomyResult, SearchError> {
    let grid = *oracle.grid();
    if *base.grid() != grid {
        return Err(SearchError::InvalidArgument(
            "base profile and oracle use different grids".into(),
        ));
    }
    if !(cutoff > 0 && cutoff < grid.max_mode()) {
        return Err(SearchError::InvalidArgument(format!(
            "cutoff must lie in (0, {}), got {cutoff}",
            grid.max_mode()
        )));
    }
    // tail levels are reported relative to the first tail mode
    let tail_level = base.gamma(cutoff + 1);
    let mut log = TrialLog::new(oracle);
    if verify_base && log.explodes(tail_level, base)? {
        return Err(SearchError::BaseExplodes);
    }

    let zero_tail = with_tail(base, cutoff, 0.0)?;
    if !log.explodes(0.0, &zero_tail)? {
        return Ok(DichotomyResult {
            kind: SearchKind::Band,
            cutoff: Some(cutoff),
            gamma_a: 0.0,
            gamma_e: None,
            profile_a: zero_tail,
            profile_e: None,
            trials: log.finish(),
            scale_steps: 0,
            iterations: 0,
        });
    }

    let mut scale = 1.0;
    let mut scale_steps = 0;
    loop {
        if scale_steps == MAX_SCALE_STEPS {
            return Err(SearchError::BracketNotFound { scale_steps });
        }
        scale /= 2.0;
        scale_steps += 1;
        if log.explodes(scale * tail_level, &with_tail(base, cutoff, scale)?)? {
            break;
        }
    }
    let mut e = scale;
    let mut a = 2.0 * scale;
    for _ in 0..nb_iter {
        let mid = 0.5 * (a + e);
        if log.explodes(mid * tail_level, &with_tail(base, cutoff, mid)?)? {
            e = mid;
        } else {
            a = mid;
        }
    }
    Ok(DichotomyResult {
        kind: SearchKind::Band,
        cutoff: Some(cutoff),
        gamma_a: a * tail_level,
        gamma_e: Some(e * tail_level),
        profile_a: with_tail(base, cutoff, a)?,
        profile_e: Some(with_tail(base, cutoff, e)?),
        trials: log.finish(),
        scale_steps,
        iterations: nb_iter,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaircaseResult {
    pub cutoffs: Vec<i64>,
    pub constant: DichotomyResult,
    pub bands: Vec<DichotomyResult>,
    /// Final damping staircase (the `gamma_a` levels).
    pub profile_a: DampingProfile,
    /// Matching `gamma_e` levels; zero on bands where a zero tail damped.
    pub profile_e: DampingProfile,
}

impl StaircaseResult {
    pub fn trial_count(&self) -> usize {
        self.constant.trials.len() + self.bands.iter().map(|b| b.trials.len()).sum::<usize>()
    }
}

/// Constant search followed by tail searches at each cutoff in turn, each
/// starting from the previous damping profile.
pub fn build_staircase<O: TrialOracle + ?Sized>(
    cutoffs: &[i64],
    gamma0: f64,
    eps: f64,
    nb_iter: usize,
    oracle: &O,
) -> Result<StaircaseResult, SearchError> {
    let grid = *oracle.grid();
    let mut prev = 0;
    for &c in cutoffs {
        if c <= prev || c >= grid.max_mode() {
            return Err(SearchError::InvalidArgument(format!(
                "cutoffs must be strictly increasing within (0, {}): {cutoffs:?}",
                grid.max_mode()
            )));
        }
        prev = c;
    }
    let constant = algorithm1_constant(gamma0, eps, oracle)?;
    let mut profile = constant.profile_a.clone();
    let mut bands = Vec::with_capacity(cutoffs.len());
    for &c in cutoffs {
        let band = band_search(&profile, c, nb_iter, oracle, false)?;
        profile = band.profile_a.clone();
        bands.push(band);
    }

    let mut lower = vec![constant.gamma_e.unwrap_or(0.0); grid.max_mode() as usize + 1];
    for band in &bands {
        let c = band.cutoff.expect("band result") as usize;
        let level = band.gamma_e.unwrap_or(0.0);
        lower.iter_mut().skip(c + 1).for_each(|v| *v = level);
    }
    Ok(StaircaseResult {
        cutoffs: cutoffs.to_vec(),
        constant,
        bands,
        profile_a: profile,
        profile_e: explicit_profile(&grid, lower)?,
    })
}

fn width_candidates(grid: &Grid) -> Vec<f64> {
    let lo = grid.wavenumber(1) / 2.0;
    let hi = 4.0 * grid.wavenumber(grid.max_mode());
    let n = 400;
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Gaussian profiles `a exp(-k^2 / (2 sigma^2))` bracketing a staircase:
/// `gamma_1 >= profile_a` at every mode with the least total damping, and
/// `gamma_2 <= profile_e` wherever `profile_e > 0` with the most. The width
/// is scanned on a log grid and the amplitude is the tightest feasible one.
pub fn gaussian_envelopes(
    stair: &StaircaseResult,
) -> Result<(DampingProfile, DampingProfile), SearchError> {
    let grid = *stair.profile_a.grid();
    let upper = stair.profile_a.by_abs_mode();
    let lower = stair.profile_e.by_abs_mode();
    if upper.windows(2).any(|w| w[1] > w[0]) {
        return Err(SearchError::Infeasible("staircase is not non-increasing".into()));
    }
    let ks: Vec<f64> = (0..=grid.max_mode()).map(|a| grid.wavenumber(a)).collect();

    let mut best_above: Option<(f64, f64, f64)> = None;
    let mut best_below: Option<(f64, f64, f64)> = None;
    for sigma in width_candidates(&grid) {
        let shape: Vec<f64> = ks.iter().map(|k| gaussian_shape(*k, sigma)).collect();
        let total: f64 = shape.iter().sum();

        let amp_above = upper
            .iter()
            .zip(&shape)
            .filter(|(g, _)| **g > 0.0)
            .map(|(g, s)| g / s)
            .fold(0.0, f64::max);
        if amp_above.is_finite() && best_above.is_none_or(|(_, _, t)| amp_above * total < t) {
            best_above = Some((amp_above, sigma, amp_above * total));
        }

        let amp_below = lower
            .iter()
            .zip(&shape)
            .filter(|(g, _)| **g > 0.0)
            .map(|(g, s)| g / s)
            .fold(f64::INFINITY, f64::min);
        if amp_below.is_finite() && best_below.is_none_or(|(_, _, t)| amp_below * total > t) {
            best_below = Some((amp_below, sigma, amp_below * total));
        }
    }
    let (a1, s1, _) =
        best_above.ok_or_else(|| SearchError::Infeasible("no dominating gaussian".into()))?;
    let (a2, s2, _) = best_below
        .ok_or_else(|| SearchError::Infeasible("lower staircase vanishes everywhere".into()))?;

    // nudge amplitudes so rounding cannot break the pointwise ordering
    let above = gaussian_profile(&grid, a1 * (1.0 + 1e-12), s1)?;
    let below = gaussian_profile(&grid, a2 * (1.0 - 1e-12), s2)?;
    for (j, ((g1, g2), (ua, le))) in above
        .by_abs_mode()
        .iter()
        .zip(below.by_abs_mode())
        .zip(upper.iter().zip(lower))
        .enumerate()
    {
        if g1 < ua {
            return Err(SearchError::Infeasible(format!("gamma_1 below staircase at |j| = {j}")));
        }
        if *le > 0.0 && g2 > le {
            return Err(SearchError::Infeasible(format!("gamma_2 above staircase at |j| = {j}")));
        }
    }
    Ok((above, below))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::BlowUpTrigger;

    fn blow_up() -> Outcome {
        Outcome::BlowUp {
            t_detect: 1.0,
            trigger: BlowUpTrigger::H1Ratio,
        }
    }

    fn completed() -> Outcome {
        Outcome::Completed { t_end: 20.0 }
    }

    fn grid() -> Grid {
        Grid::new(50.0, 64).unwrap()
    }

    #[test]
    fn constant_search_against_step() {
        let oracle = FnOracle::new(grid(), |p: &DampingProfile| {
            if p.gamma(0) < 0.5 {
                blow_up()
            } else {
                completed()
            }
        });
        let r = algorithm1_constant(0.1, 0.01, &oracle).unwrap();
        let e = r.gamma_e.unwrap();
        assert!(r.gamma_a - e <= 0.01);
        assert!(e <= 0.5 && 0.5 <= r.gamma_a);
        assert_eq!(r.scale_steps, 3);
        // 0.1 -> 0.8, bracket [0.4, 0.8], 0.4 / 2^6 = 0.00625
        assert_eq!(r.iterations, 6);
        assert_eq!(r.trials.len(), 1 + 3 + 6);
        assert_eq!(monotonicity_violations(&r.trials), 0);
    }

    #[test]
    fn constant_search_from_above() {
        let oracle = FnOracle::new(grid(), |p: &DampingProfile| {
            if p.gamma(3) < 0.3 {
                blow_up()
            } else {
                completed()
            }
        });
        let r = algorithm1_constant(5.0, 1e-3, &oracle).unwrap();
        assert!(r.gamma_e.unwrap() <= 0.3 && 0.3 <= r.gamma_a);
        assert!(r.width().unwrap() <= 1e-3);
    }

    #[test]
    fn never_exploding_oracle_has_no_bracket() {
        let oracle = FnOracle::new(grid(), |_: &DampingProfile| completed());
        match algorithm1_constant(0.01, 1e-4, &oracle) {
            Err(SearchError::BracketNotFound { scale_steps }) => {
                assert_eq!(scale_steps, MAX_SCALE_STEPS)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn argument_checks() {
        let oracle = FnOracle::new(grid(), |_: &DampingProfile| completed());
        assert!(matches!(
            algorithm1_constant(0.0, 1e-3, &oracle),
            Err(SearchError::InvalidArgument(_))
        ));
        assert!(matches!(
            algorithm1_constant(0.1, 0.0, &oracle),
            Err(SearchError::InvalidArgument(_))
        ));
        let base = constant_profile(&grid(), 1.0).unwrap();
        assert!(algorithm3_band(&base, 32, 3, &oracle).is_err());
        assert!(build_staircase(&[16, 8], 0.1, 0.01, 3, &oracle).is_err());
    }

    #[test]
    fn failure_outcome_aborts_search() {
        let oracle = FnOracle::new(grid(), |_: &DampingProfile| Outcome::Failure {
            description: "boom".into(),
        });
        assert!(matches!(
            algorithm1_constant(0.1, 0.01, &oracle),
            Err(SearchError::TrialFailed(_))
        ));
    }

    #[test]
    fn band_search_returns_early_when_tail_is_irrelevant() {
        let oracle = FnOracle::new(grid(), |p: &DampingProfile| {
            if p.gamma(0) < 0.5 {
                blow_up()
            } else {
                completed()
            }
        });
        let base = constant_profile(&grid(), 1.0).unwrap();
        let r = band_search(&base, 10, 5, &oracle, false).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.gamma_a, 0.0);
        assert_eq!(r.gamma_e, None);
        assert_eq!(r.profile_a.gamma(11), 0.0);
        assert_eq!(r.profile_a.gamma(10), 1.0);
    }

    #[test]
    fn band_search_against_tail_step() {
        let oracle = FnOracle::new(grid(), |p: &DampingProfile| {
            if p.gamma(20) < 0.2 {
                blow_up()
            } else {
                completed()
            }
        });
        let base = constant_profile(&grid(), 1.0).unwrap();
        let r = algorithm3_band(&base, 10, 10, &oracle).unwrap();
        let e = r.gamma_e.unwrap();
        // 1 -> 0.5 -> 0.25 -> 0.125 explodes: bracket 0.125 wide, then 10 halvings
        assert!((r.gamma_a - e - 0.125 / 1024.0).abs() < 1e-15);
        assert!(e <= 0.2 && 0.2 <= r.gamma_a);
        assert_eq!(r.trials.len(), 1 + 1 + 3 + 10);
        assert!(r.profile_a.by_abs_mode()[..=10].iter().all(|g| *g == 1.0));
    }

    #[test]
    fn band_search_rejects_exploding_base() {
        let oracle = FnOracle::new(grid(), |_: &DampingProfile| blow_up());
        let base = constant_profile(&grid(), 1.0).unwrap();
        assert!(matches!(
            algorithm3_band(&base, 10, 3, &oracle),
            Err(SearchError::BaseExplodes)
        ));
    }

    #[test]
    fn staircase_of_two_thresholds() {
        // needs gamma >= 0.5 on |j| <= 8 and >= 0.1 beyond
        let oracle = FnOracle::new(grid(), |p: &DampingProfile| {
            if p.gamma(0) < 0.5 || p.gamma(20) < 0.1 {
                blow_up()
            } else {
                completed()
            }
        });
        let stair = build_staircase(&[8], 0.3, 1e-3, 12, &oracle).unwrap();
        let a = stair.profile_a.by_abs_mode();
        let e = stair.profile_e.by_abs_mode();
        assert!(a[0] >= 0.5 && a[0] - 0.5 <= 1e-3);
        assert!(e[0] <= 0.5);
        assert!(a[9] >= 0.1 && a[9] - 0.1 < 1e-3);
        assert!(e[9] <= 0.1);
        assert!(a.windows(2).all(|w| w[1] <= w[0]));

        let empty = build_staircase(&[], 0.3, 1e-3, 12, &oracle).unwrap();
        assert!(empty.bands.is_empty());
        assert_eq!(empty.profile_a, empty.constant.profile_a);
    }

    #[test]
    fn envelopes_of_constant_staircase() {
        let g = grid();
        let oracle = FnOracle::new(g, |p: &DampingProfile| {
            if p.gamma(0) < 0.5 {
                blow_up()
            } else {
                completed()
            }
        });
        let stair = build_staircase(&[], 0.3, 1e-3, 5, &oracle).unwrap();
        let (g1, g2) = gaussian_envelopes(&stair).unwrap();
        for j in 0..=g.max_mode() {
            assert!(g1.gamma(j) >= stair.profile_a.gamma(j));
            assert!(g2.gamma(j) <= stair.profile_e.gamma(j));
        }
    }

    #[test]
    fn envelopes_with_zero_tail() {
        let g = grid();
        let oracle = FnOracle::new(g, |p: &DampingProfile| {
            if p.gamma(0) < 0.5 {
                blow_up()
            } else {
                completed()
            }
        });
        let stair = build_staircase(&[6], 0.3, 1e-3, 5, &oracle).unwrap();
        assert_eq!(stair.profile_a.gamma(7), 0.0);
        let (g1, g2) = gaussian_envelopes(&stair).unwrap();
        assert!(g2.gamma(0) > 0.0);
        for j in 0..=6 {
            assert!(g1.gamma(j) >= stair.profile_a.gamma(j));
            assert!(g2.gamma(j) <= stair.profile_e.gamma(j));
        }
    }

    #[test]
    fn monotonicity_counter() {
        let g = grid();
        let mk = |level: f64, outcome: Outcome| Trial {
            level,
            gamma_spec: constant_profile(&g, level).unwrap().spec().clone(),
            outcome,
        };
        let trials = vec![mk(0.1, completed()), mk(0.2, blow_up()), mk(0.3, completed())];
        assert_eq!(monotonicity_violations(&trials), 1);
    }
}
