//! The streaming engine.
//!
//! Every tick the current window is fitted against the active regime. A poor
//! fit triggers a search over all known regimes and, failing that, the
//! creation of a new one from the window. The chosen regime then forecasts
//! `l_s` steps ahead, yields the causal adjacency of its demixing matrix and,
//! unless it was just created, is nudged towards the newest sample.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::causal::{identify_causality, CausalAdjacency, CausalDigraph, CausalEstimate};
use crate::dynamics::{
    estimate_factor, evolve, forgetting_weights, reconstruct, refresh_eigen, rls_step_in_place, LatentState,
    SelfDynamicsFactor, TransitionState,
};
use crate::embedding::embed;
use crate::error::{Error, Result};
use crate::ica::{fixed_point_ica, DemixingMatrix, IcaConfig};
use crate::linalg::{checked_inverse, complex_pinv, C64};
use crate::lm::{minimize, LmConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Length `N` of the sliding window.
    pub n_window: usize,
    pub h: usize,
    pub mu: f64,
    /// Fit threshold per variable and per scored sample; see [`EngineConfig::tau`].
    pub tau_unit: f64,
    pub l_s: usize,
    pub edge_threshold: f64,
    pub lm: LmConfig,
    /// LM budget for each candidate during a regime search.
    pub search_lm_iter: usize,
    pub ica: IcaConfig,
    pub seed: u64,
    /// Ablation: use the identity as demixing matrix and never update it.
    pub identity_demixing: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n_window: 50,
            h: 10,
            mu: 0.98,
            tau_unit: 1.0,
            l_s: 5,
            edge_threshold: 0.3,
            lm: LmConfig::default(),
            search_lm_iter: 10,
            ica: IcaConfig::default(),
            seed: 0,
            identity_demixing: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.h == 0 || self.n_window <= self.h + 2 {
            return bad(format!("need 1 <= h and n_window > h + 2 (h={}, n_window={})", self.h, self.n_window));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return bad(format!("mu={} outside (0, 1]", self.mu));
        }
        if !(self.tau_unit > 0.0) {
            return bad(format!("tau_unit={} must be positive", self.tau_unit));
        }
        if self.l_s == 0 {
            return bad("l_s must be >= 1".into());
        }
        if !(self.edge_threshold >= 0.0 && self.edge_threshold.is_finite()) {
            return bad(format!("edge_threshold={} must be finite and >= 0", self.edge_threshold));
        }
        if self.search_lm_iter == 0 {
            return bad("search_lm_iter must be >= 1".into());
        }
        self.lm.validate()?;
        self.ica.validate()
    }

    /// Number of window columns that enter the fit error.
    pub fn scored_len(&self) -> usize {
        self.n_window - self.h + 1
    }

    /// `τ = tau_unit · d · scored_len`.
    pub fn tau(&self, d: usize) -> f64 {
        self.tau_unit * d as f64 * self.scored_len() as f64
    }
}

/// Demixing matrix plus one dynamics factor per extracted signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    w: DemixingMatrix,
    w_inv: DMatrix<f64>,
    factors: Vec<SelfDynamicsFactor>,
    /// Number of modes requested from each refresh, fixed at creation.
    ranks: Vec<usize>,
    stale: Vec<bool>,
    defective: Vec<bool>,
}

impl Regime {
    pub fn new(w: DMatrix<f64>, factors: Vec<SelfDynamicsFactor>) -> Result<Self> {
        let d = w.nrows();
        if w.ncols() != d || factors.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} demixing matrix with {} factors",
                d,
                w.ncols(),
                factors.len()
            )));
        }
        let w_inv = checked_inverse(&w)?;
        let ranks = factors.iter().map(|f| f.rank()).collect();
        Ok(Self { w: DemixingMatrix(w), w_inv, factors, ranks, stale: vec![false; d], defective: vec![false; d] })
    }

    pub fn dim(&self) -> usize {
        self.w.dim()
    }

    pub fn demixing(&self) -> &DMatrix<f64> {
        &self.w.0
    }

    pub fn mixing(&self) -> &DMatrix<f64> {
        &self.w_inv
    }

    pub fn factors(&self) -> &[SelfDynamicsFactor] {
        &self.factors
    }

    pub fn is_stale(&self) -> bool {
        self.stale.iter().any(|s| *s)
    }

    /// Signals whose last refresh fell back to a non-eigen basis.
    pub fn defective(&self) -> &[bool] {
        &self.defective
    }

    fn set_demixing(&mut self, w: DMatrix<f64>) -> Result<()> {
        self.w_inv = checked_inverse(&w)?;
        self.w = DemixingMatrix(w);
        Ok(())
    }

    /// Recompute the factors whose transition matrix changed since the last read.
    fn refresh(&mut self, update: &UpdateState) -> Result<()> {
        for i in 0..self.dim() {
            if self.stale[i] {
                let (factor, flags) = refresh_eigen(&update.transitions[i], self.ranks[i])?;
                self.factors[i] = factor;
                self.defective[i] = flags.defective;
                self.stale[i] = false;
            }
        }
        Ok(())
    }
}

/// Streaming state of one regime: per-signal transition/inverse-Gram pairs
/// and row energies of the demixing tracker.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateState {
    pub transitions: Vec<TransitionState>,
    pub energy: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegimeSet {
    regimes: Vec<Regime>,
    update_states: Vec<UpdateState>,
}

impl RegimeSet {
    pub fn len(&self) -> usize {
        self.regimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regimes.is_empty()
    }

    pub fn regimes(&self) -> &[Regime] {
        &self.regimes
    }

    pub fn update_states(&self) -> &[UpdateState] {
        &self.update_states
    }

    pub fn push(&mut self, regime: Regime, update: UpdateState) -> usize {
        self.regimes.push(regime);
        self.update_states.push(update);
        self.regimes.len() - 1
    }

    fn fresh(&mut self, idx: usize) -> Result<&Regime> {
        let regime = &mut self.regimes[idx];
        regime.refresh(&self.update_states[idx])?;
        Ok(regime)
    }
}

/// The active regime and its fitted latent states.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCandidate {
    pub active: usize,
    /// Latent states at the first scored column of the window.
    pub s0: Vec<LatentState>,
    /// Latent states at the newest column.
    pub s_en: Vec<LatentState>,
    /// 1-based tick of the oldest window column.
    pub window_start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// 1-based tick this output belongs to.
    pub t: usize,
    /// Prediction for tick `t + l_s`.
    pub forecast: Vec<f64>,
    pub causal: CausalAdjacency,
    pub digraph: CausalDigraph,
    pub regime_id: usize,
    pub created_new: bool,
    /// Moved to a different, already known regime.
    pub switched: bool,
    pub fit_error: f64,
}

/// `Σ_t ‖x(t) − W⁻¹ e(t)‖` over window columns `h−1 ..`, with `e` rolled
/// forward from `s0` one step per column.
pub fn fit_error(window: &DMatrix<f64>, s0: &[LatentState], regime: &Regime) -> Result<f64> {
    let (d, m) = window.shape();
    let h = check_fit_inputs(window, regime)?;
    if s0.len() != d {
        return Err(Error::DimensionMismatch(format!("{} latent states for d={d}", s0.len())));
    }
    let mut f = 0.0;
    for tau in 0..(m + 1 - h) {
        let mut e = DVector::zeros(d);
        for i in 0..d {
            e[i] = reconstruct(&evolve(&s0[i], &regime.factors[i], tau as u32), &regime.factors[i])?;
        }
        f += (window.column(h - 1 + tau) - &regime.w_inv * e).norm();
    }
    Ok(f)
}

fn check_fit_inputs(window: &DMatrix<f64>, regime: &Regime) -> Result<usize> {
    let (d, m) = window.shape();
    if d != regime.dim() {
        return Err(Error::DimensionMismatch(format!("window has {d} rows, regime has {}", regime.dim())));
    }
    let h = regime.factors.first().map(|f| f.h()).unwrap_or(1);
    if m < h {
        return Err(Error::InvalidInput(format!("window of {m} columns is shorter than h={h}")));
    }
    Ok(h)
}

/// `Φ_i† g(e_i)` at the first scored column, with `e = W x`.
pub fn warm_start(window: &DMatrix<f64>, regime: &Regime) -> Result<Vec<LatentState>> {
    let h = check_fit_inputs(window, regime)?;
    let e = &regime.w.0 * window.columns(0, h);
    Ok(regime
        .factors
        .iter()
        .enumerate()
        .map(|(i, factor)| {
            let g = DVector::from_iterator(h, (0..h).map(|k| C64::new(e[(i, h - 1 - k)], 0.0)));
            LatentState(complex_pinv(&factor.phi) * g)
        })
        .collect())
}

fn pack(s0: &[LatentState]) -> DVector<f64> {
    let parts: Vec<f64> = s0.iter().flat_map(|s| s.0.iter().flat_map(|z| [z.re, z.im])).collect();
    DVector::from_vec(parts)
}

fn unpack(p: &DVector<f64>, regime: &Regime) -> Vec<LatentState> {
    let mut k = 0;
    regime
        .factors
        .iter()
        .map(|f| {
            let s = DVector::from_fn(f.rank(), |j, _| C64::new(p[k + 2 * j], p[k + 2 * j + 1]));
            k += 2 * f.rank();
            LatentState(s)
        })
        .collect()
}

/// The model window is linear in the real parameters, `v = G p`; rows are
/// ordered column-major over the scored window (`τ · d + l`).
fn design(window: &DMatrix<f64>, regime: &Regime, h: usize) -> (DMatrix<f64>, DVector<f64>) {
    let (d, m) = window.shape();
    let scored = m + 1 - h;
    let n_par: usize = regime.factors.iter().map(|f| 2 * f.rank()).sum();
    let mut g = DMatrix::zeros(d * scored, n_par);
    let mut col = 0;
    for (i, factor) in regime.factors.iter().enumerate() {
        for j in 0..factor.rank() {
            let mut c = factor.phi[(0, j)];
            for tau in 0..scored {
                for l in 0..d {
                    g[(tau * d + l, col)] = regime.w_inv[(l, i)] * c.re;
                    g[(tau * d + l, col + 1)] = -regime.w_inv[(l, i)] * c.im;
                }
                c *= factor.lambda[j];
            }
            col += 2;
        }
    }
    let target = DVector::from_iterator(d * scored, window.columns(h - 1, scored).iter().copied());
    (g, target)
}

fn norm_sum(r: &DVector<f64>, d: usize) -> f64 {
    r.as_slice().chunks(d).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialStateFit {
    pub s0: Vec<LatentState>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Levenberg-Marquardt over the real and imaginary parts of every initial
/// latent state. Never returns a worse fit error than its starting point.
pub fn optimize_initial_state(
    window: &DMatrix<f64>,
    regime: &Regime,
    s0_init: Option<&[LatentState]>,
    lm: &LmConfig,
) -> Result<InitialStateFit> {
    let h = check_fit_inputs(window, regime)?;
    if window.ncols() < h + 1 {
        return Err(Error::InvalidInput(format!("window of {} columns needs at least h + 1", window.ncols())));
    }
    let d = window.nrows();
    let start = match s0_init {
        Some(s) => {
            if s.len() != d || s.iter().zip(&regime.factors).any(|(s, f)| s.0.len() != f.rank()) {
                return Err(Error::DimensionMismatch("initial latent states do not match the regime".into()));
            }
            s.to_vec()
        }
        None => warm_start(window, regime)?,
    };
    let (g, target) = design(window, regime, h);
    let p0 = pack(&start);
    let f0 = norm_sum(&(&target - &g * &p0), d);
    if !f0.is_finite() {
        return Err(Error::NonFinite("fit residuals".into()));
    }
    let neg_g = -&g;
    let out = minimize(p0, lm, |p| (&target - &g * p, neg_g.clone()))?;
    let f1 = norm_sum(&(&target - &g * &out.params), d);
    if f1 <= f0 {
        Ok(InitialStateFit { s0: unpack(&out.params, regime), f: f1, iterations: out.iterations, converged: out.converged })
    } else {
        Ok(InitialStateFit { s0: start, f: f0, iterations: out.iterations, converged: out.converged })
    }
}

/// Build a regime from one window: demixing, then a dynamics factor and
/// streaming state per extracted signal.
pub fn regime_creation(window: &DMatrix<f64>, cfg: &EngineConfig, seed: u64) -> Result<(Regime, UpdateState)> {
    let (d, m) = window.shape();
    if m < cfg.h + 2 {
        return Err(Error::InvalidInput(format!("window of {m} columns is shorter than h + 2 = {}", cfg.h + 2)));
    }
    if m < 10 * d {
        log::debug!("creating a regime from {m} samples for {d} variables");
    }
    let w = if cfg.identity_demixing {
        DMatrix::identity(d, d)
    } else {
        fixed_point_ica(window, &IcaConfig { seed, ..cfg.ica })?.w.0
    };
    let e = &w * window;
    let weights = forgetting_weights(m, cfg.mu);
    let mut factors = Vec::with_capacity(d);
    let mut transitions = Vec::with_capacity(d);
    let mut energy = Vec::with_capacity(d);
    for i in 0..d {
        let row: Vec<f64> = e.row(i).iter().copied().collect();
        let (factor, state) = estimate_factor(&row, cfg.h, cfg.mu)?;
        factors.push(factor);
        transitions.push(state);
        energy.push(row.iter().zip(&weights).map(|(v, w)| w * v * v).sum());
    }
    Ok((Regime::new(w, factors)?, UpdateState { transitions, energy }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutcome {
    pub candidate: ModelCandidate,
    pub created: bool,
    pub switched: bool,
    pub fit_error: f64,
}

/// Fit the active regime, search all regimes if the fit exceeds `τ`, and
/// create a new regime if none fits.
pub fn mode_estimator(
    window: &DMatrix<f64>,
    regimes: &mut RegimeSet,
    previous: Option<&ModelCandidate>,
    window_start: usize,
    cfg: &EngineConfig,
) -> Result<EstimatorOutcome> {
    let d = window.nrows();
    let tau = cfg.tau(d);
    let mut best: Option<(usize, InitialStateFit)> = None;

    if let Some(prev) = previous {
        let active = prev.active;
        let fit = optimize_initial_state(window, regimes.fresh(active)?, None, &cfg.lm)?;
        let mut chosen = (active, fit);
        if chosen.1.f > tau {
            let quick = LmConfig { max_iter: cfg.search_lm_iter.min(cfg.lm.max_iter), ..cfg.lm };
            let mut argmin: Option<(usize, InitialStateFit)> = None;
            for r in 0..regimes.len() {
                let q = optimize_initial_state(window, regimes.fresh(r)?, None, &quick)?;
                if argmin.as_ref().is_none_or(|(_, b)| q.f < b.f) {
                    argmin = Some((r, q));
                }
            }
            let (r, q) = argmin.expect("at least one regime");
            if r != active {
                let polished = optimize_initial_state(window, &regimes.regimes[r], Some(&q.s0), &cfg.lm)?;
                if polished.f < chosen.1.f {
                    chosen = (r, polished);
                }
            }
        }
        if chosen.1.f <= tau {
            best = Some(chosen);
        }
    }

    let (active, fit, created) = match best {
        Some((a, fit)) => (a, fit, false),
        None => {
            let seed = cfg.seed.wrapping_add(regimes.len() as u64);
            let (regime, update) = regime_creation(window, cfg, seed)?;
            let fit = optimize_initial_state(window, &regime, None, &cfg.lm)?;
            (regimes.push(regime, update), fit, true)
        }
    };
    let switched = !created && previous.is_some_and(|p| p.active != active);
    let regime = &regimes.regimes[active];
    let roll = (window.ncols() - regime.factors[0].h()) as u32;
    let s_en = fit.s0.iter().zip(&regime.factors).map(|(s, f)| evolve(s, f, roll)).collect();
    Ok(EstimatorOutcome {
        candidate: ModelCandidate { active, s0: fit.s0, s_en, window_start },
        created,
        switched,
        fit_error: fit.f,
    })
}

/// `v(t_c + l_s) = W⁻¹ e` with every signal rolled `l_s` steps past the
/// window, plus the causal structure implied by `W`.
pub fn mode_generator(
    candidate: &ModelCandidate,
    regimes: &RegimeSet,
    l_s: usize,
    edge_threshold: f64,
) -> Result<(DVector<f64>, CausalEstimate)> {
    let regime = regimes
        .regimes
        .get(candidate.active)
        .ok_or_else(|| Error::IndexOutOfRange(format!("regime {}", candidate.active)))?;
    let d = regime.dim();
    if candidate.s_en.len() != d {
        return Err(Error::DimensionMismatch("latent states do not match the regime".into()));
    }
    let mut e = DVector::zeros(d);
    for i in 0..d {
        let f = &regime.factors[i];
        e[i] = reconstruct(&evolve(&candidate.s_en[i], f, l_s as u32), f)?;
    }
    let forecast = &regime.w_inv * e;
    let causal = identify_causality(&regime.w.0, edge_threshold)?;
    Ok((forecast, causal))
}

/// Deflated subspace-tracking update of the demixing rows with the newest
/// sample. Returns the new rows, energies and per-row projections.
pub fn update_demixing_rows(
    w: &DMatrix<f64>,
    energy: &[f64],
    x: &DVector<f64>,
    mu: f64,
) -> Result<(DMatrix<f64>, Vec<f64>, DVector<f64>)> {
    let d = w.nrows();
    if w.ncols() != d || energy.len() != d || x.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} rows, {} energies, sample of {}",
            d,
            w.ncols(),
            energy.len(),
            x.len()
        )));
    }
    if energy.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::InvalidInput("energies must be non-negative".into()));
    }
    let mut w = w.clone();
    let mut energy = energy.to_vec();
    let mut y = DVector::zeros(d);
    let mut resid = x.clone();
    for i in 0..d {
        let row = w.row(i).transpose();
        let yi = row.dot(&resid);
        y[i] = yi;
        energy[i] = mu * energy[i] + yi * yi;
        if energy[i] == 0.0 {
            continue;
        }
        let err = &resid - &row * yi;
        let new_row = &row + &err * (yi / energy[i]);
        resid -= &new_row * yi;
        w.set_row(i, &new_row.transpose());
    }
    Ok((w, energy, y))
}

/// Track the newest sample: demixing rows first, then one recursive
/// least-squares step per signal. Factors are refreshed lazily on next read.
pub fn regime_updater(
    window: &DMatrix<f64>,
    regime: &mut Regime,
    update: &mut UpdateState,
    cfg: &EngineConfig,
) -> Result<()> {
    let (d, m) = window.shape();
    if d != regime.dim() || m == 0 {
        return Err(Error::DimensionMismatch(format!("window {d}x{m} for a regime of size {}", regime.dim())));
    }
    if !cfg.identity_demixing {
        let x = window.column(m - 1).into_owned();
        let (w, energy, _) = update_demixing_rows(&regime.w.0, &update.energy, &x, cfg.mu)?;
        regime.set_demixing(w)?;
        update.energy = energy;
    }
    let h = regime.factors[0].h();
    if m < h + 1 {
        return Ok(());
    }
    let e = &regime.w.0 * window;
    for i in 0..d {
        let row: Vec<f64> = e.row(i).iter().copied().collect();
        let prev = embed(&row, h, m - 2)?;
        let new = embed(&row, h, m - 1)?;
        rls_step_in_place(&mut update.transitions[i], &prev, &new)?;
        regime.stale[i] = true;
    }
    Ok(())
}

/// What a failed tick must restore.
struct Checkpoint {
    candidate: Option<ModelCandidate>,
    active: Option<(usize, Regime, UpdateState)>,
    n_regimes: usize,
    evicted: Option<DVector<f64>>,
    ticks: usize,
}

/// Single-writer streaming engine over `d`-dimensional samples.
#[derive(Debug, Clone)]
pub struct Engine {
    cfg: EngineConfig,
    d: usize,
    buffer: VecDeque<DVector<f64>>,
    regimes: RegimeSet,
    candidate: Option<ModelCandidate>,
    ticks: usize,
}

impl Engine {
    pub fn new(cfg: EngineConfig, d: usize) -> Result<Self> {
        cfg.validate()?;
        if d == 0 {
            return Err(Error::Config("d must be >= 1".into()));
        }
        Ok(Self { buffer: VecDeque::with_capacity(cfg.n_window + 1), cfg, d, regimes: RegimeSet::default(), candidate: None, ticks: 0 })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn regimes(&self) -> &RegimeSet {
        &self.regimes
    }

    pub fn candidate(&self) -> Option<&ModelCandidate> {
        self.candidate.as_ref()
    }

    /// Samples accepted so far.
    pub fn ticks(&self) -> usize {
        self.ticks
    }

    /// Feed one sample. Returns `None` while the first window fills up.
    /// On error the engine is left exactly as before the call.
    pub fn process_tick(&mut self, x: &[f64]) -> Result<Option<StepOutput>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch(format!("sample of length {} for d={}", x.len(), self.d)));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("component {} of tick {}", k + 1, self.ticks + 1)));
        }
        let checkpoint = Checkpoint {
            candidate: self.candidate.clone(),
            active: self.candidate.as_ref().map(|c| {
                (c.active, self.regimes.regimes[c.active].clone(), self.regimes.update_states[c.active].clone())
            }),
            n_regimes: self.regimes.len(),
            evicted: (self.buffer.len() == self.cfg.n_window).then(|| self.buffer[0].clone()),
            ticks: self.ticks,
        };
        match self.step(x) {
            Ok(out) => Ok(out),
            Err(e) => {
                self.rollback(checkpoint);
                Err(e)
            }
        }
    }

    fn rollback(&mut self, cp: Checkpoint) {
        self.buffer.pop_back();
        if let Some(col) = cp.evicted {
            self.buffer.push_front(col);
        }
        self.regimes.regimes.truncate(cp.n_regimes);
        self.regimes.update_states.truncate(cp.n_regimes);
        if let Some((idx, regime, update)) = cp.active {
            self.regimes.regimes[idx] = regime;
            self.regimes.update_states[idx] = update;
        }
        self.candidate = cp.candidate;
        self.ticks = cp.ticks;
    }

    fn step(&mut self, x: &[f64]) -> Result<Option<StepOutput>> {
        self.buffer.push_back(DVector::from_column_slice(x));
        if self.buffer.len() > self.cfg.n_window {
            self.buffer.pop_front();
        }
        self.ticks += 1;
        if self.buffer.len() < self.cfg.n_window {
            return Ok(None);
        }
        let n = self.cfg.n_window;
        let window = DMatrix::from_fn(self.d, n, |i, j| self.buffer[j][i]);
        let start = self.ticks + 1 - n;

        let est = mode_estimator(&window, &mut self.regimes, self.candidate.as_ref(), start, &self.cfg)?;
        let (forecast, causal) = mode_generator(&est.candidate, &self.regimes, self.cfg.l_s, self.cfg.edge_threshold)?;
        if !est.created {
            let a = est.candidate.active;
            regime_updater(&window, &mut self.regimes.regimes[a], &mut self.regimes.update_states[a], &self.cfg)?;
        }
        let out = StepOutput {
            t: self.ticks,
            forecast: forecast.iter().copied().collect(),
            causal: causal.adjacency,
            digraph: causal.digraph,
            regime_id: est.candidate.active,
            created_new: est.created,
            switched: est.switched,
            fit_error: est.fit_error,
        };
        if out.forecast.iter().any(|v| !v.is_finite()) || !out.fit_error.is_finite() {
            return Err(Error::NonFinite(format!("engine output at tick {}", self.ticks)));
        }
        self.candidate = Some(est.candidate);
        Ok(Some(out))
    }
}

/// Pick `tau_unit` from a calibration prefix: run with an infinite threshold
/// (one regime) and take the `quantile` of the per-unit fit errors, scaled
/// by `margin`.
pub fn calibrate_tau_unit(prefix: &DMatrix<f64>, cfg: &EngineConfig, quantile: f64, margin: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&quantile) || !(margin > 0.0) {
        return Err(Error::Config(format!("calibration quantile {quantile} / margin {margin} out of range")));
    }
    let (d, n) = prefix.shape();
    if n <= cfg.n_window {
        return Err(Error::InvalidInput(format!(
            "calibration prefix of {n} samples needs more than n_window = {}",
            cfg.n_window
        )));
    }
    let mut engine = Engine::new(EngineConfig { tau_unit: f64::INFINITY, ..cfg.clone() }, d)?;
    let unit = (d * cfg.scored_len()) as f64;
    let mut errors = Vec::with_capacity(n);
    for t in 0..n {
        let col: Vec<f64> = prefix.column(t).iter().copied().collect();
        if let Some(out) = engine.process_tick(&col)? {
            errors.push(out.fit_error / unit);
        }
    }
    errors.sort_by(f64::total_cmp);
    let idx = ((errors.len() - 1) as f64 * quantile).round() as usize;
    let tau_unit = errors[idx] * margin;
    if !(tau_unit > 0.0) {
        return Err(Error::Degenerate("calibration prefix is fitted exactly".into()));
    }
    Ok(tau_unit)
}
