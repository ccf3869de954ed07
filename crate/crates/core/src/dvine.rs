//! D-vine copula with the response as the first variable.
//!
//! Variables are indexed by their position in `order` (0 is the response).
//! Tree `t` (1-based) holds `d + 1 - t` pair-copulas; edge `e` couples
//! variables `e` and `e + t` given the variables strictly between them, with
//! variable `e` as the first copula argument.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::bicop::{select_family_with, CopulaFamily, FittedCopula, SelectOptions};
use crate::error::{Error, Result};
use crate::rng::UniformStream;
use crate::scalar::{clamp_unit, lit, Real};

/// One adopted step of forward selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TraceStep<T> {
    pub candidate: String,
    /// Position of the inserted covariate in `order` (1 = next to the response).
    pub position: usize,
    pub conditional_loglik: T,
    pub aic: T,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SelectionTrace<T> {
    pub steps: Vec<TraceStep<T>>,
    /// No covariate was adopted; the model is the response marginal alone.
    pub marginal_only: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", try_from = "DVineRepr<T>")]
pub struct DVineModel<T: Real> {
    order: Vec<String>,
    pairs: Vec<Vec<FittedCopula<T>>>,
    trace: SelectionTrace<T>,
    conditional_loglik: T,
    n: usize,
}

#[derive(Deserialize)]
#[serde(bound = "T: Real")]
struct DVineRepr<T: Real> {
    order: Vec<String>,
    pairs: Vec<Vec<FittedCopula<T>>>,
    #[serde(default)]
    trace: SelectionTrace<T>,
    conditional_loglik: T,
    n: usize,
}

impl<T: Real> TryFrom<DVineRepr<T>> for DVineModel<T> {
    type Error = Error;

    fn try_from(r: DVineRepr<T>) -> Result<Self> {
        let mut m = DVineModel::new(r.order, r.pairs)?;
        m.trace = r.trace;
        m.conditional_loglik = r.conditional_loglik;
        m.n = r.n;
        Ok(m)
    }
}

impl<T: Real> DVineModel<T> {
    /// Builds a model from labels (response first) and the triangular pair
    /// array `pairs[t - 1][e]`.
    pub fn new(order: Vec<String>, pairs: Vec<Vec<FittedCopula<T>>>) -> Result<Self> {
        if order.is_empty() {
            return Err(Error::Input("a D-vine needs at least the response".into()));
        }
        for (i, l) in order.iter().enumerate() {
            if order[..i].contains(l) {
                return Err(Error::Input(format!("duplicate label `{l}` in vine order")));
            }
        }
        let d = order.len() - 1;
        if pairs.len() != d {
            return Err(Error::Input(format!(
                "{} variables need {d} trees, got {}",
                d + 1,
                pairs.len()
            )));
        }
        for (t, tree) in pairs.iter().enumerate() {
            if tree.len() != d - t {
                return Err(Error::Input(format!(
                    "tree {} needs {} pair-copulas, got {}",
                    t + 1,
                    d - t,
                    tree.len()
                )));
            }
        }
        Ok(Self {
            order,
            pairs,
            trace: SelectionTrace::default(),
            conditional_loglik: T::zero(),
            n: 0,
        })
    }

    /// A model whose pairs are all Independence.
    pub fn independence(order: Vec<String>) -> Result<Self> {
        let d = order.len().saturating_sub(1);
        let pairs = (1..=d)
            .map(|t| vec![FittedCopula::independence(0); d + 1 - t])
            .collect();
        Self::new(order, pairs)
    }

    pub fn order(&self) -> &[String] {
        &self.order
    }

    pub fn response(&self) -> &str {
        &self.order[0]
    }

    pub fn covariates(&self) -> &[String] {
        &self.order[1..]
    }

    pub fn n_covariates(&self) -> usize {
        self.order.len() - 1
    }

    pub fn pairs(&self) -> &[Vec<FittedCopula<T>>] {
        &self.pairs
    }

    /// Pair-copula of tree `tree` (1-based), edge `edge` (0-based).
    pub fn pair(&self, tree: usize, edge: usize) -> &FittedCopula<T> {
        &self.pairs[tree - 1][edge]
    }

    pub fn trace(&self) -> &SelectionTrace<T> {
        &self.trace
    }

    pub fn conditional_loglik(&self) -> T {
        self.conditional_loglik
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Labels of the pair-copulas linking the response to each covariate.
    pub fn families_on_path(&self) -> Vec<String> {
        self.pairs.iter().map(|tree| tree[0].copula.label()).collect()
    }

    /// Number of parameters on the response path.
    pub fn path_params(&self) -> usize {
        self.pairs
            .iter()
            .map(|tree| tree[0].copula.family().n_params())
            .sum()
    }

    fn check_row(&self, row: &[T], expected: usize) -> Result<()> {
        if row.len() != expected {
            return Err(Error::Input(format!(
                "expected {expected} values for vine {:?}, got {}",
                self.order,
                row.len()
            )));
        }
        check_probs(row)
    }

    /// Log-likelihood of the full vine density summed over rows, each row
    /// ordered as [`order`](Self::order).
    pub fn loglik(&self, rows: &[Vec<T>]) -> Result<T> {
        let mut total = T::zero();
        for row in rows {
            self.check_row(row, self.order.len())?;
            let mut st = ConditioningState::new(0);
            for &x in row {
                total = total + st.absorb_inner(self, clamp_unit(x), Density::Joint);
            }
        }
        Ok(total)
    }

    /// Log-likelihood of the response given the covariates, i.e. only the
    /// pair-copulas on the response path.
    pub fn conditional_loglik_of(&self, rows: &[Vec<T>]) -> Result<T> {
        let mut total = T::zero();
        for row in rows {
            self.check_row(row, self.order.len())?;
            let mut st = ConditioningState::new(0);
            for &x in row {
                total = total + st.absorb_inner(self, clamp_unit(x), Density::ResponsePath);
            }
        }
        Ok(total)
    }

    /// `F(u_t | u_1, ..., u_{t-1})` for t = 1..d: the conditioning values fed
    /// to the response-path pair-copulas.
    pub fn covariate_conditionals(&self, u: &[T]) -> Result<Vec<T>> {
        self.check_row(u, self.n_covariates())?;
        let mut st = ConditioningState::new(1);
        Ok(u
            .iter()
            .map(|&x| {
                st.absorb(self, clamp_unit(x));
                st.bwd[st.bwd.len() - 1]
            })
            .collect())
    }

    /// `C(v | u_1, ..., u_d)`.
    pub fn conditional_cdf(&self, v: T, u: &[T]) -> Result<T> {
        check_probs(&[v])?;
        let w = self.covariate_conditionals(u)?;
        Ok(self.cdf_given(clamp_unit(v), &w))
    }

    fn cdf_given(&self, v: T, w: &[T]) -> T {
        let mut x = v;
        for (tree, &wt) in self.pairs.iter().zip(w) {
            x = tree[0].copula.h1(x, wt);
        }
        x
    }

    /// Conditional quantile `q_alpha(u_1, ..., u_d)` by chained inverse
    /// h-functions, top tree first.
    pub fn conditional_quantile(&self, alpha: T, u: &[T]) -> Result<T> {
        Ok(self.conditional_quantiles(&[alpha], u)?[0])
    }

    /// Quantiles for several levels at one covariate point.
    pub fn conditional_quantiles(&self, alphas: &[T], u: &[T]) -> Result<Vec<T>> {
        check_probs(alphas)?;
        let w = self.covariate_conditionals(u)?;
        alphas
            .iter()
            .map(|&a| self.quantile_given(clamp_unit(a), &w))
            .collect()
    }

    fn quantile_given(&self, alpha: T, w: &[T]) -> Result<T> {
        let mut x = alpha;
        for (tree, &wt) in self.pairs.iter().zip(w).rev() {
            x = tree[0].copula.hinv1(x, wt)?;
        }
        Ok(x)
    }

    /// `n` draws from the vine copula by inverse Rosenblatt transform. Rows
    /// follow [`order`](Self::order).
    pub fn simulate(&self, n: usize, seed: u64) -> Result<Vec<Vec<T>>> {
        if n == 0 {
            return Err(Error::Input("simulation size must be at least 1".into()));
        }
        let mut rng = UniformStream::new(seed);
        let dim = self.order.len();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut st = ConditioningState::new(0);
            let mut row = Vec::with_capacity(dim);
            for k in 0..dim {
                let mut p: T = lit(rng.next_open01());
                for t in (1..=k).rev() {
                    p = self.pairs[t - 1][k - t].copula.hinv2(p, st.fwd[t - 1])?;
                }
                st.absorb(self, p);
                row.push(p);
            }
            out.push(row);
        }
        Ok(out)
    }
}

fn check_probs<T: Real>(xs: &[T]) -> Result<()> {
    for &x in xs {
        if !(x >= T::zero() && x <= T::one()) {
            return Err(Error::Input(format!(
                "copula-scale value {x} outside [0, 1]"
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Density {
    None,
    Joint,
    ResponsePath,
}

/// Running h-function chains of the D-vine recursion for one observation.
///
/// After absorbing variables `s..=k`, `forward()[t]` holds
/// `F(x_{k-t} | x_{k-t+1}, ..., x_k)` and `backward()[t]` holds
/// `F(x_k | x_{k-t}, ..., x_{k-1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningState<T> {
    start: usize,
    fwd: Vec<T>,
    bwd: Vec<T>,
}

impl<T: Real> ConditioningState<T> {
    /// Empty state whose first absorbed variable has vine index `start`.
    pub fn new(start: usize) -> Self {
        Self {
            start,
            fwd: Vec::new(),
            bwd: Vec::new(),
        }
    }

    pub fn absorbed(&self) -> usize {
        self.fwd.len()
    }

    pub fn forward(&self) -> &[T] {
        &self.fwd
    }

    pub fn backward(&self) -> &[T] {
        &self.bwd
    }

    /// Adds the next variable's copula-scale value.
    pub fn absorb(&mut self, model: &DVineModel<T>, x: T) {
        self.absorb_inner(model, x, Density::None);
    }

    /// Adds the next variable and returns the log-density of the
    /// pair-copulas it completes.
    pub fn absorb_with_density(&mut self, model: &DVineModel<T>, x: T) -> T {
        self.absorb_inner(model, x, Density::Joint)
    }

    fn absorb_inner(&mut self, model: &DVineModel<T>, x: T, density: Density) -> T {
        let m = self.start + self.fwd.len();
        let mut new_fwd = Vec::with_capacity(self.fwd.len() + 1);
        let mut new_bwd = Vec::with_capacity(self.fwd.len() + 1);
        new_fwd.push(x);
        new_bwd.push(x);
        let mut ld = T::zero();
        for t in 1..=self.fwd.len() {
            let e = m - t;
            let c = &model.pairs[t - 1][e].copula;
            let a = self.fwd[t - 1];
            let b = new_bwd[t - 1];
            let counted = match density {
                Density::None => false,
                Density::Joint => true,
                Density::ResponsePath => e == 0,
            };
            if counted {
                ld = ld + c.log_pdf(a, b);
            }
            new_fwd.push(c.h1(a, b));
            new_bwd.push(c.h2(a, b));
        }
        self.fwd = new_fwd;
        self.bwd = new_bwd;
        ld
    }
}

/// Options for [`forward_select`] and [`fit_order`].
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionConfig {
    pub families: Vec<CopulaFamily>,
    pub select: SelectOptions,
    /// Candidate labels adopted unconditionally before any other candidate,
    /// ordered among themselves by selection gain.
    pub forced: Vec<String>,
    pub max_covariates: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            families: CopulaFamily::ALL.to_vec(),
            select: SelectOptions::default(),
            forced: Vec::new(),
            max_covariates: None,
        }
    }
}

struct Node<T: Real> {
    fit: FittedCopula<T>,
    /// `F(first | rest)` for the node's variable sequence.
    first_given_rest: Vec<T>,
    /// `F(last | rest)`.
    last_given_rest: Vec<T>,
}

/// Pair-copula fits keyed by contiguous variable sequence, shared across
/// every order tried during selection.
struct PairCache<'a, T: Real> {
    data: Vec<&'a [T]>,
    config: &'a SelectionConfig,
    memo: HashMap<Vec<usize>, Node<T>>,
}

impl<'a, T: Real> PairCache<'a, T> {
    fn first_arg(&self, s: &[usize]) -> &[T] {
        if s.len() == 1 {
            self.data[s[0]]
        } else {
            &self.memo[s].first_given_rest
        }
    }

    fn last_arg(&self, s: &[usize]) -> &[T] {
        if s.len() == 1 {
            self.data[s[0]]
        } else {
            &self.memo[s].last_given_rest
        }
    }

    fn ensure(&mut self, s: &[usize]) -> Result<()> {
        if s.len() < 2 || self.memo.contains_key(s) {
            return Ok(());
        }
        let k = s.len();
        self.ensure(&s[..k - 1])?;
        self.ensure(&s[1..])?;
        let a = self.first_arg(&s[..k - 1]);
        let b = self.last_arg(&s[1..]);
        let fit = select_family_with(a, b, &self.config.families, &self.config.select)?;
        let c = fit.copula;
        let first_given_rest = a.iter().zip(b).map(|(&x, &y)| c.h1(x, y)).collect();
        let last_given_rest = a.iter().zip(b).map(|(&x, &y)| c.h2(x, y)).collect();
        self.memo.insert(
            s.to_vec(),
            Node {
                fit,
                first_given_rest,
                last_given_rest,
            },
        );
        Ok(())
    }

    /// Conditional log-likelihood and response-path parameter count.
    fn path_score(&mut self, order: &[usize]) -> Result<(T, usize)> {
        let mut ll = T::zero();
        let mut k = 0;
        for t in 1..order.len() {
            self.ensure(&order[..=t])?;
            let f = &self.memo[&order[..=t]].fit;
            ll = ll + f.loglik;
            k += f.copula.family().n_params();
        }
        Ok((ll, k))
    }

    fn build(&mut self, order: &[usize], labels: &[String]) -> Result<DVineModel<T>> {
        let d = order.len() - 1;
        let mut pairs = Vec::with_capacity(d);
        for t in 1..=d {
            let mut tree = Vec::with_capacity(d + 1 - t);
            for e in 0..=d - t {
                let s = &order[e..=e + t];
                self.ensure(s)?;
                tree.push(self.memo[s].fit);
            }
            pairs.push(tree);
        }
        let names = order.iter().map(|&i| labels[i].clone()).collect();
        let mut model = DVineModel::new(names, pairs)?;
        model.conditional_loglik = self.path_score(order)?.0;
        model.n = self.data[0].len();
        Ok(model)
    }
}

fn aic<T: Real>(ll: T, k: usize) -> T {
    lit::<T>(-2.0) * ll + lit((2 * k) as f64)
}

fn check_columns<T: Real>(response: (&str, &[T]), candidates: &[(&str, &[T])]) -> Result<Vec<String>> {
    let n = response.1.len();
    if n < 10 {
        return Err(Error::Input(format!(
            "vine fitting needs at least 10 rows, got {n}"
        )));
    }
    let mut labels = vec![response.0.to_string()];
    for (l, col) in candidates {
        if col.len() != n {
            return Err(Error::Input(format!(
                "column `{l}` has {} rows, response has {n}",
                col.len()
            )));
        }
        if labels.iter().any(|x| x == l) {
            return Err(Error::Input(format!("duplicate label `{l}`")));
        }
        labels.push(l.to_string());
    }
    for (l, col) in std::iter::once(&response).chain(candidates) {
        if col.iter().any(|&x| !(x > T::zero() && x < T::one())) {
            return Err(Error::Input(format!(
                "column `{l}` has values outside (0, 1)"
            )));
        }
    }
    Ok(labels)
}

/// Greedy forward covariate selection for the response.
///
/// Each step tries every unused candidate at every insertion position,
/// fitting new pair-copulas by AIC, and scores the resulting order by the
/// conditional log-likelihood penalized with the response-path parameter
/// count. The best step is adopted when it lowers that AIC without lowering
/// the conditional log-likelihood; forced candidates are always adopted
/// first.
pub fn forward_select<T: Real>(
    response: (&str, &[T]),
    candidates: &[(&str, &[T])],
    config: &SelectionConfig,
) -> Result<DVineModel<T>> {
    if candidates.is_empty() {
        return Err(Error::Input("forward selection needs at least one candidate".into()));
    }
    let labels = check_columns(response, candidates)?;
    for f in &config.forced {
        if !labels[1..].contains(f) {
            return Err(Error::Input(format!("forced covariate `{f}` is not a candidate")));
        }
    }
    let mut cache = PairCache {
        data: std::iter::once(response.1)
            .chain(candidates.iter().map(|c| c.1))
            .collect(),
        config,
        memo: HashMap::new(),
    };
    let is_forced = |i: usize| config.forced.contains(&labels[i]);
    let cap = config.max_covariates.unwrap_or(candidates.len());

    let mut order = vec![0usize];
    let mut cur_ll = T::zero();
    let mut cur_aic = T::zero();
    let mut steps = Vec::new();
    while order.len() - 1 < cap {
        let unused: Vec<usize> = (1..labels.len()).filter(|i| !order.contains(i)).collect();
        let forced_left: Vec<usize> = unused.iter().copied().filter(|&i| is_forced(i)).collect();
        let forced_phase = !forced_left.is_empty();
        let pool = if forced_phase { forced_left } else { unused };
        if pool.is_empty() {
            break;
        }
        let mut best: Option<(usize, usize, T, T)> = None;
        for &cand in &pool {
            for pos in 1..=order.len() {
                let mut trial = order.clone();
                trial.insert(pos, cand);
                let (ll, k) = cache.path_score(&trial)?;
                let a = aic(ll, k);
                if best.is_none_or(|b| a < b.3) {
                    best = Some((cand, pos, ll, a));
                }
            }
        }
        let Some((cand, pos, ll, a)) = best else { break };
        if !forced_phase && !(a < cur_aic && ll >= cur_ll) {
            break;
        }
        order.insert(pos, cand);
        cur_ll = ll;
        cur_aic = a;
        steps.push(TraceStep {
            candidate: labels[cand].clone(),
            position: pos,
            conditional_loglik: ll,
            aic: a,
        });
    }
    let mut model = cache.build(&order, &labels)?;
    model.trace = SelectionTrace {
        marginal_only: steps.is_empty(),
        steps,
    };
    Ok(model)
}

/// Fits every pair-copula of the D-vine with the given fixed order
/// (response first), choosing each family by AIC.
pub fn fit_order<T: Real>(
    response: (&str, &[T]),
    covariates: &[(&str, &[T])],
    config: &SelectionConfig,
) -> Result<DVineModel<T>> {
    let labels = check_columns(response, covariates)?;
    let mut cache = PairCache {
        data: std::iter::once(response.1)
            .chain(covariates.iter().map(|c| c.1))
            .collect(),
        config,
        memo: HashMap::new(),
    };
    let order: Vec<usize> = (0..labels.len()).collect();
    let mut model = cache.build(&order, &labels)?;
    model.trace.marginal_only = covariates.is_empty();
    Ok(model)
}
