//! Mixed canonical-form potentials: the arithmetic of CG propagation.
//!
//! A [`CGPotential`] holds, for every configuration of its discrete
//! variables, a Gaussian canonical form over its continuous variables:
//!
//! ```text
//! φ(x | config) = exp(g + hᵀx − ½ xᵀK x)
//! ```
//!
//! Multiplication and division add and subtract `(g, h, K)`; entering
//! continuous evidence substitutes into the quadratic exactly; integrating
//! continuous variables is a Schur complement; summing discrete variables
//! moment-matches the implied mixture per retained configuration — the
//! "closest Gaussian", which preserves total weight and the first two
//! moments exactly but nothing beyond them.
//!
//! Two numeric conventions, both load-bearing:
//!
//! * Weights stay in log space (`g` is already a log scalar; moment-form
//!   weights are carried as log-weights). A configuration whose log-weight
//!   falls 70 nats below its group's maximum is flagged void — it cannot
//!   influence any reported digit but can poison conditioning.
//! * Any symmetric factorization that fails gets one repair attempt: the
//!   variance floor added to the diagonal. A second failure is a numerical
//!   error, not a silent fudge.
//!
//! Division follows the standard junction-tree convention 0/0 = 0 (void ÷
//! void = void); dividing a live configuration by a void one is undefined
//! and reported as such.

use nalgebra::{DMatrix, DVector};

use crate::error::{EngineError, Result};
use crate::indexing;
use crate::model::{Evidence, NodeId, VARIANCE_FLOOR};

/// Log-weight gap below a group's maximum beyond which a configuration is
/// treated as void (e⁻⁷⁰ ≈ 4·10⁻³¹).
pub const VOID_LOG_GAP: f64 = 70.0;

const LOG_TWO_PI: f64 = 1.837877066409345483560659472811;

/// One Gaussian canonical form `exp(g + hᵀx − ½xᵀKx)`; `void` marks a
/// zero-mass configuration (g/h/K are then meaningless and kept zeroed).
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalForm {
    pub g: f64,
    pub h: DVector<f64>,
    pub k: DMatrix<f64>,
    pub void: bool,
}

impl CanonicalForm {
    pub fn zero(dim: usize) -> Self {
        CanonicalForm {
            g: 0.0,
            h: DVector::zeros(dim),
            k: DMatrix::zeros(dim, dim),
            void: false,
        }
    }

    pub fn void(dim: usize) -> Self {
        CanonicalForm {
            g: 0.0,
            h: DVector::zeros(dim),
            k: DMatrix::zeros(dim, dim),
            void: true,
        }
    }

    /// Canonical form of a scalar weight (possibly zero → void).
    pub fn scalar(weight: f64, dim: usize) -> Self {
        if weight <= 0.0 {
            CanonicalForm::void(dim)
        } else {
            CanonicalForm {
                g: weight.ln(),
                ..CanonicalForm::zero(dim)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }
}

/// Moment form of one configuration: `weight · N(mean, covariance)`.
/// The weight is reported linearly; [`CGPotential`] keeps it in log space
/// internally.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Clique-level potential: a table of canonical forms indexed by the
/// configurations of `discrete`, each over the same `continuous` variables.
/// Variable lists are sorted by node index; tables are row-major
/// (see [`crate::indexing`]). Value-semantic: every operation returns a new
/// potential.
#[derive(Debug, Clone, PartialEq)]
pub struct CGPotential {
    discrete: Vec<NodeId>,
    cards: Vec<usize>,
    continuous: Vec<NodeId>,
    table: Vec<CanonicalForm>,
}

fn check_sorted(vars: &[NodeId], what: &str) -> Result<()> {
    if vars.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EngineError::Argument(format!(
            "{what} variables must be strictly ascending: {vars:?}"
        )));
    }
    Ok(())
}

impl CGPotential {
    /// The multiplicative identity: no variables, weight 1.
    pub fn unit() -> Self {
        CGPotential {
            discrete: vec![],
            cards: vec![],
            continuous: vec![],
            table: vec![CanonicalForm::zero(0)],
        }
    }

    /// Build from parts. `discrete` pairs each variable with its
    /// cardinality; `table` must be row-major over the configurations.
    pub fn new(
        discrete: Vec<(NodeId, usize)>,
        continuous: Vec<NodeId>,
        table: Vec<CanonicalForm>,
    ) -> Result<Self> {
        let vars: Vec<NodeId> = discrete.iter().map(|&(v, _)| v).collect();
        let cards: Vec<usize> = discrete.iter().map(|&(_, c)| c).collect();
        check_sorted(&vars, "discrete")?;
        check_sorted(&continuous, "continuous")?;
        if let Some(&(v, _)) = discrete.iter().find(|&&(v, _)| continuous.contains(&v)) {
            return Err(EngineError::Domain(format!(
                "variable {v} appears as both discrete and continuous"
            )));
        }
        let n = indexing::config_count(&cards);
        if table.len() != n {
            return Err(EngineError::Argument(format!(
                "table has {} entries, domain has {n} configurations",
                table.len()
            )));
        }
        let dim = continuous.len();
        if table.iter().any(|f| f.dim() != dim || f.k.nrows() != dim) {
            return Err(EngineError::Argument(format!(
                "every canonical form must have dimension {dim}"
            )));
        }
        Ok(CGPotential {
            discrete: vars,
            cards,
            continuous,
            table,
        })
    }

    pub fn discrete_vars(&self) -> &[NodeId] {
        &self.discrete
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn continuous_vars(&self) -> &[NodeId] {
        &self.continuous
    }

    pub fn config_count(&self) -> usize {
        self.table.len()
    }

    pub fn form(&self, idx: usize) -> &CanonicalForm {
        &self.table[idx]
    }

    pub fn is_all_void(&self) -> bool {
        self.table.iter().all(|f| f.void)
    }

    // ── Canonical ↔ moment conversion ────────────────────────────────────

    /// Log of the total mass of one configuration,
    /// `ln ∫ exp(g + hᵀx − ½xᵀKx) dx`; requires K positive definite.
    /// `None` for void configurations.
    pub fn log_mass(&self, idx: usize) -> Result<Option<f64>> {
        let f = &self.table[idx];
        if f.void {
            return Ok(None);
        }
        if f.dim() == 0 {
            return Ok(Some(f.g));
        }
        let chol = chol_with_repair(&f.k)?;
        let mu = chol.solve(&f.h);
        let log_det_k = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Some(
            f.g + 0.5 * f.h.dot(&mu) + 0.5 * (f.dim() as f64 * LOG_TWO_PI - log_det_k),
        ))
    }

    /// Moment form of one configuration (`None` when void).
    pub fn moment(&self, idx: usize) -> Result<Option<MomentSummary>> {
        Ok(self.log_moment(idx)?.map(|(lw, mean, covariance)| MomentSummary {
            weight: lw.exp(),
            mean,
            covariance,
        }))
    }

    fn log_moment(&self, idx: usize) -> Result<Option<(f64, DVector<f64>, DMatrix<f64>)>> {
        let f = &self.table[idx];
        if f.void {
            return Ok(None);
        }
        if f.dim() == 0 {
            return Ok(Some((f.g, DVector::zeros(0), DMatrix::zeros(0, 0))));
        }
        let chol = chol_with_repair(&f.k)?;
        let mu = chol.solve(&f.h);
        let sigma = chol.inverse();
        let log_det_k = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let lw = f.g + 0.5 * f.h.dot(&mu) + 0.5 * (f.dim() as f64 * LOG_TWO_PI - log_det_k);
        Ok(Some((lw, mu, symmetrized(sigma))))
    }

    fn form_from_log_moment(lw: f64, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<CanonicalForm> {
        let dim = mean.len();
        if dim == 0 {
            return Ok(CanonicalForm {
                g: lw,
                ..CanonicalForm::zero(0)
            });
        }
        let chol = chol_with_repair(cov)?;
        let k = symmetrized(chol.inverse());
        let h = &k * mean;
        let log_det_k = -2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let g = lw - 0.5 * h.dot(mean) - 0.5 * (dim as f64 * LOG_TWO_PI - log_det_k);
        Ok(CanonicalForm {
            g,
            h,
            k,
            void: false,
        })
    }

    /// Total log mass over all configurations (the evidence likelihood when
    /// the potential is a calibrated root). `None` if everything is void.
    pub fn total_log_mass(&self) -> Result<Option<f64>> {
        let mut logs = Vec::with_capacity(self.table.len());
        for i in 0..self.table.len() {
            if let Some(lm) = self.log_mass(i)? {
                logs.push(lm);
            }
        }
        Ok(log_sum_exp(&logs))
    }

    // ── extend ───────────────────────────────────────────────────────────

    /// Re-express over a superset domain: identical as a function of the
    /// original variables, constant in the new ones (zero h/K rows, copied
    /// tables).
    pub fn extend(
        &self,
        discrete: &[(NodeId, usize)],
        continuous: &[NodeId],
    ) -> Result<CGPotential> {
        let new_d: Vec<NodeId> = discrete.iter().map(|&(v, _)| v).collect();
        let new_cards: Vec<usize> = discrete.iter().map(|&(_, c)| c).collect();
        check_sorted(&new_d, "discrete")?;
        check_sorted(continuous, "continuous")?;
        for &(v, _) in discrete {
            if continuous.contains(&v) {
                return Err(EngineError::Domain(format!(
                    "variable {v} appears as both discrete and continuous"
                )));
            }
        }
        for &v in &self.continuous {
            if new_d.iter().any(|&d| d == v) {
                return Err(EngineError::Domain(format!(
                    "continuous variable {v} extended as discrete"
                )));
            }
        }
        for (i, &v) in self.discrete.iter().enumerate() {
            match new_d.iter().position(|&d| d == v) {
                Some(j) if new_cards[j] == self.cards[i] => {}
                Some(j) => {
                    return Err(EngineError::Argument(format!(
                        "variable {v} cardinality changed {} → {}",
                        self.cards[i], new_cards[j]
                    )))
                }
                None => {
                    return Err(EngineError::Argument(format!(
                        "extension drops discrete variable {v}"
                    )))
                }
            }
        }
        let cont_pos: Vec<usize> = self
            .continuous
            .iter()
            .map(|&v| {
                continuous
                    .iter()
                    .position(|&c| c == v)
                    .ok_or_else(|| EngineError::Argument(format!("extension drops continuous variable {v}")))
            })
            .collect::<Result<_>>()?;

        let old_d_pos: Vec<usize> = self
            .discrete
            .iter()
            .map(|&v| new_d.iter().position(|&d| d == v).unwrap())
            .collect();
        let dim = continuous.len();
        let table = indexing::configs(&new_cards)
            .map(|cfg| {
                let old_cfg: Vec<usize> = old_d_pos.iter().map(|&p| cfg[p]).collect();
                let f = &self.table[indexing::index_of(&self.cards, &old_cfg)];
                if f.void {
                    return CanonicalForm::void(dim);
                }
                let mut h = DVector::zeros(dim);
                let mut k = DMatrix::zeros(dim, dim);
                for (i, &pi) in cont_pos.iter().enumerate() {
                    h[pi] = f.h[i];
                    for (j, &pj) in cont_pos.iter().enumerate() {
                        k[(pi, pj)] = f.k[(i, j)];
                    }
                }
                CanonicalForm {
                    g: f.g,
                    h,
                    k,
                    void: false,
                }
            })
            .collect();
        CGPotential::new(discrete.to_vec(), continuous.to_vec(), table)
    }

    /// Union domain of two potentials, as (discrete with cards, continuous).
    fn union_domain(a: &CGPotential, b: &CGPotential) -> Result<(Vec<(NodeId, usize)>, Vec<NodeId>)> {
        let mut discrete: Vec<(NodeId, usize)> = a
            .discrete
            .iter()
            .zip(&a.cards)
            .map(|(&v, &c)| (v, c))
            .collect();
        for (&v, &c) in b.discrete.iter().zip(&b.cards) {
            match discrete.iter().find(|&&(d, _)| d == v) {
                Some(&(_, c0)) if c0 == c => {}
                Some(_) => {
                    return Err(EngineError::Argument(format!(
                        "variable {v} has inconsistent cardinality"
                    )))
                }
                None => discrete.push((v, c)),
            }
        }
        discrete.sort_by_key(|&(v, _)| v);
        let mut continuous: Vec<NodeId> = a.continuous.clone();
        for &v in &b.continuous {
            if !continuous.contains(&v) {
                continuous.push(v);
            }
        }
        continuous.sort();
        for &(v, _) in &discrete {
            if continuous.contains(&v) {
                return Err(EngineError::Domain(format!(
                    "variable {v} is discrete in one operand and continuous in the other"
                )));
            }
        }
        Ok((discrete, continuous))
    }

    // ── multiply / divide ────────────────────────────────────────────────

    pub fn multiply(a: &CGPotential, b: &CGPotential) -> Result<CGPotential> {
        let (d, c) = Self::union_domain(a, b)?;
        let ea = a.extend(&d, &c)?;
        let eb = b.extend(&d, &c)?;
        let dim = c.len();
        let table = ea
            .table
            .iter()
            .zip(&eb.table)
            .map(|(fa, fb)| {
                if fa.void || fb.void {
                    CanonicalForm::void(dim)
                } else {
                    CanonicalForm {
                        g: fa.g + fb.g,
                        h: &fa.h + &fb.h,
                        k: symmetrized(&fa.k + &fb.k),
                        void: false,
                    }
                }
            })
            .collect();
        CGPotential::new(d, c, table)
    }

    /// `a / b`. Follows 0/0 = 0; a live numerator over a void denominator
    /// is undefined.
    pub fn divide(a: &CGPotential, b: &CGPotential) -> Result<CGPotential> {
        let (d, c) = Self::union_domain(a, b)?;
        let ea = a.extend(&d, &c)?;
        let eb = b.extend(&d, &c)?;
        let dim = c.len();
        let table = ea
            .table
            .iter()
            .zip(&eb.table)
            .map(|(fa, fb)| {
                if fa.void {
                    Ok(CanonicalForm::void(dim))
                } else if fb.void {
                    Err(EngineError::UndefinedDivision(
                        "non-void configuration divided by void".into(),
                    ))
                } else {
                    Ok(CanonicalForm {
                        g: fa.g - fb.g,
                        h: &fa.h - &fb.h,
                        k: symmetrized(&fa.k - &fb.k),
                        void: false,
                    })
                }
            })
            .collect::<Result<_>>()?;
        CGPotential::new(d, c, table)
    }

    // ── evidence ─────────────────────────────────────────────────────────

    /// Enter evidence: discrete assignments slice the table (the variable
    /// leaves the domain); continuous observations substitute exactly, the
    /// density folding into `g`. Every evidence variable must be present.
    pub fn reduce_evidence(&self, e: &Evidence) -> Result<CGPotential> {
        let mut out = self.clone();
        for (&v, &s) in &e.states {
            let pos = out
                .discrete
                .iter()
                .position(|&d| d == v)
                .ok_or_else(|| EngineError::Argument(format!("evidence variable {v} not in potential")))?;
            if s >= out.cards[pos] {
                return Err(EngineError::Argument(format!(
                    "state {s} out of range for variable {v} (cardinality {})",
                    out.cards[pos]
                )));
            }
            let mut d = out.discrete.clone();
            let mut cards = out.cards.clone();
            d.remove(pos);
            let card = cards.remove(pos);
            let table = indexing::configs(&cards)
                .map(|cfg| {
                    let mut full = cfg.clone();
                    full.insert(pos, s);
                    let mut full_cards = cards.clone();
                    full_cards.insert(pos, card);
                    out.table[indexing::index_of(&full_cards, &full)].clone()
                })
                .collect();
            out = CGPotential {
                discrete: d,
                cards,
                continuous: out.continuous.clone(),
                table,
            };
        }
        for (&v, &x) in &e.values {
            let q = out
                .continuous
                .iter()
                .position(|&c| c == v)
                .ok_or_else(|| EngineError::Argument(format!("evidence variable {v} not in potential")))?;
            let keep: Vec<usize> = (0..out.continuous.len()).filter(|&i| i != q).collect();
            let mut continuous = out.continuous.clone();
            continuous.remove(q);
            let dim = keep.len();
            let table = out
                .table
                .iter()
                .map(|f| {
                    if f.void {
                        return CanonicalForm::void(dim);
                    }
                    let g = f.g + f.h[q] * x - 0.5 * f.k[(q, q)] * x * x;
                    let mut h = DVector::zeros(dim);
                    let mut k = DMatrix::zeros(dim, dim);
                    for (i, &pi) in keep.iter().enumerate() {
                        h[i] = f.h[pi] - f.k[(pi, q)] * x;
                        for (j, &pj) in keep.iter().enumerate() {
                            k[(i, j)] = f.k[(pi, pj)];
                        }
                    }
                    CanonicalForm {
                        g,
                        h,
                        k,
                        void: false,
                    }
                })
                .collect();
            out = CGPotential {
                discrete: out.discrete.clone(),
                cards: out.cards.clone(),
                continuous,
                table,
            };
        }
        Ok(out)
    }

    // ── marginalization ──────────────────────────────────────────────────

    /// Integrate continuous variables out exactly (strong marginal).
    pub fn marginalize_continuous(&self, vars: &[NodeId]) -> Result<CGPotential> {
        if vars.is_empty() {
            return Ok(self.clone());
        }
        let drop: Vec<usize> = vars
            .iter()
            .map(|&v| {
                self.continuous
                    .iter()
                    .position(|&c| c == v)
                    .ok_or_else(|| EngineError::Argument(format!("{v} is not a continuous variable here")))
            })
            .collect::<Result<_>>()?;
        let keep: Vec<usize> = (0..self.continuous.len()).filter(|i| !drop.contains(i)).collect();
        let continuous: Vec<NodeId> = keep.iter().map(|&i| self.continuous[i]).collect();
        let p = drop.len();
        let dim = keep.len();
        let table = self
            .table
            .iter()
            .map(|f| {
                if f.void {
                    return Ok(CanonicalForm::void(dim));
                }
                let k22 = f.k.select_rows(drop.iter()).select_columns(drop.iter());
                let k12 = f.k.select_rows(keep.iter()).select_columns(drop.iter());
                let k11 = f.k.select_rows(keep.iter()).select_columns(keep.iter());
                let h1 = f.h.select_rows(keep.iter());
                let h2 = f.h.select_rows(drop.iter());
                let chol = chol_with_repair(&k22)?;
                let k22_inv_h2 = chol.solve(&h2);
                let log_det_k22 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
                let g = f.g + 0.5 * (p as f64 * LOG_TWO_PI - log_det_k22 + h2.dot(&k22_inv_h2));
                let h = &h1 - &k12 * &k22_inv_h2;
                let k = symmetrized(&k11 - &k12 * chol.solve(&k12.transpose()));
                Ok(CanonicalForm {
                    g,
                    h,
                    k,
                    void: false,
                })
            })
            .collect::<Result<_>>()?;
        Ok(CGPotential {
            discrete: self.discrete.clone(),
            cards: self.cards.clone(),
            continuous,
            table,
        })
    }

    /// Sum discrete variables out, replacing each retained configuration's
    /// sub-mixture by its moment-matched Gaussian (weak marginal). Exact for
    /// the total weight and the first two moments; void members are skipped
    /// and all-void groups stay void.
    pub fn marginalize_discrete_weak(&self, vars: &[NodeId]) -> Result<CGPotential> {
        if vars.is_empty() {
            return Ok(self.clone());
        }
        for &v in vars {
            if !self.discrete.contains(&v) {
                return Err(EngineError::Argument(format!(
                    "{v} is not a discrete variable here"
                )));
            }
        }
        let keep_pos: Vec<usize> = (0..self.discrete.len())
            .filter(|&i| !vars.contains(&self.discrete[i]))
            .collect();
        let keep_vars: Vec<NodeId> = keep_pos.iter().map(|&i| self.discrete[i]).collect();
        let keep_cards: Vec<usize> = keep_pos.iter().map(|&i| self.cards[i]).collect();
        let dim = self.continuous.len();

        // Bucket the members of each retained configuration.
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); indexing::config_count(&keep_cards)];
        for (idx, cfg) in indexing::configs(&self.cards).enumerate() {
            let key: Vec<usize> = keep_pos.iter().map(|&i| cfg[i]).collect();
            groups[indexing::index_of(&keep_cards, &key)].push(idx);
        }

        let table = groups
            .iter()
            .map(|members| {
                let mut parts: Vec<(f64, DVector<f64>, DMatrix<f64>)> = Vec::new();
                for &m in members {
                    if let Some(p) = self.log_moment(m)? {
                        parts.push(p);
                    }
                }
                let Some(max_lw) = parts
                    .iter()
                    .map(|p| p.0)
                    .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a: f64| a.max(x))))
                else {
                    return Ok(CanonicalForm::void(dim));
                };
                parts.retain(|p| p.0 >= max_lw - VOID_LOG_GAP);
                let lw_total = log_sum_exp(&parts.iter().map(|p| p.0).collect::<Vec<_>>()).unwrap();
                if dim == 0 {
                    return Ok(CanonicalForm {
                        g: lw_total,
                        ..CanonicalForm::zero(0)
                    });
                }
                let mut mean = DVector::zeros(dim);
                for p in &parts {
                    mean += (p.0 - lw_total).exp() * &p.1;
                }
                let mut cov = DMatrix::zeros(dim, dim);
                for p in &parts {
                    let d = &p.1 - &mean;
                    cov += (p.0 - lw_total).exp() * (&p.2 + &d * d.transpose());
                }
                Self::form_from_log_moment(lw_total, &mean, &symmetrized(cov))
            })
            .collect::<Result<_>>()?;
        Ok(CGPotential {
            discrete: keep_vars,
            cards: keep_cards,
            continuous: self.continuous.clone(),
            table,
        })
    }

    /// Debug view for test inspection; lossy (moment form where possible).
    pub fn to_debug_json(&self) -> serde_json::Value {
        let configs: Vec<serde_json::Value> = (0..self.table.len())
            .map(|i| {
                let f = &self.table[i];
                if f.void {
                    return serde_json::json!({ "config": i, "void": true });
                }
                serde_json::json!({
                    "config": i,
                    "g": f.g,
                    "h": f.h.as_slice(),
                    "k": f.k.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "discrete": self.discrete.iter().map(|v| v.0).collect::<Vec<_>>(),
            "cards": self.cards,
            "continuous": self.continuous.iter().map(|v| v.0).collect::<Vec<_>>(),
            "table": configs,
        })
    }
}

/// Cholesky with the single permitted floor repair.
fn chol_with_repair(m: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = nalgebra::Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let repaired = m + DMatrix::identity(m.nrows(), m.ncols()) * VARIANCE_FLOOR;
    nalgebra::Cholesky::new(repaired).ok_or_else(|| {
        EngineError::Numerical(format!(
            "matrix not positive definite after floor repair ({}×{})",
            m.nrows(),
            m.ncols()
        ))
    })
}

fn symmetrized(m: DMatrix<f64>) -> DMatrix<f64> {
    let mt = m.transpose();
    (m + mt) * 0.5
}

/// `ln Σ exp(xs)`; `None` for an empty slice.
pub(crate) fn log_sum_exp(xs: &[f64]) -> Option<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if xs.is_empty() || max == f64::NEG_INFINITY {
        return None;
    }
    Some(max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln())
}

/// Canonical form of a CLG conditional `x | y ~ N(a + bᵀy, σ²)` embedded in
/// a domain of `dim` continuous slots, with the child at `x_pos` and the
/// parents at `y_pos`.
pub fn clg_form(
    dim: usize,
    x_pos: usize,
    y_pos: &[usize],
    intercept: f64,
    coeffs: &[f64],
    variance: f64,
) -> CanonicalForm {
    let var = variance.max(VARIANCE_FLOOR);
    let mut h = DVector::zeros(dim);
    let mut k = DMatrix::zeros(dim, dim);
    h[x_pos] = intercept / var;
    k[(x_pos, x_pos)] = 1.0 / var;
    for (i, &yi) in y_pos.iter().enumerate() {
        h[yi] = -intercept * coeffs[i] / var;
        k[(x_pos, yi)] = -coeffs[i] / var;
        k[(yi, x_pos)] = -coeffs[i] / var;
        for (j, &yj) in y_pos.iter().enumerate() {
            k[(yi, yj)] = coeffs[i] * coeffs[j] / var;
        }
    }
    CanonicalForm {
        g: -intercept * intercept / (2.0 * var) - 0.5 * (LOG_TWO_PI + var.ln()),
        h,
        k,
        void: false,
    }
}
